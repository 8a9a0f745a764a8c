fn main() {
    let code = hvcpcb::cli::run(std::env::args_os());
    std::process::exit(code as i32);
}
