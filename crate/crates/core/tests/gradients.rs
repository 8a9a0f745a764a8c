//! Reverse-mode gradients against central finite differences, and the
//! convolution / dense kernels against nested-loop oracles.

use hvcpcb::network::{build_model, hvc_head, Head, HvcActivation, ModelConfig};
use hvcpcb::tensor::{Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{assert_fd, contract, fd_errors, random, TOL};

#[test]
fn elementwise_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 4], &mut rng);
    assert_fd("add", &[a.clone(), b.clone()], &|t, v| {
        let o = t.add(v[0], v[1]).unwrap();
        contract(t, o, 10)
    });
    assert_fd("hadamard", &[a.clone(), b.clone()], &|t, v| {
        let o = t.hadamard(v[0], v[1]).unwrap();
        contract(t, o, 11)
    });
    assert_fd("scale", &[a.clone()], &|t, v| {
        let o = t.scale(v[0], -2.5);
        contract(t, o, 12)
    });
    assert_fd("relu", &[a.clone()], &|t, v| {
        let o = t.relu(v[0]);
        contract(t, o, 13)
    });
    assert_fd("sigmoid", &[a.clone()], &|t, v| {
        let o = t.sigmoid(v[0]);
        contract(t, o, 14)
    });
    assert_fd("reshape", &[a], &|t, v| {
        let o = t.reshape(v[0], &[2, 6]).unwrap();
        contract(t, o, 15)
    });
}

#[test]
fn reductions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 3, 4], &mut rng);
    for axis in 0..3 {
        assert_fd("reduce_sum", &[x.clone()], &|t, v| {
            let o = t.reduce_sum(v[0], axis).unwrap();
            contract(t, o, 20 + axis as u64)
        });
        assert_fd("vector_norm", &[x.clone()], &|t, v| {
            let o = t.vector_norm(v[0], axis).unwrap();
            contract(t, o, 30 + axis as u64)
        });
    }
}

#[test]
fn dense_conv_pool_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[3, 4], &mut rng);
    let w = random(&[4, 2], &mut rng);
    let b = random(&[2], &mut rng);
    assert_fd("dense", &[x, w, b], &|t, v| {
        let o = t.dense(v[0], v[1], v[2]).unwrap();
        contract(t, o, 40)
    });

    let x = random(&[2, 3, 6, 6], &mut rng);
    let k = random(&[4, 3, 3, 3], &mut rng);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0)] {
        assert_fd("conv2d", &[x.clone(), k.clone()], &|t, v| {
            let o = t.conv2d(v[0], v[1], stride, pad).unwrap();
            contract(t, o, 41)
        });
    }

    let bias = random(&[3], &mut rng);
    assert_fd("channel_bias", &[x.clone(), bias], &|t, v| {
        let o = t.channel_bias(v[0], v[1]).unwrap();
        contract(t, o, 42)
    });
    assert_fd("max_pool2d", &[x], &|t, v| {
        let o = t.max_pool2d(v[0], 2).unwrap();
        contract(t, o, 43)
    });
}

#[test]
fn capsule_head_and_loss_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let caps = random(&[2, 5, 3], &mut rng);
    let w = random(&[5, 4, 3], &mut rng);
    for act in [HvcActivation::Identity, HvcActivation::Sigmoid] {
        assert_fd("hvc_head", &[caps.clone(), w.clone()], &|t, v| {
            let o = hvc_head(t, v[0], v[1], act).unwrap();
            contract(t, o, 50)
        });
    }
    let logits = random(&[4, 13], &mut rng).map(|v| 3.0 * v);
    assert_fd("softmax_cross_entropy", &[logits], &|t, v| {
        t.softmax_cross_entropy(v[0], &[0, 12, 5, 5]).unwrap()
    });
}

fn tiny(head: Head) -> ModelConfig {
    ModelConfig {
        head,
        input_size: 12,
        input_channels: 3,
        channels: vec![3, 4],
        stem_stride: 2,
        capsule_dim: 2,
        num_classes: 3,
    }
}

#[test]
fn full_models_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = Tensor::from_fn(&[2, 3, 12, 12], |_| rng.random_range(0.0..1.0));
    for head in Head::BOTH {
        let model = build_model::<f64>(&tiny(head), 9).unwrap();
        let mut inputs = model.params().to_vec();
        inputs.push(input.clone());
        let n_params = model.params().len();
        let errors = fd_errors(&inputs, &|t, v| {
            let logits = model.forward(t, &v[..n_params], v[n_params]).unwrap();
            t.softmax_cross_entropy(logits, &[2, 0]).unwrap()
        });
        for (i, e) in errors.iter().enumerate() {
            assert!(*e <= TOL, "{head}: tensor {i} relative error {e:e}");
        }
    }
}

fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [f, _, kh, kw] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * f * ho * wo];
    for b in 0..n {
        for fi in 0..f {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (oy * stride + i) as isize - pad as isize;
                                let ix = (ox * stride + j) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += x.data()
                                        [((b * c + ci) * h + iy as usize) * w + ix as usize]
                                        * k.data()[((fi * c + ci) * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                    out[((b * f + fi) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[2, 3, 8, 8], &mut rng);
    let k = random(&[4, 3, 3, 3], &mut rng);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (3, 2)] {
        let mut tape = Tape::new();
        let (vx, vk) = (tape.constant(x.clone()), tape.constant(k.clone()));
        let out = tape.conv2d(vx, vk, stride, pad).unwrap();
        let want = naive_conv(&x, &k, stride, pad);
        for (a, b) in tape.value(out).data().iter().zip(&want) {
            assert!(
                (a - b).abs() <= 1e-12,
                "stride {stride} pad {pad}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn dense_matches_dot_product_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[3, 4], &mut rng);
    let w = random(&[4, 2], &mut rng);
    let b = random(&[2], &mut rng);
    let mut tape = Tape::new();
    let (vx, vw, vb) = (
        tape.constant(x.clone()),
        tape.constant(w.clone()),
        tape.constant(b.clone()),
    );
    let out = tape.dense(vx, vw, vb).unwrap();
    for r in 0..3 {
        for c in 0..2 {
            let want: f64 = (0..4)
                .map(|i| x.data()[r * 4 + i] * w.data()[i * 2 + c])
                .sum::<f64>()
                + b.data()[c];
            assert!((tape.value(out).data()[r * 2 + c] - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn two_consumers_sum_both_paths() {
    // y = x*x + 3x  =>  dy/dx = 2x + 3
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(&[3], vec![-1.0, 0.5, 2.0]).unwrap(), true);
    let sq = tape.hadamard(x, x).unwrap();
    let lin = tape.scale(x, 3.0);
    let y = tape.add(sq, lin).unwrap();
    let loss = tape.sum(y);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 4.0, 7.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_oracle_holds_for_random_geometry(
        seed in 0u64..1000,
        n in 1usize..3, c in 1usize..4, f in 1usize..4,
        h in 3usize..9, w in 3usize..9,
        kh in 1usize..4, kw in 1usize..4,
        stride in 1usize..3, pad in 0usize..2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[n, c, h, w], &mut rng);
        let k = random(&[f, c, kh, kw], &mut rng);
        let mut tape = Tape::new();
        let (vx, vk) = (tape.constant(x.clone()), tape.constant(k.clone()));
        let out = tape.conv2d(vx, vk, stride, pad).unwrap();
        for (a, b) in tape.value(out).data().iter().zip(naive_conv(&x, &k, stride, pad)) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn forward_is_pure(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = build_model::<f64>(&tiny(Head::Hvc), seed).unwrap();
        let input = Tensor::from_fn(&[2, 3, 12, 12], |_| rng.random_range(0.0..1.0));
        let run = || {
            let mut tape = Tape::new();
            let p = model.register(&mut tape, false);
            let x = tape.constant(input.clone());
            let o = model.forward(&mut tape, &p, x).unwrap();
            tape.value(o).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn capsule_permutation_leaves_logits_unchanged(seed in 0u64..1000, n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, d) = (3, 4);
        let caps = random(&[1, n, d], &mut rng);
        let w = random(&[n, k, d], &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % n);
        let pcaps = Tensor::from_fn(&[1, n, d], |idx| caps.data()[perm[idx / d] * d + idx % d]);
        let pw = Tensor::from_fn(&[n, k, d], |idx| w.data()[perm[idx / (k * d)] * k * d + idx % (k * d)]);
        let logits = |c: Tensor<f64>, w: Tensor<f64>| {
            let mut tape = Tape::new();
            let (vc, vw) = (tape.constant(c), tape.constant(w));
            let o = hvc_head(&mut tape, vc, vw, HvcActivation::Sigmoid).unwrap();
            tape.value(o).data().to_vec()
        };
        for (a, b) in logits(caps, w).iter().zip(logits(pcaps, pw)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
