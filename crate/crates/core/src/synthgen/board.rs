use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Result, SynthError};

pub type Rgb = [f32; 3];

/// Board outline in model units (width, height).
pub const BOARD_SIZE: (f64, f64) = (3.0, 4.0);

/// Clearance between a component and the board outline.
const EDGE_MARGIN: f64 = 0.18;

/// Axis-aligned part on the board, centred at `(x, y)` in board coordinates
/// (origin at the board centre, `y` toward the bottom edge).
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// Height above the board plane, model units.
    pub height: f64,
    pub color: Rgb,
    pub appearance_seed: u64,
}

impl Component {
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.x - self.w / 2.0,
            self.y - self.h / 2.0,
            self.x + self.w / 2.0,
            self.y + self.h / 2.0,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoardSpec {
    pub class_id: usize,
    pub board_size: (f64, f64),
    pub base_color: Rgb,
    pub texture_seed: u64,
    pub components: Vec<Component>,
    /// Index of the class whose layout this board shares, if any.
    pub layout_of: Option<usize>,
}

impl BoardSpec {
    /// Same board with every component flush with the plane.
    pub fn flattened(&self) -> BoardSpec {
        let mut b = self.clone();
        for c in &mut b.components {
            c.height = 0.0;
        }
        b
    }

    /// A physically distinct copy of the same make: component colours and
    /// board texture carry small instance-specific perturbations.
    pub fn instance(&self, instance_seed: u64) -> BoardSpec {
        let mut b = self.clone();
        b.texture_seed = mix(self.texture_seed, instance_seed);
        for c in &mut b.components {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(c.appearance_seed, instance_seed));
            for v in &mut c.color {
                *v = (*v + rng.random_range(-0.03f32..=0.03)).clamp(0.0, 1.0);
            }
        }
        b
    }

    pub fn in_bounds(&self) -> bool {
        let (bw, bh) = self.board_size;
        self.components.iter().all(|c| {
            let (x0, y0, x1, y1) = c.bounds();
            x0 >= -bw / 2.0 && x1 <= bw / 2.0 && y0 >= -bh / 2.0 && y1 <= bh / 2.0
        })
    }
}

/// Part families: size ranges (w, h), height range and colour choices.
struct Kind {
    w: (f64, f64),
    h: (f64, f64),
    height: (f64, f64),
    colors: &'static [Rgb],
}

const KINDS: [Kind; 6] = [
    // IC package
    Kind {
        w: (0.4, 1.0),
        h: (0.4, 1.0),
        height: (0.05, 0.1),
        colors: &[[0.08, 0.08, 0.1], [0.15, 0.15, 0.17]],
    },
    // pin header
    Kind {
        w: (0.15, 0.25),
        h: (0.8, 1.8),
        height: (0.3, 0.4),
        colors: &[[0.05, 0.05, 0.05], [0.1, 0.1, 0.1]],
    },
    // jack / USB connector
    Kind {
        w: (0.5, 0.9),
        h: (0.4, 0.7),
        height: (0.4, 0.6),
        colors: &[[0.78, 0.78, 0.8], [0.7, 0.72, 0.75], [0.2, 0.2, 0.22]],
    },
    // electrolytic capacitor
    Kind {
        w: (0.25, 0.4),
        h: (0.25, 0.4),
        height: (0.2, 0.35),
        colors: &[[0.72, 0.6, 0.3], [0.15, 0.2, 0.5], [0.55, 0.55, 0.6]],
    },
    // small passive / LED
    Kind {
        w: (0.1, 0.2),
        h: (0.06, 0.12),
        height: (0.01, 0.04),
        colors: &[[0.85, 0.2, 0.15], [0.9, 0.85, 0.3], [0.6, 0.45, 0.3]],
    },
    // silkscreen block
    Kind {
        w: (0.3, 0.8),
        h: (0.08, 0.18),
        height: (0.0, 0.0),
        colors: &[[0.92, 0.92, 0.9]],
    },
];

const BASE_COLORS: [Rgb; 6] = [
    [0.1, 0.42, 0.22],
    [0.08, 0.3, 0.58],
    [0.55, 0.12, 0.12],
    [0.12, 0.45, 0.5],
    [0.35, 0.2, 0.5],
    [0.22, 0.22, 0.25],
];

/// Builds `n_classes` boards. Class 1 reuses class 0's layout with fresh
/// appearance seeds (same model, different manufacturer); from 9 classes
/// up, class 9 likewise shadows class 8.
pub fn make_board_library(n_classes: usize, rng_seed: u64) -> Result<Vec<BoardSpec>> {
    if n_classes < 2 {
        return Err(SynthError::TooFewClasses(n_classes));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut library: Vec<BoardSpec> = Vec::with_capacity(n_classes);
    for class_id in 0..n_classes {
        let layout_of = match class_id {
            1 => Some(0),
            9 => Some(8),
            _ => None,
        };
        let board = match layout_of {
            Some(src) => variant_of(&library[src], class_id, &mut rng),
            None => fresh_board(class_id, &mut rng),
        };
        library.push(board);
    }
    Ok(library)
}

fn fresh_board(class_id: usize, rng: &mut ChaCha8Rng) -> BoardSpec {
    let (bw, bh) = BOARD_SIZE;
    let target = rng.random_range(9..=15);
    let mut components: Vec<Component> = Vec::with_capacity(target);
    let mut attempts = 0;
    while components.len() < target && attempts < 2000 {
        attempts += 1;
        let kind = &KINDS[rng.random_range(0..KINDS.len())];
        let (mut w, mut h) = (
            rng.random_range(kind.w.0..=kind.w.1),
            rng.random_range(kind.h.0..=kind.h.1),
        );
        if rng.random_bool(0.5) {
            std::mem::swap(&mut w, &mut h);
        }
        let xr = bw / 2.0 - EDGE_MARGIN - w / 2.0;
        let yr = bh / 2.0 - EDGE_MARGIN - h / 2.0;
        if xr <= 0.0 || yr <= 0.0 {
            continue;
        }
        let c = Component {
            x: rng.random_range(-xr..=xr),
            y: rng.random_range(-yr..=yr),
            w,
            h,
            height: rng.random_range(kind.height.0..=kind.height.1),
            color: kind.colors[rng.random_range(0..kind.colors.len())],
            appearance_seed: rng.random(),
        };
        if components.iter().all(|o| separated(o, &c, 0.08)) {
            components.push(c);
        }
    }
    BoardSpec {
        class_id,
        board_size: BOARD_SIZE,
        base_color: BASE_COLORS[rng.random_range(0..BASE_COLORS.len())],
        texture_seed: rng.random(),
        components,
        layout_of: None,
    }
}

fn variant_of(src: &BoardSpec, class_id: usize, rng: &mut ChaCha8Rng) -> BoardSpec {
    let mut b = src.clone();
    b.class_id = class_id;
    b.layout_of = Some(src.class_id);
    b.texture_seed = rng.random();
    for c in &mut b.components {
        c.appearance_seed = rng.random();
        let shift = rng.random_range(0.08f32..0.2) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let ch = rng.random_range(0..3);
        c.color[ch] = (c.color[ch] + shift).clamp(0.0, 1.0);
    }
    for v in &mut b.base_color {
        *v = (*v + rng.random_range(-0.06f32..=0.06)).clamp(0.05, 0.7);
    }
    b
}

fn separated(a: &Component, b: &Component, gap: f64) -> bool {
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    ax1 + gap <= bx0 || bx1 + gap <= ax0 || ay1 + gap <= by0 || by1 + gap <= ay0
}

/// SplitMix64 finaliser over a pair of words.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
