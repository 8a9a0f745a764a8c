use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{GridPosition, PerspectiveRing, RotationLabel, Side, ROTATION_TABLE};
use crate::network::Example;
use crate::raster::Image;

use super::board::{mix, BoardSpec};
use super::render::{corner_out_of_view, render, SceneParams};
use super::truth::GroundTruth;
use super::{Result, SynthError};

pub const MANIFEST_NAME: &str = "manifest.csv";

/// Captures per (position, rotation) cell: four of the training board, one
/// of the test board.
pub const COPIES_PER_SPLIT: [usize; 2] = [4, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const BOTH: [Split; 2] = [Split::Train, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn copies(self) -> usize {
        COPIES_PER_SPLIT[self as usize]
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(SynthError::Manifest(format!("unknown split '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationConfig {
    pub out_size: usize,
    pub seed: u64,
    /// Render every component flush with the board.
    pub flat: bool,
    /// Half-width of the uniform placement error, model units.
    pub placement_jitter: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            out_size: 64,
            seed: 0,
            flat: false,
            placement_jitter: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub image: Image,
    pub class_id: usize,
    pub rotation: RotationLabel,
    pub position: GridPosition,
    pub truth: GroundTruth,
    pub split: Split,
    pub copy: usize,
}

impl LabeledSample {
    pub fn ring(&self) -> PerspectiveRing {
        self.position.ring()
    }

    pub fn example(&self) -> Example<'_> {
        Example {
            image: &self.image,
            class: self.class_id,
            rotation: self.rotation,
            ring: self.ring(),
        }
    }

    /// Path relative to the dataset root.
    pub fn relative_path(&self) -> PathBuf {
        Path::new(&self.class_id.to_string())
            .join(self.split.name())
            .join(sample_name(self.position, self.rotation, self.copy))
    }
}

pub fn sample_name(pos: GridPosition, rot: RotationLabel, copy: usize) -> String {
    format!("r{}c{}_{}_{}.png", pos.row, pos.col, rot.name(), copy)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed, 0x5EED), |acc, &p| mix(acc, p))
}

/// Admissible `|theta|` range for a label: the measured mean +- 3 SD,
/// clipped at the midpoints between neighbouring band means on the same
/// side so the bands never overlap.
pub fn rotation_band(label: RotationLabel) -> (f64, f64) {
    let t = |l: RotationLabel| ROTATION_TABLE[l.index()];
    let mid = |a: RotationLabel, b: RotationLabel| (t(a).mean + t(b).mean) / 2.0;
    use RotationLabel::*;
    let neutral_hi = mid(Neutral, LeftShallow).min(mid(Neutral, RightShallow));
    let s = t(label);
    let (lo, hi) = match label {
        Neutral => return (0.0, neutral_hi.min(3.0 * neutral_sigma())),
        LeftShallow => (mid(Neutral, LeftShallow), mid(LeftShallow, LeftWide)),
        RightShallow => (mid(Neutral, RightShallow), mid(RightShallow, RightWide)),
        LeftWide => (mid(LeftShallow, LeftWide), f64::INFINITY),
        RightWide => (mid(RightShallow, RightWide), f64::INFINITY),
    };
    (lo.max(s.mean - 3.0 * s.sd), hi.min(s.mean + 3.0 * s.sd))
}

/// Scale of the half-normal whose mean equals the neutral band's measured
/// mean absolute deviation.
fn neutral_sigma() -> f64 {
    ROTATION_TABLE[RotationLabel::Neutral.index()].mean * (std::f64::consts::PI / 2.0).sqrt()
}

/// Signed placement angle for a label, degrees. Left labels are positive,
/// right negative; neutral picks a side at random.
pub fn draw_theta<R: Rng + ?Sized>(label: RotationLabel, rng: &mut R) -> f64 {
    let (lo, hi) = rotation_band(label);
    let stats = ROTATION_TABLE[label.index()];
    let (dist, sign) = match label.side() {
        Side::Center => (
            Normal::new(0.0, neutral_sigma()).unwrap(),
            if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        ),
        _ => (Normal::new(stats.mean, stats.sd).unwrap(), label.sign()),
    };
    loop {
        let m = dist.sample(rng).abs();
        if (lo..=hi).contains(&m) {
            return sign * m;
        }
    }
}

/// Placements redrawn when a board corner leaves the frame.
const MAX_PLACEMENT_DRAWS: usize = 64;

struct Job {
    class: usize,
    pos: GridPosition,
    rot: RotationLabel,
    split: Split,
    copy: usize,
}

/// Renders every (class, position, rotation, split, copy) sample in that
/// order: 500 training and 125 test images per class. A placement that
/// would push a board corner out of the frame is redrawn.
pub fn generate_dataset(
    library: &[BoardSpec],
    cfg: &GenerationConfig,
) -> Result<Vec<LabeledSample>> {
    if library.is_empty() {
        return Err(SynthError::EmptyLibrary);
    }
    let mut jobs = Vec::new();
    for class in 0..library.len() {
        for pos in GridPosition::all() {
            for rot in RotationLabel::ALL {
                for split in Split::BOTH {
                    for copy in 0..split.copies() {
                        jobs.push(Job {
                            class,
                            pos,
                            rot,
                            split,
                            copy,
                        });
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .map(|job| {
            let board = if cfg.flat {
                library[job.class].flattened()
            } else {
                library[job.class].clone()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[
                    job.class as u64,
                    job.pos.row as u64,
                    job.pos.col as u64,
                    job.rot.index() as u64,
                    job.split as u64,
                    job.copy as u64,
                ],
            ));
            let mut draws = 0;
            let scene = loop {
                let theta = draw_theta(job.rot, &mut rng);
                let j = cfg.placement_jitter;
                let offset = if j > 0.0 {
                    (rng.random_range(-j..=j), rng.random_range(-j..=j))
                } else {
                    (0.0, 0.0)
                };
                let scene = SceneParams {
                    grid_position: job.pos,
                    rotation_label: job.rot,
                    theta_deg: theta,
                    offset,
                    instance_seed: derive_seed(cfg.seed, &[job.class as u64, 0xB0A2D, job.split as u64]),
                };
                draws += 1;
                if draws == MAX_PLACEMENT_DRAWS
                    || corner_out_of_view(board.board_size, &scene, cfg.out_size)?.is_none()
                {
                    break scene;
                }
            };
            Ok(LabeledSample {
                image: render(&board, &scene, cfg.out_size)?,
                class_id: job.class,
                rotation: job.rot,
                position: job.pos,
                truth: GroundTruth::of(&board, &scene, cfg.out_size)?,
                split: job.split,
                copy: job.copy,
            })
        })
        .collect()
}

/// One line of `manifest.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub class_id: usize,
    pub split: String,
    pub row: u8,
    pub col: u8,
    pub rotation_label: String,
    pub theta_true: f64,
    pub ratio_y_true: f64,
}

const MANIFEST_COLUMNS: [&str; 8] = [
    "path",
    "class_id",
    "split",
    "row",
    "col",
    "rotation_label",
    "theta_true",
    "ratio_y_true",
];

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join(MANIFEST_NAME)
}

/// Writes images as 8-bit PNG under `root` plus the manifest.
pub fn write_dataset(samples: &[LabeledSample], root: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(manifest_path(root)).map_err(|e| {
        SynthError::Manifest(format!("cannot create {}: {e}", manifest_path(root).display()))
    })?;
    wtr.write_record(MANIFEST_COLUMNS)?;
    for s in samples {
        let rel = s.relative_path();
        let full = root.join(&rel);
        if let Some(dir) = full.parent() {
            std::fs::create_dir_all(dir)?;
        }
        s.image.save_png(&full)?;
        wtr.write_record([
            rel.to_string_lossy().replace('\\', "/"),
            s.class_id.to_string(),
            s.split.name().to_string(),
            s.position.row.to_string(),
            s.position.col.to_string(),
            s.rotation.name().to_string(),
            format!("{:.6}", s.truth.theta_deg),
            format!("{:.6}", s.truth.ratio_y),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestRow>> {
    let path = manifest_path(root);
    if !path.is_file() {
        return Err(SynthError::Manifest(format!(
            "missing manifest: {}",
            path.display()
        )));
    }
    let mut rdr = csv::Reader::from_path(&path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(MANIFEST_COLUMNS) {
        return Err(SynthError::Manifest(format!(
            "unexpected columns {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Loads a conforming dataset directory, resampling images to
/// `out_size` when given. `ratio_x` is estimated as `ratio_y * W / H`.
pub fn load_dataset(root: &Path, out_size: Option<usize>) -> Result<Vec<LabeledSample>> {
    let rows = read_manifest(root)?;
    rows.par_iter()
        .map(|r| {
            let image = Image::load_rgb(&root.join(&r.path), out_size)?;
            let rotation: RotationLabel = r.rotation_label.parse()?;
            let position = GridPosition::new(r.row, r.col)?;
            let copy = r
                .path
                .rsplit('_')
                .next()
                .and_then(|t| t.split('.').next())
                .and_then(|t| t.parse().ok())
                .unwrap_or(0);
            let aspect = image.width() as f64 / image.height() as f64;
            Ok(LabeledSample {
                truth: GroundTruth {
                    theta_deg: r.theta_true,
                    ratio_y: r.ratio_y_true,
                    ratio_x: r.ratio_y_true * aspect,
                },
                image,
                class_id: r.class_id,
                rotation,
                position,
                split: r.split.parse()?,
                copy,
            })
        })
        .collect()
}
