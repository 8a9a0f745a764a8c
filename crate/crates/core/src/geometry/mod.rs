//! Plane-to-plane transforms, image warping, capture-grid labels and the
//! label-conditioned augmentation sampler.

mod augment;
mod homography;
mod labels;
mod warp;

pub use augment::{sample_augmentation, AugmentDraw, AugmentPolicy, MAX_APPLIED_RATIO};
pub use homography::{compose, invert, perspective_homography, rotation_homography, Homography};
pub use labels::{GridPosition, PerspectiveRing, RingDistance, RotationLabel, Side};
pub use warp::warp;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular transform (det = {0:e})")]
    Singular(f64),
    #[error("transform contains non-finite entries")]
    NonFinite,
    #[error("perspective ratio {0} must satisfy |ratio| < 1")]
    DegenerateRatio(f64),
    #[error("frame {width}x{height} too small for a perspective warp")]
    DegenerateFrame { width: usize, height: usize },
    #[error("grid position ({row}, {col}) outside the 5x5 grid")]
    GridPosition { row: u8, col: u8 },
    #[error("unknown label '{0}'")]
    UnknownLabel(String),
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
}

/// Min / mean / SD / max of a measured quantity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelStats {
    pub min: f64,
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
}

const fn stats(min: f64, mean: f64, sd: f64, max: f64) -> LabelStats {
    LabelStats { min, mean, sd, max }
}

/// Absolute deviation from a true neutral rotation, degrees, in
/// [`RotationLabel::ALL`] order.
pub const ROTATION_TABLE: [LabelStats; 5] = [
    stats(10.43, 21.31, 4.50481, 32.78602043),
    stats(4.23, 12.39, 3.59036, 23.72892221),
    stats(0.0, 2.475, 2.04823, 12.76094982),
    stats(0.16, 14.73, 4.46218, 31.52155152),
    stats(0.76, 24.31, 5.27139, 42.84832537),
];

/// Absolute bottom/top width-ratio, percent, in [`PerspectiveRing::ALL`]
/// order.
pub const RATIO_TABLE: [LabelStats; 5] = [
    stats(0.0, 12.71, 6.27130, 48.18),
    stats(0.0, 7.94, 5.05283, 29.66),
    stats(0.0, 4.40, 3.50910, 20.90),
    stats(0.0, 7.09, 3.59487, 26.76),
    stats(0.0, 11.45, 4.36561, 23.13),
];
