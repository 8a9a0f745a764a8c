//! Procedural micro-PCB stand-ins rendered through a pinhole camera over the
//! 5x5 capture grid, with per-component parallax and ground-truth pose.

mod board;
mod camera;
mod dataset;
mod render;
mod truth;

pub use board::{make_board_library, BoardSpec, Component, Rgb};
pub use camera::{cell_center, Camera, CAMERA_HEIGHT, GRID_SPACING, VIEW_SPAN};
pub use dataset::{
    derive_seed, draw_theta, generate_dataset, load_dataset, manifest_path, read_manifest,
    rotation_band, sample_name, write_dataset, GenerationConfig, LabeledSample, ManifestRow,
    Split, COPIES_PER_SPLIT, MANIFEST_NAME,
};
pub use render::{corner_out_of_view, induced_homography, render, SceneParams, BACKGROUND};
pub use truth::{quad_ratio, GroundTruth};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::raster::RasterError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("output size {0} is below the 16 pixel minimum")]
    OutputSize(usize),
    #[error("board corner ({x:.1}, {y:.1}) projects outside the frame")]
    OutOfView { x: f64, y: f64 },
    #[error("library is empty")]
    EmptyLibrary,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;
