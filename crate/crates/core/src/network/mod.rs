//! The two classifiers: a shared convolutional trunk followed by either a
//! fully-connected head (M1) or a homogeneous-vector-capsule head (M2), with
//! training, evaluation and a flat binary checkpoint format.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use model::{build_model, hvc_head, HvcActivation, Model};
pub use train::{evaluate, train, EpochMetrics, Evaluation, TrainConfig};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{GeometryError, PerspectiveRing, RotationLabel};
use crate::raster::Image;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{features} features cannot be split into capsules of dimension {dim}")]
    IndivisibleCapsules { features: usize, dim: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("image is {got:?} (w, h, c) but the model expects {expected:?}")]
    ImageSize {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NetworkError> = std::result::Result<T, E>;

/// Classifier head. `FullyConnected` is M1, `Hvc` is M2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Head {
    FullyConnected,
    Hvc,
}

impl Head {
    pub const BOTH: [Head; 2] = [Head::FullyConnected, Head::Hvc];

    pub fn model_name(self) -> &'static str {
        match self {
            Head::FullyConnected => "M1",
            Head::Hvc => "M2",
        }
    }

    fn code(self) -> u8 {
        match self {
            Head::FullyConnected => 0,
            Head::Hvc => 1,
        }
    }

    fn from_code(c: u8) -> Option<Head> {
        match c {
            0 => Some(Head::FullyConnected),
            1 => Some(Head::Hvc),
            _ => None,
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.model_name())
    }
}

impl FromStr for Head {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M1" | "m1" | "fc" => Ok(Head::FullyConnected),
            "M2" | "m2" | "hvc" => Ok(Head::Hvc),
            _ => Err(NetworkError::Config(format!(
                "unknown model '{s}' (expected M1 or M2)"
            ))),
        }
    }
}

/// Architecture description.
///
/// The trunk is a stack of blocks `conv3x3(pad 1) -> bias -> relu ->
/// maxpool 2x2`; the first convolution uses `stem_stride`, the rest stride 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub head: Head,
    pub input_size: usize,
    pub input_channels: usize,
    pub channels: Vec<usize>,
    pub stem_stride: usize,
    /// Capsule dimension `d`; only read by the HVC head.
    pub capsule_dim: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    /// Desk-scale default: 64x64 RGB, channels 8/16/32 with a stride-2 stem,
    /// giving a 32x4x4 = 512-element feature map and 64 capsules of size 8.
    pub fn desk(head: Head, num_classes: usize) -> Self {
        Self {
            head,
            input_size: 64,
            input_channels: 3,
            channels: vec![8, 16, 32],
            stem_stride: 2,
            capsule_dim: 8,
            num_classes,
        }
    }

    pub fn with_head(&self, head: Head) -> Self {
        Self {
            head,
            ..self.clone()
        }
    }

    /// `(channels, height, width)` of the trunk output.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        if self.channels.is_empty() {
            return Err(NetworkError::Config(
                "at least one conv block is required".into(),
            ));
        }
        if self.input_channels == 0 || self.channels.contains(&0) {
            return Err(NetworkError::Config(
                "channel widths must be positive".into(),
            ));
        }
        if self.stem_stride == 0 {
            return Err(NetworkError::Config(
                "stem stride must be at least 1".into(),
            ));
        }
        if self.input_size == 0 {
            return Err(NetworkError::Config("input size must be positive".into()));
        }
        let mut side = (self.input_size - 1) / self.stem_stride + 1;
        for block in 0..self.channels.len() {
            if side < 2 {
                return Err(NetworkError::Config(format!(
                    "feature map collapses to {side}x{side} before pooling in block {block}"
                )));
            }
            side /= 2;
        }
        Ok((*self.channels.last().unwrap(), side, side))
    }

    pub fn feature_len(&self) -> Result<usize> {
        let (c, h, w) = self.feature_shape()?;
        Ok(c * h * w)
    }

    /// Number of input capsules `n` for the HVC head.
    pub fn num_capsules(&self) -> Result<usize> {
        let features = self.feature_len()?;
        if self.capsule_dim == 0 || features % self.capsule_dim != 0 {
            return Err(NetworkError::IndivisibleCapsules {
                features,
                dim: self.capsule_dim,
            });
        }
        Ok(features / self.capsule_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(NetworkError::Config(format!(
                "num_classes = {} (need >= 2)",
                self.num_classes
            )));
        }
        self.feature_shape()?;
        if self.head == Head::Hvc {
            self.num_capsules()?;
        }
        Ok(())
    }

    /// Parameter shapes in declaration order: per block a kernel and a
    /// bias, then the head (`[D, K]` weights and `[K]` bias for M1, `[n, K, d]`
    /// weights for M2).
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        self.validate()?;
        let mut shapes = Vec::new();
        let mut cin = self.input_channels;
        for &f in &self.channels {
            shapes.push(vec![f, cin, 3, 3]);
            shapes.push(vec![f]);
            cin = f;
        }
        let k = self.num_classes;
        match self.head {
            Head::FullyConnected => {
                shapes.push(vec![self.feature_len()?, k]);
                shapes.push(vec![k]);
            }
            Head::Hvc => shapes.push(vec![self.num_capsules()?, k, self.capsule_dim]),
        }
        Ok(shapes)
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        let mut total = 0;
        let mut cin = self.input_channels;
        for &f in &self.channels {
            total += f * cin * 9 + f;
            cin = f;
        }
        let dk = self.feature_len()? * self.num_classes;
        total += match self.head {
            Head::FullyConnected => dk + self.num_classes,
            Head::Hvc => dk,
        };
        Ok(total)
    }
}

/// One labelled training or test image, borrowed from a dataset.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub image: &'a Image,
    pub class: usize,
    pub rotation: RotationLabel,
    pub ring: PerspectiveRing,
}
