use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Head, ModelConfig, NetworkError, Result};
use crate::raster::Image;
use crate::tensor::{Real, Tape, Tensor, Var};

/// Componentwise nonlinearity applied to each class capsule before its
/// components are summed into a logit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HvcActivation {
    Identity,
    Sigmoid,
}

/// HVC classification layer.
///
/// `capsules[N, n, d]` and `weights[n, K, d]` give class capsules
/// `v[b, j] = sum_i capsules[b, i] ⊙ weights[i, j]` of dimension `d`; the
/// logit of class `j` is the sum of the activated components of `v[b, j]`.
pub fn hvc_head<F: Real>(
    tape: &mut Tape<F>,
    capsules: Var,
    weights: Var,
    activation: HvcActivation,
) -> Result<Var> {
    let v = tape.capsule_combine(capsules, weights)?;
    let v = match activation {
        HvcActivation::Identity => v,
        HvcActivation::Sigmoid => tape.sigmoid(v),
    };
    Ok(tape.reduce_sum(v, 2)?)
}

/// Parameters plus the config that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<F> {
    config: ModelConfig,
    params: Vec<Tensor<F>>,
}

/// Deterministic initialization: each weight tensor is drawn uniformly from
/// `±sqrt(6 / fan_in)` in declaration order from one ChaCha8 stream seeded
/// with `seed`; biases start at zero. M1 and M2 built from the same seed
/// therefore share every trunk parameter.
pub fn build_model<F: Real>(config: &ModelConfig, seed: u64) -> Result<Model<F>> {
    let shapes = config.param_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = shapes
        .iter()
        .map(|shape| {
            if shape.len() == 1 {
                return Tensor::zeros(shape);
            }
            let fan_in = match shape.len() {
                4 => shape[1] * shape[2] * shape[3],
                _ => shape[0],
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            Tensor::from_fn(shape, |_| F::lit(rng.random_range(-bound..bound)))
        })
        .collect();
    Ok(Model {
        config: config.clone(),
        params,
    })
}

impl<F: Real> Model<F> {
    pub fn from_parts(config: ModelConfig, params: Vec<Tensor<F>>) -> Result<Self> {
        let shapes = config.param_shapes()?;
        if shapes.len() != params.len() {
            return Err(NetworkError::Config(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, (s, p)) in shapes.iter().zip(&params).enumerate() {
            if s.as_slice() != p.shape() {
                return Err(NetworkError::Config(format!(
                    "parameter {i} has shape {:?}, expected {s:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.params
    }

    /// Trunk parameters (kernels and biases of every conv block).
    pub fn trunk_params(&self) -> &[Tensor<F>] {
        &self.params[..2 * self.config.channels.len()]
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Registers the parameters on `tape` as gradient-tracked leaves.
    pub fn register(&self, tape: &mut Tape<F>, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.clone(), requires_grad))
            .collect()
    }

    /// Logits `[N, K]` for an input batch `[N, C, H, W]`.
    pub fn forward(&self, tape: &mut Tape<F>, params: &[Var], input: Var) -> Result<Var> {
        let blocks = self.config.channels.len();
        let mut x = input;
        for b in 0..blocks {
            let stride = if b == 0 { self.config.stem_stride } else { 1 };
            x = tape.conv2d(x, params[2 * b], stride, 1)?;
            x = tape.channel_bias(x, params[2 * b + 1])?;
            x = tape.relu(x);
            x = tape.max_pool2d(x, 2)?;
        }
        let n = tape.value(x).shape()[0];
        let features = self.config.feature_len()?;
        let head = &params[2 * blocks..];
        match self.config.head {
            Head::FullyConnected => {
                let flat = tape.reshape(x, &[n, features])?;
                Ok(tape.dense(flat, head[0], head[1])?)
            }
            Head::Hvc => {
                let caps = tape.reshape(
                    x,
                    &[n, self.config.num_capsules()?, self.config.capsule_dim],
                )?;
                hvc_head(tape, caps, head[0], HvcActivation::Sigmoid)
            }
        }
    }

    /// Packs images into an `[N, C, H, W]` tensor after checking sizes.
    pub fn batch_tensor(&self, images: &[&Image]) -> Result<Tensor<F>> {
        let (s, c) = (self.config.input_size, self.config.input_channels);
        let plane = s * s * c;
        let mut data = vec![F::zero(); images.len() * plane];
        for (img, out) in images.iter().zip(data.chunks_mut(plane)) {
            self.check_image(img)?;
            img.to_planar(out, |v| F::from_f32(v).unwrap());
        }
        Ok(Tensor::new(&[images.len(), c, s, s], data)?)
    }

    pub(crate) fn check_image(&self, img: &Image) -> Result<()> {
        let (s, c) = (self.config.input_size, self.config.input_channels);
        let got = (img.width(), img.height(), img.channels());
        if got != (s, s, c) {
            return Err(NetworkError::ImageSize {
                expected: (s, s, c),
                got,
            });
        }
        Ok(())
    }

    /// Logits for a batch of images, without gradient tracking.
    pub fn logits(&self, images: &[&Image]) -> Result<Tensor<F>> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape, false);
        let input = tape.constant(self.batch_tensor(images)?);
        let out = self.forward(&mut tape, &params, input)?;
        Ok(tape.value(out).clone())
    }

    /// Predicted class for each image.
    pub fn predict(&self, images: &[&Image]) -> Result<Vec<usize>> {
        let logits = self.logits(images)?;
        let k = self.config.num_classes;
        Ok(logits.data().chunks(k).map(argmax).collect())
    }
}

/// Index of the first maximum.
pub(crate) fn argmax<F: PartialOrd>(row: &[F]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}
