use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::argmax;
use super::{Example, Model, NetworkError, Result};
use crate::geometry::{sample_augmentation, warp, AugmentPolicy};
use crate::raster::Image;
use crate::tensor::{adam_step, AdamConfig, AdamState, Real, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds batch order and augmentation draws.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy on the augmented batches seen during the epoch.
    pub train_accuracy: f64,
}

/// Trains in place with minibatch Adam.
///
/// Every sample is re-augmented each time it is drawn: translation jitter
/// always, rotation and perspective jitter when `policy` enables them.
/// Warps fill uncovered pixels with the image's border mean. Runs on the
/// calling thread only, so a seed fixes the whole metric trace.
pub fn train<F: Real>(
    model: &mut Model<F>,
    data: &[Example<'_>],
    policy: &AugmentPolicy,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(NetworkError::Config("batch size must be positive".into()));
    }
    policy.validate()?;
    let k = model.config().num_classes;
    for ex in data {
        model.check_image(ex.image)?;
        if ex.class >= k {
            return Err(NetworkError::Label {
                label: ex.class,
                classes: k,
            });
        }
    }
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut warped: Vec<Image> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            warped.clear();
            for &i in batch {
                let ex = &data[i];
                let (w, h) = (ex.image.width(), ex.image.height());
                let draw = sample_augmentation(ex.rotation, ex.ring, w, h, policy, &mut rng);
                let hom = draw.homography(w, h)?;
                warped.push(warp(ex.image, &hom, ex.image.border_mean())?);
            }
            let refs: Vec<&Image> = warped.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data[i].class).collect();

            let mut tape = Tape::new();
            let params = model.register(&mut tape, true);
            let input = tape.constant(model.batch_tensor(&refs)?);
            let logits = model.forward(&mut tape, &params, input)?;
            correct += count_correct(tape.value(logits), &labels);
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(NetworkError::Tensor(crate::tensor::TensorError::NonFinite(
                    0,
                )));
            }
            loss_sum += loss_value.to_f64().unwrap() * batch.len() as f64;
            tape.backward(loss)?;
            let grads: Vec<Tensor<F>> = params
                .iter()
                .zip(model.params())
                .map(|(&v, p)| {
                    tape.take_grad(v)
                        .unwrap_or_else(|| Tensor::zeros(p.shape()))
                })
                .collect();
            adam_step(model.params_mut(), &grads, &mut state, &cfg.adam)?;
        }
        metrics.push(EpochMetrics {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(metrics)
}

fn count_correct<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count()
}

/// Test accuracy and confusion counts (`confusion[true][predicted]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub confusion: Vec<Vec<usize>>,
}

/// Batch size used by [`evaluate`]; only affects memory, not results.
const EVAL_BATCH: usize = 64;

/// Accuracy on `data` with no augmentation.
pub fn evaluate<F: Real>(model: &Model<F>, data: &[Example<'_>]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    let k = model.config().num_classes;
    let mut confusion = vec![vec![0usize; k]; k];
    for chunk in data.chunks(EVAL_BATCH) {
        let images: Vec<&Image> = chunk.iter().map(|e| e.image).collect();
        let preds = model.predict(&images)?;
        for (ex, p) in chunk.iter().zip(preds) {
            if ex.class >= k {
                return Err(NetworkError::Label {
                    label: ex.class,
                    classes: k,
                });
            }
            confusion[ex.class][p] += 1;
        }
    }
    let correct = (0..k).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        correct,
        total: data.len(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PerspectiveRing, RotationLabel};
    use crate::network::{build_model, Head, ModelConfig};

    fn tiny(head: Head) -> ModelConfig {
        ModelConfig {
            head,
            input_size: 16,
            input_channels: 1,
            channels: vec![4, 8],
            stem_stride: 1,
            capsule_dim: 4,
            num_classes: 2,
        }
    }

    /// Class 0: bright left half; class 1: bright right half.
    fn halves(n: usize) -> Vec<(Image, usize)> {
        (0..n)
            .map(|i| {
                let class = i % 2;
                let shade = 0.6 + 0.3 * ((i * 7 % 10) as f32 / 10.0);
                let img =
                    Image::from_fn(
                        16,
                        16,
                        1,
                        |x, _, _| if (x < 8) == (class == 0) { shade } else { 0.1 },
                    );
                (img, class)
            })
            .collect()
    }

    fn examples(set: &[(Image, usize)]) -> Vec<Example<'_>> {
        set.iter()
            .map(|(image, class)| Example {
                image,
                class: *class,
                rotation: RotationLabel::Neutral,
                ring: PerspectiveRing::Neutral,
            })
            .collect()
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let set = halves(4);
        let mut m = build_model::<f32>(&tiny(Head::Hvc), 3).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let metrics = train(&mut m, &examples(&set), &AugmentPolicy::default(), &cfg).unwrap();
        assert!(metrics.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let mut m = build_model::<f32>(&tiny(Head::Hvc), 3).unwrap();
        assert!(matches!(
            train(
                &mut m,
                &[],
                &AugmentPolicy::default(),
                &TrainConfig::default()
            ),
            Err(NetworkError::EmptyDataset)
        ));
        assert!(matches!(evaluate(&m, &[]), Err(NetworkError::EmptyDataset)));
    }

    #[test]
    fn learns_two_class_toy_problem_deterministically() {
        let set = halves(100);
        let ex = examples(&set);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 10,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            seed: 7,
        };
        for head in Head::BOTH {
            let mut a = build_model::<f32>(&tiny(head), 1).unwrap();
            let mut b = a.clone();
            let ma = train(&mut a, &ex, &AugmentPolicy::default(), &cfg).unwrap();
            let mb = train(&mut b, &ex, &AugmentPolicy::default(), &cfg).unwrap();
            assert_eq!(ma, mb);
            let eval = evaluate(&a, &ex).unwrap();
            assert!(eval.accuracy >= 0.95, "{head}: {}", eval.accuracy);
            assert_eq!(eval, evaluate(&a, &ex).unwrap());
            assert_eq!(
                eval.confusion
                    .iter()
                    .map(|r| r.iter().sum::<usize>())
                    .collect::<Vec<_>>(),
                vec![50, 50]
            );
        }
    }
}
