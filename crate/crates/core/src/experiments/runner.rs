use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::geometry::AugmentPolicy;
use crate::network::{build_model, evaluate, train, Example, ModelConfig, TrainConfig};
use crate::synthgen::{LabeledSample, Split};

use super::catalog::{ExperimentSpec, Series};
use super::{ExperimentError, Result};

/// Training subset of one spec plus the untouched test set.
#[derive(Clone, Debug)]
pub struct SplitView<'a> {
    pub train: Vec<Example<'a>>,
    pub test: Vec<Example<'a>>,
}

impl SplitView<'_> {
    pub fn test_hash(&self) -> String {
        test_set_hash(&self.test)
    }
}

/// Selects the training samples whose rotation label and ring the experiment
/// includes; the test split is returned whole.
pub fn build_split<'a>(dataset: &'a [LabeledSample], spec: &ExperimentSpec) -> Result<SplitView<'a>> {
    let train: Vec<Example<'a>> = dataset
        .iter()
        .filter(|s| s.split == Split::Train)
        .filter(|s| spec.includes_rotation(s.rotation) && spec.includes_ring(s.ring()))
        .map(LabeledSample::example)
        .collect();
    let test: Vec<Example<'a>> = dataset
        .iter()
        .filter(|s| s.split == Split::Test)
        .map(LabeledSample::example)
        .collect();
    if train.is_empty() {
        return Err(ExperimentError::EmptyTrainSet(spec.id.clone()));
    }
    if test.is_empty() {
        return Err(ExperimentError::EmptyTestSet);
    }
    Ok(SplitView { train, test })
}

/// SHA-256 over labels and pixel values, hex encoded.
pub fn test_set_hash(test: &[Example<'_>]) -> String {
    let mut h = Sha256::new();
    for ex in test {
        h.update((ex.class as u64).to_le_bytes());
        h.update([ex.rotation.index() as u8, ex.ring.index() as u8]);
        h.update((ex.image.width() as u64).to_le_bytes());
        h.update((ex.image.height() as u64).to_le_bytes());
        for v in ex.image.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Augmentation used when training a spec: translation only for the E
/// series, excluded-label simulation for the A series, and label-matched
/// jitter for ALL.
pub fn policy_for(spec: &ExperimentSpec) -> AugmentPolicy {
    match spec.series() {
        Series::E => AugmentPolicy::translation_only(),
        Series::All => AugmentPolicy::distribution_matched(),
        Series::A => AugmentPolicy::simulate_excluded(
            &spec.included_rotations,
            &spec.signed_rings(),
            spec.augment_rotations,
            spec.augment_perspectives,
        ),
    }
}

/// Settings shared by every trial of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    /// Architecture; the head is taken from the experiment.
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Run trials on the rayon pool.
    pub parallel: bool,
}

impl RunSettings {
    pub fn desk(num_classes: usize) -> Self {
        let train = TrainConfig::default();
        Self {
            model: ModelConfig::desk(crate::network::Head::Hvc, num_classes),
            epochs: train.epochs,
            batch_size: train.batch_size,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub spec_id: String,
    pub model: crate::network::Head,
    pub trial: usize,
    pub seed: u64,
    /// Final-epoch accuracy on the full test set.
    pub accuracy: f64,
    pub wall_time_s: f64,
}

/// Trains `spec.n_trials` fresh models with seeds `base_seed + i` and
/// evaluates each on the full test set. Results are ordered by trial.
pub fn run_experiment(
    spec: &ExperimentSpec,
    dataset: &[LabeledSample],
    base_seed: u64,
    settings: &RunSettings,
) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    if spec.n_trials == 0 {
        return Ok(Vec::new());
    }
    let split = build_split(dataset, spec)?;
    let policy = policy_for(spec);
    let config = settings.model.with_head(spec.model);
    config.validate()?;

    let run_trial = |trial: usize| -> Result<TrialResult> {
        let start = Instant::now();
        let seed = base_seed.wrapping_add(trial as u64);
        let mut model = build_model::<f32>(&config, seed)?;
        let cfg = TrainConfig {
            epochs: settings.epochs,
            batch_size: settings.batch_size,
            seed,
            ..TrainConfig::default()
        };
        train(&mut model, &split.train, &policy, &cfg)?;
        let eval = evaluate(&model, &split.test)?;
        Ok(TrialResult {
            spec_id: spec.id.clone(),
            model: spec.model,
            trial,
            seed,
            accuracy: eval.accuracy,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    };
    if settings.parallel {
        (0..spec.n_trials).into_par_iter().map(run_trial).collect()
    } else {
        (0..spec.n_trials).map(run_trial).collect()
    }
}
