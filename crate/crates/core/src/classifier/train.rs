use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::network::{label_index, ModelInput};
use super::{ClassifierError, HmcdArchitecture, TrainedModel};
use crate::eval::{Class, ConfusionCounts};
use crate::features::{fit_scaler, Sample, Scaler};
use crate::nn::{adam_update, AdamConfig, AdamState, ParamSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub folds: usize,
    /// Repeated experiment runs; consumed by the evaluation harness.
    pub repeats: usize,
    pub seed: u64,
    /// GAFs mixed into every training set; consumed by the drivers that
    /// generate them.
    pub gaf_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            folds: 5,
            repeats: 5,
            seed: 0,
            gaf_count: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let problem = if self.epochs < 1 {
            "epochs must be at least 1"
        } else if self.batch_size < 1 {
            "batch size must be at least 1"
        } else if self.folds < 2 {
            "folds must be at least 2"
        } else if self.repeats < 1 {
            "repeats must be at least 1"
        } else if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            "learning rate must be positive"
        } else {
            return Ok(());
        };
        Err(ClassifierError::InvalidConfig(problem.into()))
    }
}

/// Validation result of one cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_samples: usize,
    pub gaf_samples: usize,
    pub validation_samples: usize,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub folds: Vec<FoldResult>,
}

fn targets(samples: &[Sample]) -> Result<Vec<usize>, ClassifierError> {
    samples
        .iter()
        .map(|s| label_index(s.label).ok_or_else(|| ClassifierError::Unlabeled(s.flow_id.clone())))
        .collect()
}

/// Stratified fold index per sample: each class is shuffled with the seed
/// and dealt round-robin, benign first, so fold sizes differ by at most one.
pub fn fold_assignment(
    samples: &[Sample],
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, ClassifierError> {
    let targets = targets(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut assignment = vec![0; samples.len()];
    let mut position = 0;
    for class in [super::BENIGN, super::MALICIOUS] {
        let mut members: Vec<usize> = (0..samples.len()).filter(|&i| targets[i] == class).collect();
        if members.len() < folds {
            return Err(ClassifierError::InsufficientData(format!(
                "{} samples of class {class} for {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = position % folds;
            position += 1;
        }
    }
    Ok(assignment)
}

/// Trains one model on `samples` plus `gafs`. The scaler is fitted on the
/// same training data.
pub fn fit(
    arch: &HmcdArchitecture,
    samples: &[&Sample],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel, ClassifierError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(ClassifierError::InsufficientData("empty training set".into()));
    }
    let targets: Vec<usize> = samples
        .iter()
        .map(|s| label_index(s.label).ok_or_else(|| ClassifierError::Unlabeled(s.flow_id.clone())))
        .collect::<Result<_, _>>()?;
    let scaler = fit_scaler(samples.iter().copied())?;
    let mut params = arch.init_params(seed)?;
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, mut grads) = batch_gradient(arch, &params, &scaler, samples, &targets, batch)?;
            epoch_loss += loss;
            grads.scale(1.0 / batch.len() as f64);
            adam_update(&mut params, &grads, &mut adam)?;
        }
        let mean = epoch_loss / samples.len() as f64;
        debug!("epoch {}: mean loss {mean:.6}", epoch + 1);
        history.push(mean);
    }
    Ok(TrainedModel {
        arch: arch.clone(),
        params,
        scaler,
        history,
        seed,
        dictionary_hash: None,
    })
}

/// Summed loss and gradient over a minibatch. Per-sample work runs in
/// parallel; the sum is taken in batch order so the result does not depend
/// on the thread count.
fn batch_gradient(
    arch: &HmcdArchitecture,
    params: &ParamSet,
    scaler: &Scaler,
    samples: &[&Sample],
    targets: &[usize],
    batch: &[usize],
) -> Result<(f64, ParamSet), ClassifierError> {
    let per_sample: Vec<(f64, ParamSet)> = batch
        .par_iter()
        .map(|&i| {
            let input = ModelInput::normalized(samples[i], scaler)?;
            arch.loss_and_grad(params, &input, targets[i])
        })
        .collect::<Result<_, _>>()?;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        total.add_assign(g)?;
    }
    Ok((loss, total))
}

/// Cross-validates on `samples` (GAFs only ever join training folds), then
/// trains the returned model on all samples plus GAFs.
pub fn train(
    arch: &HmcdArchitecture,
    samples: &[Sample],
    gafs: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome, ClassifierError> {
    config.validate()?;
    targets(gafs)?;
    let assignment = fold_assignment(samples, config.folds, config.seed)?;
    let mut folds = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let mut training: Vec<&Sample> = samples
            .iter()
            .zip(&assignment)
            .filter(|(_, &f)| f != fold)
            .map(|(s, _)| s)
            .collect();
        let real = training.len();
        training.extend(gafs);
        let validation: Vec<&Sample> = samples
            .iter()
            .zip(&assignment)
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s)
            .collect();
        let model = fit(arch, &training, config, config.seed.wrapping_add(fold as u64 + 1))?;
        let mut counts = ConfusionCounts::default();
        for s in &validation {
            let truth = Class::from_label(s.label).ok_or_else(|| ClassifierError::Unlabeled(s.flow_id.clone()))?;
            counts.record(truth, model.classify(s)?.0);
        }
        info!(
            "fold {}/{}: {} validation samples, counts {counts:?}",
            fold + 1,
            config.folds,
            validation.len()
        );
        folds.push(FoldResult {
            fold,
            train_samples: real,
            gaf_samples: gafs.len(),
            validation_samples: validation.len(),
            counts,
        });
    }
    let all: Vec<&Sample> = samples.iter().chain(gafs).collect();
    let model = fit(arch, &all, config, config.seed)?;
    Ok(TrainOutcome { model, folds })
}
