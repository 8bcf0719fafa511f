//! The hybrid flow classifier: architecture, training with stratified
//! cross-validation, checkpoints and prediction.

mod arch;
mod model;
mod network;
mod train;

use thiserror::Error;

pub use arch::HmcdArchitecture;
pub use model::{DiscardedFlow, Predictions, ScoredFlow, TrainedModel};
pub use network::{check_network, label_index, ForwardCache, ModelInput, BENIGN, MALICIOUS};
pub use train::{fit, fold_assignment, train, FoldResult, TrainConfig, TrainOutcome};

use crate::features::FeatureError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("sample {0} has no label")]
    Unlabeled(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Class;
    use crate::features::{featurize_flow, Sample};
    use crate::http::Label;
    use crate::synth::separable_flows;

    fn toy(per_class: usize, seed: u64) -> Vec<Sample> {
        separable_flows(per_class, seed)
            .iter()
            .filter_map(|f| featurize_flow(f).sample())
            .collect()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 3e-3,
            folds: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn folds_partition_hundred_samples_into_twenties() {
        let samples = toy(50, 1);
        let a = fold_assignment(&samples, 5, 9).unwrap();
        for f in 0..5 {
            let members: Vec<_> = (0..100).filter(|&i| a[i] == f).collect();
            assert_eq!(members.len(), 20);
            let mal = members.iter().filter(|&&i| samples[i].label == Label::Malicious).count();
            assert_eq!(mal, 10);
        }
        assert_eq!(a, fold_assignment(&samples, 5, 9).unwrap());
    }

    #[test]
    fn too_few_samples_per_class() {
        let samples = toy(3, 1);
        assert!(matches!(
            fold_assignment(&samples, 5, 0),
            Err(ClassifierError::InsufficientData(_))
        ));
    }

    #[test]
    fn config_bounds() {
        let bad = TrainConfig { folds: 1, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn learns_separable_toy_corpus() {
        let samples = toy(40, 2);
        let outcome = train(&HmcdArchitecture::default(), &samples, &[], &quick()).unwrap();
        assert_eq!(outcome.folds.len(), 5);
        let total: u64 = outcome.folds.iter().map(|f| f.counts.total()).sum();
        assert_eq!(total, 80);
        for f in &outcome.folds {
            assert_eq!(f.validation_samples, 16);
            assert_eq!(f.train_samples, 64);
        }
        let test = toy(20, 99);
        let mut correct = 0;
        for s in &test {
            let (class, score) = outcome.model.classify(s).unwrap();
            assert!((0.0..=1.0).contains(&score));
            correct += usize::from(Some(class) == Class::from_label(s.label));
        }
        assert!(correct >= 38, "{correct}/40 correct");
        let h = &outcome.model.history;
        assert!(h.last().unwrap() < h.first().unwrap());
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let samples = toy(10, 3);
        let all: Vec<&Sample> = samples.iter().collect();
        let mut model = fit(&HmcdArchitecture::default(), &all, &TrainConfig { epochs: 1, ..quick() }, 5).unwrap();
        model.dictionary_hash = Some("abc".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        model.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back, model);
        for s in &samples {
            assert_eq!(back.probabilities(s).unwrap(), model.probabilities(s).unwrap());
        }
    }

    #[test]
    fn checkpoint_for_other_architecture_is_rejected() {
        let model = TrainedModel::untrained(&HmcdArchitecture::default(), 1).unwrap();
        let mut ckpt = model.to_checkpoint().unwrap();
        ckpt.metadata.insert("architecture".into(), HmcdArchitecture::tiny().to_string());
        ckpt.metadata.insert("architecture_hash".into(), HmcdArchitecture::tiny().hash());
        assert!(matches!(
            TrainedModel::from_checkpoint(ckpt),
            Err(ClassifierError::ArchitectureMismatch(_))
        ));
    }

    #[test]
    fn predict_empty_and_discarded() {
        let model = TrainedModel::untrained(&HmcdArchitecture::default(), 1).unwrap();
        assert_eq!(model.predict(&[]).unwrap(), Predictions::default());
        let mut flows = separable_flows(2, 4);
        let extra: Vec<_> = (0..51)
            .map(|i| crate::http::HttpMessage::request("GET", "/", vec![], "", i))
            .collect();
        flows[0].messages = extra;
        let p = model.predict(&flows).unwrap();
        assert_eq!(p.discarded.len(), 1);
        assert_eq!(p.scored.len(), 3);
        assert_eq!(p.scored, model.predict(&flows).unwrap().scored);
    }
}
