use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::ModelInput;
use super::{ClassifierError, HmcdArchitecture};
use crate::eval::Class;
use crate::features::{featurize_flow, DiscardReason, Featurized, Sample, Scaler};
use crate::http::{Flow, Label};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::nn::{ParamSet, Tensor};

/// Trained weights with everything needed to score new flows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub arch: HmcdArchitecture,
    pub params: ParamSet,
    pub scaler: Scaler,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
    pub seed: u64,
    /// Hash of the field dictionary used for any GAFs in the training set.
    pub dictionary_hash: Option<String>,
}

/// One scored flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFlow {
    pub flow_id: String,
    pub label: Label,
    /// Probability of the malicious class.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedFlow {
    pub flow_id: String,
    pub reason: DiscardReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub scored: Vec<ScoredFlow>,
    pub discarded: Vec<DiscardedFlow>,
}

const SCALER_TENSORS: [&str; 4] = [
    "scaler.pkt_min",
    "scaler.pkt_max",
    "scaler.flow_min",
    "scaler.flow_max",
];

impl TrainedModel {
    /// An untrained model: initialized weights and an identity-range scaler.
    pub fn untrained(arch: &HmcdArchitecture, seed: u64) -> Result<Self, ClassifierError> {
        Ok(TrainedModel {
            arch: arch.clone(),
            params: arch.init_params(seed)?,
            scaler: Scaler {
                pkt_min: vec![0.0; arch.pkt_stat_dim],
                pkt_max: vec![1.0; arch.pkt_stat_dim],
                flow_min: vec![0.0; arch.flow_stat_dim],
                flow_max: vec![1.0; arch.flow_stat_dim],
            },
            history: Vec::new(),
            seed,
            dictionary_hash: None,
        })
    }

    pub fn arch_hash(&self) -> String {
        self.arch.hash()
    }

    /// `(benign, malicious)` probabilities of a raw (unnormalized) sample.
    pub fn probabilities(&self, sample: &Sample) -> Result<[f64; 2], ClassifierError> {
        let input = ModelInput::normalized(sample, &self.scaler)?;
        self.arch.predict_proba(&self.params, &input)
    }

    /// Predicted class and malicious score. Ties go to benign.
    pub fn classify(&self, sample: &Sample) -> Result<(Class, f64), ClassifierError> {
        let [benign, malicious] = self.probabilities(sample)?;
        let class = if malicious > benign {
            Class::Malicious
        } else {
            Class::Benign
        };
        Ok((class, malicious))
    }

    /// Scores samples in parallel, preserving input order.
    pub fn predict_samples(&self, samples: &[Sample]) -> Result<Vec<ScoredFlow>, ClassifierError> {
        samples
            .par_iter()
            .map(|s| {
                let (class, score) = self.classify(s)?;
                Ok(ScoredFlow {
                    flow_id: s.flow_id.clone(),
                    label: class.label(),
                    score,
                })
            })
            .collect()
    }

    /// Featurizes and scores flows; flows that cannot be featurized are
    /// listed separately.
    pub fn predict(&self, flows: &[Flow]) -> Result<Predictions, ClassifierError> {
        let mut samples = Vec::with_capacity(flows.len());
        let mut discarded = Vec::new();
        for flow in flows {
            match featurize_flow(flow) {
                Featurized::Sample(s) => samples.push(s),
                Featurized::Discard(reason) => discarded.push(DiscardedFlow {
                    flow_id: flow.flow_id.clone(),
                    reason,
                }),
            }
        }
        Ok(Predictions {
            scored: self.predict_samples(&samples)?,
            discarded,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint, ClassifierError> {
        let mut ckpt = Checkpoint::default();
        let meta = &mut ckpt.metadata;
        meta.insert("architecture".into(), self.arch.to_string());
        meta.insert("architecture_hash".into(), self.arch_hash());
        meta.insert("seed".into(), self.seed.to_string());
        if let Some(h) = &self.dictionary_hash {
            meta.insert("dictionary_hash".into(), h.clone());
        }
        ckpt.tensors = self.params.clone();
        let s = &self.scaler;
        for (name, v) in SCALER_TENSORS
            .iter()
            .zip([&s.pkt_min, &s.pkt_max, &s.flow_min, &s.flow_max])
        {
            ckpt.tensors.insert(*name, Tensor::new(vec![v.len()], v.clone())?);
        }
        if !self.history.is_empty() {
            ckpt.tensors
                .insert("history", Tensor::vector(self.history.clone()));
        }
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, ClassifierError> {
        let meta = |k: &str| {
            ckpt.metadata
                .get(k)
                .ok_or_else(|| ClassifierError::ArchitectureMismatch(format!("checkpoint lacks {k}")))
        };
        let arch: HmcdArchitecture = meta("architecture")?.parse()?;
        if *meta("architecture_hash")? != arch.hash() {
            return Err(ClassifierError::ArchitectureMismatch(
                "architecture hash does not match its description".into(),
            ));
        }
        let seed = meta("seed")?
            .parse()
            .map_err(|_| ClassifierError::ArchitectureMismatch("bad seed".into()))?;
        let dictionary_hash = ckpt.metadata.get("dictionary_hash").cloned();

        let mut params = ParamSet::new();
        let mut scaler = Vec::new();
        let mut history = Vec::new();
        for (name, t) in ckpt.tensors.iter() {
            if SCALER_TENSORS.contains(&name) {
                scaler.push((name, t.data().to_vec()));
            } else if name == "history" {
                history = t.data().to_vec();
            } else {
                params.insert(name, t.clone());
            }
        }
        arch.check_params(&params)?;
        let take = |name: &str, len: usize| {
            scaler
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| v.clone())
                .filter(|v| v.len() == len)
                .ok_or_else(|| ClassifierError::ArchitectureMismatch(format!("bad or missing {name}")))
        };
        let scaler = Scaler {
            pkt_min: take("scaler.pkt_min", arch.pkt_stat_dim)?,
            pkt_max: take("scaler.pkt_max", arch.pkt_stat_dim)?,
            flow_min: take("scaler.flow_min", arch.flow_stat_dim)?,
            flow_max: take("scaler.flow_max", arch.flow_stat_dim)?,
        };
        Ok(TrainedModel {
            arch,
            params,
            scaler,
            history,
            seed,
            dictionary_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        save_checkpoint(path, &self.to_checkpoint()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        Self::from_checkpoint(load_checkpoint(path)?)
    }
}
