use log::warn;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::http::Label;

/// Ground truth or prediction for one flow; malicious is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Benign,
    Malicious,
}

impl Class {
    pub fn from_label(label: Label) -> Option<Class> {
        match label {
            Label::Benign => Some(Class::Benign),
            Label::Malicious => Some(Class::Malicious),
            Label::Unlabeled => None,
        }
    }

    pub fn label(self) -> Label {
        match self {
            Class::Benign => Label::Benign,
            Class::Malicious => Label::Malicious,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn record(&mut self, truth: Class, predicted: Class) {
        match (truth, predicted) {
            (Class::Malicious, Class::Malicious) => self.tp += 1,
            (Class::Malicious, Class::Benign) => self.fn_ += 1,
            (Class::Benign, Class::Malicious) => self.fp += 1,
            (Class::Benign, Class::Benign) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }
}

pub fn confusion(truth: &[Class], predicted: &[Class]) -> Result<ConfusionCounts, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        c.record(t, p);
    }
    Ok(c)
}

/// Metrics of one run. `None` marks a metric whose denominator was zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
}

impl RunMetrics {
    pub fn new(run: usize, seed: u64, counts: ConfusionCounts) -> Self {
        RunMetrics {
            run,
            seed,
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            fpr: counts.fpr(),
        }
    }
}

/// Macro mean over the runs where the metric is defined, with the spread
/// reported as `+(max - mean)` and `-(mean - min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroStat {
    pub mean: f64,
    pub plus: f64,
    pub minus: f64,
    pub defined_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub runs: Vec<RunMetrics>,
    pub precision: Option<MacroStat>,
    pub recall: Option<MacroStat>,
    pub f1: Option<MacroStat>,
    pub fpr: Option<MacroStat>,
}

fn macro_stat(name: &str, runs: &[RunMetrics], get: fn(&RunMetrics) -> Option<f64>) -> Option<MacroStat> {
    let mut values = Vec::with_capacity(runs.len());
    for r in runs {
        match get(r) {
            Some(v) => values.push(v),
            None => warn!("{name} undefined in run {} (zero denominator); excluded from the macro mean", r.run),
        }
    }
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(MacroStat {
        mean,
        plus: max - mean,
        minus: mean - min,
        defined_runs: values.len(),
    })
}

/// Per-run metrics and their macro averages. `runs` pairs each run's seed
/// with its confusion counts, in run order.
pub fn metrics(
    experiment: &str,
    runs: &[(u64, ConfusionCounts)],
) -> Result<MetricsReport, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::UndefinedMetric("no runs to aggregate".into()));
    }
    let runs: Vec<RunMetrics> = runs
        .iter()
        .enumerate()
        .map(|(i, &(seed, c))| RunMetrics::new(i, seed, c))
        .collect();
    Ok(MetricsReport {
        experiment: experiment.to_string(),
        precision: macro_stat("precision", &runs, |r| r.precision),
        recall: macro_stat("recall", &runs, |r| r.recall),
        f1: macro_stat("f1", &runs, |r| r.f1),
        fpr: macro_stat("fpr", &runs, |r| r.fpr),
        runs,
    })
}
