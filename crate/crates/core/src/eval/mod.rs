//! Confusion counts, macro-averaged metrics and experiment orchestration.

mod experiment;
mod metrics;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use experiment::{
    preset, run_experiment, ClassCounts, Detector, ExperimentConfig, FieldGanProvider,
    GafProvider, HmcdFactory, ModelFactory, RunRecord,
};
pub use metrics::{
    confusion, metrics, Class, ConfusionCounts, MacroStat, MetricsReport, RunMetrics,
};
pub use report::{emit_report, metrics_table, read_report, ReportFile};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} truth labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("model: {0}")]
    Model(String),
    #[error("GAF generation: {0}")]
    Gaf(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let ep1 = preset("ep1").unwrap();
        assert_eq!(ep1.train, ClassCounts { malicious: 1000, benign: 2500 });
        assert_eq!(ep1.test, ClassCounts { malicious: 500, benign: 500 });
        assert_eq!(ep1.gaf_count, 500);
        assert_eq!(preset("ep1-desk").unwrap().train, ep1.train);
        assert_eq!(preset("ep3").unwrap().test.malicious, 1374);
        assert_eq!(preset("ep4").unwrap().test, ClassCounts { malicious: 157, benign: 200 });
        let full = preset("ep2-full").unwrap();
        assert_eq!(full.train, ClassCounts { malicious: 20_000, benign: 50_000 });
        assert_eq!(full.test.benign, 30_000);
        assert_eq!(full.gaf_count, 10_000);
        assert!(preset("ep5").is_none());
    }

    #[test]
    fn perfect_report_table_row_and_round_trip() {
        let r = metrics("ep1", &[(7, ConfusionCounts { tp: 3, fp: 0, tn: 4, fn_: 0 })]).unwrap();
        assert_eq!(metrics_table(&r), "precision,recall,f1,fpr\n1.0,1.0,1.0,0.0\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let table = emit_report(&r, serde_json::json!({"seed": 7}), &path).unwrap();
        assert_eq!(std::fs::read_to_string(table).unwrap(), metrics_table(&r));
        let back = read_report(&path).unwrap();
        assert_eq!(back.report, r);
        assert_eq!(back.provenance["seed"], 7);
    }

    #[test]
    fn full_precision_survives_the_report() {
        let r = metrics("x", &[(1, ConfusionCounts { tp: 1, fp: 2, tn: 7, fn_: 5 })]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        emit_report(&r, serde_json::Value::Null, &path).unwrap();
        let back = read_report(&path).unwrap().report;
        assert_eq!(back.runs[0].recall.unwrap().to_bits(), r.runs[0].recall.unwrap().to_bits());
        assert_eq!(back.f1.unwrap().mean.to_bits(), r.f1.unwrap().mean.to_bits());
    }
}
