use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::EvalError;

/// Report file contents: the metrics plus a free-form provenance block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub report: MetricsReport,
    pub provenance: serde_json::Value,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

/// Per-run table: header `precision,recall,f1,fpr`, one row per run, an
/// empty cell for an undefined metric. Values print at full precision.
pub fn metrics_table(report: &MetricsReport) -> String {
    let mut s = String::from("precision,recall,f1,fpr\n");
    for r in &report.runs {
        s.push_str(&format!(
            "{},{},{},{}\n",
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
            cell(r.fpr)
        ));
    }
    s
}

/// Writes `<path>` (JSON) and `<path>.csv` (the per-run table). Returns the
/// table path.
pub fn emit_report(
    report: &MetricsReport,
    provenance: serde_json::Value,
    path: &Path,
) -> Result<PathBuf, EvalError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| EvalError::Io { path: p, source }
    };
    let file = ReportFile {
        report: report.clone(),
        provenance,
    };
    let json = serde_json::to_string_pretty(&file).expect("report serializes");
    fs::write(path, json + "\n").map_err(io(path))?;
    let mut table = path.as_os_str().to_owned();
    table.push(".csv");
    let table = PathBuf::from(table);
    fs::write(&table, metrics_table(report)).map_err(io(&table))?;
    Ok(table)
}

pub fn read_report(path: &Path) -> Result<ReportFile, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}
