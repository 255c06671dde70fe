//! Comparison tables over saved run results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::output::{method_label, RunArtifact};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub run: String,
    pub method: String,
    pub protocol: String,
    pub seed: u64,
    pub final_accuracy: f64,
    pub final_forgetting: Option<f64>,
    /// `1 − A_T`
    pub error_rate: f64,
    /// `(e_base − e)/e_base` against the group's baseline; `None` for the
    /// baseline itself or when the group has none.
    pub rel_error_reduction: Option<f64>,
    pub source: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

/// `(e_base − e_new)/e_base` on error rates `e = 1 − A_T`.
pub fn relative_error_reduction(base_accuracy: f64, new_accuracy: f64) -> Option<f64> {
    let eb = 1.0 - base_accuracy;
    let en = 1.0 - new_accuracy;
    (eb > 0.0).then(|| (eb - en) / eb)
}

fn read_artifact(path: &Path) -> Result<RunArtifact, String> {
    let p = if path.is_dir() { path.join("result.json") } else { path.to_path_buf() };
    let text = fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_slice(&text).map_err(|e| format!("{}: {e}", p.display()))
}

fn protocol_key(a: &RunArtifact) -> String {
    serde_json::to_string(&a.config.experiment.protocol).unwrap_or_default()
}

/// Builds the table. `baseline` names the method whose runs anchor the
/// relative error-rate column (default `ncm`).
pub fn build_report(paths: &[PathBuf], baseline: Option<&str>) -> Report {
    let baseline = baseline.unwrap_or("ncm");
    let mut report = Report::default();
    let mut groups: BTreeMap<String, Vec<(PathBuf, RunArtifact)>> = BTreeMap::new();
    for p in paths {
        match read_artifact(p) {
            Ok(a) => groups.entry(a.result.dataset.clone()).or_default().push((p.clone(), a)),
            Err(e) => report.warnings.push(format!("skipped unreadable result {e}")),
        }
    }
    if groups.len() > 1 {
        report.warnings.push(format!("results span {} datasets; rows are grouped by dataset", groups.len()));
    }
    for (dataset, runs) in groups {
        let protocols: std::collections::BTreeSet<String> = runs.iter().map(|(_, a)| protocol_key(a)).collect();
        if protocols.len() > 1 {
            report.warnings.push(format!("dataset {dataset}: runs use {} different protocols", protocols.len()));
        }
        let seeds: std::collections::BTreeSet<u64> = runs.iter().map(|(_, a)| a.config.experiment.seed).collect();
        if seeds.len() > 1 {
            report.warnings.push(format!("dataset {dataset}: runs use different seeds {seeds:?}"));
        }
        let base = runs.iter().find(|(_, a)| a.config.experiment.method.name() == baseline).and_then(|(_, a)| a.result.final_accuracy());
        for (path, a) in &runs {
            let acc = a.result.final_accuracy().unwrap_or(0.0);
            let is_base = a.config.experiment.method.name() == baseline;
            report.rows.push(ReportRow {
                dataset: dataset.clone(),
                run: a.config.name.clone().unwrap_or_else(|| method_label(&a.config.experiment.method)),
                method: a.config.experiment.method.name().into(),
                protocol: protocol_key(a),
                seed: a.config.experiment.seed,
                final_accuracy: acc,
                final_forgetting: a.result.final_forgetting(),
                error_rate: 1.0 - acc,
                rel_error_reduction: if is_base { None } else { base.and_then(|b| relative_error_reduction(b, acc)) },
                source: path.clone(),
            });
        }
    }
    report
}

impl Report {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(["dataset", "run", "method", "seed", "final_accuracy", "final_forgetting", "error_rate", "rel_error_reduction", "source"]);
        for r in &self.rows {
            let _ = w.write_record([
                r.dataset.clone(),
                r.run.clone(),
                r.method.clone(),
                r.seed.to_string(),
                r.final_accuracy.to_string(),
                r.final_forgetting.map(|v| v.to_string()).unwrap_or_default(),
                r.error_rate.to_string(),
                r.rel_error_reduction.map(|v| v.to_string()).unwrap_or_default(),
                r.source.display().to_string(),
            ]);
        }
        w.into_inner().unwrap_or_default()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let mut current: Option<&str> = None;
        for r in &self.rows {
            if current != Some(r.dataset.as_str()) {
                if current.is_some() {
                    s.push('\n');
                }
                let _ = writeln!(s, "### {}\n", r.dataset);
                let _ = writeln!(s, "| run | method | A_T | F_T | Rel. ER |");
                let _ = writeln!(s, "|---|---|---:|---:|---:|");
                current = Some(&r.dataset);
            }
            let _ = writeln!(
                s,
                "| {} | {} | {:.2}% | {} | {} |",
                r.run,
                r.method,
                100.0 * r.final_accuracy,
                r.final_forgetting.map(|v| format!("{:.2}%", 100.0 * v)).unwrap_or_else(|| "-".into()),
                r.rel_error_reduction.map(|v| format!("{:.1}%", 100.0 * v)).unwrap_or_else(|| "-".into()),
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "\nwarning: {w}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_er_arithmetic() {
        // 83.4% → 89.0%: errors 16.6% → 11.0%.
        let r = relative_error_reduction(0.834, 0.89).unwrap();
        assert!((r - (0.166 - 0.11) / 0.166).abs() < 1e-12);
        assert_eq!(relative_error_reduction(1.0, 0.9), None);
        assert_eq!(relative_error_reduction(0.8, 0.8), Some(0.0));
    }

    #[test]
    fn unreadable_results_are_skipped() {
        let rep = build_report(&[PathBuf::from("/nonexistent/result.json")], None);
        assert!(rep.rows.is_empty());
        assert_eq!(rep.warnings.len(), 1);
    }
}
