//! Run directories and the artifacts written into them.

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ranpac_core::accumulator::{Accumulator, Target};
use ranpac_core::feature_store::Dataset;
use ranpac_core::linalg::Matrix;
use ranpac_core::projection::{ProjectionMatrix, ProjectionSpec};
use ranpac_core::protocols::{dil_domain_report, Method, Protocol, RunResult, TargetMode};
use ranpac_core::solver::{solve, DecorrelatedHead};
use serde::{Deserialize, Serialize};

use crate::config::{HeadPrecision, RunConfig};
use crate::error::{AppError, Result};
use crate::store::write_atomic;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "RANPAC_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MAGIC_HEAD: &[u8; 8] = b"PFHEAD01";
pub const MAGIC_PROJECTION: &[u8; 8] = b"PFPROJ01";

pub fn output_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT)),
    }
}

fn sanitize(label: &str) -> String {
    let s: String = label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "run".into()
    } else {
        s
    }
}

/// A run directory that is written under a hidden name and renamed into
/// place on `commit`, so failed runs leave no partial results behind.
pub struct StagedDir {
    staging: PathBuf,
    target: PathBuf,
}

impl StagedDir {
    pub fn create(root: &Path, label: &str) -> Result<Self> {
        fs::create_dir_all(root).map_err(AppError::io(root))?;
        let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
        let base = format!("{stamp}-{}", sanitize(label));
        let mut target = root.join(&base);
        let mut n = 2;
        while target.exists() || root.join(format!(".{}.partial", target.file_name().unwrap().to_string_lossy())).exists() {
            target = root.join(format!("{base}-{n}"));
            n += 1;
        }
        let staging = root.join(format!(".{}.partial", target.file_name().unwrap().to_string_lossy()));
        fs::create_dir_all(&staging).map_err(AppError::io(&staging))?;
        Ok(StagedDir { staging, target })
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.staging.join(name);
        write_atomic(&p, bytes).map_err(AppError::io(p))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| AppError::Data(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn commit(self) -> Result<PathBuf> {
        fs::rename(&self.staging, &self.target).map_err(AppError::io(&self.target))?;
        Ok(self.target.clone())
    }

    pub fn abandon(self) {
        let _ = fs::remove_dir_all(&self.staging);
    }
}

/// Envelope for every JSON artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<C, R> {
    pub tool: String,
    pub version: String,
    pub config: C,
    pub result: R,
}

impl<C, R> Artifact<C, R> {
    pub fn new(config: C, result: R) -> Self {
        Artifact { tool: TOOL.into(), version: VERSION.into(), config, result }
    }
}

pub type RunArtifact = Artifact<RunConfig, RunResult>;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| AppError::Data(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| AppError::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::Data(e.to_string()))
}

/// `after_task,task,accuracy` for the lower triangle of `R` (1-based).
pub fn r_matrix_csv(result: &RunResult) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (t, row) in result.r.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            rows.push(vec![(t + 1).to_string(), (i + 1).to_string(), v.to_string()]);
        }
    }
    to_csv(&["after_task", "task", "accuracy"], &rows)
}

/// Per-task metrics; wall-clock timings are left out so reruns are byte-identical.
pub fn metrics_csv(result: &RunResult) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = (0..result.r.len())
        .map(|t| {
            vec![
                (t + 1).to_string(),
                result.avg_accuracy[t].to_string(),
                fmt_opt(result.avg_forgetting[t]),
                fmt_opt(result.lambdas.get(t).copied().flatten()),
                result.classes_seen.get(t).map(|c| c.to_string()).unwrap_or_default(),
                fmt_opt(result.solve_residuals.get(t).copied().flatten()),
            ]
        })
        .collect();
    to_csv(&["task", "avg_accuracy", "avg_forgetting", "lambda", "classes_seen", "solve_residual"], &rows)
}

pub fn checkpoints_csv(result: &RunResult) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = result
        .checkpoints
        .iter()
        .map(|c| {
            vec![
                c.micro_task.to_string(),
                c.samples_seen.to_string(),
                c.classes_seen.to_string(),
                fmt_opt(c.lambda),
                c.accuracy_all.to_string(),
                c.accuracy_seen.to_string(),
            ]
        })
        .collect();
    to_csv(&["micro_task", "samples_seen", "classes_seen", "lambda", "accuracy_all", "accuracy_seen"], &rows)
}

pub fn domains_csv(result: &RunResult) -> Result<Option<Vec<u8>>> {
    let Some(rep) = dil_domain_report(result) else {
        return Ok(None);
    };
    let mut header = vec!["after_task".to_string()];
    header.extend(rep.names.iter().cloned());
    header.push("macro_mean".into());
    header.push("overall".into());
    let rows: Vec<Vec<String>> = rep
        .per_task
        .iter()
        .enumerate()
        .map(|(t, accs)| {
            let mut r = vec![(t + 1).to_string()];
            r.extend(accs.iter().map(|a| a.to_string()));
            r.push(rep.macro_mean[t].to_string());
            r.push(rep.overall[t].to_string());
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    to_csv(&header, &rows).map(Some)
}

fn protocol_label(p: &Protocol) -> String {
    match p {
        Protocol::Cil { tasks, .. } => format!("CIL, T={tasks}"),
        Protocol::Dil => "DIL".into(),
        Protocol::TaskAgnostic(s) => format!("task-agnostic, {} micro-tasks", s.micro_tasks),
    }
}

pub fn method_label(m: &Method) -> String {
    match m {
        Method::Ranpac { projection, .. } => format!("ranpac (M={}, {:?})", projection.output_dim, projection.activation).to_lowercase(),
        Method::Ncm { projection: Some(p) } | Method::Lda { projection: Some(p), .. } => format!("{} (M={})", m.name(), p.output_dim),
        other => other.name().to_string(),
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

pub fn summary_text(cfg: &RunConfig, result: &RunResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dataset   {} ({})", result.dataset, cfg.dataset.display());
    let _ = writeln!(s, "method    {}", method_label(&cfg.experiment.method));
    let _ = writeln!(s, "protocol  {}", protocol_label(&cfg.experiment.protocol));
    let _ = writeln!(s, "seed      {}", cfg.experiment.seed);
    let _ = writeln!(s, "final A_T {}", result.final_accuracy().map(pct).unwrap_or_else(|| "-".into()));
    let _ = writeln!(s, "final F_T {}", result.final_forgetting().map(pct).unwrap_or_else(|| "-".into()));
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>5}  {:>9}  {:>9}  {:>9}  R[t, 1..t]", "task", "A_t", "F_t", "lambda");
    for t in 0..result.r.len() {
        let row: Vec<String> = result.r[t].iter().map(|v| format!("{:.3}", v)).collect();
        let _ = writeln!(
            s,
            "{:>5}  {:>9}  {:>9}  {:>9}  {}",
            t + 1,
            pct(result.avg_accuracy[t]),
            result.avg_forgetting[t].map(pct).unwrap_or_else(|| "-".into()),
            result.lambdas.get(t).copied().flatten().map(|l| format!("{l:e}")).unwrap_or_else(|| "-".into()),
            row.join(" ")
        );
    }
    if !result.checkpoints.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>10}  {:>8}  {:>7}  {:>9}  {:>9}", "micro_task", "samples", "classes", "acc_all", "acc_seen");
        for c in &result.checkpoints {
            let _ = writeln!(
                s,
                "{:>10}  {:>8}  {:>7}  {:>9}  {:>9}",
                c.micro_task,
                c.samples_seen,
                c.classes_seen,
                pct(c.accuracy_all),
                pct(c.accuracy_seen)
            );
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadMetadata {
    pub method: String,
    pub lambda: f64,
    pub residual: f64,
    pub jitter: f64,
    /// Rows of the stored matrix (`M`, or `L` without a projection).
    pub m: usize,
    /// Columns (`K` one-hot classes or the regression target width).
    pub d: usize,
    pub dtype: String,
    pub target_mode: TargetMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionSpec>,
}

fn projection_spec(cfg: &RunConfig, result: &RunResult, dataset: &Dataset) -> Option<ProjectionSpec> {
    cfg.experiment.method.projection().map(|p| {
        let mut spec = p.resolve(dataset.feature_dim(), cfg.experiment.seed);
        if let Some(seed) = result.seeds.projection {
            spec.seed = seed;
        }
        spec
    })
}

/// Refits the final ridge head on the full train split with the last
/// selected λ. Returns `None` for methods without a ridge head.
pub fn rebuild_head(cfg: &RunConfig, result: &RunResult, dataset: &Dataset) -> Result<Option<(DecorrelatedHead, HeadMetadata)>> {
    if cfg.experiment.method.lambda().is_none() {
        return Ok(None);
    }
    if let Some(cp) = result.checkpoints.last() {
        if cp.samples_seen != dataset.train().len() as u64 {
            return Err(AppError::Config("head export needs a stream that consumes the whole train split".into()));
        }
    }
    let lambda = result
        .lambdas
        .iter()
        .rev()
        .find_map(|l| *l)
        .ok_or_else(|| AppError::Data("run selected no λ".into()))?;
    let spec = projection_spec(cfg, result, dataset);
    let proj = spec.map(ProjectionMatrix::generate).transpose()?;
    let dim = proj.as_ref().map_or(dataset.feature_dim(), |p| p.output_dim());
    let regression = cfg.experiment.target_mode == TargetMode::Regression;
    let mut acc = if regression {
        let t = dataset.targets.as_ref().ok_or_else(|| AppError::Data("regression mode needs targets".into()))?;
        Accumulator::regression(dim, t.cols())
    } else {
        Accumulator::classification(dim, dataset.num_classes())
    };
    let offset = dataset.manifest.split_range(ranpac_core::feature_store::TRAIN_SPLIT).map_or(0, |r| r.start);
    for (i, r) in dataset.train().iter().enumerate() {
        let h = match &proj {
            Some(p) => p.project_f32(&r.features)?,
            None => r.features_f64(),
        };
        match (&dataset.targets, regression) {
            (Some(t), true) => acc.update(&h, Target::Dense(t.row(offset + i)))?,
            _ => acc.update(&h, Target::Class(r.label as usize))?,
        }
    }
    let head = solve(acc.gram(), acc.prototypes(), lambda)?;
    let meta = HeadMetadata {
        method: cfg.experiment.method.name().into(),
        lambda,
        residual: head.diagnostics.residual,
        jitter: head.diagnostics.jitter,
        m: head.input_dim(),
        d: head.output_dim(),
        dtype: match cfg.outputs.head_precision {
            HeadPrecision::F32 => "f32".into(),
            HeadPrecision::F64 => "f64".into(),
        },
        target_mode: cfg.experiment.target_mode,
        projection: spec,
    };
    Ok(Some((head, meta)))
}

/// Magic header followed by the row-major weights.
pub fn head_bytes(weights: &Matrix, precision: HeadPrecision) -> Vec<u8> {
    let width = if precision == HeadPrecision::F32 { 4 } else { 8 };
    let mut out = Vec::with_capacity(8 + weights.as_slice().len() * width);
    out.extend_from_slice(MAGIC_HEAD);
    for &v in weights.as_slice() {
        match precision {
            HeadPrecision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            HeadPrecision::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

/// Magic header followed by `W` as row-major `L × M` f32.
pub fn projection_bytes(p: &ProjectionMatrix) -> Vec<u8> {
    let w = p.weights();
    let mut out = Vec::with_capacity(8 + 4 * w.as_slice().len());
    out.extend_from_slice(MAGIC_PROJECTION);
    for &v in w.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Writes every run artifact into `dir`.
pub fn write_run(dir: &StagedDir, cfg: &RunConfig, result: &RunResult, dataset: &Dataset) -> Result<()> {
    dir.write_json("config.json", cfg)?;
    dir.write_json("result.json", &RunArtifact::new(cfg.clone(), result.clone()))?;
    dir.write("r_matrix.csv", &r_matrix_csv(result)?)?;
    dir.write("metrics.csv", &metrics_csv(result)?)?;
    if !result.checkpoints.is_empty() {
        dir.write("checkpoints.csv", &checkpoints_csv(result)?)?;
    }
    if let Some(d) = domains_csv(result)? {
        dir.write("domains.csv", &d)?;
    }
    dir.write("summary.txt", summary_text(cfg, result).as_bytes())?;
    if cfg.outputs.export_head {
        match rebuild_head(cfg, result, dataset)? {
            Some((head, meta)) => {
                dir.write("head.bin", &head_bytes(&head.weights, cfg.outputs.head_precision))?;
                dir.write_json("head.json", &meta)?;
            }
            None => return Err(AppError::Config(format!("method {} has no ridge head to export", cfg.experiment.method.name()))),
        }
    }
    if cfg.outputs.dump_projection {
        let spec = projection_spec(cfg, result, dataset).ok_or_else(|| AppError::Config("method has no projection to dump".into()))?;
        let p = ProjectionMatrix::generate(spec)?;
        dir.write("projection.bin", &projection_bytes(&p))?;
        dir.write_json("projection.json", &spec)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitized_labels() {
        assert_eq!(sanitize("a b/c"), "a_b_c");
        assert_eq!(sanitize(""), "run");
    }

    #[test]
    fn staged_dir_commits_atomically() {
        let root = tempfile::tempdir().unwrap();
        let a = StagedDir::create(root.path(), "x").unwrap();
        a.write("f.txt", b"hi").unwrap();
        let b = StagedDir::create(root.path(), "x").unwrap();
        let pa = a.commit().unwrap();
        b.abandon();
        assert_eq!(fs::read(pa.join("f.txt")).unwrap(), b"hi");
        let names: Vec<_> = fs::read_dir(root.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn head_bytes_layout() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = head_bytes(&w, HeadPrecision::F32);
        assert_eq!(&b[..8], MAGIC_HEAD);
        assert_eq!(b.len(), 16);
        assert_eq!(f32::from_le_bytes(b[12..16].try_into().unwrap()), 2.0);
        assert_eq!(head_bytes(&w, HeadPrecision::F64).len(), 24);
    }
}
