//! Labeled feature datasets, task splits and synthetic generators.
//!
//! Only the in-memory side lives here; the on-disk format is handled by the
//! `ranpac` crate. Records carry 32-bit features (the width backbones
//! emit); all arithmetic downstream is 64-bit.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

pub const TRAIN_SPLIT: &str = "train";
pub const VAL_SPLIT: &str = "val";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub features: Vec<f32>,
    pub label: u32,
    pub domain_id: Option<u32>,
    pub sample_id: u64,
}

impl FeatureRecord {
    pub fn features_f64(&self) -> Vec<f64> {
        self.features.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCount {
    pub name: String,
    pub count: u64,
}

/// Describes a stored dataset. Records are laid out split by split in the
/// order of `splits`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub splits: Vec<SplitCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domains: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_dim: Option<usize>,
    pub dtype: String,
    pub endianness: String,
    pub format_version: u32,
}

impl DatasetManifest {
    pub const DTYPE: &'static str = "f32";
    pub const ENDIANNESS: &'static str = "little";
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(name: &str, feature_dim: usize, num_classes: usize) -> Self {
        DatasetManifest {
            name: name.to_string(),
            feature_dim,
            num_classes,
            splits: Vec::new(),
            class_names: None,
            domains: None,
            target_dim: None,
            dtype: Self::DTYPE.to_string(),
            endianness: Self::ENDIANNESS.to_string(),
            format_version: Self::FORMAT_VERSION,
        }
    }

    pub fn total_samples(&self) -> u64 {
        self.splits.iter().map(|s| s.count).sum()
    }

    /// Index range of a named split within the record sequence.
    pub fn split_range(&self, name: &str) -> Option<core::ops::Range<usize>> {
        let mut start = 0usize;
        for s in &self.splits {
            let end = start + s.count as usize;
            if s.name == name {
                return Some(start..end);
            }
            start = end;
        }
        None
    }
}

/// Checks one record against the manifest dimensions.
pub fn validate_record(rec: &FeatureRecord, dim: usize, classes: usize, position: usize) -> Result<()> {
    if rec.features.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: rec.features.len() });
    }
    if let Some(idx) = rec.features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { sample: position, index: idx });
    }
    if rec.label as usize >= classes {
        return Err(Error::LabelOutOfRange { label: rec.label as usize, classes });
    }
    Ok(())
}

/// An in-memory dataset: manifest, records and optional regression targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<FeatureRecord>,
    /// `N × D` regression targets, row `i` belongs to `records[i]`.
    pub targets: Option<Matrix>,
    by_id: BTreeMap<u64, usize>,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, records: Vec<FeatureRecord>, targets: Option<Matrix>) -> Result<Self> {
        if manifest.total_samples() as usize != records.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "manifest declares {} samples, got {}",
                manifest.total_samples(),
                records.len()
            )));
        }
        let mut by_id = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            validate_record(r, manifest.feature_dim, manifest.num_classes, i)?;
            if by_id.insert(r.sample_id, i).is_some() {
                return Err(Error::InvalidParameter(alloc::format!("duplicate sample id {}", r.sample_id)));
            }
            if let (Some(d), Some(domains)) = (r.domain_id, &manifest.domains) {
                if d as usize >= domains.len() {
                    return Err(Error::InvalidParameter(alloc::format!("domain id {d} out of range")));
                }
            }
        }
        if let Some(t) = &targets {
            if t.rows() != records.len() {
                return Err(Error::DimensionMismatch { expected: records.len(), found: t.rows() });
            }
            if let Some(d) = manifest.target_dim {
                if t.cols() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: t.cols() });
                }
            }
        }
        Ok(Dataset { manifest, records, targets, by_id })
    }

    pub fn feature_dim(&self) -> usize {
        self.manifest.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    pub fn index_of(&self, sample_id: u64) -> Option<usize> {
        self.by_id.get(&sample_id).copied()
    }

    pub fn record(&self, sample_id: u64) -> Option<&FeatureRecord> {
        self.index_of(sample_id).map(|i| &self.records[i])
    }

    pub fn split(&self, name: &str) -> &[FeatureRecord] {
        match self.manifest.split_range(name) {
            Some(r) => &self.records[r],
            None => &[],
        }
    }

    pub fn train(&self) -> &[FeatureRecord] {
        self.split(TRAIN_SPLIT)
    }

    pub fn val(&self) -> &[FeatureRecord] {
        self.split(VAL_SPLIT)
    }

    /// Applies `map` to every feature vector, producing a dataset of a new width.
    pub fn map_features<F>(&self, new_dim: usize, mut map: F) -> Result<Dataset>
    where
        F: FnMut(&[f32]) -> Vec<f32>,
    {
        let mut manifest = self.manifest.clone();
        manifest.feature_dim = new_dim;
        let records = self
            .records
            .iter()
            .map(|r| FeatureRecord { features: map(&r.features), ..r.clone() })
            .collect();
        Dataset::new(manifest, records, self.targets.clone())
    }
}

/// One stage of a continual-learning stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAssignment {
    /// Classes introduced by this task (CIL) or present in it (DIL).
    pub classes: Vec<u32>,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub domain: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub tasks: Vec<TaskAssignment>,
    pub seed: Option<u64>,
}

impl TaskSplit {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }
}

/// Class-group sizes for a CIL split of `classes` into `tasks` groups.
///
/// Later tasks get `ceil(K/T)` classes and the first task takes what is
/// left (K=196, T=10 gives 16 then 9×20). When that would leave the first
/// task empty, later tasks get `floor(K/T)` and the first absorbs the rest.
pub fn cil_group_sizes(classes: usize, tasks: usize) -> Result<Vec<usize>> {
    if tasks == 0 || tasks > classes {
        return Err(Error::InfeasibleSplit { classes, tasks });
    }
    let ceil = classes.div_ceil(tasks);
    let per = if classes > (tasks - 1) * ceil { ceil } else { classes / tasks };
    let first = classes - (tasks - 1) * per;
    let mut sizes = vec![per; tasks];
    sizes[0] = first;
    Ok(sizes)
}

/// Class-incremental split: shuffle classes with `seed`, cut into contiguous
/// groups, assign samples by class.
pub fn split_cil(dataset: &Dataset, tasks: usize, seed: u64) -> Result<TaskSplit> {
    let k = dataset.num_classes();
    let sizes = cil_group_sizes(k, tasks)?;
    let mut order: Vec<u32> = (0..k as u32).collect();
    Rng::new(seed).shuffle(&mut order);

    let mut task_of_class = vec![0usize; k];
    let mut groups = Vec::with_capacity(tasks);
    let mut start = 0;
    for (t, &size) in sizes.iter().enumerate() {
        let group: Vec<u32> = order[start..start + size].to_vec();
        for &c in &group {
            task_of_class[c as usize] = t;
        }
        groups.push(group);
        start += size;
    }
    let mut out: Vec<TaskAssignment> = groups
        .into_iter()
        .map(|classes| TaskAssignment { classes, train: Vec::new(), val: Vec::new(), domain: None })
        .collect();
    for r in dataset.train() {
        out[task_of_class[r.label as usize]].train.push(r.sample_id);
    }
    for r in dataset.val() {
        out[task_of_class[r.label as usize]].val.push(r.sample_id);
    }
    Ok(TaskSplit { tasks: out, seed: Some(seed) })
}

/// Domain-incremental split: one task per declared domain, in manifest order.
pub fn split_dil(dataset: &Dataset) -> Result<TaskSplit> {
    let domains = dataset.manifest.domains.as_ref().ok_or(Error::MissingDomains)?;
    if domains.is_empty() {
        return Err(Error::MissingDomains);
    }
    let mut out: Vec<TaskAssignment> = (0..domains.len())
        .map(|d| TaskAssignment { classes: Vec::new(), train: Vec::new(), val: Vec::new(), domain: Some(d as u32) })
        .collect();
    for r in dataset.train() {
        let d = r.domain_id.ok_or(Error::MissingDomains)? as usize;
        out[d].train.push(r.sample_id);
        if !out[d].classes.contains(&r.label) {
            out[d].classes.push(r.label);
        }
    }
    for r in dataset.val() {
        let d = r.domain_id.ok_or(Error::MissingDomains)? as usize;
        out[d].val.push(r.sample_id);
    }
    for t in &mut out {
        t.classes.sort_unstable();
    }
    Ok(TaskSplit { tasks: out, seed: None })
}

/// Within-class structure of synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    Isotropic,
    /// Shared mixing plus a shared offset; `rho` in `[0, 1)` sets how
    /// strongly class prototypes correlate.
    Anisotropic { rho: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub mean_scale: f64,
    pub covariance: CovarianceKind,
    /// Number of domains; each extra domain permutes the feature axes.
    #[serde(default = "one")]
    pub domains: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl SynthSpec {
    pub fn isotropic(classes: usize, dim: usize, per_class: usize, mean_scale: f64, seed: u64) -> Self {
        SynthSpec {
            classes,
            dim,
            train_per_class: per_class,
            val_per_class: per_class,
            mean_scale,
            covariance: CovarianceKind::Isotropic,
            domains: 1,
            seed,
        }
    }

    pub fn anisotropic(classes: usize, dim: usize, per_class: usize, mean_scale: f64, rho: f64, seed: u64) -> Self {
        SynthSpec { covariance: CovarianceKind::Anisotropic { rho }, ..Self::isotropic(classes, dim, per_class, mean_scale, seed) }
    }
}

/// Shared transform applied to every latent sample `μ_y + z`.
struct Mixing {
    matrix: Option<Matrix>,
    offset: Vec<f64>,
}

impl Mixing {
    fn build(spec: &SynthSpec, rng: &mut Rng) -> Result<Mixing> {
        let l = spec.dim;
        match spec.covariance {
            CovarianceKind::Isotropic => Ok(Mixing { matrix: None, offset: vec![0.0; l] }),
            CovarianceKind::Anisotropic { rho } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::InvalidParameter(alloc::format!("rho = {rho} outside [0, 1)")));
                }
                // A = sqrt(1-ρ) I + sqrt(ρ)·γ·U Uᵀ with a low-rank random U.
                let rank = (l / 8).max(1);
                let gamma = 4.0;
                let scale = 1.0 / libm::sqrt(l as f64);
                let u: Vec<f64> = (0..l * rank).map(|_| rng.gaussian() * scale).collect();
                let mut a = Matrix::zeros(l, l);
                let s_id = libm::sqrt(1.0 - rho);
                let s_lr = libm::sqrt(rho) * gamma;
                for i in 0..l {
                    for j in 0..l {
                        let mut v = 0.0;
                        for r in 0..rank {
                            v += u[i * rank + r] * u[j * rank + r];
                        }
                        let id = if i == j { s_id } else { 0.0 };
                        a.set(i, j, id + s_lr * v);
                    }
                }
                // Offset energy = ρ/(1-ρ) · E‖A μ‖², so raw prototypes share
                // roughly a fraction ρ of their energy.
                let mean_energy = spec.mean_scale * spec.mean_scale * { let fnorm = a.frobenius_norm(); fnorm * fnorm };
                let dir: Vec<f64> = (0..l).map(|_| rng.gaussian()).collect();
                let dir_norm = crate::linalg::norm(&dir);
                let target = libm::sqrt(rho / (1.0 - rho) * mean_energy);
                let offset = dir.iter().map(|v| v / dir_norm * target).collect();
                Ok(Mixing { matrix: Some(a), offset })
            }
        }
    }

    fn apply(&self, latent: &[f64]) -> Vec<f64> {
        let mut out = match &self.matrix {
            Some(a) => a.mul_vec(latent).expect("mixing dims"),
            None => latent.to_vec(),
        };
        for (o, b) in out.iter_mut().zip(&self.offset) {
            *o += b;
        }
        out
    }
}

/// Gaussian class clusters, deterministic in `spec.seed`.
///
/// Records are ordered train then val; within a split by domain, class,
/// then sample. Sample ids equal record positions.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    if spec.classes < 2 || spec.dim < 2 {
        return Err(Error::InvalidParameter("synthetic data needs K >= 2 and L >= 2".to_string()));
    }
    if spec.domains == 0 {
        return Err(Error::InvalidParameter("domains must be >= 1".to_string()));
    }
    let l = spec.dim;
    let mut rng = Rng::new(spec.seed);
    let mixing = Mixing::build(spec, &mut rng)?;
    let means: Vec<Vec<f64>> =
        (0..spec.classes).map(|_| (0..l).map(|_| rng.gaussian() * spec.mean_scale).collect()).collect();
    let perms: Vec<Vec<usize>> = (0..spec.domains)
        .map(|d| {
            let mut p: Vec<usize> = (0..l).collect();
            if d > 0 {
                rng.shuffle(&mut p);
            }
            p
        })
        .collect();

    let mut records = Vec::new();
    for per_class in [spec.train_per_class, spec.val_per_class] {
        for (d, perm) in perms.iter().enumerate() {
            for (c, mean) in means.iter().enumerate() {
                for _ in 0..per_class {
                    let latent: Vec<f64> = mean.iter().map(|m| m + rng.gaussian()).collect();
                    let mixed = mixing.apply(&latent);
                    let features = perm.iter().map(|&p| mixed[p] as f32).collect();
                    let sample_id = records.len() as u64;
                    records.push(FeatureRecord {
                        features,
                        label: c as u32,
                        domain_id: (spec.domains > 1).then_some(d as u32),
                        sample_id,
                    });
                }
            }
        }
    }
    let mut manifest = DatasetManifest::new("synthetic", l, spec.classes);
    let per_split = |n: usize| (n * spec.classes * spec.domains) as u64;
    manifest.splits = vec![
        SplitCount { name: TRAIN_SPLIT.to_string(), count: per_split(spec.train_per_class) },
        SplitCount { name: VAL_SPLIT.to_string(), count: per_split(spec.val_per_class) },
    ];
    if spec.domains > 1 {
        manifest.domains = Some((0..spec.domains).map(|d| alloc::format!("domain{d}")).collect());
    }
    Dataset::new(manifest, records, None)
}

/// Two-class XOR data: the label is `x0·x1 > 0`, so only the product of the
/// first two features is informative. Remaining features are noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XorSpec {
    pub noise_dims: usize,
    pub noise_std: f64,
    /// Points with `|x0|` or `|x1|` below this are rejected.
    pub margin: f64,
    pub train: usize,
    pub val: usize,
    pub seed: u64,
}

pub fn synth_xor(spec: &XorSpec) -> Result<Dataset> {
    if !(0.0..1.0).contains(&spec.margin) {
        return Err(Error::InvalidParameter("margin must be in [0, 1)".to_string()));
    }
    let l = 2 + spec.noise_dims;
    let mut rng = Rng::new(spec.seed);
    let mut records = Vec::with_capacity(spec.train + spec.val);
    for _ in 0..spec.train + spec.val {
        let mut draw = || loop {
            let v = 2.0 * rng.uniform() - 1.0;
            if libm::fabs(v) >= spec.margin {
                return v;
            }
        };
        let x0 = draw();
        let x1 = draw();
        let mut features = vec![x0 as f32, x1 as f32];
        features.extend((0..spec.noise_dims).map(|_| (rng.gaussian() * spec.noise_std) as f32));
        let sample_id = records.len() as u64;
        records.push(FeatureRecord { features, label: u32::from(x0 * x1 > 0.0), domain_id: None, sample_id });
    }
    let mut manifest = DatasetManifest::new("xor", l, 2);
    manifest.splits = vec![
        SplitCount { name: TRAIN_SPLIT.to_string(), count: spec.train as u64 },
        SplitCount { name: VAL_SPLIT.to_string(), count: spec.val as u64 },
    ];
    Dataset::new(manifest, records, None)
}
