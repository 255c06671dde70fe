//! Monte-Carlo and analytic checks of the projection theory: inner-product
//! and norm concentration, prototype correlations, similarity histograms and
//! the feature-interaction study.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::accumulator::Accumulator;
use crate::baselines::NcmHead;
use crate::error::{Error, Result};
use crate::feature_store::Dataset;
use crate::linalg::{dot, norm, Matrix};
use crate::projection::{expand_quadratic, quadratic_len, Activation, WeightDistribution};
use crate::protocols::{run, ExperimentConfig, LambdaConfig, Method, NoClock, ProjectionConfig, Protocol, TargetMode};
use crate::rng::{derive_seed, Rng};
use crate::solver::solve;

/// Column `m` of a fresh `W`, scaled by `σ`.
fn draw_column(rng: &mut Rng, dist: WeightDistribution, sigma: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = sigma
            * match dist {
                WeightDistribution::Gaussian => rng.gaussian(),
                WeightDistribution::Bipolar => rng.bipolar(),
            };
    }
}

fn trial_rng(seed: u64, m: usize, trial: usize) -> Rng {
    Rng::new(derive_seed(derive_seed(seed, m as u64), trial as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductConfig {
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub sigma: f64,
    /// Tail threshold on `|z − fᵀf′|` where `z` is the normalized inner product.
    pub epsilon: f64,
    #[serde(default)]
    pub distribution: WeightDistribution,
    /// Pairs `(f, f′)` of equal length `L`.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// `fᵀf′`
    pub expected: f64,
    /// Mean over trials of `(Wᵀf)ᵀ(Wᵀf′) / (Mσ²)`.
    pub mean: f64,
    pub std: f64,
    pub standard_error: f64,
    /// Mean of `|z − fᵀf′|`.
    pub mean_abs_deviation: f64,
    /// Fraction of trials with `|z − fᵀf′| > ε`.
    pub tail_fraction: f64,
}

impl PairStats {
    /// `|mean − fᵀf′|` in units of the standard error.
    pub fn z_score(&self) -> f64 {
        if self.standard_error > 0.0 {
            libm::fabs(self.mean - self.expected) / self.standard_error
        } else if self.mean == self.expected {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub m: usize,
    pub trials: usize,
    pub pairs: Vec<PairStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub sigma: f64,
    pub epsilon: f64,
    pub rows: Vec<ConcentrationRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, libm::sqrt(var))
}

/// Monte-Carlo estimate of `E[(Wᵀf)ᵀ(Wᵀf′)] = Mσ² fᵀf′`. All pairs share
/// the same draws of `W`, generated column by column and never stored.
pub fn inner_product_test(cfg: &InnerProductConfig) -> Result<ConcentrationReport> {
    if !(cfg.sigma > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    if cfg.pairs.is_empty() || cfg.trials < 2 {
        return Err(Error::InvalidParameter("need at least one pair and two trials".into()));
    }
    let l = cfg.pairs[0].0.len();
    if cfg.pairs.iter().any(|(a, b)| a.len() != l || b.len() != l) || l == 0 {
        return Err(Error::InvalidParameter("all vectors must share one positive length".into()));
    }
    let mut col = vec![0.0; l];
    let mut rows = Vec::with_capacity(cfg.m_values.len());
    for &m in &cfg.m_values {
        if m == 0 {
            return Err(Error::InvalidParameter("M must be positive".into()));
        }
        let scale = m as f64 * cfg.sigma * cfg.sigma;
        let mut z: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.trials); cfg.pairs.len()];
        let mut acc = vec![0.0; cfg.pairs.len()];
        for trial in 0..cfg.trials {
            let mut rng = trial_rng(cfg.seed, m, trial);
            acc.fill(0.0);
            for _ in 0..m {
                draw_column(&mut rng, cfg.distribution, cfg.sigma, &mut col);
                for (p, (f, g)) in cfg.pairs.iter().enumerate() {
                    acc[p] += dot(&col, f) * dot(&col, g);
                }
            }
            for p in 0..cfg.pairs.len() {
                z[p].push(acc[p] / scale);
            }
        }
        let pairs = cfg
            .pairs
            .iter()
            .zip(&z)
            .map(|((f, g), zs)| {
                let expected = dot(f, g);
                let (mean, std) = mean_std(zs);
                let devs: Vec<f64> = zs.iter().map(|v| libm::fabs(v - expected)).collect();
                PairStats {
                    expected,
                    mean,
                    std,
                    standard_error: std / libm::sqrt(zs.len() as f64),
                    mean_abs_deviation: devs.iter().sum::<f64>() / devs.len() as f64,
                    tail_fraction: devs.iter().filter(|&&d| d > cfg.epsilon).count() as f64 / devs.len() as f64,
                }
            })
            .collect();
        rows.push(ConcentrationRow { m, trials: cfg.trials, pairs });
    }
    Ok(ConcentrationReport { sigma: cfg.sigma, epsilon: cfg.epsilon, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub sigma: f64,
    /// Absolute tail threshold is `ε σ²`; the relative tail uses `ε` directly.
    pub epsilon: f64,
    #[serde(default)]
    pub distribution: WeightDistribution,
    pub f: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub m: usize,
    pub trials: usize,
    /// Mean of `‖Wᵀf‖`.
    pub mean: f64,
    pub std: f64,
    /// `std / mean`
    pub relative_std: f64,
    /// Fraction with `|‖Wᵀf‖ − mean| > εσ²`.
    pub tail_fraction: f64,
    /// Fraction with `|‖Wᵀf‖ / mean − 1| > ε`.
    pub relative_tail_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub sigma: f64,
    pub epsilon: f64,
    pub rows: Vec<NormRow>,
}

/// Dispersion of `‖Wᵀf‖` across draws of `W`, for each `M`.
pub fn norm_concentration_test(cfg: &NormConfig) -> Result<NormReport> {
    if !(cfg.sigma > 0.0) || cfg.trials < 2 || cfg.f.is_empty() {
        return Err(Error::InvalidParameter("need sigma > 0, two trials and a non-empty f".into()));
    }
    let mut col = vec![0.0; cfg.f.len()];
    let mut rows = Vec::with_capacity(cfg.m_values.len());
    for &m in &cfg.m_values {
        if m == 0 {
            return Err(Error::InvalidParameter("M must be positive".into()));
        }
        let norms: Vec<f64> = (0..cfg.trials)
            .map(|trial| {
                let mut rng = trial_rng(cfg.seed, m, trial);
                let mut s = 0.0;
                for _ in 0..m {
                    draw_column(&mut rng, cfg.distribution, cfg.sigma, &mut col);
                    let p = dot(&col, &cfg.f);
                    s += p * p;
                }
                libm::sqrt(s)
            })
            .collect();
        let (mean, std) = mean_std(&norms);
        let n = norms.len() as f64;
        let thr = cfg.epsilon * cfg.sigma * cfg.sigma;
        rows.push(NormRow {
            m,
            trials: cfg.trials,
            mean,
            std,
            relative_std: if mean > 0.0 { std / mean } else { 0.0 },
            tail_fraction: norms.iter().filter(|&&v| libm::fabs(v - mean) > thr).count() as f64 / n,
            relative_tail_fraction: norms.iter().filter(|&&v| mean > 0.0 && libm::fabs(v / mean - 1.0) > cfg.epsilon).count() as f64
                / n,
        });
    }
    Ok(NormReport { sigma: cfg.sigma, epsilon: cfg.epsilon, rows })
}

/// Pearson correlation of two equal-length vectors.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(sab / libm::sqrt(saa * sbb))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrototypeKind {
    /// Class means `c̄_y`.
    Ncm,
    /// Columns of `(G + λI)⁻¹C`.
    Decorrelated { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `K × K` Pearson coefficients.
    pub matrix: Vec<Vec<f64>>,
    pub mean_off_diagonal: f64,
}

/// Prototypes as rows, one per class.
pub fn prototypes(acc: &Accumulator, kind: PrototypeKind) -> Result<Matrix> {
    match kind {
        PrototypeKind::Ncm => acc.class_means(),
        PrototypeKind::Decorrelated { lambda } => Ok(solve(acc.gram(), acc.prototypes(), lambda)?.weights.transpose()),
    }
}

/// Pairwise Pearson coefficients between prototype rows.
pub fn prototype_correlation(protos: &Matrix) -> Result<CorrelationReport> {
    let k = protos.rows();
    if k < 2 {
        return Err(Error::InvalidParameter("need at least two prototypes".into()));
    }
    let mut matrix = vec![vec![1.0; k]; k];
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let r = pearson(protos.row(i), protos.row(j))?;
            matrix[i][j] = r;
            matrix[j][i] = r;
            total += 2.0 * r;
        }
    }
    Ok(CorrelationReport { matrix, mean_off_diagonal: total / (k * (k - 1)) as f64 })
}

pub fn prototype_correlation_report(acc: &Accumulator, kind: PrototypeKind) -> Result<CorrelationReport> {
    if acc.class_counts().iter().filter(|&&n| n >= 2).count() < 2 {
        return Err(Error::InvalidParameter("need two classes with at least two samples".into()));
    }
    prototype_correlation(&prototypes(acc, kind)?)
}

pub const HISTOGRAM_BINS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    /// `HISTOGRAM_BINS + 1` edges spanning the pooled range.
    pub edges: Vec<f64>,
    /// Normalized to sum to one.
    pub true_class: Vec<f64>,
    pub inter_class: Vec<f64>,
    /// `Σ min(p, q)` over bins: 0 for disjoint, 1 for identical histograms.
    pub overlap: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub true_count: usize,
    pub inter_count: usize,
}

fn histogram(values: &[f64], lo: f64, width: f64) -> Vec<f64> {
    let mut h = vec![0.0; HISTOGRAM_BINS];
    if values.is_empty() {
        return h;
    }
    for &v in values {
        let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
        h[b.min(HISTOGRAM_BINS - 1)] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Kolmogorov–Smirnov two-sample statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    if a.is_empty() || b.is_empty() {
        return (0.0, 1.0);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(libm::fabs(i as f64 / na - j as f64 / nb));
    }
    let ne = na * nb / (na + nb);
    let sq = libm::sqrt(ne);
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * libm::exp(-2.0 * kf * kf * lambda * lambda);
        sum += term;
        if libm::fabs(term) < 1e-12 * libm::fabs(sum) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Histograms of own-class and other-class similarities from per-sample
/// score vectors.
pub fn similarity_histogram(scores: &[Vec<f64>], labels: &[usize]) -> Result<HistogramReport> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: labels.len() });
    }
    let mut own = Vec::with_capacity(scores.len());
    let mut other = Vec::new();
    for (s, &y) in scores.iter().zip(labels) {
        if y >= s.len() {
            return Err(Error::LabelOutOfRange { label: y, classes: s.len() });
        }
        for (c, &v) in s.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            if c == y {
                own.push(v);
            } else {
                other.push(v);
            }
        }
    }
    let lo = own.iter().chain(&other).copied().fold(f64::INFINITY, f64::min);
    let hi = own.iter().chain(&other).copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(Error::InvalidParameter("no finite similarities".into()));
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges = (0..=HISTOGRAM_BINS).map(|i| lo + width * i as f64).collect();
    let true_class = histogram(&own, lo, width);
    let inter_class = histogram(&other, lo, width);
    let overlap = true_class.iter().zip(&inter_class).map(|(a, b)| a.min(*b)).sum();
    let (ks_statistic, ks_p_value) = ks_two_sample(&own, &other);
    Ok(HistogramReport {
        edges,
        true_class,
        inter_class,
        overlap,
        ks_statistic,
        ks_p_value,
        true_count: own.len(),
        inter_count: other.len(),
    })
}

/// Scores every vector with the requested head built from `acc`, then
/// histograms own- versus other-class similarities. NCM uses cosine
/// similarity; the decorrelated head uses `hᵀ(G + λI)⁻¹c_y`.
pub fn similarity_histogram_report(acc: &Accumulator, vectors: &Matrix, labels: &[usize], kind: PrototypeKind) -> Result<HistogramReport> {
    let mut scores = Vec::with_capacity(vectors.rows());
    match kind {
        PrototypeKind::Ncm => {
            let head = NcmHead::from_accumulator(acc)?;
            for r in 0..vectors.rows() {
                scores.push(head.score(vectors.row(r))?);
            }
        }
        PrototypeKind::Decorrelated { lambda } => {
            let head = solve(acc.gram(), acc.prototypes(), lambda)?;
            for r in 0..vectors.rows() {
                scores.push(head.score(vectors.row(r))?);
            }
        }
    }
    similarity_histogram(&scores, labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    pub m_values: Vec<usize>,
    #[serde(default)]
    pub lambda: LambdaConfig,
    /// CIL task count for each variant's run.
    #[serde(default = "one")]
    pub tasks: usize,
    /// Only the first `truncate` features are used.
    #[serde(default = "hundred")]
    pub truncate: usize,
    #[serde(default)]
    pub distribution: WeightDistribution,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn hundred() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    /// `raw`, `pairwise`, `rp_relu`, `rp_square` or `rp_identity`.
    pub variant: String,
    pub m: Option<usize>,
    /// Width of the vectors the head was trained on.
    pub dim: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub rows: Vec<InteractionRow>,
}

impl InteractionReport {
    pub fn get(&self, variant: &str, m: Option<usize>) -> Option<f64> {
        self.rows.iter().find(|r| r.variant == variant && r.m == m).map(|r| r.accuracy)
    }
}

/// Ridge heads on raw features, the exact degree-two expansion
/// `[1, f, f_i f_j]`, and random
/// projections with and without a nonlinearity.
pub fn interaction_study(dataset: &Dataset, cfg: &InteractionConfig) -> Result<InteractionReport> {
    let l = dataset.feature_dim().min(cfg.truncate.max(1));
    let truncated = dataset.map_features(l, |f| f[..l].to_vec())?;
    let base = |method: Method| ExperimentConfig {
        protocol: Protocol::Cil { tasks: cfg.tasks, seed: None },
        method,
        target_mode: TargetMode::OneHot,
        seed: cfg.seed,
    };
    let accuracy = |ds: &Dataset, method: Method| -> Result<f64> {
        Ok(run(ds, &base(method), &NoClock)?.final_accuracy().unwrap_or(0.0))
    };
    let mut rows = Vec::new();
    rows.push(InteractionRow { variant: "raw".into(), m: None, dim: l, accuracy: accuracy(&truncated, Method::GramNoRp { lambda: cfg.lambda.clone() })? });
    let pairwise = truncated.map_features(quadratic_len(l), |f| {
        let v: Vec<f64> = f.iter().map(|&x| x as f64).collect();
        expand_quadratic(&v).into_iter().map(|x| x as f32).collect()
    })?;
    rows.push(InteractionRow {
        variant: "pairwise".into(),
        m: None,
        dim: quadratic_len(l),
        accuracy: accuracy(&pairwise, Method::GramNoRp { lambda: cfg.lambda.clone() })?,
    });
    for &m in &cfg.m_values {
        for (name, act) in [("rp_relu", Activation::Relu), ("rp_identity", Activation::Identity)] {
            let projection = ProjectionConfig { output_dim: m, distribution: cfg.distribution, activation: act, seed: None };
            let acc = accuracy(&truncated, Method::Ranpac { projection, lambda: cfg.lambda.clone() })?;
            rows.push(InteractionRow { variant: name.into(), m: Some(m), dim: m, accuracy: acc });
        }
    }
    Ok(InteractionReport { rows })
}

/// Norm of a vector, re-exported for report consumers.
pub fn vector_norm(v: &[f64]) -> f64 {
    norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accumulator::Target;

    #[test]
    fn orthogonal_pair_has_zero_mean() {
        let cfg = InnerProductConfig {
            m_values: vec![16],
            trials: 400,
            sigma: 1.0,
            epsilon: 0.5,
            distribution: WeightDistribution::Gaussian,
            pairs: vec![(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0])],
            seed: 1,
        };
        let rep = inner_product_test(&cfg).unwrap();
        let s = &rep.rows[0].pairs[0];
        assert_eq!(s.expected, 0.0);
        assert!(s.z_score() < 3.0, "{s:?}");
    }

    #[test]
    fn unit_self_product_is_m() {
        let cfg = InnerProductConfig {
            m_values: vec![32],
            trials: 500,
            sigma: 1.0,
            epsilon: 0.5,
            distribution: WeightDistribution::Bipolar,
            pairs: vec![(vec![0.6, 0.8], vec![0.6, 0.8])],
            seed: 4,
        };
        let rep = inner_product_test(&cfg).unwrap();
        let s = &rep.rows[0].pairs[0];
        // Unnormalized mean is M·mean.
        assert!(libm::fabs(s.mean * 32.0 - 32.0) < 3.0 * s.standard_error * 32.0, "{s:?}");
    }

    #[test]
    fn sigma_scales_norms_exactly() {
        let base = NormConfig {
            m_values: vec![8],
            trials: 20,
            sigma: 1.0,
            epsilon: 0.1,
            distribution: WeightDistribution::Gaussian,
            f: vec![0.3, -1.0, 2.0],
            seed: 3,
        };
        let a = norm_concentration_test(&base).unwrap();
        let b = norm_concentration_test(&NormConfig { sigma: 2.0, ..base }).unwrap();
        assert_eq!(b.rows[0].mean, 2.0 * a.rows[0].mean);
        assert_eq!(b.rows[0].std, 2.0 * a.rows[0].std);
    }

    #[test]
    fn pearson_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedSimilarity));
    }

    #[test]
    fn identical_prototypes_correlate_fully() {
        let protos = Matrix::from_rows(&[vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 4.0]]).unwrap();
        let rep = prototype_correlation(&protos).unwrap();
        assert!((rep.mean_off_diagonal - 1.0).abs() < 1e-15);
        let constant = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(prototype_correlation(&constant), Err(Error::UndefinedSimilarity));
    }

    #[test]
    fn separated_histograms_do_not_overlap() {
        let scores = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.95, 0.05], vec![0.02, 0.97]];
        let rep = similarity_histogram(&scores, &[0, 1, 0, 1]).unwrap();
        assert_eq!(rep.overlap, 0.0);
        assert_eq!(rep.ks_statistic, 1.0);
        assert!((rep.true_class.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(rep.edges.len(), HISTOGRAM_BINS + 1);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = (0..200).map(|i| i as f64 + 500.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert_eq!(d, 1.0);
        assert!(p < 1e-10);
    }

    #[test]
    fn correlation_report_needs_samples() {
        let mut acc = Accumulator::classification(3, 2);
        acc.update(&[1.0, 0.0, 2.0], Target::Class(0)).unwrap();
        acc.update(&[0.0, 1.0, 1.0], Target::Class(1)).unwrap();
        assert!(prototype_correlation_report(&acc, PrototypeKind::Ncm).is_err());
    }
}
