//! Theory reports driven from JSON configs.

use std::path::PathBuf;

use ranpac_core::accumulator::{Accumulator, Target};
use ranpac_core::feature_store::Dataset;
use ranpac_core::linalg::{norm, Matrix};
use ranpac_core::projection::{ProjectionMatrix, WeightDistribution};
use ranpac_core::protocols::ProjectionConfig;
use ranpac_core::rng::{stream, Rng};
use ranpac_core::theory::{
    inner_product_test, interaction_study, norm_concentration_test, prototype_correlation_report, similarity_histogram_report,
    ConcentrationReport, CorrelationReport, HistogramReport, InnerProductConfig, InteractionConfig, InteractionReport, NormConfig,
    NormReport, PrototypeKind,
};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::output::StagedDir;
use crate::store::load_dataset;

fn default_pairs() -> usize {
    5
}

fn default_trials() -> usize {
    2000
}

fn default_sigma() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TheoryConfig {
    /// Random unit pairs `(f, f′)` of length `l`.
    InnerProduct {
        l: usize,
        #[serde(default = "default_pairs")]
        pairs: usize,
        m_values: Vec<usize>,
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        epsilon: f64,
        #[serde(default)]
        distribution: WeightDistribution,
        #[serde(default)]
        seed: u64,
    },
    /// A random unit `f` of length `l`.
    Norm {
        l: usize,
        m_values: Vec<usize>,
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        epsilon: f64,
        #[serde(default)]
        distribution: WeightDistribution,
        #[serde(default)]
        seed: u64,
    },
    /// Prototype correlations, NCM versus decorrelated.
    Correlation {
        dataset: PathBuf,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        projection: Option<ProjectionConfig>,
        #[serde(default)]
        seed: u64,
    },
    /// Own- versus other-class similarity histograms on the val split.
    Histogram {
        dataset: PathBuf,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        projection: Option<ProjectionConfig>,
        #[serde(default)]
        seed: u64,
    },
    Interaction {
        dataset: PathBuf,
        #[serde(flatten)]
        study: InteractionConfig,
    },
}

impl TheoryConfig {
    pub fn label(&self) -> &'static str {
        match self {
            TheoryConfig::InnerProduct { .. } => "inner-product",
            TheoryConfig::Norm { .. } => "norm",
            TheoryConfig::Correlation { .. } => "correlation",
            TheoryConfig::Histogram { .. } => "histogram",
            TheoryConfig::Interaction { .. } => "interaction",
        }
    }

    pub fn resolve_paths(&mut self, config_path: &std::path::Path) {
        match self {
            TheoryConfig::Correlation { dataset, .. } | TheoryConfig::Histogram { dataset, .. } | TheoryConfig::Interaction { dataset, .. } => {
                *dataset = crate::config::resolve_relative(config_path, dataset);
            }
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TheoryReport {
    InnerProduct(ConcentrationReport),
    Norm(NormReport),
    Correlation { ncm: CorrelationReport, decorrelated: CorrelationReport },
    Histogram { ncm: HistogramReport, decorrelated: HistogramReport },
    Interaction(InteractionReport),
}

fn unit_vector(rng: &mut Rng, l: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..l).map(|_| rng.gaussian()).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn project_all(dataset: &Dataset, projection: &Option<ProjectionConfig>, seed: u64, split: &str) -> Result<(Matrix, Vec<usize>)> {
    let proj = projection.as_ref().map(|p| ProjectionMatrix::generate(p.resolve(dataset.feature_dim(), seed))).transpose()?;
    let recs = dataset.split(split);
    let dim = proj.as_ref().map_or(dataset.feature_dim(), |p| p.output_dim());
    let mut m = Matrix::zeros(recs.len(), dim);
    for (i, r) in recs.iter().enumerate() {
        let h = match &proj {
            Some(p) => p.project_f32(&r.features)?,
            None => r.features_f64(),
        };
        m.row_mut(i).copy_from_slice(&h);
    }
    Ok((m, recs.iter().map(|r| r.label as usize).collect()))
}

fn accumulate(vectors: &Matrix, labels: &[usize], classes: usize) -> Result<Accumulator> {
    let mut acc = Accumulator::classification(vectors.cols(), classes);
    for (i, &y) in labels.iter().enumerate() {
        acc.update(vectors.row(i), Target::Class(y))?;
    }
    Ok(acc)
}

pub fn run_theory(cfg: &TheoryConfig) -> Result<TheoryReport> {
    Ok(match cfg {
        TheoryConfig::InnerProduct { l, pairs, m_values, trials, sigma, epsilon, distribution, seed } => {
            let mut rng = Rng::derived(*seed, stream::THEORY);
            let pairs = (0..*pairs).map(|_| (unit_vector(&mut rng, *l), unit_vector(&mut rng, *l))).collect();
            let c = InnerProductConfig {
                m_values: m_values.clone(),
                trials: *trials,
                sigma: *sigma,
                epsilon: *epsilon,
                distribution: *distribution,
                pairs,
                seed: *seed,
            };
            TheoryReport::InnerProduct(inner_product_test(&c)?)
        }
        TheoryConfig::Norm { l, m_values, trials, sigma, epsilon, distribution, seed } => {
            let mut rng = Rng::derived(*seed, stream::THEORY);
            let c = NormConfig {
                m_values: m_values.clone(),
                trials: *trials,
                sigma: *sigma,
                epsilon: *epsilon,
                distribution: *distribution,
                f: unit_vector(&mut rng, *l),
                seed: *seed,
            };
            TheoryReport::Norm(norm_concentration_test(&c)?)
        }
        TheoryConfig::Correlation { dataset, lambda, projection, seed } => {
            let ds = load_dataset(dataset)?;
            let (v, y) = project_all(&ds, projection, *seed, ranpac_core::feature_store::TRAIN_SPLIT)?;
            let acc = accumulate(&v, &y, ds.num_classes())?;
            TheoryReport::Correlation {
                ncm: prototype_correlation_report(&acc, PrototypeKind::Ncm)?,
                decorrelated: prototype_correlation_report(&acc, PrototypeKind::Decorrelated { lambda: *lambda })?,
            }
        }
        TheoryConfig::Histogram { dataset, lambda, projection, seed } => {
            let ds = load_dataset(dataset)?;
            let (v, y) = project_all(&ds, projection, *seed, ranpac_core::feature_store::TRAIN_SPLIT)?;
            let acc = accumulate(&v, &y, ds.num_classes())?;
            let (val, labels) = project_all(&ds, projection, *seed, ranpac_core::feature_store::VAL_SPLIT)?;
            TheoryReport::Histogram {
                ncm: similarity_histogram_report(&acc, &val, &labels, PrototypeKind::Ncm)?,
                decorrelated: similarity_histogram_report(&acc, &val, &labels, PrototypeKind::Decorrelated { lambda: *lambda })?,
            }
        }
        TheoryConfig::Interaction { dataset, study } => {
            let ds = load_dataset(dataset)?;
            TheoryReport::Interaction(interaction_study(&ds, study)?)
        }
    })
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| AppError::Data(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| AppError::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::Data(e.to_string()))
}

fn matrix_csv(m: &[Vec<f64>]) -> Result<Vec<u8>> {
    let header: Vec<String> = (0..m.len()).map(|i| format!("class{i}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(&header, m.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect())
}

/// Gnuplot-friendly columns: bin centre, own-class density, other-class density.
fn histogram_dat(h: &HistogramReport) -> Vec<u8> {
    let mut s = format!("# overlap {} ks {} p {}\n# centre true_class inter_class\n", h.overlap, h.ks_statistic, h.ks_p_value);
    for i in 0..h.true_class.len() {
        let c = 0.5 * (h.edges[i] + h.edges[i + 1]);
        s.push_str(&format!("{c} {} {}\n", h.true_class[i], h.inter_class[i]));
    }
    s.into_bytes()
}

pub fn write_theory(dir: &StagedDir, report: &TheoryReport) -> Result<()> {
    match report {
        TheoryReport::InnerProduct(r) => {
            let mut rows = Vec::new();
            for row in &r.rows {
                for (p, s) in row.pairs.iter().enumerate() {
                    rows.push(vec![
                        row.m.to_string(),
                        p.to_string(),
                        s.expected.to_string(),
                        s.mean.to_string(),
                        s.std.to_string(),
                        s.standard_error.to_string(),
                        s.z_score().to_string(),
                        s.mean_abs_deviation.to_string(),
                        s.tail_fraction.to_string(),
                    ]);
                }
            }
            dir.write(
                "concentration.csv",
                &csv_bytes(&["m", "pair", "expected", "mean", "std", "standard_error", "z", "mean_abs_deviation", "tail_fraction"], rows)?,
            )?;
        }
        TheoryReport::Norm(r) => {
            let rows = r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        row.m.to_string(),
                        row.mean.to_string(),
                        row.std.to_string(),
                        row.relative_std.to_string(),
                        row.tail_fraction.to_string(),
                        row.relative_tail_fraction.to_string(),
                    ]
                })
                .collect();
            dir.write("norms.csv", &csv_bytes(&["m", "mean", "std", "relative_std", "tail_fraction", "relative_tail_fraction"], rows)?)?;
        }
        TheoryReport::Correlation { ncm, decorrelated } => {
            dir.write("correlation_ncm.csv", &matrix_csv(&ncm.matrix)?)?;
            dir.write("correlation_decorrelated.csv", &matrix_csv(&decorrelated.matrix)?)?;
        }
        TheoryReport::Histogram { ncm, decorrelated } => {
            dir.write("histogram_ncm.dat", &histogram_dat(ncm))?;
            dir.write("histogram_decorrelated.dat", &histogram_dat(decorrelated))?;
        }
        TheoryReport::Interaction(r) => {
            let rows = r
                .rows
                .iter()
                .map(|row| vec![row.variant.clone(), row.m.map(|m| m.to_string()).unwrap_or_default(), row.dim.to_string(), row.accuracy.to_string()])
                .collect();
            dir.write("interaction.csv", &csv_bytes(&["variant", "m", "dim", "accuracy"], rows)?)?;
        }
    }
    Ok(())
}

/// One-paragraph console summary.
pub fn theory_summary(report: &TheoryReport) -> String {
    match report {
        TheoryReport::InnerProduct(r) => r
            .rows
            .iter()
            .map(|row| {
                let worst = row.pairs.iter().map(|s| s.z_score()).fold(0.0, f64::max);
                let tail = row.pairs.iter().map(|s| s.tail_fraction).sum::<f64>() / row.pairs.len() as f64;
                format!("M={:>6}  max |z|={worst:.2}  mean tail={tail:.4}\n", row.m)
            })
            .collect(),
        TheoryReport::Norm(r) => r
            .rows
            .iter()
            .map(|row| format!("M={:>6}  mean={:.4}  rel std={:.4}  tail={:.4}\n", row.m, row.mean, row.relative_std, row.tail_fraction))
            .collect(),
        TheoryReport::Correlation { ncm, decorrelated } => format!(
            "mean off-diagonal CC: ncm {:.4}, decorrelated {:.4}\n",
            ncm.mean_off_diagonal, decorrelated.mean_off_diagonal
        ),
        TheoryReport::Histogram { ncm, decorrelated } => format!(
            "histogram overlap: ncm {:.4} (KS {:.3}), decorrelated {:.4} (KS {:.3})\n",
            ncm.overlap, ncm.ks_statistic, decorrelated.overlap, decorrelated.ks_statistic
        ),
        TheoryReport::Interaction(r) => r
            .rows
            .iter()
            .map(|row| match row.m {
                Some(m) => format!("{:<12} M={m:<6} {:.2}%\n", row.variant, 100.0 * row.accuracy),
                None => format!("{:<12} L={:<6} {:.2}%\n", row.variant, row.dim, 100.0 * row.accuracy),
            })
            .collect(),
    }
}
