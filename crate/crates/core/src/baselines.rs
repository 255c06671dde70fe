//! Prototype baselines: nearest class mean by cosine similarity, and
//! streaming linear discriminant analysis with its Mahalanobis form.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::accumulator::Accumulator;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Cholesky, Matrix, SymmetricPacked};

/// Running per-class sums for NCM.
#[derive(Clone, Debug, PartialEq)]
pub struct NcmState {
    /// `K × dim`
    sums: Matrix,
    counts: Vec<u64>,
}

impl NcmState {
    pub fn new(dim: usize, classes: usize) -> Self {
        NcmState { sums: Matrix::zeros(classes, dim), counts: vec![0; classes] }
    }

    pub fn dim(&self) -> usize {
        self.sums.cols()
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn update(&mut self, f: &[f64], class: usize) -> Result<()> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: f.len() });
        }
        if class >= self.classes() {
            return Err(Error::LabelOutOfRange { label: class, classes: self.classes() });
        }
        axpy(1.0, f, self.sums.row_mut(class));
        self.counts[class] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &NcmState) -> Result<()> {
        if self.dim() != other.dim() || self.classes() != other.classes() {
            return Err(Error::ShapeMismatch("NCM states differ in shape".into()));
        }
        self.sums.add_assign(&other.sums)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Class means of everything seen so far; unseen classes are absent.
    pub fn head(&self) -> NcmHead {
        let mut protos = self.sums.clone();
        for (c, &n) in self.counts.iter().enumerate() {
            if n > 0 {
                let inv = 1.0 / n as f64;
                protos.row_mut(c).iter_mut().for_each(|v| *v *= inv);
            }
        }
        NcmHead::from_parts(protos, self.counts.iter().map(|&n| n > 0).collect())
    }
}

/// Class prototypes `c̄_y` with cached norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcmHead {
    /// `K × dim`
    pub prototypes: Matrix,
    pub norms: Vec<f64>,
    pub present: Vec<bool>,
}

impl NcmHead {
    pub fn from_parts(prototypes: Matrix, present: Vec<bool>) -> Self {
        let norms = (0..prototypes.rows()).map(|c| norm(prototypes.row(c))).collect();
        NcmHead { prototypes, norms, present }
    }

    /// Prototypes from the class columns of an accumulator's `C`.
    pub fn from_accumulator(acc: &Accumulator) -> Result<Self> {
        if !acc.is_classification() {
            return Err(Error::InvalidParameter("NCM needs a classification accumulator".into()));
        }
        let k = acc.target_dim();
        let mut protos = Matrix::zeros(k, acc.dim());
        let mut present = vec![false; k];
        for c in 0..k {
            if acc.class_counts()[c] > 0 {
                protos.row_mut(c).copy_from_slice(&acc.class_mean(c)?);
                present[c] = true;
            }
        }
        Ok(NcmHead::from_parts(protos, present))
    }

    pub fn classes(&self) -> usize {
        self.prototypes.rows()
    }

    /// `s_y = fᵀc̄_y / (‖f‖‖c̄_y‖)`; absent classes score `-∞`.
    pub fn score(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.prototypes.cols() {
            return Err(Error::DimensionMismatch { expected: self.prototypes.cols(), found: f.len() });
        }
        let nf = norm(f);
        if nf == 0.0 {
            return Err(Error::UndefinedSimilarity);
        }
        let mut out = Vec::with_capacity(self.classes());
        for c in 0..self.classes() {
            if !self.present[c] {
                out.push(f64::NEG_INFINITY);
                continue;
            }
            if self.norms[c] == 0.0 {
                return Err(Error::UndefinedSimilarity);
            }
            out.push(dot(f, self.prototypes.row(c)) / (nf * self.norms[c]));
        }
        Ok(out)
    }

    pub fn predict(&self, f: &[f64], mask: Option<&[bool]>) -> Result<usize> {
        let s = self.score(f)?;
        crate::solver::argmax(&s, mask).ok_or_else(|| Error::InvalidParameter("no class is eligible for prediction".into()))
    }
}

/// Which second-moment matrix the discriminant inverts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdaMatrix {
    /// Pooled within-class covariance, scatter divided by `N`.
    #[default]
    PooledCovariance,
    /// Uncentred `Σ f fᵀ`, no normalization.
    Gram,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaOptions {
    pub matrix: LdaMatrix,
    /// `ε = shrinkage · trace(S) / dim`
    pub shrinkage: f64,
    /// Equal priors over present classes instead of class frequencies.
    pub uniform_priors: bool,
}

impl Default for LdaOptions {
    fn default() -> Self {
        LdaOptions { matrix: LdaMatrix::PooledCovariance, shrinkage: 1e-4, uniform_priors: false }
    }
}

/// Streaming class means and second-moment statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaState {
    matrix: LdaMatrix,
    /// `K × dim`
    means: Matrix,
    counts: Vec<u64>,
    /// Pooled within-class scatter, or the raw Gram sum.
    second: SymmetricPacked,
}

impl LdaState {
    pub fn new(dim: usize, classes: usize, matrix: LdaMatrix) -> Self {
        LdaState { matrix, means: Matrix::zeros(classes, dim), counts: vec![0; classes], second: SymmetricPacked::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    /// Scatter (pooled) or Gram sum, before normalization.
    pub fn second_moment(&self) -> &SymmetricPacked {
        &self.second
    }

    /// Welford update of the class mean and pooled scatter.
    pub fn update(&mut self, f: &[f64], class: usize) -> Result<()> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: f.len() });
        }
        if class >= self.classes() {
            return Err(Error::LabelOutOfRange { label: class, classes: self.classes() });
        }
        let n = self.counts[class] as f64;
        let mean = self.means.row_mut(class);
        let delta: Vec<f64> = f.iter().zip(mean.iter()).map(|(x, m)| x - m).collect();
        axpy(1.0 / (n + 1.0), &delta, mean);
        match self.matrix {
            LdaMatrix::PooledCovariance => self.second.rank_one_update(n / (n + 1.0), &delta)?,
            LdaMatrix::Gram => self.second.rank_one_update(1.0, f)?,
        }
        self.counts[class] += 1;
        Ok(())
    }

    /// Chan et al. pairwise combination of two states.
    pub fn merge(&mut self, other: &LdaState) -> Result<()> {
        if self.dim() != other.dim() || self.classes() != other.classes() || self.matrix != other.matrix {
            return Err(Error::ShapeMismatch("LDA states differ in shape or kind".into()));
        }
        self.second.add_assign(&other.second)?;
        for c in 0..self.classes() {
            let (na, nb) = (self.counts[c] as f64, other.counts[c] as f64);
            if nb == 0.0 {
                continue;
            }
            let n = na + nb;
            let delta: Vec<f64> = other.means.row(c).iter().zip(self.means.row(c)).map(|(b, a)| b - a).collect();
            axpy(nb / n, &delta, self.means.row_mut(c));
            if self.matrix == LdaMatrix::PooledCovariance && na > 0.0 {
                self.second.rank_one_update(na * nb / n, &delta)?;
            }
            self.counts[c] += other.counts[c];
        }
        Ok(())
    }

    /// `S` as used by the discriminant: scatter / N or the Gram sum.
    pub fn covariance(&self) -> SymmetricPacked {
        match self.matrix {
            LdaMatrix::PooledCovariance => {
                let n = self.samples().max(1) as f64;
                self.second.scaled(1.0 / n)
            }
            LdaMatrix::Gram => self.second.clone(),
        }
    }

    /// Factorizes `S + εI` and precomputes `S⁻¹c̄_y` and the biases.
    pub fn fit(&self, opts: &LdaOptions) -> Result<LdaModel> {
        let n = self.samples();
        if n < 2 {
            return Err(Error::InvalidParameter(alloc::format!("LDA needs at least 2 samples, has {n}")));
        }
        if !(opts.shrinkage >= 0.0) || !opts.shrinkage.is_finite() {
            return Err(Error::InvalidParameter("shrinkage must be finite and >= 0".into()));
        }
        let s = self.covariance();
        let dim = self.dim();
        let epsilon = opts.shrinkage * s.trace() / dim as f64;
        let chol = Cholesky::factor(&s, epsilon).map_err(|e| Error::Singular { min_eigenvalue_bound: e.pivot.min(0.0) })?;
        let present: Vec<bool> = self.counts.iter().map(|&c| c > 0).collect();
        let seen = present.iter().filter(|&&p| p).count() as f64;
        let log_prior: Vec<f64> = self
            .counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    f64::NEG_INFINITY
                } else if opts.uniform_priors {
                    -libm::log(seen)
                } else {
                    libm::log(c as f64 / n as f64)
                }
            })
            .collect();
        // Columns of S⁻¹[c̄_0 … c̄_K] stored as rows.
        let mut solved = self.means.transpose();
        chol.solve_in_place(&mut solved)?;
        let weights = solved.transpose();
        let bias = (0..self.classes())
            .map(|c| if present[c] { -0.5 * dot(weights.row(c), self.means.row(c)) + log_prior[c] } else { f64::NEG_INFINITY })
            .collect();
        Ok(LdaModel { means: self.means.clone(), weights, bias, log_prior, present, epsilon, chol })
    }
}

/// A fitted discriminant: `ψ_y = fᵀS⁻¹c̄_y − ½c̄_yᵀS⁻¹c̄_y + log π_y`.
#[derive(Clone, Debug)]
pub struct LdaModel {
    pub means: Matrix,
    /// Row `y` is `S⁻¹c̄_y`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub present: Vec<bool>,
    /// Shrinkage actually added to the diagonal.
    pub epsilon: f64,
    chol: Cholesky,
}

impl LdaModel {
    pub fn classes(&self) -> usize {
        self.means.rows()
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.means.cols() {
            return Err(Error::DimensionMismatch { expected: self.means.cols(), found: f.len() });
        }
        Ok(())
    }

    /// LDA discriminant per class; absent classes score `-∞`.
    pub fn lda_score(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        Ok((0..self.classes())
            .map(|c| if self.present[c] { dot(f, self.weights.row(c)) + self.bias[c] } else { f64::NEG_INFINITY })
            .collect())
    }

    /// `ψ̂_y = (f − c̄_y)ᵀS⁻¹(f − c̄_y) − log π_y²`, computed directly;
    /// smaller is better and absent classes score `+∞`.
    pub fn mahalanobis_score(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        let mut out = Vec::with_capacity(self.classes());
        for c in 0..self.classes() {
            if !self.present[c] {
                out.push(f64::INFINITY);
                continue;
            }
            let d: Vec<f64> = f.iter().zip(self.means.row(c)).map(|(x, m)| x - m).collect();
            let sd = self.chol.solve_vec(&d)?;
            out.push(dot(&d, &sd) - 2.0 * self.log_prior[c]);
        }
        Ok(out)
    }

    pub fn predict(&self, f: &[f64], mask: Option<&[bool]>) -> Result<usize> {
        let s = self.lda_score(f)?;
        crate::solver::argmax(&s, mask).ok_or_else(|| Error::InvalidParameter("no class is eligible for prediction".into()))
    }
}
