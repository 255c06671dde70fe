//! Frozen random projection `h = φ(fᵀW)`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightDistribution {
    /// Entries drawn from N(0, 1), unscaled.
    #[default]
    Gaussian,
    /// Entries −1 or +1 with equal probability.
    Bipolar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
    Square,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Square => x * x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub distribution: WeightDistribution,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

impl ProjectionSpec {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        ProjectionSpec {
            input_dim,
            output_dim,
            distribution: WeightDistribution::Gaussian,
            activation: Activation::Relu,
            seed,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_distribution(mut self, distribution: WeightDistribution) -> Self {
        self.distribution = distribution;
        self
    }
}

/// The `L × M` weight matrix. Created once, never mutated.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    spec: ProjectionSpec,
    weights: Matrix,
}

impl ProjectionMatrix {
    /// Draws `W` row by row (input index major) from `Rng::new(spec.seed)`.
    pub fn generate(spec: ProjectionSpec) -> Result<Self> {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::InvalidParameter("projection dimensions must be positive".into()));
        }
        let mut rng = Rng::new(spec.seed);
        let n = spec.input_dim * spec.output_dim;
        let data: Vec<f64> = match spec.distribution {
            WeightDistribution::Gaussian => (0..n).map(|_| rng.gaussian()).collect(),
            WeightDistribution::Bipolar => (0..n).map(|_| rng.bipolar()).collect(),
        };
        Ok(ProjectionMatrix { spec, weights: Matrix::from_vec(spec.input_dim, spec.output_dim, data)? })
    }

    /// Wraps an explicit matrix. Intended for tests and imported weights.
    pub fn from_weights(weights: Matrix, activation: Activation) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidParameter("projection dimensions must be positive".into()));
        }
        let spec = ProjectionSpec {
            input_dim: weights.rows(),
            output_dim: weights.cols(),
            distribution: WeightDistribution::Gaussian,
            activation,
            seed: 0,
        };
        Ok(ProjectionMatrix { spec, weights })
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// `φ(fᵀW)`
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut h = vec![0.0; self.output_dim()];
        self.project_into(f, &mut h)?;
        Ok(h)
    }

    pub fn project_into(&self, f: &[f64], h: &mut [f64]) -> Result<()> {
        if f.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: f.len() });
        }
        if h.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), found: h.len() });
        }
        h.fill(0.0);
        for (l, &fl) in f.iter().enumerate() {
            if fl != 0.0 {
                axpy(fl, self.weights.row(l), h);
            }
        }
        let act = self.spec.activation;
        if act != Activation::Identity {
            for v in h.iter_mut() {
                *v = act.apply(*v);
            }
        }
        Ok(())
    }

    pub fn project_f32(&self, f: &[f32]) -> Result<Vec<f64>> {
        let f: Vec<f64> = f.iter().map(|&v| v as f64).collect();
        self.project(&f)
    }

    /// Row-wise projection of an `N × L` batch.
    pub fn project_batch(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: batch.cols() });
        }
        let mut out = Matrix::zeros(batch.rows(), self.output_dim());
        for r in 0..batch.rows() {
            self.project_into(batch.row(r), out.row_mut(r))?;
        }
        Ok(out)
    }

    /// One bit per weight, row-major, least-significant bit first; a set bit
    /// means `+1`. Only valid for bipolar weights.
    pub fn pack_bipolar(&self) -> Result<Vec<u8>> {
        if self.spec.distribution != WeightDistribution::Bipolar {
            return Err(Error::InvalidParameter("bit packing needs bipolar weights".into()));
        }
        let w = self.weights.as_slice();
        let mut out = vec![0u8; w.len().div_ceil(8)];
        for (i, &v) in w.iter().enumerate() {
            if v > 0.0 {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        Ok(out)
    }

    pub fn unpack_bipolar(spec: ProjectionSpec, bits: &[u8]) -> Result<Self> {
        let n = spec.input_dim * spec.output_dim;
        if bits.len() != n.div_ceil(8) {
            return Err(Error::DimensionMismatch { expected: n.div_ceil(8), found: bits.len() });
        }
        let data = (0..n).map(|i| if bits[i / 8] >> (i % 8) & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let spec = ProjectionSpec { distribution: WeightDistribution::Bipolar, ..spec };
        Ok(ProjectionMatrix { spec, weights: Matrix::from_vec(spec.input_dim, spec.output_dim, data)? })
    }
}

/// All products `f_i f_j` with `i ≤ j`, in lexicographic `(i, j)` order.
pub fn expand_pairwise(f: &[f64]) -> Vec<f64> {
    let l = f.len();
    let mut out = Vec::with_capacity(pairwise_len(l));
    for i in 0..l {
        for j in i..l {
            out.push(f[i] * f[j]);
        }
    }
    out
}

pub fn pairwise_len(l: usize) -> usize {
    l * (l + 1) / 2
}

/// `[1, f, f_i f_j (i ≤ j)]`: every monomial of degree at most two.
pub fn expand_quadratic(f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(quadratic_len(f.len()));
    out.push(1.0);
    out.extend_from_slice(f);
    out.extend(expand_pairwise(f));
    out
}

pub fn quadratic_len(l: usize) -> usize {
    1 + l + pairwise_len(l)
}
