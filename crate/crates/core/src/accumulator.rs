//! Streaming Gram and prototype statistics.
//!
//! `G = Σ h hᵀ` and `C = Σ h yᵀ` over every sample of every task. Both are
//! plain sums, so the result does not depend on the order in which samples
//! or tasks arrive, and shards can be merged.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix, SymmetricPacked};

/// Target attached to one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target<'a> {
    /// One-hot class label.
    Class(usize),
    /// Arbitrary dense target (regression mode), or an explicit one-hot row.
    Dense(&'a [f64]),
}

/// Returns the class index if `y` is exactly one-hot.
pub fn one_hot_index(y: &[f64]) -> Option<usize> {
    let mut idx = None;
    for (i, &v) in y.iter().enumerate() {
        if v == 1.0 {
            if idx.is_some() {
                return None;
            }
            idx = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    idx
}

#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    gram: SymmetricPacked,
    /// `M × D`
    prototypes: Matrix,
    /// Empty in regression mode.
    class_counts: Vec<u64>,
    samples: u64,
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"PFACC001";

impl Accumulator {
    /// One-hot classification over `classes` outputs.
    pub fn classification(dim: usize, classes: usize) -> Self {
        Accumulator {
            gram: SymmetricPacked::zeros(dim),
            prototypes: Matrix::zeros(dim, classes),
            class_counts: vec![0; classes],
            samples: 0,
        }
    }

    /// Dense `target_dim`-wide regression targets; no class counts.
    pub fn regression(dim: usize, target_dim: usize) -> Self {
        Accumulator {
            gram: SymmetricPacked::zeros(dim),
            prototypes: Matrix::zeros(dim, target_dim),
            class_counts: Vec::new(),
            samples: 0,
        }
    }

    pub fn is_classification(&self) -> bool {
        !self.class_counts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.gram.dim()
    }

    pub fn target_dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn gram(&self) -> &SymmetricPacked {
        &self.gram
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Classes with at least one sample.
    pub fn seen_classes(&self) -> Vec<bool> {
        self.class_counts.iter().map(|&n| n > 0).collect()
    }

    fn check_target(&self, target: &Target<'_>) -> Result<Option<usize>> {
        match *target {
            Target::Class(c) => {
                if !self.is_classification() {
                    return Err(Error::InvalidParameter("class target on a regression accumulator".into()));
                }
                if c >= self.target_dim() {
                    return Err(Error::LabelOutOfRange { label: c, classes: self.target_dim() });
                }
                Ok(Some(c))
            }
            Target::Dense(y) => {
                if y.len() != self.target_dim() {
                    return Err(Error::DimensionMismatch { expected: self.target_dim(), found: y.len() });
                }
                if self.is_classification() {
                    one_hot_index(y)
                        .map(Some)
                        .ok_or_else(|| Error::InvalidParameter("classification target must be one-hot".into()))
                } else {
                    Ok(None)
                }
            }
        }
    }

    fn add_target(&mut self, h: &[f64], target: &Target<'_>, class: Option<usize>) {
        let d = self.target_dim();
        match (class, target) {
            (Some(c), _) => {
                for (m, &hm) in h.iter().enumerate() {
                    self.prototypes.as_mut_slice()[m * d + c] += hm;
                }
                self.class_counts[c] += 1;
            }
            (None, Target::Dense(y)) => {
                for (m, &hm) in h.iter().enumerate() {
                    if hm != 0.0 {
                        axpy(hm, y, self.prototypes.row_mut(m));
                    }
                }
            }
            (None, Target::Class(_)) => unreachable!("class targets always resolve"),
        }
        self.samples += 1;
    }

    /// `G += h hᵀ`, `C += h yᵀ`, counts incremented.
    pub fn update(&mut self, h: &[f64], target: Target<'_>) -> Result<()> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: h.len() });
        }
        let class = self.check_target(&target)?;
        self.gram.rank_one_update(1.0, h)?;
        self.add_target(h, &target, class);
        Ok(())
    }

    /// Same as calling `update` for each pair, but the Gram matrix is swept
    /// once per batch. Validation happens before any state changes.
    pub fn update_batch(&mut self, hs: &[&[f64]], targets: &[Target<'_>]) -> Result<()> {
        if hs.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: hs.len(), found: targets.len() });
        }
        let mut classes = Vec::with_capacity(hs.len());
        for (h, t) in hs.iter().zip(targets) {
            if h.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), found: h.len() });
            }
            classes.push(self.check_target(t)?);
        }
        self.gram.batch_update(hs)?;
        for ((h, t), c) in hs.iter().zip(targets).zip(classes) {
            self.add_target(h, t, c);
        }
        Ok(())
    }

    /// Component-wise sum of two accumulators of the same shape.
    pub fn merge(&mut self, other: &Accumulator) -> Result<()> {
        if self.dim() != other.dim()
            || self.target_dim() != other.target_dim()
            || self.class_counts.len() != other.class_counts.len()
        {
            return Err(Error::ShapeMismatch(alloc::format!(
                "accumulator {}x{} (K={}) vs {}x{} (K={})",
                self.dim(),
                self.target_dim(),
                self.class_counts.len(),
                other.dim(),
                other.target_dim(),
                other.class_counts.len()
            )));
        }
        self.gram.add_assign(&other.gram)?;
        self.prototypes.add_assign(&other.prototypes)?;
        for (a, b) in self.class_counts.iter_mut().zip(&other.class_counts) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(())
    }

    pub fn merged(a: &Accumulator, b: &Accumulator) -> Result<Accumulator> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    /// `c̄_y = c_y / n_y`
    pub fn class_mean(&self, class: usize) -> Result<Vec<f64>> {
        if !self.is_classification() {
            return Err(Error::InvalidParameter("class means need a classification accumulator".into()));
        }
        let n = *self
            .class_counts
            .get(class)
            .ok_or(Error::LabelOutOfRange { label: class, classes: self.class_counts.len() })?;
        if n == 0 {
            return Err(Error::UndefinedPrototype { class });
        }
        let inv = 1.0 / n as f64;
        Ok(self.prototypes.column(class).into_iter().map(|v| v * inv).collect())
    }

    /// All class means as a `K × M` matrix; fails if any class is empty.
    pub fn class_means(&self) -> Result<Matrix> {
        let rows = (0..self.class_counts.len()).map(|c| self.class_mean(c)).collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }

    /// Serializes to `PFACC001 | M | D | K | N | G (packed) | C | counts`,
    /// all little-endian, floats as f64 and integers as u64.
    pub fn snapshot(&self) -> Vec<u8> {
        let m = self.dim();
        let d = self.target_dim();
        let k = self.class_counts.len();
        let mut out = Vec::with_capacity(40 + 8 * (self.gram.packed().len() + m * d + k));
        out.extend_from_slice(SNAPSHOT_MAGIC);
        for v in [m as u64, d as u64, k as u64, self.samples] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.gram.packed().iter().chain(self.prototypes.as_slice()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.class_counts {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn restore(bytes: &[u8]) -> Result<Accumulator> {
        if bytes.len() < 40 {
            return Err(Error::Corrupt("snapshot shorter than header".into()));
        }
        if &bytes[..8] != SNAPSHOT_MAGIC {
            return Err(Error::VersionMismatch);
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let (m, d, k, samples) = (word(0) as usize, word(1) as usize, word(2) as usize, word(3));
        let packed = m * (m + 1) / 2;
        let expected = 40 + 8 * (packed + m * d + k);
        if bytes.len() != expected {
            return Err(Error::Corrupt(alloc::format!("snapshot is {} bytes, expected {expected}", bytes.len())));
        }
        let mut pos = 40;
        let mut take = |n: usize| {
            let v: Vec<u64> = bytes[pos..pos + 8 * n]
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 8 * n;
            v
        };
        let gram = take(packed).into_iter().map(f64::from_bits).collect();
        let protos = take(m * d).into_iter().map(f64::from_bits).collect();
        let class_counts = take(k);
        Ok(Accumulator {
            gram: SymmetricPacked::from_packed(m, gram)?,
            prototypes: Matrix::from_vec(m, d, protos)?,
            class_counts,
            samples,
        })
    }
}
