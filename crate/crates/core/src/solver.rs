//! Closed-form ridge head `W_o = (G + λI)⁻¹ C`, λ cross-validation and
//! scoring.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::accumulator::{Accumulator, Target};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix, SymmetricPacked};
use crate::rng::Rng;

/// Relative normal-equation residual accepted by [`solve_checked`].
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Fewest samples a task needs for an 80:20 split.
pub const MIN_CV_SAMPLES: usize = 5;

/// λ used when the first task is too small to cross-validate.
pub const FALLBACK_LAMBDA: f64 = 1e-2;

const JITTER_SCALE: f64 = 1e-10;
const JITTER_GROWTH: f64 = 10.0;
const JITTER_RETRIES: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// `‖(G + (λ+jitter)I)W_o − C‖_F / ‖C‖_F`
    pub residual: f64,
    /// Extra diagonal added on top of λ; zero when the first factorization succeeded.
    pub jitter: f64,
    /// Rounds of iterative refinement applied.
    pub refinements: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecorrelatedHead {
    /// `M × D`
    pub weights: Matrix,
    pub lambda: f64,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Maximum rounds of iterative refinement after the first solve.
    pub refinements: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { refinements: 2 }
    }
}

/// Factorizes `G + λI`, escalating diagonal jitter on failure.
/// Returns the factor and the jitter that was needed.
pub fn factor_regularized(g: &SymmetricPacked, lambda: f64) -> Result<(Cholesky, f64)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let first = match Cholesky::factor(g, lambda) {
        Ok(ch) => return Ok((ch, 0.0)),
        Err(e) => e,
    };
    let m = g.dim().max(1) as f64;
    let trace = g.trace();
    let mut jitter = JITTER_SCALE * if trace > 0.0 { trace / m } else { 1.0 };
    let mut last = first;
    for _ in 0..JITTER_RETRIES {
        match Cholesky::factor(g, lambda + jitter) {
            Ok(ch) => return Ok((ch, jitter)),
            Err(e) => last = e,
        }
        jitter *= JITTER_GROWTH;
    }
    // The failing pivot bounds the smallest eigenvalue of G + shift·I from above.
    let shift = lambda + jitter / JITTER_GROWTH;
    Err(Error::Singular { min_eigenvalue_bound: last.pivot.min(0.0) - shift })
}

fn relative_residual(g: &SymmetricPacked, c: &Matrix, w: &Matrix, shift: f64) -> Result<(Matrix, f64)> {
    let mut r = g.mul_matrix_shifted(w, shift)?;
    // r = C − (G + shift·I) W
    for (x, &cv) in r.as_mut_slice().iter_mut().zip(c.as_slice()) {
        *x = cv - *x;
    }
    let cn = c.frobenius_norm();
    let rn = r.frobenius_norm();
    let rel = if cn > 0.0 { rn / cn } else { rn };
    Ok((r, rel))
}

/// `W_o = (G + λI)⁻¹ C` with default options.
pub fn solve(g: &SymmetricPacked, c: &Matrix, lambda: f64) -> Result<DecorrelatedHead> {
    solve_with(g, c, lambda, &SolveOptions::default())
}

pub fn solve_with(g: &SymmetricPacked, c: &Matrix, lambda: f64, opts: &SolveOptions) -> Result<DecorrelatedHead> {
    if c.rows() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: c.rows() });
    }
    let (chol, jitter) = factor_regularized(g, lambda)?;
    let shift = lambda + jitter;
    let mut w = c.clone();
    chol.solve_in_place(&mut w)?;
    let (mut r, mut residual) = relative_residual(g, c, &w, shift)?;
    let mut refinements = 0;
    while refinements < opts.refinements && residual > f64::EPSILON {
        chol.solve_in_place(&mut r)?;
        let mut candidate = w.clone();
        candidate.add_assign(&r)?;
        let (r2, res2) = relative_residual(g, c, &candidate, shift)?;
        refinements += 1;
        if !(res2 < residual) {
            break;
        }
        w = candidate;
        r = r2;
        residual = res2;
    }
    Ok(DecorrelatedHead { weights: w, lambda, diagnostics: SolveDiagnostics { residual, jitter, refinements } })
}

/// Like [`solve`], but rejects heads whose residual exceeds `tolerance`.
pub fn solve_checked(g: &SymmetricPacked, c: &Matrix, lambda: f64, tolerance: f64) -> Result<DecorrelatedHead> {
    let head = solve(g, c, lambda)?;
    if !(head.diagnostics.residual <= tolerance) {
        return Err(Error::ResidualTooLarge { residual: head.diagnostics.residual });
    }
    Ok(head)
}

impl DecorrelatedHead {
    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    /// `hᵀ W_o`
    pub fn score(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.weights.left_mul(h)
    }

    /// Argmax over classes allowed by `mask` (all when `None`).
    pub fn predict(&self, h: &[f64], mask: Option<&[bool]>) -> Result<usize> {
        let s = self.score(h)?;
        argmax(&s, mask).ok_or_else(|| Error::InvalidParameter("no class is eligible for prediction".into()))
    }
}

/// Index of the largest score among eligible entries; lowest index wins
/// ties, NaN never wins.
pub fn argmax(scores: &[f64], mask: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if mask.is_some_and(|m| !m.get(i).copied().unwrap_or(false)) || s.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the smallest score among eligible entries, lowest index on ties.
pub fn argmin(scores: &[f64], mask: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if mask.is_some_and(|m| !m.get(i).copied().unwrap_or(false)) || s.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if s >= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaSchedule {
    pub grid: Vec<f64>,
    pub holdout: f64,
}

impl Default for LambdaSchedule {
    /// `{10⁻⁸, 10⁻⁷, …, 10⁸}` with a 20% holdout.
    fn default() -> Self {
        LambdaSchedule { grid: default_grid(), holdout: 0.2 }
    }
}

pub fn default_grid() -> Vec<f64> {
    (-8..=8).map(|e| libm::pow(10.0, e as f64)).collect()
}

impl LambdaSchedule {
    pub fn single(lambda: f64) -> Self {
        LambdaSchedule { grid: vec![lambda], holdout: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        if self.grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter("lambda grid values must be positive and finite".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("lambda grid must be strictly increasing".into()));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::InvalidParameter("holdout fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Targets of one task's samples.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// `N × D`
    Dense(Matrix),
}

/// The samples of a single task, already projected: everything the
/// cross-validation step is allowed to see besides the accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    /// `N × M`
    pub inputs: Matrix,
    pub targets: Targets,
}

impl TaskBatch {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        let n = match &targets {
            Targets::Classes(c) => c.len(),
            Targets::Dense(m) => m.rows(),
        };
        if n != inputs.rows() {
            return Err(Error::DimensionMismatch { expected: inputs.rows(), found: n });
        }
        Ok(TaskBatch { inputs, targets })
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// Random access to one task's projected samples and their targets.
pub trait SampleSource {
    fn len(&self) -> usize;
    /// Width of the projected vectors.
    fn input_dim(&self) -> usize;
    /// Writes the projected vector of sample `i` into `h`.
    fn input(&self, i: usize, h: &mut [f64]) -> Result<()>;
    fn target(&self, i: usize) -> Target<'_>;

    /// Dense target row for sample `i`, one-hot for class targets.
    fn target_row(&self, i: usize, dim: usize) -> Vec<f64> {
        match self.target(i) {
            Target::Class(c) => {
                let mut y = vec![0.0; dim];
                y[c] = 1.0;
                y
            }
            Target::Dense(y) => y.to_vec(),
        }
    }
}

impl SampleSource for TaskBatch {
    fn len(&self) -> usize {
        self.inputs.rows()
    }

    fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    fn input(&self, i: usize, h: &mut [f64]) -> Result<()> {
        h.copy_from_slice(self.inputs.row(i));
        Ok(())
    }

    fn target(&self, i: usize) -> Target<'_> {
        match &self.targets {
            Targets::Classes(c) => Target::Class(c[i]),
            Targets::Dense(m) => Target::Dense(m.row(i)),
        }
    }
}

const ACCUMULATE_CHUNK: usize = 32;

/// Adds the given samples of `source`, in the given order, to `acc`.
pub fn accumulate<S: SampleSource + ?Sized>(source: &S, acc: &mut Accumulator, indices: &[usize]) -> Result<()> {
    let m = source.input_dim();
    if m != acc.dim() {
        return Err(Error::DimensionMismatch { expected: acc.dim(), found: m });
    }
    let mut buf = vec![0.0; ACCUMULATE_CHUNK * m];
    for chunk in indices.chunks(ACCUMULATE_CHUNK) {
        for (k, &i) in chunk.iter().enumerate() {
            source.input(i, &mut buf[k * m..(k + 1) * m])?;
        }
        let hs: Vec<&[f64]> = buf.chunks(m).take(chunk.len()).collect();
        let ys: Vec<Target<'_>> = chunk.iter().map(|&i| source.target(i)).collect();
        acc.update_batch(&hs, &ys)?;
    }
    Ok(())
}

/// Adds every sample of `source`, in order.
pub fn accumulate_all<S: SampleSource + ?Sized>(source: &S, acc: &mut Accumulator) -> Result<()> {
    let idx: Vec<usize> = (0..source.len()).collect();
    accumulate(source, acc, &idx)
}

/// Mean squared holdout error of `(G + λI)⁻¹C` for every λ in `grid`.
/// A λ whose factorization fails scores `+∞`.
pub fn holdout_mse(g: &SymmetricPacked, c: &Matrix, val_inputs: &Matrix, val_targets: &Matrix, grid: &[f64]) -> Result<Vec<f64>> {
    if val_inputs.rows() != val_targets.rows() {
        return Err(Error::DimensionMismatch { expected: val_inputs.rows(), found: val_targets.rows() });
    }
    if val_inputs.cols() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: val_inputs.cols() });
    }
    if val_targets.cols() != c.cols() {
        return Err(Error::DimensionMismatch { expected: c.cols(), found: val_targets.cols() });
    }
    let count = (val_targets.rows() * val_targets.cols()).max(1) as f64;
    let no_refine = SolveOptions { refinements: 0 };
    let mut curve = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let head = match solve_with(g, c, lambda, &no_refine) {
            Ok(h) => h,
            Err(e) if e.is_numerical() => {
                curve.push(f64::INFINITY);
                continue;
            }
            Err(e) => return Err(e),
        };
        let pred = val_inputs.matmul(&head.weights)?;
        let sse: f64 = pred.as_slice().iter().zip(val_targets.as_slice()).map(|(p, y)| (p - y) * (p - y)).sum();
        let mse = sse / count;
        curve.push(if mse.is_finite() { mse } else { f64::INFINITY });
    }
    Ok(curve)
}

/// Index of the smallest finite MSE, lowest index (smallest λ) on ties.
pub fn pick_lambda(mse: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in mse.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOutcome {
    pub lambda: f64,
    /// Holdout MSE for each grid value, in grid order.
    pub mse: Vec<f64>,
    pub fit_samples: usize,
    pub holdout_samples: usize,
    /// `base` plus every sample of the task.
    pub accumulator: Accumulator,
}

/// Selects λ on an 80:20 split of the current task, then folds the holdout
/// back in. Only `base` and `task` are read.
pub fn cross_validate_lambda<S: SampleSource + ?Sized>(
    task: &S,
    base: Accumulator,
    schedule: &LambdaSchedule,
    seed: u64,
) -> Result<CvOutcome> {
    schedule.validate()?;
    let n = task.len();
    if n < MIN_CV_SAMPLES {
        return Err(Error::DegenerateSplit { samples: n });
    }
    if task.input_dim() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), found: task.input_dim() });
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let hold = (libm::round(n as f64 * schedule.holdout) as usize).clamp(1, n - 1);
    let (fit, val) = order.split_at(n - hold);

    let mut acc = base;
    accumulate(task, &mut acc, fit)?;

    let d = acc.target_dim();
    let m = acc.dim();
    let mut val_inputs = Matrix::zeros(val.len(), m);
    for (r, &i) in val.iter().enumerate() {
        task.input(i, val_inputs.row_mut(r))?;
    }
    let val_targets = Matrix::from_rows(&val.iter().map(|&i| task.target_row(i, d)).collect::<Vec<_>>())?;
    let mse = holdout_mse(acc.gram(), acc.prototypes(), &val_inputs, &val_targets, &schedule.grid)?;
    let pick = if schedule.grid.len() == 1 { Some(0) } else { pick_lambda(&mse) };
    let pick = pick.ok_or(Error::Singular { min_eigenvalue_bound: 0.0 })?;

    accumulate(task, &mut acc, val)?;
    Ok(CvOutcome {
        lambda: schedule.grid[pick],
        mse,
        fit_samples: fit.len(),
        holdout_samples: val.len(),
        accumulator: acc,
    })
}

/// `tr(WᵀGW) − 2 tr(WᵀC) + λ‖W‖²_F`, the ridge objective
/// `‖Yᵀ − WᵀH‖² + λ‖W‖²` up to the constant `‖Y‖²`.
pub fn ridge_objective(g: &SymmetricPacked, c: &Matrix, lambda: f64, w: &Matrix) -> Result<f64> {
    let gw = g.mul_matrix_shifted(w, lambda)?;
    if c.rows() != w.rows() || c.cols() != w.cols() {
        return Err(Error::ShapeMismatch("objective weights and prototypes differ in shape".into()));
    }
    Ok(dot(w.as_slice(), gw.as_slice()) - 2.0 * dot(w.as_slice(), c.as_slice()))
}

/// Gradient descent on the ridge objective from `W = 0`:
/// `W ← W − lr·(2(G+λI)W − 2C)`. Test-scale only.
pub fn fit_iterative_oracle(g: &SymmetricPacked, c: &Matrix, lambda: f64, steps: usize, lr: f64) -> Result<Matrix> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::StepSize { lr });
    }
    if c.rows() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: c.rows() });
    }
    let mut w = Matrix::zeros(c.rows(), c.cols());
    for _ in 0..steps {
        let aw = g.mul_matrix_shifted(&w, lambda)?;
        for ((x, &a), &cv) in w.as_mut_slice().iter_mut().zip(aw.as_slice()).zip(c.as_slice()) {
            *x -= lr * 2.0 * (a - cv);
        }
        let n = w.frobenius_norm();
        if !n.is_finite() || n > 1e100 {
            return Err(Error::StepSize { lr });
        }
    }
    Ok(w)
}

/// Largest eigenvalue of a PSD matrix by power iteration.
pub fn largest_eigenvalue(g: &SymmetricPacked, iterations: usize) -> f64 {
    let n = g.dim();
    if n == 0 {
        return 0.0;
    }
    let mut rng = Rng::new(0x5EED);
    let mut v = Matrix::from_vec(n, 1, (0..n).map(|_| rng.gaussian()).collect()).unwrap();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = v.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        v.scale(1.0 / norm);
        let gv = g.mul_matrix_shifted(&v, 0.0).unwrap();
        estimate = dot(v.as_slice(), gv.as_slice());
        v = gv;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accumulator::Accumulator;

    fn packed(rows: &[Vec<f64>]) -> SymmetricPacked {
        SymmetricPacked::from_dense_upper(&Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn random_psd(n: usize, samples: usize, seed: u64) -> SymmetricPacked {
        let mut rng = Rng::new(seed);
        let mut g = SymmetricPacked::zeros(n);
        for _ in 0..samples {
            let h: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
            g.rank_one_update(1.0, &h).unwrap();
        }
        g
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gaussian()).collect()).unwrap()
    }

    /// Gaussian elimination with partial pivoting on the dense system.
    fn gauss_solve(a: &Matrix, b: &Matrix) -> Matrix {
        let n = a.rows();
        let d = b.cols();
        let mut aug: std::vec::Vec<std::vec::Vec<f64>> =
            (0..n).map(|i| a.row(i).iter().chain(b.row(i)).copied().collect()).collect();
        for col in 0..n {
            let p = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
            aug.swap(col, p);
            for r in 0..n {
                if r != col {
                    let f = aug[r][col] / aug[col][col];
                    for k in col..n + d {
                        aug[r][k] -= f * aug[col][k];
                    }
                }
            }
        }
        let rows: std::vec::Vec<_> = (0..n).map(|i| (0..d).map(|j| aug[i][n + j] / aug[i][i]).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn identity_solve() {
        let head = solve(&SymmetricPacked::from_dense_upper(&Matrix::identity(2)).unwrap(), &Matrix::identity(2), 0.0).unwrap();
        assert_eq!(head.weights, Matrix::identity(2));
        assert_eq!(head.diagnostics.jitter, 0.0);
    }

    #[test]
    fn diagonal_solve() {
        let g = packed(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let head = solve(&g, &Matrix::identity(2), 0.0).unwrap();
        let expect = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.25]]).unwrap();
        assert!(rel_diff(&head.weights, &expect) < 1e-15);
    }

    #[test]
    fn matches_elimination_oracle() {
        let g = random_psd(8, 12, 4);
        let c = random_matrix(8, 3, 5);
        let head = solve(&g, &c, 0.1).unwrap();
        let mut a = g.to_dense();
        for i in 0..8 {
            a.set(i, i, a.get(i, i) + 0.1);
        }
        let oracle = gauss_solve(&a, &c);
        assert!(rel_diff(&head.weights, &oracle) < 1e-10);
        assert!(head.diagnostics.residual < 1e-12);
    }

    #[test]
    fn hand_solved_two_class() {
        // Samples h=(1,0) class 0, h=(1,1) class 1:
        // G = [[2,1],[1,1]], C = [[1,1],[0,1]]; λ=1 → (G+I)⁻¹ = [[2,-1],[-1,3]]/5.
        let mut acc = Accumulator::classification(2, 2);
        acc.update(&[1.0, 0.0], Target::Class(0)).unwrap();
        acc.update(&[1.0, 1.0], Target::Class(1)).unwrap();
        let head = solve(acc.gram(), acc.prototypes(), 1.0).unwrap();
        let expect = Matrix::from_rows(&[vec![0.4, 0.2], vec![-0.2, 0.4]]).unwrap();
        assert!(rel_diff(&head.weights, &expect) < 1e-14);
        let s = head.score(&[1.0, 1.0]).unwrap();
        assert!((s[0] - 0.2).abs() < 1e-14 && (s[1] - 0.6).abs() < 1e-14);
        assert_eq!(head.predict(&[1.0, 1.0], None).unwrap(), 1);
        assert_eq!(head.predict(&[1.0, 0.0], None).unwrap(), 0);
    }

    #[test]
    fn identity_head_scores_pass_through() {
        let head = DecorrelatedHead {
            weights: Matrix::identity(3),
            lambda: 0.0,
            diagnostics: SolveDiagnostics { residual: 0.0, jitter: 0.0, refinements: 0 },
        };
        assert_eq!(head.score(&[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
        assert_eq!(head.score(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(head.predict(&[0.0; 3], None).unwrap(), 0);
        assert_eq!(head.predict(&[5.0, 1.0, 2.0], Some(&[false, true, true])).unwrap(), 2);
    }

    #[test]
    fn argmax_and_argmin_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0], None), Some(1));
        assert_eq!(argmin(&[2.0, 1.0, 1.0], None), Some(1));
        assert_eq!(argmax(&[f64::NAN, 0.0], None), Some(1));
        assert_eq!(argmax(&[1.0, 2.0], Some(&[false, false])), None);
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY], None), Some(0));
    }

    #[test]
    fn singular_gram_needs_jitter_or_lambda() {
        // Rank one, λ = 0: jitter makes it factorizable.
        let g = packed(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let c = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let head = solve(&g, &c, 0.0).unwrap();
        assert!(head.diagnostics.jitter > 0.0);
        // Strongly indefinite input cannot be rescued.
        let bad = packed(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        match solve(&bad, &c, 0.0) {
            Err(Error::Singular { min_eigenvalue_bound }) => assert!(min_eigenvalue_bound < 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
        assert!(solve(&g, &c, -1.0).is_err());
    }

    #[test]
    fn checked_solve_rejects_large_residual() {
        let g = random_psd(6, 10, 1);
        let c = random_matrix(6, 2, 2);
        assert!(solve_checked(&g, &c, 0.5, RESIDUAL_TOLERANCE).is_ok());
        assert!(matches!(solve_checked(&g, &c, 0.5, -1.0), Err(Error::ResidualTooLarge { .. })));
    }

    #[test]
    fn grid_spans_seventeen_decades() {
        let s = LambdaSchedule::default();
        assert_eq!(s.grid.len(), 17);
        assert_eq!(s.grid[0], 1e-8);
        assert_eq!(s.grid[8], 1.0);
        assert_eq!(s.grid[16], 1e8);
        assert!(s.validate().is_ok());
        assert!(LambdaSchedule { grid: vec![1.0, 1.0], holdout: 0.2 }.validate().is_err());
        assert!(LambdaSchedule { grid: vec![0.0], holdout: 0.2 }.validate().is_err());
        assert!(LambdaSchedule { grid: vec![1.0], holdout: 1.0 }.validate().is_err());
    }

    fn toy_task(n: usize, m: usize, classes: usize, seed: u64) -> TaskBatch {
        let mut rng = Rng::new(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let mut data = Vec::with_capacity(n * m);
        for &y in &labels {
            for j in 0..m {
                let mean = if j % classes == y { 3.0 } else { 0.0 };
                data.push(mean + rng.gaussian());
            }
        }
        TaskBatch::new(Matrix::from_vec(n, m, data).unwrap(), Targets::Classes(labels)).unwrap()
    }

    #[test]
    fn single_value_grid() {
        let task = toy_task(20, 6, 2, 3);
        let out = cross_validate_lambda(&task, Accumulator::classification(6, 2), &LambdaSchedule::single(7.0), 1).unwrap();
        assert_eq!(out.lambda, 7.0);
        let mut full = Accumulator::classification(6, 2);
        accumulate_all(&task, &mut full).unwrap();
        assert_eq!(out.accumulator.samples(), 20);
        assert_eq!(out.accumulator.class_counts(), full.class_counts());
        let diff = out.accumulator.gram().to_dense().sub(&full.gram().to_dense()).unwrap().frobenius_norm();
        assert!(diff <= 1e-12 * full.gram().frobenius_norm());
        assert_eq!((out.fit_samples, out.holdout_samples), (16, 4));
    }

    #[test]
    fn tiny_task_is_degenerate() {
        let task = toy_task(4, 3, 2, 1);
        assert_eq!(
            cross_validate_lambda(&task, Accumulator::classification(3, 2), &LambdaSchedule::default(), 0),
            Err(Error::DegenerateSplit { samples: 4 })
        );
    }

    #[test]
    fn cv_is_reproducible_and_picks_min() {
        let task = toy_task(60, 10, 3, 7);
        let s = LambdaSchedule::default();
        let a = cross_validate_lambda(&task, Accumulator::classification(10, 3), &s, 11).unwrap();
        let b = cross_validate_lambda(&task, Accumulator::classification(10, 3), &s, 11).unwrap();
        assert_eq!(a, b);
        let best = a.mse.iter().copied().fold(f64::INFINITY, f64::min);
        let idx = s.grid.iter().position(|&l| l == a.lambda).unwrap();
        assert_eq!(a.mse[idx], best);
        assert!(a.mse[..idx].iter().all(|&v| v > best));
    }

    #[test]
    fn pick_lambda_ties_and_infinities() {
        assert_eq!(pick_lambda(&[f64::INFINITY, 2.0, 1.0, 1.0]), Some(2));
        assert_eq!(pick_lambda(&[f64::INFINITY]), None);
    }

    #[test]
    fn oracle_identity_and_shrinkage() {
        let g = SymmetricPacked::from_dense_upper(&Matrix::identity(2)).unwrap();
        let w = fit_iterative_oracle(&g, &Matrix::identity(2), 0.0, 200, 0.25).unwrap();
        assert!(rel_diff(&w, &Matrix::identity(2)) < 1e-12);
        let c = random_matrix(2, 2, 9);
        let big = solve(&g, &c, 1e8).unwrap();
        assert!(big.weights.frobenius_norm() < 1e-7 * c.frobenius_norm());
        let it = fit_iterative_oracle(&g, &c, 1e8, 50, 0.25 / (1.0 + 1e8)).unwrap();
        assert!(it.frobenius_norm() < 1e-7 * c.frobenius_norm());
    }

    #[test]
    fn oracle_matches_closed_form() {
        let g = random_psd(5, 20, 3);
        let c = random_matrix(5, 2, 4);
        let lambda = 1.0;
        let lmax = largest_eigenvalue(&g, 200) + lambda;
        let head = solve(&g, &c, lambda).unwrap();
        let w = fit_iterative_oracle(&g, &c, lambda, 5000, 0.45 / lmax).unwrap();
        assert!(rel_diff(&w, &head.weights) < 1e-3);
    }

    #[test]
    fn oracle_divergence() {
        let g = random_psd(4, 10, 3);
        let c = random_matrix(4, 2, 4);
        let lmax = largest_eigenvalue(&g, 200);
        assert!(matches!(fit_iterative_oracle(&g, &c, 0.1, 2000, 5.0 / lmax), Err(Error::StepSize { .. })));
        assert!(matches!(fit_iterative_oracle(&g, &c, 0.1, 10, -1.0), Err(Error::StepSize { .. })));
    }

    #[test]
    fn closed_form_minimizes_objective() {
        let g = random_psd(6, 9, 21);
        let c = random_matrix(6, 3, 22);
        let lambda = 0.3;
        let w = solve(&g, &c, lambda).unwrap().weights;
        let best = ridge_objective(&g, &c, lambda, &w).unwrap();
        for k in 0..20 {
            let mut p = random_matrix(6, 3, 100 + k);
            p.scale(1e-3);
            p.add_assign(&w).unwrap();
            assert!(ridge_objective(&g, &c, lambda, &p).unwrap() > best);
        }
    }

    #[test]
    fn largest_eigenvalue_of_diagonal() {
        let g = packed(&[vec![3.0, 0.0, 0.0], vec![0.0, 7.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!((largest_eigenvalue(&g, 300) - 7.0).abs() < 1e-9);
    }
}
