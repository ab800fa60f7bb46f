//! Transition matrices of the upload and queue chains, and the discounted
//! cost-to-go `(I - gamma M)^{-1} g`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{binomial_pmf, queue_successors, QueueState};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Dense row-stochastic matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    inner: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn from_matrix(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.nrows() != inner.ncols() {
            return Err(Error::Numerical(format!("matrix is {}x{}, not square", inner.nrows(), inner.ncols())));
        }
        let m = StochasticMatrix { inner };
        if m.inner.iter().any(|&x| !(-ROW_SUM_TOLERANCE..=1.0 + ROW_SUM_TOLERANCE).contains(&x)) {
            return Err(Error::Numerical("transition matrix has an entry outside [0, 1]".into()));
        }
        let err = m.max_row_sum_error();
        if err > ROW_SUM_TOLERANCE {
            return Err(Error::Numerical(format!("row sums deviate from 1 by {err:e}")));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.inner.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Dominant eigenvalue magnitude estimated by power iteration from a
    /// non-uniform positive start vector.
    pub fn spectral_radius(&self, iterations: usize) -> f64 {
        let n = self.dim();
        let mut x = DVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
        let mut ratio = 0.0;
        for _ in 0..iterations {
            let y = &self.inner * &x;
            let norm_x = x.amax();
            let norm_y = y.amax();
            if norm_y == 0.0 {
                return 0.0;
            }
            ratio = norm_y / norm_x;
            x = y / norm_y;
        }
        ratio
    }
}

/// Per-state cost vector of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVector(pub Vec<f64>);

impl CostVector {
    /// Upload chain: entry `i` is `i` (jobs in flight).
    pub fn upload(n_max: usize) -> Self {
        CostVector((0..=n_max).map(|i| i as f64).collect())
    }

    /// Queue chain: `ceil(i / eta_max)` (the queue length) below the
    /// overflow band, `l_max + beta` for states with a full queue.
    pub fn queue(l_max: usize, eta_max: usize, beta: f64) -> Self {
        let dim = l_max * eta_max + 1;
        CostVector(
            (0..dim)
                .map(|i| if i <= (l_max - 1) * eta_max { i.div_ceil(eta_max) as f64 } else { l_max as f64 + beta })
                .collect(),
        )
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(0.0, f64::max)
    }
}

/// Transition matrix of the in-flight count on one AP-to-server link:
/// Bernoulli(`lambda`) dispatches, Binomial(N, 1/`mean_delay`) completions,
/// and the count clamped at `n_max`.
pub fn build_upload_matrix(lambda: f64, mean_delay: f64, n_max: usize) -> StochasticMatrix {
    let p = 1.0 / mean_delay;
    let dim = n_max + 1;
    let mut mat = DMatrix::zeros(dim, dim);
    for q in 0..dim {
        let completions = binomial_pmf(q, p);
        for (a, pa) in [(0usize, 1.0 - lambda), (1usize, lambda)] {
            if pa == 0.0 {
                continue;
            }
            for (d, &pd) in completions.iter().enumerate() {
                let next = (q + a - d).min(n_max);
                mat[(q, next)] += pa * pd;
            }
        }
    }
    StochasticMatrix::from_matrix(mat).expect("upload matrix rows are stochastic by construction")
}

/// Queue chain with at most one arrival per slot, affine in the arrival
/// probability: `P(alpha) = base + alpha * slope`, stored sparsely.
#[derive(Clone, Debug)]
pub struct QueueKernel {
    dim: usize,
    eta_max: usize,
    /// `(col, base, slope)` per row.
    rows: Vec<Vec<(usize, f64, f64)>>,
}

impl QueueKernel {
    pub fn new(pmf: &[f64], l_max: usize, eta_max: usize) -> Self {
        let dim = l_max * eta_max + 1;
        let mut rows = Vec::with_capacity(dim);
        for i in 0..dim {
            let q = QueueState::from_index(i, eta_max);
            let mut entries: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for (succ, p) in queue_successors(q, 0, l_max, pmf) {
                entries.entry(succ.index(eta_max)).or_default().0 += p;
            }
            for (succ, p) in queue_successors(q, 1, l_max, pmf) {
                entries.entry(succ.index(eta_max)).or_default().1 += p;
            }
            // P(alpha) = (1 - alpha) P0 + alpha P1
            rows.push(entries.into_iter().map(|(c, (p0, p1))| (c, p0, p1 - p0)).collect());
        }
        QueueKernel { dim, eta_max, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta_max(&self) -> usize {
        self.eta_max
    }

    pub fn matrix(&self, alpha: f64) -> StochasticMatrix {
        let alpha = clamp_probability(alpha);
        let mut mat = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, base, slope) in row {
                mat[(i, c)] = (base + alpha * slope).clamp(0.0, 1.0);
            }
        }
        StochasticMatrix::from_matrix(mat).expect("queue matrix rows are stochastic by construction")
    }

    /// `out = P(alpha) x`
    pub fn apply(&self, alpha: f64, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = row.iter().map(|&(c, b, s)| (b + alpha * s) * x[c]).sum();
        }
    }

    /// `out = r^T P(alpha)`
    pub fn apply_row(&self, alpha: f64, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let ri = r[i];
            if ri == 0.0 {
                continue;
            }
            for &(c, b, s) in row {
                out[c] += ri * (b + alpha * s);
            }
        }
    }
}

fn clamp_probability(alpha: f64) -> f64 {
    assert!(!alpha.is_nan(), "arrival probability is NaN");
    if !(0.0..=1.0).contains(&alpha) {
        log::debug!("clamping queue arrival probability {alpha} into [0, 1]");
    }
    alpha.clamp(0.0, 1.0)
}

/// Dense queue-chain transition matrix for arrival probability `alpha`
/// (clamped to `[0, 1]`).
pub fn build_queue_matrix(alpha: f64, pmf: &[f64], l_max: usize, eta_max: usize) -> StochasticMatrix {
    QueueKernel::new(pmf, l_max, eta_max).matrix(alpha)
}

/// Solves `(I - gamma M) x = g`.
pub fn discounted_cost_to_go(m: &StochasticMatrix, g: &CostVector, gamma: f64) -> Result<Vec<f64>> {
    let n = m.dim();
    if g.0.len() != n {
        return Err(Error::Numerical(format!("cost vector has length {}, matrix dimension is {n}", g.0.len())));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Numerical(format!("discount {gamma} outside (0, 1)")));
    }
    let system = DMatrix::identity(n, n) - m.as_matrix() * gamma;
    let rhs = DVector::from_column_slice(&g.0);
    let x = system.lu().solve(&rhs).ok_or_else(|| Error::Numerical("I - gamma M is singular".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite cost-to-go".into()));
    }
    let mut x: Vec<f64> = x.iter().cloned().collect();
    // Absorbing zero-cost states are exactly zero; LU leaves round-off there.
    for (i, v) in x.iter_mut().enumerate() {
        if g.0[i] == 0.0 && m.entry(i, i) == 1.0 {
            *v = 0.0;
        }
    }
    Ok(x)
}

/// Smallest `T` with `gamma^T c_max / (1 - gamma) < eps`.
pub fn truncation_horizon(eps: f64, gamma: f64, c_max: f64) -> usize {
    if c_max <= 0.0 {
        return 1;
    }
    let t = ((eps * (1.0 - gamma) / c_max).ln() / gamma.ln()).ceil();
    (t.max(1.0)) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upload_matrix_fixture() {
        let m = build_upload_matrix(0.5, 2.0, 1);
        let expected = [[0.5, 0.5], [0.25, 0.75]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((m.entry(i, j) - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn upload_matrix_first_row() {
        for &(lambda, delay, n_max) in &[(0.3, 4.0, 5), (0.9, 1.0, 2), (0.0, 7.5, 3)] {
            let m = build_upload_matrix(lambda, delay, n_max);
            assert_eq!(m.entry(0, 0), 1.0 - lambda);
            assert_eq!(m.entry(0, 1), lambda);
            for p in 2..=n_max {
                assert_eq!(m.entry(0, p), 0.0);
            }
        }
    }

    #[test]
    fn queue_matrix_single_slot_jobs() {
        let m = build_queue_matrix(0.0, &[1.0], 1, 1);
        assert_eq!(m.dim(), 2);
        assert_eq!(m.entry(0, 0), 1.0);
        assert_eq!(m.entry(0, 1), 0.0);
        assert_eq!(m.entry(1, 0), 1.0);
        assert_eq!(m.entry(1, 1), 0.0);
    }

    #[test]
    fn queue_matrix_saturated_idle_row() {
        let pmf = [0.2, 0.3, 0.5];
        let m = build_queue_matrix(1.0, &pmf, 2, 3);
        assert_eq!(m.entry(0, 0), 0.0);
        for (b, &p) in pmf.iter().enumerate() {
            // (L = 1, eta = b + 1) sits at index b + 1
            assert!((m.entry(0, b + 1) - p).abs() < 1e-15);
        }
    }

    #[test]
    fn queue_cost_vector_layout() {
        let c = CostVector::queue(3, 2, 10.0);
        assert_eq!(c.0, vec![0.0, 1.0, 1.0, 2.0, 2.0, 13.0, 13.0]);
    }

    #[test]
    fn cost_to_go_of_identity() {
        let m = StochasticMatrix::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let x = discounted_cost_to_go(&m, &CostVector::upload(3), 0.9).unwrap();
        for (i, v) in x.iter().enumerate() {
            assert!((v - 10.0 * i as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_death_fixture() {
        let m = build_upload_matrix(0.0, 2.0, 1);
        let x = discounted_cost_to_go(&m, &CostVector::upload(1), 0.9).unwrap();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 1.0 / (1.0 - 0.45)).abs() < 1e-12);
    }

    #[test]
    fn horizon_tail_bound() {
        let t = truncation_horizon(1e-6, 0.9, 5.0);
        assert!(0.9f64.powi(t as i32) * 5.0 / 0.1 < 1e-6);
        assert!(0.9f64.powi(t as i32 - 1) * 5.0 / 0.1 >= 1e-6);
    }

    #[test]
    fn rejects_non_stochastic() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.0, 1.0]);
        assert!(StochasticMatrix::from_matrix(bad).is_err());
    }

    #[test]
    fn kernel_apply_matches_dense() {
        let pmf = [0.1, 0.6, 0.3];
        let kernel = QueueKernel::new(&pmf, 3, 3);
        let dense = kernel.matrix(0.37);
        let x: Vec<f64> = (0..kernel.dim()).map(|i| (i as f64).sin()).collect();
        let mut out = vec![0.0; kernel.dim()];
        kernel.apply(0.37, &x, &mut out);
        let mut row_out = vec![0.0; kernel.dim()];
        kernel.apply_row(0.37, &x, &mut row_out);
        for i in 0..kernel.dim() {
            let expect: f64 = (0..kernel.dim()).map(|c| dense.entry(i, c) * x[c]).sum();
            assert!((out[i] - expect).abs() < 1e-14);
            let expect_row: f64 = (0..kernel.dim()).map(|r| x[r] * dense.entry(r, i)).sum();
            assert!((row_out[i] - expect_row).abs() < 1e-14);
        }
    }
}
