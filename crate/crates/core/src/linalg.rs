//! Dense row-major matrices, one-sided Jacobi SVD and power-iteration
//! spectral norm estimation.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix stored in row-major order.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting shape mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "Matrix::new",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Rectangular matrix with `diag` on its main diagonal.
    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::validation(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Standard-normal entries.
    pub fn random_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                context: "matmul",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`, the batch-times-weights product of a dense layer.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension {
                context: "matmul_t",
                expected: self.cols,
                got: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension {
                context: "t_matmul",
                expected: self.rows,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                context: "sub",
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension {
                context: "vstack",
                expected: self.cols,
                got: other.cols,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns picked by index, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |r, c| self[(r, idx[c])])
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
/// Inner product, summed in four interleaved lanes so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Thin SVD `W = U · diag(sigma) · Vᵀ` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.iter().filter(|&&s| s > 0.0).count()
    }

    /// `U · diag(values) · Vᵀ` for a replacement spectrum.
    pub fn compose(&self, values: &[f64]) -> Matrix {
        let (m, r) = self.u.shape();
        let n = self.v.rows();
        let mut out = Matrix::zeros(m, n);
        for k in 0..r {
            let s = values[k];
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let us = self.u[(i, k)] * s;
                if us == 0.0 {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o += us * self.v[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.compose(&self.sigma)
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;
const RANK_CLAMP: f64 = 1e-12;

/// Full thin SVD by one-sided (Hestenes) Jacobi rotations.
pub fn svd(w: &Matrix) -> Result<SvdResult> {
    svd_warm(w, None)
}

/// [`svd`] started from the rotation basis of a previous decomposition of a
/// nearby matrix (see [`SvdResult::warm_basis`]), which cuts the number of
/// Jacobi sweeps when `w` changes slowly. A basis of the wrong size is
/// ignored.
pub fn svd_warm(w: &Matrix, basis: Option<&Matrix>) -> Result<SvdResult> {
    if w.rows == 0 || w.cols == 0 {
        return Err(Error::validation("svd of an empty matrix"));
    }
    if !w.is_finite() {
        return Err(Error::validation("svd input contains non-finite entries"));
    }
    let k = w.rows.min(w.cols);
    let basis = basis.filter(|b| b.shape() == (k, k));
    if w.rows < w.cols {
        let t = jacobi_tall(&w.transpose(), basis);
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    Ok(jacobi_tall(w, basis))
}

impl SvdResult {
    /// Square orthogonal factor to pass back into [`svd_warm`].
    pub fn warm_basis(&self) -> Matrix {
        if self.u.rows() >= self.v.rows() {
            self.v.clone()
        } else {
            self.u.clone()
        }
    }
}

/// One-sided Jacobi for `rows >= cols`. Columns of the working copy are
/// orthogonalized in place; `V` accumulates the rotations.
fn jacobi_tall(w: &Matrix, start: Option<&Matrix>) -> SvdResult {
    let (m, n) = w.shape();
    // column-major working storage so each rotation touches contiguous memory
    let (mut a, mut v): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match start {
        Some(v0) => {
            let wv = w.matmul(v0).expect("basis matches column count");
            ((0..n).map(|c| wv.col(c)).collect(), (0..n).map(|c| v0.col(c)).collect())
        }
        None => (
            (0..n).map(|c| w.col(c)).collect(),
            (0..n)
                .map(|c| {
                    let mut e = vec![0.0; n];
                    e[c] = 1.0;
                    e
                })
                .collect(),
        ),
    };

    let mut norms = vec![0.0; n];
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for (nrm, col) in norms.iter_mut().zip(&a) {
            *nrm = dot(col, col);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                norms[p] = (alpha - t * gamma).max(0.0);
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = a.iter().enumerate().map(|(j, col)| (norm2(col), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let sigma_max = order[0].0;

    let mut sigma = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for &(s, j) in &order {
        if s > RANK_CLAMP * sigma_max && s > 0.0 {
            sigma.push(s);
            u_cols.push(a[j].iter().map(|x| x / s).collect());
        } else {
            sigma.push(0.0);
            pending.push(u_cols.len());
            u_cols.push(Vec::new());
        }
        v_cols.push(v[j].clone());
    }
    complete_orthonormal(&mut u_cols, &pending, m);

    let u = Matrix::from_fn(m, n, |r, c| u_cols[c][r]);
    let v = Matrix::from_fn(n, n, |r, c| v_cols[c][r]);
    SvdResult { u, sigma, v }
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a = *xi;
        let b = *yi;
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the `pending` slots with unit vectors orthogonal to every other
/// column, drawing candidates from the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize], m: usize) {
    if pending.is_empty() {
        return;
    }
    let mut basis = 0usize;
    for &slot in pending {
        loop {
            assert!(basis < m, "ran out of basis vectors completing U");
            let mut cand = vec![0.0; m];
            cand[basis] = 1.0;
            basis += 1;
            // two Gram-Schmidt passes for stability
            for _ in 0..2 {
                for (k, col) in cols.iter().enumerate() {
                    if k == slot || col.is_empty() {
                        continue;
                    }
                    let proj = dot(&cand, col);
                    for (c, &q) in cand.iter_mut().zip(col) {
                        *c -= proj * q;
                    }
                }
            }
            let nrm = norm2(&cand);
            if nrm > 1e-6 {
                cols[slot] = cand.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

/// Persistent left-singular-vector estimate for warm-started power iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerIterState {
    u: Vec<f64>,
}

impl PowerIterState {
    /// Seeded random-normal start, normalized to unit length.
    pub fn new<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        loop {
            let u: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm2(&u);
            if n > 0.0 {
                return Self {
                    u: u.into_iter().map(|x| x / n).collect(),
                };
            }
        }
    }

    pub fn from_vec(u: Vec<f64>) -> Result<Self> {
        let n = norm2(&u);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::validation("power-iteration vector must be finite and non-zero"));
        }
        Ok(Self {
            u: u.into_iter().map(|x| x / n).collect(),
        })
    }

    pub fn vector(&self) -> &[f64] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Estimates the largest singular value of `w` with `iters` rounds of power
/// iteration starting from `state`, returning the estimate and the advanced
/// state. A zero matrix yields 0 and leaves the state unchanged.
pub fn spectral_norm(w: &Matrix, state: &PowerIterState, iters: usize) -> (f64, PowerIterState) {
    assert_eq!(state.len(), w.rows(), "power-iteration state length must equal rows");
    let mut u = state.u.clone();
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let mut v = w.t_mul_vec(&u);
        let nv = norm2(&v);
        if nv == 0.0 {
            return (0.0, state.clone());
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let mut wv = w.mul_vec(&v);
        let nu = norm2(&wv);
        if nu == 0.0 {
            return (0.0, state.clone());
        }
        sigma = nu;
        wv.iter_mut().for_each(|x| *x /= nu);
        u = wv;
    }
    (sigma, PowerIterState { u })
}

/// Estimate of σ₁ from the current state without advancing it:
/// `‖Wᵀu‖` for the stored unit vector `u`.
pub fn spectral_norm_estimate(w: &Matrix, state: &PowerIterState) -> f64 {
    norm2(&w.t_mul_vec(&state.u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn orthogonality_error(q: &Matrix) -> f64 {
        let qtq = q.t_matmul(q).unwrap();
        qtq.sub(&Matrix::identity(q.cols())).unwrap().frobenius_norm()
    }

    #[test]
    fn identity_singular_values() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_matrix_is_its_own_svd() {
        let d = Matrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        let s = svd(&d).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0, 1.0]);
        assert_eq!(s.u, Matrix::identity(3));
        assert_eq!(s.v, Matrix::identity(3));
    }

    #[test]
    fn random_rectangular_reconstructs() {
        let mut rng = stream(11, "svd-8x5");
        let w = Matrix::random_normal(8, 5, &mut rng);
        let s = svd(&w).unwrap();
        assert_eq!(s.sigma.len(), 5);
        let resid = s.reconstruct().sub(&w).unwrap().frobenius_norm();
        assert!(resid <= 1e-8 * w.frobenius_norm().max(1.0), "residual {resid}");
        assert!(orthogonality_error(&s.u) <= 1e-8);
        assert!(orthogonality_error(&s.v) <= 1e-8);
    }

    #[test]
    fn wide_and_rank_deficient_inputs() {
        let mut rng = stream(3, "wide");
        let a = Matrix::random_normal(3, 1, &mut rng);
        let b = Matrix::random_normal(1, 7, &mut rng);
        let w = a.matmul(&b).unwrap(); // rank one, 3x7
        let s = svd(&w).unwrap();
        assert_eq!(s.rank(), 1);
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.v.shape(), (7, 3));
        assert!(orthogonality_error(&s.u) <= 1e-8);
        assert!(orthogonality_error(&s.v) <= 1e-8);
        assert!(s.reconstruct().sub(&w).unwrap().frobenius_norm() <= 1e-8 * w.frobenius_norm().max(1.0));
    }

    #[test]
    fn zero_matrix_svd() {
        let s = svd(&Matrix::zeros(4, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert!(orthogonality_error(&s.u) <= 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = f64::INFINITY;
        assert!(matches!(svd(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn power_iteration_diagonal_and_zero() {
        let mut rng = stream(5, "pi");
        let d = Matrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        let (s, st) = spectral_norm(&d, &PowerIterState::new(3, &mut rng), 200);
        assert!((s - 3.0).abs() < 1e-10);
        assert!((norm2(st.vector()) - 1.0).abs() < 1e-12);

        let state = PowerIterState::new(4, &mut rng);
        let (s, st) = spectral_norm(&Matrix::zeros(4, 4), &state, 10);
        assert_eq!(s, 0.0);
        assert_eq!(st, state);
    }

    #[test]
    fn power_iteration_matches_svd_on_random_16x16() {
        let mut rng = stream(17, "pi-16");
        let w = Matrix::random_normal(16, 16, &mut rng);
        let exact = svd(&w).unwrap().sigma;
        assert!(exact[1] <= 0.99 * exact[0], "seed chosen with a spectral gap");
        let (s, _) = spectral_norm(&w, &PowerIterState::new(16, &mut rng), 200);
        assert!((s - exact[0]).abs() <= 1e-4 * exact[0].max(1.0));
    }
}
