//! Dense linear algebra, real-exponent ℓp norms, symmetric eigendecomposition,
//! positive semi-definite factors, operator norms and effective rank.
//!
//! Matrices are stored row-major. Eigendecompositions and Cholesky factors are
//! delegated to `nalgebra`; matrix products go through `matrixmultiply`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for [`psd_factor`].
pub const PSD_TOL: f64 = 1e-10;

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Whether `max |M_ij - M_ji| <= tol * max |M|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let bound = tol * self.max_abs();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > bound {
                    return false;
                }
            }
        }
        true
    }

    /// Averages the matrix with its transpose.
    pub fn symmetrized(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|x| c * x).collect())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        gemm(
            self.rows,
            self.cols,
            other.cols,
            (&self.data, self.cols, 1),
            (&other.data, other.cols, 1),
            (&mut out, other.cols, 1),
        );
        Ok(Matrix::from_raw(self.rows, other.cols, out))
    }

    /// `A A'`.
    pub fn gram(&self) -> Matrix {
        let (r, c) = (self.rows, self.cols);
        let mut out = vec![0.0; r * r];
        gemm(r, c, r, (&self.data, c, 1), (&self.data, 1, c), (&mut out, r, 1));
        // exact symmetry
        for i in 0..r {
            for j in (i + 1)..r {
                out[j * r + i] = out[i * r + j];
            }
        }
        Matrix::from_raw(r, r, out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        self.apply(v, &mut out);
        Ok(out)
    }

    /// Appends zero columns up to `cols`.
    pub fn padded_cols(&self, cols: usize) -> Matrix {
        debug_assert!(cols >= self.cols);
        Matrix::from_fn(self.rows, cols, |i, j| if j < self.cols { self.get(i, j) } else { 0.0 })
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// A linear map `R^in -> R^out`, typically a covariance factor `Γ` with `ΓΓ' = Σ`.
///
/// Structured factors (autoregressive, moving-average, one-factor) implement this
/// without materialising a dense matrix.
pub trait LinearFactor: Sync {
    fn out_dim(&self) -> usize;
    fn in_dim(&self) -> usize;
    fn apply(&self, input: &[f64], out: &mut [f64]);
}

impl LinearFactor for Matrix {
    fn out_dim(&self) -> usize {
        self.rows
    }

    fn in_dim(&self) -> usize {
        self.cols
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, input);
        }
        if self.cols == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `C = A B` for strided operands given as `(slice, row_stride, col_stride)`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    c: (&mut [f64], usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.0.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    assert!(a.0.len() > (m - 1) * a.1 + (k - 1) * a.2);
    assert!(b.0.len() > (k - 1) * b.1 + (n - 1) * b.2);
    assert!(c.0.len() > (m - 1) * c.1 + (n - 1) * c.2);
    // SAFETY: bounds of every operand were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            0.0,
            c.0.as_mut_ptr(),
            c.1 as isize,
            c.2 as isize,
        );
    }
}

/// Exponent of an ℓp norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpExponent {
    Finite(f64),
    Infinity,
    /// `max(ln t, 1)` where `t` is the vector length at the use site.
    LogDim,
}

impl LpExponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::Domain(format!("lp exponent must be >= 1, got {p}")));
        }
        if p.is_infinite() {
            return Ok(LpExponent::Infinity);
        }
        Ok(LpExponent::Finite(p))
    }

    /// Numeric exponent for vectors of length `dim` (`f64::INFINITY` for max-norm).
    pub fn resolve(self, dim: usize) -> f64 {
        match self {
            LpExponent::Finite(p) => p,
            LpExponent::Infinity => f64::INFINITY,
            LpExponent::LogDim => (dim.max(1) as f64).ln().max(1.0),
        }
    }

    /// Hölder conjugate for vectors of length `dim`.
    pub fn conjugate(self, dim: usize) -> f64 {
        let p = self.resolve(dim);
        if p.is_infinite() {
            1.0
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            p / (p - 1.0)
        }
    }
}

impl fmt::Display for LpExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpExponent::Finite(p) => write!(f, "{p}"),
            LpExponent::Infinity => f.write_str("inf"),
            LpExponent::LogDim => f.write_str("logt"),
        }
    }
}

impl FromStr for LpExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(LpExponent::Infinity),
            "logt" | "logd" | "log" => Ok(LpExponent::LogDim),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse lp exponent {s:?}")))?;
                LpExponent::finite(p)
            }
        }
    }
}

/// ℓp norm with exponent already resolved to a number (`INFINITY` for max-norm).
///
/// Uses max-rescaling so large exponents cannot overflow.
pub fn lp_norm_with(v: &[f64], p: f64) -> f64 {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    let inv = 1.0 / m;
    if p == 2.0 {
        let ss: f64 = v.iter().map(|x| {
            let y = x * inv;
            y * y
        }).sum();
        return m * ss.sqrt();
    }
    let s: f64 = v.iter().map(|x| (x.abs() * inv).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// ℓp norm; `LogDim` resolves against `v.len()`.
pub fn lp_norm(v: &[f64], p: LpExponent) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Dimension("lp norm of an empty vector".into()));
    }
    Ok(lp_norm_with(v, p.resolve(v.len())))
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `values`.
    pub vectors: Matrix,
}

impl EigenDecomp {
    /// `V f(Λ) V'`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.vectors.rows();
        let k = self.values.len();
        let scaled = Matrix::from_fn(n, k, |i, j| self.vectors.get(i, j) * f(self.values[j]));
        let mut out = vec![0.0; n * n];
        gemm(
            n,
            k,
            n,
            (scaled.as_slice(), k, 1),
            (self.vectors.as_slice(), 1, k),
            (&mut out, n, 1),
        );
        let mut m = Matrix::from_raw(n, n, out);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m.get(i, j) + m.get(j, i));
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }
}

/// Symmetry tolerance used to validate inputs of the symmetric routines.
const SYM_TOL: f64 = 1e-12;

fn require_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("expected a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    if !m.is_symmetric(SYM_TOL) {
        return Err(Error::Shape("matrix is not symmetric".into()));
    }
    Ok(())
}

pub fn sym_eigen(m: &Matrix) -> Result<EigenDecomp> {
    require_symmetric(m)?;
    let n = m.rows();
    if n == 0 {
        return Ok(EigenDecomp { values: vec![], vectors: Matrix::zeros(0, 0) });
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.symmetrized().to_nalgebra(), f64::EPSILON, 1000 * n)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenDecomp { values, vectors })
}

/// Lower Cholesky factor when `m` is numerically positive definite.
pub fn cholesky(m: &Matrix) -> Option<Matrix> {
    if !m.is_square() || m.rows() == 0 {
        return None;
    }
    let chol = nalgebra::Cholesky::new(m.symmetrized().to_nalgebra())?;
    Some(Matrix::from_nalgebra(&chol.l()))
}

/// Factor `Γ` (t×s) with `ΓΓ' = M⁺`, where `M⁺` clips eigenvalues in `(-tol·scale, 0]` to zero.
///
/// Strictly positive definite inputs take the Cholesky route (s = t); otherwise the
/// eigenpairs with `λ > tol·scale` are retained, `scale = max |λ|`.
pub fn psd_factor(m: &Matrix, tol: f64) -> Result<Matrix> {
    require_symmetric(m)?;
    let n = m.rows();
    let max_diag = m.diag().iter().fold(0.0f64, |a, &b| a.max(b));
    if max_diag > 0.0 {
        if let Some(l) = cholesky(m) {
            let min_pivot = (0..n).map(|i| l.get(i, i) * l.get(i, i)).fold(f64::INFINITY, f64::min);
            if min_pivot > tol * max_diag {
                return Ok(l);
            }
        }
    }
    let eig = sym_eigen(m)?;
    let scale = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let threshold = tol * scale;
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -threshold {
        return Err(Error::NotPsd { min_eigenvalue: min, threshold: -threshold });
    }
    let keep: Vec<usize> = (0..eig.values.len()).filter(|&k| eig.values[k] > threshold).collect();
    Ok(Matrix::from_fn(n, keep.len(), |i, j| {
        eig.vectors.get(i, keep[j]) * eig.values[keep[j]].sqrt()
    }))
}

/// Operator norm variants supported by [`op_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpNorm {
    /// Largest singular value.
    TwoTwo,
    /// `‖·‖_{1→∞}`, the largest absolute entry.
    OneInf,
    /// `‖·‖_{2→p}`; closed forms for p ∈ {2, ∞} or diagonal matrices only.
    TwoP(LpExponent),
}

fn is_diagonal(m: &Matrix) -> bool {
    m.is_square() && (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m.get(i, j) == 0.0))
}

fn largest_singular_value(m: &Matrix) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(0.0);
    }
    if m.is_square() && m.is_symmetric(SYM_TOL) {
        let eig = sym_eigen(m)?;
        return Ok(eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs())));
    }
    let mtm = m.transpose().gram();
    let eig = sym_eigen(&mtm)?;
    Ok(eig.values[0].max(0.0).sqrt())
}

pub fn op_norm(m: &Matrix, kind: OpNorm) -> Result<f64> {
    match kind {
        OpNorm::TwoTwo => largest_singular_value(m),
        OpNorm::OneInf => Ok(m.max_abs()),
        OpNorm::TwoP(p) => {
            let p = p.resolve(m.rows());
            if p == 2.0 {
                largest_singular_value(m)
            } else if p.is_infinite() {
                Ok((0..m.rows()).map(|i| lp_norm_with(m.row(i), 2.0)).fold(0.0, f64::max))
            } else if is_diagonal(m) {
                let d: Vec<f64> = m.diag().iter().map(|x| x.abs()).collect();
                if p >= 2.0 {
                    Ok(d.iter().fold(0.0, |a, &b| a.max(b)))
                } else {
                    Ok(lp_norm_with(&d, 2.0 * p / (2.0 - p)))
                }
            } else {
                Err(Error::UnsupportedNorm(format!(
                    "2->{p} operator norm of a non-diagonal matrix"
                )))
            }
        }
    }
}

/// `tr(M) / ‖M‖_{2→2}` for a PSD matrix.
pub fn effective_rank(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Shape("effective rank needs a square matrix".into()));
    }
    let op = op_norm(m, OpNorm::TwoTwo)?;
    if op == 0.0 {
        return Err(Error::Degenerate("effective rank of the zero matrix".into()));
    }
    Ok(m.trace() / op)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(n: usize, m: usize, seed: u64) -> Matrix {
        let mut s = seed;
        Matrix::from_fn(n, m, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        lcg_matrix(n, n, seed).symmetrized()
    }

    #[test]
    fn lp_norm_examples() {
        assert_eq!(lp_norm(&[3.0, 4.0], LpExponent::Finite(2.0)).unwrap(), 5.0);
        assert_eq!(lp_norm(&[1.0, -2.0, 3.0], LpExponent::Infinity).unwrap(), 3.0);
        let e = lp_norm(&[1.0; 8], LpExponent::LogDim).unwrap();
        assert!((e - std::f64::consts::E).abs() < 1e-12);
        assert!(matches!(lp_norm(&[], LpExponent::Infinity), Err(Error::Dimension(_))));
    }

    #[test]
    fn lp_norm_no_overflow() {
        let v = vec![1e300; 10_000];
        let n = lp_norm_with(&v, 9.2);
        assert!(n.is_finite());
        assert!((n / (1e300 * 10_000f64.powf(1.0 / 9.2)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_dim_floor_is_one() {
        assert_eq!(LpExponent::LogDim.resolve(2), 1.0);
        assert!((LpExponent::LogDim.resolve(100) - 100f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("inf".parse::<LpExponent>().unwrap(), LpExponent::Infinity);
        assert_eq!("2".parse::<LpExponent>().unwrap(), LpExponent::Finite(2.0));
        assert_eq!("logt".parse::<LpExponent>().unwrap(), LpExponent::LogDim);
        assert!("0.5".parse::<LpExponent>().is_err());
    }

    #[test]
    fn eigen_examples() {
        let e = sym_eigen(&Matrix::identity(5)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let e = sym_eigen(&Matrix::from_diag(&[2.0, -1.0])).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14 && (e.values[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstruction_residual() {
        let m = random_symmetric(20, 7);
        let e = sym_eigen(&m).unwrap();
        let rec = e.reconstruct_with(|x| x);
        let resid = rec.sub(&m).unwrap().frobenius_norm();
        assert!(resid <= 1e-9 * (1.0 + m.frobenius_norm()), "residual {resid}");
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(20)).unwrap().max_abs() < 1e-9);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigen(&m), Err(Error::Shape(_))));
    }

    #[test]
    fn psd_factor_examples() {
        let g = psd_factor(&Matrix::identity(3), PSD_TOL).unwrap();
        assert!(g.gram().sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-14);

        let g = psd_factor(&Matrix::from_diag(&[4.0, 0.0]), PSD_TOL).unwrap();
        assert_eq!(g.cols(), 1);
        assert!((g.get(0, 0).abs() - 2.0).abs() < 1e-14 && g.get(1, 0).abs() < 1e-14);

        let w = [1.0, 2.0, 2.0];
        let ww = Matrix::from_fn(3, 3, |i, j| w[i] * w[j]);
        let g = psd_factor(&ww, PSD_TOL).unwrap();
        assert_eq!(g.cols(), 1);
        let sign = g.get(0, 0).signum();
        for (i, wi) in w.iter().enumerate() {
            assert!((sign * g.get(i, 0) - wi).abs() < 1e-12);
        }
        assert!(g.gram().sub(&ww).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let m = Matrix::from_diag(&[1.0, -0.5]);
        assert!(matches!(psd_factor(&m, PSD_TOL), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn psd_factor_clips_roundoff_negatives() {
        let m = Matrix::from_diag(&[1.0, -1e-13]);
        let g = psd_factor(&m, PSD_TOL).unwrap();
        assert_eq!(g.cols(), 1);
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&Matrix::identity(4), OpNorm::TwoTwo).unwrap() - 1.0).abs() < 1e-14);
        let m = Matrix::from_rows(&[vec![1.0, -3.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(op_norm(&m, OpNorm::OneInf).unwrap(), 3.0);
        let d = Matrix::from_diag(&[3.0, 4.0]);
        assert!((op_norm(&d, OpNorm::TwoP(LpExponent::Finite(1.0))).unwrap() - 5.0).abs() < 1e-14);
        let d = Matrix::from_diag(&[1.0, 2.0]);
        assert_eq!(op_norm(&d, OpNorm::TwoP(LpExponent::Finite(4.0))).unwrap(), 2.0);
        assert!(matches!(
            op_norm(&m, OpNorm::TwoP(LpExponent::Finite(3.0))),
            Err(Error::UnsupportedNorm(_))
        ));
    }

    #[test]
    fn op_norm_two_inf_is_max_row_norm() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(op_norm(&m, OpNorm::TwoP(LpExponent::Infinity)).unwrap(), 5.0);
    }

    #[test]
    fn two_two_general_matrix() {
        // singular values of [[1,-3],[2,0]]: sqrt of eigenvalues of [[5,-3],[-3,9]]
        let m = Matrix::from_rows(&[vec![1.0, -3.0], vec![2.0, 0.0]]).unwrap();
        let expected = ((14.0 + (16.0f64 + 36.0).sqrt()) / 2.0).sqrt();
        assert!((op_norm(&m, OpNorm::TwoTwo).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn effective_rank_examples() {
        assert!((effective_rank(&Matrix::identity(7)).unwrap() - 7.0).abs() < 1e-12);
        assert!((effective_rank(&Matrix::from_diag(&[1.0, 0.0, 0.0])).unwrap() - 1.0).abs() < 1e-14);
        let eq = Matrix::from_fn(10, 10, |i, j| if i == j { 1.0 } else { 0.8 });
        let expected = 10.0 / (0.2 + 0.8 * 10.0);
        assert!((effective_rank(&eq).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(effective_rank(&Matrix::zeros(3, 3)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn matmul_and_gram_agree() {
        let a = lcg_matrix(5, 3, 3);
        let g1 = a.gram();
        let g2 = a.matmul(&a.transpose()).unwrap();
        assert!(g1.sub(&g2).unwrap().max_abs() < 1e-14);
    }
}
