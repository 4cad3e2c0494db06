//! Covariance estimation for the transformed observations `RX_i`: naive sample
//! covariance with a rank `n−1` factor, hard thresholding, PSD projection,
//! banding, default thresholds, studentization and the self-normalized
//! covariance of unit-projected observations.
//!
//! All covariances use the `1/n` divisor.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{gemm, lp_norm_with, psd_factor, sym_eigen, Matrix, PSD_TOL};

/// Linear restriction `H₀: Rμ = r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    restriction: Option<Matrix>,
    target: Vec<f64>,
}

impl Hypothesis {
    /// `R = I_d`, `r = 0`.
    pub fn identity(d: usize) -> Self {
        Self { restriction: None, target: vec![0.0; d] }
    }

    /// `R = I_d` with a given target (`d = r.len()`).
    pub fn identity_with_target(target: Vec<f64>) -> Result<Self> {
        check_finite(&target)?;
        Ok(Self { restriction: None, target })
    }

    pub fn new(restriction: Matrix, target: Vec<f64>) -> Result<Self> {
        if restriction.rows() != target.len() {
            return Err(Error::Shape(format!(
                "restriction has {} rows but target has length {}",
                restriction.rows(),
                target.len()
            )));
        }
        check_finite(&target)?;
        Ok(Self { restriction: Some(restriction), target })
    }

    pub fn is_identity(&self) -> bool {
        self.restriction.is_none()
    }

    pub fn restriction(&self) -> Option<&Matrix> {
        self.restriction.as_ref()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Number of restrictions `t`.
    pub fn t(&self) -> usize {
        self.target.len()
    }

    /// Dimension `d` the hypothesis expects.
    pub fn d(&self) -> usize {
        self.restriction.as_ref().map_or(self.target.len(), Matrix::cols)
    }

    /// Same restriction with target `Rμ`.
    pub fn retargeted(&self, mu: &[f64]) -> Result<Self> {
        let target = self.apply(mu)?;
        match &self.restriction {
            None => Self::identity_with_target(target),
            Some(r) => Self::new(r.clone(), target),
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.d() != d {
            return Err(Error::Shape(format!(
                "hypothesis expects dimension {}, data has {d}",
                self.d()
            )));
        }
        Ok(())
    }

    /// `Rx`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        match &self.restriction {
            None => Ok(x.to_vec()),
            Some(r) => r.mul_vec(x),
        }
    }

    /// Rows `RX_i` as an `n × t` matrix.
    pub fn transform_rows(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x.cols())?;
        match &self.restriction {
            None => Ok(x.clone()),
            Some(r) => {
                let (n, d, t) = (x.rows(), x.cols(), r.rows());
                let mut out = vec![0.0; n * t];
                gemm(n, d, t, (x.as_slice(), d, 1), (r.as_slice(), 1, d), (&mut out, t, 1));
                Ok(Matrix::from_raw(n, t, out))
            }
        }
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite hypothesis target".into()))
    }
}

/// How a [`CovModel`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMethod {
    Naive,
    Thresholded { lambda: f64 },
    Banded { k: usize },
    SelfNormalized,
    /// Supplied directly by the caller.
    External,
}

/// PSD covariance estimate `Ω̂` together with a factor `Γ̂` (t×s), `Γ̂Γ̂' = Ω̂`.
///
/// For Gram-type estimates the factor is primary and `Ω̂` is formed on first use.
#[derive(Debug, Clone)]
pub struct CovModel {
    factor: Matrix,
    omega: OnceLock<Matrix>,
    method: CovMethod,
    zero_rows: usize,
}

impl CovModel {
    pub fn from_factor(factor: Matrix, method: CovMethod) -> Self {
        Self { factor, omega: OnceLock::new(), method, zero_rows: 0 }
    }

    /// Wraps a PSD matrix, computing its factor with [`psd_factor`].
    pub fn from_omega(omega: Matrix, method: CovMethod) -> Result<Self> {
        let factor = psd_factor(&omega, PSD_TOL)?;
        let lock = OnceLock::new();
        let _ = lock.set(omega);
        Ok(Self { factor, omega: lock, method, zero_rows: 0 })
    }

    pub fn omega_hat(&self) -> &Matrix {
        self.omega.get_or_init(|| self.factor.gram())
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn method(&self) -> CovMethod {
        self.method
    }

    /// Columns of the factor.
    pub fn s(&self) -> usize {
        self.factor.cols()
    }

    pub fn t(&self) -> usize {
        self.factor.rows()
    }

    /// Zero factor (`s = 0`), e.g. from constant data.
    pub fn is_degenerate(&self) -> bool {
        self.s() == 0
    }

    /// Observations mapped to the zero vector by self-normalization.
    pub fn zero_rows(&self) -> usize {
        self.zero_rows
    }
}

/// Rows of `y` minus their column means.
fn centered(y: &Matrix) -> Matrix {
    let (n, t) = (y.rows(), y.cols());
    let mut mean = vec![0.0; t];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(y.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut out = y.clone();
    for i in 0..n {
        for (v, m) in out.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    out
}

/// Naive sample covariance of `RX_i` with the `1/n` divisor.
///
/// The factor has `n−1` columns: the centred data rotated by Helmert contrasts,
/// `Γ[:,k] = (Σ_{i<k} y_i − k·y_k) / √(k(k+1)n)`, so `ΓΓ' = Ω̂`.
pub fn sample_cov_transformed(x: &Matrix, h: &Hypothesis) -> Result<CovModel> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::SampleSize { required: 2, got: n });
    }
    let y = h.transform_rows(x)?;
    let t = y.cols();
    if (1..n).all(|i| y.row(i) == y.row(0)) {
        let model = CovModel::from_factor(Matrix::zeros(t, 0), CovMethod::Naive);
        let _ = model.omega.set(Matrix::zeros(t, t));
        return Ok(model);
    }
    let yc = centered(&y);
    let s = n - 1;
    let mut factor = Matrix::zeros(t, s);
    let mut running = yc.row(0).to_vec();
    let nf = n as f64;
    for k in 1..n {
        let kf = k as f64;
        let scale = 1.0 / (kf * (kf + 1.0) * nf).sqrt();
        let row = yc.row(k);
        for j in 0..t {
            factor.set(j, k - 1, (running[j] - kf * row[j]) * scale);
        }
        for (r, v) in running.iter_mut().zip(row) {
            *r += v;
        }
    }
    Ok(CovModel::from_factor(factor, CovMethod::Naive))
}

/// Centred, `1/√n`-scaled transformed data as a `t × n` factor; its Gram matrix is
/// the naive covariance. This is the factor behind the Gaussian multiplier bootstrap.
pub fn centered_data_factor(x: &Matrix, h: &Hypothesis) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::SampleSize { required: 2, got: n });
    }
    let yc = centered(&h.transform_rows(x)?);
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Matrix::from_fn(yc.cols(), n, |j, i| yc.get(i, j) * scale))
}

/// `T_λ(Ω) = (ω_jk 1{|ω_jk| > λ})`, diagonal included.
pub fn hard_threshold(omega: &Matrix, lambda: f64) -> Result<Matrix> {
    hard_threshold_with(omega, lambda, false)
}

/// [`hard_threshold`] with an option to leave the diagonal untouched.
pub fn hard_threshold_with(omega: &Matrix, lambda: f64, preserve_diagonal: bool) -> Result<Matrix> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Domain(format!("threshold must be nonnegative, got {lambda}")));
    }
    if !omega.is_square() {
        return Err(Error::Shape("thresholding needs a square matrix".into()));
    }
    Ok(Matrix::from_fn(omega.rows(), omega.cols(), |i, j| {
        let v = omega.get(i, j);
        if v.abs() > lambda || (preserve_diagonal && i == j) {
            v
        } else {
            0.0
        }
    }))
}

/// Frobenius-nearest PSD matrix, `V max(Λ, 0) V'`.
pub fn psd_project(omega: &Matrix) -> Result<Matrix> {
    let eig = sym_eigen(omega)?;
    Ok(eig.reconstruct_with(|l| l.max(0.0)))
}

/// PSD projection together with a factor of the projection, from one eigendecomposition.
fn project_with_factor(omega: &Matrix) -> Result<(Matrix, Matrix)> {
    let eig = sym_eigen(omega)?;
    let projected = eig.reconstruct_with(|l| l.max(0.0));
    let scale = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let keep: Vec<usize> = (0..eig.values.len()).filter(|&k| eig.values[k] > PSD_TOL * scale).collect();
    let t = omega.rows();
    let factor = Matrix::from_fn(t, keep.len(), |i, j| {
        eig.vectors.get(i, keep[j]) * eig.values[keep[j]].sqrt()
    });
    Ok((projected, factor))
}

/// Tail regime selecting the default thresholding rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRegime {
    SubGaussian,
    HeavyTail,
}

/// Default threshold: `c·max(√(log t/n), log t/n)` (sub-Gaussian) or
/// `c·max((log t/n)^{1/4}, √(log t/n))` (heavy tails / log-concave).
pub fn default_lambda(t: f64, n: f64, regime: TailRegime, c: f64) -> f64 {
    let rate = t.ln() / n;
    match regime {
        TailRegime::SubGaussian => c * rate.sqrt().max(rate),
        TailRegime::HeavyTail => c * rate.powf(0.25).max(rate.sqrt()),
    }
}

/// Zeroes entries with `|i−j| > k`, then projects onto the PSD cone.
pub fn band(omega: &Matrix, k: usize) -> Result<Matrix> {
    psd_project(&band_only(omega, k))
}

fn band_only(omega: &Matrix, k: usize) -> Matrix {
    Matrix::from_fn(omega.rows(), omega.cols(), |i, j| {
        if i.abs_diff(j) > k {
            0.0
        } else {
            omega.get(i, j)
        }
    })
}

/// `T_λ⁺(Ω̂^naive)` with its factor.
pub fn thresholded_cov(x: &Matrix, h: &Hypothesis, lambda: f64, preserve_diagonal: bool) -> Result<CovModel> {
    let naive = sample_cov_transformed(x, h)?;
    let thresholded = hard_threshold_with(naive.omega_hat(), lambda, preserve_diagonal)?;
    let (omega, factor) = project_with_factor(&thresholded)?;
    let model = CovModel::from_factor(factor, CovMethod::Thresholded { lambda });
    let _ = model.omega.set(omega);
    Ok(model)
}

/// Banded-then-projected naive covariance with its factor.
pub fn banded_cov(x: &Matrix, h: &Hypothesis, k: usize) -> Result<CovModel> {
    let naive = sample_cov_transformed(x, h)?;
    let (omega, factor) = project_with_factor(&band_only(naive.omega_hat(), k))?;
    let model = CovModel::from_factor(factor, CovMethod::Banded { k });
    let _ = model.omega.set(omega);
    Ok(model)
}

/// Divides each column by its sample standard deviation (`1/n` divisor).
///
/// Returns the scaled data and the diagonal of `R̂ = diag(1/σ̂_jj)`.
pub fn studentize(x: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::SampleSize { required: 2, got: n });
    }
    let xc = centered(x);
    let mut inv_sd = vec![0.0; d];
    for (j, inv) in inv_sd.iter_mut().enumerate() {
        let var = (0..n).map(|i| xc.get(i, j).powi(2)).sum::<f64>() / n as f64;
        if var.is_nan() || var <= 0.0 {
            return Err(Error::DegenerateColumn(j));
        }
        *inv = 1.0 / var.sqrt();
    }
    let scaled = Matrix::from_fn(n, d, |i, j| x.get(i, j) * inv_sd[j]);
    Ok((scaled, inv_sd))
}

/// Unit-ℓ2 projections `X̃_i = z_i/‖z_i‖₂` with `z_i = RX_i − r`, or `z_i = R(X_i − μ)`
/// when a centre `μ` is given; zero rows stay zero. Returns the rows and the zero count.
pub fn normalized_rows(x: &Matrix, h: &Hypothesis, center: Option<&[f64]>) -> Result<(Matrix, usize)> {
    let mut y = h.transform_rows(x)?;
    let shift = match center {
        Some(mu) => h.apply(mu)?,
        None => h.target().to_vec(),
    };
    let mut zero_rows = 0;
    for i in 0..y.rows() {
        let row = y.row_mut(i);
        for (v, s) in row.iter_mut().zip(&shift) {
            *v -= s;
        }
        let norm = lp_norm_with(row, 2.0);
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
            zero_rows += 1;
        }
    }
    Ok((y, zero_rows))
}

/// `Ω̃ = n⁻¹ Σ X̃_i X̃_i'`; the factor holds the nonzero `X̃_i/√n` as columns.
pub fn selfnorm_cov(x: &Matrix, h: &Hypothesis, center: Option<&[f64]>) -> Result<CovModel> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::SampleSize { required: 1, got: 0 });
    }
    let (rows, zero_rows) = normalized_rows(x, h, center)?;
    let keep: Vec<usize> = (0..n).filter(|&i| rows.row(i).iter().any(|&v| v != 0.0)).collect();
    let scale = 1.0 / (n as f64).sqrt();
    let factor = Matrix::from_fn(rows.cols(), keep.len(), |j, k| rows.get(keep[k], j) * scale);
    let mut model = CovModel::from_factor(factor, CovMethod::SelfNormalized);
    model.zero_rows = zero_rows;
    Ok(model)
}
