//! Test statistics, Monte-Carlo proxy distributions and the resulting decisions.
//!
//! A proxy sample is a sorted vector of `B` nonnegative draws. Draw `b` is a pure
//! function of `(stream, b)`: it reads the counter range starting at
//! `b · units_per_draw`, so the sample does not depend on how draws are scheduled.
//! Critical values are order statistics, `c = x_(k)` with `k = ⌊(1−α)B⌋`, and a test
//! rejects iff `statistic ≥ c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{centered_data_factor, normalized_rows, CovModel, Hypothesis};
use crate::numcore::{gemm, lp_norm, lp_norm_with, psd_factor, LpExponent, Matrix, PSD_TOL};
use crate::randgen::{normal_units, RngStream};

/// Draws per batched matrix product.
const CHUNK: usize = 64;

/// Guards `⌊(1−α)B⌋` against products like `0.95·20 = 18.999…`.
const INDEX_EPS: f64 = 1e-9;

/// Norm applied to proxy vectors and statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyNorm {
    Lp(LpExponent),
    /// `‖v‖₂ + ‖v‖_{max(ln t, 1)}`, the norm behind the combined statistic.
    L2PlusLogDim,
}

impl ProxyNorm {
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            ProxyNorm::Lp(p) => lp_norm_with(v, p.resolve(v.len())),
            ProxyNorm::L2PlusLogDim => {
                lp_norm_with(v, 2.0) + lp_norm_with(v, LpExponent::LogDim.resolve(v.len()))
            }
        }
    }
}

impl From<LpExponent> for ProxyNorm {
    fn from(p: LpExponent) -> Self {
        ProxyNorm::Lp(p)
    }
}

/// How proxy draws were generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMethod {
    Gaussian,
    Spherical { s: usize },
    Multiplier,
}

/// Sorted Monte-Carlo draws of a proxy statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyDraws {
    values: Vec<f64>,
    method: ProxyMethod,
    norm: ProxyNorm,
    stream: RngStream,
}

impl ProxyDraws {
    /// Sorts `values`; they must be finite and nonnegative, and nonempty.
    pub fn new(mut values: Vec<f64>, method: ProxyMethod, norm: ProxyNorm, stream: RngStream) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("proxy sample needs B >= 1".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Numerical(format!("invalid proxy draw {bad}")));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(Self { values, method, norm, stream })
    }

    /// Draws in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn b(&self) -> usize {
        self.values.len()
    }

    pub fn method(&self) -> ProxyMethod {
        self.method
    }

    pub fn norm(&self) -> ProxyNorm {
        self.norm
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.b() as f64
    }

    /// Sample variance with the `1/(B−1)` divisor (0 when `B = 1`).
    pub fn variance(&self) -> f64 {
        let b = self.b();
        if b < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64
    }

    /// Number of draws `≥ x`.
    pub fn count_at_least(&self, x: f64) -> usize {
        self.b() - self.values.partition_point(|&v| v < x)
    }
}

/// Outcome of one Monte-Carlo test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub p_value: f64,
    pub reject: bool,
    pub b: usize,
    pub method: ProxyMethod,
}

/// `√n (R·X̄ − r)`.
pub fn scaled_mean_deviation(x: &Matrix, h: &Hypothesis) -> Result<Vec<f64>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::SampleSize { required: 1, got: 0 });
    }
    h.check_dim(x.cols())?;
    let mut mean = vec![0.0; x.cols()];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let sn = (n as f64).sqrt();
    Ok(h.apply(&mean)?
        .iter()
        .zip(h.target())
        .map(|(a, r)| sn * (a - r))
        .collect())
}

/// `T = √n ‖R·X̄ − r‖_p`.
pub fn t_stat(x: &Matrix, h: &Hypothesis, p: LpExponent) -> Result<f64> {
    Ok(ProxyNorm::Lp(p).eval(&scaled_mean_deviation(x, h)?))
}

/// `W = T_2 + T_{log t}`; needs `t ≥ 2`.
pub fn w_stat(x: &Matrix, h: &Hypothesis) -> Result<f64> {
    if h.t() < 2 {
        return Err(Error::Dimension(format!("combined statistic needs t >= 2, got {}", h.t())));
    }
    Ok(ProxyNorm::L2PlusLogDim.eval(&scaled_mean_deviation(x, h)?))
}

/// `V = ‖n^{-1/2} Σ X̃_i‖₂` with `X̃_i = (RX_i − r)/‖RX_i − r‖₂` (zero rows stay zero).
pub fn v_stat(x: &Matrix, h: &Hypothesis) -> Result<f64> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::SampleSize { required: 1, got: 0 });
    }
    let (rows, _) = normalized_rows(x, h, None)?;
    let mut sum = vec![0.0; rows.cols()];
    for i in 0..n {
        for (s, v) in sum.iter_mut().zip(rows.row(i)) {
            *s += v;
        }
    }
    Ok(lp_norm_with(&sum, 2.0) / (n as f64).sqrt())
}

/// `‖S_{n,Ĵ}‖_p` over the `bsel` largest `|S_{n,k}|` (identity restriction, zero target).
///
/// Compare against the full-vector critical value; the resulting test is conservative.
pub fn post_selection_stat(x: &Matrix, p: LpExponent, bsel: usize) -> Result<f64> {
    let d = x.cols();
    if bsel == 0 || bsel > d {
        return Err(Error::Domain(format!("selection size must be in 1..={d}, got {bsel}")));
    }
    let mut s = scaled_mean_deviation(x, &Hypothesis::identity(d))?;
    s.iter_mut().for_each(|v| *v = v.abs());
    s.sort_unstable_by(|a, b| b.total_cmp(a));
    s.truncate(bsel);
    // LogDim is resolved against the full dimension, matching the full-vector proxy
    Ok(lp_norm_with(&s, p.resolve(d)))
}

/// `‖G‖_p` for an already centred and scaled vector `G = F(Y) − √n r`.
pub fn linearized_stat(g: &[f64], p: LpExponent) -> Result<f64> {
    lp_norm(g, p)
}

/// Generates `b` draws of `scale(G)·‖ΓG‖` with `G` standard normal in `R^s`,
/// batching `CHUNK` draws into one matrix product.
fn factor_draws(factor: &Matrix, norm: ProxyNorm, b: usize, stream: &RngStream, spherical: bool) -> Vec<f64> {
    let (t, s) = (factor.rows(), factor.cols());
    let mut out = vec![0.0; b];
    if s == 0 || t == 0 {
        return out;
    }
    let units = normal_units(s);
    let sqrt_s = (s as f64).sqrt();
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let m = chunk.len();
        let first = c * CHUNK;
        let mut g = vec![0.0; m * s];
        for (j, row) in g.chunks_exact_mut(s).enumerate() {
            stream.advanced((first + j) as u128 * units).cursor().fill_std_normal(row);
        }
        let mut z = vec![0.0; m * t];
        gemm(m, s, t, (&g, s, 1), (factor.as_slice(), 1, s), (&mut z, t, 1));
        for (j, value) in chunk.iter_mut().enumerate() {
            let v = norm.eval(&z[j * t..(j + 1) * t]);
            *value = if spherical {
                let r = lp_norm_with(&g[j * s..(j + 1) * s], 2.0);
                if r > 0.0 { sqrt_s * v / r } else { 0.0 }
            } else {
                v
            };
        }
    });
    out
}

fn check_b(b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::Domain("number of proxy draws B must be >= 1".into()));
    }
    Ok(())
}

/// `B` draws of `‖Γ̂G‖`, `G ∼ N(0, I_s)`, i.e. of `‖Z‖` with `Z ∼ N(0, Ω̂)`.
pub fn gaussian_proxy(cov: &CovModel, norm: impl Into<ProxyNorm>, b: usize, stream: &RngStream) -> Result<ProxyDraws> {
    check_b(b)?;
    let norm = norm.into();
    let values = factor_draws(cov.factor(), norm, b, stream, false);
    ProxyDraws::new(values, ProxyMethod::Gaussian, norm, *stream)
}

/// `B` draws of `√s ‖Γ̂U‖`, `U` uniform on the unit sphere of `R^s`.
///
/// `s` defaults to the factor's column count. A larger override pads the factor with
/// zero columns; a smaller one replaces the factor by a minimal-rank factor of `Ω̂`,
/// which must then fit.
pub fn spherical_proxy(
    cov: &CovModel,
    norm: impl Into<ProxyNorm>,
    b: usize,
    stream: &RngStream,
    s_override: Option<usize>,
) -> Result<ProxyDraws> {
    check_b(b)?;
    let norm = norm.into();
    let s = s_override.unwrap_or(cov.s());
    if s < 2 {
        return Err(Error::Dimension(format!("spherical proxy needs s >= 2, got {s}")));
    }
    let minimal;
    let factor = match s.cmp(&cov.s()) {
        std::cmp::Ordering::Equal => cov.factor(),
        std::cmp::Ordering::Greater => {
            minimal = cov.factor().padded_cols(s);
            &minimal
        }
        std::cmp::Ordering::Less => {
            let reduced = psd_factor(cov.omega_hat(), PSD_TOL)?;
            if reduced.cols() > s {
                return Err(Error::Dimension(format!(
                    "spherical dimension {s} is below the covariance rank {}",
                    reduced.cols()
                )));
            }
            minimal = reduced.padded_cols(s);
            &minimal
        }
    };
    let values = factor_draws(factor, norm, b, stream, true);
    ProxyDraws::new(values, ProxyMethod::Spherical { s }, norm, *stream)
}

/// `B` draws of `‖n^{-1/2} Σ ξ_i R(X_i − X̄)‖` with fresh standard normal multipliers.
pub fn multiplier_proxy(
    x: &Matrix,
    h: &Hypothesis,
    norm: impl Into<ProxyNorm>,
    b: usize,
    stream: &RngStream,
) -> Result<ProxyDraws> {
    check_b(b)?;
    let norm = norm.into();
    let factor = centered_data_factor(x, h)?;
    let values = factor_draws(&factor, norm, b, stream, false);
    ProxyDraws::new(values, ProxyMethod::Multiplier, norm, *stream)
}

/// `k = ⌊(1−α)B⌋`, required to lie in `1..=B`.
pub fn order_index(alpha: f64, b: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let k = ((1.0 - alpha) * b as f64 + INDEX_EPS).floor() as usize;
    if k == 0 || k > b {
        return Err(Error::AlphaGrid { alpha, b, k });
    }
    Ok(k)
}

/// The `⌊(1−α)B⌋`-th smallest draw (1-indexed).
pub fn mc_quantile(draws: &ProxyDraws, alpha: f64) -> Result<f64> {
    Ok(draws.values[order_index(alpha, draws.b())? - 1])
}

/// Rejects iff `statistic ≥ c`; `p = #{draws ≥ statistic}/B`.
pub fn run_test(statistic: f64, draws: &ProxyDraws, alpha: f64) -> Result<TestResult> {
    if !(statistic.is_finite() && statistic >= 0.0) {
        return Err(Error::Numerical(format!("invalid test statistic {statistic}")));
    }
    let critical_value = mc_quantile(draws, alpha)?;
    Ok(TestResult {
        statistic,
        critical_value,
        alpha,
        p_value: p_value(statistic, draws),
        reject: statistic >= critical_value,
        b: draws.b(),
        method: draws.method(),
    })
}

/// `#{draws ≥ statistic}/B`.
pub fn p_value(statistic: f64, draws: &ProxyDraws) -> f64 {
    draws.count_at_least(statistic) as f64 / draws.b() as f64
}

/// Whether `√n ‖R(μ̂ − μ)‖_p ≤ c`.
pub fn conf_ellipsoid_contains(mu: &[f64], x: &Matrix, h: &Hypothesis, p: LpExponent, c: f64) -> Result<bool> {
    Ok(t_stat(x, &h.retargeted(mu)?, p)? <= c)
}

/// `h'Rμ̂ ± ‖h‖_q c/√n` with `1/p + 1/q = 1`.
pub fn simultaneous_ci(hvec: &[f64], x: &Matrix, h: &Hypothesis, p: LpExponent, c: f64) -> Result<(f64, f64)> {
    if hvec.len() != h.t() {
        return Err(Error::Shape(format!("direction has length {}, expected {}", hvec.len(), h.t())));
    }
    let sn = (x.rows() as f64).sqrt();
    let dev = scaled_mean_deviation(x, &h.retargeted(&vec![0.0; h.d()])?)?;
    let centre: f64 = hvec.iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / sn;
    let half = lp_norm_with(hvec, p.conjugate(h.t())) * c / sn;
    Ok((centre - half, centre + half))
}

/// Conservative interval `‖μ̂‖_p ± c/√n`, clipped at zero, with `c` the Gaussian-proxy
/// `(1−α)` quantile under `cov`.
pub fn norm_ci(
    x: &Matrix,
    p: LpExponent,
    cov: &CovModel,
    alpha: f64,
    b: usize,
    stream: &RngStream,
) -> Result<(f64, f64)> {
    let d = x.cols();
    let draws = gaussian_proxy(cov, p, b, stream)?;
    let c = mc_quantile(&draws, alpha)?;
    let sn = (x.rows() as f64).sqrt();
    let centre = t_stat(x, &Hypothesis::identity(d), p)? / sn;
    Ok(((centre - c / sn).max(0.0), centre + c / sn))
}
