//! Theory-side quantities that help interpret a test run: lower bounds on the
//! variance of Gaussian ℓp norms, moment and quantile brackets, a Bahadur-slope
//! lower bound, a sparse/dense classification of alternatives, generators for such
//! alternatives, rate conditions for sub-Gaussian designs and a heuristic for `B`.
//!
//! The variance bounds and brackets carry unspecified absolute constants in their
//! asymptotic form. They are evaluated literally and meant as order-of-magnitude
//! diagnostics; none of them is certified as a strict inequality.

use libm::lgamma;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{CovModel, Hypothesis};
use crate::hdtest::gaussian_proxy;
use crate::numcore::{effective_rank, lp_norm_with, op_norm, sym_eigen, LpExponent, Matrix, OpNorm};
use crate::randgen::RngStream;

/// Which variance lower bound was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRegime {
    /// `p ∈ [1, 2]`
    P12,
    /// `p ∈ (2, 2 log d)`
    P2LogD,
    /// `p ∈ [2 log d, ∞)`
    PGeq2LogD,
    PInf,
    Refined1,
    Refined2,
    RefinedInf,
}

/// Lower bounds on `Var(‖Z‖_p)`, `Z ∼ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBoundReport {
    /// Resolved exponent (`inf` for the max-norm).
    pub p: f64,
    pub d: usize,
    pub regime: VarRegime,
    pub bound: f64,
    /// Sharper bound for `p ∈ {1, 2, ∞}`.
    pub refined: Option<(VarRegime, f64)>,
    /// Smallest and largest marginal standard deviation.
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    /// Always false: the constants are not certified.
    pub certified: bool,
}

/// Largest absolute off-diagonal correlation (pairs with a zero variance are skipped).
pub fn max_abs_correlation(sigma: &Matrix) -> f64 {
    let d = sigma.rows();
    let mut rho = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            let denom = (sigma.get(i, i) * sigma.get(j, j)).sqrt();
            if denom > 0.0 {
                rho = rho.max((sigma.get(i, j) / denom).abs());
            }
        }
    }
    rho.min(1.0)
}

/// Variance lower bound for the regime containing `p`, plus the refinement where one exists.
///
/// `rho` defaults to the largest absolute off-diagonal correlation of `sigma`.
pub fn var_lower_bound(sigma: &Matrix, p: LpExponent, rho: Option<f64>) -> Result<VarBoundReport> {
    if !sigma.is_square() || sigma.rows() == 0 {
        return Err(Error::Shape("covariance must be a nonempty square matrix".into()));
    }
    if sigma.max_abs() == 0.0 {
        return Err(Error::Degenerate("zero covariance matrix".into()));
    }
    let d = sigma.rows();
    let df = d as f64;
    let pv = p.resolve(d);
    let rho = rho.unwrap_or_else(|| max_abs_correlation(sigma));
    let mut sd: Vec<f64> = sigma.diag().iter().map(|v| v.max(0.0).sqrt()).collect();
    sd.sort_unstable_by(f64::total_cmp);
    let (s_min, s_max) = (sd[0], sd[d - 1]);
    let log_d = df.ln();

    let (regime, bound) = if pv.is_infinite() {
        (VarRegime::PInf, (s_min * s_min / (s_min + s_max * log_d.sqrt())).powi(2) / 225.0)
    } else if pv <= 2.0 {
        let m = sd.iter().map(|s| s.powf(pv)).sum::<f64>() / df;
        (VarRegime::P12, std::f64::consts::PI / 9.0 * m.powf(2.0 / pv) * df.powf(2.0 / pv - 1.0))
    } else if pv < 2.0 * log_d {
        let m = sd.iter().map(|s| s.powf(2.0 * pv)).sum::<f64>() / df;
        let lead = std::f64::consts::PI / 6.0 * pv * pv / 2f64.powf(3.0 * pv);
        (VarRegime::P2LogD, lead * m.powf(1.0 / pv) * df.powf(2.0 / pv - 1.0))
    } else {
        let core = (s_min * s_min / (s_min + s_max * log_d.sqrt())).powi(2) / 225.0;
        (VarRegime::PGeq2LogD, core / 11f64.powi(6) / (1.0 + rho * log_d.sqrt()).powi(2))
    };

    let refined = if pv == 1.0 {
        Some((VarRegime::Refined1, std::f64::consts::FRAC_PI_2 * sigma.trace()))
    } else if pv == 2.0 {
        let tr = sigma.trace();
        let tr2 = sigma.as_slice().iter().map(|v| v * v).sum::<f64>();
        let s4: f64 = sd.iter().map(|s| s.powi(4)).sum();
        let s2: f64 = sd.iter().map(|s| s * s).sum();
        Some((VarRegime::Refined2, (tr2 / tr).max(s4 / s2)))
    } else if pv.is_infinite() {
        let worst = (0..d)
            .map(|k| (1.0 + ((k + 1) as f64).ln().sqrt()) / sd[k])
            .fold(0.0f64, f64::max);
        let bar = (1.0 + log_d.sqrt()) / (1.0 / s_min + worst);
        Some((VarRegime::RefinedInf, (bar / (1.0 + log_d.sqrt())).powi(2) / 12.0))
    } else {
        None
    };

    Ok(VarBoundReport {
        p: pv,
        d,
        regime,
        bound,
        refined,
        sigma_min: s_min,
        sigma_max: s_max,
        rho,
        certified: false,
    })
}

/// `(E‖Z‖_p^p)^{1/p}` for independent `Z_k ∼ N(0, σ_k²)` and a bracket for `E‖Z‖_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub closed_form: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Closed form `(Σσ_k^p)^{1/p} √2 π^{−1/(2p)} Γ((p+1)/2)^{1/p}` with bracket
/// `[closed/√(8πp), closed]`. Finite `p` only; see [`gaussian_max_bracket`].
pub fn gaussian_norm_moment(sigmas: &[f64], p: LpExponent) -> Result<MomentReport> {
    let pv = p.resolve(sigmas.len());
    if pv.is_infinite() {
        return Err(Error::UnsupportedNorm("moment closed form needs finite p; use gaussian_max_bracket".into()));
    }
    if sigmas.is_empty() || sigmas.iter().any(|s| s.is_nan() || *s < 0.0) {
        return Err(Error::Domain("standard deviations must be nonnegative and nonempty".into()));
    }
    let norm = lp_norm_with(sigmas, pv);
    let closed = norm
        * std::f64::consts::SQRT_2
        * std::f64::consts::PI.powf(-0.5 / pv)
        * (lgamma((pv + 1.0) / 2.0) / pv).exp();
    Ok(MomentReport {
        closed_form: closed,
        lower: closed / (8.0 * std::f64::consts::PI * pv).sqrt(),
        upper: closed,
    })
}

/// Heuristic constants of the max-norm bracket.
pub const MAX_BRACKET_C: (f64, f64) = (0.23, std::f64::consts::SQRT_2 * std::f64::consts::E);

/// `[c σ_min √L, C σ_max √L]` for `E‖Z‖_∞` with `L = max(log d, 1)`; not certified.
pub fn gaussian_max_bracket(sigmas: &[f64]) -> Result<(f64, f64)> {
    if sigmas.is_empty() || sigmas.iter().any(|s| s.is_nan() || *s < 0.0) {
        return Err(Error::Domain("standard deviations must be nonnegative and nonempty".into()));
    }
    let l = (sigmas.len() as f64).ln().max(1.0).sqrt();
    let lo = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sigmas.iter().cloned().fold(0.0, f64::max);
    Ok((MAX_BRACKET_C.0 * lo * l, MAX_BRACKET_C.1 * hi * l))
}

/// `‖Σ^{1/2}‖_{2→p}` for `p ∈ {2, ∞}` or diagonal `Σ`.
///
/// For `p = ∞` the rows of any square root have norms `√Σ_kk`, so no root is formed.
pub fn sqrt_op_norm(sigma: &Matrix, p: LpExponent) -> Result<f64> {
    if !sigma.is_square() {
        return Err(Error::Shape("covariance must be square".into()));
    }
    let t = sigma.rows();
    let pv = p.resolve(t);
    if pv.is_infinite() {
        return Ok(sigma.diag().iter().fold(0.0f64, |m, v| m.max(v.max(0.0).sqrt())));
    }
    if pv == 2.0 {
        let top = sym_eigen(sigma)?.values[0];
        return Ok(top.max(0.0).sqrt());
    }
    let diagonal = (0..t).all(|i| (0..t).all(|j| i == j || sigma.get(i, j) == 0.0));
    if !diagonal {
        return Err(Error::UnsupportedNorm(format!("‖Σ^(1/2)‖_(2→{pv}) for non-diagonal Σ")));
    }
    let root = Matrix::from_diag(&sigma.diag().iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>());
    op_norm(&root, OpNorm::TwoP(LpExponent::finite(pv)?))
}

/// Two-sided bracket for the Gaussian `(1−α)` quantile around its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileBracket {
    /// Only defined for `α ≤ 1/2`.
    pub lower: Option<f64>,
    pub upper: f64,
}

/// `[m − min(P, √v), m + min(√(2 log(1/α)) P, √(v/α))]` with `P = ‖Σ^{1/2}‖_{2→p}`,
/// `m`, `v` Monte-Carlo mean and variance of `‖Z‖_p`.
pub fn quantile_bracket(sigma: &Matrix, p: LpExponent, alpha: f64, mc_var: f64, mc_mean: f64) -> Result<QuantileBracket> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if mc_var.is_nan() || mc_var < 0.0 {
        return Err(Error::Domain("variance estimate must be nonnegative".into()));
    }
    let poincare = sqrt_op_norm(sigma, p)?;
    let upper = mc_mean + ((2.0 * (1.0 / alpha).ln()).sqrt() * poincare).min((mc_var / alpha).sqrt());
    let lower = (alpha <= 0.5).then(|| mc_mean - poincare.min(mc_var.sqrt()));
    Ok(QuantileBracket { lower, upper })
}

/// `‖Rμ − r‖_p / ‖Ω^{1/2}‖_{2→p}`.
pub fn bahadur_slope_lb(mu: &[f64], h: &Hypothesis, omega: &Matrix, p: LpExponent) -> Result<f64> {
    let rm = h.apply(mu)?;
    if omega.rows() != rm.len() {
        return Err(Error::Shape(format!("Ω is {}×{}, restriction has t = {}", omega.rows(), omega.cols(), rm.len())));
    }
    let dev: Vec<f64> = rm.iter().zip(h.target()).map(|(a, r)| a - r).collect();
    let num = lp_norm_with(&dev, p.resolve(dev.len()));
    let den = sqrt_op_norm(omega, p)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    if den == 0.0 {
        return Err(Error::Degenerate("zero Poincaré constant".into()));
    }
    Ok(num / den)
}

/// Detectability class of an alternative, ordered by increasing signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltLabel {
    /// Signal below the proxy standard deviation.
    Undetectable,
    /// Signal below the proxy mean.
    Intermediate,
    /// Between the two rules.
    Indeterminate,
    /// Signal well above the proxy mean.
    Consistent,
}

impl AltLabel {
    /// Rank with the two middle classes tied.
    pub fn rank(self) -> u8 {
        match self {
            AltLabel::Undetectable => 0,
            AltLabel::Intermediate | AltLabel::Indeterminate => 1,
            AltLabel::Consistent => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self { lo: 0.3, hi: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternativeClass {
    pub label: AltLabel,
    /// `√n ‖Rμ − r‖_p`
    pub signal: f64,
    pub sd_est: f64,
    pub mean_est: f64,
    pub signal_to_sd: f64,
    pub signal_to_mean: f64,
}

/// Minimum Monte-Carlo size for [`classify_alternative`].
pub const MIN_CLASSIFY_DRAWS: usize = 1000;

/// Compares `√n‖Rμ − r‖_p` to Monte-Carlo mean and sd of `‖Z‖_p`, `Z ∼ N(0, Ω̂)`:
/// undetectable if `signal ≤ lo·sd`, else consistent if `signal ≥ hi·mean`,
/// else intermediate if `signal ≤ lo·mean`, else indeterminate.
#[allow(clippy::too_many_arguments)]
pub fn classify_alternative(
    mu: &[f64],
    h: &Hypothesis,
    cov: &CovModel,
    p: LpExponent,
    n: usize,
    b_mc: usize,
    stream: &RngStream,
    thresholds: ClassThresholds,
) -> Result<AlternativeClass> {
    if b_mc < MIN_CLASSIFY_DRAWS {
        return Err(Error::Domain(format!("classification needs at least {MIN_CLASSIFY_DRAWS} draws, got {b_mc}")));
    }
    let rm = h.apply(mu)?;
    let dev: Vec<f64> = rm.iter().zip(h.target()).map(|(a, r)| a - r).collect();
    let signal = (n as f64).sqrt() * lp_norm_with(&dev, p.resolve(dev.len()));
    let draws = gaussian_proxy(cov, p, b_mc, stream)?;
    let (mean_est, sd_est) = (draws.mean(), draws.variance().sqrt());
    let label = if signal <= thresholds.lo * sd_est {
        AltLabel::Undetectable
    } else if signal >= thresholds.hi * mean_est {
        AltLabel::Consistent
    } else if signal <= thresholds.lo * mean_est {
        AltLabel::Intermediate
    } else {
        AltLabel::Indeterminate
    };
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else if a > 0.0 { f64::INFINITY } else { 0.0 };
    Ok(AlternativeClass {
        label,
        signal,
        sd_est,
        mean_est,
        signal_to_sd: ratio(signal, sd_est),
        signal_to_mean: ratio(signal, mean_est),
    })
}

/// Where the nonzero entries of an alternative sit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// The first `s` coordinates.
    Leading,
    /// `s` coordinates drawn without replacement from the given seed.
    Random { seed: u64 },
    Indices(Vec<usize>),
}

/// `s` active coordinates of strength `δ` (in units of the marginal standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltSpec {
    pub s: usize,
    pub delta: f64,
    pub support: Support,
}

impl AltSpec {
    /// Indices in ascending order.
    pub fn support_indices(&self, t: usize) -> Result<Vec<usize>> {
        if self.s == 0 || self.s > t {
            return Err(Error::Domain(format!("sparsity must be in 1..={t}, got {}", self.s)));
        }
        let mut idx = match &self.support {
            Support::Leading => (0..self.s).collect(),
            Support::Random { seed } => {
                let mut rng = RngStream::new(*seed, 0).cursor();
                let mut pool: Vec<usize> = (0..t).collect();
                for i in 0..self.s {
                    let j = i + rng.index(t - i);
                    pool.swap(i, j);
                }
                pool.truncate(self.s);
                pool
            }
            Support::Indices(v) => {
                if v.len() != self.s || v.iter().any(|&k| k >= t) {
                    return Err(Error::Domain(format!("support must be {} distinct indices below {t}", self.s)));
                }
                v.clone()
            }
        };
        idx.sort_unstable();
        idx.dedup();
        if idx.len() != self.s {
            return Err(Error::Domain("support indices must be distinct".into()));
        }
        Ok(idx)
    }
}

/// `μ_k = r_k ± δ √Ω_kk` on the support with alternating signs, `μ_k = r_k` elsewhere.
///
/// `omega_diag` holds the marginal variances `Ω_kk`; the restriction must be the identity.
pub fn make_alternative(spec: &AltSpec, omega_diag: &[f64], h: &Hypothesis) -> Result<Vec<f64>> {
    if !h.is_identity() {
        return Err(Error::Domain("alternatives are generated for identity restrictions only".into()));
    }
    if spec.delta.is_nan() || spec.delta < 0.0 {
        return Err(Error::Domain(format!("signal strength must be nonnegative, got {}", spec.delta)));
    }
    let t = h.t();
    if omega_diag.len() != t {
        return Err(Error::Shape(format!("variance vector has length {}, expected {t}", omega_diag.len())));
    }
    let mut mu = h.target().to_vec();
    for (j, k) in spec.support_indices(t)?.into_iter().enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        mu[k] += sign * spec.delta * omega_diag[k].max(0.0).sqrt();
    }
    Ok(mu)
}

/// One dimensionless rate term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTerm {
    pub name: String,
    pub value: f64,
}

/// Rate terms of the sub-Gaussian sufficient conditions evaluated at `(Ω, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub p: f64,
    pub n: usize,
    pub terms: Vec<RateTerm>,
}

/// Evaluates the sub-Gaussian rate terms for `p = 2` (effective ranks) or
/// `p = ∞` (spread of marginal variances). No pass/fail is implied.
pub fn check_rates_subgaussian(omega: &Matrix, n: usize, p: LpExponent) -> Result<RateReport> {
    let t = omega.rows();
    let pv = p.resolve(t);
    let nf = n as f64;
    let n6 = nf.powf(1.0 / 6.0);
    let term = |name: &str, value: f64| RateTerm { name: name.to_string(), value };
    let terms = if pv == 2.0 {
        let r1 = effective_rank(omega)?;
        let r2 = effective_rank(&omega.matmul(omega)?)?;
        vec![
            term("r(Ω)", r1),
            term("r(Ω²)", r2),
            term("r(Ω)/√r(Ω²)", r1 / r2.sqrt()),
            term("r(Ω)/√r(Ω²)/n^(1/6)", r1 / r2.sqrt() / n6),
            term("r(Ω)/r(Ω²)·max(√(r(Ω)/n), r(Ω)/n)", r1 / r2 * (r1 / nf).sqrt().max(r1 / nf)),
        ]
    } else if pv.is_infinite() {
        let diag = omega.diag();
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        if hi == 0.0 {
            return Err(Error::Degenerate("zero diagonal".into()));
        }
        let k = (hi / lo).sqrt();
        let lt = (t as f64).ln();
        vec![
            term("ω_max/ω_min", k),
            term("(ω_max/ω_min)·√log t/n^(1/6)", k * lt.sqrt() / n6),
            term("(ω_max/ω_min)²·log t/n^(1/6)", k * k * lt / n6),
            term("(ω_max/ω_min)²·√(log t/n)", k * k * (lt / nf).sqrt()),
            term("(ω_max/ω_min)⁴·√((log t)³/n)", k.powi(4) * (lt.powi(3) / nf).sqrt()),
        ]
    } else {
        return Err(Error::UnsupportedNorm(format!("rate conditions are stated for p ∈ {{2, ∞}}, got {pv}")));
    };
    Ok(RateReport { p: pv, n, terms })
}

/// Inputs of the `B` heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BTarget {
    /// `var_proxy`: estimate of `Var(T* | X)`; `mode`: density-mode bound (user input).
    Gaussian { var_proxy: f64, mode: f64 },
    /// Variance term `(gamma_norm / s)²` with `gamma_norm` an estimate of `‖Γ̂‖`.
    Spherical { s: usize, gamma_norm: f64, mode: f64 },
}

/// Smallest recommended number of proxy draws.
pub const MIN_RECOMMENDED_B: usize = 1000;

/// `max(n, ⌈(mode²·var)^{1+γ}⌉, 1000)`.
pub fn recommend_b(n: usize, target: BTarget, gamma: f64) -> Result<usize> {
    let (var_term, mode) = match target {
        BTarget::Gaussian { var_proxy, mode } => (var_proxy, mode),
        BTarget::Spherical { s, gamma_norm, mode } => {
            if s == 0 {
                return Err(Error::Domain("spherical dimension must be positive".into()));
            }
            ((gamma_norm / s as f64).powi(2), mode)
        }
    };
    if !(var_term >= 0.0 && mode >= 0.0 && gamma >= 0.0) || !var_term.is_finite() || !mode.is_finite() {
        return Err(Error::Domain("B heuristic needs finite nonnegative inputs".into()));
    }
    let raw = (mode * mode * var_term).powf(1.0 + gamma).ceil();
    let raw = if raw >= usize::MAX as f64 { usize::MAX } else { raw as usize };
    Ok(n.max(raw).max(MIN_RECOMMENDED_B))
}
