//! Deterministic, stream-splittable random generation.
//!
//! An [`RngStream`] is a plain value `(seed, stream_id, counter)`; it is backed by
//! the ChaCha8 block function, so seeking to any counter is O(1) and distinct
//! stream ids select independent keystreams. The counter is measured in 64-bit
//! outputs.
//!
//! Consumption contract: every normal variate is produced by Box–Muller from a
//! pair of 64-bit outputs, and normals are always generated in pairs, so a
//! request for `k` normals advances the counter by [`normal_units`]`(k) = 2⌈k/2⌉`.

use std::fmt;
use std::str::FromStr;

use libm::erfc;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{lp_norm_with, LinearFactor, Matrix};

/// Position in a counter-based random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    pub counter: u128,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id, counter: 0 }
    }

    /// Same stream positioned at an absolute counter.
    pub fn at(self, counter: u128) -> Self {
        Self { counter, ..self }
    }

    pub fn advanced(self, units: u128) -> Self {
        Self { counter: self.counter + units, ..self }
    }

    /// Same seed, different stream id, counter reset.
    pub fn substream(self, stream_id: u64) -> Self {
        Self { seed: self.seed, stream_id, counter: 0 }
    }

    /// A generator positioned at this stream's counter.
    pub fn cursor(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(self.counter * 2);
        StreamRng { rng, start: *self, consumed: 0 }
    }
}

/// Counter units consumed by `k` standard normals.
#[inline]
pub fn normal_units(k: usize) -> u128 {
    (2 * k.div_ceil(2)) as u128
}

/// Mutable cursor into an [`RngStream`]. Must not be shared between threads.
#[derive(Debug, Clone)]
pub struct StreamRng {
    rng: ChaCha8Rng,
    start: RngStream,
    consumed: u128,
}

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

impl StreamRng {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.consumed += 1;
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Current position as a stream value.
    pub fn position(&self) -> RngStream {
        self.start.advanced(self.consumed)
    }

    /// Fills `out` with i.i.d. N(0,1) draws, consuming [`normal_units`]`(out.len())`.
    pub fn fill_std_normal(&mut self, out: &mut [f64]) {
        let mut pairs = out.chunks_exact_mut(2);
        for pair in &mut pairs {
            let (a, b) = self.box_muller();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = pairs.into_remainder() {
            *last = self.box_muller().0;
        }
    }

    #[inline]
    fn box_muller(&mut self) -> (f64, f64) {
        // u1 in (0, 1] keeps the logarithm finite
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * INV_2_53;
        let u2 = (self.next_u64() >> 11) as f64 * INV_2_53;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Uniform index in `0..n` (Lemire-style rejection, unbiased).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % n) as usize;
            }
        }
    }
}

pub fn std_normal_vec(rng: &mut StreamRng, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    rng.fill_std_normal(&mut v);
    v
}

/// `ΓG` with `G ~ N(0, I_s)`; the draw has covariance `ΓΓ'`.
pub fn mvn_from_factor<F: LinearFactor + ?Sized>(factor: &F, rng: &mut StreamRng) -> Vec<f64> {
    let g = std_normal_vec(rng, factor.in_dim());
    let mut out = vec![0.0; factor.out_dim()];
    factor.apply(&g, &mut out);
    out
}

/// Uniform draw from the unit sphere in `R^s`.
pub fn sphere_sample(s: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if s < 2 {
        return Err(Error::Dimension(format!("sphere sampling needs s >= 2, got {s}")));
    }
    let mut g = vec![0.0; s];
    loop {
        rng.fill_std_normal(&mut g);
        let norm = lp_norm_with(&g, 2.0);
        if norm > 0.0 {
            g.iter_mut().for_each(|x| *x /= norm);
            return Ok(g);
        }
    }
}

/// Standard normal cdf.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Quantile of the Gamma(1, 1) (unit exponential) distribution.
pub fn gamma11_quantile(u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!("gamma quantile needs u in [0, 1), got {u}")));
    }
    Ok(-(-u).ln_1p())
}

/// `F⁻¹(Φ(y)) − 1` for the Gamma(1,1) cdf `F`, evaluated through the upper tail
/// `−ln(1 − Φ(y)) = −ln Φ(−y)` so it stays finite where `Φ(y)` rounds to one.
#[inline]
pub fn copula_transform(y: f64) -> f64 {
    let tail = 0.5 * erfc(y / std::f64::consts::SQRT_2);
    if tail > 1e-300 {
        return -tail.ln() - 1.0;
    }
    // Mills-ratio expansion of −ln Φ(−y), y > 37
    let r = 1.0 / (y * y);
    0.5 * y * y + (y * (2.0 * std::f64::consts::PI).sqrt()).ln() - (1.0 - r + 3.0 * r * r).ln() - 1.0
}

/// One observation from the centred Gamma(1,1) Gaussian copula with correlation `ΓΓ'`.
pub fn copula_row<F: LinearFactor + ?Sized>(factor: &F, rng: &mut StreamRng) -> Vec<f64> {
    let mut y = mvn_from_factor(factor, rng);
    y.iter_mut().for_each(|v| *v = copula_transform(*v));
    y
}

const T_DOF: f64 = 4.0;

/// One multivariate t(4) observation with covariance `ΓΓ'`.
///
/// Consumes `normal_units(s + 4)`: `s` normals for the direction and four for the
/// chi-square mixing variable.
pub fn mvt4_row<F: LinearFactor + ?Sized>(factor: &F, rng: &mut StreamRng) -> Vec<f64> {
    let s = factor.in_dim();
    let mut g = vec![0.0; s + 4];
    rng.fill_std_normal(&mut g);
    let mut out = vec![0.0; factor.out_dim()];
    factor.apply(&g[..s], &mut out);
    let scale = t4_scale(&g[s..]);
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

#[inline]
fn t4_scale(chi_normals: &[f64]) -> f64 {
    let w: f64 = chi_normals.iter().map(|z| z * z).sum();
    // sqrt(ν/W) · sqrt((ν−2)/ν)
    ((T_DOF - 2.0) / w).sqrt()
}

/// Correlation structure of a simulated design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    Identity,
    /// `0.8 + 0.2·1{j=k}`.
    Equicorrelated,
    /// `0.8^|j−k|`.
    Toeplitz,
    /// `max(1 − |j−k|/m, 0)` with `m = ⌈d^{1/3}/2⌉`.
    Banded,
}

/// Width `m = ⌈d^{1/3}/2⌉` of the banded design, i.e. the smallest `m` with `(2m)³ ≥ d`.
pub fn band_width(d: usize) -> usize {
    let mut m = 1usize;
    while 8 * m * m * m < d {
        m += 1;
    }
    m
}

/// Exact square-root factors of the design covariances, applied in O(d·m) per row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StructuredFactor {
    Identity { d: usize },
    /// `Y_j = √ρ·g_0 + √(1−ρ)·g_j`.
    OneFactor { d: usize, rho: f64 },
    /// Stationary AR(1) recursion.
    Ar1 { d: usize, phi: f64 },
    /// `Y_j = m^{-1/2} Σ_{l<m} e_{j+l}`.
    MovingAverage { d: usize, m: usize },
}

impl CovKind {
    pub fn factor(self, d: usize) -> StructuredFactor {
        match self {
            CovKind::Identity => StructuredFactor::Identity { d },
            CovKind::Equicorrelated => StructuredFactor::OneFactor { d, rho: 0.8 },
            CovKind::Toeplitz => StructuredFactor::Ar1 { d, phi: 0.8 },
            CovKind::Banded => StructuredFactor::MovingAverage { d, m: band_width(d) },
        }
    }
}

impl LinearFactor for StructuredFactor {
    fn out_dim(&self) -> usize {
        match *self {
            StructuredFactor::Identity { d }
            | StructuredFactor::OneFactor { d, .. }
            | StructuredFactor::Ar1 { d, .. }
            | StructuredFactor::MovingAverage { d, .. } => d,
        }
    }

    fn in_dim(&self) -> usize {
        match *self {
            StructuredFactor::Identity { d } | StructuredFactor::Ar1 { d, .. } => d,
            StructuredFactor::OneFactor { d, .. } => d + 1,
            StructuredFactor::MovingAverage { d, m } => d + m - 1,
        }
    }

    fn apply(&self, g: &[f64], out: &mut [f64]) {
        match *self {
            StructuredFactor::Identity { d } => out[..d].copy_from_slice(&g[..d]),
            StructuredFactor::OneFactor { d, rho } => {
                let common = rho.sqrt() * g[0];
                let own = (1.0 - rho).sqrt();
                for j in 0..d {
                    out[j] = common + own * g[j + 1];
                }
            }
            StructuredFactor::Ar1 { d, phi } => {
                let innov = (1.0 - phi * phi).sqrt();
                let mut prev = g[0];
                out[0] = prev;
                for j in 1..d {
                    prev = phi * prev + innov * g[j];
                    out[j] = prev;
                }
            }
            StructuredFactor::MovingAverage { d, m } => {
                let w = 1.0 / (m as f64).sqrt();
                let mut window: f64 = g[..m].iter().sum();
                out[0] = w * window;
                for j in 1..d {
                    window += g[j + m - 1] - g[j - 1];
                    out[j] = w * window;
                }
            }
        }
    }
}

/// Data-generating process of the simulation designs.
///
/// Text form: `equicorr`, `toeplitz`, `banded` (copula designs), `t4toeplitz`,
/// `gaussian` (identity covariance), or `<family>:<cov>` with family
/// `copula|t4|gaussian` and cov `identity|equicorr|toeplitz|banded`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DgpKind {
    /// Centred Gamma(1,1) marginals through a Gaussian copula.
    Copula(CovKind),
    /// Multivariate t with 4 degrees of freedom and the given covariance.
    StudentT4(CovKind),
    /// Plain multivariate normal (diagnostic mode).
    Gaussian(CovKind),
}

impl CovKind {
    fn name(self) -> &'static str {
        match self {
            CovKind::Identity => "identity",
            CovKind::Equicorrelated => "equicorr",
            CovKind::Toeplitz => "toeplitz",
            CovKind::Banded => "banded",
        }
    }
}

impl FromStr for CovKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(CovKind::Identity),
            "equicorr" | "equicorrelated" => Ok(CovKind::Equicorrelated),
            "toeplitz" => Ok(CovKind::Toeplitz),
            "banded" => Ok(CovKind::Banded),
            other => Err(Error::Config(format!("unknown covariance design {other:?}"))),
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DgpKind::Copula(c) if *c != CovKind::Identity => f.write_str(c.name()),
            DgpKind::StudentT4(CovKind::Toeplitz) => f.write_str("t4toeplitz"),
            DgpKind::Gaussian(CovKind::Identity) => f.write_str("gaussian"),
            DgpKind::Copula(c) => write!(f, "copula:{}", c.name()),
            DgpKind::StudentT4(c) => write!(f, "t4:{}", c.name()),
            DgpKind::Gaussian(c) => write!(f, "gaussian:{}", c.name()),
        }
    }
}

impl FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some((family, cov)) = s.split_once(':') {
            let cov = cov.parse()?;
            return match family {
                "copula" => Ok(DgpKind::Copula(cov)),
                "t4" => Ok(DgpKind::StudentT4(cov)),
                "gaussian" => Ok(DgpKind::Gaussian(cov)),
                other => Err(Error::Config(format!("unknown data-generating family {other:?}"))),
            };
        }
        match s.as_str() {
            "t4toeplitz" => Ok(DgpKind::StudentT4(CovKind::Toeplitz)),
            "gaussian" => Ok(DgpKind::Gaussian(CovKind::Identity)),
            other => other
                .parse()
                .map(DgpKind::Copula)
                .map_err(|_| Error::Config(format!("unknown data-generating process {other:?}"))),
        }
    }
}

impl TryFrom<String> for DgpKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DgpKind> for String {
    fn from(d: DgpKind) -> String {
        d.to_string()
    }
}

impl DgpKind {
    pub fn cov_kind(self) -> CovKind {
        match self {
            DgpKind::Copula(c) | DgpKind::StudentT4(c) | DgpKind::Gaussian(c) => c,
        }
    }

    /// Counter units consumed by one row of dimension `d`.
    pub fn units_per_row(self, d: usize) -> u128 {
        let s = self.cov_kind().factor(d).in_dim();
        match self {
            DgpKind::StudentT4(_) => normal_units(s + 4),
            _ => normal_units(s),
        }
    }

    /// Draws an `n × d` sample; row `i` starts at counter `stream.counter + i·units_per_row(d)`,
    /// so any row can be regenerated independently.
    pub fn sample(self, n: usize, d: usize, stream: &RngStream) -> Matrix {
        let factor = self.cov_kind().factor(d);
        let units = self.units_per_row(d);
        let s = factor.in_dim();
        let extra = if matches!(self, DgpKind::StudentT4(_)) { 4 } else { 0 };
        let mut g = vec![0.0; s + extra];
        let mut data = vec![0.0; n * d];
        for (i, row) in data.chunks_exact_mut(d.max(1)).enumerate().take(n) {
            let mut rng = stream.advanced(i as u128 * units).cursor();
            rng.fill_std_normal(&mut g);
            factor.apply(&g[..s], row);
            match self {
                DgpKind::Copula(_) => row.iter_mut().for_each(|v| *v = copula_transform(*v)),
                DgpKind::StudentT4(_) => {
                    let scale = t4_scale(&g[s..]);
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                DgpKind::Gaussian(_) => {}
            }
        }
        Matrix::from_raw(n, d, data)
    }
}
