//! Size and power experiments over an α grid, with reproducible parallel
//! replications and CSV/JSON output. Also hosts the command-line front end.
//!
//! Replication `i` owns the RNG streams `(seed, i·8 + role)` (role 0 data, 1 proxy),
//! runs on any worker, and results are merged by index, so output does not depend on
//! the number of workers. One proxy sample per replication serves the whole α grid.

use std::ffi::OsString;
use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{CommandFactory, Parser};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::diagnostics::{make_alternative, AltSpec, Support};
use crate::error::{Error, Result};
use crate::estimators::{
    banded_cov, default_lambda, sample_cov_transformed, selfnorm_cov, studentize, thresholded_cov, CovModel,
    Hypothesis, TailRegime,
};
use crate::hdtest::{
    gaussian_proxy, multiplier_proxy, order_index, p_value, post_selection_stat, spherical_proxy, t_stat, v_stat,
    w_stat, ProxyDraws, ProxyNorm,
};
use crate::numcore::{LpExponent, Matrix};
use crate::randgen::{band_width, CovKind, DgpKind, RngStream};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Streams reserved per replication.
pub const STREAMS_PER_REP: u64 = 8;
pub const ROLE_DATA: u64 = 0;
pub const ROLE_PROXY: u64 = 1;

/// Dense design covariance (unit diagonal for every kind).
pub fn build_cov(kind: CovKind, d: usize) -> Matrix {
    let m = band_width(d) as f64;
    Matrix::from_fn(d, d, |j, k| {
        let h = j.abs_diff(k) as f64;
        match kind {
            CovKind::Identity => (j == k) as u8 as f64,
            CovKind::Equicorrelated => if j == k { 1.0 } else { 0.8 },
            CovKind::Toeplitz => 0.8f64.powf(h),
            CovKind::Banded => (1.0 - h / m).max(0.0),
        }
    })
}

macro_rules! string_serde {
    ($t:ty) => {
        impl TryFrom<String> for $t {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }

        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_string()
            }
        }
    };
}

fn write_exponent(f: &mut fmt::Formatter<'_>, p: LpExponent) -> fmt::Result {
    match p {
        LpExponent::Infinity => f.write_str("inf"),
        LpExponent::LogDim => f.write_str("logt"),
        LpExponent::Finite(v) => write!(f, "{v}"),
    }
}

/// Test statistic of an experiment.
///
/// Text form: `l<p>` (`l2`, `linf`, `l1.5`), `logt`, `w`, `v`, `student-l<p>`,
/// `postsel:<p>:<B>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Statistic {
    Lp(LpExponent),
    /// `T_2 + T_{log t}`.
    W,
    /// Self-normalized statistic.
    V,
    /// `Lp` after scaling each coordinate by its sample standard deviation.
    Studentized(LpExponent),
    /// Norm of the `bsel` largest coordinates against the full-vector proxy.
    PostSel { p: LpExponent, bsel: usize },
}

fn parse_l_exponent(s: &str) -> Result<LpExponent> {
    if s == "logt" {
        return Ok(LpExponent::LogDim);
    }
    match s.strip_prefix('l') {
        Some(rest) => rest.parse(),
        None => Err(Error::Config(format!("expected l<p>, got {s:?}"))),
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("unknown statistic {s:?}"));
        match s.as_str() {
            "w" => return Ok(Statistic::W),
            "v" => return Ok(Statistic::V),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("student-") {
            return parse_l_exponent(rest).map(Statistic::Studentized).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("postsel:") {
            let (p, b) = rest.split_once(':').ok_or_else(bad)?;
            let p = p.strip_prefix('l').unwrap_or(p).parse().map_err(|_| bad())?;
            let bsel = b.parse().map_err(|_| bad())?;
            return Ok(Statistic::PostSel { p, bsel });
        }
        parse_l_exponent(&s).map(Statistic::Lp).map_err(|_| bad())
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Statistic::W => f.write_str("w"),
            Statistic::V => f.write_str("v"),
            Statistic::Lp(LpExponent::LogDim) => f.write_str("logt"),
            Statistic::Lp(p) => {
                f.write_str("l")?;
                write_exponent(f, p)
            }
            Statistic::Studentized(p) => {
                f.write_str("student-l")?;
                write_exponent(f, p)
            }
            Statistic::PostSel { p, bsel } => {
                f.write_str("postsel:")?;
                write_exponent(f, p)?;
                write!(f, ":{bsel}")
            }
        }
    }
}

string_serde!(Statistic);

/// Proxy used for critical values. Text form: `gaussian`, `spherical[:s]`, `multiplier`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Gaussian,
    Spherical(Option<usize>),
    Multiplier,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" => Ok(Method::Gaussian),
            "spherical" => Ok(Method::Spherical(None)),
            "multiplier" => Ok(Method::Multiplier),
            other => match other.strip_prefix("spherical:") {
                Some(k) => k
                    .parse()
                    .map(|k| Method::Spherical(Some(k)))
                    .map_err(|_| Error::Config(format!("bad spherical dimension in {other:?}"))),
                None => Err(Error::Config(format!("unknown method {other:?}"))),
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Gaussian => f.write_str("gaussian"),
            Method::Spherical(None) => f.write_str("spherical"),
            Method::Spherical(Some(s)) => write!(f, "spherical:{s}"),
            Method::Multiplier => f.write_str("multiplier"),
        }
    }
}

string_serde!(Method);

/// Covariance estimator. Text form: `naive`, `threshold[:λ]`, `band[:k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CovChoice {
    Naive,
    /// Hard threshold then PSD projection; `None` uses the sub-Gaussian default λ.
    Threshold(Option<f64>),
    /// Band then PSD projection; `None` uses the true bandwidth of the banded design.
    Band(Option<usize>),
}

impl FromStr for CovChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("unknown covariance estimator {s:?}"));
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s.as_str(), None),
        };
        match (head, arg) {
            ("naive", None) => Ok(CovChoice::Naive),
            ("threshold", None) => Ok(CovChoice::Threshold(None)),
            ("threshold", Some(a)) => a.parse().map(|l| CovChoice::Threshold(Some(l))).map_err(|_| bad()),
            ("band", None) => Ok(CovChoice::Band(None)),
            ("band", Some(a)) => a.parse().map(|k| CovChoice::Band(Some(k))).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for CovChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovChoice::Naive => f.write_str("naive"),
            CovChoice::Threshold(None) => f.write_str("threshold"),
            CovChoice::Threshold(Some(l)) => write!(f, "threshold:{l}"),
            CovChoice::Band(None) => f.write_str("band"),
            CovChoice::Band(Some(k)) => write!(f, "band:{k}"),
        }
    }
}

string_serde!(CovChoice);

/// `0.01, 0.02, …, 0.99`.
pub fn grid99() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

fn default_workers() -> usize {
    1
}

/// Parses `s:δ[:seed]`; without a seed the support is the leading `s` coordinates.
pub fn parse_alt(text: &str) -> Result<AltSpec> {
    let bad = || Error::Config(format!("alternative must be s:delta[:seed], got {text:?}"));
    let parts: Vec<&str> = text.trim().split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let s = parts[0].parse().map_err(|_| bad())?;
    let delta = parts[1].parse().map_err(|_| bad())?;
    let support = match parts.get(2) {
        Some(seed) => Support::Random { seed: seed.parse().map_err(|_| bad())? },
        None => Support::Leading,
    };
    Ok(AltSpec { s, delta, support })
}

/// Parses a comma-separated α list or `grid99`.
pub fn parse_alpha_grid(text: &str) -> Result<Vec<f64>> {
    if text.trim().eq_ignore_ascii_case("grid99") {
        return Ok(grid99());
    }
    text.split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad alpha {a:?}"))))
        .collect()
}

/// Full description of an experiment; its JSON form is the config-file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dgp: DgpKind,
    pub d: usize,
    pub n: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub reps: usize,
    pub statistic: Statistic,
    pub method: Method,
    /// `None` selects `band` for the banded design and `naive` otherwise.
    #[serde(default)]
    pub cov: Option<CovChoice>,
    #[serde(default = "grid99")]
    pub alpha_grid: Vec<f64>,
    #[serde(default)]
    pub alt: Option<AltSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl SimConfig {
    /// Minimal config with the default grid, no alternative, seed 0, one worker.
    pub fn new(dgp: DgpKind, d: usize, n: usize, b: usize, reps: usize, statistic: Statistic, method: Method) -> Self {
        Self {
            dgp,
            d,
            n,
            b,
            reps,
            statistic,
            method,
            cov: None,
            alpha_grid: grid99(),
            alt: None,
            seed: 0,
            workers: 1,
        }
    }

    /// Covariance estimator after defaults are applied.
    pub fn effective_cov(&self) -> CovChoice {
        match self.cov {
            Some(CovChoice::Band(None)) | None if self.dgp.cov_kind() == CovKind::Banded && self.statistic != Statistic::V => {
                CovChoice::Band(Some(band_width(self.d) - 1))
            }
            Some(c) => c,
            None => CovChoice::Naive,
        }
    }

    /// Config with defaults filled in and the α grid sorted; this is what gets echoed.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        c.cov = Some(self.effective_cov());
        c.alpha_grid.sort_by(f64::total_cmp);
        c.alpha_grid.dedup();
        c
    }

    /// Checks every invariant before any work is done.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.d == 0 {
            return cfg("d must be >= 1".into());
        }
        if self.n < 2 {
            return cfg(format!("n must be >= 2, got {}", self.n));
        }
        if self.b == 0 {
            return cfg("B must be >= 1".into());
        }
        if self.reps == 0 {
            return cfg("reps must be >= 1".into());
        }
        if self.workers == 0 {
            return cfg("workers must be >= 1".into());
        }
        if self.alpha_grid.is_empty() {
            return cfg("alpha grid is empty".into());
        }
        for &a in &self.alpha_grid {
            order_index(a, self.b)?;
        }
        let cov = self.effective_cov();
        match self.statistic {
            Statistic::W if self.d < 2 => return cfg("statistic w needs d >= 2".into()),
            Statistic::V if cov != CovChoice::Naive => {
                return cfg("statistic v uses its own self-normalized covariance; drop --cov".into())
            }
            Statistic::V if self.method == Method::Multiplier => {
                return cfg("statistic v has no multiplier bootstrap".into())
            }
            Statistic::PostSel { bsel, .. } if bsel == 0 || bsel > self.d => {
                return cfg(format!("postsel size must be in 1..={}, got {bsel}", self.d))
            }
            _ => {}
        }
        if self.method == Method::Multiplier && cov != CovChoice::Naive {
            return cfg("the multiplier bootstrap corresponds to the naive covariance only".into());
        }
        if let Method::Spherical(Some(s)) = self.method {
            if s < 2 {
                return cfg(format!("spherical dimension must be >= 2, got {s}"));
            }
        }
        if let CovChoice::Threshold(Some(l)) = cov {
            if !(l >= 0.0 && l.is_finite()) {
                return cfg(format!("threshold must be finite and nonnegative, got {l}"));
            }
        }
        if let Some(alt) = &self.alt {
            if alt.s == 0 || alt.s > self.d {
                return cfg(format!("alternative sparsity must be in 1..={}, got {}", self.d, alt.s));
            }
            if !(alt.delta >= 0.0 && alt.delta.is_finite()) {
                return cfg(format!("alternative strength must be finite and nonnegative, got {}", alt.delta));
            }
            alt.support_indices(self.d).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Compact JSON of the normalized config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.normalized()).expect("config serializes")
    }
}

/// Per-replication result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// One decision per α of the normalized grid.
    pub rejects: Vec<bool>,
}

struct Plan {
    cfg: SimConfig,
    cov: CovChoice,
    h: Hypothesis,
    mu: Option<Vec<f64>>,
}

impl Plan {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.normalized();
        let h = Hypothesis::identity(cfg.d);
        // every design has unit marginal variances
        let mu = match &cfg.alt {
            Some(alt) => Some(make_alternative(alt, &vec![1.0; cfg.d], &h)?),
            None => None,
        };
        Ok(Self { cov: cfg.effective_cov(), h, mu, cfg })
    }

    fn estimate_cov(&self, x: &Matrix) -> Result<CovModel> {
        match self.cov {
            CovChoice::Naive => sample_cov_transformed(x, &self.h),
            CovChoice::Threshold(lambda) => {
                let lambda = lambda.unwrap_or_else(|| {
                    default_lambda(self.cfg.d as f64, self.cfg.n as f64, TailRegime::SubGaussian, 1.0)
                });
                thresholded_cov(x, &self.h, lambda, false)
            }
            CovChoice::Band(k) => banded_cov(x, &self.h, k.unwrap_or(band_width(self.cfg.d) - 1)),
        }
    }

    fn draws(&self, x: &Matrix, cov: Option<&CovModel>, norm: ProxyNorm, stream: &RngStream) -> Result<ProxyDraws> {
        let b = self.cfg.b;
        match self.cfg.method {
            Method::Multiplier => multiplier_proxy(x, &self.h, norm, b, stream),
            method => {
                let owned;
                let cov = match cov {
                    Some(c) => c,
                    None => {
                        owned = self.estimate_cov(x)?;
                        &owned
                    }
                };
                match method {
                    Method::Spherical(s) => spherical_proxy(cov, norm, b, stream, s),
                    _ => gaussian_proxy(cov, norm, b, stream),
                }
            }
        }
    }

    fn run(&self, rep: usize) -> Result<RepOutcome> {
        let cfg = &self.cfg;
        let base = rep as u64 * STREAMS_PER_REP;
        let mut x = cfg.dgp.sample(cfg.n, cfg.d, &RngStream::new(cfg.seed, base + ROLE_DATA));
        if let Some(mu) = &self.mu {
            for i in 0..cfg.n {
                for (v, m) in x.row_mut(i).iter_mut().zip(mu) {
                    *v += m;
                }
            }
        }
        let proxy = RngStream::new(cfg.seed, base + ROLE_PROXY);
        let (statistic, draws) = match cfg.statistic {
            Statistic::Lp(p) => (t_stat(&x, &self.h, p)?, self.draws(&x, None, p.into(), &proxy)?),
            Statistic::W => (w_stat(&x, &self.h)?, self.draws(&x, None, ProxyNorm::L2PlusLogDim, &proxy)?),
            Statistic::Studentized(p) => {
                let (z, _) = studentize(&x)?;
                (t_stat(&z, &self.h, p)?, self.draws(&z, None, p.into(), &proxy)?)
            }
            Statistic::PostSel { p, bsel } => {
                (post_selection_stat(&x, p, bsel)?, self.draws(&x, None, p.into(), &proxy)?)
            }
            Statistic::V => {
                let cov = selfnorm_cov(&x, &self.h, self.mu.as_deref())?;
                let norm = LpExponent::Finite(2.0).into();
                (v_stat(&x, &self.h)?, self.draws(&x, Some(&cov), norm, &proxy)?)
            }
        };
        decide(statistic, &draws, &cfg.alpha_grid)
    }
}

/// Decisions on a whole α grid from one proxy sample.
pub fn decide(statistic: f64, draws: &ProxyDraws, alphas: &[f64]) -> Result<RepOutcome> {
    let values = draws.values();
    let rejects = alphas
        .iter()
        .map(|&a| Ok(statistic >= values[order_index(a, draws.b())? - 1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(RepOutcome { statistic, p_value: p_value(statistic, draws), rejects })
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs every replication and returns outcomes in replication order.
pub fn run_replications(cfg: &SimConfig) -> Result<Vec<RepOutcome>> {
    let plan = Plan::new(cfg)?;
    let pool = thread_pool(plan.cfg.workers)?;
    let results: Vec<Result<RepOutcome>> =
        pool.install(|| (0..plan.cfg.reps).into_par_iter().map(|rep| plan.run(rep)).collect());
    results.into_iter().collect()
}

/// One row of a size (or power) curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub alpha_nominal: f64,
    /// Rejection fraction.
    pub alpha_actual: f64,
    /// `√(â(1−â)/reps)`.
    pub mc_se: f64,
    pub reps: usize,
    pub reject_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Size,
    Power,
}

/// Rejection curve over the α grid plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCurve {
    pub kind: ExperimentKind,
    pub rows: Vec<SizeRow>,
    /// Normalized config.
    pub config: SimConfig,
    pub wall_time_secs: f64,
    pub version: String,
}

/// Rejection fractions per α (grid assumed sorted).
pub fn aggregate(alphas: &[f64], outcomes: &[RepOutcome]) -> Vec<SizeRow> {
    let reps = outcomes.len();
    alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let count = outcomes.iter().filter(|o| o.rejects[j]).count();
            let rate = if reps == 0 { 0.0 } else { count as f64 / reps as f64 };
            SizeRow {
                alpha_nominal: alpha,
                alpha_actual: rate,
                mc_se: if reps == 0 { 0.0 } else { (rate * (1.0 - rate) / reps as f64).sqrt() },
                reps,
                reject_count: count,
            }
        })
        .collect()
}

fn run_curve(cfg: &SimConfig, kind: ExperimentKind) -> Result<SizeCurve> {
    let start = Instant::now();
    let outcomes = run_replications(cfg)?;
    let config = cfg.normalized();
    Ok(SizeCurve {
        kind,
        rows: aggregate(&config.alpha_grid, &outcomes),
        config,
        wall_time_secs: start.elapsed().as_secs_f64(),
        version: VERSION.to_string(),
    })
}

/// Empirical size under `μ = 0`.
pub fn run_size_experiment(cfg: &SimConfig) -> Result<SizeCurve> {
    if cfg.alt.is_some() {
        return Err(Error::Config("size experiments run under the null; remove the alternative".into()));
    }
    run_curve(cfg, ExperimentKind::Size)
}

/// Empirical power with data shifted by the configured alternative.
pub fn run_power_experiment(cfg: &SimConfig) -> Result<SizeCurve> {
    if cfg.alt.is_none() {
        return Err(Error::Config("power experiments need an alternative".into()));
    }
    run_curve(cfg, ExperimentKind::Power)
}

/// Rows only, as written below the CSV header.
pub fn csv_body(curve: &SizeCurve) -> String {
    let mut out = String::from("alpha_nominal,alpha_actual,mc_se,reps,reject_count\n");
    for r in &curve.rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{},{}\n",
            r.alpha_nominal, r.alpha_actual, r.mc_se, r.reps, r.reject_count
        ));
    }
    out
}

/// `# hdlpboot v<version> config=<json>` followed by [`csv_body`].
pub fn write_csv<W: Write>(curve: &SizeCurve, mut w: W) -> io::Result<()> {
    writeln!(w, "# hdlpboot v{} config={}", curve.version, curve.config.canonical_json())?;
    w.write_all(csv_body(curve).as_bytes())
}

pub fn write_json<W: Write>(curve: &SizeCurve, mut w: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, curve).map_err(io::Error::other)?;
    writeln!(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Size/power experiments for high-dimensional ℓp bootstrap tests.
///
/// Runs a size experiment, or a power experiment when `--alt` is given. Flags
/// override values from `--config`.
#[derive(Debug, Parser)]
#[command(name = "hdlpboot", version)]
pub struct Cli {
    /// JSON config file; the CSV header's config is a valid input.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// equicorr | toeplitz | banded | t4toeplitz | gaussian | <copula|t4|gaussian>:<cov>
    #[arg(long)]
    pub dgp: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Proxy draws per replication.
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// l2 | linf | logt | l<p> | w | v | student-l2 | student-linf | postsel:<p>:<B>
    #[arg(long)]
    pub stat: Option<String>,
    /// gaussian | spherical[:s] | multiplier
    #[arg(long)]
    pub method: Option<String>,
    /// naive | threshold[:lambda] | band[:k]
    #[arg(long)]
    pub cov: Option<String>,
    /// Comma-separated list or grid99.
    #[arg(long)]
    pub alpha: Option<String>,
    /// s:delta[:support-seed]
    #[arg(long)]
    pub alt: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "HDLPBOOT_WORKERS")]
    pub workers: Option<usize>,
    /// Output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

const REQUIRED: [&str; 7] = ["dgp", "d", "n", "B", "reps", "statistic", "method"];

impl Cli {
    /// Config file values overlaid with command-line flags.
    pub fn to_config(&self) -> Result<SimConfig> {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(Error::Config("config file must hold a JSON object".into())),
                    Err(e) => return Err(Error::Config(format!("invalid config JSON: {e}"))),
                }
            }
            None => Map::new(),
        };
        let mut set = |k: &str, v: Value| {
            map.insert(k.to_string(), v);
        };
        if let Some(v) = &self.dgp {
            set("dgp", Value::from(v.parse::<DgpKind>()?.to_string()));
        }
        if let Some(v) = self.d {
            set("d", v.into());
        }
        if let Some(v) = self.n {
            set("n", v.into());
        }
        if let Some(v) = self.b {
            set("B", v.into());
        }
        if let Some(v) = self.reps {
            set("reps", v.into());
        }
        if let Some(v) = &self.stat {
            set("statistic", Value::from(v.parse::<Statistic>()?.to_string()));
        }
        if let Some(v) = &self.method {
            set("method", Value::from(v.parse::<Method>()?.to_string()));
        }
        if let Some(v) = &self.cov {
            set("cov", Value::from(v.parse::<CovChoice>()?.to_string()));
        }
        if let Some(v) = &self.alpha {
            set("alpha_grid", serde_json::to_value(parse_alpha_grid(v)?).expect("floats serialize"));
        }
        if let Some(v) = &self.alt {
            set("alt", serde_json::to_value(parse_alt(v)?).expect("alt serializes"));
        }
        if let Some(v) = self.seed {
            set("seed", v.into());
        }
        if let Some(v) = self.workers {
            set("workers", v.into());
        }
        let missing: Vec<String> = REQUIRED
            .iter()
            .filter(|k| !map.contains_key(**k))
            .map(|k| format!("--{}", if *k == "statistic" { "stat" } else { k }))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required option(s): {}", missing.join(", "))));
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }
}

/// Exit status of a failed run: 2 for configuration problems, 3 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        2
    } else {
        3
    }
}

/// Command-line entry point; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match cli.to_config().and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}\n\n{}", Cli::command().render_usage());
            return exit_code(&e);
        }
    };
    let result = if cfg.alt.is_some() { run_power_experiment(&cfg) } else { run_size_experiment(&cfg) };
    let curve = match result {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let written = match &cli.out {
        Some(path) => std::fs::File::create(path).and_then(|f| emit(&curve, cli.format, io::BufWriter::new(f))),
        None => emit(&curve, cli.format, io::stdout().lock()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return 3;
    }
    0
}

fn emit<W: Write>(curve: &SizeCurve, format: OutputFormat, mut w: W) -> io::Result<()> {
    match format {
        OutputFormat::Csv => write_csv(curve, &mut w)?,
        OutputFormat::Json => write_json(curve, &mut w)?,
    }
    w.flush()
}
