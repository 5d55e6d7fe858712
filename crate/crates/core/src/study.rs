//! ε-sweeps, slope fits, verdicts and report files.
//!
//! Verdict logic. For each corrector mode and norm channel the slope of
//! `ln value` against `ln ε` is fitted by least squares. Only full-mode
//! channels bounded by the rate theorem carry a verdict: `l2_remainder`,
//! `h1_remainder_interior` (raw fits) and `linf_grad_remainder_interior`
//! (fit after dividing by `ln(2 + 1/ε)`). Such a channel is `PASS` when
//! `slope ≥ ν_r − slope_tolerance`, else `FAIL`. It is `DEGENERATE` when the
//! coefficient is constant or every value sits at the solver floor. All other
//! fits are `INFO`. The study verdict is `FAIL` if any channel fails,
//! `DEGENERATE` if all graded channels are degenerate, `PASS` otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheOutcome, CorrectorCache};
use crate::coefficients::{validate_ellipticity, CoefficientSpec};
use crate::correctors::{CorrectorSet, DefectMethod};
use crate::error::{Error, Result};
use crate::fit::{fit_log_log, SlopeFit};
use crate::homogenization::{solve_potentials, HomogenizedTensor, PotentialSlice};
use crate::oracle::{exact_norms, ExactRemainder1d, OracleEntry};
use crate::solver::SolverOptions;
use crate::sources::Source;
use crate::twoscale::{run_two_scale, CorrectorMode, Domain, RemainderNorms, RunRecord, TwoScaleInputs};

/// Default one-sided slope tolerance.
pub const SLOPE_TOLERANCE: f64 = 0.15;
/// Norms at or below this are treated as solver-floor noise.
pub const DEGENERATE_FLOOR: f64 = 1e-9;
pub const DEFAULT_MEMORY_LIMIT: u64 = 4 << 30;

/// `ν_r = min(1, d/r)`.
pub fn nu_r(d: usize, r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 1.0) {
        return Err(Error::config(format!("r must lie in (1, inf), got {r}")));
    }
    if d == 0 {
        return Err(Error::config("dimension must be positive"));
    }
    if r == d as f64 {
        return Err(Error::CriticalExponent { d });
    }
    Ok((d as f64 / r).min(1.0))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `ν_r` for rational `r = num/den` as a reduced fraction.
pub fn nu_r_rational(d: u64, r_num: u64, r_den: u64) -> Result<(u64, u64)> {
    if d == 0 || r_den == 0 || r_num <= r_den {
        return Err(Error::config(format!("need d > 0 and r = {r_num}/{r_den} > 1")));
    }
    if r_num == d * r_den {
        return Err(Error::CriticalExponent { d: d as usize });
    }
    // d/r = d·den/num
    let (n, m) = (d * r_den, r_num);
    if n >= m {
        return Ok((1, 1));
    }
    let g = gcd(n, m);
    Ok((n / g, m / g))
}

/// Slope fit on `(ε, value)` points.
pub fn fit_slope(points: &[(f64, f64)], log_correction: bool) -> Result<SlopeFit> {
    fit_log_log(points, log_correction)
}

fn default_npp() -> usize {
    16
}
fn default_modes() -> Vec<CorrectorMode> {
    vec![CorrectorMode::Full, CorrectorMode::PeriodicOnly]
}
fn default_tolerance() -> f64 {
    SLOPE_TOLERANCE
}
fn default_true() -> bool {
    true
}
fn default_oracle_tolerance() -> f64 {
    0.01
}
fn default_memory() -> u64 {
    DEFAULT_MEMORY_LIMIT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub source: Source,
    /// Strictly decreasing; defaults to `2⁻³..2⁻⁸` in 1D and `2⁻³..2⁻⁶` above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    /// Fine-grid nodes per period of `a(x/ε)`.
    #[serde(default = "default_npp")]
    pub nodes_per_period: usize,
    /// Corrector cell and box resolution; defaults to `nodes_per_period`
    /// so that `x/ε` falls on corrector nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrector_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default = "default_modes")]
    pub modes: Vec<CorrectorMode>,
    /// Defaults to `sup|x|/ε_min + 2` over `Ω`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
    #[serde(default)]
    pub defect_method: DefectMethod,
    #[serde(default = "default_tolerance")]
    pub slope_tolerance: f64,
    #[serde(default = "default_true")]
    pub residual_identity: bool,
    /// Closed-form 1D comparison; defaults to on in 1D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<bool>,
    #[serde(default = "default_oracle_tolerance")]
    pub oracle_tolerance: f64,
    #[serde(default)]
    pub p_norms: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub allow_large: bool,
    #[serde(default = "default_memory")]
    pub memory_limit_bytes: u64,
}

impl StudyConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: StudyConfig = serde_json::from_str(s).map_err(|e| Error::config(format!("study config: {e}")))?;
        Ok(cfg)
    }

    pub fn new(coefficient: CoefficientSpec) -> Self {
        StudyConfig::from_json_str(&serde_json::json!({ "coefficient": coefficient }).to_string())
            .expect("minimal config parses")
    }

    pub fn eps_list(&self) -> Vec<f64> {
        match &self.eps {
            Some(e) => e.clone(),
            None => {
                let last = if self.coefficient.dim == 1 { 8 } else { 6 };
                (3..=last).map(|k| 0.5f64.powi(k)).collect()
            }
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain.clone().unwrap_or_else(|| Domain::standard(self.coefficient.dim))
    }

    pub fn corrector_resolution(&self) -> usize {
        self.corrector_resolution.unwrap_or(self.nodes_per_period)
    }

    pub fn eps_min(&self) -> f64 {
        self.eps_list().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
            .unwrap_or_else(|| self.domain().omega.sup_extent() / self.eps_min() + 2.0)
    }

    pub fn oracle_enabled(&self) -> bool {
        self.coefficient.dim == 1 && self.oracle.unwrap_or(true)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(1).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.coefficient.validate()?;
        nu_r(self.coefficient.dim, self.coefficient.r)?;
        self.source.validate(self.coefficient.dim)?;
        let eps = self.eps_list();
        if eps.len() < 4 {
            return Err(Error::config(format!("need at least 4 eps values, got {}", eps.len())));
        }
        if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::config("eps values must lie in (0, 1)"));
        }
        if !eps.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::config("eps values must be strictly decreasing"));
        }
        if self.nodes_per_period < crate::twoscale::MIN_NODES_PER_PERIOD {
            return Err(Error::ResolutionTooCoarse {
                h: 1.0 / self.nodes_per_period as f64,
                limit: 1.0 / crate::twoscale::MIN_NODES_PER_PERIOD as f64,
                nodes_per_period: crate::twoscale::MIN_NODES_PER_PERIOD,
            });
        }
        if self.modes.is_empty() {
            return Err(Error::config("at least one corrector mode is required"));
        }
        let domain = self.domain();
        domain.validate()?;
        if domain.omega.dim() != self.coefficient.dim {
            return Err(Error::config("domain dimension differs from the coefficient dimension"));
        }
        if !(self.slope_tolerance >= 0.0 && self.slope_tolerance.is_finite()) {
            return Err(Error::config("slope_tolerance must be finite and >= 0"));
        }
        if self.p_norms.iter().any(|&p| !(p >= 1.0)) {
            return Err(Error::config("p_norms entries must be >= 1"));
        }
        if let Some(r) = self.truncation_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config("truncation_radius must be positive"));
            }
        }
        Ok(())
    }

    /// Coarse peak-memory estimate in bytes.
    pub fn memory_estimate(&self) -> u64 {
        let d = self.coefficient.dim as u32;
        let domain = self.domain();
        let h = self.eps_min() / self.nodes_per_period as f64;
        let fine: f64 = (0..d as usize)
            .map(|k| ((domain.omega.hi[k] - domain.omega.lo[k]) / h).ceil() + 1.0)
            .product();
        let df = d as f64;
        let per_run = fine * 8.0 * (16.0 + 5.0 * df + df * df);
        let box_nodes = if self.coefficient.has_defect() {
            (2.0 * (self.truncation_radius() * self.corrector_resolution() as f64).ceil() + 1.0).powi(d as i32)
        } else {
            0.0
        };
        let stored = box_nodes * 8.0 * df;
        let corrector_solve = box_nodes * 8.0 * (12.0 + df);
        let potentials = if self.residual_identity && d >= 2 {
            box_nodes * 8.0 * (df * df * (df - 1.0) / 2.0 + df + 12.0)
        } else {
            0.0
        };
        let runs = per_run * self.threads().min(self.eps_list().len()) as f64;
        (stored + potentials + corrector_solve.max(runs)) as u64
    }

    /// Dimension and memory gates.
    pub fn check_resources(&self, allow_large: bool) -> Result<()> {
        let allow = allow_large || self.allow_large;
        let estimate = self.memory_estimate();
        if self.coefficient.dim >= 3 && !allow {
            return Err(Error::TooLarge {
                estimate_bytes: estimate,
                limit_bytes: self.memory_limit_bytes,
            });
        }
        if estimate > self.memory_limit_bytes && !allow {
            return Err(Error::TooLarge {
                estimate_bytes: estimate,
                limit_bytes: self.memory_limit_bytes,
            });
        }
        Ok(())
    }
}

/// Label on every report.
pub fn regime_label(dim: usize) -> &'static str {
    match dim {
        1 => "1D regime",
        2 => "outside theorem hypotheses (d=2 excluded)",
        _ => "theorem regime (d >= 3)",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Degenerate,
    Info,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Degenerate => "DEGENERATE",
            Verdict::Info => "INFO",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeEntry {
    pub channel: String,
    pub mode: CorrectorMode,
    pub log_corrected: bool,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<SlopeFit>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunFailure {
    pub eps: f64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectorSummary {
    pub cell_resolution: usize,
    pub box_resolution: usize,
    pub truncation_radius: f64,
    pub method: DefectMethod,
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub eps: f64,
    pub mode: CorrectorMode,
    /// Largest relative difference over the norm channels.
    pub max_relative_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSection {
    pub runs: Vec<OracleEntry>,
    pub slopes: Vec<SlopeEntry>,
    pub agreement: Vec<Agreement>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current(threads: usize) -> Self {
        Environment {
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateStudyReport {
    pub regime: String,
    pub dim: usize,
    pub r: f64,
    pub nu_r: f64,
    pub slope_tolerance: f64,
    pub spec_hash: String,
    pub config: StudyConfig,
    pub eps: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub astar: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correctors: Option<CorrectorSummary>,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub slopes: Vec<SlopeEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    pub verdict: Verdict,
    pub environment: Environment,
    pub timings: Vec<Timing>,
}

impl RateStudyReport {
    /// A report with no runs, for a validated config.
    pub fn empty(config: &StudyConfig) -> Result<Self> {
        Ok(RateStudyReport {
            regime: regime_label(config.coefficient.dim).to_string(),
            dim: config.coefficient.dim,
            r: config.coefficient.r,
            nu_r: nu_r(config.coefficient.dim, config.coefficient.r)?,
            slope_tolerance: config.slope_tolerance,
            spec_hash: config.coefficient.content_hash(),
            config: config.clone(),
            eps: Vec::new(),
            astar: None,
            correctors: None,
            runs: Vec::new(),
            failures: Vec::new(),
            slopes: Vec::new(),
            oracle: None,
            verdict: Verdict::Degenerate,
            environment: Environment::current(config.threads()),
            timings: Vec::new(),
        })
    }

    pub fn run(&self, eps: f64, mode: CorrectorMode) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.eps == eps && r.mode == mode)
    }

    pub fn slope(&self, channel: &str, mode: CorrectorMode, log_corrected: bool) -> Option<&SlopeEntry> {
        self.slopes
            .iter()
            .find(|s| s.channel == channel && s.mode == mode && s.log_corrected == log_corrected)
    }

    /// Copy with timing and environment fields cleared.
    pub fn without_volatile(&self) -> Self {
        RateStudyReport {
            environment: Environment {
                version: String::new(),
                os: String::new(),
                arch: String::new(),
                threads: 0,
            },
            timings: Vec::new(),
            ..self.clone()
        }
    }
}

fn graded(channel: &str, log_corrected: bool) -> bool {
    matches!(
        (channel, log_corrected),
        ("l2_remainder", false) | ("h1_remainder_interior", false) | ("linf_grad_remainder_interior", true)
    )
}

/// Fit every channel of every mode present in `runs`.
pub fn fit_channels(
    runs: &[(f64, CorrectorMode, &RemainderNorms)],
    modes: &[CorrectorMode],
    nu: f64,
    tolerance: f64,
    constant_coefficient: bool,
) -> Vec<SlopeEntry> {
    let mut out = Vec::new();
    for &mode in modes {
        for channel in RemainderNorms::CHANNELS {
            let points: Vec<(f64, f64)> = runs
                .iter()
                .filter(|(_, m, _)| *m == mode)
                .map(|(e, _, n)| (*e, n.channel(channel).expect("known channel")))
                .collect();
            let corrections: &[bool] = if channel == "linf_grad_remainder_interior" {
                &[false, true]
            } else {
                &[false]
            };
            for &lc in corrections {
                let is_graded = mode == CorrectorMode::Full && graded(channel, lc);
                let floor = points.iter().all(|&(_, v)| v <= DEGENERATE_FLOOR);
                let fit = fit_slope(&points, lc).ok();
                let verdict = if !is_graded {
                    Verdict::Info
                } else if constant_coefficient || (floor && !points.is_empty()) {
                    Verdict::Degenerate
                } else {
                    match &fit {
                        Some(f) if f.slope >= nu - tolerance => Verdict::Pass,
                        _ => Verdict::Fail,
                    }
                };
                out.push(SlopeEntry {
                    channel: channel.to_string(),
                    mode,
                    log_corrected: lc,
                    points: points.len(),
                    fit,
                    verdict,
                });
            }
        }
    }
    out
}

fn overall(slopes: &[SlopeEntry]) -> Verdict {
    let graded: Vec<Verdict> = slopes.iter().map(|s| s.verdict).filter(|v| *v != Verdict::Info).collect();
    if graded.iter().any(|v| *v == Verdict::Fail) {
        Verdict::Fail
    } else if graded.is_empty() || graded.iter().all(|v| *v == Verdict::Degenerate) {
        Verdict::Degenerate
    } else {
        Verdict::Pass
    }
}

/// Everything computed once per study.
pub struct StudySetup {
    pub set: CorrectorSet,
    pub astar: HomogenizedTensor,
    pub potentials: Option<Vec<PotentialSlice>>,
    pub cached: bool,
    pub timings: Vec<Timing>,
}

fn timing(stage: &str, start: Instant) -> Timing {
    Timing {
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Correctors (through the cache when given), `a*` and, when needed, potentials.
pub fn prepare(config: &StudyConfig, cache: Option<&CorrectorCache>) -> Result<StudySetup> {
    let spec = &config.coefficient;
    let res = config.corrector_resolution();
    let radius = config.truncation_radius();
    let mut timings = Vec::new();
    let t = Instant::now();
    validate_ellipticity(spec, 8, radius.min(8.0))?;
    let (set, cached) = match cache {
        Some(c) => {
            let (set, outcome) = c.load_or_compute(spec, res, res, radius, config.defect_method, &config.solver)?;
            (set, outcome == CacheOutcome::Hit)
        }
        None => (
            CorrectorSet::compute(spec, res, res, radius, config.defect_method, &config.solver)?.0,
            false,
        ),
    };
    timings.push(timing("correctors", t));
    let t = Instant::now();
    let astar = crate::homogenization::homogenized_tensor(spec, &set.periodic)?;
    timings.push(timing("tensor", t));
    let potentials = if config.residual_identity && spec.dim >= 2 {
        let t = Instant::now();
        let (_, b) = solve_potentials(spec, &set, &astar, &config.solver)?;
        timings.push(timing("potentials", t));
        Some(b)
    } else {
        None
    };
    Ok(StudySetup {
        set,
        astar,
        potentials,
        cached,
        timings,
    })
}

type SweepResult = (Vec<RunRecord>, Vec<(String, f64)>);

/// One two-scale run per `ε`, spread over `threads` workers; results in `ε` order.
fn sweep(config: &StudyConfig, setup: &StudySetup, threads: usize) -> Vec<std::result::Result<SweepResult, String>> {
    let domain = config.domain();
    let inputs = TwoScaleInputs {
        spec: &config.coefficient,
        set: &setup.set,
        astar: &setup.astar,
        potentials: setup.potentials.as_deref(),
        source: &config.source,
        domain: &domain,
        nodes_per_period: config.nodes_per_period,
        p_list: &config.p_norms,
        residual_identity: config.residual_identity,
        options: &config.solver,
    };
    let eps = config.eps_list();
    let slots: Mutex<Vec<Option<std::result::Result<SweepResult, String>>>> = Mutex::new(vec![None; eps.len()]);
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, eps.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= eps.len() {
                    break;
                }
                let e = eps[i];
                let out = run_two_scale(&inputs, e, &config.modes)
                    .map(|run| {
                        let t = run.timings.iter().map(|(s, v)| (format!("eps={e}:{s}"), *v)).collect();
                        (run.records, t)
                    })
                    .map_err(|err| err.to_string());
                if let Err(msg) = &out {
                    log::warn!("eps = {e}: {msg}");
                }
                slots.lock().expect("slot lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|s| s.expect("every eps visited"))
        .collect()
}

fn oracle_section(config: &StudyConfig, runs: &[RunRecord], nu: f64) -> Result<OracleSection> {
    let spec = &config.coefficient;
    let mut entries = Vec::new();
    let mut agreement = Vec::new();
    for e in config.eps_list() {
        let exact = ExactRemainder1d::new(spec, e, &config.source)?;
        for &mode in &config.modes {
            let norms = exact_norms(&exact, mode, &config.p_norms);
            if let Some(fd) = runs.iter().find(|r| r.eps == e && r.mode == mode) {
                agreement.push(Agreement {
                    eps: e,
                    mode,
                    max_relative_difference: fd.norms.max_relative_difference(&norms),
                });
            }
            entries.push(OracleEntry { eps: e, mode, norms });
        }
    }
    let refs: Vec<(f64, CorrectorMode, &RemainderNorms)> = entries.iter().map(|o| (o.eps, o.mode, &o.norms)).collect();
    let constant = spec.periodic.is_constant() && !spec.has_defect();
    let slopes = fit_channels(&refs, &config.modes, nu, config.slope_tolerance, constant);
    let tolerance = config.oracle_tolerance;
    let verdict = if agreement.is_empty() {
        Verdict::Degenerate
    } else if agreement.iter().all(|a| a.max_relative_difference <= tolerance) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(OracleSection {
        runs: entries,
        slopes,
        agreement,
        tolerance,
        verdict,
    })
}

/// Full ε-sweep with fits and verdicts.
pub fn run_rate_study(config: &StudyConfig, cache: Option<&CorrectorCache>) -> Result<RateStudyReport> {
    config.validate()?;
    config.check_resources(false)?;
    let started = Instant::now();
    let mut report = RateStudyReport::empty(config)?;
    report.eps = config.eps_list();
    let setup = prepare(config, cache)?;
    report.timings.extend(setup.timings.iter().cloned());
    report.astar = Some(setup.astar.matrix.clone());
    report.correctors = Some(CorrectorSummary {
        cell_resolution: setup.set.cell_resolution,
        box_resolution: setup.set.box_resolution,
        truncation_radius: setup.set.truncation_radius,
        method: setup.set.method,
        cached: setup.cached,
    });
    for (e, out) in report.eps.clone().into_iter().zip(sweep(config, &setup, config.threads())) {
        match out {
            Ok((records, times)) => {
                report.runs.extend(records);
                report
                    .timings
                    .extend(times.into_iter().map(|(stage, seconds)| Timing { stage, seconds }));
            }
            Err(error) => report.failures.push(RunFailure { eps: e, error }),
        }
    }
    let survived = report.eps.len() - report.failures.len();
    if survived < 4 {
        return Err(Error::InsufficientPoints(survived));
    }
    let spec = &config.coefficient;
    let constant = spec.periodic.is_constant() && !spec.has_defect();
    let refs: Vec<(f64, CorrectorMode, &RemainderNorms)> = report.runs.iter().map(|r| (r.eps, r.mode, &r.norms)).collect();
    report.slopes = fit_channels(&refs, &config.modes, report.nu_r, config.slope_tolerance, constant);
    report.verdict = overall(&report.slopes);
    if config.oracle_enabled() {
        let t = Instant::now();
        report.oracle = Some(oracle_section(config, &report.runs, report.nu_r)?);
        report.timings.push(timing("oracle", t));
    }
    report.timings.push(timing("total", started));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioEntry {
    pub eps: f64,
    pub full: f64,
    pub periodic_only: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub ratios: Vec<RatioEntry>,
    /// Decay slope of the periodic-only `L^∞(Ω₁)` gradient remainder.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodic_only_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_slope: Option<f64>,
    /// Allowed relative increase of `ρ` between successive `ε`.
    pub noise: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub study: RateStudyReport,
}

impl ComparisonReport {
    pub fn without_volatile(&self) -> Self {
        ComparisonReport {
            study: self.study.without_volatile(),
            ..self.clone()
        }
    }
}

/// `ρ(ε) = ‖∇R_full‖_{L^∞(Ω₁)} / ‖∇R_per‖_{L^∞(Ω₁)}`. PASS when
/// `ρ(ε_min) ≤ 0.5` and `ρ` never grows by more than 20% from one `ε` to the next.
pub fn compare_correctors(config: &StudyConfig, cache: Option<&CorrectorCache>) -> Result<ComparisonReport> {
    let mut cfg = config.clone();
    cfg.modes = default_modes();
    let study = run_rate_study(&cfg, cache)?;
    Ok(comparison_from_study(study))
}

pub fn comparison_from_study(study: RateStudyReport) -> ComparisonReport {
    const CHANNEL: &str = "linf_grad_remainder_interior";
    let mut ratios = Vec::new();
    for &e in &study.eps {
        if let (Some(f), Some(p)) = (study.run(e, CorrectorMode::Full), study.run(e, CorrectorMode::PeriodicOnly)) {
            let (a, b) = (f.norms.linf_grad_remainder_interior, p.norms.linf_grad_remainder_interior);
            ratios.push(RatioEntry {
                eps: e,
                full: a,
                periodic_only: b,
                rho: if b > 0.0 { a / b } else { 1.0 },
            });
        }
    }
    let (noise, threshold) = (0.2, 0.5);
    let has_defect = study.config.coefficient.has_defect();
    let verdict = if !has_defect || ratios.is_empty() {
        Verdict::Degenerate
    } else {
        let last = ratios.last().expect("non-empty").rho;
        let monotone = ratios.windows(2).all(|w| w[1].rho <= (1.0 + noise) * w[0].rho);
        if last <= threshold && monotone {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    let slope_of = |mode| study.slope(CHANNEL, mode, false).and_then(|s| s.fit).map(|f| f.slope);
    ComparisonReport {
        periodic_only_slope: slope_of(CorrectorMode::PeriodicOnly),
        full_slope: slope_of(CorrectorMode::Full),
        ratios,
        noise,
        threshold,
        verdict,
        study,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// `report.json`, `rates.csv`, `slopes.csv`, one `.dat` per channel and mode,
/// and `summary.txt`.
pub fn emit_outputs(report: &RateStudyReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = out_dir.join(name);
        write_file(&p, body.as_bytes())?;
        written.push(p);
        Ok(())
    };
    put("report.json", to_json_pretty(report))?;

    let mut rates = String::from("eps,channel,mode,value\n");
    for run in &report.runs {
        for (c, v) in run.norms.channels() {
            let _ = writeln!(rates, "{:e},{c},{},{:e}", run.eps, run.mode.name(), v);
        }
    }
    put("rates.csv", rates)?;

    let mut slopes = String::from("channel,mode,log_corrected,points,slope,stderr,intercept,nu_r,verdict\n");
    for s in &report.slopes {
        let (a, b, c) = s.fit.map_or((String::new(), String::new(), String::new()), |f| {
            (format!("{:.6}", f.slope), format!("{:.6}", f.stderr), format!("{:.6}", f.intercept))
        });
        let _ = writeln!(
            slopes,
            "{},{},{},{},{a},{b},{c},{:.6},{}",
            s.channel,
            s.mode.name(),
            s.log_corrected,
            s.points,
            report.nu_r,
            s.verdict.as_str()
        );
    }
    put("slopes.csv", slopes)?;

    let mut dat: BTreeMap<String, String> = BTreeMap::new();
    for run in &report.runs {
        for (c, v) in run.norms.channels() {
            let body = dat
                .entry(format!("{c}_{}.dat", run.mode.name()))
                .or_insert_with(|| "# ln(eps) ln(value)\n".to_string());
            if v > 0.0 {
                let _ = writeln!(body, "{:.12e} {:.12e}", run.eps.ln(), v.ln());
            }
        }
    }
    for (name, body) in dat {
        put(&name, body)?;
    }

    put("summary.txt", summary(report))?;
    Ok(written)
}

pub fn summary(report: &RateStudyReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "rate study: d = {}, r = {}, nu_r = {:.4}", report.dim, report.r, report.nu_r);
    let _ = writeln!(s, "regime: {}", report.regime);
    let _ = writeln!(s, "eps: {:?}", report.eps);
    if let Some(a) = &report.astar {
        let _ = writeln!(s, "a*: {a:?}");
    }
    for f in &report.failures {
        let _ = writeln!(s, "failed at eps = {}: {}", f.eps, f.error);
    }
    let _ = writeln!(s, "slopes (one-sided tolerance {}):", report.slope_tolerance);
    for e in &report.slopes {
        let fit = e.fit.map_or("n/a".to_string(), |f| format!("{:.4} +- {:.4}", f.slope, f.stderr));
        let lc = if e.log_corrected { " (log-corrected)" } else { "" };
        let _ = writeln!(
            s,
            "  {:<30} {:<14} {fit:<20} {}{lc}",
            e.channel,
            e.mode.name(),
            e.verdict.as_str()
        );
    }
    if let Some(o) = &report.oracle {
        let worst = o.agreement.iter().map(|a| a.max_relative_difference).fold(0.0, f64::max);
        let _ = writeln!(
            s,
            "oracle agreement: max relative difference {worst:.3e} (tolerance {}) {}",
            o.tolerance,
            o.verdict.as_str()
        );
    }
    let _ = writeln!(s, "verdict: {}", report.verdict.as_str());
    s
}

/// Study files plus `comparison.json` and `comparison.csv`.
pub fn emit_comparison(report: &ComparisonReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = emit_outputs(&report.study, out_dir)?;
    let p = out_dir.join("comparison.json");
    write_file(&p, to_json_pretty(report).as_bytes())?;
    written.push(p);
    let mut csv = String::from("eps,full,periodic_only,rho\n");
    for r in &report.ratios {
        let _ = writeln!(csv, "{:e},{:e},{:e},{:e}", r.eps, r.full, r.periodic_only, r.rho);
    }
    let p = out_dir.join("comparison.csv");
    write_file(&p, csv.as_bytes())?;
    written.push(p);
    let mut text = summary(&report.study);
    let _ = writeln!(text, "corrector comparison (rho = full / periodic-only, L^inf gradient on omega1):");
    for r in &report.ratios {
        let _ = writeln!(text, "  eps = {:<12e} rho = {:.4}", r.eps, r.rho);
    }
    let _ = writeln!(text, "comparison verdict: {}", report.verdict.as_str());
    let p = out_dir.join("summary.txt");
    write_file(&p, text.as_bytes())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DefectPart, PeriodicPart};

    fn spec(periodic: PeriodicPart, defect: DefectPart, r: f64) -> CoefficientSpec {
        CoefficientSpec {
            dim: 1,
            periodic,
            defect,
            r,
            mu: 4.0,
            alpha: None,
            period: None,
        }
    }

    #[test]
    fn nu_r_instances() {
        assert_eq!(nu_r(3, 2.0).unwrap(), 1.0);
        assert_eq!(nu_r(3, 6.0).unwrap(), 0.5);
        assert_eq!(nu_r(1, 4.0).unwrap(), 0.25);
        assert!(matches!(nu_r(2, 2.0), Err(Error::CriticalExponent { d: 2 })));
        assert!(nu_r(1, 1.0).is_err());
        assert_eq!(nu_r_rational(3, 6, 1).unwrap(), (1, 2));
        assert_eq!(nu_r_rational(2, 7, 2).unwrap(), (4, 7));
        assert_eq!(nu_r_rational(3, 2, 1).unwrap(), (1, 1));
    }

    #[test]
    fn fit_slope_examples() {
        let pts: Vec<_> = (3..9).map(|k| (0.5f64.powi(k), 0.5f64.powi(k).powf(0.75))).collect();
        assert!((fit_slope(&pts, false).unwrap().slope - 0.75).abs() < 1e-12);
        assert!(fit_slope(&pts[..3], false).is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let s = spec(PeriodicPart::SinProduct { base: 2.0, amp: 1.0 }, DefectPart::None, 2.0);
        let c = StudyConfig::new(s.clone());
        assert_eq!(c.eps_list().len(), 6);
        assert_eq!(c.eps_min(), 0.5f64.powi(8));
        assert_eq!(c.truncation_radius(), 256.0 + 2.0);
        assert!(c.validate().is_ok());
        let mut bad = c.clone();
        bad.eps = Some(vec![0.1, 0.2, 0.05, 0.01]);
        assert!(bad.validate().unwrap_err().is_config_error());
        let mut bad = c.clone();
        bad.eps = Some(vec![0.1, 0.05, 0.01]);
        assert!(bad.validate().is_err());
        let mut crit = c.clone();
        crit.coefficient.dim = 2;
        crit.coefficient.r = 2.0;
        assert!(matches!(crit.validate(), Err(Error::CriticalExponent { d: 2 })));
        assert!(StudyConfig::from_json_str(r#"{"coefficient": {}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn three_d_needs_allow_large() {
        let mut s = spec(PeriodicPart::SinProduct { base: 2.0, amp: 1.0 }, DefectPart::None, 2.0);
        s.dim = 3;
        let c = StudyConfig::new(s);
        assert!(matches!(c.check_resources(false), Err(Error::TooLarge { .. })));
        assert!(c.check_resources(true).is_ok() || c.memory_estimate() > 0);
    }

    #[test]
    fn constant_coefficient_study_is_degenerate() {
        let s = spec(PeriodicPart::Constant { value: 2.0 }, DefectPart::None, 2.0);
        let mut c = StudyConfig::new(s);
        c.eps = Some(vec![0.125, 0.0625, 0.03125, 0.015625]);
        let r = run_rate_study(&c, None).unwrap();
        assert_eq!(r.verdict, Verdict::Degenerate);
        assert_eq!(r.regime, "1D regime");
        let cmp = comparison_from_study(r);
        assert!(cmp.ratios.iter().all(|x| (x.rho - 1.0).abs() < 1e-12 || x.full == x.periodic_only));
        assert_eq!(cmp.verdict, Verdict::Degenerate);
    }

    #[test]
    fn periodic_study_passes_and_files_are_deterministic() {
        let s = spec(PeriodicPart::SinProduct { base: 2.0, amp: 1.0 }, DefectPart::None, 2.0);
        let mut c = StudyConfig::new(s);
        c.eps = Some(vec![0.125, 0.0625, 0.03125, 0.015625]);
        // second-order FD error in the L^inf gradient is ~0.5% here
        c.nodes_per_period = 32;
        let r = run_rate_study(&c, None).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", summary(&r));
        let l2 = r.slope("l2_remainder", CorrectorMode::Full, false).unwrap();
        assert!(l2.fit.unwrap().slope >= 0.9);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit_outputs(&r, a.path()).unwrap();
        emit_outputs(&r, b.path()).unwrap();
        for name in ["report.json", "rates.csv", "slopes.csv", "summary.txt"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
        let rows = fs::read_to_string(a.path().join("rates.csv")).unwrap().lines().count() - 1;
        assert_eq!(rows, 4 * RemainderNorms::CHANNELS.len() * 2);
        let o = r.oracle.as_ref().unwrap();
        assert!(o.verdict == Verdict::Pass, "{:?}", o.agreement);
    }

    #[test]
    fn empty_report_outputs() {
        let s = spec(PeriodicPart::SinProduct { base: 2.0, amp: 1.0 }, DefectPart::None, 2.0);
        let r = RateStudyReport::empty(&StudyConfig::new(s)).unwrap();
        let d = tempfile::tempdir().unwrap();
        emit_outputs(&r, d.path()).unwrap();
        assert_eq!(fs::read_to_string(d.path().join("rates.csv")).unwrap(), "eps,channel,mode,value\n");
        assert_eq!(fs::read_to_string(d.path().join("slopes.csv")).unwrap().lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
        assert!(v["runs"].as_array().unwrap().is_empty());
    }

    #[test]
    fn too_few_survivors_is_fatal() {
        let s = spec(PeriodicPart::SinProduct { base: 2.0, amp: 1.0 }, DefectPart::None, 2.0);
        let mut c = StudyConfig::new(s);
        c.eps = Some(vec![0.125, 0.0625, 0.03125, 0.015625]);
        c.solver.max_iter = 1;
        c.solver.method = crate::solver::SolveMethod::Pcg;
        assert!(matches!(run_rate_study(&c, None), Err(Error::InsufficientPoints(_)) | Err(Error::NoConvergence { .. })));
    }
}
