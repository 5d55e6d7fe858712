//! Config types and runners behind the command-line subcommands. Each runner
//! writes its files into an output directory and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::CorrectorCache;
use crate::coefficients::{validate_ellipticity, CoefficientSpec};
use crate::correctors::{sublinearity_exponent, CorrectorSet, DefectMethod, OscillationFit};
use crate::error::{Error, Result};
use crate::grid::save_field;
use crate::homogenization::{
    compute_homogenized_tensor, defect_invariance_probe, potential_residual, potential_sublinearity, solve_potentials,
    HomogenizedTensor, PotentialPart, ProbeEntry,
};
use crate::solver::{SolverOptions, SolverReport};
use crate::sources::Source;
use crate::study::{
    emit_comparison, emit_outputs, nu_r, prepare, to_json_pretty, write_file, ComparisonReport, RateStudyReport,
    StudyConfig, Timing, Verdict,
};
use crate::twoscale::{run_two_scale, CorrectorMode, Domain, RunRecord, TwoScaleInputs};

/// Files written and the verdict, when the command has one.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub verdict: Option<Verdict>,
}

fn parse<T: for<'de> Deserialize<'de>>(what: &str, s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::config(format!("{what} config: {e}")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn put_json<T: Serialize>(dir: &Path, name: &str, value: &T, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    write_file(&p, to_json_pretty(value).as_bytes())?;
    files.push(p);
    Ok(())
}

fn default_cell() -> usize {
    64
}
fn default_radius() -> f64 {
    8.0
}
fn default_npp() -> usize {
    16
}
fn default_true() -> bool {
    true
}
fn default_modes() -> Vec<CorrectorMode> {
    vec![CorrectorMode::Full, CorrectorMode::PeriodicOnly]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReportSummary {
    pub iterations: usize,
    pub relative_residual: f64,
}

impl From<&SolverReport> for ReportSummary {
    fn from(r: &SolverReport) -> Self {
        ReportSummary {
            iterations: r.iterations,
            relative_residual: r.relative_residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorConfig {
    pub coefficient: CoefficientSpec,
    #[serde(default = "default_cell")]
    pub cell_resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_resolution: Option<usize>,
    #[serde(default = "default_radius")]
    pub truncation_radius: f64,
    #[serde(default)]
    pub defect_method: DefectMethod,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Radii for the growth exponent of `w_j` about the defect center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sublinearity_radii: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl CorrectorConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        parse("corrector", s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SublinearityEntry {
    pub direction: usize,
    pub fit: OscillationFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct CorrectorOutput<'a> {
    spec_hash: String,
    cell_resolution: usize,
    box_resolution: usize,
    truncation_radius: f64,
    method: DefectMethod,
    cached: bool,
    solves: Vec<ReportSummary>,
    periodic_max_abs: Vec<f64>,
    defect_max_abs: Vec<Option<f64>>,
    sublinearity: &'a [SublinearityEntry],
}

fn load_correctors(
    spec: &CoefficientSpec,
    cell: usize,
    boxr: usize,
    radius: f64,
    method: DefectMethod,
    options: &SolverOptions,
    cache: Option<&CorrectorCache>,
) -> Result<(CorrectorSet, Vec<SolverReport>, bool)> {
    match cache {
        Some(c) => {
            let (set, o) = c.load_or_compute(spec, cell, boxr, radius, method, options)?;
            Ok((set, Vec::new(), o == crate::cache::CacheOutcome::Hit))
        }
        None => {
            let (set, reports) = CorrectorSet::compute(spec, cell, boxr, radius, method, options)?;
            Ok((set, reports, false))
        }
    }
}

pub fn run_corrector(cfg: &CorrectorConfig, out: &Path, cache: Option<&CorrectorCache>) -> Result<Outcome> {
    let spec = &cfg.coefficient;
    spec.validate()?;
    validate_ellipticity(spec, 8, cfg.truncation_radius.min(8.0))?;
    ensure_dir(out)?;
    let boxr = cfg.box_resolution.unwrap_or(cfg.cell_resolution);
    let (set, reports, cached) = load_correctors(
        spec,
        cfg.cell_resolution,
        boxr,
        cfg.truncation_radius,
        cfg.defect_method,
        &cfg.solver,
        cache,
    )?;
    let mut files = Vec::new();
    for (j, w) in set.periodic.iter().enumerate() {
        let p = out.join(format!("w_per_{j}.hdf1"));
        save_field(w, &p)?;
        files.push(p);
    }
    for (j, w) in set.defect.iter().enumerate() {
        if let Some(w) = w {
            let p = out.join(format!("w_tilde_{j}.hdf1"));
            save_field(w, &p)?;
            files.push(p);
        }
    }
    let mut sub = Vec::new();
    if let Some(radii) = &cfg.sublinearity_radii {
        for j in 0..spec.dim {
            match sublinearity_exponent(&set, spec, j, radii, cfg.seed) {
                Ok(fit) => sub.push(SublinearityEntry { direction: j, fit }),
                Err(Error::DegenerateOscillation) => log::info!("w_{j} has zero oscillation"),
                Err(e) => return Err(e),
            }
        }
    }
    let output = CorrectorOutput {
        spec_hash: spec.content_hash(),
        cell_resolution: set.cell_resolution,
        box_resolution: set.box_resolution,
        truncation_radius: set.truncation_radius,
        method: set.method,
        cached,
        solves: reports.iter().map(ReportSummary::from).collect(),
        periodic_max_abs: set.periodic.iter().map(|w| w.max_abs()).collect(),
        defect_max_abs: set.defect.iter().map(|w| w.as_ref().map(|f| f.max_abs())).collect(),
        sublinearity: &sub,
    };
    put_json(out, "corrector.json", &output, &mut files)?;
    Ok(Outcome { files, verdict: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorConfig {
    pub coefficient: CoefficientSpec,
    #[serde(default = "default_cell")]
    pub cell_resolution: usize,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Truncation radii for the defect invariance probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_radii: Option<Vec<f64>>,
}

impl TensorConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        parse("tensor", s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct TensorOutput<'a> {
    tensor: &'a HomogenizedTensor,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe: Option<Vec<ProbeEntry>>,
}

pub fn run_tensor(cfg: &TensorConfig, out: &Path) -> Result<Outcome> {
    let spec = &cfg.coefficient;
    spec.validate()?;
    validate_ellipticity(spec, 8, 8.0)?;
    ensure_dir(out)?;
    let (tensor, _) = compute_homogenized_tensor(spec, cfg.cell_resolution, &cfg.solver)?;
    let probe = match &cfg.probe_radii {
        Some(r) => Some(defect_invariance_probe(spec, r, cfg.cell_resolution, &cfg.solver)?),
        None => None,
    };
    let mut files = Vec::new();
    put_json(out, "tensor.json", &TensorOutput { tensor: &tensor, probe }, &mut files)?;
    Ok(Outcome { files, verdict: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub coefficient: CoefficientSpec,
    #[serde(default = "default_cell")]
    pub cell_resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_resolution: Option<usize>,
    #[serde(default = "default_radius")]
    pub truncation_radius: f64,
    #[serde(default)]
    pub defect_method: DefectMethod,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sublinearity_radii: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl PotentialConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        parse("potential", s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialEntry {
    pub k: usize,
    /// `‖div B − M‖₂ / ‖M‖₂` on the cell.
    pub residual: f64,
    pub staggered_divergence: f64,
    pub nodal_divergence: f64,
    pub antisymmetric: bool,
    pub solves: Vec<ReportSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct PotentialOutput {
    tensor: Vec<Vec<f64>>,
    potentials: Vec<PotentialEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sublinearity_exponent: Option<f64>,
}

fn is_antisymmetric(p: &PotentialPart, grid: &crate::grid::Grid) -> bool {
    let d = grid.dim;
    let m = p.to_matrix_field(grid);
    (0..grid.len()).all(|n| {
        let e = &m.data[n * d * d..(n + 1) * d * d];
        (0..d).all(|i| (0..d).all(|j| e[i * d + j] == -e[j * d + i]))
    })
}

pub fn run_potential(cfg: &PotentialConfig, out: &Path, cache: Option<&CorrectorCache>) -> Result<Outcome> {
    let spec = &cfg.coefficient;
    spec.validate()?;
    if spec.dim < 2 {
        return Err(Error::config("the potential is trivial in 1D; use dim >= 2"));
    }
    validate_ellipticity(spec, 8, cfg.truncation_radius.min(8.0))?;
    ensure_dir(out)?;
    let boxr = cfg.box_resolution.unwrap_or(cfg.cell_resolution);
    let (set, _, _) = load_correctors(
        spec,
        cfg.cell_resolution,
        boxr,
        cfg.truncation_radius,
        cfg.defect_method,
        &cfg.solver,
        cache,
    )?;
    let astar = crate::homogenization::homogenized_tensor(spec, &set.periodic)?;
    let (ms, bs) = solve_potentials(spec, &set, &astar, &cfg.solver)?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (m, b) in ms.iter().zip(&bs) {
        let cell_grid = &m.cell.grid;
        let p = out.join(format!("b_{}_cell.hdf1", m.k));
        save_field(&b.cell.to_matrix_field(cell_grid), &p)?;
        files.push(p);
        let mut anti = is_antisymmetric(&b.cell, cell_grid);
        if let (Some(d), Some(md)) = (&b.defect, &m.defect) {
            let p = out.join(format!("b_{}_defect.hdf1", m.k));
            save_field(&d.to_matrix_field(&md.grid), &p)?;
            files.push(p);
            anti &= is_antisymmetric(d, &md.grid);
        }
        entries.push(PotentialEntry {
            k: m.k,
            residual: potential_residual(b, m),
            staggered_divergence: m.staggered_divergence,
            nodal_divergence: m.nodal_divergence,
            antisymmetric: anti,
            solves: b.reports.iter().map(ReportSummary::from).collect(),
        });
    }
    let sublinearity_exponent = match &cfg.sublinearity_radii {
        Some(radii) => match potential_sublinearity(&bs, &spec.defect.center(spec.dim), radii, cfg.seed) {
            Ok(s) => Some(s),
            Err(Error::DegenerateOscillation) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    put_json(
        out,
        "potential.json",
        &PotentialOutput {
            tensor: astar.matrix.clone(),
            potentials: entries,
            sublinearity_exponent,
        },
        &mut files,
    )?;
    Ok(Outcome { files, verdict: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub source: Source,
    pub eps: f64,
    #[serde(default = "default_npp")]
    pub nodes_per_period: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrector_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default = "default_modes")]
    pub modes: Vec<CorrectorMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
    #[serde(default)]
    pub defect_method: DefectMethod,
    #[serde(default = "default_true")]
    pub residual_identity: bool,
    #[serde(default)]
    pub p_norms: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_true")]
    pub save_fields: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub allow_large: bool,
}

impl SolveConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        parse("solve", s)
    }

    /// The equivalent single-`ε` study settings.
    pub fn to_study(&self) -> StudyConfig {
        let mut c = StudyConfig::new(self.coefficient.clone());
        c.source = self.source.clone();
        c.eps = Some(vec![self.eps]);
        c.nodes_per_period = self.nodes_per_period;
        c.corrector_resolution = self.corrector_resolution;
        c.domain = self.domain.clone();
        c.modes = self.modes.clone();
        c.truncation_radius = self.truncation_radius;
        c.defect_method = self.defect_method;
        c.residual_identity = self.residual_identity;
        c.p_norms = self.p_norms.clone();
        c.solver = self.solver.clone();
        c.cache_dir = self.cache_dir.clone();
        c.allow_large = self.allow_large;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub eps: f64,
    pub astar: Vec<Vec<f64>>,
    pub truncation_radius: f64,
    pub records: Vec<RunRecord>,
    pub timings: Vec<Timing>,
}

pub fn run_solve(cfg: &SolveConfig, out: &Path, cache: Option<&CorrectorCache>) -> Result<(SolveReport, Outcome)> {
    let spec = &cfg.coefficient;
    spec.validate()?;
    nu_r(spec.dim, spec.r)?;
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(Error::config(format!("eps must lie in (0, 1), got {}", cfg.eps)));
    }
    let study = cfg.to_study();
    let domain = study.domain();
    domain.validate()?;
    if domain.omega.dim() != spec.dim {
        return Err(Error::config("domain dimension differs from the coefficient dimension"));
    }
    study.check_resources(false)?;
    ensure_dir(out)?;
    let setup = prepare(&study, cache)?;
    let inputs = TwoScaleInputs {
        spec,
        set: &setup.set,
        astar: &setup.astar,
        potentials: setup.potentials.as_deref(),
        source: &cfg.source,
        domain: &domain,
        nodes_per_period: cfg.nodes_per_period,
        p_list: &cfg.p_norms,
        residual_identity: cfg.residual_identity,
        options: &cfg.solver,
    };
    let t = Instant::now();
    let run = run_two_scale(&inputs, cfg.eps, &cfg.modes)?;
    let mut timings = setup.timings.clone();
    timings.extend(run.timings.iter().map(|(s, v)| Timing {
        stage: s.to_string(),
        seconds: *v,
    }));
    timings.push(Timing {
        stage: "two_scale".into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    let mut files = Vec::new();
    if cfg.save_fields {
        let mut save = |name: String, f: &crate::grid::GridField| -> Result<()> {
            let p = out.join(name);
            save_field(f, &p)?;
            files.push(p);
            Ok(())
        };
        save("u_eps.hdf1".into(), &run.u_eps)?;
        save("u_star.hdf1".into(), &run.u_star)?;
        for (mode, r) in &run.remainders {
            save(format!("remainder_{}.hdf1", mode.name()), r)?;
        }
        for (mode, h) in &run.h_fields {
            save(format!("h_{}.hdf1", mode.name()), h)?;
        }
    }
    let report = SolveReport {
        eps: cfg.eps,
        astar: setup.astar.matrix.clone(),
        truncation_radius: setup.set.truncation_radius,
        records: run.records.clone(),
        timings,
    };
    put_json(out, "run.json", &report, &mut files)?;
    Ok((report, Outcome { files, verdict: None }))
}

pub fn run_study_command(cfg: &StudyConfig, out: &Path, cache: Option<&CorrectorCache>) -> Result<(RateStudyReport, Outcome)> {
    let report = crate::study::run_rate_study(cfg, cache)?;
    let files = emit_outputs(&report, out)?;
    let verdict = Some(report.verdict);
    Ok((report, Outcome { files, verdict }))
}

pub fn run_compare_command(
    cfg: &StudyConfig,
    out: &Path,
    cache: Option<&CorrectorCache>,
) -> Result<(ComparisonReport, Outcome)> {
    let report = crate::study::compare_correctors(cfg, cache)?;
    let files = emit_comparison(&report, out)?;
    let verdict = Some(report.verdict);
    Ok((report, Outcome { files, verdict }))
}

/// 1D study with the closed-form comparison; `oracle.json` holds the oracle section.
pub fn run_oracle_check(cfg: &StudyConfig, out: &Path, cache: Option<&CorrectorCache>) -> Result<(RateStudyReport, Outcome)> {
    if cfg.coefficient.dim != 1 {
        return Err(Error::config("oracle-check needs a 1D coefficient"));
    }
    let mut cfg = cfg.clone();
    cfg.oracle = Some(true);
    let report = crate::study::run_rate_study(&cfg, cache)?;
    let mut files = emit_outputs(&report, out)?;
    let section = report.oracle.as_ref().expect("oracle enabled in 1D");
    put_json(out, "oracle.json", section, &mut files)?;
    let verdict = Some(section.verdict);
    Ok((report, Outcome { files, verdict }))
}
