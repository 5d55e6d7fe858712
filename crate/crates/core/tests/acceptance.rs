//! End-to-end acceptance checks, run sequentially so that wall-clock budgets
//! are measured on an otherwise idle process.
//!
//! `cargo test --test acceptance -- 3 7` runs only criteria 3 and 7.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use homodefect::cache::CorrectorCache;
use homodefect::coefficients::{Coefficient, CoefficientSpec, DefectPart, PeriodicPart};
use homodefect::correctors::{solve_defect_corrector, solve_periodic_corrector, sublinearity_exponent, CorrectorSet, DefectMethod};
use homodefect::grid::{Bc, GridField};
use homodefect::homogenization::{compute_homogenized_tensor, defect_invariance_probe, flux_residual, solve_potentials, FluxResidual, PotentialSlice};
use homodefect::oracle::oracle_remainder_norms;
use homodefect::solver::SolverOptions;
use homodefect::sources::Source;
use homodefect::study::{compare_correctors, emit_outputs, nu_r, nu_r_rational, prepare, run_rate_study, StudyConfig, Verdict};
use homodefect::twoscale::{run_two_scale, CorrectorMode, TwoScaleInputs};

type Check = Result<(bool, String), String>;

fn spec(dim: usize, periodic: PeriodicPart, defect: DefectPart, r: f64) -> CoefficientSpec {
    CoefficientSpec {
        dim,
        periodic,
        defect,
        r,
        mu: 4.0,
        alpha: None,
        period: None,
    }
}

fn sin_product() -> PeriodicPart {
    PeriodicPart::SinProduct { base: 2.0, amp: 1.0 }
}

fn gaussian() -> DefectPart {
    DefectPart::Gaussian { amplitude: 1.0, width: 1.0, center: None }
}

fn off_centre_source() -> Source {
    Source::GaussianBump { amplitude: 1.0, center: Some(vec![0.4]), width: 0.5 }
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 0.5f64.powi(k)).collect()
}

/// Plain least-squares slope of ln v against ln x.
fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Composite Simpson rule with `m` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn harmonic_mean_sin() -> f64 {
    1.0 / simpson(|y| 1.0 / (2.0 + (2.0 * PI * y).sin()), 0.0, 1.0, 4096)
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn c1() -> Check {
    // (d, r_num, r_den): d/r on both sides of 1, including near-critical ratios.
    let cases: [(u64, u64, u64); 20] = [
        (1, 2, 1),
        (1, 4, 1),
        (1, 7, 4),
        (1, 3, 2),
        (1, 11, 10),
        (1, 101, 100),
        (2, 3, 1),
        (2, 4, 1),
        (2, 5, 4),
        (2, 21, 10),
        (2, 19, 10),
        (2, 5, 2),
        (3, 2, 1),
        (3, 6, 1),
        (3, 4, 1),
        (3, 31, 10),
        (3, 29, 10),
        (3, 9, 2),
        (4, 6, 1),
        (4, 3, 1),
    ];
    let gcd = |mut a: u64, mut b: u64| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let mut failures = Vec::new();
    for &(d, rn, rd) in &cases {
        let (p, q) = nu_r_rational(d, rn, rd).map_err(e)?;
        // min(1, d/r) with r = rn/rd, as an exact reduced fraction.
        let (en, ed) = if d * rd >= rn { (1, 1) } else { (d * rd, rn) };
        let g = gcd(en, ed);
        let ok_rational = (p, q) == (en / g, ed / g);
        let float = nu_r(d as usize, rn as f64 / rd as f64).map_err(e)?;
        let ok_float = (float - p as f64 / q as f64).abs() <= 1e-15;
        if !(ok_rational && ok_float) {
            failures.push(format!("d={d} r={rn}/{rd} got {p}/{q} ({float})"));
        }
    }
    Ok((failures.is_empty(), format!("{} cases, mismatches {:?}", cases.len(), failures)))
}

fn c2() -> Check {
    let o = SolverOptions::default();
    let s1 = spec(1, sin_product(), DefectPart::None, 2.0);
    let (t1, _) = compute_homogenized_tensor(&s1, 1024, &o).map_err(e)?;
    let err1 = (t1.scalar() - 3f64.sqrt()).abs();
    let quad = harmonic_mean_sin();
    let s2 = spec(2, PeriodicPart::Laminate { base: 2.0, amp: 1.0, axis: 0 }, DefectPart::None, 3.0);
    let (t2, _) = compute_homogenized_tensor(&s2, 128, &o).map_err(e)?;
    let expected = [[quad, 0.0], [0.0, 2.0]];
    let err2 = (0..2)
        .flat_map(|i| (0..2).map(move |k| (i, k)))
        .map(|(i, k)| (t2.matrix[i][k] - expected[i][k]).abs())
        .fold(0.0, f64::max);
    let pass = err1 <= 1e-4 && (quad - 3f64.sqrt()).abs() < 1e-10 && err2 <= 1e-3;
    Ok((pass, format!("1D |a*-sqrt3| = {err1:.2e}; laminate max err = {err2:.2e}")))
}

fn c3() -> Check {
    let s = spec(1, sin_product(), gaussian(), 2.0);
    let probe = defect_invariance_probe(&s, &[8.0, 16.0, 32.0], 64, &SolverOptions::default()).map_err(e)?;
    let d: Vec<f64> = probe.iter().map(|p| p.discrepancy).collect();
    let monotone = d.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let last = *d.last().unwrap();
    Ok((monotone && last <= 0.02, format!("discrepancies {d:.4?}")))
}

/// `-div(a (e_j + ∇w))` with face coefficients and forward differences, on
/// the nodes of `w`, relative to the same operator applied to `w = 0`.
/// Dirichlet boundary rows are skipped.
fn corrector_residual(coef: &dyn Fn(&[f64]) -> f64, w: &GridField, j: usize) -> f64 {
    let g = &w.grid;
    let d = g.dim;
    let mut mi = vec![0usize; d];
    let mut x = vec![0.0; d];
    let neighbour = |mi: &[usize], k: usize, step: isize| -> Option<usize> {
        let n = g.extents[k] as isize;
        let mut m = mi.to_vec();
        let v = mi[k] as isize + step;
        m[k] = match g.bc {
            Bc::Periodic => v.rem_euclid(n) as usize,
            Bc::Dirichlet if v < 0 || v >= n => return None,
            Bc::Dirichlet => v as usize,
        };
        Some(g.linear_index(&m))
    };
    let (mut num, mut den) = (0.0, 0.0);
    for node in 0..g.len() {
        g.multi_index(node, &mut mi);
        if g.bc == Bc::Dirichlet && g.is_boundary(node) {
            continue;
        }
        let (mut r, mut r0) = (0.0, 0.0);
        for k in 0..d {
            let h = g.spacing[k];
            let delta = if k == j { 1.0 } else { 0.0 };
            let fwd = neighbour(&mi, k, 1).unwrap();
            let bwd = neighbour(&mi, k, -1).unwrap();
            g.coords(node, &mut x);
            x[k] += 0.5 * h;
            let a_plus = coef(&x);
            x[k] -= h;
            let a_minus = coef(&x);
            let f_plus = a_plus * (delta + (w.data[fwd] - w.data[node]) / h);
            let f_minus = a_minus * (delta + (w.data[node] - w.data[bwd]) / h);
            r += (f_plus - f_minus) / h;
            r0 += (a_plus - a_minus) * delta / h;
        }
        num += r * r;
        den += r0 * r0;
    }
    (num / den).sqrt()
}

fn c4() -> Check {
    let o = SolverOptions::default();
    let astar = harmonic_mean_sin();
    // 1D periodic corrector against w' = a*/a_per - 1 at face centres.
    let s1 = spec(1, sin_product(), DefectPart::None, 2.0);
    let (w, _) = solve_periodic_corrector(&s1, 1024, 0, &o).map_err(e)?;
    let n = w.grid.len();
    let h = w.grid.spacing[0];
    let err_per = (0..n)
        .map(|i| {
            let y = (i as f64 + 0.5) * h;
            let dw = (w.data[(i + 1) % n] - w.data[i]) / h;
            (dw - (astar / (2.0 + (2.0 * PI * y).sin()) - 1.0)).abs()
        })
        .fold(0.0, f64::max);
    // Full corrector with a Gaussian defect on [-32, 32].
    let sg = spec(1, sin_product(), gaussian(), 2.0);
    let (set, _) = CorrectorSet::compute(&sg, 64, 64, 32.0, DefectMethod::Auto, &o).map_err(e)?;
    let wt = set.defect[0].as_ref().unwrap();
    let hb = wt.grid.spacing[0];
    let err_full = (0..wt.grid.len() - 1)
        .map(|i| {
            let y0 = wt.grid.coord(0, i);
            let y = y0 + 0.5 * hb;
            let dw = (set.sample(0, &[y0 + hb]) - set.sample(0, &[y0])) / hb;
            (dw - (astar / sg.eval(&[y]) - 1.0)).abs()
        })
        .fold(0.0, f64::max);
    // 2D corrector residuals on the cell.
    let tol = o.tol;
    let s2 = spec(2, sin_product(), DefectPart::None, 3.0);
    let a_per = |x: &[f64]| s2.eval_periodic(x);
    let mut residuals = Vec::new();
    for res in [128usize, 256] {
        for j in 0..2 {
            let (w, _) = solve_periodic_corrector(&s2, res, j, &o).map_err(e)?;
            residuals.push((res, j, corrector_residual(&a_per, &w, j), w.mean().abs()));
        }
    }
    // Composite residual with a defect on the box interior.
    let s2g = spec(2, sin_product(), gaussian(), 3.0);
    let a_full = |x: &[f64]| s2g.eval(x);
    let (w0, _) = solve_periodic_corrector(&s2g, 32, 0, &o).map_err(e)?;
    let (wt0, _) = solve_defect_corrector(&s2g, &w0, 4.0, 32, 0, DefectMethod::DirichletBox, &o).map_err(e)?;
    let mut total = GridField::from_fn(&wt0.grid, |y| w0.sample(y).unwrap());
    for (t, v) in total.data.iter_mut().zip(&wt0.data) {
        *t += v;
    }
    let composite = corrector_residual(&a_full, &total, 0);
    let cell_ok = residuals.iter().all(|&(_, _, r, m)| r <= 10.0 * tol && m <= 1e-14);
    let pass = err_per <= 1e-3 && err_full <= 1e-3 && cell_ok && composite <= 10.0 * tol;
    let cells: Vec<String> = residuals.iter().map(|(n, j, r, _)| format!("n={n} j={j} {r:.1e}")).collect();
    Ok((
        pass,
        format!(
            "1D w' err {err_per:.2e}, with defect {err_full:.2e}; 2D residuals [{}], composite {composite:.1e} (limit {:.0e})",
            cells.join(", "),
            10.0 * tol
        ),
    ))
}

fn c5() -> Check {
    let o = SolverOptions::default();
    let radii = [8.0, 16.0, 32.0, 64.0, 128.0, 256.0];
    let box_r = 1.5 * 256.0 + 2.0;
    let sp = spec(1, sin_product(), DefectPart::Power { amplitude: 1.0, s: 0.3, center: None }, 4.0);
    let (set, _) = CorrectorSet::compute(&sp, 16, 16, box_r, DefectMethod::Auto, &o).map_err(e)?;
    let fit = sublinearity_exponent(&set, &sp, 0, &radii, 0).map_err(e)?;
    // Independent estimate from the explicit w̃(y) = ∫₀^y a*(1/a − 1/a_per).
    let astar = harmonic_mean_sin();
    let integrand = |y: f64| astar * (1.0 / sp.eval(&[y]) - 1.0 / sp.eval_periodic(&[y]));
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let m = 2 * (r as usize * 256);
            let up = simpson(integrand, 0.0, r, m);
            let down = simpson(integrand, -r, 0.0, m);
            (r, up.abs().max(down.abs()))
        })
        .collect();
    let oracle = ols_slope(&pts);
    let s0 = spec(1, sin_product(), DefectPart::None, 4.0);
    let (set0, _) = CorrectorSet::compute(&s0, 16, 16, box_r, DefectMethod::Auto, &o).map_err(e)?;
    let per = sublinearity_exponent(&set0, &s0, 0, &radii, 0).map_err(e)?;
    let measured = fit.fit.slope;
    let pass = (measured - 0.75).abs() <= 0.1 && (oracle - 0.75).abs() <= 0.1 && per.fit.slope <= 0.05;
    Ok((
        pass,
        format!("power-law exponent {measured:.3} (explicit integral {oracle:.3}); periodic-only {:.3}", per.fit.slope),
    ))
}

/// Backward divergence of the stored `B^{01}` against `M`, relative, on the
/// periodic cell: `(div B)^0 = D⁻_1 B^{01}`, `(div B)^1 = −D⁻_0 B^{01}`.
fn potential_mismatch(b: &PotentialSlice, m: &FluxResidual) -> f64 {
    let g = &m.cell.grid;
    let b01 = &b.cell.upper[0].data;
    let n = g.extents[0];
    let h = g.spacing[0];
    let idx = |i: usize, j: usize| g.linear_index(&[i % n, j % n]);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let here = idx(i, j);
            let div0 = (b01[here] - b01[idx(i, j + n - 1)]) / h;
            let div1 = -(b01[here] - b01[idx(i + n - 1, j)]) / h;
            for (c, v) in [div0, div1].into_iter().enumerate() {
                let mv = m.cell.data[here * 2 + c];
                num += (v - mv) * (v - mv);
                den += mv * mv;
            }
        }
    }
    (num / den).sqrt()
}

fn c6() -> Check {
    let o = SolverOptions::default();
    let s = spec(2, sin_product(), DefectPart::None, 3.0);
    let mut antisymmetric = true;
    let mut mismatch = 0.0f64;
    let mut div_m = Vec::new();
    for res in [64usize, 128, 256] {
        let (set, _) = CorrectorSet::compute(&s, res, res, 4.0, DefectMethod::Auto, &o).map_err(e)?;
        let (t, _) = compute_homogenized_tensor(&s, res, &o).map_err(e)?;
        let mut worst = 0.0f64;
        for k in 0..2 {
            worst = worst.max(flux_residual(&s, &set, &t, k).map_err(e)?.nodal_divergence);
        }
        div_m.push(worst);
        if res == 256 {
            let (ms, bs) = solve_potentials(&s, &set, &t, &o).map_err(e)?;
            for (m, b) in ms.iter().zip(&bs) {
                let mf = b.cell.to_matrix_field(&m.cell.grid);
                for c in mf.data.chunks(4) {
                    antisymmetric &= c[0] == 0.0 && c[3] == 0.0 && c[1] == -c[2];
                }
                mismatch = mismatch.max(potential_mismatch(b, m));
            }
        }
    }
    let ratios: Vec<f64> = div_m.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = antisymmetric && mismatch <= 1e-6 && ratios.iter().all(|&r| r >= 1.8);
    Ok((
        pass,
        format!("antisymmetric {antisymmetric}; |div B - M|/|M| = {mismatch:.2e}; div M {div_m:?} ratios {ratios:.2?}"),
    ))
}

fn identity_at(spec: &CoefficientSpec, eps: f64, npp: usize) -> Result<f64, String> {
    let mut cfg = StudyConfig::new(spec.clone());
    cfg.eps = Some(vec![eps, eps / 2.0, eps / 4.0, eps / 8.0]);
    cfg.nodes_per_period = npp;
    cfg.truncation_radius = Some(cfg.domain().omega.sup_extent() / eps + 2.0);
    let setup = prepare(&cfg, None).map_err(e)?;
    let domain = cfg.domain();
    let inputs = TwoScaleInputs {
        spec,
        set: &setup.set,
        astar: &setup.astar,
        potentials: setup.potentials.as_deref(),
        source: &cfg.source,
        domain: &domain,
        nodes_per_period: npp,
        p_list: &[],
        residual_identity: true,
        options: &cfg.solver,
    };
    let run = run_two_scale(&inputs, eps, &[CorrectorMode::Full]).map_err(e)?;
    let id = run.records[0].residual_identity.clone().ok_or("identity not computed")?;
    if id.degenerate_rhs {
        return Err("degenerate identity right-hand side".into());
    }
    Ok(id.relative_residual)
}

fn c7() -> Check {
    let s2 = spec(2, sin_product(), gaussian(), 3.0);
    let coarse = identity_at(&s2, 0.125, 16)?;
    let fine = identity_at(&s2, 0.125, 32)?;
    let order = (coarse / fine).log2();
    let s1 = spec(1, sin_product(), gaussian(), 2.0);
    let one_d = identity_at(&s1, 1.0 / 16.0, 64)?;
    Ok((
        order >= 1.0 && one_d <= 1e-2,
        format!("2D eps=1/8: {coarse:.3e} -> {fine:.3e}, order {order:.2}; 1D h=eps/64: {one_d:.2e}"),
    ))
}

fn c8() -> Check {
    let s = spec(1, sin_product(), DefectPart::None, 2.0);
    let eps = dyadic(4, 9);
    let src = Source::default();
    let t = Instant::now();
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .map(|&x| oracle_remainder_norms(&s, x, &src, CorrectorMode::Full, &[]).map(|n| (x, n.l2_remainder)))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let oracle_time = t.elapsed().as_secs_f64();
    let oracle_slope = ols_slope(&pts);
    let t = Instant::now();
    let mut cfg = StudyConfig::new(s);
    cfg.eps = Some(eps.clone());
    cfg.modes = vec![CorrectorMode::Full];
    cfg.oracle = Some(false);
    let report = run_rate_study(&cfg, None).map_err(e)?;
    let fd_time = t.elapsed().as_secs_f64();
    let fd_pts: Vec<(f64, f64)> = eps
        .iter()
        .map(|&x| (x, report.run(x, CorrectorMode::Full).unwrap().norms.l2_remainder))
        .collect();
    let fd_slope = ols_slope(&fd_pts);
    let pass = oracle_slope >= 0.9 && fd_slope >= 0.9 && oracle_time < 30.0 && fd_time < 300.0;
    Ok((
        pass,
        format!("L2 slope oracle {oracle_slope:.3} ({oracle_time:.1}s), FD {fd_slope:.3} ({fd_time:.1}s)"),
    ))
}

fn c9() -> Check {
    // a~ = (1+|y|)^(-0.6) lies in L^2 (2·0.6 > 1), so r = 2 and nu_r = 1/2.
    let s = spec(1, sin_product(), DefectPart::Power { amplitude: 1.0, s: 0.6, center: None }, 2.0);
    let mut cfg = StudyConfig::new(s);
    cfg.modes = vec![CorrectorMode::Full];
    let report = run_rate_study(&cfg, None).map_err(e)?;
    let nu = report.nu_r;
    let channels = [
        ("l2_remainder", false),
        ("h1_remainder_interior", false),
        ("linf_grad_remainder_interior", true),
    ];
    let mut slopes = Vec::new();
    let mut pass = (nu - 0.5).abs() < 1e-15 && report.verdict == Verdict::Pass;
    for (ch, log) in channels {
        let entry = report.slope(ch, CorrectorMode::Full, log).ok_or(format!("missing {ch}"))?;
        let slope = entry.fit.ok_or(format!("no fit for {ch}"))?.slope;
        // Cross-check the fit against the raw points.
        let pts: Vec<(f64, f64)> = report
            .eps
            .iter()
            .map(|&x| {
                let v = report.run(x, CorrectorMode::Full).unwrap().norms.channel(ch).unwrap();
                (x, if log { v / (2.0 + 1.0 / x).ln() } else { v })
            })
            .collect();
        pass &= (ols_slope(&pts) - slope).abs() < 1e-9 && slope >= nu - 0.15;
        slopes.push(format!("{ch}{} {slope:.3}", if log { " (log)" } else { "" }));
    }
    Ok((pass, format!("nu_r = {nu}; {}", slopes.join(", "))))
}

fn c10() -> Check {
    let s = spec(1, sin_product(), gaussian(), 2.0);
    let mut cfg = StudyConfig::new(s);
    cfg.source = off_centre_source();
    let cmp = compare_correctors(&cfg, None).map_err(e)?;
    let at = cmp.ratios.iter().find(|r| r.eps == 0.5f64.powi(8)).ok_or("no ratio at 2^-8")?;
    let per: Vec<(f64, f64)> = cmp.ratios.iter().map(|r| (r.eps, r.periodic_only)).collect();
    let per_slope = ols_slope(&per);
    let pass = at.rho <= 0.5 && per_slope <= 0.1 && cmp.verdict == Verdict::Pass;
    Ok((
        pass,
        format!("rho(2^-8) = {:.3}; periodic-only L-inf gradient slope {per_slope:.3}", at.rho),
    ))
}

fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn c11() -> Check {
    let s = spec(2, sin_product(), gaussian(), 3.0);
    let mut cfg = StudyConfig::new(s);
    cfg.eps = Some(dyadic(3, 6));
    cfg.modes = vec![CorrectorMode::Full];
    // Only the L2 rate is graded here; the identity is covered by criterion 7.
    cfg.residual_identity = false;
    let report = run_rate_study(&cfg, None).map_err(e)?;
    let mut stages: Vec<_> = report.timings.iter().filter(|t| t.stage != "total").collect();
    stages.sort_by(|a, b| b.seconds.total_cmp(&a.seconds));
    let slowest: Vec<String> = stages.iter().take(3).map(|t| format!("{} {:.0}s", t.stage, t.seconds)).collect();
    let slope = report
        .slope("l2_remainder", CorrectorMode::Full, false)
        .and_then(|s| s.fit)
        .ok_or("no L2 fit")?
        .slope;
    let labelled = report.regime.contains("outside theorem hypotheses");
    let rss = peak_rss_bytes();
    let mem_ok = rss.map_or(true, |b| b < 4 << 30) && cfg.memory_estimate() < 4 << 30;
    Ok((
        slope >= 0.7 && labelled && mem_ok,
        format!(
            "L2 slope {slope:.3}; regime \"{}\"; peak RSS {:.2} GB; slowest stages {}",
            report.regime,
            rss.unwrap_or(0) as f64 / (1u64 << 30) as f64,
            slowest.join(", ")
        ),
    ))
}

fn c12() -> Check {
    let s = spec(1, sin_product(), gaussian(), 2.0);
    let mut cfg = StudyConfig::new(s);
    cfg.eps = Some(dyadic(3, 6));
    cfg.source = off_centre_source();
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir()).collect::<Result<_, _>>().map_err(e)?;
    let cache = CorrectorCache::new(dirs[2].path()).map_err(e)?;
    let cold = run_rate_study(&cfg, Some(&cache)).map_err(e)?;
    let warm = run_rate_study(&cfg, Some(&cache)).map_err(e)?;
    let uncached = run_rate_study(&cfg, None).map_err(e)?;
    let hit = !cold.correctors.as_ref().unwrap().cached && warm.correctors.as_ref().unwrap().cached;
    let mut worst = 0.0f64;
    for (a, b) in cold.runs.iter().zip(&warm.runs) {
        for ((_, x), (_, y)) in a.norms.channels().into_iter().zip(b.norms.channels()) {
            worst = worst.max((x - y).abs());
        }
    }
    // Byte-level comparison of the written outputs, timing fields removed.
    emit_outputs(&cold, dirs[0].path()).map_err(e)?;
    emit_outputs(&uncached, dirs[1].path()).map_err(e)?;
    let mut identical = true;
    let mut names: Vec<_> = fs::read_dir(dirs[0].path())
        .map_err(e)?
        .map(|d| d.map(|d| d.file_name()))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    names.sort();
    for name in &names {
        let a = fs::read(dirs[0].path().join(name)).map_err(e)?;
        let b = fs::read(dirs[1].path().join(name)).map_err(e)?;
        if name.to_string_lossy().ends_with(".json") {
            let strip = |bytes: &[u8]| -> Result<String, String> {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).map_err(e)?;
                if let Some(o) = v.as_object_mut() {
                    o.remove("timings");
                    o.remove("environment");
                    if let Some(c) = o.get_mut("correctors").and_then(|c| c.as_object_mut()) {
                        c.remove("cached");
                    }
                }
                Ok(v.to_string())
            };
            identical &= strip(&a)? == strip(&b)?;
        } else {
            identical &= a == b;
        }
    }
    let same_report = serde_json::to_string(&cold.without_volatile().runs).map_err(e)?
        == serde_json::to_string(&uncached.without_volatile().runs).map_err(e)?;
    Ok((
        identical && same_report && hit && worst <= 1e-12,
        format!(
            "{} files identical {identical}; cache hit {hit}; cached vs cold max norm diff {worst:.1e}",
            names.len()
        ),
    ))
}

struct Criterion {
    id: u32,
    budget_s: f64,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, budget_s: 1.0, run: c1 },
        Criterion { id: 2, budget_s: 30.0, run: c2 },
        Criterion { id: 3, budget_s: 60.0, run: c3 },
        Criterion { id: 4, budget_s: 120.0, run: c4 },
        Criterion { id: 5, budget_s: 60.0, run: c5 },
        Criterion { id: 6, budget_s: 120.0, run: c6 },
        Criterion { id: 7, budget_s: 180.0, run: c7 },
        Criterion { id: 8, budget_s: 330.0, run: c8 },
        Criterion { id: 9, budget_s: 600.0, run: c9 },
        Criterion { id: 10, budget_s: 300.0, run: c10 },
        Criterion { id: 11, budget_s: 1200.0, run: c11 },
        Criterion { id: 12, budget_s: 120.0, run: c12 },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let t = Instant::now();
        let outcome = (c.run)();
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs <= c.budget_s;
        let (pass, detail) = match outcome {
            Ok((p, d)) => (p && in_time, d),
            Err(err) => (false, format!("error: {err}")),
        };
        println!(
            "criterion {}: {} {detail} [{secs:.1}s of {:.0}s]",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.budget_s
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
