//! Experiment runner: one function per experiment, each returning CSV
//! artifacts and a summary with pass/fail assertions.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::admissibility::{
    bound_probe, compare_with_oracle, green_solve, random_periodic_instance, residual,
    uniqueness_probe, OrbitFunction,
};
use crate::base::{BasePoint, BaseSystem, Observable, Region};
use crate::cocycle::Cocycle;
use crate::config::{Experiment, RunConfig};
use crate::degeneracy::{
    birkhoff_extrema, birkhoff_trajectory, default_grid, induce, mane_sequences,
    recurrent_vector_search, violation_witness, zero_block_basis, WitnessBudgets,
};
use crate::dichotomy::{
    build_certificate, classify, tempered_envelope, temperedness_diagnostic, verify_certificate,
    CertificateOptions, Classification, DichotomyCertificate,
};
use crate::error::{LabError, Result};
use crate::met::{lyapunov_exponents, oseledets_splitting, LyapunovSpectrum};
use crate::report::{emit_report, write_summary, Artifact, Summary};
use crate::robustness::{budget, robustness_trials, RobustnessOptions};

/// Floquet exponents of oracle instances are kept away from zero by this much.
pub const ORACLE_MIN_EXPONENT: f64 = 0.3;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: Summary,
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    base: BaseSystem,
    cocycle: Option<Cocycle>,
    start: BasePoint,
    summary: Summary,
    artifacts: Vec<Artifact>,
}

impl Ctx<'_> {
    fn cocycle(&self) -> Result<&Cocycle> {
        self.cocycle
            .as_ref()
            .ok_or_else(|| LabError::Config("a [cocycle] section is required".into()))
    }

    fn spectrum(&self) -> Result<LyapunovSpectrum> {
        let n = &self.cfg.numerics;
        lyapunov_exponents(
            self.cocycle()?,
            &self.base,
            &self.start,
            n.steps,
            n.reorth,
            n.gap_tol,
        )
    }

    fn cert_options(&self) -> CertificateOptions {
        let n = &self.cfg.numerics;
        CertificateOptions {
            safety: n.safety,
            n_max: n.n_max,
            window: n.window,
            zero_tol: n.zero_tol,
        }
    }

    fn certificate(&self, spectrum: &LyapunovSpectrum) -> Result<DichotomyCertificate> {
        build_certificate(
            self.cocycle()?,
            &self.base,
            spectrum,
            &[self.start],
            &self.cert_options(),
        )
    }
}

/// Runs the configured experiment in memory.
///
/// Numerical failures are recorded in the summary (`error`) rather than
/// returned; only configuration problems produce `Err`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let base = cfg.base.build()?;
    let cocycle = match &cfg.cocycle {
        Some(c) => Some(c.build()?),
        None => None,
    };
    let start = match base {
        BaseSystem::Periodic { .. } => BasePoint::periodic(0),
        _ => base.sample_point(&mut cfg.stream("base")),
    };
    let parameters = serde_json::to_value(cfg).map_err(|e| LabError::Config(e.to_string()))?;
    let mut ctx = Ctx {
        cfg,
        base,
        cocycle,
        start,
        summary: Summary::new(cfg.experiment.name(), cfg.seed, parameters),
        artifacts: Vec::new(),
    };
    let outcome = match cfg.experiment {
        Experiment::Spectrum => spectrum(&mut ctx),
        Experiment::Splitting => splitting(&mut ctx),
        Experiment::Dichotomy => dichotomy(&mut ctx),
        Experiment::Solve => solve(&mut ctx),
        Experiment::OracleCompare => oracle_compare(&mut ctx),
        Experiment::Mane => mane(&mut ctx),
        Experiment::Induce => induced(&mut ctx),
        Experiment::Witness => witness(&mut ctx),
        Experiment::Robustness => robustness(&mut ctx),
        Experiment::Report => birkhoff_report(&mut ctx),
    };
    match outcome {
        Ok(()) => {}
        Err(LabError::Config(m)) => return Err(LabError::Config(m)),
        Err(e) => ctx.summary.error = Some(format!("{}: {e}", e.name())),
    }
    Ok(RunOutput {
        summary: ctx.summary,
        artifacts: ctx.artifacts,
    })
}

/// Runs and writes artifacts, manifest and summary into `out`. Returns the
/// process exit status.
pub fn run(cfg: &RunConfig, out: &Path) -> i32 {
    let output = match run_experiment(cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = write_outputs(out, &output) {
        eprintln!("write error: {e}");
        return EXIT_NUMERICAL;
    }
    print!("{}", output.summary.to_text());
    if output.summary.error.is_some() {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    }
}

pub fn write_outputs(out: &Path, output: &RunOutput) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if !output.artifacts.is_empty() {
        written = emit_report(out, &output.summary.experiment, &output.artifacts)?;
    }
    write_summary(out, &output.summary)?;
    written.push(out.join("summary.json"));
    written.push(out.join("summary.txt"));
    Ok(written)
}

fn spectrum_artifacts(s: &LyapunovSpectrum) -> (Artifact, Artifact) {
    let mut table = Artifact::new("spectrum", &["exponent", "multiplicity", "stderr", "n"]);
    for i in 0..s.exponents.len() {
        table.push(vec![
            s.exponents[i].into(),
            s.multiplicities[i].into(),
            s.stderr[i].into(),
            s.steps.into(),
        ]);
    }
    let mut traj = Artifact::new("trajectory", &["n", "estimate"]);
    for &(n, v) in &s.trajectory {
        traj.push(vec![n.into(), v.into()]);
    }
    (table, traj)
}

fn spectrum(ctx: &mut Ctx) -> Result<()> {
    let s = ctx.spectrum()?;
    let (table, traj) = spectrum_artifacts(&s);
    ctx.artifacts.push(table);
    ctx.artifacts.push(traj);
    for (i, l) in s.exponents.iter().enumerate() {
        ctx.summary.metric(&format!("exponent_{i}"), *l);
    }
    ctx.summary.metric("min_abs_exponent", s.min_abs());
    let finite = s.exponents.iter().all(|l| l.is_finite());
    ctx.summary
        .assert("finite-exponents", finite, format!("{:?}", s.exponents));
    let flags = s.effectively_minus_infinity();
    if flags.iter().any(|&f| f) {
        ctx.summary
            .note("exponents below -20 are reported as effectively -infinity");
    }
    match classify(&s, ctx.cfg.numerics.zero_tol) {
        Ok(c) => ctx.summary.note(format!("classification: {c:?}")),
        Err(e) => ctx.summary.note(format!("classification: {}", e.name())),
    }
    Ok(())
}

fn splitting(ctx: &mut Ctx) -> Result<()> {
    let s = ctx.spectrum()?;
    let window = ctx
        .cfg
        .numerics
        .window
        .unwrap_or_else(|| s.default_window());
    let sp = oseledets_splitting(ctx.cocycle()?, &ctx.base, &ctx.start, window, &s)?;
    let mut a = Artifact::new(
        "splitting",
        &["block", "exponent", "multiplicity", "equivariance_defect"],
    );
    for i in 0..sp.exponents.len() {
        let defect = sp.equivariance_defect.get(i).copied().unwrap_or(f64::NAN);
        a.push(vec![
            i.into(),
            sp.exponents[i].into(),
            sp.multiplicities[i].into(),
            defect.into(),
        ]);
    }
    ctx.artifacts.push(a);
    let worst = sp
        .equivariance_defect
        .iter()
        .fold(0.0_f64, |m, &d| m.max(d));
    ctx.summary.metric("transversality", sp.transversality);
    ctx.summary.metric("max_equivariance_defect", worst);
    ctx.summary.metric("window", window as f64);
    if ctx.cocycle()?.is_invertible() {
        let tol = ctx.cfg.numerics.tol;
        ctx.summary.assert(
            "equivariance",
            worst <= tol,
            format!("max defect {worst:e} vs {tol:e}"),
        );
    } else {
        ctx.summary
            .note("non-invertible generators: only the slow filtration is reported");
    }
    Ok(())
}

fn dichotomy(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    let s = ctx.spectrum()?;
    let mut rng = ctx.cfg.stream("base");
    let samples = ctx.base.sample_points(&mut rng, n.samples);
    let cert = build_certificate(ctx.cocycle()?, &ctx.base, &s, &samples, &ctx.cert_options())?;
    let mut ks: Vec<f64> = cert.samples.iter().map(|c| c.k).collect();
    let mut table = Artifact::new("certificate", &["sample", "phase", "k"]);
    for (i, c) in cert.samples.iter().enumerate() {
        table.push(vec![i.into(), ctx.base.phase(&c.point).into(), c.k.into()]);
    }
    ctx.artifacts.push(table);
    ks.sort_by(f64::total_cmp);
    for (name, q) in [
        ("k_min", 0.0),
        ("k_median", 0.5),
        ("k_q90", 0.9),
        ("k_max", 1.0),
    ] {
        let i = ((ks.len() - 1) as f64 * q).round() as usize;
        ctx.summary.metric(name, ks[i]);
    }
    ctx.summary.metric("lambda", cert.lambda);
    ctx.summary.metric("stable_dim", cert.stable_dim as f64);

    let fresh = ctx.base.sample_points(&mut rng, n.samples);
    match verify_certificate(&cert, &fresh, n.n_max, 1.0 + n.tol) {
        Ok(r) => ctx.summary.assert(
            "dichotomy-inequalities",
            true,
            format!(
                "worst ratio {} at n = {} over {} fresh points",
                r.worst_ratio, r.worst_n, r.checked
            ),
        ),
        Err(LabError::Violation { sample, n, ratio }) => ctx.summary.assert(
            "dichotomy-inequalities",
            false,
            format!("violation at fresh point {sample}, n = {n}, ratio {ratio}"),
        ),
        Err(e) => return Err(e),
    }

    // K and its tempered envelope along the orbit of the start point.
    let r = n.radius.max(4) as i64;
    let w = (r / 2) as usize;
    let along = cert.k_along(&ctx.start, -r, r)?;
    let eps = cert.lambda / 3.0;
    let env = tempered_envelope(&along, eps, w)?;
    let mut prof = Artifact::new("k_envelope", &["k", "K", "K_eps"]);
    for (j, kk) in (-(w as i64)..=w as i64).enumerate() {
        prof.push(vec![kk.into(), env.k[j].into(), env.values[j].into()]);
    }
    ctx.artifacts.push(prof);
    ctx.summary.assert(
        "envelope-laws",
        env.satisfies_laws(),
        format!(
            "domination defect {:e}, growth defect {:e}",
            env.domination_defect(),
            env.growth_defect()
        ),
    );
    let horizons: Vec<usize> = [r / 8, r / 4, r / 2, r]
        .iter()
        .map(|&h| h.max(1) as usize)
        .collect();
    let t = temperedness_diagnostic(&along, &horizons, eps)?;
    let mut slopes = Artifact::new("temperedness", &["horizon", "slope"]);
    for &(h, v) in &t.slopes {
        slopes.push(vec![h.into(), v.into()]);
    }
    ctx.artifacts.push(slopes);
    ctx.summary.metric("max_horizon_slope", t.max_horizon_slope);
    ctx.summary.assert(
        "temperedness",
        t.passed,
        format!(
            "max slope {} at horizon {r} vs ε = {eps}",
            t.max_horizon_slope
        ),
    );
    ctx.summary
        .note("measurability of Π^s is not asserted; the certificate holds on sampled points");
    Ok(())
}

fn random_g(
    rng: &mut ChaCha8Rng,
    base: &BaseSystem,
    anchor: BasePoint,
    lo: i64,
    hi: i64,
    d: usize,
) -> OrbitFunction {
    OrbitFunction::from_fn(base, anchor, lo, hi, |_, _| {
        DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
    })
}

fn solve(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    let s = ctx.spectrum()?;
    let cert = ctx.certificate(&s)?;
    let c = ctx.cocycle()?.clone();
    let mut rng = ctx.cfg.stream("g-trials");
    let r = n.radius as i64;
    let nt = n.n_tail as i64;
    let g = random_g(&mut rng, &ctx.base, ctx.start, -r - nt, r + nt, c.dim());
    let sol = green_solve(&cert, &g, n.n_tail, None)?;
    let mut a = Artifact::new("solve", &["index", "f_norm", "residual", "tail_bound"]);
    let mut worst = 0.0_f64;
    for (i, k) in (-r..=r).enumerate() {
        let res = if k > -r {
            let f = sol.f.restrict(k - 1, k);
            residual(&c, &ctx.base, &f, &g)
        } else {
            f64::NAN
        };
        if res.is_finite() {
            worst = worst.max(res);
        }
        a.push(vec![
            k.into(),
            sol.f.value_at(k).unwrap().norm().into(),
            res.into(),
            sol.tail_bounds[i].into(),
        ]);
    }
    ctx.artifacts.push(a);
    ctx.summary.metric("max_residual", worst);
    ctx.summary.metric("max_tail_bound", sol.max_tail_bound);
    ctx.summary.assert(
        "residual",
        worst <= n.tol,
        format!("max residual {worst:e} vs {:e}", n.tol),
    );
    let probe = bound_probe(
        &cert,
        &ctx.start,
        n.orientation,
        n.trials,
        n.radius,
        n.n_tail,
        &mut rng,
    )?;
    ctx.summary.metric("bound_empirical", probe.empirical);
    ctx.summary.metric("bound_analytic", probe.analytic);
    ctx.summary.assert(
        "operator-bound",
        probe.empirical <= probe.analytic * (1.0 + n.tol),
        format!(
            "{:?}: empirical {} vs {}",
            probe.orientation, probe.empirical, probe.analytic
        ),
    );
    match uniqueness_probe(&cert, &ctx.start, n.radius, n.tol) {
        Ok(u) => ctx.summary.assert(
            "uniqueness-probe",
            true,
            format!(
                "homogeneous decay to {:e} / {:e}",
                u.final_stable, u.final_unstable
            ),
        ),
        Err(LabError::NoDecay {
            residual,
            direction,
        }) => ctx.summary.assert(
            "uniqueness-probe",
            false,
            format!("no decay along column {direction}: {residual:e}"),
        ),
        Err(e) => return Err(e),
    }
    ctx.summary
        .note("uniqueness is probed on a finite window, not proved");
    Ok(())
}

fn oracle_compare(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    let mut rng = ctx.cfg.stream("base");
    let seeds: Vec<u64> = (0..n.trials).map(|_| rng.random()).collect();
    let g_seed: u64 = ctx.cfg.stream("g-trials").random();
    let opts = ctx.cert_options();
    let rows: Result<Vec<(usize, usize, f64, f64)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let inst =
                random_periodic_instance(&mut r, n.max_period, n.max_dim, ORACLE_MIN_EXPONENT)?;
            let mut gr =
                ChaCha8Rng::seed_from_u64(g_seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let dev =
                compare_with_oracle(&inst, &mut gr, n.n_tail, n.steps.clamp(100, 4000), &opts)?;
            let p = match inst.base {
                BaseSystem::Periodic { period, .. } => period,
                _ => 0,
            };
            let min_abs = inst
                .floquet
                .iter()
                .fold(f64::INFINITY, |m, l| m.min(l.abs()));
            Ok((p, inst.cocycle.dim(), min_abs, dev))
        })
        .collect();
    let rows = rows?;
    let mut a = Artifact::new(
        "oracle_compare",
        &[
            "instance",
            "period",
            "dim",
            "min_abs_floquet",
            "max_deviation",
        ],
    );
    let mut worst = 0.0_f64;
    for (i, (p, d, m, dev)) in rows.iter().enumerate() {
        worst = worst.max(*dev);
        a.push(vec![
            i.into(),
            (*p).into(),
            (*d).into(),
            (*m).into(),
            (*dev).into(),
        ]);
    }
    ctx.artifacts.push(a);
    ctx.summary.metric("max_deviation", worst);
    ctx.summary.assert(
        "oracle-agreement",
        worst <= n.tol,
        format!(
            "max deviation {worst:e} over {} instances vs {:e}",
            rows.len(),
            n.tol
        ),
    );
    ctx.summary
        .note("periodic bases are used only as exact linear-algebra oracles");
    Ok(())
}

fn mane(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    let c = ctx.cocycle()?.clone();
    let s = ctx.spectrum()?;
    if classify(&s, n.zero_tol)? == Classification::Hyperbolic {
        return Err(LabError::NotDegenerate);
    }
    let e0 = zero_block_basis(&c, &ctx.base, &ctx.start, &s)?;
    let mut rng = ctx.cfg.stream("base");
    let search_h = n.horizon.min(1000);
    let rv = recurrent_vector_search(
        &c,
        &ctx.base,
        &ctx.start,
        &e0,
        search_h,
        default_grid(e0.ncols()),
        &mut rng,
    )?;
    ctx.summary.metric("recurrence_defect", rv.defect);
    let pair = mane_sequences(&c, &ctx.base, &ctx.start, &rv.v, n.target, n.horizon)?;
    let mut a = Artifact::new(
        "mane",
        &["n", "alpha", "beta", "x_norm", "y_norm", "w_norm"],
    );
    for i in 0..=pair.n_cut {
        a.push(vec![
            i.into(),
            pair.alpha[i].into(),
            pair.beta[i].into(),
            pair.x[i].norm().into(),
            pair.y[i].norm().into(),
            pair.w_norms[i].into(),
        ]);
    }
    ctx.artifacts.push(a);
    let chk = pair.check();
    ctx.summary.metric("n_star", pair.n_star as f64);
    ctx.summary.metric("n_cut", pair.n_cut as f64);
    let tol = n.tol;
    ctx.summary.assert(
        "initial-condition",
        chk.initial <= tol,
        format!("‖x(0) − y(0)‖ = {:e}", chk.initial),
    );
    ctx.summary.assert(
        "recurrence",
        chk.recurrence <= tol,
        format!("max residual {:e}", chk.recurrence),
    );
    ctx.summary.assert(
        "bounded-input",
        chk.max_y <= 1.0 + tol && chk.beta_max <= 1.0 + tol,
        format!("sup ‖y‖ = {}, sup |β| = {}", chk.max_y, chk.beta_max),
    );
    ctx.summary.assert(
        "large-output",
        chk.max_x >= n.target,
        format!("sup ‖x‖ = {} vs target {}", chk.max_x, n.target),
    );
    ctx.summary.assert(
        "alpha-vanishes",
        chk.alpha_final.abs() <= tol,
        format!("α(N) = {:e}", chk.alpha_final),
    );
    Ok(())
}

fn default_region(base: &BaseSystem) -> Region {
    match base {
        BaseSystem::Rotation { .. } => Region::arc(0.0, 0.5),
        BaseSystem::Bernoulli { .. } => Region::cylinder(vec![(0, 0)]),
        BaseSystem::Periodic { .. } => Region::states(vec![0]),
    }
}

fn induced(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    let c = ctx.cocycle()?.clone();
    let set = match &ctx.cfg.region {
        Some(r) => r.build(),
        None => default_region(&ctx.base),
    };
    let mut rng = ctx.cfg.stream("base");
    let samples = ctx.base.sample_points(&mut rng, n.samples.max(1000));
    let ind = induce(&c, &ctx.base, &set, &samples, n.horizon)?;
    let start = *samples
        .iter()
        .find(|p| set.contains(&ctx.base, p))
        .expect("induce checked the set is hit");
    let parent = lyapunov_exponents(&c, &ctx.base, &start, n.steps, n.reorth, n.gap_tol)?;
    let steps = ((n.steps as f64) * ind.measure).ceil().max(100.0) as usize;
    let s = ind.spectrum(&start, steps, n.reorth, n.gap_tol)?;
    let mut a = Artifact::new(
        "induce",
        &[
            "index",
            "induced_exponent",
            "parent_exponent",
            "predicted",
            "relative_error",
        ],
    );
    let mut worst = 0.0_f64;
    for i in 0..s.exponents.len().min(parent.exponents.len()) {
        let predicted = parent.exponents[i] * ind.mean_return;
        let rel = if predicted.abs() > 0.0 {
            (s.exponents[i] - predicted).abs() / predicted.abs()
        } else {
            (s.exponents[i] - predicted).abs()
        };
        worst = worst.max(rel);
        a.push(vec![
            i.into(),
            s.exponents[i].into(),
            parent.exponents[i].into(),
            predicted.into(),
            rel.into(),
        ]);
    }
    ctx.artifacts.push(a);
    ctx.summary.metric("measure", ind.measure);
    ctx.summary.metric("mean_return_time", ind.mean_return);
    ctx.summary.metric("log_plus_mean", ind.log_plus_mean);
    ctx.summary.assert(
        "exponent-scaling",
        worst <= n.rel_tol,
        format!("worst relative error {worst} vs {}", n.rel_tol),
    );
    Ok(())
}

fn witness(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    let c = ctx.cocycle()?.clone();
    let budgets = ctx.cfg.witness.clone().unwrap_or_else(|| WitnessBudgets {
        spectrum_steps: n.steps,
        zero_tol: n.zero_tol,
        gap_tol: n.gap_tol,
        ..WitnessBudgets::default()
    });
    let weight = ctx.cfg.weight()?;
    let mut rng = ctx.cfg.stream("base");
    let w = violation_witness(
        &c,
        &ctx.base,
        &weight,
        n.target,
        n.orientation,
        &budgets,
        &mut rng,
    )?;
    let mut a = Artifact::new(
        "witness",
        &["tower", "offset", "f_norm", "g_norm_weighted", "residual"],
    );
    for (t, tower) in w.towers.iter().enumerate() {
        for row in &tower.rows {
            a.push(vec![
                t.into(),
                row.offset.into(),
                row.f_norm.into(),
                (row.g_norm * row.weight).into(),
                row.residual.into(),
            ]);
        }
    }
    ctx.artifacts.push(a);
    ctx.summary.metric("ratio", w.ratio);
    ctx.summary.metric("height", w.height as f64);
    ctx.summary.metric("tower_measure", w.tower_measure);
    ctx.summary.metric("max_residual", w.max_residual);
    ctx.summary.assert(
        "admissibility-residual",
        w.max_residual <= n.tol,
        format!(
            "max residual {:e} on {} towers",
            w.max_residual,
            w.towers.len()
        ),
    );
    ctx.summary.assert(
        "ratio",
        w.ratio > n.target,
        format!("‖f‖/‖g‖ = {} vs L = {}", w.ratio, n.target),
    );
    ctx.summary
        .assert("g-supported-in-F", w.g_supported_in_f, w.base_set.clone());
    ctx.summary.details = Some(serde_json::to_value(&w).map_err(|e| LabError::Io(e.to_string()))?);
    ctx.summary
        .note("full witness in summary.json under \"details\"");
    Ok(())
}

fn robustness(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    let s = ctx.spectrum()?;
    let cert = ctx.certificate(&s)?;
    let b = budget(&cert, n.perturbation_safety)?;
    let seed: u64 = ctx.cfg.stream("perturbations").random();
    let opts = RobustnessOptions {
        trials: n.trials,
        radius: n.radius,
        n_tail: n.n_tail,
        margin: n.margin,
        tol: n.tol * 1e-3,
        max_iters: n.max_iters,
        spectrum_steps: n.steps,
        zero_tol: n.zero_tol,
    };
    let trials = robustness_trials(&cert, &b, &ctx.start, seed, &opts)?;
    let mut a = Artifact::new(
        "robustness",
        &[
            "trial",
            "perturbation_norm",
            "iterations",
            "ratio",
            "residual",
            "margin",
        ],
    );
    let mut it = Artifact::new("contraction", &["trial", "iteration", "step"]);
    let (mut ratio, mut res, mut margin) = (0.0_f64, 0.0_f64, f64::INFINITY);
    let mut hyperbolic = true;
    for t in &trials {
        a.push(vec![
            t.trial.into(),
            t.perturbation_norm.into(),
            t.iterations.into(),
            t.contraction_ratio.into(),
            t.fixed_point_residual.into(),
            t.spectrum.margin.into(),
        ]);
        for (j, st) in t.steps.iter().enumerate() {
            it.push(vec![t.trial.into(), j.into(), (*st).into()]);
        }
        ratio = ratio.max(t.contraction_ratio);
        res = res.max(t.fixed_point_residual);
        margin = margin.min(t.spectrum.margin);
        hyperbolic &= t.spectrum.classification == Some(Classification::Hyperbolic);
    }
    ctx.artifacts.push(a);
    ctx.artifacts.push(it);
    ctx.summary.metric("d", b.d);
    ctx.summary.metric("q", b.q);
    ctx.summary.metric("max_contraction_ratio", ratio);
    ctx.summary.metric("max_fixed_point_residual", res);
    ctx.summary.metric("min_margin", margin);
    ctx.summary.assert(
        "contraction",
        ratio <= b.q + 0.05,
        format!("max ratio {ratio} vs q + 0.05 = {}", b.q + 0.05),
    );
    ctx.summary.assert(
        "fixed-point-residual",
        res <= n.tol,
        format!("{res:e} vs {:e}", n.tol),
    );
    ctx.summary.assert(
        "perturbed-hyperbolic",
        hyperbolic && margin >= n.min_margin,
        format!("min margin {margin} vs {}", n.min_margin),
    );
    ctx.summary.note(format!(
        "{} sampled perturbations; coverage of the budget ball is statistical",
        trials.len()
    ));
    Ok(())
}

fn observable_for(base: &BaseSystem) -> Observable {
    match base {
        BaseSystem::Bernoulli { probabilities, .. } => {
            Observable::centered_symbol(0, probabilities[0])
        }
        _ => Observable::cosine(),
    }
}

fn birkhoff_report(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.numerics.clone();
    if !ctx.base.is_aperiodic() {
        return Err(LabError::NonAperiodicBase(ctx.base.descriptor()));
    }
    let phi = observable_for(&ctx.base);
    let mut rng = ctx.cfg.stream("base");
    let starts = ctx.base.sample_points(&mut rng, n.samples);
    let base = &ctx.base;
    let extrema: Result<Vec<_>> = starts
        .par_iter()
        .map(|p| birkhoff_extrema(base, &phi, p, n.horizon))
        .collect();
    let extrema = extrema?;
    let mut a = Artifact::new(
        "birkhoff_extrema",
        &["start", "phase", "min", "max", "straddles"],
    );
    let mut hits = 0;
    for (i, (p, e)) in starts.iter().zip(&extrema).enumerate() {
        hits += e.straddles_zero() as usize;
        a.push(vec![
            i.into(),
            base.phase(p).into(),
            e.min.into(),
            e.max.into(),
            e.straddles_zero().into(),
        ]);
    }
    ctx.artifacts.push(a);
    let mut t = Artifact::new("birkhoff_trajectory", &["start", "n", "sum"]);
    for (i, p) in starts.iter().take(5).enumerate() {
        for (k, v) in birkhoff_trajectory(base, &phi, p, n.horizon, n.stride) {
            t.push(vec![i.into(), k.into(), v.into()]);
        }
    }
    ctx.artifacts.push(t);
    let frac = hits as f64 / starts.len() as f64;
    ctx.summary.metric("straddle_fraction", frac);
    ctx.summary.assert(
        "recurrence",
        frac >= n.fraction,
        format!(
            "{hits}/{} starts with min ≤ 0 ≤ max over n ≤ {}",
            starts.len(),
            n.horizon
        ),
    );
    ctx.summary.note(format!(
        "liminf/limsup are approximated by min/max over n ≤ {}",
        n.horizon
    ));
    Ok(())
}
