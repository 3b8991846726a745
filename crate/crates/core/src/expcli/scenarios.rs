//! The five experiments. Each `run_*` writes its files into the output
//! directory and returns the typed outcome that also goes into
//! `summary.json`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, Scenario};
use super::report::{linear_fit, loglog_slope, write_json, Cell, OutputDir, Stopwatch, Table, Timings};
use crate::biotsavart::curl_roundtrip;
use crate::error::Result;
use crate::fields::{DimensionContext, GriddedField, HalfPlanePoint, ParticleSystem};
use crate::initdata::{initial_vorticity, sample_grid, seed_particles, BubbleGeometry, BubbleParams};
use crate::keylemma::{origin_limit_identities, verify_key_lemma, KeyLemmaSummary, OriginLimits, RemainderNorms};
use crate::norms::{
    bubble_lorentz_power, gn_check, gn_check_bubbles, grad_ld_norm, hardy_check, lower_bound_functional,
    particle_lorentz, vertical_sobolev_squared, vertical_sobolev_squared_bubbles, NormReport,
};
use crate::special::hurwitz_zeta;
use crate::transport::{
    bubble_timescales, default_dt, evolve, stability_check, step_rk4, DiagnosticsFrame, EvolveConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Contents of `summary.json`.
#[derive(Debug, Serialize)]
pub struct Summary<'a, R> {
    pub scenario: Scenario,
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub timings: Timings,
    pub checks: &'a BTreeMap<String, bool>,
    pub results: &'a R,
}

fn write_summary<R: Serialize>(
    out: &OutputDir,
    scenario: Scenario,
    cfg: &ExperimentConfig,
    watch: Stopwatch,
    checks: &BTreeMap<String, bool>,
    results: &R,
) -> Result<()> {
    let summary = Summary { scenario, version: VERSION, config: cfg, timings: watch.finish(), checks, results };
    write_json(&out.path("summary.json"), &summary)
}

fn seeded(cfg: &ExperimentConfig, params: &BubbleParams<f64>, resolution: usize) -> Result<ParticleSystem<f64>> {
    let sys = seed_particles(params, resolution, DimensionContext::three())?;
    Ok(if cfg.negate { sys.negated() } else { sys })
}

fn frame_headers(bubbles: &[u32]) -> Vec<String> {
    let mut h = vec!["time".to_owned(), "step".to_owned()];
    for n in bubbles {
        for col in ["I", "r_inf", "r_sup", "z_inf"] {
            h.push(format!("{col}_{n}"));
        }
    }
    h.extend(["linf_omega", "lorentz_31", "weighted_l2", "ordering_ok", "region_ok"].map(String::from));
    h
}

fn frame_row(f: &DiagnosticsFrame<f64>) -> Vec<Cell> {
    let mut row = vec![Cell::Num(f.time), Cell::from(f.step)];
    for b in &f.bubbles {
        row.extend([b.i_n, b.r_ratio_inf, b.r_ratio_sup, b.z_ratio_inf].map(Cell::Num));
    }
    row.extend([
        Cell::Num(f.linf_omega),
        Cell::Num(f.lorentz_31),
        Cell::Num(f.weighted_l2.unwrap_or(f64::NAN)),
        Cell::Bool(f.ordering_ok),
        Cell::Bool(f.region_ok),
    ]);
    row
}

/// Bookkeeping shared by both evolution scenarios.
#[derive(Clone, Debug, Serialize)]
pub struct EvolutionStats {
    pub dt: f64,
    pub t_end: f64,
    pub frames: usize,
    pub aborted: Option<String>,
    /// Largest bubble index, i.e. the bubble closest to the origin.
    pub innermost: u32,
    pub innermost_r_sup_final: f64,
    pub innermost_r_sup_max: f64,
    /// Least-squares slope of `ln sqrt(r_inf r_sup)` of the innermost bubble
    /// against time.
    pub innermost_r_trend: f64,
    pub linf_initial: f64,
    pub linf_final: f64,
    /// Frames whose `‖ω‖_∞` is not larger than on the previous frame.
    pub linf_non_increases: usize,
    pub linf_max_relative_drift: f64,
    pub lorentz_relative_drift: f64,
    pub xi_max_drift: f64,
    pub ordering_all_frames: bool,
    pub region_all_frames: bool,
    pub weighted_initial: f64,
    pub weighted_final: f64,
}

fn evolution_stats(
    frames: &[DiagnosticsFrame<f64>],
    start: &ParticleSystem<f64>,
    end: &ParticleSystem<f64>,
    dt: f64,
    t_end: f64,
    aborted: Option<String>,
) -> EvolutionStats {
    let first = &frames[0];
    let last = frames.last().unwrap_or(first);
    let innermost = first.bubbles.iter().map(|b| b.n).max().unwrap_or(0);
    let inner = |f: &DiagnosticsFrame<f64>| *f.bubbles.iter().find(|b| b.n == innermost).expect("bubble present");
    let times: Vec<f64> = frames.iter().map(|f| f.time).collect();
    let trend: Vec<f64> = frames
        .iter()
        .map(|f| {
            let b = inner(f);
            0.5 * (b.r_ratio_inf * b.r_ratio_sup).ln()
        })
        .collect();
    let linf0 = first.linf_omega;
    let xi_max_drift = start
        .particles
        .iter()
        .zip(&end.particles)
        .map(|(a, b)| (a.xi - b.xi).abs())
        .fold(0.0, f64::max);
    EvolutionStats {
        dt,
        t_end,
        frames: frames.len(),
        aborted,
        innermost,
        innermost_r_sup_final: inner(last).r_ratio_sup,
        innermost_r_sup_max: frames.iter().map(|f| inner(f).r_ratio_sup).fold(0.0, f64::max),
        innermost_r_trend: linear_fit(&times, &trend).map_or(0.0, |(s, _)| s),
        linf_initial: linf0,
        linf_final: last.linf_omega,
        linf_non_increases: frames.windows(2).filter(|w| !(w[1].linf_omega > w[0].linf_omega)).count(),
        linf_max_relative_drift: frames.iter().map(|f| (f.linf_omega / linf0 - 1.0).abs()).fold(0.0, f64::max),
        lorentz_relative_drift: frames
            .iter()
            .map(|f| (f.lorentz_31 / first.lorentz_31 - 1.0).abs())
            .fold(0.0, f64::max),
        xi_max_drift,
        ordering_all_frames: frames.iter().all(|f| f.ordering_ok),
        region_all_frames: frames.iter().all(|f| f.region_ok),
        weighted_initial: first.weighted_l2.unwrap_or(f64::NAN),
        weighted_final: last.weighted_l2.unwrap_or(f64::NAN),
    }
}

fn invariant_checks(stats: &EvolutionStats) -> BTreeMap<String, bool> {
    BTreeMap::from([
        ("xi_conserved".to_owned(), stats.xi_max_drift == 0.0),
        ("lorentz_drift_below_1pct".to_owned(), stats.lorentz_relative_drift <= 0.01),
        ("region_invariant".to_owned(), stats.region_all_frames),
        ("ordering_invariant".to_owned(), stats.ordering_all_frames),
        ("completed".to_owned(), stats.aborted.is_none()),
    ])
}

fn time_step(cfg: &ExperimentConfig, sys: &ParticleSystem<f64>) -> Result<f64> {
    match cfg.dt {
        Some(dt) => Ok(dt),
        None => default_dt(sys, &cfg.kernel()),
    }
}

/// Innermost-bubble stretching at the end of a run with `m` bubbles.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub m: u32,
    pub t_end: f64,
    pub stretching: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LinfOutcome {
    pub stats: EvolutionStats,
    /// `(n, stable)`: whether `Φ` stayed within a factor 2 of the identity on
    /// bubble `n` up to `T_n`; only with `c1`.
    pub stability: Vec<(u32, bool)>,
    pub sweep: Vec<SweepPoint>,
    /// Slope of `ln(stretching)` against `ln m` over the sweep.
    pub growth_exponent: Option<f64>,
    #[serde(skip)]
    pub frames: Vec<DiagnosticsFrame<f64>>,
}

pub fn run_linf_inflation(cfg: &ExperimentConfig, out: &OutputDir) -> Result<LinfOutcome> {
    cfg.validate_for(Scenario::LinfInflation)?;
    let mut watch = Stopwatch::start();
    let params = cfg.params()?;
    let sys = seeded(cfg, &params, cfg.resolution)?;
    let dt = time_step(cfg, &sys)?;
    let t_end = cfg.horizon()?;
    let ecfg = EvolveConfig { dt, t_end, cadence: cfg.cadence, kernel: cfg.kernel() };
    let ns: Vec<u32> = params.indices().collect();
    let mut table = Table::new(frame_headers(&ns));
    let run = evolve(&sys, &ecfg, |f, _| table.push(frame_row(f)))?;
    watch.lap("evolve");
    table.write_csv(&out.path("frames.csv"))?;
    let snapshots = vec![NormReport::from_particles(&sys, &cfg.q_list)?, NormReport::from_particles(&run.system, &cfg.q_list)?];
    write_json(&out.path("norms.json"), &snapshots)?;

    let stats = evolution_stats(&run.frames, &sys, &run.system, dt, t_end, run.aborted.clone());
    let stability = match cfg.c1 {
        Some(c1) => stability_check(&run.frames, &bubble_timescales(&params, t_end, c1), 2.0),
        None => Vec::new(),
    };
    let mut sweep = vec![SweepPoint { m: cfg.m, t_end, stretching: stats.innermost_r_sup_final }];
    for &m in cfg.m_sweep.iter().filter(|&&m| m != cfg.m) {
        let sub = ExperimentConfig { m, ..cfg.clone() };
        let p = sub.params()?;
        let s = seeded(&sub, &p, sub.resolution)?;
        let horizon = sub.horizon()?;
        let e = EvolveConfig { dt: time_step(&sub, &s)?, t_end: horizon, cadence: usize::MAX, kernel: sub.kernel() };
        let r = evolve(&s, &e, |_, _| Ok(()))?;
        let last = r.frames.last().expect("final frame");
        let b = last.bubbles.iter().find(|b| b.n == m).expect("innermost bubble");
        sweep.push(SweepPoint { m, t_end: horizon, stretching: b.r_ratio_sup });
    }
    sweep.sort_by_key(|p| p.m);
    let ms: Vec<f64> = sweep.iter().map(|p| p.m as f64).collect();
    let st: Vec<f64> = sweep.iter().map(|p| p.stretching).collect();
    let growth_exponent = if sweep.len() >= 2 { loglog_slope(&ms, &st) } else { None };
    watch.lap("sweep");

    let mut checks = invariant_checks(&stats);
    checks.insert("innermost_stretching_reaches_1.2".into(), stats.innermost_r_sup_final >= 1.2);
    checks.insert("linf_strictly_increasing".into(), stats.linf_non_increases == 0);
    let outcome = LinfOutcome { stats, stability, sweep, growth_exponent, frames: run.frames };
    write_summary(out, Scenario::LinfInflation, cfg, watch, &checks, &outcome)?;
    Ok(outcome)
}

#[derive(Clone, Debug, Serialize)]
pub struct SobolevOutcome {
    pub stats: EvolutionStats,
    pub functional_initial: f64,
    pub functional_final: f64,
    /// `Σ n^{-2α}` over the seeded bubbles.
    pub functional_expected_initial: f64,
    pub lambda_d_sq_initial: f64,
    pub lambda_d_sq_final: f64,
    /// Frame pairs where the functional and `‖Λ_d^{3/2} ω‖²` move the same way.
    pub co_movement_fraction: f64,
    pub functional_lambda_correlation: f64,
    /// Per frame pair and bubble: whether a functional summand that grew did
    /// so with `inf Φʳ/r` or `inf x_d/Φᵈ` growing.
    pub summand_coupling_ok: bool,
    #[serde(skip)]
    pub frames: Vec<DiagnosticsFrame<f64>>,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    }
}

pub fn run_sobolev_inflation(cfg: &ExperimentConfig, out: &OutputDir) -> Result<SobolevOutcome> {
    cfg.validate_for(Scenario::SobolevInflation)?;
    let mut watch = Stopwatch::start();
    let params = cfg.params()?;
    let sys = seeded(cfg, &params, cfg.resolution)?;
    let dt = time_step(cfg, &sys)?;
    let t_end = cfg.horizon()?;
    let ecfg = EvolveConfig { dt, t_end, cadence: cfg.cadence, kernel: cfg.kernel() };
    let ns: Vec<u32> = params.indices().collect();
    let mut headers = frame_headers(&ns);
    headers.extend(["functional".to_owned(), "lambda_d_sq".to_owned()]);
    for n in &ns {
        headers.push(format!("log_zd_{n}"));
        headers.push(format!("drive_{n}"));
    }
    let mut table = Table::new(headers);
    let ball = sys.ctx.ball_volume;
    let nz = 8 * cfg.grid_nr;
    // running ∫ I_k dt per bubble, trapezoid over frame times
    let mut integrals = vec![0.0; ns.len()];
    let mut previous: Option<(f64, Vec<f64>)> = None;
    let mut functional = Vec::new();
    let mut lambda = Vec::new();
    let run = evolve(&sys, &ecfg, |f, state| {
        let i_now: Vec<f64> = f.bubbles.iter().map(|b| b.i_n).collect();
        if let Some((t_prev, i_prev)) = &previous {
            for (acc, (a, b)) in integrals.iter_mut().zip(i_prev.iter().zip(&i_now)) {
                *acc += 0.5 * (f.time - t_prev) * (a + b);
            }
        }
        previous = Some((f.time, i_now));
        let fun = lower_bound_functional(f, &params, 3);
        let lam: f64 = vertical_sobolev_squared_bubbles(state, cfg.grid_nr, nz)?.iter().map(|(_, v)| v).sum();
        functional.push(fun);
        lambda.push(lam);
        let mut row = frame_row(f);
        row.extend([Cell::Num(fun), Cell::Num(lam)]);
        for (k, b) in f.bubbles.iter().enumerate() {
            let outer: f64 = integrals[..k].iter().sum();
            row.push(Cell::Num(-b.z_ratio_inf.ln()));
            row.push(Cell::Num(-outer / ball));
        }
        table.push(row)
    })?;
    watch.lap("evolve");
    table.write_csv(&out.path("frames.csv"))?;
    let snapshots = vec![
        NormReport::from_particles(&sys, &cfg.q_list)?,
        NormReport::from_particles(&run.system, &cfg.q_list)?,
    ];
    let snapshots: Vec<_> = snapshots
        .into_iter()
        .zip([lambda[0], *lambda.last().expect("frames")])
        .map(|(mut r, l)| {
            r.sobolev_dir_d = Some(l.sqrt());
            r
        })
        .collect();
    write_json(&out.path("norms.json"), &snapshots)?;

    let stats = evolution_stats(&run.frames, &sys, &run.system, dt, t_end, run.aborted.clone());
    let pairs = functional.len().saturating_sub(1).max(1);
    let same = functional
        .windows(2)
        .zip(lambda.windows(2))
        .filter(|(f, l)| (f[1] - f[0]).signum() == (l[1] - l[0]).signum())
        .count();
    let summand_coupling_ok = run.frames.windows(2).all(|w| {
        w[0].bubbles.iter().zip(&w[1].bubbles).all(|(a, b)| {
            let term = |x: &crate::transport::BubbleDiagnostics<f64>| x.r_ratio_inf.powi(2) * x.z_ratio_inf.powi(3);
            !(term(b) > term(a)) || b.r_ratio_inf > a.r_ratio_inf || b.z_ratio_inf > a.z_ratio_inf
        })
    });
    let expected: f64 = ns.iter().map(|&n| params.amplitude(n).powi(2)).sum();
    let outcome = SobolevOutcome {
        functional_initial: functional[0],
        functional_final: *functional.last().expect("frames"),
        functional_expected_initial: expected,
        lambda_d_sq_initial: lambda[0],
        lambda_d_sq_final: *lambda.last().expect("frames"),
        co_movement_fraction: same as f64 / pairs as f64,
        functional_lambda_correlation: pearson(&functional, &lambda),
        summand_coupling_ok,
        stats,
        frames: run.frames,
    };
    let mut checks = invariant_checks(&outcome.stats);
    checks.insert("functional_grows".into(), outcome.functional_final > outcome.functional_initial);
    checks.insert("weighted_norm_grows".into(), outcome.stats.weighted_final > outcome.stats.weighted_initial);
    checks.insert("summand_coupling".into(), summand_coupling_ok);
    write_summary(out, Scenario::SobolevInflation, cfg, watch, &checks, &outcome)?;
    Ok(outcome)
}

/// Wedge targets `r ≥ x_d > 0` with `r` and `x_d/r` log-uniform, kept at
/// least 1.5 support radii away from every bubble disk.
pub fn sample_wedge_targets(params: &BubbleParams<f64>, count: usize, seed: u64) -> Vec<HalfPlanePoint<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_lo = 8f64.powi(-(params.m as i32)) * 0.5;
    let r_hi = 8f64.powi(1 - params.n0 as i32) * 1.5;
    let geos: Vec<_> = params.indices().map(|n| BubbleGeometry::of(params, n)).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = (r_lo.ln() + rng.gen::<f64>() * (r_hi / r_lo).ln()).exp();
        let z = r * (0.01f64.ln() * rng.gen::<f64>()).exp();
        let clear = geos.iter().all(|g| {
            (r - g.r_center).hypot(z - g.z_center) > 1.5 * g.support_radius
        });
        if clear {
            out.push(HalfPlanePoint::new(r, z));
        }
    }
    out
}

/// `‖∇ω₀‖_{L³}` from continuum samples, bubble by bubble (the supports are
/// disjoint, so the cubes add).
pub fn initial_grad_l3(params: &BubbleParams<f64>, samples: usize) -> Result<f64> {
    let ctx = DimensionContext::three();
    let mut total = 0.0;
    for n in params.indices() {
        let single = BubbleParams { n0: n, m: n, ..*params };
        let spec = BubbleGeometry::of(params, n).upper_grid(samples, samples, 0.25)?;
        let field = sample_grid(&single, spec)?;
        // the lower disk is the mirror image
        total += 2.0 * grad_ld_norm(&field, &ctx).powi(3);
    }
    Ok(total.cbrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyLemmaLevel {
    pub resolution: usize,
    pub time: f64,
    pub max_ratio_r: f64,
    pub max_ratio_d: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyLemmaOutcome {
    pub levels: Vec<KeyLemmaLevel>,
    /// `max ratio(2R)/max ratio(R) - 1` for the two columns.
    pub ratio_change_r: f64,
    pub ratio_change_d: f64,
    pub origin: OriginLimits<f64>,
    pub origin_step: f64,
    pub radial_identity: f64,
    pub axial_identity: f64,
    pub derivative_ratio: f64,
    pub linf: f64,
    pub grad_l3: f64,
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        b / a - 1.0
    }
}

pub fn run_key_lemma(cfg: &ExperimentConfig, out: &OutputDir) -> Result<KeyLemmaOutcome> {
    cfg.validate_for(Scenario::KeyLemma)?;
    let mut watch = Stopwatch::start();
    let params = cfg.params()?;
    let kernel = cfg.kernel();
    let targets = sample_wedge_targets(&params, cfg.targets, cfg.seed);
    let linf = params.amplitude(params.n0);
    let grad_l3 = initial_grad_l3(&params, cfg.grad_grid)?;
    let norms = RemainderNorms { grad_ld: Some(grad_l3), linf };
    watch.lap("norms");

    let mut table = Table::new([
        "resolution", "time", "r", "z", "main_term", "ur_over_r", "ud_over_xd", "b1", "b2", "ratio_r", "ratio_d",
    ]);
    let mut push = |res: usize, s: &KeyLemmaSummary<f64>, time: f64| -> Result<KeyLemmaLevel> {
        for k in &s.reports {
            table.push(vec![
                res.into(),
                time.into(),
                k.target.r.into(),
                k.target.z.into(),
                k.main_term.into(),
                k.ur_over_r.into(),
                k.ud_over_xd.into(),
                k.b1.into(),
                k.b2.into(),
                k.ratio_r.into(),
                k.ratio_d.into(),
            ])?;
        }
        Ok(KeyLemmaLevel {
            resolution: res,
            time,
            max_ratio_r: s.max_ratio_r,
            max_ratio_d: s.max_ratio_d,
            degenerate: s.degenerate,
        })
    };
    let mut levels = Vec::new();
    let mut base = None;
    for res in [cfg.resolution, 2 * cfg.resolution] {
        let sys = seeded(cfg, &params, res)?;
        let s = verify_key_lemma(&sys, &targets, &kernel, norms)?;
        levels.push(push(res, &s, 0.0)?);
        base.get_or_insert(sys);
    }
    let base = base.expect("two levels");
    watch.lap("refinement");

    if let Some(t_end) = cfg.t_end.filter(|t| *t > 0.0) {
        let ecfg = EvolveConfig { dt: time_step(cfg, &base)?, t_end, cadence: usize::MAX, kernel };
        let run = evolve(&base, &ecfg, |_, _| Ok(()))?;
        let linf_t = run.frames.last().map_or(linf, |f| f.linf_omega);
        let s = verify_key_lemma(&run.system, &targets, &kernel, RemainderNorms { grad_ld: None, linf: linf_t })?;
        levels.push(push(cfg.resolution, &s, run.system.time)?);
        watch.lap("evolved");
    }
    table.write_csv(&out.path("keylemma.csv"))?;

    let h = 0.01 * 8f64.powi(-(params.m as i32));
    let origin = origin_limit_identities(&base, &kernel, h)?;
    let ctx = base.ctx;
    let outcome = KeyLemmaOutcome {
        ratio_change_r: relative_change(levels[0].max_ratio_r, levels[1].max_ratio_r),
        ratio_change_d: relative_change(levels[0].max_ratio_d, levels[1].max_ratio_d),
        radial_identity: origin.radial_identity(ctx.d, ctx.ball_volume),
        axial_identity: origin.axial_identity(ctx.ball_volume),
        derivative_ratio: origin.derivative_ratio(),
        origin,
        origin_step: h,
        linf,
        grad_l3,
        levels,
    };
    write_json(&out.path("norms.json"), &[NormReport::from_particles(&base, &cfg.q_list)?])?;
    let band = |x: f64| (0.98..=1.02).contains(&x);
    let checks = BTreeMap::from([
        ("ratio_r_stable_20pct".to_owned(), outcome.ratio_change_r.abs() <= 0.2),
        ("ratio_d_stable_20pct".to_owned(), outcome.ratio_change_d.abs() <= 0.2),
        ("radial_identity".to_owned(), band(outcome.radial_identity)),
        ("axial_identity".to_owned(), band(outcome.axial_identity)),
        ("derivative_ratio".to_owned(), (outcome.derivative_ratio / -2.0 - 1.0).abs() <= 0.03),
    ]);
    write_summary(out, Scenario::KeyLemma, cfg, watch, &checks, &outcome)?;
    Ok(outcome)
}

/// `‖Λ_d^{3/2} ω^{(n)}‖²` of one unit-amplitude bubble from continuum
/// samples on a grid covering both disks.
pub fn bubble_lambda_d_sq(n: u32, nr: usize) -> Result<f64> {
    let unit = BubbleParams::new(n, n, 0.5)?;
    let spec = BubbleGeometry::of(&unit, n).grid(nr, 8 * nr, 0.25)?;
    let field = GriddedField::from_fn(spec, |p| crate::initdata::bubble_vorticity(n, p))?;
    vertical_sobolev_squared(&field, &DimensionContext::three(), 1.5)
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineRow {
    pub n0: u32,
    pub linf: f64,
    pub linf_expected: f64,
    /// Over bubbles `n0..=m`.
    pub lambda_d_sq_truncated: f64,
    /// Including the `n > m` tail, each tail bubble carrying the mean
    /// per-bubble value.
    pub lambda_d_sq: f64,
    pub lorentz: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BubbleRow {
    pub n: u32,
    pub lambda_d_sq_unit: f64,
    pub i_n: f64,
    pub lorentz_power: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityBattery {
    /// `(name, p, lhs/rhs, p/(p-1), converged)`.
    pub hardy: Vec<(String, f64, f64, f64, bool)>,
    pub gn_single_coarse: f64,
    pub gn_single_fine: f64,
    /// Upper bounds on the ratio for `m = n0, n0+1, ...`.
    pub gn_family: Vec<(u32, f64)>,
}

impl InequalityBattery {
    pub const HARDY_TOLERANCE: f64 = 1e-3;
    pub const GN_REFINEMENT_TOLERANCE: f64 = 0.15;

    pub fn checks(&self) -> BTreeMap<String, bool> {
        let hardy = self
            .hardy
            .iter()
            .all(|(_, _, ratio, c, conv)| *ratio <= c * (1.0 + Self::HARDY_TOLERANCE) && *conv);
        let gn_stable = self.gn_single_fine.is_finite()
            && (self.gn_single_fine / self.gn_single_coarse - 1.0).abs() <= Self::GN_REFINEMENT_TOLERANCE;
        let first = self.gn_family.first().map_or(0.0, |x| x.1);
        let gn_family = self.gn_family.iter().all(|(_, r)| *r <= first * (1.0 + Self::GN_REFINEMENT_TOLERANCE));
        BTreeMap::from([
            ("hardy_battery".to_owned(), hardy),
            ("gn_single_bubble_refinement".to_owned(), gn_stable),
            ("gn_family_bounded".to_owned(), gn_family),
        ])
    }
}

fn hardy_case(f: impl Fn(f64) -> f64, p: f64, cells: usize) -> Result<(f64, bool)> {
    // graded mesh, fine near the origin
    let run = |n: usize| -> Result<f64> {
        let xs: Vec<f64> = (1..=n).map(|k| (k as f64 / n as f64).powi(3)).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let (lhs, rhs) = hardy_check(&xs, &fs, p)?;
        Ok(if rhs > 0.0 { lhs / rhs } else { 0.0 })
    };
    let coarse = run(cells)?;
    let fine = run(2 * cells)?;
    let converged = (fine - coarse).abs() <= 1e-3 * fine.max(1e-300) || fine == coarse;
    Ok((fine, converged))
}

/// Hardy's inequality on a fixed set of functions and the
/// Gagliardo–Nirenberg ratio for bubble data.
pub fn inequality_battery(alpha: f64, grid_nr: usize) -> Result<InequalityBattery> {
    let cases: Vec<(&str, Box<dyn Fn(f64) -> f64>, f64)> = vec![
        ("zero", Box::new(|_| 0.0), 2.0),
        ("linear", Box::new(|x| x), 2.0),
        ("power_0.6", Box::new(|x: f64| x.powf(0.6)), 2.0),
        ("power_0.8_p1.5", Box::new(|x: f64| x.powf(0.8)), 1.5),
        ("sine_p3", Box::new(|x: f64| (std::f64::consts::FRAC_PI_2 * x).sin()), 3.0),
        ("parabola_p4", Box::new(|x: f64| x * (1.0 - x)), 4.0),
        ("bump", Box::new(|x: f64| 4.0 * crate::initdata::bump_phi(x - 0.5, 0.0)), 2.0),
    ];
    let mut hardy = Vec::new();
    for (name, f, p) in cases {
        let (ratio, conv) = hardy_case(f, p, 4000)?;
        hardy.push((name.to_owned(), p, ratio, p / (p - 1.0), conv));
    }
    let ctx = DimensionContext::three();
    let single = |nr: usize| -> Result<f64> {
        let params = BubbleParams::new(1, 1, alpha)?;
        let spec = BubbleGeometry::of(&params, 1).grid(nr, 8 * nr, 0.25)?;
        Ok(gn_check(&sample_grid(&params, spec)?, &ctx)?.ratio())
    };
    let gn_single_coarse = single(grid_nr / 2)?;
    let gn_single_fine = single(grid_nr)?;
    let mut gn_family = Vec::new();
    for m in 1..=3 {
        let params = BubbleParams::new(1, m, alpha)?;
        let fields = params
            .indices()
            .map(|n| {
                let single = BubbleParams { n0: n, m: n, ..params };
                sample_grid(&single, BubbleGeometry::of(&params, n).grid(grid_nr, 8 * grid_nr, 0.25)?)
            })
            .collect::<Result<Vec<_>>>()?;
        gn_family.push((m, gn_check_bubbles(&fields, &ctx)?.ratio()));
    }
    Ok(InequalityBattery { hardy, gn_single_coarse, gn_single_fine, gn_family })
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineOutcome {
    pub rows: Vec<BaselineRow>,
    pub bubbles: Vec<BubbleRow>,
    pub tail_exponent: Option<f64>,
    pub tail_exponent_expected: f64,
    /// `(q, fitted, expected = -αq)`.
    pub lorentz_exponents: Vec<(f64, Option<f64>, f64)>,
    pub i_exponent: Option<f64>,
    pub battery: InequalityBattery,
}

pub fn run_norms_baseline(cfg: &ExperimentConfig, out: &OutputDir) -> Result<BaselineOutcome> {
    cfg.validate_for(Scenario::NormsBaseline)?;
    let mut watch = Stopwatch::start();
    let alpha = cfg.alpha;
    let full = BubbleParams::new(1, cfg.m, alpha)?;
    let system = seeded(cfg, &full, cfg.resolution)?;
    let qs: Vec<f64> = cfg.q_list.iter().copied().filter(|q| q.is_finite()).collect();

    let mut bubbles = Vec::new();
    for n in full.indices() {
        let lorentz_power =
            qs.iter().map(|&q| Ok((q, bubble_lorentz_power(&system, n, q)?))).collect::<Result<Vec<_>>>()?;
        bubbles.push(BubbleRow {
            n,
            lambda_d_sq_unit: bubble_lambda_d_sq(n, cfg.grid_nr)?,
            i_n: crate::transport::compute_in(&system, n)?,
            lorentz_power,
        });
    }
    watch.lap("bubbles");
    let mean_unit = bubbles.iter().map(|b| b.lambda_d_sq_unit).sum::<f64>() / bubbles.len() as f64;
    let tail = hurwitz_zeta(2.0 * alpha, cfg.m as f64 + 1.0);

    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut table = Table::new(
        ["n0", "linf", "linf_expected", "lambda_d_sq_truncated", "lambda_d_sq"]
            .into_iter()
            .map(String::from)
            .chain(qs.iter().map(|q| format!("lorentz_q{q}"))),
    );
    for n0 in 1..=cfg.n0_max {
        let params = BubbleParams::new(n0, cfg.m, alpha)?;
        let spec = BubbleGeometry::of(&params, n0).upper_grid(cfg.grid_nr, cfg.grid_nr, 0.25)?;
        let linf = sample_grid(&params, spec)?.max_abs();
        let truncated: f64 = bubbles
            .iter()
            .filter(|b| b.n >= n0)
            .map(|b| params.amplitude(b.n).powi(2) * b.lambda_d_sq_unit)
            .sum();
        let lambda_d_sq = truncated + mean_unit * tail;
        let sys = seeded(cfg, &params, cfg.resolution)?;
        let lorentz = qs.iter().map(|&q| Ok((q, particle_lorentz(&sys, q)?))).collect::<Result<Vec<_>>>()?;
        let mut report = NormReport::from_particles(&sys, &cfg.q_list)?;
        report.linf = linf;
        report.sobolev_dir_d = Some(lambda_d_sq.sqrt());
        snapshots.push(report);
        let row = BaselineRow { n0, linf, linf_expected: params.amplitude(n0), lambda_d_sq_truncated: truncated, lambda_d_sq, lorentz };
        let mut cells = vec![
            Cell::from(n0),
            row.linf.into(),
            row.linf_expected.into(),
            row.lambda_d_sq_truncated.into(),
            row.lambda_d_sq.into(),
        ];
        cells.extend(row.lorentz.iter().map(|(_, v)| Cell::Num(*v)));
        table.push(cells)?;
        rows.push(row);
    }
    watch.lap("sweep");
    table.write_csv(&out.path("baseline.csv"))?;
    write_json(&out.path("norms.json"), &snapshots)?;

    let n0s: Vec<f64> = rows.iter().map(|r| r.n0 as f64).collect();
    let lam: Vec<f64> = rows.iter().map(|r| r.lambda_d_sq).collect();
    let ns: Vec<f64> = bubbles.iter().map(|b| b.n as f64).collect();
    let lorentz_exponents = qs
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let v: Vec<f64> = bubbles.iter().map(|b| b.lorentz_power[k].1).collect();
            (q, loglog_slope(&ns, &v), -alpha * q)
        })
        .collect();
    let i_n: Vec<f64> = bubbles.iter().map(|b| b.i_n).collect();
    let battery = inequality_battery(alpha, cfg.grid_nr)?;
    watch.lap("inequalities");

    let outcome = BaselineOutcome {
        tail_exponent: loglog_slope(&n0s, &lam),
        tail_exponent_expected: 1.0 - 2.0 * alpha,
        lorentz_exponents,
        i_exponent: loglog_slope(&ns, &i_n),
        rows,
        bubbles,
        battery,
    };
    let mut checks = outcome.battery.checks();
    checks.insert(
        "tail_exponent".into(),
        outcome.tail_exponent.is_some_and(|s| (s - outcome.tail_exponent_expected).abs() <= 0.15),
    );
    checks.insert(
        "lorentz_exponents".into(),
        outcome
            .lorentz_exponents
            .iter()
            .all(|(_, fit, want)| fit.is_some_and(|f| (f / want - 1.0).abs() <= 0.1)),
    );
    checks.insert(
        "i_exponent".into(),
        outcome.i_exponent.is_some_and(|s| (s / -alpha - 1.0).abs() <= 0.05),
    );
    checks.insert("linf_exact".into(), outcome.rows.iter().all(|r| r.linf == r.linf_expected));
    checks.insert(
        "lambda_decreasing".into(),
        outcome.rows.windows(2).all(|w| w[1].lambda_d_sq < w[0].lambda_d_sq),
    );
    write_summary(out, Scenario::NormsBaseline, cfg, watch, &checks, &outcome)?;
    Ok(outcome)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceLevel {
    pub resolution: usize,
    pub grid_nr: usize,
    pub curl_error: f64,
    pub divergence_ratio: f64,
    pub lorentz_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceOutcome {
    pub levels: Vec<ConvergenceLevel>,
    /// `error(R) / error(2R)` between consecutive levels.
    pub curl_error_ratios: Vec<f64>,
    /// `(dt, steps, max position change against the next halving)`.
    pub time_steps: Vec<(f64, usize, f64)>,
    pub rk4_error_ratio: f64,
    pub rk4_order: f64,
}

fn max_position_gap(a: &ParticleSystem<f64>, b: &ParticleSystem<f64>) -> f64 {
    a.particles
        .iter()
        .zip(&b.particles)
        .map(|(p, q)| (p.current.r - q.current.r).hypot(p.current.z - q.current.z))
        .fold(0.0, f64::max)
}

/// Curl round-trip, divergence and integrator self-convergence for the
/// single bubble `n0`.
pub fn run_convergence(cfg: &ExperimentConfig, out: &OutputDir) -> Result<ConvergenceOutcome> {
    cfg.validate_for(Scenario::Convergence)?;
    let mut watch = Stopwatch::start();
    let params = BubbleParams::new(cfg.n0, cfg.n0, cfg.alpha)?;
    let kernel = cfg.kernel();
    let sign = if cfg.negate { -1.0 } else { 1.0 };
    let geo = BubbleGeometry::of(&params, cfg.n0);
    let mut levels = Vec::new();
    let mut table = Table::new(["resolution", "grid_nr", "curl_error", "divergence_ratio", "lorentz_drift"]);
    for k in 0..2 {
        let res = cfg.resolution << k;
        let grid_nr = cfg.grid_nr << k;
        let sys = seeded(cfg, &params, res)?;
        let grid = geo.grid(grid_nr, 8 * grid_nr, 0.5)?;
        let rt = curl_roundtrip(&sys, grid, &kernel, |p| sign * initial_vorticity(&params, p))?;
        let l0 = particle_lorentz(&sys, 1.0)?;
        let moved = step_rk4(&sys, default_dt(&sys, &kernel)?, &kernel)?;
        let drift = if l0 > 0.0 { (particle_lorentz(&moved, 1.0)? / l0 - 1.0).abs() } else { 0.0 };
        let level = ConvergenceLevel {
            resolution: res,
            grid_nr,
            curl_error: rt.relative_error,
            divergence_ratio: rt.divergence_ratio,
            lorentz_drift: drift,
        };
        table.push(vec![
            res.into(),
            grid_nr.into(),
            level.curl_error.into(),
            level.divergence_ratio.into(),
            level.lorentz_drift.into(),
        ])?;
        levels.push(level);
    }
    watch.lap("roundtrip");
    let curl_error_ratios = levels
        .windows(2)
        .map(|w| if w[1].curl_error > 0.0 { w[0].curl_error / w[1].curl_error } else { f64::INFINITY })
        .collect();

    let sys = seeded(cfg, &params, cfg.resolution)?;
    let dt0 = time_step(cfg, &sys)?;
    let horizon = 20.0 * dt0;
    let mut finals = Vec::new();
    for steps in [20usize, 40, 80] {
        let dt = horizon / steps as f64;
        let mut s = sys.clone();
        for _ in 0..steps {
            s = step_rk4(&s, dt, &kernel)?;
        }
        finals.push((dt, steps, s));
    }
    let e1 = max_position_gap(&finals[0].2, &finals[1].2);
    let e2 = max_position_gap(&finals[1].2, &finals[2].2);
    let rk4_error_ratio = if e2 > 0.0 { e1 / e2 } else if e1 == 0.0 { f64::INFINITY } else { 0.0 };
    let time_steps = vec![(finals[0].0, finals[0].1, e1), (finals[1].0, finals[1].1, e2), (finals[2].0, finals[2].1, 0.0)];
    watch.lap("integrator");
    table.write_csv(&out.path("levels.csv"))?;

    let outcome = ConvergenceOutcome {
        levels,
        curl_error_ratios,
        time_steps,
        rk4_order: rk4_error_ratio.log2(),
        rk4_error_ratio,
    };
    let checks = BTreeMap::from([
        ("curl_error_below_5pct".to_owned(), outcome.levels[0].curl_error <= 0.05),
        ("divergence_below_5pct".to_owned(), outcome.levels.iter().all(|l| l.divergence_ratio <= 0.05)),
        ("curl_refinement_ratio".to_owned(), outcome.curl_error_ratios.iter().all(|r| *r >= 1.8)),
        ("rk4_ratio".to_owned(), outcome.rk4_error_ratio >= 11.0),
    ]);
    write_summary(out, Scenario::Convergence, cfg, watch, &checks, &outcome)?;
    Ok(outcome)
}

/// Outcome of any scenario, for callers that dispatch on the name.
#[derive(Clone, Debug)]
pub enum Outcome {
    LinfInflation(LinfOutcome),
    SobolevInflation(SobolevOutcome),
    KeyLemma(KeyLemmaOutcome),
    NormsBaseline(BaselineOutcome),
    Convergence(ConvergenceOutcome),
}

pub fn run(scenario: Scenario, cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    Ok(match scenario {
        Scenario::LinfInflation => Outcome::LinfInflation(run_linf_inflation(cfg, out)?),
        Scenario::SobolevInflation => Outcome::SobolevInflation(run_sobolev_inflation(cfg, out)?),
        Scenario::KeyLemma => Outcome::KeyLemma(run_key_lemma(cfg, out)?),
        Scenario::NormsBaseline => Outcome::NormsBaseline(run_norms_baseline(cfg, out)?),
        Scenario::Convergence => Outcome::Convergence(run_convergence(cfg, out)?),
    })
}
