//! Lagrangian transport of the particles and the per-bubble diagnostics.
//!
//! Particles move with the Biot–Savart velocity; `xi` and `weight` never
//! change, so the vorticity `xi · r^{d-2}` follows from the positions alone.

use serde::Serialize;

use crate::biotsavart::{velocity_field, KernelConfig};
use crate::error::{LabError, Result};
use crate::fields::{HalfPlanePoint, ParticleSystem};
use crate::initdata::BubbleParams;
use crate::norms::{particle_lorentz, weighted_l2};
use crate::scalar::Real;

/// Pairs `(upper, lower)` of particle indices related by `z → -z`,
/// `xi → -xi`. When every particle belongs to such a pair only the upper
/// halves need a velocity evaluation: `u^r` is even and `u^d` odd in `z`.
fn mirror_pairs<T: Real>(system: &ParticleSystem<T>) -> Option<Vec<(usize, usize)>> {
    let covered: usize = system.bubble_ranges.iter().map(|b| b.range.len()).sum();
    if covered != system.len() {
        return None;
    }
    let mut pairs = Vec::with_capacity(system.len() / 2);
    for b in &system.bubble_ranges {
        let len = b.range.len();
        if len % 2 != 0 {
            return None;
        }
        let half = len / 2;
        for i in b.range.start..b.range.start + half {
            let (p, q) = (&system.particles[i], &system.particles[i + half]);
            if q.current != p.current.mirrored() || q.xi != -p.xi || q.weight != p.weight {
                return None;
            }
            pairs.push((i, i + half));
        }
    }
    Some(pairs)
}

fn velocities<T: Real>(
    system: &ParticleSystem<T>,
    positions: &[HalfPlanePoint<T>],
    pairs: Option<&[(usize, usize)]>,
    cfg: &KernelConfig<T>,
) -> Result<Vec<(T, T)>> {
    let mut stage = system.clone();
    for (p, &x) in stage.particles.iter_mut().zip(positions) {
        p.current = x;
    }
    match pairs {
        Some(pairs) => {
            let targets: Vec<_> = pairs.iter().map(|&(i, _)| positions[i]).collect();
            let upper = velocity_field(&stage, &targets, cfg)?;
            let mut out = vec![(T::zero(), T::zero()); positions.len()];
            for (&(i, j), &(ur, ud)) in pairs.iter().zip(&upper) {
                out[i] = (ur, ud);
                out[j] = (ur, -ud);
            }
            Ok(out)
        }
        None => velocity_field(&stage, positions, cfg),
    }
}

fn shifted<T: Real>(base: &[HalfPlanePoint<T>], k: &[(T, T)], h: T) -> Vec<HalfPlanePoint<T>> {
    base.iter()
        .zip(k)
        .map(|(x, &(ur, ud))| HalfPlanePoint { r: x.r + h * ur, z: x.z + h * ud })
        .collect()
}

/// One classical Runge–Kutta step of `dΦ/dt = u(Φ)`.
pub fn step_rk4<T: Real>(system: &ParticleSystem<T>, dt: T, cfg: &KernelConfig<T>) -> Result<ParticleSystem<T>> {
    system.ctx.require_three()?;
    if !(dt > T::zero()) {
        return Err(LabError::Precondition(format!("time step must be positive, got {dt}")));
    }
    let pairs = mirror_pairs(system);
    let pairs = pairs.as_deref();
    let x0: Vec<_> = system.particles.iter().map(|p| p.current).collect();
    let half = T::lit(0.5) * dt;
    let k1 = velocities(system, &x0, pairs, cfg)?;
    let k2 = velocities(system, &shifted(&x0, &k1, half), pairs, cfg)?;
    let k3 = velocities(system, &shifted(&x0, &k2, half), pairs, cfg)?;
    let k4 = velocities(system, &shifted(&x0, &k3, dt), pairs, cfg)?;
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let mut next = system.clone();
    for (i, p) in next.particles.iter_mut().enumerate() {
        let ur = k1[i].0 + two * (k2[i].0 + k3[i].0) + k4[i].0;
        let ud = k1[i].1 + two * (k2[i].1 + k3[i].1) + k4[i].1;
        let x = HalfPlanePoint { r: x0[i].r + sixth * ur, z: x0[i].z + sixth * ud };
        if !x.r.is_finite() || !x.z.is_finite() || x.r < T::zero() {
            return Err(LabError::Numerical(format!(
                "particle {i} left the half-plane at t = {}: ({}, {})",
                system.time + dt,
                x.r,
                x.z
            )));
        }
        p.current = x;
    }
    next.time = system.time + dt;
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BubbleDiagnostics<T> {
    pub n: u32,
    pub i_n: T,
    /// `inf Φʳ(t,x)/r` over the bubble.
    pub r_ratio_inf: T,
    pub r_ratio_sup: T,
    /// `inf x_d/Φᵈ(t,x)` over the upper half of the bubble.
    pub z_ratio_inf: T,
    pub z_ratio_sup: T,
    /// `inf Φʳ` and `sup Φʳ` over the bubble.
    pub r_inf: T,
    pub r_sup: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsFrame<T> {
    pub time: T,
    pub step: usize,
    pub bubbles: Vec<BubbleDiagnostics<T>>,
    pub linf_omega: T,
    /// `‖ω/r‖_{L^{3,1}}`, or its `L^{d,1}` analogue.
    pub lorentz_31: T,
    pub weighted_l2: Option<T>,
    pub ordering_ok: bool,
    pub region_ok: bool,
}

/// `I_n(t)`: the main-term contribution of the upper half of bubble `n`
/// along the flow, `σ Σ w xi (Φʳ)^{d-1} Φᵈ |Φ|^{-(d+2)}`.
pub fn compute_in<T: Real>(system: &ParticleSystem<T>, n: u32) -> Result<T> {
    let range = system.bubble(n)?.range.clone();
    let d = system.ctx.d;
    let half_power = T::from_usize_lossy(d as usize + 2) * T::lit(0.5);
    let sum: T = system.particles[range]
        .iter()
        .filter(|p| p.xi != T::zero() && p.initial.z > T::zero())
        .map(|p| {
            let (r, z) = (p.current.r, p.current.z);
            let y2 = r * r + z * z;
            p.weight * p.xi * r.powi(d as i32 - 1) * z / y2.powf(half_power)
        })
        .sum();
    Ok(system.ctx.sphere_area * sum)
}

fn bubble_diagnostics<T: Real>(system: &ParticleSystem<T>, n: u32) -> Result<BubbleDiagnostics<T>> {
    let range = system.bubble(n)?.range.clone();
    let big = T::infinity();
    let mut d = BubbleDiagnostics {
        n,
        i_n: compute_in(system, n)?,
        r_ratio_inf: big,
        r_ratio_sup: T::zero(),
        z_ratio_inf: big,
        z_ratio_sup: T::zero(),
        r_inf: big,
        r_sup: T::zero(),
    };
    for p in system.particles[range].iter().filter(|p| p.xi != T::zero()) {
        let rr = p.current.r / p.initial.r;
        d.r_ratio_inf = d.r_ratio_inf.min(rr);
        d.r_ratio_sup = d.r_ratio_sup.max(rr);
        d.r_inf = d.r_inf.min(p.current.r);
        d.r_sup = d.r_sup.max(p.current.r);
        if p.initial.z > T::zero() {
            let zr = p.initial.z / p.current.z;
            d.z_ratio_inf = d.z_ratio_inf.min(zr);
            d.z_ratio_sup = d.z_ratio_sup.max(zr);
        }
    }
    if d.r_sup == T::zero() {
        return Err(LabError::Precondition(format!("bubble {n} carries no vorticity")));
    }
    Ok(d)
}

/// Well-ordering of the bubbles: `sup_{Ω_n} Φʳ ≤ 4 inf_{Ω_n} Φʳ` and
/// `4 sup_{Ω_{n+1}} Φʳ ≤ inf_{Ω_n} Φʳ`.
pub fn ordering_holds<T: Real>(bubbles: &[BubbleDiagnostics<T>]) -> bool {
    let four = T::lit(4.0);
    let mut sorted: Vec<_> = bubbles.iter().collect();
    sorted.sort_by_key(|b| b.n);
    let sizes = sorted.iter().all(|b| b.r_sup <= four * b.r_inf);
    let gaps = sorted
        .windows(2)
        .filter(|w| w[1].n == w[0].n + 1)
        .all(|w| four * w[1].r_sup <= w[0].r_inf);
    sizes && gaps
}

/// No vorticity-carrying particle has entered `{r < |x_d|}`, up to a
/// relative `grace`.
pub fn region_holds<T: Real>(system: &ParticleSystem<T>, grace: T) -> bool {
    system
        .particles
        .iter()
        .filter(|p| p.xi != T::zero())
        .all(|p| p.current.r >= p.current.z.abs() * (T::one() - grace))
}

pub const REGION_GRACE: f64 = 1e-6;

pub fn diagnostics<T: Real>(system: &ParticleSystem<T>, step: usize) -> Result<DiagnosticsFrame<T>> {
    let ctx = &system.ctx;
    let bubbles = system
        .bubble_ranges
        .iter()
        .map(|b| bubble_diagnostics(system, b.n))
        .collect::<Result<Vec<_>>>()?;
    let linf_omega = system
        .particles
        .iter()
        .fold(T::zero(), |m, p| m.max(p.vorticity(ctx).abs()));
    Ok(DiagnosticsFrame {
        time: system.time,
        step,
        ordering_ok: ordering_holds(&bubbles),
        region_ok: region_holds(system, T::lit(REGION_GRACE)),
        bubbles,
        linf_omega,
        lorentz_31: particle_lorentz(system, T::one())?,
        weighted_l2: if ctx.d == 3 { Some(weighted_l2(system)?) } else { None },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvolveConfig<T> {
    pub dt: T,
    pub t_end: T,
    /// Steps between diagnostics frames.
    pub cadence: usize,
    pub kernel: KernelConfig<T>,
}

#[derive(Clone, Debug)]
pub struct EvolveOutcome<T> {
    pub system: ParticleSystem<T>,
    pub frames: Vec<DiagnosticsFrame<T>>,
    /// Set when a step produced non-finite or off-half-plane positions; the
    /// run stops at the last good state.
    pub aborted: Option<String>,
}

/// Steps `round(t_end/dt)` times, emitting a frame at the start, every
/// `cadence` steps and at the end. `observer` sees each frame with the
/// matching state.
pub fn evolve<T: Real>(
    system: &ParticleSystem<T>,
    cfg: &EvolveConfig<T>,
    mut observer: impl FnMut(&DiagnosticsFrame<T>, &ParticleSystem<T>) -> Result<()>,
) -> Result<EvolveOutcome<T>> {
    if !(cfg.t_end >= T::zero()) || !(cfg.dt > T::zero()) || cfg.cadence == 0 {
        return Err(LabError::Config(format!(
            "need t_end >= 0, dt > 0 and cadence > 0; got t_end={}, dt={}, cadence={}",
            cfg.t_end, cfg.dt, cfg.cadence
        )));
    }
    cfg.kernel.validate()?;
    let steps = (cfg.t_end / cfg.dt).round().to_f64_lossy() as usize;
    let t0 = system.time;
    let mut state = system.clone();
    let mut frames = Vec::new();
    let first = diagnostics(&state, 0)?;
    observer(&first, &state)?;
    frames.push(first);
    let mut aborted = None;
    for step in 1..=steps {
        match step_rk4(&state, cfg.dt, &cfg.kernel) {
            Ok(mut next) => {
                next.time = t0 + cfg.dt * T::from_usize_lossy(step);
                state = next;
            }
            Err(LabError::Numerical(msg)) => {
                aborted = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        }
        if step % cfg.cadence == 0 || step == steps {
            let frame = diagnostics(&state, step)?;
            observer(&frame, &state)?;
            frames.push(frame);
        }
    }
    Ok(EvolveOutcome { system: state, frames, aborted })
}

/// `dt = min_n h_n / (10 max_{Ω_n} |u|)` with `h_n` the current half-width of
/// bubble `n` in `r`.
pub fn default_dt<T: Real>(system: &ParticleSystem<T>, cfg: &KernelConfig<T>) -> Result<T> {
    let positions: Vec<_> = system.particles.iter().map(|p| p.current).collect();
    let pairs = mirror_pairs(system);
    let vel = velocities(system, &positions, pairs.as_deref(), cfg)?;
    let mut dt = T::infinity();
    for b in &system.bubble_ranges {
        let (mut lo, mut hi, mut umax) = (T::infinity(), T::zero(), T::zero());
        for i in b.range.clone().filter(|&i| system.particles[i].xi != T::zero()) {
            let r = system.particles[i].current.r;
            lo = lo.min(r);
            hi = hi.max(r);
            umax = umax.max(vel[i].0.hypot(vel[i].1));
        }
        if umax > T::zero() {
            dt = dt.min(T::lit(0.5) * (hi - lo) / (T::lit(10.0) * umax));
        }
    }
    if dt.is_infinite() {
        return Err(LabError::Precondition("no motion: default time step undefined".into()));
    }
    Ok(dt)
}

/// `T_n = min{T, c1 (1-α) n^{-1+α}}` for every bubble of `params`.
pub fn bubble_timescales<T: Real>(params: &BubbleParams<T>, horizon: T, c1: T) -> Vec<(u32, T)> {
    let a = params.alpha;
    params
        .indices()
        .map(|n| {
            let tn = c1 * (T::one() - a) * T::from_usize_lossy(n as usize).powf(a - T::one());
            (n, horizon.min(tn))
        })
        .collect()
}

/// Per bubble: whether `r/f ≤ Φʳ ≤ f r` and `x_d/f ≤ Φᵈ ≤ f x_d` on every
/// frame with `t ≤ T_n`.
pub fn stability_check<T: Real>(frames: &[DiagnosticsFrame<T>], timescales: &[(u32, T)], factor: T) -> Vec<(u32, bool)> {
    let lo = factor.recip();
    timescales
        .iter()
        .map(|&(n, tn)| {
            let ok = frames
                .iter()
                .filter(|f| f.time <= tn)
                .filter_map(|f| f.bubbles.iter().find(|b| b.n == n))
                .all(|b| {
                    b.r_ratio_inf >= lo && b.r_ratio_sup <= factor && b.z_ratio_inf >= lo && b.z_ratio_sup <= factor
                });
            (n, ok)
        })
        .collect()
}
