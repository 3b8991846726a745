//! Main term and remainder bounds of the hyperbolic-flow lemma near the
//! origin, and the limit identities at `x = 0`.
//!
//! For a target `x = (r, x_d)` in the wedge `r ≥ x_d > 0` the lemma states
//!
//! ```text
//! | u^r/r - M(x)/((d-1)|B_d|) | ≤ C B1(x),     | u^d/x_d + M(x)/|B_d| | ≤ C B2(x),
//! M(x) = ∫_{|y_h| ≥ 4r} |y_h| y_d |y|^{-(d+2)} ω(y) dy.
//! ```
//!
//! The constant `C` is not known; [`verify_key_lemma`] reports the empirical
//! ratios instead.

use rayon::prelude::*;
use serde::Serialize;

use crate::biotsavart::{velocity_field, KernelConfig};
use crate::error::{LabError, Result};
use crate::fields::{HalfPlanePoint, ParticleSystem};
use crate::scalar::Real;

/// Cutoff factor of the far region `Q(x) = {|y_h| ≥ 4|x_h|}`.
pub const DEFAULT_CUTOFF: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KeyLemmaReport<T> {
    pub target: HalfPlanePoint<T>,
    pub main_term: T,
    pub ur_over_r: T,
    pub ud_over_xd: T,
    pub b1: T,
    pub b2: T,
    pub ratio_r: T,
    pub ratio_d: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyLemmaSummary<T> {
    pub reports: Vec<KeyLemmaReport<T>>,
    pub max_ratio_r: T,
    pub max_ratio_d: T,
    /// Set when the data vanish, so every ratio is `0/0`.
    pub degenerate: bool,
}

/// Norms of `ω` entering the remainder bounds. Without a gradient estimate
/// only the `L^∞` branch of each minimum is used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RemainderNorms<T> {
    pub grad_ld: Option<T>,
    pub linf: T,
}

#[inline]
fn kernel<T: Real>(rho: T, zeta: T, d: u32) -> T {
    let y2 = rho * rho + zeta * zeta;
    let half_power = T::from_usize_lossy(d as usize + 2) * T::lit(0.5);
    rho * zeta / y2.powf(half_power)
}

/// `M(x)` with the far region `{ρ ≥ cutoff · r}`.
pub fn main_term_with_cutoff<T: Real>(system: &ParticleSystem<T>, target: HalfPlanePoint<T>, cutoff: T) -> T {
    let ctx = &system.ctx;
    let limit = cutoff * target.r;
    let sum: T = system
        .particles
        .iter()
        .filter(|p| p.xi != T::zero() && p.current.r >= limit)
        .map(|p| p.weight * kernel(p.current.r, p.current.z, ctx.d) * p.vorticity(ctx))
        .sum();
    ctx.sphere_area * sum
}

/// `M(x)` over `Q(x)`.
pub fn main_term<T: Real>(system: &ParticleSystem<T>, target: HalfPlanePoint<T>) -> T {
    main_term_with_cutoff(system, target, T::lit(DEFAULT_CUTOFF))
}

/// The main-term integrand summed over `Q(x)` and over its complement.
/// Only meant for inspecting how the total splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionSums<T> {
    pub far: T,
    pub near: T,
}

pub fn region_sums<T: Real>(system: &ParticleSystem<T>, target: HalfPlanePoint<T>) -> RegionSums<T> {
    let far = main_term(system, target);
    let total = main_term_with_cutoff(system, target, T::zero());
    RegionSums { far, near: total - far }
}

fn check_wedge<T: Real>(target: HalfPlanePoint<T>) -> Result<()> {
    if !(target.z > T::zero() && target.r >= target.z) {
        return Err(LabError::Precondition(format!(
            "target ({}, {}) is outside the wedge r >= x_d > 0",
            target.r, target.z
        )));
    }
    Ok(())
}

/// `(B1, B2)` at `target`:
/// `B1 = min{‖∇ω‖_{L^d}, ‖ω‖_∞}`,
/// `B2 = min{(1 + log(r/x_d))^{(d-1)/d} ‖∇ω‖_{L^d}, (1 + log(r/x_d)) ‖ω‖_∞}`.
pub fn remainder_bounds<T: Real>(norms: RemainderNorms<T>, d: u32, target: HalfPlanePoint<T>) -> Result<(T, T)> {
    check_wedge(target)?;
    let log_factor = T::one() + (target.r / target.z).ln();
    let linf = norms.linf;
    Ok(match norms.grad_ld {
        Some(g) => {
            let dd = T::from_usize_lossy(d as usize);
            let b1 = g.min(linf);
            let b2 = (log_factor.powf((dd - T::one()) / dd) * g).min(log_factor * linf);
            (b1, b2)
        }
        None => (linf, log_factor * linf),
    })
}

fn ratio<T: Real>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else if num == T::zero() {
        T::zero()
    } else {
        T::infinity()
    }
}

/// Evaluates both estimates at every target. The summary maxima estimate the
/// lemma's constant for this data.
pub fn verify_key_lemma<T: Real>(
    system: &ParticleSystem<T>,
    targets: &[HalfPlanePoint<T>],
    cfg: &KernelConfig<T>,
    norms: RemainderNorms<T>,
) -> Result<KeyLemmaSummary<T>> {
    system.ctx.require_three()?;
    for &t in targets {
        check_wedge(t)?;
    }
    let ctx = system.ctx;
    let vel = velocity_field(system, targets, cfg)?;
    let c_r = T::from_usize_lossy(ctx.d as usize - 1) * ctx.ball_volume;
    let reports: Vec<KeyLemmaReport<T>> = targets
        .par_iter()
        .zip(vel.par_iter())
        .map(|(&target, &(ur, ud))| {
            let m = main_term(system, target);
            let (b1, b2) = remainder_bounds(norms, ctx.d, target)?;
            let ur_over_r = ur / target.r;
            let ud_over_xd = ud / target.z;
            Ok(KeyLemmaReport {
                target,
                main_term: m,
                ur_over_r,
                ud_over_xd,
                b1,
                b2,
                ratio_r: ratio((ur_over_r - m / c_r).abs(), b1),
                ratio_d: ratio((ud_over_xd + m / ctx.ball_volume).abs(), b2),
            })
        })
        .collect::<Result<_>>()?;
    let max_ratio_r = reports.iter().map(|r| r.ratio_r).fold(T::zero(), T::max);
    let max_ratio_d = reports.iter().map(|r| r.ratio_d).fold(T::zero(), T::max);
    let degenerate = norms.linf == T::zero();
    Ok(KeyLemmaSummary { reports, max_ratio_r, max_ratio_d, degenerate })
}

/// Finite-difference derivatives of the velocity at the origin together with
/// the full-space main term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OriginLimits<T> {
    /// `∂_r u^r(0)` from `u^r(h, 0)/h`, Richardson-extrapolated with `2h`.
    pub dr_ur: T,
    /// `∂_d u^d(0)` from `u^d(0, h)/h`, likewise.
    pub dd_ud: T,
    pub main_full: T,
}

impl<T: Real> OriginLimits<T> {
    /// `∂_r u^r(0) (d-1)|B_d| / M`, which should be 1.
    pub fn radial_identity(&self, d: u32, ball_volume: T) -> T {
        self.dr_ur * T::from_usize_lossy(d as usize - 1) * ball_volume / self.main_full
    }

    /// `-∂_d u^d(0) |B_d| / M`, which should be 1.
    pub fn axial_identity(&self, ball_volume: T) -> T {
        -self.dd_ud * ball_volume / self.main_full
    }

    /// `∂_d u^d(0) / ∂_r u^r(0)`, which should be `-(d-1)`.
    pub fn derivative_ratio(&self) -> T {
        self.dd_ud / self.dr_ur
    }
}

pub fn origin_limit_identities<T: Real>(system: &ParticleSystem<T>, cfg: &KernelConfig<T>, h: T) -> Result<OriginLimits<T>> {
    if !(h > T::zero()) {
        return Err(LabError::Precondition(format!("step h must be positive, got {h}")));
    }
    system.ctx.require_three()?;
    let two = T::lit(2.0);
    let targets = [
        HalfPlanePoint::new(h, T::zero()),
        HalfPlanePoint::new(two * h, T::zero()),
        HalfPlanePoint::new(T::zero(), h),
        HalfPlanePoint::new(T::zero(), two * h),
    ];
    let v = velocity_field(system, &targets, cfg)?;
    // the odd-order error terms cancel by symmetry, leaving O(h²)
    let rich = |f1: T, f2: T| (T::lit(4.0) * f1 - f2) / T::lit(3.0);
    let dr_ur = rich(v[0].0 / h, v[1].0 / (two * h));
    let dd_ud = rich(v[2].1 / h, v[3].1 / (two * h));
    let main_full = main_term_with_cutoff(system, HalfPlanePoint::new(T::zero(), T::zero()), T::zero());
    Ok(OriginLimits { dr_ur, dd_ud, main_full })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::DimensionContext;
    use crate::initdata::{seed_particles, BubbleParams};

    fn bubbles(n0: u32, m: u32, res: usize) -> ParticleSystem<f64> {
        seed_particles(&BubbleParams::new(n0, m, 0.6).unwrap(), res, DimensionContext::three()).unwrap()
    }

    #[test]
    fn main_term_vanishes_beyond_support() {
        let sys = bubbles(1, 1, 8);
        assert_eq!(main_term(&sys, HalfPlanePoint::new(1.0, 0.5)), 0.0);
    }

    #[test]
    fn full_main_term_is_positive_for_bubbles() {
        let sys = bubbles(1, 3, 8);
        assert!(main_term(&sys, HalfPlanePoint::new(1e-6, 1e-6)) > 0.0);
    }

    #[test]
    fn main_term_non_increasing_in_cutoff() {
        let sys = bubbles(1, 2, 12);
        let t = HalfPlanePoint::new(0.05, 0.01);
        let mut last = f64::INFINITY;
        for k in 0..40 {
            let m = main_term_with_cutoff(&sys, t, 0.5 * k as f64);
            assert!(m <= last);
            last = m;
        }
    }

    #[test]
    fn region_sums_add_up() {
        let sys = bubbles(1, 2, 8);
        let t = HalfPlanePoint::new(0.05, 0.01);
        let s = region_sums(&sys, t);
        let total = main_term_with_cutoff(&sys, t, 0.0);
        assert!((s.far + s.near - total).abs() <= 1e-14 * total.abs());
    }

    #[test]
    fn remainder_bound_examples() {
        let zero = RemainderNorms { grad_ld: Some(0.0), linf: 0.0 };
        let t = HalfPlanePoint::new(0.5, 0.25);
        assert_eq!(remainder_bounds(zero, 3, t).unwrap(), (0.0, 0.0));
        let n = RemainderNorms { grad_ld: Some(3.0), linf: 2.0 };
        let (b1, b2) = remainder_bounds(n, 3, HalfPlanePoint::new(0.3, 0.3)).unwrap();
        assert_eq!(b1, 2.0);
        assert_eq!(b2, b1);
        assert!(matches!(
            remainder_bounds(n, 3, HalfPlanePoint::new(0.1, 0.3)),
            Err(LabError::Precondition(_))
        ));
        assert!(remainder_bounds(n, 3, HalfPlanePoint::new(0.1, 0.0)).is_err());
    }

    #[test]
    fn zero_data_is_degenerate() {
        let mut sys = bubbles(1, 1, 8);
        for p in &mut sys.particles {
            p.xi = 0.0;
        }
        let norms = RemainderNorms { grad_ld: Some(0.0), linf: 0.0 };
        let targets = [HalfPlanePoint::new(0.3, 0.1)];
        let out = verify_key_lemma(&sys, &targets, &KernelConfig::default(), norms).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.reports[0].main_term, 0.0);
        assert_eq!(out.max_ratio_r, 0.0);
    }

    #[test]
    fn verify_rejects_targets_outside_wedge() {
        let sys = bubbles(1, 1, 8);
        let norms = RemainderNorms { grad_ld: None, linf: 1.0 };
        let bad = [HalfPlanePoint::new(0.1, 0.2)];
        assert!(verify_key_lemma(&sys, &bad, &KernelConfig::default(), norms).is_err());
    }

    #[test]
    fn origin_limits_need_positive_step() {
        let sys = bubbles(1, 1, 8);
        assert!(origin_limit_identities(&sys, &KernelConfig::default(), 0.0).is_err());
    }
}
