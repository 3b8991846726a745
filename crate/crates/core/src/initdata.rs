//! The multi-bubble initial vorticity and its sampling onto particles and
//! meridian grids.
//!
//! The `n`-th bubble is a `±` pair of bump functions rescaled by `8^{-n}` and
//! centred at `(8^{-n+1}, ±8^{-n})`; the data is `Σ_{n=n0}^{m} n^{-α}` times
//! the `n`-th bubble.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{
    BubbleRange, DimensionContext, GridSpec, GriddedField, HalfPlanePoint, ParticleSystem,
    VortexParticle,
};
use crate::scalar::Real;

pub const INNER_RADIUS: f64 = 1.0 / 32.0;
pub const OUTER_RADIUS: f64 = 1.0 / 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BubbleParams<T> {
    pub n0: u32,
    pub m: u32,
    pub alpha: T,
    pub inner_radius: T,
    pub outer_radius: T,
}

impl<T: Real> BubbleParams<T> {
    pub fn new(n0: u32, m: u32, alpha: T) -> Result<Self> {
        let params = Self {
            n0,
            m,
            alpha,
            inner_radius: T::lit(INNER_RADIUS),
            outer_radius: T::lit(OUTER_RADIUS),
        };
        params.validate()?;
        Ok(params)
    }

    /// `m = n0` (a single bubble) is accepted.
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 1 || self.m < self.n0 {
            return Err(LabError::Config(format!(
                "bubble indices need 1 <= n0 <= m, got n0 = {}, m = {}",
                self.n0, self.m
            )));
        }
        if !(self.alpha > T::zero() && self.alpha < T::lit(0.75)) {
            return Err(LabError::Config(format!("alpha must lie in (0, 3/4), got {}", self.alpha)));
        }
        if !(self.inner_radius > T::zero() && self.inner_radius < self.outer_radius) {
            return Err(LabError::Config("bump radii must satisfy 0 < inner < outer".into()));
        }
        Ok(())
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> {
        self.n0..=self.m
    }

    /// Amplitude `n^{-α}` of the `n`-th bubble.
    pub fn amplitude(&self, n: u32) -> T {
        T::from_u32(n).expect("u32 representable").powf(-self.alpha)
    }

    fn profile(&self) -> BumpProfile<T> {
        BumpProfile { inner: self.inner_radius, outer: self.outer_radius }
    }
}

/// Radial `C^∞` step equal to 1 inside `inner` and 0 outside `outer`.
#[derive(Clone, Copy, Debug)]
pub struct BumpProfile<T> {
    pub inner: T,
    pub outer: T,
}

impl<T: Real> Default for BumpProfile<T> {
    fn default() -> Self {
        Self { inner: T::lit(INNER_RADIUS), outer: T::lit(OUTER_RADIUS) }
    }
}

#[inline]
fn exp_neg_inv<T: Real>(t: T) -> T {
    if t > T::zero() {
        (-t.recip()).exp()
    } else {
        T::zero()
    }
}

impl<T: Real> BumpProfile<T> {
    pub fn eval(&self, x: T, y: T) -> T {
        let rho = x.hypot(y);
        if rho >= self.outer {
            return T::zero();
        }
        if rho <= self.inner {
            return T::one();
        }
        let t = (self.outer - rho) / (self.outer - self.inner);
        let a = exp_neg_inv(t);
        let b = exp_neg_inv(T::one() - t);
        a / (a + b)
    }

    /// Unweighted `n`-th bubble pair at `p`.
    pub fn bubble(&self, n: u32, p: HalfPlanePoint<T>) -> T {
        let scale = T::lit(8.0).powi(n as i32);
        let rc = scale.recip() * T::lit(8.0);
        let zc = scale.recip();
        let dr = scale * (p.r - rc);
        self.eval(dr, scale * (p.z - zc)) - self.eval(dr, scale * (p.z + zc))
    }
}

/// Bump `φ` with plateau radius 1/32 and support radius 1/8.
pub fn bump_phi<T: Real>(x: T, y: T) -> T {
    BumpProfile::default().eval(x, y)
}

/// `φ(8^n(r - 8^{-n+1}, z - 8^{-n})) - φ(8^n(r - 8^{-n+1}, z + 8^{-n}))`.
pub fn bubble_vorticity<T: Real>(n: u32, p: HalfPlanePoint<T>) -> T {
    BumpProfile::default().bubble(n, p)
}

/// `ω₀(p) = Σ_{n=n0}^{m} n^{-α} ω^{(n)}(p)`.
pub fn initial_vorticity<T: Real>(params: &BubbleParams<T>, p: HalfPlanePoint<T>) -> T {
    let profile = params.profile();
    params
        .indices()
        .map(|n| {
            let v = profile.bubble(n, p);
            if v == T::zero() {
                T::zero()
            } else {
                params.amplitude(n) * v
            }
        })
        .sum()
}

/// Geometry of the `n`-th bubble: centre of the upper disk and support radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BubbleGeometry<T> {
    pub r_center: T,
    pub z_center: T,
    pub support_radius: T,
}

impl<T: Real> BubbleGeometry<T> {
    pub fn of(params: &BubbleParams<T>, n: u32) -> Self {
        let s = T::lit(8.0).powi(-(n as i32));
        Self {
            r_center: s * T::lit(8.0),
            z_center: s,
            support_radius: s * params.outer_radius,
        }
    }

    /// Grid covering both disks of the bubble with `margin` support radii of
    /// padding on each side.
    pub fn grid(&self, nr: usize, nz: usize, margin: T) -> Result<GridSpec<T>> {
        let pad = self.support_radius * (T::one() + margin);
        GridSpec::new(
            self.r_center - pad,
            self.r_center + pad,
            nr,
            -(self.z_center + pad),
            self.z_center + pad,
            nz,
        )
    }

    /// Grid covering only the upper disk.
    pub fn upper_grid(&self, nr: usize, nz: usize, margin: T) -> Result<GridSpec<T>> {
        let pad = self.support_radius * (T::one() + margin);
        GridSpec::new(
            self.r_center - pad,
            self.r_center + pad,
            nr,
            self.z_center - pad,
            self.z_center + pad,
            nz,
        )
    }
}

/// Samples `ω₀` at cell centres of an `R × R` grid over each half-bubble's
/// bounding square (side `8^{-n}/4`).
///
/// Particle order inside a bubble range: the `R²` upper-half particles, then
/// their mirror images in the same order.
pub fn seed_particles<T: Real>(
    params: &BubbleParams<T>,
    per_bubble_resolution: usize,
    ctx: DimensionContext<T>,
) -> Result<ParticleSystem<T>> {
    params.validate()?;
    if per_bubble_resolution < 8 {
        return Err(LabError::Config(format!(
            "per-bubble resolution must be >= 8, got {per_bubble_resolution}"
        )));
    }
    let res = per_bubble_resolution;
    let profile = params.profile();
    let power = ctx.stretch_power();
    let mut particles = Vec::with_capacity(params.indices().count() * 2 * res * res);
    let mut ranges = Vec::new();
    for n in params.indices() {
        let geo = BubbleGeometry::of(params, n);
        let cell = T::lit(2.0) * geo.support_radius / T::from_usize_lossy(res);
        let area = cell * cell;
        let amp = params.amplitude(n);
        let start = particles.len();
        let mut upper = Vec::with_capacity(res * res);
        for i in 0..res {
            let r = geo.r_center - geo.support_radius + cell * (T::from_usize_lossy(i) + T::lit(0.5));
            for j in 0..res {
                let z = geo.z_center - geo.support_radius
                    + cell * (T::from_usize_lossy(j) + T::lit(0.5));
                let p = HalfPlanePoint::new(r, z);
                let w0 = amp * profile.bubble(n, p);
                let rp = r.powi(power);
                upper.push(VortexParticle { initial: p, current: p, xi: w0 / rp, weight: rp * area });
            }
        }
        let lower: Vec<_> = upper
            .iter()
            .map(|q| VortexParticle {
                initial: q.initial.mirrored(),
                current: q.current.mirrored(),
                xi: -q.xi,
                weight: q.weight,
            })
            .collect();
        particles.extend(upper);
        particles.extend(lower);
        ranges.push(BubbleRange { n, range: start..particles.len() });
    }
    ParticleSystem::new(ctx, particles, ranges)
}

/// Samples `ω₀` on a meridian grid.
pub fn sample_grid<T: Real>(params: &BubbleParams<T>, spec: GridSpec<T>) -> Result<GriddedField<T>> {
    GriddedField::from_fn(spec, |p| initial_vorticity(params, p))
}
