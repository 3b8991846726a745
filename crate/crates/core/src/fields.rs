//! Core domain types: meridian coordinates, dimension constants, vortex
//! particles, particle systems and gridded meridian fields.

use std::ops::Range;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::scalar::Real;
use crate::special::gamma_half_integer;

/// A point `(r, z)` of the meridian half-plane, `r = |x_h|`, `z = x_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HalfPlanePoint<T> {
    pub r: T,
    pub z: T,
}

impl<T: Real> HalfPlanePoint<T> {
    /// Panics if `r` is negative or NaN; see [`HalfPlanePoint::try_new`].
    pub fn new(r: T, z: T) -> Self {
        Self::try_new(r, z).expect("meridian point requires r >= 0")
    }

    pub fn try_new(r: T, z: T) -> Result<Self> {
        if !(r >= T::zero()) || !z.is_finite() {
            return Err(LabError::Precondition(format!(
                "meridian point requires finite z and r >= 0, got ({r}, {z})"
            )));
        }
        Ok(Self { r, z })
    }

    /// `|x|` of the corresponding point of `R^d`.
    pub fn norm(&self) -> T {
        self.r.hypot(self.z)
    }

    pub fn mirrored(&self) -> Self {
        Self { r: self.r, z: -self.z }
    }
}

/// Dimension `d` together with `|B_d|` and the measure `σ_{d-2}` of the unit
/// `(d-2)`-sphere that turns meridian integrals into integrals over `R^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DimensionContext<T> {
    pub d: u32,
    pub ball_volume: T,
    pub sphere_area: T,
}

impl<T: Real> DimensionContext<T> {
    pub fn new(d: u32) -> Result<Self> {
        if d < 3 {
            return Err(LabError::Config(format!("dimension must be >= 3, got {d}")));
        }
        let pi = std::f64::consts::PI;
        let ball = pi.powf(d as f64 / 2.0) / gamma_half_integer(d + 2);
        let sphere = 2.0 * pi.powf((d as f64 - 1.0) / 2.0) / gamma_half_integer(d - 1);
        Ok(Self {
            d,
            ball_volume: T::lit(ball),
            sphere_area: T::lit(sphere),
        })
    }

    pub fn three() -> Self {
        Self::new(3).expect("d = 3 is valid")
    }

    /// `d - 2` as an exponent.
    pub fn stretch_power(&self) -> i32 {
        self.d as i32 - 2
    }

    pub fn require_three(&self) -> Result<()> {
        if self.d == 3 {
            Ok(())
        } else {
            Err(LabError::UnsupportedDimension(self.d))
        }
    }
}

/// Lagrangian marker. `xi = ω₀/r₀^{d-2}` is transported unchanged, and
/// `weight = r₀^{d-2} Δr Δz` is the frozen meridian quadrature weight, so
/// that `σ_{d-2} · weight` is the particle's `d`-volume at every time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VortexParticle<T> {
    pub initial: HalfPlanePoint<T>,
    pub current: HalfPlanePoint<T>,
    pub xi: T,
    pub weight: T,
}

impl<T: Real> VortexParticle<T> {
    pub fn vorticity(&self, ctx: &DimensionContext<T>) -> T {
        self.xi * self.current.r.powi(ctx.stretch_power())
    }

    /// Current meridian area `weight / current.r^{d-2}`.
    pub fn meridian_area(&self, ctx: &DimensionContext<T>) -> T {
        self.weight / self.current.r.powi(ctx.stretch_power())
    }
}

/// Index range of the particles sampled from the bubble `Ω_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BubbleRange {
    pub n: u32,
    pub range: Range<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem<T> {
    pub ctx: DimensionContext<T>,
    pub particles: Vec<VortexParticle<T>>,
    pub bubble_ranges: Vec<BubbleRange>,
    pub time: T,
}

impl<T: Real> ParticleSystem<T> {
    pub fn new(
        ctx: DimensionContext<T>,
        particles: Vec<VortexParticle<T>>,
        bubble_ranges: Vec<BubbleRange>,
    ) -> Result<Self> {
        let system = Self {
            ctx,
            particles,
            bubble_ranges,
            time: T::zero(),
        };
        system.validate()?;
        Ok(system)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Checks that bubble ranges are disjoint, in bounds, and cover every
    /// particle carrying vorticity; and that weights and positions are sane.
    pub fn validate(&self) -> Result<()> {
        let n = self.particles.len();
        let mut owner = vec![false; n];
        for b in &self.bubble_ranges {
            if b.range.end > n || b.range.start > b.range.end {
                return Err(LabError::Precondition(format!(
                    "bubble {} range {:?} out of bounds for {n} particles",
                    b.n, b.range
                )));
            }
            for i in b.range.clone() {
                if owner[i] {
                    return Err(LabError::Precondition(format!(
                        "particle {i} belongs to more than one bubble"
                    )));
                }
                owner[i] = true;
            }
        }
        for (i, p) in self.particles.iter().enumerate() {
            if !(p.weight > T::zero()) {
                return Err(LabError::Precondition(format!("particle {i} has weight {}", p.weight)));
            }
            if !p.xi.is_finite() || !p.current.r.is_finite() || !p.current.z.is_finite() {
                return Err(LabError::Numerical(format!("particle {i} is not finite")));
            }
            if p.xi != T::zero() {
                if !owner[i] {
                    return Err(LabError::Precondition(format!(
                        "particle {i} carries vorticity but belongs to no bubble"
                    )));
                }
                if !(p.current.r > T::zero()) {
                    return Err(LabError::Precondition(format!(
                        "particle {i} carries vorticity on the axis"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn bubble(&self, n: u32) -> Result<&BubbleRange> {
        self.bubble_ranges
            .iter()
            .find(|b| b.n == n)
            .ok_or(LabError::UnknownBubble(n))
    }

    /// Copy with every density negated (`ω -> -ω`).
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.particles {
            p.xi = -p.xi;
        }
        out
    }

    /// Copy reflected through `z = 0` with densities negated, which maps an
    /// odd-in-`z` system onto itself.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.particles {
            p.initial = p.initial.mirrored();
            p.current = p.current.mirrored();
            p.xi = -p.xi;
        }
        out
    }

    /// Concatenates two systems of the same dimension. Bubble ranges of
    /// `other` are shifted; bubble indices must not collide.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if self.ctx.d != other.ctx.d {
            return Err(LabError::Config("cannot merge systems of different dimension".into()));
        }
        let offset = self.particles.len();
        let mut particles = self.particles.clone();
        particles.extend_from_slice(&other.particles);
        let mut ranges = self.bubble_ranges.clone();
        for b in &other.bubble_ranges {
            if ranges.iter().any(|a| a.n == b.n) {
                return Err(LabError::Config(format!("bubble {} present in both systems", b.n)));
            }
            ranges.push(BubbleRange {
                n: b.n,
                range: (b.range.start + offset)..(b.range.end + offset),
            });
        }
        ParticleSystem::new(self.ctx, particles, ranges)
    }
}

/// `ω_i = xi_i · (current.r_i)^{d-2}` for every particle.
pub fn reconstruct_vorticity<T: Real>(system: &ParticleSystem<T>) -> Vec<T> {
    system
        .particles
        .iter()
        .map(|p| p.vorticity(&system.ctx))
        .collect()
}

/// Discrete `∫_{R^d} f dy = σ_{d-2} Σ f_i w_i` for an axisymmetric `f`
/// sampled at the particles.
pub fn integrate_meridian<T: Real>(system: &ParticleSystem<T>, f: &[T]) -> Result<T> {
    if f.len() != system.particles.len() {
        return Err(LabError::LengthMismatch {
            expected: system.particles.len(),
            got: f.len(),
        });
    }
    let sum: T = system
        .particles
        .iter()
        .zip(f)
        .map(|(p, &v)| v * p.weight)
        .sum();
    Ok(system.ctx.sphere_area * sum)
}

/// Uniform rectangular sampling layout of the meridian half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec<T> {
    pub r_min: T,
    pub r_max: T,
    pub nr: usize,
    pub z_min: T,
    pub z_max: T,
    pub nz: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(r_min: T, r_max: T, nr: usize, z_min: T, z_max: T, nz: usize) -> Result<Self> {
        let spec = Self { r_min, r_max, nr, z_min, z_max, nz };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nr < 2 || self.nz < 2 {
            return Err(LabError::Config("grid needs at least 2 samples per axis".into()));
        }
        if !(self.r_min >= T::zero()) || !(self.r_max > self.r_min) || !(self.z_max > self.z_min) {
            return Err(LabError::Config(format!(
                "grid bounds must be increasing with r_min >= 0: r [{}, {}], z [{}, {}]",
                self.r_min, self.r_max, self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    pub fn dr(&self) -> T {
        (self.r_max - self.r_min) / T::from_usize_lossy(self.nr - 1)
    }

    pub fn dz(&self) -> T {
        (self.z_max - self.z_min) / T::from_usize_lossy(self.nz - 1)
    }

    pub fn r_at(&self, i: usize) -> T {
        self.r_min + self.dr() * T::from_usize_lossy(i)
    }

    pub fn z_at(&self, j: usize) -> T {
        self.z_min + self.dz() * T::from_usize_lossy(j)
    }

    /// All grid nodes in row-major order (`r` slow, `z` fast).
    pub fn points(&self) -> Vec<HalfPlanePoint<T>> {
        let mut out = Vec::with_capacity(self.nr * self.nz);
        for i in 0..self.nr {
            let r = self.r_at(i);
            for j in 0..self.nz {
                out.push(HalfPlanePoint { r, z: self.z_at(j) });
            }
        }
        out
    }
}

/// Scalar field sampled on a [`GridSpec`], stored row-major with `r` slow.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedField<T> {
    pub spec: GridSpec<T>,
    pub r_axis: Vec<T>,
    pub z_axis: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> GriddedField<T> {
    pub fn zeros(spec: GridSpec<T>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            r_axis: (0..spec.nr).map(|i| spec.r_at(i)).collect(),
            z_axis: (0..spec.nz).map(|j| spec.z_at(j)).collect(),
            values: vec![T::zero(); spec.nr * spec.nz],
            spec,
        })
    }

    pub fn from_fn(spec: GridSpec<T>, f: impl Fn(HalfPlanePoint<T>) -> T) -> Result<Self> {
        let mut field = Self::zeros(spec)?;
        for i in 0..spec.nr {
            for j in 0..spec.nz {
                let p = HalfPlanePoint { r: field.r_axis[i], z: field.z_axis[j] };
                field.values[i * spec.nz + j] = f(p);
            }
        }
        Ok(field)
    }

    pub fn from_values(spec: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        let mut field = Self::zeros(spec)?;
        if values.len() != field.values.len() {
            return Err(LabError::LengthMismatch { expected: field.values.len(), got: values.len() });
        }
        field.values = values;
        Ok(field)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.spec.nz + j]
    }

    pub fn nr(&self) -> usize {
        self.spec.nr
    }

    pub fn nz(&self) -> usize {
        self.spec.nz
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Trapezoid-rule `∫_{R^d} g(f) dx = σ ∫∫ g(f) r^{d-2} dr dz`.
    pub fn integrate_volume(&self, ctx: &DimensionContext<T>, g: impl Fn(T) -> T) -> T {
        let (nr, nz) = (self.nr(), self.nz());
        let half = T::lit(0.5);
        let mut sum = T::zero();
        for i in 0..nr {
            let wr = if i == 0 || i + 1 == nr { half } else { T::one() };
            let jac = self.r_axis[i].powi(ctx.stretch_power());
            let mut row = T::zero();
            for j in 0..nz {
                let wz = if j == 0 || j + 1 == nz { half } else { T::one() };
                row += wz * g(self.at(i, j));
            }
            sum += wr * jac * row;
        }
        ctx.sphere_area * sum * self.spec.dr() * self.spec.dz()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dimension_constants() {
        let c3 = DimensionContext::<f64>::new(3).unwrap();
        assert_relative_eq!(c3.ball_volume, 4.0 * std::f64::consts::PI / 3.0, max_relative = 1e-14);
        assert_relative_eq!(c3.sphere_area, 2.0 * std::f64::consts::PI, max_relative = 1e-14);
        let c4 = DimensionContext::<f64>::new(4).unwrap();
        assert_relative_eq!(c4.ball_volume, std::f64::consts::PI.powi(2) / 2.0, max_relative = 1e-14);
        assert_relative_eq!(c4.sphere_area, 4.0 * std::f64::consts::PI, max_relative = 1e-14);
        let c5 = DimensionContext::<f64>::new(5).unwrap();
        assert_relative_eq!(c5.ball_volume, 8.0 * std::f64::consts::PI.powi(2) / 15.0, max_relative = 1e-14);
        assert_relative_eq!(c5.sphere_area, 2.0 * std::f64::consts::PI.powi(2), max_relative = 1e-14);
        assert!(DimensionContext::<f64>::new(2).is_err());
    }

    fn particle(r: f64, z: f64, xi: f64) -> VortexParticle<f64> {
        let p = HalfPlanePoint::new(r, z);
        VortexParticle { initial: p, current: p, xi, weight: 1e-3 }
    }

    #[test]
    fn reconstruct_examples() {
        let ctx = DimensionContext::three();
        let sys = ParticleSystem::new(
            ctx,
            vec![particle(1.0, 0.1, 0.0), particle(0.5, 0.1, 2.0)],
            vec![BubbleRange { n: 1, range: 0..2 }],
        )
        .unwrap();
        assert_eq!(reconstruct_vorticity(&sys), vec![0.0, 1.0]);
    }

    #[test]
    fn integrate_zero_and_mismatch() {
        let ctx = DimensionContext::three();
        let sys = ParticleSystem::new(ctx, vec![particle(1.0, 0.0, 0.0)], vec![]).unwrap();
        assert_eq!(integrate_meridian(&sys, &[0.0]).unwrap(), 0.0);
        assert!(matches!(
            integrate_meridian(&sys, &[0.0, 1.0]),
            Err(LabError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn validation_rejects_orphans_and_overlaps() {
        let ctx = DimensionContext::three();
        let ps = vec![particle(1.0, 0.1, 1.0), particle(1.0, 0.2, 1.0)];
        assert!(ParticleSystem::new(ctx, ps.clone(), vec![BubbleRange { n: 1, range: 0..1 }]).is_err());
        assert!(ParticleSystem::new(
            ctx,
            ps.clone(),
            vec![BubbleRange { n: 1, range: 0..2 }, BubbleRange { n: 2, range: 1..2 }]
        )
        .is_err());
        assert!(ParticleSystem::new(ctx, ps, vec![BubbleRange { n: 1, range: 0..2 }]).is_ok());
    }

    #[test]
    fn point_rejects_negative_radius() {
        assert!(HalfPlanePoint::try_new(-1e-9, 0.0).is_err());
        assert!(HalfPlanePoint::try_new(0.0, 0.0).is_ok());
    }

    #[test]
    fn gridded_volume_of_revolution() {
        let ctx = DimensionContext::three();
        let spec = GridSpec::new(1.0, 2.0, 101, 0.0, 1.0, 11).unwrap();
        let f = GriddedField::from_fn(spec, |_| 1.0).unwrap();
        // 2π ∫_1^2 r dr = 3π, exact for the trapezoid rule on a linear integrand
        assert_relative_eq!(f.integrate_volume(&ctx, |v| v), 3.0 * std::f64::consts::PI, max_relative = 1e-12);
    }
}
