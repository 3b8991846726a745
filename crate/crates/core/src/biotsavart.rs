//! Axisymmetric Biot–Savart velocity for `d = 3` by direct summation over
//! vortex rings.
//!
//! Each particle is a vortex ring of strength `γ = w ξ ρ` (meridian area times
//! vorticity times radius). Its velocity at `(r, z)` is
//!
//! ```text
//! u_r = -(1/4π) γ (z - ζ) J1,        u_d = (1/4π) γ (r J1 - ρ J0),
//! J0  = ∮ (A - B cos θ)^{-3/2} dθ,   J1  = ∮ cos θ (A - B cos θ)^{-3/2} dθ,
//! A   = r² + ρ² + (z - ζ)² + δ²,     B   = 2 r ρ,
//! ```
//!
//! where `δ` is the blob radius. The azimuthal integrals are taken either in
//! closed form or by the periodic trapezoid rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{GridSpec, GriddedField, HalfPlanePoint, ParticleSystem};
use crate::scalar::Real;
use crate::special::ring_integrals;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AzimuthalRule {
    /// Closed form through complete elliptic integrals.
    Elliptic,
    /// `n_theta`-point periodic trapezoid rule.
    Trapezoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Desingularization<T> {
    /// The same `δ` for every source.
    Fixed(T),
    /// `δ_i = factor × (initial meridian cell size of particle i)`.
    LocalSpacing(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelConfig<T> {
    pub n_theta: usize,
    pub delta: Desingularization<T>,
    pub rule: AzimuthalRule,
}

impl<T: Real> Default for KernelConfig<T> {
    fn default() -> Self {
        Self {
            n_theta: 256,
            delta: Desingularization::LocalSpacing(T::lit(0.5)),
            rule: AzimuthalRule::Elliptic,
        }
    }
}

impl<T: Real> KernelConfig<T> {
    pub fn trapezoid(n_theta: usize) -> Self {
        Self { n_theta, rule: AzimuthalRule::Trapezoid, ..Self::default() }
    }

    pub fn with_delta(mut self, delta: Desingularization<T>) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rule == AzimuthalRule::Trapezoid && (self.n_theta < 16 || self.n_theta % 2 != 0) {
            return Err(LabError::Config(format!(
                "n_theta must be even and >= 16, got {}",
                self.n_theta
            )));
        }
        let d = match self.delta {
            Desingularization::Fixed(d) | Desingularization::LocalSpacing(d) => d,
        };
        if !(d >= T::zero()) {
            return Err(LabError::Config(format!("blob parameter must be >= 0, got {d}")));
        }
        Ok(())
    }
}

/// Ring sources in structure-of-arrays layout, vorticity-free particles dropped.
struct Sources<T> {
    rho: Vec<T>,
    zeta: Vec<T>,
    gamma: Vec<T>,
    delta2: Vec<T>,
}

impl<T: Real> Sources<T> {
    fn new(system: &ParticleSystem<T>, cfg: &KernelConfig<T>) -> Result<Self> {
        system.ctx.require_three()?;
        cfg.validate()?;
        let ctx = &system.ctx;
        let power = ctx.stretch_power();
        let mut s = Sources { rho: vec![], zeta: vec![], gamma: vec![], delta2: vec![] };
        for p in system.particles.iter().filter(|p| p.xi != T::zero()) {
            let rho = p.current.r;
            s.rho.push(rho);
            s.zeta.push(p.current.z);
            s.gamma.push(p.weight * p.xi * rho);
            let delta = match cfg.delta {
                Desingularization::Fixed(d) => d,
                Desingularization::LocalSpacing(f) => {
                    f * (p.weight / p.initial.r.powi(power)).sqrt()
                }
            };
            s.delta2.push(delta * delta);
        }
        Ok(s)
    }
}

struct Quadrature<T> {
    rule: AzimuthalRule,
    /// `(cos θ_k, weight_k)` over the half period, using the cosine symmetry.
    nodes: Vec<(T, T)>,
}

impl<T: Real> Quadrature<T> {
    fn new(cfg: &KernelConfig<T>) -> Self {
        let nodes = if cfg.rule == AzimuthalRule::Trapezoid {
            let n = cfg.n_theta;
            let h = T::TAU() / T::from_usize_lossy(n);
            (0..=n / 2)
                .map(|k| {
                    let c = (h * T::from_usize_lossy(k)).cos();
                    let w = if k == 0 || k == n / 2 { h } else { h + h };
                    (c, w)
                })
                .collect()
        } else {
            Vec::new()
        };
        Self { rule: cfg.rule, nodes }
    }

    #[inline]
    fn integrals(&self, a: T, b: T, q: T) -> (T, T) {
        match self.rule {
            AzimuthalRule::Elliptic => ring_integrals(a, b, q),
            AzimuthalRule::Trapezoid => {
                let mut j0 = T::zero();
                let mut j1 = T::zero();
                for &(c, w) in &self.nodes {
                    let s = a - b * c;
                    let v = w / (s * s.sqrt());
                    j0 += v;
                    j1 += c * v;
                }
                (j0, j1)
            }
        }
    }
}

#[inline]
fn evaluate<T: Real>(src: &Sources<T>, quad: &Quadrature<T>, target: HalfPlanePoint<T>) -> (T, T) {
    let (r, z) = (target.r, target.z);
    let r2 = r * r;
    let mut ur = T::zero();
    let mut ud = T::zero();
    for i in 0..src.rho.len() {
        let rho = src.rho[i];
        let dz = z - src.zeta[i];
        let dz2d = dz * dz + src.delta2[i];
        let dr = r - rho;
        let q = dr * dr + dz2d;
        if q == T::zero() {
            // point source evaluated on itself
            continue;
        }
        let a = r2 + rho * rho + dz2d;
        let b = (r + r) * rho;
        let (j0, j1) = quad.integrals(a, b, q);
        let g = src.gamma[i];
        ur -= g * dz * j1;
        ud += g * (r * j1 - rho * j0);
    }
    let inv4pi = (T::lit(4.0) * T::PI()).recip();
    if r == T::zero() {
        ur = T::zero();
    }
    (ur * inv4pi, ud * inv4pi)
}

/// Velocity `(u_r, u_d)` induced by the particle system at `target`.
pub fn velocity_at<T: Real>(
    system: &ParticleSystem<T>,
    target: HalfPlanePoint<T>,
    cfg: &KernelConfig<T>,
) -> Result<(T, T)> {
    let src = Sources::new(system, cfg)?;
    Ok(evaluate(&src, &Quadrature::new(cfg), target))
}

/// Batched [`velocity_at`], parallel over targets. Each target's sum runs in
/// a fixed serial order, so results do not depend on the thread count.
pub fn velocity_field<T: Real>(
    system: &ParticleSystem<T>,
    targets: &[HalfPlanePoint<T>],
    cfg: &KernelConfig<T>,
) -> Result<Vec<(T, T)>> {
    let src = Sources::new(system, cfg)?;
    let quad = Quadrature::new(cfg);
    Ok(targets.par_iter().map(|&t| evaluate(&src, &quad, t)).collect())
}

/// Result of differentiating a gridded velocity back to vorticity.
#[derive(Clone, Debug)]
pub struct CurlRoundTrip<T> {
    pub reconstructed: GriddedField<T>,
    pub reference: GriddedField<T>,
    /// Relative `L²(R³)` error of `∂_r u_d - ∂_z u_r` against the reference.
    pub relative_error: T,
    /// `‖∂_r(r u_r)/r + ∂_z u_d‖ / ‖∇u‖`, both in `L²(R³)` over the interior.
    pub divergence_ratio: T,
}

/// Bounding box `(r_lo, r_hi, z_lo, z_hi)` of the vorticity-carrying cells.
pub fn vorticity_support<T: Real>(system: &ParticleSystem<T>) -> Option<(T, T, T, T)> {
    let power = system.ctx.stretch_power();
    let mut bbox: Option<(T, T, T, T)> = None;
    for p in system.particles.iter().filter(|p| p.xi != T::zero()) {
        let half = T::lit(0.5) * (p.weight / p.initial.r.powi(power)).sqrt();
        let (r, z) = (p.current.r, p.current.z);
        bbox = Some(match bbox {
            None => (r - half, r + half, z - half, z + half),
            Some((a, b, c, d)) => (a.min(r - half), b.max(r + half), c.min(z - half), d.max(z + half)),
        });
    }
    bbox
}

/// Evaluates the velocity on `grid`, forms `∂_r u_d - ∂_z u_r` by centred
/// differences and compares with `reference` sampled on the same grid; also
/// reports the discrete divergence. The reference is the continuum field the
/// particles were sampled from.
pub fn curl_roundtrip<T: Real>(
    system: &ParticleSystem<T>,
    grid: GridSpec<T>,
    cfg: &KernelConfig<T>,
    reference: impl Fn(HalfPlanePoint<T>) -> T,
) -> Result<CurlRoundTrip<T>> {
    system.ctx.require_three()?;
    grid.validate()?;
    let (dr, dz) = (grid.dr(), grid.dz());
    if let Some((r_lo, r_hi, z_lo, z_hi)) = vorticity_support(system) {
        let two = T::lit(2.0);
        if r_lo < grid.r_min + two * dr
            || r_hi > grid.r_max - two * dr
            || z_lo < grid.z_min + two * dz
            || z_hi > grid.z_max - two * dz
        {
            return Err(LabError::Config(
                "grid must cover the vorticity support with a margin of at least 2 cells".into(),
            ));
        }
    }
    let points = grid.points();
    let vel = velocity_field(system, &points, cfg)?;
    let (nr, nz) = (grid.nr, grid.nz);
    let idx = |i: usize, j: usize| i * nz + j;
    let reference = GriddedField::from_fn(grid, reference)?;
    let mut recon = GriddedField::zeros(grid)?;
    let two = T::lit(2.0);
    let (mut err2, mut ref2, mut div2, mut grad2) = (T::zero(), T::zero(), T::zero(), T::zero());
    for i in 1..nr - 1 {
        let r = recon.r_axis[i];
        for j in 1..nz - 1 {
            let (ur_e, ud_e) = vel[idx(i + 1, j)];
            let (ur_w, ud_w) = vel[idx(i - 1, j)];
            let (ur_n, ud_n) = vel[idx(i, j + 1)];
            let (ur_s, ud_s) = vel[idx(i, j - 1)];
            let (ur_c, _) = vel[idx(i, j)];
            let dr_ud = (ud_e - ud_w) / (two * dr);
            let dz_ur = (ur_n - ur_s) / (two * dz);
            let dr_ur = (ur_e - ur_w) / (two * dr);
            let dz_ud = (ud_n - ud_s) / (two * dz);
            let w = dr_ud - dz_ur;
            recon.values[idx(i, j)] = w;
            let e = w - reference.at(i, j);
            err2 += r * e * e;
            ref2 += r * reference.at(i, j) * reference.at(i, j);
            let div = dr_ur + ur_c / r + dz_ud;
            div2 += r * div * div;
            let hoop = ur_c / r;
            grad2 += r * (dr_ur * dr_ur + dz_ur * dz_ur + dr_ud * dr_ud + dz_ud * dz_ud + hoop * hoop);
        }
    }
    let relative_error = if ref2 > T::zero() {
        (err2 / ref2).sqrt()
    } else if err2 > T::zero() {
        T::infinity()
    } else {
        T::zero()
    };
    let divergence_ratio = if grad2 > T::zero() { (div2 / grad2).sqrt() } else { T::zero() };
    Ok(CurlRoundTrip { reconstructed: recon, reference, relative_error, divergence_ratio })
}
