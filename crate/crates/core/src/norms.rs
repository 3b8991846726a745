//! Critical norms of axisymmetric vorticity fields and the one-dimensional
//! inequality checks.
//!
//! Fractional Sobolev norms use the axisymmetric structure directly instead
//! of embedding the field in a 3D box: a discrete Fourier transform in `z`
//! followed, for the horizontal frequencies, by a Hankel transform of order
//! zero in `r`. Plancherel then gives
//!
//! ```text
//! ‖Λ^s f‖² = (2π)^{-3} ∫ 2πk dk ∫ dξ_d (k² + ξ_d²)^s |f̂(k, ξ_d)|²,
//! f̂(k, ξ_d) = ∫ e^{-i ξ_d z} 2π ∫ f(r, z) J0(k r) r dr dz.
//! ```

use std::cmp::Ordering;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{DimensionContext, GridSpec, GriddedField, ParticleSystem};
use crate::initdata::BubbleParams;
use crate::scalar::Real;
use crate::special::bessel_j0;
use crate::transport::DiagnosticsFrame;

/// Lorentz quasi-norm `‖f‖_{L^{p,q}}` of a step function given by sample
/// values and the measures of the sets they occupy.
///
/// The decreasing rearrangement of such data is itself a step function, so
/// `∫ (t^{1/p} f*(t))^q dt/t` is integrated exactly. `q = ∞` gives
/// `sup_t t^{1/p} f*(t)`.
pub fn lorentz_norm<T: Real>(values: &[T], measures: &[T], p: T, q: T) -> Result<T> {
    if values.len() != measures.len() {
        return Err(LabError::LengthMismatch { expected: values.len(), got: measures.len() });
    }
    if !(p > T::one() && p.is_finite()) || !(q >= T::one()) {
        return Err(LabError::Precondition(format!("Lorentz exponents need 1 < p < ∞, q ≥ 1; got p={p}, q={q}")));
    }
    if let Some(w) = measures.iter().find(|w| !(**w > T::zero())) {
        return Err(LabError::Precondition(format!("measures must be positive, got {w}")));
    }
    let mut pairs: Vec<(T, T)> = values
        .iter()
        .zip(measures)
        .map(|(v, w)| (v.abs(), *w))
        .filter(|(v, _)| *v > T::zero())
        .collect();
    if pairs.is_empty() {
        return Ok(T::zero());
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let inv_p = p.recip();
    let mut cumulative = T::zero();
    if q.is_infinite() {
        let mut best = T::zero();
        for (v, w) in pairs {
            cumulative += w;
            best = best.max(v * cumulative.powf(inv_p));
        }
        return Ok(best);
    }
    let e = q / p;
    let mut prev = T::zero();
    let mut sum = T::zero();
    for (v, w) in pairs {
        cumulative += w;
        let next = cumulative.powf(e);
        sum += v.powf(q) * (next - prev);
        prev = next;
    }
    Ok((sum / e).powf(q.recip()))
}

/// `C` in `‖f‖_{L^{p,q2}} ≤ C ‖f‖_{L^{p,q1}}` for `q1 ≤ q2`, namely
/// `(q1/p)^{1/q1 - 1/q2}`.
pub fn lorentz_nesting_constant<T: Real>(p: T, q1: T, q2: T) -> T {
    let inv_q2 = if q2.is_infinite() { T::zero() } else { q2.recip() };
    (q1 / p).powf(q1.recip() - inv_q2)
}

/// `‖ω/r^{d-2}‖_{L^{d,q}}` over the particles; the values are the transported
/// densities `xi` and the measures the conserved particle volumes.
pub fn particle_lorentz<T: Real>(system: &ParticleSystem<T>, q: T) -> Result<T> {
    let sigma = system.ctx.sphere_area;
    let (values, measures): (Vec<T>, Vec<T>) = system
        .particles
        .iter()
        .filter(|p| p.xi != T::zero())
        .map(|p| (p.xi, sigma * p.weight))
        .unzip();
    lorentz_norm(&values, &measures, T::from_usize_lossy(system.ctx.d as usize), q)
}

/// Same as [`particle_lorentz`] restricted to one bubble, raised to the power `q`.
pub fn bubble_lorentz_power<T: Real>(system: &ParticleSystem<T>, n: u32, q: T) -> Result<T> {
    let range = system.bubble(n)?.range.clone();
    let sigma = system.ctx.sphere_area;
    let (values, measures): (Vec<T>, Vec<T>) = system.particles[range]
        .iter()
        .filter(|p| p.xi != T::zero())
        .map(|p| (p.xi, sigma * p.weight))
        .unzip();
    Ok(lorentz_norm(&values, &measures, T::from_usize_lossy(system.ctx.d as usize), q)?.powf(q))
}

/// `‖|x_d|^{-1/2} r^{-1} ω‖_{L²(R³)}` over the particles.
pub fn weighted_l2<T: Real>(system: &ParticleSystem<T>) -> Result<T> {
    system.ctx.require_three()?;
    let ctx = &system.ctx;
    let mut sum = T::zero();
    for p in system.particles.iter().filter(|p| p.xi != T::zero()) {
        let (r, z) = (p.current.r, p.current.z);
        if z == T::zero() {
            return Err(LabError::Symmetry(format!("vorticity-carrying particle on z = 0 at r = {r}")));
        }
        let w = p.vorticity(ctx);
        sum += p.weight * w * w / (z.abs() * r * r);
    }
    Ok((ctx.sphere_area * sum).sqrt())
}

/// Which frequencies carry the fractional weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// `|ξ|^s`
    Full,
    /// `|ξ_h|^s`
    Horizontal,
    /// `|ξ_d|^s`
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SobolevNorms<T> {
    pub full: T,
    pub horizontal: T,
    pub vertical: T,
}

impl<T: Real> SobolevNorms<T> {
    /// `full² / (horizontal² + vertical²)`.
    pub fn split_ratio(&self) -> T {
        let den = self.horizontal * self.horizontal + self.vertical * self.vertical;
        if den > T::zero() {
            self.full * self.full / den
        } else {
            T::zero()
        }
    }
}

/// Checks that the field vanishes on the `z` edges and the outer `r` edge
/// of its grid. With `axis_is_edge` the inner `r` edge must vanish too, even
/// at `r = 0`: the Hankel quadrature is only spectrally accurate for data
/// supported away from the axis.
fn check_support<T: Real>(field: &GriddedField<T>, axis_is_edge: bool) -> Result<()> {
    let (nr, nz) = (field.nr(), field.nz());
    let tol = field.max_abs() * T::lit(1e-10);
    let mut edge = T::zero();
    for i in 0..nr {
        edge = edge.max(field.at(i, 0).abs()).max(field.at(i, nz - 1).abs());
    }
    for j in 0..nz {
        edge = edge.max(field.at(nr - 1, j).abs());
        if axis_is_edge || field.spec.r_min > T::zero() {
            edge = edge.max(field.at(0, j).abs());
        }
    }
    if edge > tol {
        return Err(LabError::Config(format!(
            "field support touches the grid boundary (edge value {edge})"
        )));
    }
    Ok(())
}

/// `z`-transform of every `r`-row, zero-padded to at least twice the length
/// so that the frequency sampling resolves `|f̂|²`. Returns the rows and the
/// signed frequencies.
fn z_transform<T: Real>(field: &GriddedField<T>) -> (Vec<Vec<Complex<T>>>, Vec<T>) {
    let nz = field.nz();
    let len = (2 * nz).next_power_of_two();
    let dz = field.spec.dz();
    let fft = FftPlanner::new().plan_fft_forward(len);
    let rows = (0..field.nr())
        .map(|i| {
            let mut buf = vec![Complex::new(T::zero(), T::zero()); len];
            for j in 0..nz {
                buf[j] = Complex::new(field.at(i, j) * dz, T::zero());
            }
            fft.process(&mut buf);
            buf
        })
        .collect();
    let dxi = T::TAU() / (T::from_usize_lossy(len) * dz);
    let freqs = (0..len)
        .map(|j| {
            let signed = if j <= len / 2 { j as f64 } else { j as f64 - len as f64 };
            dxi * T::lit(signed)
        })
        .collect();
    (rows, freqs)
}

fn vertical_from_rows<T: Real>(
    field: &GriddedField<T>,
    ctx: &DimensionContext<T>,
    rows: &[Vec<Complex<T>>],
    freqs: &[T],
    s: T,
) -> T {
    let weights: Vec<T> = freqs.iter().map(|x| x.abs().powf(s + s)).collect();
    let mut sum = T::zero();
    for (i, row) in rows.iter().enumerate() {
        let jac = field.r_axis[i].powi(ctx.stretch_power());
        let line: T = row.iter().zip(&weights).map(|(c, w)| *w * c.norm_sqr()).sum();
        sum += jac * line;
    }
    ctx.sphere_area * field.spec.dr() * sum * freqs[1] / T::TAU()
}

/// `‖Λ_d^{s} f‖²` for any `d ≥ 3`. Only a `z`-transform is needed, and rows
/// at different `r` stay orthogonal.
pub fn vertical_sobolev_squared<T: Real>(field: &GriddedField<T>, ctx: &DimensionContext<T>, s: T) -> Result<T> {
    check_support(field, false)?;
    let (rows, freqs) = z_transform(field);
    Ok(vertical_from_rows(field, ctx, &rows, &freqs, s))
}

/// All three `Λ^s` norms of an axisymmetric field on `R³`.
///
/// The `k` integral uses the midpoint rule, whose leading error is set by
/// the slope of the integrand at `k = 0`. Only the `|ξ_d|^{2s}` part has a
/// non-zero slope there, so it is taken from the `z`-transform alone and the
/// Hankel sum only carries `(k² + ξ_d²)^s - |ξ_d|^{2s}` and `k^{2s}`.
pub fn sobolev_norms<T: Real>(field: &GriddedField<T>, ctx: &DimensionContext<T>, s: T) -> Result<SobolevNorms<T>> {
    ctx.require_three()?;
    check_support(field, true)?;
    let (rows, freqs) = z_transform(field);
    let vertical = vertical_from_rows(field, ctx, &rows, &freqs, s);
    let dxi = freqs[1];
    let spec = field.spec;
    let dr = spec.dr();
    // |f̂|² varies on the scale 1/r_max in k; the r sampling bounds k by π/dr
    let dk = T::PI() / (T::lit(4.0) * spec.r_max);
    let n_k = ((T::PI() / dr) / dk).ceil().to_f64_lossy() as usize;
    let r_weights: Vec<T> = field.r_axis.iter().map(|&r| T::TAU() * r * dr).collect();
    let two_s = s + s;
    let xi_weights: Vec<T> = freqs.iter().map(|x| x.abs().powf(two_s)).collect();
    let per_k: Vec<(T, T)> = (0..n_k)
        .into_par_iter()
        .map(|l| {
            let k = dk * (T::from_usize_lossy(l) + T::lit(0.5));
            let kernel: Vec<T> = field
                .r_axis
                .iter()
                .zip(&r_weights)
                .map(|(&r, &w)| w * bessel_j0(k * r))
                .collect();
            let (mut excess, mut horiz) = (T::zero(), T::zero());
            for (j, &xi) in freqs.iter().enumerate() {
                let mut acc = Complex::new(T::zero(), T::zero());
                for (row, &w) in rows.iter().zip(&kernel) {
                    acc = acc + row[j] * w;
                }
                let power = acc.norm_sqr();
                excess += ((k * k + xi * xi).powf(s) - xi_weights[j]) * power;
                horiz += k.powf(two_s) * power;
            }
            let measure = T::TAU() * k * dk;
            (measure * excess, measure * horiz)
        })
        .collect();
    let scale = dxi / T::TAU().powi(3);
    let (mut excess, mut horiz) = (T::zero(), T::zero());
    for (a, b) in per_k {
        excess += a;
        horiz += b;
    }
    Ok(SobolevNorms {
        full: (excess * scale + vertical).sqrt(),
        horizontal: (horiz * scale).sqrt(),
        vertical: vertical.sqrt(),
    })
}

/// One of the three norms; see [`sobolev_norms`] and [`vertical_sobolev_squared`].
pub fn sobolev_norm<T: Real>(field: &GriddedField<T>, ctx: &DimensionContext<T>, s: T, dir: Direction) -> Result<T> {
    match dir {
        Direction::Vertical => Ok(vertical_sobolev_squared(field, ctx, s)?.sqrt()),
        Direction::Full => Ok(sobolev_norms(field, ctx, s)?.full),
        Direction::Horizontal => Ok(sobolev_norms(field, ctx, s)?.horizontal),
    }
}

/// `‖∇f‖_{L^d(R^d)}` from centred differences (one-sided on the edges).
pub fn grad_ld_norm<T: Real>(field: &GriddedField<T>, ctx: &DimensionContext<T>) -> T {
    let (nr, nz) = (field.nr(), field.nz());
    let (dr, dz) = (field.spec.dr(), field.spec.dz());
    let diff = |lo: T, hi: T, steps: usize, h: T| (hi - lo) / (T::from_usize_lossy(steps) * h);
    let dd = T::from_usize_lossy(ctx.d as usize);
    let values: Vec<T> = (0..nr * nz)
        .map(|idx| {
            let (i, j) = (idx / nz, idx % nz);
            let (i0, i1) = (i.saturating_sub(1), (i + 1).min(nr - 1));
            let (j0, j1) = (j.saturating_sub(1), (j + 1).min(nz - 1));
            let gr = diff(field.at(i0, j), field.at(i1, j), i1 - i0, dr);
            let gz = diff(field.at(i, j0), field.at(i, j1), j1 - j0, dz);
            (gr * gr + gz * gz).sqrt()
        })
        .collect();
    let grad = GriddedField { values, ..field.clone() };
    grad.integrate_volume(ctx, |g| g.powf(dd)).powf(dd.recip())
}

/// Both sides of the Gagliardo–Nirenberg bound `‖∇ω‖_{L^d} ≤ C ‖Λ^{d/2} ω‖_{L²}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GnCheck<T> {
    pub grad_ld: T,
    pub lambda_half_d: T,
}

impl<T: Real> GnCheck<T> {
    pub fn ratio(&self) -> T {
        if self.lambda_half_d > T::zero() {
            self.grad_ld / self.lambda_half_d
        } else {
            T::zero()
        }
    }
}

pub fn gn_check<T: Real>(field: &GriddedField<T>, ctx: &DimensionContext<T>) -> Result<GnCheck<T>> {
    let s = T::from_usize_lossy(ctx.d as usize) * T::lit(0.5);
    let lambda_half_d = sobolev_norms(field, ctx, s)?.full;
    Ok(GnCheck { grad_ld: grad_ld_norm(field, ctx), lambda_half_d })
}

/// Gagliardo–Nirenberg check for a sum of bubbles with disjoint supports, one
/// field per bubble. `‖∇ω‖_{L^d}^d` adds up exactly. The vertical part of
/// `Λ^{d/2}` is orthogonal across disjoint `r`-supports, so its sum bounds
/// `‖Λ^{d/2} ω‖²` from below and the reported ratio from above.
pub fn gn_check_bubbles<T: Real>(fields: &[GriddedField<T>], ctx: &DimensionContext<T>) -> Result<GnCheck<T>> {
    let dd = T::from_usize_lossy(ctx.d as usize);
    let s = dd * T::lit(0.5);
    let mut grad = T::zero();
    let mut lambda = T::zero();
    for f in fields {
        grad += grad_ld_norm(f, ctx).powf(dd);
        lambda += vertical_sobolev_squared(f, ctx, s)?;
    }
    Ok(GnCheck { grad_ld: grad.powf(dd.recip()), lambda_half_d: lambda.sqrt() })
}

/// Hardy's inequality on `(0, 1)`: `‖f/x‖_{L^p} ≤ p/(p-1) ‖f'‖_{L^p}` for
/// `f(0) = 0`.
///
/// `f` is taken as the piecewise-linear interpolant of `(xs, fs)` with the
/// extra node `(0, 0)`. Its derivative is exact cellwise, and `f/x` is
/// integrated by 4-point Gauss–Legendre on each cell, so graded meshes
/// resolve singular behaviour at the origin.
pub fn hardy_check<T: Real>(xs: &[T], fs: &[T], p: T) -> Result<(T, T)> {
    if !(p > T::one()) {
        return Err(LabError::Precondition(format!("Hardy's inequality needs p > 1, got {p}")));
    }
    if xs.len() != fs.len() {
        return Err(LabError::LengthMismatch { expected: xs.len(), got: fs.len() });
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.first().is_some_and(|x| !(*x > T::zero())) {
        return Err(LabError::Precondition("nodes must be increasing and positive".into()));
    }
    const GAUSS: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let mut lhs = T::zero();
    let mut rhs = T::zero();
    let (mut x0, mut f0) = (T::zero(), T::zero());
    for (&x1, &f1) in xs.iter().zip(fs) {
        let h = x1 - x0;
        let slope = (f1 - f0) / h;
        rhs += h * slope.abs().powf(p);
        let half = T::lit(0.5) * h;
        let mid = x0 + half;
        for (node, weight) in GAUSS {
            let x = mid + half * T::lit(node);
            let f = f0 + slope * (x - x0);
            lhs += half * T::lit(weight) * (f / x).abs().powf(p);
        }
        x0 = x1;
        f0 = f1;
    }
    Ok((lhs.powf(p.recip()), rhs.powf(p.recip())))
}

/// `Σ_n (inf Φʳ/r)^{2(d-2)} (inf x_d/Φᵈ)^d n^{-2α}` over the bubbles of a frame.
pub fn lower_bound_functional<T: Real>(frame: &DiagnosticsFrame<T>, params: &BubbleParams<T>, d: u32) -> T {
    let pr = 2 * (d as i32 - 2);
    frame
        .bubbles
        .iter()
        .map(|b| {
            let a = params.amplitude(b.n);
            b.r_ratio_inf.powi(pr) * b.z_ratio_inf.powi(d as i32) * a * a
        })
        .sum()
}

/// Snapshot of the norms of `ω` at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport<T> {
    pub time: T,
    pub l1: T,
    pub l2: T,
    pub linf: T,
    pub sobolev_half_d: Option<T>,
    pub sobolev_dir_h: Option<T>,
    pub sobolev_dir_d: Option<T>,
    /// `(q, ‖ω/r^{d-2}‖_{L^{d,q}})`; `q = ∞` is written as `null` in JSON.
    pub lorentz: Vec<(Option<T>, T)>,
    pub weighted: Option<T>,
}

impl<T: Real> NormReport<T> {
    /// Particle-based entries; the Sobolev fields are left for the caller.
    pub fn from_particles(system: &ParticleSystem<T>, qs: &[T]) -> Result<Self> {
        let ctx = &system.ctx;
        let (mut l1, mut l2, mut linf) = (T::zero(), T::zero(), T::zero());
        for p in &system.particles {
            let w = p.vorticity(ctx);
            l1 += p.weight * w.abs();
            l2 += p.weight * w * w;
            linf = linf.max(w.abs());
        }
        let lorentz = qs
            .iter()
            .map(|&q| Ok((q.is_finite().then_some(q), particle_lorentz(system, q)?)))
            .collect::<Result<_>>()?;
        let weighted = if ctx.d == 3 { Some(weighted_l2(system)?) } else { None };
        Ok(Self {
            time: system.time,
            l1: ctx.sphere_area * l1,
            l2: (ctx.sphere_area * l2).sqrt(),
            linf,
            sobolev_half_d: None,
            sobolev_dir_h: None,
            sobolev_dir_d: None,
            lorentz,
            weighted,
        })
    }

    pub fn with_sobolev(mut self, s: SobolevNorms<T>) -> Self {
        self.sobolev_half_d = Some(s.full);
        self.sobolev_dir_h = Some(s.horizontal);
        self.sobolev_dir_d = Some(s.vertical);
        self
    }
}

/// Wendland C2 weight on `q = dist / radius`.
fn wendland(q: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else {
        (1.0 - q).powi(4) * (4.0 * q + 1.0)
    }
}

/// Particles binned on a square cell grid for radius queries.
struct CellList {
    size: f64,
    origin: (f64, f64),
    cols: usize,
    rows: usize,
    cells: Vec<Vec<usize>>,
}

impl CellList {
    fn new(points: &[(f64, f64)], size: f64) -> Self {
        let r0 = points.iter().map(|p| p.0).fold(f64::MAX, f64::min);
        let z0 = points.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        let r1 = points.iter().map(|p| p.0).fold(f64::MIN, f64::max);
        let z1 = points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        let cols = ((r1 - r0) / size).floor() as usize + 1;
        let rows = ((z1 - z0) / size).floor() as usize + 1;
        let mut cells = vec![Vec::new(); cols * rows];
        for (k, p) in points.iter().enumerate() {
            let a = ((p.0 - r0) / size) as usize;
            let b = ((p.1 - z0) / size) as usize;
            cells[a.min(cols - 1) * rows + b.min(rows - 1)].push(k);
        }
        Self { size, origin: (r0, z0), cols, rows, cells }
    }

    fn near(&self, r: f64, z: f64, mut visit: impl FnMut(usize)) {
        let a = ((r - self.origin.0) / self.size).floor() as i64;
        let b = ((z - self.origin.1) / self.size).floor() as i64;
        for i in (a - 1).max(0)..=(a + 1).min(self.cols as i64 - 1) {
            for j in (b - 1).max(0)..=(b + 1).min(self.rows as i64 - 1) {
                self.cells[i as usize * self.rows + j as usize].iter().for_each(|&k| visit(k));
            }
        }
    }
}

/// Weighted least-squares value at the origin of the local frame, from samples
/// `(x, y, f, w)` with coordinates already scaled to the fit radius. A small
/// fixed ridge keeps the quadratic fit well posed and smooth in the query
/// point where few samples are in range; with none it returns zero.
fn local_fit(samples: &[(f64, f64, f64, f64)]) -> f64 {
    const RIDGE: f64 = 1e-3;
    let mut a = nalgebra::SMatrix::<f64, 6, 6>::identity() * RIDGE;
    let mut rhs = nalgebra::SVector::<f64, 6>::zeros();
    for &(x, y, f, w) in samples {
        let b = nalgebra::SVector::<f64, 6>::from([1.0, x, y, x * x, x * y, y * y]);
        a += w * b * b.transpose();
        rhs += w * f * b;
    }
    a.cholesky().map_or(0.0, |c| c.solve(&rhs)[0])
}

/// Vorticity of bubble `n` on `spec`, reconstructed from the particle values
/// `xi r^{d-2}` by a moving least-squares fit over particles within two
/// initial spacings. The fit needs no particle connectivity, so it stays
/// valid when the flow winds the initial lattice up. Points with no particle
/// in range are set to zero.
pub fn mls_bubble<T: Real>(system: &ParticleSystem<T>, n: u32, spec: GridSpec<T>) -> Result<GriddedField<T>> {
    let particles = &system.particles[system.bubble(n)?.range.clone()];
    let power = system.ctx.stretch_power();
    let first = &particles[0];
    let h = (first.weight / first.initial.r.powi(power)).sqrt().to_f64_lossy();
    let radius = 2.0 * h;
    let points: Vec<(f64, f64)> = particles.iter().map(|p| (p.current.r.to_f64_lossy(), p.current.z.to_f64_lossy())).collect();
    let values: Vec<f64> = particles.iter().map(|p| (p.xi * p.current.r.powi(power)).to_f64_lossy()).collect();
    let cells = CellList::new(&points, radius);
    let mut field = GriddedField::zeros(spec)?;
    field.values.par_chunks_mut(spec.nz).enumerate().for_each(|(i, column)| {
        let r = spec.r_at(i).to_f64_lossy();
        let mut samples = Vec::new();
        for (j, out) in column.iter_mut().enumerate() {
            let z = spec.z_at(j).to_f64_lossy();
            samples.clear();
            cells.near(r, z, |k| {
                let (x, y) = ((points[k].0 - r) / radius, (points[k].1 - z) / radius);
                let w = wendland((x * x + y * y).sqrt());
                if w > 0.0 {
                    samples.push((x, y, values[k], w));
                }
            });
            *out = T::lit(local_fit(&samples));
        }
    });
    Ok(field)
}

/// Grid around the current positions of every particle of bubble `n`, padded
/// by `pad` on all sides.
pub fn bubble_extent_grid<T: Real>(system: &ParticleSystem<T>, n: u32, nr: usize, nz: usize, pad: T) -> Result<GridSpec<T>> {
    let particles = &system.particles[system.bubble(n)?.range.clone()];
    if particles.iter().all(|p| p.xi == T::zero()) {
        return Err(LabError::Precondition(format!("bubble {n} carries no vorticity")));
    }
    let mut bbox: Option<(T, T, T, T)> = None;
    for p in particles {
        let (r, z) = (p.current.r, p.current.z);
        bbox = Some(match bbox {
            None => (r, r, z, z),
            Some((a, b, c, d)) => (a.min(r), b.max(r), c.min(z), d.max(z)),
        });
    }
    let (a, b, c, d) = bbox.expect("non-empty bubble");
    GridSpec::new((a - pad).max(T::zero()), b + pad, nr, c - pad, d + pad, nz)
}

/// `‖Λ_d^{d/2} ω‖²` of a multi-bubble system as the sum of per-bubble values,
/// each reconstructed with [`mls_bubble`] on its own grid. Valid while
/// the bubbles keep disjoint `r`-supports.
pub fn vertical_sobolev_squared_bubbles<T: Real>(system: &ParticleSystem<T>, nr: usize, nz: usize) -> Result<Vec<(u32, T)>> {
    let ctx = system.ctx;
    let s = T::from_usize_lossy(ctx.d as usize) * T::lit(0.5);
    system
        .bubble_ranges
        .iter()
        .map(|b| {
            let first = &system.particles[b.range.start];
            let h = (first.weight / first.initial.r.powi(ctx.stretch_power())).sqrt();
            let spec = bubble_extent_grid(system, b.n, nr, nz, T::lit(3.0) * h)?;
            let field = mls_bubble(system, b.n, spec)?;
            Ok((b.n, vertical_sobolev_squared(&field, &ctx, s)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lorentz_trivial_cases() {
        assert_eq!(lorentz_norm::<f64>(&[], &[], 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(lorentz_norm(&[0.0, 0.0], &[1.0, 2.0], 3.0, 2.0).unwrap(), 0.0);
        // indicator of measure V and height h
        let (v, h) = (0.37_f64, 2.5);
        let inf = lorentz_norm(&[h, h, h], &[0.1, 0.2, v - 0.3], 3.0, f64::INFINITY).unwrap();
        assert_relative_eq!(inf, h * v.powf(1.0 / 3.0), max_relative = 1e-14);
        // L^{p,p} = L^p
        let lp = lorentz_norm(&[1.0, -2.0], &[0.5, 0.25], 3.0, 3.0).unwrap();
        assert_relative_eq!(lp, (0.5_f64 + 8.0 * 0.25).powf(1.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn lorentz_rejects_bad_input() {
        assert!(lorentz_norm(&[1.0], &[0.0], 3.0, 1.0).is_err());
        assert!(lorentz_norm(&[1.0], &[1.0], 1.0, 1.0).is_err());
        assert!(lorentz_norm(&[1.0], &[1.0], 3.0, 0.5).is_err());
        assert!(lorentz_norm(&[1.0, 2.0], &[1.0], 3.0, 1.0).is_err());
    }

    #[test]
    fn hardy_examples() {
        assert_eq!(hardy_check(&[0.5, 1.0], &[0.0, 0.0], 2.0).unwrap(), (0.0, 0.0));
        let xs: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
        let (l, r) = hardy_check(&xs, &xs, 2.0).unwrap();
        assert_relative_eq!(l, 1.0, max_relative = 1e-14);
        assert_relative_eq!(r, 1.0, max_relative = 1e-14);
        assert!(hardy_check(&xs, &xs, 1.0).is_err());
    }

    #[test]
    fn hardy_power_function_converges() {
        // f = x^0.6: ‖f/x‖² = 5, ‖f'‖² = 1.8
        let graded = |n: usize| -> (f64, f64) {
            let xs: Vec<f64> = (1..=n).map(|k| (k as f64 / n as f64).powi(12)).collect();
            let fs: Vec<f64> = xs.iter().map(|x| x.powf(0.6)).collect();
            hardy_check(&xs, &fs, 2.0).unwrap()
        };
        let (l, r) = graded(4000);
        assert_relative_eq!(l, 5.0_f64.sqrt(), max_relative = 1e-3);
        assert_relative_eq!(r, 1.8_f64.sqrt(), max_relative = 1e-3);
        assert!(l / r <= 2.0);
    }

    fn gaussian(n: usize) -> GriddedField<f64> {
        let spec = GridSpec::new(0.0, 9.0, n, -9.0, 9.0, 2 * n).unwrap();
        GriddedField::from_fn(spec, |p: crate::fields::HalfPlanePoint<f64>| (-(p.r * p.r + p.z * p.z) / 2.0).exp()).unwrap()
    }

    /// `e^{-((r-2)² + z²)/(2·0.25²)}`, with derivatives.
    fn ring(p: crate::fields::HalfPlanePoint<f64>) -> (f64, f64, f64) {
        let s2 = 0.0625;
        let f = (-((p.r - 2.0).powi(2) + p.z * p.z) / (2.0 * s2)).exp();
        (f, -(p.r - 2.0) / s2 * f, -p.z / s2 * f)
    }

    fn ring_grid(n: usize) -> GriddedField<f64> {
        let spec = GridSpec::new(0.0, 4.0, n, -2.0, 2.0, n).unwrap();
        GriddedField::from_fn(spec, |p| ring(p).0).unwrap()
    }

    #[test]
    fn first_order_norms_match_gradients() {
        // ‖Λ f‖² = ‖∇f‖², split into ‖∂_r f‖² and ‖∂_z f‖²
        let ctx = DimensionContext::three();
        let fine = GridSpec::new(0.0, 4.0, 801, -2.0, 2.0, 801).unwrap();
        let fr = GriddedField::from_fn(fine, |p| ring(p).1).unwrap().integrate_volume(&ctx, |v| v * v);
        let fz = GriddedField::from_fn(fine, |p| ring(p).2).unwrap().integrate_volume(&ctx, |v| v * v);
        let s = sobolev_norms(&ring_grid(96), &ctx, 1.0).unwrap();
        assert_relative_eq!(s.horizontal.powi(2), fr, max_relative = 1e-5);
        assert_relative_eq!(s.vertical.powi(2), fz, max_relative = 1e-5);
        assert_relative_eq!(s.full.powi(2), fr + fz, max_relative = 1e-5);
    }

    #[test]
    fn critical_norms_converge_and_split() {
        let ctx = DimensionContext::three();
        let a = sobolev_norms(&ring_grid(64), &ctx, 1.5).unwrap();
        let b = sobolev_norms(&ring_grid(128), &ctx, 1.5).unwrap();
        assert_relative_eq!(a.full, b.full, max_relative = 1e-6);
        assert_relative_eq!(a.horizontal, b.horizontal, max_relative = 1e-6);
        let v = vertical_sobolev_squared(&ring_grid(128), &ctx, 1.5).unwrap();
        assert_relative_eq!(b.vertical.powi(2), v, max_relative = 1e-12);
        let ratio = b.split_ratio();
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn vertical_norm_of_gaussian() {
        // ‖Λ_d^{3/2} e^{-|x|²/2}‖² = π; no Hankel transform is involved
        let v = vertical_sobolev_squared(&gaussian(128), &DimensionContext::three(), 1.5).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI, max_relative = 1e-3);
    }

    #[test]
    fn hankel_path_rejects_axis_data() {
        assert!(matches!(
            sobolev_norms(&gaussian(32), &DimensionContext::three(), 1.5),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn sobolev_of_zero_is_zero() {
        let spec = GridSpec::new(0.0, 1.0, 16, -1.0, 1.0, 16).unwrap();
        let f = GriddedField::zeros(spec).unwrap();
        let ctx = DimensionContext::three();
        assert_eq!(sobolev_norms(&f, &ctx, 1.5).unwrap().full, 0.0);
        assert_eq!(gn_check(&f, &ctx).unwrap(), GnCheck { grad_ld: 0.0, lambda_half_d: 0.0 });
    }

    #[test]
    fn sobolev_rejects_truncated_support() {
        let spec = GridSpec::new(0.0, 2.0, 32, -2.0, 2.0, 32).unwrap();
        let f = GriddedField::from_fn(spec, |p: crate::fields::HalfPlanePoint<f64>| (-(p.r * p.r + p.z * p.z)).exp()).unwrap();
        assert!(matches!(
            sobolev_norms(&f, &DimensionContext::three(), 1.5),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn gaussian_gradient_norm() {
        // ∫ |x|³ e^{-3|x|²/2} dx = 4π ∫ ρ⁵ e^{-3ρ²/2} dρ = 4π · 8/27
        let ctx = DimensionContext::three();
        let g = grad_ld_norm(&gaussian(256), &ctx);
        let exact = (4.0 * std::f64::consts::PI * 8.0 / 27.0_f64).powf(1.0 / 3.0);
        assert_relative_eq!(g, exact, max_relative = 1e-3);
    }

    #[test]
    fn mls_reproduces_seeded_data() {
        use crate::initdata::{sample_grid, seed_particles, BubbleGeometry, BubbleParams};
        let params = BubbleParams::<f64>::new(1, 1, 0.6).unwrap();
        let sys = seed_particles(&params, 32, DimensionContext::three()).unwrap();
        let spec = BubbleGeometry::of(&params, 1).grid(40, 320, 0.25).unwrap();
        let pulled = mls_bubble(&sys, 1, spec).unwrap();
        let exact = sample_grid(&params, spec).unwrap();
        let err = pulled.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.02 * exact.max_abs(), "max error {err}");
        let ctx = DimensionContext::three();
        let a: f64 = vertical_sobolev_squared(&pulled, &ctx, 1.5).unwrap();
        let b = vertical_sobolev_squared(&exact, &ctx, 1.5).unwrap();
        assert!((a / b - 1.0).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn mls_follows_a_translated_lattice() {
        use crate::initdata::{seed_particles, BubbleGeometry, BubbleParams};
        let params = BubbleParams::<f64>::new(1, 1, 0.6).unwrap();
        let mut sys = seed_particles(&params, 16, DimensionContext::three()).unwrap();
        let shift = 0.01;
        for p in &mut sys.particles {
            p.current.r += shift;
        }
        let spec = BubbleGeometry::of(&params, 1).grid(24, 96, 0.5).unwrap();
        let moved = mls_bubble(&sys, 1, spec).unwrap();
        for i in 0..spec.nr {
            for j in 0..spec.nz {
                let r = spec.r_at(i);
                let back = crate::initdata::initial_vorticity(&params, crate::fields::HalfPlanePoint::new(r - shift, spec.z_at(j)));
                let expected = back * r / (r - shift);
                assert!((moved.at(i, j) - expected).abs() < 0.05, "({i}, {j}): {} vs {expected}", moved.at(i, j));
            }
        }
    }

    #[test]
    fn mls_survives_a_wound_lattice() {
        use crate::initdata::{sample_grid, seed_particles, BubbleGeometry, BubbleParams};
        let params = BubbleParams::<f64>::new(1, 1, 0.6).unwrap();
        let mut sys = seed_particles(&params, 32, DimensionContext::three()).unwrap();
        let geo = BubbleGeometry::of(&params, 1);
        // differential rotation about the disk centre leaves a radial profile unchanged
        for p in &mut sys.particles {
            let zc = geo.z_center * p.initial.z.signum();
            let (dr, dz) = (p.initial.r - geo.r_center, p.initial.z - zc);
            let turn = 6.0 * (dr * dr + dz * dz).sqrt() / geo.support_radius * p.initial.z.signum();
            let (s, c) = turn.sin_cos();
            p.current.r = geo.r_center + c * dr - s * dz;
            p.current.z = zc + s * dr + c * dz;
        }
        let spec = geo.grid(40, 320, 0.25).unwrap();
        let field = mls_bubble(&sys, 1, spec).unwrap();
        let exact = sample_grid(&params, spec).unwrap();
        let ctx = DimensionContext::three();
        let a: f64 = vertical_sobolev_squared(&field, &ctx, 1.5).unwrap();
        let b = vertical_sobolev_squared(&exact, &ctx, 1.5).unwrap();
        assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
    }
}
