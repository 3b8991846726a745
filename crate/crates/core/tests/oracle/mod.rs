//! Reference computations that share no code with the library kernels:
//! Gauss–Legendre tensor quadrature of the full 3D Biot–Savart integral and
//! adaptive Simpson quadrature in the meridian plane.

#![allow(dead_code)]

use std::f64::consts::PI;

use euler_lab::initdata::{bump_phi, BubbleGeometry, BubbleParams};

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, x);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * x * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (x * q1 - q0) / (x * x - 1.0);
                out.push((x, 2.0 / ((1.0 - x * x) * dq * dq)));
                break;
            }
        }
    }
    out
}

/// Meridian vorticity of bubble `n` with unit amplitude, written from the
/// definition: `φ` about the upper centre minus `φ` about the lower one.
pub fn bubble_omega(n: u32, r: f64, z: f64) -> f64 {
    let s = 8f64.powi(n as i32);
    let (rc, zc) = (8.0 / s, 1.0 / s);
    bump_phi(s * (r - rc), s * (z - zc)) - bump_phi(s * (r - rc), s * (z + zc))
}

/// Velocity `(u_r, u_z)` at `(r, 0, z)` of the swirl-free field whose
/// scalar vorticity is `amp · bubble_omega(n)`, from
/// `u(x) = -(1/4π) ∫ ω(y) e_θ × (x - y) / |x - y|³ dy`. The minus sign comes
/// from the scalar convention `ω = ∂_r u_z - ∂_z u_r`, which is minus the
/// azimuthal component of `curl u`.
///
/// Each disk of the bubble is covered in polar coordinates about its centre
/// (`radial × angular` Gauss–Legendre), and the azimuth with `n_theta`
/// trapezoid points.
pub fn full_3d_velocity(n: u32, amp: f64, r: f64, z: f64, radial: usize, angular: usize, n_theta: usize) -> (f64, f64) {
    let params = BubbleParams::new(n, n, 0.5).unwrap();
    let geo = BubbleGeometry::of(&params, n);
    let rule_r = gauss_legendre(radial);
    let rule_a = gauss_legendre(angular);
    let cos_sin: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n_theta as f64;
            (t.cos(), t.sin())
        })
        .collect();
    let dtheta = 2.0 * PI / n_theta as f64;
    let (mut ur, mut uz) = (0.0, 0.0);
    for zc in [geo.z_center, -geo.z_center] {
        let a = geo.support_radius;
        for &(xr, wr) in &rule_r {
            let rho_local = 0.5 * a * (xr + 1.0);
            for &(xa, wa) in &rule_a {
                let phi = PI * (xa + 1.0);
                let rho = geo.r_center + rho_local * phi.cos();
                let zeta = zc + rho_local * phi.sin();
                let w = bubble_omega(n, rho, zeta);
                if w == 0.0 {
                    continue;
                }
                // polar Jacobian and the map from [-1,1]² onto the disk
                let area = 0.5 * a * wr * PI * wa * rho_local;
                let dz = z - zeta;
                let (mut sr, mut sz) = (0.0, 0.0);
                for &(c, _) in &cos_sin {
                    let d2 = r * r + rho * rho - 2.0 * r * rho * c + dz * dz;
                    let inv3 = 1.0 / (d2 * d2.sqrt());
                    sr += c * dz * inv3;
                    sz += (rho - r * c) * inv3;
                }
                let weight = -amp * w * area * rho * dtheta / (4.0 * PI);
                ur += weight * sr;
                uz += weight * sz;
            }
        }
    }
    (ur, uz)
}

fn simpson_1d(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `∫_a^b ∫_c^d f(r, z) dz dr` by nested adaptive Simpson.
pub fn adaptive_2d(f: &dyn Fn(f64, f64) -> f64, (a, b): (f64, f64), (c, d): (f64, f64), tol: f64) -> f64 {
    let inner = |r: f64| simpson_1d(&|z| f(r, z), c, d, tol / (b - a).abs().max(1e-300));
    simpson_1d(&inner, a, b, tol)
}
