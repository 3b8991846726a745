mod oracle;

use euler_lab::biotsavart::{velocity_at, velocity_field, KernelConfig};
use euler_lab::fields::{DimensionContext, HalfPlanePoint};
use euler_lab::initdata::{seed_particles, BubbleGeometry, BubbleParams};
use proptest::prelude::*;

#[test]
fn gauss_legendre_integrates_polynomials() {
    let rule = oracle::gauss_legendre(6);
    let s: f64 = rule.iter().map(|(x, w)| w * x.powi(10)).sum();
    assert!((s - 2.0 / 11.0).abs() < 1e-14);
    let total: f64 = oracle::gauss_legendre(40).iter().map(|(_, w)| w).sum();
    assert!((total - 2.0).abs() < 1e-13);
}

#[test]
fn oracle_is_converged() {
    let a = oracle::full_3d_velocity(1, 1.0, 1.05, 0.08, 24, 32, 1024);
    let b = oracle::full_3d_velocity(1, 1.0, 1.05, 0.08, 48, 64, 2048);
    let scale = b.0.hypot(b.1);
    assert!((a.0 - b.0).hypot(a.1 - b.1) < 1e-6 * scale, "{a:?} {b:?}");
}

#[test]
fn particle_velocity_matches_full_3d_quadrature() {
    let params = BubbleParams::new(1, 1, 0.6).unwrap();
    let sys = seed_particles(&params, 32, DimensionContext::three()).unwrap();
    let geo = BubbleGeometry::of(&params, 1);
    let a = geo.support_radius;
    let targets = [
        HalfPlanePoint::new(geo.r_center + 2.0 * a, geo.z_center),
        HalfPlanePoint::new(geo.r_center - 2.5 * a, geo.z_center + a),
        HalfPlanePoint::new(geo.r_center, 0.0),
        HalfPlanePoint::new(0.4, 0.3),
        HalfPlanePoint::new(0.0, 0.1),
    ];
    for cfg in [KernelConfig::default(), KernelConfig::trapezoid(256)] {
        let vel = velocity_field(&sys, &targets, &cfg).unwrap();
        for (t, (ur, uz)) in targets.iter().zip(vel) {
            let (wr, wz) = oracle::full_3d_velocity(1, params.amplitude(1), t.r, t.z, 32, 48, 2048);
            let err = (ur - wr).hypot(uz - wz) / wr.hypot(wz);
            assert!(err < 0.02, "target {t:?}: ({ur}, {uz}) vs ({wr}, {wz})");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn velocity_is_linear_in_vorticity(scale in -3.0f64..3.0, r in 0.0f64..2.0, z in -0.5f64..0.5) {
        let params = BubbleParams::new(1, 2, 0.6).unwrap();
        let sys = seed_particles(&params, 8, DimensionContext::three()).unwrap();
        let mut scaled = sys.clone();
        for p in &mut scaled.particles {
            p.xi *= scale;
        }
        let cfg = KernelConfig::default();
        let t = HalfPlanePoint::new(r, z);
        let (a, b) = velocity_at(&sys, t, &cfg).unwrap();
        let (c, d) = velocity_at(&scaled, t, &cfg).unwrap();
        let tol = 1e-12 * (a.abs() + b.abs()).max(1e-300) * scale.abs().max(1.0);
        prop_assert!((c - scale * a).abs() <= tol);
        prop_assert!((d - scale * b).abs() <= tol);
    }
}
