use euler_lab::biotsavart::KernelConfig;
use euler_lab::fields::{DimensionContext, ParticleSystem};
use euler_lab::initdata::{seed_particles, BubbleParams};
use euler_lab::transport::{default_dt, diagnostics, evolve, step_rk4, EvolveConfig};

fn system(m: u32, res: usize) -> ParticleSystem<f64> {
    seed_particles(&BubbleParams::new(1, m, 0.6).unwrap(), res, DimensionContext::three()).unwrap()
}

fn gap(a: &ParticleSystem<f64>, b: &ParticleSystem<f64>) -> f64 {
    a.particles
        .iter()
        .zip(&b.particles)
        .map(|(p, q)| (p.current.r - q.current.r).hypot(p.current.z - q.current.z))
        .fold(0.0, f64::max)
}

fn run(sys: &ParticleSystem<f64>, dt: f64, steps: usize, cfg: &KernelConfig<f64>) -> ParticleSystem<f64> {
    (0..steps).fold(sys.clone(), |s, _| step_rk4(&s, dt, cfg).unwrap())
}

/// Flipping the sign of the vorticity reverses the velocity, so running
/// forward and then with `-ω` returns to the start up to the RK4 error.
#[test]
fn negated_flow_retraces_the_path() {
    let sys = system(2, 8);
    let cfg = KernelConfig::default();
    let dt = default_dt(&sys, &cfg).unwrap();
    let mut errors = Vec::new();
    for k in 0..2 {
        let steps = 8 << k;
        let h = 8.0 * dt / steps as f64;
        let forward = run(&sys, h, steps, &cfg);
        let back = run(&forward.negated(), h, steps, &cfg).negated();
        errors.push(gap(&sys, &back));
    }
    assert!(gap(&sys, &run(&sys, dt, 8, &cfg)) > 1e3 * errors[0]);
    assert!(errors[0] / errors[1] > 11.0, "{errors:?}");
}

#[test]
fn rk4_converges_at_fourth_order() {
    let sys = system(1, 8);
    let cfg = KernelConfig::default();
    let horizon = 10.0 * default_dt(&sys, &cfg).unwrap();
    let finals: Vec<_> = [10usize, 20, 40].iter().map(|&n| run(&sys, horizon / n as f64, n, &cfg)).collect();
    let ratio = gap(&finals[0], &finals[1]) / gap(&finals[1], &finals[2]);
    assert!(ratio >= 11.0, "ratio {ratio}");
}

#[test]
fn single_bubble_keeps_its_sup_norm() {
    let sys = seed_particles(&BubbleParams::<f64>::new(1, 1, 0.2).unwrap(), 12, DimensionContext::three()).unwrap();
    let kernel = KernelConfig::default();
    let dt = default_dt(&sys, &kernel).unwrap();
    let cfg = EvolveConfig { dt, t_end: 100.0 * dt, cadence: 10, kernel };
    let out = evolve(&sys, &cfg, |_, _| Ok(())).unwrap();
    let w0: f64 = out.frames[0].linf_omega;
    for f in &out.frames {
        assert!((f.linf_omega / w0 - 1.0).abs() <= 0.02, "t = {}: {}", f.time, f.linf_omega);
        assert!(f.region_ok);
    }
}

#[test]
fn mirror_symmetry_survives_evolution() {
    let sys = system(2, 8);
    let cfg = KernelConfig::default();
    let out = run(&sys, default_dt(&sys, &cfg).unwrap(), 5, &cfg);
    for b in &out.bubble_ranges {
        let half = b.range.len() / 2;
        for i in b.range.start..b.range.start + half {
            let (p, q) = (&out.particles[i], &out.particles[i + half]);
            assert_eq!(p.current.r.to_bits(), q.current.r.to_bits());
            assert_eq!(p.current.z.to_bits(), (-q.current.z).to_bits());
        }
    }
    let d = diagnostics(&out, 5).unwrap();
    assert!(d.ordering_ok && d.region_ok);
}
