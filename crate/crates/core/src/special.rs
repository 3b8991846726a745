//! Special functions: complete elliptic integrals, azimuthal ring integrals,
//! the Bessel function J0 and half-integer gamma values.

use crate::scalar::Real;

/// Complete elliptic integrals `(K(k), E(k))` from the complementary
/// parameter `m1 = 1 - k^2`, by the arithmetic-geometric mean.
///
/// Taking `m1` rather than `k^2` keeps full relative accuracy as `k -> 1`,
/// which is the near-singular regime of the ring kernel.
pub fn ellip_ke_complementary<T: Real>(m1: T) -> (T, T) {
    let one = T::one();
    let half = T::lit(0.5);
    debug_assert!(m1 > T::zero() && m1 <= one);
    let mut a = one;
    let mut b = m1.sqrt();
    // c_0^2 = k^2
    let mut sum = half * (one - m1);
    let mut pow = half;
    let tol = T::epsilon() * T::lit(4.0);
    for _ in 0..40 {
        let c = half * (a - b);
        if c.abs() <= tol * a {
            break;
        }
        let an = half * (a + b);
        b = (a * b).sqrt();
        a = an;
        pow = pow + pow;
        sum += pow * c * c;
    }
    let k = T::FRAC_PI_2() / a;
    (k, k * (one - sum))
}

/// Below this ratio `B/A` the ring integrals switch to their power series;
/// the closed form loses roughly `eps / (B/A)^2` relative accuracy there.
const SERIES_SWITCH: f64 = 0.02;
const SERIES_TERMS: usize = 10;

/// Azimuthal ring integrals for `A > B >= 0`:
///
/// `J0 = ∫_0^{2π} (A - B cos θ)^{-3/2} dθ`,
/// `J1 = ∫_0^{2π} cos θ (A - B cos θ)^{-3/2} dθ`.
///
/// `q = A - B` is passed separately so that callers can form it without
/// cancellation (it is a squared distance).
pub fn ring_integrals<T: Real>(a: T, b: T, q: T) -> (T, T) {
    let two_pi = T::TAU();
    if b <= T::lit(SERIES_SWITCH) * a {
        let x = b / a;
        let base = two_pi / (a * a.sqrt());
        let mut j0 = T::zero();
        let mut j1 = T::zero();
        // c_k = (3/2)_k / k!,  ∫cos^{2j} = 2π binom(2j,j)/4^j
        let mut ck = T::one();
        let mut xk = T::one();
        let mut central = T::one(); // binom(2j, j) / 4^j
        for k in 0..(2 * SERIES_TERMS) {
            if k % 2 == 0 {
                j0 += ck * xk * central;
            } else {
                let j = (k - 1) / 2;
                let next_central =
                    central * T::from_usize_lossy(2 * j + 1) / T::from_usize_lossy(2 * j + 2);
                j1 += ck * xk * next_central;
                central = next_central;
            }
            ck = ck * (T::lit(1.5) + T::from_usize_lossy(k)) / T::from_usize_lossy(k + 1);
            xk = xk * x;
        }
        return (base * j0, base * j1);
    }
    let p = a + b;
    let sp = p.sqrt();
    let (k, e) = ellip_ke_complementary(q / p);
    let four = T::lit(4.0);
    let j0 = four * e / (q * sp);
    let j1 = four / (b * sp) * (a * e / q - k);
    (j0, j1)
}

/// Bessel function of the first kind of order zero.
pub fn bessel_j0<T: Real>(x: T) -> T {
    let x = x.abs();
    if x < T::lit(12.0) {
        let y = -T::lit(0.25) * x * x;
        let mut term = T::one();
        let mut sum = T::one();
        for k in 1..60 {
            let kk = T::from_usize_lossy(k);
            term = term * y / (kk * kk);
            sum += term;
            if term.abs() < T::epsilon() * T::lit(1e-2) {
                break;
            }
        }
        return sum;
    }
    // Hankel asymptotic expansion with P and Q series.
    let eight_x = T::lit(8.0) * x;
    let mut p = T::one();
    let mut q = T::zero();
    let mut term = T::one();
    let mut last = T::infinity();
    for k in 1..30 {
        let odd = T::from_usize_lossy(2 * k - 1);
        term = term * odd * odd / (T::from_usize_lossy(k) * eight_x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            1 => q -= term,
            2 => p -= term,
            3 => q += term,
            _ => p += term,
        }
    }
    let chi = x - T::FRAC_PI_4();
    (T::lit(2.0) / (T::PI() * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (k + a)^{-s}` for `s > 1`, `a > 0`, by
/// direct summation followed by an Euler–Maclaurin tail.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a > 0.0, "hurwitz_zeta requires s > 1 and a > 0");
    const DIRECT: usize = 32;
    let mut sum = 0.0;
    for k in 0..DIRECT {
        sum += (a + k as f64).powf(-s);
    }
    let n = a + DIRECT as f64;
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // Bernoulli corrections B2/2!, B4/4!, B6/6!
    let coeffs = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0];
    let mut rising = s;
    let mut power = n.powf(-s - 1.0);
    for (i, c) in coeffs.iter().enumerate() {
        tail += c * rising * power;
        let k = 2 * i as u32 + 1;
        rising *= (s + k as f64) * (s + k as f64 + 1.0);
        power /= n * n;
    }
    sum + tail
}

/// `Γ(n/2)` for a positive integer `n`.
pub fn gamma_half_integer(n: u32) -> f64 {
    assert!(n > 0, "gamma_half_integer requires n >= 1");
    let mut value = if n % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut k = if n % 2 == 0 { 2 } else { 1 };
    // Γ(x + 1) = x Γ(x)
    while k < n {
        value *= k as f64 / 2.0;
        k += 2;
    }
    value
}
