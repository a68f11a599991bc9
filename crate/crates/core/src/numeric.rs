//! Small numerical kernels shared across the crate: a fixed-step RK4 stepper,
//! adaptive Simpson quadrature and the complete elliptic integral of the
//! second kind.

use std::f64::consts::FRAC_PI_2;

/// Advances `y` by one classical fourth-order Runge-Kutta step of size `dt`.
///
/// `rhs(t, y, dydt)` writes the derivative of `y` into `dydt`. `work` must
/// hold at least `5 * y.len()` values; it is used as scratch so that callers
/// can keep the stepper allocation-free.
pub fn rk4_step<F>(mut rhs: F, t: f64, dt: f64, y: &mut [f64], work: &mut [f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    assert!(work.len() >= 5 * n, "rk4 scratch too small");
    let (k1, rest) = work.split_at_mut(n);
    let (k2, rest) = rest.split_at_mut(n);
    let (k3, rest) = rest.split_at_mut(n);
    let (k4, rest) = rest.split_at_mut(n);
    let tmp = &mut rest[..n];

    rhs(t, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    rhs(t + 0.5 * dt, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    rhs(t + 0.5 * dt, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    rhs(t + dt, tmp, k4);
    for i in 0..n {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

const SIMPSON_MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` with adaptive Simpson quadrature to an
/// absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Complete elliptic integral of the second kind `E(m) = ∫₀^{π/2} √(1 − m sin²θ) dθ`
/// in the parameter convention (`m = k²`), evaluated with the
/// arithmetic-geometric mean.
///
/// Valid for `0 ≤ m ≤ 1`; returns NaN outside that range.
pub fn elliptic_e(m: f64) -> f64 {
    if !(0.0..=1.0).contains(&m) {
        return f64::NAN;
    }
    if m == 1.0 {
        return 1.0;
    }
    if m == 0.0 {
        return FRAC_PI_2;
    }
    // E = K·(1 − Σ 2^{n−1} c_n²), K = π / (2·AGM(1, √(1−m)))
    let mut a = 1.0_f64;
    let mut b = (1.0 - m).sqrt();
    let mut c = m.sqrt();
    let mut weight = 0.5;
    let mut sum = weight * c * c;
    for _ in 0..64 {
        if c.abs() <= f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        a = an;
        b = bn;
        weight *= 2.0;
        sum += weight * c * c;
    }
    FRAC_PI_2 / a * (1.0 - sum)
}
