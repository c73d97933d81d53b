//! Modified Bessel function ratios.

use crate::error::{Error, Result};

const CF_TOL: f64 = 1e-16;
const CF_MAX_TERMS: usize = 100_000;
const TINY: f64 = 1e-300;

/// I_nu(x) / I_{nu-1}(x) for x > 0, nu > 0, by the modified Lentz algorithm
/// on the continued fraction 1 / (2nu/x + 1 / (2(nu+1)/x + ...)).
pub fn bessel_i_ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let b = |j: usize| 2.0 * (nu + j as f64) / x;
    let mut f = b(0);
    let mut c = f;
    let mut d = 0.0;
    for j in 1..CF_MAX_TERMS {
        let bj = b(j);
        d += bj;
        if d.abs() < TINY {
            d = TINY;
        }
        c = bj + 1.0 / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < CF_TOL {
            break;
        }
    }
    1.0 / f
}

/// Mean resultant length of the FVML law on S^{k-1}: A_k(kappa) = I_{k/2}(kappa) / I_{k/2-1}(kappa).
pub fn fvml_mean_resultant(k: usize, kappa: f64) -> f64 {
    bessel_i_ratio(k as f64 / 2.0, kappa)
}

fn fvml_mean_resultant_deriv(k: usize, kappa: f64, a: f64) -> f64 {
    1.0 - a * a - (k as f64 - 1.0) / kappa * a
}

/// Solves A_k(kappa) = rbar for kappa by bracketed Newton iteration.
pub fn invert_mean_resultant(k: usize, rbar: f64) -> Result<f64> {
    if !(rbar > 0.0 && rbar < 1.0) {
        return Err(Error::Domain { what: "mean resultant length", value: rbar });
    }
    let kf = k as f64;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while fvml_mean_resultant(k, hi) < rbar {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain { what: "mean resultant length", value: rbar });
        }
    }
    // Banerjee et al. starting point, pulled into the bracket
    let mut kappa = rbar * (kf - rbar * rbar) / (1.0 - rbar * rbar);
    if !(kappa > lo && kappa < hi) {
        kappa = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let a = fvml_mean_resultant(k, kappa);
        let g = a - rbar;
        if g < 0.0 {
            lo = kappa;
        } else {
            hi = kappa;
        }
        let step = g / fvml_mean_resultant_deriv(k, kappa, a);
        let mut next = kappa - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - kappa).abs() <= 1e-14 * kappa.max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        kappa = next;
    }
    Ok(kappa)
}
