//! Scalar special functions: normal and Student-t CDFs, densities and
//! quantiles, plus a safeguarded Newton inverter for monotone CDFs.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::{beta, erf, gamma};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
    }
}

/// Normal quantile. `erfc_inv` gives ~1e-15 relative; one Newton step on
/// the CDF polishes the remaining error.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -norm_quantile(1.0 - p);
    }
    let z = -SQRT_2 * erf::erfc_inv(2.0 * p);
    let d = norm_pdf(z);
    if d > 0.0 && z.is_finite() {
        z - (norm_cdf(z) - p) / d
    } else {
        z
    }
}

fn ln_t_norm(df: f64) -> f64 {
    gamma::ln_gamma((df + 1.0) / 2.0) - gamma::ln_gamma(df / 2.0) - 0.5 * (df * PI).ln()
}

pub fn t_pdf(z: f64, df: f64) -> f64 {
    (ln_t_norm(df) - (df + 1.0) / 2.0 * (z * z / df).ln_1p()).exp()
}

/// Student-t CDF through the regularized incomplete beta function, evaluated
/// on the tail side for accuracy.
pub fn t_cdf(z: f64, df: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    if z == 0.0 {
        return 0.5;
    }
    let x = df / (df + z * z);
    let tail = if x < 1e-300 {
        0.0
    } else {
        0.5 * beta::beta_reg(df / 2.0, 0.5, x)
    };
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    if p > 0.5 {
        return -t_quantile(1.0 - p, df);
    }
    let x = beta::inv_beta_reg(df / 2.0, 0.5, 2.0 * p);
    let guess = if x > 0.0 && x < 1.0 {
        -(df * (1.0 - x) / x).sqrt()
    } else {
        norm_quantile(p)
    };
    invert_cdf(|z| t_cdf(z, df), |z| t_pdf(z, df), p, guess, 1e-13)
}

/// Solves `cdf(z) = p` for a continuous increasing `cdf` with density `pdf`
/// by Newton steps kept inside an expanding bracket (bisection fallback).
pub fn invert_cdf<F, D>(cdf: F, pdf: D, p: f64, guess: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut z = if guess.is_finite() { guess } else { 0.0 };
    let mut fz = cdf(z) - p;
    if fz == 0.0 {
        return z;
    }
    // bracket
    let (mut lo, mut hi);
    let mut step = 1.0_f64.max(z.abs() * 0.1);
    if fz < 0.0 {
        lo = z;
        hi = z + step;
        while cdf(hi) - p < 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            if !hi.is_finite() {
                return hi;
            }
        }
    } else {
        hi = z;
        lo = z - step;
        while cdf(lo) - p > 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            if !lo.is_finite() {
                return lo;
            }
        }
    }
    if !(lo..=hi).contains(&z) {
        z = 0.5 * (lo + hi);
        fz = cdf(z) - p;
    }
    for _ in 0..200 {
        if fz < 0.0 {
            lo = z;
        } else if fz > 0.0 {
            hi = z;
        } else {
            return z;
        }
        let d = pdf(z);
        let mut next = if d > 0.0 { z - fz / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - z).abs() <= tol * (1.0 + z.abs()) || hi - lo <= tol * (1.0 + z.abs());
        z = next;
        if done {
            return z;
        }
        fz = cdf(z) - p;
    }
    z
}
