//! Gamma-family special functions and the chi / normal quantiles built on them.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos approximation with reflection below 1/2).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const MAX_TERMS: usize = 10_000;
const EPS: f64 = 1e-16;

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// modified Lentz continued fraction for Q(a, x)
fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`, accurate in the far tail.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(chi(k) <= z)`.
pub fn chi_cdf(k: usize, z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        gamma_p(k as f64 / 2.0, z * z / 2.0)
    }
}

/// `P(chi(k) > z)`.
pub fn chi_sf(k: usize, z: f64) -> f64 {
    if z <= 0.0 {
        1.0
    } else {
        gamma_q(k as f64 / 2.0, z * z / 2.0)
    }
}

/// Chi-square(k) CDF.
pub fn chi_square_cdf(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_p(k as f64 / 2.0, x / 2.0)
    }
}

const BISECT_TOL: f64 = 1e-12;

/// Bisection for the root of a monotone predicate `below(x)` ("x is still below the root").
fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> f64 {
    while below(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < BISECT_TOL * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_prob(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("probability must lie in (0, 1), got {q}")))
    }
}

/// `z` with `P(chi(k) <= z) = q`, i.e. the square root of the chi-square quantile.
pub fn chi_quantile(k: usize, q: f64) -> Result<f64> {
    check_prob(q)?;
    if q > 0.5 {
        chi_quantile_upper(k, 1.0 - q)
    } else {
        check_df(k)?;
        Ok(bisect(0.0, (k as f64).sqrt() + 1.0, |z| chi_cdf(k, z) < q))
    }
}

/// `z` with `P(chi(k) > z) = tail`; stays accurate for tails far below machine epsilon.
pub fn chi_quantile_upper(k: usize, tail: f64) -> Result<f64> {
    check_prob(tail)?;
    check_df(k)?;
    if tail > 0.5 {
        let q = 1.0 - tail;
        return Ok(bisect(0.0, (k as f64).sqrt() + 1.0, |z| chi_cdf(k, z) < q));
    }
    Ok(bisect(0.0, (k as f64).sqrt() + 1.0, |z| chi_sf(k, z) > tail))
}

fn check_df(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::Invalid("degrees of freedom must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// Standard normal quantile `Phi^{-1}(q)`.
pub fn normal_quantile(q: f64) -> Result<f64> {
    check_prob(q)?;
    if q == 0.5 {
        return Ok(0.0);
    }
    // Solve on the upper half and mirror, so both tails use the accurate erfc branch.
    let tail = q.min(1.0 - q);
    let z = bisect(0.0, 1.0, |z| 0.5 * erfc(z / std::f64::consts::SQRT_2) > tail);
    Ok(if q < 0.5 { -z } else { z })
}
