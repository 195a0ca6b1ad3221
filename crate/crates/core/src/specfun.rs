//! Special functions used by the kernels and generators.
//!
//! `erfc` and `Γ` come from `libm` (sub-ulp ports of the FreeBSD msun
//! routines). The upper incomplete gamma is computed here: the closed form
//! for `a = −1/2`, and the series / Legendre continued-fraction split for
//! `a > 0`.

use crate::error::{ensure, Error, Result};
use crate::mathx::{abs, exp, exp_flush, lgamma, ln, powf, sqrt, SQRT_PI};

/// A special-function value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecFunResult {
    pub value: f64,
    pub abs_error_estimate: f64,
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

const MAX_ITER: usize = 500;
const EPS: f64 = 1e-16;

/// Upper incomplete gamma `Γ(a, x) = ∫_x^∞ e^{−y} y^{a−1} dy`.
///
/// Supported for `a = −1/2` (with `x > 0`) and `a > 0` (with `x ≥ 0`).
/// Values that would underflow are returned as exactly zero.
pub fn gamma_upper(a: f64, x: f64) -> Result<f64> {
    gamma_upper_with_error(a, x).map(|r| r.value)
}

/// [`gamma_upper`] together with an error estimate.
pub fn gamma_upper_with_error(a: f64, x: f64) -> Result<SpecFunResult> {
    ensure(x.is_finite() || x == f64::INFINITY, "gamma_upper: x must not be NaN")?;
    ensure(x >= 0.0, "gamma_upper: x must be nonnegative")?;
    if a == -0.5 {
        if x == 0.0 {
            return Err(Error::Domain("gamma_upper: a ≤ 0 with x = 0 diverges"));
        }
        return Ok(gamma_upper_minus_half(x));
    }
    ensure(a > 0.0, "gamma_upper: a must be −1/2 or positive")?;
    if x == 0.0 {
        let v = gamma(a);
        return Ok(SpecFunResult {
            value: v,
            abs_error_estimate: 4.0 * f64::EPSILON * v,
        });
    }
    if x == f64::INFINITY {
        return Ok(SpecFunResult {
            value: 0.0,
            abs_error_estimate: 0.0,
        });
    }
    let value = if x < a + 1.0 {
        // Γ(a) − γ(a, x) via the lower series; Γ(a)·(1 − P).
        let p = lower_regularized_series(a, x);
        let g = gamma(a);
        if p < 0.9 {
            g * (1.0 - p)
        } else {
            // Near-cancellation: fall back to the continued fraction, valid for all x > 0.
            continued_fraction(a, x)
        }
    } else {
        continued_fraction(a, x)
    };
    let value = if value < f64::MIN_POSITIVE { 0.0 } else { value };
    Ok(SpecFunResult {
        value,
        abs_error_estimate: 64.0 * f64::EPSILON * abs(value),
    })
}

/// `Γ(−1/2, x) = 2 x^{−1/2} e^{−x} − 2√π erfc(√x)`, switching to the
/// continued fraction where the closed form cancels.
fn gamma_upper_minus_half(x: f64) -> SpecFunResult {
    if x < 1.0 {
        let v = 2.0 * exp(-x) / sqrt(x) - 2.0 * SQRT_PI * erfc(sqrt(x));
        SpecFunResult {
            value: v,
            abs_error_estimate: 8.0 * f64::EPSILON * (2.0 / sqrt(x)),
        }
    } else {
        let v = continued_fraction(-0.5, x);
        let v = if v < f64::MIN_POSITIVE { 0.0 } else { v };
        SpecFunResult {
            value: v,
            abs_error_estimate: 64.0 * f64::EPSILON * v,
        }
    }
}

/// Regularized lower incomplete gamma `P(a, x)` by its power series.
fn lower_regularized_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if abs(term) < abs(sum) * EPS {
            break;
        }
    }
    sum * exp(-x + a * ln(x) - lgamma(a))
}

/// `Γ(a, x)` by the Legendre continued fraction (modified Lentz), valid for
/// every real `a` when `x > 0`; converges quickly once `x ≳ a + 1`.
fn continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if abs(d) < TINY {
            d = TINY;
        }
        c = b + an / c;
        if abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if abs(del - 1.0) < EPS {
            break;
        }
    }
    exp_flush(-x + a * ln(x)) * h
}

/// Tilted upper incomplete gamma `Γ_λ(a, z) = ∫_z^∞ e^{−λy} y^{a−1} dy`.
///
/// For `λ > 0` this is `λ^{−a} Γ(a, λz)`; for `λ = 0` only `a < 0` converges
/// and `Γ_0(−1/2, z) = 2 z^{−1/2}`.
pub fn tilted_incomplete_gamma(lambda: f64, a: f64, z: f64) -> Result<f64> {
    ensure(lambda >= 0.0 && lambda.is_finite(), "tilted gamma: λ must be finite and ≥ 0")?;
    ensure(z > 0.0, "tilted gamma: z must be positive")?;
    ensure(a == -0.5 || a > 0.0, "tilted gamma: a must be −1/2 or positive")?;
    if lambda == 0.0 {
        if a >= 0.0 {
            return Err(Error::Domain("tilted gamma: λ = 0 with a ≥ 0 diverges"));
        }
        return Ok(powf(z, a) / (-a));
    }
    Ok(powf(lambda, -a) * gamma_upper(a, lambda * z)?)
}
