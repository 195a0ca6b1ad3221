//! Closed-form transition densities.
//!
//! The inverse Gaussian subordinator with parameters `(λ, δ)` has density
//!
//! ```text
//! p(t, z) = (4π)^{−1/2} δ t z^{−3/2} exp{−(δt − 2√λ z)² / (4z)},   z > 0,
//! ```
//!
//! and Laplace exponent `δ(√(u+λ) − √λ)`. The dilations
//! `ρ_c(s,x,t,y) = c·p(c(t−s), c(y−x))` belong to the same family: `ρ_c` with
//! `(λ, δ)` equals `ρ_1` with `(cλ, δ√c)`. Everything is evaluated in log
//! space.

use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::mathx::{abs, exp, exp_flush, lgamma, ln, powf, sin, sqrt, HALF_LN_4PI, PI};
use crate::quad::{self, Knot, QuadConfig};
use crate::specfun::gamma;

/// Parameters `(λ, δ)` of the inverse Gaussian family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub lambda: f64,
    pub delta: f64,
}

impl KernelParams {
    /// The 1/2-stable subordinator, `λ = 0`, `δ = 1`.
    pub const STABLE_HALF: KernelParams = KernelParams {
        lambda: 0.0,
        delta: 1.0,
    };

    pub fn new(lambda: f64, delta: f64) -> Result<Self> {
        let p = KernelParams { lambda, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            "λ must be finite and ≥ 0",
        )?;
        ensure(
            self.delta > 0.0 && self.delta.is_finite(),
            "δ must be finite and > 0",
        )
    }

    /// Parameters of `ρ_c` viewed as an undilated kernel: `(cλ, δ√c)`.
    pub fn dilated(&self, c: f64) -> KernelParams {
        KernelParams {
            lambda: c * self.lambda,
            delta: self.delta * sqrt(c),
        }
    }

    /// `ln p(t, z)` for `t > 0`; `−∞` for `z ≤ 0`.
    pub fn log_density(&self, t: f64, z: f64) -> f64 {
        if !(z > 0.0) || !(t > 0.0) {
            return f64::NEG_INFINITY;
        }
        let dt = self.delta * t;
        let gap = dt - 2.0 * sqrt(self.lambda) * z;
        -HALF_LN_4PI + ln(dt) - 1.5 * ln(z) - gap * gap / (4.0 * z)
    }

    /// `p(t, z)`; zero for `z ≤ 0` or `t ≤ 0`.
    pub fn density(&self, t: f64, z: f64) -> f64 {
        if !(z > 0.0) || !(t > 0.0) {
            return 0.0;
        }
        exp_flush(self.log_density(t, z))
    }

    /// Location of the maximum of `z ↦ p(t, z)`.
    pub fn mode(&self, t: f64) -> f64 {
        let dt = self.delta * t;
        0.5 * dt * dt / (1.5 + sqrt(2.25 + self.lambda * dt * dt))
    }

    /// Mean `tδ/(2√λ)`, infinite for `λ = 0`.
    pub fn mean(&self, t: f64) -> f64 {
        if self.lambda > 0.0 {
            t * self.delta / (2.0 * sqrt(self.lambda))
        } else {
            f64::INFINITY
        }
    }

    /// Breakpoints for integrating `z ↦ p(t, z)` (offsets from the start
    /// position): multiples of the mode scale, and the mean when finite.
    pub fn increment_knots(&self, t: f64) -> Vec<f64> {
        let m = self.mode(t);
        let mut k: Vec<f64> = [0.1, 0.4, 1.0, 3.0, 12.0, 60.0].iter().map(|f| f * m).collect();
        let mean = self.mean(t);
        if mean.is_finite() {
            k.push(mean);
            k.push(4.0 * mean);
        }
        k.sort_by(f64::total_cmp);
        k
    }
}

/// A dilated kernel `ρ_c` for parameters `(λ, δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilatedKernel {
    pub params: KernelParams,
    pub c: f64,
}

impl DilatedKernel {
    pub fn new(params: KernelParams, c: f64) -> Result<Self> {
        params.validate()?;
        ensure(c > 0.0 && c.is_finite(), "dilation c must be finite and > 0")?;
        Ok(DilatedKernel { params, c })
    }

    /// `ρ_1` for the given parameters.
    pub fn unit(params: KernelParams) -> Self {
        DilatedKernel { params, c: 1.0 }
    }

    /// The undilated parameters `(cλ, δ√c)` with `ρ_c = ρ_1[(cλ, δ√c)]`.
    pub fn effective(&self) -> KernelParams {
        self.params.dilated(self.c)
    }

    /// `ρ_c(s, x, t, y)`.
    pub fn eval(&self, s: f64, x: f64, t: f64, y: f64) -> f64 {
        self.effective().density(t - s, y - x)
    }

    /// `ln ρ_c(s, x, t, y)`.
    pub fn log_eval(&self, s: f64, x: f64, t: f64, y: f64) -> f64 {
        self.effective().log_density(t - s, y - x)
    }

    pub fn at(&self, pt: &SpaceTimePoint) -> f64 {
        self.eval(pt.s, pt.x, pt.t, pt.y)
    }
}

/// Arguments `(s, x, t, y)` of a transition kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub s: f64,
    pub x: f64,
    pub t: f64,
    pub y: f64,
}

impl SpaceTimePoint {
    pub const fn new(s: f64, x: f64, t: f64, y: f64) -> Self {
        SpaceTimePoint { s, x, t, y }
    }

    /// True when the kernels are positive here (`t > s`, `y > x`).
    pub fn is_forward(&self) -> bool {
        self.t > self.s && self.y > self.x
    }

    /// Time-and-space reflection `(−t, −y, −s, −x)`; kernels depend only on
    /// increments, so `ρ(pt) = ρ(pt.reflected())`.
    pub fn reflected(&self) -> Self {
        SpaceTimePoint::new(-self.t, -self.y, -self.s, -self.x)
    }
}

/// `p(t, z)` for the inverse Gaussian subordinator.
pub fn ig_density(params: KernelParams, t: f64, z: f64) -> Result<f64> {
    params.validate()?;
    ensure(t > 0.0 && t.is_finite(), "ig_density: t must be positive")?;
    Ok(params.density(t, z))
}

/// `ρ_c(pt) = c·p(c(t−s), c(y−x))`, zero when `t ≤ s` or `y ≤ x`.
pub fn dilated_density(kernel: DilatedKernel, pt: SpaceTimePoint) -> f64 {
    kernel.at(&pt)
}

/// Laplace exponent `δ(√(u+λ) − √λ)`.
pub fn ig_laplace_exponent(params: KernelParams, u: f64) -> f64 {
    // (u+λ) − λ over the sum of roots avoids cancellation for small u.
    let a = sqrt(u + params.lambda);
    let b = sqrt(params.lambda);
    if a + b == 0.0 {
        0.0
    } else {
        params.delta * u / (a + b)
    }
}

/// Gaussian kernel `g_c(s,x,t,y) = [4π(t−s)/c]^{−d/2} exp{−|y−x|²/[4(t−s)/c]}`
/// on `ℝ^d` with `d = x.len()`.
pub fn gauss_kernel(c: f64, s: f64, x: &[f64], t: f64, y: &[f64]) -> Result<f64> {
    ensure(c > 0.0, "gauss_kernel: c must be positive")?;
    ensure(t > s, "gauss_kernel: requires t > s")?;
    ensure(!x.is_empty() && x.len() == y.len(), "gauss_kernel: dimension mismatch")?;
    let d = x.len() as f64;
    let scale = 4.0 * (t - s) / c;
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(exp(-0.5 * d * ln(PI * scale) - r2 / scale))
}

/// Density `γ(t, z)` of the α-stable subordinator with Laplace transform
/// `e^{−t u^α}`.
///
/// For `α = 1/2` this is the inverse Gaussian density with `λ = 0`, `δ = 1`.
/// Otherwise Kanter's integral representation of the `t = 1` density is
/// integrated adaptively over `φ ∈ (0, π)` and rescaled by
/// `γ(t, z) = t^{−1/α} γ(1, z t^{−1/α})`.
pub fn stable_density(alpha: f64, t: f64, z: f64) -> Result<f64> {
    ensure(alpha > 0.0 && alpha < 1.0, "stable_density: α must lie in (0, 1)")?;
    ensure(t > 0.0 && t.is_finite(), "stable_density: t must be positive")?;
    if !(z > 0.0) {
        return Ok(0.0);
    }
    if alpha == 0.5 {
        return Ok(KernelParams::STABLE_HALF.density(t, z));
    }
    let scale = powf(t, -1.0 / alpha);
    Ok(scale * stable_unit_density(alpha, z * scale)?)
}

fn kanter_a(alpha: f64, phi: f64) -> f64 {
    let sa = sin(alpha * phi);
    let s1 = sin(phi);
    powf(sa / s1, 1.0 / (1.0 - alpha)) * sin((1.0 - alpha) * phi) / sa
}

/// Large-`x` expansion
/// `γ(1, x) = π^{−1} Σ_{n≥1} (−1)^{n+1} Γ(nα+1)/n! · sin(nπα) · x^{−nα−1}`.
fn stable_unit_series(alpha: f64, x: f64) -> f64 {
    let w = powf(x, -alpha);
    let mut sum = 0.0;
    let mut log_fact = 0.0;
    for n in 1..=80 {
        let nf = n as f64;
        log_fact += ln(nf);
        let mag = exp(lgamma(nf * alpha + 1.0) - log_fact + nf * ln(w));
        let term = if n % 2 == 1 { mag } else { -mag } * sin(nf * PI * alpha);
        sum += term;
        if mag < 1e-17 * abs(sum) {
            break;
        }
    }
    sum / (PI * x)
}

/// Below this `x^{−α}` the series converges fast and the Kanter integrand
/// has collapsed into a narrow spike at `φ = π`.
const STABLE_SERIES_W: f64 = 0.5;

fn stable_unit_density(alpha: f64, x: f64) -> Result<f64> {
    if powf(x, -alpha) <= STABLE_SERIES_W {
        return Ok(stable_unit_series(alpha, x));
    }
    let k = powf(x, -alpha / (1.0 - alpha));
    if !k.is_finite() {
        return Ok(0.0);
    }
    let integrand = |phi: f64| {
        let a = kanter_a(alpha, phi);
        if !a.is_finite() {
            return 0.0;
        }
        let e = exp_flush(-a * k);
        if e == 0.0 {
            0.0
        } else {
            a * e
        }
    };
    let cfg = QuadConfig::kernel().with_tolerances(1e-11, 1e-300).with_max_subdivisions(4000);
    let r = quad::integrate_1d(integrand, 0.0, PI, &cfg)?;
    let v = r.require_converged("stable density integral")?;
    let pref = alpha / (1.0 - alpha) * powf(x, -1.0 / (1.0 - alpha)) / PI;
    Ok(pref * v)
}

/// Moment constant `c′_σ = (4π)^{−σ/2}(4/σ)^{3σ/2−1}Γ(3σ/2−1)`, so that
/// `∫ρ_c(s,x,u,z)^σ dz = c′_σ c^{1−σ} (u−s)^{−2(σ−1)}` for `λ = 0`, `δ = 1`.
pub fn c_prime(sigma: f64) -> Result<f64> {
    if !(sigma > 2.0 / 3.0) || !sigma.is_finite() {
        return Err(Error::Domain("c_prime: σ must exceed 2/3"));
    }
    let e = 1.5 * sigma - 1.0;
    Ok(powf(4.0 * PI, -0.5 * sigma) * powf(4.0 / sigma, e) * gamma(e))
}

/// `∫_0^∞ g(z) p(t, z) dz` style integrals need the density's breakpoints;
/// this integrates `f(z)·p(t, z)` over `z > 0` for a bounded `f`.
pub fn integrate_against_density(
    params: KernelParams,
    t: f64,
    mut f: impl FnMut(f64) -> f64,
    cfg: &QuadConfig,
) -> Result<quad::QuadResult> {
    params.validate()?;
    ensure(t > 0.0, "integrate_against_density: t must be positive")?;
    let knots: Vec<Knot> = params.increment_knots(t).into_iter().map(Knot::plain).collect();
    quad::integrate_semiinfinite_with_knots(
        |z| {
            let p = params.density(t, z);
            if p == 0.0 {
                0.0
            } else {
                p * f(z)
            }
        },
        0.0,
        &knots,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Relative difference `|a − b| / |b|` (absolute when `b = 0`).
    fn rel_diff(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            (a - b).abs() / b.abs()
        }
    }

    #[test]
    fn closed_form_value() {
        let v = ig_density(KernelParams::STABLE_HALF, 1.0, 1.0).unwrap();
        let expect = (-0.25f64).exp() / (2.0 * PI.sqrt());
        assert!(rel_diff(v, expect) < 1e-15);
        assert_eq!(ig_density(KernelParams::new(1.0, 2.0).unwrap(), 1.0, -0.5).unwrap(), 0.0);
        assert!(ig_density(KernelParams::STABLE_HALF, 0.0, 1.0).is_err());
    }

    #[test]
    fn dilation_matches_definition() {
        let p = KernelParams::new(0.7, 1.3).unwrap();
        for &c in &[0.5, 1.0, 2.0, 3.5] {
            let k = DilatedKernel::new(p, c).unwrap();
            for &(tau, w) in &[(1.0, 1.0), (0.2, 0.05), (2.0, 3.0)] {
                let direct = c * p.density(c * tau, c * w);
                assert!(rel_diff(k.eval(0.0, 0.0, tau, w), direct) < 1e-13);
            }
        }
        let k2 = DilatedKernel::new(KernelParams::STABLE_HALF, 2.0).unwrap();
        let k1 = DilatedKernel::unit(KernelParams::STABLE_HALF);
        assert!(k2.eval(0.0, 0.0, 1.0, 1.0) <= 2f64.sqrt() * k1.eval(0.0, 0.0, 1.0, 1.0));
        assert_eq!(k1.eval(1.0, 0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn mode_is_stationary() {
        for &(l, d, t) in &[(0.0, 1.0, 1.0), (1.0, 2.0, 0.7), (3.0, 0.5, 4.0)] {
            let p = KernelParams::new(l, d).unwrap();
            let m = p.mode(t);
            let h = 1e-5 * m;
            assert!(p.log_density(t, m) >= p.log_density(t, m + h));
            assert!(p.log_density(t, m) >= p.log_density(t, m - h));
        }
    }

    #[test]
    fn laplace_exponent_values() {
        assert_eq!(ig_laplace_exponent(KernelParams::new(2.0, 3.0).unwrap(), 0.0), 0.0);
        assert!((ig_laplace_exponent(KernelParams::STABLE_HALF, 4.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_values() {
        let v = gauss_kernel(1.0, 0.0, &[0.0], 0.25, &[0.0]).unwrap();
        assert!(rel_diff(v, 1.0 / PI.sqrt()) < 1e-15);
        assert!(gauss_kernel(1.0, 1.0, &[0.0], 1.0, &[0.0]).is_err());
        assert!(gauss_kernel(1.0, 0.0, &[0.0, 1.0], 1.0, &[0.0]).is_err());
    }

    #[test]
    fn c_prime_closed_values() {
        assert!(rel_diff(c_prime(2.0).unwrap(), 1.0 / PI) < 1e-14);
        assert!(rel_diff(c_prime(1.0).unwrap(), 1.0) < 1e-14);
        assert!(c_prime(0.6).is_err());
    }

    #[test]
    fn stable_half_is_exact_and_others_positive() {
        let a = stable_density(0.5, 1.0, 2.0).unwrap();
        assert_eq!(a, ig_density(KernelParams::STABLE_HALF, 1.0, 2.0).unwrap());
        assert_eq!(stable_density(0.3, 1.0, -1.0).unwrap(), 0.0);
        assert!(stable_density(0.7, 1.0, 1.0).unwrap() > 0.0);
        assert!(stable_density(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn stable_series_joins_integral() {
        for alpha in [0.3, 0.7] {
            let x = powf(STABLE_SERIES_W, -1.0 / alpha);
            for f in [1.0, 1.5] {
                let xi = x * f;
                let k = powf(xi, -alpha / (1.0 - alpha));
                let integral = quad::integrate_1d(
                    |phi| {
                        let a = kanter_a(alpha, phi);
                        if a.is_finite() { a * exp_flush(-a * k) } else { 0.0 }
                    },
                    0.0,
                    PI,
                    &QuadConfig::kernel().with_tolerances(1e-12, 1e-300).with_max_subdivisions(20_000),
                )
                .unwrap()
                .value
                    * alpha
                    / (1.0 - alpha)
                    * powf(xi, -1.0 / (1.0 - alpha))
                    / PI;
                assert!(rel_diff(stable_unit_series(alpha, xi), integral) < 1e-9, "{alpha} {xi}");
            }
        }
        assert!(stable_density(0.3, 0.5, 1e12).unwrap() > 0.0);
    }

    #[test]
    fn reflection_preserves_kernel() {
        let k = DilatedKernel::new(KernelParams::new(1.0, 2.0).unwrap(), 1.5).unwrap();
        let pt = SpaceTimePoint::new(0.2, -0.3, 1.1, 0.9);
        assert_eq!(k.at(&pt), k.at(&pt.reflected()));
    }
}
