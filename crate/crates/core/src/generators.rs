//! Generators of subordinators acting on test functions, and residuals of
//! the fundamental-solution identities.
//!
//! ```text
//! ∂^{1/2} f(x) = π^{−1/2} ∫_x^∞ f′(z) (z−x)^{−1/2} dz
//! W^{−α} f(x)  = Γ(α)^{−1} ∫_x^∞ f(z) (z−x)^{α−1} dz
//! L f(x)       = b f′(x) + ∫_x^∞ f′(z) ν̄(z−x) dz
//! ```
//!
//! For the inverse Gaussian family `ν̄(w) = (δ/(2√π)) Γ_λ(−1/2, w)`.
//! Integrals run in the offset `d = z − x`, so the endpoint singularity is
//! handled exactly.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{ensure, Error, Result};
use crate::kernels::{DilatedKernel, KernelParams};
use crate::mathx::{abs, exp, ln, powf, sqrt, SQRT_PI};
use crate::perturb::{tilde_field, SeriesConfig, TildeField};
use crate::potentials::PotentialSpec;
use crate::quad::{self, InnerRange, Knot, QuadConfig, QuadResult};
use crate::specfun::{gamma, tilted_incomplete_gamma};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Tolerance of the construction-time finite-difference check.
pub const FD_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const FD_SAMPLES: usize = 41;

/// A `C¹` function with compact support and a supplied derivative.
#[derive(Clone)]
pub struct TestFunction {
    f: RealFn,
    df: RealFn,
    support: (f64, f64),
    label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({}, support {:?})", self.label, self.support)
    }
}

/// Names accepted by [`TestFunction::builtin`].
pub const BUILTIN_BUMPS: [&str; 4] = ["bump", "bump-half", "bump-wide", "bump-skew"];

fn bump_parts(r: f64) -> Option<(f64, f64)> {
    let one = 1.0 - r * r;
    if !(one > 0.0) {
        return None;
    }
    let f = exp(-1.0 / one);
    // d/dr exp(−1/(1−r²)) = −2r/(1−r²)² · f
    Some((f, -2.0 * r / (one * one) * f))
}

impl TestFunction {
    /// Checks the declared support and the derivative against central
    /// differences (tolerance `FD_TOL·(1 + max|f′|)`).
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Result<Self> {
        Self::labelled(Arc::new(f), Arc::new(df), support, "custom".to_string())
    }

    fn labelled(f: RealFn, df: RealFn, support: (f64, f64), label: String) -> Result<Self> {
        let (a, b) = support;
        ensure(a.is_finite() && b.is_finite() && a < b, "test function: support must be a finite interval")?;
        let len = b - a;
        for k in [1e-9, 1e-3, 0.5, 3.0] {
            for z in [a - k * len, b + k * len] {
                ensure(f(z) == 0.0 && df(z) == 0.0, "test function must vanish outside its support")?;
            }
        }
        let mut max_df = 0.0f64;
        let mut worst = 0.0f64;
        for i in 0..FD_SAMPLES {
            let z = a + len * (i as f64 + 0.5) / FD_SAMPLES as f64;
            let d = df(z);
            ensure(d.is_finite() && f(z).is_finite(), "test function must be finite")?;
            let h = FD_STEP * len;
            let fd = (f(z + h) - f(z - h)) / (2.0 * h);
            max_df = max_df.max(abs(d));
            worst = worst.max(abs(fd - d));
        }
        if worst > FD_TOL * (1.0 + max_df) {
            return Err(Error::Inconsistent {
                what: "supplied derivative disagrees with finite differences",
                at: worst,
                discrepancy: worst,
            });
        }
        Ok(TestFunction { f, df, support, label })
    }

    /// `exp(−1/(1−r²))`, `r = (x − center)/radius`.
    pub fn bump(center: f64, radius: f64) -> Result<Self> {
        ensure(radius > 0.0 && radius.is_finite() && center.is_finite(), "bump: need finite center and radius > 0")?;
        let f = move |x: f64| bump_parts((x - center) / radius).map_or(0.0, |p| p.0);
        let df = move |x: f64| bump_parts((x - center) / radius).map_or(0.0, |p| p.1 / radius);
        Self::labelled(
            Arc::new(f),
            Arc::new(df),
            (center - radius, center + radius),
            alloc::format!("bump:{center}:{radius}"),
        )
    }

    /// Built-in catalog: `bump` (center 0, radius 1), `bump-half`
    /// (0.5, 0.5), `bump-wide` (1, 2), `bump-skew` (a bump times `(1+x)`),
    /// or `bump:<center>:<radius>`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "bump" => Self::bump(0.0, 1.0),
            "bump-half" => Self::bump(0.5, 0.5),
            "bump-wide" => Self::bump(1.0, 2.0),
            "bump-skew" => {
                let b = Self::bump(0.0, 1.0)?;
                let (f0, f1, d0) = (b.f.clone(), b.f.clone(), b.df.clone());
                Self::labelled(
                    Arc::new(move |x| (1.0 + x) * f0(x)),
                    Arc::new(move |x| f1(x) + (1.0 + x) * d0(x)),
                    b.support,
                    "bump-skew".to_string(),
                )
            }
            _ => {
                let mut it = name.split(':');
                if it.next() == Some("bump") {
                    let c = it.next().and_then(|v| v.parse::<f64>().ok());
                    let r = it.next().and_then(|v| v.parse::<f64>().ok());
                    if let (Some(c), Some(r), None) = (c, r, it.next()) {
                        return Self::bump(c, r);
                    }
                }
                Err(Error::Parse(alloc::format!("unknown test function `{name}`")))
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `x ↦ f(x − h)`.
    pub fn shifted(&self, h: f64) -> Self {
        let (f, df) = (self.f.clone(), self.df.clone());
        TestFunction {
            f: Arc::new(move |x| f(x - h)),
            df: Arc::new(move |x| df(x - h)),
            support: (self.support.0 + h, self.support.1 + h),
            label: alloc::format!("{}(·−{h})", self.label),
        }
    }

    /// `a·f + b·g`.
    pub fn combine(a: f64, f: &TestFunction, b: f64, g: &TestFunction) -> Self {
        let (f1, d1, f2, d2) = (f.f.clone(), f.df.clone(), g.f.clone(), g.df.clone());
        TestFunction {
            f: Arc::new(move |x| a * f1(x) + b * f2(x)),
            df: Arc::new(move |x| a * d1(x) + b * d2(x)),
            support: (f64::min(f.support.0, g.support.0), f64::max(f.support.1, g.support.1)),
            label: alloc::format!("{a}·{} + {b}·{}", f.label, g.label),
        }
    }
}

/// `φ(u, x)` with supplied partial derivatives and compact support.
#[derive(Clone)]
pub struct SpaceTimeTestFunction {
    phi: SpaceTimeFn,
    d_time: SpaceTimeFn,
    d_space: SpaceTimeFn,
    /// `((u_lo, u_hi), (x_lo, x_hi))`.
    support: ((f64, f64), (f64, f64)),
}

impl fmt::Debug for SpaceTimeTestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpaceTimeTestFunction(support {:?})", self.support)
    }
}

impl SpaceTimeTestFunction {
    /// Checks both derivatives against central differences on a 9×9 sample.
    pub fn new(
        phi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d_time: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d_space: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        support: ((f64, f64), (f64, f64)),
    ) -> Result<Self> {
        let ((ua, ub), (xa, xb)) = support;
        ensure(
            ua < ub && xa < xb && ua.is_finite() && ub.is_finite() && xa.is_finite() && xb.is_finite(),
            "space-time test function: support must be a finite rectangle",
        )?;
        let (lu, lx) = (ub - ua, xb - xa);
        for (u, x) in [(ua - 0.5 * lu, xa + 0.5 * lx), (ub + 0.5 * lu, xa + 0.5 * lx), (ua + 0.5 * lu, xa - 0.5 * lx), (ua + 0.5 * lu, xb + 0.5 * lx)] {
            ensure(phi(u, x) == 0.0, "space-time test function must vanish outside its support")?;
        }
        let mut scale = 0.0f64;
        let mut worst = 0.0f64;
        for i in 0..9 {
            for j in 0..9 {
                let u = ua + lu * (i as f64 + 0.5) / 9.0;
                let x = xa + lx * (j as f64 + 0.5) / 9.0;
                let (hu, hx) = (FD_STEP * lu, FD_STEP * lx);
                let fu = (phi(u + hu, x) - phi(u - hu, x)) / (2.0 * hu);
                let fx = (phi(u, x + hx) - phi(u, x - hx)) / (2.0 * hx);
                let (du, dx) = (d_time(u, x), d_space(u, x));
                scale = scale.max(abs(du)).max(abs(dx));
                worst = worst.max(abs(fu - du)).max(abs(fx - dx));
            }
        }
        if worst > FD_TOL * (1.0 + scale) {
            return Err(Error::Inconsistent {
                what: "supplied partial derivative disagrees with finite differences",
                at: worst,
                discrepancy: worst,
            });
        }
        Ok(SpaceTimeTestFunction {
            phi: Arc::new(phi),
            d_time: Arc::new(d_time),
            d_space: Arc::new(d_space),
            support,
        })
    }

    /// `φ(u, x) = f(u) g(x)`.
    pub fn product(time: &TestFunction, space: &TestFunction) -> Result<Self> {
        let (f, df, g, dg) = (time.f.clone(), time.df.clone(), space.f.clone(), space.df.clone());
        let (f2, g2) = (f.clone(), g.clone());
        Self::new(
            move |u, x| f(u) * g(x),
            move |u, x| df(u) * g2(x),
            move |u, x| f2(u) * dg(x),
            (time.support, space.support),
        )
    }

    pub fn eval(&self, u: f64, x: f64) -> f64 {
        (self.phi)(u, x)
    }

    pub fn d_time(&self, u: f64, x: f64) -> f64 {
        (self.d_time)(u, x)
    }

    pub fn d_space(&self, u: f64, x: f64) -> f64 {
        (self.d_space)(u, x)
    }

    pub fn support(&self) -> ((f64, f64), (f64, f64)) {
        self.support
    }
}

/// `∫_{max(x,a)}^{b} g(z) (z−x)^e dz` computed in the offset `d = z − x`.
fn offset_integral(mut g: impl FnMut(f64) -> f64, support: (f64, f64), x: f64, e: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    let (a, b) = support;
    if x >= b {
        return Ok(QuadResult::ZERO);
    }
    let hi = b - x;
    if x < a {
        quad::integrate_1d(|d| g(x + d) * powf(d, e), a - x, hi, &cfg.without_singularities())
    } else {
        quad::integrate_1d(|d| g(x + d) * powf(d, e), 0.0, hi, &cfg.with_singularities(e, 0.0))
    }
}

/// Weyl derivative of order 1/2.
pub fn weyl_derivative(f: &TestFunction, x: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    ensure(x.is_finite(), "weyl_derivative: x must be finite")?;
    let r = offset_integral(|z| f.deriv(z), f.support, x, -0.5, cfg)?;
    Ok(scale(r, 1.0 / SQRT_PI))
}

/// Weyl fractional integral `W^{−α} f(x)`.
pub fn weyl_integral(f: &TestFunction, alpha: f64, x: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    weyl_integral_of(|z| f.eval(z), f.support, alpha, x, cfg)
}

/// `W^{−α} g(x)` for a function vanishing outside `(−∞, support.1]`; the
/// integral runs over `(max(x, support.0), support.1)`.
pub fn weyl_integral_of(g: impl FnMut(f64) -> f64, support: (f64, f64), alpha: f64, x: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    ensure(alpha > 0.0 && alpha < 1.0, "weyl_integral: α must lie in (0, 1)")?;
    ensure(x.is_finite(), "weyl_integral: x must be finite")?;
    let r = offset_integral(g, support, x, alpha - 1.0, cfg)?;
    Ok(scale(r, 1.0 / gamma(alpha)))
}

/// `−W^{−1/2} ∂^{1/2} f(x) − f(x)`, with the inner derivative evaluated by
/// quadrature at a tolerance 100 times tighter than `cfg`.
pub fn weyl_composition_residual(f: &TestFunction, x: f64, cfg: &QuadConfig) -> Result<f64> {
    let inner = cfg.with_tolerances(f64::max(cfg.rel_tol * 1e-2, 1e-14), f64::max(cfg.abs_tol * 1e-2, 1e-300));
    let mut failure = None;
    let (_, b) = f.support;
    let r = weyl_integral_of(
        |z| match weyl_derivative(f, z, &inner) {
            Ok(v) => v.value,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        (f64::NEG_INFINITY, b),
        0.5,
        x,
        cfg,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(-r.value - f.eval(x))
}

fn scale(r: QuadResult, k: f64) -> QuadResult {
    QuadResult {
        value: r.value * k,
        error_estimate: r.error_estimate * abs(k),
        ..r
    }
}

/// `ν̄(w) = (δ/(2√π)) Γ_λ(−1/2, w)` for the inverse Gaussian family.
pub fn ig_tail(params: KernelParams, w: f64) -> Result<f64> {
    params.validate()?;
    ensure(w > 0.0, "ig_tail: w must be positive")?;
    Ok(params.delta / (2.0 * SQRT_PI) * tilted_incomplete_gamma(params.lambda, -0.5, w)?)
}

fn generator_raw(
    df: &dyn Fn(f64) -> f64,
    support: (f64, f64),
    params: KernelParams,
    x: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let mut failure = None;
    let r = offset_integral(
        |z| {
            let d = df(z);
            if d == 0.0 {
                return 0.0;
            }
            // Γ_λ(−1/2, w) w^{1/2} is bounded; the w^{−1/2} factor is applied by the caller.
            let w = z - x;
            match ig_tail(params, w) {
                Ok(t) => d * t * sqrt(w),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        support,
        x,
        -0.5,
        cfg,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(r)
}

/// Inverse Gaussian generator `Lf(x) = (δ/(2√π)) ∫_x^∞ f′(z) Γ_λ(−1/2, z−x) dz`.
pub fn ig_generator(f: &TestFunction, params: KernelParams, x: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    params.validate()?;
    ensure(x.is_finite(), "ig_generator: x must be finite")?;
    generator_raw(&*f.df, f.support, params, x, cfg)
}

/// Tail-form generator `b f′(x) + ∫_x^∞ f′(z) ν̄(z−x) dz`.
///
/// `ν̄` is sampled first: it must be finite, nonnegative and nonincreasing,
/// and its local power at 0 (estimated from two small arguments) must exceed
/// −1, which is also declared to the quadrature as the endpoint exponent.
pub fn tail_generator(
    f: &TestFunction,
    drift: f64,
    nu_bar: &dyn Fn(f64) -> f64,
    x: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    ensure(drift >= 0.0 && drift.is_finite(), "tail_generator: drift must be ≥ 0")?;
    ensure(x.is_finite(), "tail_generator: x must be finite")?;
    let (a, b) = f.support;
    let len = b - a;
    let mut prev = f64::INFINITY;
    for k in 0..=40 {
        let w = len * powf(10.0, -10.0 + 10.5 * k as f64 / 40.0);
        let v = nu_bar(w);
        ensure(v.is_finite() && v >= 0.0, "tail_generator: ν̄ must be finite and ≥ 0 on (0, ∞)")?;
        ensure(v <= prev * (1.0 + 1e-12), "tail_generator: ν̄ must be nonincreasing")?;
        prev = v;
    }
    let (w1, w2) = (1e-10 * len, 1e-8 * len);
    let (v1, v2) = (nu_bar(w1), nu_bar(w2));
    let exponent = if v1 > 0.0 && v2 > 0.0 { ln(v2 / v1) / ln(w2 / w1) } else { 0.0 };
    if exponent <= -1.0 + 1e-3 {
        return Err(Error::Divergent("tail_generator: ν̄ is not integrable near 0"));
    }
    let e = f64::min(exponent, 0.0);
    let r = offset_integral(
        |z| {
            let d = f.deriv(z);
            if d == 0.0 {
                return 0.0;
            }
            let w = z - x;
            d * nu_bar(w) * powf(w, -e)
        },
        f.support,
        x,
        e,
        cfg,
    )?;
    Ok(QuadResult {
        value: drift * f.deriv(x) + r.value,
        ..r
    })
}

/// The generator applied to `z ↦ φ(u, z)`, evaluated at `z`.
fn generator_at_time(phi: &SpaceTimeTestFunction, params: KernelParams, u: f64, z: f64, cfg: &QuadConfig) -> Result<f64> {
    let d = |w: f64| phi.d_space(u, w);
    Ok(generator_raw(&d, phi.support.1, params, z, cfg)?.value)
}

fn field_for(
    spec: Option<&PotentialSpec>,
    params: KernelParams,
    s: f64,
    x: f64,
    t_hi: f64,
    y_hi: f64,
    cfg: &QuadConfig,
) -> Result<TildeField> {
    let zero = PotentialSpec::Zero;
    let spec = spec.unwrap_or(&zero);
    let scfg = SeriesConfig {
        quad: QuadConfig::series().with_tolerances(f64::max(cfg.rel_tol, 1e-9), cfg.abs_tol),
        ..Default::default()
    };
    tilde_field(spec, params, s, x, t_hi, y_hi, &scfg)
}

fn z_knots(params: KernelParams, x: f64, tau: f64, hi: f64, extra: &[f64]) -> Vec<Knot> {
    let m = params.mode(tau);
    let mut k: Vec<Knot> = [0.3, 1.0, 3.0, 10.0].iter().map(|f| Knot::plain(x + f * m)).collect();
    k.extend(extra.iter().map(|e| Knot::plain(*e)));
    k.retain(|k| k.at > x && k.at < hi);
    k
}

/// Residual of `∫_s^∞∫ p̃(s,x,u,z)[∂_u φ + Lφ + qφ](u,z) dz du = −φ(s,x)`,
/// normalized by `1 + |φ(s,x)|`. Without a potential `p̃ = ρ_1`.
#[allow(clippy::too_many_arguments)]
pub fn fundsol_residual(
    phi: &SpaceTimeTestFunction,
    spec: Option<&PotentialSpec>,
    params: KernelParams,
    s: f64,
    x: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    params.validate()?;
    cfg.validate()?;
    let ((ua, ub), (za, zb)) = phi.support;
    let target = phi.eval(s, x);
    if ub <= s || zb <= x {
        return Ok(abs(target) / (1.0 + abs(target)));
    }
    let field = field_for(spec, params, s, x, ub, zb, cfg)?;
    let q = |u: f64, z: f64| spec.map_or(0.0, |q| q.eval(u, z));
    let eff = DilatedKernel::unit(params).effective();
    let inner_cfg = cfg.with_tolerances(f64::max(cfg.rel_tol * 1e-2, 1e-14), f64::max(cfg.abs_tol * 1e-2, 1e-300));
    let u_lo = f64::max(s, ua);
    let mut failure = None;
    let r = quad::integrate_nested(
        |u, z| {
            let p = field.eval(u, z);
            if p == 0.0 {
                return 0.0;
            }
            let l = match generator_at_time(phi, params, u, z, &inner_cfg) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            };
            let v = phi.eval(u, z);
            p * (phi.d_time(u, z) + l + q(u, z) * v)
        },
        u_lo,
        ub,
        &[],
        |u| InnerRange::finite(x, zb).with_knots(z_knots(eff, x, u - s, zb, &[za])),
        cfg,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(abs(r.value + target) / (1.0 + abs(target)))
}

/// Residual of
/// `∫ p̃(s,x,t,z)φ(z)dz − φ(x) = ∫_s^t∫ p̃(s,x,u,z)[Lφ(z) + q(u,z)φ(z)] dz du`,
/// normalized by `1 + |φ(x)|`.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_identity_residual(
    phi: &TestFunction,
    spec: Option<&PotentialSpec>,
    params: KernelParams,
    s: f64,
    t: f64,
    x: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    params.validate()?;
    cfg.validate()?;
    ensure(s < t, "semigroup identity: need s < t")?;
    let (a, b) = phi.support;
    let fx = phi.eval(x);
    if b <= x {
        return Ok(abs(fx) / (1.0 + abs(fx)));
    }
    let field = field_for(spec, params, s, x, t, b, cfg)?;
    let q = |u: f64, z: f64| spec.map_or(0.0, |q| q.eval(u, z));
    let eff = DilatedKernel::unit(params).effective();
    let inner_cfg = cfg.with_tolerances(f64::max(cfg.rel_tol * 1e-2, 1e-14), f64::max(cfg.abs_tol * 1e-2, 1e-300));
    let lhs = quad::integrate_with_knots(
        |z| field.eval(t, z) * phi.eval(z),
        x,
        b,
        &z_knots(eff, x, t - s, b, &[a]),
        cfg,
    )?;
    let mut failure = None;
    let rhs = quad::integrate_nested(
        |u, z| {
            let p = field.eval(u, z);
            if p == 0.0 {
                return 0.0;
            }
            let l = match ig_generator(phi, params, z, &inner_cfg) {
                Ok(v) => v.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            };
            p * (l + q(u, z) * phi.eval(z))
        },
        s,
        t,
        &[],
        |u| InnerRange::finite(x, b).with_knots(z_knots(eff, x, u - s, b, &[a])),
        cfg,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(abs(lhs.value - fx - rhs.value) / (1.0 + abs(fx)))
}
