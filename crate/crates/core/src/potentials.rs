//! Potentials `q(u, z) ≥ 0` and Kato-type functionals.
//!
//! - `I_r(q) = sup_x ∫_{|x−z|<r} q(z)|x−z|^{α−1} dz`
//! - `N_h^c(q) = sup_{s,x} ∫_s^{s+h}∫ ρ_c(s,x,u,z) q(u,z) dz du
//!   + sup_{t,y} ∫_{t−h}^t∫ ρ_c(u,z,t,y) q(u,z) dz du`
//!
//! For time-independent `q` the time integral is done in closed form:
//! `∫_s^{s+h}∫ ρ_c(s,x,u,z) q(z) dz du = ∫_0^∞ k_h(w) q(x+w) dw` with
//! `k_h(w) = ∫_0^h ρ_c(0,0,u,w) du`.
//!
//! Certificates record membership `q ∈ N(ρ_b, ρ_a, (b/a)^{1/2}, η, Q)` with
//! linear `Q(s,t) = Q_slope·(t−s)`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::fourg::{subordinator_4g_constant, FourGConstants};
use crate::kernels::{c_prime, DilatedKernel, KernelParams};
use crate::mathx::{abs, ceil, erf, erfc_diff, exp, expm1, floor, powf, sqrt, SQRT_PI};
use crate::optimize::golden_max;
use crate::quad::{self, InnerRange, Knot, QuadConfig, QuadResult};

/// A user-supplied potential `(u, z) ↦ q(u, z)`.
pub type PotentialFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// What a user callable declares about itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeclaredBounds {
    pub time_independent: bool,
    /// Points in space where `q` may be singular, with the algebraic exponent.
    pub space_singularities: Vec<Knot>,
    /// Times where `q` may be singular or jump.
    pub time_singularities: Vec<Knot>,
    /// `sup q`, when finite and known.
    pub sup: Option<f64>,
}

/// Potentials from a closed vocabulary plus user callables.
#[derive(Clone)]
pub enum PotentialSpec {
    Zero,
    /// `q ≡ β`.
    Constant { beta: f64 },
    /// `q(z) = |z|^{ε−1/2}`, `ε ∈ (0, 1/2]`.
    PowerLaw { eps: f64 },
    /// `q(u, z) = u_+^{−1/2}`.
    TimeInversePower,
    /// `q(u, z) = η z 1_{(0, 1/u)}(z)`.
    BridgeExample { eta: f64 },
    /// `q(u, z) = η z² 1_F(u, z)` with `F = ∪_n (1/(n+1), n) × (n−1, n)`.
    StaircaseExample { eta: f64 },
    /// Time-independent `q ∈ L^r(ℝ)` with declared norm `‖q‖_r`.
    LrSample { r: f64, f: PotentialFn, norm: f64, bounds: DeclaredBounds },
    UserCallable { f: PotentialFn, bounds: DeclaredBounds },
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::LrSample { r, norm, .. } => write!(f, "LrSample {{ r: {r}, norm: {norm} }}"),
            PotentialSpec::UserCallable { bounds, .. } => write!(f, "UserCallable {{ {bounds:?} }}"),
            other => write!(f, "{other}"),
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Zero => write!(f, "zero"),
            PotentialSpec::Constant { beta } => write!(f, "const:beta={beta}"),
            PotentialSpec::PowerLaw { eps } => write!(f, "powerlaw:eps={eps}"),
            PotentialSpec::TimeInversePower => write!(f, "timepow"),
            PotentialSpec::BridgeExample { eta } => write!(f, "bridge:eta={eta}"),
            PotentialSpec::StaircaseExample { eta } => write!(f, "staircase:eta={eta}"),
            PotentialSpec::LrSample { r, norm, .. } => write!(f, "lr:r={r},norm={norm}"),
            PotentialSpec::UserCallable { .. } => write!(f, "user"),
        }
    }
}

fn parse_param(body: &str, key: &str) -> Result<f64> {
    let (k, v) = body
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected `{key}=<value>`, got `{body}`")))?;
    if k.trim() != key {
        return Err(Error::Parse(format!("unknown parameter `{}` (expected `{key}`)", k.trim())));
    }
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("`{}` is not a number", v.trim())))
}

impl FromStr for PotentialSpec {
    type Err = Error;

    /// Parses `zero`, `const:beta=2`, `powerlaw:eps=0.25`, `timepow`,
    /// `bridge:eta=3`, `staircase:eta=1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = match s.split_once(':') {
            Some((n, b)) => (n.trim(), Some(b)),
            None => (s, None),
        };
        let need = |key: &str| -> Result<f64> {
            match body {
                Some(b) => parse_param(b, key),
                None => Err(Error::Parse(format!("`{name}` needs `{name}:{key}=<value>`"))),
            }
        };
        let spec = match name.to_ascii_lowercase().as_str() {
            "zero" => PotentialSpec::Zero,
            "const" | "constant" => PotentialSpec::constant(need("beta")?)?,
            "powerlaw" => PotentialSpec::power_law(need("eps")?)?,
            "timepow" => PotentialSpec::TimeInversePower,
            "bridge" => PotentialSpec::bridge(need("eta")?)?,
            "staircase" => PotentialSpec::staircase(need("eta")?)?,
            other => return Err(Error::Parse(format!("unknown potential `{other}`"))),
        };
        if matches!(spec, PotentialSpec::Zero | PotentialSpec::TimeInversePower) && body.is_some() {
            return Err(Error::Parse(format!("`{name}` takes no parameters")));
        }
        Ok(spec)
    }
}

/// Rejects callables that are negative, NaN, or infinite on more than an
/// isolated sample point of a coarse grid.
fn screen_callable(f: &PotentialFn, time_independent: bool) -> Result<()> {
    let mut infinite = 0;
    let times: &[f64] = if time_independent { &[0.5] } else { &[-1.5, -0.3, 0.1, 0.7, 1.9, 4.3] };
    for &u in times {
        for i in 0..=160 {
            let z = -4.0 + 0.05 * i as f64 + 1e-3;
            let v = f(u, z);
            if v.is_nan() || v < 0.0 {
                return Err(Error::Inconsistent {
                    what: "potential must be nonnegative",
                    at: z,
                    discrepancy: v,
                });
            }
            if v.is_infinite() {
                infinite += 1;
            }
        }
    }
    if infinite > 1 {
        return Err(Error::Domain("potential is infinite on a set of positive measure"));
    }
    Ok(())
}

impl PotentialSpec {
    pub fn constant(beta: f64) -> Result<Self> {
        ensure(beta >= 0.0 && beta.is_finite(), "Constant requires finite β ≥ 0")?;
        Ok(PotentialSpec::Constant { beta })
    }

    pub fn power_law(eps: f64) -> Result<Self> {
        ensure(eps > 0.0 && eps <= 0.5, "PowerLaw requires ε ∈ (0, 1/2]")?;
        Ok(PotentialSpec::PowerLaw { eps })
    }

    pub fn bridge(eta: f64) -> Result<Self> {
        ensure(eta >= 0.0 && eta.is_finite(), "BridgeExample requires finite η ≥ 0")?;
        Ok(PotentialSpec::BridgeExample { eta })
    }

    pub fn staircase(eta: f64) -> Result<Self> {
        ensure(eta >= 0.0 && eta.is_finite(), "StaircaseExample requires finite η ≥ 0")?;
        Ok(PotentialSpec::StaircaseExample { eta })
    }

    /// A time-independent `q ∈ L^r` given as `z ↦ q(z)` with declared norm.
    pub fn lr_sample(r: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static, norm: f64, bounds: DeclaredBounds) -> Result<Self> {
        ensure(r > 2.0 && r.is_finite(), "LrSample requires r > 2")?;
        ensure(norm >= 0.0 && norm.is_finite(), "LrSample requires a finite norm")?;
        let f: PotentialFn = Arc::new(move |_u, z| f(z));
        screen_callable(&f, true)?;
        Ok(PotentialSpec::LrSample {
            r,
            f,
            norm,
            bounds: DeclaredBounds {
                time_independent: true,
                ..bounds
            },
        })
    }

    pub fn user(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, bounds: DeclaredBounds) -> Result<Self> {
        let f: PotentialFn = Arc::new(f);
        screen_callable(&f, bounds.time_independent)?;
        Ok(PotentialSpec::UserCallable { f, bounds })
    }

    /// `q(u, z)`.
    pub fn eval(&self, u: f64, z: f64) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Constant { beta } => *beta,
            PotentialSpec::PowerLaw { eps } => {
                let e = eps - 0.5;
                if e == 0.0 {
                    1.0
                } else if z == 0.0 {
                    f64::INFINITY
                } else {
                    powf(abs(z), e)
                }
            }
            PotentialSpec::TimeInversePower => {
                if u > 0.0 {
                    1.0 / sqrt(u)
                } else {
                    0.0
                }
            }
            PotentialSpec::BridgeExample { eta } => {
                if u > 0.0 && z > 0.0 && z * u < 1.0 {
                    eta * z
                } else {
                    0.0
                }
            }
            PotentialSpec::StaircaseExample { eta } => {
                if in_staircase(u, z) {
                    eta * z * z
                } else {
                    0.0
                }
            }
            PotentialSpec::LrSample { f, .. } | PotentialSpec::UserCallable { f, .. } => f(u, z),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            PotentialSpec::Zero | PotentialSpec::Constant { .. } | PotentialSpec::PowerLaw { .. } => true,
            PotentialSpec::LrSample { .. } => true,
            PotentialSpec::UserCallable { bounds, .. } => bounds.time_independent,
            _ => false,
        }
    }

    /// `sup q` when finite and known.
    pub fn sup(&self) -> Option<f64> {
        match self {
            PotentialSpec::Zero => Some(0.0),
            PotentialSpec::Constant { beta } => Some(*beta),
            PotentialSpec::PowerLaw { eps } if *eps == 0.5 => Some(1.0),
            PotentialSpec::LrSample { bounds, .. } | PotentialSpec::UserCallable { bounds, .. } => bounds.sup,
            _ => None,
        }
    }

    /// `q ≡ β` for some `β`.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            PotentialSpec::Zero => Some(0.0),
            PotentialSpec::Constant { beta } => Some(*beta),
            PotentialSpec::PowerLaw { eps } if *eps == 0.5 => Some(1.0),
            _ => None,
        }
    }

    /// Breakpoints of `z ↦ q(u, z)` inside `(lo, hi)`, with exponents at
    /// singular points. `hi` may be `+∞`.
    pub fn space_knots(&self, u: f64, lo: f64, hi: f64) -> Vec<Knot> {
        let inside = |k: &Knot| k.at > lo && k.at < hi;
        let mut out = Vec::new();
        match self {
            PotentialSpec::PowerLaw { eps } if *eps < 0.5 => out.push(Knot::singular(0.0, eps - 0.5)),
            PotentialSpec::BridgeExample { .. } => {
                if u > 0.0 {
                    out.push(Knot::plain(0.0));
                    out.push(Knot::plain(1.0 / u));
                }
            }
            PotentialSpec::StaircaseExample { .. } => {
                // Integer cell edges where the indicator can switch.
                let a = f64::max(lo, -1.0);
                let b = f64::min(hi, f64::max(a, 0.0) + 64.0);
                let mut n = ceil(a);
                while n <= floor(b) {
                    out.push(Knot::plain(n));
                    n += 1.0;
                }
            }
            PotentialSpec::LrSample { bounds, .. } | PotentialSpec::UserCallable { bounds, .. } => {
                out.extend(bounds.space_singularities.iter().copied());
            }
            _ => {}
        }
        out.retain(inside);
        out
    }

    /// Exponent of `q(u, ·)` at `z0` when `z0` is a declared singular point.
    pub fn space_exponent_at(&self, u: f64, z0: f64) -> f64 {
        let tiny = 1e-14 * f64::max(1.0, abs(z0));
        self.space_knots(u, z0 - 2.0 * tiny, z0 + 2.0 * tiny)
            .iter()
            .filter(|k| abs(k.at - z0) <= tiny)
            .map(|k| k.exponent)
            .fold(0.0, f64::min)
    }

    /// Breakpoints of `u ↦ q(u, ·)` inside `(lo, hi)`.
    pub fn time_knots(&self, lo: f64, hi: f64) -> Vec<Knot> {
        let mut out = Vec::new();
        match self {
            PotentialSpec::TimeInversePower => out.push(Knot::singular(0.0, -0.5)),
            PotentialSpec::BridgeExample { .. } => out.push(Knot::plain(0.0)),
            PotentialSpec::StaircaseExample { .. } => {
                for n in 1..=64 {
                    out.push(Knot::plain(1.0 / (n as f64 + 1.0)));
                    out.push(Knot::plain(n as f64));
                }
            }
            PotentialSpec::UserCallable { bounds, .. } => out.extend(bounds.time_singularities.iter().copied()),
            _ => {}
        }
        out.retain(|k| k.at > lo && k.at < hi);
        out
    }

    /// Exponent of `u ↦ q(u, ·)` at `u0`.
    pub fn time_exponent_at(&self, u0: f64) -> f64 {
        let tiny = 1e-14 * f64::max(1.0, abs(u0));
        self.time_knots(u0 - 2.0 * tiny, u0 + 2.0 * tiny)
            .iter()
            .map(|k| k.exponent)
            .fold(0.0, f64::min)
    }

    /// `q'(u, z) = q(−u, −z)`.
    pub fn reflected(&self) -> Reflected<'_> {
        Reflected(self)
    }
}

fn in_staircase(u: f64, z: f64) -> bool {
    if !(z > 0.0) || z == ceil(z) {
        return false;
    }
    let n = ceil(z);
    u > 1.0 / (n + 1.0) && u < n
}

/// Uniform access to a potential and its reflection.
pub trait Potential {
    fn eval(&self, u: f64, z: f64) -> f64;
    fn space_knots(&self, u: f64, lo: f64, hi: f64) -> Vec<Knot>;
    fn space_exponent_at(&self, u: f64, z0: f64) -> f64;
    fn time_knots(&self, lo: f64, hi: f64) -> Vec<Knot>;
    fn time_exponent_at(&self, u0: f64) -> f64;
    fn is_time_independent(&self) -> bool;
}

impl Potential for PotentialSpec {
    fn eval(&self, u: f64, z: f64) -> f64 {
        PotentialSpec::eval(self, u, z)
    }
    fn space_knots(&self, u: f64, lo: f64, hi: f64) -> Vec<Knot> {
        PotentialSpec::space_knots(self, u, lo, hi)
    }
    fn space_exponent_at(&self, u: f64, z0: f64) -> f64 {
        PotentialSpec::space_exponent_at(self, u, z0)
    }
    fn time_knots(&self, lo: f64, hi: f64) -> Vec<Knot> {
        PotentialSpec::time_knots(self, lo, hi)
    }
    fn time_exponent_at(&self, u0: f64) -> f64 {
        PotentialSpec::time_exponent_at(self, u0)
    }
    fn is_time_independent(&self) -> bool {
        PotentialSpec::is_time_independent(self)
    }
}

/// The reflected potential `(u, z) ↦ q(−u, −z)`.
#[derive(Debug, Clone, Copy)]
pub struct Reflected<'a>(pub &'a PotentialSpec);

fn mirror(knots: Vec<Knot>) -> Vec<Knot> {
    knots.into_iter().map(|k| Knot { at: -k.at, ..k }).collect()
}

impl Potential for Reflected<'_> {
    fn eval(&self, u: f64, z: f64) -> f64 {
        self.0.eval(-u, -z)
    }
    fn space_knots(&self, u: f64, lo: f64, hi: f64) -> Vec<Knot> {
        mirror(self.0.space_knots(-u, -hi, -lo))
    }
    fn space_exponent_at(&self, u: f64, z0: f64) -> f64 {
        self.0.space_exponent_at(-u, -z0)
    }
    fn time_knots(&self, lo: f64, hi: f64) -> Vec<Knot> {
        mirror(self.0.time_knots(-hi, -lo))
    }
    fn time_exponent_at(&self, u0: f64) -> f64 {
        self.0.time_exponent_at(-u0)
    }
    fn is_time_independent(&self) -> bool {
        self.0.is_time_independent()
    }
}

// ---------------------------------------------------------------------------
// Truncated potential kernel

/// `k_h(w) = ∫_0^h ρ_c(0,0,u,w) du`, in closed form.
pub fn truncated_potential_kernel(kernel: &DilatedKernel, h: f64, w: f64) -> f64 {
    if !(w > 0.0) || !(h > 0.0) {
        return 0.0;
    }
    let p = kernel.effective();
    let d = p.delta;
    let a = d * d / (4.0 * w);
    let pref = d * powf(w, -1.5) / (2.0 * SQRT_PI);
    if p.lambda == 0.0 {
        // ∫_0^h u e^{−A u²} du = (1 − e^{−A h²}) / (2A)
        return pref * (-expm1(-a * h * h)) / (2.0 * a);
    }
    // Exponent −A(u − m)², m = 2√λ w / δ.
    let m = 2.0 * sqrt(p.lambda) * w / d;
    let sa = sqrt(a);
    let gauss_part = (exp(-p.lambda * w) - exp(-a * (h - m) * (h - m))) / (2.0 * a);
    // erf(√A(h−m)) + erf(√A m), written to avoid cancellation when h < m.
    let erf_sum = if h >= m {
        erf(sa * (h - m)) + erf(sa * m)
    } else {
        erfc_diff(sa * (m - h), sa * m)
    };
    let linear_part = m * SQRT_PI / (2.0 * sa) * erf_sum;
    pref * (gauss_part + linear_part)
}

fn kernel_scale(kernel: &DilatedKernel, h: f64) -> Vec<f64> {
    let p = kernel.effective();
    let base = p.delta * p.delta * h * h / 4.0;
    let mut v: Vec<f64> = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0].iter().map(|f| f * base).collect();
    let mean = p.mean(h);
    if mean.is_finite() {
        v.push(mean);
        v.push(4.0 * mean);
    }
    v.sort_by(f64::total_cmp);
    v
}

/// `∫_0^∞ k_h(w) q(x + sign·w) dw` for time-independent `q`.
fn potential_kernel_integral(
    spec: &PotentialSpec,
    kernel: &DilatedKernel,
    h: f64,
    x: f64,
    sign: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let mut knots: Vec<Knot> = kernel_scale(kernel, h).into_iter().map(Knot::plain).collect();
    for k in spec.space_knots(0.0, f64::NEG_INFINITY, f64::INFINITY) {
        let w = sign * (k.at - x);
        if w > 0.0 {
            knots.push(Knot { at: w, ..k });
        }
    }
    // k_h(w) ~ w^{−1/2} at 0, combined with a singularity of q sitting at x.
    let e0 = -0.5 + spec.space_exponent_at(0.0, x);
    if !(e0 > -1.0) {
        return Err(Error::Divergent("potential too singular for the Kato functional"));
    }
    quad::integrate_semiinfinite_with_knots(
        |w| {
            let k = truncated_potential_kernel(kernel, h, w);
            if k == 0.0 {
                return 0.0;
            }
            let q = spec.eval(0.0, x + sign * w);
            if q == 0.0 {
                0.0
            } else {
                k * q
            }
        },
        0.0,
        &knots,
        &cfg.with_singularities(e0, 0.0),
    )
}

/// Forward short-horizon integral `∫_s^{s+h}∫ ρ_c(s,x,u,z) q(u,z) dz du`.
pub fn kato_n_forward_at(
    spec: &PotentialSpec,
    kernel: &DilatedKernel,
    h: f64,
    s: f64,
    x: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    ensure(h > 0.0 && h.is_finite(), "kato_N: h must be positive and finite")?;
    if let Some(beta) = spec.as_constant() {
        if beta == 0.0 {
            return Ok(QuadResult::ZERO);
        }
    }
    if spec.is_time_independent() {
        potential_kernel_integral(spec, kernel, h, x, 1.0, cfg)
    } else {
        forward_spacetime(spec, kernel, h, s, x, cfg)
    }
}

/// Backward short-horizon integral `∫_{t−h}^t∫ ρ_c(u,z,t,y) q(u,z) dz du`.
pub fn kato_n_backward_at(
    spec: &PotentialSpec,
    kernel: &DilatedKernel,
    h: f64,
    t: f64,
    y: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    ensure(h > 0.0 && h.is_finite(), "kato_N: h must be positive and finite")?;
    if let Some(beta) = spec.as_constant() {
        if beta == 0.0 {
            return Ok(QuadResult::ZERO);
        }
    }
    if spec.is_time_independent() {
        potential_kernel_integral(spec, kernel, h, y, -1.0, cfg)
    } else {
        forward_spacetime(&spec.reflected(), kernel, h, -t, -y, cfg)
    }
}

/// `∫_s^{s+h} ∫_x^∞ ρ_c(s,x,u,z) q(u,z) dz du` by nested quadrature.
pub fn forward_spacetime<P: Potential + ?Sized>(
    q: &P,
    kernel: &DilatedKernel,
    h: f64,
    s: f64,
    x: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let eff = kernel.effective();
    let space_e = q.space_exponent_at(s, x);
    // Mass of ρ(s,x,u,·) sits at distance O((u−s)²) from x.
    let time_e = q.time_exponent_at(s) + 2.0 * space_e;
    if !(time_e > -1.0) || !(space_e > -1.0) {
        return Err(Error::Divergent("potential too singular at the starting point"));
    }
    let outer_knots = q.time_knots(s, s + h);
    quad::integrate_nested(
        |u, z| {
            let r = kernel.eval(s, x, u, z);
            if r == 0.0 {
                return 0.0;
            }
            let v = q.eval(u, z);
            if v == 0.0 {
                0.0
            } else {
                r * v
            }
        },
        s,
        s + h,
        &outer_knots,
        |u| {
            let mut knots: Vec<Knot> = eff
                .increment_knots(u - s)
                .into_iter()
                .map(|w| Knot::plain(x + w))
                .collect();
            knots.extend(q.space_knots(u, x, f64::INFINITY));
            InnerRange {
                lo: x,
                hi: None,
                knots,
                lo_exponent: q.space_exponent_at(u, x),
                hi_exponent: 0.0,
            }
        },
        &cfg.with_singularities(time_e, 0.0),
    )
}

// ---------------------------------------------------------------------------
// Sup search

/// Search window for the suprema in `I_r` and `N_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_points: usize,
    /// Time window, used only for time-dependent potentials.
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_points: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid {
            x_lo: -2.0,
            x_hi: 2.0,
            x_points: 512,
            t_lo: 0.0,
            t_hi: 2.0,
            t_points: 9,
        }
    }
}

impl SearchGrid {
    fn validate(&self) -> Result<()> {
        ensure(self.x_hi > self.x_lo && self.x_points >= 2, "search grid: empty x window")?;
        ensure(self.t_hi >= self.t_lo && self.t_points >= 1, "search grid: empty t window")
    }

    /// Uniform grid plus geometric neighbourhoods of the given points.
    fn x_candidates(&self, special: &[f64]) -> Vec<f64> {
        let n = self.x_points;
        let mut v: Vec<f64> = (0..n)
            .map(|i| self.x_lo + (self.x_hi - self.x_lo) * i as f64 / (n - 1) as f64)
            .collect();
        for &p in special {
            if p < self.x_lo || p > self.x_hi {
                continue;
            }
            v.push(p);
            let mut d = 1e-9;
            while d < self.x_hi - self.x_lo {
                for c in [p - d, p + d] {
                    if c >= self.x_lo && c <= self.x_hi {
                        v.push(c);
                    }
                }
                d *= 2.5;
            }
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn t_candidates(&self) -> Vec<f64> {
        if self.t_points == 1 {
            return vec![self.t_lo];
        }
        (0..self.t_points)
            .map(|i| self.t_lo + (self.t_hi - self.t_lo) * i as f64 / (self.t_points - 1) as f64)
            .collect()
    }
}

/// A supremum located by search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupEstimate {
    pub value: f64,
    pub error_estimate: f64,
    /// Time coordinate of the maximizer (0 for time-independent searches).
    pub at_time: f64,
    pub at_space: f64,
    pub converged: bool,
}

impl SupEstimate {
    const ZERO: SupEstimate = SupEstimate {
        value: 0.0,
        error_estimate: 0.0,
        at_time: 0.0,
        at_space: 0.0,
        converged: true,
    };
}

/// Maximizes `g` over a sorted candidate set then refines by golden section.
fn sup_1d(mut g: impl FnMut(f64) -> Result<QuadResult>, candidates: &[f64]) -> Result<(f64, QuadResult)> {
    let mut best_x = candidates[0];
    let mut best = g(best_x)?;
    let mut best_i = 0;
    for (i, &c) in candidates.iter().enumerate().skip(1) {
        let r = g(c)?;
        if r.value > best.value {
            best = r;
            best_x = c;
            best_i = i;
        }
    }
    if candidates.len() > 2 {
        let lo = candidates[best_i.saturating_sub(1)];
        let hi = candidates[(best_i + 1).min(candidates.len() - 1)];
        let mut failure = None;
        let (xr, _) = golden_max(
            |x| match g(x) {
                Ok(r) => r.value,
                Err(e) => {
                    failure = Some(e);
                    f64::NEG_INFINITY
                }
            },
            lo,
            hi,
            1e-10 * f64::max(1.0, abs(best_x)),
            120,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let r = g(xr)?;
        if r.value > best.value {
            return Ok((xr, r));
        }
    }
    Ok((best_x, best))
}

fn singular_points(spec: &PotentialSpec) -> Vec<f64> {
    spec.space_knots(0.0, f64::NEG_INFINITY, f64::INFINITY)
        .iter()
        .map(|k| k.at)
        .collect()
}

/// `I_r(q)(x) = ∫_{|x−z|<r} q(z)|x−z|^{α−1} dz` at one `x`.
pub fn kato_i_at(spec: &PotentialSpec, alpha: f64, r: f64, x: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    ensure(alpha > 0.0 && alpha < 1.0, "kato_I: α must lie in (0, 1)")?;
    ensure(r > 0.0 && r.is_finite(), "kato_I: r must be positive")?;
    ensure(spec.is_time_independent(), "kato_I: potential must be time-independent")?;
    if spec.as_constant() == Some(0.0) {
        return Ok(QuadResult::ZERO);
    }
    let weight_e = alpha - 1.0;
    let e0 = weight_e + spec.space_exponent_at(0.0, x);
    if !(e0 > -1.0) {
        return Err(Error::Divergent("kato_I: inner integral diverges"));
    }
    let f = |z: f64| {
        let q = spec.eval(0.0, z);
        if q == 0.0 {
            0.0
        } else {
            q * powf(abs(x - z), weight_e)
        }
    };
    let left_knots = spec.space_knots(0.0, x - r, x);
    let right_knots = spec.space_knots(0.0, x, x + r);
    let el = spec.space_exponent_at(0.0, x - r);
    let er = spec.space_exponent_at(0.0, x + r);
    let left = quad::integrate_with_knots(f, x - r, x, &left_knots, &cfg.with_singularities(el, e0))?;
    let right = quad::integrate_with_knots(f, x, x + r, &right_knots, &cfg.with_singularities(e0, er))?;
    Ok(QuadResult {
        value: left.value + right.value,
        error_estimate: left.error_estimate + right.error_estimate,
        evaluations: left.evaluations + right.evaluations,
        converged: left.converged && right.converged,
    })
}

/// `I_r(q)` with the supremum over `x`.
///
/// For `Zero`, `Constant` and `PowerLaw` the supremum location is known:
/// translation invariance for constants, and for `|z|^{ε−1/2}` (symmetric and
/// decreasing in `|z|`) the integral is largest at the singularity `x = 0`.
/// Other potentials are searched on `search`.
pub fn kato_i(spec: &PotentialSpec, alpha: f64, r: f64, search: &SearchGrid, cfg: &QuadConfig) -> Result<SupEstimate> {
    let pinned = match spec {
        PotentialSpec::Zero | PotentialSpec::Constant { .. } | PotentialSpec::PowerLaw { .. } => Some(0.0),
        _ => None,
    };
    if let Some(x) = pinned {
        let v = kato_i_at(spec, alpha, r, x, cfg)?;
        return Ok(SupEstimate {
            value: v.value,
            error_estimate: v.error_estimate,
            at_time: 0.0,
            at_space: x,
            converged: v.converged,
        });
    }
    search.validate()?;
    let cands = search.x_candidates(&singular_points(spec));
    let (x, v) = sup_1d(|x| kato_i_at(spec, alpha, r, x, cfg), &cands)?;
    Ok(SupEstimate {
        value: v.value,
        error_estimate: v.error_estimate,
        at_time: 0.0,
        at_space: x,
        converged: v.converged,
    })
}

/// `N_h^c(q)` with both suprema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatoN {
    pub value: f64,
    pub error_estimate: f64,
    pub forward: SupEstimate,
    pub backward: SupEstimate,
    pub converged: bool,
}

/// `N_h^c(q)`.
///
/// Constants are translation invariant, so both suprema are attained at
/// every point. For time-independent `q` the time coordinate drops out and
/// the spatial supremum is searched on `search` (refined around declared
/// singular points). For `PowerLaw`, `q` is even, so the backward supremum
/// equals the forward one. Time-dependent potentials are searched over the
/// declared time window as well.
pub fn kato_n(
    spec: &PotentialSpec,
    params: KernelParams,
    c: f64,
    h: f64,
    search: &SearchGrid,
    cfg: &QuadConfig,
) -> Result<KatoN> {
    let kernel = DilatedKernel::new(params, c)?;
    ensure(h > 0.0 && h.is_finite(), "kato_N: h must be positive and finite")?;
    let (forward, backward) = if spec.as_constant().is_some() {
        let f = kato_n_forward_at(spec, &kernel, h, 0.0, 0.0, cfg)?;
        let b = kato_n_backward_at(spec, &kernel, h, 0.0, 0.0, cfg)?;
        (sup_of(f, 0.0, 0.0), sup_of(b, 0.0, 0.0))
    } else if spec.is_time_independent() {
        search.validate()?;
        let special = singular_points(spec);
        let cands = search.x_candidates(&special);
        let (xf, f) = sup_1d(|x| kato_n_forward_at(spec, &kernel, h, 0.0, x, cfg), &cands)?;
        let forward = sup_of(f, 0.0, xf);
        let backward = if matches!(spec, PotentialSpec::PowerLaw { .. }) {
            SupEstimate {
                at_space: -xf,
                ..forward
            }
        } else {
            let (yb, b) = sup_1d(|y| kato_n_backward_at(spec, &kernel, h, 0.0, y, cfg), &cands)?;
            sup_of(b, 0.0, yb)
        };
        (forward, backward)
    } else {
        search.validate()?;
        let forward = sup_2d(|s, x| kato_n_forward_at(spec, &kernel, h, s, x, cfg), search)?;
        let backward = sup_2d(|t, y| kato_n_backward_at(spec, &kernel, h, t, y, cfg), search)?;
        (forward, backward)
    };
    Ok(KatoN {
        value: forward.value + backward.value,
        error_estimate: forward.error_estimate + backward.error_estimate,
        forward,
        backward,
        converged: forward.converged && backward.converged,
    })
}

fn sup_of(r: QuadResult, t: f64, x: f64) -> SupEstimate {
    SupEstimate {
        value: r.value,
        error_estimate: r.error_estimate,
        at_time: t,
        at_space: x,
        converged: r.converged,
    }
}

fn sup_2d(
    mut g: impl FnMut(f64, f64) -> Result<QuadResult>,
    search: &SearchGrid,
) -> Result<SupEstimate> {
    let coarse = SearchGrid {
        x_points: search.x_points.min(64),
        ..*search
    };
    let xs = coarse.x_candidates(&[]);
    let mut best = SupEstimate {
        value: f64::NEG_INFINITY,
        ..SupEstimate::ZERO
    };
    for &t in &search.t_candidates() {
        for &x in &xs {
            let r = g(t, x)?;
            if r.value > best.value {
                best = sup_of(r, t, x);
            }
        }
    }
    // One round of coordinate refinement in x.
    let dx = (search.x_hi - search.x_lo) / (xs.len().max(2) - 1) as f64;
    let local = [best.at_space - dx, best.at_space, best.at_space + dx];
    let t0 = best.at_time;
    let (x, r) = sup_1d(|x| g(t0, x), &local)?;
    if r.value > best.value {
        best = sup_of(r, t0, x);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Certificates

/// Which construction produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateSource {
    FromN,
    FromI,
    FromLr,
}

impl fmt::Display for CertificateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CertificateSource::FromN => "from-N",
            CertificateSource::FromI => "from-I",
            CertificateSource::FromLr => "from-Lr",
        })
    }
}

/// `q ∈ N(ρ_b, ρ_a, C, η, Q)` with `C = (b/a)^{1/2}` and `Q(s,t) = Q_slope·(t−s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityCertificate {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eta: f64,
    pub q_slope: f64,
    pub h: f64,
    pub source: CertificateSource,
    pub d: f64,
    pub d_prime: f64,
}

impl AdmissibilityCertificate {
    fn new(consts: &FourGConstants, eta: f64, q_slope: f64, h: f64, source: CertificateSource) -> Self {
        AdmissibilityCertificate {
            a: consts.a,
            b: consts.b,
            c: sqrt(consts.b / consts.a),
            eta,
            q_slope,
            h,
            source,
            d: consts.d,
            d_prime: consts.d_prime,
        }
    }

    /// `Q(s, t) = Q_slope·(t − s)`.
    pub fn q(&self, s: f64, t: f64) -> f64 {
        self.q_slope * (t - s)
    }
}

/// Result of a certification attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Certification {
    Certified(AdmissibilityCertificate),
    Rejected {
        /// The measured functional (`N_h` or `I_{h²}`).
        measured: f64,
        error_estimate: f64,
        threshold: f64,
    },
}

impl Certification {
    pub fn certificate(&self) -> Option<&AdmissibilityCertificate> {
        match self {
            Certification::Certified(c) => Some(c),
            Certification::Rejected { .. } => None,
        }
    }
}

/// Certification through `N_h^{(b−a)∧a}(q) ≤ η/D′`, giving `Q(s,t) = η(t−s)/h`.
///
/// The comparison allows for the quadrature error estimate of the measured
/// functional: the certificate is issued when `N − err ≤ η/D′`.
#[allow(clippy::too_many_arguments)]
pub fn certify_from_n(
    spec: &PotentialSpec,
    params: KernelParams,
    a: f64,
    b: f64,
    eta: f64,
    h: f64,
    search: &SearchGrid,
    cfg: &QuadConfig,
) -> Result<Certification> {
    ensure(eta >= 0.0 && eta.is_finite(), "certify: η must be finite and ≥ 0")?;
    ensure(h > 0.0 && h.is_finite(), "certify: h must be positive")?;
    let consts = subordinator_4g_constant(a, b)?;
    let c = f64::min(b - a, a);
    let n = kato_n(spec, params, c, h, search, cfg)?;
    let threshold = eta / consts.d_prime;
    if n.value - n.error_estimate <= threshold {
        Ok(Certification::Certified(AdmissibilityCertificate::new(
            &consts,
            eta,
            eta / h,
            h,
            CertificateSource::FromN,
        )))
    } else {
        Ok(Certification::Rejected {
            measured: n.value,
            error_estimate: n.error_estimate,
            threshold,
        })
    }
}

/// Certification through `I_{h²}(q)` for time-independent `q` (λ = 0, δ = 1):
/// `η = D I_{h²}(q)(√a + √(b−a))/(Γ(1/2)√(a(b−a)))`, `Q(s,t) = 4 D I_{h²}(q)(t−s)/h`.
pub fn certify_from_i(
    spec: &PotentialSpec,
    a: f64,
    b: f64,
    h: f64,
    search: &SearchGrid,
    cfg: &QuadConfig,
) -> Result<Certification> {
    ensure(h > 0.0 && h.is_finite(), "certify: h must be positive")?;
    let consts = subordinator_4g_constant(a, b)?;
    let i = match kato_i(spec, 0.5, h * h, search, cfg) {
        Ok(i) => i,
        Err(Error::Divergent(_)) => {
            return Ok(Certification::Rejected {
                measured: f64::INFINITY,
                error_estimate: 0.0,
                threshold: f64::INFINITY,
            })
        }
        Err(e) => return Err(e),
    };
    if !i.value.is_finite() {
        return Ok(Certification::Rejected {
            measured: i.value,
            error_estimate: i.error_estimate,
            threshold: f64::INFINITY,
        });
    }
    Ok(Certification::Certified(certificate_from_i_value(&consts, i.value, h)))
}

/// The corollary's `(η, Q_slope)` for a given `I_{h²}` value.
pub fn certificate_from_i_value(consts: &FourGConstants, i_value: f64, h: f64) -> AdmissibilityCertificate {
    let (a, b) = (consts.a, consts.b);
    let eta = consts.d * i_value * (sqrt(a) + sqrt(b - a)) / (SQRT_PI * sqrt(a * (b - a)));
    let q_slope = 4.0 * consts.d * i_value / h;
    AdmissibilityCertificate::new(consts, eta, q_slope, h, CertificateSource::FromI)
}

/// Cap `(4π)^{−1/2}(6/e)^{3/2}` on `(c′_σ)^{1/(σ−1)}`.
pub fn c_prime_cap_base() -> f64 {
    (6.0 / core::f64::consts::E) * sqrt(6.0 / core::f64::consts::E) / (2.0 * SQRT_PI)
}

/// Hölder bound on `N_h^c(q)` for `q ∈ L^r`, `r > 2`, with `λ = 0`, `δ = 1`:
/// `h^{1−2/r}·2(c′_{r/(r−1)})^{(r−1)/r} c^{−1/r}‖q‖_r/(1−2/r)`.
pub fn lr_bound(norm: f64, r: f64, c: f64, h: f64) -> Result<f64> {
    ensure(r > 2.0 && r.is_finite(), "lr_bound: r must exceed 2")?;
    ensure(norm >= 0.0 && norm.is_finite(), "lr_bound: norm must be finite")?;
    ensure(c > 0.0 && h > 0.0, "lr_bound: c and h must be positive")?;
    let sigma = r / (r - 1.0);
    let cp = powf(c_prime(sigma)?, (r - 1.0) / r);
    Ok(powf(h, 1.0 - 2.0 / r) * 2.0 * cp * powf(c, -1.0 / r) * norm / (1.0 - 2.0 / r))
}

/// `h` solving
/// `h^{1−2/r}·2D′/(1−2/r)·[(4π)^{−1/2}(6/e)^{3/2}/((b−a)∧a)]^{1/r}‖q‖_r = η`.
pub fn lr_h_for_eta(norm: f64, r: f64, consts: &FourGConstants, eta: f64) -> Result<f64> {
    ensure(r > 2.0 && r.is_finite(), "lr_h_for_eta: r must exceed 2")?;
    ensure(norm > 0.0 && norm.is_finite(), "lr_h_for_eta: norm must be positive")?;
    ensure(eta > 0.0 && eta.is_finite(), "lr_h_for_eta: η must be positive")?;
    let c = f64::min(consts.b - consts.a, consts.a);
    let k = 2.0 * consts.d_prime / (1.0 - 2.0 / r) * powf(c_prime_cap_base() / c, 1.0 / r) * norm;
    Ok(powf(eta / k, 1.0 / (1.0 - 2.0 / r)))
}

/// Certificate for `q ∈ L^r` with requested `η`.
pub fn certify_from_lr(norm: f64, r: f64, a: f64, b: f64, eta: f64) -> Result<AdmissibilityCertificate> {
    let consts = subordinator_4g_constant(a, b)?;
    let h = lr_h_for_eta(norm, r, &consts, eta)?;
    Ok(AdmissibilityCertificate::new(&consts, eta, eta / h, h, CertificateSource::FromLr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn eval_examples() {
        assert_eq!(PotentialSpec::Zero.eval(1.0, 2.0), 0.0);
        let p = PotentialSpec::power_law(0.25).unwrap();
        assert!((p.eval(3.0, 16.0) - 0.5).abs() < 1e-15);
        assert_eq!(p.eval(0.0, 0.0), f64::INFINITY);
        let b = PotentialSpec::bridge(3.0).unwrap();
        assert!((b.eval(2.0, 0.4) - 1.2).abs() < 1e-15);
        assert_eq!(b.eval(2.0, 0.6), 0.0);
        let st = PotentialSpec::staircase(1.0).unwrap();
        assert_eq!(st.eval(0.6, 1.5), 2.25);
        assert_eq!(st.eval(0.3, 1.5), 0.0);
        assert_eq!(st.eval(0.7, 0.5), 0.25);
        assert_eq!(st.eval(1.0, 0.5), 0.0);
        assert_eq!(PotentialSpec::TimeInversePower.eval(4.0, 7.0), 0.5);
        assert_eq!(PotentialSpec::TimeInversePower.eval(-1.0, 7.0), 0.0);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["zero", "const:beta=2", "powerlaw:eps=0.25", "timepow", "bridge:eta=3", "staircase:eta=1"] {
            let p: PotentialSpec = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("powerlaw:eps=0.7".parse::<PotentialSpec>().is_err());
        assert!("const:eta=1".parse::<PotentialSpec>().is_err());
        assert!("banana".parse::<PotentialSpec>().is_err());
        assert!("const:beta=-1".parse::<PotentialSpec>().is_err());
    }

    #[test]
    fn screening_rejects_bad_callables() {
        assert!(PotentialSpec::user(|_, _| -1.0, DeclaredBounds::default()).is_err());
        assert!(PotentialSpec::user(|_, z| if z > 0.0 { f64::INFINITY } else { 0.0 }, DeclaredBounds::default()).is_err());
        assert!(PotentialSpec::user(|_, z| z.abs(), DeclaredBounds::default()).is_ok());
    }

    #[test]
    fn reflection_mirrors_knots() {
        let b = PotentialSpec::bridge(1.0).unwrap();
        let r = b.reflected();
        assert_eq!(r.eval(-2.0, -0.4), b.eval(2.0, 0.4));
        let k = r.space_knots(-2.0, -10.0, 10.0);
        assert!(k.iter().any(|k| k.at == -0.5));
    }

    #[test]
    fn potential_kernel_integrates_to_h() {
        for &(l, d, c, h) in &[(0.0, 1.0, 1.0, 0.3), (1.0, 2.0, 0.5, 0.7), (0.5, 1.0, 2.0, 2.0)] {
            let k = DilatedKernel::new(KernelParams::new(l, d).unwrap(), c).unwrap();
            let r = potential_kernel_integral(
                &PotentialSpec::Constant { beta: 1.0 },
                &k,
                h,
                0.0,
                1.0,
                &QuadConfig::kernel(),
            )
            .unwrap();
            assert!((r.value - h).abs() < 1e-9 * h, "{l} {d} {c} {h}: {}", r.value);
        }
    }

    #[test]
    fn kato_i_closed_forms() {
        let cfg = QuadConfig::kernel();
        let g = SearchGrid::default();
        let p = PotentialSpec::power_law(0.25).unwrap();
        let v = kato_i(&p, 0.5, 1.0, &g, &cfg).unwrap();
        assert!((v.value - 8.0).abs() < 1e-8, "{v:?}");
        let c = PotentialSpec::constant(1.0).unwrap();
        let v = kato_i(&c, 0.5, 0.25, &g, &cfg).unwrap();
        assert!((v.value - 2.0).abs() < 1e-10);
        assert_eq!(kato_i(&PotentialSpec::Zero, 0.5, 1.0, &g, &cfg).unwrap().value, 0.0);
        assert!(kato_i(&PotentialSpec::TimeInversePower, 0.5, 1.0, &g, &cfg).is_err());
    }

    #[test]
    fn constant_n_and_certificates() {
        let cfg = QuadConfig::kernel();
        let g = SearchGrid::default();
        let beta = 2.0;
        let n = kato_n(&PotentialSpec::Constant { beta }, KernelParams::STABLE_HALF, 1.0, 0.3, &g, &cfg).unwrap();
        assert!((n.value - 1.2).abs() < 1e-9);
        let zero = certify_from_n(&PotentialSpec::Zero, KernelParams::STABLE_HALF, 1.0, 2.0, 0.5, 1.0, &g, &cfg).unwrap();
        assert_eq!(zero.certificate().unwrap().q_slope, 0.5);
        let big = certify_from_n(&PotentialSpec::Constant { beta: 10.0 }, KernelParams::STABLE_HALF, 2.0, 3.0, 0.5, 1.0, &g, &cfg)
            .unwrap();
        match big {
            Certification::Rejected { measured, .. } => assert!((measured - 20.0).abs() < 1e-7),
            _ => panic!("expected rejection"),
        }
    }

    #[test]
    fn lr_bound_examples() {
        assert_eq!(lr_bound(0.0, 4.0, 1.0, 1.0).unwrap(), 0.0);
        let v = lr_bound(1.0, 4.0, 1.0, 1.0).unwrap();
        let expect = 4.0 * c_prime(4.0 / 3.0).unwrap().powf(0.75);
        assert!((v - expect).abs() < 1e-14 * expect);
        assert!(lr_bound(1.0, 2.0, 1.0, 1.0).is_err());
        let cap = c_prime_cap_base().powf(1.0 / 3.0);
        assert!(c_prime(1.5).unwrap().powf(2.0 / 3.0) <= cap);
        let consts = subordinator_4g_constant(2.0, 3.0).unwrap();
        let h = lr_h_for_eta(1.0, 4.0, &consts, 0.5).unwrap();
        let lhs = h.powf(0.5) * 2.0 * consts.d_prime / 0.5 * (c_prime_cap_base() / 1.0).powf(0.25);
        assert!((lhs - 0.5).abs() < 1e-12);
    }
}
