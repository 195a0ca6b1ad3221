//! Perturbation series `p̃ = Σ p_n` and the checks built on it.
//!
//! Terms are carried as bridge ratios `R_n(u,z) = p_n(u,z,t,y)/p(u,z,t,y)`.
//! With the bridge marginal `π_{u,z}(v,w) = p(u,z,v,w)p(v,w,t,y)/p(u,z,t,y)`
//! the recursion reads
//!
//! ```text
//! R_0 = 1,   R_n(u,z) = ∫_u^t ∫_z^y π_{u,z}(v,w) q(v,w) R_{n−1}(v,w) dw dv,
//! ```
//!
//! and `p_n(s,x,t,y) = p(s,x,t,y)·R_n(s,x)`. `R_n` lives on a tensor
//! Chebyshev grid over `[s,t]×[x,y]`. Each grid row of the transfer matrix
//! is read off the adaptive rule that computes `R_1` at that node, so a term
//! costs one matrix-vector product. `p_1` at the target point is the
//! adaptive value itself.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{ensure, Error, Result};
use crate::kernels::{DilatedKernel, KernelParams, SpaceTimePoint};
use crate::mathx::{abs, cos, exp, exp_flush, ln, ln1p, powf, sin, sqrt, KahanSum, PI};
use crate::potentials::{AdmissibilityCertificate, Potential, PotentialSpec, Reflected};
use crate::quad::{self, Knot, QuadConfig, QuadResult};

/// Hard cap on the number of series terms.
pub const N_MAX_CAP: usize = 12;
/// Deepest term available in the fully adaptive validation mode.
pub const ADAPTIVE_N_MAX: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub n_max: usize,
    pub tail_tol: f64,
    pub quad: QuadConfig,
    /// Chebyshev nodes per axis of the bridge-ratio grid.
    pub grid_nodes: usize,
    /// With a certificate the series is built over `ρ_b` and carries the
    /// geometric tail bound; without one it is built over `ρ_1`.
    pub certificate: Option<AdmissibilityCertificate>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            n_max: 10,
            tail_tol: 1e-8,
            quad: QuadConfig::series(),
            grid_nodes: 16,
            certificate: None,
        }
    }
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.n_max <= N_MAX_CAP, "series: n_max exceeds the hard cap 12")?;
        ensure(self.tail_tol > 0.0 && self.tail_tol.is_finite(), "series: tail_tol must be > 0")?;
        ensure(
            (4..=40).contains(&self.grid_nodes),
            "series: grid_nodes must lie in 4..=40",
        )?;
        self.quad.validate()
    }

    /// The unperturbed kernel of the series.
    pub fn kernel(&self, params: KernelParams) -> Result<DilatedKernel> {
        DilatedKernel::new(params, self.certificate.map_or(1.0, |c| c.b))
    }
}

/// Partial sum of the series at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    /// `p_0, …, p_N` at the point.
    pub terms: Vec<f64>,
    pub partial_sum: f64,
    /// Rigorous bound on `Σ_{n>N} p_n`, available with a certificate whose
    /// `η + Q(s,t) < 1`.
    pub tail_bound: Option<f64>,
    /// Empirical `p_N / p_{N−1}`, reported when no rigorous tail bound exists.
    pub last_ratio: Option<f64>,
    /// The last term fell below `tail_tol·partial_sum`.
    pub converged: bool,
    pub point: SpaceTimePoint,
    pub kernel: DilatedKernel,
    /// Relative quadrature error estimate of the first-order rules.
    pub rel_error_estimate: f64,
}

impl SeriesResult {
    fn zero(pt: SpaceTimePoint, kernel: DilatedKernel) -> Self {
        SeriesResult {
            terms: vec![0.0],
            partial_sum: 0.0,
            tail_bound: None,
            last_ratio: None,
            converged: true,
            point: pt,
            kernel,
            rel_error_estimate: 0.0,
        }
    }
}

/// Which perturbation formula a residual refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `p̃ = p + ∫∫ p q p̃`.
    Forward,
    /// `p̃ = p + ∫∫ p̃ q p`.
    Backward,
}

/// A nonnegative superadditive `Q(s, t)`.
#[derive(Clone)]
pub enum SuperadditiveQ {
    Linear(f64),
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for SuperadditiveQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuperadditiveQ::Linear(k) => write!(f, "Linear({k})"),
            SuperadditiveQ::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SuperadditiveQ {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        SuperadditiveQ::Custom(Arc::new(f))
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            SuperadditiveQ::Linear(k) => k * (t - s),
            SuperadditiveQ::Custom(f) => f(s, t),
        }
    }
}

/// Outcome of comparing a partial sum with an analytic bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub bound: f64,
    pub log_bound: f64,
    pub partial_sum: f64,
    pub holds: bool,
}

fn compare(series: &SeriesResult, log_bound: f64) -> BoundCheck {
    // Equality cases are only resolved up to the quadrature error.
    let slack = ln1p(f64::max(series.rel_error_estimate, 1e-12));
    let holds = series.partial_sum == 0.0 || ln(series.partial_sum) <= log_bound + slack;
    BoundCheck {
        bound: exp(log_bound),
        log_bound,
        partial_sum: series.partial_sum,
        holds,
    }
}

// ---------------------------------------------------------------------------
// Bridge integrals

/// One outer node of a bridge rule: `(v, W)` and the inner `(w, ω·f)` pairs.
struct BridgeNode {
    v: f64,
    weight: f64,
    inner: Vec<(f64, f64)>,
}

fn clamp_exponent(e: f64) -> f64 {
    f64::max(e, -0.9)
}

/// A node of a [`two_sided_rule`], addressed by its offset from the nearer
/// endpoint.
struct SideNode {
    from_lo: bool,
    off: f64,
    weight: f64,
    value: f64,
}

/// Adaptive rule over `(lo, hi)` with the integrand written in offsets: the
/// left half is integrated in `d = w − lo`, the right half in `e = hi − w`,
/// so sharp features within rounding distance of either endpoint stay
/// resolved. `f(true, d)` / `f(false, e)`. Knots are given as offsets from
/// `lo` and from `hi` respectively.
#[allow(clippy::too_many_arguments)]
fn two_sided_rule(
    mut f: impl FnMut(bool, f64) -> f64,
    len: f64,
    lo_knots: &[Knot],
    hi_knots: &[Knot],
    lo_exponent: f64,
    hi_exponent: f64,
    cfg: &QuadConfig,
    nodes: Option<&mut Vec<SideNode>>,
) -> Result<QuadResult> {
    let half = 0.5 * len;
    let mut left: Vec<Knot> = Vec::new();
    let mut right: Vec<Knot> = Vec::new();
    for k in lo_knots {
        if k.at > 0.0 && k.at < half {
            left.push(*k);
        } else if k.at >= half && k.at < len {
            right.push(Knot { at: len - k.at, ..*k });
        }
    }
    for k in hi_knots {
        if k.at > 0.0 && k.at < half {
            right.push(*k);
        } else if k.at >= half && k.at < len {
            left.push(Knot { at: len - k.at, ..*k });
        }
    }
    let (rl, ql) = quad::rule_with_knots(|d| f(true, d), 0.0, half, &left, &cfg.with_singularities(lo_exponent, 0.0))?;
    let (rr, qr) = quad::rule_with_knots(|e| f(false, e), 0.0, half, &right, &cfg.with_singularities(hi_exponent, 0.0))?;
    if let Some(out) = nodes {
        out.clear();
        for (from_lo, q) in [(true, &ql), (false, &qr)] {
            for ((off, weight), value) in q.nodes.iter().zip(&q.weights).zip(&q.values) {
                out.push(SideNode {
                    from_lo,
                    off: *off,
                    weight: *weight,
                    value: *value,
                });
            }
        }
    }
    Ok(QuadResult {
        value: rl.value + rr.value,
        error_estimate: rl.error_estimate + rr.error_estimate,
        evaluations: rl.evaluations + rr.evaluations,
        converged: rl.converged && rr.converged,
    })
}

/// `∫_s^t ∫_x^y ρ¹(s,x,v,w) q(v,w) ρ²(v,w,t,y) g(v,w) dw dv / ρ²(s,x,t,y)`.
///
/// With `keep` the final nested rule is returned as well.
fn bridge_integral(
    first: &DilatedKernel,
    second: &DilatedKernel,
    q: &dyn Potential,
    pt: &SpaceTimePoint,
    mut weight: impl FnMut(f64, f64) -> Result<f64>,
    cfg: &QuadConfig,
    keep: bool,
) -> Result<(QuadResult, Vec<BridgeNode>)> {
    let SpaceTimePoint { s, x, t, y } = *pt;
    let (tt, ll) = (t - s, y - x);
    let e1 = first.effective();
    let e2 = second.effective();
    let log_norm = second.log_eval(s, x, t, y);
    if !log_norm.is_finite() {
        return Err(Error::Domain("bridge endpoints outside the kernel support"));
    }
    let inner_cfg = cfg
        .without_singularities()
        .with_tolerances(f64::max(cfg.rel_tol * 0.1, 1e-15), f64::max(cfg.abs_tol * 0.1, 1e-300));
    // Near v = s the bridge sits at x, so an exponent e of q there becomes 2e in time.
    let lo_e = clamp_exponent(2.0 * q.space_exponent_at(s, x) + q.time_exponent_at(s));
    let hi_e = clamp_exponent(2.0 * q.space_exponent_at(t, y) + q.time_exponent_at(t));
    let time_knots: Vec<Knot> = q.time_knots(s, t).iter().map(|k| Knot { at: k.at - s, ..*k }).collect();

    let mut cache: BTreeMap<(bool, u64), Vec<(f64, f64)>> = BTreeMap::new();
    let mut failure: Option<Error> = None;
    let mut max_inner_err = 0.0f64;
    let mut inner_evals = 0usize;
    let mut inner_ok = true;
    let mut inner_nodes: Vec<SideNode> = Vec::new();
    let mut outer_nodes: Vec<SideNode> = Vec::new();
    let outer = two_sided_rule(
        |from_lo, tau| {
            if failure.is_some() {
                return 0.0;
            }
            // a1 = v − s, a2 = t − v
            let (v, a1, a2) = if from_lo { (s + tau, tau, tt - tau) } else { (t - tau, tt - tau, tau) };
            let (m1, m2) = (e1.mode(a1), e2.mode(a2));
            let mut lo_knots = Vec::with_capacity(8);
            let mut hi_knots = Vec::with_capacity(8);
            for f in [0.3, 1.0, 3.0] {
                lo_knots.push(Knot::plain(f * m1));
                hi_knots.push(Knot::plain(f * m2));
            }
            lo_knots.push(Knot::plain(ll * a1 / tt));
            for k in q.space_knots(v, x, y) {
                lo_knots.push(Knot { at: k.at - x, ..k });
            }
            let mut inner_fail: Option<Error> = None;
            let f = |fl: bool, d: f64| {
                let (w, b1, b2) = if fl { (x + d, d, ll - d) } else { (y - d, ll - d, d) };
                let lp = e1.log_density(a1, b1) + e2.log_density(a2, b2) - log_norm;
                if lp == f64::NEG_INFINITY {
                    return 0.0;
                }
                let qv = q.eval(v, w);
                if qv == 0.0 {
                    return 0.0;
                }
                match weight(v, w) {
                    Ok(g) => exp_flush(lp) * qv * g,
                    Err(e) => {
                        inner_fail.get_or_insert(e);
                        0.0
                    }
                }
            };
            let r = two_sided_rule(
                f,
                ll,
                &lo_knots,
                &hi_knots,
                clamp_exponent(q.space_exponent_at(v, x)),
                clamp_exponent(q.space_exponent_at(v, y)),
                &inner_cfg,
                if keep { Some(&mut inner_nodes) } else { None },
            );
            match r {
                Ok(r) => {
                    if let Some(e) = inner_fail {
                        failure = Some(e);
                        return 0.0;
                    }
                    max_inner_err = max_inner_err.max(r.error_estimate);
                    inner_evals += r.evaluations;
                    inner_ok &= r.converged;
                    if keep {
                        let pairs = inner_nodes
                            .iter()
                            .map(|n| (if n.from_lo { x + n.off } else { y - n.off }, n.weight * n.value))
                            .collect();
                        cache.insert((from_lo, tau.to_bits()), pairs);
                    }
                    r.value
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        tt,
        &time_knots,
        &[],
        lo_e,
        hi_e,
        cfg,
        if keep { Some(&mut outer_nodes) } else { None },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut nodes = Vec::new();
    if keep {
        nodes.reserve(outer_nodes.len());
        for n in &outer_nodes {
            let inner = cache.remove(&(n.from_lo, n.off.to_bits())).ok_or(Error::Inconsistent {
                what: "bridge rule node missing from the evaluation cache",
                at: n.off,
                discrepancy: f64::NAN,
            })?;
            let v = if n.from_lo { s + n.off } else { t - n.off };
            nodes.push(BridgeNode { v, weight: n.weight, inner });
        }
    }
    Ok((
        QuadResult {
            value: outer.value,
            error_estimate: outer.error_estimate + tt * max_inner_err,
            evaluations: outer.evaluations + inner_evals,
            converged: outer.converged && inner_ok,
        },
        nodes,
    ))
}

// ---------------------------------------------------------------------------
// Chebyshev grid

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Grading {
    Uniform,
    /// `v = lo + L τ²`, for a singular left edge.
    Left,
    /// `v = hi − L (1−τ)²`, for a singular right edge.
    Right,
    /// `v = lo + L (3τ² − 2τ³)`, for two singular edges.
    Both,
}

impl Grading {
    fn pick(lo_exponent: f64, hi_exponent: f64) -> Self {
        match (lo_exponent < 0.0, hi_exponent < 0.0) {
            (true, true) => Grading::Both,
            (true, false) => Grading::Left,
            (false, true) => Grading::Right,
            (false, false) => Grading::Uniform,
        }
    }
}

fn smoothstep(tau: f64) -> f64 {
    tau * tau * (3.0 - 2.0 * tau)
}

/// One Chebyshev panel of an [`Axis`].
#[derive(Debug, Clone)]
struct Panel {
    lo: f64,
    hi: f64,
    grading: Grading,
    xi: Vec<f64>,
    bary: Vec<f64>,
}

impl Panel {
    fn new(lo: f64, hi: f64, n: usize, grading: Grading) -> Self {
        let mut xi = Vec::with_capacity(n);
        let mut bary = Vec::with_capacity(n);
        for j in 0..n {
            let th = (2 * j + 1) as f64 * PI / (2 * n) as f64;
            xi.push(cos(th));
            let sgn = if j % 2 == 0 { 1.0 } else { -1.0 };
            bary.push(sgn * sin(th));
        }
        Panel {
            lo,
            hi,
            grading,
            xi,
            bary,
        }
    }

    fn node(&self, j: usize) -> f64 {
        let tau = 0.5 * (self.xi[j] + 1.0);
        let l = self.hi - self.lo;
        match self.grading {
            Grading::Uniform => self.lo + l * tau,
            Grading::Left => self.lo + l * tau * tau,
            Grading::Right => self.hi - l * (1.0 - tau) * (1.0 - tau),
            Grading::Both => self.lo + l * smoothstep(tau),
        }
    }

    fn to_xi(&self, v: f64) -> f64 {
        let tau = ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        match self.grading {
            Grading::Uniform => 2.0 * tau - 1.0,
            Grading::Left => 2.0 * sqrt(tau) - 1.0,
            Grading::Right => 1.0 - 2.0 * sqrt(1.0 - tau),
            Grading::Both => {
                // smoothstep is increasing on [0, 1]; invert by bisection.
                let (mut a, mut b) = (0.0, 1.0);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if smoothstep(m) < tau {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                a + b - 1.0
            }
        }
    }

    /// Barycentric Lagrange basis at `v`.
    fn basis(&self, v: f64, out: &mut [f64]) {
        let xi = self.to_xi(v);
        let mut total = 0.0;
        for (j, o) in out.iter_mut().enumerate() {
            let d = xi - self.xi[j];
            if d == 0.0 {
                out.fill(0.0);
                out[j] = 1.0;
                return;
            }
            *o = self.bary[j] / d;
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }
}

/// Most panels per axis; with more breakpoints the axis stays unsplit.
const MAX_PANELS: usize = 4;

/// Piecewise Chebyshev interpolation on `[lo, hi]`, split at fixed
/// breakpoints of `q` so that its singularities and jumps sit on panel
/// edges.
#[derive(Debug, Clone)]
struct Axis {
    panels: Vec<Panel>,
    per_panel: usize,
}

impl Axis {
    /// `breaks` are `(position, exponent)` pairs strictly inside `(lo, hi)`.
    fn new(lo: f64, hi: f64, n: usize, lo_exp: f64, hi_exp: f64, breaks: &[Knot]) -> Self {
        let margin = 1e-6 * (hi - lo);
        let mut inner: Vec<Knot> = breaks
            .iter()
            .copied()
            .filter(|k| k.at > lo + margin && k.at < hi - margin)
            .collect();
        inner.sort_by(|a, b| a.at.total_cmp(&b.at));
        inner.dedup_by(|a, b| a.at == b.at);
        if inner.len() >= MAX_PANELS {
            inner.retain(|k| k.exponent < 0.0);
            if inner.len() >= MAX_PANELS {
                inner.clear();
            }
        }
        let mut edges = vec![(lo, lo_exp)];
        edges.extend(inner.iter().map(|k| (k.at, k.exponent)));
        edges.push((hi, hi_exp));
        let panels = edges
            .windows(2)
            .map(|w| Panel::new(w[0].0, w[1].0, n, Grading::pick(w[0].1, w[1].1)))
            .collect();
        Axis { panels, per_panel: n }
    }

    fn len(&self) -> usize {
        self.panels.len() * self.per_panel
    }

    fn node(&self, j: usize) -> f64 {
        self.panels[j / self.per_panel].node(j % self.per_panel)
    }

    /// Lagrange basis at `v`; only the panel containing `v` is nonzero.
    fn basis(&self, v: f64, out: &mut [f64]) {
        out.fill(0.0);
        let i = self.panels.iter().position(|p| v <= p.hi).unwrap_or(self.panels.len() - 1);
        let n = self.per_panel;
        self.panels[i].basis(v, &mut out[i * n..(i + 1) * n]);
    }
}

/// Space breakpoints of `q` that do not move with time over `[s, t]`.
fn fixed_space_breaks(q: &dyn Potential, s: f64, t: f64, x: f64, y: f64) -> Vec<Knot> {
    let mid = q.space_knots(0.5 * (s + t), x, y);
    if q.is_time_independent() {
        return mid;
    }
    let probes = [s + 0.1 * (t - s), s + 0.37 * (t - s), s + 0.9 * (t - s)];
    mid.into_iter()
        .filter(|k| {
            probes
                .iter()
                .all(|&u| q.space_knots(u, x, y).iter().any(|o| o.at == k.at))
        })
        .collect()
}

/// Terminal-anchored ladder of bridge ratios toward `(t, y)`.
struct Ladder {
    kernel: DilatedKernel,
    pt: SpaceTimePoint,
    time: Axis,
    space: Axis,
    terms: Vec<f64>,
    /// `Σ_{1≤n≤N} R_n` at the grid nodes (time-major).
    excess: Vec<f64>,
    rel_err: f64,
    converged: bool,
}

fn assemble_row(time: &Axis, space: &Axis, nodes: &[BridgeNode]) -> Vec<f64> {
    let (nt, nz) = (time.len(), space.len());
    let mut row = vec![0.0; nt * nz];
    let mut lt = vec![0.0; nt];
    let mut lz = vec![0.0; nz];
    let mut acc = vec![0.0; nz];
    for node in nodes {
        acc.fill(0.0);
        for &(w, val) in &node.inner {
            if val == 0.0 {
                continue;
            }
            space.basis(w, &mut lz);
            for (a, l) in acc.iter_mut().zip(&lz) {
                *a += val * l;
            }
        }
        time.basis(node.v, &mut lt);
        for (i, l) in lt.iter().enumerate() {
            if *l == 0.0 {
                continue;
            }
            let k = node.weight * l;
            for (r, a) in row[i * nz..(i + 1) * nz].iter_mut().zip(&acc) {
                *r += k * a;
            }
        }
    }
    row
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

impl Ladder {
    /// Builds the grid and runs the recursion up to `n_max` terms, stopping
    /// early once a term drops below `tail_tol·partial_sum` when `tail_tol`
    /// is given.
    fn build(
        kernel: DilatedKernel,
        q: &dyn Potential,
        pt: SpaceTimePoint,
        cfg: &SeriesConfig,
        n_max: usize,
        tail_tol: Option<f64>,
    ) -> Result<Ladder> {
        let SpaceTimePoint { s, x, t, y } = pt;
        let n = cfg.grid_nodes;
        let time = Axis::new(
            s,
            t,
            n,
            q.time_exponent_at(s),
            q.time_exponent_at(t),
            &q.time_knots(s, t),
        );
        let space = Axis::new(
            x,
            y,
            n,
            q.space_exponent_at(s, x),
            q.space_exponent_at(t, y),
            &fixed_space_breaks(q, s, t, x, y),
        );
        let p = kernel.at(&pt);
        let (nt, nz) = (time.len(), space.len());
        let mut ladder = Ladder {
            kernel,
            pt,
            time,
            space,
            terms: vec![p],
            excess: vec![0.0; nt * nz],
            rel_err: 0.0,
            converged: true,
        };
        if n_max == 0 {
            return Ok(ladder);
        }
        let (first, pt_nodes) = bridge_integral(&kernel, &kernel, q, &pt, |_, _| Ok(1.0), &cfg.quad, true)?;
        if !first.converged {
            return Err(Error::NotConverged {
                what: "first series term",
                value: first.value,
                error_estimate: first.error_estimate,
            });
        }
        ladder.terms.push(p * first.value);
        if first.value == 0.0 {
            return Ok(ladder);
        }
        ladder.rel_err = first.error_estimate / first.value;

        let nn = nt * nz;
        let mut k = Vec::with_capacity(nn * nn);
        let (mut max_val, mut max_err) = (0.0f64, 0.0f64);
        for i in 0..nt {
            for j in 0..nz {
                let sub = SpaceTimePoint::new(ladder.time.node(i), ladder.space.node(j), t, y);
                let (r, nodes) = bridge_integral(&kernel, &kernel, q, &sub, |_, _| Ok(1.0), &cfg.quad, true)?;
                if !r.converged {
                    return Err(Error::NotConverged {
                        what: "bridge-ratio grid row",
                        value: r.value,
                        error_estimate: r.error_estimate,
                    });
                }
                max_val = max_val.max(r.value);
                max_err = max_err.max(r.error_estimate);
                k.extend(assemble_row(&ladder.time, &ladder.space, &nodes));
            }
        }
        if max_val > 0.0 {
            ladder.rel_err = ladder.rel_err.max(max_err / max_val);
        }
        let k_pt = assemble_row(&ladder.time, &ladder.space, &pt_nodes);

        let mut prev = vec![1.0; nn];
        let mut partial = p + ladder.terms[1];
        ladder.converged = false;
        for order in 1..=n_max {
            if order > 1 {
                let term = f64::max(p * dot(&k_pt, &prev), 0.0);
                ladder.terms.push(term);
                partial += term;
            }
            let next: Vec<f64> = (0..nn).map(|r| f64::max(dot(&k[r * nn..(r + 1) * nn], &prev), 0.0)).collect();
            for (e, v) in ladder.excess.iter_mut().zip(&next) {
                *e += v;
            }
            prev = next;
            let last = ladder.terms[order];
            if let Some(tol) = tail_tol {
                if last <= tol * partial {
                    ladder.converged = true;
                    break;
                }
            }
        }
        Ok(ladder)
    }

    /// `p̃(u, z, t, y)/p(u, z, t, y)` by interpolation on the grid.
    fn ratio_sum(&self, u: f64, z: f64) -> f64 {
        let (nt, nz) = (self.time.len(), self.space.len());
        let mut lt = vec![0.0; nt];
        let mut lz = vec![0.0; nz];
        self.time.basis(u, &mut lt);
        self.space.basis(z, &mut lz);
        let mut acc = 0.0;
        for (i, a) in lt.iter().enumerate() {
            acc += a * dot(&self.excess[i * nz..(i + 1) * nz], &lz);
        }
        1.0 + f64::max(acc, 0.0)
    }

    fn partial_sum(&self) -> f64 {
        let mut acc = KahanSum::new();
        for t in &self.terms {
            acc.add(*t);
        }
        acc.value()
    }

    fn result(&self, cert: Option<&AdmissibilityCertificate>) -> SeriesResult {
        let partial_sum = self.partial_sum();
        let n = self.terms.len() - 1;
        let mut tail_bound = None;
        if let Some(c) = cert {
            let r = c.eta + c.q(self.pt.s, self.pt.t);
            if r < 1.0 {
                let p_star = DilatedKernel {
                    params: self.kernel.params,
                    c: c.a,
                }
                .at(&self.pt);
                tail_bound = Some(c.c * p_star * powf(r, (n + 1) as f64) / (1.0 - r));
            }
        }
        let last_ratio = if tail_bound.is_none() && n >= 1 && self.terms[n - 1] > 0.0 {
            Some(self.terms[n] / self.terms[n - 1])
        } else {
            None
        };
        SeriesResult {
            terms: self.terms.clone(),
            partial_sum,
            tail_bound,
            last_ratio,
            converged: self.converged,
            point: self.pt,
            kernel: self.kernel,
            rel_error_estimate: self.rel_err,
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations

fn check_point(pt: &SpaceTimePoint) -> Result<()> {
    ensure(
        pt.s.is_finite() && pt.x.is_finite() && pt.t.is_finite() && pt.y.is_finite(),
        "series: point must be finite",
    )
}

/// `p_n(pt)` from the grid recursion.
pub fn series_term(n: usize, spec: &PotentialSpec, params: KernelParams, pt: SpaceTimePoint, cfg: &SeriesConfig) -> Result<f64> {
    cfg.validate()?;
    check_point(&pt)?;
    ensure(n <= cfg.n_max, "series_term: n exceeds n_max")?;
    let kernel = cfg.kernel(params)?;
    if !pt.is_forward() {
        return Ok(0.0);
    }
    if n == 0 {
        return Ok(kernel.at(&pt));
    }
    if matches!(spec, PotentialSpec::Zero) {
        return Ok(0.0);
    }
    let ladder = Ladder::build(kernel, spec, pt, cfg, n, None)?;
    Ok(ladder.terms.get(n).copied().unwrap_or(0.0))
}

fn ratio_adaptive(n: usize, kernel: &DilatedKernel, q: &dyn Potential, pt: &SpaceTimePoint, cfg: &QuadConfig) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let (r, _) = bridge_integral(
        kernel,
        kernel,
        q,
        pt,
        |v, w| ratio_adaptive(n - 1, kernel, q, &SpaceTimePoint::new(v, w, pt.t, pt.y), cfg),
        cfg,
        false,
    )?;
    Ok(r.value)
}

/// `p_n(pt)` by fully nested adaptive quadrature, for validating the grid
/// recursion at small `n`. The cost grows like (rule size)^n.
pub fn series_term_adaptive(
    n: usize,
    spec: &PotentialSpec,
    params: KernelParams,
    pt: SpaceTimePoint,
    cfg: &SeriesConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_point(&pt)?;
    ensure(n <= ADAPTIVE_N_MAX, "series_term_adaptive: n must be ≤ 3")?;
    let kernel = cfg.kernel(params)?;
    if !pt.is_forward() {
        return Ok(0.0);
    }
    let p = kernel.at(&pt);
    if n == 0 {
        return Ok(p);
    }
    Ok(p * ratio_adaptive(n, &kernel, spec, &pt, &cfg.quad)?)
}

/// Partial sum of `p̃ = Σ p_n` at `pt`.
pub fn tilde_p(spec: &PotentialSpec, params: KernelParams, pt: SpaceTimePoint, cfg: &SeriesConfig) -> Result<SeriesResult> {
    cfg.validate()?;
    check_point(&pt)?;
    let kernel = cfg.kernel(params)?;
    if !pt.is_forward() {
        return Ok(SeriesResult::zero(pt, kernel));
    }
    if matches!(spec, PotentialSpec::Zero) {
        let mut r = SeriesResult::zero(pt, kernel);
        r.terms = vec![kernel.at(&pt)];
        r.partial_sum = r.terms[0];
        r.tail_bound = cfg.certificate.map(|_| 0.0);
        return Ok(r);
    }
    let ladder = Ladder::build(kernel, spec, pt, cfg, cfg.n_max, Some(cfg.tail_tol))?;
    Ok(ladder.result(cfg.certificate.as_ref()))
}

/// Relative residual of the perturbation formula on the given side.
pub fn perturbation_formula_residual(
    spec: &PotentialSpec,
    params: KernelParams,
    pt: SpaceTimePoint,
    cfg: &SeriesConfig,
    side: Side,
) -> Result<f64> {
    cfg.validate()?;
    check_point(&pt)?;
    ensure(pt.is_forward(), "perturbation formula: need t > s and y > x")?;
    if matches!(spec, PotentialSpec::Zero) {
        return Ok(0.0);
    }
    let kernel = cfg.kernel(params)?;
    let p = kernel.at(&pt);
    let (tilde, integral) = match side {
        Side::Forward => {
            let l = Ladder::build(kernel, spec, pt, cfg, cfg.n_max, Some(cfg.tail_tol))?;
            let (j, _) = bridge_integral(&kernel, &kernel, spec, &pt, |v, w| Ok(l.ratio_sum(v, w)), &cfg.quad, false)?;
            (l.partial_sum(), p * j.value)
        }
        Side::Backward => {
            let refl = Reflected(spec);
            let l = Ladder::build(kernel, &refl, pt.reflected(), cfg, cfg.n_max, Some(cfg.tail_tol))?;
            let (j, _) = bridge_integral(&kernel, &kernel, spec, &pt, |v, w| Ok(l.ratio_sum(-v, -w)), &cfg.quad, false)?;
            (l.partial_sum(), p * j.value)
        }
    };
    Ok(abs(tilde - p - integral) / tilde)
}

/// Relative Chapman–Kolmogorov residual of `p̃` through time `u`:
/// `|∫ p̃(s,x,u,z) p̃(u,z,t,y) dz − p̃(s,x,t,y)| / p̃(s,x,t,y)`.
pub fn tilde_ck_residual(spec: &PotentialSpec, params: KernelParams, pt: SpaceTimePoint, u: f64, cfg: &SeriesConfig) -> Result<f64> {
    cfg.validate()?;
    check_point(&pt)?;
    ensure(pt.is_forward(), "Chapman–Kolmogorov: need t > s and y > x")?;
    ensure(u > pt.s && u < pt.t, "Chapman–Kolmogorov: need s < u < t")?;
    let kernel = cfg.kernel(params)?;
    let SpaceTimePoint { s, x, t, y } = pt;
    let (fwd, back) = if matches!(spec, PotentialSpec::Zero) {
        (None, None)
    } else {
        (
            Some(Ladder::build(kernel, spec, pt, cfg, cfg.n_max, Some(cfg.tail_tol))?),
            Some(Ladder::build(kernel, &Reflected(spec), pt.reflected(), cfg, cfg.n_max, Some(cfg.tail_tol))?),
        )
    };
    let tilde = fwd.as_ref().map_or(kernel.at(&pt), |l| l.partial_sum());
    let log_norm = kernel.log_eval(s, x, t, y);
    let eff = kernel.effective();
    let mut knots: Vec<Knot> = Vec::new();
    for f in [0.3, 1.0, 3.0] {
        knots.push(Knot::plain(x + f * eff.mode(u - s)));
        knots.push(Knot::plain(y - f * eff.mode(t - u)));
    }
    knots.push(Knot::plain(x + (y - x) * (u - s) / (t - s)));
    knots.retain(|k| k.at > x && k.at < y);
    let r = quad::integrate_with_knots(
        |z| {
            let lp = kernel.log_eval(s, x, u, z) + kernel.log_eval(u, z, t, y) - log_norm;
            if lp == f64::NEG_INFINITY {
                return 0.0;
            }
            let a = back.as_ref().map_or(1.0, |l| l.ratio_sum(-u, -z));
            let b = fwd.as_ref().map_or(1.0, |l| l.ratio_sum(u, z));
            exp_flush(lp) * a * b
        },
        x,
        y,
        &knots,
        &cfg.quad,
    )?;
    let lhs = kernel.at(&pt) * r.value;
    Ok(abs(lhs - tilde) / tilde)
}

/// `p̃(s, x, ·, ·)` on a rectangle `[s, t_hi] × [x, y_hi]`.
///
/// Constant potentials use the exact `e^{β(u−s)}p`; anything else uses an
/// initial-anchored grid (the reflected ladder). Values are only meaningful
/// inside the rectangle.
pub struct TildeField {
    kernel: DilatedKernel,
    s: f64,
    x: f64,
    kind: FieldKind,
}

enum FieldKind {
    Exponential(f64),
    Grid(Ladder),
}

impl fmt::Debug for TildeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            FieldKind::Exponential(b) => alloc::format!("Exponential({b})"),
            FieldKind::Grid(l) => alloc::format!("Grid({} terms)", l.terms.len()),
        };
        f.debug_struct("TildeField")
            .field("kernel", &self.kernel)
            .field("s", &self.s)
            .field("x", &self.x)
            .field("kind", &kind)
            .finish()
    }
}

impl TildeField {
    /// `p̃(s, x, u, z)`.
    pub fn eval(&self, u: f64, z: f64) -> f64 {
        let lp = self.kernel.log_eval(self.s, self.x, u, z);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        match &self.kind {
            FieldKind::Exponential(beta) => exp_flush(lp + beta * (u - self.s)),
            FieldKind::Grid(l) => exp_flush(lp) * l.ratio_sum(-u, -z),
        }
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.kind, FieldKind::Exponential(_))
    }
}

/// Builds `p̃(s, x, ·, ·)` on `[s, t_hi] × [x, y_hi]`.
#[allow(clippy::too_many_arguments)]
pub fn tilde_field(
    spec: &PotentialSpec,
    params: KernelParams,
    s: f64,
    x: f64,
    t_hi: f64,
    y_hi: f64,
    cfg: &SeriesConfig,
) -> Result<TildeField> {
    cfg.validate()?;
    let pt = SpaceTimePoint::new(s, x, t_hi, y_hi);
    check_point(&pt)?;
    ensure(pt.is_forward(), "tilde_field: need t_hi > s and y_hi > x")?;
    let kernel = cfg.kernel(params)?;
    let kind = match spec.as_constant() {
        Some(beta) => FieldKind::Exponential(beta),
        None => FieldKind::Grid(Ladder::build(
            kernel,
            &Reflected(spec),
            pt.reflected(),
            cfg,
            cfg.n_max,
            Some(cfg.tail_tol),
        )?),
    };
    Ok(TildeField { kernel, s, x, kind })
}

/// `∫_s^t ∫_x^y ρ_b(s,x,u,z) q(u,z) ρ_a(u,z,t,y) dz du`.
pub fn mixed_p1(
    b: f64,
    a: f64,
    spec: &PotentialSpec,
    params: KernelParams,
    pt: SpaceTimePoint,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    ensure(a > 0.0 && b > a && b.is_finite(), "mixed_p1: need 0 < a < b")?;
    cfg.validate()?;
    check_point(&pt)?;
    if !pt.is_forward() || matches!(spec, PotentialSpec::Zero) {
        return Ok(QuadResult::ZERO);
    }
    let kb = DilatedKernel::new(params, b)?;
    let ka = DilatedKernel::new(params, a)?;
    let (r, _) = bridge_integral(&kb, &ka, spec, &pt, |_, _| Ok(1.0), cfg, false)?;
    let scale = ka.at(&pt);
    Ok(QuadResult {
        value: r.value * scale,
        error_estimate: r.error_estimate * scale,
        ..r
    })
}

/// `p̃ ≤ ρ_a (C/(1−η−ε))^{1+Q(s,t)/ε}` for a series built over `ρ_b`.
pub fn bound_check_thm11(cert: &AdmissibilityCertificate, eps: f64, series: &SeriesResult) -> Result<BoundCheck> {
    ensure(cert.eta < 1.0, "bound_check_thm11: certificate needs η < 1")?;
    ensure(eps > 0.0 && eps < 1.0 - cert.eta, "bound_check_thm11: ε must lie in (0, 1−η)")?;
    ensure(
        abs(series.kernel.c - cert.b) <= 1e-12 * cert.b,
        "bound_check_thm11: series must be built over ρ_b of the certificate",
    )?;
    let pt = series.point;
    ensure(pt.is_forward(), "bound_check_thm11: need t > s and y > x")?;
    let p_star = DilatedKernel {
        params: series.kernel.params,
        c: cert.a,
    };
    let q = cert.q(pt.s, pt.t);
    let log_bound = p_star.log_eval(pt.s, pt.x, pt.t, pt.y) + (1.0 + q / eps) * ln(cert.c / (1.0 - cert.eta - eps));
    Ok(compare(series, log_bound))
}

/// `p̃ ≤ p (1/(1−η))^{1+Q(s,t)/η}`, or `p̃ ≤ p e^{Q(s,t)}` when `η = 0`.
pub fn bound_check_superadditive(eta: f64, q: &SuperadditiveQ, series: &SeriesResult) -> Result<BoundCheck> {
    ensure((0.0..1.0).contains(&eta), "bound_check_superadditive: need 0 ≤ η < 1")?;
    let pt = series.point;
    ensure(pt.is_forward(), "bound_check_superadditive: need t > s and y > x")?;
    let qv = q.eval(pt.s, pt.t);
    ensure(qv >= 0.0 && qv.is_finite(), "bound_check_superadditive: Q(s,t) must be finite and ≥ 0")?;
    let log_p = series.kernel.log_eval(pt.s, pt.x, pt.t, pt.y);
    let log_bound = if eta == 0.0 {
        log_p + qv
    } else {
        log_p - (1.0 + qv / eta) * ln1p(-eta)
    };
    Ok(compare(series, log_bound))
}

/// `p_1(pt)/ρ_1(pt)`, the expected potential along the bridge.
pub fn bridge_ratio(spec: &PotentialSpec, params: KernelParams, pt: SpaceTimePoint, cfg: &QuadConfig) -> Result<QuadResult> {
    cfg.validate()?;
    check_point(&pt)?;
    ensure(pt.is_forward(), "bridge_ratio: need t > s and y > x")?;
    if matches!(spec, PotentialSpec::Zero) {
        return Ok(QuadResult::ZERO);
    }
    let k = DilatedKernel::new(params, 1.0)?;
    Ok(bridge_integral(&k, &k, spec, &pt, |_, _| Ok(1.0), cfg, false)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeScanPoint {
    pub x: f64,
    pub y: f64,
    pub ratio: f64,
    pub error_estimate: f64,
}

/// `bridge_ratio` over windows `(center − w/2, center + w/2)` at fixed times.
#[allow(clippy::too_many_arguments)]
pub fn bridge_sup_scan(
    spec: &PotentialSpec,
    params: KernelParams,
    s: f64,
    t: f64,
    center: f64,
    widths: &[f64],
    cfg: &QuadConfig,
) -> Result<Vec<BridgeScanPoint>> {
    ensure(spec.is_time_independent(), "bridge_sup_scan: potential must be time-independent")?;
    ensure(s < t, "bridge_sup_scan: need s < t")?;
    let mut out = Vec::with_capacity(widths.len());
    for &w in widths {
        ensure(w > 0.0 && w.is_finite(), "bridge_sup_scan: widths must be positive")?;
        let (x, y) = (center - 0.5 * w, center + 0.5 * w);
        let r = bridge_ratio(spec, params, SpaceTimePoint::new(s, x, t, y), cfg)?;
        out.push(BridgeScanPoint {
            x,
            y,
            ratio: r.value,
            error_estimate: r.error_estimate,
        });
    }
    Ok(out)
}

/// The witness point `(0, (1+ε/η)/(2t), t, 1/t)` for the bridge example:
/// the whole bridge stays where `q(u, z) = ηz ≥ ηx`, so the ratio is at least
/// `ηxt = (η+ε)/2`.
pub fn bridge_witness_point(eta: f64, eps: f64, t: f64) -> Result<SpaceTimePoint> {
    ensure(eta > 0.0 && eps > 0.0 && eps < eta, "bridge witness: need 0 < ε < η")?;
    ensure(t > 0.0 && t.is_finite(), "bridge witness: need t > 0")?;
    Ok(SpaceTimePoint::new(0.0, (1.0 + eps / eta) / (2.0 * t), t, 1.0 / t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessPoint {
    pub t: f64,
    pub ratio: f64,
    pub error_estimate: f64,
    /// `(η + ε)/2`.
    pub lower_bound: f64,
    /// Smallest slope `k` with `ratio ≤ η₀ + k·t`.
    pub required_slope: f64,
}

/// Bridge ratios of the bridge example at its witness points for shrinking
/// `t`. For a target `η₀ < (η+ε)/2` the required slope of a linear `Q`
/// grows like `1/t`, so no linear `Q` works.
pub fn bridge_witness_scan(
    eta: f64,
    eps: f64,
    eta_target: f64,
    times: &[f64],
    params: KernelParams,
    cfg: &QuadConfig,
) -> Result<Vec<WitnessPoint>> {
    let spec = PotentialSpec::bridge(eta)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let pt = bridge_witness_point(eta, eps, t)?;
        let r = bridge_ratio(&spec, params, pt, cfg)?;
        out.push(WitnessPoint {
            t,
            ratio: r.value,
            error_estimate: r.error_estimate,
            lower_bound: 0.5 * (eta + eps),
            required_slope: f64::max(r.value - eta_target, 0.0) / t,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourg::subordinator_4g_constant;
    use crate::potentials::{certify_from_n, SearchGrid};

    const P: KernelParams = KernelParams::STABLE_HALF;

    fn unit_pt() -> SpaceTimePoint {
        SpaceTimePoint::new(0.0, 0.0, 1.0, 1.0)
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn chebyshev_basis_reproduces_polynomials() {
        let f = |x: f64| 1.0 + x - 0.5 * x * x * x;
        for g in [Grading::Uniform, Grading::Left, Grading::Right, Grading::Both] {
            let pan = Panel::new(-1.0, 2.0, 12, g);
            let mut l = [0.0; 12];
            let v = 0.37;
            pan.basis(v, &mut l);
            let interp: f64 = (0..12).map(|j| l[j] * f(pan.node(j))).sum();
            let tol = if g == Grading::Uniform { 1e-12 } else { 1e-6 };
            assert!((interp - f(v)).abs() < tol, "{g:?}: {interp}");
        }
        // |x|^{1/2} is resolved once the axis is split at its cusp.
        let cusp = |x: f64| x.abs().sqrt();
        let ax = Axis::new(-1.0, 2.0, 12, 0.0, 0.0, &[Knot::singular(0.0, -0.5)]);
        assert_eq!(ax.len(), 24);
        let mut l = [0.0; 24];
        for v in [-0.7, -1e-3, 1e-4, 0.5, 1.9] {
            ax.basis(v, &mut l);
            let interp: f64 = (0..24).map(|j| l[j] * cusp(ax.node(j))).sum();
            assert!((interp - cusp(v)).abs() < 1e-5, "{v}: {interp}");
        }
    }

    #[test]
    fn constant_terms_follow_exponential() {
        let beta = 0.7;
        let spec = PotentialSpec::constant(beta).unwrap();
        let cfg = SeriesConfig::default();
        let p = DilatedKernel::unit(P).at(&unit_pt());
        assert_eq!(series_term(0, &spec, P, unit_pt(), &cfg).unwrap(), p);
        let r = tilde_p(&spec, P, unit_pt(), &cfg).unwrap();
        let mut fact = 1.0;
        for (n, t) in r.terms.iter().enumerate().take(6) {
            if n > 0 {
                fact *= n as f64;
            }
            let want = beta.powi(n as i32) / fact * p;
            assert!(rel(*t, want) < 1e-6, "n={n}: {t} vs {want}");
        }
        assert!(r.converged);
        assert!(rel(r.partial_sum, beta.exp() * p) < 1e-6);
    }

    #[test]
    fn zero_and_degenerate_points() {
        let cfg = SeriesConfig::default();
        let r = tilde_p(&PotentialSpec::Zero, P, unit_pt(), &cfg).unwrap();
        assert_eq!(r.terms.len(), 1);
        assert_eq!(r.partial_sum, DilatedKernel::unit(P).at(&unit_pt()));
        let back = SpaceTimePoint::new(0.0, 1.0, 1.0, 0.5);
        let r = tilde_p(&PotentialSpec::constant(1.0).unwrap(), P, back, &cfg).unwrap();
        assert_eq!(r.partial_sum, 0.0);
        assert!(series_term(13, &PotentialSpec::Zero, P, unit_pt(), &cfg).is_err());
    }

    #[test]
    fn time_inverse_power_first_term() {
        let cfg = SeriesConfig::default();
        let p = DilatedKernel::unit(P).at(&unit_pt());
        let t1 = series_term(1, &PotentialSpec::TimeInversePower, P, unit_pt(), &cfg).unwrap();
        assert!(rel(t1, 2.0 * p) < 1e-7);
        let r = tilde_p(&PotentialSpec::TimeInversePower, P, unit_pt(), &cfg).unwrap();
        // Q(s,t) = 2√(t−s) gives p̃ = e²p here, with equality.
        assert!(rel(r.partial_sum, 2f64.exp() * p) < 1e-5, "{}", r.partial_sum / p);
        let q = SuperadditiveQ::custom(|s, t| 2.0 * (t - s).sqrt());
        assert!(bound_check_superadditive(0.0, &q, &r).unwrap().holds);
    }

    #[test]
    fn perturbation_formulas_both_sides() {
        let spec = PotentialSpec::constant(0.5).unwrap();
        let cfg = SeriesConfig::default();
        let f = perturbation_formula_residual(&spec, P, unit_pt(), &cfg, Side::Forward).unwrap();
        let b = perturbation_formula_residual(&spec, P, unit_pt(), &cfg, Side::Backward).unwrap();
        assert!(f < 1e-5 && b < 1e-5, "{f} {b}");
        assert_eq!(
            perturbation_formula_residual(&PotentialSpec::Zero, P, unit_pt(), &cfg, Side::Forward).unwrap(),
            0.0
        );
    }

    #[test]
    fn tilde_chapman_kolmogorov() {
        let spec = PotentialSpec::constant(0.5).unwrap();
        let r = tilde_ck_residual(&spec, P, unit_pt(), 0.4, &SeriesConfig::default()).unwrap();
        assert!(r < 1e-5, "{r}");
    }

    #[test]
    fn grid_field_matches_exponential() {
        // Force the grid path with a user callable equal to a constant.
        let spec = PotentialSpec::user(|_, _| 0.5, Default::default()).unwrap();
        let cfg = SeriesConfig::default();
        let grid = tilde_field(&spec, P, 0.0, 0.0, 1.0, 1.0, &cfg).unwrap();
        let exact = tilde_field(&PotentialSpec::constant(0.5).unwrap(), P, 0.0, 0.0, 1.0, 1.0, &cfg).unwrap();
        assert!(!grid.is_closed_form() && exact.is_closed_form());
        for (u, z) in [(0.3, 0.2), (0.7, 0.9), (1.0, 1.0)] {
            assert!(rel(grid.eval(u, z), exact.eval(u, z)) < 1e-6, "{u} {z}");
        }
    }

    #[test]
    fn bridge_ratios() {
        let cfg = QuadConfig::series();
        let pt = SpaceTimePoint::new(0.2, 0.1, 0.9, 0.8);
        let r = bridge_ratio(&PotentialSpec::constant(2.0).unwrap(), P, pt, &cfg).unwrap();
        assert!(rel(r.value, 1.4) < 1e-7);
        let w = bridge_witness_point(1.0, 0.5, 0.05).unwrap();
        let r = bridge_ratio(&PotentialSpec::bridge(1.0).unwrap(), P, w, &cfg).unwrap();
        assert!(r.value >= 0.75, "{}", r.value);
        let scan = bridge_sup_scan(&PotentialSpec::power_law(0.25).unwrap(), P, 0.0, 1.0, 0.0, &[1.0, 0.1, 0.01], &cfg).unwrap();
        assert!(scan[0].ratio < scan[1].ratio && scan[1].ratio < scan[2].ratio, "{scan:?}");
    }

    #[test]
    fn certified_constant_bounds() {
        let beta = 0.3;
        let spec = PotentialSpec::constant(beta).unwrap();
        let consts = subordinator_4g_constant(2.0, 3.0).unwrap();
        let h = 0.5 / (2.0 * beta * consts.d_prime);
        let cert = *certify_from_n(&spec, P, 2.0, 3.0, 0.5, h, &SearchGrid::default(), &QuadConfig::kernel())
            .unwrap()
            .certificate()
            .unwrap();
        let cfg = SeriesConfig {
            certificate: Some(cert),
            ..Default::default()
        };
        let pt = SpaceTimePoint::new(0.0, 0.0, 0.5, 0.7);
        let m = mixed_p1(3.0, 2.0, &spec, P, pt, &QuadConfig::series()).unwrap();
        let ka = DilatedKernel::new(P, 2.0).unwrap().at(&pt);
        assert!(m.value <= (cert.eta + cert.q(0.0, 0.5)) * ka);
        let series = tilde_p(&spec, P, pt, &cfg).unwrap();
        assert_eq!(series.kernel.c, 3.0);
        assert!(bound_check_thm11(&cert, 0.2, &series).unwrap().holds);
        let exact = bound_check_superadditive(0.0, &SuperadditiveQ::Linear(beta), &series).unwrap();
        assert!(exact.holds && rel(series.partial_sum, exact.bound) < 1e-6);
    }

    #[test]
    fn adaptive_mode_matches_grid() {
        let spec = PotentialSpec::constant(1.0).unwrap();
        let cfg = SeriesConfig {
            quad: QuadConfig::series().with_tolerances(1e-6, 1e-14),
            ..Default::default()
        };
        let pt = unit_pt();
        let a = series_term_adaptive(2, &spec, P, pt, &cfg).unwrap();
        let g = series_term(2, &spec, P, pt, &cfg).unwrap();
        assert!(rel(a, g) < 1e-5, "{a} {g}");
    }
}
