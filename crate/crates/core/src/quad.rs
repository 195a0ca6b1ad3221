//! Adaptive quadrature.
//!
//! Globally adaptive 10/21-point Gauss–Kronrod bisection with QUADPACK-style
//! error estimates. Integration ranges are split into segments; a segment may
//! carry a variable substitution that removes a declared algebraic endpoint
//! singularity `(x − a)^e`, `e ∈ (−1, 0)`, or that maps a semi-infinite tail
//! onto a finite interval. All segments share one error budget.
//!
//! Space-time integrals over `{(u, z): s < u < t, x < z < y}` are iterated:
//! inner in `z`, outer in `u`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mathx::{abs, powf, KahanSum};

/// Hard cap on `max_subdivisions`.
pub const MAX_SUBDIVISIONS_CAP: usize = 200_000;

/// Tolerances and budget for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Declared algebraic exponents `(e_a, e_b)` of the integrand at the left
    /// and right endpoints; only negative exponents trigger a substitution.
    pub singularity_exponents: Option<(f64, f64)>,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self::kernel()
    }
}

impl QuadConfig {
    /// Default for integrands built from kernels only.
    pub const fn kernel() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
            singularity_exponents: None,
        }
    }

    /// Default for nested perturbation-series terms.
    pub const fn series() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
            singularity_exponents: None,
        }
    }

    pub const fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub const fn with_singularities(mut self, left: f64, right: f64) -> Self {
        self.singularity_exponents = Some((left, right));
        self
    }

    pub const fn without_singularities(mut self) -> Self {
        self.singularity_exponents = None;
        self
    }

    pub const fn with_max_subdivisions(mut self, n: usize) -> Self {
        self.max_subdivisions = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok_tol = |t: f64| t > 0.0 && t < 1.0;
        if !ok_tol(self.rel_tol) || !ok_tol(self.abs_tol) {
            return Err(Error::Domain("quadrature tolerances must lie in (0, 1)"));
        }
        if self.max_subdivisions == 0 || self.max_subdivisions > MAX_SUBDIVISIONS_CAP {
            return Err(Error::Domain("max_subdivisions out of range"));
        }
        if let Some((l, r)) = self.singularity_exponents {
            if !(l > -1.0) || !(r > -1.0) {
                return Err(Error::Domain("endpoint exponent must exceed −1"));
            }
        }
        Ok(())
    }

    fn left_exponent(&self) -> f64 {
        self.singularity_exponents.map_or(0.0, |e| e.0)
    }

    fn right_exponent(&self) -> f64 {
        self.singularity_exponents.map_or(0.0, |e| e.1)
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult {
    pub const ZERO: QuadResult = QuadResult {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 0,
        converged: true,
    };

    /// Converts a non-converged result into an error.
    pub fn require_converged(self, what: &'static str) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NotConverged {
                what,
                value: self.value,
                error_estimate: self.error_estimate,
            })
        }
    }

    fn scaled(self, k: f64) -> Self {
        QuadResult {
            value: self.value * k,
            error_estimate: self.error_estimate * abs(k),
            ..self
        }
    }
}

/// A breakpoint inside an integration range, optionally carrying the
/// algebraic exponent of the integrand there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub at: f64,
    pub exponent: f64,
}

impl Knot {
    pub const fn plain(at: f64) -> Self {
        Knot { at, exponent: 0.0 }
    }

    pub const fn singular(at: f64, exponent: f64) -> Self {
        Knot { at, exponent }
    }
}

/// Nodes and weights of the final adaptive partition; `Σ w_i f(x_i)`
/// reproduces the integral that was computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Integrand values at `nodes`, as seen during the adaptive run.
    pub values: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = KahanSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.value()
    }

    /// `Σ w_i f(x_i)` using the stored values.
    pub fn integral(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (w, v) in self.weights.iter().zip(&self.values) {
            acc.add(w * v);
        }
        acc.value()
    }
}

// Gauss–Kronrod 10/21 abscissae and weights (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_088_197,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Change of variables applied to one segment. The adaptive engine works in
/// the mapped variable `v`; `x = map(v)` and `dx = jac(v) dv`.
#[derive(Debug, Clone, Copy)]
enum SegmentMap {
    /// `x = v` on `[a, b]`.
    Identity,
    /// `x = origin + len·v^k`, `v ∈ [0, 1]`: removes `(x − origin)^e` with `k = 1/(1+e)`.
    PowerFromLeft { origin: f64, len: f64, k: f64 },
    /// `x = origin − len·v^k`, `v ∈ [0, 1]`.
    PowerFromRight { origin: f64, len: f64, k: f64 },
    /// `x = start + len·(1/v² − 1)`, `v ∈ (0, 1]`: semi-infinite tail to +∞.
    TailRight { start: f64, len: f64 },
    /// `x = start − len·(1/v² − 1)`: tail to −∞.
    TailLeft { start: f64, len: f64 },
}

impl SegmentMap {
    #[inline]
    fn eval(&self, v: f64) -> (f64, f64) {
        match *self {
            SegmentMap::Identity => (v, 1.0),
            SegmentMap::PowerFromLeft { origin, len, k } => {
                let vk1 = powf(v, k - 1.0);
                (origin + len * vk1 * v, len * k * vk1)
            }
            SegmentMap::PowerFromRight { origin, len, k } => {
                let vk1 = powf(v, k - 1.0);
                (origin - len * vk1 * v, len * k * vk1)
            }
            SegmentMap::TailRight { start, len } => {
                let iv = 1.0 / v;
                (start + len * (iv * iv - 1.0), 2.0 * len * iv * iv * iv)
            }
            SegmentMap::TailLeft { start, len } => {
                let iv = 1.0 / v;
                (start - len * (iv * iv - 1.0), 2.0 * len * iv * iv * iv)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    map: SegmentMap,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    seg: usize,
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
    splittable: bool,
    raw: [f64; 21],
}

/// `(f(x), f(x)·dx/dv)` at the mapped point.
fn eval_mapped<F: FnMut(f64) -> f64>(f: &mut F, map: &SegmentMap, v: f64) -> Result<(f64, f64)> {
    let (x, jac) = map.eval(v);
    let fx = f(x);
    if !fx.is_finite() {
        return Err(Error::NonFinite {
            what: "integrand",
            at: x,
        });
    }
    if fx == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((fx, fx * jac))
}

/// One 21-point Kronrod panel with the 10-point Gauss embedded estimate.
/// Also returns the raw integrand values in left-to-right node order.
fn gk21<F: FnMut(f64) -> f64>(f: &mut F, map: &SegmentMap, a: f64, b: f64) -> Result<(f64, f64, [f64; 21])> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut raw = [0.0; 21];
    let (rc, fc) = eval_mapped(f, map, center)?;
    raw[10] = rc;
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = abs(res_k);
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let (r1, f1) = eval_mapped(f, map, center - dx)?;
        let (r2, f2) = eval_mapped(f, map, center + dx)?;
        raw[j] = r1;
        raw[20 - j] = r2;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (abs(f1) + abs(f2));
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * abs(fc - mean);
    for j in 0..10 {
        res_asc += WGK[j] * (abs(fv1[j] - mean) + abs(fv2[j] - mean));
    }
    let result = res_k * half;
    let res_abs = res_abs * abs(half);
    let res_asc = res_asc * abs(half);
    let mut err = abs((res_k - res_g) * half);
    if res_asc != 0.0 && err != 0.0 {
        let scale = powf(200.0 * err / res_asc, 1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > err {
            err = min_err;
        }
    }
    Ok((result, err, raw))
}

struct Outcome {
    result: QuadResult,
    intervals: Vec<Interval>,
}

fn run_adaptive<F: FnMut(f64) -> f64>(
    f: &mut F,
    segments: &[Segment],
    cfg: &QuadConfig,
) -> Result<Outcome> {
    cfg.validate()?;
    let mut intervals: Vec<Interval> = Vec::with_capacity(segments.len() + 64);
    let mut evaluations = 0usize;
    for (i, s) in segments.iter().enumerate() {
        if !(s.hi > s.lo) {
            continue;
        }
        let (value, err, raw) = gk21(f, &s.map, s.lo, s.hi)?;
        evaluations += 21;
        intervals.push(Interval {
            seg: i,
            lo: s.lo,
            hi: s.hi,
            value,
            err,
            splittable: true,
            raw,
        });
    }
    let mut converged = false;
    loop {
        let mut total = KahanSum::new();
        let mut err_total = 0.0;
        for iv in &intervals {
            total.add(iv.value);
            err_total += iv.err;
        }
        let value = total.value();
        let tol = f64::max(cfg.abs_tol, cfg.rel_tol * abs(value));
        if err_total <= tol {
            converged = true;
        }
        if converged || intervals.len() >= cfg.max_subdivisions {
            return Ok(Outcome {
                result: QuadResult {
                    value,
                    error_estimate: err_total,
                    evaluations,
                    converged,
                },
                intervals,
            });
        }
        // Bisect the worst splittable interval.
        let mut worst = None;
        let mut worst_err = -1.0;
        for (i, iv) in intervals.iter().enumerate() {
            if iv.splittable && iv.err > worst_err {
                worst_err = iv.err;
                worst = Some(i);
            }
        }
        let Some(wi) = worst else {
            return Ok(Outcome {
                result: QuadResult {
                    value,
                    error_estimate: err_total,
                    evaluations,
                    converged: false,
                },
                intervals,
            });
        };
        let iv = intervals[wi];
        let mid = 0.5 * (iv.lo + iv.hi);
        let width = iv.hi - iv.lo;
        let scale = f64::max(abs(iv.lo), abs(iv.hi));
        if !(mid > iv.lo && mid < iv.hi) || width <= 1e3 * f64::EPSILON * scale {
            intervals[wi].splittable = false;
            continue;
        }
        let map = segments[iv.seg].map;
        let (v1, e1, raw1) = gk21(f, &map, iv.lo, mid)?;
        let (v2, e2, raw2) = gk21(f, &map, mid, iv.hi)?;
        evaluations += 42;
        intervals[wi] = Interval {
            hi: mid,
            value: v1,
            err: e1,
            raw: raw1,
            ..iv
        };
        intervals.push(Interval {
            lo: mid,
            value: v2,
            err: e2,
            raw: raw2,
            ..iv
        });
    }
}

fn rule_from(segments: &[Segment], intervals: &[Interval]) -> QuadRule {
    let mut rule = QuadRule {
        nodes: Vec::with_capacity(21 * intervals.len()),
        weights: Vec::with_capacity(21 * intervals.len()),
        values: Vec::with_capacity(21 * intervals.len()),
    };
    let mut sorted: Vec<&Interval> = intervals.iter().collect();
    sorted.sort_by(|a, b| a.seg.cmp(&b.seg).then(a.lo.total_cmp(&b.lo)));
    for iv in sorted {
        let map = segments[iv.seg].map;
        let center = 0.5 * (iv.lo + iv.hi);
        let half = 0.5 * (iv.hi - iv.lo);
        let mut push = |v: f64, w: f64| {
            let (x, jac) = map.eval(v);
            rule.nodes.push(x);
            rule.weights.push(w * half * jac);
        };
        for j in 0..10 {
            push(center - half * XGK[j], WGK[j]);
        }
        push(center, WGK[10]);
        for j in (0..10).rev() {
            push(center + half * XGK[j], WGK[j]);
        }
        rule.values.extend_from_slice(&iv.raw);
    }
    rule
}

fn power_k(exponent: f64) -> f64 {
    1.0 / (1.0 + exponent)
}

/// Segments for a finite `[a, b]` with endpoint exponents.
fn finite_segments(a: f64, b: f64, ea: f64, eb: f64, out: &mut Vec<Segment>) {
    let left = ea < 0.0;
    let right = eb < 0.0;
    match (left, right) {
        (false, false) => out.push(Segment {
            map: SegmentMap::Identity,
            lo: a,
            hi: b,
        }),
        (true, false) => out.push(Segment {
            map: SegmentMap::PowerFromLeft {
                origin: a,
                len: b - a,
                k: power_k(ea),
            },
            lo: 0.0,
            hi: 1.0,
        }),
        (false, true) => out.push(Segment {
            map: SegmentMap::PowerFromRight {
                origin: b,
                len: b - a,
                k: power_k(eb),
            },
            lo: 0.0,
            hi: 1.0,
        }),
        (true, true) => {
            let m = 0.5 * (a + b);
            finite_segments(a, m, ea, 0.0, out);
            finite_segments(m, b, 0.0, eb, out);
        }
    }
}

/// Sorted interior knots of `(a, b)`; coincident knots keep the most
/// singular exponent. Knots at the endpoints fold into the endpoint exponents.
fn normalize_knots(a: f64, b: f64, knots: &[Knot], ea: &mut f64, eb: &mut f64) -> Vec<Knot> {
    let mut ks: Vec<Knot> = Vec::with_capacity(knots.len());
    let tiny = 64.0 * f64::EPSILON * f64::max(abs(a), abs(b)).max(f64::MIN_POSITIVE);
    for k in knots {
        if !k.at.is_finite() {
            continue;
        }
        if abs(k.at - a) <= tiny {
            *ea = f64::min(*ea, k.exponent);
        } else if abs(k.at - b) <= tiny {
            *eb = f64::min(*eb, k.exponent);
        } else if k.at > a && k.at < b {
            ks.push(*k);
        }
    }
    ks.sort_by(|x, y| x.at.total_cmp(&y.at));
    let mut out: Vec<Knot> = Vec::with_capacity(ks.len());
    for k in ks {
        match out.last_mut() {
            Some(last) if abs(last.at - k.at) <= tiny => {
                last.exponent = f64::min(last.exponent, k.exponent);
            }
            _ => out.push(k),
        }
    }
    out
}

fn knotted_segments(a: f64, b: f64, knots: &[Knot], cfg: &QuadConfig) -> Result<Vec<Segment>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain("finite integration limits required"));
    }
    let mut ea = cfg.left_exponent();
    let mut eb = cfg.right_exponent();
    let ks = normalize_knots(a, b, knots, &mut ea, &mut eb);
    for k in &ks {
        if !(k.exponent > -1.0) {
            return Err(Error::Divergent("knot exponent ≤ −1 is not integrable"));
        }
    }
    if !(ea > -1.0 && eb > -1.0) {
        return Err(Error::Divergent("endpoint exponent ≤ −1 is not integrable"));
    }
    let mut segs = Vec::with_capacity(2 * ks.len() + 2);
    let mut lo = a;
    let mut elo = ea;
    for k in &ks {
        finite_segments(lo, k.at, elo, k.exponent, &mut segs);
        lo = k.at;
        elo = k.exponent;
    }
    finite_segments(lo, b, elo, eb, &mut segs);
    Ok(segs)
}

/// Adaptive integral of `f` over `[a, b]`.
///
/// Endpoint singularities declared in `cfg.singularity_exponents` are removed
/// by substitution. Non-convergence is reported through the `converged` flag;
/// a non-finite integrand value aborts with [`Error::NonFinite`].
pub fn integrate_1d(f: impl FnMut(f64) -> f64, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    integrate_with_knots(f, a, b, &[], cfg)
}

/// [`integrate_1d`] with interior breakpoints (possibly singular).
pub fn integrate_with_knots(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    knots: &[Knot],
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult::ZERO);
    }
    if a > b {
        let cfg = match cfg.singularity_exponents {
            Some((l, r)) => cfg.with_singularities(r, l),
            None => *cfg,
        };
        return integrate_with_knots(f, b, a, knots, &cfg).map(|r| r.scaled(-1.0));
    }
    let segs = knotted_segments(a, b, knots, cfg)?;
    Ok(run_adaptive(&mut f, &segs, cfg)?.result)
}

/// Like [`integrate_with_knots`], also returning the final rule.
pub fn rule_with_knots(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    knots: &[Knot],
    cfg: &QuadConfig,
) -> Result<(QuadResult, QuadRule)> {
    if !(b > a) {
        return Ok((QuadResult::ZERO, QuadRule::default()));
    }
    let segs = knotted_segments(a, b, knots, cfg)?;
    let out = run_adaptive(&mut f, &segs, cfg)?;
    Ok((out.result, rule_from(&segs, &out.intervals)))
}

fn semiinfinite_segments(a: f64, knots: &[Knot], cfg: &QuadConfig) -> Result<Vec<Segment>> {
    if !a.is_finite() {
        return Err(Error::Domain("finite lower limit required"));
    }
    let mut ks: Vec<Knot> = knots.iter().copied().filter(|k| k.at > a && k.at.is_finite()).collect();
    ks.sort_by(|x, y| x.at.total_cmp(&y.at));
    let tail_start = ks.last().map_or(a + 1.0, |k| k.at);
    let tail_exp = ks.last().map_or(0.0, |k| k.exponent);
    let len = if tail_start > a { tail_start - a } else { 1.0 };
    let mut segs = if ks.is_empty() {
        let local = cfg.with_singularities(cfg.left_exponent(), 0.0);
        knotted_segments(a, tail_start, &[], &local)?
    } else {
        let inner: Vec<Knot> = ks[..ks.len() - 1].to_vec();
        let local = cfg.with_singularities(cfg.left_exponent(), tail_exp);
        knotted_segments(a, tail_start, &inner, &local)?
    };
    if tail_exp < 0.0 {
        // Singular point at the tail start: one power-mapped unit before the tail.
        let b = tail_start + len;
        finite_segments(tail_start, b, tail_exp, 0.0, &mut segs);
        segs.push(Segment {
            map: SegmentMap::TailRight { start: b, len: b - a },
            lo: 0.0,
            hi: 1.0,
        });
    } else {
        segs.push(Segment {
            map: SegmentMap::TailRight {
                start: tail_start,
                len,
            },
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(segs)
}

/// Adaptive integral over `(a, ∞)`.
///
/// The range beyond the last knot (or beyond `a + 1`) is mapped to a finite
/// interval by `x = x₀ + L(1/v² − 1)`, which turns algebraic tails
/// `x^{−p}`, `p > 1`, into integrable (for `p ≥ 3/2` bounded) integrands.
/// The left endpoint exponent of `cfg` applies at `a`.
pub fn integrate_semiinfinite(f: impl FnMut(f64) -> f64, a: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    integrate_semiinfinite_with_knots(f, a, &[], cfg)
}

/// [`integrate_semiinfinite`] with breakpoints in `(a, ∞)`.
pub fn integrate_semiinfinite_with_knots(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    knots: &[Knot],
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let segs = semiinfinite_segments(a, knots, cfg)?;
    Ok(run_adaptive(&mut f, &segs, cfg)?.result)
}

/// Like [`integrate_semiinfinite_with_knots`], also returning the final rule.
pub fn rule_semiinfinite_with_knots(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    knots: &[Knot],
    cfg: &QuadConfig,
) -> Result<(QuadResult, QuadRule)> {
    let segs = semiinfinite_segments(a, knots, cfg)?;
    let out = run_adaptive(&mut f, &segs, cfg)?;
    Ok((out.result, rule_from(&segs, &out.intervals)))
}

/// Adaptive integral over the whole real line, with breakpoints.
pub fn integrate_real_line(mut f: impl FnMut(f64) -> f64, knots: &[Knot], cfg: &QuadConfig) -> Result<QuadResult> {
    let mut ks: Vec<Knot> = knots.iter().copied().filter(|k| k.at.is_finite()).collect();
    ks.sort_by(|x, y| x.at.total_cmp(&y.at));
    let (first, last) = match (ks.first(), ks.last()) {
        (Some(f0), Some(l0)) if l0.at > f0.at => (*f0, *l0),
        (Some(f0), _) => (Knot::plain(f0.at - 1.0), Knot::plain(f0.at + 1.0)),
        _ => (Knot::plain(-1.0), Knot::plain(1.0)),
    };
    let span = last.at - first.at;
    let mut segs = Vec::new();
    segs.push(Segment {
        map: SegmentMap::TailLeft {
            start: first.at,
            len: span,
        },
        lo: 0.0,
        hi: 1.0,
    });
    let interior: Vec<Knot> = ks
        .iter()
        .copied()
        .filter(|k| k.at > first.at && k.at < last.at)
        .collect();
    let local = cfg.with_singularities(first.exponent, last.exponent);
    segs.extend(knotted_segments(first.at, last.at, &interior, &local)?);
    segs.push(Segment {
        map: SegmentMap::TailRight {
            start: last.at,
            len: span,
        },
        lo: 0.0,
        hi: 1.0,
    });
    Ok(run_adaptive(&mut f, &segs, cfg)?.result)
}

/// Integration range for the inner (spatial) variable of a nested integral.
#[derive(Debug, Clone, Default)]
pub struct InnerRange {
    pub lo: f64,
    /// `None` means `+∞`.
    pub hi: Option<f64>,
    pub knots: Vec<Knot>,
    /// Exponent of the integrand at `lo`.
    pub lo_exponent: f64,
    /// Exponent of the integrand at `hi` (ignored for infinite ranges).
    pub hi_exponent: f64,
}

impl InnerRange {
    pub fn finite(lo: f64, hi: f64) -> Self {
        InnerRange {
            lo,
            hi: Some(hi),
            ..Default::default()
        }
    }

    pub fn to_infinity(lo: f64) -> Self {
        InnerRange {
            lo,
            hi: None,
            ..Default::default()
        }
    }

    pub fn with_knots(mut self, knots: Vec<Knot>) -> Self {
        self.knots = knots;
        self
    }

    pub fn integrate(&self, f: impl FnMut(f64) -> f64, cfg: &QuadConfig) -> Result<QuadResult> {
        let local = cfg.with_singularities(self.lo_exponent, self.hi_exponent);
        match self.hi {
            Some(hi) => integrate_with_knots(f, self.lo, hi, &self.knots, &local),
            None => integrate_semiinfinite_with_knots(f, self.lo, &self.knots, &local),
        }
    }

    pub fn rule(&self, f: impl FnMut(f64) -> f64, cfg: &QuadConfig) -> Result<(QuadResult, QuadRule)> {
        let local = cfg.with_singularities(self.lo_exponent, self.hi_exponent);
        match self.hi {
            Some(hi) => rule_with_knots(f, self.lo, hi, &self.knots, &local),
            None => rule_semiinfinite_with_knots(f, self.lo, &self.knots, &local),
        }
    }
}

/// Iterated integral `∫_{outer} ∫_{inner(u)} F(u, z) dz du`.
///
/// `outer_cfg` carries the outer endpoint exponents; the inner tolerance is
/// tightened by a factor 10 so that inner errors stay inside the outer
/// budget. The returned error estimate adds the outer estimate and
/// `(b − a)·max_u inner_error(u)`.
pub fn integrate_nested(
    mut f: impl FnMut(f64, f64) -> f64,
    a: f64,
    b: f64,
    outer_knots: &[Knot],
    mut inner: impl FnMut(f64) -> InnerRange,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let inner_cfg = cfg
        .without_singularities()
        .with_tolerances(f64::max(cfg.rel_tol * 0.1, 1e-15), f64::max(cfg.abs_tol * 0.1, 1e-300));
    let mut max_inner_err = 0.0f64;
    let mut inner_evals = 0usize;
    let mut inner_ok = true;
    let mut failure: Option<Error> = None;
    let outer = integrate_with_knots(
        |u| {
            if failure.is_some() {
                return 0.0;
            }
            let range = inner(u);
            match range.integrate(|z| f(u, z), &inner_cfg) {
                Ok(r) => {
                    max_inner_err = max_inner_err.max(r.error_estimate);
                    inner_evals += r.evaluations;
                    inner_ok &= r.converged;
                    r.value
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        a,
        b,
        outer_knots,
        cfg,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(QuadResult {
        value: outer.value,
        error_estimate: outer.error_estimate + abs(b - a) * max_inner_err,
        evaluations: outer.evaluations + inner_evals,
        converged: outer.converged && inner_ok,
    })
}

/// `∫_s^t ∫_x^y F(u, z) dz du` by iterated adaptive quadrature.
pub fn integrate_spacetime(
    f: impl FnMut(f64, f64) -> f64,
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    if !(s < t) || !(x < y) {
        return Err(Error::Domain("space-time rectangle requires s < t and x < y"));
    }
    integrate_nested(f, s, t, &[], |_| InnerRange::finite(x, y), cfg)
}
