//! Monte Carlo oracle: inverse Gaussian increments, bridge marginals and the
//! bridge ratio `p_1/p`, independent of the quadrature engine.
//!
//! The family density matches the textbook inverse Gaussian law with mean
//! `μ = tδ/(2√λ)` and shape `Λ = (tδ)²/2`; for `λ = 0` it is the Lévy law
//! with scale `(tδ)²/2`, sampled as `(tδ)²/(2N²)`.

use alloc::vec::Vec;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Error, Result};
use crate::kernels::{DilatedKernel, KernelParams, SpaceTimePoint};
use crate::mathx::{abs, exp, ln, sqrt};
use crate::potentials::PotentialSpec;
use crate::quad::{self, Knot, QuadConfig};

/// A reproducible random stream: ChaCha20 keyed by `master_seed`, with
/// `stream_id` selecting an independent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        RngSpec { master_seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut r = ChaCha20Rng::seed_from_u64(self.master_seed);
        r.set_stream(self.stream_id);
        r
    }
}

/// One draw with density `ig_density(params, t, ·)`.
pub fn sample_ig_increment<R: Rng + ?Sized>(params: KernelParams, t: f64, rng: &mut R) -> f64 {
    let dt = params.delta * t;
    let n: f64 = rng.sample(StandardNormal);
    if params.lambda == 0.0 {
        return dt * dt / (2.0 * n * n);
    }
    let mu = dt / (2.0 * sqrt(params.lambda));
    let shape = 0.5 * dt * dt;
    // Michael–Schucany–Haas, with the smaller root written without cancellation.
    let r = mu * n * n / (2.0 * shape);
    let x = mu / (1.0 + r + sqrt(r * (r + 2.0)));
    let u: f64 = rng.sample(Open01);
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// `n` draws from the stream `spec`.
pub fn sample_ig_increments(params: KernelParams, t: f64, n: usize, spec: RngSpec) -> Result<Vec<f64>> {
    params.validate()?;
    ensure(t > 0.0 && t.is_finite(), "sample_ig_increment: t must be positive")?;
    let mut rng = spec.rng();
    Ok((0..n).map(|_| sample_ig_increment(params, t, &mut rng)).collect())
}

/// `∫_0^z p(t, w) dw` by quadrature.
pub fn ig_cdf_numeric(params: KernelParams, t: f64, z: f64, cfg: &QuadConfig) -> Result<f64> {
    params.validate()?;
    ensure(t > 0.0, "ig_cdf: t must be positive")?;
    if !(z > 0.0) {
        return Ok(0.0);
    }
    let knots: Vec<Knot> = params.increment_knots(t).into_iter().filter(|k| *k < z).map(Knot::plain).collect();
    let r = quad::integrate_with_knots(|w| params.density(t, w), 0.0, z, &knots, cfg)?;
    Ok(r.value.clamp(0.0, 1.0))
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` (sorted in place)
/// against `cdf`.
pub fn ks_statistic(samples: &mut [f64], mut cdf: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    ensure(!samples.is_empty(), "ks_statistic: no samples")?;
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in samples.iter().enumerate() {
        let f = cdf(*x)?;
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// Asymptotic critical value `√(−ln(α/2)/2)/√n` of the KS statistic.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    sqrt(-0.5 * ln(0.5 * alpha)) / sqrt(n as f64)
}

/// Bridge marginal `z ↦ p(u−s, z−x) p(t−u, y−z) / p(t−s, y−x)` on `(x, y)`,
/// with a cached CDF on a fixed cell partition. Within a cell the CDF is the
/// cubic Hermite interpolant of the cell integrals and end densities.
#[derive(Debug, Clone)]
pub struct BridgeMarginal {
    eff: KernelParams,
    pt: SpaceTimePoint,
    u: f64,
    log_norm: f64,
    edges: Vec<f64>,
    cum: Vec<f64>,
    dens: Vec<f64>,
    total: f64,
}

impl BridgeMarginal {
    pub fn new(params: KernelParams, pt: SpaceTimePoint, u: f64, cfg: &QuadConfig) -> Result<Self> {
        params.validate()?;
        ensure(pt.is_forward(), "bridge marginal: need t > s and y > x")?;
        ensure(u > pt.s && u < pt.t, "bridge marginal: need s < u < t")?;
        let eff = DilatedKernel::unit(params).effective();
        let SpaceTimePoint { s, x, t, y } = pt;
        let len = y - x;
        let mut edges: Vec<f64> = (0..=1024).map(|i| x + len * i as f64 / 1024.0).collect();
        let (m1, m2) = (eff.mode(u - s), eff.mode(t - u));
        let mut g = 1.0;
        while g > 1e-12 {
            for (base, m, sign) in [(x, m1, 1.0), (y, m2, -1.0)] {
                for f in [0.25, 0.5, 1.0, 2.0, 4.0] {
                    let off = f * m * g;
                    if off > 0.0 && off < len {
                        edges.push(base + sign * off);
                    }
                }
            }
            g *= 0.1;
        }
        for k in 1..=256 {
            let frac = k as f64 / 257.0;
            edges.push(x + len * frac * frac);
            edges.push(y - len * frac * frac);
        }
        edges.retain(|e| *e >= x && *e <= y);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let log_norm = eff.log_density(t - s, len);
        let mut bm = BridgeMarginal {
            eff,
            pt,
            u,
            log_norm,
            cum: Vec::with_capacity(edges.len()),
            dens: Vec::with_capacity(edges.len()),
            edges: Vec::new(),
            total: 0.0,
        };
        let mut acc = 0.0;
        bm.cum.push(0.0);
        for w in edges.windows(2) {
            let r = quad::integrate_1d(|z| bm.density(z), w[0], w[1], cfg)?;
            acc += r.value;
            bm.cum.push(acc);
        }
        bm.dens = edges.iter().map(|z| bm.density(*z)).collect();
        bm.edges = edges;
        bm.total = acc;
        ensure(acc > 0.0 && acc.is_finite(), "bridge marginal: CDF construction failed")?;
        Ok(bm)
    }

    /// Unnormalized marginal density (integrates to 1 up to quadrature error).
    pub fn density(&self, z: f64) -> f64 {
        let SpaceTimePoint { s, x, t, y } = self.pt;
        let lp = self.eff.log_density(self.u - s, z - x) + self.eff.log_density(t - self.u, y - z) - self.log_norm;
        if lp == f64::NEG_INFINITY {
            0.0
        } else {
            exp(lp)
        }
    }

    /// The CDF at `y` before normalization.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Normalized CDF.
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= self.pt.x {
            return 0.0;
        }
        if z >= self.pt.y {
            return 1.0;
        }
        let i = self.edges.partition_point(|e| *e <= z).saturating_sub(1).min(self.edges.len() - 2);
        let tau = (z - self.edges[i]) / (self.edges[i + 1] - self.edges[i]);
        self.cell_cdf(i, tau) / self.total
    }

    fn cell_cdf(&self, i: usize, tau: f64) -> f64 {
        let h = self.edges[i + 1] - self.edges[i];
        let (c0, c1) = (self.cum[i], self.cum[i + 1]);
        let (d0, d1) = (self.dens[i] * h, self.dens[i + 1] * h);
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * c0 + h10 * d0 + h01 * c1 + h11 * d1
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let target = rng.sample::<f64, _>(Open01) * self.total;
        let i = self.cum.partition_point(|c| *c <= target).saturating_sub(1).min(self.edges.len() - 2);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cell_cdf(i, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = self.edges[i] + 0.5 * (lo + hi) * (self.edges[i + 1] - self.edges[i]);
        z.clamp(self.pt.x, self.pt.y)
    }
}

/// One draw of the bridge marginal at time `u`, building the CDF on the fly.
pub fn sample_bridge_marginal<R: Rng + ?Sized>(
    params: KernelParams,
    pt: SpaceTimePoint,
    u: f64,
    rng: &mut R,
) -> Result<f64> {
    Ok(BridgeMarginal::new(params, pt, u, &QuadConfig::kernel())?.sample(rng))
}

/// Attempts allowed per accepted bridge draw.
pub const MAX_REJECTIONS: usize = 10_000_000;

/// Exact bridge draw at time `u` by rejection: propose the increment of the
/// leg whose density peak is higher and accept with the other leg's density
/// relative to its peak.
fn sample_bridge_rejection<R: Rng + ?Sized>(eff: KernelParams, pt: &SpaceTimePoint, u: f64, rng: &mut R) -> Result<f64> {
    let SpaceTimePoint { s, x, t, y } = *pt;
    let len = y - x;
    let (a1, a2) = (u - s, t - u);
    let lm1 = eff.log_density(a1, eff.mode(a1));
    let lm2 = eff.log_density(a2, eff.mode(a2));
    // Proposing from the first leg accepts with ρ(pt)/max p(a2, ·).
    let from_first = lm2 <= lm1;
    for _ in 0..MAX_REJECTIONS {
        let (prop, other, lm) = if from_first { (a1, a2, lm2) } else { (a2, a1, lm1) };
        let d = sample_ig_increment(eff, prop, rng);
        if !(d < len) {
            continue;
        }
        let acc = exp(eff.log_density(other, len - d) - lm);
        let v: f64 = rng.sample(Open01);
        if v < acc {
            return Ok(if from_first { x + d } else { y - d });
        }
    }
    Err(Error::NotConverged {
        what: "bridge rejection sampler",
        value: f64::NAN,
        error_estimate: f64::NAN,
    })
}

/// Per-stream sums for the bridge-ratio estimator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McPartial {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl McPartial {
    pub fn merge(self, other: McPartial) -> McPartial {
        McPartial {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: u64,
    /// Set when `q` is singular inside the window, where the variance may be
    /// infinite and the standard error unreliable.
    pub infinite_variance_warning: bool,
}

impl McEstimate {
    pub fn from_partial(p: McPartial, warning: bool) -> McEstimate {
        let n = p.n as f64;
        let mean = p.sum / n;
        let var = if p.n > 1 { f64::max(p.sum_sq / n - mean * mean, 0.0) * n / (n - 1.0) } else { 0.0 };
        McEstimate {
            estimate: mean,
            std_error: sqrt(var / n),
            n_samples: p.n,
            infinite_variance_warning: warning,
        }
    }
}

/// Whether `q` has a declared singularity inside the window of `pt`, where the
/// estimator's variance may be infinite.
pub fn singular_inside(spec: &PotentialSpec, pt: &SpaceTimePoint) -> bool {
    let mid = 0.5 * (pt.s + pt.t);
    spec.space_knots(mid, pt.x, pt.y).iter().any(|k| k.exponent < 0.0)
        || spec.time_knots(pt.s, pt.t).iter().any(|k| k.exponent < 0.0)
}

/// Sums of `(t−s)·q(U, Z_U)` over `n` draws of one stream.
pub fn mc_bridge_partial(spec: &PotentialSpec, params: KernelParams, pt: SpaceTimePoint, n: u64, rng: RngSpec) -> Result<McPartial> {
    params.validate()?;
    ensure(pt.is_forward(), "mc_bridge_ratio: need t > s and y > x")?;
    if matches!(spec, PotentialSpec::Zero) {
        return Ok(McPartial {
            n,
            sum: 0.0,
            sum_sq: 0.0,
        });
    }
    let eff = DilatedKernel::unit(params).effective();
    let mut r = rng.rng();
    let span = pt.t - pt.s;
    let mut p = McPartial::default();
    for _ in 0..n {
        let u = pt.s + span * r.sample::<f64, _>(Open01);
        let z = sample_bridge_rejection(eff, &pt, u, &mut r)?;
        let v = span * spec.eval(u, z);
        ensure(v.is_finite(), "mc_bridge_ratio: q is infinite at a sampled point")?;
        p.n += 1;
        p.sum += v;
        p.sum_sq += v * v;
    }
    Ok(p)
}

/// Monte Carlo estimate of `p_1(pt)/p(pt) = (t−s) E[q(U, Z_U)]`.
pub fn mc_bridge_ratio(spec: &PotentialSpec, params: KernelParams, pt: SpaceTimePoint, n_samples: u64, rng: RngSpec) -> Result<McEstimate> {
    ensure(n_samples > 0, "mc_bridge_ratio: need at least one sample")?;
    let p = mc_bridge_partial(spec, params, pt, n_samples, rng)?;
    Ok(McEstimate::from_partial(p, singular_inside(spec, &pt)))
}

/// Merges per-stream partials in stream order.
pub fn mc_bridge_ratio_streams(
    spec: &PotentialSpec,
    params: KernelParams,
    pt: SpaceTimePoint,
    n_per_stream: u64,
    master_seed: u64,
    streams: core::ops::Range<u64>,
) -> Result<McEstimate> {
    ensure(n_per_stream > 0 && !streams.is_empty(), "mc_bridge_ratio: need samples")?;
    let mut acc = McPartial::default();
    for id in streams {
        acc = acc.merge(mc_bridge_partial(spec, params, pt, n_per_stream, RngSpec::new(master_seed, id))?);
    }
    Ok(McEstimate::from_partial(acc, singular_inside(spec, &pt)))
}

/// `|a − b| ≤ k·√(σ_a² + σ_b²)`.
pub fn agree_within(a: f64, sa: f64, b: f64, sb: f64, k: f64) -> bool {
    abs(a - b) <= k * sqrt(sa * sa + sb * sb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_streams() {
        let p = KernelParams::new(1.0, 2.0).unwrap();
        let a = sample_ig_increments(p, 1.0, 16, RngSpec::new(7, 3)).unwrap();
        let b = sample_ig_increments(p, 1.0, 16, RngSpec::new(7, 3)).unwrap();
        let c = sample_ig_increments(p, 1.0, 16, RngSpec::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn ig_mean_and_laplace() {
        let n = 200_000;
        let p = KernelParams::new(1.0, 2.0).unwrap();
        let d = sample_ig_increments(p, 1.0, n, RngSpec::new(1, 0)).unwrap();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 1.0).abs() < 4.0 * (var / n as f64).sqrt(), "{mean}");
        let d = sample_ig_increments(KernelParams::STABLE_HALF, 1.0, n, RngSpec::new(2, 0)).unwrap();
        let l: Vec<f64> = d.iter().map(|v| (-v).exp()).collect();
        let m = l.iter().sum::<f64>() / n as f64;
        let sd = (l.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((m - (-1.0f64).exp()).abs() < 4.0 * sd, "{m}");
    }

    #[test]
    fn bridge_marginal_cdf() {
        let pt = SpaceTimePoint::new(0.0, 0.0, 1.0, 1.0);
        let bm = BridgeMarginal::new(KernelParams::STABLE_HALF, pt, 0.5, &QuadConfig::kernel()).unwrap();
        assert!((bm.total_mass() - 1.0).abs() < 1e-8, "{}", bm.total_mass());
        assert!((bm.cdf(0.5) - 0.5).abs() < 1e-9);
        let mut rng = RngSpec::new(5, 0).rng();
        let zs: Vec<f64> = (0..20_000).map(|_| bm.sample(&mut rng)).collect();
        assert!(zs.iter().all(|z| *z > 0.0 && *z < 1.0));
        let m = zs.iter().sum::<f64>() / zs.len() as f64;
        let sd = (zs.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / zs.len() as f64 / zs.len() as f64).sqrt();
        assert!((m - 0.5).abs() < 4.0 * sd);
    }

    #[test]
    fn constant_and_zero_ratio() {
        let pt = SpaceTimePoint::new(0.0, 0.0, 1.0, 1.0);
        let z = mc_bridge_ratio(&PotentialSpec::Zero, KernelParams::STABLE_HALF, pt, 10, RngSpec::new(1, 1)).unwrap();
        assert_eq!((z.estimate, z.std_error), (0.0, 0.0));
        let c = mc_bridge_ratio(&PotentialSpec::constant(2.5).unwrap(), KernelParams::STABLE_HALF, pt, 1000, RngSpec::new(1, 1)).unwrap();
        assert!((c.estimate - 2.5).abs() < 1e-12 && c.std_error < 1e-12);
        assert!(ks_critical_value(10_000, 0.01) - 0.016276 < 1e-5);
    }
}
