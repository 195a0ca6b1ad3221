//! Subcommand implementations. Each returns a finished [`Report`].

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use subschro_core::fourg::{gaussian_4g_constant, scan_3g_ratio, scan_4g, subordinator_4g_constant};
use subschro_core::generators::{fundsol_residual, SpaceTimeTestFunction, TestFunction};
use subschro_core::kernels::stable_density;
use subschro_core::mc::{
    ig_cdf_numeric, ks_critical_value, ks_statistic, mc_bridge_partial, agree_within, sample_ig_increments,
    singular_inside, McEstimate, McPartial, RngSpec,
};
use subschro_core::perturb::{
    bound_check_thm11, bridge_ratio, bridge_sup_scan, bridge_witness_scan, tilde_p, SeriesConfig,
};
use subschro_core::potentials::{
    certify_from_i, certify_from_lr, certify_from_n, kato_i, kato_n, Certification, SearchGrid,
};
use subschro_core::quad::{integrate_with_knots, Knot};
use subschro_core::{DilatedKernel, Error, KernelParams, PotentialSpec, QuadConfig, SpaceTimePoint};

use crate::report::{Entry, Report};
use crate::{
    BridgeArgs, BridgeMode, CertMethod, CertifyArgs, Check4gArgs, CkArgs, Cli, Command, ConstantsArgs, DensityArgs,
    Functional, FundsolArgs, Global, KatoArgs, KernelArgs, McArgs, PointArgs, Scan3gArgs, SearchArgs, SeriesArgs,
    UsageError,
};

/// Samples per independent stream in `check-4g`; fixed so that results do
/// not depend on the thread count.
const CHUNK_4G: usize = 10_000;
/// Tolerance used inside the α-stable density integral.
const STABLE_REL_TOL: f64 = 1e-11;

pub fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Density(_) => "density",
        Command::CkCheck(_) => "ck-check",
        Command::Constants(_) => "constants",
        Command::Check4g(_) => "check-4g",
        Command::Scan3g(_) => "scan-3g",
        Command::Kato(_) => "kato",
        Command::Certify(_) => "certify",
        Command::Series(_) => "series",
        Command::Bridge(_) => "bridge",
        Command::Fundsol(_) => "fundsol",
        Command::McOracle(_) => "mc-oracle",
    }
}

/// Echo of every parsed parameter, enough to rerun the command.
pub fn inputs(cli: &Cli) -> Value {
    let args = match &cli.command {
        Command::Density(a) => json!(a),
        Command::CkCheck(a) => json!(a),
        Command::Constants(a) => json!(a),
        Command::Check4g(a) => json!(a),
        Command::Scan3g(a) => json!(a),
        Command::Kato(a) => json!(a),
        Command::Certify(a) => json!(a),
        Command::Series(a) => json!(a),
        Command::Bridge(a) => json!(a),
        Command::Fundsol(a) => json!(a),
        Command::McOracle(a) => json!(a),
    };
    let g = &cli.global;
    json!({ "seed": g.seed, "tol": g.tol, "threads": g.threads, "args": args })
}

pub fn run(cli: &Cli) -> Result<Report> {
    let g = &cli.global;
    if let Some(t) = g.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(usage("--tol must lie in (0, 1)"));
        }
    }
    let mut r = Report::new(name(&cli.command), inputs(cli));
    match &cli.command {
        Command::Density(a) => density(a, &mut r)?,
        Command::CkCheck(a) => ck_check(a, g, &mut r)?,
        Command::Constants(a) => constants(a, &mut r)?,
        Command::Check4g(a) => check_4g(a, g, &mut r)?,
        Command::Scan3g(a) => scan_3g(a, &mut r)?,
        Command::Kato(a) => kato(a, g, &mut r)?,
        Command::Certify(a) => certify(a, g, &mut r)?,
        Command::Series(a) => series(a, g, &mut r)?,
        Command::Bridge(a) => bridge(a, g, &mut r)?,
        Command::Fundsol(a) => fundsol(a, g, &mut r)?,
        Command::McOracle(a) => mc_oracle(a, g, &mut r)?,
    }
    Ok(r)
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

/// Domain and parse errors are the caller's fault; everything else is a
/// numerical failure that belongs in the report.
fn core<T>(r: subschro_core::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Domain(_) | Error::Parse(_) => usage(e.to_string()),
        other => anyhow!(other.to_string()),
    })
}

fn params(k: &KernelArgs) -> Result<KernelParams> {
    core(KernelParams::new(k.lambda, k.delta))
}

fn potential(s: &str) -> Result<PotentialSpec> {
    core(s.parse())
}

fn required<T: Copy>(v: Option<T>, flag: &str, why: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("{flag} is required {why}")))
}

fn quad(g: &Global, base: QuadConfig) -> QuadConfig {
    match g.tol {
        Some(t) => base.with_tolerances(t, base.abs_tol),
        None => base,
    }
}

fn point(p: &PointArgs) -> Result<SpaceTimePoint> {
    if !(p.t > p.s && p.y > p.x) {
        return Err(usage("the point needs t > s and y > x"));
    }
    Ok(SpaceTimePoint::new(p.s, p.x, p.t, p.y))
}

fn grid(s: &SearchArgs) -> SearchGrid {
    SearchGrid {
        x_lo: s.x_lo,
        x_hi: s.x_hi,
        x_points: s.x_points,
        t_lo: s.t_lo,
        t_hi: s.t_hi,
        t_points: s.t_points,
    }
}

/// Rounding-level estimate for a value computed as `exp` of a log-space sum.
fn log_space_error(v: f64) -> f64 {
    if v > 0.0 {
        (8.0 + v.ln().abs()) * f64::EPSILON * v
    } else {
        0.0
    }
}

fn density(a: &DensityArgs, r: &mut Report) -> Result<()> {
    if !(a.t > 0.0) {
        return Err(usage("--t must be positive"));
    }
    for &z in &a.z {
        let e = match a.alpha {
            Some(alpha) => {
                let v = core(stable_density(alpha, a.t, z))?;
                let err = if alpha == 0.5 { log_space_error(v) } else { STABLE_REL_TOL * v };
                Entry::new("density", v, err)
            }
            None => {
                let k = core(DilatedKernel::new(params(&a.kernel)?, a.c))?;
                let v = k.eval(0.0, 0.0, a.t, z);
                Entry::new("density", v, log_space_error(v))
            }
        };
        r.push(e.param("z", z));
    }
    Ok(())
}

fn ck_row(k: &DilatedKernel, u: f64, y: f64, cfg: &QuadConfig) -> Result<(f64, f64, bool)> {
    let eff = k.effective();
    let mut knots: Vec<Knot> = [eff.mode(u), eff.mean(u)]
        .into_iter()
        .filter(|o| *o < y)
        .chain([eff.mode(1.0 - u), eff.mean(1.0 - u)].into_iter().filter(|o| *o < y).map(|o| y - o))
        .map(Knot::plain)
        .collect();
    knots.sort_by(|a, b| a.at.total_cmp(&b.at));
    let q = core(integrate_with_knots(|z| k.eval(0.0, 0.0, u, z) * k.eval(u, z, 1.0, y), 0.0, y, &knots, cfg))?;
    let target = k.eval(0.0, 0.0, 1.0, y);
    Ok(((q.value - target).abs() / target, q.error_estimate / target, q.converged))
}

fn ck_check(a: &CkArgs, g: &Global, r: &mut Report) -> Result<()> {
    let p = params(&a.kernel)?;
    if a.u.iter().any(|u| !(*u > 0.0 && *u < 1.0)) || a.y.iter().any(|y| !(*y > 0.0)) {
        return Err(usage("--u must lie in (0, 1) and --y must be positive"));
    }
    let cfg = quad(g, QuadConfig::kernel());
    let cases: Vec<(f64, f64, f64)> = a
        .c
        .iter()
        .flat_map(|&c| a.u.iter().flat_map(move |&u| a.y.iter().map(move |&y| (c, u, y))))
        .collect();
    let rows = cases
        .par_iter()
        .map(|&(c, u, y)| {
            let k = core(DilatedKernel::new(p, c))?;
            let (res, err, conv) = ck_row(&k, u, y, &cfg)?;
            Ok(Entry::new("ck_residual", res, err)
                .param("c", c)
                .param("u", u)
                .param("y", y)
                .converged(conv)
                .pass(res <= a.max_residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let ok = rows.iter().all(|e| e.pass == Some(true));
    rows.into_iter().for_each(|e| r.push(e));
    r.verdict(ok);
    Ok(())
}

fn constants(a: &ConstantsArgs, r: &mut Report) -> Result<()> {
    let k = core(subordinator_4g_constant(a.a, a.b))?;
    r.push(Entry::exact("alpha", k.alpha));
    r.push(Entry::exact("l", k.l_value));
    r.push(Entry::exact("argmax_tau", k.argmax_tau));
    r.push(Entry::exact("D", k.d));
    r.push(Entry::exact("D_prime", k.d_prime));
    for &d in &a.d {
        r.push(Entry::exact("M", core(gaussian_4g_constant(a.a, a.b, d))?).param("d", d));
    }
    Ok(())
}

fn check_4g(a: &Check4gArgs, g: &Global, r: &mut Report) -> Result<()> {
    let p = params(&a.kernel)?;
    let consts = core(subordinator_4g_constant(a.a, a.b))?;
    let chunks: Vec<(u64, usize)> = (0..a.samples.div_ceil(CHUNK_4G))
        .map(|i| (i as u64, CHUNK_4G.min(a.samples - i * CHUNK_4G)))
        .collect();
    let scans = chunks
        .par_iter()
        .map(|&(id, n)| core(scan_4g(&consts, p, n, a.time_hi, a.space_hi, &mut RngSpec::new(g.seed, id).rng())))
        .collect::<Result<Vec<_>>>()?;
    let (mut samples, mut violations, mut max_ratio, mut worst) = (0usize, 0usize, 0.0f64, [0.0; 6]);
    for s in &scans {
        samples += s.samples;
        violations += s.violations;
        if s.max_ratio > max_ratio {
            max_ratio = s.max_ratio;
            worst = s.worst;
        }
    }
    r.push(Entry::exact("samples", samples as f64).samples(samples as u64));
    r.push(Entry::exact("violations", violations as f64).pass(violations == 0));
    let mut e = Entry::new("max_ratio", max_ratio, log_space_error(max_ratio)).pass(max_ratio <= 1.0);
    for (k, v) in ["s", "u", "t", "x", "z", "y"].iter().zip(worst) {
        e = e.param(k, v);
    }
    r.push(e);
    r.verdict(violations == 0 && max_ratio <= 1.0);
    Ok(())
}

fn scan_3g(a: &Scan3gArgs, r: &mut Report) -> Result<()> {
    let p = params(&a.kernel)?;
    let gap = p.delta - 2.0 * p.lambda.sqrt();
    let mut ok = true;
    for &theta in &a.theta {
        let v = core(scan_3g_ratio(p, theta))?;
        let closed = 2f64.sqrt() * (theta * gap * gap / 4.0).exp();
        let err = f64::max((v - closed).abs(), log_space_error(v));
        let pass = (v - closed).abs() <= 1e-10 * closed;
        ok &= pass;
        r.push(Entry::new("ratio", v, err).param("theta", theta).pass(pass));
    }
    r.verdict(ok);
    Ok(())
}

fn kato(a: &KatoArgs, g: &Global, r: &mut Report) -> Result<()> {
    let spec = potential(&a.potential)?;
    let cfg = quad(g, QuadConfig::kernel());
    let search = grid(&a.search);
    match a.functional {
        Functional::N => {
            let h = required(a.h, "--h", "for N")?;
            let n = core(kato_n(&spec, params(&a.kernel)?, a.c, h, &search, &cfg))?;
            r.push(Entry::new("N", n.value, n.error_estimate).converged(n.converged));
            for (name, s) in [("forward_sup", n.forward), ("backward_sup", n.backward)] {
                r.push(
                    Entry::new(name, s.value, s.error_estimate)
                        .param("at_time", s.at_time)
                        .param("at_space", s.at_space)
                        .converged(s.converged),
                );
            }
            r.verdict(n.converged);
        }
        Functional::I => {
            let radius = required(a.r, "--r", "for I")?;
            let i = core(kato_i(&spec, a.alpha, radius, &search, &cfg))?;
            r.push(Entry::new("I", i.value, i.error_estimate).param("at_space", i.at_space).converged(i.converged));
            r.verdict(i.converged);
        }
    }
    Ok(())
}

fn certify(a: &CertifyArgs, g: &Global, r: &mut Report) -> Result<()> {
    let cfg = quad(g, QuadConfig::kernel());
    let search = grid(&a.search);
    let outcome = match a.method {
        CertMethod::N => {
            let spec = potential(a.potential.as_deref().ok_or_else(|| usage("--potential is required for N"))?)?;
            let h = required(a.h, "--h", "for N")?;
            core(certify_from_n(&spec, params(&a.kernel)?, a.a, a.b, a.eta, h, &search, &cfg))?
        }
        CertMethod::I => {
            let spec = potential(a.potential.as_deref().ok_or_else(|| usage("--potential is required for I"))?)?;
            let h = required(a.h, "--h", "for I")?;
            core(certify_from_i(&spec, a.a, a.b, h, &search, &cfg))?
        }
        CertMethod::Lr => {
            let norm = required(a.norm, "--norm", "for L^r")?;
            let rr = required(a.r, "--r", "for L^r")?;
            Certification::Certified(core(certify_from_lr(norm, rr, a.a, a.b, a.eta))?)
        }
    };
    match outcome {
        Certification::Certified(c) => {
            let src = c.source.to_string();
            for (name, v) in [
                ("eta", c.eta),
                ("q_slope", c.q_slope),
                ("h", c.h),
                ("c", c.c),
                ("D", c.d),
                ("D_prime", c.d_prime),
            ] {
                r.push(Entry::exact(name, v).param("source", src.clone()));
            }
            r.push(Entry::exact("eta_below_one", f64::from(u8::from(c.eta < 1.0))).pass(c.eta < 1.0));
            r.verdict(c.eta < 1.0);
        }
        Certification::Rejected {
            measured,
            error_estimate,
            threshold,
        } => {
            r.push(Entry::new("measured", measured, error_estimate));
            r.push(Entry::exact("threshold", threshold));
            r.verdict(false);
        }
    }
    Ok(())
}

fn series(a: &SeriesArgs, g: &Global, r: &mut Report) -> Result<()> {
    let spec = potential(&a.potential)?;
    let p = params(&a.kernel)?;
    let pt = point(&a.point)?;
    let certificate = match &a.certify_n {
        Some(v) => {
            let kcfg = quad(g, QuadConfig::kernel());
            match core(certify_from_n(&spec, p, v[0], v[1], v[2], v[3], &SearchGrid::default(), &kcfg))? {
                Certification::Certified(c) => Some(c),
                Certification::Rejected {
                    measured,
                    error_estimate,
                    threshold,
                } => {
                    r.push(Entry::new("measured_N", measured, error_estimate));
                    r.push(Entry::exact("threshold", threshold));
                    r.error = Some("certificate rejected".into());
                    r.verdict(false);
                    return Ok(());
                }
            }
        }
        None => None,
    };
    let cfg = SeriesConfig {
        n_max: a.n_max,
        tail_tol: a.tail_tol,
        grid_nodes: a.grid_nodes,
        quad: quad(g, QuadConfig::series()),
        certificate,
    };
    let s = core(tilde_p(&spec, p, pt, &cfg))?;
    let rel = s.rel_error_estimate;
    for (n, v) in s.terms.iter().enumerate() {
        r.push(Entry::new("p_n", *v, rel * v.abs()).param("n", n));
    }
    r.push(Entry::new("partial_sum", s.partial_sum, rel * s.partial_sum).converged(s.converged));
    if let Some(tb) = s.tail_bound {
        r.push(Entry::exact("tail_bound", tb));
    }
    if let Some(lr) = s.last_ratio {
        r.push(Entry::new("last_ratio", lr, 2.0 * rel * lr));
    }
    let mut ok = s.converged;
    if let (Some(eps), Some(cert)) = (a.eps, certificate.as_ref()) {
        let b = core(bound_check_thm11(cert, eps, &s))?;
        r.push(Entry::new("bound", b.bound, log_space_error(b.bound)).param("eps", eps).pass(b.holds));
        ok &= b.holds;
    } else if a.eps.is_some() {
        return Err(usage("--eps needs --certify-n"));
    }
    r.verdict(ok);
    Ok(())
}

fn bridge(a: &BridgeArgs, g: &Global, r: &mut Report) -> Result<()> {
    let p = params(&a.kernel)?;
    let cfg = quad(g, QuadConfig::kernel());
    let need_potential = || -> Result<PotentialSpec> {
        potential(a.potential.as_deref().ok_or_else(|| usage("--potential is required for this mode"))?)
    };
    match a.mode {
        BridgeMode::Ratio => {
            let spec = need_potential()?;
            let pt = point(&PointArgs {
                s: a.s,
                x: a.x,
                t: required(a.t, "--t", "for ratio")?,
                y: required(a.y, "--y", "for ratio")?,
            })?;
            let q = core(bridge_ratio(&spec, p, pt, &cfg))?;
            r.push(Entry::new("bridge_ratio", q.value, q.error_estimate).converged(q.converged));
            r.verdict(q.converged);
        }
        BridgeMode::SupScan => {
            let spec = need_potential()?;
            let t = required(a.t, "--t", "for sup-scan")?;
            let rows = a
                .widths
                .par_iter()
                .map(|&w| core(bridge_sup_scan(&spec, p, a.s, t, a.center, &[w], &cfg)).map(|v| (w, v[0])))
                .collect::<Result<Vec<_>>>()?;
            for (w, b) in rows {
                r.push(
                    Entry::new("bridge_ratio", b.ratio, b.error_estimate)
                        .param("width", w)
                        .param("x", b.x)
                        .param("y", b.y),
                );
            }
        }
        BridgeMode::Counterexample => {
            let rows = core(bridge_witness_scan(a.eta, a.eps, a.eta_target, &a.times, p, &cfg))?;
            let mut ok = true;
            for w in rows {
                let pass = w.ratio + w.error_estimate >= w.lower_bound;
                ok &= pass;
                r.push(
                    Entry::new("witness_ratio", w.ratio, w.error_estimate)
                        .param("t", w.t)
                        .param("lower_bound", w.lower_bound)
                        .param("required_slope", w.required_slope)
                        .pass(pass),
                );
            }
            r.verdict(ok);
        }
    }
    Ok(())
}

fn fundsol(a: &FundsolArgs, g: &Global, r: &mut Report) -> Result<()> {
    let f = core(TestFunction::builtin(&a.time_fn))?;
    let h = core(TestFunction::builtin(&a.space_fn))?;
    let phi = core(SpaceTimeTestFunction::product(&f, &h))?;
    let spec = a.potential.as_deref().map(potential).transpose()?;
    let cfg = quad(g, QuadConfig::kernel());
    let res = core(fundsol_residual(&phi, spec.as_ref(), params(&a.kernel)?, a.s, a.x, &cfg))?;
    let pass = res <= a.max_residual;
    r.push(Entry::new("residual", res, cfg.rel_tol).pass(pass));
    r.verdict(pass);
    Ok(())
}

fn mc_oracle(a: &McArgs, g: &Global, r: &mut Report) -> Result<()> {
    let spec = potential(&a.potential)?;
    let p = params(&a.kernel)?;
    let pt = point(&a.point)?;
    if a.samples_per_stream == 0 || a.streams == 0 {
        return Err(usage("need at least one sample and one stream"));
    }
    let partials = (0..a.streams)
        .into_par_iter()
        .map(|id| core(mc_bridge_partial(&spec, p, pt, a.samples_per_stream, RngSpec::new(g.seed, id))))
        .collect::<Result<Vec<_>>>()?;
    let merged = partials.into_iter().fold(McPartial::default(), McPartial::merge);
    let mc = McEstimate::from_partial(merged, singular_inside(&spec, &pt));
    let det = core(bridge_ratio(&spec, p, pt, &quad(g, QuadConfig::kernel())))?;
    let combined = (mc.std_error.powi(2) + det.error_estimate.powi(2)).sqrt();
    let agree = agree_within(mc.estimate, mc.std_error, det.value, det.error_estimate, a.k);
    r.push(
        Entry::new("mc_estimate", mc.estimate, mc.std_error)
            .samples(mc.n_samples)
            .param("infinite_variance_warning", mc.infinite_variance_warning),
    );
    r.push(Entry::new("quadrature", det.value, det.error_estimate).converged(det.converged));
    let z = if combined > 0.0 { (mc.estimate - det.value) / combined } else { 0.0 };
    r.push(Entry::exact("z_score", z).pass(agree));
    let mut ok = agree;
    if let Some(n) = a.ks_samples {
        let dt = pt.t - pt.s;
        let cfg = QuadConfig::kernel();
        let mut xs = core(sample_ig_increments(p, dt, n, RngSpec::new(g.seed, a.streams)))?;
        let d = core(ks_statistic(&mut xs, |z| ig_cdf_numeric(p, dt, z, &cfg)))?;
        let crit = ks_critical_value(n, a.ks_alpha);
        r.push(Entry::new("ks_statistic", d, cfg.rel_tol).samples(n as u64).param("critical", crit).pass(d <= crit));
        ok &= d <= crit;
    }
    r.verdict(ok);
    Ok(())
}
