//! Property tests for the invariants each module promises.

use proptest::prelude::*;

use subschro_core::fourg::{check_4g_pointwise, gaussian_4g_constant, little_l, scan_3g_ratio, subordinator_4g_constant};
use subschro_core::generators::{ig_generator, weyl_derivative, TestFunction};
use subschro_core::mc::{sample_bridge_marginal, sample_ig_increment, sample_ig_increments, mc_bridge_ratio, RngSpec};
use subschro_core::perturb::{perturbation_formula_residual, tilde_p, SeriesConfig, Side};
use subschro_core::potentials::{certify_from_lr, certify_from_n, kato_n, Certification, SearchGrid};
use subschro_core::quad::integrate_1d;
use subschro_core::specfun::tilted_incomplete_gamma;
use subschro_core::{DilatedKernel, KernelParams, PotentialSpec, QuadConfig, SpaceTimePoint};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn params() -> impl Strategy<Value = KernelParams> {
    (prop_oneof![Just(0.0), 0.01f64..4.0], 0.1f64..4.0).prop_map(|(l, d)| KernelParams::new(l, d).unwrap())
}

/// `(s, x, t, y)` with `t > s`, `y > x`.
fn forward_point() -> impl Strategy<Value = SpaceTimePoint> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.05f64..3.0, 0.05f64..3.0).prop_map(|(s, x, dt, dy)| SpaceTimePoint::new(s, x, s + dt, x + dy))
}

// specfun

proptest! {
    #[test]
    fn tilted_gamma_decreasing_in_z_and_lambda(l in 0.001f64..5.0, dl in 0.01f64..2.0, z in 0.01f64..10.0, dz in 0.01f64..5.0) {
        let v = tilted_incomplete_gamma(l, -0.5, z).unwrap();
        prop_assert!(tilted_incomplete_gamma(l, -0.5, z + dz).unwrap() < v);
        prop_assert!(tilted_incomplete_gamma(l + dl, -0.5, z).unwrap() < v);
    }
}

#[test]
fn tilted_gamma_lambda_limit_is_monotone() {
    for z in [0.1f64, 1.0, 10.0] {
        let errs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&l| (tilted_incomplete_gamma(l, -0.5, z).unwrap() - 2.0 / z.sqrt()).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "z {z}: {errs:?}");
    }
}

// kernels

proptest! {
    #[test]
    fn density_nonnegative_and_finite(p in params(), t in 1e-3f64..20.0, z in -1.0f64..50.0) {
        let v = p.density(t, z);
        prop_assert!(v.is_finite() && v >= 0.0);
        if z <= 0.0 {
            prop_assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn dilation_comparability_on_random_points() {
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(10_000));
    for (a, b) in [(1.0f64, 2.0f64), (0.5, 3.0)] {
        runner
            .run(&(params(), forward_point()), |(p, pt)| {
                let ka = DilatedKernel::new(p, a).unwrap();
                let kb = DilatedKernel::new(p, b).unwrap();
                let la = ka.log_eval(pt.s, pt.x, pt.t, pt.y);
                let lb = kb.log_eval(pt.s, pt.x, pt.t, pt.y);
                prop_assert!(lb <= 0.5 * (b / a).ln() + la + 1e-12, "{lb} vs {la}");
                Ok(())
            })
            .unwrap();
    }
}

// quad

proptest! {
    #[test]
    fn converged_flag_is_honest(k in -4.0f64..4.0, m in 0i32..8, w in 0.1f64..3.0, rel_tol in 1e-12f64..1e-4) {
        let cfg = QuadConfig { rel_tol, ..QuadConfig::kernel() };
        let r = integrate_1d(|x| x.powi(m) * (k * x).exp(), 0.0, w, &cfg).unwrap();
        if r.converged {
            prop_assert!(r.error_estimate <= f64::max(cfg.abs_tol, cfg.rel_tol * r.value.abs()));
        }
    }
}

// fourg

proptest! {
    #[test]
    fn gaussian_constant_closed_form(a in 0.1f64..10.0, frac in 1e-4f64..1.0, d in 1u32..=3) {
        let b = a * (1.0 + frac * (-0.5f64).exp());
        let want = (1.0 - a / b).powi(-(d as i32));
        let got = gaussian_4g_constant(a, b, d).unwrap();
        prop_assert!(rel(got, want) <= 1e-9, "{got} vs {want}");
    }

    #[test]
    fn three_g_ratio_increasing(p in params(), theta in 0.01f64..20.0, dt in 0.01f64..5.0) {
        prop_assume!((p.delta - 2.0 * p.lambda.sqrt()).abs() > 1e-3);
        let r0 = scan_3g_ratio(p, theta).unwrap();
        let r1 = scan_3g_ratio(p, theta + dt).unwrap();
        prop_assert!(r1 > r0);
    }
}

#[test]
fn four_g_holds_on_random_sextuples() {
    let cfg = ProptestConfig::with_cases(100_000);
    let strategy = (
        prop_oneof![Just((1.0, 2.0)), Just((2.0, 3.0)), Just((0.5, 3.0))],
        params(),
        proptest::array::uniform3(0.0f64..4.0),
        proptest::array::uniform3(-2.0f64..6.0),
    );
    proptest::test_runner::TestRunner::new(cfg)
        .run(&strategy, |((a, b), p, mut ts, mut xs)| {
            ts.sort_by(f64::total_cmp);
            xs.sort_by(f64::total_cmp);
            prop_assume!(ts[0] < ts[1] && ts[1] < ts[2] && xs[0] < xs[1] && xs[1] < xs[2]);
            let c = check_4g_pointwise(a, b, p, ts[0], ts[1], ts[2], xs[0], xs[1], xs[2]).unwrap();
            prop_assert!(c.holds, "ratio {}", c.ratio);
            Ok(())
        })
        .unwrap();
}

#[test]
fn little_l_is_lipschitz_on_grid() {
    // Envelope bound: |dl/dα| ≤ 1 + 1/α.
    let step = 0.01;
    let mut prev = little_l(0.1).unwrap().value;
    let mut alpha = 0.1;
    while alpha < 5.0 {
        let next = little_l(alpha + step).unwrap().value;
        assert!((next - prev).abs() <= (2.0 + 1.0 / alpha) * step, "α {alpha}: {prev} → {next}");
        prev = next;
        alpha += step;
    }
}

// potentials

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]
    #[test]
    fn kato_n_constant_closed_form(beta in 0.01f64..10.0, h in 0.01f64..2.0, c in 0.1f64..4.0, p in params()) {
        let n = kato_n(&PotentialSpec::constant(beta).unwrap(), p, c, h, &SearchGrid::default(), &QuadConfig::kernel()).unwrap();
        prop_assert!(rel(n.value, 2.0 * beta * h) <= 1e-9, "{} vs {}", n.value, 2.0 * beta * h);
    }

    #[test]
    fn certify_from_n_boundary(beta in 0.1f64..5.0, eta in 0.05f64..0.95, a in 0.5f64..3.0, gap in 0.2f64..3.0) {
        let b = a + gap;
        let dp = subordinator_4g_constant(a, b).unwrap().d_prime;
        let h_star = eta / (2.0 * beta * dp);
        let spec = PotentialSpec::constant(beta).unwrap();
        let run = |h: f64| {
            certify_from_n(&spec, KernelParams::STABLE_HALF, a, b, eta, h, &SearchGrid::default(), &QuadConfig::kernel()).unwrap()
        };
        prop_assert!(matches!(run(h_star * (1.0 - 1e-6)), Certification::Certified(_)));
        let above = matches!(run(h_star * (1.0 + 1e-6)), Certification::Rejected { .. });
        prop_assert!(above, "accepted above the boundary");
    }
}

proptest! {
    #[test]
    fn certificate_q_is_additive(norm in 0.0f64..10.0, r in 2.5f64..20.0, a in 0.5f64..3.0, gap in 0.2f64..3.0,
                                  eta in 0.0f64..0.99, s in -5.0f64..5.0, d1 in 0.0f64..3.0, d2 in 0.0f64..3.0) {
        let cert = certify_from_lr(norm, r, a, a + gap, eta).unwrap();
        prop_assert!(cert.eta >= 0.0);
        let (u, t) = (s + d1, s + d1 + d2);
        let lhs = cert.q(s, u) + cert.q(u, t);
        prop_assert!((lhs - cert.q(s, t)).abs() <= 1e-12 * (1.0 + cert.q(s, t).abs()));
    }
}

// perturb

fn small_point() -> impl Strategy<Value = SpaceTimePoint> {
    (0.1f64..1.5, 0.1f64..2.0).prop_map(|(dt, dy)| SpaceTimePoint::new(0.0, 0.0, dt, dy))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn partial_sums_nondecreasing_and_dominate_p(pt in small_point(), which in 0usize..3) {
        let spec = [
            PotentialSpec::constant(0.7).unwrap(),
            PotentialSpec::power_law(0.25).unwrap(),
            PotentialSpec::staircase(1.0).unwrap(),
        ][which]
            .clone();
        let cfg = SeriesConfig { n_max: 5, ..SeriesConfig::default() };
        let r = tilde_p(&spec, KernelParams::STABLE_HALF, pt, &cfg).unwrap();
        prop_assert!(r.terms.iter().all(|&v| v >= 0.0), "{:?}", r.terms);
        let mut acc = 0.0;
        for &v in &r.terms {
            let next = acc + v;
            prop_assert!(next >= acc);
            acc = next;
        }
        prop_assert!(r.partial_sum >= r.terms[0]);
    }

    #[test]
    fn constant_series_matches_exponential(beta in 0.1f64..2.0, pt in small_point(), p in params()) {
        prop_assume!(beta * (pt.t - pt.s) <= 2.0);
        let cfg = SeriesConfig { n_max: 12, ..SeriesConfig::default() };
        let r = tilde_p(&PotentialSpec::constant(beta).unwrap(), p, pt, &cfg).unwrap();
        let want = (beta * (pt.t - pt.s)).exp() * r.terms[0];
        prop_assert!(rel(r.partial_sum, want) <= 1e-5, "{} vs {want}", r.partial_sum);
    }

    #[test]
    fn constant_self_majorization(pt in small_point()) {
        let (beta, eta) = (0.5, 0.5);
        let spec = PotentialSpec::constant(beta).unwrap();
        let cfg = SeriesConfig::default();
        let r = tilde_p(&spec, KernelParams::STABLE_HALF, pt, &cfg).unwrap();
        // The mixed integral equals η(p̃ − p) up to the formula residual.
        let res = perturbation_formula_residual(&spec, KernelParams::STABLE_HALF, pt, &cfg, Side::Forward).unwrap();
        prop_assert!(res <= 1e-5, "residual {res}");
        let mixed = eta * (r.partial_sum - r.terms[0]) * (1.0 + res);
        prop_assert!(mixed <= eta * r.partial_sum);
    }
}

// generators

fn bump() -> impl Strategy<Value = TestFunction> {
    (-1.0f64..1.0, 0.2f64..1.5).prop_map(|(c, r)| TestFunction::bump(c, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn generators_are_linear(f in bump(), g in bump(), a in -3.0f64..3.0, b in -3.0f64..3.0, x in -2.0f64..2.0, p in params()) {
        let cfg = QuadConfig::kernel();
        let h = TestFunction::combine(a, &f, b, &g);
        let lin = |op: &dyn Fn(&TestFunction) -> f64| {
            let lhs = op(&h);
            let rhs = a * op(&f) + b * op(&g);
            (lhs - rhs).abs() <= 1e-10 * (1.0 + a.abs() * op(&f).abs() + b.abs() * op(&g).abs())
        };
        prop_assert!(lin(&|t| ig_generator(t, p, x, &cfg).unwrap().value));
        prop_assert!(lin(&|t| weyl_derivative(t, x, &cfg).unwrap().value));
    }

    #[test]
    fn generator_translation_equivariant(f in bump(), shift in -2.0f64..2.0, x in -2.0f64..2.0, p in params()) {
        let cfg = QuadConfig::kernel();
        let moved = ig_generator(&f.shifted(shift), p, x, &cfg).unwrap().value;
        let base = ig_generator(&f, p, x - shift, &cfg).unwrap().value;
        prop_assert!((moved - base).abs() <= 1e-8 * (1.0 + base.abs()), "{moved} vs {base}");
    }
}

#[test]
fn generator_lambda_continuity() {
    let cfg = QuadConfig::kernel();
    for (name, x) in [("bump", 0.0), ("bump-wide", -0.3), ("bump-skew", 0.2)] {
        let f = TestFunction::builtin(name).unwrap();
        let delta = 1.5;
        let target = delta * weyl_derivative(&f, x, &cfg).unwrap().value;
        let errs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&l| (ig_generator(&f, KernelParams::new(l, delta).unwrap(), x, &cfg).unwrap().value - target).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{name}: {errs:?}");
    }
}

// mc

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn mc_reproducible(seed in any::<u64>(), stream in 0u64..8) {
        let spec = RngSpec::new(seed, stream);
        let pt = SpaceTimePoint::new(0.0, 0.0, 1.0, 1.0);
        let q = PotentialSpec::power_law(0.25).unwrap();
        let a = mc_bridge_ratio(&q, KernelParams::STABLE_HALF, pt, 200, spec).unwrap();
        let b = mc_bridge_ratio(&q, KernelParams::STABLE_HALF, pt, 200, spec).unwrap();
        prop_assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        prop_assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        prop_assert_eq!(
            sample_ig_increments(KernelParams::STABLE_HALF, 1.0, 50, spec).unwrap(),
            sample_ig_increments(KernelParams::STABLE_HALF, 1.0, 50, spec).unwrap()
        );
    }

    #[test]
    fn ig_increments_positive(p in params(), t in 1e-3f64..10.0, seed in any::<u64>()) {
        let mut rng = RngSpec::new(seed, 0).rng();
        for _ in 0..100 {
            let v = sample_ig_increment(p, t, &mut rng);
            prop_assert!(v.is_finite() && v > 0.0);
        }
    }

    #[test]
    fn bridge_samples_inside(p in params(), pt in forward_point(), frac in 0.05f64..0.95, seed in any::<u64>()) {
        let u = pt.s + frac * (pt.t - pt.s);
        let mut rng = RngSpec::new(seed, 1).rng();
        for _ in 0..20 {
            let z = sample_bridge_marginal(p, pt, u, &mut rng).unwrap();
            prop_assert!(z > pt.x && z < pt.y, "{z} outside ({}, {})", pt.x, pt.y);
        }
    }
}

#[test]
fn ig_sample_mean_over_a_million_draws() {
    let (l, d, t) = (1.0f64, 2.0, 0.5);
    let p = KernelParams::new(l, d).unwrap();
    let n = 1_000_000;
    let xs = sample_ig_increments(p, t, n, RngSpec::new(42, 3)).unwrap();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // E ξ_t = δt/(2√λ).
    let want = d * t / (2.0 * l.sqrt());
    assert!((mean - want).abs() <= 4.0 * (var / n as f64).sqrt(), "{mean} vs {want}");
}
