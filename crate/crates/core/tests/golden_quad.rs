//! Closed-form integrals (powers, exponentials, Gaussians): each converged
//! result must lie within its own reported error estimate of the truth.

use std::f64::consts::PI;

use subschro_core::quad::{
    integrate_1d, integrate_real_line, integrate_semiinfinite, integrate_spacetime, integrate_with_knots, Knot,
    QuadResult,
};
use subschro_core::QuadConfig;

type Case = (String, QuadResult, f64);

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn cases() -> Vec<Case> {
    let cfg = QuadConfig::kernel();
    let mut out: Vec<Case> = Vec::new();
    let mut push = |name: String, r: QuadResult, exact: f64| out.push((name, r, exact));

    for k in 0..10 {
        let r = integrate_1d(|x| x.powi(k), 0.0, 1.0, &cfg).unwrap();
        push(format!("x^{k} on (0,1)"), r, 1.0 / f64::from(k + 1));
    }
    for b in [1.0f64, 2.0] {
        for p in [-0.75, -0.5, -0.25] {
            let c = cfg.with_singularities(p, 0.0);
            let r = integrate_1d(|x: f64| x.powf(p), 0.0, b, &c).unwrap();
            push(format!("x^{p} on (0,{b})"), r, b.powf(p + 1.0) / (p + 1.0));
        }
    }
    for a in [1.0f64, 2.0] {
        for p in [1.5, 2.0, 3.0, 4.0] {
            let r = integrate_semiinfinite(|x: f64| x.powf(-p), a, &cfg).unwrap();
            push(format!("x^-{p} on ({a},inf)"), r, a.powf(1.0 - p) / (p - 1.0));
        }
    }
    for k in [0.5, 1.0, 2.0, 5.0] {
        let r = integrate_semiinfinite(|x: f64| (-k * x).exp(), 0.0, &cfg).unwrap();
        push(format!("e^-{k}x on (0,inf)"), r, 1.0 / k);
    }
    for k in [-3.0f64, -1.0, 1.0, 3.0] {
        let r = integrate_1d(|x: f64| (k * x).exp(), 0.0, 1.0, &cfg).unwrap();
        push(format!("e^{k}x on (0,1)"), r, (k.exp() - 1.0) / k);
    }
    for sigma in [0.1f64, 0.5, 1.0, 3.0] {
        let r = integrate_real_line(|x: f64| (-x * x / (2.0 * sigma * sigma)).exp(), &[], &cfg).unwrap();
        push(format!("gaussian sigma {sigma}"), r, sigma * (2.0 * PI).sqrt());
    }
    for n in 1..=4 {
        let r = integrate_semiinfinite(|x: f64| x.powi(n as i32) * (-x).exp(), 0.0, &cfg).unwrap();
        push(format!("x^{n} e^-x on (0,inf)"), r, factorial(n));
    }
    let r = integrate_semiinfinite(|x: f64| (-x * x).exp(), 0.0, &cfg).unwrap();
    push("e^-x^2 on (0,inf)".into(), r, PI.sqrt() / 2.0);
    let r = integrate_real_line(|x: f64| x * x * (-x * x / 2.0).exp(), &[], &cfg).unwrap();
    push("x^2 gaussian".into(), r, (2.0 * PI).sqrt());
    let r = integrate_semiinfinite(|x: f64| x.powf(-0.5) * (-x).exp(), 0.0, &cfg.with_singularities(-0.5, 0.0)).unwrap();
    push("x^-1/2 e^-x".into(), r, PI.sqrt());
    let r = integrate_semiinfinite(|x: f64| x.sqrt() * (-x).exp(), 0.0, &cfg).unwrap();
    push("x^1/2 e^-x".into(), r, PI.sqrt() / 2.0);
    let r = integrate_with_knots(|x: f64| x.abs().powf(-0.5), -1.0, 1.0, &[Knot::singular(0.0, -0.5)], &cfg).unwrap();
    push("|x|^-1/2 on (-1,1)".into(), r, 4.0);
    let r = integrate_with_knots(|x: f64| x.abs(), -1.0, 2.0, &[Knot::plain(0.0)], &cfg).unwrap();
    push("|x| on (-1,2)".into(), r, 2.5);
    let r = integrate_1d(|x: f64| (1.0 - x).powf(-0.5), 0.0, 1.0, &cfg.with_singularities(0.0, -0.5)).unwrap();
    push("(1-x)^-1/2 on (0,1)".into(), r, 2.0);
    let r = integrate_1d(
        |x: f64| x.powf(-0.5) * (2.0 - x).powf(-0.5),
        0.0,
        2.0,
        &cfg.with_singularities(-0.5, -0.5),
    )
    .unwrap();
    push("x^-1/2 (2-x)^-1/2 on (0,2)".into(), r, PI);
    let r = integrate_semiinfinite(|x: f64| x * (-x * x).exp(), 0.0, &cfg).unwrap();
    push("x e^-x^2".into(), r, 0.5);
    let r = integrate_semiinfinite(|x: f64| x.powi(3) * (-x * x).exp(), 0.0, &cfg).unwrap();
    push("x^3 e^-x^2".into(), r, 0.5);
    out
}

#[test]
fn fifty_golden_cases_within_estimate() {
    let cases = cases();
    assert_eq!(cases.len(), 50);
    let mut bad = Vec::new();
    for (name, r, exact) in &cases {
        let err = (r.value - exact).abs();
        if !r.converged || !r.error_estimate.is_finite() || err > r.error_estimate {
            bad.push(format!("{name}: value {} exact {exact} err {err:e} est {:e}", r.value, r.error_estimate));
        }
    }
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}

#[test]
fn spacetime_examples() {
    let cfg = QuadConfig::kernel();
    let r = integrate_spacetime(|_, _| 1.0, 0.0, 1.0, 0.0, 1.0, &cfg).unwrap();
    assert!((r.value - 1.0).abs() <= r.error_estimate.max(1e-15));
    // u·z² over (0,2)×(1,3): 2 · 26/3.
    let r = integrate_spacetime(|u, z| u * z * z, 0.0, 2.0, 1.0, 3.0, &cfg).unwrap();
    assert!(r.converged);
    assert!((r.value - 52.0 / 3.0).abs() <= r.error_estimate.max(1e-13));
}

#[test]
fn results_are_bit_identical() {
    let a = cases();
    let b = cases();
    for ((n, ra, _), (_, rb, _)) in a.iter().zip(&b) {
        assert_eq!(ra.value.to_bits(), rb.value.to_bits(), "{n}");
        assert_eq!(ra.error_estimate.to_bits(), rb.error_estimate.to_bits(), "{n}");
        assert_eq!(ra.evaluations, rb.evaluations, "{n}");
    }
}
