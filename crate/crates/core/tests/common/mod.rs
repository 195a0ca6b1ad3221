//! Double-exponential quadrature used as an oracle. It shares no code with the
//! library's Gauss–Kronrod engine.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn ts_sum(f: &mut dyn FnMut(f64, f64, f64) -> f64, a: f64, b: f64, h: f64, odd_only: bool) -> f64 {
    let len = b - a;
    let n = (4.5 / h).ceil() as i64;
    let mut acc = 0.0;
    for k in -n..=n {
        if odd_only && k % 2 == 0 {
            continue;
        }
        let t = k as f64 * h;
        let u = 2.0 * FRAC_PI_2 * t.sinh();
        let sl = logistic(u);
        let sr = logistic(-u);
        // Distance to the nearer endpoint is formed without cancellation.
        let x = if u < 0.0 { a + len * sl } else { b - len * sr };
        let w = len * sl * sr * 2.0 * FRAC_PI_2 * t.cosh();
        if w == 0.0 || !(len * sl > 0.0 && len * sr > 0.0) {
            continue;
        }
        acc += w * f(x, len * sl, len * sr);
    }
    acc * h
}

/// Tanh-sinh quadrature on `(a, b)`, tolerating integrable endpoint
/// singularities. Returns `(value, |difference of the last two levels|)`.
pub fn tanh_sinh(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    tanh_sinh_offsets(|x, _, _| f(x), a, b, rel_tol)
}

/// As [`tanh_sinh`], with `f(x, x − a, b − x)` so that the integrand can use
/// the endpoint distances, which are exact even where `x` rounds onto `a` or `b`.
pub fn tanh_sinh_offsets(mut f: impl FnMut(f64, f64, f64) -> f64, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    let mut h = 0.5;
    let mut v = ts_sum(&mut f, a, b, h, false);
    for _ in 0..8 {
        h *= 0.5;
        let nv = 0.5 * v + ts_sum(&mut f, a, b, h, true);
        let d = (nv - v).abs();
        v = nv;
        if d <= rel_tol * v.abs() || d < 1e-300 {
            return (v, d);
        }
    }
    (v, f64::NAN)
}

/// Tanh-sinh over consecutive pieces `pts[0] < pts[1] < …`.
pub fn tanh_sinh_pieces(mut f: impl FnMut(f64) -> f64, pts: &[f64], rel_tol: f64) -> f64 {
    pts.windows(2).map(|w| tanh_sinh(&mut f, w[0], w[1], rel_tol).0).sum()
}

fn es_sum(f: &mut dyn FnMut(f64) -> f64, a: f64, scale: f64, h: f64, odd_only: bool) -> f64 {
    let lo = (-5.0 / h).floor() as i64;
    let hi = (4.0 / h).ceil() as i64;
    let mut acc = 0.0;
    for k in lo..=hi {
        if odd_only && k % 2 == 0 {
            continue;
        }
        let t = k as f64 * h;
        let e = (FRAC_PI_2 * t.sinh()).exp();
        let w = scale * e * FRAC_PI_2 * t.cosh();
        let x = a + scale * e;
        let v = f(x);
        if v != 0.0 {
            acc += w * v;
        }
    }
    acc * h
}

/// Exp-sinh quadrature on `(a, ∞)`; `scale` should be near the integrand's
/// characteristic length.
pub fn exp_sinh(mut f: impl FnMut(f64) -> f64, a: f64, scale: f64, rel_tol: f64) -> (f64, f64) {
    let mut h = 0.5;
    let mut v = es_sum(&mut f, a, scale, h, false);
    for _ in 0..8 {
        h *= 0.5;
        let nv = 0.5 * v + es_sum(&mut f, a, scale, h, true);
        let d = (nv - v).abs();
        v = nv;
        if d <= rel_tol * v.abs() || d < 1e-300 {
            return (v, d);
        }
    }
    (v, f64::NAN)
}

/// Closed-form inverse Gaussian density written out independently of the
/// library: `(4π)^{−1/2} δ t z^{−3/2} exp{−(δt − 2√λ z)²/(4z)}`.
pub fn ig_pdf(lambda: f64, delta: f64, t: f64, z: f64) -> f64 {
    if z <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let a = delta * t - 2.0 * lambda.sqrt() * z;
    delta * t / (4.0 * std::f64::consts::PI).sqrt() * z.powf(-1.5) * (-a * a / (4.0 * z)).exp()
}

/// `ρ_c(s, x, t, y)` from [`ig_pdf`].
pub fn rho(lambda: f64, delta: f64, c: f64, s: f64, x: f64, t: f64, y: f64) -> f64 {
    if t <= s || y <= x {
        return 0.0;
    }
    c * ig_pdf(lambda, delta, c * (t - s), c * (y - x))
}

pub fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}
