//! Float helpers over `libm`; `core` lacks the transcendental methods.

pub const PI: f64 = core::f64::consts::PI;
pub const SQRT_PI: f64 = 1.772_453_850_905_516;
/// ln(4π) / 2
pub const HALF_LN_4PI: f64 = 1.265_512_123_484_645_3;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn ln1p(x: f64) -> f64 {
    libm::log1p(x)
}
#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}
/// `erfc(a) − erfc(b)`.
#[inline]
pub fn erfc_diff(a: f64, b: f64) -> f64 {
    libm::erfc(a) - libm::erfc(b)
}
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}
#[inline]
pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `exp(x)`, flushed to zero instead of returning a subnormal.
#[inline]
pub fn exp_flush(x: f64) -> f64 {
    let v = libm::exp(x);
    if v < f64::MIN_POSITIVE {
        0.0
    } else {
        v
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if abs(self.sum) >= abs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
