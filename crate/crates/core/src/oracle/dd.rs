//! Double-double real and complex arithmetic (about 32 significant digits).
//!
//! Narrow resonances sit within 1e-20 of the real axis at moderate `h`, so the
//! transfer determinant cancels far below double precision near a root.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };
const FRAC_PI_2: Dd = Dd { hi: std::f64::consts::FRAC_PI_2, lo: 6.123233995736766e-17 };
const FRAC_1_SQRT_2: Dd = Dd { hi: std::f64::consts::FRAC_1_SQRT_2, lo: -4.833646656726457e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        Dd::renorm(p, e + self.lo * b)
    }

    /// Multiplication by `2^k`, exact.
    pub fn ldexp(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let r = self.hi.sqrt();
        let (p, e) = two_prod(r, r);
        let diff = (self - Dd { hi: p, lo: e }).to_f64();
        Dd::renorm(r, diff / (2.0 * r))
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f64(k)).ldexp(-10);
        // e^r - 1 by Taylor, |r| < 4e-4
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = (term * r) / Dd::new(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + s)^2 - 1 = s(2 + s), squared ten times
        for _ in 0..10 {
            sum = sum * (sum + Dd::new(2.0));
        }
        (sum + Dd::ONE).ldexp(k as i32)
    }

    pub fn sin_cos(self) -> (Self, Self) {
        let k = (self.hi / FRAC_PI_2.hi).round();
        let r = self - FRAC_PI_2.mul_f64(k);
        let r2 = r * r;
        let mut term = r;
        let mut sin = r;
        let mut n = 1.0;
        while n < 40.0 {
            term = -(term * r2) / Dd::new((n + 1.0) * (n + 2.0));
            sin = sin + term;
            n += 2.0;
            if term.hi.abs() < 1e-34 {
                break;
            }
        }
        let mut term = Dd::ONE;
        let mut cos = Dd::ONE;
        let mut n = 0.0;
        while n < 40.0 {
            term = -(term * r2) / Dd::new((n + 1.0) * (n + 2.0));
            cos = cos + term;
            n += 2.0;
            if term.hi.abs() < 1e-34 {
                break;
            }
        }
        match (k as i64).rem_euclid(4) {
            0 => (sin, cos),
            1 => (cos, -sin),
            2 => (-sin, -cos),
            _ => (-cos, sin),
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::renorm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        Dd::renorm(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        Dd::renorm(q1, q2) + Dd::new(q3)
    }
}

/// Complex number with double-double parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cdd {
    pub re: Dd,
    pub im: Dd,
}

impl Cdd {
    pub const ZERO: Cdd = Cdd { re: Dd::ZERO, im: Dd::ZERO };
    pub const ONE: Cdd = Cdd { re: Dd::ONE, im: Dd::ZERO };
    pub const I: Cdd = Cdd { re: Dd::ZERO, im: Dd::ONE };

    pub fn new(re: Dd, im: Dd) -> Self {
        Cdd { re, im }
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn conj(self) -> Self {
        Cdd { re: self.re, im: -self.im }
    }

    pub fn norm_sqr(self) -> Dd {
        self.re * self.re + self.im * self.im
    }

    pub fn norm(self) -> f64 {
        self.to_c64().norm()
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn scale(self, s: Dd) -> Self {
        Cdd { re: self.re * s, im: self.im * s }
    }

    /// Principal square root (`Re ≥ 0`, cut on the negative real axis).
    pub fn sqrt(self) -> Self {
        if self.re.hi == 0.0 && self.im.hi == 0.0 {
            return Cdd::ZERO;
        }
        let r = self.norm_sqr().sqrt();
        if self.re.hi >= 0.0 {
            let t = ((r + self.re).ldexp(-1)).sqrt();
            Cdd { re: t, im: self.im / t.ldexp(1) }
        } else {
            let t = ((r - self.re).ldexp(-1)).sqrt();
            let re = self.im.abs() / t.ldexp(1);
            Cdd { re, im: if self.im.hi < 0.0 { -t } else { t } }
        }
    }

    /// `√z` with the cut on the negative imaginary axis, `√x > 0` for `x > 0`
    /// and `√(-x) = i√x`.
    pub fn sqrt_cut_down(self) -> Self {
        let rotated = Cdd { re: self.im, im: -self.re }.sqrt();
        let e = Cdd { re: FRAC_1_SQRT_2, im: FRAC_1_SQRT_2 };
        rotated * e
    }

    pub fn exp(self) -> Self {
        let m = self.re.exp();
        let (s, c) = self.im.sin_cos();
        Cdd { re: m * c, im: m * s }
    }
}

impl From<Complex64> for Cdd {
    fn from(z: Complex64) -> Self {
        Cdd { re: Dd::new(z.re), im: Dd::new(z.im) }
    }
}

impl Neg for Cdd {
    type Output = Cdd;
    fn neg(self) -> Cdd {
        Cdd { re: -self.re, im: -self.im }
    }
}

impl Add for Cdd {
    type Output = Cdd;
    fn add(self, b: Cdd) -> Cdd {
        Cdd { re: self.re + b.re, im: self.im + b.im }
    }
}

impl Sub for Cdd {
    type Output = Cdd;
    fn sub(self, b: Cdd) -> Cdd {
        Cdd { re: self.re - b.re, im: self.im - b.im }
    }
}

impl Mul for Cdd {
    type Output = Cdd;
    fn mul(self, b: Cdd) -> Cdd {
        Cdd { re: self.re * b.re - self.im * b.im, im: self.re * b.im + self.im * b.re }
    }
}

impl Div for Cdd {
    type Output = Cdd;
    fn div(self, b: Cdd) -> Cdd {
        // scale by the larger component to keep |b|² in range
        let s = b.re.hi.abs().max(b.im.hi.abs());
        let (bs, ss) = if s > 0.0 && s.is_finite() {
            let k = -(s.log2().round() as i32);
            (Cdd { re: b.re.ldexp(k), im: b.im.ldexp(k) }, k)
        } else {
            (b, 0)
        };
        let d = bs.norm_sqr();
        let n = self * bs.conj();
        Cdd { re: (n.re / d).ldexp(ss), im: (n.im / d).ldexp(ss) }
    }
}
