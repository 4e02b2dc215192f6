//! Special functions and a two-direction forward-mode dual number used to
//! differentiate the Kumaraswamy/Beta divergence with respect to its shapes.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Trigamma function ψ'(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NAN;
    }
    if x < 1e-6 {
        // ψ'(x) = 1/x² + π²/6 + O(x)
        return 1.0 / (x * x) + std::f64::consts::PI.powi(2) / 6.0;
    }
    let mut acc = 0.0;
    let mut z = x;
    while z < 12.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let r = 1.0 / z;
    let r2 = r * r;
    // asymptotic: 1/z + 1/(2z²) + Σ B_2k / z^(2k+1)
    let tail = r
        + 0.5 * r2
        + r * r2
            * (1.0 / 6.0
                - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * 5.0 / 66.0))));
    acc + tail
}

/// ln B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    // B(1, x) = 1/x exactly
    if a == 1.0 {
        return -b.ln();
    }
    if b == 1.0 {
        return -a.ln();
    }
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Value with partial derivatives along two independent directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub d: [f64; 2],
}

impl Dual2 {
    pub fn cst(v: f64) -> Self {
        Self { v, d: [0.0; 2] }
    }

    /// Independent variable along direction `dir`.
    pub fn var(v: f64, dir: usize) -> Self {
        let mut d = [0.0; 2];
        d[dir] = 1.0;
        Self { v, d }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        Self {
            v,
            d: [self.d[0] * dv, self.d[1] * dv],
        }
    }

    pub fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    pub fn recip(self) -> Self {
        self.chain(1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn powf(self, p: f64) -> Self {
        self.chain(self.v.powf(p), p * self.v.powf(p - 1.0))
    }

    /// `self^p` for a positive base and dual exponent.
    pub fn powd(self, p: Dual2) -> Self {
        (p * self.ln()).exp()
    }

    pub fn ln_gamma(self) -> Self {
        self.chain(ln_gamma(self.v), digamma(self.v))
    }

    pub fn digamma(self) -> Self {
        self.chain(digamma(self.v), trigamma(self.v))
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d.iter().all(|x| x.is_finite())
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
        }
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            v: self.v - o.v,
            d: [self.d[0] - o.d[0], self.d[1] - o.d[1]],
        }
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
            ],
        }
    }
}

impl Div for Dual2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            d: [-self.d[0], -self.d[1]],
        }
    }
}

impl Add<f64> for Dual2 {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Self { v: self.v + o, d: self.d }
    }
}

impl Sub<f64> for Dual2 {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Self { v: self.v - o, d: self.d }
    }
}

impl Mul<f64> for Dual2 {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Self {
            v: self.v * o,
            d: [self.d[0] * o, self.d[1] * o],
        }
    }
}

impl Div<f64> for Dual2 {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

// Bernoulli numbers B_2, B_4, ..., B_16.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Hurwitz zeta ζ(s, q) = Σ_{k≥0} (q + k)^{-s} for s > 1, q > 0, by
/// Euler–Maclaurin summation. Differentiable in `s`.
pub fn hurwitz_zeta(s: Dual2, q: f64) -> Dual2 {
    Dual2::cst(q).powd(-s) * hurwitz_zeta_scaled(s, q)
}

/// `q^s ζ(s, q)`, which stays representable when `q^{-s}` underflows.
pub fn hurwitz_zeta_scaled(s: Dual2, q: f64) -> Dual2 {
    debug_assert!(s.v > 1.0 && q > 0.0);
    // Push the expansion point far enough that the remainder terms,
    // which grow like (s)_{2j}/N^{2j}, are negligible.
    let shift = ((s.v + 12.0 - q).ceil()).max(0.0) as usize;
    let mut acc = Dual2::cst(0.0);
    for k in 0..shift {
        acc = acc + Dual2::cst((q + k as f64) / q).powd(-s);
    }
    let n = q + shift as f64;
    let n_pow = Dual2::cst(n / q).powd(-s);
    acc = acc + n_pow * n / (s - 1.0) + n_pow * 0.5;
    // Σ_j B_2j/(2j)! · s(s+1)…(s+2j−2) · n^{-s-2j+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut n_term = n_pow / n;
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = rising * n_term * (*b / fact);
        acc = acc + term;
        let jj = (2 * j + 2) as f64;
        rising = rising * (s + (jj - 1.0)) * (s + jj);
        fact *= (jj + 1.0) * (jj + 2.0);
        n_term = n_term / (n * n);
    }
    acc
}
