//! Shared test helpers: a double-double (~32 significant digits) brute-force
//! evaluator for the closed forms, and small random generators.

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const LN2: Dd = Dd {
        hi: 0.693_147_180_559_945_3,
        lo: 2.319_046_813_846_299_6e-17,
    };
    pub const FRAC_PI_2: Dd = Dd {
        hi: 1.570_796_326_794_896_6,
        lo: 6.123_233_995_736_766e-17,
    };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn mul_pow2(self, k: i32) -> Dd {
        let f = 2f64.powi(k);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn sqr(self) -> Dd {
        self * self
    }

    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / Dd::LN2.hi).round();
        let r = (self - Dd::LN2 * Dd::new(k)).mul_pow2(-10);
        // Taylor series of e^r - 1 on |r| < 4e-4
        let mut term = r;
        let mut sum = r;
        for n in 2..=14 {
            term = term * r / Dd::new(n as f64);
            sum = sum + term;
        }
        // (1 + s)^2 - 1 = s(2 + s), squared ten times
        for _ in 0..10 {
            sum = sum * (sum + Dd::new(2.0));
        }
        (sum + Dd::ONE).mul_pow2(k as i32)
    }

    pub fn ln(self) -> Dd {
        // Newton on exp: y <- y + x e^{-y} - 1
        let mut y = Dd::new(self.hi.ln());
        for _ in 0..3 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let y = Dd::new(self.hi.sqrt());
        y + (self - y * y) / (Dd::new(2.0) * y)
    }

    /// `(cos x, sin x)`.
    pub fn cos_sin(self) -> (Dd, Dd) {
        let k = (self.hi / Dd::FRAC_PI_2.hi).round();
        let r = self - Dd::FRAC_PI_2 * Dd::new(k);
        let r2 = r * r;
        let (mut c, mut s) = (Dd::ONE, r);
        let (mut tc, mut ts) = (Dd::ONE, r);
        for n in 1..=20 {
            let nf = n as f64;
            tc = -tc * r2 / Dd::new((2.0 * nf - 1.0) * (2.0 * nf));
            ts = -ts * r2 / Dd::new((2.0 * nf) * (2.0 * nf + 1.0));
            c = c + tc;
            s = s + ts;
        }
        match (k as i64).rem_euclid(4) {
            0 => (c, s),
            1 => (-s, c),
            2 => (-c, -s),
            _ => (s, -c),
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd::new(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

fn d(x: f64) -> Dd {
    Dd::new(x)
}

fn sum(xs: impl Iterator<Item = Dd>) -> Dd {
    xs.fold(Dd::ZERO, |a, b| a + b)
}

fn max(xs: &[Dd]) -> Dd {
    xs.iter().copied().fold(xs[0], |a, b| if b > a { b } else { a })
}

/// Brute-force closed forms, summed term by term in double-double.
pub struct Oracle<'a> {
    pub e: &'a [f64],
}

impl Oracle<'_> {
    /// `(Σ e^{f(E)} e^{-s}, s)` with `s` the largest exponent.
    fn z(&self, f: impl Fn(Dd) -> Dd) -> (Dd, Dd) {
        let xs: Vec<Dd> = self.e.iter().map(|&x| f(d(x))).collect();
        let s = max(&xs);
        (sum(xs.iter().map(|&x| (x - s).exp())), s)
    }

    /// `Σ_nm exp(a_n + a_m - damp Δ² - 2s) cos(Δ t)` with per-pair phases,
    /// and the shift `2s`.
    fn pair_sum(&self, a: &[Dd], damp: Dd, t: f64) -> (Dd, Dd) {
        let s = max(a);
        let mut acc = Dd::ZERO;
        for (n, &en) in self.e.iter().enumerate() {
            for (m, &em) in self.e.iter().enumerate() {
                let de = d(en) - d(em);
                let (c, _) = (de * d(t)).cos_sin();
                acc = acc + (a[n] + a[m] - s - s - damp * de * de).exp() * c;
            }
        }
        (acc, s + s)
    }

    fn ratio((num, sn): (Dd, Dd), (z1, s1): (Dd, Dd), (z2, s2): (Dd, Dd)) -> f64 {
        (num / (z1 * z2) * (sn - s1 - s2).exp()).to_f64()
    }

    pub fn unitary(&self, beta: f64, t: f64) -> f64 {
        let a: Vec<Dd> = self.e.iter().map(|&x| -d(beta) * d(x)).collect();
        let z = self.z(|x| -d(beta) * x);
        Self::ratio(self.pair_sum(&a, Dd::ZERO, t), z, z)
    }

    /// General kernel: η interpolates monitored (1) and dephasing (0).
    pub fn efficiency(&self, beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> f64 {
        let (b, g, h, tt, ww) = (d(beta), d(gamma), d(eta), d(t), d(w));
        let r = (d(2.0) * g * h).sqrt() * ww;
        let a: Vec<Dd> = self
            .e
            .iter()
            .map(|&x| {
                let x = d(x);
                -b * x - d(2.0) * g * h * tt * x * x + r * x
            })
            .collect();
        let damp = g * (Dd::ONE - h) * tt;
        let zb = self.z(|x| -b * x);
        let zc = self.z(|x| -b * x - d(4.0) * g * h * tt * x * x + d(2.0) * r * x);
        Self::ratio(self.pair_sum(&a, damp, t), zb, zc)
    }

    pub fn monitored(&self, beta: f64, gamma: f64, t: f64, w: f64) -> f64 {
        self.efficiency(beta, gamma, 1.0, t, w)
    }

    pub fn dephasing(&self, beta: f64, gamma: f64, t: f64) -> f64 {
        self.efficiency(beta, gamma, 0.0, t, 0.0)
    }

    /// Purity of the monitored state at `(t, W_t = w)`.
    pub fn purity(&self, beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> f64 {
        let (b, g, h, tt, ww) = (d(beta), d(gamma), d(eta), d(t), d(w));
        let r = d(2.0) * (d(2.0) * g * h).sqrt() * ww;
        let l: Vec<Dd> = self
            .e
            .iter()
            .map(|&x| {
                let x = d(x);
                -b * x - d(4.0) * g * h * tt * x * x + r * x
            })
            .collect();
        let damp = d(2.0) * g * (Dd::ONE - h) * tt;
        let s = max(&l);
        let mut num = Dd::ZERO;
        for n in 0..self.e.len() {
            for m in 0..self.e.len() {
                let de = d(self.e[n]) - d(self.e[m]);
                num = num + (l[n] + l[m] - s - s - damp * de * de).exp();
            }
        }
        let tr = sum(l.iter().map(|&x| (x - s).exp()));
        (num / (tr * tr)).to_f64()
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// SplitMix64 for test-side randomness independent of the library streams.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Sorted spectrum of `d` distinct Gaussian levels.
    pub fn spectrum(&mut self, d: usize, scale: f64) -> Vec<f64> {
        let mut e: Vec<f64> = (0..d).map(|_| scale * self.gaussian()).collect();
        e.sort_by(|a, b| a.total_cmp(b));
        e
    }
}

/// Small configs covering every experiment.
pub fn experiments() -> Vec<&'static str> {
    vec![
        r#"{"experiment": "sff-run", "spectrum": {"kind": "syk", "n_majorana": 8}, "gamma": 1.0,
            "grid": {"t_min": 0.1, "t_max": 1000, "points": 120},
            "averaging": {"n_disorder": 6, "n_trajectories": 2}, "features": {"window": 5}}"#,
        r#"{"experiment": "sweep-gamma", "spectrum": {"kind": "gue", "dim": 24}, "gammas": [0.01, 1.0],
            "grid": {"t_min": 0.1, "t_max": 1000, "points": 80}, "averaging": {"n_disorder": 4}}"#,
        r#"{"experiment": "sweep-eta", "spectrum": {"kind": "syk", "n_majorana": 8}, "gamma": 0.5,
            "etas": [0.0, 0.5, 1.0], "grid": {"t_min": 0.1, "t_max": 1000, "points": 60},
            "averaging": {"n_disorder": 3}}"#,
        r#"{"experiment": "observables", "spectrum": {"kind": "syk", "n_majorana": 8}, "gamma": 1.0,
            "grid": {"t_min": 0.01, "t_max": 100, "points": 40}, "averaging": {"n_trajectories": 3}}"#,
        r#"{"experiment": "purity", "spectrum": {"kind": "syk", "n_majorana": 8}, "gamma": 1.0, "eta": 0.5,
            "grid": {"t_min": 0.01, "t_max": 100, "points": 40},
            "averaging": {"n_disorder": 2, "n_trajectories": 3}}"#,
        r#"{"experiment": "annealed-diag", "spectrum": {"kind": "syk", "n_majorana": 8}, "gamma": 1.0,
            "grid": {"t_min": 0.1, "t_max": 1000, "points": 60}, "averaging": {"n_disorder": 4},
            "error_window": 5}"#,
        r#"{"experiment": "benchmark-sme", "spectrum": {"kind": "syk", "n_majorana": 8}, "gammas": [0.1, 1.0],
            "sde": {"t_max": 2.0, "guard": 0.05, "record_every": 20}}"#,
        r#"{"experiment": "collapse-stats", "spectrum": {"kind": "syk", "n_majorana": 6}, "gamma": 1.0,
            "grid": {"t_min": 0.001, "t_max": 1000, "points": 80}, "collapse": {"n_paths": 300}}"#,
        r#"{"experiment": "decompose", "spectrum": {"kind": "syk", "n_majorana": 8}, "gamma": 0.5,
            "grid": {"t_min": 0.1, "t_max": 100, "points": 50}}"#,
    ]
}
