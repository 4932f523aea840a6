//! Small numerical kernels shared by the physics modules: tree summation,
//! max-shifted exponential sums, accurate phases and Gauss–Hermite rules.

use std::f64::consts::PI;
use std::ops::Add;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;

const LEAF: usize = 16;

/// Pairwise (tree) sum of `f(i)` for `i in range`. The reduction tree depends
/// only on the range, so results are reproducible regardless of caller.
pub fn tree_sum<T, F>(start: usize, end: usize, f: &F) -> T
where
    T: Add<Output = T> + Copy + Default,
    F: Fn(usize) -> T,
{
    let len = end - start;
    if len <= LEAF {
        let mut acc = T::default();
        for i in start..end {
            acc = acc + f(i);
        }
        return acc;
    }
    let mid = start + len / 2;
    tree_sum(start, mid, f) + tree_sum(mid, end, f)
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    tree_sum(0, values.len(), &|i| values[i])
}

/// Pairwise sum over the index pairs of a `rows x cols` grid, row-major.
pub fn tree_sum_2d<T, F>(rows: usize, cols: usize, f: &F) -> T
where
    T: Add<Output = T> + Copy + Default,
    F: Fn(usize, usize) -> T,
{
    tree_sum(0, rows, &|n| tree_sum(0, cols, &|m| f(n, m)))
}

/// A positive quantity stored as `mantissa * exp(shift)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub shift: f64,
    pub mantissa: f64,
}

impl Scaled {
    pub fn zero() -> Self {
        Scaled {
            shift: f64::NEG_INFINITY,
            mantissa: 0.0,
        }
    }

    pub fn from_value(v: f64) -> Self {
        Scaled {
            shift: 0.0,
            mantissa: v,
        }
    }

    pub fn ln(&self) -> f64 {
        self.shift + self.mantissa.ln()
    }

    pub fn value(&self) -> f64 {
        if self.mantissa == 0.0 {
            return 0.0;
        }
        self.mantissa * self.shift.exp()
    }

    /// `self / other` as a plain number.
    pub fn ratio(&self, other: &Scaled) -> f64 {
        if self.mantissa == 0.0 {
            return 0.0;
        }
        self.mantissa / other.mantissa * (self.shift - other.shift).exp()
    }

    pub fn mul(&self, other: &Scaled) -> Scaled {
        Scaled {
            shift: self.shift + other.shift,
            mantissa: self.mantissa * other.mantissa,
        }
    }

    /// Sum of two scaled values, keeping the larger shift.
    pub fn add(&self, other: &Scaled) -> Scaled {
        if other.mantissa == 0.0 {
            return *self;
        }
        if self.mantissa == 0.0 {
            return *other;
        }
        if self.shift >= other.shift {
            Scaled {
                shift: self.shift,
                mantissa: self.mantissa + other.mantissa * (other.shift - self.shift).exp(),
            }
        } else {
            other.add(self)
        }
    }

    pub fn scale(&self, factor: f64) -> Scaled {
        Scaled {
            shift: self.shift,
            mantissa: self.mantissa * factor,
        }
    }
}

/// `Σ exp(x_i)` evaluated under the maximum exponent.
pub fn sum_exp(exponents: &[f64]) -> Scaled {
    let shift = max_of(exponents);
    if !shift.is_finite() {
        return Scaled::zero();
    }
    let mantissa = tree_sum(0, exponents.len(), &|i| (exponents[i] - shift).exp());
    Scaled { shift, mantissa }
}

pub fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn log_sum_exp(exponents: &[f64]) -> f64 {
    sum_exp(exponents).ln()
}

/// `exp(-i t e)` with the rounding error of the product `t*e` folded back in,
/// so phases stay accurate at late times.
#[inline]
pub fn cis_neg_product(t: f64, e: f64) -> Complex64 {
    let p = t * e;
    let err = t.mul_add(e, -p);
    let (s, c) = p.sin_cos();
    // exp(-i(p + err)) ~ (c - i s)(1 - i err)
    Complex64::new(c - err * s, -s - err * c)
}

/// Gauss–Hermite rule for `∫ exp(-x²) f(x) dx`, with log-weights so that
/// extreme nodes of high-order rules do not underflow.
#[derive(Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub ln_weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes from the eigenvalues of the Jacobi matrix, polished by Newton
    /// steps on the orthonormal recurrence, which also yields the weights.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss–Hermite order must be positive");
        let n = order;
        let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        nodes.sort_by(|a, b| b.total_cmp(a));
        let pim4 = PI.powf(-0.25);
        // p_n(z) and sqrt(2n) p_{n-1}(z) of the orthonormal recurrence
        let eval = |z: f64| {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            (p1, (2.0 * n as f64).sqrt() * p2)
        };
        let mut ln_weights = vec![0.0; n];
        for (z, lw) in nodes.iter_mut().zip(ln_weights.iter_mut()) {
            for _ in 0..3 {
                let (p, pp) = eval(*z);
                let step = p / pp;
                *z -= step;
                if step.abs() <= 1e-16 * z.abs().max(1.0) {
                    break;
                }
            }
            *lw = 2f64.ln() - 2.0 * eval(*z).1.abs().ln();
        }
        GaussHermite { nodes, ln_weights }
    }

    /// Cached rules for the power-of-two orders 32..=512.
    pub fn cached(order: usize) -> &'static GaussHermite {
        static RULES: [OnceLock<GaussHermite>; 5] = [
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
        ];
        let slot = match order {
            32 => 0,
            64 => 1,
            128 => 2,
            256 => 3,
            512 => 4,
            _ => panic!("no cached Gauss–Hermite rule of order {order}"),
        };
        RULES[slot].get_or_init(|| GaussHermite::new(order))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
