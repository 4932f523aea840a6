//! Spectral form factors of monitored, dephased and unitary dynamics, and
//! quenched/annealed ensemble averages.
//!
//! All variants are ratios `N / D` of sums of exponentials. Each is computed
//! with one shift for the numerator and the denominator together, so the
//! ratio is exact even when `N` and `D` individually overflow.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{derive_stream, sample_wiener_path, StreamKey, StreamRole, TimeGrid};
use crate::numeric::{cis_neg_product, sum_exp, tree_sum, tree_sum_2d, GaussHermite, Scaled};
use crate::spectrum::{sample_gue_spectrum, syk_spectrum, SpectrumRealization, SykParameters};
use crate::stats::Moments;
use crate::trajectory::{check_rates, check_time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SffVariant {
    Monitored,
    Efficiency,
    NoJump,
    Dephasing,
    Unitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SffMethod {
    /// `O(d²)` double sum.
    #[default]
    Direct,
    /// Hubbard–Stratonovich decoupling with adaptive Gauss–Hermite, `O(G d)`.
    Quadrature,
}

/// Gauss–Hermite orders tried, in order, before falling back to the direct sum.
pub const QUADRATURE_ORDERS: [usize; 5] = [32, 64, 128, 256, 512];
pub const QUADRATURE_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SffParams {
    pub variant: SffVariant,
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub method: SffMethod,
}

fn one() -> f64 {
    1.0
}

impl SffParams {
    pub fn new(variant: SffVariant, beta: f64, gamma: f64, eta: f64) -> Self {
        SffParams {
            variant,
            beta,
            gamma,
            eta,
            method: SffMethod::Direct,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::param("beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        check_rates(self.gamma, self.eta)
    }

    /// Whether the value depends on the noise `W_t`.
    pub fn is_stochastic(&self) -> bool {
        match self.variant {
            SffVariant::Monitored => self.gamma > 0.0,
            SffVariant::Efficiency => self.gamma > 0.0 && self.eta > 0.0,
            _ => false,
        }
    }
}

/// One evaluated SFF value with its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SffPoint {
    pub t: f64,
    pub value: f64,
    pub variant: SffVariant,
    pub gamma: f64,
    pub eta: f64,
    pub beta: f64,
    pub w: Option<f64>,
}

/// Numerator and denominator of an SFF variant under a common shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SffParts {
    pub numerator: Scaled,
    pub denominator: Scaled,
}

impl SffParts {
    pub fn value(&self) -> f64 {
        self.numerator.ratio(&self.denominator)
    }
}

/// Exponents `-βE_n`.
fn boltzmann(e: &[f64], beta: f64) -> Vec<f64> {
    e.iter().map(|x| -beta * x).collect()
}

/// `|Σ_n exp(a_n - shift) e^{-iE_n t}|²`.
fn coherent_sum_sq(e: &[f64], a: &[f64], shift: f64, t: f64) -> f64 {
    let z: Complex64 = tree_sum(0, e.len(), &|n| cis_neg_product(t, e[n]) * (a[n] - shift).exp());
    z.norm_sqr()
}

/// Parts of the monitored SFF
/// `|Σ e^{-(β+it-√(2γ)w)E - 2γtE²}|² / [Z(β) Z(β-√(8γ)w, γ)]`.
pub fn sff_monitored_parts(e: &[f64], beta: f64, gamma: f64, t: f64, w: f64) -> SffParts {
    let s = (2.0 * gamma).sqrt() * w;
    let b = boltzmann(e, beta);
    let c: Vec<f64> = e
        .iter()
        .map(|&x| -beta * x + 2.0 * s * x - 4.0 * gamma * t * x * x)
        .collect();
    let a: Vec<f64> = e
        .iter()
        .map(|&x| -beta * x + s * x - 2.0 * gamma * t * x * x)
        .collect();
    let zb = sum_exp(&b);
    let zc = sum_exp(&c);
    // 2a_n = b_n + c_n, so each numerator term is at most exp((S_b + S_c)/2)
    let half = 0.5 * (zb.shift + zc.shift);
    SffParts {
        numerator: Scaled {
            shift: 2.0 * half,
            mantissa: coherent_sum_sq(e, &a, half, t),
        },
        denominator: zb.mul(&zc),
    }
}

pub fn sff_monitored(e: &[f64], beta: f64, gamma: f64, t: f64, w: f64) -> f64 {
    sff_monitored_parts(e, beta, gamma, t, w).value()
}

/// The `W_t = 0` slice of the monitored SFF.
pub fn sff_nojump(e: &[f64], beta: f64, gamma: f64, t: f64) -> f64 {
    sff_monitored(e, beta, gamma, t, 0.0)
}

pub fn sff_unitary(e: &[f64], beta: f64, t: f64) -> f64 {
    let b = boltzmann(e, beta);
    let z = sum_exp(&b);
    coherent_sum_sq(e, &b, z.shift, t) / (z.mantissa * z.mantissa)
}

/// Log-weights `c_n` of the efficiency denominator
/// `Σ_n e^{-βE_n} K_t(E_n, E_n)`.
fn efficiency_diag(e: &[f64], beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> Vec<f64> {
    let s = 2.0 * (2.0 * gamma * eta).sqrt() * w;
    e.iter()
        .map(|&x| -beta * x - 4.0 * gamma * eta * t * x * x + s * x)
        .collect()
}

fn efficiency_direct(e: &[f64], beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> SffParts {
    let b = boltzmann(e, beta);
    let c = efficiency_diag(e, beta, gamma, eta, t, w);
    let zb = sum_exp(&b);
    let zc = sum_exp(&c);
    let shift = zb.shift + zc.shift;
    let damp = gamma * (1.0 - eta) * t;
    // B_n = b_n + c_n; the (n,m) term has log-magnitude (B_n+B_m)/2 - γ(1-η)tΔ²
    let big_b: Vec<f64> = b.iter().zip(&c).map(|(x, y)| x + y - shift).collect();
    let d = e.len();
    let num = tree_sum_2d(d, d, &|n, m| {
        let de = e[n] - e[m];
        (0.5 * (big_b[n] + big_b[m]) - damp * de * de).exp() * cis_neg_product(t, de).re
    });
    SffParts {
        numerator: Scaled {
            shift,
            mantissa: num,
        },
        denominator: zb.mul(&zc),
    }
}

/// `E_y |Σ_n exp(c_n + s y E_n - iE_n t)|²` for `y ~ N(0,1)`, with the
/// Gauss–Hermite rule of the given order, centred and scaled on the bulk of
/// the diagonal weight. Returns the value relative to `exp(shift)`.
fn hs_expectation(e: &[f64], c: &[f64], s: f64, t: f64, shift: f64, rule: &GaussHermite, center: f64, scale: f64) -> f64 {
    let phases: Vec<Complex64> = e.iter().map(|&x| cis_neg_product(t, x)).collect();
    let ln_norm = scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let terms: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.ln_weights)
        .map(|(&x, &lw)| {
            let y = center + scale * x;
            // ∫ f(y) φ(y) dy = scale ∫ f(center + scale x) φ(..) e^{x²} e^{-x²} dx
            let ln_jac = lw + x * x - 0.5 * y * y + ln_norm;
            let half = 0.5 * (shift - ln_jac);
            let z: Complex64 = tree_sum(0, e.len(), &|n| phases[n] * (c[n] + s * y * e[n] - half).exp());
            z.norm_sqr()
        })
        .collect();
    crate::numeric::pairwise_sum(&terms)
}

/// Result of a quadrature attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureReport {
    pub parts: SffParts,
    /// Order of the accepted rule, or `None` after falling back to the
    /// direct sum.
    pub order: Option<usize>,
}

fn efficiency_quadrature(e: &[f64], beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> QuadratureReport {
    let b = boltzmann(e, beta);
    let cd = efficiency_diag(e, beta, gamma, eta, t, w);
    let zb = sum_exp(&b);
    let zc = sum_exp(&cd);
    let shift = zb.shift + zc.shift;
    let denominator = zb.mul(&zc);
    let s = (2.0 * gamma * (1.0 - eta) * t).sqrt();
    let r = (2.0 * gamma * eta).sqrt() * w;
    let c: Vec<f64> = e
        .iter()
        .map(|&x| -beta * x - 2.0 * gamma * t * x * x + r * x)
        .collect();
    if s == 0.0 {
        let mantissa = coherent_sum_sq(e, &c, 0.5 * shift, t);
        return QuadratureReport {
            parts: SffParts {
                numerator: Scaled { shift, mantissa },
                denominator,
            },
            order: Some(0),
        };
    }
    // The diagonal term n contributes a Gaussian in y centred at 2sE_n with
    // weight exp(2c_n + 2s²E_n²); place the rule on their mixture.
    let lw: Vec<f64> = c.iter().zip(e).map(|(ci, x)| 2.0 * ci + 2.0 * s * s * x * x).collect();
    let mix = sum_exp(&lw);
    let wts: Vec<f64> = lw.iter().map(|l| (l - mix.shift).exp() / mix.mantissa).collect();
    let mean = tree_sum(0, e.len(), &|n| wts[n] * 2.0 * s * e[n]);
    let var = tree_sum(0, e.len(), &|n| {
        let dy = 2.0 * s * e[n] - mean;
        wts[n] * dy * dy
    });
    let scale = (1.0 + var).sqrt() * std::f64::consts::SQRT_2;
    let mut previous: Option<f64> = None;
    for &order in QUADRATURE_ORDERS.iter() {
        let value = hs_expectation(e, &c, s, t, shift, GaussHermite::cached(order), mean, scale);
        if let Some(prev) = previous {
            if (value - prev).abs() <= QUADRATURE_RTOL * value.abs().max(prev.abs()) {
                return QuadratureReport {
                    parts: SffParts {
                        numerator: Scaled {
                            shift,
                            mantissa: value,
                        },
                        denominator,
                    },
                    order: Some(order),
                };
            }
        }
        previous = Some(value);
    }
    log::warn!("Gauss–Hermite quadrature did not converge at order 512 (γ={gamma}, η={eta}, t={t}); using the direct sum");
    QuadratureReport {
        parts: efficiency_direct(e, beta, gamma, eta, t, w),
        order: None,
    }
}

/// Parts of the efficiency-generalized SFF
/// `Σ_nm e^{-βE_+} K_t(E_n,E_m) / [Z(β) Σ_n e^{-βE_n} K_t(E_n,E_n)]`.
pub fn sff_efficiency_parts(e: &[f64], beta: f64, gamma: f64, eta: f64, t: f64, w: f64, method: SffMethod) -> SffParts {
    match method {
        SffMethod::Direct => efficiency_direct(e, beta, gamma, eta, t, w),
        SffMethod::Quadrature => efficiency_quadrature(e, beta, gamma, eta, t, w).parts,
    }
}

pub fn sff_efficiency(e: &[f64], beta: f64, gamma: f64, eta: f64, t: f64, w: f64, method: SffMethod) -> f64 {
    sff_efficiency_parts(e, beta, gamma, eta, t, w, method).value()
}

/// Quadrature evaluation with the accepted order exposed.
pub fn sff_efficiency_quadrature_report(e: &[f64], beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> QuadratureReport {
    efficiency_quadrature(e, beta, gamma, eta, t, w)
}

/// `Σ_nm e^{-β(E_n+E_m) - i(E_n-E_m)t - γt(E_n-E_m)²} / Z(β)²`.
pub fn sff_dephasing_parts(e: &[f64], beta: f64, gamma: f64, t: f64, method: SffMethod) -> SffParts {
    // η = 0 drops every noise term of the efficiency kernel
    sff_efficiency_parts(e, beta, gamma, 0.0, t, 0.0, method)
}

pub fn sff_dephasing(e: &[f64], beta: f64, gamma: f64, t: f64, method: SffMethod) -> f64 {
    sff_dephasing_parts(e, beta, gamma, t, method).value()
}

/// Numerator/denominator of any variant at `(t, w)`.
pub fn sff_parts(e: &[f64], params: &SffParams, t: f64, w: f64) -> SffParts {
    let (beta, gamma, eta) = (params.beta, params.gamma, params.eta);
    match params.variant {
        SffVariant::Monitored => sff_monitored_parts(e, beta, gamma, t, w),
        SffVariant::NoJump => sff_monitored_parts(e, beta, gamma, t, 0.0),
        SffVariant::Efficiency => sff_efficiency_parts(e, beta, gamma, eta, t, w, params.method),
        SffVariant::Dephasing => sff_dephasing_parts(e, beta, gamma, t, params.method),
        SffVariant::Unitary => sff_monitored_parts(e, beta, 0.0, t, 0.0),
    }
}

pub fn evaluate(e: &[f64], params: &SffParams, t: f64, w: f64) -> f64 {
    match params.variant {
        SffVariant::Unitary => sff_unitary(e, params.beta, t),
        _ => sff_parts(e, params, t, w).value(),
    }
}

pub fn evaluate_point(e: &[f64], params: &SffParams, t: f64, w: f64) -> Result<SffPoint> {
    params.validate()?;
    check_time(t)?;
    Ok(SffPoint {
        t,
        value: evaluate(e, params, t, w),
        variant: params.variant,
        gamma: params.gamma,
        eta: params.eta,
        beta: params.beta,
        w: params.is_stochastic().then_some(w),
    })
}

/// Long-time average of the unitary SFF: `Σ_levels (Σ_{n∈level} e^{-βE_n})² / Z²`.
/// With `degeneracy_tol = 0` this is the plain diagonal `Σ e^{-2βE_n}/Z²`.
pub fn diagonal_value(e: &[f64], beta: f64, degeneracy_tol: f64) -> f64 {
    let b = boltzmann(e, beta);
    let z = sum_exp(&b);
    let mut total = 0.0;
    let mut level = 0.0;
    for (n, &x) in e.iter().enumerate() {
        if n > 0 && !(degeneracy_tol > 0.0 && (x - e[n - 1]).abs() <= degeneracy_tol) {
            total += level * level;
            level = 0.0;
        }
        level += (b[n] - z.shift).exp();
    }
    total += level * level;
    total / (z.mantissa * z.mantissa)
}

/// Where disorder realizations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleSource {
    Syk(SykParameters),
    Gue { dim: usize, width: f64 },
    /// Pre-computed spectra, cycled by disorder index.
    Fixed { spectra: Vec<SpectrumRealization> },
}

impl EnsembleSource {
    pub fn realization(&self, master_seed: u64, index: u64) -> Result<SpectrumRealization> {
        let mut stream = derive_stream(master_seed, StreamRole::Disorder, &[index]);
        let mut s = match self {
            EnsembleSource::Syk(p) => {
                let mut p = *p;
                p.seed = master_seed;
                syk_spectrum(&p, &mut stream)?
            }
            EnsembleSource::Gue { dim, width } => sample_gue_spectrum(*dim, *width, &mut stream)?,
            EnsembleSource::Fixed { spectra } => {
                if spectra.is_empty() {
                    return Err(Error::Validation("fixed ensemble has no spectra".into()));
                }
                return Ok(spectra[index as usize % spectra.len()].clone());
            }
        };
        s.disorder_seed = master_seed;
        s.disorder_index = index;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        match self {
            EnsembleSource::Syk(p) => p.matrix_dim(),
            EnsembleSource::Gue { dim, .. } => *dim,
            EnsembleSource::Fixed { spectra } => spectra.first().map_or(0, |s| s.dim()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    Quenched,
    AnnealedNoiseFixedH,
    AnnealedNoiseThenDisorder,
    AnnealedBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseAverage {
    /// Exact Gaussian noise moments.
    #[default]
    Analytic,
    /// Average over the sampled trajectories.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingSpec {
    pub n_disorder: u64,
    /// Trajectories per disorder realization.
    pub n_trajectories: u64,
    pub mode: AveragingMode,
    #[serde(default)]
    pub noise: NoiseAverage,
}

impl AveragingSpec {
    pub fn quenched(n_disorder: u64, n_trajectories: u64) -> Self {
        AveragingSpec {
            n_disorder,
            n_trajectories,
            mode: AveragingMode::Quenched,
            noise: NoiseAverage::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_disorder == 0 || self.n_trajectories == 0 {
            return Err(Error::Validation("ensemble is empty: n_disorder and n_trajectories must be >= 1".into()));
        }
        if self.mode == AveragingMode::AnnealedNoiseFixedH && self.n_disorder != 1 {
            return Err(Error::param(
                "n_disorder",
                "annealed_noise_fixed_h averages over noise for a single Hamiltonian; set n_disorder = 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SffProvenance {
    pub params: SffParams,
    pub averaging: AveragingSpec,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SffCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub provenance: Option<SffProvenance>,
}

impl SffCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Validation(format!(
                "curve has {} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        let stderr = vec![0.0; values.len()];
        Ok(SffCurve {
            grid,
            values,
            stderr,
            provenance: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Single-spectrum curve along one sampled trajectory.
pub fn trajectory_curve(e: &[f64], params: &SffParams, grid: &TimeGrid, w: &[f64]) -> Vec<f64> {
    grid.points()
        .iter()
        .zip(w)
        .map(|(&t, &wt)| evaluate(e, params, t, wt))
        .collect()
}

/// Trajectory stream key for disorder `i`, trajectory `j`.
pub fn trajectory_key(master_seed: u64, i: u64, j: u64) -> StreamKey {
    derive_stream(master_seed, StreamRole::Trajectory, &[i, j]).key().clone()
}

/// Per-disorder accumulation, merged in index order.
struct DisorderResult {
    /// quenched per-point moments over this disorder's trajectories
    values: Vec<Moments>,
    /// noise-averaged numerator and denominator per point
    numerator: Vec<Scaled>,
    denominator: Vec<Scaled>,
}

fn noise_values(params: &SffParams, grid: &TimeGrid, master_seed: u64, i: u64, j: u64) -> Vec<f64> {
    if params.is_stochastic() {
        let mut stream = derive_stream(master_seed, StreamRole::Trajectory, &[i, j]);
        sample_wiener_path(grid, &mut stream).values().to_vec()
    } else {
        vec![0.0; grid.len()]
    }
}

fn process_disorder(
    source: &EnsembleSource,
    params: &SffParams,
    grid: &TimeGrid,
    avg: &AveragingSpec,
    master_seed: u64,
    i: u64,
) -> Result<DisorderResult> {
    let spectrum = source.realization(master_seed, i)?;
    let e = spectrum.energies();
    let len = grid.len();
    let mut out = DisorderResult {
        values: vec![Moments::default(); len],
        numerator: vec![Scaled::zero(); len],
        denominator: vec![Scaled::zero(); len],
    };
    let annealed_analytic = avg.mode != AveragingMode::Quenched && avg.noise == NoiseAverage::Analytic;
    if annealed_analytic {
        // E[e^{λW_t}] = e^{λ²t/2} turns every noise-dependent numerator
        // into the dephasing one and every denominator into Z(β)². At γ = 0
        // the noise drops out, and the quenched evaluation is reused so the
        // two averages agree bit for bit.
        let dp = SffParams {
            variant: SffVariant::Dephasing,
            ..*params
        };
        for (k, &t) in grid.points().iter().enumerate() {
            let parts = match params.variant {
                SffVariant::Monitored | SffVariant::Efficiency | SffVariant::Dephasing if params.gamma > 0.0 => {
                    sff_parts(e, &dp, t, 0.0)
                }
                _ => sff_parts(e, params, t, 0.0),
            };
            out.numerator[k] = parts.numerator;
            out.denominator[k] = parts.denominator;
            out.values[k].push(match params.variant {
                SffVariant::Unitary => sff_unitary(e, params.beta, t),
                _ => parts.value(),
            });
        }
        return Ok(out);
    }
    for j in 0..avg.n_trajectories {
        let w = noise_values(params, grid, master_seed, i, j);
        for (k, &t) in grid.points().iter().enumerate() {
            let parts = sff_parts(e, params, t, w[k]);
            out.values[k].push(match params.variant {
                SffVariant::Unitary => sff_unitary(e, params.beta, t),
                _ => parts.value(),
            });
            out.numerator[k] = out.numerator[k].add(&parts.numerator);
            out.denominator[k] = out.denominator[k].add(&parts.denominator);
        }
    }
    Ok(out)
}

/// Ensemble-averaged SFF curve.
///
/// Each disorder realization is one work item; items run on `workers`
/// threads (all available when `None`) and are merged strictly in index
/// order, so the result does not depend on the thread count.
pub fn average_sff(
    source: &EnsembleSource,
    params: &SffParams,
    grid: &TimeGrid,
    avg: &AveragingSpec,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<SffCurve> {
    params.validate()?;
    avg.validate()?;
    let compute = || -> Result<Vec<DisorderResult>> {
        (0..avg.n_disorder)
            .into_par_iter()
            .map(|i| process_disorder(source, params, grid, avg, master_seed, i))
            .collect()
    };
    let items = match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?
            .install(compute)?,
        None => compute()?,
    };
    let len = grid.len();
    let mut values = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for k in 0..len {
        match avg.mode {
            AveragingMode::Quenched => {
                let mut m = Moments::default();
                items.iter().for_each(|it| m.merge(&it.values[k]));
                values[k] = m.mean;
                stderr[k] = m.std_error();
            }
            AveragingMode::AnnealedNoiseFixedH => {
                let it = &items[0];
                values[k] = it.numerator[k].ratio(&it.denominator[k]);
            }
            AveragingMode::AnnealedNoiseThenDisorder => {
                let mut m = Moments::default();
                items
                    .iter()
                    .for_each(|it| match avg.noise {
                        // the per-H annealed value was recorded directly
                        NoiseAverage::Analytic => m.push(it.values[k].mean),
                        NoiseAverage::Sampled => m.push(it.numerator[k].ratio(&it.denominator[k])),
                    });
                values[k] = m.mean;
                stderr[k] = m.std_error();
            }
            AveragingMode::AnnealedBoth => {
                let (mut num, mut den) = (Scaled::zero(), Scaled::zero());
                for it in &items {
                    num = num.add(&it.numerator[k]);
                    den = den.add(&it.denominator[k]);
                }
                values[k] = num.ratio(&den);
            }
        }
    }
    Ok(SffCurve {
        grid: grid.clone(),
        values,
        stderr,
        provenance: Some(SffProvenance {
            params: *params,
            averaging: *avg,
            master_seed,
        }),
    })
}

/// Pointwise `|annealed - quenched| / quenched`, optionally smoothed with a
/// centred moving average of `window` points.
pub fn annealed_relative_error(quenched: &SffCurve, annealed: &SffCurve, window: Option<usize>) -> Result<SffCurve> {
    if quenched.grid != annealed.grid {
        return Err(Error::Validation("curves must share one time grid".into()));
    }
    let raw: Vec<f64> = quenched
        .values
        .iter()
        .zip(&annealed.values)
        .map(|(q, a)| if a == q { 0.0 } else { (a - q).abs() / q.abs() })
        .collect();
    let curve = SffCurve::new(quenched.grid.clone(), raw)?;
    match window {
        Some(w) if w > 1 => crate::analysis::smooth_curve(&curve, w),
        _ => Ok(curve),
    }
}
