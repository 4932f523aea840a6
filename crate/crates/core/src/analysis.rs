//! Ramp features of SFF curves, large-N predictions for SYK, and parameter
//! sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::TimeGrid;
use crate::numeric::{sum_exp, tree_sum};
use crate::sff::{average_sff, sff_monitored_parts, AveragingSpec, EnsembleSource, SffCurve, SffParams};
use crate::spectrum::SpectrumRealization;

/// Centred moving average over `window` points in index space. Near the ends
/// the window is clipped to the available points.
pub fn smooth_values(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let lo = (window - 1) / 2;
    let hi = window / 2;
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(lo);
            let b = (i + hi + 1).min(n);
            tree_sum(a, b, &|k| values[k]) / (b - a) as f64
        })
        .collect()
}

pub fn smooth_curve(curve: &SffCurve, window: usize) -> Result<SffCurve> {
    if window == 0 || window > curve.len() {
        return Err(Error::param(
            "window",
            format!("must lie in 1..={}, got {window}", curve.len()),
        ));
    }
    if window == 1 {
        return Ok(curve.clone());
    }
    Ok(SffCurve {
        grid: curve.grid.clone(),
        values: smooth_values(&curve.values, window),
        stderr: smooth_values(&curve.stderr, window),
        provenance: curve.provenance.clone(),
    })
}

/// Index of the dip of an already smoothed series.
fn dip_index(values: &[f64]) -> Result<usize> {
    let start = values
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, &v)| v < 0.5)
        .map(|(k, _)| k)
        .ok_or_else(|| Error::FeatureNotFound("curve never decays below 0.5".into()))?;
    let tail = &values[start..];
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let k = start
        + tail
            .iter()
            .position(|&v| v <= min + 1e-12 * scale)
            .expect("minimum is attained");
    let left_ok = values[k - 1] >= values[k];
    let right_ok = k + 1 < values.len() && values[k + 1] >= values[k];
    if !(left_ok && right_ok) {
        return Err(Error::FeatureNotFound(format!(
            "no interior minimum (lowest point at index {k} of {})",
            values.len()
        )));
    }
    Ok(k)
}

/// `(t_dip, dip_value)` of the curve after smoothing with `window`.
pub fn extract_dip_time(curve: &SffCurve, window: usize) -> Result<(f64, f64)> {
    let s = smooth_curve(curve, window)?;
    let k = dip_index(&s.values)?;
    Ok((s.times()[k], s.values[k]))
}

/// First time at or after `after` where the curve stays within
/// `tol · plateau_value` of `plateau_value` for `sustain` consecutive points.
/// The curve is used as given (smooth it first if needed).
pub fn extract_plateau_time(curve: &SffCurve, plateau_value: f64, tol: f64, sustain: usize, after: f64) -> Result<f64> {
    if !(plateau_value > 0.0) {
        return Err(Error::param("plateau_value", format!("must be positive, got {plateau_value}")));
    }
    let sustain = sustain.max(1);
    let band = tol * plateau_value;
    let inside: Vec<bool> = curve
        .values
        .iter()
        .map(|v| (v - plateau_value).abs() <= band)
        .collect();
    let t = curve.times();
    let mut run = 0usize;
    for k in 0..inside.len() {
        if t[k] < after {
            continue;
        }
        run = if inside[k] { run + 1 } else { 0 };
        if run == sustain {
            return Ok(t[k + 1 - sustain]);
        }
    }
    Err(Error::FeatureNotFound(format!(
        "curve never stays within {tol} of plateau {plateau_value:e} for {sustain} points"
    )))
}

/// Mean of the raw curve over its final decade `t >= t_max / 10`.
pub fn final_decade_mean(curve: &SffCurve) -> f64 {
    let cut = curve.grid.last() / 10.0;
    let tail: Vec<f64> = curve
        .times()
        .iter()
        .zip(&curve.values)
        .filter(|(t, _)| **t >= cut)
        .map(|(_, v)| *v)
        .collect();
    crate::numeric::pairwise_sum(&tail) / tail.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PlateauReference {
    FinalDecade,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub window: usize,
    pub plateau: PlateauReference,
    pub tol: f64,
    pub sustain: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            window: 1,
            plateau: PlateauReference::FinalDecade,
            tol: 0.2,
            sustain: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampFeatures {
    pub t_dip: f64,
    pub dip_value: f64,
    pub t_plateau: f64,
    pub plateau_value: f64,
    pub ratio: f64,
    pub window: usize,
}

pub fn extract_features(curve: &SffCurve, opts: &FeatureOptions) -> Result<RampFeatures> {
    let smoothed = smooth_curve(curve, opts.window)?;
    let k = dip_index(&smoothed.values)?;
    let (t_dip, dip_value) = (smoothed.times()[k], smoothed.values[k]);
    let plateau_value = match opts.plateau {
        PlateauReference::FinalDecade => final_decade_mean(curve),
        PlateauReference::Value(v) => v,
    };
    let t_plateau = extract_plateau_time(&smoothed, plateau_value, opts.tol, opts.sustain, t_dip)?;
    Ok(RampFeatures {
        t_dip,
        dip_value,
        t_plateau,
        plateau_value,
        ratio: t_dip / t_plateau,
        window: opts.window,
    })
}

/// Large-N diagonal part `(2/d) e^{-Nβ²/8}`.
pub fn plateau_prediction(beta: f64, n_majorana: usize, dim: usize) -> f64 {
    2.0 / dim as f64 * (-(n_majorana as f64) * beta * beta / 8.0).exp()
}

/// Disorder-averaged `Σ e^{-xE_n}` (or its dephased version with the
/// `e^{-4γtE²}` filter) from the Gaussian DOS.
pub fn ensemble_partition_prediction(x: f64, gamma: f64, t: f64, n_majorana: usize, dim: usize, dephased: bool) -> f64 {
    let n = n_majorana as f64;
    let d = dim as f64;
    if dephased {
        let g = n * gamma * t;
        d / (1.0 + 2.0 * g).sqrt() * (n * x * x / (8.0 + 16.0 * g)).exp()
    } else {
        d * (n * x * x / 8.0).exp()
    }
}

/// Large-N disconnected part of the monitored SFF.
pub fn sff_disconnected_prediction(t: f64, w: f64, beta: f64, gamma: f64, n_majorana: usize) -> f64 {
    let n = n_majorana as f64;
    let g = gamma * n * t;
    let a = beta - (2.0 * gamma).sqrt() * w;
    // |exp[N z²/(8+8g)]|² with z = a + it
    let ln_num = 2.0 * n * (a * a - t * t) / (8.0 + 8.0 * g) - (1.0 + g).ln();
    let b = beta - (8.0 * gamma).sqrt() * w;
    let ln_den = -0.5 * (1.0 + 2.0 * g).ln() + n * beta * beta / 8.0 + n * b * b / (8.0 + 16.0 * g);
    (ln_num - ln_den).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectedPrediction {
    pub value: f64,
    /// False outside the strong-monitoring, late-time regime (`γ > 1` and
    /// `t > d/√N`) where the asymptotic form was derived.
    pub in_regime: bool,
}

/// Large-N connected (ramp) part of the monitored SFF.
pub fn sff_connected_prediction(t: f64, w: f64, beta: f64, gamma: f64, n_majorana: usize, dim: usize) -> ConnectedPrediction {
    let n = n_majorana as f64;
    let d = dim as f64;
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let exponent = ratio(beta * beta, 4.0 * t * gamma) - ratio(beta * w, (2.0 * t * gamma).sqrt())
        + ratio(w * w, 4.0 * n * gamma * t * t)
        - n * beta * beta / 8.0;
    let value = (n / (8.0 * std::f64::consts::PI)).sqrt() * t * exponent.exp() / (2.0 * d * d);
    ConnectedPrediction {
        value,
        in_regime: gamma > 1.0 && t > d / n.sqrt(),
    }
}

/// Principal branch of the Lambert W function, `W e^W = x`, for `x >= -1/e`.
pub fn lambert_w(x: f64) -> Result<f64> {
    let branch_point = -(-1.0f64).exp();
    if x.is_nan() || x < branch_point {
        return Err(Error::param("x", format!("Lambert W needs x >= -1/e, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.25 {
        // series around the branch point
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        (1.0 + x).ln() * 0.8
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-16 * w.abs().max(1e-300) {
            break;
        }
    }
    Ok(w)
}

/// Strong-monitoring dip time `6γ W((1/(6γ)) (8d²√(2π)/(n√γ))^{2/3})`, where
/// `n` is the Majorana count.
pub fn dip_time_lambert(gamma: f64, dim: usize, n: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
    }
    let d = dim as f64;
    let inner = (8.0 * d * d * (2.0 * std::f64::consts::PI).sqrt() / (n * gamma.sqrt())).powf(2.0 / 3.0);
    Ok(6.0 * gamma * lambert_w(inner / (6.0 * gamma))?)
}

/// Silverman's rule-of-thumb bandwidth for a Gaussian kernel.
pub fn silverman_bandwidth(energies: &[f64]) -> f64 {
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let sd = (energies.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let q = |p: f64| {
        let pos = p * (n - 1.0);
        let (i, f) = (pos.floor() as usize, pos.fract());
        let j = (i + 1).min(energies.len() - 1);
        energies[i] * (1.0 - f) + energies[j] * f
    };
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// One point of the diagonal / disconnected / connected split of the
/// monitored SFF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPoint {
    pub t: f64,
    pub full: f64,
    pub diag: f64,
    pub disc: f64,
    pub conn: f64,
    pub residual: f64,
}

/// Split `F = diag + disc + conn`. `diag` is the `n = m` part of the double
/// sum; `disc` replaces the spectrum by a Gaussian-kernel smoothed density
/// (bandwidth `h`) and factorizes; `conn` is what remains.
pub fn decompose_sff(spectrum: &SpectrumRealization, beta: f64, gamma: f64, t: f64, w: f64, bandwidth: Option<f64>) -> Result<DecompositionPoint> {
    let e = spectrum.energies();
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(e));
    if !(h > 0.0) {
        return Err(Error::param("bandwidth", format!("must be positive, got {h}")));
    }
    let parts = sff_monitored_parts(e, beta, gamma, t, w);
    let full = parts.value();
    let s = (2.0 * gamma).sqrt() * w;
    let shift = 0.5 * parts.denominator.shift;
    // |A_n|² = exp(2(-βE + sE - 2γtE²))
    let diag_terms: Vec<f64> = e
        .iter()
        .map(|&x| 2.0 * (-beta * x + s * x - 2.0 * gamma * t * x * x))
        .collect();
    let diag = sum_exp(&diag_terms).ratio(&parts.denominator);
    // ∫ N(E; E_k, h²) exp(-cE² + bE) dE with complex b
    let c = 2.0 * gamma * t;
    let b = num_complex::Complex64::new(-beta + s, -t);
    let q = 1.0 + 2.0 * c * h * h;
    let smeared: num_complex::Complex64 = tree_sum(0, e.len(), &|k| {
        let mu = e[k];
        ((b * mu - c * mu * mu + b * b * (h * h / 2.0)) / q - shift).exp()
    }) / q.sqrt();
    // the smeared sum carries exp(-shift), and 2·shift is the denominator's shift
    let disc = smeared.norm_sqr() / parts.denominator.mantissa;
    if !disc.is_finite() {
        // the smoothed density keeps weight where the monitoring filter has
        // already removed every level
        return Err(Error::Validation(format!(
            "disconnected part overflows at t = {t} (bandwidth {h:e}); use a smaller bandwidth or earlier times"
        )));
    }
    let conn = full - diag - disc;
    Ok(DecompositionPoint {
        t,
        full,
        diag,
        disc,
        conn,
        residual: full - (diag + disc + conn),
    })
}

/// Decomposition along a curve with noise values `w` on `grid`.
pub fn decompose_curve(spectrum: &SpectrumRealization, beta: f64, gamma: f64, grid: &TimeGrid, w: &[f64], bandwidth: Option<f64>) -> Result<Vec<DecompositionPoint>> {
    grid.points()
        .iter()
        .zip(w)
        .map(|(&t, &wt)| decompose_sff(spectrum, beta, gamma, t, wt, bandwidth))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Gamma,
    Eta,
}

/// Everything a sweep holds fixed.
#[derive(Debug, Clone)]
pub struct SweepProtocol {
    pub source: EnsembleSource,
    pub params: SffParams,
    pub grid: TimeGrid,
    pub averaging: AveragingSpec,
    pub features: FeatureOptions,
    pub master_seed: u64,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub curve: SffCurve,
    /// Extraction failure is kept per row so one value does not sink the table.
    pub features: std::result::Result<RampFeatures, String>,
}

pub fn sweep(parameter: SweepParameter, values: &[f64], protocol: &SweepProtocol) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let mut params = protocol.params;
            match parameter {
                SweepParameter::Gamma => params.gamma = v,
                SweepParameter::Eta => params.eta = v,
            }
            let curve = average_sff(
                &protocol.source,
                &params,
                &protocol.grid,
                &protocol.averaging,
                protocol.master_seed,
                protocol.workers,
            )?;
            let features = extract_features(&curve, &protocol.features).map_err(|e| e.to_string());
            Ok(SweepRow {
                value: v,
                curve,
                features,
            })
        })
        .collect()
}
