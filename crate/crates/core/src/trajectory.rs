//! Monitored-state evolution in the energy eigenbasis.
//!
//! Because the monitored operator is `H` itself, every element `ρ_nm`
//! evolves independently. The closed form is
//!
//! ```text
//! ρ_nm(t) ∝ ρ_nm(0) exp[-i(E_n-E_m)t - γt(E_n-E_m)² - γηt(E_n+E_m)² + √(2γη)(E_n+E_m)W_t]
//! ```
//!
//! which is the trace-normalized solution of the linear SME driven by `W`.
//! Writing `L_n` for the log-weight of population `n`, the log-magnitude of
//! `ρ_nm` is `(L_n + L_m)/2 - γ(1-η)t(E_n-E_m)²`, so shifting every exponent
//! by `max_k L_k` keeps all terms in `(0, 1]`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{derive_stream, StreamRole, TimeGrid, WienerPath};
use crate::numeric::{cis_neg_product, max_of, sum_exp, tree_sum_2d, Scaled};
use crate::spectrum::SpectrumRealization;

/// Default value of `dt · max|E|² · max(1, γ)` above which integration is
/// refused.
pub const DEFAULT_STABILITY_GUARD: f64 = 0.1;

pub(crate) fn check_rates(gamma: f64, eta: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::param("gamma", format!("must be finite and >= 0, got {gamma}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param("eta", format!("must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::param("t", format!("must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `|ψ_β⟩ = Σ_n e^{-βE_n/2}/√Z(β) |n⟩`.
#[derive(Debug, Clone)]
pub struct CoherentGibbsState {
    beta: f64,
    energies: Arc<[f64]>,
    /// `ln p_n = -βE_n - ln Z(β)`
    ln_populations: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl CoherentGibbsState {
    pub fn new(spectrum: &SpectrumRealization, beta: f64) -> Result<Self> {
        Self::from_energies(spectrum.shared_energies(), beta)
    }

    pub fn from_energies(energies: Arc<[f64]>, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("must be finite and >= 0, got {beta}")));
        }
        if energies.is_empty() {
            return Err(Error::Validation("empty spectrum".into()));
        }
        let exps: Vec<f64> = energies.iter().map(|e| -beta * e).collect();
        let ln_z = sum_exp(&exps).ln();
        let ln_populations: Vec<f64> = exps.iter().map(|x| x - ln_z).collect();
        let amplitudes = ln_populations.iter().map(|l| (0.5 * l).exp()).collect();
        Ok(CoherentGibbsState {
            beta,
            energies,
            ln_populations,
            amplitudes,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn ln_populations(&self) -> &[f64] {
        &self.ln_populations
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c * c).collect()
    }

    /// `ln Z(β)`.
    pub fn ln_partition(&self) -> f64 {
        -self.beta * self.energies[0] - self.ln_populations[0]
    }

    fn initial_state(&self, gamma: f64, eta: f64) -> MonitoredState {
        let data = if eta == 1.0 {
            StateData::Pure(self.amplitudes.iter().map(|&c| Complex64::new(c, 0.0)).collect())
        } else {
            let d = self.dim();
            StateData::Dense(DMatrix::from_fn(d, d, |n, m| {
                Complex64::new(self.amplitudes[n] * self.amplitudes[m], 0.0)
            }))
        };
        MonitoredState {
            energies: self.energies.clone(),
            t: 0.0,
            gamma,
            eta,
            w: 0.0,
            data,
        }
    }
}

/// `Σ_n exp(-x E_n - 4γ t E_n²)` as a scaled value.
pub fn dephased_partition_function(energies: &[f64], x: f64, gamma: f64, t: f64) -> Scaled {
    let exps: Vec<f64> = energies
        .iter()
        .map(|&e| -x * e - 4.0 * gamma * t * e * e)
        .collect();
    sum_exp(&exps)
}

#[derive(Debug, Clone)]
pub enum StateData {
    /// `ρ = ψψ†`, used when `η = 1`.
    Pure(Vec<Complex64>),
    Dense(DMatrix<Complex64>),
}

/// Trajectory-conditioned state in the energy eigenbasis.
#[derive(Debug, Clone)]
pub struct MonitoredState {
    energies: Arc<[f64]>,
    pub t: f64,
    pub gamma: f64,
    pub eta: f64,
    pub w: f64,
    data: StateData,
}

impl MonitoredState {
    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn element(&self, n: usize, m: usize) -> Complex64 {
        match &self.data {
            StateData::Pure(psi) => psi[n] * psi[m].conj(),
            StateData::Dense(rho) => rho[(n, m)],
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        match &self.data {
            StateData::Pure(psi) => psi.iter().map(|z| z.norm_sqr()).collect(),
            StateData::Dense(rho) => (0..self.dim()).map(|n| rho[(n, n)].re).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        crate::numeric::pairwise_sum(&self.populations())
    }

    pub fn density_matrix(&self) -> DMatrix<Complex64> {
        match &self.data {
            StateData::Pure(psi) => DMatrix::from_fn(self.dim(), self.dim(), |n, m| psi[n] * psi[m].conj()),
            StateData::Dense(rho) => rho.clone(),
        }
    }

    pub fn purity(&self) -> f64 {
        match &self.data {
            StateData::Pure(psi) => {
                let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                norm * norm
            }
            StateData::Dense(rho) => {
                let d = self.dim();
                tree_sum_2d(d, d, &|n, m| rho[(n, m)].norm_sqr())
            }
        }
    }

    pub fn mean_energy(&self) -> f64 {
        moments(&self.energies, &self.populations()).0
    }

    pub fn energy_variance(&self) -> f64 {
        moments(&self.energies, &self.populations()).1
    }

    /// `⟨ψ|ρ|ψ⟩` for a real amplitude vector `ψ`.
    pub fn fidelity(&self, psi: &[f64]) -> f64 {
        match &self.data {
            StateData::Pure(phi) => {
                let overlap: Complex64 = psi.iter().zip(phi).map(|(c, z)| z * *c).sum();
                overlap.norm_sqr()
            }
            StateData::Dense(rho) => {
                let d = self.dim();
                tree_sum_2d(d, d, &|n, m| psi[n] * psi[m] * rho[(n, m)].re)
            }
        }
    }

    /// Smallest eigenvalue of `ρ`; intended for spot checks on small `d`.
    pub fn min_eigenvalue(&self) -> f64 {
        let rho = self.density_matrix();
        rho.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        crate::spectrum::max_hermiticity_defect(&self.density_matrix())
    }
}

/// Mean and clamped variance of `E` under populations `p` (assumed to sum
/// to one).
fn moments(energies: &[f64], p: &[f64]) -> (f64, f64) {
    let mean = crate::numeric::tree_sum(0, p.len(), &|n| p[n] * energies[n]);
    let var = crate::numeric::tree_sum(0, p.len(), &|n| {
        let x = energies[n] - mean;
        p[n] * x * x
    });
    (mean, clamp_variance(var))
}

fn clamp_variance(v: f64) -> f64 {
    if v < 0.0 {
        if v < -1e-10 {
            log::warn!("energy variance {v:e} clamped to zero");
        }
        0.0
    } else {
        v
    }
}

/// Unnormalized log-weights `L_n` of the populations at `(t, w)`.
fn population_log_weights(rho0: &CoherentGibbsState, gamma: f64, eta: f64, t: f64, w: f64) -> Vec<f64> {
    let a = 4.0 * gamma * eta * t;
    let b = 2.0 * (2.0 * gamma * eta).sqrt() * w;
    rho0.energies
        .iter()
        .zip(&rho0.ln_populations)
        .map(|(&e, &l)| l - a * e * e + b * e)
        .collect()
}

/// Diagonal of the closed-form state at `(t, w)`, `O(d)`.
pub fn closed_form_populations(rho0: &CoherentGibbsState, gamma: f64, eta: f64, t: f64, w: f64) -> Result<Vec<f64>> {
    check_rates(gamma, eta)?;
    check_time(t)?;
    let l = population_log_weights(rho0, gamma, eta, t, w);
    let norm = sum_exp(&l);
    Ok(l.iter().map(|x| ((x - norm.shift).exp()) / norm.mantissa).collect())
}

pub fn evolve_closed_form(rho0: &CoherentGibbsState, gamma: f64, eta: f64, t: f64, w: f64) -> Result<MonitoredState> {
    check_rates(gamma, eta)?;
    check_time(t)?;
    if !w.is_finite() {
        return Err(Error::param("w", "noise value must be finite"));
    }
    let e = rho0.energies();
    let l = population_log_weights(rho0, gamma, eta, t, w);
    let norm = sum_exp(&l);
    let data = if eta == 1.0 {
        // amplitudes: ψ_n = exp(L_n/2 - ln N/2) e^{-iE_n t}
        let half = 0.5 * norm.ln();
        StateData::Pure(
            e.iter()
                .zip(&l)
                .map(|(&en, &ln)| cis_neg_product(t, en) * (0.5 * ln - half).exp())
                .collect(),
        )
    } else {
        let d = e.len();
        let damp = gamma * (1.0 - eta) * t;
        let ln_norm = norm.ln();
        StateData::Dense(DMatrix::from_fn(d, d, |n, m| {
            let de = e[n] - e[m];
            let mag = (0.5 * (l[n] + l[m]) - damp * de * de - ln_norm).exp();
            cis_neg_product(t, de) * mag
        }))
    };
    Ok(MonitoredState {
        energies: rho0.energies.clone(),
        t,
        gamma,
        eta,
        w,
        data,
    })
}

pub fn mean_energy(rho0: &CoherentGibbsState, gamma: f64, eta: f64, t: f64, w: f64) -> Result<f64> {
    let p = closed_form_populations(rho0, gamma, eta, t, w)?;
    Ok(moments(rho0.energies(), &p).0)
}

pub fn energy_variance(rho0: &CoherentGibbsState, gamma: f64, eta: f64, t: f64, w: f64) -> Result<f64> {
    let p = closed_form_populations(rho0, gamma, eta, t, w)?;
    Ok(moments(rho0.energies(), &p).1)
}

/// Closed-form purity `Tr ρ²` at `(t, w)`, `O(d²)`.
pub fn purity(rho0: &CoherentGibbsState, gamma: f64, eta: f64, t: f64, w: f64) -> Result<f64> {
    check_rates(gamma, eta)?;
    check_time(t)?;
    let e = rho0.energies();
    let l = population_log_weights(rho0, gamma, eta, t, w);
    let shift = max_of(&l);
    let damp = 2.0 * gamma * (1.0 - eta) * t;
    let d = e.len();
    let num = tree_sum_2d(d, d, &|n, m| {
        let de = e[n] - e[m];
        (l[n] + l[m] - 2.0 * shift - damp * de * de).exp()
    });
    let den = crate::numeric::tree_sum(0, d, &|n| (l[n] - shift).exp());
    Ok(num / (den * den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmeForm {
    /// Normalized SME with the innovation `{H,ρ} - 2⟨H⟩ρ` driven by `dW`.
    Nonlinear,
    /// Linear SME driven by `dW`, renormalized by its trace after each step.
    LinearNormalized,
    /// Nonlinear SME driven by the innovation `dW - √(8γη)⟨H⟩dt` computed
    /// from the path read as a measurement record. Pathwise this tracks the
    /// closed form evaluated on the same path.
    NonlinearRecord,
}

/// Euler–Maruyama stepper for one trajectory. The Hamiltonian phase
/// `e^{-iE dt}` is diagonal and applied exactly; the measurement drift and
/// noise terms are first order.
#[derive(Debug, Clone)]
pub struct SmeIntegrator {
    state: MonitoredState,
    form: SmeForm,
    dt: f64,
}

/// Largest `dt` accepted by the stability guard.
pub fn max_stable_dt(energies: &[f64], gamma: f64, guard: f64) -> f64 {
    let emax = energies.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    guard / (emax * emax * gamma.max(1.0)).max(f64::MIN_POSITIVE)
}

impl SmeIntegrator {
    pub fn new(rho0: &CoherentGibbsState, gamma: f64, eta: f64, dt: f64, form: SmeForm, guard: f64) -> Result<Self> {
        check_rates(gamma, eta)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let required = max_stable_dt(rho0.energies(), gamma, guard);
        if dt > required * (1.0 + 1e-12) {
            return Err(Error::StepSize { dt, required });
        }
        Ok(SmeIntegrator {
            state: rho0.initial_state(gamma, eta),
            form,
            dt,
        })
    }

    pub fn state(&self) -> &MonitoredState {
        &self.state
    }

    pub fn into_state(self) -> MonitoredState {
        self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance by one step with noise increment `dw`.
    pub fn step(&mut self, dw: f64) {
        let (gamma, eta, dt) = (self.state.gamma, self.state.eta, self.dt);
        let s = &mut self.state;
        let mu = match self.form {
            SmeForm::LinearNormalized => 0.0,
            _ => s.mean_energy(),
        };
        let dw = match self.form {
            SmeForm::NonlinearRecord => dw - (8.0 * gamma * eta).sqrt() * mu * dt,
            _ => dw,
        };
        let e = s.energies.clone();
        match &mut s.data {
            StateData::Pure(psi) => {
                let k = (2.0 * gamma).sqrt() * dw;
                for (z, &en) in psi.iter_mut().zip(e.iter()) {
                    let x = en - mu;
                    *z *= cis_neg_product(dt, en) * (1.0 - gamma * x * x * dt + k * x);
                }
                let norm = crate::numeric::tree_sum(0, psi.len(), &|n| psi[n].norm_sqr()).sqrt();
                psi.iter_mut().for_each(|z| *z /= norm);
            }
            StateData::Dense(rho) => {
                let k = (2.0 * gamma * eta).sqrt() * dw;
                let d = e.len();
                for m in 0..d {
                    for n in 0..d {
                        let de = e[n] - e[m];
                        let gain = 1.0 - gamma * de * de * dt + k * (e[n] + e[m] - 2.0 * mu);
                        rho[(n, m)] *= cis_neg_product(dt, de) * gain;
                    }
                }
                if self.form == SmeForm::LinearNormalized {
                    let tr = crate::numeric::tree_sum(0, d, &|n| rho[(n, n)].re);
                    *rho /= Complex64::new(tr, 0.0);
                }
            }
        }
        s.t += dt;
        s.w += dw;
    }
}

/// Integrate along `path` (whose grid must be uniform and start at 0),
/// calling `observe(k, state)` at every grid point including `t = 0`.
pub fn integrate_sme_with<F>(
    rho0: &CoherentGibbsState,
    gamma: f64,
    eta: f64,
    path: &WienerPath,
    form: SmeForm,
    guard: f64,
    mut observe: F,
) -> Result<MonitoredState>
where
    F: FnMut(usize, &MonitoredState),
{
    let grid = path.grid();
    if grid.first() != 0.0 {
        return Err(Error::Validation("SME integration grid must start at t = 0".into()));
    }
    let dt = grid
        .uniform_dt()
        .ok_or_else(|| Error::Validation("SME integration needs a uniform grid".into()))?;
    let mut integrator = SmeIntegrator::new(rho0, gamma, eta, dt, form, guard)?;
    observe(0, integrator.state());
    let values = path.values();
    let points = grid.points();
    for k in 1..values.len() {
        integrator.step(values[k] - values[k - 1]);
        // keep t and W aligned with the grid rather than accumulated sums
        integrator.state.t = points[k];
        integrator.state.w = values[k];
        observe(k, integrator.state());
    }
    Ok(integrator.into_state())
}

/// All states along `path`; memory grows with `d` (or `d²`) per grid point,
/// so prefer [`integrate_sme_with`] for long runs.
pub fn integrate_sme(
    rho0: &CoherentGibbsState,
    gamma: f64,
    eta: f64,
    path: &WienerPath,
    form: SmeForm,
    guard: f64,
) -> Result<Vec<MonitoredState>> {
    let mut out = Vec::with_capacity(path.values().len());
    integrate_sme_with(rho0, gamma, eta, path, form, guard, |_, s| out.push(s.clone()))?;
    Ok(out)
}

/// Per-trajectory observables on a grid, from the closed form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub t: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub variance: Vec<f64>,
    pub purity: Vec<f64>,
    pub trajectory_id: u64,
}

pub fn observable_series(
    rho0: &CoherentGibbsState,
    gamma: f64,
    eta: f64,
    path: &WienerPath,
    with_purity: bool,
    trajectory_id: u64,
) -> Result<ObservableSeries> {
    let mut out = ObservableSeries {
        t: Vec::new(),
        mean_energy: Vec::new(),
        variance: Vec::new(),
        purity: Vec::new(),
        trajectory_id,
    };
    for (&t, &w) in path.grid().points().iter().zip(path.values()) {
        let p = closed_form_populations(rho0, gamma, eta, t, w)?;
        let (mu, var) = moments(rho0.energies(), &p);
        out.t.push(t);
        out.mean_energy.push(mu);
        out.variance.push(var);
        out.purity.push(if with_purity {
            purity(rho0, gamma, eta, t, w)?
        } else {
            f64::NAN
        });
    }
    Ok(out)
}

/// Outcome counts of monitored collapse onto energy eigenstates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapseStatistics {
    pub counts: Vec<u64>,
    pub n_paths: u64,
    /// Paths whose final energy variance stayed above the threshold.
    pub unconverged: u64,
}

impl CollapseStatistics {
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n_paths as f64).collect()
    }
}

/// Run `n_paths` efficient (`η = 1`) trajectories of the physical dynamics
/// over `grid` and record which eigenstate each one ends up in.
///
/// The state at time `t` is the closed form evaluated at the measurement
/// record `Y_t`, with `dY = dW + √(8γ)⟨H⟩ dt`. Only the record is stepped,
/// so populations stay positive and normalized on coarse (log) grids.
pub fn collapse_statistics(
    rho0: &CoherentGibbsState,
    gamma: f64,
    grid: &TimeGrid,
    n_paths: u64,
    master_seed: u64,
    variance_threshold: f64,
) -> Result<CollapseStatistics> {
    check_rates(gamma, 1.0)?;
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be >= 1"));
    }
    let drift = (8.0 * gamma).sqrt();
    let outcomes: Vec<(usize, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|j| -> Result<(usize, bool)> {
            let mut stream = derive_stream(master_seed, StreamRole::Collapse, &[j]);
            let (mut t, mut y) = (0.0, 0.0);
            let mut p = rho0.populations();
            for &tk in grid.points() {
                let dt = tk - t;
                if dt > 0.0 {
                    let mu = moments(rho0.energies(), &p).0;
                    y += dt.sqrt() * stream.gaussian() + drift * mu * dt;
                    t = tk;
                    p = closed_form_populations(rho0, gamma, 1.0, t, y)?;
                }
            }
            let var = moments(rho0.energies(), &p).1;
            let argmax = p
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (n, &v)| if v > acc.1 { (n, v) } else { acc })
                .0;
            Ok((argmax, var <= variance_threshold))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; rho0.dim()];
    let mut unconverged = 0;
    for (n, ok) in outcomes {
        counts[n] += 1;
        if !ok {
            unconverged += 1;
        }
    }
    Ok(CollapseStatistics {
        counts,
        n_paths,
        unconverged,
    })
}
