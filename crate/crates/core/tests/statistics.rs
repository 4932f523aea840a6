//! Monte Carlo checks of the noise, trajectory and averaging laws.

mod common;

use common::{rel_err, TestRng};
use sffmon::noise::{derive_stream, refine_path, sample_wiener_path, StreamRole, TimeGrid, WienerPath};
use sffmon::sff::{
    average_sff, sff_dephasing, sff_efficiency_parts, AveragingMode, AveragingSpec, EnsembleSource, NoiseAverage,
    SffMethod, SffParams, SffVariant,
};
use sffmon::spectrum::{syk_spectrum, SpectrumRealization, SykParameters};
use sffmon::trajectory::{
    closed_form_populations, collapse_statistics, energy_variance, integrate_sme_with, mean_energy,
    CoherentGibbsState, SmeForm,
};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn wiener_endpoint_has_zero_mean_and_unit_variance() {
    let grid = TimeGrid::uniform(0.0, 1.0, 11).unwrap();
    let n = 100_000u64;
    let ends: Vec<f64> = (0..n)
        .map(|j| {
            let mut s = derive_stream(1, StreamRole::Trajectory, &[0, j]);
            *sample_wiener_path(&grid, &mut s).values().last().unwrap()
        })
        .collect();
    let (m, v) = mean_var(&ends);
    assert!(m.abs() < 4.0 / (n as f64).sqrt(), "mean {m}");
    assert!((v - 1.0).abs() < 0.05, "variance {v}");
}

#[test]
fn increments_are_uncorrelated() {
    let grid = TimeGrid::uniform(0.0, 100.0, 20_001).unwrap();
    let mut s = derive_stream(2, StreamRole::Trajectory, &[0, 0]);
    let inc = sample_wiener_path(&grid, &mut s).increments();
    let (m, v) = mean_var(&inc);
    for lag in 1..=5 {
        let n = inc.len() - lag;
        let c: f64 = (0..n).map(|k| (inc[k] - m) * (inc[k + lag] - m)).sum::<f64>() / (n as f64 * v);
        assert!(c.abs() < 4.0 / (n as f64).sqrt(), "lag {lag}: {c}");
    }
}

#[test]
fn bridge_midpoint_follows_the_bridge_law() {
    let coarse = TimeGrid::explicit(vec![0.0, 1.0]).unwrap();
    let w1 = 0.8;
    let path = WienerPath::from_values(coarse, vec![0.0, w1]).unwrap();
    let fine = TimeGrid::explicit(vec![0.0, 0.5, 1.0]).unwrap();
    let n = 100_000u64;
    let mids: Vec<f64> = (0..n)
        .map(|j| {
            let mut s = derive_stream(3, StreamRole::Bridge, &[j]);
            let r = refine_path(&path, &fine, &mut s).unwrap();
            assert_eq!(r.values()[2], w1);
            r.values()[1]
        })
        .collect();
    let (m, v) = mean_var(&mids);
    assert!((m - w1 / 2.0).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "mean {m}");
    assert!((v - 0.25).abs() < 0.05 * 0.25, "variance {v}");
}

#[test]
fn one_coarse_step_matches_many_fine_steps_in_law() {
    // W(1) from one increment and from 1000 increments: two-sample KS
    let one = TimeGrid::explicit(vec![0.0, 1.0]).unwrap();
    let many = TimeGrid::uniform(0.0, 1.0, 1001).unwrap();
    let n = 10_000u64;
    let draw = |grid: &TimeGrid, role: u16| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|j| {
                let mut s = derive_stream(4, StreamRole::Custom(role), &[j]);
                *sample_wiener_path(grid, &mut s).values().last().unwrap()
            })
            .collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    };
    let (a, b) = (draw(&one, 1), draw(&many, 2));
    let (mut i, mut j, mut dmax) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        dmax = dmax.max((i as f64 - j as f64).abs() / n as f64);
    }
    // critical value at p = 0.01 for two equal samples
    assert!(dmax < 1.628 * (2.0 / n as f64).sqrt(), "KS distance {dmax}");
}

/// One step of the physical dynamics from `t = 0`: the record increment
/// carries the drift `√(8γ)⟨H⟩dt`.
fn record_step(rho0: &CoherentGibbsState, gamma: f64, dt: f64, g: f64) -> f64 {
    let mu0 = mean_energy(rho0, gamma, 1.0, 0.0, 0.0).unwrap();
    dt.sqrt() * g + (8.0 * gamma).sqrt() * mu0 * dt
}

#[test]
fn mean_energy_is_a_martingale_of_the_physical_record() {
    let mut rng = TestRng(5);
    let e = rng.spectrum(8, 1.0);
    let beta = 0.7;
    let rho0 = CoherentGibbsState::from_energies(e.into(), beta).unwrap();
    let mu0 = mean_energy(&rho0, 1.0, 1.0, 0.0, 0.0).unwrap();
    let gamma: f64 = 0.5;
    let grid = TimeGrid::uniform(0.0, 2.0, 401).unwrap();
    let n = 10_000u64;
    let finals: Vec<f64> = (0..n)
        .map(|j| {
            let mut s = derive_stream(6, StreamRole::Trajectory, &[0, j]);
            let mut y = 0.0;
            let mut mu = mu0;
            for w in grid.points().windows(2) {
                let dt = w[1] - w[0];
                y += dt.sqrt() * s.gaussian() + (8.0 * gamma).sqrt() * mu * dt;
                mu = mean_energy(&rho0, gamma, 1.0, w[1], y).unwrap();
            }
            mu
        })
        .collect();
    let (m, v) = mean_var(&finals);
    let se = (v / n as f64).sqrt();
    // the discretized drift adds an O(dt) bias far below the statistical error
    assert!((m - mu0).abs() < 4.0 * se, "E[μ_T] = {m} vs μ_0 = {mu0} (se {se})");
}

#[test]
fn energy_moments_follow_their_stochastic_equations() {
    // symmetric spectrum at β = 0: the third cumulant vanishes at t = 0
    let e = vec![-1.6, -1.1, -0.7, -0.3, 0.3, 0.7, 1.1, 1.6];
    let rho0 = CoherentGibbsState::from_energies(e.into(), 0.0).unwrap();
    let (gamma, dt): (f64, f64) = (1.0, 1e-3);
    let v0 = energy_variance(&rho0, gamma, 1.0, 0.0, 0.0).unwrap();
    let mu0 = mean_energy(&rho0, gamma, 1.0, 0.0, 0.0).unwrap();
    let n = 10_000u64;
    let mut dmu = Vec::new();
    let mut dv = Vec::new();
    for j in 0..n {
        let mut s = derive_stream(7, StreamRole::Trajectory, &[0, j]);
        let y = record_step(&rho0, gamma, dt, s.gaussian());
        dmu.push(mean_energy(&rho0, gamma, 1.0, dt, y).unwrap() - mu0);
        dv.push(energy_variance(&rho0, gamma, 1.0, dt, y).unwrap() - v0);
    }
    let (m_mu, v_mu) = mean_var(&dmu);
    let (m_v, _) = mean_var(&dv);
    let drift = 8.0 * gamma * v0 * v0 * dt;
    assert!(m_mu.abs() < 4.0 * (v_mu / n as f64).sqrt(), "E[Δμ] = {m_mu}");
    assert!(rel_err(v_mu, drift) < 0.1, "Var[Δμ] = {v_mu} vs {drift}");
    assert!(rel_err(-m_v, drift) < 0.1, "E[ΔV] = {m_v} vs {}", -drift);
}

#[test]
fn variance_is_frozen_without_monitoring_and_collapses_with_it() {
    let e = vec![-1.5, -1.0, -0.6, -0.1, 0.3, 0.8, 1.2, 1.9];
    let rho0 = CoherentGibbsState::from_energies(e.into(), 0.3).unwrap();
    let v0 = energy_variance(&rho0, 0.0, 1.0, 0.0, 0.0).unwrap();
    for &t in &[0.5, 10.0, 1e3] {
        let v = energy_variance(&rho0, 0.0, 1.0, t, 0.0).unwrap();
        assert!((v - v0).abs() <= 1e-12 * v0);
    }
    let gamma: f64 = 1.0;
    let grid = TimeGrid::log(1e-3, 500.0, 400).unwrap();
    for j in 0..200u64 {
        let mut s = derive_stream(9, StreamRole::Trajectory, &[0, j]);
        let (mut t, mut y) = (0.0, 0.0);
        for &tk in grid.points() {
            let mu = mean_energy(&rho0, gamma, 1.0, t, y).unwrap();
            y += (tk - t).sqrt() * s.gaussian() + (8.0 * gamma).sqrt() * mu * (tk - t);
            t = tk;
        }
        let v = energy_variance(&rho0, gamma, 1.0, t, y).unwrap();
        assert!(v <= 1e-6 * v0, "trajectory {j}: V = {v}");
    }
}

/// Multinomial 4σ band for each outcome frequency.
fn assert_born(freq: &[f64], p: &[f64], n: f64) {
    for (f, q) in freq.iter().zip(p) {
        let sigma = (q * (1.0 - q) / n).sqrt();
        assert!((f - q).abs() <= 4.0 * sigma + 1e-12, "frequency {f} vs Born weight {q}");
    }
}

#[test]
fn collapse_frequencies_follow_born_weights() {
    let grid = TimeGrid::log(1e-3, 1e3, 120).unwrap();
    let e = vec![-1.5, -1.0, -0.6, -0.1, 0.3, 0.8, 1.2, 1.9];
    for beta in [0.0, 0.8] {
        let rho0 = CoherentGibbsState::from_energies(e.clone().into(), beta).unwrap();
        let stats = collapse_statistics(&rho0, 1.0, &grid, 10_000, 11, 1e-6).unwrap();
        assert_eq!(stats.unconverged, 0);
        assert_born(&stats.frequencies(), &rho0.populations(), 1e4);
    }
    let two = CoherentGibbsState::from_energies(vec![-1.0, 1.0].into(), 0.0).unwrap();
    let stats = collapse_statistics(&two, 1.0, &grid, 10_000, 12, 1e-6).unwrap();
    assert_born(&stats.frequencies(), &[0.5, 0.5], 1e4);

    let cold = CoherentGibbsState::from_energies(e.clone().into(), 60.0 / (e[7] - e[0])).unwrap();
    let stats = collapse_statistics(&cold, 1.0, &grid, 1000, 13, 1e-6).unwrap();
    assert_eq!(stats.counts[0], 1000);
}

/// Largest L1 distance between SME and closed-form populations along the path.
fn sup_population_error(rho0: &CoherentGibbsState, gamma: f64, path: &WienerPath, form: SmeForm) -> f64 {
    let mut worst = 0.0f64;
    integrate_sme_with(rho0, gamma, 1.0, path, form, 1.0, |_, s| {
        let exact = closed_form_populations(rho0, gamma, 1.0, s.t, s.w).unwrap();
        let err: f64 = s.populations().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
        worst = worst.max(err);
    })
    .unwrap();
    worst
}

/// Every `stride`-th point of a uniform path.
fn subsample(path: &WienerPath, stride: usize) -> WienerPath {
    let t: Vec<f64> = path.grid().points().iter().step_by(stride).copied().collect();
    let w: Vec<f64> = path.values().iter().step_by(stride).copied().collect();
    let n = t.len();
    WienerPath::from_values(TimeGrid::uniform(0.0, t[n - 1], n).unwrap(), w).unwrap()
}

#[test]
fn sme_converges_to_closed_form_with_strong_order_one_half() {
    let mut rng = TestRng(20);
    let e = rng.spectrum(8, 0.8);
    let rho0 = CoherentGibbsState::from_energies(e.into(), 0.0).unwrap();
    let (gamma, t_max) = (0.3, 2.0);
    let strides = [64usize, 32, 16, 8, 4, 2, 1];
    let finest = TimeGrid::uniform(0.0, t_max, 64 * 64 + 1).unwrap();
    let mut errors = vec![0.0; strides.len()];
    let paths = 16;
    for j in 0..paths {
        let mut s = derive_stream(21, StreamRole::Trajectory, &[0, j]);
        let fine = sample_wiener_path(&finest, &mut s);
        for (k, &stride) in strides.iter().enumerate() {
            let p = subsample(&fine, stride);
            errors[k] += sup_population_error(&rho0, gamma, &p, SmeForm::NonlinearRecord) / paths as f64;
        }
    }
    let dts: Vec<f64> = strides.iter().map(|s| t_max * *s as f64 / 4096.0).collect();
    let slope = loglog_slope(&dts, &errors);
    assert!((0.4..=0.8).contains(&slope), "order {slope}, errors {errors:?}");
}

#[test]
fn weak_monitoring_forms_agree_better_on_finer_steps() {
    let mut rng = TestRng(22);
    let e = rng.spectrum(16, 1.0);
    let rho0 = CoherentGibbsState::from_energies(e.into(), 0.0).unwrap();
    let (gamma, t_max) = (0.01, 10.0);
    let finest = TimeGrid::uniform(0.0, t_max, 16 * 400 + 1).unwrap();
    let mut s = derive_stream(23, StreamRole::Trajectory, &[0, 0]);
    let fine = sample_wiener_path(&finest, &mut s);
    let gap = |p: &WienerPath| {
        let mut a = Vec::new();
        integrate_sme_with(&rho0, gamma, 1.0, p, SmeForm::LinearNormalized, 1.0, |_, s| a.push(s.populations())).unwrap();
        let mut worst = 0.0f64;
        integrate_sme_with(&rho0, gamma, 1.0, p, SmeForm::NonlinearRecord, 1.0, |k, s| {
            let d: f64 = s.populations().iter().zip(&a[k]).map(|(x, y)| (x - y).abs()).sum();
            worst = worst.max(d);
        })
        .unwrap();
        worst
    };
    let coarse = gap(&subsample(&fine, 16));
    let finer = gap(&subsample(&fine, 4));
    assert!(coarse > 0.0 && coarse < 0.1, "coarse discrepancy {coarse}");
    assert!(finer < coarse, "{finer} !< {coarse}");
}

#[test]
fn sampled_noise_average_matches_dephasing_within_monte_carlo_error() {
    let mut rng = TestRng(24);
    let e = rng.spectrum(8, 0.8);
    let (beta, gamma, t) = (0.2, 0.5, 1.5);
    let spectrum = SpectrumRealization::from_unsorted(e.clone()).unwrap();
    let source = EnsembleSource::Fixed { spectra: vec![spectrum] };
    let grid = TimeGrid::explicit(vec![0.5, t]).unwrap();
    let params = SffParams::new(SffVariant::Monitored, beta, gamma, 1.0);
    let n = 4000u64;
    let avg = AveragingSpec {
        n_disorder: 1,
        n_trajectories: n,
        mode: AveragingMode::AnnealedNoiseFixedH,
        noise: NoiseAverage::Sampled,
    };
    let got = average_sff(&source, &params, &grid, &avg, 25, Some(1)).unwrap().values[1];
    // ratio estimator Σa/Σb with delta-method standard error
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for j in 0..n {
        let mut s = derive_stream(25, StreamRole::Trajectory, &[0, j]);
        let w = sample_wiener_path(&grid, &mut s).values()[1];
        let parts = sff_efficiency_parts(&e, beta, gamma, 1.0, t, w, SffMethod::Direct);
        a.push(parts.numerator.value());
        b.push(parts.denominator.value());
    }
    let (ma, _) = mean_var(&a);
    let (mb, _) = mean_var(&b);
    let r = ma / mb;
    assert!(rel_err(got, r) < 1e-10);
    let resid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - r * y).collect();
    let se = (mean_var(&resid).1 / n as f64).sqrt() / mb;
    let want = sff_dephasing(&e, beta, gamma, t, SffMethod::Direct);
    assert!((got - want).abs() < 4.0 * se, "{got} vs {want} (se {se})");
}

#[test]
fn standard_error_shrinks_as_inverse_root_of_trajectory_count() {
    let mut rng = TestRng(26);
    let spectrum = SpectrumRealization::from_unsorted(rng.spectrum(24, 1.0)).unwrap();
    let source = EnsembleSource::Fixed { spectra: vec![spectrum] };
    let grid = TimeGrid::log(1.0, 30.0, 20).unwrap();
    let params = SffParams::new(SffVariant::Monitored, 0.0, 0.5, 1.0);
    let counts = [64u64, 256, 1024, 4096];
    let se: Vec<f64> = counts
        .iter()
        .map(|&n| {
            let c = average_sff(&source, &params, &grid, &AveragingSpec::quenched(1, n), 27, Some(1)).unwrap();
            c.stderr.iter().sum::<f64>() / c.stderr.len() as f64
        })
        .collect();
    let x: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&x, &se);
    assert!((slope + 0.5).abs() <= 0.075, "slope {slope}");
}

#[test]
fn syk_second_moment_matches_the_coupling_variance() {
    // E[Tr H²/d] = C(N,4) σ_J² f², f the quartic prefactor
    for n in [8usize, 12] {
        let params = SykParameters::new(n, 30);
        let reps = 200u64;
        let per: Vec<f64> = (0..reps)
            .map(|i| {
                let mut s = derive_stream(30, StreamRole::Disorder, &[i]);
                let e = syk_spectrum(&params, &mut s).unwrap();
                e.energies().iter().map(|x| x * x).sum::<f64>() / e.dim() as f64
            })
            .collect();
        let (m, v) = mean_var(&per);
        let want = params.energy_variance();
        assert!((m - want).abs() < 4.0 * (v / reps as f64).sqrt(), "N={n}: {m} vs {want}");
    }
}
