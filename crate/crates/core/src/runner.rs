//! Config-driven experiment runs.
//!
//! A run reads one JSON [`RunConfig`], writes CSV tables (the data contract),
//! SVG plots and a `manifest.json` into a fresh directory named after the
//! experiment, a timestamp and the master seed. Data files never depend on
//! the worker count or the wall clock, so their checksums identify a result.
//!
//! Precedence for every setting is command-line flag, then config file, then
//! built-in default. The output root falls back to `$SFFMON_OUT_DIR` and
//! then `./runs`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{decompose_curve, extract_features, sweep, FeatureOptions, RampFeatures, SweepParameter, SweepProtocol};
use crate::error::{Error, Result};
use crate::noise::{derive_stream, sample_wiener_path, StreamRole, TimeGrid};
use crate::plot::{LinePlot, Series};
use crate::sff::{
    annealed_relative_error, average_sff, evaluate, AveragingMode, AveragingSpec, EnsembleSource, NoiseAverage, SffCurve,
    SffMethod, SffParams, SffVariant,
};
use crate::spectrum::{
    binomial, import_csv, load_spectrum, MajoranaNormalization, ParitySector, SpectrumRealization, SykParameters,
};
use crate::stats::Moments;
use crate::trajectory::{
    collapse_statistics, integrate_sme_with, max_stable_dt, observable_series, purity, CoherentGibbsState, SmeForm,
    DEFAULT_STABILITY_GUARD,
};

pub const OUT_DIR_ENV: &str = "SFFMON_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";
pub const ARTIFACT: &str = "sffmon";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SffRun,
    SweepGamma,
    SweepEta,
    Observables,
    Purity,
    AnnealedDiag,
    BenchmarkSme,
    CollapseStats,
    Decompose,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SffRun => "sff-run",
            Experiment::SweepGamma => "sweep-gamma",
            Experiment::SweepEta => "sweep-eta",
            Experiment::Observables => "observables",
            Experiment::Purity => "purity",
            Experiment::AnnealedDiag => "annealed-diag",
            Experiment::BenchmarkSme => "benchmark-sme",
            Experiment::CollapseStats => "collapse-stats",
            Experiment::Decompose => "decompose",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Syk {
        n_majorana: usize,
        #[serde(default = "one")]
        coupling_scale: f64,
        #[serde(default)]
        normalization: MajoranaNormalization,
        #[serde(default)]
        sector: ParitySector,
        #[serde(default)]
        allow_large: bool,
    },
    Gue {
        dim: usize,
        #[serde(default = "one")]
        width: f64,
    },
    /// Binary spectrum file, or CSV when the extension is `.csv`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    #[default]
    Log,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub spacing: GridSpacing,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            t_min: 0.1,
            t_max: 1e4,
            points: 400,
            spacing: GridSpacing::Log,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        match self.spacing {
            GridSpacing::Log => TimeGrid::log(self.t_min, self.t_max, self.points),
            GridSpacing::Uniform => TimeGrid::uniform(self.t_min, self.t_max, self.points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingConfig {
    pub n_disorder: u64,
    pub n_trajectories: u64,
    pub mode: AveragingMode,
    pub noise: NoiseAverage,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            n_disorder: 1,
            n_trajectories: 1,
            mode: AveragingMode::Quenched,
            noise: NoiseAverage::Analytic,
        }
    }
}

impl AveragingConfig {
    pub fn spec(&self) -> AveragingSpec {
        AveragingSpec {
            n_disorder: self.n_disorder,
            n_trajectories: self.n_trajectories,
            mode: self.mode,
            noise: self.noise,
        }
    }
}

/// Direct SME integration settings (`benchmark-sme`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeConfig {
    /// Step size; the largest stable step when absent.
    pub dt: Option<f64>,
    pub t_max: f64,
    pub guard: f64,
    /// Write every k-th step.
    pub record_every: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig {
            dt: None,
            t_max: 10.0,
            guard: DEFAULT_STABILITY_GUARD,
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseConfig {
    pub n_paths: u64,
    pub variance_threshold: f64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        CollapseConfig {
            n_paths: 10_000,
            variance_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub etas: Vec<f64>,
    /// Inferred from `gamma` and `eta` when absent.
    #[serde(default)]
    pub variant: Option<SffVariant>,
    #[serde(default)]
    pub method: SffMethod,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub averaging: AveragingConfig,
    #[serde(default)]
    pub features: FeatureOptions,
    #[serde(default)]
    pub sde: SdeConfig,
    #[serde(default)]
    pub collapse: CollapseConfig,
    /// Smoothing window for the annealed relative error.
    #[serde(default = "default_error_window")]
    pub error_window: usize,
    /// Kernel bandwidth for `decompose`; Silverman's rule when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn default_error_window() -> usize {
    20
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parse a config document, or the `config` member of a run manifest.
    /// Errors name the offending field path.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<config>"),
            location: format!("line {} column {}", e.line(), e.column()),
            reason: e.to_string(),
        })?;
        let (value, prefix) = match value {
            serde_json::Value::Object(mut m) if m.contains_key("artifact") && m.contains_key("config") => {
                (m.remove("config").unwrap_or_default(), "config.")
            }
            v => (v, ""),
        };
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { prefix.trim_end_matches('.').to_string() } else { format!("{prefix}{path}") };
            Error::config(if field.is_empty() { "<root>".into() } else { field }, e.into_inner().to_string())
        })
    }

    /// Load from disk; a relative spectrum file path is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::from_json(&text)?;
        if let SpectrumConfig::File { path: p } = &mut cfg.spectrum {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
    }

    pub fn variant(&self) -> SffVariant {
        self.variant.unwrap_or(if self.gamma == 0.0 {
            SffVariant::Unitary
        } else if self.eta == 1.0 {
            SffVariant::Monitored
        } else if self.eta == 0.0 {
            SffVariant::Dephasing
        } else {
            SffVariant::Efficiency
        })
    }

    pub fn params(&self) -> SffParams {
        SffParams {
            method: self.method,
            ..SffParams::new(self.variant(), self.beta, self.gamma, self.eta)
        }
    }

    /// The `gammas` list, or `[gamma]`.
    fn gamma_list(&self) -> Vec<f64> {
        if self.gammas.is_empty() {
            vec![self.gamma]
        } else {
            self.gammas.clone()
        }
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn source(&self) -> Result<EnsembleSource> {
        Ok(match &self.spectrum {
            SpectrumConfig::Syk {
                n_majorana,
                coupling_scale,
                normalization,
                sector,
                allow_large,
            } => EnsembleSource::Syk(SykParameters {
                n_majorana: *n_majorana,
                coupling_scale: *coupling_scale,
                seed: self.master_seed,
                normalization: *normalization,
                sector: *sector,
                allow_large: *allow_large,
            }),
            SpectrumConfig::Gue { dim, width } => EnsembleSource::Gue { dim: *dim, width: *width },
            SpectrumConfig::File { path } => EnsembleSource::Fixed {
                spectra: vec![read_spectrum_file(path)?],
            },
        })
    }

    /// Precondition audit; every failure names its field.
    pub fn check(&self) -> Result<()> {
        match &self.spectrum {
            SpectrumConfig::Syk {
                n_majorana,
                coupling_scale,
                allow_large,
                ..
            } => {
                let mut p = SykParameters::new(*n_majorana, 0);
                p.coupling_scale = *coupling_scale;
                p.allow_large = *allow_large;
                p.validate().map_err(|e| match e {
                    Error::InvalidParameter { name, reason } => Error::config(format!("spectrum.{name}"), reason),
                    other => other,
                })?;
            }
            SpectrumConfig::Gue { dim, width } => {
                if *dim < 2 {
                    return Err(Error::config("spectrum.dim", format!("must be >= 2, got {dim}")));
                }
                if *dim > 1 << 13 {
                    return Err(Error::Resource(format!("GUE dim = {dim} exceeds the cap dim <= 8192")));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::config("spectrum.width", format!("must be positive, got {width}")));
                }
            }
            SpectrumConfig::File { path } => {
                if !path.exists() {
                    return Err(Error::config("spectrum.path", format!("{} does not exist", path.display())));
                }
            }
        }
        finite_nonneg("beta", self.beta)?;
        finite_nonneg("gamma", self.gamma)?;
        unit_interval("eta", self.eta)?;
        for (k, &g) in self.gammas.iter().enumerate() {
            finite_nonneg(&format!("gammas[{k}]"), g)?;
        }
        for (k, &e) in self.etas.iter().enumerate() {
            unit_interval(&format!("etas[{k}]"), e)?;
        }
        match self.experiment {
            Experiment::SweepGamma if self.gammas.is_empty() => {
                return Err(Error::config("gammas", "sweep-gamma needs a non-empty list"))
            }
            Experiment::SweepEta if self.etas.is_empty() => {
                return Err(Error::config("etas", "sweep-eta needs a non-empty list"))
            }
            _ => {}
        }
        let g = &self.grid;
        if !(g.t_min >= 0.0 && g.t_max > g.t_min && g.t_max.is_finite()) {
            return Err(Error::config("grid", format!("need 0 <= t_min < t_max, got [{}, {}]", g.t_min, g.t_max)));
        }
        if g.spacing == GridSpacing::Log && g.t_min <= 0.0 {
            return Err(Error::config("grid.t_min", "log spacing needs t_min > 0"));
        }
        if g.points < 2 {
            return Err(Error::config("grid.points", format!("must be >= 2, got {}", g.points)));
        }
        let a = &self.averaging;
        if a.n_disorder == 0 {
            return Err(Error::config("averaging.n_disorder", "must be >= 1"));
        }
        if a.n_trajectories == 0 {
            return Err(Error::config("averaging.n_trajectories", "must be >= 1"));
        }
        if a.mode == AveragingMode::AnnealedNoiseFixedH && a.n_disorder != 1 {
            return Err(Error::config(
                "averaging.n_disorder",
                "annealed_noise_fixed_h averages noise for one Hamiltonian; set n_disorder = 1",
            ));
        }
        self.params().validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::config(name, reason),
            other => other,
        })?;
        if self.features.window == 0 {
            return Err(Error::config("features.window", "must be >= 1"));
        }
        if !(self.features.tol > 0.0) {
            return Err(Error::config("features.tol", "must be positive"));
        }
        if let Some(dt) = self.sde.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config("sde.dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.sde.t_max > 0.0) {
            return Err(Error::config("sde.t_max", "must be positive"));
        }
        if !(self.sde.guard > 0.0) {
            return Err(Error::config("sde.guard", "must be positive"));
        }
        if self.sde.record_every == 0 {
            return Err(Error::config("sde.record_every", "must be >= 1"));
        }
        if self.collapse.n_paths == 0 {
            return Err(Error::config("collapse.n_paths", "must be >= 1"));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::config("bandwidth", "must be positive"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be >= 1"));
        }
        Ok(())
    }
}

fn finite_nonneg(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and >= 0, got {v}")))
    }
}

fn unit_interval(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in [0, 1], got {v}")))
    }
}

fn read_spectrum_file(path: &Path) -> Result<SpectrumRealization> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        import_csv(path)
    } else {
        load_spectrum(path)
    }
}

// ---------------------------------------------------------------------------
// dry run

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub experiment: Experiment,
    pub dim: usize,
    pub grid_points: usize,
    pub work_items: u64,
    pub workers: usize,
    pub estimated_bytes: u64,
    pub estimated_seconds: f64,
    pub notes: Vec<String>,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "experiment       {}", self.experiment.name())?;
        writeln!(f, "dimension        {}", self.dim)?;
        writeln!(f, "grid points      {}", self.grid_points)?;
        writeln!(f, "work items       {}", self.work_items)?;
        writeln!(f, "workers          {}", self.workers)?;
        writeln!(f, "peak memory est. {:.2} MiB", self.estimated_bytes as f64 / (1 << 20) as f64)?;
        write!(f, "time estimate    {:.3} s", self.estimated_seconds)?;
        for n in &self.notes {
            write!(f, "\nnote: {n}")?;
        }
        Ok(())
    }
}

// Throughput assumed by the time model, in simple floating-point operations
// per second per worker.
const FLOPS: f64 = 1e9;
// Heap bytes held per grid point per disorder item until the ordered merge:
// one running moment and two scaled sums.
const ITEM_BYTES_PER_POINT: u64 = 56;
// CSV and SVG text per grid point and series.
const TEXT_BYTES_PER_POINT: u64 = 160;
const BASE_BYTES: u64 = 64 << 10;

fn effective_workers(requested: Option<usize>, items: u64) -> usize {
    let avail = requested.unwrap_or_else(rayon::current_num_threads).max(1);
    avail.min(items.max(1) as usize)
}

/// Dense matrix bytes while one realization is diagonalized: the built
/// matrix plus the copy handed to the eigensolver.
fn matrix_bytes(spec: &SpectrumConfig, dim: usize) -> u64 {
    match spec {
        SpectrumConfig::File { .. } => 0,
        _ => 2 * 16 * (dim as u64).pow(2),
    }
}

fn build_flops(spec: &SpectrumConfig, dim: usize) -> f64 {
    let d = dim as f64;
    match spec {
        SpectrumConfig::Syk { n_majorana, .. } => binomial(*n_majorana, 4) as f64 * d * 30.0 + 40.0 * d.powi(3),
        SpectrumConfig::Gue { .. } => 4.0 * d * d + 40.0 * d.powi(3),
        SpectrumConfig::File { .. } => d,
    }
}

fn point_flops(params: &SffParams, dim: usize) -> f64 {
    let d = dim as f64;
    let per = match params.variant {
        SffVariant::Efficiency | SffVariant::Dephasing => match params.method {
            SffMethod::Direct => d * d,
            SffMethod::Quadrature => 64.0 * d,
        },
        _ => d,
    };
    30.0 * per
}

pub fn validate(config: &RunConfig) -> Result<ValidationReport> {
    config.check()?;
    let source = config.source()?;
    let dim = source.dim();
    let grid = config.grid.build()?;
    let len = grid.len() as u64;
    let avg = &config.averaging;
    let params = config.params();
    let mut notes = Vec::new();
    let build = build_flops(&config.spectrum, dim);
    let mat = matrix_bytes(&config.spectrum, dim);
    let d = dim as u64;
    let (work_items, bytes, flops) = match config.experiment {
        Experiment::SffRun | Experiment::SweepGamma | Experiment::SweepEta | Experiment::AnnealedDiag => {
            let curves = match config.experiment {
                Experiment::SweepGamma => config.gammas.len() as u64,
                Experiment::SweepEta => config.etas.len() as u64,
                Experiment::AnnealedDiag => 3,
                _ => 1,
            };
            let w = effective_workers(config.workers, avg.n_disorder) as u64;
            let per_worker = mat + 8 * d + 3 * 8 * len;
            let held = avg.n_disorder * len * ITEM_BYTES_PER_POINT + curves * len * 3 * 8;
            let evals = if avg.mode != AveragingMode::Quenched && avg.noise == NoiseAverage::Analytic {
                1
            } else {
                avg.n_trajectories
            };
            let flops = curves as f64
                * avg.n_disorder as f64
                * (build + evals as f64 * len as f64 * point_flops(&params, dim));
            (curves * avg.n_disorder, w * per_worker + held + curves * len * TEXT_BYTES_PER_POINT, flops)
        }
        Experiment::Observables | Experiment::Purity | Experiment::Decompose => {
            let paths = if config.experiment == Experiment::Decompose { 1 } else { avg.n_trajectories };
            let realizations = if config.experiment == Experiment::Purity { avg.n_disorder } else { 1 };
            let w = effective_workers(config.workers, realizations) as u64;
            let per_point = if config.experiment == Experiment::Decompose { 10.0 * (dim as f64).powi(2) } else { 30.0 * (dim as f64).powi(2) };
            (
                realizations * paths,
                w * (mat + 8 * 8 * d + 6 * 8 * len) + 6 * 8 * len * paths + len * paths * TEXT_BYTES_PER_POINT,
                realizations as f64 * (build + paths as f64 * len as f64 * per_point),
            )
        }
        Experiment::BenchmarkSme => {
            let gammas = config.gamma_list();
            let dense = config.eta < 1.0;
            let state = if dense { 4 * 16 * d * d } else { 4 * 16 * d };
            let mut steps_total = 0u64;
            let mut max_steps = 0u64;
            let probe = source.realization(config.master_seed, 0)?;
            for &g in &gammas {
                let dt = config.sde.dt.unwrap_or_else(|| max_stable_dt(probe.energies(), g, config.sde.guard));
                let steps = (config.sde.t_max / dt).ceil() as u64;
                steps_total += steps;
                max_steps = max_steps.max(steps);
            }
            if dense {
                notes.push("eta < 1: dense density-matrix integration, O(d^2) memory per path".into());
            }
            let per_step = if dense { 40.0 * (dim as f64).powi(2) } else { 40.0 * dim as f64 };
            let rows = max_steps / config.sde.record_every as u64 + 1;
            (
                gammas.len() as u64,
                mat + state + 2 * 8 * (max_steps + 1) + 4 * 8 * rows + rows * TEXT_BYTES_PER_POINT,
                build + 2.0 * steps_total as f64 * per_step,
            )
        }
        Experiment::CollapseStats => {
            let n = config.collapse.n_paths;
            let w = effective_workers(config.workers, n) as u64;
            (
                n,
                // per-path outcomes, collected then concatenated
                mat + w * 4 * 8 * d + n * 32 + 8 * d,
                build + n as f64 * len as f64 * 20.0 * dim as f64,
            )
        }
    };
    let workers = effective_workers(config.workers, work_items);
    if matches!(config.spectrum, SpectrumConfig::Syk { n_majorana, .. } if n_majorana > 20) {
        notes.push(format!("dense SYK matrix of {} MiB per worker", mat >> 20));
    }
    Ok(ValidationReport {
        experiment: config.experiment,
        dim,
        grid_points: len as usize,
        work_items,
        workers,
        estimated_bytes: BASE_BYTES + bytes,
        estimated_seconds: flops / (FLOPS * workers as f64),
        notes,
    })
}

// ---------------------------------------------------------------------------
// run

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// One family of random streams used by a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamUse {
    pub role: StreamRole,
    pub indices: String,
    pub purpose: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub config: RunConfig,
    pub started_at: String,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub files: Vec<FileRecord>,
    pub streams: Vec<StreamUse>,
    pub feature_failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// Feature extraction failed for at least one curve; data were still
    /// written.
    pub fn feature_error(&self) -> Option<Error> {
        (!self.manifest.feature_failures.is_empty())
            .then(|| Error::FeatureNotFound(self.manifest.feature_failures.join("; ")))
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<FileRecord>,
    plots: bool,
}

impl Writer {
    fn put(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if path.exists() {
            return Err(Error::Validation(format!("refusing to overwrite {}", path.display())));
        }
        std::fs::write(&path, contents)?;
        self.files.push(FileRecord {
            path: name.to_string(),
            bytes: contents.len() as u64,
            sha256: hex::encode(Sha256::digest(contents)),
        });
        Ok(())
    }

    fn plot(&mut self, name: &str, plot: LinePlot) -> Result<()> {
        if self.plots {
            self.put(name, plot.to_svg().as_bytes())?;
        }
        Ok(())
    }
}

/// `# key: value` lines shared by every table. Nothing here depends on the
/// worker count or the clock.
fn header(cfg: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# {ARTIFACT} {VERSION}");
    let _ = writeln!(h, "# experiment: {}", cfg.experiment.name());
    let spectrum = serde_json::to_string(&cfg.spectrum).unwrap_or_default();
    let _ = writeln!(h, "# spectrum: {spectrum}");
    let _ = writeln!(h, "# beta: {}", cfg.beta);
    let _ = writeln!(h, "# master_seed: {}", cfg.master_seed);
    for (k, v) in extra {
        let _ = writeln!(h, "# {k}: {v}");
    }
    h
}

fn curve_csv(head: String, curve: &SffCurve) -> String {
    let mut s = head;
    s.push_str("t,value,stderr\n");
    for ((t, v), e) in curve.times().iter().zip(&curve.values).zip(&curve.stderr) {
        let _ = writeln!(s, "{t},{v},{e}");
    }
    s
}

fn curve_meta(cfg: &RunConfig, params: &SffParams) -> Vec<(&'static str, String)> {
    vec![
        ("variant", format!("{:?}", params.variant).to_lowercase()),
        ("method", format!("{:?}", params.method).to_lowercase()),
        ("gamma", params.gamma.to_string()),
        ("eta", params.eta.to_string()),
        ("n_disorder", cfg.averaging.n_disorder.to_string()),
        ("n_trajectories", cfg.averaging.n_trajectories.to_string()),
        ("mode", format!("{:?}", cfg.averaging.mode)),
        ("noise", format!("{:?}", cfg.averaging.noise)),
    ]
}

const FEATURE_COLUMNS: &str = "parameter,t_dip,t_plateau,ratio,plateau_value,n_traj,n_disorder,seed\n";

fn feature_row(cfg: &RunConfig, value: f64, f: Option<&RampFeatures>) -> String {
    let (td, tp, r, pv) = f.map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN), |f| {
        (f.t_dip, f.t_plateau, f.ratio, f.plateau_value)
    });
    format!(
        "{value},{td},{tp},{r},{pv},{},{},{}\n",
        cfg.averaging.n_trajectories, cfg.averaging.n_disorder, cfg.master_seed
    )
}

fn sff_plot(title: &str, series: Vec<Series>) -> LinePlot {
    series
        .into_iter()
        .fold(LinePlot::new(title, "t", "SFF").log_x().log_y(), |p, s| p.with(s))
}

fn ensemble_streams(cfg: &RunConfig, params: &SffParams) -> Vec<StreamUse> {
    let mut v = Vec::new();
    if !matches!(cfg.spectrum, SpectrumConfig::File { .. }) {
        v.push(StreamUse {
            role: StreamRole::Disorder,
            indices: format!("[i], i < {}", cfg.averaging.n_disorder),
            purpose: "couplings / matrix entries of realization i".into(),
        });
    }
    let sampled = cfg.averaging.mode == AveragingMode::Quenched || cfg.averaging.noise == NoiseAverage::Sampled;
    if params.is_stochastic() && sampled {
        v.push(StreamUse {
            role: StreamRole::Trajectory,
            indices: format!("[i, j], j < {}", cfg.averaging.n_trajectories),
            purpose: "Wiener path j of realization i on the output grid".into(),
        });
    }
    v
}

fn new_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let root = cfg.output_root();
    std::fs::create_dir_all(&root)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = format!("{}-{stamp}-seed{}", cfg.experiment.name(), cfg.master_seed);
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?
            .install(f),
        None => f(),
    }
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.check()?;
    let started = Instant::now();
    let started_at = chrono::Local::now().to_rfc3339();
    let dir = new_run_dir(config)?;
    log::info!("writing {}", dir.display());
    let mut w = Writer {
        dir: dir.clone(),
        files: Vec::new(),
        plots: config.plots,
    };
    let mut failures = Vec::new();
    let streams = in_pool(config.workers, || match config.experiment {
        Experiment::SffRun => run_sff(config, &mut w, &mut failures),
        Experiment::SweepGamma => run_sweep(config, SweepParameter::Gamma, &mut w, &mut failures),
        Experiment::SweepEta => run_sweep(config, SweepParameter::Eta, &mut w, &mut failures),
        Experiment::Observables => run_observables(config, &mut w),
        Experiment::Purity => run_purity(config, &mut w),
        Experiment::AnnealedDiag => run_annealed(config, &mut w),
        Experiment::BenchmarkSme => run_benchmark(config, &mut w),
        Experiment::CollapseStats => run_collapse(config, &mut w),
        Experiment::Decompose => run_decompose(config, &mut w),
    })?;
    let mut resolved = config.clone();
    resolved.output_dir = Some(config.output_root());
    let manifest = RunManifest {
        artifact: ARTIFACT.into(),
        version: VERSION.into(),
        config: resolved,
        started_at,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        workers: config.workers.unwrap_or_else(rayon::current_num_threads),
        files: w.files,
        streams,
        feature_failures: failures,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunOutcome { run_dir: dir, manifest })
}

fn run_sff(cfg: &RunConfig, w: &mut Writer, failures: &mut Vec<String>) -> Result<Vec<StreamUse>> {
    let source = cfg.source()?;
    let params = cfg.params();
    let grid = cfg.grid.build()?;
    let curve = average_sff(&source, &params, &grid, &cfg.averaging.spec(), cfg.master_seed, cfg.workers)?;
    w.put("curve.csv", curve_csv(header(cfg, &curve_meta(cfg, &params)), &curve).as_bytes())?;
    w.plot(
        "curve.svg",
        sff_plot(
            &format!("{:?} SFF, gamma = {}, eta = {}", params.variant, params.gamma, params.eta),
            vec![Series::new("ensemble mean", curve.times().to_vec(), curve.values.clone())],
        ),
    )?;
    let mut table = header(cfg, &[("parameter", "gamma".into())]);
    table.push_str(FEATURE_COLUMNS);
    match extract_features(&curve, &cfg.features) {
        Ok(f) => table.push_str(&feature_row(cfg, params.gamma, Some(&f))),
        Err(e) => {
            log::warn!("{e}");
            failures.push(format!("gamma = {}: {e}", params.gamma));
            table.push_str(&feature_row(cfg, params.gamma, None));
        }
    }
    w.put("features.csv", table.as_bytes())?;
    Ok(ensemble_streams(cfg, &params))
}

fn run_sweep(cfg: &RunConfig, parameter: SweepParameter, w: &mut Writer, failures: &mut Vec<String>) -> Result<Vec<StreamUse>> {
    let (name, values) = match parameter {
        SweepParameter::Gamma => ("gamma", cfg.gammas.clone()),
        SweepParameter::Eta => ("eta", cfg.etas.clone()),
    };
    let mut params = cfg.params();
    if cfg.variant.is_none() {
        // the variant must cover every swept value
        params.variant = match parameter {
            SweepParameter::Gamma if cfg.eta == 1.0 => SffVariant::Monitored,
            _ => SffVariant::Efficiency,
        };
    }
    let protocol = SweepProtocol {
        source: cfg.source()?,
        params,
        grid: cfg.grid.build()?,
        averaging: cfg.averaging.spec(),
        features: cfg.features,
        master_seed: cfg.master_seed,
        workers: cfg.workers,
    };
    let rows = sweep(parameter, &values, &protocol)?;
    let mut table = header(cfg, &[("parameter", name.into())]);
    table.push_str(FEATURE_COLUMNS);
    let mut overlay = Vec::new();
    let (mut xs, mut ratios) = (Vec::new(), Vec::new());
    for (k, row) in rows.iter().enumerate() {
        let mut p = params;
        match parameter {
            SweepParameter::Gamma => p.gamma = row.value,
            SweepParameter::Eta => p.eta = row.value,
        }
        w.put(
            &format!("curve_{k:03}.csv"),
            curve_csv(header(cfg, &curve_meta(cfg, &p)), &row.curve).as_bytes(),
        )?;
        overlay.push(Series::new(format!("{name} = {}", row.value), row.curve.times().to_vec(), row.curve.values.clone()));
        match &row.features {
            Ok(f) => {
                table.push_str(&feature_row(cfg, row.value, Some(f)));
                xs.push(row.value);
                ratios.push(f.ratio);
            }
            Err(e) => {
                log::warn!("{name} = {}: {e}", row.value);
                failures.push(format!("{name} = {}: {e}", row.value));
                table.push_str(&feature_row(cfg, row.value, None));
            }
        }
    }
    w.put("features.csv", table.as_bytes())?;
    w.plot("curves.svg", sff_plot(&format!("SFF across {name}"), overlay))?;
    let mut ratio_plot = LinePlot::new(format!("ramp extent vs {name}"), name, "t_dip / t_plateau")
        .with(Series::new("t_dip / t_plateau", xs.clone(), ratios));
    if xs.iter().all(|&x| x > 0.0) {
        ratio_plot = ratio_plot.log_x();
    }
    w.plot("ratio.svg", ratio_plot)?;
    Ok(ensemble_streams(cfg, &params))
}

fn first_state(cfg: &RunConfig, index: u64) -> Result<CoherentGibbsState> {
    let spectrum = cfg.source()?.realization(cfg.master_seed, index)?;
    CoherentGibbsState::new(&spectrum, cfg.beta)
}

fn trajectory_stream_use(n_disorder: u64, n_traj: u64, purpose: &str) -> StreamUse {
    StreamUse {
        role: StreamRole::Trajectory,
        indices: format!("[i, j], i < {n_disorder}, j < {n_traj}"),
        purpose: purpose.into(),
    }
}

fn disorder_stream_use(cfg: &RunConfig, n: u64) -> Vec<StreamUse> {
    if matches!(cfg.spectrum, SpectrumConfig::File { .. }) {
        return Vec::new();
    }
    vec![StreamUse {
        role: StreamRole::Disorder,
        indices: format!("[i], i < {n}"),
        purpose: "couplings / matrix entries of realization i".into(),
    }]
}

fn run_observables(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<StreamUse>> {
    let rho0 = first_state(cfg, 0)?;
    let grid = cfg.grid.build()?;
    let n = cfg.averaging.n_trajectories;
    let series: Vec<_> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut stream = derive_stream(cfg.master_seed, StreamRole::Trajectory, &[0, j]);
            let path = sample_wiener_path(&grid, &mut stream);
            observable_series(&rho0, cfg.gamma, cfg.eta, &path, true, j)
        })
        .collect::<Result<_>>()?;
    let mut s = header(
        cfg,
        &[("gamma", cfg.gamma.to_string()), ("eta", cfg.eta.to_string()), ("n_trajectories", n.to_string())],
    );
    s.push_str("t,mean_energy,variance,purity,trajectory_id\n");
    for o in &series {
        for k in 0..o.t.len() {
            let _ = writeln!(s, "{},{},{},{},{}", o.t[k], o.mean_energy[k], o.variance[k], o.purity[k], o.trajectory_id);
        }
    }
    w.put("observables.csv", s.as_bytes())?;
    let plot = series.iter().take(8).fold(
        LinePlot::new("energy variance along trajectories", "t", "Var H").log_x().log_y(),
        |p, o| p.with(Series::new(format!("trajectory {}", o.trajectory_id), o.t.clone(), o.variance.clone())),
    );
    w.plot("variance.svg", plot)?;
    let plot = series.iter().take(8).fold(
        LinePlot::new("mean energy along trajectories", "t", "<H>").log_x(),
        |p, o| p.with(Series::new(format!("trajectory {}", o.trajectory_id), o.t.clone(), o.mean_energy.clone())),
    );
    w.plot("mean_energy.svg", plot)?;
    let mut uses = disorder_stream_use(cfg, 1);
    uses.push(trajectory_stream_use(1, n, "Wiener path j on the output grid"));
    Ok(uses)
}

fn run_purity(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<StreamUse>> {
    let grid = cfg.grid.build()?;
    let (nd, nt) = (cfg.averaging.n_disorder, cfg.averaging.n_trajectories);
    let items: Vec<Vec<Moments>> = (0..nd)
        .into_par_iter()
        .map(|i| {
            let rho0 = first_state(cfg, i)?;
            let mut m = vec![Moments::default(); grid.len()];
            for j in 0..nt {
                let mut stream = derive_stream(cfg.master_seed, StreamRole::Trajectory, &[i, j]);
                let path = sample_wiener_path(&grid, &mut stream);
                for (k, (&t, &wt)) in grid.points().iter().zip(path.values()).enumerate() {
                    m[k].push(purity(&rho0, cfg.gamma, cfg.eta, t, wt)?);
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut curve = SffCurve::new(grid.clone(), vec![0.0; grid.len()])?;
    for k in 0..grid.len() {
        let mut m = Moments::default();
        items.iter().for_each(|it| m.merge(&it[k]));
        curve.values[k] = m.mean;
        curve.stderr[k] = m.std_error();
    }
    let meta = [
        ("gamma", cfg.gamma.to_string()),
        ("eta", cfg.eta.to_string()),
        ("n_disorder", nd.to_string()),
        ("n_trajectories", nt.to_string()),
        ("observable", "trajectory-averaged purity".into()),
    ];
    w.put("purity.csv", curve_csv(header(cfg, &meta), &curve).as_bytes())?;
    w.plot(
        "purity.svg",
        LinePlot::new(format!("purity, gamma = {}, eta = {}", cfg.gamma, cfg.eta), "t", "Tr rho^2")
            .log_x()
            .with(Series::new("mean purity", curve.times().to_vec(), curve.values.clone())),
    )?;
    let mut uses = disorder_stream_use(cfg, nd);
    uses.push(trajectory_stream_use(nd, nt, "Wiener path j of realization i on the output grid"));
    Ok(uses)
}

fn run_annealed(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<StreamUse>> {
    let source = cfg.source()?;
    let params = cfg.params();
    let grid = cfg.grid.build()?;
    let base = cfg.averaging.spec();
    let quenched = average_sff(
        &source,
        &params,
        &grid,
        &AveragingSpec {
            mode: AveragingMode::Quenched,
            ..base
        },
        cfg.master_seed,
        cfg.workers,
    )?;
    let annealed = |mode| {
        average_sff(
            &source,
            &params,
            &grid,
            &AveragingSpec { mode, ..base },
            cfg.master_seed,
            cfg.workers,
        )
    };
    let then_disorder = annealed(AveragingMode::AnnealedNoiseThenDisorder)?;
    let both = annealed(AveragingMode::AnnealedBoth)?;
    let window = Some(cfg.error_window);
    let err_td = annealed_relative_error(&quenched, &then_disorder, window)?;
    let err_both = annealed_relative_error(&quenched, &both, window)?;
    let mut s = header(cfg, &curve_meta(cfg, &params));
    let _ = writeln!(s, "# error_window: {}", cfg.error_window);
    s.push_str("t,quenched,annealed_noise_then_disorder,annealed_both,rel_error_noise_then_disorder,rel_error_both\n");
    for k in 0..grid.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            grid.points()[k],
            quenched.values[k],
            then_disorder.values[k],
            both.values[k],
            err_td.values[k],
            err_both.values[k]
        );
    }
    w.put("annealed.csv", s.as_bytes())?;
    let t = grid.points().to_vec();
    w.plot(
        "annealed.svg",
        sff_plot(
            &format!("quenched vs annealed, gamma = {}", cfg.gamma),
            vec![
                Series::new("quenched", t.clone(), quenched.values.clone()),
                Series::new("annealed noise, then disorder", t.clone(), then_disorder.values.clone()),
                Series::new("annealed both", t.clone(), both.values.clone()),
            ],
        ),
    )?;
    w.plot(
        "relative_error.svg",
        LinePlot::new("smoothed relative error", "t", "|annealed - quenched| / quenched")
            .log_x()
            .with(Series::new("noise, then disorder", t.clone(), err_td.values.clone()))
            .with(Series::new("both", t, err_both.values.clone())),
    )?;
    Ok(ensemble_streams(cfg, &params))
}

fn run_benchmark(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<StreamUse>> {
    let rho0 = first_state(cfg, 0)?;
    let psi0 = rho0.amplitudes().to_vec();
    let e = rho0.energies().to_vec();
    let gammas = cfg.gamma_list();
    for (g_idx, &gamma) in gammas.iter().enumerate() {
        let dt_max = max_stable_dt(&e, gamma, cfg.sde.guard);
        let dt_req = cfg.sde.dt.unwrap_or(dt_max);
        let steps = (cfg.sde.t_max / dt_req).ceil().max(1.0) as usize;
        let dt = cfg.sde.t_max / steps as f64;
        let grid = TimeGrid::uniform_step(0.0, dt, steps)?;
        let mut stream = derive_stream(cfg.master_seed, StreamRole::Trajectory, &[0, g_idx as u64]);
        let path = sample_wiener_path(&grid, &mut stream);
        let params = SffParams::new(
            if cfg.eta == 1.0 { SffVariant::Monitored } else { SffVariant::Efficiency },
            cfg.beta,
            gamma,
            cfg.eta,
        );
        let every = cfg.sde.record_every;
        let run_form = |form| -> Result<Vec<f64>> {
            let mut out = Vec::new();
            integrate_sme_with(&rho0, gamma, cfg.eta, &path, form, cfg.sde.guard, |k, s| {
                if k % every == 0 {
                    out.push(s.fidelity(&psi0));
                }
            })?;
            Ok(out)
        };
        let record = run_form(SmeForm::NonlinearRecord)?;
        let linear = run_form(SmeForm::LinearNormalized)?;
        let nonlinear = run_form(SmeForm::Nonlinear)?;
        let mut t = Vec::new();
        let mut closed = Vec::new();
        for (&tk, &wk) in grid.points().iter().zip(path.values()).step_by(every) {
            t.push(tk);
            closed.push(evaluate(&e, &params, tk, wk));
        }
        let meta = [
            ("gamma", gamma.to_string()),
            ("eta", cfg.eta.to_string()),
            ("dt", dt.to_string()),
            ("guard", cfg.sde.guard.to_string()),
            ("record_every", every.to_string()),
        ];
        let mut s = header(cfg, &meta);
        // `nonlinear_record` reads the path as the measurement record and is
        // the pathwise counterpart of the closed form; `nonlinear` feeds the
        // same path in as the innovation, which is a different process.
        s.push_str("t,closed_form,nonlinear_record,linear_normalized,nonlinear\n");
        for k in 0..t.len() {
            let _ = writeln!(s, "{},{},{},{},{}", t[k], closed[k], record[k], linear[k], nonlinear[k]);
        }
        w.put(&format!("benchmark_{g_idx:03}.csv"), s.as_bytes())?;
        w.plot(
            &format!("benchmark_{g_idx:03}.svg"),
            LinePlot::new(format!("closed form vs SME, gamma = {gamma}"), "t", "SFF")
                .with(Series::new("closed form", t.clone(), closed))
                .with(Series::new("nonlinear SME (record)", t.clone(), record))
                .with(Series::new("linear normalized SME", t, linear)),
        )?;
    }
    let mut uses = disorder_stream_use(cfg, 1);
    uses.push(StreamUse {
        role: StreamRole::Trajectory,
        indices: format!("[0, g], g < {}", gammas.len()),
        purpose: "Wiener path on the integration grid of the g-th gamma".into(),
    });
    Ok(uses)
}

fn run_collapse(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<StreamUse>> {
    let rho0 = first_state(cfg, 0)?;
    let grid = cfg.grid.build()?;
    let stats = collapse_statistics(
        &rho0,
        cfg.gamma,
        &grid,
        cfg.collapse.n_paths,
        cfg.master_seed,
        cfg.collapse.variance_threshold,
    )?;
    let meta = [
        ("gamma", cfg.gamma.to_string()),
        ("n_paths", stats.n_paths.to_string()),
        ("unconverged", stats.unconverged.to_string()),
        ("variance_threshold", cfg.collapse.variance_threshold.to_string()),
    ];
    let mut s = header(cfg, &meta);
    s.push_str("n,energy,born_weight,count,frequency\n");
    let born = rho0.populations();
    let freq = stats.frequencies();
    for n in 0..rho0.dim() {
        let _ = writeln!(s, "{n},{},{},{},{}", rho0.energies()[n], born[n], stats.counts[n], freq[n]);
    }
    w.put("collapse.csv", s.as_bytes())?;
    let idx: Vec<f64> = (0..rho0.dim()).map(|n| n as f64).collect();
    w.plot(
        "collapse.svg",
        LinePlot::new("collapse outcomes", "eigenstate index", "probability")
            .with(Series::new("Born weight", idx.clone(), born))
            .with(Series::new("observed frequency", idx, freq)),
    )?;
    let mut uses = disorder_stream_use(cfg, 1);
    uses.push(StreamUse {
        role: StreamRole::Collapse,
        indices: format!("[j], j < {}", cfg.collapse.n_paths),
        purpose: "measurement-record increments of path j".into(),
    });
    Ok(uses)
}

fn run_decompose(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<StreamUse>> {
    let spectrum = cfg.source()?.realization(cfg.master_seed, 0)?;
    let grid = cfg.grid.build()?;
    let mut stream = derive_stream(cfg.master_seed, StreamRole::Trajectory, &[0, 0]);
    let path = sample_wiener_path(&grid, &mut stream);
    let points = decompose_curve(&spectrum, cfg.beta, cfg.gamma, &grid, path.values(), cfg.bandwidth)?;
    let meta = [
        ("gamma", cfg.gamma.to_string()),
        ("bandwidth", cfg.bandwidth.map_or("silverman".into(), |h| h.to_string())),
    ];
    let mut s = header(cfg, &meta);
    s.push_str("t,w,full,diag,disc,conn,residual\n");
    for (p, wv) in points.iter().zip(path.values()) {
        let _ = writeln!(s, "{},{wv},{},{},{},{},{}", p.t, p.full, p.diag, p.disc, p.conn, p.residual);
    }
    w.put("decomposition.csv", s.as_bytes())?;
    let t: Vec<f64> = points.iter().map(|p| p.t).collect();
    let col = |f: fn(&crate::analysis::DecompositionPoint) -> f64| points.iter().map(f).collect::<Vec<_>>();
    w.plot(
        "decomposition.svg",
        sff_plot(
            &format!("SFF decomposition, gamma = {}", cfg.gamma),
            vec![
                Series::new("full", t.clone(), col(|p| p.full)),
                Series::new("diagonal", t.clone(), col(|p| p.diag)),
                Series::new("disconnected", t.clone(), col(|p| p.disc)),
                Series::new("|connected|", t, col(|p| p.conn.abs())),
            ],
        ),
    )?;
    let mut uses = disorder_stream_use(cfg, 1);
    uses.push(trajectory_stream_use(1, 1, "Wiener path on the output grid"));
    Ok(uses)
}
