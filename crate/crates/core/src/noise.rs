//! Reproducible Wiener noise.
//!
//! Every random draw in the crate comes from a [`NoiseStream`] keyed by
//! `(master_seed, role, indices)`. The key is laid out directly into the
//! 256-bit ChaCha20 seed plus the 64-bit stream id, so distinct keys with at
//! most three indices never share a generator, and trajectory `j` of
//! disorder realization `i` draws the same numbers no matter which worker
//! runs it.
//!
//! Gaussians use the polar-free Box–Muller transform on 53-bit uniforms in
//! the open interval (0, 1); both outputs of each pair are consumed.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    /// SYK couplings / GUE matrix entries of disorder realization `i`.
    Disorder,
    /// Wiener path of trajectory `(i, j)`.
    Trajectory,
    /// Brownian-bridge refinement draws.
    Bridge,
    /// Collapse-statistics runs.
    Collapse,
    Custom(u16),
}

impl StreamRole {
    fn tag(self) -> u32 {
        match self {
            StreamRole::Disorder => 1,
            StreamRole::Trajectory => 2,
            StreamRole::Bridge => 3,
            StreamRole::Collapse => 4,
            StreamRole::Custom(c) => 0x1_0000 | c as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub role: StreamRole,
    pub indices: Vec<u64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    /// Seed bytes: `master | tag | index count | i0 | i1`; the third index is
    /// the ChaCha stream id. Further indices are folded into the stream id
    /// with SplitMix64, which is the only non-injective part of the layout.
    fn seed_and_stream(&self) -> ([u8; 32], u64) {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..12].copy_from_slice(&self.role.tag().to_le_bytes());
        seed[12..16].copy_from_slice(&(self.indices.len() as u32).to_le_bytes());
        let idx = |k: usize| self.indices.get(k).copied().unwrap_or(0);
        seed[16..24].copy_from_slice(&idx(0).to_le_bytes());
        seed[24..32].copy_from_slice(&idx(1).to_le_bytes());
        let mut stream = idx(2);
        for &extra in self.indices.iter().skip(3) {
            stream = splitmix64(stream ^ splitmix64(extra));
        }
        (seed, stream)
    }
}

/// Counter-based generator bound to one key.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    key: StreamKey,
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

pub fn derive_stream(master_seed: u64, role: StreamRole, indices: &[u64]) -> NoiseStream {
    NoiseStream::new(StreamKey {
        master_seed,
        role,
        indices: indices.to_vec(),
    })
}

impl NoiseStream {
    pub fn new(key: StreamKey) -> Self {
        let (seed, stream) = key.seed_and_stream();
        let mut rng = ChaCha20Rng::from_seed(seed);
        rng.set_stream(stream);
        NoiseStream {
            key,
            rng,
            spare: None,
        }
    }

    pub fn key(&self) -> &StreamKey {
        &self.key
    }

    /// A child stream: same master seed and role, with one more index.
    pub fn child(&self, index: u64) -> NoiseStream {
        let mut key = self.key.clone();
        key.indices.push(index);
        NoiseStream::new(key)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.gaussian()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Log,
    Explicit,
}

/// Strictly increasing, non-negative evaluation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    spacing: Spacing,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation("time grid needs at least two points".into()));
        }
        if let Some(bad) = points.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::Validation(format!(
                "time grid points must be finite and non-negative, found {bad}"
            )));
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "time grid not strictly increasing at index {}: {} -> {}",
                k + 1,
                points[k],
                points[k + 1]
            )));
        }
        Ok(TimeGrid { points, spacing })
    }

    pub fn explicit(points: Vec<f64>) -> Result<Self> {
        Self::new(points, Spacing::Explicit)
    }

    /// `n_points` equally spaced times on `[start, end]`.
    pub fn uniform(start: f64, end: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 || end <= start {
            return Err(Error::Validation(format!(
                "uniform grid needs end > start and >= 2 points (got [{start}, {end}], {n_points})"
            )));
        }
        let dt = (end - start) / (n_points - 1) as f64;
        let mut points: Vec<f64> = (0..n_points).map(|k| start + k as f64 * dt).collect();
        points[n_points - 1] = end;
        Self::new(points, Spacing::Uniform)
    }

    /// `n_steps + 1` points `start + k dt`.
    pub fn uniform_step(start: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Validation(format!("uniform step must be positive, got {dt}")));
        }
        let points = (0..=n_steps).map(|k| start + k as f64 * dt).collect();
        Self::new(points, Spacing::Uniform)
    }

    /// `n_points` logarithmically spaced times on `[t_min, t_max]`, `t_min > 0`.
    pub fn log(t_min: f64, t_max: f64, n_points: usize) -> Result<Self> {
        if !(t_min > 0.0) || t_max <= t_min || n_points < 2 {
            return Err(Error::Validation(format!(
                "log grid needs 0 < t_min < t_max and >= 2 points (got {t_min}, {t_max}, {n_points})"
            )));
        }
        let (a, b) = (t_min.ln(), t_max.ln());
        let mut points: Vec<f64> = (0..n_points)
            .map(|k| (a + (b - a) * k as f64 / (n_points - 1) as f64).exp())
            .collect();
        points[0] = t_min;
        points[n_points - 1] = t_max;
        Self::new(points, Spacing::Log)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Step of a uniform grid, checked against the actual points.
    pub fn uniform_dt(&self) -> Option<f64> {
        let dt = (self.last() - self.first()) / (self.len() - 1) as f64;
        let tol = 1e-9 * dt.max(self.last() * 1e-6);
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= tol)
            .then_some(dt)
    }

    /// Union of this grid with `extra` points (duplicates within 1e-12
    /// relative merged).
    pub fn merged_with(&self, extra: &[f64]) -> Result<TimeGrid> {
        // (time, is_extra); on near-ties the original point wins
        let mut all: Vec<(f64, bool)> = self
            .points
            .iter()
            .map(|&t| (t, false))
            .chain(extra.iter().map(|&t| (t, true)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut merged: Vec<(f64, bool)> = Vec::with_capacity(all.len());
        for p in all {
            match merged.last_mut() {
                Some(last) if same_time(last.0, p.0) => {
                    if last.1 && !p.1 {
                        *last = p;
                    }
                }
                _ => merged.push(p),
            }
        }
        TimeGrid::explicit(merged.into_iter().map(|p| p.0).collect())
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// One realization of `W_t` sampled on a grid. `W(0) = 0` is implicit; if
/// the grid starts at zero the first value is exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerPath {
    grid: TimeGrid,
    values: Vec<f64>,
    key: Option<StreamKey>,
}

impl WienerPath {
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Validation(format!(
                "path has {} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if grid.first() == 0.0 && values[0] != 0.0 {
            return Err(Error::Validation("W(0) must be 0".into()));
        }
        Ok(WienerPath {
            grid,
            values,
            key: None,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn key(&self) -> Option<&StreamKey> {
        self.key.as_ref()
    }

    /// Increments `W(t_k) - W(t_{k-1})` for `k >= 1`.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Debug dump with columns `t,W`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,W")?;
        for (t, w) in self.grid.points().iter().zip(&self.values) {
            writeln!(out, "{t:e},{w:e}")?;
        }
        Ok(())
    }
}

/// Exact Brownian path on any grid: each increment is `N(0, Δt)`.
pub fn sample_wiener_path(grid: &TimeGrid, stream: &mut NoiseStream) -> WienerPath {
    let mut values = Vec::with_capacity(grid.len());
    let (mut t_prev, mut w) = (0.0, 0.0);
    for &t in grid.points() {
        let dt = t - t_prev;
        if dt > 0.0 {
            w += dt.sqrt() * stream.gaussian();
        }
        values.push(w);
        t_prev = t;
    }
    WienerPath {
        grid: grid.clone(),
        values,
        key: Some(stream.key().clone()),
    }
}

/// Interpolate a path onto a finer grid containing all of its points.
/// Interior points are drawn from the Brownian-bridge law between their
/// neighbouring known values; points past the end extend the path with
/// fresh increments. Known values are copied bit-for-bit.
pub fn refine_path(path: &WienerPath, finer: &TimeGrid, stream: &mut NoiseStream) -> Result<WienerPath> {
    let coarse = path.grid.points();
    let fine = finer.points();
    // anchor[k] = index in `fine` of coarse point k
    let mut anchors = Vec::with_capacity(coarse.len());
    let mut j = 0;
    for &t in coarse {
        while j < fine.len() && fine[j] < t && !same_time(fine[j], t) {
            j += 1;
        }
        if j == fine.len() || !same_time(fine[j], t) {
            return Err(Error::Validation(format!(
                "refined grid does not contain original point t = {t}"
            )));
        }
        anchors.push(j);
        j += 1;
    }

    let mut values = vec![0.0; fine.len()];
    // known left anchor: (time, value); starts at the implicit W(0) = 0
    let (mut t_left, mut w_left) = (0.0, 0.0);
    let mut next_anchor = 0;
    for (i, &t) in fine.iter().enumerate() {
        if next_anchor < anchors.len() && anchors[next_anchor] == i {
            values[i] = path.values[next_anchor];
            t_left = t;
            w_left = values[i];
            next_anchor += 1;
            continue;
        }
        if t == 0.0 {
            values[i] = 0.0;
            continue;
        }
        if next_anchor < anchors.len() {
            let t_right = fine[anchors[next_anchor]];
            let w_right = path.values[next_anchor];
            let span = t_right - t_left;
            let mean = w_left + (t - t_left) / span * (w_right - w_left);
            let var = (t - t_left) * (t_right - t) / span;
            values[i] = mean + var.max(0.0).sqrt() * stream.gaussian();
        } else {
            values[i] = w_left + (t - t_left).sqrt() * stream.gaussian();
        }
        t_left = t;
        w_left = values[i];
    }
    Ok(WienerPath {
        grid: finer.clone(),
        values,
        key: path.key.clone(),
    })
}
