//! Energy spectra: SYK exact diagonalization, GUE sampling, spectrum files.
//!
//! The SYK Hamiltonian `H = Σ_{k<l<m<n} J_klmn χ_k χ_l χ_m χ_n` is built from
//! Majoranas realised on a Jordan–Wigner chain of `N/2` qubits,
//!
//! ```text
//! χ_{2j}   = c · Z_0 … Z_{j-1} X_j
//! χ_{2j+1} = c · Z_0 … Z_{j-1} Y_j
//! ```
//!
//! where site `j` is bit `j` of the basis index and `c = 1/√2` for
//! `{χ_i, χ_j} = δ_ij` or `c = 1` for `{χ_i, χ_j} = 2δ_ij`. Each Majorana maps
//! a basis state to a single basis state times a phase in `{±1, ±i}`, so a
//! quartic term is applied to all `d` basis states in `O(d)` without forming
//! Pauli matrices. Every term flips exactly four bits' worth of single-site
//! operators, hence `H` commutes with the parity `P = Π_j Z_j`.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseStream;

/// Largest Majorana count accepted without `allow_large`.
pub const DEFAULT_MAX_MAJORANA: usize = 20;
/// Hard ceiling even with `allow_large` (d = 8192).
pub const LARGE_MAX_MAJORANA: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajoranaNormalization {
    /// `{χ_i, χ_j} = δ_ij`, so `χ² = 1/2`.
    #[default]
    Unit,
    /// `{χ_i, χ_j} = 2δ_ij`, so `χ² = 1`. Energies are 4× those of `Unit`.
    Two,
}

impl MajoranaNormalization {
    /// Prefactor of a product of four Majoranas relative to Pauli strings.
    pub fn quartic_factor(self) -> f64 {
        match self {
            MajoranaNormalization::Unit => 0.25,
            MajoranaNormalization::Two => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParitySector {
    #[default]
    Full,
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Syk,
    Gue,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    Goe,
    Gue,
    Gse,
    Unknown,
}

impl SymmetryClass {
    /// Random-matrix class of one parity block of SYK_4 with `n` Majoranas.
    pub fn for_syk(n_majorana: usize) -> Self {
        match n_majorana % 8 {
            0 => SymmetryClass::Goe,
            2 | 6 => SymmetryClass::Gue,
            4 => SymmetryClass::Gse,
            _ => SymmetryClass::Unknown,
        }
    }

    /// Large-matrix mean of the spacing ratio `min(s_n, s_{n+1}) / max(..)`.
    pub fn mean_spacing_ratio(self) -> Option<f64> {
        match self {
            SymmetryClass::Goe => Some(0.5307),
            SymmetryClass::Gue => Some(0.5996),
            SymmetryClass::Gse => Some(0.6744),
            SymmetryClass::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SykParameters {
    pub n_majorana: usize,
    pub coupling_scale: f64,
    pub seed: u64,
    #[serde(default)]
    pub normalization: MajoranaNormalization,
    #[serde(default)]
    pub sector: ParitySector,
    /// Permit `N` up to [`LARGE_MAX_MAJORANA`].
    #[serde(default)]
    pub allow_large: bool,
}

impl SykParameters {
    pub fn new(n_majorana: usize, seed: u64) -> Self {
        SykParameters {
            n_majorana,
            coupling_scale: 1.0,
            seed,
            normalization: MajoranaNormalization::default(),
            sector: ParitySector::default(),
            allow_large: false,
        }
    }

    pub fn with_normalization(mut self, normalization: MajoranaNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_sector(mut self, sector: ParitySector) -> Self {
        self.sector = sector;
        self
    }

    pub fn max_majorana(&self) -> usize {
        if self.allow_large {
            LARGE_MAX_MAJORANA
        } else {
            DEFAULT_MAX_MAJORANA
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_majorana;
        if n < 4 || n % 2 != 0 {
            return Err(Error::param("n_majorana", format!("must be even and >= 4, got {n}")));
        }
        if !(self.coupling_scale > 0.0) || !self.coupling_scale.is_finite() {
            return Err(Error::param(
                "coupling_scale",
                format!("must be positive, got {}", self.coupling_scale),
            ));
        }
        if n > self.max_majorana() {
            return Err(Error::Resource(format!(
                "N = {n} exceeds the cap N <= {} (d = 2^{}){}",
                self.max_majorana(),
                self.max_majorana() / 2,
                if self.allow_large { "" } else { "; set allow_large for up to N = 26" }
            )));
        }
        if n > DEFAULT_MAX_MAJORANA {
            log::warn!(
                "building SYK with N = {n}: dense d = {} matrix needs {} MiB",
                1usize << (n / 2),
                (16usize << n) >> 20
            );
        }
        Ok(())
    }

    pub fn hilbert_dim(&self) -> usize {
        1usize << (self.n_majorana / 2)
    }

    /// Dimension of the matrix actually built (halved for a parity sector).
    pub fn matrix_dim(&self) -> usize {
        match self.sector {
            ParitySector::Full => self.hilbert_dim(),
            _ => self.hilbert_dim() / 2,
        }
    }

    /// Coupling variance `3! J² / N³`.
    pub fn coupling_variance(&self) -> f64 {
        6.0 * self.coupling_scale * self.coupling_scale / (self.n_majorana as f64).powi(3)
    }

    /// Exact `Tr H² / d` averaged over couplings:
    /// `C(N,4) · 3!J²/N³ · (quartic factor)²`.
    pub fn energy_variance(&self) -> f64 {
        let f = self.normalization.quartic_factor();
        binomial(self.n_majorana, 4) as f64 * self.coupling_variance() * f * f
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Gaussian couplings `J_klmn`, `1 <= k < l < m < n <= N`, in lexicographic
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SykCouplings {
    n_majorana: usize,
    values: Vec<f64>,
}

impl SykCouplings {
    pub fn from_values(n_majorana: usize, values: Vec<f64>) -> Result<Self> {
        let expected = binomial(n_majorana, 4);
        if values.len() != expected {
            return Err(Error::Validation(format!(
                "expected {expected} couplings for N = {n_majorana}, got {}",
                values.len()
            )));
        }
        Ok(SykCouplings { n_majorana, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `((k, l, m, n), J)` with 1-based indices.
    pub fn iter(&self) -> impl Iterator<Item = ([usize; 4], f64)> + '_ {
        quartets(self.n_majorana).zip(self.values.iter().copied())
    }

    pub fn get(&self, idx: [usize; 4]) -> Option<f64> {
        self.iter().find(|(q, _)| *q == idx).map(|(_, v)| v)
    }
}

fn quartets(n: usize) -> impl Iterator<Item = [usize; 4]> {
    (1..=n).flat_map(move |k| {
        (k + 1..=n).flat_map(move |l| {
            (l + 1..=n).flat_map(move |m| (m + 1..=n).map(move |q| [k, l, m, q]))
        })
    })
}

pub fn sample_syk_couplings(params: &SykParameters, stream: &mut NoiseStream) -> Result<SykCouplings> {
    params.validate()?;
    let sigma = params.coupling_variance().sqrt();
    let count = binomial(params.n_majorana, 4);
    let values = (0..count).map(|_| sigma * stream.gaussian()).collect();
    Ok(SykCouplings {
        n_majorana: params.n_majorana,
        values,
    })
}

/// Apply Majorana `index` (0-based) to basis state `s`; returns the new state
/// and the phase as a power of `i`.
#[inline]
fn apply_majorana(index: usize, s: usize) -> (usize, u32) {
    let site = index / 2;
    let string_parity = (s & ((1usize << site) - 1)).count_ones() & 1;
    let bit = ((s >> site) & 1) as u32;
    // Z-string contributes (-1)^parity = i^(2·parity)
    let mut power = 2 * string_parity;
    if index % 2 == 1 {
        // Y|0> = i|1>, Y|1> = -i|0>
        power += 1 + 2 * bit;
    }
    (s ^ (1usize << site), power % 4)
}

const I_POWERS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

fn parity_index_map(params: &SykParameters) -> (Vec<usize>, Vec<usize>) {
    let d = params.hilbert_dim();
    let keep: Vec<usize> = (0..d)
        .filter(|s| match params.sector {
            ParitySector::Full => true,
            ParitySector::Even => s.count_ones() % 2 == 0,
            ParitySector::Odd => s.count_ones() % 2 == 1,
        })
        .collect();
    let mut position = vec![usize::MAX; d];
    for (k, &s) in keep.iter().enumerate() {
        position[s] = k;
    }
    (keep, position)
}

/// Dense SYK matrix in the computational basis (restricted to the configured
/// parity sector).
pub fn build_syk_hamiltonian(params: &SykParameters, couplings: &SykCouplings) -> Result<DMatrix<Complex64>> {
    params.validate()?;
    if couplings.n_majorana != params.n_majorana {
        return Err(Error::Validation(format!(
            "couplings are for N = {}, parameters for N = {}",
            couplings.n_majorana, params.n_majorana
        )));
    }
    let (basis, position) = parity_index_map(params);
    let dim = basis.len();
    let factor = params.normalization.quartic_factor();
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for (q, j) in couplings.iter() {
        let amp = j * factor;
        for (col, &s) in basis.iter().enumerate() {
            // χ_k χ_l χ_m χ_n |s>: rightmost acts first
            let mut state = s;
            let mut power = 0;
            for &idx in q.iter().rev() {
                let (next, p) = apply_majorana(idx - 1, state);
                state = next;
                power += p;
            }
            let row = position[state];
            debug_assert!(row != usize::MAX, "quartic term left the parity sector");
            h[(row, col)] += I_POWERS[(power % 4) as usize] * amp;
        }
    }
    Ok(h)
}

/// Global parity `(-1)^{popcount}` of each basis state in the built matrix.
pub fn parity_diagonal(params: &SykParameters) -> Vec<f64> {
    parity_index_map(params)
        .0
        .iter()
        .map(|s| if s.count_ones() % 2 == 0 { 1.0 } else { -1.0 })
        .collect()
}

pub fn max_hermiticity_defect(h: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Sorted eigenvalues of a dense Hermitian matrix. Eigenvectors are not
/// kept; every downstream quantity needs only the energies.
pub fn eigenvalues(h: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if h.nrows() != h.ncols() || h.nrows() == 0 {
        return Err(Error::Validation(format!(
            "expected a non-empty square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let defect = max_hermiticity_defect(h);
    if !(defect <= 1e-10) {
        return Err(Error::Validation(format!(
            "matrix is not Hermitian: max |H_ij - conj(H_ji)| = {defect:e}"
        )));
    }
    let mut e: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    Ok(e)
}

/// Energies of one disorder realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRealization {
    energies: Arc<[f64]>,
    pub source: SpectrumSource,
    pub symmetry_class: SymmetryClass,
    pub disorder_seed: u64,
    #[serde(default)]
    pub disorder_index: u64,
    #[serde(default)]
    pub n_majorana: Option<usize>,
}

impl SpectrumRealization {
    /// Validates that `energies` is non-empty, finite and ascending.
    pub fn new(energies: Vec<f64>, source: SpectrumSource, symmetry_class: SymmetryClass, disorder_seed: u64) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::Validation("spectrum is empty".into()));
        }
        if let Some(bad) = energies.iter().find(|e| !e.is_finite()) {
            return Err(Error::Validation(format!("non-finite energy {bad}")));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation("energies must be sorted ascending".into()));
        }
        Ok(SpectrumRealization {
            energies: energies.into(),
            source,
            symmetry_class,
            disorder_seed,
            disorder_index: 0,
            n_majorana: None,
        })
    }

    /// Sorts first; for external or hand-written spectra.
    pub fn from_unsorted(mut energies: Vec<f64>) -> Result<Self> {
        energies.sort_by(|a, b| a.total_cmp(b));
        Self::new(energies, SpectrumSource::File, SymmetryClass::Unknown, 0)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn shared_energies(&self) -> Arc<[f64]> {
        self.energies.clone()
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }
}

/// Diagonalize `h` and wrap the result with provenance.
pub fn diagonalize(h: &DMatrix<Complex64>, source: SpectrumSource, symmetry_class: SymmetryClass, disorder_seed: u64) -> Result<SpectrumRealization> {
    SpectrumRealization::new(eigenvalues(h)?, source, symmetry_class, disorder_seed)
}

/// Couplings, matrix and spectrum for one SYK realization drawn from `stream`.
pub fn syk_spectrum(params: &SykParameters, stream: &mut NoiseStream) -> Result<SpectrumRealization> {
    let couplings = sample_syk_couplings(params, stream)?;
    let h = build_syk_hamiltonian(params, &couplings)?;
    let mut s = diagonalize(&h, SpectrumSource::Syk, SymmetryClass::for_syk(params.n_majorana), params.seed)?;
    s.n_majorana = Some(params.n_majorana);
    Ok(s)
}

/// Eigenvalues of a GUE matrix whose semicircle has radius `width`.
/// Off-diagonal entries have `E|H_ij|² = σ²` with `σ = width / (2√d)`; the
/// diagonal is real with variance `σ²`.
pub fn sample_gue_spectrum(dim: usize, width: f64, stream: &mut NoiseStream) -> Result<SpectrumRealization> {
    if dim < 2 {
        return Err(Error::param("dim", format!("GUE dimension must be >= 2, got {dim}")));
    }
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::param("width", format!("must be positive, got {width}")));
    }
    let sigma = width / (2.0 * (dim as f64).sqrt());
    let off = sigma / 2f64.sqrt();
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        h[(i, i)] = Complex64::new(sigma * stream.gaussian(), 0.0);
        for j in i + 1..dim {
            let z = Complex64::new(off * stream.gaussian(), off * stream.gaussian());
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    diagonalize(&h, SpectrumSource::Gue, SymmetryClass::Gue, stream.key().master_seed)
}

/// Large-N SYK density of states `√(2/(πN)) · d · exp(-2E²/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosModel {
    pub n_majorana: usize,
    pub dim: usize,
}

impl DosModel {
    pub fn for_majoranas(n_majorana: usize) -> Self {
        DosModel {
            n_majorana,
            dim: 1usize << (n_majorana / 2),
        }
    }
}

pub fn syk_dos(energy: f64, model: &DosModel) -> f64 {
    let n = model.n_majorana as f64;
    (2.0 / (std::f64::consts::PI * n)).sqrt() * model.dim as f64 * (-2.0 * energy * energy / n).exp()
}

/// Spacing ratios `min(s_n, s_{n+1}) / max(s_n, s_{n+1})` of a sorted
/// spectrum, after merging levels closer than `degeneracy_tol`.
pub fn spacing_ratios(energies: &[f64], degeneracy_tol: f64) -> Vec<f64> {
    let mut levels: Vec<f64> = Vec::with_capacity(energies.len());
    for &e in energies {
        match levels.last() {
            Some(&last) if (e - last).abs() <= degeneracy_tol => {}
            _ => levels.push(e),
        }
    }
    levels
        .windows(3)
        .filter_map(|w| {
            let (a, b) = (w[1] - w[0], w[2] - w[1]);
            let hi = a.max(b);
            (hi > 0.0).then(|| a.min(b) / hi)
        })
        .collect()
}

const MAGIC: &[u8; 8] = b"SFFSPEC1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SpectrumHeader {
    version: u32,
    source: SpectrumSource,
    #[serde(rename = "N")]
    n_majorana: Option<usize>,
    d: usize,
    seed: u64,
    #[serde(default)]
    disorder_index: u64,
    symmetry_class: SymmetryClass,
}

/// Binary spectrum file: `"SFFSPEC1"`, a little-endian `u32` byte length, a
/// JSON metadata block, then `d` little-endian binary64 energies.
pub fn save_spectrum(path: &Path, spectrum: &SpectrumRealization) -> Result<()> {
    let header = SpectrumHeader {
        version: FORMAT_VERSION,
        source: spectrum.source,
        n_majorana: spectrum.n_majorana,
        d: spectrum.dim(),
        seed: spectrum.disorder_seed,
        disorder_index: spectrum.disorder_index,
        symmetry_class: spectrum.symmetry_class,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for e in spectrum.energies() {
        out.write_all(&e.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_spectrum(path: &Path) -> Result<SpectrumRealization> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |offset: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        location: format!("byte offset {offset}"),
        reason,
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(fail(0, "missing SFFSPEC1 magic".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let json_end = 12 + len;
    if bytes.len() < json_end {
        return Err(fail(12, format!("metadata block of {len} bytes is truncated")));
    }
    let header: SpectrumHeader =
        serde_json::from_slice(&bytes[12..json_end]).map_err(|e| fail(12 + e.column(), e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(fail(12, format!("unsupported format version {}", header.version)));
    }
    let payload = &bytes[json_end..];
    if payload.len() != header.d * 8 {
        return Err(fail(
            json_end,
            format!("expected {} bytes of energies, found {}", header.d * 8, payload.len()),
        ));
    }
    let energies: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut s = SpectrumRealization::new(energies, header.source, header.symmetry_class, header.seed)
        .map_err(|e| fail(json_end, e.to_string()))?;
    s.n_majorana = header.n_majorana;
    s.disorder_index = header.disorder_index;
    Ok(s)
}

/// Plain-text import: one energy per line, `#` starts a comment.
pub fn import_csv(path: &Path) -> Result<SpectrumRealization> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut energies = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let field = body.split(',').next().unwrap_or("").trim();
        let e: f64 = field.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}", lineno + 1),
            reason: format!("not a number: {field:?}"),
        })?;
        energies.push(e);
    }
    SpectrumRealization::from_unsorted(energies).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: "end of file".into(),
        reason: e.to_string(),
    })
}

impl fmt::Display for SpectrumRealization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.energies();
        write!(
            f,
            "{:?} spectrum, d = {}, E in [{:.4}, {:.4}]",
            self.source,
            e.len(),
            e[0],
            e[e.len() - 1]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{derive_stream, StreamRole};

    fn stream(seed: u64) -> NoiseStream {
        derive_stream(seed, StreamRole::Disorder, &[])
    }

    #[test]
    fn coupling_count_and_determinism() {
        let p = SykParameters::new(8, 3);
        let a = sample_syk_couplings(&p, &mut stream(3)).unwrap();
        let b = sample_syk_couplings(&p, &mut stream(3)).unwrap();
        assert_eq!(a.len(), 70);
        assert_eq!(a, b);
        assert_eq!(a.iter().next().unwrap().0, [1, 2, 3, 4]);
        assert_eq!(a.iter().last().unwrap().0, [5, 6, 7, 8]);
    }

    #[test]
    fn coupling_variance_at_n26() {
        let p = SykParameters::new(26, 0);
        assert!((p.coupling_variance() - 3.4139e-4).abs() < 5e-8);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            SykParameters::new(2, 0).validate(),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(SykParameters::new(7, 0).validate().is_err());
        assert!(matches!(SykParameters::new(22, 0).validate(), Err(Error::Resource(_))));
        let mut big = SykParameters::new(26, 0);
        big.allow_large = true;
        assert!(big.validate().is_ok());
        big.n_majorana = 28;
        assert!(matches!(big.validate(), Err(Error::Resource(_))));
    }

    #[test]
    fn diagonal_and_pauli_inputs() {
        let mut h = DMatrix::<Complex64>::zeros(3, 3);
        h[(0, 0)] = 3.0.into();
        h[(1, 1)] = 1.0.into();
        h[(2, 2)] = 2.0.into();
        assert_eq!(eigenvalues(&h).unwrap(), vec![1.0, 2.0, 3.0]);
        let x = DMatrix::from_row_slice(2, 2, &[0.0.into(), 1.0.into(), 1.0.into(), Complex64::new(0.0, 0.0)]);
        let e = eigenvalues(&x).unwrap();
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut h = DMatrix::<Complex64>::zeros(2, 2);
        h[(0, 1)] = 1.0.into();
        assert!(matches!(eigenvalues(&h), Err(Error::Validation(_))));
    }

    #[test]
    fn spacing_ratio_of_picket_fence() {
        let e: Vec<f64> = (0..10).map(|k| k as f64).collect();
        assert!(spacing_ratios(&e, 1e-12).iter().all(|r| (*r - 1.0).abs() < 1e-15));
        let doubled: Vec<f64> = e.iter().flat_map(|x| [*x, *x]).collect();
        assert_eq!(spacing_ratios(&doubled, 1e-9).len(), 8);
    }

    #[test]
    fn dos_values() {
        let m = DosModel { n_majorana: 26, dim: 8192 };
        let direct = (2.0 / (26.0 * std::f64::consts::PI)).sqrt() * 8192.0;
        assert!((syk_dos(0.0, &m) - direct).abs() < 1e-9);
        assert!((syk_dos(0.0, &m) / 1282.5 - 1.0).abs() < 1e-3);
        assert!(syk_dos(1e3, &m) == 0.0);
    }

    #[test]
    fn csv_import_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "# header\n0.5\n-1.0 # inline\n\nabc\n").unwrap();
        match import_csv(&p) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 5"),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&p, "# header\n0.5\n-1.0 # inline\n").unwrap();
        assert_eq!(import_csv(&p).unwrap().energies(), &[-1.0, 0.5]);
    }
}
