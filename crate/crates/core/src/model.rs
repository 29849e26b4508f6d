//! System configuration, time-hopping sequences and chip-rate spreading
//! algebra.
//!
//! Chips are indexed from 0. Chip `j` belongs to frame `j / N_c` and sits
//! at offset `j % N_c` inside it; the chip is active when that offset equals
//! the frame's hop slot. Every spreading vector therefore carries exactly one
//! unit-magnitude chip per frame and has squared norm `N_f`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::{Error, Result};

/// Whether per-pulse polarities are random (`Coded`) or all `+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coding {
    Coded,
    Uncoded,
}

impl fmt::Display for Coding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coding::Coded => "coded",
            Coding::Uncoded => "uncoded",
        })
    }
}

impl FromStr for Coding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coded" => Ok(Coding::Coded),
            "uncoded" => Ok(Coding::Uncoded),
            other => Err(Error::InvalidArgument(format!(
                "unknown coding mode {other:?} (expected \"coded\" or \"uncoded\")"
            ))),
        }
    }
}

/// All divisors of `n` in increasing order.
pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// Validated system parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    total_gain: usize,
    pulses_per_symbol: usize,
    chips_per_frame: usize,
    energies: Vec<f64>,
    noise_sigma: f64,
    coding: Coding,
}

impl SystemConfig {
    /// Builds a configuration from the total gain and the pulse rate.
    pub fn new(
        total_gain: usize,
        pulses_per_symbol: usize,
        energies: Vec<f64>,
        noise_sigma: f64,
        coding: Coding,
    ) -> Result<Self> {
        if total_gain == 0 {
            return Err(Error::InvalidConfig("total gain must be positive".into()));
        }
        if pulses_per_symbol == 0 || !total_gain.is_multiple_of(pulses_per_symbol) {
            return Err(Error::NotADivisor {
                pulse_rate: pulses_per_symbol,
                total_gain,
                valid: divisors(total_gain),
            });
        }
        Self::from_parts(
            total_gain,
            pulses_per_symbol,
            total_gain / pulses_per_symbol,
            energies,
            noise_sigma,
            coding,
        )
    }

    /// Builds a configuration from all three gains; `N` must equal `N_f * N_c`.
    pub fn from_parts(
        total_gain: usize,
        pulses_per_symbol: usize,
        chips_per_frame: usize,
        energies: Vec<f64>,
        noise_sigma: f64,
        coding: Coding,
    ) -> Result<Self> {
        if pulses_per_symbol == 0 || chips_per_frame == 0 {
            return Err(Error::InvalidConfig(
                "pulses per symbol and chips per frame must be positive".into(),
            ));
        }
        if pulses_per_symbol.checked_mul(chips_per_frame) != Some(total_gain) {
            return Err(Error::InvalidConfig(format!(
                "N = {total_gain} is not N_f * N_c = {pulses_per_symbol} * {chips_per_frame}"
            )));
        }
        if energies.is_empty() {
            return Err(Error::InvalidConfig("at least one user is required".into()));
        }
        if let Some(e) = energies.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "user energies must be positive and finite, got {e}"
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be nonnegative and finite, got {noise_sigma}"
            )));
        }
        Ok(SystemConfig {
            total_gain,
            pulses_per_symbol,
            chips_per_frame,
            energies,
            noise_sigma,
            coding,
        })
    }

    pub fn total_gain(&self) -> usize {
        self.total_gain
    }

    pub fn pulses_per_symbol(&self) -> usize {
        self.pulses_per_symbol
    }

    pub fn chips_per_frame(&self) -> usize {
        self.chips_per_frame
    }

    pub fn num_users(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn coding(&self) -> Coding {
        self.coding
    }

    /// Same system with a different split of the total gain.
    pub fn with_pulse_rate(&self, pulses_per_symbol: usize) -> Result<Self> {
        Self::new(
            self.total_gain,
            pulses_per_symbol,
            self.energies.clone(),
            self.noise_sigma,
            self.coding,
        )
    }

    pub fn with_energies(&self, energies: Vec<f64>) -> Result<Self> {
        Self::new(
            self.total_gain,
            self.pulses_per_symbol,
            energies,
            self.noise_sigma,
            self.coding,
        )
    }

    pub fn with_coding(&self, coding: Coding) -> Self {
        SystemConfig { coding, ..self.clone() }
    }

    pub fn amplitudes(&self) -> AmplitudeMatrix {
        AmplitudeMatrix::new(&self.energies, self.pulses_per_symbol)
    }
}

/// Per-frame hop slots and polarities of one user for one symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoppingSequence {
    slots: Vec<usize>,
    polarities: Vec<i8>,
}

impl HoppingSequence {
    pub fn new(slots: Vec<usize>, polarities: Vec<i8>, chips_per_frame: usize) -> Result<Self> {
        if slots.len() != polarities.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} slots but {} polarities",
                slots.len(),
                polarities.len()
            )));
        }
        if let Some(c) = slots.iter().find(|&&c| c >= chips_per_frame) {
            return Err(Error::InvalidArgument(format!(
                "hop slot {c} outside [0, {})",
                chips_per_frame
            )));
        }
        if polarities.iter().any(|&d| d != 1 && d != -1) {
            return Err(Error::InvalidArgument("polarities must be +1 or -1".into()));
        }
        Ok(HoppingSequence { slots, polarities })
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn polarities(&self) -> &[i8] {
        &self.polarities
    }

    pub fn num_frames(&self) -> usize {
        self.slots.len()
    }

    /// Cross-correlation computed frame by frame from the hop slots; equal to
    /// [`cross_correlation`] of the two spreading vectors.
    pub fn correlate(&self, other: &HoppingSequence) -> i64 {
        self.slots
            .iter()
            .zip(&self.polarities)
            .zip(other.slots.iter().zip(&other.polarities))
            .filter(|((c1, _), (c2, _))| c1 == c2)
            .map(|((_, d1), (_, d2))| i64::from(d1 * d2))
            .sum()
    }
}

/// Draws the hopping sequence of `user` for one symbol.
///
/// Slots are i.i.d. uniform on `[0, N_c)`; polarities are equiprobable
/// `±1` when coded and all `+1` otherwise. The user index only selects
/// which stream the caller passes in; it is checked against `K`.
pub fn gen_hopping<R: Rng + ?Sized>(config: &SystemConfig, user: usize, rng: &mut R) -> HoppingSequence {
    assert!(user < config.num_users(), "user {user} out of range");
    let nc = config.chips_per_frame();
    let nf = config.pulses_per_symbol();
    let slots = (0..nf).map(|_| rng.random_range(0..nc)).collect();
    let polarities = match config.coding() {
        Coding::Coded => (0..nf).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        Coding::Uncoded => vec![1; nf],
    };
    HoppingSequence { slots, polarities }
}

/// Ternary chip sequence of one user for one symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpreadingVector {
    chips: Vec<i8>,
    chips_per_frame: usize,
}

impl SpreadingVector {
    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn chips_per_frame(&self) -> usize {
        self.chips_per_frame
    }

    pub fn squared_norm(&self) -> i64 {
        self.chips.iter().map(|&c| i64::from(c * c)).sum()
    }

    /// `(chip index, polarity)` of every active chip.
    pub fn pulses(&self) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.chips
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(j, &c)| (j, c))
    }
}

pub fn build_spreading_vector(seq: &HoppingSequence, config: &SystemConfig) -> SpreadingVector {
    let nc = config.chips_per_frame();
    assert_eq!(
        seq.num_frames(),
        config.pulses_per_symbol(),
        "hopping sequence length does not match N_f"
    );
    let mut chips = vec![0i8; config.total_gain()];
    for (frame, (&slot, &d)) in seq.slots.iter().zip(&seq.polarities).enumerate() {
        chips[frame * nc + slot] = d;
    }
    SpreadingVector {
        chips,
        chips_per_frame: nc,
    }
}

/// Un-normalized cross-correlation `Σ_j a_j b_j`.
pub fn cross_correlation(a: &SpreadingVector, b: &SpreadingVector) -> Result<i64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "spreading vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.chips.iter().zip(&b.chips).map(|(&x, &y)| i64::from(x * y)).sum())
}

/// The `N x K` matrix whose columns are the users' spreading vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpreadingMatrix {
    columns: Vec<SpreadingVector>,
}

impl SpreadingMatrix {
    pub fn new(columns: Vec<SpreadingVector>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::DimensionMismatch("no columns".into()));
        };
        let n = first.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("spreading vectors of unequal length".into()));
        }
        Ok(SpreadingMatrix { columns })
    }

    /// Draws fresh sequences for every user, taking user `k`'s randomness
    /// from `rng_for(k)`.
    pub fn generate<R: Rng>(config: &SystemConfig, mut rng_for: impl FnMut(usize) -> R) -> Self {
        let columns = (0..config.num_users())
            .map(|k| build_spreading_vector(&gen_hopping(config, k, &mut rng_for(k)), config))
            .collect();
        SpreadingMatrix { columns }
    }

    pub fn columns(&self) -> &[SpreadingVector] {
        &self.columns
    }

    pub fn column(&self, k: usize) -> &SpreadingVector {
        &self.columns[k]
    }

    pub fn num_chips(&self) -> usize {
        self.columns[0].len()
    }

    pub fn num_users(&self) -> usize {
        self.columns.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_chips(), self.num_users(), |j, k| {
            f64::from(self.columns[k].chips[j])
        })
    }
}

/// `R = SᵀS`; symmetric with `N_f` on the diagonal.
pub fn correlation_matrix(s: &SpreadingMatrix) -> DMatrix<i64> {
    let k = s.num_users();
    let mut r = DMatrix::<i64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = cross_correlation(&s.columns[a], &s.columns[b]).expect("columns share a length by construction");
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    r
}

/// Diagonal amplitude matrix, `a_k = sqrt(E_k / N_f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeMatrix {
    amplitudes: Vec<f64>,
}

impl AmplitudeMatrix {
    pub fn new(energies: &[f64], pulses_per_symbol: usize) -> Self {
        let nf = pulses_per_symbol as f64;
        AmplitudeMatrix {
            amplitudes: energies.iter().map(|e| (e / nf).sqrt()).collect(),
        }
    }

    pub fn from_amplitudes(amplitudes: Vec<f64>) -> Self {
        AmplitudeMatrix { amplitudes }
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

/// Transmitted BPSK symbols, one per user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolVector(Vec<i8>);

impl SymbolVector {
    pub fn new(symbols: Vec<i8>) -> Result<Self> {
        if symbols.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::InvalidArgument("symbols must be +1 or -1".into()));
        }
        Ok(SymbolVector(symbols))
    }

    pub fn random<R: Rng + ?Sized>(num_users: usize, rng: &mut R) -> Self {
        SymbolVector(
            (0..num_users)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
