//! Seeded Monte Carlo BER estimation.
//!
//! Trial `t` of a plan draws everything from `StreamKey::new(seed).child(t)`:
//! each user's hopping sequence from its own user stream, the symbols and
//! the noise from dedicated streams. Trials run in fixed-size blocks whose
//! results are reduced in block order, so an estimate never depends on the
//! number of worker threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::analysis::{ber_isi_mf_general, ber_two_user_uncoded_mf, ber_uncoded_flat_mf, BerPrediction};
use crate::channel::{
    filtered_signatures, matched_statistics, matched_statistics_filtered, snr_to_energy, synth_received_flat,
    synth_received_selective, ChannelImpulseResponse,
};
use crate::detectors::{detect_mf, detect_ml, detect_mmse, detect_zf, DetectorKind, Inversion, ML_MAX_USERS};
use crate::model::{correlation_matrix, AmplitudeMatrix, Coding, SpreadingMatrix, SymbolVector, SystemConfig};
use crate::rng::{tags, StreamKey};
use crate::{Error, Result};

/// Trials per work block.
pub const BLOCK_TRIALS: u64 = 2048;
/// Blocks handed to the thread pool at once.
const WAVE_BLOCKS: u64 = 64;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
pub const DEFAULT_MAX_ERRORS: u64 = 2000;

#[derive(Clone, Debug, PartialEq)]
pub enum ChannelModel {
    Flat,
    Selective(ChannelImpulseResponse),
}

impl ChannelModel {
    /// `[1.0]` collapses to `Flat`.
    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        let h = ChannelImpulseResponse::new(taps)?;
        Ok(if h.taps() == [1.0] {
            ChannelModel::Flat
        } else {
            ChannelModel::Selective(h)
        })
    }

    pub fn taps(&self) -> Vec<f64> {
        match self {
            ChannelModel::Flat => vec![1.0],
            ChannelModel::Selective(h) => h.taps().to_vec(),
        }
    }
}

/// What the matched filter correlates against on a selective channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MfMode {
    /// Raw spreading vectors at first-path timing.
    #[default]
    FirstPath,
    /// Channel-filtered spreading vectors (full channel knowledge).
    ChannelMatched,
}

impl FromStr for MfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-path" => Ok(MfMode::FirstPath),
            "channel-matched" => Ok(MfMode::ChannelMatched),
            other => Err(Error::InvalidArgument(format!(
                "unknown MF mode {other:?} (expected first-path or channel-matched)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialPlan {
    pub config: SystemConfig,
    pub channel: ChannelModel,
    pub detector: DetectorKind,
    pub mf_mode: MfMode,
    pub target_user: usize,
    pub num_trials: u64,
    pub seed: u64,
    /// Stop after the block in which this many errors have accumulated.
    pub max_errors: Option<u64>,
}

impl TrialPlan {
    pub fn new(config: SystemConfig, detector: DetectorKind) -> Self {
        TrialPlan {
            config,
            channel: ChannelModel::Flat,
            detector,
            mf_mode: MfMode::FirstPath,
            target_user: 0,
            num_trials: 100_000,
            seed: 0,
            max_errors: Some(DEFAULT_MAX_ERRORS),
        }
    }

    pub fn channel(mut self, channel: ChannelModel) -> Self {
        self.channel = channel;
        self
    }

    pub fn trials(mut self, num_trials: u64) -> Self {
        self.num_trials = num_trials;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_errors(mut self, max_errors: Option<u64>) -> Self {
        self.max_errors = max_errors;
        self
    }

    pub fn target_user(mut self, user: usize) -> Self {
        self.target_user = user;
        self
    }

    pub fn mf_mode(mut self, mode: MfMode) -> Self {
        self.mf_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trials == 0 {
            return Err(Error::InvalidArgument("a plan needs at least one trial".into()));
        }
        if self.target_user >= self.config.num_users() {
            return Err(Error::InvalidArgument(format!(
                "target user {} but only {} users",
                self.target_user,
                self.config.num_users()
            )));
        }
        if self.detector == DetectorKind::Ml && self.config.num_users() > ML_MAX_USERS {
            return Err(Error::MlInfeasible(self.config.num_users()));
        }
        if self.max_errors == Some(0) {
            return Err(Error::InvalidArgument("max_errors must be positive".into()));
        }
        Ok(())
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BerEstimate {
    pub errors: u64,
    pub trials: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Trials where ZF/MMSE had to fall back to a pseudo-inverse.
    pub pseudo_inverse_trials: u64,
}

impl BerEstimate {
    pub fn from_counts(errors: u64, trials: u64, pseudo_inverse_trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, trials, Z_95);
        BerEstimate {
            errors,
            trials,
            ber: errors as f64 / trials as f64,
            ci_low,
            ci_high,
            pseudo_inverse_trials,
        }
    }

    /// Binomial standard error of the point estimate.
    pub fn std_error(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.trials as f64).sqrt()
    }

    pub fn overlaps(&self, other: &BerEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

struct TrialContext<'a> {
    plan: &'a TrialPlan,
    amplitudes: AmplitudeMatrix,
    key: StreamKey,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    errors: u64,
    trials: u64,
    pseudo_inverse: u64,
}

impl<'a> TrialContext<'a> {
    fn new(plan: &'a TrialPlan) -> Self {
        TrialContext {
            plan,
            amplitudes: plan.config.amplitudes(),
            key: StreamKey::new(plan.seed),
        }
    }

    /// Returns (bit error, pseudo-inverse used).
    fn run(&self, trial: u64) -> (bool, bool) {
        let plan = self.plan;
        let config = &plan.config;
        let key = self.key.child(trial);
        let s = SpreadingMatrix::generate(config, |k| key.user(k).rng());
        let b = SymbolVector::random(config.num_users(), &mut key.child(tags::SYMBOLS).rng());
        let sigma = config.noise_sigma();
        let mut noise = key.child(tags::NOISE).rng();
        let a = &self.amplitudes;

        let (y, r) = match &plan.channel {
            ChannelModel::Flat => {
                let rx = synth_received_flat(&s, a, &b, sigma, &mut noise).expect("validated dimensions");
                let y = matched_statistics(&rx, &s).expect("validated dimensions");
                let r = (plan.detector != DetectorKind::Mf).then(|| correlation_matrix(&s).map(|x| x as f64));
                (y, r)
            }
            ChannelModel::Selective(h) => {
                let rx = synth_received_selective(&s, a, &b, h, sigma, &mut noise).expect("validated dimensions");
                if plan.detector == DetectorKind::Mf && plan.mf_mode == MfMode::FirstPath {
                    (matched_statistics(&rx, &s).expect("validated dimensions"), None)
                } else {
                    let g = filtered_signatures(&s, h);
                    let y = matched_statistics_filtered(&rx, &g).expect("validated dimensions");
                    let r: DMatrix<f64> = g.transpose() * &g;
                    (y, Some(r))
                }
            }
        };

        let (decision, inversion) = match plan.detector {
            DetectorKind::Mf => (detect_mf(&y), Inversion::Direct),
            DetectorKind::Zf => {
                let d = detect_zf(&y, r.as_ref().expect("computed for ZF")).expect("validated dimensions");
                (d.decision, d.inversion)
            }
            DetectorKind::Mmse => {
                let d =
                    detect_mmse(&y, r.as_ref().expect("computed for MMSE"), a, sigma).expect("validated dimensions");
                (d.decision, d.inversion)
            }
            DetectorKind::Ml => (
                detect_ml(&y, r.as_ref().expect("computed for ML"), a).expect("validated plan"),
                Inversion::Direct,
            ),
        };
        let t = plan.target_user;
        (
            decision.as_slice()[t] != b.as_slice()[t],
            inversion == Inversion::PseudoInverse,
        )
    }

    fn block(&self, index: u64) -> Tally {
        let start = index * BLOCK_TRIALS;
        let end = (start + BLOCK_TRIALS).min(self.plan.num_trials);
        let mut tally = Tally::default();
        for trial in start..end {
            let (err, pinv) = self.run(trial);
            tally.errors += u64::from(err);
            tally.pseudo_inverse += u64::from(pinv);
            tally.trials += 1;
        }
        tally
    }
}

#[cfg(feature = "parallel")]
fn run_wave(ctx: &TrialContext<'_>, blocks: std::ops::Range<u64>) -> Vec<Tally> {
    use rayon::prelude::*;
    blocks.into_par_iter().map(|i| ctx.block(i)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_wave(ctx: &TrialContext<'_>, blocks: std::ops::Range<u64>) -> Vec<Tally> {
    blocks.map(|i| ctx.block(i)).collect()
}

/// Estimates the target user's BER for a plan.
pub fn run_ber(plan: &TrialPlan) -> Result<BerEstimate> {
    plan.validate()?;
    let ctx = TrialContext::new(plan);
    let num_blocks = plan.num_trials.div_ceil(BLOCK_TRIALS);
    let mut total = Tally::default();
    let mut next = 0;
    'outer: while next < num_blocks {
        let end = (next + WAVE_BLOCKS).min(num_blocks);
        for tally in run_wave(&ctx, next..end) {
            total.errors += tally.errors;
            total.trials += tally.trials;
            total.pseudo_inverse += tally.pseudo_inverse;
            if plan.max_errors.is_some_and(|m| total.errors >= m) {
                break 'outer;
            }
        }
        next = end;
    }
    Ok(BerEstimate::from_counts(
        total.errors,
        total.trials,
        total.pseudo_inverse,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    PulseRate,
    SnrDb,
    NumUsers,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PulseRate => "pulse_rate",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::NumUsers => "num_users",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SweepAxis::PulseRate => 1,
            SweepAxis::SnrDb => 2,
            SweepAxis::NumUsers => 3,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pulse_rate" => Ok(SweepAxis::PulseRate),
            "snr_db" => Ok(SweepAxis::SnrDb),
            "num_users" => Ok(SweepAxis::NumUsers),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep axis {other:?} (expected pulse_rate, snr_db or num_users)"
            ))),
        }
    }
}

fn as_count(axis: SweepAxis, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value < 1e15 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidArgument(format!(
            "{axis} values must be positive integers, got {value}"
        )))
    }
}

/// Energies after moving the target user to `snr_db`, keeping every
/// user's ratio to the target.
pub fn energies_at_snr(config: &SystemConfig, target: usize, snr_db: f64) -> Result<Vec<f64>> {
    let e_target = snr_to_energy(snr_db, config.noise_sigma())?;
    let scale = e_target / config.energies()[target];
    Ok(config.energies().iter().map(|e| e * scale).collect())
}

/// The plan for one sweep point, including its derived seed.
///
/// A `num_users` sweep truncates the base energy list or extends it with
/// copies of the target user's energy.
pub fn sweep_point_plan(base: &TrialPlan, axis: SweepAxis, value: f64) -> Result<TrialPlan> {
    let config = match axis {
        SweepAxis::PulseRate => base.config.with_pulse_rate(as_count(axis, value)?)?,
        SweepAxis::SnrDb => base
            .config
            .with_energies(energies_at_snr(&base.config, base.target_user, value)?)?,
        SweepAxis::NumUsers => {
            let k = as_count(axis, value)?;
            let fill = base.config.energies()[base.target_user];
            let mut energies = base.config.energies().to_vec();
            energies.resize(k, fill);
            base.config.with_energies(energies)?
        }
    };
    let seed = StreamKey::new(base.seed).child(axis.tag()).child(value.to_bits()).raw();
    let plan = TrialPlan {
        config,
        seed,
        ..base.clone()
    };
    plan.validate()?;
    Ok(plan)
}

/// Runs one estimate per value, in order. All points are validated before
/// any simulation starts.
pub fn run_sweep(base: &TrialPlan, axis: SweepAxis, values: &[f64]) -> Result<Vec<(f64, BerEstimate)>> {
    let plans = values
        .iter()
        .map(|&v| sweep_point_plan(base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    values.iter().zip(&plans).map(|(&v, p)| Ok((v, run_ber(p)?))).collect()
}

/// Closed-form counterpart of a plan, where one applies: the matched filter
/// at first-path timing, coded on any channel or uncoded on a flat one.
pub fn analytic_mf_ber(plan: &TrialPlan) -> Option<BerPrediction> {
    if plan.detector != DetectorKind::Mf || plan.mf_mode != MfMode::FirstPath {
        return None;
    }
    let config = &plan.config;
    let energies = config.energies();
    let target = *energies.get(plan.target_user)?;
    let others: Vec<f64> = energies
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != plan.target_user)
        .map(|(_, &e)| e)
        .collect();
    let (sigma, n, nc) = (config.noise_sigma(), config.total_gain(), config.chips_per_frame());
    match (config.coding(), &plan.channel) {
        (Coding::Coded, channel) => {
            let h = match channel {
                ChannelModel::Flat => ChannelImpulseResponse::identity(),
                ChannelModel::Selective(h) => h.clone(),
            };
            let ordered: Vec<f64> = std::iter::once(target).chain(others).collect();
            ber_isi_mf_general(&ordered, &h, sigma, n, nc).ok()
        }
        (Coding::Uncoded, ChannelModel::Flat) if others.len() == 1 => {
            ber_two_user_uncoded_mf(target, others[0], sigma, n, nc).ok()
        }
        (Coding::Uncoded, ChannelModel::Flat) => ber_uncoded_flat_mf(target, &others, sigma, n, nc).ok(),
        (Coding::Uncoded, ChannelModel::Selective(_)) => None,
    }
}
