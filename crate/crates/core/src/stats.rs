//! Empirical checks of the asymptotic distribution claims.
//!
//! Every check returns a [`CheckOutcome`] made of one
//! [`VerificationReport`] per clause. Sampling is split into fixed-size
//! shards, shard `i` drawing from `key.child(i)`, and shards are
//! concatenated in order so results do not depend on thread count.

use rand::Rng;

use crate::analysis::{interference_variance_prediction, q_function};
use crate::channel::{matched_statistics, synth_received_selective, ChannelImpulseResponse};
use crate::model::{gen_hopping, AmplitudeMatrix, Coding, SpreadingMatrix, SymbolVector, SystemConfig};
use crate::rng::{tags, StreamKey, StreamRng};
use crate::{Error, Result};

/// Samples per shard.
pub const SHARD_SIZE: usize = 8192;
/// KS threshold for the standardized coded correlation.
pub const LEMMA1_KS_THRESHOLD: f64 = 0.01;
pub const MEAN_TOLERANCE: f64 = 0.02;
/// Relative tolerance on sample variances.
pub const VARIANCE_TOLERANCE: f64 = 0.05;
/// Standard errors allowed between a sample mean or frequency and its target.
pub const STANDARD_ERRORS: f64 = 3.0;
pub const INTERFERENCE_KS_THRESHOLD: f64 = 0.02;
/// Failure probability behind the DKW slack.
pub const DKW_ALPHA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl SampleSummary {
    /// Unbiased variance; skewness and kurtosis from central moments.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let count = samples.len();
        if count < 2 {
            return Err(Error::InvalidArgument("a summary needs at least two samples".into()));
        }
        let n = count as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in samples {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Ok(SampleSummary {
            count,
            mean,
            variance: m2 * n / (n - 1.0),
            skewness,
            excess_kurtosis,
        })
    }
}

/// One clause of a check.
#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub check_name: String,
    pub statistic: f64,
    pub threshold: f64,
    /// `statistic <= threshold`.
    pub pass: bool,
    pub sample_size: usize,
}

impl VerificationReport {
    pub fn new(check_name: impl Into<String>, statistic: f64, threshold: f64, sample_size: usize) -> Self {
        VerificationReport {
            check_name: check_name.into(),
            statistic,
            threshold,
            pass: statistic <= threshold,
            sample_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub reports: Vec<VerificationReport>,
    pub summary: Option<SampleSummary>,
}

impl CheckOutcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn report(&self, name: &str) -> Option<&VerificationReport> {
        self.reports.iter().find(|r| r.check_name == name)
    }
}

/// A check run once and, if it failed, once more on a fresh stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Attempts {
    pub first: CheckOutcome,
    pub retry: Option<CheckOutcome>,
}

impl Attempts {
    pub fn final_outcome(&self) -> &CheckOutcome {
        self.retry.as_ref().unwrap_or(&self.first)
    }

    pub fn pass(&self) -> bool {
        self.final_outcome().pass()
    }
}

pub fn retry_once(key: StreamKey, check: impl Fn(StreamKey) -> Result<CheckOutcome>) -> Result<Attempts> {
    let first = check(key)?;
    let retry = if first.pass() {
        None
    } else {
        Some(check(key.child(tags::RETRY))?)
    };
    Ok(Attempts { first, retry })
}

#[cfg(feature = "parallel")]
fn map_shards<T: Send>(num_shards: usize, f: impl Fn(usize) -> Vec<T> + Sync) -> Vec<Vec<T>> {
    use rayon::prelude::*;
    (0..num_shards).into_par_iter().map(&f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_shards<T: Send>(num_shards: usize, f: impl Fn(usize) -> Vec<T> + Sync) -> Vec<Vec<T>> {
    (0..num_shards).map(f).collect()
}

/// Draws `count` values, shard `i` using a generator seeded from `key.child(i)`.
pub fn sharded_samples<T: Send>(count: usize, key: StreamKey, draw: impl Fn(&mut StreamRng) -> T + Sync) -> Vec<T> {
    let num_shards = count.div_ceil(SHARD_SIZE);
    map_shards(num_shards, |i| {
        let mut rng = key.child(i as u64).rng();
        let len = SHARD_SIZE.min(count - i * SHARD_SIZE);
        (0..len).map(|_| draw(&mut rng)).collect()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Cross-correlations between pairs of independently drawn users.
pub fn sample_rho(config: &SystemConfig, num_pairs: usize, key: StreamKey) -> Vec<f64> {
    sharded_samples(num_pairs, key, |rng| {
        let a = gen_hopping(config, 0, rng);
        let b = gen_hopping(config, 0, rng);
        a.correlate(&b) as f64
    })
}

/// Largest gap between the empirical CDF and `cdf`, over both sides of
/// every sample point.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).abs().max((f - i as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// KS distance for samples on a lattice of spacing `step`, with the
/// reference evaluated half a step either side of each distinct value.
pub fn ks_distance_lattice(samples: &[f64], cdf: impl Fn(f64) -> f64, step: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        d = d
            .max((i as f64 / n - cdf(v - step / 2.0)).abs())
            .max((j as f64 / n - cdf(v + step / 2.0)).abs());
        i = j;
    }
    d
}

/// Dvoretzky–Kiefer–Wolfowitz slack used when comparing two empirical CDFs
/// of `n` samples each.
pub fn dkw_epsilon(n: usize) -> f64 {
    2.0 * ((2.0 / DKW_ALPHA).ln() / (2.0 * n as f64)).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    1.0 - q_function(x)
}

/// Fraction of `sorted` at or below `x`.
fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Fraction of `sorted` strictly below `x`.
fn ecdf_below(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v < x) as f64 / sorted.len() as f64
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn split_gain(n: usize, nf: usize) -> Result<usize> {
    if nf == 0 || !n.is_multiple_of(nf) {
        return Err(Error::NotADivisor {
            pulse_rate: nf,
            total_gain: n,
            valid: crate::model::divisors(n),
        });
    }
    Ok(n / nf)
}

fn pair_config(n: usize, nf: usize, coding: Coding) -> Result<SystemConfig> {
    SystemConfig::new(n, nf, vec![1.0, 1.0], 0.0, coding)
}

fn mean_clause(name: &str, summary: &SampleSummary, target: f64, std_error: f64) -> VerificationReport {
    VerificationReport::new(
        name,
        (summary.mean - target).abs() / std_error,
        STANDARD_ERRORS,
        summary.count,
    )
}

fn variance_clause(name: &str, summary: &SampleSummary, target: f64) -> VerificationReport {
    let stat = if target > 0.0 {
        (summary.variance / target - 1.0).abs()
    } else {
        summary.variance
    };
    VerificationReport::new(name, stat, VARIANCE_TOLERANCE, summary.count)
}

/// `ρ·sqrt(N_c/N_f)` for coded pairs.
pub fn sample_standardized_rho(n: usize, nf: usize, sample_size: usize, key: StreamKey) -> Result<Vec<f64>> {
    let nc = split_gain(n, nf)?;
    let scale = (nc as f64 / nf as f64).sqrt();
    let config = pair_config(n, nf, Coding::Coded)?;
    Ok(sample_rho(&config, sample_size, key)
        .into_iter()
        .map(|r| r * scale)
        .collect())
}

/// Coded correlation against the standard normal after scaling by
/// `sqrt(N_c/N_f)`: lattice-corrected KS distance, mean and variance.
///
/// Both `N_f` and `N_c` must be at least 8.
pub fn check_lemma1_normality(n: usize, nf: usize, sample_size: usize, key: StreamKey) -> Result<CheckOutcome> {
    let nc = split_gain(n, nf)?;
    if nf < 8 || nc < 8 {
        return Err(Error::Regime(format!(
            "normality check needs N_f >= 8 and N_c >= 8, got N_f = {nf}, N_c = {nc}"
        )));
    }
    let samples = sample_standardized_rho(n, nf, sample_size, key)?;
    let step = (nc as f64 / nf as f64).sqrt();
    let summary = SampleSummary::from_samples(&samples)?;
    let ks = ks_distance_lattice(&samples, normal_cdf, step);
    Ok(CheckOutcome {
        reports: vec![
            VerificationReport::new("lemma1.ks", ks, LEMMA1_KS_THRESHOLD, sample_size),
            VerificationReport::new("lemma1.mean", summary.mean.abs(), MEAN_TOLERANCE, sample_size),
            variance_clause("lemma1.variance", &summary, 1.0),
        ],
        summary: Some(summary),
    })
}

/// Uncoded correlation moments against mean `N_f/N_c` and variance
/// `(N_f/N_c)(1 - 1/N_c)`.
pub fn check_uncoded_moments(n: usize, nc: usize, sample_size: usize, key: StreamKey) -> Result<CheckOutcome> {
    let nf = split_gain(n, nc)?;
    if nc < 2 {
        return Err(Error::Regime("uncoded moment check needs N_c >= 2".into()));
    }
    let config = pair_config(n, nf, Coding::Uncoded)?;
    let samples = sample_rho(&config, sample_size, key);
    let summary = SampleSummary::from_samples(&samples)?;
    let ratio = nf as f64 / nc as f64;
    let var = ratio * (1.0 - 1.0 / nc as f64);
    Ok(CheckOutcome {
        reports: vec![
            mean_clause("uncoded.mean", &summary, ratio, (var / sample_size as f64).sqrt()),
            variance_clause("uncoded.variance", &summary, var),
        ],
        summary: Some(summary),
    })
}

/// Uncoded correlation at a lower pulse rate must be first-order
/// stochastically smaller: `F_low(x) >= F_high(x) - ε` on the pooled
/// 5th..95th percentile grid.
pub fn check_fsd_dominance(
    n: usize,
    nf_low: usize,
    nf_high: usize,
    sample_size: usize,
    key: StreamKey,
) -> Result<CheckOutcome> {
    split_gain(n, nf_low)?;
    split_gain(n, nf_high)?;
    if nf_low > nf_high {
        return Err(Error::InvalidArgument(format!(
            "expected N_f low <= N_f high, got {nf_low} > {nf_high}"
        )));
    }
    let low = sorted(sample_rho(
        &pair_config(n, nf_low, Coding::Uncoded)?,
        sample_size,
        key.child(1),
    ));
    let high = sorted(sample_rho(
        &pair_config(n, nf_high, Coding::Uncoded)?,
        sample_size,
        key.child(2),
    ));
    let pooled = sorted(low.iter().chain(&high).copied().collect());
    let worst = (1..=19)
        .map(|p| {
            let idx = ((p as f64 * 0.05) * (pooled.len() - 1) as f64).round() as usize;
            let x = pooled[idx];
            ecdf(&high, x) - ecdf(&low, x)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckOutcome {
        reports: vec![VerificationReport::new(
            "fsd.max_violation",
            worst,
            dkw_epsilon(sample_size),
            sample_size,
        )],
        summary: None,
    })
}

/// Coded correlation is symmetric about zero: `F(-x)` against `1 - F(x⁻)`.
pub fn check_coded_symmetry(n: usize, nf: usize, sample_size: usize, key: StreamKey) -> Result<CheckOutcome> {
    let s = sorted(sample_rho(&pair_config(n, nf, Coding::Coded)?, sample_size, key));
    let mut values = s.clone();
    values.dedup();
    let worst = values
        .iter()
        .map(|&x| (ecdf(&s, -x) - (1.0 - ecdf_below(&s, x))).abs())
        .fold(0.0, f64::max);
    Ok(CheckOutcome {
        reports: vec![VerificationReport::new(
            "coded.symmetry",
            worst,
            dkw_epsilon(sample_size),
            sample_size,
        )],
        summary: None,
    })
}

/// Total interference in user 1's first-path matched filter output for two
/// coded users over a unit main path plus `h_l` at delay `l`: the statistic
/// with noise off, minus user 1's own signal term.
#[allow(clippy::too_many_arguments)]
pub fn sample_interference(
    e1: f64,
    e2: f64,
    h_l: f64,
    l: usize,
    n: usize,
    nc: usize,
    num_symbols: usize,
    key: StreamKey,
) -> Result<Vec<f64>> {
    check_interference_regime(e1, e2, l, n, nc)?;
    let nf = n / nc;
    let config = pair_config(n, nf, Coding::Coded)?;
    let amps = AmplitudeMatrix::from_amplitudes(vec![(e1 / nf as f64).sqrt(), (e2 / nf as f64).sqrt()]);
    let mut taps = vec![0.0; l + 1];
    taps[0] = 1.0;
    taps[l] += h_l;
    let h = ChannelImpulseResponse::new(taps)?;
    let signal = (e1 * nf as f64).sqrt();
    Ok(sharded_samples(num_symbols, key, |rng| {
        let s = SpreadingMatrix::new(vec![
            crate::model::build_spreading_vector(&gen_hopping(&config, 0, rng), &config),
            crate::model::build_spreading_vector(&gen_hopping(&config, 1, rng), &config),
        ])
        .expect("two columns of equal length");
        let b = SymbolVector::random(2, rng);
        let r = synth_received_selective(&s, &amps, &b, &h, 0.0, rng).expect("matching dimensions");
        let y = matched_statistics(&r, &s).expect("matching dimensions");
        y.values[0] - signal * f64::from(b.as_slice()[0])
    }))
}

fn check_interference_regime(e1: f64, e2: f64, l: usize, n: usize, nc: usize) -> Result<()> {
    if nc == 0 || !n.is_multiple_of(nc) {
        return Err(Error::Regime(format!("N_c = {nc} does not divide N = {n}")));
    }
    if l == 0 || l > nc {
        return Err(Error::Regime(format!(
            "echo delay must satisfy 1 <= l <= N_c, got l = {l}"
        )));
    }
    if !(e1 >= 0.0 && e2 >= 0.0 && e1.is_finite() && e2.is_finite()) {
        return Err(Error::Regime("energies must be nonnegative and finite".into()));
    }
    Ok(())
}

/// Interference mean near zero, variance near the predicted self plus MAI
/// variance, and KS distance to the fitted normal.
#[allow(clippy::too_many_arguments)]
pub fn check_interference_distribution(
    e1: f64,
    e2: f64,
    h_l: f64,
    l: usize,
    n: usize,
    nc: usize,
    num_symbols: usize,
    key: StreamKey,
) -> Result<CheckOutcome> {
    let samples = sample_interference(e1, e2, h_l, l, n, nc, num_symbols, key)?;
    let summary = SampleSummary::from_samples(&samples)?;
    let (self_var, mai_var) = interference_variance_prediction(e1, e2, h_l, l, nc);
    let predicted = self_var + mai_var;
    let sd = summary.variance.sqrt();
    let ks = if sd > 0.0 {
        ks_distance(&samples, |x| normal_cdf((x - summary.mean) / sd))
    } else {
        1.0
    };
    let se = (summary.variance / num_symbols as f64).sqrt();
    Ok(CheckOutcome {
        reports: vec![
            mean_clause("interference.mean", &summary, 0.0, se),
            variance_clause("interference.variance", &summary, predicted),
            VerificationReport::new("interference.ks", ks, INTERFERENCE_KS_THRESHOLD, num_symbols),
        ],
        summary: Some(summary),
    })
}

/// Counts frames whose delayed copy, `l` chips late, lands on the same
/// user's pulse in the next frame. Returns `(hits, frames)`.
pub fn count_self_collisions(nc: usize, l: usize, num_frames: usize, key: StreamKey) -> Result<(u64, u64)> {
    if nc == 0 || l == 0 || l > nc {
        return Err(Error::Regime(format!("need 1 <= l <= N_c, got l = {l}, N_c = {nc}")));
    }
    let hits = sharded_samples(num_frames, key, |rng| {
        let c = rng.random_range(0..nc);
        let next = rng.random_range(0..nc);
        c + l == next + nc
    });
    Ok((hits.iter().filter(|&&h| h).count() as u64, num_frames as u64))
}

/// Self-collision frequency against `l/N_c²`.
pub fn check_self_collision_probability(
    nc: usize,
    l: usize,
    num_frames: usize,
    key: StreamKey,
) -> Result<CheckOutcome> {
    let (hits, frames) = count_self_collisions(nc, l, num_frames, key)?;
    let p = l as f64 / (nc * nc) as f64;
    let se = (p * (1.0 - p) / frames as f64).sqrt();
    let stat = (hits as f64 / frames as f64 - p).abs() / se;
    Ok(CheckOutcome {
        reports: vec![VerificationReport::new(
            "interference.self_collision",
            stat,
            STANDARD_ERRORS,
            num_frames,
        )],
        summary: None,
    })
}
