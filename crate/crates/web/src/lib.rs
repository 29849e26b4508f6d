//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the record layout is given
//! on each function. The plain Rust functions behind the exports are public
//! so they can be tested natively.

use wasm_bindgen::prelude::*;

use irgain_core::analysis::uncoded_rho_cdf;
use irgain_core::channel::snr_to_energy;
use irgain_core::detectors::DetectorKind;
use irgain_core::model::{divisors, Coding, SystemConfig};
use irgain_core::montecarlo::{analytic_mf_ber, run_ber, ChannelModel, TrialPlan};
use irgain_core::rng::StreamKey;
use irgain_core::stats::{normal_cdf, sample_rho};

/// Link parameters shared by the exports. User 0 is the target at
/// `snr_db`; the remaining users sit `interferer_offset_db` above it.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub total_gain: usize,
    pub num_users: usize,
    pub snr_db: f64,
    pub interferer_offset_db: f64,
    pub coded: bool,
    pub taps: Vec<f64>,
}

impl Link {
    fn plan(&self, pulse_rate: usize, detector: DetectorKind) -> Result<TrialPlan, String> {
        let energies = (0..self.num_users)
            .map(|k| {
                let off = if k == 0 { 0.0 } else { self.interferer_offset_db };
                snr_to_energy(self.snr_db + off, 1.0)
            })
            .collect::<irgain_core::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        let coding = if self.coded { Coding::Coded } else { Coding::Uncoded };
        let config =
            SystemConfig::new(self.total_gain, pulse_rate, energies, 1.0, coding).map_err(|e| e.to_string())?;
        let channel = ChannelModel::from_taps(self.taps.clone()).map_err(|e| e.to_string())?;
        Ok(TrialPlan::new(config, detector).channel(channel))
    }
}

/// `[N_f, BER]` per divisor of `N`; BER is NaN where no closed form applies.
pub fn analytic_curve(link: &Link) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for nf in divisors(link.total_gain) {
        let plan = link.plan(nf, DetectorKind::Mf)?;
        out.push(nf as f64);
        out.push(analytic_mf_ber(&plan).map_or(f64::NAN, |p| p.probability));
    }
    Ok(out)
}

/// `[N_f, BER, CI low, CI high]` per divisor of `N`.
pub fn simulated_curve(link: &Link, detector: &str, trials: u64, seed: u64) -> Result<Vec<f64>, String> {
    let detector: DetectorKind = detector.parse().map_err(|e: irgain_core::Error| e.to_string())?;
    let mut out = Vec::new();
    for nf in divisors(link.total_gain) {
        let plan = link.plan(nf, detector)?.trials(trials).seed(seed).max_errors(None);
        let est = run_ber(&plan).map_err(|e| e.to_string())?;
        out.extend([nf as f64, est.ber, est.ci_low, est.ci_high]);
    }
    Ok(out)
}

/// `[ρ, empirical probability, normal-approximation probability]` for every
/// integer `ρ` between the sample extremes. The approximation is
/// `N(0, N_f/N_c)` when coded and `N(N_f/N_c, (N_f/N_c)(1 - 1/N_c))`
/// otherwise, integrated over `[ρ - 1/2, ρ + 1/2)`.
pub fn rho_histogram(
    total_gain: usize,
    pulse_rate: usize,
    coded: bool,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let coding = if coded { Coding::Coded } else { Coding::Uncoded };
    let config = SystemConfig::new(total_gain, pulse_rate, vec![1.0, 1.0], 1.0, coding).map_err(|e| e.to_string())?;
    if samples == 0 {
        return Err("need at least one sample".into());
    }
    let rho = sample_rho(&config, samples, StreamKey::new(seed));
    let lo = rho.iter().copied().fold(f64::INFINITY, f64::min) as i64;
    let hi = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max) as i64;
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for r in &rho {
        counts[(*r as i64 - lo) as usize] += 1;
    }
    let nc = config.chips_per_frame();
    let ratio = pulse_rate as f64 / nc as f64;
    let cdf = |x: f64| -> f64 {
        if coded {
            normal_cdf(x / ratio.sqrt())
        } else {
            uncoded_rho_cdf(x, total_gain, nc).unwrap_or(f64::NAN)
        }
    };
    let mut out = Vec::with_capacity(3 * counts.len());
    for (i, c) in counts.iter().enumerate() {
        let v = (lo + i as i64) as f64;
        out.extend([v, *c as f64 / samples as f64, cdf(v + 0.5) - cdf(v - 0.5)]);
    }
    Ok(out)
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

fn link(total_gain: u32, num_users: u32, snr_db: f64, interferer_offset_db: f64, coded: bool, taps: Vec<f64>) -> Link {
    Link {
        total_gain: total_gain as usize,
        num_users: num_users as usize,
        snr_db,
        interferer_offset_db,
        coded,
        taps,
    }
}

/// Closed-form MF BER against pulse rate: `[N_f, BER]` records.
#[wasm_bindgen(js_name = analyticBerVsPulseRate)]
pub fn analytic_ber_vs_pulse_rate(
    total_gain: u32,
    num_users: u32,
    snr_db: f64,
    interferer_offset_db: f64,
    coded: bool,
    taps: Vec<f64>,
) -> Result<Vec<f64>, JsError> {
    js(analytic_curve(&link(
        total_gain,
        num_users,
        snr_db,
        interferer_offset_db,
        coded,
        taps,
    )))
}

/// Monte Carlo BER against pulse rate: `[N_f, BER, CI low, CI high]` records.
#[wasm_bindgen(js_name = simulateBerVsPulseRate)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_ber_vs_pulse_rate(
    total_gain: u32,
    num_users: u32,
    snr_db: f64,
    interferer_offset_db: f64,
    coded: bool,
    taps: Vec<f64>,
    detector: &str,
    trials: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(simulated_curve(
        &link(total_gain, num_users, snr_db, interferer_offset_db, coded, taps),
        detector,
        u64::from(trials),
        u64::from(seed),
    ))
}

/// Cross-correlation histogram against its normal approximation:
/// `[ρ, empirical, approximation]` records.
#[wasm_bindgen(js_name = rhoHistogram)]
pub fn rho_histogram_js(
    total_gain: u32,
    pulse_rate: u32,
    coded: bool,
    samples: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(rho_histogram(
        total_gain as usize,
        pulse_rate as usize,
        coded,
        samples as usize,
        u64::from(seed),
    ))
}
