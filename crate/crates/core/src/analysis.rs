//! Closed-form BER approximations for the matched filter and the analytic
//! checks built on them.
//!
//! All approximations replace the interference by a Gaussian of matching
//! variance, so each is a `Q` of a signal-to-total-noise ratio (or an
//! average of two). Energies are per bit, `sigma` is the per-chip noise
//! standard deviation and `N` the total processing gain.

use crate::channel::ChannelImpulseResponse;
use crate::model::divisors;
use crate::{Error, Result};

/// Gaussian tail probability `Q(x) = P(X > x)`, `X ~ N(0, 1)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `E[Q(μ + λX)] = Q(μ / sqrt(1 + λ²))` for `X ~ N(0, 1)`.
pub fn gaussian_q_average(mu: f64, lambda: f64) -> f64 {
    q_function(mu / (1.0 + lambda * lambda).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BerFormula {
    SingleUserAwgn,
    TwoUserUncodedFlat,
    MultiUserUncodedFlat,
    IsiTwoPath,
    IsiGeneral,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BerPrediction {
    pub probability: f64,
    pub formula: BerFormula,
}

impl BerPrediction {
    fn new(probability: f64, formula: BerFormula) -> Self {
        debug_assert!((0.0..=1.0).contains(&probability));
        BerPrediction { probability, formula }
    }
}

pub fn ber_single_user(e1: f64, sigma: f64) -> BerPrediction {
    BerPrediction::new(q_function(e1.sqrt() / sigma), BerFormula::SingleUserAwgn)
}

fn check_divides(n: usize, nc: usize) -> Result<()> {
    if nc == 0 || !n.is_multiple_of(nc) {
        return Err(Error::NotADivisor {
            pulse_rate: nc,
            total_gain: n,
            valid: divisors(n),
        });
    }
    Ok(())
}

/// Two uncoded users over a flat channel: the correlation is approximated
/// as normal with mean `N_f/N_c` and variance `(N_f/N_c)(1 - 1/N_c)`, then
/// averaged analytically.
pub fn ber_two_user_uncoded_mf(e1: f64, e2: f64, sigma: f64, n: usize, nc: usize) -> Result<BerPrediction> {
    check_divides(n, nc)?;
    let (n, nc) = (n as f64, nc as f64);
    let d = (sigma * sigma + e2 / n * (1.0 - 1.0 / nc)).sqrt();
    let shift = e2.sqrt() / nc;
    let p = 0.5 * q_function((e1.sqrt() + shift) / d) + 0.5 * q_function((e1.sqrt() - shift) / d);
    Ok(BerPrediction::new(p, BerFormula::TwoUserUncodedFlat))
}

/// `K` uncoded equal-power users over a flat channel, `K - 1` of them
/// interfering with energy `e_interferer` each.
pub fn ber_multiuser_uncoded_mf(
    e1: f64,
    e_interferer: f64,
    num_users: usize,
    sigma: f64,
    n: usize,
    nc: usize,
) -> Result<BerPrediction> {
    if num_users == 0 {
        return Err(Error::InvalidArgument("at least one user is required".into()));
    }
    let interferers = vec![e_interferer; num_users - 1];
    ber_uncoded_flat_mf(e1, &interferers, sigma, n, nc)
}

/// Uncoded flat-channel MF approximation for arbitrary interferer energies:
/// each interferer contributes `E_j (1/N + 1/N_c² − 1/(N N_c))`.
pub fn ber_uncoded_flat_mf(e1: f64, interferers: &[f64], sigma: f64, n: usize, nc: usize) -> Result<BerPrediction> {
    check_divides(n, nc)?;
    if interferers.is_empty() {
        return Ok(ber_single_user(e1, sigma));
    }
    let (nf, ncf) = (n as f64, nc as f64);
    let per_energy = 1.0 / nf + 1.0 / (ncf * ncf) - 1.0 / (nf * ncf);
    let mai: f64 = interferers.iter().sum::<f64>() * per_energy;
    let p = q_function(e1.sqrt() / (sigma * sigma + mai).sqrt());
    Ok(BerPrediction::new(p, BerFormula::MultiUserUncodedFlat))
}

/// Coded MF over a two-path channel `[1, 0, .., 0, h_l]` (second path at
/// delay `l <= N_c`), two users.
pub fn ber_isi_mf_two_path(
    e1: f64,
    e2: f64,
    h_l: f64,
    l: usize,
    sigma: f64,
    n: usize,
    nc: usize,
) -> Result<BerPrediction> {
    check_divides(n, nc)?;
    if l > nc {
        return Err(Error::InvalidArgument(format!(
            "second path delay {l} exceeds N_c = {nc}; use ber_isi_mf_general"
        )));
    }
    let (nf, ncf, lf) = (n as f64, nc as f64, l as f64);
    let h2 = h_l * h_l;
    let var = sigma * sigma + e1 * h2 * lf / (nf * ncf) + e2 * (1.0 + h2) / nf;
    Ok(BerPrediction::new(
        q_function(e1.sqrt() / var.sqrt()),
        BerFormula::IsiTwoPath,
    ))
}

/// Self-interference weight `Σ_{i=1}^{N_c} (i/N_c) h_i² + Σ_{i>N_c} h_i²`.
pub fn self_interference_weight(h: &ChannelImpulseResponse, nc: usize) -> f64 {
    h.taps()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &hi)| {
            let w = if i <= nc { i as f64 / nc as f64 } else { 1.0 };
            w * hi * hi
        })
        .sum()
}

/// Argument of `Q` in the general-channel coded MF approximation. User 0 is
/// the user of interest; users 1.. interfere through `Σ h_i²`.
pub fn isi_q_argument(energies: &[f64], h: &ChannelImpulseResponse, sigma: f64, n: usize, nc: usize) -> Result<f64> {
    check_divides(n, nc)?;
    let Some((&e1, others)) = energies.split_first() else {
        return Err(Error::InvalidArgument("at least one user is required".into()));
    };
    let nf = n as f64;
    let self_term = e1 / nf * self_interference_weight(h, nc);
    let mai = h.energy() / nf * others.iter().sum::<f64>();
    Ok(e1.sqrt() / (sigma * sigma + self_term + mai).sqrt())
}

/// Coded MF approximation for an arbitrary channel and `K` users.
pub fn ber_isi_mf_general(
    energies: &[f64],
    h: &ChannelImpulseResponse,
    sigma: f64,
    n: usize,
    nc: usize,
) -> Result<BerPrediction> {
    let arg = isi_q_argument(energies, h, sigma, n, nc)?;
    Ok(BerPrediction::new(q_function(arg), BerFormula::IsiGeneral))
}

/// Sufficient conditions for the two-user uncoded MF BER to fall with
/// `N_c` (rise with pulse rate), plus a direct grid check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonotonicityReport {
    /// `E1/N < σ²` and `E2/N < σ²`.
    pub chip_energy_below_noise: bool,
    /// `sqrt(E2)/N < sqrt(E1) < N sqrt(E2)`.
    pub energy_ratio_window: bool,
    pub conditions_met: bool,
    /// Two-user approximation non-increasing over every divisor `N_c` of `N`.
    pub grid_check: bool,
}

pub fn mf_monotonicity_conditions(e1: f64, e2: f64, sigma: f64, n: usize) -> MonotonicityReport {
    let nf = n as f64;
    let s2 = sigma * sigma;
    let chip_energy_below_noise = e1 / nf < s2 && e2 / nf < s2;
    let (r1, r2) = (e1.sqrt(), e2.sqrt());
    let energy_ratio_window = r2 / nf < r1 && r1 < nf * r2;
    let bers: Vec<f64> = divisors(n)
        .into_iter()
        .map(|nc| {
            ber_two_user_uncoded_mf(e1, e2, sigma, n, nc)
                .expect("divisor by construction")
                .probability
        })
        .collect();
    let grid_check = bers.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    MonotonicityReport {
        chip_energy_below_noise,
        energy_ratio_window,
        conditions_met: chip_energy_below_noise && energy_ratio_window,
        grid_check,
    }
}

/// Normal approximation of `P(ρ < x)` for two uncoded users.
///
/// With `N_c = 1` every pulse collides, so `ρ = N_f = N` surely.
pub fn uncoded_rho_cdf(x: f64, n: usize, nc: usize) -> Result<f64> {
    check_divides(n, nc)?;
    if nc == 1 {
        return Ok(if x <= n as f64 { 0.0 } else { 1.0 });
    }
    let (nf, ncf) = (n as f64, nc as f64);
    let arg = (x * ncf * ncf - nf) / (nf * ncf * (ncf - 1.0)).sqrt();
    Ok(1.0 - q_function(arg))
}

/// Predicted variances of the self interference and of the second user's
/// MAI in the unnormalized MF statistic, two-path channel.
///
/// The self term is `E1 h_l² min(l, N_c) / N_c²`; for `l >= N_c` every
/// echo lands on a later frame and it saturates at `E1 h_l² / N_c`.
pub fn interference_variance_prediction(e1: f64, e2: f64, h_l: f64, l: usize, nc: usize) -> (f64, f64) {
    let ncf = nc as f64;
    let h2 = h_l * h_l;
    let self_var = e1 * h2 * l.min(nc) as f64 / (ncf * ncf);
    let mai_var = e2 * (1.0 + h2) / ncf;
    (self_var, mai_var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    /// Composite Simpson integration of the standard normal density on
    /// `[x, 40]`, independent of any erf implementation.
    fn q_oracle(x: f64) -> f64 {
        let upper = 40.0;
        let steps = 400_000usize;
        let h = (upper - x) / steps as f64;
        let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = phi(x) + phi(upper);
        for i in 1..steps {
            let t = x + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(t);
        }
        acc * h / 3.0
    }

    #[test]
    fn q_matches_quadrature() {
        assert_eq!(q_function(0.0), 0.5);
        assert_relative_eq!(q_function(1.0), 0.158_655_253_931_457_05, epsilon = 1e-15);
        let mut x = -8.0;
        while x <= 8.0 {
            let err = (q_function(x) - q_oracle(x)).abs();
            assert!(err <= 1e-12, "Q({x}) off by {err}");
            x += 0.37;
        }
        for x in [0.5, 1.7, 3.2] {
            assert!((q_function(x) + q_function(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn q_average_identity() {
        assert_eq!(gaussian_q_average(0.0, 3.0), 0.5);
        assert_eq!(gaussian_q_average(1.3, 0.0), q_function(1.3));
        let exact = gaussian_q_average(1.0, 1.0);
        assert_relative_eq!(exact, q_oracle(1.0 / 2f64.sqrt()), epsilon = 1e-12);
        assert_relative_eq!(exact, 0.239_750_061_093_477, epsilon = 1e-12);
        let mut rng = StreamKey::new(5).rng();
        let n = 10_000_000usize;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = q_function(1.0 + z);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn two_user_formula() {
        let single = ber_single_user(4.0, 1.0).probability;
        let p = ber_two_user_uncoded_mf(4.0, 0.0, 1.0, 128, 4).unwrap();
        assert_relative_eq!(p.probability, single, epsilon = 1e-15);
        // f1 = 3 / sqrt(1.015625), f2 = 1 / sqrt(1.015625)
        let d = 1.015_625f64.sqrt();
        let expect = 0.5 * q_oracle(3.0 / d) + 0.5 * q_oracle(1.0 / d);
        let p = ber_two_user_uncoded_mf(4.0, 4.0, 1.0, 128, 2).unwrap().probability;
        assert_relative_eq!(p, expect, epsilon = 1e-12);
        assert_relative_eq!(p, 0.0810, epsilon = 5e-5);
        assert_relative_eq!(3.0 / d, 2.9768, epsilon = 1e-4);
        assert!(ber_two_user_uncoded_mf(4.0, 4.0, 1.0, 128, 3).is_err());
    }

    #[test]
    fn multiuser_formula() {
        let single = ber_single_user(2.0, 0.5).probability;
        assert_eq!(
            ber_multiuser_uncoded_mf(2.0, 2.0, 1, 0.5, 128, 8).unwrap().probability,
            single
        );
        // K = 11, E = 1, sigma = 1, N = 128, N_c = 8: ten interferers
        let var = 1.0 + 10.0 * (1.0 / 128.0 + 1.0 / 64.0 - 1.0 / 1024.0);
        let p = ber_multiuser_uncoded_mf(1.0, 1.0, 11, 1.0, 128, 8).unwrap().probability;
        assert_relative_eq!(p, q_oracle(1.0 / f64::sqrt(var)), epsilon = 1e-12);
    }

    #[test]
    fn two_path_formula() {
        let p = ber_isi_mf_two_path(4.0, 4.0, 0.0, 2, 1.0, 128, 16).unwrap().probability;
        assert_relative_eq!(p, q_oracle(2.0 / (1.0f64 + 4.0 / 128.0).sqrt()), epsilon = 1e-12);
        let p = ber_isi_mf_two_path(4.0, 0.0, 0.0, 2, 1.0, 128, 16).unwrap().probability;
        assert_relative_eq!(p, ber_single_user(4.0, 1.0).probability, epsilon = 1e-15);
        // 1 + 4 * 0.81 * 2 / 2048 + 4 * 1.81 / 128
        let var: f64 = 1.0 + 4.0 * 0.81 * 2.0 / 2048.0 + 4.0 * 1.81 / 128.0;
        let p = ber_isi_mf_two_path(4.0, 4.0, 0.9, 2, 1.0, 128, 16).unwrap().probability;
        assert_relative_eq!(p, q_oracle(2.0 / var.sqrt()), epsilon = 1e-12);
        assert!(ber_isi_mf_two_path(4.0, 4.0, 0.9, 17, 1.0, 128, 16).is_err());
    }

    #[test]
    fn general_channel_formula() {
        let flat = ChannelImpulseResponse::identity();
        let p = ber_isi_mf_general(&[3.0], &flat, 1.0, 128, 16).unwrap().probability;
        assert_relative_eq!(p, ber_single_user(3.0, 1.0).probability, epsilon = 1e-15);

        let h = ChannelImpulseResponse::new(vec![1.0, 0.9, 0.8]).unwrap();
        let self_term: f64 = 4.0 / 128.0 * (0.81 / 16.0 + 2.0 * 0.64 / 16.0);
        assert_relative_eq!(self_term, 0.004_082_031_25, epsilon = 1e-15);
        let p = ber_isi_mf_general(&[4.0], &h, 1.0, 128, 16).unwrap().probability;
        assert_relative_eq!(p, q_oracle(2.0 / (1.0 + self_term).sqrt()), epsilon = 1e-12);
        assert_relative_eq!(p, 0.0230, epsilon = 5e-5);

        // delays beyond N_c saturate at full weight
        let w = self_interference_weight(&h, 1);
        assert_relative_eq!(w, 0.81 + 0.64, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn general_reduces_to_two_path(
            e1 in 0.1f64..20.0, e2 in 0.0f64..20.0, h_l in -1.5f64..1.5, nc_pow in 0u32..6, l_frac in 0.0f64..1.0
        ) {
            let nc = 1usize << nc_pow;
            let l = 1 + ((nc - 1) as f64 * l_frac) as usize;
            prop_assume!(l <= nc);
            let h = ChannelImpulseResponse::two_path(h_l, l).unwrap();
            let a = ber_isi_mf_two_path(e1, e2, h_l, l, 1.0, 256, nc).unwrap().probability;
            let b = ber_isi_mf_general(&[e1, e2], &h, 1.0, 256, nc).unwrap().probability;
            prop_assert!((a - b).abs() <= 1e-14);
        }

        #[test]
        fn predictions_stay_below_half(e1 in 1e-3f64..100.0, e2 in 0.0f64..100.0, sigma in 0.05f64..5.0, nc_pow in 0u32..8) {
            let nc = 1usize << nc_pow;
            let preds = [
                ber_two_user_uncoded_mf(e1, e2, sigma, 128, nc).unwrap(),
                ber_multiuser_uncoded_mf(e1, e2, 5, sigma, 128, nc).unwrap(),
                ber_isi_mf_general(&[e1, e2], &ChannelImpulseResponse::new(vec![1.0, 0.9, 0.8]).unwrap(), sigma, 128, nc).unwrap(),
            ];
            for p in preds {
                prop_assert!((0.0..=0.5).contains(&p.probability), "{:?}", p);
            }
        }

        #[test]
        fn two_user_scale_invariance(e1 in 0.01f64..50.0, e2 in 0.01f64..50.0, sigma in 0.1f64..3.0, c in 0.01f64..100.0, nc_pow in 0u32..8) {
            let nc = 1usize << nc_pow;
            let a = ber_two_user_uncoded_mf(e1, e2, sigma, 128, nc).unwrap().probability;
            let b = ber_two_user_uncoded_mf(c * e1, c * e2, c.sqrt() * sigma, 128, nc).unwrap().probability;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300);
        }

        #[test]
        fn q_average_is_below_q(mu in 0.01f64..6.0, lambda in 0.01f64..5.0) {
            prop_assert!(gaussian_q_average(mu, lambda) > q_function(mu));
        }
    }

    #[test]
    fn isi_argument_is_monotone_in_chips_per_frame() {
        let h = ChannelImpulseResponse::new(vec![1.0, 0.9, 0.8]).unwrap();
        for n in [64usize, 128, 256] {
            let args: Vec<f64> = divisors(n)
                .into_iter()
                .map(|nc| isi_q_argument(&[4.0, 4.0, 8.0], &h, 1.0, n, nc).unwrap())
                .collect();
            assert!(args.windows(2).all(|w| w[1] >= w[0]), "{n}: {args:?}");
        }
    }

    #[test]
    fn monotonicity_examples() {
        let r = mf_monotonicity_conditions(1.0, 1.0, 1.0, 128);
        assert!(r.conditions_met);
        let r = mf_monotonicity_conditions(1.0, 1e8, 1.0, 128);
        assert!(!r.energy_ratio_window);
        assert!(!r.conditions_met);
        let r = mf_monotonicity_conditions(4.0, 4.0, 1.0, 128);
        assert!(r.grid_check);
    }

    #[test]
    fn rho_cdf_examples() {
        assert_relative_eq!(uncoded_rho_cdf(2.0, 128, 8).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(uncoded_rho_cdf(64.0, 128, 1).unwrap(), 0.0);
        assert_eq!(uncoded_rho_cdf(129.0, 128, 1).unwrap(), 1.0);
        let arg = 64.0 / 7168f64.sqrt();
        assert_relative_eq!(arg, 0.7560, epsilon = 1e-4);
        let p = uncoded_rho_cdf(3.0, 128, 8).unwrap();
        assert_relative_eq!(p, 1.0 - q_oracle(arg), epsilon = 1e-12);
        assert_relative_eq!(p, 0.7752, epsilon = 1e-4);
        // FSD: larger N_c (smaller pulse rate) puts more mass below x
        for x in [1.0, 2.0, 4.0, 8.0] {
            assert!(uncoded_rho_cdf(x, 256, 64).unwrap() >= uncoded_rho_cdf(x, 256, 4).unwrap());
        }
        for x in [0.5, 1.0, 3.0, 10.0] {
            let v: Vec<f64> = divisors(256)
                .into_iter()
                .filter(|&nc| nc >= 2)
                .map(|nc| uncoded_rho_cdf(x, 256, nc).unwrap())
                .collect();
            assert!(v.windows(2).all(|w| w[1] >= w[0]), "{x}: {v:?}");
        }
    }

    #[test]
    fn variance_prediction_examples() {
        assert_eq!(interference_variance_prediction(1.0, 3.0, 0.0, 4, 8), (0.0, 3.0 / 8.0));
        let (s, m) = interference_variance_prediction(1.0, 1.0, 0.5, 4, 8);
        assert_relative_eq!(s, 0.015_625, epsilon = 1e-15);
        assert_relative_eq!(m, 0.156_25, epsilon = 1e-15);
        let (s, _) = interference_variance_prediction(2.0, 1.0, 0.5, 40, 8);
        assert_relative_eq!(s, 2.0 * 0.25 / 8.0, epsilon = 1e-15);
    }
}
