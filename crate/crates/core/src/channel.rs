//! Chip-rate received-signal synthesis and despreading.
//!
//! Each symbol is an independent trial. Frequency-selective frames carry a
//! guard tail of `L` chips so the channel memory never reaches the next
//! symbol.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{AmplitudeMatrix, SpreadingMatrix, SymbolVector};
use crate::{Error, Result};

/// Chip-spaced channel taps `h_0..h_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelImpulseResponse {
    taps: Vec<f64>,
}

impl ChannelImpulseResponse {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        match taps.first() {
            None => return Err(Error::InvalidArgument("channel needs at least one tap".into())),
            Some(0.0) => return Err(Error::InvalidArgument("leading channel tap must be nonzero".into())),
            _ => {}
        }
        if taps.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidArgument("channel taps must be finite".into()));
        }
        Ok(ChannelImpulseResponse { taps })
    }

    pub fn identity() -> Self {
        ChannelImpulseResponse { taps: vec![1.0] }
    }

    /// Two paths: unit main path plus `h_l` at delay `l`.
    pub fn two_path(h_l: f64, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidArgument("second path delay must be positive".into()));
        }
        let mut taps = vec![0.0; l + 1];
        taps[0] = 1.0;
        taps[l] = h_l;
        Self::new(taps)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Delay spread `L` in chips.
    pub fn delay_spread(&self) -> usize {
        self.taps.len() - 1
    }

    /// `Σ_i h_i²` over all taps, `h_0` included.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }
}

/// Received chip samples for one symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedFrame {
    pub samples: Vec<f64>,
}

/// Despread statistic `y`, one entry per user.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedStatistic {
    pub values: Vec<f64>,
}

impl MatchedStatistic {
    pub fn new(values: Vec<f64>) -> Self {
        MatchedStatistic { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_dims(s: &SpreadingMatrix, a: &AmplitudeMatrix, b: &SymbolVector) -> Result<()> {
    let k = s.num_users();
    if a.len() != k || b.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{k} spreading vectors, {} amplitudes, {} symbols",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    Ok(())
}

/// `S A b` without noise.
fn transmitted(s: &SpreadingMatrix, a: &AmplitudeMatrix, b: &SymbolVector) -> Vec<f64> {
    let mut x = vec![0.0; s.num_chips()];
    for ((col, &amp), &sym) in s.columns().iter().zip(a.amplitudes()).zip(b.as_slice()) {
        let gain = amp * f64::from(sym);
        for (j, d) in col.pulses() {
            x[j] += gain * f64::from(d);
        }
    }
    x
}

fn add_noise<R: Rng + ?Sized>(samples: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        for v in samples {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
}

/// `r = S A b + n`, `n` white Gaussian with per-chip variance `σ²`.
pub fn synth_received_flat<R: Rng + ?Sized>(
    s: &SpreadingMatrix,
    a: &AmplitudeMatrix,
    b: &SymbolVector,
    sigma: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    check_dims(s, a, b)?;
    check_sigma(sigma)?;
    let mut samples = transmitted(s, a, b);
    add_noise(&mut samples, sigma, rng);
    Ok(ReceivedFrame { samples })
}

/// `r = H_0 S A b + n` over `N + L` chips (symbol plus guard tail).
pub fn synth_received_selective<R: Rng + ?Sized>(
    s: &SpreadingMatrix,
    a: &AmplitudeMatrix,
    b: &SymbolVector,
    h: &ChannelImpulseResponse,
    sigma: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    check_dims(s, a, b)?;
    check_sigma(sigma)?;
    let x = transmitted(s, a, b);
    let mut samples = vec![0.0; x.len() + h.delay_spread()];
    for (j, &v) in x.iter().enumerate() {
        if v != 0.0 {
            for (t, &ht) in h.taps().iter().enumerate() {
                samples[j + t] += ht * v;
            }
        }
    }
    add_noise(&mut samples, sigma, rng);
    Ok(ReceivedFrame { samples })
}

/// `y = Sᵀ r`, despreading at first-path timing. A longer `r` (guard tail
/// of a selective frame) is accepted; the tail is ignored.
pub fn matched_statistics(r: &ReceivedFrame, s: &SpreadingMatrix) -> Result<MatchedStatistic> {
    if r.samples.len() < s.num_chips() {
        return Err(Error::DimensionMismatch(format!(
            "received frame has {} samples, spreading vectors have {} chips",
            r.samples.len(),
            s.num_chips()
        )));
    }
    let values = s
        .columns()
        .iter()
        .map(|col| col.pulses().map(|(j, d)| f64::from(d) * r.samples[j]).sum())
        .collect();
    Ok(MatchedStatistic { values })
}

/// Channel-filtered signatures `G = H_0 S`, an `(N + L) x K` matrix.
pub fn filtered_signatures(s: &SpreadingMatrix, h: &ChannelImpulseResponse) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(s.num_chips() + h.delay_spread(), s.num_users());
    for (k, col) in s.columns().iter().enumerate() {
        for (j, d) in col.pulses() {
            for (t, &ht) in h.taps().iter().enumerate() {
                g[(j + t, k)] += ht * f64::from(d);
            }
        }
    }
    g
}

/// `y = Gᵀ r` against arbitrary real signatures (columns of `g`).
pub fn matched_statistics_filtered(r: &ReceivedFrame, g: &DMatrix<f64>) -> Result<MatchedStatistic> {
    if r.samples.len() != g.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "received frame has {} samples, signatures have {} rows",
            r.samples.len(),
            g.nrows()
        )));
    }
    let values = g
        .column_iter()
        .map(|col| col.iter().zip(&r.samples).map(|(a, b)| a * b).sum())
        .collect();
    Ok(MatchedStatistic { values })
}

/// Energy per bit for a given SNR in dB, with SNR taken as `E_b / σ²`
/// (`σ²` the per-chip noise variance). Single-user MF BER is then
/// `Q(sqrt(E)/σ) = Q(sqrt(SNR))`.
pub fn snr_to_energy(snr_db: f64, sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "SNR needs a positive noise level, got sigma = {sigma}"
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR must be finite, got {snr_db}")));
    }
    Ok(sigma * sigma * 10f64.powf(snr_db / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{correlation_matrix, Coding, SystemConfig};
    use crate::rng::StreamKey;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn setup(n: usize, nf: usize, energies: Vec<f64>, seed: u64) -> (SystemConfig, SpreadingMatrix) {
        let c = SystemConfig::new(n, nf, energies, 1.0, Coding::Coded).unwrap();
        let key = StreamKey::new(seed);
        let s = SpreadingMatrix::generate(&c, |u| key.user(u).rng());
        (c, s)
    }

    #[test]
    fn noiseless_single_user_is_the_signature() {
        let (c, s) = setup(32, 8, vec![8.0], 1);
        let a = c.amplitudes();
        assert_relative_eq!(a.amplitudes()[0], 1.0);
        let mut rng = StreamKey::new(0).rng();
        let plus = synth_received_flat(&s, &a, &SymbolVector::new(vec![1]).unwrap(), 0.0, &mut rng).unwrap();
        let minus = synth_received_flat(&s, &a, &SymbolVector::new(vec![-1]).unwrap(), 0.0, &mut rng).unwrap();
        for ((p, m), &chip) in plus.samples.iter().zip(&minus.samples).zip(s.column(0).chips()) {
            assert_eq!(*p, f64::from(chip));
            assert_eq!(*m, -f64::from(chip));
        }
        // energy conservation
        let e: f64 = plus.samples.iter().map(|x| x * x).sum();
        assert_relative_eq!(e, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn noise_variance() {
        let n = 1 << 20;
        let (c, s) = setup(n, 1 << 10, vec![1.0], 5);
        let a = c.amplitudes();
        let b = SymbolVector::new(vec![1]).unwrap();
        let r = synth_received_flat(&s, &a, &b, 1.0, &mut StreamKey::new(9).rng()).unwrap();
        let clean = synth_received_flat(&s, &a, &b, 0.0, &mut StreamKey::new(9).rng()).unwrap();
        let noise: Vec<f64> = r.samples.iter().zip(&clean.samples).map(|(x, y)| x - y).collect();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var = noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn matched_statistic_examples() {
        let (c, s) = setup(64, 16, vec![16.0, 16.0], 3);
        let a = c.amplitudes();
        let only_first = SpreadingMatrix::new(vec![s.column(0).clone()]).unwrap();
        let r = synth_received_flat(
            &only_first,
            &AmplitudeMatrix::from_amplitudes(vec![1.0]),
            &SymbolVector::new(vec![1]).unwrap(),
            0.0,
            &mut StreamKey::new(0).rng(),
        )
        .unwrap();
        let y = matched_statistics(&r, &only_first).unwrap();
        assert_eq!(y.values, vec![16.0]);

        // a frame with energy only where no user pulses
        let mut zero = vec![1.0; 64];
        for col in s.columns() {
            for (j, _) in col.pulses() {
                zero[j] = 0.0;
            }
        }
        let y = matched_statistics(&ReceivedFrame { samples: zero }, &s).unwrap();
        assert_eq!(y.values, vec![0.0, 0.0]);
        assert!(matched_statistics(&ReceivedFrame { samples: vec![0.0; 10] }, &s).is_err());
        let b = SymbolVector::new(vec![1]).unwrap();
        assert!(synth_received_flat(&s, &a, &b, 0.0, &mut StreamKey::new(0).rng()).is_err());
    }

    #[test]
    fn matched_statistics_match_dot_products() {
        let (c, s) = setup(96, 12, vec![1.0, 2.0, 0.5], 17);
        let r = synth_received_flat(
            &s,
            &c.amplitudes(),
            &SymbolVector::new(vec![1, -1, 1]).unwrap(),
            0.7,
            &mut StreamKey::new(4).rng(),
        )
        .unwrap();
        let y = matched_statistics(&r, &s).unwrap();
        for k in 0..3 {
            let mut dot = 0.0;
            for j in 0..96 {
                dot += f64::from(s.column(k).chips()[j]) * r.samples[j];
            }
            assert_relative_eq!(y.values[k], dot, max_relative = 1e-12);
        }
        let g = filtered_signatures(&s, &ChannelImpulseResponse::identity());
        let yf = matched_statistics_filtered(&r, &g).unwrap();
        for k in 0..3 {
            assert_relative_eq!(y.values[k], yf.values[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn identity_channel_matches_flat() {
        let (c, s) = setup(128, 16, vec![2.0, 3.0], 8);
        let b = SymbolVector::new(vec![-1, 1]).unwrap();
        let flat = synth_received_flat(&s, &c.amplitudes(), &b, 0.9, &mut StreamKey::new(2).rng()).unwrap();
        let sel = synth_received_selective(
            &s,
            &c.amplitudes(),
            &b,
            &ChannelImpulseResponse::identity(),
            0.9,
            &mut StreamKey::new(2).rng(),
        )
        .unwrap();
        assert_eq!(flat, sel);
    }

    #[test]
    fn single_pulse_through_three_taps() {
        let c = SystemConfig::new(8, 1, vec![4.0], 0.0, Coding::Uncoded).unwrap();
        let seq = crate::model::HoppingSequence::new(vec![3], vec![1], 8).unwrap();
        let s = SpreadingMatrix::new(vec![crate::model::build_spreading_vector(&seq, &c)]).unwrap();
        let h = ChannelImpulseResponse::new(vec![1.0, 0.9, 0.8]).unwrap();
        let r = synth_received_selective(
            &s,
            &c.amplitudes(),
            &SymbolVector::new(vec![1]).unwrap(),
            &h,
            0.0,
            &mut StreamKey::new(0).rng(),
        )
        .unwrap();
        assert_eq!(r.samples.len(), 10);
        let a = 2.0;
        let expect = [0.0, 0.0, 0.0, a, a * 0.9, a * 0.8, 0.0, 0.0, 0.0, 0.0];
        for (x, e) in r.samples.iter().zip(expect) {
            assert_relative_eq!(*x, e, epsilon = 1e-15);
        }
    }

    /// Dense lower-triangular Toeplitz `H_0` times `S A b`.
    fn toeplitz_oracle(h: &[f64], x: &[f64]) -> Vec<f64> {
        let rows = x.len() + h.len() - 1;
        let mut out = vec![0.0; rows];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, &xj) in x.iter().enumerate() {
                let d = i as isize - j as isize;
                if d >= 0 && (d as usize) < h.len() {
                    *o += h[d as usize] * xj;
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn selective_synthesis_matches_toeplitz(seed in any::<u64>(), taps in prop::collection::vec(-1.0f64..1.0, 0..6)) {
            let (c, s) = setup(48, 6, vec![1.0, 2.5, 0.3], seed);
            let mut h = vec![1.0];
            h.extend(taps);
            let h = ChannelImpulseResponse::new(h).unwrap();
            let b = SymbolVector::random(3, &mut StreamKey::new(seed).child(1).rng());
            let r = synth_received_selective(&s, &c.amplitudes(), &b, &h, 0.0, &mut StreamKey::new(0).rng()).unwrap();
            let x = synth_received_flat(&s, &c.amplitudes(), &b, 0.0, &mut StreamKey::new(0).rng()).unwrap();
            let oracle = toeplitz_oracle(h.taps(), &x.samples);
            prop_assert_eq!(r.samples.len(), oracle.len());
            for (a, e) in r.samples.iter().zip(&oracle) {
                prop_assert!((a - e).abs() < 1e-12);
            }
            let g = filtered_signatures(&s, &h);
            let gx = &g * nalgebra::DVector::from_iterator(3, c.amplitudes().amplitudes().iter().zip(b.as_slice()).map(|(a, &b)| a * f64::from(b)));
            for (a, e) in gx.iter().zip(&oracle) {
                prop_assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matched_statistic_noise_covariance() {
        let (_, s) = setup(64, 8, vec![1.0, 1.0, 1.0], 21);
        let r_mat = correlation_matrix(&s).map(|x| x as f64);
        let frames = 100_000;
        let sigma = 1.3;
        let silent = AmplitudeMatrix::from_amplitudes(vec![0.0; 3]);
        let b = SymbolVector::new(vec![1, 1, 1]).unwrap();
        let mut cov = DMatrix::<f64>::zeros(3, 3);
        let key = StreamKey::new(77);
        for t in 0..frames {
            let r = synth_received_flat(&s, &silent, &b, sigma, &mut key.child(t).rng()).unwrap();
            let y = nalgebra::DVector::from_vec(matched_statistics(&r, &s).unwrap().values);
            cov += &y * y.transpose();
        }
        cov /= frames as f64;
        let expected = r_mat * sigma * sigma;
        let rel = (&cov - &expected).norm() / expected.norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
    }

    #[test]
    fn snr_conversion() {
        assert_relative_eq!(snr_to_energy(0.0, 1.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            snr_to_energy(10.0 * 4f64.log10(), 1.0).unwrap(),
            4.0,
            max_relative = 1e-13
        );
        // 10^0.6 from ln: exp(0.6 ln 10)
        assert_relative_eq!(
            snr_to_energy(6.0, 1.0).unwrap(),
            3.981_071_705_534_972,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            snr_to_energy(3.0, 2.0).unwrap(),
            4.0 * 1.995_262_314_968_879_5,
            max_relative = 1e-13
        );
        assert!(snr_to_energy(6.0, 0.0).is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelImpulseResponse::new(vec![]).is_err());
        assert!(ChannelImpulseResponse::new(vec![0.0, 1.0]).is_err());
        assert!(ChannelImpulseResponse::new(vec![1.0, f64::NAN]).is_err());
        let h = ChannelImpulseResponse::two_path(0.5, 3).unwrap();
        assert_eq!(h.taps(), &[1.0, 0.0, 0.0, 0.5]);
        assert_relative_eq!(h.energy(), 1.25);
    }
}
