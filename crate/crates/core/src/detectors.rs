//! Symbol decisions from the despread statistic `y = R A b + ñ`.
//!
//! Ties resolve to `+1` everywhere (`sign(0) = +1`).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::channel::MatchedStatistic;
use crate::model::AmplitudeMatrix;
use crate::{Error, Result};

/// Largest user count the exhaustive ML search accepts.
pub const ML_MAX_USERS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Mf,
    Zf,
    Mmse,
    Ml,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [DetectorKind::Mf, DetectorKind::Zf, DetectorKind::Mmse, DetectorKind::Ml];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Mf => "MF",
            DetectorKind::Zf => "ZF",
            DetectorKind::Mmse => "MMSE",
            DetectorKind::Ml => "ML",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown detector {s:?} (expected MF, ZF, MMSE or ML)")))
    }
}

/// Decided symbols, one per user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decision(pub Vec<i8>);

impl Decision {
    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }
}

fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

fn signs<'a>(v: impl IntoIterator<Item = &'a f64>) -> Decision {
    Decision(v.into_iter().map(|&x| sign(x)).collect())
}

/// How a linear detector inverted its system matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inversion {
    Direct,
    /// The matrix was singular; the Moore-Penrose pseudo-inverse was used.
    PseudoInverse,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearDecision {
    pub decision: Decision,
    pub inversion: Inversion,
}

fn check_square(y: &MatchedStatistic, r: &DMatrix<f64>) -> Result<()> {
    if r.nrows() != r.ncols() || r.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "statistic of length {} with a {}x{} correlation matrix",
            y.len(),
            r.nrows(),
            r.ncols()
        )));
    }
    Ok(())
}

fn check_amplitudes(y: &MatchedStatistic, a: &AmplitudeMatrix) -> Result<()> {
    if a.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "statistic of length {} with {} amplitudes",
            y.len(),
            a.len()
        )));
    }
    Ok(())
}

/// Solves `m x = y`, falling back to the pseudo-inverse when `m` is
/// (numerically) singular.
fn solve(m: DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, Inversion) {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let lu = m.clone().lu();
    let det = lu.determinant();
    let n = m.nrows() as i32;
    if det.abs() > 1e-10 * scale.powi(n) {
        if let Some(x) = lu.solve(y) {
            return (x, Inversion::Direct);
        }
    }
    let pinv = m
        .pseudo_inverse(1e-10 * scale)
        .expect("SVD-based pseudo-inverse with a nonnegative epsilon");
    (pinv * y, Inversion::PseudoInverse)
}

pub fn detect_mf(y: &MatchedStatistic) -> Decision {
    signs(&y.values)
}

/// Decorrelator: `sign(R⁻¹ y)`.
pub fn detect_zf(y: &MatchedStatistic, r: &DMatrix<f64>) -> Result<LinearDecision> {
    check_square(y, r)?;
    let (x, inversion) = solve(r.clone(), &DVector::from_column_slice(&y.values));
    Ok(LinearDecision {
        decision: signs(x.iter()),
        inversion,
    })
}

/// Linear MMSE: `sign((R + σ² A⁻²)⁻¹ y)`.
pub fn detect_mmse(y: &MatchedStatistic, r: &DMatrix<f64>, a: &AmplitudeMatrix, sigma: f64) -> Result<LinearDecision> {
    check_square(y, r)?;
    check_amplitudes(y, a)?;
    if a.amplitudes().iter().any(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::InvalidArgument("MMSE needs positive amplitudes".into()));
    }
    let mut m = r.clone();
    let s2 = sigma * sigma;
    for (k, amp) in a.amplitudes().iter().enumerate() {
        m[(k, k)] += s2 / (amp * amp);
    }
    let (x, inversion) = solve(m, &DVector::from_column_slice(&y.values));
    Ok(LinearDecision {
        decision: signs(x.iter()),
        inversion,
    })
}

/// Joint ML metric `2 bᵀ A y − bᵀ A R A b`.
pub fn ml_metric(b: &[i8], y: &MatchedStatistic, r: &DMatrix<f64>, a: &AmplitudeMatrix) -> f64 {
    let k = b.len();
    let ab: Vec<f64> = (0..k).map(|i| a.amplitudes()[i] * f64::from(b[i])).collect();
    let linear: f64 = (0..k).map(|i| ab[i] * y.values[i]).sum();
    let mut quad = 0.0;
    for i in 0..k {
        for j in 0..k {
            quad += ab[i] * r[(i, j)] * ab[j];
        }
    }
    2.0 * linear - quad
}

/// Hypothesis index to symbols; the first user is the most significant bit
/// and a set bit means `-1`, so a smaller index is lexicographically
/// smaller with `+1 < -1`.
fn hypothesis(index: usize, k: usize) -> Vec<i8> {
    (0..k)
        .map(|i| if index >> (k - 1 - i) & 1 == 1 { -1 } else { 1 })
        .collect()
}

/// Exhaustive joint ML over `{±1}^K`.
///
/// Candidates are walked in Gray-code order with O(K) metric updates; any
/// hypothesis within rounding distance of the running best is rescored
/// exactly, and exact ties go to the lexicographically smallest vector.
pub fn detect_ml(y: &MatchedStatistic, r: &DMatrix<f64>, a: &AmplitudeMatrix) -> Result<Decision> {
    let k = y.len();
    if k > ML_MAX_USERS {
        return Err(Error::MlInfeasible(k));
    }
    check_square(y, r)?;
    check_amplitudes(y, a)?;
    if k == 0 {
        return Ok(Decision(Vec::new()));
    }
    let amp = a.amplitudes();
    // metric = 2 bᵀv − bᵀMb with v = A y, M = A R A
    let v: Vec<f64> = (0..k).map(|i| amp[i] * y.values[i]).collect();
    let m = DMatrix::from_fn(k, k, |i, j| amp[i] * r[(i, j)] * amp[j]);
    let scale = v.iter().map(|x| x.abs()).sum::<f64>() + m.iter().map(|x| x.abs()).sum::<f64>();
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);

    // start at all +1: index 0
    let mut b = vec![1.0f64; k];
    let mut u: Vec<f64> = (0..k).map(|i| (0..k).map(|j| m[(i, j)]).sum()).collect();
    let mut metric = 2.0 * v.iter().sum::<f64>() - u.iter().sum::<f64>();
    let mut best = metric;
    let mut candidates = vec![0usize];

    for step in 1usize..(1 << k) {
        // Gray code: bit `t` of the hypothesis changes; bit t counts from the
        // least significant end, i.e. user k - 1 - t.
        let t = step.trailing_zeros() as usize;
        let user = k - 1 - t;
        let old = b[user];
        let off_diag = u[user] - m[(user, user)] * old;
        metric += -4.0 * old * v[user] + 4.0 * old * off_diag;
        b[user] = -old;
        for i in 0..k {
            u[i] -= 2.0 * old * m[(i, user)];
        }
        let index = step ^ (step >> 1);
        if metric > best + tol {
            best = metric;
            candidates.clear();
            candidates.push(index);
        } else if metric >= best - tol {
            best = best.max(metric);
            candidates.push(index);
        }
    }

    let mut winner: Option<(f64, usize)> = None;
    for index in candidates {
        let hyp = hypothesis(index, k);
        let exact = ml_metric(&hyp, y, r, a);
        winner = match winner {
            None => Some((exact, index)),
            Some((bm, bi)) if exact > bm || (exact == bm && index < bi) => Some((exact, index)),
            keep => keep,
        };
    }
    let (_, index) = winner.expect("at least one candidate");
    Ok(Decision(hypothesis(index, k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{matched_statistics, synth_received_flat};
    use crate::model::{correlation_matrix, Coding, SpreadingMatrix, SymbolVector, SystemConfig};
    use crate::rng::StreamKey;
    use proptest::prelude::*;
    use rand::Rng;

    fn stat(v: &[f64]) -> MatchedStatistic {
        MatchedStatistic::new(v.to_vec())
    }

    /// Plain Gaussian elimination with partial pivoting.
    fn gauss_solve(m: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
                row.push(y[i]);
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for c in col..=n {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (a[i][n] - s) / a[i][i];
        }
        x
    }

    /// Exhaustive search written independently: enumerate sign vectors by
    /// counting in base 2 with user 0 most significant, score with loops.
    fn brute_force_ml(y: &[f64], r: &DMatrix<f64>, amp: &[f64]) -> Vec<i8> {
        let k = y.len();
        let mut best: Option<(f64, Vec<i8>)> = None;
        for idx in 0..(1usize << k) {
            let b: Vec<i8> = (0..k)
                .map(|i| if (idx >> (k - 1 - i)) & 1 == 0 { 1 } else { -1 })
                .collect();
            let mut score = 0.0;
            for i in 0..k {
                score += 2.0 * f64::from(b[i]) * amp[i] * y[i];
                for j in 0..k {
                    score -= f64::from(b[i]) * f64::from(b[j]) * amp[i] * amp[j] * r[(i, j)];
                }
            }
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, b));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn mf_examples() {
        assert_eq!(detect_mf(&stat(&[5.0, -0.1])).0, vec![1, -1]);
        assert_eq!(detect_mf(&stat(&[0.0])).0, vec![1]);
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let a = AmplitudeMatrix::from_amplitudes(vec![1.0 / 2f64.sqrt(); 2]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let y = &r * DVector::from_vec(a.amplitudes().to_vec()).component_mul(&b);
        let half = 1.0 / 2f64.sqrt();
        assert!((y[0] - half).abs() < 1e-15 && (y[1] + half).abs() < 1e-15);
        assert_eq!(detect_mf(&stat(y.as_slice())).0, vec![1, -1]);
    }

    #[test]
    fn single_user_detectors_agree_with_mf() {
        let r = DMatrix::from_element(1, 1, 8.0);
        let a = AmplitudeMatrix::from_amplitudes(vec![0.7]);
        for v in [-3.0, -1e-9, 0.0, 2.5] {
            let y = stat(&[v]);
            let mf = detect_mf(&y);
            assert_eq!(detect_zf(&y, &r).unwrap().decision, mf);
            assert_eq!(detect_ml(&y, &r, &a).unwrap(), mf);
            assert_eq!(detect_mmse(&y, &r, &a, 1.0).unwrap().decision, mf);
        }
    }

    #[test]
    fn mmse_limits() {
        let r = DMatrix::from_row_slice(3, 3, &[4.0, 3.0, -2.0, 3.0, 4.0, 1.0, -2.0, 1.0, 4.0]);
        let a = AmplitudeMatrix::from_amplitudes(vec![1.0, 0.5, 2.0]);
        let mut rng = StreamKey::new(3).rng();
        for _ in 0..200 {
            let y = stat(&(0..3).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<_>>());
            assert_eq!(
                detect_mmse(&y, &r, &a, 0.0).unwrap().decision,
                detect_zf(&y, &r).unwrap().decision
            );
            assert_eq!(detect_mmse(&y, &r, &a, 1e6).unwrap().decision, detect_mf(&y));
        }
    }

    #[test]
    fn singular_correlation_uses_pseudo_inverse() {
        let r = DMatrix::from_row_slice(2, 2, &[4.0, 4.0, 4.0, 4.0]);
        let out = detect_zf(&stat(&[3.0, 3.0]), &r).unwrap();
        assert_eq!(out.inversion, Inversion::PseudoInverse);
        assert_eq!(out.decision.0, vec![1, 1]);
        let ok = detect_zf(&stat(&[3.0, 3.0]), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(ok.inversion, Inversion::Direct);
    }

    #[test]
    fn ml_rejects_large_systems() {
        let k = 21;
        let y = stat(&vec![0.0; k]);
        let r = DMatrix::identity(k, k);
        let a = AmplitudeMatrix::from_amplitudes(vec![1.0; k]);
        assert_eq!(detect_ml(&y, &r, &a), Err(Error::MlInfeasible(21)));
    }

    #[test]
    fn ml_tie_breaks_lexicographically() {
        // y = 0 and R = 0: every hypothesis scores 0.
        let r = DMatrix::zeros(3, 3);
        let a = AmplitudeMatrix::from_amplitudes(vec![1.0; 3]);
        assert_eq!(detect_ml(&stat(&[0.0; 3]), &r, &a).unwrap().0, vec![1, 1, 1]);
        // identical users: b and its swap tie; first user's +1 wins
        let r = DMatrix::from_element(2, 2, 4.0);
        let a = AmplitudeMatrix::from_amplitudes(vec![1.0; 2]);
        assert_eq!(detect_ml(&stat(&[0.0, 0.0]), &r, &a).unwrap().0, vec![1, -1]);
    }

    #[test]
    fn detectors_reject_mismatched_inputs() {
        let r = DMatrix::identity(2, 2);
        let a = AmplitudeMatrix::from_amplitudes(vec![1.0; 3]);
        assert!(detect_zf(&stat(&[1.0; 3]), &r).is_err());
        assert!(detect_ml(&stat(&[1.0; 2]), &r, &a).is_err());
        assert!(detect_mmse(&stat(&[1.0; 2]), &r, &a, 1.0).is_err());
    }

    fn random_instance(
        seed: u64,
        k: usize,
        nf: usize,
        coding: Coding,
    ) -> (DMatrix<f64>, AmplitudeMatrix, Vec<i8>, SpreadingMatrix) {
        let mut rng = StreamKey::new(seed).rng();
        let energies: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..4.0)).collect();
        let c = SystemConfig::new(nf * 4, nf, energies, 1.0, coding).unwrap();
        let key = StreamKey::new(seed).child(1);
        let s = SpreadingMatrix::generate(&c, |u| key.user(u).rng());
        let r = correlation_matrix(&s).map(|x| x as f64);
        let b = SymbolVector::random(k, &mut key.child(2).rng());
        (r, c.amplitudes(), b.as_slice().to_vec(), s)
    }

    proptest! {
        #[test]
        fn noiseless_invertible_instances_recover_truth(seed in any::<u64>(), k in 1usize..6) {
            let (r, a, b, s) = random_instance(seed, k, 32, Coding::Coded);
            prop_assume!(r.clone().cholesky().is_some() && r.determinant() > 1e-6);
            let rx = synth_received_flat(&s, &a, &SymbolVector::new(b.clone()).unwrap(), 0.0, &mut StreamKey::new(0).rng()).unwrap();
            let y = matched_statistics(&rx, &s).unwrap();
            prop_assert_eq!(&detect_zf(&y, &r).unwrap().decision.0, &b);
            prop_assert_eq!(&detect_mmse(&y, &r, &a, 0.0).unwrap().decision.0, &b);
            prop_assert_eq!(&detect_ml(&y, &r, &a).unwrap().0, &b);
        }

        #[test]
        fn zf_matches_gaussian_elimination(seed in any::<u64>()) {
            let (r, _, _, _) = random_instance(seed, 3, 32, Coding::Coded);
            prop_assume!(r.determinant().abs() > 1e-6);
            let mut rng = StreamKey::new(seed).child(9).rng();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
            let x = gauss_solve(&r, &y);
            let expect: Vec<i8> = x.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
            prop_assert_eq!(detect_zf(&stat(&y), &r).unwrap().decision.0, expect);
        }

        #[test]
        fn mmse_matches_direct_solve(seed in any::<u64>(), sigma in 0.1f64..5.0) {
            let (r, a, _, _) = random_instance(seed, 4, 16, Coding::Coded);
            let mut rng = StreamKey::new(seed).child(9).rng();
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
            let mut m = r.clone();
            for k in 0..4 {
                m[(k, k)] += sigma * sigma / (a.amplitudes()[k] * a.amplitudes()[k]);
            }
            let x = gauss_solve(&m, &y);
            let expect: Vec<i8> = x.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
            prop_assert_eq!(detect_mmse(&stat(&y), &r, &a, sigma).unwrap().decision.0, expect);
        }

        #[test]
        fn ml_matches_enumeration_and_dominates(seed in any::<u64>(), k in 1usize..7, uncoded in any::<bool>()) {
            let coding = if uncoded { Coding::Uncoded } else { Coding::Coded };
            let (r, a, b, s) = random_instance(seed, k, 8, coding);
            let rx = synth_received_flat(&s, &a, &SymbolVector::new(b).unwrap(), 1.0, &mut StreamKey::new(seed).child(5).rng()).unwrap();
            let y = matched_statistics(&rx, &s).unwrap();
            let ml = detect_ml(&y, &r, &a).unwrap();
            prop_assert_eq!(&ml.0, &brute_force_ml(&y.values, &r, a.amplitudes()));
            let best = ml_metric(&ml.0, &y, &r, &a);
            for other in [
                detect_mf(&y),
                detect_zf(&y, &r).unwrap().decision,
                detect_mmse(&y, &r, &a, 1.0).unwrap().decision,
            ] {
                prop_assert!(best >= ml_metric(&other.0, &y, &r, &a));
            }
        }

        #[test]
        fn decisions_are_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
            // scaling r by c scales y by c and A by c, R unchanged; σ by c.
            let (r, a, b, s) = random_instance(seed, 4, 8, Coding::Coded);
            let rx = synth_received_flat(&s, &a, &SymbolVector::new(b).unwrap(), 1.0, &mut StreamKey::new(seed).child(5).rng()).unwrap();
            let y = matched_statistics(&rx, &s).unwrap();
            let ys = stat(&y.values.iter().map(|v| v * scale).collect::<Vec<_>>());
            let a_s = AmplitudeMatrix::from_amplitudes(a.amplitudes().iter().map(|v| v * scale).collect());
            prop_assert_eq!(detect_mf(&y), detect_mf(&ys));
            prop_assert_eq!(detect_zf(&y, &r).unwrap().decision, detect_zf(&ys, &r).unwrap().decision);
            prop_assert_eq!(detect_mmse(&y, &r, &a, 1.0).unwrap().decision, detect_mmse(&ys, &r, &a_s, scale).unwrap().decision);
            prop_assert_eq!(detect_ml(&y, &r, &a).unwrap(), detect_ml(&ys, &r, &a_s).unwrap());
        }
    }

    #[test]
    fn detector_names_round_trip() {
        for d in DetectorKind::ALL {
            assert_eq!(d.name().parse::<DetectorKind>().unwrap(), d);
        }
        assert!("rake".parse::<DetectorKind>().is_err());
    }
}
