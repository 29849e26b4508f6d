//! The verification suite: every distributional check plus the analytic
//! grid checks, each retried once on a fresh stream if it fails.

use std::fmt::Write;
use std::str::FromStr;

use rand::Rng;

use irgain_core::analysis::{isi_q_argument, mf_monotonicity_conditions};
use irgain_core::channel::{snr_to_energy, ChannelImpulseResponse};
use irgain_core::model::divisors;
use irgain_core::rng::StreamKey;
use irgain_core::stats::{
    check_coded_symmetry, check_fsd_dominance, check_interference_distribution, check_lemma1_normality,
    check_self_collision_probability, check_uncoded_moments, retry_once, Attempts, CheckOutcome, VerificationReport,
};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// 10^4 samples per check, thresholds doubled.
    Quick,
    /// 10^5 samples per check (10^6 frames for the collision count).
    Full,
}

impl FromStr for Scale {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "quick" => Ok(Scale::Quick),
            "full" => Ok(Scale::Full),
            other => Err(CliError::Parse(format!(
                "unknown scale {other:?} (expected quick or full)"
            ))),
        }
    }
}

impl Scale {
    fn samples(self) -> usize {
        match self {
            Scale::Quick => 10_000,
            Scale::Full => 100_000,
        }
    }

    fn frames(self) -> usize {
        10 * self.samples()
    }

    fn relax(self, outcome: CheckOutcome) -> CheckOutcome {
        match self {
            Scale::Full => outcome,
            Scale::Quick => CheckOutcome {
                reports: outcome
                    .reports
                    .into_iter()
                    .map(|r| VerificationReport::new(r.check_name, r.statistic, 2.0 * r.threshold, r.sample_size))
                    .collect(),
                summary: outcome.summary,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub group: String,
    pub attempts: Attempts,
}

type CheckFn = Box<dyn Fn(StreamKey) -> irgain_core::Result<CheckOutcome>>;

fn keep(outcome: CheckOutcome, names: &[&str]) -> CheckOutcome {
    CheckOutcome {
        reports: outcome
            .reports
            .into_iter()
            .filter(|r| names.contains(&r.check_name.as_str()))
            .collect(),
        summary: outcome.summary,
    }
}

fn checks(scale: Scale) -> Vec<(&'static str, CheckFn)> {
    let n = scale.samples();
    let frames = scale.frames();
    vec![
        (
            "lemma1_N4096_Nf512",
            Box::new(move |k| check_lemma1_normality(4096, 512, n, k)),
        ),
        (
            "uncoded_N1024_Nc16",
            Box::new(move |k| check_uncoded_moments(1024, 16, n, k)),
        ),
        (
            "uncoded_N128_Nc8",
            Box::new(move |k| check_uncoded_moments(128, 8, n, k)),
        ),
        (
            "fsd_N256_Nf4_Nf64",
            Box::new(move |k| check_fsd_dominance(256, 4, 64, n, k)),
        ),
        (
            "symmetry_N256_Nf16",
            Box::new(move |k| check_coded_symmetry(256, 16, n, k)),
        ),
        (
            "interference_N4096_Nc8_l4",
            Box::new(move |k| check_interference_distribution(1.0, 1.0, 0.5, 4, 4096, 8, n, k)),
        ),
        (
            "interference_N4096_Nc64_l4",
            Box::new(move |k| {
                check_interference_distribution(1.0, 1.0, 0.5, 4, 4096, 64, n, k)
                    .map(|o| keep(o, &["interference.mean", "interference.variance"]))
            }),
        ),
        (
            "self_collision_Nc64_l4",
            Box::new(move |k| check_self_collision_probability(64, 4, frames, k)),
        ),
        ("isi_argument_monotone", Box::new(|_| Ok(isi_argument_monotone()))),
        (
            "monotonicity_conditions",
            Box::new(|k| Ok(monotonicity_conditions_agree(k, 50))),
        ),
    ]
}

/// Counts `N_c` steps where the general-channel `Q` argument decreases,
/// over every divisor of `N ∈ {64, 128, 256}` for several channels and
/// power profiles.
pub fn isi_argument_monotone() -> CheckOutcome {
    let channels = [
        vec![1.0],
        vec![1.0, 0.9, 0.8],
        vec![1.0, 0.0, 0.0, 0.0, 0.5],
        (0..40).map(|i| 0.9f64.powi(i)).collect::<Vec<_>>(),
    ];
    let mut cases = 0;
    let mut violations = 0;
    for taps in &channels {
        let h = ChannelImpulseResponse::new(taps.clone()).expect("valid taps");
        for n in [64, 128, 256] {
            for snr in [0.0, 4.0, 8.0, 12.0] {
                let e = snr_to_energy(snr, 1.0).expect("positive sigma");
                for energies in [vec![e], vec![e, e, 2.0 * e], vec![e; 8]] {
                    let args: Vec<f64> = divisors(n)
                        .into_iter()
                        .map(|nc| isi_q_argument(&energies, &h, 1.0, n, nc).expect("divisor"))
                        .collect();
                    cases += 1;
                    if args.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
                        violations += 1;
                    }
                }
            }
        }
    }
    CheckOutcome {
        reports: vec![VerificationReport::new(
            "analysis.isi_violations",
            f64::from(violations),
            0.0,
            cases,
        )],
        summary: None,
    }
}

/// Draws parameter sets meeting the sufficient conditions and counts those
/// whose two-user approximation is not monotone over the divisor grid.
pub fn monotonicity_conditions_agree(key: StreamKey, draws: usize) -> CheckOutcome {
    let mut rng = key.rng();
    let mut found = 0;
    let mut violations = 0;
    while found < draws {
        let n = [64, 128, 256][rng.random_range(0..3)];
        let nf = n as f64;
        let e1 = nf * 10f64.powf(rng.random_range(-3.0..0.0));
        let e2 = nf * 10f64.powf(rng.random_range(-3.0..0.0));
        let report = mf_monotonicity_conditions(e1, e2, 1.0, n);
        if report.conditions_met {
            found += 1;
            if !report.grid_check {
                violations += 1;
            }
        }
    }
    CheckOutcome {
        reports: vec![VerificationReport::new(
            "analysis.condition_violations",
            f64::from(violations),
            0.0,
            draws,
        )],
        summary: None,
    }
}

/// Runs the suite. Check `i` draws from `StreamKey::new(seed).child(i)`.
pub fn run(seed: u64, scale: Scale) -> Result<Vec<CheckResult>, CliError> {
    let root = StreamKey::new(seed);
    checks(scale)
        .into_iter()
        .enumerate()
        .map(|(i, (group, check))| {
            let attempts = retry_once(root.child(i as u64), |k| check(k).map(|o| scale.relax(o)))
                .map_err(|e| CliError::Plan(format!("{group}: {e}")))?;
            Ok(CheckResult {
                group: group.to_owned(),
                attempts,
            })
        })
        .collect()
}

fn clause(name: &str) -> &str {
    name.rsplit('.').next().unwrap_or(name)
}

/// Tab-separated report, one line per clause and attempt.
pub fn report_tsv(results: &[CheckResult]) -> String {
    let mut out = String::from("check\tstatistic\tthreshold\tpass\tsample_size\tattempt\n");
    for r in results {
        let attempts = std::iter::once(&r.attempts.first).chain(r.attempts.retry.as_ref());
        for (a, outcome) in attempts.enumerate() {
            for rep in &outcome.reports {
                let _ = writeln!(
                    out,
                    "{}.{}\t{}\t{}\t{}\t{}\t{}",
                    r.group,
                    clause(&rep.check_name),
                    rep.statistic,
                    rep.threshold,
                    rep.pass,
                    rep.sample_size,
                    a + 1
                );
            }
        }
    }
    out
}

/// Names of checks still failing after their retry.
pub fn failures(results: &[CheckResult]) -> Vec<String> {
    results
        .iter()
        .flat_map(|r| {
            r.attempts
                .final_outcome()
                .reports
                .iter()
                .filter(|rep| !rep.pass)
                .map(move |rep| format!("{}.{}", r.group, clause(&rep.check_name)))
        })
        .collect()
}
