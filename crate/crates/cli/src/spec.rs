//! Experiment spec files.
//!
//! A spec is a TOML document. Top-level keys describe the base system and
//! run; `[sweep]` names the axis; optional `[[series]]` tables repeat the
//! sweep with a few parameters changed. See `scenarios/*.toml` for
//! complete examples.

use serde::Deserialize;

use irgain_core::channel::snr_to_energy;
use irgain_core::detectors::DetectorKind;
use irgain_core::model::{Coding, SystemConfig};
use irgain_core::montecarlo::{sweep_point_plan, ChannelModel, MfMode, SweepAxis, TrialPlan};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: Option<String>,
    pub description: Option<String>,
    pub total_gain: usize,
    /// Defaults to `total_gain` (one chip per frame).
    pub pulse_rate: Option<usize>,
    pub num_users: usize,
    /// SNR of the target user in dB.
    pub snr_db: f64,
    /// Per-user offsets from `snr_db`; defaults to all zero.
    pub snr_offsets_db: Option<Vec<f64>>,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_coding")]
    pub coding: String,
    /// Chip-spaced channel taps; `[1.0]` is the flat channel.
    pub channel: Option<Vec<f64>>,
    pub detectors: Vec<String>,
    pub trials: u64,
    /// Trial count for the ML detector; defaults to `trials`.
    pub ml_trials: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    /// Early stop after this many errors; 0 disables early stopping.
    pub max_errors: Option<u64>,
    #[serde(default)]
    pub target_user: usize,
    pub mf_mode: Option<String>,
    #[serde(default)]
    pub analytic: bool,
    pub sweep: SweepSection,
    #[serde(default)]
    pub series: Vec<SeriesSection>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    pub values: Vec<f64>,
}

/// Parameters a series may change relative to the base spec.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub label: String,
    pub pulse_rate: Option<usize>,
    pub snr_db: Option<f64>,
    pub num_users: Option<usize>,
    pub snr_offsets_db: Option<Vec<f64>>,
    pub coding: Option<String>,
    pub channel: Option<Vec<f64>>,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_coding() -> String {
    "coded".into()
}

/// Command-line values that replace spec values, in the base spec and in
/// every series.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub total_gain: Option<usize>,
    pub pulse_rate: Option<usize>,
    pub num_users: Option<usize>,
    pub snr_db: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub coding: Option<String>,
    pub channel: Option<Vec<f64>>,
    pub detectors: Option<Vec<String>>,
    pub trials: Option<u64>,
    pub ml_trials: Option<u64>,
    pub seed: Option<u64>,
    pub max_errors: Option<u64>,
    pub target_user: Option<usize>,
    pub mf_mode: Option<String>,
    pub analytic: Option<bool>,
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl ExperimentSpec {
    /// Parses spec text; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            CliError::Parse(format!("{origin}:{line}:{col}: {}", e.message()))
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut self.total_gain, &o.total_gain);
        set_opt(&mut self.pulse_rate, &o.pulse_rate);
        set(&mut self.num_users, &o.num_users);
        set(&mut self.snr_db, &o.snr_db);
        set(&mut self.noise_sigma, &o.noise_sigma);
        set(&mut self.coding, &o.coding);
        set_opt(&mut self.channel, &o.channel);
        set(&mut self.detectors, &o.detectors);
        set(&mut self.trials, &o.trials);
        set_opt(&mut self.ml_trials, &o.ml_trials);
        set(&mut self.seed, &o.seed);
        set_opt(&mut self.max_errors, &o.max_errors);
        set(&mut self.target_user, &o.target_user);
        set_opt(&mut self.mf_mode, &o.mf_mode);
        set(&mut self.analytic, &o.analytic);
        set(&mut self.sweep.axis, &o.axis);
        set(&mut self.sweep.values, &o.values);
        if o.num_users.is_some() {
            self.snr_offsets_db = None;
        }
        for s in &mut self.series {
            s.pulse_rate = o.pulse_rate.or(s.pulse_rate);
            s.snr_db = o.snr_db.or(s.snr_db);
            if o.num_users.is_some() {
                s.num_users = None;
                s.snr_offsets_db = None;
            }
            set_opt(&mut s.coding, &o.coding);
            set_opt(&mut s.channel, &o.channel);
        }
    }

    /// Resolves the spec into validated sweep jobs. Every sweep point is
    /// checked here, before any simulation runs.
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        let axis: SweepAxis = self.sweep.axis.parse().map_err(plan_error)?;
        if self.sweep.values.is_empty() {
            return Err(CliError::Plan("sweep needs at least one value".into()));
        }
        if self.detectors.is_empty() {
            return Err(CliError::Plan("at least one detector is required".into()));
        }
        let detectors = self
            .detectors
            .iter()
            .map(|d| d.parse::<DetectorKind>().map_err(plan_error))
            .collect::<Result<Vec<_>, _>>()?;
        let base_series = SeriesSection::default();
        let series: Vec<(Option<&str>, &SeriesSection)> = if self.series.is_empty() {
            vec![(None, &base_series)]
        } else {
            self.series.iter().map(|s| (Some(s.label.as_str()), s)).collect()
        };
        let mut jobs = Vec::new();
        for (label, s) in series {
            for &detector in &detectors {
                let plan = self.base_plan(s, detector)?;
                for &v in &self.sweep.values {
                    sweep_point_plan(&plan, axis, v).map_err(plan_error)?;
                }
                jobs.push(SweepJob {
                    label: label.map(str::to_owned),
                    plan,
                });
            }
        }
        Ok(Experiment {
            name: self.name.clone().unwrap_or_else(|| "experiment".into()),
            axis,
            values: self.sweep.values.clone(),
            analytic: self.analytic,
            jobs,
        })
    }

    fn base_plan(&self, s: &SeriesSection, detector: DetectorKind) -> Result<TrialPlan, CliError> {
        let n = self.total_gain;
        let nf = s.pulse_rate.or(self.pulse_rate).unwrap_or(n);
        let k = s.num_users.unwrap_or(self.num_users);
        let snr = s.snr_db.unwrap_or(self.snr_db);
        let offsets = match (&s.snr_offsets_db, &self.snr_offsets_db, s.num_users) {
            (Some(o), _, _) => o.clone(),
            (None, Some(o), None) => o.clone(),
            _ => vec![0.0; k],
        };
        if offsets.len() != k {
            return Err(CliError::Plan(format!(
                "snr_offsets_db has {} entries for {k} users",
                offsets.len()
            )));
        }
        let energies = offsets
            .iter()
            .map(|off| snr_to_energy(snr + off, self.noise_sigma))
            .collect::<irgain_core::Result<Vec<_>>>()
            .map_err(plan_error)?;
        let coding: Coding = s
            .coding
            .as_deref()
            .unwrap_or(&self.coding)
            .parse()
            .map_err(plan_error)?;
        let config = SystemConfig::new(n, nf, energies, self.noise_sigma, coding).map_err(plan_error)?;
        let taps = s
            .channel
            .clone()
            .or_else(|| self.channel.clone())
            .unwrap_or_else(|| vec![1.0]);
        let channel = ChannelModel::from_taps(taps).map_err(plan_error)?;
        let trials = match detector {
            DetectorKind::Ml => self.ml_trials.unwrap_or(self.trials),
            _ => self.trials,
        };
        let max_errors = match self.max_errors {
            Some(0) => None,
            Some(m) => Some(m),
            None => Some(irgain_core::montecarlo::DEFAULT_MAX_ERRORS),
        };
        let mf_mode: MfMode = match &self.mf_mode {
            Some(m) => m.parse().map_err(plan_error)?,
            None => MfMode::FirstPath,
        };
        let plan = TrialPlan::new(config, detector)
            .channel(channel)
            .trials(trials)
            .seed(self.seed)
            .max_errors(max_errors)
            .target_user(self.target_user)
            .mf_mode(mf_mode);
        plan.validate().map_err(plan_error)?;
        Ok(plan)
    }
}

fn plan_error(e: irgain_core::Error) -> CliError {
    CliError::Plan(e.to_string())
}

/// One curve: a detector on one series.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepJob {
    pub label: Option<String>,
    pub plan: TrialPlan,
}

impl SweepJob {
    /// `DET` or `DET:label`.
    pub fn name(&self) -> String {
        match &self.label {
            Some(l) => format!("{}:{l}", self.plan.detector),
            None => self.plan.detector.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub analytic: bool,
    pub jobs: Vec<SweepJob>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
total_gain = 128
num_users = 2
snr_db = 6.0
detectors = ["MF", "ML"]
trials = 1000

[sweep]
axis = "pulse_rate"
values = [1, 8]
"#;

    #[test]
    fn minimal_spec_resolves() {
        let e = ExperimentSpec::parse(MINIMAL, "t").unwrap().resolve().unwrap();
        assert_eq!(e.jobs.len(), 2);
        assert_eq!(e.jobs[0].name(), "MF");
        assert_eq!(e.jobs[0].plan.config.pulses_per_symbol(), 128);
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = "total_gain = 128\nnum_users = \"two\"\n";
        match ExperimentSpec::parse(text, "bad.toml") {
            Err(CliError::Parse(msg)) => assert!(msg.starts_with("bad.toml:2:13:"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentSpec::parse(&format!("{MINIMAL}\nbogus = 1\n"), "t"),
            Err(CliError::Parse(_))
        ));
    }

    #[test]
    fn infeasible_plans_are_plan_errors() {
        let mut spec = ExperimentSpec::parse(MINIMAL, "t").unwrap();
        spec.sweep.values = vec![7.0];
        assert!(matches!(spec.resolve(), Err(CliError::Plan(_))));
        let mut spec = ExperimentSpec::parse(MINIMAL, "t").unwrap();
        spec.num_users = 21;
        assert!(matches!(spec.resolve(), Err(CliError::Plan(_))));
    }

    #[test]
    fn flags_win_over_file_and_series() {
        let text = format!("{MINIMAL}\n[[series]]\nlabel = \"a\"\npulse_rate = 32\n");
        let mut spec = ExperimentSpec::parse(&text, "t").unwrap();
        spec.apply(&Overrides {
            pulse_rate: Some(4),
            trials: Some(10),
            detectors: Some(vec!["MMSE".into()]),
            axis: Some("snr_db".into()),
            values: Some(vec![0.0]),
            ..Overrides::default()
        });
        let e = spec.resolve().unwrap();
        assert_eq!(e.jobs.len(), 1);
        assert_eq!(e.jobs[0].name(), "MMSE:a");
        assert_eq!(e.jobs[0].plan.config.pulses_per_symbol(), 4);
        assert_eq!(e.jobs[0].plan.num_trials, 10);
    }

    #[test]
    fn offsets_set_unequal_powers() {
        let text = MINIMAL.replace("snr_db = 6.0", "snr_db = 5.0\nsnr_offsets_db = [0.0, 3.0]");
        let e = ExperimentSpec::parse(&text, "t").unwrap().resolve().unwrap();
        let en = e.jobs[0].plan.config.energies();
        assert!((en[1] / en[0] - 10f64.powf(0.3)).abs() < 1e-12);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
