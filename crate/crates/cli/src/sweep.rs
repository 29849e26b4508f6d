//! Running an experiment and writing its CSV.
//!
//! Columns: `axis` is the swept value, `detector` is `DET` or
//! `DET:series`, `pulse_rate` is `N_f` at that point, `ber`, `ci_low` and
//! `ci_high` are the estimate and its 95% Wilson interval, and `analytic`
//! is the closed-form matched-filter prediction or empty.

use std::fmt::Write;

use irgain_core::montecarlo::{analytic_mf_ber, run_ber, sweep_point_plan, BerEstimate};

use crate::spec::Experiment;
use crate::CliError;

pub const CSV_HEADER: &str = "axis,detector,pulse_rate,ber,ci_low,ci_high,analytic";

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub axis_value: f64,
    pub detector: String,
    pub pulse_rate: usize,
    pub estimate: BerEstimate,
    pub analytic: Option<f64>,
}

/// Runs every job at every sweep value, in spec order.
pub fn run(exp: &Experiment, mut progress: impl FnMut(&Row)) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    for job in &exp.jobs {
        let name = job.name();
        for &v in &exp.values {
            let plan = sweep_point_plan(&job.plan, exp.axis, v).map_err(|e| CliError::Plan(e.to_string()))?;
            let estimate = run_ber(&plan).map_err(|e| CliError::Plan(e.to_string()))?;
            let analytic = if exp.analytic {
                analytic_mf_ber(&plan).map(|p| p.probability)
            } else {
                None
            };
            let row = Row {
                axis_value: v,
                detector: name.clone(),
                pulse_rate: plan.config.pulses_per_symbol(),
                estimate,
                analytic,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let analytic = r.analytic.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.axis_value, r.detector, r.pulse_rate, r.estimate.ber, r.estimate.ci_low, r.estimate.ci_high, analytic
        )
        .expect("writing to a String");
    }
    out
}
