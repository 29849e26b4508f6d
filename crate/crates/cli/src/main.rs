use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irgain_cli::spec::{ExperimentSpec, Overrides};
use irgain_cli::verify::{self, Scale};
use irgain_cli::{scenarios, svg, sweep, CliError};

#[derive(Parser)]
#[command(
    name = "irgain",
    version,
    about = "Time-hopping impulse radio BER sweeps and verification"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "IRGAIN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER sweep from a spec file or a built-in scenario.
    Sweep(Box<SweepArgs>),
    /// Run the verification suite and write a report.
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// quick or full
        #[arg(long, default_value = "full")]
        scale: String,
        /// Report path (TSV); printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Built-in scenarios.
    Scenarios {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// List built-in scenario names.
    List,
    /// Print a built-in scenario's spec file.
    Show { name: String },
}

#[derive(Args)]
struct SweepArgs {
    /// Spec file (TOML).
    #[arg(required_unless_present = "scenario", conflicts_with = "scenario")]
    spec: Option<PathBuf>,
    /// Built-in scenario name instead of a spec file.
    #[arg(long)]
    scenario: Option<String>,
    /// CSV output path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// SVG plot output path.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    total_gain: Option<usize>,
    #[arg(long)]
    pulse_rate: Option<usize>,
    #[arg(long)]
    num_users: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// coded or uncoded
    #[arg(long)]
    coding: Option<String>,
    /// Comma-separated channel taps.
    #[arg(long, value_delimiter = ',')]
    channel: Option<Vec<f64>>,
    /// Comma-separated detectors (MF, ZF, MMSE, ML).
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    ml_trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Early-stop error count; 0 disables early stopping.
    #[arg(long)]
    max_errors: Option<u64>,
    #[arg(long)]
    target_user: Option<usize>,
    /// first-path or channel-matched
    #[arg(long)]
    mf_mode: Option<String>,
    #[arg(long)]
    analytic: Option<bool>,
    /// pulse_rate, snr_db or num_users
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Suppress per-point progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

impl SweepArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            total_gain: self.total_gain,
            pulse_rate: self.pulse_rate,
            num_users: self.num_users,
            snr_db: self.snr_db,
            noise_sigma: self.noise_sigma,
            coding: self.coding.clone(),
            channel: self.channel.clone(),
            detectors: self.detectors.clone(),
            trials: self.trials,
            ml_trials: self.ml_trials,
            seed: self.seed,
            max_errors: self.max_errors,
            target_user: self.target_user,
            mf_mode: self.mf_mode.clone(),
            analytic: self.analytic,
            axis: self.axis.clone(),
            values: self.values.clone(),
        }
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Parse(format!("cannot write {}: {e}", path.display())))
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let (text, origin) = match (&args.scenario, &args.spec) {
        (Some(name), _) => {
            let s = scenarios::find(name).ok_or_else(|| {
                let known: Vec<&str> = scenarios::SCENARIOS.iter().map(|s| s.name).collect();
                CliError::Parse(format!("unknown scenario {name:?}; known: {}", known.join(", ")))
            })?;
            (s.text.to_owned(), format!("{name}.toml"))
        }
        (None, Some(path)) => (
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?,
            path.display().to_string(),
        ),
        (None, None) => unreachable!("clap requires a spec or a scenario"),
    };
    let mut spec = ExperimentSpec::parse(&text, &origin)?;
    spec.apply(&args.overrides());
    let exp = spec.resolve()?;
    let rows = sweep::run(&exp, |r| {
        if !args.quiet {
            eprintln!(
                "{} {}={} ber={} ({} errors / {} trials)",
                r.detector, exp.axis, r.axis_value, r.estimate.ber, r.estimate.errors, r.estimate.trials
            );
        }
    })?;
    let csv = sweep::to_csv(&rows);
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.svg {
        write_file(path, &svg::render(&rows, exp.axis, &exp.name))?;
    }
    Ok(())
}

fn cmd_verify(seed: u64, scale: &str, report: Option<&PathBuf>) -> Result<(), CliError> {
    let scale: Scale = scale.parse()?;
    let results = verify::run(seed, scale)?;
    let tsv = verify::report_tsv(&results);
    match report {
        Some(path) => write_file(path, &tsv)?,
        None => print!("{tsv}"),
    }
    for r in &results {
        let retried = if r.attempts.retry.is_some() { " (retried)" } else { "" };
        let status = if r.attempts.pass() { "pass" } else { "FAIL" };
        eprintln!("{status} {}{retried}", r.group);
    }
    let failed = verify::failures(&results);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Parse(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Verify { seed, scale, report } => cmd_verify(seed, &scale, report.as_ref()),
        Command::Scenarios {
            command: ScenarioCommand::List,
        } => {
            for s in scenarios::SCENARIOS {
                println!("{}\t{}", s.name, scenarios::description(s));
            }
            Ok(())
        }
        Command::Scenarios {
            command: ScenarioCommand::Show { name },
        } => {
            let s = scenarios::find(&name).ok_or_else(|| CliError::Parse(format!("unknown scenario {name:?}")))?;
            print!("{}", s.text);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("irgain: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
