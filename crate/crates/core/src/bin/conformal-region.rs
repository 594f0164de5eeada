use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use conformal_region::harness::{self, ExperimentName, ExperimentOutput, ExperimentSpec};
use conformal_region::Result;

/// Confidence regions for linear parameters from split conformal intervals.
///
/// Each subcommand runs one seeded experiment and writes trials.csv,
/// summary.csv, timings.csv and meta.json to --out. The coverage curve also
/// writes curve.csv (method,k,coverage); the abstention sweep writes
/// sweep.csv (threshold,rejection_rate,mse_accepted,accepted,total).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment spec; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; nothing is written when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Emit::Csv)]
    emit: Emit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Coverage of the true parameter per method, noise and dimension.
    Coverage,
    /// Coordinate-wise interval widths of the region.
    Widths,
    /// Emptiness test of the region on a nonlinear model and a linear null.
    Reject,
    /// Coverage of noisy against noise-free outputs.
    Noisefree,
    /// Guaranteed coverage as a function of k, with the PAC delta sweep.
    Curve,
    /// Rejection rate and accepted-point error against the width threshold.
    Abstain,
    /// Short run of every experiment with sanity checks.
    Selftest,
}

impl Command {
    fn experiment(&self) -> Option<ExperimentName> {
        Some(match self {
            Self::Coverage => ExperimentName::CoverageTable,
            Self::Widths => ExperimentName::WidthTable,
            Self::Reject => ExperimentName::RejectionTest,
            Self::Noisefree => ExperimentName::NoiseFreeVsNoisy,
            Self::Curve => ExperimentName::CoverageCurve,
            Self::Abstain => ExperimentName::AbstentionSweep,
            Self::Selftest => return None,
        })
    }
}

fn resolve(cli: &Cli, name: ExperimentName) -> Result<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(p) => ExperimentSpec::from_path(p)?,
        None => ExperimentSpec::preset(name),
    };
    spec.name = name;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(t) = cli.trials {
        spec.trials = t;
    }
    if let Some(w) = cli.workers {
        spec.workers = w;
    }
    if let Some(o) = &cli.out {
        spec.out = Some(o.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn emit(out: &ExperimentOutput, how: Emit) -> Result<()> {
    match how {
        Emit::Csv => {
            if let Some(c) = &out.curve {
                conformal_region::bounds::write_curve_csv(c, std::io::stdout())?;
            } else if let Some(s) = &out.sweep {
                conformal_region::abstain::write_sweep_csv(s, std::io::stdout())?;
            } else {
                harness::write_summary_csv(&out.summary, std::io::stdout())?;
            }
        }
        Emit::Json => {
            let v = serde_json::json!({
                "summary": out.summary,
                "curve": out.curve,
                "sweep": out.sweep,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}

fn run_one(spec: &ExperimentSpec, how: Emit) -> Result<ExperimentOutput> {
    let out = harness::run(spec)?;
    if let Some(dir) = &spec.out {
        out.write_dir(dir)?;
    }
    emit(&out, how)?;
    out.check_health()?;
    Ok(out)
}

fn selftest(cli: &Cli) -> Result<bool> {
    let mut ok = true;
    let names = [
        ExperimentName::CoverageTable,
        ExperimentName::WidthTable,
        ExperimentName::RejectionTest,
        ExperimentName::NoiseFreeVsNoisy,
        ExperimentName::CoverageCurve,
        ExperimentName::AbstentionSweep,
    ];
    for name in names {
        let mut spec = resolve(cli, name)?;
        spec.trials = cli.trials.unwrap_or(3);
        spec.dims = vec![3];
        spec.n_test = spec.n_test.min(200);
        if let Some(dir) = &cli.out {
            spec.out = Some(dir.join(name.as_str()));
        }
        let out = harness::run(&spec)?;
        if let Some(dir) = &spec.out {
            out.write_dir(dir)?;
        }
        let pass = out.check_health().is_ok() && out.summary == harness::summarize(&out.records);
        println!("{} {}", if pass { "ok  " } else { "FAIL" }, name.as_str());
        ok &= pass;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command.experiment() {
        Some(name) => resolve(&cli, name)
            .and_then(|s| run_one(&s, cli.emit))
            .map(|_| true),
        None => selftest(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
