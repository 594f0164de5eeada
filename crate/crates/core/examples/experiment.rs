//! Runs a seeded Monte Carlo experiment from a JSON spec and prints its summary.
//!
//! `cargo run --release --example experiment -- spec.json out_dir`

use conformal_region::harness::{run, write_summary_csv, ExperimentName, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let spec = match args.next() {
        Some(path) => ExperimentSpec::from_path(path)?,
        None => {
            let mut s = ExperimentSpec::preset(ExperimentName::CoverageTable);
            s.trials = 50;
            s.dims = vec![3];
            s
        }
    };
    let output = run(&spec)?;
    if let Some(dir) = args.next() {
        output.write_dir(dir)?;
    }
    write_summary_csv(&output.summary, std::io::stdout())?;
    output.check_health()?;
    Ok(())
}
