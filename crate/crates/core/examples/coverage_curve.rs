//! Guaranteed coverage of the region as a function of `k`, written as CSV.
//!
//! `cargo run --example coverage_curve > curve.csv`

use std::collections::BTreeSet;

use conformal_region::bounds::{coverage_curve, write_curve_csv, BoundMethod, NoiseAssumption};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let methods: BTreeSet<BoundMethod> = BoundMethod::ALL.into_iter().collect();
    let curve = coverage_curve(30, 50, 0.1, NoiseAssumption::symmetric(true), &methods, 0.1)?;
    write_curve_csv(&curve, std::io::stdout())?;
    Ok(())
}
