//! Builds the confidence region on one synthetic draw and prints the
//! coordinate-wise intervals around the true parameter.

use conformal_region::bounds::{BoundMethod, BoundRequest, NoiseAssumption, WorstCaseGrid};
use conformal_region::conformal::{intervals_for, split_calibrate};
use conformal_region::milp::SolverConfig;
use conformal_region::region::build_region;
use conformal_region::synthetic::{sample_scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = sample_scenario(&ScenarioConfig {
        n_obs: 40,
        ..ScenarioConfig::default()
    })?;
    let cal = split_calibrate(&scenario.labelled, 0.1, 0.5, 3)?;
    let intervals = intervals_for(&cal, &scenario.unlabelled)?;
    let req = BoundRequest {
        n: scenario.unlabelled.len(),
        n_cal: cal.n_cal(),
        alpha: 0.1,
        beta: 0.1,
        delta: 0.1,
        noise: NoiseAssumption::symmetric(true),
        pac_refined: true,
        grid: WorstCaseGrid::default(),
    };
    let sel = req.select(BoundMethod::Split, 0)?;
    let region = build_region(&intervals, &scenario.unlabelled, &sel, None)?;
    println!("k = {} of n = {}", sel.k, region.n());
    println!(
        "true parameter votes: {}",
        region.membership(&scenario.theta_star)?.votes
    );

    match region.coordinate_intervals(&SolverConfig::default())? {
        Some(ci) => {
            for (c, t) in ci.intervals.iter().zip(&scenario.theta_star) {
                println!("{c}  width {:.3}  true {t:.3}", c.width());
            }
            println!("branch-and-bound nodes: {}", ci.node_count);
        }
        None => println!("region is empty"),
    }
    Ok(())
}
