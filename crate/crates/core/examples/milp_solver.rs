//! The branch-and-bound solver on a small knapsack, with an LP-format round trip.

use conformal_region::milp::{
    read_lp, solve_milp, write_lp, LinearConstraint, MilpProblem, Relation, Sense,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let weights = [12.0, 2.0, 1.0, 4.0, 1.0];
    let values = [4.0, 2.0, 1.0, 10.0, 2.0];
    let problem = MilpProblem {
        objective: values.to_vec(),
        sense: Sense::Maximize,
        continuous_bounds: Vec::new(),
        n_binary: values.len(),
        constraints: vec![LinearConstraint::new(weights.to_vec(), Relation::Le, 15.0)],
    };
    let text = write_lp(&problem);
    println!("{text}");
    let solution = solve_milp(&read_lp(&text)?, 10_000)?;
    println!(
        "{:?} value {:?} after {} nodes",
        solution.status, solution.value, solution.node_count
    );
    println!("picked {:?}", solution.assignment);
    Ok(())
}
