//! Vote threshold `k` selected by each bound at a target coverage.

use conformal_region::bounds::{BoundMethod, BoundRequest, NoiseAssumption, WorstCaseGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let req = BoundRequest {
        n: 30,
        n_cal: 50,
        alpha: 0.1,
        beta: 0.1,
        delta: 0.1,
        noise: NoiseAssumption::symmetric(true),
        pac_refined: true,
        grid: WorstCaseGrid::default(),
    };
    println!("method      k   guaranteed coverage");
    for method in BoundMethod::ALL {
        let sel = req.select(method, 7)?;
        println!(
            "{:<11} {:<3} {:.4}",
            method.name(),
            sel.k,
            sel.guaranteed_coverage
        );
    }
    Ok(())
}
