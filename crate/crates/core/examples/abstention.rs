//! Regression with abstention on the heteroskedastic sine model.

use conformal_region::abstain::{AbstentionRule, SweepAccumulator};
use conformal_region::conformal::{split_calibrate, LabelledDataset};
use conformal_region::synthetic::{sine_features, SineScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = SineScenario::new(2.0 * std::f64::consts::PI, 4);
    let to_data = |xs: &[f64], ys: &[f64]| {
        LabelledDataset::new(xs.iter().map(|&x| sine_features(x)).collect(), ys.to_vec())
    };

    let (xs, ys, _) = scenario.draw(200);
    let cal = split_calibrate(&to_data(&xs, &ys)?, 0.1, 0.5, 9)?;
    let rule = AbstentionRule::new(&cal, 2.5)?;
    for x in [-3.0, 0.5, 2.0] {
        println!("x = {x}: {:?}", rule.decide(&sine_features(x))?);
    }

    let (txs, tys, _) = scenario.draw(2000);
    let mut sweep = SweepAccumulator::new(vec![0.5, 1.0, 2.0, 4.0]);
    sweep.add(&cal, &to_data(&txs, &tys)?)?;
    for p in sweep.points() {
        println!(
            "threshold {:.1}: rejection {:.3}, mse {:.3}",
            p.threshold, p.rejection_rate, p.mse_accepted
        );
    }
    Ok(())
}
