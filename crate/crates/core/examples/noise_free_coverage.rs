//! Coverage of noisy and noise-free outputs by the same split intervals,
//! plus the discrete fixture where the noisy output wins.

use conformal_region::conformal::{
    intervals_for, paired_coverage, split_calibrate, DiscreteFixture, UnlabelledDataset,
};
use conformal_region::synthetic::{NoiseKind, ScenarioConfig, ScenarioSampler};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for noise in [NoiseKind::AdditiveGaussian, NoiseKind::Outliers] {
        let mut sampler = ScenarioSampler::new(&ScenarioConfig {
            d: 10,
            noise,
            ..ScenarioConfig::default()
        });
        let (train, _) = sampler.draw_labelled(100)?;
        let cal = split_calibrate(&train, 0.1, 0.5, 1)?;
        let (test, clean) = sampler.draw_labelled(1000)?;
        let intervals = intervals_for(&cal, &UnlabelledDataset::new(test.inputs().to_vec())?)?;
        let pc = paired_coverage(&intervals, test.outputs(), &clean)?;
        println!(
            "{}: noisy {:.3}, noise-free {:.3}",
            noise.short_name(),
            pc.noisy,
            pc.noise_free
        );
    }
    let fixture = DiscreteFixture::adversarial().evaluate()?;
    println!(
        "fixture: noisy {:.2}, noise-free {:.2}",
        fixture.noisy, fixture.noise_free
    );
    Ok(())
}
