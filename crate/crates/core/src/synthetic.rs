//! Synthetic linear benchmarks with four median-zero noise laws.
//!
//! θ* has i.i.d. N(0, 1) entries and inputs are uniform on `[0, 1]^d`.
//! All randomness comes from ChaCha8 streams seeded from the config, so a
//! given config yields bit-identical data on every platform.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conformal::{dot, LabelledDataset, UnlabelledDataset};
use crate::Result;

/// Standard deviation of the wide outlier component.
pub const OUTLIER_WIDE_SD: f64 = 10.0;
/// Standard deviation of the narrow outlier component.
pub const OUTLIER_NARROW_SD: f64 = 0.05;
/// Probability of drawing from the wide component.
pub const OUTLIER_WIDE_WEIGHT: f64 = 0.9;
/// Atom magnitude of the discrete law.
pub const DISCRETE_ATOM: f64 = 0.5;
/// Amplitude of the misspecification term in the nonlinear scenario.
pub const SINE_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// N(0, 1).
    AdditiveGaussian,
    /// N(0, σ = |θ*ᵀx|).
    MultiplicativeGaussian,
    /// 0.9·N(0, 10²) + 0.1·N(0, 0.05²).
    Outliers,
    /// ±0.5 with probability 1/2 each.
    Discrete,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::AdditiveGaussian,
        NoiseKind::MultiplicativeGaussian,
        NoiseKind::Outliers,
        NoiseKind::Discrete,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            NoiseKind::AdditiveGaussian => "aG",
            NoiseKind::MultiplicativeGaussian => "mG",
            NoiseKind::Outliers => "O",
            NoiseKind::Discrete => "D",
        }
    }

    /// Draws ξ given the linear part `θ*ᵀx` (only the multiplicative law uses it).
    pub fn sample<R: Rng + ?Sized>(self, linear_part: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match self {
            NoiseKind::AdditiveGaussian => z,
            NoiseKind::MultiplicativeGaussian => linear_part.abs() * z,
            NoiseKind::Outliers => {
                let wide = rng.random::<f64>() < OUTLIER_WIDE_WEIGHT;
                z * if wide {
                    OUTLIER_WIDE_SD
                } else {
                    OUTLIER_NARROW_SD
                }
            }
            NoiseKind::Discrete => {
                if rng.random::<bool>() {
                    DISCRETE_ATOM
                } else {
                    -DISCRETE_ATOM
                }
            }
        }
    }

    /// Lower bound on min(P(ξ ≥ 0 | x), P(ξ ≤ 0 | x)); every law here is median-zero.
    pub fn b(self) -> f64 {
        0.5
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aG" | "additive_gaussian" => Ok(Self::AdditiveGaussian),
            "mG" | "multiplicative_gaussian" => Ok(Self::MultiplicativeGaussian),
            "O" | "outliers" => Ok(Self::Outliers),
            "D" | "discrete" => Ok(Self::Discrete),
            other => Err(crate::Error::InvalidParameter(format!(
                "unknown noise kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub d: usize,
    /// Labelled observations (training + calibration).
    pub n_obs: usize,
    /// Unlabelled inputs.
    pub n: usize,
    pub noise: NoiseKind,
    pub theta_seed: u64,
    pub data_seed: u64,
    /// Adds `0.5·sin(8π‖x‖₂)` to the mean.
    pub nonlinear: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            d: 3,
            n_obs: 100,
            n: 30,
            noise: NoiseKind::AdditiveGaussian,
            theta_seed: 0,
            data_seed: 1,
            nonlinear: false,
        }
    }
}

/// `x ↦ (x, sin(8π‖x‖₂))`.
pub fn augmented_features(x: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    z.push(sine_feature(x));
    z
}

fn sine_feature(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    (8.0 * std::f64::consts::PI * norm).sin()
}

/// Ground truth plus a data stream; draws labelled and unlabelled batches.
#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    theta_star: Vec<f64>,
    noise: NoiseKind,
    nonlinear: bool,
    rng: ChaCha8Rng,
}

impl ScenarioSampler {
    pub fn new(config: &ScenarioConfig) -> Self {
        let mut trng = ChaCha8Rng::seed_from_u64(config.theta_seed);
        let theta_star = (0..config.d)
            .map(|_| StandardNormal.sample(&mut trng))
            .collect();
        Self::with_theta(theta_star, config.noise, config.nonlinear, config.data_seed)
    }

    pub fn with_theta(
        theta_star: Vec<f64>,
        noise: NoiseKind,
        nonlinear: bool,
        data_seed: u64,
    ) -> Self {
        Self {
            theta_star,
            noise,
            nonlinear,
            rng: ChaCha8Rng::seed_from_u64(data_seed),
        }
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn draw_inputs(&mut self, m: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..m)
            .map(|_| (0..d).map(|_| self.rng.random::<f64>()).collect())
            .collect()
    }

    /// Noise-free mean at `x`; includes the sine term for nonlinear scenarios.
    pub fn mean(&self, x: &[f64]) -> f64 {
        let lin = dot(&self.theta_star, x);
        if self.nonlinear {
            lin + SINE_AMPLITUDE * sine_feature(x)
        } else {
            lin
        }
    }

    /// `m` labelled points and their noise-free outputs.
    pub fn draw_labelled(&mut self, m: usize) -> Result<(LabelledDataset, Vec<f64>)> {
        let xs = self.draw_inputs(m);
        let mut ys = Vec::with_capacity(m);
        let mut fs = Vec::with_capacity(m);
        for x in &xs {
            let f = self.mean(x);
            let lin = dot(&self.theta_star, x);
            ys.push(f + self.noise.sample(lin, &mut self.rng));
            fs.push(f);
        }
        Ok((LabelledDataset::new(xs, ys)?, fs))
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub theta_star: Vec<f64>,
    pub labelled: LabelledDataset,
    pub unlabelled: UnlabelledDataset,
    /// Noise-free outputs of the labelled rows.
    pub noise_free_outputs: Vec<f64>,
}

pub fn sample_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let mut s = ScenarioSampler::new(config);
    let (labelled, noise_free_outputs) = s.draw_labelled(config.n_obs)?;
    let unlabelled = UnlabelledDataset::new(s.draw_inputs(config.n))?;
    Ok(Scenario {
        theta_star: s.theta_star.clone(),
        labelled,
        unlabelled,
        noise_free_outputs,
    })
}

impl Scenario {
    /// Writes `labelled.csv` and `unlabelled.csv` into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.labelled
            .to_csv_writer(std::fs::File::create(dir.join("labelled.csv"))?)?;
        self.unlabelled
            .to_csv_writer(std::fs::File::create(dir.join("unlabelled.csv"))?)?;
        Ok(())
    }
}

/// Heteroskedastic sine model `Y = sin(X) + (π|X|/20)·ξ`, ξ ~ N(0, 1),
/// with X uniform on `[-range, range]`.
#[derive(Debug, Clone)]
pub struct SineScenario {
    pub range: f64,
    rng: ChaCha8Rng,
}

impl SineScenario {
    pub fn new(range: f64, seed: u64) -> Self {
        Self {
            range,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Raw inputs, noisy outputs and noise-free outputs.
    pub fn draw(&mut self, m: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        let mut fs = Vec::with_capacity(m);
        for _ in 0..m {
            let x = self.rng.random_range(-self.range..=self.range);
            let f = x.sin();
            let e: f64 = normal.sample(&mut self.rng);
            xs.push(x);
            ys.push(f + std::f64::consts::PI * x.abs() / 20.0 * e);
            fs.push(f);
        }
        (xs, ys, fs)
    }
}

/// Features `(x, sin x)` used as the base predictor for the sine scenario.
pub fn sine_features(x: f64) -> Vec<f64> {
    vec![x, x.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_residuals_are_atoms() {
        let cfg = ScenarioConfig {
            noise: NoiseKind::Discrete,
            n_obs: 200,
            ..Default::default()
        };
        let s = sample_scenario(&cfg).unwrap();
        for (y, f) in s.labelled.outputs().iter().zip(&s.noise_free_outputs) {
            let r = y - f;
            assert!((r.abs() - 0.5).abs() < 1e-12, "residual {r}");
        }
    }

    #[test]
    fn gaussian_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 100_000;
        let mean: f64 = (0..m)
            .map(|_| NoiseKind::AdditiveGaussian.sample(0.0, &mut rng))
            .sum::<f64>()
            / m as f64;
        assert!(mean.abs() < 3.0 / (m as f64).sqrt());
    }

    #[test]
    fn seeds_are_deterministic() {
        let cfg = ScenarioConfig::default();
        let a = sample_scenario(&cfg).unwrap();
        let b = sample_scenario(&cfg).unwrap();
        assert_eq!(a.theta_star, b.theta_star);
        assert_eq!(a.labelled, b.labelled);
        assert_eq!(a.unlabelled, b.unlabelled);
    }

    #[test]
    fn augmented_feature_values() {
        assert_eq!(augmented_features(&[0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let z = augmented_features(&[1.0 / 16.0]);
        assert!((z[1] - 1.0).abs() < 1e-15);
        let x = [0.3, 0.4, 0.1];
        let hyp = 0.3f64.hypot(0.4).hypot(0.1);
        let z = augmented_features(&x);
        assert!((z[3] - (8.0 * std::f64::consts::PI * hyp).sin()).abs() < 1e-12);
    }

    #[test]
    fn noise_kind_parse() {
        for k in NoiseKind::ALL {
            assert_eq!(k.short_name().parse::<NoiseKind>().unwrap(), k);
        }
        assert!("gaussian".parse::<NoiseKind>().is_err());
    }
}
