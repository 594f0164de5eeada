//! Regression with abstention: predict the interval midpoint when the
//! conformal interval is narrow enough, abstain otherwise.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::NoiseAssumption;
use crate::conformal::{predict_interval, LabelledDataset, SplitCalibration};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AbstentionRule<'a> {
    calibration: &'a SplitCalibration,
    width_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Predict(f64),
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub interval_width: f64,
}

impl Decision {
    pub fn abstained(&self) -> bool {
        self.outcome == Outcome::Abstain
    }
}

impl<'a> AbstentionRule<'a> {
    /// `f64::INFINITY` never abstains.
    pub fn new(calibration: &'a SplitCalibration, width_threshold: f64) -> Result<Self> {
        if !(width_threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "width threshold {width_threshold} must be nonnegative"
            )));
        }
        Ok(Self {
            calibration,
            width_threshold,
        })
    }

    pub fn width_threshold(&self) -> f64 {
        self.width_threshold
    }

    pub fn decide(&self, x: &[f64]) -> Result<Decision> {
        let iv = predict_interval(self.calibration, x)?;
        let w = iv.width();
        let outcome = if w <= self.width_threshold {
            Outcome::Predict(iv.midpoint())
        } else {
            Outcome::Abstain
        };
        Ok(Decision {
            outcome,
            interval_width: w,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    /// Fraction of test points with `|Y − f(X)| ≤ ξ̂(X)`.
    pub rate: f64,
    /// `1 − (1 + 1/b)α`.
    pub bound: f64,
    pub n_test: usize,
}

/// Empirical frequency of `|Y − f_{θ*}(X)|` staying within the interval width.
pub fn error_bound_check(
    cal: &SplitCalibration,
    noise: NoiseAssumption,
    test: &LabelledDataset,
    noise_free: &[f64],
) -> Result<ErrorBoundReport> {
    if noise_free.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            found: noise_free.len(),
        });
    }
    let mut hits = 0usize;
    for ((x, &y), &f) in test.inputs().iter().zip(test.outputs()).zip(noise_free) {
        let w = predict_interval(cal, x)?.width();
        if (y - f).abs() <= w {
            hits += 1;
        }
    }
    let n = test.len();
    Ok(ErrorBoundReport {
        rate: if n == 0 {
            f64::NAN
        } else {
            hits as f64 / n as f64
        },
        bound: 1.0 - (1.0 + 1.0 / noise.b()) * cal.alpha(),
        n_test: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub rejection_rate: f64,
    /// Squared error against the noisy output, over accepted points.
    pub mse_accepted: f64,
    pub accepted: u64,
    pub total: u64,
}

/// Accumulates accept counts and squared errors over a threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAccumulator {
    thresholds: Vec<f64>,
    accepted: Vec<u64>,
    sq_err: Vec<f64>,
    total: u64,
}

impl SweepAccumulator {
    pub fn new(mut thresholds: Vec<f64>) -> Self {
        thresholds.sort_by(f64::total_cmp);
        let m = thresholds.len();
        Self {
            thresholds,
            accepted: vec![0; m],
            sq_err: vec![0.0; m],
            total: 0,
        }
    }

    pub fn add(&mut self, cal: &SplitCalibration, test: &LabelledDataset) -> Result<()> {
        for (x, &y) in test.inputs().iter().zip(test.outputs()) {
            let iv = predict_interval(cal, x)?;
            let err = (iv.midpoint() - y).powi(2);
            for (t, (acc, se)) in self
                .thresholds
                .iter()
                .zip(self.accepted.iter_mut().zip(self.sq_err.iter_mut()))
            {
                if iv.width() <= *t {
                    *acc += 1;
                    *se += err;
                }
            }
            self.total += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.accepted.iter_mut().zip(&other.accepted) {
            *a += b;
        }
        for (a, b) in self.sq_err.iter_mut().zip(&other.sq_err) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        self.thresholds
            .iter()
            .zip(self.accepted.iter().zip(&self.sq_err))
            .map(|(&threshold, (&accepted, &se))| SweepPoint {
                threshold,
                rejection_rate: if self.total == 0 {
                    f64::NAN
                } else {
                    1.0 - accepted as f64 / self.total as f64
                },
                mse_accepted: if accepted == 0 {
                    f64::NAN
                } else {
                    se / accepted as f64
                },
                accepted,
                total: self.total,
            })
            .collect()
    }
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::LinearPredictor;

    fn cal(q_scores: Vec<f64>) -> SplitCalibration {
        let p = LinearPredictor {
            coefficients: vec![1.0],
            intercept: None,
        };
        SplitCalibration::from_scores(p, q_scores, 0.1).unwrap()
    }

    #[test]
    fn threshold_extremes() {
        let c = cal(vec![0.5; 20]);
        let always = AbstentionRule::new(&c, f64::INFINITY).unwrap();
        let never = AbstentionRule::new(&c, 0.0).unwrap();
        let d = always.decide(&[2.0]).unwrap();
        assert_eq!(d.outcome, Outcome::Predict(2.0));
        assert!((d.interval_width - 1.0).abs() < 1e-15);
        assert!(never.decide(&[2.0]).unwrap().abstained());
        assert!(AbstentionRule::new(&c, -1.0).is_err());
        assert!(always.decide(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_noise_rate_is_one() {
        let c = cal(vec![0.1; 20]);
        let test = LabelledDataset::new(vec![vec![1.0], vec![2.0]], vec![1.0, 2.0]).unwrap();
        let r =
            error_bound_check(&c, NoiseAssumption::symmetric(false), &test, &[1.0, 2.0]).unwrap();
        assert_eq!(r.rate, 1.0);
        assert!((r.bound - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sweep_rejection_is_nonincreasing() {
        let mut acc = SweepAccumulator::new(vec![2.0, 0.0, 0.5, 1.0]);
        let test = LabelledDataset::new(vec![vec![1.0], vec![3.0]], vec![1.5, 2.0]).unwrap();
        acc.add(&cal(vec![0.3; 20]), &test).unwrap();
        acc.add(&cal(vec![0.8; 20]), &test).unwrap();
        let pts = acc.points();
        let rates: Vec<f64> = pts.iter().map(|p| p.rejection_rate).collect();
        assert_eq!(rates, vec![1.0, 1.0, 0.5, 0.0]);
        assert!((pts[2].mse_accepted - (0.25 + 1.0) / 2.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_sweep_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("threshold,rejection_rate"));
    }
}
