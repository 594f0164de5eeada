//! Split conformal prediction with the absolute-residual score.
//!
//! A least-squares predictor is fit on a training split; the calibration
//! split supplies residual scores whose ⌈(1−α)(n_cal+1)⌉-th order statistic
//! becomes the half-width `q` of every interval `[f̂(x) − q, f̂(x) + q]`.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack applied before rounding `(1−α)(n_cal+1)` up, so that products like
/// `0.9 * 10 = 9.000000000000002` land on the intended integer.
const RANK_ROUNDING_SLACK: f64 = 1e-9;

/// Relative pivot threshold below which the design is declared rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledDataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl LabelledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::InvalidData(format!(
                "{} input rows but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        check_rows(&inputs, None)?;
        if outputs.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidData("non-finite output".into()));
        }
        Ok(Self { inputs, outputs })
    }

    pub fn builder(dim: usize) -> DatasetBuilder {
        DatasetBuilder {
            dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            outputs: idx.iter().map(|&i| self.outputs[i]).collect(),
        }
    }

    /// Reads a CSV with a header row; the last column is the output.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for rec in rdr.records() {
            let mut row = parse_record(&rec?)?;
            let y = row
                .pop()
                .ok_or_else(|| Error::InvalidData("empty CSV row".into()))?;
            inputs.push(row);
            outputs.push(y);
        }
        Self::new(inputs, outputs)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            row.push(format!("{y:?}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Incremental construction of a [`LabelledDataset`].
#[derive(Debug, Clone)]
pub struct DatasetBuilder {
    dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl DatasetBuilder {
    pub fn push(mut self, x: &[f64], y: f64) -> Self {
        self.inputs.push(x.to_vec());
        self.outputs.push(y);
        self
    }

    pub fn build(self) -> Result<LabelledDataset> {
        if self.inputs.iter().any(|x| x.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: self
                    .inputs
                    .iter()
                    .map(Vec::len)
                    .find(|&l| l != self.dim)
                    .unwrap_or(0),
            });
        }
        LabelledDataset::new(self.inputs, self.outputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabelledDataset {
    inputs: Vec<Vec<f64>>,
}

impl UnlabelledDataset {
    pub fn new(inputs: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidData("unlabelled dataset needs n >= 1".into()));
        }
        check_rows(&inputs, None)?;
        Ok(Self { inputs })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Same rows with each input passed through `f` (e.g. feature augmentation).
    pub fn map_inputs(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::new(self.inputs.iter().map(|x| f(x)).collect())
    }

    /// Reads a CSV with a header row; every column is an input coordinate.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut inputs = Vec::new();
        for rec in rdr.records() {
            inputs.push(parse_record(&rec?)?);
        }
        Self::new(inputs)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((0..self.dim()).map(|j| format!("x{j}")))?;
        for x in &self.inputs {
            w.write_record(x.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_record(rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidData(format!("bad number {f:?}: {e}")))
        })
        .collect()
}

fn check_rows(rows: &[Vec<f64>], dim: Option<usize>) -> Result<()> {
    let d = match dim.or_else(|| rows.first().map(Vec::len)) {
        Some(d) => d,
        None => return Ok(()),
    };
    if d == 0 {
        return Err(Error::InvalidData("inputs need at least one column".into()));
    }
    for row in rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite input entry".into()));
        }
    }
    Ok(())
}

/// `f̂(x) = coefficientsᵀx (+ intercept)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub coefficients: Vec<f64>,
    pub intercept: Option<f64>,
}

impl LinearPredictor {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(dot(&self.coefficients, x) + self.intercept.unwrap_or(0.0))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least squares via Householder QR with column pivoting.
pub fn fit_least_squares(data: &LabelledDataset, intercept: bool) -> Result<LinearPredictor> {
    let d = data.dim();
    let p = d + usize::from(intercept);
    let m = data.len();
    if m < p {
        return Err(Error::SingularDesign {
            columns: p,
            deficient: p - m,
        });
    }
    // Column-major copy of the design.
    let mut a: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            data.inputs()
                .iter()
                .map(|x| if j < d { x[j] } else { 1.0 })
                .collect()
        })
        .collect();
    let mut b = data.outputs().to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut first_pivot = 0.0;
    let mut rdiag = vec![0.0; p];

    for k in 0..p {
        // Pivot: largest remaining column norm.
        let (jmax, _) =
            norms[k..]
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                });
        let jmax = jmax + k;
        a.swap(k, jmax);
        norms.swap(k, jmax);
        perm.swap(k, jmax);

        let col = &a[k];
        let alpha = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if k == 0 {
            first_pivot = alpha;
        }
        if alpha <= RANK_TOLERANCE * first_pivot || alpha == 0.0 {
            return Err(Error::SingularDesign {
                columns: p,
                deficient: p - k,
            });
        }
        let sign = if col[k] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = col[k..].to_vec();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        rdiag[k] = -sign * alpha;

        let reflect = |target: &mut [f64]| {
            let s: f64 = v.iter().zip(target.iter()).map(|(x, y)| x * y).sum();
            let f = 2.0 * s / vnorm2;
            for (t, vi) in target.iter_mut().zip(&v) {
                *t -= f * vi;
            }
        };
        for col in a.iter_mut().skip(k + 1) {
            reflect(&mut col[k..]);
        }
        reflect(&mut b[k..]);
        a[k][k] = rdiag[k];
        for j in k + 1..p {
            norms[j] = a[j][k + 1..].iter().map(|t| t * t).sum();
        }
    }

    // Back substitution on R z = (Qᵀb)[..p].
    let mut z = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for j in i + 1..p {
            s -= a[j][i] * z[j];
        }
        z[i] = s / rdiag[i];
    }
    let mut beta = vec![0.0; p];
    for (k, &j) in perm.iter().enumerate() {
        beta[j] = z[k];
    }
    let icpt = if intercept { beta.pop() } else { None };
    Ok(LinearPredictor {
        coefficients: beta,
        intercept: icpt,
    })
}

/// 1-indexed rank ⌈(1−α)(n_cal+1)⌉ of the calibration order statistic.
pub fn conformal_rank(alpha: f64, n_cal: usize) -> usize {
    ((1.0 - alpha) * (n_cal as f64 + 1.0) - RANK_ROUNDING_SLACK)
        .ceil()
        .max(0.0) as usize
}

/// Smallest calibration size for which the rank stays within the scores.
pub fn min_calibration_size(alpha: f64) -> usize {
    ((1.0 - alpha) / alpha - RANK_ROUNDING_SLACK)
        .ceil()
        .max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCalibration {
    predictor: LinearPredictor,
    calibration_scores: Vec<f64>,
    alpha: f64,
    quantile_radius: f64,
}

impl SplitCalibration {
    /// Builds the calibration from precomputed nonnegative scores.
    pub fn from_scores(
        predictor: LinearPredictor,
        mut scores: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha {alpha} outside (0, 1)"
            )));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidData(
                "scores must be finite and nonnegative".into(),
            ));
        }
        let n_cal = scores.len();
        let rank = conformal_rank(alpha, n_cal);
        if rank > n_cal || rank == 0 {
            return Err(Error::InfeasibleQuantile {
                n_cal,
                alpha,
                min_n_cal: min_calibration_size(alpha),
            });
        }
        scores.sort_by(f64::total_cmp);
        let quantile_radius = scores[rank - 1];
        Ok(Self {
            predictor,
            calibration_scores: scores,
            alpha,
            quantile_radius,
        })
    }

    /// Scores a fitted predictor on a held-out calibration set.
    pub fn calibrate(
        predictor: LinearPredictor,
        cal: &LabelledDataset,
        alpha: f64,
    ) -> Result<Self> {
        let scores = cal
            .inputs()
            .iter()
            .zip(cal.outputs())
            .map(|(x, y)| predictor.predict(x).map(|p| (y - p).abs()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_scores(predictor, scores, alpha)
    }

    pub fn predictor(&self) -> &LinearPredictor {
        &self.predictor
    }

    pub fn calibration_scores(&self) -> &[f64] {
        &self.calibration_scores
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn quantile_radius(&self) -> f64 {
        self.quantile_radius
    }

    pub fn n_cal(&self) -> usize {
        self.calibration_scores.len()
    }

    pub fn rank(&self) -> usize {
        conformal_rank(self.alpha, self.n_cal())
    }
}

/// Shuffles under `seed`, fits on the first `split_fraction` of rows and
/// calibrates on the rest.
pub fn split_calibrate(
    data: &LabelledDataset,
    alpha: f64,
    split_fraction: f64,
    seed: u64,
) -> Result<SplitCalibration> {
    split_calibrate_with(data, alpha, split_fraction, seed, false)
}

pub fn split_calibrate_with(
    data: &LabelledDataset,
    alpha: f64,
    split_fraction: f64,
    seed: u64,
    intercept: bool,
) -> Result<SplitCalibration> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction {split_fraction} outside (0, 1)"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} outside (0, 1)"
        )));
    }
    let n = data.len();
    let n_tr = (split_fraction * n as f64).round() as usize;
    if n_tr == 0 || n_tr >= n {
        return Err(Error::InvalidParameter(format!(
            "split of {n} rows at fraction {split_fraction} leaves an empty side"
        )));
    }
    let n_cal = n - n_tr;
    if conformal_rank(alpha, n_cal) > n_cal {
        return Err(Error::InfeasibleQuantile {
            n_cal,
            alpha,
            min_n_cal: min_calibration_size(alpha),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = data.subset(&idx[..n_tr]);
    let cal = data.subset(&idx[n_tr..]);
    let predictor = fit_least_squares(&train, intercept)?;
    SplitCalibration::calibrate(predictor, &cal, alpha)
}

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
}

impl PredictionInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidData(format!(
                "interval [{lower}, {upper}] is inverted"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

pub fn predict_interval(cal: &SplitCalibration, x: &[f64]) -> Result<PredictionInterval> {
    let center = cal.predictor.predict(x)?;
    let q = cal.quantile_radius;
    Ok(PredictionInterval {
        lower: center - q,
        upper: center + q,
    })
}

pub fn intervals_for(
    cal: &SplitCalibration,
    data: &UnlabelledDataset,
) -> Result<Vec<PredictionInterval>> {
    data.inputs()
        .iter()
        .map(|x| predict_interval(cal, x))
        .collect()
}

/// Coverage of the noisy and the noise-free outputs by the same intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedCoverage {
    pub noisy: f64,
    pub noise_free: f64,
}

/// Weighted coverage rates. Each weight is an integer multiplicity, so
/// discrete laws with rational atoms are evaluated exactly.
pub fn paired_coverage_weighted(
    intervals: &[PredictionInterval],
    outputs: &[f64],
    noise_free: &[f64],
    weights: &[u64],
) -> Result<PairedCoverage> {
    let n = intervals.len();
    if outputs.len() != n || noise_free.len() != n || weights.len() != n {
        return Err(Error::InvalidData(
            "paired coverage inputs are misaligned".into(),
        ));
    }
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return Err(Error::InvalidData("zero total weight".into()));
    }
    let (mut hit_y, mut hit_f) = (0u64, 0u64);
    for i in 0..n {
        if intervals[i].contains(outputs[i]) {
            hit_y += weights[i];
        }
        if intervals[i].contains(noise_free[i]) {
            hit_f += weights[i];
        }
    }
    Ok(PairedCoverage {
        noisy: hit_y as f64 / total as f64,
        noise_free: hit_f as f64 / total as f64,
    })
}

pub fn paired_coverage(
    intervals: &[PredictionInterval],
    outputs: &[f64],
    noise_free: &[f64],
) -> Result<PairedCoverage> {
    paired_coverage_weighted(intervals, outputs, noise_free, &vec![1; intervals.len()])
}

/// One atom of a discrete law: value and integer multiplicity.
pub type Atom = (f64, u64);

/// A 1-D model where noise-free coverage falls below noisy coverage:
/// θ* = 0, Γ(x) = [x − 0.99, x + 0.99], noise ±0.02 equiprobable,
/// X = 0 with probability 0.9 and X = 1 with probability 0.1.
#[derive(Debug, Clone)]
pub struct DiscreteFixture {
    pub theta_star: f64,
    pub fitted_slope: f64,
    pub half_width: f64,
    pub inputs: Vec<Atom>,
    pub noise: Vec<Atom>,
}

impl DiscreteFixture {
    pub fn adversarial() -> Self {
        Self {
            theta_star: 0.0,
            fitted_slope: 1.0,
            half_width: 0.99,
            inputs: vec![(0.0, 9), (1.0, 1)],
            noise: vec![(-0.02, 1), (0.02, 1)],
        }
    }

    /// Enumerates the joint law as a weighted test set and runs it through
    /// [`paired_coverage_weighted`].
    pub fn evaluate(&self) -> Result<PairedCoverage> {
        let mut intervals = Vec::new();
        let mut ys = Vec::new();
        let mut fs = Vec::new();
        let mut ws = Vec::new();
        for &(x, wx) in &self.inputs {
            for &(e, we) in &self.noise {
                let f = self.theta_star * x;
                let c = self.fitted_slope * x;
                intervals.push(PredictionInterval {
                    lower: c - self.half_width,
                    upper: c + self.half_width,
                });
                ys.push(f + e);
                fs.push(f);
                ws.push(wx * we);
            }
        }
        paired_coverage_weighted(&intervals, &ys, &fs, &ws)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Vec<Vec<f64>>, y: Vec<f64>) -> LabelledDataset {
        LabelledDataset::new(x, y).unwrap()
    }

    #[test]
    fn exact_line() {
        let p = fit_least_squares(
            &ds(vec![vec![1.0], vec![2.0], vec![3.0]], vec![2.0, 4.0, 6.0]),
            false,
        )
        .unwrap();
        assert!((p.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(p.intercept.is_none());
    }

    #[test]
    fn identity_design() {
        let x = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let p = fit_least_squares(&ds(x, vec![1.0, 2.0, 3.0]), false).unwrap();
        for (c, e) in p.coefficients.iter().zip([1.0, 2.0, 3.0]) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn intercept_is_recovered() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 - 1.5).collect();
        let p = fit_least_squares(&ds(x, y), true).unwrap();
        assert!((p.coefficients[0] - 3.0).abs() < 1e-10);
        assert!((p.intercept.unwrap() + 1.5).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_design() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        match fit_least_squares(&ds(x, vec![1.0, 2.0, 3.0]), false) {
            Err(Error::SingularDesign {
                columns: 2,
                deficient: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let short = ds(vec![vec![1.0, 2.0]], vec![1.0]);
        assert!(matches!(
            fit_least_squares(&short, false),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn rank_rule() {
        assert_eq!(conformal_rank(0.1, 50), 46);
        assert_eq!(conformal_rank(0.5, 3), 2);
        assert_eq!(conformal_rank(0.1, 9), 9);
        assert_eq!(conformal_rank(0.1, 5), 6);
        assert_eq!(min_calibration_size(0.1), 9);
    }

    #[test]
    fn radius_from_scores() {
        let pred = LinearPredictor {
            coefficients: vec![1.0],
            intercept: None,
        };
        let cal = SplitCalibration::from_scores(pred.clone(), vec![3.0, 1.0, 2.0], 0.5).unwrap();
        assert_eq!(cal.quantile_radius(), 2.0);
        let scores: Vec<f64> = (1..=50).map(f64::from).rev().collect();
        let cal = SplitCalibration::from_scores(pred.clone(), scores, 0.1).unwrap();
        assert_eq!(cal.quantile_radius(), 46.0);
        match SplitCalibration::from_scores(pred, vec![1.0; 5], 0.1) {
            Err(Error::InfeasibleQuantile {
                n_cal: 5,
                min_n_cal: 9,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_too_small_reports_minimum() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let err = split_calibrate(&ds(x, y), 0.1, 0.5, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::InfeasibleQuantile {
                n_cal: 5,
                min_n_cal: 9,
                ..
            }
        ));
    }

    #[test]
    fn intervals_are_symmetric() {
        let pred = LinearPredictor {
            coefficients: vec![1.0, 2.0],
            intercept: None,
        };
        let cal = SplitCalibration::from_scores(pred.clone(), vec![0.5; 19], 0.1).unwrap();
        let iv = predict_interval(&cal, &[1.0, 1.0]).unwrap();
        assert_eq!((iv.lower, iv.upper), (2.5, 3.5));
        assert!(predict_interval(&cal, &[1.0]).is_err());
        let zero = SplitCalibration::from_scores(pred, vec![0.0; 19], 0.1).unwrap();
        let iv = predict_interval(&zero, &[1.0, 1.0]).unwrap();
        assert_eq!(iv.lower, iv.upper);
        assert!(iv.contains(3.0));

        let rows = UnlabelledDataset::new(vec![vec![0.3, 0.1]]).unwrap();
        assert_eq!(
            intervals_for(&cal, &rows).unwrap()[0],
            predict_interval(&cal, &[0.3, 0.1]).unwrap()
        );
    }

    #[test]
    fn adversarial_fixture_is_exact() {
        let cov = DiscreteFixture::adversarial().evaluate().unwrap();
        assert_eq!(cov.noisy, 0.95);
        assert_eq!(cov.noise_free, 0.90);
    }

    #[test]
    fn csv_round_trip() {
        let d = LabelledDataset::builder(2)
            .push(&[0.1, 0.2], 1.0)
            .push(&[1.0 / 3.0, -4.5], 2.5)
            .build()
            .unwrap();
        let mut buf = Vec::new();
        d.to_csv_writer(&mut buf).unwrap();
        assert_eq!(LabelledDataset::from_csv_reader(buf.as_slice()).unwrap(), d);
        assert!(LabelledDataset::builder(2)
            .push(&[1.0], 1.0)
            .build()
            .is_err());
    }
}
