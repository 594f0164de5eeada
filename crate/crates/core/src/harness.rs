//! Seeded Monte Carlo experiments.
//!
//! Every experiment expands into independent trials. A trial's randomness
//! comes only from `trial_seed(master_seed, index)`, so results do not depend
//! on how trials are spread over workers. Summaries are pure folds over the
//! persisted [`TrialRecord`]s.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstain::{error_bound_check, write_sweep_csv, SweepAccumulator, SweepPoint};
use crate::bounds::{
    coverage_curve, pac_delta_sweep, write_curve_csv, BoundMethod, BoundRequest, CurvePoint,
    KSelection, NoiseAssumption, WorstCaseGrid,
};
use crate::conformal::{
    fit_least_squares, intervals_for, paired_coverage, split_calibrate, LabelledDataset,
    SplitCalibration, UnlabelledDataset,
};
use crate::milp::SolverConfig;
use crate::region::{build_region, EmptinessStatus, RegionSpec, VoteConstraint};
use crate::synthetic::{
    augmented_features, sample_scenario, sine_features, NoiseKind, ScenarioConfig, ScenarioSampler,
    SineScenario,
};
use crate::{Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest tolerated share of trials that error out.
pub const MAX_TRIAL_FAILURE_RATE: f64 = 0.01;
/// Largest tolerated share of indeterminate emptiness checks.
pub const MAX_INDETERMINATE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    CoverageTable,
    WidthTable,
    RejectionTest,
    NoiseFreeVsNoisy,
    CoverageCurve,
    AbstentionSweep,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CoverageTable => "coverage_table",
            Self::WidthTable => "width_table",
            Self::RejectionTest => "rejection_test",
            Self::NoiseFreeVsNoisy => "noise_free_vs_noisy",
            Self::CoverageCurve => "coverage_curve",
            Self::AbstentionSweep => "abstention_sweep",
        }
    }
}

/// One experiment; missing JSON fields take the defaults of [`ExperimentSpec::preset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Noise laws to sweep; empty means `scenario.noise` only.
    #[serde(default)]
    pub noises: Vec<NoiseKind>,
    /// Dimensions to sweep; empty means `scenario.d` only.
    #[serde(default)]
    pub dims: Vec<usize>,
    /// Labelled sample sizes to sweep; empty means `scenario.n_obs` only.
    #[serde(default)]
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<BoundMethod>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_true")]
    pub assumption3: bool,
    #[serde(default = "default_true")]
    pub pac_refined: bool,
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Fresh test points per trial (noise-free comparison, abstention).
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_box")]
    pub box_half_width: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
    /// `δ` values for the PAC sweep of the coverage curve.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Width thresholds of the abstention sweep.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// Inputs of the abstention scenario are uniform on `[-range, range]`.
    #[serde(default = "default_sine_range")]
    pub sine_range: f64,
}

fn default_methods() -> Vec<BoundMethod> {
    BoundMethod::ALL.to_vec()
}
fn default_alpha() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.1
}
fn default_b() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_split_fraction() -> f64 {
    0.5
}
fn default_trials() -> usize {
    100
}
fn default_workers() -> usize {
    1
}
fn default_n_test() -> usize {
    1000
}
fn default_box() -> f64 {
    100.0
}
fn default_node_limit() -> usize {
    200_000
}
fn default_deltas() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.2, 0.5]
}
fn default_thresholds() -> Vec<f64> {
    (0..=40).map(|i| i as f64 / 10.0).collect()
}
fn default_sine_range() -> f64 {
    2.0 * std::f64::consts::PI
}

impl ExperimentSpec {
    /// Paper-scale settings for each experiment.
    pub fn preset(name: ExperimentName) -> Self {
        let mut s: Self = serde_json::from_value(serde_json::json!({ "name": name }))
            .expect("defaults deserialize");
        match name {
            ExperimentName::CoverageTable => {
                s.noises = NoiseKind::ALL.to_vec();
                s.dims = vec![3, 40];
                s.trials = 1000;
            }
            ExperimentName::WidthTable => {
                s.noises = NoiseKind::ALL.to_vec();
                s.methods = vec![
                    BoundMethod::Markov,
                    BoundMethod::WorstCase,
                    BoundMethod::Split,
                ];
                s.scenario.n_obs = 40;
                s.trials = 50;
            }
            ExperimentName::RejectionTest => {
                s.methods = vec![
                    BoundMethod::Markov,
                    BoundMethod::WorstCase,
                    BoundMethod::Split,
                ];
                s.trials = 200;
            }
            ExperimentName::NoiseFreeVsNoisy => {
                s.noises = vec![NoiseKind::AdditiveGaussian, NoiseKind::Outliers];
                s.train_sizes = vec![40, 100];
                s.scenario.d = 10;
                s.trials = 1000;
            }
            ExperimentName::CoverageCurve => {
                s.scenario.n_obs = 100;
                s.trials = 1;
            }
            ExperimentName::AbstentionSweep => {
                s.trials = 200;
            }
        }
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        if self.methods.is_empty() && self.name.uses_methods() {
            return Err(Error::InvalidParameter(
                "at least one bound method is required".into(),
            ));
        }
        if !(self.box_half_width > 0.0 && self.box_half_width.is_finite()) {
            return Err(Error::InvalidParameter(
                "box half-width must be positive".into(),
            ));
        }
        self.noise_assumption()?;
        Ok(())
    }

    pub fn noise_assumption(&self) -> Result<NoiseAssumption> {
        NoiseAssumption::new(self.b, self.assumption3)
    }

    fn noises(&self) -> Vec<NoiseKind> {
        if self.noises.is_empty() {
            vec![self.scenario.noise]
        } else {
            self.noises.clone()
        }
    }

    fn dims(&self) -> Vec<usize> {
        if self.dims.is_empty() {
            vec![self.scenario.d]
        } else {
            self.dims.clone()
        }
    }

    fn train_sizes(&self) -> Vec<usize> {
        if self.train_sizes.is_empty() {
            vec![self.scenario.n_obs]
        } else {
            self.train_sizes.clone()
        }
    }

    fn n_cal(&self, n_obs: usize) -> usize {
        n_obs - (self.split_fraction * n_obs as f64).round() as usize
    }

    fn request(&self, n_cal: usize) -> Result<BoundRequest> {
        Ok(BoundRequest {
            n: self.scenario.n,
            n_cal,
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            noise: self.noise_assumption()?,
            pac_refined: self.pac_refined,
            grid: WorstCaseGrid::default(),
        })
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            node_limit: self.node_limit,
            ..SolverConfig::default()
        }
    }

    fn reference_box(&self, d: usize) -> Vec<(f64, f64)> {
        vec![(-self.box_half_width, self.box_half_width); d]
    }
}

impl ExperimentName {
    fn uses_methods(self) -> bool {
        matches!(
            self,
            Self::CoverageTable | Self::WidthTable | Self::RejectionTest | Self::CoverageCurve
        )
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index`; a function of the two arguments only.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    mix(mix(master_seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

fn stream(seed: u64, purpose: u64) -> u64 {
    mix(seed ^ mix(purpose))
}

const STREAM_THETA: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_MARKOV: u64 = 4;

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell: String,
    pub trial: usize,
    pub seed: u64,
    pub method: String,
    pub k: Option<usize>,
    pub n: Option<usize>,
    /// Votes for the true parameter, counted directly.
    pub votes: Option<usize>,
    pub covered: Option<bool>,
    /// Coordinate widths; infinite where the region reached the box.
    pub widths: Vec<f64>,
    /// Coordinate widths clipped to the reference box.
    pub box_widths: Vec<f64>,
    pub rejected: Option<bool>,
    pub solve_status: Option<String>,
    pub noisy_coverage: Option<f64>,
    pub noise_free_coverage: Option<f64>,
    pub error_bound_rate: Option<f64>,
    pub nodes: Option<usize>,
    pub error: Option<String>,
    #[serde(skip)]
    pub seconds: f64,
}

impl TrialRecord {
    fn new(cell: &str, trial: usize, seed: u64, method: &str) -> Self {
        Self {
            cell: cell.to_string(),
            trial,
            seed,
            method: method.to_string(),
            k: None,
            n: None,
            votes: None,
            covered: None,
            widths: Vec::new(),
            box_widths: Vec::new(),
            rejected: None,
            solve_status: None,
            noisy_coverage: None,
            noise_free_coverage: None,
            error_bound_rate: None,
            nodes: None,
            error: None,
            seconds: 0.0,
        }
    }

    fn failed(cell: &str, trial: usize, seed: u64, method: &str, err: &Error) -> Self {
        let mut r = Self::new(cell, trial, seed, method);
        r.error = Some(err.to_string());
        r
    }

    fn selection(&mut self, sel: &KSelection, votes: usize) {
        self.k = Some(sel.k);
        self.n = Some(sel.inputs.n);
        self.votes = Some(votes);
        self.covered = Some(votes >= sel.k);
    }
}

pub const TRIAL_COLUMNS: &[&str] = &[
    "cell",
    "trial",
    "seed",
    "method",
    "k",
    "n",
    "votes",
    "covered",
    "widths",
    "box_widths",
    "rejected",
    "solve_status",
    "noisy_coverage",
    "noise_free_coverage",
    "error_bound_rate",
    "nodes",
    "error",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_trials_csv<W: std::io::Write>(records: &[TrialRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRIAL_COLUMNS)?;
    for r in records {
        w.write_record([
            r.cell.clone(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.method.clone(),
            opt(&r.k),
            opt(&r.n),
            opt(&r.votes),
            opt(&r.covered),
            join(&r.widths),
            join(&r.box_widths),
            opt(&r.rejected),
            opt(&r.solve_status),
            opt(&r.noisy_coverage),
            opt(&r.noise_free_coverage),
            opt(&r.error_bound_rate),
            opt(&r.nodes),
            opt(&r.error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per `(cell, method)` aggregate; every field is a fold over trial records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub mean_k: Option<f64>,
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    pub mean_width: Option<f64>,
    pub mean_box_width: Option<f64>,
    pub clamp_rate: Option<f64>,
    pub rejection_rate: Option<f64>,
    pub rejection_se: Option<f64>,
    pub indeterminate_rate: Option<f64>,
    pub mean_noisy_coverage: Option<f64>,
    pub mean_noise_free_coverage: Option<f64>,
    /// Trials where the noisy output was covered more often.
    pub losses: Option<usize>,
    pub mean_error_bound_rate: Option<f64>,
    pub error_bound_rate_se: Option<f64>,
    pub mean_nodes: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Standard error of the mean.
fn std_err(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    Some((var / v.len() as f64).sqrt())
}

fn rate(flags: &[bool]) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = flags.iter().map(|&b| f64::from(u8::from(b))).collect();
    (mean(&v), std_err(&v))
}

/// Groups by `(cell, method)` in first-appearance order.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.cell.clone(), r.method.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let ok: Vec<&TrialRecord> = rs.iter().copied().filter(|r| r.error.is_none()).collect();
            let ks: Vec<f64> = ok.iter().filter_map(|r| r.k.map(|k| k as f64)).collect();
            let covered: Vec<bool> = ok.iter().filter_map(|r| r.covered).collect();
            let finite: Vec<f64> = ok
                .iter()
                .flat_map(|r| r.widths.iter().copied().filter(|w| w.is_finite()))
                .collect();
            let all_widths: usize = ok.iter().map(|r| r.widths.len()).sum();
            let boxed: Vec<f64> = ok
                .iter()
                .flat_map(|r| r.box_widths.iter().copied())
                .collect();
            let decided: Vec<bool> = ok.iter().filter_map(|r| r.rejected).collect();
            let with_status: Vec<&str> = ok
                .iter()
                .filter_map(|r| r.solve_status.as_deref())
                .collect();
            let noisy: Vec<f64> = ok.iter().filter_map(|r| r.noisy_coverage).collect();
            let clean: Vec<f64> = ok.iter().filter_map(|r| r.noise_free_coverage).collect();
            let ebr: Vec<f64> = ok.iter().filter_map(|r| r.error_bound_rate).collect();
            let nodes: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.nodes.map(|n| n as f64))
                .collect();
            let (coverage, coverage_se) = rate(&covered);
            let (rejection_rate, rejection_se) = rate(&decided);
            let losses = ok
                .iter()
                .filter_map(|r| Some(r.noisy_coverage? > r.noise_free_coverage?))
                .collect::<Vec<_>>();
            SummaryRow {
                cell: key.0.clone(),
                method: key.1.clone(),
                trials: rs.len(),
                failures: rs.len() - ok.len(),
                mean_k: mean(&ks),
                coverage,
                coverage_se,
                mean_width: mean(&finite),
                mean_box_width: mean(&boxed),
                clamp_rate: (all_widths > 0).then(|| 1.0 - finite.len() as f64 / all_widths as f64),
                rejection_rate,
                rejection_se,
                indeterminate_rate: (!with_status.is_empty()).then(|| {
                    with_status
                        .iter()
                        .filter(|s| **s == "indeterminate")
                        .count() as f64
                        / with_status.len() as f64
                }),
                mean_noisy_coverage: mean(&noisy),
                mean_noise_free_coverage: mean(&clean),
                losses: (!losses.is_empty()).then(|| losses.iter().filter(|&&l| l).count()),
                mean_error_bound_rate: mean(&ebr),
                error_bound_rate_se: std_err(&ebr),
                mean_nodes: mean(&nodes),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub curve: Option<Vec<CurvePoint>>,
    pub sweep: Option<Vec<SweepPoint>>,
}

impl ExperimentOutput {
    fn new(spec: &ExperimentSpec, records: Vec<TrialRecord>) -> Self {
        let summary = summarize(&records);
        Self {
            spec: spec.clone(),
            records,
            summary,
            curve: None,
            sweep: None,
        }
    }

    pub fn row(&self, cell: &str, method: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.cell == cell && r.method == method)
    }

    pub fn trials_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_trials_csv(&self.records, &mut buf)?;
        Ok(buf)
    }

    /// `trials.csv`, `summary.csv`, `timings.csv`, `meta.json`, plus
    /// `curve.csv` or `sweep.csv` where they apply.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trials.csv"), self.trials_csv()?)?;
        write_summary_csv(&self.summary, fs::File::create(dir.join("summary.csv"))?)?;
        let mut timings = String::from("cell,trial,method,seconds\n");
        for r in &self.records {
            let _ = writeln!(timings, "{},{},{},{}", r.cell, r.trial, r.method, r.seconds);
        }
        fs::write(dir.join("timings.csv"), timings)?;
        if let Some(c) = &self.curve {
            write_curve_csv(c, fs::File::create(dir.join("curve.csv"))?)?;
        }
        if let Some(s) = &self.sweep {
            write_sweep_csv(s, fs::File::create(dir.join("sweep.csv"))?)?;
        }
        let meta = serde_json::json!({
            "artifact_version": ARTIFACT_VERSION,
            "experiment": self.spec.name,
            "spec": self.spec,
            "rng": "ChaCha8 seeded per trial from splitmix64(master_seed, trial_index)",
        });
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Fails when too many trials errored or emptiness checks were indeterminate.
    pub fn check_health(&self) -> Result<()> {
        let n = self.records.len().max(1);
        let failed = self.records.iter().filter(|r| r.error.is_some()).count();
        if failed as f64 / n as f64 > MAX_TRIAL_FAILURE_RATE {
            return Err(Error::ExperimentFailed(format!(
                "{failed} of {n} trials failed"
            )));
        }
        let solved: Vec<&str> = self
            .records
            .iter()
            .filter_map(|r| r.solve_status.as_deref())
            .collect();
        let indet = solved.iter().filter(|s| **s == "indeterminate").count();
        if !solved.is_empty() && indet as f64 / solved.len() as f64 > MAX_INDETERMINATE_RATE {
            return Err(Error::ExperimentFailed(format!(
                "{indet} of {} solves were indeterminate",
                solved.len()
            )));
        }
        Ok(())
    }
}

/// Runs `f(index)` for every trial on `workers` threads, in index order.
fn par_trials<T: Send>(
    workers: usize,
    count: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
}

/// `k` for the methods that do not depend on the trial, computed once.
struct KCache {
    fixed: BTreeMap<(usize, BoundMethod), KSelection>,
}

impl KCache {
    fn new(spec: &ExperimentSpec, n_cals: &[usize]) -> Result<Self> {
        let mut fixed = BTreeMap::new();
        for &n_cal in n_cals {
            let req = spec.request(n_cal)?;
            for &m in &spec.methods {
                if m != BoundMethod::Markov {
                    fixed.insert((n_cal, m), req.select(m, 0)?);
                }
            }
        }
        Ok(Self { fixed })
    }

    fn get(
        &self,
        spec: &ExperimentSpec,
        n_cal: usize,
        method: BoundMethod,
        seed: u64,
    ) -> Result<KSelection> {
        match self.fixed.get(&(n_cal, method)) {
            Some(s) => Ok(s.clone()),
            None => spec
                .request(n_cal)?
                .select(method, stream(seed, STREAM_MARKOV)),
        }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    label: String,
    noise: NoiseKind,
    d: usize,
    n_obs: usize,
}

fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for &noise in &spec.noises() {
        for &d in &spec.dims() {
            for &n_obs in &spec.train_sizes() {
                out.push(Cell {
                    label: format!("{}/d={d}/n_obs={n_obs}", noise.short_name()),
                    noise,
                    d,
                    n_obs,
                });
            }
        }
    }
    out
}

fn scenario_for(spec: &ExperimentSpec, cell: &Cell, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        d: cell.d,
        n_obs: cell.n_obs,
        noise: cell.noise,
        theta_seed: stream(seed, STREAM_THETA),
        data_seed: stream(seed, STREAM_DATA),
        ..spec.scenario.clone()
    }
}

/// Cells × trials, with the global index feeding [`trial_seed`].
fn grid_trials(
    spec: &ExperimentSpec,
    cells: &[Cell],
    per_trial: impl Fn(&Cell, usize, u64) -> Vec<TrialRecord> + Sync + Send,
) -> Result<Vec<TrialRecord>> {
    let total = cells.len() * spec.trials;
    let nested = par_trials(spec.workers, total, |idx| {
        let cell = &cells[idx / spec.trials];
        let t = idx % spec.trials;
        per_trial(cell, t, trial_seed(spec.seed, idx as u64))
    })?;
    Ok(nested.into_iter().flatten().collect())
}

fn methods_failed(
    spec: &ExperimentSpec,
    cell: &str,
    t: usize,
    seed: u64,
    e: &Error,
) -> Vec<TrialRecord> {
    spec.methods
        .iter()
        .map(|m| TrialRecord::failed(cell, t, seed, m.name(), e))
        .collect()
}

fn calibrate(
    spec: &ExperimentSpec,
    labelled: &LabelledDataset,
    seed: u64,
) -> Result<SplitCalibration> {
    split_calibrate(
        labelled,
        spec.alpha,
        spec.split_fraction,
        stream(seed, STREAM_SPLIT),
    )
}

/// Coverage of the true parameter by `Θ_k` per method, by vote counting.
pub fn run_coverage_table(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cells = cells(spec);
    let n_cals: Vec<usize> = spec.train_sizes().iter().map(|&n| spec.n_cal(n)).collect();
    let cache = KCache::new(spec, &n_cals)?;
    let records = grid_trials(spec, &cells, |cell, t, seed| {
        let run = || -> Result<Vec<TrialRecord>> {
            let sc = sample_scenario(&scenario_for(spec, cell, seed))?;
            let cal = calibrate(spec, &sc.labelled, seed)?;
            let ivs = intervals_for(&cal, &sc.unlabelled)?;
            let votes = ivs
                .iter()
                .zip(sc.unlabelled.inputs())
                .filter(|(iv, x)| iv.contains(crate::conformal::dot(&sc.theta_star, x)))
                .count();
            spec.methods
                .iter()
                .map(|&m| {
                    let sel = cache.get(spec, cal.n_cal(), m, seed)?;
                    let mut r = TrialRecord::new(&cell.label, t, seed, m.name());
                    r.selection(&sel, votes);
                    Ok(r)
                })
                .collect()
        };
        run().unwrap_or_else(|e| methods_failed(spec, &cell.label, t, seed, &e))
    })?;
    Ok(ExperimentOutput::new(spec, records))
}

/// Coordinate-wise interval widths of `Θ_k` per method.
pub fn run_width_table(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cells = cells(spec);
    let n_cals: Vec<usize> = spec.train_sizes().iter().map(|&n| spec.n_cal(n)).collect();
    let cache = KCache::new(spec, &n_cals)?;
    let solver = spec.solver();
    let records = grid_trials(spec, &cells, |cell, t, seed| {
        let prepared = || -> Result<_> {
            let sc = sample_scenario(&scenario_for(spec, cell, seed))?;
            let cal = calibrate(spec, &sc.labelled, seed)?;
            let ivs = intervals_for(&cal, &sc.unlabelled)?;
            Ok((sc, cal, ivs))
        };
        let (sc, cal, ivs) = match prepared() {
            Ok(p) => p,
            Err(e) => return methods_failed(spec, &cell.label, t, seed, &e),
        };
        spec.methods
            .iter()
            .map(|&m| {
                let start = Instant::now();
                let run = || -> Result<TrialRecord> {
                    let sel = cache.get(spec, cal.n_cal(), m, seed)?;
                    let region =
                        build_region(&ivs, &sc.unlabelled, &sel, Some(spec.reference_box(cell.d)))?;
                    let mut r = TrialRecord::new(&cell.label, t, seed, m.name());
                    r.selection(&sel, region.membership(&sc.theta_star)?.votes);
                    match region.coordinate_intervals(&solver) {
                        Ok(Some(ci)) => {
                            r.solve_status = Some("optimal".into());
                            r.nodes = Some(ci.node_count);
                            for c in &ci.intervals {
                                r.widths.push(c.width());
                                let lo = c.lower.max(-spec.box_half_width);
                                let hi = c.upper.min(spec.box_half_width);
                                r.box_widths.push(hi - lo);
                            }
                        }
                        Ok(None) => r.solve_status = Some("empty".into()),
                        Err(Error::Indeterminate { nodes }) => {
                            r.solve_status = Some("indeterminate".into());
                            r.nodes = Some(nodes);
                        }
                        Err(e) => return Err(e),
                    }
                    Ok(r)
                };
                let mut r = run()
                    .unwrap_or_else(|e| TrialRecord::failed(&cell.label, t, seed, m.name(), &e));
                r.seconds = start.elapsed().as_secs_f64();
                r
            })
            .collect()
    })?;
    Ok(ExperimentOutput::new(spec, records))
}

/// Intervals from least squares on augmented features, region over the raw inputs.
fn augmented_region_inputs(
    spec: &ExperimentSpec,
    labelled: &LabelledDataset,
    unlabelled: &UnlabelledDataset,
    seed: u64,
) -> Result<(SplitCalibration, Vec<crate::conformal::PredictionInterval>)> {
    let z_inputs: Vec<Vec<f64>> = labelled
        .inputs()
        .iter()
        .map(|x| augmented_features(x))
        .collect();
    let z = LabelledDataset::new(z_inputs, labelled.outputs().to_vec())?;
    let cal = calibrate(spec, &z, seed)?;
    let ivs = intervals_for(&cal, &unlabelled.map_inputs(augmented_features)?)?;
    Ok((cal, ivs))
}

/// Rejection rate of the linearity hypothesis (empty `Θ_k`) on the sine
/// model, with a linear-null control cell.
pub fn run_rejection_test(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let noise = spec.scenario.noise;
    let d = spec.scenario.d;
    let n_obs = spec.scenario.n_obs;
    let cells = vec![
        Cell {
            label: "sine".into(),
            noise,
            d,
            n_obs,
        },
        Cell {
            label: "linear_null".into(),
            noise,
            d,
            n_obs,
        },
    ];
    let cache = KCache::new(spec, &[spec.n_cal(n_obs)])?;
    let solver = spec.solver();
    let records = grid_trials(spec, &cells, |cell, t, seed| {
        let prepared = || -> Result<_> {
            let mut cfg = scenario_for(spec, cell, seed);
            cfg.nonlinear = cell.label == "sine";
            let sc = sample_scenario(&cfg)?;
            let (cal, ivs) = augmented_region_inputs(spec, &sc.labelled, &sc.unlabelled, seed)?;
            Ok((sc, cal, ivs))
        };
        let (sc, cal, ivs) = match prepared() {
            Ok(p) => p,
            Err(e) => return methods_failed(spec, &cell.label, t, seed, &e),
        };
        spec.methods
            .iter()
            .map(|&m| {
                let start = Instant::now();
                let run = || -> Result<TrialRecord> {
                    let sel = cache.get(spec, cal.n_cal(), m, seed)?;
                    let region =
                        build_region(&ivs, &sc.unlabelled, &sel, Some(spec.reference_box(d)))?;
                    let mut r = TrialRecord::new(&cell.label, t, seed, m.name());
                    r.selection(&sel, region.membership(&sc.theta_star)?.votes);
                    let e = region.is_empty(&solver)?;
                    r.nodes = Some(e.node_count);
                    r.solve_status = Some(
                        match e.status {
                            EmptinessStatus::Empty => "empty",
                            EmptinessStatus::NonEmpty => "non_empty",
                            EmptinessStatus::Indeterminate => "indeterminate",
                        }
                        .into(),
                    );
                    r.rejected = match e.status {
                        EmptinessStatus::Indeterminate => None,
                        s => Some(s == EmptinessStatus::Empty),
                    };
                    Ok(r)
                };
                let mut r = run()
                    .unwrap_or_else(|e| TrialRecord::failed(&cell.label, t, seed, m.name(), &e));
                r.seconds = start.elapsed().as_secs_f64();
                r
            })
            .collect()
    })?;
    Ok(ExperimentOutput::new(spec, records))
}

/// Coverage of noisy and noise-free outputs by the same split intervals.
pub fn run_noise_free_vs_noisy(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cells = cells(spec);
    let records = grid_trials(spec, &cells, |cell, t, seed| {
        let run = || -> Result<TrialRecord> {
            let cfg = scenario_for(spec, cell, seed);
            let mut sampler = ScenarioSampler::new(&cfg);
            let (labelled, _) = sampler.draw_labelled(cell.n_obs)?;
            let cal = calibrate(spec, &labelled, seed)?;
            let (test, clean) = sampler.draw_labelled(spec.n_test)?;
            let ivs = intervals_for(&cal, &UnlabelledDataset::new(test.inputs().to_vec())?)?;
            let pc = paired_coverage(&ivs, test.outputs(), &clean)?;
            let mut r = TrialRecord::new(&cell.label, t, seed, "split_cp");
            r.noisy_coverage = Some(pc.noisy);
            r.noise_free_coverage = Some(pc.noise_free);
            Ok(r)
        };
        vec![run().unwrap_or_else(|e| TrialRecord::failed(&cell.label, t, seed, "split_cp", &e))]
    })?;
    Ok(ExperimentOutput::new(spec, records))
}

/// Guaranteed coverage against `k` for every method, plus the PAC `δ` sweep.
pub fn run_coverage_curve(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let noise = spec.noise_assumption()?;
    let n = spec.scenario.n;
    let n_cal = spec.n_cal(spec.scenario.n_obs);
    let methods = spec.methods.iter().copied().collect();
    let mut curve = coverage_curve(n, n_cal, spec.alpha, noise, &methods, spec.delta)?;
    let sweep = pac_delta_sweep(n, n_cal, spec.alpha, noise, &spec.deltas, spec.pac_refined)?;
    curve.extend(sweep.into_iter().filter(|p| p.method != "split"));
    let mut out = ExperimentOutput::new(spec, Vec::new());
    out.curve = Some(curve);
    Ok(out)
}

/// Rejection rate and accepted-point error against the width threshold on
/// the heteroskedastic sine scenario.
pub fn run_abstention_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let noise = spec.noise_assumption()?;
    let n_obs = spec.scenario.n_obs;
    let cell = format!("sine/range={}/n_obs={n_obs}", spec.sine_range);
    let results = par_trials(spec.workers, spec.trials, |t| {
        let seed = trial_seed(spec.seed, t as u64);
        let run = || -> Result<(TrialRecord, SweepAccumulator)> {
            let mut sc = SineScenario::new(spec.sine_range, stream(seed, STREAM_DATA));
            let to_data = |xs: &[f64], ys: &[f64]| {
                LabelledDataset::new(xs.iter().map(|&x| sine_features(x)).collect(), ys.to_vec())
            };
            let (xs, ys, _) = sc.draw(n_obs);
            let cal = calibrate(spec, &to_data(&xs, &ys)?, seed)?;
            let (txs, tys, tfs) = sc.draw(spec.n_test);
            let test = to_data(&txs, &tys)?;
            let mut acc = SweepAccumulator::new(spec.thresholds.clone());
            acc.add(&cal, &test)?;
            let report = error_bound_check(&cal, noise, &test, &tfs)?;
            let mut r = TrialRecord::new(&cell, t, seed, "split_cp");
            r.error_bound_rate = Some(report.rate);
            r.widths = vec![2.0 * cal.quantile_radius()];
            Ok((r, acc))
        };
        run().map_err(|e| TrialRecord::failed(&cell, t, seed, "split_cp", &e))
    })?;
    let mut total = SweepAccumulator::new(spec.thresholds.clone());
    let mut records = Vec::with_capacity(results.len());
    for res in results {
        match res {
            Ok((r, acc)) => {
                total.merge(&acc);
                records.push(r);
            }
            Err(r) => records.push(r),
        }
    }
    let mut out = ExperimentOutput::new(spec, records);
    out.sweep = Some(total.points());
    Ok(out)
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    match spec.name {
        ExperimentName::CoverageTable => run_coverage_table(spec),
        ExperimentName::WidthTable => run_width_table(spec),
        ExperimentName::RejectionTest => run_rejection_test(spec),
        ExperimentName::NoiseFreeVsNoisy => run_noise_free_vs_noisy(spec),
        ExperimentName::CoverageCurve => run_coverage_curve(spec),
        ExperimentName::AbstentionSweep => run_abstention_sweep(spec),
    }
}

/// A region over exactly collinear data, for smoke checks.
pub fn noiseless_region(
    theta: &[f64],
    xs: &[Vec<f64>],
    half_width: f64,
    k: usize,
) -> Result<RegionSpec> {
    let cs = xs
        .iter()
        .map(|x| {
            let v = crate::conformal::dot(theta, x);
            VoteConstraint {
                x: x.clone(),
                lower: v - half_width,
                upper: v + half_width,
            }
        })
        .collect();
    RegionSpec::new(cs, k, vec![(-100.0, 100.0); theta.len()])
}

/// Least squares on a labelled set, exposed for the CLI self-test.
pub fn quick_fit(data: &LabelledDataset) -> Result<Vec<f64>> {
    Ok(fit_least_squares(data, false)?.coefficients)
}
