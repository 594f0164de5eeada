//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test --release --test acceptance`

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use conformal_region::bounds::{
    k_pac, split_bound_h, worst_case_coverage, BoundMethod, NoiseAssumption, WorstCaseGrid,
};
use conformal_region::conformal::{split_calibrate, DiscreteFixture};
use conformal_region::harness::{self, ExperimentName, ExperimentSpec, SummaryRow};
use conformal_region::milp::{Sense, SolverConfig};
use conformal_region::region::EmptinessStatus;
use conformal_region::special::{
    beta_cdf, beta_quantile, binomial_tail, BetaParams, BinomialTailParams,
};
use conformal_region::synthetic::{NoiseKind, ScenarioConfig, ScenarioSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITY_TOL: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-8;
const ORACLE_TOL: f64 = 1e-6;
const MC_SIGMAS: f64 = 3.0;
const GRID_TOL: f64 = 1e-3;
const LEVEL: f64 = 0.9;
const SPLIT_OBSERVED_FLOOR: f64 = 0.95;
const LOSS_SHARE: f64 = 0.01;
const NOISE_FREE_GAP: f64 = 0.02;
const REJECTION_FLOOR: f64 = 0.8;
const ABSTENTION_BOUND: f64 = 0.7;
const REFERENCE_WIDTH: f64 = 6.37;
const WIDTH_FACTOR: f64 = 2.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rate_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn row<'a>(rows: &'a [SummaryRow], cell: &str, method: &str) -> &'a SummaryRow {
    rows.iter()
        .find(|r| r.cell == cell && r.method == method)
        .unwrap_or_else(|| panic!("no summary row for {cell} {method}"))
}

fn special_identities() -> Verdict {
    let mut worst_identity: f64 = 0.0;
    for n in [5u64, 30, 100] {
        for i in 1..=99 {
            let p = i as f64 / 100.0;
            for k in 1..=n {
                let f = binomial_tail(BinomialTailParams::new(n, k, p).unwrap());
                let ib =
                    beta_cdf(p, BetaParams::new(k as f64, (n - k + 1) as f64).unwrap()).unwrap();
                let reference = statrs::function::beta::beta_reg(k as f64, (n - k + 1) as f64, p);
                worst_identity = worst_identity
                    .max((f - ib).abs())
                    .max((f - reference).abs());
            }
        }
    }
    let mut worst_round_trip: f64 = 0.0;
    for (r, s) in [
        (46.0, 5.0),
        (91.0, 10.0),
        (1.0, 1.0),
        (0.5, 2.5),
        (5.0, 46.0),
        (20.0, 20.0),
    ] {
        let b = BetaParams::new(r, s).unwrap();
        for i in 1..=199 {
            let z0 = i as f64 / 200.0;
            let q = beta_cdf(z0, b).unwrap();
            if !(1e-6..=1.0 - 1e-6).contains(&q) {
                continue;
            }
            worst_round_trip = worst_round_trip.max((beta_quantile(q, b).unwrap() - z0).abs());
        }
    }
    verdict(
        worst_identity <= IDENTITY_TOL && worst_round_trip <= ROUND_TRIP_TOL,
        format!("max |F_k - I_p| = {worst_identity:.2e}, max quantile round-trip error = {worst_round_trip:.2e}"),
    )
}

fn milp_oracle() -> Verdict {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = Vec::new();
    let mut worst: f64 = 0.0;
    let mut empties = 0;
    for inst in 0..200u64 {
        let n = rng.random_range(2..=12);
        let d = rng.random_range(1..=4);
        let k = rng.random_range(1..=n);
        let region = common::random_region(10_000 + inst, n, d, k, 10.0);
        let oracle = common::RegionOracle::new(&region);
        let e = region.is_empty(&cfg).unwrap();
        let ours = e.status == EmptinessStatus::NonEmpty;
        if ours != oracle.nonempty(k) {
            mismatches.push(inst);
            continue;
        }
        if !ours {
            empties += 1;
            continue;
        }
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hi = region
            .optimize(&c, Sense::Maximize, &cfg)
            .unwrap()
            .value
            .unwrap();
        let lo = region
            .optimize(&c, Sense::Minimize, &cfg)
            .unwrap()
            .value
            .unwrap();
        let err = (hi - oracle.max(&c, k).unwrap())
            .abs()
            .max((lo - oracle.min(&c, k).unwrap()).abs());
        worst = worst.max(err);
        if err > ORACLE_TOL {
            mismatches.push(inst);
        }
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "200 instances ({empties} empty), max optimum error {worst:.2e}, mismatches {mismatches:?}"
        ),
    )
}

fn h_vs_monte_carlo() -> Verdict {
    let (n, n_cal, alpha) = (30usize, 50usize, 0.1);
    let noise = NoiseAssumption::symmetric(true);
    let i_a = ((1.0 - alpha) * (n_cal as f64 + 1.0)).ceil();
    let j_a = n_cal as f64 + 1.0 - i_a;
    let (miss, se) = common::defensive_beta_mc((i_a, j_a), (2.0, j_a), 1_000_000, 31, n + 1, |q| {
        common::binomial_lower_tails(n, q)
    });
    let mut worst_z: f64 = 0.0;
    let mut bad = Vec::new();
    for k in 0..=n {
        let h = split_bound_h(n, k, n_cal, alpha, noise).unwrap();
        let diff = (h - (1.0 - miss[k])).abs();
        if diff > MC_SIGMAS * se[k] + 2.0 * f64::EPSILON {
            bad.push(k);
        }
        if se[k] > 0.0 {
            worst_z = worst_z.max(diff / se[k]);
        }
    }
    verdict(
        bad.is_empty(),
        format!("max |H - MC| / se = {worst_z:.2}, failing k: {bad:?}"),
    )
}

fn bound_ordering() -> Verdict {
    let mut worst: f64 = f64::INFINITY;
    for ap in [0.05, 0.1] {
        for n_cal in [50, 200] {
            for k in 0..=30 {
                let h = split_bound_h(30, k, n_cal, ap, NoiseAssumption::symmetric(true)).unwrap();
                let w = worst_case_coverage(30, k, ap, WorstCaseGrid::default());
                worst = worst.min(h - w);
            }
        }
    }
    verdict(
        worst >= -GRID_TOL,
        format!("min H(k) - worst_case(k) = {worst:.3e}"),
    )
}

fn coverage_validity() -> Verdict {
    let mut spec = ExperimentSpec::preset(ExperimentName::CoverageTable);
    spec.trials = 300;
    spec.dims = vec![3];
    spec.methods = vec![BoundMethod::Split, BoundMethod::WorstCase];
    spec.seed = 5;
    let out = harness::run(&spec).unwrap();
    let mut pass = out.check_health().is_ok();
    let mut parts = Vec::new();
    for r in &out.summary {
        let c = r.coverage.unwrap();
        let ok = c >= LEVEL - MC_SIGMAS * rate_se(c, r.trials)
            && (r.method != "split" || c >= SPLIT_OBSERVED_FLOOR);
        pass &= ok;
        parts.push(format!(
            "{}:{}={:.3}",
            r.cell.split('/').next().unwrap(),
            r.method,
            c
        ));
    }
    verdict(pass, parts.join(" "))
}

fn noise_free_dominance() -> Verdict {
    let mut spec = ExperimentSpec::preset(ExperimentName::NoiseFreeVsNoisy);
    spec.trials = 200;
    spec.seed = 6;
    let out = harness::run(&spec).unwrap();
    let mut pass = out.check_health().is_ok();
    let mut parts = Vec::new();
    for r in &out.summary {
        let losses = r.losses.unwrap();
        pass &= losses as f64 <= LOSS_SHARE * r.trials as f64;
        parts.push(format!(
            "{} losses {losses}/{} ({:.3} vs {:.3})",
            r.cell,
            r.trials,
            r.mean_noise_free_coverage.unwrap(),
            r.mean_noisy_coverage.unwrap()
        ));
    }
    let g = row(&out.summary, "aG/d=10/n_obs=100", "split_cp");
    let gap = g.mean_noise_free_coverage.unwrap() - g.mean_noisy_coverage.unwrap();
    pass &= gap >= NOISE_FREE_GAP;
    let fixture = DiscreteFixture::adversarial().evaluate().unwrap();
    pass &= fixture.noisy == 0.95 && fixture.noise_free == 0.90;
    parts.push(format!(
        "fixture {} vs {}",
        fixture.noisy, fixture.noise_free
    ));
    verdict(pass, parts.join("; "))
}

fn hypothesis_testing() -> Verdict {
    let mut spec = ExperimentSpec::preset(ExperimentName::RejectionTest);
    spec.trials = 100;
    spec.methods = vec![BoundMethod::Split];
    spec.seed = 7;
    let out = harness::run(&spec).unwrap();
    let healthy = out.check_health().is_ok();
    let sine = row(&out.summary, "sine", "split");
    let null = row(&out.summary, "linear_null", "split");
    let (rs, rn) = (sine.rejection_rate.unwrap(), null.rejection_rate.unwrap());
    let null_ok = rn <= spec.beta + MC_SIGMAS * rate_se(rn, null.trials);
    verdict(
        healthy && rs >= REJECTION_FLOOR && null_ok,
        format!(
            "sine rejection {rs:.3} (need >= {REJECTION_FLOOR}), linear-null rejection {rn:.3}"
        ),
    )
}

fn abstention_bound() -> Verdict {
    let mut spec = ExperimentSpec::preset(ExperimentName::AbstentionSweep);
    spec.trials = 200;
    spec.n_test = 2000;
    spec.seed = 8;
    let out = harness::run(&spec).unwrap();
    let r = &out.summary[0];
    let (m, se) = (
        r.mean_error_bound_rate.unwrap(),
        r.error_bound_rate_se.unwrap(),
    );
    verdict(
        out.check_health().is_ok() && m >= ABSTENTION_BOUND - MC_SIGMAS * se,
        format!("mean rate {m:.4} (se {se:.4}) against bound {ABSTENTION_BOUND}"),
    )
}

fn pac_bound() -> Verdict {
    let (n, n_obs, alpha, beta, delta) = (30usize, 100usize, 0.1, 0.1, 0.1);
    let cfg = ScenarioConfig {
        n_obs,
        n,
        noise: NoiseKind::AdditiveGaussian,
        ..ScenarioConfig::default()
    };
    let theta = ScenarioSampler::new(&cfg).theta_star().to_vec();
    let calibrations = 500;
    let mut below = 0;
    let mut k_used = 0;
    for c in 0..calibrations {
        let mut sampler =
            ScenarioSampler::with_theta(theta.clone(), cfg.noise, false, harness::trial_seed(9, c));
        let (data, _) = sampler.draw_labelled(n_obs).unwrap();
        let cal = split_calibrate(&data, alpha, 0.5, c).unwrap();
        let k = k_pac(
            n,
            cal.n_cal(),
            alpha,
            beta,
            delta,
            NoiseAssumption::symmetric(true),
            true,
        )
        .unwrap()
        .k;
        k_used = k;
        let q = cal.quantile_radius();
        let covered = (0..2000)
            .filter(|_| {
                let votes = sampler
                    .draw_inputs(n)
                    .iter()
                    .filter(|x| {
                        let truth: f64 = theta.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                        (cal.predictor().predict(x).unwrap() - truth).abs() <= q
                    })
                    .count();
                votes >= k
            })
            .count();
        if (covered as f64 / 2000.0) < 1.0 - beta {
            below += 1;
        }
    }
    let f = below as f64 / calibrations as f64;
    verdict(
        f <= delta + MC_SIGMAS * rate_se(f, calibrations as usize),
        format!(
            "k_PAC = {k_used}, {below}/{calibrations} calibrations below {:.2}",
            1.0 - beta
        ),
    )
}

fn width_sanity() -> Verdict {
    let mut spec = ExperimentSpec::preset(ExperimentName::WidthTable);
    spec.trials = 50;
    spec.noises = vec![NoiseKind::AdditiveGaussian];
    spec.methods = vec![BoundMethod::Split, BoundMethod::Markov];
    spec.seed = 10;
    let out = harness::run(&spec).unwrap();
    let cell = "aG/d=3/n_obs=40";
    let split = row(&out.summary, cell, "split");
    let markov = row(&out.summary, cell, "markov");
    let sw = split.mean_width.unwrap_or(f64::NAN);
    let finite = split.clamp_rate == Some(0.0) && split.failures == 0;
    let in_range = (REFERENCE_WIDTH / WIDTH_FACTOR..=REFERENCE_WIDTH * WIDTH_FACTOR).contains(&sw);
    let mw = markov.mean_box_width.unwrap_or(f64::NAN);
    let ordered = mw >= split.mean_box_width.unwrap_or(f64::INFINITY);
    verdict(
        out.check_health().is_ok() && finite && in_range && ordered,
        format!(
            "split mean width {sw:.3} (clamped {:.3}), markov box-limited mean width {mw:.3} (clamped {:.3})",
            split.clamp_rate.unwrap_or(f64::NAN),
            markov.clamp_rate.unwrap_or(f64::NAN)
        ),
    )
}

fn determinism() -> Verdict {
    let mut results = Vec::new();
    let mut specs = Vec::new();
    let mut s = ExperimentSpec::preset(ExperimentName::CoverageTable);
    s.trials = 40;
    s.dims = vec![3];
    specs.push(s);
    let mut s = ExperimentSpec::preset(ExperimentName::WidthTable);
    s.trials = 2;
    s.noises = vec![NoiseKind::Outliers];
    specs.push(s);
    for spec in specs {
        let mut csvs = BTreeSet::new();
        for workers in [1, 2, 4] {
            for _ in 0..2 {
                let mut s = spec.clone();
                s.workers = workers;
                s.seed = 11;
                csvs.insert(harness::run(&s).unwrap().trials_csv().unwrap());
            }
        }
        results.push((spec.name.as_str(), csvs.len()));
    }
    verdict(
        results.iter().all(|(_, distinct)| *distinct == 1),
        format!("distinct trials.csv per experiment over 6 runs: {results:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("special-function identities", special_identities),
        ("MILP oracle equivalence", milp_oracle),
        ("split bound vs Monte Carlo", h_vs_monte_carlo),
        ("bound ordering", bound_ordering),
        ("coverage validity", coverage_validity),
        ("noise-free dominance", noise_free_dominance),
        ("hypothesis testing", hypothesis_testing),
        ("abstention bound", abstention_bound),
        ("PAC bound", pac_bound),
        ("width sanity", width_sanity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name} [{:.1}s]: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
