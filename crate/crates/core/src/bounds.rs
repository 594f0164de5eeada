//! Vote-threshold selection for `Θ_k`.
//!
//! Four families are provided, from the most generic to the most specific:
//!
//! * **markov**: randomized Markov inequality, valid for any conformal method.
//! * **worst_case**: minimum of `E[F_k(Q)]` over all laws of the conditional
//!   coverage `Q` with `E[Q] ≥ 1 − α'`; the minimizer is a two-point mixture,
//!   so a grid over its support `(v, u)` suffices.
//! * **split**: split conformal makes the conditional coverage
//!   `Beta(i_α, j_α)`-distributed, giving `H(k) = E[F_k(Q')]`.
//! * **pac**: coverage holding with probability `1 − δ` over the calibration draw.
//!
//! Every scan runs `k = n, n − 1, …, 0` and keeps the largest qualifying `k`.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::conformal_rank;
use crate::special::{
    beta_quantile, binomial_tail_unchecked, ln_beta_unchecked, ln_choose, regularized_unchecked,
    BetaParams,
};
use crate::{Error, Result};

/// Slack applied before flooring the Markov base threshold.
const FLOOR_SLACK: f64 = 1e-9;

/// Default confidence tolerance for the PAC bound.
pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseAssumption {
    b: f64,
    assumption3: bool,
}

impl NoiseAssumption {
    /// `b` lower-bounds min(P(ξ ≥ 0 | x), P(ξ ≤ 0 | x)); `assumption3` asserts
    /// that noise-free outputs are covered at the same level as noisy ones.
    pub fn new(b: f64, assumption3: bool) -> Result<Self> {
        if !(b > 0.0 && b <= 0.5) {
            return Err(Error::InvalidParameter(format!("b = {b} outside (0, 0.5]")));
        }
        Ok(Self { b, assumption3 })
    }

    /// Median-zero noise (b = 1/2).
    pub fn symmetric(assumption3: bool) -> Self {
        Self {
            b: 0.5,
            assumption3,
        }
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn assumption3(&self) -> bool {
        self.assumption3
    }
}

/// `α' = α / b`, or `α` when noise-free coverage is assumed to match.
pub fn noise_free_alpha(alpha: f64, noise: NoiseAssumption) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} outside (0, 1)"
        )));
    }
    let alpha_prime = if noise.assumption3 {
        alpha
    } else {
        alpha / noise.b
    };
    if alpha_prime >= 1.0 {
        return Err(Error::VacuousGuarantee { alpha_prime });
    }
    Ok(alpha_prime)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Markov,
    WorstCase,
    Split,
    Pac,
}

impl BoundMethod {
    pub const ALL: [BoundMethod; 4] = [
        BoundMethod::Markov,
        BoundMethod::WorstCase,
        BoundMethod::Split,
        BoundMethod::Pac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundMethod::Markov => "markov",
            BoundMethod::WorstCase => "worst_case",
            BoundMethod::Split => "split",
            BoundMethod::Pac => "pac",
        }
    }
}

impl std::fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BoundMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markov" => Ok(Self::Markov),
            "worst_case" | "worst-case" => Ok(Self::WorstCase),
            "split" => Ok(Self::Split),
            "pac" => Ok(Self::Pac),
            other => Err(Error::InvalidParameter(format!(
                "unknown bound method {other:?}"
            ))),
        }
    }
}

/// Everything a selection was computed from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub beta: f64,
    pub alpha_prime: f64,
    pub alpha: Option<f64>,
    pub n_cal: Option<usize>,
    pub b: Option<f64>,
    pub assumption3: Option<bool>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub method: BoundMethod,
    pub k: usize,
    /// Realized `U` of the randomized Markov bound.
    pub randomizer_draw: Option<f64>,
    pub guaranteed_coverage: f64,
    pub inputs: BoundInputs,
}

/// Randomized Markov threshold `⌊n + 1 − nα'/β⌋ + ⌊U⌋`, `U ~ Unif(0, n − k̄ + 1)`.
pub fn k_markov(n: usize, alpha_prime: f64, beta: f64, seed: u64) -> Result<KSelection> {
    check_n_beta(n, beta)?;
    let nf = n as f64;
    let base = (nf + 1.0 - nf * alpha_prime / beta + FLOOR_SLACK).floor();
    if base < 1.0 {
        return Err(Error::NoValidK(format!(
            "markov base threshold {base} < 1 for n = {n}, alpha' = {alpha_prime}, beta = {beta}"
        )));
    }
    let base = base as usize;
    let width = (n - base + 1) as f64;
    let u = ChaCha8Rng::seed_from_u64(seed).random::<f64>() * width;
    // ⌊U⌋ ≤ n − k̄ already; the clamp only guards rounding.
    let k = (base + u.floor() as usize).min(n);
    Ok(KSelection {
        method: BoundMethod::Markov,
        k,
        randomizer_draw: Some(u),
        guaranteed_coverage: 1.0 - nf * alpha_prime / width,
        inputs: BoundInputs {
            n,
            beta,
            alpha_prime,
            seed: Some(seed),
            ..Default::default()
        },
    })
}

/// Base Markov threshold `k̄` before randomization.
pub fn markov_base(n: usize, alpha_prime: f64, beta: f64) -> Option<usize> {
    let nf = n as f64;
    let base = (nf + 1.0 - nf * alpha_prime / beta + FLOOR_SLACK).floor();
    (base >= 1.0).then_some(base as usize)
}

/// Resolution of the `(u, v)` search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorstCaseGrid {
    /// Points per axis on the coarse pass.
    pub coarse: usize,
    /// Points per axis inside the best coarse cell.
    pub refine: usize,
}

impl Default for WorstCaseGrid {
    fn default() -> Self {
        Self {
            coarse: 512,
            refine: 512,
        }
    }
}

/// `min_{u,v} S(u, v, k)` with `S = (1 − m)F_k(v) + m F_k(u)`,
/// `m = (1 − α' − v)/(u − v)`, over `v ∈ [0, 1 − α')`, `u ∈ (1 − α', 1]`,
/// plus the collapsed limit `u, v → 1 − α'` which evaluates to `F_k(1 − α')`.
pub fn worst_case_coverage(n: usize, k: usize, alpha_prime: f64, grid: WorstCaseGrid) -> f64 {
    let n64 = n as u64;
    let k64 = k as u64;
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let c = 1.0 - alpha_prime;
    if c >= 1.0 {
        return binomial_tail_unchecked(n64, k64, 1.0);
    }
    if c <= 0.0 {
        return 0.0;
    }
    let f = |p: f64| binomial_tail_unchecked(n64, k64, p);
    let coarse = grid.coarse.max(2);

    let vs: Vec<f64> = (0..coarse).map(|i| c * i as f64 / coarse as f64).collect();
    let us: Vec<f64> = (1..=coarse)
        .map(|j| c + (1.0 - c) * j as f64 / coarse as f64)
        .collect();
    let (best, bi, bj) = min_two_point(c, &vs, &us, &f);
    let mut best = best.min(f(c));

    if grid.refine > 1 {
        let v_lo = if bi == 0 { 0.0 } else { vs[bi - 1] };
        let v_hi = vs.get(bi + 1).copied().unwrap_or(c);
        let u_lo = if bj == 0 { c } else { us[bj - 1] };
        let u_hi = us.get(bj + 1).copied().unwrap_or(1.0);
        let r = grid.refine;
        // v stays strictly below c and u strictly above.
        let vs: Vec<f64> = (0..r)
            .map(|i| v_lo + (v_hi - v_lo) * i as f64 / r as f64)
            .filter(|&v| v < c)
            .collect();
        let us: Vec<f64> = (1..=r)
            .map(|j| u_lo + (u_hi - u_lo) * j as f64 / r as f64)
            .filter(|&u| u > c)
            .collect();
        if !vs.is_empty() && !us.is_empty() {
            best = best.min(min_two_point(c, &vs, &us, &f).0);
        }
    }
    best.clamp(0.0, 1.0)
}

fn min_two_point(c: f64, vs: &[f64], us: &[f64], f: &impl Fn(f64) -> f64) -> (f64, usize, usize) {
    let fv: Vec<f64> = vs.iter().map(|&v| f(v)).collect();
    let fu: Vec<f64> = us.iter().map(|&u| f(u)).collect();
    let mut best = (f64::INFINITY, 0, 0);
    for (i, (&v, &fvi)) in vs.iter().zip(&fv).enumerate() {
        for (j, (&u, &fuj)) in us.iter().zip(&fu).enumerate() {
            let m = (c - v) / (u - v);
            let s = fvi + m * (fuj - fvi);
            if s < best.0 {
                best = (s, i, j);
            }
        }
    }
    best
}

/// Largest `k` whose worst-case coverage is at least `1 − β`.
pub fn k_worst_case(
    n: usize,
    alpha_prime: f64,
    beta: f64,
    grid: WorstCaseGrid,
) -> Result<KSelection> {
    check_n_beta(n, beta)?;
    let target = 1.0 - beta;
    let (k, cov) = (0..=n)
        .rev()
        .map(|k| (k, worst_case_coverage(n, k, alpha_prime, grid)))
        .find(|&(_, cov)| cov >= target)
        .unwrap_or((0, 1.0));
    Ok(KSelection {
        method: BoundMethod::WorstCase,
        k,
        randomizer_draw: None,
        guaranteed_coverage: cov,
        inputs: BoundInputs {
            n,
            beta,
            alpha_prime,
            ..Default::default()
        },
    })
}

/// `(i_α, j_α)` of the Beta law of split-conformal conditional coverage.
pub fn beta_shapes(n_cal: usize, alpha: f64) -> Result<(usize, usize)> {
    let i = conformal_rank(alpha, n_cal);
    if i > n_cal || i == 0 {
        return Err(Error::InfeasibleQuantile {
            n_cal,
            alpha,
            min_n_cal: crate::conformal::min_calibration_size(alpha),
        });
    }
    Ok((i, n_cal + 1 - i))
}

/// Split-conformal coverage bound `H(k) = E_{Q ~ Beta(i_α, j_α)}[F_k(Q')]`.
///
/// Under assumption 3 (`Q' = Q`) this is the single sum
/// `Σ_{i≥k} C(n,i) B(i_α + i, n − i + j_α) / B(i_α, j_α)` in log space.
/// Otherwise `Q' = 1 − (1 − Q)/b` and the expectation of
/// `F_k(Q')·1{Q' ∈ (0, 1)}` is integrated over `Q ∈ [1 − b, 1]` by adaptive
/// Gauss–Legendre quadrature.
pub fn split_bound_h(
    n: usize,
    k: usize,
    n_cal: usize,
    alpha: f64,
    noise: NoiseAssumption,
) -> Result<f64> {
    let (ia, ja) = beta_shapes(n_cal, alpha)?;
    if k > n {
        return Ok(0.0);
    }
    let (ia, ja) = (ia as f64, ja as f64);
    if noise.assumption3 {
        let lb = ln_beta_unchecked(ia, ja);
        let term = |i: usize| {
            (ln_choose(n as u64, i as u64) + ln_beta_unchecked(ia + i as f64, (n - i) as f64 + ja)
                - lb)
                .exp()
        };
        let upper: f64 = (k..=n).map(term).sum();
        // The shorter-tailed side keeps the complement accurate near 1.
        let h = if upper > 0.5 {
            1.0 - (0..k).map(term).sum::<f64>()
        } else {
            upper
        };
        return Ok(h.clamp(0.0, 1.0));
    }
    let b = noise.b;
    if k == 0 {
        // F_0 ≡ 1: only the indicator remains.
        return Ok((1.0 - regularized_unchecked(1.0 - b, ia, ja)).clamp(0.0, 1.0));
    }
    let lb = ln_beta_unchecked(ia, ja);
    let (n64, k64) = (n as u64, k as u64);
    // Substitute Q = 1 − b t, t ∈ [0, 1], so that Q' = 1 − t.
    let integrand = |t: f64| {
        let q = 1.0 - b * t;
        if q <= 0.0 || q >= 1.0 || t >= 1.0 {
            return 0.0;
        }
        let ln_pdf = (ia - 1.0) * q.ln() + (ja - 1.0) * (b * t).ln() - lb;
        b * ln_pdf.exp() * binomial_tail_unchecked(n64, k64, 1.0 - t)
    };
    let h = adaptive_gauss_legendre(&integrand, 0.0, 1.0, 1e-14);
    Ok(h.clamp(0.0, 1.0))
}

/// The alternating double-sum closed form of `H(k)` without assumption 3.
///
/// Terms of size `C(n,i)C(i,j)|b−1|^{i−j}` cancel, so this is only a
/// cross-check for small `n` (about `n ≤ 10` at `b = 1/2`).
pub fn split_bound_h_double_sum(
    n: usize,
    k: usize,
    n_cal: usize,
    alpha: f64,
    b: f64,
) -> Result<f64> {
    let (ia, ja) = beta_shapes(n_cal, alpha)?;
    let (ia, ja) = (ia as f64, ja as f64);
    let lb = ln_beta_unchecked(ia, ja);
    let mut total = 0.0;
    for i in k..=n {
        let mut inner = 0.0;
        for j in 0..=i {
            let r = ia + j as f64;
            let s = (n - i) as f64 + ja;
            // B_ij = ∫_{1−b}^1 p^{r−1}(1−p)^{s−1} dp = B(r, s)·I_b(s, r).
            let bij = ln_beta_unchecked(r, s).exp() * regularized_unchecked(b, s, r);
            let sign = if (i - j) % 2 == 0 { 1.0 } else { -1.0 };
            let mag = (ln_choose(i as u64, j as u64) + (i - j) as f64 * (1.0 - b).ln()).exp();
            inner += sign * mag * bij;
        }
        total += (ln_choose(n as u64, i as u64)).exp() * inner;
    }
    Ok(total / (lb.exp() * b.powi(n as i32)))
}

/// Largest `k` with `H(k) ≥ 1 − β`.
pub fn k_split(
    n: usize,
    n_cal: usize,
    alpha: f64,
    beta: f64,
    noise: NoiseAssumption,
) -> Result<KSelection> {
    check_n_beta(n, beta)?;
    let alpha_prime = noise_free_alpha(alpha, noise)?;
    let target = 1.0 - beta;
    for k in (0..=n).rev() {
        let h = split_bound_h(n, k, n_cal, alpha, noise)?;
        if h >= target {
            return Ok(KSelection {
                method: BoundMethod::Split,
                k,
                randomizer_draw: None,
                guaranteed_coverage: h,
                inputs: BoundInputs {
                    n,
                    beta,
                    alpha_prime,
                    alpha: Some(alpha),
                    n_cal: Some(n_cal),
                    b: Some(noise.b),
                    assumption3: Some(noise.assumption3),
                    ..Default::default()
                },
            });
        }
    }
    Err(Error::NoValidK(format!(
        "split bound H(0) < {target} for n_cal = {n_cal}, alpha = {alpha}, b = {}",
        noise.b
    )))
}

/// Conditional miscoverage `α̃(δ)` of the noisy outputs holding with
/// probability `1 − δ` over the calibration draw.
///
/// The plain form is `α + sqrt(ln(1/δ)/n_cal)`; the refined form reads it
/// off the `δ`-quantile of `Beta(i_α, j_α)`.
pub fn pac_alpha(n_cal: usize, alpha: f64, delta: f64, refined: bool) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    if refined {
        let (ia, ja) = beta_shapes(n_cal, alpha)?;
        let q = beta_quantile(delta, BetaParams::new(ia as f64, ja as f64)?)?;
        Ok(1.0 - q)
    } else {
        Ok(alpha + ((1.0 / delta).ln() / n_cal as f64).sqrt())
    }
}

/// Coverage level `p` such that the noise-free conditional coverage is at
/// least `p` with probability `1 − δ`.
pub fn pac_level(
    n_cal: usize,
    alpha: f64,
    delta: f64,
    noise: NoiseAssumption,
    refined: bool,
) -> Result<f64> {
    let at = pac_alpha(n_cal, alpha, delta, refined)?;
    let p = if noise.assumption3 {
        1.0 - at
    } else {
        1.0 - at / noise.b
    };
    if p < 0.0 {
        return Err(Error::NoValidK(format!("PAC level 1 - {at}/b is negative")));
    }
    Ok(p.min(1.0))
}

/// Largest `k` with `F_k(p) ≥ 1 − β` at the PAC level `p`.
#[allow(clippy::too_many_arguments)]
pub fn k_pac(
    n: usize,
    n_cal: usize,
    alpha: f64,
    beta: f64,
    delta: f64,
    noise: NoiseAssumption,
    refined: bool,
) -> Result<KSelection> {
    check_n_beta(n, beta)?;
    let p = pac_level(n_cal, alpha, delta, noise, refined)?;
    let target = 1.0 - beta;
    let (k, cov) = (0..=n)
        .rev()
        .map(|k| (k, binomial_tail_unchecked(n as u64, k as u64, p)))
        .find(|&(_, f)| f >= target)
        .expect("F_0 = 1 always qualifies");
    Ok(KSelection {
        method: BoundMethod::Pac,
        k,
        randomizer_draw: None,
        guaranteed_coverage: cov,
        inputs: BoundInputs {
            n,
            beta,
            alpha_prime: 1.0 - p,
            alpha: Some(alpha),
            n_cal: Some(n_cal),
            b: Some(noise.b),
            assumption3: Some(noise.assumption3),
            delta: Some(delta),
            ..Default::default()
        },
    })
}

/// All parameters needed to pick `k` with any of the four methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRequest {
    pub n: usize,
    pub n_cal: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub noise: NoiseAssumption,
    pub pac_refined: bool,
    pub grid: WorstCaseGrid,
}

impl BoundRequest {
    /// Selection for `method`; `seed` feeds the Markov randomizer only.
    pub fn select(&self, method: BoundMethod, seed: u64) -> Result<KSelection> {
        let alpha_prime = noise_free_alpha(self.alpha, self.noise)?;
        let mut sel = match method {
            BoundMethod::Markov => k_markov(self.n, alpha_prime, self.beta, seed)?,
            BoundMethod::WorstCase => k_worst_case(self.n, alpha_prime, self.beta, self.grid)?,
            BoundMethod::Split => {
                return k_split(self.n, self.n_cal, self.alpha, self.beta, self.noise)
            }
            BoundMethod::Pac => {
                return k_pac(
                    self.n,
                    self.n_cal,
                    self.alpha,
                    self.beta,
                    self.delta,
                    self.noise,
                    self.pac_refined,
                )
            }
        };
        sel.inputs.alpha = Some(self.alpha);
        sel.inputs.b = Some(self.noise.b);
        sel.inputs.assumption3 = Some(self.noise.assumption3);
        Ok(sel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub k: usize,
    pub coverage: f64,
}

/// Guaranteed coverage of `Θ_k` for every `k ∈ [0, n]` and requested method.
///
/// Markov reports the marginal bound `1 − nα'/(n − k + 1)` at the
/// un-randomized `k`. Every method reports 1 at `k = 0`, where the region is
/// the whole parameter space. Rows are ordered by `k`, then by method.
pub fn coverage_curve(
    n: usize,
    n_cal: usize,
    alpha: f64,
    noise: NoiseAssumption,
    methods: &BTreeSet<BoundMethod>,
    delta: f64,
) -> Result<Vec<CurvePoint>> {
    let alpha_prime = noise_free_alpha(alpha, noise)?;
    let grid = WorstCaseGrid::default();
    let pac_p = if methods.contains(&BoundMethod::Pac) {
        Some(pac_level(n_cal, alpha, delta, noise, false)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity((n + 1) * methods.len());
    for k in 0..=n {
        for &m in methods {
            let coverage = if k == 0 {
                1.0
            } else {
                match m {
                    BoundMethod::Markov => {
                        (1.0 - n as f64 * alpha_prime / (n - k + 1) as f64).clamp(0.0, 1.0)
                    }
                    BoundMethod::WorstCase => worst_case_coverage(n, k, alpha_prime, grid),
                    BoundMethod::Split => split_bound_h(n, k, n_cal, alpha, noise)?,
                    BoundMethod::Pac => {
                        binomial_tail_unchecked(n as u64, k as u64, pac_p.unwrap_or(0.0))
                    }
                }
            };
            out.push(CurvePoint {
                method: m.name().to_string(),
                k,
                coverage,
            });
        }
    }
    Ok(out)
}

/// PAC coverage curves for several `δ`, alongside `H(k)` for reference.
pub fn pac_delta_sweep(
    n: usize,
    n_cal: usize,
    alpha: f64,
    noise: NoiseAssumption,
    deltas: &[f64],
    refined: bool,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    let levels = deltas
        .iter()
        .map(|&d| pac_level(n_cal, alpha, d, noise, refined).map(|p| (d, p)))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..=n {
        let h = if k == 0 {
            1.0
        } else {
            split_bound_h(n, k, n_cal, alpha, noise)?
        };
        out.push(CurvePoint {
            method: "split".into(),
            k,
            coverage: h,
        });
        for &(d, p) in &levels {
            out.push(CurvePoint {
                method: format!("pac(delta={d})"),
                k,
                coverage: binomial_tail_unchecked(n as u64, k as u64, p),
            });
        }
    }
    Ok(out)
}

/// Writes curve rows as CSV with columns `method,k,coverage`.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn check_n_beta(n: usize, beta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "beta {beta} outside (0, 1)"
        )));
    }
    Ok(())
}

const GL_ORDER: usize = 10;

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration.
fn gl_rule() -> &'static [(f64, f64); GL_ORDER] {
    static RULE: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = [(0.0, 0.0); GL_ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let j = j as f64;
                    let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule[i] = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

fn gl_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * gl_rule()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

/// Recursive bisection until a panel agrees with its two halves.
pub(crate) fn adaptive_gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gl_panel(f, a, m);
        let right = gl_panel(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(f, a, m, left, 0.5 * tol, depth - 1) + recurse(f, m, b, right, 0.5 * tol, depth - 1)
    }
    // Start from a few panels so narrow peaks are not missed.
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            recurse(f, lo, hi, gl_panel(f, lo, hi), tol / panels as f64, 40)
        })
        .sum()
}
