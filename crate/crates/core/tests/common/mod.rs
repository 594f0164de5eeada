//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use conformal_region::milp::{MilpProblem, Relation, Sense};
use conformal_region::region::{RegionSpec, VoteConstraint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Solves the square system `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..d {
            let f = a[r][col] / a[col][col];
            for c in col..d {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Calls `f` on every `d`-subset of `0..m`.
pub fn for_each_subset(m: usize, d: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, m: usize, d: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == d {
            f(cur);
            return;
        }
        for i in start..m {
            if m - i < d - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, d, cur, f);
            cur.pop();
        }
    }
    rec(0, m, d, &mut Vec::with_capacity(d), f);
}

/// Every vertex of the hyperplane arrangement `{aᵀθ = b}` inside the box.
pub fn arrangement_vertices(planes: &[(Vec<f64>, f64)], bx: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let d = bx.len();
    let mut all: Vec<(Vec<f64>, f64)> = planes.to_vec();
    for (j, &(lo, hi)) in bx.iter().enumerate() {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        all.push((e.clone(), lo));
        all.push((e, hi));
    }
    let mut out = Vec::new();
    for_each_subset(all.len(), d, &mut |idx| {
        let a = idx.iter().map(|&i| all[i].0.clone()).collect();
        let b = idx.iter().map(|&i| all[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            let inside = x.iter().zip(bx).all(|(&v, &(lo, hi))| {
                v >= lo - 1e-9 * (1.0 + lo.abs()) && v <= hi + 1e-9 * (1.0 + hi.abs())
            });
            if inside {
                out.push(x);
            }
        }
    });
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Votes with a relative slack for vertex round-off.
pub fn tolerant_votes(region: &RegionSpec, theta: &[f64]) -> usize {
    region
        .constraints
        .iter()
        .filter(|c| {
            let v = dot(&c.x, theta);
            let tol = 1e-8 * (1.0 + c.lower.abs().max(c.upper.abs()));
            v >= c.lower - tol && v <= c.upper + tol
        })
        .count()
}

/// Brute-force view of `Θ_k`: it is the union over vote subsets `S`,
/// `|S| ≥ k`, of polytopes whose vertices are arrangement vertices, so a
/// linear objective is optimized at an arrangement vertex with `≥ k` votes.
pub struct RegionOracle {
    pub vertices: Vec<(Vec<f64>, usize)>,
}

impl RegionOracle {
    pub fn new(region: &RegionSpec) -> Self {
        let planes: Vec<(Vec<f64>, f64)> = region
            .constraints
            .iter()
            .flat_map(|c| [(c.x.clone(), c.lower), (c.x.clone(), c.upper)])
            .collect();
        let vertices = arrangement_vertices(&planes, &region.reference_box)
            .into_iter()
            .map(|v| {
                let votes = tolerant_votes(region, &v);
                (v, votes)
            })
            .collect();
        Self { vertices }
    }

    pub fn nonempty(&self, k: usize) -> bool {
        self.vertices.iter().any(|(_, v)| *v >= k)
    }

    pub fn max(&self, c: &[f64], k: usize) -> Option<f64> {
        self.vertices
            .iter()
            .filter(|(_, v)| *v >= k)
            .map(|(x, _)| dot(c, x))
            .max_by(f64::total_cmp)
    }

    pub fn min(&self, c: &[f64], k: usize) -> Option<f64> {
        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        self.max(&neg, k).map(|v| -v)
    }
}

/// Optimum of a continuous bounded LP by vertex enumeration; `None` if infeasible.
pub fn lp_vertex_oracle(p: &MilpProblem) -> Option<f64> {
    assert_eq!(p.n_binary, 0);
    let planes: Vec<(Vec<f64>, f64)> = p
        .constraints
        .iter()
        .map(|c| (c.coefficients.clone(), c.rhs))
        .collect();
    let feasible = |x: &[f64]| {
        p.constraints.iter().all(|c| {
            let lhs = dot(&c.coefficients, x);
            let tol = 1e-8 * (1.0 + c.rhs.abs());
            match c.relation {
                Relation::Le => lhs <= c.rhs + tol,
                Relation::Ge => lhs >= c.rhs - tol,
                Relation::Eq => (lhs - c.rhs).abs() <= tol,
            }
        })
    };
    let vals = arrangement_vertices(&planes, &p.continuous_bounds)
        .into_iter()
        .filter(|x| feasible(x))
        .map(|x| dot(&p.objective, &x));
    match p.sense {
        Sense::Maximize => vals.max_by(f64::total_cmp),
        Sense::Minimize => vals.min_by(f64::total_cmp),
    }
}

/// Random region with `n` intervals around noisy evaluations of a hidden parameter.
pub fn random_region(seed: u64, n: usize, d: usize, k: usize, half_box: f64) -> RegionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let cs = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let shift: f64 = rng.random_range(-1.5..1.5);
            let half: f64 = rng.random_range(0.2..1.0);
            let mid = dot(&theta, &x) + shift;
            VoteConstraint {
                x,
                lower: mid - half,
                upper: mid + half,
            }
        })
        .collect();
    RegionSpec::new(cs, k, vec![(-half_box, half_box); d]).expect("valid region")
}

/// Monte Carlo of `E[g(Q)]`, `Q ~ Beta(a, b)`, from Beta draws of the
/// defensive mixture `½ Beta(a, b) + ½ Beta(a_wide, b_wide)`. Weights are at
/// most 2, so the sample standard error stays reliable while the wide
/// component reaches the far tails. Returns per-output means and standard errors.
#[allow(clippy::too_many_arguments)]
pub fn defensive_beta_mc(
    (a, b): (f64, f64),
    (a_wide, b_wide): (f64, f64),
    draws: usize,
    seed: u64,
    width: usize,
    g: impl Fn(f64) -> Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    use rand_distr::{Beta, Distribution};
    use statrs::distribution::{Beta as BetaPdf, Continuous};
    let target = BetaPdf::new(a, b).unwrap();
    let wide = BetaPdf::new(a_wide, b_wide).unwrap();
    let (d_target, d_wide) = (Beta::new(a, b).unwrap(), Beta::new(a_wide, b_wide).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; width];
    let mut sq = vec![0.0; width];
    for _ in 0..draws {
        let q: f64 = if rng.random_bool(0.5) {
            d_target.sample(&mut rng)
        } else {
            d_wide.sample(&mut rng)
        };
        let lt = target.ln_pdf(q);
        let lw = wide.ln_pdf(q);
        let w = 1.0 / (0.5 + 0.5 * (lw - lt).exp());
        for (j, y) in g(q).into_iter().enumerate() {
            sum[j] += w * y;
            sq[j] += (w * y).powi(2);
        }
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| ((s / n - m * m).max(0.0) / (n - 1.0)).sqrt())
        .collect();
    (mean, se)
}

/// Lower tails `P(Bin(n, q) < k)` for every `k ∈ [0, n]`.
pub fn binomial_lower_tails(n: usize, q: f64) -> Vec<f64> {
    use statrs::function::gamma::ln_gamma;
    let mut out = vec![0.0; n + 1];
    let mut acc = 0.0;
    for i in 0..n {
        let pmf = if q <= 0.0 {
            f64::from(u8::from(i == 0))
        } else if q >= 1.0 {
            0.0
        } else {
            let lc = ln_gamma(n as f64 + 1.0)
                - ln_gamma(i as f64 + 1.0)
                - ln_gamma((n - i) as f64 + 1.0);
            (lc + i as f64 * q.ln() + (n - i) as f64 * (1.0 - q).ln()).exp()
        };
        acc += pmf;
        out[i + 1] = acc.min(1.0);
    }
    out
}
