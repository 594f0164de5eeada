//! The vote region `Θ_k` for linear models and the big-M program behind it.
//!
//! Each unlabelled input contributes a binary `a_i` and the pair of rows
//! `A_i − M(1 − a_i) ≤ θᵀx_i ≤ B_i + M(1 − a_i)`; requiring `Σ a_i ≥ k`
//! leaves exactly `Θ_k` intersected with the reference box.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::KSelection;
use crate::conformal::{dot, PredictionInterval, UnlabelledDataset};
use crate::milp::{
    self, LinearConstraint, LpStatus, MilpProblem, MilpStatus, Relation, Sense, SolveOptions,
    SolverConfig,
};
use crate::{Error, Result};

pub const DEFAULT_BOX_HALF_WIDTH: f64 = 100.0;
pub const BIG_M_SAFETY: f64 = 1.1;

/// One vote: `lower ≤ θᵀx ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteConstraint {
    pub x: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl VoteConstraint {
    pub fn contains(&self, theta: &[f64]) -> bool {
        let v = dot(theta, &self.x);
        self.lower <= v && v <= self.upper
    }

    fn contains_within(&self, theta: &[f64], tol: f64) -> bool {
        let v = dot(theta, &self.x);
        self.lower - tol * (1.0 + self.lower.abs()) <= v
            && v <= self.upper + tol * (1.0 + self.upper.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub constraints: Vec<VoteConstraint>,
    pub k: usize,
    pub big_m: f64,
    pub dim: usize,
    pub reference_box: Vec<(f64, f64)>,
    /// Use per-row constants no larger than `big_m` in the program.
    #[serde(default)]
    pub tight_big_m: bool,
}

pub fn default_box(dim: usize) -> Vec<(f64, f64)> {
    vec![(-DEFAULT_BOX_HALF_WIDTH, DEFAULT_BOX_HALF_WIDTH); dim]
}

/// `1.1 · max_i (sup_box |θᵀx_i| + max(|A_i|, |B_i|))`.
pub fn big_m_for(constraints: &[VoteConstraint], reference_box: &[(f64, f64)]) -> f64 {
    let worst = constraints
        .iter()
        .map(|c| {
            let sup: f64 =
                c.x.iter()
                    .zip(reference_box)
                    .map(|(&xj, &(lo, hi))| (xj * lo).abs().max((xj * hi).abs()))
                    .sum();
            sup + c.lower.abs().max(c.upper.abs())
        })
        .fold(0.0, f64::max);
    BIG_M_SAFETY * worst.max(1.0)
}

impl RegionSpec {
    pub fn new(
        constraints: Vec<VoteConstraint>,
        k: usize,
        reference_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::InvalidData(
                "region needs at least one interval".into(),
            ));
        }
        let big_m = big_m_for(&constraints, &reference_box);
        let spec = Self {
            dim: reference_box.len(),
            constraints,
            k,
            big_m,
            reference_box,
            tight_big_m: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.constraints.len();
        if self.k > n {
            return Err(Error::InvalidParameter(format!(
                "k = {} exceeds n = {n}",
                self.k
            )));
        }
        if self.reference_box.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: self.reference_box.len(),
            });
        }
        for &(lo, hi) in &self.reference_box {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "reference box side [{lo}, {hi}]"
                )));
            }
        }
        for c in &self.constraints {
            if c.x.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: c.x.len(),
                });
            }
            if !(c.lower <= c.upper) {
                return Err(Error::InvalidData(format!(
                    "interval [{}, {}] is reversed",
                    c.lower, c.upper
                )));
            }
        }
        if !(self.big_m.is_finite() && self.big_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "big-M {} must be positive",
                self.big_m
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.constraints.len()
    }

    /// Same intervals, different threshold.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let mut s = self.clone();
        s.k = k;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// The big-M program with objective `objective` over `(θ, a)`.
    pub fn to_milp(&self, objective: Vec<f64>, sense: Sense) -> MilpProblem {
        let d = self.dim;
        let n = self.n();
        let mut rows = Vec::with_capacity(2 * n + 1);
        for (i, c) in self.constraints.iter().enumerate() {
            let (m_lo, m_hi) = if self.tight_big_m {
                self.row_big_m(c)
            } else {
                (self.big_m, self.big_m)
            };
            let mut lower = vec![0.0; d + n];
            lower[..d].copy_from_slice(&c.x);
            lower[d + i] = -m_lo;
            rows.push(LinearConstraint::new(lower, Relation::Ge, c.lower - m_lo));
            let mut upper = vec![0.0; d + n];
            upper[..d].copy_from_slice(&c.x);
            upper[d + i] = m_hi;
            rows.push(LinearConstraint::new(upper, Relation::Le, c.upper + m_hi));
        }
        if self.k > 0 {
            let mut count = vec![0.0; d + n];
            count[d..].fill(1.0);
            rows.push(LinearConstraint::new(count, Relation::Ge, self.k as f64));
        }
        MilpProblem {
            objective,
            sense,
            continuous_bounds: self.reference_box.clone(),
            n_binary: n,
            constraints: rows,
        }
    }

    /// Smallest constants that still switch off each side of row `c` over
    /// the box, capped at `big_m`.
    fn row_big_m(&self, c: &VoteConstraint) -> (f64, f64) {
        let (mut inf, mut sup) = (0.0, 0.0);
        for (&xj, &(lo, hi)) in c.x.iter().zip(&self.reference_box) {
            inf += (xj * lo).min(xj * hi);
            sup += (xj * lo).max(xj * hi);
        }
        let pad = |v: f64| (BIG_M_SAFETY * v.max(0.0)).min(self.big_m);
        (pad(c.lower - inf), pad(sup - c.upper))
    }

    /// LP text of the emptiness program (maximize `Σ a_i`).
    pub fn to_lp_text(&self) -> String {
        milp::write_lp(&self.to_milp(self.count_objective(), Sense::Maximize))
    }

    fn count_objective(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim + self.n()];
        c[self.dim..].fill(1.0);
        c
    }

    fn box_center(&self) -> Vec<f64> {
        self.reference_box
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn membership(&self, theta: &[f64]) -> Result<Membership> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: theta.len(),
            });
        }
        let votes = self
            .constraints
            .iter()
            .filter(|c| c.contains(theta))
            .count();
        Ok(Membership {
            member: votes >= self.k,
            votes,
        })
    }

    /// Recount a solver point; tolerant counting absorbs LP round-off.
    fn audit(&self, theta: &[f64], cfg: &SolverConfig) -> Result<usize> {
        let votes = self
            .constraints
            .iter()
            .filter(|c| c.contains_within(theta, cfg.feasibility_tol))
            .count();
        if votes < self.k {
            return Err(Error::BigMAudit { votes, k: self.k });
        }
        Ok(votes)
    }

    /// Re-solves on the active pattern with intervals shrunk by a hair so the
    /// witness is a member under exact closed-interval counting.
    fn polish_witness(&self, theta: &[f64], active: &[usize]) -> Vec<f64> {
        for shrink in [1e-9, 0.0] {
            let rows: Vec<LinearConstraint> = active
                .iter()
                .flat_map(|&i| {
                    let c = &self.constraints[i];
                    let eps = (shrink * (1.0 + c.lower.abs().max(c.upper.abs())))
                        .min(0.25 * (c.upper - c.lower));
                    [
                        LinearConstraint::new(c.x.clone(), Relation::Ge, c.lower + eps),
                        LinearConstraint::new(c.x.clone(), Relation::Le, c.upper - eps),
                    ]
                })
                .collect();
            let p = MilpProblem {
                objective: vec![0.0; self.dim],
                sense: Sense::Minimize,
                continuous_bounds: self.reference_box.clone(),
                n_binary: 0,
                constraints: rows,
            };
            if let Ok(sol) = milp::solve_lp(&p) {
                if sol.status == LpStatus::Optimal && self.count_exact(&sol.assignment) >= self.k {
                    return sol.assignment;
                }
            }
        }
        theta.to_vec()
    }

    fn count_exact(&self, theta: &[f64]) -> usize {
        self.constraints
            .iter()
            .filter(|c| c.contains(theta))
            .count()
    }

    /// Emptiness of `Θ_k` inside the reference box.
    pub fn is_empty(&self, cfg: &SolverConfig) -> Result<Emptiness> {
        self.validate()?;
        if self.k == 0 {
            let w = self.box_center();
            let votes = self.count_exact(&w);
            return Ok(Emptiness {
                status: EmptinessStatus::NonEmpty,
                witness: Some(w),
                votes,
                node_count: 0,
            });
        }
        let problem = self.to_milp(self.count_objective(), Sense::Maximize);
        let opts = SolveOptions {
            target: Some(self.k as f64),
        };
        let sol = match milp::solve_milp_with(&problem, cfg, opts) {
            Ok(s) => s,
            Err(Error::Indeterminate { nodes }) => return Ok(Emptiness::indeterminate(nodes)),
            Err(e) => return Err(e),
        };
        match (sol.status, sol.assignment) {
            (MilpStatus::Infeasible, _) => Ok(Emptiness {
                status: EmptinessStatus::Empty,
                witness: None,
                votes: 0,
                node_count: sol.node_count,
            }),
            (MilpStatus::Optimal, Some(x)) | (MilpStatus::NodeLimit, Some(x)) => {
                let theta = x[..self.dim].to_vec();
                self.audit(&theta, cfg)?;
                let active: Vec<usize> = (0..self.n()).filter(|&i| x[self.dim + i] > 0.5).collect();
                let witness = self.polish_witness(&theta, &active);
                let votes = self.count_exact(&witness);
                Ok(Emptiness {
                    status: EmptinessStatus::NonEmpty,
                    witness: Some(witness),
                    votes,
                    node_count: sol.node_count,
                })
            }
            _ => Ok(Emptiness::indeterminate(sol.node_count)),
        }
    }

    /// Optimizes `cᵀθ` over `Θ_k` inside the reference box.
    pub fn optimize(&self, c: &[f64], sense: Sense, cfg: &SolverConfig) -> Result<Optimum> {
        self.validate()?;
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: c.len(),
            });
        }
        if c.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidParameter(
                "objective must not be all zero".into(),
            ));
        }
        let mut objective = c.to_vec();
        objective.resize(self.dim + self.n(), 0.0);
        let problem = self.to_milp(objective, sense);
        let sol = milp::solve_milp_with(&problem, cfg, SolveOptions::default())?;
        match sol.status {
            MilpStatus::Infeasible => Ok(Optimum {
                status: OptimumStatus::Empty,
                value: None,
                theta: None,
                node_count: sol.node_count,
            }),
            MilpStatus::NodeLimit => Err(Error::Indeterminate {
                nodes: sol.node_count,
            }),
            MilpStatus::Optimal => {
                let x = sol
                    .assignment
                    .expect("optimal solution carries an assignment");
                let theta = x[..self.dim].to_vec();
                self.audit(&theta, cfg)?;
                let clamped =
                    theta
                        .iter()
                        .zip(&self.reference_box)
                        .zip(c)
                        .any(|((&t, &(lo, hi)), &cj)| {
                            let tol = cfg.feasibility_tol * (1.0 + lo.abs().max(hi.abs()));
                            cj != 0.0 && ((t - lo).abs() <= tol || (t - hi).abs() <= tol)
                        });
                Ok(Optimum {
                    status: if clamped {
                        OptimumStatus::BoxClamped
                    } else {
                        OptimumStatus::Optimal
                    },
                    value: sol.value,
                    theta: Some(theta),
                    node_count: sol.node_count,
                })
            }
        }
    }

    /// `[min θ_j, max θ_j]` over `Θ_k` for every coordinate; `None` if empty.
    pub fn coordinate_intervals(&self, cfg: &SolverConfig) -> Result<Option<CoordinateIntervals>> {
        let mut intervals = Vec::with_capacity(self.dim);
        let mut nodes = 0;
        for j in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[j] = 1.0;
            let lo = self.optimize(&e, Sense::Minimize, cfg)?;
            let hi = self.optimize(&e, Sense::Maximize, cfg)?;
            nodes += lo.node_count + hi.node_count;
            let (Some(lv), Some(hv)) = (lo.value, hi.value) else {
                return Ok(None);
            };
            intervals.push(CoordinateInterval {
                coordinate: j,
                lower: if lo.status == OptimumStatus::BoxClamped {
                    f64::NEG_INFINITY
                } else {
                    lv
                },
                upper: if hi.status == OptimumStatus::BoxClamped {
                    f64::INFINITY
                } else {
                    hv
                },
            });
        }
        Ok(Some(CoordinateIntervals {
            intervals,
            node_count: nodes,
        }))
    }
}

/// Region from conformal intervals at the threshold chosen by `selection`.
pub fn build_region(
    intervals: &[PredictionInterval],
    inputs: &UnlabelledDataset,
    selection: &KSelection,
    reference_box: Option<Vec<(f64, f64)>>,
) -> Result<RegionSpec> {
    if intervals.is_empty() {
        return Err(Error::InvalidData(
            "region needs at least one interval".into(),
        ));
    }
    if intervals.len() != inputs.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            found: intervals.len(),
        });
    }
    let constraints = intervals
        .iter()
        .zip(inputs.inputs())
        .map(|(iv, x)| VoteConstraint {
            x: x.clone(),
            lower: iv.lower,
            upper: iv.upper,
        })
        .collect();
    let reference_box = reference_box.unwrap_or_else(|| default_box(inputs.dim()));
    RegionSpec::new(constraints, selection.k, reference_box)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub votes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptinessStatus {
    Empty,
    NonEmpty,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emptiness {
    pub status: EmptinessStatus,
    pub witness: Option<Vec<f64>>,
    /// Exact closed-interval votes of the witness.
    pub votes: usize,
    pub node_count: usize,
}

impl Emptiness {
    fn indeterminate(nodes: usize) -> Self {
        Self {
            status: EmptinessStatus::Indeterminate,
            witness: None,
            votes: 0,
            node_count: nodes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumStatus {
    Optimal,
    Empty,
    /// The optimizer stopped on the reference box.
    BoxClamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub status: OptimumStatus,
    pub value: Option<f64>,
    pub theta: Option<Vec<f64>>,
    pub node_count: usize,
}

/// Infinite ends mark coordinates where the region reached the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateInterval {
    pub coordinate: usize,
    pub lower: f64,
    pub upper: f64,
}

impl CoordinateInterval {
    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

impl fmt::Display for CoordinateInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "theta[{}] in [{}, {}]",
            self.coordinate, self.lower, self.upper
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateIntervals {
    pub intervals: Vec<CoordinateInterval>,
    pub node_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(bounds: &[(f64, f64)], k: usize) -> RegionSpec {
        let cs = bounds
            .iter()
            .map(|&(lower, upper)| VoteConstraint {
                x: vec![1.0],
                lower,
                upper,
            })
            .collect();
        RegionSpec::new(cs, k, vec![(-10.0, 10.0)]).unwrap()
    }

    #[test]
    fn big_m_formula() {
        let r = one_d(&[(2.0, 4.0)], 1);
        assert!((r.big_m - 15.4).abs() < 1e-12);
    }

    #[test]
    fn closed_membership() {
        let r = one_d(&[(2.0, 4.0), (3.0, 5.0)], 2);
        assert_eq!(
            r.membership(&[4.0]).unwrap(),
            Membership {
                member: true,
                votes: 2
            }
        );
        assert_eq!(r.membership(&[4.5]).unwrap().votes, 1);
        assert!(r.membership(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn disjoint_intervals() {
        let cfg = SolverConfig::default();
        let r = one_d(&[(-10.0, 1.0), (2.0, 10.0)], 2);
        assert_eq!(r.is_empty(&cfg).unwrap().status, EmptinessStatus::Empty);
        let e = r.with_k(1).unwrap().is_empty(&cfg).unwrap();
        assert_eq!(e.status, EmptinessStatus::NonEmpty);
        assert!(
            r.with_k(1)
                .unwrap()
                .membership(e.witness.as_ref().unwrap())
                .unwrap()
                .member
        );
        assert_eq!(
            r.with_k(0).unwrap().is_empty(&cfg).unwrap().status,
            EmptinessStatus::NonEmpty
        );
    }

    #[test]
    fn one_d_optimize() {
        let cfg = SolverConfig::default();
        let r = one_d(&[(2.0, 4.0)], 1);
        let lo = r.optimize(&[1.0], Sense::Minimize, &cfg).unwrap();
        let hi = r.optimize(&[1.0], Sense::Maximize, &cfg).unwrap();
        assert!((lo.value.unwrap() - 2.0).abs() < 1e-9);
        assert!((hi.value.unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(hi.status, OptimumStatus::Optimal);
        let free = r
            .with_k(0)
            .unwrap()
            .optimize(&[1.0], Sense::Maximize, &cfg)
            .unwrap();
        assert_eq!(free.status, OptimumStatus::BoxClamped);
    }

    #[test]
    fn unbounded_direction_is_clamped() {
        // A single vote in 2-D is a slab.
        let r = RegionSpec::new(
            vec![VoteConstraint {
                x: vec![1.0, 1.0],
                lower: 0.0,
                upper: 1.0,
            }],
            1,
            default_box(2),
        )
        .unwrap();
        let ci = r
            .coordinate_intervals(&SolverConfig::default())
            .unwrap()
            .unwrap();
        assert!(ci.intervals.iter().all(|c| !c.is_finite()));
    }

    #[test]
    fn json_round_trip() {
        let r = one_d(&[(0.1, 0.7), (1.0 / 3.0, 2.0 / 3.0)], 1);
        assert_eq!(RegionSpec::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert!(milp::read_lp(&r.to_lp_text()).is_ok());
    }

    #[test]
    fn rejects_bad_k() {
        assert!(RegionSpec::new(
            vec![VoteConstraint {
                x: vec![1.0],
                lower: 0.0,
                upper: 1.0
            }],
            2,
            default_box(1)
        )
        .is_err());
    }
}
