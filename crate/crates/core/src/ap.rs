//! Assignment-problem value types: cost matrices, solutions with dual potentials,
//! reduced costs and the LP-duality optimality certificate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for a single reduced-cost comparison.
pub const TOL: f64 = 1e-9;

/// Dense `n x n` cost matrix. Absent pairs hold `f64::INFINITY`, never a finite surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// A matrix with every pair absent.
    pub fn absent(n: usize) -> Self {
        CostMatrix {
            n,
            data: vec![f64::INFINITY; n * n],
        }
    }

    /// Builds a matrix from rows; `f64::INFINITY` marks a missing pair.
    ///
    /// Panics on a non-square input or a NaN / negative entry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = CostMatrix::absent(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "cost matrix must be square");
            for (j, &c) in row.iter().enumerate() {
                m.set(i, j, c);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, cost: f64) {
        assert!(
            cost >= 0.0,
            "costs must be nonnegative (or +inf), got {cost}"
        );
        self.data[i * self.n + j] = cost;
    }

    #[inline]
    pub fn is_arc(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_finite()
    }

    /// Finite entries of row `i` in column order.
    pub fn row_arcs(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.data[i * self.n..(i + 1) * self.n]
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_finite())
            .map(|(j, &c)| (j, c))
    }

    /// All finite entries in row-major order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row_arcs(i).map(move |(j, c)| (i, j, c)))
    }

    /// The square sub-matrix on the given rows and columns (in the given order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CostMatrix {
        assert_eq!(rows.len(), cols.len());
        let k = rows.len();
        let mut m = CostMatrix::absent(k);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m.data[a * k + b] = self.get(i, j);
            }
        }
        m
    }
}

/// A perfect matching with row duals `u` and column duals `v`.
///
/// `sigma[i] = j` means pair `(i, j)` is matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSolution {
    pub sigma: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
}

impl ApSolution {
    pub fn dual_objective(&self) -> f64 {
        self.u.iter().sum::<f64>() + self.v.iter().sum::<f64>()
    }

    /// Shifts every `u_i` down and every `v_j` up by `lambda`; reduced costs are unchanged.
    pub fn translated(&self, lambda: f64) -> ApSolution {
        ApSolution {
            sigma: self.sigma.clone(),
            u: self.u.iter().map(|x| x - lambda).collect(),
            v: self.v.iter().map(|x| x + lambda).collect(),
            value: self.value,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("solution serializes")
    }
}

/// `C(i, j) - u_i - v_j`, or `+inf` for an absent pair.
#[inline]
pub fn reduced_cost(costs: &CostMatrix, u: &[f64], v: &[f64], i: usize, j: usize) -> f64 {
    let c = costs.get(i, j);
    if c.is_finite() {
        c - u[i] - v[j]
    } else {
        f64::INFINITY
    }
}

/// `sum_i C(i, sigma(i))`; `+inf` if any matched pair is absent.
pub fn matching_value(costs: &CostMatrix, sigma: &[usize]) -> f64 {
    sigma
        .iter()
        .enumerate()
        .map(|(i, &j)| costs.get(i, j))
        .sum()
}

/// Proof that a solution is optimal: primal value equals the dual objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub value: f64,
    pub dual_objective: f64,
    pub min_reduced_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("sigma is not a permutation of 0..{n}: {detail}")]
    NotPermutation { n: usize, detail: String },
    #[error("matched pair ({row}, {col}) is not an arc")]
    MatchedNonArc { row: usize, col: usize },
    #[error("recorded value {recorded} differs from matched cost {recomputed}")]
    ValueMismatch { recorded: f64, recomputed: f64 },
    #[error("(a) dual infeasible at ({row}, {col}): reduced cost {reduced}")]
    DualInfeasible { row: usize, col: usize, reduced: f64 },
    #[error("(b) matched pair ({row}, {col}) not tight: reduced cost {reduced}")]
    NotTight { row: usize, col: usize, reduced: f64 },
    #[error("(c) duality gap: value {value} vs dual objective {dual}")]
    DualityGap { value: f64, dual: f64 },
}

fn check_structure(costs: &CostMatrix, sol: &ApSolution) -> Result<(), Violation> {
    let n = costs.n();
    let fail = |detail: String| Violation::NotPermutation { n, detail };
    if sol.sigma.len() != n || sol.u.len() != n || sol.v.len() != n {
        return Err(fail(format!(
            "lengths sigma={} u={} v={}",
            sol.sigma.len(),
            sol.u.len(),
            sol.v.len()
        )));
    }
    let mut seen = vec![false; n];
    for (i, &j) in sol.sigma.iter().enumerate() {
        if j >= n || seen[j] {
            return Err(fail(format!("row {i} maps to {j}")));
        }
        seen[j] = true;
        if !costs.is_arc(i, j) {
            return Err(Violation::MatchedNonArc { row: i, col: j });
        }
    }
    let recomputed = matching_value(costs, &sol.sigma);
    if (recomputed - sol.value).abs() > TOL * n.max(1) as f64 {
        return Err(Violation::ValueMismatch {
            recorded: sol.value,
            recomputed,
        });
    }
    Ok(())
}

/// Checks the complementary-slackness certificate.
///
/// Non-matched arcs are scanned for dual feasibility first (row-major), then matched
/// arcs for feasibility and tightness, then the aggregate gap.
pub fn verify_optimal(costs: &CostMatrix, sol: &ApSolution) -> Result<Certificate, Violation> {
    check_structure(costs, sol)?;
    let n = costs.n();
    let mut min_reduced = f64::INFINITY;
    for (i, j, _) in costs.arcs() {
        if sol.sigma[i] == j {
            continue;
        }
        let r = reduced_cost(costs, &sol.u, &sol.v, i, j);
        min_reduced = min_reduced.min(r);
        if r < -TOL {
            return Err(Violation::DualInfeasible {
                row: i,
                col: j,
                reduced: r,
            });
        }
    }
    for (i, &j) in sol.sigma.iter().enumerate() {
        let r = reduced_cost(costs, &sol.u, &sol.v, i, j);
        min_reduced = min_reduced.min(r);
        if r < -TOL {
            return Err(Violation::DualInfeasible {
                row: i,
                col: j,
                reduced: r,
            });
        }
        if r > TOL {
            return Err(Violation::NotTight {
                row: i,
                col: j,
                reduced: r,
            });
        }
    }
    let dual = sol.dual_objective();
    if (sol.value - dual).abs() > TOL * n.max(1) as f64 {
        return Err(Violation::DualityGap {
            value: sol.value,
            dual,
        });
    }
    Ok(Certificate {
        value: sol.value,
        dual_objective: dual,
        min_reduced_cost: min_reduced,
    })
}
