//! Cycle covers and Karp's patching heuristic.
//!
//! A permutation `sigma` is read as the arc set `{ i -> sigma(i) }`, i.e. a collection of
//! vertex-disjoint directed cycles. A patch takes arcs `e = (x, y)` and `f = (u, v)` from
//! two different cycles and replaces them with `e' = (u, y)` and `f' = (x, v)`, merging
//! the two cycles into one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ap::{matching_value, TOL};
use crate::instance::{self, Instance, Origin};

/// Number of cycles of a permutation.
pub fn cycle_count(sigma: &[usize]) -> usize {
    let mut seen = vec![false; sigma.len()];
    let mut count = 0;
    for start in 0..sigma.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut v = start;
        while !seen[v] {
            seen[v] = true;
            v = sigma[v];
        }
    }
    count
}

/// The cycles of a permutation, shortest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleCover {
    sigma: Vec<usize>,
    cycles: Vec<Vec<usize>>,
    cycle_of: Vec<usize>,
}

/// Splits a permutation into its cycles. Each cycle starts at its smallest vertex; cycles
/// are sorted by length, then by that vertex.
///
/// Panics if `sigma` is not a permutation.
pub fn decompose(sigma: &[usize]) -> CycleCover {
    let n = sigma.len();
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = start;
        while !seen[v] {
            seen[v] = true;
            cycle.push(v);
            v = sigma[v];
            assert!(v < n, "sigma maps outside 0..{n}");
        }
        assert_eq!(v, start, "sigma is not a permutation");
        cycles.push(cycle);
    }
    cycles.sort_by_key(|c| (c.len(), c[0]));
    let mut cycle_of = vec![0; n];
    for (k, c) in cycles.iter().enumerate() {
        for &v in c {
            cycle_of[v] = k;
        }
    }
    CycleCover {
        sigma: sigma.to_vec(),
        cycles,
        cycle_of,
    }
}

impl CycleCover {
    pub fn cycles(&self) -> &[Vec<usize>] {
        &self.cycles
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    /// Number of cycles.
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.cycles.iter().map(Vec::len).collect()
    }

    pub fn cycle_of(&self, v: usize) -> usize {
        self.cycle_of[v]
    }

    /// Sum of the arc costs.
    pub fn cost(&self, inst: &Instance) -> f64 {
        matching_value(inst.costs(), &self.sigma)
    }
}

/// `sum_{i<j} k_i k_j = (n^2 - sum k_i^2) / 2`: edge pairs drawn from two different cycles.
pub fn count_patching_pairs(cover: &CycleCover) -> u64 {
    let n = cover.n() as u64;
    let squares: u64 = cover.cycles.iter().map(|c| (c.len() as u64).pow(2)).sum();
    (n * n - squares) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchPolicy {
    /// Cheapest net change over every patching pair.
    GlobalMin,
    /// Only random arcs below the `R_l` cost threshold may be inserted, and the choice
    /// minimises their inserted cost alone, ignoring the removed arcs.
    #[serde(rename = "analysis_R", alias = "analysis_r")]
    AnalysisR,
}

impl PatchPolicy {
    pub const ALL: &'static [PatchPolicy] = &[PatchPolicy::GlobalMin, PatchPolicy::AnalysisR];

    pub fn as_str(self) -> &'static str {
        match self {
            PatchPolicy::GlobalMin => "global_min",
            PatchPolicy::AnalysisR => "analysis_R",
        }
    }
}

impl std::fmt::Display for PatchPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PatchPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "global_min" => Ok(PatchPolicy::GlobalMin),
            "analysis_R" | "analysis_r" => Ok(PatchPolicy::AnalysisR),
            other => Err(format!(
                "unknown policy '{other}' (expected global_min or analysis_R)"
            )),
        }
    }
}

/// Removes `e = (x, y)`, `f = (u, v)`; inserts `e' = (u, y)`, `f' = (x, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchMove {
    pub x: usize,
    pub y: usize,
    pub u: usize,
    pub v: usize,
    /// `C(u,y) + C(x,v) - C(x,y) - C(u,v)`.
    pub delta: f64,
    /// `C(u,y) + C(x,v)`.
    pub inserted_cost: f64,
}

impl PatchMove {
    pub fn new(inst: &Instance, x: usize, y: usize, u: usize, v: usize) -> PatchMove {
        let inserted_cost = inst.cost(u, y) + inst.cost(x, v);
        PatchMove {
            x,
            y,
            u,
            v,
            delta: inserted_cost - inst.cost(x, y) - inst.cost(u, v),
            inserted_cost,
        }
    }

    /// Applies the move to a permutation.
    pub fn apply(&self, sigma: &mut [usize]) {
        debug_assert_eq!(sigma[self.x], self.y);
        debug_assert_eq!(sigma[self.u], self.v);
        sigma[self.x] = self.v;
        sigma[self.u] = self.y;
    }
}

/// Cost cap for inserted arcs under [`PatchPolicy::AnalysisR`] with `cycles` cycles:
/// `gamma_n + (cycles * n^(1 - 5 eps / 2))^(-1/2)`.
pub fn analysis_threshold(n: usize, eps: f64, cycles: usize) -> f64 {
    let nf = n as f64;
    instance::gamma(nf, eps) + (cycles as f64 * nf.powf(1.0 - 2.5 * eps)).powf(-0.5)
}

/// The best patching pair under `policy`, or `None` when no pair has both inserted arcs
/// available. Candidates are scanned as `(x, u)` with `x < u`, so ties resolve to the
/// lexicographically smallest `(x, u)`.
pub fn best_patch(inst: &Instance, cover: &CycleCover, policy: PatchPolicy) -> Option<PatchMove> {
    let n = cover.n();
    let sigma = &cover.sigma;
    let cap = match policy {
        PatchPolicy::GlobalMin => f64::INFINITY,
        PatchPolicy::AnalysisR => analysis_threshold(n, inst.config().eps, cover.len()),
    };
    let allowed = |i: usize, j: usize| -> Option<f64> {
        let c = inst.cost(i, j);
        match policy {
            PatchPolicy::GlobalMin => c.is_finite().then_some(c),
            PatchPolicy::AnalysisR => {
                (inst.origin(i, j) == Some(Origin::Random) && c <= cap).then_some(c)
            }
        }
    };
    let mut best: Option<(f64, PatchMove)> = None;
    for x in 0..n {
        let y = sigma[x];
        for u in (x + 1)..n {
            if cover.cycle_of[u] == cover.cycle_of[x] {
                continue;
            }
            let v = sigma[u];
            let Some(c_uy) = allowed(u, y) else { continue };
            let Some(c_xv) = allowed(x, v) else { continue };
            let score = match policy {
                PatchPolicy::GlobalMin => c_uy + c_xv - inst.cost(x, y) - inst.cost(u, v),
                PatchPolicy::AnalysisR => c_uy + c_xv,
            };
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, PatchMove::new(inst, x, y, u, v)));
            }
        }
    }
    best.map(|(_, m)| m)
}

/// One applied patch and the cover it was applied to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchStep {
    #[serde(flatten)]
    pub patch: PatchMove,
    pub cycles_before: usize,
    pub pairs_before: u64,
}

/// A Hamiltonian cycle, listed from vertex 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patched {
    pub tour: Tour,
    pub log: Vec<PatchStep>,
    /// Cost of the starting cover.
    pub cover_cost: f64,
    /// Sum of logged deltas.
    pub added_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no patching pair among {} remaining cycles after {} patches", remaining.len(), log.len())]
pub struct PatchFailure {
    pub remaining: CycleCover,
    pub log: Vec<PatchStep>,
    pub added_cost: f64,
}

/// Patches cycles together until one remains.
///
/// After every move the permutation is re-decomposed and checked to have exactly one
/// fewer cycle and a cost that moved by exactly the move's delta.
pub fn karp_patch(
    inst: &Instance,
    cover: &CycleCover,
    policy: PatchPolicy,
) -> Result<Patched, PatchFailure> {
    let n = cover.n();
    assert!(
        n < 2 || cover.cycles.iter().all(|c| c.len() >= 2),
        "cover has a fixed point"
    );
    let tol = TOL * n.max(1) as f64;
    let cover_cost = cover.cost(inst);
    let mut current = cover.clone();
    let mut cost = cover_cost;
    let mut added = 0.0;
    let mut log = Vec::new();
    while current.len() > 1 {
        let Some(mv) = best_patch(inst, &current, policy) else {
            return Err(PatchFailure {
                remaining: current,
                log,
                added_cost: added,
            });
        };
        let step = PatchStep {
            patch: mv,
            cycles_before: current.len(),
            pairs_before: count_patching_pairs(&current),
        };
        let mut sigma = current.sigma.clone();
        mv.apply(&mut sigma);
        let next = decompose(&sigma);
        assert_eq!(next.len() + 1, current.len(), "patch did not merge two cycles");
        let next_cost = next.cost(inst);
        assert!(
            (next_cost - (cost + mv.delta)).abs() <= tol,
            "patch changed cost by {} but delta is {}",
            next_cost - cost,
            mv.delta
        );
        cost = next_cost;
        added += mv.delta;
        log.push(step);
        current = next;
    }
    let mut order = Vec::with_capacity(n);
    if n > 0 {
        let mut v = 0;
        loop {
            order.push(v);
            v = current.sigma[v];
            if v == 0 {
                break;
            }
        }
    }
    Ok(Patched {
        tour: Tour { order, cost },
        log,
        cover_cost,
        added_cost: added,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{CostDist, Family, InstanceConfig};

    fn config(n: usize) -> InstanceConfig {
        InstanceConfig {
            n,
            alpha: 0.5,
            eps: 0.1,
            family: Family::Complete,
            cost_dist: CostDist::Exp1,
        }
    }

    fn complete(rows: &[Vec<f64>]) -> Instance {
        let n = rows.len();
        let arcs: Vec<_> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, rows[i][j], Origin::Base))
            .collect();
        Instance::from_arcs(config(n), 0, &arcs).unwrap()
    }

    #[test]
    fn decompose_examples() {
        let n = 7;
        let shift: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        let c = decompose(&shift);
        assert_eq!(c.len(), 1);
        assert_eq!(c.cycles()[0], shift.iter().scan(0, |s, _| {
            let v = *s;
            *s = shift[v];
            Some(v)
        }).collect::<Vec<_>>());
        let pairs: Vec<usize> = (0..8).map(|i| i ^ 1).collect();
        let c = decompose(&pairs);
        assert_eq!(c.lengths(), vec![2; 4]);
        assert_eq!(cycle_count(&pairs), 4);
    }

    #[test]
    fn cycles_sorted_by_length() {
        let sigma = vec![1, 2, 0, 4, 3, 6, 7, 8, 5];
        let c = decompose(&sigma);
        assert_eq!(c.lengths(), vec![2, 3, 4]);
        assert_eq!(c.cycles()[0], vec![3, 4]);
        assert_eq!(c.cycle_of(5), 2);
    }

    #[test]
    fn pair_counts() {
        // lengths 3 and 4
        let c = decompose(&[1, 2, 0, 4, 5, 6, 3]);
        assert_eq!(count_patching_pairs(&c), 12);
        let one = decompose(&[1, 2, 0]);
        assert_eq!(count_patching_pairs(&one), 0);
        // lengths (2, 2, 96)
        let mut sigma: Vec<usize> = vec![1, 0, 3, 2];
        sigma.extend((4..100).map(|i| if i == 99 { 4 } else { i + 1 }));
        let c = decompose(&sigma);
        assert_eq!(c.lengths(), vec![2, 2, 96]);
        assert_eq!(count_patching_pairs(&c), 388);
        assert!(count_patching_pairs(&c) >= (c.len() * c.n() / 2) as u64);
    }

    #[test]
    fn hand_patch_on_two_two_cycles() {
        // cycles (0 -> 1 -> 0) and (2 -> 3 -> 2)
        let inf = f64::INFINITY;
        let rows = vec![
            vec![inf, 1.0, 5.0, 2.0],
            vec![1.0, inf, 7.0, 4.0],
            vec![3.0, 6.0, inf, 1.0],
            vec![8.0, 0.5, 1.0, inf],
        ];
        let inst = complete(&rows);
        let cover = decompose(&[1, 0, 3, 2]);
        // candidates (x, u): e = (x, sigma x), f = (u, sigma u)
        //   (0,2): C(2,1)+C(0,3)-C(0,1)-C(2,3) = 6+2-1-1 = 6
        //   (0,3): C(3,1)+C(0,2)-C(0,1)-C(3,2) = 0.5+5-1-1 = 3.5
        //   (1,2): C(2,0)+C(1,3)-C(1,0)-C(2,3) = 3+4-1-1 = 5
        //   (1,3): C(3,0)+C(1,2)-C(1,0)-C(3,2) = 8+7-1-1 = 13
        let m = best_patch(&inst, &cover, PatchPolicy::GlobalMin).unwrap();
        assert_eq!((m.x, m.y, m.u, m.v), (0, 1, 3, 2));
        assert_eq!(m.delta, 3.5);
        assert_eq!(m.delta, rows[3][1] + rows[0][2] - rows[0][1] - rows[3][2]);
        let out = karp_patch(&inst, &cover, PatchPolicy::GlobalMin).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.tour.cost, cover.cost(&inst) + 3.5);
        assert_eq!(out.tour.order, vec![0, 2, 3, 1]);
    }

    #[test]
    fn single_cycle_needs_no_patch() {
        let inst = complete(&vec![vec![1.0; 3]; 3]);
        let cover = decompose(&[1, 2, 0]);
        let out = karp_patch(&inst, &cover, PatchPolicy::GlobalMin).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.tour.order, vec![0, 1, 2]);
        assert_eq!(out.tour.cost, 3.0);
    }

    #[test]
    fn no_patch_when_cross_arcs_missing() {
        let arcs = [
            (0, 1, 1.0, Origin::Base),
            (1, 0, 1.0, Origin::Base),
            (2, 3, 1.0, Origin::Base),
            (3, 2, 1.0, Origin::Base),
            (0, 2, 1.0, Origin::Base),
        ];
        let inst = Instance::from_arcs(config(4), 0, &arcs).unwrap();
        let cover = decompose(&[1, 0, 3, 2]);
        assert_eq!(best_patch(&inst, &cover, PatchPolicy::GlobalMin), None);
        let err = karp_patch(&inst, &cover, PatchPolicy::GlobalMin).unwrap_err();
        assert_eq!(err.remaining.len(), 2);
    }

    #[test]
    fn analysis_policy_needs_cheap_random_arcs() {
        let inf = f64::INFINITY;
        let n = 4;
        let cap = analysis_threshold(n, 0.1, 2);
        let mut arcs = vec![
            (0, 1, 1.0, Origin::Base),
            (1, 0, 1.0, Origin::Base),
            (2, 3, 1.0, Origin::Base),
            (3, 2, 1.0, Origin::Base),
        ];
        // cheapest net change uses base arcs; the analysis policy may not
        arcs.push((3, 1, 0.0, Origin::Base));
        arcs.push((0, 2, 0.0, Origin::Base));
        arcs.push((2, 0, cap / 4.0, Origin::Random));
        arcs.push((1, 3, cap / 4.0, Origin::Random));
        let inst = Instance::from_arcs(config(n), 0, &arcs).unwrap();
        let cover = decompose(&[1, 0, 3, 2]);
        let g = best_patch(&inst, &cover, PatchPolicy::GlobalMin).unwrap();
        assert_eq!((g.x, g.u), (0, 3));
        let a = best_patch(&inst, &cover, PatchPolicy::AnalysisR).unwrap();
        assert_eq!((a.x, a.u), (1, 2));
        assert_eq!(a.inserted_cost, cap / 2.0);
        assert!(a.delta > g.delta);
        let _ = inf;
    }

    #[test]
    fn policy_names() {
        for p in PatchPolicy::ALL {
            assert_eq!(p.as_str().parse::<PatchPolicy>().unwrap(), *p);
        }
        assert_eq!(
            serde_json::to_string(&PatchPolicy::AnalysisR).unwrap(),
            "\"analysis_R\""
        );
    }
}
