//! Incremental assignment solver.
//!
//! Rows and columns are inserted in pairs `(a_{r+1}, b_{r+1})`. Each insertion extends the
//! dual potentials to the new row and column so that every reduced cost
//! `C(i,j) - u_i - v_j` on the enlarged prefix is nonnegative, runs Dijkstra from
//! `a_{r+1}` over the digraph on rows obtained by contracting each matched pair, and
//! augments along the shortest alternating path to `b_{r+1}`. Afterwards the potentials
//! are shifted by the clipped distances, which keeps the prefix matching optimal with
//! complementary-slack duals.
//!
//! While augmenting, the solver counts "virgin" short cycles: a matched arc `x -> y` that
//! closes a directed cycle of at most `l1` arcs, counted only the first time row `x`
//! closes such a cycle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::ap::{reduced_cost, verify_optimal, ApSolution, Certificate, CostMatrix, Violation, TOL};
use crate::patching::cycle_count;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(
        "no augmenting path from row {row} to column {col} at prefix size {r} \
         ({} rows reachable)", reachable.len()
    )]
    Infeasible {
        r: usize,
        row: usize,
        col: usize,
        reachable: Vec<usize>,
    },
    #[error("insertion order is not a pair of permutations of 0..{0}")]
    BadOrder(usize),
    #[error("audit failed at prefix size {r}: {violation}")]
    Audit { r: usize, violation: Violation },
}

/// How much of the dual-feasibility invariant to re-check while solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audit {
    Off,
    /// New row and column on every step, the whole prefix every `ceil(n/10)` steps.
    Sampled,
    /// The whole prefix on every step.
    Full,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// `(rows, cols)` insertion order; identity when `None`.
    pub order: Option<(Vec<usize>, Vec<usize>)>,
    /// When the next column cannot be reached, swap in the first later column that can.
    /// Without this, an infeasible prefix aborts the solve.
    pub pivot_columns: bool,
    /// Short-cycle length threshold; capped at `n`.
    pub l1: usize,
    pub audit: Audit,
    pub keep_events: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            order: None,
            pivot_columns: true,
            l1: usize::MAX,
            audit: Audit::Sampled,
            keep_events: true,
        }
    }
}

/// One augmentation `M_r -> M_{r+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentEvent {
    pub r: usize,
    pub row: usize,
    pub col: usize,
    /// Alternating path `x_1 = row, y_1, x_2, ..., x_s, y_s = col`.
    pub path: Vec<usize>,
    /// Reduced length of the path, i.e. the settled distance of `col`.
    pub path_reduced_cost: f64,
    /// `(u_{r+1}, v_{r+1})` as extended before the search.
    pub new_duals: (f64, f64),
    /// Added minus removed matched cost.
    pub cost_increase: f64,
    pub rows_settled: usize,
    pub short_cycles_created: usize,
    /// The column originally scheduled at this position was unreachable and swapped out.
    pub pivoted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub events: Vec<AugmentEvent>,
    pub final_cycle_count: usize,
    pub max_matched_cost: f64,
    pub short_cycle_total: usize,
    pub pivots: usize,
    /// Rows and columns in the order they were inserted (after pivoting).
    pub row_order: Vec<usize>,
    pub col_order: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub solution: ApSolution,
    pub diagnostics: SolverDiagnostics,
}

/// Result of one contracted Dijkstra run.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPath {
    /// Rows in settlement order with their distances (nondecreasing).
    pub settled: Vec<(usize, f64)>,
    /// Distance of the target column.
    pub target_dist: f64,
    /// `x_1 .. x_s`.
    pub rows: Vec<usize>,
    /// `y_1 .. y_s`.
    pub cols: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    d: f64,
    // 0 is the target column, v + 1 is row v; ties go to the target, then to lower rows
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .d
            .total_cmp(&self.d)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Matching and duals on the prefix `A_r x B_r`.
#[derive(Debug, Clone)]
pub struct PartialState<'a> {
    costs: &'a CostMatrix,
    adj: Vec<Vec<(usize, f64)>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    r: usize,
    row_mate: Vec<usize>,
    col_mate: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
    in_rows: Vec<bool>,
    in_cols: Vec<bool>,
    spent: Vec<bool>,
    l1: usize,
    value: f64,
    pivots: usize,
    // Dijkstra scratch, reset through `touched`
    dist: Vec<f64>,
    parent: Vec<usize>,
    settled: Vec<bool>,
    touched: Vec<usize>,
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    p.len() == n && p.iter().all(|&x| x < n && !std::mem::replace(&mut seen[x], true))
}

impl<'a> PartialState<'a> {
    pub fn new(costs: &'a CostMatrix, opts: &SolverOptions) -> Result<Self, SolveError> {
        let n = costs.n();
        let (rows, cols) = match &opts.order {
            Some((r, c)) => {
                if !is_permutation(r, n) || !is_permutation(c, n) {
                    return Err(SolveError::BadOrder(n));
                }
                (r.clone(), c.clone())
            }
            None => ((0..n).collect(), (0..n).collect()),
        };
        Ok(PartialState {
            costs,
            adj: (0..n).map(|i| costs.row_arcs(i).collect()).collect(),
            rows,
            cols,
            r: 0,
            row_mate: vec![NONE; n],
            col_mate: vec![NONE; n],
            u: vec![0.0; n],
            v: vec![0.0; n],
            in_rows: vec![false; n],
            in_cols: vec![false; n],
            spent: vec![false; n],
            l1: opts.l1.min(n),
            value: 0.0,
            pivots: 0,
            dist: vec![f64::INFINITY; n],
            parent: vec![NONE; n],
            settled: vec![false; n],
            touched: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.costs.n()
    }

    /// Current prefix size.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn is_complete(&self) -> bool {
        self.r == self.n()
    }

    /// The row and column scheduled for the next insertion.
    pub fn next_pair(&self) -> Option<(usize, usize)> {
        (self.r < self.n()).then(|| (self.rows[self.r], self.cols[self.r]))
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Dual values for the pair `(a_{r+1}, b_{r+1})`:
    /// `u = min_j C(a, j) - v_j` over prefix columns, then
    /// `v = min(C(a, b) - u, min_i C(i, b) - u_i)` over prefix rows.
    ///
    /// When row `a` has no arc into the prefix, its only possible partner is `b`; then `v`
    /// is the column minimum (or 0) and `u = C(a, b) - v`. Returns `None` when the
    /// defining sets leave a value undetermined.
    pub fn extend_duals(&self) -> Option<(f64, f64)> {
        let (a, b) = self.next_pair()?;
        let row_min = self.adj[a]
            .iter()
            .filter(|&&(j, _)| self.in_cols[j])
            .map(|&(j, c)| (c - self.v[j], j))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
            .map(|(m, _)| m);
        let col_min = (0..self.n())
            .filter(|&i| self.in_rows[i])
            .map(|i| self.costs.get(i, b) - self.u[i])
            .filter(|x| x.is_finite())
            .min_by(|x, y| x.total_cmp(y));
        let direct = self.costs.get(a, b);
        match row_min {
            Some(ua) => {
                let vb = match col_min {
                    Some(m) => m.min(direct - ua),
                    None => direct - ua,
                };
                vb.is_finite().then_some((ua, vb))
            }
            None => {
                if !direct.is_finite() {
                    return None;
                }
                let vb = col_min.unwrap_or(0.0);
                Some((direct - vb, vb))
            }
        }
    }

    fn reset_scratch(&mut self) {
        for &x in &self.touched {
            self.dist[x] = f64::INFINITY;
            self.parent[x] = NONE;
            self.settled[x] = false;
        }
        self.touched.clear();
    }

    /// Dijkstra from `a_{r+1}` on the contracted digraph with vertex set `A_{r+1}`.
    ///
    /// Arc `x -> y` exists when `(x, mate(y))` is an arc, with weight `C^(x, mate(y))`;
    /// the target `b_{r+1}` is reached from `x` with weight `C^(x, b_{r+1})`. Stops as soon
    /// as the target is settled. On failure, returns every reachable row.
    pub fn dijkstra_contracted(&mut self, ua: f64, vb: f64) -> Result<ShortestPath, Vec<usize>> {
        let (a, b) = self.next_pair().expect("state is complete");
        self.reset_scratch();
        let mut heap = BinaryHeap::new();
        self.dist[a] = 0.0;
        self.touched.push(a);
        heap.push(HeapItem { d: 0.0, node: a + 1 });
        let mut target = f64::INFINITY;
        let mut target_parent = NONE;
        let mut order = Vec::new();
        let mut found = false;

        while let Some(HeapItem { d, node }) = heap.pop() {
            if node == 0 {
                found = true;
                break;
            }
            let x = node - 1;
            if self.settled[x] || d > self.dist[x] {
                continue;
            }
            self.settled[x] = true;
            order.push((x, d));
            let ux = if x == a { ua } else { self.u[x] };
            for &(c, cost) in &self.adj[x] {
                if c == b {
                    let nd = d + (cost - ux - vb).max(0.0);
                    if nd < target {
                        target = nd;
                        target_parent = x;
                        heap.push(HeapItem { d: nd, node: 0 });
                    }
                } else if self.in_cols[c] {
                    let y = self.col_mate[c];
                    if self.settled[y] {
                        continue;
                    }
                    let nd = d + (cost - ux - self.v[c]).max(0.0);
                    if nd < self.dist[y] {
                        if self.dist[y] == f64::INFINITY {
                            self.touched.push(y);
                        }
                        self.dist[y] = nd;
                        self.parent[y] = x;
                        heap.push(HeapItem { d: nd, node: y + 1 });
                    }
                }
            }
        }

        if !found {
            let mut reach: Vec<usize> = order.iter().map(|&(x, _)| x).collect();
            reach.sort_unstable();
            return Err(reach);
        }

        let mut rows = vec![target_parent];
        let mut x = target_parent;
        while x != a {
            x = self.parent[x];
            rows.push(x);
        }
        rows.reverse();
        let mut cols: Vec<usize> = rows[1..].iter().map(|&x| self.row_mate[x]).collect();
        cols.push(b);
        Ok(ShortestPath {
            settled: order,
            target_dist: target,
            rows,
            cols,
        })
    }

    /// Every row reachable from `a_{r+1}` by alternating paths, ignoring costs.
    fn reachable_rows(&self) -> Vec<usize> {
        let (a, _) = self.next_pair().expect("state is complete");
        let mut seen = vec![false; self.n()];
        seen[a] = true;
        let mut stack = vec![a];
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            out.push(x);
            for &(c, _) in &self.adj[x] {
                if self.in_cols[c] {
                    let y = self.col_mate[c];
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Applies the potential shift and the augmentation for a found path.
    pub fn augment(&mut self, ua: f64, vb: f64, sp: &ShortestPath) -> AugmentEvent {
        let (a, b) = self.next_pair().expect("state is complete");
        let dstar = sp.target_dist;
        // Potentials: settled rows move by d* - d_x; their mates move the other way so
        // matched reduced costs stay zero.
        self.u[a] = ua;
        self.v[b] = vb;
        for &(x, dx) in &sp.settled {
            let shift = dstar - dx;
            self.u[x] += shift;
            if x != a {
                self.v[self.row_mate[x]] -= shift;
            }
        }

        let mut cost_increase = 0.0;
        for (k, &y) in sp.cols.iter().enumerate() {
            cost_increase += self.costs.get(sp.rows[k], y);
            if k + 1 < sp.rows.len() {
                cost_increase -= self.costs.get(sp.rows[k + 1], y);
            }
        }
        let short = self.cycle_diagnostics(&sp.rows, &sp.cols);

        self.in_rows[a] = true;
        self.in_cols[b] = true;
        self.value += cost_increase;
        let mut path = Vec::with_capacity(2 * sp.rows.len());
        for (x, y) in sp.rows.iter().zip(&sp.cols) {
            path.push(*x);
            path.push(*y);
        }
        let event = AugmentEvent {
            r: self.r,
            row: a,
            col: b,
            path,
            path_reduced_cost: dstar,
            new_duals: (ua, vb),
            cost_increase,
            rows_settled: sp.settled.len(),
            short_cycles_created: short,
            pivoted: false,
        };
        self.r += 1;
        event
    }

    /// Rewires the matching along the path one arc at a time and counts the virgin short
    /// cycles closed on the way.
    ///
    /// Before arc `x_k -> y_k` is added, the old arc into `y_k` is removed, so `x_k` is the
    /// head of a path in the digraph of matched arcs and `y_k` the tail of one. The new
    /// arc closes a short cycle when walking from `y_k` reaches `x_k` within `l1 - 1` arcs.
    fn cycle_diagnostics(&mut self, rows: &[usize], cols: &[usize]) -> usize {
        let mut created = 0;
        for (k, (&x, &y)) in rows.iter().zip(cols).enumerate() {
            if let Some(&next) = rows.get(k + 1) {
                debug_assert_eq!(self.col_mate[y], next);
                self.row_mate[next] = NONE;
                self.col_mate[y] = NONE;
            }
            debug_assert_eq!(self.row_mate[x], NONE);
            if !self.spent[x] && closes_short_cycle(&self.row_mate, x, y, self.l1) {
                self.spent[x] = true;
                created += 1;
            }
            self.row_mate[x] = y;
            self.col_mate[y] = x;
        }
        created
    }

    fn audit(&self, full: bool) -> Result<(), SolveError> {
        let (a, b) = (self.rows[self.r - 1], self.cols[self.r - 1]);
        let check = |i: usize, j: usize, c: f64| -> Result<(), SolveError> {
            let red = c - self.u[i] - self.v[j];
            let violation = if red < -TOL {
                Some(Violation::DualInfeasible {
                    row: i,
                    col: j,
                    reduced: red,
                })
            } else if self.row_mate[i] == j && red > TOL {
                Some(Violation::NotTight {
                    row: i,
                    col: j,
                    reduced: red,
                })
            } else {
                None
            };
            match violation {
                Some(violation) => Err(SolveError::Audit { r: self.r, violation }),
                None => Ok(()),
            }
        };
        for i in (0..self.n()).filter(|&i| self.in_rows[i]) {
            if full || i == a {
                for &(j, c) in self.adj[i].iter().filter(|(j, _)| self.in_cols[*j]) {
                    check(i, j, c)?;
                }
            } else {
                let c = self.costs.get(i, b);
                if c.is_finite() {
                    check(i, b, c)?;
                }
            }
        }
        Ok(())
    }

    /// One insertion, pivoting the column schedule if allowed.
    pub fn step(&mut self, pivot_columns: bool) -> Result<AugmentEvent, SolveError> {
        let mut pivoted = false;
        loop {
            let (a, b) = self.next_pair().expect("state is complete");
            let attempt = match self.extend_duals() {
                Some((ua, vb)) => self.dijkstra_contracted(ua, vb).map(|sp| (ua, vb, sp)),
                None => Err(self.reachable_rows()),
            };
            match attempt {
                Ok((ua, vb, sp)) => {
                    let mut event = self.augment(ua, vb, &sp);
                    event.pivoted = pivoted;
                    return Ok(event);
                }
                Err(reachable) => {
                    let swap = pivot_columns
                        .then(|| {
                            (self.r + 1..self.n()).find(|&k| {
                                let c = self.cols[k];
                                reachable.iter().any(|&x| self.costs.is_arc(x, c))
                            })
                        })
                        .flatten();
                    match swap {
                        Some(k) if !pivoted => {
                            self.cols.swap(self.r, k);
                            self.pivots += 1;
                            pivoted = true;
                        }
                        _ => {
                            return Err(SolveError::Infeasible {
                                r: self.r,
                                row: a,
                                col: b,
                                reachable,
                            })
                        }
                    }
                }
            }
        }
    }

    /// Rows, columns and the solution restricted to the current prefix, in prefix
    /// coordinates (row `k` is `rows[k]`, column `k` is `cols[k]`).
    pub fn prefix_solution(&self) -> (Vec<usize>, Vec<usize>, CostMatrix, ApSolution) {
        let rows = self.rows[..self.r].to_vec();
        let cols = self.cols[..self.r].to_vec();
        let mut pos = vec![NONE; self.n()];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let sub = self.costs.submatrix(&rows, &cols);
        let sigma: Vec<usize> = rows.iter().map(|&x| pos[self.row_mate[x]]).collect();
        let sol = ApSolution {
            value: crate::ap::matching_value(&sub, &sigma),
            u: rows.iter().map(|&x| self.u[x]).collect(),
            v: cols.iter().map(|&c| self.v[c]).collect(),
            sigma,
        };
        (rows, cols, sub, sol)
    }

    /// `verify_optimal` on the prefix sub-instance `A_r x B_r`.
    pub fn verify_prefix(&self) -> Result<Certificate, Violation> {
        let (_, _, sub, sol) = self.prefix_solution();
        verify_optimal(&sub, &sol)
    }

    /// Reduced cost under the current duals.
    pub fn reduced(&self, i: usize, j: usize) -> f64 {
        reduced_cost(self.costs, &self.u, &self.v, i, j)
    }

    pub fn into_solution(self) -> ApSolution {
        assert!(self.is_complete(), "solve is not finished");
        let value = crate::ap::matching_value(self.costs, &self.row_mate);
        ApSolution {
            sigma: self.row_mate,
            u: self.u,
            v: self.v,
            value,
        }
    }
}

/// Whether adding arc `x -> y` closes a cycle of at most `l1` arcs, given that `x` has no
/// outgoing matched arc and `y` no incoming one.
pub fn closes_short_cycle(succ: &[usize], x: usize, y: usize, l1: usize) -> bool {
    if l1 == 0 {
        return false;
    }
    let mut cur = y;
    let mut len = 0;
    while cur != x {
        if len + 1 == l1 {
            return false;
        }
        cur = succ[cur];
        if cur == NONE {
            return false;
        }
        len += 1;
    }
    true
}

/// Solves the assignment problem with default options.
pub fn solve_ap(costs: &CostMatrix) -> Result<Solved, SolveError> {
    solve_ap_with(costs, &SolverOptions::default())
}

pub fn solve_ap_with(costs: &CostMatrix, opts: &SolverOptions) -> Result<Solved, SolveError> {
    solve_ap_traced(costs, opts, |_| {})
}

/// Like [`solve_ap_with`], calling `on_event` after every augmentation.
pub fn solve_ap_traced(
    costs: &CostMatrix,
    opts: &SolverOptions,
    mut on_event: impl FnMut(&AugmentEvent),
) -> Result<Solved, SolveError> {
    let n = costs.n();
    let mut state = PartialState::new(costs, opts)?;
    let stride = n.div_ceil(10).max(1);
    let mut events = Vec::new();
    let mut short_total = 0;
    while !state.is_complete() {
        let event = state.step(opts.pivot_columns)?;
        match opts.audit {
            Audit::Off => {}
            Audit::Sampled => state.audit(state.r() % stride == 0 || state.is_complete())?,
            Audit::Full => state.audit(true)?,
        }
        short_total += event.short_cycles_created;
        on_event(&event);
        if opts.keep_events {
            events.push(event);
        }
    }
    let pivots = state.pivots;
    let row_order = state.rows.clone();
    let col_order = state.cols.clone();
    let solution = state.into_solution();
    let max_matched_cost = solution
        .sigma
        .iter()
        .enumerate()
        .map(|(i, &j)| costs.get(i, j))
        .fold(f64::NEG_INFINITY, f64::max);
    let diagnostics = SolverDiagnostics {
        events,
        final_cycle_count: cycle_count(&solution.sigma),
        max_matched_cost,
        short_cycle_total: short_total,
        pivots,
        row_order,
        col_order,
    };
    Ok(Solved {
        solution,
        diagnostics,
    })
}
