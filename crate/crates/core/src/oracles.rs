//! Exact reference solvers for small instances.
//!
//! Everything here is written independently of the solver and patching code it checks:
//! plain enumeration, subset dynamic programming and nested loops.

use thiserror::Error;

use crate::ap::CostMatrix;
use crate::instance::Instance;
use crate::patching::PatchMove;

/// Largest `n` accepted by [`brute_ap`].
pub const MAX_N_AP: usize = 9;
/// Largest `n` accepted by [`held_karp_atsp`].
pub const MAX_N_ATSP: usize = 15;
/// Largest `n` accepted by [`brute_atsp`].
pub const MAX_N_BRUTE_ATSP: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("oracle size cap exceeded: n = {n} > {cap}")]
pub struct SizeCap {
    pub n: usize,
    pub cap: usize,
}

fn cap(n: usize, cap: usize) -> Result<(), SizeCap> {
    if n > cap {
        Err(SizeCap { n, cap })
    } else {
        Ok(())
    }
}

/// Minimum over all `n!` permutations. Permutations are visited in lexicographic order and
/// only a strictly smaller value replaces the incumbent, so the returned `sigma` is the
/// lexicographically first optimum. `(inf, None)` when no permutation is feasible.
pub fn brute_ap(costs: &CostMatrix) -> Result<(f64, Option<Vec<usize>>), SizeCap> {
    let n = costs.n();
    cap(n, MAX_N_AP)?;
    fn go(
        costs: &CostMatrix,
        row: usize,
        used: &mut [bool],
        partial: f64,
        cur: &mut Vec<usize>,
        best: &mut (f64, Option<Vec<usize>>),
    ) {
        let n = costs.n();
        if row == n {
            if partial < best.0 {
                *best = (partial, Some(cur.clone()));
            }
            return;
        }
        for j in 0..n {
            let c = costs.get(row, j);
            if used[j] || !c.is_finite() || partial + c >= best.0 {
                continue;
            }
            used[j] = true;
            cur.push(j);
            go(costs, row + 1, used, partial + c, cur, best);
            cur.pop();
            used[j] = false;
        }
    }
    let mut best = (f64::INFINITY, None);
    if n == 0 {
        return Ok((0.0, Some(Vec::new())));
    }
    go(costs, 0, &mut vec![false; n], 0.0, &mut Vec::new(), &mut best);
    Ok(best)
}

/// Exact ATSP by dynamic programming over `(visited set, last vertex)`, starting at 0.
/// `(inf, None)` when the arc set has no Hamiltonian cycle.
pub fn held_karp_atsp(costs: &CostMatrix) -> Result<(f64, Option<Vec<usize>>), SizeCap> {
    let n = costs.n();
    cap(n, MAX_N_ATSP)?;
    if n == 0 {
        return Ok((0.0, Some(Vec::new())));
    }
    if n == 1 {
        let c = costs.get(0, 0);
        return Ok((c, c.is_finite().then(|| vec![0])));
    }
    let full = 1usize << n;
    let idx = |mask: usize, last: usize| mask * n + last;
    let mut best = vec![f64::INFINITY; full * n];
    let mut prev = vec![usize::MAX; full * n];
    best[idx(1, 0)] = 0.0;
    for mask in 1..full {
        if mask & 1 == 0 {
            continue;
        }
        for last in 0..n {
            let here = best[idx(mask, last)];
            if !here.is_finite() {
                continue;
            }
            for next in 1..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let c = costs.get(last, next);
                if !c.is_finite() {
                    continue;
                }
                let m2 = mask | (1 << next);
                if here + c < best[idx(m2, next)] {
                    best[idx(m2, next)] = here + c;
                    prev[idx(m2, next)] = last;
                }
            }
        }
    }
    let mut value = f64::INFINITY;
    let mut end = usize::MAX;
    for last in 1..n {
        let total = best[idx(full - 1, last)] + costs.get(last, 0);
        if total < value {
            value = total;
            end = last;
        }
    }
    if !value.is_finite() {
        return Ok((f64::INFINITY, None));
    }
    let mut tour = Vec::with_capacity(n);
    let (mut mask, mut v) = (full - 1, end);
    while v != 0 {
        tour.push(v);
        let p = prev[idx(mask, v)];
        mask &= !(1 << v);
        v = p;
    }
    tour.push(0);
    tour.reverse();
    Ok((value, Some(tour)))
}

/// ATSP by enumerating every cyclic order that starts at vertex 0.
pub fn brute_atsp(costs: &CostMatrix) -> Result<f64, SizeCap> {
    let n = costs.n();
    cap(n, MAX_N_BRUTE_ATSP)?;
    if n <= 1 {
        return Ok(if n == 1 { costs.get(0, 0) } else { 0.0 });
    }
    fn go(costs: &CostMatrix, last: usize, used: &mut [bool], depth: usize, acc: f64) -> f64 {
        let n = costs.n();
        if depth == n {
            return acc + costs.get(last, 0);
        }
        let mut best = f64::INFINITY;
        for next in 1..n {
            if !used[next] {
                used[next] = true;
                best = best.min(go(costs, next, used, depth + 1, acc + costs.get(last, next)));
                used[next] = false;
            }
        }
        best
    }
    let mut used = vec![false; n];
    used[0] = true;
    Ok(go(costs, 0, &mut used, 1, 0.0))
}

/// Checks that `order` visits every vertex exactly once and that every consecutive arc
/// (including the closing one) exists; returns the tour cost.
pub fn check_tour(costs: &CostMatrix, order: &[usize]) -> Result<f64, String> {
    let n = costs.n();
    if order.len() != n {
        return Err(format!("tour has {} vertices, expected {n}", order.len()));
    }
    let mut visited = vec![false; n];
    for &v in order {
        if v >= n || visited[v] {
            return Err(format!("vertex {v} repeated or out of range"));
        }
        visited[v] = true;
    }
    let mut cost = 0.0;
    for k in 0..n {
        let (a, b) = (order[k], order[(k + 1) % n]);
        let c = costs.get(a, b);
        if !c.is_finite() {
            return Err(format!("tour uses missing arc ({a}, {b})"));
        }
        cost += c;
    }
    Ok(cost)
}

/// Reference for global-min patching: every ordered pair of vertices, cycle membership
/// decided by walking `sigma`, best net change with ties to the smallest
/// `(min(x,u), max(x,u))`.
pub fn exhaustive_best_patch(inst: &Instance, sigma: &[usize]) -> Option<PatchMove> {
    let n = sigma.len();
    let same_cycle = |a: usize, b: usize| {
        let mut w = sigma[a];
        loop {
            if w == b {
                return true;
            }
            if w == a {
                return false;
            }
            w = sigma[w];
        }
    };
    let mut best: Option<((f64, usize, usize), PatchMove)> = None;
    for x in 0..n {
        for u in 0..n {
            if x == u || same_cycle(x, u) {
                continue;
            }
            let (y, v) = (sigma[x], sigma[u]);
            if !(inst.cost(u, y).is_finite() && inst.cost(x, v).is_finite()) {
                continue;
            }
            let delta = inst.cost(u, y) + inst.cost(x, v) - inst.cost(x, y) - inst.cost(u, v);
            let key = (delta, x.min(u), x.max(u));
            let better = match &best {
                None => true,
                Some((k, _)) => key.0 < k.0 || (key.0 == k.0 && (key.1, key.2) < (k.1, k.2)),
            };
            if better {
                let (a, b) = (key.1, key.2);
                best = Some((key, PatchMove::new(inst, a, sigma[a], b, sigma[b])));
            }
        }
    }
    best.map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn brute_ap_examples() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(brute_ap(&c).unwrap(), (5.0, Some(vec![0, 1])));
        let d = CostMatrix::from_rows(&[
            vec![INF, 1.0, 1.0],
            vec![1.0, INF, 1.0],
            vec![1.0, 1.0, INF],
        ]);
        let (v, s) = brute_ap(&d).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(s, Some(vec![1, 2, 0]));
        let none = CostMatrix::from_rows(&[vec![1.0, INF], vec![1.0, INF]]);
        assert_eq!(brute_ap(&none).unwrap(), (INF, None));
        assert_eq!(
            brute_ap(&CostMatrix::absent(10)),
            Err(SizeCap { n: 10, cap: 9 })
        );
    }

    #[test]
    fn held_karp_examples() {
        let ones = CostMatrix::from_rows(&[
            vec![INF, 1.0, 1.0],
            vec![1.0, INF, 1.0],
            vec![1.0, 1.0, INF],
        ]);
        assert_eq!(held_karp_atsp(&ones).unwrap().0, 3.0);
        // only arcs 0 -> 2 -> 1 -> 3 -> 0
        let mut forced = CostMatrix::absent(4);
        forced.set(0, 2, 1.0);
        forced.set(2, 1, 2.0);
        forced.set(1, 3, 3.0);
        forced.set(3, 0, 4.0);
        assert_eq!(
            held_karp_atsp(&forced).unwrap(),
            (10.0, Some(vec![0, 2, 1, 3]))
        );
        forced.set(3, 0, INF);
        assert_eq!(held_karp_atsp(&forced).unwrap(), (INF, None));
        assert!(held_karp_atsp(&CostMatrix::absent(16)).is_err());
    }

    #[test]
    fn check_tour_rejects_bad_tours() {
        let ones = CostMatrix::from_rows(&[
            vec![INF, 1.0, 1.0],
            vec![1.0, INF, 1.0],
            vec![1.0, 1.0, INF],
        ]);
        assert_eq!(check_tour(&ones, &[0, 2, 1]), Ok(3.0));
        assert!(check_tour(&ones, &[0, 0, 1]).is_err());
        assert!(check_tour(&ones, &[0, 1]).is_err());
        let mut sparse = CostMatrix::absent(3);
        sparse.set(0, 1, 1.0);
        sparse.set(1, 2, 1.0);
        assert!(check_tour(&sparse, &[0, 1, 2]).is_err());
    }
}
