mod common;

use common::*;
use patchkit::ap::{matching_value, verify_optimal, CostMatrix, Violation};
use patchkit::instance::{random_order, CostDist, Family, Instance, Thresholds};
use patchkit::oracles::brute_ap;
use patchkit::ssp::{solve_ap, solve_ap_with, Audit, PartialState, SolverOptions};
use proptest::prelude::*;

#[test]
fn matches_brute_force_for_small_n() {
    for n in 4..=8 {
        for k in 0..200 {
            let inst = mixed_instance(n, k);
            let (best, _) = brute_ap(inst.costs()).unwrap();
            let s = solve_ap(inst.costs()).unwrap();
            assert!(
                (s.solution.value - best).abs() <= 1e-9,
                "n={n} k={k}: solver {} vs brute {best}",
                s.solution.value
            );
            verify_optimal(inst.costs(), &s.solution).unwrap();
            assert!(s.diagnostics.short_cycle_total <= n);
            assert!(s.diagnostics.final_cycle_count >= 1);
        }
    }
}

#[test]
fn every_prefix_matches_brute_force() {
    for seed in 0..20 {
        let inst = mixed_instance(8, seed);
        let opts = SolverOptions {
            order: Some((random_order(8, seed, 0), random_order(8, seed, 1))),
            ..SolverOptions::default()
        };
        let mut st = PartialState::new(inst.costs(), &opts).unwrap();
        while !st.is_complete() {
            st.step(true).unwrap();
            let (_, _, sub, sol) = st.prefix_solution();
            let (best, _) = brute_ap(&sub).unwrap();
            assert!((sol.value - best).abs() <= 1e-9, "prefix {} of seed {seed}", st.r());
            verify_optimal(&sub, &sol).unwrap();
        }
    }
}

#[test]
fn first_fifty_prefixes_at_n60_are_optimal() {
    let inst = Instance::generate(
        config(60, Family::RandomRegularish, 0.3, 0.15, CostDist::Exp1),
        60,
    )
    .unwrap();
    let mut st = PartialState::new(inst.costs(), &SolverOptions::default()).unwrap();
    for _ in 0..50 {
        st.step(true).unwrap();
        st.verify_prefix().unwrap();
    }
}

#[test]
fn full_audit_passes_on_medium_instances() {
    for k in 0..6 {
        let inst = mixed_instance(80, k);
        let opts = SolverOptions {
            audit: Audit::Full,
            l1: Thresholds::new(80, 0.2).unwrap().l1_count,
            ..SolverOptions::default()
        };
        let s = solve_ap_with(inst.costs(), &opts).unwrap();
        assert!(s.diagnostics.short_cycle_total <= 80);
    }
}

#[test]
fn contracted_dijkstra_and_augment_invariants() {
    for seed in 0..30 {
        let n = 25;
        let c = full_matrix(n, seed);
        let mut st = PartialState::new(&c, &SolverOptions::default()).unwrap();
        while !st.is_complete() {
            let (a, b) = st.next_pair().unwrap();
            let before = st.prefix_solution();
            let old_pairs: Vec<(usize, usize)> = (0..before.0.len())
                .map(|i| (before.0[i], before.1[before.3.sigma[i]]))
                .collect();
            let value_before = st.value();

            let (ua, vb) = st.extend_duals().unwrap();
            let sp = st.dijkstra_contracted(ua, vb).unwrap();
            assert_eq!(sp.settled[0], (a, 0.0));
            for w in sp.settled.windows(2) {
                assert!(w[0].1 <= w[1].1, "settled distances decrease");
            }
            assert!(sp.target_dist >= 0.0);
            if st.r() == 0 {
                assert_eq!((sp.rows.clone(), sp.cols.clone()), (vec![a], vec![b]));
            }

            let ev = st.augment(ua, vb, &sp);
            assert_eq!(ev.path.first(), Some(&a));
            assert_eq!(ev.path.last(), Some(&b));
            assert!(ev.path_reduced_cost >= 0.0);
            // C-cost of the path differs from its reduced cost by u_{r+1} + v_{r+1} only.
            let dc = st.value() - value_before;
            assert!((dc - ev.cost_increase).abs() <= 1e-9 * n as f64);
            assert!((dc - (ev.path_reduced_cost + ua + vb)).abs() <= 1e-9 * n as f64);

            // New matching = old matching with the path's arcs flipped.
            let after = st.prefix_solution();
            let new_pairs: Vec<(usize, usize)> = (0..after.0.len())
                .map(|i| (after.0[i], after.1[after.3.sigma[i]]))
                .collect();
            assert_eq!(new_pairs.len(), old_pairs.len() + 1);
            let mut expected: Vec<(usize, usize)> = old_pairs
                .iter()
                .copied()
                .filter(|&(x, y)| !ev.path.windows(2).skip(1).step_by(2).any(|w| w == [y, x]))
                .collect();
            expected.extend(ev.path.chunks(2).map(|p| (p[0], p[1])));
            expected.sort_unstable();
            let mut got = new_pairs.clone();
            got.sort_unstable();
            assert_eq!(got, expected);
            st.verify_prefix().unwrap();
        }
    }
}

#[test]
fn raising_one_potential_by_ten_gamma_breaks_feasibility() {
    let n = 50;
    let eps = 0.1;
    let gamma = Thresholds::new(n, eps).unwrap().gamma_n;
    let inst = Instance::generate(config(n, Family::Complete, 0.5, eps, CostDist::Exp1), 9).unwrap();
    let sol = solve_ap(inst.costs()).unwrap().solution;
    let c = inst.costs();
    for i in 0..n {
        let mut bad = sol.clone();
        bad.u[i] += 10.0 * gamma;
        let off_matching_negative = (0..n).any(|j| {
            j != sol.sigma[i] && c.is_arc(i, j) && c.get(i, j) - bad.u[i] - bad.v[j] < -1e-9
        });
        match verify_optimal(c, &bad) {
            Err(Violation::DualInfeasible { row, col, .. }) => {
                assert_eq!(row, i);
                if off_matching_negative {
                    assert_ne!(col, sol.sigma[i]);
                }
            }
            other => panic!("row {i}: expected dual infeasibility, got {other:?}"),
        }
    }
}

#[test]
fn value_matches_permutation_cost() {
    for k in 0..10 {
        let inst = mixed_instance(120, k);
        let s = solve_ap(inst.costs()).unwrap();
        assert_eq!(
            s.solution.value.to_bits(),
            matching_value(inst.costs(), &s.solution.sigma).to_bits()
        );
    }
}

fn order_value(c: &CostMatrix, seed: u64) -> f64 {
    let n = c.n();
    let opts = SolverOptions {
        order: Some((random_order(n, seed, 0), random_order(n, seed, 1))),
        audit: Audit::Off,
        ..SolverOptions::default()
    };
    solve_ap_with(c, &opts).unwrap().solution.value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_is_independent_of_insertion_order(n in 5usize..40, k in 0u64..1000, s1 in any::<u64>(), s2 in any::<u64>()) {
        let inst = mixed_instance(n, k);
        let a = order_value(inst.costs(), s1);
        let b = order_value(inst.costs(), s2);
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn translated_duals_still_certify(n in 4usize..30, k in 0u64..1000, lambda in -50.0f64..50.0) {
        let inst = mixed_instance(n, k);
        let sol = solve_ap(inst.costs()).unwrap().solution;
        prop_assert!(verify_optimal(inst.costs(), &sol).is_ok());
        prop_assert!(verify_optimal(inst.costs(), &sol.translated(lambda)).is_ok());
    }

    #[test]
    fn duality_gap_is_closed(n in 4usize..30, seed in any::<u64>()) {
        let c = full_matrix(n, seed);
        let sol = solve_ap(&c).unwrap().solution;
        prop_assert!((sol.dual_objective() - sol.value).abs() <= 1e-9 * n as f64);
        // any other permutation costs at least the dual objective
        let mut r = rng(seed);
        for _ in 0..20 {
            let p = permutation(n, &mut r);
            prop_assert!(matching_value(&c, &p) >= sol.dual_objective() - 1e-9 * n as f64);
        }
    }
}
