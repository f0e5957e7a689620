mod common;

use common::*;
use patchkit::ap::matching_value;
use patchkit::instance::{CostDist, Family, Instance, Origin};
use patchkit::oracles::{brute_ap, brute_atsp, check_tour, exhaustive_best_patch, held_karp_atsp};
use patchkit::patching::{
    analysis_threshold, best_patch, count_patching_pairs, cycle_count, decompose, karp_patch,
    PatchPolicy,
};
use patchkit::ssp::solve_ap;
use proptest::prelude::*;

fn complete(n: usize, seed: u64) -> Instance {
    Instance::generate(config(n, Family::Complete, 0.5, 0.1, CostDist::Exp1), seed).unwrap()
}

#[test]
fn best_patch_agrees_with_exhaustive_scan() {
    let mut r = rng(7);
    let mut compared = 0;
    // random derangements on complete digraphs
    for k in 0..400u64 {
        let n = 4 + (k as usize % 37);
        let inst = complete(n, k);
        let sigma = derangement(n, &mut r);
        let cover = decompose(&sigma);
        if cover.len() < 2 {
            continue;
        }
        let fast = best_patch(&inst, &cover, PatchPolicy::GlobalMin);
        assert!(fast.is_some(), "complete digraph always has a patching pair");
        assert_eq!(fast, exhaustive_best_patch(&inst, &sigma), "k={k}");
        compared += 1;
    }
    // solver covers on sparse perturbed digraphs, walked through every patch step
    for k in 0..200u64 {
        let n = 10 + (k as usize % 31);
        let inst = Instance::generate(
            config(n, Family::ALL[(k % 3) as usize], 0.15, 0.3, CostDist::Uniform01),
            k,
        )
        .unwrap();
        let mut sigma = solve_ap(inst.costs()).unwrap().solution.sigma;
        while cycle_count(&sigma) >= 2 {
            let cover = decompose(&sigma);
            let fast = best_patch(&inst, &cover, PatchPolicy::GlobalMin);
            assert_eq!(fast, exhaustive_best_patch(&inst, &sigma), "k={k}");
            compared += 1;
            match fast {
                Some(m) => m.apply(&mut sigma),
                None => break,
            }
        }
    }
    assert!(compared >= 500, "only {compared} covers compared");
}

#[test]
fn no_patch_when_cycles_are_isolated() {
    // two 3-cycles with no arcs between them
    let mut arcs = Vec::new();
    for block in [0, 3] {
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    arcs.push((block + i, block + j, 1.0 + (i * 3 + j) as f64, Origin::Base));
                }
            }
        }
    }
    let inst = Instance::from_arcs(config(6, Family::Complete, 0.3, 0.1, CostDist::Exp1), 0, &arcs)
        .unwrap();
    let sigma = vec![1, 2, 0, 4, 5, 3];
    let cover = decompose(&sigma);
    assert_eq!(best_patch(&inst, &cover, PatchPolicy::GlobalMin), None);
    assert_eq!(exhaustive_best_patch(&inst, &sigma), None);
    let fail = karp_patch(&inst, &cover, PatchPolicy::GlobalMin).unwrap_err();
    assert_eq!(fail.remaining.len(), 2);
    assert!(fail.log.is_empty());
}

#[test]
fn sandwich_against_held_karp() {
    let mut succeeded = 0;
    let mut failed = 0;
    for k in 0..100u64 {
        let n = 6 + (k as usize % 7);
        let inst = mixed_instance(n, k);
        let solved = solve_ap(inst.costs()).unwrap();
        let v_ap = solved.solution.value;
        let (opt, tour) = held_karp_atsp(inst.costs()).unwrap();
        assert!(v_ap <= opt + 1e-9, "k={k}: AP {v_ap} above ATSP {opt}");
        if let Some(t) = tour {
            assert!((check_tour(inst.costs(), &t).unwrap() - opt).abs() <= 1e-9);
        }
        match karp_patch(&inst, &decompose(&solved.solution.sigma), PatchPolicy::GlobalMin) {
            Ok(p) => {
                assert!(opt <= p.tour.cost + 1e-9, "k={k}: ATSP {opt} above tour {}", p.tour.cost);
                succeeded += 1;
            }
            Err(_) => failed += 1,
        }
    }
    assert_eq!(succeeded + failed, 100);
    assert!(succeeded > 0);
}

#[test]
fn held_karp_matches_tour_enumeration() {
    for k in 0..60u64 {
        let n = 3 + (k as usize % 6);
        let inst = mixed_instance(n, k);
        let (hk, _) = held_karp_atsp(inst.costs()).unwrap();
        let bf = brute_atsp(inst.costs()).unwrap();
        assert!(
            (hk == bf) || (hk - bf).abs() <= 1e-9,
            "k={k}: held-karp {hk} vs enumeration {bf}"
        );
        let (ap, _) = brute_ap(inst.costs()).unwrap();
        assert!(ap <= hk + 1e-9);
    }
}

#[test]
fn brute_ap_beats_random_permutations() {
    let mut r = rng(11);
    for k in 0..20u64 {
        let inst = mixed_instance(8, k);
        let (best, sigma) = brute_ap(inst.costs()).unwrap();
        assert_eq!(matching_value(inst.costs(), &sigma.unwrap()), best);
        for _ in 0..100 {
            let p = permutation(8, &mut r);
            assert!(best <= matching_value(inst.costs(), &p));
        }
    }
}

#[test]
fn patched_tours_are_hamiltonian_and_accounted() {
    for k in 0..40u64 {
        let n = 30 + (k as usize % 50);
        let inst = mixed_instance(n, k);
        let sol = solve_ap(inst.costs()).unwrap().solution;
        let cover = decompose(&sol.sigma);
        for policy in PatchPolicy::ALL {
            let Ok(p) = karp_patch(&inst, &cover, *policy) else {
                continue;
            };
            let cost = check_tour(inst.costs(), &p.tour.order).unwrap();
            assert!((cost - p.tour.cost).abs() <= 1e-9 * n as f64);
            let deltas: f64 = p.log.iter().map(|s| s.patch.delta).sum();
            assert!((p.tour.cost - sol.value - deltas).abs() <= 1e-9 * n as f64);
            assert_eq!(p.log.len() + 1, cover.len());
            for (i, s) in p.log.iter().enumerate() {
                assert_eq!(s.cycles_before, cover.len() - i);
                assert!(2 * s.pairs_before >= (s.cycles_before * n) as u64);
                if *policy == PatchPolicy::AnalysisR {
                    let cap = analysis_threshold(n, inst.config().eps, s.cycles_before);
                    let m = s.patch;
                    for (a, b) in [(m.u, m.y), (m.x, m.v)] {
                        assert_eq!(inst.origin(a, b), Some(Origin::Random));
                        assert!(inst.cost(a, b) <= cap);
                    }
                }
            }
        }
    }
}

/// Cycle count by union-find over the arcs `i -> sigma(i)`.
fn union_find_cycles(sigma: &[usize]) -> usize {
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    let mut parent: Vec<usize> = (0..sigma.len()).collect();
    for (i, &j) in sigma.iter().enumerate() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        parent[a] = b;
    }
    (0..sigma.len()).filter(|&i| find(&mut parent, i) == i).count()
}

proptest! {
    #[test]
    fn decompose_agrees_with_union_find(seed in any::<u64>()) {
        let sigma = permutation(100, &mut rng(seed));
        let cover = decompose(&sigma);
        prop_assert_eq!(cover.len(), union_find_cycles(&sigma));
        prop_assert_eq!(cover.lengths().iter().sum::<usize>(), 100);
        prop_assert!(cover.lengths().windows(2).all(|w| w[0] <= w[1]));
        let mut seen = vec![false; 100];
        for c in cover.cycles() {
            for (k, &v) in c.iter().enumerate() {
                prop_assert!(!seen[v]);
                seen[v] = true;
                prop_assert_eq!(sigma[v], c[(k + 1) % c.len()]);
            }
        }
    }

    #[test]
    fn pair_count_bound_without_fixed_points(n in 2usize..200, seed in any::<u64>()) {
        let sigma = derangement(n, &mut rng(seed));
        let cover = decompose(&sigma);
        let lengths = cover.lengths();
        let direct: u64 = (0..lengths.len())
            .flat_map(|i| ((i + 1)..lengths.len()).map(move |j| (i, j)))
            .map(|(i, j)| (lengths[i] * lengths[j]) as u64)
            .sum();
        prop_assert_eq!(count_patching_pairs(&cover), direct);
        if cover.len() >= 2 {
            prop_assert!(2 * direct >= (cover.len() * n) as u64);
        }
    }

    #[test]
    fn complete_digraph_always_patches(n in 4usize..60, seed in any::<u64>()) {
        let inst = complete(n, seed);
        let cover = decompose(&derangement(n, &mut rng(seed)));
        let p = karp_patch(&inst, &cover, PatchPolicy::GlobalMin);
        prop_assert!(p.is_ok());
        let p = p.unwrap();
        prop_assert!(check_tour(inst.costs(), &p.tour.order).is_ok());
        prop_assert_eq!(p.log.len() + 1, cover.len());
    }
}
