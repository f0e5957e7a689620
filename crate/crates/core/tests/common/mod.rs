#![allow(dead_code)]

use patchkit::ap::CostMatrix;
use patchkit::instance::{CostDist, Family, Instance, InstanceConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config(n: usize, family: Family, alpha: f64, eps: f64, dist: CostDist) -> InstanceConfig {
    InstanceConfig {
        n,
        alpha,
        eps,
        family,
        cost_dist: dist,
    }
}

/// Cycles through complete, regular-ish and clustered bases and both cost laws.
pub fn mixed_instance(n: usize, k: u64) -> Instance {
    let family = Family::ALL[(k % 3) as usize];
    let dist = CostDist::ALL[((k / 3) % 2) as usize];
    Instance::generate(config(n, family, 0.5, 0.2, dist), 1000 + k).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense matrix with every entry finite, diagonal included.
pub fn full_matrix(n: usize, seed: u64) -> CostMatrix {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| r.gen::<f64>() * 10.0).collect())
        .collect();
    CostMatrix::from_rows(&rows)
}

pub fn permutation(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

/// Uniform permutation without fixed points (rejection sampling).
pub fn derangement(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    loop {
        let p = permutation(n, r);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}
