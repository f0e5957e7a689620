//! Perturbed dense digraph instances.
//!
//! An instance is a base digraph with minimum in/out-degree `ceil(alpha * n)`, plus random
//! arcs added independently with probability `n^-eps`, with i.i.d. arc costs. Every
//! random draw comes from a keyed stream (see [`crate::rng`]), so `(config, seed)`
//! determines the instance bit for bit.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ap::CostMatrix;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("n must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("degree bound ceil(alpha*n) = {bound} is unsatisfiable without self-loops at n = {n}")]
    DegreeUnsatisfiable { n: usize, bound: usize },
    #[error("eps = {0} >= 1/3 makes r0 = n^(1-3 eps) degenerate")]
    EpsTooLarge(f64),
    #[error("instance file: {0}")]
    Format(String),
}

/// Where an arc came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Base,
    Random,
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} '{}' (expected one of: {})",
                        stringify!($name),
                        other,
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

/// Base-digraph family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Complete,
    RandomRegularish,
    ClusteredAdversarial,
}

string_enum!(Family {
    Complete => "complete",
    RandomRegularish => "random_regularish",
    ClusteredAdversarial => "clustered_adversarial",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostDist {
    Exp1,
    Uniform01,
}

string_enum!(CostDist {
    Exp1 => "exp1",
    Uniform01 => "uniform01",
});

/// `ceil(alpha * n)`, ignoring representation error below 1e-9 (so that `n * (1/3)` at
/// `n = 12` counts as 4, and `0.3 * 10` as 3).
pub fn degree_bound(n: usize, alpha: f64) -> usize {
    (alpha * n as f64 - 1e-9).ceil().max(0.0) as usize
}

fn check_base_params(n: usize, alpha: f64) -> Result<usize, InstanceError> {
    if n < 2 {
        return Err(InstanceError::TooSmall(n));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(InstanceError::BadAlpha(alpha));
    }
    let bound = degree_bound(n, alpha);
    if bound >= n {
        return Err(InstanceError::DegreeUnsatisfiable { n, bound });
    }
    Ok(bound)
}

/// A loop-free digraph on `0..n` with per-arc origin tags, stored densely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    tags: Vec<Option<Origin>>,
}

impl Digraph {
    pub fn empty(n: usize) -> Self {
        Digraph {
            n,
            tags: vec![None; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut d = Digraph::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d.tags[i * n + j] = Some(Origin::Base);
                }
            }
        }
        d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn origin(&self, i: usize, j: usize) -> Option<Origin> {
        self.tags[i * self.n + j]
    }

    #[inline]
    pub fn has_arc(&self, i: usize, j: usize) -> bool {
        self.origin(i, j).is_some()
    }

    /// Adds `(i, j)`; an existing tag is kept, so base arcs stay base.
    /// Returns whether the arc was new.
    pub fn add_arc(&mut self, i: usize, j: usize, origin: Origin) -> bool {
        assert!(i != j, "self-loop ({i}, {i})");
        let slot = &mut self.tags[i * self.n + j];
        if slot.is_some() {
            false
        } else {
            *slot = Some(origin);
            true
        }
    }

    /// Arcs in row-major order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, Origin)> + '_ {
        let n = self.n;
        self.tags
            .iter()
            .enumerate()
            .filter_map(move |(k, t)| t.map(|o| (k / n, k % n, o)))
    }

    pub fn arc_count(&self) -> usize {
        self.tags.iter().filter(|t| t.is_some()).count()
    }

    pub fn count_origin(&self, origin: Origin) -> usize {
        self.tags.iter().filter(|t| **t == Some(origin)).count()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_arc(i, j)).count()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| self.has_arc(i, j)).count()
    }

    /// Minimum in- and out-degree counting only arcs with the given origin.
    pub fn min_degrees(&self, origin: Option<Origin>) -> (usize, usize) {
        let mut out = vec![0usize; self.n];
        let mut inn = vec![0usize; self.n];
        for (i, j, o) in self.arcs() {
            if origin.is_none_or(|want| want == o) {
                out[i] += 1;
                inn[j] += 1;
            }
        }
        (
            inn.iter().copied().min().unwrap_or(0),
            out.iter().copied().min().unwrap_or(0),
        )
    }
}

/// Adds uniformly random missing arcs at each deficient vertex until every out-degree,
/// then every in-degree, reaches `bound`.
fn repair_degrees(d: &mut Digraph, bound: usize, seed: u64) {
    let n = d.n;
    for v in 0..n {
        let missing: Vec<usize> = (0..n).filter(|&w| w != v && !d.has_arc(v, w)).collect();
        let deficit = bound.saturating_sub(n - 1 - missing.len());
        if deficit > 0 {
            let mut rng = rng::stream(seed, Purpose::RepairOut, v);
            for &w in missing.choose_multiple(&mut rng, deficit) {
                d.add_arc(v, w, Origin::Base);
            }
        }
    }
    for v in 0..n {
        let missing: Vec<usize> = (0..n).filter(|&w| w != v && !d.has_arc(w, v)).collect();
        let deficit = bound.saturating_sub(n - 1 - missing.len());
        if deficit > 0 {
            let mut rng = rng::stream(seed, Purpose::RepairIn, v);
            for &w in missing.choose_multiple(&mut rng, deficit) {
                d.add_arc(w, v, Origin::Base);
            }
        }
    }
}

/// Generates a base digraph with minimum in/out-degree at least `ceil(alpha * n)`.
pub fn generate_base(
    family: Family,
    n: usize,
    alpha: f64,
    seed: u64,
) -> Result<Digraph, InstanceError> {
    let bound = check_base_params(n, alpha)?;
    let d = match family {
        Family::Complete => Digraph::complete(n),
        Family::RandomRegularish => {
            let mut d = Digraph::empty(n);
            for i in 0..n {
                let mut rng = rng::stream(seed, Purpose::BaseArcs, i);
                for j in 0..n {
                    let draw = rng::unit_f64(rng.next_u64());
                    if i != j && draw < alpha {
                        d.add_arc(i, j, Origin::Base);
                    }
                }
            }
            repair_degrees(&mut d, bound, seed);
            d
        }
        Family::ClusteredAdversarial => {
            let blocks = ((1.0 / alpha) + 1e-9).floor().max(1.0) as usize;
            let blocks = blocks.min(n);
            // contiguous blocks whose sizes differ by at most one
            let block_of = |v: usize| v * blocks / n;
            let mut d = Digraph::empty(n);
            for i in 0..n {
                for j in 0..n {
                    if i != j && block_of(i) == block_of(j) {
                        d.add_arc(i, j, Origin::Base);
                    }
                }
            }
            repair_degrees(&mut d, bound, seed);
            d
        }
    };
    Ok(d)
}

/// Adds each absent pair `(i, j)`, `i != j`, independently with probability `n^-eps`.
pub fn perturb(base: &Digraph, eps: f64, seed: u64) -> Digraph {
    let n = base.n;
    let p = (n as f64).powf(-eps);
    let mut d = base.clone();
    for i in 0..n {
        let mut rng = rng::stream(seed, Purpose::Perturb, i);
        for j in 0..n {
            let draw = rng::unit_f64(rng.next_u64());
            if i != j && !base.has_arc(i, j) && draw < p {
                d.add_arc(i, j, Origin::Random);
            }
        }
    }
    d
}

/// Generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub n: usize,
    pub alpha: f64,
    pub eps: f64,
    pub family: Family,
    pub cost_dist: CostDist,
}

impl InstanceConfig {
    pub fn thresholds(&self) -> Result<Thresholds, InstanceError> {
        Thresholds::new(self.n, self.eps)
    }
}

/// `r0 = n^(1-3 eps)`, `l1 = n^(4 eps)` and `gamma_n = n^-(1-2 eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub r0: f64,
    pub l1: f64,
    pub gamma_n: f64,
    /// `ceil(r0)`.
    pub r0_count: usize,
    /// `ceil(l1)` capped at `n`.
    pub l1_count: usize,
}

impl Thresholds {
    pub fn new(n: usize, eps: f64) -> Result<Self, InstanceError> {
        if !(eps > 0.0) {
            return Err(InstanceError::BadEps(eps));
        }
        if eps >= 1.0 / 3.0 {
            return Err(InstanceError::EpsTooLarge(eps));
        }
        let nf = n as f64;
        let r0 = r0(nf, eps);
        let l1 = l1(nf, eps);
        Ok(Thresholds {
            r0,
            l1,
            gamma_n: gamma(nf, eps),
            r0_count: r0.ceil() as usize,
            l1_count: (l1.ceil() as usize).min(n),
        })
    }

    /// `r0 * ln n`, the cycle-count scale.
    pub fn r0_ln_n(&self, n: usize) -> f64 {
        self.r0 * (n as f64).ln()
    }
}

pub fn r0(n: f64, eps: f64) -> f64 {
    n.powf(1.0 - 3.0 * eps)
}

pub fn l1(n: f64, eps: f64) -> f64 {
    n.powf(4.0 * eps)
}

pub fn gamma(r: f64, eps: f64) -> f64 {
    r.powf(-(1.0 - 2.0 * eps))
}

/// A digraph with i.i.d. arc costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    digraph: Digraph,
    costs: CostMatrix,
    config: InstanceConfig,
    seed: u64,
}

/// Draws one cost per arc. The draw for `(i, j)` depends only on `(seed, i, j)`.
pub fn sample_costs(d: Digraph, config: InstanceConfig, seed: u64) -> Instance {
    let n = d.n;
    let mut costs = CostMatrix::absent(n);
    for i in 0..n {
        let mut rng = rng::stream(seed, Purpose::Cost, i);
        for j in 0..n {
            let word = rng.next_u64();
            if d.has_arc(i, j) {
                let c = match config.cost_dist {
                    CostDist::Exp1 => rng::exp1_f64(word),
                    CostDist::Uniform01 => rng::unit_f64(word),
                };
                costs.set(i, j, c);
            }
        }
    }
    Instance {
        digraph: d,
        costs,
        config,
        seed,
    }
}

impl Instance {
    /// `generate_base -> perturb -> sample_costs`, all keyed by `seed`.
    pub fn generate(config: InstanceConfig, seed: u64) -> Result<Instance, InstanceError> {
        if !(config.eps > 0.0) {
            return Err(InstanceError::BadEps(config.eps));
        }
        let base = generate_base(config.family, config.n, config.alpha, seed)?;
        let d = perturb(&base, config.eps, seed);
        Ok(sample_costs(d, config, seed))
    }

    /// Builds an instance from explicit arcs. Used for hand-made cases and file loading.
    pub fn from_arcs(
        config: InstanceConfig,
        seed: u64,
        arcs: &[(usize, usize, f64, Origin)],
    ) -> Result<Instance, InstanceError> {
        let n = config.n;
        let mut d = Digraph::empty(n);
        let mut costs = CostMatrix::absent(n);
        for &(i, j, c, o) in arcs {
            if i >= n || j >= n || i == j {
                return Err(InstanceError::Format(format!("bad arc ({i}, {j})")));
            }
            if !(c.is_finite() && c >= 0.0) {
                return Err(InstanceError::Format(format!(
                    "arc ({i}, {j}) has invalid cost {c}"
                )));
            }
            if !d.add_arc(i, j, o) {
                return Err(InstanceError::Format(format!("duplicate arc ({i}, {j})")));
            }
            costs.set(i, j, c);
        }
        Ok(Instance {
            digraph: d,
            costs,
            config,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn digraph(&self) -> &Digraph {
        &self.digraph
    }

    pub fn costs(&self) -> &CostMatrix {
        &self.costs
    }

    pub fn config(&self) -> &InstanceConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `C(i, j)`, `+inf` for a non-arc.
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs.get(i, j)
    }

    pub fn origin(&self, i: usize, j: usize) -> Option<Origin> {
        self.digraph.origin(i, j)
    }

    /// JSON document with costs printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::with_capacity(64 + self.digraph.arc_count() * 40);
        out.push_str("{\"config\":");
        out.push_str(&serde_json::to_string(&self.config).expect("config serializes"));
        out.push_str(",\"seed\":");
        out.push_str(&self.seed.to_string());
        out.push_str(",\"arcs\":[");
        for (k, (i, j, o)) in self.digraph.arcs().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&format!(
                "[{},{},{:.16e},\"{}\"]",
                i,
                j,
                self.costs.get(i, j),
                match o {
                    Origin::Base => "base",
                    Origin::Random => "random",
                }
            ));
        }
        out.push_str("]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
        #[derive(Deserialize)]
        struct Doc {
            config: InstanceConfig,
            seed: u64,
            arcs: Vec<(usize, usize, f64, Origin)>,
        }
        let doc: Doc =
            serde_json::from_str(text).map_err(|e| InstanceError::Format(e.to_string()))?;
        Instance::from_arcs(doc.config, doc.seed, &doc.arcs)
    }
}

/// A seeded uniformly random permutation of `0..n`, for solver insertion orders.
pub fn random_order(n: usize, seed: u64, salt: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, Purpose::InsertionOrder, salt);
    order.shuffle(&mut rng);
    order
}
