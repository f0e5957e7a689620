//! Random asymmetric TSP instances on dense digraphs, an incremental shortest-augmenting-path
//! assignment solver, and Karp-style cycle patching.

pub mod ap;
pub mod cli;
pub mod harness;
pub mod instance;
pub mod oracles;
pub mod patching;
pub mod rng;
pub mod ssp;
