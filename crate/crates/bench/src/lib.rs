//! Shared inputs for the benchmarks.

use vrp2l::construct::initial_solution;
use vrp2l::generate::{generate_instance, GeneratorConfig};
use vrp2l::{Instance, Solution};

/// A generated instance of `n` shipments with its initial solution.
pub fn instance_with_start(seed: u64, n: usize) -> (Instance, Solution) {
    let instance = generate_instance(&GeneratorConfig::sized(seed, n)).expect("generator config is valid");
    let start = initial_solution(&instance).expect("generated instances are constructible");
    (instance, start)
}
