use std::time::Instant;

use vrp2l::generate::{generate_with_witness, GeneratorConfig};
use vrp2l::io::{parse_instance, serialize_instance};
use vrp2l::pipeline::assemble;

#[test]
fn witness_is_feasible_across_sizes() {
    for (seed, n) in [(1, 20), (2, 60), (3, 120)] {
        let t = Instant::now();
        let g = generate_with_witness(&GeneratorConfig::sized(seed, n)).unwrap();
        let sol = assemble(&g.instance, g.witness.clone());
        assert!(sol.is_feasible(), "seed {seed}: {:?}", sol.feasibility);
        eprintln!("n={n} trucks={} {:?}", sol.used_trucks(), t.elapsed());
    }
}

#[test]
fn paper_scale_witness_is_feasible() {
    let t = Instant::now();
    let g = generate_with_witness(&GeneratorConfig::paper_scale(11)).unwrap();
    let sol = assemble(&g.instance, g.witness.clone());
    assert!(sol.is_feasible(), "{:?}", sol.feasibility);
    eprintln!("trucks={} mileage={} {:?}", sol.used_trucks(), sol.total_mileage, t.elapsed());
}

#[test]
fn same_seed_same_bytes() {
    let c = GeneratorConfig::sized(5, 40);
    let a = serialize_instance(&generate_with_witness(&c).unwrap().instance);
    let b = serialize_instance(&generate_with_witness(&c).unwrap().instance);
    assert_eq!(a, b);
    assert_eq!(serialize_instance(&parse_instance(&a).unwrap()), a);
}
