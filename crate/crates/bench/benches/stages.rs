use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vrp2l::construct::initial_solution;
use vrp2l::loading::{build_columns, load_truck, PackParams, StopSpan};
use vrp2l::model::{LocationId, TravelMatrices};
use vrp2l::postopt::{postoptimize, sequence_subroutes};
use vrp2l::route::{solve_route, RouteParams};
use vrp2l::schedule::simulate_queues;
use vrp2l::tabu::{tabu_search, Budget, TabuParams};
use vrp2l_bench::instance_with_start;

fn packing(c: &mut Criterion) {
    let (inst, start) = instance_with_start(1, 100);
    let route = start.routes.iter().max_by_key(|r| r.shipments().len()).unwrap();
    let truck = inst.truck(route.truck);
    let mut cols = Vec::new();
    let mut spans = Vec::new();
    for s in route.shipments() {
        let (p, d) = route.span_of(s).unwrap();
        for col in build_columns(inst.shipment(s), &inst.pallet).unwrap() {
            cols.push(col);
            spans.push(StopSpan::new(p, d));
        }
    }
    let mut g = c.benchmark_group("pack");
    for width in [1, 5, 20] {
        let params = PackParams { beam_width: width, ..PackParams::default() };
        g.bench_with_input(BenchmarkId::new("beam", width), &params, |b, p| {
            b.iter(|| load_truck(black_box(&cols), &spans, truck, p))
        });
    }
    g.finish();
}

fn routing(c: &mut Criterion) {
    let (inst, start) = instance_with_start(2, 100);
    let route = start.routes.iter().max_by_key(|r| r.shipments().len()).unwrap();
    let load = route.shipments();
    let truck = inst.truck(route.truck);
    c.bench_function("solve_route/largest_load", |b| {
        b.iter(|| solve_route(truck, black_box(&load), &inst, &RouteParams::default()))
    });
}

fn queues(c: &mut Criterion) {
    let (inst, start) = instance_with_start(3, 311);
    c.bench_function("simulate_queues/311", |b| {
        b.iter_batched(
            || start.routes.clone(),
            |mut routes| simulate_queues(&mut routes, &inst),
            criterion::BatchSize::SmallInput,
        )
    });
}

fn held_karp(c: &mut Criterion) {
    let mut g = c.benchmark_group("sequence_subroutes");
    for n in [4usize, 8, 12] {
        let size = n + 1;
        let distance: Vec<Vec<f64>> = (0..size)
            .map(|i| {
                (0..size)
                    .map(|j| if i == j { 0.0 } else { ((i * 31 + j * 17) % 23 + 1) as f64 })
                    .collect()
            })
            .collect();
        let travel_time = distance.iter().map(|r| r.iter().map(|&d| d as i64).collect()).collect();
        let m = TravelMatrices { distance, travel_time };
        let trips: Vec<_> = (1..=n).map(|k| (LocationId(k as u32), LocationId(((k % n) + 1) as u32))).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &trips, |b, t| {
            b.iter(|| sequence_subroutes(black_box(t), LocationId(0), &m))
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    let (inst, start) = instance_with_start(4, 50);
    g.bench_function("construct/50", |b| b.iter(|| initial_solution(black_box(&inst)).unwrap()));
    let params = TabuParams { budget: Budget::Iterations(20), ..TabuParams::default() };
    g.bench_function("tabu_20_iterations/50", |b| b.iter(|| tabu_search(&start, &inst, &params).unwrap()));
    g.bench_function("postopt/50", |b| b.iter(|| postoptimize(&start, &inst, &RouteParams::default())));
    g.finish();
}

criterion_group!(benches, packing, routing, queues, held_karp, pipeline);
criterion_main!(benches);
