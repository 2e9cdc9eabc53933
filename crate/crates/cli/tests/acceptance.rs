//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line. A shared lock runs them one at a time so the
//! wall-clock budgets of the search are not split between criteria.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vrp2l::construct::initial_solution;
use vrp2l::generate::{dock_fixture, generate_instance, generate_with_witness, GeneratorConfig};
use vrp2l::inject::{inject, Breach};
use vrp2l::loading::{pack, Column, PackParams, StopSpan};
use vrp2l::model::{route_cost, visit_limits_ok, Assignment, Feasibility, LocationId, Minutes, TravelMatrices};
use vrp2l::oracle::{exact_pack, exact_solve};
use vrp2l::postopt::{postoptimize, sequence_subroutes};
use vrp2l::route::{RouteCache, RouteParams};
use vrp2l::schedule::simulate_queues;
use vrp2l::tabu::Budget;
use vrp2l::{solve, validate_solution, Instance, Route, ShipmentId, Solution, SolveParams, Truck, TruckId};
use vrp2l_cli::bench::{grid24, median, run_bench};

static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    // Written to the raw stream so the line shows without `--nocapture`.
    let line = format!("criterion {n} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} {name} failed: {detail}");
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

// ---------------------------------------------------------------------------
// 1. Oracle equivalence

#[test]
fn c1_oracle_equivalence() {
    let _g = lock();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut cases, mut optimal, mut better, mut seed) = (0, 0, 0, 0u64);
    let mut misses = Vec::new();
    while cases < 200 {
        seed += 1;
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=3);
        let Ok(inst) = generate_instance(&GeneratorConfig::tiny(seed, n, m)) else { continue };
        // Instances whose loads exceed the oracle's column limit are out of scope.
        let Ok(opt) = exact_solve(&inst) else { continue };
        let opt = opt.expect("generated instances are feasible");
        cases += 1;
        let mut p = SolveParams::default();
        p.tabu.bundling = false;
        p.tabu.budget = Budget::Iterations(200);
        let out = solve(&inst, &p).expect("construction succeeds on generated instances");
        let (got, best) = (out.solution.total_mileage, opt.total_mileage);
        if got < best - 1e-6 {
            better += 1;
        } else if got <= best + 1e-6 {
            optimal += 1;
        } else {
            misses.push(seed);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let rate = optimal as f64 / cases as f64;
    verdict(
        1,
        "oracle equivalence",
        rate >= 0.95 && better == 0 && secs < 300.0,
        format!("{optimal}/{cases} optimal, {better} below the optimum, misses at seeds {misses:?}, {secs:.1} s"),
    );
}

// ---------------------------------------------------------------------------
// 2. Constraint soundness

/// Builds a solution from routes the solver considers feasible, labelling it
/// the way the search does: every route found by the route search, no late
/// truck in the queue simulation, visit limits respected.
fn labelled(
    instance: &Instance,
    loads: &BTreeMap<TruckId, Vec<ShipmentId>>,
    cache: &RouteCache,
) -> Option<Solution> {
    let params = RouteParams::default();
    let mut routes = Vec::new();
    let mut placements = Vec::new();
    for (&t, load) in loads {
        if load.is_empty() {
            continue;
        }
        let r = cache.solve(instance.truck(t), load, instance, &params);
        if !r.feasible {
            return None;
        }
        routes.push(r.route.clone()?);
        placements.push(r.placement.clone()?);
    }
    let report = simulate_queues(&mut routes, instance);
    if !report.feasible || !visit_limits_ok(&routes, instance) {
        return None;
    }
    let mut assignment = Assignment::unassigned(instance.shipments.len());
    for (&t, load) in loads {
        for &s in load {
            assignment.assign(s, t);
        }
    }
    let total_mileage = routes.iter().map(|r| route_cost(r, instance).unwrap()).sum();
    Some(Solution {
        assignment,
        routes,
        placements,
        total_mileage,
        feasibility: Feasibility::default(),
        diagnostics: Some(report),
    })
}

#[test]
fn c2_constraint_soundness() {
    let _g = lock();
    let started = Instant::now();
    let mut checked = 0usize;
    let mut violated = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bases: Vec<(Instance, Solution)> = Vec::new();
    let mut seed = 0u64;
    while checked < 10_000 {
        seed += 1;
        let mut config = GeneratorConfig::sized(seed, rng.gen_range(10..=30));
        config.n_hub_shipments = if seed % 3 == 0 { 2 } else { 0 };
        config.side_constraint_rate = 0.3;
        let Ok(g) = generate_with_witness(&config) else { continue };
        let inst = g.instance;
        let cache = RouteCache::new();
        let mut loads: BTreeMap<TruckId, Vec<ShipmentId>> = BTreeMap::new();
        for (r, _) in &g.witness {
            loads.insert(r.truck, r.shipments());
        }
        let trucks: Vec<TruckId> = inst.truck_ids().collect();
        let mut check = |sol: &Solution, checked: &mut usize| {
            *checked += 1;
            let v = validate_solution(sol, &inst);
            if !v.is_empty() {
                violated.push((seed, v));
            }
        };
        // Random walk over single-shipment moves; every state the solver
        // labels feasible is validated.
        for _ in 0..400 {
            let s = ShipmentId(rng.gen_range(0..inst.shipments.len()) as u32);
            let to = *trucks.choose(&mut rng).unwrap();
            let mut next = loads.clone();
            for load in next.values_mut() {
                load.retain(|&x| x != s);
            }
            next.entry(to).or_default().push(s);
            next.retain(|_, l| !l.is_empty());
            for l in next.values_mut() {
                l.sort_unstable();
            }
            if let Some(sol) = labelled(&inst, &next, &cache) {
                check(&sol, &mut checked);
                loads = next;
            }
        }
        if seed % 10 == 0 {
            if let Ok(start) = initial_solution(&inst) {
                if start.is_feasible() {
                    check(&start, &mut checked);
                }
                let (post, _) = postoptimize(&start, &inst, &RouteParams::default());
                if post.is_feasible() {
                    check(&post, &mut checked);
                }
                if bases.len() < 8 {
                    bases.push((inst.clone(), start));
                }
            }
        }
    }

    // One breach per constraint row, on every base where it applies. Larger
    // bases with hub shipments carry multi-supplier routes and hub pairs.
    for seed in 0..3 {
        let mut config = GeneratorConfig::sized(seed, 40);
        config.n_hub_shipments = 4;
        let g = generate_with_witness(&config).unwrap();
        let witness = vrp2l::pipeline::assemble(&g.instance, g.witness.clone());
        bases.push((g.instance.clone(), witness));
        bases.push((g.instance.clone(), initial_solution(&g.instance).unwrap()));
    }
    for (inst, sol) in &bases {
        assert!(validate_solution(sol, inst).is_empty(), "breach bases start clean");
    }
    let (inst, routes) = dock_fixture(3, 1, 10).unwrap();
    let plans = routes
        .iter()
        .map(|r| {
            let res = vrp2l::route::solve_route(inst.truck(r.truck), &r.shipments(), &inst, &RouteParams::default());
            (res.route.unwrap(), res.placement.unwrap())
        })
        .collect();
    let fixture = vrp2l::pipeline::assemble(&inst, plans);
    bases.push((inst, fixture));
    let mut missed = Vec::new();
    let mut never_applied = Vec::new();
    let mut injected = 0;
    for breach in Breach::ALL {
        let mut applied = false;
        for (inst, sol) in &bases {
            let Some((bad_inst, bad_sol)) = inject(breach, inst, sol) else { continue };
            applied = true;
            injected += 1;
            if !validate_solution(&bad_sol, &bad_inst).iter().any(|v| v.family == breach.family()) {
                missed.push(breach);
            }
        }
        if !applied {
            never_applied.push(breach);
        }
    }
    verdict(
        2,
        "constraint soundness",
        violated.is_empty() && missed.is_empty() && never_applied.is_empty(),
        format!(
            "{checked} feasible-labelled solutions, {} with violations; {injected} injected breaches over {} rows, missed {missed:?}, inapplicable {never_applied:?}; {:.1} s",
            violated.len(),
            Breach::ALL.len(),
            started.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Packing correctness

fn random_pack_case(rng: &mut ChaCha8Rng) -> (Vec<Column>, Vec<StopSpan>, Truck) {
    let sizes = [0.5, 1.0, 1.0, 1.5, 2.0];
    let n = rng.gen_range(1..=5);
    let cols = (0..n)
        .map(|k| Column {
            shipment: ShipmentId(k),
            width: sizes[rng.gen_range(0..sizes.len())],
            length: sizes[rng.gen_range(0..sizes.len())],
            layers: 1,
            on_pallet: false,
            pallets: Vec::new(),
        })
        .collect();
    let spans = (0..n)
        .map(|_| {
            let p = rng.gen_range(1..4);
            StopSpan::new(p, rng.gen_range(p + 1..=5))
        })
        .collect();
    let truck = Truck {
        id: TruckId(0),
        model: "t".into(),
        surface_width: [2.0, 2.5, 3.0][rng.gen_range(0..3)],
        surface_length: [2.0, 3.0, 4.0][rng.gen_range(0..3)],
        length_class: "x".into(),
        cost_per_distance: 1.0,
        home_yard: LocationId(0),
    };
    (cols, spans, truck)
}

#[test]
fn c3_packing_correctness() {
    let _g = lock();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let full = PackParams {
        beam_width: PackParams::FULL_WIDTH,
        ..PackParams::default()
    };
    let (mut agree, mut false_pos, mut feasible) = (0, 0, 0);
    for _ in 0..1000 {
        let (cols, spans, truck) = random_pack_case(&mut rng);
        let truth = exact_pack(&cols, &truck, &spans).unwrap();
        feasible += truth as usize;
        agree += (pack(&cols, &truck, &spans, &full).feasible == truth) as usize;
        false_pos += (pack(&cols, &truck, &spans, &PackParams::default()).feasible && !truth) as usize;
    }
    verdict(
        3,
        "packing correctness",
        agree == 1000 && false_pos == 0,
        format!("{agree}/1000 agree at full width, {false_pos} false positives at width 5, {feasible} feasible cases"),
    );
}

// ---------------------------------------------------------------------------
// 4. Queue simulation

/// Largest number of services overlapping at any instant, per location.
fn peak_occupancy(routes: &[Route], instance: &Instance) -> BTreeMap<LocationId, i64> {
    let mut intervals: BTreeMap<LocationId, Vec<(Minutes, Minutes)>> = BTreeMap::new();
    for r in routes {
        for st in &r.stops[1..r.stops.len() - 1] {
            let start = st.arrival + st.wait;
            let h = instance.location(st.location).handling_time;
            if h > 0 {
                intervals.entry(st.location).or_default().push((start, start + h));
            }
        }
    }
    intervals
        .into_iter()
        .map(|(loc, iv)| {
            // Check every start instant against every interval.
            let peak = iv
                .iter()
                .map(|&(t, _)| iv.iter().filter(|&&(a, b)| a <= t && t < b).count() as i64)
                .max()
                .unwrap_or(0);
            (loc, peak)
        })
        .collect()
}

#[test]
fn c4_queue_simulation() {
    let _g = lock();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut fixtures, mut over, mut seed) = (0, 0, 0u64);
    while fixtures < 500 {
        seed += 1;
        let mut config = GeneratorConfig::sized(seed, rng.gen_range(8..=30));
        config.side_constraint_rate = 0.0;
        let Ok(g) = generate_with_witness(&config) else { continue };
        let mut inst = g.instance;
        for loc in &mut inst.locations {
            loc.dock_count = rng.gen_range(1..=2);
        }
        let mut routes: Vec<Route> = g.witness.iter().map(|(r, _)| r.clone()).collect();
        if routes.len() < 2 {
            continue;
        }
        fixtures += 1;
        simulate_queues(&mut routes, &inst);
        for (loc, peak) in peak_occupancy(&routes, &inst) {
            if peak > i64::from(inst.location(loc).dock_count) {
                over += 1;
            }
        }
    }
    let (inst, mut routes) = dock_fixture(3, 1, 10).unwrap();
    simulate_queues(&mut routes, &inst);
    let starts: Vec<Minutes> = routes.iter().map(|r| r.stops[1].arrival + r.stops[1].wait).collect();
    verdict(
        4,
        "queue simulation",
        over == 0 && starts == [0, 10, 20],
        format!("{over} over-capacity locations in {fixtures} fixtures; one-dock starts {starts:?}"),
    );
}

// ---------------------------------------------------------------------------
// 5. Bundling trend

#[test]
fn c5_bundling_trend() {
    let _g = lock();
    let (mut init, mut wb, mut nb) = (Vec::new(), Vec::new(), Vec::new());
    let mut lines = Vec::new();
    for seed in 1..=5 {
        let inst = generate_instance(&GeneratorConfig::sized(seed, 100)).unwrap();
        let mut finals = [0.0; 2];
        for (k, bundling) in [true, false].into_iter().enumerate() {
            let mut p = SolveParams::default();
            p.tabu.budget = Budget::Seconds(120.0);
            p.tabu.bundling = bundling;
            let out = solve(&inst, &p).unwrap();
            assert!(out.solution.is_feasible());
            if k == 0 {
                init.push(out.initial.total_mileage);
            }
            finals[k] = out.solution.total_mileage;
        }
        wb.push(finals[0]);
        nb.push(finals[1]);
        lines.push(format!("seed {seed}: init {:.1} wb {:.1} nb {:.1}", init.last().unwrap(), finals[0], finals[1]));
    }
    let (mi, mw, mn) = (median(&init).unwrap(), median(&wb).unwrap(), median(&nb).unwrap());
    verdict(
        5,
        "bundling trend",
        mw < mn && mw < mi && mn < mi,
        format!(
            "median init {mi:.1}, wb {mw:.1} ({:.1}% below), nb {mn:.1} ({:.1}% below); {}",
            100.0 * (mi - mw) / mi,
            100.0 * (mi - mn) / mi,
            lines.join("; ")
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Post-optimisation

#[test]
fn c6_postopt_monotone_and_idempotent() {
    let _g = lock();
    let params = RouteParams::default();
    let (mut raised, mut unstable, mut infeasible, mut seed, mut cases) = (0, 0, 0, 0u64, 0);
    let mut saved = 0.0;
    while cases < 100 {
        seed += 1;
        let Ok(inst) = generate_instance(&GeneratorConfig::sized(seed, 15 + (seed as usize * 7) % 50)) else {
            continue;
        };
        let Ok(x) = initial_solution(&inst) else { continue };
        cases += 1;
        let (y, _) = postoptimize(&x, &inst, &params);
        let (z, _) = postoptimize(&y, &inst, &params);
        raised += (y.total_mileage > x.total_mileage + 1e-9) as usize;
        unstable += (z != y) as usize;
        infeasible += !validate_solution(&y, &inst).is_empty() as usize;
        saved += x.total_mileage - y.total_mileage;
    }
    verdict(
        6,
        "post-opt monotone and idempotent",
        raised == 0 && unstable == 0 && infeasible == 0,
        format!("{cases} solutions: {raised} raised, {unstable} changed on a second pass, {infeasible} infeasible; {saved:.1} mileage saved in total"),
    );
}

// ---------------------------------------------------------------------------
// 7. Held-Karp exactness

fn chain(order: &[usize], ends: &[(LocationId, LocationId)], d: &[Vec<f64>]) -> f64 {
    let mut at = 0;
    let mut total = 0.0;
    for &k in order {
        total += d[at][ends[k].0.index()];
        at = ends[k].1.index();
    }
    total + d[at][0]
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else { return false };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[test]
fn c7_held_karp_exactness() {
    let _g = lock();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for case in 0..500 {
        let n = 1 + case % 8;
        let size = 2 * n + 1;
        let d: Vec<Vec<f64>> = (0..size)
            .map(|i| (0..size).map(|j| if i == j { 0.0 } else { rng.gen_range(1.0..100.0) }).collect())
            .collect();
        let travel = TravelMatrices {
            travel_time: d.iter().map(|r| r.iter().map(|x| x.ceil() as Minutes).collect()).collect(),
            distance: d.clone(),
        };
        let ends: Vec<(LocationId, LocationId)> =
            (0..n).map(|k| (LocationId(2 * k as u32 + 1), LocationId(2 * k as u32 + 2))).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        loop {
            best = best.min(chain(&perm, &ends, &d));
            if !next_permutation(&mut perm) {
                break;
            }
        }
        let got = sequence_subroutes(&ends, LocationId(0), &travel);
        if !got.exact || (got.connection - best).abs() > 1e-9 || (chain(&got.order, &ends, &d) - best).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    verdict(7, "Held-Karp exactness", mismatches == 0, format!("{mismatches}/500 mismatches"));
}

// ---------------------------------------------------------------------------
// 8. Robustness

#[test]
fn c8_robustness() {
    let _g = lock();
    let started = Instant::now();
    let inst = generate_instance(&GeneratorConfig::sized(8, 50)).unwrap();
    let mut base = SolveParams::default();
    base.tabu.budget = Budget::Seconds(20.0);
    let report = run_bench(&[(8, inst)], &grid24(&base), 1, None).unwrap();
    let failures = report.runs.iter().filter(|r| r.final_mileage.is_none()).count();
    let inits: Vec<f64> = report.runs.iter().filter_map(|r| r.initial).collect();
    let init = median(&inits).unwrap_or(f64::NAN);
    let spread = report.spread().unwrap_or(f64::INFINITY);
    let secs = started.elapsed().as_secs_f64();
    verdict(
        8,
        "robustness",
        report.runs.len() == 24 && failures == 0 && spread < 0.25 * init && secs < 1800.0,
        format!(
            "{} runs, {failures} failed, spread {spread:.1} = {:.1}% of initial mileage {init:.1}, {secs:.0} s",
            report.runs.len(),
            100.0 * spread / init
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Scale

#[test]
fn c9_scale() {
    let _g = lock();
    let inst = generate_instance(&GeneratorConfig::paper_scale(9)).unwrap();
    let t = Instant::now();
    let mut p = SolveParams::default();
    p.tabu.budget = Budget::Seconds(60.0);
    let out = solve(&inst, &p);
    let paper_secs = t.elapsed().as_secs_f64();
    let paper_ok = out.as_ref().is_ok_and(|o| o.solution.is_feasible());

    let big = generate_instance(&GeneratorConfig::sized(9, 2000)).unwrap();
    let t = Instant::now();
    let built = initial_solution(&big);
    let big_secs = t.elapsed().as_secs_f64();
    let big_ok = built.as_ref().is_ok_and(Solution::is_feasible);
    verdict(
        9,
        "scale",
        paper_ok && paper_secs < 300.0 && big_ok && big_secs < 900.0,
        format!(
            "311 shipments: {} in {paper_secs:.0} s; 2000 shipments: construction {} in {big_secs:.0} s",
            if paper_ok { "feasible" } else { "failed" },
            if big_ok { "feasible" } else { "failed" }
        ),
    );
}
