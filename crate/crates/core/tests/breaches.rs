use vrp2l::construct::initial_solution;
use vrp2l::generate::{dock_fixture, generate_with_witness, GeneratorConfig};
use vrp2l::inject::{inject, Breach};
use vrp2l::model::{validate_solution, Instance, Solution};
use vrp2l::pipeline::assemble;

fn bases() -> Vec<(Instance, Solution)> {
    let mut out = Vec::new();
    for seed in 0..3 {
        let mut config = GeneratorConfig::sized(seed, 40);
        config.n_hub_shipments = 4;
        let g = generate_with_witness(&config).unwrap();
        let witness = assemble(&g.instance, g.witness.clone());
        out.push((g.instance.clone(), witness));
        out.push((g.instance.clone(), initial_solution(&g.instance).unwrap()));
    }
    let (inst, routes) = dock_fixture(3, 1, 10).unwrap();
    let plans = routes
        .iter()
        .map(|r| {
            let shipments = r.shipments();
            let res = vrp2l::route::solve_route(inst.truck(r.truck), &shipments, &inst, &Default::default());
            (res.route.unwrap(), res.placement.unwrap())
        })
        .collect();
    let sol = assemble(&inst, plans);
    out.push((inst, sol));
    out
}

#[test]
fn every_breach_is_reported_under_its_family() {
    let bases = bases();
    for (inst, sol) in &bases {
        assert!(validate_solution(sol, inst).is_empty());
    }
    for breach in Breach::ALL {
        let mut applied = 0;
        for (inst, sol) in &bases {
            let Some((bad_inst, bad_sol)) = inject(breach, inst, sol) else { continue };
            applied += 1;
            let found = validate_solution(&bad_sol, &bad_inst);
            assert!(
                found.iter().any(|v| v.family == breach.family()),
                "{breach:?} not reported as {}: {found:?}",
                breach.family()
            );
        }
        assert!(applied > 0, "{breach:?} never applicable");
    }
}
