//! Turning per-truck plans into a checked solution, and the full solve.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::construct::{initial_solution_with, ConstructParams};
use crate::error::Result;
use crate::loading::Placement;
use crate::model::{route_cost, validate_solution, Assignment, Feasibility, Instance, Route, Solution};
use crate::postopt::{postoptimize, PostoptReport};
use crate::route::RouteCache;
use crate::schedule::simulate_queues;
use crate::tabu::{tabu_search_with, ConvergenceRecord, TabuParams};

/// Runs the dock queues over all routes, fills in the assignment and the
/// mileage, and records which constraint families hold.
pub fn assemble(instance: &Instance, plans: Vec<(Route, Placement)>) -> Solution {
    let (mut routes, placements): (Vec<Route>, Vec<Placement>) = plans.into_iter().unzip();
    let report = simulate_queues(&mut routes, instance);
    let mut assignment = Assignment::unassigned(instance.shipments.len());
    for route in &routes {
        for s in route.shipments() {
            assignment.assign(s, route.truck);
        }
    }
    let total_mileage = routes
        .iter()
        .map(|r| route_cost(r, instance).unwrap_or(f64::INFINITY))
        .sum();
    let mut solution = Solution {
        assignment,
        routes,
        placements,
        total_mileage,
        feasibility: Feasibility::default(),
        diagnostics: Some(report),
    };
    solution.feasibility = Feasibility::from_violations(&validate_solution(&solution, instance));
    solution
}

/// Settings of a full solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub construct: ConstructParams,
    pub tabu: TabuParams,
    pub postopt: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        let tabu = TabuParams::default();
        Self {
            construct: ConstructParams {
                route: tabu.route,
                ..ConstructParams::default()
            },
            tabu,
            postopt: true,
        }
    }
}

/// The solution after each stage, with the search telemetry.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub initial: Solution,
    pub after_tabu: Solution,
    pub solution: Solution,
    pub convergence: Vec<ConvergenceRecord>,
    pub iterations: usize,
    pub postopt: PostoptReport,
    pub seconds: [f64; 3],
}

/// Construction, tabu search and (unless disabled) post-optimisation.
pub fn solve(instance: &Instance, params: &SolveParams) -> Result<SolveOutcome> {
    let cache = RouteCache::new();
    let t = Instant::now();
    let initial = initial_solution_with(instance, &params.construct, &cache)?;
    let construct_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let outcome = tabu_search_with(&initial, instance, &params.tabu, &cache)?;
    let tabu_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (solution, report) = if params.postopt {
        postoptimize(&outcome.solution, instance, &params.tabu.route)
    } else {
        (outcome.solution.clone(), PostoptReport::default())
    };
    Ok(SolveOutcome {
        initial,
        after_tabu: outcome.solution,
        solution,
        convergence: outcome.log,
        iterations: outcome.iterations,
        postopt: report,
        seconds: [construct_s, tabu_s, t.elapsed().as_secs_f64()],
    })
}
