//! Tabu search over bundle moves.
//!
//! Shipments sharing a supplier and a warehouse form a bundle. A move takes
//! the members of one bundle that ride on one truck and puts them on
//! another truck. Each iteration evaluates every non-tabu move, re-solving
//! the routes of the two trucks involved (results are cached), and steps to
//! the cheapest candidate that keeps every route on time, even when it is
//! worse than the current solution. For `tenure` iterations the moved
//! bundle may not go back to the truck it left, unless that would improve
//! the best solution.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loading::build_columns;
use crate::model::{
    visit_limits_ok, Assignment, Instance, LocationId, Route, ShipmentId, Solution, TruckId, EPS,
};
use crate::pipeline::assemble;
use crate::route::{RouteCache, RouteParams, RouteResult};
use crate::schedule::simulate_queues;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub id: usize,
    pub source: LocationId,
    pub destination: LocationId,
    pub shipments: Vec<ShipmentId>,
}

/// Groups shipments by (source, destination), ordered by that pair. With a
/// `threshold`, larger groups are cut into `⌈size / threshold⌉` bundles of
/// near-equal size.
pub fn bundle_shipments(instance: &Instance, threshold: Option<usize>) -> Vec<Bundle> {
    let mut groups: BTreeMap<(LocationId, LocationId), Vec<ShipmentId>> = BTreeMap::new();
    for s in &instance.shipments {
        groups.entry((s.source, s.destination)).or_default().push(s.id);
    }
    let mut out = Vec::new();
    for ((source, destination), list) in groups {
        let parts = match threshold {
            Some(b) if b > 0 && list.len() > b => list.len().div_ceil(b),
            _ => 1,
        };
        let base = list.len() / parts;
        let extra = list.len() % parts;
        let mut rest = &list[..];
        for k in 0..parts {
            let take = base + usize::from(k < extra);
            let (head, tail) = rest.split_at(take);
            out.push(Bundle {
                id: out.len(),
                source,
                destination,
                shipments: head.to_vec(),
            });
            rest = tail;
        }
    }
    out
}

/// One bundle per shipment: the search without bundling.
pub fn singleton_bundles(instance: &Instance) -> Vec<Bundle> {
    instance
        .shipments
        .iter()
        .map(|s| Bundle {
            id: s.id.index(),
            source: s.source,
            destination: s.destination,
            shipments: vec![s.id],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Move {
    pub bundle: usize,
    pub from: TruckId,
    pub to: TruckId,
}

impl Move {
    pub fn reverse(self) -> Self {
        Self {
            bundle: self.bundle,
            from: self.to,
            to: self.from,
        }
    }
}

/// Forbidden moves with the iteration at which they expire.
#[derive(Debug, Clone, Default)]
pub struct TabuList {
    entries: VecDeque<(Move, usize)>,
}

impl TabuList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forbids `m` up to and including iteration `until`.
    pub fn insert(&mut self, m: Move, until: usize) {
        self.entries.retain(|(e, _)| *e != m);
        self.entries.push_back((m, until));
    }

    /// Whether `m` is forbidden at `iteration`. An entry forbids its move
    /// and every other move bringing the same bundle to the same truck, so
    /// a bundle cannot return to a truck it left by a detour.
    pub fn contains(&self, m: &Move, iteration: usize) -> bool {
        self.entries
            .iter()
            .any(|(e, until)| e.bundle == m.bundle && e.to == m.to && iteration <= *until)
    }

    /// Drops entries that expired before `iteration`.
    pub fn expire(&mut self, iteration: usize) {
        self.entries.retain(|(_, until)| iteration <= *until);
    }

    pub fn evict_oldest(&mut self) -> Option<Move> {
        self.entries.pop_front().map(|(m, _)| m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Seconds(f64),
    Iterations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabuParams {
    pub budget: Budget,
    /// Defaults to `⌈√bundles⌉`.
    pub tenure: Option<usize>,
    pub bundle_threshold: Option<usize>,
    /// False moves shipments one by one.
    pub bundling: bool,
    /// Skip target trucks whose load would cover more floor than the area
    /// filter allows even before routing.
    pub area_filter: bool,
    pub route: RouteParams,
}

impl Default for TabuParams {
    fn default() -> Self {
        Self {
            budget: Budget::Seconds(60.0),
            tenure: None,
            bundle_threshold: None,
            bundling: true,
            area_filter: true,
            route: RouteParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    pub elapsed_seconds: f64,
    pub current: f64,
    pub best: f64,
}

#[derive(Debug, Clone)]
pub struct TabuOutcome {
    pub solution: Solution,
    pub log: Vec<ConvergenceRecord>,
    pub iterations: usize,
    /// Iterations where every admissible move was tabu and the oldest entry
    /// had to be released.
    pub evictions: usize,
}

/// Shared state for move evaluation.
pub struct EvalContext<'a> {
    pub instance: &'a Instance,
    pub bundles: &'a [Bundle],
    pub cache: &'a RouteCache,
    pub params: RouteParams,
    column_area: Vec<f64>,
    area_filter: bool,
}

impl<'a> EvalContext<'a> {
    pub fn new(instance: &'a Instance, bundles: &'a [Bundle], cache: &'a RouteCache, params: RouteParams) -> Self {
        let column_area = instance
            .shipments
            .iter()
            .map(|s| {
                build_columns(s, &instance.pallet)
                    .map(|c| c.iter().map(|c| c.area()).sum())
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        Self {
            instance,
            bundles,
            cache,
            params,
            column_area,
            area_filter: false,
        }
    }

    fn solve(&self, truck: TruckId, load: &[ShipmentId]) -> Arc<RouteResult> {
        if self.area_filter && !load.is_empty() {
            let covered: f64 = load.iter().map(|s| self.column_area[s.index()]).sum();
            if covered > self.params.pack.threshold * self.instance.truck(truck).surface_area() + EPS {
                return Arc::new(RouteResult {
                    feasible: false,
                    route: None,
                    placement: None,
                    mileage: f64::INFINITY,
                    truncated: false,
                    nodes: 0,
                });
            }
        }
        if load.is_empty() {
            return Arc::new(RouteResult {
                feasible: true,
                route: None,
                placement: None,
                mileage: 0.0,
                truncated: false,
                nodes: 0,
            });
        }
        self.cache.solve(self.instance.truck(truck), load, self.instance, &self.params)
    }
}

/// Result of one move.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mv: Move,
    pub mileage: f64,
    pub feasible: bool,
}

/// Loads and routes per used truck.
#[derive(Clone)]
struct State {
    loads: BTreeMap<TruckId, Vec<ShipmentId>>,
    results: BTreeMap<TruckId, Arc<RouteResult>>,
    mileage: f64,
}

impl State {
    fn from_assignment(x: &Assignment, ctx: &EvalContext) -> Self {
        let loads = x.by_truck();
        let results: BTreeMap<TruckId, Arc<RouteResult>> =
            loads.iter().map(|(&t, l)| (t, ctx.solve(t, l))).collect();
        let mileage = results.values().map(|r| r.mileage).sum();
        Self {
            loads,
            results,
            mileage,
        }
    }

    fn moved_members(&self, bundle: &Bundle, from: TruckId) -> Vec<ShipmentId> {
        let on = &self.loads[&from];
        bundle
            .shipments
            .iter()
            .copied()
            .filter(|s| on.contains(s))
            .collect()
    }

    /// New loads of `from` and `to` after `m`.
    fn loads_after(&self, bundle: &Bundle, m: &Move) -> (Vec<ShipmentId>, Vec<ShipmentId>) {
        let members = self.moved_members(bundle, m.from);
        let from: Vec<ShipmentId> = self.loads[&m.from]
            .iter()
            .copied()
            .filter(|s| !members.contains(s))
            .collect();
        let mut to = self.loads.get(&m.to).cloned().unwrap_or_default();
        to.extend(members);
        to.sort_unstable();
        (from, to)
    }

    /// Mileage after `m` and the two new route results, without the queue
    /// check.
    fn price(&self, m: &Move, ctx: &EvalContext) -> (f64, Arc<RouteResult>, Arc<RouteResult>) {
        let bundle = &ctx.bundles[m.bundle];
        let (from, to) = self.loads_after(bundle, m);
        let rf = ctx.solve(m.from, &from);
        let rt = ctx.solve(m.to, &to);
        if !rf.feasible || !rt.feasible {
            return (f64::INFINITY, rf, rt);
        }
        let old = self.results[&m.from].mileage + self.results.get(&m.to).map_or(0.0, |r| r.mileage);
        (self.mileage - old + rf.mileage + rt.mileage, rf, rt)
    }

    fn routes_with(&self, m: &Move, rf: &RouteResult, rt: &RouteResult) -> Vec<Route> {
        let mut routes = Vec::with_capacity(self.results.len() + 1);
        for (&t, r) in &self.results {
            if t == m.from || t == m.to {
                continue;
            }
            routes.extend(r.route.clone());
        }
        routes.extend(rf.route.clone());
        routes.extend(rt.route.clone());
        routes
    }

    /// Queue simulation and visit limits over all routes after `m`.
    fn on_time(&self, m: &Move, rf: &RouteResult, rt: &RouteResult, instance: &Instance) -> bool {
        let mut routes = self.routes_with(m, rf, rt);
        visit_limits_ok(&routes, instance) && simulate_queues(&mut routes, instance).feasible
    }

    fn apply(&mut self, m: &Move, ctx: &EvalContext, mileage: f64, rf: Arc<RouteResult>, rt: Arc<RouteResult>) {
        let bundle = &ctx.bundles[m.bundle];
        let (from, to) = self.loads_after(bundle, m);
        if from.is_empty() {
            self.loads.remove(&m.from);
            self.results.remove(&m.from);
        } else {
            self.loads.insert(m.from, from);
            self.results.insert(m.from, rf);
        }
        self.loads.insert(m.to, to);
        self.results.insert(m.to, rt);
        self.mileage = mileage;
    }

    fn assignment(&self, n: usize) -> Assignment {
        let mut x = Assignment::unassigned(n);
        for (&t, load) in &self.loads {
            for &s in load {
                x.assign(s, t);
            }
        }
        x
    }

    fn solution(&self, instance: &Instance) -> Solution {
        let plans = self
            .results
            .values()
            .map(|r| (r.route.clone().unwrap(), r.placement.clone().unwrap()))
            .collect();
        assemble(instance, plans)
    }
}

/// Applies `m` to `x`, re-solves the two trucks involved and checks the
/// queues over the whole route set. `x` is left untouched; infeasible
/// candidates carry infinite mileage.
pub fn evaluate_move(x: &Assignment, m: &Move, ctx: &EvalContext) -> Candidate {
    let state = State::from_assignment(x, ctx);
    let infeasible = Candidate {
        mv: *m,
        mileage: f64::INFINITY,
        feasible: false,
    };
    if m.from == m.to
        || !state.loads.contains_key(&m.from)
        || state.moved_members(&ctx.bundles[m.bundle], m.from).is_empty()
    {
        return infeasible;
    }
    let (mileage, rf, rt) = state.price(m, ctx);
    if !mileage.is_finite() || !state.on_time(m, &rf, &rt, ctx.instance) {
        return infeasible;
    }
    Candidate {
        mv: *m,
        mileage,
        feasible: true,
    }
}

/// Source city of a truck's load, if any.
fn load_city<'a>(instance: &'a Instance, load: &[ShipmentId]) -> Option<&'a str> {
    load.first()
        .map(|&s| instance.location(instance.shipment(s).source).city.as_str())
}

/// Unused trucks that differ in anything that matters to routing; one
/// representative (lowest id) per kind.
fn idle_representatives(instance: &Instance, used: &BTreeMap<TruckId, Vec<ShipmentId>>) -> Vec<TruckId> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in &instance.trucks {
        if used.contains_key(&t.id) {
            continue;
        }
        if seen.insert(t.kind_key()) {
            out.push(t.id);
        }
    }
    out
}

fn neighbourhood(state: &State, ctx: &EvalContext) -> Vec<Move> {
    let instance = ctx.instance;
    let mut where_is: Vec<Option<TruckId>> = vec![None; instance.shipments.len()];
    for (&t, load) in &state.loads {
        for &s in load {
            where_is[s.index()] = Some(t);
        }
    }
    let idle = idle_representatives(instance, &state.loads);
    let mut moves = Vec::new();
    for bundle in ctx.bundles {
        let city = instance.location(bundle.source).city.as_str();
        let froms: BTreeSet<TruckId> = bundle
            .shipments
            .iter()
            .filter_map(|s| where_is[s.index()])
            .collect();
        for &from in &froms {
            for (&to, load) in &state.loads {
                if to != from && load_city(instance, load) == Some(city) {
                    moves.push(Move { bundle: bundle.id, from, to });
                }
            }
            // Moving a truck's whole load to an identical idle truck only
            // renames the truck.
            let whole = bundle
                .shipments
                .iter()
                .filter(|s| where_is[s.index()] == Some(from))
                .count()
                == state.loads[&from].len();
            let kind = instance.truck(from).kind_key();
            for &to in &idle {
                if whole && instance.truck(to).kind_key() == kind {
                    continue;
                }
                moves.push(Move { bundle: bundle.id, from, to });
            }
        }
    }
    moves
}

/// Runs the search from a feasible solution and returns the best solution
/// met. The input is returned unchanged when the budget allows no
/// iteration.
pub fn tabu_search(x0: &Solution, instance: &Instance, params: &TabuParams) -> Result<TabuOutcome> {
    tabu_search_with(x0, instance, params, &RouteCache::new())
}

pub fn tabu_search_with(
    x0: &Solution,
    instance: &Instance,
    params: &TabuParams,
    cache: &RouteCache,
) -> Result<TabuOutcome> {
    if !x0.is_feasible() || !x0.assignment.is_total() {
        return Err(Error::InfeasibleStart(
            "tabu search needs a complete feasible solution".into(),
        ));
    }
    let started = Instant::now();
    let deadline = match params.budget {
        Budget::Seconds(s) => Some(started + Duration::from_secs_f64(s.max(0.0))),
        Budget::Iterations(_) => None,
    };
    let max_iterations = match params.budget {
        Budget::Iterations(n) => n,
        Budget::Seconds(_) => usize::MAX,
    };
    let out_of_time = || deadline.is_some_and(|d| Instant::now() >= d);

    let bundles = if params.bundling {
        bundle_shipments(instance, params.bundle_threshold)
    } else {
        singleton_bundles(instance)
    };
    let tenure = params
        .tenure
        .unwrap_or_else(|| (bundles.len() as f64).sqrt().ceil() as usize)
        .max(1);
    let mut ctx = EvalContext::new(instance, &bundles, cache, params.route);
    ctx.area_filter = params.area_filter;

    // Start from the routes of `x0` so the reported best matches it exactly
    // when no improving step exists.
    let mut current = State::from_assignment(&x0.assignment, &ctx);
    if current.results.values().any(|r| !r.feasible) {
        // The route search cannot reproduce a route of x0 (for instance a
        // truncated search); fall back to x0's own routes.
        let mut results = BTreeMap::new();
        for (route, placement) in x0.routes.iter().zip(&x0.placements) {
            results.insert(
                route.truck,
                Arc::new(RouteResult {
                    feasible: true,
                    mileage: crate::model::route_cost(route, instance)?,
                    route: Some(route.clone()),
                    placement: Some(placement.clone()),
                    truncated: false,
                    nodes: 0,
                }),
            );
        }
        current.results = results;
        current.mileage = current.results.values().map(|r| r.mileage).sum();
    }
    let mut best = current.clone();
    let mut improved = false;
    let mut tabu = TabuList::new();
    let mut log = vec![ConvergenceRecord {
        iteration: 0,
        elapsed_seconds: 0.0,
        current: current.mileage,
        best: best.mileage,
    }];
    let mut evictions = 0;
    let mut iteration = 0;

    while iteration < max_iterations && !out_of_time() {
        iteration += 1;
        tabu.expire(iteration);
        let moves = neighbourhood(&current, &ctx);
        let mut priced: Vec<(f64, Move, Arc<RouteResult>, Arc<RouteResult>)> = moves
            .par_iter()
            .filter_map(|m| {
                if out_of_time() {
                    return None;
                }
                let (mileage, rf, rt) = current.price(m, &ctx);
                mileage.is_finite().then_some((mileage, *m, rf, rt))
            })
            .collect();
        if out_of_time() {
            iteration -= 1;
            break;
        }
        priced.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut chosen = None;
        loop {
            for (mileage, m, rf, rt) in &priced {
                let aspiration = *mileage < best.mileage - EPS;
                if tabu.contains(m, iteration) && !aspiration {
                    continue;
                }
                if current.on_time(m, rf, rt, instance) {
                    chosen = Some((*mileage, *m, Arc::clone(rf), Arc::clone(rt)));
                    break;
                }
            }
            if chosen.is_some() || tabu.evict_oldest().is_none() {
                break;
            }
            evictions += 1;
        }
        let Some((mileage, m, rf, rt)) = chosen else {
            // No feasible neighbour at all.
            break;
        };
        current.apply(&m, &ctx, mileage, rf, rt);
        tabu.insert(m.reverse(), iteration + tenure);
        if current.mileage <= best.mileage + EPS {
            best = current.clone();
            improved = true;
        }
        log.push(ConvergenceRecord {
            iteration,
            elapsed_seconds: started.elapsed().as_secs_f64(),
            current: current.mileage,
            best: best.mileage,
        });
    }

    let solution = if improved && best.assignment(instance.shipments.len()) != x0.assignment {
        best.solution(instance)
    } else {
        x0.clone()
    };
    debug_assert!(solution.is_feasible());
    Ok(TabuOutcome {
        solution,
        log,
        iterations: iteration,
        evictions,
    })
}
