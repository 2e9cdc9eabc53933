//! Post-optimisation: smaller trucks, merged multi-trip tours and the order
//! of the trips inside a tour.
//!
//! A route splits into trips at every point where the truck drives on
//! empty. Merging two routes chains their trips on one truck without going
//! back to the yard in between; the trip order is the shortest chain found
//! by [`sequence_subroutes`]. Every change must keep all families feasible
//! and may not raise the total mileage.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::loading::Placement;
use crate::model::{
    route_cost, visit_limits_ok, Instance, LocationId, Minutes, Route, Solution, TravelMatrices,
    TruckId, EPS,
};
use crate::pipeline::assemble;
use crate::route::{evaluate_fixed_route, solve_route, RouteParams, RouteResult, StopPlan};
use crate::schedule::simulate_queues;

/// Largest trip count ordered exactly.
pub const HELD_KARP_CAP: usize = 15;

/// Trip order chosen for a tour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequencing {
    pub order: Vec<usize>,
    /// Yard to first trip, between trips, and last trip back to the yard.
    pub connection: f64,
    /// False when the heuristic fallback was used.
    pub exact: bool,
}

fn chain_cost(order: &[usize], ends: &[(LocationId, LocationId)], yard: LocationId, d: &TravelMatrices) -> f64 {
    let dist = |a: LocationId, b: LocationId| d.distance[a.index()][b.index()];
    let mut at = yard;
    let mut total = 0.0;
    for &k in order {
        total += dist(at, ends[k].0);
        at = ends[k].1;
    }
    total + dist(at, yard)
}

/// Orders trips given their `(first stop, last stop)` so that the distance
/// driven between them, from and back to `yard`, is smallest. Exact by
/// dynamic programming over subsets up to [`HELD_KARP_CAP`] trips; beyond
/// that, nearest neighbour followed by pairwise exchanges.
pub fn sequence_subroutes(
    subroutes: &[(LocationId, LocationId)],
    yard: LocationId,
    travel: &TravelMatrices,
) -> Sequencing {
    let n = subroutes.len();
    if n == 0 {
        return Sequencing {
            order: Vec::new(),
            connection: 0.0,
            exact: true,
        };
    }
    let dist = |a: LocationId, b: LocationId| travel.distance[a.index()][b.index()];
    if n > HELD_KARP_CAP {
        let order = nearest_neighbour_exchange(subroutes, yard, travel);
        return Sequencing {
            connection: chain_cost(&order, subroutes, yard, travel),
            order,
            exact: false,
        };
    }

    // cost[mask][last]: cheapest chain from the yard through `mask` ending
    // with trip `last`.
    let full = (1usize << n) - 1;
    let mut cost = vec![vec![f64::INFINITY; n]; full + 1];
    let mut parent = vec![vec![usize::MAX; n]; full + 1];
    for k in 0..n {
        cost[1 << k][k] = dist(yard, subroutes[k].0);
    }
    for mask in 1..=full {
        for last in 0..n {
            let c = cost[mask][last];
            if mask & (1 << last) == 0 || !c.is_finite() {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let m2 = mask | (1 << next);
                let c2 = c + dist(subroutes[last].1, subroutes[next].0);
                if c2 < cost[m2][next] - EPS {
                    cost[m2][next] = c2;
                    parent[m2][next] = last;
                }
            }
        }
    }
    let mut best = (f64::INFINITY, 0);
    for last in 0..n {
        let c = cost[full][last] + dist(subroutes[last].1, yard);
        if c < best.0 - EPS {
            best = (c, last);
        }
    }
    let mut order = Vec::with_capacity(n);
    let (mut mask, mut last) = (full, best.1);
    while last != usize::MAX {
        order.push(last);
        let p = parent[mask][last];
        mask &= !(1 << last);
        last = p;
    }
    order.reverse();
    Sequencing {
        order,
        connection: best.0,
        exact: true,
    }
}

fn nearest_neighbour_exchange(
    subroutes: &[(LocationId, LocationId)],
    yard: LocationId,
    travel: &TravelMatrices,
) -> Vec<usize> {
    let dist = |a: LocationId, b: LocationId| travel.distance[a.index()][b.index()];
    let n = subroutes.len();
    let mut left: BTreeSet<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut at = yard;
    while !left.is_empty() {
        let next = *left
            .iter()
            .min_by(|&&a, &&b| dist(at, subroutes[a].0).total_cmp(&dist(at, subroutes[b].0)))
            .unwrap();
        left.remove(&next);
        order.push(next);
        at = subroutes[next].1;
    }
    let mut cost = chain_cost(&order, subroutes, yard, travel);
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n {
            for j in i + 1..n {
                order.swap(i, j);
                let c = chain_cost(&order, subroutes, yard, travel);
                if c < cost - EPS {
                    cost = c;
                    improved = true;
                } else {
                    order.swap(i, j);
                }
            }
        }
    }
    order
}

/// Splits the inner stops of a route into trips.
pub fn split_trips(route: &Route) -> Vec<Vec<StopPlan>> {
    let n = route.stops.len();
    let mut trips = Vec::new();
    let mut current = Vec::new();
    let mut onboard = 0usize;
    for stop in route.stops.iter().take(n.saturating_sub(1)).skip(1) {
        onboard = onboard.saturating_sub(stop.deliveries.len()) + stop.pickups.len();
        current.push(StopPlan::of(stop));
        if onboard == 0 {
            trips.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        trips.push(current);
    }
    trips
}

/// A truck running several trips back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedTour {
    pub truck: TruckId,
    /// Trips in driving order, yard excluded.
    pub subroutes: Vec<Vec<LocationId>>,
    /// Minutes from leaving the yard to returning.
    pub duration: Minutes,
}

impl MergedTour {
    pub fn of(route: &Route) -> Self {
        Self {
            truck: route.truck,
            subroutes: split_trips(route)
                .iter()
                .map(|t| t.iter().map(|s| s.location).collect())
                .collect(),
            duration: route.end_time(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PostoptReport {
    /// `(old truck, new truck)` swaps.
    pub downsized: Vec<(TruckId, TruckId)>,
    /// Tours produced by merging, as they stand at the end.
    pub merged: Vec<MergedTour>,
    /// Some tour had too many trips to be ordered exactly.
    pub heuristic_sequencing: bool,
}

struct Plan {
    route: Route,
    placement: Placement,
    mileage: f64,
}

struct Work<'a> {
    instance: &'a Instance,
    params: &'a RouteParams,
    plans: Vec<Plan>,
    report: PostoptReport,
}

impl Work<'_> {
    fn from_solution<'a>(solution: &Solution, instance: &'a Instance, params: &'a RouteParams) -> Work<'a> {
        let plans = solution
            .routes
            .iter()
            .map(|r| Plan {
                route: r.clone(),
                placement: solution
                    .placement_of(r.truck)
                    .cloned()
                    .unwrap_or(Placement {
                        truck: r.truck,
                        items: Vec::new(),
                    }),
                mileage: route_cost(r, instance).unwrap_or(f64::INFINITY),
            })
            .collect();
        Work {
            instance,
            params,
            plans,
            report: PostoptReport::default(),
        }
    }

    fn total(&self) -> f64 {
        self.plans.iter().map(|p| p.mileage).sum()
    }

    /// Whether replacing the plans at `drop` by `add` keeps queues and visit
    /// limits feasible.
    fn on_time(&self, drop: &[usize], add: &[&Route]) -> bool {
        let mut routes: Vec<Route> = self
            .plans
            .iter()
            .enumerate()
            .filter(|(k, _)| !drop.contains(k))
            .map(|(_, p)| p.route.clone())
            .collect();
        routes.extend(add.iter().map(|r| (*r).clone()));
        visit_limits_ok(&routes, self.instance) && simulate_queues(&mut routes, self.instance).feasible
    }

    fn used(&self) -> BTreeSet<TruckId> {
        self.plans.iter().map(|p| p.route.truck).collect()
    }

    /// Runs the trips of `trips` on `truck` in the best chain order.
    fn tour(&mut self, truck: TruckId, trips: &[Vec<StopPlan>]) -> RouteResult {
        let t = self.instance.truck(truck);
        let ends: Vec<(LocationId, LocationId)> = trips
            .iter()
            .map(|s| (s[0].location, s[s.len() - 1].location))
            .collect();
        let seq = sequence_subroutes(&ends, t.home_yard, &self.instance.matrices);
        self.report.heuristic_sequencing |= !seq.exact;
        let mut plan = vec![StopPlan::yard(t.home_yard)];
        for &k in &seq.order {
            plan.extend(trips[k].iter().cloned());
        }
        plan.push(StopPlan::yard(t.home_yard));
        evaluate_fixed_route(t, &plan, self.instance, self.params)
    }

    /// Cheapest way to run the load of plan `k` on `truck`.
    fn rerun(&mut self, k: usize, truck: TruckId) -> Option<RouteResult> {
        let route = &self.plans[k].route;
        let shipments = route.shipments();
        let mut best: Option<RouteResult> = None;
        if route.trip_count() > 1 {
            let trips = split_trips(route);
            let r = self.tour(truck, &trips);
            if r.feasible {
                best = Some(r);
            }
        }
        let r = solve_route(self.instance.truck(truck), &shipments, self.instance, self.params);
        if r.feasible && best.as_ref().is_none_or(|b| r.mileage < b.mileage - EPS) {
            best = Some(r);
        }
        best
    }

    /// One pass of truck swaps; returns whether anything changed.
    fn downsize(&mut self) -> bool {
        let mut changed = false;
        for k in 0..self.plans.len() {
            let old = self.plans[k].route.truck;
            let old_truck = self.instance.truck(old);
            let used = self.used();
            let mut candidates: Vec<TruckId> = self
                .instance
                .trucks
                .iter()
                .filter(|t| !used.contains(&t.id))
                .filter(|t| {
                    let (a, b) = (t.surface_area(), old_truck.surface_area());
                    a < b - EPS || ((a - b).abs() <= EPS && t.cost_per_distance < old_truck.cost_per_distance)
                })
                .map(|t| t.id)
                .collect();
            candidates.sort_by(|&a, &b| {
                let (ta, tb) = (self.instance.truck(a), self.instance.truck(b));
                ta.surface_area()
                    .total_cmp(&tb.surface_area())
                    .then(ta.cost_per_distance.total_cmp(&tb.cost_per_distance))
                    .then(a.cmp(&b))
            });
            let mut best: Option<(f64, RouteResult)> = None;
            for t in candidates {
                let Some(r) = self.rerun(k, t) else { continue };
                let current = best.as_ref().map_or(self.plans[k].mileage, |b| b.0);
                if r.mileage < current - EPS && self.on_time(&[k], &[r.route.as_ref().unwrap()]) {
                    best = Some((r.mileage, r));
                }
            }
            if let Some((mileage, r)) = best {
                self.report.downsized.push((old, r.route.as_ref().unwrap().truck));
                self.plans[k] = Plan {
                    route: r.route.unwrap(),
                    placement: r.placement.unwrap(),
                    mileage,
                };
                changed = true;
            }
        }
        changed
    }

    /// Applies the best admissible merge; returns whether one was found.
    fn merge_once(&mut self) -> bool {
        let n = self.plans.len();
        let mut best: Option<(f64, usize, usize, RouteResult)> = None;
        for a in 0..n {
            for b in a + 1..n {
                let (ra, rb) = (&self.plans[a].route, &self.plans[b].route);
                let city = |r: &Route| {
                    r.shipments()
                        .first()
                        .map(|&s| self.instance.location(self.instance.shipment(s).source).city.clone())
                };
                if city(ra) != city(rb) {
                    continue;
                }
                let budget = self.plans[a].mileage + self.plans[b].mileage;
                let mut trips = split_trips(ra);
                trips.extend(split_trips(rb));
                for truck in [ra.truck, rb.truck] {
                    let t = self.instance.truck(truck);
                    let ends: Vec<(LocationId, LocationId)> = trips
                        .iter()
                        .map(|s| (s[0].location, s[s.len() - 1].location))
                        .collect();
                    let inner: f64 = trips
                        .iter()
                        .map(|s| {
                            s.windows(2)
                                .map(|w| self.instance.distance(w[0].location, w[1].location))
                                .sum::<f64>()
                        })
                        .sum();
                    let seq = sequence_subroutes(&ends, t.home_yard, &self.instance.matrices);
                    let bound = t.cost_per_distance * (inner + seq.connection);
                    let saving = budget - bound;
                    if bound > budget + EPS || best.as_ref().is_some_and(|b| saving <= b.0 + EPS) {
                        continue;
                    }
                    let r = self.tour(truck, &trips);
                    if !r.feasible || r.mileage > budget + EPS {
                        continue;
                    }
                    if !self.on_time(&[a, b], &[r.route.as_ref().unwrap()]) {
                        continue;
                    }
                    best = Some((budget - r.mileage, a, b, r));
                }
            }
        }
        let Some((_, a, b, r)) = best else {
            return false;
        };
        let mileage = r.mileage;
        let route = r.route.unwrap();
        self.report.merged.retain(|m| m.truck != self.plans[a].route.truck && m.truck != self.plans[b].route.truck);
        self.report.merged.push(MergedTour::of(&route));
        self.plans.remove(b);
        self.plans[a] = Plan {
            route,
            placement: r.placement.unwrap(),
            mileage,
        };
        true
    }

    fn finish(self) -> (Solution, PostoptReport) {
        let plans = self
            .plans
            .into_iter()
            .map(|p| (p.route, p.placement))
            .collect();
        (assemble(self.instance, plans), self.report)
    }
}

/// Swaps trucks for smaller (or cheaper) idle ones while the mileage drops.
pub fn downsize_trucks(solution: &Solution, instance: &Instance, params: &RouteParams) -> Solution {
    let mut w = Work::from_solution(solution, instance, params);
    let mut changed = false;
    while w.downsize() {
        changed = true;
    }
    if !changed {
        return solution.clone();
    }
    w.finish().0
}

/// Merges routes into multi-trip tours while the mileage does not rise.
pub fn merge_routes(solution: &Solution, instance: &Instance, params: &RouteParams) -> Solution {
    let mut w = Work::from_solution(solution, instance, params);
    let mut changed = false;
    while w.merge_once() {
        changed = true;
    }
    if !changed {
        return solution.clone();
    }
    w.finish().0
}

/// Downsizing, merging and downsizing again, repeated until nothing
/// changes. The input is returned as is when no step applies, and never
/// replaced by a solution with higher mileage.
pub fn postoptimize(solution: &Solution, instance: &Instance, params: &RouteParams) -> (Solution, PostoptReport) {
    let mut w = Work::from_solution(solution, instance, params);
    let start = w.total();
    let mut changed = false;
    loop {
        let mut step = false;
        while w.downsize() {
            step = true;
        }
        while w.merge_once() {
            step = true;
        }
        while w.downsize() {
            step = true;
        }
        if !step {
            break;
        }
        changed = true;
    }
    if !changed || w.total() > start + EPS {
        return (solution.clone(), PostoptReport::default());
    }
    let (out, report) = w.finish();
    if !out.is_feasible() || out.total_mileage > solution.total_mileage + EPS {
        return (solution.clone(), PostoptReport::default());
    }
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrices(distance: Vec<Vec<f64>>) -> TravelMatrices {
        let travel_time = distance.iter().map(|r| r.iter().map(|d| d.ceil() as Minutes).collect()).collect();
        TravelMatrices { distance, travel_time }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn random_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<(usize, usize)>)> {
        (2usize..9, 1usize..7).prop_flat_map(|(locs, trips)| {
            let locs = locs + 1;
            (
                proptest::collection::vec(proptest::collection::vec(0.0f64..100.0, locs), locs),
                proptest::collection::vec((1..locs, 1..locs), trips),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn held_karp_matches_every_permutation((d, trips) in random_case()) {
            let m = matrices(d);
            let ends: Vec<(LocationId, LocationId)> =
                trips.iter().map(|&(a, b)| (LocationId(a as u32), LocationId(b as u32))).collect();
            let yard = LocationId(0);
            let got = sequence_subroutes(&ends, yard, &m);
            let best = permutations(ends.len())
                .iter()
                .map(|p| chain_cost(p, &ends, yard, &m))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(got.exact);
            prop_assert!((got.connection - best).abs() < 1e-6);
            prop_assert!((chain_cost(&got.order, &ends, yard, &m) - got.connection).abs() < 1e-6);
        }
    }

    #[test]
    fn beyond_the_cap_the_order_is_a_permutation() {
        let n = HELD_KARP_CAP + 3;
        let d: Vec<Vec<f64>> = (0..=n)
            .map(|i| (0..=n).map(|j| ((i * 7 + j * 13) % 29) as f64).collect())
            .collect();
        let m = matrices(d);
        let ends: Vec<_> = (1..=n).map(|k| (LocationId(k as u32), LocationId(((k % n) + 1) as u32))).collect();
        let s = sequence_subroutes(&ends, LocationId(0), &m);
        assert!(!s.exact);
        let mut order = s.order.clone();
        order.sort_unstable();
        assert_eq!(order, (0..n).collect::<Vec<_>>());
        assert!((chain_cost(&s.order, &ends, LocationId(0), &m) - s.connection).abs() < 1e-9);
    }

    #[test]
    fn no_trips_cost_nothing() {
        let s = sequence_subroutes(&[], LocationId(0), &matrices(vec![vec![0.0]]));
        assert!(s.order.is_empty());
        assert_eq!(s.connection, 0.0);
    }
}
