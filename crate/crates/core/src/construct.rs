//! Initial solution: supplier areas, greedy truck filling and queue repair.
//!
//! Suppliers are grouped into areas by greedy modularity clustering of a
//! proximity graph. Within an area, shipments are taken by decreasing
//! supplier-to-warehouse distance and put on the first open truck that can
//! still serve its whole load; a new truck is opened when none can, and a
//! truck of another area is shared only when no truck is left. Trucks
//! that end up late because of dock queues are then emptied and their
//! shipments reassigned, accepting only placements that keep every route
//! on time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loading::{build_columns, Placement};
use crate::model::{Instance, LocationId, Route, ShipmentId, Solution, TruckId, EPS};
use crate::pipeline::assemble;
use crate::route::{RouteCache, RouteParams};
use crate::schedule::simulate_queues;

/// Disjoint groups of suppliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierAreas {
    pub groups: Vec<Vec<LocationId>>,
    pub modularity: f64,
}

impl SupplierAreas {
    /// Index of the group holding `supplier`.
    pub fn area_of(&self, supplier: LocationId) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&supplier))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructParams {
    /// Suppliers closer than this fraction of the mean pairwise supplier
    /// distance are linked in the clustering graph.
    pub radius_scale: f64,
    pub repair_rounds: usize,
    pub route: RouteParams,
}

impl Default for ConstructParams {
    fn default() -> Self {
        Self {
            radius_scale: 0.5,
            repair_rounds: 10,
            route: RouteParams::default(),
        }
    }
}

/// Modularity of a partition of a weighted undirected graph.
pub fn modularity(weights: &[Vec<f64>], groups: &[Vec<usize>]) -> f64 {
    let total: f64 = weights.iter().flatten().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let degree: Vec<f64> = weights.iter().map(|row| row.iter().sum()).collect();
    groups
        .iter()
        .map(|g| {
            let inner: f64 = g.iter().flat_map(|&i| g.iter().map(move |&j| (i, j))).map(|(i, j)| weights[i][j]).sum();
            let deg: f64 = g.iter().map(|&i| degree[i]).sum();
            inner / total - (deg / total).powi(2)
        })
        .sum()
}

/// Greedy agglomerative modularity maximisation: starting from singletons,
/// repeatedly merges the two linked communities with the largest modularity
/// gain while the gain is positive. Ties go to the lowest community indices.
pub fn greedy_modularity(weights: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = weights.len();
    let total: f64 = weights.iter().flatten().sum();
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if total <= 0.0 {
        return groups;
    }
    // e[i][j]: fraction of edge weight between communities i and j (each
    // direction counted once); a[i]: fraction of edge ends in community i.
    let mut e: Vec<Vec<f64>> = weights
        .iter()
        .map(|row| row.iter().map(|w| w / total).collect())
        .collect();
    let mut a: Vec<f64> = e.iter().map(|row| row.iter().sum()).collect();
    let mut alive: Vec<bool> = vec![true; n];
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if !alive[j] || e[i][j] <= 0.0 {
                    continue;
                }
                let gain = 2.0 * (e[i][j] - a[i] * a[j]);
                if gain > EPS && best.is_none_or(|(g, _, _)| gain > g + EPS) {
                    best = Some((gain, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        for k in 0..n {
            e[i][k] += e[j][k];
        }
        for k in 0..n {
            e[k][i] += e[k][j];
            e[k][j] = 0.0;
            e[j][k] = 0.0;
        }
        a[i] += a[j];
        a[j] = 0.0;
        alive[j] = false;
        let moved = std::mem::take(&mut groups[j]);
        groups[i].extend(moved);
    }
    let mut out: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}

/// Clusters suppliers into areas. Suppliers of different cities are never
/// linked, so an area lies within one city.
pub fn cluster_suppliers(instance: &Instance, radius_scale: f64) -> SupplierAreas {
    let ids: Vec<LocationId> = instance.suppliers().map(|l| l.id).collect();
    let n = ids.len();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            sum += instance.distance(ids[i], ids[j]);
            pairs += 1;
        }
    }
    let radius = if pairs == 0 { 0.0 } else { radius_scale * sum / pairs as f64 };
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (instance.location(ids[i]), instance.location(ids[j]));
            // Symmetrised, in case the matrix is not.
            let d = 0.5 * (instance.distance(ids[i], ids[j]) + instance.distance(ids[j], ids[i]));
            if a.city == b.city && d < radius {
                weights[i][j] = 1.0 / d.max(EPS);
            }
        }
    }
    let groups = greedy_modularity(&weights);
    let modularity = modularity(&weights, &groups);
    SupplierAreas {
        groups: groups
            .into_iter()
            .map(|g| g.into_iter().map(|k| ids[k]).collect())
            .collect(),
        modularity,
    }
}

/// Area label of every shipment: supplier areas first, then one area per
/// other source location (hubs).
fn shipment_areas(instance: &Instance, areas: &SupplierAreas) -> BTreeMap<usize, Vec<ShipmentId>> {
    let mut extra: BTreeMap<LocationId, usize> = BTreeMap::new();
    let mut out: BTreeMap<usize, Vec<ShipmentId>> = BTreeMap::new();
    for s in &instance.shipments {
        let area = match areas.area_of(s.source) {
            Some(a) => a,
            None => {
                let next = areas.groups.len() + extra.len();
                *extra.entry(s.source).or_insert(next)
            }
        };
        out.entry(area).or_default().push(s.id);
    }
    out
}

/// Decreasing supplier-to-warehouse distance. Shipments of a supplier with
/// a visit limit are pulled forward to its first shipment so they end up on
/// as few trucks as possible.
fn by_distance_desc(instance: &Instance, list: &mut Vec<ShipmentId>) {
    list.sort_by(|&a, &b| {
        let (sa, sb) = (instance.shipment(a), instance.shipment(b));
        let da = instance.distance(sa.source, sa.destination);
        let db = instance.distance(sb.source, sb.destination);
        db.total_cmp(&da).then(a.cmp(&b))
    });
    let limited = |s: ShipmentId| instance.location(instance.shipment(s).source).max_visits.is_some();
    let mut out = Vec::with_capacity(list.len());
    let mut done = vec![false; list.len()];
    for k in 0..list.len() {
        if done[k] {
            continue;
        }
        done[k] = true;
        out.push(list[k]);
        if limited(list[k]) {
            let source = instance.shipment(list[k]).source;
            for m in k + 1..list.len() {
                if !done[m] && instance.shipment(list[m]).source == source {
                    done[m] = true;
                    out.push(list[m]);
                }
            }
        }
    }
    *list = out;
}

struct Builder<'a> {
    instance: &'a Instance,
    params: &'a ConstructParams,
    cache: &'a RouteCache,
    /// Trucks in opening order: smallest surface first, then id.
    order: Vec<TruckId>,
    loads: BTreeMap<TruckId, Vec<ShipmentId>>,
    plans: BTreeMap<TruckId, (Route, Placement)>,
    area_of_truck: BTreeMap<TruckId, usize>,
    column_area: Vec<f64>,
    banned: BTreeSet<TruckId>,
    visits: BTreeMap<LocationId, u32>,
}

impl Builder<'_> {
    fn area_ok(&self, truck: TruckId, load: &[ShipmentId]) -> bool {
        let covered: f64 = load.iter().map(|s| self.column_area[s.index()]).sum();
        covered <= self.params.route.pack.threshold * self.instance.truck(truck).surface_area() + EPS
    }

    fn try_load(&self, truck: TruckId, shipment: ShipmentId) -> Option<(Vec<ShipmentId>, Route, Placement)> {
        let mut load = self.loads.get(&truck).cloned().unwrap_or_default();
        load.push(shipment);
        if !self.area_ok(truck, &load) {
            return None;
        }
        let r = self.cache.solve(self.instance.truck(truck), &load, self.instance, &self.params.route);
        if !r.feasible {
            return None;
        }
        Some((load, r.route.clone()?, r.placement.clone()?))
    }

    fn visits_ok_with(&self, truck: TruckId, route: &Route) -> bool {
        let mut extra: BTreeMap<LocationId, i64> = BTreeMap::new();
        let inner = |r: &Route| {
            let n = r.stops.len();
            r.stops.iter().take(n.saturating_sub(1)).skip(1).map(|s| s.location).collect::<Vec<_>>()
        };
        for l in inner(route) {
            *extra.entry(l).or_default() += 1;
        }
        if let Some((old, _)) = self.plans.get(&truck) {
            for l in inner(old) {
                *extra.entry(l).or_default() -= 1;
            }
        }
        extra.iter().all(|(l, &d)| {
            d <= 0
                || self.instance.location(*l).max_visits.is_none_or(|m| {
                    i64::from(self.visits.get(l).copied().unwrap_or(0)) + d <= i64::from(m)
                })
        })
    }

    /// Trucks made late by the queues once `truck` runs `route`.
    fn late_with(&self, truck: TruckId, route: &Route) -> usize {
        let mut routes: Vec<Route> = self
            .plans
            .iter()
            .filter(|(t, _)| **t != truck)
            .map(|(_, (r, _))| r.clone())
            .collect();
        routes.push(route.clone());
        let report = simulate_queues(&mut routes, self.instance);
        report
            .violations
            .iter()
            .map(|v| v.truck)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Puts `shipment` on an open truck of `area`, or opens a new one.
    /// With `gtw`, placements that make any route late are skipped unless
    /// nothing else is possible.
    fn place(&mut self, area: usize, shipment: ShipmentId, gtw: bool) -> Result<()> {
        // Trucks already calling at the shipment's source first.
        let source = self.instance.shipment(shipment).source;
        let mut open: Vec<TruckId> = self
            .area_of_truck
            .iter()
            .filter(|(_, a)| **a == area)
            .map(|(t, _)| *t)
            .collect();
        open.sort_by_key(|t| {
            !self.loads[t]
                .iter()
                .any(|&s| self.instance.shipment(s).source == source)
        });
        // One unused truck per kind; trucks emptied by the current repair
        // round come last.
        let mut kinds = BTreeSet::new();
        let mut fresh: Vec<TruckId> = Vec::new();
        for banned in [false, true] {
            for &t in &self.order {
                if !self.loads.contains_key(&t)
                    && self.banned.contains(&t) == banned
                    && kinds.insert((banned, self.instance.truck(t).kind_key()))
                {
                    fresh.push(t);
                }
            }
        }
        // Trucks of other areas when the fleet runs short.
        let others: Vec<TruckId> = self
            .area_of_truck
            .iter()
            .filter(|(_, a)| **a != area)
            .map(|(t, _)| *t)
            .collect();
        // Least late trucks when every option makes some truck late.
        let mut fallback: Option<(usize, TruckId, Vec<ShipmentId>, Route, Placement)> = None;
        for t in open.iter().chain(&fresh).chain(&others).copied() {
            let Some((load, route, placement)) = self.try_load(t, shipment) else {
                continue;
            };
            if !self.visits_ok_with(t, &route) {
                continue;
            }
            if gtw {
                let late = self.late_with(t, &route);
                if late > 0 {
                    if fallback.as_ref().is_none_or(|f| late < f.0) {
                        fallback = Some((late, t, load, route, placement));
                    }
                    continue;
                }
            }
            self.commit(t, area, load, route, placement);
            return Ok(());
        }
        if let Some((_, t, load, route, placement)) = fallback {
            self.commit(t, area, load, route, placement);
            return Ok(());
        }
        Err(Error::Construction(format!(
            "no truck can carry shipment {shipment} together with its area's load"
        )))
    }

    fn count_visits(&mut self, route: &Route, sign: i64) {
        let n = route.stops.len();
        for s in route.stops.iter().take(n.saturating_sub(1)).skip(1) {
            let v = self.visits.entry(s.location).or_default();
            *v = (i64::from(*v) + sign) as u32;
        }
    }

    fn commit(&mut self, truck: TruckId, area: usize, load: Vec<ShipmentId>, route: Route, placement: Placement) {
        if let Some((old, _)) = self.plans.get(&truck).cloned() {
            self.count_visits(&old, -1);
        }
        self.count_visits(&route, 1);
        self.loads.insert(truck, load);
        self.plans.insert(truck, (route, placement));
        self.area_of_truck.entry(truck).or_insert(area);
    }

    fn remove(&mut self, truck: TruckId) -> Vec<ShipmentId> {
        if let Some((old, _)) = self.plans.remove(&truck) {
            self.count_visits(&old, -1);
        }
        self.area_of_truck.remove(&truck);
        self.loads.remove(&truck).unwrap_or_default()
    }
}

/// Greedy initial solution with default parameters.
pub fn initial_solution(instance: &Instance) -> Result<Solution> {
    initial_solution_with(instance, &ConstructParams::default(), &RouteCache::new())
}

/// Greedy initial solution. Fails when a shipment fits no truck or the
/// queue repair does not converge within `repair_rounds`.
pub fn initial_solution_with(
    instance: &Instance,
    params: &ConstructParams,
    cache: &RouteCache,
) -> Result<Solution> {
    let areas = cluster_suppliers(instance, params.radius_scale);
    let mut order: Vec<TruckId> = instance.truck_ids().collect();
    order.sort_by(|&a, &b| {
        instance
            .truck(a)
            .surface_area()
            .total_cmp(&instance.truck(b).surface_area())
            .then(a.cmp(&b))
    });
    let column_area = instance
        .shipments
        .iter()
        .map(|s| {
            build_columns(s, &instance.pallet)
                .map(|cols| cols.iter().map(|c| c.area()).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut b = Builder {
        instance,
        params,
        cache,
        order,
        loads: BTreeMap::new(),
        plans: BTreeMap::new(),
        area_of_truck: BTreeMap::new(),
        column_area,
        banned: BTreeSet::new(),
        visits: BTreeMap::new(),
    };

    let labels = shipment_areas(instance, &areas);
    let mut area_of_shipment = vec![0usize; instance.shipments.len()];
    for (&area, list) in &labels {
        let mut list = list.clone();
        by_distance_desc(instance, &mut list);
        for s in list {
            area_of_shipment[s.index()] = area;
            b.place(area, s, false)?;
        }
    }

    for _round in 0..=params.repair_rounds {
        let mut routes: Vec<Route> = b.plans.values().map(|(r, _)| r.clone()).collect();
        let report = simulate_queues(&mut routes, instance);
        if report.feasible {
            let solution = assemble(instance, b.plans.into_values().collect());
            debug_assert!(solution.is_feasible(), "{:?}", solution.feasibility);
            return Ok(solution);
        }
        let late: BTreeSet<TruckId> = report.violations.iter().map(|v| v.truck).collect();
        let mut sequence = Vec::new();
        for &t in &late {
            sequence.extend(b.remove(t));
        }
        b.banned = late;
        by_distance_desc(instance, &mut sequence);
        sequence.sort_by_key(|s| area_of_shipment[s.index()]);
        for s in sequence {
            b.place(area_of_shipment[s.index()], s, true)?;
        }
        b.banned.clear();
    }
    Err(Error::Construction(format!(
        "dock queues still make trucks late after {} repair rounds",
        params.repair_rounds
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_instance, GeneratorConfig};

    /// Every set partition of `0..n`, as group labels.
    fn partitions(n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for p in out {
                let groups = p.iter().max().map_or(0, |m| m + 1);
                for g in 0..=groups {
                    let mut q = p.clone();
                    q.push(g);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }

    fn groups_of(labels: &[usize]) -> Vec<Vec<usize>> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        (0..k)
            .map(|g| (0..labels.len()).filter(|&i| labels[i] == g).collect())
            .collect()
    }

    fn best_modularity(weights: &[Vec<f64>]) -> f64 {
        partitions(weights.len())
            .iter()
            .map(|p| modularity(weights, &groups_of(p)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn planted_communities_are_recovered() {
        // Two dense triangles joined by one weak edge.
        let mut w = vec![vec![0.0; 6]; 6];
        let mut link = |a: usize, b: usize, x: f64| {
            w[a][b] = x;
            w[b][a] = x;
        };
        for (a, b) in [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
            link(a, b, 1.0);
        }
        link(2, 3, 0.1);
        let groups = greedy_modularity(&w);
        assert_eq!(groups, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert!((modularity(&w, &groups) - best_modularity(&w)).abs() < 1e-9);
    }

    #[test]
    fn equidistant_points_form_one_area() {
        let n = 5;
        let w: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        let groups = greedy_modularity(&w);
        assert_eq!(groups, vec![(0..n).collect::<Vec<_>>()]);
        assert!((modularity(&w, &groups) - best_modularity(&w)).abs() < 1e-9);
    }

    #[test]
    fn greedy_never_beats_the_exhaustive_optimum() {
        let mut state = 17u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for _ in 0..30 {
            let n = 6;
            let mut w = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    if next() < 0.5 {
                        let x = next();
                        w[i][j] = x;
                        w[j][i] = x;
                    }
                }
            }
            let groups = greedy_modularity(&w);
            let mut all: Vec<usize> = groups.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert!(modularity(&w, &groups) <= best_modularity(&w) + 1e-9);
        }
    }

    #[test]
    fn areas_stay_within_one_city() {
        let inst = generate_instance(&GeneratorConfig::sized(4, 120)).unwrap();
        let areas = cluster_suppliers(&inst, 0.5);
        for g in &areas.groups {
            let city = &inst.location(g[0]).city;
            assert!(g.iter().all(|&l| inst.location(l).city == *city));
        }
        let n: usize = areas.groups.iter().map(Vec::len).sum();
        assert_eq!(n, inst.suppliers().count());
    }

    #[test]
    fn single_shipment_gets_one_truck() {
        let inst = generate_instance(&GeneratorConfig::tiny(2, 1, 2)).unwrap();
        let sol = initial_solution(&inst).unwrap();
        assert!(sol.is_feasible());
        assert_eq!(sol.used_trucks(), 1);
    }

    #[test]
    fn generated_instances_get_a_feasible_start() {
        for seed in 0..4 {
            let inst = generate_instance(&GeneratorConfig::sized(seed, 60)).unwrap();
            let sol = initial_solution(&inst).unwrap();
            assert!(sol.is_feasible(), "seed {seed}: {:?}", sol.feasibility);
            assert!(sol.assignment.is_total());
        }
    }
}
