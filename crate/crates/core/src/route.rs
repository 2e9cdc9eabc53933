//! Route and loading search for a single truck.
//!
//! The shipments of a truck define one pickup node per distinct source and
//! one delivery node per distinct destination. A depth-first search orders
//! the nodes, propagating times and the on-board area as it goes, and prunes
//! branches that break a window or cost more than the best complete route
//! found so far. Complete routes are then packed; the cheapest route that
//! packs wins.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::loading::{build_columns, load_truck, Column, PackParams, Placement, StopSpan};
use crate::model::{
    horizon_for_trips, side_constraints_ok, trip_count, Instance, LocationId, Minutes, Route,
    ShipmentId, Stop, Truck, TruckId, EPS, MERGED_HORIZON,
};
use crate::schedule::stop_window;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteParams {
    pub pack: PackParams,
    /// Search nodes expanded per call before giving up on optimality.
    pub node_budget: usize,
    /// Disables mileage pruning when false (used to test admissibility).
    pub prune: bool,
    /// Distinct stop-span patterns that may fail to pack before the search
    /// gives up.
    pub pack_budget: usize,
}

impl Default for RouteParams {
    fn default() -> Self {
        Self {
            pack: PackParams::default(),
            node_budget: 200_000,
            prune: true,
            pack_budget: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteResult {
    pub feasible: bool,
    pub route: Option<Route>,
    pub placement: Option<Placement>,
    /// Cost of the route: cost per distance unit times distance.
    pub mileage: f64,
    /// The node budget ran out; the result is the best found so far.
    pub truncated: bool,
    pub nodes: usize,
}

impl RouteResult {
    fn infeasible() -> Self {
        Self {
            feasible: false,
            route: None,
            placement: None,
            mileage: f64::INFINITY,
            truncated: false,
            nodes: 0,
        }
    }
}

/// A stop without times.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StopPlan {
    pub location: LocationId,
    pub pickups: Vec<ShipmentId>,
    pub deliveries: Vec<ShipmentId>,
}

impl StopPlan {
    pub fn yard(location: LocationId) -> Self {
        Self {
            location,
            pickups: Vec::new(),
            deliveries: Vec::new(),
        }
    }

    pub fn of(stop: &Stop) -> Self {
        Self {
            location: stop.location,
            pickups: stop.pickups.clone(),
            deliveries: stop.deliveries.clone(),
        }
    }
}

/// Forward time propagation without queues.
///
/// The truck leaves its yard at minute 0, waits at each stop until the
/// location and every shipment window there are open, and must finish
/// handling before any of them closes. Returns `None` when a window or the
/// return deadline is missed, or when the sequence does not start and end
/// at the truck's yard.
pub fn propagate_times(stops: &[StopPlan], truck: &Truck, instance: &Instance) -> Option<Route> {
    let (first, last) = (stops.first()?, stops.last()?);
    if stops.len() < 2 || first.location != truck.home_yard || last.location != truck.home_yard {
        return None;
    }
    let mut out = Vec::with_capacity(stops.len());
    out.push(Stop::yard(truck.home_yard, 0));
    let mut departure: Minutes = 0;
    let mut prev = truck.home_yard;
    for plan in &stops[1..stops.len() - 1] {
        let arrival = departure + instance.travel_time(prev, plan.location);
        let mut stop = Stop {
            location: plan.location,
            pickups: plan.pickups.clone(),
            deliveries: plan.deliveries.clone(),
            arrival,
            wait: 0,
            departure: 0,
        };
        let (open, close) = stop_window(instance, &stop);
        let start = arrival.max(open);
        let end = start + instance.location(plan.location).handling_time;
        if end > close {
            return None;
        }
        stop.wait = start - arrival;
        stop.departure = end;
        departure = end;
        prev = plan.location;
        out.push(stop);
    }
    let back = departure + instance.travel_time(prev, truck.home_yard);
    let route = Route {
        truck: truck.id,
        stops: {
            out.push(Stop::yard(truck.home_yard, back));
            out
        },
    };
    let yard = instance.location(truck.home_yard);
    if back > yard.working_window.close || back > route.horizon() {
        return None;
    }
    Some(route)
}

fn distance_of(route: &Route, instance: &Instance) -> f64 {
    route
        .stops
        .windows(2)
        .map(|w| instance.distance(w[0].location, w[1].location))
        .sum()
}

fn shipment_columns(shipments: &[ShipmentId], instance: &Instance) -> Option<Vec<(ShipmentId, Column)>> {
    let mut out = Vec::new();
    for &s in shipments {
        let cols = build_columns(instance.shipment(s), &instance.pallet).ok()?;
        out.extend(cols.into_iter().map(|c| (s, c)));
    }
    Some(out)
}

fn pack_route(
    route: &Route,
    columns: &[(ShipmentId, Column)],
    truck: &Truck,
    params: &PackParams,
) -> Option<Placement> {
    let mut spans = Vec::with_capacity(columns.len());
    for (s, _) in columns {
        let (p, d) = route.span_of(*s)?;
        spans.push(StopSpan::new(p, d));
    }
    let cols: Vec<Column> = columns.iter().map(|(_, c)| c.clone()).collect();
    load_truck(&cols, &spans, truck, params).placement
}

/// Times, side constraints and loading of a fixed stop sequence.
///
/// `stops` includes the yard at both ends. Every shipment must be picked up
/// exactly once before it is delivered exactly once.
pub fn evaluate_fixed_route(
    truck: &Truck,
    stops: &[StopPlan],
    instance: &Instance,
    params: &RouteParams,
) -> RouteResult {
    let mut picked: BTreeMap<ShipmentId, usize> = BTreeMap::new();
    let mut dropped: BTreeMap<ShipmentId, usize> = BTreeMap::new();
    for (k, s) in stops.iter().enumerate() {
        for &j in &s.pickups {
            if instance.shipment(j).source != s.location || picked.insert(j, k).is_some() {
                return RouteResult::infeasible();
            }
        }
        for &j in &s.deliveries {
            if instance.shipment(j).destination != s.location || dropped.insert(j, k).is_some() {
                return RouteResult::infeasible();
            }
        }
    }
    if picked.len() != dropped.len()
        || picked
            .iter()
            .any(|(j, &p)| dropped.get(j).is_none_or(|&d| d <= p))
    {
        return RouteResult::infeasible();
    }
    let Some(route) = propagate_times(stops, truck, instance) else {
        return RouteResult::infeasible();
    };
    let shipments: Vec<ShipmentId> = picked.keys().copied().collect();
    if !side_constraints_ok(truck, &shipments, &route, instance) {
        return RouteResult::infeasible();
    }
    let Some(columns) = shipment_columns(&shipments, instance) else {
        return RouteResult::infeasible();
    };
    let Some(placement) = pack_route(&route, &columns, truck, &params.pack) else {
        return RouteResult::infeasible();
    };
    RouteResult {
        feasible: true,
        mileage: truck.cost_per_distance * distance_of(&route, instance),
        route: Some(route),
        placement: Some(placement),
        truncated: false,
        nodes: 0,
    }
}

struct Node {
    location: LocationId,
    pickup: bool,
    shipments: Vec<ShipmentId>,
    open: Minutes,
    close: Minutes,
    handling: Minutes,
    area: f64,
    /// Pickup nodes that must precede a delivery node.
    requires: u64,
    must_first: bool,
    must_last: bool,
}

struct Search<'a> {
    instance: &'a Instance,
    truck: &'a Truck,
    params: &'a RouteParams,
    nodes: Vec<Node>,
    columns: Vec<(ShipmentId, Column)>,
    full: u64,
    area_limit: f64,
    return_by: Minutes,
    expanded: usize,
    truncated: bool,
    best: f64,
    best_key: Vec<(LocationId, bool)>,
    best_found: Option<(Route, Placement)>,
    pack_memo: HashMap<Vec<(usize, usize)>, Option<Placement>>,
    pack_failures: usize,
    seq: Vec<usize>,
    /// Shortest-path distances between nodes; index `nodes.len()` is the yard.
    closure: Vec<Vec<f64>>,
}

impl Search<'_> {
    /// Lower bound on the distance still to drive from node `from` after
    /// visiting `mask`: some unvisited node must be reached and the yard
    /// reached after it.
    fn remaining(&self, from: usize, mask: u64) -> f64 {
        let yard = self.nodes.len();
        let mut bound = self.closure[from][yard];
        for j in 0..self.nodes.len() {
            if mask & (1u64 << j) == 0 {
                bound = bound.max(self.closure[from][j] + self.closure[j][yard]);
            }
        }
        bound
    }

    fn dfs(&mut self, mask: u64, at: LocationId, time: Minutes, dist: f64, area: f64) {
        if self.truncated {
            return;
        }
        self.expanded += 1;
        if self.expanded > self.params.node_budget {
            self.truncated = true;
            return;
        }
        if mask == self.full {
            self.leaf(at, time, dist);
            return;
        }

        let must_first = self.seq.is_empty() && self.nodes.iter().any(|n| n.must_first);
        let mut children: Vec<(f64, LocationId, bool, usize, Minutes, f64)> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let bit = 1u64 << i;
            if mask & bit != 0 || node.requires & !mask != 0 {
                continue;
            }
            if must_first && !node.must_first {
                continue;
            }
            if node.must_first && !self.seq.is_empty() {
                continue;
            }
            if node.must_last && mask | bit != self.full {
                continue;
            }
            let arrival = time + self.instance.travel_time(at, node.location);
            let end = arrival.max(node.open) + node.handling;
            if end > node.close
                || end + self.instance.travel_time(node.location, self.truck.home_yard) > self.return_by
            {
                continue;
            }
            let next_area = area + node.area;
            if node.pickup && next_area > self.area_limit {
                continue;
            }
            let d = dist + self.instance.distance(at, node.location);
            if self.params.prune && d + self.remaining(i, mask | bit) > self.best + EPS {
                continue;
            }
            children.push((d, node.location, node.pickup, i, end, next_area));
        }
        children.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(b.2.cmp(&a.2))
        });
        for (d, location, _, i, end, next_area) in children {
            if self.params.prune && d + self.remaining(i, mask | (1u64 << i)) > self.best + EPS {
                continue;
            }
            self.seq.push(i);
            self.dfs(mask | (1u64 << i), location, end, d, next_area);
            self.seq.pop();
            if self.truncated {
                return;
            }
        }
    }

    fn leaf(&mut self, at: LocationId, time: Minutes, dist: f64) {
        let yard = self.truck.home_yard;
        let total = dist + self.instance.distance(at, yard);
        let back = time + self.instance.travel_time(at, yard);
        let sizes = std::iter::once((0, 0))
            .chain(self.seq.iter().map(|&i| {
                let n = &self.nodes[i];
                if n.pickup {
                    (n.shipments.len(), 0)
                } else {
                    (0, n.shipments.len())
                }
            }))
            .chain(std::iter::once((0, 0)));
        if back > horizon_for_trips(trip_count(sizes)) {
            return;
        }
        let key: Vec<(LocationId, bool)> = self
            .seq
            .iter()
            .map(|&i| (self.nodes[i].location, !self.nodes[i].pickup))
            .collect();
        let better = total < self.best - EPS || (total <= self.best + EPS && key < self.best_key);
        if !better {
            return;
        }

        let mut plan = vec![StopPlan::yard(yard)];
        for &i in &self.seq {
            let n = &self.nodes[i];
            let (pickups, deliveries) = if n.pickup {
                (n.shipments.clone(), Vec::new())
            } else {
                (Vec::new(), n.shipments.clone())
            };
            plan.push(StopPlan {
                location: n.location,
                pickups,
                deliveries,
            });
        }
        plan.push(StopPlan::yard(yard));
        let Some(route) = propagate_times(&plan, self.truck, self.instance) else {
            return;
        };

        let spans: Vec<(usize, usize)> = self
            .columns
            .iter()
            .map(|(s, _)| route.span_of(*s).expect("every shipment is served"))
            .collect();
        let placement = match self.pack_memo.get(&spans) {
            Some(p) => p.clone(),
            None => {
                let p = pack_route(&route, &self.columns, self.truck, &self.params.pack);
                self.pack_memo.insert(spans, p.clone());
                if p.is_none() {
                    self.pack_failures += 1;
                    if self.pack_failures >= self.params.pack_budget {
                        self.truncated = true;
                    }
                }
                p
            }
        };
        if let Some(placement) = placement {
            self.best = total;
            self.best_key = key;
            self.best_found = Some((route, placement));
        }
    }
}

/// Cheapest route for `truck` serving `shipments`, with its placement.
///
/// Infeasible when the shipments come from different cities, a location
/// refuses the truck's length class, no visit order meets the windows, or no
/// order packs. With a truncated search the best route found so far is
/// returned and `truncated` is set.
pub fn solve_route(
    truck: &Truck,
    shipments: &[ShipmentId],
    instance: &Instance,
    params: &RouteParams,
) -> RouteResult {
    let mut shipments = shipments.to_vec();
    shipments.sort_unstable();
    shipments.dedup();
    if shipments.is_empty() {
        let route = Route {
            truck: truck.id,
            stops: vec![Stop::yard(truck.home_yard, 0), Stop::yard(truck.home_yard, 0)],
        };
        return RouteResult {
            feasible: true,
            mileage: truck.cost_per_distance * instance.distance(truck.home_yard, truck.home_yard),
            route: Some(route),
            placement: Some(Placement {
                truck: truck.id,
                items: Vec::new(),
            }),
            truncated: false,
            nodes: 0,
        };
    }

    let city = &instance.location(instance.shipment(shipments[0]).source).city;
    if shipments
        .iter()
        .any(|&s| &instance.location(instance.shipment(s).source).city != city)
    {
        return RouteResult::infeasible();
    }
    let Some(columns) = shipment_columns(&shipments, instance) else {
        return RouteResult::infeasible();
    };

    let mut groups: BTreeMap<(LocationId, bool), Vec<ShipmentId>> = BTreeMap::new();
    for &s in &shipments {
        let sh = instance.shipment(s);
        groups.entry((sh.source, true)).or_default().push(s);
        groups.entry((sh.destination, false)).or_default().push(s);
    }
    if groups.len() > 64 {
        return RouteResult::infeasible();
    }
    let area_of = |list: &[ShipmentId]| -> f64 {
        columns
            .iter()
            .filter(|(s, _)| list.contains(s))
            .map(|(_, c)| c.area())
            .sum()
    };
    let mut visits: HashMap<LocationId, u32> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::with_capacity(groups.len());
    for (&(location, pickup), list) in &groups {
        let loc = instance.location(location);
        if !loc.admits(truck) {
            return RouteResult::infeasible();
        }
        *visits.entry(location).or_default() += 1;
        let probe = Stop {
            location,
            pickups: if pickup { list.clone() } else { Vec::new() },
            deliveries: if pickup { Vec::new() } else { list.clone() },
            arrival: 0,
            wait: 0,
            departure: 0,
        };
        let (open, close) = stop_window(instance, &probe);
        if open + loc.handling_time > close {
            return RouteResult::infeasible();
        }
        let a = area_of(list);
        nodes.push(Node {
            location,
            pickup,
            shipments: list.clone(),
            open,
            close,
            handling: loc.handling_time,
            area: if pickup { a } else { -a },
            requires: 0,
            must_first: loc.must_be_first,
            must_last: loc.must_be_last,
        });
    }
    if visits
        .iter()
        .any(|(l, &v)| instance.location(*l).max_visits.is_some_and(|m| v > m))
    {
        return RouteResult::infeasible();
    }
    if nodes.iter().filter(|n| n.must_first).count() > 1
        || nodes.iter().filter(|n| n.must_last).count() > 1
    {
        return RouteResult::infeasible();
    }
    for i in 0..nodes.len() {
        if nodes[i].pickup {
            continue;
        }
        let mut req = 0u64;
        for (k, other) in nodes.iter().enumerate() {
            if other.pickup && other.shipments.iter().any(|s| nodes[i].shipments.contains(s)) {
                req |= 1 << k;
            }
        }
        nodes[i].requires = req;
    }

    let yard = instance.location(truck.home_yard);
    let n = nodes.len();
    let mut points: Vec<LocationId> = nodes.iter().map(|n| n.location).collect();
    points.push(truck.home_yard);
    let mut closure: Vec<Vec<f64>> = points
        .iter()
        .map(|&a| points.iter().map(|&b| instance.distance(a, b)).collect())
        .collect();
    for k in 0..=n {
        for i in 0..=n {
            for j in 0..=n {
                let via = closure[i][k] + closure[k][j];
                if via < closure[i][j] {
                    closure[i][j] = via;
                }
            }
        }
    }
    let mut search = Search {
        instance,
        truck,
        params,
        full: if n == 64 { u64::MAX } else { (1u64 << n) - 1 },
        nodes,
        columns,
        area_limit: params.pack.threshold * truck.surface_area() + EPS,
        return_by: yard.working_window.close.min(MERGED_HORIZON),
        expanded: 0,
        truncated: false,
        best: f64::INFINITY,
        best_key: Vec::new(),
        best_found: None,
        pack_memo: HashMap::new(),
        pack_failures: 0,
        seq: Vec::new(),
        closure,
    };
    search.dfs(0, truck.home_yard, 0, 0.0, 0.0);

    match search.best_found {
        Some((route, placement)) => RouteResult {
            feasible: true,
            mileage: truck.cost_per_distance * distance_of(&route, instance),
            route: Some(route),
            placement: Some(placement),
            truncated: search.truncated,
            nodes: search.expanded,
        },
        None => RouteResult {
            truncated: search.truncated,
            nodes: search.expanded,
            ..RouteResult::infeasible()
        },
    }
}

/// Shared memo of [`solve_route`] results keyed by truck and shipment set.
///
/// Safe for concurrent lookups and inserts; equal keys always map to equal
/// results because the search is deterministic.
#[derive(Debug, Default)]
pub struct RouteCache {
    map: dashmap::DashMap<(TruckId, Vec<ShipmentId>), Arc<RouteResult>>,
}

impl RouteCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(
        &self,
        truck: &Truck,
        shipments: &[ShipmentId],
        instance: &Instance,
        params: &RouteParams,
    ) -> Arc<RouteResult> {
        let mut key = shipments.to_vec();
        key.sort_unstable();
        key.dedup();
        let key = (truck.id, key);
        if let Some(hit) = self.map.get(&key) {
            return Arc::clone(&hit);
        }
        let result = Arc::new(solve_route(truck, &key.1, instance, params));
        self.map.insert(key, Arc::clone(&result));
        result
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
