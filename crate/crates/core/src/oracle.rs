//! Brute-force reference solvers for tiny inputs.
//!
//! Nothing here shares search code with the solver proper: times, packing,
//! the rear-unloading rule and the dock queue are all re-derived. The route
//! space is also wider than the one searched by [`crate::route`]: a truck may
//! visit a location several times.
//!
//! `exact_pack` enumerates, for every pair of items on board together, which
//! side of the other each item lies on (left, right, rear, nose) and places
//! every item at the smallest coordinates those choices allow. Any feasible
//! placement can be compacted into such a placement, so the enumeration is
//! complete (see `docs/exact-packing.md`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loading::{build_columns, Column, PlacedItem, Placement, StopSpan};
use crate::model::{
    Assignment, Feasibility, Instance, LocationId, Minutes, Route, ShipmentId, Solution, Stop,
    Truck, TruckId, DAY_HORIZON, EPS, MERGED_HORIZON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_shipments: usize,
    pub max_trucks: usize,
    pub max_columns: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_shipments: 6,
            max_trucks: 3,
            max_columns: 5,
        }
    }
}

/// Columns per truck the exhaustive solver packs.
const SOLVE_MAX_COLUMNS: usize = 8;
/// Routes kept per (truck, shipment set) when enumerating alternatives.
const ROUTE_ENUMERATION_CAP: usize = 200_000;

// ---------------------------------------------------------------------------
// Packing

/// Whether `columns` with stop spans `spans` admit any feasible placement on
/// `truck`.
pub fn exact_pack(columns: &[Column], truck: &Truck, spans: &[StopSpan]) -> Result<bool> {
    exact_pack_with(columns, truck, spans, &OracleLimits::default())
}

pub fn exact_pack_with(
    columns: &[Column],
    truck: &Truck,
    spans: &[StopSpan],
    limits: &OracleLimits,
) -> Result<bool> {
    if columns.len() > limits.max_columns {
        return Err(Error::OracleLimits(format!(
            "{} columns exceed the limit of {}",
            columns.len(),
            limits.max_columns
        )));
    }
    Ok(search_pack(columns, truck, spans).is_some())
}

/// Exhaustive placement; returns `(u, v)` per column.
pub fn exact_placement(
    columns: &[Column],
    truck: &Truck,
    spans: &[StopSpan],
) -> Result<Option<Vec<(f64, f64)>>> {
    if columns.len() > SOLVE_MAX_COLUMNS {
        return Err(Error::OracleLimits(format!(
            "{} columns exceed the limit of {SOLVE_MAX_COLUMNS}",
            columns.len()
        )));
    }
    Ok(search_pack(columns, truck, spans))
}

struct Item {
    w: f64,
    l: f64,
    pickup: usize,
    delivery: usize,
}

fn together(a: &Item, b: &Item) -> bool {
    a.pickup < b.delivery && b.pickup < a.delivery
}

fn intervals_cross(a0: f64, a1: f64, b0: f64, b1: f64) -> bool {
    a0 + EPS < b1 && b0 + EPS < a1
}

/// Longest-path coordinates under `x_b >= x_a + gap` edges; `None` on a
/// cycle.
fn longest(n: usize, edges: &[(usize, usize, f64)]) -> Option<Vec<f64>> {
    let mut x = vec![0.0; n];
    for round in 0..=n {
        let mut changed = false;
        for &(a, b, gap) in edges {
            if x[a] + gap > x[b] + EPS {
                x[b] = x[a] + gap;
                changed = true;
            }
        }
        if !changed {
            return Some(x);
        }
        if round == n {
            return None;
        }
    }
    None
}

fn fits(x: &[f64], sizes: impl Iterator<Item = f64>, limit: f64) -> bool {
    x.iter().zip(sizes).all(|(p, s)| p + s <= limit + EPS)
}

fn search_pack(columns: &[Column], truck: &Truck, spans: &[StopSpan]) -> Option<Vec<(f64, f64)>> {
    let (width, length) = (truck.surface_width, truck.surface_length);
    let items: Vec<Item> = columns
        .iter()
        .zip(spans)
        .map(|(c, s)| Item {
            w: c.width,
            l: c.length,
            pickup: s.pickup,
            delivery: s.delivery,
        })
        .collect();
    let n = items.len();
    if items.iter().any(|i| i.w > width + EPS || i.l > length + EPS) {
        return None;
    }

    // Side by side across the width: nothing blocks anything.
    if items.iter().map(|i| i.w).sum::<f64>() <= width + EPS {
        let mut u = 0.0;
        let coords: Vec<(f64, f64)> = items
            .iter()
            .map(|i| {
                let c = (u, 0.0);
                u += i.w;
                c
            })
            .collect();
        return verify(&items, &coords, width, length).then_some(coords);
    }

    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if together(&items[a], &items[b]) {
                pairs.push((a, b));
            }
        }
    }
    let mut u_edges = Vec::new();
    let mut v_edges = Vec::new();
    pack_rec(&items, &pairs, 0, &mut u_edges, &mut v_edges, width, length)
}

fn pack_rec(
    items: &[Item],
    pairs: &[(usize, usize)],
    k: usize,
    u_edges: &mut Vec<(usize, usize, f64)>,
    v_edges: &mut Vec<(usize, usize, f64)>,
    width: f64,
    length: f64,
) -> Option<Vec<(f64, f64)>> {
    let n = items.len();
    if k == pairs.len() {
        let u = longest(n, u_edges)?;
        let v = longest(n, v_edges)?;
        let coords: Vec<(f64, f64)> = u.into_iter().zip(v).collect();
        return verify(items, &coords, width, length).then_some(coords);
    }
    let (a, b) = pairs[k];
    let (ia, ib) = (&items[a], &items[b]);
    // Nose-ward item must board no later and leave no earlier.
    let b_nose_ok = ib.pickup <= ia.pickup && ib.delivery >= ia.delivery;
    let a_nose_ok = ia.pickup <= ib.pickup && ia.delivery >= ib.delivery;
    let options: [(bool, usize, usize, bool); 4] = [
        (true, a, b, true),
        (true, b, a, true),
        (false, a, b, b_nose_ok),
        (false, b, a, a_nose_ok),
    ];
    for (across, from, to, allowed) in options {
        if !allowed {
            continue;
        }
        let ok = if across {
            u_edges.push((from, to, items[from].w));
            longest(n, u_edges).is_some_and(|u| fits(&u, items.iter().map(|i| i.w), width))
        } else {
            v_edges.push((from, to, items[from].l));
            longest(n, v_edges).is_some_and(|v| fits(&v, items.iter().map(|i| i.l), length))
        };
        if ok {
            if let Some(found) = pack_rec(items, pairs, k + 1, u_edges, v_edges, width, length) {
                return Some(found);
            }
        }
        if across {
            u_edges.pop();
        } else {
            v_edges.pop();
        }
    }
    None
}

/// Bounds, pairwise overlap and a forklift simulation of every stop.
fn verify(items: &[Item], coords: &[(f64, f64)], width: f64, length: f64) -> bool {
    let n = items.len();
    for (i, it) in items.iter().enumerate() {
        let (u, v) = coords[i];
        if u < -EPS || v < -EPS || u + it.w > width + EPS || v + it.l > length + EPS {
            return false;
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            if !together(&items[a], &items[b]) {
                continue;
            }
            let (ua, va) = coords[a];
            let (ub, vb) = coords[b];
            if intervals_cross(ua, ua + items[a].w, ub, ub + items[b].w)
                && intervals_cross(va, va + items[a].l, vb, vb + items[b].l)
            {
                return false;
            }
        }
    }
    forklift(items, coords)
}

/// Moves every item through the rear door: at each stop unload the items
/// due there, then load the new ones nose-first.
fn forklift(items: &[Item], coords: &[(f64, f64)]) -> bool {
    let n = items.len();
    let last = items.iter().map(|i| i.delivery).max().unwrap_or(0);
    let mut aboard = vec![false; n];
    // `blocker` sits rear-ward of `x` in the same lane.
    let blocks = |blocker: usize, x: usize| {
        let (ub, vb) = coords[blocker];
        let (ux, vx) = coords[x];
        intervals_cross(ub, ub + items[blocker].w, ux, ux + items[x].w) && vb < vx
    };
    for stop in 0..=last {
        loop {
            let due: Vec<usize> = (0..n)
                .filter(|&i| aboard[i] && items[i].delivery == stop)
                .collect();
            if due.is_empty() {
                break;
            }
            let free = due
                .iter()
                .copied()
                .find(|&x| !(0..n).any(|o| o != x && aboard[o] && blocks(o, x)));
            match free {
                Some(x) => aboard[x] = false,
                None => return false,
            }
        }
        let mut boarding: Vec<usize> = (0..n).filter(|&i| items[i].pickup == stop).collect();
        boarding.sort_by(|&a, &b| coords[b].1.total_cmp(&coords[a].1));
        for x in boarding {
            if (0..n).any(|o| aboard[o] && blocks(o, x)) {
                return false;
            }
            aboard[x] = true;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Routes

#[derive(Debug, Clone)]
struct OStop {
    location: LocationId,
    pickups: Vec<ShipmentId>,
    deliveries: Vec<ShipmentId>,
}

#[derive(Debug, Clone)]
struct ORoute {
    cost: f64,
    stops: Vec<OStop>,
    coords: Vec<(f64, f64)>,
}

struct Frame {
    location: LocationId,
    start: Minutes,
    end: Minutes,
    open: Minutes,
    close: Minutes,
    last_event: usize,
}

struct RouteEnum<'a> {
    instance: &'a Instance,
    truck: &'a Truck,
    ships: Vec<ShipmentId>,
    columns: Vec<(usize, Column)>,
    /// Collect every route within `bound` instead of only improving ones.
    collect_all: bool,
    bound: f64,
    found: Vec<ORoute>,
    overflow: bool,
    stops: Vec<OStop>,
    frames: Vec<Frame>,
}

impl RouteEnum<'_> {
    fn event(&self, e: usize) -> (ShipmentId, bool, LocationId) {
        let s = self.ships[e / 2];
        let sh = self.instance.shipment(s);
        if e % 2 == 0 {
            (s, true, sh.source)
        } else {
            (s, false, sh.destination)
        }
    }

    fn window_of(&self, s: ShipmentId, pickup: bool) -> (Minutes, Minutes) {
        let sh = self.instance.shipment(s);
        let w = if pickup { sh.pickup_window } else { sh.delivery_window };
        (w.open, w.close)
    }

    fn dfs(&mut self, done: u32, dist: f64) {
        if self.overflow {
            return;
        }
        let m = self.ships.len();
        if done.count_ones() as usize == 2 * m {
            self.leaf(dist);
            return;
        }
        let yard = self.truck.home_yard;
        for e in 0..2 * m {
            if done & (1 << e) != 0 || (e % 2 == 1 && done & (1 << (e - 1)) == 0) {
                continue;
            }
            let (s, pickup, loc) = self.event(e);
            let (wo, wc) = self.window_of(s, pickup);
            let location = self.instance.location(loc);
            let merge = self.frames.last().is_some_and(|f| f.location == loc);
            if merge {
                let f = self.frames.last().unwrap();
                if e < f.last_event {
                    continue;
                }
                let open = f.open.max(wo);
                let close = f.close.min(wc);
                let start = f.start.max(open);
                let end = start + location.handling_time;
                if end > close {
                    continue;
                }
                let saved = (f.start, f.end, f.open, f.close, f.last_event);
                {
                    let f = self.frames.last_mut().unwrap();
                    f.start = start;
                    f.end = end;
                    f.open = open;
                    f.close = close;
                    f.last_event = e;
                }
                let stop = self.stops.last_mut().unwrap();
                if pickup {
                    stop.pickups.push(s);
                } else {
                    stop.deliveries.push(s);
                }
                self.dfs(done | (1 << e), dist);
                let stop = self.stops.last_mut().unwrap();
                if pickup {
                    stop.pickups.pop();
                } else {
                    stop.deliveries.pop();
                }
                let f = self.frames.last_mut().unwrap();
                (f.start, f.end, f.open, f.close, f.last_event) = saved;
            } else {
                if location.must_be_first && !self.frames.is_empty() {
                    continue;
                }
                if let Some(f) = self.frames.last() {
                    if self.instance.location(f.location).must_be_last {
                        continue;
                    }
                }
                if !location.admits(self.truck) {
                    continue;
                }
                if let Some(limit) = location.max_visits {
                    let visits = self.frames.iter().filter(|f| f.location == loc).count() as u32;
                    if visits + 1 > limit {
                        continue;
                    }
                }
                let (prev, t) = self
                    .frames
                    .last()
                    .map_or((yard, 0), |f| (f.location, f.end));
                let d = dist + self.instance.distance(prev, loc);
                if d * self.truck.cost_per_distance > self.bound + EPS {
                    continue;
                }
                let arrival = t + self.instance.travel_time(prev, loc);
                let open = location.working_window.open.max(wo);
                let close = location.working_window.close.min(wc);
                let start = arrival.max(open);
                let end = start + location.handling_time;
                if end > close {
                    continue;
                }
                self.frames.push(Frame {
                    location: loc,
                    start,
                    end,
                    open,
                    close,
                    last_event: e,
                });
                self.stops.push(OStop {
                    location: loc,
                    pickups: if pickup { vec![s] } else { vec![] },
                    deliveries: if pickup { vec![] } else { vec![s] },
                });
                self.dfs(done | (1 << e), d);
                self.stops.pop();
                self.frames.pop();
            }
        }
    }

    fn leaf(&mut self, dist: f64) {
        let yard = self.truck.home_yard;
        let f = self.frames.last().expect("at least one stop");
        let total = (dist + self.instance.distance(f.location, yard)) * self.truck.cost_per_distance;
        if total > self.bound + EPS {
            return;
        }
        if !self.collect_all && total >= self.bound - EPS && !self.found.is_empty() {
            return;
        }
        let back = f.end + self.instance.travel_time(f.location, yard);
        if back > self.instance.location(yard).working_window.close || back > horizon(&self.stops) {
            return;
        }
        let spans: Vec<StopSpan> = self
            .columns
            .iter()
            .map(|(k, _)| {
                let s = self.ships[*k];
                let p = self.stops.iter().position(|st| st.pickups.contains(&s)).unwrap();
                let d = self.stops.iter().position(|st| st.deliveries.contains(&s)).unwrap();
                StopSpan::new(p + 1, d + 1)
            })
            .collect();
        let cols: Vec<Column> = self.columns.iter().map(|(_, c)| c.clone()).collect();
        let Some(coords) = search_pack(&cols, self.truck, &spans) else {
            return;
        };
        let route = ORoute {
            cost: total,
            stops: self.stops.clone(),
            coords,
        };
        if self.collect_all {
            self.found.push(route);
            if self.found.len() > ROUTE_ENUMERATION_CAP {
                self.overflow = true;
            }
        } else {
            self.bound = total;
            self.found = vec![route];
        }
    }
}

/// Horizon from the number of back-to-back trips of a stop list.
fn horizon(stops: &[OStop]) -> Minutes {
    let mut onboard = 0usize;
    let mut empties = 0;
    for (k, s) in stops.iter().enumerate() {
        onboard = onboard + s.pickups.len() - s.deliveries.len();
        if onboard == 0 && k + 1 < stops.len() {
            empties += 1;
        }
    }
    if empties > 0 {
        MERGED_HORIZON
    } else {
        DAY_HORIZON
    }
}

fn enumerate_routes(
    instance: &Instance,
    truck: &Truck,
    ships: &[ShipmentId],
    bound: f64,
    collect_all: bool,
) -> Result<Vec<ORoute>> {
    let mut columns = Vec::new();
    for (k, &s) in ships.iter().enumerate() {
        for c in build_columns(instance.shipment(s), &instance.pallet)? {
            columns.push((k, c));
        }
    }
    if columns.len() > SOLVE_MAX_COLUMNS {
        return Err(Error::OracleLimits(format!(
            "truck {} would carry {} columns (limit {SOLVE_MAX_COLUMNS})",
            truck.id,
            columns.len()
        )));
    }
    let city = &instance.location(instance.shipment(ships[0]).source).city;
    if ships
        .iter()
        .any(|&s| &instance.location(instance.shipment(s).source).city != city)
    {
        return Ok(Vec::new());
    }
    let mut e = RouteEnum {
        instance,
        truck,
        ships: ships.to_vec(),
        columns,
        collect_all,
        bound,
        found: Vec::new(),
        overflow: false,
        stops: Vec::new(),
        frames: Vec::new(),
    };
    e.dfs(0, 0.0);
    if e.overflow {
        return Err(Error::OracleLimits("too many alternative routes".into()));
    }
    let mut found = e.found;
    found.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    Ok(found)
}

// ---------------------------------------------------------------------------
// Queues

struct Timed {
    arrival: Minutes,
    start: Minutes,
    end: Minutes,
}

/// Linear-scan event simulation of all routes; `None` when any window,
/// return deadline or hub precedence fails.
fn simulate(instance: &Instance, routes: &[(TruckId, &ORoute)]) -> Option<Vec<Vec<Timed>>> {
    let mut times: Vec<Vec<Timed>> = routes.iter().map(|_| Vec::new()).collect();
    let mut next = vec![0usize; routes.len()];
    let mut free_at = vec![0 as Minutes; routes.len()];
    let mut returned = vec![false; routes.len()];
    let mut docks: BTreeMap<LocationId, Vec<Minutes>> = BTreeMap::new();

    loop {
        // Pick the pending stop with the earliest ready time (ties: truck id).
        let mut pick: Option<(Minutes, TruckId, usize)> = None;
        for (r, (truck, route)) in routes.iter().enumerate() {
            if returned[r] {
                continue;
            }
            let t = instance.truck(*truck);
            let (prev, dep) = if next[r] == 0 {
                (t.home_yard, 0)
            } else {
                (route.stops[next[r] - 1].location, free_at[r])
            };
            let ready = if next[r] < route.stops.len() {
                let st = &route.stops[next[r]];
                let arrival = dep + instance.travel_time(prev, st.location);
                arrival.max(window(instance, st).0)
            } else {
                dep + instance.travel_time(prev, t.home_yard)
            };
            if pick.is_none_or(|(bt, btr, _)| (ready, *truck) < (bt, btr)) {
                pick = Some((ready, *truck, r));
            }
        }
        let Some((ready, truck, r)) = pick else {
            break;
        };
        let t = instance.truck(truck);
        let route = routes[r].1;
        if next[r] == route.stops.len() {
            let limit = instance.location(t.home_yard).working_window.close.min(horizon(&route.stops));
            if ready > limit {
                return None;
            }
            returned[r] = true;
            times[r].push(Timed {
                arrival: ready,
                start: ready,
                end: ready,
            });
            continue;
        }
        let st = &route.stops[next[r]];
        let prev = if next[r] == 0 {
            t.home_yard
        } else {
            route.stops[next[r] - 1].location
        };
        let arrival = (if next[r] == 0 { 0 } else { free_at[r] }) + instance.travel_time(prev, st.location);
        let loc = instance.location(st.location);
        let pool = docks
            .entry(st.location)
            .or_insert_with(|| vec![Minutes::MIN; loc.dock_count as usize]);
        let (slot, &earliest) = pool
            .iter()
            .enumerate()
            .min_by_key(|(_, f)| **f)
            .expect("at least one dock");
        let start = ready.max(earliest);
        let end = start + loc.handling_time;
        pool[slot] = end;
        if end > window(instance, st).1 {
            return None;
        }
        times[r].push(Timed { arrival, start, end });
        free_at[r] = end;
        next[r] += 1;
    }

    for link in &instance.hub_links {
        let mut up_end = None;
        let mut down_start = None;
        for (r, (_, route)) in routes.iter().enumerate() {
            for (k, st) in route.stops.iter().enumerate() {
                if st.deliveries.contains(&link.upstream) {
                    up_end = Some(times[r][k].end);
                }
                if st.pickups.contains(&link.downstream) {
                    down_start = Some(times[r][k].start);
                }
            }
        }
        if let (Some(e), Some(s)) = (up_end, down_start) {
            if e > s {
                return None;
            }
        }
    }
    Some(times)
}

fn window(instance: &Instance, st: &OStop) -> (Minutes, Minutes) {
    let loc = instance.location(st.location);
    let mut open = loc.working_window.open;
    let mut close = loc.working_window.close;
    for s in &st.pickups {
        let w = instance.shipment(*s).pickup_window;
        open = open.max(w.open);
        close = close.min(w.close);
    }
    for s in &st.deliveries {
        let w = instance.shipment(*s).delivery_window;
        open = open.max(w.open);
        close = close.min(w.close);
    }
    (open, close)
}

fn visits_ok(instance: &Instance, routes: &[(TruckId, &ORoute)]) -> bool {
    let mut visits: BTreeMap<LocationId, u32> = BTreeMap::new();
    for (_, r) in routes {
        for st in &r.stops {
            *visits.entry(st.location).or_default() += 1;
        }
    }
    visits
        .iter()
        .all(|(l, v)| instance.location(*l).max_visits.is_none_or(|m| *v <= m))
}

// ---------------------------------------------------------------------------
// Whole instance

/// Minimum-mileage feasible solution of a tiny instance, or `None` when the
/// instance has no feasible solution.
pub fn exact_solve(instance: &Instance) -> Result<Option<Solution>> {
    exact_solve_with(instance, &OracleLimits::default())
}

pub fn exact_solve_with(instance: &Instance, limits: &OracleLimits) -> Result<Option<Solution>> {
    let n = instance.shipments.len();
    let m = instance.trucks.len();
    if n > limits.max_shipments || m > limits.max_trucks {
        return Err(Error::OracleLimits(format!(
            "{n} shipments / {m} trucks exceed {} / {}",
            limits.max_shipments, limits.max_trucks
        )));
    }
    if n == 0 {
        return Ok(Some(Solution::empty(instance)));
    }

    // Cheapest route per (truck, subset).
    let subsets = 1usize << n;
    let members = |mask: usize| -> Vec<ShipmentId> {
        (0..n).filter(|j| mask & (1 << j) != 0).map(|j| ShipmentId(j as u32)).collect()
    };
    let mut best_route: Vec<Vec<Option<ORoute>>> = vec![vec![None; subsets]; m];
    for (t, row) in best_route.iter_mut().enumerate() {
        let truck = &instance.trucks[t];
        for (mask, slot) in row.iter_mut().enumerate().skip(1) {
            let found = enumerate_routes(instance, truck, &members(mask), f64::INFINITY, false)?;
            *slot = found.into_iter().next();
        }
    }

    // Assignments as a subset per truck, ordered by lower bound.
    let mut assignments: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut code = vec![0usize; n];
    loop {
        let mut masks = vec![0usize; m];
        for (j, &t) in code.iter().enumerate() {
            masks[t] |= 1 << j;
        }
        let mut lb = 0.0;
        let mut ok = true;
        for (t, &mask) in masks.iter().enumerate() {
            if mask == 0 {
                continue;
            }
            match &best_route[t][mask] {
                Some(r) => lb += r.cost,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            assignments.push((lb, masks));
        }
        let mut k = 0;
        while k < n {
            code[k] += 1;
            if code[k] < m {
                break;
            }
            code[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    assignments.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best: Option<(f64, Vec<(TruckId, ORoute)>)> = None;
    let mut failed: Vec<usize> = Vec::new();
    for (idx, (lb, masks)) in assignments.iter().enumerate() {
        if best.as_ref().is_some_and(|(b, _)| *lb >= *b - EPS) {
            break;
        }
        let routes: Vec<(TruckId, &ORoute)> = masks
            .iter()
            .enumerate()
            .filter(|(_, &mask)| mask != 0)
            .map(|(t, &mask)| (TruckId(t as u32), best_route[t][mask].as_ref().unwrap()))
            .collect();
        if visits_ok(instance, &routes) && simulate(instance, &routes).is_some() {
            best = Some((*lb, routes.iter().map(|(t, r)| (*t, (*r).clone())).collect()));
            break;
        }
        failed.push(idx);
    }

    // Assignments whose cheapest routes clash in the queues may still win
    // with costlier routes.
    for idx in failed {
        let (lb, masks) = &assignments[idx];
        let ceiling = best.as_ref().map_or(f64::INFINITY, |(b, _)| *b);
        if *lb >= ceiling - EPS {
            continue;
        }
        let mut options: Vec<(TruckId, Vec<ORoute>)> = Vec::new();
        for (t, &mask) in masks.iter().enumerate() {
            if mask == 0 {
                continue;
            }
            let own = best_route[t][mask].as_ref().unwrap().cost;
            let bound = ceiling - (lb - own);
            let list = enumerate_routes(instance, &instance.trucks[t], &members(mask), bound, true)?;
            options.push((TruckId(t as u32), list));
        }
        let mut combos: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut pick = vec![0usize; options.len()];
        'outer: loop {
            let total: f64 = pick.iter().zip(&options).map(|(&i, (_, l))| l[i].cost).sum();
            if total < ceiling - EPS {
                combos.push((total, pick.clone()));
                if combos.len() > ROUTE_ENUMERATION_CAP {
                    return Err(Error::OracleLimits("too many route combinations".into()));
                }
            }
            let mut k = 0;
            loop {
                if k == pick.len() {
                    break 'outer;
                }
                pick[k] += 1;
                if pick[k] < options[k].1.len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
        }
        combos.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (total, pick) in combos {
            let routes: Vec<(TruckId, &ORoute)> = pick
                .iter()
                .zip(&options)
                .map(|(&i, (t, l))| (*t, &l[i]))
                .collect();
            if visits_ok(instance, &routes) && simulate(instance, &routes).is_some() {
                if best.as_ref().is_none_or(|(b, _)| total < *b - EPS) {
                    best = Some((total, routes.iter().map(|(t, r)| (*t, (*r).clone())).collect()));
                }
                break;
            }
        }
    }

    let Some((total, routes)) = best else {
        return Ok(None);
    };
    Ok(Some(to_solution(instance, total, &routes)?))
}

fn to_solution(instance: &Instance, total: f64, routes: &[(TruckId, ORoute)]) -> Result<Solution> {
    let refs: Vec<(TruckId, &ORoute)> = routes.iter().map(|(t, r)| (*t, r)).collect();
    let times = simulate(instance, &refs).expect("checked feasible");
    let mut assignment = Assignment::unassigned(instance.shipments.len());
    let mut out_routes = Vec::new();
    let mut placements = Vec::new();
    for ((truck, r), timed) in routes.iter().zip(&times) {
        let t = instance.truck(*truck);
        let mut stops = vec![Stop::yard(t.home_yard, 0)];
        for (st, tm) in r.stops.iter().zip(timed) {
            let mut pickups = st.pickups.clone();
            let mut deliveries = st.deliveries.clone();
            pickups.sort_unstable();
            deliveries.sort_unstable();
            for &s in &pickups {
                assignment.assign(s, *truck);
            }
            stops.push(Stop {
                location: st.location,
                pickups,
                deliveries,
                arrival: tm.arrival,
                wait: tm.start - tm.arrival,
                departure: tm.end,
            });
        }
        let back = timed.last().expect("return recorded").arrival;
        stops.push(Stop::yard(t.home_yard, back));

        let mut items = Vec::new();
        let mut k = 0;
        let mut ships: Vec<ShipmentId> = r.stops.iter().flat_map(|s| s.pickups.iter().copied()).collect();
        ships.sort_unstable();
        // Column order matches the enumeration: shipments in ascending id.
        for s in ships {
            for c in build_columns(instance.shipment(s), &instance.pallet)? {
                let (u, v) = r.coords[k];
                items.push(PlacedItem { column: c, u, v });
                k += 1;
            }
        }
        out_routes.push(Route {
            truck: *truck,
            stops,
        });
        placements.push(Placement {
            truck: *truck,
            items,
        });
    }
    Ok(Solution {
        assignment,
        routes: out_routes,
        placements,
        total_mileage: total,
        feasibility: Feasibility::from_violations(&[]),
        diagnostics: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truck(w: f64, l: f64) -> Truck {
        Truck {
            id: TruckId(0),
            model: "t".into(),
            surface_width: w,
            surface_length: l,
            length_class: "x".into(),
            cost_per_distance: 1.0,
            home_yard: LocationId(0),
        }
    }

    fn col(w: f64, l: f64) -> Column {
        Column {
            shipment: ShipmentId(0),
            width: w,
            length: l,
            layers: 1,
            on_pallet: false,
            pallets: Vec::new(),
        }
    }

    #[test]
    fn exact_pack_examples() {
        let spans = [StopSpan::new(1, 2); 2];
        assert!(exact_pack(&[col(1.0, 1.0), col(1.0, 1.0)], &truck(2.0, 1.0), &spans).unwrap());
        assert!(!exact_pack(&[col(3.0, 1.0)], &truck(2.0, 2.0), &spans[..1]).unwrap());
        let six: Vec<Column> = (0..6).map(|_| col(1.0, 1.0)).collect();
        assert!(exact_pack(&six, &truck(6.0, 1.0), &[StopSpan::new(1, 2); 6]).is_err());
    }

    #[test]
    fn exact_pack_needs_a_second_row() {
        // Three 1×1 items on a 2×2 floor force one item behind another.
        let cols = [col(1.0, 1.0), col(1.0, 1.0), col(1.0, 1.0)];
        let t = truck(2.0, 2.0);
        assert!(exact_pack(&cols, &t, &[StopSpan::new(1, 4); 3]).unwrap());
        // Two lanes, three items each delivered in pickup order: every lane
        // holding two items would need last-in-first-out.
        let fifo = [StopSpan::new(1, 4), StopSpan::new(2, 5), StopSpan::new(3, 6)];
        assert!(!exact_pack(&cols, &t, &fifo).unwrap());
    }

    #[test]
    fn forklift_matches_hand_cases() {
        let items = [
            Item { w: 1.0, l: 1.0, pickup: 1, delivery: 2 },
            Item { w: 1.0, l: 1.0, pickup: 1, delivery: 3 },
        ];
        // Item 0 leaves first, so it must be at the rear.
        assert!(forklift(&items, &[(0.0, 0.0), (0.0, 1.0)]));
        assert!(!forklift(&items, &[(0.0, 1.0), (0.0, 0.0)]));
        assert!(forklift(&items, &[(0.0, 0.0), (1.0, 0.0)]));
    }
}
