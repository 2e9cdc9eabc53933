use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    total_mileage, Instance, LocationId, LocationKind, Minutes, Route, ShipmentId, Solution, Truck,
    TruckId, EPS,
};
use crate::loading::{items_overlap, Placement, StopSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintFamily {
    /// Working windows and time propagation.
    A1,
    /// Dock capacity and queueing.
    A2,
    /// Shipment windows and pickup-before-delivery.
    A3,
    /// Stacking into columns and pallets.
    B1,
    /// Placement inside the surface without overlap.
    B2,
    /// Rear-unloading sequence.
    B3,
    #[serde(rename = "hub")]
    Hub,
    /// Every shipment carried by exactly one truck.
    #[serde(rename = "loaded")]
    Loaded,
    /// City, dock length, visit count and first/last rules.
    #[serde(rename = "side")]
    Side,
    /// Route shape, id references and the stored objective.
    #[serde(rename = "structure")]
    Structure,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 10] = [
        Self::A1,
        Self::A2,
        Self::A3,
        Self::B1,
        Self::B2,
        Self::B3,
        Self::Hub,
        Self::Loaded,
        Self::Side,
        Self::Structure,
    ];
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::A1 => "A1",
            Self::A2 => "A2",
            Self::A3 => "A3",
            Self::B1 => "B1",
            Self::B2 => "B2",
            Self::B3 => "B3",
            Self::Hub => "hub",
            Self::Loaded => "loaded",
            Self::Side => "side",
            Self::Structure => "structure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityRef {
    Shipment(ShipmentId),
    Truck(TruckId),
    Location(LocationId),
    Stop { truck: TruckId, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    pub rule: String,
    pub entities: Vec<EntityRef>,
}

impl Violation {
    fn new(family: ConstraintFamily, rule: impl Into<String>, entities: Vec<EntityRef>) -> Self {
        Self {
            family,
            rule: rule.into(),
            entities,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {} {:?}", self.family, self.rule, self.entities)
    }
}

use ConstraintFamily as F;

/// Checks a complete solution against every constraint family.
///
/// Never fails; an empty result means the solution is feasible.
pub fn validate_solution(solution: &Solution, instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_ship = instance.shipments.len();
    let n_truck = instance.trucks.len();

    if solution.assignment.trucks.len() != n_ship {
        out.push(Violation::new(
            F::Structure,
            "assignment covers every shipment id",
            vec![],
        ));
        return out;
    }
    for (j, t) in solution.assignment.trucks.iter().enumerate() {
        let s = EntityRef::Shipment(ShipmentId(j as u32));
        match t {
            None => out.push(Violation::new(F::Loaded, "shipment assigned to a truck", vec![s])),
            Some(t) if t.index() >= n_truck => {
                out.push(Violation::new(F::Structure, "truck id resolves", vec![s]));
                return out;
            }
            Some(_) => {}
        }
    }

    let by_truck = solution.assignment.by_truck();
    let mut seen_routes: BTreeMap<TruckId, usize> = BTreeMap::new();
    for route in &solution.routes {
        if route.truck.index() >= n_truck {
            out.push(Violation::new(
                F::Structure,
                "route truck id resolves",
                vec![EntityRef::Truck(route.truck)],
            ));
            return out;
        }
        *seen_routes.entry(route.truck).or_default() += 1;
    }
    for (&t, &count) in &seen_routes {
        if count > 1 {
            out.push(Violation::new(
                F::Structure,
                "one route per truck",
                vec![EntityRef::Truck(t)],
            ));
        }
        if !by_truck.contains_key(&t) {
            out.push(Violation::new(
                F::Structure,
                "route only for used trucks",
                vec![EntityRef::Truck(t)],
            ));
        }
    }
    for &t in by_truck.keys() {
        if !seen_routes.contains_key(&t) {
            out.push(Violation::new(
                F::Loaded,
                "used truck has a route",
                vec![EntityRef::Truck(t)],
            ));
        }
    }

    for route in &solution.routes {
        let truck = instance.truck(route.truck);
        let assigned = by_truck.get(&route.truck).cloned().unwrap_or_default();
        if !check_route_shape(route, truck, &assigned, instance, &mut out) {
            continue;
        }
        check_route_times(route, instance, &mut out);
        if !side_constraints_ok(truck, &assigned, route, instance) {
            out.push(Violation::new(
                F::Side,
                "city, dock length and first/last rules",
                vec![EntityRef::Truck(route.truck)],
            ));
        }
        match solution.placement_of(route.truck) {
            Some(p) => check_loading(p, route, truck, &assigned, instance, &mut out),
            None => out.push(Violation::new(
                F::B2,
                "used truck has a placement",
                vec![EntityRef::Truck(route.truck)],
            )),
        }
    }
    for p in &solution.placements {
        if !seen_routes.contains_key(&p.truck) {
            out.push(Violation::new(
                F::Structure,
                "placement only for routed trucks",
                vec![EntityRef::Truck(p.truck)],
            ));
        }
    }

    if !visit_limits_ok(&solution.routes, instance) {
        out.push(Violation::new(F::Side, "visit count within max_visits", vec![]));
    }
    check_docks(&solution.routes, instance, &mut out);
    check_hubs(solution, instance, &mut out);

    match total_mileage(solution, instance) {
        Ok(m) => {
            if (m - solution.total_mileage).abs() > 1e-6 * m.abs().max(1.0) {
                out.push(Violation::new(
                    F::Structure,
                    "stored total mileage equals the recomputed objective",
                    vec![],
                ));
            }
        }
        Err(_) => out.push(Violation::new(F::Structure, "route locations resolve", vec![])),
    }
    out
}

fn stop_ref(route: &Route, index: usize) -> EntityRef {
    EntityRef::Stop {
        truck: route.truck,
        index,
    }
}

/// Endpoints, id references and the pickup/delivery bookkeeping. Returns
/// false when the route is too broken for the remaining checks.
fn check_route_shape(
    route: &Route,
    truck: &Truck,
    assigned: &[ShipmentId],
    instance: &Instance,
    out: &mut Vec<Violation>,
) -> bool {
    let t = EntityRef::Truck(route.truck);
    if route.stops.len() < 2 {
        out.push(Violation::new(F::Structure, "route starts and ends at the yard", vec![t]));
        return false;
    }
    for (k, stop) in route.stops.iter().enumerate() {
        if stop.location.index() >= instance.locations.len() {
            out.push(Violation::new(F::Structure, "stop location resolves", vec![stop_ref(route, k)]));
            return false;
        }
        for s in stop.pickups.iter().chain(&stop.deliveries) {
            if s.index() >= instance.shipments.len() {
                out.push(Violation::new(F::Structure, "shipment id resolves", vec![stop_ref(route, k)]));
                return false;
            }
        }
    }
    let last = route.stops.len() - 1;
    for k in [0, last] {
        let s = &route.stops[k];
        if s.location != truck.home_yard || !s.is_empty() {
            out.push(Violation::new(
                F::Structure,
                "route starts and ends at the home yard",
                vec![stop_ref(route, k)],
            ));
        }
    }
    for k in 1..last {
        if route.stops[k].is_empty() {
            out.push(Violation::new(F::Structure, "inner stops serve shipments", vec![stop_ref(route, k)]));
        }
    }

    let mut ok = true;
    let mut pick: HashMap<ShipmentId, Vec<usize>> = HashMap::new();
    let mut drop: HashMap<ShipmentId, Vec<usize>> = HashMap::new();
    for (k, stop) in route.stops.iter().enumerate() {
        for &s in &stop.pickups {
            pick.entry(s).or_default().push(k);
            if instance.shipment(s).source != stop.location {
                out.push(Violation::new(
                    F::Structure,
                    "pickup at the shipment source",
                    vec![EntityRef::Shipment(s), stop_ref(route, k)],
                ));
            }
        }
        for &s in &stop.deliveries {
            drop.entry(s).or_default().push(k);
            if instance.shipment(s).destination != stop.location {
                out.push(Violation::new(
                    F::Structure,
                    "delivery at the shipment destination",
                    vec![EntityRef::Shipment(s), stop_ref(route, k)],
                ));
            }
        }
    }
    for &s in assigned {
        let p = pick.get(&s).map_or(&[][..], |v| v.as_slice());
        let d = drop.get(&s).map_or(&[][..], |v| v.as_slice());
        if p.len() != 1 || d.len() != 1 {
            out.push(Violation::new(
                F::Loaded,
                "assigned shipment picked up and delivered once",
                vec![EntityRef::Shipment(s), EntityRef::Truck(route.truck)],
            ));
            ok = false;
        } else if p[0] >= d[0] {
            out.push(Violation::new(
                F::A3,
                "p_j < d_j",
                vec![EntityRef::Shipment(s), EntityRef::Truck(route.truck)],
            ));
        }
    }
    for s in pick.keys().chain(drop.keys()) {
        if !assigned.contains(s) {
            out.push(Violation::new(
                F::Structure,
                "route serves only its assigned shipments",
                vec![EntityRef::Shipment(*s), EntityRef::Truck(route.truck)],
            ));
            ok = false;
        }
    }
    ok
}

fn check_route_times(route: &Route, instance: &Instance, out: &mut Vec<Violation>) {
    let first = &route.stops[0];
    if first.departure != 0 || first.arrival != 0 || first.wait != 0 {
        out.push(Violation::new(F::A1, "t_i0 = 0", vec![stop_ref(route, 0)]));
    }
    let last = route.stops.len() - 1;
    for k in 1..=last {
        let prev = &route.stops[k - 1];
        let stop = &route.stops[k];
        let r = vec![stop_ref(route, k)];
        if stop.arrival != prev.departure + instance.travel_time(prev.location, stop.location) {
            out.push(Violation::new(F::A1, "arrival = departure + travel time", r.clone()));
        }
        if stop.wait < 0 {
            out.push(Violation::new(F::A1, "non-negative wait", r.clone()));
        }
        let loc = instance.location(stop.location);
        if k == last {
            if stop.departure != stop.arrival + stop.wait {
                out.push(Violation::new(F::A1, "yard return time consistent", r.clone()));
            }
            if !loc.working_window.contains(stop.arrival) || stop.arrival > route.horizon() {
                out.push(Violation::new(F::A1, "return within yard window and horizon", r));
            }
            continue;
        }
        let start = stop.service_start();
        let end = start + loc.handling_time;
        if stop.departure != end {
            out.push(Violation::new(
                F::A1,
                "departure = arrival + wait + handling",
                r.clone(),
            ));
        }
        if !loc.working_window.contains_interval(start, end) {
            out.push(Violation::new(F::A1, "service inside working window", r.clone()));
        }
        for &s in &stop.pickups {
            if !instance.shipment(s).pickup_window.contains_interval(start, end) {
                out.push(Violation::new(
                    F::A3,
                    "pickup inside pickup window",
                    vec![EntityRef::Shipment(s), r[0]],
                ));
            }
        }
        for &s in &stop.deliveries {
            if !instance.shipment(s).delivery_window.contains_interval(start, end) {
                out.push(Violation::new(
                    F::A3,
                    "delivery inside delivery window",
                    vec![EntityRef::Shipment(s), r[0]],
                ));
            }
        }
    }
}

fn check_loading(
    placement: &Placement,
    route: &Route,
    truck: &Truck,
    assigned: &[ShipmentId],
    instance: &Instance,
    out: &mut Vec<Violation>,
) {
    let t = EntityRef::Truck(route.truck);
    let mut bins: HashMap<ShipmentId, u32> = HashMap::new();
    let mut rects = Vec::with_capacity(placement.items.len());
    for item in &placement.items {
        let c = &item.column;
        let Some((p, d)) = route.span_of(c.shipment) else {
            out.push(Violation::new(
                F::Structure,
                "placed column belongs to a carried shipment",
                vec![EntityRef::Shipment(c.shipment), t],
            ));
            continue;
        };
        let sh = instance.shipment(c.shipment);
        let s = EntityRef::Shipment(c.shipment);
        *bins.entry(c.shipment).or_default() += c.bins();

        if c.on_pallet != sh.needs_pallet {
            out.push(Violation::new(F::B1, "pallet use matches the shipment", vec![s, t]));
        }
        let pallet = &instance.pallet;
        if c.on_pallet {
            let fp = (c.width - pallet.width).abs() <= EPS && (c.length - pallet.length).abs() <= EPS;
            if !fp || c.layers == 0 || c.layers > pallet.stack_limit || c.layers as usize != c.pallets.len() {
                out.push(Violation::new(F::B1, "pallet stack within limits", vec![s, t]));
            }
            for load in &c.pallets {
                let mut inner = Vec::new();
                for pc in &load.columns {
                    let r = (pc.u, pc.v, sh.bin.width, sh.bin.length);
                    if pc.layers == 0
                        || pc.layers > sh.bin.stack_limit
                        || pc.u < -EPS
                        || pc.v < -EPS
                        || pc.u + sh.bin.width > pallet.width + EPS
                        || pc.v + sh.bin.length > pallet.length + EPS
                        || inner.iter().any(|o| items_overlap(r, *o))
                    {
                        out.push(Violation::new(F::B1, "bin columns fit on the pallet", vec![s, t]));
                    }
                    inner.push(r);
                }
            }
        } else {
            let fp = (c.width - sh.bin.width).abs() <= EPS && (c.length - sh.bin.length).abs() <= EPS;
            if !fp || c.layers == 0 || c.layers > sh.bin.stack_limit || !c.pallets.is_empty() {
                out.push(Violation::new(F::B1, "l_jθ ≤ stack limit", vec![s, t]));
            }
        }

        if item.u < -EPS
            || item.v < -EPS
            || item.u + c.width > truck.surface_width + EPS
            || item.v + c.length > truck.surface_length + EPS
        {
            out.push(Violation::new(F::B2, "column inside the loading surface", vec![s, t]));
        }
        rects.push(((item.u, item.v, c.width, c.length), StopSpan::new(p, d), c.shipment));
    }
    for &s in assigned {
        if bins.get(&s).copied().unwrap_or(0) != instance.shipment(s).bin_count {
            out.push(Violation::new(
                F::B1,
                "every bin stacked and placed",
                vec![EntityRef::Shipment(s), t],
            ));
        }
    }
    for (i, a) in rects.iter().enumerate() {
        for b in &rects[i + 1..] {
            let pair = vec![EntityRef::Shipment(a.2), EntityRef::Shipment(b.2), t];
            if !a.1.co_onboard(b.1) {
                continue;
            }
            if items_overlap(a.0, b.0) {
                out.push(Violation::new(F::B2, "no two columns overlap", pair));
            } else if !crate::loading::sequence_ok(&[(a.0, a.1), (b.0, b.1)]) {
                out.push(Violation::new(F::B3, "rear unloading sequence", pair));
            }
        }
    }
}

/// Sweeps recorded service intervals per location against the dock count.
fn check_docks(routes: &[Route], instance: &Instance, out: &mut Vec<Violation>) {
    let mut per_loc: BTreeMap<LocationId, Vec<(Minutes, i32)>> = BTreeMap::new();
    for route in routes {
        let n = route.stops.len();
        for stop in route.stops.iter().take(n.saturating_sub(1)).skip(1) {
            let Some(loc) = instance.locations.get(stop.location.index()) else {
                continue;
            };
            let start = stop.service_start();
            let end = start + loc.handling_time;
            if end > start {
                let ev = per_loc.entry(stop.location).or_default();
                ev.push((start, 1));
                ev.push((end, -1));
            }
        }
    }
    for (loc, mut events) in per_loc {
        // Departures free the dock before arrivals at the same minute.
        events.sort();
        let cap = instance.location(loc).dock_count as i32;
        let mut busy = 0;
        for (time, delta) in events {
            busy += delta;
            if busy > cap {
                out.push(Violation::new(
                    F::A2,
                    format!("{busy} trucks in service at minute {time} exceed the dock count"),
                    vec![EntityRef::Location(loc)],
                ));
                break;
            }
        }
    }
}

fn check_hubs(solution: &Solution, instance: &Instance, out: &mut Vec<Violation>) {
    let service = |s: ShipmentId, pickup: bool| -> Option<(Minutes, Minutes)> {
        let route = solution.route_of(solution.assignment.truck_of(s)?)?;
        let stop = route.stops.iter().find(|st| {
            if pickup {
                st.pickups.contains(&s)
            } else {
                st.deliveries.contains(&s)
            }
        })?;
        Some((stop.service_start(), stop.departure))
    };
    for link in &instance.hub_links {
        let (Some((_, up_end)), Some((down_start, _))) =
            (service(link.upstream, false), service(link.downstream, true))
        else {
            continue;
        };
        if up_end > down_start {
            out.push(Violation::new(
                F::Hub,
                "downstream pickup after upstream delivery",
                vec![
                    EntityRef::Shipment(link.upstream),
                    EntityRef::Shipment(link.downstream),
                ],
            ));
        }
    }
}

/// Per-truck side constraints.
///
/// Sources share one city, every visited location admits the truck's length
/// class, the route alone respects each `max_visits`, and `must_be_first`
/// / `must_be_last` locations sit right after / before the yard.
pub fn side_constraints_ok(
    truck: &Truck,
    shipments: &[ShipmentId],
    route: &Route,
    instance: &Instance,
) -> bool {
    let mut cities = shipments
        .iter()
        .map(|s| &instance.location(instance.shipment(*s).source).city);
    if let Some(first) = cities.next() {
        if cities.any(|c| c != first) {
            return false;
        }
    }
    let n = route.stops.len();
    let mut visits: HashMap<LocationId, u32> = HashMap::new();
    for (k, stop) in route.stops.iter().enumerate() {
        let loc = instance.location(stop.location);
        if loc.kind == LocationKind::TruckYard && (k == 0 || k + 1 == n) {
            continue;
        }
        if !loc.admits(truck) {
            return false;
        }
        if loc.must_be_first && k != 1 {
            return false;
        }
        if loc.must_be_last && k + 2 != n {
            return false;
        }
        *visits.entry(stop.location).or_default() += 1;
    }
    visits
        .iter()
        .all(|(l, &v)| instance.location(*l).max_visits.is_none_or(|m| v <= m))
}

/// Visit counts summed over all routes respect every `max_visits`.
pub fn visit_limits_ok(routes: &[Route], instance: &Instance) -> bool {
    let mut visits: HashMap<LocationId, u32> = HashMap::new();
    for route in routes {
        let n = route.stops.len();
        for stop in route.stops.iter().take(n.saturating_sub(1)).skip(1) {
            *visits.entry(stop.location).or_default() += 1;
        }
    }
    visits.iter().all(|(l, &v)| {
        instance
            .locations
            .get(l.index())
            .and_then(|loc| loc.max_visits)
            .is_none_or(|m| v <= m)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::dock_fixture;
    use crate::model::{ShipmentId, TruckId};
    use crate::pipeline::assemble;
    use crate::route::{solve_route, RouteParams};

    fn two_on_one_truck() -> (Instance, Solution) {
        let (inst, _) = dock_fixture(2, 1, 10).unwrap();
        let r = solve_route(inst.truck(TruckId(0)), &[ShipmentId(0), ShipmentId(1)], &inst, &RouteParams::default());
        let sol = assemble(&inst, vec![(r.route.unwrap(), r.placement.unwrap())]);
        (inst, sol)
    }

    #[test]
    fn hand_built_solution_is_clean() {
        let (inst, sol) = two_on_one_truck();
        assert_eq!(sol.routes[0].stops.len(), 4);
        assert_eq!(validate_solution(&sol, &inst), vec![]);
        assert!(sol.is_feasible());
    }

    #[test]
    fn delivery_before_pickup_is_an_a3_breach() {
        let (inst, mut sol) = two_on_one_truck();
        let stops = &mut sol.routes[0].stops;
        let s = stops[1].pickups.pop().unwrap();
        stops[2].deliveries.retain(|&d| d != s);
        stops[1].deliveries.push(s);
        stops[2].pickups.push(s);
        let found = validate_solution(&sol, &inst);
        assert!(found.iter().any(|v| v.family == ConstraintFamily::A3 && v.rule == "p_j < d_j"), "{found:?}");
    }

    #[test]
    fn missing_assignment_is_reported_as_unloaded() {
        let (inst, mut sol) = two_on_one_truck();
        sol.assignment.trucks[1] = None;
        let found = validate_solution(&sol, &inst);
        assert!(found.iter().any(|v| v.family == ConstraintFamily::Loaded));
    }

    #[test]
    fn short_assignment_stops_the_check() {
        let (inst, mut sol) = two_on_one_truck();
        sol.assignment.trucks.pop();
        let found = validate_solution(&sol, &inst);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].family, ConstraintFamily::Structure);
    }
}
