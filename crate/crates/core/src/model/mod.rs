//! Domain types: the immutable [`Instance`], the mutable [`Assignment`], and
//! the derived [`Route`] / [`Solution`] records.
//!
//! Identifiers are dense indices: `LocationId(k)` names `instance.locations[k]`,
//! and likewise for shipments and trucks. Times are integer minutes from the
//! planning day's midnight; distances and surface coordinates are `f64`.

mod objective;
mod validate;

pub use objective::{route_cost, route_distance, total_mileage};
pub use validate::{
    side_constraints_ok, validate_solution, visit_limits_ok, ConstraintFamily, EntityRef,
    Violation,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loading::Placement;
use crate::schedule::GtwReport;

pub type Minutes = i64;

/// Latest return time of an ordinary single-trip route.
pub const DAY_HORIZON: Minutes = 1440;
/// Latest return time of a multi-trip tour.
pub const MERGED_HORIZON: Minutes = 2880;
/// Tolerance for mileage and geometry comparisons.
pub const EPS: f64 = 1e-9;

pub const SCHEMA_VERSION: u32 = 1;

macro_rules! dense_id {
    ($name:ident, $tag:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub const fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($tag, "{}"), self.0)
            }
        }
    };
}

dense_id!(LocationId, "L");
dense_id!(ShipmentId, "S");
dense_id!(TruckId, "T");

/// Closed interval of minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub open: Minutes,
    pub close: Minutes,
}

impl TimeWindow {
    pub const fn new(open: Minutes, close: Minutes) -> Self {
        Self { open, close }
    }

    /// True when the whole service interval `[start, end]` lies inside.
    #[inline]
    pub fn contains_interval(&self, start: Minutes, end: Minutes) -> bool {
        start >= self.open && end <= self.close
    }

    #[inline]
    pub fn contains(&self, t: Minutes) -> bool {
        t >= self.open && t <= self.close
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocationKind {
    Supplier,
    Warehouse,
    Hub,
    TruckYard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: LocationId,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub kind: LocationKind,
    pub working_window: TimeWindow,
    pub dock_count: u32,
    pub handling_time: Minutes,
    pub city: String,
    /// Truck length classes admitted by the docks; `None` admits every class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_truck_lengths: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_visits: Option<u32>,
    #[serde(default)]
    pub must_be_first: bool,
    #[serde(default)]
    pub must_be_last: bool,
    /// Planar coordinates, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
}

impl Location {
    pub fn admits(&self, truck: &Truck) -> bool {
        self.allowed_truck_lengths
            .as_ref()
            .is_none_or(|set| set.contains(&truck.length_class))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelMatrices {
    pub distance: Vec<Vec<f64>>,
    pub travel_time: Vec<Vec<Minutes>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub stack_limit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shipment {
    pub id: ShipmentId,
    pub source: LocationId,
    pub destination: LocationId,
    pub bin_count: u32,
    pub bin: BinSpec,
    #[serde(default)]
    pub needs_pallet: bool,
    pub pickup_window: TimeWindow,
    pub delivery_window: TimeWindow,
}

/// A shipment split at a hub: `upstream` ends at the hub, `downstream` leaves it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubLink {
    pub upstream: ShipmentId,
    pub downstream: ShipmentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truck {
    pub id: TruckId,
    pub model: String,
    pub surface_width: f64,
    pub surface_length: f64,
    pub length_class: String,
    pub cost_per_distance: f64,
    pub home_yard: LocationId,
}

impl Truck {
    #[inline]
    pub fn surface_area(&self) -> f64 {
        self.surface_width * self.surface_length
    }

    /// Everything routing and loading depend on; trucks with equal keys are
    /// interchangeable up to their id.
    pub fn kind_key(&self) -> (u64, u64, u64, LocationId, &str) {
        (
            self.surface_width.to_bits(),
            self.surface_length.to_bits(),
            self.cost_per_distance.to_bits(),
            self.home_yard,
            self.length_class.as_str(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalletSpec {
    pub width: f64,
    pub length: f64,
    pub stack_limit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub schema_version: u32,
    pub locations: Vec<Location>,
    pub matrices: TravelMatrices,
    pub trucks: Vec<Truck>,
    pub shipments: Vec<Shipment>,
    #[serde(default)]
    pub hub_links: Vec<HubLink>,
    pub pallet: PalletSpec,
}

impl Instance {
    #[inline]
    pub fn location(&self, id: LocationId) -> &Location {
        &self.locations[id.index()]
    }

    #[inline]
    pub fn shipment(&self, id: ShipmentId) -> &Shipment {
        &self.shipments[id.index()]
    }

    #[inline]
    pub fn truck(&self, id: TruckId) -> &Truck {
        &self.trucks[id.index()]
    }

    #[inline]
    pub fn distance(&self, from: LocationId, to: LocationId) -> f64 {
        self.matrices.distance[from.index()][to.index()]
    }

    #[inline]
    pub fn travel_time(&self, from: LocationId, to: LocationId) -> Minutes {
        self.matrices.travel_time[from.index()][to.index()]
    }

    pub fn shipment_ids(&self) -> impl Iterator<Item = ShipmentId> + '_ {
        (0..self.shipments.len() as u32).map(ShipmentId)
    }

    pub fn truck_ids(&self) -> impl Iterator<Item = TruckId> + '_ {
        (0..self.trucks.len() as u32).map(TruckId)
    }

    pub fn suppliers(&self) -> impl Iterator<Item = &Location> + '_ {
        self.locations
            .iter()
            .filter(|l| l.kind == LocationKind::Supplier)
    }

    pub fn try_location(&self, id: LocationId) -> Result<&Location> {
        self.locations
            .get(id.index())
            .ok_or(Error::UnknownLocation(id))
    }

    /// Checks every structural invariant of the instance.
    pub fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        for (k, loc) in self.locations.iter().enumerate() {
            let entity = format!("location {}", loc.id);
            if loc.id.index() != k {
                return Err(Error::semantic(
                    entity,
                    format!("ids must be dense; found at position {k}"),
                ));
            }
            if loc.working_window.open >= loc.working_window.close {
                return Err(Error::semantic(entity, "working window open >= close"));
            }
            if loc.dock_count < 1 {
                return Err(Error::semantic(entity, "dock_count must be at least 1"));
            }
            if loc.handling_time < 0 {
                return Err(Error::semantic(entity, "negative handling time"));
            }
            if loc.must_be_first && loc.must_be_last {
                return Err(Error::semantic(
                    entity,
                    "must_be_first and must_be_last are exclusive",
                ));
            }
            if loc.max_visits == Some(0) {
                return Err(Error::semantic(entity, "max_visits must be positive"));
            }
        }

        let m = &self.matrices;
        if m.distance.len() != n || m.travel_time.len() != n {
            return Err(Error::semantic(
                "matrices",
                format!("expected {n} rows for {n} locations"),
            ));
        }
        for i in 0..n {
            if m.distance[i].len() != n || m.travel_time[i].len() != n {
                return Err(Error::semantic("matrices", format!("row {i} is not of length {n}")));
            }
            if m.distance[i][i] != 0.0 || m.travel_time[i][i] != 0 {
                return Err(Error::semantic("matrices", format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let d = m.distance[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::semantic(
                        "matrices",
                        format!("distance[{i}][{j}] = {d} is not a finite non-negative value"),
                    ));
                }
                if m.travel_time[i][j] < 0 {
                    return Err(Error::semantic(
                        "matrices",
                        format!("travel_time[{i}][{j}] is negative"),
                    ));
                }
            }
        }

        for (k, t) in self.trucks.iter().enumerate() {
            let entity = format!("truck {}", t.id);
            if t.id.index() != k {
                return Err(Error::semantic(entity, "ids must be dense"));
            }
            if !(t.surface_width > 0.0 && t.surface_length > 0.0) {
                return Err(Error::semantic(entity, "surface dimensions must be positive"));
            }
            if !(t.cost_per_distance > 0.0) {
                return Err(Error::semantic(entity, "cost_per_distance must be positive"));
            }
            match self.locations.get(t.home_yard.index()) {
                Some(l) if l.kind == LocationKind::TruckYard => {}
                Some(_) => {
                    return Err(Error::semantic(entity, "home_yard is not a truck yard"));
                }
                None => {
                    return Err(Error::semantic(
                        entity,
                        format!("home_yard {} does not exist", t.home_yard),
                    ));
                }
            }
        }

        for (k, s) in self.shipments.iter().enumerate() {
            let entity = format!("shipment {}", s.id);
            if s.id.index() != k {
                return Err(Error::semantic(entity, "ids must be dense"));
            }
            let Some(src) = self.locations.get(s.source.index()) else {
                return Err(Error::semantic(
                    entity,
                    format!("unknown source location {}", s.source),
                ));
            };
            let Some(dst) = self.locations.get(s.destination.index()) else {
                return Err(Error::semantic(
                    entity,
                    format!("unknown destination location {}", s.destination),
                ));
            };
            if s.source == s.destination {
                return Err(Error::semantic(entity, "source equals destination"));
            }
            if !matches!(src.kind, LocationKind::Supplier | LocationKind::Hub) {
                return Err(Error::semantic(entity, "source must be a supplier or hub"));
            }
            if !matches!(dst.kind, LocationKind::Warehouse | LocationKind::Hub) {
                return Err(Error::semantic(entity, "destination must be a warehouse or hub"));
            }
            if s.bin_count < 1 {
                return Err(Error::semantic(entity, "bin_count must be at least 1"));
            }
            if !(s.bin.width > 0.0 && s.bin.length > 0.0) || s.bin.stack_limit < 1 {
                return Err(Error::semantic(entity, "invalid bin specification"));
            }
            if s.pickup_window.open > s.pickup_window.close
                || s.delivery_window.open > s.delivery_window.close
            {
                return Err(Error::semantic(entity, "inverted shipment window"));
            }
        }

        for link in &self.hub_links {
            let entity = format!("hub link {}->{}", link.upstream, link.downstream);
            let (Some(up), Some(down)) = (
                self.shipments.get(link.upstream.index()),
                self.shipments.get(link.downstream.index()),
            ) else {
                return Err(Error::semantic(entity, "unknown shipment"));
            };
            if self.location(up.destination).kind != LocationKind::Hub {
                return Err(Error::semantic(entity, "upstream destination is not a hub"));
            }
            if down.source != up.destination {
                return Err(Error::semantic(
                    entity,
                    "downstream source differs from upstream hub",
                ));
            }
        }

        let p = &self.pallet;
        if !(p.width > 0.0 && p.length > 0.0) || p.stack_limit < 1 {
            return Err(Error::semantic("pallet", "invalid pallet specification"));
        }
        Ok(())
    }
}

/// Truck→shipment relation. `trucks[j]` is the truck carrying shipment `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    pub trucks: Vec<Option<TruckId>>,
}

impl Assignment {
    pub fn unassigned(n_shipments: usize) -> Self {
        Self {
            trucks: vec![None; n_shipments],
        }
    }

    #[inline]
    pub fn truck_of(&self, shipment: ShipmentId) -> Option<TruckId> {
        self.trucks.get(shipment.index()).copied().flatten()
    }

    #[inline]
    pub fn assign(&mut self, shipment: ShipmentId, truck: TruckId) {
        self.trucks[shipment.index()] = Some(truck);
    }

    pub fn shipments_of(&self, truck: TruckId) -> Vec<ShipmentId> {
        self.trucks
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == Some(truck))
            .map(|(j, _)| ShipmentId(j as u32))
            .collect()
    }

    /// Shipment lists per used truck, in truck id order.
    pub fn by_truck(&self) -> BTreeMap<TruckId, Vec<ShipmentId>> {
        let mut out: BTreeMap<TruckId, Vec<ShipmentId>> = BTreeMap::new();
        for (j, t) in self.trucks.iter().enumerate() {
            if let Some(t) = t {
                out.entry(*t).or_default().push(ShipmentId(j as u32));
            }
        }
        out
    }

    pub fn is_total(&self) -> bool {
        self.trucks.iter().all(Option::is_some)
    }
}

/// One visit of a route. `wait` covers both waiting for a window to open and
/// queueing for a dock; service starts at `arrival + wait` and ends at
/// `departure`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub location: LocationId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pickups: Vec<ShipmentId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deliveries: Vec<ShipmentId>,
    pub arrival: Minutes,
    pub wait: Minutes,
    pub departure: Minutes,
}

impl Stop {
    pub fn yard(location: LocationId, time: Minutes) -> Self {
        Self {
            location,
            pickups: Vec::new(),
            deliveries: Vec::new(),
            arrival: time,
            wait: 0,
            departure: time,
        }
    }

    #[inline]
    pub fn service_start(&self) -> Minutes {
        self.arrival + self.wait
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pickups.is_empty() && self.deliveries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub truck: TruckId,
    pub stops: Vec<Stop>,
}

impl Route {
    #[inline]
    pub fn n_stops(&self) -> usize {
        self.stops.len()
    }

    /// Shipments picked up on this route, in stop order.
    pub fn shipments(&self) -> Vec<ShipmentId> {
        self.stops
            .iter()
            .flat_map(|s| s.pickups.iter().copied())
            .collect()
    }

    /// `(pickup stop index, delivery stop index)` of a carried shipment.
    pub fn span_of(&self, shipment: ShipmentId) -> Option<(usize, usize)> {
        let p = self
            .stops
            .iter()
            .position(|s| s.pickups.contains(&shipment))?;
        let d = self
            .stops
            .iter()
            .position(|s| s.deliveries.contains(&shipment))?;
        Some((p, d))
    }

    /// Number of yard-free segments the truck runs back to back: a new trip
    /// starts whenever the truck leaves a non-yard stop empty and continues to
    /// another non-yard stop.
    pub fn trip_count(&self) -> usize {
        trip_count(self.stops.iter().map(|s| (s.pickups.len(), s.deliveries.len())))
    }

    /// Latest admissible return time to the yard.
    pub fn horizon(&self) -> Minutes {
        horizon_for_trips(self.trip_count())
    }

    /// Final return time.
    pub fn end_time(&self) -> Minutes {
        self.stops.last().map_or(0, |s| s.arrival)
    }
}

pub(crate) fn horizon_for_trips(trips: usize) -> Minutes {
    if trips > 1 {
        MERGED_HORIZON
    } else {
        DAY_HORIZON
    }
}

/// Counts trips of a stop sequence given `(pickups, deliveries)` sizes per
/// stop, first and last entries being the yard.
pub(crate) fn trip_count(stops: impl Iterator<Item = (usize, usize)>) -> usize {
    let sizes: Vec<(usize, usize)> = stops.collect();
    if sizes.len() <= 2 {
        return if sizes.iter().any(|&(p, _)| p > 0) { 1 } else { 0 };
    }
    let mut onboard = 0usize;
    let mut trips = 1;
    let inner = &sizes[1..sizes.len() - 1];
    for (k, &(p, d)) in inner.iter().enumerate() {
        onboard = onboard.saturating_sub(d) + p;
        if onboard == 0 && k + 1 < inner.len() {
            trips += 1;
        }
    }
    trips
}

/// Status per constraint family; `true` means no violation was found.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Feasibility {
    pub families: BTreeMap<ConstraintFamily, bool>,
}

impl Feasibility {
    pub fn from_violations(violations: &[Violation]) -> Self {
        let mut families: BTreeMap<ConstraintFamily, bool> = ConstraintFamily::ALL
            .iter()
            .map(|f| (*f, true))
            .collect();
        for v in violations {
            families.insert(v.family, false);
        }
        Self { families }
    }

    pub fn is_feasible(&self) -> bool {
        self.families.values().all(|ok| *ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: Assignment,
    pub routes: Vec<Route>,
    pub placements: Vec<Placement>,
    pub total_mileage: f64,
    pub feasibility: Feasibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<GtwReport>,
}

impl Solution {
    pub fn empty(instance: &Instance) -> Self {
        Self {
            assignment: Assignment::unassigned(instance.shipments.len()),
            routes: Vec::new(),
            placements: Vec::new(),
            total_mileage: 0.0,
            feasibility: Feasibility::from_violations(&[]),
            diagnostics: None,
        }
    }

    pub fn route_of(&self, truck: TruckId) -> Option<&Route> {
        self.routes.iter().find(|r| r.truck == truck)
    }

    pub fn placement_of(&self, truck: TruckId) -> Option<&Placement> {
        self.placements.iter().find(|p| p.truck == truck)
    }

    pub fn used_trucks(&self) -> usize {
        self.routes.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility.is_feasible()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trip_count_splits_on_empty_truck() {
        // yard, S1(+a), W1(-a), S2(+b), W2(-b), yard
        let stops = [(0, 0), (1, 0), (0, 1), (1, 0), (0, 1), (0, 0)];
        assert_eq!(trip_count(stops.into_iter()), 2);
        let stops = [(0, 0), (1, 0), (1, 0), (0, 2), (0, 0)];
        assert_eq!(trip_count(stops.into_iter()), 1);
        assert_eq!(trip_count([(0, 0), (0, 0)].into_iter()), 0);
    }

    #[test]
    fn assignment_groups_by_truck() {
        let mut a = Assignment::unassigned(3);
        a.assign(ShipmentId(0), TruckId(1));
        a.assign(ShipmentId(2), TruckId(1));
        assert!(!a.is_total());
        a.assign(ShipmentId(1), TruckId(0));
        let by = a.by_truck();
        assert_eq!(by[&TruckId(1)], vec![ShipmentId(0), ShipmentId(2)]);
        assert_eq!(a.shipments_of(TruckId(0)), vec![ShipmentId(1)]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[1,0,1]");
    }
}
