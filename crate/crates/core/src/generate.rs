//! Seeded synthetic instances.
//!
//! Suppliers sit in city clusters around a central plant region holding the
//! warehouses (and hubs, when requested). Every city has a truck yard.
//! Distances are Euclidean and travel times are `⌈distance / 0.7⌉` minutes.
//!
//! After drawing the world, a witness plan is built city by city (trucks are
//! filled one after the other with [`solve_route`]) and run through the dock
//! queue simulation. Shipment windows are then cut around the witness service
//! times, widened by a slack that shrinks as `window_tightness` grows. If the
//! witness does not survive the new windows, windows are widened and docks
//! added until it does, so every instance has a feasible solution.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BinSpec, HubLink, Instance, Location, LocationId, LocationKind, Minutes, PalletSpec, Route,
    Shipment, ShipmentId, TimeWindow, TravelMatrices, Truck, TruckId, SCHEMA_VERSION,
};
use crate::loading::{build_columns, Placement};
use crate::route::{solve_route, RouteParams, RouteResult};
use crate::schedule::simulate_queues;

/// Distance units per minute.
pub const SPEED: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_suppliers: usize,
    pub n_warehouses: usize,
    pub n_shipments: usize,
    pub n_trucks: usize,
    pub n_cities: usize,
    pub bin_variants: usize,
    /// In `(0, 1]`; 1 gives windows barely wider than the witness service.
    pub window_tightness: f64,
    pub dock_count_range: (u32, u32),
    /// Bins per shipment, inclusive.
    #[serde(default = "default_bins")]
    pub bins_range: (u32, u32),
    /// Shipments routed through a hub, each split into two linked legs.
    #[serde(default)]
    pub n_hub_shipments: usize,
    /// Fraction of suppliers given dock length or visit restrictions.
    #[serde(default)]
    pub side_constraint_rate: f64,
}

fn default_bins() -> (u32, u32) {
    (2, 12)
}

impl GeneratorConfig {
    /// Scale of the reference data set: 45 suppliers, 8 warehouses, 311
    /// shipments and 54 bin variants.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            seed,
            n_suppliers: 45,
            n_warehouses: 8,
            n_shipments: 311,
            n_trucks: 160,
            n_cities: 5,
            bin_variants: 54,
            window_tightness: 0.5,
            dock_count_range: (1, 3),
            bins_range: default_bins(),
            n_hub_shipments: 0,
            side_constraint_rate: 0.1,
        }
    }

    /// An instance with `n_shipments` shipments and about as many shipments
    /// per supplier as the reference scale.
    pub fn sized(seed: u64, n_shipments: usize) -> Self {
        let n_suppliers = (n_shipments / 7).max(2);
        Self {
            seed,
            n_suppliers,
            n_warehouses: (n_shipments / 40).clamp(1, 8),
            n_shipments,
            n_trucks: (n_shipments / 2).max(2),
            n_cities: (n_suppliers / 8).clamp(1, 12),
            bin_variants: (n_shipments / 4).clamp(1, 54),
            window_tightness: 0.5,
            dock_count_range: (1, 3),
            bins_range: default_bins(),
            n_hub_shipments: 0,
            side_constraint_rate: 0.1,
        }
    }

    /// Instances small enough for the exhaustive oracle.
    pub fn tiny(seed: u64, n_shipments: usize, n_trucks: usize) -> Self {
        Self {
            seed,
            n_suppliers: 2,
            n_warehouses: 1,
            n_shipments,
            n_trucks,
            n_cities: 1,
            bin_variants: 3,
            window_tightness: 0.5,
            dock_count_range: (1, 2),
            bins_range: (1, 2),
            n_hub_shipments: 0,
            side_constraint_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleConfig(m.to_string()));
        if self.n_suppliers == 0 || self.n_warehouses == 0 || self.n_cities == 0 {
            return bad("supplier, warehouse and city counts must be positive");
        }
        if self.n_shipments == 0 || self.bin_variants == 0 {
            return bad("shipment and bin variant counts must be positive");
        }
        if self.n_trucks == 0 {
            return bad("at least one truck is needed to carry shipments");
        }
        if !(self.window_tightness > 0.0 && self.window_tightness <= 1.0) {
            return bad("window_tightness must lie in (0, 1]");
        }
        let (lo, hi) = self.dock_count_range;
        if lo == 0 || lo > hi {
            return bad("dock_count_range must be a non-empty range of positive counts");
        }
        let (blo, bhi) = self.bins_range;
        if blo == 0 || blo > bhi {
            return bad("bins_range must be a non-empty range of positive counts");
        }
        if self.n_hub_shipments > self.n_shipments {
            return bad("more hub shipments than shipments");
        }
        Ok(())
    }
}

const PALLET: PalletSpec = PalletSpec {
    width: 1.2,
    length: 1.0,
    stack_limit: 2,
};

const TRUCK_MODELS: [(&str, f64, f64, &str, f64); 3] = [
    ("light-6", 2.4, 6.0, "6m", 1.0),
    ("medium-7.6", 2.4, 7.6, "7.6m", 1.2),
    ("heavy-9.6", 2.4, 9.6, "9.6m", 1.5),
];

fn polar(rng: &mut ChaCha8Rng, center: [f64; 2], r_lo: f64, r_hi: f64) -> [f64; 2] {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = rng.gen_range(r_lo..=r_hi);
    [center[0] + r * angle.cos(), center[1] + r * angle.sin()]
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Draws a reproducible instance that admits at least one feasible solution.
pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    generate_with_witness(config).map(|g| g.instance)
}

/// A generated instance with the plan that proves it feasible.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    /// Timed routes (queue waits included) with their placements.
    pub witness: Vec<(Route, Placement)>,
}

pub fn generate_with_witness(config: &GeneratorConfig) -> Result<Generated> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (dock_lo, dock_hi) = config.dock_count_range;

    // Cities around the plant region.
    let city_centers: Vec<[f64; 2]> = (0..config.n_cities)
        .map(|k| {
            let base = std::f64::consts::TAU * k as f64 / config.n_cities as f64;
            let angle = base + rng.gen_range(-0.3..0.3);
            let r = rng.gen_range(90.0..150.0);
            [r * angle.cos(), r * angle.sin()]
        })
        .collect();

    let mut locations: Vec<Location> = Vec::new();
    let push = |locations: &mut Vec<Location>,
                    kind: LocationKind,
                    city: String,
                    window: TimeWindow,
                    docks: u32,
                    handling: Minutes,
                    pos: [f64; 2]| {
        let id = LocationId(locations.len() as u32);
        let prefix = match kind {
            LocationKind::Supplier => "supplier",
            LocationKind::Warehouse => "warehouse",
            LocationKind::Hub => "hub",
            LocationKind::TruckYard => "yard",
        };
        locations.push(Location {
            id,
            name: format!("{prefix}-{}", id.0),
            kind,
            working_window: window,
            dock_count: docks,
            handling_time: handling,
            city,
            allowed_truck_lengths: None,
            max_visits: None,
            must_be_first: false,
            must_be_last: false,
            position: Some([round2(pos[0]), round2(pos[1])]),
        });
        id
    };

    let yards: Vec<LocationId> = city_centers
        .iter()
        .enumerate()
        .map(|(c, &center)| {
            push(
                &mut locations,
                LocationKind::TruckYard,
                format!("city-{c}"),
                TimeWindow::new(0, 1440),
                dock_hi.max(1),
                0,
                center,
            )
        })
        .collect();

    let mut supplier_city = Vec::new();
    let suppliers: Vec<LocationId> = (0..config.n_suppliers)
        .map(|k| {
            let c = if k < config.n_cities { k } else { rng.gen_range(0..config.n_cities) };
            supplier_city.push(c);
            let pos = polar(&mut rng, city_centers[c], 2.0, 14.0);
            let open = 360 + 30 * rng.gen_range(-4..=2);
            let close = 1080 + 30 * rng.gen_range(0..=6);
            let docks = rng.gen_range(dock_lo..=dock_hi);
            let handling = 5 * rng.gen_range(2..=5);
            push(
                &mut locations,
                LocationKind::Supplier,
                format!("city-{c}"),
                TimeWindow::new(open, close),
                docks,
                handling,
                pos,
            )
        })
        .collect();

    let warehouses: Vec<LocationId> = (0..config.n_warehouses)
        .map(|_| {
            let pos = polar(&mut rng, [0.0, 0.0], 0.0, 25.0);
            let docks = rng.gen_range(dock_lo..=dock_hi);
            let handling = 5 * rng.gen_range(2..=4);
            push(
                &mut locations,
                LocationKind::Warehouse,
                "plant".into(),
                TimeWindow::new(240, 1380),
                docks,
                handling,
                pos,
            )
        })
        .collect();

    let hub = (config.n_hub_shipments > 0).then(|| {
        let pos = polar(&mut rng, [0.0, 0.0], 35.0, 50.0);
        push(
            &mut locations,
            LocationKind::Hub,
            "hub".into(),
            TimeWindow::new(0, 1440),
            dock_hi.max(2),
            10,
            pos,
        )
    });

    let n = locations.len();
    let mut distance = vec![vec![0.0; n]; n];
    let mut travel_time = vec![vec![0 as Minutes; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (locations[i].position.unwrap(), locations[j].position.unwrap());
            let d = round2(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            distance[i][j] = d;
            travel_time[i][j] = (d / SPEED).ceil() as Minutes;
        }
    }

    // Bin catalogue. Small bins travel on pallets.
    let widths = [0.3, 0.4, 0.5, 0.6, 0.8, 1.0, 1.2];
    let lengths = [0.3, 0.4, 0.5, 0.6, 0.8, 1.0, 1.2];
    let bins: Vec<(BinSpec, bool)> = (0..config.bin_variants)
        .map(|_| {
            let w = *widths.choose(&mut rng).unwrap();
            let l = *lengths.choose(&mut rng).unwrap();
            let small = w <= PALLET.width / 2.0 && l <= PALLET.length / 2.0;
            let pallet = small && rng.gen_bool(0.6);
            (
                BinSpec {
                    width: w,
                    length: l,
                    height: round2(rng.gen_range(0.4..1.2)),
                    stack_limit: rng.gen_range(1..=4),
                },
                pallet,
            )
        })
        .collect();

    // Each supplier serves one or two warehouses with a few bin types.
    let lanes: Vec<(Vec<LocationId>, Vec<usize>)> = suppliers
        .iter()
        .map(|_| {
            let mut ws = warehouses.clone();
            ws.shuffle(&mut rng);
            ws.truncate(rng.gen_range(1..=2.min(warehouses.len())));
            ws.sort();
            let kinds = (0..rng.gen_range(1..=3))
                .map(|_| rng.gen_range(0..bins.len()))
                .collect();
            (ws, kinds)
        })
        .collect();

    let day = TimeWindow::new(0, 1440);
    let mut shipments: Vec<Shipment> = Vec::new();
    let mut hub_links = Vec::new();
    let n_direct = config.n_shipments - config.n_hub_shipments;
    let draw = |rng: &mut ChaCha8Rng, k: usize| {
        let s = if k < suppliers.len() { k } else { rng.gen_range(0..suppliers.len()) };
        let (ws, kinds) = &lanes[s];
        let (bin, pallet) = bins[*kinds.choose(rng).unwrap()];
        let count = rng.gen_range(config.bins_range.0..=config.bins_range.1);
        (suppliers[s], *ws.choose(rng).unwrap(), bin, pallet, count)
    };
    for k in 0..n_direct {
        let (source, destination, bin, needs_pallet, bin_count) = draw(&mut rng, k);
        shipments.push(Shipment {
            id: ShipmentId(shipments.len() as u32),
            source,
            destination,
            bin_count,
            bin,
            needs_pallet,
            pickup_window: day,
            delivery_window: day,
        });
    }
    if let Some(hub) = hub {
        // Legs meet at the hub around midday.
        let cut = 720;
        for k in 0..config.n_hub_shipments {
            let (source, destination, bin, needs_pallet, bin_count) = draw(&mut rng, n_direct + k);
            let up = ShipmentId(shipments.len() as u32);
            shipments.push(Shipment {
                id: up,
                source,
                destination: hub,
                bin_count,
                bin,
                needs_pallet,
                pickup_window: day,
                delivery_window: TimeWindow::new(0, cut),
            });
            let down = ShipmentId(shipments.len() as u32);
            shipments.push(Shipment {
                id: down,
                source: hub,
                destination,
                bin_count,
                bin,
                needs_pallet,
                pickup_window: TimeWindow::new(cut, 1440),
                delivery_window: day,
            });
            hub_links.push(HubLink {
                upstream: up,
                downstream: down,
            });
        }
    }

    // Fleet: spread over the yards, mixed models.
    let trucks: Vec<Truck> = (0..config.n_trucks)
        .map(|k| {
            let (model, w, l, class, cost) = TRUCK_MODELS[rng.gen_range(0..TRUCK_MODELS.len())];
            Truck {
                id: TruckId(k as u32),
                model: model.into(),
                surface_width: w,
                surface_length: l,
                length_class: class.into(),
                cost_per_distance: cost,
                home_yard: yards[k % yards.len()],
            }
        })
        .collect();

    let mut instance = Instance {
        schema_version: SCHEMA_VERSION,
        locations,
        matrices: TravelMatrices {
            distance,
            travel_time,
        },
        trucks,
        shipments,
        hub_links,
        pallet: PALLET,
    };

    let (mut routes, placements) = witness(&instance)?;
    settle_docks(&mut instance, &mut routes);
    fit_windows(&mut instance, &mut routes, config.window_tightness);
    add_side_constraints(&mut instance, &routes, &mut rng, config.side_constraint_rate);
    instance.validate()?;
    Ok(Generated {
        instance,
        witness: routes.into_iter().zip(placements).collect(),
    })
}

/// Fills trucks one after another per city (hub legs form their own group).
fn witness(instance: &Instance) -> Result<(Vec<Route>, Vec<Placement>)> {
    let params = RouteParams::default();
    let mut groups: BTreeMap<String, Vec<ShipmentId>> = BTreeMap::new();
    for s in &instance.shipments {
        groups
            .entry(instance.location(s.source).city.clone())
            .or_default()
            .push(s.id);
    }
    let mut used: BTreeSet<TruckId> = BTreeSet::new();
    let mut routes = Vec::new();
    let mut placements = Vec::new();
    for (city, mut list) in groups {
        list.sort_by_key(|&s| {
            let sh = instance.shipment(s);
            (sh.source, sh.destination, s)
        });
        // Trucks based in the city first.
        let mut fleet: Vec<TruckId> = instance.truck_ids().filter(|t| !used.contains(t)).collect();
        fleet.sort_by_key(|&t| (instance.location(instance.truck(t).home_yard).city != city, t));
        let mut fleet = fleet.into_iter();

        let mut current: Option<(TruckId, Vec<ShipmentId>, RouteResult)> = None;
        for s in list {
            if let Some((t, load, _)) = &current {
                let mut trial = load.clone();
                trial.push(s);
                let r = solve_route(instance.truck(*t), &trial, instance, &params);
                if r.feasible {
                    current = Some((*t, trial, r));
                    continue;
                }
                let (t, _, done) = current.take().unwrap();
                used.insert(t);
                routes.push(done.route.unwrap());
                placements.push(done.placement.unwrap());
            }
            loop {
                let Some(t) = fleet.next() else {
                    return Err(Error::InfeasibleConfig(format!(
                        "the fleet is too small to carry the shipments of {city}"
                    )));
                };
                let r = solve_route(instance.truck(t), &[s], instance, &params);
                if r.feasible {
                    current = Some((t, vec![s], r));
                    break;
                }
            }
        }
        if let Some((t, _, done)) = current {
            used.insert(t);
            routes.push(done.route.unwrap());
            placements.push(done.placement.unwrap());
        }
    }
    Ok((routes, placements))
}

/// Adds docks where trucks of a failing witness queue until the witness
/// passes the queue simulation. Terminates: once no truck queues, every route
/// is as feasible as on its own.
fn settle_docks(instance: &mut Instance, routes: &mut [Route]) {
    loop {
        let report = simulate_queues(routes, instance);
        if report.feasible {
            return;
        }
        let failing: BTreeSet<TruckId> = report.violations.iter().map(|v| v.truck).collect();
        let mut bumped = false;
        for w in report.waits.iter().filter(|w| failing.contains(&w.truck)) {
            let route = routes.iter().find(|r| r.truck == w.truck).unwrap();
            instance.locations[route.stops[w.stop].location.index()].dock_count += 1;
            bumped = true;
        }
        if !bumped {
            // Nothing left to relieve; only queue delays can break a witness
            // whose routes are individually feasible.
            unreachable!("witness route infeasible without queueing");
        }
    }
}

/// Shrinks shipment windows around the witness service times. A stop keeps
/// `slack` minutes on either side of its service, clipped to the location
/// window. Docks are added if the changed queue order makes trucks late.
fn fit_windows(instance: &mut Instance, routes: &mut [Route], tightness: f64) {
    let slack = ((1.0 - tightness) * 600.0) as Minutes + 15;
    let base = instance.clone();
    for route in routes.iter() {
        for stop in &route.stops {
            let loc = base.location(stop.location).working_window;
            let open = (stop.service_start() - slack).max(loc.open);
            let close = (stop.departure + slack).min(loc.close);
            for &s in &stop.pickups {
                let w = base.shipment(s).pickup_window;
                instance.shipments[s.index()].pickup_window =
                    TimeWindow::new(open.max(w.open), close.min(w.close));
            }
            for &s in &stop.deliveries {
                let w = base.shipment(s).delivery_window;
                instance.shipments[s.index()].delivery_window =
                    TimeWindow::new(open.max(w.open), close.min(w.close));
            }
        }
    }
    settle_docks(instance, routes);
}

/// Restrictions the witness already satisfies.
fn add_side_constraints(instance: &mut Instance, routes: &[Route], rng: &mut ChaCha8Rng, rate: f64) {
    if rate <= 0.0 {
        return;
    }
    let mut classes: BTreeMap<LocationId, BTreeSet<String>> = BTreeMap::new();
    let mut visits: BTreeMap<LocationId, u32> = BTreeMap::new();
    let mut first_only: BTreeMap<LocationId, bool> = BTreeMap::new();
    for route in routes {
        let class = &instance.truck(route.truck).length_class;
        let n = route.stops.len();
        for (k, stop) in route.stops.iter().enumerate().take(n - 1).skip(1) {
            classes.entry(stop.location).or_default().insert(class.clone());
            *visits.entry(stop.location).or_default() += 1;
            let e = first_only.entry(stop.location).or_insert(true);
            *e &= k == 1;
        }
    }
    let mut volume: BTreeMap<LocationId, f64> = BTreeMap::new();
    for s in &instance.shipments {
        let cols = build_columns(s, &instance.pallet).unwrap_or_default();
        *volume.entry(s.source).or_default() += cols.iter().map(|c| c.area()).sum::<f64>();
    }
    let min_area = instance
        .trucks
        .iter()
        .map(|t| t.surface_area())
        .fold(f64::INFINITY, f64::min);
    let suppliers: Vec<LocationId> = instance.suppliers().map(|l| l.id).collect();
    for id in suppliers {
        if !rng.gen_bool(rate.clamp(0.0, 1.0)) {
            continue;
        }
        let loc = &mut instance.locations[id.index()];
        match rng.gen_range(0..3) {
            0 => {
                let mut allowed = classes.get(&id).cloned().unwrap_or_default();
                if rng.gen_bool(0.5) {
                    let (_, _, _, class, _) = TRUCK_MODELS[rng.gen_range(0..TRUCK_MODELS.len())];
                    allowed.insert(class.into());
                }
                if !allowed.is_empty() {
                    loc.allowed_truck_lengths = Some(allowed);
                }
            }
            1 => {
                // Enough visits for the smallest trucks to collect the
                // supplier's whole volume, and never fewer than the witness.
                let v = visits.get(&id).copied().unwrap_or(0);
                let small = min_area * 0.7;
                let need = (volume.get(&id).copied().unwrap_or(0.0) / small).ceil() as u32;
                loc.max_visits = Some(v.max(need).max(1) + rng.gen_range(1..=2));
            }
            _ => {
                if first_only.get(&id).copied().unwrap_or(false) {
                    loc.must_be_first = true;
                }
            }
        }
    }
}

/// `n_trucks` identical trucks, each carrying one shipment from a supplier
/// next to the yard (zero travel time) to a warehouse, with `dock_count`
/// docks and `handling` minutes per service at the supplier. Every truck
/// reaches the supplier at minute 0, so the queue alone sets the service
/// starts. Returns the instance and one untimed-queue route per truck.
pub fn dock_fixture(n_trucks: usize, dock_count: u32, handling: Minutes) -> Result<(Instance, Vec<Route>)> {
    let day = TimeWindow { open: 0, close: 1440 };
    let loc = |id: u32, kind: LocationKind, docks: u32, handling: Minutes| Location {
        id: LocationId(id),
        name: String::new(),
        kind,
        working_window: day,
        dock_count: docks,
        handling_time: handling,
        city: "A".into(),
        allowed_truck_lengths: None,
        max_visits: None,
        must_be_first: false,
        must_be_last: false,
        position: None,
    };
    let warehouse_docks = u32::try_from(n_trucks.max(1)).unwrap_or(u32::MAX);
    let (model, width, length, class, cost) = TRUCK_MODELS[0];
    let instance = Instance {
        schema_version: SCHEMA_VERSION,
        locations: vec![
            loc(0, LocationKind::TruckYard, 1, 0),
            loc(1, LocationKind::Supplier, dock_count, handling),
            loc(2, LocationKind::Warehouse, warehouse_docks, 5),
        ],
        matrices: TravelMatrices {
            distance: vec![vec![0.0, 1.0, 30.0], vec![1.0, 0.0, 30.0], vec![30.0, 30.0, 0.0]],
            travel_time: vec![vec![0, 0, 43], vec![0, 0, 43], vec![43, 43, 0]],
        },
        trucks: (0..n_trucks)
            .map(|k| Truck {
                id: TruckId(k as u32),
                model: model.into(),
                surface_width: width,
                surface_length: length,
                length_class: class.into(),
                cost_per_distance: cost,
                home_yard: LocationId(0),
            })
            .collect(),
        shipments: (0..n_trucks)
            .map(|k| Shipment {
                id: ShipmentId(k as u32),
                source: LocationId(1),
                destination: LocationId(2),
                bin_count: 1,
                bin: BinSpec { width: 1.2, length: 1.0, height: 1.0, stack_limit: 2 },
                needs_pallet: false,
                pickup_window: day,
                delivery_window: day,
            })
            .collect(),
        hub_links: Vec::new(),
        pallet: PALLET,
    };
    instance.validate()?;
    let params = RouteParams::default();
    let routes = instance
        .trucks
        .iter()
        .zip(instance.shipment_ids())
        .map(|(t, s)| {
            solve_route(t, &[s], &instance, &params)
                .route
                .ok_or_else(|| Error::InfeasibleConfig("dock fixture route".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((instance, routes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_an_empty_fleet() {
        let mut c = GeneratorConfig::tiny(1, 3, 2);
        c.n_trucks = 0;
        assert!(matches!(generate_instance(&c), Err(Error::InfeasibleConfig(_))));
    }

    #[test]
    fn tiny_instance_has_requested_counts() {
        let inst = generate_instance(&GeneratorConfig::tiny(3, 3, 2)).unwrap();
        assert_eq!(inst.shipments.len(), 3);
        assert_eq!(inst.trucks.len(), 2);
        assert_eq!(inst.suppliers().count(), 2);
    }
}
