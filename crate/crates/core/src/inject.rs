//! Single-constraint breaches for exercising the validator.
//!
//! Each [`Breach`] edits a feasible solution (or its instance) so that one
//! constraint row no longer holds, leaving the rest of the document intact
//! where the row allows it. [`inject`] returns `None` when the solution has
//! nothing the breach can act on, e.g. no queue waits to drop.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{ConstraintFamily, Instance, LocationId, Minutes, Solution, TimeWindow};
use crate::route::{propagate_times, StopPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Breach {
    /// A stop's service runs past its location's closing time.
    WorkingWindow,
    /// An arrival no longer equals departure plus travel time.
    TimePropagation,
    /// Queue waits are removed, so more trucks share a location than it
    /// has docks.
    DockCapacity,
    /// A delivery ends after the shipment's delivery window closes.
    ShipmentWindow,
    /// A column is stacked above its layer limit.
    StackLimit,
    /// A column sticks out of the loading surface.
    OutsideSurface,
    /// Two co-onboard columns share floor space.
    Overlap,
    /// The load is mirrored front to back, blocking the rear door.
    UnloadingSequence,
    /// A downstream hub pickup starts before the upstream delivery ends.
    HubPrecedence,
    /// A shipment is left without a truck.
    Unloaded,
    /// One truck picks up in two cities.
    CityMix,
    /// A visited dock refuses the truck's length class.
    DockLength,
    /// A location is visited more often than allowed.
    MaxVisits,
    /// A `must_be_first` location is not the first stop.
    MustBeFirst,
    /// A `must_be_last` location is not the last stop.
    MustBeLast,
    /// The stored objective differs from the routes.
    Objective,
}

impl Breach {
    pub const ALL: [Breach; 16] = [
        Self::WorkingWindow,
        Self::TimePropagation,
        Self::DockCapacity,
        Self::ShipmentWindow,
        Self::StackLimit,
        Self::OutsideSurface,
        Self::Overlap,
        Self::UnloadingSequence,
        Self::HubPrecedence,
        Self::Unloaded,
        Self::CityMix,
        Self::DockLength,
        Self::MaxVisits,
        Self::MustBeFirst,
        Self::MustBeLast,
        Self::Objective,
    ];

    /// Family the validator must report.
    pub fn family(self) -> ConstraintFamily {
        use ConstraintFamily as F;
        match self {
            Self::WorkingWindow | Self::TimePropagation => F::A1,
            Self::DockCapacity => F::A2,
            Self::ShipmentWindow => F::A3,
            Self::StackLimit => F::B1,
            Self::OutsideSurface | Self::Overlap => F::B2,
            Self::UnloadingSequence => F::B3,
            Self::HubPrecedence => F::Hub,
            Self::Unloaded => F::Loaded,
            Self::CityMix | Self::DockLength | Self::MaxVisits | Self::MustBeFirst | Self::MustBeLast => F::Side,
            Self::Objective => F::Structure,
        }
    }
}

fn inner(n: usize) -> std::ops::Range<usize> {
    1..n.saturating_sub(1)
}

/// Applies `breach` to copies of `instance` and `solution`.
pub fn inject(breach: Breach, instance: &Instance, solution: &Solution) -> Option<(Instance, Solution)> {
    let mut inst = instance.clone();
    let mut sol = solution.clone();
    let applied = match breach {
        Breach::WorkingWindow => {
            let stop = sol.routes.iter().find_map(|r| inner(r.stops.len()).next().map(|k| &r.stops[k]))?;
            let loc = &mut inst.locations[stop.location.index()];
            let end = stop.service_start() + loc.handling_time;
            if end - 1 <= loc.working_window.open {
                loc.working_window.open = end - 2;
            }
            loc.working_window.close = end - 1;
            true
        }
        Breach::TimePropagation => {
            let route = sol.routes.iter_mut().find(|r| r.stops.len() > 2)?;
            let stop = &mut route.stops[1];
            stop.arrival += 1;
            stop.wait -= 1;
            stop.wait >= 0
        }
        Breach::DockCapacity => {
            let mut changed = false;
            for route in &mut sol.routes {
                let plans: Vec<StopPlan> = route.stops.iter().map(StopPlan::of).collect();
                let alone = propagate_times(&plans, instance.truck(route.truck), instance)?;
                changed |= alone != *route;
                *route = alone;
            }
            changed
        }
        Breach::ShipmentWindow => {
            let (stop, s) = sol.routes.iter().find_map(|r| {
                r.stops.iter().find_map(|st| st.deliveries.first().map(|&s| (st.clone(), s)))
            })?;
            let end = stop.service_start() + inst.location(stop.location).handling_time;
            let w = &mut inst.shipments[s.index()].delivery_window;
            *w = TimeWindow {
                open: w.open.min(end - 2),
                close: end - 1,
            };
            true
        }
        Breach::StackLimit => {
            let p = sol.placements.iter_mut().find(|p| p.items.iter().any(|i| !i.column.on_pallet))?;
            let item = p.items.iter_mut().find(|i| !i.column.on_pallet)?;
            item.column.layers = inst.shipment(item.column.shipment).bin.stack_limit + 1;
            true
        }
        Breach::OutsideSurface => {
            let p = sol.placements.first_mut()?;
            let width = inst.truck(p.truck).surface_width;
            let item = p.items.first_mut()?;
            item.u = width - item.column.width + 0.5;
            true
        }
        Breach::Overlap => {
            let mut done = false;
            'outer: for p in &mut sol.placements {
                let route = solution.route_of(p.truck)?;
                for i in 0..p.items.len() {
                    for j in i + 1..p.items.len() {
                        let (a, b) = (&p.items[i], &p.items[j]);
                        let (pa, da) = route.span_of(a.column.shipment)?;
                        let (pb, db) = route.span_of(b.column.shipment)?;
                        if pa < db && pb < da {
                            let (u, v) = (a.u, a.v);
                            p.items[j].u = u;
                            p.items[j].v = v;
                            done = true;
                            break 'outer;
                        }
                    }
                }
            }
            done
        }
        Breach::UnloadingSequence => {
            let mut done = false;
            for p in &mut sol.placements {
                let route = solution.route_of(p.truck)?;
                let ordered = p.items.iter().enumerate().any(|(i, a)| {
                    p.items[i + 1..].iter().any(|b| {
                        let (sa, sb) = (route.span_of(a.column.shipment), route.span_of(b.column.shipment));
                        let (Some((pa, da)), Some((pb, db))) = (sa, sb) else { return false };
                        let side_by_side =
                            a.u + a.column.width <= b.u + 1e-9 || b.u + b.column.width <= a.u + 1e-9;
                        pa < db && pb < da && !side_by_side && (pa != pb || da != db)
                    })
                });
                if ordered {
                    let length = inst.truck(p.truck).surface_length;
                    for item in &mut p.items {
                        item.v = length - item.v - item.column.length;
                    }
                    done = true;
                    break;
                }
            }
            done
        }
        Breach::HubPrecedence => {
            let link = *inst.hub_links.first()?;
            let down_truck = sol.assignment.truck_of(link.downstream)?;
            let down_start = sol
                .route_of(down_truck)?
                .stops
                .iter()
                .find(|s| s.pickups.contains(&link.downstream))?
                .service_start();
            let up_truck = sol.assignment.truck_of(link.upstream)?;
            let route = sol.routes.iter_mut().find(|r| r.truck == up_truck)?;
            let k = route.stops.iter().position(|s| s.deliveries.contains(&link.upstream))?;
            let shift: Minutes = (down_start - route.stops[k].departure).max(0) + 1;
            // Later stops move with the delayed one; their windows are opened
            // up so the delay breaks nothing but the hub order.
            route.stops[k].wait += shift;
            route.stops[k].departure += shift;
            let mut touched: BTreeSet<LocationId> = BTreeSet::new();
            for stop in &mut route.stops[k + 1..] {
                stop.arrival += shift;
                stop.departure += shift;
                touched.insert(stop.location);
                for &s in stop.pickups.iter().chain(&stop.deliveries) {
                    let sh = &mut inst.shipments[s.index()];
                    sh.pickup_window.close = sh.pickup_window.close.max(stop.departure + shift);
                    sh.delivery_window.close = sh.delivery_window.close.max(stop.departure + shift);
                }
            }
            touched.insert(route.stops[k].location);
            for s in &route.stops[k].deliveries {
                let w = &mut inst.shipments[s.index()].delivery_window;
                w.close = w.close.max(route.stops[k].departure);
            }
            for l in touched {
                let w = &mut inst.locations[l.index()].working_window;
                w.close = w.close.max(route.stops.last()?.arrival + shift);
            }
            true
        }
        Breach::Unloaded => {
            let s = sol.routes.first()?.shipments().first().copied()?;
            sol.assignment.trucks[s.index()] = None;
            true
        }
        Breach::CityMix => {
            let route = sol.routes.iter().find(|r| {
                let sources: BTreeSet<LocationId> =
                    r.shipments().iter().map(|&s| inst.shipment(s).source).collect();
                sources.len() >= 2
            })?;
            let s = route.shipments()[0];
            let source = inst.shipment(s).source;
            inst.locations[source.index()].city.push_str("-elsewhere");
            true
        }
        Breach::DockLength => {
            let route = sol.routes.iter().find(|r| r.stops.len() > 2)?;
            let loc = route.stops[1].location;
            inst.locations[loc.index()].allowed_truck_lengths = Some(BTreeSet::from(["no-such-class".to_string()]));
            true
        }
        Breach::MaxVisits => {
            let mut visits: BTreeMap<LocationId, u32> = BTreeMap::new();
            for r in &sol.routes {
                for k in inner(r.stops.len()) {
                    *visits.entry(r.stops[k].location).or_default() += 1;
                }
            }
            let (&loc, &v) = visits.iter().find(|(_, &v)| v >= 2)?;
            inst.locations[loc.index()].max_visits = Some(v - 1);
            true
        }
        Breach::MustBeFirst => {
            let route = sol.routes.iter().find(|r| r.stops.len() > 3)?;
            let loc = route.stops[2].location;
            let l = &mut inst.locations[loc.index()];
            l.must_be_first = true;
            l.must_be_last = false;
            true
        }
        Breach::MustBeLast => {
            let route = sol.routes.iter().find(|r| r.stops.len() > 3)?;
            let loc = route.stops[1].location;
            let l = &mut inst.locations[loc.index()];
            l.must_be_last = true;
            l.must_be_first = false;
            true
        }
        Breach::Objective => {
            sol.total_mileage += 1.0;
            true
        }
    };
    applied.then_some((inst, sol))
}
