//! Dock queues across all routes.
//!
//! Every non-yard stop needs one dock for its handling time. Trucks join the
//! queue of a location once they have arrived and every window of the stop
//! has opened, and are served first come first served (ties by truck id) by
//! the earliest free dock. Queue waits delay the rest of the route, so the
//! simulation advances all trucks together in global time order and a
//! single pass settles every wait.
//!
//! With `DC` docks the earliest free dock becomes free at
//! `Ψ(DC, ends of all earlier services)`: the earliest-free-dock heap always
//! holds the `DC` latest end times seen so far.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{Instance, LocationId, Minutes, Route, ShipmentId, Stop, TruckId};

/// `Ψ(n, A)`: the smallest of the `n` largest values of `A`.
///
/// For `n > |A|` the minimum of `A` is returned. Panics on an empty set or
/// `n = 0`.
pub fn psi(n: usize, values: &[Minutes]) -> Minutes {
    assert!(n >= 1, "psi needs n >= 1");
    assert!(!values.is_empty(), "psi of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted[n.min(sorted.len()) - 1]
}

/// One service at a dock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DockEvent {
    pub location: LocationId,
    pub truck: TruckId,
    pub stop: usize,
    pub arrival: Minutes,
    /// Arrival or the opening of the stop's windows, whichever is later.
    pub ready: Minutes,
    pub service_start: Minutes,
    pub service_end: Minutes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueWait {
    pub truck: TruckId,
    pub stop: usize,
    pub minutes: Minutes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GtwViolationKind {
    /// Service ends after the location closes.
    WorkingWindow,
    /// Service ends after a shipment window closes.
    ShipmentWindow,
    /// Return to the yard after its closing time or the route horizon.
    Return,
    /// Downstream hub pickup starts before the upstream delivery ends.
    HubPrecedence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtwViolation {
    pub kind: GtwViolationKind,
    pub location: LocationId,
    pub truck: TruckId,
    pub time: Minutes,
    /// Queue delay accumulated by the truck up to this point; a window
    /// breach with a positive delay is caused by dock congestion.
    pub queue_delay: Minutes,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shipments: Vec<ShipmentId>,
}

/// Outcome of the global time-window check.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GtwReport {
    pub feasible: bool,
    /// Non-zero queue waits per (truck, stop index).
    pub waits: Vec<QueueWait>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<DockEvent>,
    pub violations: Vec<GtwViolation>,
}

impl GtwReport {
    pub fn queue_wait(&self, truck: TruckId, stop: usize) -> Minutes {
        self.waits
            .iter()
            .find(|w| w.truck == truck && w.stop == stop)
            .map_or(0, |w| w.minutes)
    }
}

/// Earliest start and latest end of service at a stop given its location and
/// the windows of the shipments handled there.
pub(crate) fn stop_window(instance: &Instance, stop: &Stop) -> (Minutes, Minutes) {
    let loc = instance.location(stop.location);
    let mut open = loc.working_window.open;
    let mut close = loc.working_window.close;
    for &s in &stop.pickups {
        let w = instance.shipment(s).pickup_window;
        open = open.max(w.open);
        close = close.min(w.close);
    }
    for &s in &stop.deliveries {
        let w = instance.shipment(s).delivery_window;
        open = open.max(w.open);
        close = close.min(w.close);
    }
    (open, close)
}

struct Cursor {
    next: usize,
    departure: Minutes,
    delay: Minutes,
}

/// Simulates all routes together, rewriting arrival, wait and departure of
/// every stop with queue waits included.
///
/// Routes start from their yard at minute 0. Window waits are recomputed
/// from scratch, so input times only need to be structurally present.
pub fn simulate_queues(routes: &mut [Route], instance: &Instance) -> GtwReport {
    let mut report = GtwReport {
        feasible: true,
        ..GtwReport::default()
    };
    let mut docks: HashMap<LocationId, BinaryHeap<Reverse<Minutes>>> = HashMap::new();
    let mut cursors: Vec<Cursor> = Vec::with_capacity(routes.len());
    // (ready time, truck, route index)
    let mut heap: BinaryHeap<Reverse<(Minutes, TruckId, usize)>> = BinaryHeap::new();

    let schedule_next = |r: usize,
                         routes: &mut [Route],
                         cursors: &mut [Cursor],
                         heap: &mut BinaryHeap<Reverse<(Minutes, TruckId, usize)>>| {
        let route = &mut routes[r];
        let c = &cursors[r];
        let k = c.next;
        let n = route.stops.len();
        if k >= n {
            return;
        }
        let prev = route.stops[k - 1].location;
        let arrival = c.departure + instance.travel_time(prev, route.stops[k].location);
        route.stops[k].arrival = arrival;
        let ready = if k + 1 == n {
            arrival
        } else {
            arrival.max(stop_window(instance, &route.stops[k]).0)
        };
        heap.push(Reverse((ready, route.truck, r)));
    };

    for route in routes.iter_mut() {
        cursors.push(Cursor {
            next: 1,
            departure: 0,
            delay: 0,
        });
        if let Some(first) = route.stops.first_mut() {
            first.arrival = 0;
            first.wait = 0;
            first.departure = 0;
        }
    }
    for r in 0..routes.len() {
        schedule_next(r, routes, &mut cursors, &mut heap);
    }

    while let Some(Reverse((ready, truck, r))) = heap.pop() {
        let k = cursors[r].next;
        let last = routes[r].stops.len() - 1;
        let horizon = routes[r].horizon();
        let stop = &routes[r].stops[k];
        let loc = instance.location(stop.location);

        if k == last {
            let s = &mut routes[r].stops[k];
            s.wait = 0;
            s.departure = s.arrival;
            if s.arrival > loc.working_window.close || s.arrival > horizon {
                report.violations.push(GtwViolation {
                    kind: GtwViolationKind::Return,
                    location: s.location,
                    truck,
                    time: s.arrival,
                    queue_delay: cursors[r].delay,
                    shipments: Vec::new(),
                });
            }
            cursors[r].next += 1;
            continue;
        }

        let (_, close) = stop_window(instance, stop);
        let pool = docks.entry(stop.location).or_insert_with(|| {
            (0..loc.dock_count.max(1))
                .map(|_| Reverse(Minutes::MIN))
                .collect()
        });
        let Reverse(free) = pool.pop().expect("dock pool is never empty");
        let start = ready.max(free);
        let end = start + loc.handling_time;
        pool.push(Reverse(end));

        let queue = start - ready;
        let s = &mut routes[r].stops[k];
        s.wait = start - s.arrival;
        s.departure = end;
        cursors[r].delay += queue;
        cursors[r].departure = end;
        cursors[r].next += 1;
        if queue > 0 {
            report.waits.push(QueueWait {
                truck,
                stop: k,
                minutes: queue,
            });
        }
        report.events.push(DockEvent {
            location: s.location,
            truck,
            stop: k,
            arrival: s.arrival,
            ready,
            service_start: start,
            service_end: end,
        });
        if end > close {
            let kind = if end > loc.working_window.close {
                GtwViolationKind::WorkingWindow
            } else {
                GtwViolationKind::ShipmentWindow
            };
            report.violations.push(GtwViolation {
                kind,
                location: s.location,
                truck,
                time: end,
                queue_delay: cursors[r].delay,
                shipments: s.pickups.iter().chain(&s.deliveries).copied().collect(),
            });
        }
        schedule_next(r, routes, &mut cursors, &mut heap);
    }

    check_hub_precedence(routes, instance, &mut report);
    report.waits.sort_by_key(|w| (w.truck, w.stop));
    report.feasible = report.violations.is_empty();
    report
}

fn check_hub_precedence(routes: &[Route], instance: &Instance, report: &mut GtwReport) {
    if instance.hub_links.is_empty() {
        return;
    }
    let mut delivered: HashMap<ShipmentId, Minutes> = HashMap::new();
    let mut picked: HashMap<ShipmentId, (Minutes, TruckId, LocationId)> = HashMap::new();
    for route in routes {
        for stop in &route.stops {
            for &s in &stop.deliveries {
                delivered.insert(s, stop.departure);
            }
            for &s in &stop.pickups {
                picked.insert(s, (stop.service_start(), route.truck, stop.location));
            }
        }
    }
    for link in &instance.hub_links {
        let (Some(&end), Some(&(start, truck, location))) =
            (delivered.get(&link.upstream), picked.get(&link.downstream))
        else {
            continue;
        };
        if end > start {
            report.violations.push(GtwViolation {
                kind: GtwViolationKind::HubPrecedence,
                location,
                truck,
                time: start,
                queue_delay: 0,
                shipments: vec![link.upstream, link.downstream],
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::generate::dock_fixture;

    #[test]
    fn one_dock_serves_three_trucks_in_turn() {
        let (instance, mut routes) = dock_fixture(3, 1, 10).unwrap();
        let report = simulate_queues(&mut routes, &instance);
        assert!(report.feasible);
        let starts: Vec<Minutes> = routes.iter().map(|r| r.stops[1].service_start()).collect();
        assert_eq!(starts, vec![0, 10, 20]);
        assert_eq!(report.queue_wait(TruckId(2), 1), 20);
    }

    #[test]
    fn two_docks_halve_the_queue() {
        let (instance, mut routes) = dock_fixture(4, 2, 10).unwrap();
        simulate_queues(&mut routes, &instance);
        let starts: Vec<Minutes> = routes.iter().map(|r| r.stops[1].service_start()).collect();
        assert_eq!(starts, vec![0, 0, 10, 10]);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(2, &[5, 9, 7]), 7);
        assert_eq!(psi(1, &[3, 8]), 8);
        assert_eq!(psi(3, &[4, 4, 4]), 4);
        assert_eq!(psi(5, &[4, 1, 9]), 1);
    }
}
