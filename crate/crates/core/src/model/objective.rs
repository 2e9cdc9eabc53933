use super::{Instance, Route, Solution};
use crate::error::{Error, Result};

/// Raw distance driven along a route.
pub fn route_distance(route: &Route, instance: &Instance) -> Result<f64> {
    let n = instance.locations.len();
    let mut total = 0.0;
    for pair in route.stops.windows(2) {
        let (a, b) = (pair[0].location, pair[1].location);
        if a.index() >= n {
            return Err(Error::UnknownLocation(a));
        }
        if b.index() >= n {
            return Err(Error::UnknownLocation(b));
        }
        total += instance.distance(a, b);
    }
    Ok(total)
}

/// Distance weighted by the truck's per-distance cost.
pub fn route_cost(route: &Route, instance: &Instance) -> Result<f64> {
    let truck = instance
        .trucks
        .get(route.truck.index())
        .ok_or(Error::UnknownTruck(route.truck))?;
    Ok(truck.cost_per_distance * route_distance(route, instance)?)
}

/// The objective: sum over routes of `cost_per_distance × distance`.
pub fn total_mileage(solution: &Solution, instance: &Instance) -> Result<f64> {
    solution
        .routes
        .iter()
        .map(|r| route_cost(r, instance))
        .sum()
}
