pub mod error;
pub mod loading;
pub mod model;
pub mod route;
pub mod schedule;
pub mod oracle;
pub mod io;
pub mod generate;
pub mod pipeline;
pub mod construct;
pub mod tabu;
pub mod postopt;
pub mod inject;

pub use error::{Error, Result};
pub use model::{
    validate_solution, Assignment, ConstraintFamily, Instance, Location, LocationId, Route,
    Shipment, ShipmentId, Solution, Stop, Truck, TruckId, Violation,
};
pub use pipeline::{solve, SolveOutcome, SolveParams};
