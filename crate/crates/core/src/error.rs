use crate::model::{LocationId, ShipmentId, TruckId};

/// Errors raised by the solver library.
///
/// Infeasibility discovered during search is reported as a value (for example
/// [`crate::route::RouteResult::feasible`]), never through this type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column} (at `{path}`): {message}")]
    Syntax {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },

    #[error("invalid {entity}: {message}")]
    Semantic { entity: String, message: String },

    #[error("unknown location id {0}")]
    UnknownLocation(LocationId),

    #[error("unknown truck id {0}")]
    UnknownTruck(TruckId),

    #[error("unknown shipment id {0}")]
    UnknownShipment(ShipmentId),

    #[error("bins of shipment {0} do not fit on a pallet")]
    BinExceedsPallet(ShipmentId),

    #[error("generator configuration is infeasible: {0}")]
    InfeasibleConfig(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("starting solution is infeasible: {0}")]
    InfeasibleStart(String),

    #[error("oracle limits exceeded: {0}")]
    OracleLimits(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn semantic(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Semantic {
            entity: entity.into(),
            message: message.into(),
        }
    }
}
