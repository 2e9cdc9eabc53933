//! JSON documents for instances and solutions.
//!
//! Both documents carry a `schema_version`. Instances are validated after
//! parsing; syntax errors report the line, column and JSON path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Solution, SCHEMA_VERSION};

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Syntax {
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let instance: Instance = from_json(text)?;
    if instance.schema_version != SCHEMA_VERSION {
        return Err(Error::semantic(
            "document",
            format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                instance.schema_version
            ),
        ));
    }
    instance.validate()?;
    Ok(instance)
}

/// Canonical pretty-printed form of an instance.
pub fn serialize_instance(instance: &Instance) -> String {
    serde_json::to_string_pretty(instance).expect("instances always serialize")
}

#[derive(Serialize)]
struct SolutionOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    solution: &'a Solution,
    used_trucks: usize,
}

#[derive(Deserialize)]
struct SolutionIn {
    schema_version: u32,
    #[serde(flatten)]
    solution: Solution,
}

/// Solution document: assignment, timed routes, placements, mileage, the
/// per-family feasibility flags and the queue diagnostics.
pub fn write_solution(solution: &Solution, _instance: &Instance) -> String {
    serde_json::to_string_pretty(&SolutionOut {
        schema_version: SCHEMA_VERSION,
        solution,
        used_trucks: solution.used_trucks(),
    })
    .expect("solutions always serialize")
}

pub fn parse_solution(text: &str) -> Result<Solution> {
    let doc: SolutionIn = from_json(text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::semantic(
            "document",
            format!("schema_version {} is not supported", doc.schema_version),
        ));
    }
    Ok(doc.solution)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
      "schema_version": 1,
      "locations": [
        {"id": 0, "kind": "truck-yard", "working_window": {"open": 0, "close": 1440},
         "dock_count": 1, "handling_time": 0, "city": "A"},
        {"id": 1, "kind": "supplier", "working_window": {"open": 0, "close": 1440},
         "dock_count": 1, "handling_time": 10, "city": "A"},
        {"id": 2, "kind": "warehouse", "working_window": {"open": 0, "close": 1440},
         "dock_count": 1, "handling_time": 10, "city": "P"}
      ],
      "matrices": {
        "distance": [[0, 10, 20], [10, 0, 15], [20, 15, 0]],
        "travel_time": [[0, 15, 29], [15, 0, 22], [29, 22, 0]]
      },
      "trucks": [
        {"id": 0, "model": "m", "surface_width": 2.4, "surface_length": 7.6,
         "length_class": "7.6m", "cost_per_distance": 1.0, "home_yard": 0}
      ],
      "shipments": [
        {"id": 0, "source": 1, "destination": 2, "bin_count": 4,
         "bin": {"width": 1.2, "length": 1.0, "height": 1.0, "stack_limit": 2},
         "pickup_window": {"open": 0, "close": 1440},
         "delivery_window": {"open": 0, "close": 1440}}
      ],
      "pallet": {"width": 1.2, "length": 1.0, "stack_limit": 2}
    }"#;

    #[test]
    fn minimal_document_parses() {
        let inst = parse_instance(MINIMAL).unwrap();
        assert_eq!(inst.shipments.len(), 1);
        assert!(inst.hub_links.is_empty());
        let again = parse_instance(&serialize_instance(&inst)).unwrap();
        assert_eq!(again, inst);
    }

    #[test]
    fn dangling_source_is_a_semantic_error_naming_the_shipment() {
        let text = MINIMAL.replace(r#""source": 1"#, r#""source": 9"#);
        match parse_instance(&text).unwrap_err() {
            Error::Semantic { entity, .. } => assert_eq!(entity, "shipment S0"),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn syntax_errors_carry_a_position_and_path() {
        let text = MINIMAL.replace(r#""dock_count": 1, "handling_time": 10, "city": "P""#, r#""dock_count": "x", "handling_time": 10, "city": "P""#);
        match parse_instance(&text).unwrap_err() {
            Error::Syntax { line, path, .. } => {
                assert_eq!(line, 9);
                assert_eq!(path, "locations[2].dock_count");
            }
            e => panic!("unexpected error {e}"),
        }
        assert!(matches!(parse_instance("{").unwrap_err(), Error::Syntax { .. }));
    }

    #[test]
    fn inverted_window_is_rejected() {
        let text = MINIMAL.replacen(r#""pickup_window": {"open": 0, "close": 1440}"#, r#""pickup_window": {"open": 50, "close": 10}"#, 1);
        assert!(matches!(parse_instance(&text).unwrap_err(), Error::Semantic { .. }));
    }
}
