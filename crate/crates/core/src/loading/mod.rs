//! Loading constraints: stacking bins into columns and pallets, the area
//! pre-filter, 2D placement on the truck surface, and the rear-unloading
//! sequence rule.
//!
//! Surface coordinates: `u` runs across the width, `v` along the length with
//! `v = 0` at the rear door and `v` growing toward the nose. Items are loaded
//! and unloaded through the rear by straight pulls along `v`.
//!
//! A truck keeps one placement for its whole route. An item occupies its
//! rectangle from its pickup stop until its delivery stop, so two items only
//! compete for space (and for the rear path) when their onboard intervals
//! overlap.

mod pack;
mod sequence;

pub use pack::pack;
pub use sequence::{check_sequence, items_overlap, sequence_ok};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PalletSpec, Shipment, ShipmentId, Truck, TruckId, EPS};

/// Bins stacked on one pallet footprint, with their position on the pallet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalletColumn {
    pub layers: u32,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalletLoad {
    pub columns: Vec<PalletColumn>,
}

/// A rectangle standing on the truck floor: either a stack of identical bins
/// or a stack of loaded pallets (`on_pallet`, `layers` = pallets in the stack).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub shipment: ShipmentId,
    pub width: f64,
    pub length: f64,
    pub layers: u32,
    #[serde(default)]
    pub on_pallet: bool,
    /// Pallets bottom to top; empty unless `on_pallet`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pallets: Vec<PalletLoad>,
}

impl Column {
    #[inline]
    pub fn area(&self) -> f64 {
        self.width * self.length
    }

    /// Bins carried by this column.
    pub fn bins(&self) -> u32 {
        if self.on_pallet {
            self.pallets
                .iter()
                .flat_map(|p| p.columns.iter())
                .map(|c| c.layers)
                .sum()
        } else {
            self.layers
        }
    }
}

/// Pickup and delivery stop indices of the shipment a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StopSpan {
    pub pickup: usize,
    pub delivery: usize,
}

impl StopSpan {
    pub const fn new(pickup: usize, delivery: usize) -> Self {
        Self { pickup, delivery }
    }

    /// Whether both items are on board at the same time.
    #[inline]
    pub fn co_onboard(self, other: StopSpan) -> bool {
        self.pickup < other.delivery && other.pickup < self.delivery
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedItem {
    pub column: Column,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub truck: TruckId,
    pub items: Vec<PlacedItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Prejudge,
    NoArrangement,
    Sequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackOutcome {
    pub feasible: bool,
    pub placement: Option<Placement>,
    pub reject_reason: Option<RejectReason>,
}

impl PackOutcome {
    pub(crate) fn rejected(reason: RejectReason) -> Self {
        Self {
            feasible: false,
            placement: None,
            reject_reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackParams {
    /// Maximum covered fraction of the surface accepted by [`prejudge`].
    pub threshold: f64,
    /// Partial placements kept per level; `usize::MAX` searches exhaustively.
    pub beam_width: usize,
    /// Weights of (wasted area, skyline irregularity, covered area).
    pub weights: [f64; 3],
}

impl Default for PackParams {
    fn default() -> Self {
        Self {
            threshold: 0.85,
            beam_width: 5,
            weights: [1.0, 0.5, 1.0],
        }
    }
}

impl PackParams {
    pub const FULL_WIDTH: usize = usize::MAX;
}

/// Stacks a shipment's bins into floor columns.
///
/// Loose bins form `⌈bins / stack_limit⌉` columns, all full except possibly
/// the last. Palletised bins are first stacked the same way, the stacks are
/// laid out in a grid on pallets, and loaded pallets are stacked up to the
/// pallet stack limit.
pub fn build_columns(shipment: &Shipment, pallet: &PalletSpec) -> Result<Vec<Column>> {
    let bin = &shipment.bin;
    let per_stack = bin.stack_limit.max(1);
    let n_stacks = shipment.bin_count.div_ceil(per_stack);
    let stack_layers = |k: u32| {
        if k + 1 < n_stacks {
            per_stack
        } else {
            shipment.bin_count - per_stack * (n_stacks - 1)
        }
    };

    if !shipment.needs_pallet {
        return Ok((0..n_stacks)
            .map(|k| Column {
                shipment: shipment.id,
                width: bin.width,
                length: bin.length,
                layers: stack_layers(k),
                on_pallet: false,
                pallets: Vec::new(),
            })
            .collect());
    }

    let across = ((pallet.width + EPS) / bin.width).floor() as u32;
    let along = ((pallet.length + EPS) / bin.length).floor() as u32;
    let per_pallet = across * along;
    if per_pallet == 0 {
        return Err(Error::BinExceedsPallet(shipment.id));
    }

    let mut pallets = Vec::new();
    let mut current = PalletLoad {
        columns: Vec::new(),
    };
    for k in 0..n_stacks {
        let slot = current.columns.len() as u32;
        current.columns.push(PalletColumn {
            layers: stack_layers(k),
            u: (slot % across) as f64 * bin.width,
            v: (slot / across) as f64 * bin.length,
        });
        if current.columns.len() as u32 == per_pallet {
            pallets.push(std::mem::replace(
                &mut current,
                PalletLoad {
                    columns: Vec::new(),
                },
            ));
        }
    }
    if !current.columns.is_empty() {
        pallets.push(current);
    }

    let per_floor = pallet.stack_limit.max(1) as usize;
    Ok(pallets
        .chunks(per_floor)
        .map(|chunk| Column {
            shipment: shipment.id,
            width: pallet.width,
            length: pallet.length,
            layers: chunk.len() as u32,
            on_pallet: true,
            pallets: chunk.to_vec(),
        })
        .collect())
}

/// Area filter: the columns may cover at most `threshold` of the surface.
pub fn prejudge(columns: &[Column], truck: &Truck, threshold: f64) -> bool {
    let covered: f64 = columns.iter().map(Column::area).sum();
    covered <= threshold * truck.surface_area() + EPS
}

/// Applies [`prejudge`] to the load on board after every stop.
pub fn prejudge_route(
    columns: &[Column],
    spans: &[StopSpan],
    truck: &Truck,
    threshold: f64,
) -> bool {
    let Some(last) = spans.iter().map(|s| s.delivery).max() else {
        return true;
    };
    let limit = threshold * truck.surface_area() + EPS;
    (0..last).all(|stop| {
        let onboard: f64 = columns
            .iter()
            .zip(spans)
            .filter(|(_, s)| s.pickup <= stop && stop < s.delivery)
            .map(|(c, _)| c.area())
            .sum();
        onboard <= limit
    })
}

/// Prejudge on every stop, then pack.
pub fn load_truck(
    columns: &[Column],
    spans: &[StopSpan],
    truck: &Truck,
    params: &PackParams,
) -> PackOutcome {
    if !prejudge_route(columns, spans, truck, params.threshold) {
        return PackOutcome::rejected(RejectReason::Prejudge);
    }
    pack(columns, truck, spans, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BinSpec, LocationId, TimeWindow};

    fn shipment(bins: u32, w: f64, l: f64, stack: u32, pallet: bool) -> Shipment {
        Shipment {
            id: ShipmentId(0),
            source: LocationId(1),
            destination: LocationId(2),
            bin_count: bins,
            bin: BinSpec {
                width: w,
                length: l,
                height: 1.0,
                stack_limit: stack,
            },
            needs_pallet: pallet,
            pickup_window: TimeWindow::new(0, 1440),
            delivery_window: TimeWindow::new(0, 1440),
        }
    }

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

    const PALLET: PalletSpec = PalletSpec {
        width: 1.0,
        length: 1.0,
        stack_limit: 2,
    };

    #[test]
    fn loose_bins_fill_columns_to_the_limit() {
        let cols = build_columns(&shipment(10, 1.0, 1.0, 4, false), &PALLET).unwrap();
        let layers: Vec<u32> = cols.iter().map(|c| c.layers).collect();
        assert_eq!(layers, vec![4, 4, 2]);

        let cols = build_columns(&shipment(1, 1.0, 1.0, 1, false), &PALLET).unwrap();
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].layers, 1);
    }

    #[test]
    fn palletised_bins_fill_pallets_then_stack_them() {
        let cols = build_columns(&shipment(8, 0.5, 0.5, 1, true), &PALLET).unwrap();
        // 4 single-bin stacks per pallet, 2 pallets stacked on one footprint.
        assert_eq!(cols.len(), 1);
        assert!(cols[0].on_pallet);
        assert_eq!(cols[0].layers, 2);
        assert_eq!((cols[0].width, cols[0].length), (1.0, 1.0));
        for p in &cols[0].pallets {
            assert_eq!(p.columns.len(), 4);
        }
        let bins: u32 = cols.iter().map(Column::bins).sum();
        assert_eq!(bins, 8);
    }

    #[test]
    fn oversized_bin_cannot_be_palletised() {
        let err = build_columns(&shipment(2, 1.5, 0.5, 1, true), &PALLET).unwrap_err();
        assert!(matches!(err, Error::BinExceedsPallet(ShipmentId(0))));
    }

    #[test]
    fn prejudge_is_a_pure_area_ratio() {
        let t = truck(2.0, 5.0);
        assert!(prejudge(&[], &t, 0.9));
        let cols = build_columns(&shipment(19, 0.5, 1.0, 1, false), &PALLET).unwrap();
        // 19 × 0.5 = 9.5 of 10.0 → 95%.
        assert!(!prejudge(&cols, &t, 0.9));
        assert!(prejudge(&cols, &t, 0.95));
    }

    #[test]
    fn prejudge_route_only_counts_items_on_board() {
        let t = truck(1.0, 1.0);
        let cols = build_columns(&shipment(2, 1.0, 1.0, 1, false), &PALLET).unwrap();
        // Same area sequentially: fits. Simultaneously: does not.
        let seq = [StopSpan::new(1, 2), StopSpan::new(3, 4)];
        let par = [StopSpan::new(1, 3), StopSpan::new(2, 4)];
        assert!(prejudge_route(&cols, &seq, &t, 1.0));
        assert!(!prejudge_route(&cols, &par, &t, 1.0));
    }
}
