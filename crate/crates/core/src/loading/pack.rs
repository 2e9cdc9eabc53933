//! Beam search over partial placements.
//!
//! Internally depth `y` is measured from the nose (`y = 0` at the front
//! wall), so that items loaded first and unloaded last settle at small depth.
//! Each level places one more item. Candidate positions for an item are the
//! corner grid of the items it shares the surface with: `u` is the left wall
//! or the right edge of such an item, and for every `u` the item is pushed
//! as far toward the nose as the overlap and rear-access rules allow.
//! Identical items (same footprint and stop span) are interchangeable, so a
//! state only branches once per item class.

use std::collections::HashSet;

use super::sequence::{pair_ok, spans_overlap};
use super::{Column, PackOutcome, PackParams, PlacedItem, Placement, RejectReason, StopSpan};
use crate::model::{Truck, EPS};

struct Class {
    width: f64,
    length: f64,
    span: StopSpan,
    members: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Placed {
    class: usize,
    item: usize,
    u: f64,
    y: f64,
}

#[derive(Clone)]
struct State {
    placed: Vec<Placed>,
    used: Vec<u32>,
    /// `(segment start, depth)` pairs covering `[0, W)`.
    skyline: Vec<(f64, f64)>,
    covered: f64,
}

struct Child {
    parent: usize,
    class: usize,
    u: f64,
    y: f64,
    skyline: Vec<(f64, f64)>,
    covered: f64,
    score: f64,
}

fn quantize(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

fn dedup_sorted(values: &mut Vec<f64>) {
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= EPS);
}

/// Raises the skyline over `[u, u + w)` to at least `depth`.
fn raise_skyline(skyline: &[(f64, f64)], width: f64, u: f64, w: f64, depth: f64) -> Vec<(f64, f64)> {
    let end = u + w;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(skyline.len() + 2);
    let push = |start: f64, d: f64, out: &mut Vec<(f64, f64)>| {
        if let Some(last) = out.last() {
            if (last.1 - d).abs() <= EPS {
                return;
            }
            if (last.0 - start).abs() <= EPS {
                out.pop();
                if let Some(prev) = out.last() {
                    if (prev.1 - d).abs() <= EPS {
                        return;
                    }
                }
            }
        }
        out.push((start, d));
    };
    for (k, &(s, d)) in skyline.iter().enumerate() {
        let e = skyline.get(k + 1).map_or(width, |n| n.0);
        if e <= u + EPS || s >= end - EPS {
            push(s, d, &mut out);
            continue;
        }
        if s < u - EPS {
            push(s, d, &mut out);
        }
        push(s.max(u), d.max(depth), &mut out);
        if e > end + EPS {
            push(end, d, &mut out);
        }
    }
    out
}

fn skyline_metrics(skyline: &[(f64, f64)], width: f64) -> (f64, f64) {
    let mut area = 0.0;
    let mut irregularity = 0.0;
    for (k, &(s, d)) in skyline.iter().enumerate() {
        let e = skyline.get(k + 1).map_or(width, |n| n.0);
        area += (e - s) * d;
        if let Some(next) = skyline.get(k + 1) {
            irregularity += (next.1 - d).abs();
        }
    }
    (area, irregularity)
}

fn score(params: &PackParams, skyline: &[(f64, f64)], width: f64, covered: f64) -> f64 {
    let (enclosed, irregularity) = skyline_metrics(skyline, width);
    let wasted = (enclosed - covered).max(0.0);
    let [w_waste, w_irregular, w_cover] = params.weights;
    -w_waste * wasted - w_irregular * irregularity + w_cover * covered
}

/// Searches a placement for `columns` whose stop spans are `spans`.
///
/// Feasible placements keep every item inside the surface, never overlap
/// two items that are on board together, and satisfy the rear-access rule
/// (see [`super::sequence_ok`]). Deterministic for equal inputs.
pub fn pack(columns: &[Column], truck: &Truck, spans: &[StopSpan], params: &PackParams) -> PackOutcome {
    assert_eq!(columns.len(), spans.len(), "one stop span per column");
    let (width, length) = (truck.surface_width, truck.surface_length);

    if columns
        .iter()
        .any(|c| c.width > width + EPS || c.length > length + EPS)
    {
        return PackOutcome::rejected(RejectReason::NoArrangement);
    }

    let mut classes: Vec<Class> = Vec::new();
    for (k, (c, s)) in columns.iter().zip(spans).enumerate() {
        match classes.iter_mut().find(|cl| {
            cl.span == *s && (cl.width - c.width).abs() <= EPS && (cl.length - c.length).abs() <= EPS
        }) {
            Some(cl) => cl.members.push(k),
            None => classes.push(Class {
                width: c.width,
                length: c.length,
                span: *s,
                members: vec![k],
            }),
        }
    }
    // Loaded early and unloaded late first; larger first within a stop pair.
    classes.sort_by(|a, b| {
        a.span
            .pickup
            .cmp(&b.span.pickup)
            .then(b.span.delivery.cmp(&a.span.delivery))
            .then((b.width * b.length).total_cmp(&(a.width * a.length)))
            .then(b.width.total_cmp(&a.width))
            .then(a.members[0].cmp(&b.members[0]))
    });
    let n_classes = classes.len();
    let conflict: Vec<Vec<bool>> = classes
        .iter()
        .map(|a| classes.iter().map(|b| a.span.co_onboard(b.span)).collect())
        .collect();

    let mut states = vec![State {
        placed: Vec::new(),
        used: vec![0; n_classes],
        skyline: vec![(0.0, 0.0)],
        covered: 0.0,
    }];

    for _level in 0..columns.len() {
        let mut children: Vec<Child> = Vec::new();
        let mut sequence_blocked = false;

        for (parent, state) in states.iter().enumerate() {
            for (ci, class) in classes.iter().enumerate() {
                if state.used[ci] as usize >= class.members.len() {
                    continue;
                }
                let (w, l) = (class.width, class.length);
                let sharing: Vec<&Placed> = state
                    .placed
                    .iter()
                    .filter(|p| conflict[p.class][ci])
                    .collect();

                let mut us: Vec<f64> = std::iter::once(0.0)
                    .chain(sharing.iter().map(|p| p.u + classes[p.class].width))
                    .filter(|&u| u + w <= width + EPS)
                    .collect();
                dedup_sorted(&mut us);

                for &u in &us {
                    let strip: Vec<&&Placed> = sharing
                        .iter()
                        .filter(|p| spans_overlap(u, w, p.u, classes[p.class].width))
                        .collect();
                    let mut ys: Vec<f64> = std::iter::once(0.0)
                        .chain(strip.iter().map(|p| p.y + classes[p.class].length))
                        .collect();
                    dedup_sorted(&mut ys);

                    for &y in &ys {
                        if y + l > length + EPS {
                            break;
                        }
                        if strip
                            .iter()
                            .any(|p| spans_overlap(y, l, p.y, classes[p.class].length))
                        {
                            continue;
                        }
                        // Rear-access rule in surface coordinates (v from the rear).
                        let me = (u, length - y - l, w, l);
                        let blocked = strip.iter().any(|p| {
                            let pc = &classes[p.class];
                            let other = (p.u, length - p.y - pc.length, pc.width, pc.length);
                            !pair_ok(me, class.span, other, pc.span)
                        });
                        if blocked {
                            sequence_blocked = true;
                            continue;
                        }
                        let skyline = raise_skyline(&state.skyline, width, u, w, y + l);
                        let covered = state.covered + w * l;
                        let s = score(params, &skyline, width, covered);
                        children.push(Child {
                            parent,
                            class: ci,
                            u,
                            y,
                            skyline,
                            covered,
                            score: s,
                        });
                        break;
                    }
                }
            }
        }

        if children.is_empty() {
            let reason = if sequence_blocked {
                RejectReason::Sequence
            } else {
                RejectReason::NoArrangement
            };
            return PackOutcome::rejected(reason);
        }

        children.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.parent.cmp(&b.parent))
                .then(a.class.cmp(&b.class))
                .then(a.u.total_cmp(&b.u))
                .then(a.y.total_cmp(&b.y))
        });

        let mut seen: HashSet<Vec<(usize, i64, i64)>> = HashSet::new();
        let mut next: Vec<State> = Vec::new();
        for child in children {
            if next.len() >= params.beam_width.max(1) {
                break;
            }
            let parent = &states[child.parent];
            let mut key: Vec<(usize, i64, i64)> = parent
                .placed
                .iter()
                .map(|p| (p.class, quantize(p.u), quantize(p.y)))
                .collect();
            key.push((child.class, quantize(child.u), quantize(child.y)));
            key.sort_unstable();
            if !seen.insert(key) {
                continue;
            }
            let mut placed = parent.placed.clone();
            let mut used = parent.used.clone();
            let item = classes[child.class].members[used[child.class] as usize];
            used[child.class] += 1;
            placed.push(Placed {
                class: child.class,
                item,
                u: child.u,
                y: child.y,
            });
            next.push(State {
                placed,
                used,
                skyline: child.skyline,
                covered: child.covered,
            });
        }
        states = next;
    }

    let best = &states[0];
    let mut slots: Vec<Option<PlacedItem>> = vec![None; columns.len()];
    for p in &best.placed {
        let c = &columns[p.item];
        slots[p.item] = Some(PlacedItem {
            column: c.clone(),
            u: p.u,
            v: length - p.y - c.length,
        });
    }
    PackOutcome {
        feasible: true,
        placement: Some(Placement {
            truck: truck.id,
            items: slots.into_iter().map(|s| s.expect("every item placed")).collect(),
        }),
        reject_reason: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loading::sequence_ok;
    use crate::model::{LocationId, ShipmentId, TruckId};

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

    fn col(shipment: u32, w: f64, l: f64) -> Column {
        Column {
            shipment: ShipmentId(shipment),
            width: w,
            length: l,
            layers: 1,
            on_pallet: false,
            pallets: Vec::new(),
        }
    }

    #[test]
    fn exact_fit_of_two_unit_columns() {
        let cols = [col(0, 1.0, 1.0), col(1, 1.0, 1.0)];
        let spans = [StopSpan::new(1, 2); 2];
        let out = pack(&cols, &truck(2.0, 1.0), &spans, &PackParams::default());
        assert!(out.feasible);
        let mut coords: Vec<(f64, f64)> = out
            .placement
            .unwrap()
            .items
            .iter()
            .map(|i| (i.u, i.v))
            .collect();
        coords.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(coords, vec![(0.0, 0.0), (1.0, 0.0)]);
    }

    #[test]
    fn oversized_column_is_rejected() {
        let out = pack(
            &[col(0, 3.0, 1.0)],
            &truck(2.0, 2.0),
            &[StopSpan::new(1, 2)],
            &PackParams::default(),
        );
        assert!(!out.feasible);
        assert_eq!(out.reject_reason, Some(RejectReason::NoArrangement));
    }

    #[test]
    fn single_lane_orders_items_by_delivery() {
        // A 1-wide lane: the item delivered last must sit at the nose.
        let cols = [col(0, 1.0, 1.0), col(1, 1.0, 1.0), col(2, 1.0, 1.0)];
        let spans = [StopSpan::new(1, 2), StopSpan::new(1, 4), StopSpan::new(1, 3)];
        let out = pack(&cols, &truck(1.0, 3.0), &spans, &PackParams::default());
        let items = out.placement.unwrap().items;
        assert_eq!(items[1].v, 2.0);
        assert_eq!(items[2].v, 1.0);
        assert_eq!(items[0].v, 0.0);
    }

    #[test]
    fn lane_that_needs_fifo_order_is_a_sequence_failure() {
        // Picked up in order 0 then 1, delivered in the same order, one lane.
        let cols = [col(0, 1.0, 1.0), col(1, 1.0, 1.0)];
        let spans = [StopSpan::new(1, 3), StopSpan::new(2, 4)];
        let out = pack(&cols, &truck(1.0, 2.0), &spans, &PackParams::default());
        assert!(!out.feasible);
        assert_eq!(out.reject_reason, Some(RejectReason::Sequence));
        // With a second lane the same load fits.
        let out = pack(&cols, &truck(2.0, 1.0), &spans, &PackParams::default());
        assert!(out.feasible);
    }

    #[test]
    fn items_on_board_at_different_times_share_space() {
        let cols = [col(0, 1.0, 1.0), col(1, 1.0, 1.0)];
        let spans = [StopSpan::new(1, 2), StopSpan::new(3, 4)];
        let out = pack(&cols, &truck(1.0, 1.0), &spans, &PackParams::default());
        assert!(out.feasible);
    }

    #[test]
    fn result_respects_bounds_overlap_and_sequence() {
        let cols: Vec<Column> = (0..6).map(|k| col(k, 0.8, 1.2)).collect();
        let spans: Vec<StopSpan> = (0..6).map(|k| StopSpan::new(1 + k % 2, 3 + k % 3)).collect();
        let t = truck(2.4, 4.0);
        let out = pack(&cols, &t, &spans, &PackParams::default());
        let items = out.placement.expect("fits");
        let rects: Vec<_> = items
            .items
            .iter()
            .zip(&spans)
            .map(|(i, s)| ((i.u, i.v, i.column.width, i.column.length), *s))
            .collect();
        for (r, _) in &rects {
            assert!(r.0 >= -EPS && r.0 + r.2 <= t.surface_width + EPS);
            assert!(r.1 >= -EPS && r.1 + r.3 <= t.surface_length + EPS);
        }
        assert!(sequence_ok(&rects));
    }

    #[test]
    fn skyline_raise_merges_segments() {
        let s = raise_skyline(&[(0.0, 0.0)], 3.0, 1.0, 1.0, 2.0);
        assert_eq!(s, vec![(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]);
        let s = raise_skyline(&s, 3.0, 0.0, 1.0, 2.0);
        assert_eq!(s, vec![(0.0, 2.0), (2.0, 0.0)]);
        let (area, irr) = skyline_metrics(&s, 3.0);
        assert_eq!((area, irr), (4.0, 2.0));
    }
}
