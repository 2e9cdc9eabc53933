use super::{Placement, StopSpan};
use crate::model::{Route, EPS};

/// Axis-aligned rectangle `(u, v, width, length)`.
pub(crate) type Rect = (f64, f64, f64, f64);

#[inline]
pub(crate) fn spans_overlap(a0: f64, a_len: f64, b0: f64, b_len: f64) -> bool {
    a0 < b0 + b_len - EPS && b0 < a0 + a_len - EPS
}

/// Interior intersection of two rectangles.
#[inline]
pub fn items_overlap(a: Rect, b: Rect) -> bool {
    spans_overlap(a.0, a.2, b.0, b.2) && spans_overlap(a.1, a.3, b.1, b.3)
}

/// Rear-access rule for a single pair of co-onboard items.
///
/// Items sharing a strip of width block each other's straight pull along the
/// length axis. The item nearer the nose must be loaded no later and
/// unloaded no earlier than the item behind it.
pub(crate) fn pair_ok(a: Rect, sa: StopSpan, b: Rect, sb: StopSpan) -> bool {
    if !sa.co_onboard(sb) || !spans_overlap(a.0, a.2, b.0, b.2) {
        return true;
    }
    let (nose_span, rear_span) = if a.1 >= b.1 + b.3 - EPS {
        (sa, sb)
    } else if b.1 >= a.1 + a.3 - EPS {
        (sb, sa)
    } else {
        // Overlapping rectangles cannot be ordered.
        return false;
    };
    nose_span.pickup <= rear_span.pickup && nose_span.delivery >= rear_span.delivery
}

/// Sequence rule over a set of placed rectangles with their stop spans.
pub fn sequence_ok(items: &[(Rect, StopSpan)]) -> bool {
    for (i, &(a, sa)) in items.iter().enumerate() {
        for &(b, sb) in &items[i + 1..] {
            if !pair_ok(a, sa, b, sb) {
                return false;
            }
        }
    }
    true
}

/// True iff every item can be pushed in at its pickup stop and pulled out at
/// its delivery stop through the rear door without moving any other item.
///
/// Items whose shipment is not carried by `route` fail the check.
pub fn check_sequence(placement: &Placement, route: &Route) -> bool {
    let mut items = Vec::with_capacity(placement.items.len());
    for it in &placement.items {
        let Some((p, d)) = route.span_of(it.column.shipment) else {
            return false;
        };
        items.push((
            (it.u, it.v, it.column.width, it.column.length),
            StopSpan::new(p, d),
        ));
    }
    sequence_ok(&items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_item_is_always_extractable() {
        assert!(sequence_ok(&[((0.0, 0.0, 1.0, 1.0), StopSpan::new(1, 2))]));
    }

    #[test]
    fn earlier_delivery_behind_later_one_blocks() {
        // A is delivered first (stop 2) but sits nose-ward of B (delivered at 3).
        let a = ((0.0, 1.0, 1.0, 1.0), StopSpan::new(1, 2));
        let b = ((0.0, 0.0, 1.0, 1.0), StopSpan::new(1, 3));
        assert!(!sequence_ok(&[a, b]));
        // Side by side is fine.
        let b_side = ((1.0, 0.0, 1.0, 1.0), StopSpan::new(1, 3));
        assert!(sequence_ok(&[a, b_side]));
        // Swapping depths is fine.
        let a_rear = ((0.0, 0.0, 1.0, 1.0), StopSpan::new(1, 2));
        let b_nose = ((0.0, 1.0, 1.0, 1.0), StopSpan::new(1, 3));
        assert!(sequence_ok(&[a_rear, b_nose]));
    }

    #[test]
    fn items_never_on_board_together_do_not_interact() {
        let a = ((0.0, 1.0, 1.0, 1.0), StopSpan::new(1, 2));
        let b = ((0.0, 0.0, 1.0, 1.0), StopSpan::new(3, 4));
        assert!(sequence_ok(&[a, b]));
    }

    #[test]
    fn later_pickup_cannot_pass_an_item_already_behind() {
        // Both delivered together; B loaded first at the rear, A later at the nose.
        let a = ((0.0, 1.0, 1.0, 1.0), StopSpan::new(2, 3));
        let b = ((0.0, 0.0, 1.0, 1.0), StopSpan::new(1, 3));
        assert!(!sequence_ok(&[a, b]));
    }
}
