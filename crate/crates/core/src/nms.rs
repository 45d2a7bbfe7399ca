//! Greedy non-maximum suppression.

use std::cmp::Ordering;

use crate::geometry::{iou_2d, BoundingBox};
use crate::model::Detection;
use crate::scalar::Scalar;

/// Whether suppression crosses class boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmsMode {
    #[default]
    ClassAgnostic,
    ClassAware,
}

/// Indices sorted by descending score, ties by ascending index.
pub(crate) fn score_order<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy NMS over raw boxes. Returns surviving indices in input order.
///
/// A candidate is suppressed when its IoU with an already kept box of the
/// same suppression class exceeds `iou_thr`. With `classes = None` every box
/// shares one class.
pub fn nms_indices<T: Scalar>(
    boxes: &[BoundingBox<T>],
    scores: &[T],
    iou_thr: T,
    classes: Option<&[i64]>,
) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    if let Some(c) = classes {
        assert_eq!(c.len(), boxes.len(), "one class per box");
    }
    let same_class = |a: usize, b: usize| classes.is_none_or(|c| c[a] == c[b]);

    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(scores) {
        let suppressed = kept
            .iter()
            .any(|&k| same_class(k, i) && iou_2d(&boxes[k], &boxes[i]) > iou_thr);
        if !suppressed {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Greedy NMS over detections. `class_of` is required for
/// [`NmsMode::ClassAware`] and ignored otherwise.
pub fn nms<T: Scalar>(
    dets: &[Detection<T>],
    iou_thr: T,
    mode: NmsMode,
    class_of: Option<&[i64]>,
) -> Vec<Detection<T>> {
    let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
    let scores: Vec<_> = dets.iter().map(|d| d.score).collect();
    let classes = match mode {
        NmsMode::ClassAgnostic => None,
        NmsMode::ClassAware => Some(class_of.expect("class-aware NMS needs a class per detection")),
    };
    nms_indices(&boxes, &scores, iou_thr, classes)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}
