//! Track-level mean average precision with spatio-temporal IoU.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalSplit;
use crate::classify::{ClassVocabulary, Split};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{check_unique_annotations, Annotation, Track, BACKGROUND_ID};
use crate::scalar::Scalar;

/// Ground-truth annotations of one object, keyed by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTrack<T> {
    pub video: String,
    pub track_id: u64,
    /// Class of the earliest annotation.
    pub class_id: i64,
    pub boxes: BTreeMap<u64, BoundingBox<T>>,
}

/// Groups annotations into tracks ordered by `(video, track_id)`.
pub fn group_gt_tracks<T: Scalar>(annos: &[Annotation<T>]) -> Vec<GtTrack<T>> {
    let mut map: BTreeMap<(&str, u64), GtTrack<T>> = BTreeMap::new();
    for a in annos {
        let t = map.entry((&a.video, a.track_id)).or_insert_with(|| GtTrack {
            video: a.video.clone(),
            track_id: a.track_id,
            class_id: a.class_id,
            boxes: BTreeMap::new(),
        });
        if t.boxes.keys().next().is_none_or(|&first| a.frame < first) {
            t.class_id = a.class_id;
        }
        t.boxes.insert(a.frame, a.bbox);
    }
    map.into_values().collect()
}

/// Σ intersection / Σ union over the union of both tracks' frames.
/// Tracks from different videos score 0.
pub fn iou_3d<T: Scalar>(pred: &Track<T>, gt: &GtTrack<T>) -> f64 {
    if pred.video != gt.video {
        return 0.0;
    }
    let (mut inter, mut union) = (0.0, 0.0);
    let frames: BTreeSet<u64> = pred.states.keys().chain(gt.boxes.keys()).copied().collect();
    for f in frames {
        match (pred.states.get(&f), gt.boxes.get(&f)) {
            (Some(p), Some(g)) => {
                let (p, g) = (p.bbox.cast::<f64>(), g.cast::<f64>());
                let i = p.intersection(&g);
                inter += i;
                union += p.area() + g.area() - i;
            }
            (Some(p), None) => union += p.bbox.area().as_f64(),
            (None, Some(g)) => union += g.area().as_f64(),
            (None, None) => {}
        }
    }
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackMapConfig {
    pub thresholds: Vec<f64>,
}

impl Default for TrackMapConfig {
    fn default() -> Self {
        Self { thresholds: vec![0.5, 0.75] }
    }
}

impl TrackMapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one IoU threshold required".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Config(format!("IoU threshold {t} outside (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: i64,
    /// One entry per threshold.
    pub ap: Vec<f64>,
    pub num_gt: usize,
    pub num_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMapScores {
    pub thresholds: Vec<f64>,
    pub per_class: Vec<ClassAp>,
    /// Mean over classes, one entry per threshold.
    pub map_at: Vec<f64>,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    /// Mean of `map_at`.
    pub map: f64,
}

/// All-point interpolated average precision of a ranked list of hits.
pub fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(hits.len());
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        points.push((tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let mut envelope = 0.0f64;
    for p in points.iter_mut().rev() {
        envelope = envelope.max(p.1);
        p.1 = envelope;
    }
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

fn class_ap<T: Scalar>(preds: &[&Track<T>], gts: &[&GtTrack<T>], thresholds: &[f64]) -> Vec<f64> {
    let iou: Vec<Vec<f64>> = preds.iter().map(|p| gts.iter().map(|g| iou_3d(p, g)).collect()).collect();
    thresholds
        .iter()
        .map(|&thr| {
            let mut taken = vec![false; gts.len()];
            let hits: Vec<bool> = iou
                .iter()
                .map(|row| {
                    let mut best: Option<(usize, f64)> = None;
                    for (j, &v) in row.iter().enumerate() {
                        if !taken[j] && v >= thr && v > 0.0 && best.is_none_or(|b| v > b.1) {
                            best = Some((j, v));
                        }
                    }
                    best.map(|(j, _)| taken[j] = true).is_some()
                })
                .collect();
            average_precision(&hits, gts.len())
        })
        .collect()
}

/// Track-mAP restricted to the classes of `split` present in the ground
/// truth. `None` when there are no such classes.
///
/// Predictions are ranked by mean state score and matched greedily to the
/// unmatched ground-truth track of the same class and video with the highest
/// 3D IoU at or above each threshold.
pub fn track_map<T: Scalar>(
    tracks: &[Track<T>],
    gt: &[Annotation<T>],
    vocab: &ClassVocabulary<T>,
    cfg: &TrackMapConfig,
    split: EvalSplit,
) -> Result<Option<TrackMapScores>> {
    cfg.validate()?;
    check_unique_annotations(gt)?;
    let gt_tracks = group_gt_tracks(gt);
    let videos: HashSet<&str> = gt.iter().map(|a| a.video.as_str()).collect();
    for t in tracks {
        if !videos.contains(t.video.as_str()) {
            return Err(Error::invalid(format!("video {:?} has predictions but no ground truth", t.video)));
        }
        if t.class_id != BACKGROUND_ID && !vocab.contains(t.class_id) {
            return Err(Error::UnknownClass(t.class_id));
        }
    }
    let mut classes = BTreeSet::new();
    for g in &gt_tracks {
        let s = vocab.split_of(g.class_id).ok_or(Error::UnknownClass(g.class_id))?;
        let keep = match split {
            EvalSplit::All => true,
            EvalSplit::Base => s == Split::Base,
            EvalSplit::Novel => s == Split::Novel,
        };
        if keep {
            classes.insert(g.class_id);
        }
    }
    if classes.is_empty() {
        return Ok(None);
    }
    let per_class: Vec<ClassAp> = classes
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&c| {
            let mut preds: Vec<(f64, &Track<T>)> = tracks
                .iter()
                .filter(|t| t.class_id == c && !t.states.is_empty())
                .map(|t| (t.mean_score().as_f64(), t))
                .collect();
            preds.sort_by(|a, b| {
                b.0.total_cmp(&a.0).then_with(|| a.1.video.cmp(&b.1.video)).then(a.1.id.cmp(&b.1.id))
            });
            let preds: Vec<&Track<T>> = preds.into_iter().map(|p| p.1).collect();
            let gts: Vec<&GtTrack<T>> = gt_tracks.iter().filter(|g| g.class_id == c).collect();
            ClassAp { class_id: c, ap: class_ap(&preds, &gts, &cfg.thresholds), num_gt: gts.len(), num_pred: preds.len() }
        })
        .collect();
    let n = per_class.len() as f64;
    let map_at: Vec<f64> =
        (0..cfg.thresholds.len()).map(|i| per_class.iter().map(|c| c.ap[i]).sum::<f64>() / n).collect();
    let at = |t: f64| cfg.thresholds.iter().position(|&x| x == t).map(|i| map_at[i]);
    Ok(Some(TrackMapScores {
        thresholds: cfg.thresholds.clone(),
        map50: at(0.5),
        map75: at(0.75),
        map: map_at.iter().sum::<f64>() / map_at.len() as f64,
        map_at,
        per_class,
    }))
}
