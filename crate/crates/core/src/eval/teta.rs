//! TETA: localization, association and classification accuracy.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matching::{canonical_matching, iou_weights};
use super::EvalSplit;
use crate::classify::{ClassVocabulary, Split};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{check_unique_annotations, Annotation, Track, BACKGROUND_ID};
use crate::scalar::Scalar;

/// Which unmatched boxes count against association.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssocCounts {
    /// FPA/FNA also include unmatched detections/annotations of the two tracks.
    #[default]
    HotaStyle,
    /// FPA/FNA count other true-positive localizations only.
    TplOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TetaConfig {
    /// Minimum IoU for a localization match (α_loc).
    pub loc_iou_thr: f64,
    pub assoc_counts: AssocCounts,
}

impl Default for TetaConfig {
    fn default() -> Self {
        Self { loc_iou_thr: 0.5, assoc_counts: AssocCounts::HotaStyle }
    }
}

impl TetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loc_iou_thr > 0.0 && self.loc_iou_thr <= 1.0) {
            return Err(Error::Config(format!("loc_iou_thr {} outside (0, 1]", self.loc_iou_thr)));
        }
        Ok(())
    }
}

/// Association counts of one true-positive localization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssocTerms {
    pub tpa: usize,
    pub fpa: usize,
    pub fna: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetaScores {
    pub teta: f64,
    pub loc_a: f64,
    pub assoc_a: f64,
    pub cls_a: f64,
    pub tpl: usize,
    pub fpl: usize,
    pub fnl: usize,
    pub tpc: usize,
    pub fpc: usize,
    pub fnc: usize,
    /// Per-TPL terms ordered by video, frame and canonical prediction order.
    #[serde(skip)]
    pub assoc_terms: Vec<AssocTerms>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl TetaScores {
    pub(crate) fn from_counts(tpl: usize, fpl: usize, fnl: usize, tpc: usize, assoc_terms: Vec<AssocTerms>) -> Self {
        debug_assert_eq!(tpl, assoc_terms.len());
        let wrong = tpl - tpc;
        let loc_a = ratio(tpl, tpl + fpl + fnl);
        let cls_a = ratio(tpc, tpc + 2 * wrong);
        let assoc_a = if tpl == 0 {
            0.0
        } else {
            assoc_terms.iter().map(|t| ratio(t.tpa, t.tpa + t.fpa + t.fna)).sum::<f64>() / tpl as f64
        };
        Self {
            teta: (loc_a + assoc_a + cls_a) / 3.0,
            loc_a,
            assoc_a,
            cls_a,
            tpl,
            fpl,
            fnl,
            tpc,
            fpc: wrong,
            fnc: wrong,
            assoc_terms,
        }
    }

    pub fn tpa_total(&self) -> usize {
        self.assoc_terms.iter().map(|t| t.tpa).sum()
    }

    pub fn fpa_total(&self) -> usize {
        self.assoc_terms.iter().map(|t| t.fpa).sum()
    }

    pub fn fna_total(&self) -> usize {
        self.assoc_terms.iter().map(|t| t.fna).sum()
    }
}

/// Scores over all classes and per split. A section is `None` when the
/// ground truth has no annotations in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetaReport {
    pub all: Option<TetaScores>,
    pub base: Option<TetaScores>,
    pub novel: Option<TetaScores>,
}

impl TetaReport {
    pub fn get(&self, split: EvalSplit) -> Option<&TetaScores> {
        match split {
            EvalSplit::All => self.all.as_ref(),
            EvalSplit::Base => self.base.as_ref(),
            EvalSplit::Novel => self.novel.as_ref(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PredBox {
    pub track: usize,
    pub bbox: BoundingBox<f64>,
    pub class: i64,
}

#[derive(Debug, Clone)]
pub(crate) struct GtBox {
    pub track: usize,
    pub bbox: BoundingBox<f64>,
    pub class: i64,
}

pub(crate) struct FrameBoxes {
    pub preds: Vec<PredBox>,
    pub gts: Vec<GtBox>,
}

/// Validated input grouped by video and frame, boxes in canonical order.
pub(crate) struct Prepared {
    pub videos: Vec<(String, Vec<FrameBoxes>)>,
    pub pred_tracks_per_video: Vec<usize>,
    pub gt_tracks_per_video: Vec<usize>,
    /// Split of each class seen in the ground truth or predictions.
    pub splits: HashMap<i64, Split>,
}

fn box_key(b: &BoundingBox<f64>) -> [f64; 4] {
    [b.x, b.y, b.w, b.h]
}

fn cmp_key(a: [f64; 4], b: [f64; 4]) -> std::cmp::Ordering {
    a.iter().zip(&b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

pub(crate) fn prepare<T: Scalar>(tracks: &[Track<T>], gt: &[Annotation<T>], vocab: &ClassVocabulary<T>) -> Result<Prepared> {
    check_unique_annotations(gt)?;
    let mut splits = HashMap::new();
    let mut frames: BTreeMap<&str, BTreeMap<u64, FrameBoxes>> = BTreeMap::new();
    let mut gt_ids: HashMap<(&str, u64), usize> = HashMap::new();
    let mut gt_tracks_in: BTreeMap<&str, HashSet<u64>> = BTreeMap::new();
    for a in gt {
        let split = vocab.split_of(a.class_id).ok_or(Error::UnknownClass(a.class_id))?;
        splits.insert(a.class_id, split);
        a.bbox.validate()?;
        let next = gt_ids.len();
        let track = *gt_ids.entry((a.video.as_str(), a.track_id)).or_insert(next);
        gt_tracks_in.entry(&a.video).or_default().insert(a.track_id);
        frames
            .entry(&a.video)
            .or_default()
            .entry(a.frame)
            .or_insert_with(|| FrameBoxes { preds: Vec::new(), gts: Vec::new() })
            .gts
            .push(GtBox { track, bbox: a.bbox.cast(), class: a.class_id });
    }
    let mut pred_tracks_in: BTreeMap<&str, usize> = BTreeMap::new();
    for (ti, t) in tracks.iter().enumerate() {
        let video = frames
            .get_mut(t.video.as_str())
            .ok_or_else(|| Error::invalid(format!("video {:?} has predictions but no ground truth", t.video)))?;
        *pred_tracks_in.entry(&t.video).or_default() += 1;
        for (&frame, s) in &t.states {
            if s.class_id != BACKGROUND_ID {
                let split = vocab.split_of(s.class_id).ok_or(Error::UnknownClass(s.class_id))?;
                splits.insert(s.class_id, split);
            }
            s.bbox.validate()?;
            video
                .entry(frame)
                .or_insert_with(|| FrameBoxes { preds: Vec::new(), gts: Vec::new() })
                .preds
                .push(PredBox { track: ti, bbox: s.bbox.cast(), class: s.class_id });
        }
    }
    let gt_key: Vec<u64> = {
        let mut v = vec![0; gt_ids.len()];
        for (&(_, id), &i) in &gt_ids {
            v[i] = id;
        }
        v
    };
    let mut videos = Vec::new();
    let (mut n_pred, mut n_gt) = (Vec::new(), Vec::new());
    for (video, frame_map) in frames {
        let mut list = Vec::new();
        for (_, mut f) in frame_map {
            f.preds.sort_by(|a, b| {
                cmp_key(box_key(&a.bbox), box_key(&b.bbox))
                    .then(a.class.cmp(&b.class))
                    .then(tracks[a.track].id.cmp(&tracks[b.track].id))
            });
            f.gts.sort_by(|a, b| {
                cmp_key(box_key(&a.bbox), box_key(&b.bbox))
                    .then(a.class.cmp(&b.class))
                    .then(gt_key[a.track].cmp(&gt_key[b.track]))
            });
            list.push(f);
        }
        n_pred.push(pred_tracks_in.get(video).copied().unwrap_or(0));
        n_gt.push(gt_tracks_in.get(video).map_or(0, |s| s.len()));
        videos.push((video.to_string(), list));
    }
    Ok(Prepared { videos, pred_tracks_per_video: n_pred, gt_tracks_per_video: n_gt, splits })
}

/// Localization outcome of one video, in canonical order.
#[derive(Debug, Default)]
pub(crate) struct VideoOutcome {
    /// (pred track, gt track, pred class, gt class)
    pub tpl: Vec<(usize, usize, i64, i64)>,
    /// (pred track, pred class)
    pub fpl: Vec<(usize, i64)>,
    /// (gt track, gt class)
    pub fnl: Vec<(usize, i64)>,
}

fn match_video(frames: &[FrameBoxes], thr: f64) -> VideoOutcome {
    let mut out = VideoOutcome::default();
    for f in frames {
        let pb: Vec<_> = f.preds.iter().map(|p| p.bbox).collect();
        let gb: Vec<_> = f.gts.iter().map(|g| g.bbox).collect();
        let partners = canonical_matching(&iou_weights(&pb, &gb, thr), gb.len());
        let mut gt_used = vec![false; gb.len()];
        for (p, partner) in f.preds.iter().zip(&partners) {
            match partner {
                Some(j) => {
                    gt_used[*j] = true;
                    let g = &f.gts[*j];
                    out.tpl.push((p.track, g.track, p.class, g.class));
                }
                None => out.fpl.push((p.track, p.class)),
            }
        }
        for (g, used) in f.gts.iter().zip(gt_used) {
            if !used {
                out.fnl.push((g.track, g.class));
            }
        }
    }
    out
}

fn in_split(splits: &HashMap<i64, Split>, class: i64, split: EvalSplit) -> bool {
    match split {
        EvalSplit::All => true,
        EvalSplit::Base => splits.get(&class) == Some(&Split::Base),
        EvalSplit::Novel => splits.get(&class) == Some(&Split::Novel),
    }
}

/// Aggregates per-video outcomes; `terms[v][i]` belongs to `outcomes[v].tpl[i]`.
pub(crate) fn aggregate(
    outcomes: &[VideoOutcome],
    terms: &[Vec<AssocTerms>],
    splits: &HashMap<i64, Split>,
    has_gt: impl Fn(EvalSplit) -> bool,
) -> TetaReport {
    let section = |split: EvalSplit| -> Option<TetaScores> {
        if !has_gt(split) {
            return None;
        }
        let (mut tpl, mut fpl, mut fnl, mut tpc) = (0, 0, 0, 0);
        let mut kept = Vec::new();
        for (o, t) in outcomes.iter().zip(terms) {
            for (&(_, _, pc, gc), &term) in o.tpl.iter().zip(t) {
                if in_split(splits, gc, split) {
                    tpl += 1;
                    tpc += (pc == gc) as usize;
                    kept.push(term);
                }
            }
            fpl += o.fpl.iter().filter(|&&(_, pc)| in_split(splits, pc, split)).count();
            fnl += o.fnl.iter().filter(|&&(_, gc)| in_split(splits, gc, split)).count();
        }
        Some(TetaScores::from_counts(tpl, fpl, fnl, tpc, kept))
    };
    TetaReport { all: section(EvalSplit::All), base: section(EvalSplit::Base), novel: section(EvalSplit::Novel) }
}

pub(crate) fn gt_split_presence<T>(gt: &[Annotation<T>], splits: &HashMap<i64, Split>) -> impl Fn(EvalSplit) -> bool {
    let all = !gt.is_empty();
    let base = gt.iter().any(|a| splits.get(&a.class_id) == Some(&Split::Base));
    let novel = gt.iter().any(|a| splits.get(&a.class_id) == Some(&Split::Novel));
    move |s| match s {
        EvalSplit::All => all,
        EvalSplit::Base => base,
        EvalSplit::Novel => novel,
    }
}

fn video_terms(o: &VideoOutcome, mode: AssocCounts) -> Vec<AssocTerms> {
    let mut pair: HashMap<(usize, usize), usize> = HashMap::new();
    let mut tpl_p: HashMap<usize, usize> = HashMap::new();
    let mut tpl_g: HashMap<usize, usize> = HashMap::new();
    for &(p, g, _, _) in &o.tpl {
        *pair.entry((p, g)).or_default() += 1;
        *tpl_p.entry(p).or_default() += 1;
        *tpl_g.entry(g).or_default() += 1;
    }
    let mut fpl_p: HashMap<usize, usize> = HashMap::new();
    let mut fnl_g: HashMap<usize, usize> = HashMap::new();
    if mode == AssocCounts::HotaStyle {
        for &(p, _) in &o.fpl {
            *fpl_p.entry(p).or_default() += 1;
        }
        for &(g, _) in &o.fnl {
            *fnl_g.entry(g).or_default() += 1;
        }
    }
    o.tpl
        .iter()
        .map(|&(p, g, _, _)| {
            let tpa = pair[&(p, g)];
            AssocTerms {
                tpa,
                fpa: tpl_p[&p] - tpa + fpl_p.get(&p).copied().unwrap_or(0),
                fna: tpl_g[&g] - tpa + fnl_g.get(&g).copied().unwrap_or(0),
            }
        })
        .collect()
}

/// Computes TETA over all classes and per base/novel split.
///
/// Localization matching is class-agnostic and optimal per frame. Base and
/// novel sections keep true positives and misses by ground-truth class and
/// false positives by predicted class; association terms always come from
/// the full matching.
pub fn teta<T: Scalar>(
    tracks: &[Track<T>],
    gt: &[Annotation<T>],
    vocab: &ClassVocabulary<T>,
    cfg: &TetaConfig,
) -> Result<TetaReport> {
    cfg.validate()?;
    let prep = prepare(tracks, gt, vocab)?;
    let outcomes: Vec<VideoOutcome> =
        prep.videos.par_iter().map(|(_, frames)| match_video(frames, cfg.loc_iou_thr)).collect();
    let terms: Vec<Vec<AssocTerms>> = outcomes.iter().map(|o| video_terms(o, cfg.assoc_counts)).collect();
    Ok(aggregate(&outcomes, &terms, &prep.splits, gt_split_presence(gt, &prep.splits)))
}
