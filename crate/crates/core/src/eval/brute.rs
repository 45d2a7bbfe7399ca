//! Exhaustive reference implementation of TETA for tiny instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::teta::{aggregate, gt_split_presence, prepare, AssocCounts, AssocTerms, FrameBoxes, TetaConfig, TetaReport, VideoOutcome};
use super::matching::TIE_TOLERANCE;
use crate::classify::{ClassVocabulary, Split, VocabClass};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{Annotation, Track, TrackState};
use crate::scalar::Scalar;

pub const MAX_TRACKS: usize = 4;
pub const MAX_FRAMES: usize = 6;

fn enumerate(frame: &FrameBoxes, thr: f64) -> Vec<Option<usize>> {
    let n = frame.preds.len();
    let m = frame.gts.len();
    let mut best: Option<(f64, Vec<Option<usize>>)> = None;
    let mut all = Vec::new();
    let mut cur = vec![None; n];
    let mut used = vec![false; m];
    fn walk(i: usize, f: &FrameBoxes, thr: f64, cur: &mut Vec<Option<usize>>, used: &mut Vec<bool>, total: f64, all: &mut Vec<(f64, Vec<Option<usize>>)>) {
        if i == f.preds.len() {
            all.push((total, cur.clone()));
            return;
        }
        for j in 0..f.gts.len() {
            let iou = f.preds[i].bbox.iou(&f.gts[j].bbox);
            if !used[j] && iou >= thr && iou > 0.0 {
                used[j] = true;
                cur[i] = Some(j);
                walk(i + 1, f, thr, cur, used, total + iou, all);
                used[j] = false;
            }
        }
        cur[i] = None;
        walk(i + 1, f, thr, cur, used, total, all);
    }
    walk(0, frame, thr, &mut cur, &mut used, 0.0, &mut all);
    let top = all.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    for (total, v) in all {
        if total < top - TIE_TOLERANCE {
            continue;
        }
        let key = |v: &[Option<usize>]| v.iter().map(|c| c.unwrap_or(usize::MAX)).collect::<Vec<_>>();
        if best.as_ref().is_none_or(|(_, b)| key(&v) < key(b)) {
            best = Some((total, v));
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// TETA by exhaustive per-frame matching enumeration and direct counting.
///
/// Refuses any video with more than [`MAX_TRACKS`] predicted or ground-truth
/// tracks or more than [`MAX_FRAMES`] frames.
pub fn brute_force_teta<T: Scalar>(
    tracks: &[Track<T>],
    gt: &[Annotation<T>],
    vocab: &ClassVocabulary<T>,
    cfg: &TetaConfig,
) -> Result<TetaReport> {
    cfg.validate()?;
    let prep = prepare(tracks, gt, vocab)?;
    let mut outcomes = Vec::new();
    let mut terms = Vec::new();
    for (v, (video, frames)) in prep.videos.iter().enumerate() {
        if prep.pred_tracks_per_video[v] > MAX_TRACKS || prep.gt_tracks_per_video[v] > MAX_TRACKS || frames.len() > MAX_FRAMES {
            return Err(Error::TooLarge(format!(
                "video {video:?} exceeds {MAX_TRACKS} tracks or {MAX_FRAMES} frames"
            )));
        }
        let mut o = VideoOutcome::default();
        for f in frames {
            let partners = enumerate(f, cfg.loc_iou_thr);
            for (i, p) in f.preds.iter().enumerate() {
                match partners[i] {
                    Some(j) => o.tpl.push((p.track, f.gts[j].track, p.class, f.gts[j].class)),
                    None => o.fpl.push((p.track, p.class)),
                }
            }
            for (j, g) in f.gts.iter().enumerate() {
                if !partners.contains(&Some(j)) {
                    o.fnl.push((g.track, g.class));
                }
            }
        }
        let hota = cfg.assoc_counts == AssocCounts::HotaStyle;
        let t: Vec<AssocTerms> = o
            .tpl
            .iter()
            .map(|&(p, g, _, _)| {
                let mut t = AssocTerms { tpa: 0, fpa: 0, fna: 0 };
                for &(p2, g2, _, _) in &o.tpl {
                    if p2 == p && g2 == g {
                        t.tpa += 1;
                    } else if p2 == p {
                        t.fpa += 1;
                    } else if g2 == g {
                        t.fna += 1;
                    }
                }
                if hota {
                    t.fpa += o.fpl.iter().filter(|f| f.0 == p).count();
                    t.fna += o.fnl.iter().filter(|f| f.0 == g).count();
                }
                t
            })
            .collect();
        outcomes.push(o);
        terms.push(t);
    }
    Ok(aggregate(&outcomes, &terms, &prep.splits, gt_split_presence(gt, &prep.splits)))
}

/// A small random evaluation instance.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub tracks: Vec<Track<f64>>,
    pub gt: Vec<Annotation<f64>>,
    pub vocab: ClassVocabulary<f64>,
}

/// Random instance within the brute-force limits: up to two videos, boxes on
/// a coarse lattice so that exact IoU ties occur, and random class labels
/// from a two-class vocabulary with one base and one novel class.
pub fn tiny_instance(seed: u64) -> TinyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ClassVocabulary::new(
        vec![
            VocabClass { id: 1, name: "base".into(), embed: vec![1.0, 0.0, 0.0], split: Split::Base },
            VocabClass { id: 2, name: "novel".into(), embed: vec![0.0, 1.0, 0.0], split: Split::Novel },
        ],
        vec![0.0, 0.0, 1.0],
    )
    .expect("fixed vocabulary is valid");
    let offsets = [0.0, 0.0, 1.0, 2.0, 5.0, 20.0];
    let mut tracks = Vec::new();
    let mut gt = Vec::new();
    let mut next_pred_id = 100;
    for v in 0..rng.random_range(1..=2) {
        let video = format!("v{v}");
        let frames = rng.random_range(1..=MAX_FRAMES) as u64;
        let n_gt = rng.random_range(0..=MAX_TRACKS);
        let n_pred = rng.random_range(0..=MAX_TRACKS);
        let anchors: Vec<(f64, f64)> =
            (0..3).map(|_| (rng.random_range(0..4) as f64 * 10.0, rng.random_range(0..2) as f64 * 10.0)).collect();
        let spot = |rng: &mut ChaCha8Rng| {
            let (ax, ay) = anchors[rng.random_range(0..anchors.len())];
            let dx = offsets[rng.random_range(0..offsets.len())];
            BoundingBox::new(ax + dx + 5.0, ay + 5.0, 10.0, 10.0).unwrap()
        };
        for g in 0..n_gt {
            let class = rng.random_range(1..=2);
            for f in 0..frames {
                if rng.random_bool(0.75) {
                    gt.push(Annotation { track_id: g as u64, video: video.clone(), frame: f, bbox: spot(&mut rng), class_id: class });
                }
            }
        }
        if !gt.iter().any(|a| a.video == video) {
            continue;
        }
        for _ in 0..n_pred {
            let mut t = Track::new(next_pred_id, video.clone());
            next_pred_id += 1;
            for f in 0..frames {
                if rng.random_bool(0.7) {
                    let state = TrackState { bbox: spot(&mut rng), score: rng.random_range(0.1..1.0), class_id: rng.random_range(1..=2) };
                    t.states.insert(f, state);
                }
            }
            if !t.states.is_empty() {
                t.last_seen = *t.states.keys().last().unwrap();
                tracks.push(t);
            }
        }
    }
    TinyInstance { tracks, gt, vocab }
}
