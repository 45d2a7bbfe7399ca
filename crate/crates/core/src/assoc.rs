//! Frame-by-frame appearance association with a bounded track memory and
//! temporal class voting.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use crate::classify::{classify, ClassVocabulary, ClassifierConfig};
use crate::error::{Error, Result};
use crate::model::{ClassVote, Detection, Track, TrackState, BACKGROUND_ID};
use crate::nms::{nms_indices, score_order, NmsMode};
use crate::scalar::Scalar;
use crate::vector::{check_dims, dot, norm};

/// How the per-pair matching score is formed from the two cues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchScore {
    /// Bi-softmax score alone.
    BiSoftmax,
    /// Mean of the bi-softmax score and the cosine similarity.
    #[default]
    BiSoftmaxCosineMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationConfig<T> {
    /// Matching-score threshold.
    pub beta: T,
    /// Minimum detection score for matching an existing track.
    pub beta_obj: T,
    /// Minimum detection score for starting a new track.
    pub gamma: T,
    /// Number of consecutive unobserved frames a track stays matchable.
    pub memory_frames: usize,
    /// Pairs at or below this cosine similarity never match.
    pub cosine_gate: T,
    pub nms_iou: T,
    pub nms_mode: NmsMode,
    pub match_score: MatchScore,
}

impl<T: Scalar> Default for AssociationConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(0.5),
            beta_obj: T::lit(0.3),
            gamma: T::lit(1e-4),
            memory_frames: 10,
            cosine_gate: T::lit(0.3),
            nms_iou: T::lit(0.5),
            nms_mode: NmsMode::ClassAgnostic,
            match_score: MatchScore::default(),
        }
    }
}

impl<T: Scalar> AssociationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("beta", self.beta)?;
        unit("beta_obj", self.beta_obj)?;
        unit("gamma", self.gamma)?;
        if !(self.cosine_gate >= -T::one() && self.cosine_gate <= T::one()) {
            return Err(Error::Config(format!("cosine_gate must lie in [-1, 1], got {}", self.cosine_gate)));
        }
        if !(self.nms_iou > T::zero() && self.nms_iou <= T::one()) {
            return Err(Error::Config(format!("nms_iou must lie in (0, 1], got {}", self.nms_iou)));
        }
        if self.memory_frames == 0 {
            return Err(Error::Config("memory_frames must be positive".into()));
        }
        Ok(())
    }
}

/// Cosine similarity of two non-zero vectors.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_dims(a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    if !(na > T::zero()) || !(nb > T::zero()) {
        return Err(Error::invalid("cosine of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).max(-T::one()).min(T::one()))
}

/// Bi-directional softmax matching scores, indexed `[track][detection]`.
///
/// `s(τ, r) = ½ [softmax over detections of q_r·q_τ + softmax over tracks of q_r·q_τ]`
/// on raw dot products. Either list being empty yields an empty matrix.
pub fn bisoftmax_scores<T, D, K>(dets: &[D], tracks: &[K]) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    D: AsRef<[T]>,
    K: AsRef<[T]>,
{
    if dets.is_empty() || tracks.is_empty() {
        return Ok(Vec::new());
    }
    let dim = dets[0].as_ref().len();
    for v in dets.iter().map(AsRef::as_ref).chain(tracks.iter().map(AsRef::as_ref)) {
        check_dims(dim, v.len())?;
    }
    let sims: Vec<Vec<T>> = tracks
        .iter()
        .map(|t| dets.iter().map(|d| dot(d.as_ref(), t.as_ref())).collect())
        .collect();

    // detections-over-track: normalize each row
    let row_part: Vec<Vec<T>> = sims
        .iter()
        .map(|row| {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
            let z: T = e.iter().copied().sum();
            e.into_iter().map(|v| v / z).collect()
        })
        .collect();

    // tracks-over-detection: normalize each column
    let half = T::lit(0.5);
    let mut out = row_part;
    for r in 0..dets.len() {
        let m = sims.iter().map(|row| row[r]).fold(T::neg_infinity(), T::max);
        let z: T = sims.iter().map(|row| (row[r] - m).exp()).sum();
        for (t, row) in sims.iter().enumerate() {
            let col = (row[r] - m).exp() / z;
            out[t][r] = half * (out[t][r] + col);
        }
    }
    Ok(out)
}

/// Frame-level class label attached to a detection before association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLabel<T> {
    pub class_id: i64,
    pub confidence: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionOutcome {
    Matched(u64),
    Created(u64),
    /// Removed by duplicate suppression.
    Suppressed,
    /// Neither matched nor confident enough to start a track.
    Discarded,
}

/// Per-detection outcomes for one frame, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameReport {
    pub frame: u64,
    pub outcomes: Vec<DetectionOutcome>,
}

/// Track set of a single video.
#[derive(Debug, Clone)]
pub struct TrackStore<T> {
    video: String,
    active: BTreeMap<u64, Track<T>>,
    retired: Vec<Track<T>>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl<T: Scalar> TrackStore<T> {
    pub fn new(video: impl Into<String>) -> Self {
        Self {
            video: video.into(),
            active: BTreeMap::new(),
            retired: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    pub fn video(&self) -> &str {
        &self.video
    }

    /// Tracks that can still be matched, keyed by id.
    pub fn active(&self) -> &BTreeMap<u64, Track<T>> {
        &self.active
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Associates one frame of detections. `labels` is either empty or holds
    /// one optional class label per detection.
    pub fn associate_frame(
        &mut self,
        frame: u64,
        dets: &[Detection<T>],
        labels: &[Option<FrameLabel<T>>],
        cfg: &AssociationConfig<T>,
    ) -> Result<FrameReport> {
        cfg.validate()?;
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { frame, last });
            }
        }
        if !labels.is_empty() && labels.len() != dets.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} detections",
                labels.len(),
                dets.len()
            )));
        }
        for d in dets {
            if d.frame != frame || d.video != self.video {
                return Err(Error::invalid(format!(
                    "detection from {}#{} passed to frame {}#{}",
                    d.video, d.frame, self.video, frame
                )));
            }
        }
        if let Some(first) = dets.first() {
            for d in dets {
                check_dims(first.appearance.len(), d.appearance.len())?;
            }
            if let Some(t) = self.active.values().next() {
                check_dims(t.latest_embedding().map_or(0, <[T]>::len), first.appearance.len())?;
            }
        }
        self.last_frame = Some(frame);
        self.retire_stale(frame, cfg.memory_frames);

        let label = |i: usize| labels.get(i).copied().flatten();
        let mut outcomes = vec![DetectionOutcome::Suppressed; dets.len()];

        let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
        let scores: Vec<_> = dets.iter().map(|d| d.score).collect();
        let classes: Vec<i64> = (0..dets.len())
            .map(|i| label(i).map_or(BACKGROUND_ID, |l| l.class_id))
            .collect();
        let kept = nms_indices(
            &boxes,
            &scores,
            cfg.nms_iou,
            (cfg.nms_mode == NmsMode::ClassAware).then_some(classes.as_slice()),
        );
        let kept_scores: Vec<T> = kept.iter().map(|&i| scores[i]).collect();
        let order: Vec<usize> = score_order(&kept_scores).into_iter().map(|k| kept[k]).collect();

        let track_ids: Vec<u64> = self.active.keys().copied().collect();
        let track_embeds: Vec<&[T]> = self
            .active
            .values()
            .map(|t| t.latest_embedding().expect("active tracks hold at least one embedding"))
            .collect();
        let det_embeds: Vec<&[T]> = order.iter().map(|&i| dets[i].appearance.as_slice()).collect();
        let bisoft = bisoftmax_scores(&det_embeds, &track_embeds)?;

        let mut consumed: HashSet<usize> = HashSet::new();
        let mut updates: Vec<(usize, u64)> = Vec::new();
        let mut creations: Vec<usize> = Vec::new();
        for (col, &di) in order.iter().enumerate() {
            let det = &dets[di];
            let mut best: Option<(usize, T, T)> = None;
            for (row, emb) in track_embeds.iter().enumerate() {
                if consumed.contains(&row) {
                    continue;
                }
                let cos = dot(&det.appearance, emb).max(-T::one()).min(T::one());
                let s = match cfg.match_score {
                    MatchScore::BiSoftmax => bisoft[row][col],
                    MatchScore::BiSoftmaxCosineMean => T::lit(0.5) * (bisoft[row][col] + cos),
                };
                if best.is_none_or(|(_, bs, _)| s > bs) {
                    best = Some((row, s, cos));
                }
            }
            match best {
                Some((row, s, cos)) if s > cfg.beta && cos > cfg.cosine_gate && det.score > cfg.beta_obj => {
                    consumed.insert(row);
                    updates.push((di, track_ids[row]));
                }
                _ if det.score > cfg.gamma => creations.push(di),
                _ => outcomes[di] = DetectionOutcome::Discarded,
            }
        }

        let observe = |track: &mut Track<T>, di: usize| {
            let det = &dets[di];
            let l = label(di);
            let state = TrackState {
                bbox: det.bbox,
                score: det.score,
                class_id: l.map_or(BACKGROUND_ID, |l| l.class_id),
            };
            let vote = l.map(|l| ClassVote { frame, class_id: l.class_id, confidence: l.confidence });
            track.observe(frame, state, det.appearance.clone(), vote, cfg.memory_frames)
        };
        for (di, id) in updates {
            let track = self.active.get_mut(&id).expect("matched track is active");
            observe(track, di)?;
            outcomes[di] = DetectionOutcome::Matched(id);
        }
        for di in creations {
            let id = self.next_id;
            self.next_id += 1;
            let mut track = Track::new(id, self.video.clone());
            observe(&mut track, di)?;
            self.active.insert(id, track);
            outcomes[di] = DetectionOutcome::Created(id);
        }
        Ok(FrameReport { frame, outcomes })
    }

    /// Moves tracks with more than `memory_frames` consecutive missed frames
    /// out of the matchable set.
    fn retire_stale(&mut self, frame: u64, memory_frames: usize) {
        let stale: Vec<u64> = self
            .active
            .iter()
            .filter(|(_, t)| frame.saturating_sub(t.last_seen + 1) > memory_frames as u64)
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            if let Some(t) = self.active.remove(&id) {
                self.retired.push(t);
            }
        }
    }

    /// All tracks ever created, ordered by id.
    pub fn into_tracks(self) -> Vec<Track<T>> {
        let mut all = self.retired;
        all.extend(self.active.into_values());
        all.sort_by_key(|t| t.id);
        all
    }
}

/// Majority class over the track's frame-level classifications.
///
/// Count ties go to the higher mean confidence, remaining ties to the lower
/// class id. The returned confidence is the mean per-frame score.
pub fn temporal_vote<T: Scalar>(track: &Track<T>) -> Result<(i64, T)> {
    if track.class_history.is_empty() {
        return Err(Error::invalid(format!("track {} has no class history", track.id)));
    }
    let mut tally: BTreeMap<i64, (usize, T)> = BTreeMap::new();
    for v in &track.class_history {
        let e = tally.entry(v.class_id).or_insert((0, T::zero()));
        e.0 += 1;
        e.1 = e.1 + v.confidence;
    }
    let mut best: Option<(i64, usize, T)> = None;
    for (&class, &(count, total)) in &tally {
        let mean = total / T::from_usize(count).unwrap();
        let better = match best {
            None => true,
            Some((_, bc, bm)) => count > bc || (count == bc && mean > bm),
        };
        if better {
            best = Some((class, count, mean));
        }
    }
    let (class, _, _) = best.expect("non-empty tally");
    Ok((class, track.mean_score()))
}

/// One frame of detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub index: u64,
    pub detections: Vec<Detection<T>>,
}

/// Classifies, associates and votes over a whole video.
pub fn track_video<T: Scalar>(
    video: &str,
    frames: &[Frame<T>],
    vocab: &ClassVocabulary<T>,
    cls_cfg: &ClassifierConfig<T>,
    assoc_cfg: &AssociationConfig<T>,
) -> Result<Vec<Track<T>>> {
    let mut store = TrackStore::new(video);
    for frame in frames {
        let labels = frame
            .detections
            .iter()
            .map(|d| {
                d.text_embed
                    .as_deref()
                    .map(|t| {
                        classify(t, vocab, cls_cfg)
                            .map(|c| FrameLabel { class_id: c.class_id, confidence: c.confidence })
                    })
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        store.associate_frame(frame.index, &frame.detections, &labels, assoc_cfg)?;
    }
    store
        .into_tracks()
        .into_iter()
        .filter(|t| !t.states.is_empty())
        .map(|mut t| {
            let (class, confidence) = if t.class_history.is_empty() {
                (BACKGROUND_ID, t.mean_score())
            } else {
                temporal_vote(&t)?
            };
            t.class_id = class;
            t.confidence = confidence;
            for s in t.states.values_mut() {
                s.class_id = class;
            }
            Ok(t)
        })
        .collect()
}

/// Runs [`track_video`] over independent videos in parallel. Output order
/// follows input order.
pub fn track_videos<T: Scalar>(
    videos: &[(String, Vec<Frame<T>>)],
    vocab: &ClassVocabulary<T>,
    cls_cfg: &ClassifierConfig<T>,
    assoc_cfg: &AssociationConfig<T>,
) -> Result<Vec<Track<T>>> {
    let per_video = videos
        .par_iter()
        .map(|(video, frames)| track_video(video, frames, vocab, cls_cfg, assoc_cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_video.into_iter().flatten().collect())
}
