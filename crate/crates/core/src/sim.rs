//! Synthetic scenarios with known ground truth, used as an end-to-end
//! oracle for tracking and evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::{track_videos, AssociationConfig, Frame};
use crate::classify::{ClassVocabulary, ClassifierConfig, Split, VocabClass};
use crate::error::{Error, Result};
use crate::eval::{teta, track_map_report, TetaConfig, TetaReport, TrackMapConfig, TrackMapReport};
use crate::geometry::BoundingBox;
use crate::model::{Annotation, Detection, Track};
use crate::vector::normalized;

/// Largest allowed |cos| between two identity latents or two class embeddings.
pub const MAX_ABS_COSINE: f64 = 0.3;
const REJECTION_ATTEMPTS: usize = 10_000;
const LANE_HEIGHT: f64 = 100.0;
const TEXT_NOISE: f64 = 0.01;

/// Identity `identity` is hidden for frames `start .. start + length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occlusion {
    pub identity: usize,
    pub start: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub videos: usize,
    pub frames_per_video: u64,
    pub identities_per_video: usize,
    pub embed_dim: usize,
    pub classes: usize,
    /// Share of classes marked novel, rounded.
    pub novel_fraction: f64,
    /// Total noise norm added to identity latents before normalizing.
    pub embed_noise: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
    /// Std-dev (px) of Gaussian jitter on box center and size.
    pub box_jitter: f64,
    /// Lower bound of clutter scores.
    pub clutter_min_score: f64,
    /// Applied in every video.
    pub occlusion_windows: Vec<Occlusion>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            videos: 5,
            frames_per_video: 20,
            identities_per_video: 8,
            embed_dim: 32,
            classes: 4,
            novel_fraction: 0.3,
            embed_noise: 0.0,
            fn_rate: 0.0,
            fp_rate: 0.0,
            box_jitter: 0.0,
            clutter_min_score: 1e-4,
            occlusion_windows: Vec::new(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.videos == 0 || self.frames_per_video == 0 || self.embed_dim == 0 || self.classes == 0 {
            return Err(Error::Config("videos, frames, embed_dim and classes must be positive".into()));
        }
        for (name, v) in [("fn_rate", self.fn_rate), ("fp_rate", self.fp_rate), ("novel_fraction", self.novel_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.embed_noise >= 0.0 && self.embed_noise.is_finite()) || !(self.box_jitter >= 0.0 && self.box_jitter.is_finite()) {
            return Err(Error::Config("embed_noise and box_jitter must be finite and non-negative".into()));
        }
        if !(self.clutter_min_score >= 0.0 && self.clutter_min_score < 1.0) {
            return Err(Error::Config("clutter_min_score must lie in [0, 1)".into()));
        }
        if let Some(o) = self.occlusion_windows.iter().find(|o| o.identity >= self.identities_per_video) {
            return Err(Error::Config(format!("occlusion names identity {} but only {} exist", o.identity, self.identities_per_video)));
        }
        Ok(())
    }

    fn novel_count(&self) -> usize {
        (self.classes as f64 * self.novel_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identity {
    pub video: String,
    pub track_id: u64,
    pub class_id: i64,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub gt_states: usize,
    pub occluded: usize,
    pub dropped: usize,
    pub clutter: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub ground_truth: Vec<Annotation<f64>>,
    /// Every frame of every video, empty frames included.
    pub detections: Vec<(String, Vec<Frame<f64>>)>,
    pub vocab: ClassVocabulary<f64>,
    pub identities: Vec<Identity>,
    pub stats: ScenarioStats,
}

fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect()
}

fn unit_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        if let Ok(v) = normalized(&gaussian_vec(rng, dim, 1.0)) {
            return v;
        }
    }
}

/// `n` random unit vectors with pairwise |cos| ≤ [`MAX_ABS_COSINE`].
pub fn near_orthogonal<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > REJECTION_ATTEMPTS * n.max(1) {
            return Err(Error::Config(format!(
                "cannot draw {n} vectors in dimension {dim} with pairwise |cos| <= {MAX_ABS_COSINE}"
            )));
        }
        let cand = unit_vec(rng, dim);
        if out.iter().all(|v| crate::vector::dot(v, &cand).abs() <= MAX_ABS_COSINE) {
            out.push(cand);
        }
    }
    Ok(out)
}

fn noisy_unit<R: Rng>(rng: &mut R, base: &[f64], total_sd: f64) -> Vec<f64> {
    if total_sd == 0.0 {
        return base.to_vec();
    }
    let per_dim = total_sd / (base.len() as f64).sqrt();
    let noise = gaussian_vec(rng, base.len(), per_dim);
    let v: Vec<f64> = base.iter().zip(&noise).map(|(b, n)| b + n).collect();
    normalized(&v).unwrap_or_else(|_| base.to_vec())
}

fn video_name(v: usize) -> String {
    format!("video{v:03}")
}

struct VideoDraw {
    annotations: Vec<Annotation<f64>>,
    frames: Vec<Frame<f64>>,
    identities: Vec<Identity>,
    stats: ScenarioStats,
}

fn generate_video(cfg: &ScenarioConfig, vocab: &ClassVocabulary<f64>, v: usize) -> Result<VideoDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(v as u64 + 1);
    let video = video_name(v);
    let latents = near_orthogonal(&mut rng, cfg.identities_per_video, cfg.embed_dim)?;
    let class_ids: Vec<i64> = vocab.classes().iter().map(|c| c.id).collect();
    struct Motion {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        vx: f64,
        vy: f64,
    }
    let mut identities = Vec::new();
    let mut motion = Vec::new();
    for (i, latent) in latents.into_iter().enumerate() {
        let class_id = class_ids[rng.random_range(0..class_ids.len())];
        let h = rng.random_range(40.0..90.0);
        motion.push(Motion {
            x: rng.random_range(50.0..500.0),
            y: LANE_HEIGHT * i as f64 + LANE_HEIGHT / 2.0,
            w: rng.random_range(30.0..80.0),
            h,
            vx: rng.random_range(-5.0..5.0),
            vy: rng.random_range(-0.2..0.2) * (LANE_HEIGHT - h) / cfg.frames_per_video as f64,
        });
        identities.push(Identity { video: video.clone(), track_id: i as u64, class_id, latent });
    }
    let mut stats = ScenarioStats::default();
    let mut annotations = Vec::new();
    let mut frames = Vec::new();
    let lanes = cfg.identities_per_video.max(1) as f64 * LANE_HEIGHT;
    for f in 0..cfg.frames_per_video {
        let mut dets = Vec::new();
        for (i, (id, m)) in identities.iter().zip(&motion).enumerate() {
            let hidden = cfg.occlusion_windows.iter().any(|o| o.identity == i && f >= o.start && f < o.start + o.length);
            if hidden {
                stats.occluded += 1;
                continue;
            }
            let t = f as f64;
            let bbox = BoundingBox::new(m.x + m.vx * t, m.y + m.vy * t, m.w, m.h)?;
            annotations.push(Annotation { track_id: id.track_id, video: video.clone(), frame: f, bbox, class_id: id.class_id });
            stats.gt_states += 1;
            if cfg.fn_rate > 0.0 && rng.random_bool(cfg.fn_rate) {
                stats.dropped += 1;
            } else {
                let observed = if cfg.box_jitter > 0.0 {
                    let mut j = || -> f64 { cfg.box_jitter * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) };
                    BoundingBox::new(bbox.x + j(), bbox.y + j(), (bbox.w + j()).max(1.0), (bbox.h + j()).max(1.0))?
                } else {
                    bbox
                };
                let appearance = noisy_unit(&mut rng, &id.latent, cfg.embed_noise);
                let class = vocab.get(id.class_id).expect("identity class comes from the vocabulary");
                let text = noisy_unit(&mut rng, &class.embed, TEXT_NOISE);
                let score = rng.random_range(0.5..1.0);
                dets.push(Detection::new(video.clone(), f, observed, score, &appearance, Some(&text))?);
            }
            if cfg.fp_rate > 0.0 && rng.random_bool(cfg.fp_rate) {
                stats.clutter += 1;
                let bbox = BoundingBox::new(
                    rng.random_range(0.0..600.0),
                    rng.random_range(0.0..lanes),
                    rng.random_range(30.0..90.0),
                    rng.random_range(30.0..90.0),
                )?;
                let appearance = unit_vec(&mut rng, cfg.embed_dim);
                let text = unit_vec(&mut rng, cfg.embed_dim);
                let score = rng.random_range(cfg.clutter_min_score..1.0);
                dets.push(Detection::new(video.clone(), f, bbox, score, &appearance, Some(&text))?);
            }
        }
        frames.push(Frame { index: f, detections: dets });
    }
    Ok(VideoDraw { annotations, frames, identities, stats })
}

/// Draws the vocabulary and every video. Identical configs give identical
/// scenarios regardless of thread count.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let embeds = near_orthogonal(&mut rng, cfg.classes + 1, cfg.embed_dim)?;
    let novel_from = cfg.classes - cfg.novel_count();
    let classes = embeds[1..]
        .iter()
        .enumerate()
        .map(|(i, e)| VocabClass {
            id: i as i64 + 1,
            name: format!("class{}", i + 1),
            embed: e.clone(),
            split: if i >= novel_from { Split::Novel } else { Split::Base },
        })
        .collect();
    let vocab = ClassVocabulary::new(classes, embeds[0].clone())?;
    let draws = (0..cfg.videos)
        .into_par_iter()
        .map(|v| generate_video(cfg, &vocab, v))
        .collect::<Result<Vec<_>>>()?;
    let mut scenario = Scenario {
        ground_truth: Vec::new(),
        detections: Vec::new(),
        vocab,
        identities: Vec::new(),
        stats: ScenarioStats::default(),
    };
    for (v, d) in draws.into_iter().enumerate() {
        scenario.ground_truth.extend(d.annotations);
        scenario.detections.push((video_name(v), d.frames));
        scenario.identities.extend(d.identities);
        scenario.stats.gt_states += d.stats.gt_states;
        scenario.stats.occluded += d.stats.occluded;
        scenario.stats.dropped += d.stats.dropped;
        scenario.stats.clutter += d.stats.clutter;
    }
    Ok(scenario)
}

#[derive(Debug, Clone)]
pub struct EndToEndReport {
    pub teta: TetaReport,
    pub track_map: TrackMapReport,
    pub tracks: Vec<Track<f64>>,
}

/// Generates a scenario, tracks it and scores the result against its own
/// ground truth.
pub fn run_end_to_end(
    cfg: &ScenarioConfig,
    assoc_cfg: &AssociationConfig<f64>,
    teta_cfg: &TetaConfig,
) -> Result<EndToEndReport> {
    let scenario = generate_scenario(cfg)?;
    let tracks = track_videos(&scenario.detections, &scenario.vocab, &ClassifierConfig::default(), assoc_cfg)?;
    let teta = teta(&tracks, &scenario.ground_truth, &scenario.vocab, teta_cfg)?;
    let track_map = track_map_report(&tracks, &scenario.ground_truth, &scenario.vocab, &TrackMapConfig::default())?;
    Ok(EndToEndReport { teta, track_map, tracks })
}
