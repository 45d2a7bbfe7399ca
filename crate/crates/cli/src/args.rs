use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ovmot", version, about = "Open-vocabulary multi-object tracking and evaluation")]
#[command(after_help = "Exit codes: 0 success, 2 input or parse error, 3 semantic error.\n\
OVTRACK_THREADS=<n> caps the worker pool.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Link per-frame detections into classified tracks.
    Track(TrackArgs),
    /// Score tracks against ground truth with TETA and Track-mAP.
    Eval(EvalArgs),
    /// Write a synthetic scenario (detections, ground truth, vocabulary).
    Simulate(SimulateArgs),
    /// Compare analytic loss gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the masked denoising loop on a latent grid with the toy denoiser.
    Hallucinate(HallucinateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NmsModeArg {
    Agnostic,
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchScoreArg {
    /// Mean of bi-softmax score and cosine similarity.
    Mean,
    /// Bi-softmax score alone.
    Bisoftmax,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Detection stream (JSON Lines, one frame per line).
    #[arg(long)]
    pub detections: PathBuf,
    /// Class vocabulary (JSON).
    #[arg(long)]
    pub vocab: PathBuf,
    /// Output track stream (JSON Lines, one state per line).
    #[arg(long)]
    pub out: PathBuf,
    /// Matching-score threshold for extending a track.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Minimum detection score for starting a new track.
    #[arg(long, default_value_t = 1e-4)]
    pub gamma: f64,
    /// Minimum detection score for extending an existing track.
    /// Design default; the method leaves it open.
    #[arg(long, default_value_t = 0.3)]
    pub beta_obj: f64,
    /// Frames a track may go unobserved and still be re-identified.
    #[arg(long, default_value_t = 10)]
    pub memory: usize,
    /// Pairs with cosine similarity at or below this never match.
    /// Design default; the method leaves it open.
    #[arg(long, default_value_t = 0.3)]
    pub cosine_gate: f64,
    /// IoU above which a lower-scored detection is suppressed.
    #[arg(long, default_value_t = 0.5)]
    pub nms: f64,
    #[arg(long, value_enum, default_value_t = NmsModeArg::Agnostic)]
    pub nms_mode: NmsModeArg,
    /// Per-pair matching score.
    #[arg(long, value_enum, default_value_t = MatchScoreArg::Mean)]
    pub match_score: MatchScoreArg,
    /// Softmax temperature (λ) of the vocabulary classifier.
    #[arg(long, default_value_t = 0.07)]
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Teta,
    Trackmap,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Base,
    Novel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AssocCountsArg {
    /// Unmatched boxes of both tracks count against association.
    HotaStyle,
    /// Only other true-positive localizations count.
    TplOnly,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Track stream (JSON Lines).
    #[arg(long)]
    pub tracks: PathBuf,
    /// Ground truth (JSON).
    #[arg(long)]
    pub gt: PathBuf,
    /// Class vocabulary (JSON).
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Both)]
    pub metric: MetricArg,
    /// Report a single class split; all three are reported when omitted.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// IoU needed for a localization match (α_loc).
    /// Design default; the metric formulas leave it open.
    #[arg(long, default_value_t = 0.5)]
    pub loc_iou: f64,
    #[arg(long, value_enum, default_value_t = AssocCountsArg::HotaStyle)]
    pub assoc_counts: AssocCountsArg,
    /// 3D IoU thresholds for Track-mAP, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.75])]
    pub map_thresholds: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory receiving detections.jsonl, gt.json and vocab.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Scenario configuration (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub videos: Option<usize>,
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub novel_fraction: Option<f64>,
    /// Total norm of the Gaussian noise added to identity embeddings.
    #[arg(long)]
    pub embed_noise: Option<f64>,
    #[arg(long)]
    pub fn_rate: Option<f64>,
    #[arg(long)]
    pub fp_rate: Option<f64>,
    /// Box jitter std-dev in pixels.
    #[arg(long)]
    pub box_jitter: Option<f64>,
    /// Hide an identity: IDENTITY:START:LENGTH (repeatable).
    #[arg(long = "occlusion", value_name = "ID:START:LEN")]
    pub occlusions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Track,
    Aux,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = LossArg::Track)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Contrastive temperature (τ_emb).
    /// Design default, mirroring the classifier temperature.
    #[arg(long, default_value_t = 0.07)]
    pub temperature: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HallucinateArgs {
    /// Reference grid (OVTG raw or PNG).
    #[arg(long)]
    pub input: PathBuf,
    /// Foreground mask (single-channel OVTG or PNG). Without it, --box
    /// regions form the mask; with neither the mask is empty.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Foreground box CX,CY,W,H in cells (repeatable); kept if its area
    /// exceeds --min-area.
    #[arg(long = "box", value_name = "CX,CY,W,H")]
    pub boxes: Vec<String>,
    /// Output grid, written in the input's format.
    #[arg(long)]
    pub out: PathBuf,
    /// Toy-denoiser target; defaults to the input.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Hallucination configuration (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub min_area: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reverse steps return the denoiser mean without sampling.
    #[arg(long)]
    pub deterministic: bool,
    /// Opaque conditioning text handed to the denoiser.
    #[arg(long)]
    pub caption: Option<String>,
    /// Apply a random affine warp (seeded) to grid and mask first.
    #[arg(long)]
    pub random_transform: bool,
}
