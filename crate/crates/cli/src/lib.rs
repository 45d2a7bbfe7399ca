//! Command-line workflows over the `ovmot` library.

pub mod args;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ovmot::assoc::{track_videos, AssociationConfig, MatchScore};
use ovmot::classify::ClassifierConfig;
use ovmot::eval::{self, AssocCounts, EvalSplit, TetaConfig, TrackMapConfig};
use ovmot::gradcheck::{gradcheck_sweep, GradLoss};
use ovmot::halluc::{
    build_positive_mask, geometric_transform, hallucinate, Affine2, ForegroundMask, HallucConfig, LatentGrid,
    PositiveRegion, ToyDenoiser,
};
use ovmot::io;
use ovmot::nms::NmsMode;
use ovmot::sim::{generate_scenario, Occlusion, ScenarioConfig};
use ovmot::{BoundingBox, Error};

use args::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SEMANTIC: i32 = 3;

/// A failed command: exit code plus message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DimensionMismatch { .. } | Error::UnknownClass(_) | Error::TooLarge(_) | Error::EmptyBatch => EXIT_SEMANTIC,
        _ => EXIT_INPUT,
    }
}

fn fail(context: &str) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| Failure { code: exit_code(&e), message: format!("{context}: {e}") }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_reader(open(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_vocab(path: &Path) -> Result<ovmot::ClassVocabulary, Failure> {
    let ctx = path.display().to_string();
    io::read_vocab(open(path)?).and_then(|f| f.to_vocab()).map_err(fail(&ctx))
}

/// Honors `OVTRACK_THREADS` by sizing the global worker pool.
pub fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("OVTRACK_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("OVTRACK_THREADS must be a positive integer, got {value:?}")))?;
    // A pool may already exist when called twice in one process; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` and runs the command. Human-readable output goes to `out`.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> Result<(), Failure>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
                return Ok(());
            }
            return Err(Failure { code: EXIT_INPUT, message: rendered.trim_end().trim_start_matches("error: ").to_string() });
        }
    };
    match cli.command {
        Command::Track(a) => cmd_track(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::Hallucinate(a) => cmd_hallucinate(&a, out),
    }
}

fn cmd_track(a: &TrackArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let vocab = load_vocab(&a.vocab)?;
    let det_ctx = a.detections.display().to_string();
    let records = io::read_detections(open(&a.detections)?).map_err(fail(&det_ctx))?;
    let videos = io::records_to_frames(&records, Some(vocab.dim())).map_err(fail(&det_ctx))?;
    let assoc = AssociationConfig {
        beta: a.beta,
        beta_obj: a.beta_obj,
        gamma: a.gamma,
        memory_frames: a.memory,
        cosine_gate: a.cosine_gate,
        nms_iou: a.nms,
        nms_mode: match a.nms_mode {
            NmsModeArg::Agnostic => NmsMode::ClassAgnostic,
            NmsModeArg::Class => NmsMode::ClassAware,
        },
        match_score: match a.match_score {
            MatchScoreArg::Mean => MatchScore::BiSoftmaxCosineMean,
            MatchScoreArg::Bisoftmax => MatchScore::BiSoftmax,
        },
    };
    assoc.validate().map_err(fail("configuration"))?;
    let cls = ClassifierConfig { temperature: a.temperature };
    cls.validate().map_err(fail("configuration"))?;
    let tracks = track_videos(&videos, &vocab, &cls, &assoc).map_err(fail(&det_ctx))?;
    let rows = io::tracks_to_records(&tracks);
    io::write_tracks(create(&a.out)?, &rows).map_err(fail(&a.out.display().to_string()))?;
    let _ = writeln!(out, "{} tracks, {} states -> {}", tracks.len(), rows.len(), a.out.display());
    Ok(())
}

fn split_of(arg: SplitArg) -> EvalSplit {
    match arg {
        SplitArg::All => EvalSplit::All,
        SplitArg::Base => EvalSplit::Base,
        SplitArg::Novel => EvalSplit::Novel,
    }
}

fn section<T: serde::Serialize>(v: Option<&T>) -> Value {
    v.map_or(Value::String("empty".into()), |s| serde_json::to_value(s).expect("scores serialize"))
}

fn teta_json(s: &eval::TetaScores) -> Value {
    let mut v = serde_json::to_value(s).expect("scores serialize");
    v["tpa"] = json!(s.tpa_total());
    v["fpa"] = json!(s.fpa_total());
    v["fna"] = json!(s.fna_total());
    v
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let vocab = load_vocab(&a.vocab)?;
    let gt_ctx = a.gt.display().to_string();
    let gt = io::read_gt(open(&a.gt)?).and_then(|f| f.to_annotations()).map_err(fail(&gt_ctx))?;
    let tr_ctx = a.tracks.display().to_string();
    let tracks = io::read_tracks(open(&a.tracks)?).and_then(|r| io::records_to_tracks(&r)).map_err(fail(&tr_ctx))?;
    let teta_cfg = TetaConfig {
        loc_iou_thr: a.loc_iou,
        assoc_counts: match a.assoc_counts {
            AssocCountsArg::HotaStyle => AssocCounts::HotaStyle,
            AssocCountsArg::TplOnly => AssocCounts::TplOnly,
        },
    };
    let map_cfg = TrackMapConfig { thresholds: a.map_thresholds.clone() };
    teta_cfg.validate().map_err(fail("configuration"))?;
    map_cfg.validate().map_err(fail("configuration"))?;
    let splits: Vec<EvalSplit> = a.split.map_or(EvalSplit::ALL.to_vec(), |s| vec![split_of(s)]);
    let want_teta = a.metric != MetricArg::Trackmap;
    let want_map = a.metric != MetricArg::Teta;
    let teta = if want_teta { Some(eval::teta(&tracks, &gt, &vocab, &teta_cfg).map_err(fail("evaluation"))?) } else { None };
    let map = if want_map {
        Some(eval::track_map_report(&tracks, &gt, &vocab, &map_cfg).map_err(fail("evaluation"))?)
    } else {
        None
    };

    let mut report = serde_json::Map::new();
    report.insert("config".into(), json!({ "teta": teta_cfg, "track_map": map_cfg }));
    if let Some(t) = &teta {
        let m: serde_json::Map<String, Value> = splits
            .iter()
            .map(|&s| (s.name().to_string(), t.get(s).map_or(Value::String("empty".into()), teta_json)))
            .collect();
        report.insert("teta".into(), Value::Object(m));
    }
    if let Some(r) = &map {
        let m: serde_json::Map<String, Value> = splits.iter().map(|&s| (s.name().to_string(), section(r.get(s)))).collect();
        report.insert("track_map".into(), Value::Object(m));
    }
    if let Some(path) = &a.report {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &Value::Object(report)).map_err(|e| Failure::input(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }

    let _ = writeln!(out, "{:<6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "split", "TETA", "LocA", "AssocA", "ClsA", "mAP50", "mAP75", "mAP");
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.4}", v));
    for s in splits {
        let t = teta.as_ref().and_then(|t| t.get(s));
        let m = map.as_ref().and_then(|m| m.get(s));
        if t.is_none() && m.is_none() {
            let _ = writeln!(out, "{:<6} empty", s.name());
            continue;
        }
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            s.name(),
            cell(t.map(|t| t.teta)),
            cell(t.map(|t| t.loc_a)),
            cell(t.map(|t| t.assoc_a)),
            cell(t.map(|t| t.cls_a)),
            cell(m.and_then(|m| m.map50)),
            cell(m.and_then(|m| m.map75)),
            cell(m.map(|m| m.map)),
        );
    }
    Ok(())
}

fn parse_occlusion(s: &str) -> Result<Occlusion, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::input(format!("occlusion {s:?} is not IDENTITY:START:LENGTH"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(Occlusion {
        identity: parts[0].trim().parse().map_err(|_| bad())?,
        start: parts[1].trim().parse().map_err(|_| bad())?,
        length: parts[2].trim().parse().map_err(|_| bad())?,
    })
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg: ScenarioConfig = match &a.config {
        Some(p) => read_json_config(p)?,
        None => ScenarioConfig::default(),
    };
    macro_rules! set {
        ($($field:ident = $arg:ident),*) => { $(if let Some(v) = a.$arg { cfg.$field = v; })* };
    }
    set!(seed = seed, videos = videos, frames_per_video = frames, identities_per_video = identities,
         embed_dim = embed_dim, classes = classes, novel_fraction = novel_fraction, embed_noise = embed_noise,
         fn_rate = fn_rate, fp_rate = fp_rate, box_jitter = box_jitter);
    if !a.occlusions.is_empty() {
        cfg.occlusion_windows = a.occlusions.iter().map(|s| parse_occlusion(s)).collect::<Result<_, _>>()?;
    }
    let scenario = generate_scenario(&cfg).map_err(|e| Failure::input(format!("scenario: {e}")))?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::input(format!("{}: {e}", a.out_dir.display())))?;
    let det_path = a.out_dir.join("detections.jsonl");
    let gt_path = a.out_dir.join("gt.json");
    let vocab_path = a.out_dir.join("vocab.json");
    io::write_detections(create(&det_path)?, &io::frames_to_records(&scenario.detections)).map_err(fail("detections"))?;
    io::write_gt(create(&gt_path)?, &io::GroundTruthFile::from_annotations(&scenario.ground_truth, &scenario.vocab))
        .map_err(fail("ground truth"))?;
    io::write_vocab(create(&vocab_path)?, &io::VocabularyFile::from_vocab(&scenario.vocab)).map_err(fail("vocabulary"))?;
    let s = scenario.stats;
    let _ = writeln!(
        out,
        "{} videos, {} gt states ({} dropped, {} occluded, {} clutter) -> {}",
        cfg.videos,
        s.gt_states,
        s.dropped,
        s.occluded,
        s.clutter,
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let loss = match a.loss {
        LossArg::Track => GradLoss::Track,
        LossArg::Aux => GradLoss::Aux,
    };
    if !(a.step > 0.0 && a.step.is_finite()) || !(a.temperature > 0.0 && a.temperature.is_finite()) {
        return Err(Failure::input("step and temperature must be positive"));
    }
    let report = gradcheck_sweep(loss, a.seed, a.instances, a.step, a.temperature).map_err(fail("gradcheck"))?;
    let passed = report.max_rel_err < a.tolerance;
    if let Some(path) = &a.report {
        let mut v = serde_json::to_value(&report).expect("report serializes");
        v["tolerance"] = json!(a.tolerance);
        v["passed"] = json!(passed);
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &v).map_err(|e| Failure::input(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    let _ = writeln!(
        out,
        "{:?} loss, {} instances: max_rel_err {:.3e}, mean_rel_err {:.3e} ({})",
        loss,
        report.instances,
        report.max_rel_err,
        report.mean_rel_err,
        if passed { "pass" } else { "FAIL" }
    );
    Ok(())
}

fn parse_box(s: &str) -> Result<BoundingBox, Failure> {
    let bad = || Failure::input(format!("box {s:?} is not CX,CY,W,H"));
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err(bad());
    }
    BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(fail("box"))
}

fn cmd_hallucinate(a: &HallucinateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg: HallucConfig = match &a.config {
        Some(p) => read_json_config(p)?,
        None => HallucConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { cfg.$field = v; })* };
    }
    set!(delta0, steps, eta, min_area, seed);
    cfg.deterministic |= a.deterministic;
    if a.caption.is_some() {
        cfg.caption = a.caption.clone();
    }
    cfg.validate().map_err(fail("configuration"))?;

    let in_ctx = a.input.display().to_string();
    let (mut grid, format) = io::read_grid::<f64>(&a.input).map_err(fail(&in_ctx))?;
    let mut mask: ForegroundMask<f64> = match &a.mask {
        Some(p) => io::read_mask(p).map_err(fail(&p.display().to_string()))?,
        None => {
            let regions = a.boxes.iter().map(|b| parse_box(b).map(PositiveRegion::Box)).collect::<Result<Vec<_>, _>>()?;
            build_positive_mask(&regions, grid.width(), grid.height(), cfg.min_area).map_err(fail("mask"))?
        }
    };
    if !mask.matches(&grid) {
        return Err(Failure {
            code: EXIT_SEMANTIC,
            message: format!(
                "mask is {}x{} but the grid is {}x{}",
                mask.width(),
                mask.height(),
                grid.width(),
                grid.height()
            ),
        });
    }
    if a.random_transform {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let warp = Affine2::random(grid.width(), grid.height(), &mut rng);
        (grid, mask) = geometric_transform(&grid, &mask, &warp).map_err(fail("transform"))?;
    }
    let target: LatentGrid<f64> = match &a.target {
        Some(p) => io::read_grid(p).map_err(fail(&p.display().to_string()))?.0,
        None => grid.clone(),
    };
    let result = hallucinate(&grid, &mask, &ToyDenoiser::new(target), &cfg).map_err(fail("hallucinate"))?;
    io::write_grid(&a.out, &result, format).map_err(fail(&a.out.display().to_string()))?;
    let _ = writeln!(
        out,
        "{}x{}x{} grid, {} masked cells, {} steps -> {}",
        result.width(),
        result.height(),
        result.channels(),
        mask.count_set(),
        cfg.steps,
        a.out.display()
    );
    Ok(())
}
