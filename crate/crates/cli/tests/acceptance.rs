//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use ovmot::assoc::{bisoftmax_scores, track_video, AssociationConfig, Frame};
use ovmot::classify::{class_affinities, classify, ClassVocabulary, ClassifierConfig, Split, VocabClass};
use ovmot::eval::{brute_force_teta, teta, tiny_instance, TetaConfig, TetaReport};
use ovmot::geometry::BoundingBox;
use ovmot::gradcheck::{gradcheck_sweep, GradLoss};
use ovmot::halluc::{
    forward_noise_step, forward_noise_to, masked_denoise_traced, reverse_step, ForegroundMask, HallucConfig, LatentGrid,
    NoiseSchedule, Phase, ToyDenoiser,
};
use ovmot::io::{
    read_detections, read_gt, read_tracks, read_vocab, write_detections, write_gt, write_tracks, write_vocab, Category,
    DetectionEntry, DetectionRecord, GroundTruthFile, GtEntry, TrackRecord, VocabEntry, VocabularyFile,
};
use ovmot::model::{Annotation, Detection, Track, TrackState};
use ovmot::sim::{run_end_to_end, Occlusion, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        if let Ok(v) = ovmot::vector::normalized(&gaussian(rng, n)) {
            return v;
        }
    }
}

// ---------------------------------------------------------------- criterion 1

fn eval_vocab() -> ClassVocabulary<f64> {
    ClassVocabulary::new(
        vec![
            VocabClass { id: 1, name: "cat".into(), embed: vec![1.0, 0.0, 0.0], split: Split::Base },
            VocabClass { id: 2, name: "yak".into(), embed: vec![0.0, 1.0, 0.0], split: Split::Novel },
        ],
        vec![0.0, 0.0, 1.0],
    )
    .unwrap()
}

fn bx(x: f64) -> BoundingBox<f64> {
    BoundingBox::new(x, 5.0, 10.0, 10.0).unwrap()
}

fn pred(id: u64, states: &[(u64, f64)], class_id: i64) -> Track<f64> {
    let mut t = Track::new(id, "v");
    for &(f, x) in states {
        t.states.insert(f, TrackState { bbox: bx(x), score: 0.9, class_id });
    }
    t.class_id = class_id;
    t.last_seen = states.last().map_or(0, |s| s.0);
    t.confidence = t.mean_score();
    t
}

fn two_objects() -> Vec<Annotation<f64>> {
    [(1, 0, 5.0), (2, 0, 55.0), (1, 1, 7.0), (2, 1, 57.0)]
        .iter()
        .map(|&(track_id, frame, x)| Annotation { track_id, video: "v".into(), frame, bbox: bx(x), class_id: 1 })
        .collect()
}

fn both(tracks: &[Track<f64>], gt: &[Annotation<f64>], vocab: &ClassVocabulary<f64>) -> Result<TetaReport, String> {
    let cfg = TetaConfig::default();
    let fast = teta(tracks, gt, vocab, &cfg).map_err(|e| e.to_string())?;
    let slow = brute_force_teta(tracks, gt, vocab, &cfg).map_err(|e| e.to_string())?;
    ensure(fast == slow, || format!("teta {fast:?} differs from brute force {slow:?}"))?;
    Ok(fast)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut seed = 0;
    while checked < 50 {
        let inst = tiny_instance(seed);
        seed += 1;
        if inst.gt.is_empty() {
            continue;
        }
        both(&inst.tracks, &inst.gt, &inst.vocab).map_err(|e| format!("seed {}: {e}", seed - 1))?;
        checked += 1;
    }
    let vocab = eval_vocab();
    let gt = two_objects();
    let perfect = vec![pred(10, &[(0, 5.0), (1, 7.0)], 1), pred(11, &[(0, 55.0), (1, 57.0)], 1)];
    let r = both(&perfect, &gt, &vocab)?.all.unwrap();
    ensure(r.teta == 1.0 && r.loc_a == 1.0 && r.assoc_a == 1.0 && r.cls_a == 1.0, || format!("perfect fixture {r:?}"))?;
    let r = both(&[], &gt, &vocab)?.all.unwrap();
    ensure(r.teta == 0.0, || format!("empty fixture TETA {}", r.teta))?;
    let swapped = vec![pred(10, &[(0, 5.0), (1, 57.0)], 1), pred(11, &[(0, 55.0), (1, 7.0)], 1)];
    let r = both(&swapped, &gt, &vocab)?.all.unwrap();
    ensure((r.assoc_a - 1.0 / 3.0).abs() < 1e-15, || format!("id-swap AssocA {}", r.assoc_a))?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("{checked} random instances and 3 fixtures agree exactly ({:.2?})", start.elapsed()))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = pipeline(dir.path(), &["--videos", "5", "--frames", "20", "--identities", "8", "--seed", "0"]);
    let took = start.elapsed();
    let all = &report["teta"]["all"];
    let map = &report["track_map"]["all"];
    let values = [
        ("LocA", all["loc_a"].as_f64()),
        ("AssocA", all["assoc_a"].as_f64()),
        ("ClsA", all["cls_a"].as_f64()),
        ("TETA", all["teta"].as_f64()),
        ("Track-mAP", map["map"].as_f64()),
    ];
    for (name, v) in values {
        let v = v.ok_or(format!("{name} missing from report"))?;
        ensure((v - 1.0).abs() <= 1e-9, || format!("{name} = {v}"))?;
    }
    ensure(took < Duration::from_secs(5), || format!("took {took:.2?}"))?;
    Ok(format!("LocA = AssocA = ClsA = TETA = Track-mAP = 1 ({took:.2?})"))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    for loss in [GradLoss::Track, GradLoss::Aux] {
        let r = gradcheck_sweep(loss, 2024, 100, 1e-4, 0.07).map_err(|e| e.to_string())?;
        ensure(r.max_rel_err < 1e-4, || format!("{loss:?} max relative error {}", r.max_rel_err))?;
        worst.push(format!("{loss:?} {:.1e}", r.max_rel_err));
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!("max relative error {} over 100 instances each ({:.2?})", worst.join(", "), start.elapsed()))
}

// ---------------------------------------------------------------- criterion 4

/// Two identities in separate lanes; the first vanishes for `gap` frames.
fn reid_fixture(gap: u64) -> Result<f64, String> {
    let vocab = ClassVocabulary::new(
        vec![VocabClass { id: 1, name: "cat".into(), embed: vec![1.0, 0.0, 0.0], split: Split::Base }],
        vec![0.0, 0.0, 1.0],
    )
    .unwrap();
    let lanes = [(50.0, vec![1.0, 0.0, 0.0, 0.0]), (200.0, vec![0.0, 1.0, 0.0, 0.0])];
    let frames_total = 5 + gap + 5;
    let mut frames = Vec::new();
    let mut gt = Vec::new();
    for f in 0..frames_total {
        let mut dets = Vec::new();
        for (i, (y, embed)) in lanes.iter().enumerate() {
            if i == 0 && (5..5 + gap).contains(&f) {
                continue;
            }
            let bbox = BoundingBox::new(40.0 + f as f64, *y, 20.0, 20.0).unwrap();
            dets.push(Detection::new("v", f, bbox, 0.9, embed, Some(&[1.0, 0.0, 0.0])).map_err(|e| e.to_string())?);
            gt.push(Annotation { track_id: i as u64, video: "v".into(), frame: f, bbox, class_id: 1 });
        }
        frames.push(Frame { index: f, detections: dets });
    }
    let tracks = track_video("v", &frames, &vocab, &ClassifierConfig::default(), &AssociationConfig::default())
        .map_err(|e| e.to_string())?;
    let r = teta(&tracks, &gt, &vocab, &TetaConfig::default()).map_err(|e| e.to_string())?;
    Ok(r.all.unwrap().assoc_a)
}

fn simulated_reid(length: u64) -> Result<f64, String> {
    let cfg = ScenarioConfig {
        videos: 1,
        frames_per_video: 30,
        occlusion_windows: vec![Occlusion { identity: 2, start: 6, length }],
        seed: 5,
        ..ScenarioConfig::default()
    };
    let r = run_end_to_end(&cfg, &AssociationConfig::default(), &TetaConfig::default()).map_err(|e| e.to_string())?;
    Ok(r.teta.all.unwrap().assoc_a)
}

fn criterion_4() -> Outcome {
    let memory = AssociationConfig::<f64>::default().memory_frames as u64;
    let mut notes = Vec::new();
    for gap in [1, memory - 1, memory] {
        let a = reid_fixture(gap)?;
        ensure(a == 1.0, || format!("gap {gap}: AssocA {a}, expected 1"))?;
    }
    for gap in [memory + 1, memory + 5] {
        let a = reid_fixture(gap)?;
        ensure(a < 1.0, || format!("gap {gap}: AssocA {a}, expected < 1"))?;
        notes.push(format!("gap {gap} → {a:.3}"));
    }
    let kept = simulated_reid(memory)?;
    let split = simulated_reid(memory + 1)?;
    ensure(kept == 1.0, || format!("simulated gap {memory}: AssocA {kept}"))?;
    ensure(split < 1.0, || format!("simulated gap {}: AssocA {split}", memory + 1))?;
    Ok(format!("gaps ≤ {memory} keep AssocA 1; {}; simulated {split:.3}", notes.join(", ")))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut lowest = f64::INFINITY;
    for case in 0..1000 {
        let dim = rng.random_range(1..=16);
        let dets: Vec<Vec<f64>> = (0..rng.random_range(1..=8)).map(|_| unit(&mut rng, dim)).collect();
        let tracks: Vec<Vec<f64>> = (0..rng.random_range(1..=8)).map(|_| unit(&mut rng, dim)).collect();
        let s = bisoftmax_scores(&dets, &tracks).map_err(|e| e.to_string())?;
        for v in s.iter().flatten() {
            ensure(*v > 0.0 && *v <= 1.0, || format!("case {case}: score {v} outside (0, 1]"))?;
            lowest = lowest.min(*v);
        }
        let single = bisoftmax_scores(&dets[..1], &tracks[..1]).map_err(|e| e.to_string())?;
        ensure(single[0][0] == 1.0, || format!("case {case}: single pair scored {}", single[0][0]))?;
    }
    let s: Vec<Vec<f64>> = bisoftmax_scores(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0]]).map_err(|e| e.to_string())?;
    ensure((s[0][0] - 0.8655).abs() < 1e-4, || format!("fixture A {}", s[0][0]))?;
    ensure((s[0][1] - 0.6345).abs() < 1e-4, || format!("fixture B {}", s[0][1]))?;
    Ok(format!("1000 sets in (0, 1] (min {lowest:.2e}); single pair = 1; fixtures {:.4} / {:.4}", s[0][0], s[0][1]))
}

// ---------------------------------------------------------------- criterion 6

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let (w, h, c) = (12, 10, 3);
    let reference = LatentGrid::new(w, h, c, gaussian(&mut rng, w * h * c)).unwrap();
    let mask = ForegroundMask::new(w, h, (0..w * h).map(|_| rng.random_bool(0.4) as u8 as f64).collect()).unwrap();
    let target = LatentGrid::new(w, h, c, gaussian(&mut rng, w * h * c)).unwrap();
    let den = ToyDenoiser::new(target.clone());
    let mut masked_steps = 0;
    for deterministic in [true, false] {
        let cfg = HallucConfig { deterministic, seed: 6, ..HallucConfig::default() };
        let sched = cfg.schedule::<f64>().map_err(|e| e.to_string())?;
        let mut violation = None;
        masked_denoise_traced(&reference, &mask, &den, &sched, &cfg, &mut ChaCha8Rng::seed_from_u64(6), |r| {
            if r.phase != Phase::Masked {
                return;
            }
            masked_steps += 1;
            let fg = r.foreground.expect("masked phase carries the foreground branch");
            for (i, v) in r.output.values().iter().enumerate() {
                let cell = i / c;
                let expected = if mask.values()[cell] == 1.0 { fg.values()[i] } else { r.reverse.values()[i] };
                if v.to_bits() != expected.to_bits() && violation.is_none() {
                    violation = Some(format!("step {}: cell {cell} differs from its branch", r.k));
                }
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(v) = violation {
            return Err(v);
        }
    }
    ensure(masked_steps > 0, || "no masked steps ran".into())?;

    let sched = NoiseSchedule::linear_levels(0.75, 50).map_err(|e| e.to_string())?;
    let mut x = LatentGrid::new(w, h, c, gaussian(&mut rng, w * h * c)).unwrap();
    for k in (1..=50).rev() {
        x = reverse_step(&den, &x, k, &sched, None, true, &mut rng).map_err(|e| e.to_string())?;
    }
    let gap = x.max_abs_diff(&target);
    ensure(gap < 1e-3, || format!("reverse pass ends {gap:.2e} from target"))?;

    let draws = 10_000;
    let x0 = LatentGrid::filled(1, 1, 1, 1.5).unwrap();
    let mut worst: f64 = 0.0;
    for k in [1, 10, 50] {
        let (mut stepped, mut direct) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
        for _ in 0..draws {
            let mut y = x0.clone();
            for j in 1..=k {
                y = forward_noise_step(&y, j, &sched, &mut rng).map_err(|e| e.to_string())?;
            }
            stepped.push(y.values()[0]);
            direct.push(forward_noise_to(&x0, k, &sched, &mut rng).map_err(|e| e.to_string())?.values()[0]);
        }
        let ((m1, v1), (m2, v2)) = (mean_var(&stepped), mean_var(&direct));
        let n = draws as f64;
        let se_mean = (v1 / n + v2 / n).sqrt();
        let se_var = ((2.0 * v1 * v1 + 2.0 * v2 * v2) / (n - 1.0)).sqrt();
        let (zm, zv) = ((m1 - m2).abs() / se_mean, (v1 - v2).abs() / se_var);
        ensure(zm <= 3.0 && zv <= 3.0, || format!("k = {k}: mean gap {zm:.2} SE, variance gap {zv:.2} SE"))?;
        worst = worst.max(zm).max(zv);
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{masked_steps} masked steps bit-exact; reverse pass within {gap:.1e}; forward paths within {worst:.2} SE ({:.2?})",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let temps = [0.01, 0.07, 1.0];
    let mut worst_sum: f64 = 0.0;
    for case in 0..1000 {
        let dim = rng.random_range(2..=16);
        let n = rng.random_range(1..=12);
        let classes = (0..n)
            .map(|i| VocabClass {
                id: i as i64 + 1,
                name: format!("c{i}"),
                embed: gaussian(&mut rng, dim),
                split: if rng.random_bool(0.3) { Split::Novel } else { Split::Base },
            })
            .collect();
        let vocab = ClassVocabulary::new(classes, gaussian(&mut rng, dim)).map_err(|e| e.to_string())?;
        let query = gaussian(&mut rng, dim);
        let mut winners = Vec::new();
        for &temperature in &temps {
            let r = classify(&query, &vocab, &ClassifierConfig { temperature }).map_err(|e| e.to_string())?;
            let sum: f64 = r.probs.iter().sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
            ensure((sum - 1.0).abs() <= 1e-9, || format!("case {case}: probabilities sum to {sum} at λ = {temperature}"))?;
            let top = r.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ensure(r.confidence == top, || format!("case {case}: reported class is not the most probable at λ = {temperature}"))?;
            winners.push(r.class_id);
        }
        ensure(winners.windows(2).all(|p| p[0] == p[1]), || format!("case {case}: argmax changes with λ: {winners:?}"))?;
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<f64> = query.iter().map(|v| v * scale).collect();
        let (a, b) = (class_affinities(&query, &vocab).map_err(|e| e.to_string())?, class_affinities(&scaled, &vocab).map_err(|e| e.to_string())?);
        let drift = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure(drift <= 1e-12, || format!("case {case}: affinities move by {drift:e} under scaling by {scale}"))?;
        let ca = classify(&scaled, &vocab, &ClassifierConfig::default()).map_err(|e| e.to_string())?.class_id;
        ensure(ca == winners[0], || format!("case {case}: scaling changes the class"))?;
    }
    Ok(format!("1000 cases: max |Σp − 1| = {worst_sum:.1e}; argmax fixed over λ; affinities scale invariant"))
}

// ---------------------------------------------------------------- criterion 8

fn any_finite(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-1e6..1e6),
        1 => [0.0, -0.0, f64::MIN_POSITIVE, 5e-324, f64::MAX, f64::MIN, 0.1, 1.0 / 3.0][rng.random_range(0..8)],
        _ => loop {
            let v = f64::from_bits(rng.random());
            if v.is_finite() {
                break v;
            }
        },
    }
}

fn text(rng: &mut ChaCha8Rng) -> String {
    const CHARS: &[char] = &['a', 'Z', '0', ' ', '_', '-', '"', '\\', '/', 'é', '\u{1F600}', '\n', '\t'];
    (0..rng.random_range(0..10)).map(|_| CHARS[rng.random_range(0..CHARS.len())]).collect()
}

fn bbox4(rng: &mut ChaCha8Rng) -> [f64; 4] {
    [any_finite(rng), any_finite(rng), rng.random_range(1e-3..1e4), rng.random_range(1e-3..1e4)]
}

fn vec_of(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| any_finite(rng)).collect()
}

fn bits_equal<T: serde::Serialize>(a: &T, b: &T) -> bool {
    // PartialEq treats 0.0 and -0.0 as equal; serialized forms do not.
    serde_json::to_string(a).unwrap() == serde_json::to_string(b).unwrap()
}

fn round_trip<T, W, R>(value: &T, write: W, read: R) -> Result<(), String>
where
    T: PartialEq + std::fmt::Debug + serde::Serialize,
    W: Fn(&mut Vec<u8>, &T) -> ovmot::Result<()>,
    R: Fn(&[u8]) -> ovmot::Result<T>,
{
    let mut bytes = Vec::new();
    write(&mut bytes, value).map_err(|e| e.to_string())?;
    let back = read(&bytes).map_err(|e| e.to_string())?;
    ensure(&back == value && bits_equal(&back, value), || format!("{value:?} came back as {back:?}"))?;
    let mut again = Vec::new();
    write(&mut again, &back).map_err(|e| e.to_string())?;
    ensure(again == bytes, || "second write differs".into())
}

fn gen_detections(rng: &mut ChaCha8Rng) -> Vec<DetectionRecord> {
    let dim = rng.random_range(1..=6);
    let mut last = std::collections::HashMap::new();
    (0..rng.random_range(0..6))
        .map(|_| {
            let video = ["a", "b", "ü \"q\""][rng.random_range(0..3)].to_string();
            let frame = last.get(&video).map_or(0, |f| f + 1) + rng.random_range(0..3);
            last.insert(video.clone(), frame);
            let detections = (0..rng.random_range(0..4))
                .map(|_| DetectionEntry {
                    bbox: bbox4(rng),
                    score: rng.random(),
                    embed: vec_of(rng, dim),
                    text_embed: rng.random_bool(0.5).then(|| vec_of(rng, dim)),
                })
                .collect();
            DetectionRecord { video, frame, detections }
        })
        .collect()
}

fn gen_tracks(rng: &mut ChaCha8Rng) -> Vec<TrackRecord> {
    let mut seen = std::collections::HashSet::new();
    (0..rng.random_range(0..8))
        .map(|_| TrackRecord {
            video: text(rng),
            frame: rng.random(),
            track_id: rng.random(),
            bbox: bbox4(rng),
            score: rng.random(),
            category_id: rng.random(),
        })
        .filter(|r| seen.insert((r.video.clone(), r.frame, r.track_id)))
        .collect()
}

fn gen_vocab(rng: &mut ChaCha8Rng) -> VocabularyFile {
    let dim = rng.random_range(1..=6);
    VocabularyFile {
        background_embed: vec_of(rng, dim),
        classes: (0..rng.random_range(0..5))
            .map(|_| VocabEntry {
                id: rng.random(),
                name: text(rng),
                embed: vec_of(rng, dim),
                split: if rng.random_bool(0.5) { Split::Novel } else { Split::Base },
            })
            .collect(),
    }
}

fn gen_gt(rng: &mut ChaCha8Rng) -> GroundTruthFile {
    GroundTruthFile {
        annotations: (0..rng.random_range(0..6))
            .map(|_| GtEntry { track_id: rng.random(), video: text(rng), frame: rng.random(), bbox: bbox4(rng), category_id: rng.random() })
            .collect(),
        categories: (0..rng.random_range(0..4)).map(|_| Category { id: rng.random(), name: text(rng) }).collect(),
    }
}

fn cli_runs_identical(args: &[String], outputs: &[&str], dirs: [&std::path::Path; 2]) -> Result<(), String> {
    let mut produced = Vec::new();
    for dir in dirs {
        let a: Vec<String> = args.iter().map(|s| s.replace("{out}", p(dir))).collect();
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        let o = ovmot(&a);
        ensure(code(&o) == 0, || format!("{} failed: {}", args[0], stderr(&o)))?;
        produced.push(outputs.iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect::<Vec<_>>());
    }
    ensure(produced[0] == produced[1], || format!("{} output differs between identical runs", args[0]))
}

fn criterion_8() -> Outcome {
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = base.path();
    let o = ovmot(&["simulate", "--out-dir", p(input), "--seed", "8", "--embed-noise", "0.5", "--fp-rate", "0.2", "--fn-rate", "0.1", "--box-jitter", "2"]);
    ensure(code(&o) == 0, || stderr(&o))?;
    let grid = LatentGrid::new(16, 12, 3, (0..16 * 12 * 3).map(|i| ((i as f64) * 0.41).sin()).collect()).unwrap();
    ovmot::io::write_grid(&input.join("in.ovtg"), &grid, ovmot::io::GridFormat::Ovtg).map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let dirs = [a.path(), b.path()];
    let inp = |f: &str| p(&input.join(f)).to_string();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    cli_runs_identical(&s(&["simulate", "--out-dir", "{out}", "--seed", "8", "--embed-noise", "0.7", "--fp-rate", "0.3"]), &["detections.jsonl", "gt.json", "vocab.json"], dirs)?;
    let track = ["track".into(), "--detections".into(), inp("detections.jsonl"), "--vocab".into(), inp("vocab.json"), "--out".into(), "{out}/t.jsonl".into()];
    cli_runs_identical(&track, &["t.jsonl"], dirs)?;
    let eval = [
        "eval".into(), "--tracks".into(), p(&a.path().join("t.jsonl")).to_string(), "--gt".into(), inp("gt.json"), "--vocab".into(), inp("vocab.json"),
        "--report".into(), "{out}/r.json".into(),
    ];
    cli_runs_identical(&eval, &["r.json"], dirs)?;
    let halluc = [
        "hallucinate".into(), "--input".into(), inp("in.ovtg"), "--box".into(), "8,6,6,4".into(), "--min-area".into(), "0".into(), "--seed".into(), "9".into(),
        "--random-transform".into(), "--out".into(), "{out}/h.ovtg".into(),
    ];
    cli_runs_identical(&halluc, &["h.ovtg"], dirs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for case in 0..500 {
        let tag = |e: String| format!("case {case}: {e}");
        round_trip(&gen_detections(&mut rng), |w, v| write_detections(w, v), |b| read_detections(b)).map_err(tag)?;
        round_trip(&gen_tracks(&mut rng), |w, v| write_tracks(w, v), |b| read_tracks(b)).map_err(tag)?;
        round_trip(&gen_vocab(&mut rng), |w, v| write_vocab(w, v), |b| read_vocab(b)).map_err(tag)?;
        round_trip(&gen_gt(&mut rng), |w, v| write_gt(w, v), |b| read_gt(b)).map_err(tag)?;
    }
    Ok("simulate/track/eval/hallucinate byte-identical; 500 round trips each for detections, tracks, vocabulary, ground truth".into())
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let sigmas = [0.0, 0.2, 0.5, 1.0];
    let mut means = Vec::new();
    for &embed_noise in &sigmas {
        let mut total = 0.0;
        for seed in 0..20 {
            let cfg = ScenarioConfig { embed_noise, seed, ..ScenarioConfig::default() };
            let r = run_end_to_end(&cfg, &AssociationConfig::default(), &TetaConfig::default()).map_err(|e| e.to_string())?;
            total += r.teta.all.unwrap().assoc_a;
        }
        means.push(total / 20.0);
    }
    let shown: Vec<String> = sigmas.iter().zip(&means).map(|(s, m)| format!("σ {s}: {m:.3}")).collect();
    ensure(means.windows(2).all(|p| p[1] <= p[0]), || format!("not non-increasing: {}", shown.join(", ")))?;
    Ok(format!("mean AssocA {} ({:.2?})", shown.join(", "), start.elapsed()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric oracle equivalence", criterion_1),
        ("perfect-pipeline fixed point", criterion_2),
        ("gradient verification", criterion_3),
        ("re-identification across occlusion", criterion_4),
        ("bi-softmax contract", criterion_5),
        ("hallucination loop", criterion_6),
        ("classification properties", criterion_7),
        ("determinism and round trip", criterion_8),
        ("noise monotonicity", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
