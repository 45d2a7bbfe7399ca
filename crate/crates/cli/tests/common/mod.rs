#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn ovmot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ovmot")).args(args).env_remove("OVTRACK_THREADS").output().expect("binary runs")
}

pub fn ovmot_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ovmot")).args(args).env(key, value).output().expect("binary runs")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("report exists")).expect("valid json")
}

/// Simulates, tracks and evaluates in `dir`; returns the eval report.
pub fn pipeline(dir: &Path, sim_args: &[&str]) -> serde_json::Value {
    let mut args = vec!["simulate", "--out-dir", p(dir)];
    args.extend_from_slice(sim_args);
    let o = ovmot(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (det, vocab, gt) = (dir.join("detections.jsonl"), dir.join("vocab.json"), dir.join("gt.json"));
    let tracks = dir.join("tracks.jsonl");
    let o = ovmot(&["track", "--detections", p(&det), "--vocab", p(&vocab), "--out", p(&tracks)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = dir.join("report.json");
    let o = ovmot(&["eval", "--tracks", p(&tracks), "--gt", p(&gt), "--vocab", p(&vocab), "--report", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    read_json(&report)
}

pub const VOCAB: &str = r#"{"background_embed":[0,0,1],"classes":[
 {"id":1,"name":"cat","embed":[1,0,0],"split":"base"},
 {"id":2,"name":"yak","embed":[0,1,0],"split":"novel"}]}"#;

/// Two objects over two frames; `swap` exchanges the track ids in frame 1.
pub fn id_swap_files(dir: &Path, swap: bool) {
    std::fs::write(dir.join("vocab.json"), VOCAB).unwrap();
    let gt = r#"{"annotations":[
 {"track_id":1,"video":"v","frame":0,"bbox":[5,5,10,10],"category_id":1},
 {"track_id":2,"video":"v","frame":0,"bbox":[55,5,10,10],"category_id":1},
 {"track_id":1,"video":"v","frame":1,"bbox":[7,5,10,10],"category_id":1},
 {"track_id":2,"video":"v","frame":1,"bbox":[57,5,10,10],"category_id":1}],
 "categories":[{"id":1,"name":"cat"},{"id":2,"name":"yak"}]}"#;
    std::fs::write(dir.join("gt.json"), gt).unwrap();
    let (a, b) = if swap { (57, 7) } else { (7, 57) };
    let tracks = format!(
        "{{\"video\":\"v\",\"frame\":0,\"track_id\":10,\"bbox\":[5,5,10,10],\"score\":0.9,\"category_id\":1}}\n\
         {{\"video\":\"v\",\"frame\":0,\"track_id\":11,\"bbox\":[55,5,10,10],\"score\":0.9,\"category_id\":1}}\n\
         {{\"video\":\"v\",\"frame\":1,\"track_id\":10,\"bbox\":[{a},5,10,10],\"score\":0.9,\"category_id\":1}}\n\
         {{\"video\":\"v\",\"frame\":1,\"track_id\":11,\"bbox\":[{b},5,10,10],\"score\":0.9,\"category_id\":1}}\n"
    );
    std::fs::write(dir.join("tracks.jsonl"), tracks).unwrap();
}
