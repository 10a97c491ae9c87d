use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowcorr::nce::write_pceb;
use flowcorr::tracker::{read_trajectories, write_trajectories};
use flowcorr::{StopReason, ThresholdParams, Trajectory, TrajectorySet};
use tempfile::TempDir;

fn flowcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcorr"))
        .args(args)
        .env_remove("PICO_THREADS")
        .output()
        .expect("run flowcorr")
}

fn ok(args: &[&str]) -> String {
    let out = flowcorr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    flowcorr(args).status.code().unwrap()
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(TempDir::new().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, body: &str) -> String {
        fs::write(self.path(name), body).unwrap();
        self.s(name)
    }
}

fn spans_file(dir: &Dir, name: &str, num_frames: u32, spans: &[(u32, u32)]) -> String {
    let set = TrajectorySet {
        video_id: name.into(),
        width: 16,
        height: 16,
        num_frames,
        seed: 0,
        params: ThresholdParams::default(),
        trajectories: spans
            .iter()
            .map(|&(s, e)| Trajectory {
                start_frame: s,
                points: vec![[3.0, 4.0]; (e - s + 1) as usize],
                residuals: None,
                stop_reason: StopReason::EndOfVideo,
            })
            .collect(),
    };
    let mut bytes = Vec::new();
    write_trajectories(&set, &mut bytes).unwrap();
    fs::write(dir.path(name), bytes).unwrap();
    dir.s(name)
}

fn synth(dir: &Dir, name: &str, scene: &str) -> String {
    let spec = dir.write(&format!("{name}.json"), scene);
    let out = dir.s(&format!("{name}.pcfl"));
    ok(&["synth", "--scene", &spec, "--output", &out]);
    out
}

const ZERO: &str = r#"{"motion":{"type":"zero"},"size":[32,24],"frames":6}"#;
const DRIFT: &str = r#"{"motion":{"type":"constant","u":0.4,"v":-0.3},"size":[40,30],"frames":8,
    "backward":{"mode":"corrupted","region":{"x":10,"y":5,"w":12,"h":10},"vector":[1.5,0.5]}}"#;

fn read_set(path: &str) -> TrajectorySet {
    read_trajectories(fs::read(path).unwrap().as_slice()).unwrap()
}

fn f32_bytes(xs: &[f32]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.to_le_bytes()).collect()
}

#[test]
fn header_only_flow_round_trip() {
    let d = Dir::new();
    fs::write(d.path("empty.f32"), b"").unwrap();
    ok(&["encode-flow", "--input", &d.s("empty.f32"), "--output", &d.s("e.pcfl"), "--frames", "1", "--width", "3", "--height", "2"]);
    assert_eq!(fs::read(d.path("e.pcfl")).unwrap().len(), 20);
    ok(&["decode-flow", "--input", &d.s("e.pcfl"), "--output", &d.s("back.f32")]);
    assert!(fs::read(d.path("back.f32")).unwrap().is_empty());
}

#[test]
fn two_frame_flow_round_trip() {
    let d = Dir::new();
    let plane: Vec<f32> = (0..12).map(|i| i as f32 * 0.25 - 1.0).collect();
    let raw: Vec<f32> = [plane.clone(), plane.iter().map(|x| -x).collect(), plane.iter().map(|x| x * 2.0).collect(), vec![0.5; 12]].concat();
    fs::write(d.path("in.f32"), f32_bytes(&raw)).unwrap();
    let dims = ["--frames", "2", "--width", "4", "--height", "3"];
    ok(&[&["encode-flow", "--input", &d.s("in.f32"), "--output", &d.s("a.pcfl")][..], &dims].concat());
    ok(&["decode-flow", "--input", &d.s("a.pcfl"), "--output", &d.s("dec.f32")]);
    let dec = fs::read(d.path("dec.f32")).unwrap();
    assert_eq!(dec.len(), raw.len() * 4);
    for (i, (chunk, x)) in dec.chunks(4).zip(&raw).enumerate() {
        let y = f32::from_le_bytes(chunk.try_into().unwrap());
        let p = &raw[i / 12 * 12..][..12];
        let range = p.iter().copied().fold(f32::MIN, f32::max) - p.iter().copied().fold(f32::MAX, f32::min);
        assert!((x - y).abs() as f64 <= range as f64 / 510.0 + 1e-6);
    }
    ok(&[&["encode-flow", "--input", &d.s("dec.f32"), "--output", &d.s("b.pcfl")][..], &dims].concat());
    assert_eq!(fs::read(d.path("a.pcfl")).unwrap(), fs::read(d.path("b.pcfl")).unwrap());

    let mut bad = fs::read(d.path("a.pcfl")).unwrap();
    bad[0] = b'X';
    fs::write(d.path("bad.pcfl"), bad).unwrap();
    let out = flowcorr(&["decode-flow", "--input", &d.s("bad.pcfl"), "--output", &d.s("x.f32")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte 0"));
}

#[test]
fn track_defaults_and_determinism() {
    let d = Dir::new();
    let flow = synth(&d, "zero", ZERO);
    ok(&["track", "--flow", &flow, "--output", &d.s("a.pctr"), "--points", "50", "--seed", "3"]);
    ok(&["track", "--flow", &flow, "--output", &d.s("b.pctr"), "--points", "50", "--seed", "3", "--threads", "2"]);
    assert_eq!(fs::read(d.path("a.pctr")).unwrap(), fs::read(d.path("b.pctr")).unwrap());
    let set = read_set(&d.s("a.pctr"));
    assert_eq!(set.params, ThresholdParams { gamma: 0.0, delta: 4.0 });
    assert_eq!(set.video_id, "zero");
    assert_eq!(set.len(), 50);
    assert!(set.trajectories.iter().all(|t| t.end_frame() == 5 && t.stop_reason == StopReason::EndOfVideo));

    let stats: serde_json::Value = serde_json::from_str(&ok(&["stats", &d.s("a.pctr")])).unwrap();
    let hist: u64 = stats["span_histogram"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(hist, stats["count"].as_u64().unwrap());
}

#[test]
fn rethreshold_commands() {
    let d = Dir::new();
    let flow = synth(&d, "drift", DRIFT);
    ok(&["track", "--flow", &flow, "--output", &d.s("wide.pctr"), "--delta", "16", "--points", "300"]);
    ok(&["rethreshold", "--input", &d.s("wide.pctr"), "--output", &d.s("same.pctr"), "--gamma", "0", "--delta", "16"]);
    assert_eq!(fs::read(d.path("wide.pctr")).unwrap(), fs::read(d.path("same.pctr")).unwrap());

    ok(&["rethreshold", "--input", &d.s("wide.pctr"), "--output", &d.s("tight.pctr"), "--gamma", "0", "--delta", "1"]);
    let (wide, tight) = (read_set(&d.s("wide.pctr")), read_set(&d.s("tight.pctr")));
    assert!(wide.trajectories.iter().zip(&tight.trajectories).all(|(w, t)| t.len() <= w.len()));
    assert!(wide.trajectories.iter().zip(&tight.trajectories).any(|(w, t)| t.len() < w.len()));

    assert_eq!(code(&["rethreshold", "--input", &d.s("tight.pctr"), "--output", &d.s("x.pctr"), "--gamma", "0", "--delta", "4"]), 3);
    ok(&["track", "--flow", &flow, "--output", &d.s("bare.pctr"), "--no-residuals", "--points", "10"]);
    let out = flowcorr(&["rethreshold", "--input", &d.s("bare.pctr"), "--output", &d.s("x.pctr"), "--gamma", "0", "--delta", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("residuals"));

    ok(&["track", "--flow", &flow, "--output", &d.s("perm.pctr"), "--permissive-residuals", "--points", "300"]);
    let rows: serde_json::Value = serde_json::from_str(&ok(&["sweep", "--trajectories", &d.s("perm.pctr")])).unwrap();
    let spans: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["mean_span"].as_f64().unwrap()).collect();
    assert_eq!(spans.len(), 5);
    assert!(spans.windows(2).all(|w| w[0] <= w[1]), "{spans:?}");
}

#[test]
fn sample_commands() {
    let d = Dir::new();
    let f = spans_file(&d, "three", 6, &[(0, 5), (2, 5), (0, 3)]);
    let plan: serde_json::Value =
        serde_json::from_str(&ok(&["sample", "--trajectories", &f, "--anchor-frame", "2", "--n", "1"])).unwrap();
    assert_eq!(plan["frames"], serde_json::json!([5]));
    assert_eq!(plan["anchor"], 2);
    assert_eq!(plan["counts"], serde_json::json!({"0": 1, "5": 2}));
    let plan: serde_json::Value =
        serde_json::from_str(&ok(&["sample", "--trajectories", &f, "--anchor-frame", "2", "--n", "2"])).unwrap();
    assert_eq!(plan["frames"], serde_json::json!([5, 0]));

    let r = ["sample", "--trajectories", &f, "--mode", "random", "--n", "3", "--seed", "9"];
    let a = ok(&r);
    assert_eq!(a, ok(&r));
    let plan: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(plan["anchor"].is_null());
    assert_eq!(plan["frames"].as_array().unwrap().len(), 3);

    let empty = spans_file(&d, "empty", 4, &[]);
    let plan: serde_json::Value =
        serde_json::from_str(&ok(&["sample", "--trajectories", &empty, "--anchor-frame", "1", "--n", "2"])).unwrap();
    assert_eq!(plan["frames"], serde_json::json!([]));

    assert_eq!(code(&["sample", "--trajectories", &f, "--anchor-frame", "9"]), 3);
}

#[test]
fn pairs_budget_and_scale() {
    let d = Dir::new();
    let spans = vec![(0u32, 1u32); 70_000];
    let f = spans_file(&d, "big", 2, &spans);
    let out = ok(&["pairs", "--trajectories", &f, "--seed", "1"]);
    assert_eq!(out.lines().count(), 65536);
    assert_eq!(out, ok(&["pairs", "--trajectories", &f, "--seed", "1", "--threads", "3"]));
    let first: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    // Point (3, 4) at stride 4 -> row 1, col 0.
    assert_eq!(first["pa"], serde_json::json!([3.0, 4.0]));
    assert_eq!(first["ia"], serde_json::json!([1, 0]));

    let small = ok(&["pairs", "--trajectories", &f, "--budget", "10", "--scale", "2"]);
    assert_eq!(small.lines().count(), 10);
    let line: serde_json::Value = serde_json::from_str(small.lines().next().unwrap()).unwrap();
    assert_eq!(line["ib"], serde_json::json!([2, 1]));
}

#[test]
fn static_equals_tracked_on_zero_flow() {
    let d = Dir::new();
    let flow = synth(&d, "still", ZERO);
    ok(&["track", "--flow", &flow, "--output", &d.s("g.pctr"), "--seed-grid", "4"]);
    for seed in ["0", "1", "2", "5"] {
        let base = ["pairs", "--trajectories", &d.s("g.pctr"), "--seed", seed, "--n", "2"];
        let tracked = ok(&[&base[..], &["--correspondence", "tracked"]].concat());
        let fixed = ok(&[&base[..], &["--correspondence", "static", "--stride", "4"]].concat());
        assert!(!tracked.is_empty());
        assert_eq!(tracked, fixed);
    }
}

#[test]
fn pairs_with_views_and_config() {
    let d = Dir::new();
    let flow = synth(&d, "drift", DRIFT);
    ok(&["track", "--flow", &flow, "--output", &d.s("t.pctr"), "--points", "400"]);
    let views = d.write(
        "views.json",
        r#"{"a":{"crop":{"x0":0,"y0":0,"w":40,"h":30},"out_size":[80,60]},
            "b":{"crop":{"x0":5,"y0":5,"w":30,"h":20},"flip_h":true,"out_size":[30,20]}}"#,
    );
    let cfg = d.write("run.json", r#"{"seed": 4, "budget": 50, "sampling": "random"}"#);
    let out = ok(&["pairs", "--trajectories", &d.s("t.pctr"), "--views", &views, "--config", &cfg]);
    assert!(out.lines().count() <= 50 && out.lines().count() > 0);
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let pb = v["pb"].as_array().unwrap();
        assert!(pb[0].as_f64().unwrap() <= 29.0 && pb[1].as_f64().unwrap() <= 19.0);
    }
    let more = ok(&["pairs", "--trajectories", &d.s("t.pctr"), "--views", &views, "--config", &cfg, "--budget", "5"]);
    assert_eq!(more.lines().count(), 5);
    assert_eq!(code(&["pairs", "--trajectories", &d.s("t.pctr"), "--sampling", "sideways"]), 3);
    let bad = d.write("bad.json", r#"{"budgit": 5}"#);
    assert_eq!(code(&["pairs", "--trajectories", &d.s("t.pctr"), "--config", &bad]), 3);
}

fn pceb(dir: &Dir, name: &str, rows: &[&[f64]]) -> String {
    let t = ndarray::Array2::from_shape_vec((rows.len(), rows[0].len()), rows.concat()).unwrap();
    let mut bytes = Vec::new();
    write_pceb(&t, &mut bytes).unwrap();
    fs::write(dir.path(name), bytes).unwrap();
    dir.s(name)
}

#[test]
fn loss_and_gradcheck() {
    let d = Dir::new();
    // q, p, then 3 negatives, all mutually orthogonal: every logit is 0.
    let eye: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| f64::from(i == j)).collect()).collect();
    let rows: Vec<&[f64]> = eye.iter().map(|r| r.as_slice()).collect();
    let f = pceb(&d, "eq.pceb", &rows);
    let l: f64 = ok(&["loss", "--embeddings", &f, "--k", "4"]).trim().parse().unwrap();
    assert!((l - 4f64.ln()).abs() < 1e-12);

    let tau = 0.5;
    let c = tau * 3f64.ln();
    let f = pceb(&d, "k2.pceb", &[&[1.0, 0.0], &[c, (1.0 - c * c).sqrt()], &[0.0, 1.0]]);
    let l: f64 = ok(&["loss", "--embeddings", &f, "--k", "2", "--tau", "0.5"]).trim().parse().unwrap();
    assert!((l - (4.0f64 / 3.0).ln()).abs() < 1e-9);
    assert!((l - 0.287682).abs() < 1e-6);

    let g = ["gradcheck", "--embeddings", &f, "--k", "2", "--tau", "0.5"];
    let report: serde_json::Value = serde_json::from_str(&ok(&g)).unwrap();
    assert!(report["max_rel_err"].as_f64().unwrap() < 1e-5);
    assert_eq!(code(&[&g[..], &["--tolerance", "0"]].concat()), 4);
    assert_eq!(code(&["loss", "--embeddings", &f, "--k", "3"]), 3);
}

#[test]
fn error_exit_codes() {
    let d = Dir::new();
    assert_eq!(code(&["stats", "/nonexistent/x.pctr"]), 3);
    assert_eq!(code(&["track"]), 3);
    fs::write(d.path("junk.pctr"), b"PCTRjunk").unwrap();
    assert_eq!(code(&["stats", &d.s("junk.pctr")]), 2);
    fs::write(d.path("short.f32"), [0u8; 10]).unwrap();
    assert_eq!(
        code(&["encode-flow", "--input", &d.s("short.f32"), "--output", &d.s("o.pcfl"), "--frames", "2", "--width", "2", "--height", "2"]),
        2
    );
    let scene = d.write("s.json", r#"{"motion":{"type":"zero"},"size":[8,8],"frames":1}"#);
    assert_eq!(code(&["synth", "--scene", &scene, "--output", &d.s("o.pcfl")]), 3);
    assert!(Path::new(&d.s("s.json")).exists());
}
