use std::path::Path;
use std::process::{Command, Output};

const SCENE: &str = "[scene]\nrandom = true\nduration = 1.0\nframe_rate = 10\n[camera]\nwidth = 32\nheight = 32\n";
// Drives at 1 m/s towards a wall 1.5 m ahead, so the last frames are within 1 s of impact.
const APPROACH: &str = "[scene]\nduration = 1.0\nframe_rate = 10\nroom_half_extents = 3, 3, 1.5\n\
[camera]\nwidth = 32\nheight = 32\nhfov_deg = 60\n\
[trajectory]\nwaypoints = 1.5, 0, 0; 2.8, 0, 0\nspeed = 1.0\nheight = 0.8\n";

fn evreflex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evreflex"))
        .args(args)
        .output()
        .expect("spawn evreflex")
}

fn ok(args: &[&str]) {
    let out = evreflex(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(dir: &Path, rel: &str) -> String {
    dir.join(rel).display().to_string()
}

fn simulate(dir: &Path, name: &str, seed: &str) {
    simulate_with(dir, name, seed, SCENE);
}

fn simulate_with(dir: &Path, name: &str, seed: &str, config: &str) {
    std::fs::write(dir.join("scene.cfg"), config).unwrap();
    ok(&["simulate", "--config", &p(dir, "scene.cfg"), "--out", &p(dir, name), "--seed", seed]);
}

fn count(dir: &Path, prefix: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(prefix))
        .count()
}

fn report_value(path: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('\t')))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
        .to_string()
}

#[test]
fn simulate_writes_one_file_per_frame_and_interval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "seq", "3");
    let frames = d.join("seq/frames");
    assert_eq!(count(&frames, "intensity_"), 10);
    assert_eq!(count(&frames, "depth_"), 10);
    assert_eq!(count(&frames, "class_"), 10);
    assert_eq!(count(&frames, "flow_fwd_"), 10);
    assert_eq!(count(&frames, "flow_bwd_"), 10);
    assert_eq!(count(&d.join("seq/events"), "events_"), 9);
    assert_eq!(count(&d.join("seq/tti_gt"), "tti_"), 9);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "a", "11");
    simulate(d, "b", "11");
    simulate(d, "c", "12");
    let outputs = |name: &str| {
        let m = evreflex::pipeline::RunManifest::read(&d.join(name).join("manifest.json")).unwrap();
        serde_json::to_string(&m.outputs).unwrap()
    };
    assert_eq!(outputs("a"), outputs("b"));
    assert_ne!(outputs("a"), outputs("c"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = evreflex(&["simulate", "--config", &p(dir.path(), "nope.cfg"), "--out", &p(dir.path(), "seq")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_sequence_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = evreflex(&["flow", "--in", &p(dir.path(), "nope"), "--out", &p(dir.path(), "flow")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate_with(d, "seq", "5", APPROACH);
    ok(&["tti", "--in", &p(d, "seq"), "--out", &p(d, "tti"), "--variant", "gt"]);
    std::fs::create_dir(d.join("flow")).unwrap();
    for k in 0..9 {
        std::fs::copy(
            d.join(format!("seq/frames/flow_fwd_{k:05}.evrf")),
            d.join(format!("flow/flow_{k:05}.evrf")),
        )
        .unwrap();
    }
    ok(&["eval", "--in", &p(d, "seq"), "--out", &p(d, "eval"), "--flow", &p(d, "flow"), "--tti", &p(d, "tti")]);
    let report = d.join("eval/report.tsv");
    assert_eq!(report_value(&report, "flow_aee").parse::<f64>().unwrap(), 0.0);
    assert_eq!(report_value(&report, "tti_mse").parse::<f64>().unwrap(), 0.0);
    assert_eq!(report_value(&report, "tti_overall_f1").parse::<f64>().unwrap(), 1.0);
}

#[test]
fn viz_renders_ppm_and_rejects_wrong_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "seq", "7");
    let depth = p(d, "seq/frames/depth_00000.evrf");
    ok(&["viz", "--in", &depth, "--kind", "depth", "--out", &p(d, "depth.ppm")]);
    let ppm = std::fs::read(d.join("depth.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n32 32\n255\n"));
    assert_eq!(ppm.len(), b"P6\n32 32\n255\n".len() + 32 * 32 * 3);
    assert!(d.join("depth.ppm.txt").exists());
    ok(&["viz", "--in", &p(d, "seq/frames/flow_fwd_00000.evrf"), "--kind", "flow", "--out", &p(d, "flow.ppm")]);
    ok(&["viz", "--in", &p(d, "seq/events/events_00000.evrx"), "--kind", "events", "--out", &p(d, "ev.ppm")]);
    let wrong = evreflex(&["viz", "--in", &depth, "--kind", "tti", "--out", &p(d, "bad.ppm")]);
    assert_eq!(wrong.status.code(), Some(1));
}
