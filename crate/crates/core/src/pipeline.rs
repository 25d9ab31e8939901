//! Batch stages behind the `evreflex` binary.
//!
//! A simulated sequence directory looks like
//!
//! ```text
//! seq/
//!   config.cfg            explicit config the sequence was rendered from
//!   sequence.json         frame times, camera intrinsics, poses, ego velocity
//!   frames/intensity_00000.evrf  depth_*.evrf  class_*.evrf
//!   frames/flow_fwd_00000.evrf   flow_bwd_*.evrf
//!   events/events_00000.evrx     window [t_k, t_k+1)
//!   tti_gt/tti_00001.evrf        ground truth of frame k >= 1
//!   manifest.json
//! ```
//!
//! Inverse-TTI maps on disk hold NaN where the value is invalid. Every stage
//! writes its files atomically and finishes with a `manifest.json` that lists
//! the SHA-256 of each output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{
    aae_report, depth_baseline, ClassScores, FlowErrorAccumulator, MetricReport, Prf1Accumulator,
};
use crate::flow::{estimate_flow, FlowSolverConfig};
use crate::io::{
    decode_events, decode_flow, decode_map, dump_config, encode_events, encode_flow, encode_map,
    encode_ppm, parse_config, parse_config_seeded, write_atomic, FormatError,
};
use crate::policy::{evade, obstacle_motion_vector, EgoMotion, MotionUnits};
use crate::sim::simulate_sequence;
use crate::tti::{
    estimate_tti_dynamic, estimate_tti_static, threshold_collision, TtiMap,
};
use crate::types::{
    accumulate_events, event_mask, CameraModel, Event, EventMap, FloatMap, FlowField, Mask,
    Semantics,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SEQUENCE_FILE: &str = "sequence.json";
pub const CONFIG_FILE: &str = "config.cfg";
pub const REPORT_FILE: &str = "report.tsv";
pub const EVADE_FILE: &str = "evade.tsv";
pub const LOSS_FILE: &str = "loss.tsv";
/// Environment variable capping the worker pool size (0 or unset = all cores).
pub const THREADS_ENV: &str = "EVREFLEX_THREADS";

/// Sizes the global rayon pool from `EVREFLEX_THREADS`. Call once, early.
pub fn configure_threads() -> Result<()> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(s) if !s.trim().is_empty() => s.trim().parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got `{s}`"))
        })?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Provenance record written next to every stage's outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Option<String>,
    pub rng_seed: Option<u64>,
    pub inputs: Vec<String>,
    /// Output path relative to the output directory -> SHA-256 (hex).
    pub outputs: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, String>,
    /// Wall-clock seconds per stage.
    pub timings_s: BTreeMap<String, f64>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            ..Default::default()
        }
    }

    fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings_s.insert(stage.to_string(), start.elapsed().as_secs_f64());
        Ok(out)
    }

    fn record(&mut self, written: Vec<(String, String)>) {
        self.outputs.extend(written);
    }

    fn write_to(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("manifest encoding: {e}")))?;
        write_atomic(path, &json)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_input(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` under `root/rel` and returns `(rel, sha256)`.
fn put(root: &Path, rel: &str, bytes: &[u8]) -> Result<(String, String)> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    write_atomic(&path, bytes)?;
    Ok((rel.to_string(), sha256_hex(bytes)))
}

fn with_path<T>(path: &Path, r: std::result::Result<T, FormatError>) -> Result<T> {
    r.map_err(|source| Error::Malformed {
        path: path.to_path_buf(),
        source,
    })
}

fn load_map(path: &Path, semantics: Semantics) -> Result<FloatMap> {
    let map = with_path(path, decode_map(&read_input(path)?))?;
    if map.semantics != semantics {
        return with_path(
            path,
            Err(FormatError::WrongSemantics {
                expected: semantics.code(),
                found: map.semantics.code(),
            }),
        );
    }
    Ok(map)
}

fn load_flow(path: &Path) -> Result<FlowField> {
    with_path(path, decode_flow(&read_input(path)?))
}

fn frame_name(prefix: &str, k: usize, ext: &str) -> String {
    format!("{prefix}_{k:05}.{ext}")
}

/// Stores an inverse-TTI map with NaN at invalid pixels.
pub fn tti_to_map(tti: &TtiMap) -> FloatMap {
    let mut map = tti.map.clone();
    for (v, ok) in map.values.iter_mut().zip(&tti.valid.bits) {
        if !ok {
            *v = f32::NAN;
        }
    }
    map
}

/// Inverse of [`tti_to_map`]: non-finite values become invalid zeros.
pub fn tti_from_map(mut map: FloatMap, dt: f64) -> Result<TtiMap> {
    let valid = Mask {
        width: map.width,
        height: map.height,
        bits: map.values.iter().map(|v| v.is_finite()).collect(),
    };
    for v in map.values.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    let mut tti = TtiMap::from_values(map, dt)?;
    tti.valid = valid;
    Ok(tti)
}

/// Per-sequence metadata stored in `sequence.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub dt: f64,
    pub frame_times: Vec<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World pose per frame: x, y, z, yaw (rad).
    pub poses: Vec<[f64; 4]>,
    /// Camera-frame ego velocity per frame (m/s).
    pub ego_velocity: Vec<[f64; 3]>,
}

/// Read access to a simulated sequence directory.
#[derive(Debug, Clone)]
pub struct SequenceDir {
    pub root: PathBuf,
    pub meta: SequenceMeta,
}

impl SequenceDir {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(SEQUENCE_FILE);
        let meta: SequenceMeta = serde_json::from_slice(&read_input(&path)?)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        if meta.frame_times.len() != meta.frame_count
            || meta.poses.len() != meta.frame_count
            || meta.ego_velocity.len() != meta.frame_count
        {
            return Err(Error::InvalidArgument(format!(
                "{}: per-frame arrays disagree with frame_count",
                path.display()
            )));
        }
        Ok(SequenceDir {
            root: root.to_path_buf(),
            meta,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.meta.frame_count
    }

    pub fn dt(&self) -> f64 {
        self.meta.dt
    }

    pub fn camera(&self) -> Result<CameraModel> {
        let m = &self.meta;
        CameraModel::new(m.fx, m.fy, m.cx, m.cy, m.width, m.height)
    }

    fn frame_path(&self, prefix: &str, k: usize) -> PathBuf {
        self.root.join("frames").join(frame_name(prefix, k, "evrf"))
    }

    pub fn intensity(&self, k: usize) -> Result<FloatMap> {
        load_map(&self.frame_path("intensity", k), Semantics::Intensity)
    }

    pub fn depth(&self, k: usize) -> Result<FloatMap> {
        load_map(&self.frame_path("depth", k), Semantics::DepthM)
    }

    pub fn class_map(&self, k: usize) -> Result<FloatMap> {
        load_map(&self.frame_path("class", k), Semantics::ClassId)
    }

    pub fn flow_fwd(&self, k: usize) -> Result<FlowField> {
        load_flow(&self.frame_path("flow_fwd", k))
    }

    pub fn flow_bwd(&self, k: usize) -> Result<FlowField> {
        load_flow(&self.frame_path("flow_bwd", k))
    }

    /// Events of the window starting at frame `k`.
    pub fn events(&self, k: usize) -> Result<Vec<Event>> {
        let path = self.root.join("events").join(frame_name("events", k, "evrx"));
        let file = with_path(&path, decode_events(&read_input(&path)?))?;
        if (file.width as usize, file.height as usize) != (self.meta.width, self.meta.height) {
            return Err(Error::shape(
                (self.meta.width, self.meta.height),
                (file.width as usize, file.height as usize),
            ));
        }
        Ok(file.events)
    }

    pub fn event_map(&self, k: usize) -> Result<EventMap> {
        let window = (self.meta.frame_times[k], self.meta.frame_times[k + 1]);
        accumulate_events(&self.events(k)?, window, self.meta.width, self.meta.height)
    }

    /// Ground-truth inverse TTI of frame `k` (k >= 1).
    pub fn tti_gt(&self, k: usize) -> Result<TtiMap> {
        let path = self.root.join("tti_gt").join(frame_name("tti", k, "evrf"));
        tti_from_map(load_map(&path, Semantics::InvTtiS)?, self.dt())
    }

    pub fn ego(&self, k: usize) -> EgoMotion {
        let [x, y, z] = self.meta.ego_velocity[k];
        EgoMotion::new(x, y, z)
    }

    /// Solver settings stored with the sequence, or defaults when absent.
    pub fn solver_config(&self) -> Result<FlowSolverConfig> {
        let path = self.root.join(CONFIG_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(parse_config(&text)?.solver),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(FlowSolverConfig::default()),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

/// Lists frame indices of `prefix_NNNNN.ext` files in `dir`, ascending.
fn list_frames(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<usize>> {
    let entries = fs::read_dir(dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(dir.to_path_buf())
        } else {
            Error::io(dir, e)
        }
    })?;
    let mut ks = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(num) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('_'))
            .and_then(|r| r.strip_suffix(ext))
            .and_then(|r| r.strip_suffix('.'))
        {
            if let Ok(k) = num.parse() {
                ks.push(k);
            }
        }
    }
    ks.sort_unstable();
    Ok(ks)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Renders a sequence from a config file and writes it to `out`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("simulate");
    let text = String::from_utf8(read_input(&args.config)?).map_err(|_| {
        Error::InvalidArgument(format!("{}: config is not UTF-8", args.config.display()))
    })?;
    let cfg = parse_config_seeded(&text, args.seed)?;
    let dump = dump_config(&cfg);
    manifest.config = Some(dump.clone());
    manifest.rng_seed = Some(cfg.scene.rng_seed);
    manifest.inputs.push(args.config.display().to_string());

    let seq = manifest.time("render", || simulate_sequence(&cfg.scene))?;
    create_dir(&args.out)?;
    let root = args.out.as_path();
    let cam = cfg.scene.camera;
    let (w, h) = (cam.width as u32, cam.height as u32);

    let written = manifest.time("write", || {
        let mut files: Vec<(String, String)> = seq
            .frames
            .par_iter()
            .enumerate()
            .map(|(k, f)| {
                Ok(vec![
                    put(root, &format!("frames/{}", frame_name("intensity", k, "evrf")), &encode_map(&f.intensity))?,
                    put(root, &format!("frames/{}", frame_name("depth", k, "evrf")), &encode_map(&f.depth))?,
                    put(root, &format!("frames/{}", frame_name("class", k, "evrf")), &encode_map(&f.class_map))?,
                    put(root, &format!("frames/{}", frame_name("flow_fwd", k, "evrf")), &encode_flow(&f.flow_fwd))?,
                    put(root, &format!("frames/{}", frame_name("flow_bwd", k, "evrf")), &encode_flow(&f.flow_bwd))?,
                ])
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        for (k, evs) in seq.events.iter().enumerate() {
            let bytes = encode_events(evs, w, h)?;
            files.push(put(root, &format!("events/{}", frame_name("events", k, "evrx")), &bytes)?);
        }
        for (j, tti) in seq.tti_gt.iter().enumerate() {
            let bytes = encode_map(&tti_to_map(tti));
            files.push(put(root, &format!("tti_gt/{}", frame_name("tti", j + 1, "evrf")), &bytes)?);
        }
        let meta = SequenceMeta {
            width: cam.width,
            height: cam.height,
            frame_count: seq.frames.len(),
            dt: seq.dt(),
            frame_times: seq.frames.iter().map(|f| f.t).collect(),
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            poses: seq.frames.iter().map(|f| [f.pose.x, f.pose.y, f.pose.z, f.pose.yaw]).collect(),
            ego_velocity: seq.frames.iter().map(|f| f.ego_velocity).collect(),
        };
        let json = serde_json::to_vec_pretty(&meta)
            .map_err(|e| Error::InvalidArgument(format!("sequence metadata: {e}")))?;
        files.push(put(root, SEQUENCE_FILE, &json)?);
        files.push(put(root, CONFIG_FILE, dump.as_bytes())?);
        Ok(files)
    })?;
    manifest.record(written);
    manifest.param("frames", seq.frames.len());
    manifest.param("events", seq.events.iter().map(Vec::len).sum::<usize>());
    manifest.write_to(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct FlowArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Overrides the solver settings stored with the sequence.
    pub config: Option<PathBuf>,
}

/// Estimates flow for every consecutive frame pair; writes `flow_k.evrf` and
/// the final objective per frame in `loss.tsv`.
pub fn cmd_flow(args: &FlowArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("flow");
    let seq = SequenceDir::open(&args.input)?;
    let solver = match &args.config {
        Some(p) => {
            manifest.inputs.push(p.display().to_string());
            let text = String::from_utf8(read_input(p)?)
                .map_err(|_| Error::InvalidArgument(format!("{}: config is not UTF-8", p.display())))?;
            parse_config(&text)?.solver
        }
        None => seq.solver_config()?,
    };
    manifest.inputs.push(args.input.display().to_string());
    manifest.config = Some(dump_config(&crate::io::RunConfig {
        solver: solver.clone(),
        ..Default::default()
    }));
    create_dir(&args.out)?;
    let pairs = seq.frame_count().saturating_sub(1);
    let results = manifest.time("estimate", || {
        (0..pairs)
            .into_par_iter()
            .map(|k| {
                let em = seq.event_map(k)?;
                let est = estimate_flow(Some(&em), &seq.intensity(k)?, &seq.intensity(k + 1)?, &solver)?;
                let file = put(&args.out, &frame_name("flow", k, "evrf"), &encode_flow(&est.flow))?;
                Ok((file, est.loss))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut table = String::from("frame\tloss\n");
    let mut files = Vec::new();
    for (k, (file, loss)) in results.into_iter().enumerate() {
        table.push_str(&format!("{k}\t{loss:.9e}\n"));
        files.push(file);
    }
    files.push(put(&args.out, LOSS_FILE, table.as_bytes())?);
    manifest.record(files);
    manifest.param("frames", pairs);
    manifest.write_to(&args.out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtiVariant {
    Static,
    Dynamic,
    GroundTruth,
}

impl TtiVariant {
    pub fn name(self) -> &'static str {
        match self {
            TtiVariant::Static => "static",
            TtiVariant::Dynamic => "dynamic",
            TtiVariant::GroundTruth => "gt",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TtiArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub variant: TtiVariant,
    /// Directory of estimated flow; ground-truth forward flow when absent.
    pub flow: Option<PathBuf>,
}

fn flow_source(seq: &SequenceDir, dir: Option<&Path>, k: usize) -> Result<FlowField> {
    match dir {
        Some(d) => load_flow(&d.join(frame_name("flow", k, "evrf"))),
        None => seq.flow_fwd(k),
    }
}

/// Writes `tti_k.evrf` for every frame the chosen variant covers: frames
/// `0..n-1` for the estimators, `1..n` for ground truth.
pub fn cmd_tti(args: &TtiArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("tti");
    let seq = SequenceDir::open(&args.input)?;
    manifest.inputs.push(args.input.display().to_string());
    if let Some(f) = &args.flow {
        manifest.inputs.push(f.display().to_string());
    }
    manifest.param("variant", args.variant.name());
    create_dir(&args.out)?;
    let n = seq.frame_count();
    let frames: Vec<usize> = match args.variant {
        TtiVariant::GroundTruth => (1..n).collect(),
        _ => (0..n.saturating_sub(1)).collect(),
    };
    let dt = seq.dt();
    let flow_dir = args.flow.as_deref();
    let files = manifest.time("tti", || {
        frames
            .par_iter()
            .map(|&k| {
                let tti = match args.variant {
                    TtiVariant::GroundTruth => seq.tti_gt(k)?,
                    TtiVariant::Dynamic => estimate_tti_dynamic(
                        &flow_source(&seq, flow_dir, k)?,
                        &seq.depth(k)?,
                        &seq.depth(k + 1)?,
                        dt,
                    )?,
                    TtiVariant::Static => {
                        estimate_tti_static(&flow_source(&seq, flow_dir, k)?, &seq.depth(k)?, dt)?
                    }
                };
                put(&args.out, &frame_name("tti", k, "evrf"), &encode_map(&tti_to_map(&tti)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    manifest.record(files);
    manifest.param("frames", frames.len());
    manifest.write_to(&args.out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct EvadeArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Directory written by `cmd_tti`.
    pub tti: PathBuf,
    /// Directory of estimated flow; ground-truth forward flow when absent.
    pub flow: Option<PathBuf>,
    pub horizon: f64,
    /// Average over every valid pixel instead of the danger mask.
    pub all_pixels: bool,
    /// Keep `(u, v)` in px/frame instead of lifting them to m/s.
    pub pixel_units: bool,
}

fn danger_mask(tti: &TtiMap, horizon: f64, all_pixels: bool) -> Result<Mask> {
    if all_pixels {
        Ok(tti.valid.clone())
    } else {
        threshold_collision(tti, horizon)
    }
}

/// Motion vector and evasion direction per frame, written to `evade.tsv`.
pub fn cmd_evade(args: &EvadeArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("evade");
    let seq = SequenceDir::open(&args.input)?;
    manifest.inputs.push(args.input.display().to_string());
    manifest.inputs.push(args.tti.display().to_string());
    manifest.param("horizon", args.horizon);
    manifest.param("all_pixels", args.all_pixels);
    manifest.param("lifted", !args.pixel_units);
    let units = if args.pixel_units {
        MotionUnits::PixelsPerFrame
    } else {
        MotionUnits::Metric(seq.camera()?)
    };
    let frames = list_frames(&args.tti, "tti", "evrf")?;
    let rows = manifest.time("evade", || {
        frames
            .par_iter()
            .map(|&k| {
                let path = args.tti.join(frame_name("tti", k, "evrf"));
                let tti = tti_from_map(load_map(&path, Semantics::InvTtiS)?, seq.dt())?;
                let flow = flow_source(&seq, args.flow.as_deref(), k)?;
                let danger = danger_mask(&tti, args.horizon, args.all_pixels)?;
                let r = evade(&flow, &seq.depth(k)?, &tti, &danger, units, seq.ego(k))?;
                let (m, p) = (r.motion_vec, r.psi);
                Ok(format!(
                    "{k}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                    r.pixel_count, r.degenerate as u8, m.x, m.y, m.z, p.x, p.y, p.z
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    create_dir(&args.out)?;
    let mut table = String::from("frame\tpixels\tdegenerate\tm_x\tm_y\tm_z\tpsi_x\tpsi_y\tpsi_z\n");
    table.extend(rows);
    let file = put(&args.out, EVADE_FILE, table.as_bytes())?;
    manifest.record(vec![file]);
    manifest.write_to(&args.out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Estimated flow to score against ground-truth forward flow.
    pub flow: Option<PathBuf>,
    /// Estimated inverse TTI to score against the ground-truth stream.
    pub tti: Option<PathBuf>,
    pub events_only: bool,
    pub horizon: f64,
    pub depth_threshold: f64,
}

impl EvalArgs {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        EvalArgs {
            input: input.into(),
            out: out.into(),
            flow: None,
            tti: None,
            events_only: false,
            horizon: 1.0,
            depth_threshold: 0.5,
        }
    }
}

fn push_scores(report: &mut MetricReport, prefix: &str, scores: &ClassScores) {
    for (class, s) in &scores.per_class {
        report.push_f64(format!("{prefix}_class{class}_precision"), s.precision);
        report.push_f64(format!("{prefix}_class{class}_recall"), s.recall);
        report.push_f64(format!("{prefix}_class{class}_f1"), s.f1);
        report.push(format!("{prefix}_class{class}_support"), s.support());
    }
    let s = &scores.overall;
    report.push_f64(format!("{prefix}_overall_precision"), s.precision);
    report.push_f64(format!("{prefix}_overall_recall"), s.recall);
    report.push_f64(format!("{prefix}_overall_f1"), s.f1);
}

fn push_metric(report: &mut MetricReport, name: &str, value: Result<f64>) -> Result<()> {
    match value {
        Ok(v) => report.push_f64(name, v),
        Err(Error::UndefinedMetric(_)) => report.push(name, "undefined"),
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Scores estimated flow and/or inverse TTI against the sequence's ground
/// truth and writes `report.tsv`.
///
/// Frame `k` of an estimate is compared with ground truth of the same frame.
/// Danger masks threshold inverse TTI at `1 / horizon`; the depth baseline
/// flags valid depth below `depth_threshold`. Motion vectors use the lifted
/// (m/s) form: the ground-truth vector from ground-truth flow, depth and TTI
/// over the ground-truth mask, the estimate from the estimated flow (or
/// ground-truth flow without `flow`) and TTI over the predicted mask.
pub fn evaluate(args: &EvalArgs) -> Result<MetricReport> {
    if args.flow.is_none() && args.tti.is_none() {
        return Err(Error::InvalidArgument("eval needs --flow and/or --tti".into()));
    }
    let seq = SequenceDir::open(&args.input)?;
    let mut report = MetricReport::default();

    if let Some(dir) = &args.flow {
        let frames = list_frames(dir, "flow", "evrf")?;
        let mut acc = FlowErrorAccumulator::default();
        for &k in &frames {
            let pred = load_flow(&dir.join(frame_name("flow", k, "evrf")))?;
            let gt = seq.flow_fwd(k)?;
            let mask = if args.events_only {
                Some(event_mask(&seq.event_map(k)?))
            } else {
                None
            };
            acc.add(&pred, &gt, mask.as_ref())?;
        }
        report.push("flow_frames", frames.len());
        report.push("flow_events_only", args.events_only);
        match acc.finish() {
            Ok(e) => {
                report.push("flow_pixels", e.pixels);
                report.push_f64("flow_aee", e.aee);
                report.push_f64("flow_outlier_pct", e.outlier_pct);
            }
            Err(Error::UndefinedMetric(_)) => {
                report.push("flow_pixels", 0);
                report.push("flow_aee", "undefined");
                report.push("flow_outlier_pct", "undefined");
            }
            Err(e) => return Err(e),
        }
    }

    if let Some(dir) = &args.tti {
        let cam = seq.camera()?;
        let units = MotionUnits::Metric(cam);
        let frames: Vec<usize> = list_frames(dir, "tti", "evrf")?
            .into_iter()
            .filter(|&k| k >= 1 && k < seq.frame_count())
            .collect();
        let per_frame = frames
            .iter()
            .map(|&k| {
                let pred = tti_from_map(
                    load_map(&dir.join(frame_name("tti", k, "evrf")), Semantics::InvTtiS)?,
                    seq.dt(),
                )?;
                let gt = seq.tti_gt(k)?;
                let depth = seq.depth(k)?;
                let classes = seq.class_map(k)?;
                let pred_mask = threshold_collision(&pred, args.horizon)?;
                let gt_mask = threshold_collision(&gt, args.horizon)?;
                let base_mask = depth_baseline(&depth, args.depth_threshold)?;
                let gt_vec = obstacle_motion_vector(&seq.flow_fwd(k)?, &depth, &gt, &gt_mask, units)?;
                let est_flow = match &args.flow {
                    Some(d) => {
                        let p = d.join(frame_name("flow", k, "evrf"));
                        if p.exists() {
                            load_flow(&p)?
                        } else {
                            seq.flow_fwd(k)?
                        }
                    }
                    None => seq.flow_fwd(k)?,
                };
                let est_vec = obstacle_motion_vector(&est_flow, &depth, &pred, &pred_mask, units)?;
                Ok((pred, gt, classes, pred_mask, gt_mask, base_mask, est_vec, gt_vec))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut ours = Prf1Accumulator::with_classes(&[0, 1, 2]);
        let mut base = Prf1Accumulator::with_classes(&[0, 1, 2]);
        let mut pairs: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
        let (mut se, mut n) = (0.0f64, 0usize);
        for (pred, gt, classes, pm, gm, bm, est, truth) in &per_frame {
            ours.add(pm, gm, classes)?;
            base.add(bm, gm, classes)?;
            for i in 0..pred.valid.bits.len() {
                if pred.valid.bits[i] && gt.valid.bits[i] {
                    let e = pred.map.values[i] as f64 - gt.map.values[i] as f64;
                    se += e * e;
                    n += 1;
                }
            }
            if est.pixel_count > 0
                && truth.pixel_count > 0
                && est.vector.norm() > 0.0
                && truth.vector.norm() > 0.0
            {
                pairs.push((est.vector, truth.vector));
            }
        }
        report.push("tti_frames", per_frame.len());
        report.push_f64("horizon_s", args.horizon);
        report.push_f64("depth_threshold_m", args.depth_threshold);
        push_metric(
            &mut report,
            "tti_mse",
            if n == 0 {
                Err(Error::UndefinedMetric("no jointly valid pixels"))
            } else {
                Ok(se / n as f64)
            },
        )?;
        push_scores(&mut report, "tti", &ours.finish());
        push_scores(&mut report, "depth", &base.finish());
        report.push("aae_samples", pairs.len());
        match aae_report(&pairs) {
            Ok(r) => {
                report.push_f64("aae_deg", r.aae);
                match r.aae_top10 {
                    Some(v) => report.push_f64("aae_top10_deg", v),
                    None => report.push("aae_top10_deg", "undefined"),
                }
            }
            Err(Error::UndefinedMetric(_)) => {
                report.push("aae_deg", "undefined");
                report.push("aae_top10_deg", "undefined");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// [`evaluate`] plus `report.tsv` and the manifest.
pub fn cmd_eval(args: &EvalArgs) -> Result<(MetricReport, RunManifest)> {
    let mut manifest = RunManifest::new("eval");
    manifest.inputs.push(args.input.display().to_string());
    manifest.inputs.extend(args.flow.iter().chain(&args.tti).map(|p| p.display().to_string()));
    manifest.param("events_only", args.events_only);
    manifest.param("horizon", args.horizon);
    manifest.param("depth_threshold", args.depth_threshold);
    let report = manifest.time("eval", || evaluate(args))?;
    create_dir(&args.out)?;
    let file = put(&args.out, REPORT_FILE, report.render().as_bytes())?;
    manifest.record(vec![file]);
    manifest.write_to(&args.out.join(MANIFEST_FILE))?;
    Ok((report, manifest))
}

/// Flow estimation, dynamic inverse TTI from the estimated flow, evasion and
/// evaluation, each in a subdirectory of `work`.
pub fn run_pipeline(sequence: &Path, work: &Path, horizon: f64) -> Result<MetricReport> {
    let flow = work.join("flow");
    let tti = work.join("tti");
    cmd_flow(&FlowArgs {
        input: sequence.to_path_buf(),
        out: flow.clone(),
        config: None,
    })?;
    cmd_tti(&TtiArgs {
        input: sequence.to_path_buf(),
        out: tti.clone(),
        variant: TtiVariant::Dynamic,
        flow: Some(flow.clone()),
    })?;
    cmd_evade(&EvadeArgs {
        input: sequence.to_path_buf(),
        out: work.join("evade"),
        tti: tti.clone(),
        flow: Some(flow.clone()),
        horizon,
        all_pixels: false,
        pixel_units: false,
    })?;
    let args = EvalArgs {
        flow: Some(flow),
        tti: Some(tti),
        events_only: true,
        horizon,
        ..EvalArgs::new(sequence, work.join("eval"))
    };
    Ok(cmd_eval(&args)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VizKind {
    Flow,
    Tti,
    Events,
    Depth,
}

#[derive(Debug, Clone)]
pub struct VizArgs {
    pub input: PathBuf,
    pub kind: VizKind,
    pub out: PathBuf,
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Flow colour wheel: hue = direction, saturation = magnitude / max.
pub fn flow_to_rgb(flow: &FlowField) -> (Vec<[u8; 3]>, f32) {
    let max = flow.max_magnitude();
    let px = flow
        .u
        .iter()
        .zip(&flow.v)
        .map(|(&u, &v)| {
            let mag = (u as f64).hypot(v as f64);
            let sat = if max > 0.0 { (mag / max as f64).min(1.0) } else { 0.0 };
            hsv_to_rgb((v as f64).atan2(u as f64).to_degrees(), sat, 1.0)
        })
        .collect();
    (px, max)
}

/// Latest polarity per pixel: positive green, negative red, silent black.
pub fn events_to_rgb(events: &[Event], width: usize, height: usize) -> Vec<[u8; 3]> {
    let mut px = vec![[0u8; 3]; width * height];
    for e in events {
        px[e.y as usize * width + e.x as usize] = match e.polarity {
            crate::types::Polarity::Positive => [0, 255, 0],
            crate::types::Polarity::Negative => [255, 0, 0],
        };
    }
    px
}

/// Grayscale over `[lo, hi]`; non-finite pixels and a degenerate range map to black.
pub fn gray_to_rgb(values: &[f32], lo: f32, hi: f32) -> Vec<[u8; 3]> {
    values
        .iter()
        .map(|&v| {
            let g = if v.is_finite() && hi > lo {
                (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            };
            [g; 3]
        })
        .collect()
}

fn finite_range(values: &[f32]) -> (f32, f32) {
    values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Renders a map, flow or event file to a binary PPM. Depth and TTI also get
/// a `<out>.txt` sidecar with the value range.
pub fn cmd_viz(args: &VizArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("viz");
    manifest.inputs.push(args.input.display().to_string());
    let bytes = read_input(&args.input)?;
    let mismatch = |what: &str| {
        Error::InvalidArgument(format!("{} is not {what}", args.input.display()))
    };
    let (w, h, rgb, sidecar) = match args.kind {
        VizKind::Flow => {
            let flow = decode_flow(&bytes).map_err(|_| mismatch("a flow file"))?;
            let (rgb, max) = flow_to_rgb(&flow);
            manifest.param("max_magnitude_px", max);
            (flow.width, flow.height, rgb, None)
        }
        VizKind::Events => {
            let f = decode_events(&bytes).map_err(|_| mismatch("an event file"))?;
            let (w, h) = (f.width as usize, f.height as usize);
            manifest.param("events", f.events.len());
            (w, h, events_to_rgb(&f.events, w, h), None)
        }
        VizKind::Tti | VizKind::Depth => {
            let map = decode_map(&bytes).map_err(|_| mismatch("a map file"))?;
            let want = if args.kind == VizKind::Tti {
                Semantics::InvTtiS
            } else {
                Semantics::DepthM
            };
            if map.semantics != want {
                return Err(mismatch(if want == Semantics::InvTtiS {
                    "an inverse-TTI map"
                } else {
                    "a depth map"
                }));
            }
            let (lo, hi) = finite_range(&map.values);
            let (lo, hi) = if lo > hi { (0.0, 0.0) } else { (lo, hi) };
            // Inverse TTI is anchored at zero so that "no danger" stays black.
            let lo_used = if args.kind == VizKind::Tti { 0.0f32.min(lo) } else { lo };
            manifest.param("min", lo);
            manifest.param("max", hi);
            let text = format!("min\t{lo}\nmax\t{hi}\n");
            (map.width, map.height, gray_to_rgb(&map.values, lo_used, hi), Some(text))
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let ppm = encode_ppm(w, h, &rgb);
    write_atomic(&args.out, &ppm)?;
    let name = args.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    manifest.outputs.insert(name.clone(), sha256_hex(&ppm));
    if let Some(text) = sidecar {
        let side = args.out.with_file_name(format!("{name}.txt"));
        write_atomic(&side, text.as_bytes())?;
        manifest.outputs.insert(format!("{name}.txt"), sha256_hex(text.as_bytes()));
    }
    manifest.write_to(&args.out.with_file_name(format!("{name}.manifest.json")))?;
    Ok(manifest)
}
