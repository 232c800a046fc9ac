//! Simulation driver: lockstep run loop, experiment matrix, label export and
//! run persistence.
//!
//! Rendering and occlusion depend on the scenario only, and sensing noise
//! depends on `(seed, agent, tick)` only, so both are computed once and shared
//! by every ego model and topology that runs on the same scene and seed.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, Evaluator, RunMetrics};
use crate::fusion::{fuse_at_tracking, fuse_post_tracking, EgoModel};
use crate::geometry::{BoundingBox3D, CameraCalibration, ClassLabel, Dimensions, Mat3, Pose, Vec3};
use crate::network::{ingest_crosstalk, report_detections, report_tracks, CrosstalkPayload, route_tick, Message, MessageLogRecord, Network, Node, RouteKind, TopologyKind, TopologyModel};
use crate::rng::substream;
use crate::scenario::{world_state_at, AgentKind, ScenarioConfig, Snapshot};
use crate::sensing::{agent_views, sense_views, Detection};
use crate::tracking::{Track, Tracker, TrackerConfig};
use crate::visibility::{DepthImage, OcclusionCategory, OcclusionResult, SensorView, VisibilityConfig};

/// Environment variable capping the worker threads of parallel stages.
pub const THREADS_ENV: &str = "MSMA_THREADS";

/// Everything a single run needs besides the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub ego_model: EgoModel,
    pub topology: TopologyModel,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub eval: EvalConfig,
    pub tracker: TrackerConfig,
    pub visibility: VisibilityConfig,
    pub record_frames: bool,
}

impl RunOptions {
    pub fn new(ego_model: EgoModel, topology: TopologyKind) -> Self {
        RunOptions {
            ego_model,
            topology: TopologyModel::new(topology),
            seed: None,
            eval: EvalConfig::default(),
            tracker: TrackerConfig::default(),
            visibility: VisibilityConfig::default(),
            record_frames: false,
        }
    }
}

/// A `simulate` invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub scenario: PathBuf,
    pub ego_model: EgoModel,
    pub topology: TopologyKind,
    pub crosstalk: CrosstalkPayload,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub log_frames: bool,
    pub log_messages: bool,
}

/// Scene-only state of one tick: the world snapshot plus, per agent and
/// sensor, the sensor's world pose and the occlusion of every object.
#[derive(Debug, Clone)]
pub struct TickScene {
    pub snapshot: Snapshot,
    pub views: Vec<Vec<(Pose, Vec<OcclusionResult>)>>,
}

#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub config: ScenarioConfig,
    pub ticks: Vec<TickScene>,
}

impl PreparedScene {
    pub fn new(config: &ScenarioConfig, visibility: &VisibilityConfig) -> Result<Self> {
        let occluders = config.occluder_boxes();
        let ticks = (0..=config.max_tick())
            .map(|tick| {
                let snapshot = world_state_at(config, tick)?;
                let views = config
                    .agents
                    .iter()
                    .map(|a| agent_views(&snapshot, &occluders, a, visibility))
                    .collect::<Result<Vec<_>>>()?;
                Ok(TickScene { snapshot, views })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedScene {
            config: config.clone(),
            ticks,
        })
    }

    /// Detections per tick per agent (scenario agent order) for one seed.
    pub fn detections(&self, seed: u64) -> Vec<Vec<Vec<Detection>>> {
        self.ticks
            .iter()
            .map(|t| {
                self.config
                    .agents
                    .iter()
                    .zip(&t.views)
                    .map(|(a, views)| sense_views(&t.snapshot, a, views, self.config.rng, seed))
                    .collect()
            })
            .collect()
    }
}

/// One record per tick of the frame log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub tick: u64,
    pub time: f64,
    pub ego_position: Vec3,
    pub detections: BTreeMap<String, Vec<Detection>>,
    /// Infrastructure tracks after crosstalk, keyed by agent.
    pub tracks: BTreeMap<String, Vec<Track>>,
    pub messages: Vec<MessageLogRecord>,
    pub ego_tracks: Vec<Track>,
    pub truth: Vec<BoundingBox3D>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub frames: Vec<FrameLog>,
    pub messages: Vec<MessageLogRecord>,
}

/// Config echo plus metrics, as written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub scenario: String,
    pub ego_model: EgoModel,
    pub topology: TopologyModel,
    pub seed: u64,
    pub eval: EvalConfig,
    pub metrics: RunMetrics,
}

fn run_label(cfg: &ScenarioConfig, opts: &RunOptions, seed: u64) -> String {
    format!(
        "{} ego={} topology={} seed={seed}",
        if cfg.name.is_empty() { "scenario" } else { &cfg.name },
        opts.ego_model.cli_name(),
        opts.topology.kind.cli_name()
    )
}

fn with_context<T>(r: Result<T>, run: impl FnOnce() -> String) -> Result<T> {
    r.map_err(|e| Error::Run {
        run: run(),
        source: Box::new(e),
    })
}

/// Lockstep loop over a prepared scene with precomputed detections.
pub fn simulate(scene: &PreparedScene, detections: &[Vec<Vec<Detection>>], opts: &RunOptions) -> Result<RunOutput> {
    let cfg = &scene.config;
    let seed = opts.seed.unwrap_or(cfg.seed);
    with_context(simulate_inner(scene, detections, opts, seed), || run_label(cfg, opts, seed))
}

fn simulate_inner(scene: &PreparedScene, detections: &[Vec<Vec<Detection>>], opts: &RunOptions, seed: u64) -> Result<RunOutput> {
    let cfg = &scene.config;
    opts.eval.validate(Some(cfg.duration))?;
    let dt = cfg.dt();
    let nodes: Vec<Node<'_>> = cfg
        .agents
        .iter()
        .map(|a| Node {
            agent_id: &a.agent_id,
            kind: a.kind,
        })
        .collect();
    let ego_index = cfg.agents.iter().position(|a| a.kind == AgentKind::EgoVehicle).expect("validated");
    let ego_id = cfg.agents[ego_index].agent_id.clone();
    let mut trackers: Vec<Tracker> = cfg.agents.iter().map(|a| Tracker::new(&a.agent_id, opts.tracker)).collect();
    let index_of: BTreeMap<&str, usize> = cfg.agents.iter().enumerate().map(|(i, a)| (a.agent_id.as_str(), i)).collect();
    let mut network = Network::new(opts.topology.latency_ticks);
    let mut evaluator = Evaluator::new(opts.eval.clone());
    let mut frames = Vec::new();

    for (scene_tick, tick_dets) in scene.ticks.iter().zip(detections) {
        let snap = &scene_tick.snapshot;
        let tick = snap.tick;
        let log_start = network.log.len();

        for (tracker, dets) in trackers.iter_mut().zip(tick_dets) {
            tracker.begin_tick(dt);
            tracker.ingest(dets)?;
        }

        let mut rng = substream(cfg.rng, seed, "net", &[tick]);
        let routes = route_tick(&nodes, &opts.topology, &mut rng);

        // Crosstalk payloads are taken before anyone absorbs crosstalk.
        for r in routes.iter().filter(|r| r.kind == RouteKind::Crosstalk) {
            network.send(Message {
                sender_id: r.sender_id.clone(),
                receiver_id: r.receiver_id.clone(),
                tick_sent: tick,
                payload: match opts.topology.crosstalk_payload {
                    CrosstalkPayload::Detections => report_detections(
                        &tick_dets[index_of[r.sender_id.as_str()]],
                        opts.tracker.birth_velocity_variance,
                    ),
                    CrosstalkPayload::Tracks => report_tracks(&trackers[index_of[r.sender_id.as_str()]]),
                },
            });
        }
        let mut ego_inbox = Vec::new();
        for (receiver, msgs) in network.deliver(tick) {
            let i = index_of[receiver.as_str()];
            if i == ego_index {
                ego_inbox.extend(msgs);
            } else {
                ingest_crosstalk(&mut trackers[i], &msgs, tick)?;
            }
        }
        for r in routes.iter().filter(|r| r.kind == RouteKind::ToEgo) {
            network.send(Message {
                sender_id: r.sender_id.clone(),
                receiver_id: r.receiver_id.clone(),
                tick_sent: tick,
                payload: report_tracks(&trackers[index_of[r.sender_id.as_str()]]),
            });
        }
        for (receiver, msgs) in network.deliver(tick) {
            let i = index_of[receiver.as_str()];
            if i == ego_index {
                ego_inbox.extend(msgs);
            } else {
                ingest_crosstalk(&mut trackers[i], &msgs, tick)?;
            }
        }

        let ego = &mut trackers[ego_index];
        match opts.ego_model {
            EgoModel::Local => {}
            EgoModel::FusionAtTracking => {
                for m in &ego_inbox {
                    fuse_at_tracking(ego, &m.payload, &m.sender_id, tick)?;
                }
            }
            EgoModel::FusionPostTracking => {
                for m in &ego_inbox {
                    fuse_post_tracking(ego, &m.payload)?;
                }
            }
        }

        for tracker in &mut trackers {
            tracker.end_tick();
        }

        let ego_tracks = &trackers[ego_index].tracks;
        evaluator.push(tick, snap.time, ego_tracks, &snap.objects, &snap.ego_position());
        if opts.record_frames {
            frames.push(FrameLog {
                tick,
                time: snap.time,
                ego_position: snap.ego_position(),
                detections: cfg.agents.iter().map(|a| a.agent_id.clone()).zip(tick_dets.iter().cloned()).collect(),
                tracks: trackers
                    .iter()
                    .filter(|t| t.owner != ego_id)
                    .map(|t| (t.owner.clone(), t.tracks.clone()))
                    .collect(),
                messages: network.log[log_start..].to_vec(),
                ego_tracks: ego_tracks.clone(),
                truth: snap.objects.clone(),
            });
        }
    }

    Ok(RunOutput {
        metrics: evaluator.finish(),
        frames,
        messages: network.log,
    })
}

/// Prepares the scene, draws the detections and runs once.
pub fn run_config(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutput> {
    let seed = opts.seed.unwrap_or(cfg.seed);
    let scene = with_context(PreparedScene::new(cfg, &opts.visibility), || run_label(cfg, opts, seed))?;
    let detections = scene.detections(seed);
    simulate(&scene, &detections, opts)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_ndjson<T: Serialize>(w: &mut impl Write, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Runs a spec and writes `metrics.json`, `metrics.csv` and, when asked,
/// `frames.ndjson` and `messages.ndjson` into the output directory.
pub fn run(spec: &RunSpec) -> Result<RunOutput> {
    let cfg = ScenarioConfig::load(&spec.scenario)?;
    let mut opts = RunOptions::new(spec.ego_model, spec.topology);
    opts.topology.crosstalk_payload = spec.crosstalk;
    opts.seed = spec.seed;
    opts.record_frames = spec.log_frames;
    let out = run_config(&cfg, &opts)?;

    create_dir(&spec.out_dir)?;
    let file = MetricsFile {
        scenario: cfg.name.clone(),
        ego_model: opts.ego_model,
        topology: opts.topology,
        seed: opts.seed.unwrap_or(cfg.seed),
        eval: opts.eval.clone(),
        metrics: out.metrics.clone(),
    };
    write_file(&spec.out_dir.join("metrics.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &file)?;
        w.write_all(b"\n")
    })?;
    write_file(&spec.out_dir.join("metrics.csv"), |w| out.metrics.write_csv(w))?;
    if spec.log_frames {
        write_file(&spec.out_dir.join("frames.ndjson"), |w| write_ndjson(w, &out.frames))?;
    }
    if spec.log_messages {
        write_file(&spec.out_dir.join("messages.ndjson"), |w| write_ndjson(w, &out.messages))?;
    }
    Ok(out)
}

/// Re-evaluates a frame log written by [`run`].
pub fn eval_frames(path: &Path, cfg: &EvalConfig) -> Result<RunMetrics> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut evaluator = Evaluator::new(cfg.clone());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: FrameLog = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        evaluator.push(frame.tick, frame.time, &frame.ego_tracks, &frame.truth, &frame.ego_position);
    }
    Ok(evaluator.finish())
}

/// Runs `f` on a pool capped by `MSMA_THREADS` when set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Validation(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSample {
    pub scenario: String,
    pub seed: u64,
    pub map: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub ego_model: EgoModel,
    pub topology: TopologyKind,
    pub mean_map: f64,
    pub std_error: f64,
    /// One per (scenario, seed), in the same order for every cell.
    pub samples: Vec<MatrixSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    /// Mean of `b - a` over paired samples.
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub cells: Vec<MatrixCell>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl MatrixReport {
    pub fn cell(&self, ego_model: EgoModel, topology: TopologyKind) -> &MatrixCell {
        self.cells
            .iter()
            .find(|c| c.ego_model == ego_model && c.topology == topology)
            .expect("matrix holds every cell")
    }

    /// Paired difference `b - a` over samples where both mAPs are defined.
    pub fn paired(&self, a: (EgoModel, TopologyKind), b: (EgoModel, TopologyKind)) -> PairedDifference {
        let ca = self.cell(a.0, a.1);
        let cb = self.cell(b.0, b.1);
        let diffs: Vec<f64> = ca
            .samples
            .iter()
            .zip(&cb.samples)
            .filter_map(|(x, y)| Some(y.map? - x.map?))
            .collect();
        let (mean, std_error) = mean_and_se(&diffs);
        PairedDifference {
            mean,
            std_error,
            n: diffs.len(),
        }
    }

    /// 3x3 text table: rows are ego models, columns topologies, entries
    /// `mean ± standard error`.
    pub fn table(&self) -> String {
        let mut s = format!("{:<14}", "ego \\ topology");
        for t in TopologyKind::ALL {
            s.push_str(&format!("{:>18}", t.cli_name()));
        }
        s.push('\n');
        for e in EgoModel::ALL {
            s.push_str(&format!("{:<14}", e.cli_name()));
            for t in TopologyKind::ALL {
                let c = self.cell(e, t);
                s.push_str(&format!("{:>18}", format!("{:.4} ± {:.4}", c.mean_map, c.std_error)));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "ego_model,topology,scenario,seed,map,tp,fp,fn")?;
        for c in &self.cells {
            for s in &c.samples {
                let map = s.map.map(|m| format!("{m:.6}")).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    c.ego_model.cli_name(),
                    c.topology.cli_name(),
                    s.scenario,
                    s.seed,
                    map,
                    s.true_positives,
                    s.false_positives,
                    s.false_negatives
                )?;
            }
        }
        Ok(())
    }
}

/// Seeds used for scenario `cfg` when a matrix asks for `n` seeds.
pub fn matrix_seeds(cfg: &ScenarioConfig, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| cfg.seed.wrapping_add(i)).collect()
}

/// Every ego model under every topology, on every scenario and seed. All
/// cells of a (scenario, seed) pair share the same detections.
pub fn run_matrix(scenarios: &[ScenarioConfig], seeds: usize, base: &RunOptions) -> Result<MatrixReport> {
    if scenarios.is_empty() {
        return Err(Error::Validation("matrix needs at least one scenario".into()));
    }
    if seeds == 0 {
        return Err(Error::Validation("matrix needs at least one seed".into()));
    }
    with_thread_cap(|| run_matrix_inner(scenarios, seeds, base))?
}

fn run_matrix_inner(scenarios: &[ScenarioConfig], seeds: usize, base: &RunOptions) -> Result<MatrixReport> {
    let scenes = scenarios
        .par_iter()
        .map(|cfg| PreparedScene::new(cfg, &base.visibility))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, u64)> = scenes
        .iter()
        .enumerate()
        .flat_map(|(i, s)| matrix_seeds(&s.config, seeds).into_iter().map(move |seed| (i, seed)))
        .collect();
    let tapes: Vec<_> = pairs.par_iter().map(|&(i, seed)| scenes[i].detections(seed)).collect();

    let cells: Vec<(EgoModel, TopologyKind)> =
        EgoModel::ALL.iter().flat_map(|&e| TopologyKind::ALL.iter().map(move |&t| (e, t))).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..pairs.len()).map(move |p| (c, p))).collect();
    let results = jobs
        .par_iter()
        .map(|&(c, p)| {
            let (ego_model, topology) = cells[c];
            let (i, seed) = pairs[p];
            let mut opts = base.clone();
            opts.ego_model = ego_model;
            opts.topology = TopologyModel {
                kind: topology,
                infra_crosstalk_probability: topology.default_probability(),
                ..base.topology
            };
            opts.seed = Some(seed);
            opts.record_frames = false;
            let out = simulate(&scenes[i], &tapes[p], &opts)?;
            let m = out.metrics;
            Ok(MatrixSample {
                scenario: scenes[i].config.name.clone(),
                seed,
                map: m.map,
                true_positives: m.total_true_positives(),
                false_positives: m.total_false_positives(),
                false_negatives: m.total_false_negatives(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cells = cells
        .iter()
        .enumerate()
        .map(|(c, &(ego_model, topology))| {
            let samples = results[c * pairs.len()..(c + 1) * pairs.len()].to_vec();
            let maps: Vec<f64> = samples.iter().filter_map(|s| s.map).collect();
            let (mean_map, std_error) = mean_and_se(&maps);
            MatrixCell {
                ego_model,
                topology,
                mean_map,
                std_error,
                samples,
            }
        })
        .collect();
    Ok(MatrixReport { cells })
}

/// Loads every `*.json` scenario in a directory, sorted by file name.
pub fn load_scenarios(dir: &Path) -> Result<Vec<ScenarioConfig>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let mut cfg = ScenarioConfig::load(p).map_err(|e| Error::Run {
                run: p.display().to_string(),
                source: Box::new(e),
            })?;
            if cfg.name.is_empty() {
                cfg.name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            }
            Ok(cfg)
        })
        .collect()
}

/// Writes the matrix report as `matrix.json`, `matrix.csv` and `matrix.txt`.
pub fn write_matrix(report: &MatrixReport, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_file(&out_dir.join("matrix.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        w.write_all(b"\n")
    })?;
    write_file(&out_dir.join("matrix.csv"), |w| report.write_csv(w))?;
    write_file(&out_dir.join("matrix.txt"), |w| w.write_all(report.table().as_bytes()))
}

const DEPTH_MAGIC: &[u8; 4] = b"MSMD";

/// Depth file: "MSMD", width, height, a reserved word (all u32 LE), then
/// row-major f32 LE values.
pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<()> {
    write_file(path, |w| {
        w.write_all(DEPTH_MAGIC)?;
        w.write_all(&depth.width.to_le_bytes())?;
        w.write_all(&depth.height.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for v in &depth.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Validation(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..4] != DEPTH_MAGIC {
        return Err(bad("not a depth file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (width, height) = (word(4), word(8));
    let n = width as usize * height as usize;
    if bytes.len() != 16 + 4 * n {
        return Err(bad("size does not match header"));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(DepthImage { width, height, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub object_id: u64,
    pub class_label: ClassLabel,
    /// Box center and orientation in the sensor's optical frame.
    pub center: Vec3,
    pub rotation: Mat3,
    pub dimensions: Dimensions,
    pub category: OcclusionCategory,
    pub ratio: f64,
    pub world_box: BoundingBox3D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub tick: u64,
    pub time: f64,
    pub agent_id: String,
    pub sensor_id: String,
    pub calibration: CameraCalibration,
    /// Optical frame to world.
    pub sensor_pose: Pose,
    pub labels: Vec<LabelRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportSummary {
    pub depth_files: usize,
    pub label_files: usize,
}

pub fn depth_path(out_dir: &Path, sensor_id: &str, tick: u64) -> PathBuf {
    out_dir.join(sensor_id).join(format!("depth_{tick:05}.msmd"))
}

pub fn labels_path(out_dir: &Path, sensor_id: &str, tick: u64) -> PathBuf {
    out_dir.join(sensor_id).join(format!("labels_{tick:05}.json"))
}

fn label_file(snap: &Snapshot, agent_id: &str, sensor_id: &str, cam: &CameraCalibration, pose: &Pose, view: &SensorView) -> LabelFile {
    let to_sensor = pose.inverse();
    let labels = snap
        .objects
        .iter()
        .zip(&view.occlusion)
        .filter(|(_, occ)| occ.category != OcclusionCategory::NotInView)
        .map(|(o, occ)| {
            let in_sensor = to_sensor.compose(&o.pose());
            LabelRecord {
                object_id: o.object_id,
                class_label: o.class_label,
                center: in_sensor.translation,
                rotation: in_sensor.rotation,
                dimensions: o.dimensions,
                category: occ.category,
                ratio: occ.ratio,
                world_box: *o,
            }
        })
        .collect();
    LabelFile {
        tick: snap.tick,
        time: snap.time,
        agent_id: agent_id.to_string(),
        sensor_id: sensor_id.to_string(),
        calibration: cam.clone(),
        sensor_pose: *pose,
        labels,
    }
}

/// Depth image and labels per sensor per tick, under `out_dir/<sensor_id>/`.
/// Every object whose box projects into the image is labeled, including
/// completely occluded ones.
pub fn export_labels(cfg: &ScenarioConfig, out_dir: &Path, visibility: &VisibilityConfig) -> Result<ExportSummary> {
    for a in &cfg.agents {
        for s in &a.sensors {
            create_dir(&out_dir.join(&s.sensor_id))?;
        }
    }
    let occluders = cfg.occluder_boxes();
    let ticks: Vec<u64> = (0..=cfg.max_tick()).collect();
    let counts = with_thread_cap(|| {
        ticks
            .par_iter()
            .map(|&tick| {
                let snap = world_state_at(cfg, tick)?;
                let mut n = 0;
                for a in &cfg.agents {
                    for s in &a.sensors {
                        let pose = snap.sensor_pose(&s.sensor_id)?;
                        let view = SensorView::compute(&snap.objects, &occluders, &s.calibration, &pose, visibility);
                        write_depth(&depth_path(out_dir, &s.sensor_id, tick), &view.depth)?;
                        let file = label_file(&snap, &a.agent_id, &s.sensor_id, &s.calibration, &pose, &view);
                        write_file(&labels_path(out_dir, &s.sensor_id, tick), |w| {
                            serde_json::to_writer_pretty(&mut *w, &file)?;
                            w.write_all(b"\n")
                        })?;
                        n += 1;
                    }
                }
                Ok(n)
            })
            .collect::<Result<Vec<usize>>>()
    })??;
    let total = counts.iter().sum();
    Ok(ExportSummary {
        depth_files: total,
        label_files: total,
    })
}

pub fn read_labels(path: &Path) -> Result<LabelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
