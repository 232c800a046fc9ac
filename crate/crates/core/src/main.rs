use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use msma_core::evaluation::EvalConfig;
use msma_core::fusion::EgoModel;
use msma_core::harness::{self, RunOptions, RunSpec};
use msma_core::network::{CrosstalkPayload, TopologyKind};
use msma_core::scenario::ScenarioConfig;
use msma_core::visibility::VisibilityConfig;
use msma_core::Error;

#[derive(Parser)]
#[command(name = "msma", version, about = "Multi-sensor multi-agent collaborative perception simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ego {
    Local,
    TrackFusion,
    Ddf,
}

impl From<Ego> for EgoModel {
    fn from(e: Ego) -> Self {
        match e {
            Ego::Local => EgoModel::Local,
            Ego::TrackFusion => EgoModel::FusionAtTracking,
            Ego::Ddf => EgoModel::FusionPostTracking,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Topology {
    None,
    Minor,
    Major,
}

impl From<Topology> for TopologyKind {
    fn from(t: Topology) -> Self {
        match t {
            Topology::None => TopologyKind::NoCorrelation,
            Topology::Minor => TopologyKind::MinorCorrelation,
            Topology::Major => TopologyKind::MajorCorrelation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Crosstalk {
    Detections,
    Tracks,
}

impl From<Crosstalk> for CrosstalkPayload {
    fn from(c: Crosstalk) -> Self {
        match c {
            Crosstalk::Detections => CrosstalkPayload::Detections,
            Crosstalk::Tracks => CrosstalkPayload::Tracks,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with one ego model and network topology.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "local")]
        ego: Ego,
        #[arg(long, value_enum, default_value = "none")]
        topology: Topology,
        /// What infrastructure agents send each other.
        #[arg(long, value_enum, default_value = "detections")]
        crosstalk: Crosstalk,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_frames: bool,
        #[arg(long)]
        log_messages: bool,
    },
    /// Every ego model under every topology over a directory of scenarios.
    Matrix {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, value_enum, default_value = "detections")]
        crosstalk: Crosstalk,
        #[arg(long)]
        out: PathBuf,
    },
    /// Depth images and occlusion labels per sensor per tick.
    ExportLabels {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-evaluate a frame log.
    Eval {
        #[arg(long)]
        frames: PathBuf,
        /// Evaluation config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the metrics here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            scenario,
            ego,
            topology,
            crosstalk,
            seed,
            out,
            log_frames,
            log_messages,
        } => {
            let spec = RunSpec {
                scenario,
                ego_model: ego.into(),
                topology: topology.into(),
                crosstalk: crosstalk.into(),
                seed,
                out_dir: out.clone(),
                log_frames,
                log_messages,
            };
            let result = harness::run(&spec)?;
            let map = result.metrics.map.map_or("n/a".to_string(), |m| format!("{m:.4}"));
            println!("mAP {map}; outputs in {}", out.display());
        }
        Command::Matrix {
            scenarios,
            seeds,
            crosstalk,
            out,
        } => {
            let configs = harness::load_scenarios(&scenarios)?;
            let mut base = RunOptions::new(EgoModel::Local, TopologyKind::NoCorrelation);
            base.topology.crosstalk_payload = crosstalk.into();
            let report = harness::run_matrix(&configs, seeds, &base)?;
            harness::write_matrix(&report, &out)?;
            print!("{}", report.table());
        }
        Command::ExportLabels { scenario, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let summary = harness::export_labels(&cfg, &out, &VisibilityConfig::default())?;
            println!("wrote {} depth files and {} label files to {}", summary.depth_files, summary.label_files, out.display());
        }
        Command::Eval { frames, config, out } => {
            let cfg = match config {
                Some(p) => EvalConfig::load(&p)?,
                None => EvalConfig::default(),
            };
            let metrics = harness::eval_frames(&frames, &cfg)?;
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
            match out {
                Some(p) => std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?,
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
