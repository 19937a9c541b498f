use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use pgs_core::io::records::{self, Envelope, MetricsRecord, PredictionFile, TraceHeader};
use pgs_core::io::scenario::{load_scenario, ScenarioSpec};
use pgs_core::io::synth::{self, ScenarioKind};
use pgs_core::io::{plot, to_json};
use pgs_core::lanes::Slot;
use pgs_core::losses::{optimize_trajectory, OptimizeProblem};
use pgs_core::simulate::{lane_keep_trajectory, run, PlannerKind, SimConfig};
use pgs_core::{Error, LossWeights, OptimizeResult, OptimizerConfig, Trajectory};

#[derive(Parser, Debug)]
#[command(
    name = "pgs",
    version,
    about = "Perception-guided supervision signals and a desk-scale closed loop"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relevant lanes around the ego and the target-lane label
    Labels {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Centerline-snapped spatial target of the expert horizon
    Snap {
        scenario: PathBuf,
        /// Snap threshold in meters (default: the scenario's)
        #[arg(long)]
        w: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overlap events, hinge loss and gradient for a predicted trajectory
    Ntps {
        scenario: PathBuf,
        /// Predicted trajectory file (default: the expert horizon)
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted loss breakdown for a predicted trajectory
    Loss {
        scenario: PathBuf,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Weights `w_mtps,w_stps,w_ntps`
        #[arg(long, value_parser = parse_weights, default_value = "1,0.3,1")]
        weights: LossWeights,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize a lane-keeping initial plan against the supervision losses
    Optimize {
        scenario: PathBuf,
        /// Initial trajectory file (default: constant speed along the current lane)
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, value_parser = parse_weights, default_value = "1,0.3,1")]
        weights: LossWeights,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop run of one scenario, or of every scenario in a directory
    Simulate {
        #[arg(required_unless_present = "batch", conflicts_with = "batch")]
        scenario: Option<PathBuf>,
        /// Directory of scenario files, processed in parallel, reported in filename order
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long, value_enum)]
        planner: PlannerArg,
        /// Lateral noise for the replay planner, meters
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        metrics: PathBuf,
        /// Trace file (single run) or directory of traces (batch)
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Finite-difference check of the analytic gradients on built-in fixtures
    Gradcheck {
        #[arg(long, default_value_t = 1e-6)]
        h: f64,
        /// Relative-error bound; exceeding it exits with status 2
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic scenario
    Gen {
        #[arg(value_parser = parse_kind)]
        kind: ScenarioKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// SVG figure of a scenario or a trace
    Plot {
        input: PathBuf,
        /// Scenario drawn under a trace
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PlannerArg {
    Replay,
    Centerline,
    Pgs,
}

fn parse_weights(s: &str) -> Result<LossWeights, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => LossWeights::new(a, b, c).map_err(|e| e.to_string()),
        _ => Err(format!(
            "expected three comma-separated weights, got {}",
            v.len()
        )),
    }
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

type CliResult<T> = Result<T, Error>;

/// Input read failures are the caller's problem, not a runtime fault.
fn input_err(path: &Path, e: std::io::Error) -> Error {
    Error::Validation(format!("cannot read {}: {e}", path.display()))
}

fn load(path: &Path) -> CliResult<ScenarioSpec> {
    match load_scenario(path) {
        Err(Error::Io(e)) => Err(input_err(path, e)),
        other => other,
    }
}

fn load_pred(path: &Path) -> CliResult<PredictionFile> {
    match records::load::<PredictionFile>(path) {
        Err(Error::Io(e)) => Err(input_err(path, e)),
        other => other,
    }
}

fn emit<R: Serialize>(out: Option<&Path>, envelope: &Envelope<R>) -> CliResult<()> {
    match out {
        Some(p) => records::save(envelope, p),
        None => {
            print!("{}", to_json(envelope));
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SnapRecord {
    target_lane: pgs_core::TargetLaneLabel,
    spatial_target: pgs_core::SpatialTarget,
}

#[derive(Serialize)]
struct OptimizeRecord {
    target_lane: Slot,
    result: OptimizeResult,
}

#[derive(Serialize)]
struct BatchEntry {
    file: String,
    scenario_hash: String,
    record: MetricsRecord,
}

fn planner_kind(p: PlannerArg, noise: f64) -> CliResult<PlannerKind> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Validation(format!(
            "--noise must be >= 0, got {noise}"
        )));
    }
    Ok(match p {
        PlannerArg::Replay => PlannerKind::Replay { noise_sigma: noise },
        PlannerArg::Centerline => PlannerKind::CenterlineFollow,
        PlannerArg::Pgs => PlannerKind::PgsFull,
    })
}

fn simulate_one(
    sc: &ScenarioSpec,
    kind: PlannerKind,
    seed: u64,
    trace: Option<&Path>,
) -> CliResult<MetricsRecord> {
    let cfg = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let out = run(sc, kind, &cfg)?;
    if let Some(path) = trace {
        let header = TraceHeader {
            tool_version: records::TOOL_VERSION.into(),
            scenario_hash: records::scenario_hash(sc),
            planner: kind,
            seed,
        };
        let file = fs::File::create(path)?;
        records::write_trace(std::io::BufWriter::new(file), &header, &out.trace)?;
    }
    Ok(MetricsRecord {
        planner: kind,
        seed,
        metrics: out.metrics,
    })
}

fn scenario_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| input_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no .json scenarios in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Labels { scenario, out } => {
            let sc = load(&scenario)?;
            let rec = records::labels(&sc)?;
            emit(out.as_deref(), &Envelope::new("labels", Some(&sc), rec))
        }
        Command::Snap { scenario, w, out } => {
            let sc = load(&scenario)?;
            let (l, target) = records::spatial_target(&sc, w)?;
            let rec = SnapRecord {
                target_lane: l.target_lane,
                spatial_target: target,
            };
            emit(
                out.as_deref(),
                &Envelope::new("spatial_target", Some(&sc), rec),
            )
        }
        Command::Ntps {
            scenario,
            pred,
            beta,
            out,
        } => {
            let sc = load(&scenario)?;
            let traj = match pred {
                Some(p) => load_pred(&p)?.trajectory().clone(),
                None => sc.gt_window()?,
            };
            let rec = records::ntps_record(&sc, &traj, beta)?;
            emit(out.as_deref(), &Envelope::new("ntps", Some(&sc), rec))
        }
        Command::Loss {
            scenario,
            pred,
            weights,
            out,
        } => {
            let sc = load(&scenario)?;
            let (traj, scores) = match pred {
                Some(p) => {
                    let f = load_pred(&p)?;
                    (f.trajectory().clone(), f.lane_scores())
                }
                None => (sc.gt_window()?, None),
            };
            let rec = records::supervision(&sc, &traj, scores, &weights)?;
            emit(
                out.as_deref(),
                &Envelope::new("supervision", Some(&sc), rec),
            )
        }
        Command::Optimize {
            scenario,
            init,
            weights,
            max_iters,
            step,
            out,
        } => {
            let sc = load(&scenario)?;
            let init: Trajectory = match init {
                Some(p) => load_pred(&p)?.trajectory().clone(),
                None => lane_keep_trajectory(&sc)?,
            };
            let (l, _) = records::spatial_target(&sc, None)?;
            let slot = l.target_lane.slot;
            let centerline = &l
                .relevant
                .get(slot)
                .ok_or(Error::LabelAbsent(slot))?
                .centerline;
            let gt = sc.gt_window()?;
            let problem = OptimizeProblem {
                init: &init,
                target_centerline: centerline,
                gt: &gt,
                agents: &sc.agents,
                ego_width: sc.ego.dims.width,
                ego_length: sc.ego.dims.length,
                ego_heading: sc.ego.pose.heading,
                w_snap: sc.thresholds.w_snap,
                beta: sc.thresholds.beta,
            };
            let cfg = OptimizerConfig {
                step_size: step,
                max_iters,
                ..OptimizerConfig::default()
            };
            let result = optimize_trajectory(&problem, &weights, &cfg)?;
            let rec = OptimizeRecord {
                target_lane: slot,
                result,
            };
            emit(out.as_deref(), &Envelope::new("optimize", Some(&sc), rec))
        }
        Command::Simulate {
            scenario,
            batch,
            planner,
            noise,
            seed,
            metrics,
            trace,
        } => {
            let kind = planner_kind(planner, noise)?;
            if let Some(dir) = batch {
                let files = scenario_files(&dir)?;
                if let Some(t) = &trace {
                    fs::create_dir_all(t)?;
                }
                let entries = files
                    .par_iter()
                    .map(|f| {
                        let sc = load(f)?;
                        let stem = f
                            .file_stem()
                            .unwrap_or_default()
                            .to_string_lossy()
                            .into_owned();
                        let trace_path = trace
                            .as_ref()
                            .map(|t| t.join(format!("{stem}.trace.jsonl")));
                        let record = simulate_one(&sc, kind, seed, trace_path.as_deref())?;
                        Ok(BatchEntry {
                            file: f
                                .file_name()
                                .unwrap_or_default()
                                .to_string_lossy()
                                .into_owned(),
                            scenario_hash: records::scenario_hash(&sc),
                            record,
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                for e in &entries {
                    let m = &e.record.metrics;
                    println!(
                        "{}: success={} collisions={} departure={:.3} completion={:.3}",
                        e.file,
                        m.success,
                        m.collisions,
                        m.lane_departure_fraction,
                        m.route_completion
                    );
                }
                return records::save(&Envelope::new("batch_metrics", None, entries), &metrics);
            }
            let path = scenario.expect("clap enforces scenario or batch");
            let sc = load(&path)?;
            let record = simulate_one(&sc, kind, seed, trace.as_deref())?;
            records::save(&Envelope::new("metrics", Some(&sc), record), &metrics)
        }
        Command::Gradcheck { h, tol, out } => {
            if h.is_nan() || h <= 0.0 {
                return Err(Error::Validation(format!("--h must be > 0, got {h}")));
            }
            let cases = records::builtin_gradchecks(h)?;
            let worst = cases
                .iter()
                .map(|c| c.report.max_rel_error)
                .fold(0.0, f64::max);
            for c in &cases {
                eprintln!(
                    "{}: max_rel_error={:.3e} checked={} skipped={}",
                    c.name, c.report.max_rel_error, c.report.checked, c.report.skipped
                );
            }
            emit(out.as_deref(), &Envelope::new("gradcheck", None, &cases))?;
            if worst > tol {
                return Err(Error::CheckFailed(format!(
                    "relative error {worst:.3e} exceeds {tol:.1e}"
                )));
            }
            Ok(())
        }
        Command::Gen { kind, seed, out } => {
            let sc = synth::generate(kind, seed)?;
            records::save(&sc, &out)
        }
        Command::Plot {
            input,
            scenario,
            out,
        } => {
            let background = scenario.as_deref().map(load).transpose()?;
            let svg = match load(&input) {
                Ok(sc) => plot::render(Some(&sc), None)?,
                Err(Error::Parse { .. }) => {
                    let file = fs::File::open(&input).map_err(|e| input_err(&input, e))?;
                    let (_, rows) = records::read_trace(BufReader::new(file))?;
                    plot::render(background.as_ref(), Some(&rows))?
                }
                Err(e) => return Err(e),
            };
            fs::write(&out, svg)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
