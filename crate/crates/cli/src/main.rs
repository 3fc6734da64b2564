// SPDX-License-Identifier: Apache-2.0

//! `glassmap` command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glassmap::config::Config;
use glassmap::drpc::{read_drpc, write_drpc, TagColumns};
use glassmap::eval::{evaluate_classification, format_report, ClassMetrics};
use glassmap::export::to_pcd;
use glassmap::pipeline::{
    detect_panes, load_inputs, run_pipeline, simulate_inputs, write_labeled, Pipeline, ScanInput, EVAL_TOL,
};
use glassmap::registry::{format_poses, read_poses};
use glassmap::sim::GroundTruth;
use glassmap::{assemble_output, Error, Exec, LabeledCloud, Pose, Result, Scene};

/// Scans simulated and held in memory at once.
const RUN_BATCH: usize = 10;

#[derive(Parser, Debug)]
#[command(name = "glassmap", version, about = "Find glass panes in dual-return lidar scans and map their reflections")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Simulator seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Pose file (`scan_id tx ty tz qx qy qz qw` per line).
    #[arg(long, global = true)]
    poses: Option<PathBuf>,
    /// Output directory, or output file for `export`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate scans of a scene and write them with ground truth.
    Simulate {
        /// Built-in scene name or scene file.
        scene: String,
        #[command(flatten)]
        range: ScanRange,
    },
    /// Detect glass panes and print them.
    Detect {
        /// Scan files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Label every point of the input scans.
    Classify {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Compare labeled scans against ground truth.
    Eval {
        /// Scans with ground truth annotations.
        #[arg(long, required = true, num_args = 1..)]
        truth: Vec<PathBuf>,
        /// Labeled scans.
        #[arg(long, required = true, num_args = 1..)]
        labeled: Vec<PathBuf>,
    },
    /// End to end: labeled scans, pane registry and report.
    Run {
        /// Simulate this scene instead of reading scans.
        #[arg(long, conflicts_with = "inputs")]
        scene: Option<String>,
        #[command(flatten)]
        range: ScanRange,
        inputs: Vec<PathBuf>,
    },
    /// Write the map points of a labeled scan as ASCII PCD.
    Export { labeled: PathBuf },
}

#[derive(Args, Debug)]
struct ScanRange {
    /// Number of scans; defaults to the scene's trajectory length.
    #[arg(long)]
    scans: Option<usize>,
    /// First scan index.
    #[arg(long, default_value_t = 0)]
    first: usize,
}

impl ScanRange {
    fn resolve(&self, scene: &Scene) -> std::ops::Range<usize> {
        self.first..self.first + self.scans.unwrap_or_else(|| scene.scan_count())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Error::Input(format!("--threads: {e}")))?;
    }
    let cfg = match &g.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let exec = Exec::default();
    match &cli.command {
        Command::Simulate { scene, range } => simulate(g, &cfg, scene, range, exec),
        Command::Detect { inputs } => detect(g, &cfg, inputs),
        Command::Classify { inputs } => {
            let out = run_pipeline(&load(g, inputs)?, &cfg, exec)?;
            write_labeled(&out_dir(g)?, &out.results)
        }
        Command::Eval { truth, labeled } => eval(g, truth, labeled),
        Command::Run { scene, range, inputs } => {
            let dir = out_dir(g)?;
            let mut pipeline = Pipeline::new(&cfg, exec)?;
            match scene {
                Some(name) => {
                    let scene = Scene::resolve(name)?;
                    let range = range.resolve(&scene);
                    for start in range.clone().step_by(RUN_BATCH) {
                        let batch = simulate_inputs(&scene, &cfg, g.seed, start..(start + RUN_BATCH).min(range.end), exec)?;
                        write_labeled(&dir, &pipeline.process(&batch)?)?;
                    }
                }
                None if inputs.is_empty() => return Err(Error::Input("run needs input scans or --scene".into())),
                None => write_labeled(&dir, &pipeline.process(&load(g, inputs)?)?)?,
            }
            pipeline.write_summary(&dir)?;
            print!("{}", pipeline.report());
            Ok(())
        }
        Command::Export { labeled } => export(g, labeled),
    }
}

fn out_dir(g: &Global) -> Result<PathBuf> {
    let dir = g.out.clone().ok_or_else(|| Error::Input("--out is required".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Expands directories into their `.drpc` files, sorted by name.
fn expand(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "drpc"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Input("no scan files found".into()));
    }
    Ok(files)
}

fn poses(g: &Global) -> Result<Option<BTreeMap<u64, Pose>>> {
    g.poses.as_deref().map(read_poses).transpose()
}

fn load(g: &Global, inputs: &[PathBuf]) -> Result<Vec<ScanInput>> {
    load_inputs(&expand(inputs)?, poses(g)?.as_ref())
}

fn simulate(g: &Global, cfg: &Config, name: &str, range: &ScanRange, exec: Exec) -> Result<()> {
    let scene = Scene::resolve(name)?;
    let dir = out_dir(g)?;
    let range = range.resolve(&scene);
    let mut poses = Vec::new();
    for start in range.clone().step_by(RUN_BATCH) {
        for input in simulate_inputs(&scene, cfg, g.seed, start..(start + RUN_BATCH).min(range.end), exec)? {
            let truth = input.truth.as_ref().expect("simulated scans carry truth");
            let path = dir.join(format!("scan_{:06}.drpc", input.scan.scan_id));
            write_drpc(&path, &input.scan, Some((&truth.to_tags(), TagColumns::ALL)))?;
            poses.push((input.scan.scan_id, input.pose.expect("simulated scans carry poses")));
        }
    }
    let path = dir.join("poses.txt");
    std::fs::write(&path, format_poses(poses.iter().map(|(id, p)| (*id, p)))).map_err(|e| Error::io(&path, e))
}

fn detect(g: &Global, cfg: &Config, inputs: &[PathBuf]) -> Result<()> {
    let mut text = String::from("# scan a b c d left_az right_az lower_ring upper_ring inliers source\n");
    for input in load(g, inputs)? {
        let det = detect_panes(&input.scan, cfg);
        for p in &det.panes {
            let [a, b, c, d] = p.plane.coefficients();
            let _ = writeln!(
                text,
                "{} {a:.6} {b:.6} {c:.6} {d:.6} {:.6} {:.6} {} {} {} {:?}",
                input.scan.scan_id, p.left_az, p.right_az, p.lower_ring, p.upper_ring, p.inlier_count, p.source
            );
        }
    }
    match &g.out {
        Some(_) => {
            let path = out_dir(g)?.join("panes.txt");
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn eval(g: &Global, truth: &[PathBuf], labeled: &[PathBuf]) -> Result<()> {
    let mut truths: BTreeMap<u64, GroundTruth> = BTreeMap::new();
    for path in expand(truth)? {
        let f = read_drpc(&path)?;
        let tags = f.tags.filter(|_| f.columns.label && f.columns.position).ok_or_else(|| {
            Error::Input(format!("{}: no ground truth annotations", path.display()))
        })?;
        truths.insert(f.scan.scan_id, GroundTruth::from_tags(&f.scan, &tags)?);
    }
    let mut metrics = ClassMetrics::new(EVAL_TOL);
    let mut scans = 0;
    for path in expand(labeled)? {
        let f = read_drpc(&path)?;
        let tags = f.tags.ok_or_else(|| Error::Input(format!("{}: no labels", path.display())))?;
        let id = f.scan.scan_id;
        let t = truths.get(&id).ok_or_else(|| Error::Input(format!("{}: no truth for scan {id}", path.display())))?;
        let l = LabeledCloud::from_tags(f.scan, &tags)?;
        metrics.merge(&evaluate_classification(&l, t, EVAL_TOL)?);
        scans += 1;
    }
    let report = format_report(Some(&metrics), None, &[("scans".to_string(), scans.to_string())]);
    print!("{report}");
    if g.out.is_some() {
        let path = out_dir(g)?.join("report.txt");
        std::fs::write(&path, report).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn export(g: &Global, labeled: &Path) -> Result<()> {
    let f = read_drpc(labeled)?;
    let tags = f.tags.ok_or_else(|| Error::Input(format!("{}: no labels", labeled.display())))?;
    let cloud = LabeledCloud::from_tags(f.scan, &tags)?;
    let text = to_pcd(&assemble_output(&cloud));
    match &g.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
