use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splatpose::error::{Error, Result};
use splatpose::pipeline::{self, CaseOutput, RunConfig};
use splatpose::{io, report};
use splatpose_core::geometry::PointCloud;
use splatpose_core::sim::Scene;

#[derive(Parser)]
#[command(name = "splatpose", version, about = "Uncertainty-aware object reconstruction and pose tracking on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene: frames, depth maps and ground-truth poses.
    Simulate(Common),
    /// Generate and align the prior views and write the initial map.
    Init(Common),
    /// Track the reference frames and write the pose trace and graph.
    Track(Common),
    /// Optimize the keyframe graph and write it with its cost trace.
    Optimize(Common),
    /// Build and optimize the object map.
    Map(Common),
    /// Evaluate one case and write its metrics.
    Eval(Common),
    /// Full pipeline over every seed, view count and variant.
    Run(Common),
    /// Aggregate the runs under a directory into median ± IQR tables.
    Report {
        dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene spec JSON, overriding the config.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// View counts, comma separated. Single-case commands use the largest.
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<usize>>,
    /// Also run each single-toggle ablation.
    #[arg(long)]
    ablations: bool,
    #[arg(long)]
    no_uncertainty: bool,
    #[arg(long)]
    no_ba: bool,
    #[arg(long)]
    no_diffusion_frames: bool,
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.scene {
            cfg.scene_path = Some(s.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.seeds {
            cfg.seeds = n;
        }
        if let Some(v) = &self.views {
            cfg.view_counts = v.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.ablations |= self.ablations;
        cfg.toggles.uncertainty_on &= !self.no_uncertainty;
        cfg.toggles.bundle_adjust_on &= !self.no_ba;
        cfg.toggles.diffusion_frames_in_graph &= !self.no_diffusion_frames;
        cfg.validate()?;
        let out = cfg.out.clone().ok_or_else(|| Error::Config("an output directory is required (--out)".into()))?;
        Ok((cfg, out))
    }
}

fn write_scene(dir: &Path, scene: &Scene) -> Result<()> {
    io::write_json(&dir.join("scene.json"), &scene.spec)?;
    io::write_point_cloud(&dir.join("object.ply"), &scene.object.cloud().map_err(|e| Error::format(dir, e))?)?;
    let mut poses = Vec::new();
    for (set, frames) in [("frame", &scene.frames), ("test", &scene.test_frames)] {
        for (k, f) in frames.iter().enumerate() {
            let stem = dir.join("frames").join(format!("{set}_{k:03}"));
            io::write_png(&stem.with_extension("png"), &f.color)?;
            io::write_scalar_map(&dir.join("frames").join(format!("{set}_{k:03}.depth")), &f.depth)?;
            poses.push(serde_json::json!({ "set": set, "frame_id": k, "pose": io::TransformRecord::from_rigid(&f.t_oc) }));
        }
    }
    io::write_json(&dir.join("gt_poses.json"), &poses)
}

/// The single case run by the stage commands.
fn single_case(cfg: &RunConfig) -> Result<CaseOutput> {
    let spec = cfg.scene_spec()?;
    let scene = pipeline::simulate(&spec, cfg.seed);
    let init = pipeline::initialize(&scene, &cfg.diffusion, &cfg.pipeline, cfg.seed)?;
    let views = *cfg.view_counts.iter().max().unwrap_or(&1);
    pipeline::run_case(&scene, &init, views, &cfg.toggles, cfg, cfg.seed)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Report { dir } => {
            let rows = report::report(&dir)?;
            print!("{}", report::markdown(&rows));
        }
        Command::Simulate(c) => {
            let (cfg, out) = c.resolve()?;
            write_scene(&out, &pipeline::simulate(&cfg.scene_spec()?, cfg.seed))?;
        }
        Command::Init(c) => {
            let (cfg, out) = c.resolve()?;
            let scene = pipeline::simulate(&cfg.scene_spec()?, cfg.seed);
            let init = pipeline::initialize(&scene, &cfg.diffusion, &cfg.pipeline, cfg.seed)?;
            io::write_json(&out.join("alignment.json"), &io::TransformRecord::from_sim(&init.alignment.transform))?;
            for (k, v) in init.prior.views.iter().enumerate() {
                let stem = out.join("prior").join(format!("view_{k}"));
                io::write_uncertain_image(&stem, &v.image)?;
                io::write_png(&stem.with_extension("png"), &v.image.rgb)?;
                io::write_json(&out.join("prior").join(format!("view_{k}.pose.json")), &io::TransformRecord::from_rigid(&init.views[k].pose))?;
            }
            let mut pts = Vec::new();
            let mut conf = Vec::new();
            for v in &init.views {
                for k in 0..v.points.len() {
                    if v.valid[k] {
                        pts.push(v.pose.apply(&v.points[k]));
                        conf.push(v.confidence[k]);
                    }
                }
            }
            let cloud = PointCloud::with_confidence(pts, Some(conf)).map_err(|e| Error::format(&out, e))?;
            io::write_point_cloud(&out.join("prior_cloud.ply"), &cloud)?;
        }
        Command::Track(c) => {
            let (cfg, out) = c.resolve()?;
            let case = single_case(&cfg)?;
            let rows: Vec<_> = case.poses.iter().filter(|p| p.set == "reference").cloned().collect();
            io::write_csv(&out.join("poses.csv"), &rows)?;
            io::write_json(&out.join("graph.json"), &io::GraphRecord::from_graph(&case.graph))?;
        }
        Command::Optimize(c) => {
            let (cfg, out) = c.resolve()?;
            let case = single_case(&cfg)?;
            io::write_json(&out.join("graph.json"), &io::GraphRecord::from_graph(&case.graph))?;
            io::write_costs(&out.join("solver_costs.csv"), &case.costs)?;
        }
        Command::Map(c) => {
            let (cfg, out) = c.resolve()?;
            let case = single_case(&cfg)?;
            io::write_field(&out.join("object.ply"), &case.field)?;
        }
        Command::Eval(c) => {
            let (cfg, out) = c.resolve()?;
            let case = single_case(&cfg)?;
            io::write_csv(&out.join("metrics.csv"), std::slice::from_ref(&case.metrics))?;
            io::write_json(&out.join("metrics.json"), &case.metrics)?;
            io::write_csv(&out.join("poses.csv"), &case.poses)?;
        }
        Command::Run(c) => {
            let (cfg, out) = c.resolve()?;
            let cases = pipeline::run_pipeline(&cfg)?;
            pipeline::write_outputs(&out, &cfg, &cases)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
