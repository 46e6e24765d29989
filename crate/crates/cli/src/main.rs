//! `asp`: run, batch and render agentic scene policy episodes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use asp_core::affordance::{detect_affordances, SimAffordanceBackend};
use asp_core::agent::{run_episode, AgentBackend, EpisodeLog, ExternalBackend, ScriptedPolicy};
use asp_core::config::RemoteConfig;
use asp_core::geom::Pose2D;
use asp_core::nav::{preferred_view_position, ring_candidates, select_nav_goal};
use asp_core::remote::{RemoteAffordance, RemoteClassifier, RemoteEmbedding};
use asp_core::scene_map::MapDocument;
use asp_core::sim::render::project;
use asp_core::sim::{generate_scene, NoiseConfig, SceneSpec, SimWorld, TaskSpec, TEMPLATES};
use asp_core::tools::{Backends, Session};
use asp_core::{AspConfig, Error, Mode, Result};
use clap::{Parser, Subcommand, ValueEnum};
use image::{GrayImage, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "asp", version, about = "Agentic scene policies over a kinematic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Scripted,
    External,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Tabletop,
    Mobile,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and print its log as JSON lines.
    Run {
        /// Template name or path to a scene JSON file.
        #[arg(long)]
        scene: String,
        /// Task name or free-form query.
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: BackendKind,
        /// Must match the scene when given.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        no_aff: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON noise configuration.
        #[arg(long)]
        noise: Option<PathBuf>,
        /// JSON configuration overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use remote perception services at this URL instead of the mocks.
        #[arg(long)]
        perception_url: Option<String>,
        /// Write the log here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a suite of scripted episodes and print per-task mean scores.
    Batch {
        #[arg(long)]
        suite: PathBuf,
        /// Directory for per-episode JSON-lines logs.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Print the table as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a grayscale image of a scene, or of its navigation grid.
    Render {
        #[arg(long)]
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw the occupancy grid with goal candidates around `--object`.
        #[arg(long)]
        nav: bool,
        /// Scene object id for `--nav`; defaults to the first jointed object.
        #[arg(long)]
        object: Option<String>,
        /// Action used to find the affordance for `--nav`.
        #[arg(long, default_value = "open")]
        action: String,
        /// Also write the initial object map as JSON.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn load_scene(scene: &str, seed: u64) -> Result<SceneSpec> {
    if TEMPLATES.contains(&scene) {
        return generate_scene(scene, seed);
    }
    let spec: SceneSpec = read_json(Path::new(scene))?;
    spec.validate()?;
    Ok(spec)
}

fn find_task(scene: &SceneSpec, query: &str) -> Option<TaskSpec> {
    scene.tasks.iter().find(|t| t.name == query || t.query == query).cloned()
}

fn backend_url() -> Result<RemoteConfig> {
    let url = std::env::var("ASP_BACKEND_URL")
        .map_err(|_| Error::InvalidParameter("ASP_BACKEND_URL is not set".into()))?;
    Ok(RemoteConfig { url: Some(url), ..RemoteConfig::default() })
}

#[allow(clippy::too_many_arguments)]
fn run(
    scene: &str,
    query: &str,
    backend: BackendKind,
    mode: Option<ModeArg>,
    no_aff: bool,
    seed: u64,
    noise: Option<&Path>,
    config: Option<&Path>,
    perception_url: Option<String>,
) -> Result<EpisodeLog> {
    let spec = load_scene(scene, seed)?;
    let wanted = mode.map(|m| match m {
        ModeArg::Tabletop => Mode::Tabletop,
        ModeArg::Mobile => Mode::Mobile,
    });
    if wanted.is_some_and(|m| m != spec.mode) {
        return Err(Error::InvalidParameter(format!("scene '{scene}' is a {:?} scene", spec.mode)));
    }
    let noise: NoiseConfig = noise.map(read_json).transpose()?.unwrap_or_default();
    let mut cfg: AspConfig = config.map(read_json).transpose()?.unwrap_or_default();
    cfg.mode = spec.mode;
    cfg.no_aff = no_aff;
    let task = find_task(&spec, query);
    let query = task.as_ref().map_or(query.to_string(), |t| t.query.clone());
    let spec = Arc::new(spec);
    let world = SimWorld::new(spec.clone(), noise.clone());
    let mut backends = Backends::mock(&cfg, &noise, spec.seed);
    if let Some(url) = perception_url {
        let remote = RemoteConfig { url: Some(url), ..cfg.remote.clone() };
        backends.embedding = Box::new(RemoteEmbedding::new(&remote, cfg.map.dim)?);
        backends.classifier = Box::new(RemoteClassifier::new(&remote)?);
        backends.affordance = Box::new(RemoteAffordance::new(&remote)?);
    }
    let mut session = Session::new(world, cfg, backends)?;
    let mut agent: Box<dyn AgentBackend> = match backend {
        BackendKind::Scripted => {
            let task = task.as_ref().ok_or_else(|| {
                let names: Vec<&str> = spec.tasks.iter().map(|t| t.name.as_str()).collect();
                Error::InvalidParameter(format!("the scripted backend needs a task; this scene has: {}", names.join(", ")))
            })?;
            Box::new(ScriptedPolicy::for_task(&spec, task)?)
        }
        BackendKind::External => Box::new(ExternalBackend::new(&backend_url()?)?),
    };
    Ok(run_episode(&mut session, &query, task.as_ref(), agent.as_mut()))
}

#[derive(Debug, Clone, Deserialize)]
struct SuiteEntry {
    template: String,
    task: String,
    #[serde(default)]
    no_aff: bool,
}

#[derive(Debug, Clone, Deserialize)]
struct Suite {
    /// Seeds `0..seeds` are run for every entry.
    seeds: u64,
    #[serde(default)]
    noise: NoiseConfig,
    #[serde(default)]
    config: Option<AspConfig>,
    entries: Vec<SuiteEntry>,
}

#[derive(Debug, Clone, Serialize)]
struct Row {
    template: String,
    task: String,
    variant: &'static str,
    episodes: usize,
    mean: f64,
}

fn batch(suite: &Path, logs: Option<&Path>) -> Result<Vec<Row>> {
    let suite: Suite = read_json(suite)?;
    let base = suite.config.clone().unwrap_or_default();
    if let Some(dir) = logs {
        fs::create_dir_all(dir)?;
    }
    let jobs: Vec<(usize, u64)> = (0..suite.entries.len()).flat_map(|e| (0..suite.seeds).map(move |s| (e, s))).collect();
    let results: Vec<Result<(usize, f64)>> = jobs
        .par_iter()
        .map(|&(e, seed)| {
            let entry = &suite.entries[e];
            let spec = asp_core::agent::EpisodeSpec {
                noise: suite.noise.clone(),
                ..asp_core::agent::EpisodeSpec::new(&entry.template, seed, &entry.task).with_no_aff(entry.no_aff)
            };
            let log = spec.run_scripted(&base)?;
            if let Some(dir) = logs {
                let variant = if entry.no_aff { "no-aff" } else { "full" };
                fs::write(dir.join(format!("{}_{}_{variant}_{seed}.jsonl", entry.template, entry.task)), log.to_jsonl())?;
            }
            Ok((e, log.score))
        })
        .collect();
    let mut sums = vec![(0usize, 0.0f64); suite.entries.len()];
    for r in results {
        let (e, score) = r?;
        sums[e].0 += 1;
        sums[e].1 += score;
    }
    Ok(suite
        .entries
        .iter()
        .zip(sums)
        .map(|(entry, (n, total))| Row {
            template: entry.template.clone(),
            task: entry.task.clone(),
            variant: if entry.no_aff { "no-aff" } else { "full" },
            episodes: n,
            mean: if n == 0 { 0.0 } else { total / n as f64 },
        })
        .collect())
}

fn splat(img: &mut GrayImage, x: i64, y: i64, r: i64, value: u8) {
    for dy in -r..=r {
        for dx in -r..=r {
            let (px, py) = (x + dx, y + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, Luma([value]));
            }
        }
    }
}

/// Depth-shaded point splats seen from the observation camera.
fn render_scene(world: &SimWorld) -> GrayImage {
    let cam = world.observation_camera();
    let (w, h) = (640u32, 480u32);
    let mut depth = vec![f64::INFINITY; (w * h) as usize];
    let mut img = GrayImage::new(w, h);
    for i in 0..world.objects.len() {
        for p in world.world_cloud(i).iter() {
            let Some((u, v, d)) = project(&cam, p) else { continue };
            let (x, y) = (u.floor() as i64, v.floor() as i64);
            for (px, py) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
                if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                    continue;
                }
                let k = (py as u32 * w + px as u32) as usize;
                if d < depth[k] {
                    depth[k] = d;
                    let shade = (255.0 - 60.0 * d).clamp(40.0, 255.0) as u8;
                    img.put_pixel(px as u32, py as u32, Luma([shade]));
                }
            }
        }
    }
    img
}

/// Occupancy grid (free white, lethal black) with ring candidates in gray
/// and the selected pose as a black cross with a heading tick.
fn render_nav(world: &SimWorld, cfg: &AspConfig, object: Option<&str>, action: &str) -> Result<GrayImage> {
    let grid = world.grid().ok_or_else(|| Error::InvalidParameter("scene has no occupancy grid".into()))?;
    let spec = world.spec();
    let index = match object {
        Some(id) => spec.object_index(id).ok_or_else(|| Error::InvalidParameter(format!("no object '{id}'")))?,
        None => spec.objects.iter().position(|o| o.joint.is_some()).unwrap_or(0),
    };
    let mut img = GrayImage::new(grid.width as u32, grid.height as u32);
    for row in 0..grid.height {
        for col in 0..grid.width {
            let y = (grid.height - 1 - row) as u32;
            img.put_pixel(col as u32, y, Luma([255 - grid.get(col, row)]));
        }
    }
    let to_px = |x: f64, y: f64| {
        let col = ((x - grid.origin[0]) / grid.resolution).floor() as i64;
        let row = ((y - grid.origin[1]) / grid.resolution).floor() as i64;
        (col, grid.height as i64 - 1 - row)
    };
    let centroid = world.object_centroid(index);
    let center = centroid.xy();

    // affordance from a noiseless map of the object
    let session = Session::with_mocks(world.clone(), cfg.clone())?;
    let p_aff = session
        .map()
        .objects
        .iter()
        .find(|o| o.gt_label.as_deref() == Some(spec.objects[index].label.as_str()))
        .cloned()
        .and_then(|obj| {
            let mut backend = SimAffordanceBackend::noiseless();
            detect_affordances(&obj, action, &cfg.affordance, cfg.map.border_penalty, &mut backend).ok()
        })
        .and_then(|affs| affs.first().and_then(|a| preferred_view_position(&a.point_cloud, centroid, cfg.nav.radii[0]).ok()));
    for &r in &cfg.nav.radii {
        for c in ring_candidates(grid, center, r, p_aff, cfg.nav.lambda_aff, &cfg.nav) {
            if c.footprint_cost.is_finite() {
                let (x, y) = to_px(c.pose.x, c.pose.y);
                splat(&mut img, x, y, 0, 128);
            }
        }
    }
    if let Some(p) = p_aff {
        let (x, y) = to_px(p[0], p[1]);
        splat(&mut img, x, y, 1, 200);
    }
    let goal: Pose2D = select_nav_goal(grid, center, p_aff, &cfg.nav)?.pose;
    let (x, y) = to_px(goal.x, goal.y);
    for d in -3..=3 {
        splat(&mut img, x + d, y, 0, 0);
        splat(&mut img, x, y + d, 0, 0);
    }
    for k in 1..=6 {
        let t = k as f64 * grid.resolution;
        let (hx, hy) = to_px(goal.x + t * goal.theta.cos(), goal.y + t * goal.theta.sin());
        splat(&mut img, hx, hy, 0, 0);
    }
    Ok(img)
}

fn save_pgm(img: &GrayImage, out: &Path) -> Result<()> {
    img.save_with_format(out, image::ImageFormat::Pnm).map_err(|e| Error::Io(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scene, query, backend, mode, no_aff, seed, noise, config, perception_url, out } => {
            let log = run(&scene, &query, backend, mode, no_aff, seed, noise.as_deref(), config.as_deref(), perception_url)?;
            match out {
                Some(path) => fs::write(path, log.to_jsonl())?,
                None => print!("{}", log.to_jsonl()),
            }
            eprintln!(
                "score {} after {} calls{}",
                log.score,
                log.records.len(),
                log.aborted.as_ref().map(|a| format!(" (aborted: {a})")).unwrap_or_default()
            );
        }
        Command::Batch { suite, logs, json } => {
            let rows = batch(&suite, logs.as_deref())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!("{:<16} {:<18} {:<7} {:>8} {:>6}", "template", "task", "variant", "episodes", "mean");
                for r in rows {
                    println!("{:<16} {:<18} {:<7} {:>8} {:>6.2}", r.template, r.task, r.variant, r.episodes, r.mean);
                }
            }
        }
        Command::Render { scene, seed, nav, object, action, map, out } => {
            let spec = load_scene(&scene, seed)?;
            let mut cfg = AspConfig::default();
            cfg.mode = spec.mode;
            let world = SimWorld::new(Arc::new(spec), NoiseConfig::default());
            if let Some(path) = map {
                let session = Session::with_mocks(world.clone(), cfg.clone())?;
                fs::write(path, MapDocument::from(session.map()).to_json())?;
            }
            let img = if nav { render_nav(&world, &cfg, object.as_deref(), &action)? } else { render_scene(&world) };
            save_pgm(&img, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
