use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use bimrecon::config::Config;
use bimrecon::error::{Error, Result};
use bimrecon::pipeline::{self, STAGES};
use bimrecon::service::{self, Session};
use bimrecon::synthgen::{self, presets, SceneSpec};

#[derive(Parser)]
#[command(name = "reconstruct", version, about = "Volumetric building reconstruction from indoor point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Settings {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Settings {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline and write the model, meshes and stage dumps.
    Run {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run one stage from the dumps already in the output directory.
    Stage {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(STAGES))]
        name: String,
        /// Point cloud, read by the `load` stage only.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Generate a synthetic scene: a preset name or a scene JSON file.
    Synth {
        spec: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve an interactive session over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Output directory of an earlier run.
        #[arg(long, conflicts_with = "input")]
        session: Option<PathBuf>,
        /// Point cloud to reconstruct first.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
}

fn scene(spec: &str, seed: u64) -> Result<SceneSpec> {
    if let Some(s) = presets::by_name(spec, seed) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Invalid(format!(
            "`{spec}` is neither a scene file nor a preset ({})",
            presets::NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut s: SceneSpec =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    s.seed = seed;
    Ok(s)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { input, out, settings } => {
            let cfg = settings.load()?;
            let rec = pipeline::run(&input, &cfg, &out)?;
            print!("{}", rec.timings.report());
            println!(
                "{} rooms, {} walls, {} intersections -> {}",
                rec.model.rooms.len(),
                rec.model.walls.len(),
                rec.model.intersections.len(),
                out.display()
            );
            for w in &rec.model.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Stage {
            name,
            input,
            out,
            settings,
        } => {
            let cfg = settings.load()?;
            let path = pipeline::run_stage(&name, input.as_deref(), &cfg, &out)?;
            println!("{}", path.display());
        }
        Command::Synth { spec, out, seed } => {
            let spec = scene(&spec, seed)?;
            let (cloud, gt) = synthgen::generate(&spec)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            bimrecon::pointcloud::save_ply(&cloud, &out.join("points.ply"))?;
            write(&out.join("scene.json"), serde_json::to_vec_pretty(&spec)?)?;
            write(&out.join("ground_truth.json"), serde_json::to_vec(&gt)?)?;
            println!("{} points, {} outliers -> {}", cloud.len(), gt.outlier_count(), out.display());
        }
        Command::Serve {
            port,
            host,
            session,
            input,
            settings,
        } => {
            let cfg = settings.load()?;
            let session = match (session, input) {
                (Some(dir), _) => Session::load_dir(&dir, cfg)?,
                (None, Some(input)) => {
                    let cloud = bimrecon::pointcloud::load(&input)?;
                    Session::from_reconstruction(pipeline::run_cloud(cloud, &cfg)?)
                }
                (None, None) => return Err(Error::Invalid("serve needs --session <dir> or --input <cloud>".into())),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(service::serve(session, SocketAddr::new(host, port)))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = execute(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
