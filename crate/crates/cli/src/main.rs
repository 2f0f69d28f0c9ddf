use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ngc_cli::commands::{self, BlendJob, DeformJob, FitOptions};
use ngc_cli::field::extract_shape;
use ngc_cli::scene::Document;
use ngc_cli::server::{self, AppState, ServerConfig};
use ngc_cli::CliError;
use ngc_core::metrics::DEFAULT_METRIC_SAMPLES;
use ngc_core::model::TrainConfig;

#[derive(Parser)]
#[command(name = "ngc", version, about = "Fit, edit and extract neural generalized cylinder shapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to the meshes referenced by a scene.
    Fit(FitArgs),
    /// Extract a shape's surface to OBJ.
    Extract(ExtractArgs),
    /// Deform a shape with handle pairs.
    Deform(EditArgs),
    /// Blend the features of two GCs.
    Blend(EditArgs),
    /// Compare two meshes.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    /// Where to write the scene with normalizations and radii filled in.
    #[arg(long)]
    out_scene: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Space samples per mesh (surface and noisy-surface get half each).
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Recompute key frame radii from the mesh.
    #[arg(long)]
    estimate_radii: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Shape id; required when the scene has several.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long, default_value = "mesh.obj")]
    out: PathBuf,
    /// Evaluate every grid point instead of only those inside GC prisms.
    #[arg(long)]
    full_grid: bool,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Job JSON.
    #[arg(long)]
    job: PathBuf,
    #[arg(long, default_value = "scene.out.json")]
    out_scene: PathBuf,
    #[arg(long, default_value = "mesh.obj")]
    out_mesh: PathBuf,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    mesh_a: PathBuf,
    #[arg(long)]
    mesh_b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_METRIC_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "NGC_DATA_DIR", default_value = "ngc-data")]
    data_dir: PathBuf,
    /// Background extraction resolution after each revision (0 = off).
    #[arg(long, default_value_t = 128)]
    refine_resolution: usize,
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => {
            let doc = Document::load(&a.scene)?;
            let defaults = TrainConfig::desk();
            let train = TrainConfig {
                epochs: a.epochs,
                lambda: a.lambda.unwrap_or(defaults.lambda),
                learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
                seed: a.seed,
                ..defaults
            };
            let opts = FitOptions { width: a.width, train, samples: a.samples, estimate_radii: a.estimate_radii };
            let mut last = -1.0;
            let (model, doc, report) = commands::fit(&doc, Some(&a.scene), &opts, &mut |p| {
                if p - last >= 0.1 || p >= 1.0 {
                    log::info!("fit {:.0}%", p * 100.0);
                    last = p;
                }
            })?;
            model.save(&a.model)?;
            if let Some(out) = &a.out_scene {
                doc.save(out)?;
            }
            println!("{}", serde_json::to_string(&report).expect("plain data"));
        }
        Command::Extract(a) => {
            let model = commands::load_model(&a.model)?;
            let doc = Document::load(&a.scene)?;
            let (shape, _) = doc.shape_index(a.shape.as_deref())?;
            let mesh = extract_shape(&model, &doc.shapes[shape], a.resolution, !a.full_grid)?;
            commands::save_mesh(&mesh, &a.out)?;
        }
        Command::Deform(a) => {
            let model = commands::load_model(&a.model)?;
            let doc = Document::load(&a.scene)?;
            let job: DeformJob = commands::read_json(&a.job)?;
            let out = commands::deform(&doc, &job)?;
            out.save(&a.out_scene)?;
            let (shape, _) = out.shape_index(Some(&job.shape))?;
            commands::save_mesh(&extract_shape(&model, &out.shapes[shape], a.resolution, true)?, &a.out_mesh)?;
        }
        Command::Blend(a) => {
            let model = commands::load_model(&a.model)?;
            let doc = Document::load(&a.scene)?;
            let job: BlendJob = commands::read_json(&a.job)?;
            let out = commands::blend(&doc, &job)?;
            out.save(&a.out_scene)?;
            let mut first = 0;
            let shape = out
                .shapes
                .iter()
                .position(|s| {
                    first += s.gc_count();
                    job.gc_a < first
                })
                .expect("gc_a validated");
            commands::save_mesh(&extract_shape(&model, &out.shapes[shape], a.resolution, true)?, &a.out_mesh)?;
        }
        Command::Eval(a) => {
            let report = commands::eval(&a.mesh_a, &a.mesh_b, a.samples, a.seed)?;
            let text = serde_json::to_string_pretty(&report).expect("plain data");
            match &a.out {
                Some(p) => write_text(p, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Serve(a) => {
            let model = commands::load_model(&a.model)?;
            let doc = Document::load(&a.scene)?;
            let state = AppState::new(model, doc, ServerConfig { data_dir: a.data_dir, refine_resolution: a.refine_resolution })?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io("runtime", e))?;
            rt.block_on(server::serve(state, (a.host, a.port).into()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
