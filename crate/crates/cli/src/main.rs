use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use mendkit::eval::{read_records, Method};
use mendkit::pipeline::{self, StageOutcome};
use mendkit::{MendError, Result, RunConfig};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nformats: dataset v1, checkpoint v1, result v1"
);

#[derive(Parser)]
#[command(name = "mendkit", version, long_version = LONG_VERSION, about = "Restore fractured shapes with twin occupancy decoders")]
struct Cli {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted override such as `ttt.alpha=0.1`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for per-instance work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fractured-shape dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train both decoders and the training latents.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore the test split by latent inference only.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore the test split with test-time training.
    Ttt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-extract the meshes of a restored instance.
    Mesh {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect per-instance results into a record table.
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render per-class tables and cumulative error curves.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the latent dimension and tabulate the Chamfer distance.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for assignment in &cli.set {
        cfg.set(assignment)?;
    }
    if let Ok(seed) = std::env::var("MENDKIT_SEED") {
        cfg.seed = seed
            .trim()
            .parse()
            .map_err(|_| MendError::Config(format!("MENDKIT_SEED `{}` is not an unsigned integer", seed)))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn announce(stage: &str, out: &Path, outcome: StageOutcome) {
    match outcome {
        StageOutcome::Ran => println!("{}: wrote {}", stage, out.display()),
        StageOutcome::UpToDate => println!("{}: {} is up to date", stage, out.display()),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let jobs = cli.jobs.max(1);
    info!("seed {}", cfg.seed);
    match &cli.command {
        Command::GenData { out } => announce("gen-data", out, pipeline::gen_data(&cfg, out, jobs)?),
        Command::Train { data, out } => announce("train", out, pipeline::train(&cfg, data, out, jobs)?),
        Command::Infer { data, run, out } => announce(
            "infer",
            out,
            pipeline::restore_split(&cfg, data, run, out, Method::InferenceOnly, jobs)?,
        ),
        Command::Ttt { data, run, out } => announce(
            "ttt",
            out,
            pipeline::restore_split(&cfg, data, run, out, Method::WithTtt, jobs)?,
        ),
        Command::Mesh { instance, resolution, out } => {
            let meshes = pipeline::mesh(instance, *resolution, out)?;
            for (name, m) in meshes.named() {
                println!("{}: {} vertices, {} triangles", name, m.vertices.len(), m.triangles.len());
            }
        }
        Command::Eval { results, out } => {
            let records = pipeline::eval(results, out)?;
            println!("eval: {} records to {}", records.len(), out.display());
        }
        Command::Report { records, out } => {
            let mut all = Vec::new();
            for path in records {
                all.extend(read_records(path)?);
            }
            for s in pipeline::report(&all, cfg.eval.curve_points, out)? {
                println!(
                    "{} {}: mean {:.3} median {:.3} (x1e-4, n={}){}",
                    s.class,
                    s.method.tag(),
                    s.mean * 1e4,
                    s.median * 1e4,
                    s.count,
                    if s.outlier_dominated() { " outlier-dominated" } else { "" }
                );
            }
        }
        Command::Ablate { data, out } => {
            for r in pipeline::ablate(&cfg, data, out, jobs)? {
                println!(
                    "d_C = d_B = {}: mean {:.3} median {:.3} (x1e-4)",
                    r.dim_c,
                    r.mean * 1e4,
                    r.median * 1e4
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_class() as u8)
        }
    }
}
