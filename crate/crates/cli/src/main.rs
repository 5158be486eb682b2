//! `tubegen`: synthetic tube masks, tube rendering into clean images,
//! vesselness maps and segmentation metrics.

mod config;
mod error;
mod eval_cmd;
mod frangi_cmd;
mod gen_masks;
mod manifest;
mod output;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::Method;
use crate::render::Backgrounds;

#[derive(Parser)]
#[command(
    name = "tubegen",
    version,
    about = "Synthetic tube data for chest X-ray segmentation"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate tube masks from location priors.
    GenMasks {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw tubes into clean images.
    Render(RenderArgs),
    /// Same as `render --method inpaint`.
    Inpaint(Inputs),
    /// Vesselness map of one image.
    Frangi {
        #[arg(long)]
        image: PathBuf,
        /// Print the mean response under this mask.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground-truth masks.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        /// Binarization threshold; overrides the config.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Args)]
#[group(skip)]
#[command(group(ArgGroup::new("backgrounds").required(true).args(["cxr_dir", "cxr"])))]
struct Inputs {
    /// Clean images, paired with masks by file stem.
    #[arg(long)]
    cxr_dir: Option<PathBuf>,
    /// One clean image used for every mask.
    #[arg(long)]
    cxr: Option<PathBuf>,
    #[arg(long)]
    mask_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

impl Inputs {
    fn backgrounds(&self) -> Backgrounds<'_> {
        match (&self.cxr_dir, &self.cxr) {
            (Some(dir), _) => Backgrounds::Dir(dir),
            (None, Some(file)) => Backgrounds::Shared(file),
            (None, None) => unreachable!("clap requires one of --cxr-dir and --cxr"),
        }
    }
}

fn render(cfg: &RunConfig, seed: u64, method: Method, inputs: &Inputs) -> Result<(), CliError> {
    render::run(
        cfg,
        method,
        seed,
        inputs.backgrounds(),
        &inputs.mask_dir,
        &inputs.out,
    )?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let threads = cli.threads.or(cfg.threads);
    if threads == Some(0) {
        return Err(CliError::Config("--threads must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::GenMasks { count, out } => {
            let records = gen_masks::run(&cfg, seed, *count, out)?;
            log::info!("wrote {} masks to {}", records.len(), out.display());
            Ok(())
        }
        Command::Render(args) => render(&cfg, seed, args.method, &args.inputs),
        Command::Inpaint(inputs) => render(&cfg, seed, Method::Inpaint, inputs),
        Command::Frangi { image, mask, out } => {
            if let Some(v) = frangi_cmd::run(&cfg, image, mask.as_deref(), out)? {
                println!("{v}");
            }
            Ok(())
        }
        Command::Eval {
            pred_dir,
            gt_dir,
            threshold,
            out,
        } => {
            let table = eval_cmd::run(
                pred_dir,
                gt_dir,
                threshold.unwrap_or(cfg.eval.threshold),
                out,
            )?;
            print!("{table}");
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
