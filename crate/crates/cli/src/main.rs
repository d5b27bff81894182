//! `dhff`: optical/SAR change detection from the command line.

mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;

use dhff_core::iist::write_trace;
use dhff_core::image::{bilinear_resize, load_pnm, save_pnm};
use dhff_core::metrics::evaluate;
use dhff_core::pipeline::{
    comparison_csv, comparison_settings, detect_changes, run_comparison, transform, DetectMethod, DetectOptions,
};
use dhff_core::synthgen::gen_pair;
use dhff_core::vggnet::{load_weights, random_base_weights, save_weights};
use dhff_core::ChangeMap;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "dhff", version, about = "Heterogeneous optical/SAR change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Otsu,
    Ocsvm,
}

impl From<Method> for DetectMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Otsu => DetectMethod::Otsu,
            Method::Ocsvm => DetectMethod::Ocsvm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Carry the SAR image into the optical image's feature space.
    Transform {
        #[arg(long)]
        optical: PathBuf,
        #[arg(long)]
        sar: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines record of every stage.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Detect changes between two images of the same modality.
    Detect {
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        post: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Gray mask whose white pixels are known to be unchanged.
        #[arg(long)]
        train_mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        nu: f64,
        /// RBF width; defaults to 1 / (d * variance) of the training features.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        /// Write the trained one-class model as JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a change map against ground truth; prints `Ra,Rp,Rr,Ka`.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic pair (opt.ppm, sar.pgm, truth.pgm).
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0.1)]
        change_fraction: f64,
        /// Store the SAR image at 1/F of the optical resolution.
        #[arg(long, default_value_t = 1)]
        sar_downscale: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a randomly initialized VGG-19 weight file.
    InitWeights {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score each pooling mode and content layer on one pair; writes CSV.
    Compare {
        #[arg(long)]
        optical: PathBuf,
        #[arg(long)]
        sar: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn detector(cfg: &RunConfig) -> DetectOptions {
    DetectOptions {
        method: cfg.method,
        nu: cfg.nu,
        gamma: cfg.gamma,
        radius: cfg.radius,
        ..Default::default()
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Transform { optical, sar, weights, config, out, trace } => {
            let cfg = run_config(config.as_deref())?;
            let opt = load_pnm(&optical)?;
            let sar = load_pnm(&sar)?;
            let weights = load_weights(&weights)?;
            let result = transform(&opt, &sar, &weights, &cfg.iist)?;
            save_pnm(&result.transformed, &out)?;
            if let Some(path) = trace {
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_trace(&result.trace, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
            }
            info!("{} stages, stop: {:?}", result.trace.len(), result.stop);
        }
        Command::Detect { pre, post, method, train_mask, nu, gamma, radius, model, out } => {
            let pre = load_pnm(&pre)?;
            let post = load_pnm(&post)?;
            let method = DetectMethod::from(method);
            let train_mask = train_mask.as_ref().map(ChangeMap::load).transpose()?;
            if method == DetectMethod::Ocsvm && train_mask.is_none() {
                eprintln!("notice: no --train-mask given; training on the half of the pixels with the smallest differences");
            }
            let opts = DetectOptions { method, nu, gamma, radius, train_mask, ..Default::default() };
            let det = detect_changes(&pre, &post, &opts)?;
            det.map.save(&out)?;
            if let (Some(path), Some(m)) = (model, det.model.as_ref()) {
                std::fs::write(&path, m.to_json()?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Evaluate { pred, truth, json } => {
            let report = evaluate(&ChangeMap::load(&pred)?, &ChangeMap::load(&truth)?)?;
            if json {
                println!("{}", report.to_json()?);
            } else {
                println!("{}", report.csv_line());
            }
        }
        Command::Synth { seed, size, change_fraction, sar_downscale, out } => {
            anyhow::ensure!(sar_downscale >= 1, "--sar-downscale must be at least 1");
            let mut pair = gen_pair(seed, size, change_fraction)?;
            if sar_downscale > 1 {
                let side = size.div_ceil(sar_downscale);
                pair.sar = bilinear_resize(&pair.sar, side, side)?;
            }
            pair.save(&out)?;
        }
        Command::InitWeights { seed, out } => save_weights(&random_base_weights(seed), &out)?,
        Command::Compare { optical, sar, truth, weights, config, out } => {
            let cfg = run_config(config.as_deref())?;
            let opt = load_pnm(&optical)?;
            let sar = load_pnm(&sar)?;
            let truth = ChangeMap::load(&truth)?;
            let weights = load_weights(&weights)?;
            let rows = run_comparison(
                &opt,
                &sar,
                &truth,
                &weights,
                &cfg.iist,
                &detector(&cfg),
                &comparison_settings(),
            )?;
            let csv = comparison_csv(&rows);
            match out {
                Some(path) => std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
