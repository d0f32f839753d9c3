//! Command-line driver: corrupt -> complete -> refine -> evaluate, plus the
//! synthetic generator, format conversion, and Monte Carlo sweeps.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure,
//! 4 I/O or file-format error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trc_core::c2f::{global_complete, run_c2f};
use trc_core::config::RunConfig;
use trc_core::corrupt::{corrupt, CorruptionSpec, MaskKind, NoiseKind};
use trc_core::error::TrcError;
use trc_core::io;
use trc_core::mc::run_sweep;
use trc_core::metrics::psnr;
use trc_core::solver::solve;
use trc_core::synth::random_tr_tensor;
use trc_core::tensor::DenseTensor;
use trc_core::Result;

#[derive(Parser)]
#[command(name = "trc", version, about = "Robust tensor ring completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random tensor with known ring rank.
    Synth {
        /// Comma-separated dimensions, e.g. 8,8,8
        #[arg(long)]
        dims: String,
        /// Comma-separated ring ranks, same length as dims
        #[arg(long)]
        ranks: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Apply an observation mask and observation noise to a clean tensor.
    Corrupt {
        #[arg(short, long)]
        input: PathBuf,
        /// Mask kind, e.g. uniform:0.5, missing-rows:0.3, watermark
        #[arg(long)]
        mask: String,
        /// Noise kind, e.g. none, gaussian:0.01, gmm:0.001,0.25,0.5
        #[arg(long, default_value = "none")]
        noise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Where to write the binary observation mask
        #[arg(short = 'm', long)]
        mask_out: PathBuf,
    },
    /// Global completion of a masked tensor.
    Complete {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        mask: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Optional plain-text per-iteration report
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Two-stage completion: global stage plus patch refinement.
    C2f {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        mask: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Peak signal-to-noise ratio between two tensors.
    Psnr {
        #[arg(short)]
        a: PathBuf,
        #[arg(short)]
        b: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
    },
    /// Convert between NetPBM images (.pgm/.ppm) and tensor files (.trt).
    Convert {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Reshape applied after reading, e.g. 4,4,4,5,4,4,5,6,3
        #[arg(long)]
        reshape: Option<String>,
    },
    /// Monte Carlo sweep driven by a config file.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of repetitions from the config
        #[arg(long)]
        runs: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| TrcError::Config(format!("cannot parse {what} from '{s}'")))
        })
        .collect()
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn set_workers(cfg: &RunConfig) {
    if cfg.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global();
    }
}

fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("pgm") | Some("ppm")
    )
}

fn read_any(path: &Path) -> Result<DenseTensor> {
    if is_image_path(path) {
        io::read_image(path)
    } else {
        io::read_tensor(path)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            dims,
            ranks,
            seed,
            output,
        } => {
            let dims = parse_usize_list(&dims, "dims")?;
            let ranks = parse_usize_list(&ranks, "ranks")?;
            let (tensor, _) = random_tr_tensor(&dims, &ranks, seed)?;
            io::write_tensor(output, &tensor)?;
        }
        Command::Corrupt {
            input,
            mask,
            noise,
            seed,
            output,
            mask_out,
        } => {
            // validate the recipe before touching the filesystem
            let spec = CorruptionSpec {
                mask: MaskKind::parse(&mask)?,
                noise: NoiseKind::parse(&noise)?,
                seed,
            };
            let clean = read_any(&input)?;
            let (observed, mask_tensor) = corrupt(&clean, &spec)?;
            io::write_tensor(output, &observed)?;
            io::write_tensor(mask_out, &mask_tensor)?;
        }
        Command::Complete {
            input,
            mask,
            config,
            output,
            report,
        } => {
            let cfg = load_config(&config)?;
            set_workers(&cfg);
            let observed = read_any(&input)?;
            let mask_tensor = read_any(&mask)?;
            let base = cfg.solver_config();
            let (completed, solve_report) = if let Some(ranks) = &cfg.ranks {
                let (work_obs, work_mask) = match &cfg.reshape {
                    Some(shape) => (observed.reshape(shape)?, mask_tensor.reshape(shape)?),
                    None => (observed.clone(), mask_tensor.clone()),
                };
                let mut solver_cfg = base;
                solver_cfg.ranks = ranks.clone();
                let (x, rep) = solve(&work_obs, &work_mask, &solver_cfg)?;
                (x.reshape(observed.dims())?, rep)
            } else {
                let (x, rep, _) = global_complete(
                    &observed,
                    &mask_tensor,
                    &base,
                    &cfg.rank_rule(),
                    cfg.reshape.as_deref(),
                )?;
                (x, rep)
            };
            io::write_tensor(output, &completed)?;
            if let Some(report_path) = report {
                std::fs::write(report_path, solve_report.to_text())?;
            }
        }
        Command::C2f {
            input,
            mask,
            config,
            output,
        } => {
            let cfg = load_config(&config)?;
            set_workers(&cfg);
            let observed = read_any(&input)?;
            let mask_tensor = read_any(&mask)?;
            let (refined, _) = run_c2f(
                &observed,
                &mask_tensor,
                &cfg.patch_plan(),
                &cfg.solver_config(),
                &cfg.rank_rule(),
                &cfg.c2f_options(),
            )?;
            io::write_tensor(output, &refined)?;
        }
        Command::Psnr { a, b, peak } => {
            let reference = read_any(&a)?;
            let estimate = read_any(&b)?;
            let value = psnr(&reference, &estimate, peak)?;
            if value.is_infinite() {
                println!("inf");
            } else {
                println!("{value:.6}");
            }
        }
        Command::Convert {
            input,
            output,
            reshape,
        } => {
            let mut tensor = read_any(&input)?;
            if let Some(shape) = reshape {
                tensor = tensor.reshape(&parse_usize_list(&shape, "reshape")?)?;
            }
            if is_image_path(&output) {
                io::write_image(output, &tensor)?;
            } else {
                io::write_tensor(output, &tensor)?;
            }
        }
        Command::Mc {
            config,
            runs,
            output,
        } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(runs) = runs {
                cfg.runs = runs;
            }
            set_workers(&cfg);
            let results_path = output
                .or_else(|| cfg.results.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results.csv"));
            let rows = run_sweep(&cfg, &results_path)?;
            let mean_g = rows.iter().map(|r| r.psnr_global).sum::<f64>() / rows.len() as f64;
            let mean_c = rows.iter().map(|r| r.psnr_c2f).sum::<f64>() / rows.len() as f64;
            println!(
                "{} runs: mean global {:.3} dB, mean refined {:.3} dB -> {}",
                rows.len(),
                mean_g,
                mean_c,
                results_path.display()
            );
        }
    }
    Ok(())
}

fn exit_code_for(err: &TrcError) -> u8 {
    match err {
        TrcError::Config(_)
        | TrcError::InvalidArgument(_)
        | TrcError::ShapeMismatch { .. }
        | TrcError::IndexOutOfBounds { .. } => 2,
        TrcError::Numeric(_) | TrcError::Diverged { .. } => 3,
        TrcError::Io(_) | TrcError::Format { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
