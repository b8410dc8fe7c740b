use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aura::config::{parse_detector, parse_inpainter, parse_metric, PipelineConfig};
use aura::harness;
use aura::{io, pipeline, Error};

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_ORACLE: u8 = 3;

/// Object-removal mask generation by randomized input sampling.
#[derive(Parser)]
#[command(name = "aura", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Importance map, candidates, selected mask and completed image.
    Generate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Importance map only (binary grid, heatmap, legend).
    Importance {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Judge score of one keep-mask.
    Judge {
        #[command(flatten)]
        inputs: Inputs,
        /// Keep-mask to score; defaults to the complement of --mask.
        #[arg(long)]
        keep: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Synthetic suite: dilation baselines against AURA.
    Bench {
        /// Comma-separated dilation kernel sizes.
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40")]
        kernel_sizes: Vec<usize>,
        /// Number of suite scenes to run (at most 10).
        #[arg(long, default_value_t = 10)]
        scenes: usize,
        /// Sampling seeds per scene.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[command(flatten)]
        opts: Overrides,
    },
}

#[derive(Args)]
struct Inputs {
    /// Input image (PNG, PGM or PPM).
    #[arg(long)]
    image: PathBuf,
    /// Target segmentation mask; values above 127 mark the object.
    #[arg(long)]
    mask: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sampled masks.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Largest percentile; candidates use 1..=p_max.
    #[arg(long)]
    p_max: Option<u32>,
    /// Afterimage weight.
    #[arg(long)]
    lambda_a: Option<f64>,
    /// Detector weight.
    #[arg(long)]
    lambda_d: Option<f64>,
    /// mean | diffusion | external:<program>
    #[arg(long)]
    inpainter: Option<String>,
    /// null | residual | external:<program>
    #[arg(long)]
    detector: Option<String>,
    /// l2 | patch-stats | external:<program>
    #[arg(long)]
    metric: Option<String>,
    /// Worker threads; output does not depend on this.
    #[arg(long, env = "AURA_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self, base: PipelineConfig) -> aura::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => base,
        };
        if let Some(v) = self.seed {
            cfg.sampler.seed = v;
        }
        if let Some(v) = self.n_samples {
            cfg.sampler.n_samples = v;
        }
        if let Some(v) = self.p_max {
            cfg.p_max = v;
        }
        if let Some(v) = self.lambda_a {
            cfg.lambda_a = v;
        }
        if let Some(v) = self.lambda_d {
            cfg.lambda_d = v;
        }
        if let Some(v) = &self.inpainter {
            cfg.inpainter = parse_inpainter(v)?;
        }
        if let Some(v) = &self.detector {
            cfg.detector = parse_detector(v)?;
        }
        if let Some(v) = &self.metric {
            cfg.metric = parse_metric(v)?;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("aura-out"))
}

fn log_config(cfg: &PipelineConfig) {
    log::info!("seed {}", cfg.seed());
    log::info!("resolved config: {}", serde_json::to_string(cfg).expect("json"));
}

fn importance(inputs: &Inputs, cfg: &PipelineConfig, out: &Path) -> aura::Result<()> {
    let image: aura::Image = io::load_image(&inputs.image)?;
    let target = io::load_hole_mask(&inputs.mask)?;
    let estimate = pipeline::importance(&image, &target, cfg)?;
    pipeline::write_config(cfg, out)?;
    let legend = pipeline::write_importance(&estimate, out)?;
    log::info!("importance range [{}, {}] written to {}", legend.min, legend.max, out.display());
    Ok(())
}

fn bench(kernels: &[usize], scenes: usize, seeds: u64, cfg: &PipelineConfig, out: &Path) -> aura::Result<bool> {
    let specs: Vec<_> = harness::suite().into_iter().take(scenes).collect();
    if specs.is_empty() || seeds == 0 {
        return Err(Error::InvalidConfig("bench needs at least one scene and one seed".into()));
    }
    let report = harness::run_suite(&specs, seeds, kernels, cfg, Some(out))?;
    pipeline::write_config(cfg, out)?;
    report.write_csv(out.join("report.csv"))?;
    let table = report.table();
    let path = out.join("report.txt");
    std::fs::write(&path, &table).map_err(|e| Error::Io { path, source: e })?;
    let d = harness::dominance(&report);
    let path = out.join("dominance.json");
    std::fs::write(&path, serde_json::to_string_pretty(&d).expect("json"))
        .map_err(|e| Error::Io { path, source: e })?;
    log::info!(
        "AURA mean total {:.6}; PSNR >= kernel-0 on {}/{} scenes",
        d.aura_mean_total,
        d.psnr_wins,
        d.scenes
    );
    if !d.holds {
        eprintln!("dominance check failed:");
        for b in d.baselines.iter().filter(|b| b.mean_total >= d.aura_mean_total) {
            eprintln!("  {} mean total {:.6} >= AURA {:.6}", b.mask, b.mean_total, d.aura_mean_total);
        }
        if d.psnr_wins < d.required_psnr_wins {
            eprintln!("  PSNR wins {}/{} (need {})", d.psnr_wins, d.scenes, d.required_psnr_wins);
        }
        eprint!("{table}");
    }
    Ok(d.holds)
}

fn run(cli: Cli) -> aura::Result<bool> {
    match cli.command {
        Command::Generate { inputs, opts } => {
            let cfg = opts.resolve(PipelineConfig::default())?;
            log_config(&cfg);
            let out = out_dir(&cfg);
            let report = pipeline::generate(&inputs.image, &inputs.mask, &cfg, &out)?;
            log::info!(
                "AURA mask: P={} ({} px); artifacts in {}",
                report.selected_percentile,
                report.selected_area,
                out.display()
            );
            Ok(true)
        }
        Command::Importance { inputs, opts } => {
            let cfg = opts.resolve(PipelineConfig::default())?;
            log_config(&cfg);
            importance(&inputs, &cfg, &out_dir(&cfg))?;
            Ok(true)
        }
        Command::Judge { inputs, keep, opts } => {
            let cfg = opts.resolve(PipelineConfig::default())?;
            log_config(&cfg);
            let out = out_dir(&cfg);
            let score = pipeline::judge_only(&inputs.image, &inputs.mask, keep.as_deref(), &cfg, &out)?;
            log::info!("judge total {} written to {}", score.total, out.join("judge.json").display());
            Ok(true)
        }
        Command::Bench {
            kernel_sizes,
            scenes,
            seeds,
            opts,
        } => {
            let cfg = opts.resolve(harness::suite_config())?;
            log_config(&cfg);
            bench(&kernel_sizes, scenes, seeds, &cfg, &out_dir(&cfg))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ACCEPTANCE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_oracle_failure() { EXIT_ORACLE } else { EXIT_INPUT })
        }
    }
}
