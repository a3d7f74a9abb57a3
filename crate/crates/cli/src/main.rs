//! `advmetrics` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use advmetrics::datagen::FamilySpec;
use advmetrics::forest::ForestHyperparams;
use advmetrics::pipeline::{
    cmd_corr, cmd_importance, cmd_loo, cmd_metrics, cmd_synth, cmd_train, render_corr,
    render_importance, render_loo, render_report, BaseSource, DetectorSpec, FeatureSelection,
    LooOptions, MetricsOptions, SynthOptions, TrainOptions,
};
use advmetrics::quality::QualityConfig;

#[derive(Parser)]
#[command(name = "advmetrics", version, about = "Measure adversarial perturbations and model detector verdicts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every random choice
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=1024))]
    jobs: u64,
    /// Output path (file or directory, depending on the verb)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct QualityArgs {
    #[arg(long)]
    uqi_window: Option<usize>,
    #[arg(long)]
    ergas_ratio: Option<f64>,
    #[arg(long)]
    vifp_scales: Option<usize>,
    #[arg(long)]
    vifp_sigma_nsq: Option<f64>,
    #[arg(long)]
    psnrb_block: Option<usize>,
    /// Value written in place of an infinite PSNR-B
    #[arg(long)]
    psnrb_cap: Option<f64>,
}

impl QualityArgs {
    fn config(&self) -> QualityConfig {
        let mut cfg = QualityConfig::default();
        if let Some(v) = self.uqi_window {
            cfg.uqi_window = v;
        }
        if let Some(v) = self.ergas_ratio {
            cfg.ergas_ratio = v;
        }
        if let Some(v) = self.vifp_scales {
            cfg.vifp_scales = v;
        }
        if let Some(v) = self.vifp_sigma_nsq {
            cfg.vifp_sigma_nsq = v;
        }
        if let Some(v) = self.psnrb_block {
            cfg.psnrb_block = v;
        }
        if let Some(v) = self.psnrb_cap {
            cfg.psnrb_cap_db = v;
        }
        cfg
    }
}

#[derive(Args, Clone)]
struct ForestArgs {
    /// Number of trees
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Maximum tree depth (unbounded if omitted)
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    /// Features tried per split (default: sqrt of the feature count)
    #[arg(long)]
    max_features: Option<usize>,
}

impl ForestArgs {
    fn hyperparams(&self, seed: u64) -> ForestHyperparams {
        ForestHyperparams {
            n_trees: self.trees,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            features_per_split: self.max_features,
            seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the 12 metrics for every pair of a manifest
    Metrics {
        /// Manifest CSV
        manifest: PathBuf,
        /// Coordinates changing by at most this much do not count towards l0
        #[arg(long, default_value_t = 0.0)]
        l0_tolerance: f64,
        #[command(flatten)]
        quality: QualityArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Pearson correlation of each metric with a detector label
    Corr {
        /// Metric matrix CSV
        matrix: PathBuf,
        #[arg(long)]
        label: String,
        #[command(flatten)]
        common: Common,
    },
    /// Train a forest on a split of the matrix and report held-out accuracy
    Train {
        matrix: PathBuf,
        #[arg(long)]
        label: String,
        /// norms, quality, all, or a comma-separated metric list
        #[arg(long, default_value = "all")]
        features: FeatureSelection,
        #[arg(long, default_value_t = 0.66)]
        train_fraction: f64,
        /// Split without stratifying by label
        #[arg(long)]
        no_stratify: bool,
        /// Also write the evaluation report as JSON
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        forest: ForestArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Leave-one-attack-out accuracy per family
    Loo {
        matrix: PathBuf,
        /// Detector label (repeat for several columns)
        #[arg(long = "label", required = true)]
        labels: Vec<String>,
        #[arg(long, default_value = "all")]
        features: FeatureSelection,
        #[command(flatten)]
        forest: ForestArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Rank the features of a saved model
    Importance {
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic labeled set of image pairs
    Synth {
        /// Family as [name=]kind[:min-max[:count]] (repeatable; default: all four kinds)
        #[arg(long = "family")]
        families: Vec<FamilySpec>,
        #[arg(long, default_value_t = 250)]
        per_family: usize,
        /// texture, gray, or a directory of PNG files
        #[arg(long, default_value = "texture")]
        base: BaseSource,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        /// Detector as name=metric:threshold|median[:flip_noise] (repeatable)
        #[arg(long = "detector")]
        detectors: Vec<DetectorSpec>,
        #[command(flatten)]
        quality: QualityArgs,
        #[command(flatten)]
        common: Common,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn required_out(common: &Common, verb: &str) -> Result<PathBuf, clap::Error> {
    common.out.clone().ok_or_else(|| {
        clap::Error::raw(
            clap::error::ErrorKind::MissingRequiredArgument,
            format!("`{verb}` requires --out\n"),
        )
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Metrics {
            manifest,
            l0_tolerance,
            quality,
            common,
        } => {
            let out = required_out(&common, "metrics")?;
            let rows = cmd_metrics(&MetricsOptions {
                manifest,
                out: out.clone(),
                jobs: common.jobs as usize,
                l0_tolerance,
                quality: quality.config(),
            })?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Corr {
            matrix,
            label,
            common,
        } => emit(common.out.as_deref(), &render_corr(&cmd_corr(matrix, &label)?))?,
        Command::Train {
            matrix,
            label,
            features,
            train_fraction,
            no_stratify,
            report,
            forest,
            common,
        } => {
            let outcome = cmd_train(&TrainOptions {
                matrix,
                label,
                features,
                train_fraction,
                stratified: !no_stratify,
                hyperparams: forest.hyperparams(common.seed),
                model_out: common.out.clone(),
                jobs: common.jobs as usize,
            })?;
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&outcome.report)?;
                fs::write(&path, json + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", render_report(&outcome.report));
        }
        Command::Loo {
            matrix,
            labels,
            features,
            forest,
            common,
        } => {
            let table = cmd_loo(&LooOptions {
                matrix,
                labels,
                features,
                hyperparams: forest.hyperparams(common.seed),
                jobs: common.jobs as usize,
            })?;
            emit(common.out.as_deref(), &render_loo(&table))?;
        }
        Command::Importance { model, common } => {
            emit(common.out.as_deref(), &render_importance(&cmd_importance(model)?))?
        }
        Command::Synth {
            families,
            per_family,
            base,
            height,
            width,
            channels,
            detectors,
            quality,
            common,
        } => {
            let out = required_out(&common, "synth")?;
            let mut opts = SynthOptions::new(out);
            if !families.is_empty() {
                opts.families = families;
            }
            if !detectors.is_empty() {
                opts.detectors = detectors;
            }
            opts.per_family = per_family;
            opts.base = base;
            opts.height = height;
            opts.width = width;
            opts.channels = channels;
            opts.seed = common.seed;
            opts.quality = quality.config();
            opts.jobs = common.jobs as usize;
            let summary = cmd_synth(&opts)?;
            for (name, t) in &summary.thresholds {
                eprintln!("detector {name}: threshold {t}");
            }
            eprintln!("wrote {} pairs to {}", summary.rows, summary.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(usage) = e.downcast_ref::<clap::Error>() {
                let _ = usage.print();
                return ExitCode::from(1);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
