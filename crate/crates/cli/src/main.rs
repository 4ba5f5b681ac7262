use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use labelgan_core::annot::{generate_label_set, save_label_set, Setting};
use labelgan_core::gan::{select_epoch, train, LabelTranslator};
use labelgan_core::image::{read_mask_png, write_mask_png};
use labelgan_core::metrics::{evaluate_run, list_pngs, EvalOptions};
use labelgan_core::phantom::{generate_phantom_set, save_phantom_set};
use labelgan_core::pipeline::{
    emit_report, extract_patches, run_experiment, save_patches, ExperimentConfig, ImageSource, PatchExtractSpec,
};

#[derive(Parser)]
#[command(name = "labelgan", version, about = "Unsupervised segmentation by unpaired image-to-label translation")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the experiment-driven subcommands.
#[derive(Args, Clone)]
struct Common {
    /// Experiment config JSON; desk defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Annotation setting (SC, SE, MC, ME); overrides the config.
    #[arg(long)]
    setting: Option<Setting>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs; overrides the config.
    #[arg(long)]
    epochs: Option<u32>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::desk(self.setting.unwrap_or(Setting::MC)),
        };
        if let Some(s) = self.setting {
            cfg = cfg.with_setting(s);
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate label-domain patches.
    SimulateLabels {
        #[command(flatten)]
        common: Common,
        /// Number of patches; defaults to the config's label_count.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render phantom image patches with ground truth.
    Phantom {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Downscale source images and cut random patches.
    ExtractPatches {
        /// Patch extraction spec JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the translation networks.
    Train {
        #[command(flatten)]
        common: Common,
        /// Image-domain PNG directory.
        #[arg(long)]
        x_dir: PathBuf,
        /// Label-domain PNG directory.
        #[arg(long)]
        y_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate images into binary glomerulus masks.
    Translate {
        /// Checkpoint path without extension, e.g. run/train/checkpoints/epoch_003.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted masks against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Experiment config JSON; only its eval options are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the checkpoint with the best pixel F1 on validation patches.
    SelectEpoch {
        /// Directory of epoch_NNN checkpoints.
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        /// Optional JSON file for the per-epoch scores.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole experiment in a fresh timestamped directory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run all four settings.
        #[arg(long)]
        all_settings: bool,
        /// Number of repetitions (repetition index 0..n).
        #[arg(long, default_value_t = 1)]
        repetitions: u32,
        /// Output root; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect run summaries into a CSV and an SVG chart.
    Report {
        /// Run directories (each containing summary.json).
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn phantom_source(cfg: &ExperimentConfig) -> Result<(&labelgan_core::phantom::PhantomParams, &labelgan_core::annot::AnnotParams, usize)> {
    match &cfg.images {
        ImageSource::Phantom {
            params,
            geometry,
            train_count,
            ..
        } => Ok((params, geometry, *train_count)),
        ImageSource::Directory { .. } => bail!("config image source is a directory, not phantoms"),
    }
}

fn checkpoint_stems(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("epoch_") && name.ends_with(".json") && !name.ends_with("_optim.json") {
            stems.push(path.with_extension(""));
        }
    }
    stems.sort();
    if stems.is_empty() {
        bail!("no epoch_NNN checkpoints in {}", dir.display());
    }
    Ok(stems)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulateLabels { common, count, out } => {
            let cfg = common.load()?;
            let n = count.unwrap_or(cfg.label_count);
            let patches = generate_label_set(&cfg.annot, n, cfg.stage_seed("simulate"))?;
            save_label_set(&out, &patches, cfg.setting)?;
            log::info!("wrote {n} {} label patches to {}", cfg.setting, out.display());
        }
        Command::Phantom { common, count, out } => {
            let cfg = common.load()?;
            let (params, geometry, default_count) = phantom_source(&cfg)?;
            let n = count.unwrap_or(default_count);
            let patches = generate_phantom_set(geometry, params, n, cfg.stage_seed("phantom-train"))?;
            save_phantom_set(&out, &patches)?;
            log::info!("wrote {n} phantom patches to {}", out.display());
        }
        Command::ExtractPatches { config, seed, out } => {
            let raw = fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut spec: PatchExtractSpec =
                serde_json::from_slice(&raw).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let patches = extract_patches(&spec)?;
            save_patches(&out, &patches)?;
            log::info!("wrote {} patches to {}", patches.len(), out.display());
        }
        Command::Train {
            common,
            x_dir,
            y_dir,
            out,
        } => {
            let cfg = common.load()?;
            let outcome = train(&x_dir, &y_dir, &cfg.net, &cfg.train, cfg.stage_seed("train"), &out)?;
            log::info!(
                "trained {} epochs; loss log {}",
                outcome.checkpoints.len(),
                outcome.loss_log.display()
            );
        }
        Command::Translate {
            checkpoint,
            images,
            threshold,
            out,
        } => {
            let tr = LabelTranslator::load(&checkpoint)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let files = list_pngs(&images)?;
            if files.is_empty() {
                bail!("no PNG images in {}", images.display());
            }
            for path in &files {
                let img = labelgan_core::gan::select_channels(
                    labelgan_core::image::read_png(path)?,
                    tr.spec.c_x,
                    &path.display().to_string(),
                )?;
                let mask = tr.translate(&img, threshold)?;
                write_mask_png(&out.join(path.file_name().expect("listed file")), &mask)?;
            }
            log::info!("translated {} images into {}", files.len(), out.display());
        }
        Command::Evaluate { pred, gt, config, out } => {
            let opts = match config {
                Some(p) => ExperimentConfig::load(&p)?.eval,
                None => EvalOptions::default(),
            };
            let report = evaluate_run(&pred, &gt, &opts)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            report.write(&out.join("eval.json"), &out.join("eval.csv"))?;
            let a = &report.aggregate;
            println!(
                "F {:.4} P {:.4} R {:.4} | F_o {:.4} P_o {:.4} R_o {:.4}",
                a.pixel.f1, a.pixel.precision, a.pixel.recall, a.object.f1, a.object.precision, a.object.recall
            );
        }
        Command::SelectEpoch {
            checkpoints,
            images,
            gt,
            threshold,
            out,
        } => {
            let stems = checkpoint_stems(&checkpoints)?;
            let mut val_images = Vec::new();
            let mut val_gt = Vec::new();
            for path in list_pngs(&images)? {
                let name = path.file_name().expect("listed file");
                val_images.push(labelgan_core::image::read_png(&path)?);
                val_gt.push(read_mask_png(&gt.join(name)).with_context(|| {
                    format!("ground truth for {}", path.display())
                })?);
            }
            let sel = select_epoch(&stems, &val_images, &val_gt, threshold)?;
            if let Some(out) = out {
                let rows: Vec<_> = sel
                    .per_epoch
                    .iter()
                    .map(|(e, s)| serde_json::json!({"epoch": e, "pixel": s}))
                    .collect();
                let doc = serde_json::json!({"best_epoch": sel.best_epoch, "per_epoch": rows});
                fs::write(&out, serde_json::to_vec_pretty(&doc)?)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            println!("{}", sel.best_epoch);
        }
        Command::Run {
            common,
            all_settings,
            repetitions,
            out,
        } => {
            let mut base = common.load()?;
            if let Some(root) = out {
                base.output_root = root;
            }
            let settings: Vec<Setting> = if all_settings {
                Setting::ALL.to_vec()
            } else {
                vec![base.setting]
            };
            for rep in 0..repetitions {
                for &s in &settings {
                    let mut cfg = base.with_setting(s);
                    cfg.repetition = base.repetition + rep;
                    let outcome = run_experiment(&cfg)?;
                    let best = &outcome.summary.incl_optimization;
                    println!(
                        "{}\t{s}\trep {}\tbest epoch {}\tF {:.4}\tF_o {:.4}",
                        outcome.run_dir.display(),
                        cfg.repetition,
                        outcome.summary.best_epoch,
                        best.pixel.f1,
                        best.object.f1
                    );
                }
            }
        }
        Command::Report { runs, out } => {
            let outcome = emit_report(&runs, &out)?;
            println!("{} ({} rows)", outcome.csv_path.display(), outcome.rows);
            println!("{}", outcome.svg_path.display());
            if !outcome.skipped.is_empty() {
                for s in &outcome.skipped {
                    eprintln!("missing summary: {}", s.display());
                }
                bail!("{} run(s) had no summary.json", outcome.skipped.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
