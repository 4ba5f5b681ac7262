use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ImageSource};
use crate::annot::{generate_label_set, patch_id, save_label_set, Setting};
use crate::error::{Error, Result};
use crate::gan::{best_index, load_domain, train_domains, Domain, LabelTranslator};
use crate::image::{read_png, write_mask_png, Image, Mask};
use crate::metrics::{list_pngs, load_ground_truth, score_patch, EvalReport, GroundTruth, Scores};
use crate::phantom::{generate_phantom_set, phantom_id, save_phantom_set};

/// Test-set scores of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochScores {
    pub epoch: u32,
    /// Pixel scores on the held-out validation patch.
    pub validation: Scores,
    /// Pooled test scores, validation patch excluded.
    pub pixel: Scores,
    pub object: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalScores {
    pub epoch: u32,
    pub pixel: Scores,
    pub object: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub setting: Setting,
    pub repetition: u32,
    pub seed: u64,
    pub validation_id: String,
    pub test_count: usize,
    pub epochs: Vec<EpochScores>,
    /// Epoch chosen on the validation patch.
    pub best_epoch: u32,
    /// Scores at the chosen epoch.
    pub incl_optimization: FinalScores,
    /// Scores after the last epoch.
    pub excl_optimization: FinalScores,
    /// Highest test object F1 over all epochs.
    pub max_object_f1: f64,
}

impl Summary {
    pub fn read(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&raw).map_err(|e| Error::json(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub summary: Summary,
}

/// Creates `<root>/<label>_<UTC timestamp>`, adding a numeric suffix if
/// that name is taken. Existing directories are never reused.
pub fn new_run_dir(root: &Path, label: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    for k in 0u32.. {
        let name = if k == 0 {
            format!("{label}_{stamp}")
        } else {
            format!("{label}_{stamp}-{k}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Held-out test data with ground truth; entry 0 is the validation patch.
struct TestSet {
    ids: Vec<String>,
    images: Vec<Image>,
    truth: Vec<GroundTruth>,
}

fn simulate_stage(cfg: &ExperimentConfig, run_dir: &Path) -> Result<Domain> {
    let patches = generate_label_set(&cfg.annot, cfg.label_count, cfg.stage_seed("simulate"))?;
    save_label_set(&run_dir.join("labels"), &patches, cfg.setting)?;
    Ok(Domain {
        ids: (0..patches.len()).map(patch_id).collect(),
        images: patches.iter().map(|p| p.to_image().quantized()).collect(),
    })
}

fn image_stage(cfg: &ExperimentConfig, run_dir: &Path) -> Result<(Domain, TestSet)> {
    match &cfg.images {
        ImageSource::Phantom {
            params,
            geometry,
            train_count,
            test_count,
        } => {
            let train = generate_phantom_set(geometry, params, *train_count, cfg.stage_seed("phantom-train"))?;
            let test = generate_phantom_set(geometry, params, *test_count, cfg.stage_seed("phantom-test"))?;
            save_phantom_set(&run_dir.join("phantoms/train"), &train)?;
            save_phantom_set(&run_dir.join("phantoms/test"), &test)?;
            let xs = Domain {
                ids: (0..train.len()).map(phantom_id).collect(),
                images: train.iter().map(|p| p.image.quantized()).collect(),
            };
            let tests = TestSet {
                ids: (0..test.len()).map(phantom_id).collect(),
                images: test.iter().map(|p| p.image.quantized()).collect(),
                truth: test
                    .iter()
                    .map(|p| GroundTruth::from_shapes(p.gt_mask.clone(), &p.shapes))
                    .collect(),
            };
            Ok((xs, tests))
        }
        ImageSource::Directory {
            train_images,
            test_images,
            test_gt,
        } => {
            let xs = load_domain(train_images, cfg.net.c_x)?;
            let mut tests = TestSet {
                ids: Vec::new(),
                images: Vec::new(),
                truth: Vec::new(),
            };
            for path in list_pngs(test_images)? {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                let what = path.display().to_string();
                let img = crate::gan::select_channels(read_png(&path)?, cfg.net.c_x, &what)?;
                tests.truth.push(load_ground_truth(test_gt, &name)?);
                tests.ids.push(name.trim_end_matches(".png").to_string());
                tests.images.push(img);
            }
            if tests.ids.len() < 2 {
                return Err(Error::Data(format!(
                    "{} needs at least two test images (one is held out for validation)",
                    test_images.display()
                )));
            }
            Ok((xs, tests))
        }
    }
}

fn evaluate_stage(cfg: &ExperimentConfig, run_dir: &Path, stems: &[PathBuf], tests: &TestSet) -> Result<Vec<EpochScores>> {
    let eval_dir = run_dir.join("eval");
    fs::create_dir_all(&eval_dir).map_err(|e| Error::io(&eval_dir, e))?;
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let tr = LabelTranslator::load(stem)?;
        let pred_dir = run_dir.join(format!("predictions/epoch_{:03}", tr.epoch));
        fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
        let mut masks: Vec<Mask> = Vec::with_capacity(tests.images.len());
        for (id, img) in tests.ids.iter().zip(&tests.images) {
            let m = tr.translate(img, cfg.eval.threshold)?;
            write_mask_png(&pred_dir.join(format!("{id}.png")), &m)?;
            masks.push(m);
        }
        let validation = score_patch(&tests.ids[0], &masks[0], &tests.truth[0], &cfg.eval)?.pixel;
        let mut per_patch = Vec::with_capacity(masks.len() - 1);
        for i in 1..masks.len() {
            per_patch.push(score_patch(&tests.ids[i], &masks[i], &tests.truth[i], &cfg.eval)?);
        }
        let report = EvalReport::from_patches(cfg.eval, per_patch);
        let name = format!("epoch_{:03}", tr.epoch);
        report.write(
            &eval_dir.join(format!("{name}.json")),
            &eval_dir.join(format!("{name}.csv")),
        )?;
        log::info!(
            "epoch {}: val F {:.3}, test F {:.3}, F_o {:.3}",
            tr.epoch,
            validation.f1,
            report.aggregate.pixel.f1,
            report.aggregate.object.f1
        );
        out.push(EpochScores {
            epoch: tr.epoch,
            validation,
            pixel: report.aggregate.pixel,
            object: report.aggregate.object,
        });
    }
    Ok(out)
}

/// Builds the summary from per-epoch scores: the chosen epoch maximizes
/// validation pixel F1 (earliest on ties).
pub fn summarize(cfg: &ExperimentConfig, validation_id: &str, test_count: usize, epochs: Vec<EpochScores>) -> Result<Summary> {
    let val: Vec<f64> = epochs.iter().map(|e| e.validation.f1).collect();
    let best = best_index(&val).ok_or_else(|| Error::Data("no epochs to summarize".into()))?;
    let last = epochs.len() - 1;
    let pick = |i: usize| FinalScores {
        epoch: epochs[i].epoch,
        pixel: epochs[i].pixel,
        object: epochs[i].object,
    };
    Ok(Summary {
        setting: cfg.setting,
        repetition: cfg.repetition,
        seed: cfg.seed,
        validation_id: validation_id.to_string(),
        test_count,
        best_epoch: epochs[best].epoch,
        incl_optimization: pick(best),
        excl_optimization: pick(last),
        max_object_f1: epochs.iter().map(|e| e.object.f1).fold(0.0, f64::max),
        epochs,
    })
}

/// Runs every stage inside an existing directory and writes
/// `summary.json` there.
pub fn run_in_dir(cfg: &ExperimentConfig, run_dir: &Path) -> Result<Summary> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let ys = simulate_stage(cfg, run_dir).map_err(|e| e.in_stage("simulate"))?;
    let (xs, tests) = image_stage(cfg, run_dir).map_err(|e| e.in_stage("images"))?;
    let trained = train_domains(
        &xs,
        &ys,
        &cfg.net,
        &cfg.train,
        cfg.stage_seed("train"),
        &run_dir.join("train"),
    )
    .map_err(|e| e.in_stage("train"))?;
    let epochs = evaluate_stage(cfg, run_dir, &trained.checkpoints, &tests).map_err(|e| e.in_stage("evaluate"))?;
    let summary = summarize(cfg, &tests.ids[0], tests.ids.len() - 1, epochs).map_err(|e| e.in_stage("select"))?;
    summary.write(&run_dir.join("summary.json")).map_err(|e| e.in_stage("report"))?;
    Ok(summary)
}

/// Creates a fresh timestamped run directory under `output_root`, copies
/// the config into it and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let label = format!("{}_rep{}", cfg.setting, cfg.repetition);
    let run_dir = new_run_dir(&cfg.output_root, &label).map_err(|e| e.in_stage("setup"))?;
    let config_path = run_dir.join("config.json");
    fs::write(&config_path, cfg.to_json()?)
        .map_err(|e| Error::io(&config_path, e).in_stage("setup"))?;
    let summary = run_in_dir(cfg, &run_dir)?;
    Ok(RunOutcome { run_dir, summary })
}
