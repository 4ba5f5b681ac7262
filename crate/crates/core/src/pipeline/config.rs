use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annot::{AnnotParams, Setting};
use crate::error::{Error, Result};
use crate::gan::{NetSpec, TrainConfig};
use crate::metrics::EvalOptions;
use crate::phantom::PhantomParams;

/// Where image-domain patches come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageSource {
    /// Rendered phantoms. `geometry` fixes the glomerulus law and patch
    /// size of the phantoms independently of the label setting, so runs
    /// in different settings see the same images.
    Phantom {
        params: PhantomParams,
        geometry: AnnotParams,
        train_count: usize,
        test_count: usize,
    },
    /// Pre-extracted patches on disk. `test_gt` holds one mask PNG per test
    /// image, optionally with a shape sidecar.
    Directory {
        train_images: PathBuf,
        test_images: PathBuf,
        test_gt: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub annot: AnnotParams,
    pub images: ImageSource,
    pub net: NetSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalOptions,
    /// Number of simulated label patches.
    pub label_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub repetition: u32,
    pub output_root: PathBuf,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 128 px patches, 64 px crops, 100 label and 100
    /// phantom patches, 10 epochs, width 16.
    pub fn desk(setting: Setting) -> Self {
        let geometry = AnnotParams::desk(Setting::SE);
        Self {
            setting,
            annot: AnnotParams::desk(setting),
            images: ImageSource::Phantom {
                params: PhantomParams::stain_a(),
                geometry,
                train_count: 100,
                test_count: 21,
            },
            net: NetSpec::desk(setting.label_channels()),
            train: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            eval: EvalOptions::default(),
            label_count: 100,
            seed: 0,
            repetition: 0,
            output_root: PathBuf::from("runs"),
        }
    }

    /// Same experiment in another setting: swaps the label model and the
    /// label channel count, everything else is kept.
    pub fn with_setting(&self, setting: Setting) -> Self {
        let mut c = self.clone();
        c.setting = setting;
        c.annot.setting = setting;
        c.net.c_y = setting.label_channels();
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.annot.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        if self.annot.setting != self.setting {
            return Err(Error::Config(format!(
                "annot.setting {} differs from setting {}",
                self.annot.setting, self.setting
            )));
        }
        if self.net.c_y != self.setting.label_channels() {
            return Err(Error::Config(format!(
                "setting {} needs {} label channels, net.c_y is {}",
                self.setting,
                self.setting.label_channels(),
                self.net.c_y
            )));
        }
        if self.label_count == 0 {
            return Err(Error::Config("label_count must be >= 1".into()));
        }
        match &self.images {
            ImageSource::Phantom {
                params,
                geometry,
                train_count,
                test_count,
            } => {
                params.validate()?;
                geometry.validate()?;
                if *train_count == 0 || *test_count < 2 {
                    return Err(Error::Config(
                        "phantom source needs train_count >= 1 and test_count >= 2 (one is held out for validation)"
                            .into(),
                    ));
                }
                if self.net.c_x != 3 {
                    return Err(Error::Config("phantoms are RGB; net.c_x must be 3".into()));
                }
            }
            ImageSource::Directory {
                train_images,
                test_images,
                test_gt,
            } => {
                for p in [train_images, test_images, test_gt] {
                    if !p.is_dir() {
                        return Err(Error::Config(format!("directory {} does not exist", p.display())));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&raw).map_err(|e| Error::json(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("<config>", e))
    }

    /// Stage seed: a hash of the master seed, the repetition and the
    /// stage name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        crate::rng::derive_seed(self.seed, &format!("{stage}/rep{}", self.repetition))
    }
}
