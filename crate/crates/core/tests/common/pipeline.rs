//! Small experiment configurations for end-to-end tests.

use std::path::Path;

use labelgan_core::annot::Setting;
use labelgan_core::gan::AugmentConfig;
use labelgan_core::pipeline::{ExperimentConfig, ImageSource};

/// A run that finishes in seconds: 64 px patches, 32 px crops, a narrow
/// network and two epochs.
pub fn small_config(setting: Setting, root: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(setting);
    cfg.annot.patch_size = [64, 64];
    cfg.annot.mu_g = 2.0;
    cfg.annot.mu_r = 9.0;
    cfg.annot.mu_n = 80.0;
    cfg.annot.sigma_n = 5.0;
    if let ImageSource::Phantom {
        geometry,
        train_count,
        test_count,
        ..
    } = &mut cfg.images
    {
        *geometry = cfg.annot.clone();
        geometry.setting = Setting::SE;
        *train_count = 4;
        *test_count = 3;
    }
    cfg.net.gen_width = 4;
    cfg.net.disc_width = 4;
    cfg.net.n_res_blocks = 1;
    cfg.train.epochs = 2;
    cfg.train.augment = AugmentConfig {
        crop: 32,
        ..AugmentConfig::default()
    };
    cfg.label_count = 4;
    cfg.seed = 17;
    cfg.output_root = root.to_path_buf();
    cfg
}
