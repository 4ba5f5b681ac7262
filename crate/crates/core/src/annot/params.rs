use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotation-simulation setting: single/multi-class crossed with
/// circular/elliptic object shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    SC,
    SE,
    MC,
    ME,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::SC, Setting::SE, Setting::MC, Setting::ME];

    pub fn is_elliptic(self) -> bool {
        matches!(self, Setting::SE | Setting::ME)
    }

    pub fn is_multi_class(self) -> bool {
        matches!(self, Setting::MC | Setting::ME)
    }

    /// Channels of a label patch in this setting.
    pub fn label_channels(self) -> usize {
        if self.is_multi_class() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setting::SC => "SC",
            Setting::SE => "SE",
            Setting::MC => "MC",
            Setting::ME => "ME",
        };
        f.write_str(s)
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SC" => Ok(Setting::SC),
            "SE" => Ok(Setting::SE),
            "MC" => Ok(Setting::MC),
            "ME" => Ok(Setting::ME),
            other => Err(Error::Config(format!("unknown setting {other:?} (expected SC, SE, MC or ME)"))),
        }
    }
}

/// Object-model parameters. Lengths are in pixels, noise in 8-bit
/// intensity units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotParams {
    /// Expected glomeruli per patch.
    pub mu_g: f64,
    pub sigma_g: f64,
    /// Circle radius law.
    pub mu_r: f64,
    pub sigma_r: f64,
    /// Spread of the ellipse semi-axis difference.
    pub sigma_e: f64,
    /// Expected nuclei per patch.
    pub mu_n: f64,
    pub sigma_n: f64,
    /// Nucleus diameter.
    pub d_n: f64,
    /// Additive noise std on the 0..255 scale.
    pub sigma_fn: f64,
    /// Gaussian smoothing std.
    pub sigma_fs: f64,
    /// `(height, width)`.
    pub patch_size: [usize; 2],
    pub setting: Setting,
    #[serde(default = "default_attempts")]
    pub max_placement_attempts: u32,
}

fn default_attempts() -> u32 {
    100
}

impl AnnotParams {
    /// Values used for the 500x500 renal patches.
    pub fn reference(setting: Setting) -> Self {
        Self {
            mu_g: 7.0,
            sigma_g: 2.0,
            mu_r: 18.0,
            sigma_r: 2.0,
            sigma_e: 2.0,
            mu_n: 5000.0,
            sigma_n: 50.0,
            d_n: 4.0,
            sigma_fn: 5.0,
            sigma_fs: 2.0,
            patch_size: [500, 500],
            setting,
            max_placement_attempts: default_attempts(),
        }
    }

    /// Laptop-scale defaults on 128x128 patches: fewer but similarly sized
    /// objects and a nuclei count scaled with patch area.
    pub fn desk(setting: Setting) -> Self {
        Self {
            mu_g: 3.0,
            sigma_g: 1.0,
            mu_r: 12.0,
            sigma_r: 2.0,
            sigma_e: 2.0,
            mu_n: 330.0,
            sigma_n: 15.0,
            d_n: 4.0,
            sigma_fn: 5.0,
            sigma_fs: 1.5,
            patch_size: [128, 128],
            setting,
            max_placement_attempts: default_attempts(),
        }
    }

    pub fn height(&self) -> usize {
        self.patch_size[0]
    }

    pub fn width(&self) -> usize {
        self.patch_size[1]
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("sigma_g", self.sigma_g),
            ("sigma_r", self.sigma_r),
            ("sigma_e", self.sigma_e),
            ("sigma_n", self.sigma_n),
            ("sigma_fn", self.sigma_fn),
            ("sigma_fs", self.sigma_fs),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        for (name, v) in [("mu_g", self.mu_g), ("mu_r", self.mu_r), ("d_n", self.d_n)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.mu_n >= 0.0 && self.mu_n.is_finite()) {
            return Err(Error::Config(format!("mu_n must be >= 0, got {}", self.mu_n)));
        }
        let min_side = 2.0 * (self.mu_r + 3.0 * self.sigma_r);
        if (self.height().min(self.width()) as f64) <= min_side {
            return Err(Error::Config(format!(
                "patch {:?} must exceed {min_side} px on each side",
                self.patch_size
            )));
        }
        if self.max_placement_attempts == 0 {
            return Err(Error::Config("max_placement_attempts must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for s in Setting::ALL {
            AnnotParams::reference(s).validate().unwrap();
            AnnotParams::desk(s).validate().unwrap();
        }
    }

    #[test]
    fn rejects_small_patch_and_negative_sigma() {
        let mut p = AnnotParams::reference(Setting::SC);
        p.patch_size = [48, 500];
        assert!(p.validate().is_err());
        let mut p = AnnotParams::reference(Setting::SC);
        p.sigma_e = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn setting_parse_and_channels() {
        assert_eq!("me".parse::<Setting>().unwrap(), Setting::ME);
        assert!("XX".parse::<Setting>().is_err());
        assert_eq!(Setting::SE.label_channels(), 1);
        assert_eq!(Setting::MC.label_channels(), 2);
    }

    #[test]
    fn json_defaults_attempts() {
        let mut v = serde_json::to_value(AnnotParams::reference(Setting::MC)).unwrap();
        v.as_object_mut().unwrap().remove("max_placement_attempts");
        let p: AnnotParams = serde_json::from_value(v).unwrap();
        assert_eq!(p.max_placement_attempts, 100);
    }
}
