use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::loss::{cycle_loss, discriminator_terms, generator_adv_loss, AdvMode, Bound, DiscScores};
use super::nets::{NetSpec, Network, ParamSet};
use crate::autodiff::{AdamConfig, AdamState, Checkpoint, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::{read_png, Image};
use crate::metrics::list_pngs;
use crate::rng::{derive_seed, stream};

/// Learning rate used in the reference setup on full-size data.
pub const REFERENCE_LR: f32 = 1e-6;

pub const NET_NAMES: [&str; 4] = ["F", "G", "D_X", "D_Y"];
const F: usize = 0;
const G: usize = 1;
const DX: usize = 2;
const DY: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epochs: u32,
    pub batch_size: usize,
    pub lambda_cyc: f32,
    pub lambda_adv: f32,
    pub augment: AugmentConfig,
    pub adv_mode: AdvMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epochs: 15,
            batch_size: 1,
            lambda_cyc: 1.0,
            lambda_adv: 1.0,
            augment: AugmentConfig::default(),
            adv_mode: AdvMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.lambda_cyc < 0.0 || self.lambda_adv < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!(
                "only batch_size 1 is supported, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// Losses of one iteration, as written to the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub cycle: f32,
    /// Discriminator objective before the update (maximized).
    pub adv_d: f32,
    /// Generator adversarial loss after the discriminator update.
    pub adv_g: f32,
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub losses: StepLosses,
    /// Parameter tensors (as `net/name`) that received no gradient.
    pub missing_grads: Vec<String>,
}

/// All four networks with their optimizer states.
#[derive(Clone, Debug, PartialEq)]
pub struct GanState {
    pub spec: NetSpec,
    pub nets: [Network; 4],
    pub params: [ParamSet; 4],
    pub adam: [AdamState; 4],
    pub epoch: u32,
    pub iteration: u64,
    pub seed: u64,
}

fn build_nets(spec: &NetSpec) -> [Network; 4] {
    [
        Network::generator(spec, spec.c_x, spec.c_y),
        Network::generator(spec, spec.c_y, spec.c_x),
        Network::discriminator(spec, spec.c_x),
        Network::discriminator(spec, spec.c_y),
    ]
}

fn collect_grads(g: &mut Graph<f32>, vars: &[Var], net: &str, names: &[String], missing: &mut Vec<String>) -> Vec<Option<Tensor>> {
    vars.iter()
        .zip(names)
        .map(|(&v, name)| {
            let grad = g.take_grad(v);
            if grad.is_none() {
                missing.push(format!("{net}/{name}"));
            }
            grad
        })
        .collect()
}

impl GanState {
    pub fn new(spec: NetSpec, adam: AdamConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        let nets = build_nets(&spec);
        let init_seed = derive_seed(seed, "init");
        let params: [ParamSet; 4] = std::array::from_fn(|k| nets[k].init_params(&mut stream(init_seed, k as u64)));
        let adam = std::array::from_fn(|k| AdamState::new(adam, &params[k].tensors));
        Ok(Self {
            spec,
            nets,
            params,
            adam,
            epoch: 0,
            iteration: 0,
            seed,
        })
    }

    pub fn set_lr(&mut self, lr: f32) {
        for a in &mut self.adam {
            a.config.lr = lr;
        }
    }

    /// One discriminator ascent step followed by one generator descent
    /// step on `lambda_adv * L_adv + lambda_cyc * L_cyc`. The fakes are
    /// computed once and reused for both steps.
    pub fn step(&mut self, x: &Tensor, y: &Tensor, cfg: &TrainConfig) -> Result<StepReport> {
        self.iteration += 1;
        let iteration = self.iteration;
        let mut missing = Vec::new();

        let mut gg = Graph::<f32>::new();
        let pf = self.params[F].attach(&mut gg, true);
        let pg = self.params[G].attach(&mut gg, true);
        let xv = gg.constant(x.clone());
        let yv = gg.constant(y.clone());
        let cyc = cycle_loss(
            &mut gg,
            xv,
            yv,
            &Bound::new(&self.nets[F], &pf),
            &Bound::new(&self.nets[G], &pg),
        )?;

        // Discriminator step on detached fakes.
        let mut gd = Graph::<f32>::new();
        let pdx = self.params[DX].attach(&mut gd, true);
        let pdy = self.params[DY].attach(&mut gd, true);
        let dx_in = gd.constant(x.clone());
        let dy_in = gd.constant(y.clone());
        let fx = gd.constant(gg.value(cyc.fake_x).clone());
        let fy = gd.constant(gg.value(cyc.fake_y).clone());
        let scores = DiscScores::compute(
            &mut gd,
            &Bound::new(&self.nets[DX], &pdx),
            &Bound::new(&self.nets[DY], &pdy),
            dx_in,
            fx,
            dy_in,
            fy,
        )?;
        let disc = discriminator_terms(&mut gd, &scores, cfg.adv_mode)?;
        let adv_d = gd.value(disc.objective).item();
        check_loss(iteration, "discriminator objective", adv_d)?;
        gd.backward(disc.loss)?;
        let grads_dx = collect_grads(&mut gd, &pdx, NET_NAMES[DX], &self.params[DX].names, &mut missing);
        let grads_dy = collect_grads(&mut gd, &pdy, NET_NAMES[DY], &self.params[DY].names, &mut missing);
        self.adam[DX].step(&mut self.params[DX].tensors, &grads_dx)?;
        self.adam[DY].step(&mut self.params[DY].tensors, &grads_dy)?;

        // Generator step against the updated discriminators.
        let qdx = self.params[DX].attach(&mut gg, false);
        let qdy = self.params[DY].attach(&mut gg, false);
        let s_fx = self.nets[DX].forward(&mut gg, &qdx, cyc.fake_x)?;
        let s_fy = self.nets[DY].forward(&mut gg, &qdy, cyc.fake_y)?;
        let adv = generator_adv_loss(&mut gg, s_fx, s_fy, cfg.adv_mode)?;
        let cycle = gg.value(cyc.loss).item();
        let adv_g = gg.value(adv).item();
        check_loss(iteration, "cycle loss", cycle)?;
        check_loss(iteration, "generator adversarial loss", adv_g)?;
        let weighted_adv = gg.affine(adv, cfg.lambda_adv as f64, 0.0)?;
        let weighted_cyc = gg.affine(cyc.loss, cfg.lambda_cyc as f64, 0.0)?;
        let total = gg.add(weighted_adv, weighted_cyc)?;
        gg.backward(total)?;
        let grads_f = collect_grads(&mut gg, &pf, NET_NAMES[F], &self.params[F].names, &mut missing);
        let grads_g = collect_grads(&mut gg, &pg, NET_NAMES[G], &self.params[G].names, &mut missing);
        self.adam[F].step(&mut self.params[F].tensors, &grads_f)?;
        self.adam[G].step(&mut self.params[G].tensors, &grads_g)?;

        Ok(StepReport {
            losses: StepLosses { cycle, adv_d, adv_g },
            missing_grads: missing,
        })
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "adam": self.adam[0].config,
            "adam_steps": self.adam.iter().map(|a| a.step).collect::<Vec<_>>(),
        })
    }

    /// Network weights only.
    pub fn weights_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for (k, set) in self.params.iter().enumerate() {
            for (name, t) in set.names.iter().zip(&set.tensors) {
                tensors.push((format!("{}/{name}", NET_NAMES[k]), t.clone()));
            }
        }
        Checkpoint {
            epoch: self.epoch,
            iteration: self.iteration,
            rng_seed: self.seed,
            meta: self.meta(),
            tensors,
        }
    }

    /// Adam first and second moments.
    pub fn optimizer_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for (k, set) in self.params.iter().enumerate() {
            let state = &self.adam[k];
            for (i, (name, t)) in set.names.iter().zip(&set.tensors).enumerate() {
                for (kind, data) in [("m", &state.m[i]), ("v", &state.v[i])] {
                    let moment = Tensor::new(t.shape(), data.clone()).expect("moment matches parameter");
                    tensors.push((format!("{}/{kind}/{name}", NET_NAMES[k]), moment));
                }
            }
        }
        Checkpoint {
            tensors,
            ..self.weights_checkpoint()
        }
    }

    /// Writes `<stem>.{bin,json}` with the weights and
    /// `<stem>_optim.{bin,json}` with the optimizer moments.
    pub fn save(&self, stem: &Path) -> Result<()> {
        self.weights_checkpoint().save(stem)?;
        self.optimizer_checkpoint().save(&optim_stem(stem))
    }

    /// Restores a state written by [`GanState::save`]. The optimizer file
    /// is optional; without it the moments start at zero.
    pub fn load(stem: &Path) -> Result<Self> {
        let weights = Checkpoint::load(stem)?;
        let spec = spec_from_meta(&weights.meta)?;
        let adam: AdamConfig = serde_json::from_value(weights.meta["adam"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad adam config in manifest: {e}")))?;
        let steps: Vec<u64> = serde_json::from_value(weights.meta["adam_steps"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad adam_steps in manifest: {e}")))?;
        let mut state = GanState::new(spec, adam, weights.rng_seed)?;
        state.epoch = weights.epoch;
        state.iteration = weights.iteration;
        for k in 0..4 {
            let names = state.params[k].names.clone();
            for (i, name) in names.iter().enumerate() {
                let key = format!("{}/{name}", NET_NAMES[k]);
                let t = take_matching(&weights, &key, state.params[k].tensors[i].shape())?;
                state.params[k].tensors[i] = t;
            }
            state.adam[k].step = steps.get(k).copied().unwrap_or(0);
        }
        let ostem = optim_stem(stem);
        if ostem.with_extension("json").exists() {
            let opt = Checkpoint::load(&ostem)?;
            for k in 0..4 {
                for (i, name) in state.params[k].names.iter().enumerate() {
                    let shape = state.params[k].tensors[i].shape();
                    let m = take_matching(&opt, &format!("{}/m/{name}", NET_NAMES[k]), shape)?;
                    let v = take_matching(&opt, &format!("{}/v/{name}", NET_NAMES[k]), shape)?;
                    state.adam[k].m[i] = m.into_data();
                    state.adam[k].v[i] = v.into_data();
                }
            }
        }
        Ok(state)
    }
}

fn optim_stem(stem: &Path) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push("_optim");
    stem.with_file_name(name)
}

fn take_matching(ck: &Checkpoint, key: &str, shape: [usize; 4]) -> Result<Tensor> {
    let t = ck
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
    if t.shape() != shape {
        return Err(Error::Checkpoint(format!(
            "tensor {key} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(t.clone())
}

pub fn spec_from_meta(meta: &serde_json::Value) -> Result<NetSpec> {
    serde_json::from_value(meta["spec"].clone())
        .map_err(|e| Error::Checkpoint(format!("bad network spec in manifest: {e}")))
}

fn check_loss(iteration: u64, what: &str, v: f32) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            iteration,
            detail: format!("{what} = {v}"),
        })
    }
}

/// Images of one domain, reduced to the requested channel count.
#[derive(Clone, Debug)]
pub struct Domain {
    pub ids: Vec<String>,
    pub images: Vec<Image>,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Keeps the first `channels` channels of `img`. Grayscale files only
/// serve 1-channel domains.
pub fn select_channels(img: Image, channels: usize, what: &str) -> Result<Image> {
    if img.channels == channels {
        return Ok(img);
    }
    if img.channels < channels || channels == 1 {
        return Err(Error::Data(format!(
            "{what}: has {} channels, expected {channels}",
            img.channels
        )));
    }
    let planes: Vec<&[f32]> = (0..channels).map(|c| img.plane(c)).collect();
    Ok(Image::from_planes(&planes, img.height, img.width))
}

pub fn load_domain(dir: &Path, channels: usize) -> Result<Domain> {
    let files = list_pngs(dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG images in {}", dir.display())));
    }
    let mut ids = Vec::with_capacity(files.len());
    let mut images = Vec::with_capacity(files.len());
    for path in files {
        let img = select_channels(read_png(&path)?, channels, &path.display().to_string())?;
        ids.push(path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string());
        images.push(img);
    }
    Ok(Domain { ids, images })
}

pub fn checkpoint_stem(dir: &Path, epoch: u32) -> PathBuf {
    dir.join(format!("epoch_{epoch:03}"))
}

pub const LOSS_LOG_HEADER: &str = "iter,L_cyc,L_adv_D,L_adv_G";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoints: Vec<PathBuf>,
    pub loss_log: PathBuf,
    pub losses: Vec<StepLosses>,
    pub state: GanState,
}

/// Run metadata stored next to the loss log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainMeta {
    pub lr: f32,
    pub reference_lr: f32,
    pub seed: u64,
    pub spec: NetSpec,
    pub config: TrainConfig,
    pub x_count: usize,
    pub y_count: usize,
}

/// Trains on in-memory domains and writes `loss_log.csv`,
/// `train_meta.json` and `checkpoints/epoch_NNN.*` under `out_dir`.
pub fn train_domains(
    xs: &Domain,
    ys: &Domain,
    spec: &NetSpec,
    cfg: &TrainConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Data("training needs at least one image in each domain".into()));
    }
    for (domain, want, name) in [(xs, spec.c_x, "image"), (ys, spec.c_y, "label")] {
        for (id, img) in domain.ids.iter().zip(&domain.images) {
            if img.channels != want {
                return Err(Error::Data(format!(
                    "{name} {id}: has {} channels, network expects {want}",
                    img.channels
                )));
            }
            let side = if cfg.augment.crop == 0 {
                img.height.min(img.width)
            } else {
                cfg.augment.crop
            };
            if cfg.augment.crop > img.height.min(img.width) {
                return Err(Error::Config(format!(
                    "crop {} exceeds {name} {id} of size {}x{}",
                    cfg.augment.crop, img.height, img.width
                )));
            }
            if side % spec.size_multiple() != 0 {
                return Err(Error::Config(format!(
                    "training size {side} must be a multiple of {}",
                    spec.size_multiple()
                )));
            }
        }
    }
    let ck_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    let meta = TrainMeta {
        lr: cfg.lr,
        reference_lr: REFERENCE_LR,
        seed,
        spec: spec.clone(),
        config: cfg.clone(),
        x_count: xs.len(),
        y_count: ys.len(),
    };
    let meta_path = out_dir.join("train_meta.json");
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::json(&meta_path, e))?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;

    let mut state = GanState::new(spec.clone(), cfg.adam(), seed)?;
    let shuffle_seed = derive_seed(seed, "shuffle");
    let augment_seed = derive_seed(seed, "augment");
    let epoch_len = xs.len().max(ys.len());
    let mut log = String::from(LOSS_LOG_HEADER);
    log.push('\n');
    let loss_log = out_dir.join("loss_log.csv");
    let mut losses = Vec::new();
    let mut checkpoints = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut order_x: Vec<usize> = (0..xs.len()).collect();
        let mut order_y: Vec<usize> = (0..ys.len()).collect();
        order_x.shuffle(&mut stream(shuffle_seed, 2 * epoch as u64));
        order_y.shuffle(&mut stream(shuffle_seed, 2 * epoch as u64 + 1));
        for i in 0..epoch_len {
            let mut rng = stream(augment_seed, state.iteration + 1);
            let x = augment(&xs.images[order_x[i % xs.len()]], &cfg.augment, &mut rng)?;
            let y = augment(&ys.images[order_y[i % ys.len()]], &cfg.augment, &mut rng)?;
            let report = state.step(&x.to_tensor(), &y.to_tensor(), cfg).map_err(|e| {
                // keep what was logged so far for diagnosis
                let _ = fs::write(&loss_log, &log);
                match e {
                    Error::NonFinite { op } => Error::NonFiniteLoss {
                        iteration: state.iteration,
                        detail: format!("non-finite values produced by {op}"),
                    },
                    other => other,
                }
            })?;
            let l = report.losses;
            let _ = writeln!(log, "{},{},{},{}", state.iteration, l.cycle, l.adv_d, l.adv_g);
            losses.push(l);
            if state.iteration % 50 == 0 {
                log::info!(
                    "epoch {epoch} iter {}: L_cyc {:.4} L_adv_D {:.4} L_adv_G {:.4}",
                    state.iteration,
                    l.cycle,
                    l.adv_d,
                    l.adv_g
                );
            }
        }
        state.epoch = epoch;
        let stem = checkpoint_stem(&ck_dir, epoch);
        state.save(&stem)?;
        checkpoints.push(stem);
        fs::write(&loss_log, &log).map_err(|e| Error::io(&loss_log, e))?;
    }
    Ok(TrainOutcome {
        checkpoints,
        loss_log,
        losses,
        state,
    })
}

pub fn train(x_dir: &Path, y_dir: &Path, spec: &NetSpec, cfg: &TrainConfig, seed: u64, out_dir: &Path) -> Result<TrainOutcome> {
    let xs = load_domain(x_dir, spec.c_x)?;
    let ys = load_domain(y_dir, spec.c_y)?;
    train_domains(&xs, &ys, spec, cfg, seed, out_dir)
}
