mod common;

use common::cases::tiny_spec;
use common::gan::{
    adversarial_oracle_gaps, cycle_oracle_gap, mapped_cycle_loss, nets, run, uniform_disc_objective, Shift,
};
use common::random_tensor;
use labelgan_core::annot::{generate_label_set, AnnotParams, Setting};
use labelgan_core::autodiff::{Graph, Tensor};
use labelgan_core::gan::{
    apply_ops, discriminator_terms, train_domains, AdvMode, AugmentConfig, AugmentOps, Bound, DiscScores, Domain,
    ParamSet, TrainConfig, LOSS_LOG_HEADER,
};
use labelgan_core::image::Image;
use labelgan_core::phantom::{generate_phantom_set, PhantomParams};
use labelgan_core::rng::stream;
use proptest::prelude::*;

#[test]
fn identity_generators_have_zero_cycle_loss() {
    assert_eq!(mapped_cycle_loss(&Shift(0.0), &Shift(0.0), [1, 2, 8, 8], 1), 0.0);
}

#[test]
fn offset_generator_costs_twice_the_offset() {
    for delta in [0.25, -0.8, 1.5] {
        let got = mapped_cycle_loss(&Shift(delta), &Shift(0.0), [1, 2, 8, 8], 2);
        assert!((got - 2.0 * f64::abs(delta)).abs() < 1e-12);
    }
}

#[test]
fn cycle_loss_matches_separate_passes() {
    for seed in 3..6 {
        assert!(cycle_oracle_gap(seed) < 1e-6);
    }
}

#[test]
fn adversarial_terms_match_separate_passes() {
    for seed in 6..9 {
        let (d, g) = adversarial_oracle_gaps(seed);
        assert!(d < 1e-6 && g < 1e-6, "{d} {g}");
    }
}

#[test]
fn zeroed_discriminators_give_four_log_half() {
    assert!((uniform_disc_objective(5) - 4.0 * 0.5f64.ln()).abs() < 1e-6);
}

/// A small gradient-ascent step on the discriminator parameters raises
/// the objective.
#[test]
fn discriminator_ascent_raises_objective() {
    let spec = tiny_spec();
    let mut improved = 0;
    for trial in 0..20 {
        let n = nets(&spec, 100 + trial);
        let x = random_tensor([1, spec.c_x, 16, 16], -1.0, 1.0, &mut stream(100 + trial, 1));
        let y = random_tensor([1, spec.c_y, 16, 16], -1.0, 1.0, &mut stream(100 + trial, 2));
        let fake_y = run(&n.f, &n.pf, &x);
        let fake_x = run(&n.gen, &n.pg, &y);
        let objective = |pdx: &ParamSet, pdy: &ParamSet, with_grad: bool| {
            let mut g = Graph::<f64>::new();
            let vx = pdx.attach(&mut g, with_grad);
            let vy = pdy.attach(&mut g, with_grad);
            let [xv, fxv, yv, fyv] = [&x, &fake_x, &y, &fake_y].map(|t| g.constant(t.clone()));
            let s = DiscScores::compute(&mut g, &Bound::new(&n.dx, &vx), &Bound::new(&n.dy, &vy), xv, fxv, yv, fyv).unwrap();
            let d = discriminator_terms(&mut g, &s, AdvMode::Nonsaturating).unwrap();
            let value = g.value(d.objective).item();
            let grads = if with_grad {
                g.backward(d.loss).unwrap();
                Some((
                    vx.iter().map(|&v| g.grad(v).unwrap().clone()).collect::<Vec<_>>(),
                    vy.iter().map(|&v| g.grad(v).unwrap().clone()).collect::<Vec<_>>(),
                ))
            } else {
                None
            };
            (value, grads)
        };
        let (before, grads) = objective(&n.pdx, &n.pdy, true);
        let (gx, gy) = grads.unwrap();
        let step = |p: &ParamSet, grads: &[Tensor<f64>]| {
            let mut q = p.clone();
            for (t, gr) in q.tensors.iter_mut().zip(grads) {
                for (v, d) in t.data_mut().iter_mut().zip(gr.data()) {
                    *v -= (1e-3 * d) as f32;
                }
            }
            q
        };
        let (after, _) = objective(&step(&n.pdx, &gx), &step(&n.pdy, &gy), false);
        if after > before {
            improved += 1;
        }
    }
    assert!(improved >= 18, "{improved}/20");
}

fn tiny_domains(n: usize, seed: u64) -> (Domain, Domain) {
    let mut annot = AnnotParams::desk(Setting::MC);
    annot.patch_size = [64, 64];
    annot.mu_g = 1.5;
    annot.mu_r = 9.0;
    annot.mu_n = 80.0;
    annot.sigma_n = 5.0;
    let xs = generate_phantom_set(&annot, &PhantomParams::stain_a(), n, seed).unwrap();
    let ys = generate_label_set(&annot, n, seed + 1).unwrap();
    (
        Domain {
            ids: (0..n).map(|i| format!("x{i}")).collect(),
            images: xs.iter().map(|p| p.image.quantized()).collect(),
        },
        Domain {
            ids: (0..n).map(|i| format!("y{i}")).collect(),
            images: ys.iter().map(|p| p.to_image().quantized()).collect(),
        },
    )
}

fn tiny_train_config(epochs: u32) -> TrainConfig {
    TrainConfig {
        epochs,
        augment: AugmentConfig { crop: 32, ..AugmentConfig::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn short_training_writes_log_and_checkpoints() {
    let (xs, ys) = tiny_domains(4, 7);
    let mut spec = tiny_spec();
    spec.c_y = 2;
    let dir = tempfile::tempdir().unwrap();
    let out = train_domains(&xs, &ys, &spec, &tiny_train_config(2), 9, dir.path()).unwrap();
    assert_eq!(out.checkpoints.len(), 2);
    assert!(out.checkpoints.iter().all(|c| c.with_extension("bin").exists()));
    let log = std::fs::read_to_string(&out.loss_log).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some(LOSS_LOG_HEADER));
    assert_eq!(lines.count(), 8);
    assert!(out.losses.iter().all(|l| l.cycle.is_finite() && l.adv_d.is_finite() && l.adv_g.is_finite()));
    assert!(dir.path().join("train_meta.json").exists());
}

#[test]
fn training_is_deterministic() {
    let (xs, ys) = tiny_domains(3, 8);
    let spec = tiny_spec();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = train_domains(&xs, &ys, &spec, &tiny_train_config(1), 10, a.path()).unwrap();
    let rb = train_domains(&xs, &ys, &spec, &tiny_train_config(1), 10, b.path()).unwrap();
    assert_eq!(std::fs::read(&ra.loss_log).unwrap(), std::fs::read(&rb.loss_log).unwrap());
    assert_eq!(
        std::fs::read(ra.checkpoints[0].with_extension("bin")).unwrap(),
        std::fs::read(rb.checkpoints[0].with_extension("bin")).unwrap()
    );
    let rc = train_domains(&xs, &ys, &spec, &tiny_train_config(1), 11, a.path().join("other").as_path()).unwrap();
    assert_ne!(ra.losses, rc.losses);
}

#[test]
fn mismatched_domain_channels_rejected() {
    let (xs, ys) = tiny_domains(2, 9);
    let mut spec = tiny_spec();
    spec.c_y = 1;
    let dir = tempfile::tempdir().unwrap();
    assert!(train_domains(&xs, &ys, &spec, &tiny_train_config(1), 1, dir.path()).is_err());
}

fn sorted_values(img: &Image) -> Vec<u32> {
    let mut v: Vec<u32> = img.data.iter().map(|x| x.to_bits()).collect();
    v.sort_unstable();
    v
}

proptest! {
    #[test]
    fn flips_and_turns_permute_pixels(h in 1usize..9, w in 1usize..9, hflip: bool, vflip: bool, turns in 0u8..4, seed: u64) {
        let mut rng = stream(seed, 0);
        let img = Image { channels: 2, height: h, width: w, data: (0..2 * h * w).map(|_| rand::Rng::random::<f32>(&mut rng)).collect() };
        let ops = AugmentOps { hflip, vflip, quarter_turns: turns, crop: None };
        let out = apply_ops(&img, &ops).unwrap();
        if turns % 2 == 1 {
            prop_assert_eq!((out.height, out.width), (w, h));
        } else {
            prop_assert_eq!((out.height, out.width), (h, w));
        }
        prop_assert_eq!(sorted_values(&out), sorted_values(&img));
    }
}
