//! Reference computations for the translation losses.

use labelgan_core::autodiff::{Graph, Scalar, Tensor, Var};
use labelgan_core::gan::{adversarial_loss, cycle_loss, AdvMode, Bound, Mapping, NetSpec, Network, ParamSet};
use labelgan_core::rng::stream;

use super::cases::tiny_spec;
use super::random_tensor;

/// Adds a constant to its input; `Shift(0.0)` is the identity.
pub struct Shift(pub f64);

impl Mapping for Shift {
    fn apply<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> labelgan_core::Result<Var> {
        g.affine(x, 1.0, self.0)
    }
}

pub fn l1(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.numel() as f64
}

pub fn ln_sigmoid_mean(t: &Tensor<f64>, complement: bool) -> f64 {
    let n = t.numel() as f64;
    t.data()
        .iter()
        .map(|&s| {
            let p = 1.0 / (1.0 + (-s).exp());
            (if complement { 1.0 - p } else { p }).max(1e-7).ln()
        })
        .sum::<f64>()
        / n
}

/// Runs one network in its own graph.
pub fn run(net: &Network, params: &ParamSet, x: &Tensor<f64>) -> Tensor<f64> {
    let mut g = Graph::<f64>::new();
    let p = params.attach(&mut g, false);
    let xv = g.constant(x.clone());
    let out = net.forward(&mut g, &p, xv).unwrap();
    g.value(out).clone()
}

pub struct Nets {
    pub f: Network,
    pub gen: Network,
    pub dx: Network,
    pub dy: Network,
    pub pf: ParamSet,
    pub pg: ParamSet,
    pub pdx: ParamSet,
    pub pdy: ParamSet,
}

pub fn nets(spec: &NetSpec, seed: u64) -> Nets {
    let mut rng = stream(seed, 0);
    let f = Network::generator(spec, spec.c_x, spec.c_y);
    let gen = Network::generator(spec, spec.c_y, spec.c_x);
    let dx = Network::discriminator(spec, spec.c_x);
    let dy = Network::discriminator(spec, spec.c_y);
    Nets {
        pf: f.init_params(&mut rng),
        pg: gen.init_params(&mut rng),
        pdx: dx.init_params(&mut rng),
        pdy: dy.init_params(&mut rng),
        f,
        gen,
        dx,
        dy,
    }
}

/// `|graph cycle loss - separately computed cycle loss|`.
pub fn cycle_oracle_gap(seed: u64) -> f64 {
    let spec = tiny_spec();
    let n = nets(&spec, seed);
    let x = random_tensor([1, spec.c_x, 8, 8], -1.0, 1.0, &mut stream(seed, 1));
    let y = random_tensor([1, spec.c_y, 8, 8], -1.0, 1.0, &mut stream(seed, 2));
    let expected = l1(&run(&n.gen, &n.pg, &run(&n.f, &n.pf, &x)), &x) + l1(&run(&n.f, &n.pf, &run(&n.gen, &n.pg, &y)), &y);

    let mut g = Graph::<f64>::new();
    let pf = n.pf.attach(&mut g, true);
    let pg = n.pg.attach(&mut g, true);
    let (xv, yv) = (g.constant(x), g.constant(y));
    let c = cycle_loss(&mut g, xv, yv, &Bound::new(&n.f, &pf), &Bound::new(&n.gen, &pg)).unwrap();
    (g.value(c.loss).item() - expected).abs()
}

/// Gaps of the discriminator objective and the non-saturating generator
/// loss against separately computed values.
pub fn adversarial_oracle_gaps(seed: u64) -> (f64, f64) {
    let spec = tiny_spec();
    let n = nets(&spec, seed);
    let x = random_tensor([1, spec.c_x, 16, 16], -1.0, 1.0, &mut stream(seed, 1));
    let y = random_tensor([1, spec.c_y, 16, 16], -1.0, 1.0, &mut stream(seed, 2));
    let fake_y = run(&n.f, &n.pf, &x);
    let fake_x = run(&n.gen, &n.pg, &y);
    let expected = ln_sigmoid_mean(&run(&n.dx, &n.pdx, &x), false)
        + ln_sigmoid_mean(&run(&n.dy, &n.pdy, &fake_y), true)
        + ln_sigmoid_mean(&run(&n.dx, &n.pdx, &fake_x), true)
        + ln_sigmoid_mean(&run(&n.dy, &n.pdy, &y), false);
    let expected_gen =
        -ln_sigmoid_mean(&run(&n.dy, &n.pdy, &fake_y), false) - ln_sigmoid_mean(&run(&n.dx, &n.pdx, &fake_x), false);

    let mut g = Graph::<f64>::new();
    let [pf, pg, pdx, pdy] = [&n.pf, &n.pg, &n.pdx, &n.pdy].map(|p| p.attach(&mut g, true));
    let (xv, yv) = (g.constant(x), g.constant(y));
    let t = adversarial_loss(
        &mut g,
        xv,
        yv,
        &Bound::new(&n.f, &pf),
        &Bound::new(&n.gen, &pg),
        &Bound::new(&n.dx, &pdx),
        &Bound::new(&n.dy, &pdy),
        AdvMode::Nonsaturating,
    )
    .unwrap();
    (
        (g.value(t.disc_objective).item() - expected).abs(),
        (g.value(t.gen_loss).item() - expected_gen).abs(),
    )
}

/// Discriminator objective when both discriminators have all-zero
/// parameters and therefore output probability 1/2 everywhere.
pub fn uniform_disc_objective(seed: u64) -> f64 {
    let spec = tiny_spec();
    let mut n = nets(&spec, seed);
    for p in [&mut n.pdx, &mut n.pdy] {
        for t in &mut p.tensors {
            t.data_mut().fill(0.0);
        }
    }
    let mut g = Graph::<f64>::new();
    let [pf, pg, pdx, pdy] = [&n.pf, &n.pg, &n.pdx, &n.pdy].map(|p| p.attach(&mut g, false));
    let x = g.constant(random_tensor([1, spec.c_x, 16, 16], -1.0, 1.0, &mut stream(seed, 1)));
    let y = g.constant(random_tensor([1, spec.c_y, 16, 16], -1.0, 1.0, &mut stream(seed, 2)));
    let t = adversarial_loss(
        &mut g,
        x,
        y,
        &Bound::new(&n.f, &pf),
        &Bound::new(&n.gen, &pg),
        &Bound::new(&n.dx, &pdx),
        &Bound::new(&n.dy, &pdy),
        AdvMode::Minimax,
    )
    .unwrap();
    g.value(t.disc_objective).item()
}

/// Cycle loss of `f` and `gen` on random inputs of the given shape.
pub fn mapped_cycle_loss(f: &impl Mapping, gen: &impl Mapping, shape: [usize; 4], seed: u64) -> f64 {
    let mut g = Graph::<f64>::new();
    let x = g.constant(random_tensor(shape, -1.0, 1.0, &mut stream(seed, 0)));
    let y = g.constant(random_tensor(shape, -1.0, 1.0, &mut stream(seed, 1)));
    let c = cycle_loss(&mut g, x, y, f, gen).unwrap();
    g.value(c.loss).item()
}
