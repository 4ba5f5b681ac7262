//! Gradient-check cases: one per op and shape, plus composed networks.

use labelgan_core::autodiff::{Graph, Tensor, Var};
use labelgan_core::gan::{NetSpec, Network};
use labelgan_core::rng::stream;
use rand::Rng;

use super::{random_tensor, Build};

pub struct Case {
    pub name: String,
    pub build: Box<Build>,
    pub inputs: Vec<Tensor<f64>>,
}

/// Reduces `out` to a scalar with a random quadratic so every output
/// coordinate gets a distinct, smooth weight.
fn project(g: &mut Graph<f64>, out: Var, target: &Tensor<f64>) -> Var {
    let c = g.constant(target.clone());
    let d = g.sub(out, c).unwrap();
    g.squared_error_mean(d, 0.0).unwrap()
}

fn unary(
    name: &str,
    shape: [usize; 4],
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
    op: fn(&mut Graph<f64>, Var) -> Var,
) -> Case {
    let target = random_tensor(shape, -1.0, 1.0, rng);
    Case {
        name: format!("{name} {shape:?}"),
        build: Box::new(move |g, v| {
            let out = op(g, v[0]);
            project(g, out, &target)
        }),
        inputs: vec![random_tensor(shape, lo, hi, rng)],
    }
}

pub fn op_cases(seed: u64) -> Vec<Case> {
    let mut rng = stream(seed, 0);
    let rng = &mut rng;
    let shapes = [[1, 1, 3, 3], [2, 3, 4, 5], [1, 4, 6, 2]];
    let mut cases = Vec::new();

    for shape in shapes {
        cases.push(unary("relu", shape, -1.0, 1.0, rng, |g, x| g.relu(x).unwrap()));
        cases.push(unary("leaky_relu", shape, -1.0, 1.0, rng, |g, x| g.leaky_relu(x, 0.2).unwrap()));
        cases.push(unary("tanh", shape, -2.0, 2.0, rng, |g, x| g.tanh(x).unwrap()));
        cases.push(unary("sigmoid", shape, -3.0, 3.0, rng, |g, x| g.sigmoid(x).unwrap()));
        cases.push(unary("affine", shape, -1.0, 1.0, rng, |g, x| g.affine(x, -1.7, 0.3).unwrap()));
        cases.push(unary("log_clamped", shape, 0.05, 1.0, rng, |g, x| g.log_clamped(x, 1e-7).unwrap()));

        let other = random_tensor(shape, -1.0, 1.0, rng);
        let target = random_tensor(shape, -1.0, 1.0, rng);
        let t2 = target.clone();
        cases.push(Case {
            name: format!("add {shape:?}"),
            build: Box::new(move |g, v| {
                let out = g.add(v[0], v[1]).unwrap();
                project(g, out, &target)
            }),
            inputs: vec![random_tensor(shape, -1.0, 1.0, rng), other.clone()],
        });
        cases.push(Case {
            name: format!("sub {shape:?}"),
            build: Box::new(move |g, v| {
                let out = g.sub(v[0], v[1]).unwrap();
                project(g, out, &t2)
            }),
            inputs: vec![random_tensor(shape, -1.0, 1.0, rng), other],
        });
        cases.push(Case {
            name: format!("l1_mean {shape:?}"),
            build: Box::new(|g, v| g.l1_mean(v[0], v[1]).unwrap()),
            inputs: vec![random_tensor(shape, -1.0, 1.0, rng), random_tensor(shape, -1.0, 1.0, rng)],
        });
        cases.push(Case {
            name: format!("squared_error_mean {shape:?}"),
            build: Box::new(|g, v| g.squared_error_mean(v[0], 0.7).unwrap()),
            inputs: vec![random_tensor(shape, -1.0, 1.0, rng)],
        });
        cases.push(Case {
            name: format!("mean/sum/add_all {shape:?}"),
            build: Box::new(|g, v| {
                let t = g.tanh(v[0]).unwrap();
                let m = g.mean(t).unwrap();
                let s = g.sum(v[0]).unwrap();
                let s = g.affine(s, 0.1, 0.0).unwrap();
                let sq = g.squared_error_mean(v[0], 0.0).unwrap();
                g.add_all(&[m, s, sq]).unwrap()
            }),
            inputs: vec![random_tensor(shape, -1.0, 1.0, rng)],
        });
    }

    for [n, c, h, w] in [[1, 2, 5, 5], [2, 3, 6, 4], [1, 1, 7, 7]] {
        let target = random_tensor([n, c, h, w], -1.0, 1.0, rng);
        cases.push(Case {
            name: format!("instance_norm {:?}", [n, c, h, w]),
            build: Box::new(move |g, v| {
                let out = g.instance_norm(v[0], v[1], v[2], 1e-5).unwrap();
                project(g, out, &target)
            }),
            inputs: vec![
                random_tensor([n, c, h, w], -2.0, 2.0, rng),
                random_tensor([1, c, 1, 1], 0.5, 1.5, rng),
                random_tensor([1, c, 1, 1], -0.5, 0.5, rng),
            ],
        });
    }

    // (input shape, out channels, kernel, stride, padding)
    let convs = [
        ([1, 2, 5, 5], 3, 3, 1, 1),
        ([2, 3, 8, 6], 2, 4, 2, 1),
        ([1, 1, 9, 9], 2, 7, 1, 3),
        ([1, 2, 7, 7], 2, 3, 2, 0),
    ];
    for (shape, co, k, s, p) in convs {
        let ci = shape[1];
        let mut g0 = Graph::<f64>::new();
        let x0 = g0.constant(Tensor::zeros(shape));
        let w0 = g0.constant(Tensor::zeros([co, ci, k, k]));
        let b0 = g0.constant(Tensor::zeros([1, co, 1, 1]));
        let o = g0.conv2d(x0, w0, b0, s, p).unwrap();
        let out_shape = g0.value(o).shape();
        let target = random_tensor(out_shape, -1.0, 1.0, rng);
        cases.push(Case {
            name: format!("conv2d {shape:?} -> {co} k{k} s{s} p{p}"),
            build: Box::new(move |g, v| {
                let out = g.conv2d(v[0], v[1], v[2], s, p).unwrap();
                project(g, out, &target)
            }),
            inputs: vec![
                random_tensor(shape, -1.0, 1.0, rng),
                random_tensor([co, ci, k, k], -0.5, 0.5, rng),
                random_tensor([1, co, 1, 1], -0.5, 0.5, rng),
            ],
        });
    }

    let convts = [
        ([1, 2, 3, 3], 3, 4, 2, 1),
        ([2, 3, 4, 2], 2, 3, 1, 1),
        ([1, 1, 3, 4], 2, 3, 2, 0),
    ];
    for (shape, co, k, s, p) in convts {
        let ci = shape[1];
        let mut g0 = Graph::<f64>::new();
        let x0 = g0.constant(Tensor::zeros(shape));
        let w0 = g0.constant(Tensor::zeros([ci, co, k, k]));
        let b0 = g0.constant(Tensor::zeros([1, co, 1, 1]));
        let o = g0.conv2d_transpose(x0, w0, b0, s, p).unwrap();
        let out_shape = g0.value(o).shape();
        let target = random_tensor(out_shape, -1.0, 1.0, rng);
        cases.push(Case {
            name: format!("conv2d_transpose {shape:?} -> {co} k{k} s{s} p{p}"),
            build: Box::new(move |g, v| {
                let out = g.conv2d_transpose(v[0], v[1], v[2], s, p).unwrap();
                project(g, out, &target)
            }),
            inputs: vec![
                random_tensor(shape, -1.0, 1.0, rng),
                random_tensor([ci, co, k, k], -0.5, 0.5, rng),
                random_tensor([1, co, 1, 1], -0.5, 0.5, rng),
            ],
        });
    }
    cases
}

pub fn tiny_spec() -> NetSpec {
    NetSpec {
        gen_width: 4,
        n_res_blocks: 1,
        n_down: 1,
        disc_width: 4,
        disc_layers: 2,
        c_x: 3,
        c_y: 2,
    }
}

/// Whole generator and discriminator as functions of input and all
/// parameters. Weights are drawn wider than the training init so that the
/// check exercises non-trivial activations.
pub fn network_cases(seed: u64) -> Vec<Case> {
    let spec = tiny_spec();
    let mut rng = stream(seed, 1);
    let mut cases = Vec::new();
    for (net, size) in [
        (Network::generator(&spec, spec.c_x, spec.c_y), 8),
        (Network::discriminator(&spec, spec.c_y), 16),
    ] {
        let params: Vec<Tensor<f64>> = net
            .init_params(&mut rng)
            .tensors
            .iter()
            .map(|t| Tensor::from_fn(t.shape(), |_| rng.random_range(-0.4..0.4)))
            .collect();
        let input = random_tensor([1, net.c_in, size, size], -1.0, 1.0, &mut rng);
        let mut g0 = Graph::<f64>::new();
        let pv: Vec<Var> = params.iter().map(|p| g0.constant(p.clone())).collect();
        let x0 = g0.constant(input.clone());
        let o = net.forward(&mut g0, &pv, x0).unwrap();
        let out_shape = g0.value(o).shape();
        let target = random_tensor(out_shape, -1.0, 1.0, &mut rng);
        let name = format!("{:?} composed", net.kind);
        let mut inputs = vec![input];
        inputs.extend(params);
        cases.push(Case {
            name,
            build: Box::new(move |g, v| {
                let out = net.forward(g, &v[1..], v[0]).unwrap();
                project(g, out, &target)
            }),
            inputs,
        });
    }
    cases
}
