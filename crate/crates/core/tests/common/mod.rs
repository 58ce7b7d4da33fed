#![allow(dead_code)]

use phmadv::models::{LstmArch, NormalityModel, RulArch, RulModel};
use phmadv::{Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Magnitude below which gradient entries are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so relu and sqrt stay differentiable
/// within a finite-difference step.
pub fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    random_tensor(rng, shape, -1.0, 1.0).map(|v| if v.abs() < 0.05 { v + 0.1 * v.signum() } else { v })
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Fixed non-uniform weighting that turns any output into a scalar with a
/// non-trivial gradient.
pub fn weigh<'t>(v: Var<'t>) -> Result<Var<'t>> {
    let shape = v.shape();
    let len: usize = shape.iter().product();
    let w = (0..len).map(|i| 0.5 + ((i as f64) * 0.37).sin()).collect();
    let w = v.tape().constant(Tensor::new(shape, w)?);
    v.mul(w)?.sum()
}

/// Max relative error between the tape gradient of `f` with respect to
/// each input and central differences over the listed coordinates (all
/// coordinates when `coords` is `None`).
pub fn gradient_error<F>(inputs: &[Tensor], f: F, coords: Option<&[usize]>) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &leaves).unwrap();
    let grads = tape.gradients(out, &leaves).unwrap();
    let eval = |xs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars).unwrap().item().unwrap()
    };
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let all: Vec<usize> = (0..input.len()).collect();
        let idx = coords.unwrap_or(&all);
        for &i in idx {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[k].data()[i], numeric));
        }
    }
    worst
}

type Build = for<'t> fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>;

pub struct PrimitiveCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub build: Build,
}

/// One random instance of every primitive, each reduced to a scalar.
pub fn primitive_cases(rng: &mut impl Rng) -> Vec<PrimitiveCase> {
    let r = |rng: &mut _, s: &[usize]| random_tensor(rng, s, -1.0, 1.0);
    vec![
        PrimitiveCase {
            name: "matmul",
            inputs: vec![r(rng, &[3, 4]), r(rng, &[4, 2])],
            build: |_, v| weigh(v[0].matmul(v[1])?),
        },
        PrimitiveCase {
            name: "conv2d",
            inputs: vec![r(rng, &[5, 4, 2]), r(rng, &[2, 3, 2, 3])],
            build: |_, v| weigh(v[0].conv2d(v[1])?),
        },
        PrimitiveCase {
            name: "add",
            inputs: vec![r(rng, &[2, 3]), r(rng, &[2, 3])],
            build: |_, v| weigh(v[0].add(v[1])?),
        },
        PrimitiveCase {
            name: "sub",
            inputs: vec![r(rng, &[2, 3]), r(rng, &[2, 3])],
            build: |_, v| weigh(v[0].sub(v[1])?),
        },
        PrimitiveCase {
            name: "mul",
            inputs: vec![r(rng, &[2, 3]), r(rng, &[2, 3])],
            build: |_, v| weigh(v[0].mul(v[1])?),
        },
        PrimitiveCase {
            name: "add_bias",
            inputs: vec![r(rng, &[3, 4]), r(rng, &[4])],
            build: |_, v| weigh(v[0].add_bias(v[1])?),
        },
        PrimitiveCase {
            name: "scale",
            inputs: vec![r(rng, &[5])],
            build: |_, v| weigh(v[0].scale(-1.7)?),
        },
        PrimitiveCase {
            name: "sigmoid",
            inputs: vec![random_tensor(rng, &[6], -4.0, 4.0)],
            build: |_, v| weigh(v[0].sigmoid()?),
        },
        PrimitiveCase {
            name: "tanh",
            inputs: vec![random_tensor(rng, &[6], -3.0, 3.0)],
            build: |_, v| weigh(v[0].tanh()?),
        },
        PrimitiveCase {
            name: "relu",
            inputs: vec![away_from_zero(rng, &[8])],
            build: |_, v| weigh(v[0].relu()?),
        },
        PrimitiveCase {
            name: "sqrt",
            inputs: vec![random_tensor(rng, &[6], 0.2, 3.0)],
            build: |_, v| weigh(v[0].sqrt()?),
        },
        PrimitiveCase {
            name: "spatial_mean",
            inputs: vec![r(rng, &[3, 4, 2])],
            build: |_, v| weigh(v[0].spatial_mean()?),
        },
        PrimitiveCase {
            name: "sum",
            inputs: vec![r(rng, &[2, 3])],
            build: |_, v| v[0].mul(v[0])?.sum(),
        },
        PrimitiveCase {
            name: "squared_error",
            inputs: vec![r(rng, &[5]), r(rng, &[5])],
            build: |_, v| v[0].squared_error(v[1]),
        },
        PrimitiveCase {
            name: "concat",
            inputs: vec![r(rng, &[2, 3]), r(rng, &[2, 2])],
            build: |_, v| weigh(phmadv::tensor::concat(1, &[v[0], v[1]])?),
        },
        PrimitiveCase {
            name: "slice",
            inputs: vec![r(rng, &[4, 3])],
            build: |_, v| weigh(v[0].slice(0, 1, 2)?),
        },
        PrimitiveCase {
            name: "reshape",
            inputs: vec![r(rng, &[2, 3])],
            build: |_, v| weigh(v[0].reshape(&[3, 2])?),
        },
        PrimitiveCase {
            name: "sigmoid-matmul chain",
            inputs: vec![r(rng, &[1, 5]), r(rng, &[5, 3])],
            build: |_, v| {
                v[0].matmul(v[1])?
                    .sigmoid()?
                    .matmul(v[1].reshape(&[3, 5])?)?
                    .tanh()?
                    .sum()
            },
        },
    ]
}

pub fn small_lstm(rng: &mut impl Rng, n: usize, window: usize, hidden: usize) -> NormalityModel {
    let arch = LstmArch {
        input_width: n,
        hidden,
        layers: 2,
        window,
    };
    let mut model = NormalityModel::new(arch, rng.random()).unwrap();
    model.b_out = random_tensor(rng, &[n], -0.5, 0.5);
    model
}

/// Smallest |pre-activation| over both conv stages of the CNN on `window`.
pub fn cnn_kink_margin(model: &RulModel, window: &Tensor) -> f64 {
    let arch = model.arch();
    let tape = Tape::new();
    let x = tape.constant(window.reshape(&[arch.window, arch.channels, 1]).unwrap());
    let z1 = x
        .conv2d(tape.constant(model.conv1.clone()))
        .unwrap()
        .add_bias(tape.constant(model.conv1_bias.clone()))
        .unwrap();
    let z2 = z1
        .relu()
        .unwrap()
        .conv2d(tape.constant(model.conv2.clone()))
        .unwrap()
        .add_bias(tape.constant(model.conv2_bias.clone()))
        .unwrap();
    let m1 = z1.value().data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let m2 = z2.value().data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    m1.min(m2)
}

/// Random CNN with a zero output bias, so outputs stay near zero and
/// central differences are not swamped by rounding of a large offset.
pub fn random_cnn(rng: &mut impl Rng, arch: RulArch) -> RulModel {
    let mut model = RulModel::new(arch, rng.random()).unwrap();
    model.conv1_bias = random_tensor(rng, &[arch.conv1_filters], -0.1, 0.1);
    model.conv2_bias = random_tensor(rng, &[arch.conv2_filters], -0.1, 0.1);
    model
}

/// A CNN instance and input whose relu pre-activations all clear `margin`.
pub fn cnn_instance(rng: &mut impl Rng, arch: RulArch, margin: f64) -> (RulModel, Tensor) {
    loop {
        let model = random_cnn(rng, arch);
        let window = random_tensor(rng, &[arch.window, arch.channels], -2.0, 2.0);
        if cnn_kink_margin(&model, &window) > margin {
            return (model, window);
        }
    }
}

pub fn sample_coords(rng: &mut impl Rng, len: usize, count: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, len, count.min(len)).into_vec()
}
