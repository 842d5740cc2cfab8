//! Central-difference gradient checking shared by the integration tests.
#![allow(dead_code)]

use nnviz_core::rng::SplitMix64;
use nnviz_core::tensor::{NodeId, Tape, Tensor};

pub const STEP: f32 = 1e-2;
pub const ABS_TOL: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-2;

pub type Build = dyn Fn(&mut Tape, &[NodeId]) -> NodeId;

/// One op instance: leaf values and how to wire them.
pub struct Case {
    pub op: &'static str,
    pub inputs: Vec<Tensor>,
    /// Which inputs to differentiate.
    pub check: Vec<usize>,
    pub build: Box<Build>,
}

fn run(case: &Case, inputs: &[Tensor]) -> (Tape, Vec<NodeId>, NodeId) {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = (case.build)(&mut tape, &ids);
    (tape, ids, out)
}

fn project(t: &Tensor, r: &Tensor) -> f64 {
    t.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// `(max abs error, max relative error)` of the worst coordinate, or an error
/// naming the first coordinate outside both tolerances.
pub fn check(case: &Case, rng: &mut SplitMix64) -> Result<(f64, f64), String> {
    let (tape, ids, out) = run(case, &case.inputs);
    let shape = tape.value(out).shape().to_vec();
    let n: usize = shape.iter().product();
    let r = Tensor::new(shape, rng.uniform_vec(n, -1.0, 1.0)).unwrap();
    let wanted: Vec<NodeId> = case.check.iter().map(|&i| ids[i]).collect();
    let grads = tape.backward(out, &r, &wanted).map_err(|e| e.to_string())?;
    let (mut worst_abs, mut worst_rel) = (0.0f64, 0.0f64);
    for &i in &case.check {
        let an = grads.get(ids[i]).ok_or("missing gradient")?;
        for j in 0..case.inputs[i].len() {
            let eval = |delta: f32| {
                let mut xs = case.inputs.clone();
                xs[i].data_mut()[j] += delta;
                let (t, _, o) = run(case, &xs);
                project(t.value(o), &r)
            };
            let fd = (eval(STEP) - eval(-STEP)) / (2.0 * STEP as f64);
            let a = an.data()[j] as f64;
            let abs = (fd - a).abs();
            let rel = abs / fd.abs().max(a.abs()).max(1e-12);
            if abs > ABS_TOL && rel > REL_TOL {
                return Err(format!("{} input {i} coord {j}: analytic {a:.6} vs numeric {fd:.6}", case.op));
            }
            worst_abs = worst_abs.max(abs);
            if abs > ABS_TOL {
                worst_rel = worst_rel.max(rel);
            }
        }
    }
    Ok((worst_abs, worst_rel))
}

fn uniform(rng: &mut SplitMix64, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::new(shape.to_vec(), rng.uniform_vec(shape.iter().product(), lo, hi)).unwrap()
}

/// Values at least `margin` away from zero, so a step of [`STEP`] never crosses a kink.
fn away_from_zero(rng: &mut SplitMix64, shape: &[usize], margin: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(margin, 1.0);
            if rng.next_f32() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Shuffled distinct values `0.05·k`, so every pooling window has a clear maximum.
fn distinct(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f32> = (0..n).map(|k| 0.05 * k as f32 - 0.025 * n as f32).collect();
    rng.shuffle(&mut vals);
    Tensor::new(shape.to_vec(), vals).unwrap()
}

pub const OPS: [&str; 11] = [
    "conv2d", "relu", "maxpool2", "gap", "reshape", "linear", "matmul", "sigmoid", "tanh", "softmax", "bce_loss",
];

/// A random instance of `op`.
pub fn case(op: &'static str, rng: &mut SplitMix64) -> Case {
    match op {
        "conv2d" => {
            let (n, c, o) = (rng.range_inclusive(1, 2), rng.range_inclusive(1, 3), rng.range_inclusive(1, 3));
            let (h, w) = (rng.range_inclusive(3, 6), rng.range_inclusive(3, 6));
            let k = rng.range_inclusive(1, 3);
            let (stride, pad) = (rng.range_inclusive(1, 2), rng.range_inclusive(0, 1));
            Case {
                op,
                inputs: vec![
                    uniform(rng, &[n, c, h, w], -1.0, 1.0),
                    uniform(rng, &[o, c, k, k], -1.0, 1.0),
                    uniform(rng, &[o], -0.5, 0.5),
                ],
                check: vec![0, 1, 2],
                build: Box::new(move |t, x| t.conv2d(x[0], x[1], x[2], stride, pad).unwrap()),
            }
        }
        "relu" => {
            let shape = [rng.range_inclusive(1, 3), rng.range_inclusive(2, 8)];
            Case {
                op,
                inputs: vec![away_from_zero(rng, &shape, 0.05)],
                check: vec![0],
                build: Box::new(|t, x| t.relu(x[0]).unwrap()),
            }
        }
        "maxpool2" => {
            let shape = [rng.range_inclusive(1, 2), rng.range_inclusive(1, 2), 2 * rng.range_inclusive(1, 3), 2 * rng.range_inclusive(1, 3)];
            Case {
                op,
                inputs: vec![distinct(rng, &shape)],
                check: vec![0],
                build: Box::new(|t, x| t.maxpool2(x[0]).unwrap()),
            }
        }
        "gap" => {
            let shape = [rng.range_inclusive(1, 2), rng.range_inclusive(1, 3), rng.range_inclusive(1, 4), rng.range_inclusive(1, 4)];
            Case {
                op,
                inputs: vec![uniform(rng, &shape, -1.0, 1.0)],
                check: vec![0],
                build: Box::new(|t, x| t.gap(x[0]).unwrap()),
            }
        }
        "reshape" => {
            let (a, b) = (rng.range_inclusive(1, 4), rng.range_inclusive(1, 4));
            Case {
                op,
                inputs: vec![uniform(rng, &[a, b, 2], -1.0, 1.0)],
                check: vec![0],
                build: Box::new(move |t, x| t.reshape(x[0], &[2 * b, a]).unwrap()),
            }
        }
        "linear" => {
            let (n, k, c) = (rng.range_inclusive(1, 3), rng.range_inclusive(1, 6), rng.range_inclusive(1, 4));
            Case {
                op,
                inputs: vec![
                    uniform(rng, &[n, k], -1.0, 1.0),
                    uniform(rng, &[c, k], -1.0, 1.0),
                    uniform(rng, &[c], -1.0, 1.0),
                ],
                check: vec![0, 1, 2],
                build: Box::new(|t, x| t.linear(x[0], x[1], x[2]).unwrap()),
            }
        }
        "matmul" => {
            let (m, k, n) = (rng.range_inclusive(1, 4), rng.range_inclusive(1, 5), rng.range_inclusive(1, 4));
            Case {
                op,
                inputs: vec![uniform(rng, &[m, k], -1.0, 1.0), uniform(rng, &[k, n], -1.0, 1.0)],
                check: vec![0, 1],
                build: Box::new(|t, x| t.matmul(x[0], x[1]).unwrap()),
            }
        }
        "sigmoid" | "tanh" => {
            let shape = [rng.range_inclusive(1, 3), rng.range_inclusive(1, 6)];
            let tanh = op == "tanh";
            Case {
                op,
                inputs: vec![uniform(rng, &shape, -3.0, 3.0)],
                check: vec![0],
                build: Box::new(move |t, x| if tanh { t.tanh(x[0]).unwrap() } else { t.sigmoid(x[0]).unwrap() }),
            }
        }
        "softmax" => {
            let shape = [rng.range_inclusive(1, 3), rng.range_inclusive(2, 6)];
            Case {
                op,
                inputs: vec![uniform(rng, &shape, -3.0, 3.0)],
                check: vec![0],
                build: Box::new(|t, x| t.softmax(x[0]).unwrap()),
            }
        }
        "bce_loss" => {
            let shape = [rng.range_inclusive(1, 3), rng.range_inclusive(1, 4)];
            let n = shape[0] * shape[1];
            let targets = Tensor::new(shape.to_vec(), (0..n).map(|_| (rng.next_f32() < 0.5) as u8 as f32).collect()).unwrap();
            Case {
                op,
                inputs: vec![uniform(rng, &shape, 0.1, 0.9)],
                check: vec![0],
                build: Box::new(move |t, x| t.bce_loss(x[0], targets.clone()).unwrap()),
            }
        }
        other => panic!("no generator for {other}"),
    }
}

/// Finite-difference check of whole-model parameter gradients on `samples`
/// random coordinates per parameter. `loss` evaluates the scalar loss for a
/// parameter set; `grads` are the analytic gradients at `params`.
///
/// When the central difference misses, the coordinate may sit within one
/// step of a ReLU or pooling kink; it then passes if the one-sided difference
/// on the smooth side agrees. Returns `(checked, kink-side passes)`.
pub fn check_params(
    params: &nnviz_core::tensor::ParamSet,
    grads: &nnviz_core::tensor::ParamSet,
    loss: &dyn Fn(&nnviz_core::tensor::ParamSet) -> f32,
    samples: usize,
    rng: &mut SplitMix64,
) -> Result<(usize, usize), String> {
    const H: f32 = 1e-3;
    let close = |fd: f64, a: f64| {
        let abs = (fd - a).abs();
        abs <= ABS_TOL || abs <= REL_TOL * fd.abs().max(a.abs())
    };
    let base = loss(params) as f64;
    let (mut checked, mut one_sided) = (0, 0);
    for (name, p) in params {
        let g = grads.get(name).ok_or_else(|| format!("no gradient for {name}"))?;
        for _ in 0..samples.min(p.len()) {
            let j = rng.below(p.len());
            let eval = |delta: f32| {
                let mut ps = params.clone();
                ps.get_mut(name).unwrap().data_mut()[j] += delta;
                loss(&ps) as f64
            };
            let (up, down) = (eval(H), eval(-H));
            let a = g.data()[j] as f64;
            let central = (up - down) / (2.0 * H as f64);
            checked += 1;
            if close(central, a) {
                continue;
            }
            let (fwd, bwd) = ((up - base) / H as f64, (base - down) / H as f64);
            if close(fwd, a) || close(bwd, a) {
                one_sided += 1;
                continue;
            }
            return Err(format!("{name}[{j}]: analytic {a:.6} vs numeric {central:.6} (one-sided {fwd:.6}, {bwd:.6})"));
        }
    }
    if one_sided * 4 > checked {
        return Err(format!("{one_sided} of {checked} coordinates only matched one-sided"));
    }
    Ok((checked, one_sided))
}
