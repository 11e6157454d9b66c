#![allow(dead_code)]

use std::collections::HashMap;

use circuit_augmentor::dataio::{Dataset, Feature, FeatureSchema};
use circuit_augmentor::linalg::Matrix;
use circuit_augmentor::nn::{backward, forward, Activation, LayerSpec, MlpParams};
use circuit_augmentor::oracle::{DelayProvider, Netlist, ProcessPoint};
use circuit_augmentor::rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// 8 Gaussians on a circle of radius 2, standard deviation `sd`.
pub fn ring(n: usize, seed: u64, sd: f64) -> Dataset {
    let schema = FeatureSchema::new(vec![Feature::input("x", ""), Feature::output("y", "")]).unwrap();
    let mut r = rng::stream(seed, "ring");
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a = r.gen_range(0..8) as f64 * std::f64::consts::FRAC_PI_4;
            let e1: f64 = StandardNormal.sample(&mut r);
            let e2: f64 = StandardNormal.sample(&mut r);
            vec![2.0 * a.cos() + sd * e1, 2.0 * a.sin() + sd * e2]
        })
        .collect();
    Dataset::new(schema, Matrix::from_rows(&rows).unwrap()).unwrap()
}

/// Longest input-to-output path found by enumerating every path explicitly.
pub fn brute_force_critical_path(net: &Netlist, p: &ProcessPoint, provider: &dyn DelayProvider) -> f64 {
    let gates = net.gates();
    let delay: Vec<f64> = gates.iter().map(|g| provider.delays(g.kind, p).unwrap().worst()).collect();
    let mut fanout: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in gates.iter().enumerate() {
        for n in &g.inputs {
            fanout.entry(n.as_str()).or_default().push(i);
        }
    }
    let is_po = |n: &str| net.primary_outputs().iter().any(|o| o == n);

    fn walk(
        g: usize,
        acc: f64,
        gates: &[circuit_augmentor::oracle::GateInstance],
        delay: &[f64],
        fanout: &HashMap<&str, Vec<usize>>,
        is_po: &dyn Fn(&str) -> bool,
        best: &mut f64,
        paths: &mut usize,
    ) {
        let total = acc + delay[g];
        for out in gates[g].outputs.iter().flatten() {
            if is_po(out) {
                *paths += 1;
                if total > *best {
                    *best = total;
                }
            }
            for &next in fanout.get(out.as_str()).into_iter().flatten() {
                walk(next, total, gates, delay, fanout, is_po, best, paths);
            }
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut paths = 0;
    for pi in net.primary_inputs() {
        for &g in fanout.get(pi.as_str()).into_iter().flatten() {
            walk(g, 0.0, gates, &delay, &fanout, &is_po, &mut best, &mut paths);
        }
    }
    assert!(paths > 0, "no input-to-output path in {}", net.name());
    best
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between analytic gradients and central finite
/// differences for one seeded network, over weights, biases and inputs.
/// Loss is `sum(output * r)` for a fixed random `r`.
pub fn gradient_check(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "gradcheck");
    let acts = [Activation::leaky_relu(), Activation::Tanh, Activation::Sigmoid, Activation::Linear];
    let depth = r.gen_range(1..=3);
    let mut dims = vec![r.gen_range(1..=5)];
    for _ in 0..depth {
        dims.push(r.gen_range(1..=5));
    }
    let specs: Vec<LayerSpec> = (0..depth)
        .map(|i| LayerSpec::new(dims[i], dims[i + 1], acts[r.gen_range(0..acts.len())]))
        .collect();
    let mut params = MlpParams::init(&specs, &mut r).unwrap();
    for layer in &mut params.layers {
        for b in &mut layer.bias {
            *b = r.gen_range(-0.5..0.5);
        }
    }
    let batch = Matrix::random_normal(r.gen_range(1..=4), dims[0], &mut r);
    let weights = Matrix::random_normal(batch.rows(), dims[depth], &mut r);
    let loss = |p: &MlpParams, x: &Matrix| -> f64 {
        let (out, _) = forward(p, x).unwrap();
        out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = forward(&params, &batch).unwrap();
    let grads = backward(&params, &cache, &weights).unwrap();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for l in 0..depth {
        for k in 0..params.layers[l].weights.data().len() {
            let mut p = params.clone();
            p.layers[l].weights.data_mut()[k] += h;
            let up = loss(&p, &batch);
            p.layers[l].weights.data_mut()[k] -= 2.0 * h;
            let down = loss(&p, &batch);
            worst = worst.max(relative_error(grads.weights[l].data()[k], (up - down) / (2.0 * h)));
        }
        for k in 0..params.layers[l].bias.len() {
            let mut p = params.clone();
            p.layers[l].bias[k] += h;
            let up = loss(&p, &batch);
            p.layers[l].bias[k] -= 2.0 * h;
            let down = loss(&p, &batch);
            worst = worst.max(relative_error(grads.biases[l][k], (up - down) / (2.0 * h)));
        }
    }
    for k in 0..batch.data().len() {
        let mut x = batch.clone();
        x.data_mut()[k] += h;
        let up = loss(&params, &x);
        x.data_mut()[k] -= 2.0 * h;
        let down = loss(&params, &x);
        worst = worst.max(relative_error(grads.input.data()[k], (up - down) / (2.0 * h)));
    }
    worst
}

/// Checks that every gate delay column is strictly increasing in c_load
/// and temp and strictly decreasing in vdd and transistor width, on a 5^4
/// lattice over the default sampling box. Returns the number of
/// comparisons made, or the first violation.
pub fn monotonicity_lattice(constants: &circuit_augmentor::oracle::OracleConstants) -> Result<usize, String> {
    use circuit_augmentor::oracle::GateKind;
    let axis = |lo: f64, hi: f64| -> [f64; 5] { std::array::from_fn(|i| lo + (hi - lo) * i as f64 / 4.0) };
    let vdd = axis(1.62, 1.98);
    let temp = axis(0.0, 100.0);
    let c_load = axis(1.5e-15, 3.0e-15);
    let w_scale = axis(0.9, 1.1);
    let point = |idx: [usize; 4]| {
        let mut p = ProcessPoint::nominal();
        p.vdd = vdd[idx[0]];
        p.temp = temp[idx[1]];
        p.c_load = c_load[idx[2]];
        p.nmos.w *= w_scale[idx[3]];
        p.pmos.w *= w_scale[idx[3]];
        p
    };
    // +1: delay must rise along the axis, -1: fall
    let direction = [-1.0, 1.0, 1.0, -1.0];
    let mut checks = 0;
    for kind in GateKind::ALL {
        for a in 0..5 {
            for b in 0..5 {
                for c in 0..5 {
                    for d in 0..5 {
                        let idx = [a, b, c, d];
                        let here = constants.gate_delay(kind, &point(idx)).unwrap().to_columns();
                        for (axis_no, dir) in direction.iter().enumerate() {
                            if idx[axis_no] == 4 {
                                continue;
                            }
                            let mut next = idx;
                            next[axis_no] += 1;
                            let there = constants.gate_delay(kind, &point(next)).unwrap().to_columns();
                            for (h, t) in here.iter().zip(&there) {
                                if dir * (t - h) <= 0.0 {
                                    return Err(format!("{kind} not monotone along axis {axis_no} at {idx:?}: {h} -> {t}"));
                                }
                                checks += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(checks)
}

/// Every file under `dir` as (relative path, bytes), sorted by path.
pub fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn visit(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                visit(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    visit(dir, dir, &mut out);
    out.sort();
    out
}

/// A small but complete pipeline config; `out` is written relative to the
/// config file.
pub const TINY_CONFIG: &str = r#"
seed = 5
out = "runs"

[dataset]
oracle = "NAND2"
rows = 80

[gan]
gen_hidden = [8, 8]
disc_hidden = [8, 8]
epochs = 4
batch_size = 32

[eval]
eval_every = 2
samples = 60

[boost]
n_trees = 10
min_samples_leaf = 2

[experiment]
netlist = "c17"
real_rows = 40
artificial_rows = 60
seeds = [0, 1]
eval_points = 5

[sweep]
layers = [2, 3, 4]
lrs = [0.00025, 0.0005, 0.001]
regularizers = ["none", "spectral_reg(0.5)"]
width = 4

[sample]
rows = 25
"#;
