//! Seeded randomness, named parameters, Adam, and the two small neural
//! blocks the models are assembled from (a GCN layer and a one-hidden-layer
//! MLP). Gradients are hand-derived; `check_gradients` validates any of them
//! against central finite differences.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum NdiffError {
    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGrad { param: String },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
}

/// Deterministic random source: ChaCha8 keyed by a u64 seed. The stream is
/// identical across platforms for a given seed, which is what makes every
/// training run and benchmark in this crate reproducible.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        SeededRng { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// The seed this generator was created with (streams are not rewound;
    /// this is for provenance, e.g. checkpoints).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }

    /// Uniform index in 0..n. Panics if n = 0.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() over empty range");
        self.rng.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        use rand::seq::SliceRandom;
        xs.shuffle(&mut self.rng);
    }

    /// Glorot-uniform init: entries uniform in +-sqrt(6 / (fan_in + fan_out)).
    pub fn glorot(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        DenseMatrix::from_fn(rows, cols, |_, _| (self.uniform() * 2.0 - 1.0) * bound)
    }
}

/// A named trainable matrix together with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl Param {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows, value.cols);
        Param { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.values.fill(0.0);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment buffers, one pair per parameter, plus the shared step
/// counter. Callers must pass parameters in the same order every step.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[&Param]) -> Self {
        AdamState {
            m: params.iter().map(|p| DenseMatrix::zeros(p.value.rows, p.value.cols)).collect(),
            v: params.iter().map(|p| DenseMatrix::zeros(p.value.rows, p.value.cols)).collect(),
            t: 0,
        }
    }
}

/// One Adam update from the gradients currently stored in the params.
/// Rejects non-finite gradients, naming the offending parameter.
pub fn adam_step(
    params: &mut [&mut Param],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<(), NdiffError> {
    assert_eq!(params.len(), state.m.len(), "adam state/param count mismatch");
    for p in params.iter() {
        if !p.grad.all_finite() {
            return Err(NdiffError::NonFiniteGrad { param: p.name.clone() });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for ((mv, vv), (g, val)) in m
            .values
            .iter_mut()
            .zip(v.values.iter_mut())
            .zip(p.grad.values.iter().zip(p.value.values.iter_mut()))
        {
            *mv = hyper.beta1 * *mv + (1.0 - hyper.beta1) * g;
            *vv = hyper.beta2 * *vv + (1.0 - hyper.beta2) * g * g;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *val -= hyper.lr * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Intermediates cached by the forward pass, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct GcnCache {
    /// P * H.
    pub pre: DenseMatrix,
    /// (P * H) * W, before the activation.
    pub act_in: DenseMatrix,
}

/// One graph-convolution layer: `act(P * H * W)`.
pub fn gcn_layer(
    p: &DenseMatrix,
    h: &DenseMatrix,
    w: &DenseMatrix,
    act: Activation,
) -> (DenseMatrix, GcnCache) {
    let pre = p.matmul(h);
    let act_in = pre.matmul(w);
    let out = match act {
        Activation::Relu => act_in.map(|v| v.max(0.0)),
        Activation::Identity => act_in.clone(),
    };
    (out, GcnCache { pre, act_in })
}

/// Backward for `gcn_layer`. Returns (dL/dH, dL/dW) given dL/d(output).
/// P is symmetric for every propagation matrix in this crate, but the
/// transpose is taken explicitly anyway.
pub fn gcn_layer_backward(
    p: &DenseMatrix,
    w: &DenseMatrix,
    cache: &GcnCache,
    d_out: &DenseMatrix,
    act: Activation,
) -> (DenseMatrix, DenseMatrix) {
    let d_act_in = match act {
        Activation::Relu => DenseMatrix {
            rows: d_out.rows,
            cols: d_out.cols,
            values: d_out
                .values
                .iter()
                .zip(&cache.act_in.values)
                .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
                .collect(),
        },
        Activation::Identity => d_out.clone(),
    };
    let d_w = cache.pre.transpose().matmul(&d_act_in);
    let d_pre = d_act_in.matmul(&w.transpose());
    let d_h = p.transpose().matmul(&d_pre);
    (d_h, d_w)
}

/// One-hidden-layer scalar MLP: `w2 . relu(W1^T x + b1) + b2`.
///
/// Parameter shapes: w1 is in_dim x hidden, b1 is 1 x hidden, w2 is
/// hidden x 1, b2 is 1 x 1.
#[derive(Clone, Debug)]
pub struct Mlp2 {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

/// Cache for one `Mlp2` evaluation.
#[derive(Clone, Debug)]
pub struct Mlp2Cache {
    input: Vec<f64>,
    hidden_pre: Vec<f64>,
}

impl Mlp2 {
    pub fn new(in_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Mlp2 {
            w1: Param::new("phi_w1", rng.glorot(in_dim, hidden)),
            b1: Param::new("phi_b1", DenseMatrix::zeros(1, hidden)),
            w2: Param::new("phi_w2", rng.glorot(hidden, 1)),
            b2: Param::new("phi_b2", DenseMatrix::zeros(1, 1)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.value.rows
    }

    pub fn hidden(&self) -> usize {
        self.w1.value.cols
    }

    pub fn forward(&self, x: &[f64]) -> (f64, Mlp2Cache) {
        assert_eq!(x.len(), self.in_dim(), "mlp2 input dim mismatch");
        let hidden = self.hidden();
        let mut pre = self.b1.value.row(0).to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let wrow = self.w1.value.row(i);
                for (p, &w) in pre.iter_mut().zip(wrow) {
                    *p += xi * w;
                }
            }
        }
        let mut out = self.b2.value.get(0, 0);
        for j in 0..hidden {
            if pre[j] > 0.0 {
                out += pre[j] * self.w2.value.get(j, 0);
            }
        }
        (out, Mlp2Cache { input: x.to_vec(), hidden_pre: pre })
    }

    /// Accumulates `coeff * d(output)/d(params)` into the parameter grads and
    /// `coeff * d(output)/d(input)` into `d_input`.
    pub fn backward(&mut self, cache: &Mlp2Cache, coeff: f64, d_input: &mut [f64]) {
        assert_eq!(d_input.len(), self.in_dim());
        let hidden = self.hidden();
        self.b2.grad.values[0] += coeff;
        // d_hidden_act[j] = coeff * w2[j]; gated by relu.
        for j in 0..hidden {
            let pre = cache.hidden_pre[j];
            if pre > 0.0 {
                self.w2.grad.values[j] += coeff * pre;
                let dh = coeff * self.w2.value.get(j, 0);
                self.b1.grad.values[j] += dh;
                for (i, &xi) in cache.input.iter().enumerate() {
                    self.w1.grad.values[i * hidden + j] += dh * xi;
                    d_input[i] += dh * self.w1.value.get(i, j);
                }
            }
        }
    }

    pub fn params(&self) -> [&Param; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn zero_grad(&mut self) {
        self.w1.zero_grad();
        self.b1.zero_grad();
        self.w2.zero_grad();
        self.b2.zero_grad();
    }
}

/// Result of a finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_entry: usize,
    pub entries_checked: usize,
}

/// Compares analytic gradients against central differences.
///
/// `loss` must evaluate the objective at the given parameter values.
/// `analytic[i]` holds dL/d(values[i]) as computed by the code under test.
/// Up to `sample_cap` entries per parameter are probed (strided, so the
/// probe set is deterministic). The relative error denominator is floored
/// at 1e-3 to keep finite-difference noise on near-zero gradients from
/// registering as failures.
pub fn check_gradients<F: FnMut(&[DenseMatrix]) -> f64>(
    mut loss: F,
    values: &[DenseMatrix],
    analytic: &[DenseMatrix],
    names: &[&str],
    sample_cap: usize,
    step: f64,
) -> GradCheckReport {
    assert_eq!(values.len(), analytic.len());
    assert_eq!(values.len(), names.len());
    let mut work: Vec<DenseMatrix> = values.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_entry: 0,
        entries_checked: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        let len = grad.values.len();
        if len == 0 {
            continue;
        }
        let stride = len.div_ceil(sample_cap).max(1);
        let mut e = 0;
        while e < len {
            let orig = work[pi].values[e];
            work[pi].values[e] = orig + step;
            let up = loss(&work);
            work[pi].values[e] = orig - step;
            let down = loss(&work);
            work[pi].values[e] = orig;
            let fd = (up - down) / (2.0 * step);
            let a = grad.values[e];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            report.entries_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = names[pi].to_string();
                report.worst_entry = e;
            }
            e += stride;
        }
    }
    report
}

/// On-disk model format: named matrices plus the seed the model was trained
/// with. JSON round-trips f64 exactly (shortest round-trip encoding).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub params: Vec<NamedMatrix>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    seed: u64,
    params: &[&Param],
) -> Result<(), NdiffError> {
    let path = path.as_ref();
    let ck = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        seed,
        params: params
            .iter()
            .map(|p| NamedMatrix {
                name: p.name.clone(),
                rows: p.value.rows,
                cols: p.value.cols,
                values: p.value.values.clone(),
            })
            .collect(),
    };
    let err = |msg: String| NdiffError::Checkpoint { path: path.display().to_string(), msg };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &ck).map_err(|e| err(e.to_string()))?;
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, NdiffError> {
    let path = path.as_ref();
    let err = |msg: String| NdiffError::Checkpoint { path: path.display().to_string(), msg };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let ck: Checkpoint =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| err(e.to_string()))?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(err(format!("unsupported format_version {}", ck.format_version)));
    }
    for p in &ck.params {
        if p.values.len() != p.rows * p.cols {
            return Err(err(format!(
                "parameter {} claims {}x{} but has {} values",
                p.name,
                p.rows,
                p.cols,
                p.values.len()
            )));
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(err(format!("parameter {} has non-finite values", p.name)));
        }
    }
    Ok(ck)
}

impl Checkpoint {
    /// Extracts the named parameter or errors with the missing name.
    pub fn take(&self, name: &str) -> Result<Param, NdiffError> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| {
                Param::new(
                    name,
                    DenseMatrix { rows: p.rows, cols: p.cols, values: p.values.clone() },
                )
            })
            .ok_or_else(|| NdiffError::Checkpoint {
                path: String::new(),
                msg: format!("missing parameter {name}"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_rng_reproduces_streams() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.uniform(), b.uniform());
            assert_eq!(a.normal(), b.normal());
            assert_eq!(a.index(17), b.index(17));
        }
        let mut c = SeededRng::new(43);
        let same: Vec<f64> = (0..8).map(|_| SeededRng::new(42).uniform()).collect();
        assert!(same.iter().all(|&v| v == same[0]));
        assert_ne!(SeededRng::new(42).uniform(), c.uniform());
    }

    #[test]
    fn glorot_respects_bound() {
        let mut rng = SeededRng::new(7);
        let w = rng.glorot(30, 50);
        let bound = (6.0 / 80.0f64).sqrt();
        assert!(w.values.iter().all(|v| v.abs() <= bound));
        // Not degenerate: values spread over the interval.
        let spread = w.values.iter().cloned().fold(f64::MIN, f64::max)
            - w.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > bound);
    }

    #[test]
    fn adam_zero_grad_keeps_values() {
        let mut p = Param::new("w", DenseMatrix::from_rows(&[vec![1.0, -2.0]]));
        let before = p.value.clone();
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(p.value, before);
    }

    #[test]
    fn adam_single_step_matches_hand_calc() {
        // One step with g = 1: mhat = 1, vhat = 1, so the update is
        // lr * 1 / (1 + eps) which is lr to within eps.
        let mut p = Param::new("w", DenseMatrix::from_rows(&[vec![0.5]]));
        p.grad.values[0] = 1.0;
        let mut st = AdamState::new(&[&p]);
        let hyper = AdamHyper { lr: 0.01, ..Default::default() };
        adam_step(&mut [&mut p], &mut st, &hyper).unwrap();
        let expect = 0.5 - 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((p.value.values[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite_grad() {
        let mut p = Param::new("enc_w1", DenseMatrix::zeros(1, 1));
        p.grad.values[0] = f64::NAN;
        let mut st = AdamState::new(&[&p]);
        let err = adam_step(&mut [&mut p], &mut st, &AdamHyper::default()).unwrap_err();
        assert!(err.to_string().contains("enc_w1"));
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = Param::new("w", DenseMatrix::from_rows(&[vec![0.3, -0.7, 1.1]]));
            let mut st = AdamState::new(&[&p]);
            for step in 0..25 {
                for (i, g) in p.grad.values.iter_mut().enumerate() {
                    *g = ((step * 3 + i) as f64).sin();
                }
                adam_step(&mut [&mut p], &mut st, &AdamHyper::default()).unwrap();
            }
            p.value.values.clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gcn_identity_propagation_hand_example() {
        // P = I, H = [[1,2]], W = [[1],[-1]] -> out = [[-1]] pre-relu, 0 after.
        let p = DenseMatrix::from_rows(&[vec![1.0]]);
        let h = DenseMatrix::from_rows(&[vec![1.0, 2.0]]);
        let w = DenseMatrix::from_rows(&[vec![1.0], vec![-1.0]]);
        let (out, _) = gcn_layer(&p, &h, &w, Activation::Relu);
        assert_eq!(out.get(0, 0), 0.0);
        let (out, _) = gcn_layer(&p, &h, &w, Activation::Identity);
        assert_eq!(out.get(0, 0), -1.0);
    }

    #[test]
    fn gcn_layer_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(11);
        let n = 5;
        let p = DenseMatrix::from_fn(n, n, |i, j| if (i + j) % 3 == 0 { 0.3 } else { 0.1 });
        let h = rng.glorot(n, 4);
        let w = rng.glorot(4, 3);
        // Scalar objective: weighted sum of outputs so d_out is nontrivial.
        let weights = DenseMatrix::from_fn(n, 3, |i, j| ((i + 2 * j) as f64).cos());
        for act in [Activation::Relu, Activation::Identity] {
            let objective = |vals: &[DenseMatrix]| {
                let (out, _) = gcn_layer(&p, &vals[0], &vals[1], act);
                out.values.iter().zip(&weights.values).map(|(o, c)| o * c).sum()
            };
            let (_, cache) = gcn_layer(&p, &h, &w, act);
            let (dh, dw) = gcn_layer_backward(&p, &w, &cache, &weights, act);
            let report = check_gradients(
                objective,
                &[h.clone(), w.clone()],
                &[dh, dw],
                &["h", "w"],
                50,
                1e-5,
            );
            assert!(report.max_rel_err < 1e-6, "{act:?}: {report:?}");
        }
    }

    #[test]
    fn mlp2_zero_weights_returns_bias() {
        let mut rng = SeededRng::new(3);
        let mut mlp = Mlp2::new(4, 8, &mut rng);
        mlp.w1.value.values.fill(0.0);
        mlp.w2.value.values.fill(0.0);
        mlp.b2.value.values[0] = 0.625;
        let (out, _) = mlp.forward(&[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(out, 0.625);
    }

    #[test]
    fn mlp2_hand_set_weights() {
        // w1 = [[1,0],[0,1]], b1 = [0.5,-5], w2 = [2,3], b2 = 1:
        // hidden_pre = [x0+0.5, x1-5]; with x = [1, 2] -> relu([1.5, -3]) =
        // [1.5, 0]; out = 2*1.5 + 1 = 4.
        let mut rng = SeededRng::new(0);
        let mut mlp = Mlp2::new(2, 2, &mut rng);
        mlp.w1.value = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        mlp.b1.value = DenseMatrix::from_rows(&[vec![0.5, -5.0]]);
        mlp.w2.value = DenseMatrix::from_rows(&[vec![2.0], vec![3.0]]);
        mlp.b2.value = DenseMatrix::from_rows(&[vec![1.0]]);
        let (out, _) = mlp.forward(&[1.0, 2.0]);
        assert_eq!(out, 4.0);
    }

    #[test]
    fn mlp2_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(21);
        let mlp = Mlp2::new(6, 5, &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let mut work = mlp.clone();
        work.zero_grad();
        let (_, cache) = work.forward(&x);
        let mut d_input = vec![0.0; 6];
        work.backward(&cache, 1.0, &mut d_input);

        let objective = |vals: &[DenseMatrix]| {
            let mut probe = mlp.clone();
            probe.w1.value = vals[0].clone();
            probe.b1.value = vals[1].clone();
            probe.w2.value = vals[2].clone();
            probe.b2.value = vals[3].clone();
            probe.forward(&vals[4].values).0
        };
        let values = [
            mlp.w1.value.clone(),
            mlp.b1.value.clone(),
            mlp.w2.value.clone(),
            mlp.b2.value.clone(),
            DenseMatrix { rows: 1, cols: 6, values: x.clone() },
        ];
        let analytic = [
            work.w1.grad.clone(),
            work.b1.grad.clone(),
            work.w2.grad.clone(),
            work.b2.grad.clone(),
            DenseMatrix { rows: 1, cols: 6, values: d_input },
        ];
        let report = check_gradients(
            objective,
            &values,
            &analytic,
            &["w1", "b1", "w2", "b2", "x"],
            40,
            1e-5,
        );
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn check_gradients_flags_corrupted_gradient() {
        // Negative control: a deliberately wrong analytic gradient must be
        // reported with a large relative error.
        let value = DenseMatrix::from_rows(&[vec![1.0, 2.0]]);
        let analytic = DenseMatrix::from_rows(&[vec![2.0, 10.0]]); // true grad is [2, 4]
        let report = check_gradients(
            |vals: &[DenseMatrix]| vals[0].values.iter().map(|v| v * v).sum(),
            &[value],
            &[analytic],
            &["w"],
            10,
            1e-5,
        );
        assert!(report.max_rel_err > 0.5, "{report:?}");
        assert_eq!(report.worst_entry, 1);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = SeededRng::new(5);
        let p1 = Param::new("enc_w1", rng.glorot(7, 3));
        let p2 = Param::new("enc_w2", rng.glorot(3, 2));
        save_checkpoint(&path, 99, &[&p1, &p2]).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.seed, 99);
        assert_eq!(ck.take("enc_w1").unwrap().value, p1.value);
        assert_eq!(ck.take("enc_w2").unwrap().value, p2.value);
        assert!(ck.take("missing").is_err());
    }

    #[test]
    fn checkpoint_rejects_shape_lies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"format_version":1,"seed":0,"params":[{"name":"w","rows":2,"cols":2,"values":[1.0]}]}"#,
        )
        .unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
