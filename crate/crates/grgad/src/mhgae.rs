//! Multi-hop graph autoencoder for anchor localization.
//!
//! A two-layer GCN encodes nodes; two decoders reconstruct (a) an
//! adjacency-derived target through `sigmoid(Z Z^T)` and (b) the node
//! attributes through a linear map. Per-node reconstruction error mixes the
//! two:
//!
//! ```text
//! r_i = lambda * sum_j |T_ij - M'_ij|  +  (1 - lambda) * ||x_i - x'_i||_2
//! ```
//!
//! Nodes with the largest errors become anchors for group sampling. Training
//! minimizes `sum_i r_i` with Adam; every gradient is hand-derived and
//! covered by finite-difference checks in the test suite.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::graph::{propagation_matrix, AttributedGraph, ReconTarget};
use crate::matrix::DenseMatrix;
use crate::ndiff::{
    adam_step, load_checkpoint, save_checkpoint, sigmoid, AdamHyper, AdamState, NdiffError, Param,
    SeededRng,
};

#[derive(Debug, Error)]
pub enum MhGaeError {
    #[error("recon_mix_lambda must be in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("epochs must be >= 1")]
    NoEpochs,
    #[error("learning rate must be positive and finite, got {0}")]
    BadLr(f64),
    #[error("hidden and latent dims must be >= 1")]
    BadDims,
    #[error("target is {tr}x{tc} but the graph has {n} nodes")]
    TargetShape { tr: usize, tc: usize, n: usize },
    #[error("anchor fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("cannot select anchors from an empty error vector")]
    EmptyErrors,
    #[error("anchor {node} is out of range for {n} nodes")]
    AnchorOutOfRange { node: usize, n: usize },
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MhGaeConfig {
    /// Structure/attribute mix in the error: 1.0 is pure structure.
    pub recon_mix_lambda: f64,
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for MhGaeConfig {
    fn default() -> Self {
        MhGaeConfig { recon_mix_lambda: 0.5, hidden: 64, latent: 64, epochs: 300, lr: 1e-3 }
    }
}

impl MhGaeConfig {
    pub fn validate(&self) -> Result<(), MhGaeError> {
        if !(0.0..=1.0).contains(&self.recon_mix_lambda) || !self.recon_mix_lambda.is_finite() {
            return Err(MhGaeError::BadLambda(self.recon_mix_lambda));
        }
        if self.epochs == 0 {
            return Err(MhGaeError::NoEpochs);
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(MhGaeError::BadLr(self.lr));
        }
        if self.hidden == 0 || self.latent == 0 {
            return Err(MhGaeError::BadDims);
        }
        Ok(())
    }
}

pub struct MhGaeModel {
    pub enc_w1: Param,
    pub enc_w2: Param,
    pub attr_dec_w: Param,
    pub config: MhGaeConfig,
}

impl MhGaeModel {
    pub fn new(d: usize, config: MhGaeConfig, rng: &mut SeededRng) -> Self {
        MhGaeModel {
            enc_w1: Param::new("enc_w1", rng.glorot(d, config.hidden)),
            enc_w2: Param::new("enc_w2", rng.glorot(config.hidden, config.latent)),
            attr_dec_w: Param::new("attr_dec_w", rng.glorot(config.latent, d)),
            config,
        }
    }

    /// Latent codes: `Z = P relu(P X W1) W2`.
    pub fn encode(&self, p: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
        let h1 = p.matmul(x).matmul(&self.enc_w1.value).map(|v| v.max(0.0));
        p.matmul(&h1).matmul(&self.enc_w2.value)
    }

    pub fn decode_attributes(&self, z: &DenseMatrix) -> DenseMatrix {
        z.matmul(&self.attr_dec_w.value)
    }
}

/// `sigmoid(Z Z^T)` with the diagonal zeroed: predicted link strength for
/// every node pair, self-links excluded.
pub fn decode_structure(z: &DenseMatrix) -> DenseMatrix {
    let mut s = z.matmul(&z.transpose()).map(sigmoid);
    for i in 0..s.rows {
        s.set(i, i, 0.0);
    }
    s
}

/// Per-node reconstruction errors and their structure/attribute parts.
#[derive(Clone, Debug)]
pub struct NodeErrorVector {
    pub r: Vec<f64>,
    pub r_stru: Vec<f64>,
    pub r_attr: Vec<f64>,
}

impl NodeErrorVector {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Error mix from already-decoded parts. `t` is the target, `s` the decoded
/// structure, `x` the attributes, `xr` the decoded attributes.
pub fn errors_from_parts(
    t: &DenseMatrix,
    s: &DenseMatrix,
    x: &DenseMatrix,
    xr: &DenseMatrix,
    lambda: f64,
) -> NodeErrorVector {
    let n = t.rows;
    let mut r_stru = vec![0.0; n];
    let mut r_attr = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for (tv, sv) in t.row(i).iter().zip(s.row(i)) {
            acc += (tv - sv).abs();
        }
        r_stru[i] = acc;
        let mut sq = 0.0;
        for (xv, rv) in x.row(i).iter().zip(xr.row(i)) {
            let d = xv - rv;
            sq += d * d;
        }
        r_attr[i] = sq.sqrt();
    }
    let r = r_stru
        .iter()
        .zip(&r_attr)
        .map(|(s, a)| lambda * s + (1.0 - lambda) * a)
        .collect();
    NodeErrorVector { r, r_stru, r_attr }
}

/// Full error evaluation for a trained model.
pub fn reconstruction_errors(
    model: &MhGaeModel,
    g: &AttributedGraph,
    target: &ReconTarget,
) -> NodeErrorVector {
    let p = propagation_matrix(g);
    let z = model.encode(&p, g.x());
    let s = decode_structure(&z);
    let xr = model.decode_attributes(&z);
    errors_from_parts(&target.m, &s, g.x(), &xr, model.config.recon_mix_lambda)
}

pub struct TrainedMhGae {
    pub model: MhGaeModel,
    pub errors: NodeErrorVector,
    /// Total loss per epoch, recorded before each update.
    pub loss_history: Vec<f64>,
}

/// Gradients of `sum_i r_i` w.r.t. the three weight matrices, given cached
/// forward intermediates. Shared by training and the gradient-check tests.
struct Forward {
    a1: DenseMatrix,
    pre2: DenseMatrix,
    z: DenseMatrix,
    s: Option<DenseMatrix>,
    xr: Option<DenseMatrix>,
    loss: f64,
}

fn forward(
    model: &MhGaeModel,
    pre1: &DenseMatrix,
    x: &DenseMatrix,
    t: &DenseMatrix,
    p: &DenseMatrix,
) -> Forward {
    let lambda = model.config.recon_mix_lambda;
    let a1 = pre1.matmul(&model.enc_w1.value);
    let h1 = a1.map(|v| v.max(0.0));
    let pre2 = p.matmul(&h1);
    let z = pre2.matmul(&model.enc_w2.value);
    let mut loss = 0.0;
    let s = if lambda > 0.0 {
        let s = decode_structure(&z);
        let mut acc = 0.0;
        for (tv, sv) in t.values.iter().zip(&s.values) {
            acc += (tv - sv).abs();
        }
        loss += lambda * acc;
        Some(s)
    } else {
        None
    };
    let xr = if lambda < 1.0 {
        let xr = z.matmul(&model.attr_dec_w.value);
        let mut acc = 0.0;
        for i in 0..x.rows {
            let mut sq = 0.0;
            for (xv, rv) in x.row(i).iter().zip(xr.row(i)) {
                let d = xv - rv;
                sq += d * d;
            }
            acc += sq.sqrt();
        }
        loss += (1.0 - lambda) * acc;
        Some(xr)
    } else {
        None
    };
    Forward { a1, pre2, z, s, xr, loss }
}

/// Accumulates gradients into the model's params. `pre1t`/`pt` are the
/// transposes of `P X` and `P`, precomputed once per training run.
fn backward(
    model: &mut MhGaeModel,
    fwd: &Forward,
    x: &DenseMatrix,
    t: &DenseMatrix,
    pre1t: &DenseMatrix,
    pt: &DenseMatrix,
) {
    let lambda = model.config.recon_mix_lambda;
    let n = x.rows;
    let zdim = fwd.z.cols;
    let mut dz = DenseMatrix::zeros(n, zdim);

    if let Some(s) = &fwd.s {
        // d r_stru / d s_ij = sign(s - t); through the sigmoid that becomes
        // sign(s - t) * s * (1 - s). The matrix is symmetric (t and s are),
        // so d loss / d z = 2 * G * z.
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let sv = s.get(i, j);
                    let diff = sv - t.get(i, j);
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    g.set(i, j, lambda * sign * sv * (1.0 - sv));
                }
            }
        }
        let gz = g.matmul(&fwd.z);
        for (d, v) in dz.values.iter_mut().zip(&gz.values) {
            *d += 2.0 * v;
        }
    }

    if let Some(xr) = &fwd.xr {
        // d ||x_i - xr_i|| / d xr_i = (xr_i - x_i) / ||.||; zero at the kink.
        let mut dxr = DenseMatrix::zeros(n, x.cols);
        for i in 0..n {
            let mut sq = 0.0;
            for (xv, rv) in x.row(i).iter().zip(xr.row(i)) {
                let d = xv - rv;
                sq += d * d;
            }
            let norm = sq.sqrt();
            if norm > 1e-12 {
                let scale = (1.0 - lambda) / norm;
                for (out, (xv, rv)) in
                    dxr.row_mut(i).iter_mut().zip(x.row(i).iter().zip(xr.row(i)))
                {
                    *out = scale * (rv - xv);
                }
            }
        }
        let dwdec = fwd.z.transpose().matmul(&dxr);
        for (g, v) in model.attr_dec_w.grad.values.iter_mut().zip(&dwdec.values) {
            *g += v;
        }
        let dz_attr = dxr.matmul(&model.attr_dec_w.value.transpose());
        for (d, v) in dz.values.iter_mut().zip(&dz_attr.values) {
            *d += v;
        }
    }

    // Layer 2 (identity activation): z = pre2 W2.
    let dw2 = fwd.pre2.transpose().matmul(&dz);
    for (g, v) in model.enc_w2.grad.values.iter_mut().zip(&dw2.values) {
        *g += v;
    }
    let dpre2 = dz.matmul(&model.enc_w2.value.transpose());
    let dh1 = pt.matmul(&dpre2);
    // Layer 1 relu gate.
    let da1 = DenseMatrix {
        rows: dh1.rows,
        cols: dh1.cols,
        values: dh1
            .values
            .iter()
            .zip(&fwd.a1.values)
            .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
            .collect(),
    };
    let dw1 = pre1t.matmul(&da1);
    for (g, v) in model.enc_w1.grad.values.iter_mut().zip(&dw1.values) {
        *g += v;
    }
}

/// Evaluates the training loss for arbitrary weight values; used by the
/// finite-difference acceptance checks.
pub fn training_loss(
    g: &AttributedGraph,
    target: &ReconTarget,
    config: &MhGaeConfig,
    enc_w1: &DenseMatrix,
    enc_w2: &DenseMatrix,
    attr_dec_w: &DenseMatrix,
) -> f64 {
    let model = MhGaeModel {
        enc_w1: Param::new("enc_w1", enc_w1.clone()),
        enc_w2: Param::new("enc_w2", enc_w2.clone()),
        attr_dec_w: Param::new("attr_dec_w", attr_dec_w.clone()),
        config: *config,
    };
    let p = propagation_matrix(g);
    let pre1 = p.matmul(g.x());
    forward(&model, &pre1, g.x(), &target.m, &p).loss
}

/// Gradients of the training loss at the given weights; the analytic side of
/// the finite-difference acceptance checks.
pub fn training_gradients(
    g: &AttributedGraph,
    target: &ReconTarget,
    config: &MhGaeConfig,
    enc_w1: &DenseMatrix,
    enc_w2: &DenseMatrix,
    attr_dec_w: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let mut model = MhGaeModel {
        enc_w1: Param::new("enc_w1", enc_w1.clone()),
        enc_w2: Param::new("enc_w2", enc_w2.clone()),
        attr_dec_w: Param::new("attr_dec_w", attr_dec_w.clone()),
        config: *config,
    };
    let p = propagation_matrix(g);
    let pre1 = p.matmul(g.x());
    let pre1t = pre1.transpose();
    let pt = p.transpose();
    let fwd = forward(&model, &pre1, g.x(), &target.m, &p);
    backward(&mut model, &fwd, g.x(), &target.m, &pre1t, &pt);
    (model.enc_w1.grad, model.enc_w2.grad, model.attr_dec_w.grad)
}

pub fn train_mhgae(
    g: &AttributedGraph,
    target: &ReconTarget,
    config: &MhGaeConfig,
    seed: u64,
) -> Result<TrainedMhGae, MhGaeError> {
    config.validate()?;
    let n = g.n();
    if target.m.rows != n || target.m.cols != n {
        return Err(MhGaeError::TargetShape { tr: target.m.rows, tc: target.m.cols, n });
    }
    let mut rng = SeededRng::new(seed);
    let mut model = MhGaeModel::new(g.dim(), *config, &mut rng);
    let p = propagation_matrix(g);
    let pre1 = p.matmul(g.x());
    let pre1t = pre1.transpose();
    let pt = p.transpose();
    let hyper = AdamHyper { lr: config.lr, ..Default::default() };
    let mut adam = AdamState::new(&[&model.enc_w1, &model.enc_w2, &model.attr_dec_w]);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let fwd = forward(&model, &pre1, g.x(), &target.m, &p);
        if !fwd.loss.is_finite() {
            return Err(NdiffError::NonFiniteLoss { epoch }.into());
        }
        history.push(fwd.loss);
        model.enc_w1.zero_grad();
        model.enc_w2.zero_grad();
        model.attr_dec_w.zero_grad();
        backward(&mut model, &fwd, g.x(), &target.m, &pre1t, &pt);
        let MhGaeModel { enc_w1, enc_w2, attr_dec_w, .. } = &mut model;
        adam_step(&mut [enc_w1, enc_w2, attr_dec_w], &mut adam, &hyper)?;
    }

    // Soft convergence check: the last 10% of epochs should not climb.
    let tail = (config.epochs / 10).max(1);
    let start = config.epochs - tail;
    let climbing = history[start..]
        .windows(2)
        .any(|w| w[1] > w[0] + 1e-9 * w[0].abs().max(1.0));
    if climbing {
        log::warn!("mhgae loss increased within the last {tail} epochs (seed {seed})");
    }

    let errors = reconstruction_errors(&model, g, target);
    Ok(TrainedMhGae { model, errors, loss_history: history })
}

/// Anchor nodes: sorted, distinct, all valid in the host graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorSet {
    nodes: Vec<usize>,
}

impl AnchorSet {
    /// Validates, sorts, and dedups the given indices against a graph of
    /// `n` nodes.
    pub fn new(mut nodes: Vec<usize>, n: usize) -> Result<Self, MhGaeError> {
        nodes.sort_unstable();
        nodes.dedup();
        if let Some(&node) = nodes.iter().find(|&&v| v >= n) {
            return Err(MhGaeError::AnchorOutOfRange { node, n });
        }
        Ok(AnchorSet { nodes })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Top `ceil(fraction * n)` nodes by error, ties broken toward the lower
/// index. The selection is exactly the argmax set: every selected error is
/// >= every unselected error.
pub fn select_anchor_nodes(errors: &[f64], fraction: f64) -> Result<AnchorSet, MhGaeError> {
    if errors.is_empty() {
        return Err(MhGaeError::EmptyErrors);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MhGaeError::BadFraction(fraction));
    }
    let n = errors.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(AnchorSet { nodes: order })
}

pub fn save_anchors(anchors: &AnchorSet, path: impl AsRef<Path>) -> Result<(), MhGaeError> {
    let path = path.as_ref();
    let err = |msg: String| MhGaeError::File { path: path.display().to_string(), msg };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &anchors.nodes).map_err(|e| err(e.to_string()))?;
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn load_anchors(path: impl AsRef<Path>, n: usize) -> Result<AnchorSet, MhGaeError> {
    let path = path.as_ref();
    let err = |msg: String| MhGaeError::File { path: path.display().to_string(), msg };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let nodes: Vec<usize> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| err(e.to_string()))?;
    AnchorSet::new(nodes, n)
}

/// CSV export: `node_index,r,r_stru,r_attr`, one row per node.
pub fn save_errors_csv(errors: &NodeErrorVector, path: impl AsRef<Path>) -> Result<(), MhGaeError> {
    let path = path.as_ref();
    let err = |msg: String| MhGaeError::File { path: path.display().to_string(), msg };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = BufWriter::new(file);
    let mut write = |line: String| writeln!(w, "{line}").map_err(|e| err(e.to_string()));
    write("node_index,r,r_stru,r_attr".to_string())?;
    for i in 0..errors.len() {
        write(format!("{i},{},{},{}", errors.r[i], errors.r_stru[i], errors.r_attr[i]))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

pub const MODEL_PARAMS: [&str; 3] = ["enc_w1", "enc_w2", "attr_dec_w"];

pub fn save_model(model: &MhGaeModel, seed: u64, path: impl AsRef<Path>) -> Result<(), MhGaeError> {
    Ok(save_checkpoint(path, seed, &[&model.enc_w1, &model.enc_w2, &model.attr_dec_w])?)
}

/// Loads weights saved with [`save_model`]. The config is supplied by the
/// caller (it lives in the pipeline config, not the checkpoint).
pub fn load_model(path: impl AsRef<Path>, config: MhGaeConfig) -> Result<MhGaeModel, MhGaeError> {
    let ck = load_checkpoint(path)?;
    Ok(MhGaeModel {
        enc_w1: ck.take("enc_w1")?,
        enc_w2: ck.take("enc_w2")?,
        attr_dec_w: ck.take("attr_dec_w")?,
        config,
    })
}
