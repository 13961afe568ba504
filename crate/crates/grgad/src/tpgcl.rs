//! Topology-pattern-based contrastive learning over candidate groups.
//!
//! Each candidate group is decomposed into its topology patterns (trees,
//! paths, cycles). Two augmentations follow: the positive view extends every
//! pattern by one node (pattern-preserving), the negative view deletes the
//! node that carries each pattern (pattern-breaking). A 2-layer GCN encoder
//! with mean pooling embeds both views, and the encoder plus a scalar MLP
//! estimator are trained to minimize the mutual information between
//! positive and negative views:
//!
//! ```text
//! L = -(1/m) sum_i Phi(p_i, n_i) + log[ (1/m) sum_{i != j} exp(Phi(p_i, n_j)) ]
//! ```
//!
//! Groups that carry strong patterns lose the most information under the
//! breaking augmentation, which is what the downstream detector picks up.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::graph::{propagation_matrix, AttributedGraph, GraphError};
use crate::matrix::DenseMatrix;
use crate::ndiff::{
    adam_step, gcn_layer, gcn_layer_backward, load_checkpoint, save_checkpoint, Activation,
    AdamHyper, AdamState, Mlp2, NdiffError, Param, SeededRng,
};
use crate::sampler::{fundamental_cycle_basis, CandidateGroup};

/// Output embedding width of the TPGCL encoder.
pub const EMBED_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum TpgclError {
    #[error("candidate group has no nodes")]
    EmptyGroup,
    #[error("negative view removed every node of the group")]
    DegenerateView,
    #[error("only {usable} usable groups; need at least 2")]
    TooFewGroups { usable: usize },
    #[error("MINE batch needs m >= 2 pairs, got {m}")]
    BatchTooSmall { m: usize },
    #[error("embedding width {got} does not match estimator input {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("added node carries {got} attributes, graph has {want}")]
    AttrDim { got: usize, want: usize },
    #[error("epochs must be >= 1")]
    NoEpochs,
    #[error("learning rate must be positive and finite, got {0}")]
    BadLr(f64),
    #[error("batch size must be >= 2")]
    BadBatch,
    #[error("hidden dims must be >= 1")]
    BadDims,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

/// A tree pattern inside a group: a root with at least two children and all
/// of its descendants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreePattern {
    pub root: usize,
    /// Root first, then BFS order.
    pub nodes: Vec<usize>,
    /// (parent, child) pairs.
    pub edges: Vec<(usize, usize)>,
}

/// The topology patterns found within one candidate group.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatternDecomposition {
    pub trees: Vec<TreePattern>,
    /// Ordered chains of length >= 3.
    pub paths: Vec<Vec<usize>>,
    /// Cyclic node sequences, canonically rotated.
    pub cycles: Vec<Vec<usize>>,
}

impl PatternDecomposition {
    pub fn is_empty(&self) -> bool {
        self.trees.is_empty() && self.paths.is_empty() && self.cycles.is_empty()
    }
}

/// Decomposes a group's own graph (its node list plus its edge list) into
/// patterns: the fundamental cycle basis first, then on the residual forest
/// left after deleting all cycle edges, trees rooted at nodes of residual
/// degree >= 3 (root plus descendants, BFS-oriented from the lowest index
/// per component) and maximal degree-<=2 chains of at least 3 nodes as
/// paths. Patterns are reported lowest-contained-index first.
pub fn find_patterns(group: &CandidateGroup) -> Result<PatternDecomposition, TpgclError> {
    if group.nodes.is_empty() {
        return Err(TpgclError::EmptyGroup);
    }
    // Local graph over sorted original ids, so local order == id order.
    let ids = group.sorted_nodes();
    let local: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let k = ids.len();
    let edges_local: Vec<(usize, usize)> =
        group.edges.iter().map(|&(a, b)| (local[&a], local[&b])).collect();
    let lg = AttributedGraph::new(&edges_local, DenseMatrix::zeros(k, 1))?;

    let basis = fundamental_cycle_basis(&lg, usize::MAX);
    let mut cycle_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for c in &basis {
        for &(a, b) in &c.edges {
            cycle_edges.insert((a.min(b), a.max(b)));
        }
    }

    // Residual forest: group edges minus all basis-cycle edges.
    let mut radj = vec![Vec::new(); k];
    for &(a, b) in &edges_local {
        if !cycle_edges.contains(&(a.min(b), a.max(b))) {
            radj[a].push(b);
            radj[b].push(a);
        }
    }
    for l in &mut radj {
        l.sort_unstable();
    }

    // BFS orientation of the residual forest from the lowest index per
    // component.
    let mut parent = vec![usize::MAX; k];
    let mut children = vec![Vec::new(); k];
    let mut seen = vec![false; k];
    for root in 0..k {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &w in &radj[u] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = u;
                    children[u].push(w);
                    queue.push_back(w);
                }
            }
        }
    }

    let mut trees = Vec::new();
    for root in 0..k {
        if radj[root].len() < 3 {
            continue;
        }
        let mut nodes = vec![root];
        let mut edges = Vec::new();
        let mut head = 0;
        while head < nodes.len() {
            let u = nodes[head];
            head += 1;
            for &c in &children[u] {
                nodes.push(c);
                edges.push((ids[u], ids[c]));
            }
        }
        trees.push(TreePattern {
            root: ids[root],
            nodes: nodes.into_iter().map(|v| ids[v]).collect(),
            edges,
        });
    }

    // Paths: components of the residual forest restricted to nodes of
    // residual degree <= 2, kept when the chain has >= 3 nodes.
    let mut paths = Vec::new();
    let mut used = vec![false; k];
    for start in 0..k {
        if used[start] || radj[start].len() > 2 {
            continue;
        }
        let mut comp = vec![start];
        used[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &w in &radj[u] {
                if !used[w] && radj[w].len() <= 2 {
                    used[w] = true;
                    comp.push(w);
                }
            }
        }
        if comp.len() < 3 {
            continue;
        }
        // The component is an acyclic chain; walk it from its lower
        // endpoint (degree 1 within the restricted subgraph).
        let in_comp: BTreeSet<usize> = comp.iter().copied().collect();
        let deg_in = |u: usize| radj[u].iter().filter(|w| in_comp.contains(w)).count();
        let start_node = comp.iter().copied().filter(|&u| deg_in(u) == 1).min().unwrap();
        let mut seq = vec![start_node];
        let mut prev = usize::MAX;
        loop {
            let cur = *seq.last().unwrap();
            let next = radj[cur].iter().copied().find(|&w| in_comp.contains(&w) && w != prev);
            match next {
                Some(w) => {
                    prev = cur;
                    seq.push(w);
                }
                None => break,
            }
        }
        paths.push(seq.into_iter().map(|v| ids[v]).collect::<Vec<_>>());
    }

    let mut cycles: Vec<Vec<usize>> = basis
        .into_iter()
        .map(|c| c.nodes.into_iter().map(|v| ids[v]).collect())
        .collect();

    trees.sort_by_key(|t| *t.nodes.iter().min().unwrap());
    paths.sort_by_key(|p| *p.iter().min().unwrap());
    cycles.sort_by_key(|c| *c.iter().min().unwrap());
    Ok(PatternDecomposition { trees, paths, cycles })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// A node synthesized by the pattern-preserving augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct AddedNode {
    pub attrs: Vec<f64>,
    /// Original node ids the new node attaches to.
    pub attach: Vec<usize>,
}

/// An augmentation of a candidate group. Positive views only add nodes;
/// negative views only remove them.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedView {
    pub base: CandidateGroup,
    pub added: Vec<AddedNode>,
    pub removed: Vec<usize>,
    pub polarity: Polarity,
}

/// One (n1, n2) pair per cycle pattern, adjacent on the ring so that the
/// negative view cuts the cycle open and the positive view can close a
/// cycle one node longer. Both views of an epoch share the same draw.
pub fn draw_cycle_pairs(patterns: &PatternDecomposition, rng: &mut SeededRng) -> Vec<(usize, usize)> {
    patterns
        .cycles
        .iter()
        .map(|c| {
            let i = rng.index(c.len());
            (c[i], c[(i + 1) % c.len()])
        })
        .collect()
}

/// Pattern-breaking augmentation: drops every tree root, every path's
/// middle node (index floor(L/2)), and both nodes of each cycle's drawn
/// pair. Joint removal set; errors if nothing would survive.
pub fn negative_view(
    group: &CandidateGroup,
    patterns: &PatternDecomposition,
    cycle_pairs: &[(usize, usize)],
) -> Result<AugmentedView, TpgclError> {
    let mut removed = BTreeSet::new();
    for t in &patterns.trees {
        removed.insert(t.root);
    }
    for p in &patterns.paths {
        removed.insert(p[p.len() / 2]);
    }
    for &(n1, n2) in cycle_pairs {
        removed.insert(n1);
        removed.insert(n2);
    }
    if removed.len() >= group.nodes.len() {
        return Err(TpgclError::DegenerateView);
    }
    Ok(AugmentedView {
        base: group.clone(),
        added: Vec::new(),
        removed: removed.into_iter().collect(),
        polarity: Polarity::Negative,
    })
}

fn mean_attrs(nodes: &[usize], x: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; x.cols];
    for &v in nodes {
        for (o, a) in out.iter_mut().zip(x.row(v)) {
            *o += a;
        }
    }
    for o in &mut out {
        *o /= nodes.len() as f64;
    }
    out
}

/// Pattern-preserving augmentation: adds one child under each tree root
/// (attributes = mean of the existing children), one neighbor at each
/// path's lower-index endpoint (mean of the path), and one node bridging
/// each cycle's drawn pair (mean of the cycle). Empty patterns leave the
/// group unchanged.
pub fn positive_view(
    group: &CandidateGroup,
    patterns: &PatternDecomposition,
    cycle_pairs: &[(usize, usize)],
    x: &DenseMatrix,
) -> AugmentedView {
    let mut added = Vec::new();
    for t in &patterns.trees {
        let children: Vec<usize> =
            t.edges.iter().filter(|&&(p, _)| p == t.root).map(|&(_, c)| c).collect();
        added.push(AddedNode { attrs: mean_attrs(&children, x), attach: vec![t.root] });
    }
    for p in &patterns.paths {
        let endpoint = *p.first().unwrap().min(p.last().unwrap());
        added.push(AddedNode { attrs: mean_attrs(p, x), attach: vec![endpoint] });
    }
    for (c, &(n1, n2)) in patterns.cycles.iter().zip(cycle_pairs) {
        added.push(AddedNode { attrs: mean_attrs(c, x), attach: vec![n1, n2] });
    }
    AugmentedView { base: group.clone(), added, removed: Vec::new(), polarity: Polarity::Positive }
}

/// Draws the per-cycle randomness once and builds both views from it.
pub fn make_views(
    group: &CandidateGroup,
    patterns: &PatternDecomposition,
    x: &DenseMatrix,
    rng: &mut SeededRng,
) -> Result<(AugmentedView, AugmentedView), TpgclError> {
    let pairs = draw_cycle_pairs(patterns, rng);
    let neg = negative_view(group, patterns, &pairs)?;
    let pos = positive_view(group, patterns, &pairs, x);
    Ok((pos, neg))
}

/// Where a view node came from: an original graph node or the k-th
/// synthesized node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeOrigin {
    Original(usize),
    Added(usize),
}

/// A view materialized as a standalone attributed graph.
pub struct ViewGraph {
    pub graph: AttributedGraph,
    pub origins: Vec<NodeOrigin>,
}

impl ViewGraph {
    /// The original (unaugmented) group as a view graph.
    pub fn of_group(group: &CandidateGroup, x: &DenseMatrix) -> Result<Self, TpgclError> {
        let view = AugmentedView {
            base: group.clone(),
            added: Vec::new(),
            removed: Vec::new(),
            polarity: Polarity::Positive,
        };
        materialize_view(&view, x)
    }

    pub fn local_of(&self, original: usize) -> Option<usize> {
        self.origins.iter().position(|&o| o == NodeOrigin::Original(original))
    }
}

/// Builds the concrete subgraph a view describes: surviving group nodes
/// keep their attribute rows from `x`, added nodes bring synthesized
/// attributes, and edges are the group's edges among survivors plus the
/// attachment edges.
pub fn materialize_view(view: &AugmentedView, x: &DenseMatrix) -> Result<ViewGraph, TpgclError> {
    let removed: BTreeSet<usize> = view.removed.iter().copied().collect();
    let survivors: Vec<usize> =
        view.base.nodes.iter().copied().filter(|v| !removed.contains(v)).collect();
    if survivors.is_empty() && view.added.is_empty() {
        return Err(TpgclError::DegenerateView);
    }
    let local: HashMap<usize, usize> =
        survivors.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut origins: Vec<NodeOrigin> =
        survivors.iter().map(|&v| NodeOrigin::Original(v)).collect();
    let n = survivors.len() + view.added.len();
    let mut rows = Vec::with_capacity(n);
    for &v in &survivors {
        rows.push(x.row(v).to_vec());
    }
    for (i, a) in view.added.iter().enumerate() {
        if a.attrs.len() != x.cols {
            return Err(TpgclError::AttrDim { got: a.attrs.len(), want: x.cols });
        }
        rows.push(a.attrs.clone());
        origins.push(NodeOrigin::Added(i));
    }
    let mut edges = Vec::new();
    for &(a, b) in &view.base.edges {
        if let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) {
            edges.push((la, lb));
        }
    }
    for (i, a) in view.added.iter().enumerate() {
        for t in &a.attach {
            if let Some(&lt) = local.get(t) {
                edges.push((survivors.len() + i, lt));
            }
        }
    }
    let graph = AttributedGraph::new(&edges, DenseMatrix::from_rows(&rows))?;
    Ok(ViewGraph { graph, origins })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpgclConfig {
    pub hidden: usize,
    pub phi_hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TpgclConfig {
    fn default() -> Self {
        TpgclConfig { hidden: 64, phi_hidden: 64, epochs: 30, lr: 1e-3, batch_size: 32 }
    }
}

impl TpgclConfig {
    pub fn validate(&self) -> Result<(), TpgclError> {
        if self.epochs == 0 {
            return Err(TpgclError::NoEpochs);
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TpgclError::BadLr(self.lr));
        }
        if self.batch_size < 2 {
            return Err(TpgclError::BadBatch);
        }
        if self.hidden == 0 || self.phi_hidden == 0 {
            return Err(TpgclError::BadDims);
        }
        Ok(())
    }
}

pub struct TpgclModel {
    pub enc_w1: Param,
    pub enc_w2: Param,
    pub phi: Mlp2,
    pub config: TpgclConfig,
}

impl TpgclModel {
    pub fn new(d: usize, config: TpgclConfig, rng: &mut SeededRng) -> Self {
        TpgclModel {
            enc_w1: Param::new("enc_w1", rng.glorot(d, config.hidden)),
            enc_w2: Param::new("enc_w2", rng.glorot(config.hidden, EMBED_DIM)),
            phi: Mlp2::new(2 * EMBED_DIM, config.phi_hidden, rng),
            config,
        }
    }

    fn zero_grad(&mut self) {
        self.enc_w1.zero_grad();
        self.enc_w2.zero_grad();
        self.phi.zero_grad();
    }
}

struct EmbCache {
    p: DenseMatrix,
    c1: crate::ndiff::GcnCache,
    c2: crate::ndiff::GcnCache,
    k: usize,
}

fn embed_cached(model: &TpgclModel, vg: &ViewGraph) -> (Vec<f64>, EmbCache) {
    let p = propagation_matrix(&vg.graph);
    let (h1, c1) = gcn_layer(&p, vg.graph.x(), &model.enc_w1.value, Activation::Relu);
    let (z, c2) = gcn_layer(&p, &h1, &model.enc_w2.value, Activation::Identity);
    let k = z.rows;
    let mut pooled = vec![0.0; EMBED_DIM];
    for i in 0..k {
        for (o, v) in pooled.iter_mut().zip(z.row(i)) {
            *o += v;
        }
    }
    for o in &mut pooled {
        *o /= k as f64;
    }
    (pooled, EmbCache { p, c1, c2, k })
}

fn embed_backward(model: &mut TpgclModel, cache: &EmbCache, d_pool: &[f64]) {
    let k = cache.k;
    let dz = DenseMatrix::from_fn(k, EMBED_DIM, |_, c| d_pool[c] / k as f64);
    let (dh1, dw2) =
        gcn_layer_backward(&cache.p, &model.enc_w2.value, &cache.c2, &dz, Activation::Identity);
    for (g, v) in model.enc_w2.grad.values.iter_mut().zip(&dw2.values) {
        *g += v;
    }
    let (_, dw1) =
        gcn_layer_backward(&cache.p, &model.enc_w1.value, &cache.c1, &dh1, Activation::Relu);
    for (g, v) in model.enc_w1.grad.values.iter_mut().zip(&dw1.values) {
        *g += v;
    }
}

/// Mean-pooled 2-layer GCN embedding of one view.
pub fn group_embedding(model: &TpgclModel, vg: &ViewGraph) -> Vec<f64> {
    embed_cached(model, vg).0
}

/// Batch evaluation of Phi over all (p_i, n_j) pairs. Phi's first layer
/// splits as W1^T [p; n] = A^T p + B^T n, so the m^2 pair table costs
/// O(m d h + m^2 h) instead of O(m^2 d h).
struct PhiBatch {
    a: DenseMatrix,
    b: DenseMatrix,
    vals: DenseMatrix,
}

fn phi_batch(phi: &Mlp2, emb_p: &[Vec<f64>], emb_n: &[Vec<f64>]) -> Result<PhiBatch, TpgclError> {
    let m = emb_p.len();
    let half = phi.in_dim() / 2;
    let h = phi.hidden();
    for e in emb_p.iter().chain(emb_n) {
        if e.len() != half {
            return Err(TpgclError::DimMismatch { got: e.len(), want: 2 * half });
        }
    }
    let w1 = &phi.w1.value;
    let half_proj = |embs: &[Vec<f64>], row0: usize| {
        DenseMatrix::from_fn(m, h, |i, c| {
            let mut acc = 0.0;
            for (k, &e) in embs[i].iter().enumerate() {
                if e != 0.0 {
                    acc += e * w1.get(row0 + k, c);
                }
            }
            acc
        })
    };
    let a = half_proj(emb_p, 0);
    let b = half_proj(emb_n, half);
    let b1 = &phi.b1.value;
    let w2 = &phi.w2.value;
    let b2 = phi.b2.value.get(0, 0);
    let vals = DenseMatrix::from_fn(m, m, |i, j| {
        let mut acc = b2;
        for c in 0..h {
            let pre = a.get(i, c) + b.get(j, c) + b1.get(0, c);
            if pre > 0.0 {
                acc += w2.get(c, 0) * pre;
            }
        }
        acc
    });
    Ok(PhiBatch { a, b, vals })
}

/// Eq.-style MINE loss over paired view embeddings:
/// `-(1/m) sum_i Phi(p_i,n_i) + log[(1/m) sum_{i!=j} exp(Phi(p_i,n_j))]`.
/// The log term uses a max-shifted sum for stability.
pub fn mine_loss(
    phi: &Mlp2,
    emb_p: &[Vec<f64>],
    emb_n: &[Vec<f64>],
) -> Result<f64, TpgclError> {
    let m = emb_p.len();
    if m < 2 || emb_n.len() != m {
        return Err(TpgclError::BatchTooSmall { m: m.min(emb_n.len()) });
    }
    let batch = phi_batch(phi, emb_p, emb_n)?;
    Ok(loss_from_vals(&batch.vals))
}

fn loss_from_vals(vals: &DenseMatrix) -> f64 {
    let m = vals.rows;
    let mut diag = 0.0;
    let mut max_off = f64::NEG_INFINITY;
    for i in 0..m {
        diag += vals.get(i, i);
        for j in 0..m {
            if i != j {
                max_off = max_off.max(vals.get(i, j));
            }
        }
    }
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                sum += (vals.get(i, j) - max_off).exp();
            }
        }
    }
    -diag / m as f64 + max_off + sum.ln() - (m as f64).ln()
}

/// MINE loss plus gradients: accumulates into `phi`'s parameter grads and
/// returns (loss, d loss/d p_i, d loss/d n_j).
pub fn mine_loss_with_grads(
    phi: &mut Mlp2,
    emb_p: &[Vec<f64>],
    emb_n: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), TpgclError> {
    let m = emb_p.len();
    if m < 2 || emb_n.len() != m {
        return Err(TpgclError::BatchTooSmall { m: m.min(emb_n.len()) });
    }
    let batch = phi_batch(phi, emb_p, emb_n)?;
    let loss = loss_from_vals(&batch.vals);

    // Pair coefficients: d L / d Phi_ij.
    let mut max_off = f64::NEG_INFINITY;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                max_off = max_off.max(batch.vals.get(i, j));
            }
        }
    }
    let mut denom = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                denom += (batch.vals.get(i, j) - max_off).exp();
            }
        }
    }
    let coeff = |i: usize, j: usize, vals: &DenseMatrix| -> f64 {
        if i == j {
            -1.0 / m as f64
        } else {
            (vals.get(i, j) - max_off).exp() / denom
        }
    };

    let h = phi.hidden();
    let half = phi.in_dim() / 2;
    let b1 = phi.b1.value.clone();
    let w2 = phi.w2.value.clone();
    let mut da = DenseMatrix::zeros(m, h);
    let mut db = DenseMatrix::zeros(m, h);
    let mut dw2 = vec![0.0; h];
    let mut db2 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c_ij = coeff(i, j, &batch.vals);
            db2 += c_ij;
            for c in 0..h {
                let pre = batch.a.get(i, c) + batch.b.get(j, c) + b1.get(0, c);
                if pre > 0.0 {
                    dw2[c] += c_ij * pre;
                    let dpre = c_ij * w2.get(c, 0);
                    *da.row_mut(i).get_mut(c).unwrap() += dpre;
                    *db.row_mut(j).get_mut(c).unwrap() += dpre;
                }
            }
        }
    }
    for (g, v) in phi.w2.grad.values.iter_mut().zip(&dw2) {
        *g += v;
    }
    phi.b2.grad.values[0] += db2;
    for c in 0..h {
        let col_sum: f64 = (0..m).map(|i| da.get(i, c)).sum();
        phi.b1.grad.values[c] += col_sum;
    }
    // dW1 top half from p embeddings, bottom half from n embeddings.
    for i in 0..m {
        for (k, &e) in emb_p[i].iter().enumerate() {
            if e != 0.0 {
                for c in 0..h {
                    *phi.w1.grad.row_mut(k).get_mut(c).unwrap() += e * da.get(i, c);
                }
            }
        }
        for (k, &e) in emb_n[i].iter().enumerate() {
            if e != 0.0 {
                for c in 0..h {
                    *phi.w1.grad.row_mut(half + k).get_mut(c).unwrap() += e * db.get(i, c);
                }
            }
        }
    }
    let w1 = &phi.w1.value;
    let dp: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..half)
                .map(|k| (0..h).map(|c| da.get(i, c) * w1.get(k, c)).sum())
                .collect()
        })
        .collect();
    let dn: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            (0..half)
                .map(|k| (0..h).map(|c| db.get(j, c) * w1.get(half + k, c)).sum())
                .collect()
        })
        .collect();
    Ok((loss, dp, dn))
}

pub struct TrainedTpgcl {
    pub model: TpgclModel,
    /// Mean minibatch loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Trains encoder and estimator jointly: per epoch, shuffle the groups,
/// regenerate both views for each group (fresh cycle randomness), and run
/// Adam on the MINE loss per minibatch. Groups whose negative view
/// degenerates are skipped; single-group leftover batches are skipped.
pub fn train_tpgcl(
    groups: &[CandidateGroup],
    g: &AttributedGraph,
    config: &TpgclConfig,
    seed: u64,
) -> Result<TrainedTpgcl, TpgclError> {
    config.validate()?;
    if groups.len() < 2 {
        return Err(TpgclError::TooFewGroups { usable: groups.len() });
    }
    let patterns: Vec<PatternDecomposition> =
        groups.iter().map(find_patterns).collect::<Result<_, _>>()?;

    let mut rng = SeededRng::new(seed);
    let mut model = TpgclModel::new(g.dim(), *config, &mut rng);
    let hyper = AdamHyper { lr: config.lr, ..Default::default() };
    let mut adam = {
        let [pw1, pb1, pw2, pb2] = model.phi.params();
        AdamState::new(&[&model.enc_w1, &model.enc_w2, pw1, pb1, pw2, pb2])
    };
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        rng.shuffle(&mut order);
        let mut skipped = 0usize;
        let mut usable_total = 0usize;
        let mut batch_losses = Vec::new();

        for batch in order.chunks(config.batch_size) {
            let mut emb_p = Vec::new();
            let mut emb_n = Vec::new();
            let mut caches = Vec::new();
            for &gi in batch {
                let (pos, neg) = match make_views(&groups[gi], &patterns[gi], g.x(), &mut rng) {
                    Ok(v) => v,
                    Err(TpgclError::DegenerateView) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let vp = materialize_view(&pos, g.x())?;
                let vn = materialize_view(&neg, g.x())?;
                let (ep, cp) = embed_cached(&model, &vp);
                let (en, cn) = embed_cached(&model, &vn);
                emb_p.push(ep);
                emb_n.push(en);
                caches.push((cp, cn));
            }
            usable_total += emb_p.len();
            if emb_p.len() < 2 {
                continue;
            }
            model.zero_grad();
            let (loss, dp, dn) = mine_loss_with_grads(&mut model.phi, &emb_p, &emb_n)?;
            if !loss.is_finite() {
                return Err(NdiffError::NonFiniteLoss { epoch }.into());
            }
            for ((cp, cn), (dpi, dni)) in caches.iter().zip(dp.iter().zip(&dn)) {
                embed_backward(&mut model, cp, dpi);
                embed_backward(&mut model, cn, dni);
            }
            {
                let TpgclModel { enc_w1, enc_w2, phi, .. } = &mut model;
                let Mlp2 { w1, b1, w2, b2 } = phi;
                adam_step(&mut [enc_w1, enc_w2, w1, b1, w2, b2], &mut adam, &hyper)?;
            }
            batch_losses.push(loss);
        }

        if usable_total < 2 || batch_losses.is_empty() {
            return Err(TpgclError::TooFewGroups { usable: usable_total });
        }
        if skipped > 0 {
            log::info!("tpgcl epoch {epoch}: skipped {skipped} degenerate groups");
        }
        history.push(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64);
    }
    Ok(TrainedTpgcl { model, loss_history: history })
}

/// Embeds every original (unaugmented) group with a trained model.
pub fn embed_all(
    model: &TpgclModel,
    groups: &[CandidateGroup],
    g: &AttributedGraph,
) -> Result<Vec<Vec<f64>>, TpgclError> {
    groups
        .iter()
        .map(|grp| Ok(group_embedding(model, &ViewGraph::of_group(grp, g.x())?)))
        .collect()
}

pub const MODEL_PARAMS: [&str; 6] =
    ["enc_w1", "enc_w2", "phi_w1", "phi_b1", "phi_w2", "phi_b2"];

pub fn save_model(model: &TpgclModel, seed: u64, path: impl AsRef<Path>) -> Result<(), TpgclError> {
    let [pw1, pb1, pw2, pb2] = model.phi.params();
    Ok(save_checkpoint(
        path,
        seed,
        &[&model.enc_w1, &model.enc_w2, pw1, pb1, pw2, pb2],
    )?)
}

pub fn load_model(path: impl AsRef<Path>, config: TpgclConfig) -> Result<TpgclModel, TpgclError> {
    let ck = load_checkpoint(path)?;
    Ok(TpgclModel {
        enc_w1: ck.take("enc_w1")?,
        enc_w2: ck.take("enc_w2")?,
        phi: Mlp2 {
            w1: ck.take("phi_w1")?,
            b1: ck.take("phi_b1")?,
            w2: ck.take("phi_w2")?,
            b2: ck.take("phi_b2")?,
        },
        config,
    })
}

/// CSV export: `group_id,e0,...,e{D-1}`, one row per group in input order.
pub fn save_embeddings_csv(embs: &[Vec<f64>], path: impl AsRef<Path>) -> Result<(), TpgclError> {
    let path = path.as_ref();
    let err = |msg: String| TpgclError::File { path: path.display().to_string(), msg };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = BufWriter::new(file);
    let width = embs.first().map_or(EMBED_DIM, Vec::len);
    let header: Vec<String> =
        std::iter::once("group_id".to_string()).chain((0..width).map(|i| format!("e{i}"))).collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| err(e.to_string()))?;
    for (i, emb) in embs.iter().enumerate() {
        let row: Vec<String> =
            std::iter::once(i.to_string()).chain(emb.iter().map(f64::to_string)).collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn load_embeddings_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>, TpgclError> {
    let path = path.as_ref();
    let err = |msg: String| TpgclError::File { path: path.display().to_string(), msg };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if ln == 0 {
            continue;
        }
        let mut cells = line.split(',');
        let id: usize = cells
            .next()
            .ok_or_else(|| err(format!("line {}: empty", ln + 1)))?
            .parse()
            .map_err(|e| err(format!("line {}: {e}", ln + 1)))?;
        if id != out.len() {
            return Err(err(format!("line {}: expected group {} got {id}", ln + 1, out.len())));
        }
        let row: Vec<f64> = cells
            .map(|c| c.parse().map_err(|e| err(format!("line {}: {e}", ln + 1))))
            .collect::<Result<_, _>>()?;
        out.push(row);
    }
    Ok(out)
}
