//! Undirected attributed graphs, their on-disk formats, and the adjacency
//! reconstruction targets the autoencoder trains against.
//!
//! All targets share one convention: entries are max-normalized into [0, 1]
//! (divide by the largest off-diagonal entry) and the diagonal is zeroed, so
//! the decoder always regresses against the same scale regardless of target
//! kind.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({u}, {v}) is out of range for {n} nodes")]
    EdgeOutOfRange { u: usize, v: usize, n: usize },
    #[error("attribute row {row} has {got} values, expected {expected}")]
    RaggedAttributes { row: usize, got: usize, expected: usize },
    #[error("attribute ({node}, {col}) is not finite")]
    NonFiniteAttribute { node: usize, col: usize },
    #[error("k-hop target needs k >= 1")]
    ZeroHop,
    #[error("overlap exponent must be finite, got {0}")]
    BadLambda(f64),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io { path: path.display().to_string(), source }
}

/// The three topology pattern kinds that appear throughout the pipeline:
/// sampled groups carry one as provenance, pattern decomposition reports
/// them, and synthetic benchmarks tag injected groups with them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Path,
    Tree,
    Cycle,
}

/// A ground-truth anomalous group: a node set, optionally tagged with the
/// pattern that was injected to create it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtGroup {
    pub nodes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternKind>,
}

/// Simple undirected graph with one f64 attribute row per node.
///
/// Invariants, enforced on construction: no self-loops, no duplicate edges,
/// every endpoint in range, attributes finite, adjacency lists sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    x: DenseMatrix,
}

impl AttributedGraph {
    /// Node count is taken from the attribute matrix. Self-loops and
    /// duplicate edges are dropped (with a warning if any were present);
    /// out-of-range endpoints are an error.
    pub fn new(edges: &[(usize, usize)], x: DenseMatrix) -> Result<Self, GraphError> {
        let n = x.rows;
        if n == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(GraphError::NonFiniteAttribute { node: i, col: j });
                }
            }
        }
        let mut set = BTreeSet::new();
        let mut dropped = 0usize;
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::EdgeOutOfRange { u, v, n });
            }
            if u == v {
                dropped += 1;
                continue;
            }
            if !set.insert((u.min(v), u.max(v))) {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} self-loop/duplicate edges");
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(AttributedGraph { n, edges, neighbors, x })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Attribute dimensionality.
    pub fn dim(&self) -> usize {
        self.x.cols
    }

    /// Normalized (u < v), sorted, deduplicated edge list.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.neighbors[u].binary_search(&v).is_ok()
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    /// 0/1 adjacency as a dense matrix.
    pub fn adjacency(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Copy of the graph with every attribute row rescaled to unit L2 norm;
    /// all-zero rows are kept as-is. Standard feature preprocessing for GCN
    /// encoders: raw attribute scales push latent inner products into the
    /// flat tails of the sigmoid structure decoder, where training stalls.
    pub fn unit_norm_attrs(&self) -> AttributedGraph {
        let mut x = self.x.clone();
        for i in 0..x.rows {
            let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in x.row_mut(i) {
                    *v /= norm;
                }
            }
        }
        AttributedGraph { n: self.n, edges: self.edges.clone(), neighbors: self.neighbors.clone(), x }
    }
}

/// Which adjacency-derived matrix the autoencoder reconstructs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// The adjacency matrix itself.
    Plain,
    /// k-th power of the adjacency: multi-hop walk counts.
    KHop { k: usize },
    /// Neighborhood-overlap weighted adjacency.
    OverlapWeighted { lambda: f64 },
}

/// A reconstruction target: symmetric, entries in [0, 1], zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconTarget {
    pub kind: TargetKind,
    pub m: DenseMatrix,
}

pub fn build_target(g: &AttributedGraph, kind: TargetKind) -> Result<ReconTarget, GraphError> {
    match kind {
        TargetKind::Plain => Ok(plain_target(g)),
        TargetKind::KHop { k } => khop_target(g, k),
        TargetKind::OverlapWeighted { lambda } => overlap_weighted_adjacency(g, lambda),
    }
}

/// Divides every entry by the maximum off-diagonal entry (no-op when the
/// matrix has no positive off-diagonal entry), then zeroes the diagonal.
fn normalize_target(mut m: DenseMatrix) -> DenseMatrix {
    let n = m.rows;
    let mut max = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max = max.max(m.get(i, j));
            }
        }
    }
    if max > 0.0 {
        for v in &mut m.values {
            *v /= max;
        }
    }
    for i in 0..n {
        m.set(i, i, 0.0);
    }
    m
}

/// Max-normalized adjacency with zero diagonal. Identical to
/// `khop_target(g, 1)` up to the recorded kind.
pub fn plain_target(g: &AttributedGraph) -> ReconTarget {
    ReconTarget { kind: TargetKind::Plain, m: normalize_target(g.adjacency()) }
}

/// A^k computed by repeated matrix product of the 0/1 adjacency, then
/// max-normalized with the diagonal zeroed. Entry (i, j) of the raw power
/// counts length-k walks from i to j, so the target rewards multi-hop
/// structural similarity rather than direct adjacency alone.
pub fn khop_target(g: &AttributedGraph, k: usize) -> Result<ReconTarget, GraphError> {
    if k == 0 {
        return Err(GraphError::ZeroHop);
    }
    let a = g.adjacency();
    let mut m = a.clone();
    for _ in 1..k {
        m = m.matmul(&a);
    }
    Ok(ReconTarget { kind: TargetKind::KHop { k }, m: normalize_target(m) })
}

/// Raw overlap weight of the edge (u, v).
///
/// With S_w the subgraph induced by w's closed neighborhood and
/// S = S_u intersect S_v (vertex set V, edge set E, both intersections):
///
/// ```text
/// weight = |E| / (|V| * (|V| - 1)) * |V|^lambda
/// ```
///
/// |E| counts unordered edges. For adjacent u, v the intersection always
/// contains both endpoints, so |V| >= 2 and the weight is well defined.
pub fn overlap_weight(g: &AttributedGraph, u: usize, v: usize, lambda: f64) -> f64 {
    debug_assert!(g.has_edge(u, v));
    let closed = |w: usize| -> Vec<usize> {
        let mut s = g.neighbors(w).to_vec();
        match s.binary_search(&w) {
            Ok(_) => {}
            Err(pos) => s.insert(pos, w),
        }
        s
    };
    let a = closed(u);
    let b = closed(v);
    // Sorted-merge intersection of the two closed neighborhoods.
    let mut inter = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    let c = inter.len();
    if c < 2 {
        return 0.0;
    }
    // Edges of G with both endpoints inside the intersection; equivalently
    // the intersection of the two induced edge sets.
    let mut e = 0usize;
    for &w in &inter {
        for &nb in g.neighbors(w) {
            if nb > w && inter.binary_search(&nb).is_ok() {
                e += 1;
            }
        }
    }
    e as f64 / (c * (c - 1)) as f64 * (c as f64).powf(lambda)
}

/// Overlap-weighted adjacency: every edge is reweighted by how strongly the
/// closed neighborhoods of its endpoints overlap, then the matrix is
/// max-normalized with zero diagonal. Non-edges stay zero.
pub fn overlap_weighted_adjacency(
    g: &AttributedGraph,
    lambda: f64,
) -> Result<ReconTarget, GraphError> {
    if !lambda.is_finite() {
        return Err(GraphError::BadLambda(lambda));
    }
    let mut m = DenseMatrix::zeros(g.n(), g.n());
    for &(u, v) in g.edges() {
        let w = overlap_weight(g, u, v, lambda);
        m.set(u, v, w);
        m.set(v, u, w);
    }
    Ok(ReconTarget {
        kind: TargetKind::OverlapWeighted { lambda },
        m: normalize_target(m),
    })
}

/// Symmetric-normalized propagation matrix with self-loops:
/// `D^-1/2 (A + I) D^-1/2` where D is the degree matrix of A + I.
pub fn propagation_matrix(g: &AttributedGraph) -> DenseMatrix {
    propagation_from_adj(&g.neighbors)
}

/// Same construction from bare adjacency lists; used for the small local
/// subgraphs built around candidate groups.
pub(crate) fn propagation_from_adj(neighbors: &[Vec<usize>]) -> DenseMatrix {
    let n = neighbors.len();
    let inv_sqrt: Vec<f64> = neighbors
        .iter()
        .map(|nb| 1.0 / ((nb.len() + 1) as f64).sqrt())
        .collect();
    let mut p = DenseMatrix::zeros(n, n);
    for (u, nb) in neighbors.iter().enumerate() {
        p.set(u, u, inv_sqrt[u] * inv_sqrt[u]);
        for &v in nb {
            p.set(u, v, inv_sqrt[u] * inv_sqrt[v]);
        }
    }
    p
}

/// Edge list format: one `u v` pair per line, whitespace separated, `#`
/// starts a comment. Node count comes from the feature file, so endpoints
/// beyond it are an error.
pub fn load_graph(
    edges_path: impl AsRef<Path>,
    features_path: impl AsRef<Path>,
) -> Result<AttributedGraph, GraphError> {
    let features_path = features_path.as_ref();
    let file = File::open(features_path).map_err(|e| io_err(features_path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(features_path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| GraphError::Parse {
                path: features_path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad attribute value {tok:?}"),
            })?;
            row.push(v);
        }
        if !rows.is_empty() && row.len() != rows[0].len() {
            return Err(GraphError::RaggedAttributes {
                row: rows.len(),
                got: row.len(),
                expected: rows[0].len(),
            });
        }
        rows.push(row);
    }
    let x = DenseMatrix::from_rows(&rows);

    let edges_path = edges_path.as_ref();
    let file = File::open(edges_path).map_err(|e| io_err(edges_path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(edges_path, e))?;
        let data = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let toks: Vec<&str> = data.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 {
            return Err(GraphError::Parse {
                path: edges_path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected `u v`, got {data:?}"),
            });
        }
        let parse = |tok: &str| -> Result<usize, GraphError> {
            tok.parse().map_err(|_| GraphError::Parse {
                path: edges_path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad node index {tok:?}"),
            })
        };
        edges.push((parse(toks[0])?, parse(toks[1])?));
    }
    AttributedGraph::new(&edges, x)
}

pub fn save_graph(
    g: &AttributedGraph,
    edges_path: impl AsRef<Path>,
    features_path: impl AsRef<Path>,
) -> Result<(), GraphError> {
    let edges_path = edges_path.as_ref();
    let mut w = BufWriter::new(File::create(edges_path).map_err(|e| io_err(edges_path, e))?);
    for &(u, v) in g.edges() {
        writeln!(w, "{u} {v}").map_err(|e| io_err(edges_path, e))?;
    }
    w.flush().map_err(|e| io_err(edges_path, e))?;

    let features_path = features_path.as_ref();
    let mut w =
        BufWriter::new(File::create(features_path).map_err(|e| io_err(features_path, e))?);
    for i in 0..g.n() {
        let row: Vec<String> = g.x().row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| io_err(features_path, e))?;
    }
    w.flush().map_err(|e| io_err(features_path, e))
}

/// Ground-truth groups persist as a JSON array of `{"nodes": [...]}`
/// objects; generated benchmarks additionally tag each with `"pattern"`.
pub fn load_gt_groups(path: impl AsRef<Path>) -> Result<Vec<GtGroup>, GraphError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| GraphError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn save_gt_groups(groups: &[GtGroup], path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, groups).map_err(|e| GraphError::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    w.flush().map_err(|e| io_err(path, e))
}
