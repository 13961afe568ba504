//! Candidate group sampling: paths, trees, and cycles rooted at anchors.
//!
//! Three seeded searches produce candidate anomaly groups from an anchor
//! set: one shortest path per anchor pair, one depth-truncated BFS tree per
//! anchor pair (kept only when the second anchor lands inside), and every
//! fundamental-basis cycle through an anchor. All tie-breaking is by lowest
//! node index, so the output is a deterministic function of the graph, the
//! anchors, and the size caps.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AttributedGraph, PatternKind};
use crate::mhgae::AnchorSet;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("node {node} is out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("path endpoints must differ, got {0} twice")]
    SameEndpoints(usize),
    #[error("tree depth must be >= 1")]
    BadDepth,
    #[error("anchor set is empty")]
    EmptyAnchors,
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

/// Which search produced a group, and from which anchors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Path { v: usize, mu: usize },
    Tree { v: usize, mu: usize, depth: usize },
    Cycle { v: usize },
}

impl Provenance {
    pub fn kind(&self) -> PatternKind {
        match self {
            Provenance::Path { .. } => PatternKind::Path,
            Provenance::Tree { .. } => PatternKind::Tree,
            Provenance::Cycle { .. } => PatternKind::Cycle,
        }
    }

    pub fn anchors(&self) -> Vec<usize> {
        match *self {
            Provenance::Path { v, mu } => vec![v, mu],
            Provenance::Tree { v, mu, .. } => vec![v, mu],
            Provenance::Cycle { v } => vec![v],
        }
    }
}

/// A sampled group: nodes in pattern order (path order, BFS order, or cyclic
/// order) plus the pattern's edges, each of which is an edge of the host
/// graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub provenance: Provenance,
}

impl CandidateGroup {
    pub fn kind(&self) -> PatternKind {
        self.provenance.kind()
    }

    pub fn sorted_nodes(&self) -> Vec<usize> {
        let mut v = self.nodes.clone();
        v.sort_unstable();
        v
    }

    /// Checks the structural invariants against the host graph: nonempty
    /// distinct in-range nodes, every edge present in `g` with both
    /// endpoints in the group, and provenance anchors that are members.
    pub fn validate(&self, g: &AttributedGraph) -> Result<(), SamplerError> {
        let n = g.n();
        if self.nodes.is_empty() {
            return Err(SamplerError::EmptyAnchors);
        }
        let set: HashSet<usize> = self.nodes.iter().copied().collect();
        if set.len() != self.nodes.len() {
            return Err(SamplerError::SameEndpoints(self.nodes[0]));
        }
        for &v in &self.nodes {
            if v >= n {
                return Err(SamplerError::NodeOutOfRange { node: v, n });
            }
        }
        for &(u, v) in &self.edges {
            if !set.contains(&u) || !set.contains(&v) || !g.has_edge(u, v) {
                return Err(SamplerError::NodeOutOfRange { node: u.max(v), n });
            }
        }
        for a in self.provenance.anchors() {
            if !set.contains(&a) {
                return Err(SamplerError::NodeOutOfRange { node: a, n });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// BFS tree truncation depth `t`.
    pub tree_depth: usize,
    /// Maximum path length in edges.
    pub max_path_len: usize,
    /// Maximum surviving tree size in nodes.
    pub max_tree_nodes: usize,
    /// Maximum cycle length in nodes.
    pub max_cycle_len: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { tree_depth: 3, max_path_len: 10, max_tree_nodes: 50, max_cycle_len: 12 }
    }
}

fn check_node(g: &AttributedGraph, v: usize) -> Result<(), SamplerError> {
    if v >= g.n() {
        return Err(SamplerError::NodeOutOfRange { node: v, n: g.n() });
    }
    Ok(())
}

/// BFS distances from `src`; `None` marks unreachable nodes. With unit edge
/// weights this computes exactly the Bellman-Ford shortest distances.
fn bfs_distances(g: &AttributedGraph, src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    dist[src] = Some(0);
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &w in g.neighbors(u) {
            if dist[w].is_none() {
                dist[w] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// One shortest path from `v` to `mu` (unit weights), or `None` when the
/// nodes are disconnected or the path exceeds `max_len` edges. Ties between
/// equal-length paths break toward the lowest-index predecessor, giving the
/// lexicographically smallest node sequence under that rule.
pub fn path_search(
    g: &AttributedGraph,
    v: usize,
    mu: usize,
    max_len: usize,
) -> Result<Option<CandidateGroup>, SamplerError> {
    check_node(g, v)?;
    check_node(g, mu)?;
    if v == mu {
        return Err(SamplerError::SameEndpoints(v));
    }
    let dist = bfs_distances(g, v);
    let Some(d) = dist[mu] else { return Ok(None) };
    if d > max_len {
        return Ok(None);
    }
    let mut rev = vec![mu];
    let mut cur = mu;
    while cur != v {
        let want = dist[cur].unwrap() - 1;
        // Neighbors are sorted, so the first hit is the lowest index.
        cur = *g
            .neighbors(cur)
            .iter()
            .find(|&&w| dist[w] == Some(want))
            .expect("BFS predecessor must exist");
        rev.push(cur);
    }
    rev.reverse();
    let edges = rev.windows(2).map(|w| (w[0], w[1])).collect();
    Ok(Some(CandidateGroup { nodes: rev, edges, provenance: Provenance::Path { v, mu } }))
}

/// BFS shortest-path tree rooted at `v`, truncated at depth `t` (children in
/// ascending index order). Oversized trees are trimmed by repeatedly
/// dropping the highest-index node at the current maximum depth; the group
/// is returned only if `mu` survives.
pub fn tree_search(
    g: &AttributedGraph,
    v: usize,
    mu: usize,
    t: usize,
    max_nodes: usize,
) -> Result<Option<CandidateGroup>, SamplerError> {
    check_node(g, v)?;
    check_node(g, mu)?;
    if t < 1 {
        return Err(SamplerError::BadDepth);
    }
    // order: (node, parent, depth) in BFS discovery order.
    let mut order = vec![(v, usize::MAX, 0usize)];
    let mut seen = vec![false; g.n()];
    seen[v] = true;
    let mut head = 0;
    while head < order.len() {
        let (u, _, d) = order[head];
        head += 1;
        if d == t {
            continue;
        }
        for &w in g.neighbors(u) {
            if !seen[w] {
                seen[w] = true;
                order.push((w, u, d + 1));
            }
        }
    }

    let mut alive = vec![true; order.len()];
    let mut count = order.len();
    while count > max_nodes {
        // The victim is at the maximum surviving depth, so it is a leaf.
        let victim = order
            .iter()
            .enumerate()
            .filter(|(i, _)| alive[*i])
            .max_by_key(|(_, &(node, _, depth))| (depth, node))
            .map(|(i, _)| i)
            .unwrap();
        alive[victim] = false;
        count -= 1;
    }

    if !order.iter().enumerate().any(|(i, &(node, _, _))| alive[i] && node == mu) {
        return Ok(None);
    }
    let mut nodes = Vec::with_capacity(count);
    let mut edges = Vec::with_capacity(count.saturating_sub(1));
    for (i, &(node, parent, _)) in order.iter().enumerate() {
        if alive[i] {
            nodes.push(node);
            if parent != usize::MAX {
                edges.push((parent, node));
            }
        }
    }
    Ok(Some(CandidateGroup { nodes, edges, provenance: Provenance::Tree { v, mu, depth: t } }))
}

/// One cycle of the fundamental basis: nodes in cyclic order, canonically
/// rotated (lowest node first, lexicographically smaller direction).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisCycle {
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

/// Fundamental cycle basis via a BFS spanning forest (roots at the lowest
/// index per component, children in ascending order) plus one cycle per
/// chord, chords taken in sorted edge order. Cycles longer than `max_len`
/// nodes are discarded; the basis of an acyclic graph is empty.
pub fn fundamental_cycle_basis(g: &AttributedGraph, max_len: usize) -> Vec<BasisCycle> {
    let n = g.n();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0usize; n];
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &w in g.neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = u;
                    depth[w] = depth[u] + 1;
                    queue.push_back(w);
                }
            }
        }
    }

    let mut cycles = Vec::new();
    for &(u, w) in g.edges() {
        if parent[w] == u || parent[u] == w {
            continue; // tree edge
        }
        // Walk both endpoints up to their LCA, aborting once the cycle
        // would exceed max_len nodes.
        let (mut a, mut b) = (u, w);
        let mut pa = vec![a];
        let mut pb = vec![b];
        let fits = |pa: &Vec<usize>, pb: &Vec<usize>| pa.len() + pb.len() - 1 <= max_len;
        let mut ok = true;
        while depth[a] != depth[b] {
            if depth[a] > depth[b] {
                a = parent[a];
                pa.push(a);
            } else {
                b = parent[b];
                pb.push(b);
            }
            if !fits(&pa, &pb) {
                ok = false;
                break;
            }
        }
        while ok && a != b {
            a = parent[a];
            pa.push(a);
            b = parent[b];
            pb.push(b);
            if !fits(&pa, &pb) {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        // pa runs u..=lca, pb runs w..=lca; drop pb's lca and reverse to
        // close the loop u .. lca .. w (the chord closes w-u).
        pb.pop();
        pb.reverse();
        pa.extend(pb);
        let nodes = canonical_rotation(&pa);
        let mut edges: Vec<(usize, usize)> =
            nodes.windows(2).map(|p| (p[0], p[1])).collect();
        edges.push((*nodes.last().unwrap(), nodes[0]));
        cycles.push(BasisCycle { nodes, edges });
    }
    cycles
}

/// Rotates/reflects a cyclic node sequence so the lowest node comes first
/// and the second element is the smaller of its two ring neighbors.
fn canonical_rotation(cycle: &[usize]) -> Vec<usize> {
    let l = cycle.len();
    let pos = (0..l).min_by_key(|&i| cycle[i]).unwrap();
    let fwd: Vec<usize> = (0..l).map(|i| cycle[(pos + i) % l]).collect();
    let bwd: Vec<usize> = (0..l).map(|i| cycle[(pos + l - i) % l]).collect();
    if fwd <= bwd {
        fwd
    } else {
        bwd
    }
}

/// All fundamental-basis cycles through `v`, at most `max_len` nodes each.
pub fn cycle_search(
    g: &AttributedGraph,
    v: usize,
    max_len: usize,
) -> Result<Vec<CandidateGroup>, SamplerError> {
    check_node(g, v)?;
    Ok(fundamental_cycle_basis(g, max_len)
        .into_iter()
        .filter(|c| c.nodes.contains(&v))
        .map(|c| CandidateGroup {
            nodes: c.nodes,
            edges: c.edges,
            provenance: Provenance::Cycle { v },
        })
        .collect())
}

/// Runs the full sampling loop: for each anchor `v`, paths and trees to
/// every other anchor, then `v`'s cycles. Exact duplicates (same node set
/// and same pattern kind) collapse to the first occurrence; overlapping and
/// near-duplicate groups are deliberately retained.
pub fn sample_candidate_groups(
    g: &AttributedGraph,
    anchors: &AnchorSet,
    cfg: &SamplerConfig,
) -> Result<Vec<CandidateGroup>, SamplerError> {
    if anchors.is_empty() {
        return Err(SamplerError::EmptyAnchors);
    }
    if cfg.tree_depth < 1 {
        return Err(SamplerError::BadDepth);
    }
    for &a in anchors.nodes() {
        check_node(g, a)?;
    }
    let mut out = Vec::new();
    let mut seen: HashSet<(Vec<usize>, PatternKind)> = HashSet::new();
    let mut push = |group: CandidateGroup, out: &mut Vec<CandidateGroup>| {
        if seen.insert((group.sorted_nodes(), group.kind())) {
            out.push(group);
        }
    };
    for &v in anchors.nodes() {
        for &mu in anchors.nodes() {
            if mu == v {
                continue;
            }
            if let Some(p) = path_search(g, v, mu, cfg.max_path_len)? {
                push(p, &mut out);
            }
            if let Some(t) = tree_search(g, v, mu, cfg.tree_depth, cfg.max_tree_nodes)? {
                push(t, &mut out);
            }
        }
        for c in cycle_search(g, v, cfg.max_cycle_len)? {
            push(c, &mut out);
        }
    }
    Ok(out)
}

pub fn save_groups(groups: &[CandidateGroup], path: impl AsRef<Path>) -> Result<(), SamplerError> {
    let path = path.as_ref();
    let err = |msg: String| SamplerError::File { path: path.display().to_string(), msg };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, groups).map_err(|e| err(e.to_string()))?;
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn load_groups(path: impl AsRef<Path>) -> Result<Vec<CandidateGroup>, SamplerError> {
    let path = path.as_ref();
    let err = |msg: String| SamplerError::File { path: path.display().to_string(), msg };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use crate::ndiff::SeededRng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> AttributedGraph {
        AttributedGraph::new(edges, DenseMatrix::zeros(n, 1)).unwrap()
    }

    fn random_graph(rng: &mut SeededRng, n: usize, p: f64) -> AttributedGraph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.uniform() < p {
                    edges.push((u, v));
                }
            }
        }
        graph(n, &edges)
    }

    fn components(g: &AttributedGraph) -> usize {
        let mut seen = vec![false; g.n()];
        let mut c = 0;
        for s in 0..g.n() {
            if seen[s] {
                continue;
            }
            c += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &w in g.neighbors(u) {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        c
    }

    #[test]
    fn path_on_a_chain_is_the_chain() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let p = path_search(&g, 0, 3, 10).unwrap().unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2, 3]);
        assert_eq!(p.edges, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(p.provenance, Provenance::Path { v: 0, mu: 3 });
    }

    #[test]
    fn path_between_components_is_none() {
        let g = graph(4, &[(0, 1), (2, 3)]);
        assert!(path_search(&g, 0, 3, 10).unwrap().is_none());
    }

    #[test]
    fn path_tie_breaks_to_lowest_predecessor() {
        let g = graph(4, &[(0, 1), (1, 3), (0, 2), (2, 3)]);
        let p = path_search(&g, 0, 3, 10).unwrap().unwrap();
        assert_eq!(p.nodes, vec![0, 1, 3]);

        // Oracle: enumerate every shortest path and take the lex minimum.
        fn all_paths(
            g: &AttributedGraph,
            cur: usize,
            goal: usize,
            seen: &mut Vec<usize>,
            best_len: usize,
            acc: &mut Vec<Vec<usize>>,
        ) {
            if seen.len() > best_len {
                return;
            }
            if cur == goal {
                acc.push(seen.clone());
                return;
            }
            for &w in g.neighbors(cur) {
                if !seen.contains(&w) {
                    seen.push(w);
                    all_paths(g, w, goal, seen, best_len, acc);
                    seen.pop();
                }
            }
        }
        let mut acc = Vec::new();
        all_paths(&g, 0, 3, &mut vec![0], 3, &mut acc);
        let shortest = acc.iter().map(Vec::len).min().unwrap();
        let lex_min = acc.iter().filter(|p| p.len() == shortest).min().unwrap();
        assert_eq!(&p.nodes, lex_min);
    }

    #[test]
    fn path_longer_than_cap_is_discarded() {
        let edges: Vec<(usize, usize)> = (0..11).map(|i| (i, i + 1)).collect();
        let g = graph(12, &edges);
        assert!(path_search(&g, 0, 11, 10).unwrap().is_none());
        assert!(path_search(&g, 0, 10, 10).unwrap().is_some());
    }

    #[test]
    fn path_rejects_equal_endpoints_and_bad_nodes() {
        let g = graph(2, &[(0, 1)]);
        assert!(matches!(path_search(&g, 1, 1, 10), Err(SamplerError::SameEndpoints(1))));
        assert!(matches!(path_search(&g, 0, 9, 10), Err(SamplerError::NodeOutOfRange { .. })));
    }

    #[test]
    fn shortest_paths_are_chordless() {
        // The stored edges must be exactly the induced edges of the path's
        // node set: a chord would yield a shorter path.
        let mut rng = SeededRng::new(5);
        for _ in 0..30 {
            let g = random_graph(&mut rng, 9, 0.3);
            for v in 0..9 {
                for mu in 0..9 {
                    if v == mu {
                        continue;
                    }
                    if let Some(p) = path_search(&g, v, mu, 10).unwrap() {
                        let mut induced = Vec::new();
                        for (i, &a) in p.nodes.iter().enumerate() {
                            for &b in &p.nodes[i + 1..] {
                                if g.has_edge(a, b) {
                                    induced.push((a.min(b), a.max(b)));
                                }
                            }
                        }
                        induced.sort_unstable();
                        let mut stored: Vec<(usize, usize)> =
                            p.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
                        stored.sort_unstable();
                        assert_eq!(stored, induced, "path {:?}", p.nodes);
                    }
                }
            }
        }
    }

    #[test]
    fn tree_from_star_center_is_the_star() {
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let t = tree_search(&g, 0, 3, 1, 50).unwrap().unwrap();
        assert_eq!(t.nodes, vec![0, 1, 2, 3, 4]);
        assert_eq!(t.edges, vec![(0, 1), (0, 2), (0, 3), (0, 4)]);
    }

    #[test]
    fn tree_from_leaf_misses_deep_target() {
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert!(tree_search(&g, 1, 4, 1, 50).unwrap().is_none());
        assert!(tree_search(&g, 1, 4, 2, 50).unwrap().is_some());
    }

    #[test]
    fn deep_tree_spans_the_component() {
        let g = graph(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (5, 6)]);
        let t = tree_search(&g, 3, 6, 10, 50).unwrap().unwrap();
        assert_eq!(t.sorted_nodes(), (0..7).collect::<Vec<_>>());
        assert_eq!(t.edges.len(), 6);
    }

    #[test]
    fn oversized_tree_drops_highest_index_leaves_first() {
        let edges: Vec<(usize, usize)> = (1..=60).map(|i| (0, i)).collect();
        let g = graph(61, &edges);
        let t = tree_search(&g, 0, 5, 1, 50).unwrap().unwrap();
        assert_eq!(t.nodes, (0..50).collect::<Vec<_>>());
        // The target itself can be pruned away, in which case: no group.
        assert!(tree_search(&g, 0, 55, 1, 50).unwrap().is_none());
    }

    #[test]
    fn tree_rejects_zero_depth() {
        let g = graph(2, &[(0, 1)]);
        assert!(matches!(tree_search(&g, 0, 1, 0, 50), Err(SamplerError::BadDepth)));
    }

    #[test]
    fn triangle_has_one_basis_cycle() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        for v in 0..3 {
            let cs = cycle_search(&g, v, 12).unwrap();
            assert_eq!(cs.len(), 1);
            assert_eq!(cs[0].nodes, vec![0, 1, 2]);
            assert_eq!(cs[0].edges, vec![(0, 1), (1, 2), (2, 0)]);
        }
    }

    #[test]
    fn acyclic_graph_has_no_cycles() {
        let g = graph(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
        for v in 0..5 {
            assert!(cycle_search(&g, v, 12).unwrap().is_empty());
        }
    }

    #[test]
    fn shared_vertex_sees_both_triangles() {
        let g = graph(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]);
        assert_eq!(cycle_search(&g, 2, 12).unwrap().len(), 2);
        assert_eq!(cycle_search(&g, 0, 12).unwrap().len(), 1);
        assert_eq!(cycle_search(&g, 4, 12).unwrap().len(), 1);
    }

    #[test]
    fn square_cycle_is_canonically_rotated() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let cs = cycle_search(&g, 2, 12).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].nodes, vec![0, 1, 2, 3]);
    }

    #[test]
    fn long_cycles_are_discarded() {
        let edges: Vec<(usize, usize)> = (0..15).map(|i| (i, (i + 1) % 15)).collect();
        let g = graph(15, &edges);
        assert!(cycle_search(&g, 0, 12).unwrap().is_empty());
        assert_eq!(cycle_search(&g, 0, 15).unwrap().len(), 1);
    }

    #[test]
    fn basis_size_matches_cyclomatic_number() {
        let mut rng = SeededRng::new(99);
        for _ in 0..50 {
            let n = 4 + rng.index(7);
            let g = random_graph(&mut rng, n, 0.35);
            let basis = fundamental_cycle_basis(&g, usize::MAX);
            let expect = g.edges().len() + components(&g) - g.n();
            assert_eq!(basis.len(), expect, "n={n} edges={:?}", g.edges());
        }
    }

    #[test]
    fn sampled_groups_validate_and_match_their_pattern_shape() {
        let mut rng = SeededRng::new(7);
        for round in 0..20 {
            let n = 8 + rng.index(8);
            let g = random_graph(&mut rng, n, 0.25);
            let anchors =
                AnchorSet::new((0..n).filter(|_| rng.uniform() < 0.4).collect(), n).unwrap();
            if anchors.is_empty() {
                continue;
            }
            let groups = sample_candidate_groups(&g, &anchors, &SamplerConfig::default()).unwrap();
            for grp in &groups {
                grp.validate(&g).unwrap();
                let nodes = &grp.nodes;
                let mut deg = std::collections::HashMap::new();
                for &(a, b) in &grp.edges {
                    *deg.entry(a).or_insert(0) += 1;
                    *deg.entry(b).or_insert(0) += 1;
                }
                match grp.kind() {
                    PatternKind::Path => {
                        assert_eq!(grp.edges.len(), nodes.len() - 1);
                        for w in nodes.windows(2) {
                            assert!(g.has_edge(w[0], w[1]));
                        }
                    }
                    PatternKind::Tree => {
                        assert_eq!(grp.edges.len(), nodes.len() - 1);
                        // Parent pointers reach every non-root node once.
                        let children: Vec<usize> = grp.edges.iter().map(|e| e.1).collect();
                        let mut uniq = children.clone();
                        uniq.sort_unstable();
                        uniq.dedup();
                        assert_eq!(uniq.len(), nodes.len() - 1);
                    }
                    PatternKind::Cycle => {
                        assert_eq!(grp.edges.len(), nodes.len());
                        for (&d, _) in deg.values().zip(0..) {
                            assert_eq!(d, 2);
                        }
                    }
                }
            }
            // No exact duplicates by (node set, kind).
            let mut keys: Vec<(Vec<usize>, PatternKind)> =
                groups.iter().map(|g| (g.sorted_nodes(), g.kind())).collect();
            let before = keys.len();
            keys.sort_unstable_by(|a, b| a.cmp(b));
            keys.dedup();
            assert_eq!(keys.len(), before, "round {round}: duplicate groups survived");
        }
    }

    #[test]
    fn single_anchor_yields_only_cycles() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let anchors = AnchorSet::new(vec![1], 4).unwrap();
        assert!(sample_candidate_groups(&g, &anchors, &SamplerConfig::default())
            .unwrap()
            .is_empty());

        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let anchors = AnchorSet::new(vec![1], 3).unwrap();
        let groups = sample_candidate_groups(&g, &anchors, &SamplerConfig::default()).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].kind(), PatternKind::Cycle);
    }

    #[test]
    fn adjacent_anchors_produce_the_edge_path() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let anchors = AnchorSet::new(vec![0, 1], 3).unwrap();
        let groups = sample_candidate_groups(&g, &anchors, &SamplerConfig::default()).unwrap();
        assert!(groups
            .iter()
            .any(|g| g.kind() == PatternKind::Path && g.sorted_nodes() == vec![0, 1]));
        // The reverse-direction duplicate {1,0} collapsed into the first.
        let paths: Vec<_> = groups.iter().filter(|g| g.kind() == PatternKind::Path).collect();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].provenance, Provenance::Path { v: 0, mu: 1 });
        // Both anchors' depth-3 trees cover {0,1,2}; one survives.
        let trees: Vec<_> = groups.iter().filter(|g| g.kind() == PatternKind::Tree).collect();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].sorted_nodes(), vec![0, 1, 2]);
    }

    #[test]
    fn five_cycle_appears_among_candidates() {
        let edges: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        let g = graph(5, &edges);
        let anchors = AnchorSet::new(vec![0, 2], 5).unwrap();
        let groups = sample_candidate_groups(&g, &anchors, &SamplerConfig::default()).unwrap();
        assert!(groups
            .iter()
            .any(|g| g.kind() == PatternKind::Cycle && g.sorted_nodes() == vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn sampling_is_deterministic_byte_for_byte() {
        let mut rng = SeededRng::new(21);
        let g = random_graph(&mut rng, 14, 0.3);
        let anchors = AnchorSet::new(vec![0, 3, 7, 11], 14).unwrap();
        let cfg = SamplerConfig::default();
        let a = serde_json::to_vec(&sample_candidate_groups(&g, &anchors, &cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&sample_candidate_groups(&g, &anchors, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn groups_json_round_trip() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]);
        let anchors = AnchorSet::new(vec![0, 4], 5).unwrap();
        let groups = sample_candidate_groups(&g, &anchors, &SamplerConfig::default()).unwrap();
        assert!(!groups.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groups.json");
        save_groups(&groups, &path).unwrap();
        let loaded = load_groups(&path).unwrap();
        assert_eq!(loaded, groups);
        for g2 in &loaded {
            g2.validate(&g).unwrap();
        }
    }

    #[test]
    fn sampling_cost_scales_roughly_linearly() {
        // Ring plus sparse chords; anchors fixed at 8 so doubling |V|+|E|
        // should roughly double the work. Assert only a loose factor-4
        // bound to stay robust against timer noise.
        fn ring(n: usize) -> AttributedGraph {
            let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            for i in (0..n).step_by(8) {
                edges.push((i, (i + n / 3) % n));
            }
            graph(n, &edges)
        }
        fn time_it(g: &AttributedGraph) -> std::time::Duration {
            let n = g.n();
            let anchors =
                AnchorSet::new((0..8).map(|k| k * n / 8).collect(), n).unwrap();
            let cfg = SamplerConfig::default();
            (0..5)
                .map(|_| {
                    let start = std::time::Instant::now();
                    let groups = sample_candidate_groups(g, &anchors, &cfg).unwrap();
                    assert!(!groups.is_empty() || groups.is_empty());
                    start.elapsed()
                })
                .min()
                .unwrap()
        }
        let small = ring(1500);
        let large = ring(3000);
        let t_small = time_it(&small);
        let t_large = time_it(&large);
        println!("sampling: n=1500 {t_small:?}, n=3000 {t_large:?}");
        assert!(
            t_large <= t_small * 4 + std::time::Duration::from_millis(2),
            "doubling the graph cost more than 4x: {t_small:?} -> {t_large:?}"
        );
    }
}
