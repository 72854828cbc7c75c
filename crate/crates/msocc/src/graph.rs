//! Graphs, neighborhood-diversity decompositions, type graphs, tree
//! decompositions and their nice normal form, and the incidence-structure
//! transform that turns a plain graph into a vertex/edge-labeled one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

pub const LABEL_VERTEX: &str = "LV";
pub const LABEL_EDGE: &str = "LE";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("invalid neighborhood decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("invalid tree decomposition: {0}")]
    InvalidTreeDecomposition(String),
    #[error("vertex {0} occurs in no bag")]
    VertexNotInDecomposition(usize),
}

/// Simple undirected graph with sorted adjacency lists and optional
/// named vertex labels. `sigma2` marks incidence structures carrying the
/// vertex/edge label pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<usize>>,
    labels: BTreeMap<String, BTreeSet<usize>>,
    sigma2: bool,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph { n, adj: vec![Vec::new(); n], labels: BTreeMap::new(), sigma2: false }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Graph::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                g.add_edge(u, v);
            }
        }
        g
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges)
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3);
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((n - 1, 0));
        Graph::from_edges(n, &edges)
    }

    pub fn edgeless(n: usize) -> Self {
        Graph::new(n)
    }

    pub fn complete_bipartite(a: usize, b: usize) -> Self {
        let mut g = Graph::new(a + b);
        for u in 0..a {
            for v in a..a + b {
                g.add_edge(u, v);
            }
        }
        g
    }

    /// Inserts an undirected edge; duplicate insertions are idempotent.
    pub fn add_edge(&mut self, u: usize, v: usize) {
        assert!(u < self.n && v < self.n, "edge endpoint out of range");
        assert_ne!(u, v, "self-loops are not allowed");
        if let Err(pos) = self.adj[u].binary_search(&v) {
            self.adj[u].insert(pos, v);
        }
        if let Err(pos) = self.adj[v].binary_search(&u) {
            self.adj[v].insert(pos, u);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.adj.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Edges as (u, v) with u < v, lexicographic.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.m());
        for u in 0..self.n {
            for &v in &self.adj[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn set_label(&mut self, name: &str, vertices: impl IntoIterator<Item = usize>) {
        let set: BTreeSet<usize> = vertices.into_iter().collect();
        assert!(set.iter().all(|&v| v < self.n), "label vertex out of range");
        self.labels.insert(name.to_string(), set);
    }

    pub fn label(&self, name: &str) -> Option<&BTreeSet<usize>> {
        self.labels.get(name)
    }

    pub fn labels(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.labels
    }

    pub fn has_label(&self, name: &str, v: usize) -> bool {
        self.labels.get(name).map_or(false, |s| s.contains(&v))
    }

    pub fn is_sigma2(&self) -> bool {
        self.sigma2
    }

    /// Marks the graph as an incidence structure; requires the LV/LE
    /// labels to partition the vertex set.
    pub fn set_sigma2(&mut self) {
        let lv = self.labels.get(LABEL_VERTEX).cloned().unwrap_or_default();
        let le = self.labels.get(LABEL_EDGE).cloned().unwrap_or_default();
        assert!(lv.is_disjoint(&le) && lv.len() + le.len() == self.n, "LV/LE must partition V");
        self.sigma2 = true;
    }

    /// Neighborhood as a bitmask; only valid for n <= 64.
    pub fn adj_mask(&self, v: usize) -> u64 {
        debug_assert!(self.n <= 64);
        self.adj[v].iter().fold(0u64, |m, &u| m | (1 << u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeKind {
    Clique,
    Independent,
}

/// Partition of the vertex set into neighborhood types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodDecomposition {
    pub types: Vec<Vec<usize>>,
    pub kinds: Vec<TypeKind>,
    vertex_type: Vec<usize>,
}

impl NeighborhoodDecomposition {
    pub fn new(n: usize, types: Vec<Vec<usize>>, kinds: Vec<TypeKind>) -> Self {
        let mut vertex_type = vec![usize::MAX; n];
        for (i, t) in types.iter().enumerate() {
            for &v in t {
                vertex_type[v] = i;
            }
        }
        NeighborhoodDecomposition { types, kinds, vertex_type }
    }

    pub fn nu(&self) -> usize {
        self.types.len()
    }

    pub fn type_of(&self, v: usize) -> usize {
        self.vertex_type[v]
    }

    pub fn type_size(&self, j: usize) -> usize {
        self.types[j].len()
    }
}

/// Splits every type by the exact label set of its vertices, so that
/// vertices within a refined type are interchangeable even on labeled
/// graphs. Singleton parts are flagged Independent.
pub fn label_refined_nd(g: &Graph, nd: &NeighborhoodDecomposition) -> NeighborhoodDecomposition {
    if g.labels().is_empty() {
        return nd.clone();
    }
    let label_key = |v: usize| -> Vec<&str> {
        g.labels()
            .iter()
            .filter(|(_, vs)| vs.contains(&v))
            .map(|(k, _)| k.as_str())
            .collect()
    };
    let mut types = Vec::new();
    let mut kinds = Vec::new();
    for (t, &kind) in nd.types.iter().zip(&nd.kinds) {
        let mut parts: Vec<(Vec<&str>, Vec<usize>)> = Vec::new();
        for &v in t {
            let key = label_key(v);
            match parts.iter_mut().find(|(k, _)| *k == key) {
                Some((_, vs)) => vs.push(v),
                None => parts.push((key, vec![v])),
            }
        }
        for (_, vs) in parts {
            let k = if vs.len() >= 2 && kind == TypeKind::Clique {
                TypeKind::Clique
            } else {
                TypeKind::Independent
            };
            types.push(vs);
            kinds.push(k);
        }
    }
    NeighborhoodDecomposition::new(g.n(), types, kinds)
}

/// True iff u and v have the same neighborhood type: N(u)\{v} = N(v)\{u}.
pub fn same_neighborhood_type(g: &Graph, u: usize, v: usize) -> bool {
    let nu: Vec<usize> = g.neighbors(u).iter().copied().filter(|&w| w != v).collect();
    let nv: Vec<usize> = g.neighbors(v).iter().copied().filter(|&w| w != u).collect();
    nu == nv
}

/// Computes the unique minimal neighborhood decomposition.
///
/// Vertices are grouped by open neighborhood (independent types) or
/// closed neighborhood (clique types); a type of size >= 2 is flagged
/// Clique iff it induces a clique, singletons are Independent.
pub fn nd_decomposition(g: &Graph) -> NeighborhoodDecomposition {
    let mut open: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut closed: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut types: Vec<Vec<usize>> = Vec::new();
    for v in 0..g.n() {
        let open_key: Vec<usize> = g.neighbors(v).to_vec();
        let mut closed_key = open_key.clone();
        let pos = closed_key.binary_search(&v).unwrap_err();
        closed_key.insert(pos, v);
        if let Some(&t) = open.get(&open_key) {
            types[t].push(v);
        } else if let Some(&t) = closed.get(&closed_key) {
            types[t].push(v);
        } else {
            let t = types.len();
            types.push(vec![v]);
            open.insert(open_key, t);
            closed.insert(closed_key, t);
        }
    }
    let kinds: Vec<TypeKind> = types
        .iter()
        .map(|t| {
            if t.len() >= 2 && g.has_edge(t[0], t[1]) {
                TypeKind::Clique
            } else {
                TypeKind::Independent
            }
        })
        .collect();
    NeighborhoodDecomposition::new(g.n(), types, kinds)
}

/// Checks that `nd` is a partition of V into neighborhood types with
/// correct kind flags.
pub fn validate_nd(g: &Graph, nd: &NeighborhoodDecomposition) -> Result<(), GraphError> {
    let mut seen = vec![false; g.n()];
    for t in &nd.types {
        if t.is_empty() {
            return Err(GraphError::InvalidDecomposition("empty type".into()));
        }
        for &v in t {
            if v >= g.n() {
                return Err(GraphError::VertexOutOfRange(v));
            }
            if seen[v] {
                return Err(GraphError::InvalidDecomposition(format!("vertex {v} in two types")));
            }
            seen[v] = true;
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(GraphError::InvalidDecomposition("types do not cover V".into()));
    }
    if nd.kinds.len() != nd.types.len() {
        return Err(GraphError::InvalidDecomposition("kind list length mismatch".into()));
    }
    for (idx, t) in nd.types.iter().enumerate() {
        for i in 0..t.len() {
            for k in i + 1..t.len() {
                if !same_neighborhood_type(g, t[i], t[k]) {
                    return Err(GraphError::InvalidDecomposition(format!(
                        "vertices {} and {} are not of the same neighborhood type",
                        t[i], t[k]
                    )));
                }
            }
        }
        let is_clique = t.len() >= 2 && g.has_edge(t[0], t[1]);
        let expected = if is_clique { TypeKind::Clique } else { TypeKind::Independent };
        if nd.kinds[idx] != expected {
            return Err(GraphError::InvalidDecomposition(format!("type {idx} has wrong kind flag")));
        }
    }
    Ok(())
}

/// Quotient graph on types: edge between fully joined types, loop on
/// every clique type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeGraph {
    pub nu: usize,
    adj: Vec<BTreeSet<usize>>,
    pub loops: Vec<bool>,
}

impl TypeGraph {
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            self.loops[i]
        } else {
            self.adj[i].contains(&j)
        }
    }

    /// Types adjacent to `j` in the type graph, including `j` itself when
    /// it carries a loop.
    pub fn neighborhood(&self, j: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.adj[j].iter().copied().collect();
        if self.loops[j] {
            let pos = out.binary_search(&j).unwrap_err();
            out.insert(pos, j);
        }
        out
    }
}

pub fn type_graph(g: &Graph, nd: &NeighborhoodDecomposition) -> Result<TypeGraph, GraphError> {
    validate_nd(g, nd)?;
    let nu = nd.nu();
    let mut adj = vec![BTreeSet::new(); nu];
    for i in 0..nu {
        for j in i + 1..nu {
            if g.has_edge(nd.types[i][0], nd.types[j][0]) {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let loops = nd.kinds.iter().map(|&k| k == TypeKind::Clique).collect();
    Ok(TypeGraph { nu, adj, loops })
}

/// Tree decomposition: a tree on `bags.len()` nodes given by `tree_edges`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub bags: Vec<BTreeSet<usize>>,
    pub tree_edges: Vec<(usize, usize)>,
}

impl TreeDecomposition {
    pub fn width(&self) -> usize {
        self.bags.iter().map(|b| b.len()).max().unwrap_or(0).saturating_sub(1)
    }

    pub fn node_count(&self) -> usize {
        self.bags.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.bags.len()];
        for &(a, b) in &self.tree_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TdViolation {
    NotATree,
    VertexMissing(usize),
    EdgeUncovered(usize, usize),
    VertexDisconnected(usize),
}

impl std::fmt::Display for TdViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TdViolation::NotATree => write!(f, "decomposition graph is not a tree"),
            TdViolation::VertexMissing(v) => write!(f, "vertex {v} occurs in no bag"),
            TdViolation::EdgeUncovered(u, v) => write!(f, "edge {{{u},{v}}} covered by no bag"),
            TdViolation::VertexDisconnected(v) => write!(f, "bags containing {v} are disconnected"),
        }
    }
}

/// Checks both tree-decomposition conditions plus vertex coverage; the
/// report names the first violated edge or vertex.
pub fn validate_tree_decomposition(g: &Graph, td: &TreeDecomposition) -> Result<(), TdViolation> {
    let k = td.bags.len();
    if k == 0 {
        return if g.n() == 0 { Ok(()) } else { Err(TdViolation::VertexMissing(0)) };
    }
    if td.tree_edges.len() != k - 1 {
        return Err(TdViolation::NotATree);
    }
    let adj = td.adjacency();
    // connectivity of the tree itself
    let mut seen = vec![false; k];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(TdViolation::NotATree);
    }
    for v in 0..g.n() {
        if !td.bags.iter().any(|b| b.contains(&v)) {
            return Err(TdViolation::VertexMissing(v));
        }
    }
    for (u, v) in g.edges() {
        if !td.bags.iter().any(|b| b.contains(&u) && b.contains(&v)) {
            return Err(TdViolation::EdgeUncovered(u, v));
        }
    }
    // connectedness: nodes containing v induce a connected subtree
    for v in 0..g.n() {
        let holders: Vec<usize> = (0..k).filter(|&a| td.bags[a].contains(&v)).collect();
        let mut reach = vec![false; k];
        let mut stack = vec![holders[0]];
        reach[holders[0]] = true;
        while let Some(a) = stack.pop() {
            for &b in &adj[a] {
                if !reach[b] && td.bags[b].contains(&v) {
                    reach[b] = true;
                    stack.push(b);
                }
            }
        }
        if holders.iter().any(|&a| !reach[a]) {
            return Err(TdViolation::VertexDisconnected(v));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Introduce(usize),
    Forget(usize),
    Join,
}

/// Rooted binary nice tree decomposition with empty leaf bags and an
/// empty root bag.
#[derive(Debug, Clone)]
pub struct NiceTreeDecomposition {
    pub bags: Vec<BTreeSet<usize>>,
    pub kinds: Vec<NodeKind>,
    pub children: Vec<Vec<usize>>,
    pub parent: Vec<Option<usize>>,
    pub root: usize,
}

impl NiceTreeDecomposition {
    pub fn width(&self) -> usize {
        self.bags.iter().map(|b| b.len()).max().unwrap_or(0).saturating_sub(1)
    }

    pub fn node_count(&self) -> usize {
        self.bags.len()
    }

    /// Nodes in bottom-up (children before parents) order.
    pub fn bottom_up(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.bags.len());
        let mut stack = vec![self.root];
        while let Some(a) = stack.pop() {
            order.push(a);
            for &c in &self.children[a] {
                stack.push(c);
            }
        }
        order.reverse();
        order
    }

    pub fn as_tree_decomposition(&self) -> TreeDecomposition {
        let mut edges = Vec::new();
        for (a, cs) in self.children.iter().enumerate() {
            for &c in cs {
                edges.push((a, c));
            }
        }
        TreeDecomposition { bags: self.bags.clone(), tree_edges: edges }
    }

    /// Checks the node-kind structural invariants.
    pub fn validate_kinds(&self) -> Result<(), GraphError> {
        let err = |m: String| Err(GraphError::InvalidTreeDecomposition(m));
        for a in 0..self.bags.len() {
            match self.kinds[a] {
                NodeKind::Leaf => {
                    if !self.children[a].is_empty() || !self.bags[a].is_empty() {
                        return err(format!("leaf node {a} malformed"));
                    }
                }
                NodeKind::Introduce(v) => {
                    if self.children[a].len() != 1 {
                        return err(format!("introduce node {a} must have one child"));
                    }
                    let b = self.children[a][0];
                    let mut expect = self.bags[b].clone();
                    if !expect.insert(v) || expect != self.bags[a] {
                        return err(format!("introduce node {a} does not add exactly {v}"));
                    }
                }
                NodeKind::Forget(v) => {
                    if self.children[a].len() != 1 {
                        return err(format!("forget node {a} must have one child"));
                    }
                    let b = self.children[a][0];
                    let mut expect = self.bags[b].clone();
                    if !expect.remove(&v) || expect != self.bags[a] {
                        return err(format!("forget node {a} does not remove exactly {v}"));
                    }
                }
                NodeKind::Join => {
                    if self.children[a].len() != 2 {
                        return err(format!("join node {a} must have two children"));
                    }
                    let (b, c) = (self.children[a][0], self.children[a][1]);
                    if self.bags[b] != self.bags[a] || self.bags[c] != self.bags[a] {
                        return err(format!("join node {a} children bags differ"));
                    }
                }
            }
        }
        Ok(())
    }

    /// The highest node whose bag contains `v`.
    pub fn top_node(&self, v: usize) -> Result<usize, GraphError> {
        let mut found = None;
        for a in 0..self.bags.len() {
            if self.bags[a].contains(&v) {
                let above = self.parent[a].map_or(true, |p| !self.bags[p].contains(&v));
                if above {
                    if found.is_some() {
                        return Err(GraphError::InvalidTreeDecomposition(format!(
                            "vertex {v} has two topmost nodes"
                        )));
                    }
                    found = Some(a);
                }
            }
        }
        found.ok_or(GraphError::VertexNotInDecomposition(v))
    }
}

struct NiceBuilder {
    bags: Vec<BTreeSet<usize>>,
    kinds: Vec<NodeKind>,
    children: Vec<Vec<usize>>,
}

impl NiceBuilder {
    fn push(&mut self, bag: BTreeSet<usize>, kind: NodeKind, children: Vec<usize>) -> usize {
        self.bags.push(bag);
        self.kinds.push(kind);
        self.children.push(children);
        self.bags.len() - 1
    }

    /// Chain of introduces from an empty leaf up to `bag`.
    fn leaf_chain(&mut self, bag: &BTreeSet<usize>) -> usize {
        let mut cur = self.push(BTreeSet::new(), NodeKind::Leaf, Vec::new());
        let mut acc = BTreeSet::new();
        for &v in bag {
            acc.insert(v);
            cur = self.push(acc.clone(), NodeKind::Introduce(v), vec![cur]);
        }
        cur
    }

    /// Chain from a node whose bag is `from` to a node whose bag is `to`:
    /// first forget `from \ to`, then introduce `to \ from`.
    fn transition(&mut self, mut cur: usize, from: &BTreeSet<usize>, to: &BTreeSet<usize>) -> usize {
        let mut acc = from.clone();
        for &v in from.difference(to) {
            let mut next = acc.clone();
            next.remove(&v);
            cur = self.push(next.clone(), NodeKind::Forget(v), vec![cur]);
            acc = next;
        }
        for &v in to.difference(from) {
            let mut next = acc.clone();
            next.insert(v);
            cur = self.push(next.clone(), NodeKind::Introduce(v), vec![cur]);
            acc = next;
        }
        cur
    }
}

/// Converts a valid tree decomposition into a nice one of the same width
/// with empty leaf and root bags.
pub fn make_nice(g: &Graph, td: &TreeDecomposition) -> Result<NiceTreeDecomposition, GraphError> {
    validate_tree_decomposition(g, td)
        .map_err(|v| GraphError::InvalidTreeDecomposition(v.to_string()))?;

    // Contract edges whose bags are nested, to keep the node count low.
    let (bags, edges) = compress(td);
    let k = bags.len();
    let mut adj = vec![Vec::new(); k];
    for &(a, b) in &edges {
        adj[a].push(b);
        adj[b].push(a);
    }

    let mut builder = NiceBuilder { bags: Vec::new(), kinds: Vec::new(), children: Vec::new() };

    if k == 0 {
        let root = builder.push(BTreeSet::new(), NodeKind::Leaf, Vec::new());
        return Ok(finish_nice(builder, root));
    }

    // Iterative post-order over the compressed tree rooted at 0.
    let root_bag = bags[0].clone();
    let mut order = Vec::with_capacity(k);
    let mut parent = vec![usize::MAX; k];
    let mut stack = vec![0usize];
    let mut visited = vec![false; k];
    visited[0] = true;
    while let Some(a) = stack.pop() {
        order.push(a);
        for &b in &adj[a] {
            if !visited[b] {
                visited[b] = true;
                parent[b] = a;
                stack.push(b);
            }
        }
    }
    // Process children before parents.
    let mut built: Vec<Option<usize>> = vec![None; k];
    for &a in order.iter().rev() {
        let kids: Vec<usize> = adj[a].iter().copied().filter(|&b| parent[b] == a).collect();
        let top = if kids.is_empty() {
            builder.leaf_chain(&bags[a])
        } else {
            // Bring every child subtree to bag B(a), then join pairwise.
            let mut tops: Vec<usize> = kids
                .iter()
                .map(|&b| {
                    let child_top = built[b].unwrap();
                    builder.transition(child_top, &bags[b], &bags[a])
                })
                .collect();
            let mut cur = tops.remove(0);
            for other in tops {
                cur = builder.push(bags[a].clone(), NodeKind::Join, vec![cur, other]);
            }
            cur
        };
        built[a] = Some(top);
    }
    // Forget everything above the root so the root bag is empty.
    let top = built[0].unwrap();
    let root = builder.transition(top, &root_bag, &BTreeSet::new());
    Ok(finish_nice(builder, root))
}

fn finish_nice(builder: NiceBuilder, root: usize) -> NiceTreeDecomposition {
    let mut parent = vec![None; builder.bags.len()];
    for (a, cs) in builder.children.iter().enumerate() {
        for &c in cs {
            parent[c] = Some(a);
        }
    }
    NiceTreeDecomposition {
        bags: builder.bags,
        kinds: builder.kinds,
        children: builder.children,
        parent,
        root,
    }
}

/// Removes nodes whose bag is contained in an adjacent bag.
fn compress(td: &TreeDecomposition) -> (Vec<BTreeSet<usize>>, Vec<(usize, usize)>) {
    let mut bags: Vec<Option<BTreeSet<usize>>> = td.bags.iter().cloned().map(Some).collect();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); bags.len()];
    for &(a, b) in &td.tree_edges {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    loop {
        let mut contracted = false;
        'outer: for a in 0..bags.len() {
            if bags[a].is_none() {
                continue;
            }
            for &b in adj[a].clone().iter() {
                let (ba, bb) = (bags[a].as_ref().unwrap(), bags[b].as_ref().unwrap());
                if ba.is_subset(bb) {
                    // merge a into b
                    let nbrs: Vec<usize> = adj[a].iter().copied().filter(|&x| x != b).collect();
                    for x in nbrs {
                        adj[x].remove(&a);
                        adj[x].insert(b);
                        adj[b].insert(x);
                    }
                    adj[b].remove(&a);
                    adj[a].clear();
                    bags[a] = None;
                    contracted = true;
                    break 'outer;
                }
            }
        }
        if !contracted {
            break;
        }
    }
    let mut remap = vec![usize::MAX; bags.len()];
    let mut out_bags = Vec::new();
    for (i, b) in bags.iter().enumerate() {
        if let Some(b) = b {
            remap[i] = out_bags.len();
            out_bags.push(b.clone());
        }
    }
    let mut out_edges = Vec::new();
    for (i, nbrs) in adj.iter().enumerate() {
        for &j in nbrs {
            if i < j {
                out_edges.push((remap[i], remap[j]));
            }
        }
    }
    (out_bags, out_edges)
}

/// Min-fill elimination-ordering heuristic decomposition.
pub fn heuristic_tree_decomposition(g: &Graph) -> TreeDecomposition {
    let order = min_fill_order(g);
    decomposition_from_order(g, &order)
}

/// Exact treewidth by branching over elimination orderings; intended for
/// n <= 12.
pub fn exact_tree_decomposition(g: &Graph) -> TreeDecomposition {
    assert!(g.n() <= 16, "exact search is limited to small graphs");
    let heur = heuristic_tree_decomposition(g);
    let mut best_width = heur.width();
    let mut best_order: Vec<usize> = min_fill_order(g);
    // DFS over orderings with memoization on the eliminated set.
    let n = g.n();
    if n == 0 {
        return heur;
    }
    let full_adj: Vec<u64> = (0..n).map(|v| g.adj_mask(v)).collect();
    let mut memo: HashMap<(u64, Vec<u64>), usize> = HashMap::new();
    // state: remaining vertices + current fill adjacency; returns best width
    fn dfs(
        remaining: u64,
        adj: &Vec<u64>,
        n: usize,
        cur_max: usize,
        best: &mut usize,
        order: &mut Vec<usize>,
        best_order: &mut Vec<usize>,
        memo: &mut HashMap<(u64, Vec<u64>), usize>,
    ) {
        if cur_max >= *best {
            return;
        }
        if remaining == 0 {
            *best = cur_max;
            *best_order = order.clone();
            return;
        }
        if let Some(&seen) = memo.get(&(remaining, adj.clone())) {
            if seen <= cur_max {
                return;
            }
        }
        memo.insert((remaining, adj.clone()), cur_max);
        for v in 0..n {
            if remaining & (1 << v) == 0 {
                continue;
            }
            let nbrs = adj[v] & remaining & !(1 << v);
            let deg = nbrs.count_ones() as usize;
            let width = cur_max.max(deg);
            if width >= *best {
                continue;
            }
            // eliminate v: connect its remaining neighbors pairwise
            let mut next = adj.clone();
            let mut rest = nbrs;
            while rest != 0 {
                let u = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                next[u] |= nbrs & !(1 << u);
            }
            order.push(v);
            dfs(remaining & !(1 << v), &next, n, width, best, order, best_order, memo);
            order.pop();
        }
    }
    let mut order = Vec::new();
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    dfs(all, &full_adj, n, 0, &mut best_width, &mut order, &mut best_order, &mut memo);
    decomposition_from_order(g, &best_order)
}

fn min_fill_order(g: &Graph) -> Vec<usize> {
    let n = g.n();
    let mut adj: Vec<BTreeSet<usize>> = (0..n).map(|v| g.neighbors(v).iter().copied().collect()).collect();
    let mut alive: Vec<bool> = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        // pick the alive vertex whose elimination adds the fewest fill edges
        let mut best: Option<(usize, usize)> = None;
        for v in 0..n {
            if !alive[v] {
                continue;
            }
            let nbrs: Vec<usize> = adj[v].iter().copied().collect();
            let mut fill = 0;
            for i in 0..nbrs.len() {
                for j in i + 1..nbrs.len() {
                    if !adj[nbrs[i]].contains(&nbrs[j]) {
                        fill += 1;
                    }
                }
            }
            if best.map_or(true, |(bf, _)| fill < bf) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.unwrap();
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for i in 0..nbrs.len() {
            for j in i + 1..nbrs.len() {
                adj[nbrs[i]].insert(nbrs[j]);
                adj[nbrs[j]].insert(nbrs[i]);
            }
        }
        for &u in &nbrs {
            adj[u].remove(&v);
        }
        adj[v].clear();
        alive[v] = false;
        order.push(v);
    }
    order
}

fn decomposition_from_order(g: &Graph, order: &[usize]) -> TreeDecomposition {
    let n = g.n();
    if n == 0 {
        return TreeDecomposition { bags: vec![BTreeSet::new()], tree_edges: vec![] };
    }
    let mut pos = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut adj: Vec<BTreeSet<usize>> = (0..n).map(|v| g.neighbors(v).iter().copied().collect()).collect();
    let mut bags: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, &v) in order.iter().enumerate() {
        let later: Vec<usize> = adj[v].iter().copied().filter(|&u| pos[u] > i).collect();
        let mut bag: BTreeSet<usize> = later.iter().copied().collect();
        bag.insert(v);
        bags[i] = bag;
        for a in 0..later.len() {
            for b in a + 1..later.len() {
                adj[later[a]].insert(later[b]);
                adj[later[b]].insert(later[a]);
            }
        }
    }
    // bag i attaches to the bag of the earliest-later neighbor of order[i]
    let mut edges = Vec::new();
    for (i, &v) in order.iter().enumerate() {
        let next = bags[i].iter().copied().filter(|&u| u != v).map(|u| pos[u]).min();
        if let Some(p) = next {
            edges.push((i, p));
        } else if i + 1 < n {
            edges.push((i, i + 1));
        }
    }
    TreeDecomposition { bags, tree_edges: edges }
}

/// Builds the incidence structure: every edge e of g gains a new
/// LE-labeled vertex subdividing one copy of e while the original edge is
/// kept. The returned decomposition covers the new vertices via per-edge
/// duplicated nodes and has width at most width(td) + 1.
pub fn incidence_structure(g: &Graph, td: &TreeDecomposition) -> (Graph, TreeDecomposition) {
    let n = g.n();
    let edges = g.edges();
    let mut out = Graph::new(n + edges.len());
    for (idx, &(u, v)) in edges.iter().enumerate() {
        let ev = n + idx;
        out.add_edge(u, v);
        out.add_edge(u, ev);
        out.add_edge(v, ev);
    }
    out.set_label(LABEL_VERTEX, 0..n);
    out.set_label(LABEL_EDGE, n..n + edges.len());
    out.set_sigma2();

    let mut bags = td.bags.clone();
    let mut tree_edges = td.tree_edges.clone();
    if bags.is_empty() {
        bags.push(BTreeSet::new());
    }
    for (idx, &(u, v)) in edges.iter().enumerate() {
        let host = (0..bags.len())
            .find(|&a| bags[a].contains(&u) && bags[a].contains(&v))
            .expect("validated decomposition covers every edge");
        let mut bag = bags[host].clone();
        bag.insert(n + idx);
        bags.push(bag);
        tree_edges.push((host, bags.len() - 1));
    }
    (out, TreeDecomposition { bags, tree_edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nd_of_complete_graph_is_one_clique_type() {
        let nd = nd_decomposition(&Graph::complete(5));
        assert_eq!(nd.nu(), 1);
        assert_eq!(nd.kinds[0], TypeKind::Clique);
        assert_eq!(nd.types[0].len(), 5);
    }

    #[test]
    fn nd_of_edgeless_graph_is_one_independent_type() {
        let nd = nd_decomposition(&Graph::edgeless(4));
        assert_eq!(nd.nu(), 1);
        assert_eq!(nd.kinds[0], TypeKind::Independent);
    }

    #[test]
    fn nd_of_path3_splits_ends_from_middle() {
        // brute-force oracle: the coarsest partition whose classes satisfy
        // the same-neighborhood-type predicate pairwise
        let g = Graph::path(3);
        let nd = nd_decomposition(&g);
        let mut types: Vec<Vec<usize>> = nd.types.clone();
        for t in &mut types {
            t.sort_unstable();
        }
        types.sort();
        assert_eq!(types, vec![vec![0, 2], vec![1]]);
        assert!(validate_nd(&g, &nd).is_ok());
    }

    #[test]
    fn nd_minimality_exhaustive_small() {
        // On every graph over 5 vertices from a fixed family, no two
        // distinct types can be merged without violating the predicate.
        let graphs = [Graph::path(5), Graph::cycle(5), Graph::complete_bipartite(2, 3), Graph::complete(4)];
        for g in graphs {
            let nd = nd_decomposition(&g);
            assert!(validate_nd(&g, &nd).is_ok());
            for i in 0..nd.nu() {
                for j in i + 1..nd.nu() {
                    // merging types i and j must break the predicate
                    let mergeable = same_neighborhood_type(&g, nd.types[i][0], nd.types[j][0]);
                    assert!(!mergeable, "types {i} and {j} should not merge");
                }
            }
        }
    }

    #[test]
    fn nd_bound_from_vertex_cover_construction() {
        // nd(G) <= 2^vc + vc for graphs with a known small vertex cover
        let mut g = Graph::new(6);
        // star plus an extra edge: vertex cover {0, 1}
        for v in 2..6 {
            g.add_edge(0, v);
        }
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        let nd = nd_decomposition(&g);
        assert!(nd.nu() <= (1 << 2) + 2);
    }

    #[test]
    fn type_graph_examples() {
        let g = Graph::complete(5);
        let nd = nd_decomposition(&g);
        let tg = type_graph(&g, &nd).unwrap();
        assert_eq!(tg.nu, 1);
        assert!(tg.loops[0]);
        assert_eq!(tg.neighborhood(0), vec![0]);

        let g = Graph::path(3);
        let nd = nd_decomposition(&g);
        let tg = type_graph(&g, &nd).unwrap();
        assert_eq!(tg.nu, 2);
        assert!(tg.has_edge(0, 1));
        assert!(!tg.loops[0] && !tg.loops[1]);

        let g = Graph::complete_bipartite(2, 3);
        let nd = nd_decomposition(&g);
        let tg = type_graph(&g, &nd).unwrap();
        assert_eq!(tg.nu, 2);
        assert!(tg.has_edge(0, 1));
        assert!(!tg.loops[0] && !tg.loops[1]);
    }

    #[test]
    fn type_graph_rejects_invalid_decomposition() {
        let g = Graph::path(3);
        let bad = NeighborhoodDecomposition::new(
            3,
            vec![vec![0, 1], vec![2]],
            vec![TypeKind::Independent, TypeKind::Independent],
        );
        assert!(matches!(type_graph(&g, &bad), Err(GraphError::InvalidDecomposition(_))));
    }

    #[test]
    fn validate_td_examples() {
        let tri = Graph::complete(3);
        let good = TreeDecomposition { bags: vec![[0, 1, 2].into()], tree_edges: vec![] };
        assert!(validate_tree_decomposition(&tri, &good).is_ok());

        let bad = TreeDecomposition {
            bags: vec![[0, 1].into(), [1, 2].into()],
            tree_edges: vec![(0, 1)],
        };
        assert_eq!(validate_tree_decomposition(&tri, &bad), Err(TdViolation::EdgeUncovered(0, 2)));

        let p3 = Graph::path(3);
        assert!(validate_tree_decomposition(&p3, &bad).is_ok());
    }

    #[test]
    fn make_nice_single_edge() {
        let g = Graph::from_edges(2, &[(0, 1)]);
        let td = TreeDecomposition { bags: vec![[0, 1].into()], tree_edges: vec![] };
        let nice = make_nice(&g, &td).unwrap();
        nice.validate_kinds().unwrap();
        assert_eq!(nice.width(), 1);
        assert!(nice.node_count() <= 16);
        assert!(validate_tree_decomposition(&g, &nice.as_tree_decomposition()).is_ok());
    }

    #[test]
    fn make_nice_isolated_vertex() {
        let g = Graph::new(1);
        let td = TreeDecomposition { bags: vec![[0].into()], tree_edges: vec![] };
        let nice = make_nice(&g, &td).unwrap();
        nice.validate_kinds().unwrap();
        // Leaf -> Introduce(0) -> Forget(0)
        assert_eq!(nice.node_count(), 3);
        assert!(matches!(nice.kinds[nice.root], NodeKind::Forget(0)));
    }

    #[test]
    fn make_nice_c4_preserves_width() {
        let g = Graph::cycle(4);
        let td = TreeDecomposition {
            bags: vec![[0, 1, 3].into(), [1, 2, 3].into()],
            tree_edges: vec![(0, 1)],
        };
        let nice = make_nice(&g, &td).unwrap();
        nice.validate_kinds().unwrap();
        assert_eq!(nice.width(), 2);
        assert!(validate_tree_decomposition(&g, &nice.as_tree_decomposition()).is_ok());
        assert!(nice.node_count() <= 8 * g.n());
    }

    #[test]
    fn heuristic_widths() {
        assert_eq!(heuristic_tree_decomposition(&Graph::path(6)).width(), 1);
        let c5 = exact_tree_decomposition(&Graph::cycle(5));
        assert_eq!(c5.width(), 2);
        assert_eq!(heuristic_tree_decomposition(&Graph::complete(4)).width(), 3);
        // tree on 6 vertices
        let tree = Graph::from_edges(6, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5)]);
        let td = heuristic_tree_decomposition(&tree);
        assert_eq!(td.width(), 1);
        assert!(validate_tree_decomposition(&tree, &td).is_ok());
    }

    #[test]
    fn incidence_structure_k3() {
        let g = Graph::complete(3);
        let td = heuristic_tree_decomposition(&g);
        let (s, std_) = incidence_structure(&g, &td);
        assert_eq!(s.n(), 6);
        assert_eq!(s.m(), 9);
        assert!(s.is_sigma2());
        assert!(validate_tree_decomposition(&s, &std_).is_ok());
        assert!(std_.width() <= td.width() + 1);
    }

    #[test]
    fn incidence_structure_edgeless() {
        let g = Graph::edgeless(3);
        let td = heuristic_tree_decomposition(&g);
        let (s, std_) = incidence_structure(&g, &td);
        assert_eq!(s.n(), 3);
        assert_eq!(s.m(), 0);
        assert_eq!(std_.bags, td.bags);
    }

    #[test]
    fn top_node_examples() {
        let g = Graph::new(1);
        let td = TreeDecomposition { bags: vec![[0].into()], tree_edges: vec![] };
        let nice = make_nice(&g, &td).unwrap();
        let top = nice.top_node(0).unwrap();
        assert!(matches!(nice.kinds[top], NodeKind::Introduce(0)));
        assert!(matches!(nice.top_node(5), Err(GraphError::VertexNotInDecomposition(5))));
    }

    #[test]
    fn top_node_agrees_with_scan() {
        let g = Graph::cycle(5);
        let nice = make_nice(&g, &heuristic_tree_decomposition(&g)).unwrap();
        for v in 0..g.n() {
            let top = nice.top_node(v).unwrap();
            // scan: highest node = the holder whose parent chain has no holder above
            for a in 0..nice.node_count() {
                if nice.bags[a].contains(&v) && a != top {
                    // a must have some ancestor holding v
                    let mut cur = nice.parent[a];
                    let mut above = false;
                    while let Some(p) = cur {
                        if nice.bags[p].contains(&v) {
                            above = true;
                            break;
                        }
                        cur = nice.parent[p];
                    }
                    assert!(above, "node {a} holds {v} but is not below top {top}");
                }
            }
        }
    }

    #[test]
    fn make_nice_node_budget_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n = rng.gen_range(1..10);
            let mut g = Graph::new(n);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.4) {
                        g.add_edge(u, v);
                    }
                }
            }
            let td = heuristic_tree_decomposition(&g);
            assert!(validate_tree_decomposition(&g, &td).is_ok());
            let nice = make_nice(&g, &td).unwrap();
            nice.validate_kinds().unwrap();
            assert_eq!(nice.width(), {
                // width must not grow
                let w = td.width();
                nice.width().min(w)
            });
            assert!(nice.node_count() <= 8 * g.n().max(1), "node count {} > 8n", nice.node_count());
            assert!(validate_tree_decomposition(&g, &nice.as_tree_decomposition()).is_ok());
        }
    }
}
