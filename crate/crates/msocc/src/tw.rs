//! The bounded-treewidth pipeline: encode a weighted model-checking
//! instance as a CSP structured along a nice tree decomposition —
//! per-node counters for global sizes, per-vertex neighborhood counters
//! for local constraints, soft constraints for the objective, and a tree
//! automaton realizing the structural predicates — then solve the
//! augmented-decomposition CSP exactly.

use crate::automaton::{IntroInfo, ProductAutomaton, ProductState};
use crate::csp::{augment_decomposition, freuder_solve, CspError, CspInstance, CspOutcome, Relation};
use crate::eval::{mc_naive, EvalBudget, EvalError, SolveOutcome, Witness};
use crate::graph::{NiceTreeDecomposition, NodeKind, TreeDecomposition};
use crate::ilp::RowSense;
use crate::logic::{
    compliance_check, eval_global, pre_evaluations, Formula, Instance, PreEvaluation,
};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwError {
    #[error("unsupported predicate: {0}")]
    UnsupportedPredicate(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error(transparent)]
    Csp(#[from] CspError),
}

impl From<EvalError> for TwError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ResourceLimit(m) => TwError::ResourceLimit(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwBackend {
    Automaton,
    BruteForce,
}

#[derive(Debug, Clone, Copy)]
pub struct TwBudget {
    pub eval: EvalBudget,
    /// Cap on materialized relation tables.
    pub max_table: usize,
}

impl Default for TwBudget {
    fn default() -> Self {
        TwBudget { eval: EvalBudget::default(), max_table: 1 << 20 }
    }
}

/// The assembled CSP with its variable registry and decompositions.
pub struct EncodedInstance {
    pub csp: CspInstance,
    /// y[j][v]: selection bit of vertex v in X_{j+1}.
    pub y: Vec<Vec<usize>>,
    /// s[node][j]: size counters, empty when no globals.
    pub s: Vec<Vec<usize>>,
    /// Neighborhood counters per (node, vertex, variable).
    pub lam: HashMap<(usize, usize, usize), usize>,
    /// Automaton state variable per node.
    pub q: Vec<Option<usize>>,
    /// Per-node auxiliary variable groups (indexed like the base nodes).
    pub groups: Vec<Vec<usize>>,
    /// Decomposition over the y-variables (before augmentation).
    pub base: TreeDecomposition,
    pub augmented: TreeDecomposition,
    /// Width of `base`.
    pub kappa: usize,
    /// Largest group size.
    pub k_max: usize,
}

/// Adds a hard constraint with an arbitrary scope order, sorting the
/// scope and permuting relation columns to match.
fn add_hard_unsorted(csp: &mut CspInstance, scope: Vec<usize>, rel: Relation) {
    let mut order: Vec<usize> = (0..scope.len()).collect();
    order.sort_by_key(|&k| scope[k]);
    let sorted: Vec<usize> = order.iter().map(|&k| scope[k]).collect();
    debug_assert!(sorted.windows(2).all(|w| w[0] < w[1]), "duplicate scope variable");
    if sorted == scope {
        csp.add_hard(sorted, rel);
        return;
    }
    let rel = match rel {
        Relation::Table(tuples) => Relation::Table(
            tuples.into_iter().map(|t| order.iter().map(|&k| t[k]).collect()).collect(),
        ),
        Relation::Linear { coeffs, sense, rhs } => Relation::Linear {
            coeffs: order.iter().map(|&k| coeffs[k]).collect(),
            sense,
            rhs,
        },
        Relation::Member(s) => Relation::Member(s),
        Relation::Pred(p) => {
            let inv: Vec<usize> = {
                let mut inv = vec![0; order.len()];
                for (pos, &k) in order.iter().enumerate() {
                    inv[k] = pos;
                }
                inv
            };
            Relation::Pred(Arc::new(move |tuple: &[i64]| {
                let orig: Vec<i64> = inv.iter().map(|&pos| tuple[pos]).collect();
                p(&orig)
            }))
        }
    };
    csp.add_hard(sorted, rel);
}

/// Slot assignment per node, computed top-down so that join children
/// share their parent's map.
fn slot_maps(ntd: &NiceTreeDecomposition) -> Vec<HashMap<usize, usize>> {
    let mut maps: Vec<HashMap<usize, usize>> = vec![HashMap::new(); ntd.node_count()];
    assert!(ntd.bags[ntd.root].is_empty(), "encoder requires an empty root bag");
    let mut order: Vec<usize> = Vec::new();
    let mut stack = vec![ntd.root];
    while let Some(a) = stack.pop() {
        order.push(a);
        for &c in &ntd.children[a] {
            stack.push(c);
        }
    }
    for &a in &order {
        let map_a = maps[a].clone();
        match ntd.kinds[a] {
            NodeKind::Leaf => {}
            NodeKind::Introduce(v) => {
                let b = ntd.children[a][0];
                let mut m = map_a;
                m.remove(&v);
                maps[b] = m;
            }
            NodeKind::Forget(v) => {
                let b = ntd.children[a][0];
                let mut m = map_a;
                let used: BTreeSet<usize> = m.values().copied().collect();
                let slot = (0..).find(|s| !used.contains(s)).unwrap();
                m.insert(v, slot);
                maps[b] = m;
            }
            NodeKind::Join => {
                let (b, c) = (ntd.children[a][0], ntd.children[a][1]);
                maps[b] = map_a.clone();
                maps[c] = map_a;
            }
        }
    }
    for a in 0..ntd.node_count() {
        debug_assert_eq!(
            maps[a].keys().copied().collect::<BTreeSet<_>>(),
            ntd.bags[a].iter().copied().collect::<BTreeSet<_>>()
        );
    }
    maps
}

/// Which (vertex, variable) neighborhood counters must be materialized:
/// exactly those with a nontrivial admissible set.
fn materialized_pairs(inst: &Instance) -> BTreeSet<(usize, usize)> {
    let n = inst.graph.n();
    let mut out = BTreeSet::new();
    for lc in &inst.locals {
        for v in 0..n {
            let full = lc.map[v].min_value() == Some(0)
                && lc.map[v].max_value() == Some(n)
                && lc.map[v].is_single_interval();
            if !full {
                out.insert((v, lc.var));
            }
        }
    }
    out
}

/// Assembles the CSP for one pre-evaluation.
pub fn assemble(
    inst: &Instance,
    ntd: &NiceTreeDecomposition,
    beta: &PreEvaluation,
    backend: TwBackend,
    budget: &TwBudget,
) -> Result<EncodedInstance, TwError> {
    let n = inst.graph.n();
    let ell = inst.num_free;
    let residue = inst.formula.pre_evaluate(beta);
    let mut csp = CspInstance::new();
    let y: Vec<Vec<usize>> = (0..ell)
        .map(|j| (0..n).map(|v| csp.add_var(format!("y[{v}]^{j}"), vec![0, 1])).collect())
        .collect();

    // objective
    if let Some(w) = &inst.weights {
        for j in 0..ell {
            for v in 0..n {
                if w[j][v] != 0 {
                    let mut weights = BTreeMap::new();
                    weights.insert(vec![1i64], BigRational::from_integer(w[j][v].into()));
                    csp.add_soft(vec![y[j][v]], weights);
                }
            }
        }
    }

    if backend == TwBackend::BruteForce {
        return assemble_brute(inst, beta, &residue, csp, y, budget);
    }

    let maps = slot_maps(ntd);
    let nodes = ntd.node_count();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); nodes];

    // ----- global size counters -----
    let mut s: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    if !inst.globals.is_empty() {
        for (a, group) in groups.iter_mut().enumerate() {
            s[a] = (0..ell)
                .map(|j| {
                    let var = csp.add_var(format!("s[{a}]^{j}"), (0..=n as i64).collect());
                    group.push(var);
                    var
                })
                .collect();
        }
        for a in 0..nodes {
            for j in 0..ell {
                match ntd.kinds[a] {
                    NodeKind::Leaf => {
                        add_hard_unsorted(
                            &mut csp,
                            vec![s[a][j]],
                            Relation::Linear { coeffs: vec![1], sense: RowSense::Eq, rhs: 0 },
                        );
                    }
                    NodeKind::Introduce(v) => {
                        let b = ntd.children[a][0];
                        add_hard_unsorted(
                            &mut csp,
                            vec![s[a][j], s[b][j], y[j][v]],
                            Relation::Linear { coeffs: vec![1, -1, -1], sense: RowSense::Eq, rhs: 0 },
                        );
                    }
                    NodeKind::Forget(_) => {
                        let b = ntd.children[a][0];
                        add_hard_unsorted(
                            &mut csp,
                            vec![s[a][j], s[b][j]],
                            Relation::Linear { coeffs: vec![1, -1], sense: RowSense::Eq, rhs: 0 },
                        );
                    }
                    NodeKind::Join => {
                        let (b, c) = (ntd.children[a][0], ntd.children[a][1]);
                        let mut scope = vec![s[a][j], s[b][j], s[c][j]];
                        let mut coeffs = vec![1i64, -1, -1];
                        for &v in &ntd.bags[a] {
                            scope.push(y[j][v]);
                            coeffs.push(1);
                        }
                        add_hard_unsorted(
                            &mut csp,
                            scope,
                            Relation::Linear { coeffs, sense: RowSense::Eq, rhs: 0 },
                        );
                    }
                }
            }
        }
        // global relations at the root; the root bag is empty so the root
        // counter is exactly the set size
        let root = ntd.root;
        let scope: Vec<usize> = (0..ell).map(|j| s[root][j]).collect();
        for (gi, gc) in inst.globals.iter().enumerate() {
            let want = beta.values[gi];
            let gc = gc.clone();
            add_hard_unsorted(
                &mut csp,
                scope.clone(),
                Relation::Pred(Arc::new(move |tuple: &[i64]| {
                    let sizes: Vec<usize> = tuple.iter().map(|&x| x as usize).collect();
                    eval_global(&gc, &sizes).map_or(false, |v| v == want)
                })),
            );
        }
    }

    // ----- local neighborhood counters -----
    let mat = materialized_pairs(inst);
    let mut lam: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for a in 0..nodes {
        for &v in &ntd.bags[a] {
            for j in 0..ell {
                if mat.contains(&(v, j)) {
                    let var = csp.add_var(format!("lam[{a}][{v}]^{j}"), (0..=n as i64).collect());
                    groups[a].push(var);
                    lam.insert((a, v, j), var);
                }
            }
        }
    }
    for a in 0..nodes {
        match ntd.kinds[a] {
            NodeKind::Leaf => {}
            NodeKind::Introduce(v) => {
                let b = ntd.children[a][0];
                for j in 0..ell {
                    if let Some(&lv) = lam.get(&(a, v, j)) {
                        let mut scope = vec![lv];
                        let mut coeffs = vec![1i64];
                        for &u in &ntd.bags[a] {
                            if u != v && inst.graph.has_edge(u, v) {
                                scope.push(y[j][u]);
                                coeffs.push(-1);
                            }
                        }
                        add_hard_unsorted(
                            &mut csp,
                            scope,
                            Relation::Linear { coeffs, sense: RowSense::Eq, rhs: 0 },
                        );
                    }
                    for &u in &ntd.bags[a] {
                        if u == v {
                            continue;
                        }
                        if let Some(&lu) = lam.get(&(a, u, j)) {
                            let lb = lam[&(b, u, j)];
                            if inst.graph.has_edge(u, v) {
                                add_hard_unsorted(
                                    &mut csp,
                                    vec![lu, lb, y[j][v]],
                                    Relation::Linear {
                                        coeffs: vec![1, -1, -1],
                                        sense: RowSense::Eq,
                                        rhs: 0,
                                    },
                                );
                            } else {
                                add_hard_unsorted(
                                    &mut csp,
                                    vec![lu, lb],
                                    Relation::Linear {
                                        coeffs: vec![1, -1],
                                        sense: RowSense::Eq,
                                        rhs: 0,
                                    },
                                );
                            }
                        }
                    }
                }
            }
            NodeKind::Forget(_) => {
                let b = ntd.children[a][0];
                for &v in &ntd.bags[a] {
                    for j in 0..ell {
                        if let Some(&la) = lam.get(&(a, v, j)) {
                            let lb = lam[&(b, v, j)];
                            add_hard_unsorted(
                                &mut csp,
                                vec![la, lb],
                                Relation::Linear { coeffs: vec![1, -1], sense: RowSense::Eq, rhs: 0 },
                            );
                        }
                    }
                }
            }
            NodeKind::Join => {
                let (b, c) = (ntd.children[a][0], ntd.children[a][1]);
                for &v in &ntd.bags[a] {
                    for j in 0..ell {
                        if let Some(&la) = lam.get(&(a, v, j)) {
                            let mut scope = vec![la, lam[&(b, v, j)], lam[&(c, v, j)]];
                            let mut coeffs = vec![1i64, -1, -1];
                            for &u in &ntd.bags[a] {
                                if u != v && inst.graph.has_edge(u, v) {
                                    scope.push(y[j][u]);
                                    coeffs.push(1);
                                }
                            }
                            add_hard_unsorted(
                                &mut csp,
                                scope,
                                Relation::Linear { coeffs, sense: RowSense::Eq, rhs: 0 },
                            );
                        }
                    }
                }
            }
        }
    }
    // final membership rows at top(v)
    for lc in &inst.locals {
        for v in 0..n {
            let j = lc.var;
            if !mat.contains(&(v, j)) {
                continue;
            }
            let top = ntd.top_node(v).expect("every vertex occurs in the decomposition");
            let lv = lam[&(top, v, j)];
            let set = lc.map[v].clone();
            match lc.cond {
                None => {
                    add_hard_unsorted(&mut csp, vec![lv], Relation::Member(set));
                }
                Some((cvar, sel)) => {
                    let yc = y[cvar][v];
                    add_hard_unsorted(
                        &mut csp,
                        vec![lv, yc],
                        Relation::Pred(Arc::new(move |tuple: &[i64]| {
                            let (lam_val, bit) = (tuple[0], tuple[1]);
                            if (bit == 1) != sel {
                                return true;
                            }
                            lam_val >= 0 && set.contains(lam_val as usize)
                        })),
                    );
                }
            }
        }
    }

    // ----- automaton for the structural predicates -----
    let mut q: Vec<Option<usize>> = vec![None; nodes];
    {
        let pure = strip_globals(&inst.formula);
        if residue != Formula::Const(false) && residue != pure && residue != Formula::Const(true) {
            return Err(TwError::UnsupportedPredicate(
                "global constraints must appear positively at the top level".into(),
            ));
        }
        if inst.predicates.is_empty() && pure != Formula::Const(true) {
            return Err(TwError::UnsupportedPredicate(
                "no structural predicates declared for the formula".into(),
            ));
        }
        if !inst.predicates.is_empty() {
            let aut = ProductAutomaton::new(inst.predicates.clone(), ntd.width() + 1);
            encode_automaton(inst, ntd, &maps, &aut, &mut csp, &y, &mut groups, &mut q)?;
        }
    }

    // ----- decompositions -----
    // base decomposition over the y-variables; node ids permuted so the
    // nice root becomes node 0 (the augmentation roots there)
    let perm = |a: usize| -> usize {
        if a == ntd.root {
            0
        } else if a == 0 {
            ntd.root
        } else {
            a
        }
    };
    let mut base_bags: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes];
    let mut base_groups: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for a in 0..nodes {
        let mut bag = BTreeSet::new();
        for &v in &ntd.bags[a] {
            for yj in y.iter() {
                bag.insert(yj[v]);
            }
        }
        base_bags[perm(a)] = bag;
        base_groups[perm(a)] = groups[a].clone();
    }
    let mut base_edges = Vec::new();
    for (a, cs) in ntd.children.iter().enumerate() {
        for &c in cs {
            base_edges.push((perm(a), perm(c)));
        }
    }
    let base = TreeDecomposition { bags: base_bags, tree_edges: base_edges };
    let kappa = base.width();
    let k_max = base_groups.iter().map(|g| g.len()).max().unwrap_or(0);
    let new_edges = scope_edges(&csp);
    let augmented = augment_decomposition(&base, &base_groups, &new_edges)?;
    Ok(EncodedInstance { csp, y, s, lam, q, groups: base_groups, base, augmented, kappa, k_max })
}

fn scope_edges(csp: &CspInstance) -> Vec<(usize, usize)> {
    let mut out = BTreeSet::new();
    let scopes = csp.hard.iter().map(|h| &h.scope).chain(csp.soft.iter().map(|s| &s.scope));
    for scope in scopes {
        for i in 0..scope.len() {
            for k in i + 1..scope.len() {
                out.insert((scope[i], scope[k]));
            }
        }
    }
    out.into_iter().collect()
}

/// The formula with every global atom replaced by true, folded.
fn strip_globals(f: &Formula) -> Formula {
    fn go(f: &Formula) -> Formula {
        match f {
            Formula::Global(_) => Formula::Const(true),
            Formula::SetQuant(q, b) => Formula::SetQuant(*q, Box::new(go(b))),
            Formula::ElemQuant(q, b) => Formula::ElemQuant(*q, Box::new(go(b))),
            Formula::Not(a) => Formula::not(go(a)),
            Formula::And(a, b) => Formula::and(go(a), go(b)),
            Formula::Or(a, b) => Formula::or(go(a), go(b)),
            Formula::Implies(a, b) => Formula::implies(go(a), go(b)),
            other => other.clone(),
        }
    }
    go(f).simplify()
}

fn assemble_brute(
    inst: &Instance,
    beta: &PreEvaluation,
    residue: &Formula,
    mut csp: CspInstance,
    y: Vec<Vec<usize>>,
    budget: &TwBudget,
) -> Result<EncodedInstance, TwError> {
    let n = inst.graph.n();
    let ell = inst.num_free;
    let bits = ell * n;
    if bits > 24 {
        return Err(TwError::ResourceLimit(format!(
            "brute-force backend needs 2^{bits} table entries"
        )));
    }
    let mut tuples = BTreeSet::new();
    for code in 0..(1u64 << bits) {
        let sets: Vec<BTreeSet<usize>> = (0..ell)
            .map(|j| (0..n).filter(|v| code & (1 << (j * n + v)) != 0).collect())
            .collect();
        let sizes: Vec<usize> = sets.iter().map(|s| s.len()).collect();
        if !compliance_check(&sizes, beta, &inst.globals)
            .map_err(|e| TwError::UnsupportedPredicate(e.to_string()))?
        {
            continue;
        }
        if !inst.locals_ok(&sets) {
            continue;
        }
        let ok = match residue {
            Formula::Const(c) => *c,
            r => mc_naive(&inst.graph, r, &sets, &budget.eval)?,
        };
        if ok {
            let tuple: Vec<i64> = (0..ell)
                .flat_map(|j| (0..n).map(move |v| i64::from(code & (1 << (j * n + v)) != 0)))
                .collect();
            tuples.insert(tuple);
        }
    }
    let scope: Vec<usize> = (0..ell).flat_map(|j| y[j].clone()).collect();
    add_hard_unsorted(&mut csp, scope, Relation::Table(tuples));
    let all_vars: BTreeSet<usize> = (0..csp.num_vars()).collect();
    let base = TreeDecomposition { bags: vec![all_vars], tree_edges: vec![] };
    Ok(EncodedInstance {
        csp,
        y,
        s: Vec::new(),
        lam: HashMap::new(),
        q: Vec::new(),
        groups: vec![Vec::new()],
        kappa: base.width(),
        k_max: 0,
        augmented: base.clone(),
        base,
    })
}

#[allow(clippy::too_many_arguments)]
fn encode_automaton(
    inst: &Instance,
    ntd: &NiceTreeDecomposition,
    maps: &[HashMap<usize, usize>],
    aut: &ProductAutomaton,
    csp: &mut CspInstance,
    y: &[Vec<usize>],
    groups: &mut [Vec<usize>],
    q: &mut [Option<usize>],
) -> Result<(), TwError> {
    let ell = inst.num_free;
    let nodes = ntd.node_count();
    let mut states: Vec<Vec<ProductState>> = vec![Vec::new(); nodes];
    let mut index: Vec<HashMap<ProductState, usize>> = vec![HashMap::new(); nodes];
    let mut transitions: Vec<Vec<Vec<i64>>> = vec![Vec::new(); nodes];

    fn intern(
        states: &mut Vec<ProductState>,
        index: &mut HashMap<ProductState, usize>,
        st: ProductState,
    ) -> usize {
        if let Some(&id) = index.get(&st) {
            id
        } else {
            let id = states.len();
            states.push(st.clone());
            index.insert(st, id);
            id
        }
    }

    let vertex_labels: Vec<BTreeSet<String>> = (0..inst.graph.n())
        .map(|v| {
            inst.graph
                .labels()
                .iter()
                .filter(|(_, vs)| vs.contains(&v))
                .map(|(k, _)| k.clone())
                .collect()
        })
        .collect();

    for &a in &ntd.bottom_up() {
        match ntd.kinds[a] {
            NodeKind::Leaf => {
                let st = aut.leaf();
                intern(&mut states[a], &mut index[a], st);
            }
            NodeKind::Introduce(v) => {
                let b = ntd.children[a][0];
                let slot = maps[a][&v];
                let adj: u64 = ntd.bags[a]
                    .iter()
                    .filter(|&&u| u != v && inst.graph.has_edge(u, v))
                    .map(|&u| 1u64 << maps[a][&u])
                    .fold(0, |m, b| m | b);
                let max_slot = maps[a].values().max().copied().unwrap_or(0);
                let mut slot_labels: Vec<Option<BTreeSet<String>>> = vec![None; max_slot + 1];
                for (&u, &su) in &maps[a] {
                    if u != v {
                        slot_labels[su] = Some(vertex_labels[u].clone());
                    }
                }
                let child_states = states[b].clone();
                for (sid, st) in child_states.iter().enumerate() {
                    for bits in 0..(1u32 << ell) {
                        let memb: Vec<bool> = (0..ell).map(|j| bits & (1 << j) != 0).collect();
                        let info = IntroInfo {
                            slot,
                            memb: &memb,
                            adj,
                            labels: &vertex_labels[v],
                            slot_labels: &slot_labels,
                        };
                        if let Some(ns) = aut.introduce(st, &info) {
                            let nid = intern(&mut states[a], &mut index[a], ns);
                            let mut tuple: Vec<i64> = vec![sid as i64];
                            tuple.extend((0..ell).map(|j| i64::from(memb[j])));
                            tuple.push(nid as i64);
                            transitions[a].push(tuple);
                        }
                    }
                }
            }
            NodeKind::Forget(v) => {
                let b = ntd.children[a][0];
                let slot = maps[b][&v];
                let child_states = states[b].clone();
                for (sid, st) in child_states.iter().enumerate() {
                    if let Some(ns) = aut.forget(st, slot) {
                        let nid = intern(&mut states[a], &mut index[a], ns);
                        transitions[a].push(vec![sid as i64, nid as i64]);
                    }
                }
            }
            NodeKind::Join => {
                let (b, c) = (ntd.children[a][0], ntd.children[a][1]);
                let (bs, cs) = (states[b].clone(), states[c].clone());
                for (sb, stb) in bs.iter().enumerate() {
                    for (sc, stc) in cs.iter().enumerate() {
                        if let Some(ns) = aut.join(stb, stc) {
                            let nid = intern(&mut states[a], &mut index[a], ns);
                            transitions[a].push(vec![sb as i64, sc as i64, nid as i64]);
                        }
                    }
                }
            }
        }
    }

    for a in 0..nodes {
        let dom: Vec<i64> = (0..states[a].len() as i64).collect();
        let var = csp.add_var(format!("q[{a}]"), dom);
        groups[a].push(var);
        q[a] = Some(var);
    }
    for a in 0..nodes {
        let qa = q[a].unwrap();
        match ntd.kinds[a] {
            NodeKind::Leaf => {}
            NodeKind::Introduce(v) => {
                let b = ntd.children[a][0];
                let mut scope = vec![q[b].unwrap()];
                scope.extend((0..ell).map(|j| y[j][v]));
                scope.push(qa);
                add_hard_unsorted(csp, scope, Relation::Table(transitions[a].iter().cloned().collect()));
            }
            NodeKind::Forget(_) => {
                let b = ntd.children[a][0];
                add_hard_unsorted(
                    csp,
                    vec![q[b].unwrap(), qa],
                    Relation::Table(transitions[a].iter().cloned().collect()),
                );
            }
            NodeKind::Join => {
                let (b, c) = (ntd.children[a][0], ntd.children[a][1]);
                add_hard_unsorted(
                    csp,
                    vec![q[b].unwrap(), q[c].unwrap(), qa],
                    Relation::Table(transitions[a].iter().cloned().collect()),
                );
            }
        }
    }
    let accepting: BTreeSet<Vec<i64>> = states[ntd.root]
        .iter()
        .enumerate()
        .filter(|(_, st)| aut.accept(st))
        .map(|(i, _)| vec![i as i64])
        .collect();
    add_hard_unsorted(csp, vec![q[ntd.root].unwrap()], Relation::Table(accepting));
    Ok(())
}

/// Solver report with audit lines (per-branch widths and the accepting
/// pre-evaluation).
#[derive(Debug)]
pub struct TwReport {
    pub outcome: SolveOutcome,
    pub audit: Vec<String>,
}

/// Full pipeline: for every pre-evaluation, assemble, augment and solve;
/// the best verified witness wins.
pub fn solve_tw(
    inst: &Instance,
    ntd: &NiceTreeDecomposition,
    backend: TwBackend,
    budget: &TwBudget,
) -> Result<TwReport, TwError> {
    let ell = inst.num_free;
    let n = inst.graph.n();
    let mut best: Option<Witness> = None;
    let mut audit = Vec::new();
    for (beta, residue) in pre_evaluations(&inst.formula, inst.globals.len()) {
        if residue == Formula::Const(false) {
            continue;
        }
        let enc = assemble(inst, ntd, &beta, backend, budget)?;
        audit.push(format!(
            "beta={:?}: vars={} kappa={} k={} width={}",
            beta.values,
            enc.csp.num_vars(),
            enc.kappa,
            enc.k_max,
            enc.augmented.width()
        ));
        match freuder_solve(&enc.csp, &enc.augmented)? {
            CspOutcome::Infeasible => continue,
            CspOutcome::Feasible { assignment, weight } => {
                let sets: Vec<BTreeSet<usize>> = (0..ell)
                    .map(|j| (0..n).filter(|&v| assignment[enc.y[j][v]] == 1).collect())
                    .collect();
                if !verify_witness(inst, &beta, &sets, budget)? {
                    audit.push(format!("beta={:?}: witness failed verification", beta.values));
                    continue;
                }
                let w = weight.to_integer().to_i64().unwrap_or(0);
                let better = match &best {
                    None => true,
                    Some(b) => w < b.weight || (w == b.weight && sets < b.sets),
                };
                if better {
                    audit.push(format!("beta={:?}: accepted, weight {w}", beta.values));
                    best = Some(Witness { sets, weight: w });
                }
                if inst.weights.is_none() {
                    break;
                }
            }
        }
    }
    Ok(TwReport {
        outcome: match best {
            Some(w) => SolveOutcome::Sat(w),
            None => SolveOutcome::Unsat,
        },
        audit,
    })
}

fn verify_witness(
    inst: &Instance,
    beta: &PreEvaluation,
    sets: &[BTreeSet<usize>],
    budget: &TwBudget,
) -> Result<bool, TwError> {
    let sizes: Vec<usize> = sets.iter().map(|s| s.len()).collect();
    if !compliance_check(&sizes, beta, &inst.globals)
        .map_err(|e| TwError::UnsupportedPredicate(e.to_string()))?
    {
        return Ok(false);
    }
    if !inst.locals_ok(sets) {
        return Ok(false);
    }
    if !inst.predicates.is_empty() {
        return Ok(inst.predicates.iter().all(|p| p.holds(&inst.graph, sets)));
    }
    let residue = inst.formula.pre_evaluate(beta);
    match residue {
        Formula::Const(c) => Ok(c),
        r => Ok(mc_naive(&inst.graph, &r, sets, &budget.eval)?),
    }
}

/// The reference instance over the y-variables whose single hard
/// constraint is the set of satisfying selection vectors; used to test
/// that the assembled CSP is an extension.
pub fn reference_y_instance(
    inst: &Instance,
    beta: &PreEvaluation,
    budget: &TwBudget,
) -> Result<CspInstance, TwError> {
    let n = inst.graph.n();
    let ell = inst.num_free;
    let residue = inst.formula.pre_evaluate(beta);
    let mut csp = CspInstance::new();
    let y: Vec<Vec<usize>> = (0..ell)
        .map(|j| (0..n).map(|v| csp.add_var(format!("y[{v}]^{j}"), vec![0, 1])).collect())
        .collect();
    let bits = ell * n;
    if bits > 24 {
        return Err(TwError::ResourceLimit("reference instance too large".into()));
    }
    let mut tuples = BTreeSet::new();
    for code in 0..(1u64 << bits) {
        let sets: Vec<BTreeSet<usize>> = (0..ell)
            .map(|j| (0..n).filter(|v| code & (1 << (j * n + v)) != 0).collect())
            .collect();
        let sizes: Vec<usize> = sets.iter().map(|s| s.len()).collect();
        if !compliance_check(&sizes, beta, &inst.globals)
            .map_err(|e| TwError::UnsupportedPredicate(e.to_string()))?
        {
            continue;
        }
        if !inst.locals_ok(&sets) {
            continue;
        }
        let ok = match &residue {
            Formula::Const(c) => *c,
            r => mc_naive(&inst.graph, r, &sets, &budget.eval)?,
        };
        if ok {
            let tuple: Vec<i64> = (0..ell)
                .flat_map(|j| (0..n).map(move |v| i64::from(code & (1 << (j * n + v)) != 0)))
                .collect();
            tuples.insert(tuple);
        }
    }
    let scope: Vec<usize> = (0..ell).flat_map(|j| y[j].clone()).collect();
    add_hard_unsorted(&mut csp, scope, Relation::Table(tuples));
    Ok(csp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::Predicate;
    use crate::csp::check_extension;
    use crate::eval::brute_force_solve;
    use crate::graph::{heuristic_tree_decomposition, make_nice, Graph};
    use crate::interval::IntervalSet;
    use crate::logic::{parse_formula, GlobalConstraint, LocalConstraint, Sense};

    fn nice_of(g: &Graph) -> NiceTreeDecomposition {
        make_nice(g, &heuristic_tree_decomposition(g)).unwrap()
    }

    fn pin_y(csp: &mut CspInstance, y: &[Vec<usize>], sets: &[BTreeSet<usize>]) {
        for (j, row) in y.iter().enumerate() {
            for (v, &var) in row.iter().enumerate() {
                let val = i64::from(sets[j].contains(&v));
                csp.add_hard(vec![var], Relation::Table([vec![val]].into_iter().collect()));
            }
        }
    }

    #[test]
    fn s_counters_single_vertex() {
        let g = Graph::new(1);
        let ntd = nice_of(&g);
        let mut inst = Instance::new(g, Formula::Const(true), 1);
        inst.globals.push(GlobalConstraint::linear("g", vec![1], Sense::Ge, 0));
        inst.formula = Formula::and(Formula::Const(true), Formula::Global(0));
        let beta = PreEvaluation { values: vec![true] };
        let budget = TwBudget::default();
        let mut enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
        let sets: Vec<BTreeSet<usize>> = vec![[0].into()];
        pin_y(&mut enc.csp, &enc.y, &sets);
        match freuder_solve(&enc.csp, &enc.augmented).unwrap() {
            CspOutcome::Feasible { assignment, .. } => {
                assert_eq!(assignment[enc.s[ntd.root][0]], 1);
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn s_counters_p3_all_selected() {
        let g = Graph::path(3);
        let ntd = nice_of(&g);
        let mut inst = Instance::new(g, Formula::Const(true), 1);
        inst.globals.push(GlobalConstraint::linear("g", vec![1], Sense::Ge, 0));
        inst.formula = Formula::and(Formula::Const(true), Formula::Global(0));
        let beta = PreEvaluation { values: vec![true] };
        let budget = TwBudget::default();
        let mut enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
        let sets: Vec<BTreeSet<usize>> = vec![[0, 1, 2].into()];
        pin_y(&mut enc.csp, &enc.y, &sets);
        match freuder_solve(&enc.csp, &enc.augmented).unwrap() {
            CspOutcome::Feasible { assignment, .. } => {
                assert_eq!(assignment[enc.s[ntd.root][0]], 3);
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn s_counters_random_pinned() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let budget = TwBudget::default();
        for _ in 0..10 {
            let n = rng.gen_range(1..8);
            let mut g = Graph::new(n);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.4) {
                        g.add_edge(u, v);
                    }
                }
            }
            let ntd = nice_of(&g);
            let mut inst = Instance::new(g, Formula::Const(true), 2);
            inst.globals.push(GlobalConstraint::linear("g", vec![1, 0], Sense::Ge, 0));
            inst.formula = Formula::and(Formula::Const(true), Formula::Global(0));
            let beta = PreEvaluation { values: vec![true] };
            let mut enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
            let sets: Vec<BTreeSet<usize>> =
                (0..2).map(|_| (0..n).filter(|_| rng.gen_bool(0.5)).collect()).collect();
            pin_y(&mut enc.csp, &enc.y, &sets);
            match freuder_solve(&enc.csp, &enc.augmented).unwrap() {
                CspOutcome::Feasible { assignment, .. } => {
                    for j in 0..2 {
                        assert_eq!(assignment[enc.s[ntd.root][j]] as usize, sets[j].len());
                    }
                }
                _ => panic!("expected feasible"),
            }
        }
    }

    #[test]
    fn lambda_counters_star() {
        // star: center 0; X_1 = leaves; counter at top(center) = 3
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let ntd = nice_of(&g);
        let mut inst = Instance::new(g, Formula::Const(true), 1);
        inst.locals.push(LocalConstraint::uniform(0, 4, IntervalSet::interval(0, 3)));
        let budget = TwBudget::default();
        let beta = PreEvaluation { values: vec![] };
        let mut enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
        let sets: Vec<BTreeSet<usize>> = vec![[1, 2, 3].into()];
        pin_y(&mut enc.csp, &enc.y, &sets);
        let top = ntd.top_node(0).unwrap();
        match freuder_solve(&enc.csp, &enc.augmented).unwrap() {
            CspOutcome::Feasible { assignment, .. } => {
                assert_eq!(assignment[enc.lam[&(top, 0, 0)]], 3);
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn lambda_counters_random_pinned() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let budget = TwBudget::default();
        for _ in 0..10 {
            let n = rng.gen_range(2..8);
            let mut g = Graph::new(n);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.5) {
                        g.add_edge(u, v);
                    }
                }
            }
            let ntd = nice_of(&g);
            let mut inst = Instance::new(g.clone(), Formula::Const(true), 1);
            // nontrivial map so every counter materializes
            inst.locals.push(LocalConstraint::uniform(0, n, IntervalSet::interval(0, n.max(1) - 1)));
            let beta = PreEvaluation { values: vec![] };
            let mut enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
            let sets: Vec<BTreeSet<usize>> = vec![(0..n).filter(|_| rng.gen_bool(0.5)).collect()];
            if !inst.locals_ok(&sets) {
                continue;
            }
            pin_y(&mut enc.csp, &enc.y, &sets);
            match freuder_solve(&enc.csp, &enc.augmented).unwrap() {
                CspOutcome::Feasible { assignment, .. } => {
                    for v in 0..n {
                        let top = ntd.top_node(v).unwrap();
                        if let Some(&lv) = enc.lam.get(&(top, v, 0)) {
                            let want = g.neighbors(v).iter().filter(|u| sets[0].contains(u)).count();
                            assert_eq!(assignment[lv] as usize, want);
                        }
                    }
                }
                _ => panic!("expected feasible (locals hold)"),
            }
        }
    }

    #[test]
    fn automaton_independent_sets_of_c4() {
        let g = Graph::cycle(4);
        let ntd = nice_of(&g);
        let mut inst = Instance::new(g, Formula::Const(true), 1);
        inst.predicates.push(Predicate::Independent(0));
        let (f, _) =
            parse_formula(&Predicate::Independent(0).to_formula_text(&["X1".into()]), &[]).unwrap();
        inst.formula = f;
        let budget = TwBudget::default();
        let beta = PreEvaluation { values: vec![] };
        let enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
        let feas = crate::csp::enumerate_feasible(&enc.csp, 1 << 22).unwrap();
        let mut projected: BTreeSet<Vec<i64>> = BTreeSet::new();
        for a in feas {
            projected.insert(enc.y[0].iter().map(|&var| a[var]).collect());
        }
        assert_eq!(projected.len(), 7);
    }

    #[test]
    fn automaton_partition_count_p3() {
        let g = Graph::path(3);
        let ntd = nice_of(&g);
        let mut inst = Instance::new(g, Formula::Const(true), 2);
        let pred = Predicate::Partition { vars: vec![0, 1], within_label: None };
        inst.predicates.push(pred.clone());
        let (f, _) =
            parse_formula(&pred.to_formula_text(&["X1".into(), "X2".into()]), &[]).unwrap();
        inst.formula = f;
        let budget = TwBudget::default();
        let beta = PreEvaluation { values: vec![] };
        let enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
        let feas = crate::csp::enumerate_feasible(&enc.csp, 1 << 22).unwrap();
        let mut projected: BTreeSet<Vec<i64>> = BTreeSet::new();
        for a in feas {
            let key: Vec<i64> = enc.y.iter().flatten().map(|&var| a[var]).collect();
            projected.insert(key);
        }
        assert_eq!(projected.len(), 8);
    }

    #[test]
    fn extension_property_small() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let budget = TwBudget::default();
        for _ in 0..6 {
            let n = rng.gen_range(2..5);
            let mut g = Graph::new(n);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.5) {
                        g.add_edge(u, v);
                    }
                }
            }
            let ntd = nice_of(&g);
            let mut inst = Instance::new(g, Formula::Const(true), 1);
            inst.predicates.push(Predicate::Independent(0));
            let (f, _) = parse_formula(
                &Predicate::Independent(0).to_formula_text(&["X1".into()]),
                &[],
            )
            .unwrap();
            inst.formula = f;
            if rng.gen_bool(0.5) {
                inst.locals.push(LocalConstraint::uniform(
                    0,
                    inst.graph.n(),
                    IntervalSet::interval(0, 1),
                ));
            }
            let beta = PreEvaluation { values: vec![] };
            let enc = assemble(&inst, &ntd, &beta, TwBackend::Automaton, &budget).unwrap();
            let reference = reference_y_instance(&inst, &beta, &budget).unwrap();
            assert!(
                check_extension(&reference, &enc.csp, 1 << 24).unwrap(),
                "assembled CSP is not an extension"
            );
        }
    }

    #[test]
    fn solve_tw_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let budget = TwBudget::default();
        for round in 0..12 {
            let n = rng.gen_range(2..7);
            let mut g = Graph::new(n);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.5) {
                        g.add_edge(u, v);
                    }
                }
            }
            let ntd = nice_of(&g);
            let mut inst = Instance::new(g, Formula::Const(true), 1);
            inst.predicates.push(Predicate::Independent(0));
            let (f, _) = parse_formula(
                &Predicate::Independent(0).to_formula_text(&["X1".into()]),
                &[],
            )
            .unwrap();
            inst.formula = f;
            if rng.gen_bool(0.6) {
                inst.globals.push(GlobalConstraint::linear(
                    "c",
                    vec![1],
                    Sense::Ge,
                    rng.gen_range(0..3),
                ));
                inst.formula = Formula::and(inst.formula.clone(), Formula::Global(0));
            }
            if rng.gen_bool(0.5) {
                let w: Vec<Vec<i64>> = vec![(0..n).map(|_| rng.gen_range(-3..4)).collect()];
                inst.weights = Some(w);
            }
            let got = solve_tw(&inst, &ntd, TwBackend::Automaton, &budget).unwrap();
            let want = brute_force_solve(&inst, &budget.eval).unwrap();
            assert_eq!(got.outcome.is_sat(), want.is_sat(), "round {round}");
            if inst.weights.is_some() {
                assert_eq!(got.outcome.weight(), want.weight(), "round {round} weight");
            }
        }
    }

    #[test]
    fn brute_backend_agrees() {
        let g = Graph::cycle(4);
        let ntd = nice_of(&g);
        let (f, _) =
            parse_formula("forall x (x in X1 -> !(exists y (edge(x,y) & y in X1)))", &[]).unwrap();
        let mut inst = Instance::new(g, f, 1);
        inst.globals.push(GlobalConstraint::linear("c", vec![1], Sense::Ge, 2));
        inst.formula = Formula::and(inst.formula.clone(), Formula::Global(0));
        let budget = TwBudget::default();
        let got = solve_tw(&inst, &ntd, TwBackend::BruteForce, &budget).unwrap();
        let want = brute_force_solve(&inst, &budget.eval).unwrap();
        assert_eq!(got.outcome.is_sat(), want.is_sat());
    }
}
