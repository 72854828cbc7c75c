//! Deterministic bottom-up automata over annotated nice-decomposition
//! operations. Each predicate of the structural algebra compiles to an
//! automaton whose run over a decomposition accepts exactly the
//! assignments satisfying the predicate; conjunctions run as products.

use crate::graph::Graph;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("unsupported predicate: {0}")]
    UnsupportedPredicate(String),
}

/// Structural predicates over the free set variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    /// The listed variables partition the vertex set (restricted to a
    /// label when given).
    Partition { vars: Vec<usize>, within_label: Option<String> },
    /// X_var induces no edge.
    Independent(usize),
    /// X_a ⊆ X_b.
    Subset { sub: usize, sup: usize },
    /// X_var ⊆ L.
    SubsetLabel { var: usize, label: String },
    /// Every edge (optionally restricted to edges with both endpoints in
    /// a label class) has an endpoint in X_var.
    EdgeCover { var: usize, within_label: Option<String> },
    /// Every vertex (of the label class, when given) is in X_in or has a
    /// neighbor in X_by.
    Dominated { protected_label: Option<String>, in_set: Option<usize>, by: usize },
    /// Every member of X_of has at least one neighbor in X_inset.
    NeighborIn { of: usize, inset: usize },
    /// Every member of X_of has all its `nbr_label`-labeled neighbors in
    /// X_inset.
    AllNeighborsIn { of: usize, inset: usize, nbr_label: String },
    /// X_var induces a connected subgraph (the empty set counts as
    /// connected).
    Connected(usize),
    /// X_result = X_src ∩ L.
    IntersectLabel { result: usize, src: usize, label: String },
    /// Every edge between two `label`-labeled vertices has exactly one
    /// endpoint in X_var.
    HalfPair { label: String, var: usize },
    /// For every `edge_label` vertex e with exactly two `vertex_label`
    /// neighbors u, v: e ∈ X_cut iff u and v lie in different parts.
    CutSet { parts: Vec<usize>, cut: usize, vertex_label: String, edge_label: String },
}

impl Predicate {
    /// Direct semantic check on a concrete assignment (internal witness
    /// verification; tests use the independent MSO evaluator instead).
    pub fn holds(&self, g: &Graph, sets: &[BTreeSet<usize>]) -> bool {
        match self {
            Predicate::Partition { vars, within_label } => (0..g.n()).all(|v| {
                if !label_ok(g, within_label, v) {
                    return true;
                }
                vars.iter().filter(|&&i| sets[i].contains(&v)).count() == 1
            }),
            Predicate::Independent(i) => g
                .edges()
                .iter()
                .all(|&(u, v)| !(sets[*i].contains(&u) && sets[*i].contains(&v))),
            Predicate::Subset { sub, sup } => sets[*sub].is_subset(&sets[*sup]),
            Predicate::SubsetLabel { var, label } => {
                sets[*var].iter().all(|&v| g.has_label(label, v))
            }
            Predicate::EdgeCover { var, within_label } => g.edges().iter().all(|&(u, v)| {
                if !label_ok(g, within_label, u) || !label_ok(g, within_label, v) {
                    return true;
                }
                sets[*var].contains(&u) || sets[*var].contains(&v)
            }),
            Predicate::Dominated { protected_label, in_set, by } => (0..g.n()).all(|v| {
                if !label_ok(g, protected_label, v) {
                    return true;
                }
                if in_set.map_or(false, |i| sets[i].contains(&v)) {
                    return true;
                }
                g.neighbors(v).iter().any(|u| sets[*by].contains(u))
            }),
            Predicate::NeighborIn { of, inset } => sets[*of]
                .iter()
                .all(|&v| g.neighbors(v).iter().any(|u| sets[*inset].contains(u))),
            Predicate::AllNeighborsIn { of, inset, nbr_label } => sets[*of].iter().all(|&v| {
                g.neighbors(v)
                    .iter()
                    .filter(|&&u| g.has_label(nbr_label, u))
                    .all(|u| sets[*inset].contains(u))
            }),
            Predicate::Connected(i) => connected_subset(g, &sets[*i]),
            Predicate::IntersectLabel { result, src, label } => (0..g.n()).all(|v| {
                sets[*result].contains(&v) == (sets[*src].contains(&v) && g.has_label(label, v))
            }),
            Predicate::HalfPair { label, var } => g.edges().iter().all(|&(u, v)| {
                if !(g.has_label(label, u) && g.has_label(label, v)) {
                    return true;
                }
                sets[*var].contains(&u) != sets[*var].contains(&v)
            }),
            Predicate::CutSet { parts, cut, vertex_label, edge_label } => (0..g.n()).all(|e| {
                if !g.has_label(edge_label, e) {
                    return true;
                }
                let ends: Vec<usize> = g
                    .neighbors(e)
                    .iter()
                    .copied()
                    .filter(|&u| g.has_label(vertex_label, u))
                    .collect();
                if ends.len() != 2 {
                    return true;
                }
                let part_of = |v: usize| parts.iter().position(|&i| sets[i].contains(&v));
                let crossing = part_of(ends[0]) != part_of(ends[1]);
                sets[*cut].contains(&e) == crossing
            }),
        }
    }

    /// An equivalent MSO formula, used by oracles and as the instance's
    /// canonical formula.
    pub fn to_formula_text(&self, var_names: &[String]) -> String {
        let vn = |i: usize| var_names[i].clone();
        match self {
            Predicate::Partition { vars, within_label } => {
                let one_of = vars
                    .iter()
                    .map(|&i| format!("x in {}", vn(i)))
                    .collect::<Vec<_>>()
                    .join(" | ");
                let pair_excl = vars
                    .iter()
                    .enumerate()
                    .flat_map(|(a, &i)| {
                        vars.iter().skip(a + 1).map(move |&j| {
                            format!("!(x in {} & x in {})", var_names[i], var_names[j])
                        })
                    })
                    .collect::<Vec<_>>()
                    .join(" & ");
                let body = if pair_excl.is_empty() {
                    format!("({one_of})")
                } else {
                    format!("(({one_of}) & {pair_excl})")
                };
                match within_label {
                    Some(l) => format!("forall x (label({l},x) -> {body})"),
                    None => format!("forall x {body}"),
                }
            }
            Predicate::Independent(i) => format!(
                "forall x forall y (edge(x,y) -> !(x in {0} & y in {0}))",
                vn(*i)
            ),
            Predicate::Subset { sub, sup } => {
                format!("forall x (x in {} -> x in {})", vn(*sub), vn(*sup))
            }
            Predicate::SubsetLabel { var, label } => {
                format!("forall x (x in {} -> label({label},x))", vn(*var))
            }
            Predicate::EdgeCover { var, within_label } => match within_label {
                None => format!("forall x forall y (edge(x,y) -> (x in {0} | y in {0}))", vn(*var)),
                Some(l) => format!(
                    "forall x forall y ((edge(x,y) & label({l},x) & label({l},y)) -> (x in {0} | y in {0}))",
                    vn(*var)
                ),
            },
            Predicate::Dominated { protected_label, in_set, by } => {
                let inside = match in_set {
                    Some(i) => format!("x in {} | ", vn(*i)),
                    None => String::new(),
                };
                let body = format!("({inside}exists y (edge(x,y) & y in {}))", vn(*by));
                match protected_label {
                    Some(l) => format!("forall x (label({l},x) -> {body})"),
                    None => format!("forall x {body}"),
                }
            }
            Predicate::NeighborIn { of, inset } => format!(
                "forall x (x in {} -> exists y (edge(x,y) & y in {}))",
                vn(*of),
                vn(*inset)
            ),
            Predicate::AllNeighborsIn { of, inset, nbr_label } => format!(
                "forall x (x in {} -> forall y ((edge(x,y) & label({nbr_label},y)) -> y in {}))",
                vn(*of),
                vn(*inset)
            ),
            Predicate::Connected(i) => {
                // standard split formulation: no proper nonempty subset of
                // X separates it
                let x = vn(*i);
                format!(
                    "setforall Z ((exists a (a in Z & a in {x}) & exists b (b in {x} & !(b in Z))) -> \
                     exists u exists v (u in Z & u in {x} & v in {x} & !(v in Z) & edge(u,v)))"
                )
            }
            Predicate::IntersectLabel { result, src, label } => format!(
                "forall x ((x in {0} -> (x in {1} & label({label},x))) & ((x in {1} & label({label},x)) -> x in {0}))",
                vn(*result),
                vn(*src)
            ),
            Predicate::HalfPair { label, var } => format!(
                "forall x forall y ((edge(x,y) & label({label},x) & label({label},y)) -> \
                 ((x in {0} | y in {0}) & !(x in {0} & y in {0})))",
                vn(*var)
            ),
            Predicate::CutSet { parts, cut, vertex_label, edge_label } => {
                let same = parts
                    .iter()
                    .map(|&i| format!("(u in {0} & v in {0})", vn(i)))
                    .collect::<Vec<_>>()
                    .join(" | ");
                format!(
                    "forall e forall u forall v ((label({edge_label},e) & label({vertex_label},u) & \
                     label({vertex_label},v) & edge(e,u) & edge(e,v) & !(u = v)) -> \
                     ((e in {0} -> !({same})) & (!({same}) -> e in {0})))",
                    vn(*cut)
                )
            }
        }
    }
}

fn label_ok(g: &Graph, label: &Option<String>, v: usize) -> bool {
    match label {
        None => true,
        Some(l) => g.has_label(l, v),
    }
}

fn connected_subset(g: &Graph, s: &BTreeSet<usize>) -> bool {
    let Some(&start) = s.iter().next() else { return true };
    let mut seen: BTreeSet<usize> = [start].into();
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for &u in g.neighbors(v) {
            if s.contains(&u) && seen.insert(u) {
                stack.push(u);
            }
        }
    }
    seen.len() == s.len()
}

// ---------------------------------------------------------------------
// Per-predicate slot automata
// ---------------------------------------------------------------------

/// State component of one predicate automaton. Slots index bag
/// positions; masks are over slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartState {
    Unit,
    Mask(u64),
    Masks(Vec<u64>),
    Conn { comp: Vec<u8>, closed: bool },
}

const NO_COMP: u8 = u8::MAX;

/// Static facts about the vertex being introduced.
pub struct IntroInfo<'a> {
    pub slot: usize,
    /// Membership bit per free variable.
    pub memb: &'a [bool],
    /// Bag slots adjacent to the introduced vertex.
    pub adj: u64,
    /// Labels of the introduced vertex.
    pub labels: &'a BTreeSet<String>,
    /// For each currently occupied slot, the labels of its vertex.
    pub slot_labels: &'a [Option<BTreeSet<String>>],
}

impl Predicate {
    pub fn leaf_state(&self, max_slots: usize) -> PartState {
        match self {
            Predicate::Partition { .. }
            | Predicate::Subset { .. }
            | Predicate::SubsetLabel { .. }
            | Predicate::IntersectLabel { .. } => PartState::Unit,
            Predicate::Independent(_) | Predicate::EdgeCover { .. } => PartState::Mask(0),
            Predicate::Dominated { .. }
            | Predicate::NeighborIn { .. }
            | Predicate::AllNeighborsIn { .. }
            | Predicate::HalfPair { .. } => PartState::Masks(vec![0, 0]),
            Predicate::Connected(_) => {
                PartState::Conn { comp: vec![NO_COMP; max_slots], closed: false }
            }
            Predicate::CutSet { parts, .. } => PartState::Masks(vec![0; parts.len()]),
        }
    }

    /// Transition for introducing a vertex; None rejects.
    pub fn introduce(&self, st: &PartState, info: &IntroInfo<'_>) -> Option<PartState> {
        let has = |l: &str| info.labels.contains(l);
        match (self, st) {
            (Predicate::Partition { vars, within_label }, PartState::Unit) => {
                let applies = within_label.as_ref().map_or(true, |l| has(l));
                if applies {
                    let count = vars.iter().filter(|&&i| info.memb[i]).count();
                    if count != 1 {
                        return None;
                    }
                }
                Some(PartState::Unit)
            }
            (Predicate::Subset { sub, sup }, PartState::Unit) => {
                if info.memb[*sub] && !info.memb[*sup] {
                    None
                } else {
                    Some(PartState::Unit)
                }
            }
            (Predicate::SubsetLabel { var, label }, PartState::Unit) => {
                if info.memb[*var] && !has(label) {
                    None
                } else {
                    Some(PartState::Unit)
                }
            }
            (Predicate::IntersectLabel { result, src, label }, PartState::Unit) => {
                let want = info.memb[*src] && has(label);
                if info.memb[*result] != want {
                    None
                } else {
                    Some(PartState::Unit)
                }
            }
            (Predicate::Independent(i), PartState::Mask(members)) => {
                let mut m = *members;
                if info.memb[*i] {
                    if info.adj & m != 0 {
                        return None;
                    }
                    m |= 1 << info.slot;
                }
                Some(PartState::Mask(m))
            }
            (Predicate::EdgeCover { var, within_label }, PartState::Mask(cover)) => {
                let mut m = *cover;
                let v_labeled = within_label.as_ref().map_or(true, |l| has(l));
                if v_labeled && !info.memb[*var] {
                    // every labeled neighbor already in the bag must be
                    // in the cover
                    let mut rest = info.adj;
                    while rest != 0 {
                        let s = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        let nbr_labeled = within_label.as_ref().map_or(true, |l| {
                            info.slot_labels[s].as_ref().map_or(false, |ls| ls.contains(l))
                        });
                        if nbr_labeled && m & (1 << s) == 0 {
                            return None;
                        }
                    }
                }
                if info.memb[*var] {
                    m |= 1 << info.slot;
                }
                Some(PartState::Mask(m))
            }
            (Predicate::Dominated { protected_label, in_set, by }, PartState::Masks(ms)) => {
                let (mut by_mask, mut need) = (ms[0], ms[1]);
                // the new vertex may dominate pending slots
                if info.memb[*by] {
                    need &= !info.adj;
                    by_mask |= 1 << info.slot;
                }
                let protected = protected_label.as_ref().map_or(true, |l| has(l));
                if protected {
                    let inside = in_set.map_or(false, |i| info.memb[i]);
                    let dominated = info.adj & by_mask != 0;
                    if !inside && !dominated {
                        need |= 1 << info.slot;
                    }
                }
                Some(PartState::Masks(vec![by_mask, need]))
            }
            (Predicate::NeighborIn { of, inset }, PartState::Masks(ms)) => {
                let (mut inset_mask, mut pending) = (ms[0], ms[1]);
                if info.memb[*inset] {
                    pending &= !info.adj;
                    inset_mask |= 1 << info.slot;
                }
                if info.memb[*of] && info.adj & inset_mask == 0 {
                    pending |= 1 << info.slot;
                }
                Some(PartState::Masks(vec![inset_mask, pending]))
            }
            (Predicate::AllNeighborsIn { of, inset, nbr_label }, PartState::Masks(ms)) => {
                let (mut inset_mask, mut of_mask) = (ms[0], ms[1]);
                // new labeled vertex must be in inset if any bag neighbor
                // is a member of `of`
                if has(nbr_label) && !info.memb[*inset] && info.adj & of_mask != 0 {
                    return None;
                }
                // new member's labeled bag-neighbors must be in inset
                if info.memb[*of] {
                    let mut rest = info.adj;
                    while rest != 0 {
                        let s = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        let labeled = info.slot_labels[s]
                            .as_ref()
                            .map_or(false, |ls| ls.contains(nbr_label));
                        if labeled && inset_mask & (1 << s) == 0 {
                            return None;
                        }
                    }
                    of_mask |= 1 << info.slot;
                }
                if info.memb[*inset] {
                    inset_mask |= 1 << info.slot;
                }
                Some(PartState::Masks(vec![inset_mask, of_mask]))
            }
            (Predicate::HalfPair { label, var }, PartState::Masks(ms)) => {
                let (mut labeled_mask, mut var_mask) = (ms[0], ms[1]);
                if has(label) {
                    // adjacent labeled slots are this half's pair: exactly
                    // one of the two selected
                    let mut rest = info.adj & labeled_mask;
                    while rest != 0 {
                        let s = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        let other_in = var_mask & (1 << s) != 0;
                        if other_in == info.memb[*var] {
                            return None;
                        }
                    }
                    labeled_mask |= 1 << info.slot;
                }
                if info.memb[*var] {
                    var_mask |= 1 << info.slot;
                }
                Some(PartState::Masks(vec![labeled_mask, var_mask]))
            }
            (Predicate::Connected(i), PartState::Conn { comp, closed }) => {
                let mut comp = comp.clone();
                if info.memb[*i] {
                    if *closed {
                        // a second component can never reattach
                        return None;
                    }
                    // merge with adjacent member components
                    let mut target: Option<u8> = None;
                    let mut rest = info.adj;
                    let mut to_merge: Vec<u8> = Vec::new();
                    while rest != 0 {
                        let s = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        if comp[s] != NO_COMP {
                            to_merge.push(comp[s]);
                        }
                    }
                    to_merge.sort_unstable();
                    to_merge.dedup();
                    if let Some(&first) = to_merge.first() {
                        target = Some(first);
                        for c in comp.iter_mut() {
                            if *c != NO_COMP && to_merge.contains(c) {
                                *c = first;
                            }
                        }
                    }
                    let label = target.unwrap_or_else(|| {
                        // fresh component id: smallest unused
                        let mut id = 0u8;
                        while comp.iter().any(|&c| c == id) {
                            id += 1;
                        }
                        id
                    });
                    comp[info.slot] = label;
                }
                Some(PartState::Conn { comp: canonical_comp(comp), closed: *closed })
            }
            (Predicate::CutSet { parts, cut, vertex_label, edge_label }, PartState::Masks(ms)) => {
                let mut ms = ms.clone();
                if has(edge_label) {
                    // both endpoints must already be in the bag
                    let mut ends: Vec<usize> = Vec::new();
                    let mut rest = info.adj;
                    while rest != 0 {
                        let s = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        if info.slot_labels[s]
                            .as_ref()
                            .map_or(false, |ls| ls.contains(vertex_label))
                        {
                            ends.push(s);
                        }
                    }
                    assert_eq!(
                        ends.len(),
                        2,
                        "edge vertices must be introduced after both endpoints"
                    );
                    let part_of = |s: usize| ms.iter().position(|m| m & (1 << s) != 0);
                    let crossing = part_of(ends[0]) != part_of(ends[1]);
                    if info.memb[*cut] != crossing {
                        return None;
                    }
                }
                if has(vertex_label) {
                    for (pi, &pvar) in parts.iter().enumerate() {
                        if info.memb[pvar] {
                            ms[pi] |= 1 << info.slot;
                        }
                    }
                }
                Some(PartState::Masks(ms))
            }
            _ => unreachable!("state kind matches predicate"),
        }
    }

    /// Transition for forgetting the vertex at `slot`; None rejects.
    pub fn forget(&self, st: &PartState, slot: usize) -> Option<PartState> {
        let bit = 1u64 << slot;
        match (self, st) {
            (_, PartState::Unit) => Some(PartState::Unit),
            (Predicate::Dominated { .. }, PartState::Masks(ms)) => {
                if ms[1] & bit != 0 {
                    return None; // leaves undominated
                }
                Some(PartState::Masks(vec![ms[0] & !bit, ms[1]]))
            }
            (Predicate::NeighborIn { .. }, PartState::Masks(ms)) => {
                if ms[1] & bit != 0 {
                    return None;
                }
                Some(PartState::Masks(vec![ms[0] & !bit, ms[1]]))
            }
            (Predicate::Connected(_), PartState::Conn { comp, closed }) => {
                let mut comp = comp.clone();
                if comp[slot] != NO_COMP {
                    let c = comp[slot];
                    comp[slot] = NO_COMP;
                    if !comp.iter().any(|&x| x == c) {
                        // component fully forgotten
                        if *closed || comp.iter().any(|&x| x != NO_COMP) {
                            return None;
                        }
                        return Some(PartState::Conn { comp: canonical_comp(comp), closed: true });
                    }
                }
                Some(PartState::Conn { comp: canonical_comp(comp), closed: *closed })
            }
            (_, PartState::Mask(m)) => Some(PartState::Mask(m & !bit)),
            (_, PartState::Masks(ms)) => {
                Some(PartState::Masks(ms.iter().map(|m| m & !bit).collect()))
            }
            _ => unreachable!(),
        }
    }

    /// Combine the states of a join node's children; None rejects.
    pub fn join(&self, a: &PartState, b: &PartState) -> Option<PartState> {
        match (self, a, b) {
            (_, PartState::Unit, PartState::Unit) => Some(PartState::Unit),
            (_, PartState::Mask(x), PartState::Mask(y)) => {
                if x != y {
                    return None;
                }
                Some(PartState::Mask(*x))
            }
            (Predicate::Dominated { .. }, PartState::Masks(x), PartState::Masks(y)) => {
                if x[0] != y[0] {
                    return None;
                }
                // dominated on either side suffices
                Some(PartState::Masks(vec![x[0], x[1] & y[1]]))
            }
            (Predicate::NeighborIn { .. }, PartState::Masks(x), PartState::Masks(y)) => {
                if x[0] != y[0] {
                    return None;
                }
                Some(PartState::Masks(vec![x[0], x[1] & y[1]]))
            }
            (
                Predicate::Connected(_),
                PartState::Conn { comp: ca, closed: za },
                PartState::Conn { comp: cb, closed: zb },
            ) => {
                let member_a: Vec<bool> = ca.iter().map(|&c| c != NO_COMP).collect();
                let member_b: Vec<bool> = cb.iter().map(|&c| c != NO_COMP).collect();
                if member_a != member_b {
                    return None;
                }
                let any_member = member_a.iter().any(|&m| m);
                if (*za || *zb) && any_member {
                    return None;
                }
                if *za && *zb {
                    return None;
                }
                // merge the two partitions
                let n = ca.len();
                let mut parent: Vec<usize> = (0..n).collect();
                fn find(p: &mut Vec<usize>, x: usize) -> usize {
                    if p[x] != x {
                        let r = find(p, p[x]);
                        p[x] = r;
                        r
                    } else {
                        x
                    }
                }
                for side in [ca, cb] {
                    for i in 0..n {
                        for j in i + 1..n {
                            if side[i] != NO_COMP && side[i] == side[j] {
                                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                                parent[ri.min(rj)] = ri.min(rj);
                                parent[ri.max(rj)] = ri.min(rj);
                            }
                        }
                    }
                }
                let mut comp = vec![NO_COMP; n];
                for i in 0..n {
                    if member_a[i] {
                        comp[i] = find(&mut parent, i) as u8;
                    }
                }
                Some(PartState::Conn { comp: canonical_comp(comp), closed: *za || *zb })
            }
            (_, PartState::Masks(x), PartState::Masks(y)) => {
                if x != y {
                    return None;
                }
                Some(PartState::Masks(x.clone()))
            }
            _ => unreachable!(),
        }
    }

    pub fn accept(&self, st: &PartState) -> bool {
        match (self, st) {
            (Predicate::Connected(_), PartState::Conn { comp, .. }) => {
                comp.iter().all(|&c| c == NO_COMP)
            }
            _ => true,
        }
    }
}

/// Relabel components by first occurrence so equal partitions compare
/// equal.
fn canonical_comp(comp: Vec<u8>) -> Vec<u8> {
    let mut map: Vec<(u8, u8)> = Vec::new();
    let mut next = 0u8;
    comp.into_iter()
        .map(|c| {
            if c == NO_COMP {
                return NO_COMP;
            }
            if let Some(&(_, t)) = map.iter().find(|&&(f, _)| f == c) {
                t
            } else {
                let t = next;
                map.push((c, t));
                next += 1;
                t
            }
        })
        .collect()
}

/// Product of predicate automata; the state is the vector of component
/// states.
#[derive(Debug, Clone)]
pub struct ProductAutomaton {
    pub predicates: Vec<Predicate>,
    pub max_slots: usize,
}

pub type ProductState = Vec<PartState>;

impl ProductAutomaton {
    pub fn new(predicates: Vec<Predicate>, max_slots: usize) -> Self {
        ProductAutomaton { predicates, max_slots }
    }

    pub fn leaf(&self) -> ProductState {
        self.predicates.iter().map(|p| p.leaf_state(self.max_slots)).collect()
    }

    pub fn introduce(&self, st: &ProductState, info: &IntroInfo<'_>) -> Option<ProductState> {
        self.predicates
            .iter()
            .zip(st)
            .map(|(p, s)| p.introduce(s, info))
            .collect()
    }

    pub fn forget(&self, st: &ProductState, slot: usize) -> Option<ProductState> {
        self.predicates.iter().zip(st).map(|(p, s)| p.forget(s, slot)).collect()
    }

    pub fn join(&self, a: &ProductState, b: &ProductState) -> Option<ProductState> {
        self.predicates
            .iter()
            .zip(a.iter().zip(b))
            .map(|(p, (x, y))| p.join(x, y))
            .collect()
    }

    pub fn accept(&self, st: &ProductState) -> bool {
        self.predicates.iter().zip(st).all(|(p, s)| p.accept(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn sets(parts: &[&[usize]]) -> Vec<BTreeSet<usize>> {
        parts.iter().map(|p| p.iter().copied().collect()).collect()
    }

    #[test]
    fn partition_holds() {
        let g = Graph::path(3);
        let p = Predicate::Partition { vars: vec![0, 1], within_label: None };
        assert!(p.holds(&g, &sets(&[&[0, 2], &[1]])));
        assert!(!p.holds(&g, &sets(&[&[0], &[1]])));
        assert!(!p.holds(&g, &sets(&[&[0, 1], &[1, 2]])));
    }

    #[test]
    fn independent_holds() {
        let g = Graph::complete(3);
        let p = Predicate::Independent(0);
        assert!(p.holds(&g, &sets(&[&[1]])));
        assert!(!p.holds(&g, &sets(&[&[0, 1]])));
    }

    #[test]
    fn connected_holds_and_empty_convention() {
        let g = Graph::path(4);
        let p = Predicate::Connected(0);
        assert!(p.holds(&g, &sets(&[&[1, 2]])));
        assert!(!p.holds(&g, &sets(&[&[0, 3]])));
        assert!(p.holds(&g, &sets(&[&[]])));
    }

    #[test]
    fn predicate_formula_equivalence() {
        use crate::eval::{mc_naive, EvalBudget};
        use crate::logic::parse_formula;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let budget = EvalBudget::default();
        let names: Vec<String> = vec!["X1".into(), "X2".into()];
        let preds = vec![
            Predicate::Partition { vars: vec![0, 1], within_label: None },
            Predicate::Independent(0),
            Predicate::Subset { sub: 0, sup: 1 },
            Predicate::EdgeCover { var: 1, within_label: None },
            Predicate::Dominated { protected_label: None, in_set: Some(0), by: 0 },
            Predicate::NeighborIn { of: 0, inset: 1 },
            Predicate::Connected(0),
        ];
        for _ in 0..12 {
            let n = rng.gen_range(1..6);
            let mut g = Graph::new(n);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.5) {
                        g.add_edge(u, v);
                    }
                }
            }
            for p in &preds {
                let (f, free) = parse_formula(&p.to_formula_text(&names), &[]).unwrap();
                for _ in 0..6 {
                    let assignment: Vec<BTreeSet<usize>> = (0..2)
                        .map(|_| (0..n).filter(|_| rng.gen_bool(0.5)).collect())
                        .collect();
                    // formula free vars are in first-occurrence order;
                    // remap to X1, X2 positions
                    let mapped: Vec<BTreeSet<usize>> = free
                        .iter()
                        .map(|name| {
                            let idx = names.iter().position(|m| m == name).unwrap();
                            assignment[idx].clone()
                        })
                        .collect();
                    let direct = p.holds(&g, &assignment);
                    let via_mso = mc_naive(&g, &f, &mapped, &budget).unwrap();
                    assert_eq!(direct, via_mso, "predicate {p:?} vs its formula on n={n}");
                }
            }
        }
    }
}
