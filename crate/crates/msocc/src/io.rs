//! Text formats: line-oriented graphs, tree decompositions in the
//! PACE-style exchange convention, sectioned instance files, and the
//! CSP audit dump.

use crate::automaton::Predicate;
use crate::csp::{CspInstance, Relation};
use crate::graph::{Graph, TreeDecomposition};
use crate::interval::IntervalSet;
use crate::logic::{
    format_rational, parse_formula, parse_rational, print_formula_with_globals, Formula,
    GlobalConstraint, GlobalForm, Instance, LocalConstraint, Sense,
};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {0}: {1}")]
    Malformed(usize, String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("formula: {0}")]
    Logic(#[from] crate::logic::LogicError),
    #[error("{0}")]
    Other(String),
}

fn bad(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Malformed(line, msg.into())
}

// ---------------------------------------------------------------------
// Graph format: `p <n> <m>`, `e <u> <v>` 1-indexed, `l <name> <v...>`
// ---------------------------------------------------------------------

pub fn parse_graph(text: &str) -> Result<Graph, IoError> {
    let mut g: Option<Graph> = None;
    let mut edges_seen = 0usize;
    let mut declared_m = 0usize;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("p") => {
                let n: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln + 1, "p line needs a vertex count"))?;
                declared_m = it.next().and_then(|s| s.parse().ok()).unwrap_or(0);
                g = Some(Graph::new(n));
            }
            Some("e") => {
                let g = g.as_mut().ok_or_else(|| bad(ln + 1, "e before p"))?;
                let u: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln + 1, "edge endpoint"))?;
                let v: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln + 1, "edge endpoint"))?;
                if u == 0 || v == 0 || u > g.n() || v > g.n() || u == v {
                    return Err(bad(ln + 1, format!("bad edge {u} {v}")));
                }
                g.add_edge(u - 1, v - 1);
                edges_seen += 1;
            }
            Some("l") => {
                let g = g.as_mut().ok_or_else(|| bad(ln + 1, "l before p"))?;
                let name = it.next().ok_or_else(|| bad(ln + 1, "label name"))?.to_string();
                let mut verts = Vec::new();
                for tok in it {
                    let v: usize =
                        tok.parse().map_err(|_| bad(ln + 1, format!("label vertex {tok}")))?;
                    if v == 0 || v > g.n() {
                        return Err(bad(ln + 1, format!("label vertex {v} out of range")));
                    }
                    verts.push(v - 1);
                }
                g.set_label(&name, verts);
            }
            Some(other) => return Err(bad(ln + 1, format!("unknown record `{other}`"))),
            None => {}
        }
    }
    let mut g = g.ok_or_else(|| bad(0, "missing p line"))?;
    if declared_m != 0 && g.m() != declared_m && edges_seen != declared_m {
        return Err(IoError::Other(format!("declared {declared_m} edges, found {}", g.m())));
    }
    // incidence structures round-trip through their labels
    let lv = g.label(crate::graph::LABEL_VERTEX).cloned();
    let le = g.label(crate::graph::LABEL_EDGE).cloned();
    if let (Some(lv), Some(le)) = (lv, le) {
        if lv.is_disjoint(&le) && lv.len() + le.len() == g.n() {
            g.set_sigma2();
        }
    }
    Ok(g)
}

pub fn emit_graph(g: &Graph) -> String {
    let mut out = String::new();
    writeln!(out, "p {} {}", g.n(), g.m()).unwrap();
    for (u, v) in g.edges() {
        writeln!(out, "e {} {}", u + 1, v + 1).unwrap();
    }
    for (name, verts) in g.labels() {
        let list: Vec<String> = verts.iter().map(|v| (v + 1).to_string()).collect();
        writeln!(out, "l {} {}", name, list.join(" ")).unwrap();
    }
    out
}

// ---------------------------------------------------------------------
// Tree decomposition format: `td <nodes> <width+1> <n>`, `b <id> <v...>`,
// `t <id1> <id2>`
// ---------------------------------------------------------------------

pub fn parse_td(text: &str) -> Result<TreeDecomposition, IoError> {
    let mut bags: Vec<BTreeSet<usize>> = Vec::new();
    let mut edges = Vec::new();
    let mut declared = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("td") => {
                let count: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln + 1, "td node count"))?;
                declared = Some(count);
                bags = vec![BTreeSet::new(); count];
            }
            Some("b") => {
                let id: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln + 1, "bag id"))?;
                if id == 0 || id > bags.len() {
                    return Err(bad(ln + 1, format!("bag id {id} out of range")));
                }
                let mut bag = BTreeSet::new();
                for tok in it {
                    let v: usize =
                        tok.parse().map_err(|_| bad(ln + 1, format!("bag vertex {tok}")))?;
                    if v == 0 {
                        return Err(bad(ln + 1, "vertices are 1-indexed"));
                    }
                    bag.insert(v - 1);
                }
                bags[id - 1] = bag;
            }
            Some("t") => {
                let a: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln + 1, "tree edge"))?;
                let b: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln + 1, "tree edge"))?;
                if a == 0 || b == 0 || a > bags.len() || b > bags.len() {
                    return Err(bad(ln + 1, "tree edge node out of range"));
                }
                edges.push((a - 1, b - 1));
            }
            Some(other) => return Err(bad(ln + 1, format!("unknown record `{other}`"))),
            None => {}
        }
    }
    if declared.is_none() {
        return Err(bad(0, "missing td header"));
    }
    Ok(TreeDecomposition { bags, tree_edges: edges })
}

pub fn emit_td(td: &TreeDecomposition, n: usize) -> String {
    let mut out = String::new();
    writeln!(out, "td {} {} {}", td.node_count(), td.width() + 1, n).unwrap();
    for (i, bag) in td.bags.iter().enumerate() {
        let list: Vec<String> = bag.iter().map(|v| (v + 1).to_string()).collect();
        writeln!(out, "b {} {}", i + 1, list.join(" ")).unwrap();
    }
    for &(a, b) in &td.tree_edges {
        writeln!(out, "t {} {}", a + 1, b + 1).unwrap();
    }
    out
}

// ---------------------------------------------------------------------
// Interval sets: `0-2,5,7-9` or `none`
// ---------------------------------------------------------------------

pub fn parse_intervals(tok: &str) -> Option<IntervalSet> {
    if tok == "none" {
        return Some(IntervalSet::empty());
    }
    let mut ivs = Vec::new();
    for part in tok.split(',') {
        if let Some((lo, hi)) = part.split_once('-') {
            ivs.push((lo.parse().ok()?, hi.parse().ok()?));
        } else {
            let x: usize = part.parse().ok()?;
            ivs.push((x, x));
        }
    }
    Some(IntervalSet::from_intervals(&ivs))
}

// ---------------------------------------------------------------------
// Instance format (.msoi)
// ---------------------------------------------------------------------

/// Parses a sectioned instance file. The graph is loaded relative to
/// `base_dir` unless the `[graph]` path is absolute.
pub fn parse_instance(text: &str, base_dir: &Path) -> Result<Instance, IoError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Vars,
        Graph,
        Formula,
        Predicates,
        Globals,
        Locals,
        Weights,
    }
    let mut section = Section::None;
    let mut graph: Option<Graph> = None;
    let mut var_names: Vec<String> = Vec::new();
    let mut formula_text = String::new();
    let mut pred_lines: Vec<(usize, String)> = Vec::new();
    let mut global_lines: Vec<(usize, String)> = Vec::new();
    let mut local_lines: Vec<(usize, String)> = Vec::new();
    let mut weight_lines: Vec<(usize, String)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let (name, tail) = rest
                .split_once(']')
                .ok_or_else(|| bad(ln + 1, "unterminated section header"))?;
            section = match name {
                "vars" => Section::Vars,
                "graph" => Section::Graph,
                "formula" => Section::Formula,
                "predicates" => Section::Predicates,
                "globals" => Section::Globals,
                "locals" => Section::Locals,
                "weights" => Section::Weights,
                other => return Err(bad(ln + 1, format!("unknown section `{other}`"))),
            };
            let tail = tail.trim();
            if !tail.is_empty() {
                match section {
                    Section::Vars => var_names.extend(tail.split_whitespace().map(String::from)),
                    Section::Graph => {
                        let path = if Path::new(tail).is_absolute() {
                            tail.into()
                        } else {
                            base_dir.join(tail)
                        };
                        let gtext = std::fs::read_to_string(&path)?;
                        graph = Some(parse_graph(&gtext)?);
                    }
                    Section::Formula => {
                        formula_text.push_str(tail);
                        formula_text.push(' ');
                    }
                    _ => return Err(bad(ln + 1, "unexpected inline content")),
                }
            }
            continue;
        }
        match section {
            Section::None => return Err(bad(ln + 1, "content before a section header")),
            Section::Vars => var_names.extend(line.split_whitespace().map(String::from)),
            Section::Graph => {
                let path =
                    if Path::new(line).is_absolute() { line.into() } else { base_dir.join(line) };
                let gtext = std::fs::read_to_string(&path)?;
                graph = Some(parse_graph(&gtext)?);
            }
            Section::Formula => {
                formula_text.push_str(line);
                formula_text.push(' ');
            }
            Section::Predicates => pred_lines.push((ln + 1, line.to_string())),
            Section::Globals => global_lines.push((ln + 1, line.to_string())),
            Section::Locals => local_lines.push((ln + 1, line.to_string())),
            Section::Weights => weight_lines.push((ln + 1, line.to_string())),
        }
    }

    let graph = graph.ok_or_else(|| IoError::Other("missing [graph] section".into()))?;
    let n = graph.n();

    // globals first: the formula may reference them
    let mut globals = Vec::new();
    for (ln, line) in &global_lines {
        globals.push(parse_global_line(*ln, line)?);
    }
    let declared: Vec<String> = globals.iter().map(|g| g.id.clone()).collect();

    let ftext = formula_text.trim();
    let (formula, occurrence) = if ftext.is_empty() {
        (Formula::Const(true), Vec::new())
    } else {
        parse_formula(ftext, &declared)?
    };
    // declaration order wins; otherwise first-occurrence order
    for name in &occurrence {
        if !var_names.contains(name) {
            var_names.push(name.clone());
        }
    }
    if var_names.is_empty() {
        var_names.push("X1".into());
    }
    let formula = {
        // remap occurrence indices into declared order
        use crate::logic::SetRef;
        let map: Vec<usize> = occurrence
            .iter()
            .map(|name| var_names.iter().position(|d| d == name).unwrap())
            .collect();
        fn go(f: &Formula, map: &[usize]) -> Formula {
            match f {
                Formula::Member(e, SetRef::Free(i)) => Formula::Member(*e, SetRef::Free(map[*i])),
                Formula::SetQuant(q, b) => Formula::SetQuant(*q, Box::new(go(b, map))),
                Formula::ElemQuant(q, b) => Formula::ElemQuant(*q, Box::new(go(b, map))),
                Formula::Not(a) => Formula::not(go(a, map)),
                Formula::And(a, b) => Formula::and(go(a, map), go(b, map)),
                Formula::Or(a, b) => Formula::or(go(a, map), go(b, map)),
                Formula::Implies(a, b) => Formula::implies(go(a, map), go(b, map)),
                other => other.clone(),
            }
        }
        go(&formula, &map)
    };
    let ell = var_names.len();

    let mut inst = Instance::new(graph, formula, ell);
    inst.var_names = var_names;
    inst.globals = globals;

    for (ln, line) in &pred_lines {
        inst.predicates.push(parse_predicate_line(*ln, line, ell)?);
    }

    for (ln, line) in &local_lines {
        let mut it = line.split_whitespace();
        if it.next() != Some("a") {
            return Err(bad(*ln, "local lines start with `a`"));
        }
        let var: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(*ln, "local variable index"))?;
        if var == 0 || var > ell {
            return Err(bad(*ln, format!("variable index {var} out of range")));
        }
        let vtok = it.next().ok_or_else(|| bad(*ln, "local vertex"))?;
        let set = it
            .next()
            .and_then(parse_intervals)
            .ok_or_else(|| bad(*ln, "interval list"))?;
        let cond = match (it.next(), it.next()) {
            (None, _) => None,
            (Some("if-in"), Some(j)) => {
                let j: usize = j.parse().map_err(|_| bad(*ln, "condition variable"))?;
                Some((j - 1, true))
            }
            (Some("if-out"), Some(j)) => {
                let j: usize = j.parse().map_err(|_| bad(*ln, "condition variable"))?;
                Some((j - 1, false))
            }
            _ => return Err(bad(*ln, "expected `if-in <j>` or `if-out <j>`")),
        };
        let var = var - 1;
        if vtok == "*" {
            inst.locals.push(LocalConstraint { var, cond, map: vec![set; n] });
        } else {
            let v: usize = vtok.parse().map_err(|_| bad(*ln, "local vertex"))?;
            if v == 0 || v > n {
                return Err(bad(*ln, format!("vertex {v} out of range")));
            }
            // merge into an existing unconditional-compatible entry
            let existing = inst
                .locals
                .iter_mut()
                .find(|lc| lc.var == var && lc.cond == cond && lc.map.len() == n);
            match existing {
                Some(lc) => lc.map[v - 1] = set,
                None => {
                    let mut map = vec![IntervalSet::interval(0, n); n];
                    map[v - 1] = set;
                    inst.locals.push(LocalConstraint { var, cond, map });
                }
            }
        }
    }

    if !weight_lines.is_empty() {
        let mut w = vec![vec![0i64; n]; ell];
        for (ln, line) in &weight_lines {
            let mut it = line.split_whitespace();
            if it.next() != Some("w") {
                return Err(bad(*ln, "weight lines start with `w`"));
            }
            let i: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(*ln, "weight variable index"))?;
            let v: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(*ln, "weight vertex"))?;
            let c: i64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(*ln, "weight value"))?;
            if i == 0 || i > ell || v == 0 || v > n {
                return Err(bad(*ln, "weight indices out of range"));
            }
            w[i - 1][v - 1] = c;
        }
        inst.weights = Some(w);
    }
    Ok(inst)
}

fn parse_global_line(ln: usize, line: &str) -> Result<GlobalConstraint, IoError> {
    let mut it = line.split_whitespace();
    if it.next() != Some("g") {
        return Err(bad(ln, "global lines start with `g`"));
    }
    let id = it.next().ok_or_else(|| bad(ln, "global id"))?.to_string();
    let kind = it.next().ok_or_else(|| bad(ln, "global kind"))?;
    let rest: Vec<&str> = it.collect();
    let form = match kind {
        "linear" => {
            if rest.len() < 2 {
                return Err(bad(ln, "linear needs coefficients, sense, bound"));
            }
            let sense_pos = rest
                .iter()
                .position(|t| matches!(*t, "<=" | "=" | ">="))
                .ok_or_else(|| bad(ln, "linear sense"))?;
            let coeffs: Vec<_> = rest[..sense_pos]
                .iter()
                .map(|t| parse_rational(t).ok_or_else(|| bad(ln, format!("coefficient {t}"))))
                .collect::<Result<_, _>>()?;
            let sense = match rest[sense_pos] {
                "<=" => Sense::Le,
                "=" => Sense::Eq,
                ">=" => Sense::Ge,
                _ => unreachable!(),
            };
            let bound = rest
                .get(sense_pos + 1)
                .and_then(|t| parse_rational(t))
                .ok_or_else(|| bad(ln, "linear bound"))?;
            GlobalForm::Linear { coeffs, sense, bound }
        }
        "table" => {
            let tuples: Vec<Vec<usize>> = rest
                .iter()
                .map(|t| {
                    t.split(',')
                        .map(|x| x.parse().map_err(|_| bad(ln, format!("tuple entry {x}"))))
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            GlobalForm::Table(tuples)
        }
        "mod" => {
            let vals: Vec<usize> = rest
                .iter()
                .map(|t| t.parse().map_err(|_| bad(ln, "mod arguments")))
                .collect::<Result<_, _>>()?;
            if vals.len() != 3 {
                return Err(bad(ln, "mod takes <var> <p> <q>"));
            }
            GlobalForm::Mod { var: vals[0] - 1, p: vals[1], q: vals[2] }
        }
        "gesq" => {
            let vals: Vec<usize> = rest
                .iter()
                .map(|t| t.parse().map_err(|_| bad(ln, "gesq arguments")))
                .collect::<Result<_, _>>()?;
            if vals.len() != 2 {
                return Err(bad(ln, "gesq takes <lhs> <rhs>"));
            }
            GlobalForm::GeSquare { lhs: vals[0] - 1, rhs: vals[1] - 1 }
        }
        "member" => {
            if rest.len() != 2 {
                return Err(bad(ln, "member takes <var> <intervals>"));
            }
            let var: usize = rest[0].parse().map_err(|_| bad(ln, "member variable"))?;
            let set = parse_intervals(rest[1]).ok_or_else(|| bad(ln, "member intervals"))?;
            GlobalForm::SetMember { var: var - 1, set }
        }
        other => return Err(bad(ln, format!("unknown global kind `{other}`"))),
    };
    Ok(GlobalConstraint { id, form })
}

fn parse_predicate_line(ln: usize, line: &str, ell: usize) -> Result<Predicate, IoError> {
    let mut it = line.split_whitespace();
    if it.next() != Some("p") {
        return Err(bad(ln, "predicate lines start with `p`"));
    }
    let kind = it.next().ok_or_else(|| bad(ln, "predicate kind"))?;
    let rest: Vec<&str> = it.collect();
    let var = |tok: &str| -> Result<usize, IoError> {
        let i: usize = tok.parse().map_err(|_| bad(ln, format!("variable index {tok}")))?;
        if i == 0 || i > ell {
            return Err(bad(ln, format!("variable index {i} out of range")));
        }
        Ok(i - 1)
    };
    let p = match kind {
        "partition" => Predicate::Partition {
            vars: rest.iter().map(|t| var(t)).collect::<Result<_, _>>()?,
            within_label: None,
        },
        "partition-label" => {
            let label = rest.first().ok_or_else(|| bad(ln, "label"))?.to_string();
            Predicate::Partition {
                vars: rest[1..].iter().map(|t| var(t)).collect::<Result<_, _>>()?,
                within_label: Some(label),
            }
        }
        "independent" => Predicate::Independent(var(rest.first().ok_or_else(|| bad(ln, "var"))?)?),
        "connected" => Predicate::Connected(var(rest.first().ok_or_else(|| bad(ln, "var"))?)?),
        "subset" => Predicate::Subset {
            sub: var(rest.first().ok_or_else(|| bad(ln, "vars"))?)?,
            sup: var(rest.get(1).ok_or_else(|| bad(ln, "vars"))?)?,
        },
        "subset-label" => Predicate::SubsetLabel {
            var: var(rest.first().ok_or_else(|| bad(ln, "var"))?)?,
            label: rest.get(1).ok_or_else(|| bad(ln, "label"))?.to_string(),
        },
        "edge-cover" => Predicate::EdgeCover {
            var: var(rest.first().ok_or_else(|| bad(ln, "var"))?)?,
            within_label: rest.get(1).map(|s| s.to_string()),
        },
        "dominated" => {
            // dominated <label|*> <in-var|-> <by-var>
            let label = match *rest.first().ok_or_else(|| bad(ln, "label"))? {
                "*" => None,
                l => Some(l.to_string()),
            };
            let in_set = match *rest.get(1).ok_or_else(|| bad(ln, "in-var"))? {
                "-" => None,
                t => Some(var(t)?),
            };
            let by = var(rest.get(2).ok_or_else(|| bad(ln, "by-var"))?)?;
            Predicate::Dominated { protected_label: label, in_set, by }
        }
        "neighbor-in" => Predicate::NeighborIn {
            of: var(rest.first().ok_or_else(|| bad(ln, "vars"))?)?,
            inset: var(rest.get(1).ok_or_else(|| bad(ln, "vars"))?)?,
        },
        "all-neighbors-in" => Predicate::AllNeighborsIn {
            of: var(rest.first().ok_or_else(|| bad(ln, "vars"))?)?,
            inset: var(rest.get(1).ok_or_else(|| bad(ln, "vars"))?)?,
            nbr_label: rest.get(2).ok_or_else(|| bad(ln, "label"))?.to_string(),
        },
        "half-pair" => Predicate::HalfPair {
            label: rest.first().ok_or_else(|| bad(ln, "label"))?.to_string(),
            var: var(rest.get(1).ok_or_else(|| bad(ln, "var"))?)?,
        },
        "intersect-label" => Predicate::IntersectLabel {
            result: var(rest.first().ok_or_else(|| bad(ln, "vars"))?)?,
            src: var(rest.get(1).ok_or_else(|| bad(ln, "vars"))?)?,
            label: rest.get(2).ok_or_else(|| bad(ln, "label"))?.to_string(),
        },
        "cutset" => {
            // cutset <cut> <vertex-label> <edge-label> <part vars...>
            let cut = var(rest.first().ok_or_else(|| bad(ln, "cut var"))?)?;
            let vertex_label = rest.get(1).ok_or_else(|| bad(ln, "vertex label"))?.to_string();
            let edge_label = rest.get(2).ok_or_else(|| bad(ln, "edge label"))?.to_string();
            let parts = rest[3..].iter().map(|t| var(t)).collect::<Result<_, _>>()?;
            Predicate::CutSet { parts, cut, vertex_label, edge_label }
        }
        other => return Err(bad(ln, format!("unknown predicate `{other}`"))),
    };
    Ok(p)
}

/// Writes an instance, referencing the graph by the given relative path.
pub fn emit_instance(inst: &Instance, graph_path: &str) -> String {
    let mut out = String::new();
    writeln!(out, "[vars] {}", inst.var_names.join(" ")).unwrap();
    writeln!(out, "[graph] {graph_path}").unwrap();
    let globals: Vec<String> = inst.globals.iter().map(|g| g.id.clone()).collect();
    writeln!(out, "[formula]").unwrap();
    writeln!(out, "{}", print_formula_with_globals(&inst.formula, &inst.var_names, &globals))
        .unwrap();
    if !inst.predicates.is_empty() {
        writeln!(out, "[predicates]").unwrap();
        for p in &inst.predicates {
            writeln!(out, "{}", emit_predicate(p)).unwrap();
        }
    }
    if !inst.globals.is_empty() {
        writeln!(out, "[globals]").unwrap();
        for g in &inst.globals {
            writeln!(out, "{}", emit_global(g)).unwrap();
        }
    }
    if !inst.locals.is_empty() {
        writeln!(out, "[locals]").unwrap();
        let n = inst.graph.n();
        for lc in &inst.locals {
            let cond = match lc.cond {
                None => String::new(),
                Some((j, true)) => format!(" if-in {}", j + 1),
                Some((j, false)) => format!(" if-out {}", j + 1),
            };
            // uniform maps compress to a star line
            if lc.map.iter().all(|s| *s == lc.map[0]) {
                writeln!(out, "a {} * {}{}", lc.var + 1, lc.map[0], cond).unwrap();
            } else {
                for v in 0..n {
                    writeln!(out, "a {} {} {}{}", lc.var + 1, v + 1, lc.map[v], cond).unwrap();
                }
            }
        }
    }
    if let Some(w) = &inst.weights {
        writeln!(out, "[weights]").unwrap();
        for (i, row) in w.iter().enumerate() {
            for (v, &c) in row.iter().enumerate() {
                if c != 0 {
                    writeln!(out, "w {} {} {}", i + 1, v + 1, c).unwrap();
                }
            }
        }
    }
    out
}

fn emit_global(g: &GlobalConstraint) -> String {
    match &g.form {
        GlobalForm::Linear { coeffs, sense, bound } => {
            let cs: Vec<String> = coeffs.iter().map(format_rational).collect();
            format!("g {} linear {} {} {}", g.id, cs.join(" "), sense, format_rational(bound))
        }
        GlobalForm::Table(tuples) => {
            let ts: Vec<String> = tuples
                .iter()
                .map(|t| t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                .collect();
            format!("g {} table {}", g.id, ts.join(" "))
        }
        GlobalForm::Mod { var, p, q } => format!("g {} mod {} {} {}", g.id, var + 1, p, q),
        GlobalForm::GeSquare { lhs, rhs } => format!("g {} gesq {} {}", g.id, lhs + 1, rhs + 1),
        GlobalForm::SetMember { var, set } => format!("g {} member {} {}", g.id, var + 1, set),
    }
}

fn emit_predicate(p: &Predicate) -> String {
    let v = |i: usize| (i + 1).to_string();
    match p {
        Predicate::Partition { vars, within_label: None } => {
            format!("p partition {}", vars.iter().map(|&i| v(i)).collect::<Vec<_>>().join(" "))
        }
        Predicate::Partition { vars, within_label: Some(l) } => format!(
            "p partition-label {} {}",
            l,
            vars.iter().map(|&i| v(i)).collect::<Vec<_>>().join(" ")
        ),
        Predicate::Independent(i) => format!("p independent {}", v(*i)),
        Predicate::Connected(i) => format!("p connected {}", v(*i)),
        Predicate::Subset { sub, sup } => format!("p subset {} {}", v(*sub), v(*sup)),
        Predicate::SubsetLabel { var, label } => format!("p subset-label {} {}", v(*var), label),
        Predicate::EdgeCover { var, within_label: None } => format!("p edge-cover {}", v(*var)),
        Predicate::EdgeCover { var, within_label: Some(l) } => {
            format!("p edge-cover {} {}", v(*var), l)
        }
        Predicate::Dominated { protected_label, in_set, by } => format!(
            "p dominated {} {} {}",
            protected_label.clone().unwrap_or_else(|| "*".into()),
            in_set.map_or_else(|| "-".into(), v),
            v(*by)
        ),
        Predicate::NeighborIn { of, inset } => format!("p neighbor-in {} {}", v(*of), v(*inset)),
        Predicate::AllNeighborsIn { of, inset, nbr_label } => {
            format!("p all-neighbors-in {} {} {}", v(*of), v(*inset), nbr_label)
        }
        Predicate::HalfPair { label, var } => format!("p half-pair {} {}", label, v(*var)),
        Predicate::IntersectLabel { result, src, label } => {
            format!("p intersect-label {} {} {}", v(*result), v(*src), label)
        }
        Predicate::CutSet { parts, cut, vertex_label, edge_label } => format!(
            "p cutset {} {} {} {}",
            v(*cut),
            vertex_label,
            edge_label,
            parts.iter().map(|&i| v(i)).collect::<Vec<_>>().join(" ")
        ),
    }
}

// ---------------------------------------------------------------------
// CSP audit dump
// ---------------------------------------------------------------------

pub fn emit_csp(csp: &CspInstance) -> String {
    let mut out = String::new();
    writeln!(out, "[vars]").unwrap();
    for (i, name) in csp.var_names.iter().enumerate() {
        writeln!(out, "v {} {}", i + 1, name).unwrap();
    }
    writeln!(out, "[domains]").unwrap();
    for (i, d) in csp.domains.iter().enumerate() {
        let list: Vec<String> = d.iter().map(|x| x.to_string()).collect();
        writeln!(out, "d {} {}", i + 1, list.join(",")).unwrap();
    }
    writeln!(out, "[hard]").unwrap();
    for h in &csp.hard {
        let scope: Vec<String> = h.scope.iter().map(|v| (v + 1).to_string()).collect();
        match &h.rel {
            Relation::Table(t) => {
                let ts: Vec<String> = t
                    .iter()
                    .map(|tp| tp.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                writeln!(out, "h {} table {}", scope.join(" "), ts.join(" ")).unwrap();
            }
            Relation::Linear { coeffs, sense, rhs } => {
                let cs: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
                let s = match sense {
                    crate::ilp::RowSense::Le => "<=",
                    crate::ilp::RowSense::Eq => "=",
                    crate::ilp::RowSense::Ge => ">=",
                };
                writeln!(out, "h {} linear {} {} {}", scope.join(" "), cs.join(" "), s, rhs)
                    .unwrap();
            }
            Relation::Member(set) => {
                writeln!(out, "h {} member {}", scope.join(" "), set).unwrap();
            }
            Relation::Pred(_) => {
                writeln!(out, "h {} predicate", scope.join(" ")).unwrap();
            }
        }
    }
    writeln!(out, "[soft]").unwrap();
    for s in &csp.soft {
        let scope: Vec<String> = s.scope.iter().map(|v| (v + 1).to_string()).collect();
        let ws: Vec<String> = s
            .weights
            .iter()
            .map(|(t, w)| {
                format!(
                    "{}:{}",
                    t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                    format_rational(w)
                )
            })
            .collect();
        writeln!(out, "s {} {}", scope.join(" "), ws.join(" ")).unwrap();
    }
    out
}

/// Emits a neighborhood decomposition with its type graph.
pub fn emit_nd(
    nd: &crate::graph::NeighborhoodDecomposition,
    tg: &crate::graph::TypeGraph,
) -> String {
    let mut out = String::new();
    writeln!(out, "nd {}", nd.nu()).unwrap();
    for (j, t) in nd.types.iter().enumerate() {
        let kind = match nd.kinds[j] {
            crate::graph::TypeKind::Clique => "clique",
            crate::graph::TypeKind::Independent => "independent",
        };
        let list: Vec<String> = t.iter().map(|v| (v + 1).to_string()).collect();
        writeln!(out, "type {} {} {}", j + 1, kind, list.join(" ")).unwrap();
    }
    for i in 0..nd.nu() {
        for j in i..nd.nu() {
            if tg.has_edge(i, j) {
                writeln!(out, "tedge {} {}", i + 1, j + 1).unwrap();
            }
        }
    }
    out
}

/// Witness sidecar: one line per variable with the selected vertices.
pub fn emit_witness(sets: &[BTreeSet<usize>], names: &[String]) -> String {
    let mut out = String::new();
    for (j, s) in sets.iter().enumerate() {
        let list: Vec<String> = s.iter().map(|v| (v + 1).to_string()).collect();
        writeln!(out, "{} {}", names[j], list.join(" ")).unwrap();
    }
    out
}

pub fn parse_witness(text: &str, names: &[String], n: usize) -> Result<Vec<BTreeSet<usize>>, IoError> {
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); names.len()];
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let name = it.next().unwrap();
        let j = names
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| bad(ln + 1, format!("unknown variable `{name}`")))?;
        for tok in it {
            let v: usize = tok.parse().map_err(|_| bad(ln + 1, "witness vertex"))?;
            if v == 0 || v > n {
                return Err(bad(ln + 1, format!("vertex {v} out of range")));
            }
            sets[j].insert(v - 1);
        }
    }
    Ok(sets)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{brute_force_solve, EvalBudget};
    use crate::problems::encode_equitable_coloring;

    #[test]
    fn graph_round_trip() {
        let mut g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        g.set_label("red", [0, 2]);
        let text = emit_graph(&g);
        let g2 = parse_graph(&text).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn td_round_trip() {
        let td = TreeDecomposition {
            bags: vec![[0, 1].into(), [1, 2].into()],
            tree_edges: vec![(0, 1)],
        };
        let text = emit_td(&td, 3);
        let td2 = parse_td(&text).unwrap();
        assert_eq!(td.bags, td2.bags);
        assert_eq!(td.tree_edges, td2.tree_edges);
    }

    #[test]
    fn instance_round_trip_through_files() {
        let dir = std::env::temp_dir().join(format!("msocc-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let inst = encode_equitable_coloring(&Graph::cycle(4), 2);
        std::fs::write(dir.join("g.gr"), emit_graph(&inst.graph)).unwrap();
        let text = emit_instance(&inst, "g.gr");
        let parsed = parse_instance(&text, &dir).unwrap();
        assert_eq!(parsed.num_free, inst.num_free);
        assert_eq!(parsed.globals.len(), inst.globals.len());
        assert_eq!(parsed.predicates, inst.predicates);
        assert_eq!(parsed.formula, inst.formula);
        let b = EvalBudget::default();
        assert_eq!(
            brute_force_solve(&parsed, &b).unwrap().is_sat(),
            brute_force_solve(&inst, &b).unwrap().is_sat()
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn intervals_parse() {
        assert_eq!(parse_intervals("0-2,5").unwrap().to_string(), "0-2,5");
        assert_eq!(parse_intervals("none").unwrap(), IntervalSet::empty());
        assert!(parse_intervals("x").is_none());
    }

    #[test]
    fn local_lines_with_conditions() {
        let dir = std::env::temp_dir().join(format!("msocc-io2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("g.gr"), emit_graph(&Graph::path(3))).unwrap();
        let text = "[vars] D\n[graph] g.gr\n[formula]\ntrue\n[locals]\na 1 * 0-1 if-in 1\na 1 2 0-0 if-out 1\n";
        let inst = parse_instance(text, &dir).unwrap();
        assert_eq!(inst.locals.len(), 2);
        assert_eq!(inst.locals[0].cond, Some((0, true)));
        assert_eq!(inst.locals[1].cond, Some((0, false)));
        std::fs::remove_dir_all(&dir).ok();
    }
}
