//! MSO₁ abstract syntax, a small text parser, global/local
//! cardinality-constraint specifications and pre-evaluation enumeration.

use crate::graph::Graph;
use crate::interval::IntervalSet;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown global constraint `{0}`")]
    UnknownGlobalConstraint(String),
    #[error("oracle failure: {0}")]
    OracleFailure(String),
}

/// Quantifier flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quant {
    Exists,
    Forall,
}

/// MSO₁ formula AST. Element and set variables are de Bruijn indices
/// into separate binder stacks; free set variables are indexed
/// separately in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Const(bool),
    /// Quantification over vertex sets; body's set index 0 binds here.
    SetQuant(Quant, Box<Formula>),
    /// Quantification over vertices.
    ElemQuant(Quant, Box<Formula>),
    /// x in X; the set is a free variable or a bound one.
    Member(ElemRef, SetRef),
    Equal(ElemRef, ElemRef),
    Edge(ElemRef, ElemRef),
    Label(String, ElemRef),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// Reference to a declared global cardinality constraint by index.
    Global(usize),
}

/// Bound element variable (de Bruijn index: 0 = innermost binder).
pub type ElemRef = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetRef {
    /// Free set variable X_1..X_l, zero-based.
    Free(usize),
    /// Bound set variable (de Bruijn index: 0 = innermost set binder).
    Bound(usize),
}

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }
    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    /// (set-quantifier count, element-quantifier count, t = 2^qS * qe).
    pub fn quantifier_counts(&self) -> (u32, u32, usize) {
        fn walk(f: &Formula, qs: &mut u32, qe: &mut u32) {
            match f {
                Formula::SetQuant(_, b) => {
                    *qs += 1;
                    walk(b, qs, qe);
                }
                Formula::ElemQuant(_, b) => {
                    *qe += 1;
                    walk(b, qs, qe);
                }
                Formula::Not(a) => walk(a, qs, qe),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, qs, qe);
                    walk(b, qs, qe);
                }
                _ => {}
            }
        }
        let (mut qs, mut qe) = (0, 0);
        walk(self, &mut qs, &mut qe);
        let t = (1usize << qs) * qe as usize;
        (qs, qe, t)
    }

    /// Indices of global constraints referenced anywhere in the formula.
    pub fn referenced_globals(&self) -> Vec<usize> {
        fn walk(f: &Formula, out: &mut Vec<usize>) {
            match f {
                Formula::Global(i) => {
                    if !out.contains(i) {
                        out.push(*i);
                    }
                }
                Formula::SetQuant(_, b) | Formula::ElemQuant(_, b) | Formula::Not(b) => walk(b, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out
    }

    pub fn has_globals(&self) -> bool {
        !self.referenced_globals().is_empty()
    }

    /// Replaces each global-constraint leaf by its pre-evaluated truth
    /// value and folds constants.
    pub fn pre_evaluate(&self, beta: &PreEvaluation) -> Formula {
        let sub = self.substitute_globals(beta);
        sub.simplify()
    }

    fn substitute_globals(&self, beta: &PreEvaluation) -> Formula {
        match self {
            Formula::Global(i) => Formula::Const(beta.values[*i]),
            Formula::SetQuant(q, b) => Formula::SetQuant(*q, Box::new(b.substitute_globals(beta))),
            Formula::ElemQuant(q, b) => Formula::ElemQuant(*q, Box::new(b.substitute_globals(beta))),
            Formula::Not(a) => Formula::not(a.substitute_globals(beta)),
            Formula::And(a, b) => Formula::and(a.substitute_globals(beta), b.substitute_globals(beta)),
            Formula::Or(a, b) => Formula::or(a.substitute_globals(beta), b.substitute_globals(beta)),
            Formula::Implies(a, b) => {
                Formula::implies(a.substitute_globals(beta), b.substitute_globals(beta))
            }
            other => other.clone(),
        }
    }

    /// Constant folding.
    pub fn simplify(&self) -> Formula {
        match self {
            Formula::SetQuant(q, b) => match b.simplify() {
                Formula::Const(c) => Formula::Const(c),
                s => Formula::SetQuant(*q, Box::new(s)),
            },
            Formula::ElemQuant(q, b) => match b.simplify() {
                Formula::Const(c) => Formula::Const(c),
                s => Formula::ElemQuant(*q, Box::new(s)),
            },
            Formula::Not(a) => match a.simplify() {
                Formula::Const(c) => Formula::Const(!c),
                s => Formula::not(s),
            },
            Formula::And(a, b) => match (a.simplify(), b.simplify()) {
                (Formula::Const(false), _) | (_, Formula::Const(false)) => Formula::Const(false),
                (Formula::Const(true), s) | (s, Formula::Const(true)) => s,
                (x, y) => Formula::and(x, y),
            },
            Formula::Or(a, b) => match (a.simplify(), b.simplify()) {
                (Formula::Const(true), _) | (_, Formula::Const(true)) => Formula::Const(true),
                (Formula::Const(false), s) | (s, Formula::Const(false)) => s,
                (x, y) => Formula::or(x, y),
            },
            Formula::Implies(a, b) => match (a.simplify(), b.simplify()) {
                (Formula::Const(false), _) => Formula::Const(true),
                (Formula::Const(true), s) => s,
                (s, Formula::Const(false)) => Formula::not(s),
                (_, Formula::Const(true)) => Formula::Const(true),
                (x, y) => Formula::implies(x, y),
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Le => write!(f, "<="),
            Sense::Eq => write!(f, "="),
            Sense::Ge => write!(f, ">="),
        }
    }
}

/// Global cardinality constraint over the free-set sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConstraint {
    pub id: String,
    pub form: GlobalForm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GlobalForm {
    /// sum a_i * |X_i|  sense  b, in exact rational arithmetic.
    Linear { coeffs: Vec<BigRational>, sense: Sense, bound: BigRational },
    /// Explicit list of accepted size tuples.
    Table(Vec<Vec<usize>>),
    /// |X_i| == p (mod q), a counting-MSO predicate on one variable.
    Mod { var: usize, p: usize, q: usize },
    /// Built-in polynomial comparison |X_lhs| >= |X_rhs|^2.
    GeSquare { lhs: usize, rhs: usize },
    /// |X_var| lies in an explicit set of admissible sizes.
    SetMember { var: usize, set: crate::interval::IntervalSet },
}

/// Decides whether a size tuple belongs to the constraint's relation.
pub fn eval_global(gc: &GlobalConstraint, sizes: &[usize]) -> Result<bool, LogicError> {
    match &gc.form {
        GlobalForm::Linear { coeffs, sense, bound } => {
            if coeffs.len() != sizes.len() {
                return Err(LogicError::OracleFailure(format!(
                    "constraint `{}` arity {} but tuple length {}",
                    gc.id,
                    coeffs.len(),
                    sizes.len()
                )));
            }
            let mut acc = BigRational::zero();
            for (a, &s) in coeffs.iter().zip(sizes) {
                acc += a * BigRational::from_integer(s.into());
            }
            Ok(match sense {
                Sense::Le => acc <= *bound,
                Sense::Eq => acc == *bound,
                Sense::Ge => acc >= *bound,
            })
        }
        GlobalForm::Table(tuples) => Ok(tuples.iter().any(|t| t == sizes)),
        GlobalForm::Mod { var, p, q } => {
            let s = *sizes.get(*var).ok_or_else(|| {
                LogicError::OracleFailure(format!("constraint `{}` references X_{}", gc.id, var + 1))
            })?;
            Ok(s % q == p % q)
        }
        GlobalForm::GeSquare { lhs, rhs } => {
            let (l, r) = match (sizes.get(*lhs), sizes.get(*rhs)) {
                (Some(&l), Some(&r)) => (l, r),
                _ => {
                    return Err(LogicError::OracleFailure(format!(
                        "constraint `{}` out-of-range variable",
                        gc.id
                    )))
                }
            };
            Ok(l >= r * r)
        }
        GlobalForm::SetMember { var, set } => {
            let s = *sizes.get(*var).ok_or_else(|| {
                LogicError::OracleFailure(format!("constraint `{}` references X_{}", gc.id, var + 1))
            })?;
            Ok(set.contains(s))
        }
    }
}

/// A guessed truth value per declared global constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreEvaluation {
    pub values: Vec<bool>,
}

/// Yields all 2^c pre-evaluations together with the pre-evaluated
/// formula, in lexicographic order (all-false first).
pub fn pre_evaluations(f: &Formula, num_globals: usize) -> Vec<(PreEvaluation, Formula)> {
    let mut out = Vec::with_capacity(1 << num_globals);
    for bits in 0..(1u64 << num_globals) {
        let values: Vec<bool> = (0..num_globals).map(|i| bits & (1 << i) != 0).collect();
        let beta = PreEvaluation { values };
        let residue = f.pre_evaluate(&beta);
        out.push((beta, residue));
    }
    out
}

/// True iff every declared constraint's verdict on `sizes` equals the
/// pre-evaluation's prescribed value.
pub fn compliance_check(
    sizes: &[usize],
    beta: &PreEvaluation,
    globals: &[GlobalConstraint],
) -> Result<bool, LogicError> {
    for (gc, &want) in globals.iter().zip(&beta.values) {
        if eval_global(gc, sizes)? != want {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One local cardinality constraint: admissible counts for
/// |X_var ∩ N(v)| per vertex, optionally conditioned on v's membership
/// in another free variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalConstraint {
    pub var: usize,
    /// `Some((j, true))`: applies only to vertices in X_j;
    /// `Some((j, false))`: only to vertices outside X_j.
    pub cond: Option<(usize, bool)>,
    pub map: Vec<IntervalSet>,
}

impl LocalConstraint {
    pub fn uniform(var: usize, n: usize, set: IntervalSet) -> Self {
        LocalConstraint { var, cond: None, map: vec![set; n] }
    }

    pub fn is_trivial(&self, n: usize) -> bool {
        self.map.iter().all(|s| s.min_value() == Some(0) && s.max_value() == Some(n) && s.is_single_interval())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fragment {
    Mso,
    G,
    L,
    GLin,
    LLin,
    Gl,
    GlLin,
    FairMso,
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Fragment::Mso => "mso",
            Fragment::G => "g",
            Fragment::L => "l",
            Fragment::GLin => "g-lin",
            Fragment::LLin => "l-lin",
            Fragment::Gl => "gl",
            Fragment::GlLin => "gl-lin",
            Fragment::FairMso => "fair-mso",
        };
        write!(f, "{s}")
    }
}

/// A full model-checking instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub formula: Formula,
    /// Number of free set variables X_1..X_l.
    pub num_free: usize,
    /// Free-variable names, in index order.
    pub var_names: Vec<String>,
    pub globals: Vec<GlobalConstraint>,
    pub locals: Vec<LocalConstraint>,
    /// Optional per-variable per-vertex costs for the weighted objective.
    pub weights: Option<Vec<Vec<i64>>>,
    /// Structural predicates equivalent to `formula`, when the instance
    /// was produced by an encoder that knows them (tw backend).
    pub predicates: Vec<crate::automaton::Predicate>,
    pub notes: Vec<String>,
}

impl Instance {
    pub fn new(graph: Graph, formula: Formula, num_free: usize) -> Self {
        Instance {
            graph,
            formula,
            num_free,
            var_names: (1..=num_free).map(|i| format!("X{i}")).collect(),
            globals: Vec::new(),
            locals: Vec::new(),
            weights: None,
            predicates: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// The most specific fragment tag consistent with the contents.
    pub fn fragment(&self) -> Fragment {
        let n = self.graph.n();
        let has_g = !self.globals.is_empty();
        let nontrivial_locals: Vec<&LocalConstraint> =
            self.locals.iter().filter(|lc| !lc.is_trivial(n)).collect();
        let has_l = !nontrivial_locals.is_empty();
        let g_lin = self
            .globals
            .iter()
            .all(|g| matches!(g.form, GlobalForm::Linear { .. }));
        let l_lin = nontrivial_locals
            .iter()
            .all(|lc| lc.cond.is_none() && lc.map.iter().all(|s| s.is_single_interval() && !s.is_empty()));
        let fair = l_lin && nontrivial_locals.iter().all(|lc| lc.map.iter().all(|s| s.min_value() == Some(0)));
        match (has_g, has_l) {
            (false, false) => Fragment::Mso,
            (true, false) => {
                if g_lin {
                    Fragment::GLin
                } else {
                    Fragment::G
                }
            }
            (false, true) => {
                if fair {
                    Fragment::FairMso
                } else if l_lin {
                    Fragment::LLin
                } else {
                    Fragment::L
                }
            }
            (true, true) => {
                if g_lin && l_lin {
                    Fragment::GlLin
                } else {
                    Fragment::Gl
                }
            }
        }
    }

    /// Total weight of an assignment under the minimization objective.
    pub fn weight_of(&self, sets: &[std::collections::BTreeSet<usize>]) -> i64 {
        match &self.weights {
            None => 0,
            Some(w) => sets
                .iter()
                .enumerate()
                .map(|(j, s)| s.iter().map(|&v| w[j][v]).sum::<i64>())
                .sum(),
        }
    }

    /// Checks local cardinality constraints of a concrete assignment.
    pub fn locals_ok(&self, sets: &[std::collections::BTreeSet<usize>]) -> bool {
        for lc in &self.locals {
            for v in 0..self.graph.n() {
                if let Some((j, sel)) = lc.cond {
                    if sets[j].contains(&v) != sel {
                        continue;
                    }
                }
                let count = self.graph.neighbors(v).iter().filter(|u| sets[lc.var].contains(u)).count();
                if !lc.map[v].contains(count) {
                    return false;
                }
            }
        }
        true
    }
}

// ---------------------------------------------------------------------
// Parser
//
// Grammar (whitespace-insensitive):
//   formula  := implies
//   implies  := or ('->' implies)?
//   or       := and ('|' and)*
//   and      := unary ('&' unary)*
//   unary    := '!' unary | quant | atom
//   quant    := ('exists'|'forall'|'setexists'|'setforall') ident unary-or-( ... )
//   atom     := 'true' | 'false' | 'edge(x,y)' | 'label(L,x)' | '#card(id)'
//             | ident 'in' Ident | ident '=' ident | '(' formula ')'
//             | 'bigand(i,lo,hi,' body ')'        (expanded at parse time)
// Element variables start lowercase, set variables uppercase.
// ---------------------------------------------------------------------

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    globals: &'a [String],
    set_stack: Vec<String>,
    elem_stack: Vec<String>,
    free_sets: Vec<String>,
}

/// Parses a formula; free set variables are collected in order of first
/// occurrence. Returns the formula and the free-variable names.
pub fn parse_formula(
    text: &str,
    declared_globals: &[String],
) -> Result<(Formula, Vec<String>), LogicError> {
    let expanded = expand_bigand(text)?;
    let mut p = Parser {
        src: &expanded,
        bytes: expanded.as_bytes(),
        pos: 0,
        globals: declared_globals,
        set_stack: Vec::new(),
        elem_stack: Vec::new(),
        free_sets: Vec::new(),
    };
    let f = p.parse_implies()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err("trailing input"));
    }
    Ok((f, p.free_sets))
}

/// Expands `bigand(i,lo,hi, body)` into an explicit conjunction, with
/// `$i` in the body substituted by each index.
fn expand_bigand(text: &str) -> Result<String, LogicError> {
    let Some(start) = text.find("bigand(") else {
        return Ok(text.to_string());
    };
    let args_start = start + "bigand(".len();
    // split header: ident , lo , hi ,
    let rest = &text[args_start..];
    let mut parts = rest.splitn(4, ',');
    let var = parts.next().unwrap_or("").trim().to_string();
    let lo: usize = parts
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or(LogicError::Parse { pos: args_start, msg: "bigand lower bound".into() })?;
    let hi: usize = parts
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or(LogicError::Parse { pos: args_start, msg: "bigand upper bound".into() })?;
    let tail = parts.next().ok_or(LogicError::Parse { pos: args_start, msg: "bigand body".into() })?;
    // find matching close paren in tail
    let mut depth = 1usize;
    let mut end = None;
    for (i, c) in tail.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    end = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let end = end.ok_or(LogicError::Parse { pos: text.len(), msg: "unclosed bigand".into() })?;
    let body = &tail[..end];
    let after = &tail[end + 1..];
    let pat = format!("${var}");
    let mut parts_out = Vec::new();
    for i in lo..=hi {
        parts_out.push(format!("({})", body.replace(&pat, &i.to_string())));
    }
    let expanded = format!("{}({}){}", &text[..start], parts_out.join(" & "), after);
    expand_bigand(&expanded)
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> LogicError {
        LogicError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), LogicError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{tok}`")))
        }
    }

    fn ident(&mut self) -> Result<String, LogicError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn keyword_ahead(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        rest.starts_with(kw)
            && rest[kw.len()..]
                .chars()
                .next()
                .map_or(true, |c| !c.is_ascii_alphanumeric() && c != '_')
    }

    fn parse_implies(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.parse_or()?;
        if self.eat("->") {
            let rhs = self.parse_implies()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_or(&mut self) -> Result<Formula, LogicError> {
        let mut f = self.parse_and()?;
        while self.peek() == Some(b'|') {
            self.pos += 1;
            let rhs = self.parse_and()?;
            f = Formula::or(f, rhs);
        }
        Ok(f)
    }

    fn parse_and(&mut self) -> Result<Formula, LogicError> {
        let mut f = self.parse_unary()?;
        while self.peek() == Some(b'&') {
            self.pos += 1;
            let rhs = self.parse_unary()?;
            f = Formula::and(f, rhs);
        }
        Ok(f)
    }

    fn parse_unary(&mut self) -> Result<Formula, LogicError> {
        if self.eat("!") {
            return Ok(Formula::not(self.parse_unary()?));
        }
        for (kw, quant, is_set) in [
            ("setexists", Quant::Exists, true),
            ("setforall", Quant::Forall, true),
            ("exists", Quant::Exists, false),
            ("forall", Quant::Forall, false),
        ] {
            if self.keyword_ahead(kw) {
                self.pos += kw.len();
                let name = self.ident()?;
                if is_set {
                    if !name.chars().next().unwrap_or(' ').is_ascii_uppercase() {
                        return Err(self.err("set variables must start uppercase"));
                    }
                    self.set_stack.push(name);
                    let body = self.parse_unary()?;
                    self.set_stack.pop();
                    return Ok(Formula::SetQuant(quant, Box::new(body)));
                } else {
                    if !name.chars().next().unwrap_or(' ').is_ascii_lowercase() {
                        return Err(self.err("element variables must start lowercase"));
                    }
                    self.elem_stack.push(name);
                    let body = self.parse_unary()?;
                    self.elem_stack.pop();
                    return Ok(Formula::ElemQuant(quant, Box::new(body)));
                }
            }
        }
        self.parse_atom()
    }

    fn elem_ref(&mut self, name: &str) -> Result<ElemRef, LogicError> {
        match self.elem_stack.iter().rev().position(|s| s == name) {
            Some(i) => Ok(i),
            None => Err(LogicError::UnboundVariable(name.to_string())),
        }
    }

    fn set_ref(&mut self, name: &str) -> SetRef {
        if let Some(i) = self.set_stack.iter().rev().position(|s| s == name) {
            SetRef::Bound(i)
        } else if let Some(i) = self.free_sets.iter().position(|s| s == name) {
            SetRef::Free(i)
        } else {
            self.free_sets.push(name.to_string());
            SetRef::Free(self.free_sets.len() - 1)
        }
    }

    fn parse_atom(&mut self) -> Result<Formula, LogicError> {
        if self.eat("(") {
            let f = self.parse_implies()?;
            self.expect(")")?;
            return Ok(f);
        }
        if self.keyword_ahead("true") {
            self.pos += 4;
            return Ok(Formula::Const(true));
        }
        if self.keyword_ahead("false") {
            self.pos += 5;
            return Ok(Formula::Const(false));
        }
        if self.keyword_ahead("edge") {
            self.pos += 4;
            self.expect("(")?;
            let x = self.ident()?;
            self.expect(",")?;
            let y = self.ident()?;
            self.expect(")")?;
            return Ok(Formula::Edge(self.elem_ref(&x)?, self.elem_ref(&y)?));
        }
        if self.keyword_ahead("label") {
            self.pos += 5;
            self.expect("(")?;
            let l = self.ident()?;
            self.expect(",")?;
            let x = self.ident()?;
            self.expect(")")?;
            return Ok(Formula::Label(l, self.elem_ref(&x)?));
        }
        if self.eat("#card") {
            self.expect("(")?;
            let id = self.ident()?;
            self.expect(")")?;
            let idx = self
                .globals
                .iter()
                .position(|g| *g == id)
                .ok_or(LogicError::UnknownGlobalConstraint(id))?;
            return Ok(Formula::Global(idx));
        }
        let name = self.ident()?;
        if name.chars().next().unwrap().is_ascii_uppercase() {
            return Err(self.err("set variables may only appear on the right of `in`"));
        }
        if self.eat("in") {
            let set = self.ident()?;
            if !set.chars().next().unwrap_or(' ').is_ascii_uppercase() {
                return Err(self.err("membership target must be a set variable"));
            }
            let e = self.elem_ref(&name)?;
            let s = self.set_ref(&set);
            return Ok(Formula::Member(e, s));
        }
        if self.eat("=") {
            let other = self.ident()?;
            return Ok(Formula::Equal(self.elem_ref(&name)?, self.elem_ref(&other)?));
        }
        Err(self.err("expected atom"))
    }
}

/// Pretty-printer inverse to the parser (fresh bound-variable names).
pub fn print_formula(f: &Formula, free_names: &[String]) -> String {
    fn go(f: &Formula, free: &[String], sets: &mut Vec<String>, elems: &mut Vec<String>) -> String {
        match f {
            Formula::Const(true) => "true".into(),
            Formula::Const(false) => "false".into(),
            Formula::SetQuant(q, b) => {
                let name = format!("S{}", sets.len());
                sets.push(name.clone());
                let body = go(b, free, sets, elems);
                sets.pop();
                let kw = if *q == Quant::Exists { "setexists" } else { "setforall" };
                format!("{kw} {name} ({body})")
            }
            Formula::ElemQuant(q, b) => {
                let name = format!("v{}", elems.len());
                elems.push(name.clone());
                let body = go(b, free, sets, elems);
                elems.pop();
                let kw = if *q == Quant::Exists { "exists" } else { "forall" };
                format!("{kw} {name} ({body})")
            }
            Formula::Member(e, s) => {
                let sn = match s {
                    SetRef::Free(i) => free[*i].clone(),
                    SetRef::Bound(i) => sets[sets.len() - 1 - i].clone(),
                };
                format!("{} in {}", elems[elems.len() - 1 - e], sn)
            }
            Formula::Equal(a, b) => format!(
                "{} = {}",
                elems[elems.len() - 1 - a],
                elems[elems.len() - 1 - b]
            ),
            Formula::Edge(a, b) => format!(
                "edge({},{})",
                elems[elems.len() - 1 - a],
                elems[elems.len() - 1 - b]
            ),
            Formula::Label(l, a) => format!("label({},{})", l, elems[elems.len() - 1 - a]),
            Formula::Not(a) => format!("!({})", go(a, free, sets, elems)),
            Formula::And(a, b) => {
                format!("({} & {})", go(a, free, sets, elems), go(b, free, sets, elems))
            }
            Formula::Or(a, b) => {
                format!("({} | {})", go(a, free, sets, elems), go(b, free, sets, elems))
            }
            Formula::Implies(a, b) => {
                format!("({} -> {})", go(a, free, sets, elems), go(b, free, sets, elems))
            }
            Formula::Global(_) => "#card(?)".into(),
        }
    }
    go(f, free_names, &mut Vec::new(), &mut Vec::new())
}

/// Print with global-constraint names resolved.
pub fn print_formula_with_globals(f: &Formula, free_names: &[String], globals: &[String]) -> String {
    // cheap approach: print, then the only placeholder is #card(?)
    fn go(f: &Formula, free: &[String], globals: &[String], sets: &mut Vec<String>, elems: &mut Vec<String>) -> String {
        if let Formula::Global(i) = f {
            return format!("#card({})", globals[*i]);
        }
        match f {
            Formula::SetQuant(q, b) => {
                let name = format!("S{}", sets.len());
                sets.push(name.clone());
                let body = go(b, free, globals, sets, elems);
                sets.pop();
                let kw = if *q == Quant::Exists { "setexists" } else { "setforall" };
                format!("{kw} {name} ({body})")
            }
            Formula::ElemQuant(q, b) => {
                let name = format!("v{}", elems.len());
                elems.push(name.clone());
                let body = go(b, free, globals, sets, elems);
                elems.pop();
                let kw = if *q == Quant::Exists { "exists" } else { "forall" };
                format!("{kw} {name} ({body})")
            }
            Formula::Not(a) => format!("!({})", go(a, free, globals, sets, elems)),
            Formula::And(a, b) => format!(
                "({} & {})",
                go(a, free, globals, sets, elems),
                go(b, free, globals, sets, elems)
            ),
            Formula::Or(a, b) => format!(
                "({} | {})",
                go(a, free, globals, sets, elems),
                go(b, free, globals, sets, elems)
            ),
            Formula::Implies(a, b) => format!(
                "({} -> {})",
                go(a, free, globals, sets, elems),
                go(b, free, globals, sets, elems)
            ),
            other => print_formula_leaf(other, free, sets, elems),
        }
    }
    fn print_formula_leaf(f: &Formula, free: &[String], sets: &[String], elems: &[String]) -> String {
        match f {
            Formula::Const(true) => "true".into(),
            Formula::Const(false) => "false".into(),
            Formula::Member(e, s) => {
                let sn = match s {
                    SetRef::Free(i) => free[*i].clone(),
                    SetRef::Bound(i) => sets[sets.len() - 1 - i].clone(),
                };
                format!("{} in {}", elems[elems.len() - 1 - e], sn)
            }
            Formula::Equal(a, b) => {
                format!("{} = {}", elems[elems.len() - 1 - a], elems[elems.len() - 1 - b])
            }
            Formula::Edge(a, b) => {
                format!("edge({},{})", elems[elems.len() - 1 - a], elems[elems.len() - 1 - b])
            }
            Formula::Label(l, a) => format!("label({},{})", l, elems[elems.len() - 1 - a]),
            _ => unreachable!(),
        }
    }
    go(f, free_names, globals, &mut Vec::new(), &mut Vec::new())
}

/// The 3-colorability formula from the standard example, with the
/// bounded conjunction expanded.
pub fn three_colorability() -> Formula {
    let text = "setexists X1 setexists X2 setexists X3 ( \
                  (forall x (x in X1 | x in X2 | x in X3)) & \
                  bigand(i,1,3, forall x forall y (!(x in X$i) | !(y in X$i) | !edge(x,y))) )";
    parse_formula(text, &[]).expect("builtin formula parses").0
}

/// Helper for uniform local constraint tables keyed by (var, vertex).
pub fn locals_by_var(locals: &[LocalConstraint], num_free: usize) -> BTreeMap<usize, Vec<&LocalConstraint>> {
    let mut out: BTreeMap<usize, Vec<&LocalConstraint>> = BTreeMap::new();
    for lc in locals {
        assert!(lc.var < num_free);
        out.entry(lc.var).or_default().push(lc);
    }
    out
}

pub fn rational(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

pub fn rational_frac(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Parses a rational literal like `3`, `-2`, or `1/2`.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        Some(rational_frac(n, d))
    } else {
        let n: i64 = s.trim().parse().ok()?;
        Some(rational(n))
    }
}

pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}



impl GlobalConstraint {
    pub fn linear(id: &str, coeffs: Vec<i64>, sense: Sense, bound: i64) -> Self {
        GlobalConstraint {
            id: id.to_string(),
            form: GlobalForm::Linear {
                coeffs: coeffs.into_iter().map(rational).collect(),
                sense,
                bound: rational(bound),
            },
        }
    }

    /// Arity of the tuple this constraint expects (None for tables that
    /// self-describe).
    pub fn is_linear(&self) -> bool {
        matches!(self.form, GlobalForm::Linear { .. })
    }
}

pub fn is_negative(r: &BigRational) -> bool {
    r.is_negative()
}
