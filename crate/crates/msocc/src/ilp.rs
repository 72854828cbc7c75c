//! Bounded integer feasibility: linear rows over integer variables with
//! finite interval domains, solved exactly by depth-first search with
//! rational interval propagation.

use num_rational::BigRational;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IlpError {
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("variable {0} is unbounded")]
    UnboundedVariable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// Tags rows by the constraint family they transcribe, for audit output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowTag {
    Consistency,
    AuxY,
    AuxZ,
    ShapeExact,
    ShapeUp,
    Global(String),
    LocalIndependent,
    LocalCliqueSelected,
    LocalCliqueUnselected,
    Other(String),
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowTag::Consistency => write!(f, "(0)"),
            RowTag::AuxY => write!(f, "(a1)"),
            RowTag::AuxZ => write!(f, "(a2)"),
            RowTag::ShapeExact => write!(f, "(sh1)"),
            RowTag::ShapeUp => write!(f, "(sh2)"),
            RowTag::Global(id) => write!(f, "(g:{id})"),
            RowTag::LocalIndependent => write!(f, "(lli)"),
            RowTag::LocalCliqueSelected => write!(f, "(llc1)"),
            RowTag::LocalCliqueUnselected => write!(f, "(llc2)"),
            RowTag::Other(s) => write!(f, "({s})"),
        }
    }
}

/// One linear row: sum coeff_i * x_i  sense  rhs. Coefficients are
/// integers; rational inputs are cleared to a common denominator by the
/// builders.
#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, i64)>,
    pub sense: RowSense,
    pub rhs: i64,
    pub tag: RowTag,
}

#[derive(Debug, Clone)]
pub struct IlpInstance {
    /// Inclusive variable bounds.
    pub bounds: Vec<(i64, i64)>,
    pub rows: Vec<Row>,
    pub var_names: Vec<String>,
}

impl IlpInstance {
    pub fn new() -> Self {
        IlpInstance { bounds: Vec::new(), rows: Vec::new(), var_names: Vec::new() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: i64, hi: i64) -> usize {
        self.bounds.push((lo, hi));
        self.var_names.push(name.into());
        self.bounds.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, i64)>, sense: RowSense, rhs: i64, tag: RowTag) {
        debug_assert!(coeffs.iter().all(|&(v, _)| v < self.bounds.len()));
        self.rows.push(Row { coeffs, sense, rhs, tag });
    }

    pub fn num_vars(&self) -> usize {
        self.bounds.len()
    }
}

impl Default for IlpInstance {
    fn default() -> Self {
        Self::new()
    }
}

/// Converts a rational row into an equivalent integer row by clearing
/// denominators (and tightening strict bounds where applicable).
pub fn clear_denominators(
    coeffs: &[BigRational],
    sense: RowSense,
    rhs: &BigRational,
) -> (Vec<i64>, RowSense, i64) {
    use num_bigint::BigInt;
    use num_traits::One;
    let mut lcm = BigInt::one();
    for c in coeffs.iter().chain(std::iter::once(rhs)) {
        lcm = num_integer::lcm(lcm, c.denom().clone());
    }
    let scale = BigRational::from_integer(lcm);
    let ints: Vec<i64> = coeffs
        .iter()
        .map(|c| {
            let v = c * &scale;
            debug_assert!(v.denom().is_one());
            int_to_i64(v.numer())
        })
        .collect();
    let r = {
        let v = rhs * &scale;
        int_to_i64(v.numer())
    };
    (ints, sense, r)
}

fn int_to_i64(x: &num_bigint::BigInt) -> i64 {
    use num_traits::ToPrimitive;
    x.to_i64().expect("coefficient fits in i64 at desk scale")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IlpOutcome {
    Feasible(Vec<i64>),
    Infeasible,
}

/// Exact feasibility search: DFS over variables in index order with
/// interval propagation per row; node count capped.
pub fn solve_ilp(ilp: &IlpInstance, max_nodes: u64) -> Result<IlpOutcome, IlpError> {
    let _nv = ilp.num_vars();
    for (i, &(lo, hi)) in ilp.bounds.iter().enumerate() {
        if lo > hi {
            return Ok(IlpOutcome::Infeasible);
        }
        if hi - lo > 1 << 40 {
            return Err(IlpError::UnboundedVariable(i));
        }
    }
    let mut lows: Vec<i64> = ilp.bounds.iter().map(|&(l, _)| l).collect();
    let mut highs: Vec<i64> = ilp.bounds.iter().map(|&(_, h)| h).collect();
    if !propagate(ilp, &mut lows, &mut highs) {
        return Ok(IlpOutcome::Infeasible);
    }
    let mut nodes = 0u64;
    match dfs(ilp, 0, &mut lows, &mut highs, &mut nodes, max_nodes) {
        DfsResult::Found(sol) => Ok(IlpOutcome::Feasible(sol)),
        DfsResult::Exhausted => Ok(IlpOutcome::Infeasible),
        DfsResult::Overflow => Err(IlpError::ResourceLimit(format!("node cap {max_nodes}"))),
    }
    .map(|out| {
        if let IlpOutcome::Feasible(sol) = &out {
            debug_assert!(check_point(ilp, sol));
        }
        out
    })
}

enum DfsResult {
    Found(Vec<i64>),
    Exhausted,
    Overflow,
}

fn dfs(
    ilp: &IlpInstance,
    var: usize,
    lows: &mut Vec<i64>,
    highs: &mut Vec<i64>,
    nodes: &mut u64,
    max_nodes: u64,
) -> DfsResult {
    *nodes += 1;
    if *nodes > max_nodes {
        return DfsResult::Overflow;
    }
    // find first unfixed variable
    let mut v = var;
    while v < ilp.num_vars() && lows[v] == highs[v] {
        v += 1;
    }
    if v == ilp.num_vars() {
        let sol: Vec<i64> = lows.clone();
        return if check_point(ilp, &sol) { DfsResult::Found(sol) } else { DfsResult::Exhausted };
    }
    let (lo, hi) = (lows[v], highs[v]);
    for val in lo..=hi {
        let saved_l = lows.clone();
        let saved_h = highs.clone();
        lows[v] = val;
        highs[v] = val;
        if propagate(ilp, lows, highs) {
            match dfs(ilp, v, lows, highs, nodes, max_nodes) {
                DfsResult::Exhausted => {}
                other => return other,
            }
        }
        *lows = saved_l;
        *highs = saved_h;
    }
    DfsResult::Exhausted
}

/// Interval propagation: per row, tighten each variable's bounds using
/// the extreme achievable values of the remainder. Returns false on
/// detected infeasibility.
fn propagate(ilp: &IlpInstance, lows: &mut [i64], highs: &mut [i64]) -> bool {
    loop {
        let mut changed = false;
        for row in &ilp.rows {
            // activity bounds of the row
            let mut act_lo: i64 = 0;
            let mut act_hi: i64 = 0;
            for &(v, c) in &row.coeffs {
                if c >= 0 {
                    act_lo += c * lows[v];
                    act_hi += c * highs[v];
                } else {
                    act_lo += c * highs[v];
                    act_hi += c * lows[v];
                }
            }
            let (need_le, need_ge) = match row.sense {
                RowSense::Le => (true, false),
                RowSense::Ge => (false, true),
                RowSense::Eq => (true, true),
            };
            if need_le && act_lo > row.rhs {
                return false;
            }
            if need_ge && act_hi < row.rhs {
                return false;
            }
            for &(v, c) in &row.coeffs {
                if c == 0 {
                    continue;
                }
                // residual activity without v
                let (res_lo, res_hi) = if c >= 0 {
                    (act_lo - c * lows[v], act_hi - c * highs[v])
                } else {
                    (act_lo - c * highs[v], act_hi - c * lows[v])
                };
                if need_le {
                    // c*x <= rhs - res_lo
                    let slack = row.rhs - res_lo;
                    if c > 0 {
                        let ub = slack.div_euclid(c);
                        if ub < highs[v] {
                            highs[v] = ub;
                            changed = true;
                        }
                    } else {
                        let lb = ceil_div(slack, c);
                        if lb > lows[v] {
                            lows[v] = lb;
                            changed = true;
                        }
                    }
                }
                if need_ge {
                    // c*x >= rhs - res_hi
                    let need = row.rhs - res_hi;
                    if c > 0 {
                        let lb = ceil_div(need, c);
                        if lb > lows[v] {
                            lows[v] = lb;
                            changed = true;
                        }
                    } else {
                        let ub = floor_div(need, c);
                        if ub < highs[v] {
                            highs[v] = ub;
                            changed = true;
                        }
                    }
                }
                if lows[v] > highs[v] {
                    return false;
                }
            }
        }
        if !changed {
            return true;
        }
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    debug_assert!(b != 0);
    if b > 0 {
        a.div_euclid(b) + i64::from(a.rem_euclid(b) != 0)
    } else {
        // euclidean division by a negative divisor rounds up already
        a.div_euclid(b)
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    debug_assert!(b != 0);
    if b > 0 {
        a.div_euclid(b)
    } else {
        a.div_euclid(b) - i64::from(a.rem_euclid(b) != 0)
    }
}

pub fn check_point(ilp: &IlpInstance, point: &[i64]) -> bool {
    ilp.bounds.iter().enumerate().all(|(i, &(l, h))| l <= point[i] && point[i] <= h)
        && ilp.rows.iter().all(|row| {
            let acc: i64 = row.coeffs.iter().map(|&(v, c)| c * point[v]).sum();
            match row.sense {
                RowSense::Le => acc <= row.rhs,
                RowSense::Eq => acc == row.rhs,
                RowSense::Ge => acc >= row.rhs,
            }
        })
}

/// Dual-rail helper for tests: feasibility by exhaustive grid search.
pub fn grid_feasible(ilp: &IlpInstance) -> Option<Vec<i64>> {
    fn rec(ilp: &IlpInstance, point: &mut Vec<i64>) -> Option<Vec<i64>> {
        let v = point.len();
        if v == ilp.num_vars() {
            return if check_point(ilp, point) { Some(point.clone()) } else { None };
        }
        for val in ilp.bounds[v].0..=ilp.bounds[v].1 {
            point.push(val);
            if let Some(sol) = rec(ilp, point) {
                return Some(sol);
            }
            point.pop();
        }
        None
    }
    rec(ilp, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn simple_feasible() {
        let mut ilp = IlpInstance::new();
        let x = ilp.add_var("x", 0, 2);
        let y = ilp.add_var("y", 0, 2);
        ilp.add_row(vec![(x, 1), (y, 1)], RowSense::Eq, 3, RowTag::Other("t".into()));
        match solve_ilp(&ilp, 10_000).unwrap() {
            IlpOutcome::Feasible(sol) => assert_eq!(sol[0] + sol[1], 3),
            IlpOutcome::Infeasible => panic!("expected feasible"),
        }
    }

    #[test]
    fn contradictory_rows() {
        let mut ilp = IlpInstance::new();
        let x = ilp.add_var("x", 0, 5);
        ilp.add_row(vec![(x, 1)], RowSense::Eq, 1, RowTag::Other("a".into()));
        ilp.add_row(vec![(x, 1)], RowSense::Eq, 2, RowTag::Other("b".into()));
        assert_eq!(solve_ilp(&ilp, 10_000).unwrap(), IlpOutcome::Infeasible);
    }

    #[test]
    fn random_ilps_match_grid_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let nv = rng.gen_range(1..=5);
            let mut ilp = IlpInstance::new();
            for i in 0..nv {
                ilp.add_var(format!("x{i}"), 0, rng.gen_range(0..=4));
            }
            let rows = rng.gen_range(1..=4);
            for r in 0..rows {
                let coeffs: Vec<(usize, i64)> =
                    (0..nv).map(|v| (v, rng.gen_range(-3..=3))).filter(|&(_, c)| c != 0).collect();
                let sense = match rng.gen_range(0..3) {
                    0 => RowSense::Le,
                    1 => RowSense::Eq,
                    _ => RowSense::Ge,
                };
                let rhs = rng.gen_range(-6..=8);
                ilp.add_row(coeffs, sense, rhs, RowTag::Other(format!("r{r}")));
            }
            let got = solve_ilp(&ilp, 1_000_000).unwrap();
            let want = grid_feasible(&ilp);
            match (got, want) {
                (IlpOutcome::Feasible(sol), Some(_)) => assert!(check_point(&ilp, &sol)),
                (IlpOutcome::Infeasible, None) => {}
                (got, want) => panic!("solver {got:?} vs grid {want:?}"),
            }
        }
    }

    #[test]
    fn clear_denominators_preserves_solutions() {
        use crate::logic::{rational, rational_frac};
        let coeffs = vec![rational_frac(1, 2), rational_frac(-2, 3)];
        let (ints, _, rhs) = clear_denominators(&coeffs, RowSense::Le, &rational_frac(5, 6));
        // scaled by 6: 3x - 4y <= 5
        assert_eq!(ints, vec![3, -4]);
        assert_eq!(rhs, 5);
        let _ = rational(0);
    }
}
