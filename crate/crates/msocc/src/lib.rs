//! Solvers for MSO₁ model checking extended with global and local
//! cardinality constraints, on graphs of bounded neighborhood diversity
//! and bounded treewidth.
//!
//! The crate provides:
//! - graph structures, neighborhood-diversity decompositions, type graphs,
//!   (nice) tree decompositions and the incidence-structure transform
//!   ([`graph`]),
//! - an MSO₁ AST, parser, cardinality-constraint specifications and
//!   pre-evaluation enumeration ([`logic`]),
//! - a brute-force evaluation oracle plus shape machinery ([`eval`]),
//! - the FPT solver (refinement + shapes + ILP) and the XP solver
//!   (extended numerical assignments) for bounded neighborhood diversity
//!   ([`nd`]),
//! - a weighted CSP core with a bounded-treewidth minimum-weight solver
//!   ([`csp`]) and the tree-decomposition-structured CSP encoding with
//!   tree automata for the MSO part ([`tw`], [`automaton`]),
//! - problem encoders and hardness-instance generators ([`problems`]),
//! - text file formats for graphs, decompositions and instances ([`io`]).

pub mod automaton;
pub mod csp;
pub mod eval;
pub mod graph;
pub mod ilp;
pub mod interval;
pub mod io;
pub mod logic;
pub mod nd;
pub mod problems;
pub mod tw;

pub use graph::{Graph, NeighborhoodDecomposition, NiceTreeDecomposition, TreeDecomposition, TypeGraph};
pub use interval::IntervalSet;
pub use logic::{Formula, GlobalConstraint, Instance, LocalConstraint, PreEvaluation};
