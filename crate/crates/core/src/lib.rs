//! Learning ownership norms and ownership relations from interactive
//! instruction.
//!
//! The crate is organized bottom-up:
//!
//! - [`dsl`]: predicate vocabulary, rules, and their text syntax.
//! - [`world`]: objects, agents, the ownership graph and permission database.
//! - [`logic`]: subsumption, merging, rule subtraction and refinements.
//! - [`eval`]: probabilistic evaluation and coverage values.
//! - [`induction`]: incremental rule learning under dual-mode instruction.
//! - [`percept`]: per-agent kernel logistic regression over object features.
//! - [`infer`]: Bayesian ownership inference and the instruction handler.
//! - [`agent`]: task execution under an obedience threshold.
//! - [`sim`]: the simulated world and the three experiments.
//! - [`report`]: CSV and JSON output of experiment results.

pub mod agent;
pub mod dsl;
pub mod eval;
pub mod induction;
pub mod infer;
pub mod logic;
pub mod percept;
pub mod report;
pub mod sim;
pub mod world;
