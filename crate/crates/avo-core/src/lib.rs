//! Single-lineage evolutionary optimization with pluggable variation
//! operators.
//!
//! The framework maintains an append-only [`lineage::Lineage`] of committed
//! solutions, each scored by a multi-configuration benchmark harness
//! ([`scoring`]). New candidates are produced by a variation operator:
//! either the classical two-stage decomposition (Boltzmann parent sampling
//! followed by one-shot generation, [`variation::classical`]) or an
//! autonomous agent loop with tool access to the lineage, a knowledge base,
//! and the scoring function ([`variation::agentic`]). A candidate is
//! committed only when it passes correctness on every benchmark
//! configuration and matches or improves the best committed geometric-mean
//! score.
//!
//! The optimization domain is a deterministic straight-line register VM
//! ([`minivm`]) with per-configuration instruction cost tables,
//! semantics-preserving rewrite rules, and a brute-force enumeration oracle
//! that establishes ground-truth optima for small programs.
//!
//! Long runs are watched by a rule-based [`supervisor`] that detects stalls
//! and unproductive cycles and injects candidate optimization directions
//! into subsequent variation steps. The [`driver`] wires everything into a
//! continuous loop with git-backed persistence ([`store`]) and trajectory
//! exports ([`report`]).

pub mod driver;
pub mod knowledge;
pub mod lineage;
pub mod minivm;
pub mod report;
pub mod scoring;
pub mod store;
pub mod supervisor;
pub mod variation;
