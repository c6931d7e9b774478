//! Deterministic, budgeted ablation studies guided by a Dynamic-UCB bandit.
//!
//! A study enumerates candidate mutations of a component space, lets a
//! bandit pick one hypothesis family (arm) per round, executes the arm's
//! candidates through a small per-round DAG, and attributes performance
//! changes back to components.

pub mod analysis;
pub mod bandit;
pub mod cli;
pub mod config;
pub mod events;
pub mod executor;
pub mod graph;
pub mod knowledge;
pub mod model;
pub mod orchestrator;
pub mod workspace;
