//! Ontology-constrained user simulation for task-oriented dialogue.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithm of the
//! simulator: ontology handling, user goals and their update rules, the
//! canonical JSON sequence formats, the per-turn constraint graph used for
//! decoding, the reference generators, the scripted dialogue system and
//! dialogue loop, PPO fine-tuning of the stochastic user policy and the
//! evaluation metrics. File IO, the external generator client and the CLI
//! live in the `todsim` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod action;
pub mod decoder;
pub mod generator;
pub mod goal;
pub mod harness;
pub mod metrics;
pub mod ontology;
pub mod rl;
pub mod stats;

mod rng;

pub use action::{
    parse_input, parse_output, serialize_input, serialize_output, ActionList, InputContext,
    OutputRecord, ParseMode, SemanticAction,
};
pub use decoder::{ConstraintGraph, Continuation, Position, Provenance, Violation, ViolationKind};
pub use generator::{Generation, Generator, GeneratorError};
pub use goal::{GoalEntry, GoalKind, GoalSamplerConfig, GoalStatus, UserGoal};
pub use ontology::{IntentRole, Ontology, OntologyError};
pub use rng::{dialogue_rng, DialogueRng};

/// Version string embedded in every artifact written by the tooling.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
