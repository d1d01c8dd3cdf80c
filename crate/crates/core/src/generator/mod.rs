//! User-side generators.
//!
//! A generator maps the turn's [`InputContext`] and [`ConstraintGraph`] to an
//! [`OutputRecord`]. The internal generators factor this into a policy that
//! picks graph paths and a template realizer; external generators go through
//! the line protocol in [`protocol`] and have their output projected onto the
//! graph.

pub mod protocol;
pub mod realize;
pub mod rule;
pub mod stochastic;

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::action::{InputContext, OutputRecord};
use crate::decoder::ConstraintGraph;
use crate::ontology::Ontology;

pub use realize::{realize, Speaker as TemplateSpeaker, TemplateTable};
pub use rule::{rule_policy_step, RuleConfig, RuleGenerator};
pub use stochastic::{PolicyParameters, PolicyTrace, StochasticGenerator, FEATURE_NAMES};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeneratorError {
    #[error("external generator timed out after {0} ms")]
    Timeout(u64),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("external generator exited: {0}")]
    Exited(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("no legal action survived projection")]
    EmptyProjection,
}

/// Output of one generator call.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub record: OutputRecord,
    /// Recoverable problems (dropped illegal actions, fallbacks).
    pub warnings: Vec<String>,
    /// Choice trace of the stochastic policy, used for policy gradients.
    #[serde(skip)]
    pub trace: Option<PolicyTrace>,
}

impl Generation {
    pub fn new(record: OutputRecord) -> Self {
        Self {
            record,
            warnings: Vec::new(),
            trace: None,
        }
    }
}

pub trait Generator {
    fn name(&self) -> &str;

    /// Produces the user's turn. Internal generators only emit lists that
    /// validate against `cg`.
    fn generate(
        &mut self,
        ctx: &InputContext,
        cg: &ConstraintGraph,
        o: &Ontology,
        rng: &mut dyn RngCore,
    ) -> Result<Generation, GeneratorError>;
}

impl<G: Generator + ?Sized> Generator for alloc::boxed::Box<G> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn generate(
        &mut self,
        ctx: &InputContext,
        cg: &ConstraintGraph,
        o: &Ontology,
        rng: &mut dyn RngCore,
    ) -> Result<Generation, GeneratorError> {
        (**self).generate(ctx, cg, o, rng)
    }
}
