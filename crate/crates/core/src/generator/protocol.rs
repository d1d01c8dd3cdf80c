//! Line protocol for external generators and projection of their output.
//!
//! Request (one line):
//!
//! ```text
//! {"id":7,"input":"{\"system\": [], ...}","options":{"max_actions":5,"paths":{...}},"budget":5}
//! ```
//!
//! Response (one line): `{"id":7,"output":"{\"action\": [...], \"text\": \"...\"}"}`.
//! The output string is parsed leniently and every action outside the turn's
//! graph is dropped with a warning.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::realize::{realize, Speaker, TemplateTable};
use super::rule::{rule_policy_step, RuleConfig};
use super::{Generation, Generator, GeneratorError};
use crate::action::{parse_output, serialize_input, InputContext, OutputRecord, ParseMode};
use crate::decoder::ConstraintGraph;
use crate::ontology::Ontology;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub id: u64,
    pub input: String,
    pub options: Value,
    pub budget: usize,
}

impl GeneratorRequest {
    /// The request for one turn; `options` is rendered from the graph.
    pub fn new(id: u64, ctx: &InputContext, cg: &ConstraintGraph) -> Self {
        Self {
            id,
            input: serialize_input(ctx),
            options: cg.to_options_json(),
            budget: cg.max_actions(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, GeneratorError> {
        serde_json::from_str(line).map_err(|e| GeneratorError::Protocol(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub id: u64,
    pub output: String,
}

impl GeneratorResponse {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, GeneratorError> {
        serde_json::from_str(line.trim()).map_err(|e| GeneratorError::Protocol(e.to_string()))
    }
}

/// Keeps the legal, non-repeated actions of `rec` up to the graph's cap.
/// Returns the kept record and one warning per dropped action.
pub fn project_onto_graph(rec: &OutputRecord, cg: &ConstraintGraph) -> (OutputRecord, Vec<String>) {
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    for a in &rec.action {
        if !cg.contains(a) {
            warnings.push(format!("dropped illegal action {a}"));
        } else if kept.contains(a) {
            warnings.push(format!("dropped repeated action {a}"));
        } else if kept.len() >= cg.max_actions() {
            warnings.push(format!("dropped action {a} beyond the limit of {}", cg.max_actions()));
        } else {
            kept.push(a.clone());
        }
    }
    (OutputRecord::new(kept, rec.text.clone()), warnings)
}

/// What to do when the external generator fails or nothing legal is left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    Rule,
    Fail,
}

/// Sends one request line and returns the response line.
pub trait Transport {
    fn exchange(&mut self, line: &str) -> Result<String, GeneratorError>;
}

/// Generator backed by an external process.
pub struct ExternalGenerator<T: Transport> {
    transport: T,
    pub fallback: Fallback,
    pub rule: RuleConfig,
    pub templates: TemplateTable,
    next_id: u64,
}

impl<T: Transport> ExternalGenerator<T> {
    pub fn new(transport: T, fallback: Fallback) -> Self {
        Self {
            transport,
            fallback,
            rule: RuleConfig::default(),
            templates: TemplateTable::builtin(),
            next_id: 0,
        }
    }

    fn call(&mut self, ctx: &InputContext, cg: &ConstraintGraph) -> Result<OutputRecord, GeneratorError> {
        let id = self.next_id;
        self.next_id += 1;
        let reply = self.transport.exchange(&GeneratorRequest::new(id, ctx, cg).to_line())?;
        let resp = GeneratorResponse::from_line(&reply)?;
        if resp.id != id {
            return Err(GeneratorError::Protocol(format!("expected id {id}, got {}", resp.id)));
        }
        parse_output(&resp.output, ParseMode::Lenient).map_err(|e| GeneratorError::Protocol(e.to_string()))
    }

    fn fall_back(
        &self,
        ctx: &InputContext,
        cg: &ConstraintGraph,
        o: &Ontology,
        rng: &mut dyn RngCore,
        mut warnings: Vec<String>,
        reason: GeneratorError,
    ) -> Result<Generation, GeneratorError> {
        if self.fallback == Fallback::Fail {
            return Err(reason);
        }
        warnings.push(format!("{reason}; used the rule policy instead"));
        let action = rule_policy_step(&ctx.goal, &ctx.system_action, cg, o, &self.rule, rng);
        let text = realize(&self.templates, &action, Speaker::User, o);
        Ok(Generation {
            record: OutputRecord::new(action, text),
            warnings,
            trace: None,
        })
    }
}

impl<T: Transport> Generator for ExternalGenerator<T> {
    fn name(&self) -> &str {
        "external"
    }

    fn generate(
        &mut self,
        ctx: &InputContext,
        cg: &ConstraintGraph,
        o: &Ontology,
        rng: &mut dyn RngCore,
    ) -> Result<Generation, GeneratorError> {
        let raw = match self.call(ctx, cg) {
            Ok(r) => r,
            Err(e) => return self.fall_back(ctx, cg, o, rng, Vec::new(), e),
        };
        let (mut rec, warnings) = project_onto_graph(&raw, cg);
        if rec.action.is_empty() {
            return self.fall_back(ctx, cg, o, rng, warnings, GeneratorError::EmptyProjection);
        }
        if !warnings.is_empty() {
            // the original text may mention dropped values
            rec.text = realize(&self.templates, &rec.action, Speaker::User, o);
        }
        Ok(Generation {
            record: rec,
            warnings,
            trace: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{serialize_output, SemanticAction};
    use crate::decoder::build_graph;
    use crate::goal::{GoalEntry, GoalKind, UserGoal};
    use crate::ontology::load_ontology;
    use crate::rng::dialogue_rng;
    use alloc::vec;

    const MULTIWOZ: &str = include_str!("../../../../data/ontology/multiwoz.json");

    struct Canned(Option<OutputRecord>);

    impl Transport for Canned {
        fn exchange(&mut self, line: &str) -> Result<String, GeneratorError> {
            let req = GeneratorRequest::from_line(line)?;
            match &self.0 {
                Some(rec) => Ok(GeneratorResponse {
                    id: req.id,
                    output: serialize_output(rec),
                }
                .to_line()),
                None => Err(GeneratorError::Timeout(30_000)),
            }
        }
    }

    fn setup() -> (Ontology, InputContext, ConstraintGraph) {
        let o = load_ontology(MULTIWOZ).unwrap();
        let g = UserGoal::new(vec![GoalEntry::new("hotel", GoalKind::Info, "area", "north").unwrap()]).unwrap();
        let cg = build_graph(&o, &g, &[]);
        (o, InputContext::new(vec![], vec![], g, 0), cg)
    }

    #[test]
    fn legal_record_passes_through() {
        let (o, ctx, cg) = setup();
        let rec = OutputRecord::new(vec![SemanticAction::new("inform", "hotel", "area", "north")], "North please.");
        let mut g = ExternalGenerator::new(Canned(Some(rec.clone())), Fallback::Rule);
        let out = g.generate(&ctx, &cg, &o, &mut dialogue_rng(0, 0)).unwrap();
        assert_eq!(out.record, rec);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn illegal_actions_are_dropped() {
        let (o, ctx, cg) = setup();
        let rec = OutputRecord::new(
            vec![SemanticAction::new("inform", "hotel", "area", "north"), SemanticAction::new("inform", "hotel", "area", "south")],
            "x",
        );
        let mut g = ExternalGenerator::new(Canned(Some(rec)), Fallback::Rule);
        let out = g.generate(&ctx, &cg, &o, &mut dialogue_rng(0, 0)).unwrap();
        assert_eq!(out.record.action, vec![SemanticAction::new("inform", "hotel", "area", "north")]);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn timeout_falls_back_or_fails() {
        let (o, ctx, cg) = setup();
        let mut g = ExternalGenerator::new(Canned(None), Fallback::Rule);
        let out = g.generate(&ctx, &cg, &o, &mut dialogue_rng(0, 0)).unwrap();
        assert!(cg.is_legal(&out.record.action));
        assert!(out.warnings[0].contains("timed out"));
        let mut g = ExternalGenerator::new(Canned(None), Fallback::Fail);
        assert_eq!(g.generate(&ctx, &cg, &o, &mut dialogue_rng(0, 0)).unwrap_err(), GeneratorError::Timeout(30_000));
    }

    #[test]
    fn options_rebuild_the_graph() {
        let (_, ctx, cg) = setup();
        let req = GeneratorRequest::from_line(&GeneratorRequest::new(3, &ctx, &cg).to_line()).unwrap();
        let rebuilt = ConstraintGraph::from_options_json(&req.options).unwrap();
        let mut a = rebuilt.paths();
        let mut b = cg.paths();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
