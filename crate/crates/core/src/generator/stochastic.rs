//! Trainable linear-softmax user policy.
//!
//! The policy builds an action list one choice at a time. At each boundary the
//! options are every unused graph path plus STOP; option `k` has features
//! `phi_k` and probability `softmax(w . phi / temperature)_k`. Candidate
//! features are zero for STOP and the stop features are zero for candidates,
//! so one weight vector scores both.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::realize::{realize, Speaker, TemplateTable};
use super::{Generation, Generator, GeneratorError};
use crate::action::{ActionList, InputContext, OutputRecord, SemanticAction, DONTCARE, NONE};
use crate::decoder::{ConstraintGraph, Provenance};
use crate::goal::{is_satisfied, GoalEntry, GoalKind, GoalStatus, UserGoal};
use crate::ontology::{IntentRole, Ontology};

/// Feature order of [`PolicyParameters::weights`].
pub const FEATURE_NAMES: [&str; 23] = [
    "cand:bias",
    "cand:answers_request",
    "cand:dontcare",
    "cand:info",
    "cand:book",
    "cand:reqt",
    "cand:not_mentioned",
    "cand:conflict",
    "cand:requested",
    "cand:priority",
    "cand:reasked",
    "cand:bye",
    "cand:bye_satisfied",
    "cand:general",
    "cand:other",
    "cand:selected",
    "cand:same_domain",
    "stop:bias",
    "stop:after_actions",
    "stop:empty",
    "stop:unanswered",
    "stop:pending",
    "stop:sys_failure",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();
const STOP_OFFSET: usize = 17;

/// Below this temperature the policy picks the argmax option.
pub const GREEDY_TEMPERATURE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub weights: Vec<f64>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParameterError {
    #[error("expected {expected} weights, found {found}")]
    Length { expected: usize, found: usize },
    #[error("weights and temperature must be finite and the temperature non-negative")]
    NonFinite,
    #[error("feature manifest does not match this build")]
    Manifest,
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    features: Vec<String>,
    weights: Vec<f64>,
    temperature: f64,
}

impl PolicyParameters {
    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; N_FEATURES],
            temperature: 1.0,
        }
    }

    /// Weights that make the policy behave roughly like the agenda policy.
    pub fn rule_like() -> Self {
        let mut w = vec![0.0; N_FEATURES];
        let mut set = |name: &str, v: f64| {
            let i = FEATURE_NAMES.iter().position(|n| *n == name).expect("known feature");
            w[i] = v;
        };
        set("cand:answers_request", 6.0);
        set("cand:dontcare", 2.0);
        set("cand:info", 1.0);
        set("cand:book", 0.5);
        set("cand:not_mentioned", 2.0);
        set("cand:conflict", 4.0);
        set("cand:requested", 0.5);
        set("cand:priority", 3.0);
        set("cand:reasked", 1.0);
        set("cand:bye", -4.0);
        set("cand:bye_satisfied", 10.0);
        set("cand:general", -3.0);
        set("cand:other", -6.0);
        set("cand:selected", -2.0);
        set("cand:same_domain", 0.5);
        set("stop:bias", 3.0);
        set("stop:after_actions", 2.0);
        set("stop:empty", -6.0);
        set("stop:unanswered", -4.0);
        Self {
            weights: w,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParameterError> {
        if self.weights.len() != N_FEATURES {
            return Err(ParameterError::Length {
                expected: N_FEATURES,
                found: self.weights.len(),
            });
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(ParameterError::NonFinite);
        }
        Ok(())
    }

    /// Checkpoint document with the feature-name manifest.
    pub fn to_checkpoint_json(&self) -> String {
        let c = Checkpoint {
            features: FEATURE_NAMES.iter().map(|s| String::from(*s)).collect(),
            weights: self.weights.clone(),
            temperature: self.temperature,
        };
        serde_json::to_string_pretty(&c).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self, ParameterError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| ParameterError::Format(e.to_string()))?;
        if c.features.len() != N_FEATURES || c.features.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
            return Err(ParameterError::Manifest);
        }
        let p = Self {
            weights: c.weights,
            temperature: c.temperature,
        };
        p.validate()?;
        Ok(p)
    }

    fn score(&self, phi: &[f64]) -> f64 {
        self.weights.iter().zip(phi).map(|(w, f)| w * f).sum()
    }

    fn is_greedy(&self) -> bool {
        self.temperature <= GREEDY_TEMPERATURE
    }
}

/// One boundary decision: the feature rows of all options (STOP last) and the
/// index chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub features: Vec<[f64; N_FEATURES]>,
    pub chosen: usize,
}

impl Choice {
    /// Scaled logits `w . phi / temperature`.
    fn logits(&self, p: &PolicyParameters) -> Vec<f64> {
        let t = if p.is_greedy() { 1.0 } else { p.temperature };
        self.features.iter().map(|phi| p.score(phi) / t).collect()
    }

    /// Probabilities of all options.
    pub fn probabilities(&self, p: &PolicyParameters) -> Vec<f64> {
        softmax(&self.logits(p))
    }
}

/// Everything needed to recompute log-probabilities and their gradients.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrace {
    pub choices: Vec<Choice>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|z| libm::exp(z - max)).sum();
    logits[k] - max - libm::log(total)
}

impl PolicyTrace {
    /// Sum of per-choice log-softmax terms.
    pub fn log_prob(&self, p: &PolicyParameters) -> f64 {
        self.choices
            .iter()
            .map(|c| log_softmax_at(&c.logits(p), c.chosen))
            .sum()
    }

    /// Gradient of [`PolicyTrace::log_prob`] with respect to the weights.
    pub fn grad_log_prob(&self, p: &PolicyParameters) -> Vec<f64> {
        let t = if p.is_greedy() { 1.0 } else { p.temperature };
        let mut g = vec![0.0; N_FEATURES];
        for c in &self.choices {
            let probs = c.probabilities(p);
            for (k, phi) in c.features.iter().enumerate() {
                let coef = if k == c.chosen { 1.0 - probs[k] } else { -probs[k] };
                for j in 0..N_FEATURES {
                    g[j] += coef * phi[j] / t;
                }
            }
        }
        g
    }

    /// Summed entropy of the choice distributions and its gradient.
    pub fn entropy_and_grad(&self, p: &PolicyParameters) -> (f64, Vec<f64>) {
        let t = if p.is_greedy() { 1.0 } else { p.temperature };
        let mut h_total = 0.0;
        let mut g = vec![0.0; N_FEATURES];
        for c in &self.choices {
            let probs = c.probabilities(p);
            let logs: Vec<f64> = probs.iter().map(|q| if *q > 0.0 { libm::log(*q) } else { 0.0 }).collect();
            let h: f64 = -probs.iter().zip(&logs).map(|(q, l)| q * l).sum::<f64>();
            h_total += h;
            for (k, phi) in c.features.iter().enumerate() {
                let coef = -probs[k] * (logs[k] + h);
                for j in 0..N_FEATURES {
                    g[j] += coef * phi[j] / t;
                }
            }
        }
        (h_total, g)
    }
}

struct StepState<'a> {
    goal: &'a UserGoal,
    o: &'a Ontology,
    cg: &'a ConstraintGraph,
    requested: Vec<(&'a str, &'a str)>,
    satisfied: bool,
    failure: bool,
    pending_frac: f64,
}

impl<'a> StepState<'a> {
    fn new(goal: &'a UserGoal, a_sys: &'a [SemanticAction], cg: &'a ConstraintGraph, o: &'a Ontology) -> Self {
        let paths = cg.paths();
        let requested = a_sys
            .iter()
            .filter(|a| o.system_role(&a.intent) == Some(IntentRole::Request) && a.slot != NONE)
            .filter(|a| paths.iter().any(|p| p.domain == a.domain && p.slot == a.slot))
            .map(|a| (a.domain.as_str(), a.slot.as_str()))
            .collect();
        let failure = a_sys
            .iter()
            .any(|a| o.system_role(&a.intent).is_some_and(|r| r.is_failure()));
        let open = goal.entries().iter().filter(|e| e.status() != GoalStatus::Fulfilled).count();
        let pending_frac = if goal.is_empty() {
            0.0
        } else {
            open as f64 / goal.len() as f64
        };
        Self {
            goal,
            o,
            cg,
            requested,
            satisfied: is_satisfied(goal),
            failure,
            pending_frac,
        }
    }

    fn entry_for(&self, a: &SemanticAction, role: IntentRole) -> Option<(usize, &'a GoalEntry)> {
        let kind_ok = |e: &GoalEntry| match role {
            IntentRole::Inform => e.kind().is_constraint() && e.value() == a.value,
            IntentRole::Request => e.kind() == GoalKind::Reqt,
            _ => false,
        };
        self.goal
            .entries()
            .iter()
            .enumerate()
            .find(|(_, e)| e.domain() == a.domain && e.slot() == a.slot && kind_ok(e))
    }

    fn candidate(&self, a: &SemanticAction, partial: &[SemanticAction]) -> [f64; N_FEATURES] {
        let mut phi = [0.0; N_FEATURES];
        phi[0] = 1.0;
        let role = self.o.user_role(&a.intent).unwrap_or(IntentRole::Other);
        let asked = self.requested.contains(&(a.domain.as_str(), a.slot.as_str()));
        if role == IntentRole::Inform && asked {
            phi[1] = 1.0;
        }
        if a.value == DONTCARE {
            phi[2] = 1.0;
        }
        if let Some((rank, e)) = self.entry_for(a, role) {
            match e.kind() {
                GoalKind::Info => phi[3] = 1.0,
                GoalKind::Book => phi[4] = 1.0,
                GoalKind::Reqt => phi[5] = 1.0,
            }
            match e.status() {
                GoalStatus::NotMentioned => phi[6] = 1.0,
                GoalStatus::Conflict => phi[7] = 1.0,
                GoalStatus::Requested => phi[8] = 1.0,
                GoalStatus::Fulfilled => phi[10] = 1.0,
            }
            phi[9] = 1.0 / (1.0 + rank as f64);
        }
        match role {
            IntentRole::Bye => {
                phi[11] = 1.0;
                if self.satisfied {
                    phi[12] = 1.0;
                }
            }
            IntentRole::General => phi[13] = 1.0,
            IntentRole::Other => phi[14] = 1.0,
            _ => {}
        }
        if !asked && self.cg.provenance(a) == Some(Provenance::SystemInserted) {
            phi[15] = 1.0;
        }
        if partial.iter().any(|p| p.domain == a.domain) {
            phi[16] = 1.0;
        }
        phi
    }

    fn stop(&self, partial: &[SemanticAction]) -> [f64; N_FEATURES] {
        let mut phi = [0.0; N_FEATURES];
        phi[STOP_OFFSET] = 1.0;
        phi[STOP_OFFSET + 1] = partial.len() as f64;
        if partial.is_empty() {
            phi[STOP_OFFSET + 2] = 1.0;
        }
        let unanswered = self
            .requested
            .iter()
            .filter(|(d, s)| !partial.iter().any(|a| a.domain == *d && a.slot == *s))
            .count();
        phi[STOP_OFFSET + 3] = unanswered as f64;
        phi[STOP_OFFSET + 4] = self.pending_frac;
        if self.failure {
            phi[STOP_OFFSET + 5] = 1.0;
        }
        phi
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples one action list. Returns the list, its log-probability under `p`
/// and the trace of choices.
pub fn stochastic_policy_step<R: Rng + ?Sized>(
    p: &PolicyParameters,
    g: &UserGoal,
    a_sys: &[SemanticAction],
    cg: &ConstraintGraph,
    o: &Ontology,
    rng: &mut R,
) -> (ActionList, f64, PolicyTrace) {
    let state = StepState::new(g, a_sys, cg, o);
    let mut partial: ActionList = Vec::new();
    let mut trace = PolicyTrace::default();
    let paths = cg.paths();
    loop {
        if partial.len() >= cg.max_actions() {
            break;
        }
        let options: Vec<&SemanticAction> = paths.iter().filter(|a| !partial.contains(a)).collect();
        if options.is_empty() {
            break;
        }
        let mut features: Vec<[f64; N_FEATURES]> = options.iter().map(|a| state.candidate(a, &partial)).collect();
        features.push(state.stop(&partial));
        let mut choice = Choice { features, chosen: 0 };
        let logits = choice.logits(p);
        choice.chosen = if p.is_greedy() {
            argmax(&logits)
        } else {
            sample_index(&softmax(&logits), rng)
        };
        let chosen = choice.chosen;
        trace.choices.push(choice);
        if chosen == options.len() {
            break;
        }
        partial.push(options[chosen].clone());
    }
    let log_prob = if p.is_greedy() { 0.0 } else { trace.log_prob(p) };
    (partial, log_prob, trace)
}

/// Stochastic policy plus template realizer.
#[derive(Clone, Debug)]
pub struct StochasticGenerator {
    pub params: PolicyParameters,
    pub templates: TemplateTable,
}

impl StochasticGenerator {
    pub fn new(params: PolicyParameters, templates: TemplateTable) -> Self {
        Self { params, templates }
    }
}

impl Generator for StochasticGenerator {
    fn name(&self) -> &str {
        "stochastic"
    }

    fn generate(
        &mut self,
        ctx: &InputContext,
        cg: &ConstraintGraph,
        o: &Ontology,
        rng: &mut dyn RngCore,
    ) -> Result<Generation, GeneratorError> {
        let (action, _, trace) = stochastic_policy_step(&self.params, &ctx.goal, &ctx.system_action, cg, o, rng);
        let text = realize(&self.templates, &action, Speaker::User, o);
        let mut out = Generation::new(OutputRecord::new(action, text));
        out.trace = Some(trace);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::build_graph;
    use crate::ontology::load_ontology;
    use crate::rng::dialogue_rng;

    const MULTIWOZ: &str = include_str!("../../../../data/ontology/multiwoz.json");

    fn fig2() -> (Ontology, UserGoal) {
        let o = load_ontology(MULTIWOZ).unwrap();
        let g = UserGoal::new(vec![
            GoalEntry::new("hotel", GoalKind::Info, "area", "north").unwrap(),
            GoalEntry::new("hotel", GoalKind::Info, "stars", "2").unwrap(),
            GoalEntry::request("hotel", "addr"),
            GoalEntry::new("taxi", GoalKind::Info, "leave", "8:00").unwrap(),
        ])
        .unwrap();
        (o, g)
    }

    #[test]
    fn log_prob_is_sum_of_choice_terms() {
        let (o, g) = fig2();
        let cg = build_graph(&o, &g, &[]);
        let p = PolicyParameters::rule_like();
        for seed in 0..50 {
            let (al, lp, trace) = stochastic_policy_step(&p, &g, &[], &cg, &o, &mut dialogue_rng(seed, 0));
            assert!(cg.is_legal(&al));
            let mut independent = 0.0;
            for c in &trace.choices {
                let scores: Vec<f64> = c.features.iter().map(|phi| p.weights.iter().zip(phi).map(|(w, f)| w * f).sum()).collect();
                let norm: f64 = scores.iter().map(|s| s.exp()).sum();
                independent += (scores[c.chosen].exp() / norm).ln();
            }
            assert!((lp - independent).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_limit_is_deterministic() {
        let (o, g) = fig2();
        let cg = build_graph(&o, &g, &[]);
        let p = PolicyParameters {
            temperature: 0.0,
            ..PolicyParameters::rule_like()
        };
        let first = stochastic_policy_step(&p, &g, &[], &cg, &o, &mut dialogue_rng(0, 0)).0;
        for seed in 1..20 {
            assert_eq!(stochastic_policy_step(&p, &g, &[], &cg, &o, &mut dialogue_rng(seed, 0)).0, first);
        }
        assert_eq!(first[0], SemanticAction::new("inform", "hotel", "area", "north"));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = PolicyParameters::rule_like();
        let back = PolicyParameters::from_checkpoint_json(&p.to_checkpoint_json()).unwrap();
        assert_eq!(back, p);
        let mut bad = p.clone();
        bad.weights[0] = f64::NAN;
        assert_eq!(bad.validate(), Err(ParameterError::NonFinite));
    }

    #[test]
    fn grad_matches_finite_differences() {
        let (o, g) = fig2();
        let cg = build_graph(&o, &g, &[SemanticAction::new("request", "hotel", "price", "?")]);
        let mut p = PolicyParameters::rule_like();
        p.temperature = 0.7;
        let (_, _, trace) = stochastic_policy_step(&p, &g, &[], &cg, &o, &mut dialogue_rng(2, 2));
        let grad = trace.grad_log_prob(&p);
        let h = 1e-6;
        for j in 0..N_FEATURES {
            let mut up = p.clone();
            up.weights[j] += h;
            let mut down = p.clone();
            down.weights[j] -= h;
            let fd = (trace.log_prob(&up) - trace.log_prob(&down)) / (2.0 * h);
            assert!((fd - grad[j]).abs() <= 1e-6 * (1.0 + fd.abs()), "{j}: {fd} vs {}", grad[j]);
        }
    }
}
