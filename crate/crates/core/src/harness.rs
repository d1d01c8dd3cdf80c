//! Dialogue loop, scripted dialogue system, returns and cross-evaluation.
//!
//! One turn is one exchange: the system speaks, the goal is updated with the
//! system action, the turn graph is built, the user answers and the goal is
//! updated with the user action. The dialogue ends when the user emits a
//! bye-role action or after `max_turns` exchanges.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionList, InputContext, SemanticAction, DONTCARE, GENERAL_DOMAIN, NONE};
use crate::decoder::ConstraintGraph;
use crate::generator::realize::{realize, Speaker, TemplateTable};
use crate::generator::{Generator, PolicyTrace};
use crate::goal::{is_satisfied, sample_goal, update_on_system, update_on_user, GoalError, GoalKind, GoalSamplerConfig, UserGoal};
use crate::metrics::tokenize;
use crate::ontology::{IntentRole, Ontology};
use crate::rl::RewardConfig;
use crate::rng::{dialogue_rng, DialogueRng};
use crate::stats;

pub const DEFAULT_MAX_TURNS: usize = 40;
pub const SUCCESS_REWARD: f64 = 80.0;
pub const FAILURE_PENALTY: f64 = -40.0;

/// How the scripted system reads user turns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Understanding {
    /// Each user action is understood with probability `p_understand`.
    Semantic,
    /// As `Semantic`, but an inform is only understood when its value can be
    /// spotted in the user's text.
    Keyword,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedSystemConfig {
    pub p_understand: f64,
    /// Probability that a search or booking fails.
    pub failure_rate: f64,
    /// Questions asked per domain before the first offer.
    pub request_depth: usize,
    /// Entity slots mentioned in an offer besides the user's constraints.
    pub offer_extra_slots: usize,
    pub understanding: Understanding,
}

impl Default for ScriptedSystemConfig {
    fn default() -> Self {
        Self {
            p_understand: 1.0,
            failure_rate: 0.0,
            request_depth: 1,
            offer_extra_slots: 0,
            understanding: Understanding::Semantic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("{0} must lie in [0, 1]")]
    Probability(&'static str),
    #[error("need at least one dialogue per cell")]
    NoDialogues,
    #[error("need at least one system and one user")]
    EmptyMatrix,
    #[error(transparent)]
    Goal(#[from] GoalError),
}

impl ScriptedSystemConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..=1.0).contains(&self.p_understand) {
            return Err(HarnessError::Probability("p_understand"));
        }
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(HarnessError::Probability("failure_rate"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct DomainBelief {
    constraints: BTreeMap<String, String>,
    booking: BTreeMap<String, String>,
    booking_dirty: bool,
    asked: BTreeSet<String>,
    pending: Vec<String>,
    entity: Option<BTreeMap<String, String>>,
}

/// Rule-based system that stands in for a trained dialogue policy. It keeps
/// a belief per domain, asks up to `request_depth` questions, offers a
/// synthetic entity that matches everything it understood, answers requests
/// from that entity and books when booking details arrive.
#[derive(Clone, Debug)]
pub struct ScriptedSystem {
    pub config: ScriptedSystemConfig,
    pub templates: TemplateTable,
    beliefs: BTreeMap<String, DomainBelief>,
    entity_counter: u64,
}

impl ScriptedSystem {
    pub fn new(config: ScriptedSystemConfig) -> Self {
        Self {
            config,
            templates: TemplateTable::builtin(),
            beliefs: BTreeMap::new(),
            entity_counter: 0,
        }
    }

    pub fn reset(&mut self) {
        self.beliefs.clear();
        self.entity_counter = 0;
    }

    fn understood<R: Rng + ?Sized>(&self, a: &SemanticAction, text: &str, rng: &mut R) -> bool {
        if self.config.understanding == Understanding::Keyword && a.has_concrete_value() && a.value != DONTCARE {
            let tokens = tokenize(text);
            let needle = tokenize(&a.value);
            if needle.is_empty() || !tokens.windows(needle.len()).any(|w| w == needle.as_slice()) {
                return false;
            }
        }
        rng.random::<f64>() < self.config.p_understand
    }

    fn make_entity<R: Rng + ?Sized>(&mut self, o: &Ontology, domain: &str, constraints: &BTreeMap<String, String>, rng: &mut R) -> BTreeMap<String, String> {
        self.entity_counter += 1;
        let mut e = BTreeMap::new();
        let Ok(schema) = o.domain(domain) else { return e };
        for (s, slot) in &schema.slots {
            let fixed = constraints.get(s).filter(|v| v.as_str() != DONTCARE);
            let value = match fixed {
                Some(v) => v.clone(),
                None => {
                    let pool = slot.sampling_pool();
                    if pool.is_empty() {
                        format!("{}-{}", s.replace(' ', "-"), rng.random_range(100..1000))
                    } else {
                        pool[rng.random_range(0..pool.len())].clone()
                    }
                }
            };
            e.insert(s.clone(), value);
        }
        e
    }

    /// Opening turn.
    pub fn greet(&self, o: &Ontology) -> ActionList {
        o.first_system_intent(IntentRole::General)
            .map(|i| alloc::vec![SemanticAction::new(i, GENERAL_DOMAIN, NONE, NONE)])
            .unwrap_or_default()
    }

    /// System response to the user's last turn.
    pub fn respond<R: Rng + ?Sized>(&mut self, o: &Ontology, user: &[SemanticAction], user_text: &str, rng: &mut R) -> ActionList {
        let mut active: Vec<String> = Vec::new();
        for a in user {
            if !self.understood(a, user_text, rng) {
                continue;
            }
            let Ok(slot) = o.slot(&a.domain, &a.slot) else { continue };
            let b = self.beliefs.entry(a.domain.clone()).or_default();
            match o.user_role(&a.intent) {
                Some(IntentRole::Inform) => {
                    if slot.allows(GoalKind::Book) && !slot.allows(GoalKind::Info) {
                        b.booking.insert(a.slot.clone(), a.value.clone());
                        b.booking_dirty = true;
                    } else {
                        let contradicts = b
                            .entity
                            .as_ref()
                            .is_some_and(|e| a.value != DONTCARE && e.get(&a.slot) != Some(&a.value));
                        if contradicts {
                            b.entity = None;
                        }
                        b.constraints.insert(a.slot.clone(), a.value.clone());
                    }
                }
                Some(IntentRole::Request) => {
                    if !b.pending.contains(&a.slot) {
                        b.pending.push(a.slot.clone());
                    }
                }
                _ => continue,
            }
            if !active.contains(&a.domain) {
                active.push(a.domain.clone());
            }
        }

        let inform = o.first_system_intent(IntentRole::Inform);
        let offer = o.first_system_intent(IntentRole::Offer).or(inform);
        let request = o.first_system_intent(IntentRole::Request);
        let nooffer = o
            .first_system_intent(IntentRole::NoOffer)
            .or_else(|| o.first_system_intent(IntentRole::NoBook));
        let nobook = o
            .first_system_intent(IntentRole::NoBook)
            .or_else(|| o.first_system_intent(IntentRole::NoOffer));
        let booked = o.first_system_intent(IntentRole::Booked);

        let mut out = Vec::new();
        for d in active {
            let mut b = self.beliefs.remove(&d).unwrap_or_default();
            if b.entity.is_none() {
                let unasked = o.domain(&d).ok().and_then(|schema| {
                    schema
                        .slots
                        .iter()
                        .find(|(s, slot)| slot.allows(GoalKind::Info) && !b.constraints.contains_key(*s) && !b.asked.contains(*s))
                        .map(|(s, _)| s.clone())
                });
                let wants_question = b.pending.is_empty() && b.asked.len() < self.config.request_depth;
                if let (true, Some(s), Some(req)) = (wants_question, unasked, request) {
                    out.push(SemanticAction::new(req, &d, &s, "?"));
                    b.asked.insert(s);
                    self.beliefs.insert(d, b);
                    continue;
                }
                if rng.random::<f64>() < self.config.failure_rate {
                    if let Some(no) = nooffer {
                        out.push(SemanticAction::new(no, &d, NONE, NONE));
                    }
                    b.constraints.clear();
                    b.booking.clear();
                    b.pending.clear();
                    self.beliefs.insert(d, b);
                    continue;
                }
                let entity = self.make_entity(o, &d, &b.constraints, rng);
                if let Some(offer) = offer {
                    let mut mentioned: Vec<&String> = b.constraints.keys().collect();
                    let extra: Vec<&String> = entity.keys().filter(|s| !b.constraints.contains_key(*s)).collect();
                    mentioned.extend(extra.into_iter().take(self.config.offer_extra_slots));
                    if mentioned.is_empty() {
                        out.push(SemanticAction::new(offer, &d, NONE, NONE));
                    }
                    for s in mentioned {
                        out.push(SemanticAction::new(offer, &d, s, &entity[s]));
                    }
                }
                b.entity = Some(entity);
            }
            if let (Some(entity), Some(inform)) = (&b.entity, inform) {
                for s in b.pending.drain(..) {
                    if let Some(v) = entity.get(&s) {
                        out.push(SemanticAction::new(inform, &d, &s, v));
                    }
                }
            }
            if b.entity.is_some() && b.booking_dirty && !b.booking.is_empty() {
                if rng.random::<f64>() < self.config.failure_rate {
                    if let Some(no) = nobook {
                        out.push(SemanticAction::new(no, &d, NONE, NONE));
                    }
                    b.booking.clear();
                } else if let Some(booked) = booked {
                    for (s, v) in &b.booking {
                        out.push(SemanticAction::new(booked, &d, s, v));
                    }
                }
                b.booking_dirty = false;
            }
            self.beliefs.insert(d, b);
        }
        if out.is_empty() {
            let more = o
                .system_intents()
                .iter()
                .find(|i| i.role == IntentRole::General && i.name.contains("more"))
                .or_else(|| o.system_intents().iter().find(|i| i.role == IntentRole::General))
                .map(|i| i.name.as_str());
            if let Some(more) = more {
                out.push(SemanticAction::new(more, GENERAL_DOMAIN, NONE, NONE));
            }
        }
        out
    }

    pub fn realize(&self, o: &Ontology, actions: &[SemanticAction]) -> String {
        realize(&self.templates, actions, Speaker::System, o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    TurnLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub system: ActionList,
    pub system_text: String,
    /// The goal as the user saw it: after the system update of this turn.
    pub goal: UserGoal,
    pub user: ActionList,
    pub user_text: String,
    pub m: usize,
    /// Turn reward under each configured reward, by name.
    pub rewards: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trace: Option<PolicyTrace>,
}

/// One dialogue. Serializes to one JSONL line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub index: u64,
    pub initial_goal: UserGoal,
    pub final_goal: UserGoal,
    pub turns: Vec<TurnRecord>,
    pub outcome: Outcome,
    pub total_turns: usize,
    pub ds_return: f64,
    pub user_returns: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Transcript {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    /// Mean user actions per turn.
    pub fn mean_actions(&self) -> f64 {
        if self.turns.is_empty() {
            0.0
        } else {
            self.turns.iter().map(|t| t.m as f64).sum::<f64>() / self.turns.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueConfig {
    pub max_turns: usize,
    pub max_actions: usize,
    pub rewards: Vec<(String, RewardConfig)>,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            max_actions: crate::decoder::DEFAULT_MAX_ACTIONS,
            rewards: alloc::vec![("r1".to_string(), RewardConfig::r1()), ("r2".to_string(), RewardConfig::r2())],
        }
    }
}

/// `-turns + 80` on success, `-turns - 40` otherwise (a turn-limit ending
/// counts as a failure).
pub fn ds_episode_return(t: &Transcript) -> f64 {
    let terminal = if t.is_success() { SUCCESS_REWARD } else { FAILURE_PENALTY };
    terminal - t.total_turns as f64
}

/// `-rho_eff + rho_act * m`.
pub fn user_turn_reward(m: usize, rc: &RewardConfig) -> f64 {
    -rc.rho_eff + rc.rho_act * m as f64
}

/// Sum of the user's turn rewards plus the terminal reward.
pub fn user_episode_return(t: &Transcript, rc: &RewardConfig) -> f64 {
    let turns: f64 = t.turns.iter().map(|r| user_turn_reward(r.m, rc)).sum();
    let terminal = if t.is_success() { rc.success_reward } else { rc.fail_penalty };
    turns + terminal
}

fn is_bye(o: &Ontology, actions: &[SemanticAction]) -> bool {
    actions.iter().any(|a| o.user_role(&a.intent) == Some(IntentRole::Bye))
}

/// Runs one dialogue between `us` and `ds`.
pub fn run_dialogue(
    us: &mut dyn Generator,
    ds: &mut ScriptedSystem,
    goal: UserGoal,
    o: &Ontology,
    cfg: &DialogueConfig,
    rng: &mut DialogueRng,
) -> Transcript {
    ds.reset();
    let initial_goal = goal.clone();
    let mut goal = goal;
    let mut ctx = InputContext::default();
    let mut turns = Vec::new();
    let mut error = None;
    let mut ended_by_user = false;
    let mut last_user: (ActionList, String) = (Vec::new(), String::new());
    for turn in 0..cfg.max_turns {
        let system = if turn == 0 {
            ds.greet(o)
        } else {
            ds.respond(o, &last_user.0, &last_user.1, rng)
        };
        let system_text = ds.realize(o, &system);
        goal = update_on_system(&goal, &system, o, rng).0;
        let seen = goal.clone();
        let cg = ConstraintGraph::build(o, &goal, &system, cfg.max_actions);
        ctx.system_action = system.clone();
        ctx.goal = goal.clone();
        ctx.turn = turn as u32;
        let generation = match us.generate(&ctx, &cg, o, rng) {
            Ok(g) => g,
            Err(e) => {
                error = Some(e.to_string());
                turns.push(TurnRecord {
                    turn,
                    system,
                    system_text,
                    goal: seen,
                    user: Vec::new(),
                    user_text: String::new(),
                    m: 0,
                    rewards: BTreeMap::new(),
                    warnings: Vec::new(),
                    trace: None,
                });
                break;
            }
        };
        let mut warnings = generation.warnings;
        let mut user = generation.record.action;
        let violations = cg.validate_action_list(&user);
        if !violations.is_empty() {
            for v in &violations {
                warnings.push(format!("illegal user action {} ({:?})", v.action, v.kind));
            }
            let (kept, _) = crate::generator::protocol::project_onto_graph(
                &crate::action::OutputRecord::new(user, String::new()),
                &cg,
            );
            user = kept.action;
        }
        goal = update_on_user(&goal, &user, o);
        let m = user.len();
        let rewards = cfg
            .rewards
            .iter()
            .map(|(name, rc)| (name.clone(), user_turn_reward(m, rc)))
            .collect();
        ctx.push_user_turn(user.clone());
        let bye = is_bye(o, &user);
        last_user = (user.clone(), generation.record.text.clone());
        turns.push(TurnRecord {
            turn,
            system,
            system_text,
            goal: seen,
            user,
            user_text: generation.record.text,
            m,
            rewards,
            warnings,
            trace: generation.trace,
        });
        if bye {
            ended_by_user = true;
            break;
        }
    }
    let outcome = if error.is_some() {
        Outcome::Failure
    } else if is_satisfied(&goal) {
        Outcome::Success
    } else if ended_by_user {
        Outcome::Failure
    } else {
        Outcome::TurnLimit
    };
    let mut t = Transcript {
        index: 0,
        initial_goal,
        final_goal: goal,
        total_turns: turns.len(),
        turns,
        outcome,
        ds_return: 0.0,
        user_returns: BTreeMap::new(),
        error,
    };
    t.ds_return = ds_episode_return(&t);
    t.user_returns = cfg
        .rewards
        .iter()
        .map(|(name, rc)| (name.clone(), user_episode_return(&t, rc)))
        .collect();
    t
}

/// Everything needed to run dialogue `index` of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub seed: u64,
    pub goals: GoalSamplerConfig,
    pub system: ScriptedSystemConfig,
    pub dialogue: DialogueConfig,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            goals: GoalSamplerConfig::default(),
            system: ScriptedSystemConfig::default(),
            dialogue: DialogueConfig::default(),
        }
    }
}

/// Runs dialogue `index` on its own stream `(seed, index)`; the result does
/// not depend on which other dialogues run or in what order.
pub fn run_indexed(us: &mut dyn Generator, o: &Ontology, cfg: &BatchConfig, index: u64) -> Result<Transcript, HarnessError> {
    let mut rng = dialogue_rng(cfg.seed, index);
    let goal = sample_goal(o, &cfg.goals, &mut rng)?;
    let mut ds = ScriptedSystem::new(cfg.system.clone());
    let mut t = run_dialogue(us, &mut ds, goal, o, &cfg.dialogue, &mut rng);
    t.index = index;
    Ok(t)
}

/// Aggregate numbers for a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub dialogues: usize,
    pub success_rate: f64,
    pub success_ci95: (f64, f64),
    pub avg_turns: f64,
    pub avg_actions_per_turn: f64,
    pub avg_ds_return: f64,
    pub warnings: usize,
    pub errors: usize,
}

pub fn summarize(ts: &[Transcript]) -> BatchSummary {
    let n = ts.len();
    let successes = ts.iter().filter(|t| t.is_success()).count();
    let turns: Vec<f64> = ts.iter().map(|t| t.total_turns as f64).collect();
    let acts: Vec<f64> = ts.iter().flat_map(|t| t.turns.iter().map(|r| r.m as f64)).collect();
    let ds: Vec<f64> = ts.iter().map(|t| t.ds_return).collect();
    BatchSummary {
        dialogues: n,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        success_ci95: stats::wilson(successes, n).unwrap_or((0.0, 0.0)),
        avg_turns: stats::mean(&turns).unwrap_or(0.0),
        avg_actions_per_turn: stats::mean(&acts).unwrap_or(0.0),
        avg_ds_return: stats::mean(&ds).unwrap_or(0.0),
        warnings: ts.iter().map(|t| t.turns.iter().map(|r| r.warnings.len()).sum::<usize>()).sum(),
        errors: ts.iter().filter(|t| t.error.is_some()).count(),
    }
}

/// Builds a fresh user generator for each dialogue.
pub type GeneratorFactory<'a> = &'a (dyn Fn() -> Box<dyn Generator> + Sync);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalCell {
    pub successes: usize,
    pub dialogues: usize,
    pub rate: f64,
    pub ci95: (f64, f64),
}

/// Success rate of each system (rows) under each user (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalTable {
    pub systems: Vec<String>,
    pub users: Vec<String>,
    pub cells: Vec<Vec<CrossEvalCell>>,
}

impl CrossEvalTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system");
        for u in &self.users {
            out.push('\t');
            out.push_str(u);
        }
        out.push('\n');
        for (s, row) in self.systems.iter().zip(&self.cells) {
            out.push_str(s);
            for c in row {
                out.push_str(&format!("\t{:.3}", c.rate));
            }
            out.push('\n');
        }
        out
    }
}

/// Cross-model evaluation: every system under every user, `n_dialogues`
/// dialogues for each seed. Dialogue `k` of seed `s` uses the same goal in
/// every cell.
pub fn cross_eval(
    systems: &[(String, ScriptedSystemConfig)],
    users: &[(String, GeneratorFactory<'_>)],
    n_dialogues: usize,
    seeds: &[u64],
    o: &Ontology,
    base: &BatchConfig,
) -> Result<CrossEvalTable, HarnessError> {
    if n_dialogues == 0 || seeds.is_empty() {
        return Err(HarnessError::NoDialogues);
    }
    if systems.is_empty() || users.is_empty() {
        return Err(HarnessError::EmptyMatrix);
    }
    let mut cells = Vec::new();
    for (_, sys) in systems {
        sys.validate()?;
        let mut row = Vec::new();
        for (_, make) in users {
            let mut successes = 0;
            let mut total = 0;
            for &seed in seeds {
                let cfg = BatchConfig {
                    seed,
                    system: sys.clone(),
                    ..base.clone()
                };
                for k in 0..n_dialogues as u64 {
                    let mut us = make();
                    let t = run_indexed(us.as_mut(), o, &cfg, k)?;
                    successes += t.is_success() as usize;
                    total += 1;
                }
            }
            row.push(CrossEvalCell {
                successes,
                dialogues: total,
                rate: successes as f64 / total as f64,
                ci95: stats::wilson(successes, total).expect("total > 0"),
            });
        }
        cells.push(row);
    }
    Ok(CrossEvalTable {
        systems: systems.iter().map(|(n, _)| n.clone()).collect(),
        users: users.iter().map(|(n, _)| n.clone()).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{RuleConfig, RuleGenerator};
    use crate::goal::GoalEntry;
    use crate::ontology::load_ontology;
    use alloc::vec;

    const MULTIWOZ: &str = include_str!("../../../data/ontology/multiwoz.json");

    fn rule() -> RuleGenerator {
        RuleGenerator::default()
    }

    #[test]
    fn perfect_system_succeeds() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let cfg = BatchConfig::default();
        for i in 0..100 {
            let t = run_indexed(&mut rule(), &o, &cfg, i).unwrap();
            assert!(t.is_success(), "dialogue {i}: {:?}", t);
            assert!(t.total_turns <= 40);
        }
    }

    #[test]
    fn deaf_system_never_succeeds() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let cfg = BatchConfig {
            system: ScriptedSystemConfig { p_understand: 0.0, ..Default::default() },
            ..Default::default()
        };
        for i in 0..50 {
            let t = run_indexed(&mut rule(), &o, &cfg, i).unwrap();
            assert!(!t.is_success());
        }
    }

    #[test]
    fn one_turn_cap() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let mut cfg = BatchConfig::default();
        cfg.dialogue.max_turns = 1;
        let t = run_indexed(&mut rule(), &o, &cfg, 0).unwrap();
        assert_eq!(t.turns.len(), 1);
        assert_eq!(t.outcome, Outcome::TurnLimit);
        assert_eq!(t.ds_return, -41.0);
    }

    #[test]
    fn returns() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let mut ds = ScriptedSystem::new(ScriptedSystemConfig::default());
        let t = run_dialogue(&mut rule(), &mut ds, UserGoal::empty(), &o, &DialogueConfig::default(), &mut dialogue_rng(0, 0));
        assert!(t.is_success());
        assert_eq!(t.total_turns, 1);
        assert_eq!(ds_episode_return(&t), 79.0);
        assert_eq!(user_turn_reward(2, &RewardConfig::r2()), 30.0);
        assert_eq!(user_turn_reward(1, &RewardConfig::r1()), -5.0);
        assert_eq!(user_turn_reward(0, &RewardConfig::r2()), -10.0);
    }

    #[test]
    fn reproducible_transcripts() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let cfg = BatchConfig {
            system: ScriptedSystemConfig { p_understand: 0.7, failure_rate: 0.2, ..Default::default() },
            ..Default::default()
        };
        for i in 0..20 {
            let a = run_indexed(&mut rule(), &o, &cfg, i).unwrap();
            let b = run_indexed(&mut rule(), &o, &cfg, i).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }

    #[test]
    fn failure_leads_to_reinform() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let goal = UserGoal::new(vec![
            GoalEntry::new("hotel", GoalKind::Info, "area", "north").unwrap(),
            GoalEntry::request("hotel", "phone"),
        ])
        .unwrap();
        let mut ds = ScriptedSystem::new(ScriptedSystemConfig { failure_rate: 0.5, request_depth: 0, ..Default::default() });
        let mut us = RuleGenerator::new(RuleConfig::single(), TemplateTable::builtin());
        let mut saw_failure = false;
        for seed in 0..20 {
            let t = run_dialogue(&mut us, &mut ds, goal.clone(), &o, &DialogueConfig::default(), &mut dialogue_rng(seed, 0));
            for w in t.turns.windows(2) {
                if w[1].system.iter().any(|a| a.intent == "nooffer") {
                    saw_failure = true;
                    let replaced = w[1].goal.entries()[0].value().to_string();
                    assert_ne!(replaced, w[0].goal.entries()[0].value());
                    assert_eq!(w[1].user[0], SemanticAction::new("inform", "hotel", "area", &replaced));
                }
            }
        }
        assert!(saw_failure);
    }

    #[test]
    fn cross_eval_shape() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let make: &(dyn Fn() -> Box<dyn Generator> + Sync) = &|| Box::new(RuleGenerator::default());
        let systems = vec![
            ("a".to_string(), ScriptedSystemConfig::default()),
            ("b".to_string(), ScriptedSystemConfig { p_understand: 0.5, ..Default::default() }),
            ("c".to_string(), ScriptedSystemConfig { failure_rate: 0.3, ..Default::default() }),
        ];
        let users = vec![("u1".to_string(), make), ("u2".to_string(), make), ("u3".to_string(), make)];
        let table = cross_eval(&systems, &users, 5, &[1], &o, &BatchConfig::default()).unwrap();
        assert_eq!(table.cells.len(), 3);
        assert!(table.cells.iter().all(|r| r.len() == 3));
        // identical users give identical rows under a fixed seed
        assert!(table.cells.iter().all(|r| r[0] == r[1] && r[1] == r[2]));
        assert_eq!(table.to_tsv().lines().count(), 4);
        assert!(matches!(cross_eval(&systems, &users, 0, &[1], &o, &BatchConfig::default()), Err(HarnessError::NoDialogues)));
    }
}
