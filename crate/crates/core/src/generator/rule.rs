//! Agenda-style reference policy.
//!
//! Order of business each turn:
//!
//! 1. answer every slot the system asked for (goal value, else `dontcare`);
//! 2. re-inform entries in conflict, and entries whose value was just replaced
//!    after a system failure;
//! 3. inform not-mentioned info/book entries in priority order;
//! 4. request not-mentioned reqt entries in priority order;
//! 5. if nothing was chosen, repeat the highest-priority unfulfilled entry;
//! 6. otherwise say bye.
//!
//! Steps 1 and 2 are always emitted; steps 3 and 4 fill up to a length drawn
//! from [`RuleConfig::act_weights`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::realize::{realize, Speaker, TemplateTable};
use super::{Generation, Generator, GeneratorError};
use crate::action::{ActionList, InputContext, OutputRecord, SemanticAction, DONTCARE, GENERAL_DOMAIN, NONE, REQUESTED};
use crate::decoder::ConstraintGraph;
use crate::goal::{GoalKind, GoalStatus, UserGoal};
use crate::ontology::{IntentRole, Ontology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    /// Relative weight of emitting 1, 2, ... agenda actions per turn.
    pub act_weights: Vec<f64>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            act_weights: vec![0.7, 0.25, 0.05],
        }
    }
}

impl RuleConfig {
    /// Always one agenda action per turn.
    pub fn single() -> Self {
        Self {
            act_weights: vec![1.0],
        }
    }

    fn draw_len<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total: f64 = self.act_weights.iter().filter(|w| **w > 0.0).sum();
        if total <= 0.0 {
            return 1;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, w) in self.act_weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            if u < *w {
                return i + 1;
            }
            u -= w;
        }
        self.act_weights.len()
    }
}

fn inform_intent(o: &Ontology) -> Option<&str> {
    o.first_user_intent(IntentRole::Inform)
}

fn request_intent(o: &Ontology) -> Option<&str> {
    o.first_user_intent(IntentRole::Request)
}

/// One turn of the agenda policy. The result always validates against `cg`.
pub fn rule_policy_step<R: Rng + ?Sized>(
    g: &UserGoal,
    a_sys: &[SemanticAction],
    cg: &ConstraintGraph,
    o: &Ontology,
    cfg: &RuleConfig,
    rng: &mut R,
) -> ActionList {
    let mut out: ActionList = Vec::new();
    let cap = cg.max_actions();
    let push = |a: SemanticAction, out: &mut ActionList| {
        if out.len() < cap && cg.contains(&a) && !out.contains(&a) {
            out.push(a);
        }
    };
    let (inform, request) = (inform_intent(o), request_intent(o));

    if let Some(inform) = inform {
        for a in a_sys {
            if o.system_role(&a.intent) != Some(IntentRole::Request) || a.slot == NONE {
                continue;
            }
            let value = g
                .constraint(&a.domain, &a.slot)
                .map(|e| String::from(e.value()))
                .unwrap_or_else(|| String::from(DONTCARE));
            push(SemanticAction::new(inform, &a.domain, &a.slot, value), &mut out);
        }
        let failed: Vec<&str> = a_sys
            .iter()
            .filter(|a| o.system_role(&a.intent).is_some_and(|r| r.is_failure()))
            .map(|a| a.domain.as_str())
            .collect();
        for e in g.entries() {
            let replaced = e.status() == GoalStatus::NotMentioned && failed.contains(&e.domain());
            if e.kind().is_constraint() && (e.status() == GoalStatus::Conflict || replaced) {
                push(SemanticAction::new(inform, e.domain(), e.slot(), e.value()), &mut out);
            }
        }
    }

    let target = cfg.draw_len(rng).max(out.len());
    let agenda = g
        .entries()
        .iter()
        .filter(|e| e.kind().is_constraint() && e.status() == GoalStatus::NotMentioned)
        .filter_map(|e| inform.map(|i| SemanticAction::new(i, e.domain(), e.slot(), e.value())))
        .chain(
            g.entries()
                .iter()
                .filter(|e| e.kind() == GoalKind::Reqt && e.status() == GoalStatus::NotMentioned)
                .filter_map(|e| request.map(|r| SemanticAction::new(r, e.domain(), e.slot(), REQUESTED))),
        );
    for a in agenda {
        if out.len() >= target {
            break;
        }
        push(a, &mut out);
    }

    if out.is_empty() {
        let pending = g.entries().iter().find(|e| e.status() != GoalStatus::Fulfilled);
        if let Some(e) = pending {
            let a = if e.kind() == GoalKind::Reqt {
                request.map(|r| SemanticAction::new(r, e.domain(), e.slot(), REQUESTED))
            } else {
                inform.map(|i| SemanticAction::new(i, e.domain(), e.slot(), e.value()))
            };
            if let Some(a) = a {
                push(a, &mut out);
            }
        }
    }

    if out.is_empty() {
        if let Some(bye) = o.first_user_intent(IntentRole::Bye) {
            push(SemanticAction::new(bye, GENERAL_DOMAIN, NONE, NONE), &mut out);
        }
    }
    out
}

/// Rule policy plus template realizer.
#[derive(Clone, Debug)]
pub struct RuleGenerator {
    pub config: RuleConfig,
    pub templates: TemplateTable,
}

impl RuleGenerator {
    pub fn new(config: RuleConfig, templates: TemplateTable) -> Self {
        Self { config, templates }
    }
}

impl Default for RuleGenerator {
    fn default() -> Self {
        Self::new(RuleConfig::default(), TemplateTable::builtin())
    }
}

impl Generator for RuleGenerator {
    fn name(&self) -> &str {
        "rule"
    }

    fn generate(
        &mut self,
        ctx: &InputContext,
        cg: &ConstraintGraph,
        o: &Ontology,
        rng: &mut dyn RngCore,
    ) -> Result<Generation, GeneratorError> {
        let action = rule_policy_step(&ctx.goal, &ctx.system_action, cg, o, &self.config, rng);
        let text = realize(&self.templates, &action, Speaker::User, o);
        Ok(Generation::new(OutputRecord::new(action, text)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::build_graph;
    use crate::goal::{update_on_system, GoalEntry};
    use crate::ontology::load_ontology;
    use crate::rng::dialogue_rng;

    const MULTIWOZ: &str = include_str!("../../../../data/ontology/multiwoz.json");

    fn act(i: &str, d: &str, s: &str, v: &str) -> SemanticAction {
        SemanticAction::new(i, d, s, v)
    }

    fn appendix_goal() -> UserGoal {
        UserGoal::new(vec![
            GoalEntry::new("attraction", GoalKind::Info, "type", "college").unwrap(),
            GoalEntry::request("attraction", "postcode"),
            GoalEntry::request("attraction", "entrance fee"),
            GoalEntry::new("hotel", GoalKind::Info, "area", "north").unwrap(),
            GoalEntry::new("hotel", GoalKind::Info, "stars", "0").unwrap(),
            GoalEntry::request("hotel", "parking"),
            GoalEntry::new("taxi", GoalKind::Info, "arrive", "13:00").unwrap(),
            GoalEntry::request("taxi", "phone"),
            GoalEntry::request("taxi", "car type"),
        ])
        .unwrap()
    }

    fn step(g: &UserGoal, sys: &[SemanticAction], o: &Ontology, seed: u64) -> ActionList {
        let cg = build_graph(o, g, sys);
        rule_policy_step(g, sys, &cg, o, &RuleConfig::single(), &mut dialogue_rng(seed, 0))
    }

    #[test]
    fn first_turn_informs_top_priority() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let g = appendix_goal();
        assert_eq!(step(&g, &[], &o, 1), vec![act("inform", "attraction", "type", "college")]);
    }

    #[test]
    fn answers_requests_with_dontcare() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let g = appendix_goal();
        let sys = [act("request", "hotel", "price", "?")];
        let out = step(&g, &sys, &o, 1);
        assert_eq!(out[0], act("inform", "hotel", "price", "dontcare"));
    }

    #[test]
    fn reinforms_after_nooffer() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let g = UserGoal::new(vec![
            GoalEntry::new("hotel", GoalKind::Info, "area", "north").unwrap(),
            GoalEntry::new("restaurant", GoalKind::Info, "food", "thai").unwrap(),
        ])
        .unwrap();
        let mut rng = dialogue_rng(4, 4);
        let (g, _) = update_on_system(&g, &[act("inform", "hotel", "area", "north")], &o, &mut rng);
        let sys = [act("nooffer", "hotel", "none", "none")];
        let (g, _) = update_on_system(&g, &sys, &o, &mut rng);
        let new_area = g.entries()[0].value().to_string();
        assert_ne!(new_area, "north");
        let out = step(&g, &sys, &o, 2);
        assert_eq!(out, vec![act("inform", "hotel", "area", &new_area)]);
    }

    #[test]
    fn bye_when_done() {
        let o = load_ontology(MULTIWOZ).unwrap();
        assert_eq!(step(&UserGoal::empty(), &[], &o, 0), vec![act("bye", "general", "none", "none")]);
        let g = UserGoal::new(vec![GoalEntry::new("hotel", GoalKind::Info, "area", "north").unwrap()]).unwrap();
        let (g, _) = update_on_system(&g, &[act("inform", "hotel", "area", "north")], &o, &mut dialogue_rng(0, 0));
        assert_eq!(step(&g, &[], &o, 0), vec![act("bye", "general", "none", "none")]);
    }

    #[test]
    fn reproducible() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let g = appendix_goal();
        let cg = build_graph(&o, &g, &[]);
        let cfg = RuleConfig::default();
        for seed in 0..20 {
            let a = rule_policy_step(&g, &[], &cg, &o, &cfg, &mut dialogue_rng(seed, 1));
            let b = rule_policy_step(&g, &[], &cg, &o, &cfg, &mut dialogue_rng(seed, 1));
            assert_eq!(a, b);
            assert!(cg.is_legal(&a));
        }
    }
}
