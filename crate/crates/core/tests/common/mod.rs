//! Helpers shared by the graph property tests and the acceptance target.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;

use todsim_core::generator::stochastic::{Choice, PolicyTrace, N_FEATURES};
use todsim_core::generator::PolicyParameters;
use todsim_core::goal::{sample_goal, CountRange};
use todsim_core::harness::{Outcome, Transcript, TurnRecord};
use todsim_core::ontology::load_ontology;
use todsim_core::rl::Step;
use todsim_core::{dialogue_rng, ConstraintGraph, GoalSamplerConfig, IntentRole, Ontology, SemanticAction, UserGoal};

pub const MULTIWOZ: &str = include_str!("../../../../data/ontology/multiwoz.json");
pub const SGD: &str = include_str!("../../../../data/ontology/sgd.json");

pub const MAX_GOAL_ENTRIES: usize = 12;

pub fn multiwoz() -> Ontology {
    load_ontology(MULTIWOZ).unwrap()
}

pub fn sgd() -> Ontology {
    load_ontology(SGD).unwrap()
}

/// Goal with at most [`MAX_GOAL_ENTRIES`] entries.
pub fn random_goal<R: Rng>(o: &Ontology, rng: &mut R) -> UserGoal {
    let cfg = GoalSamplerConfig {
        domains: CountRange::new(1, 3),
        info: CountRange::new(1, 3),
        reqt: CountRange::new(0, 2),
        book: CountRange::new(0, 2),
    };
    loop {
        let g = sample_goal(o, &cfg, rng).unwrap();
        if g.len() <= MAX_GOAL_ENTRIES {
            return g;
        }
    }
}

/// Up to three system actions, biased towards the goal's domains.
pub fn random_system_actions<R: Rng>(o: &Ontology, g: &UserGoal, rng: &mut R) -> Vec<SemanticAction> {
    let n = rng.random_range(0..=3);
    let goal_domains: Vec<&str> = g.entries().iter().map(|e| e.domain()).collect();
    let all_domains: Vec<&str> = o.domains().keys().map(String::as_str).collect();
    (0..n)
        .map(|_| {
            let spec = o.system_intents().choose(rng).unwrap();
            if spec.role.is_general() {
                return SemanticAction::general(spec.name.clone());
            }
            let pool = if rng.random_bool(0.8) { &goal_domains } else { &all_domains };
            let d = *pool.choose(rng).unwrap();
            let schema = o.domain(d).unwrap();
            let (s, slot) = schema.slots.iter().nth(rng.random_range(0..schema.slots.len())).unwrap();
            let value = match spec.role {
                IntentRole::Request => "?".to_string(),
                _ => slot.sampling_pool().choose(rng).cloned().unwrap_or_else(|| "none".to_string()),
            };
            SemanticAction::new(spec.name.clone(), d, s.clone(), value)
        })
        .collect()
}

/// Actions near the graph: its own paths plus single-field corruptions.
fn probe_pool<R: Rng>(cg: &ConstraintGraph, o: &Ontology, rng: &mut R) -> Vec<SemanticAction> {
    let paths = cg.paths();
    let mut pool = paths.clone();
    let domains: Vec<&String> = o.domains().keys().collect();
    for p in paths.iter().take(30) {
        let mut a = p.clone();
        match rng.random_range(0..4) {
            0 => a.intent = o.user_intents().map(|i| i.name.clone()).collect::<Vec<_>>().choose(rng).unwrap().clone(),
            1 => a.domain = (*domains.choose(rng).unwrap()).clone(),
            2 => a.slot.push('x'),
            _ => a.value = "not-a-value".into(),
        }
        pool.push(a);
    }
    pool
}

/// Largest list length whose full enumeration stays small.
fn enumeration_depth(cg: &ConstraintGraph) -> usize {
    (1..=cg.max_actions()).rev().find(|&k| cg.count_legal(k) <= 20_000).unwrap_or(1)
}

/// Number of probe lists on which `validate_action_list` and membership in
/// `enumerate_legal` disagree. Probes include over-long lists and
/// duplicates.
pub fn membership_discrepancies<R: Rng>(o: &Ontology, g: &UserGoal, a_sys: &[SemanticAction], probes: usize, rng: &mut R) -> usize {
    let full = ConstraintGraph::build(o, g, a_sys, 5);
    let depth = enumeration_depth(&full);
    let cg = ConstraintGraph::build(o, g, a_sys, depth);
    let legal: HashSet<Vec<SemanticAction>> = cg.enumerate_legal(depth).unwrap().into_iter().collect();
    let mut bad = legal.iter().filter(|l| !cg.is_legal(l)).count();
    let pool = probe_pool(&cg, o, rng);
    for _ in 0..probes {
        let len = rng.random_range(0..=depth + 1);
        let mut l: Vec<SemanticAction> = (0..len).map(|_| pool.choose(rng).unwrap().clone()).collect();
        if rng.random_bool(0.1) && !l.is_empty() {
            l.push(l[0].clone());
        }
        if cg.is_legal(&l) != legal.contains(&l) {
            bad += 1;
        }
    }
    bad
}

/// Walks the prefix mask over the canonical serialization of `actions`.
/// Returns whether every field was admitted.
pub fn mask_admits(cg: &ConstraintGraph, actions: &[SemanticAction]) -> bool {
    let s = todsim_core::serialize_output(&todsim_core::OutputRecord::new(actions.to_vec(), "ok"));
    let mut pos = 0;
    loop {
        let options = match cg.prefix_mask(&s[..pos]) {
            Ok(o) => o,
            Err(_) => return false,
        };
        if options.is_empty() {
            return true;
        }
        match options.iter().find(|o| s[pos..].starts_with(o.as_str())) {
            Some(o) => pos += o.len(),
            None => return false,
        }
    }
}

pub fn transcript(ms: &[usize], outcome: Outcome) -> Transcript {
    let turns = ms
        .iter()
        .enumerate()
        .map(|(i, &m)| TurnRecord {
            turn: i,
            system: vec![],
            system_text: String::new(),
            goal: UserGoal::empty(),
            user: vec![],
            user_text: String::new(),
            m,
            rewards: BTreeMap::new(),
            warnings: vec![],
            trace: None,
        })
        .collect();
    Transcript {
        index: 0,
        initial_goal: UserGoal::empty(),
        final_goal: UserGoal::empty(),
        turns,
        outcome,
        total_turns: ms.len(),
        ds_return: 0.0,
        user_returns: BTreeMap::new(),
        error: None,
    }
}

use Outcome::{Failure as F, Success as S, TurnLimit as L};

/// `(m per turn, outcome, ds return, r1 return, r2 return)`, worked by hand:
/// ds = -turns + (80 | -40), r1 turn = -5m, r2 turn = -10 + 20m, terminal
/// +80 on success and -40 otherwise.
pub const REWARD_CASES: [(&[usize], Outcome, f64, f64, f64); 20] = [
    (&[1], S, 79.0, 75.0, 90.0),
    (&[2], S, 79.0, 70.0, 110.0),
    (&[1, 2, 1], S, 77.0, 60.0, 130.0),
    (&[1, 1, 1, 1], S, 76.0, 60.0, 120.0),
    (&[3, 3], S, 78.0, 50.0, 180.0),
    (&[0, 1], S, 78.0, 75.0, 80.0),
    (&[5], S, 79.0, 55.0, 170.0),
    (&[2, 2, 2, 2, 2], S, 75.0, 30.0, 230.0),
    (&[1, 0, 0, 1], S, 76.0, 70.0, 80.0),
    (&[4, 1, 2], S, 77.0, 45.0, 190.0),
    (&[1], F, -41.0, -45.0, -30.0),
    (&[2, 1], F, -42.0, -55.0, 0.0),
    (&[0, 0, 0], F, -43.0, -40.0, -70.0),
    (&[3], F, -41.0, -55.0, 10.0),
    (&[1, 1, 1, 1, 1, 1], F, -46.0, -70.0, 20.0),
    (&[2, 2], L, -42.0, -60.0, 20.0),
    (&[1, 1, 1], L, -43.0, -55.0, -10.0),
    (&[5, 5, 5, 5], L, -44.0, -140.0, 320.0),
    (&[], F, -40.0, -40.0, -40.0),
    (&[], S, 80.0, 80.0, 80.0),
];

/// Synthetic PPO steps over random choice sets, with `old_log_prob` taken
/// under `params`.
pub fn random_steps(seed: u64, n: usize, params: &PolicyParameters) -> Vec<Step> {
    let mut rng = dialogue_rng(seed, 0);
    (0..n)
        .map(|_| {
            let choices = (0..rng.random_range(1..4))
                .map(|_| {
                    let k = rng.random_range(2..6);
                    let features = (0..k)
                        .map(|_| core::array::from_fn(|_| if rng.random_bool(0.3) { rng.random_range(-1.0..1.0) } else { 0.0 }))
                        .collect::<Vec<[f64; N_FEATURES]>>();
                    Choice {
                        chosen: rng.random_range(0..k),
                        features,
                    }
                })
                .collect();
            let trace = PolicyTrace { choices };
            Step {
                old_log_prob: trace.log_prob(params),
                trace,
                reward: 0.0,
                discounted_return: 0.0,
                advantage: rng.random_range(-2.0..2.0),
            }
        })
        .collect()
}

pub fn perturbed(p: &PolicyParameters, seed: u64, scale: f64) -> PolicyParameters {
    let mut rng = dialogue_rng(seed, 1);
    let mut q = p.clone();
    q.weights.iter_mut().for_each(|w| *w += rng.random_range(-scale..scale));
    q
}

/// `||analytic - finite difference|| / ||analytic||` of the surrogate
/// gradient on a synthetic batch, evaluated near the sampling policy.
pub fn gradient_relative_error(seed: u64) -> f64 {
    use todsim_core::rl::surrogate_and_grad;
    let old = perturbed(&PolicyParameters::zeros(), seed, 1.0);
    let steps = random_steps(seed, 40, &old);
    let at = perturbed(&old, seed + 100, 0.05);
    let (_, g) = surrogate_and_grad(&steps, &at, 0.2, 0.01);
    let h = 1e-6;
    let fd: Vec<f64> = (0..N_FEATURES)
        .map(|j| {
            let (mut up, mut down) = (at.clone(), at.clone());
            up.weights[j] += h;
            down.weights[j] -= h;
            (surrogate_and_grad(&steps, &up, 0.2, 0.01).0 - surrogate_and_grad(&steps, &down, 0.2, 0.01).0) / (2.0 * h)
        })
        .collect();
    let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

/// Gap between the surrogate with a huge clip range and `mean(ratio * A)`
/// computed directly.
pub fn unclipped_surrogate_gap(seed: u64) -> f64 {
    use todsim_core::rl::surrogate_and_grad;
    let old = perturbed(&PolicyParameters::zeros(), seed, 1.0);
    let steps = random_steps(seed, 50, &old);
    let at = perturbed(&old, seed + 1, 0.8);
    let vanilla: f64 = steps
        .iter()
        .map(|s| (s.trace.log_prob(&at) - s.old_log_prob).exp() * s.advantage)
        .sum::<f64>()
        / steps.len() as f64;
    let (clipped, _) = surrogate_and_grad(&steps, &at, 1e12, 0.0);
    (clipped - vanilla).abs()
}

/// Whether a PPO update on a zero-advantage batch (no entropy bonus) leaves
/// the parameters bit-identical.
pub fn zero_advantage_is_a_no_op(seed: u64) -> bool {
    use todsim_core::rl::{ppo_update, PpoConfig};
    let init = PolicyParameters::rule_like();
    let mut steps = random_steps(seed, 30, &init);
    steps.iter_mut().for_each(|s| s.advantage = 0.0);
    let mut p = init.clone();
    let cfg = PpoConfig {
        entropy_coef: 0.0,
        ..Default::default()
    };
    ppo_update(&mut p, &steps, &cfg).is_ok() && p == init
}

pub fn act(i: &str, d: &str, s: &str, v: &str) -> SemanticAction {
    SemanticAction::new(i, d, s, v)
}

/// Hotel in the north with two stars and its address wanted, plus a taxi
/// leaving at 8:00. Graphs at turn 0 (nothing said yet) and turn 1 (user
/// gave the area, system asked for the price range).
pub fn hotel_taxi_trace() -> (ConstraintGraph, ConstraintGraph) {
    use todsim_core::decoder::build_graph;
    use todsim_core::goal::{update_on_system, update_on_user};
    use todsim_core::{GoalEntry, GoalKind};
    let o = multiwoz();
    let g0 = UserGoal::new(vec![
        GoalEntry::new("hotel", GoalKind::Info, "area", "north").unwrap(),
        GoalEntry::new("hotel", GoalKind::Info, "stars", "2").unwrap(),
        GoalEntry::request("hotel", "addr"),
        GoalEntry::new("taxi", GoalKind::Info, "leave", "8:00").unwrap(),
    ])
    .unwrap();
    let turn0 = build_graph(&o, &g0, &[]);
    let g1 = update_on_user(&g0, &[act("inform", "hotel", "area", "north")], &o);
    let sys = [act("request", "hotel", "price", "?")];
    let (g1, _) = update_on_system(&g1, &sys, &o, &mut dialogue_rng(0, 0));
    (turn0, build_graph(&o, &g1, &sys))
}

pub const TRACE_TURN0: &str = include_str!("../golden/trace_turn0.tsv");
pub const TRACE_TURN1: &str = include_str!("../golden/trace_turn1.tsv");

/// Every trace assertion; returns the first failure.
pub fn check_hotel_taxi_trace() -> Result<(), String> {
    let (t0, t1) = hotel_taxi_trace();
    if t0.dump() != TRACE_TURN0 {
        return Err("turn 0 dump differs from golden".into());
    }
    if t1.dump() != TRACE_TURN1 {
        return Err("turn 1 dump differs from golden".into());
    }
    if !t0.is_legal(&[act("inform", "hotel", "area", "north")]) {
        return Err("turn 0 rejects the area inform".into());
    }
    if !t1.is_legal(&[act("request", "hotel", "addr", "?"), act("inform", "taxi", "leave", "8:00")]) {
        return Err("turn 1 rejects the address request plus taxi inform".into());
    }
    for v in ["cheap", "moderate", "expensive", "dontcare"] {
        let a = act("inform", "hotel", "price", v);
        if t0.contains(&a) {
            return Err(format!("{a} admitted before the request"));
        }
        if t1.provenance(&a) != Some(todsim_core::Provenance::SystemInserted) {
            return Err(format!("{a} not inserted by the request"));
        }
    }
    Ok(())
}

fn random_field<R: Rng>(rng: &mut R) -> String {
    const ALPHABET: &[char] = &['a', 'z', 'Q', '0', '9', ' ', ':', '?', '"', '\\', '/', '\n', '\t', 'é', '…', '\u{1}'];
    let n = rng.random_range(1..8);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn random_actions<R: Rng>(rng: &mut R) -> Vec<SemanticAction> {
    (0..rng.random_range(0..5))
        .map(|_| SemanticAction::new(random_field(rng), random_field(rng), random_field(rng), random_field(rng)))
        .collect()
}

pub fn random_context<R: Rng>(rng: &mut R) -> todsim_core::InputContext {
    use todsim_core::{GoalEntry, GoalKind, GoalStatus};
    let kinds = [GoalKind::Info, GoalKind::Reqt, GoalKind::Book];
    let statuses = [GoalStatus::NotMentioned, GoalStatus::Fulfilled, GoalStatus::Conflict, GoalStatus::Requested];
    let goal = loop {
        let entries = (0..rng.random_range(0..6))
            .map(|_| {
                let kind = *kinds.choose(rng).unwrap();
                let value = if kind == GoalKind::Reqt { "?".to_string() } else { format!("v{}", random_field(rng)) };
                GoalEntry::restore(random_field(rng), kind, random_field(rng), value, *statuses.choose(rng).unwrap()).unwrap()
            })
            .collect();
        if let Ok(g) = UserGoal::new(entries) {
            break g;
        }
    };
    let history = (0..rng.random_range(0..=3)).map(|_| random_actions(rng)).collect();
    todsim_core::InputContext::new(random_actions(rng), history, goal, rng.random_range(0..50))
}

pub fn random_record<R: Rng>(rng: &mut R) -> todsim_core::OutputRecord {
    let text: String = (0..rng.random_range(0..4)).map(|_| random_field(rng)).collect();
    todsim_core::OutputRecord::new(random_actions(rng), text)
}

/// Byte-level round trips of `n` random inputs and outputs through the
/// strict parser; returns the number of mismatches.
pub fn round_trip_failures(n: usize, seed: u64) -> usize {
    use todsim_core::{parse_input, parse_output, serialize_input, serialize_output, ParseMode};
    let mut rng = dialogue_rng(seed, 0);
    let mut bad = 0;
    for _ in 0..n {
        let ctx = random_context(&mut rng);
        let s = serialize_input(&ctx);
        if !matches!(parse_input(&s, ParseMode::Strict), Ok(back) if back == ctx && serialize_input(&back) == s) {
            bad += 1;
        }
        let rec = random_record(&mut rng);
        let s = serialize_output(&rec);
        if !matches!(parse_output(&s, ParseMode::Strict), Ok(back) if back == rec && serialize_output(&back) == s) {
            bad += 1;
        }
    }
    bad
}
