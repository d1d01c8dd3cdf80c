//! The per-turn constraint graph.
//!
//! Every root-to-leaf path `intent -> domain -> slot -> value` of the graph is
//! a legal user action for the current turn. Paths come from three sources:
//!
//! * the user goal: inform paths for unfulfilled info/book entries, request
//!   paths (value `?`) for unfulfilled reqt entries;
//! * the current system action: a system request for a slot inserts inform
//!   options for it (the goal value if the goal has one, else the closed
//!   vocabulary plus `dontcare`), and select-role offers insert the offered
//!   values;
//! * the ontology: general intents get the single path
//!   `(general, none, none)`, other-role intents get `(domain, none, none)`
//!   for every domain in play.
//!
//! An action list is legal when each action is a path, no action repeats and
//! the list has at most `max_actions` entries. The empty list is legal.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::action::{SemanticAction, DONTCARE, GENERAL_DOMAIN, NONE, REQUESTED};
use crate::goal::{GoalKind, GoalStatus, UserGoal};
use crate::ontology::{IntentRole, Ontology};

pub const DEFAULT_MAX_ACTIONS: usize = 5;

/// Upper bound on the number of lists [`ConstraintGraph::enumerate_legal`]
/// will produce.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Goal,
    SystemInserted,
    Ontology,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Goal => "goal",
            Provenance::SystemInserted => "system_inserted",
            Provenance::Ontology => "ontology",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct ValueNode {
    value: String,
    provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct SlotNode {
    name: String,
    values: Vec<ValueNode>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct DomainNode {
    name: String,
    slots: Vec<SlotNode>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct IntentNode {
    name: String,
    role: IntentRole,
    domains: Vec<DomainNode>,
}

fn child<'a, T>(items: &'a mut Vec<T>, key: &str, name: fn(&T) -> &str, make: impl FnOnce() -> T) -> &'a mut T {
    match items.iter().position(|n| name(n) == key) {
        Some(i) => &mut items[i],
        None => {
            items.push(make());
            items.last_mut().expect("just pushed")
        }
    }
}

impl IntentNode {
    fn insert(&mut self, domain: &str, slot: &str, value: &str, provenance: Provenance) {
        let d = child(&mut self.domains, domain, |n| &n.name, || DomainNode {
            name: domain.to_string(),
            slots: Vec::new(),
        });
        let s = child(&mut d.slots, slot, |n| &n.name, || SlotNode {
            name: slot.to_string(),
            values: Vec::new(),
        });
        if !s.values.iter().any(|v| v.value == value) {
            s.values.push(ValueNode {
                value: value.to_string(),
                provenance,
            });
        }
    }
}

/// Position inside the action being decoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position<'a> {
    /// Between actions: continue with another action or stop.
    Boundary,
    Intent,
    Domain { intent: &'a str },
    Slot { intent: &'a str, domain: &'a str },
    Value { intent: &'a str, domain: &'a str, slot: &'a str },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuation {
    Field(String),
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownIntent,
    IllegalDomain,
    IllegalSlot,
    IllegalValue,
    Duplicate,
    OverLength,
}

/// One reason an action list is not legal, with the offending tuple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: usize,
    pub action: SemanticAction,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("partial list is not a legal prefix ({} violation(s))", .0.len())]
    IllegalPrefix(Vec<Violation>),
    #[error("no path through `{0}` at this position")]
    DeadEnd(String),
    #[error("partial list already has the maximum of {0} actions")]
    Full(usize),
    #[error("{count} action lists exceed the enumeration limit")]
    Explosion { count: u64 },
    #[error("unparseable prefix at byte {offset}")]
    Prefix { offset: usize },
}

/// Legal user actions for one turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintGraph {
    intents: Vec<IntentNode>,
    max_actions: usize,
}

/// Builds the graph with the default action cap.
pub fn build_graph(o: &Ontology, g: &UserGoal, a_sys: &[SemanticAction]) -> ConstraintGraph {
    ConstraintGraph::build(o, g, a_sys, DEFAULT_MAX_ACTIONS)
}

impl ConstraintGraph {
    pub fn build(o: &Ontology, g: &UserGoal, a_sys: &[SemanticAction], max_actions: usize) -> Self {
        let requested: Vec<(&str, &str)> = a_sys
            .iter()
            .filter(|a| o.system_role(&a.intent) == Some(IntentRole::Request) && a.slot != NONE)
            .map(|a| (a.domain.as_str(), a.slot.as_str()))
            .collect();
        let mut in_play: Vec<&str> = Vec::new();
        for d in g
            .entries()
            .iter()
            .map(|e| e.domain())
            .chain(a_sys.iter().map(|a| a.domain.as_str()))
        {
            if o.domain(d).is_ok() && !in_play.contains(&d) {
                in_play.push(d);
            }
        }

        let mut intents = Vec::new();
        for spec in o.user_intents() {
            let mut node = IntentNode {
                name: spec.name.clone(),
                role: spec.role,
                domains: Vec::new(),
            };
            match spec.role {
                IntentRole::General | IntentRole::Bye => {
                    node.insert(GENERAL_DOMAIN, NONE, NONE, Provenance::Ontology)
                }
                IntentRole::Inform => {
                    for e in g.entries() {
                        let asked = requested.contains(&(e.domain(), e.slot()));
                        if e.kind().is_constraint() && (e.status() != GoalStatus::Fulfilled || asked) {
                            node.insert(e.domain(), e.slot(), e.value(), Provenance::Goal);
                        }
                    }
                    for &(d, s) in &requested {
                        insert_requested(&mut node, o, g, d, s);
                    }
                    for a in a_sys {
                        if o.system_role(&a.intent) == Some(IntentRole::Select) {
                            insert_selectable(&mut node, o, a);
                        }
                    }
                }
                IntentRole::Request => {
                    for e in g.entries() {
                        if e.kind() == GoalKind::Reqt && e.status() != GoalStatus::Fulfilled {
                            node.insert(e.domain(), e.slot(), REQUESTED, Provenance::Goal);
                        }
                    }
                }
                _ => {
                    for d in &in_play {
                        node.insert(d, NONE, NONE, Provenance::Ontology);
                    }
                }
            }
            if !node.domains.is_empty() {
                intents.push(node);
            }
        }
        Self {
            intents,
            max_actions,
        }
    }

    pub fn max_actions(&self) -> usize {
        self.max_actions
    }

    /// Intent names that have at least one path, in ontology order.
    pub fn intents(&self) -> impl Iterator<Item = &str> {
        self.intents.iter().map(|i| i.name.as_str())
    }

    pub fn intent_role(&self, intent: &str) -> Option<IntentRole> {
        self.intents.iter().find(|i| i.name == intent).map(|i| i.role)
    }

    /// Every path with its provenance, in graph order.
    pub fn tagged_paths(&self) -> Vec<(SemanticAction, Provenance)> {
        let mut out = Vec::new();
        for i in &self.intents {
            for d in &i.domains {
                for s in &d.slots {
                    for v in &s.values {
                        out.push((SemanticAction::new(&i.name, &d.name, &s.name, &v.value), v.provenance));
                    }
                }
            }
        }
        out
    }

    pub fn paths(&self) -> Vec<SemanticAction> {
        self.tagged_paths().into_iter().map(|(a, _)| a).collect()
    }

    pub fn path_count(&self) -> usize {
        self.intents
            .iter()
            .flat_map(|i| &i.domains)
            .flat_map(|d| &d.slots)
            .map(|s| s.values.len())
            .sum()
    }

    /// Longest legal list: the action cap, or fewer if the graph is small.
    pub fn max_list_len(&self) -> usize {
        self.max_actions.min(self.path_count())
    }

    fn lookup(&self, a: &SemanticAction) -> Result<Provenance, ViolationKind> {
        let i = self
            .intents
            .iter()
            .find(|n| n.name == a.intent)
            .ok_or(ViolationKind::UnknownIntent)?;
        let d = i
            .domains
            .iter()
            .find(|n| n.name == a.domain)
            .ok_or(ViolationKind::IllegalDomain)?;
        let s = d
            .slots
            .iter()
            .find(|n| n.name == a.slot)
            .ok_or(ViolationKind::IllegalSlot)?;
        s.values
            .iter()
            .find(|n| n.value == a.value)
            .map(|n| n.provenance)
            .ok_or(ViolationKind::IllegalValue)
    }

    pub fn contains(&self, a: &SemanticAction) -> bool {
        self.lookup(a).is_ok()
    }

    pub fn provenance(&self, a: &SemanticAction) -> Option<Provenance> {
        self.lookup(a).ok()
    }

    /// All violations of `al`; empty means legal.
    pub fn validate_action_list(&self, al: &[SemanticAction]) -> Vec<Violation> {
        let mut out = Vec::new();
        for (index, a) in al.iter().enumerate() {
            let violation = |kind| Violation {
                kind,
                index,
                action: a.clone(),
            };
            if let Err(kind) = self.lookup(a) {
                out.push(violation(kind));
            }
            if al[..index].contains(a) {
                out.push(violation(ViolationKind::Duplicate));
            }
            if index >= self.max_actions {
                out.push(violation(ViolationKind::OverLength));
            }
        }
        out
    }

    pub fn is_legal(&self, al: &[SemanticAction]) -> bool {
        self.validate_action_list(al).is_empty()
    }

    /// Paths not yet used by `partial`.
    pub fn remaining_paths(&self, partial: &[SemanticAction]) -> Vec<SemanticAction> {
        self.paths()
            .into_iter()
            .filter(|p| !partial.contains(p))
            .collect()
    }

    /// Options that extend `partial` (a list of complete actions) to a legal
    /// prefix at `position`.
    pub fn legal_continuations(
        &self,
        partial: &[SemanticAction],
        position: Position<'_>,
    ) -> Result<Vec<Continuation>, DecodeError> {
        let violations = self.validate_action_list(partial);
        if !violations.is_empty() {
            return Err(DecodeError::IllegalPrefix(violations));
        }
        let open: Vec<SemanticAction> = self.remaining_paths(partial);
        let can_continue = partial.len() < self.max_actions && !open.is_empty();
        if position == Position::Boundary {
            let mut out = Vec::new();
            if can_continue {
                out.push(Continuation::Continue);
            }
            out.push(Continuation::Stop);
            return Ok(out);
        }
        if partial.len() >= self.max_actions {
            return Err(DecodeError::Full(self.max_actions));
        }
        let (matches, field): (fn(&SemanticAction, &Position<'_>) -> bool, fn(&SemanticAction) -> &str) =
            match position {
                Position::Intent => (|_, _| true, |a| &a.intent),
                Position::Domain { .. } => (
                    |a, p| matches!(p, Position::Domain { intent } if a.intent == *intent),
                    |a| &a.domain,
                ),
                Position::Slot { .. } => (
                    |a, p| matches!(p, Position::Slot { intent, domain } if a.intent == *intent && a.domain == *domain),
                    |a| &a.slot,
                ),
                Position::Value { .. } => (
                    |a, p| matches!(p, Position::Value { intent, domain, slot }
                        if a.intent == *intent && a.domain == *domain && a.slot == *slot),
                    |a| &a.value,
                ),
                Position::Boundary => unreachable!("handled above"),
            };
        let mut out: Vec<Continuation> = Vec::new();
        for a in open.iter().filter(|a| matches(a, &position)) {
            let f = Continuation::Field(field(a).to_string());
            if !out.contains(&f) {
                out.push(f);
            }
        }
        if out.is_empty() {
            let at = match position {
                Position::Domain { intent } => intent.to_string(),
                Position::Slot { intent, domain } => format!("{intent}/{domain}"),
                Position::Value { intent, domain, slot } => format!("{intent}/{domain}/{slot}"),
                _ => "intent".to_string(),
            };
            return Err(DecodeError::DeadEnd(at));
        }
        Ok(out)
    }

    /// Number of legal lists up to `max_actions` long.
    pub fn count_legal(&self, max_actions: usize) -> u64 {
        let n = self.path_count() as u64;
        let len = max_actions.min(self.max_actions) as u64;
        let mut total = 1u64;
        let mut term = 1u64;
        for k in 0..len.min(n) {
            term = term.saturating_mul(n - k);
            total = total.saturating_add(term);
        }
        total
    }

    /// Every legal list of at most `max_actions` actions (also capped by the
    /// graph's own limit). Order within a list matters, so permutations are
    /// distinct lists.
    pub fn enumerate_legal(&self, max_actions: usize) -> Result<Vec<Vec<SemanticAction>>, DecodeError> {
        let count = self.count_legal(max_actions);
        if count > ENUMERATION_LIMIT {
            return Err(DecodeError::Explosion { count });
        }
        let paths = self.paths();
        let len = max_actions.min(self.max_actions);
        let mut out = Vec::with_capacity(count as usize);
        let mut current = Vec::new();
        let mut used = vec![false; paths.len()];
        fn walk(
            paths: &[SemanticAction],
            len: usize,
            current: &mut Vec<SemanticAction>,
            used: &mut [bool],
            out: &mut Vec<Vec<SemanticAction>>,
        ) {
            out.push(current.clone());
            if current.len() == len {
                return;
            }
            for i in 0..paths.len() {
                if !used[i] {
                    used[i] = true;
                    current.push(paths[i].clone());
                    walk(paths, len, current, used, out);
                    current.pop();
                    used[i] = false;
                }
            }
        }
        walk(&paths, len, &mut current, &mut used, &mut out);
        Ok(out)
    }

    /// One path per line: `intent\tdomain\tslot\tvalue\tprovenance`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (a, p) in self.tagged_paths() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                a.intent,
                a.domain,
                a.slot,
                a.value,
                p.as_str()
            ));
        }
        out
    }

    /// Field-level legality snapshot: `{"max_actions": n, "paths": {intent: {domain: {slot: [values]}}}}`.
    pub fn to_options_json(&self) -> Value {
        let mut intents = Map::new();
        for i in &self.intents {
            let mut domains = Map::new();
            for d in &i.domains {
                let mut slots = Map::new();
                for s in &d.slots {
                    let values = s.values.iter().map(|v| Value::String(v.value.clone())).collect();
                    slots.insert(s.name.clone(), Value::Array(values));
                }
                domains.insert(d.name.clone(), Value::Object(slots));
            }
            intents.insert(i.name.clone(), Value::Object(domains));
        }
        let mut root = Map::new();
        root.insert("max_actions".to_string(), Value::from(self.max_actions as u64));
        root.insert("paths".to_string(), Value::Object(intents));
        Value::Object(root)
    }

    /// Rebuilds a graph from [`ConstraintGraph::to_options_json`] output.
    /// Provenance is not part of the snapshot and comes back as `ontology`.
    pub fn from_options_json(v: &Value) -> Option<Self> {
        let max_actions = v.get("max_actions")?.as_u64()? as usize;
        let mut intents = Vec::new();
        for (i, domains) in v.get("paths")?.as_object()? {
            let mut node = IntentNode {
                name: i.clone(),
                role: IntentRole::Other,
                domains: Vec::new(),
            };
            for (d, slots) in domains.as_object()? {
                for (s, values) in slots.as_object()? {
                    for value in values.as_array()? {
                        node.insert(d, s, value.as_str()?, Provenance::Ontology);
                    }
                }
            }
            intents.push(node);
        }
        Some(Self {
            intents,
            max_actions,
        })
    }

    /// Admissible next field strings after a prefix of the canonical output
    /// serialization. Quoted fields come back in canonical JSON form; fields
    /// after the first carry their `, ` separator. An empty result means the
    /// action list is closed and the text is unconstrained.
    pub fn prefix_mask(&self, partial_serialized: &str) -> Result<Vec<String>, DecodeError> {
        let mut rest = partial_serialized;
        let mut state = MaskState::Open;
        let mut done: Vec<SemanticAction> = Vec::new();
        let mut fields: Vec<String> = Vec::new();
        loop {
            let offset = partial_serialized.len() - rest.len();
            let options = self.mask_options(&state, &done, &fields);
            if options.is_empty() {
                return Ok(options);
            }
            if let Some(opt) = options.iter().find(|o| rest.starts_with(o.as_str())) {
                rest = &rest[opt.len()..];
                state = match (state, opt.as_str()) {
                    (MaskState::Open, _) => MaskState::ListStart,
                    (MaskState::ListStart | MaskState::Between, "]") => MaskState::ListClosed,
                    (MaskState::ListStart | MaskState::Between, _) => MaskState::Field,
                    (MaskState::Field, _) => {
                        let quoted = opt.trim_start_matches(", ");
                        let field: String = serde_json::from_str(quoted).map_err(|_| DecodeError::Prefix { offset })?;
                        fields.push(field);
                        if fields.len() == 4 {
                            MaskState::FieldsDone
                        } else {
                            MaskState::Field
                        }
                    }
                    (MaskState::FieldsDone, _) => {
                        let [i, d, s, v]: [String; 4] =
                            core::mem::take(&mut fields).try_into().expect("four fields");
                        done.push(SemanticAction::new(i, d, s, v));
                        MaskState::Between
                    }
                    (MaskState::ListClosed, _) => MaskState::Text,
                    (MaskState::Text, _) => unreachable!("text state has no options"),
                };
                continue;
            }
            let partial: Vec<String> = options
                .into_iter()
                .filter(|o| o.starts_with(rest))
                .collect();
            if partial.is_empty() {
                return Err(DecodeError::Prefix { offset });
            }
            return Ok(partial);
        }
    }

    fn mask_options(&self, state: &MaskState, done: &[SemanticAction], fields: &[String]) -> Vec<String> {
        let quote = |s: &str| serde_json::to_string(s).expect("strings serialize");
        let can_continue = done.len() < self.max_actions && self.remaining_paths(done).len() > 0;
        match state {
            MaskState::Open => vec![String::from("{\"action\": [")],
            MaskState::ListStart => {
                let mut v = Vec::new();
                if can_continue {
                    v.push("[".to_string());
                }
                v.push("]".to_string());
                v
            }
            MaskState::Between => {
                let mut v = Vec::new();
                if can_continue {
                    v.push(", [".to_string());
                }
                v.push("]".to_string());
                v
            }
            MaskState::Field => {
                let position = match fields {
                    [] => Position::Intent,
                    [i] => Position::Domain { intent: i },
                    [i, d] => Position::Slot { intent: i, domain: d },
                    [i, d, s, ..] => Position::Value { intent: i, domain: d, slot: s },
                };
                let sep = if fields.is_empty() { "" } else { ", " };
                self.legal_continuations(done, position)
                    .unwrap_or_default()
                    .into_iter()
                    .filter_map(|c| match c {
                        Continuation::Field(f) => Some(format!("{sep}{}", quote(&f))),
                        _ => None,
                    })
                    .collect()
            }
            MaskState::FieldsDone => vec!["]".to_string()],
            MaskState::ListClosed => vec![", \"text\": ".to_string()],
            MaskState::Text => Vec::new(),
        }
    }

    /// Distinct domains across all paths, in graph order.
    pub fn domains(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for d in self.intents.iter().flat_map(|i| &i.domains) {
            if seen.insert(d.name.as_str()) {
                out.push(d.name.as_str());
            }
        }
        out
    }
}

enum MaskState {
    Open,
    ListStart,
    Field,
    FieldsDone,
    Between,
    ListClosed,
    Text,
}

fn insert_requested(node: &mut IntentNode, o: &Ontology, g: &UserGoal, d: &str, s: &str) {
    let Ok(slot) = o.slot(d, s) else { return };
    if let Some(e) = g.constraint(d, s) {
        node.insert(d, s, e.value(), Provenance::Goal);
        return;
    }
    if !(slot.allows(GoalKind::Info) || slot.allows(GoalKind::Book)) {
        return;
    }
    for v in &slot.values {
        node.insert(d, s, v, Provenance::SystemInserted);
    }
    node.insert(d, s, DONTCARE, Provenance::SystemInserted);
}

fn insert_selectable(node: &mut IntentNode, o: &Ontology, a: &SemanticAction) {
    if a.slot == NONE || !a.has_concrete_value() {
        return;
    }
    if let Ok(slot) = o.slot(&a.domain, &a.slot) {
        if slot.accepts(&a.value) {
            node.insert(&a.domain, &a.slot, &a.value, Provenance::SystemInserted);
        }
    }
}
