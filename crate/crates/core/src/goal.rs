//! User goals: sampling, status tracking and the deterministic update rules.
//!
//! A goal is an ordered list of `(domain, kind, slot, value, status)`
//! entries; the order is the user's priority and never changes. Statuses only
//! move through [`update_on_system`] and [`update_on_user`], and every change
//! made by the system side is recorded in a [`ChangeLog`].
//!
//! Transition table:
//!
//! | trigger                                       | entry kind | effect                                   |
//! |-----------------------------------------------|------------|------------------------------------------|
//! | system inform/offer, same value               | info       | `fulfilled`                              |
//! | system inform/offer, different value          | info, book | `conflict`                               |
//! | system inform/offer/booked of the slot        | reqt       | `fulfilled`, answer logged               |
//! | system booked, same value                     | book       | `fulfilled`                              |
//! | system booked, no slot                        | book       | every book entry of the domain fulfilled |
//! | system nooffer/nobook on the domain           | info, book | value replaced, `not_mentioned`          |
//! | user inform, same value                       | info       | `fulfilled`                              |
//! | user inform, same value                       | book       | `requested` (awaiting confirmation)      |
//! | user request                                  | reqt       | `requested`                              |

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{SemanticAction, DONTCARE, NONE, REQUESTED};
use crate::ontology::{IntentRole, Ontology, OntologyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalKind {
    Info,
    Reqt,
    Book,
}

impl GoalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GoalKind::Info => "info",
            GoalKind::Reqt => "reqt",
            GoalKind::Book => "book",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "info" => Some(GoalKind::Info),
            "reqt" => Some(GoalKind::Reqt),
            "book" => Some(GoalKind::Book),
            _ => None,
        }
    }

    /// Constraint kinds are the ones whose value is replaced on failure.
    pub fn is_constraint(self) -> bool {
        matches!(self, GoalKind::Info | GoalKind::Book)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalStatus {
    NotMentioned,
    Fulfilled,
    Conflict,
    Requested,
}

impl GoalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GoalStatus::NotMentioned => "not_mentioned",
            GoalStatus::Fulfilled => "fulfilled",
            GoalStatus::Conflict => "conflict",
            GoalStatus::Requested => "requested",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "not_mentioned" => Some(GoalStatus::NotMentioned),
            "fulfilled" => Some(GoalStatus::Fulfilled),
            "conflict" => Some(GoalStatus::Conflict),
            "requested" => Some(GoalStatus::Requested),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GoalError {
    #[error("entry {domain}/{kind}/{slot}: reqt entries take the value `?` and only they do")]
    KindValueMismatch {
        domain: String,
        kind: &'static str,
        slot: String,
    },
    #[error("duplicate goal entry {domain}/{kind}/{slot}")]
    Duplicate {
        domain: String,
        kind: &'static str,
        slot: String,
    },
    #[error("entry {domain}/{slot} has an empty value")]
    EmptyValue { domain: String, slot: String },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("entry {domain}/{slot}: kind {kind} is not allowed for this slot")]
    KindNotAllowed {
        domain: String,
        kind: &'static str,
        slot: String,
    },
    #[error("entry {domain}/{slot}: value `{value}` is not legal")]
    IllegalValue {
        domain: String,
        slot: String,
        value: String,
    },
    #[error("ontology cannot satisfy the sampler configuration: {0}")]
    Unsatisfiable(String),
    #[error("malformed goal document: {0}")]
    Format(String),
}

/// One `(domain, kind, slot, value, status)` tuple of a user goal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalEntry {
    domain: String,
    kind: GoalKind,
    slot: String,
    value: String,
    status: GoalStatus,
}

impl GoalEntry {
    /// New entry with status `not_mentioned`.
    pub fn new(
        domain: impl Into<String>,
        kind: GoalKind,
        slot: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<Self, GoalError> {
        let e = Self {
            domain: domain.into(),
            kind,
            slot: slot.into(),
            value: value.into(),
            status: GoalStatus::NotMentioned,
        };
        e.check_shape()?;
        Ok(e)
    }

    /// Rebuilds an entry from a serialized snapshot, status included.
    pub fn restore(
        domain: impl Into<String>,
        kind: GoalKind,
        slot: impl Into<String>,
        value: impl Into<String>,
        status: GoalStatus,
    ) -> Result<Self, GoalError> {
        let mut e = Self::new(domain, kind, slot, value)?;
        e.status = status;
        Ok(e)
    }

    /// A reqt entry, whose value is always `?`.
    pub fn request(domain: impl Into<String>, slot: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            kind: GoalKind::Reqt,
            slot: slot.into(),
            value: REQUESTED.to_string(),
            status: GoalStatus::NotMentioned,
        }
    }

    fn check_shape(&self) -> Result<(), GoalError> {
        if self.value.is_empty() {
            return Err(GoalError::EmptyValue {
                domain: self.domain.clone(),
                slot: self.slot.clone(),
            });
        }
        if (self.kind == GoalKind::Reqt) != (self.value == REQUESTED) {
            return Err(GoalError::KindValueMismatch {
                domain: self.domain.clone(),
                kind: self.kind.as_str(),
                slot: self.slot.clone(),
            });
        }
        Ok(())
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }
    pub fn kind(&self) -> GoalKind {
        self.kind
    }
    pub fn slot(&self) -> &str {
        &self.slot
    }
    pub fn value(&self) -> &str {
        &self.value
    }
    pub fn status(&self) -> GoalStatus {
        self.status
    }

    fn same_key(&self, other: &GoalEntry) -> bool {
        self.domain == other.domain && self.kind == other.kind && self.slot == other.slot
    }

    fn value_matches(&self, value: &str) -> bool {
        self.value.eq_ignore_ascii_case(value) || self.value == DONTCARE
    }
}

/// Ordered user goal. Order is the user's priority and is preserved by every
/// update.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGoal")]
pub struct UserGoal {
    entries: Vec<GoalEntry>,
}

#[derive(Deserialize)]
struct RawGoal {
    entries: Vec<GoalEntry>,
}

impl TryFrom<RawGoal> for UserGoal {
    type Error = GoalError;
    fn try_from(raw: RawGoal) -> Result<Self, GoalError> {
        UserGoal::with_statuses(raw.entries)
    }
}

impl UserGoal {
    pub fn new(entries: Vec<GoalEntry>) -> Result<Self, GoalError> {
        Self::with_statuses(entries)
    }

    /// Accepts entries that already carry statuses (goal snapshots).
    fn with_statuses(entries: Vec<GoalEntry>) -> Result<Self, GoalError> {
        for (i, e) in entries.iter().enumerate() {
            e.check_shape()?;
            if entries[..i].iter().any(|p| p.same_key(e)) {
                return Err(GoalError::Duplicate {
                    domain: e.domain.clone(),
                    kind: e.kind.as_str(),
                    slot: e.slot.clone(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[GoalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Position of the entry with the given key.
    pub fn find(&self, domain: &str, kind: GoalKind, slot: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.domain == domain && e.kind == kind && e.slot == slot)
    }

    /// The info or book entry for a slot, if any.
    pub fn constraint(&self, domain: &str, slot: &str) -> Option<&GoalEntry> {
        self.entries
            .iter()
            .find(|e| e.domain == domain && e.slot == slot && e.kind.is_constraint())
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.entries.iter().any(|e| e.domain == domain)
    }

    /// Checks every entry against the ontology.
    pub fn validate(&self, o: &Ontology) -> Result<(), GoalError> {
        for e in &self.entries {
            let slot = o.slot(&e.domain, &e.slot)?;
            if !slot.allows(e.kind) {
                return Err(GoalError::KindNotAllowed {
                    domain: e.domain.clone(),
                    kind: e.kind.as_str(),
                    slot: e.slot.clone(),
                });
            }
            if e.kind != GoalKind::Reqt && e.value != DONTCARE && !slot.accepts(&e.value) {
                return Err(GoalError::IllegalValue {
                    domain: e.domain.clone(),
                    slot: e.slot.clone(),
                    value: e.value.clone(),
                });
            }
        }
        Ok(())
    }

    /// Canonical compact JSON: `{"entries":[{"domain":..,"kind":..,"slot":..,"value":..,"status":..}]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("goal serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GoalError> {
        serde_json::from_str(text).map_err(|e| GoalError::Format(e.to_string()))
    }

    fn set_status(&mut self, idx: usize, to: GoalStatus, cause: &str, log: &mut ChangeLog) {
        let e = &mut self.entries[idx];
        if e.status != to {
            log.events.push(GoalEvent::StatusChanged {
                domain: e.domain.clone(),
                kind: e.kind,
                slot: e.slot.clone(),
                from: e.status,
                to,
                cause: cause.to_string(),
            });
            e.status = to;
        }
    }
}

/// True iff every entry is fulfilled. The empty goal is vacuously satisfied.
pub fn is_satisfied(g: &UserGoal) -> bool {
    g.entries.iter().all(|e| e.status == GoalStatus::Fulfilled)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum GoalEvent {
    StatusChanged {
        domain: String,
        kind: GoalKind,
        slot: String,
        from: GoalStatus,
        to: GoalStatus,
        cause: String,
    },
    /// A system inform answered a reqt entry.
    Answered {
        domain: String,
        slot: String,
        value: String,
        /// Whether the user had asked for the slot; unsolicited answers are
        /// accepted too.
        solicited: bool,
    },
    ValueReplaced {
        domain: String,
        kind: GoalKind,
        slot: String,
        old: String,
        new: String,
    },
    Unreplaceable {
        domain: String,
        kind: GoalKind,
        slot: String,
        value: String,
    },
    Ignored {
        action: SemanticAction,
        reason: String,
    },
}

/// Audit trail of one system-side goal update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangeLog {
    pub events: Vec<GoalEvent>,
}

impl ChangeLog {
    /// Answers recorded for reqt entries, as `(domain, slot, value)`.
    pub fn answers(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.events.iter().filter_map(|e| match e {
            GoalEvent::Answered {
                domain,
                slot,
                value,
                ..
            } => Some((domain.as_str(), slot.as_str(), value.as_str())),
            _ => None,
        })
    }
}

fn ignore(log: &mut ChangeLog, a: &SemanticAction, reason: &str) {
    log.events.push(GoalEvent::Ignored {
        action: a.clone(),
        reason: reason.to_string(),
    });
}

/// Applies the current system action to the goal.
pub fn update_on_system<R: Rng + ?Sized>(
    g: &UserGoal,
    a_sys: &[SemanticAction],
    o: &Ontology,
    rng: &mut R,
) -> (UserGoal, ChangeLog) {
    let mut goal = g.clone();
    let mut log = ChangeLog::default();
    for a in a_sys {
        let Some(role) = o.system_role(&a.intent) else {
            ignore(&mut log, a, "unknown system intent");
            continue;
        };
        if role.is_failure() {
            replace_constraints(&mut goal, &a.domain, &a.intent, o, rng, &mut log);
        } else if role.is_informative() {
            apply_inform(&mut goal, a, role, o, &mut log);
        }
    }
    (goal, log)
}

fn apply_inform(
    goal: &mut UserGoal,
    a: &SemanticAction,
    role: IntentRole,
    o: &Ontology,
    log: &mut ChangeLog,
) {
    if role == IntentRole::Booked && a.slot == NONE {
        let idxs: Vec<usize> = (0..goal.entries.len())
            .filter(|&i| goal.entries[i].domain == a.domain && goal.entries[i].kind == GoalKind::Book)
            .collect();
        if idxs.is_empty() {
            ignore(log, a, "no book entries in this domain");
        }
        for i in idxs {
            goal.set_status(i, GoalStatus::Fulfilled, &a.intent, log);
        }
        return;
    }
    if a.slot == NONE || a.value == NONE || a.value == REQUESTED || a.value == DONTCARE {
        ignore(log, a, "no concrete value");
        return;
    }
    let idxs: Vec<usize> = (0..goal.entries.len())
        .filter(|&i| goal.entries[i].domain == a.domain && goal.entries[i].slot == a.slot)
        .collect();
    if idxs.is_empty() {
        let reason = if o.slot(&a.domain, &a.slot).is_ok() {
            "slot not in goal"
        } else {
            "slot unknown to ontology"
        };
        ignore(log, a, reason);
        return;
    }
    for i in idxs {
        let e = &goal.entries[i];
        match e.kind {
            GoalKind::Info => {
                let to = if e.value_matches(&a.value) {
                    GoalStatus::Fulfilled
                } else {
                    GoalStatus::Conflict
                };
                goal.set_status(i, to, &a.intent, log);
            }
            GoalKind::Book => {
                if !e.value_matches(&a.value) {
                    goal.set_status(i, GoalStatus::Conflict, &a.intent, log);
                } else if role == IntentRole::Booked {
                    goal.set_status(i, GoalStatus::Fulfilled, &a.intent, log);
                }
            }
            GoalKind::Reqt => {
                log.events.push(GoalEvent::Answered {
                    domain: a.domain.clone(),
                    slot: a.slot.clone(),
                    value: a.value.clone(),
                    solicited: e.status == GoalStatus::Requested,
                });
                goal.set_status(i, GoalStatus::Fulfilled, &a.intent, log);
            }
        }
    }
}

fn replace_constraints<R: Rng + ?Sized>(
    goal: &mut UserGoal,
    domain: &str,
    cause: &str,
    o: &Ontology,
    rng: &mut R,
    log: &mut ChangeLog,
) {
    for i in 0..goal.entries.len() {
        let e = &goal.entries[i];
        if e.domain != domain || !e.kind.is_constraint() {
            continue;
        }
        match o.random_alternative(&e.domain, &e.slot, &e.value, rng) {
            Ok(new) => {
                log.events.push(GoalEvent::ValueReplaced {
                    domain: e.domain.clone(),
                    kind: e.kind,
                    slot: e.slot.clone(),
                    old: e.value.clone(),
                    new: new.clone(),
                });
                goal.entries[i].value = new;
            }
            Err(_) => log.events.push(GoalEvent::Unreplaceable {
                domain: e.domain.clone(),
                kind: e.kind,
                slot: e.slot.clone(),
                value: e.value.clone(),
            }),
        }
        goal.set_status(i, GoalStatus::NotMentioned, cause, log);
    }
}

/// Applies the user's own action to the goal.
pub fn update_on_user(g: &UserGoal, a_usr: &[SemanticAction], o: &Ontology) -> UserGoal {
    let mut goal = g.clone();
    let mut log = ChangeLog::default();
    for a in a_usr {
        match o.user_role(&a.intent) {
            Some(IntentRole::Inform) => {
                for i in 0..goal.entries.len() {
                    let e = &goal.entries[i];
                    if e.domain != a.domain || e.slot != a.slot || !e.kind.is_constraint() {
                        continue;
                    }
                    if !e.value.eq_ignore_ascii_case(&a.value) {
                        continue;
                    }
                    match e.kind {
                        GoalKind::Info => goal.set_status(i, GoalStatus::Fulfilled, &a.intent, &mut log),
                        GoalKind::Book if e.status != GoalStatus::Fulfilled => {
                            goal.set_status(i, GoalStatus::Requested, &a.intent, &mut log)
                        }
                        _ => {}
                    }
                }
            }
            Some(IntentRole::Request) => {
                if let Some(i) = goal.find(&a.domain, GoalKind::Reqt, &a.slot) {
                    if goal.entries[i].status == GoalStatus::NotMentioned {
                        goal.set_status(i, GoalStatus::Requested, &a.intent, &mut log);
                    }
                }
            }
            _ => {}
        }
    }
    goal
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

/// Size limits for sampled goals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSamplerConfig {
    pub domains: CountRange,
    pub info: CountRange,
    pub reqt: CountRange,
    pub book: CountRange,
}

impl Default for GoalSamplerConfig {
    fn default() -> Self {
        Self {
            domains: CountRange::new(1, 2),
            info: CountRange::new(1, 3),
            reqt: CountRange::new(1, 2),
            book: CountRange::new(0, 2),
        }
    }
}

struct DomainPools<'a> {
    name: &'a str,
    info: Vec<&'a str>,
    reqt: Vec<&'a str>,
    book: Vec<&'a str>,
}

fn draw_count<R: Rng + ?Sized>(min: usize, max: usize, rng: &mut R) -> usize {
    if max <= min {
        min
    } else {
        rng.random_range(min..=max)
    }
}

/// Samples a goal whose every entry is legal under `o`.
///
/// Domains appear in a random order; inside a domain the info entries come
/// first, then book entries, then reqt entries, each group shuffled.
pub fn sample_goal<R: Rng + ?Sized>(
    o: &Ontology,
    cfg: &GoalSamplerConfig,
    rng: &mut R,
) -> Result<UserGoal, GoalError> {
    for (label, r) in [
        ("domains", cfg.domains),
        ("info", cfg.info),
        ("reqt", cfg.reqt),
        ("book", cfg.book),
    ] {
        if r.min > r.max {
            return Err(GoalError::Unsatisfiable(format!(
                "{label} range has min {} > max {}",
                r.min, r.max
            )));
        }
    }
    let can_book = o.first_system_intent(IntentRole::Booked).is_some();
    let mut eligible: Vec<DomainPools<'_>> = Vec::new();
    for (name, schema) in o.domains() {
        let mut pools = DomainPools {
            name,
            info: Vec::new(),
            reqt: Vec::new(),
            book: Vec::new(),
        };
        for (s, slot) in &schema.slots {
            let has_pool = !slot.sampling_pool().is_empty();
            if slot.allows(GoalKind::Info) && has_pool {
                pools.info.push(s);
            }
            if slot.allows(GoalKind::Reqt) {
                pools.reqt.push(s);
            }
            if slot.allows(GoalKind::Book) && has_pool && can_book {
                pools.book.push(s);
            }
        }
        let union = pools
            .reqt
            .iter()
            .filter(|s| !pools.info.contains(s))
            .count()
            + pools.info.len();
        if pools.info.len() >= cfg.info.min
            && pools.reqt.len() >= cfg.reqt.min
            && pools.book.len() >= cfg.book.min
            && union >= cfg.info.min + cfg.reqt.min
        {
            eligible.push(pools);
        }
    }
    if eligible.len() < cfg.domains.min {
        return Err(GoalError::Unsatisfiable(format!(
            "{} domain(s) requested but only {} can satisfy the slot counts",
            cfg.domains.min,
            eligible.len()
        )));
    }
    eligible.shuffle(rng);
    let n_domains = draw_count(cfg.domains.min, cfg.domains.max.min(eligible.len()), rng);
    let mut entries = Vec::new();
    for pools in eligible.iter().take(n_domains) {
        let d = pools.name;
        // reqt slots first, preferring ones that cannot also serve as info,
        // so enough info slots remain.
        let mut reqt_only: Vec<&str> = pools
            .reqt
            .iter()
            .copied()
            .filter(|s| !pools.info.contains(s))
            .collect();
        let mut reqt_shared: Vec<&str> = pools
            .reqt
            .iter()
            .copied()
            .filter(|s| pools.info.contains(s))
            .collect();
        reqt_only.shuffle(rng);
        reqt_shared.shuffle(rng);
        let reqt_cap = (reqt_only.len() + pools.info.len() - cfg.info.min).min(pools.reqt.len());
        let n_reqt = draw_count(cfg.reqt.min, cfg.reqt.max.min(reqt_cap), rng);
        let reqt: Vec<&str> = reqt_only
            .into_iter()
            .chain(reqt_shared)
            .take(n_reqt)
            .collect();
        let mut info: Vec<&str> = pools
            .info
            .iter()
            .copied()
            .filter(|s| !reqt.contains(s))
            .collect();
        info.shuffle(rng);
        let n_info = draw_count(cfg.info.min, cfg.info.max.min(info.len()), rng);
        info.truncate(n_info);
        let mut book = pools.book.clone();
        book.shuffle(rng);
        let n_book = draw_count(cfg.book.min, cfg.book.max.min(book.len()), rng);
        book.truncate(n_book);
        let mut shuffled_reqt = reqt;
        shuffled_reqt.shuffle(rng);

        for (kind, slots) in [(GoalKind::Info, &info), (GoalKind::Book, &book)] {
            for s in slots.iter() {
                let pool = o.slot(d, s)?.sampling_pool();
                let value = pool[rng.random_range(0..pool.len())].clone();
                entries.push(GoalEntry::new(d, kind, *s, value)?);
            }
        }
        for s in shuffled_reqt {
            entries.push(GoalEntry::request(d, s));
        }
    }
    UserGoal::new(entries)
}
