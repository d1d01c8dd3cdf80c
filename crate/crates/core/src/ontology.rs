//! The ontology: every intent, domain, slot and value a dialogue may use.
//!
//! An ontology is loaded from a JSON document and validated once; after that
//! it is immutable. Decoding semantics never depend on intent *names*: each
//! intent carries an [`IntentRole`] so that differently named intent sets
//! (e.g. `inform`/`request` versus `affirm`/`request_alts`/...) load without
//! code changes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{DONTCARE, GENERAL_DOMAIN, NONE, REQUESTED};
use crate::goal::GoalKind;

/// Functional tag of an intent.
///
/// User intents use `general`, `bye`, `inform`, `request` and `other`;
/// the remaining roles describe system intents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentRole {
    General,
    /// A general intent that closes the dialogue.
    Bye,
    Inform,
    Request,
    Select,
    Offer,
    #[serde(rename = "nooffer")]
    NoOffer,
    #[serde(rename = "nobook")]
    NoBook,
    Booked,
    Other,
}

impl IntentRole {
    /// Roles whose actions carry no domain (`general`, `none`, `none`).
    pub fn is_general(self) -> bool {
        matches!(self, IntentRole::General | IntentRole::Bye)
    }

    /// System roles that assert slot values about an entity.
    pub fn is_informative(self) -> bool {
        matches!(self, IntentRole::Inform | IntentRole::Offer | IntentRole::Booked)
    }

    /// System roles signalling that a search or booking failed.
    pub fn is_failure(self) -> bool {
        matches!(self, IntentRole::NoOffer | IntentRole::NoBook)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntentRole::General => "general",
            IntentRole::Bye => "bye",
            IntentRole::Inform => "inform",
            IntentRole::Request => "request",
            IntentRole::Select => "select",
            IntentRole::Offer => "offer",
            IntentRole::NoOffer => "nooffer",
            IntentRole::NoBook => "nobook",
            IntentRole::Booked => "booked",
            IntentRole::Other => "other",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub name: String,
    pub role: IntentRole,
}

impl IntentSpec {
    pub fn new(name: impl Into<String>, role: IntentRole) -> Self {
        Self { name: name.into(), role }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSchema {
    #[serde(default)]
    pub values: Vec<String>,
    #[serde(default)]
    pub open_valued: bool,
    pub kinds: Vec<GoalKind>,
    /// Sampling pool for open-valued slots.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<String>,
}

impl SlotSchema {
    pub fn closed(values: &[&str], kinds: &[GoalKind]) -> Self {
        Self {
            values: values.iter().map(|v| v.to_string()).collect(),
            open_valued: false,
            kinds: kinds.to_vec(),
            candidates: Vec::new(),
        }
    }

    pub fn open(candidates: &[&str], kinds: &[GoalKind]) -> Self {
        Self {
            values: Vec::new(),
            open_valued: true,
            kinds: kinds.to_vec(),
            candidates: candidates.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn allows(&self, kind: GoalKind) -> bool {
        self.kinds.contains(&kind)
    }

    /// Values a sampler may draw: the closed vocabulary, or the candidate
    /// pool of an open-valued slot.
    pub fn sampling_pool(&self) -> &[String] {
        if self.open_valued {
            &self.candidates
        } else {
            &self.values
        }
    }

    /// Whether `value` is a legal concrete value for this slot.
    pub fn accepts(&self, value: &str) -> bool {
        if self.open_valued {
            !value.is_empty()
        } else {
            self.values.iter().any(|v| v.eq_ignore_ascii_case(value))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSchema {
    pub slots: BTreeMap<String, SlotSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OntologyError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid ontology: {0}")]
    Invalid(String),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown slot `{slot}` in domain `{domain}`")]
    UnknownSlot { domain: String, slot: String },
    #[error("no alternative value available for {domain}/{slot}")]
    Unreplaceable { domain: String, slot: String },
}

/// A validated ontology.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    name: String,
    user_general_intents: Vec<IntentSpec>,
    user_domain_intents: Vec<IntentSpec>,
    system_intents: Vec<IntentSpec>,
    domains: BTreeMap<String, DomainSchema>,
}

/// Parses and validates an ontology document.
pub fn load_ontology(text: &str) -> Result<Ontology, OntologyError> {
    let raw: Ontology = serde_json::from_str(text).map_err(|e| OntologyError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ontology::new(
        raw.name,
        raw.user_general_intents,
        raw.user_domain_intents,
        raw.system_intents,
        raw.domains,
    )
}

/// Strips the `_<number>` service suffix used by schema-guided corpora
/// (`banks_1` becomes `banks`).
pub fn normalize_domain_name(name: &str) -> &str {
    match name.rfind('_') {
        Some(idx)
            if idx > 0
                && idx + 1 < name.len()
                && name[idx + 1..].bytes().all(|b| b.is_ascii_digit()) =>
        {
            &name[..idx]
        }
        _ => name,
    }
}

fn push_unique(into: &mut Vec<String>, from: &[String]) {
    for v in from {
        if !into.contains(v) {
            into.push(v.clone());
        }
    }
}

fn merge_domains(into: &mut DomainSchema, from: DomainSchema) {
    for (slot, schema) in from.slots {
        match into.slots.get_mut(&slot) {
            None => {
                into.slots.insert(slot, schema);
            }
            Some(existing) => {
                push_unique(&mut existing.values, &schema.values);
                push_unique(&mut existing.candidates, &schema.candidates);
                for k in schema.kinds {
                    if !existing.kinds.contains(&k) {
                        existing.kinds.push(k);
                    }
                }
                existing.open_valued = existing.values.is_empty();
            }
        }
    }
}

fn is_reserved_value(v: &str) -> bool {
    v == REQUESTED || v == DONTCARE || v == NONE || v.is_empty()
}

impl Ontology {
    /// Builds an ontology from parts, normalizing service-suffixed domain
    /// names and checking every invariant.
    pub fn new(
        name: String,
        user_general_intents: Vec<IntentSpec>,
        user_domain_intents: Vec<IntentSpec>,
        system_intents: Vec<IntentSpec>,
        domains: BTreeMap<String, DomainSchema>,
    ) -> Result<Self, OntologyError> {
        let mut normalized: BTreeMap<String, DomainSchema> = BTreeMap::new();
        for (d, schema) in domains {
            let key = normalize_domain_name(&d).to_string();
            match normalized.get_mut(&key) {
                Some(existing) => merge_domains(existing, schema),
                None => {
                    normalized.insert(key, schema);
                }
            }
        }
        let o = Self {
            name,
            user_general_intents,
            user_domain_intents,
            system_intents,
            domains: normalized,
        };
        o.validate()?;
        Ok(o)
    }

    fn validate(&self) -> Result<(), OntologyError> {
        let invalid = |m: String| Err(OntologyError::Invalid(m));
        if self.name.is_empty() {
            return invalid("ontology name is empty".into());
        }
        for (label, list) in [
            ("user_general_intents", &self.user_general_intents),
            ("user_domain_intents", &self.user_domain_intents),
            ("system_intents", &self.system_intents),
        ] {
            if list.is_empty() {
                return invalid(format!("{label} must be non-empty"));
            }
            for (i, a) in list.iter().enumerate() {
                if a.name.is_empty() {
                    return invalid(format!("{label} contains an empty intent name"));
                }
                if list[..i].iter().any(|b| b.name == a.name) {
                    return invalid(format!("{label} lists `{}` twice", a.name));
                }
            }
        }
        for g in &self.user_general_intents {
            if self.user_domain_intents.iter().any(|d| d.name == g.name) {
                return invalid(format!(
                    "user intent `{}` is both general and domain-specific",
                    g.name
                ));
            }
            if !g.role.is_general() {
                return invalid(format!(
                    "user general intent `{}` must have role general or bye, not {}",
                    g.name,
                    g.role.as_str()
                ));
            }
        }
        for d in &self.user_domain_intents {
            if !matches!(
                d.role,
                IntentRole::Inform | IntentRole::Request | IntentRole::Other
            ) {
                return invalid(format!(
                    "user domain intent `{}` must have role inform, request or other, not {}",
                    d.name,
                    d.role.as_str()
                ));
            }
        }
        for role in [IntentRole::Inform, IntentRole::Request] {
            if !self.user_domain_intents.iter().any(|d| d.role == role) {
                return invalid(format!(
                    "user domain intents need at least one {} role",
                    role.as_str()
                ));
            }
        }
        if self.domains.is_empty() {
            return invalid("domains must be non-empty".into());
        }
        if self.domains.contains_key(GENERAL_DOMAIN) {
            return invalid(format!("`{GENERAL_DOMAIN}` is reserved and cannot be a domain"));
        }
        for (d, schema) in &self.domains {
            if schema.slots.is_empty() {
                return invalid(format!("domain `{d}` has no slots"));
            }
            for (s, slot) in &schema.slots {
                if s.is_empty() || s == NONE {
                    return invalid(format!("domain `{d}` has reserved slot name `{s}`"));
                }
                if slot.kinds.is_empty() {
                    return invalid(format!("slot {d}/{s} allows no goal kind"));
                }
                if slot.open_valued != slot.values.is_empty() {
                    return invalid(format!(
                        "slot {d}/{s}: the value list must be empty exactly when the slot is open-valued"
                    ));
                }
                for (i, v) in slot.values.iter().chain(&slot.candidates).enumerate() {
                    if is_reserved_value(v) {
                        return invalid(format!("slot {d}/{s} lists reserved value `{v}`"));
                    }
                    if i < slot.values.len() && slot.values[..i].contains(v) {
                        return invalid(format!("slot {d}/{s} lists value `{v}` twice"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn user_general_intents(&self) -> &[IntentSpec] {
        &self.user_general_intents
    }

    pub fn user_domain_intents(&self) -> &[IntentSpec] {
        &self.user_domain_intents
    }

    /// All user intents: general ones first, then domain-specific ones.
    pub fn user_intents(&self) -> impl Iterator<Item = &IntentSpec> {
        self.user_general_intents
            .iter()
            .chain(self.user_domain_intents.iter())
    }

    pub fn system_intents(&self) -> &[IntentSpec] {
        &self.system_intents
    }

    pub fn domains(&self) -> &BTreeMap<String, DomainSchema> {
        &self.domains
    }

    pub fn user_role(&self, intent: &str) -> Option<IntentRole> {
        self.user_intents()
            .find(|i| i.name == intent)
            .map(|i| i.role)
    }

    pub fn system_role(&self, intent: &str) -> Option<IntentRole> {
        self.system_intents
            .iter()
            .find(|i| i.name == intent)
            .map(|i| i.role)
    }

    pub fn first_user_intent(&self, role: IntentRole) -> Option<&str> {
        self.user_intents()
            .find(|i| i.role == role)
            .map(|i| i.name.as_str())
    }

    pub fn first_system_intent(&self, role: IntentRole) -> Option<&str> {
        self.system_intents
            .iter()
            .find(|i| i.role == role)
            .map(|i| i.name.as_str())
    }

    pub fn system_intents_with_role(&self, role: IntentRole) -> impl Iterator<Item = &str> {
        self.system_intents
            .iter()
            .filter(move |i| i.role == role)
            .map(|i| i.name.as_str())
    }

    pub fn domain(&self, domain: &str) -> Result<&DomainSchema, OntologyError> {
        self.domains
            .get(domain)
            .ok_or_else(|| OntologyError::UnknownDomain(domain.to_string()))
    }

    pub fn slot(&self, domain: &str, slot: &str) -> Result<&SlotSchema, OntologyError> {
        self.domain(domain)?
            .slots
            .get(slot)
            .ok_or_else(|| OntologyError::UnknownSlot {
                domain: domain.to_string(),
                slot: slot.to_string(),
            })
    }

    /// The closed vocabulary of a slot; empty exactly when the slot is
    /// open-valued.
    pub fn legal_values(&self, domain: &str, slot: &str) -> Result<&[String], OntologyError> {
        Ok(&self.slot(domain, slot)?.values)
    }

    /// Draws a value for `domain`/`slot` uniformly among the legal values
    /// (or the candidate pool of an open slot), excluding `exclude`.
    pub fn random_alternative<R: Rng + ?Sized>(
        &self,
        domain: &str,
        slot: &str,
        exclude: &str,
        rng: &mut R,
    ) -> Result<String, OntologyError> {
        let pool = self.slot(domain, slot)?.sampling_pool();
        let alternatives: Vec<&String> = pool
            .iter()
            .filter(|v| !v.eq_ignore_ascii_case(exclude))
            .collect();
        if alternatives.is_empty() {
            return Err(OntologyError::Unreplaceable {
                domain: domain.to_string(),
                slot: slot.to_string(),
            });
        }
        Ok(alternatives[rng.random_range(0..alternatives.len())].clone())
    }

    pub fn slot_count(&self) -> usize {
        self.domains.values().map(|d| d.slots.len()).sum()
    }

    pub fn value_count(&self) -> usize {
        self.domains
            .values()
            .flat_map(|d| d.slots.values())
            .map(|s| s.values.len())
            .sum()
    }

    pub fn user_intent_count(&self) -> usize {
        self.user_general_intents.len() + self.user_domain_intents.len()
    }

    /// Pretty-printed canonical document; `load_ontology` of the result
    /// reproduces `self`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ontology serializes")
    }
}
