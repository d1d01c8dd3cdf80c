//! Template realizer.
//!
//! Templates are keyed `intent|domain|slot`, with `*` as a wildcard for the
//! domain or slot. Lookup tries, in order: `dontcare|domain|slot` style keys
//! for `dontcare` values, the exact key, `intent|domain|*`, `intent|*|slot`,
//! `intent|*|*`, `role:<role>|none` (for actions without a slot),
//! `role:<role>`, and finally a built-in generic sentence. Placeholders are
//! `{domain}`, `{slot}` and `{value}`; underscores in domain and slot names are
//! rendered as spaces.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::action::{SemanticAction, DONTCARE, NONE, REQUESTED};
use crate::ontology::Ontology;

const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Speaker {
    User,
    System,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateTable {
    #[serde(default)]
    pub user: BTreeMap<String, String>,
    #[serde(default)]
    pub system: BTreeMap<String, String>,
}

impl TemplateTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The shipped table.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_TEMPLATES).expect("shipped templates parse")
    }

    fn side(&self, speaker: Speaker) -> &BTreeMap<String, String> {
        match speaker {
            Speaker::User => &self.user,
            Speaker::System => &self.system,
        }
    }

    fn lookup(&self, speaker: Speaker, a: &SemanticAction, role: Option<&str>) -> Option<&str> {
        let table = self.side(speaker);
        let (i, d, s) = (a.intent.as_str(), a.domain.as_str(), a.slot.as_str());
        let mut keys: Vec<String> = Vec::new();
        if a.value == DONTCARE {
            keys.push(format!("dontcare|{d}|{s}"));
            keys.push(format!("dontcare|*|{s}"));
            keys.push("dontcare|*|*".to_string());
        }
        keys.push(format!("{i}|{d}|{s}"));
        keys.push(format!("{i}|{d}|*"));
        keys.push(format!("{i}|*|{s}"));
        keys.push(format!("{i}|*|*"));
        if let Some(r) = role {
            if s == NONE {
                keys.push(format!("role:{r}|none"));
            }
            keys.push(format!("role:{r}"));
        }
        keys.iter().find_map(|k| table.get(k).map(String::as_str))
    }
}

fn words(name: &str) -> String {
    name.replace('_', " ")
}

fn fill(template: &str, a: &SemanticAction) -> String {
    template
        .replace("{domain}", &words(&a.domain))
        .replace("{slot}", &words(&a.slot))
        .replace("{value}", &a.value)
}

fn generic(a: &SemanticAction) -> String {
    if a.value == REQUESTED {
        format!("What about the {} of the {}?", words(&a.slot), words(&a.domain))
    } else if a.slot == NONE {
        format!("{}.", words(&a.intent))
    } else if a.value == NONE {
        format!("About the {}.", words(&a.slot))
    } else {
        format!("The {} should be {}.", words(&a.slot), a.value)
    }
}

/// Renders an action list as one utterance, one sentence per action.
/// An empty list gets the table's `empty` acknowledgment.
pub fn realize(table: &TemplateTable, al: &[SemanticAction], speaker: Speaker, o: &Ontology) -> String {
    if al.is_empty() {
        return table
            .side(speaker)
            .get("empty")
            .cloned()
            .unwrap_or_else(|| "Okay.".to_string());
    }
    let sentences: Vec<String> = al
        .iter()
        .map(|a| {
            let role = match speaker {
                Speaker::User => o.user_role(&a.intent),
                Speaker::System => o.system_role(&a.intent),
            };
            match table.lookup(speaker, a, role.map(|r| r.as_str())) {
                Some(t) => fill(t, a),
                None => generic(a),
            }
        })
        .collect();
    sentences.join(" ")
}
