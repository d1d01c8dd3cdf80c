//! Semantic actions and the canonical JSON sequence formats.
//!
//! Model input:
//!
//! ```text
//! {"system": [["request", "hotel", "price", "?"]], "user": [[["inform", "hotel", "area", "north"]]], "goal": [["hotel", "info", "area", "north", "fulfilled"]], "turn": 1}
//! ```
//!
//! Model output:
//!
//! ```text
//! {"action": [["inform", "hotel", "price", "dontcare"]], "text": "I don't care about the price."}
//! ```
//!
//! Keys are lowercase and in the fixed order shown, every colon and comma is
//! followed by exactly one space, and there is no other whitespace outside
//! strings. Strings use JSON escaping. `user` holds at most three past user
//! action lists, most recent first.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::goal::{update_on_system, update_on_user, GoalEntry, GoalKind, GoalStatus, UserGoal};
use crate::ontology::Ontology;
use crate::rng::dialogue_rng;

/// Domain of general intents.
pub const GENERAL_DOMAIN: &str = "general";
/// Placeholder for an absent slot or value.
pub const NONE: &str = "none";
/// Value of request actions and reqt goal entries.
pub const REQUESTED: &str = "?";
/// The user accepts any value.
pub const DONTCARE: &str = "dontcare";

/// Number of past user turns kept in the model input.
pub const HISTORY_LEN: usize = 3;

/// One `(intent, domain, slot, value)` tuple. Serializes as a 4-element array.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[String; 4]", into = "[String; 4]")]
pub struct SemanticAction {
    pub intent: String,
    pub domain: String,
    pub slot: String,
    pub value: String,
}

pub type ActionList = Vec<SemanticAction>;

impl SemanticAction {
    pub fn new(
        intent: impl Into<String>,
        domain: impl Into<String>,
        slot: impl Into<String>,
        value: impl Into<String>,
    ) -> Self {
        Self {
            intent: intent.into(),
            domain: domain.into(),
            slot: slot.into(),
            value: value.into(),
        }
    }

    /// `(intent, general, none, none)`.
    pub fn general(intent: impl Into<String>) -> Self {
        Self::new(intent, GENERAL_DOMAIN, NONE, NONE)
    }

    /// Lowercased copy, used wherever tuples are compared case-insensitively.
    pub fn normalized(&self) -> Self {
        Self::new(
            self.intent.to_lowercase(),
            self.domain.to_lowercase(),
            self.slot.to_lowercase(),
            self.value.to_lowercase(),
        )
    }

    /// Whether the value is a concrete string rather than a placeholder.
    pub fn has_concrete_value(&self) -> bool {
        self.value != REQUESTED && self.value != NONE
    }
}

impl From<[String; 4]> for SemanticAction {
    fn from([intent, domain, slot, value]: [String; 4]) -> Self {
        Self {
            intent,
            domain,
            slot,
            value,
        }
    }
}

impl From<SemanticAction> for [String; 4] {
    fn from(a: SemanticAction) -> Self {
        [a.intent, a.domain, a.slot, a.value]
    }
}

impl fmt::Display for SemanticAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.intent, self.domain, self.slot, self.value
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Shape(String),
    #[error("{field}[{index}] has {found} elements, expected {expected}")]
    Arity {
        field: &'static str,
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("{0} must be a string")]
    NonString(String),
    #[error("not in canonical form")]
    NonCanonical,
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// The input must be byte-identical to its canonical serialization.
    Strict,
    /// Whitespace may vary and the text field may be cut off; actions must be
    /// complete.
    Lenient,
}

/// Everything the user model sees in one turn.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InputContext {
    pub system_action: ActionList,
    user_history: Vec<ActionList>,
    pub goal: UserGoal,
    pub turn: u32,
}

impl InputContext {
    /// Keeps only the first [`HISTORY_LEN`] history entries (most recent first).
    pub fn new(
        system_action: ActionList,
        mut user_history: Vec<ActionList>,
        goal: UserGoal,
        turn: u32,
    ) -> Self {
        user_history.truncate(HISTORY_LEN);
        Self {
            system_action,
            user_history,
            goal,
            turn,
        }
    }

    pub fn user_history(&self) -> &[ActionList] {
        &self.user_history
    }

    /// Records the user's latest action list, dropping the oldest past three.
    pub fn push_user_turn(&mut self, actions: ActionList) {
        self.user_history.insert(0, actions);
        self.user_history.truncate(HISTORY_LEN);
    }

    pub fn clear_history(&mut self) {
        self.user_history.clear();
    }
}

/// One model output: the action list and its utterance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub action: ActionList,
    pub text: String,
}

impl OutputRecord {
    pub fn new(action: ActionList, text: impl Into<String>) -> Self {
        Self {
            action,
            text: text.into(),
        }
    }
}

fn push_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings serialize"));
}

fn push_list<T>(out: &mut String, items: &[T], mut each: impl FnMut(&mut String, &T)) {
    out.push('[');
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        each(out, item);
    }
    out.push(']');
}

fn push_strs(out: &mut String, fields: &[&str]) {
    push_list(out, fields, |o, s| push_str(o, s));
}

fn push_action(out: &mut String, a: &SemanticAction) {
    push_strs(out, &[&a.intent, &a.domain, &a.slot, &a.value]);
}

/// Canonical rendering of an action list: `[["i", "d", "s", "v"], ...]`.
pub fn serialize_actions(actions: &[SemanticAction]) -> String {
    let mut out = String::new();
    push_list(&mut out, actions, push_action);
    out
}

fn push_goal(out: &mut String, g: &UserGoal) {
    push_list(out, g.entries(), |o, e| {
        push_strs(
            o,
            &[e.domain(), e.kind().as_str(), e.slot(), e.value(), e.status().as_str()],
        )
    });
}

/// Canonical rendering of a goal as a list of 5-tuples in priority order.
pub fn serialize_goal_tuples(g: &UserGoal) -> String {
    let mut out = String::new();
    push_goal(&mut out, g);
    out
}

pub fn serialize_input(ctx: &InputContext) -> String {
    let mut out = String::from("{\"system\": ");
    push_list(&mut out, &ctx.system_action, push_action);
    out.push_str(", \"user\": ");
    push_list(&mut out, &ctx.user_history, |o, l| push_list(o, l, push_action));
    out.push_str(", \"goal\": ");
    push_goal(&mut out, &ctx.goal);
    out.push_str(&format!(", \"turn\": {}}}", ctx.turn));
    out
}

pub fn serialize_output(rec: &OutputRecord) -> String {
    let mut out = String::from("{\"action\": ");
    push_list(&mut out, &rec.action, push_action);
    out.push_str(", \"text\": ");
    push_str(&mut out, &rec.text);
    out.push('}');
    out
}

fn expect_object<'a>(
    v: &'a Value,
    keys: &[&str],
) -> Result<&'a serde_json::Map<String, Value>, FormatError> {
    let obj = v
        .as_object()
        .ok_or_else(|| FormatError::Shape("expected a JSON object".to_string()))?;
    for k in keys {
        if !obj.contains_key(*k) {
            return Err(FormatError::Shape(format!("missing key `{k}`")));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(FormatError::Shape(format!("unexpected key `{extra}`")));
    }
    Ok(obj)
}

fn expect_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>, FormatError> {
    v.as_array()
        .ok_or_else(|| FormatError::Shape(format!("{what} must be a list")))
}

fn string_tuple<const N: usize>(
    v: &Value,
    field: &'static str,
    index: usize,
) -> Result<[String; N], FormatError> {
    let items = expect_array(v, field)?;
    if items.len() != N {
        return Err(FormatError::Arity {
            field,
            index,
            found: items.len(),
            expected: N,
        });
    }
    let mut out: [String; N] = core::array::from_fn(|_| String::new());
    for (slot, item) in out.iter_mut().zip(items) {
        *slot = item
            .as_str()
            .ok_or_else(|| FormatError::NonString(format!("{field}[{index}] element")))?
            .to_string();
    }
    Ok(out)
}

fn action_list(v: &Value, field: &'static str) -> Result<ActionList, FormatError> {
    expect_array(v, field)?
        .iter()
        .enumerate()
        .map(|(i, a)| string_tuple::<4>(a, field, i).map(SemanticAction::from))
        .collect()
}

fn goal_tuples(v: &Value) -> Result<UserGoal, FormatError> {
    let mut entries = Vec::new();
    for (i, t) in expect_array(v, "goal")?.iter().enumerate() {
        let [d, kind, s, value, status] = string_tuple::<5>(t, "goal", i)?;
        let kind = GoalKind::parse(&kind)
            .ok_or_else(|| FormatError::Shape(format!("goal[{i}]: unknown kind `{kind}`")))?;
        let status = GoalStatus::parse(&status)
            .ok_or_else(|| FormatError::Shape(format!("goal[{i}]: unknown status `{status}`")))?;
        let e = GoalEntry::restore(d, kind, s, value, status)
            .map_err(|e| FormatError::Shape(format!("goal[{i}]: {e}")))?;
        entries.push(e);
    }
    UserGoal::new(entries).map_err(|e| FormatError::Shape(e.to_string()))
}

fn check_canonical(original: &str, rendered: String) -> Result<(), FormatError> {
    if original == rendered {
        Ok(())
    } else {
        Err(FormatError::NonCanonical)
    }
}

pub fn parse_input(s: &str, mode: ParseMode) -> Result<InputContext, FormatError> {
    let v: Value = serde_json::from_str(s)?;
    let obj = expect_object(&v, &["system", "user", "goal", "turn"])?;
    let system_action = action_list(&obj["system"], "system")?;
    let history = expect_array(&obj["user"], "user")?
        .iter()
        .map(|l| action_list(l, "user"))
        .collect::<Result<Vec<_>, _>>()?;
    if history.len() > HISTORY_LEN {
        return Err(FormatError::Shape(format!(
            "user history has {} turns, at most {HISTORY_LEN} allowed",
            history.len()
        )));
    }
    let goal = goal_tuples(&obj["goal"])?;
    let turn = obj["turn"]
        .as_u64()
        .and_then(|t| u32::try_from(t).ok())
        .ok_or_else(|| FormatError::Shape("turn must be a non-negative integer".to_string()))?;
    let ctx = InputContext::new(system_action, history, goal, turn);
    if mode == ParseMode::Strict {
        check_canonical(s, serialize_input(&ctx))?;
    }
    Ok(ctx)
}

pub fn parse_output(s: &str, mode: ParseMode) -> Result<OutputRecord, FormatError> {
    match serde_json::from_str::<Value>(s) {
        Ok(v) => {
            let obj = expect_object(&v, &["action", "text"])?;
            let action = action_list(&obj["action"], "action")?;
            let text = obj["text"]
                .as_str()
                .ok_or_else(|| FormatError::NonString("text".to_string()))?
                .to_string();
            let rec = OutputRecord { action, text };
            if mode == ParseMode::Strict {
                check_canonical(s, serialize_output(&rec))?;
            }
            Ok(rec)
        }
        Err(e) if mode == ParseMode::Lenient => recover_truncated(s).ok_or_else(|| e.into()),
        Err(e) => Err(e.into()),
    }
}

/// Recovers a record whose text field was cut off mid-string.
fn recover_truncated(s: &str) -> Option<OutputRecord> {
    let key = s.rfind("\"text\"")?;
    let head = s[..key].trim_end().strip_suffix(',')?;
    let mut closed = String::from(head);
    closed.push('}');
    let v: Value = serde_json::from_str(&closed).ok()?;
    let obj = expect_object(&v, &["action"]).ok()?;
    let action = action_list(&obj["action"], "action").ok()?;
    let rest = s[key + "\"text\"".len()..].trim_start().strip_prefix(':')?;
    let rest = rest.trim_start().strip_prefix('"')?;
    Some(OutputRecord {
        action,
        text: unescape_prefix(rest),
    })
}

/// Decodes a JSON string body up to its closing quote or the end of input,
/// dropping an escape sequence that was cut off.
fn unescape_prefix(body: &str) -> String {
    let mut out = String::new();
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => break,
            '\\' => match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('b') => out.push('\u{8}'),
                Some('f') => out.push('\u{c}'),
                Some('u') => {
                    let hex: String = chars.by_ref().take(4).collect();
                    match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                        Some(ch) if hex.len() == 4 => out.push(ch),
                        _ => break,
                    }
                }
                Some(other) => out.push(other),
                None => break,
            },
            c => out.push(c),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Sys,
    Usr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTurn {
    pub speaker: Speaker,
    pub action: ActionList,
    #[serde(default)]
    pub text: String,
}

/// One line of a dialogue corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub goal: UserGoal,
    pub turns: Vec<CorpusTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct CorpusError {
    pub line: usize,
    pub message: String,
}

/// Parses a JSONL corpus. Blank lines and `{"provenance": ...}` header lines
/// are skipped; every bad line is reported, with 1-based line numbers.
pub fn parse_corpus(text: &str) -> Result<Vec<Dialogue>, Vec<CorpusError>> {
    let mut dialogues = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || is_provenance_line(line) {
            continue;
        }
        match serde_json::from_str::<Dialogue>(line) {
            Ok(d) => dialogues.push(d),
            Err(e) => errors.push(CorpusError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(dialogues)
    } else {
        Err(errors)
    }
}

/// True for a header line of the form `{"provenance": ...}`.
pub fn is_provenance_line(line: &str) -> bool {
    line.trim_start()
        .strip_prefix('{')
        .is_some_and(|rest| rest.trim_start().starts_with("\"provenance\""))
}

/// Which context fields a supervised pair keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    Full,
    NoHistory,
    NoGoalNoHistory,
}

impl Features {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Features::Full),
            "no_history" => Some(Features::NoHistory),
            "no_goal_no_history" => Some(Features::NoGoalNoHistory),
            _ => None,
        }
    }
}

/// One `(input, output)` training pair per user turn.
///
/// The goal is tracked through the dialogue with the normal update rules;
/// value replacement after a failure uses the stream `(0, dialogue index)`,
/// so the pairs are a pure function of the corpus.
pub fn build_supervised_pairs(
    corpus: &[Dialogue],
    features: Features,
    o: &Ontology,
) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for (idx, d) in corpus.iter().enumerate() {
        let mut rng = dialogue_rng(0, idx as u64);
        let mut goal = d.goal.clone();
        let mut ctx = InputContext::default();
        let mut turn = 0u32;
        for t in &d.turns {
            match t.speaker {
                Speaker::Sys => {
                    goal = update_on_system(&goal, &t.action, o, &mut rng).0;
                    ctx.system_action = t.action.clone();
                }
                Speaker::Usr => {
                    let mut input = InputContext::new(
                        ctx.system_action.clone(),
                        ctx.user_history.clone(),
                        goal.clone(),
                        turn,
                    );
                    if features != Features::Full {
                        input.clear_history();
                    }
                    if features == Features::NoGoalNoHistory {
                        input.goal = UserGoal::empty();
                    }
                    let output = OutputRecord::new(t.action.clone(), t.text.clone());
                    pairs.push((serialize_input(&input), serialize_output(&output)));
                    goal = update_on_user(&goal, &t.action, o);
                    ctx.push_user_turn(t.action.clone());
                    ctx.system_action.clear();
                    turn += 1;
                }
            }
        }
    }
    pairs
}

/// Counts of each intent in a list, used by summaries.
pub fn intent_histogram(actions: &[SemanticAction]) -> BTreeMap<&str, usize> {
    let mut h = BTreeMap::new();
    for a in actions {
        *h.entry(a.intent.as_str()).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn act(i: &str, d: &str, s: &str, v: &str) -> SemanticAction {
        SemanticAction::new(i, d, s, v)
    }

    #[test]
    fn empty_input() {
        let s = serialize_input(&InputContext::default());
        assert_eq!(s, r#"{"system": [], "user": [], "goal": [], "turn": 0}"#);
        assert_eq!(parse_input(&s, ParseMode::Strict).unwrap(), InputContext::default());
    }

    #[test]
    fn output_examples() {
        let s = r#"{"action": [["inform", "hotel", "area", "north"]], "text": "In the north please."}"#;
        let rec = parse_output(s, ParseMode::Strict).unwrap();
        assert_eq!(rec.action, vec![act("inform", "hotel", "area", "north")]);
        assert_eq!(serialize_output(&rec), s);

        let rec = parse_output(r#"{"action": [], "text": "bye"}"#, ParseMode::Strict).unwrap();
        assert!(rec.action.is_empty());

        let err = parse_output(r#"{"action": [["inform", "hotel"]], "text": "x"}"#, ParseMode::Lenient);
        assert!(matches!(err, Err(FormatError::Arity { found: 2, expected: 4, .. })));
    }

    #[test]
    fn strict_rejects_whitespace_variants() {
        let s = r#"{"action":[["inform","hotel","area","north"]],"text":"x"}"#;
        assert_eq!(parse_output(s, ParseMode::Strict), Err(FormatError::NonCanonical));
        assert_eq!(parse_output(s, ParseMode::Lenient).unwrap().action.len(), 1);
    }

    #[test]
    fn lenient_recovers_truncated_text() {
        let s = r#"{"action": [["inform", "hotel", "area", "north"]], "text": "I want a hotel in the no"#;
        let rec = parse_output(s, ParseMode::Lenient).unwrap();
        assert_eq!(rec.text, "I want a hotel in the no");
        assert_eq!(rec.action.len(), 1);
        assert!(parse_output(s, ParseMode::Strict).is_err());
        // actions must be complete
        assert!(parse_output(r#"{"action": [["inform", "hot"#, ParseMode::Lenient).is_err());
    }

    #[test]
    fn non_string_fields() {
        let err = parse_output(r#"{"action": [["inform", "hotel", "area", 3]], "text": "x"}"#, ParseMode::Lenient);
        assert!(matches!(err, Err(FormatError::NonString(_))));
        let err = parse_output(r#"{"action": [], "text": 3}"#, ParseMode::Lenient);
        assert!(matches!(err, Err(FormatError::NonString(_))));
    }

    #[test]
    fn history_keeps_three_most_recent() {
        let mut ctx = InputContext::default();
        for t in 0..10 {
            ctx.push_user_turn(vec![act("inform", "hotel", "stars", &t.to_string())]);
        }
        let kept: Vec<&str> = ctx.user_history().iter().map(|l| l[0].value.as_str()).collect();
        assert_eq!(kept, vec!["9", "8", "7"]);
    }

    #[test]
    fn escaping_round_trips() {
        let rec = OutputRecord::new(vec![act("inform", "restaurant", "name", "kettle's \"yard\"")], "line\nbreak é");
        let s = serialize_output(&rec);
        assert_eq!(parse_output(&s, ParseMode::Strict).unwrap(), rec);
    }

    #[test]
    fn corpus_errors_name_lines() {
        let text = "{\"goal\": {\"entries\": []}, \"turns\": []}\n\nnot json\n{\"goal\": {}}";
        let errs = parse_corpus(text).unwrap_err();
        assert_eq!(errs.iter().map(|e| e.line).collect::<Vec<_>>(), vec![3, 4]);
    }
}
