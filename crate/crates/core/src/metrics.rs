//! Evaluation metrics: slot error rate, corpus BLEU, self-BLEU and
//! micro precision/recall/F1 with turn accuracy.
//!
//! Tokenization (shared by SER and BLEU): lowercase, then every maximal run of
//! alphanumeric characters is a token and every other non-whitespace
//! character is a token of its own. `"8:00"` becomes `8 : 00`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::action::{SemanticAction, DONTCARE};
use crate::ontology::Ontology;
use crate::stats;

/// Numerator used for n-gram orders with no matches.
pub const BLEU_SMOOTHING: f64 = 1e-4;
pub const BLEU_MAX_ORDER: usize = 4;

/// Surface forms accepted as a realization of `dontcare`.
pub const DONTCARE_PHRASES: [&str; 8] = [
    "dontcare",
    "don't care",
    "dont care",
    "do not care",
    "doesn't matter",
    "does not matter",
    "don't mind",
    "any",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("candidate {0} has no references")]
    NoReferences(usize),
    #[error("self-BLEU needs at least two sentences")]
    TooFewSentences,
}

pub fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in s.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(core::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn occurrences(hay: &[String], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    (0..=hay.len() - needle.len())
        .filter(|&i| hay[i..i + needle.len()] == *needle)
        .collect()
}

/// Action list paired with an utterance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlgSample {
    pub actions: Vec<SemanticAction>,
    pub utterance: String,
}

/// Closed values whose appearance in an utterance counts as a hallucination
/// when no action carries them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SerLexicon {
    values: BTreeSet<String>,
}

impl SerLexicon {
    /// Closed ontology values, minus strings that are also domain names.
    /// Open-valued slots are left out on purpose.
    pub fn from_ontology(o: &Ontology) -> Self {
        let mut values = BTreeSet::new();
        for schema in o.domains().values() {
            for slot in schema.slots.values() {
                for v in &slot.values {
                    values.insert(v.to_lowercase());
                }
            }
        }
        for d in o.domains().keys() {
            values.remove(d.as_str());
        }
        Self { values }
    }

    pub fn from_values<I: IntoIterator<Item = S>, S: AsRef<str>>(values: I) -> Self {
        Self {
            values: values.into_iter().map(|v| v.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-sample or aggregate SER counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SerReport {
    /// `(m + h) / N`; `None` when `N = 0`.
    pub rate: Option<f64>,
    pub m: usize,
    pub h: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

/// Missing and hallucinated counts for one sample.
pub fn ser_counts(sample: &NlgSample, lexicon: &SerLexicon) -> (usize, usize, usize) {
    let tokens = tokenize(&sample.utterance);
    let mut covered = alloc::vec![false; tokens.len()];
    let (mut m, mut n) = (0, 0);
    let mut present_values = BTreeSet::new();
    for a in &sample.actions {
        if !a.has_concrete_value() {
            continue;
        }
        n += 1;
        present_values.insert(a.value.to_lowercase());
        let forms: Vec<Vec<String>> = if a.value.eq_ignore_ascii_case(DONTCARE) {
            DONTCARE_PHRASES.iter().map(|p| tokenize(p)).collect()
        } else {
            alloc::vec![tokenize(&a.value)]
        };
        let mut found = false;
        for form in &forms {
            for start in occurrences(&tokens, form) {
                found = true;
                covered[start..start + form.len()].iter_mut().for_each(|c| *c = true);
            }
        }
        if !found {
            m += 1;
        }
    }
    let h = lexicon
        .values
        .iter()
        .filter(|v| !present_values.contains(*v))
        .filter(|v| {
            let form = tokenize(v);
            occurrences(&tokens, &form)
                .into_iter()
                .any(|s| covered[s..s + form.len()].iter().all(|c| !c))
        })
        .count();
    (m, h, n)
}

/// Slot error rate `(m + h) / N` over all samples.
pub fn ser(samples: &[NlgSample], lexicon: &SerLexicon) -> SerReport {
    let (mut m, mut h, mut n) = (0, 0, 0);
    for s in samples {
        let (sm, sh, sn) = ser_counts(s, lexicon);
        m += sm;
        h += sh;
        n += sn;
    }
    SerReport {
        rate: (n > 0).then(|| (m + h) as f64 / n as f64),
        m,
        h,
        n,
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU on a 0-100 scale.
///
/// Clipped n-gram matches and totals are summed over the corpus for orders 1
/// to 4. Orders with no candidate n-grams at all are left out of the
/// geometric mean; orders with n-grams but no matches use
/// [`BLEU_SMOOTHING`] as numerator. The brevity penalty uses, per candidate,
/// the reference length closest to it (shorter on ties).
pub fn corpus_bleu(candidates: &[String], references: &[Vec<String>]) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut matches = [0usize; BLEU_MAX_ORDER];
    let mut totals = [0usize; BLEU_MAX_ORDER];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (i, (cand, refs)) in candidates.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(MetricsError::NoReferences(i));
        }
        let c = tokenize(cand);
        let rs: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
        cand_len += c.len();
        ref_len += rs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(c.len()), l))
            .expect("non-empty references");
        for n in 1..=BLEU_MAX_ORDER {
            let cand_counts = ngram_counts(&c, n);
            let mut max_ref: BTreeMap<&[String], usize> = BTreeMap::new();
            for r in &rs {
                for (g, k) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in cand_counts {
                totals[n - 1] += k;
                matches[n - 1] += k.min(max_ref.get(g).copied().unwrap_or(0));
            }
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..BLEU_MAX_ORDER {
        if totals[n] == 0 {
            continue;
        }
        let num = if matches[n] == 0 {
            BLEU_SMOOTHING
        } else {
            matches[n] as f64
        };
        log_sum += libm::log(num / totals[n] as f64);
        orders += 1;
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / cand_len as f64)
    };
    Ok(100.0 * bp * libm::exp(log_sum / orders as f64))
}

/// Mean BLEU of each sentence against all the others. Lower means more
/// diverse.
pub fn self_bleu(sentences: &[String]) -> Result<f64, MetricsError> {
    if sentences.len() < 2 {
        return Err(MetricsError::TooFewSentences);
    }
    let mut scores = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let others: Vec<String> = sentences
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, o)| o.clone())
            .collect();
        scores.push(corpus_bleu(core::slice::from_ref(s), &[others])?);
    }
    Ok(stats::mean(&scores).expect("non-empty"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticEvalPair {
    pub predicted: Vec<SemanticAction>,
    pub golden: Vec<SemanticAction>,
}

/// Micro-averaged tuple scores. Undefined ratios are reported as 0 with the
/// matching flag cleared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
    #[serde(rename = "acc")]
    pub accuracy: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

fn tuple_set(al: &[SemanticAction]) -> BTreeSet<SemanticAction> {
    al.iter().map(SemanticAction::normalized).collect()
}

pub fn semantic_prf(pairs: &[SemanticEvalPair]) -> PrfReport {
    let (mut tp, mut n_pred, mut n_gold, mut exact) = (0usize, 0usize, 0usize, 0usize);
    for p in pairs {
        let pred = tuple_set(&p.predicted);
        let gold = tuple_set(&p.golden);
        tp += pred.intersection(&gold).count();
        n_pred += pred.len();
        n_gold += gold.len();
        if pred == gold {
            exact += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, n_pred);
    let recall = ratio(tp, n_gold);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PrfReport {
        precision,
        recall,
        f1,
        accuracy: ratio(exact, pairs.len()),
        precision_defined: n_pred > 0,
        recall_defined: n_gold > 0,
    }
}

/// The combined evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ser: SerReport,
    pub bleu: Option<f64>,
    pub self_bleu: Option<f64>,
    pub semantic: Option<PrfReport>,
}
