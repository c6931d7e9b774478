//! Static domain-knowledge base: arm prior weights and lexical retrieval.
//!
//! Text normalization, applied to queries and entries alike:
//!
//! 1. Unicode NFKD decomposition, then every non-ASCII char is dropped
//!    (`"é"` becomes `"e"`).
//! 2. ASCII lowercase.
//! 3. Every char that is not an ASCII letter or digit becomes a space.
//! 4. Split on whitespace; empty tokens are discarded.
//!
//! Entries are scored by the cosine similarity of token-count vectors
//! between the query and the entry's text plus tags.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::model::{ArmId, ComponentId, ComponentSpace};

/// Default number of entries returned by retrieval.
pub const DEFAULT_K_RET: usize = 5;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge base is empty")]
    Empty,
    #[error("k_ret must be at least 1")]
    ZeroK,
    #[error("duplicate knowledge entry id {0}")]
    DuplicateEntry(String),
    #[error("entry {0} has a negative or non-finite weight hint")]
    BadWeight(String),
    #[error("cannot read knowledge file {path}: {reason}")]
    Load { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub entry_id: String,
    pub text: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub linked_components: Vec<ComponentId>,
    #[serde(default)]
    pub weight_hint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgeBase {
    pub entries: Vec<KnowledgeEntry>,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<KnowledgeEntry>) -> Result<Self, KnowledgeError> {
        let kb = Self { entries };
        kb.validate()?;
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let err = |reason: String| KnowledgeError::Load {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let entries: Vec<KnowledgeEntry> =
            serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Self::new(entries)
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(&e.entry_id) {
                return Err(KnowledgeError::DuplicateEntry(e.entry_id.clone()));
            }
            if let Some(w) = e.weight_hint {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(KnowledgeError::BadWeight(e.entry_id.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = text
        .nfkd()
        .filter(char::is_ascii)
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_alphanumeric() {
                c
            } else {
                ' '
            }
        })
        .collect();
    folded.split_whitespace().map(str::to_string).collect()
}

/// Relevance of an entry to an already-tokenized query.
pub trait RelevanceScorer {
    fn score(&self, query_tokens: &[String], entry: &KnowledgeEntry) -> f64;
}

/// Cosine similarity of token-count vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalCosine;

fn counts(tokens: &[String]) -> BTreeMap<&str, f64> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

impl RelevanceScorer for LexicalCosine {
    fn score(&self, query_tokens: &[String], entry: &KnowledgeEntry) -> f64 {
        let mut doc = tokenize(&entry.text);
        for tag in &entry.tags {
            doc.extend(tokenize(tag));
        }
        let q = counts(query_tokens);
        let d = counts(&doc);
        let dot: f64 = q
            .iter()
            .filter_map(|(t, a)| d.get(t).map(|b| a * b))
            .sum();
        if dot == 0.0 {
            return 0.0;
        }
        let norm = |m: &BTreeMap<&str, f64>| m.values().map(|x| x * x).sum::<f64>().sqrt();
        dot / (norm(&q) * norm(&d))
    }
}

/// Top `k_ret` entries by score descending, ties by entry id.
pub fn retrieve<'a>(
    query: &str,
    kb: &'a KnowledgeBase,
    k_ret: usize,
) -> Result<Vec<(&'a KnowledgeEntry, f64)>, KnowledgeError> {
    retrieve_with(&LexicalCosine, query, kb, k_ret)
}

pub fn retrieve_with<'a, S: RelevanceScorer>(
    scorer: &S,
    query: &str,
    kb: &'a KnowledgeBase,
    k_ret: usize,
) -> Result<Vec<(&'a KnowledgeEntry, f64)>, KnowledgeError> {
    if kb.is_empty() {
        return Err(KnowledgeError::Empty);
    }
    if k_ret == 0 {
        return Err(KnowledgeError::ZeroK);
    }
    let q = tokenize(query);
    let mut scored: Vec<(&KnowledgeEntry, f64)> =
        kb.entries.iter().map(|e| (e, scorer.score(&q, e))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.entry_id.cmp(&b.0.entry_id)));
    scored.truncate(k_ret);
    Ok(scored)
}

/// Per arm, the largest weight hint among entries linked to the arm's
/// components; arms without hints get 1.0.
pub fn derive_arm_weights(kb: &KnowledgeBase, space: &ComponentSpace) -> BTreeMap<ArmId, f64> {
    let arm_of: BTreeMap<&ComponentId, ArmId> =
        space.components.iter().map(|c| (&c.id, c.arm())).collect();
    let mut hinted: BTreeMap<ArmId, f64> = BTreeMap::new();
    for e in &kb.entries {
        let Some(w) = e.weight_hint else { continue };
        let arms: BTreeSet<&ArmId> = e
            .linked_components
            .iter()
            .filter_map(|c| arm_of.get(c))
            .collect();
        for arm in arms {
            let slot = hinted.entry(arm.clone()).or_insert(w);
            *slot = slot.max(w);
        }
    }
    space
        .arm_ids()
        .into_iter()
        .map(|a| {
            let w = hinted.get(&a).copied().unwrap_or(1.0);
            (a, w)
        })
        .collect()
}
