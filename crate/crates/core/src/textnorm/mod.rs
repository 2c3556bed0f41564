//! Typology-driven normalization of input text.
//!
//! Sentences come in as CoNLL-U parses. Contractions are split into their
//! syntactic words, adjectival modifiers and direct objects are moved to the
//! side of their head that a target word order asks for, and the result is
//! rendered back to plain text.
//!
//! Reordering moves whole dependent subtrees. A dependent whose subtree does
//! not occupy a contiguous span is left where it is and reported as a
//! [`Skip`]. Only direct `obj` dependents are reordered; clausal complements
//! are not.

mod conllu;
mod reorder;

use serde::{Deserialize, Serialize};

pub use conllu::{parse_conllu, ConlluError, ConlluSentence, ConlluToken, MultiwordToken};
pub use reorder::{reorder_adjectives, reorder_object_verb, Skip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjOrder {
    AdjNoun,
    NounAdj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjOrder {
    VerbObj,
    ObjVerb,
}

/// Word-order target, typically read off the pivot language's WALS entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypologyTarget {
    pub adj_order: AdjOrder,
    pub obj_order: ObjOrder,
}

impl Default for TypologyTarget {
    /// English order: adjective before noun, verb before object.
    fn default() -> Self {
        TypologyTarget {
            adj_order: AdjOrder::AdjNoun,
            obj_order: ObjOrder::VerbObj,
        }
    }
}

/// Drops multiword ranges so that rendering uses the syntactic words.
pub fn expand_contractions(sentence: &ConlluSentence) -> ConlluSentence {
    ConlluSentence {
        mwt_ranges: Vec::new(),
        ..sentence.clone()
    }
}

/// Space-joined surface text. Multiword ranges replace the words they cover;
/// with `strip_punct`, `PUNCT` words (and ranges made only of them) are dropped.
pub fn render_text(sentence: &ConlluSentence, strip_punct: bool) -> String {
    let is_punct = |t: &ConlluToken| strip_punct && t.upos == "PUNCT";
    let mut out: Vec<&str> = Vec::with_capacity(sentence.tokens.len());
    let mut k = 0;
    while k < sentence.tokens.len() {
        let t = &sentence.tokens[k];
        if let Some(r) = sentence.mwt_ranges.iter().find(|r| r.start == t.id) {
            let covered = &sentence.tokens[r.start - 1..r.end];
            if !covered.iter().all(is_punct) {
                out.push(&r.form);
            }
            k = r.end;
            continue;
        }
        if !is_punct(t) {
            out.push(&t.form);
        }
        k += 1;
    }
    out.join(" ")
}

/// Settings for [`normalize_sentence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextNormOptions {
    pub expand_contractions: bool,
    pub adj_order: Option<AdjOrder>,
    pub obj_order: Option<ObjOrder>,
    pub strip_punct: bool,
}

/// Applies the configured steps in a fixed order: contractions, adjectives,
/// objects. Returns the rewritten sentence and any skipped moves.
pub fn normalize_sentence(sentence: &ConlluSentence, opts: &TextNormOptions) -> (ConlluSentence, Vec<Skip>) {
    let mut s = if opts.expand_contractions {
        expand_contractions(sentence)
    } else {
        sentence.clone()
    };
    let mut skips = Vec::new();
    if let Some(adj_order) = opts.adj_order {
        let target = TypologyTarget {
            adj_order,
            ..TypologyTarget::default()
        };
        let (next, sk) = reorder_adjectives(&s, &target);
        s = next;
        skips.extend(sk);
    }
    if let Some(obj_order) = opts.obj_order {
        let target = TypologyTarget {
            obj_order,
            ..TypologyTarget::default()
        };
        let (next, sk) = reorder_object_verb(&s, &target);
        s = next;
        skips.extend(sk);
    }
    (s, skips)
}
