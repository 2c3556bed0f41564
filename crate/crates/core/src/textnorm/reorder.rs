//! Subtree moves toward a target word order.

use std::fmt;

use super::{AdjOrder, ConlluSentence, MultiwordToken, ObjOrder, TypologyTarget};

/// A dependent that was left in place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub sent_id: String,
    pub rule: &'static str,
    /// Token id in the sentence as it was when the rule ran.
    pub token: usize,
    pub reason: String,
}

impl fmt::Display for Skip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.sent_id, self.rule, self.token, self.reason
        )
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    BeforeHead,
    AfterHead,
}

/// Tokens (0-based) in the subtree rooted at `root`, including `root`.
fn subtree(children: &[Vec<usize>], root: usize) -> Vec<usize> {
    let mut stack = vec![root];
    let mut out = Vec::new();
    while let Some(k) = stack.pop() {
        out.push(k);
        stack.extend(&children[k]);
    }
    out
}

fn reorder<P>(
    sentence: &ConlluSentence,
    rule: &'static str,
    side: Side,
    is_candidate: P,
) -> (ConlluSentence, Vec<Skip>)
where
    P: Fn(usize) -> bool,
{
    let n = sentence.tokens.len();
    let children = sentence.children();
    // order[p] = original index of the token now at position p
    let mut order: Vec<usize> = (0..n).collect();
    let mut skips = Vec::new();

    let mut candidates: Vec<usize> = (0..n).filter(|&k| is_candidate(k)).collect();
    // keep several dependents of one head in their original relative order
    if side == Side::AfterHead {
        candidates.reverse();
    }

    for dep in candidates {
        let head = sentence.tokens[dep].head - 1;
        let mut position = vec![0; n];
        for (p, &k) in order.iter().enumerate() {
            position[k] = p;
        }
        let members = subtree(&children, dep);
        let first = members.iter().map(|&k| position[k]).min().expect("non-empty");
        let last = members.iter().map(|&k| position[k]).max().expect("non-empty");
        if last - first + 1 != members.len() {
            let s = Skip {
                sent_id: sentence.sent_id.clone(),
                rule,
                token: sentence.tokens[dep].id,
                reason: "dependent subtree is not contiguous".into(),
            };
            log::warn!("skipped move: {s}");
            skips.push(s);
            continue;
        }
        let head_pos = position[head];
        let violates = match side {
            Side::BeforeHead => first > head_pos,
            Side::AfterHead => last < head_pos,
        };
        if !violates {
            continue;
        }
        let span: Vec<usize> = order.drain(first..=last).collect();
        let head_pos = order.iter().position(|&k| k == head).expect("head is outside the span");
        let at = match side {
            Side::BeforeHead => head_pos,
            Side::AfterHead => head_pos + 1,
        };
        order.splice(at..at, span);
    }

    if order.iter().enumerate().all(|(p, &k)| p == k) {
        return (sentence.clone(), skips);
    }
    (renumber(sentence, &order, rule, &mut skips), skips)
}

/// Rebuilds the sentence in the new linear order with ids `1..=n`.
fn renumber(
    sentence: &ConlluSentence,
    order: &[usize],
    rule: &'static str,
    skips: &mut Vec<Skip>,
) -> ConlluSentence {
    let n = order.len();
    let mut new_id = vec![0; n];
    for (p, &k) in order.iter().enumerate() {
        new_id[k] = p + 1;
    }
    let tokens = order
        .iter()
        .map(|&k| {
            let mut t = sentence.tokens[k].clone();
            t.id = new_id[k];
            t.head = if t.head == 0 { 0 } else { new_id[t.head - 1] };
            t
        })
        .collect();

    let mut mwt_ranges = Vec::new();
    for r in &sentence.mwt_ranges {
        let ids: Vec<usize> = (r.start - 1..r.end).map(|k| new_id[k]).collect();
        if ids.windows(2).all(|w| w[1] == w[0] + 1) {
            mwt_ranges.push(MultiwordToken {
                start: ids[0],
                end: ids[ids.len() - 1],
                ..r.clone()
            });
        } else {
            let s = Skip {
                sent_id: sentence.sent_id.clone(),
                rule,
                token: r.start,
                reason: format!("multiword token `{}` split by reordering; range dropped", r.form),
            };
            log::warn!("{s}");
            skips.push(s);
        }
    }
    mwt_ranges.sort_by_key(|r| r.start);

    // the original surface text no longer describes the sentence
    let comments = sentence
        .comments
        .iter()
        .filter(|c| !c.trim_start().starts_with("text ="))
        .cloned()
        .collect();

    ConlluSentence {
        sent_id: sentence.sent_id.clone(),
        comments,
        tokens,
        mwt_ranges,
    }
}

/// Moves `amod` adjectives of nouns, with their subtrees, to the side of the
/// noun required by `target.adj_order`.
pub fn reorder_adjectives(sentence: &ConlluSentence, target: &TypologyTarget) -> (ConlluSentence, Vec<Skip>) {
    let side = match target.adj_order {
        AdjOrder::AdjNoun => Side::BeforeHead,
        AdjOrder::NounAdj => Side::AfterHead,
    };
    reorder(sentence, "amod", side, |k| {
        let t = &sentence.tokens[k];
        t.head > 0
            && t.base_deprel() == "amod"
            && t.upos == "ADJ"
            && sentence.tokens[t.head - 1].upos == "NOUN"
    })
}

/// Moves direct objects of verbs, with their subtrees, to the side of the
/// verb required by `target.obj_order`.
pub fn reorder_object_verb(sentence: &ConlluSentence, target: &TypologyTarget) -> (ConlluSentence, Vec<Skip>) {
    let side = match target.obj_order {
        ObjOrder::ObjVerb => Side::BeforeHead,
        ObjOrder::VerbObj => Side::AfterHead,
    };
    reorder(sentence, "obj", side, |k| {
        let t = &sentence.tokens[k];
        t.head > 0 && t.base_deprel() == "obj" && sentence.tokens[t.head - 1].upos == "VERB"
    })
}
