//! CoNLL-U reading and writing.
//!
//! Only the basic dependency tree is kept. Empty nodes (decimal ids such as
//! `8.1`) belong to the enhanced graph and are dropped on read.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: bad {field} `{value}`")]
    BadField {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("sentence `{sent_id}`: token ids are not 1..n in order (found {found} at position {expected})")]
    NonSequentialIds {
        sent_id: String,
        expected: usize,
        found: usize,
    },
    #[error("sentence `{sent_id}`: token {id} has head {head}, which does not exist")]
    DanglingHead {
        sent_id: String,
        id: usize,
        head: usize,
    },
    #[error("sentence `{sent_id}`: token {id} is its own head")]
    SelfLoop { sent_id: String, id: usize },
    #[error("sentence `{sent_id}`: expected exactly one root, found {count}")]
    RootCount { sent_id: String, count: usize },
    #[error("sentence `{sent_id}`: dependency cycle through token {id}")]
    Cycle { sent_id: String, id: usize },
    #[error("sentence `{sent_id}`: multiword range {start}-{end} is invalid or overlaps another")]
    BadRange {
        sent_id: String,
        start: usize,
        end: usize,
    },
    #[error("sentence `{sent_id}` has no tokens")]
    Empty { sent_id: String },
}

/// One syntactic word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluToken {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: BTreeMap<String, String>,
    /// 0 marks the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl ConlluToken {
    /// The universal part of the relation label (`obl:tmod` -> `obl`).
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }
}

/// An orthographic token covering syntactic words `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiwordToken {
    pub start: usize,
    pub end: usize,
    pub form: String,
    pub misc: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluSentence {
    pub sent_id: String,
    /// Comment lines without the leading `#`, in file order.
    pub comments: Vec<String>,
    pub tokens: Vec<ConlluToken>,
    pub mwt_ranges: Vec<MultiwordToken>,
}

impl ConlluSentence {
    /// Checks ids, single root, acyclicity and range layout.
    pub fn validate(&self) -> Result<(), ConlluError> {
        let sent_id = || self.sent_id.clone();
        let n = self.tokens.len();
        if n == 0 {
            return Err(ConlluError::Empty { sent_id: sent_id() });
        }
        for (k, t) in self.tokens.iter().enumerate() {
            if t.id != k + 1 {
                return Err(ConlluError::NonSequentialIds {
                    sent_id: sent_id(),
                    expected: k + 1,
                    found: t.id,
                });
            }
            if t.head == t.id {
                return Err(ConlluError::SelfLoop {
                    sent_id: sent_id(),
                    id: t.id,
                });
            }
            if t.head > n {
                return Err(ConlluError::DanglingHead {
                    sent_id: sent_id(),
                    id: t.id,
                    head: t.head,
                });
            }
        }
        let roots = self.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(ConlluError::RootCount {
                sent_id: sent_id(),
                count: roots,
            });
        }
        // every token must reach the root within n steps
        for t in &self.tokens {
            let mut cur = t.head;
            let mut steps = 0;
            while cur != 0 {
                cur = self.tokens[cur - 1].head;
                steps += 1;
                if steps > n {
                    return Err(ConlluError::Cycle {
                        sent_id: sent_id(),
                        id: t.id,
                    });
                }
            }
        }
        let mut last_end = 0;
        let mut ranges: Vec<&MultiwordToken> = self.mwt_ranges.iter().collect();
        ranges.sort_by_key(|r| r.start);
        for r in ranges {
            if r.start == 0 || r.start > r.end || r.end > n || r.start <= last_end {
                return Err(ConlluError::BadRange {
                    sent_id: sent_id(),
                    start: r.start,
                    end: r.end,
                });
            }
            last_end = r.end;
        }
        Ok(())
    }

    /// The `# text = ...` comment, if present.
    pub fn text(&self) -> Option<&str> {
        self.comments
            .iter()
            .find_map(|c| c.trim_start().strip_prefix("text ="))
            .map(str::trim)
    }

    /// Children of each token, indexed by 0-based token position.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.tokens.len()];
        for (k, t) in self.tokens.iter().enumerate() {
            if t.head > 0 {
                children[t.head - 1].push(k);
            }
        }
        children
    }
}

fn parse_usize(value: &str, field: &'static str, line: usize) -> Result<usize, ConlluError> {
    value.parse().map_err(|_| ConlluError::BadField {
        line,
        field,
        value: value.to_string(),
    })
}

fn parse_feats(value: &str, line: usize) -> Result<BTreeMap<String, String>, ConlluError> {
    if value == "_" {
        return Ok(BTreeMap::new());
    }
    value
        .split('|')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| ConlluError::BadField {
                    line,
                    field: "FEATS",
                    value: value.to_string(),
                })
        })
        .collect()
}

struct Builder {
    sent_id: Option<String>,
    comments: Vec<String>,
    tokens: Vec<ConlluToken>,
    mwt_ranges: Vec<MultiwordToken>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            sent_id: None,
            comments: Vec::new(),
            tokens: Vec::new(),
            mwt_ranges: Vec::new(),
        }
    }

    fn is_empty(&self) -> bool {
        self.tokens.is_empty() && self.mwt_ranges.is_empty() && self.comments.is_empty()
    }

    fn finish(self, ordinal: usize) -> Result<ConlluSentence, ConlluError> {
        let sentence = ConlluSentence {
            sent_id: self.sent_id.unwrap_or_else(|| format!("s{ordinal}")),
            comments: self.comments,
            tokens: self.tokens,
            mwt_ranges: self.mwt_ranges,
        };
        sentence.validate()?;
        Ok(sentence)
    }
}

/// Parses CoNLL-U text into validated sentences.
///
/// A sentence without a `# sent_id` comment is named `s<k>` after its
/// 1-based position in the input.
pub fn parse_conllu(text: &str) -> Result<Vec<ConlluSentence>, ConlluError> {
    let mut sentences = Vec::new();
    let mut current = Builder::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                let done = std::mem::replace(&mut current, Builder::new());
                sentences.push(done.finish(sentences.len() + 1)?);
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim_start().strip_prefix("sent_id") {
                let id = id.trim_start().trim_start_matches('=').trim();
                current.sent_id = Some(id.to_string());
            }
            current.comments.push(comment.to_string());
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let id = cols[0];
        if id.contains('.') {
            continue;
        }
        if let Some((a, b)) = id.split_once('-') {
            current.mwt_ranges.push(MultiwordToken {
                start: parse_usize(a, "ID", line_no)?,
                end: parse_usize(b, "ID", line_no)?,
                form: cols[1].to_string(),
                misc: cols[9].to_string(),
            });
            continue;
        }
        current.tokens.push(ConlluToken {
            id: parse_usize(id, "ID", line_no)?,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: parse_feats(cols[5], line_no)?,
            head: parse_usize(cols[6], "HEAD", line_no)?,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
        });
    }
    if !current.is_empty() {
        sentences.push(current.finish(sentences.len() + 1)?);
    }
    Ok(sentences)
}

impl fmt::Display for ConlluSentence {
    /// Writes the sentence as a CoNLL-U block, terminated by a blank line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.comments {
            writeln!(f, "#{c}")?;
        }
        for t in &self.tokens {
            for r in self.mwt_ranges.iter().filter(|r| r.start == t.id) {
                writeln!(f, "{}-{}\t{}\t_\t_\t_\t_\t_\t_\t_\t{}", r.start, r.end, r.form, r.misc)?;
            }
            let feats = if t.feats.is_empty() {
                "_".to_string()
            } else {
                t.feats
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join("|")
            };
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.id, t.form, t.lemma, t.upos, t.xpos, feats, t.head, t.deprel, t.deps, t.misc
            )?;
        }
        writeln!(f)
    }
}
