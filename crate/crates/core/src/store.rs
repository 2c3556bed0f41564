//! Embedding data model and ingestion.
//!
//! Embeddings are stored one sentence per line as JSON:
//!
//! ```text
//! {"lang":"de","sent_id":"s17","layer":12,"tokens":["Das","Jahr"],"special":[false,false],"vectors":[[0.1,0.2],[0.3,0.4]]}
//! ```
//!
//! Word alignments use the Pharaoh convention, one sentence pair per line
//! (`<pair_id> <i-j> <i-j> ...`), together with a tab-separated pair index
//! (`<pair_id>\t<src_sent_id>\t<tgt_sent_id>`) that names the sentences each
//! pair refers to. Blank lines and lines starting with `#` are ignored in all
//! three formats.
//!
//! The format does not prescribe whether a token row is a sub-word piece or a
//! pooled word; that convention belongs to whoever dumped the vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite value at token {token}, dimension {dim}")]
    NonFinite {
        line: usize,
        token: usize,
        dim: usize,
    },
    #[error("line {line}: duplicate sentence (lang={lang}, layer={layer}, sent_id={sent_id})")]
    DuplicateSentence {
        line: usize,
        lang: String,
        layer: u32,
        sent_id: String,
    },
    #[error("line {line}: unknown pair id `{pair_id}`")]
    UnknownPair { line: usize, pair_id: String },
    #[error("line {line}: unknown sentence id `{sent_id}` in {side} corpus")]
    UnknownSentence {
        line: usize,
        sent_id: String,
        side: &'static str,
    },
    #[error("line {line}: sentence id `{sent_id}` is ambiguous in {side} corpus ({count} matches); filter by layer first")]
    AmbiguousSentence {
        line: usize,
        sent_id: String,
        side: &'static str,
        count: usize,
    },
    #[error("line {line}: link {src}-{tgt} out of range (source length {src_len}, target length {tgt_len})")]
    LinkOutOfRange {
        line: usize,
        src: usize,
        tgt: usize,
        src_len: usize,
        tgt_len: usize,
    },
    #[error("line {line}: duplicate link {src}-{tgt}")]
    DuplicateLink { line: usize, src: usize, tgt: usize },
    #[error("line {line}: pair `{pair_id}` has no links")]
    EmptyLinks { line: usize, pair_id: String },
    #[error("line {line}: duplicate pair id `{pair_id}`")]
    DuplicatePair { line: usize, pair_id: String },
    #[error("source sentences span several languages ({0}); cannot pick a pivot")]
    MixedPivot(String),
    #[error("invalid corpus: {0}")]
    Invalid(String),
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Identifies a sentence within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey {
    pub lang: String,
    pub layer: u32,
    pub sent_id: String,
}

/// One sentence's token vectors, dumped from a single encoder layer.
///
/// `vectors` is stored row-major: token `i` occupies
/// `vectors[i * dim..(i + 1) * dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub lang: String,
    pub sent_id: String,
    pub layer: u32,
    pub tokens: Vec<String>,
    pub special: Vec<bool>,
    pub dim: usize,
    pub vectors: Vec<f64>,
}

impl SentenceEmbedding {
    /// Builds a sentence from per-token rows. Rows must share one length.
    pub fn from_rows(
        lang: impl Into<String>,
        sent_id: impl Into<String>,
        layer: u32,
        tokens: Vec<String>,
        special: Vec<bool>,
        rows: &[Vec<f64>],
    ) -> Result<Self, StoreError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != tokens.len() {
            return Err(StoreError::Invalid(format!(
                "{} vector rows for {} tokens",
                rows.len(),
                tokens.len()
            )));
        }
        if special.len() != tokens.len() {
            return Err(StoreError::Invalid(format!(
                "{} special flags for {} tokens",
                special.len(),
                tokens.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(StoreError::Invalid(format!(
                "ragged vector rows ({} vs {dim})",
                bad.len()
            )));
        }
        Ok(SentenceEmbedding {
            lang: lang.into(),
            sent_id: sent_id.into(),
            layer,
            tokens,
            special,
            dim,
            vectors: rows.concat(),
        })
    }

    pub fn key(&self) -> SentenceKey {
        SentenceKey {
            lang: self.lang.clone(),
            layer: self.layer,
            sent_id: self.sent_id.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vector(&self, token: usize) -> &[f64] {
        &self.vectors[token * self.dim..(token + 1) * self.dim]
    }

    pub fn vector_mut(&mut self, token: usize) -> &mut [f64] {
        let dim = self.dim;
        &mut self.vectors[token * dim..(token + 1) * dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.chunks_exact(self.dim.max(1))
    }

    /// Indices of tokens that take part in pooling and transport.
    pub fn content_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.special
            .iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(i, _)| i)
    }

    pub fn content_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.content_indices().map(|i| self.vector(i))
    }

    /// Returns a copy with the same metadata and new vectors.
    pub fn with_vectors(&self, vectors: Vec<f64>) -> Self {
        debug_assert_eq!(vectors.len(), self.vectors.len());
        SentenceEmbedding {
            vectors,
            ..self.clone()
        }
    }
}

/// An ordered collection of sentence embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCorpus {
    pub dim: usize,
    pub sentences: Vec<Arc<SentenceEmbedding>>,
}

impl EmbeddingCorpus {
    /// Builds a corpus and checks every invariant.
    pub fn new(dim: usize, sentences: Vec<SentenceEmbedding>) -> Result<Self, StoreError> {
        let corpus = EmbeddingCorpus {
            dim,
            sentences: sentences.into_iter().map(Arc::new).collect(),
        };
        let report = validate_corpus(&corpus);
        if !report.is_empty() {
            return Err(StoreError::Invalid(report.to_string()));
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.sentences.iter().map(|s| s.lang.clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SentenceEmbedding> {
        self.sentences.iter().map(|s| s.as_ref())
    }

    /// Keeps only sentences dumped from `layer`.
    pub fn filter_layer(&self, layer: u32) -> Self {
        EmbeddingCorpus {
            dim: self.dim,
            sentences: self
                .sentences
                .iter()
                .filter(|s| s.layer == layer)
                .cloned()
                .collect(),
        }
    }

    /// Replaces every sentence by `f(sentence)`, preserving order.
    pub fn map_sentences<F>(&self, f: F) -> Self
    where
        F: Fn(&SentenceEmbedding) -> SentenceEmbedding,
    {
        EmbeddingCorpus {
            dim: self.dim,
            sentences: self.sentences.iter().map(|s| Arc::new(f(s))).collect(),
        }
    }

    /// Concatenates two corpora of equal dimension.
    pub fn concat(&self, other: &EmbeddingCorpus) -> Result<Self, StoreError> {
        if !self.is_empty() && !other.is_empty() && self.dim != other.dim {
            return Err(StoreError::Invalid(format!(
                "cannot concatenate corpora of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let dim = if self.is_empty() { other.dim } else { self.dim };
        let mut sentences = self.sentences.clone();
        sentences.extend(other.sentences.iter().cloned());
        let corpus = EmbeddingCorpus { dim, sentences };
        let report = validate_corpus(&corpus);
        if !report.is_empty() {
            return Err(StoreError::Invalid(report.to_string()));
        }
        Ok(corpus)
    }

    fn index(&self) -> HashMap<&str, Vec<&Arc<SentenceEmbedding>>> {
        let mut by_id: HashMap<&str, Vec<&Arc<SentenceEmbedding>>> = HashMap::new();
        for s in &self.sentences {
            by_id.entry(s.sent_id.as_str()).or_default().push(s);
        }
        by_id
    }

    pub fn get(&self, key: &SentenceKey) -> Option<&Arc<SentenceEmbedding>> {
        self.sentences.iter().find(|s| {
            s.layer == key.layer && s.lang == key.lang && s.sent_id == key.sent_id
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    lang: String,
    sent_id: String,
    layer: u32,
    tokens: Vec<String>,
    #[serde(default)]
    special: Vec<bool>,
    vectors: Vec<Vec<f64>>,
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Parses line-delimited embedding records.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    expected_dim: Option<usize>,
) -> Result<EmbeddingCorpus, StoreError> {
    let mut dim = expected_dim;
    let mut sentences = Vec::new();
    let mut seen: HashSet<SentenceKey> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| StoreError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if is_skippable(&line) {
            continue;
        }
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let n = record.tokens.len();
        if n == 0 {
            return Err(StoreError::Malformed {
                line: line_no,
                message: "sentence has no tokens".into(),
            });
        }
        if record.vectors.len() != n {
            return Err(StoreError::Malformed {
                line: line_no,
                message: format!("{} vector rows for {n} tokens", record.vectors.len()),
            });
        }
        let special = if record.special.is_empty() {
            vec![false; n]
        } else if record.special.len() == n {
            record.special
        } else {
            return Err(StoreError::Malformed {
                line: line_no,
                message: format!("{} special flags for {n} tokens", record.special.len()),
            });
        };
        let d = *dim.get_or_insert(record.vectors[0].len());
        for (t, row) in record.vectors.iter().enumerate() {
            if row.len() != d {
                return Err(StoreError::DimensionMismatch {
                    line: line_no,
                    expected: d,
                    found: row.len(),
                });
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite {
                    line: line_no,
                    token: t,
                    dim: k,
                });
            }
        }
        let key = SentenceKey {
            lang: record.lang.clone(),
            layer: record.layer,
            sent_id: record.sent_id.clone(),
        };
        if !seen.insert(key) {
            return Err(StoreError::DuplicateSentence {
                line: line_no,
                lang: record.lang,
                layer: record.layer,
                sent_id: record.sent_id,
            });
        }
        sentences.push(Arc::new(SentenceEmbedding {
            lang: record.lang,
            sent_id: record.sent_id,
            layer: record.layer,
            tokens: record.tokens,
            special,
            dim: d,
            vectors: record.vectors.concat(),
        }));
    }

    Ok(EmbeddingCorpus {
        dim: dim.unwrap_or(0),
        sentences,
    })
}

/// Loads an embedding corpus from a JSONL file.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingCorpus, StoreError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| StoreError::io(path, e))?;
    read_embeddings(BufReader::new(file), expected_dim)
}

/// Writes the canonical JSONL serialization of `corpus`.
pub fn write_embeddings<W: Write>(corpus: &EmbeddingCorpus, mut writer: W) -> io::Result<()> {
    for s in corpus.iter() {
        let record = EmbeddingRecord {
            lang: s.lang.clone(),
            sent_id: s.sent_id.clone(),
            layer: s.layer,
            tokens: s.tokens.clone(),
            special: s.special.clone(),
            vectors: s.rows().map(<[f64]>::to_vec).collect(),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_embeddings(corpus: &EmbeddingCorpus, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| StoreError::io(path, e))?;
    write_embeddings(corpus, io::BufWriter::new(file)).map_err(|e| StoreError::io(path, e))
}

/// A source/target sentence pair with its word alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSentencePair {
    pub id: String,
    pub src: Arc<SentenceEmbedding>,
    pub tgt: Arc<SentenceEmbedding>,
    pub links: Vec<(usize, usize)>,
}

/// Parallel data from one pivot language into any number of target languages.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub pivot_lang: String,
    pub pairs: Vec<AlignedSentencePair>,
}

impl ParallelCorpus {
    pub fn target_languages(&self) -> BTreeSet<String> {
        self.pairs.iter().map(|p| p.tgt.lang.clone()).collect()
    }

    pub fn by_target_language(&self) -> BTreeMap<&str, Vec<&AlignedSentencePair>> {
        let mut groups: BTreeMap<&str, Vec<&AlignedSentencePair>> = BTreeMap::new();
        for p in &self.pairs {
            groups.entry(p.tgt.lang.as_str()).or_default().push(p);
        }
        groups
    }

    pub fn link_count(&self) -> usize {
        self.pairs.iter().map(|p| p.links.len()).sum()
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.src.dim)
    }

    /// Re-points every pair at the same-keyed sentence in new corpora, e.g.
    /// after the corpora were normalized.
    pub fn rebind(
        &self,
        src: &EmbeddingCorpus,
        tgt: &EmbeddingCorpus,
    ) -> Result<ParallelCorpus, StoreError> {
        let lookup = |corpus: &EmbeddingCorpus| -> HashMap<SentenceKey, Arc<SentenceEmbedding>> {
            corpus.sentences.iter().map(|s| (s.key(), s.clone())).collect()
        };
        let src_map = lookup(src);
        let tgt_map = lookup(tgt);
        let mut pairs = Vec::with_capacity(self.pairs.len());
        for (n, p) in self.pairs.iter().enumerate() {
            let find = |map: &HashMap<SentenceKey, Arc<SentenceEmbedding>>,
                        s: &SentenceEmbedding,
                        side: &'static str| {
                map.get(&s.key())
                    .filter(|found| found.len() == s.len())
                    .cloned()
                    .ok_or_else(|| StoreError::UnknownSentence {
                        line: n + 1,
                        sent_id: s.sent_id.clone(),
                        side,
                    })
            };
            pairs.push(AlignedSentencePair {
                id: p.id.clone(),
                src: find(&src_map, &p.src, "source")?,
                tgt: find(&tgt_map, &p.tgt, "target")?,
                links: p.links.clone(),
            });
        }
        Ok(ParallelCorpus {
            pivot_lang: self.pivot_lang.clone(),
            pairs,
        })
    }
}

/// One entry of the pair index sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRef {
    pub pair_id: String,
    pub src_sent_id: String,
    pub tgt_sent_id: String,
}

/// Ordered mapping from pair ids to the sentences they join.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairIndex {
    pub entries: Vec<PairRef>,
    by_id: HashMap<String, usize>,
}

impl PairIndex {
    pub fn new(entries: Vec<PairRef>) -> Result<Self, StoreError> {
        let mut by_id = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if by_id.insert(e.pair_id.clone(), i).is_some() {
                return Err(StoreError::DuplicatePair {
                    line: i + 1,
                    pair_id: e.pair_id.clone(),
                });
            }
        }
        Ok(PairIndex { entries, by_id })
    }

    pub fn get(&self, pair_id: &str) -> Option<&PairRef> {
        self.by_id.get(pair_id).map(|&i| &self.entries[i])
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            if is_skippable(line) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(StoreError::Malformed {
                    line: idx + 1,
                    message: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            if !seen.insert(cols[0].to_string()) {
                return Err(StoreError::DuplicatePair {
                    line: idx + 1,
                    pair_id: cols[0].to_string(),
                });
            }
            entries.push(PairRef {
                pair_id: cols[0].to_string(),
                src_sent_id: cols[1].to_string(),
                tgt_sent_id: cols[2].trim_end().to_string(),
            });
        }
        PairIndex::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        PairIndex::parse(&text)
    }
}

/// Default sidecar location for an alignment file: `<path>.index`.
pub fn default_index_path(alignment_path: &Path) -> PathBuf {
    let mut s = alignment_path.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

/// Resolves a sentence id against a corpus, rejecting ambiguous ids.
pub fn resolve_sentence(
    corpus: &EmbeddingCorpus,
    sent_id: &str,
    side: &'static str,
    line: usize,
) -> Result<Arc<SentenceEmbedding>, StoreError> {
    let matches: Vec<_> = corpus
        .sentences
        .iter()
        .filter(|s| s.sent_id == sent_id)
        .collect();
    match matches.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(StoreError::UnknownSentence {
            line,
            sent_id: sent_id.to_string(),
            side,
        }),
        many => Err(StoreError::AmbiguousSentence {
            line,
            sent_id: sent_id.to_string(),
            side,
            count: many.len(),
        }),
    }
}

fn parse_link(tok: &str, line: usize) -> Result<(usize, usize), StoreError> {
    let malformed = || StoreError::Malformed {
        line,
        message: format!("bad link `{tok}`, expected i-j"),
    };
    let (i, j) = tok.split_once('-').ok_or_else(malformed)?;
    Ok((
        i.parse().map_err(|_| malformed())?,
        j.parse().map_err(|_| malformed())?,
    ))
}

/// Parses Pharaoh-format alignments against an index and two corpora.
pub fn parse_alignments(
    text: &str,
    index: &PairIndex,
    src_corpus: &EmbeddingCorpus,
    tgt_corpus: &EmbeddingCorpus,
) -> Result<ParallelCorpus, StoreError> {
    let src_index = src_corpus.index();
    let tgt_index = tgt_corpus.index();
    let resolve = |index: &HashMap<&str, Vec<&Arc<SentenceEmbedding>>>,
                   id: &str,
                   side: &'static str,
                   line: usize| {
        match index.get(id).map(Vec::as_slice) {
            Some([one]) => Ok((*one).clone()),
            Some(many) if many.len() > 1 => Err(StoreError::AmbiguousSentence {
                line,
                sent_id: id.to_string(),
                side,
                count: many.len(),
            }),
            _ => Err(StoreError::UnknownSentence {
                line,
                sent_id: id.to_string(),
                side,
            }),
        }
    };

    let mut pairs = Vec::new();
    let mut seen_pairs = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if is_skippable(line) {
            continue;
        }
        let mut fields = line.split_whitespace();
        let pair_id = fields.next().expect("non-blank line has a field");
        if !seen_pairs.insert(pair_id.to_string()) {
            return Err(StoreError::DuplicatePair {
                line: line_no,
                pair_id: pair_id.to_string(),
            });
        }
        let entry = index.get(pair_id).ok_or_else(|| StoreError::UnknownPair {
            line: line_no,
            pair_id: pair_id.to_string(),
        })?;
        let src = resolve(&src_index, &entry.src_sent_id, "source", line_no)?;
        let tgt = resolve(&tgt_index, &entry.tgt_sent_id, "target", line_no)?;

        let mut links = Vec::new();
        let mut seen_links = HashSet::new();
        for tok in fields {
            let (i, j) = parse_link(tok, line_no)?;
            if i >= src.len() || j >= tgt.len() {
                return Err(StoreError::LinkOutOfRange {
                    line: line_no,
                    src: i,
                    tgt: j,
                    src_len: src.len(),
                    tgt_len: tgt.len(),
                });
            }
            if !seen_links.insert((i, j)) {
                return Err(StoreError::DuplicateLink {
                    line: line_no,
                    src: i,
                    tgt: j,
                });
            }
            links.push((i, j));
        }
        if links.is_empty() {
            return Err(StoreError::EmptyLinks {
                line: line_no,
                pair_id: pair_id.to_string(),
            });
        }
        pairs.push(AlignedSentencePair {
            id: pair_id.to_string(),
            src,
            tgt,
            links,
        });
    }

    let pivot_langs: BTreeSet<String> = if pairs.is_empty() {
        src_corpus.languages()
    } else {
        pairs.iter().map(|p| p.src.lang.clone()).collect()
    };
    if pivot_langs.len() > 1 {
        return Err(StoreError::MixedPivot(
            pivot_langs.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }
    Ok(ParallelCorpus {
        pivot_lang: pivot_langs.into_iter().next().unwrap_or_default(),
        pairs,
    })
}

/// Loads alignments whose pair index sits next to them (see [`default_index_path`]).
pub fn load_alignments(
    path: impl AsRef<Path>,
    src_corpus: &EmbeddingCorpus,
    tgt_corpus: &EmbeddingCorpus,
) -> Result<ParallelCorpus, StoreError> {
    let path = path.as_ref();
    let index = PairIndex::load(default_index_path(path))?;
    load_alignments_with_index(path, &index, src_corpus, tgt_corpus)
}

pub fn load_alignments_with_index(
    path: impl AsRef<Path>,
    index: &PairIndex,
    src_corpus: &EmbeddingCorpus,
    tgt_corpus: &EmbeddingCorpus,
) -> Result<ParallelCorpus, StoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    parse_alignments(&text, index, src_corpus, tgt_corpus)
}

/// Writes alignments in Pharaoh format plus the matching pair index.
pub fn write_alignments<W1: Write, W2: Write>(
    corpus: &ParallelCorpus,
    mut alignments: W1,
    mut index: W2,
) -> io::Result<()> {
    for p in &corpus.pairs {
        write!(alignments, "{}", p.id)?;
        for (i, j) in &p.links {
            write!(alignments, " {i}-{j}")?;
        }
        writeln!(alignments)?;
        writeln!(index, "{}\t{}\t{}", p.id, p.src.sent_id, p.tgt.sent_id)?;
    }
    alignments.flush()?;
    index.flush()
}

/// A single invariant violation found by [`validate_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySentence {
        sentence: usize,
    },
    VectorShape {
        sentence: usize,
        expected: usize,
        found: usize,
    },
    SpecialMaskLength {
        sentence: usize,
        expected: usize,
        found: usize,
    },
    DimensionMismatch {
        sentence: usize,
        expected: usize,
        found: usize,
    },
    NonFinite {
        sentence: usize,
        token: usize,
        dim: usize,
    },
    NoContentToken {
        sentence: usize,
    },
    DuplicateKey {
        sentence: usize,
        first: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySentence { sentence } => write!(f, "sentence {sentence}: no tokens"),
            Violation::VectorShape {
                sentence,
                expected,
                found,
            } => write!(
                f,
                "sentence {sentence}: vector buffer holds {found} values, expected {expected}"
            ),
            Violation::SpecialMaskLength {
                sentence,
                expected,
                found,
            } => write!(
                f,
                "sentence {sentence}: special mask has {found} entries, expected {expected}"
            ),
            Violation::DimensionMismatch {
                sentence,
                expected,
                found,
            } => write!(
                f,
                "sentence {sentence}: dimension {found} differs from corpus dimension {expected}"
            ),
            Violation::NonFinite {
                sentence,
                token,
                dim,
            } => write!(
                f,
                "sentence {sentence}: non-finite value at token {token}, dimension {dim}"
            ),
            Violation::NoContentToken { sentence } => {
                write!(f, "sentence {sentence}: no non-special token")
            }
            Violation::DuplicateKey { sentence, first } => write!(
                f,
                "sentence {sentence}: duplicate (lang, layer, sent_id) of sentence {first}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Lists every invariant violation in `corpus`. Never fails.
pub fn validate_corpus(corpus: &EmbeddingCorpus) -> ValidationReport {
    let mut violations = Vec::new();
    let mut first_seen: HashMap<SentenceKey, usize> = HashMap::new();

    for (n, s) in corpus.sentences.iter().enumerate() {
        let tokens = s.tokens.len();
        if tokens == 0 {
            violations.push(Violation::EmptySentence { sentence: n });
        }
        if s.dim != corpus.dim {
            violations.push(Violation::DimensionMismatch {
                sentence: n,
                expected: corpus.dim,
                found: s.dim,
            });
        }
        if s.vectors.len() != tokens * s.dim {
            violations.push(Violation::VectorShape {
                sentence: n,
                expected: tokens * s.dim,
                found: s.vectors.len(),
            });
        } else {
            for (k, v) in s.vectors.iter().enumerate() {
                if !v.is_finite() {
                    violations.push(Violation::NonFinite {
                        sentence: n,
                        token: k / s.dim,
                        dim: k % s.dim,
                    });
                }
            }
        }
        if s.special.len() != tokens {
            violations.push(Violation::SpecialMaskLength {
                sentence: n,
                expected: tokens,
                found: s.special.len(),
            });
        } else if tokens > 0 && s.special.iter().all(|&b| b) {
            violations.push(Violation::NoContentToken { sentence: n });
        }
        if let Some(&first) = first_seen.get(&s.key()) {
            violations.push(Violation::DuplicateKey { sentence: n, first });
        } else {
            first_seen.insert(s.key(), n);
        }
    }
    ValidationReport { violations }
}
