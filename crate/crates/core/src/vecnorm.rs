//! Vector-space normalization: per-timestep batch normalization, layer
//! normalization and per-language standardization.
//!
//! All statistics use the population (divide-by-count) variance and every
//! entry is rewritten as `(x - mean) / sqrt(var + eps)`. There are no learned
//! scale or shift parameters.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::store::{EmbeddingCorpus, SentenceEmbedding};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_BATCH_SIZE: usize = 8;

/// Epsilon used by [`language_standardize`]. Small enough that a second pass
/// is a no-op to within 1e-9, large enough to keep constant dimensions at 0.
pub const LANGUAGE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NormError {
    #[error("batch size must be at least 1, got {0}")]
    BatchSize(usize),
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("language `{lang}` has {count} non-special token vectors; at least 2 are needed")]
    TooFewTokens { lang: String, count: usize },
}

/// What a set of statistics was computed over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "kebab-case")]
pub enum NormScope {
    /// One (batch, timestep) cell. `fallback` marks cells covered by fewer
    /// than two sequences, whose statistics pool every timestep of the batch.
    BatchTimestep {
        batch: usize,
        timestep: usize,
        fallback: bool,
    },
    Language { lang: String },
    Sequence { sentence: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    #[serde(flatten)]
    pub scope: NormScope,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub epsilon: f64,
    pub count: usize,
}

impl NormStats {
    fn from_rows<'a>(scope: NormScope, dim: usize, epsilon: f64, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let (mean, variance, count) = moments(dim, rows);
        NormStats {
            scope,
            mean,
            variance,
            epsilon,
            count,
        }
    }

    /// Standardizes `row` in place with these statistics.
    pub fn apply(&self, row: &mut [f64]) {
        for ((x, m), v) in row.iter_mut().zip(&self.mean).zip(&self.variance) {
            *x = (*x - m) / (v + self.epsilon).sqrt();
        }
    }
}

/// Per-dimension mean and population variance (two-pass).
fn moments<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> (Vec<f64>, Vec<f64>, usize) {
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    let n = rows.len();
    let mut mean = vec![0.0; dim];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for r in &rows {
        for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    (mean, var, n)
}

fn check_epsilon(epsilon: f64) -> Result<(), NormError> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(NormError::Epsilon(epsilon))
    }
}

/// Output of [`batch_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormOutput {
    pub corpus: EmbeddingCorpus,
    /// One entry per (batch, timestep) cell, in batch then timestep order.
    pub stats: Vec<NormStats>,
}

impl BatchNormOutput {
    /// Cells that fell back to whole-batch statistics.
    pub fn fallback_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.stats.iter().filter_map(|s| match s.scope {
            NormScope::BatchTimestep {
                batch,
                timestep,
                fallback: true,
            } => Some((batch, timestep)),
            _ => None,
        })
    }
}

fn normalize_batch(
    batch_idx: usize,
    batch: &[std::sync::Arc<SentenceEmbedding>],
    dim: usize,
    epsilon: f64,
) -> (Vec<SentenceEmbedding>, Vec<NormStats>) {
    let max_len = batch.iter().map(|s| s.len()).max().unwrap_or(0);
    let pooled = NormStats::from_rows(
        NormScope::BatchTimestep {
            batch: batch_idx,
            timestep: 0,
            fallback: true,
        },
        dim,
        epsilon,
        batch.iter().flat_map(|s| s.rows()),
    );

    let mut out: Vec<SentenceEmbedding> = batch.iter().map(|s| (**s).clone()).collect();
    let mut stats = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let covering: Vec<usize> = (0..batch.len()).filter(|&k| batch[k].len() > t).collect();
        let cell = if covering.len() >= 2 {
            NormStats::from_rows(
                NormScope::BatchTimestep {
                    batch: batch_idx,
                    timestep: t,
                    fallback: false,
                },
                dim,
                epsilon,
                covering.iter().map(|&k| batch[k].vector(t)),
            )
        } else {
            log::warn!(
                "batch {batch_idx}, timestep {t}: {} covering sequence(s); using whole-batch statistics",
                covering.len()
            );
            NormStats {
                scope: NormScope::BatchTimestep {
                    batch: batch_idx,
                    timestep: t,
                    fallback: true,
                },
                ..pooled.clone()
            }
        };
        for &k in &covering {
            cell.apply(out[k].vector_mut(t));
        }
        stats.push(cell);
    }
    (out, stats)
}

/// Batch normalization with per-batch statistics for each timestep.
///
/// Sentences are grouped into consecutive batches of `batch_size` in corpus
/// order. For timestep `t` the statistics cover the batch members longer than
/// `t`; cells with fewer than two such members use statistics pooled over all
/// tokens of the batch and are flagged in the returned stats.
pub fn batch_normalize(
    corpus: &EmbeddingCorpus,
    batch_size: usize,
    epsilon: f64,
) -> Result<BatchNormOutput, NormError> {
    if batch_size < 1 {
        return Err(NormError::BatchSize(batch_size));
    }
    check_epsilon(epsilon)?;
    let results: Vec<_> = corpus
        .sentences
        .par_chunks(batch_size)
        .enumerate()
        .map(|(b, batch)| normalize_batch(b, batch, corpus.dim, epsilon))
        .collect();

    let mut sentences = Vec::with_capacity(corpus.len());
    let mut stats = Vec::new();
    for (s, st) in results {
        sentences.extend(s.into_iter().map(std::sync::Arc::new));
        stats.extend(st);
    }
    Ok(BatchNormOutput {
        corpus: EmbeddingCorpus {
            dim: corpus.dim,
            sentences,
        },
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerNormVariant {
    /// Each token vector over its own dimensions.
    PerToken,
    /// Each sentence over all its tokens and dimensions jointly.
    PerSequence,
}

fn standardize_slice(values: &mut [f64], epsilon: f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let scale = (var + epsilon).sqrt();
    values.iter_mut().for_each(|x| *x = (*x - mean) / scale);
}

pub fn layer_normalize(
    corpus: &EmbeddingCorpus,
    variant: LayerNormVariant,
    epsilon: f64,
) -> Result<EmbeddingCorpus, NormError> {
    check_epsilon(epsilon)?;
    Ok(corpus.map_sentences(|s| {
        let mut vectors = s.vectors.clone();
        match variant {
            LayerNormVariant::PerToken => vectors
                .chunks_exact_mut(s.dim.max(1))
                .for_each(|row| standardize_slice(row, epsilon)),
            LayerNormVariant::PerSequence => standardize_slice(&mut vectors, epsilon),
        }
        s.with_vectors(vectors)
    }))
}

/// Removes each language's per-dimension mean and variance.
///
/// Statistics are taken over the non-special tokens of each language and
/// applied to every token of that language, special tokens included.
pub fn language_standardize(
    corpus: &EmbeddingCorpus,
) -> Result<(EmbeddingCorpus, BTreeMap<String, NormStats>), NormError> {
    let mut rows_by_lang: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for s in corpus.iter() {
        let rows = rows_by_lang.entry(s.lang.as_str()).or_default();
        rows.extend(s.content_rows());
    }

    let mut stats = BTreeMap::new();
    for (lang, rows) in rows_by_lang {
        if rows.len() < 2 {
            return Err(NormError::TooFewTokens {
                lang: lang.to_string(),
                count: rows.len(),
            });
        }
        stats.insert(
            lang.to_string(),
            NormStats::from_rows(
                NormScope::Language {
                    lang: lang.to_string(),
                },
                corpus.dim,
                LANGUAGE_EPSILON,
                rows,
            ),
        );
    }

    let out = corpus.map_sentences(|s| {
        let st = &stats[&s.lang];
        let mut vectors = s.vectors.clone();
        vectors
            .chunks_exact_mut(s.dim.max(1))
            .for_each(|row| st.apply(row));
        s.with_vectors(vectors)
    });
    Ok((out, stats))
}
