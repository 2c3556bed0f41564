//! Language-identity and evaluation analyses: language centroids and their
//! distances, WALS structural similarity, Pearson correlation, the
//! matched-versus-random discriminativeness of word pairs, and transfer gaps.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::emd::ScoreReport;
use crate::store::{EmbeddingCorpus, ParallelCorpus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no sentences for language `{lang}` at layer {layer}")]
    NoSentences { lang: String, layer: u32 },
    #[error("sentence `{0}` has no non-special token")]
    NoContentTokens(String),
    #[error("centroid dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector: cosine is undefined ({0})")]
    ZeroNorm(String),
    #[error("no WALS features to compare")]
    NothingCompared,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("requested {requested} samples but only {available} links exist")]
    InsufficientLinks { requested: usize, available: usize },
    #[error("sentence pair `{0}` has no unlinked token pair to sample")]
    PairTooShort(String),
    #[error("pivot language `{0}` has no score")]
    MissingPivot(String),
    #[error("no non-pivot language scores")]
    NoTargets,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate {what} `{key}`")]
    Duplicate { what: &'static str, key: String },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine(a: &[f64], b: &[f64], what: &str) -> Result<f64, AnalysisError> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(AnalysisError::ZeroNorm(what.to_string()));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Average sentence embedding of one language at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageCentroid {
    pub lang: String,
    pub layer: u32,
    pub vector: Vec<f64>,
    pub n_sentences: usize,
}

/// Two-stage mean: non-special tokens to a sentence vector, then the
/// unweighted mean of sentence vectors.
///
/// Filtering sentences (minimum length, punctuation removal) is the caller's
/// job.
pub fn language_centroid(
    corpus: &EmbeddingCorpus,
    lang: &str,
    layer: u32,
) -> Result<LanguageCentroid, AnalysisError> {
    let dim = corpus.dim;
    let mut total = vec![0.0; dim];
    let mut n_sentences = 0;
    for s in corpus.iter().filter(|s| s.lang == lang && s.layer == layer) {
        let mut sent = vec![0.0; dim];
        let mut count = 0usize;
        for row in s.content_rows() {
            sent.iter_mut().zip(row).for_each(|(a, x)| *a += x);
            count += 1;
        }
        if count == 0 {
            return Err(AnalysisError::NoContentTokens(s.sent_id.clone()));
        }
        total
            .iter_mut()
            .zip(&sent)
            .for_each(|(t, x)| *t += x / count as f64);
        n_sentences += 1;
    }
    if n_sentences == 0 {
        return Err(AnalysisError::NoSentences {
            lang: lang.to_string(),
            layer,
        });
    }
    total.iter_mut().for_each(|t| *t /= n_sentences as f64);
    Ok(LanguageCentroid {
        lang: lang.to_string(),
        layer,
        vector: total,
        n_sentences,
    })
}

/// Centroids of every language in the corpus at `layer`, sorted by language.
pub fn all_centroids(corpus: &EmbeddingCorpus, layer: u32) -> Result<Vec<LanguageCentroid>, AnalysisError> {
    corpus
        .languages()
        .iter()
        .filter(|l| corpus.iter().any(|s| &s.lang == *l && s.layer == layer))
        .map(|l| language_centroid(corpus, l, layer))
        .collect()
}

/// Cosine distance `1 - cos(c1, c2)`, in `[0, 2]`.
pub fn language_distance(c1: &LanguageCentroid, c2: &LanguageCentroid) -> Result<f64, AnalysisError> {
    if c1.vector.len() != c2.vector.len() {
        return Err(AnalysisError::DimensionMismatch(c1.vector.len(), c2.vector.len()));
    }
    let cos = cosine(
        &c1.vector,
        &c2.vector,
        &format!("centroid of `{}` or `{}`", c1.lang, c2.lang),
    )?;
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Pairwise distance matrix as CSV, for external plotting.
pub fn distance_matrix_csv(centroids: &[LanguageCentroid]) -> Result<String, AnalysisError> {
    let mut out = String::from("lang");
    for c in centroids {
        out.push(',');
        out.push_str(&c.lang);
    }
    out.push('\n');
    for a in centroids {
        out.push_str(&a.lang);
        for b in centroids {
            out.push_str(&format!(",{}", language_distance(a, b)?));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Categorical typological features of one language.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WalsProfile {
    pub lang: String,
    pub features: BTreeMap<String, String>,
}

/// Parses `lang,feature_id,value` rows. A header row starting with `lang,`
/// is skipped.
pub fn parse_wals_csv(text: &str) -> Result<BTreeMap<String, WalsProfile>, AnalysisError> {
    let mut profiles: BTreeMap<String, WalsProfile> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("lang,")) {
            continue;
        }
        let cols: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(AnalysisError::Parse {
                line: idx + 1,
                message: "expected lang,feature_id,value".into(),
            });
        }
        let profile = profiles.entry(cols[0].to_string()).or_insert_with(|| WalsProfile {
            lang: cols[0].to_string(),
            features: BTreeMap::new(),
        });
        if profile
            .features
            .insert(cols[1].to_string(), cols[2].to_string())
            .is_some()
        {
            return Err(AnalysisError::Duplicate {
                what: "WALS feature",
                key: format!("{}/{}", cols[0], cols[1]),
            });
        }
    }
    Ok(profiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalsSimilarity {
    pub similarity: f64,
    pub n_compared: usize,
}

/// Fraction of compared features with equal values.
///
/// Without `feature_set`, the features annotated in both profiles are
/// compared. With it, exactly those features are compared and a feature
/// missing from either profile counts as a mismatch.
pub fn wals_similarity(
    p1: &WalsProfile,
    p2: &WalsProfile,
    feature_set: Option<&[String]>,
) -> Result<WalsSimilarity, AnalysisError> {
    let (matches, n_compared) = match feature_set {
        None => {
            let mut matches = 0;
            let mut compared = 0;
            for (id, v1) in &p1.features {
                if let Some(v2) = p2.features.get(id) {
                    compared += 1;
                    matches += usize::from(v1 == v2);
                }
            }
            (matches, compared)
        }
        Some(ids) => {
            let ids: BTreeSet<&String> = ids.iter().collect();
            let matches = ids
                .iter()
                .filter(|id| match (p1.features.get(**id), p2.features.get(**id)) {
                    (Some(a), Some(b)) => a == b,
                    _ => false,
                })
                .count();
            (matches, ids.len())
        }
    };
    if n_compared == 0 {
        return Err(AnalysisError::NothingCompared);
    }
    Ok(WalsSimilarity {
        similarity: matches as f64 / n_compared as f64,
        n_compared,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(AnalysisError::TooFewObservations(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalysisError::ZeroVariance("xs"));
    }
    if syy == 0.0 {
        return Err(AnalysisError::ZeroVariance("ys"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Human judgments keyed by segment id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JudgmentSet {
    pub task: String,
    pub entries: Vec<(String, f64)>,
}

impl JudgmentSet {
    /// Parses `segment_id<TAB>score` lines.
    pub fn parse_tsv(task: &str, text: &str) -> Result<Self, AnalysisError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| AnalysisError::Parse {
                line: idx + 1,
                message,
            };
            let (id, score) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected segment_id<TAB>score".into()))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad score `{score}`")))?;
            if !seen.insert(id.to_string()) {
                return Err(AnalysisError::Duplicate {
                    what: "segment id",
                    key: id.to_string(),
                });
            }
            entries.push((id.to_string(), score));
        }
        Ok(JudgmentSet {
            task: task.to_string(),
            entries,
        })
    }
}

/// Pearson correlation between metric scores and human judgments over the
/// segments present in both.
pub fn correlate_with_judgments(
    scores: &ScoreReport,
    judgments: &JudgmentSet,
) -> Result<(f64, usize), AnalysisError> {
    let by_id: BTreeMap<&str, f64> = scores.segments.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = judgments
        .entries
        .iter()
        .filter_map(|(id, human)| by_id.get(id.as_str()).map(|m| (*m, *human)))
        .unzip();
    let n = xs.len();
    Ok((pearson(&xs, &ys)?, n))
}

/// Cosine similarities of aligned versus random word pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminativeness {
    pub matched: Vec<f64>,
    pub random: Vec<f64>,
    /// `mean(matched) - mean(random)`.
    pub separation: f64,
}

/// Samples `n_samples` aligned token pairs and, for each, one random unlinked
/// pair of non-special tokens from the same sentence pair.
pub fn discriminativeness(
    pairs: &ParallelCorpus,
    n_samples: usize,
    seed: u64,
) -> Result<Discriminativeness, AnalysisError> {
    let links: Vec<(usize, usize, usize)> = pairs
        .pairs
        .iter()
        .enumerate()
        .flat_map(|(p, pair)| pair.links.iter().map(move |&(i, j)| (p, i, j)))
        .collect();
    if n_samples == 0 || n_samples > links.len() {
        return Err(AnalysisError::InsufficientLinks {
            requested: n_samples,
            available: links.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, links.len(), n_samples).into_vec();
    picked.sort_unstable();

    let mut unlinked_cache: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    let mut matched = Vec::with_capacity(n_samples);
    let mut random = Vec::with_capacity(n_samples);
    for k in picked {
        let (p, i, j) = links[k];
        let pair = &pairs.pairs[p];
        matched.push(cosine(pair.src.vector(i), pair.tgt.vector(j), &pair.id)?);

        let candidates = unlinked_cache.entry(p).or_insert_with(|| {
            let linked: HashSet<(usize, usize)> = pair.links.iter().copied().collect();
            let tgt_content: Vec<usize> = pair.tgt.content_indices().collect();
            pair.src
                .content_indices()
                .flat_map(|a| tgt_content.iter().map(move |&b| (a, b)))
                .filter(|c| !linked.contains(c))
                .collect()
        });
        if candidates.is_empty() {
            return Err(AnalysisError::PairTooShort(pair.id.clone()));
        }
        let (a, b) = candidates[rng.random_range(0..candidates.len())];
        random.push(cosine(pair.src.vector(a), pair.tgt.vector(b), &pair.id)?);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Discriminativeness {
        separation: mean(&matched) - mean(&random),
        matched,
        random,
    })
}

/// Pivot performance minus the mean over the other languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub pivot: String,
    pub pivot_score: f64,
    pub scores: BTreeMap<String, f64>,
    pub gap: f64,
}

pub fn transfer_gap(scores: &BTreeMap<String, f64>, pivot: &str) -> Result<GapReport, AnalysisError> {
    let pivot_score = *scores
        .get(pivot)
        .ok_or_else(|| AnalysisError::MissingPivot(pivot.to_string()))?;
    let others: Vec<f64> = scores
        .iter()
        .filter(|(l, _)| l.as_str() != pivot)
        .map(|(_, s)| *s)
        .collect();
    if others.is_empty() {
        return Err(AnalysisError::NoTargets);
    }
    let mean = others.iter().sum::<f64>() / others.len() as f64;
    Ok(GapReport {
        pivot: pivot.to_string(),
        pivot_score,
        scores: scores.clone(),
        gap: pivot_score - mean,
    })
}

/// Pearson correlation, across non-pivot languages, between centroid cosine
/// similarity to the pivot and WALS similarity to the pivot.
pub fn typology_correlation(
    centroids: &[LanguageCentroid],
    profiles: &BTreeMap<String, WalsProfile>,
    pivot: &str,
    feature_set: Option<&[String]>,
) -> Result<f64, AnalysisError> {
    let pivot_centroid = centroids
        .iter()
        .find(|c| c.lang == pivot)
        .ok_or_else(|| AnalysisError::MissingPivot(pivot.to_string()))?;
    let pivot_profile = profiles
        .get(pivot)
        .ok_or_else(|| AnalysisError::MissingPivot(pivot.to_string()))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for c in centroids.iter().filter(|c| c.lang != pivot) {
        if let Some(profile) = profiles.get(&c.lang) {
            xs.push(1.0 - language_distance(pivot_centroid, c)?);
            ys.push(wals_similarity(pivot_profile, profile, feature_set)?.similarity);
        }
    }
    pearson(&xs, &ys)
}
