#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use lingua_agnostic::textnorm::{parse_conllu, ConlluSentence};
use lingua_agnostic::{AlignedSentencePair, EmbeddingCorpus, ParallelCorpus, SentenceEmbedding};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| gaussian(rng)).collect()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn sentence(lang: &str, id: &str, rows: &[Vec<f64>]) -> SentenceEmbedding {
    let n = rows.len();
    let tokens = (0..n).map(|k| format!("w{k}")).collect();
    SentenceEmbedding::from_rows(lang, id, 12, tokens, vec![false; n], rows).unwrap()
}

pub fn with_specials(lang: &str, id: &str, rows: &[Vec<f64>], special: Vec<bool>) -> SentenceEmbedding {
    let tokens = (0..rows.len()).map(|k| format!("w{k}")).collect();
    SentenceEmbedding::from_rows(lang, id, 12, tokens, special, rows).unwrap()
}

pub fn pair(id: &str, src: SentenceEmbedding, tgt: SentenceEmbedding, links: Vec<(usize, usize)>) -> AlignedSentencePair {
    AlignedSentencePair {
        id: id.into(),
        src: Arc::new(src),
        tgt: Arc::new(tgt),
        links,
    }
}

pub fn parallel(pivot: &str, pairs: Vec<AlignedSentencePair>) -> ParallelCorpus {
    ParallelCorpus {
        pivot_lang: pivot.into(),
        pairs,
    }
}

pub fn corpus(dim: usize, sentences: Vec<SentenceEmbedding>) -> EmbeddingCorpus {
    EmbeddingCorpus::new(dim, sentences).unwrap()
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Random orthogonal matrix: Gram-Schmidt on Gaussian rows.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < dim {
        let mut v = gaussian_vec(rng, dim);
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows
}

/// Rotation by `angle` in each coordinate plane (0,1), (2,3), ...
pub fn plane_rotation(dim: usize, angle: f64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; dim]; dim];
    let (s, c) = angle.sin_cos();
    for k in (0..dim).step_by(2) {
        if k + 1 < dim {
            m[k][k] = c;
            m[k][k + 1] = -s;
            m[k + 1][k] = s;
            m[k + 1][k + 1] = c;
        } else {
            m[k][k] = 1.0;
        }
    }
    m
}

/// Projective dependency tree over `n` words with random labels, as CoNLL-U.
pub fn random_projective_sentence(rng: &mut ChaCha8Rng, n: usize, id: &str) -> ConlluSentence {
    fn build(rng: &mut ChaCha8Rng, lo: usize, hi: usize, parent: usize, heads: &mut [usize]) {
        if lo > hi {
            return;
        }
        let h = rng.random_range(lo..=hi);
        heads[h - 1] = parent;
        // split each side into contiguous chunks, each its own subtree of h
        let mut side = |rng: &mut ChaCha8Rng, a: usize, b: usize| {
            let mut start = a;
            while start <= b {
                let end = rng.random_range(start..=b);
                build(rng, start, end, h, heads);
                start = end + 1;
            }
        };
        if h > lo {
            side(rng, lo, h - 1);
        }
        if h < hi {
            side(rng, h + 1, hi);
        }
    }
    let mut heads = vec![0; n];
    build(rng, 1, n, 0, &mut heads);

    const UPOS: [&str; 6] = ["NOUN", "ADJ", "VERB", "DET", "ADV", "NOUN"];
    const RELS: [&str; 6] = ["amod", "obj", "det", "advmod", "amod", "obj:lvc"];
    let mut text = format!("# sent_id = {id}\n");
    for k in 0..n {
        let (upos, rel) = if heads[k] == 0 {
            ("VERB", "root")
        } else {
            (UPOS[rng.random_range(0..UPOS.len())], RELS[rng.random_range(0..RELS.len())])
        };
        text.push_str(&format!(
            "{}\tw{}\tw{}\t{upos}\t_\t_\t{}\t{rel}\t_\t_\n",
            k + 1,
            k + 1,
            k + 1,
            heads[k]
        ));
    }
    parse_conllu(&text).unwrap().remove(0)
}

/// Whether every subtree of the sentence spans a contiguous id range.
pub fn is_projective(s: &ConlluSentence) -> bool {
    let n = s.tokens.len();
    (1..=n).all(|root| {
        let mut members = vec![root];
        let mut k = 0;
        while k < members.len() {
            let m = members[k];
            members.extend(s.tokens.iter().filter(|t| t.head == m).map(|t| t.id));
            k += 1;
        }
        let lo = *members.iter().min().unwrap();
        let hi = *members.iter().max().unwrap();
        hi - lo + 1 == members.len()
    })
}
