//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p lingua-agnostic-core --test acceptance -- --nocapture --test-threads=1`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::time::{Duration, Instant};

use common::*;
use lingua_agnostic::analysis::{
    all_centroids, discriminativeness, pearson, transfer_gap, typology_correlation, wals_similarity, WalsProfile,
};
use lingua_agnostic::emd::{cost_matrix, emd, emd_bruteforce_oracle, uniform_weights, xmover_score, CostMatrix};
use lingua_agnostic::pipeline::{normalize_document, run, RunConfig};
use lingua_agnostic::realign::{alignment_loss, apply_alignment, fit_alignment, AlignMode, Solver, SolverOpts};
use lingua_agnostic::textnorm::{
    expand_contractions, normalize_sentence, parse_conllu, render_text, reorder_adjectives, AdjOrder, ObjOrder,
    TextNormOptions, TypologyTarget,
};
use lingua_agnostic::vecnorm::{batch_normalize, language_standardize};
use lingua_agnostic::{EmbeddingCorpus, SentenceEmbedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, name: &str, ok: bool, detail: String) {
    println!("{} [{criterion}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "[{criterion}] {name}: {detail}");
}

fn random_sentence(rng: &mut ChaCha8Rng, lang: &str, id: &str, n: usize, dim: usize) -> SentenceEmbedding {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(rng, dim)).collect();
    sentence(lang, id, &rows)
}

#[test]
fn c1_emd_matches_permutation_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_delta = 0.0f64;
    for k in 0..500 {
        let n = 2 + k % 5;
        let a = random_sentence(&mut rng, "en", "a", n, 8);
        let b = random_sentence(&mut rng, "de", "b", n, 8);
        let cost = cost_matrix(&a, &b).unwrap();
        let plan = emd(&uniform_weights(n), &uniform_weights(n), &cost).unwrap();
        let oracle = emd_bruteforce_oracle(&cost).unwrap();
        max_delta = max_delta.max((plan.total_cost - oracle).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "exact EMD vs permutation oracle, 500 instances, n in 2..=6, D = 8",
        max_delta < 1e-9 && elapsed < Duration::from_secs(10),
        format!("max |delta| = {max_delta:.3e}, {elapsed:.2?}"),
    );
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[test]
fn c2_normalization_statistics() {
    const D: usize = 16;
    const EPS: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let sentences: Vec<SentenceEmbedding> = (0..64)
        .map(|k| {
            let n = rng.random_range(3..=7);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| gaussian_vec(&mut rng, D).into_iter().map(|x| 2.0 * x + 1.5).collect())
                .collect();
            let mut special = vec![false; n];
            special[0] = true;
            with_specials(if k % 2 == 0 { "en" } else { "de" }, &format!("s{k}"), &rows, special)
        })
        .collect();
    let input = corpus(D, sentences);

    let start = Instant::now();
    let out = batch_normalize(&input, 8, EPS).unwrap();
    let (std_corpus, _) = language_standardize(&input).unwrap();
    let elapsed = start.elapsed();

    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    let mut cells = 0;
    for b in 0..8 {
        let members: Vec<usize> = (8 * b..8 * b + 8).collect();
        let max_len = members.iter().map(|&k| input.sentences[k].len()).max().unwrap();
        for t in 0..max_len {
            let covering: Vec<usize> = members.iter().copied().filter(|&k| input.sentences[k].len() > t).collect();
            if covering.len() < 2 {
                continue;
            }
            for d in 0..D {
                let before: Vec<f64> = covering.iter().map(|&k| input.sentences[k].vector(t)[d]).collect();
                let after: Vec<f64> = covering.iter().map(|&k| out.corpus.sentences[k].vector(t)[d]).collect();
                let (_, sigma2) = population_stats(&before);
                let (mean, var) = population_stats(&after);
                worst_mean = worst_mean.max(mean.abs());
                worst_var = worst_var.max((var - sigma2 / (sigma2 + EPS)).abs());
                cells += 1;
            }
        }
    }

    let mut worst_centroid = 0.0f64;
    for lang in ["en", "de"] {
        let rows: Vec<&[f64]> = std_corpus
            .iter()
            .filter(|s| s.lang == lang)
            .flat_map(|s| s.content_rows())
            .collect();
        let norm = (0..D)
            .map(|d| (rows.iter().map(|r| r[d]).sum::<f64>() / rows.len() as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        worst_centroid = worst_centroid.max(norm);
    }

    verdict(
        2,
        "batch-normalize cell statistics and language-standardize centroids",
        cells > 0
            && worst_mean < 1e-6
            && worst_var < 1e-4
            && worst_centroid < 1e-6 * (D as f64).sqrt()
            && elapsed < Duration::from_secs(1),
        format!(
            "{cells} cells, max |mean| = {worst_mean:.2e}, max variance error = {worst_var:.2e}, \
             max centroid norm = {worst_centroid:.2e}, {elapsed:.2?}"
        ),
    );
}

fn random_alignment_instance(rng: &mut ChaCha8Rng, dim: usize, max_links: usize) -> lingua_agnostic::ParallelCorpus {
    let mut pairs = Vec::new();
    let mut links_total = 0;
    let mut k = 0;
    loop {
        let n = rng.random_range(3..=6);
        if links_total + n > max_links {
            break;
        }
        let lang = if k % 2 == 0 { "de" } else { "fr" };
        let src = random_sentence(rng, "en", &format!("en{k}"), n, dim);
        let tgt = random_sentence(rng, lang, &format!("{lang}{k}"), n, dim);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        pairs.push(pair(&format!("p{k}"), src, tgt, (0..n).map(|i| (i, perm[i])).collect()));
        links_total += n;
        k += 1;
    }
    parallel("en", pairs)
}

fn objective(model: &lingua_agnostic::realign::AffineAlignmentModel, pc: &lingua_agnostic::ParallelCorpus) -> f64 {
    let (l, r) = alignment_loss(model, pc, model.lambda).unwrap();
    l + model.lambda * r
}

#[test]
fn c3_alignment_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let gradient_opts = SolverOpts {
        max_epochs: 1_000_000,
        tolerance: 1e-14,
        ..SolverOpts::default()
    };
    let mut worst_rel = 0.0f64;
    for k in 0..20 {
        let dim = rng.random_range(2..=8);
        let max_links = rng.random_range(6 * (dim + 1)..=200);
        let pc = random_alignment_instance(&mut rng, dim, max_links);
        let mode = if k % 2 == 0 { AlignMode::Shared } else { AlignMode::PerLanguage };
        let lambda = rng.random_range(0.1..2.0);
        let closed = fit_alignment(&pc, mode, lambda, Solver::ClosedForm, &SolverOpts::default()).unwrap();
        let grad = fit_alignment(&pc, mode, lambda, Solver::Gradient, &gradient_opts).unwrap();
        let (fc, fg) = (objective(&closed, &pc), objective(&grad, &pc));
        worst_rel = worst_rel.max((fc - fg).abs() / fc.abs().max(1e-300));
    }

    // regularizer dominates
    let pc = random_alignment_instance(&mut rng, 6, 150);
    let stiff = fit_alignment(&pc, AlignMode::Shared, 1e9, Solver::ClosedForm, &SolverOpts::default()).unwrap();
    let shared = &stiff.maps[lingua_agnostic::realign::SHARED_KEY];
    let (w_dev, b_norm) = (shared.distance_from_identity(), shared.bias_norm());

    // t = R s + c, recovered by the per-language map
    let angle: f64 = 0.7;
    let rot = [[angle.cos(), -angle.sin()], [angle.sin(), angle.cos()]];
    let offset = [0.4, -1.3];
    let generate = |s: &[f64]| -> Vec<f64> {
        (0..2).map(|r| rot[r][0] * s[0] + rot[r][1] * s[1] + offset[r]).collect()
    };
    let src_rows: Vec<Vec<f64>> = (0..10).map(|_| uniform_vec(&mut rng, 2)).collect();
    let tgt_rows: Vec<Vec<f64>> = src_rows.iter().map(|s| generate(s)).collect();
    let pc = parallel(
        "en",
        vec![pair(
            "rot",
            sentence("en", "s", &src_rows),
            sentence("de", "t", &tgt_rows),
            (0..10).map(|i| (i, i)).collect(),
        )],
    );
    let model = fit_alignment(&pc, AlignMode::PerLanguage, 0.0, Solver::ClosedForm, &SolverOpts::default()).unwrap();
    let map = &model.maps["de"];
    let mut rot_err = 0.0f64;
    for _ in 0..20 {
        let s = uniform_vec(&mut rng, 2);
        let mapped = map.apply(&generate(&s));
        rot_err = rot_err.max(mapped.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let elapsed = start.elapsed();

    verdict(
        3,
        "closed form vs gradient, lambda = 1e9 identity, rotation recovery",
        worst_rel < 1e-4 && w_dev < 1e-3 && b_norm < 1e-3 && rot_err < 1e-6 && elapsed < Duration::from_secs(30),
        format!(
            "max relative gap = {worst_rel:.2e}, |W - I|_F = {w_dev:.2e}, |b| = {b_norm:.2e}, \
             rotation error = {rot_err:.2e}, {elapsed:.2?}"
        ),
    );
}

/// English vocabulary vectors, and German ones made by rotating, rescaling
/// and shifting them.
fn offset_fixture(rng: &mut ChaCha8Rng) -> (EmbeddingCorpus, EmbeddingCorpus, lingua_agnostic::ParallelCorpus) {
    const D: usize = 8;
    let vocab: Vec<Vec<f64>> = (0..80).map(|_| gaussian_vec(rng, D)).collect();
    let rot = plane_rotation(D, 50f64.to_radians());
    let scale: Vec<f64> = (0..D).map(|_| rng.random_range(0.5..2.0)).collect();
    let offset: Vec<f64> = gaussian_vec(rng, D).into_iter().map(|x| 3.0 * x).collect();
    let mut src = Vec::new();
    let mut tgt = Vec::new();
    let mut links = Vec::new();
    for k in 0..40 {
        let mut words: Vec<usize> = Vec::new();
        while words.len() < 6 {
            let w = rng.random_range(0..vocab.len());
            if !words.contains(&w) {
                words.push(w);
            }
        }
        let mut perm: Vec<usize> = (0..6).collect();
        for i in (1..6).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let s_rows: Vec<Vec<f64>> = words.iter().map(|&w| vocab[w].clone()).collect();
        let t_rows: Vec<Vec<f64>> = perm
            .iter()
            .map(|&i| {
                let r = mat_vec(&rot, &vocab[words[i]]);
                (0..D).map(|d| scale[d] * r[d] + offset[d] + 0.05 * gaussian(rng)).collect()
            })
            .collect();
        src.push(sentence("en", &format!("en{k}"), &s_rows));
        tgt.push(sentence("de", &format!("de{k}"), &t_rows));
        // target position j holds source word perm[j]
        links.push((0..6).map(|j| (perm[j], j)).collect::<Vec<_>>());
    }
    let src = corpus(D, src);
    let tgt = corpus(D, tgt);
    let pc = parallel(
        "en",
        src.sentences
            .iter()
            .zip(&tgt.sentences)
            .zip(links)
            .enumerate()
            .map(|(k, ((s, t), l))| pair(&format!("p{k}"), (**s).clone(), (**t).clone(), l))
            .collect(),
    );
    (src, tgt, pc)
}

#[test]
fn c4_discriminativeness_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (src, tgt, pc) = offset_fixture(&mut rng);
    let separation = |pc: &lingua_agnostic::ParallelCorpus| discriminativeness(pc, 200, 17).unwrap().separation;

    let raw = separation(&pc);

    let standardize = |c: &EmbeddingCorpus| language_standardize(c).unwrap().0;
    let (src_n, tgt_n) = (standardize(&src), standardize(&tgt));
    let norm = separation(&pc.rebind(&src_n, &tgt_n).unwrap());

    let model = fit_alignment(&pc, AlignMode::PerLanguage, 0.01, Solver::ClosedForm, &SolverOpts::default()).unwrap();
    let src_an = standardize(&apply_alignment(&model, &src).unwrap());
    let tgt_an = standardize(&apply_alignment(&model, &tgt).unwrap());
    let both = separation(&pc.rebind(&src_an, &tgt_an).unwrap());

    verdict(
        4,
        "separation: raw < norm < align then norm",
        raw < norm && norm < both,
        format!("raw = {raw:.4}, norm = {norm:.4}, align+norm = {both:.4}"),
    );
}

#[test]
fn c5_text_normalization_golden() {
    let del = "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tde\tdi\tADP\t_\t_\t3\tcase\t_\t_\n\
2\til\til\tDET\t_\t_\t3\tdet\t_\t_\n\
3\tsole\tsole\tNOUN\t_\t_\t0\troot\t_\t_\n";
    let s = &parse_conllu(del).unwrap()[0];
    let before = render_text(s, false);
    let after = render_text(&expand_contractions(s), false);
    let del_ok = before == "del sole" && after == "de il sole";

    let pomme = "1\tpomme\tpomme\tNOUN\t_\t_\t0\troot\t_\t_\n2\trouge\trouge\tADJ\t_\t_\t1\tamod\t_\t_\n";
    let s = &parse_conllu(pomme).unwrap()[0];
    let (out, _) = reorder_adjectives(s, &TypologyTarget::default());
    let pomme_out = render_text(&out, false);
    let pomme_ok = pomme_out == "rouge pomme";

    let text = fs::read_to_string(fixture("golden.conllu")).unwrap();
    let opts = TextNormOptions {
        expand_contractions: true,
        adj_order: Some(AdjOrder::AdjNoun),
        obj_order: Some(ObjOrder::VerbObj),
        strip_punct: false,
    };
    let (lines, skips) = normalize_document(&text, &opts).unwrap();
    let expected = fs::read_to_string(fixture("golden.expected.txt")).unwrap();
    let expected_skips = fs::read_to_string(fixture("golden.expected.skips.tsv")).unwrap();
    let n = lines.lines().count();
    let golden_ok = n == 20 && lines == expected && skips == expected_skips;

    verdict(
        5,
        "contraction, adjective order and 20-sentence golden file",
        del_ok && pomme_ok && golden_ok,
        format!("del -> `{after}`, pomme rouge -> `{pomme_out}`, golden {n} sentences byte-identical = {golden_ok}"),
    );
}

fn profile(lang: &str, feats: &[(&str, &str)]) -> WalsProfile {
    WalsProfile {
        lang: lang.into(),
        features: feats.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

#[test]
fn c6_statistical_primitives() {
    let pearson_cases: [(&[f64], &[f64], f64); 6] = [
        (&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0], 0.6),
        (&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0], 1.0),
        (&[1.0, 2.0, 3.0, 4.0], &[-1.0, -4.0, -7.0, -10.0], -1.0),
        (&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0], 0.5),
        (&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 0.0, 1.0], 0.0),
        (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0], 0.774_596_669_241_483_4),
    ];
    let pearson_err = pearson_cases
        .iter()
        .map(|(x, y, r)| (pearson(x, y).unwrap() - r).abs())
        .fold(0.0, f64::max);

    let en = profile("en", &[("81A", "SVO"), ("83A", "VO"), ("87A", "AN"), ("85A", "Pre"), ("37A", "Def")]);
    let de = profile("de", &[("81A", "ND"), ("83A", "ND"), ("87A", "AN"), ("85A", "Pre"), ("37A", "Def")]);
    let fr = profile("fr", &[("81A", "SVO"), ("83A", "VO"), ("87A", "NA"), ("85A", "Pre")]);
    let ja = profile("ja", &[("81A", "SOV"), ("83A", "OV"), ("86A", "GN"), ("85A", "Post")]);
    let xx = profile("xx", &[("99A", "x")]);
    let fixed: Vec<String> = ["81A", "83A", "85A", "86A", "87A", "37A"].iter().map(|s| s.to_string()).collect();
    let wals_cases = [
        (wals_similarity(&en, &en, None).unwrap(), (1.0, 5)),
        (wals_similarity(&en, &de, None).unwrap(), (0.6, 5)),
        (wals_similarity(&en, &fr, None).unwrap(), (0.75, 4)),
        (wals_similarity(&fr, &ja, None).unwrap(), (0.0, 3)),
        (wals_similarity(&en, &fr, Some(&fixed)).unwrap(), (0.5, 6)),
    ];
    let wals_ok = wals_cases
        .iter()
        .all(|(got, (sim, n))| (got.similarity - sim).abs() < 1e-15 && got.n_compared == *n)
        && wals_similarity(&en, &xx, None).is_err();

    let scores: BTreeMap<String, f64> = [("en", 0.8), ("de", 0.6), ("fr", 0.4)]
        .iter()
        .map(|(l, s)| (l.to_string(), *s))
        .collect();
    let gap1 = transfer_gap(&scores, "en").unwrap().gap;
    let scores: BTreeMap<String, f64> = [("en", 70.0), ("de", 60.0), ("fr", 65.0), ("ja", 55.0)]
        .iter()
        .map(|(l, s)| (l.to_string(), *s))
        .collect();
    let gap2 = transfer_gap(&scores, "en").unwrap().gap;
    let gap_ok = (gap1 - 0.3).abs() < 1e-12 && (gap2 - 10.0).abs() < 1e-12;

    verdict(
        6,
        "pearson, WALS similarity and transfer gap against hand values",
        pearson_err < 1e-12 && wals_ok && gap_ok,
        format!("pearson max error = {pearson_err:.2e}, WALS counts ok = {wals_ok}, gaps = {gap1}, {gap2}"),
    );
}

/// Languages in three families; each language's vectors are shifted by its
/// family's offset, and its WALS profile mostly copies its family prototype.
fn family_fixture(rng: &mut ChaCha8Rng) -> (EmbeddingCorpus, BTreeMap<String, WalsProfile>) {
    const D: usize = 16;
    const FEATURES: usize = 24;
    let families: Vec<Vec<f64>> = (0..3)
        .map(|_| gaussian_vec(rng, D).into_iter().map(|x| 3.0 * x).collect())
        .collect();
    let prototypes: Vec<Vec<usize>> = (0..3)
        .map(|_| (0..FEATURES).map(|_| rng.random_range(0..4)).collect())
        .collect();
    let mut sentences = Vec::new();
    let mut profiles = BTreeMap::new();
    for l in 0..12 {
        let lang = format!("l{l:02}");
        let fam = l % 3;
        let offset: Vec<f64> = families[fam].iter().map(|x| x + 0.5 * gaussian(rng)).collect();
        for k in 0..30 {
            let n = rng.random_range(3..=10);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| gaussian_vec(rng, D).iter().zip(&offset).map(|(x, o)| x + o).collect())
                .collect();
            sentences.push(sentence(&lang, &format!("{lang}-{k}"), &rows));
        }
        let features = (0..FEATURES)
            .map(|f| {
                let v = if rng.random_bool(0.8) { prototypes[fam][f] } else { rng.random_range(0..4) };
                (format!("{f}A"), v.to_string())
            })
            .collect();
        profiles.insert(lang.clone(), WalsProfile { lang, features });
    }
    (corpus(D, sentences), profiles)
}

#[test]
fn c7_typology_correlation_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (corpus, profiles) = family_fixture(&mut rng);
    let before = typology_correlation(&all_centroids(&corpus, 12).unwrap(), &profiles, "l00", None).unwrap();
    let (standardized, _) = language_standardize(&corpus).unwrap();
    let after = typology_correlation(&all_centroids(&standardized, 12).unwrap(), &profiles, "l00", None).unwrap();
    verdict(
        7,
        "centroid/WALS correlation drops after language standardization",
        after < before,
        format!("before = {before:.4}, after = {after:.4}"),
    );
}

#[test]
fn c8_end_to_end_determinism() {
    let base = RunConfig::load(fixture("pipeline.json")).unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 1, 4, 4] {
        let mut config = base.clone();
        config.threads = Some(threads);
        let out = run(&config).unwrap();
        let rendered: BTreeMap<String, String> = out
            .artifacts
            .keys()
            .map(|name| (name.clone(), out.render(name).unwrap()))
            .collect();
        outputs.push(rendered);
    }
    let names: BTreeSet<&String> = outputs[0].keys().collect();
    let identical = outputs.iter().all(|o| o == &outputs[0]);
    let has_scores = outputs[0].contains_key("scores.tsv") && outputs[0].contains_key("pearson.json");

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&dir_a, 1), (&dir_b, 3)] {
        let mut config = base.clone();
        config.threads = Some(threads);
        config.output_dir = dir.path().to_path_buf();
        lingua_agnostic::pipeline::execute(&config).unwrap();
    }
    let files_equal = names.iter().all(|n| {
        fs::read(dir_a.path().join(n.as_str())).unwrap() == fs::read(dir_b.path().join(n.as_str())).unwrap()
    });

    verdict(
        8,
        "pipeline output bit-identical across runs and thread counts",
        identical && has_scores && files_equal,
        format!("{} artifacts, 6 runs over 1, 3 and 4 threads", names.len()),
    );
}

fn euclidean_cost(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> CostMatrix {
    CostMatrix::from_rows(
        &xs.iter()
            .map(|x| {
                ys.iter()
                    .map(|y| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .collect()
            })
            .collect::<Vec<_>>(),
    )
}

fn emd_uniform(cost: &CostMatrix) -> f64 {
    emd(&uniform_weights(cost.rows), &uniform_weights(cost.cols), cost)
        .unwrap()
        .total_cost
}

#[test]
fn c9_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);

    let mut worst_symmetry = 0.0f64;
    let mut worst_triangle = f64::NEG_INFINITY;
    for _ in 0..200 {
        let (n, m) = (rng.random_range(1..=7), rng.random_range(1..=7));
        let a = random_sentence(&mut rng, "en", "a", n, 8);
        let b = random_sentence(&mut rng, "de", "b", m, 8);
        let ab = xmover_score(&a, &b, &[]).unwrap();
        let ba = xmover_score(&b, &a, &[]).unwrap();
        worst_symmetry = worst_symmetry.max((ab - ba).abs());

        let sets: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| {
                let k = rng.random_range(1..=6);
                (0..k).map(|_| uniform_vec(&mut rng, 8)).collect()
            })
            .collect();
        let (x, y, z) = (&sets[0], &sets[1], &sets[2]);
        let xz = emd_uniform(&euclidean_cost(x, z));
        let xy = emd_uniform(&euclidean_cost(x, y));
        let yz = emd_uniform(&euclidean_cost(y, z));
        worst_triangle = worst_triangle.max(xz - xy - yz);
    }
    let emd_ok = worst_symmetry < 1e-9 && worst_triangle < 1e-9;

    let mut reorder_failures = 0;
    let opts = TextNormOptions {
        expand_contractions: false,
        adj_order: Some(AdjOrder::AdjNoun),
        obj_order: Some(ObjOrder::ObjVerb),
        strip_punct: false,
    };
    for k in 0..1000 {
        let n = rng.random_range(1..=14);
        let s = random_projective_sentence(&mut rng, n, &format!("r{k}"));
        let (once, _) = normalize_sentence(&s, &opts);
        let (twice, _) = normalize_sentence(&once, &opts);
        let forms = |s: &lingua_agnostic::textnorm::ConlluSentence| {
            let mut f: Vec<String> = s.tokens.iter().map(|t| t.form.clone()).collect();
            f.sort();
            f
        };
        if once != twice || forms(&once) != forms(&s) || once.validate().is_err() {
            reorder_failures += 1;
        }
    }

    let sentences: Vec<SentenceEmbedding> = (0..30)
        .map(|k| {
            let n = rng.random_range(2..=8);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| gaussian_vec(&mut rng, 6).into_iter().map(|x| 4.0 * x - 2.0).collect())
                .collect();
            sentence(["en", "de", "ja"][k % 3], &format!("s{k}"), &rows)
        })
        .collect();
    let c = corpus(6, sentences);
    let (once, _) = language_standardize(&c).unwrap();
    let (twice, _) = language_standardize(&once).unwrap();
    let idem = once
        .iter()
        .zip(twice.iter())
        .flat_map(|(a, b)| a.vectors.iter().zip(&b.vectors).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);

    verdict(
        9,
        "EMD symmetry and triangle inequality, reorder idempotence, standardization idempotence",
        emd_ok && reorder_failures == 0 && idem < 1e-9,
        format!(
            "symmetry {worst_symmetry:.2e}, triangle slack {worst_triangle:.2e} (200 each), \
             reorder failures {reorder_failures}/1000, idempotence {idem:.2e}"
        ),
    );
}
