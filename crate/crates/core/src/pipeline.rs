//! Declarative runs: a JSON document lists input files and an ordered list of
//! stages; stages transform the loaded corpora in turn and emit artifacts.
//!
//! Every artifact carries the same metadata: a hash of the stage list, seed
//! and layer filter, digests of the input files, and the variant flags the
//! stages chose. Text artifacts get it as a leading `# ` line, JSON artifacts
//! as a top-level `meta` field.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{all_centroids, correlate_with_judgments, discriminativeness, distance_matrix_csv, JudgmentSet};
use crate::emd::{xmover_score, EmdError, ScoreReport};
use crate::realign::{apply_alignment, fit_alignment, AffineAlignmentModel, AlignMode, Solver, SolverOpts};
use crate::store::{
    default_index_path, parse_alignments, resolve_sentence, validate_corpus, write_embeddings,
    EmbeddingCorpus, PairIndex, ParallelCorpus, StoreError,
};
use crate::textnorm::{normalize_sentence, parse_conllu, render_text, AdjOrder, ObjOrder, TextNormOptions};
use crate::vecnorm::{
    batch_normalize, language_standardize, layer_normalize, LayerNormVariant, DEFAULT_BATCH_SIZE, DEFAULT_EPSILON,
    LANGUAGE_EPSILON,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("input `{role}`: {message}")]
    Input { role: &'static str, message: String },
    #[error("stage {index} ({stage}): {message}")]
    Stage {
        index: usize,
        stage: &'static str,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("pair `{pair_id}`: {source}")]
    Emd {
        pair_id: String,
        #[source]
        source: EmdError,
    },
}

/// Scores every indexed pair, in index order.
pub fn score_pairs(
    index: &PairIndex,
    src: &EmbeddingCorpus,
    tgt: &EmbeddingCorpus,
    system: &str,
) -> Result<ScoreReport, ScoreError> {
    let segments = index
        .entries
        .par_iter()
        .enumerate()
        .map(|(n, entry)| {
            let s = resolve_sentence(src, &entry.src_sent_id, "source", n + 1)?;
            let t = resolve_sentence(tgt, &entry.tgt_sent_id, "target", n + 1)?;
            let score = xmover_score(&s, &t, &[]).map_err(|source| ScoreError::Emd {
                pair_id: entry.pair_id.clone(),
                source,
            })?;
            Ok((entry.pair_id.clone(), score))
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    Ok(ScoreReport {
        system: system.to_string(),
        segments,
    })
}

/// Input files of a run. Relative paths in a config file are taken relative
/// to the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignments: Option<PathBuf>,
    /// Defaults to `<alignments>.index`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_index: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgments: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conllu: Option<PathBuf>,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_solver() -> Solver {
    Solver::ClosedForm
}

fn default_system() -> String {
    "system".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Stage {
    /// Fails if any loaded corpus violates its invariants.
    Validate,
    LanguageStandardize,
    BatchNormalize {
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    LayerNormalize {
        variant: LayerNormVariant,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    AlignFit {
        mode: AlignMode,
        lambda: f64,
        #[serde(default = "default_solver")]
        solver: Solver,
        #[serde(default)]
        opts: SolverOpts,
    },
    /// Applies the model at `model`, or else the one fitted by the latest
    /// `align-fit` stage.
    AlignApply {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<PathBuf>,
    },
    Score {
        #[serde(default = "default_system")]
        system: String,
    },
    Pearson {
        #[serde(default)]
        task: String,
    },
    Discrim {
        samples: usize,
    },
    Centroids,
    Textnorm {
        #[serde(default)]
        expand_contractions: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        adj_order: Option<AdjOrder>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        obj_order: Option<ObjOrder>,
        #[serde(default)]
        strip_punct: bool,
    },
    /// Emits the current corpora as `src.jsonl` and `tgt.jsonl`.
    WriteEmbeddings,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::LanguageStandardize => "language-standardize",
            Stage::BatchNormalize { .. } => "batch-normalize",
            Stage::LayerNormalize { .. } => "layer-normalize",
            Stage::AlignFit { .. } => "align-fit",
            Stage::AlignApply { .. } => "align-apply",
            Stage::Score { .. } => "score",
            Stage::Pearson { .. } => "pearson",
            Stage::Discrim { .. } => "discrim",
            Stage::Centroids => "centroids",
            Stage::Textnorm { .. } => "textnorm",
            Stage::WriteEmbeddings => "write-embeddings",
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Keep only sentences from this encoder layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
    /// Worker threads; outputs do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        if config.stages.is_empty() {
            return Err(PipelineError::Config("no stages".into()));
        }
        Ok(config)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.src_embeddings,
            &mut i.tgt_embeddings,
            &mut i.alignments,
            &mut i.pair_index,
            &mut i.judgments,
            &mut i.conllu,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for stage in &mut self.stages {
            if let Stage::AlignApply { model: Some(p) } = stage {
                fix(p);
            }
        }
        fix(&mut self.output_dir);
    }

    /// SHA-256 over the settings that determine the outputs: seed, layer
    /// filter and stages. Paths and thread count are excluded.
    pub fn hash(&self) -> String {
        let canonical = json!({
            "seed": self.seed,
            "layer": self.layer,
            "stages": self.stages,
        });
        sha256_hex(canonical.to_string().as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance stamped into every artifact of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub config_sha256: String,
    pub seed: u64,
    pub layer: Option<u32>,
    pub stages: Vec<String>,
    /// SHA-256 of each input file, by role.
    pub inputs: BTreeMap<String, String>,
    pub variants: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Text(String),
    Json(Value),
}

/// Everything a run produced, not yet written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub meta: RunMeta,
    pub artifacts: BTreeMap<String, Artifact>,
}

impl RunOutput {
    /// Final bytes of an artifact, metadata included.
    pub fn render(&self, name: &str) -> Option<String> {
        let meta = serde_json::to_value(&self.meta).expect("meta serializes");
        Some(match self.artifacts.get(name)? {
            Artifact::Text(body) => format!("# {meta}\n{body}"),
            Artifact::Json(value) => {
                let mut value = value.clone();
                if let Value::Object(map) = &mut value {
                    map.insert("meta".into(), meta);
                }
                let mut s = serde_json::to_string_pretty(&value).expect("artifact serializes");
                s.push('\n');
                s
            }
        })
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PipelineError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut written = Vec::new();
        for name in self.artifacts.keys() {
            let path = dir.join(name);
            fs::write(&path, self.render(name).expect("artifact exists")).map_err(io_err(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

struct Loaded {
    src: Option<EmbeddingCorpus>,
    tgt: Option<EmbeddingCorpus>,
    alignments: Option<String>,
    index: Option<PairIndex>,
    judgments: Option<JudgmentSet>,
    conllu: Option<String>,
    digests: BTreeMap<String, String>,
}

fn read_input(role: &'static str, path: &Path, digests: &mut BTreeMap<String, String>) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::Input {
        role,
        message: format!("{}: {e}", path.display()),
    })?;
    digests.insert(role.to_string(), sha256_hex(&bytes));
    String::from_utf8(bytes).map_err(|e| PipelineError::Input {
        role,
        message: e.to_string(),
    })
}

fn load_inputs(config: &RunConfig) -> Result<Loaded, PipelineError> {
    let inputs = &config.inputs;
    let mut digests = BTreeMap::new();
    let mut embeddings = |role: &'static str, path: &Option<PathBuf>| -> Result<Option<EmbeddingCorpus>, PipelineError> {
        let Some(path) = path else { return Ok(None) };
        let text = read_input(role, path, &mut digests)?;
        let corpus = crate::store::read_embeddings(text.as_bytes(), None).map_err(|e| PipelineError::Input {
            role,
            message: e.to_string(),
        })?;
        Ok(Some(match config.layer {
            Some(layer) => corpus.filter_layer(layer),
            None => corpus,
        }))
    };
    let src = embeddings("src_embeddings", &inputs.src_embeddings)?;
    let tgt = embeddings("tgt_embeddings", &inputs.tgt_embeddings)?;

    let alignments = match &inputs.alignments {
        Some(p) => Some(read_input("alignments", p, &mut digests)?),
        None => None,
    };
    let index_path = inputs
        .pair_index
        .clone()
        .or_else(|| inputs.alignments.as_deref().map(default_index_path));
    let index = match index_path {
        Some(p) => {
            let text = read_input("pair_index", &p, &mut digests)?;
            Some(PairIndex::parse(&text).map_err(|e| PipelineError::Input {
                role: "pair_index",
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let judgments = match &inputs.judgments {
        Some(p) => {
            let text = read_input("judgments", p, &mut digests)?;
            Some(JudgmentSet::parse_tsv("", &text).map_err(|e| PipelineError::Input {
                role: "judgments",
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let conllu = match &inputs.conllu {
        Some(p) => Some(read_input("conllu", p, &mut digests)?),
        None => None,
    };
    Ok(Loaded {
        src,
        tgt,
        alignments,
        index,
        judgments,
        conllu,
        digests,
    })
}

struct State {
    loaded: Loaded,
    model: Option<AffineAlignmentModel>,
    scores: Option<ScoreReport>,
    variants: BTreeMap<String, String>,
    artifacts: BTreeMap<String, Artifact>,
}

impl State {
    fn corpora_mut(&mut self) -> impl Iterator<Item = &mut EmbeddingCorpus> {
        [&mut self.loaded.src, &mut self.loaded.tgt].into_iter().flatten()
    }

    fn src(&self) -> Result<&EmbeddingCorpus, String> {
        self.loaded.src.as_ref().ok_or_else(|| "needs inputs.src_embeddings".to_string())
    }

    fn tgt(&self) -> Result<&EmbeddingCorpus, String> {
        self.loaded.tgt.as_ref().ok_or_else(|| "needs inputs.tgt_embeddings".to_string())
    }

    fn index(&self) -> Result<&PairIndex, String> {
        self.loaded
            .index
            .as_ref()
            .ok_or_else(|| "needs inputs.pair_index or inputs.alignments".to_string())
    }

    /// Alignments bound to the corpora as they are now.
    fn parallel(&self) -> Result<ParallelCorpus, String> {
        let text = self
            .loaded
            .alignments
            .as_ref()
            .ok_or_else(|| "needs inputs.alignments".to_string())?;
        parse_alignments(text, self.index()?, self.src()?, self.tgt()?).map_err(|e| e.to_string())
    }

    fn emit(&mut self, name: &str, artifact: Artifact) {
        if self.artifacts.insert(name.to_string(), artifact).is_some() {
            log::warn!("artifact {name} overwritten by a later stage");
        }
    }

    fn transform<E: ToString>(
        &mut self,
        mut f: impl FnMut(&EmbeddingCorpus) -> Result<EmbeddingCorpus, E>,
    ) -> Result<(), String> {
        for corpus in self.corpora_mut() {
            *corpus = f(corpus).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn run_stage(&mut self, stage: &Stage, seed: u64) -> Result<(), String> {
        match stage {
            Stage::Validate => {
                let mut report = String::new();
                let mut failed = false;
                for (role, corpus) in [("src", &self.loaded.src), ("tgt", &self.loaded.tgt)] {
                    if let Some(c) = corpus {
                        let r = validate_corpus(c);
                        failed |= !r.is_empty();
                        report.push_str(&format!("{role}\t{} sentences\t{} violations\n", c.len(), r.violations.len()));
                        if !r.is_empty() {
                            report.push_str(&format!("{r}\n"));
                        }
                    }
                }
                if failed {
                    return Err(format!("invariant violations:\n{report}"));
                }
                self.emit("validation.txt", Artifact::Text(report));
            }
            Stage::LanguageStandardize => {
                self.transform(|c| language_standardize(c).map(|(out, _)| out))?;
                self.variants
                    .insert("language-standardize".into(), format!("epsilon={LANGUAGE_EPSILON:e}"));
            }
            Stage::BatchNormalize { batch_size, epsilon } => {
                let mut fallbacks = 0;
                self.transform(|c| {
                    batch_normalize(c, *batch_size, *epsilon).map(|out| {
                        fallbacks += out.fallback_cells().count();
                        out.corpus
                    })
                })?;
                self.variants.insert(
                    "batch-normalize".into(),
                    format!("batch={batch_size},epsilon={epsilon:e},fallback-cells={fallbacks}"),
                );
            }
            Stage::LayerNormalize { variant, epsilon } => {
                self.transform(|c| layer_normalize(c, *variant, *epsilon))?;
                let v = serde_json::to_value(variant).expect("variant serializes");
                self.variants.insert(
                    "layer-normalize".into(),
                    format!("{},epsilon={epsilon:e}", v.as_str().unwrap_or_default()),
                );
            }
            Stage::AlignFit {
                mode,
                lambda,
                solver,
                opts,
            } => {
                let parallel = self.parallel()?;
                let model = fit_alignment(&parallel, *mode, *lambda, *solver, opts).map_err(|e| e.to_string())?;
                self.variants.insert("regularizer".into(), model.regularized.clone());
                self.emit(
                    "model.json",
                    Artifact::Json(serde_json::to_value(&model).expect("model serializes")),
                );
                self.model = Some(model);
            }
            Stage::AlignApply { model } => {
                let model = match model {
                    Some(path) => {
                        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                        AffineAlignmentModel::from_json(&text).map_err(|e| e.to_string())?
                    }
                    None => self
                        .model
                        .clone()
                        .ok_or_else(|| "no model: give `model` or run align-fit first".to_string())?,
                };
                self.transform(|c| apply_alignment(&model, c))?;
                let mode = serde_json::to_value(model.mode).expect("mode serializes");
                self.variants.insert(
                    "align-apply".into(),
                    format!("{},regularizer={}", mode.as_str().unwrap_or_default(), model.regularized),
                );
            }
            Stage::Score { system } => {
                let report = score_pairs(self.index()?, self.src()?, self.tgt()?, system).map_err(|e| e.to_string())?;
                self.emit("scores.tsv", Artifact::Text(report.to_tsv()));
                self.scores = Some(report);
            }
            Stage::Pearson { task } => {
                let scores = self.scores.as_ref().ok_or("no scores: run a score stage first")?;
                let judgments = self.loaded.judgments.as_ref().ok_or("needs inputs.judgments")?;
                let (r, n) = correlate_with_judgments(scores, judgments).map_err(|e| e.to_string())?;
                self.emit(
                    "pearson.json",
                    Artifact::Json(json!({ "task": task, "system": scores.system, "pearson": r, "segments": n })),
                );
            }
            Stage::Discrim { samples } => {
                let parallel = self.parallel()?;
                let d = discriminativeness(&parallel, *samples, seed).map_err(|e| e.to_string())?;
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                self.emit(
                    "discrim.json",
                    Artifact::Json(json!({
                        "samples": samples,
                        "separation": d.separation,
                        "matched_mean": mean(&d.matched),
                        "random_mean": mean(&d.random),
                        "matched": d.matched,
                        "random": d.random,
                    })),
                );
            }
            Stage::Centroids => {
                let combined = match (&self.loaded.src, &self.loaded.tgt) {
                    (Some(s), Some(t)) => s.concat(t).map_err(|e| e.to_string())?,
                    (Some(c), None) | (None, Some(c)) => c.clone(),
                    (None, None) => return Err("needs input embeddings".into()),
                };
                let layers: std::collections::BTreeSet<u32> = combined.iter().map(|s| s.layer).collect();
                let mut csv = String::new();
                for layer in layers {
                    let centroids = all_centroids(&combined, layer).map_err(|e| e.to_string())?;
                    csv.push_str(&format!("# layer {layer}\n"));
                    csv.push_str(&distance_matrix_csv(&centroids).map_err(|e| e.to_string())?);
                }
                self.emit("centroids.csv", Artifact::Text(csv));
            }
            Stage::Textnorm {
                expand_contractions,
                adj_order,
                obj_order,
                strip_punct,
            } => {
                let text = self.loaded.conllu.as_ref().ok_or("needs inputs.conllu")?;
                let opts = TextNormOptions {
                    expand_contractions: *expand_contractions,
                    adj_order: *adj_order,
                    obj_order: *obj_order,
                    strip_punct: *strip_punct,
                };
                let (lines, skips) = normalize_document(text, &opts).map_err(|e| e.to_string())?;
                self.emit("textnorm.txt", Artifact::Text(lines));
                self.emit("textnorm.skips.tsv", Artifact::Text(skips));
            }
            Stage::WriteEmbeddings => {
                let mut bodies = Vec::new();
                for (name, corpus) in [("src.jsonl", &self.loaded.src), ("tgt.jsonl", &self.loaded.tgt)] {
                    if let Some(c) = corpus {
                        let mut buf = Vec::new();
                        write_embeddings(c, &mut buf).map_err(|e| e.to_string())?;
                        bodies.push((name, String::from_utf8(buf).expect("JSON is UTF-8")));
                    }
                }
                for (name, body) in bodies {
                    self.emit(name, Artifact::Text(body));
                }
            }
        }
        Ok(())
    }
}

/// Normalizes every sentence of a CoNLL-U document. Returns the rendered
/// `sent_id<TAB>text` lines and the skip log.
pub fn normalize_document(
    text: &str,
    opts: &TextNormOptions,
) -> Result<(String, String), crate::textnorm::ConlluError> {
    let mut lines = String::new();
    let mut skips = String::new();
    for sentence in parse_conllu(text)? {
        let (out, sk) = normalize_sentence(&sentence, opts);
        lines.push_str(&format!("{}\t{}\n", out.sent_id, render_text(&out, opts.strip_punct)));
        for s in sk {
            skips.push_str(&format!("{s}\n"));
        }
    }
    Ok((lines, skips))
}

/// Runs every stage in order and returns the artifacts without writing them.
pub fn run(config: &RunConfig) -> Result<RunOutput, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &RunConfig) -> Result<RunOutput, PipelineError> {
    let loaded = load_inputs(config)?;
    let mut state = State {
        loaded,
        model: None,
        scores: None,
        variants: BTreeMap::new(),
        artifacts: BTreeMap::new(),
    };
    for (k, stage) in config.stages.iter().enumerate() {
        log::info!("stage {} ({})", k + 1, stage.name());
        state.run_stage(stage, config.seed).map_err(|message| PipelineError::Stage {
            index: k + 1,
            stage: stage.name(),
            message,
        })?;
    }
    let meta = RunMeta {
        tool: format!("lingua-agnostic {}", env!("CARGO_PKG_VERSION")),
        config_sha256: config.hash(),
        seed: config.seed,
        layer: config.layer,
        stages: config.stages.iter().map(|s| s.name().to_string()).collect(),
        inputs: state.loaded.digests,
        variants: state.variants,
    };
    Ok(RunOutput {
        meta,
        artifacts: state.artifacts,
    })
}

/// [`run`], then writes the artifacts to `config.output_dir`.
pub fn execute(config: &RunConfig) -> Result<RunOutput, PipelineError> {
    let output = run(config)?;
    output.write_to(&config.output_dir)?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_stage_is_rejected() {
        let err = RunConfig::parse(r#"{"stages":[{"stage":"validate"},{"stage":"frobnicate"}]}"#).unwrap_err();
        assert!(err.to_string().contains("frobnicate"), "{err}");
    }

    #[test]
    fn unknown_stage_field_is_rejected() {
        assert!(RunConfig::parse(r#"{"stages":[{"stage":"batch-normalize","batch":4}]}"#).is_err());
        assert!(RunConfig::parse(r#"{"stages":[],"sed":1}"#).is_err());
    }

    #[test]
    fn defaults_and_order() {
        let c = RunConfig::parse(
            r#"{"stages":[
                {"stage":"batch-normalize"},
                {"stage":"align-fit","mode":"per-language","lambda":0.5,"opts":{"max_epochs":10}},
                {"stage":"validate"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(
            c.stages[0],
            Stage::BatchNormalize {
                batch_size: 8,
                epsilon: 1e-5
            }
        );
        let Stage::AlignFit { opts, solver, .. } = &c.stages[1] else {
            panic!("wrong stage")
        };
        assert_eq!(opts.max_epochs, 10);
        assert_eq!(opts.ridge, SolverOpts::default().ridge);
        assert_eq!(*solver, Solver::ClosedForm);
        let names: Vec<_> = c.stages.iter().map(Stage::name).collect();
        assert_eq!(names, ["batch-normalize", "align-fit", "validate"]);
        assert_eq!(c.seed, 0);
        assert!(RunConfig::parse(r#"{"stages":[]}"#).is_err());
    }

    #[test]
    fn hash_ignores_threads_and_paths() {
        let a = RunConfig::parse(r#"{"seed":3,"stages":[{"stage":"validate"}]}"#).unwrap();
        let mut b = a.clone();
        b.threads = Some(7);
        b.output_dir = "elsewhere".into();
        b.inputs.src_embeddings = Some("x.jsonl".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let c = RunConfig::parse(r#"{"stages":[{"stage":"score"}]}"#).unwrap();
        let err = run(&c).unwrap_err();
        assert_eq!(err.to_string(), "stage 1 (score): needs inputs.pair_index or inputs.alignments");
    }

    #[test]
    fn missing_input_is_reported_by_role() {
        let c = RunConfig::parse(r#"{"inputs":{"conllu":"/nonexistent/x.conllu"},"stages":[{"stage":"textnorm"}]}"#)
            .unwrap();
        assert!(matches!(run(&c), Err(PipelineError::Input { role: "conllu", .. })));
    }

    #[test]
    fn render_stamps_meta() {
        let out = RunOutput {
            meta: RunMeta {
                tool: "t".into(),
                config_sha256: "h".into(),
                seed: 1,
                layer: None,
                stages: vec!["score".into()],
                inputs: BTreeMap::new(),
                variants: BTreeMap::new(),
            },
            artifacts: [
                ("a.tsv".to_string(), Artifact::Text("x\t1\n".into())),
                ("b.json".to_string(), Artifact::Json(json!({"r": 0.5}))),
            ]
            .into(),
        };
        let tsv = out.render("a.tsv").unwrap();
        assert!(tsv.starts_with("# {"));
        assert!(tsv.ends_with("\nx\t1\n"));
        let v: Value = serde_json::from_str(&out.render("b.json").unwrap()).unwrap();
        assert_eq!(v["meta"]["config_sha256"], "h");
        assert_eq!(v["r"], 0.5);
        assert!(out.render("c").is_none());
    }
}
