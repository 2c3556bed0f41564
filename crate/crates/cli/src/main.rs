use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use lingua_agnostic::analysis::{
    all_centroids, correlate_with_judgments, discriminativeness, distance_matrix_csv, language_centroid,
    language_distance, parse_wals_csv, transfer_gap, wals_similarity, JudgmentSet,
};
use lingua_agnostic::emd::ScoreReport;
use lingua_agnostic::pipeline::{execute, normalize_document, score_pairs, RunConfig};
use lingua_agnostic::realign::{apply_alignment, fit_alignment, AffineAlignmentModel, AlignMode, Solver, SolverOpts};
use lingua_agnostic::store::{
    default_index_path, load_alignments_with_index, load_embeddings, save_embeddings, validate_corpus,
    EmbeddingCorpus, PairIndex,
};
use lingua_agnostic::textnorm::{AdjOrder, ObjOrder, TextNormOptions};
use lingua_agnostic::vecnorm::{
    batch_normalize, language_standardize, layer_normalize, LayerNormVariant, DEFAULT_BATCH_SIZE, DEFAULT_EPSILON,
};

/// Language-agnostic post-processing and evaluation of multilingual embeddings.
///
/// Log verbosity follows RUST_LOG (e.g. RUST_LOG=info).
#[derive(Parser)]
#[command(name = "lingua-agnostic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an embedding file against the corpus invariants.
    Validate {
        #[arg(long = "emb")]
        emb: PathBuf,
        /// Expected vector dimension.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Normalize an embedding file.
    Normalize(NormalizeArgs),
    /// Fit or apply affine re-alignment models.
    #[command(subcommand)]
    Align(AlignCommand),
    /// EMD-based similarity for every indexed sentence pair.
    Score(ScoreArgs),
    /// Rewrite CoNLL-U sentences toward a target word order and render text.
    Textnorm(TextnormArgs),
    /// Centroid, typology and evaluation analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Execute a JSON run configuration.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NormMode {
    Batch,
    LayerToken,
    LayerSeq,
    Language,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long, value_enum)]
    mode: NormMode,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Write the statistics used (batch and language modes) as JSON.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    #[arg(long)]
    layer: Option<u32>,
}

#[derive(Subcommand)]
enum AlignCommand {
    Fit(AlignFitArgs),
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ParallelArgs {
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    /// Pharaoh alignments, one `pair_id i-j ...` line per pair.
    #[arg(long, visible_alias = "pairs")]
    alignments: PathBuf,
    /// Pair index; defaults to `<alignments>.index`.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    layer: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Shared,
    PerLanguage,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    ClosedForm,
    Gradient,
}

#[derive(Args)]
struct AlignFitArgs {
    #[command(flatten)]
    data: ParallelArgs,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "closed-form")]
    solver: SolverArg,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreNorm {
    Language,
    Batch,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    /// Pair index: `pair_id<TAB>src_sent_id<TAB>tgt_sent_id`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Apply this alignment model before scoring.
    #[arg(long)]
    apply_model: Option<PathBuf>,
    /// Normalize before scoring; runs before or after `--apply-model`
    /// according to which flag comes first.
    #[arg(long, value_enum)]
    normalize: Option<ScoreNorm>,
    #[arg(long)]
    layer: Option<u32>,
    #[arg(long, default_value = "system")]
    system: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdjArg {
    AdjNoun,
    NounAdj,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjArg {
    VerbObj,
    ObjVerb,
}

#[derive(Args)]
struct TextnormArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `sent_id<TAB>text` lines.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    expand_contractions: bool,
    #[arg(long, value_enum)]
    adj_order: Option<AdjArg>,
    #[arg(long, value_enum)]
    obj_order: Option<ObjArg>,
    #[arg(long)]
    strip_punct: bool,
    /// Skipped moves; defaults to `<out>.skips.tsv`.
    #[arg(long)]
    skips: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Pairwise centroid distance matrix as CSV.
    Centroids {
        #[arg(long = "emb", required = true)]
        emb: Vec<PathBuf>,
        #[arg(long)]
        layer: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cosine distance between two language centroids.
    Distance {
        #[arg(long = "emb", required = true)]
        emb: Vec<PathBuf>,
        #[arg(long)]
        layer: u32,
        #[arg(long)]
        lang1: String,
        #[arg(long)]
        lang2: String,
    },
    /// WALS similarity over shared features, and over a fixed feature list
    /// if one is given.
    Wals {
        #[arg(long)]
        wals: PathBuf,
        #[arg(long)]
        lang1: String,
        #[arg(long)]
        lang2: String,
        /// One feature id per line; missing values count as mismatches.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Pearson correlation between metric scores and human judgments.
    Pearson {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
    },
    /// Matched-versus-random cosine separation of aligned word pairs.
    Discrim {
        #[command(flatten)]
        data: ParallelArgs,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pivot score minus the mean over other languages.
    Gap {
        /// `lang<TAB>score` lines.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        pivot: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    layer: Option<u32>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn load(path: &Path, layer: Option<u32>) -> Result<EmbeddingCorpus> {
    let corpus = load_embeddings(path, None).with_context(|| format!("loading {}", path.display()))?;
    Ok(match layer {
        Some(l) => corpus.filter_layer(l),
        None => corpus,
    })
}

fn load_many(paths: &[PathBuf]) -> Result<EmbeddingCorpus> {
    let mut corpus = load(&paths[0], None)?;
    for p in &paths[1..] {
        corpus = corpus.concat(&load(p, None)?)?;
    }
    Ok(corpus)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_parallel(args: &ParallelArgs) -> Result<(EmbeddingCorpus, EmbeddingCorpus, lingua_agnostic::ParallelCorpus)> {
    let src = load(&args.src_emb, args.layer)?;
    let tgt = load(&args.tgt_emb, args.layer)?;
    let index_path = args.index.clone().unwrap_or_else(|| default_index_path(&args.alignments));
    let index = PairIndex::load(&index_path).with_context(|| format!("loading {}", index_path.display()))?;
    let pairs = load_alignments_with_index(&args.alignments, &index, &src, &tgt)
        .with_context(|| format!("loading {}", args.alignments.display()))?;
    Ok((src, tgt, pairs))
}

fn normalize(args: &NormalizeArgs) -> Result<()> {
    let corpus = load(&args.input, args.layer)?;
    let (out, stats) = match args.mode {
        NormMode::Batch => {
            let r = batch_normalize(&corpus, args.batch_size, args.epsilon)?;
            let n = r.fallback_cells().count();
            if n > 0 {
                log::warn!("{n} cells used whole-batch statistics");
            }
            let stats = serde_json::to_string_pretty(&r.stats)?;
            (r.corpus, Some(stats))
        }
        NormMode::LayerToken => (layer_normalize(&corpus, LayerNormVariant::PerToken, args.epsilon)?, None),
        NormMode::LayerSeq => (layer_normalize(&corpus, LayerNormVariant::PerSequence, args.epsilon)?, None),
        NormMode::Language => {
            let (c, stats) = language_standardize(&corpus)?;
            (c, Some(serde_json::to_string_pretty(&stats)?))
        }
    };
    save_embeddings(&out, &args.out)?;
    if let Some(path) = &args.stats_out {
        match stats {
            Some(s) => write(path, s + "\n")?,
            None => bail!("--stats-out is only available for batch and language modes"),
        }
    }
    Ok(())
}

fn align_fit(args: &AlignFitArgs) -> Result<()> {
    let (_, _, pairs) = load_parallel(&args.data)?;
    let mode = match args.mode {
        ModeArg::Shared => AlignMode::Shared,
        ModeArg::PerLanguage => AlignMode::PerLanguage,
    };
    let solver = match args.solver {
        SolverArg::ClosedForm => Solver::ClosedForm,
        SolverArg::Gradient => Solver::Gradient,
    };
    let mut opts = SolverOpts::default();
    if let Some(v) = args.step_size {
        opts.step_size = v;
    }
    if let Some(v) = args.max_epochs {
        opts.max_epochs = v;
    }
    if let Some(v) = args.tolerance {
        opts.tolerance = v;
    }
    let model = fit_alignment(&pairs, mode, args.lambda, solver, &opts)?;
    if !model.converged {
        log::warn!("solver stopped before converging");
    }
    write(&args.out, model.to_json() + "\n")
}

#[derive(Clone, Copy)]
enum Step {
    Align,
    Norm(ScoreNorm),
}

fn score(args: &ScoreArgs, matches: &ArgMatches) -> Result<()> {
    let mut src = load(&args.src_emb, args.layer)?;
    let mut tgt = load(&args.tgt_emb, args.layer)?;
    let index = PairIndex::load(&args.pairs).with_context(|| format!("loading {}", args.pairs.display()))?;

    let mut steps: Vec<(usize, Step)> = Vec::new();
    if args.apply_model.is_some() {
        steps.push((matches.index_of("apply_model").unwrap_or(0), Step::Align));
    }
    if let Some(n) = args.normalize {
        steps.push((matches.index_of("normalize").unwrap_or(0), Step::Norm(n)));
    }
    steps.sort_by_key(|(i, _)| *i);

    let model = match &args.apply_model {
        Some(p) => Some(AffineAlignmentModel::from_json(&read(p)?)?),
        None => None,
    };
    for (_, step) in steps {
        for corpus in [&mut src, &mut tgt] {
            *corpus = match step {
                Step::Align => apply_alignment(model.as_ref().expect("model loaded"), corpus)?,
                Step::Norm(ScoreNorm::Language) => language_standardize(corpus)?.0,
                Step::Norm(ScoreNorm::Batch) => batch_normalize(corpus, DEFAULT_BATCH_SIZE, DEFAULT_EPSILON)?.corpus,
            };
        }
    }
    let report = score_pairs(&index, &src, &tgt, &args.system)?;
    write(&args.out, report.to_tsv())
}

fn textnorm(args: &TextnormArgs) -> Result<()> {
    let opts = TextNormOptions {
        expand_contractions: args.expand_contractions,
        adj_order: args.adj_order.map(|a| match a {
            AdjArg::AdjNoun => AdjOrder::AdjNoun,
            AdjArg::NounAdj => AdjOrder::NounAdj,
        }),
        obj_order: args.obj_order.map(|o| match o {
            ObjArg::VerbObj => ObjOrder::VerbObj,
            ObjArg::ObjVerb => ObjOrder::ObjVerb,
        }),
        strip_punct: args.strip_punct,
    };
    let (lines, skips) = normalize_document(&read(&args.input)?, &opts)?;
    write(&args.out, lines)?;
    let skips_path = args.skips.clone().unwrap_or_else(|| {
        let mut s = args.out.as_os_str().to_owned();
        s.push(".skips.tsv");
        PathBuf::from(s)
    });
    write(&skips_path, skips)
}

fn analyze(cmd: &AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Centroids { emb, layer, out } => {
            let corpus = load_many(emb)?;
            let csv = distance_matrix_csv(&all_centroids(&corpus, *layer)?)?;
            match out {
                Some(p) => write(p, csv)?,
                None => print!("{csv}"),
            }
        }
        AnalyzeCommand::Distance {
            emb,
            layer,
            lang1,
            lang2,
        } => {
            let corpus = load_many(emb)?;
            let c1 = language_centroid(&corpus, lang1, *layer)?;
            let c2 = language_centroid(&corpus, lang2, *layer)?;
            println!("{}", language_distance(&c1, &c2)?);
        }
        AnalyzeCommand::Wals {
            wals,
            lang1,
            lang2,
            features,
        } => {
            let profiles = parse_wals_csv(&read(wals)?)?;
            let get = |l: &str| profiles.get(l).with_context(|| format!("no WALS entries for `{l}`"));
            let (p1, p2) = (get(lang1)?, get(lang2)?);
            let shared = wals_similarity(p1, p2, None)?;
            println!("shared\t{}\t{}", shared.similarity, shared.n_compared);
            if let Some(path) = features {
                let ids: Vec<String> = read(path)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect();
                let fixed = wals_similarity(p1, p2, Some(&ids))?;
                println!("fixed\t{}\t{}", fixed.similarity, fixed.n_compared);
            }
        }
        AnalyzeCommand::Pearson { scores, judgments } => {
            let metric = JudgmentSet::parse_tsv("metric", &read(scores)?)?;
            let human = JudgmentSet::parse_tsv("human", &read(judgments)?)?;
            let report = ScoreReport {
                system: "metric".into(),
                segments: metric.entries,
            };
            let (r, n) = correlate_with_judgments(&report, &human)?;
            println!("{r}\t{n}");
        }
        AnalyzeCommand::Discrim {
            data,
            samples,
            seed,
            out,
        } => {
            let (_, _, pairs) = load_parallel(data)?;
            let d = discriminativeness(&pairs, *samples, *seed)?;
            println!("{}", d.separation);
            if let Some(p) = out {
                write(p, serde_json::to_string_pretty(&d)? + "\n")?;
            }
        }
        AnalyzeCommand::Gap { scores, pivot } => {
            let set = JudgmentSet::parse_tsv("scores", &read(scores)?)?;
            let scores: BTreeMap<String, f64> = set.entries.into_iter().collect();
            let g = transfer_gap(&scores, pivot)?;
            println!("{}", g.gap);
        }
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = Some(threads);
    }
    if let Some(layer) = args.layer {
        config.layer = Some(layer);
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    let output = execute(&config)?;
    for name in output.artifacts.keys() {
        println!("{}", config.output_dir.join(name).display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    match &cli.command {
        Command::Validate { emb, dim } => {
            let corpus = load_embeddings(emb, *dim).with_context(|| format!("loading {}", emb.display()))?;
            let report = validate_corpus(&corpus);
            if !report.is_empty() {
                bail!("{} violations:\n{report}", report.violations.len());
            }
            println!("ok\t{} sentences", corpus.len());
        }
        Command::Normalize(args) => normalize(args)?,
        Command::Align(AlignCommand::Fit(args)) => align_fit(args)?,
        Command::Align(AlignCommand::Apply { model, input, out }) => {
            let model = AffineAlignmentModel::from_json(&read(model)?)?;
            let corpus = load(input, None)?;
            save_embeddings(&apply_alignment(&model, &corpus)?, out)?;
        }
        Command::Score(args) => {
            let sub = matches.subcommand_matches("score").expect("score subcommand");
            score(args, sub)?
        }
        Command::Textnorm(args) => textnorm(args)?,
        Command::Analyze(cmd) => analyze(cmd)?,
        Command::Run(args) => run(args)?,
    }
    Ok(())
}
