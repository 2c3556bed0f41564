//! Joint affine re-alignment of non-pivot embeddings toward a pivot language.
//!
//! The objective is `L + lambda * R` where
//!
//! * `L` sums, over every sentence pair and alignment link `(i, j)`, the
//!   squared distance between the mapped source token `i` and the mapped
//!   target token `j`;
//! * `R` sums the squared distance between mapped and original vectors over
//!   the regularized tokens.
//!
//! In [`AlignMode::Shared`] one map is applied to every language and `R`
//! covers the pivot-side tokens, so the pivot space is anchored while the
//! other languages move toward it. In [`AlignMode::PerLanguage`] the pivot map
//! is fixed to the identity and `R` covers the target-side tokens.
//!
//! Both modes are linear least squares in the map parameters, so the
//! closed-form solver solves the normal equations directly; the gradient
//! solver runs full-batch gradient descent from the identity on the same
//! quadratic.

use std::borrow::Cow;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::store::{EmbeddingCorpus, ParallelCorpus, SentenceEmbedding};

/// Key under which a shared-mode model stores its single map.
pub const SHARED_KEY: &str = "*";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("parallel corpus has no sentence pairs")]
    EmptyCorpus,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("lambda must be finite and non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("corpus pivot `{corpus}` differs from model pivot `{model}`")]
    PivotMismatch { corpus: String, model: String },
    #[error("normal equations for `{0}` are rank deficient and no damping was requested")]
    RankDeficient(String),
    #[error("model has no map for language(s): {0}")]
    MissingLanguage(String),
    #[error("model is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignMode {
    Shared,
    PerLanguage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    ClosedForm,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOpts {
    pub step_size: f64,
    pub max_epochs: usize,
    /// Stop when the relative change of the objective drops below this.
    pub tolerance: f64,
    /// Ridge term added to the normal equations (and to the gradient objective).
    pub ridge: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            step_size: 1e-3,
            max_epochs: 200,
            tolerance: 1e-6,
            ridge: 1e-8,
        }
    }
}

/// `x -> W x + b`, with `W` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        AffineMap {
            weight: (0..dim)
                .map(|r| (0..dim).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                .collect(),
            bias: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Frobenius distance of `W` from the identity.
    pub fn distance_from_identity(&self) -> f64 {
        let mut acc = 0.0;
        for (r, row) in self.weight.iter().enumerate() {
            for (c, w) in row.iter().enumerate() {
                let d = w - if r == c { 1.0 } else { 0.0 };
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    pub fn bias_norm(&self) -> f64 {
        self.bias.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    fn from_theta(theta: &DMatrix<f64>) -> Self {
        let d = theta.nrows();
        AffineMap {
            weight: (0..d).map(|r| (0..d).map(|c| theta[(r, c)]).collect()).collect(),
            bias: (0..d).map(|r| theta[(r, d)]).collect(),
        }
    }

    fn validate(&self, dim: usize) -> Result<(), String> {
        if self.bias.len() != dim || self.weight.len() != dim {
            return Err(format!("map is not {dim}-dimensional"));
        }
        if self.weight.iter().any(|r| r.len() != dim) {
            return Err("weight matrix is not square".into());
        }
        let finite = self
            .weight
            .iter()
            .flatten()
            .chain(&self.bias)
            .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite parameter".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub alignment: f64,
    pub regularizer: f64,
    /// `alignment + lambda * regularizer + ridge * |theta|^2`, the quantity
    /// the solver minimizes.
    pub objective: f64,
}

/// Which tokens the drift regularizer covers; stamped into saved models.
pub fn regularizer_variant(mode: AlignMode) -> &'static str {
    match mode {
        AlignMode::Shared => "pivot-side-tokens",
        AlignMode::PerLanguage => "target-side-tokens",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineAlignmentModel {
    pub mode: AlignMode,
    pub pivot: String,
    pub dim: usize,
    pub lambda: f64,
    pub solver: Solver,
    pub regularized: String,
    pub converged: bool,
    /// Per-language maps, or a single map under [`SHARED_KEY`].
    pub maps: BTreeMap<String, AffineMap>,
    pub training_log: Vec<EpochLog>,
}

impl AffineAlignmentModel {
    /// The identity model: every map is `W = I, b = 0`.
    pub fn identity(mode: AlignMode, pivot: &str, dim: usize, languages: &[&str]) -> Self {
        let maps = match mode {
            AlignMode::Shared => [(SHARED_KEY.to_string(), AffineMap::identity(dim))].into(),
            AlignMode::PerLanguage => languages
                .iter()
                .filter(|l| **l != pivot)
                .map(|l| (l.to_string(), AffineMap::identity(dim)))
                .collect(),
        };
        AffineAlignmentModel {
            mode,
            pivot: pivot.to_string(),
            dim,
            lambda: 1.0,
            solver: Solver::ClosedForm,
            regularized: regularizer_variant(mode).to_string(),
            converged: true,
            maps,
            training_log: Vec::new(),
        }
    }

    /// The map applied to vectors of `lang`, if the model covers it.
    pub fn map_for(&self, lang: &str) -> Option<Cow<'_, AffineMap>> {
        match self.mode {
            AlignMode::Shared => self.maps.get(SHARED_KEY).map(Cow::Borrowed),
            AlignMode::PerLanguage if lang == self.pivot => {
                Some(Cow::Owned(AffineMap::identity(self.dim)))
            }
            AlignMode::PerLanguage => self.maps.get(lang).map(Cow::Borrowed),
        }
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if self.mode == AlignMode::Shared && !self.maps.contains_key(SHARED_KEY) {
            return Err(AlignError::Malformed("shared model without a shared map".into()));
        }
        if self.mode == AlignMode::PerLanguage && self.maps.contains_key(&self.pivot) {
            return Err(AlignError::Malformed("per-language model stores a pivot map".into()));
        }
        for (lang, m) in &self.maps {
            m.validate(self.dim)
                .map_err(|e| AlignError::Malformed(format!("{lang}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AlignError> {
        let model: AffineAlignmentModel =
            serde_json::from_str(text).map_err(|e| AlignError::Malformed(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(corpus: &ParallelCorpus, dim: usize) -> Result<(), AlignError> {
    for p in &corpus.pairs {
        for s in [&p.src, &p.tgt] {
            if s.dim != dim {
                return Err(AlignError::DimensionMismatch {
                    expected: dim,
                    found: s.dim,
                });
            }
        }
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<(), AlignError> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(AlignError::NegativeLambda(lambda))
    }
}

/// Evaluates `(L, R)` for `model` on `corpus` by direct summation.
///
/// Both are plain sums, not means. `lambda` is only validated here; the
/// caller combines the two terms.
pub fn alignment_loss(
    model: &AffineAlignmentModel,
    corpus: &ParallelCorpus,
    lambda: f64,
) -> Result<(f64, f64), AlignError> {
    check_lambda(lambda)?;
    if corpus.pivot_lang != model.pivot {
        return Err(AlignError::PivotMismatch {
            corpus: corpus.pivot_lang.clone(),
            model: model.pivot.clone(),
        });
    }
    check_dims(corpus, model.dim)?;

    let lookup = |lang: &str| {
        model
            .map_for(lang)
            .ok_or_else(|| AlignError::MissingLanguage(lang.to_string()))
    };
    let mut alignment = 0.0;
    let mut regularizer = 0.0;
    for p in &corpus.pairs {
        let src_map = lookup(&p.src.lang)?;
        let tgt_map = lookup(&p.tgt.lang)?;
        for &(i, j) in &p.links {
            alignment += sq_dist(&src_map.apply(p.src.vector(i)), &tgt_map.apply(p.tgt.vector(j)));
        }
        let (side, map): (&SentenceEmbedding, &AffineMap) = match model.mode {
            AlignMode::Shared => (&p.src, &src_map),
            AlignMode::PerLanguage => (&p.tgt, &tgt_map),
        };
        for row in side.rows() {
            regularizer += sq_dist(&map.apply(row), row);
        }
    }
    Ok((alignment, regularizer))
}

/// Sufficient statistics of `sum_k |theta * a_k - y_k|^2` for one quadratic
/// term: `A = sum a a^T`, `B = sum y a^T`, `c = sum |y|^2`.
#[derive(Clone)]
struct Quadratic {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: f64,
}

impl Quadratic {
    fn zeros(dim: usize) -> Self {
        Quadratic {
            a: DMatrix::zeros(dim + 1, dim + 1),
            b: DMatrix::zeros(dim, dim + 1),
            c: 0.0,
        }
    }

    fn add(&mut self, input: &DVector<f64>, target: &DVector<f64>) {
        self.a.ger(1.0, input, input, 1.0);
        self.b.ger(1.0, target, input, 1.0);
        self.c += target.norm_squared();
    }

    fn eval(&self, theta: &DMatrix<f64>) -> f64 {
        let quad = (theta * &self.a).component_mul(theta).sum();
        let cross = self.b.component_mul(theta).sum();
        (quad - 2.0 * cross + self.c).max(0.0)
    }
}

fn augmented(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + 1, x.iter().copied().chain(std::iter::once(1.0)))
}

fn difference(a: &[f64], b: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        a.len() + 1,
        a.iter().zip(b).map(|(x, y)| x - y).chain(std::iter::once(0.0)),
    )
}

/// One independently fitted map and the data that constrains it.
struct Group {
    key: String,
    alignment: Quadratic,
    regularizer: Quadratic,
    links: usize,
}

struct Problem {
    groups: Vec<Group>,
    /// Alignment loss that no parameter can change (pivot-to-pivot pairs in
    /// per-language mode).
    constant_alignment: f64,
}

fn build_problem(corpus: &ParallelCorpus, mode: AlignMode, dim: usize) -> Problem {
    fn group<'a>(groups: &'a mut BTreeMap<String, Group>, key: &str, dim: usize) -> &'a mut Group {
        groups.entry(key.to_string()).or_insert_with(|| Group {
            key: key.to_string(),
            alignment: Quadratic::zeros(dim),
            regularizer: Quadratic::zeros(dim),
            links: 0,
        })
    }

    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    let mut constant_alignment = 0.0;

    for p in &corpus.pairs {
        match mode {
            AlignMode::Shared => {
                // W s + b - (W t + b) = theta [s - t; 0]
                let g = group(&mut groups, SHARED_KEY, dim);
                let zero = DVector::zeros(dim);
                for &(i, j) in &p.links {
                    g.alignment.add(&difference(p.src.vector(i), p.tgt.vector(j)), &zero);
                }
                g.links += p.links.len();
                for row in p.src.rows() {
                    g.regularizer.add(&augmented(row), &DVector::from_column_slice(row));
                }
            }
            AlignMode::PerLanguage if p.tgt.lang == corpus.pivot_lang => {
                for &(i, j) in &p.links {
                    constant_alignment += sq_dist(p.src.vector(i), p.tgt.vector(j));
                }
            }
            AlignMode::PerLanguage => {
                // s - (W t + b): target is the fixed pivot vector
                let g = group(&mut groups, &p.tgt.lang, dim);
                for &(i, j) in &p.links {
                    g.alignment
                        .add(&augmented(p.tgt.vector(j)), &DVector::from_column_slice(p.src.vector(i)));
                }
                g.links += p.links.len();
                for row in p.tgt.rows() {
                    g.regularizer.add(&augmented(row), &DVector::from_column_slice(row));
                }
            }
        }
    }
    Problem {
        groups: groups.into_values().collect(),
        constant_alignment,
    }
}

fn identity_theta(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim + 1, |r, c| if r == c { 1.0 } else { 0.0 })
}

struct Terms {
    alignment: f64,
    regularizer: f64,
    objective: f64,
}

fn evaluate(problem: &Problem, thetas: &[DMatrix<f64>], lambda: f64, ridge: f64) -> Terms {
    let mut alignment = problem.constant_alignment;
    let mut regularizer = 0.0;
    let mut penalty = 0.0;
    for (g, theta) in problem.groups.iter().zip(thetas) {
        alignment += g.alignment.eval(theta);
        regularizer += g.regularizer.eval(theta);
        penalty += theta.norm_squared();
    }
    Terms {
        alignment,
        regularizer,
        objective: alignment + lambda * regularizer + ridge * penalty,
    }
}

fn log_entry(epoch: usize, t: &Terms) -> EpochLog {
    EpochLog {
        epoch,
        alignment: t.alignment,
        regularizer: t.regularizer,
        objective: t.objective,
    }
}

/// Normal equations for one group: `theta (A_L + lambda A_R + ridge I) = B_L + lambda B_R`.
fn normal_equations(g: &Group, lambda: f64, ridge: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = g.alignment.a.nrows();
    let a = &g.alignment.a + &g.regularizer.a * lambda + DMatrix::identity(n, n) * ridge;
    let b = &g.alignment.b + &g.regularizer.b * lambda;
    (a, b)
}

fn solve_closed_form(g: &Group, lambda: f64, ridge: f64) -> Result<DMatrix<f64>, AlignError> {
    let (a, b) = normal_equations(g, lambda, ridge);
    let rhs = b.transpose();
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(&rhs).transpose());
    }
    // A is symmetric PSD, so Cholesky only fails when it is singular.
    if ridge > 0.0 {
        if let Some(sol) = a.lu().solve(&rhs) {
            return Ok(sol.transpose());
        }
    }
    Err(AlignError::RankDeficient(g.key.clone()))
}

struct DescentResult {
    thetas: Vec<DMatrix<f64>>,
    log: Vec<EpochLog>,
    converged: bool,
}

fn gradient_descent(
    problem: &Problem,
    start: Vec<DMatrix<f64>>,
    lambda: f64,
    opts: &SolverOpts,
) -> DescentResult {
    let systems: Vec<_> = problem
        .groups
        .iter()
        .map(|g| normal_equations(g, lambda, opts.ridge))
        .collect();
    let mut thetas = start;
    let mut current = evaluate(problem, &thetas, lambda, opts.ridge);
    let mut log = vec![log_entry(0, &current)];
    let mut step = opts.step_size;
    let mut converged = false;

    for epoch in 1..=opts.max_epochs {
        // gradient of tr(theta A theta^T) - 2 tr(theta B^T) is 2 (theta A - B)
        let mut candidate: Vec<DMatrix<f64>>;
        let mut next;
        loop {
            candidate = thetas
                .iter()
                .zip(&systems)
                .map(|(theta, (a, b))| theta - (theta * a - b) * (2.0 * step))
                .collect();
            next = evaluate(problem, &candidate, lambda, opts.ridge);
            if next.objective <= current.objective || step < 1e-300 {
                break;
            }
            step *= 0.5;
            log::warn!("objective increased at epoch {epoch}; step size halved to {step:e}");
        }
        let change = (current.objective - next.objective).abs();
        let scale = current.objective.abs().max(f64::MIN_POSITIVE);
        thetas = candidate;
        current = next;
        log.push(log_entry(epoch, &current));
        if change / scale < opts.tolerance {
            converged = true;
            break;
        }
    }
    DescentResult {
        thetas,
        log,
        converged,
    }
}

/// Fits an alignment model minimizing `L + lambda * R`.
///
/// With [`Solver::ClosedForm`], a per-language group with fewer than
/// `dim + 1` links is handed to the gradient solver instead.
pub fn fit_alignment(
    corpus: &ParallelCorpus,
    mode: AlignMode,
    lambda: f64,
    solver: Solver,
    opts: &SolverOpts,
) -> Result<AffineAlignmentModel, AlignError> {
    check_lambda(lambda)?;
    let dim = corpus.dim().ok_or(AlignError::EmptyCorpus)?;
    check_dims(corpus, dim)?;
    let problem = build_problem(corpus, mode, dim);

    let start: Vec<_> = problem.groups.iter().map(|_| identity_theta(dim)).collect();
    let initial = evaluate(&problem, &start, lambda, opts.ridge);

    let (thetas, training_log, converged) = match solver {
        Solver::Gradient => {
            let r = gradient_descent(&problem, start, lambda, opts);
            if !r.converged {
                log::warn!(
                    "gradient solver did not converge within {} epochs",
                    opts.max_epochs
                );
            }
            (r.thetas, r.log, r.converged)
        }
        Solver::ClosedForm => {
            let mut thetas = Vec::with_capacity(problem.groups.len());
            let mut converged = true;
            for g in &problem.groups {
                let underdetermined = mode == AlignMode::PerLanguage && g.links < dim + 1;
                if underdetermined {
                    log::warn!(
                        "`{}` has {} links (< {}); fitting it with the gradient solver",
                        g.key,
                        g.links,
                        dim + 1
                    );
                    let single = Problem {
                        groups: vec![Group {
                            key: g.key.clone(),
                            alignment: g.alignment.clone(),
                            regularizer: g.regularizer.clone(),
                            links: g.links,
                        }],
                        constant_alignment: 0.0,
                    };
                    let opts = SolverOpts {
                        ridge: opts.ridge.max(SolverOpts::default().ridge),
                        ..*opts
                    };
                    let r = gradient_descent(&single, vec![identity_theta(dim)], lambda, &opts);
                    converged &= r.converged;
                    thetas.extend(r.thetas);
                } else {
                    thetas.push(solve_closed_form(g, lambda, opts.ridge)?);
                }
            }
            let fitted = evaluate(&problem, &thetas, lambda, opts.ridge);
            (thetas, vec![log_entry(0, &initial), log_entry(1, &fitted)], converged)
        }
    };

    let maps = problem
        .groups
        .iter()
        .zip(&thetas)
        .map(|(g, theta)| (g.key.clone(), AffineMap::from_theta(theta)))
        .collect();
    let model = AffineAlignmentModel {
        mode,
        pivot: corpus.pivot_lang.clone(),
        dim,
        lambda,
        solver,
        regularized: regularizer_variant(mode).to_string(),
        converged,
        maps,
        training_log,
    };
    log::info!(
        "fitted {:?} alignment ({:?}, lambda={lambda}, regularizer over {})",
        mode,
        solver,
        model.regularized
    );
    Ok(model)
}

/// Maps every token vector through its language's affine map.
pub fn apply_alignment(
    model: &AffineAlignmentModel,
    corpus: &EmbeddingCorpus,
) -> Result<EmbeddingCorpus, AlignError> {
    if !corpus.is_empty() && corpus.dim != model.dim {
        return Err(AlignError::DimensionMismatch {
            expected: model.dim,
            found: corpus.dim,
        });
    }
    let missing: Vec<String> = corpus
        .languages()
        .into_iter()
        .filter(|l| model.map_for(l).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(AlignError::MissingLanguage(missing.join(", ")));
    }
    let maps: BTreeMap<String, Cow<'_, AffineMap>> = corpus
        .languages()
        .into_iter()
        .map(|l| {
            let m = model.map_for(&l).expect("checked above");
            (l, m)
        })
        .collect();
    Ok(corpus.map_sentences(|s| {
        if model.mode == AlignMode::PerLanguage && s.lang == model.pivot {
            return s.clone();
        }
        let map = &maps[&s.lang];
        let vectors = s.rows().flat_map(|row| map.apply(row)).collect();
        s.with_vectors(vectors)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::AlignedSentencePair;
    use std::sync::Arc;

    fn sent(lang: &str, id: &str, rows: &[Vec<f64>]) -> Arc<SentenceEmbedding> {
        let n = rows.len();
        Arc::new(
            SentenceEmbedding::from_rows(
                lang,
                id,
                0,
                (0..n).map(|i| format!("w{i}")).collect(),
                vec![false; n],
                rows,
            )
            .unwrap(),
        )
    }

    fn hand_corpus() -> ParallelCorpus {
        let src = sent("en", "e", &[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let tgt = sent("de", "d", &[vec![1.0, 1.0], vec![-1.0, 0.0]]);
        ParallelCorpus {
            pivot_lang: "en".into(),
            pairs: vec![AlignedSentencePair {
                id: "p".into(),
                src,
                tgt,
                links: vec![(0, 0), (1, 1), (0, 1)],
            }],
        }
    }

    #[test]
    fn identity_model_has_zero_regularizer() {
        let pc = hand_corpus();
        let model = AffineAlignmentModel::identity(AlignMode::PerLanguage, "en", 2, &["de"]);
        let (l, r) = alignment_loss(&model, &pc, 1.0).unwrap();
        assert_eq!(r, 0.0);
        // |(1,0)-(1,1)|^2 + |(0,2)-(-1,0)|^2 + |(1,0)-(-1,0)|^2 = 1 + 5 + 4
        assert_eq!(l, 10.0);
    }

    #[test]
    fn hand_set_map_losses() {
        let pc = hand_corpus();
        let mut model = AffineAlignmentModel::identity(AlignMode::PerLanguage, "en", 2, &["de"]);
        model.maps.insert(
            "de".into(),
            AffineMap {
                weight: vec![vec![0.0, 1.0], vec![2.0, 0.0]],
                bias: vec![1.0, -1.0],
            },
        );
        // de map: (1,1) -> (2,1); (-1,0) -> (1,-3)
        // L: |(1,0)-(2,1)|^2 + |(0,2)-(1,-3)|^2 + |(1,0)-(1,-3)|^2 = 2 + 26 + 9
        // R: |(2,1)-(1,1)|^2 + |(1,-3)-(-1,0)|^2 = 1 + 13
        let (l, r) = alignment_loss(&model, &pc, 0.5).unwrap();
        assert!((l - 37.0).abs() < 1e-12);
        assert!((r - 14.0).abs() < 1e-12);
    }

    #[test]
    fn loss_argument_errors() {
        let pc = hand_corpus();
        let model = AffineAlignmentModel::identity(AlignMode::Shared, "en", 2, &[]);
        assert!(matches!(
            alignment_loss(&model, &pc, -1.0),
            Err(AlignError::NegativeLambda(_))
        ));
        let wrong_dim = AffineAlignmentModel::identity(AlignMode::Shared, "en", 3, &[]);
        assert!(matches!(
            alignment_loss(&wrong_dim, &pc, 1.0),
            Err(AlignError::DimensionMismatch { .. })
        ));
        let empty = ParallelCorpus {
            pivot_lang: "en".into(),
            pairs: vec![],
        };
        assert_eq!(
            fit_alignment(&empty, AlignMode::Shared, 1.0, Solver::ClosedForm, &SolverOpts::default())
                .unwrap_err(),
            AlignError::EmptyCorpus
        );
    }

    #[test]
    fn stats_match_direct_loss() {
        let pc = hand_corpus();
        for mode in [AlignMode::Shared, AlignMode::PerLanguage] {
            let problem = build_problem(&pc, mode, 2);
            let theta = DMatrix::from_row_slice(2, 3, &[0.5, 0.2, 0.1, -0.3, 1.5, 0.7]);
            let thetas = vec![theta.clone()];
            let terms = evaluate(&problem, &thetas, 1.0, 0.0);
            let mut model = AffineAlignmentModel::identity(mode, "en", 2, &["de"]);
            let key = if mode == AlignMode::Shared { SHARED_KEY } else { "de" };
            model.maps.insert(key.into(), AffineMap::from_theta(&theta));
            let (l, r) = alignment_loss(&model, &pc, 1.0).unwrap();
            assert!((terms.alignment - l).abs() < 1e-12, "{mode:?}");
            assert!((terms.regularizer - r).abs() < 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn shared_lambda_zero_collapses() {
        let pc = hand_corpus();
        let model =
            fit_alignment(&pc, AlignMode::Shared, 0.0, Solver::ClosedForm, &SolverOpts::default())
                .unwrap();
        let map = &model.maps[SHARED_KEY];
        assert!(map.weight.iter().flatten().all(|w| w.abs() < 1e-12));
        assert!(map.bias_norm() < 1e-12);
        assert!(model.training_log.last().unwrap().alignment < 1e-12);
    }

    #[test]
    fn rank_deficient_without_ridge() {
        let pc = hand_corpus();
        let opts = SolverOpts {
            ridge: 0.0,
            ..SolverOpts::default()
        };
        assert!(matches!(
            fit_alignment(&pc, AlignMode::Shared, 0.0, Solver::ClosedForm, &opts),
            Err(AlignError::RankDeficient(_))
        ));
    }

    #[test]
    fn underdetermined_language_falls_back_to_gradient() {
        // one language with 3 links in D = 2 is fine; a second with 1 link is not
        let mut pc = hand_corpus();
        pc.pairs.push(AlignedSentencePair {
            id: "q".into(),
            src: sent("en", "e2", &[vec![0.5, 0.5]]),
            tgt: sent("fr", "f", &[vec![0.4, 0.6]]),
            links: vec![(0, 0)],
        });
        let opts = SolverOpts {
            max_epochs: 5000,
            tolerance: 1e-12,
            ..SolverOpts::default()
        };
        let model =
            fit_alignment(&pc, AlignMode::PerLanguage, 1.0, Solver::ClosedForm, &opts).unwrap();
        assert!(model.maps.contains_key("fr"));
        assert!(model.maps.contains_key("de"));
    }

    #[test]
    fn apply_identity_and_scaling() {
        let corpus = EmbeddingCorpus {
            dim: 2,
            sentences: vec![sent("de", "d", &[vec![1.0, 1.0]]), sent("en", "e", &[vec![3.0, 4.0]])],
        };
        let id = AffineAlignmentModel::identity(AlignMode::PerLanguage, "en", 2, &["de"]);
        assert_eq!(apply_alignment(&id, &corpus).unwrap(), corpus);

        let mut double = id.clone();
        double.maps.insert(
            "de".into(),
            AffineMap {
                weight: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
                bias: vec![0.0, 0.0],
            },
        );
        let out = apply_alignment(&double, &corpus).unwrap();
        assert_eq!(out.sentences[0].vectors, vec![2.0, 2.0]);
        assert_eq!(out.sentences[1].vectors, vec![3.0, 4.0]);

        let fr_only = AffineAlignmentModel::identity(AlignMode::PerLanguage, "en", 2, &["fr"]);
        assert_eq!(
            apply_alignment(&fr_only, &corpus).unwrap_err(),
            AlignError::MissingLanguage("de".into())
        );
    }

    #[test]
    fn model_json_round_trip() {
        let pc = hand_corpus();
        let model = fit_alignment(
            &pc,
            AlignMode::PerLanguage,
            1.0,
            Solver::ClosedForm,
            &SolverOpts::default(),
        )
        .unwrap();
        let json = model.to_json();
        assert!(json.contains("\"mode\": \"per-language\""));
        assert!(json.contains("\"regularized\": \"target-side-tokens\""));
        assert_eq!(AffineAlignmentModel::from_json(&json).unwrap(), model);
        assert!(AffineAlignmentModel::from_json("{}").is_err());
    }
}
