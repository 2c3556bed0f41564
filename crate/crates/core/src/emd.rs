//! Earth Mover Distance between token sets and the cross-lingual sentence
//! score built on it.
//!
//! The exact solver is the transportation simplex (MODI / u-v method): a
//! north-west-corner basis, dual potentials from the basis spanning tree, and
//! pivots around the unique cycle closed by the entering cell. Degenerate
//! bases keep zero-flow basic cells so the basis is always a spanning tree.

use std::collections::VecDeque;

use crate::store::SentenceEmbedding;

/// Tolerance on simplex weights summing to one.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;
/// Largest size accepted by [`emd_bruteforce_oracle`].
pub const ORACLE_MAX_N: usize = 7;

const REDUCED_COST_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmdError {
    #[error("{side} weights sum to {sum}, expected 1")]
    WeightSum { side: &'static str, sum: f64 },
    #[error("{side} weight {index} is negative or non-finite ({value})")]
    NegativeWeight {
        side: &'static str,
        index: usize,
        value: f64,
    },
    #[error("cost matrix is {rows}x{cols} but weights have lengths {n} and {m}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        n: usize,
        m: usize,
    },
    #[error("{side} sentence `{sent_id}` has no non-special token")]
    NoContentTokens { side: &'static str, sent_id: String },
    #[error("{side} sentence `{sent_id}` has a zero-norm vector at token {token}")]
    ZeroNorm {
        side: &'static str,
        sent_id: String,
        token: usize,
    },
    #[error("sentences have different dimensions ({0} vs {1})")]
    VectorDimension(usize, usize),
    #[error("oracle needs a square cost matrix with 1 <= n <= {ORACLE_MAX_N}, got {rows}x{cols}")]
    OracleShape { rows: usize, cols: usize },
    #[error("cost matrix has a negative or non-finite entry at ({0}, {1})")]
    InvalidCost(usize, usize),
}

/// Row-major `rows x cols` matrix of non-negative ground costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    /// Token index in the source sentence for each row.
    pub row_tokens: Vec<usize>,
    /// Token index in the target sentence for each column.
    pub col_tokens: Vec<usize>,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == m), "ragged cost matrix");
        CostMatrix {
            rows: n,
            cols: m,
            values: rows.concat(),
            row_tokens: (0..n).collect(),
            col_tokens: (0..m).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            values,
            row_tokens: self.col_tokens.clone(),
            col_tokens: self.row_tokens.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major flow matrix.
    pub flow: Vec<f64>,
    pub total_cost: f64,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.flow[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.flow.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type ContentVectors<'a> = (Vec<usize>, Vec<(&'a [f64], f64)>);

/// Content token indices with their vectors and squared norms.
fn content_vectors<'a>(s: &'a SentenceEmbedding, side: &'static str) -> Result<ContentVectors<'a>, EmdError> {
    let idx: Vec<usize> = s.content_indices().collect();
    if idx.is_empty() {
        return Err(EmdError::NoContentTokens {
            side,
            sent_id: s.sent_id.clone(),
        });
    }
    let mut out = Vec::with_capacity(idx.len());
    for &i in &idx {
        let v = s.vector(i);
        let n2 = dot(v, v);
        if n2 == 0.0 {
            return Err(EmdError::ZeroNorm {
                side,
                sent_id: s.sent_id.clone(),
                token: i,
            });
        }
        out.push((v, n2));
    }
    Ok((idx, out))
}

/// `1 - cos(u_i, v_j)` over the non-special tokens of both sentences,
/// clamped into `[0, 2]`.
pub fn cost_matrix(src: &SentenceEmbedding, tgt: &SentenceEmbedding) -> Result<CostMatrix, EmdError> {
    if src.dim != tgt.dim {
        return Err(EmdError::VectorDimension(src.dim, tgt.dim));
    }
    let (row_tokens, us) = content_vectors(src, "source")?;
    let (col_tokens, vs) = content_vectors(tgt, "target")?;
    let mut values = Vec::with_capacity(us.len() * vs.len());
    for (u, nu) in &us {
        for (v, nv) in &vs {
            let cos = dot(u, v) / (nu * nv).sqrt();
            values.push((1.0 - cos).clamp(0.0, 2.0));
        }
    }
    Ok(CostMatrix {
        rows: us.len(),
        cols: vs.len(),
        values,
        row_tokens,
        col_tokens,
    })
}

fn check_weights(w: &[f64], side: &'static str) -> Result<(), EmdError> {
    for (index, &value) in w.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(EmdError::NegativeWeight { side, index, value });
        }
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(EmdError::WeightSum { side, sum });
    }
    Ok(())
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Basis of the transportation simplex: `n + m - 1` cells forming a spanning
/// tree over row nodes `0..n` and column nodes `n..n+m`.
struct Basis {
    n: usize,
    m: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    in_basis: Vec<bool>,
}

impl Basis {
    fn north_west_corner(a: &[f64], b: &[f64]) -> Self {
        let (n, m) = (a.len(), b.len());
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let mut cells = Vec::with_capacity(n + m - 1);
        let mut flow = vec![0.0; n * m];
        let mut in_basis = vec![false; n * m];
        let (mut i, mut j) = (0, 0);
        loop {
            let f = ra[i].min(rb[j]);
            ra[i] -= f;
            rb[j] -= f;
            cells.push((i, j));
            flow[i * m + j] = f;
            in_basis[i * m + j] = true;
            if i == n - 1 && j == m - 1 {
                break;
            }
            // advance exactly one index per cell to keep n + m - 1 cells
            let row_done = ra[i] <= rb[j];
            if (row_done && i < n - 1) || j == m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(cells.len(), n + m - 1);
        Basis {
            n,
            m,
            cells,
            flow,
            in_basis,
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        // node -> (neighbour node, basis cell index)
        let mut adj = vec![Vec::new(); self.n + self.m];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.n + j, k));
            adj[self.n + j].push((i, k));
        }
        adj
    }

    /// Dual potentials with `u_i + v_j = c_ij` on every basic cell.
    fn potentials(&self, cost: &CostMatrix, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.n + self.m];
        let mut queue = VecDeque::new();
        pot[0] = 0.0;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.cells[k];
                    pot[next] = cost.get(i, j) - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.n);
        (pot, v)
    }

    /// Basis cells on the tree path from column `j` back to row `i`, in order.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let total = self.n + self.m;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        let mut queue = VecDeque::new();
        seen[i] = true;
        queue.push_back(i);
        while let Some(node) = queue.pop_front() {
            if node == self.n + j {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = self.n + j;
        while node != i {
            let (prev, k) = parent[node].expect("basis is a spanning tree");
            cells.push(k);
            node = prev;
        }
        cells
    }
}

/// Exact optimal transport between `weights_a` and `weights_b` under `cost`.
pub fn emd(weights_a: &[f64], weights_b: &[f64], cost: &CostMatrix) -> Result<TransportPlan, EmdError> {
    let (n, m) = (weights_a.len(), weights_b.len());
    if n == 0 || m == 0 || cost.rows != n || cost.cols != m || cost.values.len() != n * m {
        return Err(EmdError::DimensionMismatch {
            rows: cost.rows,
            cols: cost.cols,
            n,
            m,
        });
    }
    check_weights(weights_a, "source")?;
    check_weights(weights_b, "target")?;
    if let Some(k) = cost.values.iter().position(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(EmdError::InvalidCost(k / m, k % m));
    }

    let mut basis = Basis::north_west_corner(weights_a, weights_b);
    // Dantzig's rule first; Bland's rule after this many pivots rules out cycling.
    let bland_after = 50 * (n + m) * (n + m);
    let mut pivots = 0usize;

    loop {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(cost, &adj);

        let mut entering: Option<(usize, usize)> = None;
        let mut best = -REDUCED_COST_EPS;
        'scan: for i in 0..n {
            for j in 0..m {
                if basis.in_basis[i * m + j] {
                    continue;
                }
                let reduced = cost.get(i, j) - u[i] - v[j];
                if reduced < best {
                    entering = Some((i, j));
                    if pivots >= bland_after {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        pivots += 1;

        // cycle: entering cell (+), then path cells alternate -, +, -, ...
        let path = basis.path(&adj, ei, ej);
        let mut leave: Option<usize> = None;
        let mut theta = f64::INFINITY;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (i, j) = basis.cells[k];
                let f = basis.flow[i * m + j];
                let better = match leave {
                    None => true,
                    Some(l) => f < theta || (f == theta && basis.cells[k] < basis.cells[l]),
                };
                if better {
                    theta = f;
                    leave = Some(k);
                }
            }
        }
        let leave = leave.expect("cycle has a decreasing cell");
        for (pos, &k) in path.iter().enumerate() {
            let (i, j) = basis.cells[k];
            let f = &mut basis.flow[i * m + j];
            if pos % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        let (li, lj) = basis.cells[leave];
        basis.flow[li * m + lj] = 0.0;
        basis.in_basis[li * m + lj] = false;
        basis.cells[leave] = (ei, ej);
        basis.in_basis[ei * m + ej] = true;
        basis.flow[ei * m + ej] = theta;
    }

    let total_cost = basis
        .flow
        .iter()
        .zip(&cost.values)
        .map(|(f, c)| f * c)
        .sum();
    Ok(TransportPlan {
        rows: n,
        cols: m,
        flow: basis.flow,
        total_cost,
    })
}

/// Minimum over all permutations of the mean assigned cost. For uniform
/// weights on equal-size sets this equals the EMD.
pub fn emd_bruteforce_oracle(cost: &CostMatrix) -> Result<f64, EmdError> {
    let n = cost.rows;
    if n != cost.cols || n == 0 || n > ORACLE_MAX_N {
        return Err(EmdError::OracleShape {
            rows: cost.rows,
            cols: cost.cols,
        });
    }
    // Heap's algorithm over column assignments
    let mut perm: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    let assigned = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>();
    let mut best = assigned(&perm);
    let mut k = 0;
    while k < n {
        if counters[k] < k {
            if k % 2 == 0 {
                perm.swap(0, k);
            } else {
                perm.swap(counters[k], k);
            }
            best = best.min(assigned(&perm));
            counters[k] += 1;
            k = 0;
        } else {
            counters[k] = 0;
            k += 1;
        }
    }
    Ok(best / n as f64)
}

/// A preprocessing step applied to both sentences before scoring.
pub type Transform<'a> = dyn Fn(&SentenceEmbedding) -> SentenceEmbedding + 'a;

/// Negated EMD between two sentences under uniform weights on their
/// non-special tokens. Higher is more similar; the range is `[-2, 0]`.
pub fn xmover_score(
    src: &SentenceEmbedding,
    tgt: &SentenceEmbedding,
    pipeline: &[&Transform<'_>],
) -> Result<f64, EmdError> {
    let (src, tgt) = pipeline.iter().fold(
        (src.clone(), tgt.clone()),
        |(s, t), step| (step(&s), step(&t)),
    );
    let cost = cost_matrix(&src, &tgt)?;
    let plan = emd(&uniform_weights(cost.rows), &uniform_weights(cost.cols), &cost)?;
    Ok(-plan.total_cost)
}

/// Per-segment scores for one system.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub system: String,
    pub segments: Vec<(String, f64)>,
}

impl ScoreReport {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// `<segment_id>\t<score>` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, score) in &self.segments {
            out.push_str(&format!("{id}\t{score}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(rows: &[Vec<f64>]) -> SentenceEmbedding {
        let n = rows.len();
        SentenceEmbedding::from_rows("xx", "s", 0, vec!["w".into(); n], vec![false; n], rows).unwrap()
    }

    #[test]
    fn cosine_costs() {
        let a = single(&[vec![1.0, 0.0]]);
        let b = single(&[vec![0.0, 1.0]]);
        let c = single(&[vec![-1.0, 0.0]]);
        assert_eq!(cost_matrix(&a, &a).unwrap().values, vec![0.0]);
        assert_eq!(cost_matrix(&a, &b).unwrap().values, vec![1.0]);
        assert_eq!(cost_matrix(&a, &c).unwrap().values, vec![2.0]);
    }

    #[test]
    fn cost_matrix_skips_special_tokens() {
        let mut s = single(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]);
        s.special[1] = true;
        let cm = cost_matrix(&s, &s).unwrap();
        assert_eq!((cm.rows, cm.cols), (2, 2));
        assert_eq!(cm.row_tokens, vec![0, 2]);
        assert_eq!(cm.values, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn cost_matrix_errors() {
        let zero = single(&[vec![0.0, 0.0]]);
        let ok = single(&[vec![1.0, 0.0]]);
        assert!(matches!(cost_matrix(&zero, &ok), Err(EmdError::ZeroNorm { .. })));
        let mut all_special = ok.clone();
        all_special.special[0] = true;
        assert!(matches!(
            cost_matrix(&ok, &all_special),
            Err(EmdError::NoContentTokens { side: "target", .. })
        ));
    }

    #[test]
    fn single_cell() {
        let cost = CostMatrix::from_rows(&[vec![0.7]]);
        let plan = emd(&[1.0], &[1.0], &cost).unwrap();
        assert_eq!(plan.total_cost, 0.7);
    }

    #[test]
    fn identity_plan_is_free() {
        let cost = CostMatrix::from_rows(&[
            vec![0.0, 1.0, 0.5],
            vec![0.3, 0.0, 0.9],
            vec![0.2, 0.4, 0.0],
        ]);
        let w = [0.2, 0.5, 0.3];
        let plan = emd(&w, &w, &cost).unwrap();
        assert!(plan.total_cost.abs() < 1e-15);
        for i in 0..3 {
            assert!((plan.get(i, i) - w[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangular_hand_case() {
        // two sources of mass 1/2 into three sinks of 1/3
        let cost = CostMatrix::from_rows(&[vec![0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0]]);
        let plan = emd(&[0.5, 0.5], &uniform_weights(3), &cost).unwrap();
        // 1/3 at cost 0 from each side, the middle sink at cost 1
        assert!((plan.total_cost - 1.0 / 3.0).abs() < 1e-12);
        for (got, want) in plan.row_sums().iter().zip([0.5, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn emd_argument_errors() {
        let cost = CostMatrix::from_rows(&[vec![0.0, 1.0]]);
        assert!(matches!(
            emd(&[1.0], &[0.5, 0.4], &cost),
            Err(EmdError::WeightSum { side: "target", .. })
        ));
        assert!(matches!(
            emd(&[1.0], &[1.5, -0.5], &cost),
            Err(EmdError::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(emd(&[1.0], &[1.0], &cost), Err(EmdError::DimensionMismatch { .. })));
    }

    #[test]
    fn oracle_hand_cases() {
        assert_eq!(emd_bruteforce_oracle(&CostMatrix::from_rows(&[vec![0.3]])).unwrap(), 0.3);
        let swap = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(emd_bruteforce_oracle(&swap).unwrap(), 0.0);
        // permutations of 3: (0,1,2)=0.9+0.5+0.6, (0,2,1)=0.9+0.1+0.8, (1,0,2)=0.2+0.4+0.6,
        // (1,2,0)=0.2+0.1+0.3, (2,0,1)=0.7+0.4+0.8, (2,1,0)=0.7+0.5+0.3 -> min 0.6
        let c = CostMatrix::from_rows(&[
            vec![0.9, 0.2, 0.7],
            vec![0.4, 0.5, 0.1],
            vec![0.3, 0.8, 0.6],
        ]);
        assert!((emd_bruteforce_oracle(&c).unwrap() - 0.6 / 3.0).abs() < 1e-15);
        assert!(emd_bruteforce_oracle(&CostMatrix::from_rows(&[vec![0.0, 1.0]])).is_err());
        let big = CostMatrix::from_rows(&vec![vec![0.0; 8]; 8]);
        assert!(matches!(
            emd_bruteforce_oracle(&big),
            Err(EmdError::OracleShape { rows: 8, .. })
        ));
    }

    #[test]
    fn score_identity_and_range() {
        let s = single(&[vec![1.0, 0.2], vec![-0.3, 0.9]]);
        assert_eq!(xmover_score(&s, &s, &[]).unwrap(), 0.0);
        let t = single(&[vec![-1.0, -0.2]]);
        let score = xmover_score(&s, &t, &[]).unwrap();
        assert!((-2.0..=0.0).contains(&score));
    }

    #[test]
    fn score_applies_pipeline_to_both_sides() {
        let s = single(&[vec![1.0, 0.0]]);
        let t = single(&[vec![0.0, 1.0]]);
        let collapse = |x: &SentenceEmbedding| x.with_vectors(vec![1.0; x.vectors.len()]);
        assert_eq!(xmover_score(&s, &t, &[]).unwrap(), -1.0);
        assert_eq!(xmover_score(&s, &t, &[&collapse]).unwrap(), 0.0);
    }
}
