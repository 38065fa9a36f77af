//! Training-free scoring from per-class Jacobian correlations.
//!
//! For a batch of `N` inputs the scorer takes one backward pass to obtain the
//! Jacobian matrix `J` (row `i` = gradient of the summed logits with respect
//! to input `i`), splits the rows by label, builds each class's row-by-row
//! correlation matrix, condenses every class into a scalar evaluation `E_c`,
//! and aggregates the evaluations into the final non-negative score `S`.
//! Higher scores predict better trained accuracy.
//!
//! Reductions that feed a score use canonical summation: addends are sorted
//! before accumulation, so `S` is bit-identical under batch permutation and
//! label renaming rather than merely close.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arch::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stabilizer added to every correlation magnitude before the logarithm.
pub const SMALL_K: f64 = 1e-5;

/// Largest class count handled by the plain sum branches; above it both the
/// per-class evaluation and the aggregate switch to normalized forms.
pub const PER_CLASS_BRANCH_LIMIT: usize = 100;

/// Which aggregation rule produced a score.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ScoreBranch {
    /// `C <= 100`: sum of absolute class evaluations.
    #[serde(rename = "sum-abs")]
    SumAbs,
    /// `C > 100`: mean absolute pairwise difference of class evaluations.
    #[serde(rename = "pairwise-diff")]
    PairwiseDiff,
}

impl ScoreBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreBranch::SumAbs => "sum-abs",
            ScoreBranch::PairwiseDiff => "pairwise-diff",
        }
    }
}

impl std::fmt::Display for ScoreBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `N x D` input-gradient matrix with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl JacobianMatrix {
    /// Builds the matrix from a flat row-major buffer.
    pub fn from_flat(data: Vec<f64>, rows: usize, cols: usize, labels: Vec<usize>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Contract(format!(
                "jacobian must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "jacobian",
                detail: format!("{rows}x{cols} wants {} values, got {}", rows * cols, data.len()),
            });
        }
        if labels.len() != rows {
            return Err(Error::Contract(format!(
                "{} labels for {rows} jacobian rows",
                labels.len()
            )));
        }
        let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
        let num_classes = distinct.len();
        Ok(Self { data, rows, cols, labels, num_classes })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch {
                op: "jacobian",
                detail: "rows have unequal lengths".into(),
            });
        }
        Self::from_flat(rows.into_iter().flatten().collect(), n, d, labels)
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..][..self.cols]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of distinct labels present in the batch.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The rows of a Jacobian that share one label.
#[derive(Clone, Debug)]
pub struct ClassBlock {
    class_id: usize,
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl ClassBlock {
    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..][..self.cols]
    }
}

/// Row correlation matrix of one class block plus its identity.
#[derive(Clone, Debug)]
pub struct ClassCorrelation {
    class_id: usize,
    size: usize,
    matrix: Vec<f64>,
}

impl ClassCorrelation {
    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// Everything a scoring run reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Canonical architecture string of the scored network.
    pub arch: String,
    /// Aggregate score `S`; non-negative by construction.
    pub score: f64,
    /// Aggregation rule that produced `score`.
    pub branch: ScoreBranch,
    /// Distinct labels in the scoring batch.
    pub num_classes: usize,
    /// Per-class evaluations in ascending class-id order.
    pub e_values: Vec<f64>,
    /// Wall time of the scoring call.
    pub seconds: f64,
}

/// Sums `values` in a canonical order (ascending by total order), making the
/// result independent of how the addends were produced.
fn canonical_sum(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// Splits `j` into one block per distinct label, ascending by class id, with
/// rows kept in batch order.
pub fn partition_by_class(j: &JacobianMatrix) -> Vec<ClassBlock> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &label) in j.labels().iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    by_class
        .into_iter()
        .map(|(class_id, row_ids)| {
            let mut data = Vec::with_capacity(row_ids.len() * j.num_cols());
            for &r in &row_ids {
                data.extend_from_slice(j.row(r));
            }
            ClassBlock { class_id, data, rows: row_ids.len(), cols: j.num_cols() }
        })
        .collect()
}

/// Centered cross-product matrix of a class block: rows are centered by the
/// per-column mean, then `cov = centered * centered^T`. No sample-count
/// scaling is applied; the correlation step cancels any constant factor.
pub fn class_covariance(block: &ClassBlock) -> Vec<f64> {
    let (n, d) = (block.rows, block.cols);
    let mut centered = block.data.clone();
    let mut column = Vec::with_capacity(n);
    for c in 0..d {
        column.clear();
        column.extend((0..n).map(|r| block.data[r * d + c]));
        column.sort_unstable_by(f64::total_cmp);
        let mean = column.iter().sum::<f64>() / n as f64;
        for r in 0..n {
            centered[r * d + c] -= mean;
        }
    }
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for jj in i..n {
            let a = &centered[i * d..][..d];
            let b = &centered[jj * d..][..d];
            let mut acc = 0.0;
            for (x, y) in a.iter().zip(b) {
                acc += x * y;
            }
            cov[i * n + jj] = acc;
            cov[jj * n + i] = acc;
        }
    }
    cov
}

/// Normalizes a covariance matrix to correlations,
/// `corr[i][j] = cov[i][j] / sqrt(cov[i][i] * cov[j][j])`.
///
/// Rows with zero variance (single-sample classes, duplicated rows, or an
/// all-zero Jacobian) would divide by zero; their diagonal entry is defined
/// as 1 and their off-diagonal entries as 0.
pub fn class_correlation(class_id: usize, cov: &[f64], size: usize) -> ClassCorrelation {
    assert_eq!(cov.len(), size * size, "covariance must be square");
    let mut matrix = vec![0.0; size * size];
    for i in 0..size {
        matrix[i * size + i] = 1.0;
        for j in i + 1..size {
            let denom_sq = cov[i * size + i] * cov[j * size + j];
            let value = if denom_sq > 0.0 { cov[i * size + j] / denom_sq.sqrt() } else { 0.0 };
            matrix[i * size + j] = value;
            matrix[j * size + i] = value;
        }
    }
    ClassCorrelation { class_id, size, matrix }
}

/// Condenses one correlation matrix into the class evaluation
/// `E_c = sum over all entries of ln(|corr| + k)`, divided by the entry
/// count when the batch holds more than [`PER_CLASS_BRANCH_LIMIT`] classes.
pub fn evaluate_class(corr: &ClassCorrelation, classes_in_batch: usize) -> f64 {
    let terms: Vec<f64> = corr.matrix.iter().map(|v| (v.abs() + SMALL_K).ln()).collect();
    let total = canonical_sum(terms);
    if classes_in_batch > PER_CLASS_BRANCH_LIMIT {
        total / (corr.size * corr.size) as f64
    } else {
        total
    }
}

/// Aggregates per-class evaluations into the final score: the sum of
/// magnitudes for `C <= 100`, otherwise the mean absolute pairwise
/// difference `sum_{i<j} |E_i - E_j| / C`.
pub fn aggregate_score(e_values: &[f64], classes_in_batch: usize) -> Result<f64> {
    if e_values.is_empty() {
        return Err(Error::Contract("aggregate_score needs at least one class".into()));
    }
    if e_values.len() != classes_in_batch {
        return Err(Error::Contract(format!(
            "{} evaluations for {classes_in_batch} classes",
            e_values.len()
        )));
    }
    if classes_in_batch <= PER_CLASS_BRANCH_LIMIT {
        Ok(canonical_sum(e_values.iter().map(|e| e.abs()).collect()))
    } else {
        let mut diffs = Vec::with_capacity(e_values.len() * (e_values.len() - 1) / 2);
        for i in 0..e_values.len() {
            for j in i + 1..e_values.len() {
                diffs.push((e_values[i] - e_values[j]).abs());
            }
        }
        Ok(canonical_sum(diffs) / classes_in_batch as f64)
    }
}

/// Scores an already-computed Jacobian: partition, correlate, evaluate,
/// aggregate. Returns the evaluations in ascending class-id order alongside
/// the score and the branch taken.
pub fn score_jacobian(j: &JacobianMatrix) -> Result<(Vec<f64>, f64, ScoreBranch)> {
    let classes = j.num_classes();
    let e_values: Vec<f64> = partition_by_class(j)
        .iter()
        .map(|block| {
            let cov = class_covariance(block);
            let corr = class_correlation(block.class_id(), &cov, block.num_rows());
            evaluate_class(&corr, classes)
        })
        .collect();
    let score = aggregate_score(&e_values, classes)?;
    let branch = if classes <= PER_CLASS_BRANCH_LIMIT {
        ScoreBranch::SumAbs
    } else {
        ScoreBranch::PairwiseDiff
    };
    Ok((e_values, score, branch))
}

/// One forward and one backward pass: row `i` is the gradient of the summed
/// logits with respect to input `i`, flattened to length `C*H*W`.
pub fn compute_jacobian(net: &Network, batch: &Tensor, labels: &[usize]) -> Result<JacobianMatrix> {
    let (n, _, _, _) = batch.dims4()?;
    if labels.len() != n {
        return Err(Error::Contract(format!(
            "{} labels for a batch of {n} images",
            labels.len()
        )));
    }
    let (mut tape, input, logits) = net.trace(batch)?;
    if !tape.value(logits)?.is_finite() {
        return Err(Error::NonFiniteScore { arch: net.arch().to_string() });
    }
    let scalar = tape.sum_all(logits)?;
    let grad = tape.backward_to_input(scalar, input)?;
    if !grad.is_finite() {
        return Err(Error::NonFiniteScore { arch: net.arch().to_string() });
    }
    let cols = grad.numel() / n;
    JacobianMatrix::from_flat(grad.into_data(), n, cols, labels.to_vec())
}

/// The full scoring pipeline for one network and one labeled batch.
pub fn epe_score(net: &Network, batch: &Tensor, labels: &[usize]) -> Result<ScoreReport> {
    let start = Instant::now();
    let j = compute_jacobian(net, batch, labels)?;
    let (e_values, score, branch) = score_jacobian(&j)?;
    if !score.is_finite() {
        return Err(Error::NonFiniteScore { arch: net.arch().to_string() });
    }
    Ok(ScoreReport {
        arch: net.arch().to_string(),
        score,
        branch,
        num_classes: j.num_classes(),
        e_values,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Label-free baseline: evaluates the whole batch as a single correlation
/// matrix and returns `|E|`. Equals the score of [`epe_score`] whenever all
/// labels coincide.
pub fn single_matrix_score(net: &Network, batch: &Tensor) -> Result<f64> {
    let (n, _, _, _) = batch.dims4()?;
    let report = epe_score(net, batch, &vec![0; n])?;
    Ok(report.score)
}
