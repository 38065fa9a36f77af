//! Random search over the cell space, benchmark-table evaluation, rank
//! statistics, and timing runs.
//!
//! A search run draws candidate cells, scores each one on a single batch
//! drawn once per run, and selects the argmax. Trained accuracies come from
//! an external benchmark table keyed by architecture string, so selected
//! networks can be evaluated without any training here.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{build_network, random_sample, CellSpec, Network, NetworkConfig};
use crate::data::{synthetic_batch, LabeledBatch};
use crate::error::{Error, Result};
use crate::scorer::epe_score;
use crate::tensor::derive_seed;

/// Trained accuracies of one architecture on one dataset, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Lookup table from architecture string to per-dataset trained accuracies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkTable {
    entries: BTreeMap<String, BTreeMap<String, AccuracyRecord>>,
    datasets: BTreeSet<String>,
    rows: usize,
}

impl BenchmarkTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one `(arch, dataset)` row. The architecture string must decode,
    /// both accuracies must lie in `[0, 100]`, and the pair must be new.
    pub fn insert(&mut self, arch: &str, dataset: &str, record: AccuracyRecord) -> Result<()> {
        CellSpec::decode(arch)?;
        for (name, value) in [("val_acc", record.val_acc), ("test_acc", record.test_acc)] {
            if !(0.0..=100.0).contains(&value) {
                return Err(Error::Contract(format!("{name} {value} outside [0, 100]")));
            }
        }
        if dataset.is_empty() {
            return Err(Error::Contract("dataset name must be non-empty".into()));
        }
        let prior = self
            .entries
            .entry(arch.to_string())
            .or_default()
            .insert(dataset.to_string(), record);
        if prior.is_some() {
            return Err(Error::Contract(format!("duplicate row for ({arch}, {dataset})")));
        }
        self.datasets.insert(dataset.to_string());
        self.rows += 1;
        Ok(())
    }

    /// Number of `(arch, dataset)` rows held.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn num_archs(&self) -> usize {
        self.entries.len()
    }

    pub fn datasets(&self) -> &BTreeSet<String> {
        &self.datasets
    }

    pub fn archs(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains_arch(&self, arch: &str) -> bool {
        self.entries.contains_key(arch)
    }

    pub fn lookup(&self, arch: &str, dataset: &str) -> Result<&AccuracyRecord> {
        self.entries
            .get(arch)
            .and_then(|per_dataset| per_dataset.get(dataset))
            .ok_or_else(|| Error::MissingEntry { arch: arch.to_string(), dataset: dataset.to_string() })
    }
}

const TABLE_HEADER: [&str; 4] = ["arch", "dataset", "val_acc", "test_acc"];

/// Reads a benchmark table from CSV with header `arch,dataset,val_acc,test_acc`.
/// Every validation failure reports the offending line number.
pub fn load_benchmark(path: &Path) -> Result<BenchmarkTable> {
    let ingest = |line: u64, detail: String| Error::TableIngest {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(TABLE_HEADER) {
        return Err(ingest(
            1,
            format!("header must be {}, got {:?}", TABLE_HEADER.join(","), headers),
        ));
    }
    let mut table = BenchmarkTable::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != TABLE_HEADER.len() {
            return Err(ingest(line, format!("expected 4 fields, got {}", record.len())));
        }
        let arch = &record[0];
        let dataset = &record[1];
        let mut acc = [0.0f64; 2];
        for (slot, field) in acc.iter_mut().zip([&record[2], &record[3]]) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| ingest(line, format!("bad accuracy {field:?}: {e}")))?;
        }
        table
            .insert(arch, dataset, AccuracyRecord { val_acc: acc[0], test_acc: acc[1] })
            .map_err(|e| ingest(line, e.to_string()))?;
    }
    Ok(table)
}

/// Anything that can score one candidate cell given an initialization seed
/// and a scoring batch.
pub trait CandidateScorer: Sync {
    fn score(&self, spec: &CellSpec, init_seed: u64, batch: &LabeledBatch) -> Result<f64>;
}

/// Source of the per-run scoring batch.
pub trait BatchProvider {
    fn batch(&self, seed: u64) -> Result<LabeledBatch>;
}

impl<F> BatchProvider for F
where
    F: Fn(u64) -> Result<LabeledBatch>,
{
    fn batch(&self, seed: u64) -> Result<LabeledBatch> {
        self(seed)
    }
}

/// Draws a fresh synthetic batch per run.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticProvider {
    pub n: usize,
    pub num_classes: usize,
    pub extent: usize,
}

impl BatchProvider for SyntheticProvider {
    fn batch(&self, seed: u64) -> Result<LabeledBatch> {
        synthetic_batch(self.n, self.num_classes, self.extent, seed)
    }
}

/// Scores candidates by building the untrained network and running the full
/// Jacobian-correlation pipeline. Input extent, channel count, and class
/// count come from the batch; only the width profile is fixed here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpeScorer {
    stem_channels: usize,
    cells_per_stage: usize,
}

impl EpeScorer {
    pub fn new(stem_channels: usize, cells_per_stage: usize) -> Self {
        Self { stem_channels, cells_per_stage }
    }

    /// Full-size profile matching [`NetworkConfig::bench`].
    pub fn bench() -> Self {
        Self::new(16, 5)
    }

    /// Reduced profile matching [`NetworkConfig::tiny`].
    pub fn tiny() -> Self {
        Self::new(8, 1)
    }

    /// Builds the untrained network this scorer would score.
    pub fn network_for(
        &self,
        spec: &CellSpec,
        batch: &LabeledBatch,
        init_seed: u64,
    ) -> Result<Network> {
        let (_, channels, h, w) = batch.images().dims4()?;
        if h != w {
            return Err(Error::Config(format!("images must be square, got {h}x{w}")));
        }
        let config = NetworkConfig {
            stem_channels: self.stem_channels,
            cells_per_stage: self.cells_per_stage,
            num_classes: batch.num_classes(),
            input_channels: channels,
            input_extent: h,
        };
        build_network(spec, &config, init_seed)
    }
}

impl CandidateScorer for EpeScorer {
    fn score(&self, spec: &CellSpec, init_seed: u64, batch: &LabeledBatch) -> Result<f64> {
        let net = self.network_for(spec, batch, init_seed)?;
        Ok(epe_score(&net, batch.images(), batch.labels())?.score)
    }
}

/// Outcome of one random-search run.
///
/// `scores[i]` is `None` when candidate `i` failed scoring; such candidates
/// are never selected while any candidate scored successfully. `accuracies`
/// and `optimal` stay empty until [`annotate`](Self::annotate) joins the run
/// with a benchmark table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub selected: String,
    pub selected_score: f64,
    pub candidates: Vec<String>,
    pub scores: Vec<Option<f64>>,
    pub seed: u64,
    pub seconds: f64,
    pub accuracies: BTreeMap<String, AccuracyRecord>,
    pub optimal: BTreeMap<String, f64>,
}

impl SearchResult {
    /// Fills `accuracies` with the selected network's benchmark records and
    /// `optimal` with the best test accuracy among all candidates, for every
    /// dataset in the table. Errors if any candidate is missing.
    pub fn annotate(&mut self, table: &BenchmarkTable) -> Result<()> {
        let specs: Vec<CellSpec> = self
            .candidates
            .iter()
            .map(|arch| CellSpec::decode(arch))
            .collect::<Result<_>>()?;
        for dataset in table.datasets() {
            let record = table.lookup(&self.selected, dataset)?;
            self.accuracies.insert(dataset.clone(), *record);
            self.optimal.insert(dataset.clone(), optimal_in_sample(&specs, table, dataset)?);
        }
        Ok(())
    }
}

/// Sequential [`random_search_with_jobs`].
pub fn random_search<S, P>(n: usize, seed: u64, scorer: &S, provider: &P) -> Result<SearchResult>
where
    S: CandidateScorer,
    P: BatchProvider,
{
    random_search_with_jobs(n, seed, scorer, provider, 1)
}

/// Draws `n` candidates and scores each on one batch drawn once for the
/// whole sample. `scores[i]` is `None` when candidate `i` failed scoring.
///
/// Candidate `i` is initialized with a seed derived from `(seed, i)`, so
/// results are reproducible for any `jobs` value; with `jobs > 1` candidates
/// are scored concurrently and scores are attached by candidate index.
pub fn score_random_sample<S, P>(
    n: usize,
    seed: u64,
    scorer: &S,
    provider: &P,
    jobs: usize,
) -> Result<(Vec<CellSpec>, Vec<Option<f64>>)>
where
    S: CandidateScorer,
    P: BatchProvider,
{
    if n == 0 {
        return Err(Error::Contract("sample size must be at least 1".into()));
    }
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let batch = provider.batch(seed)?;
    let specs = random_sample(n, seed);

    let score_one = |(i, spec): (usize, &CellSpec)| scorer.score(spec, derive_seed(seed, i as u64), &batch).ok();
    let scores: Vec<Option<f64>> = if jobs == 1 {
        specs.iter().enumerate().map(score_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| specs.par_iter().enumerate().map(score_one).collect())
    };
    Ok((specs, scores))
}

/// [`score_random_sample`] followed by argmax selection, ties broken by
/// first occurrence in sample order.
pub fn random_search_with_jobs<S, P>(
    n: usize,
    seed: u64,
    scorer: &S,
    provider: &P,
    jobs: usize,
) -> Result<SearchResult>
where
    S: CandidateScorer,
    P: BatchProvider,
{
    let start = Instant::now();
    let (specs, scores) = score_random_sample(n, seed, scorer, provider, jobs)?;

    let mut best: Option<(usize, f64)> = None;
    for (i, score) in scores.iter().enumerate() {
        if let Some(value) = *score {
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((i, value));
            }
        }
    }
    let (best_index, best_score) =
        best.ok_or_else(|| Error::SearchFailed(format!("all {n} candidates failed scoring")))?;

    Ok(SearchResult {
        selected: specs[best_index].encode(),
        selected_score: best_score,
        candidates: specs.iter().map(CellSpec::encode).collect(),
        scores,
        seed,
        seconds: start.elapsed().as_secs_f64(),
        accuracies: BTreeMap::new(),
        optimal: BTreeMap::new(),
    })
}

/// Mean and sample standard deviation (the `n - 1` convention).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn sample_stats(values: &[f64]) -> MeanStd {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std }
}

/// Accuracy statistics of one dataset across repeated runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    /// Validation accuracy of the selected networks.
    pub val_acc: MeanStd,
    /// Test accuracy of the selected networks.
    pub test_acc: MeanStd,
    /// Best test accuracy available within each run's sample.
    pub optimal_test_acc: MeanStd,
}

/// Repeated search runs plus their aggregate statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub runs: Vec<SearchResult>,
    pub datasets: BTreeMap<String, DatasetSummary>,
    pub seconds: MeanStd,
}

/// One dataset row of a summary in flat CSV form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub val_acc_mean: f64,
    pub val_acc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub optimal_mean: f64,
    pub optimal_std: f64,
    pub seconds_mean: f64,
    pub seconds_std: f64,
}

impl RepeatSummary {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.datasets
            .iter()
            .map(|(dataset, s)| SummaryRow {
                dataset: dataset.clone(),
                val_acc_mean: s.val_acc.mean,
                val_acc_std: s.val_acc.std,
                test_acc_mean: s.test_acc.mean,
                test_acc_std: s.test_acc.std,
                optimal_mean: s.optimal_test_acc.mean,
                optimal_std: s.optimal_test_acc.std,
                seconds_mean: self.seconds.mean,
                seconds_std: self.seconds.std,
            })
            .collect()
    }
}

/// Runs `random_search` `runs` times with per-run seeds derived from
/// `(base_seed, run index)`, annotates every run against `table`, and
/// aggregates accuracies and wall time as mean and sample std.
pub fn repeat_runs<S, P>(
    runs: usize,
    base_seed: u64,
    n: usize,
    scorer: &S,
    provider: &P,
    table: &BenchmarkTable,
    jobs: usize,
) -> Result<RepeatSummary>
where
    S: CandidateScorer,
    P: BatchProvider,
{
    if runs < 2 {
        return Err(Error::Contract(format!("need at least 2 runs for a std, got {runs}")));
    }
    let mut results = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut result =
            random_search_with_jobs(n, derive_seed(base_seed, run as u64), scorer, provider, jobs)?;
        result.annotate(table)?;
        results.push(result);
    }

    let seconds = sample_stats(&results.iter().map(|r| r.seconds).collect::<Vec<_>>());
    let mut datasets = BTreeMap::new();
    for dataset in table.datasets() {
        let collect = |f: &dyn Fn(&SearchResult) -> f64| {
            sample_stats(&results.iter().map(f).collect::<Vec<_>>())
        };
        datasets.insert(
            dataset.clone(),
            DatasetSummary {
                val_acc: collect(&|r| r.accuracies[dataset.as_str()].val_acc),
                test_acc: collect(&|r| r.accuracies[dataset.as_str()].test_acc),
                optimal_test_acc: collect(&|r| r.optimal[dataset.as_str()]),
            },
        );
    }
    Ok(RepeatSummary { runs: results, datasets, seconds })
}

/// Best test accuracy over a sample of cells, looked up in the table.
pub fn optimal_in_sample(
    sample: &[CellSpec],
    table: &BenchmarkTable,
    dataset: &str,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Contract("optimal_in_sample needs a non-empty sample".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for spec in sample {
        let record = table.lookup(&spec.encode(), dataset)?;
        best = best.max(record.test_acc);
    }
    Ok(best)
}

/// Tie-aware rank correlations of a score/accuracy sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub tau: f64,
    pub rho: f64,
    pub samples: usize,
}

fn pair_count(k: usize) -> u64 {
    if k < 2 {
        0
    } else {
        k as u64 * (k as u64 - 1) / 2
    }
}

fn tie_pairs_sorted(sorted: &[f64]) -> u64 {
    let mut total = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        total += pair_count(j - i);
        i = j;
    }
    total
}

/// Counts strict inversions while merge-sorting the slice ascending.
fn count_inversions(v: &mut [f64]) -> u64 {
    if v.len() < 2 {
        return 0;
    }
    let mid = v.len() / 2;
    let mut inversions = 0;
    let merged: Vec<f64> = {
        let (left, right) = v.split_at_mut(mid);
        inversions += count_inversions(left);
        inversions += count_inversions(right);
        let mut out = Vec::with_capacity(left.len() + right.len());
        let (mut i, mut j) = (0, 0);
        while i < left.len() && j < right.len() {
            if left[i] <= right[j] {
                out.push(left[i]);
                i += 1;
            } else {
                inversions += (left.len() - i) as u64;
                out.push(right[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&left[i..]);
        out.extend_from_slice(&right[j..]);
        out
    };
    v.copy_from_slice(&merged);
    inversions
}

/// Kendall tau-b. With `n0` total pairs, `n1`/`n2` tied pairs per axis, `n3`
/// jointly tied pairs, and `swaps` strict inversions after sorting by the
/// first axis, the statistic is
/// `(n0 - n1 - n2 + n3 - 2*swaps) / sqrt((n0 - n1) * (n0 - n2))`
/// with the radicand formed as a single product, then clamped to `[-1, 1]`.
fn kendall_tau(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = pair_count(n);
    let mut n1 = 0;
    let mut n3 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        n1 += pair_count(j - i);
        let mut a = i;
        while a < j {
            let mut b = a + 1;
            while b < j && sorted[b].1 == sorted[a].1 {
                b += 1;
            }
            n3 += pair_count(b - a);
            a = b;
        }
        i = j;
    }

    let mut ys: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let swaps = count_inversions(&mut ys);
    let n2 = tie_pairs_sorted(&ys);

    let numerator = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    let radicand = ((n0 - n1) as u128 * (n0 - n2) as u128) as f64;
    (numerator as f64 / radicand.sqrt()).clamp(-1.0, 1.0)
}

/// Ascending fractional ranks, 1-based; tied values share the average of
/// their positions, which is always an exact multiple of one half.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rho: Pearson correlation of the average ranks, accumulated in
/// input order as `sxy / sqrt(sxx * syy)` with the radicand formed as a
/// single product, then clamped to `[-1, 1]`.
fn spearman_rho(pairs: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let rx = average_ranks(&xs);
    let ry = average_ranks(&ys);
    let mean = (pairs.len() + 1) as f64 / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..pairs.len() {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Kendall tau-b and Spearman rho of `(score, accuracy)` pairs.
///
/// Needs at least two finite pairs; a constant axis leaves both statistics
/// undefined and is rejected rather than reported as 0.
pub fn rank_correlation(pairs: &[(f64, f64)]) -> Result<RankStats> {
    if pairs.len() < 2 {
        return Err(Error::Contract(format!(
            "rank correlation needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Contract("rank correlation needs finite inputs".into()));
    }
    if pairs.iter().all(|p| p.0 == pairs[0].0) {
        return Err(Error::UndefinedCorrelation("the score axis is constant"));
    }
    if pairs.iter().all(|p| p.1 == pairs[0].1) {
        return Err(Error::UndefinedCorrelation("the accuracy axis is constant"));
    }
    Ok(RankStats {
        tau: kendall_tau(pairs),
        rho: spearman_rho(pairs),
        samples: pairs.len(),
    })
}

/// One point of a score-versus-accuracy scatter export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub arch: String,
    pub score: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Writes scatter rows as CSV with header `arch,score,val_acc,test_acc`.
/// Empty input produces a header-only file.
pub fn scatter_export(rows: &[ScatterRow], path: &Path) -> Result<()> {
    write_csv(path, ["arch", "score", "val_acc", "test_acc"], rows)
}

/// Reads a file written by [`scatter_export`].
pub fn load_scatter(path: &Path) -> Result<Vec<ScatterRow>> {
    read_csv(path)
}

/// Wall time of scoring at one image extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub extent: usize,
    pub seconds: f64,
}

/// Measures the median-of-3 wall time of a full scoring call per image size.
///
/// Sizes must be positive multiples of 4 (two stride-2 reductions), and the
/// batch count at least 2 so the synthetic batch can span two classes. The
/// network is built once per size; only scoring is timed.
pub fn timing_benchmark(
    sizes: &[usize],
    batch_size: usize,
    spec: &CellSpec,
    scorer: &EpeScorer,
    seed: u64,
) -> Result<Vec<TimingRow>> {
    if sizes.is_empty() {
        return Err(Error::Contract("timing needs at least one image size".into()));
    }
    if batch_size < 2 {
        return Err(Error::Contract("timing batch needs at least 2 images".into()));
    }
    for &size in sizes {
        if size == 0 || size % 4 != 0 {
            return Err(Error::Config(format!(
                "image size must be a positive multiple of 4, got {size}"
            )));
        }
    }
    let classes = batch_size.min(10).max(2);
    let mut rows = Vec::with_capacity(sizes.len());
    for &extent in sizes {
        let batch = synthetic_batch(batch_size, classes, extent, derive_seed(seed, extent as u64))?;
        let net = scorer.network_for(spec, &batch, seed)?;
        let mut times = [0.0; 3];
        for slot in &mut times {
            let start = Instant::now();
            epe_score(&net, batch.images(), batch.labels())?;
            *slot = start.elapsed().as_secs_f64();
        }
        times.sort_unstable_by(f64::total_cmp);
        rows.push(TimingRow { extent, seconds: times[1] });
    }
    Ok(rows)
}

/// Writes timing rows as CSV with header `extent,seconds`.
pub fn write_timing(rows: &[TimingRow], path: &Path) -> Result<()> {
    write_csv(path, ["extent", "seconds"], rows)
}

/// Reads a file written by [`write_timing`].
pub fn load_timing(path: &Path) -> Result<Vec<TimingRow>> {
    read_csv(path)
}

/// Writes summary rows as CSV, one line per dataset.
pub fn write_summary_csv(summary: &RepeatSummary, path: &Path) -> Result<()> {
    write_csv(
        path,
        [
            "dataset",
            "val_acc_mean",
            "val_acc_std",
            "test_acc_mean",
            "test_acc_std",
            "optimal_mean",
            "optimal_std",
            "seconds_mean",
            "seconds_std",
        ],
        &summary.rows(),
    )
}

/// Reads a file written by [`write_summary_csv`].
pub fn load_summary_rows(path: &Path) -> Result<Vec<SummaryRow>> {
    read_csv(path)
}

fn write_csv<T: Serialize, const W: usize>(
    path: &Path,
    header: [&str; W],
    rows: &[T],
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(Error::from)?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    reader.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(Error::from)
}
