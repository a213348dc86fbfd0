//! Retrieval evaluation: Hamming-ranking mean average precision and
//! hash-lookup precision/recall/F1 at a distance radius, plus the
//! bit-correlation diagnostic used by ablation runs.

use serde::{Deserialize, Serialize};

use crate::codes::{distances_to_all, encode_view, CodeRow, PackedCodes};
use crate::data::{ground_truth_from_labels, select_rows, MultimodalDataset, SplitIndices};
use crate::error::{DmhError, Result};
use crate::model::{CodeMatrix, ViewParams};

/// Per-query relevant database indices (sharing at least one label).
pub type GroundTruth = Vec<Vec<usize>>;

/// Aggregate result of one retrieval direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Direction label, e.g. "Image→Text".
    pub task: String,
    pub map: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Lookup radius used for precision/recall/F1.
    pub radius: usize,
    /// Ranking cutoff used for MAP.
    pub r_cutoff: usize,
    pub queries_evaluated: usize,
    /// Queries skipped because their relevant set was empty.
    pub queries_excluded: usize,
    /// AP of each evaluated query, in query order (excluded queries skipped).
    pub per_query_ap: Vec<f64>,
}

/// Mean AP over valid queries plus bookkeeping.
#[derive(Debug, Clone)]
pub struct MapSummary {
    pub map: f64,
    pub per_query_ap: Vec<f64>,
    pub queries_excluded: usize,
}

/// Averaged lookup metrics plus bookkeeping.
#[derive(Debug, Clone)]
pub struct LookupSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub queries_excluded: usize,
}

fn relevance_mask(relevant: &[usize], n: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &idx in relevant {
        if idx >= n {
            return Err(DmhError::Contract(format!(
                "relevant index {idx} out of range for database of {n}"
            )));
        }
        mask[idx] = true;
    }
    Ok(mask)
}

/// Average precision of one query against a ranked database.
///
/// The database is ranked by Hamming distance to the query, ties broken by
/// ascending database index. With `delta(r)` marking a relevant item at
/// rank `r`, `P(r)` the precision among the top `r`, and `N` the number of
/// relevant items inside the top `r_cutoff`:
/// `AP = (1/N) * sum_{r=1..r_cutoff} P(r) * delta(r)`, and `AP = 0` when
/// the top `r_cutoff` contains no relevant item.
pub fn average_precision(
    query: CodeRow<'_>,
    db: &PackedCodes,
    relevant: &[usize],
    r_cutoff: usize,
) -> Result<f64> {
    let n = db.len();
    if relevant.is_empty() {
        return Err(DmhError::UndefinedAp);
    }
    if r_cutoff == 0 || r_cutoff > n {
        return Err(DmhError::Contract(format!(
            "ranking cutoff {r_cutoff} out of range for database of {n}"
        )));
    }
    let mask = relevance_mask(relevant, n)?;
    let distances = distances_to_all(query, db)?;
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ascending-index order among equal distances
    order.sort_by_key(|&m| distances[m]);

    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &m) in order.iter().take(r_cutoff).enumerate() {
        if mask[m] {
            hits += 1;
            precision_sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Ok(0.0);
    }
    Ok(precision_sum / hits as f64)
}

/// Mean of per-query APs. Queries with empty relevant sets are excluded
/// from the mean and counted; if no query is valid the evaluation is
/// empty.
pub fn mean_average_precision(
    queries: &PackedCodes,
    db: &PackedCodes,
    ground_truth: &GroundTruth,
    r_cutoff: usize,
) -> Result<MapSummary> {
    if ground_truth.len() != queries.len() {
        return Err(DmhError::Contract(format!(
            "{} ground-truth entries for {} queries",
            ground_truth.len(),
            queries.len()
        )));
    }
    let mut per_query_ap = Vec::with_capacity(queries.len());
    let mut queries_excluded = 0usize;
    for (q, relevant) in ground_truth.iter().enumerate() {
        if relevant.is_empty() {
            queries_excluded += 1;
            continue;
        }
        per_query_ap.push(average_precision(queries.row(q), db, relevant, r_cutoff)?);
    }
    if per_query_ap.is_empty() {
        return Err(DmhError::EmptyEvaluation);
    }
    let map = per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64;
    Ok(MapSummary {
        map,
        per_query_ap,
        queries_excluded,
    })
}

/// Hash-lookup metrics: per query, the retrieved set is every database
/// item within `radius` Hamming distance; precision, recall, and F1 are
/// averaged over valid queries. An empty retrieved set scores 0 for that
/// query; queries with empty relevant sets are excluded and counted.
pub fn lookup_f1(
    queries: &PackedCodes,
    db: &PackedCodes,
    ground_truth: &GroundTruth,
    radius: usize,
) -> Result<LookupSummary> {
    if ground_truth.len() != queries.len() {
        return Err(DmhError::Contract(format!(
            "{} ground-truth entries for {} queries",
            ground_truth.len(),
            queries.len()
        )));
    }
    let n = db.len();
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut evaluated = 0usize;
    let mut queries_excluded = 0usize;
    for (q, relevant) in ground_truth.iter().enumerate() {
        if relevant.is_empty() {
            queries_excluded += 1;
            continue;
        }
        let mask = relevance_mask(relevant, n)?;
        let distances = distances_to_all(queries.row(q), db)?;
        let mut retrieved = 0usize;
        let mut true_positive = 0usize;
        for (m, &d) in distances.iter().enumerate() {
            if d as usize <= radius {
                retrieved += 1;
                if mask[m] {
                    true_positive += 1;
                }
            }
        }
        let (precision, recall, f1);
        if retrieved == 0 {
            precision = 0.0;
            recall = 0.0;
            f1 = 0.0;
        } else {
            precision = true_positive as f64 / retrieved as f64;
            recall = true_positive as f64 / relevant.len() as f64;
            f1 = if true_positive == 0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
        }
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(DmhError::EmptyEvaluation);
    }
    let k = evaluated as f64;
    Ok(LookupSummary {
        precision: precision_sum / k,
        recall: recall_sum / k,
        f1: f1_sum / k,
        queries_excluded,
    })
}

/// Human-readable direction label: the two-feature-view case uses the
/// conventional Image/Text names, anything else falls back to view ids.
pub fn direction_label(query_view: usize, db_view: usize, n_feature_views: usize) -> String {
    let name = |v: usize| {
        if n_feature_views == 2 && v < 2 {
            ["Image", "Text"][v].to_string()
        } else {
            format!("View{v}")
        }
    };
    format!("{}→{}", name(query_view), name(db_view))
}

/// Cross-modal retrieval: encodes the test rows of the query view and the
/// training rows of the database view with their respective trained
/// parameters, then scores MAP (cutoff `r_cutoff`, defaulting to the
/// database size) and lookup F1 at `radius` against label ground truth.
pub fn evaluate_cross_modal(
    params: &[ViewParams],
    dataset: &MultimodalDataset,
    split: &SplitIndices,
    query_view: usize,
    db_view: usize,
    r_cutoff: Option<usize>,
    radius: usize,
) -> Result<EvalReport> {
    dataset.validate()?;
    if params.len() != dataset.views.len() {
        return Err(DmhError::Contract(format!(
            "{} parameter sets for {} views",
            params.len(),
            dataset.views.len()
        )));
    }
    for &v in &[query_view, db_view] {
        if v >= dataset.views.len() {
            return Err(DmhError::Contract(format!("view index {v} out of range")));
        }
        if dataset.views[v].is_label_view {
            return Err(DmhError::Contract(
                "the label view cannot serve as a retrieval modality".into(),
            ));
        }
    }
    let n = dataset.n();
    if split.train.is_empty() || split.test.is_empty() {
        return Err(DmhError::Contract("split has an empty side".into()));
    }
    if split.train.iter().chain(&split.test).any(|&i| i >= n) {
        return Err(DmhError::Contract("split index out of range".into()));
    }

    let query_rows = select_rows(&dataset.views[query_view].data, &split.test);
    let db_rows = select_rows(&dataset.views[db_view].data, &split.train);
    let queries = encode_view(&query_rows, &params[query_view])?;
    let db = encode_view(&db_rows, &params[db_view])?;

    let query_labels = crate::data::select_label_rows(&dataset.labels, &split.test);
    let db_labels = crate::data::select_label_rows(&dataset.labels, &split.train);
    let ground_truth = ground_truth_from_labels(&query_labels, &db_labels)?;

    let r_cutoff = r_cutoff.unwrap_or_else(|| db.len());
    let map = mean_average_precision(&queries, &db, &ground_truth, r_cutoff)?;
    let lookup = lookup_f1(&queries, &db, &ground_truth, radius)?;

    let n_feature_views = dataset.views.iter().filter(|v| !v.is_label_view).count();
    Ok(EvalReport {
        task: direction_label(query_view, db_view, n_feature_views),
        map: map.map,
        f1: lookup.f1,
        precision: lookup.precision,
        recall: lookup.recall,
        radius,
        r_cutoff,
        queries_evaluated: map.per_query_ap.len(),
        queries_excluded: map.queries_excluded,
        per_query_ap: map.per_query_ap,
    })
}

/// Mean absolute Pearson correlation over all pairs of code columns, the
/// decorrelation diagnostic. Pairs involving a zero-variance column
/// contribute 0; a single-column code scores 0.
pub fn column_correlation_metric(codes: &CodeMatrix) -> f64 {
    let (n, c) = codes.dim();
    if n == 0 || c < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let cols: Vec<Vec<f64>> = (0..c)
        .map(|j| codes.column(j).iter().map(|&b| f64::from(b)).collect())
        .collect();
    let means: Vec<f64> = cols
        .iter()
        .map(|col| col.iter().sum::<f64>() / nf)
        .collect();
    let sds: Vec<f64> = cols
        .iter()
        .zip(&means)
        .map(|(col, &m)| (col.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / nf).sqrt())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..c {
        for j in i + 1..c {
            pairs += 1;
            if sds[i] > 0.0 && sds[j] > 0.0 {
                let cov = cols[i]
                    .iter()
                    .zip(&cols[j])
                    .map(|(&a, &b)| (a - means[i]) * (b - means[j]))
                    .sum::<f64>()
                    / nf;
                total += (cov / (sds[i] * sds[j])).abs();
            }
        }
    }
    total / pairs as f64
}
