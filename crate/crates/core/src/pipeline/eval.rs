use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::corpus::{BimodalPair, Scenario, STOPWORDS};
use crate::metrics::{auroc, fpr_at_95_tpr, mrr, seed_average, write_csv, AggregateRow, MetricsRow, SearchEvalRow};
use crate::scenarios::{
    derive_seed, gen_buggy_code, gen_out_domain, gen_shuffled_comment, BenchmarkManifest, SeededRng,
    DEFAULT_SHUFFLE_RATIO,
};
use crate::scoring::{calibrate_threshold, ScoredRecord};

use super::{Model, PipelineError};

/// Per-file metrics plus per-scenario seed averages.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<MetricsRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl EvalReport {
    /// Writes the per-file rows to `path` and the aggregate next to it as `<stem>.aggregate.csv`.
    pub fn write(&self, path: &Path) -> Result<PathBuf, PipelineError> {
        write_csv(&self.rows, path)?;
        let agg = aggregate_path(path);
        write_csv(&self.aggregate, &agg)?;
        Ok(agg)
    }

    pub fn mean_auroc(&self, scenario: Scenario) -> Option<f64> {
        self.aggregate.iter().find(|a| a.scenario == scenario).map(|a| a.auroc_mean)
    }
}

pub fn aggregate_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.aggregate.csv"))
}

/// AUROC and FPR95 of one scored test file; inliers are the positives.
pub fn evaluate_scores(scored: &[ScoredRecord], scenario: Scenario, seed: usize) -> Result<MetricsRow, PipelineError> {
    let id: Vec<f64> = scored.iter().filter(|r| r.label == 1).map(|r| r.p_id).collect();
    let ood: Vec<f64> = scored.iter().filter(|r| r.label == 0).map(|r| r.p_id).collect();
    Ok(MetricsRow {
        scenario,
        seed,
        auroc: auroc(&id, &ood)?,
        fpr95: fpr_at_95_tpr(&id, &ood)?,
        n_id: id.len(),
        n_ood: ood.len(),
    })
}

/// Seed averages per scenario, in scenario order. A single seed gets zero spread.
pub fn aggregate_rows(rows: &[MetricsRow]) -> Result<Vec<AggregateRow>, PipelineError> {
    let mut by: BTreeMap<Scenario, Vec<MetricsRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.scenario).or_default().push(r.clone());
    }
    by.into_values()
        .map(|group| {
            if group.len() == 1 {
                let r = &group[0];
                return Ok(AggregateRow {
                    scenario: r.scenario,
                    n_seeds: 1,
                    auroc_mean: r.auroc,
                    auroc_std: 0.0,
                    fpr95_mean: r.fpr95,
                    fpr95_std: 0.0,
                });
            }
            Ok(seed_average(&group)?)
        })
        .collect()
}

/// Runs `f` over `items` on up to `threads` scoped workers; results keep input order.
fn par_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> Result<R, PipelineError> + Sync,
) -> Result<Vec<R>, PipelineError> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let parts: Vec<Result<Vec<R>, PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<_>, _>>())).collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Scores every benchmark test file with the model's own scoring path and
/// computes per-file and seed-averaged metrics.
pub fn evaluate_run(model: &Model, manifest: &BenchmarkManifest, threads: usize) -> Result<EvalReport, PipelineError> {
    for sc in Scenario::OOD {
        if manifest.test_files(sc).next().is_none() {
            return Err(PipelineError::ScenarioMissing(sc));
        }
    }
    let mut files: Vec<_> = manifest.tests.iter().collect();
    files.sort_by_key(|t| (t.scenario, t.seed));
    let rows = par_map(&files, threads, |t| {
        let pairs = crate::corpus::load_jsonl(&manifest.resolve(&t.path))?;
        evaluate_scores(&model.score(&pairs)?, t.scenario, t.seed)
    })?;
    let aggregate = aggregate_rows(&rows)?;
    Ok(EvalReport { rows, aggregate })
}

/// Where search-eval filter scores come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreSource {
    Model,
    /// Diagnostic: the true label is the score.
    Oracle,
}

/// A test pool with a share of its inliers replaced by outliers.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedPool {
    pub rows: Vec<BimodalPair>,
    /// Pool positions that now hold outliers.
    pub replaced: Vec<usize>,
}

/// Replaces `round(n · corruption / 3)` inliers each with out-domain,
/// shuffled-comment and buggy-code outliers. Shuffled and buggy outliers take
/// the place of the row they were derived from.
pub fn corrupt_pool(
    pool: &[BimodalPair],
    foreign: &[BimodalPair],
    corruption: f64,
    seed: u64,
) -> Result<CorruptedPool, PipelineError> {
    if !(0.0..1.0).contains(&corruption) {
        return Err(PipelineError::InvalidConfig(format!("corruption must lie in [0, 1), got {corruption}")));
    }
    if pool.iter().any(|p| !p.is_inlier()) {
        return Err(PipelineError::InvalidConfig("test pool must contain only inliers".into()));
    }
    let k = (pool.len() as f64 * corruption / 3.0).round() as usize;
    let mut rows = pool.to_vec();
    let mut replaced = Vec::with_capacity(3 * k);
    if k == 0 {
        return Ok(CorruptedPool { rows, replaced });
    }
    let pos: HashMap<&str, usize> = pool.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let source = |p: &BimodalPair| pos[p.meta["source_id"].as_str()];

    let shuffled = gen_shuffled_comment(pool, k, DEFAULT_SHUFFLE_RATIO, &STOPWORDS, derive_seed(seed, "search:shuffled"))?;
    let mut used = vec![false; pool.len()];
    for p in &shuffled {
        used[source(p)] = true;
    }
    let rest: Vec<BimodalPair> = pool.iter().zip(&used).filter(|(_, &u)| !u).map(|(p, _)| p.clone()).collect();
    let buggy = gen_buggy_code(&rest, k, derive_seed(seed, "search:buggy"))?;
    for p in shuffled.into_iter().chain(buggy) {
        let i = source(&p);
        used[i] = true;
        rows[i] = p;
        replaced.push(i);
    }
    let free: Vec<usize> = (0..pool.len()).filter(|&i| !used[i]).collect();
    if free.len() < k {
        return Err(PipelineError::InvalidConfig(format!("corruption {corruption} leaves too few inliers")));
    }
    let outs = gen_out_domain(pool, foreign, k, derive_seed(seed, "search:out_domain"))?;
    let targets = SeededRng::substream(seed, "search:targets").sample_indices(free.len(), k);
    for (p, t) in outs.into_iter().zip(targets) {
        rows[free[t]] = p;
        replaced.push(free[t]);
    }
    replaced.sort_unstable();
    Ok(CorruptedPool { rows, replaced })
}

/// mRR of retrieving each row's code from its comment among all codes of the set.
pub fn set_mrr(model: &Model, rows: &[BimodalPair]) -> Result<f64, PipelineError> {
    let encoded = rows.iter().map(|p| model.encode(p)).collect::<Result<Vec<_>, _>>()?;
    let (vt, vc) = model.embed(&encoded)?;
    let gold: Vec<usize> = (0..rows.len()).collect();
    Ok(mrr(&vt, &gold, &vc)?)
}

fn inlier_scores(model: &Model, rows: &[BimodalPair], source: ScoreSource) -> Result<Vec<f64>, PipelineError> {
    Ok(match source {
        ScoreSource::Model => model.score(rows)?.into_iter().map(|r| r.p_id).collect(),
        ScoreSource::Oracle => rows.iter().map(|p| p.label as f64).collect(),
    })
}

/// Code-search mRR on the clean test pool, the corrupted pool, the corrupted
/// pool with outliers removed by ground truth, and the corrupted pool filtered
/// by thresholded scores. The threshold retains `retention` of the clean pool.
pub fn search_eval(
    model: &Model,
    manifest: &BenchmarkManifest,
    corruption: f64,
    retention: f64,
    source: ScoreSource,
) -> Result<Vec<SearchEvalRow>, PipelineError> {
    let pool = manifest.load_split(&manifest.test_pool)?;
    let foreign = manifest.load_split(&manifest.foreign_test)?;
    let corrupted = corrupt_pool(&pool, &foreign, corruption, manifest.seed)?.rows;
    let threshold = calibrate_threshold(&inlier_scores(model, &pool, source)?, retention)?;
    log::info!("search filter threshold {threshold:.6}");
    let scores = inlier_scores(model, &corrupted, source)?;
    let truth: Vec<BimodalPair> = corrupted.iter().filter(|p| p.is_inlier()).cloned().collect();
    let kept: Vec<BimodalPair> =
        corrupted.iter().zip(&scores).filter(|(_, &s)| s >= threshold).map(|(p, _)| p.clone()).collect();
    let sets = [("original", &pool), ("corrupted", &corrupted), ("filtered_ground_truth", &truth), ("filtered_model", &kept)];
    sets.into_iter()
        .map(|(name, rows)| {
            Ok(SearchEvalRow { dataset: name.to_string(), mrr: set_mrr(model, rows)?, n_queries: rows.len() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mean_std;

    fn row(scenario: Scenario, seed: usize, auroc: f64) -> MetricsRow {
        MetricsRow { scenario, seed, auroc, fpr95: 0.5, n_id: 4, n_ood: 1 }
    }

    #[test]
    fn single_seed_aggregate_has_zero_spread() {
        let agg = aggregate_rows(&[row(Scenario::Misaligned, 0, 0.7)]).unwrap();
        assert_eq!(agg[0].auroc_mean, 0.7);
        assert_eq!(agg[0].auroc_std, 0.0);
        let agg = aggregate_rows(&[row(Scenario::BuggyCode, 0, 0.6), row(Scenario::BuggyCode, 1, 0.8)]).unwrap();
        assert!((agg[0].auroc_mean - 0.7).abs() < 1e-12);
        assert_eq!(agg[0].auroc_std, mean_std(&[0.6, 0.8]).1);
    }

    #[test]
    fn aggregate_path_sits_beside_results() {
        assert_eq!(aggregate_path(Path::new("out/res.csv")), Path::new("out/res.aggregate.csv"));
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<usize> = (0..23).collect();
        let out = par_map(&items, 4, |&x| Ok(x * 2)).unwrap();
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
