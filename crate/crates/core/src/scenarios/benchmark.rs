use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generators::generate;
use super::rng::{derive_seed, SeededRng};
use super::ScenarioError;
use crate::corpus::{build_vocab, load_jsonl, save_jsonl, BimodalPair, CorpusError, Scenario, Vocabulary};

pub const GENERATOR_VERSION: &str = "coodkit-bench/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Mixing ratios and split sizes for a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkDraft {
    /// Fraction of the training split replaced by outliers, per scenario.
    pub train_ood_frac: f64,
    /// Outlier share of every test file.
    pub test_ood_ratio: f64,
    /// Share of the ID corpus (and of the foreign corpus) held out for testing.
    pub test_fraction: f64,
    pub test_seeds: usize,
    pub vocab_min_freq: usize,
    pub vocab_max_size: usize,
}

impl Default for BenchmarkDraft {
    fn default() -> Self {
        BenchmarkDraft {
            train_ood_frac: 0.01,
            test_ood_ratio: 0.20,
            test_fraction: 0.20,
            test_seeds: 5,
            vocab_min_freq: 1,
            vocab_max_size: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFileEntry {
    pub scenario: Scenario,
    pub seed: usize,
    pub path: String,
    pub rows: usize,
    pub n_id: usize,
    pub n_ood: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub generator_version: String,
    pub seed: u64,
    pub id_train: usize,
    pub id_test: usize,
    pub train_ood_frac: BTreeMap<String, f64>,
    pub train_ood_total_frac: f64,
    pub train_ood_counts: BTreeMap<String, usize>,
    pub test_ood_ratio: f64,
    pub test_fraction: f64,
    pub vocab_size: usize,
    pub vocab: String,
    pub train: FileEntry,
    pub test_pool: FileEntry,
    pub foreign_test: FileEntry,
    pub tests: Vec<TestFileEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl BenchmarkManifest {
    /// Reads `manifest.json` from a benchmark directory.
    pub fn load(dir: &Path) -> Result<Self, ScenarioError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
        Self::from_json(&text, dir).map_err(|e| match e {
            ScenarioError::Manifest(m) => ScenarioError::Manifest(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses manifest text; relative paths resolve against `root`.
    pub fn from_json(text: &str, root: &Path) -> Result<Self, ScenarioError> {
        let mut m: BenchmarkManifest = serde_json::from_str(text).map_err(|e| ScenarioError::Manifest(e.to_string()))?;
        if m.generator_version != GENERATOR_VERSION {
            return Err(ScenarioError::Manifest(format!("unsupported generator version `{}`", m.generator_version)));
        }
        m.root = root.to_path_buf();
        Ok(m)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load_vocab(&self) -> Result<Vocabulary, CorpusError> {
        Vocabulary::load(&self.resolve(&self.vocab))
    }

    pub fn load_split(&self, entry: &FileEntry) -> Result<Vec<BimodalPair>, CorpusError> {
        load_jsonl(&self.resolve(&entry.path))
    }

    pub fn test_files(&self, scenario: Scenario) -> impl Iterator<Item = &TestFileEntry> {
        self.tests.iter().filter(move |t| t.scenario == scenario)
    }

    /// Checks that every referenced file exists and has the recorded row count.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut entries: Vec<(&str, usize)> = vec![
            (&self.train.path, self.train.rows),
            (&self.test_pool.path, self.test_pool.rows),
            (&self.foreign_test.path, self.foreign_test.rows),
        ];
        entries.extend(self.tests.iter().map(|t| (t.path.as_str(), t.rows)));
        for (path, rows) in entries {
            let actual = load_jsonl(&self.resolve(path))?.len();
            if actual != rows {
                return Err(ScenarioError::Manifest(format!("{path}: manifest says {rows} rows, file has {actual}")));
            }
        }
        self.load_vocab()?;
        Ok(())
    }
}

fn round_count(frac: f64, n: usize) -> usize {
    (frac * n as f64).round() as usize
}

fn used_sources(outliers: &[BimodalPair]) -> HashSet<String> {
    outliers
        .iter()
        .flat_map(|p| p.meta.get("source_id").into_iter().chain(p.meta.get("code_source_id")))
        .cloned()
        .collect()
}

/// Keeps `k` pairs drawn uniformly, in their original order.
fn sample_keep(pool: &[BimodalPair], k: usize, rng: &mut SeededRng) -> Vec<BimodalPair> {
    let mut idx = rng.sample_indices(pool.len(), k);
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

fn split(corpus: &[BimodalPair], n_test: usize, rng: &mut SeededRng) -> (Vec<BimodalPair>, Vec<BimodalPair>) {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    rng.shuffle(&mut order);
    let (test, train) = order.split_at(n_test);
    let pick = |ix: &[usize]| {
        let mut ix = ix.to_vec();
        ix.sort_unstable();
        ix.into_iter().map(|i| corpus[i].clone()).collect::<Vec<_>>()
    };
    let test = pick(test);
    (pick(train), test)
}

fn write_split(out_dir: &Path, rel: &str, rows: &[BimodalPair]) -> Result<FileEntry, ScenarioError> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }
    save_jsonl(rows, &path)?;
    Ok(FileEntry { path: rel.to_string(), rows: rows.len() })
}

fn check_draft(d: &BenchmarkDraft) -> Result<(), ScenarioError> {
    let bad = |what: &str, v: f64| Err(ScenarioError::InvalidArgument(format!("{what} = {v} out of range")));
    if !(0.0..0.25).contains(&d.train_ood_frac) {
        return bad("train_ood_frac", d.train_ood_frac);
    }
    if !(d.test_ood_ratio > 0.0 && d.test_ood_ratio < 1.0) {
        return bad("test_ood_ratio", d.test_ood_ratio);
    }
    if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
        return bad("test_fraction", d.test_fraction);
    }
    if d.test_seeds == 0 {
        return Err(ScenarioError::InvalidArgument("test_seeds must be at least 1".into()));
    }
    Ok(())
}

/// Builds the training split (ID with a fraction of each outlier scenario swapped
/// in), per-scenario test files for every test seed, and the shared vocabulary,
/// then writes them with `manifest.json` under `out_dir`.
pub fn assemble_benchmark(
    id_corpus: &[BimodalPair],
    foreign_corpus: &[BimodalPair],
    draft: &BenchmarkDraft,
    seed: u64,
    out_dir: &Path,
) -> Result<BenchmarkManifest, ScenarioError> {
    check_draft(draft)?;
    if let Some(p) = id_corpus.iter().chain(foreign_corpus).find(|p| !p.is_inlier()) {
        return Err(ScenarioError::InvalidArgument(format!("input record `{}` is not an inlier", p.id)));
    }
    let n_test = round_count(draft.test_fraction, id_corpus.len());
    let n_train = id_corpus.len() - n_test;
    let k_train = round_count(draft.train_ood_frac, n_train);
    let n_ood_test = round_count(draft.test_ood_ratio, n_test);
    let n_foreign_test = round_count(draft.test_fraction, foreign_corpus.len());
    let short = |what: String| Err(ScenarioError::InsufficientCorpus(what));
    if n_test < 2 || n_ood_test == 0 || n_ood_test >= n_test {
        return short(format!("{} ID pairs leave a test split of {n_test}", id_corpus.len()));
    }
    if n_train < 4 * k_train + 1 {
        return short(format!("training split of {n_train} cannot hold {k_train} outliers per scenario"));
    }
    if foreign_corpus.len() - n_foreign_test < k_train || n_foreign_test < n_ood_test {
        return short(format!("foreign corpus of {} is too small", foreign_corpus.len()));
    }

    let (train_pool, test_pool) = split(id_corpus, n_test, &mut SeededRng::substream(seed, "split:id"));
    let (foreign_train, foreign_test) =
        split(foreign_corpus, n_foreign_test, &mut SeededRng::substream(seed, "split:foreign"));

    let mut pool = train_pool.clone();
    let mut train: Vec<BimodalPair> = Vec::with_capacity(n_train);
    let mut train_counts = BTreeMap::new();
    for sc in Scenario::OOD {
        let s = derive_seed(seed, &format!("train:{sc}"));
        let outliers = match sc {
            Scenario::OutDomain => generate(sc, &train_pool, &foreign_train, k_train, s)?,
            _ => generate(sc, &pool, &[], k_train, s)?,
        };
        let used = used_sources(&outliers);
        if sc != Scenario::OutDomain {
            pool.retain(|p| !used.contains(&p.id));
        }
        train_counts.insert(sc.to_string(), outliers.len());
        train.extend(outliers);
    }
    let n_keep = n_train - 4 * k_train;
    train.extend(sample_keep(&pool, n_keep, &mut SeededRng::substream(seed, "train:keep")));
    SeededRng::substream(seed, "train:order").shuffle(&mut train);

    let mut tests = Vec::new();
    let mut test_rows = Vec::new();
    for k in 0..draft.test_seeds {
        for sc in Scenario::OOD {
            let s = derive_seed(seed, &format!("test:{sc}:{k}"));
            let outliers = generate(sc, &test_pool, &foreign_test, n_ood_test, s)?;
            let used = used_sources(&outliers);
            let remaining: Vec<BimodalPair> = test_pool.iter().filter(|p| !used.contains(&p.id)).cloned().collect();
            let mut rng = SeededRng::substream(s, "inliers");
            let mut rows = sample_keep(&remaining, n_test - n_ood_test, &mut rng);
            rows.extend(outliers);
            rng.shuffle(&mut rows);
            let path = format!("test/{sc}_seed{k}.jsonl");
            tests.push(TestFileEntry {
                scenario: sc,
                seed: k,
                path: path.clone(),
                rows: rows.len(),
                n_id: n_test - n_ood_test,
                n_ood: n_ood_test,
            });
            test_rows.push((path, rows));
        }
    }

    let mut all = id_corpus.to_vec();
    all.extend_from_slice(foreign_corpus);
    let vocab = build_vocab(&all, draft.vocab_min_freq, draft.vocab_max_size)?;

    std::fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;
    let train_entry = write_split(out_dir, "train.jsonl", &train)?;
    let pool_entry = write_split(out_dir, "test_pool.jsonl", &test_pool)?;
    let foreign_entry = write_split(out_dir, "foreign_test.jsonl", &foreign_test)?;
    for (path, rows) in &test_rows {
        write_split(out_dir, path, rows)?;
    }
    vocab.save(&out_dir.join("vocab.json"))?;

    let manifest = BenchmarkManifest {
        generator_version: GENERATOR_VERSION.to_string(),
        seed,
        id_train: n_keep,
        id_test: n_test,
        train_ood_frac: Scenario::OOD.iter().map(|s| (s.to_string(), draft.train_ood_frac)).collect(),
        train_ood_total_frac: 4.0 * draft.train_ood_frac,
        train_ood_counts: train_counts,
        test_ood_ratio: draft.test_ood_ratio,
        test_fraction: draft.test_fraction,
        vocab_size: vocab.len(),
        vocab: "vocab.json".into(),
        train: train_entry,
        test_pool: pool_entry,
        foreign_test: foreign_entry,
        tests,
        root: out_dir.to_path_buf(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, json + "\n").map_err(|e| CorpusError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthDomain, SynthSpec};

    fn corpora(n: usize) -> (Vec<BimodalPair>, Vec<BimodalPair>) {
        (
            generate_synthetic_corpus(&SynthSpec { n, domain: SynthDomain::a() }, 1),
            generate_synthetic_corpus(&SynthSpec { n, domain: SynthDomain::b() }, 2),
        )
    }

    #[test]
    fn ratios_follow_the_draft() {
        let (id, foreign) = corpora(1250);
        let dir = tempfile::tempdir().unwrap();
        let m = assemble_benchmark(&id, &foreign, &BenchmarkDraft::default(), 5, dir.path()).unwrap();
        assert_eq!(m.train.rows, 1000);
        assert_eq!(m.id_train, 960);
        assert!(m.train_ood_counts.values().all(|&c| c == 10));
        assert_eq!(m.id_test, 250);
        assert_eq!(m.tests.len(), 20);
        assert!(m.tests.iter().all(|t| t.n_id == 200 && t.n_ood == 50 && t.rows == 250));
        BenchmarkManifest::load(dir.path()).unwrap().validate().unwrap();

        let train = m.load_split(&m.train).unwrap();
        for sc in Scenario::OOD {
            assert_eq!(train.iter().filter(|p| p.scenario == sc).count(), 10);
        }
        let test = load_jsonl(&dir.path().join("test/buggy_code_seed0.jsonl")).unwrap();
        assert_eq!(test.iter().filter(|p| p.label == 0).count(), 50);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (id, foreign) = corpora(300);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assemble_benchmark(&id, &foreign, &BenchmarkDraft::default(), 9, a.path()).unwrap();
        assemble_benchmark(&id, &foreign, &BenchmarkDraft::default(), 9, b.path()).unwrap();
        for rel in ["manifest.json", "train.jsonl", "vocab.json", "test/misaligned_seed3.jsonl"] {
            let x = std::fs::read(a.path().join(rel)).unwrap();
            let y = std::fs::read(b.path().join(rel)).unwrap();
            assert_eq!(x, y, "{rel}");
        }
    }

    #[test]
    fn tiny_corpus_is_rejected() {
        let (id, foreign) = corpora(5);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            assemble_benchmark(&id, &foreign, &BenchmarkDraft::default(), 0, dir.path()),
            Err(ScenarioError::InsufficientCorpus(_))
        ));
    }
}
