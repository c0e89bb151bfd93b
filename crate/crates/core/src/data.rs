//! Drug-target interaction corpora: loading, summary statistics and splits.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Affinity scores at or above this value are labelled positive.
pub const AFFINITY_THRESHOLD: f64 = 6.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus contains no records")]
    EmptyCorpus,
    #[error("{mode} split needs at least {needed} records, got {got}")]
    TooFewRecords {
        mode: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("invalid split specification `{0}` (expected ratio, kfold:K with K >= 2, or carve20)")]
    InvalidSplit(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DtiRecord {
    pub smiles: String,
    pub sequence: String,
    pub label: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `smiles<TAB>sequence<TAB>label`.
    Tsv,
    /// `smiles sequence label`, whitespace separated.
    Legacy,
    /// Tab separated if the first data line contains a tab, else legacy.
    #[default]
    Auto,
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
) -> Result<Vec<DtiRecord>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text, format)
}

/// Parses corpus text. Blank lines and `#` comments are skipped, as is a
/// leading header line whose label column reads `label`.
pub fn parse_corpus(text: &str, format: CorpusFormat) -> Result<Vec<DtiRecord>, DataError> {
    let mut records = Vec::new();
    let mut format = format;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if format == CorpusFormat::Auto {
            format = if line.contains('\t') {
                CorpusFormat::Tsv
            } else {
                CorpusFormat::Legacy
            };
        }
        let fields: Vec<&str> = match format {
            CorpusFormat::Tsv => line.split('\t').map(str::trim).collect(),
            _ => line.split_whitespace().collect(),
        };
        let lineno = i + 1;
        if fields.len() != 3 {
            return Err(DataError::Parse {
                line: lineno,
                message: format!(
                    "expected 3 fields (smiles, sequence, label), found {}",
                    fields.len()
                ),
            });
        }
        if records.is_empty() && fields[2].eq_ignore_ascii_case("label") {
            continue;
        }
        let label = match fields[2] {
            "0" | "0.0" => 0,
            "1" | "1.0" => 1,
            other => {
                return Err(DataError::Parse {
                    line: lineno,
                    message: format!("label must be 0 or 1, found `{other}`"),
                })
            }
        };
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(DataError::Parse {
                line: lineno,
                message: "empty smiles or sequence".into(),
            });
        }
        records.push(DtiRecord {
            smiles: fields[0].to_string(),
            sequence: fields[1].to_string(),
            label,
        });
    }
    if records.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    Ok(records)
}

/// Writes records as TSV with a header line.
pub fn write_corpus(records: &[DtiRecord]) -> String {
    let mut out = String::from("smiles\tsequence\tlabel\n");
    for r in records {
        out.push_str(&format!("{}\t{}\t{}\n", r.smiles, r.sequence, r.label));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub targets: usize,
    pub drugs: usize,
    pub interactions: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Records repeating an earlier (smiles, sequence) pair.
    pub duplicates: usize,
}

pub fn corpus_stats(records: &[DtiRecord]) -> CorpusStats {
    let targets: HashSet<&str> = records.iter().map(|r| r.sequence.as_str()).collect();
    let drugs: HashSet<&str> = records.iter().map(|r| r.smiles.as_str()).collect();
    let positives = records.iter().filter(|r| r.label == 1).count();
    CorpusStats {
        targets: targets.len(),
        drugs: drugs.len(),
        interactions: records.len(),
        positives,
        negatives: records.len() - positives,
        duplicates: duplicate_pairs(records).len(),
    }
}

/// Indices of records whose (smiles, sequence) pair already occurred.
pub fn duplicate_pairs(records: &[DtiRecord]) -> Vec<usize> {
    let mut seen = HashSet::new();
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| !seen.insert((r.smiles.as_str(), r.sequence.as_str())))
        .map(|(i, _)| i)
        .collect()
}

/// Binarizes an affinity score (e.g. pKi/pIC50): 1 iff `score >= 6.0`.
pub fn affinity_to_label(score: f64) -> u8 {
    affinity_to_label_with(score, AFFINITY_THRESHOLD)
}

pub fn affinity_to_label_with(score: f64, threshold: f64) -> u8 {
    u8::from(score >= threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Shuffle, then 10% test, 10% validation (both rounded down), rest train.
    Ratio811,
    /// K test folds; each fold's validation set is 20% of its remaining records.
    KFold { k: usize },
    /// Train, validation and test come from separate files.
    FixedFiles,
    /// Given train and test files, move a random 20% of train to validation.
    TrainCarve20,
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSpec::Ratio811 => f.write_str("ratio"),
            SplitSpec::KFold { k } => write!(f, "kfold:{k}"),
            SplitSpec::FixedFiles => f.write_str("fixed"),
            SplitSpec::TrainCarve20 => f.write_str("carve20"),
        }
    }
}

impl FromStr for SplitSpec {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "ratio" => Ok(SplitSpec::Ratio811),
            "carve20" => Ok(SplitSpec::TrainCarve20),
            "fixed" => Ok(SplitSpec::FixedFiles),
            _ => s
                .strip_prefix("kfold:")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k >= 2)
                .map(|k| SplitSpec::KFold { k })
                .ok_or_else(|| DataError::InvalidSplit(s.to_string())),
        }
    }
}

/// Index sets into a record list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A reproducible record of how a corpus was split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: String,
    pub seed: u64,
    pub records: usize,
    pub folds: Vec<Split>,
}

impl SplitManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// 8:1:1 random split of `n` records.
pub fn split_ratio(n: usize, seed: u64) -> Result<Split, DataError> {
    if n < 10 {
        return Err(DataError::TooFewRecords {
            mode: "ratio",
            needed: 10,
            got: n,
        });
    }
    let idx = shuffled(n, seed);
    let tenth = n / 10;
    Ok(Split {
        test: idx[..tenth].to_vec(),
        val: idx[tenth..2 * tenth].to_vec(),
        train: idx[2 * tenth..].to_vec(),
    })
}

/// `k` folds; every record is in exactly one test fold.
pub fn split_kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Split>, DataError> {
    if k < 2 {
        return Err(DataError::InvalidSplit(format!("kfold:{k}")));
    }
    // each fold needs a test record and at least two left for train + val
    let needed = k.max(3);
    if n < needed {
        return Err(DataError::TooFewRecords {
            mode: "kfold",
            needed,
            got: n,
        });
    }
    let idx = shuffled(n, seed);
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let (lo, hi) = (f * n / k, (f + 1) * n / k);
        let rest: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
        let (train, val) = carve(&rest, seed.wrapping_add(f as u64 + 1));
        folds.push(Split {
            train,
            val,
            test: idx[lo..hi].to_vec(),
        });
    }
    Ok(folds)
}

/// Moves a random 20% (rounded down, at least one) of `train` to validation.
fn carve(train: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx = train.to_vec();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (idx.len() / 5).max(1);
    let val = idx[..n_val].to_vec();
    (idx[n_val..].to_vec(), val)
}

/// Splits a training file of `n_train` records into train and validation;
/// the separately supplied test set is left untouched.
pub fn split_carve20(n_train: usize, seed: u64) -> Result<Split, DataError> {
    if n_train < 2 {
        return Err(DataError::TooFewRecords {
            mode: "carve20",
            needed: 2,
            got: n_train,
        });
    }
    let all: Vec<usize> = (0..n_train).collect();
    let (train, val) = carve(&all, seed);
    Ok(Split {
        train,
        val,
        test: Vec::new(),
    })
}

/// Selects records by index.
pub fn select(records: &[DtiRecord], idx: &[usize]) -> Vec<DtiRecord> {
    idx.iter().map(|&i| records[i].clone()).collect()
}
