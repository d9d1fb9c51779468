//! Language-tagged sentence-pair datasets: CSV loading, per-language
//! balancing and sentence pooling for whitening fits.
//!
//! The on-disk format is a headed CSV:
//!
//! ```text
//! pair_id,lang,sentence_1,sentence_2,label
//! eng-1,eng,A cat sat.,A cat was sitting.,0.85
//! ```
//!
//! `label` may be empty for unlabeled data.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TARGET_COUNT: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

/// One sentence pair with an optional relatedness score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub lang: String,
    pub sentence_1: String,
    pub sentence_2: String,
    pub label: Option<f64>,
}

impl PairRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.pair_id.trim().is_empty() {
            return Err("empty pair_id".into());
        }
        if self.lang.trim().is_empty() {
            return Err(format!("pair {}: empty lang", self.pair_id));
        }
        if self.sentence_1.trim().is_empty() || self.sentence_2.trim().is_empty() {
            return Err(format!("pair {}: empty sentence", self.pair_id));
        }
        if let Some(label) = self.label {
            if !(0.0..=1.0).contains(&label) {
                return Err(format!(
                    "pair {}: label {label} outside [0, 1]",
                    self.pair_id
                ));
            }
        }
        Ok(())
    }
}

/// Ordered pair records plus the set of languages they cover.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDataset {
    records: Vec<PairRecord>,
    langs: BTreeSet<String>,
}

impl PairDataset {
    /// Builds a dataset, checking record invariants and pair_id uniqueness.
    pub fn new(records: Vec<PairRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate().map_err(Error::Validation)?;
            if !seen.insert(r.pair_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate pair_id {}",
                    r.pair_id
                )));
            }
        }
        Ok(Self::from_records_unchecked(records))
    }

    /// Builds a dataset without the pair_id uniqueness check. Balanced
    /// training sets legitimately repeat records.
    pub(crate) fn from_records_unchecked(records: Vec<PairRecord>) -> Self {
        let langs = records.iter().map(|r| r.lang.clone()).collect();
        Self { records, langs }
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PairRecord> {
        self.records
    }

    pub fn langs(&self) -> &BTreeSet<String> {
        &self.langs
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }

    /// Gold labels, if every record carries one.
    pub fn labels(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// The single language of this dataset, or an error if there are zero
    /// or several.
    pub fn single_lang(&self) -> Result<&str> {
        let mut it = self.langs.iter();
        match (it.next(), it.next()) {
            (Some(l), None) => Ok(l),
            (None, _) => Err(Error::Empty("dataset has no records")),
            (Some(_), Some(_)) => Err(Error::Validation(format!(
                "expected a single language, found {:?}",
                self.langs
            ))),
        }
    }

    /// Splits into one dataset per language, ordered by language code.
    pub fn split_by_lang(&self) -> Vec<PairDataset> {
        let mut groups: BTreeMap<&str, Vec<PairRecord>> = BTreeMap::new();
        for r in &self.records {
            groups.entry(r.lang.as_str()).or_default().push(r.clone());
        }
        groups
            .into_values()
            .map(PairDataset::from_records_unchecked)
            .collect()
    }

    /// Concatenates datasets in order. pair_id uniqueness is re-checked.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a PairDataset>) -> Result<Self> {
        let records = parts
            .into_iter()
            .flat_map(|d| d.records.iter().cloned())
            .collect();
        Self::new(records)
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    pair_id: String,
    lang: String,
    sentence_1: String,
    sentence_2: String,
    label: Option<String>,
}

/// Reads a dataset CSV. Sentences are whitespace-trimmed; row order is kept.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<PairDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file)
}

/// Reads a dataset CSV from any reader.
pub fn read_dataset<R: std::io::Read>(reader: R) -> Result<PairDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader);

    let headers = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["pair_id", "lang", "sentence_1", "sentence_2", "label"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut raw = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e)),
        }
        let line = raw.position().map_or(0, |p| p.line());
        let row: CsvRow = raw.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let label = match row.label.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => {
                let v: f64 = s.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("label {s:?} is not a decimal number"),
                })?;
                Some(v)
            }
        };
        let record = PairRecord {
            pair_id: row.pair_id.trim().to_string(),
            lang: row.lang.trim().to_string(),
            sentence_1: row.sentence_1.trim().to_string(),
            sentence_2: row.sentence_2.trim().to_string(),
            label,
        };
        record
            .validate()
            .map_err(|m| Error::Validation(format!("line {line}: {m}")))?;
        if !seen.insert(record.pair_id.clone()) {
            return Err(Error::Validation(format!(
                "line {line}: duplicate pair_id {}",
                record.pair_id
            )));
        }
        records.push(record);
    }
    Ok(PairDataset::from_records_unchecked(records))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes a dataset in the CSV schema accepted by [`read_dataset`].
pub fn write_dataset<W: std::io::Write>(ds: &PairDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    wtr.write_record(["pair_id", "lang", "sentence_1", "sentence_2", "label"])
        .map_err(io)?;
    for r in &ds.records {
        let label = r.label.map(|l| l.to_string()).unwrap_or_default();
        wtr.write_record([
            r.pair_id.as_str(),
            r.lang.as_str(),
            r.sentence_1.as_str(),
            r.sentence_2.as_str(),
            label.as_str(),
        ])
        .map_err(io)?;
    }
    wtr.flush()
        .map_err(|e| Error::Validation(format!("csv flush: {e}")))?;
    Ok(())
}

/// Per-language sampling target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub target_count: usize,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            target_count: DEFAULT_TARGET_COUNT,
            seed: DEFAULT_SEED,
        }
    }
}

/// Resizes one language's records to exactly `cfg.target_count`.
///
/// Larger inputs are subsampled without replacement (input order kept).
/// Smaller inputs keep every record once, followed by uniform draws with
/// replacement. Equal-sized inputs are returned unchanged.
pub fn balance_language(records: &[PairRecord], cfg: &BalanceConfig) -> Result<Vec<PairRecord>> {
    if cfg.target_count == 0 {
        return Err(Error::Validation("target_count must be >= 1".into()));
    }
    let first = records
        .first()
        .ok_or(Error::Empty("cannot balance an empty record list"))?;
    if let Some(other) = records.iter().find(|r| r.lang != first.lang) {
        return Err(Error::Validation(format!(
            "balance_language expects one language, found {} and {}",
            first.lang, other.lang
        )));
    }

    let n = records.len();
    let target = cfg.target_count;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = match n.cmp(&target) {
        std::cmp::Ordering::Equal => records.to_vec(),
        std::cmp::Ordering::Greater => {
            let mut picked = index::sample(&mut rng, n, target).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| records[i].clone()).collect()
        }
        std::cmp::Ordering::Less => {
            let mut out = records.to_vec();
            out.extend((n..target).map(|_| records[rng.gen_range(0..n)].clone()));
            out
        }
    };
    Ok(out)
}

/// Every sentence of the dataset once, in first-occurrence order.
pub fn unique_sentences(ds: &PairDataset) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in &ds.records {
        for s in [&r.sentence_1, &r.sentence_2] {
            if seen.insert(s.as_str()) {
                out.push(s.clone());
            }
        }
    }
    out
}
