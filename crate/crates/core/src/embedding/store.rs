use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use super::{text_key, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::whitening::push_f64_array;

/// One line of the JSONL store.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct StoreRecord {
    pub key: String,
    pub lang: String,
    pub dim: usize,
    pub vector: Vec<f64>,
}

impl StoreRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        let hex_ok = self.key.len() == 64
            && self
                .key
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !hex_ok {
            return Err(format!("key {:?} is not 64 lowercase hex digits", self.key));
        }
        if self.dim == 0 || self.dim != self.vector.len() {
            return Err(format!(
                "key {}: dim {} but vector has {} entries",
                self.key,
                self.dim,
                self.vector.len()
            ));
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(format!("key {}: non-finite vector entry", self.key));
        }
        Ok(())
    }

    fn write_line(&self, out: &mut String) {
        out.push_str(&format!(
            "{{\"key\":\"{}\",\"lang\":{},\"dim\":{},\"vector\":",
            self.key,
            serde_json::to_string(&self.lang).expect("string serialises"),
            self.dim
        ));
        push_f64_array(out, &self.vector);
        out.push_str("}\n");
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Meta { meta: serde_json::Value },
    Record(StoreRecord),
}

/// Content-addressed vectors loaded into memory.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    meta: Option<serde_json::Value>,
    records: Vec<StoreRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Optional `{"meta": ...}` header read from the first line.
    pub fn meta(&self) -> Option<&serde_json::Value> {
        self.meta.as_ref()
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index
            .get(key)
            .map(|&i| self.records[i].vector.as_slice())
    }

    /// Adds the vector for `text`. Re-inserting a text with the same vector
    /// is a no-op; a different vector is rejected.
    pub fn insert(&mut self, text: &str, lang: &str, vector: Vec<f64>) -> Result<()> {
        self.insert_record(StoreRecord {
            key: text_key(text),
            lang: lang.to_string(),
            dim: vector.len(),
            vector,
        })
    }

    fn insert_record(&mut self, rec: StoreRecord) -> Result<()> {
        rec.validate().map_err(Error::Validation)?;
        if self.records.is_empty() && self.dim == 0 {
            self.dim = rec.dim;
        }
        if rec.dim != self.dim {
            return Err(Error::Validation(format!(
                "key {}: dim {} differs from store dim {}",
                rec.key, rec.dim, self.dim
            )));
        }
        if let Some(&i) = self.index.get(&rec.key) {
            if self.records[i].vector != rec.vector {
                return Err(Error::Validation(format!(
                    "key {} appears twice with different vectors",
                    rec.key
                )));
            }
            return Ok(());
        }
        self.index.insert(rec.key.clone(), self.records.len());
        self.records.push(rec);
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut store = Self::new(0);
        for (i, line) in reader.lines().enumerate() {
            let lineno = i as u64 + 1;
            let line = line.map_err(|e| Error::io("<store>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            match parsed {
                Line::Meta { meta } if lineno == 1 => {
                    if let Some(d) = meta.get("dim").and_then(|d| d.as_u64()) {
                        store.dim = d as usize;
                    }
                    store.meta = Some(meta);
                }
                Line::Meta { .. } => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "meta record allowed only on line 1".into(),
                    })
                }
                Line::Record(rec) => store.insert_record(rec).map_err(|e| match e {
                    Error::Validation(m) => Error::Validation(format!("line {lineno}: {m}")),
                    other => other,
                })?,
            }
        }
        Ok(store)
    }

    /// Writes the store as JSONL, optional meta line first.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        if let Some(meta) = &self.meta {
            buf.push_str(&serde_json::json!({ "meta": meta }).to_string());
            buf.push('\n');
        }
        for r in &self.records {
            r.write_line(&mut buf);
        }
        out.write_all(buf.as_bytes())
            .map_err(|e| Error::io("<store>", e))
    }

    pub fn set_meta(&mut self, meta: serde_json::Value) {
        self.meta = Some(meta);
    }
}

impl EmbeddingProvider for EmbeddingStore {
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed(&self, texts: &[&str]) -> Result<EmbeddingMatrix> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let missing: BTreeSet<&String> = keys.iter().filter(|k| self.get(k).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbedding {
                keys: missing.into_iter().cloned().collect(),
            });
        }
        let rows: Vec<&[f64]> = keys.iter().map(|k| self.get(k).expect("checked")).collect();
        EmbeddingMatrix::from_rows(&rows, self.dim)
    }
}
