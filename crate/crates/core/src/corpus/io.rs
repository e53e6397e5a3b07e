//! Dataset ingestion and export.
//!
//! Two formats:
//! * CSV with header `id,text,cat<K>,...` (RFC-4180 quoting). CSV carries no
//!   provenance, so it round-trips human corpora only.
//! * JSONL with one object per line: `id`, `text`, `labels` (category id ->
//!   0/1), optional `origin` and `parent_ids`. Full fidelity for augmented
//!   corpora.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{CategoryId, CategorySchema, Corpus, CorpusError, LabeledResponse, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown dataset format {other:?} (expected csv or jsonl)")),
        }
    }
}

/// Load a corpus. The header (CSV) or the first line's label keys (JSONL)
/// declare the category columns; every row becomes one response.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    match format {
        DatasetFormat::Csv => {
            let content = fs::read_to_string(path).map_err(io_err)?;
            load_csv(&content)
        }
        DatasetFormat::Jsonl => {
            let content = fs::read_to_string(path).map_err(io_err)?;
            load_jsonl(&content)
        }
    }
}

/// Write a corpus in the given format. CSV refuses synthetic rows.
pub fn write_dataset(corpus: &Corpus, path: &Path, format: DatasetFormat) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let bytes = match format {
        DatasetFormat::Csv => csv_bytes(corpus)?,
        DatasetFormat::Jsonl => jsonl_bytes(corpus),
    };
    fs::write(path, bytes).map_err(io_err)
}

/// Serialize a corpus to JSONL bytes (deterministic field and key order).
pub(crate) fn jsonl_bytes(corpus: &Corpus) -> Vec<u8> {
    let mut out = Vec::new();
    for r in corpus.responses() {
        let line = serde_json::to_string(r).expect("response serializes");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out
}

fn csv_bytes(corpus: &Corpus) -> Result<Vec<u8>, CorpusError> {
    for r in corpus.responses() {
        if r.origin != Origin::Human {
            return Err(CorpusError::CsvSyntheticRow {
                id: r.id.clone(),
                origin: r.origin,
            });
        }
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "text".to_string()];
    header.extend(corpus.schema().ids().map(|c| format!("cat{c}")));
    writer.write_record(&header).expect("csv header");
    for r in corpus.responses() {
        let mut record = vec![r.id.clone(), r.text.clone()];
        for c in corpus.schema().ids() {
            record.push(r.labels[&c].to_string());
        }
        writer.write_record(&record).expect("csv record");
    }
    Ok(writer.into_inner().expect("csv buffer"))
}

fn load_csv(content: &str) -> Result<Corpus, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedRow {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut cols = headers.iter();
    if cols.next() != Some("id") || cols.next() != Some("text") {
        return Err(CorpusError::MalformedRow {
            row: 1,
            message: "header must start with id,text".into(),
        });
    }
    let mut category_ids = Vec::new();
    for col in cols {
        let id = col
            .strip_prefix("cat")
            .and_then(|s| s.parse::<CategoryId>().ok())
            .ok_or_else(|| CorpusError::MalformedRow {
                row: 1,
                message: format!("column {col:?} is not a cat<K> category column"),
            })?;
        category_ids.push(id);
    }
    let schema = CategorySchema::with_default_groups(category_ids.clone())?;

    let mut responses = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header is line 1
        let record = record.map_err(|e| CorpusError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() != 2 + category_ids.len() {
            return Err(CorpusError::MalformedRow {
                row,
                message: format!(
                    "expected {} fields, found {}",
                    2 + category_ids.len(),
                    record.len()
                ),
            });
        }
        let id = record[0].to_string();
        let text = record[1].to_string();
        let mut labels = BTreeMap::new();
        for (k, &cat) in category_ids.iter().enumerate() {
            let raw = record[2 + k].trim();
            let value = match raw {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(CorpusError::UnknownLabelValue {
                        row,
                        category: format!("cat{cat}"),
                        value: other.to_string(),
                    })
                }
            };
            labels.insert(cat, value);
        }
        responses.push(LabeledResponse::human(id, text, labels));
    }
    Corpus::new(schema, responses)
}

#[derive(Deserialize)]
struct JsonlRow {
    id: String,
    text: String,
    labels: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    origin: Origin,
    #[serde(default)]
    parent_ids: Vec<String>,
}

fn load_jsonl(content: &str) -> Result<Corpus, CorpusError> {
    let mut responses = Vec::new();
    let mut schema_ids: Option<Vec<CategoryId>> = None;
    for (i, line) in content.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonlRow = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let mut labels = BTreeMap::new();
        for (key, value) in &parsed.labels {
            let cat: CategoryId = key.parse().map_err(|_| CorpusError::MalformedRow {
                row,
                message: format!("label key {key:?} is not a category id"),
            })?;
            let label = match value {
                serde_json::Value::Number(n) if n.as_u64() == Some(0) => 0u8,
                serde_json::Value::Number(n) if n.as_u64() == Some(1) => 1u8,
                other => {
                    return Err(CorpusError::UnknownLabelValue {
                        row,
                        category: key.clone(),
                        value: other.to_string(),
                    })
                }
            };
            labels.insert(cat, label);
        }
        let ids: Vec<CategoryId> = labels.keys().copied().collect();
        match &schema_ids {
            None => schema_ids = Some(ids),
            Some(first) => {
                if first != &ids {
                    return Err(CorpusError::MalformedRow {
                        row,
                        message: "label keys differ from the first row's categories".into(),
                    });
                }
            }
        }
        responses.push(LabeledResponse {
            id: parsed.id,
            text: parsed.text,
            labels,
            origin: parsed.origin,
            parent_ids: parsed.parent_ids,
        });
    }
    let schema_ids = schema_ids.ok_or(CorpusError::Empty)?;
    let schema = CategorySchema::with_default_groups(schema_ids)?;
    Corpus::new(schema, responses)
}
