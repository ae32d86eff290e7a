//! Instances and the JSON Lines dataset format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::chunker::{validate_spans, PhraseSet, PhraseSpan};
use crate::error::{Error, Result};
use crate::prob::Label;

/// One line of a dataset file. Field names are part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub caption: String,
    pub phrases: Vec<PhraseSpan>,
    pub image_emb: Vec<f64>,
    pub caption_emb: Vec<f64>,
    pub phrase_embs: Vec<Vec<f64>>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_phrase_labels: Option<Vec<Label>>,
}

/// A validated image/caption pair at the embedding level.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub caption: String,
    pub phrase_set: PhraseSet,
    pub image_emb: Vec<f64>,
    pub caption_emb: Vec<f64>,
    pub phrase_embs: Vec<Vec<f64>>,
    pub label: Label,
    /// Evaluation only.
    pub gold_phrase_labels: Option<Vec<Label>>,
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.image_emb.len()
    }

    pub fn n_phrases(&self) -> usize {
        self.phrase_embs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.id.as_str();
        if self.caption.trim().is_empty() {
            return Err(Error::schema(id, "caption", "empty caption"));
        }
        if self.phrase_set.source_caption != self.caption {
            return Err(Error::schema(id, "phrases", "phrase set belongs to another caption"));
        }
        if self.phrase_set.is_empty() {
            return Err(Error::schema(id, "phrases", "at least one phrase is required"));
        }
        validate_spans(&self.caption, &self.phrase_set.phrases)
            .map_err(|e| Error::schema(id, "phrases", e.to_string()))?;
        if self.phrase_embs.len() != self.phrase_set.len() {
            return Err(Error::schema(
                id,
                "phrase_embs",
                format!(
                    "{} embeddings for {} phrases",
                    self.phrase_embs.len(),
                    self.phrase_set.len()
                ),
            ));
        }
        let d = self.image_emb.len();
        if d == 0 {
            return Err(Error::schema(id, "image_emb", "empty vector"));
        }
        let check = |field: &str, v: &[f64]| -> Result<()> {
            if v.len() != d {
                return Err(Error::schema(
                    id,
                    field,
                    format!("dimension {} differs from image_emb dimension {d}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::schema(id, field, "non-finite entry"));
            }
            Ok(())
        };
        check("image_emb", &self.image_emb)?;
        check("caption_emb", &self.caption_emb)?;
        for v in &self.phrase_embs {
            check("phrase_embs", v)?;
        }
        if let Some(gold) = &self.gold_phrase_labels {
            if gold.len() != self.phrase_embs.len() {
                return Err(Error::schema(
                    id,
                    "gold_phrase_labels",
                    format!("{} labels for {} phrases", gold.len(), self.phrase_embs.len()),
                ));
            }
            let any_falsified = gold.iter().any(|l| l.is_falsified());
            if any_falsified != self.label.is_falsified() {
                return Err(Error::schema(
                    id,
                    "gold_phrase_labels",
                    format!("inconsistent with caption label {}", self.label),
                ));
            }
        }
        Ok(())
    }

    pub fn from_record(record: DatasetRecord) -> Result<Self> {
        let phrase_set = PhraseSet {
            phrases: record.phrases,
            source_caption: record.caption.clone(),
        };
        let inst = Instance {
            id: record.id,
            caption: record.caption,
            phrase_set,
            image_emb: record.image_emb,
            caption_emb: record.caption_emb,
            phrase_embs: record.phrase_embs,
            label: record.label,
            gold_phrase_labels: record.gold_phrase_labels,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_record(&self) -> DatasetRecord {
        DatasetRecord {
            id: self.id.clone(),
            caption: self.caption.clone(),
            phrases: self.phrase_set.phrases.clone(),
            image_emb: self.image_emb.clone(),
            caption_emb: self.caption_emb.clone(),
            phrase_embs: self.phrase_embs.clone(),
            label: self.label,
            gold_phrase_labels: self.gold_phrase_labels.clone(),
        }
    }
}

const REQUIRED_FIELDS: [&str; 7] = [
    "id",
    "caption",
    "phrases",
    "image_emb",
    "caption_emb",
    "phrase_embs",
    "label",
];

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, id: &str, name: &str) -> Result<T> {
    let value = obj
        .get(name)
        .ok_or_else(|| Error::schema(id, name, "missing field"))?;
    T::deserialize(value).map_err(|e| Error::schema(id, name, e.to_string()))
}

/// Parses and validates a single JSONL line. `line_no` is 1-based and only
/// used to name records that lack a usable id.
pub fn parse_record(line: &str, line_no: usize) -> Result<DatasetRecord> {
    let fallback_id = format!("<line {line_no}>");
    let value: Value =
        serde_json::from_str(line).map_err(|e| Error::schema(&fallback_id, "<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema(&fallback_id, "<record>", "expected a JSON object"))?;
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or(fallback_id);
    for name in REQUIRED_FIELDS {
        if !obj.contains_key(name) {
            return Err(Error::schema(&id, name, "missing field"));
        }
    }
    let gold_phrase_labels = match obj.get("gold_phrase_labels") {
        None | Some(Value::Null) => None,
        Some(_) => Some(field(obj, &id, "gold_phrase_labels")?),
    };
    Ok(DatasetRecord {
        id: field(obj, &id, "id")?,
        caption: field(obj, &id, "caption")?,
        phrases: field(obj, &id, "phrases")?,
        image_emb: field(obj, &id, "image_emb")?,
        caption_emb: field(obj, &id, "caption_emb")?,
        phrase_embs: field(obj, &id, "phrase_embs")?,
        label: field(obj, &id, "label")?,
        gold_phrase_labels,
    })
}

/// Serializes one instance per line, LF terminated.
pub fn write_dataset_to<W: Write>(instances: &[Instance], mut out: W) -> Result<()> {
    for inst in instances {
        let line = serde_json::to_string(&inst.to_record())
            .map_err(|e| Error::schema(&inst.id, "<record>", e.to_string()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset(instances: &[Instance], path: impl AsRef<Path>) -> Result<()> {
    for inst in instances {
        inst.validate()?;
    }
    write_dataset_to(instances, BufWriter::new(File::create(path)?))
}

pub fn read_dataset_from<R: BufRead>(reader: R) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Instance::from_record(parse_record(&line, n + 1)?)?);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    read_dataset_from(BufReader::new(File::open(path)?))
}
