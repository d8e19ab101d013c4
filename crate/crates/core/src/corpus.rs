//! Line-delimited instruction-tuning datasets.
//!
//! One JSON object per line with the fields `id`, `task`, `instruction`,
//! `answer`, `provenance`, `attempts` and `feature_values`. Only the first
//! four are required on input; a [`RecordSchema`] can rename them for
//! foreign files.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::features::FeatureValue;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("unknown task `{value}` at line {line}")]
    UnknownTask { value: String, line: usize },
    #[error("i/o failure on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid record schema: {0}")]
    InvalidSchema(String),
}

/// Task family of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "NLI")]
    Nli,
    #[serde(rename = "PI")]
    Pi,
    #[serde(rename = "SA")]
    Sa,
    #[serde(rename = "QA")]
    Qa,
    #[serde(rename = "OTHER")]
    Other,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Nli, Task::Pi, Task::Sa, Task::Qa, Task::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Nli => "NLI",
            Task::Pi => "PI",
            Task::Sa => "SA",
            Task::Qa => "QA",
            Task::Other => "OTHER",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == upper)
            .ok_or_else(|| s.to_string())
    }
}

/// Where a sample's current text came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Original,
    Rewritten,
    RewriteFailed,
}

/// One instruction-tuning record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub task: Task,
    pub instruction: String,
    pub answer: String,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default)]
    pub feature_values: BTreeMap<String, FeatureValue>,
}

impl Sample {
    pub fn new(id: impl Into<String>, task: Task, instruction: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            task,
            instruction: instruction.into(),
            answer: answer.into(),
            provenance: Provenance::Original,
            attempts: 0,
            feature_values: BTreeMap::new(),
        }
    }

    pub fn feature_value(&self, feature: &str) -> Option<&str> {
        self.feature_values.get(feature).map(|v| v.value.as_str())
    }
}

/// Field names used to read the four required fields of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordSchema {
    pub id: String,
    pub task: String,
    pub instruction: String,
    pub answer: String,
}

impl Default for RecordSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            task: "task".into(),
            instruction: "instruction".into(),
            answer: "answer".into(),
        }
    }
}

impl RecordSchema {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::IoFailure {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CorpusError::InvalidSchema(e.to_string()))
    }
}

/// An ordered, id-unique collection of samples.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    task_index: BTreeMap<Task, Vec<String>>,
    positions: HashMap<String, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self, CorpusError> {
        let mut positions = HashMap::with_capacity(samples.len());
        let mut task_index: BTreeMap<Task, Vec<String>> = BTreeMap::new();
        for (pos, sample) in samples.iter().enumerate() {
            if positions.insert(sample.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId(sample.id.clone()));
            }
            task_index.entry(sample.task).or_default().push(sample.id.clone());
        }
        Ok(Self {
            samples,
            task_index,
            positions,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.positions.get(id).map(|&i| &self.samples[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn task_index(&self) -> &BTreeMap<Task, Vec<String>> {
        &self.task_index
    }

    pub fn tasks(&self) -> impl Iterator<Item = Task> + '_ {
        self.task_index.keys().copied()
    }

    pub fn samples_for(&self, task: Task) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.task == task)
    }

    /// Returns a copy with the given samples substituted by id.
    ///
    /// Replacements whose id is not present are ignored; order is kept.
    pub fn with_replacements(&self, replacements: impl IntoIterator<Item = Sample>) -> Self {
        let mut samples = self.samples.clone();
        for sample in replacements {
            if let Some(&pos) = self.positions.get(&sample.id) {
                samples[pos] = sample;
            }
        }
        let mut out = self.clone();
        out.samples = samples;
        out.rebuild_index();
        out
    }

    fn rebuild_index(&mut self) {
        let mut task_index: BTreeMap<Task, Vec<String>> = BTreeMap::new();
        for s in &self.samples {
            task_index.entry(s.task).or_default().push(s.id.clone());
        }
        self.task_index = task_index;
    }
}

pub fn load_dataset(path: &Path, schema: &RecordSchema) -> Result<Dataset, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(BufReader::new(file), schema).map_err(|e| match e {
        CorpusError::IoFailure { source, .. } => CorpusError::IoFailure {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_dataset(reader: impl BufRead, schema: &RecordSchema) -> Result<Dataset, CorpusError> {
    let mut samples = Vec::new();
    let mut seen = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::IoFailure {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_record(&line, line_no, schema)?;
        if seen.insert(sample.id.clone(), line_no).is_some() {
            return Err(CorpusError::DuplicateId(sample.id));
        }
        samples.push(sample);
    }
    Dataset::new(samples)
}

fn parse_record(line: &str, line_no: usize, schema: &RecordSchema) -> Result<Sample, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord { line: line_no, reason };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(malformed("record is not an object".into()));
    };

    let id = match obj.remove(&schema.id) {
        Some(Value::String(s)) => s,
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(malformed(format!("field `{}` must be a string", schema.id))),
        None => return Err(malformed(format!("missing field `{}`", schema.id))),
    };
    let task_raw = take_string(&mut obj, &schema.task).map_err(malformed)?;
    let task = task_raw
        .parse::<Task>()
        .map_err(|value| CorpusError::UnknownTask { value, line: line_no })?;
    let instruction = take_string(&mut obj, &schema.instruction).map_err(malformed)?;
    let answer = take_string(&mut obj, &schema.answer).map_err(malformed)?;

    let provenance = match obj.remove("provenance") {
        None | Some(Value::Null) => Provenance::Original,
        Some(v) => serde_json::from_value(v).map_err(|e| malformed(format!("provenance: {e}")))?,
    };
    let attempts = match obj.remove("attempts") {
        None | Some(Value::Null) => 0,
        Some(v) => serde_json::from_value(v).map_err(|e| malformed(format!("attempts: {e}")))?,
    };
    let feature_values = match obj.remove("feature_values") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(v) => serde_json::from_value(v).map_err(|e| malformed(format!("feature_values: {e}")))?,
    };
    if provenance == Provenance::Rewritten && attempts == 0 {
        return Err(malformed("rewritten sample must record at least one attempt".into()));
    }

    Ok(Sample {
        id,
        task,
        instruction,
        answer,
        provenance,
        attempts,
        feature_values,
    })
}

fn take_string(obj: &mut Map<String, Value>, field: &str) -> Result<String, String> {
    match obj.remove(field) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("field `{field}` must be a string")),
        None => Err(format!("missing field `{field}`")),
    }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_records(ds, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_records(ds: &Dataset, out: &mut impl Write) -> io::Result<()> {
    for sample in ds.samples() {
        serde_json::to_writer(&mut *out, sample)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read(text: &str) -> Result<Dataset, CorpusError> {
        read_dataset(Cursor::new(text), &RecordSchema::default())
    }

    #[test]
    fn loads_three_records_in_order() {
        let ds = read(concat!(
            r#"{"id":"a","task":"SA","instruction":"good film","answer":"positive"}"#,
            "\n",
            r#"{"id":"b","task":"QA","instruction":"who?","answer":"James"}"#,
            "\n",
            r#"{"id":"c","task":"SA","instruction":"bad film","answer":"negative"}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(ds.len(), 3);
        let ids: Vec<_> = ds.samples().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(ds.task_index()[&Task::Sa], ["a", "c"]);
        assert_eq!(ds.task_index()[&Task::Qa], ["b"]);
        assert_eq!(ds.task_index().values().map(Vec::len).sum::<usize>(), 3);
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        let ds = read("").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.tasks().count(), 0);
    }

    #[test]
    fn missing_answer_reports_line() {
        let err = read(concat!(
            r#"{"id":"a","task":"SA","instruction":"x","answer":"positive"}"#,
            "\n",
            r#"{"id":"b","task":"SA","instruction":"y"}"#
        ))
        .unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_duplicates_and_unknown_tasks() {
        let dup = read(concat!(
            r#"{"id":"a","task":"SA","instruction":"x","answer":"p"}"#,
            "\n",
            r#"{"id":"a","task":"SA","instruction":"y","answer":"p"}"#
        ))
        .unwrap_err();
        assert!(matches!(dup, CorpusError::DuplicateId(ref id) if id == "a"));

        let unknown = read(r#"{"id":"a","task":"NER","instruction":"x","answer":"p"}"#).unwrap_err();
        assert!(matches!(unknown, CorpusError::UnknownTask { ref value, line: 1 } if value == "NER"));
    }

    #[test]
    fn schema_renames_fields() {
        let schema = RecordSchema {
            id: "uid".into(),
            task: "kind".into(),
            instruction: "inputs".into(),
            answer: "targets".into(),
        };
        let ds = read_dataset(
            Cursor::new(r#"{"uid":7,"kind":"sa","inputs":"fine","targets":"positive"}"#),
            &schema,
        )
        .unwrap();
        assert_eq!(ds.samples()[0].id, "7");
        assert_eq!(ds.samples()[0].task, Task::Sa);
    }

    #[test]
    fn rewritten_without_attempts_is_malformed() {
        let err =
            read(r#"{"id":"a","task":"SA","instruction":"x","answer":"p","provenance":"rewritten","attempts":0}"#)
                .unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn write_persists_provenance() {
        let mut s = Sample::new("r1", Task::Sa, "you cannot forget this", "positive");
        s.provenance = Provenance::Rewritten;
        s.attempts = 2;
        let ds = Dataset::new(vec![s]).unwrap();
        let mut buf = Vec::new();
        write_records(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#""provenance":"rewritten""#), "{text}");
        assert!(text.contains(r#""attempts":2"#));
        assert_eq!(read(&text).unwrap(), ds);
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let ds = Dataset::default();
        let err = write_dataset(&ds, Path::new("/nonexistent-dir/out.jsonl")).unwrap_err();
        assert!(matches!(err, CorpusError::IoFailure { .. }));
    }

    #[test]
    fn replacements_keep_order() {
        let ds = Dataset::new(vec![
            Sample::new("a", Task::Sa, "one", "positive"),
            Sample::new("b", Task::Sa, "two", "negative"),
        ])
        .unwrap();
        let out = ds.with_replacements([Sample::new("b", Task::Sa, "TWO", "negative")]);
        assert_eq!(out.samples()[1].instruction, "TWO");
        assert_eq!(out.samples()[0], ds.samples()[0]);
        assert_eq!(out.task_index(), ds.task_index());
    }
}
