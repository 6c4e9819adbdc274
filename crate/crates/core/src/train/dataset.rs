use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::ast::{ast_from_value, ast_to_value, Ast};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One side of a file change: source text for the built-in parser or an
/// already-built tree.
#[derive(Clone, Debug, PartialEq)]
pub enum FileVersion {
    Source(String),
    Tree(Ast),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FileChange {
    pub path: String,
    pub old: FileVersion,
    pub new: FileVersion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommitSample {
    pub id: String,
    pub project: String,
    /// `true` for a vulnerability-fixing commit.
    pub label: bool,
    pub files: Vec<FileChange>,
    /// Fixed side of a pre-made split, if the file carries one.
    pub split: Option<SplitTag>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<CommitSample>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    project: String,
    label: u8,
    files: Vec<RawFile>,
    #[serde(default)]
    split: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    path: String,
    old: Value,
    new: Value,
}

fn version_from_value(v: Value, field: &str) -> Result<FileVersion, String> {
    match v {
        Value::String(s) => Ok(FileVersion::Source(s)),
        Value::Object(mut m) if m.len() == 1 && m.contains_key("ast") => {
            let doc = m.remove("ast").expect("key checked");
            ast_from_value(&doc)
                .map(FileVersion::Tree)
                .map_err(|e| format!("{field}.ast: {e}"))
        }
        _ => Err(format!(
            "{field} must be a source string or {{\"ast\": ...}}"
        )),
    }
}

fn version_to_value(v: &FileVersion) -> Value {
    match v {
        FileVersion::Source(s) => Value::String(s.clone()),
        FileVersion::Tree(ast) => json!({ "ast": ast_to_value(ast) }),
    }
}

impl CommitSample {
    fn from_raw(raw: RawSample) -> Result<CommitSample, String> {
        let label = match raw.label {
            0 => false,
            1 => true,
            other => return Err(format!("label must be 0 or 1, got {other}")),
        };
        if raw.files.is_empty() {
            return Err(format!("sample {:?} has no files", raw.id));
        }
        let split = match raw.split.as_deref() {
            None => None,
            Some("train") => Some(SplitTag::Train),
            Some("test") => Some(SplitTag::Test),
            Some(other) => {
                return Err(format!(
                    "split must be \"train\" or \"test\", got {other:?}"
                ))
            }
        };
        let files = raw
            .files
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                Ok(FileChange {
                    old: version_from_value(f.old, &format!("files[{i}].old"))?,
                    new: version_from_value(f.new, &format!("files[{i}].new"))?,
                    path: f.path,
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(CommitSample {
            id: raw.id,
            project: raw.project,
            label,
            files,
            split,
        })
    }

    pub fn to_json_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("id".into(), json!(self.id));
        m.insert("project".into(), json!(self.project));
        m.insert("label".into(), json!(u8::from(self.label)));
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|f| json!({ "path": f.path, "old": version_to_value(&f.old), "new": version_to_value(&f.new) }))
            .collect();
        m.insert("files".into(), Value::Array(files));
        if let Some(s) = self.split {
            m.insert("split".into(), json!(s.as_str()));
        }
        Value::Object(m)
    }
}

impl Dataset {
    pub fn new(samples: Vec<CommitSample>) -> Result<Dataset, DatasetError> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(DatasetError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of (fixing, non-fixing) samples.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label).count();
        (pos, self.samples.len() - pos)
    }

    /// Sorted distinct project names.
    pub fn projects(&self) -> Vec<String> {
        let mut p: Vec<String> = self.samples.iter().map(|s| s.project.clone()).collect();
        p.sort();
        p.dedup();
        p
    }

    pub fn has_split_tags(&self) -> bool {
        self.samples.iter().any(|s| s.split.is_some())
    }

    /// Samples tagged with `tag`, in file order.
    pub fn tagged(&self, tag: SplitTag) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .filter(|s| s.split == Some(tag))
                .cloned()
                .collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut w, &s.to_json_value())?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

/// Reads one sample per non-blank line. Line numbers in errors are 1-based.
pub fn load_dataset<R: BufRead>(r: R) -> Result<Dataset, DatasetError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| DatasetError::Parse {
            line: i + 1,
            message,
        };
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let sample = CommitSample::from_raw(raw).map_err(parse_err)?;
        if !seen.insert(sample.id.clone()) {
            return Err(DatasetError::DuplicateId(sample.id));
        }
        samples.push(sample);
    }
    Ok(Dataset { samples })
}

pub fn load_dataset_file(path: &std::path::Path) -> Result<Dataset, DatasetError> {
    let f = std::fs::File::open(path)?;
    load_dataset(std::io::BufReader::new(f))
}
