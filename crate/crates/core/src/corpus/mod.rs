//! Review datasets in line-delimited JSON form.
//!
//! Each line holds one record. The record keys used for the instance fields
//! are configurable through [`FieldMapping`]; any other keys are carried in
//! [`ReviewInstance::extra`] and written back unchanged.

mod diff;
mod stats;

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::label::Label;

pub use diff::{parse_unified_diff, DiffLine, DiffPatch, Hunk, LineKind};
pub use stats::{dataset_stats, DatasetStats};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("diff syntax error at line {line}: {reason}")]
    DiffSyntax { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(Split::Train),
            "validation" | "valid" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Record keys for each instance field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    pub id: String,
    pub patch: String,
    pub comment: String,
    pub lang: String,
    pub split: String,
    pub label: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            id: "id".into(),
            patch: "patch".into(),
            comment: "msg".into(),
            lang: "lang".into(),
            split: "split".into(),
            label: "label".into(),
        }
    }
}

impl FieldMapping {
    fn keys(&self) -> [&str; 6] {
        [
            &self.id,
            &self.patch,
            &self.comment,
            &self.lang,
            &self.split,
            &self.label,
        ]
    }
}

/// One (code diff, review comment) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewInstance {
    pub id: String,
    /// Raw unified-diff text of the change under review.
    pub patch: String,
    /// The reviewer's natural-language comment.
    pub comment: String,
    pub lang: String,
    pub split: Split,
    pub gold_label: Option<Label>,
    /// Fields not covered by the mapping, preserved verbatim.
    pub extra: Map<String, Value>,
}

impl ReviewInstance {
    pub fn new(id: impl Into<String>, patch: impl Into<String>, comment: impl Into<String>) -> Self {
        ReviewInstance {
            id: id.into(),
            patch: patch.into(),
            comment: comment.into(),
            lang: "unknown".into(),
            split: Split::Train,
            gold_label: None,
            extra: Map::new(),
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = lang.into();
        self
    }

    pub fn with_gold(mut self, label: Label) -> Self {
        self.gold_label = Some(label);
        self
    }

    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.comment.trim().is_empty() {
            return Err("empty comment".into());
        }
        if self.patch.trim().is_empty() {
            return Err("empty patch".into());
        }
        Ok(())
    }
}

/// An ordered collection of validated instances with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    instances: Vec<ReviewInstance>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(instances: Vec<ReviewInstance>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(instances.len());
        for (pos, inst) in instances.iter().enumerate() {
            inst.check().map_err(|reason| CorpusError::MalformedRecord {
                line: pos + 1,
                reason,
            })?;
            if index.insert(inst.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Dataset { instances, index })
    }

    /// Builds a dataset from instances already known to satisfy the
    /// invariants, such as an order-preserving subset of another dataset.
    pub(crate) fn from_subset(instances: Vec<ReviewInstance>) -> Self {
        let index = instances
            .iter()
            .enumerate()
            .map(|(pos, inst)| (inst.id.clone(), pos))
            .collect();
        Dataset { instances, index }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[ReviewInstance] {
        &self.instances
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ReviewInstance> {
        self.instances.iter()
    }

    pub fn get(&self, id: &str) -> Option<&ReviewInstance> {
        self.index.get(id).map(|&pos| &self.instances[pos])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Instances of one split, in dataset order.
    pub fn split(&self, split: Split) -> Dataset {
        Dataset::from_subset(
            self.instances
                .iter()
                .filter(|i| i.split == split)
                .cloned()
                .collect(),
        )
    }

    pub fn into_instances(self) -> Vec<ReviewInstance> {
        self.instances
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a ReviewInstance;
    type IntoIter = std::slice::Iter<'a, ReviewInstance>;

    fn into_iter(self) -> Self::IntoIter {
        self.instances.iter()
    }
}

/// A record that failed validation, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub line: usize,
    pub error: CorpusError,
    pub raw: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    pub rejects: Vec<Reject>,
    /// Accepted records whose language tag was missing.
    pub defaulted_lang: usize,
    /// Accepted records whose split was missing.
    pub defaulted_split: usize,
}

impl ParseOutcome {
    /// Number of non-blank input lines seen (accepted + rejected).
    pub fn input_lines(&self) -> usize {
        self.dataset.len() + self.rejects.len()
    }
}

/// Reads one record per line. Blank lines are skipped; every other line is
/// either accepted into the dataset or reported in `rejects`.
pub fn parse_dataset<R: BufRead>(reader: R, fields: &FieldMapping) -> io::Result<ParseOutcome> {
    let mut outcome = ParseOutcome::default();
    let mut instances = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, chunk) in reader.split(b'\n').enumerate() {
        let line_no = idx + 1;
        let bytes = chunk?;
        let raw = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => {
                outcome.rejects.push(Reject {
                    line: line_no,
                    error: CorpusError::MalformedRecord {
                        line: line_no,
                        reason: "invalid UTF-8".into(),
                    },
                    raw: String::from_utf8_lossy(e.as_bytes()).into_owned(),
                });
                continue;
            }
        };
        let text = raw.trim_end_matches('\r');
        if text.trim().is_empty() {
            continue;
        }
        match parse_record(text, line_no, fields) {
            Ok(parsed) => {
                if seen.contains_key(&parsed.instance.id) {
                    outcome.rejects.push(Reject {
                        line: line_no,
                        error: CorpusError::DuplicateId(parsed.instance.id.clone()),
                        raw: text.to_string(),
                    });
                    continue;
                }
                seen.insert(parsed.instance.id.clone(), instances.len());
                outcome.defaulted_lang += usize::from(parsed.defaulted_lang);
                outcome.defaulted_split += usize::from(parsed.defaulted_split);
                instances.push(parsed.instance);
            }
            Err(error) => outcome.rejects.push(Reject {
                line: line_no,
                error,
                raw: text.to_string(),
            }),
        }
    }

    if outcome.defaulted_lang > 0 {
        log::warn!(
            "{} record(s) had no `{}` field; tagged as `unknown`",
            outcome.defaulted_lang,
            fields.lang
        );
    }
    if outcome.defaulted_split > 0 {
        log::warn!(
            "{} record(s) had no `{}` field; assigned to `train`",
            outcome.defaulted_split,
            fields.split
        );
    }
    outcome.dataset = Dataset::from_subset(instances);
    Ok(outcome)
}

struct ParsedRecord {
    instance: ReviewInstance,
    defaulted_lang: bool,
    defaulted_split: bool,
}

fn parse_record(text: &str, line: usize, fields: &FieldMapping) -> Result<ParsedRecord, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord { line, reason };

    let value: Value = serde_json::from_str(text).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let Value::Object(mut obj) = value else {
        return Err(malformed("record is not a JSON object".into()));
    };

    let id = match obj.remove(&fields.id) {
        None | Some(Value::Null) => line.to_string(),
        Some(Value::String(s)) => s,
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(malformed(format!("`{}` must be a string or number", fields.id))),
    };
    let patch = take_string(&mut obj, &fields.patch)
        .map_err(malformed)?
        .ok_or_else(|| malformed(format!("missing `{}`", fields.patch)))?;
    let comment = take_string(&mut obj, &fields.comment)
        .map_err(malformed)?
        .ok_or_else(|| malformed(format!("missing `{}`", fields.comment)))?;
    let lang = take_string(&mut obj, &fields.lang).map_err(malformed)?;
    let split = take_string(&mut obj, &fields.split).map_err(malformed)?;
    let label = take_string(&mut obj, &fields.label).map_err(malformed)?;

    let defaulted_lang = lang.is_none();
    let defaulted_split = split.is_none();
    let split = match split {
        Some(s) => s.parse::<Split>().map_err(malformed)?,
        None => Split::Train,
    };
    let gold_label = match label {
        Some(s) => Some(s.parse::<Label>().map_err(|e| malformed(e.to_string()))?),
        None => None,
    };

    let instance = ReviewInstance {
        id,
        patch,
        comment,
        lang: lang.unwrap_or_else(|| "unknown".into()),
        split,
        gold_label,
        extra: obj,
    };
    instance.check().map_err(malformed)?;
    Ok(ParsedRecord {
        instance,
        defaulted_lang,
        defaulted_split,
    })
}

fn take_string(obj: &mut Map<String, Value>, key: &str) -> Result<Option<String>, String> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(format!("`{key}` must be a string")),
    }
}

/// Serialises one instance into a record object.
pub fn to_record(inst: &ReviewInstance, fields: &FieldMapping) -> Map<String, Value> {
    let mut obj = inst.extra.clone();
    for key in fields.keys() {
        obj.remove(key);
    }
    obj.insert(fields.id.clone(), Value::String(inst.id.clone()));
    obj.insert(fields.patch.clone(), Value::String(inst.patch.clone()));
    obj.insert(fields.comment.clone(), Value::String(inst.comment.clone()));
    obj.insert(fields.lang.clone(), Value::String(inst.lang.clone()));
    obj.insert(fields.split.clone(), Value::String(inst.split.as_str().into()));
    if let Some(label) = inst.gold_label {
        obj.insert(fields.label.clone(), Value::String(label.as_str().into()));
    }
    obj
}

/// Writes one record per line and returns the number of records written.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut sink: W, fields: &FieldMapping) -> io::Result<usize> {
    for inst in dataset {
        serde_json::to_writer(&mut sink, &to_record(inst, fields))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(dataset.len())
}

/// Writes the rejects report: each rejected record with `line` and `reason`
/// added (or the raw text under `raw` when it was not a JSON object).
pub fn write_rejects<W: Write>(rejects: &[Reject], mut sink: W) -> io::Result<usize> {
    for reject in rejects {
        let mut obj = match serde_json::from_str::<Value>(&reject.raw) {
            Ok(Value::Object(obj)) => obj,
            _ => {
                let mut obj = Map::new();
                obj.insert("raw".into(), Value::String(reject.raw.clone()));
                obj
            }
        };
        obj.insert("line".into(), Value::from(reject.line));
        obj.insert("reason".into(), Value::String(reject.error.to_string()));
        serde_json::to_writer(&mut sink, &obj)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(rejects.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ParseOutcome {
        parse_dataset(text.as_bytes(), &FieldMapping::default()).unwrap()
    }

    const THREE: &str = concat!(
        r#"{"id":"a","patch":"@@ -1 +1 @@\n-x\n+y","msg":"rename x","lang":"py","split":"train"}"#,
        "\n",
        r#"{"id":"b","patch":"@@ -1 +1 @@\n-x\n+y","msg":"why?","lang":"go","split":"test","label":"noisy"}"#,
        "\n",
        r#"{"id":"c","patch":"@@ -1 +1 @@\n-x\n+y","msg":"add a test","lang":"java","split":"valid","repo":"r/x","oldf":"..."}"#,
        "\n",
    );

    #[test]
    fn three_well_formed_lines() {
        let out = parse(THREE);
        assert_eq!(out.dataset.len(), 3);
        assert!(out.rejects.is_empty());
        let c = out.dataset.get("c").unwrap();
        assert_eq!(c.split, Split::Validation);
        assert_eq!(c.extra.get("repo"), Some(&Value::String("r/x".into())));
        assert_eq!(out.dataset.get("b").unwrap().gold_label, Some(Label::Noisy));
    }

    #[test]
    fn empty_comment_is_rejected_with_line_number() {
        let text = concat!(
            r#"{"id":"a","patch":"@@ -1 +1 @@\n-x\n+y","msg":"ok"}"#,
            "\n",
            r#"{"id":"b","patch":"@@ -1 +1 @@\n-x\n+y","msg":"   "}"#,
            "\n"
        );
        let out = parse(text);
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.rejects.len(), 1);
        assert!(matches!(
            out.rejects[0].error,
            CorpusError::MalformedRecord { line: 2, .. }
        ));
    }

    #[test]
    fn duplicate_ids_are_rejected_not_dropped() {
        let text = concat!(
            r#"{"id":"a","patch":"p","msg":"one"}"#,
            "\n",
            r#"{"id":"a","patch":"p","msg":"two"}"#,
            "\n"
        );
        let out = parse(text);
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.rejects[0].error, CorpusError::DuplicateId("a".into()));
        assert_eq!(out.input_lines(), 2);
    }

    #[test]
    fn missing_lang_and_split_default() {
        let out = parse(r#"{"patch":"p","msg":"m"}"#);
        let inst = &out.dataset.instances()[0];
        assert_eq!(inst.id, "1");
        assert_eq!(inst.lang, "unknown");
        assert_eq!(inst.split, Split::Train);
        assert_eq!(out.defaulted_lang, 1);
        assert_eq!(out.defaulted_split, 1);
    }

    #[test]
    fn bad_json_and_bad_label_are_rejected() {
        let text = "not json\n{\"patch\":\"p\",\"msg\":\"m\",\"label\":\"maybe\"}\n[1,2]\n";
        let out = parse(text);
        assert!(out.dataset.is_empty());
        assert_eq!(out.rejects.len(), 3);
        let lines: Vec<_> = out.rejects.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![1, 2, 3]);
    }

    #[test]
    fn custom_field_mapping() {
        let fields = FieldMapping {
            comment: "comment".into(),
            patch: "diff".into(),
            ..FieldMapping::default()
        };
        let text = r#"{"id":7,"diff":"p","comment":"m"}"#;
        let out = parse_dataset(text.as_bytes(), &fields).unwrap();
        assert_eq!(out.dataset.instances()[0].id, "7");
        let mut buf = Vec::new();
        write_dataset(&out.dataset, &mut buf, &fields).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert!(line.contains(r#""diff":"p""#) && line.contains(r#""comment":"m""#));
    }

    #[test]
    fn empty_dataset_writes_nothing() {
        let mut buf = Vec::new();
        let n = write_dataset(&Dataset::default(), &mut buf, &FieldMapping::default()).unwrap();
        assert_eq!(n, 0);
        assert!(buf.is_empty());
    }

    #[test]
    fn three_instance_round_trip() {
        let out = parse(THREE);
        let mut buf = Vec::new();
        assert_eq!(write_dataset(&out.dataset, &mut buf, &FieldMapping::default()).unwrap(), 3);
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 3);
        let again = parse_dataset(buf.as_slice(), &FieldMapping::default()).unwrap();
        assert_eq!(again.dataset, out.dataset);
    }

    #[test]
    fn rejects_report_carries_reason() {
        let out = parse("{\"id\":\"x\",\"patch\":\"p\",\"msg\":\"\"}\nnope\n");
        let mut buf = Vec::new();
        write_rejects(&out.rejects, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(rows[0]["id"], "x");
        assert!(rows[0]["reason"].as_str().unwrap().contains("empty comment"));
        assert_eq!(rows[1]["raw"], "nope");
        assert_eq!(rows[1]["line"], 2);
    }

    #[test]
    fn dataset_new_validates() {
        let a = ReviewInstance::new("a", "p", "c");
        assert!(matches!(
            Dataset::new(vec![a.clone(), a.clone()]),
            Err(CorpusError::DuplicateId(_))
        ));
        assert!(Dataset::new(vec![ReviewInstance::new("b", "", "c")]).is_err());
    }
}
