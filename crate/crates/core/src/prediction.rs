//! Classifier predictions and their line-delimited file format.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::label::Label;

/// A model-assigned label for one instance.
///
/// `label` is `None` when the response could not be parsed after all
/// attempts; `error` then says why. Timing and cache provenance are kept in
/// memory only so that prediction files are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub raw_response: String,
    pub model: String,
    pub prompt_variant: String,
    pub prompt_fingerprint: String,
    #[serde(skip)]
    pub latency_ms: u64,
    #[serde(skip)]
    pub from_cache: bool,
}

impl Prediction {
    pub fn labelled(
        id: impl Into<String>,
        label: Label,
        raw_response: impl Into<String>,
        model: impl Into<String>,
        prompt_variant: impl Into<String>,
    ) -> Self {
        Prediction {
            id: id.into(),
            label: Some(label),
            error: None,
            raw_response: raw_response.into(),
            model: model.into(),
            prompt_variant: prompt_variant.into(),
            prompt_fingerprint: String::new(),
            latency_ms: 0,
            from_cache: false,
        }
    }

    pub fn is_error(&self) -> bool {
        self.label.is_none()
    }

    /// The label used downstream, or `None` if the prediction is excluded.
    pub fn resolved(&self, handling: ErrorHandling) -> Option<Label> {
        match (self.label, handling) {
            (Some(label), _) => Some(label),
            (None, ErrorHandling::AsNoisy) => Some(Label::Noisy),
            (None, ErrorHandling::AsValid) => Some(Label::Valid),
            (None, ErrorHandling::Exclude) => None,
        }
    }
}

/// Treatment of error-marked predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorHandling {
    #[default]
    AsNoisy,
    AsValid,
    Exclude,
}

impl std::str::FromStr for ErrorHandling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-noisy" | "noisy" => Ok(ErrorHandling::AsNoisy),
            "as-valid" | "valid" => Ok(ErrorHandling::AsValid),
            "exclude" => Ok(ErrorHandling::Exclude),
            other => Err(format!("unknown error handling `{other}`")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PredictionFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, PredictionFileError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pred: Prediction = serde_json::from_str(&line).map_err(|e| PredictionFileError::Malformed {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(pred);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(predictions: &[Prediction], mut sink: W) -> io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut sink, p)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(label: Option<Label>) -> Prediction {
        Prediction {
            id: "x".into(),
            label,
            error: label.is_none().then(|| "unparsable".into()),
            raw_response: "r".into(),
            model: "m".into(),
            prompt_variant: "definition/comment".into(),
            prompt_fingerprint: "f".into(),
            latency_ms: 12,
            from_cache: true,
        }
    }

    #[test]
    fn volatile_fields_are_not_serialised() {
        let text = serde_json::to_string(&pred(Some(Label::Valid))).unwrap();
        assert!(!text.contains("latency") && !text.contains("from_cache"));
        assert!(!text.contains("error"));
    }

    #[test]
    fn error_handling() {
        let p = pred(None);
        assert_eq!(p.resolved(ErrorHandling::AsNoisy), Some(Label::Noisy));
        assert_eq!(p.resolved(ErrorHandling::AsValid), Some(Label::Valid));
        assert_eq!(p.resolved(ErrorHandling::Exclude), None);
        assert_eq!(pred(Some(Label::Valid)).resolved(ErrorHandling::AsNoisy), Some(Label::Valid));
    }

    #[test]
    fn file_round_trip() {
        let preds = vec![pred(Some(Label::Noisy)), pred(None)];
        let mut buf = Vec::new();
        write_predictions(&preds, &mut buf).unwrap();
        let back = read_predictions(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].label, None);
        assert_eq!(back[1].error.as_deref(), Some("unparsable"));
        assert!(matches!(
            read_predictions("{".as_bytes()),
            Err(PredictionFileError::Malformed { line: 1, .. })
        ));
    }
}
