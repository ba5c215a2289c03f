use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary quality label of a review comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Valid,
    Noisy,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Valid, Label::Noisy];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Valid => "valid",
            Label::Noisy => "noisy",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Valid => Label::Noisy,
            Label::Noisy => Label::Valid,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}` (expected `valid` or `noisy`)")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "valid" => Ok(Label::Valid),
            "noisy" => Ok(Label::Noisy),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}
