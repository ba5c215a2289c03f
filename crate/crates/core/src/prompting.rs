//! Classification prompts and response parsing.
//!
//! A prompt is a system text (role, definitions, criteria and, for the
//! auxiliary variant, the rule list) plus a user text holding the comment and
//! optionally the diff. Templates are plain text with `{comment}`, `{diff}`,
//! `{definitions}` and `{rules}` placeholders; the bundled defaults can be
//! replaced by files.

use std::fmt;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ReviewInstance;
use crate::hashing::stable_hash;
use crate::label::Label;

pub const DEFAULT_DIFF_TOKEN_BUDGET: usize = 3000;

/// Appended after the hunks kept by [`truncate_diff`]. One approximate token.
pub const ELISION_MARKER: &str = "…";

const DEFAULT_SYSTEM: &str = include_str!("../assets/system.txt");
const DEFAULT_DEFINITIONS: &str = include_str!("../assets/definitions.txt");
const DEFAULT_RULES: &str = include_str!("../assets/rules.txt");
const DEFAULT_USER_COMMENT: &str = include_str!("../assets/user_comment.txt");
const DEFAULT_USER_DIFF: &str = include_str!("../assets/user_diff.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unparsable response: {0:?}")]
    UnparsableResponse(String),
    #[error("ambiguous response (both labels present): {0:?}")]
    AmbiguousResponse(String),
    #[error("the auxiliary variant needs at least one rule")]
    EmptyRules,
    #[error("diff token budget must be positive")]
    ZeroBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstructionVariant {
    /// Definitions of valid and noisy only.
    #[default]
    Definition,
    /// Definitions plus the auxiliary rule list.
    Auxiliary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    #[default]
    CommentOnly,
    CommentPlusDiff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub system: String,
    pub definitions: String,
    pub user_comment_only: String,
    pub user_with_diff: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: DEFAULT_SYSTEM.into(),
            definitions: DEFAULT_DEFINITIONS.trim_end().into(),
            user_comment_only: DEFAULT_USER_COMMENT.into(),
            user_with_diff: DEFAULT_USER_DIFF.into(),
        }
    }
}

/// One rule per non-empty line.
pub fn parse_rules(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

pub fn default_rules() -> Vec<String> {
    parse_rules(DEFAULT_RULES)
}

pub fn load_rules(path: &Path) -> io::Result<Vec<String>> {
    Ok(parse_rules(&std::fs::read_to_string(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub instruction: InstructionVariant,
    pub input_mode: InputMode,
    pub auxiliary_rules: Vec<String>,
    pub diff_token_budget: usize,
    pub templates: PromptTemplates,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig::new(InstructionVariant::Definition, InputMode::CommentOnly)
    }
}

impl PromptConfig {
    pub fn new(instruction: InstructionVariant, input_mode: InputMode) -> Self {
        PromptConfig {
            instruction,
            input_mode,
            auxiliary_rules: default_rules(),
            diff_token_budget: DEFAULT_DIFF_TOKEN_BUDGET,
            templates: PromptTemplates::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.instruction == InstructionVariant::Auxiliary && self.auxiliary_rules.is_empty() {
            return Err(PromptError::EmptyRules);
        }
        if self.diff_token_budget == 0 {
            return Err(PromptError::ZeroBudget);
        }
        Ok(())
    }

    /// Short name such as `definition/comment` or `auxiliary/comment+diff`.
    pub fn variant_name(&self) -> String {
        let instruction = match self.instruction {
            InstructionVariant::Definition => "definition",
            InstructionVariant::Auxiliary => "auxiliary",
        };
        let input = match self.input_mode {
            InputMode::CommentOnly => "comment",
            InputMode::CommentPlusDiff => "comment+diff",
        };
        format!("{instruction}/{input}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub user_text: String,
    pub fingerprint: String,
}

impl fmt::Display for RenderedPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[system]\n{}\n[user]\n{}", self.system_text, self.user_text)
    }
}

/// Substitutes `{name}` placeholders in one pass, so placeholder-like text
/// inside substituted values is left alone.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        for (name, value) in values {
            if let Some(tail) = after.strip_prefix(name).and_then(|t| t.strip_prefix('}')) {
                out.push_str(value);
                rest = tail;
                continue 'outer;
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

fn rules_block(rules: &[String]) -> String {
    let mut block = String::from("Auxiliary rules:\n");
    for (i, rule) in rules.iter().enumerate() {
        block.push_str(&format!("{}. {}\n", i + 1, rule));
    }
    block
}

/// Renders the system and user texts for one instance. Pure in
/// `(instance, config)`.
pub fn render_prompt(instance: &ReviewInstance, config: &PromptConfig) -> RenderedPrompt {
    let templates = &config.templates;
    let rules = match config.instruction {
        InstructionVariant::Definition => String::new(),
        InstructionVariant::Auxiliary => rules_block(&config.auxiliary_rules),
    };
    let has_slot = templates.system.contains("{rules}");
    let slot = if has_slot { rules.as_str() } else { "" };
    let mut system_text = fill(
        &templates.system,
        &[("definitions", templates.definitions.as_str()), ("rules", slot)],
    );
    if !has_slot && !rules.is_empty() {
        if !system_text.ends_with('\n') {
            system_text.push('\n');
        }
        system_text.push_str(&rules);
    }

    let user_text = match config.input_mode {
        InputMode::CommentOnly => fill(&templates.user_comment_only, &[("comment", instance.comment.as_str())]),
        InputMode::CommentPlusDiff => {
            let diff = truncate_diff(&instance.patch, config.diff_token_budget);
            fill(
                &templates.user_with_diff,
                &[("comment", instance.comment.as_str()), ("diff", diff.as_str())],
            )
        }
    };
    let fingerprint = stable_hash([system_text.as_bytes(), user_text.as_bytes()]);
    RenderedPrompt {
        system_text,
        user_text,
        fingerprint,
    }
}

/// Approximate token count: each run of alphanumerics/underscores is one
/// token and every other non-whitespace character is a token of its own.
pub fn approx_token_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Keeps whole hunks from the start of `patch` while the approximate token
/// count (including the trailing [`ELISION_MARKER`]) stays within `budget`.
/// Returns `patch` unchanged when it already fits.
pub fn truncate_diff(patch: &str, budget: usize) -> String {
    if approx_token_count(patch) <= budget {
        return patch.to_string();
    }

    // Chunk boundaries at hunk headers; text before the first header rides
    // with the first hunk.
    let mut chunks: Vec<&str> = Vec::new();
    let mut start = 0;
    let mut offset = 0;
    for line in patch.split_inclusive('\n') {
        if line.starts_with("@@") && offset > start && patch[start..offset].contains("@@") {
            chunks.push(&patch[start..offset]);
            start = offset;
        }
        offset += line.len();
    }
    chunks.push(&patch[start..]);

    let marker_cost = approx_token_count(ELISION_MARKER);
    let mut kept = String::new();
    let mut used = 0;
    for chunk in chunks {
        let cost = approx_token_count(chunk);
        if used + cost + marker_cost > budget {
            break;
        }
        kept.push_str(chunk);
        used += cost;
    }
    if !kept.is_empty() && !kept.ends_with('\n') {
        kept.push('\n');
    }
    kept.push_str(ELISION_MARKER);
    kept
}

fn label_tokens(text: &str) -> impl Iterator<Item = Label> + '_ {
    text.split(|c: char| !c.is_alphabetic())
        .filter_map(|w| match w.to_lowercase().as_str() {
            "valid" => Some(Label::Valid),
            "noisy" => Some(Label::Noisy),
            _ => None,
        })
}

/// Returns the rest of a `Label:` line (markdown emphasis tolerated).
fn label_field(line: &str) -> Option<&str> {
    let line = line.trim().trim_start_matches(['*', '#', '-', '>', '_', ' ']);
    let head = line.get(..5)?;
    if !head.eq_ignore_ascii_case("label") {
        return None;
    }
    let rest = line[5..].trim_start_matches(['*', '_', ' ']);
    rest.strip_prefix(':')
}

fn single_label(text: &str, raw: &str) -> Result<Option<Label>, PromptError> {
    let mut found: Option<Label> = None;
    for label in label_tokens(text) {
        match found {
            None => found = Some(label),
            Some(prev) if prev != label => return Err(PromptError::AmbiguousResponse(raw.to_string())),
            Some(_) => {}
        }
    }
    Ok(found)
}

/// Extracts the label from a model response.
///
/// The first `Label:` line decides; if there is none (or it names no label)
/// the whole text is scanned. Both labels in the deciding text is an
/// [`PromptError::AmbiguousResponse`]; no label is
/// [`PromptError::UnparsableResponse`].
pub fn parse_label_response(text: &str) -> Result<Label, PromptError> {
    if text.trim().is_empty() {
        return Err(PromptError::UnparsableResponse(text.to_string()));
    }
    if let Some(field) = text.lines().find_map(label_field) {
        if let Some(label) = single_label(field, text)? {
            return Ok(label);
        }
    }
    single_label(text, text)?.ok_or_else(|| PromptError::UnparsableResponse(text.to_string()))
}
