use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use revclean_core::corpus::FieldMapping;
use revclean_core::prediction::ErrorHandling;
use revclean_core::prompting::{
    default_rules, load_rules, InputMode, InstructionVariant, PromptConfig, DEFAULT_DIFF_TOKEN_BUDGET,
};
use revclean_core::topics::DEFAULT_K;
use revclean_gateway::ModelConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub instruction: InstructionVariant,
    pub input_mode: InputMode,
    pub rules_file: Option<PathBuf>,
    pub diff_token_budget: usize,
}

impl Default for PromptSection {
    fn default() -> Self {
        PromptSection {
            instruction: InstructionVariant::Definition,
            input_mode: InputMode::CommentOnly,
            rules_file: None,
            diff_token_budget: DEFAULT_DIFF_TOKEN_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsSection {
    pub k: usize,
}

impl Default for TopicsSection {
    fn default() -> Self {
        TopicsSection { k: DEFAULT_K }
    }
}

/// Everything a run reads from the config file; flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub parallelism: usize,
    pub out: PathBuf,
    pub backend: BackendKind,
    pub mock_rules: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub model: ModelConfig,
    pub prompt: PromptSection,
    pub fields: FieldMapping,
    pub error_handling: ErrorHandling,
    pub topics: TopicsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            parallelism: 4,
            out: PathBuf::from("out"),
            backend: BackendKind::Http,
            mock_rules: None,
            cache: None,
            model: ModelConfig::default(),
            prompt: PromptSection::default(),
            fields: FieldMapping::default(),
            error_handling: ErrorHandling::default(),
            topics: TopicsSection::default(),
        }
    }
}

/// Replaces `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            bail!("unterminated `${{` in config");
        };
        let name = &after[..end];
        match lookup(name) {
            Some(v) => out.push_str(&v),
            None => bail!("config references unset environment variable `{name}`"),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let text = interpolate_env(text, |k| std::env::var(k).ok())?;
        Ok(toml::from_str(&text)?)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                RunConfig::parse(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn prompt_config(&self) -> Result<PromptConfig> {
        let mut cfg = PromptConfig::new(self.prompt.instruction, self.prompt.input_mode);
        cfg.diff_token_budget = self.prompt.diff_token_budget;
        cfg.auxiliary_rules = match &self.prompt.rules_file {
            Some(p) => load_rules(p).with_context(|| format!("reading rules {}", p.display()))?,
            None => default_rules(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings that can change artifact contents. Output location,
    /// parallelism and cache location are left out on purpose.
    pub fn manifest_view(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            for k in ["out", "parallelism", "cache", "mock_rules"] {
                obj.remove(k);
            }
        }
        v
    }
}
