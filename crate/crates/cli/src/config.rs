//! TOML run configuration. Flags take precedence over these values, which
//! take precedence over built-in defaults. Credentials never live here: an
//! endpoint names the environment variable holding its key.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lookahead_core::eval::{Grouping, MockKind, ModelEndpoint};
use serde::{Deserialize, Serialize};

use crate::args::Format;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub format: Option<Format>,
    pub generate: GenerateConfig,
    pub chain: ChainConfig,
    pub profile: ProfileConfig,
    pub evaluate: EvaluateConfig,
    pub perturb: PerturbConfig,
    #[serde(rename = "endpoint")]
    pub endpoints: Vec<ModelEndpoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub grid: Vec<String>,
    pub per_cell: Option<usize>,
    pub max_edges: Option<usize>,
    pub alpha: Option<f64>,
    pub chain_depths: Vec<u32>,
    pub chain_extra_nodes: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub depths: Vec<u32>,
    pub per_cell: Option<usize>,
    pub extra_nodes: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub sample: Option<usize>,
    pub layer_cap: Option<u32>,
    pub delimiter: Option<char>,
    pub string_ids: Option<bool>,
    pub undirected: Option<bool>,
    pub merge_uniform: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Endpoints queried when no `--endpoint` or `--mock` flag is given.
    pub endpoints: Vec<String>,
    pub run_id: Option<String>,
    pub token_budget: Option<u64>,
    pub per_cell_cap: Option<usize>,
    pub extractor: Option<String>,
    pub group: Option<Grouping>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub buckets: Vec<String>,
    pub per_stratum: Option<usize>,
    pub max_attempts: Option<usize>,
    pub endpoint: Option<String>,
    pub controls: Option<bool>,
}

const ENDPOINT_KEYS: [&str; 12] = [
    "name",
    "model",
    "base_url",
    "api_key_env",
    "temperature",
    "supports_temperature",
    "max_output_tokens",
    "max_concurrency",
    "max_retries",
    "backoff_ms",
    "timeout_secs",
    "mock",
];

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses a config. `mock = "gold"` style shorthands are accepted for
    /// endpoints, and any key that could hold a secret is rejected.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut table: toml::Table = text.parse()?;
        if let Some(eps) = table.get_mut("endpoint") {
            let eps = eps.as_array_mut().context("`endpoint` must be an array of tables")?;
            for ep in eps {
                let t = ep.as_table_mut().context("each [[endpoint]] must be a table")?;
                for key in t.keys() {
                    if !ENDPOINT_KEYS.contains(&key.as_str()) {
                        let lower = key.to_lowercase();
                        if ["key", "secret", "token", "password"].iter().any(|s| lower.contains(s)) {
                            bail!("endpoint field {key:?} is not allowed; credentials come from the variable named by api_key_env");
                        }
                        bail!("unknown endpoint field {key:?}");
                    }
                }
                if let Some(toml::Value::String(s)) = t.get("mock") {
                    let kind: MockKind = s.parse()?;
                    t.insert("mock".into(), toml::Value::try_from(&kind)?);
                }
            }
        }
        let cfg: RunConfig = table.try_into()?;
        let mut names = HashSet::new();
        for ep in &cfg.endpoints {
            ep.validate()?;
            if !names.insert(ep.name.as_str()) {
                bail!("endpoint {:?} is defined twice", ep.name);
            }
        }
        Ok(cfg)
    }

    pub fn endpoint(&self, name: &str) -> Option<&ModelEndpoint> {
        self.endpoints.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_shorthand_and_sections() {
        let cfg = RunConfig::parse(
            r#"
            seed = 7
            [generate]
            grid = ["L=2..4,B=2"]
            [evaluate]
            endpoints = ["g"]
            group = "model"
            [[endpoint]]
            name = "g"
            mock = "uniform:3"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.evaluate.group, Some(Grouping::Model));
        assert_eq!(cfg.endpoint("g").unwrap().mock, Some(MockKind::UniformGuess { seed: 3 }));
    }

    #[test]
    fn secrets_and_typos_are_rejected() {
        let key = RunConfig::parse("[[endpoint]]\nname = \"x\"\nbase_url = \"http://h\"\napi_key = \"sk\"\n");
        assert!(format!("{:#}", key.unwrap_err()).contains("credentials"));
        assert!(RunConfig::parse("[generate]\nper_cel = 3\n").is_err());
        assert!(RunConfig::parse("[[endpoint]]\nname = \"x\"\n").is_err());
    }
}
