//! Pipeline configuration: a TOML file, `section.key = value` overrides, and
//! the `KGRELEX_SEED` environment variable.

use std::path::{Path, PathBuf};

use kgrelex_core::aggregate::AggregationConfig;
use kgrelex_core::context::MAX_CONTEXT_HOPS;
use kgrelex_core::explain::BeamConfig;
use kgrelex_core::linkpred::TrainConfig;
use kgrelex_core::reasoning::ScorerConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

pub const SEED_ENV: &str = "KGRELEX_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// JSON Lines triples from an external extractor.
    pub extracted_triples: Vec<PathBuf>,
    /// JSON Lines `{"entity", "synonyms", "type"}`.
    pub entity_context: Option<PathBuf>,
    /// JSON Lines `{"head", "tail", "hops", "pagerank"?}`.
    pub context_paths: Option<PathBuf>,
    pub max_hops: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            dev: None,
            test: None,
            extracted_triples: Vec::new(),
            entity_context: None,
            context_paths: None,
            max_hops: MAX_CONTEXT_HOPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub beam: usize,
    pub max_len: usize,
    pub top_n: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        let b = BeamConfig::default();
        Self {
            beam: b.beam,
            max_len: b.max_len,
            top_n: b.top_n,
        }
    }
}

impl ExplainConfig {
    pub fn beam_config(&self) -> BeamConfig {
        BeamConfig {
            beam: self.beam,
            max_len: self.max_len,
            top_n: self.top_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds both the link predictor and the reasoning scorer when set.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub scorer: ScorerConfig,
    pub aggregation: AggregationConfig,
    pub explain: ExplainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            scorer: ScorerConfig::default(),
            aggregation: AggregationConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

/// Parses `value` as a TOML value, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Sets `dotted.key` in `table` to `raw`.
pub fn apply_override(table: &mut Table, key: &str, raw: &str) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("malformed override key `{key}`")));
    }
    let (last, path) = parts.split_last().unwrap();
    let mut at = table;
    for p in path {
        let next = at.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        at = next
            .as_table_mut()
            .ok_or_else(|| CliError::usage(format!("override `{key}`: `{p}` is not a section")))?;
    }
    at.insert(last.to_string(), parse_value(raw));
    Ok(())
}

/// Parses config text, applies overrides and the seed rules, and resolves
/// relative paths against `base`.
pub fn load_config_str(
    text: &str,
    base: &Path,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<PipelineConfig, CliError> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::usage(format!("config: {}", e.message())))?;
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let mut cfg: PipelineConfig = PipelineConfig::deserialize(Value::Table(table))
        .map_err(|e| CliError::usage(format!("config: {}", e.message())))?;
    if let Some(raw) = env_seed {
        let seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}=`{raw}` is not an unsigned integer")))?;
        cfg.seed = Some(seed);
    }
    if let Some(seed) = cfg.seed {
        cfg.train.seed = seed;
        cfg.scorer.seed = seed;
    }
    cfg.resolve_paths(base);
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            let base = p.parent().unwrap_or(Path::new("."));
            load_config_str(&text, base, overrides, env_seed)
        }
        None => load_config_str("", Path::new("."), overrides, env_seed),
    }
}

impl PipelineConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        let d = &mut self.data;
        for p in [&mut d.train, &mut d.dev, &mut d.test, &mut d.entity_context, &mut d.context_paths]
            .into_iter()
            .flatten()
        {
            join(p);
        }
        d.extracted_triples.iter_mut().for_each(join);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |e: kgrelex_core::Error| CliError::usage(e.to_string());
        self.train.validate().map_err(wrap)?;
        self.scorer.validate().map_err(wrap)?;
        self.aggregation.validate().map_err(wrap)?;
        self.explain.beam_config().validate().map_err(wrap)?;
        if !(1..=MAX_CONTEXT_HOPS).contains(&self.data.max_hops) {
            return Err(CliError::usage(format!(
                "data.max_hops {} not in 1..={MAX_CONTEXT_HOPS}",
                self.data.max_hops
            )));
        }
        Ok(())
    }

    /// Model-relevant settings stored in checkpoints. Paths are left out so
    /// the same run from another directory produces the same bytes.
    pub fn model_echo(&self) -> String {
        serde_json::json!({
            "train": self.train,
            "scorer": self.scorer,
            "max_hops": self.data.max_hops,
        })
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = load_config_str("", Path::new("/base"), &[], None).unwrap();
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.explain.beam, 128);
        assert_eq!(cfg.output_dir, PathBuf::from("/base/out"));

        let text = "seed = 3\n[train]\nlr = 0.5\n[data]\ntrain = \"t.json\"\n";
        let overrides = vec![
            ("train.epochs".to_string(), "7".to_string()),
            ("aggregation.operator".to_string(), "max".to_string()),
        ];
        let cfg = load_config_str(text, Path::new("/base"), &overrides, None).unwrap();
        assert_eq!((cfg.train.lr, cfg.train.epochs, cfg.train.seed, cfg.scorer.seed), (0.5, 7, 3, 3));
        assert_eq!(cfg.data.train, Some(PathBuf::from("/base/t.json")));
        assert_eq!(cfg.aggregation.operator, kgrelex_core::aggregate::Operator::Max);
    }

    #[test]
    fn environment_seed_wins() {
        let cfg = load_config_str("seed = 3", Path::new("."), &[("seed".into(), "4".into())], Some("9")).unwrap();
        assert_eq!((cfg.train.seed, cfg.scorer.seed), (9, 9));
        assert!(load_config_str("", Path::new("."), &[], Some("x")).is_err());
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        for text in ["[train]\nlr = \"fast\"", "[train]\nbogus = 1", "[explain]\nmax_len = 9", "nonsense = = 1"] {
            let err = load_config_str(text, Path::new("."), &[], None).unwrap_err();
            assert_eq!(err.code, crate::error::EXIT_USAGE, "{text}");
        }
    }
}
