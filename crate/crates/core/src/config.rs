//! Declarative run configuration (TOML).
//!
//! Relative paths are resolved against the directory holding the config
//! file. Credentials never appear in the file; live models name the
//! environment variable that carries the bearer token.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ProviderConfig, ProviderKind, RateLimit, RetryPolicy};
use crate::materials::{Corpus, Culture, Gender, MaterialsError, Persona, StoryId};
use crate::protocol::{ChainCondition, InfoCondition, MatrixSpec, Mode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Materials(#[from] MaterialsError),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaFilter {
    pub cultures: Option<Vec<Culture>>,
    pub genders: Option<Vec<Gender>>,
    pub names: Option<Vec<String>>,
}

impl PersonaFilter {
    fn admits(&self, p: &Persona) -> bool {
        self.cultures
            .as_ref()
            .is_none_or(|c| c.contains(&p.culture))
            && self.genders.as_ref().is_none_or(|g| g.contains(&p.gender))
            && self.names.as_ref().is_none_or(|n| n.contains(&p.name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveSettings {
    pub base_url: String,
    /// Name sent to the endpoint; defaults to the model id.
    pub model_name: Option<String>,
    pub auth_env_var: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub replay_dir: Option<PathBuf>,
    pub live: Option<LiveSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_info")]
    pub info: Vec<InfoCondition>,
    #[serde(default = "default_chain")]
    pub chain: Vec<ChainCondition>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Alternative corpus directory; the built-in corpus when absent.
    pub corpus_dir: Option<PathBuf>,
    #[serde(default)]
    pub personas: PersonaFilter,
    /// Story ids to run; all corpus stories when absent.
    pub stories: Option<Vec<StoryId>>,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub rate_limit: Option<RateLimit>,
    pub models: Vec<ModelConfig>,
}

fn default_info() -> Vec<InfoCondition> {
    vec![InfoCondition::P1]
}

fn default_chain() -> Vec<ChainCondition> {
    vec![ChainCondition::R1]
}

fn default_parallelism() -> usize {
    1
}

impl RunConfig {
    /// Reads, resolves and structurally validates a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        cfg.check_shape()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        if let Some(d) = self.corpus_dir.as_mut() {
            join(d);
        }
        for m in &mut self.models {
            if let Some(d) = m.replay_dir.as_mut() {
                join(d);
            }
        }
    }

    fn check_shape(&self) -> Result<()> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.models.is_empty() {
            return invalid("`models` must list at least one model".into());
        }
        let mut ids: Vec<&str> = self.models.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return invalid(format!("model `{}` is listed twice", w[0]));
        }
        if self.info.is_empty() {
            return invalid("`info` must name at least one condition (P1..P4)".into());
        }
        if self.chain.is_empty() {
            return invalid("`chain` must name at least one condition (R1..R4)".into());
        }
        if self.stories.as_ref().is_some_and(Vec::is_empty) {
            return invalid("`stories` is empty; remove the key to run every story".into());
        }
        if self.parallelism == 0 {
            return invalid("`parallelism` must be at least 1".into());
        }
        if self.mode == Mode::FreeChoice {
            if let Some(c) = self
                .info
                .iter()
                .find(|c| matches!(c, InfoCondition::P2 | InfoCondition::P3))
            {
                return invalid(format!(
                    "free_choice mode cannot use {c}: it needs a fed option"
                ));
            }
        }
        for m in &self.models {
            if m.replay_dir.is_none() && m.live.is_none() {
                return invalid(format!(
                    "model `{}` needs `replay_dir` or a [models.live] table",
                    m.id
                ));
            }
        }
        Ok(())
    }

    pub fn corpus(&self) -> Result<Corpus> {
        match &self.corpus_dir {
            Some(dir) => Ok(Corpus::load_dir(dir)?),
            None => Ok(Corpus::builtin().clone()),
        }
    }

    /// Builds the matrix axes, checking filters against the corpus.
    pub fn matrix_spec(&self, corpus: &Corpus) -> Result<MatrixSpec> {
        let personas: Vec<Persona> = corpus
            .personas()
            .iter()
            .filter(|p| self.personas.admits(p))
            .cloned()
            .collect();
        if let Some(names) = &self.personas.names {
            if let Some(missing) = names.iter().find(|n| corpus.persona(n).is_none()) {
                return Err(ConfigError::Invalid(format!("unknown persona `{missing}`")));
            }
        }
        if personas.is_empty() {
            return Err(ConfigError::Invalid(
                "persona filter selects no personas".into(),
            ));
        }
        let stories = match &self.stories {
            Some(ids) => {
                for id in ids {
                    corpus.story(id)?;
                }
                ids.clone()
            }
            None => corpus.stories().iter().map(|s| s.id.clone()).collect(),
        };
        Ok(MatrixSpec {
            models: self.models.iter().map(|m| m.id.clone()).collect(),
            personas,
            stories,
            mode: self.mode,
            info: self.info.clone(),
            chain: self.chain.clone(),
        })
    }

    pub fn model(&self, id: &str) -> Option<&ModelConfig> {
        self.models.iter().find(|m| m.id == id)
    }

    pub fn records_path(&self) -> PathBuf {
        self.output_dir.join("records.jsonl")
    }

    pub fn plan_path(&self) -> PathBuf {
        self.output_dir.join("plan.jsonl")
    }

    pub fn parsed_path(&self) -> PathBuf {
        self.output_dir.join("parsed.jsonl")
    }

    /// Provider settings for one model; fails if the requested kind is not
    /// configured for it.
    pub fn provider_config(&self, model_id: &str, kind: ProviderKind) -> Result<ProviderConfig> {
        let m = self
            .model(model_id)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown model `{model_id}`")))?;
        let cfg = match kind {
            ProviderKind::Replay => ProviderConfig {
                kind,
                replay_dir: m.replay_dir.clone(),
                ..ProviderConfig::replay(PathBuf::new())
            },
            ProviderKind::HttpChat => {
                let live = m.live.as_ref().ok_or_else(|| {
                    ConfigError::Invalid(format!(
                        "model `{model_id}` has no [models.live] settings"
                    ))
                })?;
                ProviderConfig {
                    kind,
                    replay_dir: None,
                    base_url: Some(live.base_url.clone()),
                    model_name: live.model_name.clone().unwrap_or_else(|| m.id.clone()),
                    auth_env_var: Some(live.auth_env_var.clone()),
                    timeout_secs: live.timeout_secs,
                    max_retries: self.retry.max_retries,
                    parallelism: self.parallelism,
                    rate_limit: self.rate_limit,
                }
            }
        };
        let cfg = ProviderConfig {
            max_retries: self.retry.max_retries,
            parallelism: self.parallelism,
            ..cfg
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(format!("model `{model_id}`: {e}")))?;
        Ok(cfg)
    }
}
