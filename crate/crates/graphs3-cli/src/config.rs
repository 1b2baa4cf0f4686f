//! Flat key = value run configuration. Values come from (in order of
//! increasing precedence) built-in defaults, the --config file, and
//! command-line flags; within the file a repeated key keeps its last value.
//! Secrets never appear here: the API key is read from GRAPHS3_API_KEY only.

use graphs3::env::EpisodeConfig;
use graphs3::graph::GraphFormat;
use graphs3::policy::{InFlightGate, PolicySpec, RemoteConfig};
use graphs3::refine::{AnswerOracle, RefineMode, RewardConfig};
use graphs3::synthesis::AnswerMatcher;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Every key the config understands, with its default. Unknown keys are
/// rejected so typos fail loudly instead of silently using a default.
const KNOWN_KEYS: &[(&str, &str)] = &[
    ("graph", ""),
    ("format", "tsv"),
    ("questions", ""),
    ("trajectories", ""),
    ("refined", ""),
    ("policy", "greedy_lexical"),
    ("endpoint", ""),
    ("model", ""),
    ("temperature", "0.7"),
    ("generator_temperature", "0.0"),
    ("max_retries", "3"),
    ("backoff_ms", "250"),
    ("timeout_secs", "60"),
    ("in_flight", "4"),
    ("t_max", "20"),
    ("strict_objects", "false"),
    ("seed", "0"),
    ("parallelism", "1"),
    ("out", "runs"),
    ("c1", "0.2"),
    ("c2", "0.6"),
    ("refine_mode", "exact"),
    ("max_exact_len", "14"),
    ("oracle", "containment"),
    ("retrievers", "interactive,khop1,khop2,khop3,full_graph,no_graph"),
    ("matcher", "hit"),
    ("episodes_per_query", "1"),
    ("max_retained_per_query", "none"),
    ("generator", "none"),
    ("strict_acc", "false"),
];

/// Parse a config file body into ordered pairs. Later occurrences of a key
/// override earlier ones; `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {}: expected key = value, got {raw:?}", lineno + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// The merged, still-untyped view of the configuration.
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn new() -> Self {
        Self {
            values: BTreeMap::new(),
        }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read config {}: {e}", path.display())))?;
        for (key, value) in parse_kv(&text)? {
            self.set(&key, value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: String) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(err(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    fn get(&self, key: &str) -> &str {
        self.values.get(key).map(|v| v.as_str()).unwrap_or_else(|| {
            KNOWN_KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .expect("get() is only called with known keys")
        })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let raw = self.get(key);
        raw.parse().map_err(|_| {
            err(format!(
                "config key {key}: cannot parse {raw:?} as {}",
                std::any::type_name::<T>()
            ))
        })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.get(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// Effective key = value lines, defaults included, sorted by key.
    pub fn resolved_lines(&self) -> String {
        let mut keys: Vec<&str> = KNOWN_KEYS.iter().map(|(k, _)| *k).collect();
        keys.sort_unstable();
        let mut out = String::new();
        for key in keys {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(self.get(key));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Oracle,
    Random,
    GreedyLexical,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    None,
    Remote,
}

/// The fully typed run configuration.
pub struct RunConfig {
    pub graph: PathBuf,
    pub format: GraphFormat,
    pub questions: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub refined: Option<PathBuf>,
    pub policy: PolicyKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub generator_temperature: f64,
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub in_flight: usize,
    pub episode: EpisodeConfig,
    pub seed: u64,
    pub parallelism: usize,
    pub out: PathBuf,
    pub rewards: RewardConfig,
    pub refine_mode: RefineMode,
    pub max_exact_len: usize,
    pub oracle_is_remote: bool,
    pub retrievers: Vec<String>,
    pub matcher: AnswerMatcher,
    pub episodes_per_query: u32,
    pub max_retained_per_query: Option<u32>,
    pub generator: GeneratorKind,
    pub strict_acc: bool,
}

impl RunConfig {
    pub fn resolve(raw: &RawConfig) -> Result<Self, ConfigError> {
        let graph_raw = raw.get("graph");
        if graph_raw.is_empty() {
            return Err(err("config key graph is required"));
        }
        let graph = PathBuf::from(graph_raw);
        let format_raw = raw.get("format");
        let format = GraphFormat::from_name(format_raw)
            .ok_or_else(|| err(format!("config key format: unknown format {format_raw:?}")))?;
        let policy = match raw.get("policy") {
            "oracle" => PolicyKind::Oracle,
            "random" => PolicyKind::Random,
            "greedy_lexical" => PolicyKind::GreedyLexical,
            "remote" => PolicyKind::Remote,
            other => return Err(err(format!("config key policy: unknown policy {other:?}"))),
        };
        let refine_mode_raw = raw.get("refine_mode");
        let refine_mode = RefineMode::from_name(refine_mode_raw)
            .ok_or_else(|| err(format!("config key refine_mode: unknown mode {refine_mode_raw:?}")))?;
        let oracle_is_remote = match raw.get("oracle") {
            "containment" => false,
            "remote" => true,
            other => return Err(err(format!("config key oracle: unknown oracle {other:?}"))),
        };
        let matcher = match raw.get("matcher") {
            "hit" => AnswerMatcher::Hit,
            "strict" | "strict_set_equality" => AnswerMatcher::StrictSetEquality,
            other => return Err(err(format!("config key matcher: unknown matcher {other:?}"))),
        };
        let generator = match raw.get("generator") {
            "none" => GeneratorKind::None,
            "remote" => GeneratorKind::Remote,
            other => return Err(err(format!("config key generator: unknown generator {other:?}"))),
        };
        let max_retained_per_query = match raw.get("max_retained_per_query") {
            "none" | "" => None,
            _ => Some(raw.parse::<u32>("max_retained_per_query")?),
        };
        let rewards = RewardConfig {
            c1: raw.parse("c1")?,
            c2: raw.parse("c2")?,
        };
        rewards
            .validate()
            .map_err(|e| err(format!("reward constants: {e}")))?;
        let retrievers: Vec<String> = raw
            .get("retrievers")
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if retrievers.is_empty() {
            return Err(err("config key retrievers: list is empty"));
        }
        let config = Self {
            graph,
            format,
            questions: raw.path("questions"),
            trajectories: raw.path("trajectories"),
            refined: raw.path("refined"),
            policy,
            endpoint: raw.get("endpoint").to_string(),
            model: raw.get("model").to_string(),
            temperature: raw.parse("temperature")?,
            generator_temperature: raw.parse("generator_temperature")?,
            max_retries: raw.parse("max_retries")?,
            backoff: Duration::from_millis(raw.parse("backoff_ms")?),
            timeout: Duration::from_secs(raw.parse("timeout_secs")?),
            in_flight: raw.parse("in_flight")?,
            episode: EpisodeConfig {
                t_max: raw.parse("t_max")?,
                strict_objects: raw.parse("strict_objects")?,
            },
            seed: raw.parse("seed")?,
            parallelism: raw.parse("parallelism")?,
            out: PathBuf::from(raw.get("out")),
            rewards,
            refine_mode,
            max_exact_len: raw.parse("max_exact_len")?,
            oracle_is_remote,
            retrievers,
            matcher,
            episodes_per_query: raw.parse("episodes_per_query")?,
            max_retained_per_query,
            generator,
            strict_acc: raw.parse("strict_acc")?,
        };
        if config.episode.t_max == 0 {
            return Err(err("config key t_max must be at least 1"));
        }
        Ok(config)
    }

    pub fn require_exists(&self, what: &str, path: &Path) -> Result<(), ConfigError> {
        if path.exists() {
            Ok(())
        } else {
            Err(err(format!("{what} path does not exist: {}", path.display())))
        }
    }

    pub fn remote_config(&self, temperature: f64) -> Result<RemoteConfig, ConfigError> {
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(err("endpoint and model are required for remote calls"));
        }
        let gate = InFlightGate::new(self.in_flight.max(1));
        let mut config = RemoteConfig::new(self.endpoint.clone(), self.model.clone(), gate);
        config.temperature = temperature;
        config.max_retries = self.max_retries;
        config.backoff = self.backoff;
        config.timeout = self.timeout;
        Ok(config)
    }

    /// Build the policy spec; the oracle policy needs the trajectory bank.
    pub fn policy_spec(
        &self,
        bank: Option<std::sync::Arc<std::collections::HashMap<String, Vec<graphs3::env::Action>>>>,
    ) -> Result<PolicySpec, ConfigError> {
        match self.policy {
            PolicyKind::Oracle => {
                let bank = bank.ok_or_else(|| {
                    err("policy oracle requires the trajectories key to point at a trajectory file")
                })?;
                Ok(PolicySpec::Oracle { bank })
            }
            PolicyKind::Random => Ok(PolicySpec::Random { seed: self.seed }),
            PolicyKind::GreedyLexical => Ok(PolicySpec::GreedyLexical),
            PolicyKind::Remote => Ok(PolicySpec::Remote(self.remote_config(self.temperature)?)),
        }
    }

    pub fn answer_oracle(&self) -> Result<AnswerOracle, ConfigError> {
        if self.oracle_is_remote {
            Ok(AnswerOracle::RemoteLlm {
                config: self.remote_config(0.0)?,
            })
        } else {
            Ok(AnswerOracle::Containment)
        }
    }
}
