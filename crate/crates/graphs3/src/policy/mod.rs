//! Decision policies: mapping a serialized state to (thought, action).
//!
//! Ships a remote chat-completion client, a scripted oracle that replays a
//! recorded action list, a seeded random explorer, and a lexical-overlap
//! greedy baseline, plus the parser that recovers an [`Action`] from free
//! model output.

pub mod remote;

use crate::env::{Action, ActionDecodeError, AgentState};
use crate::graph::TextualGraph;
use crate::norm::{normalize_entity, tokens};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

pub use remote::{InFlightGate, RemoteConfig, RemotePolicy};

/// A policy's output for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDecision {
    pub thought: String,
    pub action: Action,
    /// Original model output, verbatim. For scripted policies this is the
    /// rendered completion, so parse ∘ render is the identity.
    pub raw: String,
    /// True when the thought was templated rather than model-produced.
    pub synthetic_thought: bool,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no fenced code block with Action and Objects keys")]
    NoActionBlock,
    #[error("unknown Action value: {0:?}")]
    UnknownAction(String),
    #[error("empty Objects list")]
    EmptyObjects,
    #[error("Objects element not coercible to a string: {0}")]
    UnparseableObject(String),
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    /// Model output did not yield an action. Soft: the episode records a
    /// malformed step and continues.
    #[error("unparseable policy output: {error}")]
    Parse { raw: String, error: ParseError },
    /// Remote call still failing after all retries. Soft by synthesis
    /// policy: recorded as a malformed step.
    #[error("remote policy failed after {attempts} attempt(s): {detail}")]
    Remote { attempts: u32, detail: String },
    /// The scripted oracle was asked for more actions than it holds. Hard:
    /// indicates a harness bug, propagated.
    #[error("oracle exhausted after {len} recorded action(s)")]
    OracleExhausted { len: usize },
    #[error("no recorded trajectory for query {0:?}")]
    NoOracleTrajectory(String),
}

impl PolicyError {
    /// Soft failures become malformed steps; hard ones abort the episode.
    pub fn is_soft(&self) -> bool {
        matches!(self, PolicyError::Parse { .. } | PolicyError::Remote { .. })
    }
}

/// Render the canonical completion text for a decision: the thought, then
/// the fenced action block.
pub fn render_completion(thought: &str, action: &Action) -> String {
    let json = serde_json::to_string_pretty(&action.to_json())
        .expect("action json serialization cannot fail");
    format!("{thought}\n\nAction Decision:\n```json\n{json}\n```")
}

fn coerce_objects(value: &serde_json::Value) -> Result<Vec<String>, ParseError> {
    let items: Vec<&serde_json::Value> = match value {
        serde_json::Value::Array(items) => items.iter().collect(),
        // a bare scalar is accepted as a singleton list
        other => vec![other],
    };
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        match item {
            serde_json::Value::String(s) => out.push(s.clone()),
            serde_json::Value::Number(n) => out.push(n.to_string()),
            serde_json::Value::Bool(b) => out.push(b.to_string()),
            other => return Err(ParseError::UnparseableObject(other.to_string())),
        }
    }
    Ok(out)
}

/// Extract (thought, action) from raw model output.
///
/// The thought is the text before the "Action Decision:" marker (or before
/// the action block when the marker is absent). The action comes from the
/// first fenced code block whose JSON carries both `Action` and `Objects`;
/// fenced blocks that don't parse or lack the keys are skipped.
pub fn parse_decision(raw: &str) -> Result<PolicyDecision, ParseError> {
    let mut found: Option<(usize, serde_json::Value)> = None;
    let mut offset = 0usize;
    let mut block_start = 0usize;
    for (index, seg) in raw.split("```").enumerate() {
        if index % 2 == 1 {
            // inside a fence; drop a leading language tag line
            let body = match seg.split_once('\n') {
                Some((first, rest)) if first.trim().chars().all(|c| c.is_ascii_alphanumeric()) => {
                    rest
                }
                _ => seg,
            };
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(body.trim()) {
                if value.get("Action").is_some() && value.get("Objects").is_some() {
                    found = Some((block_start, value));
                    break;
                }
            }
        } else {
            block_start = offset + seg.len();
        }
        offset += seg.len() + 3;
    }
    let (block_start, value) = found.ok_or(ParseError::NoActionBlock)?;

    let kind = value
        .get("Action")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| value["Action"].to_string());
    let objects = coerce_objects(&value["Objects"])?;
    let action = Action::from_kind_objects(&kind, objects).map_err(|e| match e {
        ActionDecodeError::UnknownAction(k) => ParseError::UnknownAction(k),
        ActionDecodeError::EmptyObjects => ParseError::EmptyObjects,
    })?;

    let head = &raw[..block_start];
    let thought = match head.find("Action Decision:") {
        Some(pos) => head[..pos].trim(),
        None => head.trim(),
    };
    let thought = thought
        .strip_prefix("Thought Process:")
        .map(str::trim)
        .unwrap_or(thought);

    Ok(PolicyDecision {
        thought: thought.to_string(),
        action,
        raw: raw.to_string(),
        synthetic_thought: false,
    })
}

/// Per-query seed derivation (FNV-1a over the global seed and query id), so
/// episode randomness is independent of scheduling order.
pub fn derive_seed(global_seed: u64, query_id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in global_seed
        .to_le_bytes()
        .iter()
        .chain(query_id.as_bytes().iter())
    {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// A decision-maker for one episode. Stateless per call except the oracle's
/// cursor, which is owned by a single episode.
pub trait Policy: Send {
    fn decide(
        &mut self,
        graph: &TextualGraph,
        state: &AgentState,
    ) -> Result<PolicyDecision, PolicyError>;

    fn name(&self) -> &'static str;
}

/// Recipe for building per-episode policies. Cloneable so parallel workers
/// can each build their own instance.
#[derive(Clone)]
pub enum PolicySpec {
    /// Replay recorded actions per query id.
    Oracle {
        bank: Arc<HashMap<String, Vec<Action>>>,
    },
    /// Seeded random explorer; the per-episode seed mixes in the query id.
    Random { seed: u64 },
    /// Deterministic lexical-overlap baseline.
    GreedyLexical,
    /// Chat-completion endpoint.
    Remote(RemoteConfig),
}

impl PolicySpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PolicySpec::Oracle { .. } => "oracle",
            PolicySpec::Random { .. } => "random",
            PolicySpec::GreedyLexical => "greedy_lexical",
            PolicySpec::Remote(_) => "remote",
        }
    }

    /// Instantiate the policy for one (query, repeat) episode. The episode
    /// index only matters for seeded policies, which mix it into the seed.
    pub fn build_for_episode(
        &self,
        query_id: &str,
        episode: u32,
    ) -> Result<Box<dyn Policy>, PolicyError> {
        match self {
            PolicySpec::Oracle { bank } => {
                let actions = bank
                    .get(query_id)
                    .ok_or_else(|| PolicyError::NoOracleTrajectory(query_id.to_string()))?;
                Ok(Box::new(OraclePolicy::new(actions.clone())))
            }
            PolicySpec::Random { seed } => {
                let key = format!("{query_id}#{episode}");
                Ok(Box::new(RandomPolicy::new(derive_seed(*seed, &key))))
            }
            PolicySpec::GreedyLexical => Ok(Box::new(GreedyLexicalPolicy)),
            PolicySpec::Remote(config) => Ok(Box::new(RemotePolicy::new(config.clone()))),
        }
    }
}

/// Replays a fixed action list with templated thoughts.
pub struct OraclePolicy {
    actions: Vec<Action>,
    cursor: usize,
}

impl OraclePolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, cursor: 0 }
    }
}

impl Policy for OraclePolicy {
    fn decide(
        &mut self,
        _graph: &TextualGraph,
        _state: &AgentState,
    ) -> Result<PolicyDecision, PolicyError> {
        let action = self
            .actions
            .get(self.cursor)
            .ok_or(PolicyError::OracleExhausted {
                len: self.actions.len(),
            })?
            .clone();
        self.cursor += 1;
        let thought = format!("oracle step {}", self.cursor);
        let raw = render_completion(&thought, &action);
        Ok(PolicyDecision {
            thought,
            action,
            raw,
            synthetic_thought: true,
        })
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// Entity names already targeted by prior Explore actions.
fn explored_names(state: &AgentState) -> HashSet<String> {
    let mut out = HashSet::new();
    for entry in state.history() {
        if let Some(Action::ExploreEntity { names }) = entry.action() {
            for n in names {
                out.insert(normalize_entity(n));
            }
        }
    }
    out
}

/// Candidate Explore targets in deterministic order: question entities
/// first, then perception endpoints by first occurrence; already-explored
/// names and unresolvable ones are skipped.
fn explore_candidates(graph: &TextualGraph, state: &AgentState) -> Vec<String> {
    let explored = explored_names(state);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |name: &str| {
        let key = normalize_entity(name);
        if !explored.contains(&key) && seen.insert(key) {
            out.push(name.to_string());
        }
    };
    for name in &state.query().question_entities {
        if matches!(graph.resolve_entity(name), Ok(Some(_))) {
            push(name);
        }
    }
    for tid in state.perception() {
        let t = graph.triple(*tid);
        push(graph.entity_name(t.head));
        push(graph.entity_name(t.tail));
    }
    out
}

/// Subgraph endpoint names by first occurrence.
fn subgraph_entity_names(graph: &TextualGraph, state: &AgentState) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for tid in state.subgraph() {
        let t = graph.triple(*tid);
        for name in [graph.entity_name(t.head), graph.entity_name(t.tail)] {
            if seen.insert(name.to_string()) {
                out.push(name.to_string());
            }
        }
    }
    out
}

/// Seed-determined explorer: Explore 0.5, Choose 0.4, Finish 0.1, with
/// fallbacks when a branch has no candidates.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn finish_answers(graph: &TextualGraph, state: &AgentState) -> Vec<String> {
        let names = subgraph_entity_names(graph, state);
        if !names.is_empty() {
            return names;
        }
        if !state.query().question_entities.is_empty() {
            return state.query().question_entities.clone();
        }
        vec!["unknown".to_string()]
    }
}

impl Policy for RandomPolicy {
    fn decide(
        &mut self,
        graph: &TextualGraph,
        state: &AgentState,
    ) -> Result<PolicyDecision, PolicyError> {
        let explore = explore_candidates(graph, state);
        let perception: Vec<String> = state
            .perception()
            .iter()
            .map(|tid| graph.triple_text(*tid))
            .collect();

        let roll: f64 = self.rng.gen();
        let branch = if roll < 0.5 {
            if !explore.is_empty() {
                0
            } else if !perception.is_empty() {
                1
            } else {
                2
            }
        } else if roll < 0.9 {
            if !perception.is_empty() {
                1
            } else if !explore.is_empty() {
                0
            } else {
                2
            }
        } else {
            2
        };

        let action = match branch {
            0 => {
                let pick = self.rng.gen_range(0..explore.len());
                Action::ExploreEntity {
                    names: vec![explore[pick].clone()],
                }
            }
            1 => {
                let mut chosen: Vec<String> = perception
                    .iter()
                    .filter(|_| self.rng.gen_bool(0.5))
                    .cloned()
                    .collect();
                if chosen.is_empty() {
                    let pick = self.rng.gen_range(0..perception.len());
                    chosen.push(perception[pick].clone());
                }
                Action::ChooseRelation { triples: chosen }
            }
            _ => Action::Finish {
                answers: Self::finish_answers(graph, state),
            },
        };
        let thought = format!("random step {}", state.step() + 1);
        let raw = render_completion(&thought, &action);
        Ok(PolicyDecision {
            thought,
            action,
            raw,
            synthetic_thought: true,
        })
    }

    fn name(&self) -> &'static str {
        "random"
    }
}

/// Token-overlap baseline: Choose perception triples sharing tokens with
/// the question; otherwise Explore the highest-overlap candidate; Finish
/// once neither makes progress.
pub struct GreedyLexicalPolicy;

impl GreedyLexicalPolicy {
    fn overlap(question_tokens: &HashSet<String>, text: &str) -> usize {
        tokens(text)
            .iter()
            .filter(|t| question_tokens.contains(*t))
            .count()
    }
}

impl Policy for GreedyLexicalPolicy {
    fn decide(
        &mut self,
        graph: &TextualGraph,
        state: &AgentState,
    ) -> Result<PolicyDecision, PolicyError> {
        let question_tokens: HashSet<String> =
            tokens(&state.query().question).into_iter().collect();
        let question_entity_names: HashSet<String> = state
            .query()
            .question_entities
            .iter()
            .map(|n| normalize_entity(n))
            .collect();
        // tokens of question entities match every incident triple; score
        // against the informative remainder
        let mut informative = question_tokens.clone();
        for name in &state.query().question_entities {
            for t in tokens(name) {
                informative.remove(&t);
            }
        }

        // triples whose relation or endpoints overlap the question
        let mut scored: Vec<String> = Vec::new();
        for tid in state.perception() {
            let t = graph.triple(*tid);
            let score = Self::overlap(&informative, graph.relation_name(t.relation))
                + Self::overlap(&informative, graph.entity_name(t.head))
                + Self::overlap(&informative, graph.entity_name(t.tail));
            if score > 0 {
                scored.push(graph.triple_text(*tid));
            }
        }
        let current: Vec<String> = state.subgraph_texts().to_vec();
        if !scored.is_empty() && scored != current {
            let thought = format!("rule choose-overlap step {}", state.step() + 1);
            let action = Action::ChooseRelation { triples: scored };
            let raw = render_completion(&thought, &action);
            return Ok(PolicyDecision {
                thought,
                action,
                raw,
                synthetic_thought: true,
            });
        }

        let candidates = explore_candidates(graph, state);
        let best = candidates
            .iter()
            .map(|name| Self::overlap(&question_tokens, name))
            .enumerate()
            // stable max: earlier candidate wins ties
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .filter(|(_, score)| *score > 0)
            .map(|(i, _)| candidates[i].clone());
        if let Some(name) = best {
            let thought = format!("rule explore-overlap step {}", state.step() + 1);
            let action = Action::ExploreEntity { names: vec![name] };
            let raw = render_completion(&thought, &action);
            return Ok(PolicyDecision {
                thought,
                action,
                raw,
                synthetic_thought: true,
            });
        }

        let mut answers: Vec<String> = subgraph_entity_names(graph, state)
            .into_iter()
            .filter(|n| !question_entity_names.contains(&normalize_entity(n)))
            .collect();
        if answers.is_empty() {
            answers = subgraph_entity_names(graph, state);
        }
        if answers.is_empty() {
            answers = vec!["unknown".to_string()];
        }
        let thought = format!("rule finish step {}", state.step() + 1);
        let action = Action::Finish { answers };
        let raw = render_completion(&thought, &action);
        Ok(PolicyDecision {
            thought,
            action,
            raw,
            synthetic_thought: true,
        })
    }

    fn name(&self) -> &'static str {
        "greedy_lexical"
    }
}

/// Parse the actions out of an appendix-schema trajectory's extract_res
/// values, keyed by query id, for oracle replay.
pub fn oracle_bank_from_actions(
    entries: impl IntoIterator<Item = (String, Vec<Action>)>,
) -> Arc<HashMap<String, Vec<Action>>> {
    Arc::new(entries.into_iter().collect())
}
