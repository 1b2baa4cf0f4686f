//! The interactive retrieval environment: queries, typed actions, agent
//! state, transition semantics, and byte-stable state serialization.
//!
//! An episode is a loop of Explore / Choose / Finish actions over an
//! immutable [`TextualGraph`]:
//! - Explore grows the perception window with the neighborhoods of the named
//!   entities;
//! - Choose *replaces* the focused subgraph with the selected perception
//!   triples (re-selection is required to keep a triple);
//! - Finish terminates the episode and carries the final answers.
//!
//! Invalid actions consume a step without changing graph state, so a policy
//! can waste budget but never crash an episode.

use crate::graph::{EntityId, GraphError, TextualGraph, TripleId};
use crate::norm::pyish_list;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

/// The default prompt template shipped with the crate.
pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../assets/default_prompt.txt");

/// A question to answer over the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub question: String,
    #[serde(rename = "entities")]
    pub question_entities: Vec<String>,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
}

/// One of the three graph actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Surface the neighborhoods of the named entities.
    ExploreEntity { names: Vec<String> },
    /// Keep only the listed perception triples; objects are the raw
    /// `"(head, relation, tail)"` strings.
    ChooseRelation { triples: Vec<String> },
    /// Terminate with the listed answers.
    Finish { answers: Vec<String> },
}

/// The `{"Action": ..., "Objects": [...]}` wire form of an [`Action`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionJson {
    #[serde(rename = "Action")]
    pub action: String,
    #[serde(rename = "Objects")]
    pub objects: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ActionDecodeError {
    #[error("unknown action value: {0:?}")]
    UnknownAction(String),
    #[error("empty Objects list")]
    EmptyObjects,
}

impl Action {
    pub const EXPLORE_NAME: &'static str = "Explore Entity";
    pub const CHOOSE_NAME: &'static str = "Choose Relation";
    pub const FINISH_NAME: &'static str = "Finish";

    pub fn kind_name(&self) -> &'static str {
        match self {
            Action::ExploreEntity { .. } => Self::EXPLORE_NAME,
            Action::ChooseRelation { .. } => Self::CHOOSE_NAME,
            Action::Finish { .. } => Self::FINISH_NAME,
        }
    }

    pub fn objects(&self) -> &[String] {
        match self {
            Action::ExploreEntity { names } => names,
            Action::ChooseRelation { triples } => triples,
            Action::Finish { answers } => answers,
        }
    }

    /// Build from the wire form. The action name is matched
    /// case-insensitively; the objects list must be nonempty.
    pub fn from_kind_objects(kind: &str, objects: Vec<String>) -> Result<Self, ActionDecodeError> {
        if objects.is_empty() {
            return Err(ActionDecodeError::EmptyObjects);
        }
        let folded = kind.trim().to_lowercase();
        match folded.as_str() {
            "explore entity" => Ok(Action::ExploreEntity { names: objects }),
            "choose relation" => Ok(Action::ChooseRelation { triples: objects }),
            "finish" => Ok(Action::Finish { answers: objects }),
            _ => Err(ActionDecodeError::UnknownAction(kind.to_string())),
        }
    }

    pub fn to_json(&self) -> ActionJson {
        ActionJson {
            action: self.kind_name().to_string(),
            objects: self.objects().to_vec(),
        }
    }

    pub fn from_json(json: &ActionJson) -> Result<Self, ActionDecodeError> {
        Self::from_kind_objects(&json.action, json.objects.clone())
    }

    /// The action-history line for step `step`, e.g.
    /// `step 1, Explore Entity, Objects: ['The Life of Oharu']`.
    pub fn history_line(&self, step: u32) -> String {
        format!(
            "step {}, {}, Objects: {}",
            step,
            self.kind_name(),
            pyish_list(self.objects())
        )
    }
}

/// Outcome of checking an action against the current state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    /// Some objects usable, some not. Carries at least one of each.
    Partial {
        accepted: Vec<String>,
        rejected: Vec<RejectedObject>,
    },
    Invalid { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedObject {
    pub object: String,
    pub reason: String,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Validity::Valid => "valid",
            Validity::Partial { .. } => "partial",
            Validity::Invalid { .. } => "invalid",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Validity::Valid => "valid".to_string(),
            Validity::Partial { accepted, rejected } => {
                let rejects: Vec<String> = rejected
                    .iter()
                    .map(|r| format!("{} ({})", r.object, r.reason))
                    .collect();
                format!(
                    "partial: accepted {}, rejected {}",
                    accepted.len(),
                    rejects.join("; ")
                )
            }
            Validity::Invalid { reason } => format!("invalid: {reason}"),
        }
    }
}

/// Episode limits and object handling mode.
#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    /// Hard step budget; an episode never exceeds this many transitions.
    pub t_max: u32,
    /// When set, an action with any out-of-vocabulary object is rejected
    /// whole instead of applying the accepted subset.
    pub strict_objects: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            t_max: 20,
            strict_objects: false,
        }
    }
}

/// A past step in the episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    /// 1-based step number the action was taken at.
    pub step: u32,
    pub event: HistoryEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HistoryEvent {
    Taken(Action),
    /// The policy produced output that did not parse into an action.
    Malformed { reason: String },
}

impl HistoryEntry {
    pub fn line(&self) -> String {
        match &self.event {
            HistoryEvent::Taken(action) => action.history_line(self.step),
            HistoryEvent::Malformed { .. } => {
                format!("step {}, Malformed, Objects: []", self.step)
            }
        }
    }

    pub fn action(&self) -> Option<&Action> {
        match &self.event {
            HistoryEvent::Taken(action) => Some(action),
            HistoryEvent::Malformed { .. } => None,
        }
    }
}

/// Full episode state: query, perception window, focused subgraph, and
/// action history.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    query: Query,
    perception: Vec<TripleId>,
    perception_set: HashSet<TripleId>,
    subgraph: Vec<TripleId>,
    subgraph_set: HashSet<TripleId>,
    /// Rendered `(h, r, t)` strings for the subgraph, in stored order.
    subgraph_texts: Vec<String>,
    history: Vec<HistoryEntry>,
    step: u32,
    terminal: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("action applied to terminal state")]
    TerminalState,
}

/// Fresh state for a query: empty perception, subgraph, and history.
pub fn init_state(query: Query) -> AgentState {
    AgentState {
        query,
        perception: Vec::new(),
        perception_set: HashSet::new(),
        subgraph: Vec::new(),
        subgraph_set: HashSet::new(),
        subgraph_texts: Vec::new(),
        history: Vec::new(),
        step: 0,
        terminal: false,
    }
}

impl AgentState {
    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn perception(&self) -> &[TripleId] {
        &self.perception
    }

    pub fn perception_contains(&self, id: TripleId) -> bool {
        self.perception_set.contains(&id)
    }

    pub fn subgraph(&self) -> &[TripleId] {
        &self.subgraph
    }

    pub fn subgraph_texts(&self) -> &[String] {
        &self.subgraph_texts
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn history_lines(&self) -> Vec<String> {
        self.history.iter().map(|h| h.line()).collect()
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn terminal_flag(&self) -> bool {
        self.terminal
    }

    /// Entity ids usable as Explore targets: resolvable question entities
    /// plus every endpoint of perception and subgraph triples.
    pub fn reachable_entities(&self, graph: &TextualGraph) -> HashSet<EntityId> {
        let mut allowed = HashSet::new();
        for name in &self.query.question_entities {
            if let Ok(Some(id)) = graph.resolve_entity(name) {
                allowed.insert(id);
            }
        }
        for tid in &self.perception {
            let t = graph.triple(*tid);
            allowed.insert(t.head);
            allowed.insert(t.tail);
        }
        for tid in &self.subgraph {
            let t = graph.triple(*tid);
            allowed.insert(t.head);
            allowed.insert(t.tail);
        }
        allowed
    }
}

/// True once Finish was applied or the step budget is exhausted.
pub fn is_terminal(state: &AgentState, config: &EpisodeConfig) -> bool {
    state.terminal || state.step >= config.t_max
}

enum ResolvedObjects {
    Entities(Vec<EntityId>),
    Triples(Vec<TripleId>),
    Answers,
}

fn validate_detailed(
    graph: &TextualGraph,
    state: &AgentState,
    action: &Action,
) -> (Validity, ResolvedObjects) {
    if action.objects().is_empty() {
        return (
            Validity::Invalid {
                reason: "empty objects".to_string(),
            },
            ResolvedObjects::Answers,
        );
    }
    match action {
        Action::Finish { .. } => (Validity::Valid, ResolvedObjects::Answers),
        Action::ExploreEntity { names } => {
            let allowed = state.reachable_entities(graph);
            let mut accepted = Vec::new();
            let mut accepted_ids = Vec::new();
            let mut seen = HashSet::new();
            let mut rejected = Vec::new();
            for name in names {
                match graph.resolve_entity(name) {
                    Err(GraphError::AmbiguousEntity { candidates, .. }) => {
                        rejected.push(RejectedObject {
                            object: name.clone(),
                            reason: format!("ambiguous name; candidates: {candidates:?}"),
                        });
                    }
                    Err(e) => {
                        rejected.push(RejectedObject {
                            object: name.clone(),
                            reason: e.to_string(),
                        });
                    }
                    Ok(None) => {
                        rejected.push(RejectedObject {
                            object: name.clone(),
                            reason: "not an entity of the graph".to_string(),
                        });
                    }
                    Ok(Some(id)) => {
                        if !allowed.contains(&id) {
                            rejected.push(RejectedObject {
                                object: name.clone(),
                                reason: "not among question entities or explored state"
                                    .to_string(),
                            });
                        } else if seen.insert(id) {
                            accepted.push(name.clone());
                            accepted_ids.push(id);
                        } else {
                            // repeated object in the same action: keep once
                            accepted.push(name.clone());
                        }
                    }
                }
            }
            (
                summarize(accepted, rejected),
                ResolvedObjects::Entities(accepted_ids),
            )
        }
        Action::ChooseRelation { triples } => {
            // exact match against the perception serialization first; entity
            // names may contain parentheses or commas
            let mut by_text = std::collections::HashMap::new();
            for tid in &state.perception {
                by_text.insert(graph.triple_text(*tid), *tid);
            }
            let mut accepted = Vec::new();
            let mut accepted_ids = Vec::new();
            let mut seen = HashSet::new();
            let mut rejected = Vec::new();
            for raw in triples {
                let resolved = by_text.get(raw.trim()).copied().or_else(|| {
                    parse_triple_text(raw).and_then(|(h, r, t)| {
                        graph
                            .find_triple(&h, &r, &t)
                            .filter(|tid| state.perception_set.contains(tid))
                    })
                });
                match resolved {
                    Some(tid) => {
                        if seen.insert(tid) {
                            accepted.push(raw.clone());
                            accepted_ids.push(tid);
                        } else {
                            accepted.push(raw.clone());
                        }
                    }
                    None => rejected.push(RejectedObject {
                        object: raw.clone(),
                        reason: "not in perception".to_string(),
                    }),
                }
            }
            (
                summarize(accepted, rejected),
                ResolvedObjects::Triples(accepted_ids),
            )
        }
    }
}

fn summarize(accepted: Vec<String>, rejected: Vec<RejectedObject>) -> Validity {
    if rejected.is_empty() {
        Validity::Valid
    } else if accepted.is_empty() {
        let reasons: Vec<String> = rejected
            .iter()
            .map(|r| format!("{}: {}", r.object, r.reason))
            .collect();
        Validity::Invalid {
            reason: reasons.join("; "),
        }
    } else {
        Validity::Partial { accepted, rejected }
    }
}

/// Parse a `"(head, relation, tail)"` string into its three components.
///
/// The split happens at top-level `", "` boundaries, treating double-quoted
/// segments as opaque; returns `None` unless exactly three parts remain.
pub fn parse_triple_text(raw: &str) -> Option<(String, String, String)> {
    let trimmed = raw.trim();
    let inner = trimmed.strip_prefix('(')?.strip_suffix(')')?;
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let chars: Vec<char> = inner.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            in_quotes = !in_quotes;
            current.push(c);
        } else if c == ',' && !in_quotes && chars.get(i + 1) == Some(&' ') {
            parts.push(current.clone());
            current.clear();
            i += 1; // skip the space
        } else {
            current.push(c);
        }
        i += 1;
    }
    parts.push(current);
    if parts.len() != 3 {
        return None;
    }
    let strip = |s: &str| {
        let s = s.trim();
        // unquote a fully quoted component
        if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
            s[1..s.len() - 1].to_string()
        } else {
            s.to_string()
        }
    };
    Some((strip(&parts[0]), strip(&parts[1]), strip(&parts[2])))
}

/// Check an action against the state without applying it.
pub fn validate_action(graph: &TextualGraph, state: &AgentState, action: &Action) -> Validity {
    if state.terminal {
        return Validity::Invalid {
            reason: "episode already terminal".to_string(),
        };
    }
    validate_detailed(graph, state, action).0
}

/// Apply an action in place. Returns the validity that describes what was
/// actually applied.
pub fn step_action(
    graph: &TextualGraph,
    state: &mut AgentState,
    action: &Action,
    config: &EpisodeConfig,
) -> Result<Validity, EnvError> {
    if state.terminal {
        return Err(EnvError::TerminalState);
    }
    let (validity, resolved) = validate_detailed(graph, state, action);
    let effective = match (&validity, config.strict_objects) {
        (Validity::Partial { rejected, .. }, true) => Validity::Invalid {
            reason: format!(
                "strict mode: {} out-of-vocabulary object(s) rejected",
                rejected.len()
            ),
        },
        _ => validity,
    };

    if !matches!(effective, Validity::Invalid { .. }) {
        match (action, resolved) {
            (Action::ExploreEntity { .. }, ResolvedObjects::Entities(ids)) => {
                for id in ids {
                    for tid in graph.neighborhood(id) {
                        if state.perception_set.insert(tid) {
                            state.perception.push(tid);
                        }
                    }
                }
            }
            (Action::ChooseRelation { .. }, ResolvedObjects::Triples(ids)) => {
                state.subgraph = ids;
                state.subgraph_set = state.subgraph.iter().copied().collect();
                state.subgraph_texts = state
                    .subgraph
                    .iter()
                    .map(|tid| graph.triple_text(*tid))
                    .collect();
            }
            (Action::Finish { .. }, _) => {
                state.terminal = true;
            }
            _ => {}
        }
    }

    state.step += 1;
    state.history.push(HistoryEntry {
        step: state.step,
        event: HistoryEvent::Taken(action.clone()),
    });
    if state.step >= config.t_max {
        state.terminal = true;
    }
    Ok(effective)
}

/// Pure transition: clone, apply, return the successor.
pub fn apply_action(
    graph: &TextualGraph,
    state: &AgentState,
    action: &Action,
    config: &EpisodeConfig,
) -> Result<(AgentState, Validity), EnvError> {
    let mut next = state.clone();
    let validity = step_action(graph, &mut next, action, config)?;
    Ok((next, validity))
}

/// Record a policy output that produced no action; consumes a step.
pub fn note_malformed(
    state: &mut AgentState,
    reason: &str,
    config: &EpisodeConfig,
) -> Result<(), EnvError> {
    if state.terminal {
        return Err(EnvError::TerminalState);
    }
    state.step += 1;
    state.history.push(HistoryEntry {
        step: state.step,
        event: HistoryEvent::Malformed {
            reason: reason.to_string(),
        },
    });
    if state.step >= config.t_max {
        state.terminal = true;
    }
    Ok(())
}

/// A prompt template with `{question}`, `{entities}`, `{graph_state}` and
/// `{history}` placeholders; everything else is emitted literally.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(text: String) -> Self {
        Self { text }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            text: std::fs::read_to_string(path)?,
        })
    }

    pub fn render(&self, state: &AgentState) -> String {
        self.text
            .replace("{question}", &state.query.question)
            .replace("{entities}", &state.query.question_entities.join("\n"))
            .replace("{graph_state}", &state.subgraph_texts.join("\n"))
            .replace("{history}", &state.history_lines().join("\n"))
    }
}

/// Serialize a state with the default template. Equal states produce
/// byte-identical text.
pub fn serialize_state(state: &AgentState) -> String {
    PromptTemplate::default().render(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TextualGraph;

    fn toy_graph() -> TextualGraph {
        TextualGraph::from_rows(&[
            ("A", "likes", "B"),
            ("B", "knows", "C"),
            ("A", "hates", "C"),
            ("C", "sees", "D"),
        ])
    }

    fn toy_query() -> Query {
        Query {
            id: "q0".to_string(),
            question: "who does A like".to_string(),
            question_entities: vec!["A".to_string()],
            gold_answers: vec!["B".to_string()],
        }
    }

    #[test]
    fn init_state_is_empty_and_pure() {
        let s1 = init_state(toy_query());
        let s2 = init_state(toy_query());
        assert_eq!(s1, s2);
        assert!(s1.perception().is_empty());
        assert!(s1.subgraph().is_empty());
        assert_eq!(s1.step(), 0);
        assert!(!s1.terminal_flag());
    }

    #[test]
    fn explore_grows_perception_choose_replaces_subgraph() {
        let g = toy_graph();
        let cfg = EpisodeConfig::default();
        let mut s = init_state(toy_query());

        let v = step_action(
            &g,
            &mut s,
            &Action::ExploreEntity {
                names: vec!["A".to_string()],
            },
            &cfg,
        )
        .unwrap();
        assert!(v.is_valid());
        assert_eq!(s.perception().len(), 2); // (A, likes, B), (A, hates, C)
        assert!(s.subgraph().is_empty());

        let v = step_action(
            &g,
            &mut s,
            &Action::ChooseRelation {
                triples: vec!["(A, likes, B)".to_string()],
            },
            &cfg,
        )
        .unwrap();
        assert!(v.is_valid());
        assert_eq!(s.subgraph_texts(), ["(A, likes, B)"]);

        // a second choose replaces, not unions
        let v = step_action(
            &g,
            &mut s,
            &Action::ChooseRelation {
                triples: vec!["(A, hates, C)".to_string()],
            },
            &cfg,
        )
        .unwrap();
        assert!(v.is_valid());
        assert_eq!(s.subgraph_texts(), ["(A, hates, C)"]);
        assert_eq!(s.perception().len(), 2);
    }

    #[test]
    fn choose_outside_perception_is_invalid_and_consumes_step() {
        let g = toy_graph();
        let cfg = EpisodeConfig::default();
        let mut s = init_state(toy_query());
        let v = step_action(
            &g,
            &mut s,
            &Action::ChooseRelation {
                triples: vec!["(B, knows, C)".to_string()],
            },
            &cfg,
        )
        .unwrap();
        assert!(matches!(v, Validity::Invalid { .. }));
        assert!(s.subgraph().is_empty());
        assert_eq!(s.step(), 1);
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn explore_partial_accepts_known_rejects_unknown() {
        let g = toy_graph();
        let s = init_state(toy_query());
        let v = validate_action(
            &g,
            &s,
            &Action::ExploreEntity {
                names: vec!["A".to_string(), "Made Up Person".to_string()],
            },
        );
        match v {
            Validity::Partial { accepted, rejected } => {
                assert_eq!(accepted, ["A"]);
                assert_eq!(rejected.len(), 1);
            }
            other => panic!("expected partial, got {other:?}"),
        }
    }

    #[test]
    fn explore_unreached_entity_is_rejected() {
        let g = toy_graph();
        let s = init_state(toy_query());
        // D exists in the graph but is not reachable from the empty state
        let v = validate_action(
            &g,
            &s,
            &Action::ExploreEntity {
                names: vec!["D".to_string()],
            },
        );
        assert!(matches!(v, Validity::Invalid { .. }));
    }

    #[test]
    fn strict_mode_rejects_whole_partial_action() {
        let g = toy_graph();
        let cfg = EpisodeConfig {
            strict_objects: true,
            ..EpisodeConfig::default()
        };
        let mut s = init_state(toy_query());
        let v = step_action(
            &g,
            &mut s,
            &Action::ExploreEntity {
                names: vec!["A".to_string(), "Made Up Person".to_string()],
            },
            &cfg,
        )
        .unwrap();
        assert!(matches!(v, Validity::Invalid { .. }));
        assert!(s.perception().is_empty());
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn finish_changes_only_history_and_terminal() {
        let g = toy_graph();
        let cfg = EpisodeConfig::default();
        let mut s = init_state(toy_query());
        step_action(
            &g,
            &mut s,
            &Action::ExploreEntity {
                names: vec!["A".to_string()],
            },
            &cfg,
        )
        .unwrap();
        let before_perception = s.perception().to_vec();
        let before_subgraph = s.subgraph().to_vec();
        let v = step_action(
            &g,
            &mut s,
            &Action::Finish {
                answers: vec!["B".to_string()],
            },
            &cfg,
        )
        .unwrap();
        assert!(v.is_valid());
        assert!(s.terminal_flag());
        assert_eq!(s.perception(), before_perception);
        assert_eq!(s.subgraph(), before_subgraph);
        assert!(step_action(&g, &mut s, &Action::Finish { answers: vec!["x".into()] }, &cfg).is_err());
    }

    #[test]
    fn t_max_forces_terminal() {
        let g = toy_graph();
        let cfg = EpisodeConfig {
            t_max: 2,
            ..EpisodeConfig::default()
        };
        let mut s = init_state(toy_query());
        let explore = Action::ExploreEntity {
            names: vec!["A".to_string()],
        };
        step_action(&g, &mut s, &explore, &cfg).unwrap();
        assert!(!is_terminal(&s, &cfg));
        step_action(&g, &mut s, &explore, &cfg).unwrap();
        assert!(is_terminal(&s, &cfg));
    }

    #[test]
    fn empty_objects_are_invalid() {
        let g = toy_graph();
        let s = init_state(toy_query());
        let v = validate_action(&g, &s, &Action::Finish { answers: vec![] });
        assert!(matches!(v, Validity::Invalid { .. }));
    }

    #[test]
    fn serialization_is_deterministic_and_sections_render() {
        let g = toy_graph();
        let cfg = EpisodeConfig::default();
        let mut a = init_state(toy_query());
        let mut b = init_state(toy_query());
        let empty = serialize_state(&a);
        assert!(empty.contains("Question:\nwho does A like"));
        assert!(empty.contains("Current Graph State:\n\n"));
        assert!(empty.contains("Action History:\n\n"));

        for s in [&mut a, &mut b] {
            step_action(
                &g,
                s,
                &Action::ExploreEntity {
                    names: vec!["A".to_string()],
                },
                &cfg,
            )
            .unwrap();
            step_action(
                &g,
                s,
                &Action::ChooseRelation {
                    triples: vec!["(A, likes, B)".to_string()],
                },
                &cfg,
            )
            .unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(serialize_state(&a), serialize_state(&b));
        let text = serialize_state(&a);
        assert!(text.contains("Current Graph State:\n(A, likes, B)\n"));
        assert!(text.contains("step 1, Explore Entity, Objects: ['A']"));
    }

    #[test]
    fn triple_text_parsing_handles_quotes() {
        assert_eq!(
            parse_triple_text("(A, likes, B)"),
            Some(("A".into(), "likes".into(), "B".into()))
        );
        assert_eq!(
            parse_triple_text("(\"Paris, Texas\", directed_by, Wim Wenders)"),
            Some(("Paris, Texas".into(), "directed_by".into(), "Wim Wenders".into()))
        );
        assert_eq!(parse_triple_text("not a triple"), None);
        assert_eq!(parse_triple_text("(a, b)"), None);
    }

    #[test]
    fn action_decode_rules() {
        let a = Action::from_kind_objects("explore ENTITY", vec!["X".into()]).unwrap();
        assert_eq!(a.kind_name(), Action::EXPLORE_NAME);
        assert!(matches!(
            Action::from_kind_objects("Teleport", vec!["X".into()]),
            Err(ActionDecodeError::UnknownAction(_))
        ));
        assert!(matches!(
            Action::from_kind_objects("Finish", vec![]),
            Err(ActionDecodeError::EmptyObjects)
        ));
    }

    #[test]
    fn malformed_note_consumes_step() {
        let cfg = EpisodeConfig::default();
        let mut s = init_state(toy_query());
        note_malformed(&mut s, "no fenced block", &cfg).unwrap();
        assert_eq!(s.step(), 1);
        assert_eq!(s.history_lines(), ["step 1, Malformed, Objects: []"]);
    }
}
