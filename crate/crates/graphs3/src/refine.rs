//! Trajectory refinement and stepwise reward labeling.
//!
//! Refinement replaces a retained trajectory with its shortest feasible
//! answer-consistent subsequence: every kept action must validate as Valid
//! at its replayed step, and the final subgraph must still carry the gold
//! answers. The refined trajectory yields the golden subgraph and golden
//! explore set that ground the stepwise reward function.

use crate::env::{
    init_state, parse_triple_text, serialize_state, step_action, validate_action, Action,
    ActionJson, AgentState, EpisodeConfig, HistoryEvent, Query, Validity,
};
use crate::graph::{EntityId, TextualGraph, TripleId};
use crate::norm::{normalize_answer, normalize_entity};
use crate::policy::{ParseError, RemoteConfig, RemotePolicy};
use crate::synthesis::Trajectory;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

/// Replay verdict for an action list.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub final_state: AgentState,
    pub feasible: bool,
    /// Index into the action list of the first non-Valid action.
    pub first_infeasible: Option<usize>,
}

/// Apply actions from a fresh state; feasibility demands strict Valid at
/// every step. Replay stops at the first infeasible action.
pub fn replay(
    graph: &TextualGraph,
    query: &Query,
    actions: &[Action],
    config: &EpisodeConfig,
) -> ReplayOutcome {
    // the step budget never cuts a replay short: candidates are at most as
    // long as a source that already fit the budget
    let config = EpisodeConfig {
        t_max: config.t_max.max(actions.len() as u32),
        ..config.clone()
    };
    let mut state = init_state(query.clone());
    for (i, action) in actions.iter().enumerate() {
        if state.terminal_flag() {
            return ReplayOutcome {
                final_state: state,
                feasible: false,
                first_infeasible: Some(i),
            };
        }
        let validity = validate_action(graph, &state, action);
        if !validity.is_valid() {
            return ReplayOutcome {
                final_state: state,
                feasible: false,
                first_infeasible: Some(i),
            };
        }
        step_action(graph, &mut state, action, &config).expect("state checked non-terminal");
    }
    ReplayOutcome {
        final_state: state,
        feasible: true,
        first_infeasible: None,
    }
}

/// How answer consistency of a final state is judged.
pub enum AnswerOracle {
    /// Every gold answer appears (normalized) as an endpoint of the final
    /// subgraph. Deterministic and free.
    Containment,
    /// A remote generator answers the question from the final subgraph;
    /// consistent iff some gold answer occurs in its reply.
    RemoteLlm { config: RemoteConfig },
}

impl AnswerOracle {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnswerOracle::Containment => "containment",
            AnswerOracle::RemoteLlm { .. } => "remote_llm",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error("trajectory not retained")]
    NotRetained,
    #[error("trajectory does not end with Finish")]
    NoTerminalFinish,
    #[error("no feasible answer-consistent subsequence exists")]
    NoFeasibleSubsequence,
    #[error("answer oracle indeterminate: {0}")]
    OracleIndeterminate(String),
}

/// Prompt for the remote answer oracle; kept minimal and fully determined
/// by (question, subgraph).
fn generation_prompt(query: &Query, state: &AgentState) -> String {
    format!(
        "Answer the question using only the facts listed below.\n\nQuestion: {}\n\nFacts:\n{}\n\nAnswer with the entity name(s) only.",
        query.question,
        state.subgraph_texts().join("\n")
    )
}

/// Decide whether the final state still yields the gold answers.
pub fn answer_consistent(
    oracle: &AnswerOracle,
    query: &Query,
    final_state: &AgentState,
    graph: &TextualGraph,
) -> Result<bool, RefineError> {
    match oracle {
        AnswerOracle::Containment => {
            let mut endpoints = HashSet::new();
            for tid in final_state.subgraph() {
                let t = graph.triple(*tid);
                endpoints.insert(normalize_answer(graph.entity_name(t.head)));
                endpoints.insert(normalize_answer(graph.entity_name(t.tail)));
            }
            Ok(query
                .gold_answers
                .iter()
                .all(|g| endpoints.contains(&normalize_answer(g))))
        }
        AnswerOracle::RemoteLlm { config } => {
            let client = RemotePolicy::new(config.clone());
            let reply = client
                .complete_prompt(&generation_prompt(query, final_state))
                .map_err(|e| RefineError::OracleIndeterminate(e.to_string()))?;
            let folded = normalize_answer(&reply);
            Ok(query
                .gold_answers
                .iter()
                .any(|g| folded.contains(&normalize_answer(g))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineMode {
    Exact,
    Greedy,
}

impl RefineMode {
    pub fn name(&self) -> &'static str {
        match self {
            RefineMode::Exact => "exact",
            RefineMode::Greedy => "greedy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exact" => Some(RefineMode::Exact),
            "greedy" => Some(RefineMode::Greedy),
            _ => None,
        }
    }
}

/// The minimal trajectory plus the golden artifacts rewards are computed
/// against.
#[derive(Debug, Clone)]
pub struct RefinedTrajectory {
    pub query: Query,
    pub actions: Vec<Action>,
    pub kept_indices: Vec<usize>,
    pub source_len: usize,
    pub final_state: AgentState,
    pub golden_subgraph: Vec<TripleId>,
    pub golden_explore: Vec<EntityId>,
    pub mode_used: RefineMode,
    pub candidates_evaluated: usize,
}

impl RefinedTrajectory {
    pub fn golden_subgraph_texts(&self, graph: &TextualGraph) -> Vec<String> {
        self.golden_subgraph
            .iter()
            .map(|tid| graph.triple_text(*tid))
            .collect()
    }

    pub fn golden_explore_names(&self, graph: &TextualGraph) -> Vec<String> {
        self.golden_explore
            .iter()
            .map(|id| graph.entity_name(*id).to_string())
            .collect()
    }
}

/// Entities explored along an action list, in resolution order.
fn explored_entities(graph: &TextualGraph, query: &Query, actions: &[Action]) -> Vec<EntityId> {
    // re-resolve in replay context so normalized fallbacks match what the
    // transition accepted
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let config = EpisodeConfig {
        t_max: actions.len() as u32 + 1,
        ..EpisodeConfig::default()
    };
    let mut state = init_state(query.clone());
    for action in actions {
        if let Action::ExploreEntity { names } = action {
            for name in names {
                if let Ok(Some(id)) = graph.resolve_entity(name) {
                    if seen.insert(id) {
                        out.push(id);
                    }
                }
            }
        }
        let _ = step_action(graph, &mut state, action, &config);
    }
    out
}

struct ExactSearch<'a> {
    graph: &'a TextualGraph,
    query: &'a Query,
    oracle: &'a AnswerOracle,
    actions: &'a [Action],
    config: EpisodeConfig,
    candidates: usize,
}

impl<'a> ExactSearch<'a> {
    /// Lexicographic DFS over kept-index combinations of a fixed length.
    /// A branch dies as soon as a kept action fails to validate, which
    /// prunes every combination sharing that prefix.
    fn dfs(
        &mut self,
        pos: usize,
        need: usize,
        state: &AgentState,
    ) -> Result<Option<Vec<usize>>, RefineError> {
        let last = self.actions.len() - 1;
        if need == 0 {
            let finish = &self.actions[last];
            self.candidates += 1;
            if !validate_action(self.graph, state, finish).is_valid() {
                return Ok(None);
            }
            let mut final_state = state.clone();
            step_action(self.graph, &mut final_state, finish, &self.config)
                .expect("validated non-terminal");
            if answer_consistent(self.oracle, self.query, &final_state, self.graph)? {
                return Ok(Some(vec![last]));
            }
            return Ok(None);
        }
        if last.saturating_sub(pos) < need {
            return Ok(None);
        }
        for i in pos..last {
            if !validate_action(self.graph, state, &self.actions[i]).is_valid() {
                self.candidates += 1;
                continue;
            }
            let mut next = state.clone();
            step_action(self.graph, &mut next, &self.actions[i], &self.config)
                .expect("validated non-terminal");
            if let Some(mut rest) = self.dfs(i + 1, need - 1, &next)? {
                let mut kept = vec![i];
                kept.append(&mut rest);
                return Ok(Some(kept));
            }
        }
        Ok(None)
    }
}

/// Shrink a retained trajectory to its shortest feasible answer-consistent
/// subsequence. Exact mode enumerates subsequences in increasing length
/// with prefix-feasibility pruning and is used up to `max_exact_len` source
/// actions; longer sources (or an explicit greedy request) use backward
/// elimination. The source's trailing Finish is always the last action.
pub fn refine(
    graph: &TextualGraph,
    trajectory: &Trajectory,
    oracle: &AnswerOracle,
    mode: RefineMode,
    max_exact_len: usize,
    config: &EpisodeConfig,
) -> Result<RefinedTrajectory, RefineError> {
    if !trajectory.retained {
        return Err(RefineError::NotRetained);
    }
    let actions = trajectory.actions();
    if !matches!(actions.last(), Some(Action::Finish { .. })) {
        return Err(RefineError::NoTerminalFinish);
    }
    let query = &trajectory.query;
    let n = actions.len();
    let mode_used = match mode {
        RefineMode::Exact if n <= max_exact_len => RefineMode::Exact,
        _ => RefineMode::Greedy,
    };

    let (kept, candidates) = match mode_used {
        RefineMode::Exact => {
            let mut search = ExactSearch {
                graph,
                query,
                oracle,
                actions: &actions,
                config: config.clone(),
                candidates: 0,
            };
            let mut found = None;
            for len in 1..=n {
                let start = init_state(query.clone());
                if let Some(kept) = search.dfs(0, len - 1, &start)? {
                    found = Some(kept);
                    break;
                }
            }
            (found.ok_or(RefineError::NoFeasibleSubsequence)?, search.candidates)
        }
        RefineMode::Greedy => {
            let mut candidates = 0usize;
            let mut kept: Vec<usize> = (0..n).collect();
            let consistent_replay = |kept: &[usize],
                                     candidates: &mut usize|
             -> Result<bool, RefineError> {
                *candidates += 1;
                let acts: Vec<Action> = kept.iter().map(|i| actions[*i].clone()).collect();
                let outcome = replay(graph, query, &acts, config);
                if !outcome.feasible {
                    return Ok(false);
                }
                answer_consistent(oracle, query, &outcome.final_state, graph)
            };
            // a source with non-Valid steps (partial applications during the
            // live run) is repaired by dropping every action that fails a
            // forward replay before elimination starts
            if !consistent_replay(&kept, &mut candidates)? {
                let mut repaired = Vec::new();
                let replay_config = EpisodeConfig {
                    t_max: n as u32 + 1,
                    ..config.clone()
                };
                let mut state = init_state(query.clone());
                for (i, action) in actions.iter().enumerate() {
                    if validate_action(graph, &state, action).is_valid() {
                        step_action(graph, &mut state, action, &replay_config)
                            .expect("validated non-terminal");
                        repaired.push(i);
                    }
                }
                kept = repaired;
                if kept.is_empty() || !consistent_replay(&kept, &mut candidates)? {
                    return Err(RefineError::NoFeasibleSubsequence);
                }
            }
            loop {
                let mut changed = false;
                // latest first; never drop the final Finish
                let mut pos = kept.len().saturating_sub(1);
                while pos > 0 {
                    pos -= 1;
                    let mut shorter = kept.clone();
                    shorter.remove(pos);
                    if consistent_replay(&shorter, &mut candidates)? {
                        kept = shorter;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            (kept, candidates)
        }
    };

    let mut kept_actions: Vec<Action> = kept.iter().map(|i| actions[*i].clone()).collect();
    // a hit-retained source may have finished with a superset of gold; the
    // golden trajectory ends with the equivalent Finish over the final
    // subgraph, which is the gold answer set itself
    if let Some(Action::Finish { answers }) = kept_actions.last_mut() {
        let finals: HashSet<String> = answers.iter().map(|a| normalize_answer(a)).collect();
        let golds: HashSet<String> =
            query.gold_answers.iter().map(|a| normalize_answer(a)).collect();
        if finals != golds {
            *answers = query.gold_answers.clone();
        }
    }
    let outcome = replay(graph, query, &kept_actions, config);
    debug_assert!(outcome.feasible);
    let golden_explore = explored_entities(graph, query, &kept_actions);
    Ok(RefinedTrajectory {
        query: query.clone(),
        golden_subgraph: outcome.final_state.subgraph().to_vec(),
        final_state: outcome.final_state,
        actions: kept_actions,
        kept_indices: kept,
        source_len: n,
        golden_explore,
        mode_used,
        candidates_evaluated: candidates,
    })
}

/// Reward constants; 0 < c1 < c2 < 1.
#[derive(Debug, Clone, Copy)]
pub struct RewardConfig {
    pub c1: f64,
    pub c2: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { c1: 0.2, c2: 0.6 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(format!(
                "reward constants must satisfy 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardBranch {
    Invalid,
    FormatOnly,
    Partial,
    Exact,
}

impl RewardBranch {
    pub fn name(&self) -> &'static str {
        match self {
            RewardBranch::Invalid => "invalid",
            RewardBranch::FormatOnly => "format_only",
            RewardBranch::Partial => "partial",
            RewardBranch::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardLabel {
    pub step: u32,
    pub value: f64,
    pub branch: RewardBranch,
    pub detail: String,
}

fn label(step: u32, value: f64, branch: RewardBranch, detail: impl Into<String>) -> RewardLabel {
    RewardLabel {
        step,
        value,
        branch,
        detail: detail.into(),
    }
}

/// Canonical form of a Choose object for set comparison.
fn canonical_triple(raw: &str) -> String {
    match parse_triple_text(raw) {
        Some((h, r, t)) => format!(
            "{}|{}|{}",
            normalize_entity(&h),
            normalize_entity(&r),
            normalize_entity(&t)
        ),
        None => normalize_entity(raw),
    }
}

fn object_set(action: &Action, gold_answers: &[String]) -> HashSet<String> {
    match action {
        Action::ExploreEntity { names } => names.iter().map(|n| normalize_entity(n)).collect(),
        Action::ChooseRelation { triples } => triples.iter().map(|t| canonical_triple(t)).collect(),
        Action::Finish { answers } => {
            let _ = gold_answers;
            answers.iter().map(|a| normalize_answer(a)).collect()
        }
    }
}

/// Exact-match test between a predicted action and the golden action at the
/// aligned step. Finish compares against gold answers.
fn matches_golden(predicted: &Action, golden: &Action, gold_answers: &[String]) -> bool {
    if std::mem::discriminant(predicted) != std::mem::discriminant(golden) {
        return false;
    }
    if let Action::Finish { answers } = predicted {
        let predicted_set: HashSet<String> = answers.iter().map(|a| normalize_answer(a)).collect();
        let gold_set: HashSet<String> = gold_answers.iter().map(|a| normalize_answer(a)).collect();
        return predicted_set == gold_set;
    }
    object_set(predicted, gold_answers) == object_set(golden, gold_answers)
}

/// Number of leading golden actions the rollout has matched, and whether it
/// has diverged. Malformed steps neither advance nor diverge the path.
fn golden_alignment(state: &AgentState, refined: &RefinedTrajectory) -> (usize, bool) {
    let mut matched = 0usize;
    for entry in state.history() {
        if let HistoryEvent::Taken(action) = &entry.event {
            match refined.actions.get(matched) {
                Some(golden)
                    if matches_golden(action, golden, &refined.query.gold_answers) =>
                {
                    matched += 1;
                }
                _ => return (matched, true),
            }
        }
    }
    (matched, false)
}

/// Grade one predicted decision against the golden trajectory. Branches in
/// order: invalid (0), exact (1.0), partial (c2), format_only (c1).
pub fn step_reward(
    graph: &TextualGraph,
    predicted: Result<&Action, &ParseError>,
    state: &AgentState,
    refined: &RefinedTrajectory,
    config: &RewardConfig,
) -> RewardLabel {
    let step = state.step();
    let action = match predicted {
        Err(e) => return label(step, 0.0, RewardBranch::Invalid, e.to_string()),
        Ok(action) => action,
    };
    let validity = validate_action(graph, state, action);
    if let Validity::Invalid { reason } = validity {
        return label(step, 0.0, RewardBranch::Invalid, reason);
    }

    let (matched, diverged) = golden_alignment(state, refined);
    if !diverged {
        if let Some(golden) = refined.actions.get(matched) {
            if matches_golden(action, golden, &refined.query.gold_answers) {
                return label(
                    step,
                    1.0,
                    RewardBranch::Exact,
                    format!("matches golden action {matched}"),
                );
            }
        }
    }

    let golden_variant_at_step = (!diverged)
        .then(|| refined.actions.get(matched))
        .flatten()
        .map(std::mem::discriminant);
    let variant_ok = match golden_variant_at_step {
        // on the golden path, partial credit requires the golden variant
        Some(d) => d == std::mem::discriminant(action),
        // after divergence comparisons are path-free
        None => true,
    };
    if variant_ok {
        let partial = match action {
            Action::ExploreEntity { names } => {
                let golden: HashSet<EntityId> = refined.golden_explore.iter().copied().collect();
                names
                    .iter()
                    .any(|n| matches!(graph.resolve_entity(n), Ok(Some(id)) if golden.contains(&id)))
            }
            Action::ChooseRelation { triples } => {
                let allowed: HashSet<String> = refined
                    .golden_subgraph
                    .iter()
                    .filter(|tid| state.perception_contains(**tid))
                    .map(|tid| canonical_triple(&graph.triple_text(*tid)))
                    .collect();
                !triples.is_empty()
                    && triples.iter().all(|t| allowed.contains(&canonical_triple(t)))
            }
            Action::Finish { answers } => {
                let gold: HashSet<String> = refined
                    .query
                    .gold_answers
                    .iter()
                    .map(|a| normalize_answer(a))
                    .collect();
                answers.iter().any(|a| gold.contains(&normalize_answer(a)))
            }
        };
        if partial {
            return label(
                step,
                config.c2,
                RewardBranch::Partial,
                "overlaps golden artifacts",
            );
        }
    }

    label(
        step,
        config.c1,
        RewardBranch::FormatOnly,
        "well-formed but off the golden path",
    )
}

/// One D_RL line: a golden-path prompt/action pair with its reward.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RlRecord {
    pub query_id: String,
    pub step: u32,
    pub prompt: String,
    pub action: ActionJson,
    pub reward: f64,
    pub branch: RewardBranch,
}

/// Label every golden action (exact, 1.0) and produce the D_RL records with
/// prompts serialized along the golden path.
pub fn label_steps(
    graph: &TextualGraph,
    refined: &RefinedTrajectory,
    config: &RewardConfig,
) -> (Vec<RewardLabel>, Vec<RlRecord>) {
    let episode_config = EpisodeConfig {
        t_max: refined.actions.len() as u32 + 1,
        ..EpisodeConfig::default()
    };
    let mut labels = Vec::with_capacity(refined.actions.len());
    let mut records = Vec::with_capacity(refined.actions.len());
    let mut state = init_state(refined.query.clone());
    for (i, action) in refined.actions.iter().enumerate() {
        let reward = step_reward(graph, Ok(action), &state, refined, config);
        debug_assert_eq!(reward.branch, RewardBranch::Exact);
        records.push(RlRecord {
            query_id: refined.query.id.clone(),
            step: i as u32,
            prompt: serialize_state(&state),
            action: action.to_json(),
            reward: reward.value,
            branch: reward.branch,
        });
        labels.push(reward);
        step_action(graph, &mut state, action, &episode_config)
            .expect("golden actions replay feasibly");
    }
    (labels, records)
}

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Write D_RL records as jsonl; returns the count written.
pub fn emit_rl(records: &[RlRecord], path: &Path) -> Result<usize, EmitError> {
    let file = std::fs::File::create(path).map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("rl record serialization cannot fail");
        writeln!(out, "{line}").map_err(|e| EmitError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    out.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(records.len())
}

/// Per-trajectory refinement report line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReportEntry {
    pub query_id: String,
    pub source_len: usize,
    pub refined_len: usize,
    pub mode_requested: String,
    pub mode_used: String,
    pub oracle: String,
    pub candidates_evaluated: usize,
    pub kept_indices: Vec<usize>,
}

/// Serializable form of a refined trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedRecord {
    pub query_id: String,
    pub kept_indices: Vec<usize>,
    pub source_len: usize,
    pub actions: Vec<ActionJson>,
    pub golden_subgraph: Vec<String>,
    pub golden_explore_set: Vec<String>,
}

impl RefinedRecord {
    pub fn from_refined(refined: &RefinedTrajectory, graph: &TextualGraph) -> Self {
        Self {
            query_id: refined.query.id.clone(),
            kept_indices: refined.kept_indices.clone(),
            source_len: refined.source_len,
            actions: refined.actions.iter().map(|a| a.to_json()).collect(),
            golden_subgraph: refined.golden_subgraph_texts(graph),
            golden_explore_set: refined.golden_explore_names(graph),
        }
    }
}

/// Write refined trajectories as jsonl; returns the count written.
pub fn emit_refined(records: &[RefinedRecord], path: &Path) -> Result<usize, EmitError> {
    let file = std::fs::File::create(path).map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = std::io::BufWriter::new(file);
    for record in records {
        let line =
            serde_json::to_string(record).expect("refined record serialization cannot fail");
        writeln!(out, "{line}").map_err(|e| EmitError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    out.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(records.len())
}

pub fn load_refined(path: &Path) -> Result<Vec<RefinedRecord>, EmitError> {
    let data = std::fs::read_to_string(path).map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut records = Vec::new();
    for line in data.lines().filter(|l| !l.trim().is_empty()) {
        let record: RefinedRecord = serde_json::from_str(line).map_err(|e| EmitError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Reconstruct a refined trajectory from persisted actions by replaying
/// them; the actions must be strictly feasible and end with Finish.
pub fn rebuild_refined(
    graph: &TextualGraph,
    query: &Query,
    record: &RefinedRecord,
    config: &EpisodeConfig,
) -> Result<RefinedTrajectory, RefineError> {
    let mut actions = Vec::with_capacity(record.actions.len());
    for a in &record.actions {
        actions.push(
            Action::from_json(a)
                .map_err(|e| RefineError::OracleIndeterminate(e.to_string()))?,
        );
    }
    if !matches!(actions.last(), Some(Action::Finish { .. })) {
        return Err(RefineError::NoTerminalFinish);
    }
    let outcome = replay(graph, query, &actions, config);
    if !outcome.feasible {
        return Err(RefineError::NoFeasibleSubsequence);
    }
    let golden_explore = explored_entities(graph, query, &actions);
    Ok(RefinedTrajectory {
        query: query.clone(),
        golden_subgraph: outcome.final_state.subgraph().to_vec(),
        final_state: outcome.final_state,
        actions,
        kept_indices: record.kept_indices.clone(),
        source_len: record.source_len,
        golden_explore,
        mode_used: RefineMode::Greedy,
        candidates_evaluated: 0,
    })
}
