//! In-memory textual graph store.
//!
//! Loads (head, relation, tail) triples from tsv or jsonl, interns entity and
//! relation names into dense ids, and serves neighborhood queries from a
//! bidirectional adjacency index. The store is immutable after load, so it can
//! be shared read-only across any number of concurrent episode runners.
//!
//! Triple order everywhere is first-occurrence file order; that ordering is
//! what makes downstream state serialization byte-stable.

use crate::norm::normalize_entity;
use serde::Deserialize;
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// Dense handle for an interned entity name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Dense handle for an interned relation name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

/// Position of a triple in the graph's first-occurrence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleId(pub u32);

/// One (head, relation, tail) edge, by interned ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Input file format for [`TextualGraph::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    /// One triple per line: `head\trelation\ttail`, no header.
    Tsv,
    /// One JSON object per line with string fields `head`, `relation`, `tail`.
    Jsonl,
}

impl GraphFormat {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tsv" => Some(Self::Tsv),
            "jsonl" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed row: {detail}")]
    MalformedRow {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("{path}: empty graph file (no triples)")]
    EmptyFile { path: String },
    #[error("entity name {name:?} is ambiguous after normalization; candidates: {candidates:?}")]
    AmbiguousEntity {
        name: String,
        candidates: Vec<String>,
    },
}

/// Basic size counters for a loaded graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub entity_count: usize,
    pub relation_count: usize,
    pub triple_count: usize,
    pub max_degree: usize,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entity_count={}", self.entity_count)?;
        writeln!(f, "relation_count={}", self.relation_count)?;
        writeln!(f, "triple_count={}", self.triple_count)?;
        write!(f, "max_degree={}", self.max_degree)
    }
}

#[derive(Deserialize)]
struct JsonlRow {
    head: Option<String>,
    relation: Option<String>,
    tail: Option<String>,
}

/// Immutable triple store with interned names and a bidirectional
/// adjacency index.
#[derive(Debug)]
pub struct TextualGraph {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    triples: Vec<Triple>,
    entity_exact: HashMap<String, EntityId>,
    entity_normalized: HashMap<String, Vec<EntityId>>,
    relation_exact: HashMap<String, RelationId>,
    triple_lookup: HashMap<Triple, TripleId>,
    out_index: Vec<Vec<TripleId>>,
    in_index: Vec<Vec<TripleId>>,
    duplicates_dropped: usize,
}

impl TextualGraph {
    /// Load a graph file, interning rows in file order and deduplicating
    /// repeated triples (the dropped count is kept on the graph).
    pub fn load(path: &Path, format: GraphFormat) -> Result<Self, GraphError> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| GraphError::Io {
            path: display.clone(),
            source,
        })?;
        let reader = BufReader::new(file);

        let mut builder = GraphBuilder::default();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| GraphError::Io {
                path: display.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let (head, relation, tail) = match format {
                GraphFormat::Tsv => {
                    let fields: Vec<&str> = line.split('\t').collect();
                    if fields.len() != 3 {
                        return Err(GraphError::MalformedRow {
                            path: display,
                            line: line_no,
                            detail: format!("expected 3 tab-separated fields, got {}", fields.len()),
                        });
                    }
                    (
                        fields[0].to_string(),
                        fields[1].to_string(),
                        fields[2].to_string(),
                    )
                }
                GraphFormat::Jsonl => {
                    let row: JsonlRow =
                        serde_json::from_str(&line).map_err(|e| GraphError::MalformedRow {
                            path: display.clone(),
                            line: line_no,
                            detail: e.to_string(),
                        })?;
                    let field = |name: &str, value: Option<String>| {
                        value.ok_or_else(|| GraphError::MalformedRow {
                            path: display.clone(),
                            line: line_no,
                            detail: format!("field missing: {name}"),
                        })
                    };
                    (
                        field("head", row.head)?,
                        field("relation", row.relation)?,
                        field("tail", row.tail)?,
                    )
                }
            };
            builder.add(head, relation, tail);
        }

        if builder.triples.is_empty() {
            return Err(GraphError::EmptyFile { path: display });
        }
        Ok(builder.finish())
    }

    /// Build a graph from in-memory rows; used by tests and generators.
    pub fn from_rows<S: AsRef<str>>(rows: &[(S, S, S)]) -> Self {
        let mut builder = GraphBuilder::default();
        for (h, r, t) in rows {
            builder.add(
                h.as_ref().to_string(),
                r.as_ref().to_string(),
                t.as_ref().to_string(),
            );
        }
        builder.finish()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Duplicate rows dropped during load.
    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id.0 as usize]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id.0 as usize]
    }

    pub fn triple(&self, id: TripleId) -> Triple {
        self.triples[id.0 as usize]
    }

    pub fn triples(&self) -> impl Iterator<Item = (TripleId, Triple)> + '_ {
        self.triples
            .iter()
            .enumerate()
            .map(|(i, t)| (TripleId(i as u32), *t))
    }

    pub fn all_triple_ids(&self) -> Vec<TripleId> {
        (0..self.triples.len() as u32).map(TripleId).collect()
    }

    /// Render a triple as `(head, relation, tail)`.
    pub fn triple_text(&self, id: TripleId) -> String {
        let t = self.triple(id);
        format!(
            "({}, {}, {})",
            self.entity_name(t.head),
            self.relation_name(t.relation),
            self.entity_name(t.tail)
        )
    }

    /// Look up a triple by exact component names.
    pub fn find_triple(&self, head: &str, relation: &str, tail: &str) -> Option<TripleId> {
        let head = *self.entity_exact.get(head)?;
        let relation = *self.relation_exact.get(relation)?;
        let tail = *self.entity_exact.get(tail)?;
        self.triple_lookup
            .get(&Triple {
                head,
                relation,
                tail,
            })
            .copied()
    }

    /// All triples incident to `entity`, ordered by triple position.
    /// A self-loop appears once.
    pub fn neighborhood(&self, entity: EntityId) -> Vec<TripleId> {
        let out = &self.out_index[entity.0 as usize];
        let inn = &self.in_index[entity.0 as usize];
        let mut merged = Vec::with_capacity(out.len() + inn.len());
        let (mut i, mut j) = (0, 0);
        while i < out.len() && j < inn.len() {
            if out[i] < inn[j] {
                merged.push(out[i]);
                i += 1;
            } else if inn[j] < out[i] {
                merged.push(inn[j]);
                j += 1;
            } else {
                // self-loop indexed on both sides
                merged.push(out[i]);
                i += 1;
                j += 1;
            }
        }
        merged.extend_from_slice(&out[i..]);
        merged.extend_from_slice(&inn[j..]);
        merged
    }

    /// Number of distinct triples incident to `entity`.
    pub fn degree(&self, entity: EntityId) -> usize {
        let out = &self.out_index[entity.0 as usize];
        let inn = &self.in_index[entity.0 as usize];
        let self_loops = out
            .iter()
            .filter(|id| {
                let t = self.triple(**id);
                t.head == t.tail
            })
            .count();
        out.len() + inn.len() - self_loops
    }

    /// Resolve an entity name: exact byte match first, then the normalized
    /// fallback (casefold + trim + collapse whitespace). A normalized match
    /// shared by two or more entities is an ambiguity error.
    pub fn resolve_entity(&self, name: &str) -> Result<Option<EntityId>, GraphError> {
        if let Some(id) = self.entity_exact.get(name) {
            return Ok(Some(*id));
        }
        match self.entity_normalized.get(&normalize_entity(name)) {
            None => Ok(None),
            Some(ids) if ids.len() == 1 => Ok(Some(ids[0])),
            Some(ids) => Err(GraphError::AmbiguousEntity {
                name: name.to_string(),
                candidates: ids.iter().map(|id| self.entity_name(*id).to_string()).collect(),
            }),
        }
    }

    pub fn stats(&self) -> GraphStats {
        let max_degree = (0..self.entity_names.len() as u32)
            .map(|e| self.degree(EntityId(e)))
            .max()
            .unwrap_or(0);
        GraphStats {
            entity_count: self.entity_count(),
            relation_count: self.relation_count(),
            triple_count: self.triple_count(),
            max_degree,
        }
    }
}

#[derive(Default)]
struct GraphBuilder {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    triples: Vec<Triple>,
    entity_exact: HashMap<String, EntityId>,
    relation_exact: HashMap<String, RelationId>,
    triple_lookup: HashMap<Triple, TripleId>,
    duplicates_dropped: usize,
}

impl GraphBuilder {
    fn intern_entity(&mut self, name: String) -> EntityId {
        if let Some(id) = self.entity_exact.get(&name) {
            return *id;
        }
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_exact.insert(name.clone(), id);
        self.entity_names.push(name);
        id
    }

    fn intern_relation(&mut self, name: String) -> RelationId {
        if let Some(id) = self.relation_exact.get(&name) {
            return *id;
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_exact.insert(name.clone(), id);
        self.relation_names.push(name);
        id
    }

    fn add(&mut self, head: String, relation: String, tail: String) {
        let triple = Triple {
            head: self.intern_entity(head),
            relation: self.intern_relation(relation),
            tail: self.intern_entity(tail),
        };
        if self.triple_lookup.contains_key(&triple) {
            self.duplicates_dropped += 1;
            return;
        }
        let id = TripleId(self.triples.len() as u32);
        self.triple_lookup.insert(triple, id);
        self.triples.push(triple);
    }

    fn finish(self) -> TextualGraph {
        let mut out_index = vec![Vec::new(); self.entity_names.len()];
        let mut in_index = vec![Vec::new(); self.entity_names.len()];
        for (i, t) in self.triples.iter().enumerate() {
            out_index[t.head.0 as usize].push(TripleId(i as u32));
            in_index[t.tail.0 as usize].push(TripleId(i as u32));
        }
        let mut entity_normalized: HashMap<String, Vec<EntityId>> = HashMap::new();
        for (i, name) in self.entity_names.iter().enumerate() {
            entity_normalized
                .entry(normalize_entity(name))
                .or_default()
                .push(EntityId(i as u32));
        }
        TextualGraph {
            entity_names: self.entity_names,
            relation_names: self.relation_names,
            triples: self.triples,
            entity_exact: self.entity_exact,
            entity_normalized,
            relation_exact: self.relation_exact,
            triple_lookup: self.triple_lookup,
            out_index,
            in_index,
            duplicates_dropped: self.duplicates_dropped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn tsv_load_dedups_and_counts() {
        let f = write_temp("a\tr\tb\nb\tr\tc\na\tr\tb\n", ".tsv");
        let g = TextualGraph::load(f.path(), GraphFormat::Tsv).unwrap();
        assert_eq!(g.triple_count(), 2);
        assert_eq!(g.duplicates_dropped(), 1);
        assert_eq!(g.entity_count(), 3);
        assert_eq!(g.relation_count(), 1);
    }

    #[test]
    fn jsonl_load_reports_missing_field_with_line() {
        let f = write_temp(
            "{\"head\":\"a\",\"relation\":\"r\",\"tail\":\"b\"}\n{\"head\":\"a\",\"tail\":\"b\"}\n",
            ".jsonl",
        );
        let err = TextualGraph::load(f.path(), GraphFormat::Jsonl).unwrap_err();
        match err {
            GraphError::MalformedRow { line, detail, .. } => {
                assert_eq!(line, 2);
                assert!(detail.contains("relation"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn malformed_tsv_row_reports_line_number() {
        let f = write_temp("a\tr\tb\nbad row\n", ".tsv");
        let err = TextualGraph::load(f.path(), GraphFormat::Tsv).unwrap_err();
        match err {
            GraphError::MalformedRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_temp("\n\n", ".tsv");
        assert!(matches!(
            TextualGraph::load(f.path(), GraphFormat::Tsv),
            Err(GraphError::EmptyFile { .. })
        ));
    }

    #[test]
    fn neighborhood_is_position_ordered_and_bidirectional() {
        let g = TextualGraph::from_rows(&[
            ("a", "r1", "b"),
            ("c", "r2", "a"),
            ("b", "r1", "c"),
            ("a", "r3", "d"),
        ]);
        let a = g.resolve_entity("a").unwrap().unwrap();
        let texts: Vec<String> = g
            .neighborhood(a)
            .into_iter()
            .map(|id| g.triple_text(id))
            .collect();
        assert_eq!(texts, vec!["(a, r1, b)", "(c, r2, a)", "(a, r3, d)"]);
    }

    #[test]
    fn self_loop_appears_once() {
        let g = TextualGraph::from_rows(&[("x", "r", "x"), ("x", "r", "y")]);
        let x = g.resolve_entity("x").unwrap().unwrap();
        assert_eq!(g.neighborhood(x).len(), 2);
        assert_eq!(g.degree(x), 2);
    }

    #[test]
    fn isolated_entity_has_empty_neighborhood() {
        let mut b = GraphBuilder::default();
        b.add("a".into(), "r".into(), "b".into());
        let lone = b.intern_entity("lone".into());
        let g = b.finish();
        assert!(g.neighborhood(lone).is_empty());
        assert_eq!(g.degree(lone), 0);
    }

    #[test]
    fn resolve_prefers_exact_then_normalized() {
        let g = TextualGraph::from_rows(&[
            ("Kenji Mizoguchi", "born_in", "Tokyo"),
            ("kenji mizoguchi", "is_tag_of", "The Life of Oharu"),
        ]);
        // exact match wins even though the normalized key is shared
        let exact = g.resolve_entity("Kenji Mizoguchi").unwrap().unwrap();
        assert_eq!(g.entity_name(exact), "Kenji Mizoguchi");
        // a non-exact spelling hits the ambiguity
        let err = g.resolve_entity(" KENJI  MIZOGUCHI ").unwrap_err();
        match err {
            GraphError::AmbiguousEntity { candidates, .. } => {
                assert_eq!(candidates.len(), 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn resolve_normalized_fallback() {
        let g = TextualGraph::from_rows(&[("Kenji Mizoguchi", "born_in", "Tokyo")]);
        let id = g.resolve_entity(" kenji mizoguchi ").unwrap().unwrap();
        assert_eq!(g.entity_name(id), "Kenji Mizoguchi");
        assert_eq!(g.resolve_entity("Nonexistent Person").unwrap(), None);
    }

    #[test]
    fn stats_star_graph_max_degree() {
        let rows: Vec<(String, String, String)> = (0..9)
            .map(|i| ("center".to_string(), "r".to_string(), format!("leaf{i}")))
            .collect();
        let g = TextualGraph::from_rows(&rows);
        let s = g.stats();
        assert_eq!(s.max_degree, 9);
        assert_eq!(s.triple_count, 9);
        assert_eq!(s.entity_count, 10);
    }

    #[test]
    fn stats_display_is_key_value_lines() {
        let g = TextualGraph::from_rows(&[("a", "r", "b")]);
        let text = g.stats().to_string();
        assert!(text.contains("entity_count=2"));
        assert!(text.contains("max_degree=1"));
    }

    #[test]
    fn double_concatenated_file_equals_single_load() {
        let body = "a\tr\tb\nb\tr\tc\nc\tr2\ta\n";
        let once = write_temp(body, ".tsv");
        let twice = write_temp(&format!("{body}{body}"), ".tsv");
        let g1 = TextualGraph::load(once.path(), GraphFormat::Tsv).unwrap();
        let g2 = TextualGraph::load(twice.path(), GraphFormat::Tsv).unwrap();
        assert_eq!(g1.stats(), g2.stats());
        let t1: Vec<String> = g1.all_triple_ids().iter().map(|i| g1.triple_text(*i)).collect();
        let t2: Vec<String> = g2.all_triple_ids().iter().map(|i| g2.triple_text(*i)).collect();
        assert_eq!(t1, t2);
        assert_eq!(g2.duplicates_dropped(), 3);
    }
}
