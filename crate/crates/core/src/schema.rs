//! Task schemas: named reply templates plus a directed next-action graph.
//!
//! A schema file is a JSON object with three keys:
//!
//! ```json
//! { "task": "book_doctor_appointment",
//!   "replies": { "hello": "Hello, how can I help?", ... },
//!   "graph":   { "hello": "ask_name", ... } }
//! ```
//!
//! Every graph key and value must name a reply; each node has at most one
//! outgoing edge, which is what makes the wizard policy deterministic.
//! Cycles are legal (some tasks loop), so validation never requires
//! acyclicity. Domains live in a sidecar manifest (`task -> domain`)
//! because schema files carry no domain field.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid action label `{0}` (labels match [a-z0-9_]+)")]
    InvalidLabel(String),
    #[error("duplicate reply `{0}`")]
    DuplicateReply(String),
    #[error("node `{0}` has more than one outgoing edge")]
    DuplicateEdge(String),
    #[error("graph node `{0}` is not a key of `replies`")]
    DanglingGraphNode(String),
    #[error("template for `{label}` is invalid: {reason}")]
    BadTemplate { label: String, reason: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no value for placeholder `{0}`")]
    MissingPlaceholderValue(String),
    #[error("task `{0}` is missing from the domain manifest")]
    MissingDomain(String),
    #[error("manifest names unknown task `{0}`")]
    UnknownManifestTask(String),
    #[error("io error: {0}")]
    Io(String),
}

/// A schema node / wizard action name. Always matches `[a-z0-9_]+`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ActionLabel(String);

impl ActionLabel {
    pub fn new(value: impl Into<String>) -> Result<Self, SchemaError> {
        let value = value.into();
        let ok = !value.is_empty()
            && value
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if ok {
            Ok(ActionLabel(value))
        } else {
            Err(SchemaError::InvalidLabel(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ActionLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ActionLabel::new(s).map_err(serde::de::Error::custom)
    }
}

/// Nodes whose label starts with `query` direct the wizard to issue a
/// knowledge base query instead of uttering the template text.
pub fn is_query_label(label: &ActionLabel) -> bool {
    label.as_str() == "query" || label.as_str().starts_with("query_")
}

/// Nodes that ask the user for a piece of information, by the corpus naming
/// convention (`ask_name`, `doctor_ask_day`, ...).
pub fn is_ask_label(label: &ActionLabel) -> bool {
    label.as_str() == "ask" || label.as_str().split('_').any(|part| part == "ask")
}

/// The pseudo action label used for knowledge base queries in action
/// sequences and model vocabularies: `query <task>`.
pub fn query_action(task: &str) -> String {
    format!("query {task}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder { id: String, spec: String },
}

/// A reply template, possibly containing `{identifier:formatspec}`
/// placeholders. Only string substitution is implemented; unknown format
/// specs are treated as `:s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseTemplate {
    text: String,
    segments: Vec<Segment>,
}

impl ResponseTemplate {
    pub fn parse(text: impl Into<String>) -> Result<Self, String> {
        let text = text.into();
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = text.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' => {
                    let mut inner = String::new();
                    let mut closed = false;
                    for c2 in chars.by_ref() {
                        if c2 == '}' {
                            closed = true;
                            break;
                        }
                        if c2 == '{' {
                            return Err("nested `{`".to_string());
                        }
                        inner.push(c2);
                    }
                    if !closed {
                        return Err("unbalanced `{`".to_string());
                    }
                    let (id, spec) = match inner.split_once(':') {
                        Some((id, spec)) => (id.to_string(), spec.to_string()),
                        None => (inner.clone(), "s".to_string()),
                    };
                    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                        return Err(format!("bad placeholder identifier `{id}`"));
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Placeholder { id, spec });
                }
                '}' => return Err("unbalanced `}`".to_string()),
                c => literal.push(c),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(ResponseTemplate { text, segments })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Placeholder identifiers in order of first appearance, deduplicated.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for seg in &self.segments {
            if let Segment::Placeholder { id, .. } = seg {
                if !seen.contains(&id.as_str()) {
                    seen.push(id.as_str());
                }
            }
        }
        seen
    }

    /// Substitute every placeholder from `values`. Non-placeholder text is
    /// passed through byte-identical.
    pub fn fill(&self, values: &BTreeMap<String, String>) -> Result<String, SchemaError> {
        let mut out = String::with_capacity(self.text.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder { id, .. } => match values.get(id) {
                    Some(v) => out.push_str(v),
                    None => return Err(SchemaError::MissingPlaceholderValue(id.clone())),
                },
            }
        }
        Ok(out)
    }

    /// Like [`fill`](Self::fill) but substituting a visible sentinel for
    /// missing values instead of failing. Returns the text and the list of
    /// unresolved identifiers.
    pub fn fill_lossy(&self, values: &BTreeMap<String, String>) -> (String, Vec<String>) {
        let mut out = String::with_capacity(self.text.len());
        let mut missing = Vec::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder { id, .. } => match values.get(id) {
                    Some(v) => out.push_str(v),
                    None => {
                        out.push_str(&format!("\u{27e8}unk:{id}\u{27e9}"));
                        missing.push(id.clone());
                    }
                },
            }
        }
        (out, missing)
    }
}

/// Free-function form of template filling, mirroring the operation name used
/// elsewhere in the crate.
pub fn fill_template(
    template: &ResponseTemplate,
    values: &BTreeMap<String, String>,
) -> Result<String, SchemaError> {
    template.fill(values)
}

/// An object deserialized as a key/value pair list so that duplicate keys —
/// which `serde_json` maps would silently collapse — can be rejected.
struct PairList(Vec<(String, String)>);

impl<'de> Deserialize<'de> for PairList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PairVisitor;
        impl<'de> Visitor<'de> for PairVisitor {
            type Value = PairList;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of strings")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<PairList, A::Error> {
                let mut pairs = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    pairs.push((k, v));
                }
                Ok(PairList(pairs))
            }
        }
        d.deserialize_map(PairVisitor)
    }
}

#[derive(Deserialize)]
struct RawSchema {
    task: Option<String>,
    replies: Option<PairList>,
    graph: Option<PairList>,
}

/// A validated task schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schema {
    task: String,
    replies: BTreeMap<ActionLabel, ResponseTemplate>,
    graph: BTreeMap<ActionLabel, ActionLabel>,
}

impl Serialize for ResponseTemplate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl Schema {
    /// Parse and validate a schema from JSON text.
    pub fn parse(raw: &str) -> Result<Self, SchemaError> {
        let raw: RawSchema = serde_json::from_str(raw)
            .map_err(|e| SchemaError::MalformedJson(e.to_string()))?;
        let task = raw.task.ok_or(SchemaError::MissingField("task"))?;
        let reply_pairs = raw.replies.ok_or(SchemaError::MissingField("replies"))?.0;
        let graph_pairs = raw.graph.ok_or(SchemaError::MissingField("graph"))?.0;
        ActionLabel::new(task.clone())?;

        let mut replies = BTreeMap::new();
        for (label, text) in reply_pairs {
            let label = ActionLabel::new(label)?;
            let template =
                ResponseTemplate::parse(text).map_err(|reason| SchemaError::BadTemplate {
                    label: label.to_string(),
                    reason,
                })?;
            if replies.insert(label.clone(), template).is_some() {
                return Err(SchemaError::DuplicateReply(label.to_string()));
            }
        }

        let mut graph = BTreeMap::new();
        for (from, to) in graph_pairs {
            let from = ActionLabel::new(from)?;
            let to = ActionLabel::new(to)?;
            if !replies.contains_key(&from) {
                return Err(SchemaError::DanglingGraphNode(from.to_string()));
            }
            if !replies.contains_key(&to) {
                return Err(SchemaError::DanglingGraphNode(to.to_string()));
            }
            if graph.insert(from.clone(), to).is_some() {
                return Err(SchemaError::DuplicateEdge(from.to_string()));
            }
        }

        Ok(Schema {
            task,
            replies,
            graph,
        })
    }

    /// Canonical JSON rendering; `parse(to_json(s)) == s`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serialization cannot fail")
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn replies(&self) -> &BTreeMap<ActionLabel, ResponseTemplate> {
        &self.replies
    }

    pub fn graph(&self) -> &BTreeMap<ActionLabel, ActionLabel> {
        &self.graph
    }

    pub fn contains(&self, node: &ActionLabel) -> bool {
        self.replies.contains_key(node)
    }

    /// The graph successor of `node`, or `None` when the node is terminal.
    pub fn next_node(&self, node: &ActionLabel) -> Result<Option<&ActionLabel>, SchemaError> {
        if !self.replies.contains_key(node) {
            return Err(SchemaError::UnknownNode(node.to_string()));
        }
        Ok(self.graph.get(node))
    }

    /// The reply template text associated with `node` — the node's
    /// natural-language description, also used for encoding.
    pub fn node_text(&self, node: &ActionLabel) -> Result<&str, SchemaError> {
        self.replies
            .get(node)
            .map(|t| t.text())
            .ok_or_else(|| SchemaError::UnknownNode(node.to_string()))
    }

    pub fn template(&self, node: &ActionLabel) -> Result<&ResponseTemplate, SchemaError> {
        self.replies
            .get(node)
            .ok_or_else(|| SchemaError::UnknownNode(node.to_string()))
    }

    /// The dialog entry node, `hello`, when the schema defines one.
    pub fn entry(&self) -> Option<&ActionLabel> {
        self.replies.keys().find(|l| l.as_str() == "hello")
    }

    /// Follow `next_node` from `start` (inclusive) until a terminal node or
    /// a revisit (cycle guard).
    pub fn walk(&self, start: &ActionLabel) -> Result<Vec<ActionLabel>, SchemaError> {
        if !self.contains(start) {
            return Err(SchemaError::UnknownNode(start.to_string()));
        }
        let mut path = vec![start.clone()];
        let mut cur = start;
        while let Some(next) = self.graph.get(cur) {
            if path.contains(next) {
                break;
            }
            path.push(next.clone());
            cur = next;
        }
        Ok(path)
    }

    /// The prescribed opening actions whose order is checked for
    /// consistency: the ask-style nodes on the walk from `hello`, up to and
    /// including the first query node (rendered as `query <task>`).
    pub fn checked_actions(&self) -> Vec<String> {
        let Some(entry) = self.entry() else {
            return Vec::new();
        };
        let mut checked = Vec::new();
        for node in self.walk(entry).expect("entry node exists") {
            if is_query_label(&node) {
                checked.push(query_action(&self.task));
                break;
            }
            if is_ask_label(&node) {
                checked.push(node.to_string());
            }
        }
        checked
    }
}

/// A collection of schemas plus the task-to-domain assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSet {
    schemas: BTreeMap<String, Schema>,
    domains: BTreeMap<String, String>,
}

impl SchemaSet {
    pub fn new(
        schemas: impl IntoIterator<Item = Schema>,
        domains: BTreeMap<String, String>,
    ) -> Result<Self, SchemaError> {
        let schemas: BTreeMap<String, Schema> = schemas
            .into_iter()
            .map(|s| (s.task.clone(), s))
            .collect();
        for task in schemas.keys() {
            if !domains.contains_key(task) {
                return Err(SchemaError::MissingDomain(task.clone()));
            }
        }
        for task in domains.keys() {
            if !schemas.contains_key(task) {
                return Err(SchemaError::UnknownManifestTask(task.clone()));
            }
        }
        Ok(SchemaSet { schemas, domains })
    }

    /// Load every `*.json` schema in `dir` plus the `task -> domain`
    /// manifest file.
    pub fn load(dir: &Path, manifest: &Path) -> Result<Self, SchemaError> {
        let mut schemas = Vec::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| SchemaError::Io(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let raw = std::fs::read_to_string(&path)
                .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
            schemas.push(Schema::parse(&raw)?);
        }
        let raw = std::fs::read_to_string(manifest)
            .map_err(|e| SchemaError::Io(format!("{}: {e}", manifest.display())))?;
        let domains: BTreeMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| SchemaError::MalformedJson(e.to_string()))?;
        SchemaSet::new(schemas, domains)
    }

    pub fn get(&self, task: &str) -> Option<&Schema> {
        self.schemas.get(task)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &Schema> {
        self.schemas.values()
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn domain_of(&self, task: &str) -> Option<&str> {
        self.domains.get(task).map(String::as_str)
    }

    pub fn domains(&self) -> Vec<&str> {
        let mut ds: Vec<&str> = self.domains.values().map(String::as_str).collect();
        ds.sort_unstable();
        ds.dedup();
        ds
    }

    pub fn tasks_in_domain(&self, domain: &str) -> Vec<&str> {
        self.domains
            .iter()
            .filter(|(_, d)| d.as_str() == domain)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    /// Restrict to a subset of tasks (used by transfer splits).
    pub fn subset(&self, tasks: &[&str]) -> Result<SchemaSet, SchemaError> {
        let schemas: Vec<Schema> = tasks
            .iter()
            .map(|t| {
                self.schemas
                    .get(*t)
                    .cloned()
                    .ok_or_else(|| SchemaError::UnknownNode((*t).to_string()))
            })
            .collect::<Result<_, _>>()?;
        let domains = tasks
            .iter()
            .map(|t| ((*t).to_string(), self.domains[*t].clone()))
            .collect();
        SchemaSet::new(schemas, domains)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini(task: &str, replies: &[(&str, &str)], graph: &[(&str, &str)]) -> String {
        let replies: BTreeMap<&str, &str> = replies.iter().copied().collect();
        let graph: BTreeMap<&str, &str> = graph.iter().copied().collect();
        serde_json::json!({"task": task, "replies": replies, "graph": graph}).to_string()
    }

    #[test]
    fn parses_minimal_and_empty_schemas() {
        let s = Schema::parse(&mini("t", &[], &[])).unwrap();
        assert_eq!(s.task(), "t");
        assert!(s.graph().is_empty());

        let s = Schema::parse(&mini("t", &[("a", "hi")], &[])).unwrap();
        assert_eq!(s.node_text(&ActionLabel::new("a").unwrap()).unwrap(), "hi");
    }

    #[test]
    fn rejects_missing_fields_and_bad_json() {
        assert!(matches!(
            Schema::parse("{\"task\":\"t\",\"graph\":{}}"),
            Err(SchemaError::MissingField("replies"))
        ));
        assert!(matches!(
            Schema::parse("not json"),
            Err(SchemaError::MalformedJson(_))
        ));
    }

    #[test]
    fn rejects_dangling_graph_nodes() {
        let raw = mini("t", &[("a", "x")], &[("a", "b")]);
        assert_eq!(
            Schema::parse(&raw),
            Err(SchemaError::DanglingGraphNode("b".to_string()))
        );
        let raw = mini("t", &[("b", "x")], &[("a", "b")]);
        assert_eq!(
            Schema::parse(&raw),
            Err(SchemaError::DanglingGraphNode("a".to_string()))
        );
    }

    #[test]
    fn rejects_duplicate_edges_in_raw_text() {
        let raw = r#"{"task":"t","replies":{"a":"x","b":"y"},"graph":{"a":"b","a":"a"}}"#;
        assert_eq!(
            Schema::parse(raw),
            Err(SchemaError::DuplicateEdge("a".to_string()))
        );
        let raw = r#"{"task":"t","replies":{"a":"x","a":"y"},"graph":{}}"#;
        assert_eq!(
            Schema::parse(raw),
            Err(SchemaError::DuplicateReply("a".to_string()))
        );
    }

    #[test]
    fn rejects_invalid_labels() {
        let raw = mini("t", &[("Bad-Label", "x")], &[]);
        assert!(matches!(
            Schema::parse(&raw),
            Err(SchemaError::InvalidLabel(_))
        ));
    }

    #[test]
    fn template_round_trip_and_placeholders() {
        let t = ResponseTemplate::parse("Alright, {doctor_name:s} is available at {time:s}.")
            .unwrap();
        assert_eq!(t.placeholders(), vec!["doctor_name", "time"]);
        let mut values = BTreeMap::new();
        values.insert("doctor_name".to_string(), "Dr. Morgan".to_string());
        values.insert("time".to_string(), "2 pm".to_string());
        assert_eq!(
            t.fill(&values).unwrap(),
            "Alright, Dr. Morgan is available at 2 pm."
        );
    }

    #[test]
    fn template_without_placeholders_is_identity() {
        let t = ResponseTemplate::parse("Hello, how can I help?").unwrap();
        assert_eq!(t.fill(&BTreeMap::new()).unwrap(), "Hello, how can I help?");
    }

    #[test]
    fn repeated_placeholder_substitutes_twice() {
        let t = ResponseTemplate::parse("{a:s}{a:s}").unwrap();
        let mut values = BTreeMap::new();
        values.insert("a".to_string(), "x".to_string());
        assert_eq!(t.fill(&values).unwrap(), "xx");
    }

    #[test]
    fn missing_value_is_an_error_or_sentinel() {
        let t = ResponseTemplate::parse("at {time:s}").unwrap();
        assert_eq!(
            t.fill(&BTreeMap::new()),
            Err(SchemaError::MissingPlaceholderValue("time".to_string()))
        );
        let (text, missing) = t.fill_lossy(&BTreeMap::new());
        assert_eq!(text, "at \u{27e8}unk:time\u{27e9}");
        assert_eq!(missing, vec!["time".to_string()]);
    }

    #[test]
    fn bad_templates_are_rejected() {
        assert!(ResponseTemplate::parse("oops {").is_err());
        assert!(ResponseTemplate::parse("oops }").is_err());
        assert!(ResponseTemplate::parse("{:s}").is_err());
        let raw = mini("t", &[("a", "{")], &[]);
        assert!(matches!(
            Schema::parse(&raw),
            Err(SchemaError::BadTemplate { .. })
        ));
    }

    #[test]
    fn next_node_distinguishes_terminal_from_unknown() {
        let raw = mini("t", &[("a", "x"), ("b", "y")], &[("a", "b")]);
        let s = Schema::parse(&raw).unwrap();
        let a = ActionLabel::new("a").unwrap();
        let b = ActionLabel::new("b").unwrap();
        let z = ActionLabel::new("z").unwrap();
        assert_eq!(s.next_node(&a).unwrap(), Some(&b));
        assert_eq!(s.next_node(&b).unwrap(), None);
        assert!(matches!(s.next_node(&z), Err(SchemaError::UnknownNode(_))));
    }

    #[test]
    fn walk_stops_on_cycles() {
        let raw = mini(
            "t",
            &[("a", "x"), ("b", "y"), ("c", "z")],
            &[("a", "b"), ("b", "c"), ("c", "a")],
        );
        let s = Schema::parse(&raw).unwrap();
        let path = s.walk(&ActionLabel::new("a").unwrap()).unwrap();
        assert_eq!(path.len(), 3);
    }

    #[test]
    fn serialization_round_trips() {
        let raw = mini(
            "t",
            &[("hello", "Hi there"), ("ask_x", "What x? {x:s}")],
            &[("hello", "ask_x")],
        );
        let s = Schema::parse(&raw).unwrap();
        let again = Schema::parse(&s.to_json()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn label_conventions() {
        let q = ActionLabel::new("query_check").unwrap();
        let a = ActionLabel::new("doctor_ask_day").unwrap();
        let n = ActionLabel::new("hello").unwrap();
        assert!(is_query_label(&q));
        assert!(!is_query_label(&a));
        assert!(is_ask_label(&a));
        assert!(!is_ask_label(&n));
        // `task` (a word containing "ask" as substring) is not an ask node
        let t = ActionLabel::new("taskmaster").unwrap();
        assert!(!is_ask_label(&t));
    }

    #[test]
    fn schema_set_requires_complete_manifest() {
        let s = Schema::parse(&mini("t1", &[], &[])).unwrap();
        let err = SchemaSet::new(vec![s.clone()], BTreeMap::new()).unwrap_err();
        assert_eq!(err, SchemaError::MissingDomain("t1".to_string()));
        let mut domains = BTreeMap::new();
        domains.insert("t1".to_string(), "d".to_string());
        domains.insert("ghost".to_string(), "d".to_string());
        let err = SchemaSet::new(vec![s], domains).unwrap_err();
        assert_eq!(err, SchemaError::UnknownManifestTask("ghost".to_string()));
    }
}
