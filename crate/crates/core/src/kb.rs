//! Per-task knowledge bases with typed constraint queries.
//!
//! Fixture format: `{"table": <task>, "fields": [{"name", "type"}],
//! "rows": [{...}]}`. Tables are immutable after load; queries sample one
//! matching item uniformly using a caller-supplied RNG, so simulations are
//! reproducible yet varied.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KbError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("constraint on `{key}` has mismatched types for op {op}")]
    TypeMismatch { key: String, op: String },
    #[error("malformed knowledge base fixture: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(String),
}

/// A typed scalar cell value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scalar {
    Str(String),
    Int(i64),
    Bool(bool),
}

impl Scalar {
    pub fn type_name(&self) -> &'static str {
        match self {
            Scalar::Str(_) => "string",
            Scalar::Int(_) => "integer",
            Scalar::Bool(_) => "boolean",
        }
    }

    pub fn render(&self) -> String {
        match self {
            Scalar::Str(s) => s.clone(),
            Scalar::Int(i) => i.to_string(),
            Scalar::Bool(b) => b.to_string(),
        }
    }

    pub fn from_json(v: &Value) -> Result<Self, KbError> {
        match v {
            Value::String(s) => Ok(Scalar::Str(s.clone())),
            Value::Bool(b) => Ok(Scalar::Bool(*b)),
            Value::Number(n) => n
                .as_i64()
                .map(Scalar::Int)
                .ok_or_else(|| KbError::Malformed(format!("non-integer number {n}"))),
            other => Err(KbError::Malformed(format!("unsupported scalar {other}"))),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Scalar::Str(s) => Value::String(s.clone()),
            Scalar::Int(i) => Value::from(*i),
            Scalar::Bool(b) => Value::Bool(*b),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// One knowledge base record: field name to scalar value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KbItem {
    pub fields: BTreeMap<String, Scalar>,
}

impl KbItem {
    pub fn from_json(v: &Value) -> Result<Self, KbError> {
        let obj = v
            .as_object()
            .ok_or_else(|| KbError::Malformed("item is not an object".to_string()))?;
        let mut fields = BTreeMap::new();
        for (k, v) in obj {
            if k.is_empty() {
                return Err(KbError::Malformed("empty field name".to_string()));
            }
            fields.insert(k.clone(), Scalar::from_json(v)?);
        }
        Ok(KbItem { fields })
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.fields
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect(),
        )
    }

    /// Render as `Field: value; ...` in field order — the textual form a
    /// wizard (or an encoder) sees.
    pub fn render(&self) -> String {
        self.fields
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// A typed query predicate over one field. Arity and operand types are
/// encoded in the variants; `Opaque` is an unrecognized corpus expression
/// that matches nothing and is flagged.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintOp {
    Eq(Scalar),
    Neq(Scalar),
    Gt(i64),
    Ge(i64),
    Lt(i64),
    Le(i64),
    Contains(String),
    OneOf(Vec<Scalar>),
    Opaque(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub key: String,
    pub op: ConstraintOp,
}

impl Constraint {
    pub fn eq(key: impl Into<String>, value: Scalar) -> Self {
        Constraint {
            key: key.into(),
            op: ConstraintOp::Eq(value),
        }
    }

    /// True for constraints parsed from expressions we do not recognize.
    pub fn is_flagged(&self) -> bool {
        matches!(self.op, ConstraintOp::Opaque(_))
    }

    fn op_name(&self) -> &'static str {
        match self.op {
            ConstraintOp::Eq(_) => "eq",
            ConstraintOp::Neq(_) => "neq",
            ConstraintOp::Gt(_) => "gt",
            ConstraintOp::Ge(_) => "ge",
            ConstraintOp::Lt(_) => "lt",
            ConstraintOp::Le(_) => "le",
            ConstraintOp::Contains(_) => "contains",
            ConstraintOp::OneOf(_) => "one_of",
            ConstraintOp::Opaque(_) => "opaque",
        }
    }

    fn matches(&self, item: &KbItem) -> bool {
        let Some(actual) = item.fields.get(&self.key) else {
            return false;
        };
        match (&self.op, actual) {
            (ConstraintOp::Eq(v), a) => v == a,
            (ConstraintOp::Neq(v), a) => v != a,
            (ConstraintOp::Gt(v), Scalar::Int(a)) => a > v,
            (ConstraintOp::Ge(v), Scalar::Int(a)) => a >= v,
            (ConstraintOp::Lt(v), Scalar::Int(a)) => a < v,
            (ConstraintOp::Le(v), Scalar::Int(a)) => a <= v,
            (ConstraintOp::Contains(v), Scalar::Str(a)) => {
                a.to_lowercase().contains(&v.to_lowercase())
            }
            (ConstraintOp::OneOf(vs), a) => vs.contains(a),
            (ConstraintOp::Opaque(_), _) => false,
            _ => false,
        }
    }

    /// Corpus-format rendering: a literal for equality, an
    /// `api.is_<op>(<arg>)` expression for comparators. Opaque constraints
    /// round-trip their original expression. `contains`/`one_of` have no
    /// corpus form.
    pub fn to_corpus_value(&self) -> Option<Value> {
        fn arg(s: &Scalar) -> String {
            match s {
                Scalar::Str(v) => serde_json::to_string(v).expect("string serializes"),
                other => other.render(),
            }
        }
        match &self.op {
            ConstraintOp::Eq(v) => Some(v.to_json()),
            ConstraintOp::Neq(v) => Some(Value::String(format!("api.is_not({})", arg(v)))),
            ConstraintOp::Gt(v) => Some(Value::String(format!("api.is_greater_than({v})"))),
            ConstraintOp::Lt(v) => Some(Value::String(format!("api.is_less_than({v})"))),
            ConstraintOp::Ge(v) => Some(Value::String(format!("api.is_at_least({v})"))),
            ConstraintOp::Le(v) => Some(Value::String(format!("api.is_at_most({v})"))),
            ConstraintOp::Opaque(raw) => Some(Value::String(raw.clone())),
            ConstraintOp::Contains(_) | ConstraintOp::OneOf(_) => None,
        }
    }
}

/// Parse the corpus `Constraints` object: literal values mean equality and
/// comparators are `api.is_<op>(<arg>)` expressions. Unrecognized
/// expressions become opaque, flagged constraints that match nothing; this
/// function never fails.
pub fn parse_corpus_constraints(raw: &serde_json::Map<String, Value>) -> Vec<Constraint> {
    let mut out = Vec::new();
    for (key, value) in raw {
        let op = match value {
            Value::String(s) if s.starts_with("api.") => parse_api_expression(s),
            other => match Scalar::from_json(other) {
                Ok(scalar) => ConstraintOp::Eq(scalar),
                Err(_) => ConstraintOp::Opaque(value.to_string()),
            },
        };
        out.push(Constraint {
            key: key.clone(),
            op,
        });
    }
    out
}

fn parse_api_expression(s: &str) -> ConstraintOp {
    let opaque = || ConstraintOp::Opaque(s.to_string());
    let Some(rest) = s.strip_prefix("api.is_") else {
        return opaque();
    };
    let Some((name, rest)) = rest.split_once('(') else {
        return opaque();
    };
    let Some(arg_text) = rest.strip_suffix(')') else {
        return opaque();
    };
    let arg = match serde_json::from_str::<Value>(arg_text) {
        Ok(v) => match Scalar::from_json(&v) {
            Ok(s) => s,
            Err(_) => return opaque(),
        },
        // Bare unquoted words are treated as strings.
        Err(_) => Scalar::Str(arg_text.trim().to_string()),
    };
    match (name, &arg) {
        ("not", _) => ConstraintOp::Neq(arg),
        ("greater_than", Scalar::Int(v)) => ConstraintOp::Gt(*v),
        ("less_than", Scalar::Int(v)) => ConstraintOp::Lt(*v),
        ("at_least", Scalar::Int(v)) => ConstraintOp::Ge(*v),
        ("at_most", Scalar::Int(v)) => ConstraintOp::Le(*v),
        _ => opaque(),
    }
}

/// Render a constraint list back into the corpus `Constraints` object.
/// Constraints without a corpus form are skipped.
pub fn constraints_to_corpus(constraints: &[Constraint]) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    for c in constraints {
        if let Some(v) = c.to_corpus_value() {
            map.insert(c.key.clone(), v);
        }
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    String,
    Integer,
    Boolean,
}

impl FieldType {
    fn accepts(self, s: &Scalar) -> bool {
        matches!(
            (self, s),
            (FieldType::String, Scalar::Str(_))
                | (FieldType::Integer, Scalar::Int(_))
                | (FieldType::Boolean, Scalar::Bool(_))
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: FieldType,
}

/// The result of a knowledge base query: one uniformly sampled match plus
/// the exact match count (`-1` when counting is not applicable).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub item: Option<KbItem>,
    pub total_items: i64,
}

/// One immutable, consistently-typed table.
#[derive(Debug, Clone)]
pub struct KbTable {
    name: String,
    fields: Vec<FieldSpec>,
    rows: Vec<KbItem>,
}

impl KbTable {
    pub fn new(name: String, fields: Vec<FieldSpec>, rows: Vec<KbItem>) -> Result<Self, KbError> {
        for row in &rows {
            for spec in &fields {
                match row.fields.get(&spec.name) {
                    Some(v) if spec.ty.accepts(v) => {}
                    Some(v) => {
                        return Err(KbError::Malformed(format!(
                            "row value for `{}` has type {}, expected {:?}",
                            spec.name,
                            v.type_name(),
                            spec.ty
                        )))
                    }
                    None => {
                        return Err(KbError::Malformed(format!(
                            "row missing field `{}`",
                            spec.name
                        )))
                    }
                }
            }
            for key in row.fields.keys() {
                if !fields.iter().any(|f| &f.name == key) {
                    return Err(KbError::Malformed(format!("row has unknown field `{key}`")));
                }
            }
        }
        Ok(KbTable { name, fields, rows })
    }

    pub fn parse(raw: &str) -> Result<Self, KbError> {
        #[derive(Deserialize)]
        struct RawTable {
            table: String,
            fields: Vec<FieldSpec>,
            rows: Vec<Value>,
        }
        let raw: RawTable =
            serde_json::from_str(raw).map_err(|e| KbError::Malformed(e.to_string()))?;
        let rows = raw
            .rows
            .iter()
            .map(KbItem::from_json)
            .collect::<Result<Vec<_>, _>>()?;
        KbTable::new(raw.table, raw.fields, rows)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn rows(&self) -> &[KbItem] {
        &self.rows
    }

    pub fn field_type(&self, name: &str) -> Option<FieldType> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.ty)
    }

    fn validate_constraints(&self, constraints: &[Constraint]) -> Result<(), KbError> {
        for c in constraints {
            let Some(ty) = self.field_type(&c.key) else {
                return Err(KbError::UnknownField(c.key.clone()));
            };
            let ok = match &c.op {
                ConstraintOp::Eq(v) | ConstraintOp::Neq(v) => ty.accepts(v),
                ConstraintOp::Gt(_)
                | ConstraintOp::Ge(_)
                | ConstraintOp::Lt(_)
                | ConstraintOp::Le(_) => ty == FieldType::Integer,
                ConstraintOp::Contains(_) => ty == FieldType::String,
                ConstraintOp::OneOf(vs) => vs.iter().all(|v| ty.accepts(v)),
                ConstraintOp::Opaque(_) => true,
            };
            if !ok {
                return Err(KbError::TypeMismatch {
                    key: c.key.clone(),
                    op: c.op_name().to_string(),
                });
            }
        }
        Ok(())
    }

    /// All rows satisfying every constraint.
    pub fn matches(&self, constraints: &[Constraint]) -> Result<Vec<&KbItem>, KbError> {
        self.validate_constraints(constraints)?;
        Ok(self
            .rows
            .iter()
            .filter(|row| constraints.iter().all(|c| c.matches(row)))
            .collect())
    }

    /// Uniformly sample one match; deterministic given the RNG state.
    pub fn query(
        &self,
        constraints: &[Constraint],
        rng: &mut impl Rng,
    ) -> Result<QueryResult, KbError> {
        let matches = self.matches(constraints)?;
        let total_items = matches.len() as i64;
        let item = if matches.is_empty() {
            None
        } else {
            Some(matches[rng.gen_range(0..matches.len())].clone())
        };
        Ok(QueryResult { item, total_items })
    }
}

/// How a query node interprets its results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    /// Return a sampled matching record (lookup tasks).
    Search,
    /// Report `Message: Available|Unavailable` depending on whether any
    /// record matches (reservation tasks).
    Check,
    /// Perform a stateless booking action; always reports `Message: Booked`
    /// with `total_items = -1`.
    Book,
}

/// The set of per-task tables.
#[derive(Debug, Clone, Default)]
pub struct KbSet {
    tables: BTreeMap<String, KbTable>,
}

/// The key used to route check-vs-book requests inside the constraint
/// object, mirroring the "request type" form field of the wizard interface.
pub const REQUEST_TYPE_KEY: &str = "RequestType";

impl KbSet {
    pub fn new(tables: impl IntoIterator<Item = KbTable>) -> Self {
        KbSet {
            tables: tables.into_iter().map(|t| (t.name.clone(), t)).collect(),
        }
    }

    /// Load every `*.json` table fixture in `dir`.
    pub fn load(dir: &Path) -> Result<Self, KbError> {
        let mut tables = Vec::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| KbError::Io(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let raw = std::fs::read_to_string(&path)
                .map_err(|e| KbError::Io(format!("{}: {e}", path.display())))?;
            tables.push(KbTable::parse(&raw)?);
        }
        Ok(KbSet::new(tables))
    }

    pub fn table(&self, name: &str) -> Result<&KbTable, KbError> {
        self.tables
            .get(name)
            .ok_or_else(|| KbError::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = &KbTable> {
        self.tables.values()
    }

    pub fn query(
        &self,
        table: &str,
        constraints: &[Constraint],
        rng: &mut impl Rng,
    ) -> Result<QueryResult, KbError> {
        self.table(table)?.query(constraints, rng)
    }

    /// Execute a query as the wizard would: a `RequestType` constraint, when
    /// present, routes between check and book semantics; otherwise `kind`
    /// decides. Check and book results echo the equality constraints plus a
    /// `Message` verdict and the task's `api_name`.
    pub fn execute(
        &self,
        task: &str,
        kind: QueryKind,
        constraints: &[Constraint],
        rng: &mut impl Rng,
    ) -> Result<QueryResult, KbError> {
        let mut filters = Vec::new();
        let mut kind = kind;
        for c in constraints {
            if c.key == REQUEST_TYPE_KEY {
                if let ConstraintOp::Eq(Scalar::Str(v)) = &c.op {
                    kind = match v.as_str() {
                        "Book" => QueryKind::Book,
                        "Check" => QueryKind::Check,
                        _ => kind,
                    };
                }
            } else {
                filters.push(c.clone());
            }
        }

        let echo = |with_message: &str| -> KbItem {
            let mut fields = BTreeMap::new();
            for c in &filters {
                if let ConstraintOp::Eq(v) = &c.op {
                    fields.insert(c.key.clone(), v.clone());
                }
            }
            fields.insert(
                "Message".to_string(),
                Scalar::Str(with_message.to_string()),
            );
            fields.insert("api_name".to_string(), Scalar::Str(task.to_string()));
            KbItem { fields }
        };

        match kind {
            QueryKind::Search => {
                let mut result = self.query(task, &filters, rng)?;
                if let Some(item) = &mut result.item {
                    item.fields
                        .insert("api_name".to_string(), Scalar::Str(task.to_string()));
                }
                Ok(result)
            }
            QueryKind::Check => {
                let total = self.table(task)?.matches(&filters)?.len() as i64;
                let verdict = if total > 0 { "Available" } else { "Unavailable" };
                Ok(QueryResult {
                    item: Some(echo(verdict)),
                    total_items: total,
                })
            }
            QueryKind::Book => {
                // Validate field names/types even though booking is stateless.
                self.table(task)?.validate_constraints(&filters)?;
                Ok(QueryResult {
                    item: Some(echo("Booked")),
                    total_items: -1,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn restaurant_table() -> KbTable {
        let raw = serde_json::json!({
            "table": "restaurant_search",
            "fields": [
                {"name": "Name", "type": "string"},
                {"name": "Location", "type": "string"},
                {"name": "Food", "type": "string"},
                {"name": "AverageRating", "type": "integer"}
            ],
            "rows": [
                {"Name": "Legume", "Location": "North", "Food": "Steak", "AverageRating": 5},
                {"Name": "The Porch", "Location": "North", "Food": "Italian", "AverageRating": 5},
                {"Name": "The Porch", "Location": "West", "Food": "Pizza", "AverageRating": 2},
                {"Name": "Golden Wok", "Location": "North", "Food": "Chinese", "AverageRating": 4},
                {"Name": "Blue Finch", "Location": "South", "Food": "Cafe", "AverageRating": 3}
            ]
        })
        .to_string();
        KbTable::parse(&raw).unwrap()
    }

    #[test]
    fn query_filters_and_counts() {
        let table = restaurant_table();
        let constraints = vec![
            Constraint::eq("Location", Scalar::Str("North".to_string())),
            Constraint {
                key: "Food".to_string(),
                op: ConstraintOp::Neq(Scalar::Str("Chinese".to_string())),
            },
        ];
        let result = table
            .query(&constraints, &mut stream(1, "kb", 0))
            .unwrap();
        assert_eq!(result.total_items, 2);
        let name = &result.item.unwrap().fields["Name"];
        assert!(matches!(name, Scalar::Str(s) if s == "Legume" || s == "The Porch"));
    }

    #[test]
    fn empty_constraints_match_everything() {
        let table = restaurant_table();
        let result = table.query(&[], &mut stream(1, "kb", 0)).unwrap();
        assert_eq!(result.total_items, table.rows().len() as i64);
    }

    #[test]
    fn gt_matches_verified_by_hand() {
        let table = restaurant_table();
        let constraints = vec![Constraint {
            key: "AverageRating".to_string(),
            op: ConstraintOp::Gt(4),
        }];
        let matches = table.matches(&constraints).unwrap();
        // Linear-scan oracle: exactly the rating-5 rows.
        let expected: Vec<&KbItem> = table
            .rows()
            .iter()
            .filter(|r| matches!(r.fields["AverageRating"], Scalar::Int(v) if v > 4))
            .collect();
        assert_eq!(matches.len(), 2);
        assert_eq!(matches, expected);
    }

    #[test]
    fn determinism_and_unknown_fields() {
        let table = restaurant_table();
        let c = vec![Constraint::eq("Location", Scalar::Str("North".to_string()))];
        let a = table.query(&c, &mut stream(9, "q", 4)).unwrap();
        let b = table.query(&c, &mut stream(9, "q", 4)).unwrap();
        assert_eq!(a, b);

        let bad = vec![Constraint::eq("Ghost", Scalar::Int(1))];
        assert_eq!(
            table.query(&bad, &mut stream(9, "q", 4)),
            Err(KbError::UnknownField("Ghost".to_string()))
        );
        let bad = vec![Constraint {
            key: "Name".to_string(),
            op: ConstraintOp::Gt(3),
        }];
        assert!(matches!(
            table.query(&bad, &mut stream(9, "q", 4)),
            Err(KbError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn corpus_constraint_parsing() {
        let raw = serde_json::json!({
            "AverageRating": "api.is_greater_than(4)",
            "Name": "Legume"
        });
        let parsed = parse_corpus_constraints(raw.as_object().unwrap());
        assert_eq!(
            parsed,
            vec![
                Constraint {
                    key: "AverageRating".to_string(),
                    op: ConstraintOp::Gt(4)
                },
                Constraint::eq("Name", Scalar::Str("Legume".to_string())),
            ]
        );
    }

    #[test]
    fn unrecognized_expressions_become_flagged_opaque() {
        let raw = serde_json::json!({"X": "api.is_weird(1)"});
        let parsed = parse_corpus_constraints(raw.as_object().unwrap());
        assert_eq!(parsed.len(), 1);
        assert!(parsed[0].is_flagged());
        // Opaque constraints match nothing.
        let table = restaurant_table();
        let c = vec![Constraint {
            key: "Name".to_string(),
            op: ConstraintOp::Opaque("api.is_weird(1)".to_string()),
        }];
        assert_eq!(table.matches(&c).unwrap().len(), 0);
    }

    #[test]
    fn corpus_rendering_round_trips() {
        let constraints = vec![
            Constraint::eq("Name", Scalar::Str("Legume".to_string())),
            Constraint {
                key: "AverageRating".to_string(),
                op: ConstraintOp::Ge(4),
            },
            Constraint {
                key: "Food".to_string(),
                op: ConstraintOp::Neq(Scalar::Str("Chinese".to_string())),
            },
        ];
        let obj = constraints_to_corpus(&constraints);
        assert_eq!(obj["AverageRating"], "api.is_at_least(4)");
        assert_eq!(obj["Food"], "api.is_not(\"Chinese\")");
        // The corpus object is key-sorted, so reparse order is canonical.
        let mut sorted = constraints.clone();
        sorted.sort_by(|a, b| a.key.cmp(&b.key));
        assert_eq!(parse_corpus_constraints(&obj), sorted);
    }

    #[test]
    fn check_and_book_semantics() {
        let set = KbSet::new([restaurant_table()]);
        let mut rng = stream(3, "kb", 0);
        let c = vec![Constraint::eq("Name", Scalar::Str("Legume".to_string()))];
        let check = set
            .execute("restaurant_search", QueryKind::Check, &c, &mut rng)
            .unwrap();
        assert_eq!(check.total_items, 1);
        assert_eq!(
            check.item.as_ref().unwrap().fields["Message"],
            Scalar::Str("Available".to_string())
        );

        let c = vec![Constraint::eq("Name", Scalar::Str("Nowhere".to_string()))];
        let check = set
            .execute("restaurant_search", QueryKind::Check, &c, &mut rng)
            .unwrap();
        assert_eq!(check.total_items, 0);
        assert_eq!(
            check.item.as_ref().unwrap().fields["Message"],
            Scalar::Str("Unavailable".to_string())
        );

        let book = set
            .execute("restaurant_search", QueryKind::Book, &c, &mut rng)
            .unwrap();
        assert_eq!(book.total_items, -1);
        assert_eq!(
            book.item.as_ref().unwrap().fields["Message"],
            Scalar::Str("Booked".to_string())
        );
    }

    #[test]
    fn request_type_constraint_routes_kind() {
        let set = KbSet::new([restaurant_table()]);
        let mut rng = stream(3, "kb", 1);
        let c = vec![
            Constraint::eq(REQUEST_TYPE_KEY, Scalar::Str("Book".to_string())),
            Constraint::eq("Name", Scalar::Str("Legume".to_string())),
        ];
        let result = set
            .execute("restaurant_search", QueryKind::Check, &c, &mut rng)
            .unwrap();
        assert_eq!(result.total_items, -1);
        assert_eq!(
            result.item.as_ref().unwrap().fields["Message"],
            Scalar::Str("Booked".to_string())
        );
    }

    #[test]
    fn adding_constraints_never_increases_matches() {
        let table = restaurant_table();
        let base = vec![Constraint::eq("Location", Scalar::Str("North".to_string()))];
        let more = {
            let mut v = base.clone();
            v.push(Constraint {
                key: "AverageRating".to_string(),
                op: ConstraintOp::Ge(5),
            });
            v
        };
        assert!(table.matches(&more).unwrap().len() <= table.matches(&base).unwrap().len());
    }
}
