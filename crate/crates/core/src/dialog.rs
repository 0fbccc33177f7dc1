//! The dialog/event data model and canonical JSON reader/writer.
//!
//! Dialogs are a three-party interaction (user <-> wizard <-> knowledge
//! base) stored as JSON files. Every event has an `Agent` and an `Action`;
//! which further fields are legal depends on that pair — the field-presence
//! matrix below is enforced both at construction and on read. Unknown
//! fields (e.g. timestamps) are preserved opaquely so corpus files
//! round-trip.
//!
//! Writing is canonical: objects are emitted with lexicographically sorted
//! keys, so identical dialogs serialize to identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::kb::{constraints_to_corpus, parse_corpus_constraints, Constraint, KbItem};
use crate::schema::{query_action, ActionLabel};

pub const FORMAT_VERSION: i64 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum DialogError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("unsupported format version {0}")]
    VersionMismatch(i64),
    #[error("illegal event shape for {agent}/{action}: {detail}")]
    IllegalEventShape {
        agent: String,
        action: String,
        detail: String,
    },
    #[error("invalid dialog: {0}")]
    InvalidDialog(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Agent {
    User,
    Wizard,
    KnowledgeBase,
    UserGuide,
}

impl Agent {
    pub fn as_str(self) -> &'static str {
        match self {
            Agent::User => "User",
            Agent::Wizard => "Wizard",
            Agent::KnowledgeBase => "KnowledgeBase",
            Agent::UserGuide => "UserGuide",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "User" => Some(Agent::User),
            "Wizard" => Some(Agent::Wizard),
            "KnowledgeBase" => Some(Agent::KnowledgeBase),
            "UserGuide" => Some(Agent::UserGuide),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventAction {
    Utter,
    Complete,
    RequestSuggestions,
    PickSuggestion,
    Query,
    SelectTopic,
    SelectPrimary,
    SelectSecondary,
    Return,
    Instruct,
}

impl EventAction {
    pub fn as_str(self) -> &'static str {
        match self {
            EventAction::Utter => "utter",
            EventAction::Complete => "complete",
            EventAction::RequestSuggestions => "request_suggestions",
            EventAction::PickSuggestion => "pick_suggestion",
            EventAction::Query => "query",
            EventAction::SelectTopic => "select_topic",
            EventAction::SelectPrimary => "select_primary",
            EventAction::SelectSecondary => "select_secondary",
            EventAction::Return => "return",
            EventAction::Instruct => "instruct",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "utter" => Some(EventAction::Utter),
            "complete" => Some(EventAction::Complete),
            "request_suggestions" => Some(EventAction::RequestSuggestions),
            "pick_suggestion" => Some(EventAction::PickSuggestion),
            "query" => Some(EventAction::Query),
            "select_topic" => Some(EventAction::SelectTopic),
            "select_primary" => Some(EventAction::SelectPrimary),
            "select_secondary" => Some(EventAction::SelectSecondary),
            "return" => Some(EventAction::Return),
            "instruct" => Some(EventAction::Instruct),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Text,
    Intent,
    IntentOptions,
    Constraints,
    Api,
    PrimaryItem,
    SecondaryItem,
    Item,
    TotalItems,
    Topic,
}

impl Field {
    const ALL: [Field; 10] = [
        Field::Text,
        Field::Intent,
        Field::IntentOptions,
        Field::Constraints,
        Field::Api,
        Field::PrimaryItem,
        Field::SecondaryItem,
        Field::Item,
        Field::TotalItems,
        Field::Topic,
    ];

    fn key(self) -> &'static str {
        match self {
            Field::Text => "Text",
            Field::Intent => "Intent",
            Field::IntentOptions => "IntentOptions",
            Field::Constraints => "Constraints",
            Field::Api => "API",
            Field::PrimaryItem => "PrimaryItem",
            Field::SecondaryItem => "SecondaryItem",
            Field::Item => "Item",
            Field::TotalItems => "TotalItems",
            Field::Topic => "Topic",
        }
    }
}

/// Which fields are legal for an (agent, action) pair. `None` means the
/// pair itself is illegal. Required fields must be present and non-null;
/// nullable fields may be absent or null.
fn event_shape(agent: Agent, action: EventAction) -> Option<(&'static [Field], &'static [Field])> {
    use EventAction::*;
    use Field::*;
    const ITEMS: &[Field] = &[PrimaryItem, SecondaryItem];
    match (agent, action) {
        (Agent::User, Utter) => Some((&[Text], &[])),
        (Agent::User, Complete) => Some((&[], &[])),
        (Agent::Wizard, RequestSuggestions) => Some((&[Text], ITEMS)),
        (Agent::Wizard, PickSuggestion) => Some((&[Text, Intent, IntentOptions], ITEMS)),
        (Agent::Wizard, Utter) => Some((&[Text], ITEMS)),
        (Agent::Wizard, Query) => Some((&[Constraints, Api], ITEMS)),
        (Agent::Wizard, SelectTopic) => Some((&[Topic], ITEMS)),
        (Agent::Wizard, SelectPrimary) => Some((&[], ITEMS)),
        (Agent::Wizard, SelectSecondary) => Some((&[], ITEMS)),
        (Agent::KnowledgeBase, Return) => Some((&[TotalItems, Topic], &[Item])),
        (Agent::UserGuide, Instruct) => Some((&[Text], &[])),
        _ => None,
    }
}

/// One dialog event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Event {
    pub agent: Option<Agent>,
    pub action: Option<EventAction>,
    pub text: Option<String>,
    pub intent: Option<ActionLabel>,
    pub intent_options: Option<Vec<ActionLabel>>,
    pub constraints: Option<Vec<Constraint>>,
    pub api: Option<String>,
    pub primary_item: Option<KbItem>,
    pub secondary_item: Option<KbItem>,
    pub item: Option<KbItem>,
    pub total_items: Option<i64>,
    pub topic: Option<String>,
    /// Unrecognized fields (e.g. timestamps), preserved for round-trips.
    pub extra: BTreeMap<String, Value>,
}

impl Event {
    pub fn user_utter(text: impl Into<String>) -> Event {
        Event {
            agent: Some(Agent::User),
            action: Some(EventAction::Utter),
            text: Some(text.into()),
            ..Event::default()
        }
    }

    pub fn user_complete() -> Event {
        Event {
            agent: Some(Agent::User),
            action: Some(EventAction::Complete),
            ..Event::default()
        }
    }

    pub fn wizard_pick(
        text: impl Into<String>,
        intent: ActionLabel,
        options: Vec<ActionLabel>,
    ) -> Event {
        Event {
            agent: Some(Agent::Wizard),
            action: Some(EventAction::PickSuggestion),
            text: Some(text.into()),
            intent: Some(intent),
            intent_options: Some(options),
            ..Event::default()
        }
    }

    pub fn wizard_query(api: impl Into<String>, mut constraints: Vec<Constraint>) -> Event {
        // The corpus stores constraints as a JSON object, so key order is
        // canonical; sort here so round-trips compare equal.
        constraints.sort_by(|a, b| a.key.cmp(&b.key));
        Event {
            agent: Some(Agent::Wizard),
            action: Some(EventAction::Query),
            api: Some(api.into()),
            constraints: Some(constraints),
            ..Event::default()
        }
    }

    pub fn wizard_select_topic(topic: impl Into<String>) -> Event {
        Event {
            agent: Some(Agent::Wizard),
            action: Some(EventAction::SelectTopic),
            topic: Some(topic.into()),
            ..Event::default()
        }
    }

    pub fn kb_return(item: Option<KbItem>, total_items: i64, topic: impl Into<String>) -> Event {
        Event {
            agent: Some(Agent::KnowledgeBase),
            action: Some(EventAction::Return),
            item,
            total_items: Some(total_items),
            topic: Some(topic.into()),
            ..Event::default()
        }
    }

    pub fn guide_instruct(text: impl Into<String>) -> Event {
        Event {
            agent: Some(Agent::UserGuide),
            action: Some(EventAction::Instruct),
            text: Some(text.into()),
            ..Event::default()
        }
    }

    fn has(&self, field: Field) -> bool {
        match field {
            Field::Text => self.text.is_some(),
            Field::Intent => self.intent.is_some(),
            Field::IntentOptions => self.intent_options.is_some(),
            Field::Constraints => self.constraints.is_some(),
            Field::Api => self.api.is_some(),
            Field::PrimaryItem => self.primary_item.is_some(),
            Field::SecondaryItem => self.secondary_item.is_some(),
            Field::Item => self.item.is_some(),
            Field::TotalItems => self.total_items.is_some(),
            Field::Topic => self.topic.is_some(),
        }
    }

    /// Enforce the field-presence matrix plus the per-action invariants.
    pub fn validate(&self) -> Result<(), DialogError> {
        let (agent, action) = match (self.agent, self.action) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(DialogError::IllegalEventShape {
                    agent: self
                        .agent
                        .map_or("<missing>".to_string(), |a| a.as_str().to_string()),
                    action: self
                        .action
                        .map_or("<missing>".to_string(), |a| a.as_str().to_string()),
                    detail: "missing Agent or Action".to_string(),
                })
            }
        };
        let illegal = |detail: String| DialogError::IllegalEventShape {
            agent: agent.as_str().to_string(),
            action: action.as_str().to_string(),
            detail,
        };
        let Some((required, nullable)) = event_shape(agent, action) else {
            return Err(illegal("agent never performs this action".to_string()));
        };
        for field in required {
            if !self.has(*field) {
                return Err(illegal(format!("missing required field {}", field.key())));
            }
        }
        for field in Field::ALL {
            if self.has(field) && !required.contains(&field) && !nullable.contains(&field) {
                return Err(illegal(format!("unexpected field {}", field.key())));
            }
        }
        if action == EventAction::PickSuggestion {
            let intent = self.intent.as_ref().expect("required field checked");
            let options = self.intent_options.as_ref().expect("required field checked");
            if intent.as_str() != "custom" && !options.contains(intent) {
                return Err(illegal(format!(
                    "intent `{intent}` not among IntentOptions and not `custom`"
                )));
            }
        }
        if let Some(total) = self.total_items {
            if total < -1 {
                return Err(illegal(format!("TotalItems {total} < -1")));
            }
        }
        if let Some(constraints) = &self.constraints {
            let mut keys: Vec<&str> = constraints.iter().map(|c| c.key.as_str()).collect();
            keys.sort_unstable();
            keys.dedup();
            if keys.len() != constraints.len() {
                return Err(illegal("duplicate constraint keys".to_string()));
            }
            if constraints.iter().any(|c| c.to_corpus_value().is_none()) {
                return Err(illegal(
                    "constraint has no corpus representation".to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(v: &Value) -> Result<Event, DialogError> {
        let obj = v
            .as_object()
            .ok_or_else(|| DialogError::MalformedJson("event is not an object".to_string()))?;
        let shape_err = |detail: String| DialogError::IllegalEventShape {
            agent: obj
                .get("Agent")
                .and_then(Value::as_str)
                .unwrap_or("<missing>")
                .to_string(),
            action: obj
                .get("Action")
                .and_then(Value::as_str)
                .unwrap_or("<missing>")
                .to_string(),
            detail,
        };

        let agent = obj
            .get("Agent")
            .and_then(Value::as_str)
            .and_then(Agent::parse)
            .ok_or_else(|| shape_err("missing or unknown Agent".to_string()))?;
        let action = obj
            .get("Action")
            .and_then(Value::as_str)
            .and_then(EventAction::parse)
            .ok_or_else(|| shape_err("missing or unknown Action".to_string()))?;

        let mut event = Event {
            agent: Some(agent),
            action: Some(action),
            ..Event::default()
        };
        for (key, value) in obj {
            if key == "Agent" || key == "Action" {
                continue;
            }
            if value.is_null() {
                // Nullable fields serialize as explicit nulls; absent and
                // null are equivalent on read.
                if Field::ALL.iter().any(|f| f.key() == key) {
                    continue;
                }
                event.extra.insert(key.clone(), Value::Null);
                continue;
            }
            match key.as_str() {
                "Text" => {
                    event.text = Some(
                        value
                            .as_str()
                            .ok_or_else(|| shape_err("Text is not a string".to_string()))?
                            .to_string(),
                    )
                }
                "Intent" => {
                    let s = value
                        .as_str()
                        .ok_or_else(|| shape_err("Intent is not a string".to_string()))?;
                    event.intent = Some(
                        ActionLabel::new(s).map_err(|e| shape_err(format!("bad intent: {e}")))?,
                    );
                }
                "IntentOptions" => {
                    let arr = value
                        .as_array()
                        .ok_or_else(|| shape_err("IntentOptions is not a list".to_string()))?;
                    let mut options = Vec::with_capacity(arr.len());
                    for v in arr {
                        let s = v.as_str().ok_or_else(|| {
                            shape_err("IntentOptions entry is not a string".to_string())
                        })?;
                        options.push(
                            ActionLabel::new(s)
                                .map_err(|e| shape_err(format!("bad intent option: {e}")))?,
                        );
                    }
                    event.intent_options = Some(options);
                }
                "Constraints" => {
                    let map = value
                        .as_object()
                        .ok_or_else(|| shape_err("Constraints is not an object".to_string()))?;
                    event.constraints = Some(parse_corpus_constraints(map));
                }
                "API" => {
                    event.api = Some(
                        value
                            .as_str()
                            .ok_or_else(|| shape_err("API is not a string".to_string()))?
                            .to_string(),
                    )
                }
                "PrimaryItem" => {
                    event.primary_item = Some(
                        KbItem::from_json(value)
                            .map_err(|e| shape_err(format!("bad PrimaryItem: {e}")))?,
                    )
                }
                "SecondaryItem" => {
                    event.secondary_item = Some(
                        KbItem::from_json(value)
                            .map_err(|e| shape_err(format!("bad SecondaryItem: {e}")))?,
                    )
                }
                "Item" => {
                    event.item = Some(
                        KbItem::from_json(value).map_err(|e| shape_err(format!("bad Item: {e}")))?,
                    )
                }
                "TotalItems" => {
                    event.total_items = Some(
                        value
                            .as_i64()
                            .ok_or_else(|| shape_err("TotalItems is not an integer".to_string()))?,
                    )
                }
                "Topic" => {
                    event.topic = Some(
                        value
                            .as_str()
                            .ok_or_else(|| shape_err("Topic is not a string".to_string()))?
                            .to_string(),
                    )
                }
                _ => {
                    event.extra.insert(key.clone(), value.clone());
                }
            }
        }
        event.validate()?;
        Ok(event)
    }

    pub fn to_json(&self) -> Value {
        debug_assert!(self.validate().is_ok());
        let mut obj = Map::new();
        obj.insert(
            "Agent".to_string(),
            Value::String(self.agent.expect("validated").as_str().to_string()),
        );
        obj.insert(
            "Action".to_string(),
            Value::String(self.action.expect("validated").as_str().to_string()),
        );
        let (required, nullable) =
            event_shape(self.agent.expect("validated"), self.action.expect("validated"))
                .expect("validated");
        for field in required.iter().chain(nullable) {
            let value = match field {
                Field::Text => self.text.as_ref().map(|t| Value::String(t.clone())),
                Field::Intent => self.intent.as_ref().map(|i| Value::String(i.to_string())),
                Field::IntentOptions => self.intent_options.as_ref().map(|opts| {
                    Value::Array(opts.iter().map(|o| Value::String(o.to_string())).collect())
                }),
                Field::Constraints => self
                    .constraints
                    .as_ref()
                    .map(|cs| Value::Object(constraints_to_corpus(cs))),
                Field::Api => self.api.as_ref().map(|a| Value::String(a.clone())),
                Field::PrimaryItem => self.primary_item.as_ref().map(KbItem::to_json),
                Field::SecondaryItem => self.secondary_item.as_ref().map(KbItem::to_json),
                Field::Item => self.item.as_ref().map(KbItem::to_json),
                Field::TotalItems => self.total_items.map(Value::from),
                Field::Topic => self.topic.as_ref().map(|t| Value::String(t.clone())),
            };
            match value {
                Some(v) => obj.insert(field.key().to_string(), v),
                // Nullable fields are written as explicit nulls.
                None if nullable.contains(field) => {
                    obj.insert(field.key().to_string(), Value::Null)
                }
                None => None,
            };
        }
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }
}

/// Scenario metadata attached to every dialog.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub domains: Vec<String>,
    pub user_task: String,
    pub wizard_task: String,
    pub capabilities: Vec<String>,
    pub happy: bool,
    pub multi_task: bool,
}

impl Scenario {
    fn from_json(v: &Value) -> Result<Scenario, DialogError> {
        let obj = v
            .as_object()
            .ok_or_else(|| DialogError::MalformedJson("Scenario is not an object".to_string()))?;
        let str_list = |key: &str| -> Vec<String> {
            obj.get(key)
                .and_then(Value::as_array)
                .map(|a| {
                    a.iter()
                        .filter_map(Value::as_str)
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default()
        };
        Ok(Scenario {
            domains: str_list("Domains"),
            user_task: obj
                .get("UserTask")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
            wizard_task: obj
                .get("WizardTask")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
            capabilities: str_list("WizardCapabilities"),
            happy: obj.get("Happy").and_then(Value::as_bool).unwrap_or(false),
            multi_task: obj
                .get("MultiTask")
                .and_then(Value::as_bool)
                .unwrap_or(false),
        })
    }

    fn to_json(&self) -> Value {
        json!({
            "Domains": self.domains,
            "UserTask": self.user_task,
            "WizardTask": self.wizard_task,
            "WizardCapabilities": self.capabilities,
            "Happy": self.happy,
            "MultiTask": self.multi_task,
        })
    }
}

/// A complete dialog in the corpus format.
#[derive(Debug, Clone, PartialEq)]
pub struct Dialog {
    pub format_version: i64,
    pub dialog_id: i64,
    pub batch_id: String,
    pub completion_level: String,
    pub scenario: Scenario,
    pub events: Vec<Event>,
    pub wizard_worker: String,
    pub user_worker: String,
    pub user_questionnaire: Vec<(String, String)>,
    pub wizard_questionnaire: Vec<(String, String)>,
    pub extra: BTreeMap<String, Value>,
}

impl Dialog {
    /// Construct and validate. Completed dialogs must have events, the
    /// version must match, and `MultiTask` must agree with the capability
    /// count.
    pub fn new(
        dialog_id: i64,
        batch_id: String,
        scenario: Scenario,
        events: Vec<Event>,
    ) -> Result<Dialog, DialogError> {
        let dialog = Dialog {
            format_version: FORMAT_VERSION,
            dialog_id,
            batch_id,
            completion_level: "full".to_string(),
            scenario,
            events,
            wizard_worker: "sim-wizard".to_string(),
            user_worker: "sim-user".to_string(),
            user_questionnaire: Vec::new(),
            wizard_questionnaire: Vec::new(),
            extra: BTreeMap::new(),
        };
        dialog.validate()?;
        Ok(dialog)
    }

    pub fn validate(&self) -> Result<(), DialogError> {
        if self.format_version != FORMAT_VERSION {
            return Err(DialogError::VersionMismatch(self.format_version));
        }
        if self.events.is_empty() {
            return Err(DialogError::InvalidDialog("no events".to_string()));
        }
        if self.scenario.multi_task != (self.scenario.capabilities.len() > 1) {
            return Err(DialogError::InvalidDialog(
                "MultiTask flag disagrees with WizardCapabilities".to_string(),
            ));
        }
        for event in &self.events {
            event.validate()?;
        }
        Ok(())
    }
}

fn questionnaire_from_json(v: Option<&Value>) -> Result<Vec<(String, String)>, DialogError> {
    let Some(arr) = v.and_then(Value::as_array) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(arr.len());
    for entry in arr {
        match entry {
            Value::Array(pair) if pair.len() == 2 => out.push((
                pair[0].as_str().unwrap_or_default().to_string(),
                pair[1].as_str().unwrap_or_default().to_string(),
            )),
            Value::Object(obj) => out.push((
                obj.get("Question")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
                obj.get("Answer")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
            )),
            other => {
                return Err(DialogError::MalformedJson(format!(
                    "bad questionnaire entry {other}"
                )))
            }
        }
    }
    Ok(out)
}

const DIALOG_KEYS: [&str; 10] = [
    "FORMAT-VERSION",
    "dialogID",
    "BatchID",
    "CompletionLevel",
    "Scenario",
    "Events",
    "AnonymizedWizardWorkerID",
    "AnonymizedUserWorkerID",
    "UserQuestionnaire",
    "WizardQuestionnaire",
];

/// Parse a dialog from JSON text, validating the event shape matrix.
pub fn read_dialog(raw: &str) -> Result<Dialog, DialogError> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| DialogError::MalformedJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| DialogError::MalformedJson("dialog is not an object".to_string()))?;

    let version = obj
        .get("FORMAT-VERSION")
        .and_then(Value::as_i64)
        .ok_or_else(|| DialogError::MalformedJson("missing FORMAT-VERSION".to_string()))?;
    if version != FORMAT_VERSION {
        return Err(DialogError::VersionMismatch(version));
    }

    let events = obj
        .get("Events")
        .and_then(Value::as_array)
        .ok_or_else(|| DialogError::MalformedJson("missing Events".to_string()))?
        .iter()
        .map(Event::from_json)
        .collect::<Result<Vec<_>, _>>()?;

    let scenario = obj
        .get("Scenario")
        .map(Scenario::from_json)
        .transpose()?
        .unwrap_or_default();

    let mut extra = BTreeMap::new();
    for (k, v) in obj {
        if !DIALOG_KEYS.contains(&k.as_str()) {
            extra.insert(k.clone(), v.clone());
        }
    }

    let get_str = |key: &str| {
        obj.get(key)
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    };
    Ok(Dialog {
        format_version: version,
        dialog_id: obj.get("dialogID").and_then(Value::as_i64).unwrap_or(0),
        batch_id: get_str("BatchID"),
        completion_level: get_str("CompletionLevel"),
        scenario,
        events,
        wizard_worker: get_str("AnonymizedWizardWorkerID"),
        user_worker: get_str("AnonymizedUserWorkerID"),
        user_questionnaire: questionnaire_from_json(obj.get("UserQuestionnaire"))?,
        wizard_questionnaire: questionnaire_from_json(obj.get("WizardQuestionnaire"))?,
        extra,
    })
}

fn questionnaire_to_json(q: &[(String, String)]) -> Value {
    Value::Array(
        q.iter()
            .map(|(question, answer)| json!([question, answer]))
            .collect(),
    )
}

/// Serialize canonically (sorted keys, two-space indent).
/// `read_dialog(write_dialog(d)) == d` for every valid dialog.
pub fn write_dialog(dialog: &Dialog) -> String {
    debug_assert!(dialog.validate().is_ok());
    let mut obj = Map::new();
    obj.insert("FORMAT-VERSION".to_string(), Value::from(dialog.format_version));
    obj.insert("dialogID".to_string(), Value::from(dialog.dialog_id));
    obj.insert("BatchID".to_string(), Value::String(dialog.batch_id.clone()));
    obj.insert(
        "CompletionLevel".to_string(),
        Value::String(dialog.completion_level.clone()),
    );
    obj.insert("Scenario".to_string(), dialog.scenario.to_json());
    obj.insert(
        "Events".to_string(),
        Value::Array(dialog.events.iter().map(Event::to_json).collect()),
    );
    obj.insert(
        "AnonymizedWizardWorkerID".to_string(),
        Value::String(dialog.wizard_worker.clone()),
    );
    obj.insert(
        "AnonymizedUserWorkerID".to_string(),
        Value::String(dialog.user_worker.clone()),
    );
    obj.insert(
        "UserQuestionnaire".to_string(),
        questionnaire_to_json(&dialog.user_questionnaire),
    );
    obj.insert(
        "WizardQuestionnaire".to_string(),
        questionnaire_to_json(&dialog.wizard_questionnaire),
    );
    for (k, v) in &dialog.extra {
        obj.insert(k.clone(), v.clone());
    }
    serde_json::to_string_pretty(&Value::Object(obj)).expect("dialog serialization cannot fail")
}

/// The ordered ground-truth wizard action labels of a dialog: the intent of
/// each `pick_suggestion` (including `custom`) plus `query <api>`
/// pseudo-labels for query events. When `task` is given, labels are
/// restricted to turns attributable to that task (via `select_topic` and
/// query `API` fields).
pub fn wizard_action_sequence(dialog: &Dialog, task: Option<&str>) -> Vec<String> {
    let mut labels = Vec::new();
    let mut topic: Option<String> = match dialog.scenario.capabilities.as_slice() {
        [only] => Some(only.clone()),
        _ => None,
    };
    for event in &dialog.events {
        match (event.agent, event.action) {
            (Some(Agent::Wizard), Some(EventAction::SelectTopic)) => {
                topic.clone_from(&event.topic);
            }
            (Some(Agent::Wizard), Some(EventAction::PickSuggestion)) => {
                if task.is_none() || topic.as_deref() == task {
                    labels.push(event.intent.as_ref().expect("validated").to_string());
                }
            }
            (Some(Agent::Wizard), Some(EventAction::Query)) => {
                let api = event.api.as_ref().expect("validated");
                topic = Some(api.clone());
                if task.is_none() || Some(api.as_str()) == task {
                    labels.push(query_action(api));
                }
            }
            _ => {}
        }
    }
    labels
}

/// Number of turns under the statistics definition: user/wizard utterances,
/// picked suggestions, and knowledge base queries. A wizard `utter`
/// immediately following a `pick_suggestion` is its realization and does
/// not count again. KB returns and user-guide instructions are not turns.
pub fn count_turns(dialog: &Dialog) -> usize {
    let mut turns = 0;
    let mut prev_was_pick = false;
    for event in &dialog.events {
        let action = event.action.expect("validated");
        match action {
            EventAction::Utter => {
                let collapsed = prev_was_pick && event.agent == Some(Agent::Wizard);
                if !collapsed {
                    turns += 1;
                }
            }
            EventAction::PickSuggestion | EventAction::Query => turns += 1,
            _ => {}
        }
        prev_was_pick = action == EventAction::PickSuggestion;
    }
    turns
}

/// Read every `*.json` dialog under `dir` (recursively), in sorted path
/// order. Files that fail to parse are reported alongside the successes.
pub fn read_corpus_dir(dir: &Path) -> (Vec<Dialog>, Vec<(PathBuf, DialogError)>) {
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let results: Vec<(PathBuf, Result<Dialog, DialogError>)> = paths
        .into_par_iter()
        .map(|path| {
            let parsed = std::fs::read_to_string(&path)
                .map_err(|e| DialogError::Io(format!("{}: {e}", path.display())))
                .and_then(|raw| read_dialog(&raw));
            (path, parsed)
        })
        .collect();
    let mut dialogs = Vec::new();
    let mut errors = Vec::new();
    for (path, result) in results {
        match result {
            Ok(d) => dialogs.push(d),
            Err(e) => errors.push((path, e)),
        }
    }
    (dialogs, errors)
}
