//! The deterministic, schema-following wizard policy.
//!
//! The policy is a pure function of the dialog state and the incoming user
//! event; replaying the same inputs yields the same decisions. On
//! happy-path dialogs the emitted action sequence equals the schema's
//! graph walk. The main rules:
//!
//! - On (re)entry into a task the cursor jumps to the point that makes most
//!   sense: the first prescribed node whose information is still missing.
//! - An ask node whose slot was already volunteered is skipped.
//! - `query_*` nodes issue a knowledge base query built from the collected
//!   slots; `available`/`unavailable` branches resolve from the returned
//!   `Message`, `found`/`none_found` from the match count, and `yes`/`no`
//!   from user polarity.
//! - Off-schema input gets the task's `out_of_scope` reply when defined,
//!   `anything_else` otherwise; neither moves the cursor.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use regex::Regex;
use thiserror::Error;

use crate::dialog::Event;
use crate::kb::{Constraint, ConstraintOp, FieldType, QueryResult, Scalar, REQUEST_TYPE_KEY};
use crate::profile::{BindOp, ExtractionRule, SharedPools, TaskProfile};
use crate::rng;
use crate::schema::{is_ask_label, is_query_label, ActionLabel, Schema};
use crate::suite::TaskSuite;
use crate::text::{snake_case, tokenize};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no capability matches the user's request")]
    NoActiveSchema,
    #[error(transparent)]
    Schema(#[from] crate::schema::SchemaError),
    #[error("knowledge base: {0}")]
    Kb(#[from] crate::kb::KbError),
    #[error("task `{0}` has no profile")]
    MissingProfile(String),
}

/// Mutable per-dialog state. Each task keeps its own cursor so returning to
/// a task resumes rather than restarts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DialogState {
    pub active_task: Option<String>,
    pub cursors: BTreeMap<String, ActionLabel>,
    pub collected: BTreeMap<String, BTreeMap<String, String>>,
    pub last_kb: Option<QueryResult>,
    pub greeted: bool,
    /// Set after an availability offer; the next bare yes/no resolves it.
    pub awaiting_confirmation: bool,
}

impl DialogState {
    /// Cursor nodes must belong to their schema and collected slot keys to
    /// the task's declared slots.
    pub fn validate(&self, suite: &TaskSuite) -> Result<(), PolicyError> {
        for (task, cursor) in &self.cursors {
            let schema = suite
                .schemas
                .get(task)
                .ok_or_else(|| PolicyError::MissingProfile(task.clone()))?;
            if !schema.contains(cursor) {
                return Err(PolicyError::Schema(
                    crate::schema::SchemaError::UnknownNode(cursor.to_string()),
                ));
            }
        }
        for (task, slots) in &self.collected {
            let profile = suite
                .profile(task)
                .ok_or_else(|| PolicyError::MissingProfile(task.clone()))?;
            for key in slots.keys() {
                if profile.slot(key).is_none() {
                    return Err(PolicyError::Schema(
                        crate::schema::SchemaError::MissingPlaceholderValue(key.clone()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A planned knowledge base query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub api: String,
    pub kind: crate::kb::QueryKind,
    pub constraints: Vec<Constraint>,
}

/// The outcome of one policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: ActionLabel,
    /// Free-form reply text when `action` is `custom`.
    pub custom_text: Option<String>,
    /// Set when `action` is a query node.
    pub query: Option<QueryPlan>,
    /// Task switched to at the start of this turn, if any.
    pub switched: Option<String>,
    pub state: DialogState,
}

/// Keyword-score a user utterance against each capability. Returns
/// `(task, occurrence count, first match position)` per capability.
pub fn keyword_scores<'a>(
    utterance: &str,
    capabilities: &'a [String],
    lexicon: &BTreeMap<String, Vec<String>>,
) -> Vec<(&'a str, usize, usize)> {
    let tokens = tokenize(utterance);
    capabilities
        .iter()
        .map(|task| {
            let keywords = lexicon.get(task).map(Vec::as_slice).unwrap_or(&[]);
            let mut count = 0;
            let mut first = usize::MAX;
            for (pos, token) in tokens.iter().enumerate() {
                if keywords.iter().any(|k| k == token) {
                    count += 1;
                    first = first.min(pos);
                }
            }
            (task.as_str(), count, first)
        })
        .collect()
}

/// Pick the capability the utterance most plausibly requests: highest
/// keyword count, then earliest mention, then capability order. Absent when
/// nothing scores above zero.
pub fn detect_task<'a>(
    utterance: &str,
    capabilities: &'a [String],
    lexicon: &BTreeMap<String, Vec<String>>,
) -> Option<&'a str> {
    keyword_scores(utterance, capabilities, lexicon)
        .into_iter()
        .filter(|(_, count, _)| *count > 0)
        .min_by_key(|&(_, count, first)| (std::cmp::Reverse(count), first))
        .map(|(task, _, _)| task)
}

/// Apply extraction rules to an utterance. Template-derived rules are the
/// exact inverses of the simulator's generation templates, so extraction is
/// lossless on simulated text; pattern rules cover free text. Bare rules
/// (a template that is just the value) fire only for `pending` — the slot
/// the wizard asked for last.
pub fn extract_slots(
    utterance: &str,
    pending: Option<&str>,
    rules: &[ExtractionRule],
) -> BTreeMap<String, String> {
    let trimmed = utterance.trim();
    let mut out = BTreeMap::new();
    for rule in rules {
        if out.contains_key(&rule.slot) {
            continue;
        }
        if rule.bare && pending != Some(rule.slot.as_str()) {
            continue;
        }
        if let Some(caps) = rule.regex.captures(trimmed) {
            if let Some(value) = caps.get(1).and_then(|m| rule.accept(m.as_str())) {
                out.insert(rule.slot.clone(), value);
            }
        }
    }
    out
}

const AFFIRM_TOKENS: [&str; 8] = [
    "yes", "yeah", "yep", "sure", "ok", "okay", "alright", "certainly",
];
const AFFIRM_PHRASES: [&str; 5] = [
    "sounds good",
    "go ahead",
    "go for it",
    "that works",
    "please do",
];
const DENY_TOKENS: [&str; 5] = ["no", "nope", "nah", "nothing", "never"];
const ACK_TOKENS: [&str; 7] = [
    "thanks", "thank", "perfect", "great", "awesome", "wonderful", "cool",
];

/// Gratitude or appreciation; weaker than an affirmation, only used to let
/// the flow continue after an inform.
pub fn is_acknowledgement(utterance: &str) -> bool {
    polarity(utterance) == Some(Polarity::Affirm)
        || tokenize(utterance)
            .iter()
            .any(|t| ACK_TOKENS.contains(&t.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Affirm,
    Deny,
}

/// Small fixed-lexicon yes/no detection. A leading denial flips an affirm
/// ("no thanks" is a no); conflicting signals are ambiguous and return
/// `None`.
pub fn polarity(utterance: &str) -> Option<Polarity> {
    let tokens = tokenize(utterance);
    let lower = utterance.to_lowercase();
    let affirm = tokens.iter().any(|t| AFFIRM_TOKENS.contains(&t.as_str()))
        || AFFIRM_PHRASES.iter().any(|p| lower.contains(p));
    let deny = tokens.iter().any(|t| DENY_TOKENS.contains(&t.as_str()));
    match (affirm, deny) {
        (true, false) => Some(Polarity::Affirm),
        (false, true) => Some(Polarity::Deny),
        (true, true) => {
            if tokens
                .first()
                .is_some_and(|t| DENY_TOKENS.contains(&t.as_str()))
            {
                Some(Polarity::Deny)
            } else {
                None
            }
        }
        (false, false) => None,
    }
}

/// Inverse rules for the shared pools: change-of-mind utterances capture
/// `(slot display name, new value)`, refer-backs capture the display name.
#[derive(Debug)]
struct SharedRules {
    change: Vec<Regex>,
    refer_back: Vec<Regex>,
}

fn two_hole_inverse(template: &str, display_alt: &str) -> Option<Regex> {
    let a = template.find("{slot}")?;
    let b = template.find("{value}")?;
    if b < a {
        return None;
    }
    let head = regex::escape(&template[..a]);
    let mid = regex::escape(&template[a + 6..b]);
    let tail_raw = &template[b + 7..];
    let tail = regex::escape(tail_raw.trim_end_matches(['.', '?', '!']));
    Regex::new(&format!("^{head}({display_alt}){mid}(.+?){tail}[.?!]?$")).ok()
}

fn one_hole_inverse(template: &str, display_alt: &str) -> Option<Regex> {
    let a = template.find("{slot}")?;
    let head = regex::escape(&template[..a]);
    let tail_raw = &template[a + 6..];
    let tail = regex::escape(tail_raw.trim_end_matches(['.', '?', '!']));
    Regex::new(&format!("^{head}({display_alt}){tail}[.?!]?$")).ok()
}

impl SharedRules {
    /// The slot hole matches only known slot display names ("party size"),
    /// longest first, so lazy splitting cannot cut a multi-word display.
    fn compile(pools: &SharedPools, suite: &TaskSuite) -> SharedRules {
        let mut displays: Vec<String> = suite
            .profiles
            .values()
            .flat_map(|p| p.slots.iter().map(|s| slot_display(&s.id)))
            .collect();
        displays.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        displays.dedup();
        let display_alt = displays
            .iter()
            .map(|d| regex::escape(d))
            .collect::<Vec<_>>()
            .join("|");
        SharedRules {
            change: pools
                .change_mind_user
                .iter()
                .chain(&pools.environment_user)
                .filter_map(|t| two_hole_inverse(t, &display_alt))
                .collect(),
            refer_back: pools
                .refer_back_user
                .iter()
                .filter_map(|t| one_hole_inverse(t, &display_alt))
                .collect(),
        }
    }
}

/// Human-readable display form of a slot id (`doctor_name` -> "doctor name").
pub fn slot_display(id: &str) -> String {
    id.replace('_', " ")
}

/// The deterministic wizard over a task suite.
pub struct WizardPolicy<'a> {
    suite: &'a TaskSuite,
    capabilities: Vec<String>,
    lexicon: BTreeMap<String, Vec<String>>,
    shared_rules: SharedRules,
}

impl<'a> WizardPolicy<'a> {
    pub fn new(suite: &'a TaskSuite, capabilities: Vec<String>) -> Result<Self, PolicyError> {
        let mut lexicon = BTreeMap::new();
        for task in &capabilities {
            let profile = suite
                .profile(task)
                .ok_or_else(|| PolicyError::MissingProfile(task.clone()))?;
            lexicon.insert(task.clone(), profile.keywords.clone());
        }
        Ok(WizardPolicy {
            suite,
            capabilities,
            lexicon,
            shared_rules: SharedRules::compile(&suite.shared, suite),
        })
    }

    pub fn capabilities(&self) -> &[String] {
        &self.capabilities
    }

    fn schema(&self, task: &str) -> &Schema {
        self.suite.schemas.get(task).expect("capability validated")
    }

    fn profile(&self, task: &str) -> &TaskProfile {
        self.suite.profile(task).expect("capability validated")
    }

    fn label(&self, s: &str) -> ActionLabel {
        ActionLabel::new(s).expect("fixture labels are valid")
    }

    /// Look up a collected slot value; shared slots (the user's name) may be
    /// satisfied by any task.
    fn slot_value(&self, state: &DialogState, task: &str, slot: &str) -> Option<String> {
        if let Some(v) = state.collected.get(task).and_then(|m| m.get(slot)) {
            return Some(v.clone());
        }
        let spec = self.profile(task).slot(slot)?;
        if spec.shared {
            for values in state.collected.values() {
                if let Some(v) = values.get(slot) {
                    return Some(v.clone());
                }
            }
        }
        None
    }

    fn ask_slot_satisfied(&self, state: &DialogState, task: &str, node: &ActionLabel) -> bool {
        match self.profile(task).slot_for_node(node.as_str()) {
            Some(spec) => self.slot_value(state, task, &spec.id).is_some(),
            // Ask nodes without a bound slot are never skippable.
            None => false,
        }
    }

    /// First node of the prescribed opening that still needs doing: `hello`
    /// if the user was never greeted, else the first unsatisfied ask, else
    /// the first query node.
    fn jump(&self, state: &DialogState, task: &str) -> Option<ActionLabel> {
        let schema = self.schema(task);
        let entry = schema.entry()?;
        let walk = schema.walk(entry).ok()?;
        for node in &walk {
            if node.as_str() == "hello" && !state.greeted {
                return Some(node.clone());
            }
            if is_ask_label(node) && !self.ask_slot_satisfied(state, task, node) {
                return Some(node.clone());
            }
            if is_query_label(node) {
                return Some(node.clone());
            }
        }
        walk.last().cloned()
    }

    /// The next node after the cursor, skipping asks whose slots are already
    /// collected; an unanswered ask is repeated. Dead ends re-enter via
    /// [`jump`](Self::jump).
    fn advance(&self, state: &DialogState, task: &str) -> Option<ActionLabel> {
        if !state.greeted {
            let schema = self.schema(task);
            if let Some(entry) = schema.entry() {
                return Some(entry.clone());
            }
        }
        let Some(cursor) = state.cursors.get(task) else {
            return self.jump(state, task);
        };
        let schema = self.schema(task);
        if is_ask_label(cursor) && !self.ask_slot_satisfied(state, task, cursor) {
            return Some(cursor.clone());
        }
        let mut node = schema.next_node(cursor).ok()?.cloned();
        while let Some(n) = &node {
            if is_ask_label(n) && self.ask_slot_satisfied(state, task, n) {
                node = schema.next_node(n).ok()?.cloned();
            } else {
                break;
            }
        }
        node.or_else(|| self.jump(state, task))
    }

    /// Build the query plan for a query node from the collected slots.
    fn plan_query(&self, state: &DialogState, task: &str, node: &ActionLabel) -> QueryPlan {
        let profile = self.profile(task);
        let table = self.suite.kb.table(task).ok();
        let mut constraints = Vec::new();
        let spec = profile.query_for_node(node.as_str());
        if let Some(spec) = spec {
            for binding in &spec.constrain {
                let slot = profile.slot(&binding.slot).expect("validated");
                let Some(field) = slot.kb_field.clone() else {
                    continue;
                };
                let Some(raw) = self.slot_value(state, task, &slot.id) else {
                    continue;
                };
                let ty = table
                    .and_then(|t| t.field_type(&field))
                    .unwrap_or(FieldType::String);
                let scalar = match ty {
                    FieldType::Integer => match raw.parse::<i64>() {
                        Ok(v) => Scalar::Int(v),
                        // Unparseable numeric answers cannot constrain.
                        Err(_) => continue,
                    },
                    FieldType::Boolean => match raw.parse::<bool>() {
                        Ok(v) => Scalar::Bool(v),
                        Err(_) => continue,
                    },
                    FieldType::String => Scalar::Str(raw),
                };
                let op = match (binding.op, &scalar) {
                    (BindOp::Eq, _) => ConstraintOp::Eq(scalar),
                    (BindOp::Neq, _) => ConstraintOp::Neq(scalar),
                    (BindOp::Gt, Scalar::Int(v)) => ConstraintOp::Gt(*v),
                    (BindOp::Ge, Scalar::Int(v)) => ConstraintOp::Ge(*v),
                    (BindOp::Lt, Scalar::Int(v)) => ConstraintOp::Lt(*v),
                    (BindOp::Le, Scalar::Int(v)) => ConstraintOp::Le(*v),
                    _ => ConstraintOp::Eq(scalar),
                };
                constraints.push(Constraint { key: field, op });
            }
            if let Some(request_type) = &spec.request_type {
                constraints.push(Constraint::eq(
                    REQUEST_TYPE_KEY,
                    Scalar::Str(request_type.clone()),
                ));
            }
        }
        QueryPlan {
            api: task.to_string(),
            kind: spec.map_or(crate::kb::QueryKind::Search, |s| s.kind),
            constraints,
        }
    }

    fn decision_for_node(
        &self,
        mut state: DialogState,
        task: &str,
        node: ActionLabel,
        switched: Option<String>,
    ) -> Decision {
        if node.as_str() == "hello" {
            state.greeted = true;
        }
        let query = if is_query_label(&node) {
            Some(self.plan_query(&state, task, &node))
        } else {
            None
        };
        state.cursors.insert(task.to_string(), node.clone());
        state.awaiting_confirmation = false;
        Decision {
            action: node,
            custom_text: None,
            query,
            switched,
            state,
        }
    }

    /// The side reply for off-schema input; does not move the cursor.
    fn off_schema(&self, state: &DialogState, task: &str, switched: Option<String>) -> Decision {
        let schema = self.schema(task);
        let label = if schema.contains(&self.label("out_of_scope")) {
            self.label("out_of_scope")
        } else {
            self.label("anything_else")
        };
        Decision {
            action: label,
            custom_text: None,
            query: None,
            switched,
            state: state.clone(),
        }
    }

    fn bye_label(&self, task: &str) -> ActionLabel {
        let schema = self.schema(task);
        schema
            .replies()
            .keys()
            .find(|l| {
                l.as_str() == "goodbye" || l.as_str() == "bye" || l.as_str().ends_with("_bye")
            })
            .cloned()
            .unwrap_or_else(|| self.label("anything_else"))
    }

    /// One policy step for a user utterance. Pure: the updated state is
    /// returned inside the [`Decision`].
    pub fn decide(&self, state: &DialogState, user_event: &Event) -> Result<Decision, PolicyError> {
        let utterance = user_event.text.as_deref().unwrap_or_default();
        let mut state = state.clone();

        // Change-of-mind and refer-back phrasings name a slot of the active
        // task; they must never be mistaken for a task switch even when the
        // slot display ("hotel name") contains another capability's keyword.
        let suppress_switch = state.active_task.as_deref().is_some_and(|active| {
            let profile = self.profile(active);
            let names_active_slot = |caps: &regex::Captures| {
                let display = caps[1].trim().to_lowercase();
                profile.slots.iter().any(|s| slot_display(&s.id) == display)
            };
            self.shared_rules
                .change
                .iter()
                .chain(&self.shared_rules.refer_back)
                .any(|re| re.captures(utterance.trim()).is_some_and(|c| names_active_slot(&c)))
        });

        // Task switching: another capability must outscore the active task.
        let mut switched = None;
        let mut mentioned_active = false;
        let scores = keyword_scores(utterance, &self.capabilities, &self.lexicon);
        let active_score = state
            .active_task
            .as_ref()
            .and_then(|t| scores.iter().find(|(task, ..)| task == t))
            .map_or(0, |(_, count, _)| *count);
        mentioned_active = active_score > 0;
        if let Some(best) =
            detect_task(utterance, &self.capabilities, &self.lexicon).filter(|_| !suppress_switch)
        {
            let best_score = scores
                .iter()
                .find(|(task, ..)| *task == best)
                .map_or(0, |(_, count, _)| *count);
            match &state.active_task {
                Some(active) if active != best && best_score > active_score => {
                    state.active_task = Some(best.to_string());
                    state.awaiting_confirmation = false;
                    switched = Some(best.to_string());
                }
                Some(_) => {}
                None => {
                    state.active_task = Some(best.to_string());
                    switched = Some(best.to_string());
                }
                _ => {}
            }
        }

        let Some(task) = state.active_task.clone() else {
            if !state.greeted {
                // Greet before knowing the task (the greeting text is shared
                // across schemas).
                state.greeted = true;
                return Ok(Decision {
                    action: self.label("hello"),
                    custom_text: None,
                    query: None,
                    switched: None,
                    state,
                });
            }
            return Err(PolicyError::NoActiveSchema);
        };

        let profile = self.profile(&task);
        let rules = profile.extraction_rules();
        let pending = state
            .cursors
            .get(&task)
            .filter(|c| is_ask_label(c))
            .and_then(|c| profile.slot_for_node(c.as_str()))
            .map(|s| s.id.clone());

        let cursor_is_collecting = |state: &DialogState| {
            state
                .cursors
                .get(&task)
                .is_some_and(|c| is_ask_label(c) || is_query_label(c) || c.as_str() == "hello")
        };
        let cursor_continues = |state: &DialogState| {
            state.cursors.get(&task).is_some_and(|c| {
                !is_ask_label(c)
                    && !is_query_label(c)
                    && c.as_str() != "anything_else"
                    && self
                        .schema(&task)
                        .next_node(c)
                        .ok()
                        .flatten()
                        .is_some()
            })
        };

        // Refer-backs are checked before extraction: they are questions
        // about earlier values, not new answers. A matching template
        // consumes the utterance even when the value is unknown.
        for re in &self.shared_rules.refer_back {
            if let Some(caps) = re.captures(utterance.trim()) {
                let display = caps[1].trim().to_lowercase();
                let value = profile
                    .slots
                    .iter()
                    .find(|s| slot_display(&s.id) == display)
                    .and_then(|spec| self.slot_value(&state, &task, &spec.id));
                if let Some(value) = value {
                    let template = &self.suite.shared.custom_reply[0];
                    let text = template.replace("{value}", &value);
                    return Ok(Decision {
                        action: self.label("custom"),
                        custom_text: Some(text),
                        query: None,
                        switched,
                        state,
                    });
                }
                return Ok(self.off_schema(&state, &task, switched));
            }
        }

        let mut extracted = extract_slots(utterance, pending.as_deref(), &rules);
        // Shared change-of-mind phrasing: "change the <slot display> to <value>".
        for re in &self.shared_rules.change {
            if let Some(caps) = re.captures(utterance.trim()) {
                let display = caps[1].trim().to_lowercase();
                let value = caps[2].trim();
                if let Some(spec) = profile
                    .slots
                    .iter()
                    .find(|s| slot_display(&s.id) == display)
                {
                    // KB-backed slots only accept known values.
                    let canonical = if spec.kb_field.is_some() {
                        spec.values.iter().find(|p| p.eq_ignore_ascii_case(value))
                    } else {
                        None
                    };
                    match (spec.kb_field.is_some(), canonical) {
                        (true, Some(v)) => {
                            extracted.insert(spec.id.clone(), v.clone());
                        }
                        (true, None) => {}
                        (false, _) => {
                            extracted.insert(spec.id.clone(), value.to_string());
                        }
                    }
                }
            }
        }

        // A task switch re-enters at the point that makes most sense given
        // the collected information, rather than continuing past wherever
        // the task was left (asking again is how a status task is redone).
        let next_node = |state: &DialogState| {
            if switched.is_some() {
                self.jump(state, &task)
            } else {
                self.advance(state, &task)
            }
        };

        if !extracted.is_empty() {
            let slots = state.collected.entry(task.clone()).or_default();
            // Replacing an already-given value invalidates any progress past
            // that slot's query, so the flow re-enters at the jump point
            // (typically a fresh query) instead of marching on.
            let mut replaced = false;
            for (key, value) in extracted {
                match slots.insert(key, value.clone()) {
                    Some(old) if old != value => replaced = true,
                    _ => {}
                }
            }
            state.awaiting_confirmation = false;
            let node = if replaced {
                self.jump(&state, &task)
            } else {
                next_node(&state)
            }
            .ok_or(PolicyError::NoActiveSchema)?;
            return Ok(self.decision_for_node(state, &task, node, switched));
        }

        let at_anything_else = state
            .cursors
            .get(&task)
            .is_some_and(|c| c.as_str() == "anything_else");
        match polarity(utterance) {
            Some(Polarity::Affirm) if state.awaiting_confirmation => {
                state.awaiting_confirmation = false;
                let schema = self.schema(&task);
                let yes = self.label("yes");
                if let Ok(Some(next)) = schema.next_node(&yes) {
                    let next = next.clone();
                    return Ok(self.decision_for_node(state, &task, next, switched));
                }
                return Ok(self.off_schema(&state, &task, switched));
            }
            Some(Polarity::Deny) if state.awaiting_confirmation => {
                state.awaiting_confirmation = false;
                let schema = self.schema(&task);
                let no = self.label("no");
                if let Ok(Some(next)) = schema.next_node(&no) {
                    let next = next.clone();
                    // The re-asked slot must be genuinely pending again.
                    if let Some(spec) = profile.slot_for_node(next.as_str()) {
                        if let Some(slots) = state.collected.get_mut(&task) {
                            slots.remove(&spec.id);
                        }
                    }
                    return Ok(self.decision_for_node(state, &task, next, switched));
                }
                return Ok(self.off_schema(&state, &task, switched));
            }
            Some(Polarity::Deny) if at_anything_else || !cursor_is_collecting(&state) => {
                // Nothing is being confirmed or collected; a denial means
                // the user is done.
                let bye = self.bye_label(&task);
                return Ok(self.decision_for_node(state, &task, bye, switched));
            }
            Some(Polarity::Affirm) if !at_anything_else => {
                // An acknowledgement; move the flow along.
                let node = next_node(&state).ok_or(PolicyError::NoActiveSchema)?;
                return Ok(self.decision_for_node(state, &task, node, switched));
            }
            _ => {}
        }

        // Bare thanks after an inform lets the flow continue.
        if is_acknowledgement(utterance) && !state.awaiting_confirmation && cursor_continues(&state)
        {
            let node = next_node(&state).ok_or(PolicyError::NoActiveSchema)?;
            return Ok(self.decision_for_node(state, &task, node, switched));
        }

        if switched.is_some() || mentioned_active {
            let node = next_node(&state).ok_or(PolicyError::NoActiveSchema)?;
            return Ok(self.decision_for_node(state, &task, node, switched));
        }

        Ok(self.off_schema(&state, &task, None))
    }

    /// Resolve the step after a knowledge base return: either the query
    /// node's direct successor, or the branch selected by the result.
    pub fn after_query(
        &self,
        state: &DialogState,
        result: &QueryResult,
    ) -> Result<Decision, PolicyError> {
        let task = state
            .active_task
            .clone()
            .ok_or(PolicyError::NoActiveSchema)?;
        let schema = self.schema(&task);
        let cursor = state
            .cursors
            .get(&task)
            .cloned()
            .ok_or(PolicyError::NoActiveSchema)?;

        let mut state = state.clone();
        state.last_kb = Some(result.clone());

        if let Some(next) = schema.next_node(&cursor)? {
            let next = next.clone();
            return Ok(self.decision_for_node(state, &task, next, None));
        }

        let message = result
            .item
            .as_ref()
            .and_then(|i| i.fields.get("Message"))
            .map(Scalar::render);
        let branch = match message.as_deref() {
            Some("Available") => "available",
            Some("Unavailable") => "unavailable",
            _ if result.total_items > 0 => "found",
            _ => "none_found",
        };
        let branch_node = Some(self.label(branch)).filter(|b| schema.contains(b));
        if let Some(branch_node) = branch_node {
            if let Some(next) = schema.next_node(&branch_node)? {
                let next = next.clone();
                let offered = branch_node.as_str() == "available";
                let mut decision = self.decision_for_node(state, &task, next, None);
                decision.state.awaiting_confirmation = offered;
                return Ok(decision);
            }
        }
        Ok(self.off_schema(&state, &task, None))
    }

    /// Template fill values for a reply: collected slots first, overridden
    /// by the latest knowledge base item's fields (snake-cased).
    pub fn fill_values(&self, state: &DialogState, task: &str) -> BTreeMap<String, String> {
        let mut values = BTreeMap::new();
        for spec in &self.profile(task).slots {
            if let Some(v) = self.slot_value(state, task, &spec.id) {
                values.insert(spec.id.clone(), v);
            }
        }
        if let Some(result) = &state.last_kb {
            if let Some(item) = &result.item {
                for (field, value) in &item.fields {
                    values.insert(snake_case(field), value.render());
                }
            }
        }
        values
    }
}

/// Drives a [`WizardPolicy`] turn by turn, executing queries against the
/// knowledge base and recording corpus-format events.
pub struct WizardSession<'a> {
    policy: WizardPolicy<'a>,
    suite: &'a TaskSuite,
    state: DialogState,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    done: bool,
    consecutive_off_schema: usize,
}

impl<'a> WizardSession<'a> {
    pub fn new(
        suite: &'a TaskSuite,
        capabilities: Vec<String>,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        Ok(WizardSession {
            policy: WizardPolicy::new(suite, capabilities)?,
            suite,
            state: DialogState::default(),
            rng: rng::stream(seed, "kb-sampling", 0),
            events: Vec::new(),
            done: false,
            consecutive_off_schema: 0,
        })
    }

    pub fn policy(&self) -> &WizardPolicy<'a> {
        &self.policy
    }

    pub fn state(&self) -> &DialogState {
        &self.state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// The wizard said goodbye; the dialog is over.
    pub fn done(&self) -> bool {
        self.done
    }

    /// Consecutive side replies without progress — used by callers to
    /// detect stuck dialogs.
    pub fn consecutive_off_schema(&self) -> usize {
        self.consecutive_off_schema
    }

    fn intent_options(&self, task: &str, intent: &ActionLabel) -> Vec<ActionLabel> {
        let schema = self.suite.schemas.get(task).expect("capability validated");
        let labels: Vec<&ActionLabel> = schema.replies().keys().collect();
        let mut options = Vec::new();
        if let Some(pos) = labels.iter().position(|l| *l == intent) {
            for offset in 0..3 {
                let candidate = labels[(pos + offset) % labels.len()].clone();
                if !options.contains(&candidate) {
                    options.push(candidate);
                }
            }
        } else {
            options.extend(labels.into_iter().take(2).cloned());
        }
        options
    }

    fn emit_reply(&mut self, decision: &Decision) {
        let task = decision
            .state
            .active_task
            .clone()
            .or_else(|| self.policy.capabilities().first().cloned())
            .expect("at least one capability");
        let schema = self.suite.schemas.get(&task).expect("capability validated");
        let text = match &decision.custom_text {
            Some(text) => text.clone(),
            None => {
                let values = self.policy.fill_values(&decision.state, &task);
                schema
                    .template(&decision.action)
                    .map(|t| t.fill_lossy(&values).0)
                    .unwrap_or_else(|_| decision.action.to_string())
            }
        };
        let options = self.intent_options(&task, &decision.action);
        self.events
            .push(Event::wizard_pick(text, decision.action.clone(), options));
    }

    /// Process one user utterance; returns the events appended this turn
    /// (user turn included).
    pub fn handle_user(&mut self, text: &str) -> Result<&[Event], PolicyError> {
        let start = self.events.len();
        let user_event = Event::user_utter(text);
        self.events.push(user_event.clone());

        let mut decision = self.policy.decide(&self.state, &user_event)?;
        if let Some(new_task) = &decision.switched {
            if start > 0 {
                self.events
                    .push(Event::wizard_select_topic(new_task.clone()));
            }
        }
        while let Some(plan) = decision.query.clone() {
            self.state = decision.state.clone();
            self.events.push(Event::wizard_query(
                plan.api.clone(),
                plan.constraints.clone(),
            ));
            let result =
                self.suite
                    .kb
                    .execute(&plan.api, plan.kind, &plan.constraints, &mut self.rng)?;
            self.events.push(Event::kb_return(
                result.item.clone(),
                result.total_items,
                plan.api.clone(),
            ));
            decision = self.policy.after_query(&self.state, &result)?;
        }
        self.state = decision.state.clone();
        self.emit_reply(&decision);

        let action = decision.action.as_str();
        if action == "out_of_scope" || action == "custom" {
            self.consecutive_off_schema += 1;
        } else {
            self.consecutive_off_schema = 0;
        }
        if action == "goodbye" || action == "bye" || action.ends_with("_bye") {
            self.done = true;
        }
        Ok(&self.events[start..])
    }

    /// Record an in-dialog instruction to the user (the simulator's
    /// perturbation announcements).
    pub fn events_push_instruct(&mut self, text: String) {
        self.events.push(Event::guide_instruct(text));
    }

    /// Record the user's final `complete` event.
    pub fn complete(&mut self) {
        self.events.push(Event::user_complete());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{Agent, EventAction};
    use crate::suite::{fixtures_root, TaskSuite};

    fn suite() -> TaskSuite {
        TaskSuite::load(&fixtures_root()).unwrap()
    }

    fn lexicon(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(task, words)| {
                (
                    task.to_string(),
                    words.iter().map(|w| w.to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn detect_task_scores_keywords() {
        let caps = vec!["hotel_reserve".to_string(), "ride_book".to_string()];
        let lex = lexicon(&[
            ("hotel_reserve", &["hotel", "room"]),
            ("ride_book", &["ride", "taxi"]),
        ]);
        assert_eq!(
            detect_task("I need a hotel room", &caps, &lex),
            Some("hotel_reserve")
        );
        assert_eq!(detect_task("", &caps, &lex), None);
    }

    #[test]
    fn detect_task_breaks_ties_by_earliest_mention() {
        let caps = vec!["ride_status".to_string(), "restaurant_reserve".to_string()];
        let lex = lexicon(&[
            ("ride_status", &["ride", "status"]),
            ("restaurant_reserve", &["restaurant", "table"]),
        ]);
        assert_eq!(
            detect_task("check my ride then book a table", &caps, &lex),
            Some("ride_status")
        );
    }

    #[test]
    fn extract_slots_inverse_and_patterns() {
        let suite = suite();
        let profile = suite.profile("book_doctor_appointment").unwrap();
        let rules = profile.extraction_rules();

        let got = extract_slots("My name is Mark", Some("name"), &rules);
        assert_eq!(got.get("name").map(String::as_str), Some("Mark"));

        assert!(extract_slots("hello", None, &rules).is_empty());

        let got = extract_slots("Friday at 2 pm please", None, &rules);
        assert_eq!(got.get("day").map(String::as_str), Some("Friday"));
        assert_eq!(got.get("time").map(String::as_str), Some("2 pm"));
    }

    #[test]
    fn bare_answers_only_bind_the_pending_slot() {
        let suite = suite();
        let profile = suite.profile("book_doctor_appointment").unwrap();
        let rules = profile.extraction_rules();
        let got = extract_slots("Dr. Morgan", Some("doctor_name"), &rules);
        assert_eq!(
            got.get("doctor_name").map(String::as_str),
            Some("Dr. Morgan")
        );
        let got = extract_slots("Dr. Morgan", None, &rules);
        assert!(got.get("doctor_name").is_none());
    }

    #[test]
    fn fresh_dialog_greets_first() {
        let suite = suite();
        let policy =
            WizardPolicy::new(&suite, vec!["book_doctor_appointment".to_string()]).unwrap();
        let decision = policy
            .decide(
                &DialogState::default(),
                &Event::user_utter("I'd like to see a doctor"),
            )
            .unwrap();
        assert_eq!(decision.action.as_str(), "hello");
        assert!(decision.query.is_none());
        assert!(decision.state.greeted);
        assert_eq!(
            decision.state.active_task.as_deref(),
            Some("book_doctor_appointment")
        );
    }

    #[test]
    fn happy_doctor_flow_reaches_check_query_and_booking() {
        let suite = suite();
        let mut session =
            WizardSession::new(&suite, vec!["book_doctor_appointment".to_string()], 7).unwrap();

        session.handle_user("I'd like to see a doctor").unwrap();
        session.handle_user("I need a doctor appointment.").unwrap();
        session.handle_user("My name is Mark").unwrap();
        session.handle_user("Dr. Morgan, please").unwrap();
        session.handle_user("Friday works for me").unwrap();
        session.handle_user("2 pm should work").unwrap();
        // Symptoms answer triggers the availability check in the same turn.
        let turn = session.handle_user("I have a constant headache").unwrap();
        let kinds: Vec<_> = turn
            .iter()
            .map(|e| (e.agent.unwrap(), e.action.unwrap()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (Agent::User, EventAction::Utter),
                (Agent::Wizard, EventAction::Query),
                (Agent::KnowledgeBase, EventAction::Return),
                (Agent::Wizard, EventAction::PickSuggestion),
            ]
        );
        let pick = turn.last().unwrap();
        assert_eq!(
            pick.intent.as_ref().unwrap().as_str(),
            "doctor_inform_booking_available"
        );
        assert_eq!(
            pick.text.as_deref(),
            Some("Alright, Dr. Morgan is available at 2 pm. Can I book the appointment for you?")
        );

        // Confirmation books and reports success.
        let turn = session.handle_user("Yes, please.").unwrap();
        let intents: Vec<_> = turn
            .iter()
            .filter_map(|e| e.intent.as_ref().map(|i| i.to_string()))
            .collect();
        assert_eq!(intents, vec!["doctor_inform_booking_successful"]);

        let turn = session.handle_user("Okay, thanks!").unwrap();
        assert_eq!(
            turn.last().unwrap().intent.as_ref().unwrap().as_str(),
            "anything_else"
        );
        let turn = session.handle_user("No thanks, that's all.").unwrap();
        assert_eq!(
            turn.last().unwrap().intent.as_ref().unwrap().as_str(),
            "doctor_bye"
        );
        assert!(session.done());
    }

    #[test]
    fn early_slot_is_skipped_later() {
        let suite = suite();
        let mut session = WizardSession::new(&suite, vec!["ride_status".to_string()], 3).unwrap();
        session
            .handle_user("Can you give me the status of my ride? It's about ride 551.")
            .unwrap();
        session.handle_user("I want to check my ride status.").unwrap();
        let turn = session.handle_user("My name is Ben").unwrap();
        // ride_id was volunteered up front, so the ask is skipped and the
        // query fires directly after the name.
        let actions: Vec<_> = turn.iter().map(|e| e.action.unwrap()).collect();
        assert!(actions.contains(&EventAction::Query));
        let pick = turn.last().unwrap();
        assert_eq!(pick.intent.as_ref().unwrap().as_str(), "ride_status_inform");
        assert_eq!(
            pick.text.as_deref(),
            Some("Your ride is on its way. Your driver is 3 minutes away.")
        );
    }

    #[test]
    fn denial_after_offer_revisits_the_change_loop() {
        let suite = suite();
        let mut session =
            WizardSession::new(&suite, vec!["book_doctor_appointment".to_string()], 1).unwrap();
        for line in [
            "I need a doctor appointment",
            "booking a doctor appointment please",
            "My name is Sara",
            "Dr. Morgan, please",
            "Friday works for me",
            "2 pm should work",
            "I have back pain",
        ] {
            session.handle_user(line).unwrap();
        }
        assert!(session.state().awaiting_confirmation);
        let turn = session.handle_user("Hmm, no.").unwrap();
        assert_eq!(
            turn.last().unwrap().intent.as_ref().unwrap().as_str(),
            "doctor_ask_doctor_name"
        );
        // The changed doctor flows into a fresh check; other slots are kept.
        let turn = session.handle_user("Dr. Kim").unwrap();
        let pick = turn.last().unwrap();
        assert_eq!(
            pick.intent.as_ref().unwrap().as_str(),
            "doctor_inform_booking_unavailable"
        );
    }

    #[test]
    fn off_schema_input_gets_out_of_scope_without_moving() {
        let suite = suite();
        let mut session =
            WizardSession::new(&suite, vec!["book_doctor_appointment".to_string()], 1).unwrap();
        session.handle_user("I need a doctor appointment").unwrap();
        session.handle_user("book the appointment please").unwrap();
        let before = session.state().cursors.clone();
        let turn = session.handle_user("Can you sing me a song?").unwrap();
        assert_eq!(
            turn.last().unwrap().intent.as_ref().unwrap().as_str(),
            "out_of_scope"
        );
        assert_eq!(session.state().cursors, before);
        // The flow resumes where it left off.
        let turn = session.handle_user("My name is Tom").unwrap();
        assert_eq!(
            turn.last().unwrap().intent.as_ref().unwrap().as_str(),
            "doctor_ask_doctor_name"
        );
    }

    #[test]
    fn task_switch_resumes_with_shared_name() {
        let suite = suite();
        let mut session = WizardSession::new(
            &suite,
            vec![
                "ride_status".to_string(),
                "followup_doctor_appointment".to_string(),
            ],
            5,
        )
        .unwrap();
        session
            .handle_user("Can you give me the status of my ride?")
            .unwrap();
        session.handle_user("checking my ride status").unwrap();
        session.handle_user("My name is Ben").unwrap();
        session.handle_user("It is ride id 551").unwrap();
        // Switch tasks; the name must not be asked again.
        let turn = session
            .handle_user("Now I need to check the instructions for my medicine.")
            .unwrap();
        assert!(turn
            .iter()
            .any(|e| e.action == Some(EventAction::SelectTopic)));
        assert_eq!(
            turn.last().unwrap().intent.as_ref().unwrap().as_str(),
            "followup_ask_doctor_name"
        );
        // And switching back resumes rather than restarting.
        let turn = session.handle_user("It was Dr. Morgan").unwrap();
        assert_eq!(
            turn.last().unwrap().intent.as_ref().unwrap().as_str(),
            "followup_inform_instructions"
        );
        let turn = session
            .handle_user("Is my ride still coming? What's the status?")
            .unwrap();
        let pick = turn.last().unwrap();
        assert_eq!(pick.intent.as_ref().unwrap().as_str(), "ride_status_inform");
    }

    #[test]
    fn refer_back_produces_custom_reply() {
        let suite = suite();
        let mut session =
            WizardSession::new(&suite, vec!["book_doctor_appointment".to_string()], 1).unwrap();
        session.handle_user("I need a doctor appointment").unwrap();
        session.handle_user("the appointment please").unwrap();
        session.handle_user("My name is Priya").unwrap();
        session.handle_user("Dr. Patel, please").unwrap();
        let turn = session
            .handle_user("Sorry, what doctor name did I give you earlier?")
            .unwrap();
        let pick = turn.last().unwrap();
        assert_eq!(pick.intent.as_ref().unwrap().as_str(), "custom");
        assert_eq!(pick.text.as_deref(), Some("You said Dr. Patel."));
    }

    #[test]
    fn polarity_lexicon_with_negation_flip() {
        assert_eq!(polarity("yes please"), Some(Polarity::Affirm));
        assert_eq!(polarity("no thanks"), Some(Polarity::Deny));
        assert_eq!(polarity("sounds good"), Some(Polarity::Affirm));
        assert_eq!(polarity("no, yes, maybe"), Some(Polarity::Deny));
        assert_eq!(polarity("well yes and no"), None);
        assert_eq!(polarity("Friday"), None);
    }

    #[test]
    fn no_active_schema_error_after_greeting() {
        let suite = suite();
        let policy = WizardPolicy::new(
            &suite,
            vec!["ride_status".to_string(), "hotel_reserve".to_string()],
        )
        .unwrap();
        let first = policy
            .decide(&DialogState::default(), &Event::user_utter("Good evening!"))
            .unwrap();
        assert_eq!(first.action.as_str(), "hello");
        let err = policy
            .decide(&first.state, &Event::user_utter("blub"))
            .unwrap_err();
        assert_eq!(err, PolicyError::NoActiveSchema);
    }
}
