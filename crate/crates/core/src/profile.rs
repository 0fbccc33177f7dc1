//! Per-task simulation profiles.
//!
//! Schemas define what the *wizard* says; profiles supply everything else a
//! desk-scale simulation needs: which slot each ask-node collects, the
//! knowledge base bindings for query nodes, task-detection keywords, and
//! the user-side utterance template pools. Profiles are data files
//! (`fixtures/profiles/<task>.json`) so vocabulary breadth is tunable
//! without touching code.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::kb::QueryKind;
use crate::schema::ResponseTemplate;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("malformed profile: {0}")]
    Malformed(String),
    #[error("profile `{task}` invalid: {reason}")]
    Invalid { task: String, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Comparison used when a slot value becomes a query constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BindOp {
    #[default]
    Eq,
    Neq,
    Gt,
    Ge,
    Lt,
    Le,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConstraintBinding {
    pub slot: String,
    #[serde(default)]
    pub op: BindOp,
}

#[derive(Debug, Clone, Deserialize)]
pub struct QuerySpec {
    /// Schema node that triggers this query (`query_check`, ...).
    pub node: String,
    pub kind: QueryKind,
    #[serde(default)]
    pub constrain: Vec<ConstraintBinding>,
    /// Whether to add a `RequestType` constraint (reservation tasks).
    #[serde(default)]
    pub request_type: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SlotSpec {
    /// Identifier as used in template placeholders.
    pub id: String,
    /// The schema node that asks for this slot.
    pub ask_node: String,
    /// Knowledge base field this slot maps to, if any.
    #[serde(default)]
    pub kb_field: Option<String>,
    /// Shared slots (like the user's name) carry over between tasks in a
    /// multi-task dialog, so the wizard does not ask twice.
    #[serde(default)]
    pub shared: bool,
    /// Values the scenario sampler may draw (usually mirrors the KB).
    pub values: Vec<String>,
    /// Paraphrase pool for answering the ask (each contains `{id}`).
    pub user_templates: Vec<String>,
    /// Paraphrase pool for changing one's mind about this slot.
    #[serde(default)]
    pub change_templates: Vec<String>,
    /// Paraphrase pool for volunteering the slot unprompted.
    #[serde(default)]
    pub volunteer_templates: Vec<String>,
    /// Fallback regexes (one capture group) for free-form text.
    #[serde(default)]
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TaskProfile {
    pub task: String,
    /// Keywords scoring this task during task detection.
    pub keywords: Vec<String>,
    /// Opening lines for the user.
    pub openers: Vec<String>,
    /// Goal restatements (used right after the wizard's greeting).
    pub restates: Vec<String>,
    pub slots: Vec<SlotSpec>,
    pub queries: Vec<QuerySpec>,
}

/// One compiled extraction rule for a slot.
#[derive(Debug, Clone)]
pub struct ExtractionRule {
    pub slot: String,
    pub regex: Regex,
    /// Bare rules match an entire short answer and only apply to the slot
    /// the wizard just asked for.
    pub bare: bool,
    /// For knowledge-base-backed slots, captures must (case-insensitively)
    /// match one of these values; the canonical spelling is returned.
    pub allowed: Option<Vec<String>>,
}

impl ExtractionRule {
    /// Validate and canonicalize a captured value. Questions are never
    /// answers.
    pub fn accept(&self, value: &str) -> Option<String> {
        let value = value.trim();
        if value.is_empty() || value.contains('?') {
            return None;
        }
        match &self.allowed {
            None => Some(value.to_string()),
            Some(pool) => pool
                .iter()
                .find(|p| p.eq_ignore_ascii_case(value))
                .cloned(),
        }
    }
}

impl TaskProfile {
    pub fn parse(raw: &str) -> Result<Self, ProfileError> {
        let profile: TaskProfile =
            serde_json::from_str(raw).map_err(|e| ProfileError::Malformed(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    fn invalid(&self, reason: impl Into<String>) -> ProfileError {
        ProfileError::Invalid {
            task: self.task.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        for slot in &self.slots {
            if slot.user_templates.len() < 5 {
                return Err(self.invalid(format!(
                    "slot `{}` has {} user templates, need at least 5",
                    slot.id,
                    slot.user_templates.len()
                )));
            }
            for template in slot
                .user_templates
                .iter()
                .chain(&slot.change_templates)
                .chain(&slot.volunteer_templates)
            {
                let parsed = ResponseTemplate::parse(template.clone())
                    .map_err(|e| self.invalid(format!("bad template `{template}`: {e}")))?;
                if parsed.placeholders() != vec![slot.id.as_str()] {
                    return Err(self.invalid(format!(
                        "template `{template}` must use exactly the `{{{}}}` placeholder",
                        slot.id
                    )));
                }
            }
            if slot.values.is_empty() {
                return Err(self.invalid(format!("slot `{}` has an empty value pool", slot.id)));
            }
            for pattern in &slot.patterns {
                let re = Regex::new(pattern)
                    .map_err(|e| self.invalid(format!("bad pattern `{pattern}`: {e}")))?;
                if re.captures_len() < 2 {
                    return Err(
                        self.invalid(format!("pattern `{pattern}` needs one capture group"))
                    );
                }
            }
        }
        for query in &self.queries {
            for binding in &query.constrain {
                if !self.slots.iter().any(|s| s.id == binding.slot) {
                    return Err(self.invalid(format!(
                        "query `{}` constrains unknown slot `{}`",
                        query.node, binding.slot
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn slot(&self, id: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.id == id)
    }

    pub fn slot_for_node(&self, node: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.ask_node == node)
    }

    pub fn query_for_node(&self, node: &str) -> Option<&QuerySpec> {
        self.queries.iter().find(|q| q.node == node)
    }

    /// Extraction rules for every slot: curated patterns first (they are
    /// the most precise), then the inverses of the generation templates,
    /// which make extraction lossless on simulator-generated text.
    ///
    /// Slots without a knowledge base value pool (a user's name, free-form
    /// symptoms) cannot be validated, so their rules only fire for the slot
    /// that was just asked — otherwise courtesy phrases like "Yes, please"
    /// would be mistaken for answers.
    pub fn extraction_rules(&self) -> Vec<ExtractionRule> {
        let mut rules = Vec::new();
        for slot in &self.slots {
            let allowed = slot.kb_field.is_some().then(|| slot.values.clone());
            let open = allowed.is_none();
            for pattern in &slot.patterns {
                if let Ok(regex) = Regex::new(pattern) {
                    rules.push(ExtractionRule {
                        slot: slot.id.clone(),
                        regex,
                        bare: open,
                        allowed: allowed.clone(),
                    });
                }
            }
            let templates = slot
                .user_templates
                .iter()
                .chain(&slot.change_templates)
                .chain(&slot.volunteer_templates);
            for template in templates {
                if let Some(mut rule) = inverse_template(&slot.id, template) {
                    rule.allowed.clone_from(&allowed);
                    rule.bare = rule.bare || open;
                    rules.push(rule);
                }
            }
        }
        rules
    }
}

/// Build the inverse regex of a single-placeholder template:
/// `"My name is {name}"` becomes `^My name is (.+?)[.!]?$`.
fn inverse_template(slot: &str, template: &str) -> Option<ExtractionRule> {
    let parsed = ResponseTemplate::parse(template).ok()?;
    if parsed.placeholders() != vec![slot] {
        return None;
    }
    let mut pattern = String::from("^");
    let mut bare = true;
    // Re-split the raw text on the placeholder; the validated template has
    // exactly one placeholder occurrence in these pools.
    let marker = template
        .find('{')
        .zip(template.find('}'))
        .map(|(a, b)| (&template[..a], &template[b + 1..]))?;
    if !marker.0.is_empty() {
        pattern.push_str(&regex::escape(marker.0));
        bare = false;
    }
    pattern.push_str("(.+?)");
    if !marker.1.is_empty() {
        pattern.push_str(&regex::escape(marker.1));
        bare = false;
    }
    pattern.push_str("[.!]?$");
    Some(ExtractionRule {
        slot: slot.to_string(),
        regex: Regex::new(&pattern).ok()?,
        bare,
        allowed: None,
    })
}

/// Utterance pools shared by every task: polarity words, small talk,
/// out-of-scope lines, and the in-dialog instruction templates.
#[derive(Debug, Clone, Deserialize)]
pub struct SharedPools {
    pub affirm: Vec<String>,
    pub deny: Vec<String>,
    pub farewell: Vec<String>,
    pub ack: Vec<String>,
    pub smalltalk: Vec<String>,
    pub out_of_scope: Vec<String>,
    /// `{slot}` / `{value}` placeholders.
    pub change_mind_user: Vec<String>,
    pub environment_user: Vec<String>,
    pub refer_back_user: Vec<String>,
    pub custom_reply: Vec<String>,
    pub instruct_change_mind: Vec<String>,
    pub instruct_smalltalk: Vec<String>,
    pub instruct_out_of_scope: Vec<String>,
    pub instruct_environment: Vec<String>,
    pub instruct_refer_back: Vec<String>,
}

impl SharedPools {
    pub fn parse(raw: &str) -> Result<Self, ProfileError> {
        serde_json::from_str(raw).map_err(|e| ProfileError::Malformed(e.to_string()))
    }
}

/// Load every profile in `dir` keyed by task, plus the shared pools file.
pub fn load_profiles(
    dir: &Path,
    shared: &Path,
) -> Result<(BTreeMap<String, TaskProfile>, SharedPools), ProfileError> {
    let mut profiles = BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| ProfileError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for path in entries {
        let raw = std::fs::read_to_string(&path)
            .map_err(|e| ProfileError::Io(format!("{}: {e}", path.display())))?;
        let profile = TaskProfile::parse(&raw)?;
        profiles.insert(profile.task.clone(), profile);
    }
    let raw = std::fs::read_to_string(shared)
        .map_err(|e| ProfileError::Io(format!("{}: {e}", shared.display())))?;
    Ok((profiles, SharedPools::parse(&raw)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_templates_extract_losslessly() {
        let rule = inverse_template("name", "My name is {name}").unwrap();
        assert!(!rule.bare);
        let caps = rule.regex.captures("My name is Mark").unwrap();
        assert_eq!(&caps[1], "Mark");
        let caps = rule.regex.captures("My name is Mark.").unwrap();
        assert_eq!(&caps[1], "Mark");

        let bare = inverse_template("name", "{name}").unwrap();
        assert!(bare.bare);
        assert_eq!(&bare.regex.captures("Sara").unwrap()[1], "Sara");
    }

    #[test]
    fn profile_validation_requires_five_templates() {
        let raw = serde_json::json!({
            "task": "t",
            "keywords": ["t"],
            "openers": ["hi"],
            "restates": ["I need t"],
            "slots": [{
                "id": "x",
                "ask_node": "ask_x",
                "values": ["1"],
                "user_templates": ["{x}", "it is {x}"]
            }],
            "queries": []
        })
        .to_string();
        assert!(matches!(
            TaskProfile::parse(&raw),
            Err(ProfileError::Invalid { .. })
        ));
    }
}
