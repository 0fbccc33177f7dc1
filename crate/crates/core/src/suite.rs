//! Loading and cross-validating a complete task suite: schemas, domain
//! manifest, knowledge bases, simulation profiles, and shared pools.
//!
//! Layout of a fixtures directory:
//!
//! ```text
//! fixtures/
//!   manifest.json          task -> domain
//!   shared.json            shared utterance pools
//!   schemas/<task>.json
//!   kb/<task>.json
//!   profiles/<task>.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kb::KbSet;
use crate::profile::{load_profiles, SharedPools, TaskProfile};
use crate::schema::{ActionLabel, SchemaSet};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Schema(#[from] crate::schema::SchemaError),
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
    #[error(transparent)]
    Profile(#[from] crate::profile::ProfileError),
    #[error("suite inconsistency: {0}")]
    Inconsistent(String),
}

/// Immutable bundle of everything a simulation or evaluation run needs.
/// Safe to share across threads.
#[derive(Debug, Clone)]
pub struct TaskSuite {
    pub schemas: SchemaSet,
    pub kb: KbSet,
    pub profiles: BTreeMap<String, TaskProfile>,
    pub shared: SharedPools,
}

impl TaskSuite {
    pub fn load(root: &Path) -> Result<Self, SuiteError> {
        let schemas = SchemaSet::load(&root.join("schemas"), &root.join("manifest.json"))?;
        let kb = KbSet::load(&root.join("kb"))?;
        let (profiles, shared) =
            load_profiles(&root.join("profiles"), &root.join("shared.json"))?;
        let suite = TaskSuite {
            schemas,
            kb,
            profiles,
            shared,
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn profile(&self, task: &str) -> Option<&TaskProfile> {
        self.profiles.get(task)
    }

    /// Cross-resource checks: every profile references real schema nodes and
    /// real knowledge base fields, and every template placeholder can be
    /// satisfied from the profile's slots or the task's KB fields.
    pub fn validate(&self) -> Result<(), SuiteError> {
        for (task, profile) in &self.profiles {
            let schema = self
                .schemas
                .get(task)
                .ok_or_else(|| SuiteError::Inconsistent(format!("profile `{task}` has no schema")))?;
            let table = self.kb.table(task)?;
            for slot in &profile.slots {
                let node = ActionLabel::new(slot.ask_node.clone())?;
                if !schema.contains(&node) {
                    return Err(SuiteError::Inconsistent(format!(
                        "`{task}` slot `{}` asks unknown node `{}`",
                        slot.id, slot.ask_node
                    )));
                }
                if let Some(field) = &slot.kb_field {
                    if table.field_type(field).is_none() {
                        return Err(SuiteError::Inconsistent(format!(
                            "`{task}` slot `{}` maps to unknown KB field `{field}`",
                            slot.id
                        )));
                    }
                }
            }
            for query in &profile.queries {
                let node = ActionLabel::new(query.node.clone())?;
                if !schema.contains(&node) {
                    return Err(SuiteError::Inconsistent(format!(
                        "`{task}` query node `{}` not in schema",
                        query.node
                    )));
                }
                for binding in &query.constrain {
                    let slot = profile.slot(&binding.slot).expect("validated by profile");
                    if slot.kb_field.is_none() {
                        return Err(SuiteError::Inconsistent(format!(
                            "`{task}` query `{}` constrains slot `{}` with no KB field",
                            query.node, binding.slot
                        )));
                    }
                }
            }
            // Reply placeholders must be resolvable: either a profile slot
            // or a snake-cased KB field of this task.
            let kb_fields: Vec<String> = table
                .fields()
                .iter()
                .map(|f| crate::text::snake_case(&f.name))
                .collect();
            for (label, template) in schema.replies() {
                for placeholder in template.placeholders() {
                    let ok = profile.slots.iter().any(|s| s.id == placeholder)
                        || kb_fields.iter().any(|f| f == placeholder);
                    if !ok {
                        return Err(SuiteError::Inconsistent(format!(
                            "`{task}` reply `{label}` placeholder `{placeholder}` \
                             matches no slot or KB field"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Path to the repository's own fixtures (used by tests and as the CLI
/// default).
pub fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repository_fixtures_load_and_validate() {
        let suite = TaskSuite::load(&fixtures_root()).unwrap();
        assert!(suite.schemas.len() >= 6, "need at least six tasks");
        assert!(suite.schemas.domains().len() >= 3, "need at least three domains");
        let multi = suite
            .schemas
            .domains()
            .iter()
            .any(|d| suite.schemas.tasks_in_domain(d).len() >= 2);
        assert!(multi, "need a domain with at least two tasks");
    }
}
