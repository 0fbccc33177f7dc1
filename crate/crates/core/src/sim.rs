//! User simulation: synthesizes happy, unhappy, and multi-task dialogs in
//! the corpus format.
//!
//! A [`ScenarioSpec`] fixes everything random about one dialog up front —
//! tasks, slot values (drawn jointly from a knowledge base row so the happy
//! path is satisfiable), the perturbation schedule, and the seed — and
//! [`run_dialog`] then plays a scripted user against the wizard policy.
//! Identical specs produce byte-identical dialogs.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{count_turns, Agent, Dialog, EventAction, Scenario};
use crate::policy::{slot_display, WizardSession};
use crate::rng::stream;
use crate::schema::is_ask_label;
use crate::suite::TaskSuite;
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Dialog(#[from] crate::dialog::DialogError),
    #[error("dialog deadlocked at user turn {0}")]
    Deadlock(usize),
    #[error("scenario needs at least one task")]
    NoTasks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    ChangeMind,
    SmallTalk,
    OutOfScope,
    EnvironmentEvent,
    ReferBack,
}

/// One scheduled user-side complication. `trigger` counts answered asks in
/// `task`: the perturbation fires once that many questions were answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub task: String,
    pub trigger: usize,
    /// Slot touched by change/environment/refer-back perturbations.
    pub slot: Option<String>,
    /// Replacement value for change/environment perturbations.
    pub value: Option<String>,
}

/// Everything random about one dialog, fixed up front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub tasks: Vec<String>,
    pub happy: bool,
    pub perturbations: Vec<Perturbation>,
    /// task -> slot -> value; knowledge-base-backed slots are drawn jointly
    /// from one row, so the straight path is always satisfiable.
    pub slot_values: BTreeMap<String, BTreeMap<String, String>>,
    /// task -> slots the user volunteers in the opening utterance.
    pub early_slots: BTreeMap<String, Vec<String>>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub happy_ratio: f64,
    pub multi_ratio: f64,
    pub max_tasks: usize,
    pub seed: u64,
    /// Probability that a single-task scenario volunteers `early_slots`
    /// in its opener (used by the history-dependence probe).
    pub early_slot_prob: f64,
    pub early_slots: Vec<String>,
    /// Restrict scenario sampling to these tasks (all when empty).
    pub tasks: Vec<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            // Defaults mirror the corpus composition this engine emulates:
            // 2688 of 4152 single-task dialogs are happy, 1668 of 5820
            // dialogs are multi-task.
            happy_ratio: 2688.0 / 4152.0,
            multi_ratio: 1668.0 / 5820.0,
            max_tasks: 5,
            seed: 0,
            early_slot_prob: 0.0,
            early_slots: Vec::new(),
            tasks: Vec::new(),
        }
    }
}

fn changeable_slots<'a>(suite: &'a TaskSuite, task: &str) -> Vec<&'a crate::profile::SlotSpec> {
    suite
        .profile(task)
        .map(|p| {
            p.slots
                .iter()
                .filter(|s| s.kb_field.is_some() && s.values.len() >= 2)
                .collect()
        })
        .unwrap_or_default()
}

/// Draw a scenario: tasks (weighted toward same-domain co-occurrence),
/// slot values, and a perturbation schedule.
pub fn sample_scenario(suite: &TaskSuite, config: &SimConfig, index: u64) -> ScenarioSpec {
    let mut rng = stream(config.seed, "scenario", index);
    let all_tasks: Vec<String> = if config.tasks.is_empty() {
        suite.schemas.tasks().map(str::to_string).collect()
    } else {
        config.tasks.clone()
    };

    let multi = config.max_tasks >= 2 && all_tasks.len() >= 2 && rng.gen_bool(config.multi_ratio);
    let mut tasks = Vec::new();
    let first = all_tasks[rng.gen_range(0..all_tasks.len())].clone();
    tasks.push(first.clone());
    if multi {
        let count = rng.gen_range(2..=config.max_tasks.min(all_tasks.len()));
        while tasks.len() < count {
            // Same-domain tasks co-occur more often.
            let weights: Vec<f64> = all_tasks
                .iter()
                .map(|t| {
                    if tasks.contains(t) {
                        0.0
                    } else if suite.schemas.domain_of(t) == suite.schemas.domain_of(&first) {
                        2.0
                    } else {
                        1.0
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut draw = rng.gen_range(0.0..total);
            for (i, w) in weights.iter().enumerate() {
                draw -= w;
                if draw <= 0.0 && *w > 0.0 {
                    tasks.push(all_tasks[i].clone());
                    break;
                }
            }
        }
    }
    let happy = !multi && rng.gen_bool(config.happy_ratio);

    // Slot values: knowledge-base-backed slots jointly from one row.
    let mut slot_values = BTreeMap::new();
    for task in &tasks {
        let mut values = BTreeMap::new();
        let profile = suite.profile(task).expect("profiles cover tasks");
        let row = suite
            .kb
            .table(task)
            .ok()
            .filter(|t| !t.rows().is_empty())
            .map(|t| t.rows()[rng.gen_range(0..t.rows().len())].clone());
        for slot in &profile.slots {
            let value = match (&slot.kb_field, &row) {
                (Some(field), Some(row)) => row
                    .fields
                    .get(field)
                    .map(|v| v.render())
                    .unwrap_or_else(|| slot.values[rng.gen_range(0..slot.values.len())].clone()),
                _ => slot.values[rng.gen_range(0..slot.values.len())].clone(),
            };
            values.insert(slot.id.clone(), value);
        }
        slot_values.insert(task.clone(), values);
    }

    let mut early_slots = BTreeMap::new();
    if !config.early_slots.is_empty()
        && config.early_slot_prob > 0.0
        && rng.gen_bool(config.early_slot_prob)
    {
        let task = &tasks[0];
        let profile = suite.profile(task).expect("profiles cover tasks");
        let eligible: Vec<String> = config
            .early_slots
            .iter()
            .filter(|s| profile.slot(s).is_some())
            .cloned()
            .collect();
        if !eligible.is_empty() {
            early_slots.insert(task.clone(), eligible);
        }
    }

    let mut perturbations = Vec::new();
    if !happy {
        let count = rng.gen_range(1..=2);
        for _ in 0..count {
            let task = tasks[rng.gen_range(0..tasks.len())].clone();
            let profile = suite.profile(&task).expect("profiles cover tasks");
            let n_asks = profile.slots.len().max(1);
            let changeable = changeable_slots(suite, &task);
            let mut kinds = vec![PerturbationKind::SmallTalk, PerturbationKind::OutOfScope];
            if !profile.slots.is_empty() {
                kinds.push(PerturbationKind::ReferBack);
            }
            if !changeable.is_empty() {
                kinds.push(PerturbationKind::ChangeMind);
                kinds.push(PerturbationKind::EnvironmentEvent);
            }
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let perturbation = match kind {
                PerturbationKind::SmallTalk | PerturbationKind::OutOfScope => Perturbation {
                    kind,
                    task: task.clone(),
                    trigger: rng.gen_range(1..=n_asks),
                    slot: None,
                    value: None,
                },
                PerturbationKind::ReferBack => {
                    let pos = rng.gen_range(0..profile.slots.len());
                    let slot = &profile.slots[pos];
                    Perturbation {
                        kind,
                        task: task.clone(),
                        trigger: rng.gen_range(pos + 1..=n_asks),
                        slot: Some(slot.id.clone()),
                        value: None,
                    }
                }
                PerturbationKind::ChangeMind | PerturbationKind::EnvironmentEvent => {
                    let slot = changeable[rng.gen_range(0..changeable.len())];
                    let pos = profile
                        .slots
                        .iter()
                        .position(|s| s.id == slot.id)
                        .expect("slot exists");
                    let current = &slot_values[&task][&slot.id];
                    let alternatives: Vec<&String> =
                        slot.values.iter().filter(|v| *v != current).collect();
                    let value = alternatives[rng.gen_range(0..alternatives.len())].clone();
                    Perturbation {
                        kind,
                        task: task.clone(),
                        trigger: rng.gen_range(pos + 1..=n_asks),
                        slot: Some(slot.id.clone()),
                        value: Some(value),
                    }
                }
            };
            perturbations.push(perturbation);
        }
        perturbations.sort_by_key(|p| (p.task.clone(), p.trigger));
    }

    ScenarioSpec {
        tasks,
        happy,
        perturbations,
        slot_values,
        early_slots,
        seed: stream(config.seed, "dialog-seed", index).gen(),
    }
}

fn pick<'a>(rng: &mut impl Rng, pool: &'a [String]) -> &'a str {
    &pool[rng.gen_range(0..pool.len())]
}

fn scenario_metadata(suite: &TaskSuite, spec: &ScenarioSpec) -> Scenario {
    let mut domains: Vec<String> = spec
        .tasks
        .iter()
        .filter_map(|t| suite.schemas.domain_of(t))
        .map(str::to_string)
        .collect();
    domains.sort();
    domains.dedup();
    let mut goal = String::new();
    for task in &spec.tasks {
        goal.push_str(&format!("Complete the `{task}` task"));
        let details: Vec<String> = spec.slot_values[task]
            .iter()
            .map(|(slot, value)| format!("{} = {}", slot_display(slot), value))
            .collect();
        if !details.is_empty() {
            goal.push_str(&format!(" ({})", details.join(", ")));
        }
        goal.push_str(". ");
    }
    Scenario {
        domains,
        user_task: goal.trim_end().to_string(),
        wizard_task: format!("Assist the user. Capabilities: {}.", spec.tasks.join(", ")),
        capabilities: spec.tasks.clone(),
        happy: spec.happy,
        multi_task: spec.tasks.len() > 1,
    }
}

/// Play one scripted user against the wizard policy.
pub fn run_dialog(
    suite: &TaskSuite,
    spec: &ScenarioSpec,
    dialog_id: i64,
) -> Result<Dialog, SimError> {
    if spec.tasks.is_empty() {
        return Err(SimError::NoTasks);
    }
    let mut rng = stream(spec.seed, "user", 0);
    let mut session = WizardSession::new(suite, spec.tasks.clone(), spec.seed)?;
    let shared = &suite.shared;

    let opener = |rng: &mut rand_chacha::ChaCha8Rng, task: &str, with_early: bool| -> String {
        let profile = suite.profile(task).expect("profiles cover tasks");
        let mut text = pick(rng, &profile.openers).to_string();
        if with_early {
            if let Some(slots) = spec.early_slots.get(task) {
                for slot_id in slots {
                    let slot = profile.slot(slot_id).expect("early slot exists");
                    if slot.volunteer_templates.is_empty() {
                        continue;
                    }
                    let template = pick(rng, &slot.volunteer_templates).to_string();
                    let value = &spec.slot_values[task][slot_id];
                    text.push(' ');
                    text.push_str(&template.replace(&format!("{{{slot_id}}}"), value));
                }
            }
        }
        text
    };

    let mut queue = spec.perturbations.clone();
    let mut answered: BTreeMap<String, usize> = BTreeMap::new();
    let mut task_idx = 0usize;
    // Set when a change made the scenario values inconsistent with the KB;
    // on an unavailable result the user reverts to the known-good value.
    let mut revert: Option<(String, String, String)> = None;
    let mut last_intent = String::new();

    let first_line = opener(&mut rng, &spec.tasks[0], true);
    let mut pending_line = Some(first_line);

    for turn in 0..80 {
        let Some(line) = pending_line.take() else {
            break;
        };
        let events = session.handle_user(&line)?;
        last_intent = events
            .iter()
            .rev()
            .find_map(|e| e.intent.as_ref().map(|i| i.to_string()))
            .unwrap_or(last_intent);
        if std::env::var_os("SIM_TRACE").is_some() {
            eprintln!("[sim {turn}] USR: {line:?} -> {last_intent}");
        }
        if session.consecutive_off_schema() >= 3 {
            return Err(SimError::Deadlock(turn));
        }
        if session.done() {
            break;
        }

        let state = session.state().clone();
        let active = state.active_task.clone().unwrap_or_default();
        let profile = suite.profile(&active).expect("profiles cover tasks");
        let pending_ask = state
            .cursors
            .get(&active)
            .filter(|c| is_ask_label(c))
            .and_then(|c| profile.slot_for_node(c.as_str()))
            .map(|s| s.id.clone());
        let at_anything_else = state
            .cursors
            .get(&active)
            .is_some_and(|c| c.as_str() == "anything_else");

        // Recovery after an unavailable/not-found result.
        if last_intent.contains("unavailable") || last_intent.contains("nothing_found") {
            if let Some((task, slot, value)) = revert.take() {
                if task == active {
                    let template = pick(&mut rng, &shared.change_mind_user).to_string();
                    pending_line = Some(
                        template
                            .replace("{slot}", &slot_display(&slot))
                            .replace("{value}", &value),
                    );
                    continue;
                }
            }
            // No revert value: wrap up politely.
            pending_line = Some(pick(&mut rng, &shared.farewell).to_string());
            continue;
        }

        if state.awaiting_confirmation {
            pending_line = Some(pick(&mut rng, &shared.affirm).to_string());
            continue;
        }

        // Scheduled perturbations fire once enough asks were answered.
        let answered_here = answered.get(&active).copied().unwrap_or(0);
        if let Some(pos) = queue
            .iter()
            .position(|p| p.task == active && answered_here >= p.trigger)
        {
            let p = queue.remove(pos);
            let (instruct, line) = perturbation_lines(suite, &mut rng, &p);
            session.events_push_instruct(instruct);
            if let (PerturbationKind::ChangeMind | PerturbationKind::EnvironmentEvent, Some(slot)) =
                (p.kind, p.slot.clone())
            {
                let original = spec.slot_values[&p.task][&slot].clone();
                revert = Some((p.task.clone(), slot, original));
            }
            pending_line = Some(line);
            continue;
        }

        if let Some(slot_id) = pending_ask {
            let slot = profile.slot(&slot_id).expect("slot exists");
            let template = pick(&mut rng, &slot.user_templates).to_string();
            let value = &spec.slot_values[&active][&slot_id];
            pending_line = Some(template.replace(&format!("{{{slot_id}}}"), value));
            *answered.entry(active.clone()).or_default() += 1;
            continue;
        }

        if at_anything_else {
            if task_idx + 1 < spec.tasks.len() {
                task_idx += 1;
                let connector = ["Also, ", "One more thing: ", "Now, "][rng.gen_range(0..3)];
                let text = opener(&mut rng, &spec.tasks[task_idx], false);
                pending_line = Some(format!("{connector}{text}"));
            } else {
                pending_line = Some(pick(&mut rng, &shared.farewell).to_string());
            }
            continue;
        }

        if state
            .cursors
            .get(&active)
            .is_some_and(|c| c.as_str() == "hello")
            || state.cursors.is_empty()
        {
            pending_line = Some(pick(&mut rng, &profile.restates).to_string());
            continue;
        }

        if last_intent == "out_of_scope" || last_intent == "custom" {
            // Side reply with nothing pending: continue if the flow can,
            // otherwise wrap up rather than spin.
            let can_continue = state
                .cursors
                .get(&active)
                .and_then(|c| {
                    suite
                        .schemas
                        .get(&active)
                        .and_then(|s| s.next_node(c).ok().flatten())
                })
                .is_some();
            pending_line = Some(if can_continue && last_intent == "custom" {
                pick(&mut rng, &shared.ack).to_string()
            } else {
                pick(&mut rng, &shared.farewell).to_string()
            });
            continue;
        }

        // Informs: acknowledge and let the flow continue.
        pending_line = Some(pick(&mut rng, &shared.ack).to_string());
    }

    session.complete();
    let scenario = scenario_metadata(suite, spec);
    let batch = format!("sim-{:016x}", spec.seed);
    Ok(Dialog::new(dialog_id, batch, scenario, session.into_events())?)
}

fn perturbation_lines(
    suite: &TaskSuite,
    rng: &mut rand_chacha::ChaCha8Rng,
    p: &Perturbation,
) -> (String, String) {
    let shared = &suite.shared;
    let fill = |template: &str| {
        let mut text = template.to_string();
        if let Some(slot) = &p.slot {
            text = text.replace("{slot}", &slot_display(slot));
        }
        if let Some(value) = &p.value {
            text = text.replace("{value}", value);
        }
        text
    };
    match p.kind {
        PerturbationKind::SmallTalk => (
            fill(pick(rng, &shared.instruct_smalltalk)),
            fill(pick(rng, &shared.smalltalk)),
        ),
        PerturbationKind::OutOfScope => (
            fill(pick(rng, &shared.instruct_out_of_scope)),
            fill(pick(rng, &shared.out_of_scope)),
        ),
        PerturbationKind::ReferBack => (
            fill(pick(rng, &shared.instruct_refer_back)),
            fill(pick(rng, &shared.refer_back_user)),
        ),
        PerturbationKind::ChangeMind => (
            fill(pick(rng, &shared.instruct_change_mind)),
            fill(pick(rng, &shared.change_mind_user)),
        ),
        PerturbationKind::EnvironmentEvent => (
            fill(pick(rng, &shared.instruct_environment)),
            fill(pick(rng, &shared.environment_user)),
        ),
    }
}

/// Generate `n` dialogs in parallel; dialog `i` depends only on
/// `(config, i)`, so results are deterministic regardless of thread count.
pub fn simulate_corpus(
    suite: &TaskSuite,
    config: &SimConfig,
    n: usize,
) -> Result<Vec<Dialog>, SimError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = sample_scenario(suite, config, i as u64);
            run_dialog(suite, &spec, i as i64)
        })
        .collect()
}

/// Corpus statistics under the turn definition of [`count_turns`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub n_dialogs: usize,
    pub n_turns: usize,
    pub turns_per_dialog: f64,
    pub tokens_per_turn: f64,
    pub user_vocab_size: usize,
}

/// Compute corpus statistics. `entity_values` lists slot values whose
/// tokens do not count toward the user vocabulary.
pub fn corpus_stats(dialogs: &[Dialog], entity_values: &[String]) -> CorpusStats {
    let mut entity_tokens: Vec<String> = entity_values.iter().flat_map(|v| tokenize(v)).collect();
    entity_tokens.sort();
    entity_tokens.dedup();

    let n_dialogs = dialogs.len();
    let mut n_turns = 0usize;
    let mut token_total = 0usize;
    let mut text_turns = 0usize;
    let mut vocab: Vec<String> = Vec::new();
    for dialog in dialogs {
        n_turns += count_turns(dialog);
        let mut prev_was_pick = false;
        for event in &dialog.events {
            let action = event.action.expect("validated");
            let collapsed =
                action == EventAction::Utter && prev_was_pick && event.agent == Some(Agent::Wizard);
            if matches!(action, EventAction::Utter | EventAction::PickSuggestion) && !collapsed {
                if let Some(text) = &event.text {
                    token_total += tokenize(text).len();
                    text_turns += 1;
                }
            }
            if event.agent == Some(Agent::User) && action == EventAction::Utter {
                if let Some(text) = &event.text {
                    for token in tokenize(text) {
                        if token.chars().all(|c| c.is_alphabetic())
                            && entity_tokens.binary_search(&token).is_err()
                        {
                            vocab.push(token);
                        }
                    }
                }
            }
            prev_was_pick = action == EventAction::PickSuggestion;
        }
    }
    vocab.sort();
    vocab.dedup();
    CorpusStats {
        n_dialogs,
        n_turns,
        turns_per_dialog: if n_dialogs > 0 {
            n_turns as f64 / n_dialogs as f64
        } else {
            0.0
        },
        tokens_per_turn: if text_turns > 0 {
            token_total as f64 / text_turns as f64
        } else {
            0.0
        },
        user_vocab_size: vocab.len(),
    }
}

/// The entity-token exclusion list for vocabulary statistics: every slot
/// value pool plus every knowledge base cell.
pub fn entity_values(suite: &TaskSuite) -> Vec<String> {
    let mut values = Vec::new();
    for profile in suite.profiles.values() {
        for slot in &profile.slots {
            values.extend(slot.values.iter().cloned());
        }
    }
    for table in suite.kb.tables() {
        for row in table.rows() {
            for value in row.fields.values() {
                values.push(value.render());
            }
        }
    }
    values.sort();
    values.dedup();
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{read_dialog, write_dialog};
    use crate::suite::{fixtures_root, TaskSuite};

    fn suite() -> TaskSuite {
        TaskSuite::load(&fixtures_root()).unwrap()
    }

    #[test]
    fn happy_config_yields_no_perturbations() {
        let suite = suite();
        let config = SimConfig {
            happy_ratio: 1.0,
            multi_ratio: 0.0,
            seed: 11,
            ..SimConfig::default()
        };
        for i in 0..20 {
            let spec = sample_scenario(&suite, &config, i);
            assert!(spec.happy);
            assert!(spec.perturbations.is_empty());
            assert_eq!(spec.tasks.len(), 1);
        }
    }

    #[test]
    fn scenarios_are_deterministic() {
        let suite = suite();
        let config = SimConfig {
            seed: 42,
            ..SimConfig::default()
        };
        let a = sample_scenario(&suite, &config, 3);
        let b = sample_scenario(&suite, &config, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn happy_fraction_tracks_the_configured_ratio() {
        let suite = suite();
        let config = SimConfig {
            happy_ratio: 0.647,
            multi_ratio: 0.0,
            seed: 5,
            ..SimConfig::default()
        };
        let n = 10_000;
        let happy = (0..n)
            .filter(|i| sample_scenario(&suite, &config, *i).happy)
            .count();
        let fraction = happy as f64 / n as f64;
        assert!(
            (fraction - 0.647).abs() < 0.02,
            "happy fraction {fraction} strays from 0.647"
        );
    }

    #[test]
    fn simulated_dialogs_round_trip_and_validate() {
        let suite = suite();
        let config = SimConfig {
            seed: 7,
            ..SimConfig::default()
        };
        let dialogs = simulate_corpus(&suite, &config, 40).unwrap();
        assert_eq!(dialogs.len(), 40);
        for dialog in &dialogs {
            dialog.validate().unwrap();
            let text = write_dialog(dialog);
            let back = read_dialog(&text).unwrap();
            assert_eq!(&back, dialog);
            assert_eq!(write_dialog(&back), text);
        }
    }

    #[test]
    fn seeded_reruns_are_byte_identical() {
        let suite = suite();
        let config = SimConfig {
            seed: 99,
            ..SimConfig::default()
        };
        let a = simulate_corpus(&suite, &config, 10).unwrap();
        let b = simulate_corpus(&suite, &config, 10).unwrap();
        let bytes_a: Vec<String> = a.iter().map(write_dialog).collect();
        let bytes_b: Vec<String> = b.iter().map(write_dialog).collect();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn unhappy_dialogs_carry_instructions_and_happy_none() {
        let suite = suite();
        let config = SimConfig {
            happy_ratio: 0.5,
            multi_ratio: 0.0,
            seed: 21,
            ..SimConfig::default()
        };
        let mut saw_happy = false;
        let mut saw_unhappy = false;
        for i in 0..30 {
            let spec = sample_scenario(&suite, &config, i);
            let dialog = run_dialog(&suite, &spec, i as i64).unwrap();
            let instructs = dialog
                .events
                .iter()
                .filter(|e| e.action == Some(EventAction::Instruct))
                .count();
            if spec.happy {
                assert_eq!(instructs, 0, "happy dialog {i} has instructions");
                saw_happy = true;
            } else {
                assert!(instructs >= 1, "unhappy dialog {i} lacks instructions");
                saw_unhappy = true;
            }
        }
        assert!(saw_happy && saw_unhappy);
    }

    #[test]
    fn multi_task_dialogs_switch_topics() {
        let suite = suite();
        let config = SimConfig {
            multi_ratio: 1.0,
            seed: 13,
            ..SimConfig::default()
        };
        let mut saw_switch = false;
        for i in 0..10 {
            let spec = sample_scenario(&suite, &config, i);
            assert!(spec.tasks.len() >= 2);
            let dialog = run_dialog(&suite, &spec, i as i64).unwrap();
            assert!(dialog.scenario.multi_task);
            if dialog
                .events
                .iter()
                .any(|e| e.action == Some(EventAction::SelectTopic))
            {
                saw_switch = true;
            }
        }
        assert!(saw_switch);
    }

    #[test]
    fn corpus_stats_small_cases() {
        let suite = suite();
        let config = SimConfig {
            seed: 3,
            happy_ratio: 1.0,
            multi_ratio: 0.0,
            ..SimConfig::default()
        };
        let dialogs = simulate_corpus(&suite, &config, 2).unwrap();
        let stats = corpus_stats(&dialogs, &entity_values(&suite));
        assert_eq!(stats.n_dialogs, 2);
        let t0 = count_turns(&dialogs[0]);
        let t1 = count_turns(&dialogs[1]);
        assert_eq!(stats.n_turns, t0 + t1);
        assert!((stats.turns_per_dialog - (t0 + t1) as f64 / 2.0).abs() < 1e-12);
        assert!(stats.user_vocab_size > 0);
    }
}
