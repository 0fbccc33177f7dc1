//! Schema-guided task-oriented dialog engine.
//!
//! The crate is organized around an explicit *task schema*: a set of named
//! reply templates plus a directed graph over them that encodes the ideal
//! dialog flow. On top of that representation it provides:
//!
//! - [`schema`]: parsing, validation, and traversal of task schemas.
//! - [`dialog`]: the dialog/event data model and a canonical JSON
//!   reader/writer compatible with the wizard-of-oz corpus format.
//! - [`kb`]: per-task knowledge bases with typed constraint queries.
//! - [`policy`]: the deterministic schema-following wizard policy.
//! - [`guidance`]: learned next-action models — a schema-free classifier and
//!   a schema-guided gated mixture over a hashed n-gram encoder.
//! - [`response`]: schema-augmented response construction and generation
//!   metrics (BLEU-4, in-domain exact match, entity F-1).
//! - [`sim`]: a user simulator that synthesizes happy, unhappy, and
//!   multi-task dialogs in the corpus format.
//! - [`eval`]: experiment harness — splits, order-consistency checking,
//!   history sweeps, and zero-shot task/domain transfer.
//!
//! All randomness is drawn from caller-supplied seeds; identical inputs give
//! byte-identical outputs.

pub mod dialog;
pub mod eval;
pub mod guidance;
pub mod kb;
pub mod policy;
pub mod profile;
pub mod response;
pub mod rng;
pub mod schema;
pub mod sim;
pub mod suite;
pub mod text;
