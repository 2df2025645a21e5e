//! Append-only session logs: one JSON record per workbench action, with
//! replay against a base project and aggregate session metrics.

mod log;
mod metrics;
mod replay;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::Outcome;

pub use log::{parse_log, read_log, EventLog};
pub use metrics::{metrics, SessionMetrics, DEFAULT_IDLE_THRESHOLD_MS};
pub use replay::replay;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("io error: {0}")]
    Io(String),
    #[error("unregistered operation {0:?}")]
    UnknownOp(String),
    #[error("replay diverges at seq {seq}")]
    DigestMismatch { seq: u64 },
    #[error("malformed log line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::SequenceGap { .. } => "SequenceGap",
            TraceError::Io(_) => "IoError",
            TraceError::UnknownOp(_) => "UnknownOp",
            TraceError::DigestMismatch { .. } => "DigestMismatch",
            TraceError::Parse { .. } => "ParseError",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    User,
    Script,
    System,
}

/// One logged action. `args` is the operation's canonical argument
/// encoding and `digest` the project state digest after it ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: u64,
    pub session_id: String,
    pub actor: Actor,
    pub op: String,
    pub targets: Vec<u64>,
    pub args: Value,
    pub digest: String,
    pub outcome: Outcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Session,
    Edit,
    Grouping,
    Analysis,
    Navigation,
    Command,
}

impl Category {
    pub fn name(&self) -> &'static str {
        match self {
            Category::Session => "session",
            Category::Edit => "edit",
            Category::Grouping => "grouping",
            Category::Analysis => "analysis",
            Category::Navigation => "navigation",
            Category::Command => "command",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpSpec {
    pub name: &'static str,
    pub category: Category,
    pub mutating: bool,
}

const fn op(name: &'static str, category: Category, mutating: bool) -> OpSpec {
    OpSpec {
        name,
        category,
        mutating,
    }
}

/// The registered operation vocabulary.
pub const OPERATIONS: &[OpSpec] = &[
    op("session.open", Category::Session, false),
    op("gate.add", Category::Edit, true),
    op("fsm.patch_init", Category::Edit, true),
    op("aes.patch_sbox", Category::Edit, true),
    op("submodule.create", Category::Grouping, true),
    op("submodule.assign", Category::Grouping, true),
    op("submodule.unassign", Category::Grouping, true),
    op("submodule.set_parent", Category::Grouping, true),
    op("submodule.set_color", Category::Grouping, true),
    op("netlist.lint", Category::Analysis, false),
    op("logic.function", Category::Analysis, false),
    op("graph.scc", Category::Analysis, false),
    op("fsm.candidates", Category::Analysis, false),
    op("fsm.extract_stg", Category::Analysis, false),
    op("fsm.attack_harpoon", Category::Analysis, false),
    op("aes.locate", Category::Analysis, false),
    op("aes.extract_key", Category::Analysis, false),
    op("sim.run", Category::Analysis, false),
    op("session.metrics", Category::Analysis, false),
    op("netlist.summary", Category::Navigation, false),
    op("gate.inspect", Category::Navigation, false),
    op("gate.neighbors", Category::Navigation, false),
    op("submodule.list", Category::Navigation, false),
    op("ui.select", Category::Navigation, false),
    op("command.run", Category::Command, false),
];

pub fn lookup_op(name: &str) -> Option<&'static OpSpec> {
    OPERATIONS.iter().find(|o| o.name == name)
}
