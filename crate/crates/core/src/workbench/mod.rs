//! Project generators, the live analysis session and its command channel.

mod commands;
pub mod generators;
mod session;
pub mod views;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Netlist;

pub use commands::{random_stimulus, run_command, CommandOutput, VERBS};
pub use generators::{AesTruth, HarpoonTruth, SeaTruth, SpnTruth};
pub use session::{Clock, Session};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkbenchError {
    #[error("unknown command {0:?}")]
    UnknownCommand(String),
    #[error("{0}")]
    ArgumentError(String),
    #[error("invalid project spec: {0}")]
    SpecInvalid(String),
    #[error("io error: {0}")]
    Io(String),
}

impl WorkbenchError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkbenchError::UnknownCommand(_) => "UnknownCommand",
            WorkbenchError::ArgumentError(_) => "ArgumentError",
            WorkbenchError::SpecInvalid(_) => "SpecInvalid",
            WorkbenchError::Io(_) => "IoError",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectKind {
    SpnCipher,
    FsmSeaOfGates,
    HarpoonFsm,
    AesFixedKey,
}

impl ProjectKind {
    pub const ALL: [ProjectKind; 4] = [
        ProjectKind::SpnCipher,
        ProjectKind::FsmSeaOfGates,
        ProjectKind::HarpoonFsm,
        ProjectKind::AesFixedKey,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProjectKind::SpnCipher => "spn_cipher",
            ProjectKind::FsmSeaOfGates => "fsm_sea_of_gates",
            ProjectKind::HarpoonFsm => "harpoon_fsm",
            ProjectKind::AesFixedKey => "aes_fixed_key",
        }
    }
}

impl fmt::Display for ProjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProjectKind {
    type Err = WorkbenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('-', "_");
        ProjectKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| WorkbenchError::SpecInvalid(format!("unknown project kind {s:?}")))
    }
}

pub const DEFAULT_PADDING: usize = 2000;
pub const DEFAULT_INPUT_BITS: usize = 2;

/// What to generate. Unset knobs are drawn from the seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub kind: ProjectKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_bits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_loop_states: Option<usize>,
}

impl ProjectSpec {
    pub fn new(kind: ProjectKind, seed: u64) -> Self {
        ProjectSpec {
            kind,
            seed,
            padding: None,
            states: None,
            input_bits: None,
            key_length: None,
            extra_loop_states: None,
        }
    }

    pub fn validate(&self) -> Result<(), WorkbenchError> {
        let bad = |m: String| Err(WorkbenchError::SpecInvalid(m));
        if let Some(s) = self.states {
            if !(4..=16).contains(&s) {
                return bad(format!("states must be in 4..=16, got {s}"));
            }
        }
        if let Some(b) = self.input_bits {
            if !(1..=3).contains(&b) {
                return bad(format!("input_bits must be in 1..=3, got {b}"));
            }
        }
        if let Some(l) = self.key_length {
            if !(1..=8).contains(&l) {
                return bad(format!("key_length must be in 1..=8, got {l}"));
            }
        }
        if let Some(a) = self.extra_loop_states {
            if a > 8 {
                return bad(format!("extra_loop_states must be at most 8, got {a}"));
            }
        }
        let fsm_kind = matches!(self.kind, ProjectKind::FsmSeaOfGates | ProjectKind::HarpoonFsm);
        let harpoon = self.kind == ProjectKind::HarpoonFsm;
        if !fsm_kind && (self.padding.is_some() || self.states.is_some() || self.input_bits.is_some()) {
            return bad(format!("{} takes no FSM knobs", self.kind));
        }
        if !harpoon && (self.key_length.is_some() || self.extra_loop_states.is_some()) {
            return bad(format!("{} takes no obfuscation knobs", self.kind));
        }
        Ok(())
    }
}

/// Ground truth written next to a generated project. Analysis code never
/// reads it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    SpnCipher(SpnTruth),
    FsmSeaOfGates(SeaTruth),
    HarpoonFsm(HarpoonTruth),
    AesFixedKey(AesTruth),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedProject {
    pub spec: ProjectSpec,
    pub netlist: Netlist,
    pub truth: Truth,
    /// The design before obfuscation, for `harpoon_fsm`.
    pub reference: Option<Netlist>,
}

impl GeneratedProject {
    /// Interface description an analyst would be handed with the design:
    /// how to clock it, but not what is inside.
    pub fn clocking(&self) -> Option<&crate::aes::ClockingInfo> {
        match &self.truth {
            Truth::AesFixedKey(t) => Some(&t.clocking),
            _ => None,
        }
    }
}

pub fn generate_project(spec: &ProjectSpec) -> crate::Result<GeneratedProject> {
    spec.validate()?;
    let padding = spec.padding.unwrap_or(DEFAULT_PADDING);
    let input_bits = spec.input_bits.unwrap_or(DEFAULT_INPUT_BITS);
    let (netlist, truth, reference) = match spec.kind {
        ProjectKind::SpnCipher => {
            let (n, t) = generators::spn_cipher(spec.seed)?;
            (n, Truth::SpnCipher(t), None)
        }
        ProjectKind::FsmSeaOfGates => {
            let (n, t) = generators::fsm_sea_of_gates(spec.seed, spec.states, input_bits, padding)?;
            (n, Truth::FsmSeaOfGates(t), None)
        }
        ProjectKind::HarpoonFsm => {
            let (n, r, t) = generators::harpoon_fsm(
                spec.seed,
                spec.states,
                input_bits,
                spec.key_length,
                spec.extra_loop_states,
                padding,
            )?;
            (n, Truth::HarpoonFsm(t), Some(r))
        }
        ProjectKind::AesFixedKey => {
            let (n, t) = generators::aes_fixed_key(spec.seed)?;
            (n, Truth::AesFixedKey(t), None)
        }
    };
    Ok(GeneratedProject {
        spec: spec.clone(),
        netlist,
        truth,
        reference,
    })
}
