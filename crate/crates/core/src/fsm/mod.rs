//! State transition graphs: extraction from netlists, synthesis back into
//! LUT networks, HARPOON-style obfuscation and the attacks against it.

mod attack;
mod extract;
mod harpoon;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::LogicError;
use crate::model::{GateId, ModelError, NetId};

pub use attack::{attack_harpoon, HarpoonAttack};
pub use extract::{extract_stg, fsm_inputs};
pub use harpoon::{
    distinguish_states, harpoon_obfuscate, patch_initial_state, recover_enabling_key, HarpoonConfig,
    HarpoonLayout, StatePartition,
};
pub use synth::{synthesize_into, synthesize_stg, Encoding, Synthesized};

pub const MAX_INPUT_BITS: usize = 16;
pub const MAX_STATE_BITS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FsmError {
    #[error("{0} input bits exceed the limit of {MAX_INPUT_BITS}")]
    InputWidthExceeded(usize),
    #[error("{0} state bits exceed the limit of {MAX_STATE_BITS}")]
    StateWidthExceeded(usize),
    #[error("next-state logic of FF {ff} depends on net {net} outside the state and input nets")]
    ConeEscape { ff: GateId, net: String },
    #[error("combinational cycle through gates {0:?}")]
    CombinationalCycle(Vec<GateId>),
    #[error("support of {0} variables exceeds the cap")]
    SupportOverflow(usize),
    #[error("{states} states do not fit the encoding")]
    EncodingOverflow { states: usize },
    #[error("invalid obfuscation config: {0}")]
    ConfigInvalid(String),
    #[error("no sink component with two or more states is reachable from reset")]
    NoSinkComponent,
    #[error("no original state is reachable from reset")]
    Unreachable,
    #[error("expected {expected} state bits, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("gate {0} is not a flip-flop")]
    NotAFlipFlop(GateId),
    #[error("no FSM candidate shows an obfuscation prefix")]
    NoObfuscatedFsm,
    #[error("invalid state transition graph: {0}")]
    InvalidStg(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl FsmError {
    pub fn code(&self) -> &'static str {
        match self {
            FsmError::InputWidthExceeded(_) => "InputWidthExceeded",
            FsmError::StateWidthExceeded(_) => "StateWidthExceeded",
            FsmError::ConeEscape { .. } => "ConeEscape",
            FsmError::CombinationalCycle(_) => "CombinationalCycle",
            FsmError::SupportOverflow(_) => "SupportOverflow",
            FsmError::EncodingOverflow { .. } => "EncodingOverflow",
            FsmError::ConfigInvalid(_) => "ConfigInvalid",
            FsmError::NoSinkComponent => "NoSinkComponent",
            FsmError::Unreachable => "Unreachable",
            FsmError::WidthMismatch { .. } => "WidthMismatch",
            FsmError::NotAFlipFlop(_) => "NotAFlipFlop",
            FsmError::NoObfuscatedFsm => "NoObfuscatedFsm",
            FsmError::InvalidStg(_) => "InvalidStg",
            FsmError::Model(e) => e.code(),
        }
    }
}

impl From<LogicError> for FsmError {
    fn from(e: LogicError) -> Self {
        match e {
            LogicError::CombinationalCycle(c) => FsmError::CombinationalCycle(c),
            LogicError::SupportOverflow(n) => FsmError::SupportOverflow(n),
            other => FsmError::InvalidStg(other.to_string()),
        }
    }
}

/// Explicit state machine. A state is a code whose bit `i` is the value of
/// `state_bits[i]`; an input word's bit `j` is the value of `input_bits[j]`.
/// Graphs not tied to a netlist leave both lists empty and only carry the
/// widths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stg {
    pub state_bits: Vec<GateId>,
    pub input_bits: Vec<NetId>,
    pub state_width: usize,
    pub input_width: usize,
    pub states: BTreeSet<u64>,
    pub transitions: BTreeMap<(u64, u32), u64>,
    pub reset: u64,
}

impl Stg {
    pub fn words(&self) -> u32 {
        1u32 << self.input_width
    }

    pub fn next(&self, state: u64, word: u32) -> Option<u64> {
        self.transitions.get(&(state, word)).copied()
    }

    /// Checks totality, closure and reset membership.
    pub fn validate(&self) -> Result<(), FsmError> {
        if self.input_width > MAX_INPUT_BITS {
            return Err(FsmError::InputWidthExceeded(self.input_width));
        }
        if !self.states.contains(&self.reset) {
            return Err(FsmError::InvalidStg(format!("reset {} is not a state", self.reset)));
        }
        for s in &self.states {
            for w in 0..self.words() {
                match self.next(*s, w) {
                    None => {
                        return Err(FsmError::InvalidStg(format!(
                            "no transition from {s} on word {w}"
                        )))
                    }
                    Some(t) if !self.states.contains(&t) => {
                        return Err(FsmError::InvalidStg(format!("target {t} is not a state")))
                    }
                    _ => {}
                }
            }
        }
        if self.transitions.len() != self.states.len() * self.words() as usize {
            return Err(FsmError::InvalidStg("transitions from unknown states".into()));
        }
        Ok(())
    }

    /// States reachable from reset, in breadth-first order.
    pub fn reachable(&self) -> Vec<u64> {
        let mut seen = BTreeSet::from([self.reset]);
        let mut order = vec![self.reset];
        let mut q = VecDeque::from([self.reset]);
        while let Some(s) = q.pop_front() {
            for w in 0..self.words() {
                if let Some(t) = self.next(s, w) {
                    if seen.insert(t) {
                        order.push(t);
                        q.push_back(t);
                    }
                }
            }
        }
        order
    }

    /// Runs a word sequence from `start`.
    pub fn walk(&self, start: u64, words: &[u32]) -> Option<u64> {
        words.iter().try_fold(start, |s, w| self.next(s, *w))
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph stg {\n  __start [shape=point];\n");
        let _ = writeln!(out, "  __start -> s{};", self.reset);
        for s in &self.states {
            let _ = writeln!(out, "  s{s} [label=\"{s}\"];");
        }
        let mut grouped: BTreeMap<(u64, u64), Vec<u32>> = BTreeMap::new();
        for ((s, w), t) in &self.transitions {
            grouped.entry((*s, *t)).or_default().push(*w);
        }
        for ((s, t), ws) in grouped {
            let label: Vec<String> = ws.iter().map(|w| w.to_string()).collect();
            let _ = writeln!(out, "  s{s} -> s{t} [label=\"{}\"];", label.join(","));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct StgDoc {
    state_bits: Vec<GateId>,
    input_bits: Vec<NetId>,
    state_width: usize,
    input_width: usize,
    states: Vec<u64>,
    reset: u64,
    /// `[state, word, next]` triples.
    transitions: Vec<(u64, u32, u64)>,
}

impl Serialize for Stg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StgDoc {
            state_bits: self.state_bits.clone(),
            input_bits: self.input_bits.clone(),
            state_width: self.state_width,
            input_width: self.input_width,
            states: self.states.iter().copied().collect(),
            reset: self.reset,
            transitions: self.transitions.iter().map(|((a, w), b)| (*a, *w, *b)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Stg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = StgDoc::deserialize(d)?;
        Ok(Stg {
            state_bits: doc.state_bits,
            input_bits: doc.input_bits,
            state_width: doc.state_width,
            input_width: doc.input_width,
            states: doc.states.into_iter().collect(),
            transitions: doc.transitions.into_iter().map(|(a, w, b)| ((a, w), b)).collect(),
            reset: doc.reset,
        })
    }
}

/// Structural equality up to state relabelling, over the reachable parts.
/// Both graphs must have every state reachable from reset.
pub fn isomorphic(a: &Stg, b: &Stg) -> bool {
    if a.input_width != b.input_width || a.states.len() != b.states.len() {
        return false;
    }
    let mut fwd: HashMap<u64, u64> = HashMap::from([(a.reset, b.reset)]);
    let mut back: HashMap<u64, u64> = HashMap::from([(b.reset, a.reset)]);
    let mut q = VecDeque::from([a.reset]);
    while let Some(s) = q.pop_front() {
        let sb = fwd[&s];
        for w in 0..a.words() {
            let (Some(ta), Some(tb)) = (a.next(s, w), b.next(sb, w)) else {
                return false;
            };
            match (fwd.get(&ta), back.get(&tb)) {
                (None, None) => {
                    fwd.insert(ta, tb);
                    back.insert(tb, ta);
                    q.push_back(ta);
                }
                (Some(x), Some(y)) if *x == tb && *y == ta => {}
                _ => return false,
            }
        }
    }
    fwd.len() == a.states.len()
}

/// Builds an abstract graph from a next-state function over codes
/// `0..states`.
pub fn stg_from_fn(states: u64, input_width: usize, reset: u64, next: impl Fn(u64, u32) -> u64) -> Stg {
    let mut transitions = BTreeMap::new();
    for s in 0..states {
        for w in 0..(1u32 << input_width) {
            transitions.insert((s, w), next(s, w));
        }
    }
    Stg {
        state_bits: vec![],
        input_bits: vec![],
        state_width: width_for(states as usize),
        input_width,
        states: (0..states).collect(),
        transitions,
        reset,
    }
}

/// Bits needed for a binary code of `n` states (at least one).
pub fn width_for(n: usize) -> usize {
    let mut w = 1;
    while (1usize << w) < n {
        w += 1;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isomorphism_relabels() {
        let a = stg_from_fn(3, 1, 0, |s, w| if w == 1 { (s + 1) % 3 } else { s });
        let mut b = a.clone();
        b.states = [10, 20, 30].into();
        b.reset = 20;
        let map = |s: u64| [20, 30, 10][s as usize];
        b.transitions = a.transitions.iter().map(|((s, w), t)| ((map(*s), *w), map(*t))).collect();
        assert!(isomorphic(&a, &b));
        let c = stg_from_fn(3, 1, 0, |s, w| if w == 0 { (s + 1) % 3 } else { s });
        assert!(!isomorphic(&a, &c));
    }

    #[test]
    fn json_and_dot() {
        let a = stg_from_fn(2, 1, 0, |s, w| s ^ w as u64);
        a.validate().unwrap();
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<Stg>(&text).unwrap(), a);
        let dot = a.to_dot();
        assert!(dot.contains("s0 -> s1 [label=\"1\"];"));
        assert!(dot.contains("__start -> s0;"));
    }

    #[test]
    fn widths() {
        assert_eq!(width_for(1), 1);
        assert_eq!(width_for(4), 2);
        assert_eq!(width_for(5), 3);
        assert_eq!(width_for(16), 4);
    }
}
