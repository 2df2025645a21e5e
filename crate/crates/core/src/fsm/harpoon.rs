use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{width_for, FsmError, Stg};
use crate::graph::{scc, Digraph};
use crate::model::{GateId, Netlist};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarpoonConfig {
    pub key: Vec<u32>,
    pub extra_loop_states: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Codes of the states added by [`harpoon_obfuscate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarpoonLayout {
    pub key_chain: Vec<u64>,
    pub trap_loop: Vec<u64>,
    pub original_reset: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatePartition {
    pub original: BTreeSet<u64>,
    pub obfuscation: BTreeSet<u64>,
}

/// Prepends a key chain `o_0 .. o_{L-1}` and a trap loop `a_0 .. a_{a-1}`.
///
/// From `o_j` the word `key[j]` advances (from the last chain state, into
/// the original reset); any other word enters `a_0`, or returns to `o_0`
/// when there is no trap loop. The trap loop walks to `o_0` on every word.
/// New states take codes above the largest original code.
pub fn harpoon_obfuscate(stg: &Stg, config: &HarpoonConfig) -> Result<(Stg, HarpoonLayout), FsmError> {
    stg.validate()?;
    let words = stg.words();
    if config.key.is_empty() {
        return Err(FsmError::ConfigInvalid("key must have at least one word".into()));
    }
    if let Some(w) = config.key.iter().find(|w| **w >= words) {
        return Err(FsmError::ConfigInvalid(format!(
            "key word {w} does not fit {} input bits",
            stg.input_width
        )));
    }
    if stg.input_width == 0 && config.extra_loop_states > 0 {
        return Err(FsmError::ConfigInvalid(
            "a trap loop needs at least one input bit to be entered".into(),
        ));
    }
    let base = stg.states.iter().next_back().map_or(0, |m| m + 1);
    let chain: Vec<u64> = (0..config.key.len() as u64).map(|j| base + j).collect();
    let trap: Vec<u64> = (0..config.extra_loop_states as u64)
        .map(|i| base + chain.len() as u64 + i)
        .collect();
    let mut out = stg.clone();
    out.state_bits.clear();
    out.states.extend(chain.iter().chain(&trap));
    let wrong = trap.first().copied().unwrap_or(chain[0]);
    for (j, o) in chain.iter().enumerate() {
        let advance = chain.get(j + 1).copied().unwrap_or(stg.reset);
        for w in 0..words {
            let t = if w == config.key[j] { advance } else { wrong };
            out.transitions.insert((*o, w), t);
        }
    }
    for (i, a) in trap.iter().enumerate() {
        let t = trap.get(i + 1).copied().unwrap_or(chain[0]);
        for w in 0..words {
            out.transitions.insert((*a, w), t);
        }
    }
    out.reset = chain[0];
    out.state_width = out.state_width.max(width_for(out.states.len()));
    Ok((
        out,
        HarpoonLayout {
            key_chain: chain,
            trap_loop: trap,
            original_reset: stg.reset,
        },
    ))
}

/// Splits states into the original machine and the added ones: the
/// original part is the union of the multi-state sink components of the
/// transition graph (inputs ignored) that are reachable from reset.
pub fn distinguish_states(stg: &Stg) -> Result<StatePartition, FsmError> {
    let index: BTreeMap<u64, GateId> = stg
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, GateId(i as u32 + 1)))
        .collect();
    let label: BTreeMap<GateId, u64> = index.iter().map(|(s, g)| (*g, *s)).collect();
    let mut g = Digraph::new();
    for s in index.values() {
        g.add_node(*s);
    }
    for ((s, _), t) in &stg.transitions {
        if let (Some(a), Some(b)) = (index.get(s), index.get(t)) {
            g.add_edge(*a, *b);
        }
    }
    let sccs = scc(&g);
    let reachable: BTreeSet<u64> = stg.reachable().into_iter().collect();
    let mut original = BTreeSet::new();
    for (i, comp) in sccs.components.iter().enumerate() {
        let sink = sccs.condensation[&i].is_empty();
        let first = label[comp.iter().next().unwrap()];
        if sink && comp.len() >= 2 && reachable.contains(&first) {
            original.extend(comp.iter().map(|n| label[n]));
        }
    }
    if original.is_empty() {
        return Err(FsmError::NoSinkComponent);
    }
    let obfuscation = stg.states.difference(&original).copied().collect();
    Ok(StatePartition { original, obfuscation })
}

/// Shortest word sequence from reset into the original part; among equal
/// lengths the lexicographically smallest.
pub fn recover_enabling_key(stg: &Stg, partition: &StatePartition) -> Result<Vec<u32>, FsmError> {
    let mut parent: BTreeMap<u64, (u64, u32)> = BTreeMap::new();
    let mut seen = BTreeSet::from([stg.reset]);
    let mut queue = VecDeque::from([stg.reset]);
    while let Some(s) = queue.pop_front() {
        if partition.original.contains(&s) {
            let mut key = Vec::new();
            let mut cur = s;
            while let Some((p, w)) = parent.get(&cur) {
                key.push(*w);
                cur = *p;
            }
            key.reverse();
            return Ok(key);
        }
        for w in 0..stg.words() {
            if let Some(t) = stg.next(s, w) {
                if seen.insert(t) {
                    parent.insert(t, (s, w));
                    queue.push_back(t);
                }
            }
        }
    }
    Err(FsmError::Unreachable)
}

/// Copy of `n` with the FFs' power-up values replaced by `state`.
pub fn patch_initial_state(n: &Netlist, ffs: &[GateId], state: &[bool]) -> Result<Netlist, FsmError> {
    if ffs.len() != state.len() {
        return Err(FsmError::WidthMismatch {
            expected: ffs.len(),
            got: state.len(),
        });
    }
    let mut out = n.clone();
    for (id, bit) in ffs.iter().zip(state) {
        if !out.gate(*id)?.kind.is_sequential() {
            return Err(FsmError::NotAFlipFlop(*id));
        }
        out.set_init(*id, *bit as u64)?;
    }
    Ok(out)
}
