use serde::{Deserialize, Serialize};

use super::{distinguish_states, extract_stg, fsm_inputs, recover_enabling_key, FsmError, StatePartition};
use super::MAX_INPUT_BITS;
use crate::graph::fsm_candidates;
use crate::model::{GateId, NetId, Netlist};

/// Result of the netlist-only HARPOON attack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarpoonAttack {
    /// 1-based rank of the attacked candidate.
    pub candidate_rank: usize,
    pub ff_ids: Vec<GateId>,
    pub input_nets: Vec<NetId>,
    pub partition: StatePartition,
    pub key: Vec<u32>,
    /// State entered after the key, as a code over `ff_ids`.
    pub original_reset: u64,
    /// Power-up values that start the machine in `original_reset`.
    pub reset_bits: Vec<bool>,
}

/// Walks the ranked FSM candidates and attacks the first one whose state
/// graph has a transient obfuscation part in front of its sink component.
pub fn attack_harpoon(n: &Netlist) -> Result<HarpoonAttack, FsmError> {
    for (rank, cand) in fsm_candidates(n).into_iter().enumerate() {
        let ffs: Vec<GateId> = cand.ff_ids.iter().copied().collect();
        let Ok(inputs) = fsm_inputs(n, &ffs) else { continue };
        if inputs.len() > MAX_INPUT_BITS {
            continue;
        }
        let Ok(stg) = extract_stg(n, &ffs, &inputs) else { continue };
        let Ok(partition) = distinguish_states(&stg) else { continue };
        if partition.obfuscation.is_empty() || !partition.obfuscation.contains(&stg.reset) {
            continue;
        }
        let Ok(key) = recover_enabling_key(&stg, &partition) else { continue };
        let Some(original_reset) = stg.walk(stg.reset, &key) else { continue };
        let reset_bits = (0..ffs.len()).map(|i| (original_reset >> i) & 1 == 1).collect();
        return Ok(HarpoonAttack {
            candidate_rank: rank + 1,
            ff_ids: ffs,
            input_nets: inputs,
            partition,
            key,
            original_reset,
            reset_bits,
        });
    }
    Err(FsmError::NoObfuscatedFsm)
}
