//! AES S-box location, identity patching and fixed-key extraction.

mod extract;
mod locate;
pub mod sbox;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GateId, GateKind, ModelError, NetId, Netlist, Pin};
use crate::sim::SimError;

pub use extract::{extract_key, ClockingInfo, KeyReport};
pub use locate::locate_sbox;
pub use sbox::{aes_sbox_table, SBOX};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AesError {
    #[error("need 16 S-box instances, got {0}")]
    NotEnoughInstances(usize),
    #[error("S-box instance is stale: {0}")]
    InstanceStale(String),
    #[error("key verification failed: {0}")]
    VerificationFailed(String),
    #[error("invalid clocking info: {0}")]
    BadClocking(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl AesError {
    pub fn code(&self) -> &'static str {
        match self {
            AesError::NotEnoughInstances(_) => "NotEnoughInstances",
            AesError::InstanceStale(_) => "InstanceStale",
            AesError::VerificationFailed(_) => "VerificationFailed",
            AesError::BadClocking(_) => "BadClocking",
            AesError::Sim(e) => e.code(),
            AesError::Model(e) => e.code(),
        }
    }
}

/// Order in which the located nets matched the table: `input[i]` is the
/// position of `input_nets[i]` among the support nets sorted by id, and
/// likewise for outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMapping {
    pub input: Vec<u8>,
    pub output: Vec<u8>,
}

impl BitMapping {
    pub fn is_identity(&self) -> bool {
        self.input.iter().enumerate().all(|(i, p)| *p as usize == i)
            && self.output.iter().enumerate().all(|(i, p)| *p as usize == i)
    }
}

/// Eight output nets computing `SBOX` of eight input nets, bit 0 first:
/// with `x = sum(input_nets[i] << i)`, `sum(output_nets[j] << j) = SBOX[x]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SboxInstance {
    pub input_nets: Vec<NetId>,
    pub output_nets: Vec<NetId>,
    pub gate_ids: BTreeSet<GateId>,
    pub bit_mapping: BitMapping,
}

/// Rewires each output net to a BUF of the matching input net. The old
/// S-box gates stay in place, driving fresh `<net>_detached` nets.
pub fn patch_sbox_identity(n: &Netlist, inst: &SboxInstance) -> Result<Netlist, AesError> {
    if inst.input_nets.len() != 8 || inst.output_nets.len() != 8 {
        return Err(AesError::InstanceStale("instance must have 8 inputs and 8 outputs".into()));
    }
    for net in inst.input_nets.iter().chain(&inst.output_nets) {
        if n.try_net(*net).is_none() {
            return Err(AesError::InstanceStale(format!("net {net} no longer exists")));
        }
    }
    for o in &inst.output_nets {
        match n.net(*o).driver_gate() {
            Some(g) if inst.gate_ids.contains(&g) => {}
            _ => {
                return Err(AesError::InstanceStale(format!(
                    "net {} is no longer driven by the located gates",
                    n.net_name(*o)
                )))
            }
        }
    }
    let mut out = n.clone();
    for (i, o) in inst.input_nets.iter().zip(&inst.output_nets) {
        let driver = out.net(*o).driver_gate().expect("checked above");
        let pin = out.gate(driver)?.kind.output_pin();
        let name = format!("{}_detached", out.net_name(*o));
        let spare = out.fresh_net(&name);
        out.reconnect(driver, pin, spare)?;
        let buf_name = format!("{}_id", out.net_name(*o));
        out.add_gate_raw(buf_name, GateKind::Buf, None, [(Pin::I, *i), (Pin::O, *o)].into())?;
    }
    Ok(out)
}
