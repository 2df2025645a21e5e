use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{expose_sinkless, ff, pad, random_stg};
use crate::fsm::{
    harpoon_obfuscate, synthesize_into, synthesize_stg, width_for, Encoding, FsmError, HarpoonConfig,
    HarpoonLayout, Stg,
};
use crate::graph::{ff_projection, scc};
use crate::logic::{BooleanFunction, LutMapper};
use crate::model::{GateId, NetId, Netlist};
use crate::Error;

pub const COUNTER_WIDTH: usize = 4;
const DATA_INPUTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeaTruth {
    pub fsm_ffs: Vec<GateId>,
    pub counter_ffs: Vec<GateId>,
    pub fsm_inputs: Vec<NetId>,
    pub stg: Stg,
    /// Original state label to FF code.
    pub codes: BTreeMap<u64, u64>,
    pub padding: usize,
    pub gate_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarpoonTruth {
    pub fsm_ffs: Vec<GateId>,
    pub fsm_inputs: Vec<NetId>,
    pub key: Vec<u32>,
    pub extra_loop_states: usize,
    pub original_stg: Stg,
    pub obfuscated_stg: Stg,
    pub layout: HarpoonLayout,
    /// FF codes of the original states in the obfuscated netlist.
    pub original_codes: BTreeSet<u64>,
    pub original_reset_code: u64,
    pub original_reset_bits: Vec<bool>,
    pub padding: usize,
    pub gate_count: usize,
}

struct Sea {
    netlist: Netlist,
    fsm_ffs: Vec<GateId>,
    codes: BTreeMap<u64, u64>,
    counter_ffs: Vec<GateId>,
    fsm_inputs: Vec<NetId>,
}

/// FSM, counter and filler in one netlist. The filler reads the first
/// `tap_width` state bits and is driven from its own seed, so two machines
/// with the same tap width get byte-identical filler.
fn build_sea(stg: &Stg, tap_width: usize, padding: usize, pad_seed: u64) -> Result<Sea, Error> {
    let mut n = Netlist::new("sea");
    let clk = n.add_input("clk")?;
    n.set_clock(Some(clk));
    let ins: Vec<NetId> = (0..stg.input_width)
        .map(|j| n.add_input(&format!("in{j}")))
        .collect::<Result<_, _>>()?;
    let data: Vec<NetId> = (0..DATA_INPUTS)
        .map(|j| n.add_input(&format!("d{j}")))
        .collect::<Result<_, _>>()?;
    let fsm = synthesize_into(&mut n, stg, Encoding::Binary, "fsm_", &ins, clk)?;

    let cnt: Vec<NetId> = (0..COUNTER_WIDTH)
        .map(|i| n.add_net(format!("cnt_st{i}")))
        .collect::<Result<_, _>>()?;
    let mut mapper = LutMapper::new("cnt_");
    let mut counter_ffs = Vec::new();
    for i in 0..COUNTER_WIDTH {
        let f = BooleanFunction::from_fn(cnt[..=i].to_vec(), |c| ((c + 1) >> i) & 1 == 1)?;
        let d = mapper.emit(&mut n, &f)?;
        counter_ffs.push(ff(&mut n, &format!("cnt_s{i}"), d, clk, cnt[i], false)?);
    }

    let mut sources = data;
    sources.extend(&ins);
    sources.extend(&fsm.state_nets[..tap_width.min(fsm.state_nets.len())]);
    sources.extend(&cnt);
    let mut rng = ChaCha8Rng::seed_from_u64(pad_seed);
    pad(&mut n, &mut rng, clk, &sources, padding)?;
    expose_sinkless(&mut n);
    Ok(Sea {
        netlist: n,
        fsm_ffs: fsm.ff_ids,
        codes: fsm.codes,
        counter_ffs,
        fsm_inputs: ins,
    })
}

/// The machine's own FFs form one strongly connected block.
fn fully_coupled(stg: &Stg) -> Result<bool, FsmError> {
    let n = synthesize_stg(stg, Encoding::Binary)?;
    let sccs = scc(&ff_projection(&n));
    Ok(sccs.components.len() == 1 && sccs.components[0].len() >= 2)
}

fn coupled_stg(rng: &mut ChaCha8Rng, states: u64, input_bits: usize) -> Result<Stg, FsmError> {
    loop {
        let stg = random_stg(rng, states, input_bits);
        if fully_coupled(&stg)? {
            return Ok(stg);
        }
    }
}

pub fn fsm_sea_of_gates(
    seed: u64,
    states: Option<u64>,
    input_bits: usize,
    padding: usize,
) -> Result<(Netlist, SeaTruth), Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = states.unwrap_or_else(|| rng.gen_range(4..=16));
    let stg = coupled_stg(&mut rng, states, input_bits)?;
    let sea = build_sea(&stg, width_for(states as usize), padding, rng.gen())?;
    let truth = SeaTruth {
        fsm_ffs: sea.fsm_ffs,
        counter_ffs: sea.counter_ffs,
        fsm_inputs: sea.fsm_inputs,
        stg,
        codes: sea.codes,
        padding,
        gate_count: sea.netlist.gate_count(),
    };
    Ok((sea.netlist, truth))
}

/// A sea-of-gates design whose FSM went through HARPOON obfuscation, plus
/// the unobfuscated reference with identical filler and port names.
pub fn harpoon_fsm(
    seed: u64,
    states: Option<u64>,
    input_bits: usize,
    key_length: Option<usize>,
    extra_loop_states: Option<usize>,
    padding: usize,
) -> Result<(Netlist, Netlist, HarpoonTruth), Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = states.unwrap_or_else(|| rng.gen_range(4..=16));
    let key_length = key_length.unwrap_or_else(|| rng.gen_range(1..=8));
    let extra = extra_loop_states.unwrap_or_else(|| rng.gen_range(0..=3));
    let (stg, cfg, obf, layout) = loop {
        let stg = coupled_stg(&mut rng, states, input_bits)?;
        let cfg = HarpoonConfig {
            key: (0..key_length).map(|_| rng.gen_range(0..1u32 << input_bits)).collect(),
            extra_loop_states: extra,
            seed,
        };
        let (obf, layout) = harpoon_obfuscate(&stg, &cfg)?;
        if fully_coupled(&obf)? {
            break (stg, cfg, obf, layout);
        }
    };
    let tap = width_for(states as usize);
    let pad_seed = rng.gen();
    let reference = build_sea(&stg, tap, padding, pad_seed)?;
    let sea = build_sea(&obf, tap, padding, pad_seed)?;
    let original_codes = stg.states.iter().map(|s| sea.codes[s]).collect();
    let original_reset_code = sea.codes[&layout.original_reset];
    let truth = HarpoonTruth {
        original_reset_bits: (0..sea.fsm_ffs.len())
            .map(|i| (original_reset_code >> i) & 1 == 1)
            .collect(),
        fsm_ffs: sea.fsm_ffs,
        fsm_inputs: sea.fsm_inputs,
        key: cfg.key,
        extra_loop_states: extra,
        original_stg: stg,
        obfuscated_stg: obf,
        layout,
        original_codes,
        original_reset_code,
        padding,
        gate_count: sea.netlist.gate_count(),
    };
    Ok((sea.netlist, reference.netlist, truth))
}
