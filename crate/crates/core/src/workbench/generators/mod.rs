//! Seeded netlist generators for the study projects and for tests.

mod aes;
mod fsm;
mod spn;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::aes::{BitMapping, SboxInstance, SBOX};
use crate::fsm::{stg_from_fn, Stg};
use crate::logic::{BooleanFunction, LutMapper};
use crate::model::{GateId, GateKind, ModelError, NetId, Netlist, Pin};

pub use self::aes::{aes_fixed_key, AesTruth, SboxTruth};
pub use self::fsm::{fsm_sea_of_gates, harpoon_fsm, HarpoonTruth, SeaTruth};
pub use self::spn::{spn_cipher, spn_encrypt, SpnTruth, SPN_PERM, SPN_SBOX};

/// Truth table of a `k`-input function as an INIT value.
pub(crate) fn table(k: usize, f: impl Fn(usize) -> bool) -> u64 {
    (0..1usize << k).filter(|x| f(*x)).fold(0, |acc, x| acc | 1 << x)
}

pub(crate) fn lut(
    n: &mut Netlist,
    name: &str,
    out: &str,
    inputs: &[NetId],
    init: u64,
) -> Result<NetId, ModelError> {
    let o = n.add_net(out)?;
    let mut pins: BTreeMap<Pin, NetId> =
        inputs.iter().enumerate().map(|(i, x)| (Pin::In(i as u8), *x)).collect();
    pins.insert(Pin::O, o);
    n.add_gate_raw(name, GateKind::lut(inputs.len() as u8)?, Some(init), pins)?;
    Ok(o)
}

pub(crate) fn ff(
    n: &mut Netlist,
    name: &str,
    d: NetId,
    clk: NetId,
    q: NetId,
    init: bool,
) -> Result<GateId, ModelError> {
    n.add_gate_raw(
        name,
        GateKind::Ff,
        Some(init as u64),
        [(Pin::D, d), (Pin::Clk, clk), (Pin::Q, q)].into(),
    )
}

/// Promotes every net nobody reads to a primary output.
pub(crate) fn expose_sinkless(n: &mut Netlist) {
    let names: Vec<String> = n
        .nets()
        .filter(|net| net.sinks.is_empty() && Some(net.id) != n.clock())
        .map(|net| net.name.clone())
        .collect();
    for name in names {
        n.add_output(&name);
    }
}

fn random_gate(rng: &mut ChaCha8Rng, n: &mut Netlist, pool: &[NetId], name: String, out: NetId) {
    let kind = if pool.is_empty() {
        GateKind::Vcc
    } else {
        match rng.gen_range(0..20) {
            0..=1 => GateKind::Mux2,
            2 => GateKind::Inv,
            3 => GateKind::Buf,
            4 => [GateKind::Vcc, GateKind::Gnd][rng.gen_range(0..2)],
            _ => GateKind::Lut(rng.gen_range(1..=6)),
        }
    };
    let mut pins: BTreeMap<Pin, NetId> = kind
        .input_pins()
        .into_iter()
        .map(|p| (p, *pool.choose(rng).expect("pool is non-empty")))
        .collect();
    pins.insert(kind.output_pin(), out);
    let init = kind.init_bits().map(|bits| {
        let v: u64 = rng.gen();
        if bits >= 64 {
            v
        } else {
            v & ((1u64 << bits) - 1)
        }
    });
    n.add_gate_raw(name, kind, init, pins).expect("generated pins are valid");
}

/// Random netlist of `gates` combinational gates over `inputs` primary
/// inputs and `ffs` flip-flops. Combinational gates only read earlier
/// nets; flip-flop D pins may read anything, so feedback runs through
/// registers only. Nets nobody reads become outputs.
pub fn random_netlist(rng: &mut ChaCha8Rng, inputs: usize, gates: usize, ffs: usize) -> Netlist {
    let mut n = Netlist::new("random");
    let mut pool: Vec<NetId> = (0..inputs)
        .map(|i| n.add_input(&format!("i{i}")).expect("fresh name"))
        .collect();
    let clk = (ffs > 0).then(|| {
        let c = n.add_input("clk").expect("fresh name");
        n.set_clock(Some(c));
        c
    });
    let qs: Vec<NetId> = (0..ffs)
        .map(|k| n.add_net(format!("q{k}")).expect("fresh name"))
        .collect();
    pool.extend(&qs);
    for k in 0..gates {
        let out = n.add_net(format!("n{k}")).expect("fresh name");
        random_gate(rng, &mut n, &pool, format!("g{k}"), out);
        pool.push(out);
    }
    if let Some(clk) = clk {
        for (k, q) in qs.iter().enumerate() {
            let d = *pool.choose(rng).expect("pool holds the FF outputs");
            let mut pins: BTreeMap<Pin, NetId> = [(Pin::D, d), (Pin::Clk, clk), (Pin::Q, *q)].into();
            if rng.gen_bool(0.25) {
                pins.insert(Pin::R, *pool.choose(rng).expect("non-empty"));
            }
            n.add_gate_raw(format!("f{k}"), GateKind::Ff, Some(rng.gen_range(0..2)), pins)
                .expect("generated pins are valid");
        }
    }
    expose_sinkless(&mut n);
    n
}

pub fn random_comb_netlist(rng: &mut ChaCha8Rng, inputs: usize, gates: usize) -> Netlist {
    random_netlist(rng, inputs, gates, 0)
}

/// Random strongly connected machine over codes `0..states`: a shuffled
/// cycle guarantees every state can reach every other, the remaining
/// transitions are uniform.
pub fn random_stg(rng: &mut ChaCha8Rng, states: u64, input_width: usize) -> Stg {
    let mut order: Vec<u64> = (0..states).collect();
    order.shuffle(rng);
    let words = 1u32 << input_width;
    let mut next: BTreeMap<(u64, u32), u64> = BTreeMap::new();
    for s in 0..states {
        for w in 0..words {
            next.insert((s, w), rng.gen_range(0..states));
        }
    }
    for (i, s) in order.iter().enumerate() {
        let w = rng.gen_range(0..words);
        next.insert((*s, w), order[(i + 1) % order.len()]);
    }
    let reset = rng.gen_range(0..states);
    stg_from_fn(states, input_width, reset, |s, w| next[&(s, w)])
}

/// Acyclic filler logic: each gate reads uniformly from `sources` and the
/// filler built so far. About one gate in twenty is a pipeline register.
pub(crate) fn pad(
    n: &mut Netlist,
    rng: &mut ChaCha8Rng,
    clk: NetId,
    sources: &[NetId],
    count: usize,
) -> Result<(), ModelError> {
    let mut pool = sources.to_vec();
    for idx in 0..count {
        let out = n.add_net(format!("pn{idx}"))?;
        let name = format!("p{idx}");
        let roll = rng.gen_range(0..100);
        let pick = |rng: &mut ChaCha8Rng| *pool.choose(rng).expect("sources are non-empty");
        if roll < 5 {
            let d = pick(rng);
            ff(n, &name, d, clk, out, rng.gen_bool(0.5))?;
        } else if roll < 12 {
            let pins = [(Pin::In(0), pick(rng)), (Pin::In(1), pick(rng)), (Pin::S, pick(rng)), (Pin::O, out)];
            n.add_gate_raw(name, GateKind::Mux2, None, pins.into())?;
        } else if roll < 17 {
            n.add_gate_raw(name, GateKind::Inv, None, [(Pin::I, pick(rng)), (Pin::O, out)].into())?;
        } else {
            let k = rng.gen_range(2..=6u8);
            let mut pins: BTreeMap<Pin, NetId> = (0..k).map(|i| (Pin::In(i), pick(rng))).collect();
            pins.insert(Pin::O, out);
            let init = rng.gen::<u64>() & if k == 6 { u64::MAX } else { (1u64 << (1u64 << k)) - 1 };
            n.add_gate_raw(name, GateKind::Lut(k), Some(init), pins)?;
        }
        pool.push(out);
    }
    Ok(())
}

/// Emits the eight S-box output functions of `inputs` (bit 0 first) and
/// returns the output nets in table bit order. `order[j]` is the emission
/// position of table bit `j`.
pub(crate) fn emit_sbox(
    n: &mut Netlist,
    prefix: &str,
    inputs: &[NetId; 8],
    order: &[usize; 8],
) -> Result<[NetId; 8], ModelError> {
    let mut mapper = LutMapper::new(prefix);
    let mut outs = [NetId(0); 8];
    for pos in 0..8 {
        let j = order.iter().position(|p| *p == pos).expect("order is a permutation");
        let f = BooleanFunction::from_fn(inputs.to_vec(), |x| (SBOX[x] >> j) & 1 == 1)
            .expect("eight variables");
        outs[j] = mapper.emit(n, &f)?;
    }
    Ok(outs)
}

/// A lone S-box over primary inputs `x0..x7`. With `perms = (a, b)`,
/// table input bit `i` is `x{a[i]}` and table output bit `j` is the
/// `b[j]`-th output created. Returns the netlist and the true instance.
pub fn single_sbox(perms: Option<([usize; 8], [usize; 8])>) -> (Netlist, SboxInstance) {
    let ident = [0, 1, 2, 3, 4, 5, 6, 7];
    let (in_perm, out_perm) = perms.unwrap_or((ident, ident));
    let mut n = Netlist::new("sbox");
    let xs: Vec<NetId> = (0..8)
        .map(|i| n.add_input(&format!("x{i}")).expect("fresh name"))
        .collect();
    let inputs: [NetId; 8] = std::array::from_fn(|i| xs[in_perm[i]]);
    let outs = emit_sbox(&mut n, "sb_", &inputs, &out_perm).expect("fresh netlist");
    for o in outs {
        let name = n.net_name(o).to_string();
        n.add_output(&name);
    }
    let instance = SboxInstance {
        input_nets: inputs.to_vec(),
        output_nets: outs.to_vec(),
        gate_ids: n.gate_ids().collect(),
        bit_mapping: BitMapping {
            input: in_perm.iter().map(|p| *p as u8).collect(),
            output: out_perm.iter().map(|p| *p as u8).collect(),
        },
    };
    (n, instance)
}
