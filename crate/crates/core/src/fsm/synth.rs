use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{width_for, FsmError, Stg, MAX_STATE_BITS};
use crate::logic::{BooleanFunction, LutMapper, MAX_VARS};
use crate::model::{GateId, GateKind, NetId, Netlist, Pin};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// State of rank `r` (in ascending code order) gets code `r`.
    #[default]
    Binary,
    /// State of rank `r` gets code `1 << r`.
    Onehot,
}

/// Where a synthesized machine landed inside a netlist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Synthesized {
    pub ff_ids: Vec<GateId>,
    pub state_nets: Vec<NetId>,
    /// Original state label to encoded FF code.
    pub codes: BTreeMap<u64, u64>,
}

/// Standalone netlist with ports `clk`, `in0..`, and state outputs `st0..`.
pub fn synthesize_stg(stg: &Stg, encoding: Encoding) -> Result<Netlist, FsmError> {
    let mut n = Netlist::new("fsm");
    let clk = n.add_input("clk")?;
    n.set_clock(Some(clk));
    let mut inputs = Vec::with_capacity(stg.input_width);
    for j in 0..stg.input_width {
        inputs.push(n.add_input(&format!("in{j}"))?);
    }
    let s = synthesize_into(&mut n, stg, encoding, "", &inputs, clk)?;
    for net in &s.state_nets {
        let name = n.net_name(*net).to_string();
        n.add_output(&name);
    }
    Ok(n)
}

/// Adds the machine's FFs and next-state logic to `n`, reading the given
/// input nets. New nets and gates are named with `prefix`.
pub fn synthesize_into(
    n: &mut Netlist,
    stg: &Stg,
    encoding: Encoding,
    prefix: &str,
    inputs: &[NetId],
    clk: NetId,
) -> Result<Synthesized, FsmError> {
    stg.validate()?;
    if inputs.len() != stg.input_width {
        return Err(FsmError::WidthMismatch {
            expected: stg.input_width,
            got: inputs.len(),
        });
    }
    let order: Vec<u64> = stg.states.iter().copied().collect();
    let count = order.len();
    let width = match encoding {
        Encoding::Binary => width_for(count),
        Encoding::Onehot => count,
    };
    if width > MAX_STATE_BITS {
        return Err(FsmError::EncodingOverflow { states: count });
    }
    if width + inputs.len() > MAX_VARS {
        return Err(FsmError::SupportOverflow(width + inputs.len()));
    }
    let encode = |rank: usize| -> u64 {
        match encoding {
            Encoding::Binary => rank as u64,
            Encoding::Onehot => 1u64 << rank,
        }
    };
    let rank: HashMap<u64, usize> = order.iter().enumerate().map(|(r, s)| (*s, r)).collect();
    let codes: BTreeMap<u64, u64> = order.iter().map(|s| (*s, encode(rank[s]))).collect();
    let decode: HashMap<u64, u64> = codes.iter().map(|(s, c)| (*c, *s)).collect();

    let mut state_nets = Vec::with_capacity(width);
    for i in 0..width {
        state_nets.push(n.add_net(format!("{prefix}st{i}"))?);
    }
    let vars: Vec<NetId> = state_nets.iter().chain(inputs).copied().collect();
    let state_mask = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
    let mut mapper = LutMapper::new(prefix);
    let mut d_nets = Vec::with_capacity(width);
    for i in 0..width {
        let f = BooleanFunction::from_fn(vars.clone(), |idx| {
            let code = idx as u64 & state_mask;
            let word = (idx >> width) as u32;
            match decode.get(&code) {
                Some(s) => {
                    let t = stg.next(*s, word).expect("validated");
                    (codes[&t] >> i) & 1 == 1
                }
                None => false,
            }
        })?;
        d_nets.push(mapper.emit(n, &f)?);
    }
    let reset_code = codes[&stg.reset];
    let mut ff_ids = Vec::with_capacity(width);
    for i in 0..width {
        let pins = [(Pin::D, d_nets[i]), (Pin::Clk, clk), (Pin::Q, state_nets[i])].into();
        let id = n.add_gate_raw(format!("{prefix}s{i}"), GateKind::Ff, Some((reset_code >> i) & 1), pins)?;
        ff_ids.push(id);
    }
    Ok(Synthesized {
        ff_ids,
        state_nets,
        codes,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{extract_stg, isomorphic, stg_from_fn};
    use super::*;
    use crate::model::lint::lint_netlist;

    /// The four-state original machine of the obfuscation figure: a cycle
    /// with a self-loop on s2 and s3 returning to s0.
    fn figure_fsm() -> Stg {
        stg_from_fn(4, 1, 0, |s, w| match (s, w) {
            (2, 0) => 2,
            (3, _) => 0,
            (s, _) => s + 1,
        })
    }

    #[test]
    fn binary_and_onehot_widths() {
        let stg = figure_fsm();
        let b = synthesize_stg(&stg, Encoding::Binary).unwrap();
        assert_eq!(b.flip_flops().count(), 2);
        let o = synthesize_stg(&stg, Encoding::Onehot).unwrap();
        assert_eq!(o.flip_flops().count(), 4);
        let ffs: Vec<GateId> = o.flip_flops().map(|g| g.id).collect();
        let inputs: Vec<NetId> = (0..1).map(|j| o.net_by_name(&format!("in{j}")).unwrap()).collect();
        let ex = extract_stg(&o, &ffs, &inputs).unwrap();
        assert!(ex.states.iter().all(|s| s.count_ones() == 1));
    }

    #[test]
    fn round_trip_figure_fsm() {
        let stg = figure_fsm();
        for enc in [Encoding::Binary, Encoding::Onehot] {
            let n = synthesize_stg(&stg, enc).unwrap();
            assert!(lint_netlist(&n).is_empty(), "{:?}", lint_netlist(&n));
            let ffs: Vec<GateId> = n.flip_flops().map(|g| g.id).collect();
            let ex = extract_stg(&n, &ffs, &[n.net_by_name("in0").unwrap()]).unwrap();
            assert!(isomorphic(&stg, &ex));
        }
    }

    #[test]
    fn wide_machine_uses_muxes() {
        let stg = stg_from_fn(16, 3, 0, |s, w| (s * 5 + w as u64 * 3 + 1) % 16);
        let n = synthesize_stg(&stg, Encoding::Binary).unwrap();
        assert!(n.gates().any(|g| g.kind == GateKind::Mux2));
        assert!(n.gates().all(|g| !matches!(g.kind, GateKind::Lut(k) if k > 6)));
        let ffs: Vec<GateId> = n.flip_flops().map(|g| g.id).collect();
        let ins: Vec<NetId> = (0..3).map(|j| n.net_by_name(&format!("in{j}")).unwrap()).collect();
        assert!(isomorphic(&stg, &extract_stg(&n, &ffs, &ins).unwrap()));
    }
}
