use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{FsmError, Stg, MAX_INPUT_BITS, MAX_STATE_BITS};
use crate::logic::{structural_support, BooleanFunction, ConeFunctions};
use crate::model::{GateId, NetId, Netlist, Pin};

/// Next-state function of one FF, with each variable's position in the
/// `(state, word)` pair: `Ok(i)` is state bit `i`, `Err(j)` input bit `j`.
struct BitFn {
    f: BooleanFunction,
    pos: Vec<Result<usize, usize>>,
}

impl BitFn {
    fn eval(&self, state: u64, word: u32) -> bool {
        let mut idx = 0usize;
        for (k, p) in self.pos.iter().enumerate() {
            let b = match p {
                Ok(i) => (state >> i) & 1,
                Err(j) => (word as u64 >> j) & 1,
            };
            idx |= (b as usize) << k;
        }
        self.f.bit(idx)
    }
}

/// Explores the machine formed by `ff_ids` breadth-first from their init
/// values, evaluating each FF's next-state function for every input word.
pub fn extract_stg(n: &Netlist, ff_ids: &[GateId], input_nets: &[NetId]) -> Result<Stg, FsmError> {
    if input_nets.len() > MAX_INPUT_BITS {
        return Err(FsmError::InputWidthExceeded(input_nets.len()));
    }
    if ff_ids.len() > MAX_STATE_BITS {
        return Err(FsmError::StateWidthExceeded(ff_ids.len()));
    }
    let mut ffs = Vec::with_capacity(ff_ids.len());
    for id in ff_ids {
        let g = n.gate(*id)?;
        if !g.kind.is_sequential() {
            return Err(FsmError::NotAFlipFlop(*id));
        }
        ffs.push(g);
    }
    let mut position: BTreeMap<NetId, Result<usize, usize>> = BTreeMap::new();
    for (i, g) in ffs.iter().enumerate() {
        position.insert(g.output_net(), Ok(i));
    }
    for (j, net) in input_nets.iter().enumerate() {
        position.entry(*net).or_insert(Err(j));
    }
    let boundary: BTreeSet<NetId> = position.keys().copied().collect();
    let mut cones = ConeFunctions::new(n, Some(boundary));
    let mut bit_fn = |ff: GateId, net: Option<NetId>| -> Result<Option<BitFn>, FsmError> {
        let Some(net) = net else { return Ok(None) };
        let f = cones.get(net)?;
        let mut pos = Vec::with_capacity(f.num_vars());
        for v in f.vars() {
            match position.get(v) {
                Some(p) => pos.push(*p),
                None => {
                    return Err(FsmError::ConeEscape {
                        ff,
                        net: n.net_name(*v).to_string(),
                    })
                }
            }
        }
        Ok(Some(BitFn { f, pos }))
    };
    let mut next_fns = Vec::with_capacity(ffs.len());
    for g in &ffs {
        let d = bit_fn(g.id, g.input_net(Pin::D))?;
        let r = bit_fn(g.id, g.input_net(Pin::R))?;
        next_fns.push((d, r, g.init.unwrap_or(0) & 1 == 1));
    }

    let reset = ffs
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, g)| acc | ((g.init.unwrap_or(0) & 1) << i));
    let words = 1u32 << input_nets.len();
    let mut states = BTreeSet::from([reset]);
    let mut transitions = BTreeMap::new();
    let mut queue = VecDeque::from([reset]);
    while let Some(s) = queue.pop_front() {
        for w in 0..words {
            let mut t = 0u64;
            for (i, (d, r, init)) in next_fns.iter().enumerate() {
                let reset_active = r.as_ref().is_some_and(|r| r.eval(s, w));
                let bit = if reset_active {
                    *init
                } else {
                    d.as_ref().is_some_and(|d| d.eval(s, w))
                };
                t |= (bit as u64) << i;
            }
            transitions.insert((s, w), t);
            if states.insert(t) {
                queue.push_back(t);
            }
        }
    }
    Ok(Stg {
        state_bits: ff_ids.to_vec(),
        input_bits: input_nets.to_vec(),
        state_width: ff_ids.len(),
        input_width: input_nets.len(),
        states,
        transitions,
        reset,
    })
}

/// Nets outside the given FFs' outputs that their D and R cones read, in
/// ascending id order: the candidate machine's inputs.
pub fn fsm_inputs(n: &Netlist, ff_ids: &[GateId]) -> Result<Vec<NetId>, FsmError> {
    let mut boundary: BTreeSet<NetId> = n.inputs().iter().copied().collect();
    boundary.extend(n.flip_flops().map(|g| g.output_net()));
    let mut own = BTreeSet::new();
    let mut pins = Vec::new();
    for id in ff_ids {
        let g = n.gate(*id)?;
        if !g.kind.is_sequential() {
            return Err(FsmError::NotAFlipFlop(*id));
        }
        own.insert(g.output_net());
        pins.extend(g.input_net(Pin::D));
        pins.extend(g.input_net(Pin::R));
    }
    let mut out = BTreeSet::new();
    for p in pins {
        let supp = structural_support(n, p, &boundary, usize::MAX).unwrap_or_default();
        out.extend(supp.into_iter().filter(|s| !own.contains(s)));
    }
    Ok(out.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GateKind;

    fn add(n: &mut Netlist, name: &str, kind: GateKind, init: Option<&str>, p: &[(&str, &str)]) -> GateId {
        let map = p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        n.add_gate(name, kind, init, &map).unwrap()
    }

    /// 00 -> 01 -> 10 -> 00 with q0' = !q0 & !q1, q1' = q0.
    fn ring() -> (Netlist, Vec<GateId>) {
        let mut n = Netlist::new("ring");
        n.add_input("clk").unwrap();
        let a = add(&mut n, "r0", GateKind::Ff, Some("0"), &[("D", "d0"), ("CLK", "clk"), ("Q", "q0")]);
        let b = add(&mut n, "r1", GateKind::Ff, Some("0"), &[("D", "d1"), ("CLK", "clk"), ("Q", "q1")]);
        add(&mut n, "n0", GateKind::Lut(2), Some("1"), &[("I0", "q0"), ("I1", "q1"), ("O", "d0")]);
        add(&mut n, "n1", GateKind::Buf, None, &[("I", "q0"), ("O", "d1")]);
        (n, vec![a, b])
    }

    #[test]
    fn ring_counter() {
        let (n, ffs) = ring();
        let stg = extract_stg(&n, &ffs, &[]).unwrap();
        assert_eq!(stg.states, [0, 1, 2].into());
        assert_eq!(stg.walk(0, &[0, 0, 0]), Some(0));
        assert_eq!(stg.next(0, 0), Some(1));
        assert_eq!(stg.next(1, 0), Some(2));
        stg.validate().unwrap();
        assert!(fsm_inputs(&n, &ffs).unwrap().is_empty());
    }

    #[test]
    fn too_many_inputs() {
        let (n, ffs) = ring();
        let nets: Vec<NetId> = (1..=17).map(NetId).collect();
        assert_eq!(
            extract_stg(&n, &ffs, &nets).unwrap_err(),
            FsmError::InputWidthExceeded(17)
        );
    }

    #[test]
    fn cone_escape() {
        let (n, ffs) = ring();
        assert_eq!(extract_stg(&n, &ffs[..1], &[]).unwrap_err().code(), "ConeEscape");
    }
}
