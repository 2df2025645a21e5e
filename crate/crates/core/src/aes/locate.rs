use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{BitMapping, SboxInstance, SBOX};
use crate::logic::{default_boundary, gate_inputs, structural_support, ConeFunctions};
use crate::model::{GateId, NetId, Netlist};

type Column = [u64; 4];

fn column_bit(c: &Column, idx: usize) -> bool {
    (c[idx >> 6] >> (idx & 63)) & 1 == 1
}

fn set_bit(c: &mut Column, idx: usize) {
    c[idx >> 6] |= 1 << (idx & 63);
}

/// Number of points where flipping input `i` changes the column.
fn sensitivity(c: &Column, i: usize) -> u16 {
    (0..256usize)
        .filter(|x| column_bit(c, *x) != column_bit(c, x ^ (1 << i)))
        .count() as u16
}

fn sbox_column(j: usize) -> Column {
    let mut c = [0u64; 4];
    for x in 0..256 {
        if (SBOX[x] >> j) & 1 == 1 {
            set_bit(&mut c, x);
        }
    }
    c
}

/// The table's bit-`j` column seen through `perm`: at index `idx` over the
/// sorted support, table input bit `i` is `idx` bit `perm[i]`.
fn permuted_column(j: usize, perm: &[usize; 8]) -> Column {
    let mut c = [0u64; 4];
    for idx in 0..256usize {
        let mut x = 0usize;
        for (i, p) in perm.iter().enumerate() {
            x |= ((idx >> p) & 1) << i;
        }
        if (SBOX[x] >> j) & 1 == 1 {
            set_bit(&mut c, idx);
        }
    }
    c
}

struct Group<'a> {
    cols: &'a [(NetId, Column, [u16; 8])],
    by_col: HashMap<Column, NetId>,
    target_sens: [[u16; 8]; 8],
}

impl Group<'_> {
    /// Some net can still play table bit `j` under the partial mapping.
    fn feasible(&self, perm: &[usize], j: usize) -> bool {
        self.cols
            .iter()
            .any(|(_, _, s)| perm.iter().enumerate().all(|(i, z)| s[*z] == self.target_sens[j][i]))
    }

    fn search(&self, perm: &mut Vec<usize>, used: &mut [bool; 8]) -> Option<([usize; 8], [NetId; 8])> {
        let i = perm.len();
        if i == 8 {
            let full: [usize; 8] = perm.clone().try_into().unwrap();
            let mut outs = [NetId(0); 8];
            for (j, o) in outs.iter_mut().enumerate() {
                *o = *self.by_col.get(&permuted_column(j, &full))?;
            }
            let distinct: BTreeSet<NetId> = outs.iter().copied().collect();
            return (distinct.len() == 8).then_some((full, outs));
        }
        // Identity first, then the remaining positions in order.
        let order = std::iter::once(i).chain((0..8).filter(move |z| *z != i));
        for z in order {
            if used[z] {
                continue;
            }
            perm.push(z);
            used[z] = true;
            if (0..8).all(|j| self.feasible(perm, j)) {
                if let Some(found) = self.search(perm, used) {
                    return Some(found);
                }
            }
            perm.pop();
            used[z] = false;
        }
        None
    }
}

/// Finds every group of eight live nets that jointly compute the AES
/// S-box of eight boundary nets (flip-flop outputs or primary inputs), in
/// any input and output bit order.
pub fn locate_sbox(n: &Netlist) -> Vec<SboxInstance> {
    let boundary = default_boundary(n);
    let outputs: BTreeSet<NetId> = n.outputs().iter().copied().collect();
    let mut groups: BTreeMap<Vec<NetId>, Vec<NetId>> = BTreeMap::new();
    for net in n.nets() {
        let Some(g) = n.driver_gate(net.id) else { continue };
        if g.kind.is_sequential() || (net.sinks.is_empty() && !outputs.contains(&net.id)) {
            continue;
        }
        if let Some(s) = structural_support(n, net.id, &boundary, 8) {
            if s.len() == 8 {
                groups.entry(s.into_iter().collect()).or_default().push(net.id);
            }
        }
    }
    let target_sens: [[u16; 8]; 8] = std::array::from_fn(|j| {
        let c = sbox_column(j);
        std::array::from_fn(|i| sensitivity(&c, i))
    });

    let mut cones = ConeFunctions::new(n, Some(boundary.clone()));
    let mut found = Vec::new();
    for (support, nets) in groups {
        if nets.len() < 8 {
            continue;
        }
        let mut cols = Vec::new();
        for net in nets {
            let Ok(f) = cones.get(net) else { continue };
            if f.support().len() != 8 {
                continue;
            }
            let Ok(e) = f.expand_to(&support) else { continue };
            let mut c = [0u64; 4];
            for idx in 0..256 {
                if e.bit(idx) {
                    set_bit(&mut c, idx);
                }
            }
            let sens = std::array::from_fn(|i| sensitivity(&c, i));
            cols.push((net, c, sens));
        }
        if cols.len() < 8 {
            continue;
        }
        let mut by_col = HashMap::new();
        for (net, c, _) in &cols {
            by_col.entry(*c).or_insert(*net);
        }
        let group = Group {
            cols: &cols,
            by_col,
            target_sens,
        };
        let Some((perm, outs)) = group.search(&mut Vec::new(), &mut [false; 8]) else {
            continue;
        };
        let mut sorted_outs: Vec<NetId> = outs.to_vec();
        sorted_outs.sort();
        let output_order = outs
            .iter()
            .map(|o| sorted_outs.iter().position(|s| s == o).unwrap() as u8)
            .collect();
        found.push(SboxInstance {
            input_nets: perm.iter().map(|z| support[*z]).collect(),
            output_nets: outs.to_vec(),
            gate_ids: cone_gates(n, &outs, &boundary),
            bit_mapping: BitMapping {
                input: perm.iter().map(|z| *z as u8).collect(),
                output: output_order,
            },
        });
    }
    found
}

fn cone_gates(n: &Netlist, outs: &[NetId], boundary: &BTreeSet<NetId>) -> BTreeSet<GateId> {
    let mut gates = BTreeSet::new();
    let mut stack: Vec<NetId> = outs.to_vec();
    let mut seen = BTreeSet::new();
    while let Some(net) = stack.pop() {
        if boundary.contains(&net) || !seen.insert(net) {
            continue;
        }
        let Some(g) = n.driver_gate(net) else { continue };
        if g.kind.is_sequential() {
            continue;
        }
        gates.insert(g.id);
        for p in gate_inputs(g.kind) {
            stack.extend(g.input_net(p));
        }
    }
    gates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbench::generators::{random_comb_netlist, single_sbox};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shuffled_bit_order_is_recovered() {
        let in_perm = [3usize, 7, 0, 5, 1, 6, 2, 4];
        let out_perm = [6usize, 2, 7, 1, 0, 4, 3, 5];
        let (n, truth) = single_sbox(Some((in_perm, out_perm)));
        let found = locate_sbox(&n);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].input_nets, truth.input_nets);
        assert_eq!(found[0].output_nets, truth.output_nets);
        assert!(!found[0].bit_mapping.is_identity());
    }

    #[test]
    fn random_logic_has_no_sbox() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let n = random_comb_netlist(&mut rng, 8, 150);
            assert!(locate_sbox(&n).is_empty());
        }
    }
}
