use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{emit_sbox, expose_sinkless, ff, lut, table};
use crate::aes::sbox::{key_expansion, mix_column, shift_rows_source};
use crate::aes::ClockingInfo;
use crate::logic::{BooleanFunction, LutMapper};
use crate::model::{ModelError, NetId, Netlist};

pub const LOAD_CYCLE: usize = 1;
pub const LATENCY: usize = 11;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SboxTruth {
    pub byte: usize,
    pub input_nets: Vec<NetId>,
    pub output_nets: Vec<NetId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AesTruth {
    pub key: String,
    pub sboxes: Vec<SboxTruth>,
    pub clocking: ClockingInfo,
    pub gate_count: usize,
}

/// For MixColumns output row `r` bit `i`, the input (row, bit) pairs whose
/// XOR it is.
fn mix_terms() -> [[Vec<(usize, usize)>; 8]; 4] {
    let mut terms: [[Vec<(usize, usize)>; 8]; 4] = Default::default();
    for k in 0..4 {
        for t in 0..8 {
            let mut a = [0u8; 4];
            a[k] = 1 << t;
            let out = mix_column(a);
            for (r, row) in terms.iter_mut().enumerate() {
                for (i, cell) in row.iter_mut().enumerate() {
                    if (out[r] >> i) & 1 == 1 {
                        cell.push((k, t));
                    }
                }
            }
        }
    }
    terms
}

/// Round-based AES-128 with a fixed key: a 128-bit state register, sixteen
/// byte-sliced S-boxes reading it, MixColumns XOR trees and a round counter
/// whose value selects the round key bits. Holding `start` for one cycle
/// loads `plaintext ^ key`; each of the next ten edges computes one round.
pub fn aes_fixed_key(seed: u64) -> Result<(Netlist, AesTruth), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key: [u8; 16] = rng.gen();
    let rks = key_expansion(&key);
    let mut n = Netlist::new("aes");
    let clk = n.add_input("clk")?;
    n.set_clock(Some(clk));
    let start = n.add_input("start")?;
    let mut pt = [[NetId(0); 8]; 16];
    for (b, byte) in pt.iter_mut().enumerate() {
        for (i, net) in byte.iter_mut().enumerate() {
            *net = n.add_input(&format!("pt{}", 8 * b + i))?;
        }
    }
    let mut st = [[NetId(0); 8]; 16];
    for (b, byte) in st.iter_mut().enumerate() {
        for (i, net) in byte.iter_mut().enumerate() {
            *net = n.add_net(format!("st{b}_{i}"))?;
        }
    }
    let ctr: Vec<NetId> = (0..4)
        .map(|i| n.add_net(format!("ctr{i}")))
        .collect::<Result<_, _>>()?;

    let active = lut(&mut n, "ctl_active", "active", &ctr, table(4, |c| (1..=10).contains(&c)))?;
    let last = lut(&mut n, "ctl_last", "last", &ctr, table(4, |c| c == 10))?;
    let mut ctr_in = vec![start];
    ctr_in.extend(&ctr);
    for i in 0..4 {
        let init = table(5, |x| {
            let c = x >> 1;
            let next = if x & 1 == 1 {
                1
            } else if (1..=10).contains(&c) {
                c + 1
            } else {
                c
            };
            (next >> i) & 1 == 1
        });
        let d = lut(&mut n, &format!("ctr_next{i}"), &format!("ctr_d{i}"), &ctr_in, init)?;
        ff(&mut n, &format!("ctr_s{i}"), d, clk, ctr[i], false)?;
    }

    let ident = [0, 1, 2, 3, 4, 5, 6, 7];
    let mut sbo = [[NetId(0); 8]; 16];
    for b in 0..16 {
        sbo[b] = emit_sbox(&mut n, &format!("sb{b}_"), &st[b], &ident)?;
    }
    let sr: [[NetId; 8]; 16] = std::array::from_fn(|b| sbo[shift_rows_source(b)]);
    let terms = mix_terms();

    for c in 0..4 {
        let mut mapper = LutMapper::new(&format!("mc{c}_"));
        for r in 0..4 {
            let b = 4 * c + r;
            for i in 0..8 {
                let mut vars: BTreeSet<NetId> = BTreeSet::new();
                for (k, t) in &terms[r][i] {
                    let v = sr[4 * c + k][*t];
                    if !vars.insert(v) {
                        vars.remove(&v);
                    }
                }
                let f = BooleanFunction::from_fn(vars.into_iter().collect(), |x| x.count_ones() % 2 == 1)
                    .expect("at most eight variables");
                let mc = mapper.emit(&mut n, &f)?;
                let rk_init = table(4, |x| (1..=10).contains(&x) && (rks[x][b] >> i) & 1 == 1);
                let rk = lut(&mut n, &format!("rk{b}_{i}"), &format!("rk{b}_{i}_o"), &ctr, rk_init)?;
                // last ? sr ^ rk : mc ^ rk
                let rv_init = table(4, |x| {
                    let (l, s, m, k) = (x & 1, (x >> 1) & 1, (x >> 2) & 1, (x >> 3) & 1);
                    (if l == 1 { s } else { m }) ^ k == 1
                });
                let rv = lut(&mut n, &format!("rv{b}_{i}"), &format!("rv{b}_{i}_o"), &[last, sr[b][i], mc, rk], rv_init)?;
                let k0 = (key[b] >> i) & 1;
                // start ? pt ^ k0 : active ? rv : q
                let d_init = table(5, |x| {
                    let (s, p, q, a, v) = (x & 1, (x >> 1) & 1, (x >> 2) & 1, (x >> 3) & 1, (x >> 4) & 1);
                    let bit = if s == 1 {
                        p ^ k0 as usize
                    } else if a == 1 {
                        v
                    } else {
                        q
                    };
                    bit == 1
                });
                let d = lut(
                    &mut n,
                    &format!("nx{b}_{i}"),
                    &format!("nx{b}_{i}_o"),
                    &[start, pt[b][i], st[b][i], active, rv],
                    d_init,
                )?;
                ff(&mut n, &format!("reg{b}_{i}"), d, clk, st[b][i], false)?;
            }
        }
    }

    let ciphertext_outputs: Vec<String> =
        st.iter().flatten().map(|q| n.net_name(*q).to_string()).collect();
    for name in &ciphertext_outputs {
        n.add_output(name);
    }
    expose_sinkless(&mut n);
    let truth = AesTruth {
        key: hex::encode(key),
        sboxes: (0..16)
            .map(|b| SboxTruth {
                byte: b,
                input_nets: st[b].to_vec(),
                output_nets: sbo[b].to_vec(),
            })
            .collect(),
        clocking: ClockingInfo {
            start_input: "start".into(),
            plaintext_inputs: (0..128).map(|k| format!("pt{k}")).collect(),
            ciphertext_outputs,
            load_cycle: LOAD_CYCLE,
            latency: LATENCY,
        },
        gate_count: n.gate_count(),
    };
    Ok((n, truth))
}
