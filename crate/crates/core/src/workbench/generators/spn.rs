use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{expose_sinkless, ff, lut, table};
use crate::model::{GateId, ModelError, NetId, Netlist};

pub const SPN_SBOX: [u8; 16] = [0xC, 0x5, 0x6, 0xB, 0x9, 0x0, 0xA, 0xD, 0x3, 0xE, 0xF, 0x8, 0x4, 0x7, 0x1, 0x2];

/// Bit `i` of the substituted block moves to position `SPN_PERM[i]`.
pub const SPN_PERM: [usize; 16] = [0, 4, 8, 12, 1, 5, 9, 13, 2, 6, 10, 14, 3, 7, 11, 15];

pub const SPN_ROUNDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpnTruth {
    /// Whitening key followed by one key per round.
    pub round_keys: Vec<u16>,
    pub sbox: Vec<u8>,
    pub perm: Vec<usize>,
    /// Register FFs of each round, by block bit.
    pub round_ffs: Vec<Vec<GateId>>,
    pub plaintext_inputs: Vec<String>,
    pub ciphertext_outputs: Vec<String>,
    pub latency: usize,
    pub gate_count: usize,
}

/// Reference model of the generated cipher.
pub fn spn_encrypt(round_keys: &[u16], pt: u16) -> u16 {
    let mut x = pt ^ round_keys[0];
    for k in &round_keys[1..] {
        let mut y = 0u16;
        for i in 0..16 {
            let s = SPN_SBOX[((x >> (i & !3)) & 0xF) as usize];
            if (s >> (i & 3)) & 1 == 1 {
                y |= 1 << SPN_PERM[i];
            }
        }
        x = y ^ k;
    }
    x
}

/// Three registered rounds of a 16-bit SPN. Each round output bit is one
/// LUT4 over an S-box nibble with the surrounding key bits folded into its
/// INIT, latched by a round register.
pub fn spn_cipher(seed: u64) -> Result<(Netlist, SpnTruth), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let round_keys: Vec<u16> = (0..=SPN_ROUNDS).map(|_| rng.gen()).collect();
    let mut n = Netlist::new("spn");
    let clk = n.add_input("clk")?;
    n.set_clock(Some(clk));
    let mut x: Vec<NetId> = (0..16)
        .map(|i| n.add_input(&format!("pt{i}")))
        .collect::<Result<_, _>>()?;
    let mut round_ffs = Vec::new();
    for r in 1..=SPN_ROUNDS {
        let whiten = if r == 1 { round_keys[0] } else { 0 };
        let k = round_keys[r];
        let mut y = vec![NetId(0); 16];
        for i in 0..16 {
            let nib = i & !3;
            let kin = ((whiten >> nib) & 0xF) as usize;
            let pos = SPN_PERM[i];
            let kout = (k >> pos) & 1 == 1;
            let init = table(4, |v| ((SPN_SBOX[v ^ kin] >> (i & 3)) & 1 == 1) ^ kout);
            y[pos] = lut(&mut n, &format!("r{r}_s{i}"), &format!("r{r}_y{pos}"), &x[nib..nib + 4], init)?;
        }
        let mut q = Vec::with_capacity(16);
        let mut ffs = Vec::with_capacity(16);
        for (b, d) in y.iter().enumerate() {
            let qn = n.add_net(format!("r{r}_q{b}"))?;
            ffs.push(ff(&mut n, &format!("r{r}_ff{b}"), *d, clk, qn, false)?);
            q.push(qn);
        }
        round_ffs.push(ffs);
        x = q;
    }
    let ciphertext_outputs: Vec<String> = x.iter().map(|q| n.net_name(*q).to_string()).collect();
    for name in &ciphertext_outputs {
        n.add_output(name);
    }
    expose_sinkless(&mut n);
    let truth = SpnTruth {
        round_keys,
        sbox: SPN_SBOX.to_vec(),
        perm: SPN_PERM.to_vec(),
        round_ffs,
        plaintext_inputs: (0..16).map(|i| format!("pt{i}")).collect(),
        ciphertext_outputs,
        latency: SPN_ROUNDS,
        gate_count: n.gate_count(),
    };
    Ok((n, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, Stimulus};

    #[test]
    fn sbox_is_a_permutation() {
        let mut seen = [false; 16];
        for v in SPN_SBOX {
            seen[v as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
        let mut p = SPN_PERM.to_vec();
        p.sort();
        assert_eq!(p, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn netlist_matches_reference_model() {
        let (n, truth) = spn_cipher(4).unwrap();
        assert!(crate::model::lint::lint_netlist(&n).is_empty());
        let outs: Vec<&str> = truth.ciphertext_outputs.iter().map(|s| s.as_str()).collect();
        for pt in [0u16, 1, 0x8000, 0xBEEF, 0x1234] {
            let row = (0..16).map(|i| (format!("pt{i}"), (pt >> i) & 1 == 1)).collect();
            let stim = Stimulus {
                cycles: 3,
                inputs: vec![row; 4],
                reset_cycles: 0,
            };
            let trace = simulate(&n, &stim, &outs).unwrap();
            let got = trace.probe_values[3]
                .iter()
                .enumerate()
                .fold(0u16, |acc, (i, b)| acc | ((*b as u16) << i));
            assert_eq!(got, spn_encrypt(&truth.round_keys, pt), "pt {pt:#06x}");
        }
    }
}
