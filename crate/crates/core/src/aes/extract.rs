use std::collections::BTreeMap;

use aes::cipher::{BlockEncrypt, KeyInit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{patch_sbox_identity, AesError, SboxInstance};
use crate::model::Netlist;
use crate::sim::{compile, Plan, Stimulus};

/// How to drive the datapath: `start` is held high during `load_cycle`,
/// the round register loads `plaintext ^ key` on the following edge, and
/// the ciphertext can be read `latency` cycles after `load_cycle`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockingInfo {
    pub start_input: String,
    /// Bit `8b + i` is bit `i` of plaintext byte `b`.
    pub plaintext_inputs: Vec<String>,
    pub ciphertext_outputs: Vec<String>,
    pub load_cycle: usize,
    pub latency: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyReport {
    pub key: String,
    pub probe_cycle: usize,
    /// Instance index used for each state byte.
    pub byte_instances: Vec<usize>,
    pub verified_plaintexts: usize,
}

impl KeyReport {
    pub fn key_bytes(&self) -> [u8; 16] {
        let v = hex::decode(&self.key).expect("report holds hex");
        v.try_into().expect("16 bytes")
    }
}

fn stimulus(clock: &ClockingInfo, pt: &[u8; 16], cycles: usize) -> Stimulus {
    let mut row: BTreeMap<String, bool> = BTreeMap::new();
    for (bit, name) in clock.plaintext_inputs.iter().enumerate() {
        row.insert(name.clone(), (pt[bit / 8] >> (bit % 8)) & 1 == 1);
    }
    let mut inputs = vec![row.clone(); cycles + 1];
    inputs[clock.load_cycle].insert(clock.start_input.clone(), true);
    Stimulus {
        cycles,
        inputs,
        reset_cycles: 0,
    }
}

/// Byte value on each instance's inputs at `cycle`.
fn probe_bytes(
    plan: &Plan,
    instances: &[SboxInstance],
    names: &[String],
    clock: &ClockingInfo,
    pt: &[u8; 16],
    cycle: usize,
) -> Result<Vec<u8>, AesError> {
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let trace = plan.run(&stimulus(clock, pt, cycle), &refs)?;
    let row = &trace.probe_values[cycle];
    Ok((0..instances.len())
        .map(|k| (0..8).fold(0u8, |acc, i| acc | ((row[8 * k + i] as u8) << i)))
        .collect())
}

/// Recovers the whitening key: patch every S-box to the identity, encrypt
/// an all-zero plaintext and read the S-box inputs right after the load
/// edge, where they hold `0 ^ key`. Each instance is aligned to its state
/// byte by flipping one plaintext bit, and the key is then checked with an
/// independent AES implementation against the unmodified netlist.
pub fn extract_key(
    n: &Netlist,
    instances: &[SboxInstance],
    clock: &ClockingInfo,
    samples: usize,
    seed: u64,
) -> Result<KeyReport, AesError> {
    if instances.len() < 16 {
        return Err(AesError::NotEnoughInstances(instances.len()));
    }
    if clock.plaintext_inputs.len() != 128 || clock.ciphertext_outputs.len() != 128 {
        return Err(AesError::BadClocking("expected 128 plaintext and ciphertext bits".into()));
    }
    let mut patched = n.clone();
    for inst in instances {
        patched = patch_sbox_identity(&patched, inst)?;
    }
    let plan = compile(&patched)?;
    let names: Vec<String> = instances
        .iter()
        .flat_map(|inst| inst.input_nets.iter().map(|net| patched.net_name(*net).to_string()))
        .collect();
    let probe_cycle = clock.load_cycle + 1;
    let zero = probe_bytes(&plan, instances, &names, clock, &[0u8; 16], probe_cycle)?;

    let mut byte_instances = Vec::with_capacity(16);
    let mut key = [0u8; 16];
    for b in 0..16 {
        let mut pt = [0u8; 16];
        pt[b] = 1;
        let probed = probe_bytes(&plan, instances, &names, clock, &pt, probe_cycle)?;
        let moved: Vec<usize> = (0..instances.len()).filter(|k| probed[*k] != zero[*k]).collect();
        match moved.as_slice() {
            [k] if probed[*k] == zero[*k] ^ 1 => {
                byte_instances.push(*k);
                key[b] = zero[*k];
            }
            _ => {
                return Err(AesError::VerificationFailed(format!(
                    "plaintext byte {b} does not reach exactly one S-box input bit 0"
                )))
            }
        }
    }

    let reference = aes::Aes128::new(&key.into());
    let original = compile(n)?;
    let outs: Vec<&str> = clock.ciphertext_outputs.iter().map(|s| s.as_str()).collect();
    let done = clock.load_cycle + clock.latency;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let pt: [u8; 16] = rng.gen();
        let mut block = pt.into();
        reference.encrypt_block(&mut block);
        let expected: [u8; 16] = block.into();
        let trace = original.run(&stimulus(clock, &pt, done), &outs)?;
        let row = &trace.probe_values[done];
        let got: [u8; 16] =
            std::array::from_fn(|b| (0..8).fold(0u8, |acc, i| acc | ((row[8 * b + i] as u8) << i)));
        if got != expected {
            return Err(AesError::VerificationFailed(format!(
                "plaintext {} simulates to {}, reference gives {}",
                hex::encode(pt),
                hex::encode(got),
                hex::encode(expected)
            )));
        }
    }
    Ok(KeyReport {
        key: hex::encode(key),
        probe_cycle,
        byte_instances,
        verified_plaintexts: samples,
    })
}
