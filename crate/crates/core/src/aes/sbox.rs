//! The AES S-box and a small software AES-128 used by the generators.

/// FIPS-197 substitution table.
pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

pub fn aes_sbox_table() -> [u8; 256] {
    SBOX
}

pub fn inverse_sbox() -> [u8; 256] {
    let mut inv = [0u8; 256];
    for (x, y) in SBOX.iter().enumerate() {
        inv[*y as usize] = x as u8;
    }
    inv
}

pub fn xtime(a: u8) -> u8 {
    (a << 1) ^ if a & 0x80 != 0 { 0x1b } else { 0 }
}

/// Eleven round keys, each in state byte order.
pub fn key_expansion(key: &[u8; 16]) -> [[u8; 16]; 11] {
    let mut w = [[0u8; 4]; 44];
    for i in 0..4 {
        w[i].copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    let mut rcon = 1u8;
    for i in 4..44 {
        let mut t = w[i - 1];
        if i % 4 == 0 {
            t = [
                SBOX[t[1] as usize] ^ rcon,
                SBOX[t[2] as usize],
                SBOX[t[3] as usize],
                SBOX[t[0] as usize],
            ];
            rcon = xtime(rcon);
        }
        for j in 0..4 {
            w[i][j] = w[i - 4][j] ^ t[j];
        }
    }
    let mut out = [[0u8; 16]; 11];
    for (r, rk) in out.iter_mut().enumerate() {
        for c in 0..4 {
            rk[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    out
}

/// Byte `4c + r` of the state is row `r`, column `c`. After ShiftRows,
/// output byte `(r, c)` is input byte `(r, c + r mod 4)`.
pub fn shift_rows_source(byte: usize) -> usize {
    let (r, c) = (byte % 4, byte / 4);
    4 * ((c + r) % 4) + r
}

pub fn mix_column(a: [u8; 4]) -> [u8; 4] {
    let mut out = [0u8; 4];
    for r in 0..4 {
        let (a0, a1, a2, a3) = (a[r], a[(r + 1) % 4], a[(r + 2) % 4], a[(r + 3) % 4]);
        out[r] = xtime(a0) ^ xtime(a1) ^ a1 ^ a2 ^ a3;
    }
    out
}

/// One middle (`last == false`) or final round applied to a state.
pub fn round(state: &[u8; 16], rk: &[u8; 16], last: bool) -> [u8; 16] {
    let mut sr = [0u8; 16];
    for (b, v) in sr.iter_mut().enumerate() {
        *v = SBOX[state[shift_rows_source(b)] as usize];
    }
    let mut out = sr;
    if !last {
        for c in 0..4 {
            let col = mix_column([sr[4 * c], sr[4 * c + 1], sr[4 * c + 2], sr[4 * c + 3]]);
            out[4 * c..4 * c + 4].copy_from_slice(&col);
        }
    }
    for (o, k) in out.iter_mut().zip(rk) {
        *o ^= k;
    }
    out
}

pub fn encrypt_block(key: &[u8; 16], pt: &[u8; 16]) -> [u8; 16] {
    let rks = key_expansion(key);
    let mut s = *pt;
    for (v, k) in s.iter_mut().zip(&rks[0]) {
        *v ^= k;
    }
    for (r, rk) in rks.iter().enumerate().skip(1) {
        s = round(&s, rk, r == 10);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use aes::cipher::{BlockEncrypt, KeyInit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gf_mul(mut a: u8, mut b: u8) -> u8 {
        let mut r = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                r ^= a;
            }
            a = xtime(a);
            b >>= 1;
        }
        r
    }

    /// Multiplicative inverse in GF(2^8) followed by the affine map.
    fn sbox_oracle(x: u8) -> u8 {
        let inv = if x == 0 {
            0
        } else {
            (1..=255u8).find(|y| gf_mul(x, *y) == 1).unwrap()
        };
        let mut out = 0x63u8;
        for s in 0..5 {
            out ^= inv.rotate_left(s);
        }
        out
    }

    #[test]
    fn table_matches_field_construction() {
        for x in 0..=255u8 {
            assert_eq!(SBOX[x as usize], sbox_oracle(x), "x = {x:#04x}");
        }
        assert_eq!(SBOX[0], 0x63);
    }

    #[test]
    fn bijection_and_inverse() {
        let mut seen = [false; 256];
        for y in SBOX {
            assert!(!seen[y as usize]);
            seen[y as usize] = true;
        }
        let inv = inverse_sbox();
        for x in 0..256 {
            assert_eq!(inv[SBOX[x] as usize] as usize, x);
        }
    }

    #[test]
    fn software_aes_matches_reference() {
        let key: [u8; 16] = core::array::from_fn(|i| i as u8);
        let pt: [u8; 16] = core::array::from_fn(|i| (i as u8) * 0x11);
        assert_eq!(hex::encode(encrypt_block(&key, &pt)), "69c4e0d86a7b0430d8cdb78070b4c55a");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let key: [u8; 16] = rng.gen();
            let pt: [u8; 16] = rng.gen();
            let cipher = aes::Aes128::new(&key.into());
            let mut block = pt.into();
            cipher.encrypt_block(&mut block);
            assert_eq!(encrypt_block(&key, &pt), <[u8; 16]>::from(block));
        }
    }
}
