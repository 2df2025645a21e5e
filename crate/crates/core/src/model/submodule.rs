use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{GateId, SubmoduleId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

/// Colors handed out to submodules created without one, cycled by id.
pub const PALETTE: [Rgb; 12] = [
    Rgb(0x1f, 0x77, 0xb4),
    Rgb(0xff, 0x7f, 0x0e),
    Rgb(0x2c, 0xa0, 0x2c),
    Rgb(0xd6, 0x27, 0x28),
    Rgb(0x94, 0x67, 0xbd),
    Rgb(0x8c, 0x56, 0x4b),
    Rgb(0xe3, 0x77, 0xc2),
    Rgb(0x7f, 0x7f, 0x7f),
    Rgb(0xbc, 0xbd, 0x22),
    Rgb(0x17, 0xbe, 0xcf),
    Rgb(0xae, 0xc7, 0xe8),
    Rgb(0xff, 0xbb, 0x78),
];

pub fn palette_color(id: SubmoduleId) -> Rgb {
    PALETTE[(id.0.saturating_sub(1) as usize) % PALETTE.len()]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submodule {
    pub id: SubmoduleId,
    pub name: String,
    pub color: Rgb,
    pub gate_ids: BTreeSet<GateId>,
    pub parent: Option<SubmoduleId>,
}
