use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// The fixed FPGA-style primitive library.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    /// k-input look-up table, k in 1..=6.
    Lut(u8),
    /// Positive-edge D flip-flop with optional synchronous reset `R`.
    Ff,
    Mux2,
    Vcc,
    Gnd,
    Buf,
    Inv,
}

/// Pin roles. `In(n)` is the LUT/MUX data input `In`; `I` is the single
/// input of BUF and INV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pin {
    In(u8),
    I,
    S,
    D,
    Clk,
    R,
    O,
    Q,
}

impl Pin {
    pub fn parse(s: &str) -> Option<Pin> {
        Some(match s {
            "I" => Pin::I,
            "S" => Pin::S,
            "D" => Pin::D,
            "CLK" => Pin::Clk,
            "R" => Pin::R,
            "O" => Pin::O,
            "Q" => Pin::Q,
            _ => {
                let n: u8 = s.strip_prefix('I')?.parse().ok()?;
                if n > 5 || s.len() != 2 {
                    return None;
                }
                Pin::In(n)
            }
        })
    }
}

impl fmt::Display for Pin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pin::In(n) => write!(f, "I{n}"),
            Pin::I => f.write_str("I"),
            Pin::S => f.write_str("S"),
            Pin::D => f.write_str("D"),
            Pin::Clk => f.write_str("CLK"),
            Pin::R => f.write_str("R"),
            Pin::O => f.write_str("O"),
            Pin::Q => f.write_str("Q"),
        }
    }
}

impl GateKind {
    pub fn lut(k: u8) -> Result<GateKind, ModelError> {
        if (1..=6).contains(&k) {
            Ok(GateKind::Lut(k))
        } else {
            Err(ModelError::InvalidArity(k))
        }
    }

    pub fn name(&self) -> String {
        match self {
            GateKind::Lut(k) => format!("LUT{k}"),
            GateKind::Ff => "FF".into(),
            GateKind::Mux2 => "MUX2".into(),
            GateKind::Vcc => "VCC".into(),
            GateKind::Gnd => "GND".into(),
            GateKind::Buf => "BUF".into(),
            GateKind::Inv => "INV".into(),
        }
    }

    pub fn from_name(s: &str) -> Option<GateKind> {
        Some(match s {
            "FF" => GateKind::Ff,
            "MUX2" => GateKind::Mux2,
            "VCC" => GateKind::Vcc,
            "GND" => GateKind::Gnd,
            "BUF" => GateKind::Buf,
            "INV" => GateKind::Inv,
            _ => {
                let k: u8 = s.strip_prefix("LUT")?.parse().ok()?;
                GateKind::lut(k).ok()?
            }
        })
    }

    pub fn all() -> Vec<GateKind> {
        let mut v: Vec<GateKind> = (1..=6).map(GateKind::Lut).collect();
        v.extend([
            GateKind::Ff,
            GateKind::Mux2,
            GateKind::Vcc,
            GateKind::Gnd,
            GateKind::Buf,
            GateKind::Inv,
        ]);
        v
    }

    pub fn output_pin(&self) -> Pin {
        match self {
            GateKind::Ff => Pin::Q,
            _ => Pin::O,
        }
    }

    pub fn input_pins(&self) -> Vec<Pin> {
        match self {
            GateKind::Lut(k) => (0..*k).map(Pin::In).collect(),
            GateKind::Ff => vec![Pin::D, Pin::Clk, Pin::R],
            GateKind::Mux2 => vec![Pin::In(0), Pin::In(1), Pin::S],
            GateKind::Vcc | GateKind::Gnd => vec![],
            GateKind::Buf | GateKind::Inv => vec![Pin::I],
        }
    }

    /// Pins that must be connected. LUT data inputs may float (they read 0
    /// and lint warns); the FF reset is optional.
    pub fn required_pins(&self) -> Vec<Pin> {
        let mut pins = match self {
            GateKind::Lut(_) | GateKind::Vcc | GateKind::Gnd => vec![],
            GateKind::Ff => vec![Pin::D, Pin::Clk],
            other => other.input_pins(),
        };
        pins.push(self.output_pin());
        pins
    }

    pub fn accepts_pin(&self, pin: Pin) -> bool {
        pin == self.output_pin() || self.input_pins().contains(&pin)
    }

    pub fn is_sequential(&self) -> bool {
        *self == GateKind::Ff
    }

    /// Width of the INIT value in bits, if the kind carries one.
    pub fn init_bits(&self) -> Option<usize> {
        match self {
            GateKind::Lut(k) => Some(1 << k),
            GateKind::Ff => Some(1),
            _ => None,
        }
    }

    pub fn init_hex_digits(&self) -> Option<usize> {
        self.init_bits().map(|b| b.div_ceil(4))
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Serialize for GateKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for GateKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GateKind::from_name(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown gate type {s:?}")))
    }
}

/// Parses an INIT hex string. The string must carry exactly
/// `ceil(2^k / 4)` digits for a LUTk (one digit for an FF) and the value
/// must fit in the INIT width.
pub fn parse_init(kind: GateKind, hex: &str) -> Result<u64, ModelError> {
    let (bits, digits) = match (kind.init_bits(), kind.init_hex_digits()) {
        (Some(b), Some(d)) => (b, d),
        _ => {
            return Err(ModelError::MalformedInit(format!(
                "{} takes no INIT value",
                kind.name()
            )))
        }
    };
    if hex.len() != digits {
        return Err(ModelError::MalformedInit(format!(
            "{} needs {digits} hex digit(s), got {:?}",
            kind.name(),
            hex
        )));
    }
    let value = u64::from_str_radix(hex, 16)
        .ok()
        .filter(|_| hex.bytes().all(|b| b.is_ascii_hexdigit()))
        .ok_or_else(|| ModelError::MalformedInit(format!("{hex:?} is not hexadecimal")))?;
    if bits < 64 && value >> bits != 0 {
        return Err(ModelError::MalformedInit(format!(
            "{hex:?} does not fit in {bits} bits"
        )));
    }
    Ok(value)
}

pub fn format_init(kind: GateKind, value: u64) -> String {
    let digits = kind.init_hex_digits().unwrap_or(1);
    format!("{value:0digits$x}")
}
