//! In-memory netlist model.
//!
//! A [`Netlist`] owns gates and nets and keeps the connectivity on both
//! sides in sync: every gate pin points at a net, and every net knows its
//! single driver and its set of sinks. Top-level ports are nets whose driver
//! (inputs) or one of whose sinks (outputs) is [`Endpoint::Port`].
//!
//! Mutations on a bare `Netlist` are silent. The evented surface that the
//! workbench and session log rely on lives in [`project::Project`].

mod kind;
pub mod lint;
pub mod project;
pub mod submodule;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kind::{format_init, parse_init, GateKind, Pin};
pub use project::{Emitted, Mutation, Outcome, Project};
pub use submodule::{Rgb, Submodule, PALETTE};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Dense, creation-ordered gate identifier (starts at 1).
    GateId
);
id_type!(
    /// Dense, creation-ordered net identifier (starts at 1).
    NetId
);
id_type!(SubmoduleId);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed INIT: {0}")]
    MalformedInit(String),
    #[error("pin {pin} is not valid for gate type {kind}")]
    UnknownPin { kind: String, pin: String },
    #[error("gate {gate:?} is missing required pin {pin}")]
    MissingPin { gate: String, pin: String },
    #[error("net {net:?} already has a driver")]
    DuplicateDriver { net: String },
    #[error("unknown gate {0}")]
    UnknownGate(GateId),
    #[error("unknown net {0:?}")]
    UnknownNet(String),
    #[error("unknown submodule {0}")]
    UnknownSubmodule(SubmoduleId),
    #[error("making {parent} the parent of {child} would create a cycle")]
    HierarchyCycle { child: SubmoduleId, parent: SubmoduleId },
    #[error("duplicate gate id {0}")]
    DuplicateGateId(GateId),
    #[error("duplicate net name {0:?}")]
    DuplicateNet(String),
    #[error("LUT arity {0} outside 1..=6")]
    InvalidArity(u8),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::MalformedInit(_) => "MalformedInit",
            ModelError::UnknownPin { .. } => "UnknownPin",
            ModelError::MissingPin { .. } => "MissingPin",
            ModelError::DuplicateDriver { .. } => "DuplicateDriver",
            ModelError::UnknownGate(_) => "UnknownGate",
            ModelError::UnknownNet(_) => "UnknownNet",
            ModelError::UnknownSubmodule(_) => "UnknownSubmodule",
            ModelError::HierarchyCycle { .. } => "HierarchyCycle",
            ModelError::DuplicateGateId(_) => "DuplicateGateId",
            ModelError::DuplicateNet(_) => "DuplicateNet",
            ModelError::InvalidArity(_) => "InvalidArity",
        }
    }
}

/// One end of a net connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Gate(GateId, Pin),
    /// Top-level port: the driver for inputs, a sink for outputs.
    Port,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub id: GateId,
    pub name: String,
    pub kind: GateKind,
    pub init: Option<u64>,
    pub pins: BTreeMap<Pin, NetId>,
}

impl Gate {
    pub fn output_net(&self) -> NetId {
        self.pins[&self.kind.output_pin()]
    }

    pub fn input_net(&self, pin: Pin) -> Option<NetId> {
        self.pins.get(&pin).copied()
    }

    pub fn init_hex(&self) -> Option<String> {
        self.init.map(|v| format_init(self.kind, v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Net {
    pub id: NetId,
    pub name: String,
    pub driver: Option<Endpoint>,
    pub sinks: BTreeSet<Endpoint>,
}

impl Net {
    pub fn driver_gate(&self) -> Option<GateId> {
        match self.driver {
            Some(Endpoint::Gate(g, _)) => Some(g),
            _ => None,
        }
    }

    pub fn sink_gates(&self) -> impl Iterator<Item = (GateId, Pin)> + '_ {
        self.sinks.iter().filter_map(|e| match e {
            Endpoint::Gate(g, p) => Some((*g, *p)),
            Endpoint::Port => None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Fanin,
    Fanout,
}

#[derive(Clone, Debug, Default)]
pub struct Netlist {
    pub name: String,
    gates: BTreeMap<GateId, Gate>,
    nets: Vec<Net>,
    net_index: HashMap<String, NetId>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    clock: Option<NetId>,
    next_gate: u32,
}

impl PartialEq for Netlist {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.gates == other.gates
            && self.nets == other.nets
            && self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.clock == other.clock
    }
}

impl Netlist {
    pub fn new(name: impl Into<String>) -> Self {
        Netlist {
            name: name.into(),
            next_gate: 1,
            ..Default::default()
        }
    }

    pub fn gate(&self, id: GateId) -> Result<&Gate, ModelError> {
        self.gates.get(&id).ok_or(ModelError::UnknownGate(id))
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> + '_ {
        self.gates.values()
    }

    pub fn gate_ids(&self) -> impl Iterator<Item = GateId> + '_ {
        self.gates.keys().copied()
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn contains_gate(&self, id: GateId) -> bool {
        self.gates.contains_key(&id)
    }

    pub fn flip_flops(&self) -> impl Iterator<Item = &Gate> + '_ {
        self.gates.values().filter(|g| g.kind == GateKind::Ff)
    }

    /// # Panics
    /// If `id` is not a net of this netlist.
    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id.0 as usize - 1]
    }

    pub fn try_net(&self, id: NetId) -> Option<&Net> {
        (id.0 as usize)
            .checked_sub(1)
            .and_then(|i| self.nets.get(i))
    }

    pub fn nets(&self) -> impl Iterator<Item = &Net> + '_ {
        self.nets.iter()
    }

    pub fn net_count(&self) -> usize {
        self.nets.len()
    }

    pub fn net_by_name(&self, name: &str) -> Option<NetId> {
        self.net_index.get(name).copied()
    }

    pub fn net_name(&self, id: NetId) -> &str {
        &self.net(id).name
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn clock(&self) -> Option<NetId> {
        self.clock
    }

    pub fn set_clock(&mut self, net: Option<NetId>) {
        self.clock = net;
    }

    pub fn next_gate_id(&self) -> GateId {
        GateId(self.next_gate)
    }

    /// Creates a fresh net. Names are net identities in the file formats, so
    /// they must be unique.
    pub fn add_net(&mut self, name: impl Into<String>) -> Result<NetId, ModelError> {
        let name = name.into();
        if self.net_index.contains_key(&name) {
            return Err(ModelError::DuplicateNet(name));
        }
        let id = NetId(self.nets.len() as u32 + 1);
        self.net_index.insert(name.clone(), id);
        self.nets.push(Net {
            id,
            name,
            driver: None,
            sinks: BTreeSet::new(),
        });
        Ok(id)
    }

    /// Returns the net called `name`, creating it if needed.
    pub fn ensure_net(&mut self, name: &str) -> NetId {
        match self.net_index.get(name) {
            Some(id) => *id,
            None => self.add_net(name).expect("name checked"),
        }
    }

    /// Picks an unused net name derived from `base`.
    pub fn fresh_net(&mut self, base: &str) -> NetId {
        if !self.net_index.contains_key(base) {
            return self.add_net(base).expect("name checked");
        }
        let mut i = 1usize;
        loop {
            let candidate = format!("{base}_{i}");
            if !self.net_index.contains_key(&candidate) {
                return self.add_net(candidate).expect("name checked");
            }
            i += 1;
        }
    }

    pub fn add_input(&mut self, name: &str) -> Result<NetId, ModelError> {
        let id = self.ensure_net(name);
        let net = &mut self.nets[id.0 as usize - 1];
        if net.driver.is_some() {
            return Err(ModelError::DuplicateDriver { net: name.into() });
        }
        net.driver = Some(Endpoint::Port);
        self.inputs.push(id);
        Ok(id)
    }

    pub fn add_output(&mut self, name: &str) -> NetId {
        let id = self.ensure_net(name);
        if !self.outputs.contains(&id) {
            self.nets[id.0 as usize - 1].sinks.insert(Endpoint::Port);
            self.outputs.push(id);
        }
        id
    }

    /// Adds a gate from string-level arguments, creating nets by name.
    pub fn add_gate(
        &mut self,
        name: &str,
        kind: GateKind,
        init: Option<&str>,
        pin_map: &BTreeMap<String, String>,
    ) -> Result<GateId, ModelError> {
        let init = match init {
            Some(hex) => Some(parse_init(kind, hex)?),
            None => None,
        };
        let mut pins = BTreeMap::new();
        for (pin_name, _) in pin_map.iter() {
            let pin = Pin::parse(pin_name)
                .filter(|p| kind.accepts_pin(*p))
                .ok_or_else(|| ModelError::UnknownPin {
                    kind: kind.name(),
                    pin: pin_name.clone(),
                })?;
            pins.insert(pin, ());
        }
        self.validate_pins(name, kind, pins.keys().copied())?;
        // Creating nets only after validation keeps a failed add side-effect free.
        let out_pin = kind.output_pin();
        let out_name = &pin_map[&out_pin.to_string()];
        if let Some(id) = self.net_by_name(out_name) {
            if self.net(id).driver.is_some() {
                return Err(ModelError::DuplicateDriver {
                    net: out_name.clone(),
                });
            }
        }
        let pins = pin_map
            .iter()
            .map(|(p, n)| (Pin::parse(p).expect("checked"), self.ensure_net(n)))
            .collect();
        self.insert_gate(self.next_gate_id(), name, kind, init, pins)
    }

    /// Adds a gate over existing nets.
    pub fn add_gate_raw(
        &mut self,
        name: impl Into<String>,
        kind: GateKind,
        init: Option<u64>,
        pins: BTreeMap<Pin, NetId>,
    ) -> Result<GateId, ModelError> {
        self.insert_gate(self.next_gate_id(), name, kind, init, pins)
    }

    /// Inserts a gate with an explicit id; used by readers.
    pub fn insert_gate(
        &mut self,
        id: GateId,
        name: impl Into<String>,
        kind: GateKind,
        init: Option<u64>,
        pins: BTreeMap<Pin, NetId>,
    ) -> Result<GateId, ModelError> {
        let name = name.into();
        if self.gates.contains_key(&id) {
            return Err(ModelError::DuplicateGateId(id));
        }
        for pin in pins.keys() {
            if !kind.accepts_pin(*pin) {
                return Err(ModelError::UnknownPin {
                    kind: kind.name(),
                    pin: pin.to_string(),
                });
            }
        }
        self.validate_pins(&name, kind, pins.keys().copied())?;
        for net in pins.values() {
            if self.try_net(*net).is_none() {
                return Err(ModelError::UnknownNet(net.to_string()));
            }
        }
        let init = match (kind.init_bits(), init) {
            (Some(bits), Some(v)) => {
                if bits < 64 && v >> bits != 0 {
                    return Err(ModelError::MalformedInit(format!(
                        "value {v:#x} exceeds {bits} bits"
                    )));
                }
                Some(v)
            }
            (Some(_), None) if kind == GateKind::Ff => Some(0),
            (Some(_), None) => {
                return Err(ModelError::MalformedInit(format!(
                    "{} requires an INIT value",
                    kind.name()
                )))
            }
            (None, Some(_)) => {
                return Err(ModelError::MalformedInit(format!(
                    "{} takes no INIT value",
                    kind.name()
                )))
            }
            (None, None) => None,
        };
        let out_pin = kind.output_pin();
        let out_net = pins[&out_pin];
        if self.net(out_net).driver.is_some() {
            return Err(ModelError::DuplicateDriver {
                net: self.net(out_net).name.clone(),
            });
        }
        for (pin, net) in &pins {
            let n = &mut self.nets[net.0 as usize - 1];
            if *pin == out_pin {
                n.driver = Some(Endpoint::Gate(id, *pin));
            } else {
                n.sinks.insert(Endpoint::Gate(id, *pin));
            }
        }
        self.gates.insert(
            id,
            Gate {
                id,
                name,
                kind,
                init,
                pins,
            },
        );
        self.next_gate = self.next_gate.max(id.0 + 1);
        Ok(id)
    }

    fn validate_pins(
        &self,
        name: &str,
        kind: GateKind,
        present: impl Iterator<Item = Pin>,
    ) -> Result<(), ModelError> {
        let present: BTreeSet<Pin> = present.collect();
        for req in kind.required_pins() {
            if !present.contains(&req) {
                return Err(ModelError::MissingPin {
                    gate: name.to_string(),
                    pin: req.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn set_init(&mut self, gate: GateId, value: u64) -> Result<(), ModelError> {
        let g = self.gates.get_mut(&gate).ok_or(ModelError::UnknownGate(gate))?;
        match g.kind.init_bits() {
            Some(bits) if bits >= 64 || value >> bits == 0 => {
                g.init = Some(value);
                Ok(())
            }
            _ => Err(ModelError::MalformedInit(format!(
                "{value:#x} is not a valid INIT for {}",
                g.kind.name()
            ))),
        }
    }

    /// Moves `pin` of `gate` onto `net`, keeping both connectivity views
    /// consistent.
    pub fn reconnect(&mut self, gate: GateId, pin: Pin, net: NetId) -> Result<(), ModelError> {
        let g = self.gates.get(&gate).ok_or(ModelError::UnknownGate(gate))?;
        if !g.kind.accepts_pin(pin) {
            return Err(ModelError::UnknownPin {
                kind: g.kind.name(),
                pin: pin.to_string(),
            });
        }
        if self.try_net(net).is_none() {
            return Err(ModelError::UnknownNet(net.to_string()));
        }
        let is_out = pin == g.kind.output_pin();
        if is_out && self.net(net).driver.is_some() {
            return Err(ModelError::DuplicateDriver {
                net: self.net(net).name.clone(),
            });
        }
        let old = g.pins.get(&pin).copied();
        let ep = Endpoint::Gate(gate, pin);
        if let Some(old) = old {
            let n = &mut self.nets[old.0 as usize - 1];
            if is_out {
                n.driver = None;
            } else {
                n.sinks.remove(&ep);
            }
        }
        let n = &mut self.nets[net.0 as usize - 1];
        if is_out {
            n.driver = Some(ep);
        } else {
            n.sinks.insert(ep);
        }
        self.gates.get_mut(&gate).unwrap().pins.insert(pin, net);
        Ok(())
    }

    pub fn driver_gate(&self, net: NetId) -> Option<&Gate> {
        self.net(net).driver_gate().map(|g| &self.gates[&g])
    }

    /// Fan-in gates are the drivers of this gate's input nets; fan-out gates
    /// are the sinks of its output net. Ports are not gates and never appear.
    pub fn neighbors(&self, gate: GateId, dir: Direction) -> Result<BTreeSet<GateId>, ModelError> {
        let g = self.gate(gate)?;
        let out_pin = g.kind.output_pin();
        let mut res = BTreeSet::new();
        match dir {
            Direction::Fanin => {
                for (pin, net) in &g.pins {
                    if *pin == out_pin {
                        continue;
                    }
                    if let Some(d) = self.net(*net).driver_gate() {
                        res.insert(d);
                    }
                }
            }
            Direction::Fanout => {
                res.extend(self.net(g.output_net()).sink_gates().map(|(s, _)| s));
            }
        }
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pins(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(p, n)| (p.to_string(), n.to_string()))
            .collect()
    }

    #[test]
    fn add_lut_and_ff() {
        let mut n = Netlist::new("t");
        let g1 = n
            .add_gate("g1", GateKind::Lut(2), Some("8"), &pins(&[("I0", "a"), ("I1", "b"), ("O", "c")]))
            .unwrap();
        assert_eq!(g1, GateId(1));
        let c = n.net_by_name("c").unwrap();
        assert_eq!(n.net(c).driver, Some(Endpoint::Gate(g1, Pin::O)));
        let r0 = n
            .add_gate("r0", GateKind::Ff, Some("0"), &pins(&[("D", "c"), ("CLK", "clk"), ("Q", "q0")]))
            .unwrap();
        assert_eq!(r0, GateId(2));
        assert_eq!(n.gate_count(), 2);
    }

    #[test]
    fn malformed_init_length() {
        let mut n = Netlist::new("t");
        let err = n
            .add_gate("g", GateKind::Lut(2), Some("123"), &pins(&[("I0", "a"), ("I1", "b"), ("O", "c")]))
            .unwrap_err();
        assert_eq!(err.code(), "MalformedInit");
        assert_eq!(n.gate_count(), 0);
        assert_eq!(n.net_count(), 0);
    }

    #[test]
    fn unknown_pin_and_duplicate_driver() {
        let mut n = Netlist::new("t");
        let err = n
            .add_gate("g", GateKind::Buf, None, &pins(&[("I0", "a"), ("O", "c")]))
            .unwrap_err();
        assert_eq!(err.code(), "UnknownPin");
        n.add_gate("g", GateKind::Buf, None, &pins(&[("I", "a"), ("O", "c")]))
            .unwrap();
        let err = n
            .add_gate("h", GateKind::Inv, None, &pins(&[("I", "a"), ("O", "c")]))
            .unwrap_err();
        assert_eq!(err, ModelError::DuplicateDriver { net: "c".into() });
        assert_eq!(n.gate_count(), 1);
    }

    #[test]
    fn neighbor_queries() {
        let mut n = Netlist::new("t");
        n.add_input("a").unwrap();
        let lut = n
            .add_gate("l", GateKind::Lut(2), Some("6"), &pins(&[("I0", "a"), ("I1", "q"), ("O", "d")]))
            .unwrap();
        let ff = n
            .add_gate("f", GateKind::Ff, Some("0"), &pins(&[("D", "d"), ("CLK", "clk"), ("Q", "q")]))
            .unwrap();
        let vcc = n
            .add_gate("v", GateKind::Vcc, None, &pins(&[("O", "one")]))
            .unwrap();
        assert_eq!(n.neighbors(ff, Direction::Fanin).unwrap(), [lut].into());
        assert_eq!(n.neighbors(ff, Direction::Fanout).unwrap(), [lut].into());
        assert_eq!(n.neighbors(lut, Direction::Fanin).unwrap(), [ff].into());
        assert!(n.neighbors(vcc, Direction::Fanout).unwrap().is_empty());
        assert_eq!(
            n.neighbors(GateId(99), Direction::Fanin).unwrap_err(),
            ModelError::UnknownGate(GateId(99))
        );
    }

    #[test]
    fn reconnect_moves_driver() {
        let mut n = Netlist::new("t");
        let a = n.add_input("a").unwrap();
        let g = n
            .add_gate("b", GateKind::Buf, None, &pins(&[("I", "a"), ("O", "x")]))
            .unwrap();
        let y = n.add_net("y").unwrap();
        n.reconnect(g, Pin::O, y).unwrap();
        let x = n.net_by_name("x").unwrap();
        assert_eq!(n.net(x).driver, None);
        assert_eq!(n.net(y).driver, Some(Endpoint::Gate(g, Pin::O)));
        n.reconnect(g, Pin::S, y).unwrap_err();
        n.reconnect(g, Pin::I, x).unwrap();
        assert!(n.net(a).sinks.is_empty());
    }
}
