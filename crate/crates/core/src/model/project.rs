//! The evented project: a netlist plus its analyst submodules.
//!
//! Every call to [`Project::apply`] (and the typed helpers that wrap it)
//! pushes exactly one [`Emitted`] record into the project's outbox, whether
//! the mutation succeeded or not. The session layer drains the outbox and
//! turns each record into a logged event.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::submodule::palette_color;
use super::{GateId, GateKind, ModelError, Netlist, Rgb, Submodule, SubmoduleId};
use crate::aes::SboxInstance;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args")]
pub enum Mutation {
    #[serde(rename = "gate.add")]
    AddGate {
        name: String,
        kind: GateKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<String>,
        pins: BTreeMap<String, String>,
    },
    #[serde(rename = "submodule.create")]
    CreateSubmodule {
        name: String,
        #[serde(default)]
        color: Option<Rgb>,
    },
    #[serde(rename = "submodule.assign")]
    AssignGates {
        submodule: SubmoduleId,
        gates: Vec<GateId>,
    },
    #[serde(rename = "submodule.unassign")]
    UnassignGates {
        submodule: SubmoduleId,
        gates: Vec<GateId>,
    },
    #[serde(rename = "submodule.set_parent")]
    SetParent {
        submodule: SubmoduleId,
        #[serde(default)]
        parent: Option<SubmoduleId>,
    },
    #[serde(rename = "submodule.set_color")]
    SetColor { submodule: SubmoduleId, color: Rgb },
    #[serde(rename = "fsm.patch_init")]
    PatchInitialState { ffs: Vec<GateId>, state: Vec<bool> },
    #[serde(rename = "aes.patch_sbox")]
    PatchSbox { instance: SboxInstance },
}

impl Mutation {
    pub fn op_name(&self) -> &'static str {
        match self {
            Mutation::AddGate { .. } => "gate.add",
            Mutation::CreateSubmodule { .. } => "submodule.create",
            Mutation::AssignGates { .. } => "submodule.assign",
            Mutation::UnassignGates { .. } => "submodule.unassign",
            Mutation::SetParent { .. } => "submodule.set_parent",
            Mutation::SetColor { .. } => "submodule.set_color",
            Mutation::PatchInitialState { .. } => "fsm.patch_init",
            Mutation::PatchSbox { .. } => "aes.patch_sbox",
        }
    }

    /// Splits into the `(op, args)` pair stored in event records.
    pub fn to_parts(&self) -> (String, Value) {
        let v = serde_json::to_value(self).expect("mutations serialize");
        let op = v["op"].as_str().expect("tagged").to_string();
        let args = v.get("args").cloned().unwrap_or(Value::Object(Default::default()));
        (op, args)
    }

    pub fn from_parts(op: &str, args: &Value) -> Result<Mutation, serde_json::Error> {
        serde_json::from_value(serde_json::json!({ "op": op, "args": args }))
    }

    fn declared_targets(&self) -> Vec<u64> {
        match self {
            Mutation::AddGate { .. } | Mutation::CreateSubmodule { .. } => vec![],
            Mutation::AssignGates { submodule, gates }
            | Mutation::UnassignGates { submodule, gates } => std::iter::once(submodule.0 as u64)
                .chain(gates.iter().map(|g| g.0 as u64))
                .collect(),
            Mutation::SetParent { submodule, parent } => std::iter::once(submodule.0 as u64)
                .chain(parent.iter().map(|p| p.0 as u64))
                .collect(),
            Mutation::SetColor { submodule, .. } => vec![submodule.0 as u64],
            Mutation::PatchInitialState { ffs, .. } => ffs.iter().map(|g| g.0 as u64).collect(),
            Mutation::PatchSbox { instance } => {
                instance.gate_ids.iter().map(|g| g.0 as u64).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Error { code: String, message: String },
}

impl Outcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, Outcome::Ok)
    }
}

/// Raw material for one event record, produced by one mutation attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct Emitted {
    pub op: String,
    pub args: Value,
    pub targets: Vec<u64>,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Project {
    pub netlist: Netlist,
    pub submodules: BTreeMap<SubmoduleId, Submodule>,
    outbox: Vec<Emitted>,
}

impl Project {
    pub fn new(netlist: Netlist) -> Self {
        Project {
            netlist,
            submodules: BTreeMap::new(),
            outbox: Vec::new(),
        }
    }

    /// Builds a project from already-validated parts; emits nothing.
    pub fn from_parts(netlist: Netlist, submodules: Vec<Submodule>) -> Self {
        Project {
            netlist,
            submodules: submodules.into_iter().map(|s| (s.id, s)).collect(),
            outbox: Vec::new(),
        }
    }

    pub fn take_emitted(&mut self) -> Vec<Emitted> {
        std::mem::take(&mut self.outbox)
    }

    pub fn pending_emitted(&self) -> &[Emitted] {
        &self.outbox
    }

    /// Applies one mutation. Exactly one [`Emitted`] is queued per call.
    pub fn apply(&mut self, mutation: Mutation) -> Result<Vec<u64>, Error> {
        let (op, args) = mutation.to_parts();
        let declared = mutation.declared_targets();
        let result = self.apply_inner(mutation);
        let (targets, outcome) = match &result {
            Ok(t) => (t.clone(), Outcome::Ok),
            Err(e) => (
                declared,
                Outcome::Error {
                    code: e.code().to_string(),
                    message: e.to_string(),
                },
            ),
        };
        self.outbox.push(Emitted {
            op,
            args,
            targets,
            outcome,
        });
        result
    }

    fn apply_inner(&mut self, mutation: Mutation) -> Result<Vec<u64>, Error> {
        match mutation {
            Mutation::AddGate {
                name,
                kind,
                init,
                pins,
            } => {
                let id = self.netlist.add_gate(&name, kind, init.as_deref(), &pins)?;
                Ok(vec![id.0 as u64])
            }
            Mutation::CreateSubmodule { name, color } => {
                let id = SubmoduleId(
                    self.submodules.keys().next_back().map_or(1, |k| k.0 + 1),
                );
                let color = color.unwrap_or_else(|| palette_color(id));
                self.submodules.insert(
                    id,
                    Submodule {
                        id,
                        name,
                        color,
                        gate_ids: BTreeSet::new(),
                        parent: None,
                    },
                );
                Ok(vec![id.0 as u64])
            }
            Mutation::AssignGates { submodule, gates } => {
                self.check_submodule(submodule)?;
                for g in &gates {
                    self.netlist.gate(*g)?;
                }
                let sm = self.submodules.get_mut(&submodule).unwrap();
                sm.gate_ids.extend(gates.iter().copied());
                Ok(targets(submodule, &gates))
            }
            Mutation::UnassignGates { submodule, gates } => {
                self.check_submodule(submodule)?;
                let sm = self.submodules.get_mut(&submodule).unwrap();
                for g in &gates {
                    sm.gate_ids.remove(g);
                }
                Ok(targets(submodule, &gates))
            }
            Mutation::SetParent { submodule, parent } => {
                self.check_submodule(submodule)?;
                if let Some(p) = parent {
                    self.check_submodule(p)?;
                    let mut cur = Some(p);
                    while let Some(c) = cur {
                        if c == submodule {
                            return Err(ModelError::HierarchyCycle {
                                child: submodule,
                                parent: p,
                            }
                            .into());
                        }
                        cur = self.submodules[&c].parent;
                    }
                }
                self.submodules.get_mut(&submodule).unwrap().parent = parent;
                Ok(std::iter::once(submodule.0 as u64)
                    .chain(parent.map(|p| p.0 as u64))
                    .collect())
            }
            Mutation::SetColor { submodule, color } => {
                self.check_submodule(submodule)?;
                self.submodules.get_mut(&submodule).unwrap().color = color;
                Ok(vec![submodule.0 as u64])
            }
            Mutation::PatchInitialState { ffs, state } => {
                let patched = crate::fsm::patch_initial_state(&self.netlist, &ffs, &state)?;
                self.netlist = patched;
                Ok(ffs.iter().map(|g| g.0 as u64).collect())
            }
            Mutation::PatchSbox { instance } => {
                let patched = crate::aes::patch_sbox_identity(&self.netlist, &instance)?;
                self.netlist = patched;
                Ok(instance.gate_ids.iter().map(|g| g.0 as u64).collect())
            }
        }
    }

    fn check_submodule(&self, id: SubmoduleId) -> Result<(), ModelError> {
        if self.submodules.contains_key(&id) {
            Ok(())
        } else {
            Err(ModelError::UnknownSubmodule(id))
        }
    }

    pub fn add_gate(
        &mut self,
        name: &str,
        kind: GateKind,
        init: Option<&str>,
        pins: &[(&str, &str)],
    ) -> Result<GateId, Error> {
        let t = self.apply(Mutation::AddGate {
            name: name.into(),
            kind,
            init: init.map(str::to_string),
            pins: pins
                .iter()
                .map(|(p, n)| (p.to_string(), n.to_string()))
                .collect(),
        })?;
        Ok(GateId(t[0] as u32))
    }

    pub fn create_submodule(&mut self, name: &str, color: Option<Rgb>) -> Result<SubmoduleId, Error> {
        let t = self.apply(Mutation::CreateSubmodule {
            name: name.into(),
            color,
        })?;
        Ok(SubmoduleId(t[0] as u32))
    }

    pub fn assign_gates(&mut self, sm: SubmoduleId, gates: &[GateId]) -> Result<(), Error> {
        self.apply(Mutation::AssignGates {
            submodule: sm,
            gates: gates.to_vec(),
        })
        .map(|_| ())
    }

    pub fn set_parent(&mut self, sm: SubmoduleId, parent: Option<SubmoduleId>) -> Result<(), Error> {
        self.apply(Mutation::SetParent {
            submodule: sm,
            parent,
        })
        .map(|_| ())
    }

    pub fn submodule(&self, id: SubmoduleId) -> Result<&Submodule, ModelError> {
        self.submodules
            .get(&id)
            .ok_or(ModelError::UnknownSubmodule(id))
    }

    /// Resolves a submodule by numeric id or, failing that, by name (the
    /// lowest id wins when names repeat).
    pub fn find_submodule(&self, key: &str) -> Option<SubmoduleId> {
        if let Ok(n) = key.parse::<u32>() {
            if self.submodules.contains_key(&SubmoduleId(n)) {
                return Some(SubmoduleId(n));
            }
        }
        self.submodules
            .values()
            .find(|s| s.name == key)
            .map(|s| s.id)
    }

    pub fn depth(&self, id: SubmoduleId) -> usize {
        let mut d = 0;
        let mut cur = self.submodules.get(&id).and_then(|s| s.parent);
        while let Some(p) = cur {
            d += 1;
            cur = self.submodules.get(&p).and_then(|s| s.parent);
        }
        d
    }

    pub fn memberships(&self, gate: GateId) -> Vec<SubmoduleId> {
        self.submodules
            .values()
            .filter(|s| s.gate_ids.contains(&gate))
            .map(|s| s.id)
            .collect()
    }

    /// Display color of a gate: the deepest submodule it belongs to wins;
    /// among equally deep ones the most recently created.
    pub fn effective_color(&self, gate: GateId) -> Option<Rgb> {
        self.memberships(gate)
            .into_iter()
            .max_by_key(|id| (self.depth(*id), *id))
            .map(|id| self.submodules[&id].color)
    }

    /// SHA-256 over the canonical project serialization, hex encoded.
    pub fn digest(&self) -> String {
        crate::formats::project_digest(self)
    }
}

fn targets(sm: SubmoduleId, gates: &[GateId]) -> Vec<u64> {
    std::iter::once(sm.0 as u64)
        .chain(gates.iter().map(|g| g.0 as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PALETTE;

    fn small() -> Project {
        let mut p = Project::new(Netlist::new("t"));
        for i in 0..3 {
            p.add_gate(
                &format!("g{i}"),
                GateKind::Buf,
                None,
                &[("I", "a"), ("O", &format!("o{i}"))],
            )
            .unwrap();
        }
        p.take_emitted();
        p
    }

    #[test]
    fn palette_assignment() {
        let mut p = small();
        let a = p.create_submodule("fsm", None).unwrap();
        let b = p.create_submodule("ctr", None).unwrap();
        let c = p.create_submodule("red", Some(Rgb(255, 0, 0))).unwrap();
        assert_eq!(a, SubmoduleId(1));
        assert_eq!(p.submodule(a).unwrap().color, PALETTE[0]);
        assert_ne!(a, b);
        assert_ne!(p.submodule(a).unwrap().color, p.submodule(b).unwrap().color);
        assert_eq!(p.submodule(c).unwrap().color, Rgb(255, 0, 0));
    }

    #[test]
    fn membership_union_and_errors() {
        let mut p = small();
        let s = p.create_submodule("x", None).unwrap();
        let t = p.create_submodule("y", None).unwrap();
        p.assign_gates(s, &[GateId(1), GateId(2)]).unwrap();
        p.assign_gates(s, &[GateId(2), GateId(3)]).unwrap();
        p.assign_gates(t, &[GateId(2)]).unwrap();
        assert_eq!(
            p.submodule(s).unwrap().gate_ids,
            [GateId(1), GateId(2), GateId(3)].into()
        );
        assert_eq!(p.memberships(GateId(2)), vec![s, t]);
        let err = p.assign_gates(t, &[GateId(999)]).unwrap_err();
        assert_eq!(err.code(), "UnknownGate");
        assert_eq!(p.submodule(t).unwrap().gate_ids, [GateId(2)].into());
    }

    #[test]
    fn hierarchy_and_priority() {
        let mut p = small();
        let a = p.create_submodule("A", None).unwrap();
        let b = p.create_submodule("B", None).unwrap();
        p.set_parent(b, Some(a)).unwrap();
        assert_eq!(p.set_parent(a, Some(b)).unwrap_err().code(), "HierarchyCycle");
        assert_eq!(p.set_parent(a, Some(a)).unwrap_err().code(), "HierarchyCycle");
        p.assign_gates(a, &[GateId(1)]).unwrap();
        p.assign_gates(b, &[GateId(1)]).unwrap();
        assert_eq!(p.effective_color(GateId(1)), Some(p.submodule(b).unwrap().color));
        p.set_parent(b, None).unwrap();
        assert_eq!(p.submodule(b).unwrap().parent, None);
        assert_eq!(p.effective_color(GateId(3)), None);
    }

    #[test]
    fn one_emission_per_call() {
        let mut p = small();
        let s = p.create_submodule("x", None).unwrap();
        let _ = p.assign_gates(s, &[GateId(42)]);
        let _ = p.set_parent(SubmoduleId(9), None);
        let _ = p.add_gate("bad", GateKind::Lut(2), Some("123"), &[("O", "z")]);
        let emitted = p.take_emitted();
        assert_eq!(emitted.len(), 4);
        assert!(emitted[0].outcome.is_ok());
        assert!(emitted[1..].iter().all(|e| !e.outcome.is_ok()));
        assert_eq!(emitted[1].targets, vec![1, 42]);
    }

    #[test]
    fn mutation_parts_round_trip() {
        let m = Mutation::SetParent {
            submodule: SubmoduleId(2),
            parent: None,
        };
        let (op, args) = m.to_parts();
        assert_eq!(op, "submodule.set_parent");
        assert_eq!(Mutation::from_parts(&op, &args).unwrap(), m);
    }
}
