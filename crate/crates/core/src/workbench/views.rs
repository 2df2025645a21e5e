//! JSON views over a project, shared by the command channel and the
//! service.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::graph::window;
use crate::model::{GateId, ModelError, Project, Submodule};

pub fn summary(p: &Project) -> Value {
    let n = &p.netlist;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for g in n.gates() {
        *kinds.entry(g.kind.name()).or_default() += 1;
    }
    json!({
        "name": n.name,
        "gates": n.gate_count(),
        "nets": n.net_count(),
        "inputs": n.inputs().len(),
        "outputs": n.outputs().len(),
        "flip_flops": n.flip_flops().count(),
        "clock": n.clock().map(|c| n.net_name(c).to_string()),
        "kinds": kinds,
        "submodules": p.submodules.len(),
        "digest": p.digest(),
    })
}

fn color(p: &Project, g: GateId) -> Value {
    match p.effective_color(g) {
        Some(c) => json!([c.0, c.1, c.2]),
        None => Value::Null,
    }
}

pub fn gate_detail(p: &Project, id: GateId) -> Result<Value, ModelError> {
    let n = &p.netlist;
    let g = n.gate(id)?;
    let pins: BTreeMap<String, Value> = g
        .pins
        .iter()
        .map(|(pin, net)| (pin.to_string(), json!({ "net": net.0, "name": n.net_name(*net) })))
        .collect();
    Ok(json!({
        "id": g.id.0,
        "name": g.name,
        "kind": g.kind.name(),
        "init": g.init_hex(),
        "pins": pins,
        "submodules": p.memberships(id).iter().map(|s| s.0).collect::<Vec<_>>(),
        "color": color(p, id),
    }))
}

pub fn graph_window(p: &Project, center: GateId, radius: usize) -> Result<Value, ModelError> {
    let w = window(&p.netlist, center, radius)?;
    let nodes: Vec<Value> = w
        .nodes
        .iter()
        .map(|id| {
            let g = p.netlist.gate(*id).expect("window nodes exist");
            json!({
                "id": id.0,
                "name": g.name,
                "kind": g.kind.name(),
                "color": color(p, *id),
            })
        })
        .collect();
    let edges: Vec<Value> = w.edges.iter().map(|(u, v)| json!([u.0, v.0])).collect();
    Ok(json!({ "center": center.0, "radius": radius, "nodes": nodes, "edges": edges }))
}

pub fn submodule(s: &Submodule) -> Value {
    json!({
        "id": s.id.0,
        "name": s.name,
        "color": [s.color.0, s.color.1, s.color.2],
        "parent": s.parent.map(|p| p.0),
        "gates": s.gate_ids.iter().map(|g| g.0).collect::<Vec<_>>(),
    })
}

pub fn submodules(p: &Project) -> Value {
    Value::Array(p.submodules.values().map(submodule).collect())
}
