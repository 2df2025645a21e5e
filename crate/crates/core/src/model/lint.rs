//! Structural checks over a netlist or project.
//!
//! Errors are broken invariants (dangling references, inconsistent
//! connectivity, submodule cycles). Warnings are legal but suspicious
//! structure: dangling nets, undriven nets that are read, floating LUT
//! inputs. Generated corpora are expected to produce no issues at all.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{Endpoint, GateKind, NetId, Netlist, Pin, Project};
use crate::model::GateId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LintIssue {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

impl LintIssue {
    fn error(code: &'static str, message: String) -> Self {
        LintIssue {
            severity: Severity::Error,
            code,
            message,
        }
    }

    fn warning(code: &'static str, message: String) -> Self {
        LintIssue {
            severity: Severity::Warning,
            code,
            message,
        }
    }
}

pub fn has_errors(issues: &[LintIssue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}

pub fn lint_netlist(n: &Netlist) -> Vec<LintIssue> {
    let mut out = Vec::new();
    for g in n.gates() {
        for req in g.kind.required_pins() {
            if !g.pins.contains_key(&req) {
                out.push(LintIssue::error(
                    "missing-pin",
                    format!("gate {} ({}) has no {req} connection", g.id, g.name),
                ));
            }
        }
        for (pin, net) in &g.pins {
            let Some(netv) = n.try_net(*net) else {
                out.push(LintIssue::error(
                    "unresolved-net",
                    format!("gate {} pin {pin} references missing net {net}", g.id),
                ));
                continue;
            };
            let ep = Endpoint::Gate(g.id, *pin);
            let linked = if *pin == g.kind.output_pin() {
                netv.driver == Some(ep)
            } else {
                netv.sinks.contains(&ep)
            };
            if !linked {
                out.push(LintIssue::error(
                    "inconsistent-link",
                    format!("gate {} pin {pin} is not registered on net {}", g.id, netv.name),
                ));
            }
        }
        if let GateKind::Lut(k) = g.kind {
            for i in 0..k {
                if !g.pins.contains_key(&Pin::In(i)) {
                    out.push(LintIssue::warning(
                        "floating-input",
                        format!("LUT {} ({}) input I{i} is unconnected and reads 0", g.id, g.name),
                    ));
                }
            }
        }
    }
    let outputs: BTreeSet<NetId> = n.outputs().iter().copied().collect();
    for net in n.nets() {
        let eps = net.driver.iter().chain(net.sinks.iter());
        for ep in eps {
            if let Endpoint::Gate(gid, pin) = ep {
                let ok = n
                    .gate(*gid)
                    .map(|g| g.pins.get(pin) == Some(&net.id))
                    .unwrap_or(false);
                if !ok {
                    out.push(LintIssue::error(
                        "inconsistent-link",
                        format!("net {} lists {gid}.{pin} which does not point back", net.name),
                    ));
                }
            }
        }
        let has_sinks = !net.sinks.is_empty();
        if !has_sinks && !outputs.contains(&net.id) && Some(net.id) != n.clock() {
            out.push(LintIssue::warning(
                "dangling",
                format!("net {} has no sinks", net.name),
            ));
        }
        if net.driver.is_none() && net.sink_gates().next().is_some() && Some(net.id) != n.clock() {
            out.push(LintIssue::warning(
                "undriven",
                format!("net {} is read but has no driver (reads 0)", net.name),
            ));
        }
    }
    for p in n.inputs().iter().chain(n.outputs()) {
        if n.try_net(*p).is_none() {
            out.push(LintIssue::error("unresolved-port", format!("port net {p} missing")));
        }
    }
    if let Some(c) = n.clock() {
        if n.try_net(c).is_none() {
            out.push(LintIssue::error("unresolved-port", format!("clock net {c} missing")));
        }
    }
    out
}

pub fn lint_project(p: &Project) -> Vec<LintIssue> {
    let mut out = lint_netlist(&p.netlist);
    for sm in p.submodules.values() {
        for g in &sm.gate_ids {
            if !p.netlist.contains_gate(*g) {
                out.push(LintIssue::error(
                    "unresolved-gate",
                    format!("submodule {} ({}) references missing gate {g}", sm.id, sm.name),
                ));
            }
        }
        if let Some(parent) = sm.parent {
            if !p.submodules.contains_key(&parent) {
                out.push(LintIssue::error(
                    "unresolved-submodule",
                    format!("submodule {} has missing parent {parent}", sm.id),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        let mut cur = Some(sm.id);
        while let Some(c) = cur {
            if !seen.insert(c) {
                out.push(LintIssue::error(
                    "hierarchy-cycle",
                    format!("submodule {} is part of a parent cycle", sm.id),
                ));
                break;
            }
            cur = p.submodules.get(&c).and_then(|s| s.parent);
        }
    }
    out
}

/// Gates that have no output sinks at all, handy for reporting dead logic.
pub fn dead_gates(n: &Netlist) -> Vec<GateId> {
    n.gates()
        .filter(|g| {
            let net = n.net(g.output_net());
            net.sinks.is_empty()
        })
        .map(|g| g.id)
        .collect()
}
