use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{canonical_string, FormatError, Parsed};
use crate::model::lint::{lint_netlist, Severity};
use crate::model::{
    parse_init, GateId, GateKind, Netlist, Pin, Project, Rgb, Submodule, SubmoduleId,
};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateDoc {
    id: u32,
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<String>,
    pins: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmoduleDoc {
    id: u32,
    name: String,
    color: Rgb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<u32>,
    gates: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    format_version: u64,
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clock: Option<String>,
    gates: Vec<GateDoc>,
    /// Every net in id order. Optional on input; always written so that
    /// net ids and dangling nets survive a round trip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nets: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    submodules: Option<Vec<SubmoduleDoc>>,
}

fn netlist_doc(n: &Netlist) -> Doc {
    Doc {
        format_version: FORMAT_VERSION,
        name: n.name.clone(),
        inputs: n.inputs().iter().map(|i| n.net_name(*i).to_string()).collect(),
        outputs: n.outputs().iter().map(|i| n.net_name(*i).to_string()).collect(),
        clock: n.clock().map(|c| n.net_name(c).to_string()),
        gates: n
            .gates()
            .map(|g| GateDoc {
                id: g.id.0,
                name: g.name.clone(),
                kind: g.kind.name(),
                init: g.init_hex(),
                pins: g
                    .pins
                    .iter()
                    .map(|(p, net)| (p.to_string(), n.net_name(*net).to_string()))
                    .collect(),
            })
            .collect(),
        nets: Some(n.nets().map(|net| net.name.clone()).collect()),
        submodules: None,
    }
}

pub fn netlist_to_value(n: &Netlist) -> Value {
    serde_json::to_value(netlist_doc(n)).expect("documents serialize")
}

/// Canonical form: sorted keys, gates in id order, compact, one trailing
/// newline. Identical models always produce identical bytes.
pub fn write_json_netlist(n: &Netlist) -> String {
    let mut s = canonical_string(&netlist_to_value(n));
    s.push('\n');
    s
}

pub fn write_project(p: &Project) -> String {
    let mut doc = netlist_doc(&p.netlist);
    doc.submodules = Some(
        p.submodules
            .values()
            .map(|s| SubmoduleDoc {
                id: s.id.0,
                name: s.name.clone(),
                color: s.color,
                parent: s.parent.map(|x| x.0),
                gates: s.gate_ids.iter().map(|g| g.0).collect(),
            })
            .collect(),
    );
    let mut s = canonical_string(&serde_json::to_value(doc).expect("documents serialize"));
    s.push('\n');
    s
}

pub fn project_digest(p: &Project) -> String {
    hex::encode(Sha256::digest(write_project(p).as_bytes()))
}

fn parse_doc(text: &str) -> Result<Doc, FormatError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| FormatError::Schema(format!("invalid JSON: {e}")))?;
    match value.get("format_version") {
        None => return Err(FormatError::Schema("missing field `format_version`".into())),
        Some(v) => match v.as_u64() {
            Some(FORMAT_VERSION) => {}
            Some(other) => return Err(FormatError::Version(other)),
            None => return Err(FormatError::Schema("format_version must be an integer".into())),
        },
    }
    serde_json::from_value(value).map_err(|e| FormatError::Schema(e.to_string()))
}

fn build_netlist(doc: &Doc) -> Result<Netlist, FormatError> {
    let mut n = Netlist::new(doc.name.clone());
    let declared: Option<BTreeSet<&str>> = doc
        .nets
        .as_ref()
        .map(|v| v.iter().map(String::as_str).collect());
    if let Some(names) = &doc.nets {
        for name in names {
            n.add_net(name.clone())
                .map_err(|_| FormatError::Schema(format!("net {name:?} listed twice")))?;
        }
    }
    let resolve = |n: &mut Netlist, name: &str| -> Result<_, FormatError> {
        match &declared {
            Some(set) if !set.contains(name) => {
                Err(FormatError::Link(format!("net {name:?} is not declared in `nets`")))
            }
            _ => Ok(n.ensure_net(name)),
        }
    };
    for name in &doc.inputs {
        resolve(&mut n, name)?;
        n.add_input(name)
            .map_err(|_| FormatError::Schema(format!("input {name:?} listed twice")))?;
    }
    for name in &doc.outputs {
        resolve(&mut n, name)?;
        n.add_output(name);
    }
    if let Some(c) = &doc.clock {
        let id = resolve(&mut n, c)?;
        n.set_clock(Some(id));
    }
    let mut seen = BTreeSet::new();
    for g in &doc.gates {
        if !seen.insert(g.id) {
            return Err(FormatError::Schema(format!("duplicate gate id {}", g.id)));
        }
        if g.id == 0 {
            return Err(FormatError::Schema("gate id 0 is reserved".into()));
        }
    }
    for g in &doc.gates {
        let kind = GateKind::from_name(&g.kind)
            .ok_or_else(|| FormatError::Schema(format!("gate {}: unknown type {:?}", g.id, g.kind)))?;
        let init = match &g.init {
            Some(h) => Some(parse_init(kind, h).map_err(FormatError::from_model)?),
            None => None,
        };
        let mut pins = BTreeMap::new();
        for (pin, net) in &g.pins {
            let p = Pin::parse(pin)
                .filter(|p| kind.accepts_pin(*p))
                .ok_or_else(|| FormatError::Link(format!("gate {}: {} has no pin {pin:?}", g.id, g.kind)))?;
            pins.insert(p, resolve(&mut n, net)?);
        }
        n.insert_gate(GateId(g.id), g.name.clone(), kind, init, pins)
            .map_err(|e| match e {
                crate::model::ModelError::MalformedInit(m) => {
                    FormatError::MalformedInit(format!("gate {}: {m}", g.id))
                }
                other => FormatError::Link(format!("gate {}: {other}", g.id)),
            })?;
    }
    Ok(n)
}

fn warnings_of(n: &Netlist) -> Result<Vec<crate::model::lint::LintIssue>, FormatError> {
    let issues = lint_netlist(n);
    if let Some(e) = issues.iter().find(|i| i.severity == Severity::Error) {
        return Err(FormatError::Link(e.message.clone()));
    }
    Ok(issues)
}

pub fn read_json_netlist(text: &str) -> Result<Parsed, FormatError> {
    let doc = parse_doc(text)?;
    let netlist = build_netlist(&doc)?;
    let warnings = warnings_of(&netlist)?;
    Ok(Parsed { netlist, warnings })
}

pub fn read_project(text: &str) -> Result<Project, FormatError> {
    let doc = parse_doc(text)?;
    let netlist = build_netlist(&doc)?;
    let mut subs = Vec::new();
    let mut ids = BTreeSet::new();
    for s in doc.submodules.iter().flatten() {
        if !ids.insert(s.id) {
            return Err(FormatError::Schema(format!("duplicate submodule id {}", s.id)));
        }
    }
    for s in doc.submodules.iter().flatten() {
        for g in &s.gates {
            if !netlist.contains_gate(GateId(*g)) {
                return Err(FormatError::Schema(format!(
                    "submodule {} references unknown gate id {g}",
                    s.id
                )));
            }
        }
        if let Some(p) = s.parent {
            if !ids.contains(&p) {
                return Err(FormatError::Schema(format!(
                    "submodule {} references unknown parent {p}",
                    s.id
                )));
            }
        }
        subs.push(Submodule {
            id: SubmoduleId(s.id),
            name: s.name.clone(),
            color: s.color,
            gate_ids: s.gates.iter().map(|g| GateId(*g)).collect(),
            parent: s.parent.map(SubmoduleId),
        });
    }
    let project = Project::from_parts(netlist, subs);
    for s in project.submodules.values() {
        let mut seen = BTreeSet::new();
        let mut cur = Some(s.id);
        while let Some(c) = cur {
            if !seen.insert(c) {
                return Err(FormatError::Schema(format!(
                    "submodule {} is part of a parent cycle",
                    s.id
                )));
            }
            cur = project.submodules.get(&c).and_then(|x| x.parent);
        }
    }
    Ok(project)
}

pub fn save_project(path: &Path, project: &Project) -> Result<(), FormatError> {
    std::fs::write(path, write_project(project)).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))
}

pub fn load_project(path: &Path) -> Result<Project, FormatError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))?;
    read_project(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const AND: &str = r#"{"format_version":1,"name":"and","inputs":["a","b"],"outputs":["c"],
        "gates":[{"id":1,"name":"g1","type":"LUT2","init":"8","pins":{"I0":"a","I1":"b","O":"c"}}]}"#;

    #[test]
    fn minimal_and() {
        let p = read_json_netlist(AND).unwrap();
        assert_eq!(p.netlist.gate_count(), 1);
        assert_eq!(p.netlist.net_count(), 3);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn schema_failures() {
        let dup = AND.replace(
            r#"}}]}"#,
            r#"}},{"id":1,"name":"g2","type":"INV","pins":{"I":"a","O":"d"}}]}"#,
        );
        assert_eq!(read_json_netlist(&dup).unwrap_err().code(), "SchemaError");
        let missing = AND.replace(r#""name":"and","#, "");
        assert_eq!(read_json_netlist(&missing).unwrap_err().code(), "SchemaError");
        let bad_type = AND.replace("LUT2", "LUT9");
        assert_eq!(read_json_netlist(&bad_type).unwrap_err().code(), "SchemaError");
        let bad_pin = AND.replace(r#""I1":"b""#, r#""I7":"b""#);
        assert_eq!(read_json_netlist(&bad_pin).unwrap_err().code(), "LinkError");
        let bad_init = AND.replace(r#""init":"8""#, r#""init":"123""#);
        assert_eq!(read_json_netlist(&bad_init).unwrap_err().code(), "MalformedInit");
        let v2 = AND.replace(r#""format_version":1"#, r#""format_version":2"#);
        assert_eq!(read_json_netlist(&v2).unwrap_err().code(), "VersionError");
        let two_drivers = AND.replace(
            r#"}}]}"#,
            r#"}},{"id":2,"name":"g2","type":"INV","pins":{"I":"a","O":"c"}}]}"#,
        );
        assert_eq!(read_json_netlist(&two_drivers).unwrap_err().code(), "LinkError");
    }

    #[test]
    fn canonical_and_stable() {
        let p = read_json_netlist(AND).unwrap();
        let a = write_json_netlist(&p.netlist);
        let b = write_json_netlist(&read_json_netlist(&a).unwrap().netlist);
        assert_eq!(a, b);
        assert!(!a.trim_end().contains(' '));
        assert_eq!(read_json_netlist(&a).unwrap().netlist, p.netlist);
    }

    #[test]
    fn empty_netlist() {
        let n = Netlist::new("empty");
        let s = write_json_netlist(&n);
        assert!(s.contains(r#""gates":[]"#));
        assert_eq!(read_json_netlist(&s).unwrap().netlist, n);
    }

    #[test]
    fn project_round_trip_and_errors() {
        let mut p = Project::new(read_json_netlist(AND).unwrap().netlist);
        let a = p.create_submodule("outer", None).unwrap();
        let b = p.create_submodule("inner", Some(Rgb(1, 2, 3))).unwrap();
        p.set_parent(b, Some(a)).unwrap();
        p.assign_gates(b, &[GateId(1)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save_project(&path, &p).unwrap();
        let back = load_project(&path).unwrap();
        assert_eq!(back.submodules, p.submodules);
        assert_eq!(back.digest(), p.digest());

        let text = write_project(&p);
        let v99 = text.replace(r#""format_version":1"#, r#""format_version":99"#);
        assert_eq!(read_project(&v99).unwrap_err(), FormatError::Version(99));
        let stale = text.replace(r#""gates":[1]"#, r#""gates":[1,77]"#);
        let err = read_project(&stale).unwrap_err();
        assert_eq!(err.code(), "SchemaError");
        assert!(err.to_string().contains("77"));
        assert_eq!(
            load_project(&dir.path().join("nope.json")).unwrap_err().code(),
            "IoError"
        );
    }
}
