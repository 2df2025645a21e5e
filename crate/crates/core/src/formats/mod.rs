//! File formats: the canonical JSON netlist/project documents and a
//! structural Verilog subset.

mod canonical;
mod json;
mod verilog;

use thiserror::Error;

use crate::model::lint::LintIssue;
use crate::model::{ModelError, Netlist};

pub use canonical::canonical_string;
pub use json::{
    load_project, netlist_to_value, project_digest, read_json_netlist, read_project, save_project,
    write_json_netlist, write_project, FORMAT_VERSION,
};
pub use verilog::{default_primitives, parse_structural_verilog, write_structural_verilog};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("link error: {0}")]
    Link(String),
    #[error("malformed INIT: {0}")]
    MalformedInit(String),
    #[error("unsupported format_version {0}")]
    Version(u64),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown primitive {0:?}")]
    UnknownPrimitive(String),
    #[error("primitive {primitive} has no port {port:?}")]
    UnknownPort { primitive: String, port: String },
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::Schema(_) => "SchemaError",
            FormatError::Link(_) => "LinkError",
            FormatError::MalformedInit(_) => "MalformedInit",
            FormatError::Version(_) => "VersionError",
            FormatError::Io(_) => "IoError",
            FormatError::Parse { .. } => "ParseError",
            FormatError::UnknownPrimitive(_) => "UnknownPrimitive",
            FormatError::UnknownPort { .. } => "UnknownPort",
        }
    }

    fn from_model(e: ModelError) -> Self {
        match e {
            ModelError::MalformedInit(m) => FormatError::MalformedInit(m),
            ModelError::DuplicateGateId(id) => FormatError::Schema(format!("duplicate gate id {id}")),
            other => FormatError::Link(other.to_string()),
        }
    }
}

/// A netlist plus the non-fatal findings made while reading it.
#[derive(Clone, Debug)]
pub struct Parsed {
    pub netlist: Netlist,
    pub warnings: Vec<LintIssue>,
}

/// Compares two netlists by names rather than net ids: same ports (in
/// order), clock, net names, and gates with equal id, name, type, INIT and
/// pin-to-net-name wiring.
pub fn structurally_equal(a: &Netlist, b: &Netlist) -> bool {
    let names = |n: &Netlist, ids: &[crate::model::NetId]| -> Vec<String> {
        ids.iter().map(|i| n.net_name(*i).to_string()).collect()
    };
    if a.name != b.name
        || names(a, a.inputs()) != names(b, b.inputs())
        || names(a, a.outputs()) != names(b, b.outputs())
        || a.clock().map(|c| a.net_name(c).to_string()) != b.clock().map(|c| b.net_name(c).to_string())
        || a.gate_count() != b.gate_count()
    {
        return false;
    }
    let mut an: Vec<&str> = a.nets().map(|n| n.name.as_str()).collect();
    let mut bn: Vec<&str> = b.nets().map(|n| n.name.as_str()).collect();
    an.sort_unstable();
    bn.sort_unstable();
    if an != bn {
        return false;
    }
    a.gates().zip(b.gates()).all(|(x, y)| {
        x.id == y.id
            && x.name == y.name
            && x.kind == y.kind
            && x.init == y.init
            && x.pins.len() == y.pins.len()
            && x.pins.iter().zip(y.pins.iter()).all(|((pa, na), (pb, nb))| {
                pa == pb && a.net_name(*na) == b.net_name(*nb)
            })
    })
}
