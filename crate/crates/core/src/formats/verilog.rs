//! Structural Verilog subset.
//!
//! Accepted: one `module` with a non-ANSI or ANSI port list, scalar
//! `input`/`output`/`wire` declarations, and primitive instantiations with
//! named port connections and an optional `#(.INIT(...))` parameter.
//! Attributes `(* id = N *)` on instances and `(* clock *)` on a declaration
//! carry gate ids and the clock net. Nets used before declaration are
//! created implicitly with a warning. Anything behavioral is rejected.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use super::{FormatError, Parsed};
use crate::model::lint::{lint_netlist, LintIssue, Severity};
use crate::model::{GateId, GateKind, NetId, Netlist, Pin};

pub fn default_primitives() -> HashMap<String, GateKind> {
    GateKind::all().into_iter().map(|k| (k.name(), k)).collect()
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Punct(&'static str),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const BEHAVIORAL: &[&str] = &[
    "always", "assign", "initial", "reg", "begin", "end", "if", "else", "case", "function", "task",
    "generate", "integer", "inout", "always_ff", "always_comb", "logic",
];

fn lex(text: &str) -> Result<Vec<Token>, FormatError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, m: &str| FormatError::Parse {
        line,
        column: col,
        message: m.to_string(),
    };
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c.is_whitespace() {
            bump!();
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            loop {
                if i + 1 >= chars.len() {
                    return Err(err(tl, tc, "unterminated block comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
        } else if c == '(' && chars.get(i + 1) == Some(&'*') && chars.get(i + 2) != Some(&')') {
            bump!();
            bump!();
            toks.push(Token { tok: Tok::Punct("(*"), line: tl, col: tc });
        } else if c == '*' && chars.get(i + 1) == Some(&')') {
            bump!();
            bump!();
            toks.push(Token { tok: Tok::Punct("*)"), line: tl, col: tc });
        } else if c == '\\' {
            bump!();
            let mut s = String::new();
            while i < chars.len() && !chars[i].is_whitespace() {
                s.push(chars[i]);
                bump!();
            }
            if s.is_empty() {
                return Err(err(tl, tc, "empty escaped identifier"));
            }
            toks.push(Token { tok: Tok::Ident(s), line: tl, col: tc });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                s.push(chars[i]);
                bump!();
            }
            toks.push(Token { tok: Tok::Ident(s), line: tl, col: tc });
        } else if c.is_ascii_digit() || c == '\'' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '\'' || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            toks.push(Token { tok: Tok::Number(s), line: tl, col: tc });
        } else {
            let p = match c {
                '(' => "(",
                ')' => ")",
                ',' => ",",
                ';' => ";",
                '.' => ".",
                '#' => "#",
                '=' => "=",
                '[' => "[",
                ']' => "]",
                ':' => ":",
                _ => return Err(err(tl, tc, &format!("unexpected character {c:?}"))),
            };
            bump!();
            toks.push(Token { tok: Tok::Punct(p), line: tl, col: tc });
        }
    }
    Ok(toks)
}

/// Parses a Verilog number literal (`4'h8`, `1'b0`, `'hff`, `12`).
fn parse_number(s: &str) -> Option<(Option<u32>, u64)> {
    let s: String = s.chars().filter(|c| *c != '_').collect();
    match s.split_once('\'') {
        None => s.parse().ok().map(|v| (None, v)),
        Some((w, rest)) => {
            let width = if w.is_empty() { None } else { Some(w.parse().ok()?) };
            let mut it = rest.chars();
            let radix = match it.next()?.to_ascii_lowercase() {
                'h' => 16,
                'b' => 2,
                'd' => 10,
                'o' => 8,
                _ => return None,
            };
            let digits: String = it.collect();
            if digits.is_empty() {
                return None;
            }
            u64::from_str_radix(&digits, radix).ok().map(|v| (width, v))
        }
    }
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    prims: &'a HashMap<String, GateKind>,
    netlist: Netlist,
    declared: HashMap<String, NetId>,
    warnings: Vec<LintIssue>,
    header_ports: Vec<String>,
    directions: HashMap<String, &'static str>,
    clock: Option<String>,
    pending_instances: Vec<Instance>,
}

struct Instance {
    id: Option<u32>,
    prim: String,
    kind: GateKind,
    name: String,
    init: Option<(u64, usize, usize)>,
    conns: Vec<(String, Option<String>, usize, usize)>,
    line: usize,
    col: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos).or(self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, FormatError> {
        let (line, column) = self.here();
        Err(FormatError::Parse {
            line,
            column,
            message: msg.into(),
        })
    }

    fn next(&mut self) -> Result<Tok, FormatError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.tok.clone())
            }
            None => self.fail("unexpected end of input"),
        }
    }

    fn expect(&mut self, p: &'static str) -> Result<(), FormatError> {
        match self.peek() {
            Some(Tok::Punct(q)) if *q == p => {
                self.pos += 1;
                Ok(())
            }
            other => {
                let found = format!("{other:?}");
                self.fail(format!("expected `{p}`, found {found}"))
            }
        }
    }

    fn eat(&mut self, p: &'static str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, FormatError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                if BEHAVIORAL.contains(&s.as_str()) {
                    return self.fail(format!("behavioral construct `{s}` is outside the structural subset"));
                }
                self.pos += 1;
                Ok(s)
            }
            other => {
                let found = format!("{other:?}");
                self.fail(format!("expected identifier, found {found}"))
            }
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn attributes(&mut self) -> Result<Vec<(String, Option<String>)>, FormatError> {
        let mut attrs = Vec::new();
        while self.eat("(*") {
            loop {
                let key = self.ident()?;
                let val = if self.eat("=") {
                    match self.next()? {
                        Tok::Number(n) | Tok::Ident(n) => Some(n),
                        _ => return self.fail("bad attribute value"),
                    }
                } else {
                    None
                };
                attrs.push((key, val));
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("*)")?;
        }
        Ok(attrs)
    }

    fn declare(&mut self, name: &str) -> Result<NetId, FormatError> {
        if let Some(id) = self.declared.get(name) {
            return Ok(*id);
        }
        let id = self.netlist.ensure_net(name);
        self.declared.insert(name.to_string(), id);
        Ok(id)
    }

    fn declaration(&mut self, dir: &'static str, attrs: &[(String, Option<String>)]) -> Result<(), FormatError> {
        self.pos += 1;
        if self.eat("[") {
            return self.fail("vector declarations are outside the structural subset");
        }
        loop {
            let name = self.ident()?;
            if attrs.iter().any(|(k, _)| k == "clock") {
                self.clock = Some(name.clone());
            }
            self.declare(&name)?;
            if dir != "wire" {
                if self.directions.insert(name.clone(), dir).is_some() {
                    return self.fail(format!("port {name:?} declared twice"));
                }
                if dir == "input" {
                    self.netlist
                        .add_input(&name)
                        .map_err(|e| FormatError::Link(e.to_string()))?;
                } else {
                    self.netlist.add_output(&name);
                }
            }
            if !self.eat(",") {
                break;
            }
            if self.keyword("input") || self.keyword("output") || self.keyword("wire") {
                // ANSI list continues with a new direction.
                self.pos -= 1;
                break;
            }
        }
        Ok(())
    }

    fn module(&mut self) -> Result<(), FormatError> {
        if !self.keyword("module") {
            return self.fail("expected `module`");
        }
        self.pos += 1;
        self.netlist.name = self.ident()?;
        if self.eat("(") && !self.eat(")") {
            if self.keyword("input") || self.keyword("output") || self.keyword("wire") {
                loop {
                    let dir = match self.peek() {
                        Some(Tok::Ident(s)) if s == "input" => "input",
                        Some(Tok::Ident(s)) if s == "output" => "output",
                        Some(Tok::Ident(s)) if s == "wire" => "wire",
                        _ => return self.fail("expected port direction"),
                    };
                    self.declaration(dir, &[])?;
                    if !self.eat(",") {
                        break;
                    }
                }
            } else {
                loop {
                    let name = self.ident()?;
                    self.header_ports.push(name);
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect(")")?;
        }
        self.expect(";")?;
        loop {
            if self.keyword("endmodule") {
                self.pos += 1;
                break;
            }
            if self.peek().is_none() {
                return self.fail("missing `endmodule`");
            }
            let attrs = self.attributes()?;
            match self.peek() {
                Some(Tok::Ident(s)) if s == "input" => {
                    self.declaration("input", &attrs)?;
                    self.expect(";")?;
                }
                Some(Tok::Ident(s)) if s == "output" => {
                    self.declaration("output", &attrs)?;
                    self.expect(";")?;
                }
                Some(Tok::Ident(s)) if s == "wire" => {
                    self.declaration("wire", &attrs)?;
                    self.expect(";")?;
                }
                Some(Tok::Ident(_)) => self.instance(&attrs)?,
                _ => return self.fail("expected declaration or instance"),
            }
        }
        if self.peek().is_some() {
            return self.fail("only one module is supported");
        }
        for p in &self.header_ports {
            if !self.directions.contains_key(p) {
                return self.fail(format!("port {p:?} has no direction declaration"));
            }
        }
        Ok(())
    }

    fn instance(&mut self, attrs: &[(String, Option<String>)]) -> Result<(), FormatError> {
        let (line, col) = self.here();
        let prim = self.ident()?;
        let kind = *self
            .prims
            .get(&prim)
            .ok_or_else(|| FormatError::UnknownPrimitive(prim.clone()))?;
        let mut init = None;
        if self.eat("#") {
            self.expect("(")?;
            loop {
                self.expect(".")?;
                let (pl, pc) = self.here();
                let pname = self.ident()?;
                if pname != "INIT" {
                    return self.fail(format!("unsupported parameter {pname:?}"));
                }
                self.expect("(")?;
                let lit = match self.next()? {
                    Tok::Number(n) => n,
                    _ => return self.fail("expected number literal"),
                };
                let (width, value) = parse_number(&lit).ok_or_else(|| FormatError::Parse {
                    line: pl,
                    column: pc,
                    message: format!("bad number literal {lit:?}"),
                })?;
                if let (Some(w), Some(bits)) = (width, kind.init_bits()) {
                    if w as usize != bits {
                        return Err(FormatError::MalformedInit(format!(
                            "{prim} INIT must be {bits} bits wide, literal is {w}"
                        )));
                    }
                }
                init = Some((value, pl, pc));
                self.expect(")")?;
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(")")?;
        }
        let name = self.ident()?;
        self.expect("(")?;
        let mut conns = Vec::new();
        if !self.eat(")") {
            loop {
                self.expect(".")?;
                let (pl, pc) = self.here();
                let port = self.ident()?;
                self.expect("(")?;
                let net = if self.eat(")") {
                    None
                } else {
                    let n = self.ident()?;
                    if self.eat("[") {
                        return self.fail("bit selects are outside the structural subset");
                    }
                    self.expect(")")?;
                    Some(n)
                };
                conns.push((port, net, pl, pc));
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(")")?;
        }
        self.expect(";")?;
        let id = match attrs.iter().find(|(k, _)| k == "id") {
            Some((_, Some(v))) => Some(
                v.parse()
                    .map_err(|_| FormatError::Parse { line, column: col, message: format!("bad id {v:?}") })?,
            ),
            Some(_) => return Err(FormatError::Parse { line, column: col, message: "id attribute needs a value".into() }),
            None => None,
        };
        self.pending_instances.push(Instance {
            id,
            prim,
            kind,
            name,
            init,
            conns,
            line,
            col,
        });
        Ok(())
    }

    fn elaborate(&mut self) -> Result<(), FormatError> {
        let instances = std::mem::take(&mut self.pending_instances);
        let mut next_id = 1u32;
        for inst in instances {
            let mut pins = BTreeMap::new();
            for (port, net, pl, pc) in &inst.conns {
                let pin = Pin::parse(port)
                    .filter(|p| inst.kind.accepts_pin(*p))
                    .ok_or_else(|| FormatError::UnknownPort {
                        primitive: inst.prim.clone(),
                        port: port.clone(),
                    })?;
                let Some(net) = net else { continue };
                let id = match self.declared.get(net) {
                    Some(id) => *id,
                    None => {
                        self.warnings.push(LintIssue {
                            severity: Severity::Warning,
                            code: "implicit-wire",
                            message: format!("net {net:?} used at {pl}:{pc} without declaration"),
                        });
                        self.declare(net)?
                    }
                };
                if pins.insert(pin, id).is_some() {
                    return Err(FormatError::Parse {
                        line: *pl,
                        column: *pc,
                        message: format!("port {port} connected twice"),
                    });
                }
            }
            let init = match inst.init {
                Some((v, pl, pc)) => {
                    if inst.kind.init_bits().is_none() {
                        return Err(FormatError::Parse {
                            line: pl,
                            column: pc,
                            message: format!("{} takes no INIT", inst.prim),
                        });
                    }
                    Some(v)
                }
                None => None,
            };
            let id = GateId(inst.id.unwrap_or(next_id));
            next_id = next_id.max(id.0) + 1;
            self.netlist
                .insert_gate(id, inst.name.clone(), inst.kind, init, pins)
                .map_err(|e| match e {
                    crate::model::ModelError::MalformedInit(m) => FormatError::MalformedInit(m),
                    other => FormatError::Parse {
                        line: inst.line,
                        column: inst.col,
                        message: other.to_string(),
                    },
                })?;
        }
        if self.clock.is_none() {
            let clocks: std::collections::BTreeSet<NetId> = self
                .netlist
                .flip_flops()
                .filter_map(|g| g.input_net(Pin::Clk))
                .collect();
            if clocks.len() == 1 {
                self.netlist.set_clock(clocks.into_iter().next());
            }
        } else {
            let id = self.declared[self.clock.as_ref().unwrap()];
            self.netlist.set_clock(Some(id));
        }
        Ok(())
    }
}

pub fn parse_structural_verilog(
    text: &str,
    primitives: &HashMap<String, GateKind>,
) -> Result<Parsed, FormatError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        prims: primitives,
        netlist: Netlist::new(""),
        declared: HashMap::new(),
        warnings: Vec::new(),
        header_ports: Vec::new(),
        directions: HashMap::new(),
        clock: None,
        pending_instances: Vec::new(),
    };
    p.module()?;
    p.elaborate()?;
    let mut warnings = p.warnings;
    let issues = lint_netlist(&p.netlist);
    if let Some(e) = issues.iter().find(|i| i.severity == Severity::Error) {
        return Err(FormatError::Link(e.message.clone()));
    }
    warnings.extend(issues);
    Ok(Parsed {
        netlist: p.netlist,
        warnings,
    })
}

fn ident(name: &str) -> String {
    let simple = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
        && !BEHAVIORAL.contains(&name)
        && !["module", "endmodule", "input", "output", "wire"].contains(&name);
    if simple {
        name.to_string()
    } else {
        format!("\\{name} ")
    }
}

/// Emits the netlist in the subset above. Every gate carries its id
/// attribute so ids survive the round trip.
pub fn write_structural_verilog(n: &Netlist) -> String {
    let mut s = String::new();
    let ports: Vec<String> = n
        .inputs()
        .iter()
        .chain(n.outputs())
        .map(|p| ident(n.net_name(*p)))
        .collect();
    let _ = writeln!(s, "module {} ({});", ident(&n.name), ports.join(", "));
    let clock_attr = |id: NetId| if Some(id) == n.clock() { "(* clock *) " } else { "" };
    for i in n.inputs() {
        let _ = writeln!(s, "  {}input {};", clock_attr(*i), ident(n.net_name(*i)));
    }
    for o in n.outputs() {
        if n.inputs().contains(o) {
            continue;
        }
        let _ = writeln!(s, "  {}output {};", clock_attr(*o), ident(n.net_name(*o)));
    }
    for net in n.nets() {
        if n.inputs().contains(&net.id) || n.outputs().contains(&net.id) {
            continue;
        }
        let _ = writeln!(s, "  {}wire {};", clock_attr(net.id), ident(&net.name));
    }
    for g in n.gates() {
        let _ = write!(s, "  (* id = {} *) {}", g.id, g.kind.name());
        if let (Some(v), Some(bits)) = (g.init, g.kind.init_bits()) {
            let digits = bits.div_ceil(4);
            let _ = write!(s, " #(.INIT({bits}'h{v:0digits$x}))");
        }
        let conns: Vec<String> = g
            .pins
            .iter()
            .map(|(p, net)| format!(".{p}({})", ident(n.net_name(*net))))
            .collect();
        let _ = writeln!(s, " {} ({});", ident(&g.name), conns.join(", "));
    }
    s.push_str("endmodule\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::structurally_equal;

    fn parse(text: &str) -> Result<Parsed, FormatError> {
        parse_structural_verilog(text, &default_primitives())
    }

    #[test]
    fn and_gate() {
        let p = parse(
            "module top (a, b, c);\n  input a, b;\n  output c;\n  LUT2 #(.INIT(4'h8)) g1 (.I0(a), .I1(b), .O(c));\nendmodule\n",
        )
        .unwrap();
        let g = p.netlist.gate(GateId(1)).unwrap();
        assert_eq!(g.kind, GateKind::Lut(2));
        assert_eq!(g.init, Some(8));
        assert_eq!(p.netlist.net_count(), 3);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn behavioral_rejected() {
        let err = parse("module top (a);\n  input a;\n  always @(posedge a) x <= a;\nendmodule\n").unwrap_err();
        match err {
            FormatError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn implicit_wire_warns() {
        let p = parse("module top (a, c);\n input a;\n output c;\n INV i0 (.I(a), .O(t));\n BUF b0 (.I(t), .O(c));\nendmodule").unwrap();
        assert!(p.netlist.net_by_name("t").is_some());
        assert_eq!(p.warnings.iter().filter(|w| w.code == "implicit-wire").count(), 1);
    }

    #[test]
    fn unknown_primitive_and_port() {
        let e = parse("module t (a); input a; AND2 x (.A(a)); endmodule").unwrap_err();
        assert_eq!(e, FormatError::UnknownPrimitive("AND2".into()));
        let e = parse("module t (a); input a; BUF x (.I0(a), .O(b)); endmodule").unwrap_err();
        assert_eq!(e.code(), "UnknownPort");
    }

    #[test]
    fn dangling_declared_wire_kept() {
        let p = parse("module t (a, o);\n input a;\n output o;\n wire spare;\n BUF b (.I(a), .O(o));\nendmodule").unwrap();
        assert!(p.netlist.net_by_name("spare").is_some());
        assert!(p.warnings.iter().any(|w| w.code == "dangling"));
    }

    #[test]
    fn ansi_ports_and_escapes() {
        let p = parse("module t (input a, output \\o[0] );\n INV n (.I(a), .O(\\o[0] ));\nendmodule").unwrap();
        assert_eq!(p.netlist.net_name(p.netlist.outputs()[0]), "o[0]");
        let again = parse(&write_structural_verilog(&p.netlist)).unwrap();
        assert!(structurally_equal(&p.netlist, &again.netlist));
    }

    #[test]
    fn number_literals() {
        assert_eq!(parse_number("4'h8"), Some((Some(4), 8)));
        assert_eq!(parse_number("1'b1"), Some((Some(1), 1)));
        assert_eq!(parse_number("64'hFFFF_0000_FFFF_0000"), Some((Some(64), 0xFFFF0000FFFF0000)));
        assert_eq!(parse_number("'d12"), Some((None, 12)));
        assert_eq!(parse_number("4'x1"), None);
    }

    #[test]
    fn wrong_init_width() {
        let e = parse("module t (a, o); input a; output o; LUT1 #(.INIT(4'h1)) l (.I0(a), .O(o)); endmodule").unwrap_err();
        assert_eq!(e.code(), "MalformedInit");
    }
}
