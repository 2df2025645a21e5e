//! Truth-table Boolean functions over netlist nets.
//!
//! A [`BooleanFunction`] is a complete table over an ordered, duplicate-free
//! variable list, capped at [`MAX_VARS`] variables. Bit `i` of the table is
//! the output when variable `j` takes bit `j` of `i` (variable 0 is least
//! significant), which is exactly the LUT INIT encoding with `I0` as the
//! least significant input.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use thiserror::Error;

use crate::model::{parse_init, GateId, GateKind, ModelError, NetId, Netlist, Pin};

pub const MAX_VARS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("malformed INIT: {0}")]
    MalformedInit(String),
    #[error("expected {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("no value assigned to net {0}")]
    MissingAssignment(NetId),
    #[error("support of {0} variables exceeds the cap of {MAX_VARS}")]
    SupportOverflow(usize),
    #[error("net {0} is not a variable of the function")]
    UnknownVariable(NetId),
    #[error("variable mapping mismatch: {0}")]
    MappingMismatch(String),
    #[error("combinational cycle through gates {0:?}")]
    CombinationalCycle(Vec<GateId>),
}

impl LogicError {
    pub fn code(&self) -> &'static str {
        match self {
            LogicError::MalformedInit(_) => "MalformedInit",
            LogicError::ArityMismatch { .. } => "ArityMismatch",
            LogicError::MissingAssignment(_) => "MissingAssignment",
            LogicError::SupportOverflow(_) => "SupportOverflow",
            LogicError::UnknownVariable(_) => "UnknownVariable",
            LogicError::MappingMismatch(_) => "MappingMismatch",
            LogicError::CombinationalCycle(_) => "CombinationalCycle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BooleanFunction {
    vars: Vec<NetId>,
    /// Packed table, `max(1, 2^n / 64)` words, unused high bits zero.
    table: Vec<u64>,
}

fn words_for(n: usize) -> usize {
    if n <= 6 {
        1
    } else {
        1 << (n - 6)
    }
}

fn mask_for(n: usize) -> u64 {
    if n >= 6 {
        u64::MAX
    } else {
        (1u64 << (1 << n)) - 1
    }
}

/// Evaluates a k-input table bitwise over 64 lanes at once.
fn lut_lanes(table: u64, k: usize, inputs: &[u64]) -> u64 {
    if k == 0 {
        return if table & 1 == 1 { u64::MAX } else { 0 };
    }
    let half = 1usize << (k - 1);
    let lo_mask = if half >= 64 { u64::MAX } else { (1u64 << half) - 1 };
    let lo = lut_lanes(table & lo_mask, k - 1, inputs);
    let hi = lut_lanes(if half >= 64 { 0 } else { table >> half }, k - 1, inputs);
    let x = inputs[k - 1];
    (x & hi) | (!x & lo)
}

/// Lane pattern of variable `j` within a single 64-bit word (j < 6).
const VAR_LANES: [u64; 6] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0xCCCC_CCCC_CCCC_CCCC,
    0xF0F0_F0F0_F0F0_F0F0,
    0xFF00_FF00_FF00_FF00,
    0xFFFF_0000_FFFF_0000,
    0xFFFF_FFFF_0000_0000,
];

impl BooleanFunction {
    /// Builds a function by evaluating `f` at every index.
    pub fn from_fn(vars: Vec<NetId>, f: impl Fn(usize) -> bool) -> Result<Self, LogicError> {
        let n = vars.len();
        if n > MAX_VARS {
            return Err(LogicError::SupportOverflow(n));
        }
        let mut table = vec![0u64; words_for(n)];
        for idx in 0..(1usize << n) {
            if f(idx) {
                table[idx >> 6] |= 1 << (idx & 63);
            }
        }
        let f = BooleanFunction { vars, table };
        Ok(f.dedup_vars())
    }

    /// Builds a function of at most six variables from a packed table.
    pub fn from_small_table(vars: Vec<NetId>, bits: u64) -> Result<Self, LogicError> {
        let n = vars.len();
        if n > 6 {
            return Err(LogicError::ArityMismatch { expected: 6, got: n });
        }
        Ok(BooleanFunction {
            vars,
            table: vec![bits & mask_for(n)],
        }
        .dedup_vars())
    }

    pub fn constant(value: bool) -> Self {
        BooleanFunction {
            vars: vec![],
            table: vec![value as u64],
        }
    }

    pub fn variable(net: NetId) -> Self {
        BooleanFunction {
            vars: vec![net],
            table: vec![0b10],
        }
    }

    /// Function of a LUT with `k` inputs wired to `inputs` (I0 first).
    pub fn from_lut_init(k: u8, init: &str, inputs: &[NetId]) -> Result<Self, LogicError> {
        let kind = GateKind::lut(k).map_err(|e| LogicError::MalformedInit(e.to_string()))?;
        let bits = parse_init(kind, init).map_err(|e| LogicError::MalformedInit(e.to_string()))?;
        if inputs.len() != k as usize {
            return Err(LogicError::ArityMismatch {
                expected: k as usize,
                got: inputs.len(),
            });
        }
        Self::from_small_table(inputs.to_vec(), bits)
    }

    /// Merges repeated variables by restricting the table to the diagonal.
    fn dedup_vars(self) -> Self {
        let mut seen = BTreeSet::new();
        if self.vars.iter().all(|v| seen.insert(*v)) {
            return self;
        }
        let mut uniq: Vec<NetId> = Vec::new();
        for v in &self.vars {
            if !uniq.contains(v) {
                uniq.push(*v);
            }
        }
        let pos: Vec<usize> = self
            .vars
            .iter()
            .map(|v| uniq.iter().position(|u| u == v).unwrap())
            .collect();
        let src = &self;
        Self::from_fn(uniq.clone(), |idx| {
            let mut old = 0usize;
            for (j, p) in pos.iter().enumerate() {
                old |= ((idx >> p) & 1) << j;
            }
            src.bit(old)
        })
        .expect("fewer variables than before")
    }

    pub fn vars(&self) -> &[NetId] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn bit(&self, idx: usize) -> bool {
        (self.table[idx >> 6] >> (idx & 63)) & 1 == 1
    }

    pub fn count_ones(&self) -> u64 {
        self.table.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_constant(&self) -> Option<bool> {
        let n = self.num_vars();
        let mask = mask_for(n);
        if self.table.iter().all(|w| *w == 0) {
            Some(false)
        } else if self.table.iter().all(|w| *w == mask) {
            Some(true)
        } else {
            None
        }
    }

    /// Table as a packed u64 when the function has at most six variables.
    pub fn small_table(&self) -> Option<u64> {
        (self.num_vars() <= 6).then(|| self.table[0])
    }

    pub fn evaluate(&self, assignment: &HashMap<NetId, bool>) -> Result<bool, LogicError> {
        let mut idx = 0usize;
        for (j, v) in self.vars.iter().enumerate() {
            let b = assignment
                .get(v)
                .ok_or(LogicError::MissingAssignment(*v))?;
            idx |= (*b as usize) << j;
        }
        Ok(self.bit(idx))
    }

    /// True iff flipping variable `j` changes the output somewhere.
    fn depends_on(&self, j: usize) -> bool {
        let n = self.num_vars();
        if j < 6 {
            let lanes = VAR_LANES[j];
            let shift = 1u32 << j;
            let mask = mask_for(n);
            self.table
                .iter()
                .any(|w| ((w & lanes) >> shift) ^ (w & !lanes) & mask != 0)
        } else {
            let stride = 1usize << (j - 6);
            (0..self.table.len())
                .filter(|w| w & stride == 0)
                .any(|w| self.table[w] != self.table[w | stride])
        }
    }

    /// Variables the function truly depends on.
    pub fn support(&self) -> BTreeSet<NetId> {
        (0..self.num_vars())
            .filter(|j| self.depends_on(*j))
            .map(|j| self.vars[j])
            .collect()
    }

    /// Re-expresses the function over `target`, which must contain every
    /// variable of the true support. Extra target variables are dummies.
    pub fn expand_to(&self, target: &[NetId]) -> Result<Self, LogicError> {
        if target.len() > MAX_VARS {
            return Err(LogicError::SupportOverflow(target.len()));
        }
        let mut pos = Vec::with_capacity(self.vars.len());
        for (j, v) in self.vars.iter().enumerate() {
            match target.iter().position(|t| t == v) {
                Some(p) => pos.push(Some(p)),
                None if !self.depends_on(j) => pos.push(None),
                None => return Err(LogicError::UnknownVariable(*v)),
            }
        }
        Self::from_fn(target.to_vec(), |idx| {
            let mut old = 0usize;
            for (j, p) in pos.iter().enumerate() {
                if let Some(p) = p {
                    old |= ((idx >> p) & 1) << j;
                }
            }
            self.bit(old)
        })
    }

    /// Drops variables outside the true support, keeping relative order.
    pub fn reduced(&self) -> Self {
        let keep: Vec<NetId> = (0..self.num_vars())
            .filter(|j| self.depends_on(*j))
            .map(|j| self.vars[j])
            .collect();
        if keep.len() == self.vars.len() {
            return self.clone();
        }
        self.expand_to(&keep).expect("support is kept")
    }

    /// Support-reduced with variables in ascending net id order.
    pub fn canonical(&self) -> Self {
        let mut keep: Vec<NetId> = self.support().into_iter().collect();
        keep.sort();
        self.expand_to(&keep).expect("support is kept")
    }

    /// Restriction `f|v=value`, over the remaining variables.
    pub fn cofactor(&self, v: NetId, value: bool) -> Result<Self, LogicError> {
        let vpos = self
            .vars
            .iter()
            .position(|x| *x == v)
            .ok_or(LogicError::UnknownVariable(v))?;
        let vars: Vec<NetId> = self.vars.iter().copied().filter(|x| *x != v).collect();
        let low_mask = (1usize << vpos) - 1;
        Self::from_fn(vars, |idx| {
            let old = (idx & low_mask) | ((value as usize) << vpos) | ((idx & !low_mask) << 1);
            self.bit(old)
        })
    }

    /// Substitutes `g` for variable `v`. The result's variables are `self`'s
    /// variables without `v`, followed by `g`'s variables not already
    /// present, in `g`'s order.
    pub fn compose(&self, v: NetId, g: &BooleanFunction) -> Result<Self, LogicError> {
        let vpos = self
            .vars
            .iter()
            .position(|x| *x == v)
            .ok_or(LogicError::UnknownVariable(v))?;
        let mut vars: Vec<NetId> = self.vars.iter().copied().filter(|x| *x != v).collect();
        for gv in &g.vars {
            if !vars.contains(gv) {
                vars.push(*gv);
            }
        }
        if vars.len() > MAX_VARS {
            return Err(LogicError::SupportOverflow(vars.len()));
        }
        let f_pos: Vec<Option<usize>> = self
            .vars
            .iter()
            .map(|x| if *x == v { None } else { vars.iter().position(|y| y == x) })
            .collect();
        let g_pos: Vec<usize> = g
            .vars
            .iter()
            .map(|x| vars.iter().position(|y| y == x).unwrap())
            .collect();
        Self::from_fn(vars, |idx| {
            let mut gi = 0usize;
            for (j, p) in g_pos.iter().enumerate() {
                gi |= ((idx >> p) & 1) << j;
            }
            let gv = g.bit(gi) as usize;
            let mut fi = 0usize;
            for (j, p) in f_pos.iter().enumerate() {
                let b = match p {
                    Some(p) => (idx >> p) & 1,
                    None => {
                        debug_assert_eq!(j, vpos);
                        gv
                    }
                };
                fi |= b << j;
            }
            self.bit(fi)
        })
    }

    /// Applies a gate table with `k` inputs to input functions, producing a
    /// function over the union of their supports (ascending net ids).
    pub fn apply_table(table: u64, inputs: &[&BooleanFunction]) -> Result<Self, LogicError> {
        let k = inputs.len();
        let mut union: BTreeSet<NetId> = BTreeSet::new();
        for f in inputs {
            union.extend(f.support());
        }
        if union.len() > MAX_VARS {
            return Err(LogicError::SupportOverflow(union.len()));
        }
        let vars: Vec<NetId> = union.into_iter().collect();
        let expanded: Vec<BooleanFunction> = inputs
            .iter()
            .map(|f| f.expand_to(&vars))
            .collect::<Result<_, _>>()?;
        let n = vars.len();
        let mask = mask_for(n);
        let mut out = vec![0u64; words_for(n)];
        let mut lanes = vec![0u64; k];
        for (w, slot) in out.iter_mut().enumerate() {
            for (j, e) in expanded.iter().enumerate() {
                lanes[j] = e.table[w];
            }
            *slot = lut_lanes(table, k, &lanes) & mask;
        }
        Ok(BooleanFunction { vars, table: out }.reduced())
    }

    /// Renames variables through `map`; unmapped variables keep their id.
    pub fn rename(&self, map: &BTreeMap<NetId, NetId>) -> Result<Self, LogicError> {
        let vars: Vec<NetId> = self
            .vars
            .iter()
            .map(|v| map.get(v).copied().unwrap_or(*v))
            .collect();
        let mut seen = BTreeSet::new();
        if !vars.iter().all(|v| seen.insert(*v)) {
            return Err(LogicError::MappingMismatch("renaming merges variables".into()));
        }
        Ok(BooleanFunction {
            vars,
            table: self.table.clone(),
        })
    }

    /// Sum-of-products text using `name` for each variable.
    pub fn to_sop(&self, name: impl Fn(NetId) -> String) -> String {
        if let Some(c) = self.is_constant() {
            return if c { "1".into() } else { "0".into() };
        }
        let f = self.reduced();
        let names: Vec<String> = f.vars.iter().map(|v| name(*v)).collect();
        let mut terms = Vec::new();
        for idx in 0..(1usize << f.num_vars()) {
            if !f.bit(idx) {
                continue;
            }
            let mut t = String::new();
            for (j, n) in names.iter().enumerate() {
                if j > 0 {
                    t.push('&');
                }
                if (idx >> j) & 1 == 0 {
                    t.push('!');
                }
                let _ = write!(t, "{n}");
            }
            terms.push(t);
        }
        terms.join(" | ")
    }
}

/// Pointwise comparison. Without a mapping, variables are matched by net id
/// after support reduction; with one, `mapping` must be a bijection from
/// `f`'s true support onto `g`'s.
pub fn equivalent(
    f: &BooleanFunction,
    g: &BooleanFunction,
    mapping: Option<&BTreeMap<NetId, NetId>>,
) -> Result<bool, LogicError> {
    let fs = f.support();
    let gs = g.support();
    let f = match mapping {
        Some(m) => {
            let keys: BTreeSet<NetId> = m.keys().copied().collect();
            let vals: BTreeSet<NetId> = m.values().copied().collect();
            if keys != fs || vals != gs || vals.len() != keys.len() {
                return Err(LogicError::MappingMismatch(format!(
                    "mapping {:?} is not a bijection between supports {:?} and {:?}",
                    m, fs, gs
                )));
            }
            f.reduced().rename(m)?
        }
        None => {
            if fs != gs {
                return Ok(false);
            }
            f.reduced()
        }
    };
    let order: Vec<NetId> = gs.into_iter().collect();
    Ok(f.expand_to(&order)? == g.expand_to(&order)?)
}

/// Truth table of a combinational gate over its input pins, in the order
/// returned by [`gate_inputs`].
pub fn gate_table(kind: GateKind, init: Option<u64>) -> u64 {
    match kind {
        GateKind::Lut(_) => init.unwrap_or(0),
        // inputs I0, I1, S: S ? I1 : I0
        GateKind::Mux2 => 0xCA,
        GateKind::Buf => 0b10,
        GateKind::Inv => 0b01,
        GateKind::Vcc => 1,
        GateKind::Gnd => 0,
        GateKind::Ff => 0b10,
    }
}

pub fn gate_inputs(kind: GateKind) -> Vec<Pin> {
    match kind {
        GateKind::Ff => vec![Pin::D],
        other => other.input_pins(),
    }
}

/// Default cut set: flip-flop outputs and primary inputs.
pub fn default_boundary(n: &Netlist) -> BTreeSet<NetId> {
    let mut b: BTreeSet<NetId> = n.inputs().iter().copied().collect();
    b.extend(n.flip_flops().map(|g| g.output_net()));
    b
}

enum Mark {
    Active,
    Done,
}

/// Memoizing evaluator of net functions over one netlist snapshot.
///
/// Nets in the boundary, primary inputs and flip-flop outputs are free
/// variables. Undriven nets and floating LUT inputs are constant 0.
pub struct ConeFunctions<'a> {
    netlist: &'a Netlist,
    boundary: BTreeSet<NetId>,
    memo: HashMap<NetId, BooleanFunction>,
}

impl<'a> ConeFunctions<'a> {
    pub fn new(netlist: &'a Netlist, boundary: Option<BTreeSet<NetId>>) -> Self {
        ConeFunctions {
            netlist,
            boundary: boundary.unwrap_or_else(|| default_boundary(netlist)),
            memo: HashMap::new(),
        }
    }

    fn is_free(&self, net: NetId) -> bool {
        if self.boundary.contains(&net) {
            return true;
        }
        match self.netlist.driver_gate(net) {
            None => self.netlist.inputs().contains(&net),
            Some(g) => g.kind.is_sequential(),
        }
    }

    pub fn get(&mut self, net: NetId) -> Result<BooleanFunction, LogicError> {
        if let Some(f) = self.memo.get(&net) {
            return Ok(f.clone());
        }
        let n = self.netlist;
        let mut marks: HashMap<NetId, Mark> = HashMap::new();
        // (net, expanded) frames; expanded means inputs are already pushed.
        let mut stack: Vec<(NetId, bool)> = vec![(net, false)];
        while let Some((cur, expanded)) = stack.pop() {
            if self.memo.contains_key(&cur) {
                continue;
            }
            if self.is_free(cur) {
                self.memo.insert(cur, BooleanFunction::variable(cur));
                continue;
            }
            let Some(gate) = n.driver_gate(cur) else {
                self.memo.insert(cur, BooleanFunction::constant(false));
                continue;
            };
            let pins = gate_inputs(gate.kind);
            if !expanded {
                if let Some(Mark::Active) = marks.get(&cur) {
                    let mut cycle: Vec<GateId> = stack
                        .iter()
                        .filter(|(_, e)| *e)
                        .filter_map(|(x, _)| n.net(*x).driver_gate())
                        .collect();
                    cycle.push(gate.id);
                    cycle.sort();
                    cycle.dedup();
                    return Err(LogicError::CombinationalCycle(cycle));
                }
                marks.insert(cur, Mark::Active);
                stack.push((cur, true));
                for p in &pins {
                    if let Some(inp) = gate.input_net(*p) {
                        if !self.memo.contains_key(&inp) {
                            if let Some(Mark::Active) = marks.get(&inp) {
                                let mut cycle: Vec<GateId> = stack
                                    .iter()
                                    .filter(|(_, e)| *e)
                                    .filter_map(|(x, _)| n.net(*x).driver_gate())
                                    .collect();
                                cycle.sort();
                                cycle.dedup();
                                return Err(LogicError::CombinationalCycle(cycle));
                            }
                            stack.push((inp, false));
                        }
                    }
                }
                continue;
            }
            let zero = BooleanFunction::constant(false);
            let inputs: Vec<BooleanFunction> = pins
                .iter()
                .map(|p| match gate.input_net(*p) {
                    Some(inp) => self.memo[&inp].clone(),
                    None => zero.clone(),
                })
                .collect();
            let refs: Vec<&BooleanFunction> = inputs.iter().collect();
            let f = BooleanFunction::apply_table(gate_table(gate.kind, gate.init), &refs)?;
            marks.insert(cur, Mark::Done);
            self.memo.insert(cur, f);
        }
        Ok(self.memo[&net].clone())
    }
}

/// Function of `net` over the boundary nets, variables ascending by id.
pub fn net_function(
    netlist: &Netlist,
    net: NetId,
    boundary: Option<BTreeSet<NetId>>,
) -> Result<BooleanFunction, LogicError> {
    ConeFunctions::new(netlist, boundary).get(net)
}

/// Boundary nets structurally reachable backwards from `net`, giving up
/// (returning `None`) once more than `cap` are found.
pub fn structural_support(
    netlist: &Netlist,
    net: NetId,
    boundary: &BTreeSet<NetId>,
    cap: usize,
) -> Option<BTreeSet<NetId>> {
    let mut seen = BTreeSet::new();
    let mut leaves = BTreeSet::new();
    let mut stack = vec![net];
    while let Some(cur) = stack.pop() {
        if !seen.insert(cur) {
            continue;
        }
        let driver = netlist.driver_gate(cur);
        let free = boundary.contains(&cur)
            || match driver {
                None => netlist.inputs().contains(&cur),
                Some(g) => g.kind.is_sequential(),
            };
        if free {
            leaves.insert(cur);
            if leaves.len() > cap {
                return None;
            }
            continue;
        }
        if let Some(g) = driver {
            for p in gate_inputs(g.kind) {
                if let Some(i) = g.input_net(p) {
                    stack.push(i);
                }
            }
        }
    }
    Some(leaves)
}

/// Maps functions onto LUT networks: supports of at most six variables
/// become one LUT, wider ones are split on their last variable into a MUX2
/// of the two cofactors. Identical subfunctions are emitted once.
pub struct LutMapper {
    prefix: String,
    memo: HashMap<BooleanFunction, NetId>,
    next: usize,
}

impl LutMapper {
    pub fn new(prefix: &str) -> Self {
        LutMapper {
            prefix: prefix.to_string(),
            memo: HashMap::new(),
            next: 0,
        }
    }

    fn net(&mut self, n: &mut Netlist) -> NetId {
        self.next += 1;
        n.fresh_net(&format!("{}t{}", self.prefix, self.next))
    }

    /// Returns a net computing `f`; a plain variable is returned as is.
    pub fn emit(&mut self, n: &mut Netlist, f: &BooleanFunction) -> Result<NetId, ModelError> {
        let f = f.canonical();
        if let Some(net) = self.memo.get(&f) {
            return Ok(*net);
        }
        let net = if let Some(c) = f.is_constant() {
            let out = self.net(n);
            let kind = if c { GateKind::Vcc } else { GateKind::Gnd };
            let name = format!("{}{}", self.prefix, if c { "vcc" } else { "gnd" });
            n.add_gate_raw(name, kind, None, [(Pin::O, out)].into())?;
            out
        } else if f.num_vars() == 1 && f.small_table() == Some(0b10) {
            f.vars()[0]
        } else if f.num_vars() <= 6 {
            let out = self.net(n);
            let mut pins: BTreeMap<Pin, NetId> = f
                .vars()
                .iter()
                .enumerate()
                .map(|(j, v)| (Pin::In(j as u8), *v))
                .collect();
            pins.insert(Pin::O, out);
            let name = format!("{}lut{}", self.prefix, self.next);
            n.add_gate_raw(name, GateKind::Lut(f.num_vars() as u8), f.small_table(), pins)?;
            out
        } else {
            let x = *f.vars().last().expect("nonconstant");
            let lo = self.emit(n, &f.cofactor(x, false).expect("x is a variable"))?;
            let hi = self.emit(n, &f.cofactor(x, true).expect("x is a variable"))?;
            let out = self.net(n);
            let name = format!("{}mux{}", self.prefix, self.next);
            n.add_gate_raw(
                name,
                GateKind::Mux2,
                None,
                [(Pin::In(0), lo), (Pin::In(1), hi), (Pin::S, x), (Pin::O, out)].into(),
            )?;
            out
        };
        self.memo.insert(f, net);
        Ok(net)
    }
}
