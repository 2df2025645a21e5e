//! Cycle-accurate two-valued simulation with a single global clock.
//!
//! [`compile`] orders the combinational gates once; [`Plan::run`] then
//! settles the logic every cycle and clocks all flip-flops together.
//! Undriven nets and unconnected LUT inputs read 0.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{gate_inputs, gate_table};
use crate::model::{GateId, NetId, Netlist, Pin};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("combinational cycle through gates {0:?}")]
    CombinationalCycle(Vec<GateId>),
    #[error("unknown probe {0:?}")]
    UnknownProbe(String),
    #[error("unknown input port {0:?}")]
    UnknownInput(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::CombinationalCycle(_) => "CombinationalCycle",
            SimError::UnknownProbe(_) => "UnknownProbe",
            SimError::UnknownInput(_) => "UnknownInput",
        }
    }
}

#[derive(Clone, Debug)]
struct CombGate {
    table: u64,
    inputs: Vec<Option<usize>>,
    output: usize,
}

#[derive(Clone, Debug)]
struct SeqGate {
    id: GateId,
    d: Option<usize>,
    r: Option<usize>,
    q: usize,
    init: bool,
}

/// Immutable evaluation plan; share it freely between runs.
#[derive(Clone, Debug)]
pub struct Plan {
    order: Vec<CombGate>,
    ffs: Vec<SeqGate>,
    inputs: Vec<(String, usize)>,
    net_names: Vec<String>,
    name_index: HashMap<String, usize>,
    reset_port: Option<String>,
}

fn slot(n: NetId) -> usize {
    n.0 as usize - 1
}

/// Orders the combinational gates topologically. Flip-flops are the
/// sequential boundary.
pub fn compile(n: &Netlist) -> Result<Plan, SimError> {
    let comb: Vec<_> = n.gates().filter(|g| !g.kind.is_sequential()).collect();
    let mut indeg: BTreeMap<GateId, usize> = comb.iter().map(|g| (g.id, 0)).collect();
    let mut fanout: BTreeMap<GateId, Vec<GateId>> = BTreeMap::new();
    for g in &comb {
        for p in gate_inputs(g.kind) {
            if let Some(d) = g.input_net(p).and_then(|net| n.driver_gate(net)) {
                if !d.kind.is_sequential() {
                    *indeg.get_mut(&g.id).unwrap() += 1;
                    fanout.entry(d.id).or_default().push(g.id);
                }
            }
        }
    }
    let mut queue: VecDeque<GateId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(g, _)| *g).collect();
    let mut order = Vec::with_capacity(comb.len());
    while let Some(g) = queue.pop_front() {
        order.push(g);
        for s in fanout.get(&g).into_iter().flatten() {
            let d = indeg.get_mut(s).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push_back(*s);
            }
        }
    }
    if order.len() < comb.len() {
        let placed: BTreeSet<GateId> = order.iter().copied().collect();
        let left: BTreeSet<GateId> = comb.iter().map(|g| g.id).filter(|g| !placed.contains(g)).collect();
        return Err(SimError::CombinationalCycle(find_cycle(n, &left)));
    }

    let compiled = order
        .iter()
        .map(|id| {
            let g = n.gate(*id).unwrap();
            CombGate {
                table: gate_table(g.kind, g.init),
                inputs: gate_inputs(g.kind)
                    .into_iter()
                    .map(|p| g.input_net(p).map(slot))
                    .collect(),
                output: slot(g.output_net()),
            }
        })
        .collect();
    let ffs: Vec<SeqGate> = n
        .flip_flops()
        .map(|g| SeqGate {
            id: g.id,
            d: g.input_net(Pin::D).map(slot),
            r: g.input_net(Pin::R).map(slot),
            q: slot(g.output_net()),
            init: g.init.unwrap_or(0) & 1 == 1,
        })
        .collect();
    let r_nets: BTreeSet<usize> = ffs.iter().filter_map(|f| f.r).collect();
    let r_ports: Vec<NetId> = n
        .inputs()
        .iter()
        .copied()
        .filter(|i| r_nets.contains(&slot(*i)))
        .collect();
    let reset_port = (r_ports.len() == 1).then(|| n.net_name(r_ports[0]).to_string());
    let net_names: Vec<String> = n.nets().map(|x| x.name.clone()).collect();
    let name_index = net_names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(Plan {
        order: compiled,
        ffs,
        inputs: n
            .inputs()
            .iter()
            .map(|i| (n.net_name(*i).to_string(), slot(*i)))
            .collect(),
        net_names,
        name_index,
        reset_port,
    })
}

/// Walks backwards inside the unplaced gates until a gate repeats.
fn find_cycle(n: &Netlist, left: &BTreeSet<GateId>) -> Vec<GateId> {
    let start = *left.iter().next().unwrap();
    let mut path = vec![start];
    let mut pos: HashMap<GateId, usize> = HashMap::from([(start, 0)]);
    let mut cur = start;
    loop {
        let g = n.gate(cur).unwrap();
        let prev = gate_inputs(g.kind)
            .into_iter()
            .filter_map(|p| g.input_net(p).and_then(|net| n.net(net).driver_gate()))
            .find(|d| left.contains(d))
            .expect("an unplaced gate has an unplaced predecessor");
        if let Some(i) = pos.get(&prev) {
            let mut cycle = path[*i..].to_vec();
            cycle.reverse();
            return cycle;
        }
        pos.insert(prev, path.len());
        path.push(prev);
        cur = prev;
    }
}

/// Net values of one simulation instant, indexed by net id - 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct State {
    pub values: Vec<bool>,
}

impl State {
    pub fn get(&self, n: NetId) -> bool {
        self.values[slot(n)]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub cycles: usize,
    /// Input values per cycle; missing cycles or ports read 0.
    #[serde(default)]
    pub inputs: Vec<BTreeMap<String, bool>>,
    /// Leading cycles with the reset port held at 1.
    #[serde(default)]
    pub reset_cycles: usize,
}

impl Stimulus {
    pub fn idle(cycles: usize) -> Self {
        Stimulus {
            cycles,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub probes: Vec<String>,
    pub ffs: Vec<GateId>,
    pub inputs: Vec<String>,
    /// Per cycle, one row each; `cycles + 1` rows.
    pub probe_values: Vec<Vec<bool>>,
    pub ff_values: Vec<Vec<bool>>,
    pub input_values: Vec<Vec<bool>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.probe_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probe_values.is_empty()
    }

    pub fn probe(&self, name: &str) -> Option<Vec<bool>> {
        let i = self.probes.iter().position(|p| p == name)?;
        Some(self.probe_values.iter().map(|row| row[i]).collect())
    }

    /// VCD-style text: a header of signal ids, then value changes per cycle.
    pub fn to_vcd(&self) -> String {
        let mut out = String::from("$timescale 1 cycle $end\n$scope module top $end\n");
        let signals: Vec<String> = self
            .probes
            .iter()
            .cloned()
            .chain(self.ffs.iter().map(|f| format!("ff{f}")))
            .collect();
        for (i, s) in signals.iter().enumerate() {
            let _ = writeln!(out, "$var wire 1 s{i} {s} $end");
        }
        out.push_str("$upscope $end\n$enddefinitions $end\n");
        let mut last: Option<Vec<bool>> = None;
        for t in 0..self.len() {
            let row: Vec<bool> = self.probe_values[t]
                .iter()
                .chain(self.ff_values[t].iter())
                .copied()
                .collect();
            let _ = writeln!(out, "#{t}");
            for (i, v) in row.iter().enumerate() {
                if last.as_ref().is_none_or(|l| l[i] != *v) {
                    let _ = writeln!(out, "{}s{i}", *v as u8);
                }
            }
            last = Some(row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cycle");
        for p in &self.probes {
            let _ = write!(out, ",{p}");
        }
        for f in &self.ffs {
            let _ = write!(out, ",ff{f}");
        }
        out.push('\n');
        for t in 0..self.len() {
            let _ = write!(out, "{t}");
            for v in self.probe_values[t].iter().chain(self.ff_values[t].iter()) {
                let _ = write!(out, ",{}", *v as u8);
            }
            out.push('\n');
        }
        out
    }
}

impl Plan {
    pub fn input_names(&self) -> impl Iterator<Item = &str> + '_ {
        self.inputs.iter().map(|(n, _)| n.as_str())
    }

    pub fn reset_port(&self) -> Option<&str> {
        self.reset_port.as_deref()
    }

    pub fn ff_ids(&self) -> impl Iterator<Item = GateId> + '_ {
        self.ffs.iter().map(|f| f.id)
    }

    /// FF outputs at their init values, everything else 0.
    pub fn power_up(&self) -> State {
        let mut values = vec![false; self.net_names.len()];
        for f in &self.ffs {
            values[f.q] = f.init;
        }
        State { values }
    }

    /// Evaluates all combinational gates in order.
    pub fn settle(&self, s: &mut State) {
        let v = &mut s.values;
        for g in &self.order {
            let mut idx = 0usize;
            for (j, i) in g.inputs.iter().enumerate() {
                if let Some(i) = i {
                    idx |= (v[*i] as usize) << j;
                }
            }
            v[g.output] = (g.table >> idx) & 1 == 1;
        }
    }

    /// One rising edge: every FF loads D, or its init while R is high.
    pub fn clock(&self, s: &mut State) {
        let next: Vec<bool> = self
            .ffs
            .iter()
            .map(|f| {
                if f.r.is_some_and(|r| s.values[r]) {
                    f.init
                } else {
                    f.d.is_some_and(|d| s.values[d])
                }
            })
            .collect();
        for (f, b) in self.ffs.iter().zip(next) {
            s.values[f.q] = b;
        }
    }

    pub fn set(&self, s: &mut State, net: NetId, value: bool) {
        s.values[slot(net)] = value;
    }

    /// Settles once with the given nets forced (typically inputs and FF
    /// outputs); unassigned nets start at 0.
    pub fn settle_with(&self, assignment: &HashMap<NetId, bool>) -> State {
        let mut s = State {
            values: vec![false; self.net_names.len()],
        };
        for (n, b) in assignment {
            s.values[slot(*n)] = *b;
        }
        self.settle(&mut s);
        s
    }

    fn resolve_probe(&self, p: &str) -> Result<usize, SimError> {
        if let Some(i) = self.name_index.get(p) {
            return Ok(*i);
        }
        p.parse::<usize>()
            .ok()
            .filter(|i| *i >= 1 && *i <= self.net_names.len())
            .map(|i| i - 1)
            .ok_or_else(|| SimError::UnknownProbe(p.to_string()))
    }

    /// Runs `stimulus.cycles` clock edges. Row `t` of the trace is the
    /// settled state after `t` edges, with the inputs of cycle `t` applied.
    pub fn run(&self, stimulus: &Stimulus, probes: &[&str]) -> Result<Trace, SimError> {
        let probe_slots: Vec<usize> = probes
            .iter()
            .map(|p| self.resolve_probe(p))
            .collect::<Result<_, _>>()?;
        for row in &stimulus.inputs {
            for name in row.keys() {
                if !self.inputs.iter().any(|(n, _)| n == name) {
                    return Err(SimError::UnknownInput(name.clone()));
                }
            }
        }
        let mut s = self.power_up();
        let mut trace = Trace {
            probes: probes
                .iter()
                .zip(&probe_slots)
                .map(|(_, i)| self.net_names[*i].clone())
                .collect(),
            ffs: self.ffs.iter().map(|f| f.id).collect(),
            inputs: self.inputs.iter().map(|(n, _)| n.clone()).collect(),
            probe_values: Vec::with_capacity(stimulus.cycles + 1),
            ff_values: Vec::with_capacity(stimulus.cycles + 1),
            input_values: Vec::with_capacity(stimulus.cycles + 1),
        };
        for t in 0..=stimulus.cycles {
            let row = stimulus.inputs.get(t);
            let mut applied = Vec::with_capacity(self.inputs.len());
            for (name, i) in &self.inputs {
                let mut b = row.and_then(|r| r.get(name)).copied().unwrap_or(false);
                if t < stimulus.reset_cycles && self.reset_port.as_deref() == Some(name) {
                    b = true;
                }
                s.values[*i] = b;
                applied.push(b);
            }
            self.settle(&mut s);
            trace.probe_values.push(probe_slots.iter().map(|i| s.values[*i]).collect());
            trace.ff_values.push(self.ffs.iter().map(|f| s.values[f.q]).collect());
            trace.input_values.push(applied);
            if t < stimulus.cycles {
                self.clock(&mut s);
            }
        }
        Ok(trace)
    }
}

/// Convenience: compile and run.
pub fn simulate(n: &Netlist, stimulus: &Stimulus, probes: &[&str]) -> Result<Trace, crate::Error> {
    Ok(compile(n)?.run(stimulus, probes)?)
}
