use std::collections::BTreeMap;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{views, Session, WorkbenchError};
use crate::aes::{extract_key, locate_sbox, ClockingInfo};
use crate::fsm::{attack_harpoon, extract_stg, fsm_inputs};
use crate::graph::{build_graph, fsm_candidates, scc};
use crate::logic::net_function;
use crate::model::lint::lint_project;
use crate::model::{Direction, GateId, GateKind, Mutation, NetId, Netlist, Rgb, SubmoduleId};
use crate::sim::{compile, Stimulus};
use crate::trace::{metrics, Actor, EventRecord, DEFAULT_IDLE_THRESHOLD_MS};
use crate::Error;

/// Verb and usage of every command.
pub const VERBS: &[(&str, &str)] = &[
    ("help", "help"),
    ("summary", "summary"),
    ("lint", "lint"),
    ("gate", "gate <id>"),
    ("neighbors", "neighbors <id> [in|out|both]"),
    ("function", "function <net>"),
    ("scc", "scc"),
    ("fsm-candidates", "fsm-candidates [top]"),
    ("extract-stg", "extract-stg <ff>... [--inputs <net>,...]"),
    ("attack-harpoon", "attack-harpoon"),
    ("patch-init", "patch-init <ff>,... <bits>"),
    ("locate-aes", "locate-aes"),
    ("patch-sbox", "patch-sbox <index>"),
    ("extract-key", "extract-key <clocking.json> [samples] [seed]"),
    ("sim", "sim <cycles> [probe]... [--seed <n>]"),
    ("metrics", "metrics [idle-threshold-ms]"),
    ("add-gate", "add-gate <name> <kind> [INIT=<hex>] <pin>=<net>..."),
    ("submodule", "submodule new|add|remove|parent|color|show|list ..."),
];

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutput {
    pub text: String,
    pub data: Value,
    /// Records this command appended to the log.
    pub events: Vec<EventRecord>,
}

fn arg_err(msg: impl Into<String>) -> Error {
    WorkbenchError::ArgumentError(msg.into()).into()
}

fn parse_num<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T, Error> {
    tok.parse().map_err(|_| arg_err(format!("expected {what}, got {tok:?}")))
}

/// Numbers separated by spaces and/or commas.
fn parse_ids(toks: &[&str], what: &str) -> Result<Vec<u32>, Error> {
    toks.iter()
        .flat_map(|t| t.split(','))
        .filter(|t| !t.is_empty())
        .map(|t| parse_num(t, what))
        .collect()
}

fn resolve_net(n: &Netlist, tok: &str) -> Result<NetId, Error> {
    if let Some(id) = n.net_by_name(tok) {
        return Ok(id);
    }
    match tok.parse::<u32>() {
        Ok(i) if n.try_net(NetId(i)).is_some() => Ok(NetId(i)),
        _ => Err(arg_err(format!("no net {tok:?}"))),
    }
}

fn resolve_submodule(s: &Session, tok: &str) -> Result<SubmoduleId, Error> {
    s.project()
        .find_submodule(tok)
        .ok_or_else(|| arg_err(format!("no submodule {tok:?}")))
}

fn gate_list(ids: &[GateId]) -> String {
    ids.iter().map(|g| g.0.to_string()).collect::<Vec<_>>().join(" ")
}

enum Plan {
    Mutate(Mutation),
    Observe {
        op: &'static str,
        targets: Vec<u64>,
        run: Box<dyn FnOnce(&Session) -> Result<(String, Value), Error>>,
    },
}

fn observe(
    op: &'static str,
    targets: Vec<u64>,
    run: impl FnOnce(&Session) -> Result<(String, Value), Error> + 'static,
) -> Plan {
    Plan::Observe {
        op,
        targets,
        run: Box::new(run),
    }
}

/// Runs one command line against the session. Every call appends exactly
/// one record, attributed to the script actor; lines that fail to parse
/// are logged as `command.run`.
pub fn run_command(session: &mut Session, line: &str) -> crate::Result<CommandOutput> {
    let before = session.log().next_seq();
    let args = json!({ "command": line });
    let result = match plan(session, line) {
        Err(e) => session.observe(Actor::Script, "command.run", vec![], args, Err(e)),
        Ok(Plan::Observe { op, targets, run }) => {
            let r = run(session);
            session.observe(Actor::Script, op, targets, args, r)
        }
        Ok(Plan::Mutate(m)) => {
            let op = m.op_name();
            session.apply(Actor::Script, m).map(|targets| {
                let list: Vec<String> = targets.iter().map(|t| t.to_string()).collect();
                (format!("{op} ok [{}]", list.join(" ")), json!({ "targets": targets }))
            })
        }
    };
    let (text, data) = result?;
    Ok(CommandOutput {
        text,
        data,
        events: session.records_after(before - 1).to_vec(),
    })
}

fn plan(session: &Session, line: &str) -> Result<Plan, Error> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let Some((verb, rest)) = toks.split_first() else {
        return Err(arg_err("empty command"));
    };
    let rest: Vec<String> = rest.iter().map(|s| s.to_string()).collect();
    let r: Vec<&str> = rest.iter().map(|s| s.as_str()).collect();
    let n = &session.project().netlist;
    Ok(match *verb {
        "help" => observe("netlist.summary", vec![], |_| {
            let mut t = String::new();
            for (_, usage) in VERBS {
                writeln!(t, "{usage}").unwrap();
            }
            Ok((t, json!(VERBS.iter().map(|(v, _)| *v).collect::<Vec<_>>())))
        }),
        "summary" => observe("netlist.summary", vec![], |s| {
            let v = views::summary(s.project());
            Ok((serde_json::to_string_pretty(&v).unwrap(), v))
        }),
        "lint" => observe("netlist.lint", vec![], |s| {
            let issues = lint_project(s.project());
            let mut t = String::new();
            for i in &issues {
                writeln!(t, "{:?} {} {}", i.severity, i.code, i.message).unwrap();
            }
            writeln!(t, "{} issue(s)", issues.len()).unwrap();
            Ok((t, serde_json::to_value(&issues).unwrap()))
        }),
        "gate" => {
            let [id] = r.as_slice() else { return Err(arg_err("usage: gate <id>")) };
            let id = GateId(parse_num(id, "gate id")?);
            observe("gate.inspect", vec![id.0 as u64], move |s| {
                let v = views::gate_detail(s.project(), id)?;
                Ok((serde_json::to_string_pretty(&v).unwrap(), v))
            })
        }
        "neighbors" => {
            let (id, dirs) = match r.as_slice() {
                [id] | [id, "both"] => (id, vec![Direction::Fanin, Direction::Fanout]),
                [id, "in"] => (id, vec![Direction::Fanin]),
                [id, "out"] => (id, vec![Direction::Fanout]),
                _ => return Err(arg_err("usage: neighbors <id> [in|out|both]")),
            };
            let id = GateId(parse_num(id, "gate id")?);
            observe("gate.neighbors", vec![id.0 as u64], move |s| {
                let mut nb = std::collections::BTreeSet::new();
                for d in dirs {
                    nb.extend(s.project().netlist.neighbors(id, d)?);
                }
                let nb: Vec<GateId> = nb.into_iter().collect();
                Ok((gate_list(&nb), json!(nb.iter().map(|g| g.0).collect::<Vec<_>>())))
            })
        }
        "function" => {
            let [net] = r.as_slice() else { return Err(arg_err("usage: function <net>")) };
            let net = resolve_net(n, net)?;
            observe("logic.function", vec![net.0 as u64], move |s| {
                let n = &s.project().netlist;
                let f = net_function(n, net, None)?;
                let sop = f.to_sop(|v| n.net_name(v).to_string());
                let vars: Vec<&str> = f.vars().iter().map(|v| n.net_name(*v)).collect();
                let text = format!("{} = {sop}\n", n.net_name(net));
                Ok((text, json!({ "net": net.0, "vars": vars, "sop": sop, "ones": f.count_ones() })))
            })
        }
        "scc" => observe("graph.scc", vec![], |s| {
            let sccs = scc(&build_graph(&s.project().netlist));
            let loops: Vec<Vec<u32>> = sccs
                .components
                .iter()
                .filter(|c| c.len() > 1)
                .map(|c| c.iter().map(|g| g.0).collect())
                .collect();
            let mut t = format!("{} components, {} cyclic\n", sccs.components.len(), loops.len());
            for c in &loops {
                let ids: Vec<String> = c.iter().map(|g| g.to_string()).collect();
                writeln!(t, "{}", ids.join(" ")).unwrap();
            }
            Ok((t, json!({ "components": sccs.components.len(), "cyclic": loops })))
        }),
        "fsm-candidates" => {
            let top: usize = match r.as_slice() {
                [] => 10,
                [k] => parse_num(k, "count")?,
                _ => return Err(arg_err("usage: fsm-candidates [top]")),
            };
            observe("fsm.candidates", vec![], move |s| {
                let cands: Vec<_> = fsm_candidates(&s.project().netlist).into_iter().take(top).collect();
                let mut t = String::from("rank  score   ffs\n");
                for (i, c) in cands.iter().enumerate() {
                    let ids: Vec<GateId> = c.ff_ids.iter().copied().collect();
                    writeln!(t, "{:<5} {:.4}  {}", i + 1, c.score, gate_list(&ids)).unwrap();
                }
                Ok((t, serde_json::to_value(&cands).unwrap()))
            })
        }
        "extract-stg" => {
            let split = r.iter().position(|t| *t == "--inputs");
            let (ff_toks, input_toks) = match split {
                Some(i) => (&r[..i], &r[i + 1..]),
                None => (&r[..], &[][..]),
            };
            let ffs: Vec<GateId> = parse_ids(ff_toks, "FF id")?.into_iter().map(GateId).collect();
            if ffs.is_empty() {
                return Err(arg_err("usage: extract-stg <ff>... [--inputs <net>,...]"));
            }
            let inputs: Option<Vec<NetId>> = match split {
                None => None,
                Some(_) => Some(
                    input_toks
                        .iter()
                        .flat_map(|t| t.split(','))
                        .filter(|t| !t.is_empty())
                        .map(|t| resolve_net(n, t))
                        .collect::<Result<_, _>>()?,
                ),
            };
            let targets = ffs.iter().map(|g| g.0 as u64).collect();
            observe("fsm.extract_stg", targets, move |s| {
                let n = &s.project().netlist;
                let inputs = match inputs {
                    Some(i) => i,
                    None => fsm_inputs(n, &ffs)?,
                };
                let stg = extract_stg(n, &ffs, &inputs)?;
                let mut t = format!(
                    "{} states, {} input bits, reset {}\n",
                    stg.states.len(),
                    stg.input_width,
                    stg.reset
                );
                writeln!(t, "state  word  next").unwrap();
                for ((st, w), nx) in &stg.transitions {
                    writeln!(t, "{st:<6} {w:<5} {nx}").unwrap();
                }
                Ok((t, serde_json::to_value(&stg).unwrap()))
            })
        }
        "attack-harpoon" => {
            if !r.is_empty() {
                return Err(arg_err("usage: attack-harpoon"));
            }
            observe("fsm.attack_harpoon", vec![], |s| {
                let a = attack_harpoon(&s.project().netlist)?;
                let key: Vec<String> = a.key.iter().map(|w| w.to_string()).collect();
                let bits: String = a.reset_bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
                let mut t = String::new();
                writeln!(t, "candidate   #{}", a.candidate_rank).unwrap();
                writeln!(t, "ffs         {}", gate_list(&a.ff_ids)).unwrap();
                writeln!(t, "original    {} states", a.partition.original.len()).unwrap();
                writeln!(t, "added       {} states", a.partition.obfuscation.len()).unwrap();
                writeln!(t, "key         {}", key.join(" ")).unwrap();
                writeln!(t, "reset       {} (bits {bits})", a.original_reset).unwrap();
                Ok((t, serde_json::to_value(&a).unwrap()))
            })
        }
        "patch-init" => {
            let [ffs, bits] = r.as_slice() else {
                return Err(arg_err("usage: patch-init <ff>,... <bits>"));
            };
            let ffs: Vec<GateId> = parse_ids(&[ffs], "FF id")?.into_iter().map(GateId).collect();
            let state = bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(arg_err(format!("bits must be 0/1, got {bits:?}"))),
                })
                .collect::<Result<Vec<bool>, _>>()?;
            Plan::Mutate(Mutation::PatchInitialState { ffs, state })
        }
        "locate-aes" => observe("aes.locate", vec![], |s| {
            let found = locate_sbox(&s.project().netlist);
            let mut t = format!("{} S-box instance(s)\n", found.len());
            for (k, inst) in found.iter().enumerate() {
                let ins: Vec<String> = inst.input_nets.iter().map(|x| x.0.to_string()).collect();
                writeln!(
                    t,
                    "#{k:<3} inputs {}  gates {}{}",
                    ins.join(","),
                    inst.gate_ids.len(),
                    if inst.bit_mapping.is_identity() { "" } else { "  permuted" }
                )
                .unwrap();
            }
            Ok((t, serde_json::to_value(&found).unwrap()))
        }),
        "patch-sbox" => {
            let [k] = r.as_slice() else { return Err(arg_err("usage: patch-sbox <index>")) };
            let k: usize = parse_num(k, "instance index")?;
            let mut found = locate_sbox(n);
            if k >= found.len() {
                return Err(arg_err(format!("instance {k} of {} does not exist", found.len())));
            }
            Plan::Mutate(Mutation::PatchSbox {
                instance: found.swap_remove(k),
            })
        }
        "extract-key" => {
            let (path, samples, seed) = match r.as_slice() {
                [p] => (*p, 10, 0),
                [p, s] => (*p, parse_num(s, "sample count")?, 0),
                [p, s, seed] => (*p, parse_num(s, "sample count")?, parse_num(seed, "seed")?),
                _ => return Err(arg_err("usage: extract-key <clocking.json> [samples] [seed]")),
            };
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::from(WorkbenchError::Io(format!("{path}: {e}"))))?;
            let clocking: ClockingInfo = serde_json::from_str(&text)
                .map_err(|e| arg_err(format!("{path}: not clocking info: {e}")))?;
            observe("aes.extract_key", vec![], move |s| {
                let n = &s.project().netlist;
                let report = extract_key(n, &locate_sbox(n), &clocking, samples, seed)?;
                let text = format!("key {}\nverified on {} plaintexts\n", report.key, report.verified_plaintexts);
                Ok((text, serde_json::to_value(&report).unwrap()))
            })
        }
        "sim" => {
            let mut seed = None;
            let mut pos = Vec::new();
            let mut it = r.iter();
            while let Some(t) = it.next() {
                if *t == "--seed" {
                    let v = it.next().ok_or_else(|| arg_err("--seed needs a value"))?;
                    seed = Some(parse_num::<u64>(v, "seed")?);
                } else {
                    pos.push(t.to_string());
                }
            }
            let Some((cycles, probes)) = pos.split_first() else {
                return Err(arg_err("usage: sim <cycles> [probe]... [--seed <n>]"));
            };
            let cycles: usize = parse_num(cycles, "cycle count")?;
            let probes = probes.to_vec();
            observe("sim.run", vec![], move |s| {
                let n = &s.project().netlist;
                let probes: Vec<String> = if probes.is_empty() {
                    n.outputs().iter().map(|o| n.net_name(*o).to_string()).collect()
                } else {
                    probes
                };
                let stim = match seed {
                    Some(seed) => random_stimulus(n, cycles, seed),
                    None => Stimulus::idle(cycles),
                };
                let refs: Vec<&str> = probes.iter().map(|p| p.as_str()).collect();
                let trace = compile(n)?.run(&stim, &refs)?;
                Ok((trace.to_csv(), serde_json::to_value(&trace).unwrap()))
            })
        }
        "metrics" => {
            let threshold = match r.as_slice() {
                [] => DEFAULT_IDLE_THRESHOLD_MS,
                [t] => parse_num(t, "threshold in ms")?,
                _ => return Err(arg_err("usage: metrics [idle-threshold-ms]")),
            };
            observe("session.metrics", vec![], move |s| {
                let m = metrics(s.records(), threshold);
                Ok((m.to_string(), serde_json::to_value(&m).unwrap()))
            })
        }
        "add-gate" => {
            let [name, kind, pins @ ..] = r.as_slice() else {
                return Err(arg_err("usage: add-gate <name> <kind> [INIT=<hex>] <pin>=<net>..."));
            };
            let kind = GateKind::from_name(kind).ok_or_else(|| arg_err(format!("unknown gate kind {kind:?}")))?;
            let mut init = None;
            let mut map = BTreeMap::new();
            for p in pins {
                let (k, v) = p.split_once('=').ok_or_else(|| arg_err(format!("expected pin=net, got {p:?}")))?;
                if k.eq_ignore_ascii_case("init") {
                    init = Some(v.to_string());
                } else {
                    map.insert(k.to_string(), v.to_string());
                }
            }
            Plan::Mutate(Mutation::AddGate {
                name: name.to_string(),
                kind,
                init,
                pins: map,
            })
        }
        "submodule" => plan_submodule(session, &r)?,
        other => return Err(WorkbenchError::UnknownCommand(other.to_string()).into()),
    })
}

fn plan_submodule(session: &Session, r: &[&str]) -> Result<Plan, Error> {
    let rgb = |toks: &[&str]| -> Result<Rgb, Error> {
        let [a, b, c] = toks else { return Err(arg_err("color needs three components")) };
        Ok(Rgb(parse_num(a, "0..255")?, parse_num(b, "0..255")?, parse_num(c, "0..255")?))
    };
    Ok(match r {
        ["new", name] => Plan::Mutate(Mutation::CreateSubmodule {
            name: name.to_string(),
            color: None,
        }),
        ["new", name, color @ ..] => Plan::Mutate(Mutation::CreateSubmodule {
            name: name.to_string(),
            color: Some(rgb(color)?),
        }),
        ["add", sm, gates @ ..] | ["remove", sm, gates @ ..] if !gates.is_empty() => {
            let submodule = resolve_submodule(session, sm)?;
            let gates = parse_ids(gates, "gate id")?.into_iter().map(GateId).collect();
            if r[0] == "add" {
                Plan::Mutate(Mutation::AssignGates { submodule, gates })
            } else {
                Plan::Mutate(Mutation::UnassignGates { submodule, gates })
            }
        }
        ["parent", sm, parent] => {
            let submodule = resolve_submodule(session, sm)?;
            let parent = match *parent {
                "none" => None,
                p => Some(resolve_submodule(session, p)?),
            };
            Plan::Mutate(Mutation::SetParent { submodule, parent })
        }
        ["color", sm, color @ ..] => Plan::Mutate(Mutation::SetColor {
            submodule: resolve_submodule(session, sm)?,
            color: rgb(color)?,
        }),
        ["show", sm] => {
            let id = resolve_submodule(session, sm)?;
            observe("submodule.list", vec![id.0 as u64], move |s| {
                let sm = s.project().submodule(id)?;
                let gates: Vec<GateId> = sm.gate_ids.iter().copied().collect();
                let text = format!("{} {} ({} gates): {}\n", sm.id, sm.name, gates.len(), gate_list(&gates));
                Ok((text, views::submodule(sm)))
            })
        }
        ["list"] => observe("submodule.list", vec![], |s| {
            let mut t = String::new();
            for sm in s.project().submodules.values() {
                writeln!(t, "{:<4} {:<16} {} gates", sm.id.0, sm.name, sm.gate_ids.len()).unwrap();
            }
            Ok((t, views::submodules(s.project())))
        }),
        _ => return Err(arg_err("usage: submodule new|add|remove|parent|color|show|list ...")),
    })
}

/// Uniform random values on every primary input except the clock.
pub fn random_stimulus(n: &Netlist, cycles: usize, seed: u64) -> Stimulus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&str> = n
        .inputs()
        .iter()
        .filter(|i| Some(**i) != n.clock())
        .map(|i| n.net_name(*i))
        .collect();
    let inputs = (0..=cycles)
        .map(|_| names.iter().map(|nm| (nm.to_string(), rng.gen_bool(0.5))).collect())
        .collect();
    Stimulus {
        cycles,
        inputs,
        reset_cycles: 0,
    }
}
