use std::collections::{BTreeMap, BTreeSet, HashMap};

use gatescope_core::formats::{read_project, write_project};
use gatescope_core::fsm::{
    distinguish_states, harpoon_obfuscate, recover_enabling_key, synthesize_stg, Encoding, HarpoonConfig,
};
use gatescope_core::graph::{ff_projection, fsm_candidates, scc, Digraph};
use gatescope_core::logic::{default_boundary, equivalent, net_function, BooleanFunction};
use gatescope_core::model::lint::{has_errors, lint_project};
use gatescope_core::model::{Endpoint, GateId, GateKind, Mutation, NetId, Project, Rgb, SubmoduleId};
use gatescope_core::sim::{compile, Stimulus};
use gatescope_core::trace::{metrics, EventRecord};
use gatescope_core::workbench::generators::{random_netlist, random_stg};
use gatescope_core::workbench::{random_stimulus, Clock, Session};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vars(ids: &[u32]) -> Vec<NetId> {
    ids.iter().map(|i| NetId(*i)).collect()
}

fn assignments(vars: &[NetId]) -> impl Iterator<Item = HashMap<NetId, bool>> + '_ {
    (0..1usize << vars.len()).map(move |idx| vars.iter().enumerate().map(|(i, v)| (*v, (idx >> i) & 1 == 1)).collect())
}

fn submodule_forest_ok(p: &Project) -> bool {
    p.submodules.keys().all(|start| {
        let mut seen = BTreeSet::new();
        let mut cur = Some(*start);
        while let Some(c) = cur {
            if !seen.insert(c) {
                return false;
            }
            cur = p.submodules[&c].parent;
        }
        true
    })
}

fn drivers_consistent(p: &Project) -> bool {
    let mut outputs = BTreeSet::new();
    p.netlist.gates().all(|g| {
        let out = g.output_net();
        outputs.insert(out)
            && matches!(p.netlist.net(out).driver, Some(Endpoint::Gate(id, _)) if id == g.id)
    })
}

fn mutation(op: (u8, u8, u8, u8), gates: u32, counter: &mut usize) -> Mutation {
    let (k, a, b, c) = op;
    let sm = SubmoduleId(a as u32 % 6 + 1);
    let gate = |x: u8| GateId(x as u32 % (gates + 3) + 1);
    match k % 6 {
        0 => Mutation::CreateSubmodule {
            name: format!("m{a}"),
            color: (b % 2 == 0).then_some(Rgb(a, b, c)),
        },
        1 => Mutation::AssignGates { submodule: sm, gates: vec![gate(b), gate(c)] },
        2 => Mutation::UnassignGates { submodule: sm, gates: vec![gate(b)] },
        3 => Mutation::SetParent {
            submodule: sm,
            parent: (c % 4 != 0).then_some(SubmoduleId(b as u32 % 6 + 1)),
        },
        4 => Mutation::SetColor { submodule: sm, color: Rgb(a, b, c) },
        _ => {
            *counter += 1;
            Mutation::AddGate {
                name: if c % 5 == 0 { "g1".into() } else { format!("new{counter}") },
                kind: GateKind::Inv,
                init: None,
                pins: [("I".to_string(), format!("n{}", a % 8)), ("O".to_string(), format!("w{}", b % 12))].into(),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn model_invariants_hold_after_any_edit_sequence(
        seed in any::<u64>(),
        ops in prop::collection::vec(any::<(u8, u8, u8, u8)>(), 1..40),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = Project::new(random_netlist(&mut rng, 3, 20, 3));
        let gates = base.netlist.gate_count() as u32;
        let mut p = base.clone();
        let mut counter = 0;
        for op in ops {
            let before = p.digest();
            let result = p.apply(mutation(op, gates, &mut counter));
            prop_assert_eq!(p.take_emitted().len(), 1);
            if result.is_err() {
                prop_assert_eq!(p.digest(), before);
            }
            prop_assert!(drivers_consistent(&p));
            prop_assert!(submodule_forest_ok(&p));
            prop_assert!(!has_errors(&lint_project(&p)));
        }
        let text = write_project(&p);
        let back = read_project(&text).unwrap();
        prop_assert_eq!(back.digest(), p.digest());
        prop_assert_eq!(write_project(&back), text);
    }

    #[test]
    fn compose_matches_substitution(f in any::<u16>(), g in any::<u16>(), at in 0usize..4) {
        let fv = vars(&[1, 2, 3, 4]);
        let gv = vars(&[3, 5, 6, 7]);
        let f = BooleanFunction::from_small_table(fv.clone(), f as u64).unwrap();
        let g = BooleanFunction::from_small_table(gv.clone(), g as u64).unwrap();
        let v = fv[at];
        let h = f.compose(v, &g).unwrap();
        let all = vars(&[1, 2, 3, 4, 5, 6, 7]);
        for asg in assignments(&all) {
            let mut inner = asg.clone();
            inner.insert(v, g.evaluate(&asg).unwrap());
            prop_assert_eq!(h.evaluate(&asg).unwrap(), f.evaluate(&inner).unwrap());
        }
    }

    #[test]
    fn equivalence_laws(f in any::<u8>(), g in any::<u8>()) {
        let v = vars(&[1, 2, 3]);
        let f = BooleanFunction::from_small_table(v.clone(), f as u64).unwrap();
        let g = BooleanFunction::from_small_table(v.clone(), g as u64).unwrap();
        prop_assert!(equivalent(&f, &f, None).unwrap());
        prop_assert_eq!(equivalent(&f, &g, None).unwrap(), equivalent(&g, &f, None).unwrap());
        let padded = f.expand_to(&vars(&[1, 2, 3, 9])).unwrap();
        prop_assert!(equivalent(&f, &padded, None).unwrap());
        prop_assert!(equivalent(&padded, &f, None).unwrap());
    }

    #[test]
    fn next_state_functions_match_one_settle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = random_netlist(&mut rng, 4, 40, 5);
        let plan = compile(&n).unwrap();
        let boundary: Vec<NetId> = default_boundary(&n).into_iter().collect();
        for ff in n.flip_flops() {
            let d = ff.input_net(gatescope_core::model::Pin::D).unwrap();
            let f = net_function(&n, d, None).unwrap();
            for asg in assignments(&boundary).step_by(7) {
                prop_assert_eq!(f.evaluate(&asg).unwrap(), plan.settle_with(&asg).get(d));
            }
        }
    }

    #[test]
    fn scc_is_a_partition_with_acyclic_condensation(
        n in 1usize..40,
        edges in prop::collection::vec((0u32..40, 0u32..40), 0..120),
    ) {
        let mut g = Digraph::new();
        for i in 0..n as u32 {
            g.add_node(GateId(i + 1));
        }
        for (u, v) in edges {
            if (u as usize) < n && (v as usize) < n {
                g.add_edge(GateId(u + 1), GateId(v + 1));
            }
        }
        let s = scc(&g);
        let mut covered = BTreeSet::new();
        for c in &s.components {
            prop_assert!(!c.is_empty());
            for x in c {
                prop_assert!(covered.insert(*x));
            }
        }
        prop_assert_eq!(covered.len(), n);
        // Kahn's algorithm must consume every component.
        let mut indeg = vec![0usize; s.components.len()];
        for succ in s.condensation.values() {
            for t in succ {
                indeg[*t] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..indeg.len()).filter(|i| indeg[*i] == 0).collect();
        let mut done = 0;
        while let Some(c) = ready.pop() {
            done += 1;
            for t in s.condensation.get(&c).into_iter().flatten() {
                indeg[*t] -= 1;
                if indeg[*t] == 0 {
                    ready.push(*t);
                }
            }
        }
        prop_assert_eq!(done, s.components.len());
    }

    #[test]
    fn ff_projection_covers_functional_dependence(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = random_netlist(&mut rng, 3, 30, 5);
        let proj = ff_projection(&n);
        let q_of: BTreeMap<NetId, GateId> = n.flip_flops().map(|f| (f.output_net(), f.id)).collect();
        for g in n.flip_flops() {
            let d = g.input_net(gatescope_core::model::Pin::D).unwrap();
            let f = net_function(&n, d, None).unwrap();
            for v in f.reduced().support() {
                if let Some(src) = q_of.get(&v) {
                    prop_assert!(proj.has_edge(*src, g.id), "{} reaches {} functionally", src, g.id);
                }
            }
        }
        // Backward walk from each D pin through combinational gates.
        for g in n.flip_flops() {
            let mut stack = vec![g.input_net(gatescope_core::model::Pin::D).unwrap()];
            let mut seen = BTreeSet::new();
            let mut preds = BTreeSet::new();
            while let Some(net) = stack.pop() {
                if !seen.insert(net) {
                    continue;
                }
                match n.driver_gate(net) {
                    Some(d) if d.kind.is_sequential() => {
                        preds.insert(d.id);
                    }
                    Some(d) => stack.extend(d.pins.iter().filter(|(p, _)| **p != gatescope_core::model::Pin::O).map(|(_, x)| *x)),
                    None => {}
                }
            }
            let got: BTreeSet<GateId> = proj.edges().filter(|(_, v)| *v == g.id).map(|(u, _)| u).collect();
            prop_assert_eq!(got, preds);
        }
    }

    #[test]
    fn candidate_ranking_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = random_netlist(&mut rng, 3, 60, 8);
        let a = serde_json::to_string(&fsm_candidates(&n)).unwrap();
        let b = serde_json::to_string(&fsm_candidates(&n.clone())).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn harpoon_obfuscation_is_sound_and_breakable(
        seed in any::<u64>(),
        states in 2u64..10,
        width in 1usize..=3,
        key_len in 1usize..=8,
        extra in 0usize..=4,
        word_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stg = random_stg(&mut rng, states, width);
        let words = 1u32 << width;
        let key: Vec<u32> = (0..key_len).map(|j| ((word_seed >> (3 * (j % 20))) as u32 + j as u32) % words).collect();
        let cfg = HarpoonConfig { key: key.clone(), extra_loop_states: extra, seed };
        let (obf, layout) = harpoon_obfuscate(&stg, &cfg).unwrap();
        let added: BTreeSet<u64> = layout.key_chain.iter().chain(&layout.trap_loop).copied().collect();

        for ((s, _), t) in &obf.transitions {
            prop_assert!(added.contains(s) || !added.contains(t), "transition {} -> {} returns", s, t);
        }
        prop_assert_eq!(obf.walk(obf.reset, &key), Some(stg.reset));
        let run: Vec<u32> = (0..20).map(|i| ((word_seed >> (i % 60)) as u32) % words).collect();
        let mut with_key = key.clone();
        with_key.extend(&run);
        prop_assert_eq!(obf.walk(obf.reset, &with_key), stg.walk(stg.reset, &run));

        for j in 0..key_len {
            let wrong = (key[j] + 1) % words;
            let mut attempt: Vec<u32> = key[..j].to_vec();
            attempt.push(wrong);
            let mut s = obf.walk(obf.reset, &attempt).unwrap();
            prop_assert!(added.contains(&s));
            for w in &key[j + 1..] {
                s = obf.next(s, *w).unwrap();
                prop_assert!(added.contains(&s));
            }
        }

        let part = distinguish_states(&obf).unwrap();
        prop_assert_eq!(&part.obfuscation, &added);
        prop_assert_eq!(recover_enabling_key(&obf, &part).unwrap(), key);
    }

    #[test]
    fn metrics_ignore_timestamp_translation(
        gaps in prop::collection::vec(0u64..200_000, 1..30),
        shift in 0u64..1_000_000_000,
    ) {
        let s = Session::new(Project::new(random_netlist(&mut ChaCha8Rng::seed_from_u64(1), 2, 5, 1)),
            gatescope_core::trace::EventLog::new("m"), Clock::Manual(0));
        let mut s = s.unwrap();
        for (i, g) in gaps.iter().enumerate() {
            s.advance(*g);
            let m = if i % 3 == 0 {
                Mutation::AssignGates { submodule: SubmoduleId(1), gates: vec![GateId(1)] }
            } else {
                Mutation::CreateSubmodule { name: format!("s{i}"), color: None }
            };
            let _ = s.apply(gatescope_core::trace::Actor::User, m);
        }
        let shifted: Vec<EventRecord> = s
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                r.timestamp += shift;
                r
            })
            .collect();
        let a = metrics(s.records(), 60_000);
        let b = metrics(&shifted, 60_000);
        prop_assert_eq!(a.action_counts.values().sum::<usize>(), a.events);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn synthesized_machines_follow_their_graph_in_simulation() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stg = random_stg(&mut rng, 2 + seed % 12, 1 + seed as usize % 3);
        for enc in [Encoding::Binary, Encoding::Onehot] {
            let n = synthesize_stg(&stg, enc).unwrap();
            let stim = random_stimulus(&n, 1000, seed);
            let tr = compile(&n).unwrap().run(&stim, &[]).unwrap();
            let mut state = stg.reset;
            let mut code_of: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
            let mut state_of: BTreeMap<Vec<bool>, u64> = BTreeMap::new();
            for t in 0..=1000 {
                let row = tr.ff_values[t].clone();
                assert_eq!(*code_of.entry(state).or_insert_with(|| row.clone()), row, "seed {seed} cycle {t}");
                assert_eq!(*state_of.entry(row).or_insert(state), state, "seed {seed} cycle {t}");
                let word = (0..stg.input_width)
                    .map(|j| (tr.input_values[t][tr.inputs.iter().position(|x| *x == format!("in{j}")).unwrap()] as u32) << j)
                    .sum();
                state = stg.next(state, word).unwrap();
            }
        }
    }
}

#[test]
fn identical_plans_give_identical_traces() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = random_netlist(&mut rng, 4, 80, 6);
    let stim: Stimulus = random_stimulus(&n, 200, 9);
    let probes: Vec<String> = n.nets().map(|x| x.name.clone()).collect();
    let probes: Vec<&str> = probes.iter().map(String::as_str).collect();
    let a = compile(&n).unwrap().run(&stim, &probes).unwrap();
    let b = compile(&n.clone()).unwrap().run(&stim, &probes).unwrap();
    assert_eq!(a.to_vcd(), b.to_vcd());
    assert_eq!(a.to_csv(), b.to_csv());
}
