//! Gate graphs, strongly connected components, the flip-flop projection and
//! FSM candidate ranking.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::logic::structural_support;
use crate::model::lint::{LintIssue, Severity};
use crate::model::{Endpoint, GateId, GateKind, NetId, Netlist, Pin};

/// Directed graph over gate ids with collapsed multi-edges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Digraph {
    succ: BTreeMap<GateId, BTreeSet<GateId>>,
}

impl Digraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, n: GateId) {
        self.succ.entry(n).or_default();
    }

    pub fn add_edge(&mut self, u: GateId, v: GateId) {
        self.add_node(v);
        self.succ.entry(u).or_default().insert(v);
    }

    pub fn nodes(&self) -> impl Iterator<Item = GateId> + '_ {
        self.succ.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.succ.len()
    }

    pub fn successors(&self, n: GateId) -> impl Iterator<Item = GateId> + '_ {
        self.succ.get(&n).into_iter().flatten().copied()
    }

    pub fn has_edge(&self, u: GateId, v: GateId) -> bool {
        self.succ.get(&u).is_some_and(|s| s.contains(&v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (GateId, GateId)> + '_ {
        self.succ
            .iter()
            .flat_map(|(u, vs)| vs.iter().map(move |v| (*u, *v)))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.values().map(|s| s.len()).sum()
    }
}

/// One node per gate; `u -> v` iff `u`'s output net has `v` as a sink.
pub fn build_graph(n: &Netlist) -> Digraph {
    let mut g = Digraph::new();
    for gate in n.gates() {
        g.add_node(gate.id);
        for (sink, _) in n.net(gate.output_net()).sink_gates() {
            g.add_edge(gate.id, sink);
        }
    }
    g
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sccs {
    /// Components ordered by smallest member.
    pub components: Vec<BTreeSet<GateId>>,
    pub component_of: BTreeMap<GateId, usize>,
    /// Edges between distinct components, by component index.
    pub condensation: BTreeMap<usize, BTreeSet<usize>>,
}

/// Tarjan's algorithm, iterative so deep graphs cannot overflow the stack.
pub fn scc(g: &Digraph) -> Sccs {
    let nodes: Vec<GateId> = g.nodes().collect();
    let index_of: BTreeMap<GateId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let adj: Vec<Vec<usize>> = nodes
        .iter()
        .map(|n| g.successors(*n).map(|s| index_of[&s]).collect())
        .collect();
    let count = nodes.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; count];
    let mut low = vec![0usize; count];
    let mut on_stack = vec![false; count];
    let mut stack: Vec<usize> = Vec::new();
    let mut next = 0usize;
    let mut raw: Vec<Vec<usize>> = Vec::new();

    for root in 0..count {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge < adj[v].len() {
                let w = adj[v][*edge];
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("component root is on the stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                raw.push(comp);
            }
        }
    }

    let mut components: Vec<BTreeSet<GateId>> = raw
        .into_iter()
        .map(|c| c.into_iter().map(|i| nodes[i]).collect())
        .collect();
    components.sort_by_key(|c| *c.iter().next().expect("components are nonempty"));
    let mut component_of = BTreeMap::new();
    for (i, c) in components.iter().enumerate() {
        for n in c {
            component_of.insert(*n, i);
        }
    }
    let mut condensation: BTreeMap<usize, BTreeSet<usize>> =
        (0..components.len()).map(|i| (i, BTreeSet::new())).collect();
    for (u, v) in g.edges() {
        let (cu, cv) = (component_of[&u], component_of[&v]);
        if cu != cv {
            condensation.get_mut(&cu).unwrap().insert(cv);
        }
    }
    Sccs {
        components,
        component_of,
        condensation,
    }
}

/// Maximum number of combinational gates a Q-to-D path may traverse.
pub const PATH_DEPTH_LIMIT: usize = 64;

fn is_transparent(kind: GateKind) -> bool {
    matches!(
        kind,
        GateKind::Lut(_) | GateKind::Mux2 | GateKind::Buf | GateKind::Inv
    )
}

/// Edge `f -> g` iff a purely combinational path leads from `f.Q` to
/// `g.D`. Paths longer than [`PATH_DEPTH_LIMIT`] gates are cut and
/// reported as warnings.
pub fn ff_projection_checked(n: &Netlist) -> (Digraph, Vec<LintIssue>) {
    let mut g = Digraph::new();
    let mut issues = Vec::new();
    for ff in n.flip_flops() {
        g.add_node(ff.id);
        let mut seen: BTreeSet<NetId> = BTreeSet::new();
        let mut queue: VecDeque<(NetId, usize)> = VecDeque::from([(ff.output_net(), 0)]);
        let mut truncated = false;
        while let Some((net, depth)) = queue.pop_front() {
            if !seen.insert(net) {
                continue;
            }
            for sink in &n.net(net).sinks {
                let Endpoint::Gate(sid, pin) = sink else {
                    continue;
                };
                let sg = n.gate(*sid).expect("sinks reference gates");
                if sg.kind.is_sequential() {
                    if *pin == Pin::D {
                        g.add_edge(ff.id, sg.id);
                    }
                } else if is_transparent(sg.kind) {
                    if depth + 1 > PATH_DEPTH_LIMIT {
                        truncated = true;
                    } else {
                        queue.push_back((sg.output_net(), depth + 1));
                    }
                }
            }
        }
        if truncated {
            issues.push(LintIssue {
                severity: Severity::Warning,
                code: "path-depth-exceeded",
                message: format!(
                    "combinational fanout of FF {} exceeds {PATH_DEPTH_LIMIT} levels",
                    ff.id
                ),
            });
        }
    }
    (g, issues)
}

pub fn ff_projection(n: &Netlist) -> Digraph {
    ff_projection_checked(n).0
}

/// Feature weights of the candidate score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateWeights {
    pub density: f64,
    pub shared: f64,
    pub size: f64,
}

impl Default for CandidateWeights {
    fn default() -> Self {
        CandidateWeights {
            density: 0.5,
            shared: 0.3,
            size: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsmCandidate {
    pub ff_ids: BTreeSet<GateId>,
    pub score: f64,
    pub evidence: BTreeMap<String, f64>,
}

/// Preferred FSM size range in flip-flops.
pub const SIZE_RANGE: (usize, usize) = (2, 8);

/// Ranked FSM candidates with the default weights.
pub fn fsm_candidates(n: &Netlist) -> Vec<FsmCandidate> {
    fsm_candidates_with(n, CandidateWeights::default())
}

pub fn fsm_candidates_with(n: &Netlist, w: CandidateWeights) -> Vec<FsmCandidate> {
    let proj = ff_projection(n);
    let sccs = scc(&proj);
    let mut boundary: BTreeSet<NetId> = n.inputs().iter().copied().collect();
    boundary.extend(n.flip_flops().map(|g| g.output_net()));

    let mut out = Vec::new();
    for comp in &sccs.components {
        let first = *comp.iter().next().unwrap();
        if comp.len() == 1 && !proj.has_edge(first, first) {
            continue;
        }
        let size = comp.len();
        let cross = comp
            .iter()
            .map(|u| proj.successors(*u).filter(|v| v != u && comp.contains(v)).count())
            .sum::<usize>();
        let density = if size > 1 {
            cross as f64 / (size * (size - 1)) as f64
        } else {
            0.0
        };

        let mut uses: BTreeMap<NetId, usize> = BTreeMap::new();
        for ff in comp {
            let d = n.gate(*ff).unwrap().input_net(Pin::D);
            let supp = d
                .and_then(|d| structural_support(n, d, &boundary, usize::MAX))
                .unwrap_or_default();
            for s in supp {
                *uses.entry(s).or_default() += 1;
            }
        }
        let shared = if uses.is_empty() {
            0.0
        } else {
            uses.values().filter(|c| **c >= 2).count() as f64 / uses.len() as f64
        };

        let dev = if size < SIZE_RANGE.0 {
            SIZE_RANGE.0 - size
        } else {
            size.saturating_sub(SIZE_RANGE.1)
        };
        let size_score = 1.0 / (1.0 + dev as f64);

        let score = w.density * density + w.shared * shared + w.size * size_score;
        let evidence = BTreeMap::from([
            ("cross_edges".to_string(), cross as f64),
            ("density".to_string(), density),
            ("members".to_string(), size as f64),
            ("shared".to_string(), shared),
            ("size".to_string(), size_score),
        ]);
        out.push(FsmCandidate {
            ff_ids: comp.clone(),
            score,
            evidence,
        });
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.ff_ids.iter().next().cmp(&b.ff_ids.iter().next()))
    });
    out
}

/// Gates within `radius` undirected hops of `center`, and the gate graph
/// edges among them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub center: GateId,
    pub radius: usize,
    pub nodes: Vec<GateId>,
    pub edges: Vec<(GateId, GateId)>,
}

pub fn window(n: &Netlist, center: GateId, radius: usize) -> Result<Window, crate::model::ModelError> {
    n.gate(center)?;
    let g = build_graph(n);
    let mut pred: BTreeMap<GateId, BTreeSet<GateId>> = BTreeMap::new();
    for (u, v) in g.edges() {
        pred.entry(v).or_default().insert(u);
    }
    let mut dist: BTreeMap<GateId, usize> = BTreeMap::from([(center, 0)]);
    let mut queue = VecDeque::from([center]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == radius {
            continue;
        }
        let nbrs: Vec<GateId> = g
            .successors(u)
            .chain(pred.get(&u).into_iter().flatten().copied())
            .collect();
        for v in nbrs {
            if !dist.contains_key(&v) {
                dist.insert(v, d + 1);
                queue.push_back(v);
            }
        }
    }
    let edges = g
        .edges()
        .filter(|(u, v)| dist.contains_key(u) && dist.contains_key(v))
        .collect();
    Ok(Window {
        center,
        radius,
        nodes: dist.keys().copied().collect(),
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(i: u32) -> GateId {
        GateId(i)
    }

    fn digraph(edges: &[(u32, u32)], nodes: u32) -> Digraph {
        let mut d = Digraph::new();
        for i in 1..=nodes {
            d.add_node(g(i));
        }
        for (u, v) in edges {
            d.add_edge(g(*u), g(*v));
        }
        d
    }

    /// Mutual reachability via Floyd-Warshall closure.
    fn oracle(d: &Digraph) -> Vec<BTreeSet<GateId>> {
        let nodes: Vec<GateId> = d.nodes().collect();
        let k = nodes.len();
        let mut r = vec![vec![false; k]; k];
        for i in 0..k {
            r[i][i] = true;
            for j in 0..k {
                if d.has_edge(nodes[i], nodes[j]) {
                    r[i][j] = true;
                }
            }
        }
        for m in 0..k {
            for i in 0..k {
                for j in 0..k {
                    if r[i][m] && r[m][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
        let mut done = vec![false; k];
        let mut comps = Vec::new();
        for i in 0..k {
            if done[i] {
                continue;
            }
            let c: BTreeSet<GateId> = (0..k).filter(|j| r[i][*j] && r[*j][i]).map(|j| nodes[j]).collect();
            for j in 0..k {
                if c.contains(&nodes[j]) {
                    done[j] = true;
                }
            }
            comps.push(c);
        }
        comps
    }

    #[test]
    fn three_cycle() {
        let s = scc(&digraph(&[(1, 2), (2, 3), (3, 1)], 3));
        assert_eq!(s.components, vec![[g(1), g(2), g(3)].into()]);
    }

    #[test]
    fn dag_condensation_matches_input() {
        let edges = [(1, 2), (1, 3), (2, 4), (3, 4), (4, 5)];
        let d = digraph(&edges, 5);
        let s = scc(&d);
        assert_eq!(s.components.len(), 5);
        for (u, v) in edges {
            let (cu, cv) = (s.component_of[&g(u)], s.component_of[&g(v)]);
            assert!(s.condensation[&cu].contains(&cv));
        }
        assert_eq!(s.condensation.values().map(|x| x.len()).sum::<usize>(), edges.len());
    }

    #[test]
    fn random_digraphs_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..=30u32);
            let m = rng.gen_range(0..=n * 2);
            let edges: Vec<(u32, u32)> = (0..m)
                .map(|_| (rng.gen_range(1..=n), rng.gen_range(1..=n)))
                .collect();
            let d = digraph(&edges, n);
            assert_eq!(scc(&d).components, oracle(&d));
        }
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let edges: Vec<(u32, u32)> = (1..100_000).map(|i| (i, i + 1)).chain([(100_000, 1)]).collect();
        let s = scc(&digraph(&edges, 100_000));
        assert_eq!(s.components.len(), 1);
    }

    fn pins(p: &[(&str, &str)]) -> Vec<(String, String)> {
        p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn add(n: &mut Netlist, name: &str, kind: GateKind, init: Option<&str>, p: &[(&str, &str)]) -> GateId {
        let map = pins(p).into_iter().collect();
        n.add_gate(name, kind, init, &map).unwrap()
    }

    #[test]
    fn graph_edges_and_fanout() {
        let mut n = Netlist::new("t");
        n.add_input("a").unwrap();
        let l = add(&mut n, "l", GateKind::Buf, None, &[("I", "a"), ("O", "x")]);
        let s1 = add(&mut n, "s1", GateKind::Inv, None, &[("I", "x"), ("O", "y1")]);
        let s2 = add(&mut n, "s2", GateKind::Inv, None, &[("I", "x"), ("O", "y2")]);
        let s3 = add(&mut n, "s3", GateKind::Lut(2), Some("8"), &[("I0", "x"), ("I1", "x"), ("O", "y3")]);
        let gr = build_graph(&n);
        assert_eq!(gr.successors(l).collect::<Vec<_>>(), vec![s1, s2, s3]);
        assert_eq!(gr.edge_count(), 3);
        assert_eq!(build_graph(&Netlist::new("e")).node_count(), 0);
    }

    #[test]
    fn projection_self_loop_and_shift_register() {
        let mut n = Netlist::new("t");
        n.add_input("clk").unwrap();
        let f = add(&mut n, "f", GateKind::Ff, Some("0"), &[("D", "d"), ("CLK", "clk"), ("Q", "q")]);
        add(&mut n, "inv", GateKind::Lut(1), Some("1"), &[("I0", "q"), ("O", "d")]);
        let p = ff_projection(&n);
        assert!(p.has_edge(f, f));
        assert_eq!(p.edge_count(), 1);

        let mut s = Netlist::new("sr");
        s.add_input("clk").unwrap();
        s.add_input("din").unwrap();
        let mut prev = "din".to_string();
        let mut ids = vec![];
        for i in 0..4 {
            let q = format!("q{i}");
            ids.push(add(&mut s, &format!("r{i}"), GateKind::Ff, None, &[("D", &prev), ("CLK", "clk"), ("Q", &q)]));
            prev = q;
        }
        let p = ff_projection(&s);
        assert_eq!(p.edges().collect::<Vec<_>>(), vec![(ids[0], ids[1]), (ids[1], ids[2]), (ids[2], ids[3])]);
        assert!(fsm_candidates(&s).is_empty());
    }

    #[test]
    fn no_ffs_no_candidates() {
        let mut n = Netlist::new("t");
        n.add_input("a").unwrap();
        add(&mut n, "b", GateKind::Buf, None, &[("I", "a"), ("O", "o")]);
        assert!(fsm_candidates(&n).is_empty());
    }

    #[test]
    fn window_radius() {
        let mut n = Netlist::new("t");
        n.add_input("a").unwrap();
        let mut prev = "a".to_string();
        let mut ids = vec![];
        for i in 0..6 {
            let o = format!("n{i}");
            ids.push(add(&mut n, &format!("b{i}"), GateKind::Buf, None, &[("I", &prev), ("O", &o)]));
            prev = o;
        }
        let w = window(&n, ids[3], 2).unwrap();
        assert_eq!(w.nodes, ids[1..6].to_vec());
        assert_eq!(w.edges.len(), 4);
    }
}
