use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use gatescope_client::{Client, ClientError, Method, StatusCode};
use gatescope_core::model::{Direction, GateId, Project};
use gatescope_core::sim::compile;
use gatescope_core::trace::{replay, EventRecord};
use gatescope_core::workbench::{generate_project, random_stimulus, ProjectKind, ProjectSpec, Session};
use serde_json::Value;

fn base_project() -> Project {
    let mut spec = ProjectSpec::new(ProjectKind::FsmSeaOfGates, 2);
    spec.padding = Some(300);
    Project::new(generate_project(&spec).unwrap().netlist)
}

async fn start(p: Project) -> Client {
    let bound = gatescope_server::bind("127.0.0.1:0", Session::in_memory(p, "api")).await.unwrap();
    let (addr, _handle) = bound.spawn();
    Client::new(format!("http://{addr}"))
}

fn api_code(e: ClientError) -> (u16, String, Option<u64>) {
    match e {
        ClientError::Api { status, code, seq, .. } => (status, code, seq),
        other => panic!("expected an API error, got {other}"),
    }
}

fn records(events: Vec<Value>) -> Vec<EventRecord> {
    events.into_iter().map(|v| serde_json::from_value(v).unwrap()).collect()
}

#[tokio::test]
async fn graph_window_is_the_k_hop_neighborhood() {
    let p = base_project();
    let c = start(p.clone()).await;
    let w = c.graph(5, 2).await.unwrap();
    let got: BTreeSet<u64> = w["nodes"].as_array().unwrap().iter().map(|n| n["id"].as_u64().unwrap()).collect();
    let mut frontier = BTreeSet::from([GateId(5)]);
    let mut want = frontier.clone();
    for _ in 0..2 {
        let mut next = BTreeSet::new();
        for g in &frontier {
            for d in [Direction::Fanin, Direction::Fanout] {
                next.extend(p.netlist.neighbors(*g, d).unwrap());
            }
        }
        frontier = next.difference(&want).copied().collect();
        want.extend(&frontier);
    }
    assert_eq!(got, want.iter().map(|g| g.0 as u64).collect());
    for e in w["edges"].as_array().unwrap() {
        assert!(got.contains(&e[0].as_u64().unwrap()) && got.contains(&e[1].as_u64().unwrap()));
    }
    let (status, code, _) = api_code(c.graph(5, 9).await.unwrap_err());
    assert_eq!((status, code.as_str()), (400, "ArgumentError"));
    let (status, code, _) = api_code(c.graph(99_999, 1).await.unwrap_err());
    assert_eq!((status, code.as_str()), (404, "UnknownGate"));
}

#[tokio::test]
async fn gate_detail_includes_pins_and_function() {
    let c = start(base_project()).await;
    let g = c.gate(1).await.unwrap();
    assert_eq!(g["id"], 1);
    assert!(g["pins"].is_object());
    assert!(g.get("function").is_some());
    let (status, _) = c.raw(Method::GET, "/gate/abc", None).await.unwrap();
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn created_submodule_is_announced_on_the_stream() {
    let c = start(base_project()).await;
    let mut stream = c.stream(0).await.unwrap();
    let open = stream.next().await.unwrap().unwrap();
    assert_eq!(open["op"], "session.open");
    let created = c.create_submodule("fsm", Some([200, 10, 10])).await.unwrap();
    assert_eq!(created.id, 1);
    let ev = tokio::time::timeout(Duration::from_secs(5), stream.next()).await.unwrap().unwrap().unwrap();
    assert_eq!(ev["op"], "submodule.create");
    assert_eq!(ev["seq"], created.seq);
    assert_eq!(ev["actor"], "user");
    let (status, body) = c
        .raw(Method::POST, "/submodules", Some(r#"{"name":"x"}"#.into()))
        .await
        .unwrap();
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["id"], 2);
}

#[tokio::test]
async fn malformed_bodies_are_argument_errors() {
    let c = start(base_project()).await;
    for (path, body) in [
        ("/submodules", "{not json"),
        ("/submodules", r#"{"colour":[1,2,3]}"#),
        ("/command", r#"{"line":7}"#),
        ("/select", r#"{"gates":"all"}"#),
        ("/submodules/1/gates", "[]"),
    ] {
        let (status, v) = c.raw(Method::POST, path, Some(body.into())).await.unwrap();
        assert_eq!(status, StatusCode::BAD_REQUEST, "{path} {body}");
        assert_eq!(v["code"], "ArgumentError", "{path} {body}");
    }
    // Nothing above reached the session.
    assert_eq!(c.events(0).await.unwrap().len(), 1);
}

#[tokio::test]
async fn failed_operations_report_their_logged_seq() {
    let c = start(base_project()).await;
    let (status, code, seq) = api_code(c.command("frobnicate").await.unwrap_err());
    assert_eq!((status, code.as_str(), seq), (400, "UnknownCommand", Some(2)));
    let (status, code, seq) = api_code(c.assign_gates(7, &[1]).await.unwrap_err());
    assert_eq!((status, code.as_str(), seq), (404, "UnknownSubmodule", Some(3)));
    let ev = records(c.events(1).await.unwrap());
    assert_eq!(ev.iter().map(|r| r.op.as_str()).collect::<Vec<_>>(), ["command.run", "submodule.assign"]);
    assert!(ev.iter().all(|r| !r.outcome.is_ok()));
}

#[tokio::test]
async fn command_channel_runs_the_workbench_vocabulary() {
    let c = start(base_project()).await;
    let reply = c.command("fsm-candidates 2").await.unwrap();
    assert_eq!(reply.seq, 2);
    assert!(reply.data.as_array().unwrap().len() <= 2);
    c.command("submodule new ctl").await.unwrap();
    c.command("submodule add ctl 3 4 5").await.unwrap();
    let sms = c.submodules().await.unwrap();
    assert_eq!(sms[0]["gates"], serde_json::json!([3, 4, 5]));
    let ev = records(c.events(0).await.unwrap());
    assert!(ev[1..].iter().all(|r| r.actor == gatescope_core::trace::Actor::Script));
}

#[tokio::test]
async fn trace_matches_local_simulation() {
    let p = base_project();
    let c = start(p.clone()).await;
    let t = c.trace(&["in0", "fsm_st0"], 40, 3).await.unwrap();
    let local = compile(&p.netlist)
        .unwrap()
        .run(&random_stimulus(&p.netlist, 40, 3), &["in0", "fsm_st0"])
        .unwrap();
    assert_eq!(t, serde_json::to_value(&local).unwrap());
    assert_eq!(t["probe_values"].as_array().unwrap().len(), 41);
    let (_, code, _) = api_code(c.trace(&["nope"], 4, 0).await.unwrap_err());
    assert_eq!(code, "UnknownProbe");
}

#[tokio::test]
async fn each_user_action_logs_one_user_event_and_views_converge() {
    let c = start(base_project()).await;
    let mut stream = c.stream(0).await.unwrap();
    let a = c.create_submodule("a", None).await.unwrap();
    let b = c.create_submodule("b", None).await.unwrap();
    c.assign_gates(a.id, &[1, 2, 3]).await.unwrap();
    c.select(&[2, 3]).await.unwrap();
    c.assign_gates(b.id, &[3, 4]).await.unwrap();
    c.unassign_gates(a.id, &[1]).await.unwrap();
    let _ = c.assign_gates(b.id, &[99_999]).await;
    c.trace(&[], 5, 0).await.unwrap();
    let actions = 8;

    let ev = records(c.events(0).await.unwrap());
    let user = ev.iter().filter(|r| r.actor == gatescope_core::trace::Actor::User).count();
    assert_eq!(user, actions);

    // Fold the stream into a membership view, as a UI would.
    let mut members: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for _ in 0..=actions {
        let r: EventRecord = serde_json::from_value(stream.next().await.unwrap().unwrap()).unwrap();
        if !r.outcome.is_ok() {
            continue;
        }
        let gates = || -> Vec<u64> { serde_json::from_value(r.args["gates"].clone()).unwrap() };
        let sm = r.args["submodule"].as_u64();
        match r.op.as_str() {
            "submodule.create" => {
                members.insert(r.targets[0], BTreeSet::new());
            }
            "submodule.assign" => members.get_mut(&sm.unwrap()).unwrap().extend(gates()),
            "submodule.unassign" => {
                for g in gates() {
                    members.get_mut(&sm.unwrap()).unwrap().remove(&g);
                }
            }
            _ => {}
        }
    }
    let truth: BTreeMap<u64, BTreeSet<u64>> = c
        .submodules()
        .await
        .unwrap()
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["id"].as_u64().unwrap(), serde_json::from_value(s["gates"].clone()).unwrap()))
        .collect();
    assert_eq!(members, truth);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_are_serialized_and_replayable() {
    let p = base_project();
    let c = start(p.clone()).await;
    let mut s1 = c.stream(0).await.unwrap();
    let mut tasks = Vec::new();
    for i in 0..16u32 {
        let c = c.clone();
        tasks.push(tokio::spawn(async move {
            let sm = c.create_submodule(&format!("t{i}"), None).await.unwrap();
            c.assign_gates(sm.id, &[i + 1, i + 2]).await.unwrap();
            c.command(&format!("gate {}", i + 1)).await.unwrap();
            c.select(&[i + 1]).await.unwrap();
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    let ev = records(c.events(0).await.unwrap());
    assert_eq!(ev.len(), 1 + 16 * 4);
    assert!(ev.iter().enumerate().all(|(i, r)| r.seq == i as u64 + 1));
    let mut s2 = c.stream(30).await.unwrap();
    for want in 1..=ev.len() as u64 {
        assert_eq!(s1.next().await.unwrap().unwrap()["seq"], want);
    }
    for want in 31..=ev.len() as u64 {
        assert_eq!(s2.next().await.unwrap().unwrap()["seq"], want);
    }
    let replayed = replay(&p, &ev).unwrap();
    assert_eq!(replayed.digest(), c.digest().await.unwrap());
}

#[tokio::test]
async fn binding_a_taken_port_fails() {
    let first = gatescope_server::bind("127.0.0.1:0", Session::in_memory(base_project(), "a")).await.unwrap();
    let addr = first.local_addr().to_string();
    let err = gatescope_server::bind(&addr, Session::in_memory(base_project(), "b")).await.err().unwrap();
    assert_eq!(err.code(), "BindError");
}
