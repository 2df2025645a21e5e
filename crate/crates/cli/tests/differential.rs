//! The CLI against a local file and against the service must agree: same
//! JSON, same errors, same resulting digest.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gatescope_client::Client;
use gatescope_core::formats::load_project;
use gatescope_core::trace::{read_log, replay, Actor, EventRecord};
use gatescope_core::workbench::Session;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_gatescope");

fn gs(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok_json(out: Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn gen(dir: &Path, kind: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(format!("{kind}.json"));
    let mut args = vec!["gen", kind, "--seed", "5", "-o", out.to_str().unwrap()];
    args.extend(extra);
    ok_json(gs(&[&["--json"], &args[..]].concat()));
    out
}

struct Case {
    verb: &'static str,
    args: Vec<String>,
    mutates: bool,
}

fn case(verb: &'static str, args: &[&str]) -> Case {
    Case {
        verb,
        args: args.iter().map(|s| s.to_string()).collect(),
        mutates: verb == "patch-init",
    }
}

/// Runs `c` both ways on fresh copies of `project`, returning stdout or
/// stderr of each side.
async fn both(project: &Path, c: &Case) -> (Result<Value, String>, Result<Value, String>) {
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("p.json");
    std::fs::copy(project, &copy).unwrap();
    let base = load_project(&copy).unwrap();

    let mut local_args = vec!["--json".to_string(), c.verb.to_string(), copy.display().to_string()];
    local_args.extend(c.args.iter().cloned());
    let local = tokio::task::spawn_blocking(move || gs(&local_args.iter().map(String::as_str).collect::<Vec<_>>()))
        .await
        .unwrap();

    let bound = gatescope_server::bind("127.0.0.1:0", Session::in_memory(base.clone(), "diff"))
        .await
        .unwrap();
    let (addr, _h) = bound.spawn();
    let client = Client::new(addr.to_string());
    let mut remote_args = vec!["--server".to_string(), addr.to_string(), "--json".into(), c.verb.into()];
    remote_args.extend(c.args.iter().cloned());
    let remote = tokio::task::spawn_blocking(move || gs(&remote_args.iter().map(String::as_str).collect::<Vec<_>>()))
        .await
        .unwrap();

    // The local run leaves its log beside the copy; replaying it and reading
    // the saved result must both agree with the service.
    let local_log = read_log(&dir.path().join("p.events.jsonl")).unwrap();
    let replayed = replay(&base, &local_log).unwrap().digest();
    let service = client.digest().await.unwrap();
    assert_eq!(replayed, service, "{}: replayed local log vs service", c.verb);
    if c.mutates && local.status.success() {
        let saved = load_project(&dir.path().join("p.patched.json")).unwrap().digest();
        assert_eq!(saved, service, "{}: saved project vs service", c.verb);
        assert_ne!(saved, base.digest());
    } else {
        assert_eq!(service, base.digest(), "{} must not mutate", c.verb);
    }

    let remote_log: Vec<EventRecord> = client
        .events(0)
        .await
        .unwrap()
        .into_iter()
        .map(|v| serde_json::from_value(v).unwrap())
        .collect();
    assert_eq!(remote_log.len(), 2);
    assert_eq!(local_log.len(), 2);
    for (l, r) in local_log.iter().zip(&remote_log) {
        assert_eq!((&l.op, &l.args, &l.digest), (&r.op, &r.args, &r.digest));
    }
    assert_eq!(remote_log[1].actor, Actor::Script);

    let side = |o: Output| {
        if o.status.success() {
            Ok(serde_json::from_slice(&o.stdout).expect("stdout is JSON"))
        } else {
            Err(String::from_utf8_lossy(&o.stderr).into_owned())
        }
    };
    (side(local), side(remote))
}

async fn agree(project: &Path, cases: &[Case]) {
    for c in cases {
        let (l, r) = both(project, c).await;
        assert!(l.is_ok(), "{} {:?} failed locally: {l:?}", c.verb, c.args);
        assert_eq!(l, r, "{} {:?}", c.verb, c.args);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn harpoon_verbs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "harpoon-fsm", &["--key-length", "2", "--padding", "300"]);
    let attack = ok_json(gs(&["--json", "attack-harpoon", p.to_str().unwrap()]));
    let ffs: Vec<String> = attack["ff_ids"].as_array().unwrap().iter().map(|v| v.to_string()).collect();
    let ffs = ffs.join(",");
    let bits: String = attack["reset_bits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| if b.as_bool().unwrap() { '1' } else { '0' })
        .collect();
    agree(
        &p,
        &[
            case("lint", &[]),
            case("fsm-candidates", &["--top", "3"]),
            case("extract-stg", &["--ffs", &ffs]),
            case("attack-harpoon", &[]),
            case("patch-init", &["--ffs", &ffs, "--bits", &bits]),
            case("sim", &["--cycles", "25", "--seed", "4"]),
        ],
    )
    .await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sea_of_gates_simulation_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "fsm-sea-of-gates", &["--padding", "300"]);
    agree(
        &p,
        &[
            case("sim", &["--cycles", "40", "--seed", "9", "--probe", "in0", "--probe", "fsm_st0"]),
            case("sim", &["--cycles", "5"]),
        ],
    )
    .await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn aes_verbs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "aes-fixed-key", &[]);
    let clocking = dir.path().join("aes-fixed-key.clocking.json");
    agree(
        &p,
        &[
            case("locate-aes", &[]),
            case("extract-key", &["--clocking", clocking.to_str().unwrap(), "--samples", "2"]),
        ],
    )
    .await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn failures_agree_and_are_logged() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "fsm-sea-of-gates", &["--padding", "300"]);
    for c in [
        case("patch-init", &["--ffs", "1,2", "--bits", "01"]),
        case("extract-stg", &["--ffs", "999999"]),
        case("sim", &["--cycles", "3", "--probe", "no_such_net"]),
    ] {
        let (l, r) = both(&p, &c).await;
        let (l, r) = (l.unwrap_err(), r.unwrap_err());
        assert_eq!(l, r, "{}", c.verb);
        assert!(l.starts_with("error: "), "{l}");
    }
}

#[test]
fn gen_writes_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let v = ok_json(gs(&["--json", "gen", "aes-fixed-key", "-o", out.to_str().unwrap(), "--verilog"]));
    let files: Vec<&str> = v["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for suffix in ["a.json", "a.truth.json", "a.clocking.json", "a.v"] {
        assert!(files.iter().any(|f| f.ends_with(suffix)), "{suffix} missing from {files:?}");
        assert!(dir.path().join(suffix).exists());
    }
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["spec"]["kind"], "aes_fixed_key");
    // Same seed, same bytes.
    let again = dir.path().join("b.json");
    ok_json(gs(&["--json", "gen", "aes-fixed-key", "-o", again.to_str().unwrap()]));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn obfuscated_machine_is_attackable() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "fsm-sea-of-gates", &["--padding", "200"]);
    let truth: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fsm-sea-of-gates.truth.json")).unwrap()).unwrap();
    let ffs: Vec<String> = truth["truth"]["fsm_ffs"].as_array().unwrap().iter().map(|v| v.to_string()).collect();
    let stg = ok_json(gs(&["--json", "extract-stg", p.to_str().unwrap(), "--ffs", &ffs.join(",")]));
    let stg_path = dir.path().join("stg.json");
    std::fs::write(&stg_path, stg.to_string()).unwrap();
    let locked = dir.path().join("locked.json");
    let out = ok_json(gs(&[
        "--json",
        "obfuscate",
        stg_path.to_str().unwrap(),
        "--key",
        "1,2,3",
        "--extra-loop-states",
        "2",
        "--netlist",
        locked.to_str().unwrap(),
    ]));
    assert_eq!(out["layout"]["key_chain"].as_array().unwrap().len(), 3);
    let attack = ok_json(gs(&["--json", "attack-harpoon", locked.to_str().unwrap()]));
    assert_eq!(attack["key"], serde_json::json!([1, 2, 3]));
    let bad = gs(&["obfuscate", stg_path.to_str().unwrap(), "--key", "1", "--netlist", "x.json", "--encoding", "gray"]);
    assert!(!bad.status.success());
}

#[test]
fn replay_reports_the_patched_digest() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "harpoon-fsm", &["--key-length", "1", "--padding", "100"]);
    assert!(dir.path().join("harpoon-fsm.reference.json").exists());
    let attack = ok_json(gs(&["--json", "attack-harpoon", p.to_str().unwrap()]));
    let ffs: Vec<String> = attack["ff_ids"].as_array().unwrap().iter().map(|v| v.to_string()).collect();
    let bits: String = attack["reset_bits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| if b.as_bool().unwrap() { '1' } else { '0' })
        .collect();
    let patched = dir.path().join("fixed.json");
    ok_json(gs(&[
        "--json",
        "patch-init",
        p.to_str().unwrap(),
        "--ffs",
        &ffs.join(","),
        "--bits",
        &bits,
        "-o",
        patched.to_str().unwrap(),
    ]));
    let r = ok_json(gs(&["--json", "replay", p.to_str().unwrap()]));
    assert_eq!(r["digest"], load_project(&patched).unwrap().digest());
    // The patched design no longer needs a key.
    let again = gs(&["attack-harpoon", patched.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("NoObfuscatedFsm"));
}

#[test]
fn project_commands_need_exactly_one_target() {
    let none = gs(&["lint"]);
    assert!(!none.status.success());
    assert!(String::from_utf8_lossy(&none.stderr).contains("project file is required"));
}
