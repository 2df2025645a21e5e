use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use gatescope_client::{Client, ClientError};
use gatescope_core::formats::{load_project, save_project, write_project, write_structural_verilog};
use gatescope_core::fsm::{harpoon_obfuscate, synthesize_stg, Encoding, HarpoonConfig, Stg};
use gatescope_core::model::Project;
use gatescope_core::sim::Trace;
use gatescope_core::trace::{metrics, read_log, replay, EventLog, DEFAULT_IDLE_THRESHOLD_MS};
use gatescope_core::workbench::{generate_project, run_command, Clock, ProjectKind, ProjectSpec, Session};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gatescope", version, about = "Gate-level netlist reverse-engineering workbench")]
struct Cli {
    /// Run project commands on a service at this address instead of a local file.
    #[arg(long, global = true, env = "GATESCOPE_SERVER")]
    server: Option<String>,
    /// Print the JSON result instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Target {
    /// Project file; omit when using --server.
    project: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a study project and its sidecars.
    Gen {
        kind: ProjectKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        padding: Option<usize>,
        #[arg(long)]
        states: Option<u64>,
        #[arg(long)]
        input_bits: Option<usize>,
        #[arg(long)]
        key_length: Option<usize>,
        #[arg(long)]
        extra_loop_states: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the netlist as structural Verilog.
        #[arg(long)]
        verilog: bool,
    },
    Lint {
        #[command(flatten)]
        target: Target,
    },
    FsmCandidates {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    ExtractStg {
        #[command(flatten)]
        target: Target,
        /// State flip-flop ids, comma separated.
        #[arg(long, required = true, value_delimiter = ',')]
        ffs: Vec<u32>,
        /// Input nets; derived from the cone when omitted.
        #[arg(long, value_delimiter = ',')]
        inputs: Option<Vec<String>>,
    },
    /// Lock an STG behind a key sequence.
    Obfuscate {
        /// STG JSON, as printed by `extract-stg --json`.
        stg: PathBuf,
        #[arg(long, required = true, value_delimiter = ',')]
        key: Vec<u32>,
        #[arg(long, default_value_t = 0)]
        extra_loop_states: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the obfuscated STG and layout.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also synthesize the locked machine into a project file.
        #[arg(long)]
        netlist: Option<PathBuf>,
        #[arg(long, default_value = "binary")]
        encoding: String,
    },
    AttackHarpoon {
        #[command(flatten)]
        target: Target,
    },
    PatchInit {
        #[command(flatten)]
        target: Target,
        #[arg(long, required = true, value_delimiter = ',')]
        ffs: Vec<u32>,
        /// Power-up bits in FF order, e.g. 0110.
        #[arg(long)]
        bits: String,
        /// Output project; defaults to <project>.patched.json.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    LocateAes {
        #[command(flatten)]
        target: Target,
    },
    ExtractKey {
        #[command(flatten)]
        target: Target,
        /// Interface description of the design.
        #[arg(long)]
        clocking: PathBuf,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Sim {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        cycles: usize,
        #[arg(long)]
        probe: Vec<String>,
        /// Random input stimulus; inputs stay 0 without it.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        vcd: Option<PathBuf>,
    },
    /// Session metrics of an event log.
    Metrics {
        /// Event log; omit when using --server.
        events: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_IDLE_THRESHOLD_MS)]
        idle_ms: u64,
    },
    /// Replay an event log onto its base project and report the digest.
    Replay {
        project: PathBuf,
        /// Defaults to <project>.events.jsonl.
        events: Option<PathBuf>,
    },
    /// Serve a project over HTTP.
    Serve {
        project: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
    },
}

/// `dir/name.json` with suffix `x` becomes `dir/name.x`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn session_id() -> String {
    let t = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    format!("cli-{}-{t}", std::process::id())
}

fn open_session(project: &Path) -> anyhow::Result<Session> {
    let p = load_project(project).with_context(|| format!("loading {}", project.display()))?;
    let log = EventLog::with_file(session_id(), &sidecar(project, "events.jsonl"))?;
    Ok(Session::new(p, log, Clock::wall())?)
}

fn write_json(path: &Path, v: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

struct Reply {
    text: String,
    data: Value,
}

struct Runner {
    client: Option<Client>,
}

impl Runner {
    /// Runs one command line on the service or on a local session. The
    /// local session is returned so callers can save mutations.
    async fn run(&self, target: &Target, line: &str) -> anyhow::Result<(Reply, Option<Session>)> {
        match (&self.client, &target.project) {
            (Some(c), None) => {
                let r = c.command(line).await.map_err(api_error)?;
                Ok((Reply { text: r.text, data: r.data }, None))
            }
            (Some(_), Some(_)) => bail!("give either a project file or --server, not both"),
            (None, None) => bail!("a project file is required without --server"),
            (None, Some(path)) => {
                let mut s = open_session(path)?;
                let out = run_command(&mut s, line).map_err(|e| anyhow!("{}: {e}", e.code()))?;
                Ok((Reply { text: out.text, data: out.data }, Some(s)))
            }
        }
    }
}

fn api_error(e: ClientError) -> anyhow::Error {
    match e {
        ClientError::Api { .. } => anyhow!("{e}"),
        other => anyhow!("{}: {other}", other.code()),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn say(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

fn emit(json_out: bool, r: &Reply) {
    if json_out {
        say(&serde_json::to_string_pretty(&r.data).expect("values serialize"));
    } else {
        say(&r.text);
    }
}

async fn simple(runner: &Runner, json_out: bool, target: Target, line: String) -> anyhow::Result<()> {
    let (r, _) = runner.run(&target, &line).await?;
    emit(json_out, &r);
    Ok(())
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

async fn execute(cli: Cli) -> anyhow::Result<()> {
    let runner = Runner {
        client: cli.server.as_deref().map(Client::new),
    };
    let json_out = cli.json;
    match cli.cmd {
        Cmd::Gen {
            kind,
            seed,
            padding,
            states,
            input_bits,
            key_length,
            extra_loop_states,
            out,
            verilog,
        } => {
            let spec = ProjectSpec {
                kind,
                seed,
                padding,
                states,
                input_bits,
                key_length,
                extra_loop_states,
            };
            let g = generate_project(&spec).map_err(|e| anyhow!("{}: {e}", e.code()))?;
            let mut written = vec![out.clone()];
            fs::write(&out, write_project(&Project::new(g.netlist.clone())))
                .with_context(|| format!("writing {}", out.display()))?;
            let truth = sidecar(&out, "truth.json");
            write_json(&truth, &json!({ "spec": g.spec, "truth": g.truth }))?;
            written.push(truth);
            if let Some(r) = &g.reference {
                let path = sidecar(&out, "reference.json");
                save_project(&path, &Project::new(r.clone()))?;
                written.push(path);
            }
            if let Some(c) = g.clocking() {
                let path = sidecar(&out, "clocking.json");
                write_json(&path, &serde_json::to_value(c)?)?;
                written.push(path);
            }
            if verilog {
                let path = sidecar(&out, "v");
                fs::write(&path, write_structural_verilog(&g.netlist))?;
                written.push(path);
            }
            if json_out {
                let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
                say(&json!({ "gates": g.netlist.gate_count(), "files": files }).to_string());
            } else {
                say(&format!("{} gates", g.netlist.gate_count()));
                for p in written {
                    say(&format!("wrote {}", p.display()));
                }
            }
        }
        Cmd::Lint { target } => simple(&runner, json_out, target, "lint".into()).await?,
        Cmd::FsmCandidates { target, top } => simple(&runner, json_out, target, format!("fsm-candidates {top}")).await?,
        Cmd::ExtractStg { target, ffs, inputs } => {
            let mut line = format!("extract-stg {}", join(&ffs, ","));
            if let Some(i) = inputs {
                line.push_str(&format!(" --inputs {}", i.join(",")));
            }
            simple(&runner, json_out, target, line).await?
        }
        Cmd::AttackHarpoon { target } => simple(&runner, json_out, target, "attack-harpoon".into()).await?,
        Cmd::LocateAes { target } => simple(&runner, json_out, target, "locate-aes".into()).await?,
        Cmd::ExtractKey {
            target,
            clocking,
            samples,
            seed,
        } => {
            let path = fs::canonicalize(&clocking).with_context(|| format!("reading {}", clocking.display()))?;
            simple(&runner, json_out, target, format!("extract-key {} {samples} {seed}", path.display())).await?
        }
        Cmd::PatchInit { target, ffs, bits, out } => {
            let line = format!("patch-init {} {bits}", join(&ffs, ","));
            let (r, session) = runner.run(&target, &line).await?;
            if let (Some(s), Some(project)) = (session, &target.project) {
                let out = out.unwrap_or_else(|| sidecar(project, "patched.json"));
                save_project(&out, s.project())?;
                if !json_out {
                    say(&format!("wrote {}", out.display()));
                }
            }
            emit(json_out, &r);
        }
        Cmd::Sim {
            target,
            cycles,
            probe,
            seed,
            vcd,
        } => {
            let mut line = format!("sim {cycles}");
            for p in &probe {
                line.push(' ');
                line.push_str(p);
            }
            if let Some(s) = seed {
                line.push_str(&format!(" --seed {s}"));
            }
            let (r, _) = runner.run(&target, &line).await?;
            if let Some(path) = vcd {
                let trace: Trace = serde_json::from_value(r.data.clone())?;
                fs::write(&path, trace.to_vcd())?;
            }
            emit(json_out, &r);
        }
        Cmd::Metrics { events, idle_ms } => match (&runner.client, events) {
            (Some(_), None) => simple(&runner, json_out, Target { project: None }, format!("metrics {idle_ms}")).await?,
            (Some(_), Some(_)) => bail!("give either an event log or --server, not both"),
            (None, None) => bail!("an event log is required without --server"),
            (None, Some(path)) => {
                let records = read_log(&path)?;
                let m = metrics(&records, idle_ms);
                let data = serde_json::to_value(&m)?;
                emit(json_out, &Reply { text: m.to_string(), data });
            }
        },
        Cmd::Obfuscate {
            stg,
            key,
            extra_loop_states,
            seed,
            out,
            netlist,
            encoding,
        } => {
            let text = fs::read_to_string(&stg).with_context(|| format!("reading {}", stg.display()))?;
            let machine: Stg = serde_json::from_str(&text).context("not an STG")?;
            let cfg = HarpoonConfig {
                key,
                extra_loop_states,
                seed,
            };
            let (locked, layout) = harpoon_obfuscate(&machine, &cfg).map_err(|e| anyhow!("{}: {e}", e.code()))?;
            let data = json!({ "stg": locked, "layout": layout });
            if let Some(path) = &out {
                write_json(path, &data)?;
            }
            if let Some(path) = &netlist {
                let enc = match encoding.as_str() {
                    "binary" => Encoding::Binary,
                    "onehot" => Encoding::Onehot,
                    other => bail!("unknown encoding {other:?}, expected binary or onehot"),
                };
                let n = synthesize_stg(&locked, enc).map_err(|e| anyhow!("{}: {e}", e.code()))?;
                save_project(path, &Project::new(n))?;
            }
            let text = format!(
                "{} states ({} original), key chain {:?}, trap loop {:?}\n",
                locked.states.len(),
                machine.states.len(),
                layout.key_chain,
                layout.trap_loop
            );
            emit(json_out, &Reply { text, data });
        }
        Cmd::Replay { project, events } => {
            let base = load_project(&project).with_context(|| format!("loading {}", project.display()))?;
            let events = events.unwrap_or_else(|| sidecar(&project, "events.jsonl"));
            let records = read_log(&events)?;
            let p = replay(&base, &records).map_err(|e| anyhow!("{}: {e}", e.code()))?;
            let digest = p.digest();
            let text = format!("replayed {} records\ndigest {digest}\n", records.len());
            emit(json_out, &Reply { text, data: json!({ "records": records.len(), "digest": digest }) });
        }
        Cmd::Serve { project, bind } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let session = open_session(&project)?;
            let bound = gatescope_server::bind(&bind, session).await?;
            say(&format!("listening on http://{}", bound.local_addr()));
            bound
                .run_until(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    match execute(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
