use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use gatescope_core::logic::net_function;
use gatescope_core::model::{GateId, Mutation, Pin, Rgb, SubmoduleId};
use gatescope_core::sim::compile;
use gatescope_core::trace::Actor;
use gatescope_core::workbench::{random_stimulus, run_command, views, Session};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::events;
use crate::AppState;

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

const MAX_RADIUS: usize = 5;
const MAX_TRACE_CYCLES: usize = 100_000;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/netlist/summary", get(summary))
        .route("/graph", get(graph))
        .route("/gate/{id}", get(gate))
        .route("/submodules", get(list_submodules).post(create_submodule))
        .route("/submodules/{id}/gates", post(submodule_gates))
        .route("/select", post(select))
        .route("/command", post(command))
        .route("/trace", get(trace))
        .route("/events", get(event_list))
        .route("/events/stream", get(events::stream))
}

/// JSON body whose rejections surface as `ArgumentError`.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::argument(rejection_text(e))),
        }
    }
}

fn rejection_text(e: JsonRejection) -> String {
    format!("malformed request body: {}", e.body_text())
}

type Params = Query<Vec<(String, String)>>;

fn param<'a>(q: &'a [(String, String)], key: &str) -> Option<&'a str> {
    q.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn num_param<T: std::str::FromStr>(q: &[(String, String)], key: &str, default: Option<T>) -> Result<T, ApiError> {
    match param(q, key) {
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::argument(format!("query parameter {key} must be an integer, got {v:?}"))),
        None => default.ok_or_else(|| ApiError::argument(format!("missing query parameter {key}"))),
    }
}

fn id_param(raw: &str, what: &str) -> Result<u32, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::argument(format!("{what} id must be an integer, got {raw:?}")))
}

fn last_seq(s: &Session) -> u64 {
    s.log().next_seq() - 1
}

fn core_err(s: &Session, e: &gatescope_core::Error) -> ApiError {
    ApiError::from_core(e, Some(last_seq(s)))
}

async fn summary(State(st): State<AppState>) -> Json<Value> {
    Json(st.read(|s| views::summary(s.project())).await)
}

async fn graph(State(st): State<AppState>, Query(q): Params) -> ApiResult {
    let center = num_param::<u32>(&q, "center", None)?;
    let radius = num_param::<usize>(&q, "radius", Some(2))?;
    if !(1..=MAX_RADIUS).contains(&radius) {
        return Err(ApiError::argument(format!("radius must be in 1..={MAX_RADIUS}")));
    }
    st.read(|s| views::graph_window(s.project(), GateId(center), radius))
        .await
        .map(Json)
        .map_err(|e| ApiError::from_core(&e.into(), None))
}

async fn gate(State(st): State<AppState>, Path(raw): Path<String>) -> ApiResult {
    let id = GateId(id_param(&raw, "gate")?);
    st.read(|s| {
        let p = s.project();
        let mut v = views::gate_detail(p, id).map_err(|e| ApiError::from_core(&e.into(), None))?;
        let g = p.netlist.gate(id).expect("detail succeeded");
        let net = if g.kind.is_sequential() { g.input_net(Pin::D) } else { Some(g.output_net()) };
        let function = net
            .and_then(|net| net_function(&p.netlist, net, None).ok())
            .map(|f| f.to_sop(|v| p.netlist.net_name(v).to_string()));
        v["function"] = json!(function);
        Ok(Json(v))
    })
    .await
}

async fn list_submodules(State(st): State<AppState>) -> Json<Value> {
    Json(st.read(|s| views::submodules(s.project())).await)
}

#[derive(Deserialize)]
struct NewSubmodule {
    name: String,
    #[serde(default)]
    color: Option<Rgb>,
}

async fn create_submodule(
    State(st): State<AppState>,
    Body(body): Body<NewSubmodule>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    st.write(move |s| {
        let m = Mutation::CreateSubmodule {
            name: body.name,
            color: body.color,
        };
        match s.apply(Actor::User, m) {
            Ok(targets) => {
                let id = targets[0];
                let sm = views::submodule(s.project().submodule(SubmoduleId(id as u32)).expect("just created"));
                Ok((StatusCode::CREATED, Json(json!({ "id": id, "seq": last_seq(s), "submodule": sm }))))
            }
            Err(e) => Err(core_err(s, &e)),
        }
    })
    .await
}

#[derive(Deserialize)]
struct GateChange {
    gates: Vec<u32>,
    #[serde(default)]
    remove: bool,
}

async fn submodule_gates(
    State(st): State<AppState>,
    Path(raw): Path<String>,
    Body(body): Body<GateChange>,
) -> ApiResult {
    let submodule = SubmoduleId(id_param(&raw, "submodule")?);
    st.write(move |s| {
        let gates = body.gates.into_iter().map(GateId).collect();
        let m = if body.remove {
            Mutation::UnassignGates { submodule, gates }
        } else {
            Mutation::AssignGates { submodule, gates }
        };
        match s.apply(Actor::User, m) {
            Ok(_) => {
                let sm = views::submodule(s.project().submodule(submodule).expect("mutation succeeded"));
                Ok(Json(json!({ "seq": last_seq(s), "submodule": sm })))
            }
            Err(e) => Err(core_err(s, &e)),
        }
    })
    .await
}

#[derive(Deserialize)]
struct Selection {
    gates: Vec<u32>,
}

async fn select(State(st): State<AppState>, Body(body): Body<Selection>) -> ApiResult {
    st.write(move |s| {
        let targets: Vec<u64> = body.gates.iter().map(|g| *g as u64).collect();
        let missing = body.gates.iter().find(|g| !s.project().netlist.contains_gate(GateId(**g)));
        let result: gatescope_core::Result<()> = match missing {
            Some(g) => Err(gatescope_core::model::ModelError::UnknownGate(GateId(*g)).into()),
            None => Ok(()),
        };
        let args = json!({ "gates": body.gates });
        match s.observe(Actor::User, "ui.select", targets, args, result) {
            Ok(()) => Ok(Json(json!({ "seq": last_seq(s) }))),
            Err(e) => Err(core_err(s, &e)),
        }
    })
    .await
}

#[derive(Deserialize)]
struct CommandLine {
    line: String,
}

async fn command(State(st): State<AppState>, Body(body): Body<CommandLine>) -> ApiResult {
    st.write(move |s| match run_command(s, &body.line) {
        Ok(out) => Ok(Json(json!({ "text": out.text, "data": out.data, "seq": last_seq(s) }))),
        Err(e) => Err(core_err(s, &e)),
    })
    .await
}

async fn trace(State(st): State<AppState>, Query(q): Params) -> ApiResult {
    let cycles = num_param::<usize>(&q, "cycles", Some(32))?;
    let seed = num_param::<u64>(&q, "seed", Some(0))?;
    if cycles > MAX_TRACE_CYCLES {
        return Err(ApiError::argument(format!("cycles must be at most {MAX_TRACE_CYCLES}")));
    }
    let probes: Vec<String> = q
        .iter()
        .filter(|(k, _)| k == "probe")
        .flat_map(|(_, v)| v.split(','))
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect();
    st.write(move |s| {
        let n = &s.project().netlist;
        let stim = random_stimulus(n, cycles, seed);
        let refs: Vec<&str> = probes.iter().map(String::as_str).collect();
        let result = compile(n)
            .and_then(|plan| plan.run(&stim, &refs))
            .map_err(gatescope_core::Error::from);
        let args = json!({ "cycles": cycles, "seed": seed, "probes": probes });
        match s.observe(Actor::User, "sim.run", vec![], args, result) {
            Ok(t) => Ok(Json(serde_json::to_value(&t).expect("traces serialize"))),
            Err(e) => Err(core_err(s, &e)),
        }
    })
    .await
}

async fn event_list(State(st): State<AppState>, Query(q): Params) -> ApiResult {
    let after = num_param::<u64>(&q, "after", Some(0))?;
    Ok(Json(st.read(|s| serde_json::to_value(s.records_after(after)).expect("records serialize")).await))
}
