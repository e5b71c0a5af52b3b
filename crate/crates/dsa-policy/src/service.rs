//! HTTP+JSON service over a [`SharedStore`].

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dsa_policy_core::dsl::{parse_policy_doc, restriction_clause, serialize_policy_doc, PolicyDocument};
use dsa_policy_core::model::{ClassId, FrequencyRange, Policy, PolicyId, RegionId, Restriction};
use dsa_policy_core::reasoner::evaluate;
use dsa_policy_core::store::{EffectFacet, Facet, FacetFilter, Snapshot, StoreError};
use rayon::ThreadPool;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::batch::evaluate_parallel;
use crate::capture::{parse_capture_csv, parse_frequency_cell};
use crate::persist::Mutation;
use crate::regions::regions_to_geojson;
use crate::shared::{MutationError, SharedStore};
use crate::taxonomy_file::taxonomy_records;
use crate::wire::{
    describe_restriction, request_from_value, ApiError, BatchItem, FieldError, PolicyJson, ProvenanceJson, ResultJson,
};

pub const DEFAULT_BATCH_CAP: usize = 1_000;
pub const ACTOR_HEADER: &str = "x-actor";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SharedStore>,
    pub batch_cap: usize,
    pub pool: Arc<ThreadPool>,
}

impl AppState {
    pub fn new(store: Arc<SharedStore>, batch_cap: usize, pool: ThreadPool) -> Self {
        Self {
            store,
            batch_cap,
            pool: Arc::new(pool),
        }
    }
}

/// Error response: a status plus exactly one [`ApiError`] body.
#[derive(Debug)]
pub struct Failure(pub StatusCode, pub ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type Reply = Result<(StatusCode, Json<Value>), Failure>;

fn ok(body: Value) -> Reply {
    Ok((StatusCode::OK, Json(body)))
}

fn bad_request(e: &FieldError) -> Failure {
    Failure(StatusCode::BAD_REQUEST, ApiError::from(e))
}

fn not_found(what: &str, id: &str) -> Failure {
    Failure(
        StatusCode::NOT_FOUND,
        ApiError::new("not_found", format!("{what} '{id}' not found")),
    )
}

fn store_failure(e: MutationError) -> Failure {
    match e {
        MutationError::Io(e) => Failure(StatusCode::INTERNAL_SERVER_ERROR, ApiError::new("persistence", e)),
        MutationError::Store(e) => {
            let (status, code) = match &e {
                StoreError::UnknownPolicy(_) => (StatusCode::NOT_FOUND, "not_found"),
                StoreError::DuplicateId(_) => (StatusCode::CONFLICT, "duplicate_id"),
                StoreError::UnknownParent { .. }
                | StoreError::UnknownRegion { .. }
                | StoreError::Cycle(_)
                | StoreError::HasChildren { .. } => (StatusCode::CONFLICT, "referential_conflict"),
                StoreError::IdMismatch { .. } | StoreError::Invalid { .. } => (StatusCode::BAD_REQUEST, "invalid_policy"),
                StoreError::UnknownFilterClass(_) | StoreError::UnknownFilterRegion(_) => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "unresolvable")
                }
            };
            let detail = match &e {
                StoreError::HasChildren { children, .. } => Some(json!({ "children": children.iter().map(PolicyId::as_str).collect::<Vec<_>>() })),
                _ => None,
            };
            let mut err = ApiError::new(code, &e);
            err.detail = detail;
            Failure(status, err)
        }
    }
}

fn parse_json(body: &[u8]) -> Result<Value, Failure> {
    serde_json::from_slice(body).map_err(|e| {
        Failure(
            StatusCode::BAD_REQUEST,
            ApiError::new("invalid_json", &e).with_detail(json!({ "line": e.line(), "column": e.column() })),
        )
    })
}

fn actor(headers: &HeaderMap) -> Result<String, Failure> {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| {
            Failure(
                StatusCode::BAD_REQUEST,
                ApiError::new("missing_actor", "mutations require an X-Actor header"),
            )
        })
}

enum BodyKind {
    Json,
    Csv,
    Dsl,
}

fn body_kind(headers: &HeaderMap) -> BodyKind {
    let ct = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ct.starts_with("application/json") {
        BodyKind::Json
    } else if ct.starts_with("text/csv") {
        BodyKind::Csv
    } else {
        BodyKind::Dsl
    }
}

/// Reads a policy body: DSL text, capture CSV, or policy JSON (one object or a list).
fn policy_body(headers: &HeaderMap, body: &[u8], snap: &Snapshot) -> Result<PolicyDocument, Failure> {
    let text = || {
        std::str::from_utf8(body).map_err(|e| bad_request(&FieldError::new("body", format!("body is not UTF-8: {e}"))))
    };
    match body_kind(headers) {
        BodyKind::Json => {
            let value = parse_json(body)?;
            let items: Vec<Value> = match value {
                Value::Array(items) => items,
                other => vec![other],
            };
            let mut policies = Vec::with_capacity(items.len());
            let mut ids = BTreeSet::new();
            for (i, item) in items.into_iter().enumerate() {
                let pj: PolicyJson = serde_json::from_value(item)
                    .map_err(|e| bad_request(&FieldError::new(format!("[{i}]"), e)))?;
                let p = pj.to_policy(Some(snap.regions())).map_err(|e| bad_request(&e))?;
                if !ids.insert(p.id.clone()) {
                    return Err(bad_request(&FieldError::new(format!("[{i}].id"), format!("duplicate policy id '{}'", p.id))));
                }
                policies.push(p);
            }
            Ok(PolicyDocument::from_policies(policies))
        }
        BodyKind::Csv => parse_capture_csv(text()?, snap.regions(), &|id| snap.policy(id).is_some())
            .map_err(|e| Failure(StatusCode::BAD_REQUEST, ApiError::new("parse_error", e))),
        BodyKind::Dsl => parse_policy_doc(text()?).map_err(|e| {
            Failure(
                StatusCode::BAD_REQUEST,
                ApiError::new("parse_error", &e.kind).with_detail(json!({ "line": e.pos.line, "column": e.pos.column })),
            )
        }),
    }
}

async fn evaluate_one(State(state): State<AppState>, body: Bytes) -> Reply {
    let request = request_from_value(parse_json(&body)?).map_err(|e| bad_request(&e))?;
    let snap = state.store.snapshot();
    let result = evaluate(&request, &snap)
        .map_err(|e| Failure(StatusCode::UNPROCESSABLE_ENTITY, ApiError::from(&e)))?;
    ok(json!(ResultJson::new(&result, snap.version())))
}

async fn evaluate_many(State(state): State<AppState>, body: Bytes) -> Reply {
    let items = match parse_json(&body)? {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("requests") {
            Some(Value::Array(items)) => items,
            _ => return Err(bad_request(&FieldError::new("requests", "expected an array of requests"))),
        },
        _ => return Err(bad_request(&FieldError::new("body", "expected an array of requests"))),
    };
    if items.len() > state.batch_cap {
        return Err(Failure(
            StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::new("batch_too_large", format!("batch of {} exceeds the cap of {}", items.len(), state.batch_cap))
                .with_detail(json!({ "cap": state.batch_cap })),
        ));
    }
    let snap = state.store.snapshot();
    let pool = state.pool.clone();
    let version = snap.version();
    let results = tokio::task::spawn_blocking(move || {
        let mut slots: Vec<Option<BatchItem>> = Vec::with_capacity(items.len());
        let mut valid = Vec::new();
        let mut positions = Vec::new();
        for (i, item) in items.into_iter().enumerate() {
            let request_id = item.get("id").and_then(Value::as_str).map(str::to_string);
            match request_from_value(item) {
                Ok(r) => {
                    valid.push(r);
                    positions.push(i);
                    slots.push(None);
                }
                Err(mut e) => {
                    e.field = format!("[{i}].{}", e.field);
                    slots.push(Some(BatchItem::Err {
                        request_id,
                        error: ApiError::from(&e),
                    }));
                }
            }
        }
        let outcomes = evaluate_parallel(&valid, &snap, &pool);
        for ((pos, req), outcome) in positions.into_iter().zip(&valid).zip(outcomes) {
            slots[pos] = Some(match outcome {
                Ok(r) => BatchItem::Ok(ResultJson::new(&r, version)),
                Err(e) => BatchItem::Err {
                    request_id: Some(req.id.clone()),
                    error: ApiError::from(&e),
                },
            });
        }
        slots.into_iter().map(|s| s.expect("every slot filled")).collect::<Vec<_>>()
    })
    .await
    .map_err(|e| Failure(StatusCode::INTERNAL_SERVER_ERROR, ApiError::new("internal", e)))?;
    ok(json!({ "snapshot_version": version, "results": results }))
}

async fn list_policies(State(state): State<AppState>) -> Reply {
    let snap = state.store.snapshot();
    let policies: Vec<PolicyJson> = snap.policies().values().map(PolicyJson::from_policy).collect();
    ok(json!({ "version": snap.version(), "policies": policies }))
}

async fn create_policies(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Reply {
    let who = actor(&headers)?;
    let doc = policy_body(&headers, &body, &state.store.snapshot())?;
    let applied = state.store.apply(Mutation::Add(doc), &who).map_err(store_failure)?;
    let ids: Vec<&str> = applied.ids.iter().map(PolicyId::as_str).collect();
    Ok((StatusCode::CREATED, Json(json!({ "version": applied.version, "ids": ids }))))
}

fn policy_view(snap: &Snapshot, p: &Policy) -> Value {
    json!({
        "version": snap.version(),
        "policy": PolicyJson::from_policy(p),
        "text": serialize_policy_doc([p]),
    })
}

async fn get_policy(State(state): State<AppState>, Path(id): Path<String>) -> Reply {
    let snap = state.store.snapshot();
    let p = snap.policy(&id.as_str().into()).ok_or_else(|| not_found("policy", &id))?;
    ok(policy_view(&snap, p))
}

async fn put_policy(State(state): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Reply {
    let who = actor(&headers)?;
    let snap = state.store.snapshot();
    let doc = policy_body(&headers, &body, &snap)?;
    let [policy] = <[Policy; 1]>::try_from(doc.policies).map_err(|ps| {
        bad_request(&FieldError::new("body", format!("expected exactly one policy, found {}", ps.len())))
    })?;
    if policy.id.as_str() != id {
        return Err(bad_request(&FieldError::new(
            "id",
            format!("body id '{}' does not match path id '{id}'", policy.id),
        )));
    }
    let applied = state.store.apply(Mutation::Revise(policy), &who).map_err(store_failure)?;
    ok(json!({ "version": applied.version, "ids": [id] }))
}

#[derive(Debug, Deserialize)]
struct DeleteParams {
    #[serde(default)]
    cascade: bool,
}

async fn delete_policy(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<DeleteParams>,
    headers: HeaderMap,
) -> Reply {
    let who = actor(&headers)?;
    let m = Mutation::Delete {
        id: id.as_str().into(),
        cascade: params.cascade,
    };
    let applied = state.store.apply(m, &who).map_err(store_failure)?;
    let removed: Vec<&str> = applied.ids.iter().map(PolicyId::as_str).collect();
    ok(json!({ "version": applied.version, "removed": removed }))
}

#[derive(Debug, Default, Deserialize)]
pub struct FacetParams {
    pub region: Option<String>,
    pub class: Option<String>,
    pub freq: Option<String>,
    pub effect: Option<String>,
}

/// Accepts "1760MHz", "1760 MHz", "1755-1780 MHz".
fn parse_freq_param(text: &str) -> Result<FrequencyRange, FieldError> {
    let t = text.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(|| FieldError::new("freq", "frequency needs a unit, e.g. 1760MHz"))?;
    let (num, unit) = t.split_at(split);
    parse_frequency_cell(&format!("{} {}", num.trim(), unit)).map_err(|e| FieldError::new("freq", e))
}

fn parse_effect_param(text: &str) -> Result<EffectFacet, FieldError> {
    match text.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
        "permit" => Ok(EffectFacet::Permit),
        "deny" => Ok(EffectFacet::Deny),
        "permitwithobligations" => Ok(EffectFacet::PermitWithObligations),
        "none" => Ok(EffectFacet::NoEffect),
        _ => Err(FieldError::new("effect", format!("unknown effect '{text}'"))),
    }
}

pub fn facet_filter(params: &FacetParams, snap: &Snapshot) -> Result<FacetFilter, Failure> {
    let unresolvable = |what: &str, token: &str| {
        Failure(
            StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::new("unresolvable", format!("unknown {what} '{token}'")).with_detail(json!({ what: token })),
        )
    };
    let regions = match params.region.as_deref().filter(|s| !s.is_empty()) {
        None => None,
        Some(list) => {
            let mut ids = BTreeSet::new();
            for token in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let id: RegionId = snap.regions().resolve(token).cloned().ok_or_else(|| unresolvable("region", token))?;
                ids.insert(id);
            }
            Some(ids)
        }
    };
    let requester_class = match params.class.as_deref().filter(|s| !s.is_empty()) {
        None => None,
        Some(c) => {
            let id = ClassId::from(c);
            if !snap.taxonomy().contains(&id) && !snap.pending_terms().contains(&id) {
                return Err(unresolvable("class", c));
            }
            Some(id)
        }
    };
    Ok(FacetFilter {
        regions,
        requester_class,
        frequency: params
            .freq
            .as_deref()
            .filter(|s| !s.is_empty())
            .map(parse_freq_param)
            .transpose()
            .map_err(|e| bad_request(&e))?,
        effect: params
            .effect
            .as_deref()
            .filter(|s| !s.is_empty())
            .map(parse_effect_param)
            .transpose()
            .map_err(|e| bad_request(&e))?,
    })
}

fn facet_name(f: Facet) -> &'static str {
    match f {
        Facet::Region => "region",
        Facet::RequesterClass => "class",
        Facet::Frequency => "freq",
        Facet::Effect => "effect",
    }
}

async fn facets(State(state): State<AppState>, Query(params): Query<FacetParams>) -> Reply {
    let snap = state.store.snapshot();
    let filter = facet_filter(&params, &snap)?;
    let matches = snap
        .facet_query(&filter)
        .map_err(|e| store_failure(MutationError::Store(e)))?;
    let matches: Vec<Value> = matches
        .iter()
        .map(|m| json!({ "policy_id": m.policy_id.as_str(), "matched": m.matched.iter().map(|f| facet_name(*f)).collect::<Vec<_>>() }))
        .collect();
    ok(json!({ "version": snap.version(), "matches": matches }))
}

async fn provenance(State(state): State<AppState>, Path(id): Path<String>) -> Reply {
    let records: Vec<ProvenanceJson> = state
        .store
        .provenance_of(&id.as_str().into())
        .iter()
        .map(ProvenanceJson::from)
        .collect();
    if records.is_empty() {
        return Err(not_found("policy", &id));
    }
    ok(json!({ "policy_id": id, "records": records }))
}

async fn detail(State(state): State<AppState>, Path(id): Path<String>) -> Reply {
    let snap = state.store.snapshot();
    let pid = PolicyId::from(id.as_str());
    let p = snap.policy(&pid).ok_or_else(|| not_found("policy", &id))?;
    let chain = snap.chain(&pid).unwrap_or(&[]);
    let mut contributing: Vec<&str> = Vec::new();
    let mut region_ids = BTreeSet::new();
    let rendered: Vec<Value> = chain
        .iter()
        .map(|l| {
            if contributing.last() != Some(&l.policy_id.as_str()) {
                contributing.push(l.policy_id.as_str());
            }
            if let Restriction::LocationWithinAny(set) = &l.restriction {
                region_ids.extend(set.iter().cloned());
            }
            json!({
                "policy_id": l.policy_id.as_str(),
                "position": l.position,
                "clause": restriction_clause(&l.restriction),
                "description": describe_restriction(&l.restriction, snap.regions()),
            })
        })
        .collect();
    let mut lineage = Vec::new();
    let mut cursor = Some(p);
    while let Some(c) = cursor {
        lineage.push(c.id.as_str());
        cursor = c.parent.as_ref().and_then(|x| snap.policy(x));
    }
    lineage.reverse();
    let records: Vec<ProvenanceJson> = state.store.provenance_of(&pid).iter().map(ProvenanceJson::from).collect();
    let mut body = policy_view(&snap, p);
    body["lineage"] = json!(lineage);
    body["chain"] = json!(rendered);
    body["contributing_policies"] = json!(contributing);
    body["regions"] = regions_to_geojson(region_ids.iter().filter_map(|r| snap.regions().get(r)));
    body["provenance"] = json!(records);
    body["children"] = json!(snap.children(&pid).iter().map(PolicyId::as_str).collect::<Vec<_>>());
    ok(body)
}

async fn taxonomy(State(state): State<AppState>) -> Reply {
    let snap = state.store.snapshot();
    let pending: Vec<&str> = snap.pending_terms().iter().map(ClassId::as_str).collect();
    ok(json!({ "classes": taxonomy_records(snap.taxonomy()), "pending_terms": pending }))
}

async fn regions(State(state): State<AppState>) -> Reply {
    ok(regions_to_geojson(state.store.snapshot().regions().iter()))
}

async fn fallback() -> Failure {
    Failure(StatusCode::NOT_FOUND, ApiError::new("not_found", "no such endpoint"))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/evaluate", post(evaluate_one))
        .route("/evaluate/batch", post(evaluate_many))
        .route("/policies", get(list_policies).post(create_policies))
        .route("/policies/facets", get(facets))
        .route("/policies/{id}", get(get_policy).put(put_policy).delete(delete_policy))
        .route("/policies/{id}/provenance", get(provenance))
        .route("/policies/{id}/detail", get(detail))
        .route("/taxonomy", get(taxonomy))
        .route("/regions", get(regions))
        .fallback(fallback)
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
