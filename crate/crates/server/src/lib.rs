//! JSON-over-HTTP front end for [`AnnotationService`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/documents` | `{"text", "doc_id"?}` | 201 `{"doc_id", "annotations"}` |
//! | GET | `/documents` | | `{"documents"}` |
//! | GET | `/documents/{id}/annotations` | | `{"doc_id", "annotations"}` |
//! | POST | `/annotations/{id}/decision` | `{"action", "target"?, "actor"}` | `{"annotations"}` |
//! | GET | `/documents/{id}/export.xml` | | `application/xml` |
//! | GET | `/decisions?since=<rfc3339>` | | `{"events"}` |
//!
//! Errors are `{"error": <kind>, "message"}` with status 400 (validation),
//! 404 (unknown id), 409 (conflict) or 500.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use semlabel_core::annotation::{
    Action, AnnotationRecord, AnnotationService, CandidateState, DecisionEvent, DocumentSummary, SpanState,
};
use semlabel_core::{ConceptId, Error, OntologySnapshot};

#[derive(Clone)]
pub struct AppState {
    service: Arc<AnnotationService>,
    names: Arc<HashMap<ConceptId, String>>,
}

impl AppState {
    pub fn new(service: Arc<AnnotationService>) -> Self {
        AppState {
            service,
            names: Arc::default(),
        }
    }

    /// Primary names shown next to candidate ids.
    pub fn with_names(mut self, snapshot: &OntologySnapshot) -> Self {
        self.names = Arc::new(snapshot.concepts().map(|c| (c.id.clone(), c.primary_name.clone())).collect());
        self
    }

    pub fn service(&self) -> &AnnotationService {
        &self.service
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/documents", post(submit_document).get(list_documents))
        .route("/documents/{id}/annotations", get(annotations))
        .route("/documents/{id}/export.xml", get(export_xml))
        .route("/annotations/{id}/decision", post(decide))
        .route("/decisions", get(decisions))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::Validation(_) | Error::Parse { .. } => (StatusCode::BAD_REQUEST, "validation"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) | Error::Duplicate(_) => (StatusCode::CONFLICT, "conflict"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        ApiError {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

fn bad_request(message: String) -> ApiError {
    ApiError {
        status: StatusCode::BAD_REQUEST,
        kind: "validation",
        message,
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        bad_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        bad_request(r.body_text())
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CandidateView {
    pub concept: ConceptId,
    pub ontology: String,
    pub local_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_name: Option<String>,
    pub state: CandidateState,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct AnnotationView {
    pub annotation_id: String,
    pub doc_id: String,
    /// Character offsets into the document text.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub normalized_key: String,
    pub span_state: SpanState,
    pub updated_at: DateTime<Utc>,
    pub candidates: Vec<CandidateView>,
}

impl AppState {
    fn view(&self, r: AnnotationRecord) -> AnnotationView {
        let candidates = r
            .candidate_states
            .into_iter()
            .map(|(concept, state)| CandidateView {
                ontology: concept.ontology().to_owned(),
                local_id: concept.local_id().to_owned(),
                primary_name: self.names.get(&concept).cloned(),
                concept,
                state,
            })
            .collect();
        AnnotationView {
            annotation_id: r.annotation_id,
            doc_id: r.occurrence.doc_id,
            start: r.occurrence.start,
            end: r.occurrence.end,
            surface: r.occurrence.surface,
            normalized_key: r.occurrence.normalized_key,
            span_state: r.span_state,
            updated_at: r.updated_at,
            candidates,
        }
    }

    fn views(&self, records: Vec<AnnotationRecord>) -> Vec<AnnotationView> {
        records.into_iter().map(|r| self.view(r)).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub text: String,
    #[serde(default)]
    pub doc_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DocumentAnnotations {
    pub doc_id: String,
    pub annotations: Vec<AnnotationView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub action: Action,
    #[serde(default)]
    pub target: Option<ConceptId>,
    pub actor: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionReply {
    pub annotations: Vec<AnnotationView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionLog {
    pub events: Vec<DecisionEvent>,
}

#[derive(Debug, Serialize)]
struct DocumentList {
    documents: Vec<DocumentSummary>,
}

#[derive(Debug, Deserialize)]
struct SinceQuery {
    since: Option<DateTime<Utc>>,
}

async fn submit_document(
    State(state): State<AppState>,
    body: Result<Json<SubmitRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<DocumentAnnotations>), ApiError> {
    let Json(req) = body?;
    let (doc_id, records) = state.service.submit_document(&req.text, req.doc_id.as_deref())?;
    let annotations = state.views(records);
    Ok((StatusCode::CREATED, Json(DocumentAnnotations { doc_id, annotations })))
}

async fn list_documents(State(state): State<AppState>) -> Json<DocumentList> {
    Json(DocumentList {
        documents: state.service.documents(),
    })
}

async fn annotations(
    State(state): State<AppState>,
    Path(doc_id): Path<String>,
) -> Result<Json<DocumentAnnotations>, ApiError> {
    let records = state.service.annotations(&doc_id)?;
    Ok(Json(DocumentAnnotations {
        annotations: state.views(records),
        doc_id,
    }))
}

async fn decide(
    State(state): State<AppState>,
    Path(annotation_id): Path<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<DecisionReply>, ApiError> {
    let Json(req) = body?;
    if req.actor.trim().is_empty() {
        return Err(bad_request("actor is empty".into()));
    }
    let records = state
        .service
        .record_decision(&annotation_id, req.action, req.target.as_ref(), &req.actor)?;
    Ok(Json(DecisionReply {
        annotations: state.views(records),
    }))
}

async fn export_xml(State(state): State<AppState>, Path(doc_id): Path<String>) -> Result<Response, ApiError> {
    let xml = state.service.export_xml(&doc_id)?;
    Ok(([(header::CONTENT_TYPE, "application/xml; charset=utf-8")], xml).into_response())
}

async fn decisions(
    State(state): State<AppState>,
    query: Result<Query<SinceQuery>, QueryRejection>,
) -> Result<Json<DecisionLog>, ApiError> {
    let Query(q) = query?;
    Ok(Json(DecisionLog {
        events: state.service.decision_log(q.since),
    }))
}
