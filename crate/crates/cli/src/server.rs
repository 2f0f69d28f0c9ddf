//! HTTP service: one authoritative, revisioned scene plus background jobs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nalgebra::{Matrix3, Point3, Rotation3};
use ngc_core::edit::{edit_keyframe, reparameterize, KeyframeEdit};
use ngc_core::geometry::{check_rotation, CurveSpec};
use ngc_core::model::NgcModel;
use serde::{Deserialize, Serialize};

use crate::commands::{blend, deform, save_mesh, BlendJob, DeformJob};
use crate::error::{CliError, ErrorKind};
use crate::field::{encode_mesh, extract_shape};
use crate::scene::Document;

pub const DEFAULT_MESH_RESOLUTION: usize = 48;
pub const MAX_MESH_RESOLUTION: usize = 256;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Job artifacts are written below this directory.
    pub data_dir: PathBuf,
    /// Resolution of the background extraction started after every new
    /// revision; 0 disables it.
    pub refine_resolution: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Fit,
    Extract,
    Deform,
    Blend,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct JobRecord {
    pub id: u64,
    pub kind: JobKind,
    pub status: JobStatus,
    pub progress: f64,
    pub artifacts: Vec<String>,
    /// Revision the job produced, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<CliError>,
}

struct Inner {
    current: u64,
    revisions: BTreeMap<u64, Arc<Document>>,
    jobs: BTreeMap<u64, JobRecord>,
    next_job: u64,
}

pub struct AppState {
    model: Arc<NgcModel<f32>>,
    config: ServerConfig,
    inner: Mutex<Inner>,
}

impl AppState {
    pub fn new(model: NgcModel<f32>, doc: Document, config: ServerConfig) -> Result<Arc<Self>, CliError> {
        if doc.latent_count() > model.n_latents() {
            return Err(CliError::schema(format!("scene uses {} latents, model has {}", doc.latent_count(), model.n_latents())));
        }
        let inner = Inner { current: 0, revisions: BTreeMap::from([(0, Arc::new(doc))]), jobs: BTreeMap::new(), next_job: 1 };
        Ok(Arc::new(Self { model: Arc::new(model), config, inner: Mutex::new(inner) }))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn snapshot(&self) -> (u64, Arc<Document>) {
        let inner = self.lock();
        (inner.current, inner.revisions[&inner.current].clone())
    }

    pub fn current_revision(&self) -> u64 {
        self.lock().current
    }

    /// Commits `doc` on top of `base`, or fails if another write came first.
    fn commit(&self, base: u64, doc: Document) -> Result<u64, CliError> {
        let mut inner = self.lock();
        if inner.current != base {
            return Err(conflict(base, inner.current));
        }
        let rev = base + 1;
        inner.revisions.insert(rev, Arc::new(doc));
        inner.current = rev;
        Ok(rev)
    }

    fn new_job(&self, kind: JobKind) -> u64 {
        let mut inner = self.lock();
        let id = inner.next_job;
        inner.next_job += 1;
        let record = JobRecord { id, kind, status: JobStatus::Queued, progress: 0.0, artifacts: vec![], revision: None, error: None };
        inner.jobs.insert(id, record);
        id
    }

    fn update_job(&self, id: u64, f: impl FnOnce(&mut JobRecord)) {
        if let Some(job) = self.lock().jobs.get_mut(&id) {
            f(job);
        }
    }

    fn job_dir(&self, id: u64) -> Result<PathBuf, CliError> {
        let dir = self.config.data_dir.join("jobs").join(id.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        Ok(dir)
    }
}

fn conflict(base: u64, current: u64) -> CliError {
    CliError::new(ErrorKind::Conflict, "stale_revision", format!("base revision {base} is stale (current {current})"))
}

impl IntoResponse for CliError {
    fn into_response(self) -> Response {
        let status = match self.kind {
            ErrorKind::Schema => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Numerical | ErrorKind::Io => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scene", get(get_scene))
        .route("/edit", post(post_edit))
        .route("/deform", post(post_deform))
        .route("/blend", post(post_blend))
        .route("/mesh", get(get_mesh))
        .route("/job/{id}", get(get_job))
        .with_state(state)
}

async fn get_scene(State(state): State<Arc<AppState>>) -> Response {
    let (rev, doc) = state.snapshot();
    let mut file = doc.to_file();
    file.revision = Some(rev);
    Json(file).into_response()
}

/// One GC edit against a base revision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub base_rev: u64,
    /// Global GC index.
    pub gc: usize,
    pub patch: EditPatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EditPatch {
    /// New radii and/or a rotation applied in the key frame's own axes
    /// (row-major 3x3).
    Keyframe {
        index: usize,
        #[serde(default)]
        ry: Option<f64>,
        #[serde(default)]
        rz: Option<f64>,
        #[serde(default)]
        rotation: Option<[f64; 9]>,
    },
    /// New Bezier control points.
    Curve { control_points: Vec<[f64; 3]> },
    /// Monotone piecewise-linear knots `[x, phi(x)]` from `[0, 0]` to `[1, 1]`.
    Reparam { knots: Vec<[f64; 2]> },
}

/// Applies one patch to GC `gc` of `doc`.
pub fn apply_edit(doc: &Document, gc: usize, patch: &EditPatch) -> Result<Document, CliError> {
    let mut out = doc.clone();
    let target = out.gc_mut(gc)?;
    target.gc = match patch {
        EditPatch::Keyframe { index, ry, rz, rotation } => {
            let rotation = rotation
                .map(|r| {
                    let m = Matrix3::from_row_slice(&r);
                    check_rotation(&m, 1e-6).map(|_| Rotation3::from_matrix_unchecked(m))
                })
                .transpose()?;
            edit_keyframe(&target.gc, *index, &KeyframeEdit { r_y: *ry, r_z: *rz, rotation })?
        }
        EditPatch::Curve { control_points } => {
            let pts: Vec<Point3<f64>> = control_points.iter().map(|p| Point3::from(*p)).collect();
            target.gc.with_spec(CurveSpec::from_control_points(&pts)?)?
        }
        EditPatch::Reparam { knots } => {
            let knots: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[1])).collect();
            reparameterize(&target.gc, &knots)?
        }
    };
    Ok(out)
}

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, CliError> {
    Ok(serde_json::from_slice(body)?)
}

#[derive(Serialize)]
struct RevisionReply {
    revision: u64,
}

#[derive(Serialize)]
struct JobReply {
    job: u64,
}

async fn post_edit(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, CliError> {
    let req: EditRequest = parse(&body)?;
    // single writer: check, apply and commit under one lock
    let rev = {
        let mut inner = state.lock();
        if inner.current != req.base_rev {
            return Err(conflict(req.base_rev, inner.current));
        }
        let next = apply_edit(&inner.revisions[&inner.current], req.gc, &req.patch)?;
        let rev = inner.current + 1;
        inner.revisions.insert(rev, Arc::new(next));
        inner.current = rev;
        rev
    };
    let shape = shape_of_gc(&state.snapshot().1, req.gc);
    spawn_refine(&state, rev, shape);
    Ok(Json(RevisionReply { revision: rev }).into_response())
}

fn shape_of_gc(doc: &Document, gc: usize) -> usize {
    let mut first = 0;
    for (i, s) in doc.shapes.iter().enumerate() {
        first += s.gc_count();
        if gc < first {
            return i;
        }
    }
    0
}

async fn post_deform(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, CliError> {
    let job: DeformJob = parse(&body)?;
    let (rev, doc) = state.snapshot();
    check_base(job.base_rev, rev)?;
    let (shape, _) = doc.shape_index(Some(&job.shape))?;
    let id = spawn_edit_job(&state, JobKind::Deform, rev, doc, shape, move |d| deform(d, &job));
    Ok((StatusCode::ACCEPTED, Json(JobReply { job: id })).into_response())
}

async fn post_blend(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, CliError> {
    let job: BlendJob = parse(&body)?;
    let (rev, doc) = state.snapshot();
    check_base(job.base_rev, rev)?;
    doc.gc(job.gc_a)?;
    doc.gc(job.gc_b)?;
    let shape = shape_of_gc(&doc, job.gc_a);
    let id = spawn_edit_job(&state, JobKind::Blend, rev, doc, shape, move |d| blend(d, &job));
    Ok((StatusCode::ACCEPTED, Json(JobReply { job: id })).into_response())
}

fn check_base(base: Option<u64>, current: u64) -> Result<(), CliError> {
    match base {
        Some(b) if b != current => Err(conflict(b, current)),
        _ => Ok(()),
    }
}

/// Runs `work` on a worker thread, commits the result as a new revision
/// and writes the scene and a mesh of `shape` as artifacts.
fn spawn_edit_job<F>(state: &Arc<AppState>, kind: JobKind, base: u64, doc: Arc<Document>, shape: usize, work: F) -> u64
where
    F: FnOnce(&Document) -> Result<Document, CliError> + Send + 'static,
{
    let id = state.new_job(kind);
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        state.update_job(id, |j| j.status = JobStatus::Running);
        let run = || -> Result<(u64, Vec<String>), CliError> {
            let next = work(&doc)?;
            state.update_job(id, |j| j.progress = 0.3);
            let rev = state.commit(base, next.clone())?;
            state.update_job(id, |j| {
                j.revision = Some(rev);
                j.progress = 0.5;
            });
            let dir = state.job_dir(id)?;
            let scene_path = dir.join("scene.json");
            next.save(&scene_path)?;
            let mesh = extract_shape(&*state.model, &next.shapes[shape], DEFAULT_MESH_RESOLUTION, true)?;
            let mesh_path = dir.join("mesh.obj");
            save_mesh(&mesh, &mesh_path)?;
            Ok((rev, vec![scene_path.display().to_string(), mesh_path.display().to_string()]))
        };
        match run() {
            Ok((rev, artifacts)) => {
                state.update_job(id, |j| {
                    j.status = JobStatus::Done;
                    j.progress = 1.0;
                    j.artifacts = artifacts;
                });
                spawn_refine_blocking(&state, rev, shape);
            }
            Err(e) => {
                log::warn!("job {id} failed: {e}");
                state.update_job(id, |j| {
                    j.status = JobStatus::Failed;
                    j.error = Some(e);
                });
            }
        }
    });
    id
}

fn spawn_refine(state: &Arc<AppState>, rev: u64, shape: usize) {
    if state.config.refine_resolution == 0 {
        return;
    }
    let state = state.clone();
    tokio::task::spawn_blocking(move || spawn_refine_blocking(&state, rev, shape));
}

/// Extracts a fine mesh of one revision as a background job.
fn spawn_refine_blocking(state: &Arc<AppState>, rev: u64, shape: usize) {
    let res = state.config.refine_resolution;
    if res == 0 {
        return;
    }
    let id = state.new_job(JobKind::Extract);
    state.update_job(id, |j| {
        j.status = JobStatus::Running;
        j.revision = Some(rev);
    });
    let doc = state.lock().revisions[&rev].clone();
    let result = (|| -> Result<String, CliError> {
        let mesh = extract_shape(&*state.model, &doc.shapes[shape], res, true)?;
        let path = state.job_dir(id)?.join(format!("mesh_rev{rev}_res{res}.obj"));
        save_mesh(&mesh, &path)?;
        Ok(path.display().to_string())
    })();
    state.update_job(id, |j| match result {
        Ok(path) => {
            j.status = JobStatus::Done;
            j.progress = 1.0;
            j.artifacts = vec![path];
        }
        Err(e) => {
            j.status = JobStatus::Failed;
            j.error = Some(e);
        }
    });
}

#[derive(Debug, Deserialize)]
struct MeshQuery {
    rev: Option<u64>,
    res: Option<usize>,
    shape: Option<String>,
}

async fn get_mesh(State(state): State<Arc<AppState>>, Query(q): Query<MeshQuery>) -> Result<Response, CliError> {
    let res = q.res.unwrap_or(DEFAULT_MESH_RESOLUTION);
    if !(2..=MAX_MESH_RESOLUTION).contains(&res) {
        return Err(CliError::schema(format!("res must lie in [2, {MAX_MESH_RESOLUTION}]")));
    }
    let (rev, doc) = {
        let inner = state.lock();
        let rev = q.rev.unwrap_or(inner.current);
        let doc = inner.revisions.get(&rev).cloned().ok_or_else(|| CliError::not_found(format!("no revision {rev}")))?;
        (rev, doc)
    };
    let shape = match &q.shape {
        Some(id) => doc.shape_index(Some(id))?.0,
        None => 0,
    };
    let model = state.model.clone();
    let mesh = tokio::task::spawn_blocking(move || extract_shape(&*model, &doc.shapes[shape], res, true))
        .await
        .map_err(|e| CliError::new(ErrorKind::Numerical, "worker", e.to_string()))??;
    Ok((
        [(header::CONTENT_TYPE, "application/octet-stream".to_string()), (header::HeaderName::from_static("x-revision"), rev.to_string())],
        encode_mesh(&mesh),
    )
        .into_response())
}

async fn get_job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> Result<Response, CliError> {
    let job = state.lock().jobs.get(&id).cloned().ok_or_else(|| CliError::not_found(format!("no job {id}")))?;
    Ok(Json(job).into_response())
}

/// Serves `router` on `addr` until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::io(addr, e))?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::io("server", e))
}
