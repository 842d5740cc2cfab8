use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use nnviz_core::impressions::ImpressionConfig;
use nnviz_core::nn::{top_k, ModelCard};
use nnviz_core::render::{self, ColorMap};
use nnviz_core::saliency::{explain, ExplainParams, Method, OcclusionConfig, Resolution};
use nnviz_core::Tensor;

use crate::error::{ApiError, ErrorCode};
use crate::jobs::JobRecord;
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

/// Iteration cap for impression jobs.
pub const MAX_ITERATIONS: usize = 5000;

/// A class given by name or by index.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ClassRef {
    Index(usize),
    Name(String),
}

fn parse_body<T: DeserializeOwned>(state: &AppState, body: &Bytes) -> ApiResult<T> {
    if body.len() > state.config.body_limit() {
        return Err(ApiError::new(ErrorCode::ImageTooLarge, format!("request body exceeds {} bytes", state.config.body_limit())));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid request: {e}")))
}

fn resolve_class(state: &AppState, class: &ClassRef) -> ApiResult<usize> {
    let classes = &state.model.spec().classes;
    let found = match class {
        ClassRef::Index(i) => (*i < classes.len()).then_some(*i),
        ClassRef::Name(n) => state.model.spec().class_index(n),
    };
    found.ok_or_else(|| {
        ApiError::new(
            ErrorCode::UnknownClass,
            format!("unknown class {class:?}; valid classes: {}", classes.join(", ")),
        )
    })
}

/// Decodes a base-64 PNG or binary pixmap (an optional `data:` URL prefix is
/// ignored) and letterboxes it onto the model input, padding with the
/// training mean.
pub fn decode_image(state: &AppState, b64: &str) -> ApiResult<Tensor> {
    let payload = match b64.split_once(";base64,") {
        Some((prefix, rest)) if prefix.starts_with("data:") => rest,
        _ => b64,
    };
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(payload.trim())
        .map_err(|e| ApiError::new(ErrorCode::BadImage, format!("image is not valid base-64: {e}")))?;
    if bytes.len() > state.config.max_image_bytes {
        return Err(ApiError::new(
            ErrorCode::ImageTooLarge,
            format!("image is {} bytes, cap is {}", bytes.len(), state.config.max_image_bytes),
        ));
    }
    let pm = render::decode_any(&bytes).map_err(|e| ApiError::new(ErrorCode::BadImage, e.to_string()))?;
    let spec = state.model.spec();
    let [c, h, w] = spec.input;
    render::letterbox(&pm, c, h, w, spec.pixel_mean).map_err(|e| ApiError::new(ErrorCode::BadImage, e.to_string()))
}

pub async fn model_card(State(state): State<AppState>) -> Json<ModelCard> {
    Json(ModelCard::new(&state.model, state.hash))
}

#[derive(Debug, Deserialize)]
pub struct PredictRequest {
    pub image: String,
    pub k: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ClassConfidence {
    pub class: String,
    pub confidence: f32,
}

#[derive(Debug, Serialize)]
pub struct PredictResponse {
    pub topk: Vec<ClassConfidence>,
    pub all: Vec<f32>,
}

pub async fn predict(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<PredictResponse>> {
    let req: PredictRequest = parse_body(&state, &body)?;
    let image = decode_image(&state, &req.image)?;
    let scores = state.model.predict(&image).map_err(ApiError::from_core)?;
    let k = req.k.unwrap_or(5).clamp(1, scores.confidences.len());
    let topk = top_k(&scores, k)
        .map_err(ApiError::from_core)?
        .into_iter()
        .map(|(class, confidence)| ClassConfidence { class, confidence })
        .collect();
    Ok(Json(PredictResponse {
        topk,
        all: scores.confidences,
    }))
}

#[derive(Debug, Deserialize)]
pub struct ExplainRequest {
    pub image: String,
    pub method: String,
    pub class: Option<ClassRef>,
    pub occlusion: Option<OcclusionConfig>,
    pub layer: Option<String>,
    pub alpha: Option<f32>,
}

#[derive(Debug, Serialize)]
pub struct RawGrid {
    pub height: usize,
    pub width: usize,
    /// Row-major unit-range values.
    pub data: Vec<f32>,
}

#[derive(Debug, Serialize)]
pub struct ExplainMeta {
    pub method: &'static str,
    pub class: usize,
    pub class_name: String,
    pub resolution: Resolution,
    pub degenerate: bool,
    pub layer: String,
    pub alpha: f32,
}

#[derive(Debug, Serialize)]
pub struct ExplainResponse {
    /// Base-64 PNG.
    pub overlay: String,
    pub raw_grid: RawGrid,
    pub meta: ExplainMeta,
}

pub async fn explain_handler(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<ExplainResponse>> {
    let req: ExplainRequest = parse_body(&state, &body)?;
    let method: Method = req
        .method
        .parse()
        .map_err(|_| ApiError::new(ErrorCode::UnknownMethod, format!("unknown method `{}`", req.method)))?;
    let class = req.class.as_ref().map(|c| resolve_class(&state, c)).transpose()?;
    let alpha = req.alpha.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ApiError::new(ErrorCode::BadRequest, format!("alpha {alpha} must be in [0, 1]")));
    }
    let image = decode_image(&state, &req.image)?;
    let params = ExplainParams {
        occlusion: req.occlusion,
        layer: req.layer,
        ..Default::default()
    };
    let model = Arc::clone(&state.model);
    let r = tokio::task::spawn_blocking(move || {
        let r = explain(&model, &image, method, class, &params)?;
        let rgb = r.overlay(&image, &ColorMap::thermal(), alpha)?;
        let png = render::encode_png(&render::Pixmap::new(rgb.width, rgb.height, 3, rgb.data)?)?;
        Ok::<_, nnviz_core::Error>((r, png))
    })
    .await
    .map_err(|_| ApiError::internal())?;
    let (r, png) = r.map_err(ApiError::from_core)?;
    Ok(Json(ExplainResponse {
        overlay: base64::engine::general_purpose::STANDARD.encode(png),
        raw_grid: RawGrid {
            height: r.heatmap.height(),
            width: r.heatmap.width(),
            data: r.heatmap.grid.data().to_vec(),
        },
        meta: ExplainMeta {
            method: method.as_str(),
            class: r.provenance.class,
            class_name: r.provenance.class_name,
            resolution: r.heatmap.resolution,
            degenerate: r.heatmap.is_degenerate(),
            layer: r.provenance.layer,
            alpha,
        },
    }))
}

#[derive(Debug, Deserialize)]
pub struct ImpressionRequest {
    pub class: ClassRef,
    #[serde(default)]
    pub config: ImpressionConfig,
}

#[derive(Debug, Serialize)]
pub struct JobCreated {
    pub job_id: String,
}

pub async fn start_impression(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<JobCreated>)> {
    let req: ImpressionRequest = parse_body(&state, &body)?;
    let class = resolve_class(&state, &req.class)?;
    req.config
        .validate()
        .map_err(|e| ApiError::new(ErrorCode::InvalidConfig, e.to_string()))?;
    if req.config.iterations > MAX_ITERATIONS {
        return Err(ApiError::new(
            ErrorCode::InvalidConfig,
            format!("iterations {} exceed the cap of {MAX_ITERATIONS}", req.config.iterations),
        ));
    }
    let job_id = state.jobs.submit(Arc::clone(&state.model), class, req.config);
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id })))
}

pub async fn job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    state
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(ErrorCode::UnknownJob, format!("no job `{id}`")))
}

pub async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}
