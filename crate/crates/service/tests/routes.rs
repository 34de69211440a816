use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use echoseg_core::api::{
    BaselineRequest, ErrorBody, EvaluateRecording, EvaluateRequest, Health, InferRequest, InferResponse, JobState,
    JobStatus, ModelInfo, ScheduleResponse, SynthRequest, SynthResponse,
};
use echoseg_core::baseline::{AirMethod, BaselineConfig};
use echoseg_core::infer::InferenceConfig;
use echoseg_core::metrics::{AggregateMode, MetricsReport};
use echoseg_core::nnet::{save_checkpoint, ModelConfig, ModelKind, UNet};
use echoseg_core::preprocess::Orientation;
use echoseg_core::synth::SynthConfig;
use echoseg_service::{router, AppState};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use tower::ServiceExt;

async fn call<T: DeserializeOwned>(app: &axum::Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, T) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&bytes))))
}

fn json(v: &impl serde::Serialize) -> Option<String> {
    Some(serde_json::to_string(v).unwrap())
}

fn tiny_checkpoint(dir: &std::path::Path) -> std::path::PathBuf {
    let config = ModelConfig { width: 2, depth: 2, kind: ModelKind::Single, input: (16, 32), ..ModelConfig::default() };
    let path = dir.join("tiny.ckpt");
    save_checkpoint(&UNet::<f32>::new(config, 0).unwrap(), serde_json::Value::Null, &path).unwrap();
    path
}

#[tokio::test]
async fn health_reports_ok() {
    let app = router(Arc::new(AppState::new(None)));
    let (status, body): (_, Health) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body.status, "ok");
}

#[tokio::test]
async fn model_endpoints_without_model_are_unavailable() {
    let app = router(Arc::new(AppState::new(None)));
    let (status, body): (_, ErrorBody) = call(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body.error.contains("no model"));
}

#[tokio::test]
async fn missing_checkpoint_is_not_found() {
    let app = router(Arc::new(AppState::new(Some("/nonexistent/model.ckpt".into()))));
    let (status, _): (_, ErrorBody) = call(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn synth_baseline_infer_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path());
    let app = router(Arc::new(AppState::new(Some(ckpt))));

    let (status, info): (_, ModelInfo) = call(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(info.id, "tiny");

    let req = SynthRequest { config: SynthConfig { seed: 2, n_pings: 50, ..SynthConfig::default() } };
    let (status, synth): (_, SynthResponse) = call(&app, "POST", "/v1/synth", json(&req)).await;
    assert_eq!(status, StatusCode::OK);

    let req = BaselineRequest {
        csv: synth.raw_csv.clone(),
        orientation: Orientation::Downfacing,
        method: AirMethod::ThresholdOffset,
        config: BaselineConfig::default(),
    };
    let (status, base): (_, echoseg_core::api::BaselineResponse) = call(&app, "POST", "/v1/baseline", json(&req)).await;
    assert_eq!(status, StatusCode::OK);

    let req = InferRequest { csv: synth.raw_csv.clone(), orientation: Orientation::Downfacing, config: InferenceConfig::default(), model_path: None };
    let (status, inferred): (_, InferResponse) = call(&app, "POST", "/v1/infer", json(&req)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(inferred.model_id, "tiny");

    let recording = |predicted| EvaluateRecording {
        name: "r".into(),
        raw_csv: synth.raw_csv.clone(),
        clean_csv: synth.clean_csv.clone(),
        orientation: Orientation::Downfacing,
        reference: synth.reference.clone(),
        predicted,
    };
    let req = EvaluateRequest { recordings: vec![recording(base.files), recording(inferred.files)], mode: AggregateMode::PerFile };
    let (status, report): (_, MetricsReport) = call(&app, "POST", "/v1/evaluate", json(&req)).await;
    assert_eq!(status, StatusCode::OK);
    assert!(report.lines.contains_key("entrained_air"));
}

#[tokio::test]
async fn bad_input_is_unprocessable() {
    let app = router(Arc::new(AppState::new(None)));
    let req = BaselineRequest {
        csv: "not a csv".into(),
        orientation: Orientation::Downfacing,
        method: AirMethod::ThresholdOffset,
        config: BaselineConfig::default(),
    };
    let (status, body): (_, ErrorBody) = call(&app, "POST", "/v1/baseline", json(&req)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!body.error.is_empty());
}

#[tokio::test]
async fn schedule_endpoint() {
    let app = router(Arc::new(AppState::new(None)));
    // mid-plateau of the second cycle runs at half the peak rate
    let body = Some(r#"{"step":30,"total":100,"cycle":1}"#.to_string());
    let (status, r): (_, ScheduleResponse) = call(&app, "POST", "/v1/schedule", body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r.lr, 0.006);
    let body = Some(r#"{"step":10,"total":10,"cycle":0}"#.to_string());
    let (status, _): (_, ErrorBody) = call(&app, "POST", "/v1/schedule", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn failing_train_job_is_reported() {
    let app = router(Arc::new(AppState::new(None)));
    let body = json(&serde_json::json!({
        "datasets": [{"name": "none", "dirs": ["/nonexistent/shards"]}],
        "out_dir": "/tmp/unused",
    }));
    let (status, job): (_, JobStatus) = call(&app, "POST", "/v1/train", body).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let uri = format!("/v1/jobs/{}", job.id);
    for _ in 0..100 {
        let (_, s): (_, JobStatus) = call(&app, "GET", &uri, None).await;
        if s.state == JobState::Failed {
            assert!(s.error.is_some());
            return;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job never failed");
}

#[tokio::test]
async fn unknown_job_is_not_found() {
    let app = router(Arc::new(AppState::new(None)));
    let (status, _): (_, ErrorBody) = call(&app, "GET", "/v1/jobs/99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
