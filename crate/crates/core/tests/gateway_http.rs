mod common;

use gapscope_core::evaluation::{entailment_score, HttpNliScorer, ScorerError};
use gapscope_core::gateway::{
    Backend, CompletionRequest, Gateway, GatewayError, Manifest, ManifestRow, OpenAiBackend,
    ResponseCache,
};
use gapscope_core::http::RetryPolicy;

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_delay_ms: 0,
        max_delay_ms: 0,
        timeout_secs: 5,
    }
}

fn req() -> CompletionRequest {
    CompletionRequest {
        model_id: "test-model".into(),
        prompt: "Find the gaps.".into(),
        temperature: 0.0,
        max_output_tokens: 128,
        request_tag: "it".into(),
    }
}

#[test]
fn rate_limited_twice_then_ok_records_three_attempts() {
    let server = common::serve(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (429, r#"{"error":"slow down"}"#.into()),
        (200, common::chat_ok("A")),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = dir.path().join("manifest.jsonl");
    let gw = Gateway::new(
        Some(ResponseCache::new(dir.path().join("cache"))),
        Some(Manifest::create(&manifest_path).unwrap()),
        1,
    );
    let backend = OpenAiBackend::new(
        &server.url,
        "/v1/chat/completions",
        Some("k".into()),
        fast_retry(4),
    )
    .unwrap();
    let out = gw.complete(&backend, &req(), "u1").unwrap();
    assert_eq!(out.text, "A");
    assert_eq!(out.attempts, 3);
    assert_eq!(out.usage.unwrap().total_tokens, Some(7));

    let row: ManifestRow =
        serde_json::from_str(std::fs::read_to_string(&manifest_path).unwrap().trim()).unwrap();
    assert_eq!((row.attempts, row.cached), (3, false));

    let sent: serde_json::Value = serde_json::from_str(&server.bodies.lock().unwrap()[2]).unwrap();
    assert_eq!(sent["model"], "test-model");
    assert_eq!(sent["messages"][0]["content"], "Find the gaps.");
    assert_eq!(sent["temperature"], 0.0);

    // warm cache: no further traffic needed
    let again = gw.complete(&backend, &req(), "u1").unwrap();
    assert!(again.cached);
}

#[test]
fn attempt_cap_surfaces_transport_error() {
    let server = common::serve(vec![(503, "down".into()), (503, "down".into())]);
    let backend =
        OpenAiBackend::new(&server.url, "/v1/chat/completions", None, fast_retry(2)).unwrap();
    match backend.complete(&req()) {
        Err(GatewayError::Transport { attempts, message }) => {
            assert_eq!(attempts, 2);
            assert!(message.contains("503"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn provider_error_is_verbatim_and_not_retried() {
    let payload = r#"{"error":{"message":"model not found","code":"model_not_found"}}"#;
    let server = common::serve(vec![(404, payload.into()), (200, common::chat_ok("late"))]);
    let backend =
        OpenAiBackend::new(&server.url, "/v1/chat/completions", None, fast_retry(4)).unwrap();
    match backend.complete(&req()) {
        Err(GatewayError::Provider { status, body }) => {
            assert_eq!(status, 404);
            assert_eq!(body, payload);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.bodies.lock().unwrap().len(), 1);
}

#[test]
fn context_length_rejection_is_distinct_and_uncached() {
    let server = common::serve(vec![(
        400,
        r#"{"error":{"message":"This model's maximum context length is 4096 tokens","code":"context_length_exceeded"}}"#
            .into(),
    )]);
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::new(dir.path());
    let gw = Gateway::new(Some(cache.clone()), None, 1);
    let backend =
        OpenAiBackend::new(&server.url, "/v1/chat/completions", None, fast_retry(3)).unwrap();
    assert!(matches!(
        gw.complete(&backend, &req(), "u"),
        Err(GatewayError::ContextLength { .. })
    ));
    assert!(cache.is_empty());
}

#[test]
fn nli_service_contract() {
    let server = common::serve(vec![
        (500, "oops".into()),
        (200, r#"{"scores":[0.73]}"#.into()),
        (200, r#"{"scores":[1.2]}"#.into()),
        (200, r#"{"scores":[0.1, 0.2]}"#.into()),
    ]);
    let scorer = HttpNliScorer::new(&server.url, fast_retry(3)).unwrap();
    assert_eq!(
        entailment_score(&scorer, "premise", "hypothesis").unwrap(),
        0.73
    );
    let sent: serde_json::Value = serde_json::from_str(&server.bodies.lock().unwrap()[1]).unwrap();
    assert_eq!(
        sent,
        serde_json::json!({"pairs": [{"premise": "premise", "hypothesis": "hypothesis"}]})
    );

    let err = entailment_score(&scorer, "premise", "hypothesis").unwrap_err();
    assert!(err.to_string().starts_with("malformed scorer response"));
    assert!(matches!(
        entailment_score(&scorer, "a", "b"),
        Err(ScorerError::Malformed(_))
    ));
}
