//! Remote embedding, chat and QA generation against a local HTTP stub.

mod common;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::{chat_response, StubServer};
use ragsweep::chunking::Document;
use ragsweep::embedding::{EmbedderKind, EmbeddingProviderConfig};
use ragsweep::evaluator::{evaluate_trial, Trial, SENTINEL_SCORE};
use ragsweep::llm::{assemble_prompt, build_chat_model, generate, ChatProviderKind, GenerationOutcome, ModelProfile, PromptTemplate, Status};
use ragsweep::qa_dataset::{generate_qa, unknown_sources, QuestionKind};
use ragsweep::{Error, ProviderError, RetryPolicy};
use serde_json::json;

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 2,
        backoff_ms: 1,
        timeout_secs: 10,
    }
}

fn embedder_config(url: &str) -> EmbeddingProviderConfig {
    EmbeddingProviderConfig {
        kind: EmbedderKind::Remote,
        endpoint_url: Some(url.to_string()),
        model_name: Some("stub-embed".into()),
        api_key_env: "RAGSWEEP_TEST_EMBED_KEY".into(),
        batch_size: 3,
        retry: fast_retry(),
        ..Default::default()
    }
}

fn profile(url: &str) -> ModelProfile {
    ModelProfile {
        name: "stub-chat".into(),
        context_length: 4096,
        endpoint_url: Some(url.to_string()),
        api_key_env: "RAGSWEEP_TEST_CHAT_KEY".into(),
        max_output_tokens: 64,
        retry: fast_retry(),
    }
}

/// Embeds text i as a one-hot vector on the text's length, returned in
/// reverse index order.
fn reversed_embeddings(req: &common::StubRequest) -> (u16, String) {
    let inputs = req.body["input"].as_array().unwrap();
    let data: Vec<_> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| {
            let mut v = vec![0.0f32; 8];
            v[t.as_str().unwrap().len() % 8] = 2.0;
            json!({"object": "embedding", "index": i, "embedding": v})
        })
        .collect();
    (200, json!({"data": data, "model": "stub-embed"}).to_string())
}

#[test]
fn remote_embedder_restores_input_order_and_batches() {
    let server = StubServer::start(reversed_embeddings);
    let embedder = embedder_config(&server.url).build().unwrap();
    let texts = ["a", "bb", "ccc", "dddd", "eeeee"];
    let vectors = embedder.embed_batch(&texts).unwrap();
    assert_eq!(server.hits(), 2);
    for (t, v) in texts.iter().zip(&vectors) {
        assert!(v.is_normalized());
        assert_eq!(v.values()[t.len() % 8], 1.0);
    }
    let reqs = server.requests();
    assert_eq!(reqs[0].path, "/v1/embeddings");
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].body["model"], "stub-embed");
    assert_eq!(reqs[0].body["input"].as_array().unwrap().len(), 3);
}

#[test]
fn remote_embedder_rejects_inconsistent_dimensions() {
    let server = StubServer::start(|req| {
        let n = req.body["input"].as_array().unwrap().len();
        let data: Vec<_> = (0..n).map(|i| json!({"index": i, "embedding": vec![1.0; i + 1]})).collect();
        (200, json!({ "data": data }).to_string())
    });
    let embedder = embedder_config(&server.url).build().unwrap();
    let err = embedder.embed_batch(&["x", "y"]).unwrap_err();
    assert!(matches!(err, Error::Provider(ProviderError::Malformed(_))), "{err}");
}

#[test]
fn server_errors_are_retried_client_errors_are_not() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = calls.clone();
    let server = StubServer::start(move |req| {
        if seen.fetch_add(1, Ordering::SeqCst) < 2 {
            (503, "busy".into())
        } else {
            reversed_embeddings(req)
        }
    });
    let embedder = embedder_config(&server.url).build().unwrap();
    assert_eq!(embedder.embed_batch(&["ok"]).unwrap().len(), 1);
    assert_eq!(server.hits(), 3);

    let rejecting = StubServer::start(|_| (400, r#"{"error":"bad request"}"#.into()));
    let embedder = embedder_config(&rejecting.url).build().unwrap();
    let err = embedder.embed_batch(&["x"]).unwrap_err();
    assert!(matches!(err, Error::Provider(ProviderError::Rejected { status: 400, .. })));
    assert_eq!(rejecting.hits(), 1);
}

#[test]
fn bearer_token_comes_from_the_named_variable() {
    std::env::set_var("RAGSWEEP_TEST_AUTH_KEY", "secret-token");
    let server = StubServer::start(|_| (200, chat_response("fine")));
    let mut p = profile(&server.url);
    p.api_key_env = "RAGSWEEP_TEST_AUTH_KEY".into();
    let model = build_chat_model(ChatProviderKind::Remote, &p).unwrap();
    let prompt = assemble_prompt("Why?", &["Because."], &PromptTemplate::default());
    assert_eq!(generate(model.as_ref(), &p, &prompt).answer(), Some("fine"));
    let req = &server.requests()[0];
    assert_eq!(req.header("authorization"), Some("Bearer secret-token"));
    assert_eq!(req.path, "/v1/chat/completions");
    assert_eq!(req.body["model"], "stub-chat");
    assert_eq!(req.body["max_tokens"], 64);
    let messages = req.body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["role"], "user");
    assert!(messages[1]["content"].as_str().unwrap().contains("Because."));
}

#[test]
fn http_400_becomes_api_error_sentinel() {
    let server = StubServer::start(|_| (400, r#"{"error":{"message":"context too long"}}"#.into()));
    let p = profile(&server.url);
    let model = build_chat_model(ChatProviderKind::Remote, &p).unwrap();
    let prompt = assemble_prompt("What is it?", &["It is a thing."], &PromptTemplate::default());
    let outcome = generate(model.as_ref(), &p, &prompt);
    assert_eq!(outcome.status(), Status::ApiError);
    assert_eq!(outcome.http_status(), Some(400));
    assert_eq!(server.hits(), 1);

    let trial = Trial {
        qa_id: "q1",
        chunk_size: 128,
        top_k: 1,
        retrieved: &[],
        prompt: &prompt,
        profile: &p,
    };
    let record = evaluate_trial(trial, &outcome, |_| panic!("failed generations are not scored"));
    assert_eq!(record.status, Status::ApiError);
    assert_eq!(record.similarity.to_bits(), SENTINEL_SCORE.to_bits());
    assert_eq!(record.http_status, Some(400));
}

#[test]
fn overflowing_prompt_sends_nothing() {
    let server = StubServer::start(|_| (200, chat_response("unused")));
    let prompt = assemble_prompt("What?", &["word ".repeat(100)], &PromptTemplate::default());
    let mut p = profile(&server.url);
    p.context_length = prompt.prompt_tokens;
    let model = build_chat_model(ChatProviderKind::Remote, &p).unwrap();
    assert!(matches!(generate(model.as_ref(), &p, &prompt), GenerationOutcome::ContextOverflow));
    assert_eq!(server.hits(), 0);
}

#[test]
fn five_documents_four_pairs_each() {
    let server = StubServer::start(|req| {
        let user = req.body["messages"][1]["content"].as_str().unwrap().to_string();
        let topic = user.split_whitespace().find(|w| w.starts_with("topic")).unwrap_or("none").to_string();
        let lines: Vec<String> = ["What", "How", "Why", "Where"]
            .iter()
            .map(|w| json!({"question": format!("{w} about {topic}?"), "answer": format!("{topic} answer.")}).to_string())
            .collect();
        (200, chat_response(&format!("Here you go:\n{}\n", lines.join("\n"))))
    });
    let docs: Vec<Document> = (0..5)
        .map(|i| Document::new(format!("d{i}.txt"), format!("This text is about topic{i}. It has two sentences.")))
        .collect();
    let p = profile(&server.url);
    let model = build_chat_model(ChatProviderKind::Remote, &p).unwrap();
    let generation = generate_qa(model.as_ref(), &p, &docs, 4, 3).unwrap();
    assert_eq!(server.hits(), 5);
    assert_eq!(generation.pairs.len(), 20);
    assert!(generation.failed_docs.is_empty());
    let ids: HashSet<&str> = generation.pairs.iter().map(|q| q.id.as_str()).collect();
    assert_eq!(ids.len(), 20);
    assert!(unknown_sources(&generation.pairs, &docs).is_empty());
    for pair in &generation.pairs {
        let doc_index = pair.source_docs[0].trim_start_matches('d').trim_end_matches(".txt");
        assert!(pair.question.contains(&format!("topic{doc_index}")));
    }
    let kinds: Vec<QuestionKind> = generation.pairs[..4].iter().map(|q| q.kind).collect();
    assert_eq!(kinds, [QuestionKind::What, QuestionKind::How, QuestionKind::Why, QuestionKind::Other]);
}
