//! Shared fixtures: a local HTTP stub and a synthetic corpus with planted
//! answers.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ragsweep::qa_dataset::{QaPair, QuestionKind};
use serde_json::Value;

#[derive(Debug, Clone)]
pub struct StubRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

impl StubRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

type Handler = dyn Fn(&StubRequest) -> (u16, String) + Send + Sync;

/// Single-threaded HTTP/1.1 server on 127.0.0.1 that answers every request
/// with `handler` and counts what it saw.
pub struct StubServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<StubRequest>>>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&StubRequest) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let (hits, requests, stop) = (hits.clone(), requests.clone(), stop.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    if let Some(req) = serve(stream, handler.as_ref()) {
                        hits.fetch_add(1, Ordering::SeqCst);
                        requests.lock().unwrap().push(req);
                    }
                }
            })
        };
        Self {
            url: format!("http://{addr}/v1"),
            hits,
            requests,
            stop,
            thread: Some(thread),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<StubRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let addr = self.url.trim_start_matches("http://").trim_end_matches("/v1").to_string();
        let _ = TcpStream::connect(addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, handler: &Handler) -> Option<StubRequest> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    let req = StubRequest {
        method,
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    let (status, payload) = handler(&req);
    let mut stream = stream;
    let response = format!(
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    stream.write_all(response.as_bytes()).ok()?;
    Some(req)
}

pub fn chat_response(content: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

/// Pseudo-words that never collide with the English glue words used in
/// planted facts and questions.
pub fn pseudo_word(rng: &mut impl Rng) -> String {
    const SYLLABLES: [&str; 16] = [
        "ka", "lo", "mi", "ru", "ten", "vas", "bor", "qui", "zel", "dra", "pon", "fi", "gu", "nex", "sar", "tol",
    ];
    let n = rng.random_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

pub fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// A filler sentence of pseudo-words, sometimes with a guarded abbreviation.
pub fn filler_sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(8..=18);
    let mut words: Vec<String> = (0..n).map(|_| pseudo_word(rng)).collect();
    words[0] = capitalize(&words[0]);
    match rng.random_range(0..10) {
        0 => words.insert(n / 2, "e.g.".into()),
        1 => words.insert(n / 2, "Dr.".into()),
        2 => words.insert(1, ",".into()),
        _ => {}
    }
    let mut s = words.join(" ").replace(" ,", ",");
    s.push(if rng.random_range(0..8) == 0 { '?' } else { '.' });
    s
}

pub struct PlantedCorpus {
    /// (file name, text)
    pub docs: Vec<(String, String)>,
    pub qa: Vec<QaPair>,
}

/// `n_docs` documents of `sentences_per_doc` filler sentences, each with
/// `facts_per_doc` planted "The X of Y is Z." sentences and a matching
/// "What is the X of Y?" question.
pub fn planted_corpus(seed: u64, n_docs: usize, sentences_per_doc: usize, facts_per_doc: usize) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut qa = Vec::new();
    for d in 0..n_docs {
        let name = format!("doc{d:03}.txt");
        let mut sentences: Vec<String> = (0..sentences_per_doc).map(|_| filler_sentence(&mut rng)).collect();
        for f in 0..facts_per_doc {
            let n = d * facts_per_doc + f;
            let attr = format!("attr{n}{}", pseudo_word(&mut rng));
            let place = format!("place{n}{}", pseudo_word(&mut rng));
            let value = format!("value{n}{}", pseudo_word(&mut rng));
            let fact = format!("The {attr} of {place} is {value}.");
            let at = rng.random_range(0..=sentences.len());
            sentences.insert(at, fact.clone());
            qa.push(QaPair {
                id: format!("{name}#{}", f + 1),
                question: format!("What is the {attr} of {place}?"),
                answer: fact,
                source_docs: vec![name.clone()],
                kind: QuestionKind::What,
            });
        }
        docs.push((name, sentences.join(" ")));
    }
    PlantedCorpus { docs, qa }
}

impl PlantedCorpus {
    pub fn write(&self, dir: &Path) {
        std::fs::create_dir_all(dir).unwrap();
        for (name, text) in &self.docs {
            std::fs::write(dir.join(name), text).unwrap();
        }
    }

    pub fn documents(&self) -> Vec<ragsweep::chunking::Document> {
        self.docs
            .iter()
            .map(|(name, text)| ragsweep::chunking::Document::new(name.clone(), text.clone()))
            .collect()
    }
}

/// ASCII char-scan token count: runs of [A-Za-z0-9_] count once, every
/// other non-space character counts once.
pub fn oracle_count_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for b in text.bytes() {
        let word = b.is_ascii_alphanumeric() || b == b'_';
        if (word && !in_word) || (!word && !b.is_ascii_whitespace()) {
            count += 1;
        }
        in_word = word;
    }
    count
}
