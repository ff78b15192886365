//! Embedding client against a scripted HTTP sidecar and against files.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

use wavecode::embed::{
    embed_audio, embed_text, load_embedding_file, parse_embedding_jsonl, sidecar_health, EmbedError,
    EmbeddingSet, Granularity, ProviderConfig, SIDECAR_BATCH,
};

type RequestLog = Arc<Mutex<Vec<(String, String, Option<Value>)>>>;
type Handler = dyn Fn(&str, &str, Option<Value>) -> (u16, String) + Send + Sync;

/// Serves HTTP/1.1 on localhost until the test ends; every request is
/// logged as (method, path, body).
struct FakeSidecar {
    url: String,
    log: RequestLog,
}

impl FakeSidecar {
    fn start(handler: impl Fn(&str, &str, Option<Value>) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let seen = log.clone();
        let handler: Arc<Handler> = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut parts = request_line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let body: Option<Value> = serde_json::from_slice(&body).ok();
                seen.lock().unwrap().push((method.clone(), path.clone(), body.clone()));
                let (status, text) = handler(&method, &path, body);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        FakeSidecar { url, log }
    }

    fn requests(&self) -> Vec<(String, String, Option<Value>)> {
        self.log.lock().unwrap().clone()
    }
}

fn vector_for(id: &str, dim: usize) -> Vec<f64> {
    let h = id.bytes().fold(7u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
    (0..dim).map(|j| ((h >> (j % 16)) % 1000) as f64 / 997.0 + 0.1).collect()
}

/// Answers every input with `frames` vectors of width `dim`.
fn echo(model: &'static str, dim: usize, frames: usize, granularity: &'static str) -> impl Fn(&str, &str, Option<Value>) -> (u16, String) {
    move |_, _, body| {
        let body = body.unwrap();
        let embeddings: Vec<Value> = body["inputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|inp| {
                let id = inp["id"].as_str().unwrap();
                json!({"id": id, "vectors": vec![vector_for(id, dim); frames]})
            })
            .collect();
        let resp = json!({"model": model, "dim": dim, "granularity": granularity, "embeddings": embeddings, "checkpoint": "ckpt-1"});
        (200, resp.to_string())
    }
}

fn files(n: usize) -> Vec<(String, PathBuf)> {
    (0..n)
        .map(|i| (format!("{i:04}_clip"), PathBuf::from(format!("/data/audio/{i:04}_clip.wav"))))
        .collect()
}

#[test]
fn audio_requests_are_batched_and_merged() {
    let server = FakeSidecar::start(echo("vggish", 128, 4, "frame"));
    let provider = ProviderConfig::sidecar(&server.url, "vggish");
    let n = 2 * SIDECAR_BATCH + 6;
    let out = embed_audio(&provider, &files(n)).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.set.len(), n);
    assert_eq!(out.set.dim, 128);
    assert_eq!(out.set.granularity, Granularity::Frame);
    assert_eq!(out.set.checkpoint.as_deref(), Some("ckpt-1"));
    assert_eq!(out.set.get("0005_clip").unwrap().len(), 4);

    let reqs = server.requests();
    let sizes: Vec<usize> = reqs
        .iter()
        .map(|(m, p, b)| {
            assert_eq!((m.as_str(), p.as_str()), ("POST", "/embed"));
            let b = b.as_ref().unwrap();
            assert_eq!(b["model"], "vggish");
            assert!(b["inputs"][0]["path"].as_str().unwrap().ends_with(".wav"));
            b["inputs"].as_array().unwrap().len()
        })
        .collect();
    assert_eq!(sizes, vec![SIDECAR_BATCH, SIDECAR_BATCH, 6]);
}

#[test]
fn text_inputs_carry_the_label() {
    let server = FakeSidecar::start(echo("clap-text", 16, 1, "clip"));
    let labels: Vec<String> = ["Dog bark", "Siren"].iter().map(|s| s.to_string()).collect();
    let out = embed_text(&ProviderConfig::sidecar(&server.url, "clap-text"), &labels).unwrap();
    assert_eq!(out.set.clip("Dog bark").unwrap(), vector_for("Dog bark", 16).as_slice());
    let body = server.requests()[0].2.clone().unwrap();
    assert_eq!(body["inputs"], json!([{"id": "Dog bark", "text": "Dog bark"}, {"id": "Siren", "text": "Siren"}]));
}

#[test]
fn reported_and_missing_failures_are_per_id() {
    let server = FakeSidecar::start(|_, _, _| {
        let resp = json!({
            "model": "vggish", "dim": 2, "granularity": "frame",
            "embeddings": [{"id": "0000_clip", "vectors": [[1.0, 2.0], [3.0, 4.0]]}],
            "failures": [{"id": "0001_clip", "reason": "decode error"}]
        });
        (200, resp.to_string())
    });
    let out = embed_audio(&ProviderConfig::sidecar(&server.url, "vggish"), &files(3)).unwrap();
    assert_eq!(out.set.len(), 1);
    assert_eq!(
        out.failures,
        vec![
            ("0001_clip".to_string(), "decode error".to_string()),
            ("0002_clip".to_string(), "missing from sidecar response".to_string()),
        ]
    );
}

#[test]
fn not_ready_and_refused_are_unreachable() {
    let server = FakeSidecar::start(|_, _, _| (503, "{\"error\":\"loading\"}".into()));
    let err = embed_audio(&ProviderConfig::sidecar(&server.url, "vggish"), &files(1)).unwrap_err();
    assert!(matches!(err, EmbedError::ProviderUnreachable(_)), "{err}");

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = embed_audio(&ProviderConfig::sidecar(format!("http://127.0.0.1:{port}"), "vggish"), &files(1)).unwrap_err();
    assert!(matches!(err, EmbedError::ProviderUnreachable(_)), "{err}");
}

#[test]
fn protocol_violations_are_rejected() {
    let wrong_model = FakeSidecar::start(echo("clap-audio", 4, 1, "clip"));
    let err = embed_audio(&ProviderConfig::sidecar(&wrong_model.url, "vggish"), &files(1)).unwrap_err();
    assert!(matches!(err, EmbedError::Protocol(_)), "{err}");

    let garbage = FakeSidecar::start(|_, _, _| (200, "not json".into()));
    let err = embed_audio(&ProviderConfig::sidecar(&garbage.url, "vggish"), &files(1)).unwrap_err();
    assert!(matches!(err, EmbedError::Protocol(_)), "{err}");

    let frames = FakeSidecar::start(echo("clap-text", 4, 2, "frame"));
    let err = embed_text(&ProviderConfig::sidecar(&frames.url, "clap-text"), &["a".to_string()]).unwrap_err();
    assert!(matches!(err, EmbedError::Protocol(_)), "{err}");

    let short = FakeSidecar::start(|_, _, _| {
        let resp = json!({"model": "vggish", "dim": 3, "granularity": "frame",
            "embeddings": [{"id": "0000_clip", "vectors": [[1.0, 2.0]]}]});
        (200, resp.to_string())
    });
    let err = embed_audio(&ProviderConfig::sidecar(&short.url, "vggish"), &files(1)).unwrap_err();
    assert!(matches!(err, EmbedError::DimMismatch { expected: 3, got: 2 }), "{err}");
}

#[test]
fn expected_dim_is_enforced() {
    let server = FakeSidecar::start(echo("vggish", 64, 1, "frame"));
    let mut provider = ProviderConfig::sidecar(&server.url, "vggish");
    provider.expected_dim = Some(128);
    let err = embed_audio(&provider, &files(2)).unwrap_err();
    assert!(matches!(err, EmbedError::DimMismatch { expected: 128, got: 64 }), "{err}");
}

#[test]
fn duplicate_ids_fail_before_any_request() {
    let server = FakeSidecar::start(echo("vggish", 4, 1, "frame"));
    let mut f = files(2);
    f[1].0 = f[0].0.clone();
    let err = embed_audio(&ProviderConfig::sidecar(&server.url, "vggish"), &f).unwrap_err();
    assert!(matches!(err, EmbedError::DuplicateId(_)));
    assert!(server.requests().is_empty());
}

#[test]
fn health_returns_the_raw_document() {
    let server = FakeSidecar::start(|_, path, _| {
        assert_eq!(path, "/health");
        (200, json!({"status": "ok", "models": ["vggish"]}).to_string())
    });
    let v = sidecar_health(&server.url).unwrap();
    assert_eq!(v["status"], "ok");
}

#[test]
fn sidecar_dump_loads_back_bit_for_bit() {
    let server = FakeSidecar::start(|_, _, body| {
        let ids: Vec<String> = body.unwrap()["inputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["id"].as_str().unwrap().to_string())
            .collect();
        let embeddings: Vec<Value> = ids
            .iter()
            .enumerate()
            .map(|(k, id)| json!({"id": id, "vectors": [[0.1 + k as f64, 1.0 / 3.0, -2.5e-300, 1e300]]}))
            .collect();
        (200, json!({"model": "clap-audio", "dim": 4, "granularity": "clip", "embeddings": embeddings}).to_string())
    });
    let out = embed_audio(&ProviderConfig::sidecar(&server.url, "clap-audio"), &files(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.jsonl");
    out.set.write_jsonl(&path).unwrap();
    let back = load_embedding_file(&path).unwrap();
    assert_eq!(back, out.set);
    for (id, vs) in &out.set.items {
        let bits = |v: &[Vec<f64>]| v.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.get(id).unwrap()), bits(vs));
    }

    // the dumped file then stands in for the sidecar
    let file = ProviderConfig::file(path.display().to_string(), "clap-audio");
    assert_eq!(embed_audio(&file, &files(5)).unwrap().set, out.set);
}

#[test]
fn file_provider_reports_absent_ids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.jsonl");
    let mut set = EmbeddingSet::new("clap-text", 2, Granularity::Clip);
    set.insert("Dog", vec![vec![1.0, 0.0]]).unwrap();
    set.write_jsonl(&path).unwrap();
    let labels = vec!["Dog".to_string(), "Cat".to_string()];
    let out = embed_text(&ProviderConfig::file(path.display().to_string(), "clap-text"), &labels).unwrap();
    assert_eq!(out.set.len(), 1);
    assert_eq!(out.failures, vec![("Cat".to_string(), "id not present in embedding file".to_string())]);
}

#[test]
fn embedding_files_reject_bad_content() {
    let header = "{\"model\":\"m\",\"dim\":2,\"granularity\":\"frame\"}\n";
    let err = parse_embedding_jsonl(&format!("{header}{{\"id\":\"a\",\"vectors\":[[NaN,1.0]]}}\n")).unwrap_err();
    assert!(matches!(err, EmbedError::Parse { line: 2, .. }), "{err}");
    let err = parse_embedding_jsonl("{\"id\":\"a\",\"vectors\":[[0.0,1.0]]}\n").unwrap_err();
    assert!(matches!(err, EmbedError::MissingHeader), "{err}");
    let err = parse_embedding_jsonl(&format!("{header}{{\"id\":\"a\",\"vectors\":[[1.0]]}}\n")).unwrap_err();
    assert!(matches!(err, EmbedError::Parse { line: 2, .. }), "{err}");
    let dup = format!("{header}{{\"id\":\"a\",\"vectors\":[[1.0,2.0]]}}\n{{\"id\":\"a\",\"vectors\":[[1.0,2.0]]}}\n");
    assert!(matches!(parse_embedding_jsonl(&dup).unwrap_err(), EmbedError::DuplicateId(_)));
}
