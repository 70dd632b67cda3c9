//! Client for an embedding service speaking JSON over HTTP.
//!
//! `POST {url}` with `{"texts": [["word", ...], ...]}` returns
//! `{"results": [{"pieces": [[f64; dim], ...], "spans": [[start, end], ...]}, ...]}`.
//! Each `pieces` list starts with the sequence-start special token and ends
//! with the sequence-end special token; `spans` index into it. Errors come
//! back as a non-2xx status with `{"error": "..."}`.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{EmbeddingProvider, EncodedText, ProviderDescriptor, ProviderSource};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub texts: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireText {
    pub pieces: Vec<Vec<f64>>,
    pub spans: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub results: Vec<WireText>,
}

#[derive(Debug, Deserialize)]
struct WireError {
    error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub dimension: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

pub struct RemoteProvider {
    cfg: RemoteConfig,
    agent: Mutex<ureq::Agent>,
}

impl RemoteProvider {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build();
        Self {
            cfg,
            agent: Mutex::new(agent),
        }
    }

    fn call_once(
        &self,
        agent: &ureq::Agent,
        req: &WireRequest,
    ) -> std::result::Result<WireResponse, (bool, Error)> {
        match agent.post(&self.cfg.url).send_json(req) {
            Ok(resp) => resp
                .into_json::<WireResponse>()
                .map_err(|e| (false, Error::Provider(format!("malformed response: {e}")))),
            Err(ureq::Error::Status(code, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                let msg = serde_json::from_str::<WireError>(&body)
                    .map(|e| e.error)
                    .unwrap_or(body);
                Err((code >= 500, Error::Provider(format!("HTTP {code}: {msg}"))))
            }
            Err(e) => Err((true, Error::Provider(e.to_string()))),
        }
    }

    /// Sends one request, retrying once on transport failures and 5xx.
    pub fn request(&self, req: &WireRequest) -> Result<WireResponse> {
        let agent = self.agent.lock().unwrap_or_else(|p| p.into_inner());
        let resp = match self.call_once(&agent, req) {
            Ok(r) => r,
            Err((true, _)) => self.call_once(&agent, req).map_err(|(_, e)| e)?,
            Err((false, e)) => return Err(e),
        };
        if resp.results.len() != req.texts.len() {
            return Err(Error::Provider(format!(
                "asked for {} encodings, got {}",
                req.texts.len(),
                resp.results.len()
            )));
        }
        Ok(resp)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            dimension: self.cfg.dimension,
            source: ProviderSource::Remote,
        }
    }

    fn piece_counts(&self, words: &[String]) -> Result<Vec<usize>> {
        let req = WireRequest {
            texts: words.iter().map(|w| vec![w.clone()]).collect(),
        };
        self.request(&req)?
            .results
            .iter()
            .map(|r| match r.spans.as_slice() {
                [[s, e]] if e > s => Ok(e - s),
                _ => Err(Error::Provider(
                    "expected exactly one span for a single word".into(),
                )),
            })
            .collect()
    }

    fn encode(&self, texts: &[Vec<String>]) -> Result<Vec<EncodedText>> {
        let req = WireRequest {
            texts: texts.to_vec(),
        };
        let resp = self.request(&req)?;
        resp.results
            .into_iter()
            .zip(texts)
            .map(|(r, words)| {
                let enc = EncodedText {
                    pieces: r.pieces,
                    word_spans: r.spans.into_iter().map(|[s, e]| (s, e)).collect(),
                };
                enc.validate(words.len(), self.cfg.dimension)?;
                Ok(enc)
            })
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal HTTP server: each word becomes one piece `[len, 1.0]`.
    /// The first `fail_first` requests get a 503.
    pub(crate) fn spawn_server(fail_first: usize, max_words: usize) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let req: WireRequest = serde_json::from_slice(&body).unwrap();
                let (status, payload) = if n < fail_first {
                    (
                        "503 Service Unavailable",
                        r#"{"error":"warming up"}"#.to_string(),
                    )
                } else if req.texts.iter().any(|t| t.len() > max_words) {
                    (
                        "413 Payload Too Large",
                        format!(r#"{{"error":"more than {max_words} pieces"}}"#),
                    )
                } else {
                    let results = req
                        .texts
                        .iter()
                        .map(|t| {
                            let mut pieces = vec![vec![0.0, 0.0]];
                            let mut spans = Vec::new();
                            for w in t {
                                spans.push([pieces.len(), pieces.len() + 1]);
                                pieces.push(vec![w.len() as f64, 1.0]);
                            }
                            pieces.push(vec![0.0, 0.0]);
                            WireText { pieces, spans }
                        })
                        .collect();
                    (
                        "200 OK",
                        serde_json::to_string(&WireResponse { results }).unwrap(),
                    )
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
            }
        });
        (url, hits)
    }

    #[test]
    fn encodes_through_http() {
        let (url, _) = spawn_server(0, 100);
        let p = RemoteProvider::new(RemoteConfig {
            url,
            dimension: 2,
            timeout_ms: 5_000,
        });
        let out = p.encode(&[vec!["oscar".into(), "winner".into()]]).unwrap();
        assert_eq!(out[0].word_spans, vec![(1, 2), (2, 3)]);
        assert_eq!(out[0].pieces[1], vec![5.0, 1.0]);
        assert_eq!(
            p.piece_counts(&["a".into(), "bb".into()]).unwrap(),
            vec![1, 1]
        );
    }

    #[test]
    fn retries_once_on_server_error() {
        let (url, hits) = spawn_server(1, 100);
        let p = RemoteProvider::new(RemoteConfig {
            url,
            dimension: 2,
            timeout_ms: 5_000,
        });
        p.encode(&[vec!["x".into()]]).unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn gives_up_after_second_failure() {
        let (url, _) = spawn_server(2, 100);
        let p = RemoteProvider::new(RemoteConfig {
            url,
            dimension: 2,
            timeout_ms: 5_000,
        });
        let err = p.encode(&[vec!["x".into()]]).unwrap_err();
        assert!(err.to_string().contains("warming up"), "{err}");
    }

    #[test]
    fn limit_errors_are_reported_without_retry() {
        let (url, hits) = spawn_server(0, 1);
        let p = RemoteProvider::new(RemoteConfig {
            url,
            dimension: 2,
            timeout_ms: 5_000,
        });
        let err = p.encode(&[vec!["a".into(), "b".into()]]).unwrap_err();
        assert!(err.to_string().contains("more than 1 pieces"), "{err}");
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let (url, _) = spawn_server(0, 100);
        let p = RemoteProvider::new(RemoteConfig {
            url,
            dimension: 3,
            timeout_ms: 5_000,
        });
        assert!(matches!(
            p.encode(&[vec!["x".into()]]),
            Err(Error::Dimension { .. })
        ));
    }
}
