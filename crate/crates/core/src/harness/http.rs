//! HTTP backend speaking the chat-completions wire shape.
//!
//! Requests carry `{model, messages, temperature, top_p, seed}`; the reply's
//! first choice is the completion text, with token counts taken from `usage`
//! when present (length/4 otherwise). Rate limits (429), request timeouts
//! (408), server errors (5xx), and transport failures are transient — the
//! run loop retries them with backoff; other failure statuses are fatal.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::harness::{Backend, BackendError, Completion, CompletionRequest, HarnessError};

pub struct HttpChat {
    url: String,
    model: String,
    /// Environment variable holding the bearer token; empty disables auth.
    auth_env: String,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        auth_env: impl Into<String>,
        timeout_ms: u64,
    ) -> Result<Self, HarnessError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms.max(1)))
            .build()
            .map_err(|e| HarnessError::Config(format!("http client: {e}")))?;
        Ok(HttpChat {
            url: url.into(),
            model: model.into(),
            auth_env: auth_env.into(),
            client,
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
    seed: u64,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: String,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl Backend for HttpChat {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let body = WireRequest {
            model: &self.model,
            messages: [WireMessage {
                role: "user",
                content: req.prompt,
            }],
            temperature: req.sampling.temperature,
            top_p: req.sampling.top_p,
            // Distinct per sample so multi-sample strategies do not collapse
            // onto one completion on seed-honoring servers.
            seed: req.seed.wrapping_add(u64::from(req.sample_idx)),
        };
        let mut http = self.client.post(&self.url).json(&body);
        if !self.auth_env.is_empty() {
            if let Ok(token) = std::env::var(&self.auth_env) {
                if !token.is_empty() {
                    http = http.bearer_auth(token);
                }
            }
        }

        let resp = http
            .send()
            .map_err(|e| BackendError::Transient(format!("transport: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transient(format!("reading body: {e}")))?;
        if !status.is_success() {
            let brief: String = text.chars().take(200).collect();
            let msg = format!("status {status}: {brief}");
            return Err(
                if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
                    BackendError::Transient(msg)
                } else {
                    BackendError::Fatal(msg)
                },
            );
        }

        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Fatal(format!("malformed response body: {e}")))?;
        let Some(choice) = wire.choices.into_iter().next() else {
            return Err(BackendError::Fatal("response carried no choices".into()));
        };
        let content = choice.message.content;
        let usage = wire.usage.unwrap_or_default();
        let input_tokens = if usage.prompt_tokens > 0 {
            usage.prompt_tokens
        } else {
            (req.prompt.len() / 4) as u64
        };
        let output_tokens = if usage.completion_tokens > 0 {
            usage.completion_tokens
        } else {
            (content.len() / 4) as u64
        };
        Ok(Completion {
            text: content,
            input_tokens,
            output_tokens,
        })
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{complete_with_retries, RunConfig, Sampling};
    use crate::types::{DifficultyVector, Dim, ProblemRecord, TaskKind};
    use num_rational::BigRational;
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::thread::JoinHandle;

    fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
        haystack.windows(needle.len()).position(|w| w == needle)
    }

    fn read_request(stream: &mut TcpStream) -> String {
        let mut buf = Vec::new();
        let mut tmp = [0u8; 4096];
        let header_end = loop {
            let n = stream.read(&mut tmp).unwrap();
            if n == 0 {
                return String::from_utf8_lossy(&buf).to_string();
            }
            buf.extend_from_slice(&tmp[..n]);
            if let Some(pos) = find(&buf, b"\r\n\r\n") {
                break pos + 4;
            }
        };
        let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
        let content_length = headers
            .lines()
            .find_map(|l| {
                let (k, v) = l.split_once(':')?;
                k.eq_ignore_ascii_case("content-length")
                    .then(|| v.trim().parse::<usize>().ok())
                    .flatten()
            })
            .unwrap_or(0);
        while buf.len() < header_end + content_length {
            let n = stream.read(&mut tmp).unwrap();
            if n == 0 {
                break;
            }
            buf.extend_from_slice(&tmp[..n]);
        }
        String::from_utf8_lossy(&buf).to_string()
    }

    /// Serve canned `(status, body)` responses, one connection each, and
    /// hand back the raw requests as seen on the wire.
    fn serve(responses: Vec<(u16, String)>) -> (String, JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                seen.push(read_request(&mut stream));
                let reason = match status {
                    200 => "OK",
                    400 => "Bad Request",
                    429 => "Too Many Requests",
                    500 => "Internal Server Error",
                    _ => "Status",
                };
                let resp = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
            seen
        });
        (url, handle)
    }

    fn request_fixture() -> ProblemRecord {
        ProblemRecord {
            id: "h-0".into(),
            task_kind: TaskKind::Add,
            prompt: "Please calculate the formula given below:\n\n2 + 2=".into(),
            gold_answer: BigRational::from_integer(4.into()),
            difficulty: DifficultyVector::new().with(Dim::MaxCalc, 2.0),
            template_id: None,
            seed: 0,
            language: "en".into(),
        }
    }

    fn ok_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 9}
        })
        .to_string()
    }

    #[test]
    fn round_trip_carries_prompt_seed_and_usage() {
        let (url, server) = serve(vec![(200, ok_body("Step 1: 2 + 2 = 4\n#### 4"))]);
        let backend = HttpChat::new(&url, "test-model", "", 5_000).unwrap();
        let p = request_fixture();
        let req = CompletionRequest {
            prompt: &p.prompt,
            sampling: Sampling {
                temperature: 0.7,
                top_p: 0.95,
            },
            seed: 3,
            sample_idx: 4,
            problem: &p,
        };
        let c = backend.complete(&req).unwrap();
        assert_eq!(c.text, "Step 1: 2 + 2 = 4\n#### 4");
        assert_eq!(c.input_tokens, 12);
        assert_eq!(c.output_tokens, 9);

        let seen = server.join().unwrap();
        assert_eq!(seen.len(), 1);
        assert!(seen[0].contains(r#""model":"test-model""#));
        assert!(
            seen[0].contains(r#""seed":7"#),
            "seed must be seed+sample_idx"
        );
        assert!(seen[0].contains(r#""temperature":0.7"#));
        assert!(seen[0].contains("2 + 2="));
    }

    #[test]
    fn rate_limits_are_retried_to_success() {
        let (url, server) = serve(vec![
            (429, r#"{"error":"slow down"}"#.to_string()),
            (500, r#"{"error":"blip"}"#.to_string()),
            (200, ok_body("#### 4")),
        ]);
        let backend = HttpChat::new(&url, "m", "", 5_000).unwrap();
        let p = request_fixture();
        let req = CompletionRequest {
            prompt: &p.prompt,
            sampling: Sampling::default(),
            seed: 0,
            sample_idx: 0,
            problem: &p,
        };
        let cfg = RunConfig {
            max_retries: 3,
            backoff_ms: 1,
            ..RunConfig::default()
        };
        let c = complete_with_retries(&backend, &req, &cfg).unwrap();
        assert_eq!(c.text, "#### 4");
        assert_eq!(server.join().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_and_bad_bodies_are_fatal() {
        for (status, body) in [
            (400, r#"{"error":"bad request"}"#.to_string()),
            (200, "not json at all".to_string()),
            (200, r#"{"choices":[]}"#.to_string()),
        ] {
            let (url, server) = serve(vec![(status, body)]);
            let backend = HttpChat::new(&url, "m", "", 5_000).unwrap();
            let p = request_fixture();
            let req = CompletionRequest {
                prompt: &p.prompt,
                sampling: Sampling::default(),
                seed: 0,
                sample_idx: 0,
                problem: &p,
            };
            assert!(matches!(
                backend.complete(&req),
                Err(BackendError::Fatal(_))
            ));
            server.join().unwrap();
        }
    }

    #[test]
    fn bearer_token_is_read_from_the_configured_env_var() {
        std::env::set_var("RB_HTTP_TEST_TOKEN", "sekrit-123");
        let (url, server) = serve(vec![(200, ok_body("#### 4"))]);
        let backend = HttpChat::new(&url, "m", "RB_HTTP_TEST_TOKEN", 5_000).unwrap();
        let p = request_fixture();
        let req = CompletionRequest {
            prompt: &p.prompt,
            sampling: Sampling::default(),
            seed: 0,
            sample_idx: 0,
            problem: &p,
        };
        backend.complete(&req).unwrap();
        let seen = server.join().unwrap();
        assert!(
            seen[0]
                .to_ascii_lowercase()
                .contains("authorization: bearer sekrit-123"),
            "missing bearer header in:\n{}",
            seen[0]
        );
    }
}
