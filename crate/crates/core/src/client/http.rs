use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ClientError, GenerationRequest, ProviderConfig, RateLimiter};
use crate::protocol::Role;

/// OpenAI-style `POST {base_url}/chat/completions` client.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    model_name: String,
    token: String,
    limiter: Option<RateLimiter>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    n: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    content: Option<String>,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

impl HttpProvider {
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ClientError> {
        cfg.validate()?;
        let var = cfg.auth_env_var.as_deref().expect("validated");
        let token = std::env::var(var)
            .ok()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ClientError::Auth(format!("environment variable {var} is not set")))?;
        Self::new(
            cfg.base_url.as_deref().expect("validated"),
            &cfg.model_name,
            token,
            Duration::from_secs(cfg.timeout_secs.max(1)),
            cfg.rate_limit.map(RateLimiter::new),
        )
    }

    pub fn new(
        base_url: &str,
        model_name: &str,
        token: String,
        timeout: Duration,
        limiter: Option<RateLimiter>,
    ) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(HttpProvider {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model_name: model_name.to_string(),
            token,
            limiter,
        })
    }
}

impl ChatProvider for HttpProvider {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, ClientError> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let body = WireRequest {
            model: &self.model_name,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: role_name(m.role),
                    content: &m.text,
                })
                .collect(),
            temperature: request.temperature,
            n: 1,
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.token)
            .json(&body)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(ClientError::RateLimited);
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(ClientError::Http {
                status: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
        let parsed: WireResponse = resp
            .json()
            .map_err(|e| ClientError::Response(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::Response("response has no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Message, Origin};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves the given (status, body) responses in order and reports each
    /// request body it received.
    fn serve(responses: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                tx.send((auth, String::from_utf8(buf).unwrap())).unwrap();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1/"), rx)
    }

    fn messages() -> Vec<Message> {
        vec![Message {
            role: Role::System,
            text: "Your name is X.".into(),
            origin: Origin::Fixed,
            slot: None,
        }]
    }

    #[test]
    fn sends_openai_shaped_request() {
        let (url, rx) = serve(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"60%, 40%"}}]}"#,
        )]);
        let p = HttpProvider::new(
            &url,
            "gpt-4-0613",
            "secret".into(),
            Duration::from_secs(5),
            None,
        )
        .unwrap();
        let msgs = messages();
        let out = p
            .generate(&GenerationRequest {
                trial_id: "t",
                slot: "answer",
                model_id: "gpt-4",
                messages: &msgs,
                temperature: 0.0,
            })
            .unwrap();
        assert_eq!(out, "60%, 40%");
        let (auth, body) = rx.recv().unwrap();
        assert_eq!(auth.to_ascii_lowercase(), "authorization: bearer secret");
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["model"], "gpt-4-0613");
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["messages"][0]["role"], "system");
        assert_eq!(v["messages"][0]["content"], "Your name is X.");
    }

    #[test]
    fn maps_error_statuses() {
        let (url, _rx) = serve(vec![(429, "{}"), (503, "down"), (400, "bad")]);
        let p = HttpProvider::new(&url, "m", "k".into(), Duration::from_secs(5), None).unwrap();
        let msgs = messages();
        let req = GenerationRequest {
            trial_id: "t",
            slot: "answer",
            model_id: "m",
            messages: &msgs,
            temperature: 0.0,
        };
        assert_eq!(p.generate(&req), Err(ClientError::RateLimited));
        let e = p.generate(&req).unwrap_err();
        assert!(e.is_retryable(), "{e}");
        let e = p.generate(&req).unwrap_err();
        assert!(!e.is_retryable(), "{e}");
    }

    #[test]
    fn missing_credentials_fail_at_construction() {
        let mut cfg = ProviderConfig::replay("unused".into());
        cfg.kind = super::super::ProviderKind::HttpChat;
        cfg.base_url = Some("http://127.0.0.1:9".into());
        cfg.auth_env_var = Some("FCE_TEST_SURELY_UNSET_VARIABLE".into());
        assert!(matches!(
            HttpProvider::from_config(&cfg),
            Err(ClientError::Auth(_))
        ));
    }
}
