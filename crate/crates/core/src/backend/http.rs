use std::sync::Arc;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{
    BackendConfig, BackendError, Completion, CompletionBackend, CompletionRequest,
    InFlightLimiter, RetryPolicy, ScoreRequest, ScoreResponse, Scorer, ScorerError, Usage,
};
use crate::backend::ApiStyle;

/// Shared HTTP plumbing: client, auth token lookup, retries and the
/// in-flight cap.
struct Transport {
    client: Client,
    token_env: Option<String>,
    retry: RetryPolicy,
    limiter: Arc<InFlightLimiter>,
}

impl Transport {
    fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate().map_err(BackendError::InvalidRequest)?;
        let client = Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            token_env: cfg.token_env.clone(),
            retry: cfg.retry_policy(),
            limiter: Arc::new(InFlightLimiter::new(cfg.max_in_flight)),
        })
    }

    /// The token is read at call time so that cache-only reruns work without
    /// credentials.
    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BackendError::Auth(format!("environment variable {var} is not set"))),
        }
    }

    fn post_json(&self, url: &str, body: &Value) -> Result<(String, u32), BackendError> {
        let token = self.token()?;
        let out = self.retry.run(|| {
            let _permit = self.limiter.acquire();
            let mut req = self.client.post(url).json(body);
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            let resp = req.send().map_err(classify)?;
            let status = resp.status().as_u16();
            let text = resp.text().map_err(classify)?;
            match status {
                200..=299 => Ok(text),
                401 | 403 => Err(BackendError::Auth(format!("status {status}: {text}"))),
                _ => Err(BackendError::Status { status, body: text }),
            }
        })?;
        Ok((out.value, out.retries))
    }
}

fn classify(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Transport(e.to_string())
    }
}

fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

/// OpenAI-style completion endpoint.
pub struct HttpBackend {
    id: String,
    cfg: BackendConfig,
    transport: Transport,
}

impl HttpBackend {
    pub fn new(id: impl Into<String>, cfg: BackendConfig) -> Result<Self, BackendError> {
        let transport = Transport::new(&cfg)?;
        Ok(Self {
            id: id.into(),
            cfg,
            transport,
        })
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut body = match self.cfg.api {
            ApiStyle::Chat => json!({
                "model": self.cfg.model,
                "messages": [{"role": "user", "content": req.prompt}],
            }),
            ApiStyle::Completions => json!({
                "model": self.cfg.model,
                "prompt": req.prompt,
            }),
        };
        body["temperature"] = json!(req.temperature);
        body["top_p"] = json!(req.top_p);
        body["max_tokens"] = json!(req.max_tokens);
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        if let (Some(seed), true) = (req.seed, self.cfg.supports_seed) {
            body["seed"] = json!(seed);
        }
        body
    }

    fn parse(&self, raw: &str) -> Result<Completion, BackendError> {
        let v: Value = serde_json::from_str(raw).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let choice = v
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
        let text = match self.cfg.api {
            ApiStyle::Chat => choice.pointer("/message/content"),
            ApiStyle::Completions => choice.get("text"),
        }
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("choice carries no text".into()))?;
        let usage = v.get("usage").and_then(|u| {
            Some(Usage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(Completion {
            text: text.to_string(),
            finish_reason: choice
                .get("finish_reason")
                .and_then(Value::as_str)
                .map(str::to_string),
            usage,
            retries: 0,
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model(&self) -> &str {
        &self.cfg.model
    }

    fn supports_seed(&self) -> bool {
        self.cfg.supports_seed
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let path = match self.cfg.api {
            ApiStyle::Chat => "chat/completions",
            ApiStyle::Completions => "completions",
        };
        let (raw, retries) = self
            .transport
            .post_json(&join_url(&self.cfg.base_url, path), &self.body(req))?;
        let mut completion = self.parse(&raw)?;
        completion.retries = retries;
        Ok(completion)
    }
}

/// Client for the scorer service (`POST {base_url}/score`).
pub struct HttpScorer {
    id: String,
    url: String,
    transport: Transport,
}

impl HttpScorer {
    pub fn new(id: impl Into<String>, cfg: BackendConfig) -> Result<Self, ScorerError> {
        let transport = Transport::new(&cfg).map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        Ok(Self {
            id: id.into(),
            url: join_url(&cfg.base_url, "score"),
            transport,
        })
    }
}

impl Scorer for HttpScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let body = serde_json::to_value(req).map_err(|e| ScorerError::Malformed(e.to_string()))?;
        let (raw, _) = self
            .transport
            .post_json(&self.url, &body)
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        ScoreResponse::from_wire(req.task, &raw)
    }
}
