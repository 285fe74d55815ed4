//! OpenAI-compatible HTTP backend: POST {base}/chat/completions with a
//! bearer token, single assistant message extracted from the first choice.

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendResponse, ENV_API_BASE, ENV_API_KEY, GatewayError, PromptRequest};

const BODY_EXCERPT_LEN: usize = 200;

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

#[derive(Deserialize)]
struct ChatCompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpBackend {
            client: reqwest::blocking::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        }
    }

    /// Reads endpoint and credential from `GEMA_API_BASE` / `GEMA_API_KEY`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| GatewayError::MissingConfiguration { variable: ENV_API_BASE })?;
        let key = std::env::var(ENV_API_KEY)
            .map_err(|_| GatewayError::MissingConfiguration { variable: ENV_API_KEY })?;
        Ok(Self::new(base, key))
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT_LEN).collect()
}

impl Backend for HttpBackend {
    fn execute(&self, request: &PromptRequest) -> Result<BackendResponse, GatewayError> {
        let mut messages = Vec::with_capacity(2);
        if !request.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_prompt}));
        }
        messages.push(json!({"role": "user", "content": request.user_prompt}));
        let body = json!({
            "model": request.decoding.model_name,
            "messages": messages,
            "temperature": request.decoding.temperature,
            "top_p": request.decoding.top_p,
            "max_tokens": request.decoding.max_tokens,
        });

        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| GatewayError::Transport {
                message: e.to_string(),
            })?;

        let status = response.status().as_u16();
        let text = response.text().map_err(|e| GatewayError::Transport {
            message: e.to_string(),
        })?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::Api {
                status,
                body_excerpt: excerpt(&text),
            });
        }

        let parsed: ChatCompletionBody =
            serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse {
                reason: format!("{e}; body starts: {}", excerpt(&text)),
            })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::MalformedResponse {
                reason: "response has no choices".to_string(),
            })?;
        let content = choice
            .message
            .content
            .ok_or_else(|| GatewayError::MalformedResponse {
                reason: "first choice has no message content".to_string(),
            })?;
        Ok(BackendResponse {
            text: content,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }

    fn id(&self) -> String {
        format!("http:{}", self.base_url)
    }
}
