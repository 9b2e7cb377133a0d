use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::client::{AnnotateRequest, ClientError, ExpertClient, ImageRef, JudgeRequest, RefineRequest};

/// Environment variable holding the API key of juror `name`.
pub fn api_key_var(name: &str) -> String {
    let upper: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }).collect();
    format!("HOLMES_EXPERT_{upper}_KEY")
}

/// First number in the reply that lies on the 1–5 judge scale.
pub fn parse_judge_score(reply: &str) -> Result<f64, ClientError> {
    reply
        .split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .map(|s| s.trim_matches('.'))
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse::<f64>().ok())
        .find(|v| (1.0..=5.0).contains(v))
        .ok_or_else(|| ClientError::Protocol(format!("no score in [1, 5] in reply {reply:?}")))
}

/// Juror behind a JSON chat-completion endpoint.
pub struct HttpExpertClient {
    name: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpExpertClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpExpertClient")
            .field("name", &self.name)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpExpertClient {
    /// Reads the API key from [`api_key_var`] if set.
    pub fn new(name: &str, endpoint: &str, model: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self {
            name: name.to_string(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: std::env::var(api_key_var(name)).ok(),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    fn chat(&self, content: Value) -> Result<String, ClientError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": content }],
            "temperature": 0,
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| ClientError::Transport(e.to_string()))?;
        let reply: Value = resp.body_mut().read_json().map_err(|e| ClientError::Protocol(e.to_string()))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol("reply lacks choices[0].message.content".into()))
    }

    fn with_image(&self, text: &str, image: &ImageRef) -> Result<Value, ClientError> {
        let path = image
            .path
            .as_ref()
            .ok_or_else(|| ClientError::Protocol(format!("image {} has no file", image.id)))?;
        let bytes = std::fs::read(path).map_err(|e| ClientError::Transport(format!("{}: {e}", path.display())))?;
        let mime = match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => "image/x-portable-pixmap",
            _ => "image/png",
        };
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        Ok(json!([
            { "type": "text", "text": text },
            { "type": "image_url", "image_url": { "url": format!("data:{mime};base64,{data}") } },
        ]))
    }
}

impl ExpertClient for HttpExpertClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn annotate(&self, req: &AnnotateRequest) -> Result<String, ClientError> {
        let reply = self.chat(self.with_image(&req.prompt.text, &req.image)?)?;
        if reply.trim().is_empty() {
            return Err(ClientError::Protocol("empty annotation".into()));
        }
        Ok(reply.trim().to_string())
    }

    fn judge(&self, req: &JudgeRequest) -> Result<f64, ClientError> {
        parse_judge_score(&self.chat(self.with_image(&req.rubric, &req.image)?)?)
    }

    fn refine(&self, req: &RefineRequest) -> Result<String, ClientError> {
        let reply = self.chat(json!([{ "type": "text", "text": req.prompt }]))?;
        Ok(reply.trim().to_string())
    }
}
