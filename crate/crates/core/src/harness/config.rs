//! Flat key-value configuration covering the session knobs plus backend
//! wiring and harness paths. Every key has a default; unknown keys are
//! rejected with their line number.
//!
//! Endpoint URLs and API keys may also come from the environment
//! (`COGNILOOP_<ROLE>_ENDPOINT`, `COGNILOOP_<ROLE>_MODEL`,
//! `COGNILOOP_<ROLE>_API_KEY` for ROLE in CHAT/CAPTION/VQA/EMBED); the
//! environment wins over the file, and keys are never written to traces.

use std::path::{Path, PathBuf};

use crate::agents::SessionConfig;
use crate::gateway::mock::{MockScript, MockSuite};
use crate::gateway::BackendSuite;
use crate::media::DEFAULT_EXTRACTOR;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone)]
pub struct RoleConfig {
    pub endpoint: String,
    pub model: String,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub session: SessionConfig,
    pub workdir: PathBuf,
    pub extractor: String,
    pub backend: BackendKind,
    pub mock_script: Option<PathBuf>,
    pub chat: RoleConfig,
    pub caption: RoleConfig,
    pub vqa: RoleConfig,
    pub embed: RoleConfig,
    /// "base64" or "path".
    pub image_mode: String,
    pub caption_prompt: String,
    pub timeout_s: u64,
    pub max_inflight: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let role = |model: &str| RoleConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: model.to_string(),
        };
        Self {
            session: SessionConfig::default(),
            workdir: PathBuf::from(".cogniloop"),
            extractor: DEFAULT_EXTRACTOR.to_string(),
            backend: BackendKind::Mock,
            mock_script: None,
            chat: role("chat"),
            caption: role("captioner"),
            vqa: role("vqa"),
            embed: RoleConfig {
                endpoint: "http://127.0.0.1:8000/v1/embeddings".to_string(),
                model: "embedder".to_string(),
            },
            image_mode: "base64".to_string(),
            caption_prompt: "Describe the image concisely.".to_string(),
            timeout_s: 120,
            max_inflight: 4,
        }
    }
}

pub fn load_config(path: &Path) -> Result<EngineConfig, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<EngineConfig, HarnessError> {
    let mut cfg = EngineConfig::default();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = raw_line.split('#').next().unwrap_or_default().trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or(HarnessError::Config {
            line,
            message: "expected 'key = value'".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, key, value).map_err(|message| HarnessError::Config { line, message })?;
    }
    if cfg.session.window % 2 == 0 {
        return Err(HarnessError::Config {
            line: 0,
            message: format!("window must be odd, got {}", cfg.session.window),
        });
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut EngineConfig, key: &str, value: &str) -> Result<(), String> {
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        value.parse().map_err(|e| format!("bad value for {key}: {e}"))
    }

    match key {
        "n_f" => cfg.session.n_f = parse(key, value)?,
        "k_t" => cfg.session.k_t = parse(key, value)?,
        "k_m" => cfg.session.k_m = parse(key, value)?,
        "t_max" => cfg.session.t_max = parse(key, value)?,
        "fps" => cfg.session.fps = parse(key, value)?,
        "window" => cfg.session.window = parse(key, value)?,
        "seed" => cfg.session.seed = parse(key, value)?,
        "strategy" => cfg.session.strategy = parse(key, value)?,
        "verification_enabled" => cfg.session.verification_enabled = parse(key, value)?,
        "reflection_enabled" => cfg.session.reflection_enabled = parse(key, value)?,
        "temperature" => cfg.session.temperature = parse(key, value)?,
        "clip_len_s" => cfg.session.clip_len_s = parse(key, value)?,
        "workdir" => cfg.workdir = PathBuf::from(value),
        "extractor" => cfg.extractor = value.to_string(),
        "backend" => {
            cfg.backend = match value {
                "mock" => BackendKind::Mock,
                "http" => BackendKind::Http,
                other => return Err(format!("backend must be mock or http, got {other:?}")),
            }
        }
        "mock_script" => cfg.mock_script = Some(PathBuf::from(value)),
        "chat_endpoint" => cfg.chat.endpoint = value.to_string(),
        "chat_model" => cfg.chat.model = value.to_string(),
        "caption_endpoint" => cfg.caption.endpoint = value.to_string(),
        "caption_model" => cfg.caption.model = value.to_string(),
        "vqa_endpoint" => cfg.vqa.endpoint = value.to_string(),
        "vqa_model" => cfg.vqa.model = value.to_string(),
        "embed_endpoint" => cfg.embed.endpoint = value.to_string(),
        "embed_model" => cfg.embed.model = value.to_string(),
        "image_mode" => match value {
            "base64" | "path" => cfg.image_mode = value.to_string(),
            other => return Err(format!("image_mode must be base64 or path, got {other:?}")),
        },
        "caption_prompt" => cfg.caption_prompt = value.to_string(),
        "timeout_s" => cfg.timeout_s = parse(key, value)?,
        "max_inflight" => cfg.max_inflight = parse(key, value)?,
        other => return Err(format!("unknown key {other:?}")),
    }
    Ok(())
}

#[cfg(feature = "http")]
fn env_override(role: &str, field: &str) -> Option<String> {
    std::env::var(format!("COGNILOOP_{role}_{field}")).ok().filter(|v| !v.is_empty())
}

impl EngineConfig {
    /// Build the backend suite this config describes. Mock suites read the
    /// script file when one is configured, otherwise start from an empty
    /// lenient script.
    pub fn build_suite(&self) -> Result<BackendSuite, HarnessError> {
        match self.backend {
            BackendKind::Mock => {
                let script = match &self.mock_script {
                    Some(path) => MockScript::from_json_file(path)?,
                    None => MockScript { strict: false, ..MockScript::default() },
                };
                Ok(MockSuite::new(script).into_suite())
            }
            BackendKind::Http => self.build_http_suite(),
        }
    }

    #[cfg(feature = "http")]
    fn build_http_suite(&self) -> Result<BackendSuite, HarnessError> {
        use crate::gateway::http::{http_suite, HttpBackendConfig, ImageMode};
        let image_mode = if self.image_mode == "path" { ImageMode::Path } else { ImageMode::Base64 };
        let make = |id: &str, env_role: &str, role: &RoleConfig| {
            let mut c = HttpBackendConfig::new(
                id,
                &env_override(env_role, "ENDPOINT").unwrap_or_else(|| role.endpoint.clone()),
                &env_override(env_role, "MODEL").unwrap_or_else(|| role.model.clone()),
            );
            c.api_key = env_override(env_role, "API_KEY");
            c.image_mode = image_mode;
            c.timeout_s = self.timeout_s;
            c.max_inflight = self.max_inflight;
            c.caption_prompt = self.caption_prompt.clone();
            c
        };
        Ok(http_suite(
            make("chat", "CHAT", &self.chat),
            make("captioner", "CAPTION", &self.caption),
            make("vqa", "VQA", &self.vqa),
            make("embedder", "EMBED", &self.embed),
        )?)
    }

    #[cfg(not(feature = "http"))]
    fn build_http_suite(&self) -> Result<BackendSuite, HarnessError> {
        Err(HarnessError::Config {
            line: 0,
            message: "http backend requires the 'http' feature".into(),
        })
    }
}
