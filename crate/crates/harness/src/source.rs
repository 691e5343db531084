//! Where responses come from: built-in models, a chat-completions endpoint,
//! or a file of pre-recorded responses.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use log::warn;
use pointcount_core::ablation::tuple_counting_stub;
use pointcount_core::models::{noisy_oracle, perfect_oracle, AnswerMode, NoiseConfig, PixelCounter};
use pointcount_core::parse::extract_count;
use pointcount_core::render::Renderer;
use pointcount_core::{prompt, seed, Approach, PixelGeometry};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::image_io::{encode_png, read_png};
use crate::manifest::{read_jsonl, ManifestRecord};
use crate::Error;

/// Environment variable holding the endpoint bearer token, unless overridden.
pub const DEFAULT_TOKEN_ENV: &str = "POINTCOUNT_API_KEY";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay_ms: 500, max_delay_ms: 8_000 }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1 << attempt.min(16));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL (`.../v1`) or the full `.../chat/completions` URL.
    pub url: String,
    pub model: String,
    /// Name of the environment variable with the bearer token.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            model: model.into(),
            token_env: Some(DEFAULT_TOKEN_ENV.into()),
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }

    fn completions_url(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.into()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Oracle,
    Noisy(NoiseConfig),
    Pixel,
    /// Answers a prefill with the number of tuples it contains.
    TupleStub,
    Endpoint(EndpointConfig),
    Offline(PathBuf),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Oracle => "oracle".into(),
            ModelSpec::Noisy(_) => "noisy".into(),
            ModelSpec::Pixel => "pixel".into(),
            ModelSpec::TupleStub => "tuple_stub".into(),
            ModelSpec::Endpoint(e) => format!("endpoint:{}", e.model),
            ModelSpec::Offline(p) => format!("offline:{}", p.file_stem().and_then(|s| s.to_str()).unwrap_or("responses")),
        }
    }
}

/// Parses `omit=0.2,hallucinate=0.1,jitter=0,answer=consistent|independent:0.3`.
pub fn parse_noise(spec: &str) -> Result<NoiseConfig, Error> {
    let mut cfg = NoiseConfig::default();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| Error::Config(format!("noise setting `{part}` needs key=value")))?;
        let rate = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("bad noise value `{v}`")));
        match key {
            "omit" | "omit_rate" => cfg.omit_rate = rate(value)?,
            "hallucinate" | "hallucinate_rate" => cfg.hallucinate_rate = rate(value)?,
            "jitter" | "jitter_rate" => cfg.jitter_rate = rate(value)?,
            "answer" => {
                cfg.answer_mode = match value.split_once(':') {
                    None if value == "consistent" => AnswerMode::Consistent,
                    Some(("independent", p)) => AnswerMode::IndependentError(rate(p)?),
                    _ => return Err(Error::Config(format!("bad answer mode `{value}`"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown noise setting `{key}`"))),
        }
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

/// Reads a noise config from TOML, e.g. `omit_rate = 0.2` and
/// `answer_mode = { mode = "independent_error", p = 0.1 }`.
pub fn noise_from_toml(text: &str) -> Result<NoiseConfig, Error> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        #[serde(default)]
        omit_rate: f64,
        #[serde(default)]
        hallucinate_rate: f64,
        #[serde(default)]
        jitter_rate: f64,
        answer_mode: Option<AnswerMode>,
    }
    let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let cfg = NoiseConfig {
        omit_rate: raw.omit_rate,
        hallucinate_rate: raw.hallucinate_rate,
        jitter_rate: raw.jitter_rate,
        answer_mode: raw.answer_mode.unwrap_or(AnswerMode::Consistent),
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

/// Everything a model source sees for one sample.
#[derive(Clone, Debug)]
pub struct Request<'a> {
    pub record: &'a ManifestRecord,
    pub approach: Approach,
    pub prompt: String,
    pub max_tokens: u32,
}

impl<'a> Request<'a> {
    pub fn new(record: &'a ManifestRecord, approach: Approach, max_tokens: u32) -> Self {
        Request { record, approach, prompt: prompt::compose_prompt(approach, &record.query), max_tokens }
    }

    /// Stable digest of what is sent to the model.
    pub fn digest(&self, model: &str) -> String {
        let payload = json!({
            "model": model,
            "approach": self.approach.name(),
            "prompt": self.prompt,
            "prefill": self.record.prefill,
            "image": self.record.image_path,
            "max_tokens": self.max_tokens,
        });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }
}

pub trait Responder: Sync {
    /// Model continuation for the request (after any prefill).
    fn respond(&self, req: &Request<'_>) -> Result<String, Error>;
}

/// Builds the responder for a model spec. `root` resolves image paths.
pub fn responder(spec: &ModelSpec, root: &Path, seed: u64) -> Result<Box<dyn Responder>, Error> {
    Ok(match spec {
        ModelSpec::Oracle => Box::new(Oracle),
        ModelSpec::Noisy(cfg) => Box::new(Noisy { cfg: *cfg, seed }),
        ModelSpec::Pixel => Box::new(Pixel::new(root)),
        ModelSpec::TupleStub => Box::new(TupleStub),
        ModelSpec::Endpoint(cfg) => Box::new(Endpoint::new(cfg.clone(), root)?),
        ModelSpec::Offline(path) => Box::new(Offline::load(path)?),
    })
}

struct Oracle;

impl Responder for Oracle {
    fn respond(&self, req: &Request<'_>) -> Result<String, Error> {
        let rec = req.record;
        if rec.prefill.is_some() {
            return Ok(format!(" {}", rec.label));
        }
        Ok(perfect_oracle(&rec.truth()?, i64::from(rec.label), req.approach))
    }
}

struct TupleStub;

impl Responder for TupleStub {
    fn respond(&self, req: &Request<'_>) -> Result<String, Error> {
        Ok(tuple_counting_stub(req.record.prefill.as_deref().unwrap_or("")))
    }
}

struct Noisy {
    cfg: NoiseConfig,
    seed: u64,
}

impl Responder for Noisy {
    fn respond(&self, req: &Request<'_>) -> Result<String, Error> {
        let rec = req.record;
        let dims = rec.dims().ok_or_else(|| Error::Model(format!("{}: noisy oracle needs grid coordinates", rec.id)))?;
        let mut rng = seed::stream(self.seed, &["noisy", &rec.id]);
        let ptc = noisy_oracle(&rec.coords.cells(), dims, &self.cfg, &mut rng);
        Ok(match req.approach {
            Approach::Ptc | Approach::CoordCount => ptc,
            Approach::Dc | Approach::Reasoning => extract_count(&ptc).to_string(),
            Approach::Ltc => format!("<answer>{}</answer>", extract_count(&ptc)),
        })
    }
}

struct Pixel {
    root: PathBuf,
    renderer: Renderer,
    counter: PixelCounter,
}

impl Pixel {
    fn new(root: &Path) -> Self {
        Pixel { root: root.into(), renderer: Renderer::new(PixelGeometry::STANDARD), counter: PixelCounter::default() }
    }
}

impl Responder for Pixel {
    fn respond(&self, req: &Request<'_>) -> Result<String, Error> {
        let rec = req.record;
        // Synthetic scenes are re-rendered in process; anything else is read from disk.
        let image = match rec.scene() {
            Some(scene) if rec.prefill.is_none() => self.renderer.render(&scene),
            _ => read_png(&self.root.join(&rec.image_path))?,
        };
        self.counter.respond(&image, &rec.query).map_err(|e| Error::Model(e.to_string()))
    }
}

#[derive(Deserialize)]
struct OfflineLine {
    id: String,
    response_text: String,
}

pub struct Offline {
    responses: HashMap<String, String>,
}

impl Offline {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let lines: Vec<OfflineLine> = read_jsonl(path)?;
        Ok(Offline { responses: lines.into_iter().map(|l| (l.id, l.response_text)).collect() })
    }

    /// First manifest id without a recorded response.
    pub fn first_missing<'a>(&self, records: impl IntoIterator<Item = &'a ManifestRecord>) -> Option<String> {
        records.into_iter().find(|r| !self.responses.contains_key(&r.id)).map(|r| r.id.clone())
    }
}

impl Responder for Offline {
    fn respond(&self, req: &Request<'_>) -> Result<String, Error> {
        self.responses
            .get(&req.record.id)
            .cloned()
            .ok_or_else(|| Error::OfflineMissingResponse(req.record.id.clone()))
    }
}

/// Chat-completions client.
pub struct Endpoint {
    cfg: EndpointConfig,
    root: PathBuf,
    agent: ureq::Agent,
    token: Option<String>,
    renderer: Renderer,
}

impl Endpoint {
    pub fn new(cfg: EndpointConfig, root: &Path) -> Result<Self, Error> {
        let token = match &cfg.token_env {
            Some(var) => std::env::var(var).ok(),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Endpoint { cfg, root: root.into(), agent, token, renderer: Renderer::new(PixelGeometry::STANDARD) })
    }

    fn image_bytes(&self, rec: &ManifestRecord) -> Result<Vec<u8>, Error> {
        let path = self.root.join(&rec.image_path);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) => match rec.scene() {
                Some(scene) if rec.prefill.is_none() => encode_png(&self.renderer.render(&scene)),
                _ => Err(Error::io(&path, e)),
            },
        }
    }

    pub fn body(&self, req: &Request<'_>) -> Result<Value, Error> {
        let png = self.image_bytes(req.record)?;
        let data_uri = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
        let mut messages = vec![json!({
            "role": "user",
            "content": [
                {"type": "image_url", "image_url": {"url": data_uri}},
                {"type": "text", "text": req.prompt},
            ],
        })];
        if let Some(prefill) = &req.record.prefill {
            messages.push(json!({"role": "assistant", "content": prefill}));
        }
        Ok(json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": 0,
            "max_tokens": req.max_tokens,
        }))
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<String, (bool, String)> {
        let mut call = self.agent.post(url);
        if let Some(t) = &self.token {
            call = call.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = call.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((false, format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let v: Value = resp.body_mut().read_json().map_err(|e| (true, e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| (false, "response has no choices[0].message.content".into()))
    }
}

impl Responder for Endpoint {
    fn respond(&self, req: &Request<'_>) -> Result<String, Error> {
        let body = self.body(req)?;
        let url = self.cfg.completions_url();
        let attempts = self.cfg.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.attempt(&url, &body) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    warn!("{}: attempt {} failed: {msg}", req.record.id, attempt + 1);
                    last = msg;
                    if !retry {
                        return Err(Error::Endpoint(last));
                    }
                    if attempt + 1 < attempts {
                        thread::sleep(self.cfg.retry.delay(attempt));
                    }
                }
            }
        }
        Err(Error::EndpointUnreachable { attempts, last })
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Built-in model names; endpoint and offline sources need extra options.
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "oracle" => Ok(ModelSpec::Oracle),
            "noisy" => Ok(ModelSpec::Noisy(NoiseConfig::default())),
            "pixel" => Ok(ModelSpec::Pixel),
            "tuple-stub" | "tuple_stub" => Ok(ModelSpec::TupleStub),
            _ => Err(Error::Config(format!("unknown model `{s}`"))),
        }
    }
}
