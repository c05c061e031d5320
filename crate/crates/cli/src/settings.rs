use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Result;
use qasynth::qualitygate::QcConfig;
use qasynth::synthgen::{self, RetryPolicy, DEFAULT_API_KEY_ENV, DEFAULT_ENDPOINT_ENV};
use serde::{Deserialize, Serialize};

use crate::args::GlobalArgs;
use crate::error::fail;

/// Config file contents. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    backend: Option<String>,
    model: Option<String>,
    concurrency: Option<usize>,
    cache_dir: Option<PathBuf>,
    run_dir: Option<PathBuf>,
    log_level: Option<String>,
    strict: Option<bool>,
    synth: Option<SynthSettings>,
    http: Option<HttpSettings>,
    qc: Option<QcConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub temperature: f64,
    pub qbp_max_words: u32,
    pub qbc_max_words: u32,
    pub max_attempts: u32,
    pub retry_base_ms: u64,
    pub retry_cap_ms: u64,
    pub sample_count: u32,
    pub default_total_frames: u32,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let defaults = synthgen::SynthConfig::default();
        Self {
            temperature: defaults.temperature,
            qbp_max_words: defaults.qbp_max_words,
            qbc_max_words: defaults.qbc_max_words,
            max_attempts: defaults.retry.max_attempts,
            retry_base_ms: defaults.retry.base.as_millis() as u64,
            retry_cap_ms: defaults.retry.cap.as_millis() as u64,
            sample_count: defaults.sample_count,
            default_total_frames: defaults.default_total_frames,
        }
    }
}

impl SynthSettings {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            base: Duration::from_millis(self.retry_base_ms),
            cap: Duration::from_millis(self.retry_cap_ms),
        }
    }
}

/// Names of the environment variables holding the endpoint and key. The
/// values themselves never reach a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    pub endpoint_env: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint_env: DEFAULT_ENDPOINT_ENV.to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 120,
        }
    }
}

/// Fully resolved settings: flags, then environment, then config file, then
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub config_file: Option<PathBuf>,
    pub seed: u64,
    pub backend: Option<String>,
    pub model: String,
    pub concurrency: usize,
    pub run_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub log_level: String,
    pub strict: bool,
    pub synth: SynthSettings,
    pub http: HttpSettings,
    pub qc: QcConfig,
}

impl Settings {
    /// Clap has already merged flags with their environment variables, so
    /// only the file layer and the defaults remain.
    pub fn resolve(global: &GlobalArgs) -> Result<Self> {
        let file = match &global.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        let run_dir = global
            .run_dir
            .clone()
            .or(file.run_dir)
            .unwrap_or_else(|| PathBuf::from("run"));
        let cache_dir = global
            .cache_dir
            .clone()
            .or(file.cache_dir)
            .unwrap_or_else(|| run_dir.join("cache"));
        let settings = Self {
            config_file: global.config.clone(),
            seed: global.seed.or(file.seed).unwrap_or(0),
            backend: global.backend.clone().or(file.backend),
            model: global
                .model
                .clone()
                .or(file.model)
                .unwrap_or_else(|| synthgen::SynthConfig::default().model_id),
            concurrency: global
                .concurrency
                .or(file.concurrency)
                .unwrap_or(synthgen::SynthConfig::default().concurrency),
            run_dir,
            cache_dir,
            log_level: global
                .log_level
                .clone()
                .or(file.log_level)
                .unwrap_or_else(|| "info".to_string()),
            strict: global.strict || file.strict.unwrap_or(false),
            synth: file.synth.unwrap_or_default(),
            http: file.http.unwrap_or_default(),
            qc: file.qc.unwrap_or_default(),
        };
        if settings.concurrency == 0 {
            return Err(fail("config", "concurrency must be at least 1"));
        }
        Ok(settings)
    }
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| fail("config", format!("{}: {e}", path.display())))?;
    toml::from_str(&body).map_err(|e| {
        let msg = e.message().to_string();
        fail("config", format!("{}: {msg}", path.display()))
    })
}
