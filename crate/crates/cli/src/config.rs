//! Service configuration: a TOML file overlaid with `TF_*` environment
//! variables.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use outfitter_core::{BackendConfig, BackendError, BackendKind, BackendMode, Threshold};
use serde::Deserialize;
use thiserror::Error;

pub const MIN_UPLOAD_BYTES: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    listen: Option<SocketAddr>,
    tau: Option<f64>,
    catalog: Option<PathBuf>,
    template: Option<PathBuf>,
    max_upload_bytes: Option<usize>,
    max_concurrency: Option<usize>,
    session_ttl_secs: Option<u64>,
    #[serde(default)]
    backends: Vec<BackendConfig>,
}

/// Validated service settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub tau: Threshold,
    /// One entry per backend kind, in [`BackendKind::ALL`] order.
    pub backends: Vec<BackendConfig>,
    /// Catalog directory; `None` serves an empty catalog.
    pub catalog: Option<PathBuf>,
    /// Prompt template file; `None` uses the built-in template.
    pub template: Option<PathBuf>,
    pub max_upload_bytes: usize,
    /// Messages processed at once across all sessions.
    pub max_concurrency: usize,
    /// Idle time after which a session and its images are dropped.
    pub session_ttl: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            tau: Threshold::new(Threshold::DEFAULT_MOCK).expect("in range"),
            backends: BackendKind::ALL
                .into_iter()
                .map(BackendConfig::mock)
                .collect(),
            catalog: None,
            template: None,
            max_upload_bytes: 10 << 20,
            max_concurrency: 8,
            session_ttl: Duration::from_secs(24 * 3600),
        }
    }
}

impl ServiceConfig {
    /// Reads `path` and applies the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, |k| std::env::var(k).ok()).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.to_owned(),
                source,
            },
            other => other,
        })
    }

    /// Parses `text`, resolves relative paths against `base` and applies
    /// overrides from `env`.
    ///
    /// Variables: `TF_LISTEN`, `TF_TAU`, `TF_CATALOG`, `TF_TEMPLATE`,
    /// `TF_MAX_UPLOAD_BYTES`, `TF_MAX_CONCURRENCY`, `TF_SESSION_TTL_SECS`,
    /// and `TF_BACKEND_<KIND>_URL` / `TF_BACKEND_<KIND>_MODE` per backend.
    /// Without an explicit `tau`, the default is 0.25 when any backend is
    /// remote and 0.50 on an all-mock stack.
    pub fn from_toml(
        text: &str,
        base: &Path,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let file: FileConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::new(),
            source,
        })?;
        let defaults = Self::default();

        let mut backends = Vec::with_capacity(BackendKind::ALL.len());
        for kind in BackendKind::ALL {
            let mut listed = file.backends.iter().filter(|b| b.kind == kind);
            let config = listed
                .next()
                .cloned()
                .unwrap_or_else(|| BackendConfig::mock(kind));
            if listed.next().is_some() {
                return Err(invalid("backends", format!("`{kind}` is configured twice")));
            }
            backends.push(config.with_env(&env)?);
        }

        let parse_env = |key: &str| env(key).filter(|v| !v.trim().is_empty());
        let listen = match parse_env("TF_LISTEN") {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| invalid("TF_LISTEN", format!("`{v}` is not host:port")))?,
            None => file.listen.unwrap_or(defaults.listen),
        };
        let tau = match parse_env("TF_TAU") {
            Some(v) => Some(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid("TF_TAU", format!("`{v}` is not a number")))?,
            ),
            None => file.tau,
        };
        let tau = tau.unwrap_or(if backends.iter().any(|b| b.mode == BackendMode::Remote) {
            Threshold::DEFAULT_LIVE
        } else {
            Threshold::DEFAULT_MOCK
        });
        let tau = Threshold::new(tau).map_err(|e| invalid("tau", e.to_string()))?;

        let number =
            |key: &str, file_value: Option<usize>, default: usize| -> Result<usize, ConfigError> {
                match parse_env(key) {
                    Some(v) => v
                        .trim()
                        .parse()
                        .map_err(|_| invalid(key, format!("`{v}` is not a non-negative integer"))),
                    None => Ok(file_value.unwrap_or(default)),
                }
            };
        let max_upload_bytes = number(
            "TF_MAX_UPLOAD_BYTES",
            file.max_upload_bytes,
            defaults.max_upload_bytes,
        )?;
        if max_upload_bytes < MIN_UPLOAD_BYTES {
            return Err(invalid(
                "max_upload_bytes",
                format!("must be at least {MIN_UPLOAD_BYTES}"),
            ));
        }
        let max_concurrency = number(
            "TF_MAX_CONCURRENCY",
            file.max_concurrency,
            defaults.max_concurrency,
        )?;
        if max_concurrency == 0 {
            return Err(invalid("max_concurrency", "must be positive"));
        }
        let ttl = number(
            "TF_SESSION_TTL_SECS",
            file.session_ttl_secs.map(|s| s as usize),
            defaults.session_ttl.as_secs() as usize,
        )?;
        if ttl == 0 {
            return Err(invalid("session_ttl_secs", "must be positive"));
        }

        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let catalog = parse_env("TF_CATALOG")
            .map(PathBuf::from)
            .or(file.catalog.map(resolve));
        let template = parse_env("TF_TEMPLATE")
            .map(PathBuf::from)
            .or(file.template.map(resolve));

        Ok(Self {
            listen,
            tau,
            backends,
            catalog,
            template,
            max_upload_bytes,
            max_concurrency,
            session_ttl: Duration::from_secs(ttl as u64),
        })
    }

    pub fn backend(&self, kind: BackendKind) -> &BackendConfig {
        self.backends
            .iter()
            .find(|b| b.kind == kind)
            .expect("every kind is configured")
    }
}
