use std::path::PathBuf;

use outfitter_core::pipeline::StepError;
use outfitter_core::{BackendError, CatalogError, ErrorCode, ImagingError, PipelineError};
use serde_json::json;
use thiserror::Error;

use crate::config::ConfigError;
use crate::service::StartupError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImagingError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{}", .0.message)]
    Step(StepError),
    #[error("request was not a try-on instruction: {0}")]
    Refused(String),
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error(transparent)]
    Server(#[from] anyhow::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::InvalidArgument(_) => "InvalidArgument",
            CliError::Io { .. } => "IoError",
            CliError::Image { .. } => "UndecodableImage",
            CliError::Config(_) => "ConfigError",
            CliError::Catalog(CatalogError::CorruptIndex(_)) => "CorruptIndex",
            CliError::Catalog(CatalogError::VersionMismatch { .. }) => "VersionMismatch",
            CliError::Catalog(CatalogError::Backend(e)) | CliError::Backend(e) => backend_code(e),
            CliError::Catalog(_) => "CatalogError",
            CliError::Pipeline(e) => e.code(),
            CliError::Step(e) => e.code.as_str(),
            CliError::Refused(_) => "RefusedNotTryOn",
            CliError::Startup(StartupError::Backend(e)) => backend_code(e),
            CliError::Startup(StartupError::Catalog(_)) => "CatalogError",
            CliError::Startup(StartupError::Template(_)) => "TemplateError",
            CliError::Server(_) => "ServerError",
        }
    }

    /// 2 bad usage, 3 unreadable input, 4 catalog, 5 backend, 6 the
    /// pipeline declined or failed the request, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::InvalidArgument(_) | CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Image { .. } => 3,
            CliError::Catalog(CatalogError::Backend(_)) | CliError::Backend(_) => 5,
            CliError::Catalog(_) | CliError::Startup(StartupError::Catalog(_)) => 4,
            CliError::Startup(StartupError::Backend(_)) => 5,
            CliError::Startup(StartupError::Template(_)) => 2,
            CliError::Step(e) if is_backend(e.code) => 5,
            CliError::Pipeline(_) | CliError::Step(_) | CliError::Refused(_) => 6,
            CliError::Server(_) => 1,
        }
    }

    /// One JSON object on a single line.
    pub fn to_line(&self) -> String {
        let mut v = json!({
            "error": self.code(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        let backend = match self {
            CliError::Backend(e) | CliError::Catalog(CatalogError::Backend(e)) => e.kind(),
            CliError::Step(e) => e.backend,
            _ => None,
        };
        if let Some(kind) = backend {
            v["backend"] = json!(kind);
        }
        v.to_string()
    }
}

fn is_backend(code: ErrorCode) -> bool {
    matches!(
        code,
        ErrorCode::BackendUnavailable
            | ErrorCode::BackendTimeout
            | ErrorCode::BackendProtocol
            | ErrorCode::BackendRejected
            | ErrorCode::BackendConfig
    )
}

fn backend_code(e: &BackendError) -> &'static str {
    match e {
        BackendError::Unavailable { .. } => "BackendUnavailable",
        BackendError::Timeout { .. } => "BackendTimeout",
        BackendError::Protocol { .. } => "BackendProtocol",
        BackendError::NoRegionFound => "RegionNotFound",
        BackendError::InvalidInput { .. } => "BackendRejected",
        BackendError::Config { .. } => "BackendConfig",
    }
}
