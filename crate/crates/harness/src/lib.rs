//! Operational shell around `awareness-core`: configuration, the NDJSON
//! backend service, offline pipelines, the live self-validating loop and
//! the HTTP/WebSocket gateway.

use std::net::SocketAddr;
use std::path::PathBuf;

use awareness_core::detector::DetectorError;
use awareness_core::distinguisher::DistinguisherError;
use awareness_core::raster::RasterError;
use awareness_core::renderer::RenderError;
use awareness_core::scenario::ScenarioError;
use awareness_core::specgen::SpecError;
use awareness_core::validator::ValidatorError;
use thiserror::Error;

pub mod backend;
pub mod config;
pub mod gateway;
pub mod live;
pub mod pipeline;

pub use config::HarnessConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {0}; run the earlier pipeline stage first")]
    MissingArtifact(PathBuf),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("cannot reach backend at {addr} after {attempts} attempts")]
    Connect { addr: SocketAddr, attempts: u32 },
    #[error("backend sent a bad line: {0}")]
    Protocol(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Validator(#[from] ValidatorError),
    #[error(transparent)]
    Distinguisher(#[from] DistinguisherError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("task failed: {0}")]
    Task(String),
}
