//! Dataset generation, evaluation runs and reporting on top of
//! `pointcount-core`.

use std::path::{Path, PathBuf};

use pointcount_core::builder::BuildError;
use pointcount_core::real::RealError;

pub mod dataset;
pub mod image_io;
pub mod manifest;
pub mod real_io;
pub mod report;
pub mod run;
pub mod source;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown export mode `{0}` (expected dc, ptc or xft)")]
    UnknownMode(String),
    #[error("model: {0}")]
    Model(String),
    #[error("endpoint: {0}")]
    Endpoint(String),
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    EndpointUnreachable { attempts: u32, last: String },
    #[error("offline responses have no entry for sample `{0}`")]
    OfflineMissingResponse(String),
    #[error(transparent)]
    Real(#[from] RealError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
