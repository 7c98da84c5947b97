//! Versioned JSON artifacts written atomically.
//!
//! Every pipeline file is an [`Artifact`] envelope: a format version, a kind
//! tag, the hash of the run configuration that produced it, and the payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed artifact: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected a {expected} artifact, found {found}")]
    WrongKind {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: unsupported format version {found} (this build reads {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub format: u32,
    pub kind: String,
    pub config_hash: String,
    pub payload: T,
}

impl<T> Artifact<T> {
    pub fn new(kind: &str, config_hash: &str, payload: T) -> Self {
        Artifact {
            format: FORMAT_VERSION,
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            payload,
        }
    }
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let io = |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, text.as_bytes())
}

pub fn save<T: Serialize>(path: &Path, artifact: &Artifact<T>) -> Result<(), ArtifactError> {
    write_json(path, artifact)
}

/// Reads an artifact and checks its kind and format version.
pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Artifact<T>, ArtifactError> {
    let text = fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    #[derive(Deserialize)]
    struct Header {
        format: u32,
        kind: String,
    }
    let json = |source| ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    };
    let header: Header = serde_json::from_str(&text).map_err(json)?;
    if header.kind != kind {
        return Err(ArtifactError::WrongKind {
            path: path.to_path_buf(),
            expected: kind.to_string(),
            found: header.kind,
        });
    }
    if header.format != FORMAT_VERSION {
        return Err(ArtifactError::Version {
            path: path.to_path_buf(),
            found: header.format,
        });
    }
    serde_json::from_str(&text).map_err(json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/a.json");
        save(&path, &Artifact::new("numbers", "abc", vec![1, 2, 3])).unwrap();
        let back: Artifact<Vec<i32>> = load(&path, "numbers").unwrap();
        assert_eq!(back.payload, vec![1, 2, 3]);
        assert_eq!(back.config_hash, "abc");
        assert!(matches!(
            load::<Vec<i32>>(&path, "other"),
            Err(ArtifactError::WrongKind { .. })
        ));
    }

    #[test]
    fn rejects_future_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        fs::write(&path, r#"{"format":2,"kind":"numbers","config_hash":"","payload":[]}"#).unwrap();
        assert!(matches!(
            load::<Vec<i32>>(&path, "numbers"),
            Err(ArtifactError::Version { found: 2, .. })
        ));
    }

    #[test]
    fn corrupt_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{not json").unwrap();
        let err = load::<Vec<i32>>(&path, "numbers").unwrap_err();
        assert!(err.to_string().contains("bad.json"));
    }
}
