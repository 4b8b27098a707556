//! Versioned, checksummed JSON artifact files.
//!
//! ```json
//! {"format_version": 1, "checksum": "<sha256 of compact artifact JSON>", "artifact": {...}}
//! ```
//!
//! Keys are sorted and floats use shortest round-trip formatting, so a loaded
//! artifact predicts bit-identically to the saved one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{ModelArtifact, ARTIFACT_FORMAT_VERSION};

fn checksum(artifact: &Value) -> String {
    let compact = serde_json::to_string(artifact).expect("values always serialise");
    Sha256::digest(compact.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Serialises an artifact document.
pub fn artifact_to_string(artifact: &ModelArtifact) -> Result<String> {
    let body = serde_json::to_value(artifact).map_err(|e| Error::Parse(e.to_string()))?;
    let doc = serde_json::json!({
        "format_version": ARTIFACT_FORMAT_VERSION,
        "checksum": checksum(&body),
        "artifact": body,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Parses and verifies an artifact document.
pub fn artifact_from_str(text: &str) -> Result<ModelArtifact> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let version = doc
        .get("format_version")
        .and_then(Value::as_i64)
        .ok_or_else(|| Error::Parse("missing format_version".into()))?;
    if version != ARTIFACT_FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let stored = doc
        .get("checksum")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parse("missing checksum".into()))?;
    let body = doc
        .get("artifact")
        .ok_or_else(|| Error::Parse("missing artifact".into()))?;
    if checksum(body) != stored {
        return Err(Error::Parse("checksum mismatch".into()));
    }
    let artifact: ModelArtifact =
        serde_json::from_value(body.clone()).map_err(|e| Error::Parse(e.to_string()))?;
    if artifact.format_version != ARTIFACT_FORMAT_VERSION {
        return Err(Error::Version(artifact.format_version));
    }
    artifact
        .check()
        .map_err(|e| Error::Parse(format!("inconsistent artifact: {e}")))?;
    Ok(artifact)
}

/// Writes `contents` to a sibling temp file, then renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_artifact(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    write_atomic(path, artifact_to_string(artifact)?.as_bytes())
}

pub fn load_artifact(path: &Path) -> Result<ModelArtifact> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    artifact_from_str(&text)
}
