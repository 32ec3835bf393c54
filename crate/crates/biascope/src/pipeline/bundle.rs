//! Replay bundles: a self-contained directory of recorded call envelopes
//! plus a manifest of digests. A bundle and a config reproduce a run
//! byte-for-byte on any machine with zero network traffic.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::io;
use super::{ArtifactPaths, RunConfig, RunManifest, GATEWAY_STAGES};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const ENVELOPE_DIR: &str = "envelopes";
pub const BUNDLE_FORMAT: &str = "biascope-bundle/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    /// Semantic hash of the recording run's configuration.
    pub config_hash: String,
    pub root_seed: u64,
    /// Relative file path to sha256 digest, covering every envelope.
    pub files: BTreeMap<String, String>,
}

/// Copies every envelope the run touched into `dest` and writes the bundle
/// manifest. Requires the backend-calling stages to be complete; anything
/// missing is named in the error.
pub fn export_bundle(config: &RunConfig, dest: &Path) -> Result<BundleManifest> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let manifest_path = paths.manifest();
    if !manifest_path.exists() {
        return Err(Error::Precondition(format!(
            "no run manifest at {}; run the pipeline before exporting",
            manifest_path.display()
        )));
    }
    let manifest: RunManifest = io::read_json(&manifest_path)?;
    let config_hash = config.semantic_hash()?;
    if manifest.config_hash != config_hash {
        return Err(Error::Config(
            "the run manifest belongs to a different configuration".to_string(),
        ));
    }

    let incomplete: Vec<&str> = GATEWAY_STAGES
        .iter()
        .copied()
        .filter(|stage| !manifest.stage_complete(stage, paths.root()))
        .collect();
    if !incomplete.is_empty() {
        return Err(Error::Precondition(format!(
            "export needs completed stages: {}",
            incomplete.join(", ")
        )));
    }

    let mut files = BTreeMap::new();
    let mut missing = Vec::new();
    for key in &manifest.used_cache_keys {
        let name = format!("{key}.json");
        let source = config.cache_dir.join(&name);
        if !source.exists() {
            missing.push(name);
            continue;
        }
        let target = dest.join(ENVELOPE_DIR).join(&name);
        io::ensure_parent(&target)?;
        fs::copy(&source, &target).map_err(|e| Error::io(&target, e))?;
        files.insert(format!("{ENVELOPE_DIR}/{name}"), io::sha256_file(&target)?);
    }
    if !missing.is_empty() {
        return Err(Error::MissingArtifact(format!(
            "{} recorded envelopes are absent from the cache: {}",
            missing.len(),
            missing.join(", ")
        )));
    }

    let bundle = BundleManifest {
        format: BUNDLE_FORMAT.to_string(),
        config_hash,
        root_seed: manifest.root_seed,
        files,
    };
    io::write_json_pretty(&dest.join(BUNDLE_FILE), &bundle)?;
    Ok(bundle)
}

/// Reads the bundle manifest and verifies every file digest. A missing file
/// and a tampered file are different failures: the former may mean a partial
/// copy, the latter means the bundle cannot be trusted.
pub fn verify_bundle(dir: &Path) -> Result<BundleManifest> {
    let manifest_path = dir.join(BUNDLE_FILE);
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact(format!(
            "no bundle manifest at {}",
            manifest_path.display()
        )));
    }
    let bundle: BundleManifest = io::read_json(&manifest_path)?;
    if bundle.format != BUNDLE_FORMAT {
        return Err(Error::Integrity(format!(
            "unrecognized bundle format '{}'",
            bundle.format
        )));
    }
    for (rel, digest) in &bundle.files {
        let path = dir.join(rel);
        if !path.exists() {
            return Err(Error::MissingArtifact(format!(
                "bundle file {rel} is missing"
            )));
        }
        let actual = io::sha256_file(&path)?;
        if actual != *digest {
            return Err(Error::Integrity(format!(
                "bundle file {rel} digest mismatch: recorded {digest}, found {actual}"
            )));
        }
    }
    Ok(bundle)
}
