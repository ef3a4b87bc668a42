use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to rerun a stage and check its outputs: no
/// timestamps, no absolute paths.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub library_version: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(paths: &[impl AsRef<Path>]) -> Result<Vec<FileDigest>, CliError> {
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            Ok(FileDigest {
                file: p
                    .file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl Manifest {
    pub fn new(
        stage: &str,
        seed: u64,
        parameters: BTreeMap<String, String>,
        inputs: &[impl AsRef<Path>],
        outputs: &[impl AsRef<Path>],
    ) -> Result<Self, CliError> {
        Ok(Self {
            stage: stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            library_version: laborflow::VERSION.to_string(),
            seed,
            parameters,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
