//! Output files: digests, provenance headers and atomic writes.
//!
//! Every artifact records the tool version, the run seed and a SHA-256
//! digest of each input. CSV files carry these as leading `#` comment lines,
//! JSON files as top-level fields. Nothing time- or host-dependent is
//! written, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use scorefuse::{Error, Result, TOOL_VERSION};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("sha256:{:x}", Sha256::digest(&bytes)))
}

/// Input label to digest, labelled by the path as given.
pub fn digest_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<BTreeMap<String, String>> {
    paths
        .into_iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

/// Write `bytes` to a temporary file beside `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(seed: u64, inputs: BTreeMap<String, String>) -> Self {
        Provenance { seed, inputs }
    }

    pub fn csv_preamble(&self) -> String {
        let mut s = format!("# tool: {TOOL_VERSION}\n# seed: {}\n", self.seed);
        for (label, digest) in &self.inputs {
            s.push_str(&format!("# input: {label} {digest}\n"));
        }
        s
    }

    /// Preamble followed by whatever `body` writes.
    pub fn csv<F>(&self, body: F) -> Result<Vec<u8>>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut out = self.csv_preamble().into_bytes();
        body(&mut out)?;
        Ok(out)
    }

    pub fn json<T: Serialize>(&self, body: &T) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            tool_version: &'static str,
            seed: u64,
            inputs: &'a BTreeMap<String, String>,
            #[serde(flatten)]
            body: &'a T,
        }
        to_json(&Envelope {
            tool_version: TOOL_VERSION,
            seed: self.seed,
            inputs: &self.inputs,
            body,
        })
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::contract(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Prefix an error with the file it concerns, unless it already names it.
pub fn in_file(path: &Path) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::Io { .. } | Error::Json { .. } => e,
        e => e.context(path.display().to_string()),
    }
}
