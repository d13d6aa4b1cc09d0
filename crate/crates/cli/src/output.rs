//! Output files. Every file carries the seed, parameter hash and version:
//! CSV as a leading `#` line, JSON as top-level fields.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::Format;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the JSON encoding of the resolved inputs.
pub fn param_hash<T: Serialize>(inputs: &T) -> String {
    let bytes = serde_json::to_vec(inputs).expect("inputs serialize");
    hex::encode(Sha256::digest(&bytes))
}

pub struct Stamp {
    pub seed: u64,
    pub param_hash: String,
}

impl Stamp {
    pub fn new<T: Serialize>(seed: u64, inputs: &T) -> Self {
        Stamp { seed, param_hash: param_hash(inputs) }
    }

    pub fn csv_line(&self) -> String {
        format!("# quicksync {VERSION} seed={} param_hash={}\n", self.seed, self.param_hash)
    }

    pub fn json<T: Serialize>(&self, body: &T) -> String {
        #[derive(Serialize)]
        struct Out<'a, T> {
            seed: u64,
            param_hash: &'a str,
            version: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        let mut s = serde_json::to_string_pretty(&Out { seed: self.seed, param_hash: &self.param_hash, version: VERSION, body })
            .expect("output serializes");
        s.push('\n');
        s
    }
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let wrap = |source, path: &Path| CliError::Write { path: path.to_path_buf(), source };
    fs::create_dir_all(dir).map_err(|e| wrap(e, dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| wrap(e, &path))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Writes `stem.csv` (stamp line plus `csv`) or `stem.json`.
pub fn emit<T: Serialize>(dir: &Path, stem: &str, format: Format, stamp: &Stamp, csv: &str, body: &T) -> Result<(), CliError> {
    match format {
        Format::Csv => write(dir, &format!("{stem}.csv"), &(stamp.csv_line() + csv)),
        Format::Json => write(dir, &format!("{stem}.json"), &stamp.json(body)),
    }
}
