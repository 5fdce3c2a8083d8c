//! File helpers that keep the offending path in every error, plus run
//! manifests.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input not found"),
        ))
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    require(path)?;
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    require(path)?;
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String, CliError> {
    require(path)?;
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Runs `fill` against a buffered writer for `path`. Library I/O failures
/// are reported against that path.
pub fn write_with<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> iris3d::Result<()>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    fill(&mut out).map_err(|e| match e {
        iris3d::Error::Io(io) => CliError::io(path, io),
        other => CliError::Invariant {
            stage: "write",
            source: other,
        },
    })?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_string(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    write_string(path, &text)
}

/// `*.pgm` files of a directory in name order, or the path itself if it is
/// a file.
pub fn pgm_inputs(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    require(path)?;
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .pgm files in directory"),
        ));
    }
    Ok(files)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// Machine-readable record of one command run. It holds no timestamps, so
/// rerunning the same command produces the same manifest.
#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    version: String,
    seed: u64,
    /// Hash over the input digests and the effective configuration.
    inputs_hash: String,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    config: serde_json::Value,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Self {
        Self {
            command: command.to_string(),
            version: crate::VERSION.to_string(),
            seed,
            inputs_hash: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: serde_json::to_value(config).expect("serialisable"),
        }
    }

    /// Records an input file, or every file directly inside a directory.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let files = if path.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            v.sort();
            v
        } else {
            vec![path.to_path_buf()]
        };
        for f in files {
            let digest = sha256_hex(&read_bytes(&f)?);
            self.inputs.push(InputDigest {
                path: f.display().to_string(),
                sha256: digest,
            });
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<dir>/<command>.manifest.json`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        let mut h = Sha256::new();
        for i in &self.inputs {
            h.update(i.sha256.as_bytes());
            h.update(b"\n");
        }
        h.update(self.config.to_string().as_bytes());
        self.inputs_hash = hex::encode(h.finalize());
        let path = dir.join(format!("{}.manifest.json", self.command));
        write_json(&path, &self)?;
        Ok(path)
    }
}
