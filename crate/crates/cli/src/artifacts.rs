//! Output directories with checksummed manifests.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize, S: Serialize> {
    command: &'a str,
    software_version: &'a str,
    config_sha256: String,
    started_unix: u64,
    finished_unix: u64,
    seed: u64,
    threads: usize,
    tolerances: &'a T,
    summary: &'a S,
    files: Vec<FileEntry>,
}

pub struct OutDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl OutDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutDir { dir: dir.to_path_buf(), files: Vec::new(), started: now() })
    }

    /// Writes a file produced in memory and records its checksum.
    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        fs::write(self.dir.join(name), &buf)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.to_string(), bytes: buf.len(), sha256: hex_sha256(&buf) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.write_all(b"\n")
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish<T: Serialize, S: Serialize>(
        mut self,
        command: &str,
        config_text: &str,
        seed: u64,
        threads: usize,
        tolerances: &T,
        summary: &S,
    ) -> io::Result<()> {
        let files = std::mem::take(&mut self.files);
        let manifest = Manifest {
            command,
            software_version: env!("CARGO_PKG_VERSION"),
            config_sha256: hex_sha256(config_text.as_bytes()),
            started_unix: self.started,
            finished_unix: now(),
            seed,
            threads,
            tolerances,
            summary,
            files,
        };
        let mut buf = serde_json::to_vec_pretty(&manifest)?;
        buf.push(b'\n');
        fs::write(self.dir.join("manifest.json"), buf)
    }
}
