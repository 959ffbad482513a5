//! `manifest.txt`: the exact invocation plus content hashes of everything
//! read and written, enough to rerun a command and check the result.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Every regular file under `path` (or `path` itself), sorted.
fn files_under(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Default)]
pub struct Manifest {
    command: String,
    argv: Vec<String>,
    settings: Vec<(String, String)>,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            ..Self::default()
        }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.settings.push((key.to_string(), value.to_string()));
        self
    }

    /// Hashes a file, or every file below a directory.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        for f in files_under(path)? {
            let digest = sha256_file(&f)?;
            self.inputs.push((f, digest));
        }
        Ok(self)
    }

    /// Hashes `out/name`, which must already be written.
    pub fn output(&mut self, out: &Path, name: &str) -> Result<&mut Self> {
        let digest = sha256_file(&out.join(name))?;
        self.outputs.push((name.to_string(), digest));
        Ok(self)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command   {}", self.command);
        let _ = writeln!(s, "version   {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(
            s,
            "argv      {}",
            serde_json::to_string(&self.argv).expect("strings serialize")
        );
        for (k, v) in &self.settings {
            let _ = writeln!(s, "setting   {k} = {v}");
        }
        for (p, d) in &self.inputs {
            let _ = writeln!(s, "input     sha256:{d}  {}", p.display());
        }
        for (n, d) in &self.outputs {
            let _ = writeln!(s, "output    sha256:{d}  {n}");
        }
        s
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::write(out.join(MANIFEST_FILE), self.render())
            .with_context(|| format!("writing manifest in {}", out.display()))
    }
}
