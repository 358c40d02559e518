//! Run manifests: ordered `key = value` records pinning a trace file to the
//! configuration, model and code version that produced it.

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};
use std::io::{self, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
    /// Directory of the manifest file; relative paths resolve against it.
    pub dir: PathBuf,
}

impl Manifest {
    pub fn set(&mut self, k: &str, v: impl ToString) {
        let v = v.to_string();
        match self.entries.iter_mut().find(|(key, _)| key == k) {
            Some(e) => e.1 = v,
            None => self.entries.push((k.to_string(), v)),
        }
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, k: &str) -> Result<&str> {
        self.get(k)
            .ok_or_else(|| anyhow!("manifest has no {k:?} entry"))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn path_of(&self, k: &str) -> Result<PathBuf> {
        Ok(self.dir.join(self.require(k)?))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# maskbnn run manifest\n");
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        m.dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(m)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            m.entries.push((k.to_string(), v.to_string()));
        }
        if m.get("format") != Some("1") {
            bail!("not a version 1 manifest");
        }
        Ok(m)
    }
}

/// The identity of a run: code version, resolved configuration and model.
pub fn run_hash(config: &str, model: &str) -> String {
    let mut h = Sha256::new();
    h.update(CODE_VERSION.as_bytes());
    h.update([0]);
    h.update(config.as_bytes());
    h.update([0]);
    h.update(model.as_bytes());
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn format_range(r: &Range<usize>) -> String {
    format!("{}..{}", r.start, r.end)
}

pub fn parse_range(s: &str) -> Result<Range<usize>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| anyhow!("expected a range START..END, got {s:?}"))?;
    let a: usize = a
        .trim()
        .parse()
        .map_err(|_| anyhow!("bad range start in {s:?}"))?;
    let b: usize = b
        .trim()
        .parse()
        .map_err(|_| anyhow!("bad range end in {s:?}"))?;
    if a >= b {
        bail!("empty range {s:?}");
    }
    Ok(a..b)
}

/// Pass-through writer that hashes everything written.
pub struct HashingWriter<W> {
    inner: W,
    hash: Sha256,
}

impl<W: Write> HashingWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner,
            hash: Sha256::new(),
        }
    }

    pub fn finish(mut self) -> io::Result<String> {
        self.inner.flush()?;
        Ok(hex::encode(self.hash.finalize()))
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hash.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Pass-through reader that hashes everything read.
pub struct HashingReader<R> {
    inner: R,
    hash: Sha256,
}

impl<R: Read> HashingReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            hash: Sha256::new(),
        }
    }

    pub fn finish(self) -> String {
        hex::encode(self.hash.finalize())
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hash.update(&buf[..n]);
        Ok(n)
    }
}
