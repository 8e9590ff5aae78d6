//! Flag / config-file merging and run manifests.

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Bad invocation: missing options, conflicting flags, unusable config.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Unwraps a required option after merging.
pub fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing required option --{flag}")))
}

/// Loads the `config` block of a run manifest (or a bare JSON object) for
/// `command`.
pub fn load_config(path: &Path, command: &str) -> Result<Value> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if let Some(cmd) = value.get("command").and_then(Value::as_str) {
        if cmd != command {
            return Err(usage(format!(
                "config {} was written by `{cmd}`, not `{command}`",
                path.display()
            )));
        }
        return Ok(value
            .get("config")
            .cloned()
            .unwrap_or_else(|| Value::Object(Map::new())));
    }
    if value.is_object() {
        Ok(value)
    } else {
        Err(usage(format!(
            "config {} must be a JSON object",
            path.display()
        )))
    }
}

/// Flags over config file over defaults. Flags that were not given
/// (null, or an empty list) leave the file's value in place.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<Value>) -> Result<T> {
    let mut base = match file {
        Some(Value::Object(m)) => m,
        _ => Map::new(),
    };
    let given = serde_json::to_value(flags).expect("flags serialize");
    for (k, v) in given.as_object().into_iter().flatten() {
        let unset =
            v.is_null() || v.as_array().is_some_and(Vec::is_empty) || v == &Value::Bool(false);
        if !unset || !base.contains_key(k) {
            base.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| usage(format!("config: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f
            .read(&mut buf)
            .with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(h.finalize()),
    })
}

/// Digest over every file below `dir`: relative paths and contents, in
/// sorted path order.
pub fn digest_tree(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(digest_file(&f)?.sha256.as_bytes());
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Machine-readable record of one invocation. Its `config` block is the
/// fully resolved option set, so `--config <this file>` replays the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Self {
            tool: "probeforge".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(digest_file(path)?);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        self.outputs.push(digest_file(path)?);
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `<out>.run.json` next to a file output.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".run.json");
    PathBuf::from(s)
}
