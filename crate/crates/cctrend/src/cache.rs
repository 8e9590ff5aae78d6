use std::fs;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CcError, Result};

/// Response cache: one file per key, named by the key's SHA-256.
///
/// Unreadable or corrupt entries count as misses. Writes go through a
/// temporary file and a rename so an interrupted run never leaves a
/// half-written entry behind.
pub(crate) struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub(crate) fn new(dir: PathBuf) -> Self {
        Self { dir }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!(
            "{}.json",
            hex::encode(Sha256::digest(key.as_bytes()))
        ))
    }

    pub(crate) fn get_raw(&self, key: &str) -> Option<String> {
        fs::read_to_string(self.path(key)).ok()
    }

    pub(crate) fn get_json<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        serde_json::from_str(&self.get_raw(key)?).ok()
    }

    pub(crate) fn put_raw(&self, key: &str, body: &str) -> Result<()> {
        let err = |path: PathBuf| move |source| CcError::Cache { path, source };
        fs::create_dir_all(&self.dir).map_err(err(self.dir.clone()))?;
        let path = self.path(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, body).map_err(err(tmp.clone()))?;
        fs::rename(&tmp, &path).map_err(err(path))
    }

    pub(crate) fn put_json<T: Serialize>(&self, key: &str, value: &T) -> Result<()> {
        self.put_raw(
            key,
            &serde_json::to_string(value).expect("cache entry serializes"),
        )
    }
}
