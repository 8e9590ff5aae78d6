//! Dataset manifests: CSV inventories of benchmark images.
//!
//! Header is fixed: `id,relative_path,label,generator,split`. Labels are
//! `real`/`fake` (or `0`/`1`), splits are `train`/`test`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["id", "relative_path", "label", "generator", "split"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Archive encoding: real = 0, fake = 1.
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "real" | "0" => Ok(Label::Real),
            "fake" | "1" => Ok(Label::Fake),
            other => Err(format!("label `{other}` is not one of real, fake")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("split `{other}` is not one of train, test")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub relative_path: String,
    pub label: Label,
    pub generator: String,
    pub split: Split,
}

impl ManifestEntry {
    pub fn new(
        id: impl Into<String>,
        relative_path: impl Into<String>,
        label: Label,
        generator: impl Into<String>,
        split: Split,
    ) -> Result<Self> {
        let entry = Self {
            id: id.into(),
            relative_path: relative_path.into(),
            label,
            generator: generator.into(),
            split,
        };
        check_relative_path(&entry.id, &entry.relative_path)?;
        Ok(entry)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting duplicate ids.
    pub fn new(
        name: impl Into<String>,
        root: impl Into<PathBuf>,
        entries: Vec<ManifestEntry>,
    ) -> Result<Self> {
        let duplicates = duplicate_ids(&entries);
        if !duplicates.is_empty() {
            return Err(Error::Integrity(format!(
                "duplicate manifest ids: {}",
                duplicates.join(", ")
            )));
        }
        Ok(Self {
            name: name.into(),
            root: root.into(),
            entries,
        })
    }

    /// Parses manifest CSV. The root defaults to the file's directory when
    /// read through [`DatasetManifest::read`].
    pub fn parse<R: Read>(reader: R, name: &str, root: impl Into<PathBuf>) -> Result<Self> {
        Self::new(name, root, parse_entries(reader)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(file, &name, root)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        out.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for e in &self.entries {
            out.write_record([
                e.id.as_str(),
                e.relative_path.as_str(),
                &e.label.to_string(),
                e.generator.as_str(),
                &e.split.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_to(file)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> + '_ {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub real: usize,
    pub fake: usize,
}

impl LabelCounts {
    fn add(&mut self, label: Label) {
        match label {
            Label::Real => self.real += 1,
            Label::Fake => self.fake += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub manifest: String,
    pub entries: usize,
    pub valid: bool,
    pub missing: Vec<String>,
    pub totals: LabelCounts,
    pub per_generator: BTreeMap<String, LabelCounts>,
}

/// Checks a manifest against the files under `root`. Any missing file
/// makes the report invalid; traversal and duplicate ids are hard errors.
pub fn validate_manifest(manifest: &DatasetManifest, root: &Path) -> ValidationReport {
    let mut totals = LabelCounts::default();
    let mut per_generator: BTreeMap<String, LabelCounts> = BTreeMap::new();
    let mut missing = Vec::new();
    for e in &manifest.entries {
        totals.add(e.label);
        per_generator
            .entry(e.generator.clone())
            .or_default()
            .add(e.label);
        if !root.join(&e.relative_path).is_file() {
            missing.push(e.id.clone());
        }
    }
    ValidationReport {
        manifest: manifest.name.clone(),
        entries: manifest.entries.len(),
        valid: missing.is_empty(),
        missing,
        totals,
        per_generator,
    }
}

/// Reads a manifest file and validates it against `root` (or the file's
/// own directory).
pub fn validate_manifest_file(path: &Path, root: Option<&Path>) -> Result<ValidationReport> {
    let manifest = DatasetManifest::read(path)?;
    let root = root
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.root.clone());
    Ok(validate_manifest(&manifest, &root))
}

fn parse_entries<R: Read>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty manifest".into(),
            })
        }
        Some(r) => r.map_err(|e| csv_parse_error(&e))?,
    };
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be `{}`", MANIFEST_HEADER.join(",")),
        });
    }
    let mut entries = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_parse_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != MANIFEST_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let field = |i: usize| record[i].trim();
        let label = field(2)
            .parse()
            .map_err(|message| Error::Parse { line, message })?;
        let split = field(4)
            .parse()
            .map_err(|message| Error::Parse { line, message })?;
        if field(0).is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty id".into(),
            });
        }
        entries.push(ManifestEntry::new(
            field(0),
            field(1),
            label,
            field(3),
            split,
        )?);
    }
    Ok(entries)
}

fn csv_parse_error(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

fn check_relative_path(id: &str, path: &str) -> Result<()> {
    let traversal = || Error::Traversal {
        id: id.to_string(),
        path: path.to_string(),
    };
    if path.is_empty() {
        return Err(traversal());
    }
    for c in Path::new(path).components() {
        match c {
            Component::Normal(_) | Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => {
                return Err(traversal())
            }
        }
    }
    Ok(())
}

fn duplicate_ids(entries: &[ManifestEntry]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = entries
        .iter()
        .filter(|e| !seen.insert(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    dups.sort();
    dups.dedup();
    dups
}
