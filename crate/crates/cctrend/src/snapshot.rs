use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CcError, Result};

/// A crawl id of the form `CC-MAIN-YYYY-WW`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SnapshotId {
    year: u16,
    week: u8,
}

impl SnapshotId {
    pub fn new(year: u16, week: u8) -> Self {
        Self { year, week }
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn week(&self) -> u8 {
        self.week
    }
}

impl FromStr for SnapshotId {
    type Err = CcError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CcError::Input(format!("`{s}` is not a snapshot id like CC-MAIN-2025-38"));
        let rest = s.strip_prefix("CC-MAIN-").ok_or_else(bad)?;
        let (y, w) = rest.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || w.len() != 2 || !y.bytes().chain(w.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        Ok(Self {
            year: y.parse().map_err(|_| bad())?,
            week: w.parse().map_err(|_| bad())?,
        })
    }
}

impl TryFrom<String> for SnapshotId {
    type Error = CcError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SnapshotId> for String {
    fn from(id: SnapshotId) -> Self {
        id.to_string()
    }
}

impl fmt::Display for SnapshotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CC-MAIN-{:04}-{:02}", self.year, self.week)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: SnapshotId,
    pub name: String,
    /// `YYYY-MM-DD` of the crawl start when the index lists it, otherwise
    /// the ISO week `YYYY-Www` implied by the id.
    pub crawl_date: String,
}

#[derive(Deserialize)]
struct CollInfo {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    from: Option<String>,
}

/// Parses a `collinfo.json` body into snapshots, oldest first. Entries
/// whose id is not of the weekly form (the pre-2013 archives) are skipped.
pub fn parse_collinfo(body: &str) -> Result<Vec<Snapshot>> {
    let entries: Vec<CollInfo> =
        serde_json::from_str(body).map_err(|e| CcError::Parse(format!("collinfo: {e}")))?;
    let mut out: Vec<Snapshot> = entries
        .into_iter()
        .filter_map(|e| {
            let id: SnapshotId = e.id.parse().ok()?;
            let crawl_date = match e.from.as_deref() {
                Some(f) if f.len() >= 10 => f[..10].to_string(),
                _ => format!("{:04}-W{:02}", id.year, id.week),
            };
            Some(Snapshot {
                id,
                name: e.name,
                crawl_date,
            })
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out.dedup_by(|a, b| a.id == b.id);
    Ok(out)
}
