use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::client::{CdxClient, CountMode, SnapshotCount};
use crate::error::{CcError, Result};
use crate::snapshot::{Snapshot, SnapshotId};

pub const TREND_CSV_HEADER: [&str; 5] = ["snapshot_id", "crawl_date", "records", "mode", "status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Counted from block totals rather than result lines.
    Estimate,
    NotFound,
    Error,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Estimate => "estimate",
            RowStatus::NotFound => "not_found",
            RowStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub snapshot: Snapshot,
    pub mode: CountMode,
    pub status: RowStatus,
    pub count: Option<SnapshotCount>,
    pub error: Option<String>,
}

/// Counts `pattern` in every listed snapshot from `from` to `to`
/// inclusive, oldest first. A failing snapshot becomes an error row and
/// the run carries on.
pub fn trend(
    client: &CdxClient,
    pattern: &str,
    from: &SnapshotId,
    to: &SnapshotId,
    mode: CountMode,
) -> Result<Vec<TrendRow>> {
    if from > to {
        return Err(CcError::Input(format!(
            "range start {from} is after its end {to}"
        )));
    }
    if pattern.trim().is_empty() {
        return Err(CcError::Input("URL pattern must not be empty".into()));
    }
    let snaps: Vec<Snapshot> = client
        .list_snapshots()?
        .into_iter()
        .filter(|s| &s.id >= from && &s.id <= to)
        .collect();
    if snaps.is_empty() {
        return Err(CcError::Input(format!(
            "no snapshots between {from} and {to}"
        )));
    }

    let slots: Mutex<Vec<Option<TrendRow>>> = Mutex::new(vec![None; snaps.len()]);
    let next = AtomicUsize::new(0);
    let workers = client.config().concurrency.min(snaps.len());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(snap) = snaps.get(i) else { break };
                let row = match client.count_records(&snap.id, pattern, mode) {
                    Ok(c) => TrendRow {
                        snapshot: snap.clone(),
                        mode,
                        status: if c.estimate {
                            RowStatus::Estimate
                        } else {
                            RowStatus::Ok
                        },
                        count: Some(c),
                        error: None,
                    },
                    Err(e) => TrendRow {
                        snapshot: snap.clone(),
                        mode,
                        status: if matches!(e, CcError::NotFound(_)) {
                            RowStatus::NotFound
                        } else {
                            RowStatus::Error
                        },
                        count: None,
                        error: Some(e.to_string()),
                    },
                };
                slots.lock().expect("slot lock")[i] = Some(row);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every snapshot visited"))
        .collect())
}

/// `snapshot_id,crawl_date,records,mode,status`; failed rows leave
/// `records` empty.
pub fn render_trend_csv(rows: &[TrendRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(TREND_CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.snapshot.id.to_string(),
            r.snapshot.crawl_date.clone(),
            r.count
                .as_ref()
                .map_or_else(String::new, |c| c.records.to_string()),
            r.mode.to_string(),
            r.status.as_str().to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 cells")
}
