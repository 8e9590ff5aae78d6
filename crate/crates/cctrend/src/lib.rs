//! Per-snapshot counts of Common Crawl index records matching a URL
//! pattern, for plotting how often a site gets crawled over time.

mod cache;
mod client;
mod error;
pub mod mock;
mod snapshot;
mod trend;

pub use client::{
    CdxClient, ClientConfig, CountMode, RetryPolicy, SnapshotCount, DEFAULT_INDEX_HOST,
    DEFAULT_LINES_PER_BLOCK,
};
pub use error::{CcError, Result};
pub use snapshot::{parse_collinfo, Snapshot, SnapshotId};
pub use trend::{render_trend_csv, trend, RowStatus, TrendRow, TREND_CSV_HEADER};
