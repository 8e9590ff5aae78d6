use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::cache::Cache;
use crate::error::{CcError, Result};
use crate::snapshot::{parse_collinfo, Snapshot, SnapshotId};

pub const DEFAULT_INDEX_HOST: &str = "https://index.commoncrawl.org";
/// CDX lines per compressed index block, used to turn block counts into a
/// record estimate.
pub const DEFAULT_LINES_PER_BLOCK: u64 = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// One page-count query; records are an upper-bound estimate.
    Pages,
    /// Every result page is fetched and its lines counted.
    #[default]
    Exact,
}

impl std::fmt::Display for CountMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CountMode::Pages => "pages",
            CountMode::Exact => "exact",
        })
    }
}

impl std::str::FromStr for CountMode {
    type Err = CcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pages" => Ok(Self::Pages),
            "exact" => Ok(Self::Exact),
            _ => Err(CcError::Input(format!(
                "unknown count mode `{s}` (pages|exact)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    /// Caps both backoff and server-supplied Retry-After waits.
    pub max_delay: Duration,
    /// Adds up to 50% random extra wait to each backoff.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(60),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32, rng: &Mutex<ChaCha8Rng>) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        let mut d = exp.min(self.max_delay);
        if self.jitter {
            let frac: f64 = rng.lock().expect("rng lock").random_range(0.0..0.5);
            d = d.mul_f64(1.0 + frac).min(self.max_delay);
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub index_host: String,
    /// Minimum spacing between the starts of two requests.
    pub min_delay: Duration,
    /// Snapshots fetched at once by [`crate::trend`].
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
    pub lines_per_block: u64,
    pub user_agent: String,
    /// Seeds backoff jitter.
    pub seed: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            index_host: DEFAULT_INDEX_HOST.into(),
            min_delay: Duration::from_secs(1),
            concurrency: 1,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
            cache_dir: None,
            lines_per_block: DEFAULT_LINES_PER_BLOCK,
            user_agent: concat!("probeforge-cctrend/", env!("CARGO_PKG_VERSION")).into(),
            seed: 0,
        }
    }
}

/// Count of index records matching a URL pattern in one snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotCount {
    pub snapshot_id: SnapshotId,
    pub domain_pattern: String,
    pub mode: CountMode,
    /// Result pages reported by the index.
    pub pages: u64,
    pub records: u64,
    /// True when `records` is derived from block counts, not counted.
    pub estimate: bool,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
    /// Retries spent on this count.
    pub retries: u32,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct NumPages {
    pages: u64,
    #[serde(default)]
    page_size: Option<u64>,
    #[serde(default)]
    blocks: Option<u64>,
}

struct Fetched {
    status: u16,
    body: String,
    retries: u32,
}

/// Blocking CDX index client with retries, request spacing and an
/// optional on-disk cache.
pub struct CdxClient {
    cfg: ClientConfig,
    agent: ureq::Agent,
    cache: Option<Cache>,
    last_start: Mutex<Option<Instant>>,
    rng: Mutex<ChaCha8Rng>,
    requests: AtomicU64,
    retries: AtomicU64,
}

impl CdxClient {
    pub fn new(cfg: ClientConfig) -> Result<Self> {
        Url::parse(&cfg.index_host)
            .map_err(|e| CcError::Input(format!("index host `{}`: {e}", cfg.index_host)))?;
        if cfg.retry.max_attempts == 0 {
            return Err(CcError::Input(
                "retry.max_attempts must be at least 1".into(),
            ));
        }
        if cfg.concurrency == 0 {
            return Err(CcError::Input("concurrency must be at least 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .user_agent(cfg.user_agent.as_str())
            .build()
            .into();
        let cache = cfg.cache_dir.clone().map(Cache::new);
        Ok(Self {
            agent,
            cache,
            last_start: Mutex::new(None),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(cfg.seed)),
            requests: AtomicU64::new(0),
            retries: AtomicU64::new(0),
            cfg,
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::SeqCst)
    }

    fn host(&self) -> &str {
        self.cfg.index_host.trim_end_matches('/')
    }

    /// Blocks until `min_delay` has passed since the previous request start.
    fn wait_turn(&self) {
        let mut last = self.last_start.lock().expect("gate lock");
        if let Some(prev) = *last {
            let ready = prev + self.cfg.min_delay;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }

    /// GET with retries on transport errors, 5xx and 429.
    fn get(&self, url: &str) -> Result<Fetched> {
        let policy = &self.cfg.retry;
        let mut retries = 0;
        loop {
            self.wait_turn();
            self.requests.fetch_add(1, Ordering::SeqCst);
            let outcome = self.agent.get(url).call();
            let last_attempt = retries + 1 >= policy.max_attempts;
            let wait = match outcome {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let retry_after = resp
                        .headers()
                        .get("retry-after")
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(Duration::from_secs);
                    let body = resp
                        .body_mut()
                        .with_config()
                        .limit(256 * 1024 * 1024)
                        .read_to_string();
                    let retryable = status == 429 || status >= 500;
                    match body {
                        Ok(body) if !retryable => {
                            return Ok(Fetched {
                                status,
                                body,
                                retries,
                            })
                        }
                        Ok(_) if last_attempt => {
                            return Err(CcError::Http {
                                url: url.to_string(),
                                status,
                            });
                        }
                        Ok(_) => match retry_after {
                            Some(d) if status == 429 || status == 503 => d.min(policy.max_delay),
                            _ => policy.backoff(retries, &self.rng),
                        },
                        Err(e) if last_attempt => {
                            return Err(self.transport(url, retries + 1, e));
                        }
                        Err(_) => policy.backoff(retries, &self.rng),
                    }
                }
                Err(e) if last_attempt => return Err(self.transport(url, retries + 1, e)),
                Err(_) => policy.backoff(retries, &self.rng),
            };
            retries += 1;
            self.retries.fetch_add(1, Ordering::SeqCst);
            thread::sleep(wait);
        }
    }

    fn transport(&self, url: &str, attempts: u32, e: ureq::Error) -> CcError {
        CcError::Transport {
            url: url.to_string(),
            attempts,
            message: e.to_string(),
        }
    }

    /// Collections known to the index, oldest first.
    pub fn list_snapshots(&self) -> Result<Vec<Snapshot>> {
        let url = format!("{}/collinfo.json", self.host());
        let key = format!("collinfo\0{}", self.host());
        if let Some(body) = self.cache.as_ref().and_then(|c| c.get_raw(&key)) {
            return parse_collinfo(&body);
        }
        let fetched = self.get(&url)?;
        if fetched.status != 200 {
            return Err(CcError::Http {
                url,
                status: fetched.status,
            });
        }
        let snaps = parse_collinfo(&fetched.body)?;
        if let Some(c) = &self.cache {
            c.put_raw(&key, &fetched.body)?;
        }
        Ok(snaps)
    }

    fn index_url(&self, snapshot: &SnapshotId, pattern: &str, extra: &[(&str, &str)]) -> String {
        let mut url =
            Url::parse(&format!("{}/{snapshot}-index", self.host())).expect("validated host");
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("url", pattern).append_pair("output", "json");
            for (k, v) in extra {
                q.append_pair(k, v);
            }
        }
        url.into()
    }

    /// Interprets a non-200 CDX status: the index answers 404 both for an
    /// empty result (body mentions "No Captures found") and for an unknown
    /// collection.
    fn empty_or_error(&self, url: String, snapshot: &SnapshotId, f: &Fetched) -> Result<()> {
        match f.status {
            404 if f.body.contains("No Captures found") => Ok(()),
            404 => Err(CcError::NotFound(format!(
                "snapshot {snapshot} at {}",
                self.host()
            ))),
            status => Err(CcError::Http { url, status }),
        }
    }

    /// Counts index records for `pattern` in one snapshot.
    pub fn count_records(
        &self,
        snapshot: &SnapshotId,
        pattern: &str,
        mode: CountMode,
    ) -> Result<SnapshotCount> {
        if pattern.trim().is_empty() {
            return Err(CcError::Input("URL pattern must not be empty".into()));
        }
        let key = format!("count\0{}\0{snapshot}\0{pattern}\0{mode}", self.host());
        if let Some(hit) = self
            .cache
            .as_ref()
            .and_then(|c| c.get_json::<SnapshotCount>(&key))
        {
            return Ok(hit);
        }

        let url = self.index_url(snapshot, pattern, &[("showNumPages", "true")]);
        let f = self.get(&url)?;
        let mut retries = f.retries;
        let info = if f.status == 200 {
            parse_num_pages(&f.body)?
        } else {
            self.empty_or_error(url, snapshot, &f)?;
            NumPages {
                pages: 0,
                page_size: None,
                blocks: Some(0),
            }
        };

        let (records, estimate) = match mode {
            CountMode::Pages => {
                let blocks = info
                    .blocks
                    .unwrap_or(info.pages * info.page_size.unwrap_or(1));
                (blocks * self.cfg.lines_per_block, true)
            }
            CountMode::Exact => {
                let mut total = 0u64;
                for page in 0..info.pages {
                    let page_s = page.to_string();
                    let url = self.index_url(snapshot, pattern, &[("page", &page_s)]);
                    let f = self.get(&url)?;
                    retries += f.retries;
                    if f.status == 200 {
                        total += f.body.lines().filter(|l| !l.trim().is_empty()).count() as u64;
                    } else {
                        self.empty_or_error(url, snapshot, &f)?;
                    }
                }
                (total, false)
            }
        };

        let count = SnapshotCount {
            snapshot_id: snapshot.clone(),
            domain_pattern: pattern.to_string(),
            mode,
            pages: info.pages,
            records,
            estimate,
            fetched_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            retries,
        };
        if let Some(c) = &self.cache {
            c.put_json(&key, &count)?;
        }
        Ok(count)
    }
}

fn parse_num_pages(body: &str) -> Result<NumPages> {
    let t = body.trim();
    if let Ok(pages) = t.parse::<u64>() {
        return Ok(NumPages {
            pages,
            page_size: None,
            blocks: None,
        });
    }
    serde_json::from_str(t).map_err(|e| CcError::Parse(format!("page count `{t}`: {e}")))
}
