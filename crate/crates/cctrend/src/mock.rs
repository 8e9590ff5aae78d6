//! A scripted local HTTP server that imitates a CDX index, for tests.
//!
//! Routes are matched on path plus decoded, order-independent query
//! pairs. Each route replays a queue of responses; the last one repeats.

use std::collections::{HashMap, VecDeque};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use url::Url;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl MockResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self::status(200, body)
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

/// One collection served by [`MockServer::serve_cdx`].
#[derive(Debug, Clone)]
pub struct MockSnapshot {
    pub id: String,
    pub from: Option<String>,
    /// URL pattern and its result pages, each a list of JSON lines.
    pub results: Vec<(String, Vec<Vec<String>>)>,
}

impl MockSnapshot {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.into(),
            from: None,
            results: Vec::new(),
        }
    }

    pub fn with_pages(mut self, pattern: &str, pages: Vec<Vec<String>>) -> Self {
        self.results.push((pattern.into(), pages));
        self
    }

    /// `n` synthetic CDX lines split into pages of at most `per_page`.
    pub fn with_records(self, pattern: &str, n: usize, per_page: usize) -> Self {
        let lines: Vec<String> = (0..n)
            .map(|i| format!(r#"{{"urlkey": "com,example)/{i}", "timestamp": "20250101000000", "url": "https://{pattern}/{i}"}}"#))
            .collect();
        let pages = lines
            .chunks(per_page.max(1))
            .map(<[String]>::to_vec)
            .collect();
        self.with_pages(pattern, pages)
    }
}

#[derive(Default)]
struct State {
    routes: HashMap<String, VecDeque<MockResponse>>,
    fallbacks: HashMap<String, MockResponse>,
    log: Vec<(String, Instant)>,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

/// `path?k=v&...` with decoded pairs sorted, so encodings and pair order
/// do not matter.
pub fn route_key(target: &str) -> String {
    let url = Url::parse(&format!("http://mock{target}")).expect("request target");
    let mut pairs: Vec<(String, String)> = url
        .query_pairs()
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    pairs.sort();
    let query: Vec<String> = pairs.into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    if query.is_empty() {
        url.path().to_string()
    } else {
        format!("{}?{}", url.path(), query.join("&"))
    }
}

impl MockServer {
    pub fn start() -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let state = Arc::new(Mutex::new(State::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (state, stop) = (state.clone(), stop.clone());
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = conn {
                        let _ = serve(stream, &state);
                    }
                }
            })
        };
        Ok(Self {
            addr,
            state,
            stop,
            handle: Some(handle),
        })
    }

    /// Base URL, e.g. `http://127.0.0.1:40123`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Appends responses to the queue for `target` (`/path?query`).
    pub fn route(&self, target: &str, responses: impl IntoIterator<Item = MockResponse>) {
        let mut st = self.state.lock().expect("mock state");
        st.routes
            .entry(route_key(target))
            .or_default()
            .extend(responses);
    }

    /// Puts faults in front of whatever `target` would otherwise answer.
    pub fn inject(&self, target: &str, faults: impl IntoIterator<Item = MockResponse>) {
        let mut st = self.state.lock().expect("mock state");
        let q = st.routes.entry(route_key(target)).or_default();
        for f in faults.into_iter().collect::<Vec<_>>().into_iter().rev() {
            q.push_front(f);
        }
    }

    /// Answer for any query on `path` that has no exact route.
    pub fn fallback(&self, path: &str, response: MockResponse) {
        self.state
            .lock()
            .expect("mock state")
            .fallbacks
            .insert(path.into(), response);
    }

    /// Registers collinfo, page-count and page routes for the snapshots.
    /// Patterns not listed get the index's empty-result 404.
    pub fn serve_cdx(&self, snapshots: &[MockSnapshot]) {
        let info: Vec<serde_json::Value> = snapshots
            .iter()
            .map(|s| {
                let mut v = serde_json::json!({
                    "id": s.id,
                    "name": format!("{} Index", s.id),
                    "cdx-api": format!("{}/{}-index", self.url(), s.id),
                });
                if let Some(from) = &s.from {
                    v["from"] = from.clone().into();
                }
                v
            })
            .collect();
        self.route(
            "/collinfo.json",
            [MockResponse::ok(
                serde_json::to_string(&info).expect("json"),
            )],
        );
        for s in snapshots {
            let path = format!("/{}-index", s.id);
            self.fallback(
                &path,
                MockResponse::status(
                    404,
                    r#"{"message": "No Captures found for the given query"}"#,
                ),
            );
            for (pattern, pages) in &s.results {
                let base = format!("{path}?url={}&output=json", encode(pattern));
                let blocks = pages.len() as u64 * 5;
                self.route(
                    &format!("{base}&showNumPages=true"),
                    [MockResponse::ok(format!(
                        r#"{{"pages": {}, "pageSize": 5, "blocks": {blocks}}}"#,
                        pages.len()
                    ))],
                );
                for (i, lines) in pages.iter().enumerate() {
                    let mut body = lines.join("\n");
                    body.push('\n');
                    self.route(&format!("{base}&page={i}"), [MockResponse::ok(body)]);
                }
            }
        }
    }

    /// Requests received so far.
    pub fn requests(&self) -> usize {
        self.state.lock().expect("mock state").log.len()
    }

    /// Normalized targets and arrival times of all requests.
    pub fn request_log(&self) -> Vec<(String, Instant)> {
        self.state.lock().expect("mock state").log.clone()
    }
}

fn encode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, state: &Mutex<State>) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("/");
    let key = route_key(target);
    let resp = {
        let mut st = state.lock().expect("mock state");
        st.log.push((key.clone(), Instant::now()));
        let path = key.split('?').next().unwrap_or("").to_string();
        match st.routes.get_mut(&key) {
            Some(q) if q.len() > 1 => q.pop_front(),
            Some(q) => q.front().cloned(),
            None => None,
        }
        .or_else(|| st.fallbacks.get(&path).cloned())
        .unwrap_or_else(|| MockResponse::status(404, "Not Found"))
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {} {}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n",
        resp.status,
        reason(resp.status),
        resp.body.len()
    )?;
    for (k, v) in &resp.headers {
        write!(out, "{k}: {v}\r\n")?;
    }
    write!(out, "\r\n{}", resp.body)?;
    out.flush()
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}
