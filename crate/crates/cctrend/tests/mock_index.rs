use std::time::Duration;

use cctrend::mock::{MockResponse, MockServer, MockSnapshot};
use cctrend::{
    render_trend_csv, trend, CcError, CdxClient, ClientConfig, CountMode, RetryPolicy, RowStatus,
    SnapshotId,
};

const PATTERN: &str = "civitai.com/*";

fn fast_config(server: &MockServer) -> ClientConfig {
    ClientConfig {
        index_host: server.url(),
        min_delay: Duration::ZERO,
        retry: RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(5),
            max_delay: Duration::from_millis(50),
            jitter: true,
        },
        timeout: Duration::from_secs(5),
        ..Default::default()
    }
}

fn sid(s: &str) -> SnapshotId {
    s.parse().unwrap()
}

fn three_snapshots() -> Vec<MockSnapshot> {
    vec![
        MockSnapshot::new("CC-MAIN-2024-10").with_records(PATTERN, 5, 3),
        MockSnapshot {
            from: Some("2022-01-16T00:00:00".into()),
            ..MockSnapshot::new("CC-MAIN-2022-05")
        },
        MockSnapshot::new("CC-MAIN-2025-38").with_records(PATTERN, 40, 7),
    ]
}

#[test]
fn lists_chronologically() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&three_snapshots());
    let client = CdxClient::new(fast_config(&server)).unwrap();
    let snaps = client.list_snapshots().unwrap();
    let ids: Vec<String> = snaps.iter().map(|s| s.id.to_string()).collect();
    assert_eq!(
        ids,
        ["CC-MAIN-2022-05", "CC-MAIN-2024-10", "CC-MAIN-2025-38"]
    );
    assert_eq!(snaps[0].crawl_date, "2022-01-16");
}

#[test]
fn empty_collection_list() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&[]);
    let client = CdxClient::new(fast_config(&server)).unwrap();
    assert!(client.list_snapshots().unwrap().is_empty());
}

#[test]
fn retry_after_503() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&three_snapshots());
    server.inject(
        "/collinfo.json",
        [MockResponse::status(503, "busy").with_header("Retry-After", "0")],
    );
    let client = CdxClient::new(fast_config(&server)).unwrap();
    assert_eq!(client.list_snapshots().unwrap().len(), 3);
    assert_eq!(client.retries(), 1);
    assert_eq!(server.requests(), 2);
}

#[test]
fn retries_are_bounded() {
    let server = MockServer::start().unwrap();
    server.route("/collinfo.json", [MockResponse::status(429, "slow down")]);
    let client = CdxClient::new(fast_config(&server)).unwrap();
    let err = client.list_snapshots().unwrap_err();
    assert!(matches!(err, CcError::Http { status: 429, .. }), "{err}");
    assert_eq!(server.requests(), 5);
}

#[test]
fn malformed_collinfo() {
    let server = MockServer::start().unwrap();
    server.route("/collinfo.json", [MockResponse::ok("<html>oops</html>")]);
    let client = CdxClient::new(fast_config(&server)).unwrap();
    assert!(matches!(client.list_snapshots(), Err(CcError::Parse(_))));
}

#[test]
fn exact_counts_lines_across_pages() {
    let server = MockServer::start().unwrap();
    let lines = |n: usize| {
        (0..n)
            .map(|i| format!(r#"{{"url": "x/{i}"}}"#))
            .collect::<Vec<_>>()
    };
    server.serve_cdx(&[
        MockSnapshot::new("CC-MAIN-2023-50").with_pages(PATTERN, vec![lines(3), lines(1)])
    ]);
    let client = CdxClient::new(fast_config(&server)).unwrap();
    let c = client
        .count_records(&sid("CC-MAIN-2023-50"), PATTERN, CountMode::Exact)
        .unwrap();
    assert_eq!((c.pages, c.records, c.estimate), (2, 4, false));
    assert_eq!(server.requests(), 3);

    let nothing = client
        .count_records(
            &sid("CC-MAIN-2023-50"),
            "nowhere.example/*",
            CountMode::Exact,
        )
        .unwrap();
    assert_eq!(nothing.records, 0);
}

#[test]
fn pages_mode_is_an_estimate() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&[MockSnapshot::new("CC-MAIN-2023-50").with_records(PATTERN, 10, 4)]);
    let client = CdxClient::new(fast_config(&server)).unwrap();
    let c = client
        .count_records(&sid("CC-MAIN-2023-50"), PATTERN, CountMode::Pages)
        .unwrap();
    assert!(c.estimate);
    assert_eq!(c.pages, 3);
    assert_eq!(c.records, 15 * cctrend::DEFAULT_LINES_PER_BLOCK);
    assert_eq!(server.requests(), 1);
}

#[test]
fn unknown_snapshot() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&three_snapshots());
    let client = CdxClient::new(fast_config(&server)).unwrap();
    let err = client
        .count_records(&sid("CC-MAIN-1999-01"), PATTERN, CountMode::Exact)
        .unwrap_err();
    assert!(matches!(err, CcError::NotFound(_)), "{err}");
}

#[test]
fn trend_rows_in_order_with_partial_failure() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&three_snapshots());
    let target = format!("/CC-MAIN-2024-10-index?url={PATTERN}&output=json&showNumPages=true");
    server.inject(
        &target,
        std::iter::repeat_n(MockResponse::status(500, "boom"), 5),
    );
    let client = CdxClient::new(fast_config(&server)).unwrap();
    let rows = trend(
        &client,
        PATTERN,
        &sid("CC-MAIN-2022-01"),
        &sid("CC-MAIN-2026-01"),
        CountMode::Exact,
    )
    .unwrap();
    let status: Vec<RowStatus> = rows.iter().map(|r| r.status).collect();
    assert_eq!(status, [RowStatus::Ok, RowStatus::Error, RowStatus::Ok]);
    let csv = render_trend_csv(&rows);
    assert_eq!(
        csv,
        "snapshot_id,crawl_date,records,mode,status\n\
         CC-MAIN-2022-05,2022-01-16,0,exact,ok\n\
         CC-MAIN-2024-10,2024-W10,,exact,error\n\
         CC-MAIN-2025-38,2025-W38,40,exact,ok\n"
    );
}

#[test]
fn trend_range_checks() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&three_snapshots());
    let client = CdxClient::new(fast_config(&server)).unwrap();
    let one = trend(
        &client,
        PATTERN,
        &sid("CC-MAIN-2025-38"),
        &sid("CC-MAIN-2025-38"),
        CountMode::Exact,
    )
    .unwrap();
    assert_eq!(one.len(), 1);
    assert!(matches!(
        trend(
            &client,
            PATTERN,
            &sid("CC-MAIN-2025-01"),
            &sid("CC-MAIN-2025-02"),
            CountMode::Exact
        ),
        Err(CcError::Input(_))
    ));
    assert!(matches!(
        trend(
            &client,
            PATTERN,
            &sid("CC-MAIN-2025-38"),
            &sid("CC-MAIN-2022-05"),
            CountMode::Exact
        ),
        Err(CcError::Input(_))
    ));
}

#[test]
fn warm_cache_makes_no_requests() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&three_snapshots());
    let dir = tempfile::tempdir().unwrap();
    let cfg = ClientConfig {
        cache_dir: Some(dir.path().to_path_buf()),
        ..fast_config(&server)
    };
    let range = (sid("CC-MAIN-2022-05"), sid("CC-MAIN-2025-38"));

    let cold = CdxClient::new(cfg.clone()).unwrap();
    let first =
        render_trend_csv(&trend(&cold, PATTERN, &range.0, &range.1, CountMode::Exact).unwrap());
    let cold_requests = server.requests();
    assert!(cold_requests > 0);

    let warm = CdxClient::new(cfg).unwrap();
    let second =
        render_trend_csv(&trend(&warm, PATTERN, &range.0, &range.1, CountMode::Exact).unwrap());
    assert_eq!(server.requests(), cold_requests);
    assert_eq!(warm.requests_sent(), 0);
    assert_eq!(first, second);
}

#[test]
fn requests_are_spaced() {
    let server = MockServer::start().unwrap();
    server.serve_cdx(&[MockSnapshot::new("CC-MAIN-2023-50").with_records(PATTERN, 9, 2)]);
    let cfg = ClientConfig {
        min_delay: Duration::from_millis(30),
        ..fast_config(&server)
    };
    let client = CdxClient::new(cfg).unwrap();
    client
        .count_records(&sid("CC-MAIN-2023-50"), PATTERN, CountMode::Exact)
        .unwrap();
    let log = server.request_log();
    assert_eq!(log.len(), 6);
    for w in log.windows(2) {
        assert!(w[1].1.duration_since(w[0].1) >= Duration::from_millis(25));
    }
}

#[test]
fn concurrent_trend_matches_sequential() {
    let server = MockServer::start().unwrap();
    let snaps: Vec<MockSnapshot> = (1..=9)
        .map(|w| MockSnapshot::new(&format!("CC-MAIN-2023-{w:02}")).with_records(PATTERN, w * 3, 4))
        .collect();
    server.serve_cdx(&snaps);
    let range = (sid("CC-MAIN-2023-01"), sid("CC-MAIN-2023-09"));
    let seq = CdxClient::new(fast_config(&server)).unwrap();
    let par = CdxClient::new(ClientConfig {
        concurrency: 4,
        ..fast_config(&server)
    })
    .unwrap();
    let a = render_trend_csv(&trend(&seq, PATTERN, &range.0, &range.1, CountMode::Exact).unwrap());
    let b = render_trend_csv(&trend(&par, PATTERN, &range.0, &range.1, CountMode::Exact).unwrap());
    assert_eq!(a, b);
    assert!(a.contains("CC-MAIN-2023-09,2023-W09,27,exact,ok"));
}
