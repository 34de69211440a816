use std::path::Path;
use std::process::{Command, Output};

use echoseg_client::Client;
use echoseg_core::api::SynthRequest;
use echoseg_core::synth::SynthConfig;

fn echoseg(args: &[&str], server: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_echoseg"));
    cmd.args(args).env_remove("ECHOSEG_SERVER").env_remove("ECHOSEG_MODEL");
    if let Some(s) = server {
        cmd.env("ECHOSEG_SERVER", s);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Starts the service on an ephemeral port and returns its base URL.
fn start_server() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            echoseg_service::serve(listener, None).await.unwrap();
        });
    });
    format!("http://{addr}")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage() {
    let out = echoseg(&[], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_bad_values_are_usage_errors() {
    assert_eq!(echoseg(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(echoseg(&["baseline", "x.csv", "--method", "magic"], None).status.code(), Some(2));
    assert_eq!(echoseg(&["infer", "x.csv"], None).status.code(), Some(2));
}

#[test]
fn missing_input_is_an_io_error() {
    let out = echoseg(&["baseline", "/nonexistent/file.raw.csv"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/file.raw.csv"));
}

#[test]
fn local_synth_baseline_evaluate_plot() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let preds = dir.path().join("preds");
    ok(&echoseg(&["synth", "--out", s(&corpus), "--count", "2", "--mixed", "--n-pings", "80"], None));
    for stem in ["synth_00000", "synth_00001"] {
        let orientation = if stem.ends_with('0') { "downfacing" } else { "upfacing" };
        let raw = corpus.join(format!("{stem}.raw.csv"));
        let printed = ok(&echoseg(&["baseline", s(&raw), "--orientation", orientation, "--out-dir", s(&preds)], None));
        assert!(printed.contains(".air.evl"));
    }
    let report: serde_json::Value =
        serde_json::from_str(&ok(&echoseg(&["evaluate", "--corpus", s(&corpus), "--predictions", s(&preds)], None))).unwrap();
    assert_eq!(report["n_files"], 2);

    let png = dir.path().join("cdf.png");
    let pred_arg = format!("baseline={}", s(&preds));
    ok(&echoseg(&["plot", "cdf", "--corpus", s(&corpus), "--predictions", &pred_arg, "--out", s(&png)], None));
    assert!(png.exists());
    let png = dir.path().join("overlay.png");
    let raw = corpus.join("synth_00000.raw.csv");
    ok(&echoseg(
        &["plot", "overlay", s(&raw), "--predictions", s(&preds), "--reference", s(&corpus), "--out", s(&png)],
        None,
    ));
    assert!(png.exists());

    let shards = dir.path().join("shards");
    let printed = ok(&echoseg(&["generate-shards", "--corpus", s(&corpus), "--out", s(&shards)], None));
    assert_eq!(printed.lines().count(), 2);
}

#[test]
fn remote_commands_match_local_ones() {
    let server = start_server();
    let dir = tempfile::tempdir().unwrap();
    let remote = dir.path().join("remote");
    ok(&echoseg(&["synth", "--out", s(&remote), "--count", "1", "--seed", "7", "--n-pings", "60"], Some(&server)));
    let local = dir.path().join("local");
    ok(&echoseg(&["synth", "--out", s(&local), "--count", "1", "--seed", "7", "--n-pings", "60"], None));
    for suffix in [".raw.csv", ".clean.csv", ".air.evl", ".bottom.evl", ".regions.evr"] {
        let name = format!("synth_00007{suffix}");
        assert_eq!(std::fs::read(remote.join(&name)).unwrap(), std::fs::read(local.join(&name)).unwrap(), "{name}");
    }

    let raw = local.join("synth_00007.raw.csv");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&echoseg(&["baseline", s(&raw), "--out-dir", s(&a)], Some(&server)));
    ok(&echoseg(&["baseline", s(&raw), "--out-dir", s(&b)], None));
    let air = "synth_00007.air.evl";
    assert_eq!(std::fs::read(a.join(air)).unwrap(), std::fs::read(b.join(air)).unwrap());

    let eval = |server| ok(&echoseg(&["evaluate", "--corpus", s(&local), "--predictions", s(&a)], server));
    assert_eq!(eval(Some(&server)), eval(None));

    // without a model the service refuses inference
    let out = echoseg(&["infer", s(&raw)], Some(&server));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("503"));
}

#[tokio::test]
async fn client_round_trip() {
    let server = tokio::task::spawn_blocking(start_server).await.unwrap();
    let client = Client::new(server);
    assert_eq!(client.health().await.unwrap().status, "ok");
    let res = client.synth(&SynthRequest { config: SynthConfig { n_pings: 30, ..SynthConfig::default() } }).await.unwrap();
    assert!(res.raw_csv.lines().count() > 30);
    match client.job(5).await {
        Err(echoseg_client::ClientError::Api { status, .. }) => assert_eq!(status, 404),
        other => panic!("{other:?}"),
    }
}
