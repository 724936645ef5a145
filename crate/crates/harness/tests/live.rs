mod common;

use std::sync::Arc;
use std::time::Duration;

use awareness_core::raster::read_png;
use awareness_core::renderer::{read_frame_log, FaultConfig, FaultMode};
use awareness_core::scenario::{gen_scenario, read_message_log};
use awareness_core::validator::DirFrames;
use awareness_harness::backend::{bind, serve_backend, BackendOptions};
use awareness_harness::config::run_files;
use awareness_harness::gateway::serve_gateway;
use awareness_harness::live::{overlay, run_live, select_validation_frames, shame_rect, LiveHandle, LiveTick, MessageSource};
use awareness_harness::pipeline::{load_model, validate_frames};
use futures_util::StreamExt;
use serde_json::{json, Value};
use tokio::sync::watch;

fn never() -> watch::Receiver<bool> {
    let (tx, rx) = watch::channel(false);
    std::mem::forget(tx);
    rx
}

#[tokio::test(flavor = "multi_thread")]
async fn live_verdicts_equal_offline_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::trained(dir.path());
    cfg.scenario.duration_s = 12.0;
    cfg.rates.time_scale = 20.0;
    cfg.fault = FaultConfig::windowed(FaultMode::TransitionBlind, 2000, 8000);
    let ts = Arc::new(load_model(&cfg).unwrap());
    let run_dir = dir.path().join("live");
    let handle = LiveHandle::new(cfg.fault.clone());
    let out = run_live(cfg.clone(), Arc::clone(&ts), handle.clone(), MessageSource::InProcess, run_dir.clone(), never())
        .await
        .unwrap();
    assert_eq!(out.messages, 60);
    assert_eq!(out.verdicts.len(), 12);

    let frames = read_frame_log(&run_dir).unwrap();
    let messages = read_message_log(&run_dir.join(run_files::MESSAGES)).unwrap();
    assert_eq!(messages, gen_scenario(&cfg.scenario).unwrap());
    let picked = select_validation_frames(&frames, cfg.rates.validate_hz);
    let (offline, _) = validate_frames(&cfg, &ts, &picked, &messages, &DirFrames::new(&run_dir)).unwrap();
    assert_eq!(offline, out.verdicts);
    let live_log = std::fs::read_to_string(run_dir.join(run_files::LIVE_VERDICTS)).unwrap();
    assert_eq!(live_log.lines().count(), 12);

    // the blind window covers the 3800 ms caution to danger switch
    let failing: Vec<u64> = out.verdicts.iter().filter(|v| !v.pass).map(|v| v.ts_ms).collect();
    assert_eq!(failing.first(), Some(&4000));
    assert!(failing.iter().all(|&t| (2000..8000).contains(&t)), "{failing:?}");

    // validated frames on disk never carry the badge
    for f in &picked {
        let img = read_png(&run_dir.join(&f.path)).unwrap();
        let r = shame_rect(img.width(), img.height());
        assert_ne!(overlay(&img, true).unwrap().crop(r).unwrap(), img.crop(r).unwrap());
    }

    let status = handle.status();
    assert!(status.finished);
    assert_eq!(status.counters.checks, 12);
    assert_eq!(status.counters.failures, failing.len() as u64);
    assert_eq!(status.shame, !out.verdicts.last().unwrap().pass);
    assert_eq!(status.episodes.len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn live_reads_from_a_backend_service() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::trained(dir.path());
    cfg.scenario.duration_s = 6.0;
    cfg.rates.time_scale = 10.0;
    let ts = Arc::new(load_model(&cfg).unwrap());
    let backend_log = dir.path().join("backend.ndjson");
    let backend = serve_backend(&cfg, bind("127.0.0.1", 0).await.unwrap(), &backend_log, BackendOptions { wait_for_client: true })
        .await
        .unwrap();
    let source = MessageSource::Backend(backend.local_addr());
    let run_dir = dir.path().join("live");
    let out = run_live(cfg.clone(), ts, LiveHandle::new(FaultConfig::none()), source, run_dir.clone(), never()).await.unwrap();
    backend.finished().await.unwrap();
    assert_eq!(out.messages, 30);
    assert!(out.verdicts.iter().all(|v| v.pass));
    assert_eq!(
        std::fs::read_to_string(run_dir.join(run_files::MESSAGES)).unwrap(),
        std::fs::read_to_string(backend_log).unwrap()
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn gateway_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::trained(dir.path());
    cfg.scenario.duration_s = 16.0;
    cfg.rates.time_scale = 2.0;
    let ts = Arc::new(load_model(&cfg).unwrap());
    let handle = LiveHandle::new(FaultConfig::none());
    let (stop_tx, stop_rx) = watch::channel(false);
    let listener = bind("127.0.0.1", 0).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let gateway = tokio::spawn(serve_gateway(listener, handle.clone(), stop_rx));
    let base = format!("http://{addr}");
    let http = reqwest::Client::new();

    let status: Value = http.get(format!("{base}/status")).send().await.unwrap().json().await.unwrap();
    assert_eq!(status["shame"], json!(false));
    assert_eq!(status["counters"], json!({"frames": 0, "messages": 0, "checks": 0, "failures": 0}));

    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/live")).await.unwrap();
    let collector = tokio::spawn(async move {
        let mut ticks = Vec::new();
        let mut ws = ws;
        while let Some(Ok(msg)) = ws.next().await {
            if let tokio_tungstenite::tungstenite::Message::Text(t) = msg {
                ticks.push(serde_json::from_str::<LiveTick>(t.as_str()).unwrap());
            }
        }
        ticks
    });

    let live = tokio::spawn(run_live(
        cfg.clone(),
        ts,
        handle.clone(),
        MessageSource::InProcess,
        dir.path().join("live"),
        never(),
    ));

    let bad = http.post(format!("{base}/fault")).body(r#"{"mode":"upside_down"}"#).send().await.unwrap();
    assert_eq!(bad.status(), 400);
    assert!(!handle.status().fault_active);

    let ok = http
        .post(format!("{base}/fault"))
        .body(r#"{"mode":"transition_blind","duration_ms":10000}"#)
        .send()
        .await
        .unwrap();
    assert_eq!(ok.status(), 200);
    let status: Value = http.get(format!("{base}/status")).send().await.unwrap().json().await.unwrap();
    assert_eq!(status["fault_active"], json!(true));
    assert_eq!(status["fault"]["mode"], json!("transition_blind"));

    let out = live.await.unwrap().unwrap();
    let ticks = tokio::time::timeout(Duration::from_secs(30), collector).await.unwrap().unwrap();
    assert!(!ticks.is_empty());
    assert!(ticks.windows(2).all(|w| w[0].ts_ms < w[1].ts_ms), "tick timestamps must increase");
    assert!(ticks.iter().any(|t| t.shame), "the blind window covers the 3800 ms switch");
    for t in &ticks {
        assert_eq!(t.shame, t.backend != t.perceived);
    }
    // the window ends before the run does and the display catches up
    assert!(out.verdicts.last().unwrap().pass);
    assert!(!handle.status().shame);

    stop_tx.send(true).unwrap();
    gateway.await.unwrap().unwrap();
}
