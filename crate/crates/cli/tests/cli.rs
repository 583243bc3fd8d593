use std::net::{TcpStream, UdpSocket};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use gesturebot_core::dataset::{render_sequence, SequenceSpec};
use gesturebot_core::pipeline::write_frames;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gesturebot"));
    c.env_remove("GESTUREBOT_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Vec<Value> {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn free_udp_port() -> u16 {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn free_tcp_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Small dataset plus a trained model, shared by several tests.
fn small_model(dir: &Path) {
    let d = dir.to_str().unwrap();
    ok_json(&["gen-dataset", "--seed", "3", "--variants", "5", "-o", d]);
    ok_json(&["train", &format!("{d}/templates"), "-o", &format!("{d}/model")]);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["run", "m"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["classify", "/no/such/model", "/no/such.pbm"]).status.code(), Some(1));
    let bad = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad.path(), "{\"bogus\": true}").unwrap();
    let out = bin().args(["eval", "m", "p"]).env("GESTUREBOT_CONFIG", bad.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_classify_eval() {
    let tmp = tempfile::tempdir().unwrap();
    small_model(tmp.path());
    let d = tmp.path().to_str().unwrap();
    let model = format!("{d}/model");
    for label in [0, 4, 9] {
        let c = &ok_json(&["classify", &model, &format!("{d}/templates/{label}_{label}.pbm")])[0];
        assert_eq!(c["label"], label);
        assert!(c["distance"].as_f64().unwrap() <= 1e-6);
        assert!(c["name"].is_string());
    }
    let e = &ok_json(&["eval", &model, &format!("{d}/probes")])[0];
    let keys: Vec<&str> = e.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["accuracy", "n", "unknown"]);
    assert_eq!(e["n"], 50);
    assert!(e["accuracy"].as_f64().unwrap() >= 0.9);
}

#[test]
fn run_on_directory() {
    let tmp = tempfile::tempdir().unwrap();
    small_model(tmp.path());
    let d = tmp.path().to_str().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let log = tmp.path().join("empty.jsonl");
    let out = run(&["run", &format!("{d}/model"), "--frames", empty.to_str().unwrap(), "--log", log.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&log).unwrap(), "");

    let frames = tmp.path().join("frames");
    write_frames(&frames, &render_sequence(&SequenceSpec::new(3, 160, 120)).unwrap()).unwrap();
    let log = tmp.path().join("clip.jsonl");
    let recs =
        ok_json(&["run", &format!("{d}/model"), "--frames", frames.to_str().unwrap(), "--log", log.to_str().unwrap()]);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["label"], 3);
    assert_eq!(recs[0]["verb"], "turnleft");
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 1);
}

fn connect_ws(port: u16) -> tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>> {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match tungstenite::connect(format!("ws://127.0.0.1:{port}/ws")) {
            Ok((ws, _)) => return ws,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("gateway never came up: {e}"),
        }
    }
}

fn next_of_type(ws: &mut tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>, ty: &str) -> Value {
    loop {
        let msg = ws.read().unwrap();
        if let tungstenite::Message::Text(t) = msg {
            let v: Value = serde_json::from_str(&t).unwrap();
            if v["type"] == ty {
                return v;
            }
        }
    }
}

#[test]
fn console_gestures_match_pipeline_records() {
    let tmp = tempfile::tempdir().unwrap();
    small_model(tmp.path());
    let d = tmp.path().to_str().unwrap();
    // the labels the default mapping table assigns, one clip each
    let labels = [1u8, 3, 1, 5, 4, 2, 0];
    let mut clips = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let mut spec = SequenceSpec::new(label as usize, 160, 120);
        spec.first_seq = 16 * i as u64;
        clips.extend(render_sequence(&spec).unwrap());
    }
    let frames = tmp.path().join("frames");
    write_frames(&frames, &clips).unwrap();
    let local = ok_json(&["run", &format!("{d}/model"), "--frames", frames.to_str().unwrap()]);
    assert_eq!(local.len(), labels.len());

    let gw = free_tcp_port();
    let host = bin()
        .args(["serve", "--gateway", &gw.to_string(), "--commands", &free_udp_port().to_string()])
        .args(["--duration-ms", "3000"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut ws = connect_ws(gw);
    assert_eq!(next_of_type(&mut ws, "state")["tick"], 0);
    for (i, label) in labels.iter().enumerate() {
        let sent = Instant::now();
        ws.send(tungstenite::Message::text(format!(r#"{{"type":"gesture","label":{label}}}"#))).unwrap();
        let state = next_of_type(&mut ws, "state");
        assert!(sent.elapsed() < Duration::from_millis(100), "state after {:?}", sent.elapsed());
        assert_eq!(state["tick"], i as u64 + 1);
        assert_eq!(state["x"], local[i]["x"]);
    }
    drop(ws);
    let out = host.wait_with_output().unwrap();
    assert!(out.status.success());
    let remote: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(remote.len(), labels.len());
    for (a, b) in local.iter().zip(&remote) {
        for key in ["label", "verb", "magnitude", "outcome", "x", "y", "theta", "grip", "tick"] {
            assert_eq!(a[key], b[key], "{key}: {a} vs {b}");
        }
        assert_eq!(b["distance"], 0.0);
    }
}

#[test]
fn frames_over_udp() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = tmp.path().join("frames");
    write_frames(&frames, &render_sequence(&SequenceSpec::new(1, 320, 240)).unwrap()[..2]).unwrap();
    let port = free_udp_port();
    let out_dir = tmp.path().join("recv");
    let rx = bin()
        .args(["recv-frame", "--listen", &port.to_string(), "--count", "2", "-o", out_dir.to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    std::thread::sleep(Duration::from_millis(300));
    ok_json(&["send-frame", frames.to_str().unwrap(), "--to", &format!("127.0.0.1:{port}"), "--period-ms", "20"]);
    let out = rx.wait_with_output().unwrap();
    assert!(out.status.success());
    let got = std::fs::read_dir(&out_dir).unwrap().count();
    assert_eq!(got, 2);
}
