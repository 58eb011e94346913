use std::collections::HashMap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use inpaint_core::patches::PatchSpec;
use inpaint_core::pipeline::{FrameSource, Pipeline, ProblemConfig};
use inpaint_core::tensor::TensorShape;
use inpaint_stream::{FrameType, ServeOptions, Server, WireFrame};
use serde_json::{json, Value};
use tungstenite::{connect, Message};

fn start(frames: u64, fps: f64) -> (String, thread::JoinHandle<()>) {
    let mut pipeline = Pipeline::new();
    let mut cfg = ProblemConfig::new("grey", PatchSpec::dense(&[4, 4]).unwrap());
    cfg.hyper.atoms = 9;
    let h = pipeline.create_problem(cfg).unwrap();
    let shape = TensorShape::new(&[24, 24]).unwrap();
    let source = FrameSource::synthetic(shape, 3, Some(frames)).with_fps_cap(Some(fps));
    let server = Server::bind(
        "127.0.0.1:0".parse().unwrap(),
        ServeOptions {
            wait_for_viewers: 1,
            linger: false,
            refresh_every: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let url = format!("ws://{}", server.local_addr().unwrap());
    let handle = thread::spawn(move || {
        server
            .run(pipeline, vec![(h, source)], Arc::new(AtomicBool::new(false)))
            .unwrap();
    });
    (url, handle)
}

#[test]
fn session_contract() {
    let (url, server) = start(12, 20.0);
    let (mut ws, _) = connect(&url).unwrap();

    let first = ws.read().unwrap();
    let desc: Value = serde_json::from_str(first.to_text().unwrap()).unwrap();
    assert_eq!(desc["kind"], "session");
    assert_eq!(desc["problems"][0]["name"], "grey");
    assert_eq!(desc["problems"][0]["atoms"], 9);

    let controls = [
        json!({"cmd": "set_sampling", "problem": "grey", "value": 0.5}),
        json!({"cmd": "set_epochs", "problem": "missing", "value": 2}),
        json!({"cmd": "bogus"}),
    ];
    for c in &controls {
        ws.send(Message::text(c.to_string())).unwrap();
    }
    ws.send(Message::text("{not json")).unwrap();

    let mut last_id: HashMap<(u16, FrameType), u32> = HashMap::new();
    let mut replies = Vec::new();
    let mut metrics = Vec::new();
    loop {
        match ws.read() {
            Ok(Message::Binary(b)) => {
                let f = WireFrame::decode(&b).unwrap();
                assert_eq!(f.payload.len(), (f.width * f.height) as usize);
                if let Some(prev) = last_id.insert((f.problem_id, f.kind), f.frame_id) {
                    assert!(f.frame_id > prev, "{:?} went {prev} -> {}", f.kind, f.frame_id);
                }
                if f.kind == FrameType::Atlas {
                    assert_eq!((f.width, f.height), (14, 14));
                }
            }
            Ok(Message::Text(t)) => {
                let v: Value = serde_json::from_str(t.as_str()).unwrap();
                match v["kind"].as_str().unwrap() {
                    "ack" | "error" => replies.push(v),
                    "metrics" => metrics.push(v),
                    "end" => break,
                    "session" => {}
                    other => panic!("unexpected message kind {other}"),
                }
            }
            Ok(_) => {}
            Err(e) => panic!("socket error before end: {e}"),
        }
    }
    server.join().unwrap();

    assert_eq!(replies.len(), 4, "{replies:?}");
    let ack = replies.iter().find(|r| r["kind"] == "ack").unwrap();
    assert_eq!(ack["cmd"], "set_sampling");
    let at = ack["applied_at_frame"].as_u64().unwrap();
    assert_eq!(replies.iter().filter(|r| r["kind"] == "error").count(), 3);

    assert_eq!(metrics.len(), 12);
    for (i, m) in metrics.iter().enumerate() {
        assert_eq!(m["frame_id"].as_u64().unwrap(), i as u64);
        let ratio = m["sampling_ratio"].as_f64().unwrap();
        if (i as u64) < at {
            assert!((ratio - 0.3).abs() < 0.01);
        } else {
            assert!((ratio - 0.5).abs() < 0.01);
        }
    }
    for kind in [FrameType::MaskedInput, FrameType::Reconstruction, FrameType::Atlas, FrameType::GroundTruth] {
        assert!(last_id.contains_key(&(0, kind)), "no {kind:?} frames");
    }
}

#[test]
fn pause_and_resume_are_acked() {
    let (url, server) = start(6, 10.0);
    let (mut ws, _) = connect(&url).unwrap();
    ws.read().unwrap();
    ws.send(Message::text(r#"{"cmd":"pause"}"#)).unwrap();
    let mut acks = Vec::new();
    let mut frames_while_paused = None;
    let mut metrics = 0;
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => {
                let v: Value = serde_json::from_str(t.as_str()).unwrap();
                match v["kind"].as_str().unwrap() {
                    "ack" => {
                        acks.push(v.clone());
                        if v["cmd"] == "pause" {
                            frames_while_paused = Some(metrics);
                            thread::sleep(Duration::from_millis(300));
                            ws.send(Message::text(r#"{"cmd":"resume"}"#)).unwrap();
                        }
                    }
                    "metrics" => metrics += 1,
                    "end" => break,
                    _ => {}
                }
            }
            _ => {}
        }
    }
    server.join().unwrap();
    assert_eq!(acks.len(), 2);
    assert_eq!(acks[0]["cmd"], "pause");
    assert_eq!(acks[1]["cmd"], "resume");
    assert_eq!(acks[0]["applied_at_frame"], acks[1]["applied_at_frame"]);
    assert!(frames_while_paused.is_some());
    assert_eq!(metrics, 6);
}
