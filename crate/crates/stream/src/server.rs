//! WebSocket endpoint for a live session.
//!
//! The pipeline runs on the calling thread. A small tokio runtime accepts
//! viewers and fans frames out to them. Each viewer has its own queue: text
//! messages (session descriptors, metrics, acks, errors) are delivered in
//! order and never dropped, while image frames sit in one slot per
//! `(problem, frame type)` and a newer frame replaces an unsent older one.
//!
//! Session descriptor:
//!
//! ```json
//! {"kind": "session", "problems": [{"id": 0, "name": "grey", "shape": [64, 64],
//!   "patch": [10, 10], "stride": [1, 1], "atoms": 64, "frames_processed": 3,
//!   "config": {"sampler": "uniform-random", "ratio": 0.3, "epochs_per_frame": 1,
//!   "freeze_dict": false, "warm_start": true, "seed": 0}}],
//!  "paused": false, "rounds": 3, "dropped": 0, "ended": false}
//! ```
//!
//! `shape` is `null` until the problem's first frame. `dropped` counts frames
//! this viewer never received.

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use inpaint_core::pipeline::{
    run_live, ControlAck, ControlRequest, FrameResult, FrameSource, LiveSink, LiveSummary,
    Pipeline, ProblemHandle,
};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::Notify;
use tokio_tungstenite::tungstenite::Message;

use crate::atlas::render_dictionary_atlas;
use crate::error::{Result, StreamError};
use crate::wire::{ack_json, error_json, metrics_json, parse_control, FrameType, WireFrame};

#[derive(Clone, Debug)]
pub struct ServeOptions {
    /// Rounds between descriptor refreshes.
    pub refresh_every: u64,
    /// Hold the pipeline until this many viewers have connected.
    pub wait_for_viewers: usize,
    /// Keep serving after the sources end, until `stop` is set.
    pub linger: bool,
    /// How long to wait for viewer queues to flush before returning.
    pub drain_timeout: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            refresh_every: 30,
            wait_for_viewers: 0,
            linger: true,
            drain_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Default)]
struct QueueInner {
    text: VecDeque<String>,
    frames: BTreeMap<(u16, u8), Vec<u8>>,
    dropped: u64,
    closed: bool,
}

#[derive(Default)]
struct ViewerQueue {
    inner: Mutex<QueueInner>,
    notify: Notify,
}

impl ViewerQueue {
    fn push_text(&self, msg: String) {
        self.inner.lock().unwrap().text.push_back(msg);
        self.notify.notify_one();
    }

    fn push_frame(&self, frame: &WireFrame) {
        let mut q = self.inner.lock().unwrap();
        let key = (frame.problem_id, frame.kind as u8);
        if q.frames.insert(key, frame.encode()).is_some() {
            q.dropped += 1;
        }
        drop(q);
        self.notify.notify_one();
    }

    fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.notify.notify_one();
    }

    fn is_empty(&self) -> bool {
        let q = self.inner.lock().unwrap();
        q.text.is_empty() && q.frames.is_empty()
    }

    /// Everything pending, text first; `None` once closed and empty.
    async fn next_batch(&self) -> Option<Vec<Message>> {
        loop {
            {
                let mut q = self.inner.lock().unwrap();
                if !q.text.is_empty() || !q.frames.is_empty() {
                    let mut out: Vec<Message> =
                        q.text.drain(..).map(|t| Message::Text(t.into())).collect();
                    let frames = std::mem::take(&mut q.frames);
                    out.extend(frames.into_values().map(|b| Message::Binary(b.into())));
                    return Some(out);
                }
                if q.closed {
                    return None;
                }
            }
            self.notify.notified().await;
        }
    }
}

#[derive(Default)]
struct SessionState {
    problems: Vec<Value>,
    paused: bool,
    rounds: u64,
    ended: bool,
}

struct Shared {
    viewers: Mutex<BTreeMap<u64, Arc<ViewerQueue>>>,
    next_viewer: AtomicU64,
    session: Mutex<SessionState>,
    controls: Mutex<Option<mpsc::Sender<ControlRequest>>>,
    connected: Mutex<usize>,
    connected_cv: Condvar,
}

impl Shared {
    fn descriptor(&self, dropped: u64) -> String {
        let s = self.session.lock().unwrap();
        json!({
            "kind": "session",
            "problems": s.problems,
            "paused": s.paused,
            "rounds": s.rounds,
            "dropped": dropped,
            "ended": s.ended,
        })
        .to_string()
    }

    fn register(&self) -> (u64, Arc<ViewerQueue>) {
        let id = self.next_viewer.fetch_add(1, Ordering::Relaxed);
        let q = Arc::new(ViewerQueue::default());
        let mut viewers = self.viewers.lock().unwrap();
        q.push_text(self.descriptor(0));
        viewers.insert(id, q.clone());
        drop(viewers);
        *self.connected.lock().unwrap() += 1;
        self.connected_cv.notify_all();
        (id, q)
    }

    fn unregister(&self, id: u64) {
        if let Some(q) = self.viewers.lock().unwrap().remove(&id) {
            q.close();
        }
    }

    fn each_viewer(&self, mut f: impl FnMut(&ViewerQueue)) {
        for q in self.viewers.lock().unwrap().values() {
            f(q);
        }
    }

    fn refresh(&self) {
        let viewers = self.viewers.lock().unwrap();
        for q in viewers.values() {
            let dropped = q.inner.lock().unwrap().dropped;
            q.push_text(self.descriptor(dropped));
        }
    }

    fn on_text(&self, viewer: u64, text: &str) {
        let reply = |msg: String| {
            if let Some(q) = self.viewers.lock().unwrap().get(&viewer) {
                q.push_text(msg);
            }
        };
        let parsed = match parse_control(text) {
            Ok(p) => p,
            Err(e) => return reply(error_json(e.cmd.as_deref(), None, &e.message)),
        };
        let cmd = parsed.control.name();
        let sender = self.controls.lock().unwrap();
        let sent = sender.as_ref().is_some_and(|tx| {
            tx.send(ControlRequest {
                origin: viewer,
                problem: parsed.problem.clone(),
                control: parsed.control,
            })
            .is_ok()
        });
        drop(sender);
        if !sent {
            reply(error_json(
                Some(cmd),
                parsed.problem.as_deref(),
                "the session has ended",
            ));
        }
    }
}

fn problem_info(pipeline: &Pipeline, h: ProblemHandle) -> Option<Value> {
    let st = pipeline.status(h).ok()?;
    let cfg = &st.config;
    let atoms = pipeline
        .dictionary(h)
        .ok()
        .flatten()
        .map_or(cfg.hyper.atoms, |d| d.len());
    let id = h.index() as u16;
    Some(json!({
        "id": id,
        "name": cfg.name,
        "shape": st.frame_shape.as_ref().map(|s| s.dims().to_vec()),
        "patch": cfg.patch.patch_shape(),
        "stride": cfg.patch.stride(),
        "atoms": atoms,
        "frames_processed": st.frames_processed,
        "config": {
            "sampler": cfg.sampler.strategy,
            "ratio": cfg.sampler.ratio,
            "epochs_per_frame": cfg.epochs_per_frame,
            "freeze_dict": cfg.freeze_dict,
            "warm_start": cfg.warm_start,
            "seed": cfg.seed(),
        },
    }))
}

fn snapshot(pipeline: &Pipeline) -> Vec<Value> {
    pipeline
        .handles()
        .filter_map(|h| problem_info(pipeline, h))
        .collect()
}

struct Broadcast<'a> {
    shared: &'a Shared,
    refresh_every: u64,
}

impl LiveSink for Broadcast<'_> {
    fn frame(&mut self, problem: &str, r: &FrameResult) {
        let pid = r.problem.index() as u16;
        let fid = r.metrics.frame_id as u32;
        let mut frames = vec![
            WireFrame::from_tensor(FrameType::MaskedInput, pid, fid, &r.masked_input),
            WireFrame::from_tensor(FrameType::Reconstruction, pid, fid, &r.reconstruction),
            render_dictionary_atlas(&r.dictionary).into_frame(pid, fid),
        ];
        if let Some(gt) = &r.ground_truth {
            frames.push(WireFrame::from_tensor(FrameType::GroundTruth, pid, fid, gt));
        }
        let metrics = metrics_json(problem, &r.metrics);
        self.shared.each_viewer(|q| {
            q.push_text(metrics.clone());
            for f in &frames {
                q.push_frame(f);
            }
        });
    }

    fn ack(&mut self, ack: ControlAck) {
        if ack.outcome.is_ok() {
            match ack.cmd {
                "pause" => self.shared.session.lock().unwrap().paused = true,
                "resume" => self.shared.session.lock().unwrap().paused = false,
                _ => {}
            }
        }
        if let Some(q) = self.shared.viewers.lock().unwrap().get(&ack.origin) {
            q.push_text(ack_json(&ack));
        }
    }

    fn error(&mut self, problem: &str, message: &str) {
        log::warn!("{problem}: {message}");
        let msg = error_json(None, Some(problem), message);
        self.shared.each_viewer(|q| q.push_text(msg.clone()));
    }

    fn round(&mut self, pipeline: &Pipeline, round: u64) {
        {
            let mut s = self.shared.session.lock().unwrap();
            s.problems = snapshot(pipeline);
            s.rounds = round;
        }
        if self.refresh_every > 0 && round % self.refresh_every == 0 {
            self.shared.refresh();
        }
    }
}

async fn serve_viewer(stream: TcpStream, shared: Arc<Shared>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("handshake failed: {e}");
            return;
        }
    };
    let (mut write, mut read) = ws.split();
    let (id, queue) = shared.register();
    let q = queue.clone();
    let writer = tokio::spawn(async move {
        while let Some(batch) = q.next_batch().await {
            for msg in batch {
                if write.send(msg).await.is_err() {
                    return;
                }
            }
        }
        let _ = write.close().await;
    });
    while let Some(msg) = read.next().await {
        match msg {
            Ok(Message::Text(t)) => shared.on_text(id, t.as_str()),
            Ok(Message::Binary(_)) => {
                queue.push_text(error_json(None, None, "binary messages are not accepted"))
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    shared.unregister(id);
    let _ = writer.await;
}

/// A bound but not yet running server.
pub struct Server {
    listener: std::net::TcpListener,
    options: ServeOptions,
}

impl Server {
    pub fn bind(addr: SocketAddr, options: ServeOptions) -> Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self { listener, options })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Runs the pipeline over `sources` while serving viewers. Returns once
    /// the sources are exhausted (or, with `linger`, once `stop` is set).
    pub fn run(
        self,
        mut pipeline: Pipeline,
        sources: Vec<(ProblemHandle, FrameSource)>,
        stop: Arc<AtomicBool>,
    ) -> Result<LiveSummary> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            viewers: Mutex::new(BTreeMap::new()),
            next_viewer: AtomicU64::new(1),
            session: Mutex::new(SessionState {
                problems: snapshot(&pipeline),
                ..Default::default()
            }),
            controls: Mutex::new(Some(tx)),
            connected: Mutex::new(0),
            connected_cv: Condvar::new(),
        });

        let listener = {
            let _guard = runtime.enter();
            TcpListener::from_std(self.listener)?
        };
        let acceptor = shared.clone();
        runtime.spawn(async move {
            loop {
                match listener.accept().await {
                    Ok((stream, _)) => {
                        tokio::spawn(serve_viewer(stream, acceptor.clone()));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        });

        {
            let mut n = shared.connected.lock().unwrap();
            while *n < self.options.wait_for_viewers && !stop.load(Ordering::Relaxed) {
                n = shared
                    .connected_cv
                    .wait_timeout(n, Duration::from_millis(100))
                    .unwrap()
                    .0;
            }
        }

        let mut sink = Broadcast {
            shared: &shared,
            refresh_every: self.options.refresh_every,
        };
        let result = run_live(&mut pipeline, sources, &rx, &mut sink, &stop);

        *shared.controls.lock().unwrap() = None;
        while let Ok(req) = rx.try_recv() {
            sink.ack(ControlAck {
                origin: req.origin,
                cmd: req.control.name(),
                problem: req.problem,
                outcome: Err("the session has ended".into()),
            });
        }
        shared.session.lock().unwrap().ended = true;
        let summary = result.map_err(StreamError::from);
        let end = match &summary {
            Ok(s) => json!({"kind": "end", "frames": s.frames, "skipped": s.skipped}),
            Err(e) => json!({"kind": "end", "error": e.to_string()}),
        }
        .to_string();
        shared.refresh();
        shared.each_viewer(|q| q.push_text(end.clone()));

        if self.options.linger {
            while !stop.load(Ordering::Relaxed) {
                std::thread::sleep(Duration::from_millis(100));
            }
        }
        let deadline = Instant::now() + self.options.drain_timeout;
        loop {
            let mut pending = false;
            shared.each_viewer(|q| pending |= !q.is_empty());
            if !pending || Instant::now() >= deadline {
                break;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        shared.each_viewer(|q| q.close());
        runtime.shutdown_timeout(Duration::from_secs(1));
        summary
    }
}
