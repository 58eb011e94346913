use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::time::Duration;

use super::{FrameResult, FrameSource, Pipeline, ProblemHandle};
use crate::error::Result;

/// A change requested while the loop runs.
#[derive(Clone, Debug, PartialEq)]
pub enum Control {
    SetSampling(f64),
    SetEpochs(usize),
    SetStrategy(String),
    Pause,
    Resume,
    /// Copy the named problem's dictionary into the target problem.
    TransferDict {
        from: String,
        freeze: bool,
    },
}

impl Control {
    pub fn name(&self) -> &'static str {
        match self {
            Control::SetSampling(_) => "set_sampling",
            Control::SetEpochs(_) => "set_epochs",
            Control::SetStrategy(_) => "set_strategy",
            Control::Pause => "pause",
            Control::Resume => "resume",
            Control::TransferDict { .. } => "transfer_dict",
        }
    }

    fn is_global(&self) -> bool {
        matches!(self, Control::Pause | Control::Resume)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlRequest {
    /// Caller's tag, echoed in the acknowledgement.
    pub origin: u64,
    pub problem: Option<String>,
    pub control: Control,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlAck {
    pub origin: u64,
    pub cmd: &'static str,
    pub problem: Option<String>,
    /// Frame index the change takes effect at, or the reason it was refused.
    pub outcome: std::result::Result<u64, String>,
}

/// Receives everything the live loop produces.
pub trait LiveSink {
    fn frame(&mut self, problem: &str, result: &FrameResult);
    fn ack(&mut self, ack: ControlAck);
    fn error(&mut self, problem: &str, message: &str) {
        log::warn!("{problem}: {message}");
    }
    /// Called after every completed round.
    fn round(&mut self, _pipeline: &Pipeline, _round: u64) {}
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LiveSummary {
    pub rounds: u64,
    pub frames: u64,
    /// Frames that could not be loaded or reconstructed.
    pub skipped: u64,
}

/// Pulls one frame per source each round and reconstructs them. Controls are
/// applied between rounds. Returns when every source is exhausted, `stop` is
/// set, or the loop is paused with no control sender left.
pub fn run_live(
    pipeline: &mut Pipeline,
    mut sources: Vec<(ProblemHandle, FrameSource)>,
    controls: &Receiver<ControlRequest>,
    sink: &mut dyn LiveSink,
    stop: &AtomicBool,
) -> Result<LiveSummary> {
    let mut summary = LiveSummary::default();
    let mut paused = false;
    let mut live: Vec<bool> = vec![true; sources.len()];
    let name =
        |p: &Pipeline, h: ProblemHandle| p.config(h).map(|c| c.name.clone()).unwrap_or_default();

    while !stop.load(Ordering::Relaxed) {
        loop {
            match controls.try_recv() {
                Ok(req) => {
                    let ack = apply(pipeline, req, summary.rounds, &mut paused);
                    sink.ack(ack);
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) if paused => return Ok(summary),
                Err(TryRecvError::Disconnected) => break,
            }
        }
        if paused {
            match controls.recv_timeout(Duration::from_millis(50)) {
                Ok(req) => {
                    let ack = apply(pipeline, req, summary.rounds, &mut paused);
                    sink.ack(ack);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return Ok(summary),
            }
            continue;
        }

        let mut jobs = Vec::new();
        for ((h, src), alive) in sources.iter_mut().zip(live.iter_mut()) {
            if !*alive {
                continue;
            }
            match src.next_frame() {
                None => *alive = false,
                Some(Ok(frame)) => {
                    let truth = pipeline.config(*h)?.reference_available;
                    jobs.push((*h, frame, truth));
                }
                Some(Err(e)) => {
                    summary.skipped += 1;
                    sink.error(&name(pipeline, *h), &e.to_string());
                }
            }
        }
        if !live.iter().any(|&a| a) {
            break;
        }
        for (h, res) in pipeline.submit_many(jobs) {
            match res {
                Ok(r) => {
                    summary.frames += 1;
                    sink.frame(&name(pipeline, h), &r);
                }
                Err(e) => {
                    summary.skipped += 1;
                    sink.error(&name(pipeline, h), &e.to_string());
                }
            }
        }
        summary.rounds += 1;
        sink.round(pipeline, summary.rounds);
    }
    Ok(summary)
}

fn apply(
    pipeline: &mut Pipeline,
    req: ControlRequest,
    round: u64,
    paused: &mut bool,
) -> ControlAck {
    let cmd = req.control.name();
    let outcome = if req.control.is_global() {
        *paused = req.control == Control::Pause;
        Ok(round)
    } else {
        apply_to_problem(pipeline, req.problem.as_deref(), &req.control)
    };
    ControlAck {
        origin: req.origin,
        cmd,
        problem: req.problem,
        outcome,
    }
}

fn apply_to_problem(
    pipeline: &mut Pipeline,
    problem: Option<&str>,
    control: &Control,
) -> std::result::Result<u64, String> {
    let name = problem.ok_or("this command needs a problem")?;
    let h = pipeline
        .handle(name)
        .ok_or_else(|| format!("unknown problem {name:?}"))?;
    let res = match control {
        Control::SetSampling(r) => {
            let r = *r;
            pipeline.update_config(h, |c| c.sampler.ratio = r)
        }
        Control::SetEpochs(n) => {
            let n = *n;
            pipeline.update_config(h, |c| c.epochs_per_frame = n)
        }
        Control::SetStrategy(s) => pipeline.update_config(h, |c| c.sampler.strategy = s.clone()),
        Control::TransferDict { from, freeze } => match pipeline.handle(from) {
            Some(src) => pipeline.transfer_between(src, h, *freeze),
            None => return Err(format!("unknown problem {from:?}")),
        },
        Control::Pause | Control::Resume => unreachable!("global controls handled by caller"),
    };
    res.map_err(|e| e.to_string())?;
    pipeline.next_frame_id(h).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patches::PatchSpec;
    use crate::pipeline::ProblemConfig;
    use crate::tensor::TensorShape;
    use std::sync::mpsc;

    #[derive(Default)]
    struct Collect {
        frames: Vec<(String, u64, f64)>,
        acks: Vec<ControlAck>,
    }

    impl LiveSink for Collect {
        fn frame(&mut self, problem: &str, r: &FrameResult) {
            self.frames
                .push((problem.into(), r.metrics.frame_id, r.metrics.sampling_ratio));
        }
        fn ack(&mut self, ack: ControlAck) {
            self.acks.push(ack);
        }
    }

    fn setup() -> (Pipeline, Vec<(ProblemHandle, FrameSource)>) {
        let mut p = Pipeline::new();
        let mut cfg = ProblemConfig::new("a", PatchSpec::dense(&[4, 4]).unwrap());
        cfg.hyper.atoms = 4;
        let h = p.create_problem(cfg).unwrap();
        let shape = TensorShape::new(&[12, 12]).unwrap();
        (p, vec![(h, FrameSource::synthetic(shape, 1, Some(4)))])
    }

    #[test]
    fn runs_to_exhaustion() {
        let (mut p, sources) = setup();
        let (_tx, rx) = mpsc::channel();
        let mut sink = Collect::default();
        let s = run_live(&mut p, sources, &rx, &mut sink, &AtomicBool::new(false)).unwrap();
        assert_eq!(s.frames, 4);
        assert_eq!(s.rounds, 4);
        let ids: Vec<u64> = sink.frames.iter().map(|f| f.1).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn controls_apply_at_frame_boundary() {
        let (mut p, sources) = setup();
        let (tx, rx) = mpsc::channel();
        tx.send(ControlRequest {
            origin: 7,
            problem: Some("a".into()),
            control: Control::SetSampling(0.5),
        })
        .unwrap();
        tx.send(ControlRequest {
            origin: 8,
            problem: Some("nope".into()),
            control: Control::SetEpochs(2),
        })
        .unwrap();
        tx.send(ControlRequest {
            origin: 9,
            problem: Some("a".into()),
            control: Control::SetSampling(1.5),
        })
        .unwrap();
        let mut sink = Collect::default();
        run_live(&mut p, sources, &rx, &mut sink, &AtomicBool::new(false)).unwrap();
        assert_eq!(sink.acks[0].outcome, Ok(0));
        assert_eq!(sink.acks[0].origin, 7);
        assert!(sink.acks[1].outcome.is_err());
        assert!(sink.acks[2].outcome.is_err());
        assert!(sink.frames.iter().all(|f| (f.2 - 0.5).abs() < 1e-9));
    }

    #[test]
    fn paused_without_sender_returns() {
        let (mut p, sources) = setup();
        let (tx, rx) = mpsc::channel();
        tx.send(ControlRequest {
            origin: 1,
            problem: None,
            control: Control::Pause,
        })
        .unwrap();
        drop(tx);
        let mut sink = Collect::default();
        let s = run_live(&mut p, sources, &rx, &mut sink, &AtomicBool::new(false)).unwrap();
        assert_eq!(s.frames, 0);
        assert_eq!(sink.acks[0].outcome, Ok(0));
    }
}
