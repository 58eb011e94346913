use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use inpaint_core::patches::PatchSpec;
use inpaint_core::pipeline::{parse_session_config, FrameSource, Pipeline, ProblemConfig};
use inpaint_core::tensor::TensorShape;
use inpaint_stream::{ServeOptions, Server};

#[derive(clap::Args)]
pub struct Args {
    /// `dir:PATH` for a directory of frames, or `synthetic[:HxW]`.
    #[arg(long)]
    source: String,
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value = "8080")]
    port: String,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Problem definitions (`[problem NAME]` sections of `key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frame-rate cap per source.
    #[arg(long)]
    fps: Option<f64>,
    /// Number of synthetic frames (unbounded when omitted).
    #[arg(long)]
    frames: Option<u64>,
    /// Hold the pipeline until this many viewers are connected.
    #[arg(long, default_value_t = 0)]
    wait_viewers: usize,
    /// Exit once the source is exhausted instead of idling.
    #[arg(long)]
    exit_when_done: bool,
    /// Rounds between session-descriptor refreshes.
    #[arg(long, default_value_t = 30)]
    refresh_every: u64,
}

enum SourceSpec {
    Dir(PathBuf),
    Synthetic(Vec<usize>),
}

fn parse_source(s: &str) -> Result<SourceSpec> {
    if let Some(dir) = s.strip_prefix("dir:") {
        return Ok(SourceSpec::Dir(PathBuf::from(dir)));
    }
    if s == "synthetic" {
        return Ok(SourceSpec::Synthetic(vec![64, 64]));
    }
    if let Some(dims) = s.strip_prefix("synthetic:") {
        let dims: Option<Vec<usize>> = dims.split('x').map(|d| d.parse().ok()).collect();
        if let Some(d) = dims.filter(|d| (1..=4).contains(&d.len())) {
            return Ok(SourceSpec::Synthetic(d));
        }
    }
    bail!(inpaint_core::Error::Config(format!(
        "--source must be dir:PATH, synthetic or synthetic:HxW, found {s:?}"
    )))
}

fn parse_port(s: &str) -> io::Result<u16> {
    s.parse::<u16>().map_err(|_| {
        io::Error::new(io::ErrorKind::InvalidInput, format!("invalid port {s:?}"))
    })
}

pub fn run(args: Args) -> Result<()> {
    let source = parse_source(&args.source)?;
    let problems = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            parse_session_config(&text)?
        }
        None => vec![ProblemConfig::new("main", PatchSpec::dense(&[10, 10])?)],
    };

    let mut pipeline = Pipeline::new();
    let mut sources = Vec::new();
    for (i, cfg) in problems.into_iter().enumerate() {
        let src = match &source {
            SourceSpec::Dir(dir) => FrameSource::directory(dir)
                .with_context(|| format!("opening {}", dir.display()))?,
            SourceSpec::Synthetic(dims) => {
                let mut dims = dims.clone();
                let patch = cfg.patch.patch_shape();
                dims.extend(patch.iter().skip(dims.len()));
                FrameSource::synthetic(TensorShape::new(&dims)?, i as u64, args.frames)
            }
        };
        let h = pipeline.create_problem(cfg)?;
        sources.push((h, src.with_fps_cap(args.fps)));
    }

    let addr = SocketAddr::new(args.bind, parse_port(&args.port)?);
    let server = Server::bind(
        addr,
        ServeOptions {
            refresh_every: args.refresh_every,
            wait_for_viewers: args.wait_viewers,
            linger: !args.exit_when_done,
            ..Default::default()
        },
    )
    .with_context(|| format!("binding {addr}"))?;
    println!("listening on ws://{}", server.local_addr()?);
    io::stdout().flush()?;

    let summary = server.run(pipeline, sources, Arc::new(AtomicBool::new(false)))?;
    log::info!(
        "session ended after {} frame(s), {} skipped",
        summary.frames,
        summary.skipped
    );
    Ok(())
}
