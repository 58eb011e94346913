mod bench;
mod dict;
mod inpaint;
mod serve;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Dictionary-learning inpainting of subsampled images and volumes.
#[derive(Parser)]
#[command(name = "inpaint", version)]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct one subsampled image.
    Inpaint(inpaint::Args),
    /// Time inference over increasing image sizes and emit a CSV.
    Bench(bench::Args),
    /// Learn a dictionary from a corpus of images.
    Learn(dict::LearnArgs),
    /// Adapt a dictionary file to another patch shape.
    Transfer(dict::TransferArgs),
    /// Run a live session and stream it to WebSocket viewers.
    Serve(serve::Args),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use inpaint_core::Error as Core;
    fn core(e: &Core) -> u8 {
        match e {
            Core::Io(_) | Core::Format(_) => 3,
            Core::Divergence(_) => 4,
            _ => 2,
        }
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Core>() {
            return core(e);
        }
        if let Some(e) = cause.downcast_ref::<inpaint_stream::StreamError>() {
            return match e {
                inpaint_stream::StreamError::Core(c) => core(c),
                _ => 3,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Inpaint(a) => inpaint::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Learn(a) => dict::learn(a),
        Command::Transfer(a) => dict::transfer(a),
        Command::Serve(a) => serve::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
