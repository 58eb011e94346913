//! Live viewing of a running reconstruction session.
//!
//! Viewers connect over WebSocket, receive a session descriptor, then a
//! stream of quantized image frames (see [`wire`]) and JSON metrics. They
//! steer the session with JSON control messages.

pub mod atlas;
mod error;
pub mod server;
pub mod wire;

pub use atlas::{render_dictionary_atlas, Atlas};
pub use error::{Result, StreamError};
pub use server::{ServeOptions, Server};
pub use wire::{FrameType, WireFrame};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/streaming.md")]
mod book {}
