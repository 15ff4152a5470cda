//! Command-line and HTTP/WebSocket front ends over the `phenoflow` core.

pub mod cli;
pub mod server;
