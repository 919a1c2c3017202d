//! Network and command-line front end for `ringwire-core`.
//!
//! [`server`] streams a live session over a WebSocket and serves the wire
//! geometry at `/path.json`. [`cli`] holds the `ringwire` subcommands.

pub mod cli;
pub mod protocol;
pub mod server;
pub mod session;
