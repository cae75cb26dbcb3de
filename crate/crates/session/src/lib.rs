//! Live teaching sessions.
//!
//! A [`Session`] wraps an ownership system with a simulated clock. Actions
//! are announced, held open for an interruption window and then executed
//! or refused; every state change is published as a numbered
//! [`SessionEvent`]. [`server`] exposes sessions over HTTP with a websocket
//! event stream. The wire format is described in `PROTOCOL.md`.

pub mod protocol;
pub mod server;
pub mod session;
pub mod snapshot;

pub use protocol::*;
pub use session::{Session, SessionError};
pub use snapshot::WorldSnapshot;
