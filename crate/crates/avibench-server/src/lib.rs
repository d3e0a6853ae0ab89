//! HTTP challenge service: team registration, rate-limited scoring of
//! prediction submissions against a private test set, preview and final
//! leaderboards, with append-only event-log persistence.

pub mod http;
pub mod state;

pub use http::{open_challenge, router, serve, ServerConfig};
pub use state::{Challenge, LeaderboardMode, Phase, Rejection, ServiceError};
