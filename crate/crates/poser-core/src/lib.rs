//! Core library for a deterministic, seedable simulator of a distributed
//! multi-modal sensor network that tracks mobile targets.
//!
//! Every sensor node runs a three-state probabilistic supervisor
//! (Sleep / low-power sensing / high-power sensing), estimates target
//! state with a JPDA-gated extended Kalman filter, shares confirmed
//! tracks with its neighborhood, and collaborates on node selection:
//! energy-weighted geometric scoring in dense regions, and a potential
//! game over adjustable sensing ranges when coverage is insufficient.
//!
//! All randomness flows through [`rng::RngStream`]: equal seeds produce
//! bit-identical trajectories, independent of node iteration order.

pub mod baselines;
pub mod config;
pub mod energy;
pub mod fusion;
pub mod game;
pub mod geom;
pub mod motion;
pub mod network;
pub mod pfsa;
pub mod rng;
pub mod selection;
pub mod sensing;
pub mod sim;
pub mod tracking;

pub use config::WorldConfig;
pub use geom::{NodeId, Point2D};
pub use rng::RngStream;
