//! Minimum-fuel transfer planning between passive relative orbits (PROs)
//! for spacecraft swarms, plus supervised imitation of the planner.
//!
//! The crate is organized around a centralized expert planner and the
//! machinery needed to imitate and benchmark it:
//!
//! - [`dynamics`]: Clohessy–Wiltshire relative motion, exact discrete
//!   state-transition matrices, and energy-matched PRO generation.
//! - [`scenario`]: construction and seeded random sampling of transfer
//!   problem instances.
//! - [`lp`]: a dense bounded-variable simplex solver for the convex
//!   subproblems.
//! - [`scp`]: the sequential-convex-programming planner (the "expert"),
//!   with linearized collision constraints and warm-start support.
//! - [`metrics`]: fuel cost, collision counting, and report aggregation.
//! - [`neural`]: from-scratch MLP and LSTM networks, losses, training,
//!   and the swarm encoding/decoding conventions.
//! - [`pipeline`]: dataset generation and the three experiment drivers.

pub mod dynamics;
pub mod lp;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod scenario;
pub mod scp;

pub use dynamics::{CwParams, DiscreteDynamics, Pro, State6, Trajectory};
