//! Planning engine for latency-constrained virtual PON slices over mesh-PON fronthaul.
//!
//! The pieces, bottom-up:
//!
//! - [`traffic`]: Erlang occupancy of each radio unit and the eCPRI segment
//!   distribution it induces per grant cycle.
//! - [`latency`]: convolution of per-RU distributions into a slice burst and the
//!   G/G/1 (Kingman) upstream latency of the slice.
//! - [`layout`]: synthetic macro/small-cell geometry, PON tree membership,
//!   nearest-tree sets and level-1 ring ordering.
//! - [`optimizer`]: the slice assignment program, an exact 0-1 branch-and-bound,
//!   and the iterative no-good-cut loop that enforces the latency threshold.
//! - [`sim`]: a grant-cycle discrete-event simulator of one slice used to check the
//!   analytical model.

mod clock;
pub mod error;
pub mod latency;
pub mod layout;
pub mod optimizer;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
