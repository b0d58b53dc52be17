//! Deterministic multi-channel closed-loop control simulation.
//!
//! The crate wires three pieces together:
//!
//! * per-channel PID controllers whose gains live on the 16-level lattice
//!   realizable by 4-bit tunable resistor/capacitor ladders ([`pid`]),
//! * behavioral plant models with physical-unit/voltage sensor mappings
//!   ([`plants`]),
//! * a supervisory layer that watches each loop through a comparator,
//!   gives the controller a grace period after a disturbance, and escalates
//!   to a shared particle-swarm tuner when the loop fails to recover
//!   ([`supervisor`], [`pso`]).
//!
//! [`sim`] runs complete scenarios: N independent loops advanced on a fixed
//! step, disturbance injection, the tuner multiplexed across channels, and
//! per-step telemetry. Everything is seeded and bit-for-bit reproducible.
//!
//! The crate is `no_std` (with `alloc`); file formats, scenario parsing and
//! the command line live in the companion `retune-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod pid;
pub mod plants;
pub mod pso;
pub mod sim;
pub mod supervisor;

pub(crate) mod rng;
