//! Deterministic simulator core for self-healing quorum message routing.
//!
//! The library models a network of `n` nodes organized into overlapping
//! quorums wired as a butterfly: messages travel from a sender's entry
//! quorum through a logarithmic number of intermediate quorums to a
//! receiver's exit quorum. A bounded adversary controls a fixed set of
//! nodes and may corrupt or drop what they relay. The protocol layer
//! provides:
//!
//! * threshold-signed quorum broadcast ([`protocol`]),
//! * cheap single-relay message sends over the quorum path,
//! * two probabilistic spot-check procedures that re-trace a send through
//!   randomly drawn subsets (or chains of random single nodes) and raise
//!   an alarm when observations conflict,
//! * a quarantine procedure that converts each alarm into *conflict
//!   pairs* — two adjacent nodes whose sworn statements disagree, at
//!   least one of which must be faulty — and marks both out of future
//!   routing ([`membership`]).
//!
//! Marked nodes stop being selected, so each detected corruption
//! permanently drains adversary capacity: the network heals while paying
//! only a small expected per-send overhead.
//!
//! Everything is deterministic given a seed. Randomness flows through
//! labeled substreams ([`rng`]), collections iterate in stable order, and
//! the engine ([`engine`]) emits identical per-send records for identical
//! configurations.
//!
//! The crate is `no_std` (with `alloc`); file IO, CLI, and experiment
//! orchestration live in the companion `healnet-cli` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod adversary;
pub mod crypto;
pub mod engine;
pub mod graph;
pub mod math;
pub mod membership;
pub mod oracles;
pub mod protocol;
pub mod rng;
