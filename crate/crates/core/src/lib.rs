//! Learning engine for hierarchical structured communication in multi-agent
//! Q-learning.
//!
//! Agents elect group leaders every step with a weight-driven cluster
//! protocol, exchange messages over the resulting two-level graph with a
//! small message-passing network, and learn both the leader weights and
//! their actions with deep Q-learning. Everything here is `no_std` with
//! `alloc`; file formats, configs and the command line live in the `lsc`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod numcore;
pub mod env;
pub mod topology;
pub mod hcomm;
pub mod learner;
pub mod harness;
