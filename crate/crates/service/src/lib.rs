//! Command line and HTTP front ends for the traffic-rule MTL workbench.
//!
//! The HTTP service keeps a queue of translations awaiting human review
//! ([`store`]) and exposes translation, validation, monitoring and
//! evaluation as JSON routes ([`api`]). The command line ([`cli`]) offers
//! the same operations plus `serve`.

pub mod api;
pub mod cli;
pub mod store;
pub mod workflow;
