//! Task-success probability for a status-driven offloading loop: closed
//! forms and bounds, a discrete-event simulator that checks them, and a
//! one-factor-at-a-time sweep harness.

pub mod analytic;
pub mod simulator;
pub mod format;
pub mod oracle;
pub mod experiments;
pub mod plot;
pub mod acceptance;
pub mod cli;
