//! Fluid-model congestion-control laboratory.
//!
//! This crate simulates the classical fluid (delay-differential) models of
//! congestion control — dual and fair-dual price dynamics, RCP link-rate
//! dynamics and TCP window dynamics — computes alpha-fair, proportionally
//! fair, TCP-fair and max-min rate allocations on multi-link networks, and
//! analyzes local stability and limit-cycle amplitudes around the pi/2
//! delay-stability threshold.
//!
//! Units are packets/second for rates and capacities and seconds for
//! delays, everywhere.
//!
//! The crate is organized around five modules:
//!
//! - [`topology`]: links, routes, delays and the incidence structure.
//! - [`fairness`]: demand functions, alpha-fair and max-min allocation,
//!   explicit-rate feedback aggregation.
//! - [`dde`]: fixed-step integration of delay differential equations with
//!   dense-output history, and limit-cycle diagnostics.
//! - [`models`]: the dual/fair-dual, RCP and TCP fluid models as
//!   [`dde::DelayedSystem`] instances, with their equilibria.
//! - [`stability`]: linearized gains, the pi/2 margin, Hopf-point location
//!   by parameter sweep, and the amplitude-versus-alpha experiment.

pub mod dde;
pub mod fairness;
pub mod models;
pub mod stability;
pub mod topology;
