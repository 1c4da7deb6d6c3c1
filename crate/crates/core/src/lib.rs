//! Robust Hellinger-based pseudo-posteriors over finite density nets.
//!
//! Classical Bayes posteriors weight candidates by their likelihood, which is
//! fragile: a single wild observation can multiply a candidate's weight by an
//! arbitrarily extreme factor. This crate replaces the log-likelihood with a
//! bounded comparison statistic built from the function
//! `psi(x) = (x - 1)/(x + 1)`, producing pseudo-posteriors that concentrate
//! near the truth in Hellinger distance even under contamination and model
//! misspecification.
//!
//! Module layout, bottom-up:
//!
//! - [`kernel`]: the bounded score `psi`, its integrated form `phi`,
//!   Hellinger distances for discrete vectors and via quadrature, and the
//!   numerical-constant set used by every bound.
//! - [`model`]: density families, finite nets of candidates, priors over
//!   nets, and seeded data generation with optional contamination.
//! - [`posterior`]: the pseudo-posterior itself, classical likelihood
//!   posteriors for comparison, and penalized variants over collections of
//!   nets.
//! - [`bounds`]: computable quantities in the risk bound (the fluctuation
//!   radius, the prior concentration radius, metric-dimension checks, and the
//!   critical radius combining them).
//! - [`estimators`]: point estimators derived from a pseudo-posterior and
//!   Monte Carlo risk evaluation.
//! - [`experiment`]: configuration-driven experiment runner backing the CLI.

pub mod bounds;
pub mod estimators;
pub mod experiment;
pub mod kernel;
pub mod model;
pub mod posterior;
