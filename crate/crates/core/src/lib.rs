//! Sequential randomized trials over recurring decision points: design
//! validation, seeded assignment, behavior simulation, effect estimation,
//! and Monte-Carlo power.
//!
//! The central object is a [`design::TrialDesign`]: a set of treatment arms
//! and a randomization scheme applied at every decision point (period), so a
//! learner's treatment is a per-period sequence rather than a single draw.
//! Assignment ([`assign`]) is a pure function of a master seed, so trials
//! replay exactly; simulation ([`simulate`]) generates cohort behavior under
//! a configurable logit model; estimation ([`estimate`]) contrasts arm
//! groups period by period, guards against post-randomization moderators,
//! and bootstraps nothing it can get in closed form; [`estimate::power_monte_carlo`]
//! sizes future trials by replaying the whole pipeline. File formats live in
//! [`io`].

pub mod assign;
pub mod cohort;
pub mod design;
pub mod error;
pub mod estimate;
pub mod io;
pub mod seed;
pub mod sequence;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
