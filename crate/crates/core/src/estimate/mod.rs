//! Effect estimation: logistic fits, return-proportion and log-odds-ratio
//! estimators, moderation analysis and Monte-Carlo power.
//!
//! All intervals are Wald intervals and all p-values are two-sided normal,
//! uncorrected for multiple comparisons (reports carry the comparison count
//! so readers can correct as they see fit). Effect confidence intervals are
//! fixed at 95%.

mod effects;
mod logistic;
mod power;

pub use effects::{
    average_treatment_effect, delayed_effect, moderator_effect, sequence_return_proportion,
    GroupEffect, ModeratorSpec, StratumEffect,
};
pub use logistic::{fit_logistic, FitResult};
pub use power::{power_monte_carlo, CohortSpec, ComparisonSpec, PowerEstimate};

use serde::{Deserialize, Serialize};

use crate::stats::normal_quantile;

/// Confidence level of every effect interval.
pub const EFFECT_CONFIDENCE: f64 = 0.95;

/// Threshold under which a p-value earns the moderate-evidence flag.
pub const MODERATE_P_THRESHOLD: f64 = 0.2;

/// Advisory flags attached to an effect estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateFlags {
    /// p < 0.2: worth a look under a lenient screening threshold.
    pub moderate_at_0_2: bool,
    /// The underlying fit hit a separation boundary; the point estimate and
    /// standard error are not trustworthy.
    pub separation_detected: bool,
}

impl EstimateFlags {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.moderate_at_0_2 {
            out.push("moderate-at-0.2");
        }
        if self.separation_detected {
            out.push("separation-detected");
        }
        out
    }
}

/// A log odds ratio with its Wald 95% interval and two-sided p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub log_odds_ratio: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub flags: EstimateFlags,
}

/// A proportion with its Wald interval at the stated confidence level,
/// clipped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub proportion: f64,
    pub n: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
}

pub(crate) fn wald_half_width(se: f64, confidence: f64) -> f64 {
    normal_quantile(0.5 + confidence / 2.0) * se
}
