//! Monte-Carlo power for planned comparisons under a behavior model.
//!
//! Each replication simulates a fresh cohort from a child seed, runs the
//! requested estimator, and tests at the given level. Replications where the
//! estimator fails (empty cells, separation, non-convergence) are counted as
//! failures and excluded from the power denominator rather than silently
//! treated as non-rejections.

use rayon::prelude::*;

use crate::cohort::Country;
use crate::design::TrialDesign;
use crate::error::{Error, Result};
use crate::seed::SeedSpec;
use crate::sequence::{ArmGroup, GroupName};
use crate::simulate::{simulate_cohort, synthetic_profiles, BehaviorModel};
use crate::stats::two_sided_p;

use super::effects::{
    average_treatment_effect, delayed_effect, moderator_effect, ModeratorSpec,
};
use super::EffectEstimate;

/// Which contrast to test in each replication. Group names refer to the
/// groups declared by the behavior model.
#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonSpec {
    /// Effect of `group` vs `control` held in `period` on next-period
    /// activity.
    DirectEffect {
        period: u32,
        group: GroupName,
        control: GroupName,
    },
    /// Effect of the period-`treat_period` arm on activity in a later
    /// `outcome_period` strictly past the direct window.
    DelayedEffect {
        treat_period: u32,
        outcome_period: u32,
        group: GroupName,
        control: GroupName,
    },
    /// Difference between the two strata of a binary moderator in the
    /// `group` vs `control` effect at `period`, tested with a two-sample z
    /// statistic on the stratum log odds ratios.
    ModerationGap {
        period: u32,
        moderator: ModeratorSpec,
        group: GroupName,
        control: GroupName,
    },
}

/// Cohort to draw in every replication.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n: usize,
    pub country_mix: Vec<(Country, f64)>,
}

impl CohortSpec {
    /// `n` learners, country left unspecified.
    pub fn new(n: usize) -> Self {
        CohortSpec {
            n,
            country_mix: vec![(Country::Other, 1.0)],
        }
    }

    pub fn with_mix(n: usize, country_mix: Vec<(Country, f64)>) -> Self {
        CohortSpec { n, country_mix }
    }
}

/// Monte-Carlo power estimate with its own sampling uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    /// Rejection rate among replications whose estimator succeeded.
    pub power: f64,
    /// Binomial standard error of `power` given the effective replications.
    pub mc_se: f64,
    /// Replications requested.
    pub replications: usize,
    /// Replications that rejected the null at the given level.
    pub rejections: usize,
    /// Replications excluded because the estimator failed.
    pub failures: usize,
}

fn resolve_group(model: &BehaviorModel, name: &GroupName) -> Result<ArmGroup> {
    model
        .groups
        .iter()
        .find(|g| g.name == *name)
        .cloned()
        .ok_or_else(|| {
            Error::EstimatorPrecondition(format!(
                "group {name} is not declared by the behavior model"
            ))
        })
}

fn check_comparison(design: &TrialDesign, comparison: &ComparisonSpec) -> Result<()> {
    let in_range = |p: u32, what: &str| {
        if p == 0 || p > design.n_periods {
            Err(Error::EstimatorPrecondition(format!(
                "{what} {p} outside 1..={}",
                design.n_periods
            )))
        } else {
            Ok(())
        }
    };
    match comparison {
        ComparisonSpec::DirectEffect { period, .. } => in_range(*period, "comparison period"),
        ComparisonSpec::DelayedEffect {
            treat_period,
            outcome_period,
            ..
        } => {
            in_range(*treat_period, "treatment period")?;
            if *outcome_period < treat_period + 2 || *outcome_period > design.n_periods + 1 {
                return Err(Error::EstimatorPrecondition(format!(
                    "delayed outcome period {outcome_period} must lie in {}..={}",
                    treat_period + 2,
                    design.n_periods + 1
                )));
            }
            Ok(())
        }
        ComparisonSpec::ModerationGap {
            period, moderator, ..
        } => {
            in_range(*period, "comparison period")?;
            moderator.check_admissible(*period)
        }
    }
}

enum RepOutcome {
    Reject,
    Accept,
    Failure,
}

fn usable(estimate: &EffectEstimate) -> bool {
    !estimate.flags.separation_detected && estimate.std_error.is_finite()
}

fn run_replication(
    design: &TrialDesign,
    model: &BehaviorModel,
    comparison: &ComparisonSpec,
    group: &ArmGroup,
    control: &ArmGroup,
    profiles: &[crate::cohort::LearnerProfile],
    seed: &SeedSpec,
    alpha: f64,
) -> RepOutcome {
    let cohort = match simulate_cohort(design, profiles, model, seed) {
        Ok(c) => c,
        Err(_) => return RepOutcome::Failure,
    };
    let groups = std::slice::from_ref(group);
    let p_value = match comparison {
        ComparisonSpec::DirectEffect { period, .. } => {
            match average_treatment_effect(&cohort.records, *period, groups, control) {
                Ok(effects) if usable(&effects[0].estimate) => effects[0].estimate.p_value,
                _ => return RepOutcome::Failure,
            }
        }
        ComparisonSpec::DelayedEffect {
            treat_period,
            outcome_period,
            ..
        } => {
            match delayed_effect(
                &cohort.records,
                *treat_period,
                *outcome_period,
                groups,
                control,
            ) {
                Ok(effects) if usable(&effects[0].estimate) => effects[0].estimate.p_value,
                _ => return RepOutcome::Failure,
            }
        }
        ComparisonSpec::ModerationGap {
            period, moderator, ..
        } => {
            let strata =
                match moderator_effect(&cohort.records, *period, moderator, groups, control) {
                    Ok(s) => s,
                    Err(_) => return RepOutcome::Failure,
                };
            if strata.len() != 2 || !strata.iter().all(|s| usable(&s.estimate)) {
                return RepOutcome::Failure;
            }
            let a = &strata[0].estimate;
            let b = &strata[1].estimate;
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            if se <= 0.0 {
                return RepOutcome::Failure;
            }
            two_sided_p((a.log_odds_ratio - b.log_odds_ratio) / se)
        }
    };
    if p_value < alpha {
        RepOutcome::Reject
    } else {
        RepOutcome::Accept
    }
}

/// Estimate the power of `comparison` at level `alpha` by simulating
/// `replications` cohorts from independent child seeds. The reduction over
/// replications is a plain count, so the result does not depend on worker
/// scheduling.
pub fn power_monte_carlo(
    design: &TrialDesign,
    model: &BehaviorModel,
    comparison: &ComparisonSpec,
    cohort: &CohortSpec,
    alpha: f64,
    replications: usize,
    seed: &SeedSpec,
) -> Result<PowerEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::EstimatorPrecondition(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if replications < 100 {
        return Err(Error::EstimatorPrecondition(format!(
            "{replications} replications give an unusable Monte-Carlo standard error; use at least 100"
        )));
    }
    if cohort.n < 2 {
        return Err(Error::EstimatorPrecondition(format!(
            "cohort size {} is too small to estimate a contrast",
            cohort.n
        )));
    }
    design.ensure_valid()?;
    crate::simulate::validate_model(design, model)?;
    check_comparison(design, comparison)?;
    let (group_name, control_name) = match comparison {
        ComparisonSpec::DirectEffect { group, control, .. }
        | ComparisonSpec::DelayedEffect { group, control, .. }
        | ComparisonSpec::ModerationGap { group, control, .. } => (group, control),
    };
    let group = resolve_group(model, group_name)?;
    let control = resolve_group(model, control_name)?;
    if !group.is_disjoint(&control) {
        return Err(Error::EstimatorPrecondition(format!(
            "group {} overlaps the control group {}",
            group.name, control.name
        )));
    }
    let profiles = synthetic_profiles(cohort.n, &cohort.country_mix)?;

    let (rejections, failures) = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let child = seed.replication(r);
            match run_replication(
                design, model, comparison, &group, &control, &profiles, &child, alpha,
            ) {
                RepOutcome::Reject => (1usize, 0usize),
                RepOutcome::Accept => (0, 0),
                RepOutcome::Failure => (0, 1),
            }
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));

    let effective = replications - failures;
    if effective == 0 {
        return Err(Error::EstimatorPrecondition(format!(
            "all {replications} replications failed; the model or cohort cannot support this comparison"
        )));
    }
    let power = rejections as f64 / effective as f64;
    let mc_se = (power * (1.0 - power) / effective as f64).sqrt();
    Ok(PowerEstimate {
        power,
        mc_se,
        replications,
        rejections,
        failures,
    })
}
