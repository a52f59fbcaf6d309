//! Per-period effect estimators over learner records.
//!
//! All contrasts marginalize over the arms held in non-focal periods: the
//! estimand "effect of holding an arm of group G in period w" averages over
//! whatever the design assigned elsewhere, which sequential randomization
//! makes independent of the focal assignment.

use std::collections::BTreeSet;

use crate::cohort::{Country, LearnerRecord};
use crate::error::{Error, Result};
use crate::sequence::{select, ArmGroup, GroupName, SequencePattern};
use crate::stats::two_sided_p;

use super::logistic::{contrast_matrix, fit_logistic};
use super::{
    wald_half_width, EffectEstimate, EstimateFlags, ProportionEstimate, EFFECT_CONFIDENCE,
    MODERATE_P_THRESHOLD,
};

/// Proportion of pattern-matched learners active in `outcome_period`, with a
/// Wald interval at `confidence`. Errors (E201) when nothing matches, the
/// outcome period is out of range, or the pattern length disagrees with the
/// records.
pub fn sequence_return_proportion(
    records: &[LearnerRecord],
    pattern: &SequencePattern,
    outcome_period: u32,
    confidence: f64,
) -> Result<ProportionEstimate> {
    if !(0.0..1.0).contains(&confidence) || confidence <= 0.0 {
        return Err(Error::EstimatorPrecondition(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let matched = select(pattern, records)?;
    if matched.is_empty() {
        return Err(Error::EstimatorPrecondition(format!(
            "no learners match pattern {pattern}"
        )));
    }
    let mut active = 0usize;
    for rec in &matched {
        match rec.active_in(outcome_period) {
            Some(a) => active += a as usize,
            None => {
                return Err(Error::EstimatorPrecondition(format!(
                    "outcome period {outcome_period} outside 1..={}",
                    rec.activity.len()
                )))
            }
        }
    }
    let n = matched.len();
    let proportion = active as f64 / n as f64;
    let se = (proportion * (1.0 - proportion) / n as f64).sqrt();
    let hw = wald_half_width(se, confidence);
    Ok(ProportionEstimate {
        proportion,
        n,
        ci_low: (proportion - hw).max(0.0),
        ci_high: (proportion + hw).min(1.0),
        confidence,
    })
}

/// An effect estimate labelled with the treated group it contrasts against
/// the control group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEffect {
    pub group: GroupName,
    pub estimate: EffectEstimate,
}

fn check_period(records: &[LearnerRecord], period: u32) -> Result<u32> {
    let n_periods = records
        .first()
        .map(LearnerRecord::n_periods)
        .ok_or_else(|| Error::EstimatorPrecondition("no records supplied".into()))?;
    if period == 0 || period > n_periods {
        return Err(Error::EstimatorPrecondition(format!(
            "treatment period {period} outside 1..={n_periods}"
        )));
    }
    Ok(n_periods)
}

/// Unadjusted log-odds-ratio contrast for one (group, control) split of the
/// records: logistic regression of the outcome on an intercept and a
/// treated indicator.
fn contrast(
    records: &[&LearnerRecord],
    treat_period: u32,
    outcome_period: u32,
    group: &ArmGroup,
    control: &ArmGroup,
) -> Result<EffectEstimate> {
    let mut treated = Vec::new();
    let mut controls = Vec::new();
    for rec in records {
        let arm = rec.sequence.arm_at(treat_period).ok_or_else(|| {
            Error::EstimatorPrecondition(format!(
                "record {} has no arm at period {treat_period}",
                rec.profile.learner_id
            ))
        })?;
        let outcome = rec.active_in(outcome_period).ok_or_else(|| {
            Error::EstimatorPrecondition(format!(
                "record {} has no activity at period {outcome_period}",
                rec.profile.learner_id
            ))
        })?;
        if group.contains(arm) {
            treated.push(outcome);
        } else if control.contains(arm) {
            controls.push(outcome);
        }
    }
    if treated.is_empty() || controls.is_empty() {
        return Err(Error::EstimatorPrecondition(format!(
            "insufficient data for {} vs {} at period {treat_period}: {} treated, {} control",
            group.name,
            control.name,
            treated.len(),
            controls.len()
        )));
    }

    let (x, y) = contrast_matrix(&treated, &controls);
    let fit = fit_logistic(&x, &y)?;
    let log_odds_ratio = fit.coefficients[1];
    let std_error = fit.covariance[(1, 1)].sqrt();
    let p_value = two_sided_p(log_odds_ratio / std_error);
    let hw = wald_half_width(std_error, EFFECT_CONFIDENCE);
    Ok(EffectEstimate {
        log_odds_ratio,
        std_error,
        ci_low: log_odds_ratio - hw,
        ci_high: log_odds_ratio + hw,
        p_value,
        n_treated: treated.len(),
        n_control: controls.len(),
        flags: EstimateFlags {
            moderate_at_0_2: p_value < MODERATE_P_THRESHOLD,
            separation_detected: fit.separation || !fit.converged,
        },
    })
}

fn check_groups_against_control(groups: &[ArmGroup], control: &ArmGroup) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::EstimatorPrecondition("no treated groups supplied".into()));
    }
    for g in groups {
        if !g.is_disjoint(control) {
            return Err(Error::EstimatorPrecondition(format!(
                "group {} overlaps the control group {}",
                g.name, control.name
            )));
        }
        if g.members.is_empty() {
            return Err(Error::EstimatorPrecondition(format!("group {} is empty", g.name)));
        }
    }
    if control.members.is_empty() {
        return Err(Error::EstimatorPrecondition(format!(
            "control group {} is empty",
            control.name
        )));
    }
    Ok(())
}

/// Average effect of holding an arm of each group in `period` on activity in
/// the following period, versus holding a control arm, marginalizing over
/// every other period's assignment.
pub fn average_treatment_effect(
    records: &[LearnerRecord],
    period: u32,
    groups: &[ArmGroup],
    control: &ArmGroup,
) -> Result<Vec<GroupEffect>> {
    let n_periods = check_period(records, period)?;
    check_groups_against_control(groups, control)?;
    let outcome_period = period + 1;
    debug_assert!(outcome_period <= n_periods + 1);
    let all: Vec<&LearnerRecord> = records.iter().collect();
    groups
        .iter()
        .map(|g| {
            Ok(GroupEffect {
                group: g.name.clone(),
                estimate: contrast(&all, period, outcome_period, g, control)?,
            })
        })
        .collect()
}

/// Effect of the arm held in `treat_period` on activity in a later
/// `outcome_period` strictly past the direct window (`treat_period + 1`),
/// marginalizing over the intermediate assignments.
pub fn delayed_effect(
    records: &[LearnerRecord],
    treat_period: u32,
    outcome_period: u32,
    groups: &[ArmGroup],
    control: &ArmGroup,
) -> Result<Vec<GroupEffect>> {
    let n_periods = check_period(records, treat_period)?;
    if outcome_period == treat_period + 1 {
        return Err(Error::EstimatorPrecondition(format!(
            "outcome period {outcome_period} is the direct window of period {treat_period}; use average_treatment_effect"
        )));
    }
    if outcome_period <= treat_period || outcome_period > n_periods + 1 {
        return Err(Error::EstimatorPrecondition(format!(
            "outcome period {outcome_period} must lie in {}..={}",
            treat_period + 2,
            n_periods + 1
        )));
    }
    check_groups_against_control(groups, control)?;
    let all: Vec<&LearnerRecord> = records.iter().collect();
    groups
        .iter()
        .map(|g| {
            Ok(GroupEffect {
                group: g.name.clone(),
                estimate: contrast(&all, treat_period, outcome_period, g, control)?,
            })
        })
        .collect()
}

/// How to stratify learners when probing effect moderation. All referenced
/// measurements must be complete strictly before the focal period's
/// randomization (which happens at the end of the focal period).
#[derive(Debug, Clone, PartialEq)]
pub enum ModeratorSpec {
    /// Activity during the focal period itself (the builtin moderator): the
    /// measurement window closes exactly when the randomization happens.
    PriorActivity,
    /// Activity during an explicit period, which must not exceed the focal
    /// period.
    Activity { measured_period: u32 },
    /// Restrict to learners holding an arm of `group` at `email_period` and
    /// stratify by activity at `response_period` (their response to it).
    Responder {
        email_period: u32,
        group: ArmGroup,
        response_period: u32,
    },
    /// Stratify by learner country (a baseline covariate).
    Country,
}

impl ModeratorSpec {
    /// Validate against the focal randomization period. Post-randomization
    /// references are E202; incoherent specs are E201.
    pub fn check_admissible(&self, focal_period: u32) -> Result<()> {
        match self {
            ModeratorSpec::PriorActivity | ModeratorSpec::Country => Ok(()),
            ModeratorSpec::Activity { measured_period } => {
                if *measured_period == 0 {
                    return Err(Error::EstimatorPrecondition(
                        "moderator period must be at least 1".into(),
                    ));
                }
                if *measured_period > focal_period {
                    return Err(Error::PostRandomizationModerator(format!(
                        "activity in period {measured_period} is measured after the period-{focal_period} randomization"
                    )));
                }
                Ok(())
            }
            ModeratorSpec::Responder {
                email_period,
                response_period,
                ..
            } => {
                if *email_period == 0 {
                    return Err(Error::EstimatorPrecondition(
                        "responder email period must be at least 1".into(),
                    ));
                }
                if *response_period <= *email_period {
                    return Err(Error::EstimatorPrecondition(format!(
                        "response period {response_period} must come after the email period {email_period}"
                    )));
                }
                if *email_period >= focal_period {
                    return Err(Error::PostRandomizationModerator(format!(
                        "the arm of period {email_period} is not assigned before the period-{focal_period} randomization"
                    )));
                }
                if *response_period > focal_period {
                    return Err(Error::PostRandomizationModerator(format!(
                        "activity in period {response_period} is measured after the period-{focal_period} randomization"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// One stratum's effect estimate for one treated group.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumEffect {
    pub group: GroupName,
    pub stratum: String,
    pub estimate: EffectEstimate,
}

/// Per-stratum treatment effects at `period`, for learners stratified by a
/// pre-randomization moderator. Strata with no learners are skipped; strata
/// with learners but an empty treated or control cell are an error.
pub fn moderator_effect(
    records: &[LearnerRecord],
    period: u32,
    moderator: &ModeratorSpec,
    groups: &[ArmGroup],
    control: &ArmGroup,
) -> Result<Vec<StratumEffect>> {
    check_period(records, period)?;
    moderator.check_admissible(period)?;
    check_groups_against_control(groups, control)?;
    let outcome_period = period + 1;

    // (stratum label, members) in a fixed reporting order.
    let strata: Vec<(String, Vec<&LearnerRecord>)> = match moderator {
        ModeratorSpec::PriorActivity | ModeratorSpec::Activity { .. } => {
            let measured = match moderator {
                ModeratorSpec::Activity { measured_period } => *measured_period,
                _ => period,
            };
            let mut active = Vec::new();
            let mut inactive = Vec::new();
            for rec in records {
                match rec.active_in(measured) {
                    Some(true) => active.push(rec),
                    Some(false) => inactive.push(rec),
                    None => {
                        return Err(Error::EstimatorPrecondition(format!(
                            "record {} has no activity at period {measured}",
                            rec.profile.learner_id
                        )))
                    }
                }
            }
            vec![("active".to_string(), active), ("inactive".to_string(), inactive)]
        }
        ModeratorSpec::Responder {
            email_period,
            group,
            response_period,
        } => {
            let mut responder = Vec::new();
            let mut non_responder = Vec::new();
            for rec in records {
                let arm = rec.sequence.arm_at(*email_period).ok_or_else(|| {
                    Error::EstimatorPrecondition(format!(
                        "record {} has no arm at period {email_period}",
                        rec.profile.learner_id
                    ))
                })?;
                if !group.contains(arm) {
                    continue;
                }
                match rec.active_in(*response_period) {
                    Some(true) => responder.push(rec),
                    Some(false) => non_responder.push(rec),
                    None => {
                        return Err(Error::EstimatorPrecondition(format!(
                            "record {} has no activity at period {response_period}",
                            rec.profile.learner_id
                        )))
                    }
                }
            }
            vec![
                ("responder".to_string(), responder),
                ("non-responder".to_string(), non_responder),
            ]
        }
        ModeratorSpec::Country => {
            let present: BTreeSet<Country> =
                records.iter().map(|r| r.profile.country).collect();
            Country::ALL
                .iter()
                .filter(|c| present.contains(*c))
                .map(|c| {
                    (
                        c.code().to_string(),
                        records.iter().filter(|r| r.profile.country == *c).collect(),
                    )
                })
                .collect()
        }
    };

    let mut out = Vec::new();
    for g in groups {
        for (label, members) in &strata {
            if members.is_empty() {
                continue;
            }
            let estimate = contrast(members, period, outcome_period, g, control)
                .map_err(|e| match e {
                    Error::EstimatorPrecondition(msg) => Error::EstimatorPrecondition(format!(
                        "stratum {label:?}: {msg}"
                    )),
                    other => other,
                })?;
            out.push(StratumEffect {
                group: g.name.clone(),
                stratum: label.clone(),
                estimate,
            });
        }
    }
    Ok(out)
}
