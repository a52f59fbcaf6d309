//! Statistical behavior on simulated cohorts at fixed seeds: interval
//! scaling with n, selection counts against their binomial expectations,
//! null coverage, and cross-estimator consistency.

use std::sync::OnceLock;

use srt_core::cohort::{Country, LearnerRecord};
use srt_core::design::{percs_design, TrialDesign};
use srt_core::estimate::{
    average_treatment_effect, moderator_effect, sequence_return_proportion, ModeratorSpec,
};
use srt_core::seed::SeedSpec;
use srt_core::sequence::{builtin_group, resolve_group, GroupName, SequencePattern, SlotPredicate};
use srt_core::simulate::{null_model, percs_like_model, simulate_cohort, synthetic_profiles};

fn design() -> &'static TrialDesign {
    static DESIGN: OnceLock<TrialDesign> = OnceLock::new();
    DESIGN.get_or_init(percs_design)
}

fn percs_mix() -> Vec<(Country, f64)> {
    vec![
        (Country::India, 0.4),
        (Country::UnitedStates, 0.35),
        (Country::Other, 0.25),
    ]
}

fn simulate_null(n: usize, seed: u64) -> Vec<LearnerRecord> {
    let model = null_model(design()).unwrap();
    let profiles = synthetic_profiles(n, &[(Country::Other, 1.0)]).unwrap();
    simulate_cohort(design(), &profiles, &model, &SeedSpec::new(seed))
        .unwrap()
        .records
}

/// The 20,000-learner behavioral cohort shared by the heavier checks.
fn big_cohort() -> &'static [LearnerRecord] {
    static COHORT: OnceLock<Vec<LearnerRecord>> = OnceLock::new();
    COHORT.get_or_init(|| {
        let model = percs_like_model(design()).unwrap();
        let profiles = synthetic_profiles(20_000, &percs_mix()).unwrap();
        simulate_cohort(design(), &profiles, &model, &SeedSpec::new(31)).unwrap().records
    })
}

#[test]
fn ci_width_halves_when_n_quadruples() {
    let e1 = vec![resolve_group(design(), "E1").unwrap()];
    let e0 = resolve_group(design(), "E0").unwrap();

    let small = simulate_null(2_000, 7);
    let large = simulate_null(8_000, 7);
    let narrow = |records: &[LearnerRecord]| {
        let effects = average_treatment_effect(records, 1, &e1, &e0).unwrap();
        let est = &effects[0].estimate;
        est.ci_high - est.ci_low
    };
    let ratio = narrow(&small) / narrow(&large);
    assert!(
        (ratio - 2.0).abs() < 0.2,
        "width ratio for 4x the data should be ~2, got {ratio:.3}"
    );
}

#[test]
fn email_history_patterns_match_their_binomial_expectations() {
    let records = big_cohort();
    let n = records.len() as f64;
    let e0 = builtin_group(design(), &GroupName::E0).unwrap();
    let e1 = builtin_group(design(), &GroupName::E1).unwrap();

    let mut all_e0_width = None;
    let mut all_e1_width = None;
    for bits in 0..8u32 {
        let slots: Vec<SlotPredicate> = (0..3)
            .map(|w| {
                if bits >> w & 1 == 0 {
                    SlotPredicate::Group(e0.clone())
                } else {
                    SlotPredicate::Group(e1.clone())
                }
            })
            .collect();
        let pattern = SequencePattern::new(slots);
        let est = sequence_return_proportion(records, &pattern, 4, 0.95).unwrap();

        // Matched count within 5 sigma of its binomial expectation.
        let p: f64 = (0..3)
            .map(|w| if bits >> w & 1 == 0 { 1.0 / 7.0 } else { 6.0 / 7.0 })
            .product();
        let expected = n * p;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let diff = (est.n as f64 - expected).abs();
        assert!(
            diff < 5.0 * sigma,
            "pattern {pattern}: matched {} vs expected {expected:.1} (5 sigma = {:.1})",
            est.n,
            5.0 * sigma
        );

        let width = est.ci_high - est.ci_low;
        if bits == 0 {
            all_e0_width = Some(width);
        }
        if bits == 7 {
            all_e1_width = Some(width);
        }
    }

    // The rarest history (never emailed) has by far the least data, so its
    // interval must be wider than the commonest (always emailed).
    assert!(all_e0_width.unwrap() > all_e1_width.unwrap());
}

#[test]
fn null_effects_stay_within_three_standard_errors() {
    let records = simulate_null(6_000, 99);
    let groups = vec![
        resolve_group(design(), "P0").unwrap(),
        resolve_group(design(), "P1").unwrap(),
        resolve_group(design(), "P2").unwrap(),
    ];
    let control = resolve_group(design(), "E0").unwrap();
    for period in 1..=3 {
        let effects = average_treatment_effect(&records, period, &groups, &control).unwrap();
        for e in effects {
            assert!(
                e.estimate.log_odds_ratio.abs() < 3.0 * e.estimate.std_error,
                "period {period} group {} drifted: {} (se {})",
                e.group.as_str(),
                e.estimate.log_odds_ratio,
                e.estimate.std_error
            );
        }
    }
}

#[test]
fn moderator_strata_partition_the_effect_cells() {
    let records = big_cohort();
    let groups = vec![
        resolve_group(design(), "P0").unwrap(),
        resolve_group(design(), "P1").unwrap(),
        resolve_group(design(), "P2").unwrap(),
    ];
    let control = resolve_group(design(), "E0").unwrap();

    let overall = average_treatment_effect(records, 2, &groups, &control).unwrap();
    let strata =
        moderator_effect(records, 2, &ModeratorSpec::PriorActivity, &groups, &control).unwrap();
    assert_eq!(strata.len(), 6);

    for o in &overall {
        let treated: usize = strata
            .iter()
            .filter(|s| s.group == o.group)
            .map(|s| s.estimate.n_treated)
            .sum();
        let controls: usize = strata
            .iter()
            .filter(|s| s.group == o.group)
            .map(|s| s.estimate.n_control)
            .sum();
        assert_eq!(treated, o.estimate.n_treated, "{} treated split", o.group.as_str());
        assert_eq!(controls, o.estimate.n_control, "{} control split", o.group.as_str());
    }
}

#[test]
fn responder_moderator_restricts_to_the_email_group() {
    let records = big_cohort();
    let groups = vec![
        resolve_group(design(), "P0").unwrap(),
        resolve_group(design(), "P1").unwrap(),
        resolve_group(design(), "P2").unwrap(),
    ];
    let control = resolve_group(design(), "E0").unwrap();
    let spec = ModeratorSpec::Responder {
        email_period: 1,
        group: builtin_group(design(), &GroupName::E1).unwrap(),
        response_period: 2,
    };
    let strata = moderator_effect(records, 3, &spec, &groups, &control).unwrap();
    assert_eq!(strata.len(), 6);
    for s in &strata {
        assert!(
            s.stratum == "responder" || s.stratum == "non-responder",
            "unexpected stratum {}",
            s.stratum
        );
    }

    // Everyone in the analysis held an email arm at period 1 by construction.
    let holders = records
        .iter()
        .filter(|r| {
            r.sequence.arms.first().map(|a| a.as_str() != "T1").unwrap_or(false)
        })
        .count();
    let used: usize = strata
        .iter()
        .map(|s| s.estimate.n_treated + s.estimate.n_control)
        .sum();
    assert!(used <= 2 * holders, "strata cannot exceed email holders");
}

#[test]
fn sequence_proportion_agrees_with_a_manual_count() {
    let records = big_cohort();
    let pattern = SequencePattern::new(vec![
        SlotPredicate::Arm(srt_core::design::ArmId::new("T4")),
        SlotPredicate::Any,
        SlotPredicate::Any,
    ]);
    let est = sequence_return_proportion(records, &pattern, 2, 0.95).unwrap();

    let matched: Vec<&LearnerRecord> = records
        .iter()
        .filter(|r| r.sequence.arms[0].as_str() == "T4")
        .collect();
    let active = matched.iter().filter(|r| r.active_in(2).unwrap()).count();
    assert_eq!(est.n, matched.len());
    assert_eq!(est.proportion, active as f64 / matched.len() as f64);
}
