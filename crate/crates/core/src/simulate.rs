//! Synthetic learner behavior.
//!
//! A [`BehaviorModel`] is an additive model on the log-odds scale for binary
//! period activity ("any click during the period"). Period-1 activity is
//! baseline only (nothing has been assigned yet); the outcome of the arm held
//! in period `w` is activity in period `w + 1`, so a trial with `n` periods
//! simulates activity for `n + 1`. The contributions to the period-`p` logit
//! (`p >= 2`, writing `w = p - 1` for the arm that just acted) are:
//!
//! * `baseline_logit[p]` (country-adjustable; may be the `-inf` sentinel),
//! * `arm_effect[w, group(arm_w)]`,
//! * `moderation[w, group(arm_w), active_in_w]`, the treatment-effect
//!   moderation by the activity observed in the week the arm was assigned,
//! * `delayed_effect[src, p, group(arm_src)]` for every earlier period `src`
//!   whose declared delayed effect targets `p` (targets skip the direct
//!   outcome window, i.e. `p > src + 1`).
//!
//! Effects are keyed by arm group; the model's groups must partition the
//! design's arms and the control group's effects are identically zero, making
//! it the reference category. Effect values carry an optional per-country
//! refinement so models can give e.g. Indian learners different arm effects.

use std::collections::{BTreeMap, BTreeSet};

use crate::assign::{assign_point, AssignmentRecord, AssignmentWarning, LearnerHistory};
use crate::cohort::{Country, LearnerProfile, LearnerRecord};
use crate::design::{ArmId, TreatmentSequence, TrialDesign};
use crate::error::{Error, Result};
use crate::seed::{SeedSpec, StreamDomain};
use crate::sequence::{builtin_group, partition_check, ArmGroup, GroupName};
use crate::stats::sigmoid;

/// A log-odds increment with an optional per-country adjustment:
/// `value(c) = base + by_country[c]` (missing country = no adjustment).
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub base: f64,
    pub by_country: BTreeMap<Country, f64>,
}

impl Effect {
    pub fn zero() -> Self {
        Effect::constant(0.0)
    }

    pub fn constant(base: f64) -> Self {
        Effect {
            base,
            by_country: BTreeMap::new(),
        }
    }

    pub fn with_country(mut self, country: Country, adjustment: f64) -> Self {
        self.by_country.insert(country, adjustment);
        self
    }

    pub fn value(&self, country: Country) -> f64 {
        self.base + self.by_country.get(&country).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.base == 0.0 && self.by_country.values().all(|v| *v == 0.0)
    }

    fn all_finite(&self) -> bool {
        self.base.is_finite() && self.by_country.values().all(|v| v.is_finite())
    }

    /// Finite or the probability-zero sentinel (for baselines).
    fn finite_or_neg_inf(&self) -> bool {
        (self.base.is_finite() || self.base == f64::NEG_INFINITY)
            && self.by_country.values().all(|v| v.is_finite())
    }
}

impl Default for Effect {
    fn default() -> Self {
        Effect::zero()
    }
}

/// Generative model for cohort behavior under a design. See the module docs
/// for the logit decomposition. Build one with [`zero_model`] /
/// [`null_model`] / [`percs_like_model`] and adjust with the `with_*`
/// methods, or load one from JSON via the io module.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorModel {
    /// Partition of the design's arms used to key every effect table.
    pub groups: Vec<ArmGroup>,
    /// Reference group; its effects must be identically zero.
    pub control: GroupName,
    /// Baseline logit per period (1..=n_periods+1); missing periods are 0
    /// (probability one half). `-inf` means probability zero.
    pub baseline_logit: BTreeMap<u32, Effect>,
    /// Direct effect of holding an arm of a group in a period, on the next
    /// period's activity. Must cover every (period, group) pair.
    pub arm_effect: BTreeMap<(u32, GroupName), Effect>,
    /// Treatment-effect moderation by activity in the assignment period,
    /// keyed (period, group, was_active). Missing entries are zero.
    pub moderation: BTreeMap<(u32, GroupName, bool), Effect>,
    /// Delayed effect of the arm held at `source` on activity in `target`,
    /// keyed (source, target, group) with `target > source + 1`. Missing
    /// entries are zero.
    pub delayed_effect: BTreeMap<(u32, u32, GroupName), Effect>,
}

impl BehaviorModel {
    pub fn baseline(&self, period: u32, country: Country) -> f64 {
        self.baseline_logit
            .get(&period)
            .map_or(0.0, |e| e.value(country))
    }

    pub fn with_baseline(mut self, period: u32, effect: Effect) -> Self {
        self.baseline_logit.insert(period, effect);
        self
    }

    pub fn with_arm_effect(mut self, period: u32, group: GroupName, effect: Effect) -> Self {
        self.arm_effect.insert((period, group), effect);
        self
    }

    pub fn with_moderation(
        mut self,
        period: u32,
        group: GroupName,
        was_active: bool,
        effect: Effect,
    ) -> Self {
        self.moderation.insert((period, group, was_active), effect);
        self
    }

    pub fn with_delayed_effect(
        mut self,
        source: u32,
        target: u32,
        group: GroupName,
        effect: Effect,
    ) -> Self {
        self.delayed_effect.insert((source, target, group), effect);
        self
    }

    pub fn group_of(&self, arm: &ArmId) -> Option<&GroupName> {
        self.groups
            .iter()
            .find(|g| g.contains(arm))
            .map(|g| &g.name)
    }
}

/// All-zero model over an explicit group partition. Every (period, group)
/// arm-effect pair is filled with zero so the coverage invariant holds.
pub fn zero_model(
    design: &TrialDesign,
    groups: Vec<ArmGroup>,
    control: GroupName,
) -> BehaviorModel {
    let mut arm_effect = BTreeMap::new();
    for period in 1..=design.n_periods {
        for g in &groups {
            arm_effect.insert((period, g.name.clone()), Effect::zero());
        }
    }
    BehaviorModel {
        groups,
        control,
        baseline_logit: BTreeMap::new(),
        arm_effect,
        moderation: BTreeMap::new(),
        delayed_effect: BTreeMap::new(),
    }
}

/// The group partition email models use: the no-email control plus the three
/// problem-content groups (which together cover every email arm).
pub fn email_factor_groups(design: &TrialDesign) -> Result<Vec<ArmGroup>> {
    Ok(vec![
        builtin_group(design, &GroupName::E0)?,
        builtin_group(design, &GroupName::P0)?,
        builtin_group(design, &GroupName::P1)?,
        builtin_group(design, &GroupName::P2)?,
    ])
}

/// Null model: one singleton group per arm, first control-ish arm as
/// reference, every effect zero, all baselines 0 (activity rate one half).
/// Works for any valid design.
pub fn null_model(design: &TrialDesign) -> Result<BehaviorModel> {
    let control_arm = design
        .control_arm()
        .ok_or_else(|| Error::InvalidDesign("design has no arms".into()))?;
    let groups: Vec<ArmGroup> = design
        .arms
        .iter()
        .map(|arm| {
            ArmGroup::new(
                GroupName::Custom(arm.id.as_str().to_string()),
                [arm.id.clone()],
            )
        })
        .collect();
    let control = GroupName::Custom(control_arm.id.as_str().to_string());
    Ok(zero_model(design, groups, control))
}

/// Synthetic model reproducing the qualitative behavior of the motivating
/// email study. Magnitudes are invented calibration values, chosen so the
/// signature patterns are unambiguous at cohort sizes around 20,000:
///
/// * engagement declines week over week, slightly lower for India;
/// * week-2/3 email effects are positive for India (no-problem largest) and
///   near zero or negative for the US;
/// * week-1 effects are moderated by week-1 activity in favor of active
///   learners (+0.25 vs -0.25), identically across email groups;
/// * week-3 moderation reverses (active -0.30, inactive +0.30) with a larger
///   gap for India, so inactive-learner effects end positive and active-
///   learner effects negative.
pub fn percs_like_model(design: &TrialDesign) -> Result<BehaviorModel> {
    use Country::{India, UnitedStates};
    let groups = email_factor_groups(design)?;
    let mut model = zero_model(design, groups, GroupName::E0);
    if design.n_periods != 3 {
        return Err(Error::ModelConfig(format!(
            "the builtin email model needs a 3-period design (got {})",
            design.n_periods
        )));
    }

    for (period, base) in [(1u32, -0.2), (2, -0.4), (3, -0.7), (4, -1.0)] {
        model = model.with_baseline(period, Effect::constant(base).with_country(India, -0.15));
    }

    let p_groups = [GroupName::P0, GroupName::P1, GroupName::P2];
    // (period, per-group (IN, US) adjustments)
    let arm_effects: [(u32, [(f64, f64); 3]); 3] = [
        (1, [(0.05, -0.05), (0.05, -0.05), (0.05, -0.05)]),
        (2, [(0.35, -0.05), (0.22, -0.08), (0.20, -0.06)]),
        (3, [(0.25, -0.06), (0.15, -0.08), (0.12, -0.15)]),
    ];
    for (period, per_group) in arm_effects {
        for (g, (in_adj, us_adj)) in p_groups.iter().zip(per_group) {
            model = model.with_arm_effect(
                period,
                g.clone(),
                Effect::constant(0.0)
                    .with_country(India, in_adj)
                    .with_country(UnitedStates, us_adj),
            );
        }
    }

    for g in &p_groups {
        model = model
            .with_moderation(1, g.clone(), true, Effect::constant(0.25))
            .with_moderation(1, g.clone(), false, Effect::constant(-0.25))
            .with_moderation(3, g.clone(), true, Effect::constant(-0.30).with_country(India, -0.15))
            .with_moderation(3, g.clone(), false, Effect::constant(0.30).with_country(India, 0.15));
    }
    Ok(model)
}

/// Check a model against a design: groups must partition the arms, the
/// control group must exist with all-zero effects, the arm-effect table must
/// cover every (period, group) pair, every increment must be finite (the
/// baseline may be -inf), and table keys must stay inside the design's
/// period range.
pub fn validate_model(design: &TrialDesign, model: &BehaviorModel) -> Result<()> {
    design.ensure_valid()?;
    let bad = |msg: String| Err(Error::ModelConfig(msg));

    let mut names = BTreeSet::new();
    for g in &model.groups {
        if !names.insert(g.name.clone()) {
            return bad(format!("duplicate group name {}", g.name));
        }
    }
    let universe: BTreeSet<ArmId> = design.arms.iter().map(|a| a.id.clone()).collect();
    let partition = partition_check(&model.groups, &universe);
    if !partition.is_ok() {
        return bad(format!(
            "groups must partition the design's arms: {}",
            partition.violations[0].rule
        ));
    }
    if !names.contains(&model.control) {
        return bad(format!("control group {} is not declared", model.control));
    }

    let horizon = design.n_periods + 1;
    for (period, effect) in &model.baseline_logit {
        if *period == 0 || *period > horizon {
            return bad(format!("baseline period {period} outside 1..={horizon}"));
        }
        if !effect.finite_or_neg_inf() {
            return bad(format!("baseline at period {period} must be finite or -inf"));
        }
    }

    for period in 1..=design.n_periods {
        for g in &model.groups {
            match model.arm_effect.get(&(period, g.name.clone())) {
                None => {
                    return bad(format!(
                        "arm_effect missing entry for (period {period}, group {})",
                        g.name
                    ))
                }
                Some(e) if !e.all_finite() => {
                    return bad(format!(
                        "arm_effect for (period {period}, group {}) must be finite",
                        g.name
                    ))
                }
                Some(e) => {
                    if g.name == model.control && !e.is_zero() {
                        return bad(format!(
                            "control group effects must be identically zero (arm_effect at period {period})"
                        ));
                    }
                }
            }
        }
    }
    for ((period, group), _) in &model.arm_effect {
        if *period == 0 || *period > design.n_periods {
            return bad(format!("arm_effect period {period} outside 1..={}", design.n_periods));
        }
        if !names.contains(group) {
            return bad(format!("arm_effect references undeclared group {group}"));
        }
    }

    for ((period, group, active), effect) in &model.moderation {
        if *period == 0 || *period > design.n_periods {
            return bad(format!("moderation period {period} outside 1..={}", design.n_periods));
        }
        if !names.contains(group) {
            return bad(format!("moderation references undeclared group {group}"));
        }
        if !effect.all_finite() {
            return bad(format!(
                "moderation for (period {period}, group {group}, active={active}) must be finite"
            ));
        }
        if group == &model.control && !effect.is_zero() {
            return bad("control group effects must be identically zero (moderation)".into());
        }
    }

    for ((source, target, group), effect) in &model.delayed_effect {
        if *source == 0 || *source > design.n_periods {
            return bad(format!("delayed source {source} outside 1..={}", design.n_periods));
        }
        if *target <= source + 1 || *target > horizon {
            return bad(format!(
                "delayed target {target} must lie in {}..={horizon} (strictly past the direct outcome of period {source})",
                source + 2
            ));
        }
        if !names.contains(group) {
            return bad(format!("delayed_effect references undeclared group {group}"));
        }
        if !effect.all_finite() {
            return bad(format!(
                "delayed_effect for ({source} -> {target}, group {group}) must be finite"
            ));
        }
        if group == &model.control && !effect.is_zero() {
            return bad("control group effects must be identically zero (delayed_effect)".into());
        }
    }

    Ok(())
}

/// Product of a cohort simulation.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    /// One record per learner, sorted by learner id, with full activity over
    /// periods 1..=n_periods+1.
    pub records: Vec<LearnerRecord>,
    /// The underlying assignment table, sorted by (learner_id, period).
    pub assignments: Vec<AssignmentRecord>,
    pub warnings: Vec<AssignmentWarning>,
    /// Assignments whose arm carries an email; each one is a sent email.
    pub emails_sent: u64,
}

/// Simulate assignment and behavior for a cohort of profiles.
///
/// Assignment and outcome draws come from disjoint per-(learner, period)
/// substreams, so the assignment table matches what the randomizer alone
/// would produce for the same feedback, and neither cohort order nor
/// parallelism changes any draw. Designs with custom-flag eligibility see
/// the flag as false for every simulated learner.
pub fn simulate_cohort(
    design: &TrialDesign,
    profiles: &[LearnerProfile],
    model: &BehaviorModel,
    seed: &SeedSpec,
) -> Result<SimulatedCohort> {
    validate_model(design, model)?;
    let mut seen = BTreeSet::new();
    for p in profiles {
        if !seen.insert(p.learner_id.as_str()) {
            return Err(Error::DuplicateLearner(p.learner_id.clone()));
        }
    }
    let group_of: BTreeMap<&ArmId, &GroupName> = model
        .groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |m| (m, &g.name)))
        .collect();

    let mut sorted: Vec<&LearnerProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.learner_id.cmp(&b.learner_id));

    let n = design.n_periods;
    let mut records = Vec::with_capacity(sorted.len());
    let mut assignments = Vec::with_capacity(sorted.len() * n as usize);
    let mut warnings = Vec::new();
    let mut emails_sent = 0u64;

    for profile in sorted {
        let id = profile.learner_id.as_str();
        let country = profile.country;
        let mut activity: Vec<bool> = Vec::with_capacity(n as usize + 1);
        let p1 = sigmoid(model.baseline(1, country));
        activity.push(seed.uniform(id, 1, StreamDomain::Activity) < p1);

        let mut history = LearnerHistory::new();
        let mut arms: Vec<ArmId> = Vec::with_capacity(n as usize);
        for w in 1..=n {
            let (rec, warn) = assign_point(design, id, &history, w, seed)?;
            if let Some(warn) = warn {
                warnings.push(warn);
            }
            let arm = design
                .arm(&rec.arm_id)
                .ok_or_else(|| Error::UnknownArm(rec.arm_id.as_str().to_string()))?;
            if arm.email_present {
                emails_sent += 1;
            }
            let group = *group_of
                .get(&rec.arm_id)
                .ok_or_else(|| Error::ModelConfig(format!("arm {} not covered by any group", rec.arm_id)))?;

            let active_in_w = activity[w as usize - 1];
            let mut logit = model.baseline(w + 1, country);
            logit += model
                .arm_effect
                .get(&(w, group.clone()))
                .map_or(0.0, |e| e.value(country));
            logit += model
                .moderation
                .get(&(w, group.clone(), active_in_w))
                .map_or(0.0, |e| e.value(country));
            for src in 1..w {
                let src_group = group_of[&arms[src as usize - 1]];
                logit += model
                    .delayed_effect
                    .get(&(src, w + 1, src_group.clone()))
                    .map_or(0.0, |e| e.value(country));
            }

            let p_next = sigmoid(logit);
            activity.push(seed.uniform(id, w + 1, StreamDomain::Activity) < p_next);
            history.push(rec.arm_id.clone(), active_in_w);
            arms.push(rec.arm_id.clone());
            assignments.push(rec);
        }

        records.push(LearnerRecord {
            profile: profile.clone(),
            sequence: TreatmentSequence::new(arms),
            activity,
        });
    }

    Ok(SimulatedCohort {
        records,
        assignments,
        warnings,
        emails_sent,
    })
}

/// Build `n` profiles with ids `L000001..` and countries drawn from the mix
/// by largest-remainder apportionment (deterministic; no randomness).
pub fn synthetic_profiles(n: usize, mix: &[(Country, f64)]) -> Result<Vec<LearnerProfile>> {
    if mix.is_empty() {
        return Err(Error::Schema("country mix must not be empty".into()));
    }
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    if !(total.is_finite() && total > 0.0) || mix.iter().any(|(_, w)| *w < 0.0) {
        return Err(Error::Schema(
            "country mix weights must be non-negative with a positive sum".into(),
        ));
    }
    // Largest-remainder apportionment of n among the mix entries.
    let mut counts: Vec<usize> = Vec::with_capacity(mix.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(mix.len());
    let mut assigned = 0usize;
    for (i, (_, w)) in mix.iter().enumerate() {
        let exact = n as f64 * w / total;
        let floor = exact.floor() as usize;
        counts.push(floor);
        remainders.push((i, exact - floor as f64));
        assigned += floor;
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.into_iter().take(n - assigned) {
        counts[i] += 1;
    }

    let mut out = Vec::with_capacity(n);
    let mut serial = 0usize;
    for ((country, _), count) in mix.iter().zip(counts) {
        for _ in 0..count {
            serial += 1;
            out.push(LearnerProfile::new(format!("L{serial:06}"), *country));
        }
    }
    Ok(out)
}
