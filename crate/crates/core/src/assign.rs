//! Seeded arm assignment.
//!
//! Assignment is a pure function of `(design, learner_id, period, history,
//! master seed)`: each (learner, period) cell draws one uniform from its own
//! substream and inverts the scheme's CDF over arms in declared order.
//! Processing order and parallelism therefore cannot change any draw, and
//! re-running with the same seed reproduces the table exactly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::design::{
    ArmId, EligibilityKind, Fallback, TreatmentSequence, TrialDesign, TrialMode, Trigger,
};
use crate::error::{Error, Result};
use crate::seed::{SeedSpec, StreamDomain};
use crate::stats::chi_square_sf;

/// One assignment: which arm a learner holds in a period and whether the
/// learner was eligible for randomization there (fallback and replicated
/// arms carry `eligible = false`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub learner_id: String,
    pub period: u32,
    pub arm_id: ArmId,
    pub eligible: bool,
}

/// Everything already observed for a learner strictly before the period
/// being assigned: one arm and one activity value per elapsed period, plus
/// the current value of the caller-defined eligibility flag.
#[derive(Debug, Clone, Default)]
pub struct LearnerHistory {
    arms: Vec<ArmId>,
    activity: Vec<bool>,
    custom_flag: bool,
}

impl LearnerHistory {
    pub fn new() -> Self {
        LearnerHistory::default()
    }

    /// Record one elapsed period: its assigned arm and whether the learner
    /// was active during it.
    pub fn push(&mut self, arm: ArmId, active: bool) {
        self.arms.push(arm);
        self.activity.push(active);
    }

    pub fn set_custom_flag(&mut self, flag: bool) {
        self.custom_flag = flag;
    }

    /// Number of fully recorded periods.
    pub fn periods(&self) -> u32 {
        self.arms.len() as u32
    }

    pub fn arm(&self, period: u32) -> Option<&ArmId> {
        period
            .checked_sub(1)
            .and_then(|i| self.arms.get(i as usize))
    }

    pub fn active(&self, period: u32) -> Option<bool> {
        period
            .checked_sub(1)
            .and_then(|i| self.activity.get(i as usize))
            .copied()
    }
}

/// Non-fatal conditions surfaced by assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignmentWarning {
    /// carry-previous-arm fallback fired at period 1, where no previous arm
    /// exists; the control arm was assigned instead.
    CarryWithoutPreviousArm { learner_id: String, period: u32 },
}

impl std::fmt::Display for AssignmentWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AssignmentWarning::CarryWithoutPreviousArm { learner_id, period } => write!(
                f,
                "learner {learner_id:?} ineligible at period {period} with carry-previous-arm and no previous arm; assigned control"
            ),
        }
    }
}

/// Per-learner activity feedback consumed between decision points. Real
/// deployments back this with observed data; the simulator backs it with the
/// behavior model.
pub trait CohortFeedback {
    /// Whether the learner was active during 1-based `period`.
    fn active(&self, learner_id: &str, period: u32) -> bool;

    /// Value of the caller-defined flag for custom-flag eligibility at a
    /// decision point. Defaults to false (ineligible).
    fn custom_flag(&self, _learner_id: &str, _period: u32) -> bool {
        false
    }
}

/// Feedback for designs where activity never matters (all-eligible points).
pub struct NoFeedback;

impl CohortFeedback for NoFeedback {
    fn active(&self, _learner_id: &str, _period: u32) -> bool {
        false
    }
}

/// Back feedback with a closure over (learner_id, period).
pub struct ActivityFn<F: Fn(&str, u32) -> bool>(pub F);

impl<F: Fn(&str, u32) -> bool> CohortFeedback for ActivityFn<F> {
    fn active(&self, learner_id: &str, period: u32) -> bool {
        (self.0)(learner_id, period)
    }
}

/// Invert the scheme CDF over arms in declared design order. Zero-probability
/// arms can never be selected; a draw landing past the accumulated total
/// (floating-point residue) selects the last positive-probability arm.
fn draw_arm<'d>(design: &'d TrialDesign, period: u32, u: f64) -> Result<&'d ArmId> {
    let dp = design
        .decision_point(period)
        .ok_or_else(|| Error::InvalidDesign(format!("no decision point at period {period}")))?;
    let mut cum = 0.0;
    let mut last_positive = None;
    for arm in &design.arms {
        let p = dp.scheme.probability(&arm.id);
        if p > 0.0 {
            cum += p;
            last_positive = Some(&arm.id);
            if u < cum {
                return Ok(&arm.id);
            }
        }
    }
    last_positive.ok_or_else(|| {
        Error::InvalidDesign(format!("scheme at period {period} has no positive probability"))
    })
}

/// Assign one learner at one decision point.
///
/// Preconditions: the design is valid (callers iterating a cohort should
/// check once via [`TrialDesign::ensure_valid`]) and `history` holds exactly
/// the periods before `period`. In single-randomized mode periods past 1
/// replicate the period-1 arm from history without consuming randomness.
pub fn assign_point(
    design: &TrialDesign,
    learner_id: &str,
    history: &LearnerHistory,
    period: u32,
    seed: &SeedSpec,
) -> Result<(AssignmentRecord, Option<AssignmentWarning>)> {
    if period == 0 || period > design.n_periods {
        return Err(Error::EstimatorPrecondition(format!(
            "period {period} outside 1..={}",
            design.n_periods
        )));
    }
    if history.periods() != period - 1 {
        return Err(Error::IncompleteHistory(format!(
            "history holds {} period(s), period {period} needs exactly {}",
            history.periods(),
            period - 1
        )));
    }

    // Replication path: single-randomized designs only randomize at period 1.
    if design.mode == TrialMode::SingleRandomized && period > 1 {
        let arm = history
            .arm(1)
            .ok_or_else(|| Error::IncompleteHistory("missing period-1 arm".into()))?;
        return Ok((
            AssignmentRecord {
                learner_id: learner_id.to_string(),
                period,
                arm_id: arm.clone(),
                eligible: false,
            },
            None,
        ));
    }

    let dp = design
        .decision_point(period)
        .ok_or_else(|| Error::InvalidDesign(format!("no decision point at period {period}")))?;
    if dp.trigger == Trigger::EventTrigger {
        return Err(Error::EventTriggerUnsupported);
    }

    // "Prior period" is the last fully observed one, period - 1. Before
    // period 1 nothing is observed and the learner counts as inactive.
    let prior_active = period > 1 && history.active(period - 1).unwrap_or(false);
    let eligible = match dp.eligibility.kind {
        EligibilityKind::All => true,
        EligibilityKind::InactivePriorPeriod => !prior_active,
        EligibilityKind::ActivePriorPeriod => prior_active,
        EligibilityKind::CustomFlag => history.custom_flag,
    };

    let mut warning = None;
    let arm_id = if eligible {
        let u = seed.uniform(learner_id, period, StreamDomain::Assignment);
        draw_arm(design, period, u)?.clone()
    } else {
        let control = || -> Result<ArmId> {
            design
                .control_arm()
                .map(|a| a.id.clone())
                .ok_or_else(|| Error::InvalidDesign("design has no arms".into()))
        };
        match dp.eligibility.fallback {
            Fallback::AssignControl => control()?,
            Fallback::CarryPreviousArm => match history.arm(period - 1) {
                Some(arm) => arm.clone(),
                None => {
                    warning = Some(AssignmentWarning::CarryWithoutPreviousArm {
                        learner_id: learner_id.to_string(),
                        period,
                    });
                    control()?
                }
            },
        }
    };

    Ok((
        AssignmentRecord {
            learner_id: learner_id.to_string(),
            period,
            arm_id,
            eligible,
        },
        warning,
    ))
}

/// Full assignment table for a cohort plus any warnings raised on the way.
#[derive(Debug, Clone)]
pub struct AssignmentTable {
    /// Sorted by (learner_id, period); one record per learner per period.
    pub records: Vec<AssignmentRecord>,
    pub warnings: Vec<AssignmentWarning>,
}

impl AssignmentTable {
    /// Group the table into one arm sequence per learner, sorted by id.
    pub fn sequences(&self) -> Vec<(String, TreatmentSequence)> {
        let mut by_learner: BTreeMap<&str, Vec<&AssignmentRecord>> = BTreeMap::new();
        for rec in &self.records {
            by_learner.entry(&rec.learner_id).or_default().push(rec);
        }
        by_learner
            .into_iter()
            .map(|(id, mut recs)| {
                recs.sort_by_key(|r| r.period);
                (
                    id.to_string(),
                    TreatmentSequence::new(recs.into_iter().map(|r| r.arm_id.clone()).collect()),
                )
            })
            .collect()
    }
}

/// Assign a whole cohort across every period of the design.
///
/// Activity between decision points comes from `feedback`; learners are
/// processed independently, so the table is identical however the cohort is
/// ordered or partitioned. Duplicate learner ids are an error (E103).
pub fn assign_trial(
    design: &TrialDesign,
    learner_ids: &[String],
    feedback: &dyn CohortFeedback,
    seed: &SeedSpec,
) -> Result<AssignmentTable> {
    design.ensure_valid()?;
    let mut seen = BTreeSet::new();
    for id in learner_ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateLearner(id.clone()));
        }
    }

    let mut records = Vec::with_capacity(learner_ids.len() * design.n_periods as usize);
    let mut warnings = Vec::new();
    for id in learner_ids {
        let mut history = LearnerHistory::new();
        for period in 1..=design.n_periods {
            history.set_custom_flag(feedback.custom_flag(id, period));
            let (rec, warn) = assign_point(design, id, &history, period, seed)?;
            history.push(rec.arm_id.clone(), feedback.active(id, period));
            records.push(rec);
            if let Some(w) = warn {
                warnings.push(w);
            }
        }
    }
    records.sort_by(|a, b| (&a.learner_id, a.period).cmp(&(&b.learner_id, b.period)));
    Ok(AssignmentTable { records, warnings })
}

/// Chi-square independence test for one pair of periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairIndependence {
    pub period_a: u32,
    pub period_b: u32,
    pub chi_square: f64,
    pub df: u32,
    pub p_value: f64,
    /// Set when any expected cell count is below 5; the test is still
    /// reported but the chi-square approximation is weak.
    pub low_expected_cells: bool,
}

/// Chi-square goodness-of-fit of one period's arm counts against its scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodGoodnessOfFit {
    pub period: u32,
    pub chi_square: f64,
    pub df: u32,
    pub p_value: f64,
    pub low_expected_cells: bool,
}

fn chi_square_table(table: &[Vec<u64>]) -> (f64, u32, bool) {
    // Drop empty rows/columns before computing expectations.
    let rows: Vec<usize> = (0..table.len())
        .filter(|&r| table[r].iter().sum::<u64>() > 0)
        .collect();
    let n_cols = table.first().map_or(0, Vec::len);
    let cols: Vec<usize> = (0..n_cols)
        .filter(|&c| table.iter().map(|row| row[c]).sum::<u64>() > 0)
        .collect();
    if rows.len() < 2 || cols.len() < 2 {
        return (0.0, 0, false);
    }
    let total: f64 = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| table[r][c] as f64).sum::<f64>())
        .sum();
    let mut chi = 0.0;
    let mut low = false;
    for &r in &rows {
        let row_sum: f64 = cols.iter().map(|&c| table[r][c] as f64).sum();
        for &c in &cols {
            let col_sum: f64 = rows.iter().map(|&rr| table[rr][c] as f64).sum();
            let expected = row_sum * col_sum / total;
            if expected < 5.0 {
                low = true;
            }
            if expected > 0.0 {
                let d = table[r][c] as f64 - expected;
                chi += d * d / expected;
            }
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as u32;
    (chi, df, low)
}

/// Test pairwise independence of assigned arms across periods.
///
/// For each pair of periods the contingency table uses learners present in
/// both; needs at least two distinct periods in the records. A sequential
/// uniform design should produce large p-values; a single-randomized design
/// produces perfect dependence (p ~ 0).
pub fn empirical_independence(records: &[AssignmentRecord]) -> Result<Vec<PairIndependence>> {
    let mut arms: BTreeSet<&ArmId> = BTreeSet::new();
    let mut periods: BTreeSet<u32> = BTreeSet::new();
    let mut by_learner: BTreeMap<&str, BTreeMap<u32, &ArmId>> = BTreeMap::new();
    for rec in records {
        arms.insert(&rec.arm_id);
        periods.insert(rec.period);
        by_learner
            .entry(&rec.learner_id)
            .or_default()
            .insert(rec.period, &rec.arm_id);
    }
    if periods.len() < 2 {
        return Err(Error::EstimatorPrecondition(format!(
            "independence needs records from at least two periods (got {})",
            periods.len()
        )));
    }
    let arm_index: BTreeMap<&ArmId, usize> =
        arms.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let periods: Vec<u32> = periods.into_iter().collect();

    let mut out = Vec::new();
    for (i, &pa) in periods.iter().enumerate() {
        for &pb in &periods[i + 1..] {
            let mut table = vec![vec![0u64; arm_index.len()]; arm_index.len()];
            for cells in by_learner.values() {
                if let (Some(a), Some(b)) = (cells.get(&pa), cells.get(&pb)) {
                    table[arm_index[a]][arm_index[b]] += 1;
                }
            }
            let (chi_square, df, low_expected_cells) = chi_square_table(&table);
            out.push(PairIndependence {
                period_a: pa,
                period_b: pb,
                chi_square,
                df,
                p_value: chi_square_sf(chi_square, df as f64),
                low_expected_cells,
            });
        }
    }
    Ok(out)
}

/// Per-period goodness-of-fit of observed arm frequencies against the
/// design's scheme at that period (only eligible records count, since
/// fallback arms are not draws).
pub fn scheme_goodness_of_fit(
    design: &TrialDesign,
    records: &[AssignmentRecord],
) -> Result<Vec<PeriodGoodnessOfFit>> {
    design.ensure_valid()?;
    let mut out = Vec::new();
    for period in 1..=design.n_periods {
        let dp = match design.decision_point(period) {
            Some(dp) => dp,
            None => continue, // replicated periods of single-randomized designs
        };
        let mut counts: BTreeMap<&ArmId, u64> = BTreeMap::new();
        let mut n = 0u64;
        for rec in records.iter().filter(|r| r.period == period && r.eligible) {
            if design.arm(&rec.arm_id).is_none() {
                return Err(Error::UnknownArm(rec.arm_id.as_str().to_string()));
            }
            *counts.entry(&rec.arm_id).or_default() += 1;
            n += 1;
        }
        if n == 0 {
            continue;
        }
        let mut chi = 0.0;
        let mut df = 0u32;
        let mut low = false;
        for arm in &design.arms {
            let p = dp.scheme.probability(&arm.id);
            if p <= 0.0 {
                continue;
            }
            let expected = n as f64 * p;
            if expected < 5.0 {
                low = true;
            }
            let observed = counts.get(&arm.id).copied().unwrap_or(0) as f64;
            let d = observed - expected;
            chi += d * d / expected;
            df += 1;
        }
        df = df.saturating_sub(1);
        out.push(PeriodGoodnessOfFit {
            period,
            chi_square: chi,
            df,
            p_value: chi_square_sf(chi, df as f64),
            low_expected_cells: low,
        });
    }
    Ok(out)
}
