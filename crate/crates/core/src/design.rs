//! Trial designs: treatment arms, per-period randomization schemes,
//! eligibility predicates and decision points.
//!
//! A sequential design re-randomizes learners at every decision point, so a
//! design with `k` arms and `p` periods induces `k^p` treatment sequences. A
//! single-randomized design draws once and replicates the arm, inducing only
//! `k` constant sequences. Both builtin email-course designs (7 arms, 3
//! weekly decision points) are constructed by [`percs_design`] and
//! [`percs_ab_design`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "probabilities sum to one".
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Identifier of a treatment arm, e.g. `"T1"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmId(pub String);

impl ArmId {
    pub fn new(id: impl Into<String>) -> Self {
        ArmId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ArmId {
    fn from(s: &str) -> Self {
        ArmId(s.to_string())
    }
}

/// Mindset framing factor of an email arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mindset {
    /// Arm has no email, so the factor does not apply.
    NoneApplicable,
    NoGrowth,
    Growth,
}

/// Problem-solving content factor of an email arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemType {
    /// Arm has no email, so the factor does not apply.
    NoneApplicable,
    NoProblem,
    Global,
    Cultural,
}

/// One treatment arm with its factor structure. Factors are stored on the arm
/// (not parsed out of the id) so non-builtin designs can declare their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentArm {
    pub id: ArmId,
    pub email_present: bool,
    pub mindset: Mindset,
    pub problem_type: ProblemType,
}

/// Assignment probabilities for one decision point, keyed by arm id. Arms
/// absent from the map have probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomizationScheme {
    pub probabilities: BTreeMap<ArmId, f64>,
}

impl RandomizationScheme {
    pub fn new(probabilities: BTreeMap<ArmId, f64>) -> Self {
        RandomizationScheme { probabilities }
    }

    /// Uniform scheme over the given arms.
    pub fn uniform(arms: &[TreatmentArm]) -> Self {
        let p = 1.0 / arms.len() as f64;
        RandomizationScheme {
            probabilities: arms.iter().map(|a| (a.id.clone(), p)).collect(),
        }
    }

    pub fn probability(&self, arm: &ArmId) -> f64 {
        self.probabilities.get(arm).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.values().sum()
    }
}

/// Who is (re-)randomized at a decision point. "Prior period" means the last
/// fully observed period strictly before the decision point, i.e. period
/// `index - 1`; at period 1 nothing has been observed and learners count as
/// inactive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EligibilityKind {
    All,
    InactivePriorPeriod,
    ActivePriorPeriod,
    /// Eligibility decided by a caller-supplied per-learner flag.
    CustomFlag,
}

/// Arm given to learners who are not eligible for randomization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Keep the arm from the previous period. At period 1 there is none, so
    /// this degrades to assigning the control arm (a warning is recorded).
    CarryPreviousArm,
    AssignControl,
}

impl Default for Fallback {
    fn default() -> Self {
        Fallback::CarryPreviousArm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EligibilityPredicate {
    pub kind: EligibilityKind,
    #[serde(default)]
    pub fallback: Fallback,
}

impl EligibilityPredicate {
    pub fn all() -> Self {
        EligibilityPredicate {
            kind: EligibilityKind::All,
            fallback: Fallback::default(),
        }
    }
}

/// What fires a decision point. Event triggers are declared here but cannot
/// be executed by the assignment layer (there is no event stream); validation
/// accepts them, assignment reports `E304`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    PeriodBoundary,
    EventTrigger,
}

impl Default for Trigger {
    fn default() -> Self {
        Trigger::PeriodBoundary
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionPoint {
    /// 1-based period index of the decision point.
    pub index: u32,
    pub scheme: RandomizationScheme,
    pub eligibility: EligibilityPredicate,
    #[serde(default)]
    pub trigger: Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialMode {
    /// One randomization per decision point; arms can change every period.
    Sequential,
    /// One randomization at period 1, replicated to every later period.
    SingleRandomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign {
    pub arms: Vec<TreatmentArm>,
    pub decision_points: Vec<DecisionPoint>,
    pub n_periods: u32,
    pub mode: TrialMode,
}

/// One broken rule found by [`validate_design`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `decision_points[1].scheme`.
    pub field: String,
    /// The rule that was broken, in plain words.
    pub rule: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, rule: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            rule: rule.into(),
        });
    }
}

impl TrialDesign {
    pub fn arm(&self, id: &ArmId) -> Option<&TreatmentArm> {
        self.arms.iter().find(|a| &a.id == id)
    }

    /// Control arm used by `assign-control` fallbacks: the first declared arm
    /// without an email, or the first declared arm if every arm has one.
    pub fn control_arm(&self) -> Option<&TreatmentArm> {
        self.arms
            .iter()
            .find(|a| !a.email_present)
            .or_else(|| self.arms.first())
    }

    pub fn decision_point(&self, period: u32) -> Option<&DecisionPoint> {
        self.decision_points.iter().find(|d| d.index == period)
    }

    /// Convenience: validate and convert any violations into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_design(self);
        if report.is_ok() {
            Ok(())
        } else {
            let first = &report.violations[0];
            Err(Error::InvalidDesign(format!(
                "{} violation(s); first: {} ({})",
                report.violations.len(),
                first.field,
                first.rule
            )))
        }
    }
}

/// Check every structural invariant of a design and report all violations.
/// Pure function of the design: repeated calls return identical reports.
pub fn validate_design(design: &TrialDesign) -> ValidationReport {
    let mut report = ValidationReport::default();

    if design.arms.is_empty() {
        report.push("arms", "design must declare at least one arm");
    }
    let mut seen = BTreeSet::new();
    for (i, arm) in design.arms.iter().enumerate() {
        if arm.id.as_str().is_empty() {
            report.push(format!("arms[{i}].id"), "arm id must be non-empty");
        }
        if !seen.insert(arm.id.clone()) {
            report.push(format!("arms[{i}].id"), format!("duplicate arm id {}", arm.id));
        }
        if arm.email_present {
            if arm.mindset == Mindset::NoneApplicable {
                report.push(
                    format!("arms[{i}].mindset"),
                    "email arms must declare a mindset factor",
                );
            }
            if arm.problem_type == ProblemType::NoneApplicable {
                report.push(
                    format!("arms[{i}].problem_type"),
                    "email arms must declare a problem-type factor",
                );
            }
        } else {
            if arm.mindset != Mindset::NoneApplicable {
                report.push(
                    format!("arms[{i}].mindset"),
                    "arms without an email must use none-applicable mindset",
                );
            }
            if arm.problem_type != ProblemType::NoneApplicable {
                report.push(
                    format!("arms[{i}].problem_type"),
                    "arms without an email must use none-applicable problem type",
                );
            }
        }
    }

    if design.n_periods == 0 {
        report.push("n_periods", "design must have at least one period");
    }

    match design.mode {
        TrialMode::Sequential => {
            if design.decision_points.len() != design.n_periods as usize {
                report.push(
                    "decision_points",
                    format!(
                        "sequential mode needs one decision point per period (got {}, n_periods = {})",
                        design.decision_points.len(),
                        design.n_periods
                    ),
                );
            }
        }
        TrialMode::SingleRandomized => {
            if design.decision_points.len() != 1 {
                report.push(
                    "decision_points",
                    format!(
                        "single-randomized mode needs exactly one decision point (got {})",
                        design.decision_points.len()
                    ),
                );
            }
        }
    }

    let mut prev_index = 0u32;
    for (i, dp) in design.decision_points.iter().enumerate() {
        let field = format!("decision_points[{i}]");
        if dp.index == 0 {
            report.push(format!("{field}.index"), "decision point indices are 1-based");
        } else if dp.index <= prev_index {
            report.push(
                format!("{field}.index"),
                format!(
                    "indices must be strictly increasing (got {} after {})",
                    dp.index, prev_index
                ),
            );
        }
        if dp.index > design.n_periods {
            report.push(
                format!("{field}.index"),
                format!("index {} exceeds n_periods = {}", dp.index, design.n_periods),
            );
        }
        prev_index = dp.index;

        let scheme = &dp.scheme;
        let mut any_positive = false;
        for (arm, p) in &scheme.probabilities {
            if design.arm(arm).is_none() {
                report.push(
                    format!("{field}.scheme"),
                    format!("probability declared for unknown arm {arm}"),
                );
            }
            if !p.is_finite() || *p < 0.0 {
                report.push(
                    format!("{field}.scheme"),
                    format!("probability for {arm} must be a finite non-negative number"),
                );
            }
            if *p > 0.0 {
                any_positive = true;
            }
        }
        if !any_positive {
            report.push(
                format!("{field}.scheme"),
                "at least one arm must have positive probability",
            );
        }
        let sum = scheme.sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            report.push(
                format!("{field}.scheme"),
                format!("probabilities must sum to 1 within 1e-9 (got {sum:.12})"),
            );
        }
    }

    // In sequential mode the decision points must be exactly periods 1..=n.
    if design.mode == TrialMode::Sequential
        && design.decision_points.len() == design.n_periods as usize
    {
        for (i, dp) in design.decision_points.iter().enumerate() {
            let expect = i as u32 + 1;
            if dp.index != expect {
                report.push(
                    format!("decision_points[{i}].index"),
                    format!("sequential decision points must cover periods 1..={} in order", design.n_periods),
                );
            }
        }
    }
    if design.mode == TrialMode::SingleRandomized {
        if let Some(dp) = design.decision_points.first() {
            if dp.index != 1 {
                report.push(
                    "decision_points[0].index",
                    "single-randomized designs randomize at period 1",
                );
            }
        }
    }

    report
}

/// A fully specified arm-per-period sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreatmentSequence {
    pub arms: Vec<ArmId>,
}

impl TreatmentSequence {
    pub fn new(arms: Vec<ArmId>) -> Self {
        TreatmentSequence { arms }
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// Arm at 1-based period `period`.
    pub fn arm_at(&self, period: u32) -> Option<&ArmId> {
        self.arms.get(period as usize - 1)
    }
}

impl fmt::Display for TreatmentSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, arm) in self.arms.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{arm}")?;
        }
        write!(f, ")")
    }
}

/// A sequence together with its design-constant probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceProbability {
    pub sequence: TreatmentSequence,
    pub probability: f64,
}

/// Enumerate every treatment sequence the design can produce together with
/// its probability. Requires a valid design whose sequence probabilities are
/// constants, i.e. every decision point uses `all` eligibility (otherwise the
/// realized distribution depends on learner behavior).
///
/// Sequential designs produce `|arms|^n_periods` sequences in lexicographic
/// order of declared arm positions; single-randomized designs produce one
/// constant sequence per arm. Probabilities sum to 1 within 1e-9.
pub fn enumerate_sequences(design: &TrialDesign) -> Result<Vec<SequenceProbability>> {
    design.ensure_valid()?;
    for (i, dp) in design.decision_points.iter().enumerate() {
        if dp.eligibility.kind != EligibilityKind::All {
            return Err(Error::SequenceProbabilitiesNotConstant(format!(
                "decision_points[{i}] restricts eligibility; realized sequence probabilities depend on learner activity"
            )));
        }
    }

    match design.mode {
        TrialMode::SingleRandomized => {
            let scheme = &design.decision_points[0].scheme;
            Ok(design
                .arms
                .iter()
                .map(|arm| SequenceProbability {
                    sequence: TreatmentSequence::new(vec![
                        arm.id.clone();
                        design.n_periods as usize
                    ]),
                    probability: scheme.probability(&arm.id),
                })
                .collect())
        }
        TrialMode::Sequential => {
            let n = design.n_periods as usize;
            let k = design.arms.len();
            let total = k.checked_pow(n as u32).ok_or_else(|| {
                Error::EstimatorPrecondition(format!("{k}^{n} sequences overflow usize"))
            })?;
            let mut out = Vec::with_capacity(total);
            // Odometer over arm positions, most significant digit = period 1.
            let mut digits = vec![0usize; n];
            loop {
                let mut probability = 1.0;
                let arms: Vec<ArmId> = digits
                    .iter()
                    .enumerate()
                    .map(|(period0, &d)| {
                        let arm = &design.arms[d];
                        probability *=
                            design.decision_points[period0].scheme.probability(&arm.id);
                        arm.id.clone()
                    })
                    .collect();
                out.push(SequenceProbability {
                    sequence: TreatmentSequence::new(arms),
                    probability,
                });
                // Advance the odometer from the last period.
                let mut pos = n;
                loop {
                    if pos == 0 {
                        return Ok(out);
                    }
                    pos -= 1;
                    digits[pos] += 1;
                    if digits[pos] < k {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
        }
    }
}

/// The seven email arms of the builtin course-reminder factorial: one
/// no-email control and the 2 x 3 crossing of mindset framing with
/// problem-solving content.
pub fn percs_arms() -> Vec<TreatmentArm> {
    let arm = |id: &str, email: bool, mindset, problem| TreatmentArm {
        id: ArmId::new(id),
        email_present: email,
        mindset,
        problem_type: problem,
    };
    vec![
        arm("T1", false, Mindset::NoneApplicable, ProblemType::NoneApplicable),
        arm("T2", true, Mindset::NoGrowth, ProblemType::NoProblem),
        arm("T3", true, Mindset::NoGrowth, ProblemType::Global),
        arm("T4", true, Mindset::NoGrowth, ProblemType::Cultural),
        arm("T5", true, Mindset::Growth, ProblemType::NoProblem),
        arm("T6", true, Mindset::Growth, ProblemType::Global),
        arm("T7", true, Mindset::Growth, ProblemType::Cultural),
    ]
}

/// Builtin sequential design: 7 arms, uniform 1/7 at each of 3 weekly
/// decision points, everyone eligible. Induces 7^3 = 343 sequences.
pub fn percs_design() -> TrialDesign {
    let arms = percs_arms();
    let scheme = RandomizationScheme::uniform(&arms);
    TrialDesign {
        decision_points: (1..=3)
            .map(|index| DecisionPoint {
                index,
                scheme: scheme.clone(),
                eligibility: EligibilityPredicate::all(),
                trigger: Trigger::PeriodBoundary,
            })
            .collect(),
        arms,
        n_periods: 3,
        mode: TrialMode::Sequential,
    }
}

/// Builtin single-randomized variant of [`percs_design`]: the period-1 draw
/// is replicated across all 3 periods, so only 7 constant sequences exist.
pub fn percs_ab_design() -> TrialDesign {
    let arms = percs_arms();
    let scheme = RandomizationScheme::uniform(&arms);
    TrialDesign {
        decision_points: vec![DecisionPoint {
            index: 1,
            scheme,
            eligibility: EligibilityPredicate::all(),
            trigger: Trigger::PeriodBoundary,
        }],
        arms,
        n_periods: 3,
        mode: TrialMode::SingleRandomized,
    }
}
