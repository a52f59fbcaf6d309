//! Arm groups and sequence patterns.
//!
//! Analyses rarely target a single arm sequence: questions like "email with a
//! cultural problem in week 2, anything else elsewhere" are sets of sequences.
//! A [`SequencePattern`] has one slot per period holding a specific arm, an
//! [`ArmGroup`] or a wildcard; the literal syntax is `(E0,P2,*)`, a bare arm
//! id matching exactly, `*` matching anything.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cohort::LearnerRecord;
use crate::design::{ArmId, Mindset, ProblemType, TreatmentSequence, TrialDesign};
use crate::error::{Error, Result};

/// Name of an arm group. The seven builtin names follow the email factor
/// structure; anything else is a custom group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupName {
    /// No email.
    E0,
    /// Any email.
    E1,
    /// Email without growth-mindset framing.
    G0,
    /// Email with growth-mindset framing.
    G1,
    /// Email without a problem.
    P0,
    /// Email with a global problem.
    P1,
    /// Email with a culturally targeted problem.
    P2,
    Custom(String),
}

impl GroupName {
    pub const BUILTIN: [GroupName; 7] = [
        GroupName::E0,
        GroupName::E1,
        GroupName::G0,
        GroupName::G1,
        GroupName::P0,
        GroupName::P1,
        GroupName::P2,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            GroupName::E0 => "E0",
            GroupName::E1 => "E1",
            GroupName::G0 => "G0",
            GroupName::G1 => "G1",
            GroupName::P0 => "P0",
            GroupName::P1 => "P1",
            GroupName::P2 => "P2",
            GroupName::Custom(s) => s,
        }
    }

    /// Parse a group name; builtin names are recognized, anything else is
    /// custom. Custom names may not collide with builtin spelling.
    pub fn parse(s: &str) -> GroupName {
        match s {
            "E0" => GroupName::E0,
            "E1" => GroupName::E1,
            "G0" => GroupName::G0,
            "G1" => GroupName::G1,
            "P0" => GroupName::P0,
            "P1" => GroupName::P1,
            "P2" => GroupName::P2,
            other => GroupName::Custom(other.to_string()),
        }
    }
}

impl fmt::Display for GroupName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for GroupName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for GroupName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(GroupName::parse(&s))
    }
}

/// A named set of arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmGroup {
    pub name: GroupName,
    pub members: BTreeSet<ArmId>,
}

impl ArmGroup {
    pub fn new(name: GroupName, members: impl IntoIterator<Item = ArmId>) -> Self {
        ArmGroup {
            name,
            members: members.into_iter().collect(),
        }
    }

    pub fn contains(&self, arm: &ArmId) -> bool {
        self.members.contains(arm)
    }

    pub fn is_disjoint(&self, other: &ArmGroup) -> bool {
        self.members.is_disjoint(&other.members)
    }
}

/// Resolve a builtin group name against a design's arm factor structure.
/// Returns an error when the group is empty for this design.
pub fn builtin_group(design: &TrialDesign, name: &GroupName) -> Result<ArmGroup> {
    let members: BTreeSet<ArmId> = design
        .arms
        .iter()
        .filter(|arm| match name {
            GroupName::E0 => !arm.email_present,
            GroupName::E1 => arm.email_present,
            GroupName::G0 => arm.email_present && arm.mindset == Mindset::NoGrowth,
            GroupName::G1 => arm.email_present && arm.mindset == Mindset::Growth,
            GroupName::P0 => arm.email_present && arm.problem_type == ProblemType::NoProblem,
            GroupName::P1 => arm.email_present && arm.problem_type == ProblemType::Global,
            GroupName::P2 => arm.email_present && arm.problem_type == ProblemType::Cultural,
            GroupName::Custom(s) => arm.id.as_str() == s,
        })
        .map(|arm| arm.id.clone())
        .collect();
    if members.is_empty() {
        return Err(Error::Schema(format!(
            "group {name} resolves to no arms of this design"
        )));
    }
    Ok(ArmGroup {
        name: name.clone(),
        members,
    })
}

/// Resolve a token as an arm id (singleton group) or builtin group name.
pub fn resolve_group(design: &TrialDesign, token: &str) -> Result<ArmGroup> {
    if design.arms.iter().any(|a| a.id.as_str() == token) {
        return Ok(ArmGroup::new(
            GroupName::Custom(token.to_string()),
            [ArmId::new(token)],
        ));
    }
    let name = GroupName::parse(token);
    if matches!(name, GroupName::Custom(_)) {
        return Err(Error::UnknownArm(token.to_string()));
    }
    builtin_group(design, &name)
}

/// One slot of a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SlotPredicate {
    Arm(ArmId),
    Group(ArmGroup),
    Any,
}

impl SlotPredicate {
    pub fn matches(&self, arm: &ArmId) -> bool {
        match self {
            SlotPredicate::Arm(a) => a == arm,
            SlotPredicate::Group(g) => g.contains(arm),
            SlotPredicate::Any => true,
        }
    }
}

/// A per-period predicate over treatment sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePattern {
    pub slots: Vec<SlotPredicate>,
}

impl SequencePattern {
    pub fn new(slots: Vec<SlotPredicate>) -> Self {
        SequencePattern { slots }
    }

    /// Pattern matching a group at one period (1-based) and anything
    /// elsewhere.
    pub fn group_at(n_periods: u32, period: u32, group: ArmGroup) -> Self {
        let mut slots = vec![SlotPredicate::Any; n_periods as usize];
        slots[period as usize - 1] = SlotPredicate::Group(group);
        SequencePattern { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Whether a sequence satisfies every slot. Errors on length mismatch.
    pub fn matches(&self, sequence: &TreatmentSequence) -> Result<bool> {
        if sequence.len() != self.slots.len() {
            return Err(Error::EstimatorPrecondition(format!(
                "pattern has {} slots but sequence has {} periods",
                self.slots.len(),
                sequence.len()
            )));
        }
        Ok(self
            .slots
            .iter()
            .zip(&sequence.arms)
            .all(|(slot, arm)| slot.matches(arm)))
    }

    /// Literal form, e.g. `(E0,P2,*)`. Round-trips through [`parse_pattern`].
    pub fn format(&self) -> String {
        let mut out = String::from("(");
        for (i, slot) in self.slots.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            match slot {
                SlotPredicate::Arm(a) => out.push_str(a.as_str()),
                SlotPredicate::Group(g) => out.push_str(g.name.as_str()),
                SlotPredicate::Any => out.push('*'),
            }
        }
        out.push(')');
        out
    }
}

impl fmt::Display for SequencePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

/// Parse a pattern literal against a design: `(` token `,` ... `)` with one
/// token per period. A token is an arm id of the design, a builtin group
/// name, or `*`. Whitespace around tokens is ignored.
pub fn parse_pattern(design: &TrialDesign, text: &str) -> Result<SequencePattern> {
    let trimmed = text.trim();
    let inner = trimmed
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| {
            Error::Parse(format!("pattern {trimmed:?} must be parenthesized, e.g. (E0,P2,*)"))
        })?;
    let tokens: Vec<&str> = inner.split(',').map(str::trim).collect();
    if tokens.len() != design.n_periods as usize {
        return Err(Error::Schema(format!(
            "pattern {trimmed:?} has {} slots but the design has {} periods",
            tokens.len(),
            design.n_periods
        )));
    }
    let mut slots = Vec::with_capacity(tokens.len());
    for token in tokens {
        if token == "*" {
            slots.push(SlotPredicate::Any);
        } else if design.arms.iter().any(|a| a.id.as_str() == token) {
            slots.push(SlotPredicate::Arm(ArmId::new(token)));
        } else {
            let name = GroupName::parse(token);
            if matches!(name, GroupName::Custom(_)) {
                return Err(Error::UnknownArm(token.to_string()));
            }
            slots.push(SlotPredicate::Group(builtin_group(design, &name)?));
        }
    }
    Ok(SequencePattern { slots })
}

/// Stable-order selection of the records whose sequence matches the pattern;
/// equivalent to filtering on [`SequencePattern::matches`].
pub fn select<'a>(
    pattern: &SequencePattern,
    records: &'a [LearnerRecord],
) -> Result<Vec<&'a LearnerRecord>> {
    let mut out = Vec::new();
    for rec in records {
        if pattern.matches(&rec.sequence)? {
            out.push(rec);
        }
    }
    Ok(out)
}

/// One partition violation, in plain words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionViolation {
    pub rule: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub violations: Vec<PartitionViolation>,
}

impl PartitionReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verify that `groups` partition `universe`: pairwise disjoint, union equal
/// to the universe, and no member outside it.
pub fn partition_check(groups: &[ArmGroup], universe: &BTreeSet<ArmId>) -> PartitionReport {
    let mut report = PartitionReport::default();
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            let overlap: Vec<String> = a
                .members
                .intersection(&b.members)
                .map(|x| x.to_string())
                .collect();
            if !overlap.is_empty() {
                report.violations.push(PartitionViolation {
                    rule: format!(
                        "groups {} and {} overlap on {{{}}}",
                        a.name,
                        b.name,
                        overlap.join(",")
                    ),
                });
            }
        }
        let stray: Vec<String> = a
            .members
            .difference(universe)
            .map(|x| x.to_string())
            .collect();
        if !stray.is_empty() {
            report.violations.push(PartitionViolation {
                rule: format!("group {} has arms outside the universe: {{{}}}", a.name, stray.join(",")),
            });
        }
    }
    let covered: BTreeSet<&ArmId> = groups.iter().flat_map(|g| g.members.iter()).collect();
    let uncovered: Vec<String> = universe
        .iter()
        .filter(|a| !covered.contains(*a))
        .map(|a| a.to_string())
        .collect();
    if !uncovered.is_empty() {
        report.violations.push(PartitionViolation {
            rule: format!("arms not covered by any group: {{{}}}", uncovered.join(",")),
        });
    }
    report
}
