//! Learner-level data: profiles and per-trial records.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::TreatmentSequence;

/// Learner country, the baseline covariate the builtin analyses use.
/// Anything other than the two focal codes collapses to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Country {
    #[serde(rename = "IN")]
    India,
    #[serde(rename = "US")]
    UnitedStates,
    #[serde(rename = "other")]
    Other,
}

impl Country {
    pub fn code(&self) -> &'static str {
        match self {
            Country::India => "IN",
            Country::UnitedStates => "US",
            Country::Other => "other",
        }
    }

    /// Parse a country code, collapsing unknown codes to `Other`.
    pub fn from_code(code: &str) -> Country {
        match code {
            "IN" => Country::India,
            "US" => Country::UnitedStates,
            _ => Country::Other,
        }
    }

    pub const ALL: [Country; 3] = [Country::India, Country::UnitedStates, Country::Other];
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerProfile {
    pub learner_id: String,
    pub country: Country,
    /// Additional baseline covariates by name. Unused by the builtin
    /// analyses but carried through for custom models.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub baseline: BTreeMap<String, f64>,
}

impl LearnerProfile {
    pub fn new(learner_id: impl Into<String>, country: Country) -> Self {
        LearnerProfile {
            learner_id: learner_id.into(),
            country,
            baseline: BTreeMap::new(),
        }
    }
}

/// One learner's complete trial record: the arm sequence over periods
/// `1..=n_periods` and binary activity over periods `1..=n_periods + 1`
/// (one extra period so the final assignment has an observed outcome).
/// `activity[0]` is the pre-assignment period-1 activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerRecord {
    pub profile: LearnerProfile,
    pub sequence: TreatmentSequence,
    pub activity: Vec<bool>,
}

impl LearnerRecord {
    /// Activity during 1-based `period`. Valid periods are
    /// `1..=sequence.len() + 1`.
    pub fn active_in(&self, period: u32) -> Option<bool> {
        self.activity.get(period as usize - 1).copied()
    }

    pub fn n_periods(&self) -> u32 {
        self.sequence.len() as u32
    }
}
