//! JSON design files.
//!
//! The on-disk shape mirrors [`TrialDesign`] with one convenience: a
//! sequential design may omit `n_periods`, which then defaults to the number
//! of decision points. Single-randomized designs must state it, since their
//! single decision point says nothing about the horizon. Unknown keys are
//! rejected so config typos fail loudly.

use std::path::Path;

use serde::Deserialize;

use crate::design::{DecisionPoint, TreatmentArm, TrialDesign, TrialMode};
use crate::error::{Error, Result};

use super::{classify_json, read_to_string, write_atomic};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignFile {
    arms: Vec<TreatmentArm>,
    decision_points: Vec<DecisionPoint>,
    #[serde(default)]
    n_periods: Option<u32>,
    mode: TrialMode,
}

impl DesignFile {
    fn into_design(self) -> Result<TrialDesign> {
        let n_periods = match (self.n_periods, self.mode) {
            (Some(n), _) => n,
            (None, TrialMode::Sequential) => self.decision_points.len() as u32,
            (None, TrialMode::SingleRandomized) => {
                return Err(Error::Schema(
                    "single-randomized designs must state n_periods".into(),
                ))
            }
        };
        Ok(TrialDesign {
            arms: self.arms,
            decision_points: self.decision_points,
            n_periods,
            mode: self.mode,
        })
    }
}

/// Parse a design from JSON text and validate it.
pub fn design_from_json(text: &str) -> Result<TrialDesign> {
    let design = design_from_json_unvalidated(text)?;
    design.ensure_valid()?;
    Ok(design)
}

/// Parse a design without running validation, so a checker can load a broken
/// design and report every violation instead of dying on the first.
pub fn design_from_json_unvalidated(text: &str) -> Result<TrialDesign> {
    let file: DesignFile =
        serde_json::from_str(text).map_err(|e| classify_json("design", e))?;
    file.into_design()
}

/// Serialize a design to pretty JSON with a trailing newline.
pub fn design_to_json(design: &TrialDesign) -> String {
    let mut text = serde_json::to_string_pretty(design).expect("designs always serialize");
    text.push('\n');
    text
}

pub fn load_design(path: &Path) -> Result<TrialDesign> {
    design_from_json(&read_to_string(path)?)
}

/// [`load_design`] without the validation pass.
pub fn load_design_unvalidated(path: &Path) -> Result<TrialDesign> {
    design_from_json_unvalidated(&read_to_string(path)?)
}

pub fn save_design(path: &Path, design: &TrialDesign) -> Result<()> {
    write_atomic(path, design_to_json(design).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::percs_design;

    #[test]
    fn round_trip_preserves_the_design() {
        let design = percs_design();
        let text = design_to_json(&design);
        assert!(text.ends_with('\n'));
        let back = design_from_json(&text).unwrap();
        assert_eq!(back, design);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.json");
        let design = percs_design();
        save_design(&path, &design).unwrap();
        assert_eq!(load_design(&path).unwrap(), design);
    }

    #[test]
    fn sequential_n_periods_defaults_to_point_count() {
        let design = percs_design();
        let mut value = serde_json::to_value(&design).unwrap();
        value.as_object_mut().unwrap().remove("n_periods");
        let back = design_from_json(&value.to_string()).unwrap();
        assert_eq!(back.n_periods, 3);
    }

    #[test]
    fn single_randomized_requires_n_periods() {
        let design = crate::design::percs_ab_design();
        let mut value = serde_json::to_value(&design).unwrap();
        value.as_object_mut().unwrap().remove("n_periods");
        let err = design_from_json(&value.to_string()).unwrap_err();
        assert_eq!(err.code(), "E002");
        assert!(err.to_string().contains("n_periods"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let design = percs_design();
        let mut value = serde_json::to_value(&design).unwrap();
        value
            .as_object_mut()
            .unwrap()
            .insert("n_period".into(), 3.into());
        let err = design_from_json(&value.to_string()).unwrap_err();
        assert_eq!(err.code(), "E002");
        assert!(err.to_string().contains("n_period"));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = design_from_json("{\"arms\": [").unwrap_err();
        assert_eq!(err.code(), "E001");
    }

    #[test]
    fn invalid_designs_fail_validation_on_load() {
        let design = percs_design();
        let mut value = serde_json::to_value(&design).unwrap();
        // Break one probability so the scheme no longer sums to 1.
        value["decision_points"][0]["scheme"]["T1"] = 0.5.into();
        let err = design_from_json(&value.to_string()).unwrap_err();
        assert_eq!(err.code(), "E301");

        // The unvalidated loader hands the broken design back for reporting.
        let design = design_from_json_unvalidated(&value.to_string()).unwrap();
        assert!(design.ensure_valid().is_err());
    }
}
