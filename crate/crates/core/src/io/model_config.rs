//! JSON behavior-model files.
//!
//! The file lists effects as entry lists rather than nested maps so hand
//! editing stays pleasant. An effect value is written as a bare number, the
//! string `"inf"` / `"-inf"` (JSON has no infinity literal), or an object
//! `{"base": ..., "by_country": {"IN": ...}}` carrying per-country
//! adjustments. Country codes in configs are strict: `IN`, `US`, or `other`.
//!
//! Structural problems (duplicate entries, unknown keys, bad country codes)
//! are caught here; semantic validation against a design (group partition,
//! coverage, zero control) happens when the model is used.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::Country;
use crate::design::ArmId;
use crate::error::{Error, Result};
use crate::sequence::{ArmGroup, GroupName};
use crate::simulate::{BehaviorModel, Effect};

use super::{classify_json, read_to_string, write_atomic};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BaseSpec {
    Number(f64),
    Named(String),
}

impl BaseSpec {
    fn parse(&self, context: &str) -> Result<f64> {
        match self {
            BaseSpec::Number(x) => Ok(*x),
            BaseSpec::Named(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(Error::Schema(format!(
                    "{context}: unknown effect value {other:?} (use a number, \"inf\" or \"-inf\")"
                ))),
            },
        }
    }

    fn from_value(x: f64) -> BaseSpec {
        if x == f64::INFINITY {
            BaseSpec::Named("inf".into())
        } else if x == f64::NEG_INFINITY {
            BaseSpec::Named("-inf".into())
        } else {
            BaseSpec::Number(x)
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EffectSpec {
    Flat(BaseSpec),
    Full {
        base: BaseSpec,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        by_country: BTreeMap<String, f64>,
    },
}

fn strict_country(code: &str, context: &str) -> Result<Country> {
    Country::ALL
        .iter()
        .find(|c| c.code() == code)
        .copied()
        .ok_or_else(|| {
            Error::Schema(format!(
                "{context}: unknown country code {code:?} (use IN, US, or other)"
            ))
        })
}

impl EffectSpec {
    fn parse(&self, context: &str) -> Result<Effect> {
        match self {
            EffectSpec::Flat(base) => Ok(Effect::constant(base.parse(context)?)),
            EffectSpec::Full { base, by_country } => {
                let mut effect = Effect::constant(base.parse(context)?);
                for (code, adj) in by_country {
                    effect = effect.with_country(strict_country(code, context)?, *adj);
                }
                Ok(effect)
            }
        }
    }

    fn from_effect(effect: &Effect) -> EffectSpec {
        if effect.by_country.is_empty() {
            EffectSpec::Flat(BaseSpec::from_value(effect.base))
        } else {
            EffectSpec::Full {
                base: BaseSpec::from_value(effect.base),
                by_country: effect
                    .by_country
                    .iter()
                    .map(|(c, adj)| (c.code().to_string(), *adj))
                    .collect(),
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupFile {
    name: GroupName,
    members: Vec<ArmId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineEntry {
    period: u32,
    effect: EffectSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmEffectEntry {
    period: u32,
    group: GroupName,
    effect: EffectSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModerationEntry {
    period: u32,
    group: GroupName,
    was_active: bool,
    effect: EffectSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelayedEntry {
    source: u32,
    target: u32,
    group: GroupName,
    effect: EffectSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    groups: Vec<GroupFile>,
    control: GroupName,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    baseline: Vec<BaselineEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    arm_effects: Vec<ArmEffectEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    moderation: Vec<ModerationEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    delayed: Vec<DelayedEntry>,
}

fn insert_unique<K: Ord + Clone, V>(
    map: &mut BTreeMap<K, V>,
    key: K,
    value: V,
    describe: impl Fn(&K) -> String,
) -> Result<()> {
    if map.contains_key(&key) {
        return Err(Error::Schema(format!("duplicate entry for {}", describe(&key))));
    }
    map.insert(key, value);
    Ok(())
}

impl ModelFile {
    fn into_model(self) -> Result<BehaviorModel> {
        let groups: Vec<ArmGroup> = self
            .groups
            .into_iter()
            .map(|g| ArmGroup::new(g.name, g.members))
            .collect();

        let mut baseline_logit = BTreeMap::new();
        for entry in &self.baseline {
            let effect = entry.effect.parse(&format!("baseline period {}", entry.period))?;
            insert_unique(&mut baseline_logit, entry.period, effect, |p| {
                format!("baseline period {p}")
            })?;
        }

        let mut arm_effect = BTreeMap::new();
        for entry in &self.arm_effects {
            let ctx = format!("arm effect (period {}, group {})", entry.period, entry.group);
            let effect = entry.effect.parse(&ctx)?;
            insert_unique(
                &mut arm_effect,
                (entry.period, entry.group.clone()),
                effect,
                |(p, g)| format!("arm effect (period {p}, group {g})"),
            )?;
        }

        let mut moderation = BTreeMap::new();
        for entry in &self.moderation {
            let ctx = format!(
                "moderation (period {}, group {}, was_active {})",
                entry.period, entry.group, entry.was_active
            );
            let effect = entry.effect.parse(&ctx)?;
            insert_unique(
                &mut moderation,
                (entry.period, entry.group.clone(), entry.was_active),
                effect,
                |(p, g, a)| format!("moderation (period {p}, group {g}, was_active {a})"),
            )?;
        }

        let mut delayed_effect = BTreeMap::new();
        for entry in &self.delayed {
            let ctx = format!(
                "delayed effect (source {}, target {}, group {})",
                entry.source, entry.target, entry.group
            );
            let effect = entry.effect.parse(&ctx)?;
            insert_unique(
                &mut delayed_effect,
                (entry.source, entry.target, entry.group.clone()),
                effect,
                |(s, t, g)| format!("delayed effect (source {s}, target {t}, group {g})"),
            )?;
        }

        Ok(BehaviorModel {
            groups,
            control: self.control,
            baseline_logit,
            arm_effect,
            moderation,
            delayed_effect,
        })
    }

    fn from_model(model: &BehaviorModel) -> ModelFile {
        ModelFile {
            groups: model
                .groups
                .iter()
                .map(|g| GroupFile {
                    name: g.name.clone(),
                    members: g.members.iter().cloned().collect(),
                })
                .collect(),
            control: model.control.clone(),
            baseline: model
                .baseline_logit
                .iter()
                .map(|(period, effect)| BaselineEntry {
                    period: *period,
                    effect: EffectSpec::from_effect(effect),
                })
                .collect(),
            arm_effects: model
                .arm_effect
                .iter()
                .map(|((period, group), effect)| ArmEffectEntry {
                    period: *period,
                    group: group.clone(),
                    effect: EffectSpec::from_effect(effect),
                })
                .collect(),
            moderation: model
                .moderation
                .iter()
                .map(|((period, group, was_active), effect)| ModerationEntry {
                    period: *period,
                    group: group.clone(),
                    was_active: *was_active,
                    effect: EffectSpec::from_effect(effect),
                })
                .collect(),
            delayed: model
                .delayed_effect
                .iter()
                .map(|((source, target, group), effect)| DelayedEntry {
                    source: *source,
                    target: *target,
                    group: group.clone(),
                    effect: EffectSpec::from_effect(effect),
                })
                .collect(),
        }
    }
}

/// Parse a behavior model from JSON text. Semantic validation against a
/// design happens at use time.
pub fn model_from_json(text: &str) -> Result<BehaviorModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| classify_json("behavior model", e))?;
    file.into_model()
}

/// Serialize a behavior model to pretty JSON with a trailing newline.
pub fn model_to_json(model: &BehaviorModel) -> String {
    let mut text = serde_json::to_string_pretty(&ModelFile::from_model(model))
        .expect("model files always serialize");
    text.push('\n');
    text
}

pub fn load_model(path: &Path) -> Result<BehaviorModel> {
    model_from_json(&read_to_string(path)?)
}

pub fn save_model(path: &Path, model: &BehaviorModel) -> Result<()> {
    write_atomic(path, model_to_json(model).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::percs_design;
    use crate::simulate::{percs_like_model, validate_model};

    #[test]
    fn builtin_model_round_trips() {
        let design = percs_design();
        let model = percs_like_model(&design).unwrap();
        let text = model_to_json(&model);
        let back = model_from_json(&text).unwrap();
        assert_eq!(back, model);
        validate_model(&design, &back).unwrap();
    }

    #[test]
    fn effect_forms_parse() {
        let text = r#"{
            "groups": [
                {"name": "E0", "members": ["T1"]},
                {"name": "E1", "members": ["T2"]}
            ],
            "control": "E0",
            "baseline": [
                {"period": 1, "effect": -0.25},
                {"period": 2, "effect": "-inf"},
                {"period": 3, "effect": {"base": 0.5, "by_country": {"IN": -0.1}}}
            ]
        }"#;
        let model = model_from_json(text).unwrap();
        assert_eq!(model.baseline(1, Country::Other), -0.25);
        assert_eq!(model.baseline(2, Country::Other), f64::NEG_INFINITY);
        approx::assert_abs_diff_eq!(model.baseline(3, Country::India), 0.4, epsilon = 1e-12);
        assert_eq!(model.baseline(3, Country::UnitedStates), 0.5);
    }

    #[test]
    fn duplicate_entries_are_rejected() {
        let text = r#"{
            "groups": [{"name": "E0", "members": ["T1"]}],
            "control": "E0",
            "baseline": [
                {"period": 1, "effect": 0.0},
                {"period": 1, "effect": 0.5}
            ]
        }"#;
        let err = model_from_json(text).unwrap_err();
        assert_eq!(err.code(), "E002");
        assert!(err.to_string().contains("duplicate entry"), "{err}");
    }

    #[test]
    fn unknown_country_codes_are_rejected() {
        let text = r#"{
            "groups": [{"name": "E0", "members": ["T1"]}],
            "control": "E0",
            "baseline": [
                {"period": 1, "effect": {"base": 0.0, "by_country": {"IND": 1.0}}}
            ]
        }"#;
        let err = model_from_json(text).unwrap_err();
        assert_eq!(err.code(), "E002");
        assert!(err.to_string().contains("IND"), "{err}");
    }

    #[test]
    fn unknown_effect_strings_are_rejected() {
        let text = r#"{
            "groups": [{"name": "E0", "members": ["T1"]}],
            "control": "E0",
            "baseline": [{"period": 1, "effect": "huge"}]
        }"#;
        let err = model_from_json(text).unwrap_err();
        assert_eq!(err.code(), "E002");
        assert!(err.to_string().contains("huge"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{
            "groups": [{"name": "E0", "members": ["T1"]}],
            "control": "E0",
            "baselines": []
        }"#;
        let err = model_from_json(text).unwrap_err();
        assert_eq!(err.code(), "E002");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = percs_like_model(&percs_design()).unwrap();
        save_model(&path, &model).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }
}
