//! Estimate reports: a JSON document with one row per comparison, plus a
//! flat CSV projection for plotting effect ladders.
//!
//! The report states `n_comparisons` up front because every p-value in it is
//! unadjusted; readers deciding what survives multiple testing need the
//! count of simultaneous looks, not just the rows that happened to be small.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EffectEstimate, GroupEffect, StratumEffect, EFFECT_CONFIDENCE};

use super::{classify_json, read_to_string, write_atomic};

/// One comparison's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    /// Caller-chosen identifier tying the row to the question asked, e.g.
    /// `"direct-week2"` or `"moderated-week3"`.
    pub comparison_id: String,
    pub period: u32,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    /// Log odds ratio.
    pub estimate: f64,
    pub se: f64,
    /// [low, high] at the report's confidence level.
    pub ci: [f64; 2],
    /// Two-sided, unadjusted.
    pub p: f64,
    pub n_treated: usize,
    pub n_control: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn row(
    comparison_id: &str,
    period: u32,
    group: String,
    stratum: Option<String>,
    est: &EffectEstimate,
) -> EstimateRow {
    EstimateRow {
        comparison_id: comparison_id.to_string(),
        period,
        group,
        stratum,
        estimate: est.log_odds_ratio,
        se: est.std_error,
        ci: [est.ci_low, est.ci_high],
        p: est.p_value,
        n_treated: est.n_treated,
        n_control: est.n_control,
        flags: est.flags.labels().iter().map(|s| s.to_string()).collect(),
    }
}

impl EstimateRow {
    pub fn from_group_effect(comparison_id: &str, period: u32, effect: &GroupEffect) -> Self {
        row(
            comparison_id,
            period,
            effect.group.to_string(),
            None,
            &effect.estimate,
        )
    }

    pub fn from_stratum_effect(comparison_id: &str, period: u32, effect: &StratumEffect) -> Self {
        row(
            comparison_id,
            period,
            effect.group.to_string(),
            Some(effect.stratum.clone()),
            &effect.estimate,
        )
    }
}

/// A batch of comparisons reported together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    /// Number of simultaneous comparisons in this report; the p-values are
    /// unadjusted, so downstream screening must account for this count.
    pub n_comparisons: usize,
    /// Confidence level of every row's interval.
    pub confidence: f64,
    pub rows: Vec<EstimateRow>,
}

impl EstimateReport {
    pub fn new(rows: Vec<EstimateRow>) -> Self {
        EstimateReport {
            n_comparisons: rows.len(),
            confidence: EFFECT_CONFIDENCE,
            rows,
        }
    }
}

pub fn report_to_json(report: &EstimateReport) -> String {
    let mut text =
        serde_json::to_string_pretty(report).expect("reports always serialize");
    text.push('\n');
    text
}

pub fn save_report(path: &Path, report: &EstimateReport) -> Result<()> {
    write_atomic(path, report_to_json(report).as_bytes())
}

pub fn load_report(path: &Path) -> Result<EstimateReport> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| classify_json("report", e))
}

/// Flat CSV projection of a report for plotting: one row per comparison with
/// the point estimate and interval endpoints.
pub fn plot_data_to_string(report: &EstimateReport) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let written: std::result::Result<(), csv::Error> = (|| {
        writer.write_record([
            "comparison_id",
            "period",
            "group",
            "stratum",
            "estimate",
            "ci_low",
            "ci_high",
        ])?;
        for r in &report.rows {
            let period = r.period.to_string();
            let estimate = r.estimate.to_string();
            let ci_low = r.ci[0].to_string();
            let ci_high = r.ci[1].to_string();
            writer.write_record([
                r.comparison_id.as_str(),
                period.as_str(),
                r.group.as_str(),
                r.stratum.as_deref().unwrap_or(""),
                estimate.as_str(),
                ci_low.as_str(),
                ci_high.as_str(),
            ])?;
        }
        Ok(())
    })();
    written.map_err(|e| Error::Schema(format!("plot data export: {e}")))?;
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Schema(format!("plot data export: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(format!("plot data export: {e}")))
}

pub fn write_plot_data(path: &Path, report: &EstimateReport) -> Result<()> {
    write_atomic(path, plot_data_to_string(report)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::EstimateFlags;

    fn sample_estimate() -> EffectEstimate {
        EffectEstimate {
            log_odds_ratio: -0.8473,
            std_error: 0.296,
            ci_low: -1.4274,
            ci_high: -0.2672,
            p_value: 0.0042,
            n_treated: 100,
            n_control: 100,
            flags: EstimateFlags {
                moderate_at_0_2: true,
                separation_detected: false,
            },
        }
    }

    fn sample_report() -> EstimateReport {
        let effect = GroupEffect {
            group: crate::sequence::GroupName::P2,
            estimate: sample_estimate(),
        };
        let stratum = StratumEffect {
            group: crate::sequence::GroupName::P2,
            stratum: "active".into(),
            estimate: sample_estimate(),
        };
        EstimateReport::new(vec![
            EstimateRow::from_group_effect("direct-week1", 1, &effect),
            EstimateRow::from_stratum_effect("moderated-week1", 1, &stratum),
        ])
    }

    #[test]
    fn report_counts_its_comparisons() {
        let report = sample_report();
        assert_eq!(report.n_comparisons, 2);
        assert_eq!(report.confidence, 0.95);
        assert_eq!(report.rows[0].flags, vec!["moderate-at-0.2"]);
        assert_eq!(report.rows[0].stratum, None);
        assert_eq!(report.rows[1].stratum.as_deref(), Some("active"));
    }

    #[test]
    fn json_round_trip() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        save_report(&path, &report).unwrap();
        assert_eq!(load_report(&path).unwrap(), report);
        // The stratum key is omitted when absent rather than written as null.
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("\"stratum\"").count(), 1);
    }

    #[test]
    fn plot_data_is_one_line_per_row() {
        let report = sample_report();
        let text = plot_data_to_string(&report).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "comparison_id,period,group,stratum,estimate,ci_low,ci_high"
        );
        assert!(lines[1].starts_with("direct-week1,1,P2,,-0.8473,"));
        assert!(lines[2].starts_with("moderated-week1,1,P2,active,"));
    }
}
