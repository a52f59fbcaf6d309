//! Email event logs: one CSV row per learner per period.
//!
//! Schema (header required, in this order):
//!
//! ```text
//! learner_id,country,period,arm_id,active_next
//! ```
//!
//! `active_next` is the learner's activity during the period after the row's
//! period (the outcome window of the arm held in that period), written `1` /
//! `0`; `true` / `false` are accepted on ingest. Re-enrollment shows up as a
//! duplicated (learner, period) pair: the first row wins and the drop is
//! counted in the summary. Every learner must have a row for every period.
//!
//! A log carries no record of activity during period 1 itself (the earliest
//! row's outcome is period 2), so ingested records default it to inactive.
//! Estimates that stratify on period-1 activity need records built by the
//! simulation layer instead.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::cohort::{Country, LearnerProfile, LearnerRecord};
use crate::design::{ArmId, TreatmentSequence, TrialDesign};
use crate::error::{Error, Result};

use super::write_atomic;

pub const EVENT_LOG_HEADER: [&str; 5] =
    ["learner_id", "country", "period", "arm_id", "active_next"];

/// Bookkeeping from an ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub learners: usize,
    pub rows_read: usize,
    pub duplicates_dropped: usize,
}

fn parse_flag(text: &str, line: u64) -> Result<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::Parse(format!(
            "event log line {line}: active_next must be 0/1/true/false, got {other:?}"
        ))),
    }
}

struct LearnerRows {
    country: Country,
    by_period: BTreeMap<u32, (ArmId, bool)>,
}

fn ingest_from_reader<R: Read>(
    reader: R,
    design: &TrialDesign,
) -> Result<(Vec<LearnerRecord>, IngestSummary)> {
    design.ensure_valid()?;
    let n_periods = design.n_periods;
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Parse(format!("event log header: {e}")))?;
    if headers.iter().collect::<Vec<_>>() != EVENT_LOG_HEADER {
        return Err(Error::Schema(format!(
            "event log header must be exactly {:?}, got {:?}",
            EVENT_LOG_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut learners: BTreeMap<String, LearnerRows> = BTreeMap::new();
    let mut rows_read = 0usize;
    let mut duplicates_dropped = 0usize;

    for row in csv_reader.records() {
        let row = row.map_err(|e| Error::Parse(format!("event log: {e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != EVENT_LOG_HEADER.len() {
            return Err(Error::Schema(format!(
                "event log line {line}: expected {} fields, got {}",
                EVENT_LOG_HEADER.len(),
                row.len()
            )));
        }
        rows_read += 1;

        let learner_id = row[0].trim().to_string();
        if learner_id.is_empty() {
            return Err(Error::Schema(format!(
                "event log line {line}: empty learner_id"
            )));
        }
        let country = Country::from_code(row[1].trim());
        let period: u32 = row[2].trim().parse().map_err(|_| {
            Error::Parse(format!(
                "event log line {line}: period must be a positive integer, got {:?}",
                &row[2]
            ))
        })?;
        if period == 0 || period > n_periods {
            return Err(Error::Schema(format!(
                "event log line {line}: period {period} outside 1..={n_periods}"
            )));
        }
        let arm_id = ArmId::new(row[3].trim());
        if design.arm(&arm_id).is_none() {
            return Err(Error::UnknownArm(format!(
                "event log line {line}: arm {arm_id} is not in the design"
            )));
        }
        let active_next = parse_flag(&row[4], line)?;

        let entry = learners.entry(learner_id.clone()).or_insert_with(|| LearnerRows {
            country,
            by_period: BTreeMap::new(),
        });
        if entry.by_period.contains_key(&period) {
            duplicates_dropped += 1;
            continue;
        }
        if entry.country != country {
            return Err(Error::Schema(format!(
                "event log line {line}: learner {learner_id} listed under both {} and {}",
                entry.country.code(),
                country.code()
            )));
        }
        entry.by_period.insert(period, (arm_id, active_next));
    }

    let mut records = Vec::with_capacity(learners.len());
    for (learner_id, rows) in learners {
        let mut arms = Vec::with_capacity(n_periods as usize);
        let mut activity = vec![false; n_periods as usize + 1];
        for period in 1..=n_periods {
            let (arm, active_next) = rows.by_period.get(&period).ok_or_else(|| {
                Error::IncompletePeriods(format!(
                    "learner {learner_id} has no row for period {period}"
                ))
            })?;
            arms.push(arm.clone());
            activity[period as usize] = *active_next;
        }
        records.push(LearnerRecord {
            profile: LearnerProfile::new(learner_id, rows.country),
            sequence: TreatmentSequence::new(arms),
            activity,
        });
    }

    let summary = IngestSummary {
        learners: records.len(),
        rows_read,
        duplicates_dropped,
    };
    Ok((records, summary))
}

/// Ingest an event log file against a design.
pub fn ingest_event_log(
    path: &Path,
    design: &TrialDesign,
) -> Result<(Vec<LearnerRecord>, IngestSummary)> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    ingest_from_reader(file, design)
}

/// Ingest an event log from in-memory text (same rules as the file form).
pub fn ingest_event_log_str(
    text: &str,
    design: &TrialDesign,
) -> Result<(Vec<LearnerRecord>, IngestSummary)> {
    ingest_from_reader(text.as_bytes(), design)
}

/// Render records as event-log CSV text, sorted by (learner, period).
/// Period-1 activity has no row of its own and is not preserved.
pub fn event_log_to_string(records: &[LearnerRecord]) -> Result<String> {
    let mut rows: Vec<(&str, Country, u32, &ArmId, bool)> = Vec::new();
    for rec in records {
        let n = rec.sequence.arms.len();
        if rec.activity.len() != n + 1 {
            return Err(Error::Schema(format!(
                "record {} has {} activity entries for {} periods; need {}",
                rec.profile.learner_id,
                rec.activity.len(),
                n,
                n + 1
            )));
        }
        for (i, arm) in rec.sequence.arms.iter().enumerate() {
            rows.push((
                &rec.profile.learner_id,
                rec.profile.country,
                i as u32 + 1,
                arm,
                rec.activity[i + 1],
            ));
        }
    }
    rows.sort_by(|a, b| (a.0, a.2).cmp(&(b.0, b.2)));

    let mut writer = csv::Writer::from_writer(Vec::new());
    let written: std::result::Result<(), csv::Error> = (|| {
        writer.write_record(EVENT_LOG_HEADER)?;
        for (id, country, period, arm, active) in &rows {
            let period = period.to_string();
            writer.write_record([
                *id,
                country.code(),
                period.as_str(),
                arm.as_str(),
                if *active { "1" } else { "0" },
            ])?;
        }
        Ok(())
    })();
    written.map_err(|e| Error::Schema(format!("event log export: {e}")))?;
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Schema(format!("event log export: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(format!("event log export: {e}")))
}

/// Write records to an event log file atomically.
pub fn export_event_log(path: &Path, records: &[LearnerRecord]) -> Result<()> {
    write_atomic(path, event_log_to_string(records)?.as_bytes())
}
