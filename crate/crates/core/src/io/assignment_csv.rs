//! Assignment tables: one CSV row per learner per period.
//!
//! Schema (header required, in this order):
//!
//! ```text
//! learner_id,period,arm_id,eligible
//! ```
//!
//! `eligible` records whether the learner passed the decision point's
//! eligibility predicate and was freshly randomized (`1`), or received the
//! arm through a fallback or replication (`0`). Rows are written sorted by
//! (learner, period).

use std::io::Read;
use std::path::Path;

use crate::assign::AssignmentRecord;
use crate::design::ArmId;
use crate::error::{Error, Result};

use super::write_atomic;

pub const ASSIGNMENT_HEADER: [&str; 4] = ["learner_id", "period", "arm_id", "eligible"];

/// Render assignments as CSV text, sorted by (learner, period).
pub fn assignments_to_string(records: &[AssignmentRecord]) -> Result<String> {
    let mut sorted: Vec<&AssignmentRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.learner_id, a.period).cmp(&(&b.learner_id, b.period)));

    let mut writer = csv::Writer::from_writer(Vec::new());
    let written: std::result::Result<(), csv::Error> = (|| {
        writer.write_record(ASSIGNMENT_HEADER)?;
        for rec in &sorted {
            let period = rec.period.to_string();
            writer.write_record([
                rec.learner_id.as_str(),
                period.as_str(),
                rec.arm_id.as_str(),
                if rec.eligible { "1" } else { "0" },
            ])?;
        }
        Ok(())
    })();
    written.map_err(|e| Error::Schema(format!("assignment export: {e}")))?;
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Schema(format!("assignment export: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(format!("assignment export: {e}")))
}

/// Write an assignment table atomically.
pub fn write_assignments(path: &Path, records: &[AssignmentRecord]) -> Result<()> {
    write_atomic(path, assignments_to_string(records)?.as_bytes())
}

fn read_from_reader<R: Read>(reader: R) -> Result<Vec<AssignmentRecord>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Parse(format!("assignment table header: {e}")))?;
    if headers.iter().collect::<Vec<_>>() != ASSIGNMENT_HEADER {
        return Err(Error::Schema(format!(
            "assignment table header must be exactly {:?}, got {:?}",
            ASSIGNMENT_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    for row in csv_reader.records() {
        let row = row.map_err(|e| Error::Parse(format!("assignment table: {e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != ASSIGNMENT_HEADER.len() {
            return Err(Error::Schema(format!(
                "assignment table line {line}: expected {} fields, got {}",
                ASSIGNMENT_HEADER.len(),
                row.len()
            )));
        }
        let learner_id = row[0].trim().to_string();
        if learner_id.is_empty() {
            return Err(Error::Schema(format!(
                "assignment table line {line}: empty learner_id"
            )));
        }
        let period: u32 = row[1].trim().parse().map_err(|_| {
            Error::Parse(format!(
                "assignment table line {line}: period must be a positive integer, got {:?}",
                &row[1]
            ))
        })?;
        if period == 0 {
            return Err(Error::Schema(format!(
                "assignment table line {line}: period must be at least 1"
            )));
        }
        let eligible = match row[3].trim().to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse(format!(
                    "assignment table line {line}: eligible must be 0/1/true/false, got {other:?}"
                )))
            }
        };
        records.push(AssignmentRecord {
            learner_id,
            period,
            arm_id: ArmId::new(row[2].trim()),
            eligible,
        });
    }
    Ok(records)
}

/// Read an assignment table. Arms are not checked against a design here;
/// consumers that need that should resolve them against their design.
pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRecord>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    read_from_reader(file)
}

/// Read an assignment table from in-memory text.
pub fn read_assignments_str(text: &str) -> Result<Vec<AssignmentRecord>> {
    read_from_reader(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::{assign_trial, NoFeedback};
    use crate::design::percs_design;
    use crate::seed::SeedSpec;

    #[test]
    fn round_trip_preserves_assignments() {
        let design = percs_design();
        let ids: Vec<String> = (0..25).map(|i| format!("L{i:03}")).collect();
        let table = assign_trial(&design, &ids, &NoFeedback, &SeedSpec::new(8)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assignments.csv");
        write_assignments(&path, &table.records).unwrap();
        let back = read_assignments(&path).unwrap();
        assert_eq!(back, table.records);
    }

    #[test]
    fn rows_are_sorted_on_write() {
        let records = vec![
            AssignmentRecord {
                learner_id: "B".into(),
                period: 1,
                arm_id: ArmId::new("T1"),
                eligible: true,
            },
            AssignmentRecord {
                learner_id: "A".into(),
                period: 2,
                arm_id: ArmId::new("T2"),
                eligible: false,
            },
            AssignmentRecord {
                learner_id: "A".into(),
                period: 1,
                arm_id: ArmId::new("T3"),
                eligible: true,
            },
        ];
        let text = assignments_to_string(&records).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "learner_id,period,arm_id,eligible",
                "A,1,T3,1",
                "A,2,T2,0",
                "B,1,T1,1",
            ]
        );
    }

    #[test]
    fn bad_rows_are_rejected() {
        let good_header = "learner_id,period,arm_id,eligible\n";
        let err = read_assignments_str("learner,period,arm_id,eligible\n").unwrap_err();
        assert_eq!(err.code(), "E002");

        let err = read_assignments_str(&format!("{good_header}L1,zero,T1,1\n")).unwrap_err();
        assert_eq!(err.code(), "E001");

        let err = read_assignments_str(&format!("{good_header}L1,0,T1,1\n")).unwrap_err();
        assert_eq!(err.code(), "E002");

        let err = read_assignments_str(&format!("{good_header}L1,1,T1,maybe\n")).unwrap_err();
        assert_eq!(err.code(), "E001");
    }
}
