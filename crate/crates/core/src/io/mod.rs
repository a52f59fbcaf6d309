//! File formats: design and behavior-model configs (JSON), event logs and
//! assignment tables (CSV), estimate reports, and run manifests.
//!
//! All writers go through an atomic temp-file-and-rename so a crash never
//! leaves a half-written output, and all data files end with a trailing
//! newline and use LF line endings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub mod assignment_csv;
pub mod design_config;
pub mod event_log;
pub mod manifest;
pub mod model_config;
pub mod report;

pub use assignment_csv::{read_assignments, write_assignments};
pub use design_config::{
    design_from_json, design_to_json, load_design, load_design_unvalidated, save_design,
};
pub use event_log::{export_event_log, ingest_event_log, IngestSummary};
pub use manifest::{load_manifest, FileDigest, RunManifest};
pub use model_config::{load_model, model_from_json, model_to_json, save_model};
pub use report::{load_report, save_report, write_plot_data, EstimateReport, EstimateRow};

/// Write `bytes` to `path` atomically: a sibling temp file is written and
/// fsynced, then renamed over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::other(format!(
            "cannot write to {}: no file name",
            path.display()
        ))))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => tmp_name.into(),
    };
    let write = || -> std::io::Result<()> {
        use std::io::Write as _;
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

/// Map a serde_json error to our parse/schema split: syntax problems are
/// E001, data-shape problems are E002.
pub(crate) fn classify_json(context: &str, err: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match err.classify() {
        Category::Syntax | Category::Eof => Error::Parse(format!("{context}: {err}")),
        _ => Error::Schema(format!("{context}: {err}")),
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}
