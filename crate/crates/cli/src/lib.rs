//! Command-line front end for the trial toolkit.
//!
//! Five subcommands cover the pipeline: `validate` checks a design,
//! `simulate` draws a synthetic cohort and writes its event log, `analyze`
//! estimates effects from an event log, `power` sizes a planned comparison
//! by Monte Carlo, and `replay` re-runs a recorded command and verifies the
//! outputs byte for byte.
//!
//! Every command prints one JSON document to stdout. Commands given `--out`
//! also write their outputs plus a `manifest.json` into that directory, the
//! manifest last so its presence marks a completed run. Failures print a
//! single line starting with a stable error code (`E001`, `E201`, ...) to
//! stderr and exit nonzero; argument errors never leave partial outputs
//! because all inputs are parsed and all results computed before anything
//! is written.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use srt_core::cohort::{Country, LearnerRecord};
use srt_core::design::{
    enumerate_sequences, percs_ab_design, percs_design, validate_design, TrialDesign,
};
use srt_core::estimate::{
    average_treatment_effect, delayed_effect, moderator_effect, power_monte_carlo,
    sequence_return_proportion, CohortSpec, ComparisonSpec, ModeratorSpec, EFFECT_CONFIDENCE,
};
use srt_core::io::assignment_csv::assignments_to_string;
use srt_core::io::event_log::event_log_to_string;
use srt_core::io::manifest::{file_sha256, sha256_hex};
use srt_core::io::report::{plot_data_to_string, report_to_json};
use srt_core::io::{
    design_to_json, ingest_event_log, load_design, load_design_unvalidated, load_manifest,
    load_model, write_atomic, EstimateReport, EstimateRow, FileDigest, RunManifest,
};
use srt_core::seed::SeedSpec;
use srt_core::sequence::{parse_pattern, resolve_group, ArmGroup, GroupName};
use srt_core::simulate::{simulate_cohort, synthetic_profiles};
use srt_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "srt", version, about = "Sequential randomized trial toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a trial design and report every violation
    Validate(ValidateArgs),
    /// Simulate a cohort under a behavior model and write its event log
    Simulate(SimulateArgs),
    /// Estimate effects from an event log
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Monte-Carlo power for a planned comparison
    Power(PowerArgs),
    /// Re-run a recorded command and verify byte-identical outputs
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Design file, or a builtin name (percs, percs-ab)
    #[arg(long)]
    pub design: String,
    /// Directory for validation.json and manifest.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Design file, or a builtin name (percs, percs-ab)
    #[arg(long)]
    pub design: String,
    /// Behavior model file
    #[arg(long)]
    pub model: PathBuf,
    /// Cohort size
    #[arg(long)]
    pub n: usize,
    /// Master seed; falls back to the SRT_SEED environment variable
    #[arg(long)]
    pub seed: Option<u64>,
    /// Country mix, e.g. "IN=0.4,US=0.35,other=0.25" (default: all "other")
    #[arg(long)]
    pub mix: Option<String>,
    /// Directory for events.csv, assignments.csv and manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    /// Return proportions for learners matching sequence patterns
    Sequence(SequenceArgs),
    /// Average effect of arm groups versus control on next-period activity
    Ate(AteArgs),
    /// Effect of an earlier arm on a later outcome period
    Delayed(DelayedArgs),
    /// Group effects stratified by a pre-randomization moderator
    Moderator(ModeratorArgs),
}

#[derive(Args, Debug)]
pub struct AnalyzeIo {
    /// Design file, or a builtin name (percs, percs-ab)
    #[arg(long)]
    pub design: String,
    /// Event-log CSV to analyze
    #[arg(long)]
    pub log: PathBuf,
    /// Directory for report.json, plot_data.csv and manifest.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SequenceArgs {
    #[command(flatten)]
    pub io: AnalyzeIo,
    /// Sequence pattern like "(E1,E0,*)"; repeat the flag to compare several
    #[arg(long = "pattern", required = true)]
    pub patterns: Vec<String>,
    /// Period whose activity is the outcome (default: the post-trial period)
    #[arg(long)]
    pub outcome_period: Option<u32>,
    /// Confidence level for the proportion intervals
    #[arg(long, default_value_t = EFFECT_CONFIDENCE)]
    pub confidence: f64,
}

#[derive(Args, Debug)]
pub struct AteArgs {
    #[command(flatten)]
    pub io: AnalyzeIo,
    /// Randomization period whose assignment is the treatment
    #[arg(long)]
    pub period: u32,
    /// Comma-separated treatment groups (arm ids or group names)
    #[arg(long, default_value = "P0,P1,P2")]
    pub groups: String,
    /// Control group (arm id or group name)
    #[arg(long, default_value = "E0")]
    pub control: String,
}

#[derive(Args, Debug)]
pub struct DelayedArgs {
    #[command(flatten)]
    pub io: AnalyzeIo,
    /// Randomization period whose assignment is the treatment
    #[arg(long)]
    pub period: u32,
    /// Later period whose activity is the outcome
    #[arg(long)]
    pub outcome_period: u32,
    /// Comma-separated treatment groups (arm ids or group names)
    #[arg(long, default_value = "P0,P1,P2")]
    pub groups: String,
    /// Control group (arm id or group name)
    #[arg(long, default_value = "E0")]
    pub control: String,
}

#[derive(Args, Debug)]
pub struct ModeratorArgs {
    #[command(flatten)]
    pub io: AnalyzeIo,
    /// Randomization period whose assignment is the treatment
    #[arg(long)]
    pub period: u32,
    /// prior-activity, country, activity:PERIOD, or
    /// responder:EMAIL_PERIOD:GROUP:RESPONSE_PERIOD
    #[arg(long)]
    pub moderator: String,
    /// Comma-separated treatment groups (arm ids or group names)
    #[arg(long, default_value = "P0,P1,P2")]
    pub groups: String,
    /// Control group (arm id or group name)
    #[arg(long, default_value = "E0")]
    pub control: String,
}

#[derive(Args, Debug)]
pub struct PowerArgs {
    /// Design file, or a builtin name (percs, percs-ab)
    #[arg(long)]
    pub design: String,
    /// Behavior model file
    #[arg(long)]
    pub model: PathBuf,
    /// direct/PERIOD/GROUP/CONTROL, delayed/TREAT/OUTCOME/GROUP/CONTROL, or
    /// gap/PERIOD/MODERATOR/GROUP/CONTROL
    #[arg(long)]
    pub comparison: String,
    /// Cohort size per replication
    #[arg(long)]
    pub n: usize,
    /// Test size for the rejection decision
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Monte-Carlo replications (at least 100)
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Master seed; falls back to the SRT_SEED environment variable
    #[arg(long)]
    pub seed: Option<u64>,
    /// Country mix, e.g. "IN=0.4,US=0.35,other=0.25" (default: all "other")
    #[arg(long)]
    pub mix: Option<String>,
    /// Directory for power.json and manifest.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// manifest.json written by an earlier run
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the re-run's outputs (default: "replay" beside the manifest)
    #[arg(long)]
    pub scratch: Option<PathBuf>,
}

/// Parse argv and run, returning the process exit code: 0 on success, 1 on
/// a domain failure (single `EXXX:` line on stderr), 2 on a usage error.
pub fn run_main(argv: impl IntoIterator<Item = String>) -> u8 {
    let argv: Vec<String> = argv.into_iter().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { 0 } else { 2 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, argv, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            1
        }
    }
}

/// Run a parsed command. `argv` is recorded verbatim in any manifest this
/// run writes (with its first element normalized to "srt"), which is what
/// lets `replay` rebuild the exact invocation later.
pub fn run(cli: Cli, argv: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Validate(args) => cmd_validate(args, &argv, stdout),
        Command::Simulate(args) => cmd_simulate(args, &argv, stdout),
        Command::Analyze(AnalyzeCommand::Sequence(args)) => cmd_sequence(args, &argv, stdout),
        Command::Analyze(AnalyzeCommand::Ate(args)) => cmd_ate(args, &argv, stdout),
        Command::Analyze(AnalyzeCommand::Delayed(args)) => cmd_delayed(args, &argv, stdout),
        Command::Analyze(AnalyzeCommand::Moderator(args)) => cmd_moderator(args, &argv, stdout),
        Command::Power(args) => cmd_power(args, &argv, stdout),
        Command::Replay(args) => cmd_replay(args, stdout),
    }
}

/// Parse string argv and run; test-friendly front door.
pub fn run_args(args: &[&str], stdout: &mut dyn Write) -> Result<()> {
    let argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let cli = Cli::try_parse_from(&argv).map_err(|e| {
        let line = e.to_string().lines().next().unwrap_or("unusable argv").to_string();
        Error::Parse(line)
    })?;
    run(cli, argv, stdout)
}

#[derive(Debug)]
enum DesignSource {
    File(PathBuf),
    Builtin(&'static str),
}

fn resolve_design_with(
    token: &str,
    load: fn(&Path) -> Result<TrialDesign>,
) -> Result<(TrialDesign, DesignSource)> {
    let path = Path::new(token);
    if path.exists() {
        return Ok((load(path)?, DesignSource::File(path.to_path_buf())));
    }
    match token {
        "percs" => Ok((percs_design(), DesignSource::Builtin("percs"))),
        "percs-ab" => Ok((percs_ab_design(), DesignSource::Builtin("percs-ab"))),
        _ => Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{token}: no such file, and not a builtin design (percs, percs-ab)"),
        ))),
    }
}

fn resolve_design(token: &str) -> Result<(TrialDesign, DesignSource)> {
    resolve_design_with(token, load_design)
}

fn builtin_digest(name: &str) -> Result<String> {
    let design = match name {
        "percs" => percs_design(),
        "percs-ab" => percs_ab_design(),
        other => {
            return Err(Error::Schema(format!(
                "unknown builtin design {other:?} in manifest"
            )))
        }
    };
    Ok(sha256_hex(design_to_json(&design).as_bytes()))
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    seed_from(flag, std::env::var("SRT_SEED").ok().as_deref())
}

fn seed_from(flag: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match env {
        Some(text) => text.trim().parse().map_err(|_| {
            Error::Parse(format!("SRT_SEED {text:?} is not an unsigned 64-bit integer"))
        }),
        None => Err(Error::Schema("no seed given: pass --seed or set SRT_SEED".into())),
    }
}

fn parse_u32(what: &str, text: &str) -> Result<u32> {
    text.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what} {text:?} is not a whole number")))
}

fn parse_mix(text: &str) -> Result<Vec<(Country, f64)>> {
    let mut mix = Vec::new();
    for part in text.split(',') {
        let (code, weight) = part.split_once('=').ok_or_else(|| {
            Error::Parse(format!("country mix entry {part:?} is not CODE=WEIGHT"))
        })?;
        let country = match code.trim() {
            "IN" => Country::India,
            "US" => Country::UnitedStates,
            "other" => Country::Other,
            unknown => {
                return Err(Error::Schema(format!(
                    "unknown country code {unknown:?} in mix (use IN, US, other)"
                )))
            }
        };
        let weight: f64 = weight.trim().parse().map_err(|_| {
            Error::Parse(format!("weight {weight:?} in country mix is not a number"))
        })?;
        mix.push((country, weight));
    }
    Ok(mix)
}

fn parse_groups(design: &TrialDesign, list: &str) -> Result<Vec<ArmGroup>> {
    list.split(',').map(|t| resolve_group(design, t.trim())).collect()
}

fn parse_moderator(design: &TrialDesign, text: &str) -> Result<ModeratorSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["prior-activity"] => Ok(ModeratorSpec::PriorActivity),
        ["country"] => Ok(ModeratorSpec::Country),
        ["activity", period] => Ok(ModeratorSpec::Activity {
            measured_period: parse_u32("activity period", period)?,
        }),
        ["responder", email, group, response] => Ok(ModeratorSpec::Responder {
            email_period: parse_u32("email period", email)?,
            group: resolve_group(design, group)?,
            response_period: parse_u32("response period", response)?,
        }),
        _ => Err(Error::Parse(format!(
            "moderator {text:?} is not prior-activity, country, activity:PERIOD, or \
             responder:EMAIL_PERIOD:GROUP:RESPONSE_PERIOD"
        ))),
    }
}

fn parse_comparison(design: &TrialDesign, text: &str) -> Result<ComparisonSpec> {
    let parts: Vec<&str> = text.split('/').collect();
    match parts.as_slice() {
        ["direct", period, group, control] => Ok(ComparisonSpec::DirectEffect {
            period: parse_u32("comparison period", period)?,
            group: GroupName::parse(group),
            control: GroupName::parse(control),
        }),
        ["delayed", treat, outcome, group, control] => Ok(ComparisonSpec::DelayedEffect {
            treat_period: parse_u32("treatment period", treat)?,
            outcome_period: parse_u32("outcome period", outcome)?,
            group: GroupName::parse(group),
            control: GroupName::parse(control),
        }),
        ["gap", period, moderator, group, control] => Ok(ComparisonSpec::ModerationGap {
            period: parse_u32("comparison period", period)?,
            moderator: parse_moderator(design, moderator)?,
            group: GroupName::parse(group),
            control: GroupName::parse(control),
        }),
        _ => Err(Error::Parse(format!(
            "comparison {text:?} is not direct/PERIOD/GROUP/CONTROL, \
             delayed/TREAT/OUTCOME/GROUP/CONTROL, or gap/PERIOD/MODERATOR/GROUP/CONTROL"
        ))),
    }
}

fn pretty(doc: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("json docs always serialize");
    text.push('\n');
    text
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// An output directory plus the manifest describing what lands in it. The
/// manifest is written by `finish`, after every data file, so a directory
/// containing manifest.json always holds a complete run.
struct OutWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutWriter {
    fn create(dir: &Path, argv: &[String], seed: Option<u64>) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut command: Vec<String> = argv.to_vec();
        if let Some(name) = command.first_mut() {
            *name = "srt".into();
        }
        Ok(OutWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest::new(command, seed),
        })
    }

    fn record_design(&mut self, source: &DesignSource, design: &TrialDesign) -> Result<()> {
        match source {
            DesignSource::File(path) => self.manifest.record_input(path),
            DesignSource::Builtin(name) => {
                self.manifest.inputs.push(FileDigest {
                    path: format!("builtin:{name}"),
                    sha256: sha256_hex(design_to_json(design).as_bytes()),
                });
                Ok(())
            }
        }
    }

    fn record_input(&mut self, path: &Path) -> Result<()> {
        self.manifest.record_input(path)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.manifest.record_output(name);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        self.manifest.save(&self.dir.join("manifest.json"))
    }
}

fn cmd_validate(args: ValidateArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let (design, source) = resolve_design_with(&args.design, load_design_unvalidated)?;
    let report = validate_design(&design);
    let sequences = enumerate_sequences(&design).ok().map(|s| s.len());
    let doc = json!({
        "arms": design.arms.len(),
        "decision_points": design.decision_points.len(),
        "n_periods": design.n_periods,
        "mode": design.mode,
        "sequences": sequences,
        "status": if report.is_ok() { "valid" } else { "invalid" },
        "violations": report.violations,
    });
    let text = pretty(&doc);
    stdout.write_all(text.as_bytes())?;
    if let Some(dir) = &args.out {
        let mut out = OutWriter::create(dir, argv, None)?;
        out.record_design(&source, &design)?;
        out.write("validation.json", text.as_bytes())?;
        out.finish()?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    let (design, source) = resolve_design(&args.design)?;
    let model = load_model(&args.model)?;
    let mix = match &args.mix {
        Some(text) => parse_mix(text)?,
        None => vec![(Country::Other, 1.0)],
    };
    let profiles = synthetic_profiles(args.n, &mix)?;
    let cohort = simulate_cohort(&design, &profiles, &model, &SeedSpec::new(seed))?;

    let events = event_log_to_string(&cohort.records)?;
    let assignments = assignments_to_string(&cohort.assignments)?;
    let mut out = OutWriter::create(&args.out, argv, Some(seed))?;
    out.record_design(&source, &design)?;
    out.record_input(&args.model)?;
    out.write("events.csv", events.as_bytes())?;
    out.write("assignments.csv", assignments.as_bytes())?;
    out.finish()?;

    let doc = json!({
        "learners": cohort.records.len(),
        "periods": design.n_periods,
        "emails_sent": cohort.emails_sent,
        "assignment_warnings": cohort.warnings.len(),
        "outputs": ["events.csv", "assignments.csv"],
        "out": args.out.display().to_string(),
    });
    stdout.write_all(pretty(&doc).as_bytes())?;
    Ok(())
}

fn ingest_for_analysis(io: &AnalyzeIo) -> Result<(TrialDesign, DesignSource, Vec<LearnerRecord>)> {
    let (design, source) = resolve_design(&io.design)?;
    let (records, summary) = ingest_event_log(&io.log, &design)?;
    if summary.duplicates_dropped > 0 {
        eprintln!(
            "warning: dropped {} duplicate row(s), keeping each learner's first occurrence",
            summary.duplicates_dropped
        );
    }
    Ok((design, source, records))
}

fn emit_effect_report(
    report: &EstimateReport,
    io: &AnalyzeIo,
    source: &DesignSource,
    design: &TrialDesign,
    argv: &[String],
    stdout: &mut dyn Write,
) -> Result<()> {
    let text = report_to_json(report);
    stdout.write_all(text.as_bytes())?;
    if let Some(dir) = &io.out {
        let mut out = OutWriter::create(dir, argv, None)?;
        out.record_design(source, design)?;
        out.record_input(&io.log)?;
        out.write("report.json", text.as_bytes())?;
        out.write("plot_data.csv", plot_data_to_string(report)?.as_bytes())?;
        out.finish()?;
    }
    Ok(())
}

fn cmd_sequence(args: SequenceArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let (design, source, records) = ingest_for_analysis(&args.io)?;
    let outcome = args.outcome_period.unwrap_or(design.n_periods + 1);
    let mut rows = Vec::new();
    let mut csv = String::from("pattern,n,proportion,ci_low,ci_high\n");
    for text in &args.patterns {
        let pattern = parse_pattern(&design, text)?;
        let est = sequence_return_proportion(&records, &pattern, outcome, args.confidence)?;
        let shown = pattern.format();
        rows.push(json!({
            "pattern": shown,
            "n": est.n,
            "proportion": est.proportion,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
        }));
        // Patterns contain commas, so that column is always quoted.
        csv.push_str(&format!(
            "\"{shown}\",{},{},{},{}\n",
            est.n, est.proportion, est.ci_low, est.ci_high
        ));
    }
    let doc = json!({
        "outcome_period": outcome,
        "confidence": args.confidence,
        "rows": rows,
    });
    let text = pretty(&doc);
    stdout.write_all(text.as_bytes())?;
    if let Some(dir) = &args.io.out {
        let mut out = OutWriter::create(dir, argv, None)?;
        out.record_design(&source, &design)?;
        out.record_input(&args.io.log)?;
        out.write("report.json", text.as_bytes())?;
        out.write("plot_data.csv", csv.as_bytes())?;
        out.finish()?;
    }
    Ok(())
}

fn cmd_ate(args: AteArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let (design, source, records) = ingest_for_analysis(&args.io)?;
    let groups = parse_groups(&design, &args.groups)?;
    let control = resolve_group(&design, args.control.trim())?;
    let effects = average_treatment_effect(&records, args.period, &groups, &control)?;
    let rows: Vec<EstimateRow> = effects
        .iter()
        .map(|e| EstimateRow::from_group_effect("ate", args.period, e))
        .collect();
    let report = EstimateReport::new(rows);
    emit_effect_report(&report, &args.io, &source, &design, argv, stdout)
}

fn cmd_delayed(args: DelayedArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let (design, source, records) = ingest_for_analysis(&args.io)?;
    let groups = parse_groups(&design, &args.groups)?;
    let control = resolve_group(&design, args.control.trim())?;
    let effects = delayed_effect(
        &records,
        args.period,
        args.outcome_period,
        &groups,
        &control,
    )?;
    let id = format!("delayed:{}:{}", args.period, args.outcome_period);
    let rows: Vec<EstimateRow> = effects
        .iter()
        .map(|e| EstimateRow::from_group_effect(&id, args.period, e))
        .collect();
    let report = EstimateReport::new(rows);
    emit_effect_report(&report, &args.io, &source, &design, argv, stdout)
}

fn cmd_moderator(args: ModeratorArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let (design, source, records) = ingest_for_analysis(&args.io)?;
    let moderator = parse_moderator(&design, &args.moderator)?;
    let groups = parse_groups(&design, &args.groups)?;
    let control = resolve_group(&design, args.control.trim())?;
    let strata = moderator_effect(&records, args.period, &moderator, &groups, &control)?;
    let id = format!("moderator:{}", args.moderator);
    let rows: Vec<EstimateRow> = strata
        .iter()
        .map(|s| EstimateRow::from_stratum_effect(&id, args.period, s))
        .collect();
    let report = EstimateReport::new(rows);
    emit_effect_report(&report, &args.io, &source, &design, argv, stdout)
}

fn cmd_power(args: PowerArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    let (design, source) = resolve_design(&args.design)?;
    let model = load_model(&args.model)?;
    let comparison = parse_comparison(&design, &args.comparison)?;
    let cohort = match &args.mix {
        Some(text) => CohortSpec::with_mix(args.n, parse_mix(text)?),
        None => CohortSpec::new(args.n),
    };
    let est = power_monte_carlo(
        &design,
        &model,
        &comparison,
        &cohort,
        args.alpha,
        args.reps,
        &SeedSpec::new(seed),
    )?;

    let doc = json!({
        "comparison": args.comparison,
        "n": args.n,
        "alpha": args.alpha,
        "seed": seed,
        "power": est.power,
        "mc_se": est.mc_se,
        "replications": est.replications,
        "rejections": est.rejections,
        "failures": est.failures,
    });
    let text = pretty(&doc);
    stdout.write_all(text.as_bytes())?;
    if let Some(dir) = &args.out {
        let mut out = OutWriter::create(dir, argv, Some(seed))?;
        out.record_design(&source, &design)?;
        out.record_input(&args.model)?;
        out.write("power.json", text.as_bytes())?;
        out.finish()?;
    }
    Ok(())
}

fn verify_inputs(manifest: &RunManifest) -> Result<()> {
    for input in &manifest.inputs {
        let actual = match input.path.strip_prefix("builtin:") {
            Some(name) => builtin_digest(name)?,
            None => file_sha256(Path::new(&input.path))?,
        };
        if actual != input.sha256 {
            return Err(Error::Schema(format!(
                "input {} has changed since the manifest was recorded",
                input.path
            )));
        }
    }
    Ok(())
}

fn set_out(command: &mut Command, dir: &Path) {
    let dir = dir.to_path_buf();
    match command {
        Command::Validate(a) => a.out = Some(dir),
        Command::Simulate(a) => a.out = dir,
        Command::Analyze(AnalyzeCommand::Sequence(a)) => a.io.out = Some(dir),
        Command::Analyze(AnalyzeCommand::Ate(a)) => a.io.out = Some(dir),
        Command::Analyze(AnalyzeCommand::Delayed(a)) => a.io.out = Some(dir),
        Command::Analyze(AnalyzeCommand::Moderator(a)) => a.io.out = Some(dir),
        Command::Power(a) => a.out = Some(dir),
        Command::Replay(_) => {}
    }
}

fn set_seed(command: &mut Command, seed: Option<u64>) {
    match command {
        Command::Simulate(a) => a.seed = a.seed.or(seed),
        Command::Power(a) => a.seed = a.seed.or(seed),
        _ => {}
    }
}

fn same_dir(a: &Path, b: &Path) -> Result<bool> {
    Ok(std::fs::canonicalize(a)? == std::fs::canonicalize(b)?)
}

fn cmd_replay(args: ReplayArgs, stdout: &mut dyn Write) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    if manifest.command.get(1).map(String::as_str) == Some("replay") {
        return Err(Error::Schema("cannot replay a replay".into()));
    }
    if manifest.outputs.is_empty() {
        return Err(Error::Schema("manifest lists no outputs to compare".into()));
    }
    verify_inputs(&manifest)?;

    let base = match args.manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let scratch = args.scratch.clone().unwrap_or_else(|| base.join("replay"));
    std::fs::create_dir_all(&scratch)?;
    if same_dir(&base, &scratch)? {
        return Err(Error::Schema(
            "scratch directory must differ from the manifest's own directory".into(),
        ));
    }

    let mut cli = Cli::try_parse_from(&manifest.command).map_err(|e| {
        let line = e.to_string().lines().next().unwrap_or("unusable argv").to_string();
        Error::Schema(format!("recorded command does not parse: {line}"))
    })?;
    set_out(&mut cli.command, &scratch);
    set_seed(&mut cli.command, manifest.master_seed);

    // The re-run records the original argv, so even its manifest.json must
    // come out byte-identical. Its stdout is not part of the contract.
    let mut sink = Vec::new();
    run(cli, manifest.command.clone(), &mut sink)?;

    let mut compared = manifest.outputs.clone();
    compared.push("manifest.json".to_string());
    for name in &compared {
        let original = read_bytes(&base.join(name))?;
        let replayed = read_bytes(&scratch.join(name))?;
        if original != replayed {
            return Err(Error::Schema(format!(
                "replay mismatch: {name} differs from the recorded run"
            )));
        }
    }

    let doc = json!({
        "status": "reproduced",
        "compared": compared,
        "scratch": scratch.display().to_string(),
    });
    stdout.write_all(pretty(&doc).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_vec(args: &[&str]) -> (Result<()>, String) {
        let mut buf = Vec::new();
        let res = run_args(args, &mut buf);
        (res, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn seed_resolution_prefers_the_flag() {
        assert_eq!(seed_from(Some(7), Some("9")).unwrap(), 7);
        assert_eq!(seed_from(None, Some("9")).unwrap(), 9);
        assert_eq!(seed_from(None, Some(" 42 ")).unwrap(), 42);
        assert_eq!(seed_from(None, Some("x")).unwrap_err().code(), "E001");
        assert_eq!(seed_from(None, None).unwrap_err().code(), "E002");
    }

    #[test]
    fn seed_env_fallback_reads_srt_seed() {
        std::env::set_var("SRT_SEED", "123");
        assert_eq!(resolve_seed(None).unwrap(), 123);
        std::env::remove_var("SRT_SEED");
    }

    #[test]
    fn mix_parses_codes_and_rejects_unknowns() {
        let mix = parse_mix("IN=0.4,US=0.35,other=0.25").unwrap();
        assert_eq!(mix.len(), 3);
        assert_eq!(mix[0], (Country::India, 0.4));
        assert_eq!(mix[2], (Country::Other, 0.25));
        assert_eq!(parse_mix("XX=1.0").unwrap_err().code(), "E002");
        assert_eq!(parse_mix("IN:1.0").unwrap_err().code(), "E001");
        assert_eq!(parse_mix("IN=lots").unwrap_err().code(), "E001");
    }

    #[test]
    fn moderator_specs_parse_all_four_forms() {
        let design = percs_design();
        assert!(matches!(
            parse_moderator(&design, "prior-activity").unwrap(),
            ModeratorSpec::PriorActivity
        ));
        assert!(matches!(
            parse_moderator(&design, "country").unwrap(),
            ModeratorSpec::Country
        ));
        assert!(matches!(
            parse_moderator(&design, "activity:2").unwrap(),
            ModeratorSpec::Activity { measured_period: 2 }
        ));
        match parse_moderator(&design, "responder:1:E1:2").unwrap() {
            ModeratorSpec::Responder {
                email_period,
                group,
                response_period,
            } => {
                assert_eq!(email_period, 1);
                assert_eq!(response_period, 2);
                assert_eq!(group.name, GroupName::E1);
            }
            other => panic!("wrong spec: {other:?}"),
        }
        assert_eq!(parse_moderator(&design, "responder:1:E1").unwrap_err().code(), "E001");
        assert_eq!(parse_moderator(&design, "activity:x").unwrap_err().code(), "E001");
    }

    #[test]
    fn comparison_specs_parse_all_three_forms() {
        let design = percs_design();
        assert!(matches!(
            parse_comparison(&design, "direct/2/E1/E0").unwrap(),
            ComparisonSpec::DirectEffect { period: 2, .. }
        ));
        assert!(matches!(
            parse_comparison(&design, "delayed/2/4/E1/E0").unwrap(),
            ComparisonSpec::DelayedEffect {
                treat_period: 2,
                outcome_period: 4,
                ..
            }
        ));
        assert!(matches!(
            parse_comparison(&design, "gap/2/prior-activity/E1/E0").unwrap(),
            ComparisonSpec::ModerationGap { period: 2, .. }
        ));
        assert_eq!(parse_comparison(&design, "direct/2/E1").unwrap_err().code(), "E001");
        assert_eq!(parse_comparison(&design, "sideways/2/E1/E0").unwrap_err().code(), "E001");
    }

    #[test]
    fn builtin_designs_resolve_by_name() {
        let (design, _) = resolve_design("percs").unwrap();
        assert_eq!(design.arms.len(), 7);
        let (ab, _) = resolve_design("percs-ab").unwrap();
        assert_eq!(ab.decision_points.len(), 1);
        let err = resolve_design("no-such-design.json").unwrap_err();
        assert_eq!(err.code(), "E401");
    }

    #[test]
    fn validate_reports_the_builtin_design() {
        let (res, out) = run_vec(&["srt", "validate", "--design", "percs"]);
        res.unwrap();
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["status"], "valid");
        assert_eq!(doc["arms"], 7);
        assert_eq!(doc["sequences"], 343);
        assert_eq!(doc["violations"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn validate_surfaces_violations_without_failing() {
        let dir = tempfile::tempdir().unwrap();
        let design = percs_design();
        let mut value = serde_json::to_value(&design).unwrap();
        value["decision_points"][0]["scheme"]["T1"] = 0.5.into();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, value.to_string()).unwrap();

        let (res, out) = run_vec(&["srt", "validate", "--design", path.to_str().unwrap()]);
        res.unwrap();
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["status"], "invalid");
        assert!(!doc["violations"].as_array().unwrap().is_empty());
        assert!(doc["sequences"].is_null());
    }

    #[test]
    fn usage_errors_come_back_as_parse_errors() {
        let mut buf = Vec::new();
        let err = run_args(&["srt", "analyze", "ate", "--period", "2"], &mut buf).unwrap_err();
        assert_eq!(err.code(), "E001");
    }
}
