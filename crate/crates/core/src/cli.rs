//! Command-line front end. Each subcommand reads and writes flat files so
//! stages can run in isolation; `run` returns the text destined for stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cem::{application_rows, cem_report, read_applications, write_applications, BootstrapConfig};
use crate::counterfactual::run_pair;
use crate::error::{Error, Result};
use crate::matching::{CallLists, MatchConfig, MatchOutcome};
use crate::population::{
    generate_population, load_population, save_population, ApplicantId, Population, ProgramId, ScenarioConfig, Track,
    APPLICANTS_FILE, PROGRAMS_FILE, SCORES_FILE,
};
use crate::prestige::{percentile_ranks, prestige_scores, PrestigeBasis};
use crate::quota::{verify_flags, QuotaRate, QuotaRule};
use crate::report::{analyze, now_epoch, sha256_hex, track_label, ComparisonReport, RunManifest};
use crate::SCHEMA_VERSION;

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const COMPARE_FILE: &str = "compare.json";
pub const APPLICATIONS_FILE: &str = "applications.csv";

#[derive(Debug, Parser)]
#[command(name = "quotamatch", version, about = "Scholarship call-quota simulator and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic population from a scenario config.
    Generate(GenerateArgs),
    /// Run a quota-off / quota-on pair and write the counterfactual report.
    Simulate(SimulateArgs),
    /// Run two quota rules against the same population.
    Compare(CompareArgs),
    /// Check a call list against a quota rate.
    QuotaAudit(QuotaAuditArgs),
    /// Raw and matched admissibility gaps from an applications file.
    Cem(CemArgs),
    /// Prestige scores from an outcome file.
    Prestige(PrestigeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario config (JSON). Defaults to the calibrated 2016 scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory holding applicants.csv, programs.csv and committee scores.
    #[arg(long)]
    pub population: PathBuf,
    /// Quota rule for the quota-on arm.
    #[arg(long, default_value = "plus2floor5")]
    pub rule: QuotaRule,
    #[arg(long, default_value = "all")]
    pub track: TrackFilter,
    /// Matching settings; defaults to the population's config.json if any.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub population: PathBuf,
    #[arg(long, default_value = "plus2floor5")]
    pub rule_a: QuotaRule,
    #[arg(long, default_value = "floor5")]
    pub rule_b: QuotaRule,
    #[arg(long, default_value = "all")]
    pub track: TrackFilter,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct QuotaAuditArgs {
    /// CSV with columns position,applicant_id,scholarship.
    #[arg(long)]
    pub calllist: PathBuf,
    /// Quota rate in percent.
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CemArgs {
    #[arg(long)]
    pub applications: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub resamples: usize,
    #[arg(long, default_value_t = BootstrapConfig::default().seed)]
    pub seed: u64,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PrestigeArgs {
    /// Outcome CSV written by `simulate` (applicant_id,program_id,achieved_rank).
    #[arg(long)]
    pub outcome: PathBuf,
    /// Population directory the outcome came from.
    #[arg(long)]
    pub population: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackFilter(pub Option<Track>);

impl std::str::FromStr for TrackFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            Ok(TrackFilter(None))
        } else {
            s.parse().map(|t| TrackFilter(Some(t)))
        }
    }
}

fn progress(msg: impl AsRef<str>) {
    log::info!("{}", msg.as_ref());
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Execute one subcommand, returning what should go to stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::QuotaAudit(a) => cmd_quota_audit(&a.calllist, a.q, a.json),
        Command::Cem(a) => cmd_cem(&a),
        Command::Prestige(a) => cmd_prestige(&a),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<String> {
    let started = now_epoch();
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    progress(format!("generating {} applicants, {} programs", cfg.n_applicants(), cfg.n_programs()));
    let pop = generate_population(&cfg)?;
    ensure_dir(&args.out)?;
    save_population(&pop, &args.out)?;
    let cfg_json = cfg.to_json()? + "\n";
    write_text(&args.out.join(CONFIG_FILE), &cfg_json)?;
    RunManifest::new("generate", sha256_hex(cfg_json.as_bytes()), Some(cfg.seed), started)
        .finish(&args.out, &[APPLICANTS_FILE, PROGRAMS_FILE, SCORES_FILE, CONFIG_FILE])?;
    let summary = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "applicants": pop.applicants.len(),
        "scholarship": pop.n_scholarship(),
        "programs": pop.programs.len(),
        "out": args.out,
    });
    Ok(if args.json { to_json(&summary)? } else { format!("wrote population to {}\n", args.out.display()) })
}

fn match_config(explicit: Option<&Path>, population: &Path) -> Result<(MatchConfig, String)> {
    let path = match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => Some(population.join(CONFIG_FILE)).filter(|p| p.exists()),
    };
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let cfg = ScenarioConfig::from_json(&text)?;
            Ok((cfg.matching, sha256_hex(text.as_bytes())))
        }
        None => Ok((MatchConfig::default(), sha256_hex(b"default"))),
    }
}

fn load_nonempty(dir: &Path) -> Result<Population> {
    let pop = load_population(dir)?;
    if pop.applicants.is_empty() {
        return Err(Error::Domain(format!("population in {} has no applicants", dir.display())));
    }
    if pop.programs.is_empty() {
        return Err(Error::Domain(format!("population in {} has no programs", dir.display())));
    }
    Ok(pop)
}

fn write_outcome(path: &Path, outcome: &MatchOutcome) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "applicant_id,program_id,achieved_rank").map_err(io)?;
    for (aid, pid) in &outcome.assignment {
        let rank = outcome.achieved_rank.get(aid).copied().flatten();
        writeln!(
            w,
            "{aid},{},{}",
            pid.map(|p| p.to_string()).unwrap_or_default(),
            rank.map(|r| r.to_string()).unwrap_or_default()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read an outcome CSV back (assignment and achieved rank only).
pub fn read_outcome(path: &Path) -> Result<MatchOutcome> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut outcome = MatchOutcome::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Parse { path: path.to_path_buf(), line, msg: format!("bad {what}") };
        let aid: ApplicantId = rec.get(0).unwrap_or("").parse().map_err(|_| bad("applicant_id"))?;
        let pid: Option<ProgramId> = match rec.get(1).unwrap_or("") {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("program_id"))?),
        };
        let rank: Option<u32> = match rec.get(2).unwrap_or("") {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("achieved_rank"))?),
        };
        outcome.assignment.insert(aid, pid);
        outcome.achieved_rank.insert(aid, rank);
    }
    Ok(outcome)
}

fn write_thresholds(path: &Path, lists: &CallLists, outcome: &MatchOutcome) -> Result<()> {
    let mut text = String::from("program_id,quota_rate,list_length,last_offer_position\n");
    for (pid, list) in &lists.lists {
        let rate = lists.rates.get(pid).map_or(0.0, |r| r.value());
        let depth = outcome.last_offer_position.get(pid).copied().unwrap_or(0);
        let _ = writeln!(text, "{pid},{rate},{},{depth}", list.len());
    }
    write_text(path, &text)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let started = now_epoch();
    let (mcfg, cfg_hash) = match_config(args.config.as_deref(), &args.population)?;
    let pop = load_nonempty(&args.population)?;
    progress(format!("simulating {} applicants under {}", pop.applicants.len(), args.rule));
    let pair = run_pair(&pop, args.rule, &mcfg)?;
    let (report, _) = analyze(&pop, &pair, args.track.0)?;
    let json = report.to_json()?;

    ensure_dir(&args.out)?;
    write_text(&args.out.join(REPORT_FILE), &json)?;
    write_outcome(&args.out.join("outcome_off.csv"), &pair.off)?;
    write_outcome(&args.out.join("outcome_on.csv"), &pair.on)?;
    write_thresholds(&args.out.join("thresholds_off.csv"), &pair.lists_off, &pair.off)?;
    write_thresholds(&args.out.join("thresholds_on.csv"), &pair.lists_on, &pair.on)?;
    write_applications(&args.out.join(APPLICATIONS_FILE), &application_rows(&pop, &pair.off, &pair.lists_off))?;
    RunManifest::new("simulate", cfg_hash, None, started).finish(
        &args.out,
        &[
            REPORT_FILE,
            "outcome_off.csv",
            "outcome_on.csv",
            "thresholds_off.csv",
            "thresholds_on.csv",
            APPLICATIONS_FILE,
        ],
    )?;
    progress(format!("{} compliers out of {} scholarship applicants", report.compliers, report.n_scholarship));
    Ok(if args.json {
        json
    } else {
        format!(
            "rule {} ({}): {} compliers ({:.2}% of scholarship applicants), ATE {}, ITT {:.4}\n",
            report.rule,
            report.track,
            report.compliers,
            100.0 * report.compliance,
            report.ate.map_or("n/a".to_string(), |a| format!("{a:.3}")),
            report.itt
        )
    })
}

pub fn cmd_compare(args: &CompareArgs) -> Result<String> {
    let started = now_epoch();
    let (mcfg, cfg_hash) = match_config(args.config.as_deref(), &args.population)?;
    let pop = load_nonempty(&args.population)?;
    progress(format!("comparing {} vs {}", args.rule_a, args.rule_b));
    let (a, b) = rayon::join(|| run_pair(&pop, args.rule_a, &mcfg), || run_pair(&pop, args.rule_b, &mcfg));
    let (report_a, _) = analyze(&pop, &a?, args.track.0)?;
    let (report_b, _) = analyze(&pop, &b?, args.track.0)?;
    let cmp = ComparisonReport::new(report_a, report_b);
    let json = to_json(&cmp)?;
    ensure_dir(&args.out)?;
    write_text(&args.out.join(COMPARE_FILE), &json)?;
    RunManifest::new("compare", cfg_hash, None, started).finish(&args.out, &[COMPARE_FILE])?;
    Ok(if args.json {
        json
    } else {
        format!(
            "{}: {} compliers; {}: {} compliers; reduction {}\n",
            cmp.rule_a,
            cmp.complier_a,
            cmp.rule_b,
            cmp.complier_b,
            cmp.reduction.map_or("n/a".to_string(), |r| format!("{:.1}%", 100.0 * r))
        )
    })
}

#[derive(Debug, Serialize)]
struct AuditReport {
    schema_version: u32,
    q: f64,
    length: usize,
    scholarship: usize,
    compliant: bool,
    first_violation: Option<usize>,
}

/// Read a call list (position,applicant_id,scholarship) in position order.
pub fn read_call_list(path: &Path) -> Result<Vec<(String, bool)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows: BTreeMap<usize, (String, bool)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let pos: usize = rec.get(0).unwrap_or("").parse().map_err(|_| bad("bad position".into()))?;
        let id = rec.get(1).filter(|s| !s.is_empty()).ok_or_else(|| bad("missing applicant_id".into()))?;
        let s = crate::population::parse_bool(rec.get(2).unwrap_or("")).map_err(bad)?;
        if rows.insert(pos, (id.to_string(), s)).is_some() {
            return Err(bad(format!("position {pos} appears twice")));
        }
    }
    for (expected, &pos) in (1..).zip(rows.keys()) {
        if pos != expected {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("positions must run 1..n, found {pos} where {expected} was expected"),
            });
        }
    }
    Ok(rows.into_values().collect())
}

pub fn cmd_quota_audit(path: &Path, q: f64, json: bool) -> Result<String> {
    let q = QuotaRate::new(q).map_err(|e| Error::Config(e.to_string()))?;
    let list = read_call_list(path)?;
    let flags: Vec<bool> = list.iter().map(|(_, s)| *s).collect();
    let verdict = verify_flags(&flags, q);
    let report = AuditReport {
        schema_version: SCHEMA_VERSION,
        q: q.value(),
        length: flags.len(),
        scholarship: flags.iter().filter(|&&s| s).count(),
        compliant: verdict.compliant,
        first_violation: verdict.first_violation,
    };
    if json {
        return to_json(&report);
    }
    Ok(match verdict.first_violation {
        None => format!("compliant at {q} ({} entries, {} scholarship)\n", report.length, report.scholarship),
        Some(k) => {
            format!("NOT compliant at {q}: prefix of length {k} ({}) lacks scholarship holders\n", list[k - 1].0)
        }
    })
}

pub fn cmd_cem(args: &CemArgs) -> Result<String> {
    let rows = read_applications(&args.applications)?;
    progress(format!("{} application rows", rows.len()));
    let boot = BootstrapConfig { resamples: args.resamples, seed: args.seed };
    let report = cem_report(&rows, &boot)?;
    let json = to_json(&report)?;
    if let Some(out) = &args.out {
        write_text(out, &json)?;
    }
    Ok(if args.json {
        json
    } else {
        format!(
            "raw {:+.4} (se {:.4}); matched {:+.4} (se {:.4}); strata used {}, dropped {}\n",
            report.raw.est,
            report.raw.se,
            report.matched.est,
            report.matched.se,
            report.strata_used,
            report.strata_dropped
        )
    })
}

pub fn cmd_prestige(args: &PrestigeArgs) -> Result<String> {
    let pop = load_nonempty(&args.population)?;
    let outcome = read_outcome(&args.outcome)?;
    let pct = percentile_ranks(&pop.applicants)?;
    let table = prestige_scores(&outcome, &pct, PrestigeBasis::QuotaOff)?;
    let types: BTreeMap<ProgramId, _> = pop.programs.iter().map(|p| (p.id, p.ptype)).collect();
    let mut csv = String::from("program_id,ptype,N,mean_percentile,prestige\n");
    for (pid, score) in &table.prestige {
        let ptype = types.get(pid).ok_or_else(|| Error::Referential(format!("outcome names unknown program {pid}")))?;
        let _ = writeln!(csv, "{pid},{ptype},{},{},{score}", table.weights[pid], table.mean_percentile[pid]);
    }
    match &args.out {
        Some(path) => {
            write_text(path, &csv)?;
            Ok(String::new())
        }
        None => Ok(csv),
    }
}

/// Label used in logs and reports for a track filter.
pub fn describe_track(filter: TrackFilter) -> String {
    track_label(filter.0)
}
