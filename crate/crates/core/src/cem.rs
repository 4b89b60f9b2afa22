//! Scholarship vs non-scholarship differences in the probability of being
//! admissible, raw (matched on program only) and after coarsened exact
//! matching on applicant profile, with applicant-clustered bootstrap errors.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{admissible_set, CallLists, MatchOutcome};
use crate::population::{parse_bool, Gender, Population};
use crate::stats::sample_sd;
use crate::SCHEMA_VERSION;

/// Programs with fewer applicants than this are left out.
pub const MIN_PROGRAM_APPLICANTS: usize = 10;

/// One application (applicant x program) with its admissibility flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationRow {
    pub applicant_id: String,
    pub program_id: String,
    #[serde(with = "flag")]
    pub scholarship: bool,
    #[serde(with = "flag")]
    pub admissible: bool,
    pub gpa: f64,
    pub gender: String,
    pub region: String,
    pub track: String,
    pub specialization: String,
}

mod flag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_bool(&raw).map_err(serde::de::Error::custom)
    }
}

impl ApplicationRow {
    pub fn gpa_bin(&self) -> i32 {
        gpa_bin(self.gpa)
    }
}

/// One-point bins over [10, 20); everything below 10 shares bin 9 and a
/// perfect 20 falls in the top bin.
pub fn gpa_bin(gpa: f64) -> i32 {
    if gpa < 10.0 {
        9
    } else {
        (gpa.floor() as i32).min(19)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { resamples: 500, seed: 20_170_101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedEstimate {
    /// Scholarship minus non-scholarship admissibility rate, weighted by the
    /// scholarship count of each stratum.
    pub est: f64,
    pub se: f64,
    pub strata_used: usize,
    pub strata_dropped: usize,
    pub programs_used: usize,
    pub programs_excluded: usize,
    pub rows_used: usize,
    /// Resamples in which no stratum contained both groups.
    pub failed_resamples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strata {
    Program,
    Profile,
}

/// Applications regrouped by applicant (the bootstrap cluster), each
/// application reduced to `(stratum, scholarship, admissible)`.
struct Prepared {
    clusters: Vec<Vec<(usize, bool, bool)>>,
    n_strata: usize,
    programs_used: usize,
    programs_excluded: usize,
    rows_used: usize,
}

fn prepare<'a>(rows: &'a [ApplicationRow], strata: Strata) -> Result<Prepared> {
    let mut pool: HashMap<&str, (BTreeSet<&str>, usize)> = HashMap::new();
    for r in rows {
        let e = pool.entry(r.program_id.as_str()).or_default();
        e.0.insert(r.applicant_id.as_str());
        e.1 += usize::from(r.scholarship);
    }
    let eligible: BTreeSet<&str> =
        pool.iter().filter(|(_, (apps, s))| apps.len() >= MIN_PROGRAM_APPLICANTS && *s > 0).map(|(&p, _)| p).collect();
    if eligible.is_empty() {
        return Err(Error::Estimation(format!(
            "no program has at least {MIN_PROGRAM_APPLICANTS} applicants including a scholarship holder \
             ({} programs seen)",
            pool.len()
        )));
    }

    type Key<'a> = (&'a str, i32, &'a str, &'a str, &'a str, &'a str);
    fn key_of(r: &ApplicationRow, strata: Strata) -> Key<'_> {
        match strata {
            Strata::Program => (r.program_id.as_str(), 0, "", "", "", ""),
            Strata::Profile => (
                r.program_id.as_str(),
                r.gpa_bin(),
                r.gender.as_str(),
                r.region.as_str(),
                r.track.as_str(),
                r.specialization.as_str(),
            ),
        }
    }
    let key = |r: &'a ApplicationRow| key_of(r, strata);
    let used: Vec<&ApplicationRow> = rows.iter().filter(|r| eligible.contains(r.program_id.as_str())).collect();
    // Canonical numbering (sorted keys, sorted applicant ids) makes the
    // result independent of row order.
    let keys: BTreeSet<Key<'_>> = used.iter().map(|r| key(r)).collect();
    let stratum: HashMap<Key<'_>, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let applicants: BTreeSet<&str> = used.iter().map(|r| r.applicant_id.as_str()).collect();
    let cluster: HashMap<&str, usize> = applicants.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let mut clusters = vec![Vec::new(); applicants.len()];
    for r in &used {
        clusters[cluster[r.applicant_id.as_str()]].push((stratum[&key(r)], r.scholarship, r.admissible));
    }
    Ok(Prepared {
        clusters,
        n_strata: keys.len(),
        programs_used: eligible.len(),
        programs_excluded: pool.len() - eligible.len(),
        rows_used: used.len(),
    })
}

/// Per-stratum (treated n, treated admissible, control n, control admissible).
fn accumulate(acc: &mut [[f64; 4]], cluster: &[(usize, bool, bool)], weight: f64) {
    for &(s, treated, y) in cluster {
        let cell = &mut acc[s];
        let (n, k) = if treated { (0, 1) } else { (2, 3) };
        cell[n] += weight;
        if y {
            cell[k] += weight;
        }
    }
}

/// Treated-weighted mean of within-stratum differences, plus the number of
/// strata holding both groups.
fn combine(acc: &[[f64; 4]]) -> Option<(f64, usize)> {
    let (mut num, mut den, mut used) = (0.0, 0.0, 0);
    for c in acc {
        if c[0] > 0.0 && c[2] > 0.0 {
            num += c[0] * (c[1] / c[0] - c[3] / c[2]);
            den += c[0];
            used += 1;
        }
    }
    (used > 0).then(|| (num / den, used))
}

fn estimate(rows: &[ApplicationRow], strata: Strata, boot: &BootstrapConfig) -> Result<StratifiedEstimate> {
    let prep = prepare(rows, strata)?;
    let mut acc = vec![[0.0; 4]; prep.n_strata];
    for c in &prep.clusters {
        accumulate(&mut acc, c, 1.0);
    }
    let (est, strata_used) = combine(&acc).ok_or_else(|| {
        Error::Estimation(format!(
            "all {} strata lack either scholarship or non-scholarship applications",
            prep.n_strata
        ))
    })?;

    let n = prep.clusters.len();
    let draws: Vec<Option<f64>> = (0..boot.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(boot.seed);
            rng.set_stream(b as u64);
            let mut times = vec![0u32; n];
            for _ in 0..n {
                times[rng.gen_range(0..n)] += 1;
            }
            let mut acc = vec![[0.0; 4]; prep.n_strata];
            for (c, &t) in prep.clusters.iter().zip(&times) {
                if t > 0 {
                    accumulate(&mut acc, c, f64::from(t));
                }
            }
            combine(&acc).map(|(e, _)| e)
        })
        .collect();
    let ok: Vec<f64> = draws.iter().flatten().copied().collect();
    let se = sample_sd(&ok).ok_or_else(|| {
        Error::Estimation(format!("only {} of {} bootstrap resamples were estimable", ok.len(), boot.resamples))
    })?;
    Ok(StratifiedEstimate {
        est,
        se,
        strata_used,
        strata_dropped: prep.n_strata - strata_used,
        programs_used: prep.programs_used,
        programs_excluded: prep.programs_excluded,
        rows_used: prep.rows_used,
        failed_resamples: draws.len() - ok.len(),
    })
}

/// Difference with exact matching on the program only.
pub fn raw_difference(rows: &[ApplicationRow], boot: &BootstrapConfig) -> Result<StratifiedEstimate> {
    estimate(rows, Strata::Program, boot)
}

/// Difference within strata of program x gpa bin x gender x region x track x
/// specialization; strata lacking either group are dropped.
pub fn matched_difference(rows: &[ApplicationRow], boot: &BootstrapConfig) -> Result<StratifiedEstimate> {
    estimate(rows, Strata::Profile, boot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstSe {
    pub est: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CemReport {
    pub schema_version: u32,
    pub raw: EstSe,
    pub matched: EstSe,
    pub strata_used: usize,
    pub strata_dropped: usize,
    pub programs_used: usize,
    pub programs_excluded: usize,
    pub rows_used: usize,
}

pub fn cem_report(rows: &[ApplicationRow], boot: &BootstrapConfig) -> Result<CemReport> {
    let raw = raw_difference(rows, boot)?;
    let matched = matched_difference(rows, boot)?;
    Ok(CemReport {
        schema_version: SCHEMA_VERSION,
        raw: EstSe { est: raw.est, se: raw.se },
        matched: EstSe { est: matched.est, se: matched.se },
        strata_used: matched.strata_used,
        strata_dropped: matched.strata_dropped,
        programs_used: matched.programs_used,
        programs_excluded: matched.programs_excluded,
        rows_used: matched.rows_used,
    })
}

/// Application rows for a simulated run. Synthetic applicants carry no
/// specialization beyond their track, so the track name fills that column.
pub fn application_rows(pop: &Population, outcome: &MatchOutcome, lists: &CallLists) -> Vec<ApplicationRow> {
    let admissible = admissible_set(outcome, lists);
    let mut rows = Vec::new();
    for a in &pop.applicants {
        let gender = match a.gender {
            Gender::Female => "F",
            Gender::Male => "M",
        };
        for pid in &a.preferences {
            rows.push(ApplicationRow {
                applicant_id: a.id.to_string(),
                program_id: pid.to_string(),
                scholarship: a.scholarship,
                admissible: admissible.get(pid).is_some_and(|s| s.contains(&a.id)),
                gpa: a.gpa,
                gender: gender.to_string(),
                region: a.region.to_string(),
                track: a.track.to_string(),
                specialization: a.track.to_string(),
            });
        }
    }
    rows
}

pub fn read_applications(path: &Path) -> Result<Vec<ApplicationRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: ApplicationRow = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        if !row.gpa.is_finite() || !(0.0..=20.0).contains(&row.gpa) {
            return Err(Error::Range {
                path: path.to_path_buf(),
                line: rows.len() as u64 + 2,
                msg: format!("gpa {} outside [0, 20]", row.gpa),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_applications(path: &Path, rows: &[ApplicationRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse { path: path.to_path_buf(), line: 0, msg: e.to_string() })?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    inner.flush().map_err(|e| Error::io(path, e))
}
