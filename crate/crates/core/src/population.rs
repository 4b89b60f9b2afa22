//! Applicants, programs, scenario configuration, the seeded synthetic
//! generator, and the flat-file (CSV) representation of a population.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchConfig;
use crate::quota::{QuotaRate, QuotaRule};
use crate::SCHEMA_VERSION;

pub const APPLICANTS_FILE: &str = "applicants.csv";
pub const PROGRAMS_FILE: &str = "programs.csv";
pub const SCORES_FILE: &str = "committee_scores.csv";

pub const GRADE_MIN: f64 = 0.0;
pub const GRADE_MAX: f64 = 20.0;

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                s.trim().parse().map($name)
            }
        }
    };
}

id_newtype!(ApplicantId);
id_newtype!(ProgramId);

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text $(| $alias)* => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{}`", stringify!($name), other)),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    General,
    Technological,
    Vocational,
}

text_enum!(Track { General => "general" | "g", Technological => "technological" | "t", Vocational => "vocational" | "p" });

impl Track {
    pub const ALL: [Track; 3] = [Track::General, Track::Technological, Track::Vocational];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

text_enum!(Gender { Female => "f" | "female", Male => "m" | "male" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramType {
    Bachelor,
    Bts,
    Dut,
    Cpge,
    Engineering,
    Other,
}

text_enum!(ProgramType {
    Bachelor => "bachelor" | "licence",
    Bts => "bts",
    Dut => "dut",
    Cpge => "cpge",
    Engineering => "engineering",
    Other => "other",
});

impl ProgramType {
    pub const ALL: [ProgramType; 6] = [
        ProgramType::Bachelor,
        ProgramType::Bts,
        ProgramType::Dut,
        ProgramType::Cpge,
        ProgramType::Engineering,
        ProgramType::Other,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applicant {
    pub id: ApplicantId,
    pub track: Track,
    pub scholarship: bool,
    pub bac_grade: f64,
    pub gpa: f64,
    pub gender: Gender,
    pub region: u16,
    /// Strict preference order, most preferred first.
    pub preferences: Vec<ProgramId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub id: ProgramId,
    pub ptype: ProgramType,
    pub selective: bool,
    pub capacity: u32,
    /// Committee ranking key for every applicant who listed this program.
    pub committee_score: BTreeMap<ApplicantId, f64>,
    pub quota_rate: Option<QuotaRate>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub applicants: Vec<Applicant>,
    pub programs: Vec<Program>,
}

impl Population {
    pub fn new(applicants: Vec<Applicant>, programs: Vec<Program>) -> Result<Self> {
        let pop = Population { applicants, programs };
        pop.validate()?;
        Ok(pop)
    }

    pub fn program_index(&self) -> HashMap<ProgramId, usize> {
        self.programs.iter().enumerate().map(|(i, p)| (p.id, i)).collect()
    }

    pub fn applicant_index(&self) -> HashMap<ApplicantId, usize> {
        self.applicants.iter().enumerate().map(|(i, a)| (a.id, i)).collect()
    }

    pub fn n_scholarship(&self) -> usize {
        self.applicants.iter().filter(|a| a.scholarship).count()
    }

    /// Check ids, ranges, preference lists and committee scores.
    pub fn validate(&self) -> Result<()> {
        let mut pids = HashSet::with_capacity(self.programs.len());
        for p in &self.programs {
            if !pids.insert(p.id) {
                return Err(Error::Referential(format!("duplicate program id {}", p.id)));
            }
            if p.capacity == 0 {
                return Err(Error::Domain(format!("program {} has capacity 0", p.id)));
            }
        }
        let mut aids = HashSet::with_capacity(self.applicants.len());
        let index = self.program_index();
        for a in &self.applicants {
            if !aids.insert(a.id) {
                return Err(Error::Referential(format!("duplicate applicant id {}", a.id)));
            }
            for (what, g) in [("bac_grade", a.bac_grade), ("gpa", a.gpa)] {
                if !(GRADE_MIN..=GRADE_MAX).contains(&g) {
                    return Err(Error::Domain(format!("applicant {}: {what} {g} outside [0, 20]", a.id)));
                }
            }
            let mut seen = HashSet::with_capacity(a.preferences.len());
            for pid in &a.preferences {
                let Some(&pi) = index.get(pid) else {
                    return Err(Error::Referential(format!("applicant {} lists unknown program {pid}", a.id)));
                };
                if !seen.insert(pid) {
                    return Err(Error::Domain(format!("applicant {} lists program {pid} twice", a.id)));
                }
                if !self.programs[pi].committee_score.contains_key(&a.id) {
                    return Err(Error::Referential(format!(
                        "program {pid} has no committee score for applicant {}",
                        a.id
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

/// One (track, scholarship) cell of the applicant population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub track: Track,
    pub scholarship: bool,
    pub count: usize,
    pub bac_mean: f64,
    pub bac_sd: f64,
}

/// A group of programs sharing type, selectivity and draw parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramGroupConfig {
    pub ptype: ProgramType,
    pub selective: bool,
    pub count: usize,
    pub capacity_min: u32,
    pub capacity_max: u32,
    /// Grade level the program targets (preference fit term).
    pub difficulty_mean: f64,
    pub difficulty_sd: f64,
    pub attractiveness_mean: f64,
    pub attractiveness_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreferenceConfig {
    /// Maximum list length. APB's actual cap for 2016 is not documented;
    /// 10 is a placeholder.
    pub list_length: usize,
    pub attractiveness_weight: f64,
    /// Penalty per grade point between the applicant's gpa and the program's
    /// difficulty.
    pub fit_weight: f64,
    pub noise_sd: f64,
    /// End every list with a non-selective Bachelor program.
    pub append_nonselective_bachelor: bool,
    pub track_affinity: BTreeMap<Track, BTreeMap<ProgramType, f64>>,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        let row = |v: [f64; 6]| ProgramType::ALL.iter().copied().zip(v).collect::<BTreeMap<_, _>>();
        let mut track_affinity = BTreeMap::new();
        //                                          Bach  BTS   DUT   CPGE  Eng   Other
        track_affinity.insert(Track::General, row([1.0, -1.0, 0.3, 0.5, 0.3, 0.0]));
        track_affinity.insert(Track::Technological, row([0.0, 1.0, 0.8, -1.0, -0.5, 0.0]));
        track_affinity.insert(Track::Vocational, row([-0.3, 1.5, -0.5, -3.0, -2.0, -0.5]));
        PreferenceConfig {
            list_length: 10,
            attractiveness_weight: 1.0,
            fit_weight: 0.6,
            noise_sd: 1.0,
            append_nonselective_bachelor: true,
            track_affinity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Number of regions (academies); applicants consider programs of their
    /// own region.
    pub regions: u16,
    pub cells: Vec<CellConfig>,
    pub female_share: f64,
    /// Spread of the school-year average around the baccalaureate grade.
    pub gpa_noise_sd: f64,
    pub committee_noise_sd: f64,
    /// Points subtracted from a scholarship holder's committee score.
    pub scholarship_penalty_delta: f64,
    pub programs: Vec<ProgramGroupConfig>,
    pub quota_rule: QuotaRule,
    #[serde(default)]
    pub preferences: PreferenceConfig,
    #[serde(default)]
    pub matching: MatchConfig,
}

/// Published cohort sizes and baccalaureate grade moments (mean, sd) per
/// (track, scholarship) cell.
struct CohortStats {
    cells: [(Track, bool, usize, f64, f64); 6],
}

fn cohort_stats(year: u16) -> Result<CohortStats> {
    use Track::*;
    let cells = match year {
        2016 => [
            (General, true, 52_212, 11.563, 2.656),
            (General, false, 289_446, 12.629, 2.774),
            (Technological, true, 29_648, 11.264, 2.084),
            (Technological, false, 96_366, 11.697, 2.043),
            (Vocational, true, 34_252, 11.384, 2.183),
            (Vocational, false, 79_778, 11.701, 2.18),
        ],
        2017 => [
            (General, true, 57_419, 11.418, 2.731),
            (General, false, 300_725, 12.536, 2.864),
            (Technological, true, 31_526, 11.295, 2.158),
            (Technological, false, 97_852, 11.747, 2.109),
            (Vocational, true, 35_651, 11.335, 2.244),
            (Vocational, false, 83_837, 11.603, 2.258),
        ],
        other => return Err(Error::Config(format!("no calibration for year {other} (have 2016, 2017)"))),
    };
    Ok(CohortStats { cells })
}

impl ScenarioConfig {
    /// Calibrated scenario for a cohort year, with applicant and program
    /// counts multiplied by `scale`.
    pub fn calibrated(year: u16, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        let stats = cohort_stats(year)?;
        let cells = stats
            .cells
            .iter()
            .map(|&(track, scholarship, n, mean, sd)| CellConfig {
                track,
                scholarship,
                count: (n as f64 * scale).round() as usize,
                bac_mean: mean,
                bac_sd: sd,
            })
            .collect();
        let group =
            |ptype, selective, count: usize, cap: (u32, u32), diff: (f64, f64), attr: (f64, f64)| ProgramGroupConfig {
                ptype,
                selective,
                count: ((count as f64 * scale).round() as usize).max(1),
                capacity_min: cap.0,
                capacity_max: cap.1,
                difficulty_mean: diff.0,
                difficulty_sd: diff.1,
                attractiveness_mean: attr.0,
                attractiveness_sd: attr.1,
            };
        use ProgramType::*;
        let programs = vec![
            group(Bachelor, false, 2000, (300, 600), (10.5, 1.0), (0.0, 0.0)),
            group(Bachelor, true, 200, (50, 150), (14.0, 1.0), (1.0, 0.5)),
            group(Bts, true, 3000, (20, 40), (11.0, 1.0), (0.0, 0.5)),
            group(Dut, true, 800, (40, 100), (12.5, 1.0), (0.5, 0.5)),
            group(Cpge, true, 700, (30, 50), (15.0, 1.2), (1.0, 0.5)),
            group(Engineering, true, 250, (40, 100), (14.5, 1.0), (1.0, 0.5)),
            group(Other, true, 500, (20, 60), (12.0, 1.5), (0.3, 0.5)),
        ];
        Ok(ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            seed: u64::from(year),
            regions: ((30.0 * scale).round() as u16).clamp(1, 30),
            cells,
            female_share: 0.55,
            gpa_noise_sd: 1.0,
            committee_noise_sd: 1.0,
            scholarship_penalty_delta: 0.0,
            programs,
            quota_rule: QuotaRule::PlusTwoFloorFive,
            preferences: PreferenceConfig::default(),
            matching: MatchConfig::default(),
        })
    }

    /// Same calibration shape with an explicit applicant total, keeping the
    /// cohort's cell proportions and scaling programs alongside.
    pub fn calibrated_with_total(year: u16, total_applicants: usize) -> Result<Self> {
        let full: usize = cohort_stats(year)?.cells.iter().map(|c| c.2).sum();
        Self::calibrated(year, total_applicants as f64 / full as f64)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n_applicants(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn n_programs(&self) -> usize {
        self.programs.iter().map(|g| g.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_applicants() == 0 {
            return Err(Error::Config("scenario has zero applicants".into()));
        }
        if self.n_programs() == 0 {
            return Err(Error::Config("scenario has zero programs".into()));
        }
        if self.regions == 0 {
            return Err(Error::Config("regions must be at least 1".into()));
        }
        if !(self.scholarship_penalty_delta >= 0.0 && self.scholarship_penalty_delta.is_finite()) {
            return Err(Error::Config("scholarship_penalty_delta must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.female_share) {
            return Err(Error::Config("female_share must lie in [0, 1]".into()));
        }
        for (name, sd) in [("gpa_noise_sd", self.gpa_noise_sd), ("committee_noise_sd", self.committee_noise_sd)] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        for c in &self.cells {
            if !(c.bac_sd > 0.0 && c.bac_sd.is_finite()) || !c.bac_mean.is_finite() {
                return Err(Error::Config(format!("bad grade parameters for {} cell", c.track)));
            }
        }
        for g in &self.programs {
            if g.capacity_min == 0 || g.capacity_min > g.capacity_max {
                return Err(Error::Config(format!("bad capacity range for {} programs", g.ptype)));
            }
            if g.difficulty_sd.is_nan()
                || g.difficulty_sd < 0.0
                || g.attractiveness_sd.is_nan()
                || g.attractiveness_sd < 0.0
            {
                return Err(Error::Config(format!("negative spread for {} programs", g.ptype)));
            }
        }
        if self.preferences.list_length == 0 {
            return Err(Error::Config("preference list_length must be at least 1".into()));
        }
        if self.preferences.noise_sd.is_nan() || self.preferences.noise_sd < 0.0 {
            return Err(Error::Config("preference noise_sd must be >= 0".into()));
        }
        if let QuotaRule::Fixed(r) = self.quota_rule {
            QuotaRate::new(r).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

impl Default for ScenarioConfig {
    /// 2016 cohort at 60% scale (about 350k applicants).
    fn default() -> Self {
        ScenarioConfig::calibrated(2016, 0.6).expect("2016 calibration exists")
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct ProgramDraw {
    region: u16,
    difficulty: f64,
    attractiveness: f64,
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated standard deviation")
}

fn truncated_grade(rng: &mut ChaCha8Rng, dist: &Normal<f64>) -> f64 {
    loop {
        let g = dist.sample(rng);
        if (GRADE_MIN..=GRADE_MAX).contains(&g) {
            return g;
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic synthetic population for `cfg`.
///
/// Stream 0 of the seeded generator draws program attributes; applicant `i`
/// draws its grades, preferences and committee scores from stream `i + 1`, so
/// the result does not depend on thread scheduling.
pub fn generate_population(cfg: &ScenarioConfig) -> Result<Population> {
    cfg.validate()?;

    let mut prng = rng_for(cfg.seed, 0);
    let mut programs = Vec::with_capacity(cfg.n_programs());
    let mut draws = Vec::with_capacity(cfg.n_programs());
    for g in &cfg.programs {
        let diff = normal(g.difficulty_mean, g.difficulty_sd);
        let attr = normal(g.attractiveness_mean, g.attractiveness_sd);
        for k in 0..g.count {
            let id = ProgramId(programs.len() as u32 + 1);
            programs.push(Program {
                id,
                ptype: g.ptype,
                selective: g.selective,
                capacity: prng.gen_range(g.capacity_min..=g.capacity_max),
                committee_score: BTreeMap::new(),
                quota_rate: None,
            });
            draws.push(ProgramDraw {
                region: (k % cfg.regions as usize) as u16,
                difficulty: diff.sample(&mut prng),
                attractiveness: attr.sample(&mut prng),
            });
        }
    }

    let all: Vec<usize> = (0..programs.len()).collect();
    let mut by_region: Vec<Vec<usize>> = vec![Vec::new(); cfg.regions as usize];
    for (i, d) in draws.iter().enumerate() {
        by_region[d.region as usize].push(i);
    }

    let specs: Vec<(usize, &CellConfig)> =
        cfg.cells.iter().flat_map(|c| std::iter::repeat_n(c, c.count)).enumerate().collect();

    let prefs = &cfg.preferences;
    let pref_noise = normal(0.0, prefs.noise_sd.max(f64::MIN_POSITIVE));
    let gpa_noise = normal(0.0, cfg.gpa_noise_sd.max(f64::MIN_POSITIVE));
    let committee_noise = normal(0.0, cfg.committee_noise_sd.max(f64::MIN_POSITIVE));

    let generated: Vec<(Applicant, Vec<f64>)> = specs
        .par_iter()
        .map(|&(i, cell)| {
            let mut rng = rng_for(cfg.seed, i as u64 + 1);
            let bac_grade = truncated_grade(&mut rng, &normal(cell.bac_mean, cell.bac_sd));
            let gpa = if cfg.gpa_noise_sd > 0.0 {
                loop {
                    let g = bac_grade + gpa_noise.sample(&mut rng);
                    if (GRADE_MIN..=GRADE_MAX).contains(&g) {
                        break g;
                    }
                }
            } else {
                bac_grade
            };
            let gender = if rng.gen_bool(cfg.female_share) { Gender::Female } else { Gender::Male };
            let region = rng.gen_range(0..cfg.regions);

            let candidates = match &by_region[region as usize] {
                local if !local.is_empty() => local,
                _ => &all,
            };
            let affinity = prefs.track_affinity.get(&cell.track);
            let mut scored: Vec<(f64, usize)> = candidates
                .iter()
                .map(|&pi| {
                    let d = &draws[pi];
                    let mut u = prefs.attractiveness_weight * d.attractiveness
                        - prefs.fit_weight * (gpa - d.difficulty).abs()
                        + affinity.and_then(|m| m.get(&programs[pi].ptype)).copied().unwrap_or(0.0);
                    if prefs.noise_sd > 0.0 {
                        u += pref_noise.sample(&mut rng);
                    }
                    (u, pi)
                })
                .collect();
            // utility descending, program index ascending on ties
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

            let is_safety = |pi: usize| programs[pi].ptype == ProgramType::Bachelor && !programs[pi].selective;
            let k = prefs.list_length;
            let mut list: Vec<usize> = if prefs.append_nonselective_bachelor {
                // best-ranked safety option goes last, the rest keep utility order
                let safety = scored.iter().map(|&(_, pi)| pi).find(|&pi| is_safety(pi));
                let mut l: Vec<usize> =
                    scored.iter().map(|&(_, pi)| pi).filter(|&pi| Some(pi) != safety).take(k - 1).collect();
                l.extend(safety);
                l
            } else {
                scored.iter().take(k).map(|&(_, pi)| pi).collect()
            };
            if list.is_empty() {
                list.extend(scored.first().map(|&(_, pi)| pi));
            }

            let scores: Vec<f64> = list
                .iter()
                .map(|_| {
                    let noise = if cfg.committee_noise_sd > 0.0 { committee_noise.sample(&mut rng) } else { 0.0 };
                    let penalty = if cell.scholarship { cfg.scholarship_penalty_delta } else { 0.0 };
                    gpa + noise - penalty
                })
                .collect();

            let applicant = Applicant {
                id: ApplicantId(i as u32 + 1),
                track: cell.track,
                scholarship: cell.scholarship,
                bac_grade,
                gpa,
                gender,
                region,
                preferences: list.iter().map(|&pi| programs[pi].id).collect(),
            };
            (applicant, scores)
        })
        .collect();

    let index: HashMap<ProgramId, usize> = programs.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    let mut applicants = Vec::with_capacity(generated.len());
    for (a, scores) in generated {
        for (pid, s) in a.preferences.iter().zip(scores) {
            programs[index[pid]].committee_score.insert(a.id, s);
        }
        applicants.push(a);
    }
    Ok(Population { applicants, programs })
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let msg = e.to_string();
            Error::io(path, std::io::Error::other(msg))
        }
        _ => Error::Parse { path: path.to_path_buf(), line, msg: e.to_string() },
    }
}

fn parse_field<T: FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = rec.get(idx).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("missing column `{name}`"),
    })?;
    raw.trim().parse().map_err(|e: T::Err| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad `{name}` value `{raw}`: {e}"),
    })
}

pub(crate) fn parse_bool(raw: &str) -> std::result::Result<bool, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(format!("expected boolean, got `{other}`")),
    }
}

struct CsvBool(bool);

impl FromStr for CsvBool {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_bool(s).map(CsvBool)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_err(path, e))?;
    for (i, want) in expected.iter().enumerate() {
        if header.get(i) != Some(*want) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!(
                    "expected column {} to be `{want}`, header is `{}`",
                    i + 1,
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    Ok(())
}

fn check_grade(path: &Path, line: u64, name: &str, g: f64) -> Result<()> {
    if !(GRADE_MIN..=GRADE_MAX).contains(&g) {
        return Err(Error::Range { path: path.to_path_buf(), line, msg: format!("{name} {g} outside [0, 20]") });
    }
    Ok(())
}

fn read_programs(path: &Path) -> Result<Vec<Program>> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &["id", "ptype", "selective", "capacity"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let capacity: u32 = parse_field(path, line, &rec, 3, "capacity")?;
        if capacity == 0 {
            return Err(Error::Range { path: path.to_path_buf(), line, msg: "capacity must be at least 1".into() });
        }
        let quota_rate = match rec.get(4).map(str::trim) {
            None | Some("") => None,
            Some(_) => {
                let v: f64 = parse_field(path, line, &rec, 4, "quota_rate")?;
                Some(QuotaRate::new(v).map_err(|e| Error::Range {
                    path: path.to_path_buf(),
                    line,
                    msg: e.to_string(),
                })?)
            }
        };
        out.push(Program {
            id: parse_field(path, line, &rec, 0, "id")?,
            ptype: parse_field(path, line, &rec, 1, "ptype")?,
            selective: parse_field::<CsvBool>(path, line, &rec, 2, "selective")?.0,
            capacity,
            committee_score: BTreeMap::new(),
            quota_rate,
        });
    }
    Ok(out)
}

fn read_applicants(path: &Path, programs: &HashMap<ProgramId, usize>) -> Result<Vec<Applicant>> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &["id", "track", "scholarship", "bac_grade", "gpa", "gender", "region"])?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id: ApplicantId = parse_field(path, line, &rec, 0, "id")?;
        if !ids.insert(id) {
            return Err(Error::Parse { path: path.to_path_buf(), line, msg: format!("duplicate applicant id {id}") });
        }
        let bac_grade: f64 = parse_field(path, line, &rec, 3, "bac_grade")?;
        check_grade(path, line, "bac_grade", bac_grade)?;
        let gpa: f64 = parse_field(path, line, &rec, 4, "gpa")?;
        check_grade(path, line, "gpa", gpa)?;
        let mut preferences = Vec::new();
        for (k, raw) in rec.iter().enumerate().skip(7) {
            if raw.is_empty() {
                continue;
            }
            let pid: ProgramId = parse_field(path, line, &rec, k, "preference")?;
            if !programs.contains_key(&pid) {
                return Err(Error::Referential(format!(
                    "{}:{line}: applicant {id} lists unknown program {pid}",
                    path.display()
                )));
            }
            if preferences.contains(&pid) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("program {pid} listed twice"),
                });
            }
            preferences.push(pid);
        }
        out.push(Applicant {
            id,
            track: parse_field(path, line, &rec, 1, "track")?,
            scholarship: parse_field::<CsvBool>(path, line, &rec, 2, "scholarship")?.0,
            bac_grade,
            gpa,
            gender: parse_field(path, line, &rec, 5, "gender")?,
            region: parse_field(path, line, &rec, 6, "region")?,
            preferences,
        });
    }
    Ok(out)
}

fn read_scores(
    path: &Path,
    programs: &mut [Program],
    index: &HashMap<ProgramId, usize>,
    applicants: &HashSet<ApplicantId>,
) -> Result<()> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &["program_id", "applicant_id", "score"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let pid: ProgramId = parse_field(path, line, &rec, 0, "program_id")?;
        let aid: ApplicantId = parse_field(path, line, &rec, 1, "applicant_id")?;
        let score: f64 = parse_field(path, line, &rec, 2, "score")?;
        if !score.is_finite() {
            return Err(Error::Range { path: path.to_path_buf(), line, msg: "score must be finite".into() });
        }
        let Some(&pi) = index.get(&pid) else {
            return Err(Error::Referential(format!("{}:{line}: unknown program {pid}", path.display())));
        };
        if !applicants.contains(&aid) {
            return Err(Error::Referential(format!("{}:{line}: unknown applicant {aid}", path.display())));
        }
        programs[pi].committee_score.insert(aid, score);
    }
    Ok(())
}

/// Read a population directory (`applicants.csv`, `programs.csv`, and
/// optionally `committee_scores.csv`). Without a scores file every program
/// ranks its applicants by gpa.
pub fn load_population(dir: &Path) -> Result<Population> {
    let mut programs = read_programs(&dir.join(PROGRAMS_FILE))?;
    let index: HashMap<ProgramId, usize> = programs.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    if index.len() != programs.len() {
        return Err(Error::Referential("duplicate program id in programs.csv".into()));
    }
    let applicants = read_applicants(&dir.join(APPLICANTS_FILE), &index)?;
    let scores_path = dir.join(SCORES_FILE);
    if scores_path.exists() {
        let ids: HashSet<ApplicantId> = applicants.iter().map(|a| a.id).collect();
        read_scores(&scores_path, &mut programs, &index, &ids)?;
    } else {
        for a in &applicants {
            for pid in &a.preferences {
                programs[index[pid]].committee_score.insert(a.id, a.gpa);
            }
        }
    }
    Population::new(applicants, programs)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Write a population directory. Output is byte-deterministic.
pub fn save_population(pop: &Population, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(PROGRAMS_FILE);
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "id,ptype,selective,capacity,quota_rate").map_err(io)?;
    for p in &pop.programs {
        let rate = p.quota_rate.map(|q| q.value().to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", p.id, p.ptype, u8::from(p.selective), p.capacity, rate).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join(APPLICANTS_FILE);
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    let k = pop.applicants.iter().map(|a| a.preferences.len()).max().unwrap_or(0).max(1);
    let mut header = String::from("id,track,scholarship,bac_grade,gpa,gender,region");
    for i in 1..=k {
        header.push_str(&format!(",pref_{i}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    for a in &pop.applicants {
        let gender = match a.gender {
            Gender::Female => "F",
            Gender::Male => "M",
        };
        write!(w, "{},{},{},{},{},{},{}", a.id, a.track, u8::from(a.scholarship), a.bac_grade, a.gpa, gender, a.region)
            .map_err(io)?;
        for i in 0..k {
            match a.preferences.get(i) {
                Some(p) => write!(w, ",{p}"),
                None => write!(w, ","),
            }
            .map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join(SCORES_FILE);
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "program_id,applicant_id,score").map_err(io)?;
    for p in &pop.programs {
        for (aid, s) in &p.committee_score {
            writeln!(w, "{},{aid},{s}", p.id).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
