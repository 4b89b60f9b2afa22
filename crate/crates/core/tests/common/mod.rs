#![allow(dead_code)]

use std::collections::BTreeMap;

use quotamatch::cem::ApplicationRow;
use quotamatch::{
    Applicant, ApplicantId, CallLists, Gender, MatchOutcome, Population, Program, ProgramId, ProgramType, Track,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn applicant(id: u32, scholarship: bool, gpa: f64, prefs: &[u32]) -> Applicant {
    Applicant {
        id: ApplicantId(id),
        track: Track::General,
        scholarship,
        bac_grade: gpa,
        gpa,
        gender: if id.is_multiple_of(2) { Gender::Female } else { Gender::Male },
        region: 0,
        preferences: prefs.iter().map(|&p| ProgramId(p)).collect(),
    }
}

pub fn program(id: u32, capacity: u32, scores: &[(u32, f64)]) -> Program {
    Program {
        id: ProgramId(id),
        ptype: ProgramType::Bts,
        selective: true,
        capacity,
        committee_score: scores.iter().map(|&(a, s)| (ApplicantId(a), s)).collect(),
        quota_rate: None,
    }
}

/// Random market with at most `max_a` applicants and `max_p` programs.
/// Every program scores every applicant who lists it; scores are distinct.
pub fn random_market(rng: &mut ChaCha8Rng, max_a: usize, max_p: usize) -> Population {
    let n_a = rng.gen_range(1..=max_a);
    let n_p = rng.gen_range(1..=max_p);
    let mut programs: Vec<Program> = (1..=n_p as u32).map(|p| program(p, rng.gen_range(1..=3), &[])).collect();
    let mut applicants = Vec::new();
    for a in 1..=n_a as u32 {
        let mut ids: Vec<u32> = (1..=n_p as u32).collect();
        ids.shuffle(rng);
        ids.truncate(rng.gen_range(0..=n_p));
        for &p in &ids {
            let score = rng.gen_range(0.0..20.0) + f64::from(a) * 1e-6;
            programs[p as usize - 1].committee_score.insert(ApplicantId(a), score);
        }
        applicants.push(applicant(a, rng.gen_bool(0.3), 10.0, &ids));
    }
    Population::new(applicants, programs).expect("valid market")
}

/// Every pair (applicant, program) that blocks `outcome`, plus any
/// feasibility breach, as readable strings. Empty means stable.
pub fn blocking_pairs(pop: &Population, lists: &CallLists, outcome: &MatchOutcome) -> Vec<String> {
    let mut problems = Vec::new();
    let mut load: BTreeMap<ProgramId, Vec<ApplicantId>> = BTreeMap::new();
    for a in &pop.applicants {
        if let Some(p) = outcome.assigned_to(a.id) {
            if !a.preferences.contains(&p) {
                problems.push(format!("{} assigned to unlisted {p}", a.id));
            }
            if lists.position(p, a.id).is_none() {
                problems.push(format!("{} assigned to {p} but not on its list", a.id));
            }
            load.entry(p).or_default().push(a.id);
        }
    }
    for p in &pop.programs {
        let n = load.get(&p.id).map_or(0, Vec::len);
        if n > p.capacity as usize {
            problems.push(format!("{} over capacity: {n} > {}", p.id, p.capacity));
        }
    }
    for a in &pop.applicants {
        let current = outcome.assigned_to(a.id);
        for &p in &a.preferences {
            if Some(p) == current {
                break;
            }
            let Some(pos) = lists.position(p, a.id) else { continue };
            let cap = pop.programs.iter().find(|x| x.id == p).unwrap().capacity as usize;
            let held = load.get(&p).cloned().unwrap_or_default();
            let has_room = held.len() < cap;
            let displaces = held.iter().any(|&b| lists.position(p, b).unwrap() > pos);
            if has_room || displaces {
                problems.push(format!("({}, {p}) blocks", a.id));
            }
        }
    }
    problems
}

/// Perfect-compliance market: every program admits exactly its quota share
/// of scholarship holders. Each entry is (pool size, holders, capacity), with
/// `100 * holders / pool + 2` times `capacity / 100` an integer.
pub fn perfect_compliance_market(specs: &[(u32, u32, u32)]) -> Population {
    let mut applicants = Vec::new();
    let mut programs = Vec::new();
    let mut next = 1;
    for (pi, &(n, s, cap)) in specs.iter().enumerate() {
        let pid = pi as u32 + 1;
        let mut scores = Vec::new();
        for k in 0..n {
            // holders sit at the very bottom of the academic ranking
            let holder = k >= n - s;
            let score = 20.0 - f64::from(k) * 1e-3;
            applicants.push(applicant(next, holder, score, &[pid]));
            scores.push((next, score));
            next += 1;
        }
        programs.push(program(pid, cap, &scores));
    }
    Population::new(applicants, programs).expect("valid market")
}

/// Application rows on a grade grid where admission is `gpa - delta * s >=
/// threshold`. Holders are over-represented below grade 14, so the raw gap
/// mixes grade sorting with the penalty.
pub fn cem_grid(delta: f64) -> Vec<ApplicationRow> {
    let thresholds = [("P1", 11.0), ("P2", 12.5), ("P3", 14.0)];
    let mut rows = Vec::new();
    let mut next = 0u32;
    for tenth in 80..200 {
        let gpa = f64::from(tenth) / 10.0;
        for gender in ["F", "M"] {
            for scholarship in [true, false] {
                let copies = match (scholarship, gpa < 14.0) {
                    (true, true) | (false, false) => 3,
                    _ => 1,
                };
                for _ in 0..copies {
                    next += 1;
                    for (program, t) in thresholds {
                        let score = gpa - if scholarship { delta } else { 0.0 };
                        rows.push(ApplicationRow {
                            applicant_id: format!("A{next}"),
                            program_id: program.to_string(),
                            scholarship,
                            admissible: score >= t - 1e-9,
                            gpa,
                            gender: gender.to_string(),
                            region: "R1".to_string(),
                            track: "general".to_string(),
                            specialization: "general".to_string(),
                        });
                    }
                }
            }
        }
    }
    rows
}

/// Treated-weighted mean of within-cell admissibility differences, cells
/// being (program, whole grade, gender); the oracle for the grid fixture.
pub fn enumerated_gap(rows: &[ApplicationRow]) -> f64 {
    let mut cells: BTreeMap<(String, i64, String), [f64; 4]> = BTreeMap::new();
    for r in rows {
        let grade = (r.gpa.floor() as i64).clamp(9, 19);
        let c = cells.entry((r.program_id.clone(), grade, r.gender.clone())).or_default();
        let base = if r.scholarship { 0 } else { 2 };
        c[base] += 1.0;
        c[base + 1] += f64::from(u8::from(r.admissible));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for c in cells.values() {
        if c[0] > 0.0 && c[2] > 0.0 {
            num += c[0] * (c[1] / c[0] - c[3] / c[2]);
            den += c[0];
        }
    }
    num / den
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
