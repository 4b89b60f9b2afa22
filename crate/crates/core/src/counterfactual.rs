//! Paired quota-off / quota-on runs and what can be measured from them:
//! compliers, the transition-level decomposition of prestige gains, shifts in
//! program-type shares, and two institutional estimators (the call-list
//! threshold reconstruction and the admitted-vs-applicant share gap).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matching::{simulate, CallLists, MatchConfig, MatchOutcome};
use crate::population::{ApplicantId, Population, ProgramId, ProgramType, Track};
use crate::prestige::{percentile_ranks, prestige_scores, PrestigeBasis, PrestigeTable};
use crate::quota::{QuotaRate, QuotaRule};
use crate::stats::spearman;

/// Program type of an assignment, or no assignment at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Destination {
    Type(ProgramType),
    Unassigned,
}

impl Destination {
    pub const ALL: [Destination; 7] = [
        Destination::Type(ProgramType::Bachelor),
        Destination::Type(ProgramType::Bts),
        Destination::Type(ProgramType::Dut),
        Destination::Type(ProgramType::Cpge),
        Destination::Type(ProgramType::Engineering),
        Destination::Type(ProgramType::Other),
        Destination::Unassigned,
    ];
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Type(t) => t.fmt(f),
            Destination::Unassigned => f.write_str("unassigned"),
        }
    }
}

impl Serialize for Destination {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// An applicant whose assignment differs between the two arms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplierRecord {
    pub applicant: ApplicantId,
    pub track: Track,
    pub scholarship: bool,
    pub from_program: Option<ProgramId>,
    pub to_program: Option<ProgramId>,
    pub from_type: Destination,
    pub to_type: Destination,
    pub prestige_without: Option<f64>,
    pub prestige_with: Option<f64>,
    pub gain: Option<f64>,
}

/// Both arms of one counterfactual comparison on the same population.
#[derive(Debug, Clone)]
pub struct PairRun {
    pub rule: QuotaRule,
    pub lists_off: CallLists,
    pub lists_on: CallLists,
    pub off: MatchOutcome,
    pub on: MatchOutcome,
    /// Fixed yardstick for both arms, scored on the quota-off enrollment.
    pub prestige: PrestigeTable,
    /// Scholarship holders who change assignment.
    pub compliers: Vec<ComplierRecord>,
    /// Non-scholarship applicants who change assignment (displacement).
    pub displaced: Vec<ComplierRecord>,
}

/// Run the quota-off and quota-on arms (concurrently) and collect movers.
pub fn run_pair(pop: &Population, rule: QuotaRule, cfg: &MatchConfig) -> Result<PairRun> {
    if pop.applicants.is_empty() || pop.programs.is_empty() {
        return Err(Error::Domain("population has no applicants or no programs".into()));
    }
    let (off, on) = rayon::join(|| simulate(pop, QuotaRule::None, cfg), || simulate(pop, rule, cfg));
    let (lists_off, off) = off?;
    let (lists_on, on) = on?;
    let percentiles = percentile_ranks(&pop.applicants)?;
    let prestige = prestige_scores(&off, &percentiles, PrestigeBasis::QuotaOff)?;

    let types: HashMap<ProgramId, ProgramType> = pop.programs.iter().map(|p| (p.id, p.ptype)).collect();
    let dest = |p: Option<ProgramId>| p.map_or(Destination::Unassigned, |p| Destination::Type(types[&p]));
    let mut compliers = Vec::new();
    let mut displaced = Vec::new();
    for a in &pop.applicants {
        let before = off.assigned_to(a.id);
        let after = on.assigned_to(a.id);
        if before == after {
            continue;
        }
        let prestige_without = before.and_then(|p| prestige.get(p));
        let prestige_with = after.and_then(|p| prestige.get(p));
        let record = ComplierRecord {
            applicant: a.id,
            track: a.track,
            scholarship: a.scholarship,
            from_program: before,
            to_program: after,
            from_type: dest(before),
            to_type: dest(after),
            prestige_without,
            prestige_with,
            gain: prestige_with.zip(prestige_without).map(|(w, wo)| w - wo),
        };
        if a.scholarship {
            compliers.push(record);
        } else {
            displaced.push(record);
        }
    }
    Ok(PairRun { rule, lists_off, lists_on, off, on, prestige, compliers, displaced })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub from_type: Destination,
    pub to_type: Destination,
    pub count: usize,
    /// Share of scored compliers making this transition.
    pub p: f64,
    pub mean_gain: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionCount {
    pub from_type: Destination,
    pub to_type: Destination,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionTable {
    pub rows: Vec<DecompositionRow>,
    /// All compliers, including moves to or from no assignment.
    pub transitions: Vec<TransitionCount>,
    pub n_compliers: usize,
    /// Compliers enrolled in scored programs in both arms.
    pub n_scored: usize,
    pub n_scholarship_total: usize,
    pub compliance: f64,
    pub ate: Option<f64>,
    pub itt: f64,
    pub intra_type: f64,
    pub inter_type: f64,
    /// Unassigned without quotas, assigned with them.
    pub extensive_gains: usize,
    /// Assigned without quotas, unassigned with them.
    pub extensive_losses: usize,
    /// Enrolled in both arms but in a program the yardstick does not score.
    pub unscored: usize,
}

/// Split the mean prestige gain of compliers into transition cells:
/// `ATE = sum_ij p_ij * gain_ij`, with `ITT = ATE * compliers / total`.
///
/// Gains are read from `prestige`; compliers leaving or entering no
/// assignment count toward compliance but not toward the ATE.
pub fn decompose(
    records: &[ComplierRecord],
    prestige: &PrestigeTable,
    n_scholarship_total: usize,
) -> Result<DecompositionTable> {
    if records.len() > n_scholarship_total {
        return Err(Error::Domain(format!(
            "{} compliers exceed {} scholarship applicants",
            records.len(),
            n_scholarship_total
        )));
    }
    let mut transitions: BTreeMap<(Destination, Destination), usize> = BTreeMap::new();
    let mut cells: BTreeMap<(Destination, Destination), (usize, f64)> = BTreeMap::new();
    let (mut extensive_gains, mut extensive_losses, mut unscored) = (0, 0, 0);
    let mut gains = Vec::new();
    for r in records {
        *transitions.entry((r.from_type, r.to_type)).or_default() += 1;
        match (r.from_program, r.to_program) {
            (None, Some(_)) => extensive_gains += 1,
            (Some(_), None) => extensive_losses += 1,
            (Some(from), Some(to)) => match (prestige.get(from), prestige.get(to)) {
                (Some(pf), Some(pt)) => {
                    let g = pt - pf;
                    gains.push(g);
                    let cell = cells.entry((r.from_type, r.to_type)).or_default();
                    cell.0 += 1;
                    cell.1 += g;
                }
                _ => unscored += 1,
            },
            (None, None) => {}
        }
    }
    let n_scored = gains.len();
    let ate = (n_scored > 0).then(|| gains.iter().sum::<f64>() / n_scored as f64);
    let rows: Vec<DecompositionRow> = cells
        .into_iter()
        .map(|((from_type, to_type), (count, sum))| {
            let p = count as f64 / n_scored as f64;
            let mean_gain = sum / count as f64;
            DecompositionRow { from_type, to_type, count, p, mean_gain, contribution: p * mean_gain }
        })
        .collect();
    let intra_type = rows.iter().filter(|r| r.from_type == r.to_type).map(|r| r.contribution).sum();
    let inter_type = rows.iter().filter(|r| r.from_type != r.to_type).map(|r| r.contribution).sum();
    let compliance = if n_scholarship_total == 0 { 0.0 } else { records.len() as f64 / n_scholarship_total as f64 };
    Ok(DecompositionTable {
        rows,
        transitions: transitions
            .into_iter()
            .map(|((from_type, to_type), count)| TransitionCount { from_type, to_type, count })
            .collect(),
        n_compliers: records.len(),
        n_scored,
        n_scholarship_total,
        compliance,
        itt: ate.map_or(0.0, |a| a * compliance),
        ate,
        intra_type,
        inter_type,
        extensive_gains,
        extensive_losses,
        unscored,
    })
}

/// Change, in percentage points, of the share of (optionally only
/// scholarship) applicants ending in each program type, quota-on minus
/// quota-off. Covers movers and stayers alike.
pub fn type_share_shift(
    pop: &Population,
    off: &MatchOutcome,
    on: &MatchOutcome,
    scholarship_only: bool,
    track: Option<Track>,
) -> BTreeMap<Destination, f64> {
    let types: HashMap<ProgramId, ProgramType> = pop.programs.iter().map(|p| (p.id, p.ptype)).collect();
    let dest = |p: Option<ProgramId>| p.map_or(Destination::Unassigned, |p| Destination::Type(types[&p]));
    let mut counts: BTreeMap<Destination, (i64, i64)> = Destination::ALL.iter().map(|&d| (d, (0, 0))).collect();
    let mut n = 0usize;
    for a in &pop.applicants {
        if (scholarship_only && !a.scholarship) || track.is_some_and(|t| t != a.track) {
            continue;
        }
        n += 1;
        counts.get_mut(&dest(off.assigned_to(a.id))).expect("all destinations").0 += 1;
        counts.get_mut(&dest(on.assigned_to(a.id))).expect("all destinations").1 += 1;
    }
    counts
        .into_iter()
        .map(|(d, (before, after))| {
            let delta = if n == 0 { 0.0 } else { 100.0 * (after - before) as f64 / n as f64 };
            (d, delta)
        })
        .collect()
}

/// Reconstruction of the institutional complier estimate: assume each
/// program would have called down to the same position without quotas, and
/// count scholarship holders who sat below that position on the academic
/// list, were promoted to or above it, and enrolled there.
pub fn cesp_complier_estimate(
    pop: &Population,
    outcome_on: &MatchOutcome,
    lists_off: &CallLists,
    lists_on: &CallLists,
    track: Option<Track>,
) -> usize {
    let idx = pop.applicant_index();
    let mut count = 0;
    for (pid, enrolled) in outcome_on.enrollment() {
        let threshold = outcome_on.last_offer_position.get(&pid).copied().unwrap_or(0);
        let holders: Vec<ApplicantId> = enrolled
            .into_iter()
            .filter(|a| {
                let app = &pop.applicants[idx[a]];
                app.scholarship && track.is_none_or(|t| t == app.track)
            })
            .collect();
        if holders.is_empty() {
            continue;
        }
        let before = lists_off.positions(pid);
        let after = lists_on.positions(pid);
        count += holders
            .iter()
            .filter(|a| {
                let was_beyond = before.get(a).is_none_or(|&p| p > threshold);
                let now_within = after.get(a).is_some_and(|&p| p <= threshold);
                was_beyond && now_within
            })
            .count();
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    /// Admitted scholarship share minus applicant scholarship share.
    pub deltas: BTreeMap<ProgramId, f64>,
    /// Spearman correlation of the deltas with the programs' quota rates;
    /// `None` when either side is constant.
    pub correlation: Option<f64>,
}

/// Per-program gap between the scholarship share among admitted students and
/// among applicants, and its rank correlation with the quota rate. Programs
/// that admitted nobody are left out.
pub fn cour_des_comptes_delta(
    pop: &Population,
    outcome: &MatchOutcome,
    rates: &BTreeMap<ProgramId, QuotaRate>,
) -> DeltaReport {
    let mut applied: BTreeMap<ProgramId, (usize, usize)> = BTreeMap::new();
    for a in &pop.applicants {
        for pid in &a.preferences {
            let e = applied.entry(*pid).or_default();
            e.0 += usize::from(a.scholarship);
            e.1 += 1;
        }
    }
    let idx = pop.applicant_index();
    let mut deltas = BTreeMap::new();
    for (pid, enrolled) in outcome.enrollment() {
        if enrolled.is_empty() {
            continue;
        }
        let Some(&(s_app, n_app)) = applied.get(&pid) else { continue };
        let s_adm = enrolled.iter().filter(|a| pop.applicants[idx[a]].scholarship).count();
        // one rounding step, so equal gaps give equal floats
        let n_adm = enrolled.len() as i128;
        let num = s_adm as i128 * n_app as i128 - s_app as i128 * n_adm;
        let delta = num as f64 / (n_adm * n_app as i128) as f64;
        deltas.insert(pid, delta);
    }
    let (d, q): (Vec<f64>, Vec<f64>) =
        deltas.iter().map(|(pid, &d)| (d, rates.get(pid).map_or(0.0, |r| r.value()))).unzip();
    DeltaReport { correlation: spearman(&d, &q), deltas }
}

/// Scholarship holders who do worse with quotas than without.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub checked: usize,
    /// Achieved rank strictly worse with quotas (unassigned counts as worst).
    pub rank_violations: Vec<ApplicantId>,
    /// Assigned without quotas, unassigned with them.
    pub extensive_losses: Vec<ApplicantId>,
}

impl MonotonicityReport {
    pub fn is_clean(&self) -> bool {
        self.rank_violations.is_empty() && self.extensive_losses.is_empty()
    }
}

pub fn respecting_improvements(pop: &Population, off: &MatchOutcome, on: &MatchOutcome) -> MonotonicityReport {
    let mut report = MonotonicityReport::default();
    for a in pop.applicants.iter().filter(|a| a.scholarship) {
        report.checked += 1;
        let before = off.achieved_rank.get(&a.id).copied().flatten();
        let after = on.achieved_rank.get(&a.id).copied().flatten();
        let worse = match (before, after) {
            (Some(b), Some(w)) => w > b,
            (Some(_), None) => {
                report.extensive_losses.push(a.id);
                true
            }
            _ => false,
        };
        if worse {
            report.rank_violations.push(a.id);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: u32, from: (u32, ProgramType), to: (u32, ProgramType)) -> ComplierRecord {
        ComplierRecord {
            applicant: ApplicantId(id),
            track: Track::General,
            scholarship: true,
            from_program: Some(ProgramId(from.0)),
            to_program: Some(ProgramId(to.0)),
            from_type: Destination::Type(from.1),
            to_type: Destination::Type(to.1),
            prestige_without: None,
            prestige_with: None,
            gain: None,
        }
    }

    fn table(scores: &[(u32, f64)]) -> PrestigeTable {
        PrestigeTable {
            basis: PrestigeBasis::QuotaOff,
            mean_percentile: scores.iter().map(|&(p, s)| (ProgramId(p), s)).collect(),
            prestige: scores.iter().map(|&(p, s)| (ProgramId(p), s)).collect(),
            weights: scores.iter().map(|&(p, _)| (ProgramId(p), 1)).collect(),
        }
    }

    #[test]
    fn single_complier() {
        let t = table(&[(1, 40.0), (2, 50.0)]);
        let recs = [record(1, (1, ProgramType::Bachelor), (2, ProgramType::Cpge))];
        let d = decompose(&recs, &t, 10).unwrap();
        assert_eq!(d.rows.len(), 1);
        assert_eq!(d.rows[0].p, 1.0);
        assert_eq!(d.ate, Some(10.0));
        assert_eq!(d.rows[0].contribution, 10.0);
        assert_eq!(d.compliance, 0.1);
        assert_eq!(d.itt, 1.0);
        assert_eq!(d.inter_type, 10.0);
        assert_eq!(d.intra_type, 0.0);
    }

    #[test]
    fn negative_rows_still_sum_to_ate() {
        let t = table(&[(1, 10.0), (2, 30.0), (3, 25.0), (4, 90.0)]);
        let recs = [
            record(1, (1, ProgramType::Bachelor), (2, ProgramType::Dut)),
            record(2, (2, ProgramType::Dut), (3, ProgramType::Bts)),
            record(3, (3, ProgramType::Bts), (4, ProgramType::Cpge)),
            record(4, (1, ProgramType::Bachelor), (2, ProgramType::Dut)),
            record(5, (3, ProgramType::Bts), (1, ProgramType::Bachelor)),
        ];
        let d = decompose(&recs, &t, 100).unwrap();
        // gains: 20, -5, 65, 20, -15
        assert!((d.ate.unwrap() - 17.0).abs() < 1e-12);
        let sum: f64 = d.rows.iter().map(|r| r.contribution).sum();
        assert!((sum - 17.0).abs() < 1e-12);
        assert!(d.rows.iter().any(|r| r.contribution < 0.0));
        assert!((d.intra_type + d.inter_type - 17.0).abs() < 1e-12);
    }

    #[test]
    fn holder_can_be_displaced_by_a_bumped_non_holder() {
        use crate::population::{Applicant, Gender, Program};
        let applicant = |id, scholarship, prefs: &[u32]| Applicant {
            id: ApplicantId(id),
            track: Track::General,
            scholarship,
            bac_grade: 12.0,
            gpa: 12.0,
            gender: Gender::Female,
            region: 0,
            preferences: prefs.iter().map(|&p| ProgramId(p)).collect(),
        };
        let program = |id, scores: &[(u32, f64)]| Program {
            id: ProgramId(id),
            ptype: ProgramType::Bts,
            selective: true,
            capacity: 1,
            committee_score: scores.iter().map(|&(a, s)| (ApplicantId(a), s)).collect(),
            quota_rate: None,
        };
        // 1 is bumped from program 1 by promoted holder 2, falls back to
        // program 2 and outranks holder 3 there (program 2's quota is met by
        // promoting holder 2, who never takes the seat)
        let pop = Population::new(
            vec![applicant(1, false, &[1, 2]), applicant(2, true, &[1, 3, 2]), applicant(3, true, &[2])],
            vec![
                program(1, &[(1, 15.0), (2, 14.0)]),
                program(2, &[(1, 15.0), (2, 14.0), (3, 11.0)]),
                program(3, &[(2, 14.0)]),
            ],
        )
        .unwrap();
        let pair = run_pair(&pop, QuotaRule::Fixed(50.0), &MatchConfig::default()).unwrap();
        assert_eq!(pair.off.assigned_to(ApplicantId(3)), Some(ProgramId(2)));
        assert_eq!(pair.on.assigned_to(ApplicantId(3)), None);
        let m = respecting_improvements(&pop, &pair.off, &pair.on);
        assert_eq!(m.extensive_losses, [ApplicantId(3)]);
    }

    #[test]
    fn zero_compliers() {
        let d = decompose(&[], &table(&[(1, 50.0)]), 10).unwrap();
        assert_eq!(d.ate, None);
        assert_eq!(d.itt, 0.0);
        assert_eq!(d.compliance, 0.0);
    }

    #[test]
    fn itt_at_national_scale() {
        // ATE 7.67 with 7.48% compliance
        let ate: f64 = 7.67;
        assert!((ate * 0.0748 - 0.574).abs() < 1e-3);
    }

    #[test]
    fn too_many_compliers() {
        let recs = [record(1, (1, ProgramType::Bachelor), (2, ProgramType::Cpge))];
        assert!(decompose(&recs, &table(&[(1, 1.0), (2, 2.0)]), 0).is_err());
    }

    #[test]
    fn extensive_moves_excluded_from_ate() {
        let t = table(&[(1, 40.0), (2, 50.0)]);
        let mut lost = record(2, (1, ProgramType::Bachelor), (2, ProgramType::Cpge));
        lost.to_program = None;
        lost.to_type = Destination::Unassigned;
        let recs = [record(1, (1, ProgramType::Bachelor), (2, ProgramType::Cpge)), lost];
        let d = decompose(&recs, &t, 4).unwrap();
        assert_eq!(d.n_scored, 1);
        assert_eq!(d.extensive_losses, 1);
        assert_eq!(d.ate, Some(10.0));
        assert_eq!(d.compliance, 0.5);
        assert_eq!(d.itt, 5.0);
        assert_eq!(d.transitions.len(), 2);
    }

    #[test]
    fn destination_display() {
        assert_eq!(Destination::Type(ProgramType::Cpge).to_string(), "cpge");
        assert_eq!(serde_json::to_string(&Destination::Unassigned).unwrap(), "\"unassigned\"");
    }
}
