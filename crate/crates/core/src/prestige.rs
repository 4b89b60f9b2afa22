//! Program prestige: enrollment-weighted rank of a program's mean admitted
//! baccalaureate percentile, on a 0-100 scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchOutcome;
use crate::population::{Applicant, ApplicantId, ProgramId};

/// Which simulation arm defined enrollment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrestigeBasis {
    QuotaOff,
    QuotaOn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrestigeTable {
    pub basis: PrestigeBasis,
    pub mean_percentile: BTreeMap<ProgramId, f64>,
    pub prestige: BTreeMap<ProgramId, f64>,
    /// Enrolled count per program.
    pub weights: BTreeMap<ProgramId, usize>,
}

impl PrestigeTable {
    pub fn get(&self, program: ProgramId) -> Option<f64> {
        self.prestige.get(&program).copied()
    }

    /// Enrollment-weighted share (in percent) of programs whose prestige is
    /// at most `x`.
    pub fn weighted_share_at_most(&self, x: f64) -> f64 {
        let total: usize = self.weights.values().sum();
        let below: usize = self.prestige.iter().filter(|(_, &p)| p <= x).map(|(pid, _)| self.weights[pid]).sum();
        weighted_percent(below, total)
    }
}

fn weighted_percent(part: usize, total: usize) -> f64 {
    100.0 * (part as f64 / total as f64)
}

/// Baccalaureate percentile of every applicant among all applicants, using
/// midranks for ties: `100 * (below + 0.5 * tied) / total`.
pub fn percentile_ranks(applicants: &[Applicant]) -> Result<BTreeMap<ApplicantId, f64>> {
    if applicants.is_empty() {
        return Err(Error::Domain("percentile ranks need at least one applicant".into()));
    }
    let mut grades: Vec<f64> = applicants.iter().map(|a| a.bac_grade).collect();
    grades.sort_by(f64::total_cmp);
    let n = grades.len() as f64;
    Ok(applicants
        .iter()
        .map(|a| {
            let below = grades.partition_point(|&g| g < a.bac_grade);
            let upto = grades.partition_point(|&g| g <= a.bac_grade);
            let tied = upto - below;
            (a.id, 100.0 * (below as f64 + 0.5 * tied as f64) / n)
        })
        .collect())
}

/// Prestige of every program that enrolled at least one applicant:
/// `100 * sum(N_j : mean_j <= mean_i) / sum(N_k)`.
pub fn prestige_scores(
    outcome: &MatchOutcome,
    percentiles: &BTreeMap<ApplicantId, f64>,
    basis: PrestigeBasis,
) -> Result<PrestigeTable> {
    let mut sums: BTreeMap<ProgramId, (f64, usize)> = BTreeMap::new();
    for (aid, program) in &outcome.assignment {
        let Some(program) = program else { continue };
        let p = percentiles.get(aid).ok_or_else(|| Error::Domain(format!("no percentile for applicant {aid}")))?;
        let e = sums.entry(*program).or_insert((0.0, 0));
        e.0 += p;
        e.1 += 1;
    }
    if sums.is_empty() {
        return Err(Error::Domain("no program enrolled anyone".into()));
    }
    let mean_percentile: BTreeMap<ProgramId, f64> = sums.iter().map(|(&pid, &(s, n))| (pid, s / n as f64)).collect();
    let weights: BTreeMap<ProgramId, usize> = sums.iter().map(|(&pid, &(_, n))| (pid, n)).collect();
    let total: usize = weights.values().sum();

    let mut order: Vec<(f64, ProgramId)> = mean_percentile.iter().map(|(&pid, &m)| (m, pid)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut prestige = BTreeMap::new();
    let mut cum = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].0 == order[i].0 {
            cum += weights[&order[j].1];
            j += 1;
        }
        let score = weighted_percent(cum, total);
        for &(_, pid) in &order[i..j] {
            prestige.insert(pid, score);
        }
        i = j;
    }
    Ok(PrestigeTable { basis, mean_percentile, prestige, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{Gender, Track};

    fn app(id: u32, grade: f64) -> Applicant {
        Applicant {
            id: ApplicantId(id),
            track: Track::General,
            scholarship: false,
            bac_grade: grade,
            gpa: grade,
            gender: Gender::Male,
            region: 0,
            preferences: vec![],
        }
    }

    fn outcome(pairs: &[(u32, Option<u32>)]) -> MatchOutcome {
        let mut o = MatchOutcome::default();
        for &(a, p) in pairs {
            o.assignment.insert(ApplicantId(a), p.map(ProgramId));
            if let Some(p) = p {
                o.last_offer_position.insert(ProgramId(p), 1);
            }
        }
        o
    }

    #[test]
    fn percentiles() {
        let p = percentile_ranks(&[app(1, 12.0)]).unwrap();
        assert_eq!(p[&ApplicantId(1)], 50.0);

        let p = percentile_ranks(&[app(1, 10.0), app(2, 12.0), app(3, 14.0)]).unwrap();
        assert!((p[&ApplicantId(1)] - 100.0 / 6.0).abs() < 1e-12);
        assert_eq!(p[&ApplicantId(2)], 50.0);
        assert!((p[&ApplicantId(3)] - 500.0 / 6.0).abs() < 1e-12);

        let p = percentile_ranks(&[app(1, 9.0), app(2, 9.0), app(3, 9.0), app(4, 9.0)]).unwrap();
        assert!(p.values().all(|&v| v == 50.0));

        assert!(percentile_ranks(&[]).is_err());
    }

    #[test]
    fn single_program_is_100() {
        let pct = percentile_ranks(&[app(1, 10.0), app(2, 12.0)]).unwrap();
        let t = prestige_scores(&outcome(&[(1, Some(7)), (2, Some(7))]), &pct, PrestigeBasis::QuotaOff).unwrap();
        assert_eq!(t.get(ProgramId(7)), Some(100.0));
    }

    #[test]
    fn three_equal_programs() {
        let pct = percentile_ranks(&[app(1, 10.0), app(2, 12.0), app(3, 14.0)]).unwrap();
        let t = prestige_scores(&outcome(&[(1, Some(1)), (2, Some(2)), (3, Some(3))]), &pct, PrestigeBasis::QuotaOff)
            .unwrap();
        assert!((t.get(ProgramId(1)).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert!((t.get(ProgramId(2)).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.get(ProgramId(3)), Some(100.0));
    }

    #[test]
    fn top_program_scores_100_and_ties_share() {
        let pct = percentile_ranks(&[app(1, 18.0), app(2, 18.0), app(3, 11.0), app(4, 11.0), app(5, 5.0)]).unwrap();
        let t = prestige_scores(
            &outcome(&[(1, Some(1)), (2, Some(1)), (3, Some(2)), (4, Some(3)), (5, None)]),
            &pct,
            PrestigeBasis::QuotaOff,
        )
        .unwrap();
        assert_eq!(t.get(ProgramId(1)), Some(100.0));
        assert_eq!(t.get(ProgramId(2)), t.get(ProgramId(3)));
        assert_eq!(t.get(ProgramId(2)), Some(50.0));
        assert_eq!(t.weights.values().sum::<usize>(), 4);
    }

    #[test]
    fn nobody_enrolled() {
        let pct = percentile_ranks(&[app(1, 10.0)]).unwrap();
        assert!(prestige_scores(&outcome(&[(1, None)]), &pct, PrestigeBasis::QuotaOff).is_err());
    }
}
