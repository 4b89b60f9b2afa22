//! Call-list construction and applicant-proposing deferred acceptance
//! (single round, everyone accepts their final tentative assignment).

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Applicant, ApplicantId, Population, ProgramId};
use crate::quota::{apply_quota, compute_quota_rate, QuotaRate, QuotaRule, RankedList};

/// How non-selective programs order applicants when over-demanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum NonSelectiveOrder {
    /// Committee score, as selective programs do.
    #[default]
    Score,
    /// Seeded random draw (the 2016 APB practice for short Bachelor seats).
    Lottery { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct MatchConfig {
    /// Keep only the first N applicants on a selective program's list.
    pub selective_truncation: Option<usize>,
    pub nonselective_order: NonSelectiveOrder,
}

/// Every program's calling order together with the rate that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CallLists {
    pub rule: QuotaRule,
    pub lists: BTreeMap<ProgramId, RankedList>,
    pub rates: BTreeMap<ProgramId, QuotaRate>,
    /// Applicants with an empty preference list, left out of every list.
    pub skipped_empty: usize,
}

impl CallLists {
    /// 1-based position of `applicant` on `program`'s list.
    pub fn position(&self, program: ProgramId, applicant: ApplicantId) -> Option<usize> {
        self.lists.get(&program)?.ids().position(|&a| a == applicant).map(|p| p + 1)
    }

    /// Position lookup table for one program.
    pub fn positions(&self, program: ProgramId) -> HashMap<ApplicantId, usize> {
        self.lists.get(&program).map(|l| l.ids().enumerate().map(|(i, &a)| (a, i + 1)).collect()).unwrap_or_default()
    }
}

/// Rank every program's applicants by committee score (descending, ties by
/// applicant id) and, under a quota rule, promote scholarship holders.
///
/// The quota rate is computed on the program's whole applicant pool, before
/// any selective truncation.
pub fn build_call_lists(pop: &Population, rule: QuotaRule, cfg: &MatchConfig) -> Result<CallLists> {
    let index = pop.program_index();
    let mut pools: Vec<Vec<(ApplicantId, bool)>> = vec![Vec::new(); pop.programs.len()];
    let mut skipped_empty = 0;
    for a in &pop.applicants {
        if a.preferences.is_empty() {
            skipped_empty += 1;
            continue;
        }
        for pid in &a.preferences {
            let &pi = index
                .get(pid)
                .ok_or_else(|| Error::Referential(format!("applicant {} lists unknown program {pid}", a.id)))?;
            pools[pi].push((a.id, a.scholarship));
        }
    }
    if skipped_empty > 0 {
        log::warn!("{skipped_empty} applicants with empty preference lists skipped");
    }

    let built: Vec<(ProgramId, RankedList, QuotaRate)> = pop
        .programs
        .par_iter()
        .zip(pools.into_par_iter())
        .map(|(program, mut pool)| {
            for (aid, _) in &pool {
                if !program.committee_score.contains_key(aid) {
                    return Err(Error::Referential(format!(
                        "program {} has no committee score for applicant {aid}",
                        program.id
                    )));
                }
            }
            match (program.selective, cfg.nonselective_order) {
                (false, NonSelectiveOrder::Lottery { seed }) => {
                    pool.sort_by_key(|&(a, _)| a);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(u64::from(program.id.0));
                    pool.shuffle(&mut rng);
                }
                _ => pool.sort_by(|x, y| {
                    let sx = program.committee_score[&x.0];
                    let sy = program.committee_score[&y.0];
                    sy.total_cmp(&sx).then(x.0.cmp(&y.0))
                }),
            }
            let rate = if pool.is_empty() {
                QuotaRate::ZERO
            } else {
                let s = pool.iter().filter(|e| e.1).count();
                compute_quota_rate(s, pool.len(), rule)?
            };
            let mut academic = RankedList::academic(pool)?;
            if program.selective {
                if let Some(n) = cfg.selective_truncation {
                    academic.truncate(n);
                }
            }
            let list = if rate.value() > 0.0 { apply_quota(&academic, rate) } else { academic };
            Ok((program.id, list, rate))
        })
        .collect::<Result<_>>()?;

    let mut lists = BTreeMap::new();
    let mut rates = BTreeMap::new();
    for (pid, list, rate) in built {
        lists.insert(pid, list);
        rates.insert(pid, rate);
    }
    Ok(CallLists { rule, lists, rates, skipped_empty })
}

pub fn capacities(pop: &Population) -> BTreeMap<ProgramId, u32> {
    pop.programs.iter().map(|p| (p.id, p.capacity)).collect()
}

/// Result of one deferred-acceptance run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub assignment: BTreeMap<ApplicantId, Option<ProgramId>>,
    /// 1-based index of the assigned program in the applicant's list.
    pub achieved_rank: BTreeMap<ApplicantId, Option<u32>>,
    /// Deepest call-list position that ever held a tentative offer.
    pub last_offer_position: BTreeMap<ProgramId, usize>,
}

impl MatchOutcome {
    pub fn assigned_to(&self, applicant: ApplicantId) -> Option<ProgramId> {
        self.assignment.get(&applicant).copied().flatten()
    }

    /// Enrolled applicants per program, in applicant-id order.
    pub fn enrollment(&self) -> BTreeMap<ProgramId, Vec<ApplicantId>> {
        let mut out: BTreeMap<ProgramId, Vec<ApplicantId>> =
            self.last_offer_position.keys().map(|&p| (p, Vec::new())).collect();
        for (&a, p) in &self.assignment {
            if let Some(p) = p {
                out.entry(*p).or_default().push(a);
            }
        }
        out
    }
}

/// Applicant-proposing deferred acceptance against the programs' call
/// lists. Applicants not on a program's list are rejected by it outright.
///
/// Free applicants are processed first-in first-out starting in input
/// order, which fixes `last_offer_position` (the stable assignment itself
/// does not depend on proposal order).
pub fn deferred_acceptance(
    applicants: &[Applicant],
    call_lists: &CallLists,
    capacities: &BTreeMap<ProgramId, u32>,
) -> Result<MatchOutcome> {
    let pids: Vec<ProgramId> = call_lists.lists.keys().copied().collect();
    let dense: HashMap<ProgramId, usize> = pids.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut caps = Vec::with_capacity(pids.len());
    for pid in &pids {
        let cap = *capacities.get(pid).ok_or_else(|| Error::Referential(format!("no capacity for program {pid}")))?;
        if cap == 0 {
            return Err(Error::Domain(format!("program {pid} has capacity 0")));
        }
        caps.push(cap as usize);
    }

    let position_maps: Vec<HashMap<ApplicantId, u32>> = call_lists
        .lists
        .par_iter()
        .map(|(_, l)| l.ids().enumerate().map(|(i, &a)| (a, i as u32 + 1)).collect())
        .collect();

    // Per applicant: (dense program, position on its list or 0 if absent).
    let choices: Vec<Vec<(usize, u32)>> = applicants
        .iter()
        .map(|a| {
            a.preferences
                .iter()
                .map(|pid| {
                    let &k = dense.get(pid).ok_or_else(|| {
                        Error::Referential(format!("applicant {} lists program {pid} without a call list", a.id))
                    })?;
                    Ok((k, position_maps[k].get(&a.id).copied().unwrap_or(0)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut next = vec![0usize; applicants.len()];
    let mut held: Vec<BinaryHeap<(u32, usize)>> = caps.iter().map(|&c| BinaryHeap::with_capacity(c)).collect();
    let mut deepest = vec![0u32; pids.len()];
    let mut free: VecDeque<usize> = (0..applicants.len()).collect();

    while let Some(a) = free.pop_front() {
        while next[a] < choices[a].len() {
            let (k, pos) = choices[a][next[a]];
            next[a] += 1;
            if pos == 0 {
                continue;
            }
            let heap = &mut held[k];
            if heap.len() < caps[k] {
                heap.push((pos, a));
                deepest[k] = deepest[k].max(pos);
                break;
            }
            let &(worst, _) = heap.peek().expect("full heap is non-empty");
            if pos < worst {
                let (_, bumped) = heap.pop().expect("non-empty");
                heap.push((pos, a));
                deepest[k] = deepest[k].max(pos);
                free.push_back(bumped);
                break;
            }
        }
    }

    let mut assigned: Vec<Option<(usize, u32)>> = vec![None; applicants.len()];
    for (k, heap) in held.iter().enumerate() {
        for &(_, a) in heap.iter() {
            let rank = choices[a].iter().position(|&(p, _)| p == k).expect("held program is listed") as u32 + 1;
            assigned[a] = Some((k, rank));
        }
    }
    let mut outcome = MatchOutcome::default();
    for (a, slot) in applicants.iter().zip(assigned) {
        outcome.assignment.insert(a.id, slot.map(|(k, _)| pids[k]));
        outcome.achieved_rank.insert(a.id, slot.map(|(_, r)| r));
    }
    for (k, &pid) in pids.iter().enumerate() {
        outcome.last_offer_position.insert(pid, deepest[k] as usize);
    }
    Ok(outcome)
}

/// Applicants ranked at or above the deepest position each program reached.
pub fn admissible_set(outcome: &MatchOutcome, call_lists: &CallLists) -> BTreeMap<ProgramId, BTreeSet<ApplicantId>> {
    call_lists
        .lists
        .iter()
        .map(|(pid, list)| {
            let depth = outcome.last_offer_position.get(pid).copied().unwrap_or(0);
            (*pid, list.ids().take(depth).copied().collect())
        })
        .collect()
}

/// Build call lists and run deferred acceptance in one step.
pub fn simulate(pop: &Population, rule: QuotaRule, cfg: &MatchConfig) -> Result<(CallLists, MatchOutcome)> {
    let lists = build_call_lists(pop, rule, cfg)?;
    let outcome = deferred_acceptance(&pop.applicants, &lists, &capacities(pop))?;
    Ok((lists, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{Gender, Program, ProgramType, Track};

    fn applicant(id: u32, scholarship: bool, prefs: &[u32]) -> Applicant {
        Applicant {
            id: ApplicantId(id),
            track: Track::General,
            scholarship,
            bac_grade: 12.0,
            gpa: 12.0,
            gender: Gender::Female,
            region: 0,
            preferences: prefs.iter().map(|&p| ProgramId(p)).collect(),
        }
    }

    fn program(id: u32, capacity: u32, scores: &[(u32, f64)]) -> Program {
        Program {
            id: ProgramId(id),
            ptype: ProgramType::Cpge,
            selective: true,
            capacity,
            committee_score: scores.iter().map(|&(a, s)| (ApplicantId(a), s)).collect(),
            quota_rate: None,
        }
    }

    fn order(lists: &CallLists, p: u32) -> Vec<u32> {
        lists.lists[&ProgramId(p)].ids().map(|a| a.0).collect()
    }

    #[test]
    fn academic_order_by_score() {
        let pop = Population::new(
            vec![applicant(1, false, &[1]), applicant(2, false, &[1]), applicant(3, true, &[1])],
            vec![program(1, 1, &[(1, 12.0), (2, 15.0), (3, 9.0)])],
        )
        .unwrap();
        let lists = build_call_lists(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        assert_eq!(order(&lists, 1), [2, 1, 3]);

        // ceil(0.34 * 1) = 1: the holder moves to the front
        let lists = build_call_lists(&pop, QuotaRule::Fixed(34.0), &MatchConfig::default()).unwrap();
        assert_eq!(order(&lists, 1), [3, 2, 1]);
    }

    #[test]
    fn no_holders_list_unchanged() {
        let pop = Population::new(
            vec![applicant(1, false, &[1]), applicant(2, false, &[1])],
            vec![program(1, 1, &[(1, 12.0), (2, 15.0)])],
        )
        .unwrap();
        let lists = build_call_lists(&pop, QuotaRule::PlusTwoFloorFive, &MatchConfig::default()).unwrap();
        assert_eq!(order(&lists, 1), [2, 1]);
        assert_eq!(lists.rates[&ProgramId(1)].value(), 5.0);
    }

    #[test]
    fn score_ties_broken_by_id() {
        let pop = Population::new(
            vec![applicant(5, false, &[1]), applicant(2, false, &[1]), applicant(9, false, &[1])],
            vec![program(1, 1, &[(5, 10.0), (2, 10.0), (9, 10.0)])],
        )
        .unwrap();
        let lists = build_call_lists(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        assert_eq!(order(&lists, 1), [2, 5, 9]);
    }

    #[test]
    fn empty_preference_lists_skipped() {
        let pop = Population::new(
            vec![applicant(1, false, &[]), applicant(2, false, &[1])],
            vec![program(1, 1, &[(2, 10.0)])],
        )
        .unwrap();
        let (lists, outcome) = simulate(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        assert_eq!(lists.skipped_empty, 1);
        assert_eq!(outcome.assigned_to(ApplicantId(1)), None);
        assert_eq!(outcome.assigned_to(ApplicantId(2)), Some(ProgramId(1)));
    }

    #[test]
    fn two_applicants_one_seat() {
        let pop = Population::new(
            vec![applicant(1, false, &[1, 2]), applicant(2, false, &[1])],
            vec![program(1, 1, &[(1, 15.0), (2, 12.0)]), program(2, 1, &[(1, 10.0)])],
        )
        .unwrap();
        let (_, outcome) = simulate(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        assert_eq!(outcome.assigned_to(ApplicantId(1)), Some(ProgramId(1)));
        assert_eq!(outcome.assigned_to(ApplicantId(2)), None);
        assert_eq!(outcome.achieved_rank[&ApplicantId(1)], Some(1));
        assert_eq!(outcome.achieved_rank[&ApplicantId(2)], None);
    }

    #[test]
    fn last_offer_counts_displaced_offers() {
        // Applicant 2 (position 2) proposes first and is held, then bumped by
        // applicant 1 (position 1) who arrives after leaving program 2.
        let pop = Population::new(
            vec![applicant(1, false, &[2, 1]), applicant(2, false, &[1]), applicant(3, false, &[2])],
            vec![program(1, 1, &[(1, 15.0), (2, 12.0)]), program(2, 1, &[(1, 10.0), (3, 14.0)])],
        )
        .unwrap();
        let (lists, outcome) = simulate(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        assert_eq!(outcome.assigned_to(ApplicantId(1)), Some(ProgramId(1)));
        assert_eq!(outcome.assigned_to(ApplicantId(2)), None);
        assert_eq!(outcome.last_offer_position[&ProgramId(1)], 2);
        let adm = admissible_set(&outcome, &lists);
        assert_eq!(adm[&ProgramId(1)].len(), 2);
        assert_eq!(adm[&ProgramId(2)].iter().map(|a| a.0).collect::<Vec<_>>(), [1, 3]);
    }

    #[test]
    fn admissible_empty_without_offers() {
        let pop = Population::new(
            vec![applicant(1, false, &[1]), applicant(2, false, &[1])],
            vec![program(1, 2, &[(1, 15.0), (2, 12.0)]), program(2, 1, &[])],
        )
        .unwrap();
        let (lists, outcome) = simulate(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        let adm = admissible_set(&outcome, &lists);
        assert!(adm[&ProgramId(2)].is_empty());
        assert_eq!(adm[&ProgramId(1)].len(), 2);
        assert_eq!(outcome.last_offer_position[&ProgramId(2)], 0);
    }

    #[test]
    fn truncation_excludes_applicants() {
        let pop = Population::new(
            vec![applicant(1, false, &[1]), applicant(2, false, &[1]), applicant(3, false, &[1])],
            vec![program(1, 3, &[(1, 15.0), (2, 12.0), (3, 10.0)])],
        )
        .unwrap();
        let cfg = MatchConfig { selective_truncation: Some(2), ..Default::default() };
        let (_, outcome) = simulate(&pop, QuotaRule::None, &cfg).unwrap();
        assert_eq!(outcome.assigned_to(ApplicantId(3)), None);
        assert_eq!(outcome.assigned_to(ApplicantId(2)), Some(ProgramId(1)));
    }

    #[test]
    fn lottery_is_seeded() {
        let apps: Vec<_> = (1..=20).map(|i| applicant(i, false, &[1])).collect();
        let scores: Vec<_> = (1..=20).map(|i| (i, i as f64)).collect();
        let mut p = program(1, 5, &scores);
        p.selective = false;
        p.ptype = ProgramType::Bachelor;
        let pop = Population::new(apps, vec![p]).unwrap();
        let cfg = MatchConfig { nonselective_order: NonSelectiveOrder::Lottery { seed: 3 }, ..Default::default() };
        let a = build_call_lists(&pop, QuotaRule::None, &cfg).unwrap();
        let b = build_call_lists(&pop, QuotaRule::None, &cfg).unwrap();
        assert_eq!(a, b);
        let by_score = build_call_lists(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        assert_ne!(order(&a, 1), order(&by_score, 1));
    }

    #[test]
    fn zero_capacity_rejected() {
        let pop =
            Population { applicants: vec![applicant(1, false, &[1])], programs: vec![program(1, 0, &[(1, 1.0)])] };
        let lists = build_call_lists(&pop, QuotaRule::None, &MatchConfig::default()).unwrap();
        let err = deferred_acceptance(&pop.applicants, &lists, &capacities(&pop)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
