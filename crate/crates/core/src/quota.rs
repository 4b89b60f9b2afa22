//! Scholarship call quotas: per-program rate rules, the promotion step that
//! turns an academic ranking into a calling order, and the prefix verifier.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::population::ApplicantId;

/// Minimum scholarship share, in percent, enforced on every call-list prefix.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuotaRate(f64);

impl QuotaRate {
    pub const ZERO: QuotaRate = QuotaRate(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&value) {
            return Err(Error::Domain(format!("quota rate {value} outside [0, 100]")));
        }
        Ok(QuotaRate(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Number of scholarship holders required among the first `k` entries,
    /// i.e. `ceil(q * k / 100)`.
    ///
    /// Products within 1e-9 (relative) of an integer are snapped to it so that
    /// rates produced by floating division (100 * s / n + 2) do not demand one
    /// extra holder through representation error.
    pub fn required(self, k: usize) -> usize {
        let x = self.0 * k as f64 / 100.0;
        let r = x.round();
        if (x - r).abs() <= 1e-9 * r.max(1.0) {
            r as usize
        } else {
            x.ceil() as usize
        }
    }
}

impl fmt::Display for QuotaRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", self.0)
    }
}

/// How a program's quota rate is derived from its applicant pool.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum QuotaRule {
    /// No quota (rate 0).
    #[default]
    None,
    /// Scholarship share of applicants plus two points, floored at 5%.
    PlusTwoFloorFive,
    /// Scholarship share of applicants, floored at 5%.
    FloorFiveOnly,
    /// Same fixed rate for every program.
    Fixed(f64),
}

impl fmt::Display for QuotaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuotaRule::None => f.write_str("none"),
            QuotaRule::PlusTwoFloorFive => f.write_str("plus2floor5"),
            QuotaRule::FloorFiveOnly => f.write_str("floor5"),
            QuotaRule::Fixed(r) => write!(f, "fixed:{r}"),
        }
    }
}

impl FromStr for QuotaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(QuotaRule::None),
            "plus2floor5" => Ok(QuotaRule::PlusTwoFloorFive),
            "floor5" => Ok(QuotaRule::FloorFiveOnly),
            other => {
                let rate =
                    other.strip_prefix("fixed:").ok_or_else(|| Error::Config(format!("unknown quota rule `{s}`")))?;
                let r: f64 = rate.parse().map_err(|_| Error::Config(format!("bad fixed quota rate `{rate}`")))?;
                QuotaRate::new(r)?;
                Ok(QuotaRule::Fixed(r))
            }
        }
    }
}

impl Serialize for QuotaRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QuotaRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Quota rate for a program with `n_scholarship` scholarship holders among
/// `n_applicants` applicants. The value is not rounded.
pub fn compute_quota_rate(n_scholarship: usize, n_applicants: usize, rule: QuotaRule) -> Result<QuotaRate> {
    if n_applicants == 0 {
        return Err(Error::Domain("quota rate needs at least one applicant".into()));
    }
    if n_scholarship > n_applicants {
        return Err(Error::Domain(format!("{n_scholarship} scholarship applicants out of {n_applicants}")));
    }
    let share = 100.0 * n_scholarship as f64 / n_applicants as f64;
    let value = match rule {
        QuotaRule::None => 0.0,
        QuotaRule::PlusTwoFloorFive => (share + 2.0).max(5.0),
        QuotaRule::FloorFiveOnly => share.max(5.0),
        QuotaRule::Fixed(r) => r,
    };
    // share + 2 can exceed 100 when every applicant holds a scholarship.
    QuotaRate::new(value.min(100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ListOrigin {
    Academic,
    Called,
}

/// Ordered applicant list for one program: entries are `(id, scholarship)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<I = ApplicantId> {
    entries: Vec<(I, bool)>,
    origin: ListOrigin,
}

impl<I: Clone + Eq + Hash + fmt::Debug> RankedList<I> {
    /// Academic ranking; fails on duplicate ids.
    pub fn academic(entries: Vec<(I, bool)>) -> Result<Self> {
        Self::with_origin(entries, ListOrigin::Academic)
    }

    pub fn with_origin(entries: Vec<(I, bool)>, origin: ListOrigin) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, _) in &entries {
            if !seen.insert(id) {
                return Err(Error::Domain(format!("duplicate applicant {id:?} in ranked list")));
            }
        }
        Ok(RankedList { entries, origin })
    }
}

impl<I> RankedList<I> {
    pub fn entries(&self) -> &[(I, bool)] {
        &self.entries
    }

    pub fn origin(&self) -> ListOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &I> + '_ {
        self.entries.iter().map(|(id, _)| id)
    }

    pub fn flags(&self) -> Vec<bool> {
        self.entries.iter().map(|&(_, s)| s).collect()
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }
}

/// Calling order for scholarship flags in academic order: returns the
/// permutation as indices into `flags`.
///
/// Walks positions front to back. Whenever the prefix ending at the current
/// position would hold fewer than `q.required(k)` holders, the best-ranked
/// holder not yet placed is promoted into that position; otherwise the
/// best-ranked remaining entry keeps its turn.
pub fn promotion_order(flags: &[bool], q: QuotaRate) -> Vec<usize> {
    let holders: Vec<usize> = (0..flags.len()).filter(|&i| flags[i]).collect();
    let others: Vec<usize> = (0..flags.len()).filter(|&i| !flags[i]).collect();
    let (mut h, mut o) = (0, 0);
    let mut placed_holders = 0;
    let mut order = Vec::with_capacity(flags.len());
    for k in 1..=flags.len() {
        let take_holder = if h < holders.len() && placed_holders < q.required(k) {
            true
        } else if h < holders.len() && o < others.len() {
            holders[h] < others[o]
        } else {
            h < holders.len()
        };
        if take_holder {
            order.push(holders[h]);
            h += 1;
            placed_holders += 1;
        } else {
            order.push(others[o]);
            o += 1;
        }
    }
    order
}

/// Apply quota promotion to an academic ranking, producing the calling order.
pub fn apply_quota<I: Clone>(academic: &RankedList<I>, q: QuotaRate) -> RankedList<I> {
    let flags = academic.flags();
    let order = promotion_order(&flags, q);
    RankedList { entries: order.into_iter().map(|i| academic.entries[i].clone()).collect(), origin: ListOrigin::Called }
}

/// Verdict of [`verify_compliance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Compliance {
    pub compliant: bool,
    /// Smallest prefix length `k` at which the quota fails while holders
    /// remain further down the list.
    pub first_violation: Option<usize>,
}

/// Check that every prefix `k` either holds at least `q.required(k)`
/// scholarship holders or is followed by no holder at all.
pub fn verify_flags(flags: &[bool], q: QuotaRate) -> Compliance {
    let total: usize = flags.iter().filter(|&&s| s).count();
    let mut seen = 0;
    for (i, &s) in flags.iter().enumerate() {
        if s {
            seen += 1;
        }
        let k = i + 1;
        if seen < q.required(k) && seen < total {
            return Compliance { compliant: false, first_violation: Some(k) };
        }
    }
    Compliance { compliant: true, first_violation: None }
}

pub fn verify_compliance<I>(called: &RankedList<I>, q: QuotaRate) -> Compliance {
    verify_flags(&called.flags(), q)
}
