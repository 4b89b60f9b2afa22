use proptest::prelude::*;
use quotamatch::quota::{promotion_order, verify_flags};
use quotamatch::{apply_quota, compute_quota_rate, verify_compliance, QuotaRate, QuotaRule, RankedList};

fn list(flags: &[bool]) -> RankedList<usize> {
    RankedList::academic(flags.iter().copied().enumerate().collect()).unwrap()
}

/// Minimum holders among the first k, computed from the rate definition.
fn oracle_required(q: f64, k: usize) -> usize {
    let exact = q * k as f64 / 100.0;
    let nearest = exact.round();
    if (exact - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn called_list_is_compliant_permutation(flags in prop::collection::vec(any::<bool>(), 0..200), q in 0.0f64..=100.0) {
        let q = QuotaRate::new(q).unwrap();
        let academic = list(&flags);
        let called = apply_quota(&academic, q);
        prop_assert!(verify_compliance(&called, q).compliant);

        let mut ids: Vec<usize> = called.ids().copied().collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..flags.len()).collect::<Vec<_>>());

        // each group keeps its academic order
        let holders: Vec<usize> = called.entries().iter().filter(|e| e.1).map(|e| e.0).collect();
        let others: Vec<usize> = called.entries().iter().filter(|e| !e.1).map(|e| e.0).collect();
        prop_assert!(holders.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(others.windows(2).all(|w| w[0] < w[1]));

        // promotion never moves a holder down or a non-holder up
        for (pos, &(id, s)) in called.entries().iter().enumerate() {
            if s { prop_assert!(pos <= id) } else { prop_assert!(pos >= id) }
        }

        prop_assert_eq!(apply_quota(&called, q), called);
    }

    #[test]
    fn holders_are_promoted_only_as_needed(flags in prop::collection::vec(any::<bool>(), 0..120), q in 0.0f64..=100.0) {
        let rate = QuotaRate::new(q).unwrap();
        let order = promotion_order(&flags, rate);
        let total = flags.iter().filter(|&&s| s).count();
        let mut seen = 0;
        for (k, &i) in order.iter().enumerate() {
            if flags[i] {
                seen += 1;
                // a holder ahead of a better-ranked non-holder must be needed there
                let jumped = order[k + 1..].iter().any(|&j| !flags[j] && j < i);
                if jumped {
                    prop_assert_eq!(seen, oracle_required(q, k + 1).min(total));
                }
            }
        }
    }

    #[test]
    fn verifier_matches_prefix_definition(flags in prop::collection::vec(any::<bool>(), 0..100), q in 0.0f64..=100.0) {
        let rate = QuotaRate::new(q).unwrap();
        let total = flags.iter().filter(|&&s| s).count();
        let mut expected = None;
        let mut s = 0;
        for k in 1..=flags.len() {
            s += usize::from(flags[k - 1]);
            if s < oracle_required(q, k) && s < total {
                expected = Some(k);
                break;
            }
        }
        let got = verify_flags(&flags, rate);
        prop_assert_eq!(got.first_violation, expected);
        prop_assert_eq!(got.compliant, expected.is_none());
    }

    #[test]
    fn rate_rules_stay_in_range(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).floor() as usize;
        let share = 100.0 * s as f64 / n as f64;
        let plus = compute_quota_rate(s, n, QuotaRule::PlusTwoFloorFive).unwrap().value();
        let floor = compute_quota_rate(s, n, QuotaRule::FloorFiveOnly).unwrap().value();
        prop_assert!((5.0..=100.0).contains(&plus));
        prop_assert!((5.0..=100.0).contains(&floor));
        prop_assert!(plus >= floor);
        prop_assert!((plus - (share + 2.0).clamp(5.0, 100.0)).abs() < 1e-9);
        prop_assert_eq!(compute_quota_rate(s, n, QuotaRule::None).unwrap().value(), 0.0);
    }
}

#[test]
fn zero_rate_and_no_holders_are_identity() {
    let flags = [false, true, false, false, true];
    assert_eq!(apply_quota(&list(&flags), QuotaRate::ZERO).entries(), list(&flags).entries());
    let none = [false; 7];
    assert_eq!(apply_quota(&list(&none), QuotaRate::new(60.0).unwrap()).entries(), list(&none).entries());
}

#[test]
fn full_rate_puts_every_holder_first() {
    let flags = [false, false, true, false, true];
    let called = apply_quota(&list(&flags), QuotaRate::new(100.0).unwrap());
    assert_eq!(called.ids().copied().collect::<Vec<_>>(), [2, 4, 0, 1, 3]);
}
