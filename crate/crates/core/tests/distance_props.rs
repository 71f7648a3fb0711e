mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use symco::distance::jaccard_matrix;
use symco::{Entry, Error};

use common::cohort_from_grid;

fn entry() -> impl Strategy<Value = Entry> {
    prop_oneof![
        9 => prop_oneof![Just(Entry::Absent), Just(Entry::Present)],
        1 => Just(Entry::Missing),
    ]
}

fn grid() -> impl Strategy<Value = (usize, usize, Vec<Entry>)> {
    (1usize..=60, 2usize..=12).prop_flat_map(|(n, p)| (Just(n), Just(p), prop::collection::vec(entry(), n * p)))
}

/// Reference: case sets per symptom, restricted to jointly observed cases.
fn set_jaccard(n: usize, p: usize, cells: &[Entry], a: usize, b: usize) -> Option<f64> {
    let joint: BTreeSet<usize> = (0..n)
        .filter(|&i| cells[i * p + a] != Entry::Missing && cells[i * p + b] != Entry::Missing)
        .collect();
    let has = |col: usize| -> BTreeSet<usize> {
        joint
            .iter()
            .copied()
            .filter(|&i| cells[i * p + col] == Entry::Present)
            .collect()
    };
    let (sa, sb) = (has(a), has(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return None;
    }
    Some(1.0 - sa.intersection(&sb).count() as f64 / union as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_set_reference((n, p, cells) in grid()) {
        let cohort = cohort_from_grid(n, p, &cells);
        let expected: Vec<Vec<Option<f64>>> = (0..p)
            .map(|a| (0..p).map(|b| set_jaccard(n, p, &cells, a, b)).collect())
            .collect();
        let orphan = (0..p).find(|&a| (0..p).filter(|&b| b != a).all(|b| expected[a][b].is_none()));
        match jaccard_matrix(&cohort) {
            Err(Error::UndefinedRow(s)) => prop_assert_eq!(Some(s), orphan.map(|a| format!("s{a}"))),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
            Ok(d) => {
                prop_assert!(orphan.is_none());
                for a in 0..p {
                    for b in 0..p {
                        let got = d.get(a, b);
                        match (got, expected[a][b]) {
                            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12, "({a},{b}) {x} vs {y}"),
                            (None, None) => {}
                            (g, e) => prop_assert!(false, "({a},{b}) {g:?} vs {e:?}"),
                        }
                        prop_assert_eq!(got, d.get(b, a));
                        if let Some(x) = got {
                            prop_assert!((0.0..=1.0).contains(&x));
                        }
                    }
                }
            }
        }
    }

    /// Hiding entries only shrinks the joint support.
    #[test]
    fn masking_shrinks_support((n, p, cells) in grid(), mask in prop::collection::vec(prop::bool::weighted(0.2), 720)) {
        let full: Vec<Entry> = cells.iter().map(|&e| if e == Entry::Missing { Entry::Absent } else { e }).collect();
        let masked: Vec<Entry> = full
            .iter()
            .zip(&mask)
            .map(|(&e, &m)| if m { Entry::Missing } else { e })
            .collect();
        let (Ok(df), Ok(dm)) = (jaccard_matrix(&cohort_from_grid(n, p, &full)), jaccard_matrix(&cohort_from_grid(n, p, &masked))) else {
            return Ok(());
        };
        for a in 0..p {
            for b in 0..p {
                prop_assert!(dm.support(a, b) <= df.support(a, b));
            }
            prop_assert_eq!(df.support(a, a), n);
        }
    }
}

#[test]
fn hand_example() {
    use Entry::*;
    let cells = [
        Present, Present, Absent, Missing, Present, Present, Absent, Absent, Absent,
    ];
    let d = jaccard_matrix(&cohort_from_grid(3, 3, &cells)).unwrap();
    assert_eq!(d.get(0, 1), Some(0.0));
    assert_eq!(d.get(0, 2), Some(1.0));
    assert_eq!(d.get(1, 2), Some(0.5));
    assert_eq!(d.support(0, 1), 2);
    assert_eq!(d.support(1, 2), 3);
}
