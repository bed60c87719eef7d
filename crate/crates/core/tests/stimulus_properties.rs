use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use stimgen::stimulus::{
    audit_calibration, make_lists, make_pairs, select_calibration, zscore_by_participant,
    CalibrationSet, ItemKind, ListParams, PairCandidate, PairType, RatingRecord, SentenceScore,
};

fn ratings() -> impl Strategy<Value = Vec<RatingRecord>> {
    // participants x sentences grid with random ratings
    (2usize..5, 2usize..7)
        .prop_flat_map(|(np, ns)| {
            prop::collection::vec(0.0f64..=1.0, np * ns).prop_map(move |v| (np, ns, v))
        })
        .prop_map(|(_, ns, v)| {
            v.into_iter()
                .enumerate()
                .map(|(i, x)| RatingRecord {
                    participant_id: format!("p{}", i / ns),
                    sentence_id: format!("s{}", i % ns),
                    rating: x,
                    verb: None,
                })
                .collect()
        })
}

proptest! {
    #[test]
    fn zscores_ignore_affine_scale_use(rs in ratings(), a in 0.05f64..0.5, b in 0.0f64..0.4) {
        let shifted: Vec<RatingRecord> = rs.iter().map(|r| RatingRecord { rating: a * r.rating + b, ..r.clone() }).collect();
        let x = zscore_by_participant(&rs).unwrap();
        let y = zscore_by_participant(&shifted).unwrap();
        for (p, q) in x.iter().zip(&y) {
            prop_assert_eq!(&p.sentence_id, &q.sentence_id);
            prop_assert!((p.score - q.score).abs() < 1e-6);
        }
    }

    #[test]
    fn lists_partition_targets(n in 1usize..400, seed in any::<u64>()) {
        let targets: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let selected: Vec<String> = (0..50).map(|i| format!("c{i}")).collect();
        let cal = CalibrationSet { initial_block: selected[..8].to_vec(), selected, shortfall: false };
        let lists = make_lists(&targets, &cal, ListParams::RATING, seed, true).unwrap();
        let mut seen = HashSet::new();
        for l in &lists {
            prop_assert_eq!(l.items.len(), 89);
            prop_assert!(l.target_count <= 59);
            for it in l.items.iter().filter(|i| i.kind == ItemKind::Target) {
                prop_assert!(seen.insert(it.id.clone()));
            }
        }
        prop_assert_eq!(seen.len(), n);
        let sizes: Vec<usize> = lists.iter().map(|l| l.target_count).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(make_lists(&targets, &cal, ListParams::RATING, seed, true).unwrap(), lists);
    }

    #[test]
    fn pair_counts_follow_n_plus_choose(senses in prop::collection::vec(2usize..5, 1..6)) {
        let mut cands = Vec::new();
        for (s, &m) in senses.iter().enumerate() {
            for k in 0..m {
                cands.push(PairCandidate { sentence_id: format!("s{s}-{k}"), verb: "v".into(), sense_id: format!("v.{s:02}"), z_sum: (k * 7 % 5) as f64 });
            }
        }
        let pairs = make_pairs(&cands);
        let n = senses.len();
        prop_assert_eq!(pairs.len(), n + n * (n - 1) / 2);
        for p in &pairs {
            prop_assert_ne!(&p.sentence_a, &p.sentence_b);
            prop_assert_eq!(p.pair_type == PairType::SameSense, p.senses.0 == p.senses.1);
        }
    }

    #[test]
    fn calibration_constraints_hold(xs in prop::collection::vec((-3.0f64..3.0, 0usize..15), 10..80), k in 5usize..40) {
        let scores: Vec<SentenceScore> = xs.iter().enumerate().map(|(i, (x, v))| SentenceScore {
            sentence_id: format!("s{i:03}"), verb: format!("v{v}"), score: *x, n_raters: 5,
        }).collect();
        let set = select_calibration(&scores, k, 8);
        prop_assert!(set.selected.len() <= k);
        prop_assert_eq!(&set.initial_block[..], &set.selected[..set.selected.len().min(8)]);
        prop_assert!(audit_calibration(&set, &scores).satisfied());
        let unique: HashSet<&String> = set.selected.iter().collect();
        prop_assert_eq!(unique.len(), set.selected.len());
    }
}

#[test]
fn hand_computed_table() {
    // three raters, four sentences
    let table = [
        ("p1", [0.1, 0.4, 0.7, 1.0]),
        ("p2", [0.5, 0.5, 0.5, 0.5]),
        ("p3", [0.0, 0.2, 0.2, 0.6]),
    ];
    let mut rs = Vec::new();
    for (p, row) in table {
        for (i, x) in row.iter().enumerate() {
            rs.push(RatingRecord {
                participant_id: p.into(),
                sentence_id: format!("s{i}"),
                rating: *x,
                verb: None,
            });
        }
    }
    // p1: mean .55, sd sqrt(.1125); p2: flat -> 0; p3: mean .25, sd sqrt(.0475)
    let sd1 = 0.1125f64.sqrt();
    let sd3 = 0.0475f64.sqrt();
    let expected: BTreeMap<&str, f64> = [
        ("s0", ((0.1 - 0.55) / sd1 + (0.0 - 0.25) / sd3) / 3.0),
        ("s1", ((0.4 - 0.55) / sd1 + (0.2 - 0.25) / sd3) / 3.0),
        ("s2", ((0.7 - 0.55) / sd1 + (0.2 - 0.25) / sd3) / 3.0),
        ("s3", ((1.0 - 0.55) / sd1 + (0.6 - 0.25) / sd3) / 3.0),
    ]
    .into_iter()
    .collect();
    for s in zscore_by_participant(&rs).unwrap() {
        assert!((s.score - expected[s.sentence_id.as_str()]).abs() < 1e-12);
        assert_eq!(s.n_raters, 3);
    }
}
