use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stimgen::sense::{
    nested_cv, nested_cv_with, parse_enumeration, select_prompt, CvConfig, PromptCandidate,
};

fn glosses() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z]{2,8}( [a-z]{2,8}){0,2}", 1..=9)
}

proptest! {
    #[test]
    fn enumerations_round_trip(items in glosses(), style in 0..3usize) {
        let text: String = items
            .iter()
            .enumerate()
            .map(|(i, g)| match style {
                0 => format!("{}. {g}\n", i + 1),
                1 => format!("{}) {g} ", i + 1),
                _ => format!("{}. {g}; ", i + 1),
            })
            .collect();
        let text = format!("Here are the senses:\n{text}");
        prop_assert_eq!(parse_enumeration(&text), items);
    }
}

fn noisy_with_label_copy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let x = y
        .iter()
        .map(|&l| {
            let mut row: Vec<f64> = (0..3)
                .map(|_| -> f64 { StandardNormal.sample(&mut rng) })
                .collect();
            row.push(if l { 1.0 } else { -1.0 });
            row
        })
        .collect();
    (x, y)
}

#[test]
fn label_copy_column_is_learned() {
    let (x, y) = noisy_with_label_copy(60, 3);
    let (_, report) = nested_cv(&x, &y, &CvConfig::default());
    assert_eq!(report.outer_accuracy, 1.0);
}

#[test]
fn scrambling_test_folds_exposes_no_leakage() {
    // the model only ever sees intact training rows; scrambling the label
    // column in held-out rows must take accuracy down to guessing
    let (x, y) = noisy_with_label_copy(60, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (_, report) = nested_cv_with(&x, &y, &CvConfig::default(), |_, rows| {
        for r in rows.iter_mut() {
            r[3] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
    });
    assert!(report.outer_accuracy < 0.75, "{}", report.outer_accuracy);
}

#[test]
fn shuffled_labels_score_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 80;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mu = if i % 2 == 0 { 2.0 } else { -2.0 };
            (0..4)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + z * 0.5
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    let mut y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let (_, clean) = nested_cv(&x, &y, &CvConfig::default());
    assert!(clean.outer_accuracy >= 0.9);
    y.shuffle(&mut rng);
    let (_, shuffled) = nested_cv(&x, &y, &CvConfig::default());
    assert!(
        (shuffled.outer_accuracy - 0.5).abs() < 0.2,
        "{}",
        shuffled.outer_accuracy
    );
}

fn candidate(id: u32, text: &str, temperature: f64, counts: &[u32]) -> PromptCandidate {
    let mut c = PromptCandidate::new(id, text, temperature);
    c.counts = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| (format!("v{i}"), n))
        .collect();
    c
}

#[test]
fn prompt_selection_ties_prefer_short_then_cool() {
    let reference: BTreeMap<String, u32> = [2, 3, 1, 4, 2, 1]
        .iter()
        .enumerate()
        .map(|(i, &n)| (format!("v{i}"), n))
        .collect();
    let cands = vec![
        candidate(0, "a long prompt text", 0.7, &[3, 3, 1, 4, 2, 1]),
        candidate(1, "short", 0.9, &[2, 4, 1, 4, 2, 1]),
        candidate(2, "short", 0.8, &[2, 3, 2, 4, 2, 1]),
        candidate(3, "far off", 0.7, &[6, 7, 5, 8, 6, 5]),
    ];
    let sel = select_prompt(&cands, &reference, 500, 4).unwrap();
    assert_eq!(sel.best_set, [0, 1, 2]);
    assert_eq!(sel.chosen.id, 2);
    let exact = candidate(
        4,
        "a much longer prompt that is exactly right",
        0.9,
        &[2, 3, 1, 4, 2, 1],
    );
    let mut with_exact = cands.clone();
    with_exact.push(exact);
    assert_eq!(
        select_prompt(&with_exact, &reference, 500, 4)
            .unwrap()
            .chosen
            .id,
        4
    );
}
