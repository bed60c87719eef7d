use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stimgen::lm::{
    apply_sampler_chain, conditional_surprisal, step_log_probs, surprisal, train_ngram,
    LanguageModel, NGramModel, SamplerConfig,
};
use stimgen::{Next, TokenDist};

const WORDS: [&str; 6] = ["the", "cat", "dog", "hit", "saw", "mat"];

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(&WORDS[..]).prop_map(String::from),
        1..7,
    )
}

fn model() -> impl Strategy<Value = NGramModel> {
    (
        prop::collection::vec(sentence(), 1..6),
        1usize..4,
        0.01f64..2.0,
    )
        .prop_map(|(corpus, order, k)| train_ngram(corpus, order, k).unwrap())
}

fn dist() -> impl Strategy<Value = TokenDist> {
    (prop::collection::vec(0.0f64..1.0, 6), 0.0f64..1.0)
        .prop_filter("some mass", |(w, e)| w.iter().sum::<f64>() + e > 1e-3)
        .prop_map(|(w, e)| {
            TokenDist::from_weights(WORDS.iter().map(|t| t.to_string()).zip(w), e, 6).unwrap()
        })
}

fn config() -> impl Strategy<Value = SamplerConfig> {
    (
        0usize..8,
        0.05f64..=1.0,
        0.0f64..0.9,
        0.1f64..3.0,
        1.0f64..3.0,
    )
        .prop_map(|(k, p, m, t, r)| SamplerConfig {
            top_k: k,
            top_p: p,
            min_p: m,
            temperature: t,
            repeat_penalty: r,
            ..SamplerConfig::default()
        })
}

proptest! {
    #[test]
    fn ngram_rows_normalize(m in model(), prefix in prop::collection::vec(
        prop::sample::select(vec!["the", "cat", "zebra", "mat"]).prop_map(String::from), 0..5)) {
        let d = m.next_token_dist(&prefix);
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
        prop_assert_eq!(d.support_len(), m.vocab().len());
    }

    #[test]
    fn ngram_json_round_trip(m in model()) {
        let back = NGramModel::from_json(&m.to_json()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn surprisal_is_additive(m in model(), s in sentence(), ctx in sentence()) {
        let steps = step_log_probs(&m, &ctx, &s);
        prop_assert_eq!(steps.len(), s.len() + 1);
        let total = conditional_surprisal(&m, &ctx, &s);
        prop_assert!(total >= 0.0);
        prop_assert!((total + steps.iter().sum::<f64>()).abs() < 1e-9);
        prop_assert!(surprisal(&m, &s) >= 0.0);
    }

    #[test]
    fn chain_output_is_proper_subset(d in dist(), cfg in config(), hist in sentence()) {
        let out = apply_sampler_chain(&d, &cfg, &hist);
        prop_assert!((out.total() - 1.0).abs() < 1e-9);
        prop_assert!(out.support_len() >= 1);
        for (o, _) in out.outcomes() {
            prop_assert!(d.outcome_prob(&o) > 0.0);
        }
        // the most probable outcome after the penalty always survives
        let penalized = apply_sampler_chain(&d, &SamplerConfig { repeat_penalty: cfg.repeat_penalty, ..SamplerConfig::neutral() }, &hist);
        let argmax = penalized.outcomes().max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0))).unwrap().0;
        prop_assert!(out.outcome_prob(&argmax) > 0.0);
    }

    #[test]
    fn seeded_sampling_is_deterministic(d in dist(), seed in any::<u64>()) {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| d.sample(&mut rng)).collect::<Vec<Next>>()
        };
        prop_assert_eq!(draw(seed), draw(seed));
    }
}
