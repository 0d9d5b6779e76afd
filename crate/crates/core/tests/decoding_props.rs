//! Invariants of the decoding pipeline.

use dunst::corpus::{BOS, EOS, NUM_RESERVED, PAD, UNK};
use dunst::decoding::{
    banned_ngram_tokens, corrupt, generate_hard, generate_soft, next_distribution,
    temperature_softmax, top_p_filter, DecodeConfig,
};
use dunst::dualvae::{ModelConfig, ModelParams};
use dunst::rng::{argmax, seeded};
use proptest::prelude::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

fn tiny_model(seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        d_model: 8,
        d_latent: 4,
        layers: 1,
        heads: 1,
        d_ff: 16,
        max_len: 16,
        ..ModelConfig::new(12, 2)
    };
    ModelParams::init(cfg, seed).unwrap()
}

proptest! {
    #[test]
    fn top_p_keeps_a_minimal_sorted_prefix(probs in simplex(10), p in 0.05f64..=1.0) {
        let out = top_p_filter(&probs, p);
        let kept: Vec<usize> = (0..10).filter(|&i| out[i] > 0.0).collect();
        let mass: f64 = kept.iter().map(|&i| probs[i]).sum();
        prop_assert!(mass >= p - 1e-9);
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // every kept token is at least as likely as every dropped one
        let min_kept = kept.iter().map(|&i| probs[i]).fold(f64::INFINITY, f64::min);
        for i in (0..10).filter(|i| !kept.contains(i)) {
            prop_assert!(probs[i] <= min_kept);
        }
        // dropping the least likely kept token falls short of p
        prop_assert!(mass - min_kept < p + 1e-9);
        for &i in &kept {
            prop_assert!((out[i] - probs[i] / mass).abs() < 1e-12);
        }
    }

    #[test]
    fn temperature_preserves_argmax(logits in prop::collection::vec(-10.0f64..10.0, 2..20), tau in 0.05f64..20.0) {
        let p = temperature_softmax(&logits, tau).unwrap();
        prop_assert_eq!(argmax(&p), argmax(&logits));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn higher_temperature_never_lowers_entropy(logits in prop::collection::vec(-5.0f64..5.0, 3..12), lo in 0.1f64..2.0, factor in 1.0f64..10.0) {
        let a = temperature_softmax(&logits, lo).unwrap();
        let b = temperature_softmax(&logits, lo * factor).unwrap();
        prop_assert!(entropy(&b) >= entropy(&a) - 1e-9);
    }

    #[test]
    fn next_distribution_respects_masks(
        logits in prop::collection::vec(-4.0f64..4.0, 12),
        history in prop::collection::vec(NUM_RESERVED..12usize, 0..12),
        min_len in 0usize..6,
        extra in 1usize..8,
        ngram in 0usize..4,
        tau in 0.2f64..6.0,
    ) {
        let cfg = DecodeConfig { temperature: tau, min_len, max_len: min_len + extra, no_repeat_ngram: ngram, ..Default::default() };
        let d = next_distribution(&logits, &history, &cfg);
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for t in [BOS, PAD, UNK] {
            prop_assert_eq!(d[t], 0.0);
        }
        if history.len() >= cfg.max_len {
            prop_assert_eq!(d[EOS], 1.0);
        } else if history.len() < min_len {
            prop_assert_eq!(d[EOS], 0.0);
        }
        let banned = banned_ngram_tokens(&history, ngram);
        let others_allowed = (0..12).any(|t| (t == EOS && history.len() >= min_len || t >= NUM_RESERVED) && !banned.contains(&t));
        if others_allowed && history.len() < cfg.max_len {
            for t in banned {
                prop_assert_eq!(d[t], 0.0);
            }
        }
    }

    #[test]
    fn generate_hard_obeys_length_and_ngram_limits(seed in 0u64..1000, min_len in 1usize..5, extra in 0usize..6, ngram in 2usize..4) {
        let model = tiny_model(seed % 7);
        let cfg = DecodeConfig { min_len, max_len: min_len + extra, no_repeat_ngram: ngram, ..Default::default() };
        let z = vec![0.3; 4];
        let out = generate_hard(&model, &z, &cfg, &mut seeded(seed), &[]).unwrap();
        prop_assert!(out.len() >= min_len && out.len() <= cfg.max_len);
        prop_assert!(out.iter().all(|&t| (NUM_RESERVED..12).contains(&t)));
        let grams: Vec<&[usize]> = out.windows(ngram).collect();
        let mut seen = std::collections::HashSet::new();
        let mut repeats = 0;
        for g in grams {
            if !seen.insert(g) {
                repeats += 1;
            }
        }
        // blocking can only be lifted when every content token is banned
        prop_assert!(repeats == 0 || 12 - NUM_RESERVED <= out.len());
    }

    #[test]
    fn soft_sequences_are_consistent(seed in 0u64..500) {
        let model = tiny_model(3);
        let cfg = DecodeConfig { min_len: 2, max_len: 6, ..DecodeConfig::htg() };
        let s = generate_soft(&model, &[0.1, -0.2, 0.0, 0.5], 1, &cfg, &mut seeded(seed)).unwrap();
        prop_assert_eq!(s.steps.rows(), s.context.len() + 1);
        for m in 0..s.steps.rows() {
            let row = s.steps.row(m);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if m < s.context.len() {
                prop_assert!(row[s.context[m]] > 0.0);
            }
        }
        prop_assert!(s.steps.row(s.steps.rows() - 1)[EOS] > 0.0);
    }

    #[test]
    fn corrupt_without_noise_is_identity(tokens in prop::collection::vec(NUM_RESERVED..32usize, 1..20), seed in 0u64..100) {
        let out = corrupt(&tokens, 0.0, 0.0, 0.0, 32, &mut seeded(seed)).unwrap();
        prop_assert_eq!(out, tokens);
    }

    #[test]
    fn shuffle_below_one_moves_tokens_at_most_one_place(tokens in prop::collection::vec(NUM_RESERVED..64usize, 1..20), k in 0.0f64..1.0, seed in 0u64..100) {
        // distinct ids make positions traceable
        let tokens: Vec<usize> = (0..tokens.len()).map(|i| NUM_RESERVED + i).collect();
        let out = corrupt(&tokens, 0.0, 0.0, k, 64, &mut seeded(seed)).unwrap();
        prop_assert_eq!(out.len(), tokens.len());
        for (j, &t) in out.iter().enumerate() {
            let i = t - NUM_RESERVED;
            prop_assert!(i.abs_diff(j) <= 1);
        }
    }
}

#[test]
fn htg_soft_steps_are_flatter_than_low_temperature() {
    let model = tiny_model(5);
    let z = [0.4, -0.1, 0.2, 0.0];
    let mean_entropy = |tau: f64| {
        let cfg = DecodeConfig { temperature: tau, min_len: 4, max_len: 10, ..Default::default() };
        let mut total = 0.0;
        let mut steps = 0;
        let mut rng = seeded(11);
        while steps < 100 {
            let s = generate_soft(&model, &z, 0, &cfg, &mut rng).unwrap();
            for m in 0..s.context.len() {
                total += entropy(s.steps.row(m));
                steps += 1;
            }
        }
        total / steps as f64
    };
    assert!(mean_entropy(5.0) > mean_entropy(0.2));
}
