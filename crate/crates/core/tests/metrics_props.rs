//! Metric invariants against brute-force definitions.

use dunst::metrics::{binary_auc, classification_metrics, dist_n, self_bleu, sentence_bleu};
use proptest::prelude::*;

/// Mann–Whitney by enumerating every positive/negative pair.
fn pairwise_auc(scores: &[f64], pos: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for i in (0..scores.len()).filter(|&i| pos[i]) {
        for j in (0..scores.len()).filter(|&j| !pos[j]) {
            pairs += 1;
            wins += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Macro-F1 from an explicit confusion matrix.
fn confusion_f1(pred: &[usize], gold: &[usize], k: usize) -> f64 {
    let mut conf = vec![vec![0usize; k]; k];
    for (&p, &g) in pred.iter().zip(gold) {
        conf[g][p] += 1;
    }
    let mut sum = 0.0;
    for c in 0..k {
        let tp = conf[c][c] as f64;
        let predicted: usize = (0..k).map(|g| conf[g][c]).sum();
        let actual: usize = conf[c].iter().sum();
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let recall = if actual > 0 { tp / actual as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    sum / k as f64
}

fn seqs() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..5, 1..9), 2..8)
}

proptest! {
    #[test]
    fn auc_matches_pair_enumeration(data in prop::collection::vec((0u8..6, any::<bool>()), 1..30)) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
        let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
        let fast = binary_auc(&scores, &pos);
        let slow = pairwise_auc(&scores, &pos);
        prop_assert_eq!(fast.is_some(), slow.is_some());
        if let (Some(a), Some(b)) = (fast, slow) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_f1_matches_confusion_matrix(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40)) {
        let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let gold: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let scores: Vec<Vec<f64>> = pred.iter().map(|&p| (0..3).map(|c| f64::from(c == p)).collect()).collect();
        let m = classification_metrics(&pred, &scores, &gold, 3).unwrap();
        prop_assert!((m.macro_f1 - confusion_f1(&pred, &gold, 3)).abs() < 1e-12);
        let acc = pred.iter().zip(&gold).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64;
        prop_assert_eq!(m.acc, acc);
    }

    #[test]
    fn dist_is_a_fraction(gens in seqs(), n in 1usize..4) {
        if let Some(d) = dist_n(&gens, n) {
            prop_assert!(d > 0.0 && d <= 1.0);
        }
    }

    #[test]
    fn self_bleu_matches_pairwise_and_stays_in_range(gens in seqs()) {
        let fast = self_bleu(&gens).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&fast));
        let mut slow = 0.0;
        for (i, h) in gens.iter().enumerate() {
            let refs: Vec<&[usize]> = gens.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r.as_slice()).collect();
            let b: Vec<f64> = (2..=4).map(|n| sentence_bleu(h, &refs, n)).collect();
            slow += (b[0] * b[1] * b[2]).cbrt();
        }
        slow *= 100.0 / gens.len() as f64;
        prop_assert!((fast - slow).abs() < 1e-9, "{} vs {}", fast, slow);
    }

    #[test]
    fn duplicated_corpus_has_full_self_bleu(g in prop::collection::vec(0usize..6, 4..10), copies in 2usize..5) {
        let gens = vec![g; copies];
        prop_assert!((self_bleu(&gens).unwrap() - 100.0).abs() < 1e-9);
    }
}
