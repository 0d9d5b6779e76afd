//! Synthetic-source invariants.

use dunst::corpus::{SplitSizes, SyntheticSource};
use dunst::rng::seeded;
use proptest::prelude::*;

fn marker_share(source: &SyntheticSource, label: usize, block: usize, n: usize) -> f64 {
    let mut rng = seeded(99);
    let (mut hits, mut total) = (0usize, 0usize);
    for _ in 0..n {
        let ex = source.sample_example(label, &mut rng).unwrap();
        hits += ex.tokens.iter().filter(|t| source.marker_blocks[block].contains(t)).count();
        total += ex.tokens.len();
    }
    hits as f64 / total as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tables_are_simplexes(seed in 0u64..1000, k in 2usize..5, s in 0.0f64..=1.0) {
        let src = SyntheticSource::build(seed, 32, k, s).unwrap();
        for y in 0..k {
            prop_assert!((src.initial[y].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for row in &src.transition[y] {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posterior_is_a_distribution(seed in 0u64..1000, s in 0.0f64..=1.0) {
        let src = SyntheticSource::build(seed, 16, 2, s).unwrap();
        let ex = src.sample_example(1, &mut seeded(seed)).unwrap();
        let post = src.bayes_posterior(&ex.tokens).unwrap();
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(post.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn zero_separation_gives_identical_tables(seed in 0u64..1000) {
        let src = SyntheticSource::build(seed, 16, 3, 0.0).unwrap();
        for y in 1..3 {
            prop_assert_eq!(&src.transition[y], &src.transition[0]);
            prop_assert_eq!(&src.initial[y], &src.initial[0]);
        }
    }

    #[test]
    fn splits_have_requested_sizes(seed in 0u64..500, labeled in 1usize..20, unlabeled in 1usize..20) {
        let src = SyntheticSource::build(seed, 16, 2, 0.5).unwrap();
        let sizes = SplitSizes { labeled, unlabeled, dev: 3, test: 4 };
        let s = src.make_splits(sizes, &mut seeded(seed)).unwrap();
        prop_assert_eq!(s.labeled.len(), labeled);
        prop_assert_eq!(s.unlabeled.len(), unlabeled);
        prop_assert!(s.labeled.iter().all(|e| e.label.is_some()));
        prop_assert!(s.unlabeled.iter().all(|e| e.label.is_none()));
        prop_assert!(s.test.iter().all(|e| e.label.is_some()));
    }
}

#[test]
fn own_markers_dominate() {
    let src = SyntheticSource::build(3, 32, 2, 0.6).unwrap();
    assert!(marker_share(&src, 0, 0, 1000) > marker_share(&src, 1, 0, 1000));
    assert!(marker_share(&src, 1, 1, 1000) > marker_share(&src, 0, 1, 1000));
}

#[test]
fn full_separation_is_almost_perfectly_classifiable() {
    let src = SyntheticSource::build(1, 16, 2, 1.0).unwrap();
    let mut rng = seeded(5);
    let n = 10_000;
    let mut correct = 0;
    for i in 0..n {
        let y = i % 2;
        let ex = src.sample_example(y, &mut rng).unwrap();
        correct += usize::from(src.bayes_label(&ex.tokens).unwrap() == y);
    }
    let acc = correct as f64 / n as f64;
    // the residual error is the ~1% of sequences that carry no marker at all
    assert!(acc > 0.985, "Bayes accuracy {acc}");
}
