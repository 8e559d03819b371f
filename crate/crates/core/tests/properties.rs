use std::collections::HashSet;

use jic_core::clients::ToxicityScores;
use jic_core::clustering::{kmeans_fit, silhouette};
use jic_core::corpus::split_dialogues;
use jic_core::metrics::{bleu, meteor, rouge};
use jic_core::retrieval::mmr_select;
use jic_core::safety::ToxicityReport;
use jic_core::text::cosine;
use proptest::prelude::*;

fn points(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, dim), 3..max_n)
}

const WORDS: [&str; 8] = ["the", "river", "Calm", "morning", "was", "BRIGHT", "i", "walked"];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..12).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn silhouette_ignores_label_names(pts in points(20, 3), seed in 0u64..1000) {
        let labels: Vec<usize> = (0..pts.len()).map(|i| (i * 7 + seed as usize) % 3).collect();
        let renamed: Vec<usize> = labels.iter().map(|l| [5, 11, 2][*l]).collect();
        let a = silhouette(&pts, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert_eq!(a, silhouette(&pts, &renamed).unwrap());
    }

    #[test]
    fn kmeans_inertia_never_increases(pts in points(30, 2), k in 2usize..4, seed in 0u64..100) {
        prop_assume!(k < pts.len());
        let fit = kmeans_fit(&pts, k, seed).unwrap();
        for w in fit.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", fit.inertia_trace);
        }
        prop_assert!(fit.labels.iter().all(|&l| l < k));
    }

    #[test]
    fn mmr_returns_distinct_indices(
        cands in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 1..20),
        q in prop::collection::vec(-1.0..1.0f64, 4),
        k in 0usize..8,
        lambda in 0.0..=1.0f64,
    ) {
        let sel = mmr_select(&q, &cands, k, lambda).unwrap();
        prop_assert_eq!(sel.len(), k.min(cands.len()));
        prop_assert_eq!(sel.iter().collect::<HashSet<_>>().len(), sel.len());
    }

    #[test]
    fn mmr_with_lambda_one_is_cosine_top_k(
        cands in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 1..15),
        q in prop::collection::vec(-1.0..1.0f64, 3),
        k in 1usize..6,
    ) {
        let sel = mmr_select(&q, &cands, k, 1.0).unwrap();
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.sort_by(|&a, &b| cosine(&q, &cands[b]).total_cmp(&cosine(&q, &cands[a])).then(a.cmp(&b)));
        order.truncate(k);
        prop_assert_eq!(sel, order);
    }

    #[test]
    fn lexical_metrics_stay_in_unit_range(c in sentence(), r in sentence()) {
        for v in [bleu(&c, &[&r]).unwrap(), meteor(&c, &r).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let s = rouge(&c, &r).unwrap();
        for v in [s.rouge1, s.rouge2, s.rouge_l] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn lexical_metrics_ignore_case(c in sentence(), r in sentence()) {
        let (cu, rl) = (c.to_uppercase(), r.to_lowercase());
        prop_assert_eq!(bleu(&c, &[&r]).unwrap(), bleu(&cu, &[&rl]).unwrap());
        prop_assert_eq!(meteor(&c, &r).unwrap(), meteor(&cu, &rl).unwrap());
        prop_assert_eq!(rouge(&c, &r).unwrap(), rouge(&cu, &rl).unwrap());
    }

    #[test]
    fn identical_text_scores_one(c in sentence()) {
        prop_assert!((bleu(&c, &[&c]).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(meteor(&c, &c).unwrap(), 1.0);
        prop_assert_eq!(rouge(&c, &c).unwrap().rouge_l, 1.0);
    }

    #[test]
    fn lowering_the_toxicity_threshold_never_unflags(
        scores in prop::collection::vec(prop::array::uniform6(0.0..=1.0f64), 16),
        hi in 0.0..=1.0f64,
        drop in 0.0..=1.0f64,
    ) {
        let per: Vec<ToxicityScores> = scores.iter().map(|a| ToxicityScores::from_array(*a).unwrap()).collect();
        let lo = hi * drop;
        let at_hi = ToxicityReport::from_scores(per.clone(), hi).unwrap();
        let at_lo = ToxicityReport::from_scores(per, lo).unwrap();
        prop_assert!(!at_hi.flagged || at_lo.flagged);
        prop_assert!(at_lo.toxic_utterance_count >= at_hi.toxic_utterance_count);
    }

    #[test]
    fn split_partitions_the_input(n in 0usize..40, frac in 0.0..=1.0f64, seed in 0u64..50) {
        let items: Vec<usize> = (0..n).collect();
        let t = (n as f64 * frac) as usize;
        let (train, test) = split_dialogues(&items, t, seed).unwrap();
        prop_assert_eq!(test.len(), t);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, items);
    }
}
