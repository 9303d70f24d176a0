use std::collections::BTreeSet;

use proptest::prelude::*;

use causal_core::annotation::{AnnotationSet, Fragment, Label, RelationType};
use causal_core::corpus::SourceKind;
use causal_core::dataset::{
    aggregate_annotators, contiguous_runs, decode_mst_instance, make_folds, mst_instance, FOLD_COUNT,
};
use causal_core::encoder::{select_masks, MaskStrategy};
use causal_core::eval::{Counts, Stat};
use causal_core::iaa::{cohen_kappa, pairwise_f1};
use causal_core::mst::components;
use causal_core::synthetic::generate;
use causal_core::tokenize::WhitespacePunct;

type Key = (Label, Vec<Fragment>);

fn entity_keys(set: &AnnotationSet) -> BTreeSet<Key> {
    set.entities.iter().map(|e| (e.label, e.fragments.clone())).collect()
}

fn relation_keys(set: &AnnotationSet) -> BTreeSet<(RelationType, Key, Key)> {
    let key = |id: &str| {
        let e = set.entity(id).expect("relation argument exists");
        (e.label, e.fragments.clone())
    };
    set.relations.iter().map(|r| (r.kind, key(&r.arg1), key(&r.arg2))).collect()
}

proptest! {
    #[test]
    fn components_partition_items(
        items in prop::collection::btree_set(0usize..60, 0..30),
        raw in prop::collection::vec((0usize..30, 0usize..30), 0..40),
    ) {
        let items: Vec<usize> = items.into_iter().collect();
        let links: Vec<(usize, usize)> = if items.is_empty() {
            Vec::new()
        } else {
            raw.iter().map(|&(a, b)| (items[a % items.len()], items[b % items.len()])).collect()
        };
        let groups = components(&items, &links);
        let flat: Vec<usize> = groups.concat();
        let mut sorted = flat.clone();
        sorted.sort_unstable();
        prop_assert_eq!(&sorted, &items);
        for g in &groups {
            prop_assert!(!g.is_empty());
            prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert!(groups.windows(2).all(|w| w[0][0] < w[1][0]));
        let group_of = |x: usize| groups.iter().position(|g| g.contains(&x)).unwrap();
        for &(a, b) in &links {
            prop_assert_eq!(group_of(a), group_of(b));
        }
    }

    #[test]
    fn stat_is_population_mean_and_std(values in prop::collection::vec(0.0f64..100.0, 1..12)) {
        let s = Stat::of(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut sq = 0.0;
        for v in &values {
            sq += (v - mean) * (v - mean);
        }
        prop_assert!((s.mean - mean).abs() < 1e-9);
        prop_assert!((s.std - (sq / n).sqrt()).abs() < 1e-9);
        let shifted: Vec<f64> = values.iter().map(|v| v + 7.0).collect();
        prop_assert!((Stat::of(&shifted).unwrap().std - s.std).abs() < 1e-9);
    }

    #[test]
    fn agreement_is_symmetric_and_bounded(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..120),
    ) {
        let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let k: f64 = cohen_kappa(&a, &b).unwrap();
        let f: f64 = pairwise_f1(&a, &b).unwrap();
        prop_assert_eq!(k, cohen_kappa::<f64>(&b, &a).unwrap());
        prop_assert_eq!(f, pairwise_f1::<f64>(&b, &a).unwrap());
        prop_assert!((-1.0..=1.0).contains(&k));
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(cohen_kappa::<f64>(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn token_counts_f1_matches_formula(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
        let c = Counts { tp, fp, fn_ };
        let f = c.f1();
        if tp + fp + fn_ == 0 {
            prop_assert_eq!(f, 1.0);
        } else {
            prop_assert!((f - 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn contiguous_runs_split_at_gaps(set in prop::collection::btree_set(0usize..80, 0..40)) {
        let sorted: Vec<usize> = set.into_iter().collect();
        let runs = contiguous_runs(&sorted);
        prop_assert_eq!(runs.concat(), sorted);
        for r in &runs {
            prop_assert!(r.windows(2).all(|w| w[1] == w[0] + 1));
        }
        for w in runs.windows(2) {
            prop_assert!(w[1][0] > w[0].last().unwrap() + 1);
        }
    }

    #[test]
    fn mask_plans_are_sorted_disjoint_and_budgeted(n in 1usize..300, seed in any::<u64>()) {
        let tokens: Vec<String> = (0..n).map(|i| format!("w{}", i % 17)).collect();
        let plan = select_masks(&tokens, MaskStrategy::Um, 0.15, None, seed).unwrap();
        prop_assert_eq!(plan.masked_count(), (0.15 * n as f64).round() as usize);
        let masked = plan.masked();
        prop_assert!(masked.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(masked.iter().all(|&i| i < n));
    }

    #[test]
    fn fold_plans_cover_every_text_once(n in 10usize..120, seed in any::<u64>(), fraction in 0.0f64..0.5) {
        let items: Vec<(String, SourceKind)> = (0..n)
            .map(|i| (format!("t{i}"), if i % 3 == 0 { SourceKind::Slides } else { SourceKind::Fmea }))
            .collect();
        let plan = make_folds(&items, seed, fraction).unwrap();
        prop_assert_eq!(plan.folds.len(), FOLD_COUNT);
        prop_assert_eq!(plan.test_ids.len(), (fraction * n as f64).round() as usize);
        let mut all: Vec<String> = plan.test_ids.clone();
        plan.folds.iter().for_each(|f| all.extend(f.iter().cloned()));
        all.sort();
        let mut want: Vec<String> = items.iter().map(|i| i.0.clone()).collect();
        want.sort();
        prop_assert_eq!(all, want);
        prop_assert_eq!(&make_folds(&items, seed, fraction).unwrap(), &plan);
    }
}

#[test]
fn mst_instances_decode_back_to_gold() {
    for text in generate(200, 3, "d") {
        let inst = mst_instance(&text, &WhitespacePunct).unwrap();
        let decoded = decode_mst_instance(&inst, &text.unit.text);
        assert_eq!(entity_keys(&decoded), entity_keys(&text.gold), "{}", text.unit.text);
        assert_eq!(relation_keys(&decoded), relation_keys(&text.gold), "{}", text.unit.text);
    }
}

#[test]
fn aggregation_is_a_union() {
    for text in generate(60, 4, "u") {
        let mut partial = text.gold.clone();
        partial.annotator_id = "b".into();
        partial.relations.truncate(partial.relations.len().saturating_sub(2));
        let merged = aggregate_annotators(&text.gold, &partial).unwrap();
        assert_eq!(entity_keys(&merged), entity_keys(&text.gold));
        assert_eq!(relation_keys(&merged), relation_keys(&text.gold));
        let swapped = aggregate_annotators(&partial, &text.gold).unwrap();
        assert_eq!(merged.entities, swapped.entities);
        assert_eq!(merged.relations, swapped.relations);
    }
}
