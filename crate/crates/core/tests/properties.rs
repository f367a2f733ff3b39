//! Property tests over randomly generated inputs.

use proptest::prelude::*;

use kft_core::corpus::{normalize, split_corpus, IpcSection, PatentDoc, Vocab};
use kft_core::eval::{bert_score, bleu4, rareness, rouge_l, rouge_n};
use kft_core::kgraph::{aggregate, Entity, EntityType, PatternSet, RelationType, Triple};
use kft_core::train::{compute_advantage, pairwise_loss};

fn vocab() -> Vocab {
    Vocab::from_words(["the", "valve", "seat", "is", "a", "part", "of", "pump", ",", ".", "(", ")", "-"])
}

fn word_list(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["gear", "axle", "hub", "rim", "spoke"]), 1..max)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn doc(id: usize, section: IpcSection) -> PatentDoc {
    PatentDoc {
        id: format!("d{id}"),
        ipc_section: section,
        title: format!("Title {id}"),
        abstract_text: "An abstract.".into(),
        claims: vec!["A claim.".into()],
    }
}

proptest! {
    #[test]
    fn tokenizer_round_trips_normalized_text(s in "[ -~\u{e9}\u{2713}\n]{0,60}") {
        let v = vocab();
        let ids = v.encode(&s).ids;
        prop_assert!(ids.iter().all(|&i| (i as usize) < v.len()));
        prop_assert_eq!(v.decode(&ids), normalize(&s));
    }

    #[test]
    fn overlap_metrics_stay_in_unit_interval(c in word_list(10), r in word_list(10)) {
        let emb = |t: &str| vec![t.len() as f64, 1.0];
        let values = [
            rouge_n(&c, &r, 1).unwrap(),
            rouge_l(&c, &r, 1.0).unwrap(),
            bleu4(&c, &r),
            bert_score(&c, &r, &emb).unwrap(),
        ];
        for v in values {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{v}");
        }
        if r.len() >= 2 {
            prop_assert!((0.0..=1.0).contains(&rouge_n(&c, &r, 2).unwrap()));
        }
    }

    #[test]
    fn split_is_a_partition(n_per in 3usize..8, seed in any::<u64>(), stratify in any::<bool>()) {
        let docs: Vec<PatentDoc> = IpcSection::ALL
            .iter()
            .flat_map(|&s| (0..n_per).map(move |i| (s, i)))
            .enumerate()
            .map(|(k, (s, _))| doc(k, s))
            .collect();
        let split = split_corpus(&docs, (0.6, 0.2, 0.2), seed, stratify).unwrap();
        let mut ids: Vec<String> =
            split.train.iter().chain(&split.val).chain(&split.test).map(|d| d.id.clone()).collect();
        ids.sort();
        let mut want: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
        want.sort();
        prop_assert_eq!(ids, want);
    }

    #[test]
    fn whitened_advantages_have_zero_mean_unit_std(r in prop::collection::vec(-50.0f64..50.0, 16)) {
        prop_assume!(r.iter().any(|x| (x - r[0]).abs() > 1e-3));
        let a = compute_advantage(&r);
        let mean = a.iter().sum::<f64>() / 16.0;
        let std = (a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 16.0).sqrt();
        prop_assert!(mean.abs() < 1e-6 && (std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pairwise_loss_is_positive_and_decreasing(s in -20.0f64..20.0, m in 0.01f64..5.0) {
        prop_assert!(pairwise_loss(s + m, s) > 0.0);
        prop_assert!(pairwise_loss(s + m, s) < pairwise_loss(s, s));
    }

    /// Seeing a text's pair in more documents never makes the text rarer,
    /// as long as the most frequent pair of the graph stays the most
    /// frequent.
    #[test]
    fn rareness_does_not_grow_with_support(extra in 0usize..6) {
        let e = |n: &str| Entity::new(n, EntityType::Generic);
        let t = |h: &str, tl: &str, d: usize| Triple::new(e(h), RelationType::PartOf, e(tl), 3, format!("doc{d}")).unwrap();
        let mut docs: Vec<Vec<Triple>> = (0..8).map(|d| vec![t("rotor", "turbine", d)]).collect();
        docs[0].push(t("valve", "pump", 0));
        let text = "The valve is a part of the pump.";
        let p = PatternSet::default();
        let before = rareness(text, &aggregate(&docs), &p).unwrap().score;
        for d in 1..=extra {
            docs[d].push(t("valve", "pump", d));
        }
        let after = rareness(text, &aggregate(&docs), &p).unwrap().score;
        prop_assert!(after <= before, "{after} > {before}");
    }
}
