use nalgebra::DMatrix;
use proptest::prelude::*;
use rhokit::annotations::{conflate_ladder, AnnotatedCorpus, Sentence};
use rhokit::itoracle::{mutual_information, verify_properties, DiscreteJoint};
use rhokit::pipeline::{LadderReport, LadderRow};
use rhokit::seqmodel::{estimate_rho, RhoConfig};

fn corpus_from(sents: Vec<Vec<(u8, u8)>>) -> AnnotatedCorpus {
    let sentences = sents
        .into_iter()
        .map(|s| {
            let (tokens, tags) = s.into_iter().map(|(w, t)| (format!("w{w}"), format!("T{t}"))).unzip();
            Sentence::new(tokens, tags).unwrap()
        })
        .collect();
    AnnotatedCorpus::from_sentences(sentences, "prop").unwrap()
}

fn sentences() -> impl Strategy<Value = Vec<Vec<(u8, u8)>>> {
    prop::collection::vec(prop::collection::vec((0u8..12, 0u8..6), 1..10), 20..60)
}

fn micro(v: u32) -> f64 {
    v as f64 / 1e6
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn report_tsv_round_trip(
        seed in any::<u64>(),
        rows in prop::collection::vec((0u32..=1_000_000, 0usize..300, 0u32..=1_000_000, 0u32..=1_000_000, 0u32..5_000_000, any::<bool>()), 0..12),
    ) {
        let report = LadderReport {
            seed,
            config_hash: "0123456789abcdef".into(),
            tool_version: "rhokit test".into(),
            rows: rows.iter().enumerate().map(|(i, r)| LadderRow {
                annotation_id: i * 2,
                rho: micro(r.0),
                iterations: r.1,
                final_acc: micro(r.2),
                majority: micro(r.3),
                delta_nats: micro(r.4),
                converged: r.5,
            }).collect(),
            plot: Vec::new(),
        };
        let back = LadderReport::from_tsv(&report.to_tsv()).unwrap();
        prop_assert_eq!(back, report);
    }

    #[test]
    fn ladder_merges_one_pair_per_step(sents in sentences()) {
        let corpus = corpus_from(sents);
        let m = corpus.distinct_tags();
        prop_assume!(m >= 2);
        let ladder = conflate_ladder(&corpus).unwrap();
        prop_assert_eq!(ladder.len(), m - 1);
        for (k, step) in ladder.steps.iter().enumerate() {
            prop_assert_eq!(step.annotation_id, k + 1);
            prop_assert_eq!(step.corpus.distinct_tags(), m - 1 - k);
            prop_assert_eq!(step.corpus.token_sequences(), corpus.token_sequences());
        }
    }

    #[test]
    fn rho_ignores_tag_names(sents in sentences()) {
        let corpus = corpus_from(sents.clone());
        let renamed = corpus_from(sents.into_iter().map(|s| s.into_iter().map(|(w, t)| (w, 5 - t)).collect()).collect());
        let a = estimate_rho(&corpus, &RhoConfig::default()).unwrap();
        let b = estimate_rho(&renamed, &RhoConfig::default()).unwrap();
        prop_assert!((a.rho - b.rho).abs() <= 1e-12, "{} vs {}", a.rho, b.rho);
        prop_assert!((0.0..=1.0).contains(&a.rho));
    }

    #[test]
    fn information_identities(
        cells in prop::collection::vec(0.0f64..1.0, 12),
        f in prop::collection::vec(0usize..3, 4),
    ) {
        prop_assume!(cells.iter().sum::<f64>() > 1e-3);
        let total: f64 = cells.iter().sum();
        let j = DiscreteJoint::new(DMatrix::from_iterator(3, 4, cells.iter().map(|c| c / total))).unwrap();
        prop_assert!(verify_properties(&j, &f).unwrap().all_passed());
        prop_assert!((mutual_information(&j) - mutual_information(&j.transpose())).abs() <= 1e-12);
    }
}
