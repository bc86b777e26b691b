mod common;

use dolores::embed::{combine, LambdaWeights};
use dolores::eval::Metrics;
use dolores::kg::{parse_triples, write_triples, KnowledgeGraph};
use dolores::model::{encode, ModelConfig, ModelParams, PairToken};
use dolores::walk::{next_step_distribution, parse_corpus, sample_walk, walk_stream, write_corpus, WalkConfig};
use dolores::Precision;
use ndarray::s;
use proptest::prelude::*;

fn graph(seed: u64, entities: usize, triples: usize, inverses: bool) -> KnowledgeGraph {
    KnowledgeGraph::build(&common::random_kg(seed, entities, 3, triples), inverses).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn walks_follow_edges(seed in 0u64..1000, entities in 2usize..25, inverses: bool, p in 0.25f64..4.0, q in 0.25f64..4.0) {
        let g = graph(seed, entities, entities * 2, inverses);
        let cfg = WalkConfig { p, q, walks_per_node: 1, walk_length: 9, seed };
        for e in 0..g.num_entities() as u32 {
            let w = sample_walk(e, &g, &cfg, &mut walk_stream(seed, e, 0));
            prop_assert!(w.chain.is_valid_in(&g));
            prop_assert!(w.chain.len() <= 9 && w.chain.len() % 2 == 1);
            prop_assert_eq!(w.truncated, w.chain.len() < 9);
            if w.truncated {
                prop_assert_eq!(g.out_degree(w.chain.last_entity()), 0);
            }
        }
    }

    #[test]
    fn step_distributions_are_normalized(seed in 0u64..1000, p in 0.1f64..10.0, q in 0.1f64..10.0) {
        let g = graph(seed, 12, 40, true);
        for cur in 0..g.num_entities() as u32 {
            for prev in g.out_edges(cur).iter().map(|e| e.neighbor) {
                let d = next_step_distribution(&g, prev, cur, p, q);
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(d.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn corpus_text_round_trips(seed in 0u64..1000) {
        let g = graph(seed, 10, 25, true);
        let cfg = WalkConfig { walks_per_node: 2, walk_length: 7, seed, ..WalkConfig::default() };
        let corpus = dolores::walk::generate_corpus(&g, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        write_corpus(&path, &g, &corpus.chains).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(parse_corpus(&text, &g, "c").unwrap(), corpus.chains);
    }

    #[test]
    fn triples_round_trip_through_text(seed in 0u64..1000, n in 1usize..30) {
        let raw = common::random_kg(seed, 15, 4, n);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        write_triples(&path, &raw).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(parse_triples(&text, "t").unwrap(), raw);
    }

    #[test]
    fn combine_is_linear_in_lambda(
        seed in 0u64..1000,
        l1 in proptest::collection::vec(-2.0f64..2.0, 3),
        l2 in proptest::collection::vec(-2.0f64..2.0, 3),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let cfg = ModelConfig {
            num_layers: 3, hidden_units: 6, projection_dim: 3, entity_dim: 2, relation_dim: 2,
            precision: Precision::F64, seed, ..ModelConfig::default()
        };
        let params = ModelParams::<f64>::init(&cfg, 5, 4);
        let seq: Vec<PairToken> = (0..5).map(|i| PairToken { entity: (i * seed as u32 + 1) % 5, relation: i % 4 }).collect();
        let st = encode(&[seq.as_slice()], &params, &cfg).unwrap().remove(0);
        let mix: Vec<f64> = l1.iter().zip(&l2).map(|(x, y)| a * x + b * y).collect();
        let lhs = combine(&st, &LambdaWeights::new(mix).unwrap()).unwrap();
        let c1 = combine(&st, &LambdaWeights::new(l1).unwrap()).unwrap();
        let c2 = combine(&st, &LambdaWeights::new(l2).unwrap()).unwrap();
        let dx = cfg.input_dim();
        let rhs = &c1.slice(s![.., dx..]) * a + &c2.slice(s![.., dx..]) * b;
        for (x, y) in lhs.slice(s![.., dx..]).iter().zip(&rhs) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        prop_assert_eq!(lhs.slice(s![.., ..dx]), st.x.view());
    }

    #[test]
    fn metrics_are_bounded_and_exact(ranks in proptest::collection::vec(1usize..200, 1..50)) {
        let m = Metrics::from_ranks(&ranks);
        prop_assert!(m.mrr > 0.0 && m.mrr <= 1.0);
        prop_assert!(m.mr >= 1.0);
        prop_assert_eq!(m.hits10, ranks.iter().filter(|&&r| r <= 10).count() as f64 / ranks.len() as f64);
    }
}
