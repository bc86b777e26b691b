mod common;

use std::collections::BTreeMap;

use dolores::embed::StaticEmbeddingTable;
use dolores::eval::{
    link_prediction_eval, rank_breakdown_by_category, train_scorer, Metrics, Scorer, ScorerInit, ScorerKind, ScorerModel,
    ScorerTrainConfig,
};
use dolores::kg::build_dataset;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn scores_match_direct_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = Array2::from_shape_simple_fn((3, 4), || rng.gen_range(-1.0..1.0));
    let r = Array2::from_shape_simple_fn((1, 4), || rng.gen_range(-1.0..1.0));
    let (h, rr, t) = (e.row(0), r.row(0), e.row(2));
    let dot = h[0] * rr[0] * t[0] + h[1] * rr[1] * t[1] + h[2] * rr[2] * t[2] + h[3] * rr[3] * t[3];
    let d: Vec<f64> = (0..4).map(|i| h[i] + rr[i] - t[i]).collect();
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt();
    let bil = Scorer::new(ScorerKind::Bilinear, e.clone(), r.clone()).unwrap();
    let tra = Scorer::new(ScorerKind::Translational, e, r).unwrap();
    assert!((bil.score(0, 0, 2).unwrap() - dot).abs() < 1e-15);
    assert!((tra.score(0, 0, 2).unwrap() + norm).abs() < 1e-15);
}

fn random_dataset(seed: u64) -> (dolores::kg::KnowledgeGraph, dolores::kg::DatasetSplit) {
    let raw = common::random_kg(seed, 40, 5, 160);
    build_dataset(&raw[..120], &raw[120..140], &raw[140..], true).unwrap()
}

#[test]
fn metrics_recompute_from_rank_lists() {
    let (graph, split) = random_dataset(1);
    let model = ScorerModel::<f64>::new(ScorerKind::Bilinear, 8, graph.num_entities(), graph.num_relations(), ScorerInit::Random, 1).unwrap();
    let r = link_prediction_eval(&model.scorer(), &split.test, &split.filter).unwrap();
    assert_eq!(Metrics::from_ranks(&r.head_ranks), r.head);
    assert_eq!(Metrics::from_ranks(&r.tail_ranks), r.tail);
    let n = r.tail_ranks.len() as f64;
    assert_eq!(r.tail.hits10, r.tail_ranks.iter().filter(|&&k| k <= 10).count() as f64 / n);
    assert_eq!(r.average.mrr, (r.head.mrr + r.tail.mrr) / 2.0);
    for m in [r.head, r.tail, r.average] {
        assert!(m.mrr > 0.0 && m.mrr <= 1.0 && m.mr >= 1.0 && (0.0..=1.0).contains(&m.hits10));
    }
}

#[test]
fn increasing_score_transforms_keep_ranks() {
    let (graph, split) = random_dataset(2);
    for kind in [ScorerKind::Bilinear, ScorerKind::Translational] {
        let mut model = ScorerModel::<f64>::new(kind, 6, graph.num_entities(), graph.num_relations(), ScorerInit::Random, 2).unwrap();
        let mut cfg = ScorerTrainConfig::for_kind(kind);
        cfg.epochs = 5;
        train_scorer(&mut model, &split.train, &cfg).unwrap();
        let base = model.scorer();
        // scaling every vector by 2 multiplies translational scores by 2 and
        // bilinear scores by 8
        let scaled = Scorer::new(kind, base.entities.mapv(|v| v * 2.0), base.relations.mapv(|v| v * 2.0)).unwrap();
        let a = link_prediction_eval(&base, &split.test, &split.filter).unwrap();
        let b = link_prediction_eval(&scaled, &split.test, &split.filter).unwrap();
        assert_eq!(a.head_ranks, b.head_ranks);
        assert_eq!(a.tail_ranks, b.tail_ranks);
    }
}

#[test]
fn initializations_differ_only_in_tables() {
    let (graph, split) = random_dataset(3);
    let (ne, nr, dim) = (graph.num_entities(), graph.num_relations(), 5);
    let table = StaticEmbeddingTable {
        entities: Array2::from_shape_fn((ne, dim), |(i, j)| ((i + 2 * j) % 7) as f64 * 0.05),
        relations: Array2::from_shape_fn((nr, dim), |(i, j)| ((i * j) % 5) as f64 * 0.05),
        entity_counts: vec![1; ne],
        relation_counts: vec![1; nr],
    };
    let dolores = ScorerModel::new(ScorerKind::Bilinear, dim, ne, nr, ScorerInit::Static(&table), 8).unwrap();
    let random = ScorerModel::new(ScorerKind::Bilinear, dim, ne, nr, ScorerInit::Random, 8).unwrap();
    assert_eq!((dolores.kind, dolores.dim), (random.kind, random.dim));
    assert_eq!(dolores.lambda(), random.lambda());
    assert_eq!(dolores.projection(), random.projection());
    let (sd, sr) = (dolores.scorer(), random.scorer());
    assert_eq!(sd.entities, table.entities);
    assert_ne!(sd.entities, sr.entities);

    let cfg = ScorerTrainConfig {
        epochs: 3,
        ..ScorerTrainConfig::for_kind(ScorerKind::Bilinear)
    };
    let mut a = dolores.clone();
    let mut b = dolores;
    train_scorer(&mut a, &split.train, &cfg).unwrap();
    train_scorer(&mut b, &split.train, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn breakdown_matches_manual_grouping() {
    let train = vec![
        common::raw("m1", "/film/film/genre", "g1"),
        common::raw("p1", "/people/person/nationality", "c1"),
        common::raw("p2", "/people/person/profession", "j1"),
        common::raw("m2", "/film/film/language", "l1"),
        common::raw("x", "sibling", "y"),
    ];
    let test = vec![
        common::raw("m2", "/film/film/genre", "g1"),
        common::raw("p2", "/people/person/nationality", "c1"),
        common::raw("p1", "/people/person/profession", "j1"),
        common::raw("m1", "/film/film/language", "l1"),
        common::raw("y", "sibling", "x"),
    ];
    let (graph, split) = build_dataset(&train, &[], &test, false).unwrap();
    let model = ScorerModel::<f64>::new(ScorerKind::Translational, 4, graph.num_entities(), graph.num_relations(), ScorerInit::Random, 6).unwrap();
    let result = link_prediction_eval(&model.scorer(), &split.test, &split.filter).unwrap();
    let rows = rank_breakdown_by_category(&result, graph.relations().names(), '/');

    let mut manual: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (t, &rank) in split.test.iter().zip(&result.tail_ranks) {
        let name = graph.relations().name(t.relation);
        let cat = if name.starts_with("/film") {
            "film"
        } else if name.starts_with("/people") {
            "people"
        } else {
            "sibling"
        };
        manual.entry(cat).or_default().push(rank);
    }
    assert_eq!(rows.len(), manual.len());
    for row in &rows {
        let ranks = &manual[row.category.as_str()];
        assert_eq!(row.count, ranks.len());
        assert_eq!(row.mean_rank, ranks.iter().sum::<usize>() as f64 / ranks.len() as f64);
    }
    assert!(rows.windows(2).all(|w| w[0].mean_rank <= w[1].mean_rank));
}

#[test]
fn translational_optimum_ranks_first() {
    let e = array![[0.0, 0.0], [1.0, 1.0], [3.0, -2.0], [-1.0, 4.0]];
    let r = array![[1.0, 1.0]];
    let scorer = Scorer::new(ScorerKind::Translational, e, r).unwrap();
    let test = [dolores::kg::Triple::new(0, 0, 1)];
    let filter = dolores::kg::FilterIndex::build(4, [&test[..]]);
    let res = link_prediction_eval(&scorer, &test, &filter).unwrap();
    assert_eq!(res.tail_ranks, vec![1]);
    assert_eq!(res.head_ranks, vec![1]);
}
