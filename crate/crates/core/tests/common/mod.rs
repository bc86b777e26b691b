#![allow(dead_code)]

use std::collections::HashSet;

use dolores::kg::{build_dataset, DatasetSplit, KnowledgeGraph, RawTriple, Triple};
use dolores::model::ModelConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY_ENTITIES: usize = 100;
pub const TOY_COMMUNITIES: usize = 10;
pub const TOY_RELATIONS: usize = 20;
pub const TOY_TRIPLES: usize = 1000;

/// Community-structured graph: 100 entities in 10 groups of 10. Four in five
/// triples stay inside a group and use one of the group's two relations;
/// the rest connect random entities under a random relation. Returned as
/// shuffled 80/10/10 train/valid/test splits.
pub fn toy_kg(seed: u64) -> (Vec<RawTriple>, Vec<RawTriple>, Vec<RawTriple>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = TOY_ENTITIES / TOY_COMMUNITIES;
    let mut seen = HashSet::new();
    let mut triples = Vec::with_capacity(TOY_TRIPLES);
    while triples.len() < TOY_TRIPLES {
        let (h, r, t) = if rng.gen_bool(0.8) {
            let c = rng.gen_range(0..TOY_COMMUNITIES);
            let h = c * size + rng.gen_range(0..size);
            let t = c * size + rng.gen_range(0..size);
            (h, 2 * c + rng.gen_range(0..2), t)
        } else {
            (
                rng.gen_range(0..TOY_ENTITIES),
                rng.gen_range(0..TOY_RELATIONS),
                rng.gen_range(0..TOY_ENTITIES),
            )
        };
        if h != t && seen.insert((h, r, t)) {
            triples.push(RawTriple::new(
                format!("e{h}"),
                format!("/group{}/r{r}", r / 2),
                format!("e{t}"),
            ));
        }
    }
    triples.shuffle(&mut rng);
    let test = triples.split_off(TOY_TRIPLES * 9 / 10);
    let valid = triples.split_off(TOY_TRIPLES * 8 / 10);
    (triples, valid, test)
}

pub fn toy_dataset(seed: u64) -> (KnowledgeGraph, DatasetSplit) {
    let (train, valid, test) = toy_kg(seed);
    build_dataset(&train, &valid, &test, true).expect("toy dataset")
}

/// Uniform random multigraph over `entities` entities.
pub fn random_kg(seed: u64, entities: usize, relations: usize, triples: usize) -> Vec<RawTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < triples {
        let t = (
            rng.gen_range(0..entities),
            rng.gen_range(0..relations),
            rng.gen_range(0..entities),
        );
        if seen.insert(t) {
            out.push(RawTriple::new(format!("e{}", t.0), format!("r{}", t.1), format!("e{}", t.2)));
        }
    }
    out
}

/// Small model used wherever the full-sized network would be too slow.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_units: 32,
        projection_dim: 16,
        entity_dim: 16,
        relation_dim: 16,
        batch_size: 32,
        learning_rate: 1e-2,
        epochs: 20,
        ..ModelConfig::default()
    }
}

pub fn raw(h: &str, r: &str, t: &str) -> RawTriple {
    RawTriple::new(h, r, t)
}

/// Brute-force filtered rank: sort every candidate by score, drop known
/// answers other than the target, and place the target after all ties.
pub fn brute_force_rank(scores: &[f64], target: usize, known: &HashSet<usize>) -> usize {
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|c| *c == target || !known.contains(c))
        .collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| (a == target).cmp(&(b == target)))
    });
    order.iter().position(|&c| c == target).unwrap() + 1
}

pub fn known_set(triples: &[Triple]) -> HashSet<Triple> {
    triples.iter().copied().collect()
}
