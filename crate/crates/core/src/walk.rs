//! Second-order biased random walks producing entity-relation chains.
//!
//! The unnormalized weight of stepping from `cur` to `next` having arrived
//! from `prev` is `1/p` when `next == prev`, `1` when `next` is adjacent to
//! `prev`, and `1/q` otherwise. Parallel edges to the same neighbor each
//! carry the neighbor's weight.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub walks_per_node: usize,
    /// Token count of a full chain (entities plus relations); odd.
    pub walk_length: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            p: 1.0,
            q: 1.0,
            walks_per_node: 20,
            walk_length: 21,
            seed: rng::DEFAULT_SEED,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must be positive, got {}", self.p)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::Config(format!("q must be positive, got {}", self.q)));
        }
        if self.walk_length < 3 || self.walk_length.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "walk length must be odd and at least 3, got {}",
                self.walk_length
            )));
        }
        if self.walks_per_node == 0 {
            return Err(Error::Config("walks per node must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of entities in an untruncated chain.
    pub fn entities_per_chain(&self) -> usize {
        self.walk_length / 2 + 1
    }
}

/// Alternating `e1, r1, e2, ..., ek` token ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chain {
    tokens: Vec<u32>,
}

impl Chain {
    pub fn start(entity: EntityId) -> Self {
        Chain {
            tokens: vec![entity],
        }
    }

    /// Builds a chain from raw alternating tokens; the length must be odd.
    pub fn from_tokens(tokens: Vec<u32>) -> Result<Self> {
        if tokens.len().is_multiple_of(2) {
            return Err(Error::Contract(format!(
                "chain must alternate entity/relation and end on an entity, got {} tokens",
                tokens.len()
            )));
        }
        Ok(Chain { tokens })
    }

    pub fn push(&mut self, relation: RelationId, entity: EntityId) {
        self.tokens.push(relation);
        self.tokens.push(entity);
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_entities(&self) -> usize {
        self.tokens.len().div_ceil(2)
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.tokens.iter().step_by(2).copied()
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.tokens.iter().skip(1).step_by(2).copied()
    }

    pub fn last_entity(&self) -> EntityId {
        *self.tokens.last().expect("chain is nonempty")
    }

    /// Consecutive `(entity, relation, entity)` steps.
    pub fn steps(&self) -> impl Iterator<Item = (EntityId, RelationId, EntityId)> + '_ {
        self.tokens
            .windows(3)
            .step_by(2)
            .map(|w| (w[0], w[1], w[2]))
    }

    /// Whether every step is an edge of `graph`.
    pub fn is_valid_in(&self, graph: &KnowledgeGraph) -> bool {
        self.steps().all(|(e, r, n)| {
            graph
                .out_edges(e)
                .iter()
                .any(|edge| edge.relation == r && edge.neighbor == n)
        })
    }
}

pub fn transition_weight(
    graph: &KnowledgeGraph,
    prev: EntityId,
    cur: EntityId,
    next: EntityId,
    p: f64,
    q: f64,
) -> Result<f64> {
    if !graph.is_neighbor(cur, next) {
        return Err(Error::Contract(format!(
            "entity {next} is not a neighbor of {cur}"
        )));
    }
    Ok(unchecked_weight(graph, prev, next, p, q))
}

#[inline]
fn unchecked_weight(graph: &KnowledgeGraph, prev: EntityId, next: EntityId, p: f64, q: f64) -> f64 {
    if next == prev {
        1.0 / p
    } else if graph.is_neighbor(prev, next) {
        1.0
    } else {
        1.0 / q
    }
}

/// Probabilities over `graph.out_edges(cur)`, index-aligned. Empty for a
/// dead end.
pub fn next_step_distribution(
    graph: &KnowledgeGraph,
    prev: EntityId,
    cur: EntityId,
    p: f64,
    q: f64,
) -> Vec<f64> {
    let mut weights: Vec<f64> = graph
        .out_edges(cur)
        .iter()
        .map(|e| unchecked_weight(graph, prev, e.neighbor, p, q))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Samples an index from unnormalized nonnegative weights.
fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding can leave u marginally above the last bucket
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// One step of the walk: samples an edge index of `graph.out_edges(cur)`.
/// `prev` is `None` on the first step, which is uniform over edges.
pub fn sample_step<R: Rng + ?Sized>(
    graph: &KnowledgeGraph,
    prev: Option<EntityId>,
    cur: EntityId,
    p: f64,
    q: f64,
    rng: &mut R,
) -> Option<usize> {
    let edges = graph.out_edges(cur);
    if edges.is_empty() {
        return None;
    }
    match prev {
        None => Some(rng.gen_range(0..edges.len())),
        Some(prev) => {
            let weights: Vec<f64> = edges
                .iter()
                .map(|e| unchecked_weight(graph, prev, e.neighbor, p, q))
                .collect();
            Some(sample_index(&weights, rng))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampledWalk {
    pub chain: Chain,
    /// Set when a dead end stopped the walk before `walk_length`.
    pub truncated: bool,
}

pub fn sample_walk<R: Rng + ?Sized>(
    start: EntityId,
    graph: &KnowledgeGraph,
    config: &WalkConfig,
    rng: &mut R,
) -> SampledWalk {
    let mut chain = Chain::start(start);
    let target = config.entities_per_chain();
    let mut prev = None;
    let mut cur = start;
    while chain.num_entities() < target {
        let Some(idx) = sample_step(graph, prev, cur, config.p, config.q, rng) else {
            return SampledWalk {
                chain,
                truncated: true,
            };
        };
        let edge = graph.out_edges(cur)[idx];
        chain.push(edge.relation, edge.neighbor);
        prev = Some(cur);
        cur = edge.neighbor;
    }
    SampledWalk {
        chain,
        truncated: false,
    }
}

/// RNG stream of the `walk_index`-th walk from `entity`.
pub fn walk_stream(seed: u64, entity: EntityId, walk_index: usize) -> rng::Stream {
    rng::stream(seed, &[rng::label("walk"), entity as u64, walk_index as u64])
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    /// Chains in `(entity_id, walk_index)` order.
    pub chains: Vec<Chain>,
    pub truncated: usize,
}

pub fn generate_corpus(graph: &KnowledgeGraph, config: &WalkConfig) -> Result<Corpus> {
    config.validate()?;
    if graph.num_entities() == 0 {
        return Err(Error::EmptyInput("graph".into()));
    }
    let per_node = config.walks_per_node;
    let walks: Vec<SampledWalk> = (0..graph.num_entities() * per_node)
        .into_par_iter()
        .map(|job| {
            let entity = (job / per_node) as EntityId;
            let mut rng = walk_stream(config.seed, entity, job % per_node);
            sample_walk(entity, graph, config, &mut rng)
        })
        .collect();
    let truncated = walks.iter().filter(|w| w.truncated).count();
    if truncated > 0 {
        warn!("{truncated} walk(s) truncated at dead ends");
    }
    Ok(Corpus {
        chains: walks.into_iter().map(|w| w.chain).collect(),
        truncated,
    })
}

pub fn format_chain(graph: &KnowledgeGraph, chain: &Chain) -> String {
    let mut line = String::new();
    for (i, &tok) in chain.tokens().iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        let name = if i % 2 == 0 {
            graph.entities().name(tok)
        } else {
            graph.relations().name(tok)
        };
        line.push_str(name);
    }
    line
}

/// Writes one chain per line as space-separated surface tokens.
pub fn write_corpus(path: impl AsRef<Path>, graph: &KnowledgeGraph, chains: &[Chain]) -> Result<()> {
    let path = path.as_ref();
    for name in graph.entities().names().iter().chain(graph.relations().names()) {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Vocabulary(format!(
                "surface `{name}` cannot be written to a space-separated corpus"
            )));
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for chain in chains {
        writeln!(out, "{}", format_chain(graph, chain)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_corpus(text: &str, graph: &KnowledgeGraph, source: &str) -> Result<Vec<Chain>> {
    let mut chains = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.to_string(),
            line: idx + 1,
            message,
        };
        let mut tokens = Vec::new();
        for (i, tok) in line.split(' ').enumerate() {
            let id = if i % 2 == 0 {
                graph.entities().get(tok)
            } else {
                graph.relations().get(tok)
            };
            tokens.push(id.ok_or_else(|| parse_err(format!("unknown token `{tok}`")))?);
        }
        chains.push(Chain::from_tokens(tokens).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(chains)
}

pub fn read_corpus(path: impl AsRef<Path>, graph: &KnowledgeGraph) -> Result<Vec<Chain>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, graph, &path.display().to_string())
}
