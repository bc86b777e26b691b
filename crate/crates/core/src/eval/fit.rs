//! Downstream scorer training. Initialization is the only thing that differs
//! between a random and a pretrained start: batching, negatives and the
//! optimizer are driven by the same seed either way.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::embed::{LayeredTable, StaticEmbeddingTable};
use crate::error::{Error, Result};
use crate::kg::{EntityId, Triple};
use crate::model::adam::{Adam, AdamConfig};
use crate::rng::{self, Stream};
use crate::scalar::Scalar;

use super::scorer::{score_gradients, Scorer, ScorerKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScorerLoss {
    /// `max(0, margin - s_pos + s_neg)` per positive/negative pair.
    Margin(f64),
    /// `softplus(-y s)` per labelled sample.
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    Dolores,
    Random,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Dolores => "dolores",
            InitMode::Random => "random",
        })
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dolores" => Ok(InitMode::Dolores),
            "random" => Ok(InitMode::Random),
            _ => Err(Error::Config(format!("unknown init `{s}` (expected dolores or random)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScorerTrainConfig {
    pub negatives: usize,
    pub loss: ScorerLoss,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl ScorerTrainConfig {
    /// Margin loss for translational scorers, logistic for bilinear ones.
    pub fn for_kind(kind: ScorerKind) -> Self {
        ScorerTrainConfig {
            negatives: 1,
            loss: match kind {
                ScorerKind::Translational => ScorerLoss::Margin(1.0),
                ScorerKind::Bilinear => ScorerLoss::Logistic,
            },
            epochs: 50,
            learning_rate: 1e-2,
            batch_size: 128,
            seed: rng::DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ScorerLoss::Margin(m) = self.loss {
            if m.is_nan() || m <= 0.0 {
                return Err(Error::Config(format!("margin must be positive, got {m}")));
            }
        }
        if self.negatives == 0 {
            return Err(Error::Config("need at least one negative per positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("scorer batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "scorer learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

pub enum ScorerInit<'a, T> {
    Random,
    Static(&'a StaticEmbeddingTable<T>),
    /// Per-layer tables; the layer weights are learned with the scorer.
    Layered(&'a LayeredTable<T>),
}

/// Pretrained inputs `u = [x, sum_i lambda_i h_i]`, mapped by `projection`
/// (`dim x src`) when the widths differ.
#[derive(Clone, Debug, PartialEq)]
struct Source<T> {
    entity_x: Array2<T>,
    entity_layers: Vec<Array2<T>>,
    relation_x: Array2<T>,
    relation_layers: Vec<Array2<T>>,
    lambda: Vec<T>,
    projection: Option<Array2<T>>,
}

impl<T: Scalar> Source<T> {
    fn inputs(&self, x: &Array2<T>, layers: &[Array2<T>]) -> Array2<T> {
        if layers.is_empty() {
            return x.clone();
        }
        let dx = x.ncols();
        let mut u = Array2::zeros((x.nrows(), dx + layers[0].ncols()));
        u.slice_mut(s![.., ..dx]).assign(x);
        for (h, &w) in layers.iter().zip(&self.lambda) {
            u.slice_mut(s![.., dx..]).scaled_add(w, h);
        }
        u
    }

    fn project(&self, u: Array2<T>) -> Array2<T> {
        match &self.projection {
            Some(p) => u.dot(&p.t()),
            None => u,
        }
    }
}

/// Trainable scorer state: free tables plus an optional pretrained source.
/// The effective tables are `free + project(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerModel<T> {
    pub kind: ScorerKind,
    pub dim: usize,
    entity_free: Array2<T>,
    relation_free: Array2<T>,
    source: Option<Source<T>>,
}

/// Per-entry standard deviation of the random initialization of a
/// `rows x dim` table (Xavier uniform).
pub fn random_init_std(rows: usize, dim: usize) -> f64 {
    (2.0 / (rows + dim) as f64).sqrt()
}

fn uniform<T: Scalar>(rows: usize, cols: usize, bound: f64, rng: &mut Stream) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.gen_range(-bound..=bound)))
}

impl<T: Scalar> ScorerModel<T> {
    pub fn new(
        kind: ScorerKind,
        dim: usize,
        num_entities: usize,
        num_relations: usize,
        init: ScorerInit<'_, T>,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("scorer dim must be positive".into()));
        }
        let mut rng = rng::stream(seed, &[rng::label("scorer-init")]);
        let source = match init {
            ScorerInit::Random => None,
            ScorerInit::Static(t) => Some(Source {
                entity_x: t.entities.clone(),
                entity_layers: Vec::new(),
                relation_x: t.relations.clone(),
                relation_layers: Vec::new(),
                lambda: Vec::new(),
                projection: None,
            }),
            ScorerInit::Layered(t) => Some(Source {
                entity_x: t.entity_x.clone(),
                entity_layers: t.entity_layers.clone(),
                relation_x: t.relation_x.clone(),
                relation_layers: t.relation_layers.clone(),
                lambda: vec![T::one() / T::of(t.num_layers() as f64); t.num_layers()],
                projection: None,
            }),
        };
        let (entity_free, relation_free, source) = match source {
            None => {
                let be = random_init_std(num_entities, dim) * 3f64.sqrt();
                let br = random_init_std(num_relations, dim) * 3f64.sqrt();
                (
                    uniform(num_entities, dim, be, &mut rng),
                    uniform(num_relations, dim, br, &mut rng),
                    None,
                )
            }
            Some(mut src) => {
                if src.entity_x.nrows() != num_entities || src.relation_x.nrows() != num_relations {
                    return Err(Error::Config(format!(
                        "pretrained tables cover {} entities and {} relations, scorer needs {num_entities} and {num_relations}",
                        src.entity_x.nrows(),
                        src.relation_x.nrows()
                    )));
                }
                let src_dim = src.entity_x.ncols() + src.entity_layers.first().map_or(0, |l| l.ncols());
                if src_dim != dim {
                    src.projection = Some(uniform(dim, src_dim, (3.0 / dim as f64).sqrt(), &mut rng));
                }
                (
                    Array2::zeros((num_entities, dim)),
                    Array2::zeros((num_relations, dim)),
                    Some(src),
                )
            }
        };
        Ok(ScorerModel {
            kind,
            dim,
            entity_free,
            relation_free,
            source,
        })
    }

    pub fn lambda(&self) -> Option<&[T]> {
        self.source
            .as_ref()
            .filter(|s| !s.lambda.is_empty())
            .map(|s| s.lambda.as_slice())
    }

    pub fn projection(&self) -> Option<&Array2<T>> {
        self.source.as_ref().and_then(|s| s.projection.as_ref())
    }

    /// Effective tables as a read-only scorer.
    pub fn scorer(&self) -> Scorer<T> {
        let (mut e, mut r) = (self.entity_free.clone(), self.relation_free.clone());
        if let Some(src) = &self.source {
            e += &src.project(src.inputs(&src.entity_x, &src.entity_layers));
            r += &src.project(src.inputs(&src.relation_x, &src.relation_layers));
        }
        Scorer {
            kind: self.kind,
            entities: e,
            relations: r,
        }
    }

    /// Gradient step given gradients with respect to the effective tables.
    fn apply(&mut self, adam: &mut Adam<T>, de: &Array2<T>, dr: &Array2<T>) -> Result<()> {
        let Some(src) = &mut self.source else {
            return adam.step(
                vec![
                    ("scorer.entities", self.entity_free.as_slice_mut().expect("contiguous")),
                    ("scorer.relations", self.relation_free.as_slice_mut().expect("contiguous")),
                ],
                &[de.as_slice().expect("contiguous"), dr.as_slice().expect("contiguous")],
            );
        };
        let (ue, ur) = (
            src.inputs(&src.entity_x, &src.entity_layers),
            src.inputs(&src.relation_x, &src.relation_layers),
        );
        let (due, dur) = match &src.projection {
            Some(p) => (de.dot(p), dr.dot(p)),
            None => (de.clone(), dr.clone()),
        };
        let dx = src.entity_x.ncols();
        let dlambda: Vec<T> = src
            .entity_layers
            .iter()
            .zip(&src.relation_layers)
            .map(|(he, hr)| {
                let a = (&due.slice(s![.., dx..]) * he).sum();
                let b = (&dur.slice(s![.., dx..]) * hr).sum();
                a + b
            })
            .collect();
        let dproj = src.projection.as_ref().map(|_| de.t().dot(&ue) + dr.t().dot(&ur));

        let mut params: Vec<(&str, &mut [T])> = vec![
            ("scorer.entities", self.entity_free.as_slice_mut().expect("contiguous")),
            ("scorer.relations", self.relation_free.as_slice_mut().expect("contiguous")),
        ];
        let mut grads: Vec<&[T]> = vec![de.as_slice().expect("contiguous"), dr.as_slice().expect("contiguous")];
        if !src.lambda.is_empty() {
            params.push(("scorer.lambda", src.lambda.as_mut_slice()));
            grads.push(&dlambda);
        }
        if let (Some(p), Some(dp)) = (src.projection.as_mut(), dproj.as_ref()) {
            params.push(("scorer.projection", p.as_slice_mut().expect("contiguous")));
            grads.push(dp.as_slice().expect("contiguous"));
        }
        adam.step(params, &grads)
    }
}

/// Replaces the head or the tail (probability 0.5 each) with a uniformly
/// drawn different entity, rejecting known-true triples.
pub fn corrupt(triple: Triple, num_entities: usize, known: &HashSet<Triple>, rng: &mut Stream) -> Triple {
    const TRIES: usize = 100;
    let mut last = triple;
    for _ in 0..TRIES {
        let c = rng.gen_range(0..num_entities) as EntityId;
        let cand = if rng.gen_bool(0.5) {
            if c == triple.head {
                continue;
            }
            Triple::new(c, triple.relation, triple.tail)
        } else {
            if c == triple.tail {
                continue;
            }
            Triple::new(triple.head, triple.relation, c)
        };
        if !known.contains(&cand) {
            return cand;
        }
        last = cand;
    }
    warn!("no unknown corruption of {triple:?} after {TRIES} draws");
    last
}

/// One seeded negative per positive.
pub fn generate_negatives(positives: &[Triple], num_entities: usize, known: &HashSet<Triple>, seed: u64) -> Vec<Triple> {
    let mut rng = rng::stream(seed, &[rng::label("negatives")]);
    positives
        .iter()
        .map(|&t| corrupt(t, num_entities, known, &mut rng))
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Trains `model` on `train`, rejecting negatives found in `train`. Returns
/// the per-epoch mean loss.
pub fn train_scorer<T: Scalar>(model: &mut ScorerModel<T>, train: &[Triple], config: &ScorerTrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("scorer training split".into()));
    }
    let ne = model.entity_free.nrows();
    if ne < 2 {
        return Err(Error::Config("negative sampling needs at least two entities".into()));
    }
    let known: HashSet<Triple> = train.iter().copied().collect();
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate));
    let mut trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        let mut rng = rng::stream(config.seed, &[rng::label("scorer-epoch"), epoch as u64]);
        order.shuffle(&mut rng);
        let (mut total, mut count) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let scorer = model.scorer();
            let mut de = Array2::<T>::zeros(scorer.entities.raw_dim());
            let mut dr = Array2::<T>::zeros(scorer.relations.raw_dim());
            let mut terms: Vec<(Triple, f64)> = Vec::new();
            let mut batch_loss = 0.0;
            for &i in batch {
                let pos = train[i];
                let sp = scorer.score_unchecked(pos.head, pos.relation, pos.tail).as_f64();
                let negs: Vec<Triple> = (0..config.negatives)
                    .map(|_| corrupt(pos, ne, &known, &mut rng))
                    .collect();
                match config.loss {
                    ScorerLoss::Margin(m) => {
                        for n in negs {
                            let sn = scorer.score_unchecked(n.head, n.relation, n.tail).as_f64();
                            let l = m - sp + sn;
                            if l > 0.0 {
                                batch_loss += l;
                                terms.push((pos, -1.0));
                                terms.push((n, 1.0));
                            }
                        }
                    }
                    ScorerLoss::Logistic => {
                        batch_loss += softplus(-sp);
                        terms.push((pos, -sigmoid(-sp)));
                        for n in negs {
                            let sn = scorer.score_unchecked(n.head, n.relation, n.tail).as_f64();
                            batch_loss += softplus(sn);
                            terms.push((n, sigmoid(sn)));
                        }
                    }
                }
            }
            let samples = batch.len()
                * match config.loss {
                    ScorerLoss::Margin(_) => config.negatives,
                    ScorerLoss::Logistic => config.negatives + 1,
                };
            let scale = 1.0 / samples as f64;
            for (t, dl) in terms {
                let (h, r, tl) = (t.head as usize, t.relation as usize, t.tail as usize);
                let (gh, gr, gt) = score_gradients(
                    scorer.kind,
                    scorer.entities.row(h),
                    scorer.relations.row(r),
                    scorer.entities.row(tl),
                );
                let w = T::of(dl * scale);
                de.row_mut(h).scaled_add(w, &gh);
                dr.row_mut(r).scaled_add(w, &gr);
                de.row_mut(tl).scaled_add(w, &gt);
            }
            model.apply(&mut adam, &de, &dr)?;
            total += batch_loss;
            count += samples;
        }
        let mean = total / count as f64;
        debug!("scorer epoch {}: loss {mean:.6}", epoch + 1);
        trace.push(mean);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy() -> Vec<Triple> {
        (0..12u32).map(|i| Triple::new(i, i % 2, (i + 1) % 12)).collect()
    }

    fn static_table(dim: usize) -> StaticEmbeddingTable<f64> {
        let e = Array2::from_shape_fn((12, dim), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
        let r = Array2::from_shape_fn((2, dim), |(i, j)| ((i + j) % 3) as f64 * 0.1);
        StaticEmbeddingTable {
            entities: e,
            relations: r,
            entity_counts: vec![1; 12],
            relation_counts: vec![1; 2],
        }
    }

    #[test]
    fn non_positive_margin_is_rejected() {
        let mut cfg = ScorerTrainConfig::for_kind(ScorerKind::Translational);
        cfg.loss = ScorerLoss::Margin(0.0);
        let mut m = ScorerModel::<f64>::new(ScorerKind::Translational, 4, 12, 2, ScorerInit::Random, 1).unwrap();
        assert!(matches!(train_scorer(&mut m, &toy(), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_epochs_keep_pretrained_tables() {
        let table = static_table(6);
        let m = ScorerModel::new(ScorerKind::Bilinear, 6, 12, 2, ScorerInit::Static(&table), 3).unwrap();
        let s = m.scorer();
        assert_eq!(s.entities, table.entities);
        assert_eq!(s.relations, table.relations);
        let projected = ScorerModel::new(ScorerKind::Bilinear, 4, 12, 2, ScorerInit::Static(&table), 3).unwrap();
        let p = projected.projection().unwrap();
        assert_eq!(projected.scorer().entities, table.entities.dot(&p.t()));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        for kind in [ScorerKind::Translational, ScorerKind::Bilinear] {
            let mut cfg = ScorerTrainConfig::for_kind(kind);
            cfg.epochs = 30;
            cfg.batch_size = 4;
            let run = || {
                let mut m = ScorerModel::<f64>::new(kind, 8, 12, 2, ScorerInit::Random, 5).unwrap();
                let trace = train_scorer(&mut m, &toy(), &cfg).unwrap();
                (m, trace)
            };
            let (a, ta) = run();
            let (b, tb) = run();
            assert_eq!(a, b);
            assert_eq!(ta, tb);
            assert!(ta.last().unwrap() < &ta[0], "{kind}: {ta:?}");
        }
    }

    #[test]
    fn layered_init_learns_lambda() {
        let layered = LayeredTable {
            entity_x: Array2::from_shape_fn((12, 2), |(i, j)| (i + j) as f64 * 0.05),
            entity_layers: vec![
                Array2::from_shape_fn((12, 2), |(i, j)| ((i * j) % 3) as f64 * 0.1),
                Array2::from_shape_fn((12, 2), |(i, _)| (i % 2) as f64 * 0.2),
            ],
            relation_x: Array2::from_elem((2, 2), 0.3),
            relation_layers: vec![Array2::from_elem((2, 2), 0.1), Array2::from_elem((2, 2), -0.1)],
            entity_counts: vec![1; 12],
            relation_counts: vec![1; 2],
        };
        let mut m = ScorerModel::new(ScorerKind::Bilinear, 4, 12, 2, ScorerInit::Layered(&layered), 2).unwrap();
        assert_eq!(m.lambda().unwrap(), &[0.5, 0.5]);
        assert!(m.projection().is_none());
        let mut cfg = ScorerTrainConfig::for_kind(ScorerKind::Bilinear);
        cfg.epochs = 3;
        train_scorer(&mut m, &toy(), &cfg).unwrap();
        assert_ne!(m.lambda().unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn corruption_avoids_known_triples() {
        let train = toy();
        let known: HashSet<Triple> = train.iter().copied().collect();
        let negs = generate_negatives(&train, 12, &known, 9);
        assert_eq!(negs.len(), train.len());
        for (p, n) in train.iter().zip(&negs) {
            assert!(!known.contains(n));
            assert_eq!(p.relation, n.relation);
            assert!((p.head == n.head) != (p.tail == n.tail));
        }
        assert_eq!(negs, generate_negatives(&train, 12, &known, 9));
    }

    #[test]
    fn init_modes_parse() {
        assert_eq!("dolores".parse::<InitMode>().unwrap(), InitMode::Dolores);
        assert!("xavier".parse::<InitMode>().is_err());
    }
}
