//! Central finite-difference check of the analytic BiLM gradients.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::Result;
use crate::model::bilm::{bilm_backward, bilm_forward, Mode, PairToken};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;
use crate::rng;
use crate::scalar::Precision;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub num_entities: usize,
    pub num_relations: usize,
    pub sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub coordinates_per_block: usize,
    /// Multiplies the initial parameters. At the training scale many
    /// recurrent gradients are ~1e-9, below the rounding noise of a central
    /// difference with step 1e-5.
    pub init_scale: f64,
    pub step: f64,
    /// Denominator floor of the relative error. The effective floor is
    /// raised to what the difference quotient can resolve; see
    /// [`GradCheckReport::floor`].
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            model: ModelConfig {
                num_layers: 2,
                hidden_units: 8,
                projection_dim: 4,
                entity_dim: 3,
                relation_dim: 3,
                dropout: 0.1,
                residual: true,
                precision: Precision::F64,
                ..ModelConfig::default()
            },
            num_entities: 20,
            num_relations: 6,
            sequences: 4,
            min_len: 3,
            max_len: 7,
            coordinates_per_block: 6,
            init_scale: 3.0,
            step: 1e-5,
            floor: 1e-8,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub coordinates: usize,
    pub max_rel_error: f64,
    /// Denominator floor actually used: at least `RESOLUTION_MARGIN` times
    /// the spacing `ulp(loss) / 2h` of representable difference quotients,
    /// so that rounding alone cannot contribute more than ~1e-4.
    pub floor: f64,
}

pub const RESOLUTION_MARGIN: f64 = 4e4;

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    f64::from_bits(x.to_bits() + 1) - x
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn nudge(params: &mut ModelParams<f64>, block: usize, index: usize, delta: f64) {
    let mut k = 0;
    params.visit_mut(|_, s| {
        if k == block {
            s[index] += delta;
        }
        k += 1;
    });
}

pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let model = &cfg.model;
    model.validate()?;
    let mut rng = rng::stream(cfg.seed, &[rng::label("gradcheck")]);
    let mut params = ModelParams::<f64>::init(
        &ModelConfig {
            seed: cfg.seed,
            ..model.clone()
        },
        cfg.num_entities,
        cfg.num_relations,
    );
    params.visit_mut(|_, s| s.iter_mut().for_each(|v| *v *= cfg.init_scale));
    let batch: Vec<Vec<PairToken>> = (0..cfg.sequences)
        .map(|_| {
            let n = rng.gen_range(cfg.min_len..=cfg.max_len);
            (0..n)
                .map(|_| PairToken {
                    entity: rng.gen_range(0..cfg.num_entities as u32),
                    relation: rng.gen_range(0..cfg.num_relations as u32),
                })
                .collect()
        })
        .collect();
    let mode = Mode::Train {
        dropout_seed: rng::derive_seed(cfg.seed, &[rng::label("gradcheck-dropout")]),
    };
    let loss = |p: &ModelParams<f64>| -> Result<f64> { Ok(bilm_forward(&batch, p, model, mode)?.loss) };

    let pass = bilm_forward(&batch, &params, model, mode)?;
    let grads = bilm_backward(&pass, &params, model)?;
    let floor = cfg.floor.max(RESOLUTION_MARGIN * ulp(pass.loss) / (2.0 * cfg.step));
    let mut analytic = Vec::new();
    grads.visit(|name, s| analytic.push((name.to_string(), s.to_vec())));

    let used_entities: Vec<usize> = batch
        .iter()
        .flatten()
        .map(|t| t.entity as usize)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let used_relations: Vec<usize> = batch
        .iter()
        .flatten()
        .map(|t| t.relation as usize)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut blocks = Vec::new();
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for (b, (name, g)) in analytic.iter().enumerate() {
        let mut block_worst: f64 = 0.0;
        for _ in 0..cfg.coordinates_per_block {
            let index = match name.as_str() {
                "entity_embedding" => {
                    let row = used_entities[rng.gen_range(0..used_entities.len())];
                    row * model.entity_dim + rng.gen_range(0..model.entity_dim)
                }
                "relation_embedding" => {
                    let row = used_relations[rng.gen_range(0..used_relations.len())];
                    row * model.relation_dim + rng.gen_range(0..model.relation_dim)
                }
                _ => rng.gen_range(0..g.len()),
            };
            let mut plus = params.clone();
            nudge(&mut plus, b, index, cfg.step);
            let mut minus = params.clone();
            nudge(&mut minus, b, index, -cfg.step);
            let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * cfg.step);
            let rel = relative_error(g[index], numeric, floor);
            block_worst = block_worst.max(rel);
            total += 1;
        }
        worst = worst.max(block_worst);
        blocks.push(BlockCheck {
            name: name.clone(),
            coordinates: cfg.coordinates_per_block,
            max_rel_error: block_worst,
        });
    }
    Ok(GradCheckReport {
        blocks,
        coordinates: total,
        max_rel_error: worst,
        floor,
    })
}
