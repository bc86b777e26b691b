use log::info;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::model::adam::{Adam, AdamConfig};
use crate::model::bilm::{bilm_backward, bilm_forward, is_trainable, tokenize_chain, Mode, PairToken};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;
use crate::rng;
use crate::scalar::Scalar;
use crate::walk::Chain;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Position-weighted mean training loss over the epoch.
    pub mean_loss: f64,
    pub batches: usize,
    pub positions: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub loss_trace: Vec<f64>,
    /// Untrainable sequences excluded up front.
    pub skipped: usize,
}

pub fn chains_to_sequences(chains: &[Chain], graph: &KnowledgeGraph) -> Vec<Vec<PairToken>> {
    let eos = graph.eos_relation();
    chains.iter().map(|c| tokenize_chain(c, eos)).collect()
}

pub fn train<T: Scalar>(
    sequences: &[Vec<PairToken>],
    num_entities: usize,
    num_relations: usize,
    config: &ModelConfig,
) -> Result<TrainOutcome<T>> {
    train_with(sequences, num_entities, num_relations, config, |_, _| Ok(()))
}

/// Trains from a seeded initialization, calling `on_epoch` after each epoch.
pub fn train_with<T, F>(
    sequences: &[Vec<PairToken>],
    num_entities: usize,
    num_relations: usize,
    config: &ModelConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    F: FnMut(&EpochSummary, &ModelParams<T>) -> Result<()>,
{
    config.validate()?;
    let params = ModelParams::<T>::init(config, num_entities, num_relations);
    let trainable: Vec<usize> = (0..sequences.len())
        .filter(|&i| is_trainable(&sequences[i]))
        .collect();
    let skipped = sequences.len() - trainable.len();
    if trainable.is_empty() {
        return Err(Error::NoTrainableChains);
    }
    continue_training(params, &trainable, sequences, config, skipped, &mut on_epoch)
}

fn continue_training<T, F>(
    mut params: ModelParams<T>,
    trainable: &[usize],
    sequences: &[Vec<PairToken>],
    config: &ModelConfig,
    skipped: usize,
    on_epoch: &mut F,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    F: FnMut(&EpochSummary, &ModelParams<T>) -> Result<()>,
{
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate));
    let mut order = trainable.to_vec();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut shuffle = rng::stream(config.seed, &[rng::label("shuffle"), epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut positions = 0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Vec<PairToken>> = chunk.iter().map(|&i| sequences[i].clone()).collect();
            let dropout_seed = rng::derive_seed(
                config.seed,
                &[rng::label("dropout"), epoch as u64, b as u64],
            );
            let pass = bilm_forward(&batch, &params, config, Mode::Train { dropout_seed })?;
            let grads = bilm_backward(&pass, &params, config)?;
            adam.step_model(&mut params, &grads)?;
            loss_sum += pass.loss.as_f64() * pass.positions as f64;
            positions += pass.positions;
            batches += 1;
        }
        let summary = EpochSummary {
            epoch,
            mean_loss: loss_sum / positions as f64,
            batches,
            positions,
        };
        info!("epoch {epoch}: loss {:.4} over {batches} batches", summary.mean_loss);
        trace.push(summary.mean_loss);
        on_epoch(&summary, &params)?;
    }
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
        skipped,
    })
}
