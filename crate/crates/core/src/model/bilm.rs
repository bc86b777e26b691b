//! Bidirectional language model over `(entity, relation)` pair tokens.
//!
//! Both directions read the same embedding tables and softmax heads. The
//! backward direction runs its own LSTM stack over the reversed sequence, so
//! one code path serves both: step `s` of a direction predicts the token at
//! step `s + 1` of that direction. Batches are left-aligned and padded at the
//! end; padding never feeds into a real position.
//!
//! The output layer factorizes `log Pr([e, r]) = log Pr(e) + log Pr(r)` with
//! one head over entities and one over relations.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::model::config::ModelConfig;
use crate::model::lstm::{layer_backward, layer_forward, ClipRange, LayerTrace};
use crate::model::params::{LstmLayer, ModelParams};
use crate::rng;
use crate::scalar::Scalar;
use crate::walk::Chain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairToken {
    pub entity: EntityId,
    pub relation: RelationId,
}

/// Pairs each entity with the relation that follows it; the last entity
/// gets `eos`.
pub fn tokenize_chain(chain: &Chain, eos: RelationId) -> Vec<PairToken> {
    let toks = chain.tokens();
    (0..chain.num_entities())
        .map(|k| PairToken {
            entity: toks[2 * k],
            relation: toks.get(2 * k + 1).copied().unwrap_or(eos),
        })
        .collect()
}

/// A sequence needs a second token to provide any prediction target.
pub fn is_trainable(tokens: &[PairToken]) -> bool {
    tokens.len() >= 2
}

pub fn detokenize(tokens: &[PairToken]) -> Chain {
    let mut raw = Vec::with_capacity(tokens.len() * 2);
    for (k, t) in tokens.iter().enumerate() {
        raw.push(t.entity);
        if k + 1 < tokens.len() {
            raw.push(t.relation);
        }
    }
    Chain::from_tokens(raw).expect("odd by construction")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout masks are drawn from streams derived from `dropout_seed`.
    Train { dropout_seed: u64 },
    Eval,
}

/// The `2L + 1` representations of every position of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStates<T> {
    /// `N x (d_e + d_r)` context-independent pair embeddings.
    pub x: Array2<T>,
    /// Per layer, `N x P` forward-direction outputs.
    pub forward: Vec<Array2<T>>,
    /// Per layer, `N x P` backward-direction outputs, in original order.
    pub backward: Vec<Array2<T>>,
}

impl<T: Scalar> LayerStates<T> {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn num_layers(&self) -> usize {
        self.forward.len()
    }

    pub fn num_representations(&self) -> usize {
        1 + 2 * self.num_layers()
    }

    /// `h_{t,i} = [forward_{t,i}, backward_{t,i}]` for 0-based layer `i`.
    pub fn contextual(&self, t: usize, layer: usize) -> Array1<T> {
        let p = self.forward[layer].ncols();
        let mut v = Array1::zeros(2 * p);
        v.slice_mut(s![..p]).assign(&self.forward[layer].row(t));
        v.slice_mut(s![p..]).assign(&self.backward[layer].row(t));
        v
    }

    /// `x_t` followed by every per-layer forward and backward state.
    pub fn representations(&self, t: usize) -> Vec<Array1<T>> {
        let mut out = vec![self.x.row(t).to_owned()];
        for l in 0..self.num_layers() {
            out.push(self.forward[l].row(t).to_owned());
            out.push(self.backward[l].row(t).to_owned());
        }
        out
    }
}

/// Per-direction activations retained for the backward pass.
#[derive(Clone, Debug)]
struct DirectionPass<T> {
    // direction-ordered tokens per sequence
    tokens: Vec<Vec<PairToken>>,
    traces: Vec<LayerTrace<T>>,
    // outputs[layer][step]: B x P
    outputs: Vec<Vec<Array2<T>>>,
    // masks[layer][step] applied to the input of layer >= 1
    masks: Vec<Vec<Array2<T>>>,
    // softmax cache, one row per prediction
    pred_rows: Vec<(usize, usize)>,
    targets: Vec<PairToken>,
    probs_entity: Array2<T>,
    probs_relation: Array2<T>,
    top: Array2<T>,
}

#[derive(Clone, Debug)]
pub struct TrainCache<T> {
    directions: [DirectionPass<T>; 2],
    positions: usize,
}

#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    /// Mean over predicted positions of forward plus backward NLL.
    pub loss: T,
    /// Mean forward-direction NLL per predicted position.
    pub forward_nll: T,
    /// Mean backward-direction NLL per predicted position.
    pub backward_nll: T,
    /// Predicted positions per direction.
    pub positions: usize,
    /// Sequences dropped for having fewer than two tokens.
    pub skipped: usize,
    pub states: Vec<LayerStates<T>>,
    cache: Option<TrainCache<T>>,
}

/// Softmax probabilities of both heads for top-layer rows `y` (`M x P`).
pub fn softmax_heads<T: Scalar>(params: &ModelParams<T>, y: ArrayView2<T>) -> (Array2<T>, Array2<T>) {
    let mut pe = y.dot(&params.softmax_entity_w.t());
    pe += &params.softmax_entity_b;
    let mut pr = y.dot(&params.softmax_relation_w.t());
    pr += &params.softmax_relation_b;
    softmax_rows(&mut pe);
    softmax_rows(&mut pr);
    (pe, pr)
}

fn softmax_rows<T: Scalar>(a: &mut Array2<T>) {
    for mut row in a.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn check_tokens<T: Scalar>(params: &ModelParams<T>, seqs: &[&[PairToken]]) -> Result<()> {
    let (ne, nr) = (params.num_entities() as u32, params.num_relations() as u32);
    for seq in seqs {
        if let Some(t) = seq.iter().find(|t| t.entity >= ne || t.relation >= nr) {
            return Err(Error::Contract(format!(
                "pair token ({}, {}) outside vocabulary ({ne} entities, {nr} relations)",
                t.entity, t.relation
            )));
        }
    }
    Ok(())
}

/// Runs one direction's stack over `tokens` (already direction-ordered).
fn run_direction<T: Scalar>(
    layers: &[LstmLayer<T>],
    params: &ModelParams<T>,
    config: &ModelConfig,
    tokens: Vec<Vec<PairToken>>,
    dropout: Option<rng::Stream>,
) -> DirectionPass<T> {
    let batch = tokens.len();
    let steps = tokens.iter().map(Vec::len).max().unwrap_or(0);
    let (de, dr) = (config.entity_dim, config.relation_dim);
    let clip = ClipRange::new(config.clip_lo, config.clip_hi);

    let mut inputs = Vec::with_capacity(steps);
    for s in 0..steps {
        let mut x = Array2::zeros((batch, de + dr));
        for (b, seq) in tokens.iter().enumerate() {
            if let Some(tok) = seq.get(s) {
                x.slice_mut(s![b, ..de])
                    .assign(&params.entity_embedding.row(tok.entity as usize));
                x.slice_mut(s![b, de..])
                    .assign(&params.relation_embedding.row(tok.relation as usize));
            }
        }
        inputs.push(x);
    }

    let mut dropout = dropout.filter(|_| config.dropout > 0.0);
    let keep = 1.0 - config.dropout;
    let scale = T::of(1.0 / keep);
    let mut traces = Vec::with_capacity(layers.len());
    let mut outputs: Vec<Vec<Array2<T>>> = Vec::with_capacity(layers.len());
    let mut masks = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let layer_inputs: Vec<Array2<T>> = if l == 0 {
            std::mem::take(&mut inputs)
        } else {
            let below = &outputs[l - 1];
            match dropout.as_mut() {
                Some(rng) => {
                    let step_masks: Vec<Array2<T>> = below
                        .iter()
                        .map(|y| {
                            Array2::from_shape_simple_fn(y.raw_dim(), || {
                                if rng.gen::<f64>() < keep {
                                    scale
                                } else {
                                    T::zero()
                                }
                            })
                        })
                        .collect();
                    let dropped = below.iter().zip(&step_masks).map(|(y, m)| y * m).collect();
                    masks.push(step_masks);
                    dropped
                }
                None => below.clone(),
            }
        };
        let (ys, trace) = layer_forward(layer, &layer_inputs, clip, config.layer_has_residual(l));
        traces.push(trace);
        outputs.push(ys);
    }

    DirectionPass {
        tokens,
        traces,
        outputs,
        masks,
        pred_rows: Vec::new(),
        targets: Vec::new(),
        probs_entity: Array2::zeros((0, 0)),
        probs_relation: Array2::zeros((0, 0)),
        top: Array2::zeros((0, 0)),
    }
}

/// Fills the softmax cache of `pass` and returns the summed NLL.
fn direction_loss<T: Scalar>(pass: &mut DirectionPass<T>, params: &ModelParams<T>) -> T {
    let top = pass.outputs.last().expect("at least one layer");
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (b, seq) in pass.tokens.iter().enumerate() {
        for s in 0..seq.len().saturating_sub(1) {
            rows.push((b, s));
            targets.push(seq[s + 1]);
        }
    }
    let p = params.softmax_entity_w.ncols();
    let mut y = Array2::zeros((rows.len(), p));
    for (k, &(b, s)) in rows.iter().enumerate() {
        y.row_mut(k).assign(&top[s].row(b));
    }
    let (pe, pr) = softmax_heads(params, y.view());
    let tiny = T::min_positive_value();
    let mut nll = T::zero();
    for (k, t) in targets.iter().enumerate() {
        nll -= pe[[k, t.entity as usize]].max(tiny).ln();
        nll -= pr[[k, t.relation as usize]].max(tiny).ln();
    }
    pass.pred_rows = rows;
    pass.targets = targets;
    pass.probs_entity = pe;
    pass.probs_relation = pr;
    pass.top = y;
    nll
}

fn collect_states<T: Scalar>(
    seqs: &[&[PairToken]],
    params: &ModelParams<T>,
    config: &ModelConfig,
    fwd: &DirectionPass<T>,
    bwd: &DirectionPass<T>,
) -> Vec<LayerStates<T>> {
    let de = config.entity_dim;
    seqs.iter()
        .enumerate()
        .map(|(b, seq)| {
            let n = seq.len();
            let mut x = Array2::zeros((n, config.input_dim()));
            for (t, tok) in seq.iter().enumerate() {
                x.slice_mut(s![t, ..de])
                    .assign(&params.entity_embedding.row(tok.entity as usize));
                x.slice_mut(s![t, de..])
                    .assign(&params.relation_embedding.row(tok.relation as usize));
            }
            let gather = |pass: &DirectionPass<T>, reverse: bool| -> Vec<Array2<T>> {
                pass.outputs
                    .iter()
                    .map(|steps| {
                        let mut m = Array2::zeros((n, config.projection_dim));
                        for t in 0..n {
                            let s = if reverse { n - 1 - t } else { t };
                            m.row_mut(t).assign(&steps[s].row(b));
                        }
                        m
                    })
                    .collect()
            };
            LayerStates {
                x,
                forward: gather(fwd, false),
                backward: gather(bwd, true),
            }
        })
        .collect()
}

fn reversed(seqs: &[&[PairToken]]) -> Vec<Vec<PairToken>> {
    seqs.iter().map(|s| s.iter().rev().copied().collect()).collect()
}

/// Eval-mode encoding of sequences of any nonzero length.
pub fn encode<T: Scalar>(
    seqs: &[&[PairToken]],
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<Vec<LayerStates<T>>> {
    check_tokens(params, seqs)?;
    if seqs.iter().any(|s| s.is_empty()) {
        return Err(Error::Contract("cannot encode an empty sequence".into()));
    }
    let fwd_tokens = seqs.iter().map(|s| s.to_vec()).collect();
    let fwd = run_direction(&params.forward, params, config, fwd_tokens, None);
    let bwd = run_direction(&params.backward, params, config, reversed(seqs), None);
    Ok(collect_states(seqs, params, config, &fwd, &bwd))
}

/// Joint forward/backward pass over a batch. Sequences shorter than two
/// tokens are skipped and counted.
pub fn bilm_forward<T: Scalar>(
    batch: &[Vec<PairToken>],
    params: &ModelParams<T>,
    config: &ModelConfig,
    mode: Mode,
) -> Result<ForwardPass<T>> {
    let seqs: Vec<&[PairToken]> = batch
        .iter()
        .filter(|s| is_trainable(s))
        .map(Vec::as_slice)
        .collect();
    let skipped = batch.len() - seqs.len();
    check_tokens(params, &seqs)?;
    if seqs.is_empty() {
        return Ok(ForwardPass {
            loss: T::zero(),
            forward_nll: T::zero(),
            backward_nll: T::zero(),
            positions: 0,
            skipped,
            states: Vec::new(),
            cache: None,
        });
    }
    let streams = match mode {
        Mode::Train { dropout_seed } => (
            Some(rng::stream(dropout_seed, &[rng::label("dropout"), 0])),
            Some(rng::stream(dropout_seed, &[rng::label("dropout"), 1])),
        ),
        Mode::Eval => (None, None),
    };
    let fwd_tokens = seqs.iter().map(|s| s.to_vec()).collect();
    let mut fwd = run_direction(&params.forward, params, config, fwd_tokens, streams.0);
    let mut bwd = run_direction(&params.backward, params, config, reversed(&seqs), streams.1);

    let positions: usize = seqs.iter().map(|s| s.len() - 1).sum();
    let n = T::of(positions as f64);
    let fwd_nll = direction_loss(&mut fwd, params) / n;
    let bwd_nll = direction_loss(&mut bwd, params) / n;
    let states = collect_states(&seqs, params, config, &fwd, &bwd);
    let cache = match mode {
        Mode::Train { .. } => Some(TrainCache {
            directions: [fwd, bwd],
            positions,
        }),
        Mode::Eval => None,
    };
    Ok(ForwardPass {
        loss: fwd_nll + bwd_nll,
        forward_nll: fwd_nll,
        backward_nll: bwd_nll,
        positions,
        skipped,
        states,
        cache,
    })
}

/// Gradients of `pass.loss` with respect to every parameter block.
pub fn bilm_backward<T: Scalar>(
    pass: &ForwardPass<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<ModelParams<T>> {
    let mut grads = params.zeros_like();
    if pass.positions == 0 {
        return Ok(grads);
    }
    let cache = pass
        .cache
        .as_ref()
        .ok_or_else(|| Error::Contract("backward pass requires a train-mode forward pass".into()))?;
    let inv_n = T::of(1.0 / cache.positions as f64);
    let clip = ClipRange::new(config.clip_lo, config.clip_hi);
    let (de, p) = (config.entity_dim, config.projection_dim);

    for (dir, pass) in cache.directions.iter().enumerate() {
        let layers = if dir == 0 { &params.forward } else { &params.backward };

        // softmax heads
        let mut dle = pass.probs_entity.clone();
        let mut dlr = pass.probs_relation.clone();
        for (k, t) in pass.targets.iter().enumerate() {
            dle[[k, t.entity as usize]] -= T::one();
            dlr[[k, t.relation as usize]] -= T::one();
        }
        dle *= inv_n;
        dlr *= inv_n;
        grads.softmax_entity_w += &dle.t().dot(&pass.top);
        grads.softmax_entity_b += &dle.sum_axis(Axis(0));
        grads.softmax_relation_w += &dlr.t().dot(&pass.top);
        grads.softmax_relation_b += &dlr.sum_axis(Axis(0));
        let dy_rows = dle.dot(&params.softmax_entity_w) + dlr.dot(&params.softmax_relation_w);

        let batch = pass.tokens.len();
        let steps = pass.outputs[0].len();
        let mut d_out: Vec<Array2<T>> = vec![Array2::zeros((batch, p)); steps];
        for (k, &(b, s)) in pass.pred_rows.iter().enumerate() {
            let mut row = d_out[s].row_mut(b);
            row += &dy_rows.row(k);
        }

        let dir_grads = if dir == 0 { &mut grads.forward } else { &mut grads.backward };
        for l in (0..layers.len()).rev() {
            let (g, d_in) = layer_backward(&layers[l], &pass.traces[l], &d_out, clip);
            let acc = &mut dir_grads[l];
            acc.w_input += &g.w_input;
            acc.w_hidden += &g.w_hidden;
            acc.bias += &g.bias;
            acc.w_proj += &g.w_proj;
            d_out = if l > 0 {
                match pass.masks.get(l - 1) {
                    Some(masks) => d_in.iter().zip(masks).map(|(d, m)| d * m).collect(),
                    None => d_in,
                }
            } else {
                d_in
            };
        }

        // d_out now holds gradients w.r.t. the embedding inputs
        for (b, seq) in pass.tokens.iter().enumerate() {
            for (s, tok) in seq.iter().enumerate() {
                let row = d_out[s].row(b);
                let mut e = grads.entity_embedding.row_mut(tok.entity as usize);
                e += &row.slice(s![..de]);
                let mut r = grads.relation_embedding.row_mut(tok.relation as usize);
                r += &row.slice(s![de..]);
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(layers: usize) -> ModelConfig {
        ModelConfig {
            num_layers: layers,
            hidden_units: 6,
            projection_dim: 4,
            entity_dim: 3,
            relation_dim: 2,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    fn tok(e: u32, r: u32) -> PairToken {
        PairToken {
            entity: e,
            relation: r,
        }
    }

    #[test]
    fn tokenize_pairs_entities_with_following_relation() {
        let mut c = Chain::start(0);
        c.push(5, 1);
        assert_eq!(tokenize_chain(&c, 9), vec![tok(0, 5), tok(1, 9)]);
        let single = Chain::start(3);
        let t = tokenize_chain(&single, 9);
        assert_eq!(t, vec![tok(3, 9)]);
        assert!(!is_trainable(&t));
    }

    #[test]
    fn twenty_one_token_chain_gives_eleven_pairs() {
        let mut c = Chain::start(0);
        for k in 0..10 {
            c.push(k % 3, k + 1);
        }
        assert_eq!(c.len(), 21);
        let t = tokenize_chain(&c, 7);
        assert_eq!(t.len(), 11);
        assert_eq!(detokenize(&t), c);
        let pass = bilm_forward(&[t], &ModelParams::<f64>::init(&small(1), 12, 8), &small(1), Mode::Eval)
            .unwrap();
        assert_eq!(pass.positions, 10);
    }

    #[test]
    fn uniform_logits_give_log_vocab_loss() {
        let cfg = small(2);
        let mut params = ModelParams::<f64>::init(&cfg, 3, 2);
        params.softmax_entity_w.fill(0.0);
        params.softmax_entity_b.fill(0.0);
        params.softmax_relation_w.fill(0.0);
        params.softmax_relation_b.fill(0.0);
        let batch = vec![vec![tok(0, 0), tok(1, 0), tok(2, 1)], vec![tok(2, 0), tok(0, 1)]];
        let pass = bilm_forward(&batch, &params, &cfg, Mode::Eval).unwrap();
        let expected = 3f64.ln() + 2f64.ln();
        assert!((pass.forward_nll - expected).abs() < 1e-12);
        assert!((pass.backward_nll - expected).abs() < 1e-12);
        assert!((pass.loss - 2.0 * expected).abs() < 1e-12);
        assert!((expected - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn short_sequences_are_skipped() {
        let cfg = small(1);
        let params = ModelParams::<f64>::init(&cfg, 3, 2);
        let batch = vec![vec![tok(0, 1)], vec![tok(0, 0), tok(1, 1)]];
        let pass = bilm_forward(&batch, &params, &cfg, Mode::Eval).unwrap();
        assert_eq!(pass.skipped, 1);
        assert_eq!(pass.states.len(), 1);
        let none = bilm_forward(&batch[..1], &params, &cfg, Mode::Eval).unwrap();
        assert_eq!(none.positions, 0);
    }

    #[test]
    fn out_of_vocabulary_token_is_rejected() {
        let cfg = small(1);
        let params = ModelParams::<f64>::init(&cfg, 3, 2);
        let batch = vec![vec![tok(0, 0), tok(3, 1)]];
        assert!(bilm_forward(&batch, &params, &cfg, Mode::Eval).is_err());
    }

    #[test]
    fn backward_requires_train_mode() {
        let cfg = small(1);
        let params = ModelParams::<f64>::init(&cfg, 3, 2);
        let batch = vec![vec![tok(0, 0), tok(1, 1)]];
        let pass = bilm_forward(&batch, &params, &cfg, Mode::Eval).unwrap();
        assert!(matches!(bilm_backward(&pass, &params, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn zeroed_residual_layer_passes_layer_one_through() {
        let cfg = ModelConfig {
            residual: true,
            ..small(2)
        };
        let mut params = ModelParams::<f64>::init(&cfg, 4, 3);
        params.forward[1].set_zero();
        params.backward[1].set_zero();
        let batch = vec![vec![tok(0, 0), tok(1, 1), tok(3, 2)]];
        let pass = bilm_forward(&batch, &params, &cfg, Mode::Eval).unwrap();
        let st = &pass.states[0];
        assert_eq!(st.num_representations(), 5);
        assert_eq!(st.forward[1], st.forward[0]);
        assert_eq!(st.backward[1], st.backward[0]);
    }

    #[test]
    fn encode_matches_forward_states_and_allows_single_tokens() {
        let cfg = small(2);
        let params = ModelParams::<f64>::init(&cfg, 4, 3);
        let seq = vec![tok(0, 0), tok(1, 1), tok(3, 2)];
        let pass = bilm_forward(std::slice::from_ref(&seq), &params, &cfg, Mode::Eval).unwrap();
        let enc = encode(&[seq.as_slice()], &params, &cfg).unwrap();
        assert_eq!(enc[0], pass.states[0]);
        let one = encode(&[&[tok(2, 2)][..]], &params, &cfg).unwrap();
        assert_eq!(one[0].len(), 1);
    }

    #[test]
    fn padding_does_not_change_states() {
        let cfg = small(2);
        let params = ModelParams::<f64>::init(&cfg, 5, 3);
        let short = vec![tok(0, 0), tok(1, 1)];
        let long = vec![tok(2, 0), tok(3, 1), tok(4, 2), tok(1, 0)];
        let alone = encode(&[short.as_slice()], &params, &cfg).unwrap();
        let both = encode(&[short.as_slice(), long.as_slice()], &params, &cfg).unwrap();
        assert_eq!(alone[0], both[0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let cfg = small(1);
        let params = ModelParams::<f32>::init(&cfg, 6, 4);
        let y = Array2::from_shape_fn((3, 4), |(i, j)| (i as f32 - j as f32) * 0.7);
        let (pe, pr) = softmax_heads(&params, y.view());
        for row in pe.rows().into_iter().chain(pr.rows()) {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}
