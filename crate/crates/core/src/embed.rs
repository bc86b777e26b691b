//! Contextual representations, their layer-weighted combination, and static
//! per-item tables exported in word2vec text layout.
//!
//! A combined vector is `[x_t, sum_i lambda_i h_{t,i}]` where
//! `h_{t,i} = [forward_{t,i}, backward_{t,i}]`. The state at position `t`
//! belongs to the pair `(e_t, r_t)` and is attributed to both items when
//! pooling.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationId};
use crate::model::bilm::{encode, tokenize_chain, LayerStates, PairToken};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;
use crate::scalar::Scalar;
use crate::walk::Chain;

/// One weight per LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaWeights<T> {
    weights: Vec<T>,
}

impl<T: Scalar> LambdaWeights<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("layer weights must be finite".into()));
        }
        Ok(LambdaWeights { weights })
    }

    pub fn uniform(layers: usize) -> Self {
        LambdaWeights {
            weights: vec![T::one() / T::of(layers as f64); layers],
        }
    }

    /// Selects a single 0-based layer.
    pub fn selector(layer: usize, layers: usize) -> Self {
        let mut weights = vec![T::zero(); layers];
        weights[layer] = T::one();
        LambdaWeights { weights }
    }

    /// Rescaled to sum to one, for fixed (non-learned) use.
    pub fn normalized(&self) -> Result<Self> {
        let sum: T = self.weights.iter().copied().sum();
        if sum == T::zero() {
            return Err(Error::Config("layer weights sum to zero".into()));
        }
        Ok(LambdaWeights {
            weights: self.weights.iter().map(|&w| w / sum).collect(),
        })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_vocab<T: Scalar>(tokens: &[PairToken], params: &ModelParams<T>) -> Result<()> {
    for t in tokens {
        if t.entity as usize >= params.num_entities() {
            return Err(Error::UnknownToken {
                kind: "entity",
                name: t.entity.to_string(),
            });
        }
        if t.relation as usize >= params.num_relations() {
            return Err(Error::UnknownToken {
                kind: "relation",
                name: t.relation.to_string(),
            });
        }
    }
    Ok(())
}

/// Eval-mode `2L + 1` representations of every position of `chain`.
pub fn contextual_reps<T: Scalar>(
    chain: &Chain,
    eos: RelationId,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<LayerStates<T>> {
    let tokens = tokenize_chain(chain, eos);
    check_vocab(&tokens, params)?;
    Ok(encode(&[tokens.as_slice()], params, config)?.remove(0))
}

/// Row `t` is `[x_t, sum_i lambda_i h_{t,i}]`.
pub fn combine<T: Scalar>(states: &LayerStates<T>, lambda: &LambdaWeights<T>) -> Result<Array2<T>> {
    if lambda.len() != states.num_layers() {
        return Err(Error::Config(format!(
            "{} layer weights for {} layers",
            lambda.len(),
            states.num_layers()
        )));
    }
    let n = states.len();
    let dx = states.x.ncols();
    let p = states.forward.first().map_or(0, |f| f.ncols());
    let mut out = Array2::zeros((n, dx + 2 * p));
    out.slice_mut(s![.., ..dx]).assign(&states.x);
    for (l, &w) in lambda.as_slice().iter().enumerate() {
        out.slice_mut(s![.., dx..dx + p]).scaled_add(w, &states.forward[l]);
        out.slice_mut(s![.., dx + p..]).scaled_add(w, &states.backward[l]);
    }
    Ok(out)
}

/// Centres every column of `m` and rescales it to standard deviation
/// `target`. Constant columns become zero.
pub fn standardize_columns<T: Scalar>(m: &mut Array2<T>, target: f64) {
    let n = T::of(m.nrows().max(1) as f64);
    let target = T::of(target);
    for mut col in m.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.iter().map(|&v| v * v).sum::<T>() / n).sqrt();
        let scale = if sd > T::zero() { target / sd } else { T::zero() };
        col.mapv_inplace(|v| v * scale);
    }
}

/// Mean-pooled per-layer states of every entity and relation.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredTable<T> {
    /// `|E| x (d_e + d_r)`
    pub entity_x: Array2<T>,
    /// Per layer, `|E| x 2P`
    pub entity_layers: Vec<Array2<T>>,
    pub relation_x: Array2<T>,
    pub relation_layers: Vec<Array2<T>>,
    pub entity_counts: Vec<usize>,
    pub relation_counts: Vec<usize>,
}

impl<T: Scalar> LayeredTable<T> {
    pub fn num_layers(&self) -> usize {
        self.entity_layers.len()
    }

    pub fn x_dim(&self) -> usize {
        self.entity_x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x_dim() + self.entity_layers.first().map_or(0, |l| l.ncols())
    }

    /// Every block standardized column-wise, entities to `entity_std` and
    /// relations to `relation_std`.
    pub fn standardized(&self, entity_std: f64, relation_std: f64) -> Self {
        let mut out = self.clone();
        for m in std::iter::once(&mut out.entity_x).chain(&mut out.entity_layers) {
            standardize_columns(m, entity_std);
        }
        for m in std::iter::once(&mut out.relation_x).chain(&mut out.relation_layers) {
            standardize_columns(m, relation_std);
        }
        out
    }

    pub fn combine(&self, lambda: &LambdaWeights<T>) -> Result<StaticEmbeddingTable<T>> {
        if lambda.len() != self.num_layers() {
            return Err(Error::Config(format!(
                "{} layer weights for {} layers",
                lambda.len(),
                self.num_layers()
            )));
        }
        let join = |x: &Array2<T>, layers: &[Array2<T>]| {
            let dx = x.ncols();
            let mut out = Array2::zeros((x.nrows(), self.dim()));
            out.slice_mut(s![.., ..dx]).assign(x);
            for (l, &w) in lambda.as_slice().iter().enumerate() {
                out.slice_mut(s![.., dx..]).scaled_add(w, &layers[l]);
            }
            out
        };
        Ok(StaticEmbeddingTable {
            entities: join(&self.entity_x, &self.entity_layers),
            relations: join(&self.relation_x, &self.relation_layers),
            entity_counts: self.entity_counts.clone(),
            relation_counts: self.relation_counts.clone(),
        })
    }
}

/// One fixed vector per entity and per relation.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticEmbeddingTable<T> {
    pub entities: Array2<T>,
    pub relations: Array2<T>,
    pub entity_counts: Vec<usize>,
    pub relation_counts: Vec<usize>,
}

impl<T: Scalar> StaticEmbeddingTable<T> {
    pub fn dim(&self) -> usize {
        self.entities.ncols()
    }

    /// Column-wise standardized copy; see [`standardize_columns`].
    pub fn standardized(&self, entity_std: f64, relation_std: f64) -> Self {
        let mut out = self.clone();
        standardize_columns(&mut out.entities, entity_std);
        standardize_columns(&mut out.relations, relation_std);
        out
    }

    /// Aligns loaded vectors with `graph`'s vocabularies by surface string.
    pub fn from_named(
        graph: &KnowledgeGraph,
        entities: (&[String], &Array2<T>),
        relations: (&[String], &Array2<T>),
    ) -> Result<Self> {
        if entities.1.ncols() != relations.1.ncols() {
            return Err(Error::Vocabulary(format!(
                "entity vectors have dim {}, relation vectors {}",
                entities.1.ncols(),
                relations.1.ncols()
            )));
        }
        let align = |names: &[String], m: &Array2<T>, vocab: &crate::kg::Vocabulary, kind: &'static str| {
            let mut out = Array2::zeros((vocab.len(), m.ncols()));
            let mut found = vec![false; vocab.len()];
            for (name, row) in names.iter().zip(m.rows()) {
                if let Some(id) = vocab.get(name) {
                    out.row_mut(id as usize).assign(&row);
                    found[id as usize] = true;
                }
            }
            match found.iter().position(|f| !f) {
                Some(missing) => Err(Error::UnknownToken {
                    kind,
                    name: format!("{} (no exported vector)", vocab.name(missing as u32)),
                }),
                None => Ok(out),
            }
        };
        Ok(StaticEmbeddingTable {
            entities: align(entities.0, entities.1, graph.entities(), "entity")?,
            relations: align(relations.0, relations.1, graph.relations(), "relation")?,
            entity_counts: vec![0; graph.num_entities()],
            relation_counts: vec![0; graph.num_relations()],
        })
    }
}

const ENCODE_CHUNK: usize = 256;

/// Pools per-layer states over every position of `sequences`. Unobserved
/// entities fall back to `x = [emb(e), emb(eos)]`, unobserved relations to
/// `x = [0, emb(r)]`; their contextual parts are zero.
pub fn aggregate_layered<T: Scalar>(
    sequences: &[Vec<PairToken>],
    eos: RelationId,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<LayeredTable<T>> {
    for seq in sequences {
        check_vocab(seq, params)?;
    }
    let seqs: Vec<&[PairToken]> = sequences
        .iter()
        .filter(|s| !s.is_empty())
        .map(Vec::as_slice)
        .collect();
    let chunks: Vec<Vec<LayerStates<T>>> = seqs
        .par_chunks(ENCODE_CHUNK)
        .map(|chunk| encode(chunk, params, config))
        .collect::<Result<_>>()?;

    let (ne, nr) = (params.num_entities(), params.num_relations());
    let (dx, p, layers) = (config.input_dim(), config.projection_dim, config.num_layers);
    let mut table = LayeredTable {
        entity_x: Array2::zeros((ne, dx)),
        entity_layers: vec![Array2::zeros((ne, 2 * p)); layers],
        relation_x: Array2::zeros((nr, dx)),
        relation_layers: vec![Array2::zeros((nr, 2 * p)); layers],
        entity_counts: vec![0; ne],
        relation_counts: vec![0; nr],
    };
    for (seq, states) in seqs.iter().zip(chunks.iter().flatten()) {
        for (t, tok) in seq.iter().enumerate() {
            let (e, r) = (tok.entity as usize, tok.relation as usize);
            let x = states.x.row(t);
            let mut row = table.entity_x.row_mut(e);
            row += &x;
            let mut row = table.relation_x.row_mut(r);
            row += &x;
            for l in 0..layers {
                let h = states.contextual(t, l);
                let mut row = table.entity_layers[l].row_mut(e);
                row += &h;
                let mut row = table.relation_layers[l].row_mut(r);
                row += &h;
            }
            table.entity_counts[e] += 1;
            table.relation_counts[r] += 1;
        }
    }

    let de = config.entity_dim;
    for e in 0..ne {
        let n = table.entity_counts[e];
        if n == 0 {
            let mut x = table.entity_x.row_mut(e);
            x.slice_mut(s![..de]).assign(&params.entity_embedding.row(e));
            x.slice_mut(s![de..]).assign(&params.relation_embedding.row(eos as usize));
        } else {
            let inv = T::one() / T::of(n as f64);
            table.entity_x.row_mut(e).mapv_inplace(|v| v * inv);
            for l in &mut table.entity_layers {
                l.row_mut(e).mapv_inplace(|v| v * inv);
            }
        }
    }
    for r in 0..nr {
        let n = table.relation_counts[r];
        if n == 0 {
            table
                .relation_x
                .row_mut(r)
                .slice_mut(s![de..])
                .assign(&params.relation_embedding.row(r));
        } else {
            let inv = T::one() / T::of(n as f64);
            table.relation_x.row_mut(r).mapv_inplace(|v| v * inv);
            for l in &mut table.relation_layers {
                l.row_mut(r).mapv_inplace(|v| v * inv);
            }
        }
    }
    Ok(table)
}

pub fn aggregate_static<T: Scalar>(
    sequences: &[Vec<PairToken>],
    eos: RelationId,
    params: &ModelParams<T>,
    config: &ModelConfig,
    lambda: &LambdaWeights<T>,
) -> Result<StaticEmbeddingTable<T>> {
    aggregate_layered(sequences, eos, params, config)?.combine(lambda)
}

/// Writes `<count> <dim>` then `name v1 .. vdim` per row.
pub fn write_vectors<T: Scalar>(path: impl AsRef<Path>, names: &[String], vectors: &Array2<T>) -> Result<()> {
    let path = path.as_ref();
    if names.len() != vectors.nrows() {
        return Err(Error::Contract(format!(
            "{} names for {} vectors",
            names.len(),
            vectors.nrows()
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{} {}", vectors.nrows(), vectors.ncols()).map_err(io)?;
    for (name, row) in names.iter().zip(vectors.rows()) {
        if name.chars().any(char::is_whitespace) {
            return Err(Error::Vocabulary(format!("surface `{name}` contains whitespace")));
        }
        write!(out, "{name}").map_err(io)?;
        for v in row {
            write!(out, " {v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn parse_vectors<T: Scalar>(text: &str, source: &str) -> Result<(Vec<String>, Array2<T>)> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse().map_err(|_| err(1, format!("bad header `{header}`"))))
        .collect::<Result<_>>()?;
    let [count, dim] = dims[..] else {
        return Err(err(1, format!("bad header `{header}`")));
    };
    let mut names = Vec::with_capacity(count);
    let mut data = Array2::zeros((count, dim));
    for k in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| err(k + 2, format!("expected {count} vectors, found {k}")))?;
        let mut fields = line.split(' ');
        names.push(fields.next().unwrap_or_default().to_string());
        let values: Vec<T> = fields
            .map(|f| f.parse::<T>().map_err(|_| err(k + 2, format!("bad value `{f}`"))))
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(err(k + 2, format!("expected {dim} values, found {}", values.len())));
        }
        data.row_mut(k).assign(&Array1::from(values));
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(err(count + 2, "more vectors than the header declares".into()));
    }
    Ok((names, data))
}

pub fn read_vectors<T: Scalar>(path: impl AsRef<Path>) -> Result<(Vec<String>, Array2<T>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vectors(&text, &path.display().to_string())
}

/// `<prefix>.entities.vec` and `<prefix>.relations.vec`.
pub fn export_paths(prefix: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let prefix = prefix.as_ref().as_os_str().to_owned();
    let mut e = prefix.clone();
    e.push(".entities.vec");
    let mut r = prefix;
    r.push(".relations.vec");
    (PathBuf::from(e), PathBuf::from(r))
}

pub fn export_embeddings<T: Scalar>(
    table: &StaticEmbeddingTable<T>,
    entity_names: &[String],
    relation_names: &[String],
    prefix: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf)> {
    let (ep, rp) = export_paths(prefix);
    write_vectors(&ep, entity_names, &table.entities)?;
    write_vectors(&rp, relation_names, &table.relations)?;
    Ok((ep, rp))
}
