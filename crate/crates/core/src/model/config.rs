use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Precision;

/// Hyperparameters of the bidirectional language model and its trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    /// LSTM cell size before projection.
    pub hidden_units: usize,
    pub projection_dim: usize,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub entity_dim: usize,
    pub relation_dim: usize,
    pub dropout: f64,
    pub residual: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 4,
            hidden_units: 512,
            projection_dim: 32,
            clip_lo: -3.0,
            clip_hi: 3.0,
            entity_dim: 32,
            relation_dim: 32,
            dropout: 0.1,
            residual: true,
            batch_size: 1024,
            learning_rate: 1e-3,
            epochs: 200,
            seed: rng::DEFAULT_SEED,
            precision: Precision::F32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("layers", self.num_layers),
            ("hidden", self.hidden_units),
            ("proj", self.projection_dim),
            ("entity-dim", self.entity_dim),
            ("relation-dim", self.relation_dim),
            ("batch", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.clip_lo.is_nan() || self.clip_hi.is_nan() || self.clip_lo >= self.clip_hi {
            return Err(Error::Config(format!(
                "clip range [{}, {}] is empty",
                self.clip_lo, self.clip_hi
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Width of the context-independent pair embedding `x_t`.
    pub fn input_dim(&self) -> usize {
        self.entity_dim + self.relation_dim
    }

    /// Width of a combined contextual vector `[x_t, sum_i lambda_i h_{t,i}]`.
    pub fn embedding_dim(&self) -> usize {
        self.input_dim() + 2 * self.projection_dim
    }

    /// Input width of layer `layer` (0-based).
    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim()
        } else {
            self.projection_dim
        }
    }

    /// Residual connections skip the first layer, whose input width differs.
    pub fn layer_has_residual(&self, layer: usize) -> bool {
        self.residual && layer > 0
    }

    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("layers", self.num_layers.to_string());
        m.insert("hidden", self.hidden_units.to_string());
        m.insert("proj", self.projection_dim.to_string());
        m.insert("clip-lo", format!("{:?}", self.clip_lo));
        m.insert("clip-hi", format!("{:?}", self.clip_hi));
        m.insert("entity-dim", self.entity_dim.to_string());
        m.insert("relation-dim", self.relation_dim.to_string());
        m.insert("dropout", format!("{:?}", self.dropout));
        m.insert("residual", self.residual.to_string());
        m.insert("batch", self.batch_size.to_string());
        m.insert("lr", format!("{:?}", self.learning_rate));
        m.insert("epochs", self.epochs.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("precision", self.precision.to_string());
        m
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = m
                .get(key)
                .ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`")))
        }
        let precision: String = get(pairs, "precision")?;
        let cfg = ModelConfig {
            num_layers: get(pairs, "layers")?,
            hidden_units: get(pairs, "hidden")?,
            projection_dim: get(pairs, "proj")?,
            clip_lo: get(pairs, "clip-lo")?,
            clip_hi: get(pairs, "clip-hi")?,
            entity_dim: get(pairs, "entity-dim")?,
            relation_dim: get(pairs, "relation-dim")?,
            dropout: get(pairs, "dropout")?,
            residual: get(pairs, "residual")?,
            batch_size: get(pairs, "batch")?,
            learning_rate: get(pairs, "lr")?,
            epochs: get(pairs, "epochs")?,
            seed: get(pairs, "seed")?,
            precision: precision.parse().map_err(Error::Config)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
