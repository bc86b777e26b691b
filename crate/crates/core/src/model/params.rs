use ndarray::{Array1, Array2};
use rand::Rng;

use crate::model::config::ModelConfig;
use crate::rng;
use crate::scalar::Scalar;

/// Weights of one projected LSTM layer. Gate rows are ordered
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<T> {
    /// `4H x in`
    pub w_input: Array2<T>,
    /// `4H x P`
    pub w_hidden: Array2<T>,
    /// `4H`
    pub bias: Array1<T>,
    /// `P x H`
    pub w_proj: Array2<T>,
}

impl<T: Scalar> LstmLayer<T> {
    pub fn zeros(input_dim: usize, hidden: usize, proj: usize) -> Self {
        LstmLayer {
            w_input: Array2::zeros((4 * hidden, input_dim)),
            w_hidden: Array2::zeros((4 * hidden, proj)),
            bias: Array1::zeros(4 * hidden),
            w_proj: Array2::zeros((proj, hidden)),
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.w_proj.ncols()
    }

    pub fn projection_dim(&self) -> usize {
        self.w_proj.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.ncols()
    }

    fn init<R: Rng>(input_dim: usize, hidden: usize, proj: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input_dim, hidden, proj);
        let scale = 1.0 / (hidden as f64).sqrt();
        fill_uniform(&mut layer.w_input, scale, rng);
        fill_uniform(&mut layer.w_hidden, scale, rng);
        fill_uniform(&mut layer.w_proj, scale, rng);
        for f in hidden..2 * hidden {
            layer.bias[f] = T::one();
        }
        layer
    }

    pub fn set_zero(&mut self) {
        self.w_input.fill(T::zero());
        self.w_hidden.fill(T::zero());
        self.bias.fill(T::zero());
        self.w_proj.fill(T::zero());
    }
}

fn fill_uniform<T: Scalar, D: ndarray::Dimension, R: Rng>(
    a: &mut ndarray::Array<T, D>,
    scale: f64,
    rng: &mut R,
) {
    a.mapv_inplace(|_| T::of(rng.gen_range(-scale..scale)));
}

/// All learnable parameters. The embedding tables and softmax heads are
/// single instances that both directions read and write.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// `|E| x d_e`
    pub entity_embedding: Array2<T>,
    /// `|R| x d_r`
    pub relation_embedding: Array2<T>,
    pub forward: Vec<LstmLayer<T>>,
    pub backward: Vec<LstmLayer<T>>,
    /// `|E| x P`
    pub softmax_entity_w: Array2<T>,
    pub softmax_entity_b: Array1<T>,
    /// `|R| x P`
    pub softmax_relation_w: Array2<T>,
    pub softmax_relation_b: Array1<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &ModelConfig, num_entities: usize, num_relations: usize) -> Self {
        let layers = |_| {
            (0..config.num_layers)
                .map(|l| {
                    LstmLayer::zeros(
                        config.layer_input_dim(l),
                        config.hidden_units,
                        config.projection_dim,
                    )
                })
                .collect()
        };
        ModelParams {
            entity_embedding: Array2::zeros((num_entities, config.entity_dim)),
            relation_embedding: Array2::zeros((num_relations, config.relation_dim)),
            forward: layers(()),
            backward: layers(()),
            softmax_entity_w: Array2::zeros((num_entities, config.projection_dim)),
            softmax_entity_b: Array1::zeros(num_entities),
            softmax_relation_w: Array2::zeros((num_relations, config.projection_dim)),
            softmax_relation_b: Array1::zeros(num_relations),
        }
    }

    /// Seeded initialization: embeddings uniform in (-0.1, 0.1), LSTM and
    /// softmax weights uniform in (-1/sqrt(fan), 1/sqrt(fan)), forget-gate
    /// bias 1, other biases 0.
    pub fn init(config: &ModelConfig, num_entities: usize, num_relations: usize) -> Self {
        let mut rng = rng::stream(config.seed, &[rng::label("init")]);
        let mut p = Self::zeros(config, num_entities, num_relations);
        fill_uniform(&mut p.entity_embedding, 0.1, &mut rng);
        fill_uniform(&mut p.relation_embedding, 0.1, &mut rng);
        for dir in 0..2 {
            let layers: Vec<_> = (0..config.num_layers)
                .map(|l| {
                    LstmLayer::init(
                        config.layer_input_dim(l),
                        config.hidden_units,
                        config.projection_dim,
                        &mut rng,
                    )
                })
                .collect();
            if dir == 0 {
                p.forward = layers;
            } else {
                p.backward = layers;
            }
        }
        let s = 1.0 / (config.projection_dim as f64).sqrt();
        fill_uniform(&mut p.softmax_entity_w, s, &mut rng);
        fill_uniform(&mut p.softmax_relation_w, s, &mut rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, a| a.fill(T::zero()));
        z
    }

    pub fn num_entities(&self) -> usize {
        self.entity_embedding.nrows()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_embedding.nrows()
    }

    /// Visits every block in canonical order with its name.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(&str, &'a [T])) {
        f("entity_embedding", slice(&self.entity_embedding));
        f("relation_embedding", slice(&self.relation_embedding));
        for (dir, layers) in [("forward", &self.forward), ("backward", &self.backward)] {
            for (i, l) in layers.iter().enumerate() {
                f(&format!("{dir}.{i}.w_input"), slice(&l.w_input));
                f(&format!("{dir}.{i}.w_hidden"), slice(&l.w_hidden));
                f(&format!("{dir}.{i}.bias"), l.bias.as_slice().expect("contiguous"));
                f(&format!("{dir}.{i}.w_proj"), slice(&l.w_proj));
            }
        }
        f("softmax_entity_w", slice(&self.softmax_entity_w));
        f("softmax_entity_b", self.softmax_entity_b.as_slice().expect("contiguous"));
        f("softmax_relation_w", slice(&self.softmax_relation_w));
        f("softmax_relation_b", self.softmax_relation_b.as_slice().expect("contiguous"));
    }

    pub fn visit_mut<'a>(&'a mut self, mut f: impl FnMut(&str, &'a mut [T])) {
        f("entity_embedding", slice_mut(&mut self.entity_embedding));
        f("relation_embedding", slice_mut(&mut self.relation_embedding));
        for (dir, layers) in [("forward", &mut self.forward), ("backward", &mut self.backward)] {
            for (i, l) in layers.iter_mut().enumerate() {
                f(&format!("{dir}.{i}.w_input"), slice_mut(&mut l.w_input));
                f(&format!("{dir}.{i}.w_hidden"), slice_mut(&mut l.w_hidden));
                f(&format!("{dir}.{i}.bias"), l.bias.as_slice_mut().expect("contiguous"));
                f(&format!("{dir}.{i}.w_proj"), slice_mut(&mut l.w_proj));
            }
        }
        f("softmax_entity_w", slice_mut(&mut self.softmax_entity_w));
        f("softmax_entity_b", self.softmax_entity_b.as_slice_mut().expect("contiguous"));
        f("softmax_relation_w", slice_mut(&mut self.softmax_relation_w));
        f("softmax_relation_b", self.softmax_relation_b.as_slice_mut().expect("contiguous"));
    }

    /// `(name, rows, cols)` of every block, in `visit` order. Vectors have
    /// one row.
    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let mut push2 = |name: String, a: &Array2<T>| out.push((name, a.nrows(), a.ncols()));
        push2("entity_embedding".into(), &self.entity_embedding);
        push2("relation_embedding".into(), &self.relation_embedding);
        let mut rows = Vec::new();
        for (dir, layers) in [("forward", &self.forward), ("backward", &self.backward)] {
            for (i, l) in layers.iter().enumerate() {
                rows.push((format!("{dir}.{i}.w_input"), l.w_input.nrows(), l.w_input.ncols()));
                rows.push((format!("{dir}.{i}.w_hidden"), l.w_hidden.nrows(), l.w_hidden.ncols()));
                rows.push((format!("{dir}.{i}.bias"), 1, l.bias.len()));
                rows.push((format!("{dir}.{i}.w_proj"), l.w_proj.nrows(), l.w_proj.ncols()));
            }
        }
        out.extend(rows);
        out.push((
            "softmax_entity_w".into(),
            self.softmax_entity_w.nrows(),
            self.softmax_entity_w.ncols(),
        ));
        out.push(("softmax_entity_b".into(), 1, self.softmax_entity_b.len()));
        out.push((
            "softmax_relation_w".into(),
            self.softmax_relation_w.nrows(),
            self.softmax_relation_w.ncols(),
        ));
        out.push(("softmax_relation_b".into(), 1, self.softmax_relation_b.len()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(|_, s| n += s.len());
        n
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        let mut blocks = Vec::new();
        other.visit(|_, s| blocks.push(s));
        let mut it = blocks.into_iter();
        self.visit_mut(|_, dst| {
            let src = it.next().expect("same layout");
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        });
    }

    /// Block names in `visit` order.
    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(|n, _| names.push(n.to_string()));
        names
    }
}

fn slice<T>(a: &Array2<T>) -> &[T] {
    a.as_slice().expect("standard layout")
}

fn slice_mut<T>(a: &mut Array2<T>) -> &mut [T] {
    a.as_slice_mut().expect("standard layout")
}
