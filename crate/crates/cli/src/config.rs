//! Run configuration: a `key = value` file merged under command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use dolores::eval::{InitMode, ScorerKind, ScorerLoss, ScorerTrainConfig};
use dolores::model::ModelConfig;
use dolores::rng::{derive_seed, label, DEFAULT_SEED};
use dolores::walk::WalkConfig;
use dolores::Precision;

/// Which split `eval-link` ranks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Valid,
    Test,
}

impl FromStr for EvalSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "valid" => Ok(EvalSplit::Valid),
            "test" => Ok(EvalSplit::Test),
            _ => Err(format!("unknown split `{s}` (expected valid or test)")),
        }
    }
}

macro_rules! run_config {
    (
        optional { $($ofield:ident : $oty:ty, $ohelp:literal;)* }
        defaults { $($field:ident : $ty:ty = $default:expr, $help:literal;)* }
    ) => {
        /// Command-line overrides. Each flag is optional and wins over the
        /// same key in the config file.
        #[derive(clap::Args, Clone, Debug, Default)]
        pub struct Flags {
            /// `key = value` file supplying defaults for any flag
            #[arg(long, global = true, value_name = "PATH")]
            pub config: Option<PathBuf>,
            $( #[arg(long, global = true, help = $ohelp)] pub $ofield: Option<$oty>, )*
            $( #[arg(long, global = true, help = $help)] pub $field: Option<$ty>, )*
        }

        /// Flags merged over file keys over built-in defaults.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $( pub $ofield: Option<$oty>, )*
            $( pub $field: $ty, )*
        }

        /// Accepted config-file keys, underscore form.
        pub const KEYS: &[&str] = &[$(stringify!($ofield),)* $(stringify!($field),)*];

        fn merge(flags: &Flags, file: &FileKeys) -> Result<RunConfig> {
            Ok(RunConfig {
                $( $ofield: pick(flags.$ofield.clone(), file, stringify!($ofield))?, )*
                $( $field: pick(flags.$field.clone(), file, stringify!($field))?.unwrap_or_else(|| $default), )*
            })
        }
    };
}

run_config! {
    optional {
        train: PathBuf, "training triples (head, relation, tail TSV)";
        valid: PathBuf, "validation triples; a fourth label column marks classification data";
        test: PathBuf, "test triples; a fourth label column marks classification data";
        corpus: PathBuf, "walk corpus [default: <out>/corpus.txt]";
        checkpoint: PathBuf, "language model checkpoint [default: <out>/model.ckpt]";
        embeddings: PathBuf, "embedding file prefix [default: <out>/dolores]";
        dim: usize, "scorer dimension [default: embedding width]";
    }
    defaults {
        out: PathBuf = PathBuf::from("out"), "output directory";
        seed: u64 = DEFAULT_SEED, "global seed; every stage derives its own";
        threads: usize = 0, "worker threads, 0 for one per core";
        inverses: bool = true, "add inverse relations as walkable edges";
        p: f64 = 1.0, "walk return parameter";
        q: f64 = 1.0, "walk in-out parameter";
        walks_per_node: usize = 20, "walks started at each entity";
        walk_length: usize = 21, "tokens per chain (odd)";
        layers: usize = 4, "LSTM layers per direction";
        hidden: usize = 512, "LSTM cell size";
        proj: usize = 32, "projection size";
        clip: f64 = 3.0, "projection clip bound";
        entity_dim: usize = 32, "entity input embedding size";
        relation_dim: usize = 32, "relation input embedding size";
        dropout: f64 = 0.1, "dropout between layers";
        residual: bool = true, "residual connections above the first layer";
        batch: usize = 1024, "language model batch size";
        epochs: usize = 200, "language model epochs";
        lr: f64 = 1e-3, "language model learning rate";
        precision: Precision = Precision::F32, "f32 or f64";
        checkpoint_every: usize = 0, "also checkpoint every n epochs (0 never)";
        init: InitMode = InitMode::Dolores, "scorer initialization: dolores or random";
        scorer: ScorerKind = ScorerKind::Bilinear, "bilinear or translational";
        scorer_epochs: usize = 50, "scorer epochs";
        scorer_lr: f64 = 1e-2, "scorer learning rate";
        scorer_batch: usize = 128, "scorer batch size";
        negatives: usize = 1, "negatives per positive";
        margin: f64 = 1.0, "margin of the translational loss";
        standardize: bool = true, "rescale pretrained columns to the random-init spread";
        learn_lambda: bool = false, "learn layer weights from the checkpoint instead of reading vectors";
        eval_split: EvalSplit = EvalSplit::Test, "split ranked by eval-link: valid or test";
        separator: char = '/', "relation category separator for the breakdown";
    }
}

/// Key to `(source, line, raw value)`.
pub type FileKeys = BTreeMap<String, (String, usize, String)>;

fn pick<T>(flag: Option<T>, file: &FileKeys, key: &str) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        None => Ok(None),
        Some((source, line, raw)) => raw
            .parse()
            .map(Some)
            .map_err(|e| anyhow!("{source}:{line}: bad value `{raw}` for `{}`: {e}", display_key(key))),
    }
}

fn display_key(key: &str) -> String {
    key.replace('_', "-")
}

/// Parses `key = value` lines. `#` starts a comment; keys accept either
/// hyphens or underscores.
pub fn parse_config_text(text: &str, source: &str) -> Result<FileKeys> {
    let mut out = FileKeys::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{source}:{}: expected `key = value`", idx + 1))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            bail!("{source}:{}: unknown key `{}`", idx + 1, display_key(&key));
        }
        let entry = (source.to_string(), idx + 1, value.trim().to_string());
        if let Some(prev) = out.insert(key.clone(), entry) {
            bail!("{source}:{}: key `{}` already set on line {}", idx + 1, display_key(&key), prev.1);
        }
    }
    Ok(out)
}

/// Merges the optional config file under `flags`.
pub fn parse_config(file: Option<&Path>, flags: &Flags) -> Result<RunConfig> {
    let keys = match file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config_text(&text, &path.display().to_string())?
        }
        None => FileKeys::new(),
    };
    merge(flags, &keys)
}

impl RunConfig {
    /// Seed of one pipeline stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, &[label(stage)])
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus.clone().unwrap_or_else(|| self.out_path("corpus.txt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_path("model.ckpt"))
    }

    pub fn embeddings_prefix(&self) -> PathBuf {
        self.embeddings.clone().unwrap_or_else(|| self.out_path("dolores"))
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            p: self.p,
            q: self.q,
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
            seed: self.stage_seed("walk"),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            num_layers: self.layers,
            hidden_units: self.hidden,
            projection_dim: self.proj,
            clip_lo: -self.clip,
            clip_hi: self.clip,
            entity_dim: self.entity_dim,
            relation_dim: self.relation_dim,
            dropout: self.dropout,
            residual: self.residual,
            batch_size: self.batch,
            learning_rate: self.lr,
            epochs: self.epochs,
            seed: self.stage_seed("lm"),
            precision: self.precision,
        }
    }

    pub fn scorer_config(&self) -> ScorerTrainConfig {
        ScorerTrainConfig {
            negatives: self.negatives,
            loss: match self.scorer {
                ScorerKind::Translational => ScorerLoss::Margin(self.margin),
                ScorerKind::Bilinear => ScorerLoss::Logistic,
            },
            epochs: self.scorer_epochs,
            learning_rate: self.scorer_lr,
            batch_size: self.scorer_batch,
            seed: self.stage_seed("scorer-train"),
        }
    }
}

/// The value of a required field, or an error naming it.
pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| anyhow!("missing required field `{}` (flag --{0} or config key)", display_key(key)))
}
