use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dolores::embed::{aggregate_layered, aggregate_static, export_embeddings, export_paths, read_vectors, LambdaWeights, StaticEmbeddingTable};
use dolores::eval::report::{breakdown_tsv, classification_tsv, metrics_table, metrics_tsv, ranks_tsv};
use dolores::eval::{
    link_prediction_eval, random_init_std, rank_breakdown_by_category, train_scorer, triple_classification_eval, InitMode,
    ScorerInit, ScorerModel,
};
use dolores::kg::{build_dataset, parse_labeled_triples, parse_triples, DatasetSplit, KnowledgeGraph, RawTriple, Triple};
use dolores::model::checkpoint::peek_precision;
use dolores::model::gradcheck::{gradient_check, GradCheckConfig};
use dolores::model::{chains_to_sequences, train_with, Checkpoint};
use dolores::walk::{generate_corpus, read_corpus, write_corpus};
use dolores::{Precision, Scalar};
use log::info;

use crate::config::{require, EvalSplit, RunConfig};

/// One evaluation split: its positives plus, for classification data,
/// every labelled triple.
struct Split {
    positives: Vec<RawTriple>,
    labeled: Option<Vec<(RawTriple, bool)>>,
}

fn load_split(path: &Path) -> Result<Split> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let source = path.display().to_string();
    let columns = text.lines().find(|l| !l.trim().is_empty()).map_or(3, |l| l.split('\t').count());
    if columns == 4 {
        let labeled = parse_labeled_triples(&text, &source)?;
        let positives = labeled.iter().filter(|(_, y)| *y).map(|(t, _)| t.clone()).collect();
        Ok(Split {
            positives,
            labeled: Some(labeled),
        })
    } else {
        Ok(Split {
            positives: parse_triples(&text, &source)?,
            labeled: None,
        })
    }
}

struct Data {
    graph: KnowledgeGraph,
    split: DatasetSplit,
    valid: Option<Split>,
    test: Option<Split>,
}

fn load_data(cfg: &RunConfig) -> Result<Data> {
    let train = load_split(require(&cfg.train, "train")?)?;
    if train.labeled.is_some() {
        bail!("the training split cannot carry labels");
    }
    let valid = cfg.valid.as_deref().map(load_split).transpose()?;
    let test = cfg.test.as_deref().map(load_split).transpose()?;
    let pos = |s: &Option<Split>| s.as_ref().map_or(&[][..], |s| s.positives.as_slice()).to_vec();
    let (graph, split) = build_dataset(&train.positives, &pos(&valid), &pos(&test), cfg.inverses)?;
    Ok(Data {
        graph,
        split,
        valid,
        test,
    })
}

fn create_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))
}

fn write(path: PathBuf, text: String) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    create_out(cfg)?;
    let g = &data.graph;
    write(cfg.out_path("entities.txt"), lines(g.entities().names()))?;
    write(cfg.out_path("relations.txt"), lines(g.relations().names()))?;
    println!(
        "entities {}\nrelations {} ({} base)\ntrain {}\nvalid {}\ntest {}\nduplicates dropped {}",
        g.num_entities(),
        g.num_relations(),
        g.num_base_relations(),
        data.split.train.len(),
        data.split.valid.len(),
        data.split.test.len(),
        g.duplicates_dropped()
    );
    Ok(())
}

fn lines(names: &[String]) -> String {
    names.iter().map(|n| format!("{n}\n")).collect()
}

pub fn walk(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    create_out(cfg)?;
    let corpus = generate_corpus(&data.graph, &cfg.walk_config())?;
    let path = cfg.corpus_path();
    write_corpus(&path, &data.graph, &corpus.chains)?;
    info!("{} chains ({} truncated) -> {}", corpus.chains.len(), corpus.truncated, path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    match cfg.precision {
        Precision::F32 => train_as::<f32>(cfg),
        Precision::F64 => train_as::<f64>(cfg),
    }
}

fn train_as<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    create_out(cfg)?;
    let chains = read_corpus(cfg.corpus_path(), &data.graph)?;
    let seqs = chains_to_sequences(&chains, &data.graph);
    let model = cfg.model_config();
    let checkpoint = |params| Checkpoint {
        config: model.clone(),
        entities: data.graph.entities().names().to_vec(),
        relations: data.graph.relations().names().to_vec(),
        params,
    };
    let path = cfg.checkpoint_path();
    let mut losses = String::from("epoch\tloss\n");
    let outcome = train_with::<T, _>(&seqs, data.graph.num_entities(), data.graph.num_relations(), &model, |s, params| {
        losses.push_str(&format!("{}\t{:.6}\n", s.epoch, s.mean_loss));
        if cfg.checkpoint_every > 0 && s.epoch % cfg.checkpoint_every == 0 {
            checkpoint(params.clone()).save(&path)?;
        }
        Ok(())
    })?;
    if outcome.skipped > 0 {
        info!("skipped {} chain(s) too short to train on", outcome.skipped);
    }
    checkpoint(outcome.params).save(&path)?;
    write(cfg.out_path("loss.tsv"), losses)
}

fn load_checkpoint<T: Scalar>(cfg: &RunConfig, graph: &KnowledgeGraph) -> Result<Checkpoint<T>> {
    let path = cfg.checkpoint_path();
    let ck = Checkpoint::<T>::load(&path)?;
    if ck.entities != graph.entities().names() || ck.relations != graph.relations().names() {
        bail!("{} was trained on a different vocabulary", path.display());
    }
    Ok(ck)
}

fn checkpoint_precision(cfg: &RunConfig) -> Result<Precision> {
    let path = cfg.checkpoint_path();
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(peek_precision(&bytes)?)
}

pub fn export(cfg: &RunConfig) -> Result<()> {
    match checkpoint_precision(cfg)? {
        Precision::F32 => export_as::<f32>(cfg),
        Precision::F64 => export_as::<f64>(cfg),
    }
}

fn export_as<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let ck = load_checkpoint::<T>(cfg, &data.graph)?;
    let chains = read_corpus(cfg.corpus_path(), &data.graph)?;
    let seqs = chains_to_sequences(&chains, &data.graph);
    let lambda = LambdaWeights::uniform(ck.config.num_layers);
    let table = aggregate_static(&seqs, data.graph.eos_relation(), &ck.params, &ck.config, &lambda)?;
    if let Some(parent) = cfg.embeddings_prefix().parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let (e, r) = export_embeddings(&table, data.graph.entities().names(), data.graph.relations().names(), cfg.embeddings_prefix())?;
    info!("wrote {} and {}", e.display(), r.display());
    Ok(())
}

fn fit_scorer<T: Scalar>(cfg: &RunConfig, data: &Data) -> Result<ScorerModel<T>> {
    let g = &data.graph;
    let (ne, nr) = (g.num_entities(), g.num_relations());
    let seed = cfg.stage_seed("scorer");
    let mut model = match cfg.init {
        InitMode::Random => {
            let dim = cfg.dim.unwrap_or_else(|| cfg.model_config().embedding_dim());
            ScorerModel::new(cfg.scorer, dim, ne, nr, ScorerInit::Random, seed)?
        }
        InitMode::Dolores if cfg.learn_lambda => {
            let ck = load_checkpoint::<T>(cfg, g)?;
            let chains = read_corpus(cfg.corpus_path(), g)?;
            let mut table = aggregate_layered(&chains_to_sequences(&chains, g), g.eos_relation(), &ck.params, &ck.config)?;
            let dim = cfg.dim.unwrap_or(table.dim());
            if cfg.standardize {
                table = table.standardized(random_init_std(ne, dim), random_init_std(nr, dim));
            }
            ScorerModel::new(cfg.scorer, dim, ne, nr, ScorerInit::Layered(&table), seed)?
        }
        InitMode::Dolores => {
            let (ep, rp) = export_paths(cfg.embeddings_prefix());
            let (en, ev) = read_vectors::<T>(&ep)?;
            let (rn, rv) = read_vectors::<T>(&rp)?;
            let mut table = StaticEmbeddingTable::from_named(g, (&en, &ev), (&rn, &rv))?;
            let dim = cfg.dim.unwrap_or(table.dim());
            if cfg.standardize {
                table = table.standardized(random_init_std(ne, dim), random_init_std(nr, dim));
            }
            ScorerModel::new(cfg.scorer, dim, ne, nr, ScorerInit::Static(&table), seed)?
        }
    };
    let losses = train_scorer(&mut model, &data.split.train, &cfg.scorer_config())?;
    let mut text = String::from("epoch\tloss\n");
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&format!("{}\t{l:.6}\n", i + 1));
    }
    write(cfg.out_path("scorer_loss.tsv"), text)?;
    Ok(model)
}

pub fn eval_link(cfg: &RunConfig) -> Result<()> {
    match cfg.precision {
        Precision::F32 => eval_link_as::<f32>(cfg),
        Precision::F64 => eval_link_as::<f64>(cfg),
    }
}

fn eval_link_as<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let targets = match cfg.eval_split {
        EvalSplit::Valid => (&data.split.valid, "valid"),
        EvalSplit::Test => (&data.split.test, "test"),
    };
    if targets.0.is_empty() {
        bail!("missing required field `{}` (eval-link needs a non-empty split)", targets.1);
    }
    create_out(cfg)?;
    let model = fit_scorer::<T>(cfg, &data)?;
    let result = link_prediction_eval(&model.scorer(), targets.0, &data.split.filter)?;
    let g = &data.graph;
    write(cfg.out_path("link_metrics.tsv"), metrics_tsv(&result))?;
    write(cfg.out_path("link_ranks.tsv"), ranks_tsv(&result, g.entities().names(), g.relations().names()))?;
    let rows = rank_breakdown_by_category(&result, g.relations().names(), cfg.separator);
    write(cfg.out_path("link_breakdown.tsv"), breakdown_tsv(&rows))?;
    print!("{}", metrics_table(&result));
    Ok(())
}

pub fn eval_triple(cfg: &RunConfig) -> Result<()> {
    match cfg.precision {
        Precision::F32 => eval_triple_as::<f32>(cfg),
        Precision::F64 => eval_triple_as::<f64>(cfg),
    }
}

fn labeled<'a>(split: &'a Option<Split>, key: &str) -> Result<&'a [(RawTriple, bool)]> {
    match split {
        Some(Split { labeled: Some(l), .. }) => Ok(l),
        Some(_) => bail!("`{key}` needs a fourth label column for eval-triple"),
        None => bail!("missing required field `{key}` (flag --{key} or config key)"),
    }
}

fn encode_labeled(graph: &KnowledgeGraph, pairs: &[(RawTriple, bool)]) -> Result<Vec<(Triple, bool)>> {
    let raw: Vec<RawTriple> = pairs.iter().map(|(t, _)| t.clone()).collect();
    let ids = graph.encode(&raw)?;
    Ok(ids.into_iter().zip(pairs.iter().map(|p| p.1)).collect())
}

fn eval_triple_as<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let valid = encode_labeled(&data.graph, labeled(&data.valid, "valid")?)?;
    let test = encode_labeled(&data.graph, labeled(&data.test, "test")?)?;
    create_out(cfg)?;
    let model = fit_scorer::<T>(cfg, &data)?;
    let report = triple_classification_eval(&model.scorer(), &valid, &test)?;
    write(cfg.out_path("classification.tsv"), classification_tsv(&report, data.graph.relations().names()))?;
    println!("accuracy {:.4} ({}/{})", report.accuracy, report.correct, report.total);
    Ok(())
}

/// Runs the finite-difference suite; fails when any block disagrees.
pub fn grad_check() -> Result<()> {
    let report = gradient_check(&GradCheckConfig::default())?;
    for b in &report.blocks {
        println!("{}\t{}\t{:.3e}", b.name, b.coordinates, b.max_rel_error);
    }
    println!("max relative error {:.3e} over {} coordinates", report.max_rel_error, report.coordinates);
    if report.max_rel_error >= 1e-4 {
        bail!("gradient check failed: {:.3e} >= 1e-4", report.max_rel_error);
    }
    Ok(())
}
