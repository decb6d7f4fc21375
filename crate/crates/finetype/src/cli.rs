//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use finetype_core::agreement::{annotator_agreement, consensus_all, disagreement_table, group_records};
use finetype_core::corpus::{Document, Split};
use finetype_core::evaluation::{micro_prf, pr_curve_auc, tune_threshold, KindFilter};
use finetype_core::features::FeatureConfig;
use finetype_core::inference::InferenceStrategy;
use finetype_core::models::NegativeStrategy;
use finetype_core::optim::OptimizerConfig;
use finetype_core::pruning::{CoarsePredictor, PruningConfig};
use finetype_core::{LabelSet, Taxonomy};

use crate::formats::{
    load_clusters, load_taxonomy, read_annotations, read_corpus, read_mapping, read_predictions, read_topics,
    write_clusters, write_corpus, write_mapping, write_predictions,
};
use crate::pipeline::{self, gold_for, predicted_mentions, prune_corpus, scored_mentions, ModelKind, TrainOptions};
use crate::{model_file, report, serve, store, synth};

#[derive(Parser, Debug)]
#[command(name = "finetype", version, about = "Fine-grained entity typing in context")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the type taxonomy as a tree.
    Taxonomy(TaxonomyArgs),
    /// Map resolver types to labels and prune the training split.
    Prune(PruneArgs),
    /// Train a local, flat or coarse model.
    Train(TrainArgs),
    /// Label mentions with a trained model.
    Predict(PredictArgs),
    /// Pick the threshold maximizing micro F1 on scored predictions.
    TuneThreshold(TuneArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Consensus, annotator agreement and disagreements.
    Agreement(AgreementArgs),
    /// Serve the annotation API and UI.
    Serve(ServeArgs),
    /// Write the synthetic benchmark corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct TaxonomyArgs {
    /// Taxonomy file; the bundled taxonomy when absent.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// TSV of resolver type id and taxonomy path.
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long)]
    pub sibling: bool,
    #[arg(long, requires = "coarse_model")]
    pub coarse: bool,
    #[arg(long, value_name = "MODEL")]
    pub coarse_model: Option<PathBuf>,
    /// Keep labels carried by at least K mentions of the document.
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u32).range(1..))]
    pub min_count: Option<u32>,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Local,
    Flat,
    Coarse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NegativesArg {
    All,
    Sibling,
    Depth,
}

impl From<NegativesArg> for NegativeStrategy {
    fn from(n: NegativesArg) -> Self {
        match n {
            NegativesArg::All => NegativeStrategy::All,
            NegativesArg::Sibling => NegativeStrategy::Sibling,
            NegativesArg::Depth => NegativeStrategy::Depth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InferenceArg {
    Independent,
    Conditional,
    Marginal,
}

impl From<InferenceArg> for InferenceStrategy {
    fn from(i: InferenceArg) -> Self {
        match i {
            InferenceArg::Independent => InferenceStrategy::Independent,
            InferenceArg::Conditional => InferenceStrategy::Conditional,
            InferenceArg::Marginal => InferenceStrategy::Marginal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Dev => Some(Split::Dev),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn unit_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("`{s}` is not a number in [0, 1]")),
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "local")]
    pub model: ModelArg,
    /// Negative examples for each local classifier.
    #[arg(long, value_enum)]
    pub negatives: Option<NegativesArg>,
    #[arg(long, default_value = "1.0", value_parser = positive_f64)]
    pub l2: f64,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Maps resolver types of training mentions that have no gold labels.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// TSV of document id and topic, for documents without one.
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, default_value = "500", value_parser = clap::value_parser!(u32).range(1..))]
    pub max_iterations: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "marginal")]
    pub inference: InferenceArg,
    #[arg(long, default_value = "0.5", value_parser = unit_f64)]
    pub threshold: f64,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Number of grid intervals on [0, 1].
    #[arg(long, default_value = "100", value_parser = clap::value_parser!(u32).range(1..))]
    pub grid_steps: u32,
    #[arg(long)]
    pub include_pronominal: bool,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub per_level: bool,
    #[arg(long)]
    pub auc: bool,
    #[arg(long)]
    pub include_pronominal: bool,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AgreementArgs {
    /// Annotation store (one JSON record per line).
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "2", value_parser = clap::value_parser!(u32).range(1..))]
    pub min_support: u32,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Corpus the annotations refer to; needed for --gold-out.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Write the annotated documents here with consensus labels as gold.
    #[arg(long, requires = "corpus")]
    pub gold_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value = "8080")]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, env = "FINETYPE_STORE", default_value = "annotations.jsonl")]
    pub store: PathBuf,
    /// Directory of built UI assets.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "20160101")]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Rejects flag combinations that clap cannot express.
fn check(cli: &Cli) -> Result<(), clap::Error> {
    if let Command::Train(t) = &cli.command {
        if t.model != ModelArg::Local && t.negatives.is_some() {
            return Err(Cli::command().error(
                ErrorKind::ArgumentConflict,
                "--negatives only applies to --model local",
            ));
        }
        if t.model == ModelArg::Coarse && t.mapping.is_some() {
            return Err(Cli::command().error(
                ErrorKind::ArgumentConflict,
                "--mapping does not apply to --model coarse",
            ));
        }
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv).and_then(|c| check(&c).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out).and_then(|_| out.flush().map_err(Into::into)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn filter(include_pronominal: bool) -> KindFilter {
    if include_pronominal {
        KindFilter::ALL
    } else {
        KindFilter::NAMED_AND_NOMINAL
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Taxonomy(a) => {
            let t = load_taxonomy(a.taxonomy.as_deref())?;
            out.write_all(report::taxonomy_tree(&t).as_bytes())?;
        }
        Command::Prune(a) => prune(a, out)?,
        Command::Train(a) => train(a, out)?,
        Command::Predict(a) => predict(a, out)?,
        Command::TuneThreshold(a) => {
            let t = load_taxonomy(a.taxonomy.as_deref())?;
            let preds = read_predictions(&a.predictions)?;
            let docs = read_corpus(&a.corpus, &t)?;
            let gold = gold_for(&preds, &docs)?;
            let scored = scored_mentions(&preds, &t)?;
            let choice = tune_threshold(&scored, &gold, &filter(a.include_pronominal), &t, a.grid_steps)?;
            if choice.all_empty {
                log::warn!("no grid threshold produces any label");
            }
            writeln!(out, "threshold {:.4}  f1 {:.2}", choice.threshold, 100.0 * choice.f1)?;
        }
        Command::Evaluate(a) => {
            let t = load_taxonomy(a.taxonomy.as_deref())?;
            let preds = read_predictions(&a.predictions)?;
            let docs = read_corpus(&a.corpus, &t)?;
            let gold = gold_for(&preds, &docs)?;
            let f = filter(a.include_pronominal);
            let report = micro_prf(&predicted_mentions(&preds, &t)?, &gold, &f, &t)?;
            let auc = if a.auc {
                Some(pr_curve_auc(&scored_mentions(&preds, &t)?, &gold, &f, &t)?.auc)
            } else {
                None
            };
            out.write_all(report::evaluation_table(&report, auc, a.per_level).as_bytes())?;
        }
        Command::Agreement(a) => {
            let t = load_taxonomy(a.taxonomy.as_deref())?;
            let (text, gold) = agreement(&a.annotations, a.min_support as usize, &t)?;
            if let (Some(corpus), Some(path)) = (&a.corpus, &a.gold_out) {
                let docs = consensus_corpus(read_corpus(corpus, &t)?, &gold)?;
                let mut f = create(path)?;
                write_corpus(&mut f, &docs, &t)?;
                f.flush()?;
            }
            match &a.output {
                Some(p) => {
                    let mut f = create(p)?;
                    f.write_all(text.as_bytes())?;
                    f.flush()?;
                }
                None => out.write_all(text.as_bytes())?,
            }
        }
        Command::Serve(a) => {
            let t = load_taxonomy(a.taxonomy.as_deref())?;
            let docs = read_corpus(&a.corpus, &t)?;
            let store = store::AnnotationStore::open(&a.store)?;
            let state = serve::AppState::new(t, docs, store, a.ui_dir);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve::run(state, SocketAddr::new(a.host, a.port)))?;
        }
        Command::Synth(a) => {
            let corpus = synth::generate(&synth::SynthConfig {
                seed: a.seed,
                ..synth::SynthConfig::default()
            });
            write_synth(&corpus, &a.out_dir)?;
            writeln!(
                out,
                "wrote {} documents and {} coarse documents to {}",
                corpus.documents.len(),
                corpus.coarse_documents.len(),
                a.out_dir.display()
            )?;
        }
    }
    Ok(())
}

/// Writes `corpus.jsonl`, `coarse.jsonl`, `mapping.tsv` and `clusters.tsv`.
pub fn write_synth(corpus: &synth::SynthCorpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let t = &corpus.taxonomy;
    let mut f = create(&dir.join("corpus.jsonl"))?;
    write_corpus(&mut f, &corpus.documents, t)?;
    f.flush()?;
    let mut f = create(&dir.join("coarse.jsonl"))?;
    write_corpus(&mut f, &corpus.coarse_documents, t)?;
    f.flush()?;
    let mut f = create(&dir.join("mapping.tsv"))?;
    write_mapping(&mut f, &corpus.mapping, t)?;
    f.flush()?;
    let mut f = create(&dir.join("clusters.tsv"))?;
    write_clusters(&mut f, &corpus.clusters)?;
    f.flush()?;
    Ok(())
}

fn prune(a: PruneArgs, out: &mut dyn Write) -> Result<()> {
    let t = load_taxonomy(a.taxonomy.as_deref())?;
    let docs = read_corpus(&a.corpus, &t)?;
    let mapping = read_mapping(&a.mapping, &t)?;
    let clusters = load_clusters(a.clusters.as_deref())?;
    let config = PruningConfig {
        sibling: a.sibling,
        coarse: a.coarse,
        min_count: a.min_count.is_some(),
        min_count_threshold: a.min_count.unwrap_or(2) as usize,
    };
    let coarse_bundle = match (&a.coarse_model, a.coarse) {
        (Some(p), true) => Some(model_file::load(p, &t)?),
        _ => None,
    };
    let tagger = match &coarse_bundle {
        Some(b) => match b.coarse_tagger(&clusters) {
            Some(tagger) => Some(tagger),
            None => bail!("{} is a {} model, not a coarse model", a.coarse_model.unwrap().display(), b.model.kind()),
        },
        None => None,
    };
    let pruned = prune_corpus(
        &docs,
        &mapping,
        &config,
        tagger.as_ref().map(|c| c as &(dyn CoarsePredictor + Sync)),
        &t,
    )?;
    let mut f = create(&a.out)?;
    write_corpus(&mut f, &pruned.documents, &t)?;
    f.flush()?;
    out.write_all(report::pruning_table(&pruned.stats).as_bytes())?;
    if pruned.unmapped > 0 {
        writeln!(out, "Unmapped resolver types: {}", pruned.unmapped)?;
    }
    Ok(())
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let t = load_taxonomy(a.taxonomy.as_deref())?;
    let docs = read_corpus(&a.corpus, &t)?;
    let clusters = load_clusters(a.clusters.as_deref())?;
    let mapping = a.mapping.as_deref().map(|p| read_mapping(p, &t)).transpose()?;
    let topics = a.topics.as_deref().map(read_topics).transpose()?;
    let kind = match a.model {
        ModelArg::Local => ModelKind::Local(a.negatives.unwrap_or(NegativesArg::Depth).into()),
        ModelArg::Flat => ModelKind::Flat,
        ModelArg::Coarse => ModelKind::Coarse,
    };
    let options = TrainOptions {
        kind,
        l2: a.l2,
        optimizer: OptimizerConfig {
            max_iterations: a.max_iterations as usize,
            ..OptimizerConfig::default()
        },
        features: FeatureConfig::default(),
        mapping: mapping.as_ref(),
        topic_file: topics.as_ref(),
    };
    let bundle = pipeline::train(&docs, &clusters, &options, &t)?;
    model_file::save(&a.out, &bundle, &t)?;
    writeln!(
        out,
        "trained {} model on {} instances with {} features",
        bundle.model.kind(),
        bundle.instances,
        bundle.dictionary.len()
    )?;
    Ok(())
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let t = load_taxonomy(a.taxonomy.as_deref())?;
    let bundle = model_file::load(&a.model, &t)?;
    let docs = read_corpus(&a.corpus, &t)?;
    let clusters = load_clusters(a.clusters.as_deref())?;
    let preds = pipeline::predict(&bundle, &docs, a.split.split(), &clusters, a.inference.into(), a.threshold, &t)?;
    match &a.out {
        Some(p) => {
            let mut f = create(p)?;
            write_predictions(&mut f, &preds)?;
            f.flush()?;
        }
        None => write_predictions(out, &preds)?,
    }
    Ok(())
}

type ConsensusGold = BTreeMap<(String, String), LabelSet>;

fn agreement(path: &Path, min_support: usize, t: &Taxonomy) -> Result<(String, ConsensusGold)> {
    let lines = read_annotations(path)?;
    let records = lines.iter().map(|l| l.to_record(t)).collect::<Result<Vec<_>>>()?;
    let votes = group_records(&records, t)?;
    let (sets, stats) = consensus_all(&votes, min_support, t)?;
    let mut text = report::consensus_summary(&stats, min_support);
    let reports = (1..=t.max_depth())
        .map(|d| annotator_agreement(&votes, &sets, d, t))
        .collect::<finetype_core::Result<Vec<_>>>()?;
    text.push_str(&report::agreement_table(&reports));
    text.push_str(&report::disagreement_table(&disagreement_table(&votes, &sets, t)?, t));
    let gold = votes
        .into_iter()
        .zip(sets)
        .map(|(v, s)| ((v.document, v.mention), s))
        .collect();
    Ok((text, gold))
}

/// The documents that have annotations, with each annotated mention's gold
/// labels replaced by its consensus.
fn consensus_corpus(docs: Vec<Document>, gold: &ConsensusGold) -> Result<Vec<Document>> {
    let known: BTreeSet<(&str, &str)> = docs
        .iter()
        .flat_map(|d| d.mentions.iter().map(move |m| (d.id.as_str(), m.id.as_str())))
        .collect();
    if let Some((d, m)) = gold.keys().find(|(d, m)| !known.contains(&(d.as_str(), m.as_str()))) {
        bail!("annotation for unknown mention `{m}` of document `{d}`");
    }
    let annotated: BTreeSet<&str> = gold.keys().map(|(d, _)| d.as_str()).collect();
    let mut out = Vec::new();
    for mut doc in docs.into_iter().filter(|d| annotated.contains(d.id.as_str())) {
        for m in &mut doc.mentions {
            if let Some(labels) = gold.get(&(doc.id.clone(), m.id.clone())) {
                m.gold_labels = Some(labels.clone());
            }
        }
        out.push(doc);
    }
    Ok(out)
}
