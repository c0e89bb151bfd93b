//! The `higraph` command line.
//!
//! Every subcommand writes JSON (or DOT for `graph --dot`) to stdout or
//! `--out`. Failures print `{"error": {"kind", "message"}}` to stderr and
//! exit with 2 for usage errors or 1 for data and model errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::chem::{fragment, parse_smiles, Molecule, SmilesError};
use crate::data::{
    self, corpus_stats, CorpusFormat, CorpusStats, DataError, DtiRecord, Split, SplitManifest,
    SplitSpec,
};
use crate::hiergraph::{build_with_layout, HierGraph, Layout};
use crate::metrics::EvalResult;
use crate::model::{tokenize, Ablation, AttentionReport, DrugGraph, ModelError, Pair};
use crate::train::{self, CheckpointMeta, Dataset, EpochRecord, TrainConfig, TrainError};

#[derive(Debug, Parser)]
#[command(
    name = "higraph",
    version,
    about = "Hierarchical graph drug-target interaction prediction"
)]
pub struct Cli {
    /// Random seed (overrides the config file's `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Sum the centre node's own state over in-edges instead of the neighbour's.
    #[arg(long, global = true)]
    pub strict_eq2: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split molecules into motifs.
    Fragment(FragmentArgs),
    /// Build the hierarchical graph of a molecule.
    Graph(GraphArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labelled corpus.
    Eval(EvalArgs),
    /// Score drug-target pairs.
    Predict(PredictArgs),
    /// Attention weights for one drug-target pair.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct FragmentArgs {
    #[arg(long, required_unless_present = "input", conflicts_with = "input")]
    pub smiles: Option<String>,
    /// File with one SMILES per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub smiles: String,
    /// Emit the parsed molecule (atoms, bonds, ring flags) instead of the graph.
    #[arg(long, conflicts_with = "dot")]
    pub dump_molecule: bool,
    /// Emit Graphviz DOT instead of JSON.
    #[arg(long)]
    pub dot: bool,
    /// Graph layout of this ablation.
    #[arg(long, default_value = "none")]
    pub ablation: Ablation,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled corpus (TSV or whitespace separated `smiles sequence label`).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation corpus for fixed-file training.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Held-out test corpus (fixed-file and carve20 modes).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// ratio | kfold:K | carve20. Defaults to fixed files when --val is given, else ratio.
    #[arg(long)]
    pub split: Option<SplitSpec>,
    /// none | no_ff | no_hi | no_hc | no_ml.
    #[arg(long)]
    pub ablation: Option<Ablation>,
    /// Maximum epochs; also caps the early-stopping patience.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Checkpoint path; k-fold runs append `.fold<i>`.
    #[arg(long, default_value = "model.hgdt")]
    pub checkpoint: PathBuf,
    /// Line-delimited JSON training log.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Split manifest (JSON index lists).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// TSV of `smiles<TAB>sequence`, optionally with a third label column.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub smiles: String,
    #[arg(long)]
    pub sequence: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: SmilesError,
    },
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: TrainError,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Smiles(_) | CliError::Line { .. } => "smiles",
            CliError::Data(_) => "data",
            CliError::Model(_) => "model",
            CliError::Train(TrainError::Config { .. }) => "config",
            CliError::Train(TrainError::Checkpoint(_)) => "checkpoint",
            CliError::Train(_) => "train",
            CliError::Io { .. } => "io",
            CliError::Checkpoint { .. } => "checkpoint",
            CliError::Usage(_) => "usage",
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn error_json(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let detail = e.to_string();
            let message = detail
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                stderr,
                "{}",
                error_json("usage", message.trim_start_matches("error: "))
            );
            return 2;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_json(e.kind(), &e.to_string()));
            e.exit_code()
        }
    }
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    let res = match out {
        Some(p) => std::fs::write(p, text).map_err(|source| (p.to_path_buf(), source)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| (PathBuf::from("<stdout>"), source)),
    };
    res.map_err(|(path, source)| CliError::Io { path, source })
}

fn emit_json<T: Serialize>(
    out: Option<&Path>,
    stdout: &mut dyn Write,
    value: &T,
) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    emit(out, stdout, &text)
}

fn load_checkpoint(path: &Path) -> Result<train::LoadedCheckpoint, CliError> {
    train::load_checkpoint(path).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Fragment(a) => cmd_fragment(a, stdout),
        Command::Graph(a) => cmd_graph(a, stdout),
        Command::Train(a) => cmd_train(cli, a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Predict(a) => cmd_predict(a, stdout),
        Command::Explain(a) => cmd_explain(a, stdout),
    }
}

#[derive(Debug, Serialize)]
pub struct FragmentOutput {
    pub smiles: String,
    pub motifs: Vec<Vec<usize>>,
    /// Atom index pairs of the cleaved bonds.
    pub cut_bonds: Vec<[usize; 2]>,
}

pub fn fragment_output(smiles: &str) -> Result<FragmentOutput, SmilesError> {
    let m = parse_smiles(smiles)?;
    let p = fragment(&m);
    Ok(FragmentOutput {
        smiles: smiles.to_string(),
        cut_bonds: p.cut_pairs(&m),
        motifs: p.motifs,
    })
}

fn cmd_fragment(a: &FragmentArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    match (&a.smiles, &a.input) {
        (Some(s), _) => emit_json(a.out.as_deref(), stdout, &fragment_output(s)?),
        (None, Some(path)) => {
            let text = read(path)?;
            let mut all = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let s = line.split_whitespace().next().unwrap_or("");
                if s.is_empty() || s.starts_with('#') {
                    continue;
                }
                all.push(fragment_output(s).map_err(|source| CliError::Line {
                    line: i + 1,
                    source,
                })?);
            }
            emit_json(a.out.as_deref(), stdout, &all)
        }
        (None, None) => Err(CliError::Usage(
            "one of --smiles or --input is required".into(),
        )),
    }
}

#[derive(Debug, Serialize)]
pub struct GraphOutput<'a> {
    pub smiles: &'a str,
    pub node_count: usize,
    pub edge_count: usize,
    #[serde(flatten)]
    pub graph: &'a HierGraph,
}

#[derive(Debug, Serialize)]
struct MoleculeDump<'a> {
    smiles: &'a str,
    atoms: &'a [crate::chem::Atom],
    bonds: &'a [crate::chem::Bond],
    ring_atoms: Vec<bool>,
    ring_bonds: Vec<bool>,
}

fn graph_for(m: &Molecule, layout: Layout) -> HierGraph {
    let p = fragment(m);
    build_with_layout(m, &p, layout).expect("fragment yields a valid partition")
}

fn cmd_graph(a: &GraphArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let m = parse_smiles(&a.smiles)?;
    let out = a.out.as_deref();
    if a.dump_molecule {
        return emit_json(
            out,
            stdout,
            &MoleculeDump {
                smiles: &a.smiles,
                atoms: m.atoms(),
                bonds: m.bonds(),
                ring_atoms: m.atoms().iter().map(|x| x.in_ring).collect(),
                ring_bonds: m.bonds().iter().map(|b| b.in_ring).collect(),
            },
        );
    }
    let g = graph_for(&m, a.ablation.layout());
    if a.dot {
        return emit(out, stdout, &g.to_dot(&m));
    }
    emit_json(
        out,
        stdout,
        &GraphOutput {
            smiles: &a.smiles,
            node_count: g.node_count(),
            edge_count: g.edge_count(),
            graph: &g,
        },
    )
}

fn load_records(path: &Path) -> Result<Vec<DtiRecord>, CliError> {
    Ok(data::load_corpus(path, CorpusFormat::Auto)?)
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub epochs: usize,
    pub train: Option<EvalResult>,
    pub val: Option<EvalResult>,
    pub test: Option<EvalResult>,
    pub dropped: usize,
}

#[derive(Debug, Serialize)]
pub struct TrainOutput {
    pub config: TrainConfig,
    pub split: String,
    pub corpus: CorpusStats,
    pub runs: Vec<RunSummary>,
}

fn metrics_or_none(model: &crate::model::Model, ds: Option<&Dataset>) -> Option<EvalResult> {
    ds.and_then(|d| train::evaluate(model, d).ok())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_train(cli: &Cli, a: &TrainArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if cli.strict_eq2 {
        config.strict_eq2 = true;
    }
    if let Some(ab) = a.ablation {
        config.ablation = ab;
    }
    if let Some(e) = a.epochs {
        config.max_epochs = e;
        config.patience = config.patience.min(e);
    }
    config.validate()?;

    let records = load_records(&a.train)?;
    let spec = match (a.split, &a.val) {
        (Some(s), _) => s,
        (None, Some(_)) => SplitSpec::FixedFiles,
        (None, None) => SplitSpec::Ratio811,
    };
    let layout = config.ablation.layout();
    // (train, val, test) record lists per run
    let mut runs: Vec<(Vec<DtiRecord>, Vec<DtiRecord>, Vec<DtiRecord>)> = Vec::new();
    let mut folds: Vec<Split> = Vec::new();
    match spec {
        SplitSpec::FixedFiles => {
            let val = a
                .val
                .as_ref()
                .ok_or_else(|| CliError::Usage("fixed-file training needs --val".into()))?;
            let test = a
                .test
                .as_deref()
                .map(load_records)
                .transpose()?
                .unwrap_or_default();
            runs.push((records.clone(), load_records(val)?, test));
        }
        SplitSpec::Ratio811 => {
            let s = data::split_ratio(records.len(), config.seed)?;
            runs.push((
                data::select(&records, &s.train),
                data::select(&records, &s.val),
                data::select(&records, &s.test),
            ));
            folds.push(s);
        }
        SplitSpec::TrainCarve20 => {
            let test_path = a
                .test
                .as_ref()
                .ok_or_else(|| CliError::Usage("carve20 needs --test".into()))?;
            let s = data::split_carve20(records.len(), config.seed)?;
            runs.push((
                data::select(&records, &s.train),
                data::select(&records, &s.val),
                load_records(test_path)?,
            ));
            folds.push(s);
        }
        SplitSpec::KFold { k } => {
            for s in data::split_kfold(records.len(), k, config.seed)? {
                runs.push((
                    data::select(&records, &s.train),
                    data::select(&records, &s.val),
                    data::select(&records, &s.test),
                ));
                folds.push(s);
            }
        }
    }
    if let Some(m) = &a.manifest {
        let manifest = SplitManifest {
            spec: spec.to_string(),
            seed: config.seed,
            records: records.len(),
            folds: folds.clone(),
        };
        emit(Some(m), stdout, &manifest.to_json())?;
    }

    let mut history = String::new();
    let mut summaries = Vec::new();
    let n_runs = runs.len();
    for (i, (tr, va, te)) in runs.iter().enumerate() {
        let train_ds = Dataset::featurize(tr, layout)?;
        let val_ds = Dataset::featurize(va, layout)?;
        let test_ds = if te.is_empty() {
            None
        } else {
            Some(Dataset::featurize(te, layout)?)
        };
        let mut events: Vec<EpochRecord> = Vec::new();
        let out = train::train_with(&train_ds, &val_ds, &config, |r| {
            events.push(r.clone());
            true
        })?;
        for line in train::history_jsonl(&events).lines() {
            let mut v: serde_json::Value = serde_json::from_str(line).expect("own json");
            if n_runs > 1 {
                v["fold"] = i.into();
            }
            history.push_str(&v.to_string());
            history.push('\n');
        }
        let path = if n_runs > 1 {
            with_suffix(&a.checkpoint, &format!(".fold{i}"))
        } else {
            a.checkpoint.clone()
        };
        let train_metrics = metrics_or_none(&out.model, Some(&train_ds));
        let val_metrics = metrics_or_none(&out.model, Some(&val_ds));
        let meta = CheckpointMeta {
            best_epoch: out.best_epoch,
            train: train_metrics.clone(),
            val: val_metrics.clone(),
        };
        train::save_checkpoint(&path, &out.model, Some(&out.optimizer), &config, &meta)?;
        summaries.push(RunSummary {
            checkpoint: path,
            best_epoch: out.best_epoch,
            epochs: out.history.len(),
            train: train_metrics,
            val: val_metrics,
            test: metrics_or_none(&out.model, test_ds.as_ref()),
            dropped: train_ds.dropped + val_ds.dropped + test_ds.as_ref().map_or(0, |d| d.dropped),
        });
    }
    let history_path = a
        .history
        .clone()
        .unwrap_or_else(|| with_suffix(&a.checkpoint, ".history.jsonl"));
    emit(Some(&history_path), stdout, &history)?;
    emit_json(
        a.out.as_deref(),
        stdout,
        &TrainOutput {
            config,
            split: spec.to_string(),
            corpus: corpus_stats(&records),
            runs: summaries,
        },
    )
}

#[derive(Debug, Serialize)]
pub struct EvalOutput {
    #[serde(flatten)]
    pub metrics: EvalResult,
    pub dropped: usize,
}

fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let records = load_records(&a.data)?;
    let ds = Dataset::featurize(&records, ck.config.ablation.layout())?;
    let metrics = train::evaluate(&ck.model, &ds)?;
    emit_json(
        a.out.as_deref(),
        stdout,
        &EvalOutput {
            metrics,
            dropped: ds.dropped,
        },
    )
}

#[derive(Debug, Serialize)]
pub struct Prediction {
    pub line: usize,
    pub smiles: String,
    pub sequence: String,
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn cmd_predict(a: &PredictArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let layout = ck.config.ablation.layout();
    let text = read(&a.input)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() < 2 || fields.len() > 3 {
            return Err(DataError::Parse {
                line: i + 1,
                message: format!(
                    "expected smiles, sequence and an optional label, found {} fields",
                    fields.len()
                ),
            }
            .into());
        }
        if out.is_empty() && fields[0].eq_ignore_ascii_case("smiles") {
            continue;
        }
        let label = fields.get(2).and_then(|l| match *l {
            "0" => Some(0),
            "1" => Some(1),
            _ => None,
        });
        let scored = parse_smiles(fields[0])
            .map_err(ModelError::from)
            .and_then(|m| {
                let toks = tokenize(fields[1])?;
                let g = DrugGraph::from_molecule(&m, layout);
                Ok(ck.model.predict(&[Pair {
                    drug: &g,
                    tokens: &toks.tokens,
                }])?[0])
            });
        let (probability, error) = match scored {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        };
        out.push(Prediction {
            line: i + 1,
            smiles: fields[0].to_string(),
            sequence: fields[1].to_string(),
            probability,
            label,
            error,
        });
    }
    emit_json(a.out.as_deref(), stdout, &out)
}

#[derive(Debug, Serialize)]
pub struct ExplainOutput {
    pub smiles: String,
    pub sequence: String,
    #[serde(flatten)]
    pub report: AttentionReport,
}

fn cmd_explain(a: &ExplainArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let g = ck.model.prepare_drug(&a.smiles)?;
    let toks = tokenize(&a.sequence)?;
    let report = ck.model.explain(Pair {
        drug: &g,
        tokens: &toks.tokens,
    })?;
    emit_json(
        a.out.as_deref(),
        stdout,
        &ExplainOutput {
            smiles: a.smiles.clone(),
            sequence: a.sequence.clone(),
            report,
        },
    )
}
