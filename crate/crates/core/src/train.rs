//! Training loop, model selection and evaluation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::parse_smiles;
use crate::data::{DataError, DtiRecord};
use crate::hiergraph::Layout;
use crate::metrics::{self, EvalResult, MetricsError};
use crate::model::{
    apply_running_updates, tokenize, Ablation, DrugGraph, Mode, Model, ModelConfig, ModelError,
    Pair, BCE_EPS, TRIGRAM_VOCAB,
};
use crate::nd::{Adam, AdamConfig, Checkpoint, CheckpointError, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("all {n} records were dropped (unparseable SMILES or sequences shorter than 3)")]
    AllRecordsDropped { n: usize },
    #[error("training needs at least 2 usable pairs, got {0}")]
    TooFewTrainingPairs(usize),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Hyperparameters. Parsed from `key = value` lines; see [`TrainConfig::KEYS`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    pub gin_layers: usize,
    pub conv_kernel: usize,
    pub aff_ratio: usize,
    pub embed_rows: usize,
    pub ablation: Ablation,
    pub strict_eq2: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let a = AdamConfig::default();
        TrainConfig {
            d: m.d,
            gin_layers: m.gin_layers,
            conv_kernel: m.conv_kernel,
            aff_ratio: m.aff_ratio,
            embed_rows: m.embed_rows,
            ablation: m.ablation,
            strict_eq2: m.strict_eq2,
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 15] = [
        "d",
        "gin_layers",
        "conv_kernel",
        "aff_ratio",
        "embed_rows",
        "ablation",
        "strict_eq2",
        "lr",
        "beta1",
        "beta2",
        "eps",
        "batch_size",
        "max_epochs",
        "patience",
        "seed",
    ];

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            gin_layers: self.gin_layers,
            conv_kernel: self.conv_kernel,
            aff_ratio: self.aff_ratio,
            embed_rows: self.embed_rows,
            ablation: self.ablation,
            strict_eq2: self.strict_eq2,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model_config().validate()?;
        let bad = |message: String| Err(TrainError::Config { line: 0, message });
        if self.patience > self.max_epochs {
            return bad(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(
                "batch_size must be at least 2 (batch normalization needs two rows)".into(),
            );
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        Ok(())
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "d" => self.d = parse_value(key, value)?,
            "gin_layers" => self.gin_layers = parse_value(key, value)?,
            "conv_kernel" => self.conv_kernel = parse_value(key, value)?,
            "aff_ratio" => self.aff_ratio = parse_value(key, value)?,
            "embed_rows" => self.embed_rows = parse_value(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "strict_eq2" => self.strict_eq2 = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "beta1" => self.beta1 = parse_value(key, value)?,
            "beta2" => self.beta2 = parse_value(key, value)?,
            "eps" => self.eps = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Reads `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<TrainConfig, TrainError> {
        let mut c = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| TrainError::Config {
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            c.set(k.trim(), v.trim()).map_err(err)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainConfig, TrainError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        TrainConfig::parse(&text)
    }

    /// The config as `key = value` lines, readable by [`TrainConfig::parse`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let v = serde_json::to_value(self).expect("config serializes");
        for k in Self::KEYS {
            let field = &v[k];
            let text = match field.as_str() {
                Some(s) => s.to_string(),
                None => field.to_string(),
            };
            let _ = writeln!(s, "{k} = {text}");
        }
        s
    }
}

/// One featurized pair: index of its drug graph, trigram tokens and label.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub drug: usize,
    pub tokens: Vec<usize>,
    pub label: u8,
}

/// Featurized records; identical SMILES share one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub drugs: Vec<DrugGraph>,
    pub examples: Vec<Example>,
    /// Position of each example in the source record list.
    pub source: Vec<usize>,
    pub dropped: usize,
}

impl Dataset {
    /// Featurizes records for `layout`, dropping (and counting) those whose
    /// SMILES fails to parse or whose sequence is shorter than 3 residues.
    pub fn featurize(records: &[DtiRecord], layout: Layout) -> Result<Dataset, TrainError> {
        let mut by_smiles: HashMap<&str, Option<usize>> = HashMap::new();
        let mut drugs = Vec::new();
        let mut examples = Vec::with_capacity(records.len());
        let mut source = Vec::with_capacity(records.len());
        let mut dropped = 0;
        for (i, r) in records.iter().enumerate() {
            let slot = *by_smiles.entry(r.smiles.as_str()).or_insert_with(|| {
                match parse_smiles(&r.smiles) {
                    Ok(m) => {
                        drugs.push(DrugGraph::from_molecule(&m, layout));
                        Some(drugs.len() - 1)
                    }
                    Err(e) => {
                        warn!(
                            "record {}: dropping unparseable SMILES `{}`: {e}",
                            i + 1,
                            r.smiles
                        );
                        None
                    }
                }
            });
            let tokens = tokenize(&r.sequence);
            match (slot, tokens) {
                (Some(drug), Ok(t)) => {
                    examples.push(Example {
                        drug,
                        tokens: t.tokens,
                        label: r.label,
                    });
                    source.push(i);
                }
                _ => dropped += 1,
            }
        }
        if dropped > 0 {
            info!("dropped {dropped} of {} records", records.len());
        }
        if examples.is_empty() {
            return Err(TrainError::AllRecordsDropped { n: records.len() });
        }
        Ok(Dataset {
            drugs,
            examples,
            source,
            dropped,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn pairs(&self, idx: &[usize]) -> Vec<Pair<'_>> {
        idx.iter()
            .map(|&i| Pair {
                drug: &self.drugs[self.examples[i].drug],
                tokens: &self.examples[i].tokens,
            })
            .collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label).collect()
    }
}

/// Consecutive chunks of `order`; a trailing chunk of one is merged into the
/// previous chunk.
pub fn batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("len > 1");
        out.last_mut().expect("len > 1").extend(last);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch training losses.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Absent when the validation labels are all one class.
    pub val_auc: Option<f64>,
    pub val_aupr: Option<f64>,
    pub improved: bool,
    pub steps: u64,
}

impl EpochRecord {
    /// Better validation AUC wins; equal AUC falls back to lower loss.
    fn beats(&self, best: &EpochRecord) -> bool {
        match (self.val_auc, best.val_auc) {
            (Some(a), Some(b)) if a != b => a > b,
            _ => self.val_loss < best.val_loss,
        }
    }
}

/// JSON lines, one `epoch` event per record.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    let mut s = String::new();
    for r in history {
        let mut v = serde_json::to_value(r).expect("record serializes");
        v["event"] = "epoch".into();
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    /// Optimizer state at the best validation epoch.
    pub optimizer: Adam,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Probabilities for every example, evaluated in batches.
pub fn predict_dataset(
    model: &Model,
    data: &Dataset,
    batch_size: usize,
) -> Result<Vec<f64>, TrainError> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        out.extend(model.predict(&data.pairs(chunk))?);
    }
    Ok(out)
}

pub fn evaluate(model: &Model, data: &Dataset) -> Result<EvalResult, TrainError> {
    let scores = predict_dataset(model, data, 64)?;
    Ok(EvalResult::compute(&scores, &data.labels())?)
}

fn validation_record(
    model: &Model,
    val: &Dataset,
    epoch: usize,
    train_loss: f64,
    steps: u64,
) -> Result<EpochRecord, TrainError> {
    let scores = predict_dataset(model, val, 64)?;
    let labels = val.labels();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let auc = match metrics::roc_auc(&scores, &labels) {
        Ok(a) => Some(a),
        Err(MetricsError::SingleClassOnly { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(EpochRecord {
        epoch,
        train_loss,
        val_loss: metrics::bce(&scores, &y, BCE_EPS),
        val_auc: auc,
        val_aupr: auc.and(metrics::average_precision(&scores, &labels).ok()),
        improved: false,
        steps,
    })
}

/// One pass over `train` in seeded random order. Returns the mean batch loss.
pub fn train_epoch(
    model: &mut Model,
    optimizer: &mut Adam,
    train: &Dataset,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let batches = batches(&order, batch_size);
    let mut total = 0.0;
    for b in &batches {
        let pairs = train.pairs(b);
        let labels: Vec<f64> = b
            .iter()
            .map(|&i| f64::from(train.examples[i].label))
            .collect();
        model.params.zero_grad();
        let mut fwd = model.arch.forward(&model.params, &pairs, Mode::Train)?;
        let loss = fwd.bce(&labels)?;
        total += fwd.tape.value(loss).item()?;
        fwd.tape.backward(loss, &mut model.params)?;
        optimizer.step(&mut model.params);
        apply_running_updates(&mut model.params, &fwd.updates);
    }
    Ok(total / batches.len() as f64)
}

/// Trains with Adam on mean BCE, keeping the parameters of the epoch with the
/// best validation AUC and stopping after `patience` epochs without
/// improvement.
pub fn train(
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(train, val, config, |_| true)
}

/// As [`train`], with `on_epoch` called on every record as it is produced;
/// returning `false` stops training after that epoch.
pub fn train_with(
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> bool,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train.len() < 2 {
        return Err(TrainError::TooFewTrainingPairs(train.len()));
    }
    let mut model = Model::new(&config.model_config(), config.seed)?;
    let mut optimizer = Adam::new(config.adam_config());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, Model, Adam)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let loss = train_epoch(
            &mut model,
            &mut optimizer,
            train,
            config.batch_size,
            &mut rng,
        )?;
        let mut rec = validation_record(&model, val, epoch, loss, optimizer.step)?;
        let best_rec = best.as_ref().map(|(i, _, _)| &history[*i]);
        rec.improved = best_rec.is_none_or(|b| rec.beats(b));
        if rec.improved {
            best = Some((history.len(), model.clone(), optimizer.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        info!(
            "epoch {epoch}: train_loss {:.5} val_loss {:.5} val_auc {:?}{}",
            rec.train_loss,
            rec.val_loss,
            rec.val_auc,
            if rec.improved { " *" } else { "" }
        );
        let go_on = on_epoch(&rec);
        history.push(rec);
        if !go_on || stale >= config.patience {
            break;
        }
    }
    let (best_idx, model, optimizer) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        optimizer,
        best_epoch: history[best_idx].epoch,
        history,
    })
}

/// Metrics stored alongside a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub best_epoch: usize,
    pub train: Option<EvalResult>,
    pub val: Option<EvalResult>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    optimizer: Option<&Adam>,
    config: &TrainConfig,
    meta: &CheckpointMeta,
) -> Result<(), TrainError> {
    let ckpt = Checkpoint {
        config: config.to_kv(),
        params: model.params.clone(),
        optimizer: optimizer.cloned(),
        metadata: serde_json::to_string(meta).map_err(|e| TrainError::Metadata(e.to_string()))?,
    };
    ckpt.save(path)?;
    Ok(())
}

pub struct LoadedCheckpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub optimizer: Option<Adam>,
    pub meta: Option<CheckpointMeta>,
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LoadedCheckpoint, TrainError> {
    let ckpt = Checkpoint::load(path)?;
    let config = TrainConfig::parse(&ckpt.config)?;
    let model = Model::from_parts(&config.model_config(), ckpt.params)?;
    let meta = if ckpt.metadata.is_empty() {
        None
    } else {
        Some(
            serde_json::from_str(&ckpt.metadata)
                .map_err(|e| TrainError::Metadata(e.to_string()))?,
        )
    };
    Ok(LoadedCheckpoint {
        model,
        config,
        optimizer: ckpt.optimizer,
        meta,
    })
}

/// A small configuration suited to the synthetic fixture and smoke runs.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        d: 16,
        gin_layers: 2,
        conv_kernel: 5,
        aff_ratio: 2,
        embed_rows: TRIGRAM_VOCAB,
        batch_size: 8,
        lr: 3e-3,
        ..TrainConfig::default()
    }
}
