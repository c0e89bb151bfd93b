//! The drug-target interaction network.
//!
//! [`Architecture`] records which parameters exist and how they are wired;
//! the values live in a separate [`ParamStore`] so that gradients can be
//! checked by perturbing the store while the architecture stays borrowed.

mod drug;
mod interaction;
mod layers;
mod target;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{parse_smiles, SmilesError};
use crate::hiergraph::{GraphError, Layout};
use crate::nd::check::{check_param, GradCheck};
use crate::nd::{ParamStore, Tape, Tensor, TensorError, Var};

pub use drug::{DrugEmbedding, DrugEncoder, DrugGraph, GinLayer};
pub use interaction::{
    attn_level, drug_attention_vector, fuse_protein, threshold_note, AttentionParams,
    AttentionReport, Classifier,
};
pub use layers::{apply_running_updates, BatchNorm, Conv1d, Linear, Mode, RunningUpdate};
pub use target::{tokenize, Aff, Fusion, ProteinTokens, TargetEncoder, ALPHABET, TRIGRAM_VOCAB};

use drug::{split_levels, DrugBatch};
use layers::{Ctx, Init};

/// Probability clamp used by the loss.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("protein sequence has {len} residues; at least 3 are needed")]
    SequenceTooShort { len: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("empty batch")]
    EmptyBatch,
}

/// Architectural ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// The last conv layer, projected to `d`, replaces multi-scale fusion.
    NoFf,
    /// No hierarchical attention: `[H_g ; mean(H_P)]` feeds the classifier.
    NoHi,
    /// Atoms only; `H_g` is the mean atom embedding.
    NoHc,
    /// No motif level; atoms feed the global node directly.
    NoMl,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::None,
        Ablation::NoFf,
        Ablation::NoHi,
        Ablation::NoHc,
        Ablation::NoMl,
    ];

    pub fn layout(self) -> Layout {
        match self {
            Ablation::NoHc => Layout::AtomsOnly,
            Ablation::NoMl => Layout::NoMotifs,
            _ => Layout::Full,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoFf => "no_ff",
            Ablation::NoHi => "no_hi",
            Ablation::NoHc => "no_hc",
            Ablation::NoMl => "no_ml",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!("unknown ablation `{s}` (expected none, no_ff, no_hi, no_hc, no_ml)")
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width; must be a multiple of 8.
    pub d: usize,
    pub gin_layers: usize,
    pub conv_kernel: usize,
    /// Bottleneck reduction inside the fusion blocks; must divide `d / 4`.
    pub aff_ratio: usize,
    /// Rows of the trigram table; fewer than 15625 hashes trigrams by modulo.
    pub embed_rows: usize,
    pub ablation: Ablation,
    pub strict_eq2: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            gin_layers: 3,
            conv_kernel: 15,
            aff_ratio: 4,
            embed_rows: TRIGRAM_VOCAB,
            ablation: Ablation::None,
            strict_eq2: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d < 8 || !self.d.is_multiple_of(8) {
            return bad(format!("d = {} must be a positive multiple of 8", self.d));
        }
        if self.gin_layers < 2 {
            return bad(format!(
                "gin_layers = {} must be at least 2",
                self.gin_layers
            ));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return bad(format!("conv_kernel = {} must be odd", self.conv_kernel));
        }
        if self.aff_ratio == 0 || !(self.d / 4).is_multiple_of(self.aff_ratio) {
            return bad(format!(
                "aff_ratio = {} must divide d / 4 = {}",
                self.aff_ratio,
                self.d / 4
            ));
        }
        if self.embed_rows == 0 {
            return bad("embed_rows must be positive".into());
        }
        Ok(())
    }
}

/// One drug-target pair as model input.
#[derive(Clone, Copy, Debug)]
pub struct Pair<'a> {
    pub drug: &'a DrugGraph,
    pub tokens: &'a [usize],
}

/// Tape variables belonging to one pair of a batch.
#[derive(Clone, Debug)]
struct PairVars {
    /// `(level, Attn)` for each level present.
    attn: Vec<(char, Var)>,
    softmax: Vec<Var>,
    b_p: Option<Var>,
}

/// A recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    /// `B x 1` probabilities.
    pub probs: Var,
    pub updates: Vec<RunningUpdate>,
    pairs: Vec<PairVars>,
    motifs: Vec<Vec<Vec<usize>>>,
}

impl Forward {
    pub fn probabilities(&self) -> Vec<f64> {
        self.tape.value(self.probs).data().to_vec()
    }

    /// Mean binary cross-entropy of the batch.
    pub fn bce(&mut self, labels: &[f64]) -> Result<Var, TensorError> {
        self.tape.bce(self.probs, labels, BCE_EPS)
    }

    /// Attention report for pair `i`, if the model has attention.
    pub fn report(&self, i: usize) -> Option<AttentionReport> {
        let p = &self.pairs[i];
        let b_p = p.b_p?;
        let value = |v: Var| self.tape.value(v);
        let level = |c: char| p.attn.iter().find(|(l, _)| *l == c).map(|&(_, v)| value(v));
        let rows = |t: Option<&Tensor>| t.map(Tensor::to_rows).unwrap_or_default();
        Some(AttentionReport {
            b_p: value(b_p).data().to_vec(),
            b_a: level('a').map(drug_attention_vector).unwrap_or_default(),
            b_m: level('m').map(drug_attention_vector).unwrap_or_default(),
            attn_a: rows(level('a')),
            attn_m: rows(level('m')),
            attn_g: rows(level('g')),
            level_softmax: p
                .softmax
                .iter()
                .map(|&s| value(s).data().to_vec())
                .collect(),
            motifs: self.motifs[i].clone(),
            prediction: value(self.probs).data()[i],
            threshold_note: interaction::threshold_note(p.softmax.len()),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub drug: DrugEncoder,
    pub target: TargetEncoder,
    pub attention: Option<AttentionParams>,
    pub classifier: Classifier,
}

impl Architecture {
    /// Registers every parameter in `store`, initialized from `seed`.
    pub fn build(
        config: &ModelConfig,
        store: &mut ParamStore,
        seed: u64,
    ) -> Result<Architecture, ModelError> {
        config.validate()?;
        let d = config.d;
        let mut init = Init {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let drug = DrugEncoder::new(&mut init, d, config.gin_layers, config.strict_eq2)?;
        let target = TargetEncoder::new(
            &mut init,
            d,
            config.conv_kernel,
            config.aff_ratio,
            config.embed_rows,
            config.ablation != Ablation::NoFf,
        )?;
        let attention = if config.ablation == Ablation::NoHi {
            None
        } else {
            Some(AttentionParams::new(&mut init, d)?)
        };
        let classifier = Classifier::new(&mut init, d)?;
        Ok(Architecture {
            config: config.clone(),
            drug,
            target,
            attention,
            classifier,
        })
    }

    /// Featurizes a SMILES string for this architecture's graph layout.
    pub fn prepare_drug(&self, smiles: &str) -> Result<DrugGraph, ModelError> {
        let m = parse_smiles(smiles)?;
        Ok(DrugGraph::from_molecule(&m, self.config.ablation.layout()))
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        pairs: &[Pair],
        mode: Mode,
    ) -> Result<Forward, ModelError> {
        if pairs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if let Some(p) = pairs.iter().find(|p| p.tokens.is_empty()) {
            return Err(ModelError::SequenceTooShort {
                len: p.tokens.len(),
            });
        }
        let mut cx = Ctx::new(store, mode);
        let drugs: Vec<&DrugGraph> = pairs.iter().map(|p| p.drug).collect();
        let batch = DrugBatch::new(&drugs);
        let h = self.drug.forward(&mut cx, &batch)?;
        let proteins: Vec<&[usize]> = pairs.iter().map(|p| p.tokens).collect();
        let segments: Vec<usize> = proteins.iter().map(|p| p.len()).collect();
        let h_p = self.target.forward(&mut cx, &proteins)?.h_p;

        let h_g = match self.config.ablation.layout() {
            Layout::AtomsOnly => {
                let sizes: Vec<usize> = drugs.iter().map(|d| d.node_count()).collect();
                cx.tape.segment_mean_rows(h, &sizes)?
            }
            _ => {
                let idx: Vec<usize> = batch
                    .global
                    .iter()
                    .map(|g| g.expect("global node"))
                    .collect();
                cx.tape.gather_rows(h, &idx)?
            }
        };

        let mut pair_vars = Vec::with_capacity(pairs.len());
        let f_p = match &self.attention {
            None => {
                pair_vars.resize(
                    pairs.len(),
                    PairVars {
                        attn: Vec::new(),
                        softmax: Vec::new(),
                        b_p: None,
                    },
                );
                cx.tape.segment_mean_rows(h_p, &segments)?
            }
            Some(att) => {
                let layout = self.config.ablation.layout();
                let mut levels = vec![('a', att.w_a)];
                if layout == Layout::Full {
                    levels.push(('m', att.w_m));
                }
                if layout != Layout::AtomsOnly {
                    levels.push(('g', att.w_g));
                }
                let mut projected = Vec::with_capacity(levels.len());
                for &(c, w) in &levels {
                    let wv = cx.p(w);
                    projected.push((c, cx.tape.matmul(h_p, wv)?));
                }
                let mut rows = Vec::with_capacity(pairs.len());
                let mut start = 0;
                for (i, &len) in segments.iter().enumerate() {
                    let hp_i = cx.tape.slice_rows(h_p, start, len)?;
                    let off = batch.offsets[i];
                    let mut attn = Vec::with_capacity(levels.len());
                    for &(c, pw) in &projected {
                        let (lo, n) = match c {
                            'a' => (off, batch.atoms[i]),
                            'm' => (off + batch.atoms[i], batch.motifs[i]),
                            _ => (batch.global[i].expect("global node"), 1),
                        };
                        let hx = cx.tape.slice_rows(h, lo, n)?;
                        let pw_i = cx.tape.slice_rows(pw, start, len)?;
                        attn.push((c, interaction::attn_from_projected(&mut cx.tape, pw_i, hx)?));
                    }
                    let vars: Vec<Var> = attn.iter().map(|&(_, v)| v).collect();
                    let (f, b_p, softmax) =
                        interaction::fuse_protein_vars(&mut cx.tape, hp_i, &vars)?;
                    rows.push(f);
                    pair_vars.push(PairVars {
                        attn,
                        softmax,
                        b_p: Some(b_p),
                    });
                    start += len;
                }
                cx.tape.concat_rows(&rows)?
            }
        };

        let z = cx.tape.concat_cols(&[h_g, f_p])?;
        let probs = self.classifier.forward(&mut cx, z)?;
        let Ctx { tape, updates, .. } = cx;
        Ok(Forward {
            tape,
            probs,
            updates,
            pairs: pair_vars,
            motifs: drugs
                .iter()
                .map(|d| d.graph.motif_members().to_vec())
                .collect(),
        })
    }

    /// Mean BCE of `pairs` against `labels` under the current store values.
    pub fn loss(
        &self,
        store: &ParamStore,
        pairs: &[Pair],
        labels: &[f64],
        mode: Mode,
    ) -> Result<f64, ModelError> {
        let mut fwd = self.forward(store, pairs, mode)?;
        let l = fwd.bce(labels)?;
        Ok(fwd.tape.value(l).item()?)
    }

    /// Final drug embeddings split by level.
    pub fn encode_drug(
        &self,
        store: &ParamStore,
        drug: &DrugGraph,
    ) -> Result<DrugEmbedding, ModelError> {
        let h = self.drug.layer_outputs(store, drug)?.pop().expect("h0");
        Ok(split_levels(&h, &drug.graph))
    }
}

/// Parameters plus wiring.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Model, ModelError> {
        let mut params = ParamStore::new();
        let arch = Architecture::build(config, &mut params, seed)?;
        Ok(Model { arch, params })
    }

    /// Rebuilds the wiring for `config` and adopts `params`, which must hold
    /// exactly the parameters (names, order and shapes) the wiring registers.
    pub fn from_parts(config: &ModelConfig, params: ParamStore) -> Result<Model, ModelError> {
        let fresh = Model::new(config, 0)?;
        if fresh.params.len() != params.len() {
            return Err(ModelError::InvalidConfig(format!(
                "configuration registers {} parameters, checkpoint holds {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for ((_, want), (_, got)) in fresh.params.iter().zip(params.iter()) {
            if want.name != got.name
                || want.value.shape() != got.value.shape()
                || want.trainable != got.trainable
            {
                return Err(ModelError::InvalidConfig(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        Ok(Model {
            arch: fresh.arch,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn prepare_drug(&self, smiles: &str) -> Result<DrugGraph, ModelError> {
        self.arch.prepare_drug(smiles)
    }

    pub fn forward(&self, pairs: &[Pair], mode: Mode) -> Result<Forward, ModelError> {
        self.arch.forward(&self.params, pairs, mode)
    }

    /// Interaction probabilities in evaluation mode.
    pub fn predict(&self, pairs: &[Pair]) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward(pairs, Mode::Eval)?.probabilities())
    }

    /// Attention report for a single pair in evaluation mode.
    pub fn explain(&self, pair: Pair) -> Result<AttentionReport, ModelError> {
        self.forward(&[pair], Mode::Eval)?
            .report(0)
            .ok_or(ModelError::Unsupported(
                "the no_hi ablation has no attention to explain",
            ))
    }

    /// Compares tape gradients of the mean BCE against central finite
    /// differences for every trainable parameter. Embedding rows that the
    /// batch never touches are skipped.
    pub fn gradient_check(
        &mut self,
        pairs: &[Pair],
        labels: &[f64],
        mode: Mode,
        h: f64,
    ) -> Result<Vec<GradCheck>, ModelError> {
        let Model { arch, params } = self;
        params.zero_grad();
        let mut fwd = arch.forward(params, pairs, mode)?;
        let loss = fwd.bce(labels)?;
        fwd.tape.backward(loss, params)?;

        let d = arch.config.d;
        let mut used: Vec<usize> = pairs
            .iter()
            .flat_map(|p| p.tokens.iter().map(|&t| t % arch.config.embed_rows))
            .collect();
        used.sort_unstable();
        used.dedup();
        let embed_idx: Vec<usize> = used.iter().flat_map(|&r| r * d..(r + 1) * d).collect();

        let ids: Vec<_> = params
            .ids()
            .filter(|&id| params.get(id).trainable)
            .collect();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let indices: Vec<usize> = if id == arch.target.embed {
                embed_idx.clone()
            } else {
                (0..params.get(id).value.numel()).collect()
            };
            let f = |s: &ParamStore| {
                arch.loss(s, pairs, labels, mode)
                    .expect("forward succeeded once")
            };
            out.push(check_param(params, id, &indices, h, f));
        }
        Ok(out)
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.trainable_count()
    }
}

#[cfg(test)]
mod tests;
