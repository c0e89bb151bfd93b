//! Drug-target interaction prediction from hierarchical molecular graphs.
//!
//! A drug's SMILES string is parsed ([`chem`]), cut into motifs by BRICS
//! and ring/branch rules, and lifted into a three-level graph of atoms,
//! motifs and one global node ([`hiergraph`]). A GIN encoder embeds every
//! level; a protein is read as overlapping 3-grams through a convolution
//! stack with attentional feature fusion. Hierarchical attention between
//! the protein and each drug level feeds a logistic classifier ([`model`]).
//! Everything is differentiated by the small reverse-mode engine in [`nd`].
//!
//! [`data`], [`metrics`] and [`train`] cover corpora, splits, evaluation,
//! training and checkpoints; [`cli`] backs the `higraph` binary.
//!
//! Runnable examples live in `examples/`:
//!
//! | example | shows |
//! |---|---|
//! | `parse_smiles` | atoms, bonds, rings and aromaticity of a SMILES string |
//! | `fragment_motifs` | motif partition and cleaved bonds |
//! | `hierarchical_graph` | node and edge counts per layout, Graphviz output |
//! | `autodiff_gradcheck` | tape gradients against finite differences |
//! | `encode_target` | 3-gram tokens, conv stack and fusion gates |
//! | `explain_attention` | `B_P`, `B_a`, `B_m` for a trained pair |
//! | `split_metrics` | ratio, k-fold and carve splits; AUC/AUPR |
//! | `synthetic_corpus` | the separable fixture as a TSV corpus |
//! | `train_synthetic` | overfitting the 32-pair fixture |

pub mod chem;
pub mod cli;
pub mod data;
pub mod hiergraph;
pub mod metrics;
pub mod model;
pub mod nd;
pub mod synth;
pub mod train;
