use crate::chem::{fragment, Molecule, MotifPartition};
use crate::hiergraph::{
    build_hiergraph, build_with_layout, initial_features, GraphError, GraphFeatures, HierGraph,
    Layout, EDGE_TYPES, FEATURE_DIM,
};
use crate::nd::{ParamId, ParamStore, Tensor, TensorError, Var};

use super::layers::{Ctx, Init, Linear, Mode};

/// A drug ready for encoding: its graph and raw features.
#[derive(Clone, Debug, PartialEq)]
pub struct DrugGraph {
    pub graph: HierGraph,
    pub features: GraphFeatures,
}

impl DrugGraph {
    /// Fragments `m` (for the full layout) and featurizes the resulting graph.
    pub fn from_molecule(m: &Molecule, layout: Layout) -> DrugGraph {
        let p = if layout == Layout::Full {
            fragment(m)
        } else {
            MotifPartition {
                motifs: Vec::new(),
                cut_bonds: Vec::new(),
            }
        };
        let graph = build_with_layout(m, &p, layout).expect("fragment yields a valid partition");
        let features = initial_features(&graph, m);
        DrugGraph { graph, features }
    }

    pub fn with_partition(m: &Molecule, p: &MotifPartition) -> Result<DrugGraph, GraphError> {
        let graph = build_hiergraph(m, p)?;
        let features = initial_features(&graph, m);
        Ok(DrugGraph { graph, features })
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }
}

/// Several drug graphs merged into one disconnected graph by index offsets.
pub(crate) struct DrugBatch {
    pub x: Tensor,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub codes: Vec<usize>,
    pub node_count: usize,
    /// First node of each drug.
    pub offsets: Vec<usize>,
    pub atoms: Vec<usize>,
    pub motifs: Vec<usize>,
    pub global: Vec<Option<usize>>,
}

impl DrugBatch {
    pub fn new(drugs: &[&DrugGraph]) -> DrugBatch {
        let node_count: usize = drugs.iter().map(|d| d.node_count()).sum();
        let mut data = Vec::with_capacity(node_count * FEATURE_DIM);
        let (mut src, mut dst, mut codes) = (Vec::new(), Vec::new(), Vec::new());
        let mut offsets = Vec::with_capacity(drugs.len());
        let mut global = Vec::with_capacity(drugs.len());
        let mut offset = 0;
        for d in drugs {
            offsets.push(offset);
            data.extend_from_slice(d.features.x.data());
            for (e, &code) in d.graph.edges().iter().zip(&d.features.edge_codes) {
                src.push(offset + e.src);
                dst.push(offset + e.dst);
                codes.push(code);
            }
            global.push(d.graph.global_node().map(|g| offset + g));
            offset += d.node_count();
        }
        DrugBatch {
            x: Tensor::matrix(node_count, FEATURE_DIM, data).expect("feature rows"),
            src,
            dst,
            codes,
            node_count,
            offsets,
            atoms: drugs.iter().map(|d| d.graph.atom_count()).collect(),
            motifs: drugs.iter().map(|d| d.graph.motif_count()).collect(),
            global,
        }
    }
}

/// One message-passing round: `h_v <- MLP(h_v + sum_u (h_u + E[type(u, v)]))`
/// over in-neighbours `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer {
    pub edge_embed: ParamId,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrugEncoder {
    pub input: Linear,
    pub layers: Vec<GinLayer>,
    /// Use the centre node `h_v` inside the neighbour sum instead of `h_u`.
    pub strict_eq2: bool,
}

/// Final-layer embeddings of one drug, split by level.
#[derive(Clone, Debug, PartialEq)]
pub struct DrugEmbedding {
    pub h_a: Tensor,
    pub h_m: Tensor,
    pub h_g: Tensor,
}

impl DrugEncoder {
    pub(crate) fn new(
        init: &mut Init,
        d: usize,
        layers: usize,
        strict_eq2: bool,
    ) -> Result<DrugEncoder, TensorError> {
        let input = Linear::new(init, "drug.input", FEATURE_DIM, d)?;
        let layers = (0..layers)
            .map(|l| {
                Ok(GinLayer {
                    edge_embed: init.uniform(
                        &format!("drug.gin{l}.edge_embed"),
                        &[EDGE_TYPES, d],
                        1.0 / (d as f64).sqrt(),
                    )?,
                    mlp1: Linear::new(init, &format!("drug.gin{l}.mlp1"), d, d)?,
                    mlp2: Linear::new(init, &format!("drug.gin{l}.mlp2"), d, d)?,
                })
            })
            .collect::<Result<_, TensorError>>()?;
        Ok(DrugEncoder {
            input,
            layers,
            strict_eq2,
        })
    }

    /// Shared affine projection of raw node features to `d` dimensions.
    pub(crate) fn project_inputs(&self, cx: &mut Ctx, x: Var) -> Result<Var, TensorError> {
        self.input.forward(cx, x)
    }

    /// Runs every GIN layer; returns `h^0, h^1, ..., h^L`.
    pub(crate) fn gin_layers(
        &self,
        cx: &mut Ctx,
        batch: &DrugBatch,
        h0: Var,
    ) -> Result<Vec<Var>, TensorError> {
        let mut hs = vec![h0];
        for layer in &self.layers {
            let h = *hs.last().expect("h0");
            let table = cx.p(layer.edge_embed);
            let edge = cx.tape.gather_rows(table, &batch.codes)?;
            let from = if self.strict_eq2 {
                &batch.dst
            } else {
                &batch.src
            };
            let nbr = cx.tape.gather_rows(h, from)?;
            let msg = cx.tape.add(nbr, edge)?;
            let agg = cx
                .tape
                .scatter_add_rows(msg, &batch.dst, batch.node_count)?;
            let z = cx.tape.add(h, agg)?;
            let a = layer.mlp1.forward(cx, z)?;
            let a = cx.tape.relu(a);
            hs.push(layer.mlp2.forward(cx, a)?);
        }
        Ok(hs)
    }

    pub(crate) fn forward(&self, cx: &mut Ctx, batch: &DrugBatch) -> Result<Var, TensorError> {
        let x = cx.tape.input(batch.x.clone());
        let h0 = self.project_inputs(cx, x)?;
        Ok(*self.gin_layers(cx, batch, h0)?.last().expect("h0"))
    }

    /// Node embeddings of `drug` after each layer, `h^0` first.
    pub fn layer_outputs(
        &self,
        store: &ParamStore,
        drug: &DrugGraph,
    ) -> Result<Vec<Tensor>, TensorError> {
        self.layer_outputs_from(store, drug, &drug.features.x)
    }

    /// As [`DrugEncoder::layer_outputs`] but with replacement raw features.
    pub fn layer_outputs_from(
        &self,
        store: &ParamStore,
        drug: &DrugGraph,
        x: &Tensor,
    ) -> Result<Vec<Tensor>, TensorError> {
        let mut batch = DrugBatch::new(&[drug]);
        batch.x = x.clone();
        let mut cx = Ctx::new(store, Mode::Eval);
        let xv = cx.tape.input(batch.x.clone());
        let h0 = self.project_inputs(&mut cx, xv)?;
        let hs = self.gin_layers(&mut cx, &batch, h0)?;
        Ok(hs.into_iter().map(|v| cx.tape.value(v).clone()).collect())
    }

    /// Final embeddings split into atom, motif and global rows. Without a
    /// global node, `h_g` is the mean of the atom rows.
    pub fn encode(
        &self,
        store: &ParamStore,
        drug: &DrugGraph,
    ) -> Result<DrugEmbedding, TensorError> {
        let h = self.layer_outputs(store, drug)?.pop().expect("h0");
        Ok(split_levels(&h, &drug.graph))
    }
}

pub(crate) fn split_levels(h: &Tensor, g: &HierGraph) -> DrugEmbedding {
    let rows = h.to_rows();
    let a = g.atom_count();
    let m = g.motif_count();
    let h_a = Tensor::from_rows(&rows[..a]).expect("rows");
    let h_m = if m == 0 {
        Tensor::zeros(&[0, h.cols()])
    } else {
        Tensor::from_rows(&rows[a..a + m]).expect("rows")
    };
    let h_g = match g.global_node() {
        Some(gi) => Tensor::row(rows[gi].clone()),
        None => {
            let mut mean = vec![0.0; h.cols()];
            for r in &rows[..a] {
                mean.iter_mut().zip(r).for_each(|(s, v)| *s += v / a as f64);
            }
            Tensor::row(mean)
        }
    };
    DrugEmbedding { h_a, h_m, h_g }
}
