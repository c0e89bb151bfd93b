//! Three-level drug graphs: atoms, motifs, and one global node.
//!
//! Atom nodes keep their bond edges in both directions. Each atom feeds its
//! motif through a one-way edge and each motif feeds the global node, so
//! information only ever flows upward across levels.

use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::chem::{BondOrder, Molecule, MotifPartition};
use crate::nd::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("partition does not match the molecule: {0}")]
    PartitionMismatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Atom,
    Motif,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "order")]
pub enum EdgeKind {
    Bond(BondOrder),
    AtomToMotif,
    MotifToGlobal,
    /// Used when the motif level is removed.
    AtomToGlobal,
}

/// Number of distinct edge codes produced by [`EdgeKind::code`].
pub const EDGE_TYPES: usize = 6;

impl EdgeKind {
    /// Categorical code: single, double, triple, aromatic, atom-to-motif, to-global.
    pub fn code(self) -> usize {
        match self {
            EdgeKind::Bond(BondOrder::Single) => 0,
            EdgeKind::Bond(BondOrder::Double) => 1,
            EdgeKind::Bond(BondOrder::Triple) => 2,
            EdgeKind::Bond(BondOrder::Aromatic) => 3,
            EdgeKind::AtomToMotif => 4,
            EdgeKind::MotifToGlobal | EdgeKind::AtomToGlobal => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// Which levels a graph carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Atoms, motifs and the global node.
    #[default]
    Full,
    /// Atoms and the global node; atoms point straight at the global node.
    NoMotifs,
    /// Atoms only.
    AtomsOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierGraph {
    levels: Vec<Level>,
    edges: Vec<Edge>,
    /// Atom indices of each motif node, in motif order.
    motif_members: Vec<Vec<usize>>,
    n_atoms: usize,
    layout: Layout,
}

/// Full three-level graph of `m` under partition `p`.
pub fn build_hiergraph(m: &Molecule, p: &MotifPartition) -> Result<HierGraph, GraphError> {
    let owner = p.membership(m.atom_count()).ok_or_else(|| {
        GraphError::PartitionMismatch(format!(
            "motifs do not partition the {} atoms exactly once",
            m.atom_count()
        ))
    })?;
    let mut g = atom_level(m, Layout::Full);
    let n = m.atom_count();
    let motif_base = n;
    let global = n + p.len();
    g.levels.extend(std::iter::repeat_n(Level::Motif, p.len()));
    g.levels.push(Level::Global);
    for (atom, &motif) in owner.iter().enumerate() {
        g.edges.push(Edge {
            src: atom,
            dst: motif_base + motif,
            kind: EdgeKind::AtomToMotif,
        });
    }
    for motif in 0..p.len() {
        g.edges.push(Edge {
            src: motif_base + motif,
            dst: global,
            kind: EdgeKind::MotifToGlobal,
        });
    }
    g.motif_members = p.motifs.clone();
    Ok(g)
}

/// Graph with the motif level removed: every atom points at the global node.
pub fn build_without_motifs(m: &Molecule) -> HierGraph {
    let mut g = atom_level(m, Layout::NoMotifs);
    let global = m.atom_count();
    g.levels.push(Level::Global);
    for atom in 0..m.atom_count() {
        g.edges.push(Edge {
            src: atom,
            dst: global,
            kind: EdgeKind::AtomToGlobal,
        });
    }
    g
}

/// Plain molecular graph: atom nodes and bidirectional bond edges.
pub fn build_atoms_only(m: &Molecule) -> HierGraph {
    atom_level(m, Layout::AtomsOnly)
}

/// Builds the graph for `layout`; `p` is only consulted for [`Layout::Full`].
pub fn build_with_layout(
    m: &Molecule,
    p: &MotifPartition,
    layout: Layout,
) -> Result<HierGraph, GraphError> {
    match layout {
        Layout::Full => build_hiergraph(m, p),
        Layout::NoMotifs => Ok(build_without_motifs(m)),
        Layout::AtomsOnly => Ok(build_atoms_only(m)),
    }
}

fn atom_level(m: &Molecule, layout: Layout) -> HierGraph {
    let mut edges = Vec::with_capacity(2 * m.bond_count() + 2 * m.atom_count());
    for bond in m.bonds() {
        let kind = EdgeKind::Bond(bond.order);
        edges.push(Edge {
            src: bond.a,
            dst: bond.b,
            kind,
        });
        edges.push(Edge {
            src: bond.b,
            dst: bond.a,
            kind,
        });
    }
    HierGraph {
        levels: vec![Level::Atom; m.atom_count()],
        edges,
        motif_members: Vec::new(),
        n_atoms: m.atom_count(),
        layout,
    }
}

impl HierGraph {
    pub fn node_count(&self) -> usize {
        self.levels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn motif_members(&self) -> &[Vec<usize>] {
        &self.motif_members
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn atom_count(&self) -> usize {
        self.n_atoms
    }

    pub fn motif_count(&self) -> usize {
        self.motif_members.len()
    }

    /// Node index of the global node, if present.
    pub fn global_node(&self) -> Option<usize> {
        (self.layout != Layout::AtomsOnly).then(|| self.levels.len() - 1)
    }

    /// Node indices of the motif nodes.
    pub fn motif_nodes(&self) -> std::ops::Range<usize> {
        self.n_atoms..self.n_atoms + self.motif_members.len()
    }

    /// Nodes reachable from `start` along directed edges, including `start`.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            out[e.src].push(e.dst);
        }
        let mut seen = vec![false; self.node_count()];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in &out[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Graphviz rendering, one cluster per level.
    pub fn to_dot(&self, m: &Molecule) -> String {
        let mut s = String::from("digraph hiergraph {\n  rankdir=BT;\n");
        for (i, level) in self.levels.iter().enumerate() {
            let (label, shape) = match level {
                Level::Atom => (format!("{}{}", m.atoms()[i].element, i), "circle"),
                Level::Motif => (format!("M{}", i - self.n_atoms), "box"),
                Level::Global => ("G".to_string(), "doublecircle"),
            };
            writeln!(s, "  n{i} [label=\"{label}\", shape={shape}];").unwrap();
        }
        for e in &self.edges {
            match e.kind {
                EdgeKind::Bond(_) if e.src > e.dst => continue,
                EdgeKind::Bond(order) => {
                    let style = match order {
                        BondOrder::Single => "solid",
                        BondOrder::Double => "bold",
                        BondOrder::Triple => "bold",
                        BondOrder::Aromatic => "dashed",
                    };
                    writeln!(s, "  n{} -> n{} [dir=both, style={style}];", e.src, e.dst).unwrap();
                }
                _ => writeln!(s, "  n{} -> n{} [color=gray];", e.src, e.dst).unwrap(),
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Element one-hot vocabulary; anything else maps to the trailing OTHER slot.
pub const ELEMENT_VOCAB: [&str; 10] = ["C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B"];

const ELEMENT_SLOTS: usize = ELEMENT_VOCAB.len() + 1;
const DEGREE_SLOTS: usize = 7;
const CHARGE_SLOTS: usize = 5;
const H_SLOTS: usize = 5;
const DEGREE_OFFSET: usize = ELEMENT_SLOTS;
const CHARGE_OFFSET: usize = DEGREE_OFFSET + DEGREE_SLOTS;
const AROMATIC_OFFSET: usize = CHARGE_OFFSET + CHARGE_SLOTS;
const H_OFFSET: usize = AROMATIC_OFFSET + 1;
const MOTIF_FLAG: usize = H_OFFSET + H_SLOTS;
const GLOBAL_FLAG: usize = MOTIF_FLAG + 1;

/// Width of a raw node feature vector.
pub const FEATURE_DIM: usize = GLOBAL_FLAG + 1;

/// Raw inputs for the drug encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFeatures {
    /// `node_count x FEATURE_DIM` one-hot rows.
    pub x: Tensor,
    /// One [`EdgeKind::code`] per edge, in edge order.
    pub edge_codes: Vec<usize>,
}

/// One-hot atom descriptors plus reserved codes for motif and global nodes.
///
/// Atom rows concatenate element (10 symbols + other), heavy-atom degree
/// (0 to 6), formal charge (-2 to +2), aromatic flag, and hydrogen count
/// (0 to 4); out-of-range values are clamped.
pub fn initial_features(g: &HierGraph, m: &Molecule) -> GraphFeatures {
    let mut x = Tensor::zeros(&[g.node_count(), FEATURE_DIM]);
    let data = x.data_mut();
    for (i, level) in g.levels.iter().enumerate() {
        let row = &mut data[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
        match level {
            Level::Atom => {
                let atom = &m.atoms()[i];
                let symbol = atom.element.symbol();
                let e = ELEMENT_VOCAB
                    .iter()
                    .position(|&s| s == symbol)
                    .unwrap_or(ELEMENT_VOCAB.len());
                row[e] = 1.0;
                row[DEGREE_OFFSET + m.degree(i).min(DEGREE_SLOTS - 1)] = 1.0;
                row[CHARGE_OFFSET + (atom.formal_charge.clamp(-2, 2) + 2) as usize] = 1.0;
                if atom.aromatic {
                    row[AROMATIC_OFFSET] = 1.0;
                }
                row[H_OFFSET + usize::from(atom.total_h()).min(H_SLOTS - 1)] = 1.0;
            }
            Level::Motif => row[MOTIF_FLAG] = 1.0,
            Level::Global => row[GLOBAL_FLAG] = 1.0,
        }
    }
    GraphFeatures {
        x,
        edge_codes: g.edges.iter().map(|e| e.kind.code()).collect(),
    }
}
