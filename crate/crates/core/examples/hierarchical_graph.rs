//! Builds the three-level atom/motif/global graph for a molecule and prints
//! its counts, the edge list and a Graphviz rendering.
//!
//! ```text
//! cargo run --example hierarchical_graph -- "Cc1ccccc1" > toluene.dot
//! ```

use higraph_dti::chem::{fragment, parse_smiles};
use higraph_dti::hiergraph::{build_with_layout, Layout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let smiles = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Cc1ccccc1".into());
    let m = parse_smiles(&smiles)?;
    let p = fragment(&m);
    for layout in [Layout::Full, Layout::NoMotifs, Layout::AtomsOnly] {
        let g = build_with_layout(&m, &p, layout)?;
        eprintln!(
            "{layout:?}: {} nodes ({} atoms, {} motifs), {} directed edges",
            g.node_count(),
            g.atom_count(),
            g.motif_count(),
            g.edge_count()
        );
    }
    let g = build_with_layout(&m, &p, Layout::Full)?;
    for e in g
        .edges()
        .iter()
        .filter(|e| e.src >= g.atom_count() || e.dst >= g.atom_count())
    {
        eprintln!("  {} -> {} {:?}", e.src, e.dst, e.kind);
    }
    print!("{}", g.to_dot(&m));
    Ok(())
}
