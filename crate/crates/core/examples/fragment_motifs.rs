//! Splits molecules into motifs: BRICS cleavages plus ring/branch cuts.
//!
//! ```text
//! cargo run --example fragment_motifs -- "CN1CCC[C@H]1c1cccnc1" "Cc1ccccc1"
//! ```

use higraph_dti::chem::{brics_cleavable_bonds, fragment, parse_smiles, ring_branch_bonds};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = vec![
            "CN1CCC[C@H]1c1cccnc1".into(),
            "CC(C)Cc1ccc(C(C)C(=O)O)cc1".into(),
        ];
    }
    for smiles in inputs {
        let m = parse_smiles(&smiles)?;
        let p = fragment(&m);
        println!("{smiles}");
        println!("  BRICS bonds: {:?}", brics_cleavable_bonds(&m));
        println!("  ring/branch bonds: {:?}", ring_branch_bonds(&m));
        println!("  cut atom pairs: {:?}", p.cut_pairs(&m));
        for (i, motif) in p.motifs.iter().enumerate() {
            let symbols: String = motif
                .iter()
                .map(|&a| m.atoms()[a].element.symbol())
                .collect();
            println!("  motif {i}: atoms {motif:?} ({symbols})");
        }
    }
    Ok(())
}
