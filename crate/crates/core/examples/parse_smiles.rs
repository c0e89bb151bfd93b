//! Parses a SMILES string and prints its atoms, bonds and ring membership.
//!
//! ```text
//! cargo run --example parse_smiles -- "CC(=O)Oc1ccccc1C(=O)O"
//! ```

use higraph_dti::chem::{parse_smiles, write_smiles};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let smiles = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "CC(=O)Oc1ccccc1C(=O)O".into());
    let m = parse_smiles(&smiles)?;
    println!(
        "{smiles}: {} atoms, {} bonds",
        m.atom_count(),
        m.bond_count()
    );
    for (i, a) in m.atoms().iter().enumerate() {
        println!(
            "  atom {i:>2} {:<2} aromatic={:<5} charge={:+} H={} ring={}",
            a.element.symbol(),
            a.aromatic,
            a.formal_charge,
            a.total_h(),
            a.in_ring
        );
    }
    for b in m.bonds() {
        println!(
            "  bond {:>2}-{:<2} {:?} ring={}",
            b.a, b.b, b.order, b.in_ring
        );
    }
    println!("written back: {}", write_smiles(&m));
    Ok(())
}
