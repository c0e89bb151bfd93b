//! Molecular graphs: SMILES input, ring perception, and motif fragmentation.

pub mod brics;
mod element;
mod fragment;
mod molecule;
mod smiles;
mod writer;

pub use element::Element;
pub use fragment::{brics_cleavable_bonds, fragment, ring_branch_bonds, MotifPartition};
pub use molecule::{
    assign_implicit_hydrogens, ring_membership, Atom, Bond, BondOrder, Molecule, RingFlags,
};
pub use smiles::parse_smiles;
pub use writer::{write_smiles, write_smiles_with};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("unsupported token `{token}` at position {position}")]
    UnsupportedToken { token: String, position: usize },
    #[error("ring closure {label} is never closed")]
    UnbalancedRingClosure { label: u32 },
    #[error("conflicting bond symbols on ring closure {label}")]
    RingBondConflict { label: u32 },
    #[error("unbalanced parenthesis at position {position}")]
    UnbalancedParenthesis { position: usize },
    #[error("SMILES describes more than one connected component")]
    Disconnected,
    #[error("atom {atom} ({element}) exceeds its maximum valence")]
    ValenceExceeded { atom: usize, element: String },
    #[error("invalid bond between atoms {a} and {b}")]
    InvalidBond { a: usize, b: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(s: &str) -> RingFlags {
        ring_membership(&parse_smiles(s).unwrap())
    }

    #[test]
    fn ring_membership_examples() {
        let f = flags("CCCC");
        assert!(f.atoms.iter().chain(&f.bonds).all(|x| !x));

        let f = flags("C1CC1");
        assert!(f.atoms.iter().chain(&f.bonds).all(|&x| x));

        let m = parse_smiles("c1ccccc1CC").unwrap();
        let f = ring_membership(&m);
        assert_eq!(f.bonds.iter().filter(|&&x| x).count(), 6);
        assert_eq!(f.bonds.iter().filter(|&&x| !x).count(), 2);
        assert_eq!(
            &f.atoms,
            &[true, true, true, true, true, true, false, false]
        );
        // idempotent and consistent with the stored flags
        assert_eq!(ring_membership(&m), f);
        let stored: Vec<bool> = m.atoms().iter().map(|a| a.in_ring).collect();
        assert_eq!(stored, f.atoms);
    }

    #[test]
    fn fused_and_spiro_rings() {
        let f = flags("c1ccc2ccccc2c1");
        assert!(f.bonds.iter().all(|&x| x));
        let f = flags("C1CCC2(C1)CCC2");
        assert!(f.bonds.iter().all(|&x| x));
        // two rings joined by a chain: the chain bonds are bridges
        let f = flags("C1CC1CCC1CC1");
        assert_eq!(f.bonds.iter().filter(|&&x| !x).count(), 3);
    }
}
