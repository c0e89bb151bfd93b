//! Motif partitioning: BRICS cleavage plus disconnection of ring branches.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::brics::RULES;
use super::molecule::Molecule;

/// Disjoint atom groups covering a molecule, with the bonds that separate them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifPartition {
    pub motifs: Vec<Vec<usize>>,
    /// Indices into [`Molecule::bonds`].
    pub cut_bonds: Vec<usize>,
}

impl MotifPartition {
    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    /// Motif index of every atom.
    pub fn membership(&self, n_atoms: usize) -> Option<Vec<usize>> {
        let mut owner = vec![usize::MAX; n_atoms];
        for (m, atoms) in self.motifs.iter().enumerate() {
            for &a in atoms {
                if a >= n_atoms || owner[a] != usize::MAX {
                    return None;
                }
                owner[a] = m;
            }
        }
        owner.iter().all(|&o| o != usize::MAX).then_some(owner)
    }

    /// Cut bonds as sorted `[a, b]` atom pairs.
    pub fn cut_pairs(&self, mol: &Molecule) -> Vec<[usize; 2]> {
        let mut pairs: Vec<[usize; 2]> = self
            .cut_bonds
            .iter()
            .map(|&b| {
                let bond = &mol.bonds()[b];
                [bond.a.min(bond.b), bond.a.max(bond.b)]
            })
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Acyclic bonds matched by some entry of the BRICS table.
pub fn brics_cleavable_bonds(m: &Molecule) -> BTreeSet<usize> {
    (0..m.bond_count())
        .filter(|&b| RULES.iter().any(|rule| rule.applies(m, b)))
        .collect()
}

/// Bonds joining a ring atom to a non-ring atom.
pub fn ring_branch_bonds(m: &Molecule) -> BTreeSet<usize> {
    m.bonds()
        .iter()
        .enumerate()
        .filter(|(_, b)| m.atoms()[b.a].in_ring != m.atoms()[b.b].in_ring)
        .map(|(i, _)| i)
        .collect()
}

/// Splits `m` into motifs: connected components after removing every BRICS
/// and ring-branch bond. Motifs are ordered by their smallest atom index.
pub fn fragment(m: &Molecule) -> MotifPartition {
    let mut cut = brics_cleavable_bonds(m);
    cut.extend(ring_branch_bonds(m));

    let n = m.atom_count();
    let mut owner = vec![usize::MAX; n];
    let mut motifs = Vec::new();
    for start in 0..n {
        if owner[start] != usize::MAX {
            continue;
        }
        let id = motifs.len();
        let mut members = vec![start];
        owner[start] = id;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(u, b) in m.neighbors(v) {
                if owner[u] == usize::MAX && !cut.contains(&b) {
                    owner[u] = id;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        motifs.push(members);
    }

    MotifPartition {
        motifs,
        cut_bonds: cut.into_iter().collect(),
    }
}
