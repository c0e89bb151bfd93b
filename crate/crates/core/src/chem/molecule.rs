use serde::Serialize;

use super::element::Element;
use super::SmilesError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence sum; aromatic bonds count 1.5.
    pub fn valence(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }

    /// Valence contribution with aromatic bonds counted as single.
    fn sigma_valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside a bracket atom.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit_h: Option<u8>,
    pub implicit_h: u8,
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom {
            element,
            aromatic: false,
            formal_charge: 0,
            explicit_h: None,
            implicit_h: 0,
            in_ring: false,
        }
    }

    pub fn total_h(&self) -> u8 {
        self.explicit_h.unwrap_or(self.implicit_h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// A connected molecular graph with typed atoms and bonds.
#[derive(Clone, Debug, Serialize)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    source: String,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Per-atom and per-bond cycle membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingFlags {
    pub atoms: Vec<bool>,
    pub bonds: Vec<bool>,
}

impl Molecule {
    /// Assembles a molecule from atoms and bonds, recomputing ring flags.
    ///
    /// Implicit hydrogens are taken as given; use [`assign_implicit_hydrogens`]
    /// first when building from raw atoms.
    pub fn from_parts(
        mut atoms: Vec<Atom>,
        mut bonds: Vec<Bond>,
        source: impl Into<String>,
    ) -> Result<Molecule, SmilesError> {
        if atoms.is_empty() {
            return Err(SmilesError::Empty);
        }
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, bond) in bonds.iter().enumerate() {
            if bond.a == bond.b || bond.a >= atoms.len() || bond.b >= atoms.len() {
                return Err(SmilesError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                });
            }
            if adjacency[bond.a].iter().any(|&(n, _)| n == bond.b) {
                return Err(SmilesError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                });
            }
            adjacency[bond.a].push((bond.b, i));
            adjacency[bond.b].push((bond.a, i));
        }
        if !is_connected(&adjacency) {
            return Err(SmilesError::Disconnected);
        }
        let flags = cycle_flags(&adjacency, bonds.len());
        for (atom, flag) in atoms.iter_mut().zip(&flags.atoms) {
            atom.in_ring = *flag;
        }
        for (bond, flag) in bonds.iter_mut().zip(&flags.bonds) {
            bond.in_ring = *flag;
        }
        Ok(Molecule {
            atoms,
            bonds,
            source: source.into(),
            adjacency,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// `(neighbor atom, bond index)` pairs for `atom`, in bond creation order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, bond)| bond)
    }

    /// Relabels atoms so that old atom `i` becomes atom `perm[i]`.
    ///
    /// Bonds keep their relative order; bond endpoints are remapped.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut atoms = vec![None; self.atoms.len()];
        for (old, atom) in self.atoms.iter().enumerate() {
            atoms[perm[old]] = Some(atom.clone());
        }
        let atoms = atoms
            .into_iter()
            .map(|a| a.expect("perm is a permutation"))
            .collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                ..b.clone()
            })
            .collect();
        Molecule::from_parts(atoms, bonds, self.source.clone())
            .expect("permutation preserves validity")
    }
}

fn is_connected(adjacency: &[Vec<(usize, usize)>]) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &(n, _) in &adjacency[v] {
            if !seen[n] {
                seen[n] = true;
                count += 1;
                stack.push(n);
            }
        }
    }
    count == adjacency.len()
}

/// Marks every bond that lies on a cycle (i.e. is not a bridge) and every
/// atom incident to such a bond.
pub fn ring_membership(m: &Molecule) -> RingFlags {
    cycle_flags(&m.adjacency, m.bonds.len())
}

fn cycle_flags(adjacency: &[Vec<(usize, usize)>], n_bonds: usize) -> RingFlags {
    let n = adjacency.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut bridge = vec![false; n_bonds];
    let mut timer = 0;

    // Iterative Tarjan low-link; frames are (vertex, bond used to enter, next neighbor slot).
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(frame) = stack.last_mut() {
            let (v, parent_bond, slot) = *frame;
            if slot < adjacency[v].len() {
                frame.2 += 1;
                let (u, bond) = adjacency[v][slot];
                if Some(bond) == parent_bond {
                    continue;
                }
                if disc[u] == usize::MAX {
                    disc[u] = timer;
                    low[u] = timer;
                    timer += 1;
                    stack.push((u, Some(bond), 0));
                } else {
                    low[v] = low[v].min(disc[u]);
                }
            } else {
                stack.pop();
                if let (Some(&(p, _, _)), Some(bond)) = (stack.last(), parent_bond) {
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        bridge[bond] = true;
                    }
                }
            }
        }
    }

    let bonds: Vec<bool> = bridge.iter().map(|b| !b).collect();
    let mut atoms = vec![false; n];
    for (v, nbrs) in adjacency.iter().enumerate() {
        atoms[v] = nbrs.iter().any(|&(_, b)| bonds[b]);
    }
    RingFlags { atoms, bonds }
}

/// Fills `implicit_h` for organic-subset atoms written without brackets.
///
/// Bracket atoms (those with `explicit_h` set) get zero implicit hydrogens.
pub fn assign_implicit_hydrogens(atoms: &mut [Atom], bonds: &[Bond]) -> Result<(), SmilesError> {
    let mut sums = vec![0.0f64; atoms.len()];
    let mut sigma = vec![0u32; atoms.len()];
    for bond in bonds {
        for end in [bond.a, bond.b] {
            sums[end] += bond.order.valence();
            sigma[end] += bond.order.sigma_valence();
        }
    }
    for (i, atom) in atoms.iter_mut().enumerate() {
        if atom.explicit_h.is_some() {
            atom.implicit_h = 0;
            continue;
        }
        let valences = atom.element.normal_valences();
        let Some(&max) = valences.last() else {
            atom.implicit_h = 0;
            continue;
        };
        let used = sums[i].ceil() as u32;
        atom.implicit_h = if atom.aromatic {
            if sigma[i] > max as u32 {
                return Err(SmilesError::ValenceExceeded {
                    atom: i,
                    element: atom.element.symbol().to_string(),
                });
            }
            (valences[0] as u32).saturating_sub(used) as u8
        } else {
            match valences.iter().find(|&&v| v as u32 >= used) {
                Some(&v) => (v as u32 - used) as u8,
                None => {
                    return Err(SmilesError::ValenceExceeded {
                        atom: i,
                        element: atom.element.symbol().to_string(),
                    })
                }
            }
        };
    }
    Ok(())
}
