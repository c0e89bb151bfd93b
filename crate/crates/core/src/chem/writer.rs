//! Non-canonical SMILES output.
//!
//! Used to re-serialize generated molecules and to produce atom-reordered
//! equivalents of a molecule; the traversal order is caller-controlled.

use std::collections::HashMap;
use std::fmt::Write;

use super::molecule::{Atom, BondOrder, Molecule};

/// Writes `mol` starting at atom 0, visiting neighbours in bond order.
pub fn write_smiles(mol: &Molecule) -> String {
    write_smiles_with(mol, 0, |_| {})
}

/// Writes `mol` as a depth-first traversal from `root`. `order` may reorder
/// each atom's `(neighbor, bond)` list before it is explored.
pub fn write_smiles_with<F>(mol: &Molecule, root: usize, mut order: F) -> String
where
    F: FnMut(&mut Vec<(usize, usize)>),
{
    let n = mol.atom_count();
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut tree_bond = vec![false; mol.bond_count()];

    // Iterative DFS recording the tree; children are kept in exploration order.
    let mut stack: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    visited[root] = true;
    let mut nbrs = mol.neighbors(root).to_vec();
    order(&mut nbrs);
    nbrs.reverse();
    stack.push((root, nbrs));
    while let Some((v, pending)) = stack.last_mut() {
        let v = *v;
        match pending.pop() {
            Some((u, b)) => {
                if !visited[u] {
                    visited[u] = true;
                    tree_bond[b] = true;
                    children[v].push((u, b));
                    let mut next = mol.neighbors(u).to_vec();
                    order(&mut next);
                    next.reverse();
                    stack.push((u, next));
                }
            }
            None => {
                stack.pop();
            }
        }
    }

    let mut out = String::new();
    let mut emitted = vec![false; n];
    let mut open: HashMap<usize, u32> = HashMap::new();
    let mut free: Vec<u32> = (1..=99).rev().collect();
    emit(
        mol,
        root,
        &children,
        &tree_bond,
        &mut emitted,
        &mut open,
        &mut free,
        &mut out,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn emit(
    mol: &Molecule,
    v: usize,
    children: &[Vec<(usize, usize)>],
    tree_bond: &[bool],
    emitted: &mut [bool],
    open: &mut HashMap<usize, u32>,
    free: &mut Vec<u32>,
    out: &mut String,
) {
    emitted[v] = true;
    out.push_str(&atom_text(&mol.atoms()[v]));
    for &(u, b) in mol.neighbors(v) {
        if tree_bond[b] {
            continue;
        }
        if emitted[u] {
            let label = open.remove(&b).expect("ring bond opened earlier");
            write_label(out, label);
            free.push(label);
            free.sort_unstable_by(|a, b| b.cmp(a));
        } else {
            let label = free.pop().expect("more than 99 open rings");
            out.push_str(bond_text(mol, b));
            write_label(out, label);
            open.insert(b, label);
        }
    }
    let kids = &children[v];
    for (i, &(u, b)) in kids.iter().enumerate() {
        let last = i + 1 == kids.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_text(mol, b));
        emit(mol, u, children, tree_bond, emitted, open, free, out);
        if !last {
            out.push(')');
        }
    }
}

fn write_label(out: &mut String, label: u32) {
    if label < 10 {
        write!(out, "{label}").unwrap();
    } else {
        write!(out, "%{label:02}").unwrap();
    }
}

fn bond_text(mol: &Molecule, b: usize) -> &'static str {
    let bond = &mol.bonds()[b];
    let both_aromatic = mol.atoms()[bond.a].aromatic && mol.atoms()[bond.b].aromatic;
    match bond.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn atom_text(atom: &Atom) -> String {
    let symbol = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    if atom.explicit_h.is_none() && atom.formal_charge == 0 && atom.element.is_organic_subset() {
        return symbol;
    }
    let mut s = format!("[{symbol}");
    match atom.total_h() {
        0 => {}
        1 => s.push('H'),
        h => write!(s, "H{h}").unwrap(),
    }
    match atom.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => write!(s, "+{c}").unwrap(),
        c => write!(s, "-{}", -c).unwrap(),
    }
    s.push(']');
    s
}
