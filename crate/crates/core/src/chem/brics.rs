//! The BRICS strategic-bond table written as one-neighbourhood atom predicates.
//!
//! Each environment label (`L1` .. `L16`) is a predicate over a single atom and
//! its directly bonded neighbours. A bond is cleavable when it is acyclic, has
//! the order demanded by the rule, and its two ends satisfy the two labels of
//! some rule (in either orientation).

use super::element::Element;
use super::molecule::{BondOrder, Molecule};

/// Atom environment labels of the BRICS scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Environment {
    L1,
    L3,
    L4,
    L5,
    L6,
    L7,
    L8,
    L9,
    L10,
    L11,
    L12,
    L13,
    L14,
    L15,
    L16,
}

/// One row of the cleavage table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CleavageRule {
    pub id: &'static str,
    pub donor_env: Environment,
    pub acceptor_env: Environment,
    pub bond_order: BondOrder,
}

const fn rule(id: &'static str, donor_env: Environment, acceptor_env: Environment) -> CleavageRule {
    CleavageRule {
        id,
        donor_env,
        acceptor_env,
        bond_order: BondOrder::Single,
    }
}

use Environment::*;

pub const RULES: &[CleavageRule] = &[
    rule("1-3", L1, L3),
    rule("1-5", L1, L5),
    rule("1-10", L1, L10),
    rule("3-4", L3, L4),
    rule("3-13", L3, L13),
    rule("3-14", L3, L14),
    rule("3-15", L3, L15),
    rule("3-16", L3, L16),
    rule("4-5", L4, L5),
    rule("4-11", L4, L11),
    rule("5-12", L5, L12),
    rule("5-14", L5, L14),
    rule("5-16", L5, L16),
    rule("5-13", L5, L13),
    rule("5-15", L5, L15),
    rule("6-13", L6, L13),
    rule("6-14", L6, L14),
    rule("6-15", L6, L15),
    rule("6-16", L6, L16),
    CleavageRule {
        id: "7a-7b",
        donor_env: L7,
        acceptor_env: L7,
        bond_order: BondOrder::Double,
    },
    rule("8-9", L8, L9),
    rule("8-10", L8, L10),
    rule("8-13", L8, L13),
    rule("8-14", L8, L14),
    rule("8-15", L8, L15),
    rule("8-16", L8, L16),
    rule("9-13", L9, L13),
    rule("9-14", L9, L14),
    rule("9-15", L9, L15),
    rule("9-16", L9, L16),
    rule("10-13", L10, L13),
    rule("10-14", L10, L14),
    rule("10-15", L10, L15),
    rule("10-16", L10, L16),
    rule("11-13", L11, L13),
    rule("11-14", L11, L14),
    rule("11-15", L11, L15),
    rule("11-16", L11, L16),
    rule("13-14", L13, L14),
    rule("13-15", L13, L15),
    rule("13-16", L13, L16),
    rule("14-14", L14, L14),
    rule("14-15", L14, L15),
    rule("14-16", L14, L16),
    rule("15-16", L15, L16),
    rule("16-16", L16, L16),
];

/// Which bond orders a neighbour query accepts.
#[derive(Clone, Copy)]
enum BondQuery {
    Single,
    Double,
    Aromatic,
    /// unmarked bond in a pattern: single or aromatic
    SingleOrAromatic,
    Any,
}

impl BondQuery {
    fn accepts(self, order: BondOrder) -> bool {
        match self {
            BondQuery::Single => order == BondOrder::Single,
            BondQuery::Double => order == BondOrder::Double,
            BondQuery::Aromatic => order == BondOrder::Aromatic,
            BondQuery::SingleOrAromatic => {
                matches!(order, BondOrder::Single | BondOrder::Aromatic)
            }
            BondQuery::Any => true,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum RingQuery {
    Ring,
    Chain,
    Either,
}

/// Read-only view of one atom for predicate evaluation.
struct Site<'m> {
    mol: &'m Molecule,
    idx: usize,
}

impl<'m> Site<'m> {
    fn element(&self) -> Element {
        self.mol.atoms()[self.idx].element
    }

    fn aromatic(&self) -> bool {
        self.mol.atoms()[self.idx].aromatic
    }

    /// Aliphatic atom of the given element (SMARTS uppercase symbol).
    fn is_aliphatic(&self, e: Element) -> bool {
        self.element() == e && !self.aromatic()
    }

    fn is_aromatic(&self, e: Element) -> bool {
        self.element() == e && self.aromatic()
    }

    fn in_ring(&self) -> bool {
        self.mol.atoms()[self.idx].in_ring
    }

    fn degree(&self) -> usize {
        self.mol.degree(self.idx)
    }

    fn charge(&self) -> i8 {
        self.mol.atoms()[self.idx].formal_charge
    }

    fn at(&self, idx: usize) -> Site<'m> {
        Site { mol: self.mol, idx }
    }

    /// Neighbours reachable through a bond matching both queries, filtered by `pred`.
    fn matching<F>(&self, bond: BondQuery, ring: RingQuery, pred: F) -> Vec<usize>
    where
        F: Fn(&Site<'m>) -> bool,
    {
        self.mol
            .neighbors(self.idx)
            .iter()
            .filter(|&&(n, b)| {
                let bond_rec = &self.mol.bonds()[b];
                bond.accepts(bond_rec.order)
                    && match ring {
                        RingQuery::Ring => bond_rec.in_ring,
                        RingQuery::Chain => !bond_rec.in_ring,
                        RingQuery::Either => true,
                    }
                    && pred(&self.at(n))
            })
            .map(|&(n, _)| n)
            .collect()
    }

    fn has<F>(&self, bond: BondQuery, ring: RingQuery, pred: F) -> bool
    where
        F: Fn(&Site<'m>) -> bool,
    {
        !self.matching(bond, ring, pred).is_empty()
    }

    /// True when two *distinct* neighbours satisfy the first and second query.
    fn has_pair(&self, first: &[usize], second: &[usize]) -> bool {
        first.iter().any(|a| second.iter().any(|b| a != b))
    }
}

fn is_carbon(s: &Site) -> bool {
    s.element() == Element::C
}

fn in_set(s: &Site, set: &[Element], aromatic: bool) -> bool {
    s.aromatic() == aromatic && set.contains(&s.element())
}

const CNOS: [Element; 4] = [Element::C, Element::N, Element::O, Element::S];
const NOS: [Element; 3] = [Element::N, Element::O, Element::S];

impl Environment {
    pub fn matches(self, mol: &Molecule, atom: usize) -> bool {
        let s = Site { mol, idx: atom };
        use BondQuery as B;
        use RingQuery as R;
        match self {
            // [C;D3]([#0,#6,#7,#8])(=O)
            L1 => {
                s.is_aliphatic(Element::C)
                    && s.degree() == 3
                    && s.has(B::SingleOrAromatic, R::Either, |n| {
                        matches!(n.element(), Element::C | Element::N | Element::O)
                    })
                    && s.has(B::Double, R::Either, |n| n.is_aliphatic(Element::O))
            }
            // [O;D2]-;!@[#0,#6,#1]
            L3 => {
                s.is_aliphatic(Element::O)
                    && s.degree() == 2
                    && s.has(B::Single, R::Chain, |n| {
                        matches!(n.element(), Element::C | Element::H)
                    })
            }
            // [C;!D1;!$(C=*)]-;!@[#6]
            L4 => {
                s.is_aliphatic(Element::C)
                    && s.degree() != 1
                    && !s.has(B::Double, R::Either, |_| true)
                    && s.has(B::Single, R::Chain, is_carbon)
            }
            // [N;!D1;!$(N=*);!$(N-[!#6;!#16;!#0;!#1]);!$([N;R]@[C;R]=O)]
            L5 => {
                s.is_aliphatic(Element::N)
                    && s.degree() != 1
                    && !s.has(B::Double, R::Either, |_| true)
                    && !s.has(B::Single, R::Either, |n| {
                        !matches!(n.element(), Element::C | Element::S | Element::H)
                    })
                    && !(s.in_ring()
                        && s.has(B::Any, R::Ring, |c| {
                            c.is_aliphatic(Element::C)
                                && c.in_ring()
                                && c.has(B::Double, R::Either, |o| o.is_aliphatic(Element::O))
                        }))
            }
            // [C;D3;!R](=O)-;!@[#0,#6,#7,#8]
            L6 => {
                s.is_aliphatic(Element::C)
                    && s.degree() == 3
                    && !s.in_ring()
                    && s.has(B::Double, R::Either, |n| n.is_aliphatic(Element::O))
                    && s.has(B::Single, R::Chain, |n| {
                        matches!(n.element(), Element::C | Element::N | Element::O)
                    })
            }
            // [C;D2,D3]-[#6]
            L7 => {
                s.is_aliphatic(Element::C)
                    && matches!(s.degree(), 2 | 3)
                    && s.has(B::Single, R::Either, is_carbon)
            }
            // [C;!R;!D1;!$(C!-*)]
            L8 => {
                s.is_aliphatic(Element::C)
                    && !s.in_ring()
                    && s.degree() != 1
                    && s.mol
                        .neighbors(s.idx)
                        .iter()
                        .all(|&(_, b)| s.mol.bonds()[b].order == BondOrder::Single)
            }
            // [n;+0;$(n(:[c,n,o,s]):[c,n,o,s])]
            L9 => {
                s.is_aromatic(Element::N) && s.charge() == 0 && {
                    let hits = s.matching(B::Aromatic, R::Either, |n| in_set(n, &CNOS, true));
                    s.has_pair(&hits, &hits)
                }
            }
            // [N;R;$(N(@C(=O))@[C,N,O,S])]
            L10 => {
                s.is_aliphatic(Element::N) && s.in_ring() && {
                    let carbonyl = s.matching(B::Any, R::Ring, |c| {
                        c.is_aliphatic(Element::C)
                            && c.has(B::Double, R::Either, |o| o.is_aliphatic(Element::O))
                    });
                    let other = s.matching(B::Any, R::Ring, |n| in_set(n, &CNOS, false));
                    s.has_pair(&carbonyl, &other)
                }
            }
            // [S;D2](-;!@[#0,#6])
            L11 => {
                s.is_aliphatic(Element::S)
                    && s.degree() == 2
                    && s.has(B::Single, R::Chain, is_carbon)
            }
            // [S;D4]([#6,#0])(=O)(=O)
            L12 => {
                s.is_aliphatic(Element::S)
                    && s.degree() == 4
                    && s.has(B::SingleOrAromatic, R::Either, is_carbon)
                    && s.matching(B::Double, R::Either, |o| o.is_aliphatic(Element::O))
                        .len()
                        >= 2
            }
            // [C;$(C(-;@[C,N,O,S])-;@[N,O,S])]
            L13 => {
                s.is_aliphatic(Element::C) && {
                    let first = s.matching(B::Single, R::Ring, |n| in_set(n, &CNOS, false));
                    let second = s.matching(B::Single, R::Ring, |n| in_set(n, &NOS, false));
                    s.has_pair(&first, &second)
                }
            }
            // [c;$(c(:[c,n,o,s]):[n,o,s])]
            L14 => {
                s.is_aromatic(Element::C) && {
                    let first = s.matching(B::Aromatic, R::Either, |n| in_set(n, &CNOS, true));
                    let second = s.matching(B::Aromatic, R::Either, |n| in_set(n, &NOS, true));
                    s.has_pair(&first, &second)
                }
            }
            // [C;$(C(-;@C)-;@C)]
            L15 => {
                s.is_aliphatic(Element::C) && {
                    let hits = s.matching(B::Single, R::Ring, |n| n.is_aliphatic(Element::C));
                    s.has_pair(&hits, &hits)
                }
            }
            // [c;$(c(:c):c)]
            L16 => {
                s.is_aromatic(Element::C) && {
                    let hits = s.matching(B::Aromatic, R::Either, |n| n.is_aromatic(Element::C));
                    s.has_pair(&hits, &hits)
                }
            }
        }
    }
}

impl CleavageRule {
    /// Whether this rule cleaves bond `bond` of `mol`.
    pub fn applies(&self, mol: &Molecule, bond: usize) -> bool {
        let b = &mol.bonds()[bond];
        if b.in_ring || b.order != self.bond_order {
            return false;
        }
        let (d, a) = (self.donor_env, self.acceptor_env);
        (d.matches(mol, b.a) && a.matches(mol, b.b)) || (d.matches(mol, b.b) && a.matches(mol, b.a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn table_has_every_published_pairing() {
        assert_eq!(RULES.len(), 46);
        assert_eq!(
            RULES
                .iter()
                .filter(|r| r.bond_order != BondOrder::Single)
                .count(),
            1
        );
    }

    #[test]
    fn ester_environments() {
        let m = parse_smiles("CC(=O)OC").unwrap();
        assert!(L1.matches(&m, 1));
        assert!(L3.matches(&m, 3));
        assert!(!L3.matches(&m, 2));
        assert!(L6.matches(&m, 1));
    }

    #[test]
    fn aromatic_environments() {
        let m = parse_smiles("c1ccncc1").unwrap();
        assert!(L9.matches(&m, 3));
        assert!(L14.matches(&m, 2));
        assert!(L16.matches(&m, 0));
        assert!(!L14.matches(&m, 0));
    }

    #[test]
    fn amide_nitrogen_excluded_from_l5_in_lactam() {
        let lactam = parse_smiles("O=C1CCCN1C").unwrap();
        assert!(!L5.matches(&lactam, 5));
        assert!(L10.matches(&lactam, 5));
        let amine = parse_smiles("CN(C)C").unwrap();
        assert!(L5.matches(&amine, 1));
        let hydrazine = parse_smiles("CNN").unwrap();
        assert!(!L5.matches(&hydrazine, 1));
    }

    #[test]
    fn sulfonyl_and_thioether() {
        let m = parse_smiles("CS(=O)(=O)N").unwrap();
        assert!(L12.matches(&m, 1));
        let m = parse_smiles("CSC").unwrap();
        assert!(L11.matches(&m, 1));
    }
}
