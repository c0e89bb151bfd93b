//! SMILES reader for the subset used by drug-target benchmark corpora.
//!
//! Supported: organic-subset atoms, bracket atoms
//! `[isotope? symbol chirality? hcount? charge? class?]`, bonds `- = # :`,
//! stereo bonds `/ \` (read as single), branches and ring closures (`1`..`9`,
//! `%nn`). Isotopes, chirality and atom classes are parsed and dropped.

use std::collections::BTreeMap;

use super::element::Element;
use super::molecule::{assign_implicit_hydrogens, Atom, Bond, BondOrder, Molecule};
use super::SmilesError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BondSymbol {
    Explicit(BondOrder),
    /// `/` or `\`: a single bond carrying stereo information we discard.
    Directional,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Explicit(order) => order,
            BondSymbol::Directional => BondOrder::Single,
        }
    }
}

struct PendingBond {
    a: usize,
    b: usize,
    symbol: Option<BondSymbol>,
}

struct Parser<'s> {
    src: &'s str,
    bytes: &'s [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<PendingBond>,
    prev: Option<usize>,
    pending: Option<BondSymbol>,
    branches: Vec<usize>,
    open_rings: BTreeMap<u32, (usize, Option<BondSymbol>, usize)>,
}

/// Parses a SMILES string into a validated, connected [`Molecule`].
pub fn parse_smiles(s: &str) -> Result<Molecule, SmilesError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(SmilesError::Empty);
    }
    let mut parser = Parser {
        src: s,
        bytes: s.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        open_rings: BTreeMap::new(),
    };
    parser.run()?;
    parser.finish()
}

impl<'s> Parser<'s> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn unsupported(&self, start: usize, end: usize) -> SmilesError {
        let end = end.clamp(start + 1, self.src.len());
        SmilesError::UnsupportedToken {
            token: self.src.get(start..end).unwrap_or("?").to_string(),
            position: start,
        }
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(SmilesError::UnbalancedParenthesis { position: start });
                    };
                    if self.pending.is_some() {
                        return Err(self.unsupported(start, start + 1));
                    }
                    self.branches.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    let Some(anchor) = self.branches.pop() else {
                        return Err(SmilesError::UnbalancedParenthesis { position: start });
                    };
                    if self.pending.is_some() {
                        return Err(self.unsupported(start, start + 1));
                    }
                    self.prev = Some(anchor);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() || self.prev.is_none() {
                        return Err(self.unsupported(start, start + 1));
                    }
                    self.pending = Some(match c {
                        b'-' => BondSymbol::Explicit(BondOrder::Single),
                        b'=' => BondSymbol::Explicit(BondOrder::Double),
                        b'#' => BondSymbol::Explicit(BondOrder::Triple),
                        b':' => BondSymbol::Explicit(BondOrder::Aromatic),
                        _ => BondSymbol::Directional,
                    });
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure((c - b'0') as u32, start)?;
                }
                b'%' => {
                    let digits = self.src.get(start + 1..start + 3).unwrap_or("");
                    if digits.len() != 2 || !digits.bytes().all(|d| d.is_ascii_digit()) {
                        return Err(self.unsupported(start, start + 3));
                    }
                    self.pos += 3;
                    self.ring_closure(digits.parse().expect("two digits"), start)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom);
                }
                b'.' => return Err(SmilesError::Disconnected),
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom);
                }
            }
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom) {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            self.bonds.push(PendingBond {
                a: prev,
                b: idx,
                symbol: self.pending.take(),
            });
        }
        self.prev = Some(idx);
    }

    fn ring_closure(&mut self, label: u32, position: usize) -> Result<(), SmilesError> {
        let Some(current) = self.prev else {
            return Err(SmilesError::UnbalancedRingClosure { label });
        };
        let symbol = self.pending.take();
        match self.open_rings.remove(&label) {
            None => {
                self.open_rings.insert(label, (current, symbol, position));
            }
            Some((opener, open_symbol, _)) => {
                let symbol = match (open_symbol, symbol) {
                    (Some(a), Some(b)) if a.order() != b.order() => {
                        return Err(SmilesError::RingBondConflict { label })
                    }
                    (a, b) => a.or(b),
                };
                self.bonds.push(PendingBond {
                    a: opener,
                    b: current,
                    symbol,
                });
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let rest = &self.src[start..];
        let (element, aromatic, len) = if rest.starts_with("Cl") {
            (Element::CL, false, 2)
        } else if rest.starts_with("Br") {
            (Element::BR, false, 2)
        } else {
            let c = self.bytes[start];
            let (element, aromatic) = match c {
                b'B' => (Element::B, false),
                b'C' => (Element::C, false),
                b'N' => (Element::N, false),
                b'O' => (Element::O, false),
                b'P' => (Element::P, false),
                b'S' => (Element::S, false),
                b'F' => (Element::F, false),
                b'I' => (Element::I, false),
                b'b' => (Element::B, true),
                b'c' => (Element::C, true),
                b'n' => (Element::N, true),
                b'o' => (Element::O, true),
                b'p' => (Element::P, true),
                b's' => (Element::S, true),
                _ => {
                    let width = rest.chars().next().map_or(1, char::len_utf8);
                    return Err(self.unsupported(start, start + width));
                }
            };
            (element, aromatic, 1)
        };
        self.pos += len;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let Some(close) = self.src[start..].find(']').map(|i| start + i) else {
            return Err(self.unsupported(start, self.src.len()));
        };
        let body = &self.src[start + 1..close];
        let err = || SmilesError::UnsupportedToken {
            token: self.src[start..=close].to_string(),
            position: start,
        };
        let b = body.as_bytes();
        let mut i = 0;

        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }

        let (element, aromatic) = if i < b.len() && b[i].is_ascii_lowercase() {
            let element = match b[i] {
                b'b' => Element::B,
                b'c' => Element::C,
                b'n' => Element::N,
                b'o' => Element::O,
                b'p' => Element::P,
                b's' => Element::S,
                _ => return Err(err()),
            };
            i += 1;
            (element, true)
        } else if i < b.len() && b[i].is_ascii_uppercase() {
            // Prefer the two-letter symbol when it exists (e.g. "Cl" over "C").
            let two = body
                .get(i..i + 2)
                .filter(|s| s.as_bytes()[1].is_ascii_lowercase())
                .and_then(Element::from_symbol);
            match two {
                Some(e) => {
                    i += 2;
                    (e, false)
                }
                None => {
                    let e = Element::from_symbol(&body[i..i + 1]).ok_or_else(err)?;
                    i += 1;
                    (e, false)
                }
            }
        } else {
            return Err(err());
        };

        // chirality: @, @@, or @TH1-style classes
        if i < b.len() && b[i] == b'@' {
            i += 1;
            if i < b.len() && b[i] == b'@' {
                i += 1;
            } else {
                while i < b.len() && b[i].is_ascii_uppercase() && b[i] != b'H' {
                    i += 1;
                }
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }

        let mut hcount = 0u8;
        if i < b.len() && b[i] == b'H' {
            i += 1;
            hcount = 1;
            if i < b.len() && b[i].is_ascii_digit() {
                hcount = b[i] - b'0';
                i += 1;
            }
        }

        let mut charge: i32 = 0;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            let sign = if b[i] == b'+' { 1 } else { -1 };
            let symbol = b[i];
            i += 1;
            let digits_start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i > digits_start {
                charge = sign * body[digits_start..i].parse::<i32>().map_err(|_| err())?;
            } else {
                charge = sign;
                while i < b.len() && b[i] == symbol {
                    charge += sign;
                    i += 1;
                }
            }
        }

        if i < b.len() && b[i] == b':' {
            i += 1;
            let digits_start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i == digits_start {
                return Err(err());
            }
        }

        if i != b.len() || !(-8..=8).contains(&charge) {
            return Err(err());
        }

        self.pos = close + 1;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        atom.formal_charge = charge as i8;
        atom.explicit_h = Some(hcount);
        Ok(atom)
    }

    fn finish(self) -> Result<Molecule, SmilesError> {
        if !self.branches.is_empty() {
            return Err(SmilesError::UnbalancedParenthesis {
                position: self.src.len(),
            });
        }
        if let Some((&label, _)) = self.open_rings.iter().next() {
            return Err(SmilesError::UnbalancedRingClosure { label });
        }
        if self.pending.is_some() {
            return Err(self.unsupported(self.src.len() - 1, self.src.len()));
        }

        let mut atoms = self.atoms;
        let mut implicit_aromatic = Vec::new();
        let mut bonds = Vec::with_capacity(self.bonds.len());
        for (i, pending) in self.bonds.iter().enumerate() {
            let order = match pending.symbol {
                Some(symbol) => symbol.order(),
                None if atoms[pending.a].aromatic && atoms[pending.b].aromatic => {
                    implicit_aromatic.push(i);
                    BondOrder::Aromatic
                }
                None => BondOrder::Single,
            };
            bonds.push(Bond {
                a: pending.a,
                b: pending.b,
                order,
                in_ring: false,
            });
        }

        // An unmarked bond between two aromatic atoms is aromatic only when it
        // closes a cycle; otherwise (e.g. the biphenyl link) it is single.
        let probe = Molecule::from_parts(atoms.clone(), bonds.clone(), self.src)?;
        for i in implicit_aromatic {
            if !probe.bonds()[i].in_ring {
                bonds[i].order = BondOrder::Single;
            }
        }

        assign_implicit_hydrogens(&mut atoms, &bonds)?;
        Molecule::from_parts(atoms, bonds, self.src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elements(m: &Molecule) -> Vec<&'static str> {
        m.atoms().iter().map(|a| a.element.symbol()).collect()
    }

    fn implicit(m: &Molecule) -> Vec<u8> {
        m.atoms().iter().map(|a| a.implicit_h).collect()
    }

    #[test]
    fn ethanol() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(elements(&m), ["C", "C", "O"]);
        assert_eq!(m.bond_count(), 2);
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Single));
        assert_eq!(implicit(&m), [3, 2, 1]);
        assert!(m.atoms().iter().all(|a| !a.in_ring));
    }

    #[test]
    fn benzene() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert!(m.atoms().iter().all(|a| a.aromatic && a.in_ring));
        assert!(m
            .bonds()
            .iter()
            .all(|b| b.order == BondOrder::Aromatic && b.in_ring));
        assert_eq!(implicit(&m), [1; 6]);
    }

    #[test]
    fn aspirin_counts() {
        let m = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        assert_eq!(m.atom_count(), 13);
        assert_eq!(m.bond_count(), 13);
        assert_eq!(m.atoms().iter().filter(|a| a.in_ring).count(), 6);
    }

    #[test]
    fn branches_and_bond_symbols() {
        let m = parse_smiles("CC(C)(C)C#N").unwrap();
        assert_eq!(m.degree(1), 4);
        assert_eq!(m.bonds()[4].order, BondOrder::Triple);
        assert_eq!(implicit(&m), [3, 0, 3, 3, 0, 0]);

        let m = parse_smiles("C=CC=O").unwrap();
        assert_eq!(implicit(&m), [2, 1, 1, 0]);
    }

    #[test]
    fn stereo_marks_read_as_single_bonds() {
        let m = parse_smiles("F/C=C/F").unwrap();
        let orders: Vec<_> = m.bonds().iter().map(|b| b.order).collect();
        assert_eq!(
            orders,
            [BondOrder::Single, BondOrder::Double, BondOrder::Single]
        );
        let m = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(m.atoms()[1].explicit_h, Some(1));
        assert_eq!(m.atoms()[1].implicit_h, 0);
    }

    #[test]
    fn bracket_atoms() {
        let m = parse_smiles("[13CH3][N+](=O)[O-]").unwrap();
        assert_eq!(m.atoms()[0].element, Element::C);
        assert_eq!(m.atoms()[0].explicit_h, Some(3));
        assert_eq!(m.atoms()[1].formal_charge, 1);
        assert_eq!(m.atoms()[3].formal_charge, -1);
        assert_eq!(parse_smiles("[Fe++]").unwrap().atoms()[0].formal_charge, 2);
        assert_eq!(parse_smiles("[Cu+2]").unwrap().atoms()[0].formal_charge, 2);
        let pyrrole = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(pyrrole.atoms()[3].total_h(), 1);
        assert!(pyrrole.atoms()[3].aromatic);
        assert_eq!(parse_smiles("[CH3:7]C").unwrap().atom_count(), 2);
        // aromatic selenium is outside the supported aromatic set
        assert!(parse_smiles("[se]1cccc1").is_err());
    }

    #[test]
    fn percent_ring_labels_and_reuse() {
        let m = parse_smiles("C%12CC%12").unwrap();
        assert_eq!(m.bond_count(), 3);
        let m = parse_smiles("C1CC1C1CC1").unwrap();
        assert_eq!(m.bond_count(), 7);
        assert_eq!(m.atoms().iter().filter(|a| a.in_ring).count(), 6);
    }

    #[test]
    fn ring_bond_symbol_on_either_end() {
        let m = parse_smiles("C=1CCC1").unwrap();
        assert_eq!(m.bonds()[3].order, BondOrder::Double);
        let m = parse_smiles("C1CCC=1").unwrap();
        assert_eq!(m.bonds()[3].order, BondOrder::Double);
        assert!(matches!(
            parse_smiles("C=1CCC#1"),
            Err(SmilesError::RingBondConflict { label: 1 })
        ));
    }

    #[test]
    fn biphenyl_link_is_single() {
        let m = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        let link = m.bond_between(5, 6).unwrap();
        assert_eq!(m.bonds()[link].order, BondOrder::Single);
        assert!(!m.bonds()[link].in_ring);
        assert_eq!(m.atoms()[5].implicit_h, 0);
    }

    #[test]
    fn aromatic_heteroatoms_get_no_hydrogen() {
        let m = parse_smiles("c1ccncc1").unwrap();
        assert_eq!(implicit(&m), [1, 1, 1, 0, 1, 1]);
        let m = parse_smiles("c1ccsc1").unwrap();
        assert_eq!(implicit(&m), [1, 1, 1, 0, 1]);
        let m = parse_smiles("Cn1c(=O)c2c(ncn2C)n(C)c1=O").unwrap();
        assert_eq!(m.atoms()[2].implicit_h, 0);
    }

    #[test]
    fn hypervalent_sulfur_and_phosphorus() {
        let m = parse_smiles("CS(=O)(=O)C").unwrap();
        assert_eq!(m.atoms()[1].implicit_h, 0);
        let m = parse_smiles("CS(=O)C").unwrap();
        assert_eq!(m.atoms()[1].implicit_h, 0);
        let m = parse_smiles("S(=O)C").unwrap();
        assert_eq!(m.atoms()[0].implicit_h, 1);
        let m = parse_smiles("OP(=O)(O)O").unwrap();
        assert_eq!(m.atoms()[1].implicit_h, 0);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_smiles(""), Err(SmilesError::Empty)));
        assert!(matches!(
            parse_smiles("C*C"),
            Err(SmilesError::UnsupportedToken { position: 1, .. })
        ));
        assert!(matches!(
            parse_smiles("CC>CC"),
            Err(SmilesError::UnsupportedToken { .. })
        ));
        assert!(matches!(
            parse_smiles("[Xx]"),
            Err(SmilesError::UnsupportedToken { .. })
        ));
        assert!(matches!(
            parse_smiles("C1CC"),
            Err(SmilesError::UnbalancedRingClosure { label: 1 })
        ));
        assert!(matches!(
            parse_smiles("CC(C"),
            Err(SmilesError::UnbalancedParenthesis { .. })
        ));
        assert!(matches!(
            parse_smiles("CC)C"),
            Err(SmilesError::UnbalancedParenthesis { .. })
        ));
        assert!(matches!(
            parse_smiles("CC.O"),
            Err(SmilesError::Disconnected)
        ));
        assert!(matches!(
            parse_smiles("C(C)(C)(C)(C)C"),
            Err(SmilesError::ValenceExceeded { atom: 0, .. })
        ));
        assert!(matches!(
            parse_smiles("O=O=O"),
            Err(SmilesError::ValenceExceeded { atom: 1, .. })
        ));
        assert!(matches!(
            parse_smiles("C11"),
            Err(SmilesError::InvalidBond { .. })
        ));
        assert!(matches!(
            parse_smiles("C1C1"),
            Err(SmilesError::InvalidBond { .. })
        ));
        assert!(parse_smiles("C=").is_err());
        assert!(parse_smiles("=C").is_err());
        assert!(parse_smiles("[C").is_err());
    }
}
