//! Synthetic molecules and drug-target pairs for sweeps and smoke tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chem::{parse_smiles, Molecule};
use crate::data::DtiRecord;
use crate::model::ALPHABET;

/// Ring blocks; `{}` stands for a fresh ring-closure label.
const RINGS: &[&str] = &[
    "c{}ccccc{}",
    "c{}ccncc{}",
    "c{}ccc(O)cc{}",
    "C{}CCNCC{}",
    "C{}CCCC{}",
    "C{}CC{}",
    "c{}ccsc{}",
    "c{}cc[nH]c{}",
    "C{}CCOC{}",
    "c{}ccc2ccccc2c{}",
    "N{}CCN(C)CC{}",
    "c{}cnc(N)nc{}",
];

/// Acyclic blocks written left to right.
const CHAINS: &[&str] = &[
    "C",
    "C",
    "C",
    "CC",
    "N",
    "O",
    "C(=O)",
    "C(=O)N",
    "C(=O)O",
    "S(=O)(=O)",
    "S",
    "C(F)(F)F",
    "Cl",
    "Br",
    "C=C",
    "C#N",
    "OC",
    "N(C)C",
    "[N+](=O)[O-]",
    "P(=O)(O)O",
];

/// Grows random SMILES strings from ring and chain blocks with branches.
pub struct SmilesGenerator {
    rng: ChaCha8Rng,
    next_label: usize,
}

impl SmilesGenerator {
    pub fn new(seed: u64) -> SmilesGenerator {
        SmilesGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_label: 10,
        }
    }

    fn block(&mut self) -> String {
        if self.rng.gen_bool(0.35) {
            let t = RINGS.choose(&mut self.rng).expect("rings");
            let label = format!("%{}", self.next_label);
            self.next_label += 1;
            t.replace("{}", &label)
        } else {
            CHAINS.choose(&mut self.rng).expect("chains").to_string()
        }
    }

    fn chain(&mut self, depth: usize) -> String {
        let len = self.rng.gen_range(1..=if depth == 0 { 6 } else { 3 });
        let mut s = String::new();
        for _ in 0..len {
            s.push_str(&self.block());
            if depth < 2 && self.rng.gen_bool(0.25) {
                let branch = self.chain(depth + 1);
                s.push('(');
                s.push_str(&branch);
                s.push(')');
            }
        }
        s
    }

    /// A random SMILES string; not guaranteed to be chemically valid.
    pub fn smiles(&mut self) -> String {
        self.next_label = 10;
        self.chain(0)
    }

    /// The next random string that parses.
    pub fn molecule(&mut self) -> (String, Molecule) {
        loop {
            let s = self.smiles();
            if let Ok(m) = parse_smiles(&s) {
                return (s, m);
            }
        }
    }
}

/// `n` parseable random molecules.
pub fn random_molecules(n: usize, seed: u64) -> Vec<(String, Molecule)> {
    let mut g = SmilesGenerator::new(seed);
    (0..n).map(|_| g.molecule()).collect()
}

/// A random protein sequence over the 20 standard residues.
pub fn random_protein(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| char::from(ALPHABET[rng.gen_range(0..20)]))
        .collect()
}

const POSITIVE_DRUG_TAIL: &str = "S(=O)(=O)N";
const POSITIVE_MOTIF: &str = "WCW";

/// Balanced, separable drug-target pairs. Positives pair a drug carrying a
/// sulfonamide tail with a protein containing the residues `WCW`; negatives
/// have neither. Negative sequences avoid `W` and `C` entirely.
pub fn separable_fixture(n: usize, seed: u64) -> Vec<DtiRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = SmilesGenerator::new(seed.wrapping_add(1));
    let plain: Vec<u8> = ALPHABET[..20]
        .iter()
        .copied()
        .filter(|&c| c != b'W' && c != b'C')
        .collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let label = (out.len() % 2) as u8;
        let (smiles, _) = gen.molecule();
        if smiles.contains('S') || smiles.contains('s') {
            continue;
        }
        let len = rng.gen_range(12..24);
        let mut seq: String = (0..len)
            .map(|_| char::from(*plain.choose(&mut rng).expect("residues")))
            .collect();
        let smiles = if label == 1 {
            let at = rng.gen_range(0..=seq.len());
            seq.insert_str(at, POSITIVE_MOTIF);
            format!("{smiles}{POSITIVE_DRUG_TAIL}")
        } else {
            smiles
        };
        if parse_smiles(&smiles).is_err() {
            continue;
        }
        out.push(DtiRecord {
            smiles,
            sequence: seq,
            label,
        });
    }
    out
}
