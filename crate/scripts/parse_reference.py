#!/usr/bin/env python3
"""Per-molecule parse facts from RDKit for the SMILES parser tests.

Output columns: smiles, atom count, bond count, ring-atom count,
comma-separated total hydrogen count per atom.

Usage: parse_reference.py INPUT_TSV OUTPUT
"""
import sys

from rdkit import Chem


def main():
    with open(sys.argv[1]) as fin, open(sys.argv[2], "w") as fout:
        for line in fin:
            smi = line.split("\t")[0].strip()
            mol = Chem.MolFromSmiles(smi)
            ring = sum(1 for a in mol.GetAtoms() if a.IsInRing())
            hs = ",".join(str(a.GetTotalNumHs()) for a in mol.GetAtoms())
            fout.write(f"{smi}\t{mol.GetNumAtoms()}\t{mol.GetNumBonds()}\t{ring}\t{hs}\n")


if __name__ == "__main__":
    main()
