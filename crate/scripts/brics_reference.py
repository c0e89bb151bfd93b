#!/usr/bin/env python3
"""Produce the reference motif partitions used by the fragmentation tests.

Reads SMILES (one per line, optional trailing columns ignored), canonicalises
them with RDKit, and writes `smiles<TAB>{"motifs": [...], "cut_bonds": [...]}`
where cut bonds are RDKit's BRICS bonds plus every bond with exactly one ring
atom, and motifs are the connected components left after removing them.

Usage: brics_reference.py INPUT OUTPUT
"""
import json
import sys

from rdkit import Chem
from rdkit.Chem import BRICS


def partition(mol):
    cut = set()
    for (a, b), _ in BRICS.FindBRICSBonds(mol):
        cut.add((min(a, b), max(a, b)))
    for bond in mol.GetBonds():
        a, b = bond.GetBeginAtom(), bond.GetEndAtom()
        if a.IsInRing() != b.IsInRing():
            i, j = a.GetIdx(), b.GetIdx()
            cut.add((min(i, j), max(i, j)))

    n = mol.GetNumAtoms()
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for bond in mol.GetBonds():
        i, j = bond.GetBeginAtomIdx(), bond.GetEndAtomIdx()
        if (min(i, j), max(i, j)) in cut:
            continue
        parent[find(i)] = find(j)

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    motifs = sorted(groups.values(), key=lambda g: g[0])
    return {"motifs": motifs, "cut_bonds": [list(c) for c in sorted(cut)]}


def main():
    src, dst = sys.argv[1], sys.argv[2]
    seen = set()
    with open(src) as fin, open(dst, "w") as fout:
        for line in fin:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            smi = line.split()[0]
            mol = Chem.MolFromSmiles(smi)
            if mol is None or "." in smi:
                print(f"skip {smi}", file=sys.stderr)
                continue
            can = Chem.MolToSmiles(mol)
            if can in seen or "." in can:
                continue
            seen.add(can)
            # re-read so atom order follows the canonical string
            mol = Chem.MolFromSmiles(can)
            fout.write(f"{can}\t{json.dumps(partition(mol), separators=(',', ':'))}\n")


if __name__ == "__main__":
    main()
