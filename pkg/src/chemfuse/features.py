"""Featurization, circular fingerprints, functional groups, and scaffolds.

Everything here is deterministic: the fingerprint hash is a fixed 64-bit
mixing function (no process salt), functional groups are explicit graph
predicates, and scaffold keys come from canonical ranks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chem.canon import canonical_key
from .chem.graph import Atom, Bond, BondOrder, Chirality, MolecularGraph
from .chem.parser import _fill_implicit_h

# ------------------------------------------------------------------ features

#: Fixed element list for the one-hot block; anything else maps to Other.
ELEMENTS = ("C", "N", "O", "S", "P", "F", "Cl", "Br", "I",
            "B", "Si", "Se", "Na", "K", "Li", "Ca")

_N_ELEM = len(ELEMENTS) + 1          # + Other
_N_DEGREE = 6                        # 0..5, clamped
_N_CHARGE = 5                        # -2..2, clamped
_N_H = 5                             # 0..4, clamped
_N_CHIRAL = 3                        # None, CW, CCW

#: Total width of one atom feature row (last slot is the mask flag).
ATOM_FEATURE_DIM = _N_ELEM + _N_DEGREE + _N_CHARGE + 1 + _N_H + _N_CHIRAL + 1

#: Bond feature width: order one-hot {single,double,triple,aromatic} +
#: ring flag + mask flag.
BOND_FEATURE_DIM = 4 + 1 + 1

_CHIRAL_SLOT = {Chirality.NONE: 0, Chirality.CW: 1, Chirality.CCW: 2}
_ORDER_SLOT = {BondOrder.SINGLE: 0, BondOrder.DOUBLE: 1,
               BondOrder.TRIPLE: 2, BondOrder.AROMATIC: 3}


def atom_feature_row(atom: Atom) -> np.ndarray:
    row = np.zeros(ATOM_FEATURE_DIM, dtype=np.float64)
    try:
        row[ELEMENTS.index(atom.element)] = 1.0
    except ValueError:
        row[_N_ELEM - 1] = 1.0
    base = _N_ELEM
    row[base + min(atom.degree, _N_DEGREE - 1)] = 1.0
    base += _N_DEGREE
    row[base + min(max(atom.formal_charge, -2), 2) + 2] = 1.0
    base += _N_CHARGE
    row[base] = 1.0 if atom.aromatic else 0.0
    base += 1
    row[base + min(atom.total_h, _N_H - 1)] = 1.0
    base += _N_H
    row[base + _CHIRAL_SLOT[atom.chirality]] = 1.0
    return row


def bond_feature_row(bond: Bond) -> np.ndarray:
    row = np.zeros(BOND_FEATURE_DIM, dtype=np.float64)
    row[_ORDER_SLOT[bond.order]] = 1.0
    row[4] = 1.0 if bond.in_ring else 0.0
    return row


def masked_atom_row() -> np.ndarray:
    row = np.zeros(ATOM_FEATURE_DIM, dtype=np.float64)
    row[-1] = 1.0
    return row


def masked_bond_row() -> np.ndarray:
    row = np.zeros(BOND_FEATURE_DIM, dtype=np.float64)
    row[-1] = 1.0
    return row


def featurize(graph: MolecularGraph) -> tuple[np.ndarray, np.ndarray]:
    """One feature row per atom and per bond (unmasked)."""
    atoms = np.stack([atom_feature_row(a) for a in graph.atoms]) if graph.m else \
        np.zeros((0, ATOM_FEATURE_DIM))
    bonds = np.stack([bond_feature_row(b) for b in graph.bonds]) if graph.bonds else \
        np.zeros((0, BOND_FEATURE_DIM))
    return atoms, bonds


# --------------------------------------------------------------- fingerprint

_MIX_CONST = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _mix64(value: int) -> int:
    """splitmix64 finalizer: deterministic across platforms and runs."""
    z = (value + _MIX_CONST) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _hash_tuple(items: tuple) -> int:
    h = 0x51AFD7ED558CCD25
    for item in items:
        h = _mix64(h ^ _mix64(item))
    return h


_ELEMENT_CODE = {sym: i for i, sym in enumerate(
    "H B C N O F Na Mg Si P S Cl K Ca Se Br I".split(), start=1)}


def _seed_atom_id(graph: MolecularGraph, i: int) -> int:
    a = graph.atoms[i]
    code = _ELEMENT_CODE.get(a.element, 0)
    return _hash_tuple((code, a.degree, a.formal_charge + 16, a.total_h,
                        int(a.aromatic)))


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-width circular fingerprint bit vector."""

    bits: np.ndarray
    radius: int

    @property
    def width(self) -> int:
        return int(self.bits.shape[0])

    def popcount(self) -> int:
        return int(self.bits.sum())

    def to_hex(self) -> str:
        return bytes(np.packbits(self.bits.astype(np.uint8))).hex()


def morgan_fingerprint(graph: MolecularGraph, radius: int = 2,
                       width: int = 2048) -> Fingerprint:
    """Iterative neighborhood-hash fingerprint.

    Atom identifiers start from (element, degree, charge, H-count, aromatic)
    and are rehashed ``radius`` times over sorted (bond order, neighbor id)
    tuples. An environment whose bond set stopped growing is a duplicate of
    the previous radius and sets no new bit. Bit index = id mod width.
    """
    if width < 64 or width & (width - 1):
        raise ValueError(f"width must be a power of two >= 64, got {width}")
    bits = np.zeros(width, dtype=np.uint8)
    ids = [_seed_atom_id(graph, i) for i in range(graph.m)]
    for aid in ids:
        bits[aid % width] = 1

    # bond_envs[i] = set of bond indices within the current radius of atom i.
    bond_envs: list[frozenset[int]] = [frozenset() for _ in range(graph.m)]
    alive = [True] * graph.m
    for _ in range(radius):
        new_ids = []
        new_envs = []
        for i in range(graph.m):
            neighborhood = tuple(sorted(
                (bond.order.value, ids[j]) for j, bond in graph.neighbors(i)
            ))
            new_ids.append(_hash_tuple((ids[i],) + tuple(
                x for pair in neighborhood for x in pair)))
            env = set(bond_envs[i])
            env.update(graph.adjacency[i])
            for j, _ in graph.neighbors(i):
                env.update(bond_envs[j])
            new_envs.append(frozenset(env))
        for i in range(graph.m):
            if alive[i] and new_envs[i] != bond_envs[i]:
                bits[new_ids[i] % width] = 1
            elif new_envs[i] == bond_envs[i]:
                alive[i] = False
        ids = new_ids
        bond_envs = new_envs
    return Fingerprint(bits=bits, radius=radius)


# ---------------------------------------------------------- functional groups

def _is_carbonyl_c(g: MolecularGraph, i: int) -> bool:
    a = g.atoms[i]
    return a.element == "C" and not a.aromatic and any(
        bond.order is BondOrder.DOUBLE and g.atoms[j].element == "O"
        for j, bond in g.neighbors(i)
    )


def _hydroxyl_o(g: MolecularGraph, i: int) -> bool:
    a = g.atoms[i]
    return (a.element == "O" and not a.aromatic and a.formal_charge == 0
            and a.degree == 1 and a.total_h >= 1)


def _single_c_neighbors(g: MolecularGraph, i: int) -> list[int]:
    return [j for j, bond in g.neighbors(i)
            if bond.order is BondOrder.SINGLE and g.atoms[j].element == "C"]


def _has_hydroxyl(g):
    for idx, a in enumerate(g.atoms):
        if not _hydroxyl_o(g, idx):
            continue
        j = g.neighbors(idx)[0][0]
        nb = g.atoms[j]
        if nb.element == "C" and not nb.aromatic and not _is_carbonyl_c(g, j):
            return True
    return False


def _has_phenol(g):
    for idx in range(g.m):
        if _hydroxyl_o(g, idx):
            j = g.neighbors(idx)[0][0]
            if g.atoms[j].element == "C" and g.atoms[j].aromatic:
                return True
    return False


def _has_carboxylic_acid(g):
    for i in range(g.m):
        if not _is_carbonyl_c(g, i):
            continue
        for j, bond in g.neighbors(i):
            if bond.order is BondOrder.SINGLE and g.atoms[j].element == "O":
                o = g.atoms[j]
                if o.degree == 1 and (o.total_h >= 1 or o.formal_charge == -1):
                    return True
    return False


def _has_ester(g):
    for i in range(g.m):
        if not _is_carbonyl_c(g, i):
            continue
        for j, bond in g.neighbors(i):
            if (bond.order is BondOrder.SINGLE and g.atoms[j].element == "O"
                    and g.atoms[j].degree == 2):
                return True
    return False


def _has_amide(g):
    return any(
        _is_carbonyl_c(g, i) and any(
            bond.order is BondOrder.SINGLE and g.atoms[j].element == "N"
            for j, bond in g.neighbors(i))
        for i in range(g.m)
    )


def _has_aldehyde(g):
    return any(
        _is_carbonyl_c(g, i) and g.atoms[i].total_h >= 1
        for i in range(g.m)
    )


def _has_ketone(g):
    for i in range(g.m):
        if not _is_carbonyl_c(g, i) or g.atoms[i].total_h:
            continue
        if len(_single_c_neighbors(g, i)) == 2:
            return True
    return False


def _has_ether(g):
    for i, a in enumerate(g.atoms):
        if a.element != "O" or a.aromatic or a.degree != 2 or a.formal_charge:
            continue
        nbrs = g.neighbors(i)
        if all(bond.order is BondOrder.SINGLE and g.atoms[j].element == "C"
               and not _is_carbonyl_c(g, j) for j, bond in nbrs):
            return True
    return False


def _plain_amine_n(g, i):
    a = g.atoms[i]
    if a.element != "N" or a.aromatic or a.formal_charge != 0:
        return False
    nbrs = g.neighbors(i)
    if any(bond.order is not BondOrder.SINGLE for _, bond in nbrs):
        return False
    if any(g.atoms[j].element != "C" or _is_carbonyl_c(g, j) for j, _ in nbrs):
        return False
    return True


def _has_amine_of_degree(g, degree):
    return any(
        _plain_amine_n(g, i) and g.atoms[i].degree == degree
        for i in range(g.m)
    )


def _has_nitro(g):
    for i, a in enumerate(g.atoms):
        if a.element != "N":
            continue
        terminal_o = [
            (j, bond) for j, bond in g.neighbors(i)
            if g.atoms[j].element == "O" and g.atoms[j].degree == 1
        ]
        if len(terminal_o) >= 2 and any(
                bond.order is BondOrder.DOUBLE for _, bond in terminal_o):
            return True
    return False


def _has_nitrile(g):
    return any(
        bond.order is BondOrder.TRIPLE
        and {g.atoms[bond.a].element, g.atoms[bond.b].element} == {"C", "N"}
        for bond in g.bonds
    )


def _has_thiol(g):
    return any(
        a.element == "S" and not a.aromatic and a.degree == 1 and a.total_h >= 1
        for a in g.atoms
    )


def _sulfonyl_s(g, i):
    return g.atoms[i].element == "S" and sum(
        1 for j, bond in g.neighbors(i)
        if bond.order is BondOrder.DOUBLE and g.atoms[j].element == "O"
    ) >= 2


def _has_thioether(g):
    for i, a in enumerate(g.atoms):
        if (a.element == "S" and not a.aromatic and a.degree == 2
                and not _sulfonyl_s(g, i)
                and all(bond.order is BondOrder.SINGLE and g.atoms[j].element == "C"
                        for j, bond in g.neighbors(i))):
            return True
    return False


def _has_sulfonamide(g):
    return any(
        _sulfonyl_s(g, i) and any(
            bond.order is BondOrder.SINGLE and g.atoms[j].element == "N"
            for j, bond in g.neighbors(i))
        for i in range(g.m)
    )


def _has_sulfone(g):
    for i in range(g.m):
        if not _sulfonyl_s(g, i):
            continue
        single = [(j, b) for j, b in g.neighbors(i) if b.order is BondOrder.SINGLE]
        if len(single) == 2 and all(g.atoms[j].element == "C" for j, _ in single):
            return True
    return False


def _has_halogen(elem):
    def check(g):
        return any(a.element == elem for a in g.atoms)
    return check


def _has_aromatic_ring(g):
    return any(a.aromatic and a.in_ring for a in g.atoms)


def _has_nonaromatic_ring(g):
    return any(b.in_ring and b.order is not BondOrder.AROMATIC for b in g.bonds)


def _has_alkene(g):
    return any(
        b.order is BondOrder.DOUBLE
        and g.atoms[b.a].element == "C" and g.atoms[b.b].element == "C"
        and not (g.atoms[b.a].aromatic or g.atoms[b.b].aromatic)
        for b in g.bonds
    )


#: Group name -> predicate, in fixed bit order (width 24).
FUNCTIONAL_GROUPS = (
    ("hydroxyl", _has_hydroxyl),
    ("phenol", _has_phenol),
    ("carboxylic_acid", _has_carboxylic_acid),
    ("ester", _has_ester),
    ("amide", _has_amide),
    ("aldehyde", _has_aldehyde),
    ("ketone", _has_ketone),
    ("ether", _has_ether),
    ("primary_amine", lambda g: _has_amine_of_degree(g, 1)),
    ("secondary_amine", lambda g: _has_amine_of_degree(g, 2)),
    ("tertiary_amine", lambda g: _has_amine_of_degree(g, 3)),
    ("nitro", _has_nitro),
    ("nitrile", _has_nitrile),
    ("thiol", _has_thiol),
    ("thioether", _has_thioether),
    ("sulfonamide", _has_sulfonamide),
    ("sulfone", _has_sulfone),
    ("fluoro", _has_halogen("F")),
    ("chloro", _has_halogen("Cl")),
    ("bromo", _has_halogen("Br")),
    ("iodo", _has_halogen("I")),
    ("aromatic_ring", _has_aromatic_ring),
    ("nonaromatic_ring", _has_nonaromatic_ring),
    ("alkene", _has_alkene),
)

GROUP_NAMES = tuple(name for name, _ in FUNCTIONAL_GROUPS)
N_GROUPS = len(FUNCTIONAL_GROUPS)


def detect_functional_groups(graph: MolecularGraph) -> np.ndarray:
    """Presence bit per catalog group (width 24, dtype uint8)."""
    return np.array([1 if pred(graph) else 0 for _, pred in FUNCTIONAL_GROUPS],
                    dtype=np.uint8)


def group_names_present(graph: MolecularGraph) -> list[str]:
    bits = detect_functional_groups(graph)
    return [name for name, bit in zip(GROUP_NAMES, bits) if bit]


# ------------------------------------------------------------------ scaffold

def murcko_scaffold(graph: MolecularGraph) -> MolecularGraph:
    """Ring systems plus linkers: prune degree-1 non-ring atoms to fixpoint.

    Acyclic molecules reduce to the empty graph.
    """
    keep = set(range(graph.m))
    degree = {i: graph.atoms[i].degree for i in keep}
    changed = True
    while changed:
        changed = False
        for i in sorted(keep):
            if degree[i] <= 1 and not graph.atoms[i].in_ring:
                keep.discard(i)
                for j, _ in graph.neighbors(i):
                    if j in keep:
                        degree[j] -= 1
                changed = True
    remap = {old: new for new, old in enumerate(sorted(keep))}
    out = MolecularGraph()
    for old in sorted(keep):
        a = graph.atoms[old]
        out.add_atom(Atom(element=a.element, aromatic=a.aromatic,
                          formal_charge=a.formal_charge, explicit_h=a.explicit_h,
                          chirality=a.chirality))
    for b in graph.bonds:
        if b.a in remap and b.b in remap:
            out.add_bond(Bond(a=remap[b.a], b=remap[b.b], order=b.order))
    out.mark_rings()
    # Hydrogens are refilled for the pruned bond pattern so that, e.g.,
    # the scaffold of toluene keys identically to benzene.
    _fill_implicit_h(out)
    return out


def scaffold_key(graph: MolecularGraph) -> str:
    """Canonical grouping key of a molecule's scaffold ('' when acyclic)."""
    return canonical_key(murcko_scaffold(graph))


class EmptyCorpus(ValueError):
    """Raised when a split or vocabulary build receives no molecules."""


def scaffold_split(keys: list[str],
                   fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
                   ) -> tuple[list[int], list[int], list[int]]:
    """Partition indices so no scaffold key spans two splits.

    Groups are sorted by descending size then key, and assigned greedily:
    train until it holds at least the train fraction, then valid, then test.
    """
    if not keys:
        raise EmptyCorpus("cannot split an empty corpus")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    groups: dict[str, list[int]] = {}
    for idx, key in enumerate(keys):
        groups.setdefault(key, []).append(idx)
    ordered = sorted(groups.values(), key=lambda g: (-len(g), keys[g[0]]))
    n = len(keys)
    n_train = fractions[0] * n
    n_valid = fractions[1] * n
    train: list[int] = []
    valid: list[int] = []
    test: list[int] = []
    for group in ordered:
        if len(train) < n_train:
            train.extend(group)
        elif len(valid) < n_valid:
            valid.extend(group)
        else:
            test.extend(group)
    return sorted(train), sorted(valid), sorted(test)
