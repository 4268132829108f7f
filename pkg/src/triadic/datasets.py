"""Triple datasets: generators, splits, and TSV round-tripping.

Three built-in families, all deterministic given a seed:

* ``gen_parity``: residues 0..k-1 as a shared entity/relation vocabulary;
  (h, r, t) is positive iff (h + r + t) mod k == 0.  No pairwise function
  of two of the slots decides validity, so any model that succeeds must
  use genuinely three-way structure.
* ``gen_rules``: sampled "if A and B then C" atoms encoded as triples
  (A, B, C) with B in the relation slot.
* ``gen_toy_kg``: a small sampled family tree with eight kinship relations
  and compositional regularities (parent of parent is grandparent, etc.).

On disk a dataset is a directory of train.tsv / valid.tsv / test.tsv, one
``head<TAB>relation<TAB>tail`` line per triple, UTF-8, no header.  Ids are
assigned by lexicographic name order, so they are independent of file
ordering; the generators zero-pad numeric names to keep that order natural.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParseError

Triple = tuple[int, int, int]


@dataclass(frozen=True)
class TripleDataset:
    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    train: np.ndarray  # (n, 3) int64 columns h, r, t
    valid: np.ndarray
    test: np.ndarray
    all_true: frozenset[Triple]

    def __post_init__(self):
        seen: set[Triple] = set()
        for split in (self.train, self.valid, self.test):
            for h, r, t in split:
                trip = (int(h), int(r), int(t))
                if trip in seen:
                    raise DataError(f"triple {trip} appears in more than one split")
                seen.add(trip)
                if not (0 <= trip[0] < len(self.entity_names)
                        and 0 <= trip[2] < len(self.entity_names)):
                    raise DataError(f"entity id out of range in {trip}")
                if not 0 <= trip[1] < len(self.relation_names):
                    raise DataError(f"relation id out of range in {trip}")
        if not seen <= self.all_true:
            raise DataError("all_true must contain every split triple")

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    def entity_id(self, name: str) -> int:
        return self.entity_names.index(name)

    def relation_id(self, name: str) -> int:
        return self.relation_names.index(name)


@dataclass(frozen=True)
class RuleSet:
    """Triadic implications (A, B, C): "if A and B then C", as entity ids."""

    rules: tuple[Triple, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(set(self.rules)) != len(self.rules):
            raise DataError("duplicate rules")


def _as_triples(rows: list[Triple]) -> np.ndarray:
    return np.array(rows, dtype=np.int64).reshape(len(rows), 3)


def _split_counts(n: int) -> tuple[int, int, int]:
    """80/10/10; train is never empty, and all three are nonempty once n >= 3."""
    n_train = max(1, int(0.8 * n))
    n_valid = int(0.1 * n)
    n_test = n - n_train - n_valid
    if n >= 3:
        if n_valid == 0:
            n_valid = 1
        if n_test <= 0:
            n_test = 1
        n_train = n - n_valid - n_test
    return n_train, n_valid, n_test


def _split(positives: list[Triple], seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 77])
    order = rng.permutation(len(positives))
    shuffled = [positives[i] for i in order]
    n_train, n_valid, _ = _split_counts(len(positives))
    return (_as_triples(shuffled[:n_train]),
            _as_triples(shuffled[n_train:n_train + n_valid]),
            _as_triples(shuffled[n_train + n_valid:]))


def _residue_names(k: int) -> tuple[str, ...]:
    width = len(str(k - 1))
    return tuple(str(i).zfill(width) for i in range(k))


def gen_parity(k: int, n_per_class: int | None = None, neg_ratio: float = 0.0,
               seed: int = 0) -> TripleDataset:
    """Modular-sum dataset over residues 0..k-1.

    Positives are all (h, r, t) with (h + r + t) mod k == 0; there are k of
    them for each head residue ("class").  ``n_per_class`` caps how many
    are kept per class (None keeps all).  Negatives are never materialized
    (ranking-style training corrupts tails on the fly), so ``neg_ratio``
    is accepted for interface stability and currently ignored.
    ``all_true`` always holds the complete positive set, even when the
    splits subsample it.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if n_per_class is not None and not 1 <= n_per_class <= k:
        raise ConfigError(f"n_per_class must be in 1..{k}, got {n_per_class}")
    if neg_ratio < 0:
        raise ConfigError(f"neg_ratio must be >= 0, got {neg_ratio}")
    all_pos = [(h, r, (-h - r) % k) for h in range(k) for r in range(k)]
    if n_per_class is None or n_per_class == k:
        kept = all_pos
    else:
        rng = np.random.default_rng([seed, 13])
        kept = []
        for h in range(k):
            cls = [p for p in all_pos if p[0] == h]
            picks = rng.choice(k, size=n_per_class, replace=False)
            kept.extend(cls[i] for i in sorted(picks))
    train, valid, test = _split(kept, seed)
    names = _residue_names(k)
    return TripleDataset(entity_names=names, relation_names=names,
                         train=train, valid=valid, test=test,
                         all_true=frozenset(all_pos))


def gen_rules(n_atoms: int, n_rules: int, seed: int = 0) -> tuple[TripleDataset, RuleSet]:
    """Sampled distinct implications (A, B, C) over ``n_atoms`` symbols.

    Each rule doubles as the positive triple (A, B, C), with the middle
    atom in the relation slot so the operator consumes the whole rule.
    """
    if n_atoms < 3:
        raise ConfigError(f"n_atoms must be >= 3, got {n_atoms}")
    space = n_atoms ** 3
    if not 1 <= n_rules <= space:
        raise ConfigError(f"n_rules must be in 1..{space}, got {n_rules}")
    rng = np.random.default_rng([seed, 29])
    codes = rng.choice(space, size=n_rules, replace=False)
    rules = sorted((int(c) // (n_atoms * n_atoms),
                    (int(c) // n_atoms) % n_atoms,
                    int(c) % n_atoms) for c in codes)
    train, valid, test = _split(rules, seed)
    width = len(str(n_atoms - 1))
    names = tuple(f"atom{str(i).zfill(width)}" for i in range(n_atoms))
    dataset = TripleDataset(entity_names=names, relation_names=names,
                            train=train, valid=valid, test=test,
                            all_true=frozenset(rules))
    return dataset, RuleSet(rules=tuple(rules))


# kept sorted so ids survive a TSV round trip unchanged
_KG_RELATIONS = ("child", "grandchild", "grandparent", "nephew_or_niece",
                 "parent", "sibling", "spouse", "uncle_or_aunt")


def gen_toy_kg(seed: int = 0) -> TripleDataset:
    """A three-generation family tree of roughly a hundred people.

    Triples read (x, rel, y) = "y is x's rel".  All eight relations are
    materialized exhaustively from the sampled tree, so compositional facts
    like (x, parent, y), (y, parent, z) => (x, grandparent, z) hold inside
    ``all_true`` by construction.
    """
    rng = np.random.default_rng([seed, 101])
    parents_of: dict[int, tuple[int, int]] = {}
    spouses: list[tuple[int, int]] = []
    next_id = 0

    def new_person() -> int:
        nonlocal next_id
        next_id += 1
        return next_id - 1

    # generation 0: ten founding couples
    gen0 = [(new_person(), new_person()) for _ in range(10)]
    spouses.extend(gen0)
    gen1: list[int] = []
    for couple in gen0:
        for _ in range(int(rng.integers(2, 5))):
            c = new_person()
            parents_of[c] = couple
            gen1.append(c)
    # generation 1 pairs up (partner may marry in from outside)
    candidates = list(gen1)
    gen1_couples: list[tuple[int, int]] = []
    while len(candidates) >= 2:
        a = candidates.pop(0)
        # avoid sibling marriages; pull an outsider when none is eligible
        eligible = [b for b in candidates if parents_of[b] != parents_of[a]]
        if eligible and rng.random() < 0.7:
            b = eligible[int(rng.integers(len(eligible)))]
            candidates.remove(b)
        else:
            b = new_person()
        gen1_couples.append((a, b))
    spouses.extend(gen1_couples)
    for couple in gen1_couples:
        for _ in range(int(rng.integers(1, 5))):
            c = new_person()
            parents_of[c] = couple

    n = next_id
    names = tuple(f"p{str(i).zfill(3)}" for i in range(n))
    rel_id = {r: i for i, r in enumerate(_KG_RELATIONS)}

    facts: set[Triple] = set()
    for child, (pa, pb) in parents_of.items():
        for p in (pa, pb):
            facts.add((child, rel_id["parent"], p))
            facts.add((p, rel_id["child"], child))
    for child, ps in parents_of.items():
        for p in ps:
            if p in parents_of:
                for gp in parents_of[p]:
                    facts.add((child, rel_id["grandparent"], gp))
                    facts.add((gp, rel_id["grandchild"], child))
    by_parents: dict[tuple[int, int], list[int]] = {}
    for child, ps in parents_of.items():
        by_parents.setdefault(ps, []).append(child)
    for kids in by_parents.values():
        for a in kids:
            for b in kids:
                if a != b:
                    facts.add((a, rel_id["sibling"], b))
    for a, b in spouses:
        facts.add((a, rel_id["spouse"], b))
        facts.add((b, rel_id["spouse"], a))
    sibling_pairs = {(a, b) for a in parents_of for b in parents_of
                     if a != b and parents_of[a] == parents_of[b]}
    for child, ps in parents_of.items():
        for p in ps:
            for (a, b) in sibling_pairs:
                if a == p:
                    facts.add((child, rel_id["uncle_or_aunt"], b))
                    facts.add((b, rel_id["nephew_or_niece"], child))

    positives = sorted(facts)
    train, valid, test = _split(positives, seed)
    return TripleDataset(entity_names=names, relation_names=_KG_RELATIONS,
                         train=train, valid=valid, test=test,
                         all_true=frozenset(positives))


# ---------------------------------------------------------------------------
# TSV persistence
# ---------------------------------------------------------------------------

_SPLIT_FILES = ("train.tsv", "valid.tsv", "test.tsv")
_EXTRA_TRUE_FILE = "all_true.tsv"


def save_tsv(dataset: TripleDataset, out_dir: str) -> None:
    """Write train/valid/test TSV files (plus all_true.tsv when the filter
    set holds triples outside the splits, so loading restores it)."""
    os.makedirs(out_dir, exist_ok=True)
    split_triples: set[Triple] = set()

    def write(path: str, triples) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in triples:
                fh.write(f"{dataset.entity_names[h]}\t"
                         f"{dataset.relation_names[r]}\t"
                         f"{dataset.entity_names[t]}\n")

    for fname, split in zip(_SPLIT_FILES, (dataset.train, dataset.valid, dataset.test)):
        rows = [(int(h), int(r), int(t)) for h, r, t in split]
        split_triples.update(rows)
        write(os.path.join(out_dir, fname), rows)
    extra = sorted(dataset.all_true - split_triples)
    extra_path = os.path.join(out_dir, _EXTRA_TRUE_FILE)
    if extra:
        write(extra_path, extra)
    elif os.path.exists(extra_path):
        os.remove(extra_path)


def _read_name_triples(path: str) -> list[tuple[str, str, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}",
                                 line=lineno)
            out.append((fields[0], fields[1], fields[2]))
    return out


def load_tsv(dataset_dir: str) -> TripleDataset:
    """Load a dataset directory written by ``save_tsv`` (or by hand).

    Vocabularies are rebuilt from the union of all files, ids assigned in
    lexicographic name order.  train.tsv must be nonempty; valid/test may
    be empty.
    """
    named: dict[str, list[tuple[str, str, str]]] = {}
    for fname in _SPLIT_FILES:
        path = os.path.join(dataset_dir, fname)
        if not os.path.exists(path):
            raise DataError(f"missing {fname} in {dataset_dir}")
        named[fname] = _read_name_triples(path)
    if not named["train.tsv"]:
        raise DataError(f"train.tsv in {dataset_dir} is empty")
    extra_path = os.path.join(dataset_dir, _EXTRA_TRUE_FILE)
    extra = _read_name_triples(extra_path) if os.path.exists(extra_path) else []

    every = [t for rows in named.values() for t in rows] + extra
    entity_names = tuple(sorted({h for h, _, _ in every} | {t for _, _, t in every}))
    relation_names = tuple(sorted({r for _, r, _ in every}))
    eid = {n: i for i, n in enumerate(entity_names)}
    rid = {n: i for i, n in enumerate(relation_names)}

    def encode(rows) -> list[Triple]:
        return [(eid[h], rid[r], eid[t]) for h, r, t in rows]

    splits = {fname: encode(rows) for fname, rows in named.items()}
    all_true = frozenset(encode(every))
    return TripleDataset(entity_names=entity_names, relation_names=relation_names,
                         train=_as_triples(splits["train.tsv"]),
                         valid=_as_triples(splits["valid.tsv"]),
                         test=_as_triples(splits["test.tsv"]),
                         all_true=all_true)
