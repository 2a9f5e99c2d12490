"""Yule tree paths, BST insertion sequences and split ratios on one probability space.

A Yule path is the complete binary tree in which every node ``u`` carries an
independent Exponential(1) lifetime. Node ``u`` is born at its saturation time
``S^u`` (the sum of the lifetimes of its strict ancestors) and splits into
``u0`` and ``u1`` at ``S^u + lifetime(u)``. Lifetimes come from
:mod:`treemart.rng`, so a path is a pure function of ``(seed, max_depth)``;
the :class:`YulePath` object only caches the part that has been realized.
"""
from __future__ import annotations

import heapq
import io
import math
import struct
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import rng
from .errors import DomainError, HorizonError, ResourceError

DEFAULT_MAX_DEPTH = 60
DEFAULT_MAX_NODES = 10**8


@dataclass(frozen=True, order=True)
class NodeLabel:
    """A word over {0, 1}; ``bits`` holds the word read as a binary number."""

    depth: int
    bits: int = 0

    def __post_init__(self):
        if self.depth < 0 or not 0 <= self.bits < (1 << self.depth):
            raise ValueError(f"invalid label depth={self.depth} bits={self.bits}")

    @classmethod
    def from_word(cls, word: str | Sequence[int]) -> NodeLabel:
        w = "".join(str(int(c)) for c in word)
        return cls(len(w), int(w, 2) if w else 0)

    @property
    def word(self) -> str:
        return format(self.bits, f"0{self.depth}b") if self.depth else ""

    def __str__(self):
        return self.word or "∅"

    def child(self, b: int) -> NodeLabel:
        return NodeLabel(self.depth + 1, (self.bits << 1) | b)

    def children(self) -> tuple[NodeLabel, NodeLabel]:
        return self.child(0), self.child(1)

    def parent(self) -> NodeLabel:
        if self.depth == 0:
            raise ValueError("the root has no parent")
        return NodeLabel(self.depth - 1, self.bits >> 1)

    def ancestors(self) -> Iterator[NodeLabel]:
        """Strict ancestors, nearest first."""
        d, b = self.depth, self.bits
        while d > 0:
            d, b = d - 1, b >> 1
            yield NodeLabel(d, b)

    def is_ancestor_of(self, other: NodeLabel) -> bool:
        return other.depth > self.depth and (other.bits >> (other.depth - self.depth)) == self.bits

    @property
    def bfs_index(self) -> int:
        return rng.bfs_index(self.depth, self.bits)


ROOT = NodeLabel(0, 0)


@dataclass(frozen=True)
class BinaryTreeShape:
    """A complete binary tree, stored by its set of internal nodes.

    The empty set of internal nodes is the tree reduced to the root, which is
    then its only leaf.
    """

    internal: frozenset[NodeLabel]

    def __post_init__(self):
        internal = frozenset(self.internal)
        object.__setattr__(self, "internal", internal)
        if internal and ROOT not in internal:
            raise ValueError("non-empty tree must contain the root as an internal node")
        for u in internal:
            if u.depth > 0 and u.parent() not in internal:
                raise ValueError(f"internal node {u} has no internal parent")

    @classmethod
    def from_internal(cls, nodes: Iterable[NodeLabel | str]) -> BinaryTreeShape:
        return cls(frozenset(NodeLabel.from_word(u) if isinstance(u, str) else u for u in nodes))

    @property
    def n_internal(self) -> int:
        return len(self.internal)

    @property
    def leaves(self) -> frozenset[NodeLabel]:
        if not self.internal:
            return frozenset({ROOT})
        return frozenset(c for u in self.internal for c in u.children() if c not in self.internal)

    @property
    def nodes(self) -> frozenset[NodeLabel]:
        return self.internal | self.leaves

    def leaf_depths(self) -> np.ndarray:
        return np.fromiter((u.depth for u in self.leaves), dtype=np.int64)

    def insert(self, leaf: NodeLabel) -> BinaryTreeShape:
        if leaf not in self.leaves:
            raise ValueError(f"{leaf} is not a leaf")
        return BinaryTreeShape(self.internal | {leaf})

    def subtree_sizes(self) -> dict[NodeLabel, int]:
        """Number of internal nodes in the subtree rooted at each internal node."""
        sizes = dict.fromkeys(self.internal, 1)
        for u in sorted(self.internal, key=lambda v: -v.depth):
            if u.depth > 0:
                sizes[u.parent()] += sizes[u]
        return sizes

    def __repr__(self):
        return "BinaryTreeShape({%s})" % ", ".join(repr(str(u)) for u in sorted(self.internal))


# --------------------------------------------------------------------------
# Yule paths


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class YulePath:
    """The realized part of one Yule tree.

    Arrays describe every realized node: ``depth``, ``bits``, ``birth`` (the
    saturation time) and ``death`` (birth plus lifetime). Alive-set queries are
    exact for ``0 <= t < valid_horizon``.
    """

    seed: int
    max_depth: int
    stop: tuple[str, float]
    depth: np.ndarray
    bits: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    valid_horizon: float
    max_nodes: int = DEFAULT_MAX_NODES
    _jumps: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("depth", "bits", "birth", "death"):
            _readonly(getattr(self, name))
        internal = self.death < self.valid_horizon
        jumps = np.concatenate([[0.0], np.unique(self.death[internal])])
        object.__setattr__(self, "_jumps", _readonly(jumps))

    @property
    def n_realized(self) -> int:
        return int(self.depth.size)

    @property
    def jump_times(self) -> np.ndarray:
        """tau_0 = 0 < tau_1 < ... : split times inside the valid horizon."""
        return self._jumps

    def edge_lifetime(self, u: NodeLabel) -> float:
        self._check_label(u)
        return rng.lifetime(self.seed, u.depth, u.bits)

    def saturation(self, u: NodeLabel) -> float:
        """S^u: sum of the lifetimes of the strict ancestors of ``u``."""
        self._check_label(u)
        return math.fsum(rng.lifetime(self.seed, a.depth, a.bits) for a in u.ancestors())

    def _check_label(self, u: NodeLabel):
        if u.depth > self.max_depth:
            raise DomainError(f"label depth {u.depth} exceeds max_depth {self.max_depth}")

    def check_time(self, t: float):
        if not 0 <= t < self.valid_horizon:
            raise HorizonError(f"t={t} outside the valid range [0, {self.valid_horizon})")

    def alive_mask(self, t: float) -> np.ndarray:
        self.check_time(t)
        return (self.birth <= t) & (t < self.death)

    def population(self, t: float) -> int:
        """N_t."""
        return int(np.count_nonzero(self.alive_mask(t)))

    def shape_at(self, t: float) -> BinaryTreeShape:
        self.check_time(t)
        idx = np.flatnonzero(self.death <= t)
        return BinaryTreeShape(frozenset(NodeLabel(int(self.depth[i]), int(self.bits[i])) for i in idx))

    def extended(self, **stop) -> YulePath:
        """Same tree realized to a later stop; the current realization is a prefix."""
        return simulate_yule(self.seed, max_depth=self.max_depth, max_nodes=self.max_nodes, **stop)


def _parse_stop(time, leaves, generation) -> tuple[str, float]:
    given = [(k, v) for k, v in (("time", time), ("leaves", leaves), ("generation", generation)) if v is not None]
    if len(given) != 1:
        raise ValueError("give exactly one of time=, leaves=, generation=")
    kind, value = given[0]
    if kind == "time" and not value > 0:
        raise ValueError("time stop must be positive")
    if kind != "time" and (int(value) != value or value < 1):
        raise ValueError(f"{kind} stop must be a positive integer")
    return kind, value


def simulate_yule(
    seed: int,
    *,
    time: float | None = None,
    leaves: int | None = None,
    generation: int | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> YulePath:
    """Realize a Yule tree until a time, a number of leaves, or a full generation.

    ``leaves=n`` stops at the first instant with ``n`` individuals (tau_{n-1});
    ``generation=g`` realizes every node of depth ``<= g``.
    """
    kind, value = _parse_stop(time, leaves, generation)
    if not 0 <= max_depth <= rng.MAX_DEPTH:
        raise ResourceError(f"max_depth must lie in [0, {rng.MAX_DEPTH}]")
    if kind == "time":
        cols, horizon = _grow_until_time(seed, float(value), max_depth, max_nodes)
    elif kind == "leaves":
        cols, horizon = _grow_until_leaves(seed, int(value), max_depth, max_nodes)
    else:
        cols, horizon = _grow_generations(seed, int(value), max_depth, max_nodes)
    depth, bits, birth, death = cols
    return YulePath(seed, max_depth, (kind, value), depth, bits, birth, death, horizon, max_nodes)


def _grow_until_time(seed, t_stop, max_depth, max_nodes):
    out = []
    bits = np.zeros(1, dtype=np.uint64)
    birth = np.zeros(1)
    total = 0
    for d in range(max_depth + 1):
        death = birth + rng.lifetimes(seed, d, bits)
        out.append((np.full(bits.size, d, dtype=np.uint8), bits, birth, death))
        total += bits.size
        split = death <= t_stop
        if not split.any():
            break
        if d == max_depth:
            raise ResourceError(f"an individual of depth {max_depth} splits before t={t_stop}")
        if total + 2 * int(split.sum()) > max_nodes:
            raise ResourceError(f"more than {max_nodes} nodes needed to reach t={t_stop}")
        sb = bits[split] << np.uint64(1)
        bits = np.concatenate([sb, sb | np.uint64(1)])
        birth = np.tile(death[split], 2)
    cols = [np.concatenate(c) for c in zip(*out)]
    alive = cols[3] > t_stop
    return cols, float(cols[3][alive].min())


def _grow_until_leaves(seed, n, max_depth, max_nodes):
    if 2 * n - 1 > max_nodes:
        raise ResourceError(f"{2 * n - 1} nodes exceed the cap {max_nodes}")
    rows = []
    heap = [(rng.lifetime(seed, 0, 0), 0, 0, 0.0)]
    while len(heap) < n:
        death, d, b, birth = heapq.heappop(heap)
        rows.append((d, b, birth, death))
        if d == max_depth:
            raise ResourceError(f"an individual of depth {max_depth} splits before reaching {n} leaves")
        for c in (2 * b, 2 * b + 1):
            heapq.heappush(heap, (death + rng.lifetime(seed, d + 1, c), d + 1, c, death))
    horizon = heap[0][0]
    rows.extend((d, b, birth, death) for death, d, b, birth in heap)
    d, b, birth, death = zip(*rows)
    cols = [np.array(d, dtype=np.uint8), np.array(b, dtype=np.uint64), np.array(birth), np.array(death)]
    return cols, float(horizon)


def _grow_generations(seed, g, max_depth, max_nodes):
    if g > max_depth:
        raise ResourceError(f"generation {g} exceeds max_depth {max_depth}")
    if (1 << (g + 1)) - 1 > max_nodes:
        raise ResourceError(f"generation {g} needs more than {max_nodes} nodes")
    out = []
    bits = np.zeros(1, dtype=np.uint64)
    birth = np.zeros(1)
    for d in range(g + 1):
        death = birth + rng.lifetimes(seed, d, bits)
        out.append((np.full(bits.size, d, dtype=np.uint8), bits, birth, death))
        if d < g:
            bits, birth = _children(bits, death)
    cols = [np.concatenate(c) for c in zip(*out)]
    return cols, float(out[-1][3].min())


def _children(bits, death):
    """Children of a full level in breadth-first order."""
    cb = np.empty(2 * bits.size, dtype=np.uint64)
    cb[0::2] = bits << np.uint64(1)
    cb[1::2] = cb[0::2] | np.uint64(1)
    return cb, np.repeat(death, 2)


def alive_depths(path: YulePath, t: float) -> np.ndarray:
    """Depths of the individuals alive at ``t`` (array form of :func:`alive_set`)."""
    return path.depth[path.alive_mask(t)].astype(np.int64)


def alive_set(path: YulePath, t: float) -> list[tuple[NodeLabel, int]]:
    """Individuals u with S^u <= t < S^{u0}, sorted by label."""
    m = path.alive_mask(t)
    out = [(NodeLabel(int(d), int(b)), int(d)) for d, b in zip(path.depth[m], path.bits[m])]
    return sorted(out)


def generation_times(path: YulePath, g: int) -> np.ndarray:
    """Saturation times of the 2**g nodes of generation ``g``, in label order."""
    if not 0 <= g <= path.max_depth:
        raise DomainError(f"generation {g} outside [0, {path.max_depth}]")
    if (1 << g) > path.max_nodes:
        raise ResourceError(f"generation {g} has more than {path.max_nodes} nodes")
    return _generation_times(path.seed, g)


@lru_cache(maxsize=8)
def _generation_times(seed: int, g: int) -> np.ndarray:
    bits = np.zeros(1, dtype=np.uint64)
    s = np.zeros(1)
    for d in range(g):
        bits, s = _children(bits, s + rng.lifetimes(seed, d, bits))
    return _readonly(s)


def generation_line(path: YulePath, g: int) -> list[tuple[NodeLabel, float]]:
    s = generation_times(path, g)
    return [(NodeLabel(g, i), float(v)) for i, v in enumerate(s)]


# --------------------------------------------------------------------------
# split ratios


@dataclass(frozen=True)
class SplitRatios:
    """Per-node ratios U^(v) for depths 1..estimation_depth.

    ``ratios[k - 1]`` holds the 2**k ratios of depth ``k`` in label order;
    ``counts[k]`` the subtree leaf counts they were estimated from (``None``
    when the ratios are exact draws rather than estimates).
    """

    ratios: tuple[np.ndarray, ...]
    sample_size: int
    counts: tuple[np.ndarray, ...] | None = None

    @property
    def estimation_depth(self) -> int:
        return len(self.ratios)

    def ratio(self, v: NodeLabel) -> float:
        if not 1 <= v.depth <= self.estimation_depth:
            raise DomainError(f"no ratio for depth {v.depth}")
        return float(self.ratios[v.depth - 1][v.bits])

    def log_branch_products(self, g: int) -> np.ndarray:
        """sum of log U^(v) over v on the branch to each depth-g node (v ≠ root)."""
        if g > self.estimation_depth:
            raise DomainError(f"ratios populated to depth {self.estimation_depth} < {g}")
        acc = np.zeros(1)
        for k in range(g):
            acc = np.repeat(acc, 2) + np.log(self.ratios[k])
        return acc

    def standard_errors(self) -> tuple[np.ndarray, ...]:
        """Binomial standard error of each estimated ratio given its parent's count."""
        if self.counts is None:
            return tuple(np.zeros_like(r) for r in self.ratios)
        out = []
        for k, r in enumerate(self.ratios, start=1):
            parent = np.repeat(self.counts[k - 1], 2)
            out.append(np.sqrt(r * (1 - r) / (parent + 1.0)))
        return tuple(out)


def _complement_pairs(left: np.ndarray) -> np.ndarray:
    r = np.empty(2 * left.size)
    r[0::2] = left
    r[1::2] = 1.0 - left
    return r


def split_ratios(path: YulePath, g: int, t: float) -> SplitRatios:
    """Estimate U^(v) = lim n_t(v) / n_t(father of v) by its value at time ``t``."""
    if g < 1:
        raise DomainError("g must be >= 1")
    m = path.alive_mask(t)
    d = path.depth[m].astype(np.int64)
    b = path.bits[m]
    if d.min() < g:
        raise DomainError(f"a node of depth < {g} is still alive at t={t}; depth-{g} line not born")
    counts = [np.array([d.size], dtype=np.int64)]
    for k in range(1, g + 1):
        anc = (b >> (d - k).astype(np.uint64)).astype(np.int64)
        counts.append(np.bincount(anc, minlength=1 << k))
    ratios = []
    for k in range(1, g + 1):
        left = counts[k][0::2] / counts[k - 1]
        ratios.append(_complement_pairs(left))
    return SplitRatios(tuple(ratios), int(d.size), tuple(counts))


def bisection_ratios(seed: int, g: int) -> SplitRatios:
    """Exact bisection model: independent uniform splits at every node."""
    gen = np.random.default_rng(rng.derive_seed(seed, "bisection"))
    ratios = tuple(_complement_pairs(gen.random(1 << (k - 1))) for k in range(1, g + 1))
    return SplitRatios(ratios, 0, None)


# --------------------------------------------------------------------------
# binary search trees


class BSTProcess(Sequence):
    """The trees T_1 ⊂ ... ⊂ T_n of one uniform-leaf insertion sequence.

    Only the insertion order is stored; ``process[k]`` rebuilds T_{k+1}.
    """

    def __init__(self, seed: int, insertions: Sequence[NodeLabel]):
        self.seed = seed
        self.insertions = tuple(insertions)

    def __len__(self):
        return len(self.insertions)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        return BinaryTreeShape(frozenset(self.insertions[: k + 1]))

    def leaf_depths(self, k: int | None = None) -> np.ndarray:
        """Leaf depths of T_k (default: the last tree) without building the shape."""
        k = len(self) if k is None else k
        depths = [0]
        pos = {ROOT: 0}
        for u in self.insertions[:k]:
            i = pos.pop(u)
            depths[i] = u.depth + 1
            pos[u.child(0)] = i
            pos[u.child(1)] = len(depths)
            depths.append(u.depth + 1)
        return np.array(depths, dtype=np.int64)


def simulate_bst(seed: int, n: int) -> BSTProcess:
    """Grow T_1..T_n by replacing a uniformly chosen leaf with an internal node."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = np.random.default_rng(rng.derive_seed(seed, "bst")).random(n)
    leaves = [ROOT]
    order = []
    for k in range(n):
        i = int(u[k] * (k + 1))
        leaf = leaves[i]
        order.append(leaf)
        leaves[i] = leaf.child(0)
        leaves.append(leaf.child(1))
    return BSTProcess(seed, order)


def bst_leaf_depths_batch(seed: int, n: int, paths: int) -> np.ndarray:
    """Leaf depths of T_n for ``paths`` independent BSTs, shape (paths, n + 1).

    Same insertion rule as :func:`simulate_bst`, vectorized across paths; the
    streams differ from the single-path generator.
    """
    gen = np.random.default_rng(rng.derive_seed(seed, "bst-batch", paths))
    depths = np.zeros((paths, n + 1), dtype=np.int16)
    rows = np.arange(paths)
    for k in range(n):
        i = (gen.random(paths) * (k + 1)).astype(np.int64)
        d = depths[rows, i] + 1
        depths[rows, i] = d
        depths[:, k + 1] = d
    return depths


@lru_cache(maxsize=None)
def _shape_distribution(n: int) -> dict[frozenset, Fraction]:
    """Exact law of T_n by enumerating every sequence of leaf choices."""
    dist = {frozenset(): Fraction(1)}
    for k in range(n):
        nxt: dict[frozenset, Fraction] = {}
        for internal, p in dist.items():
            leaves = BinaryTreeShape(internal).leaves
            q = p / len(leaves)
            for leaf in leaves:
                key = internal | {leaf}
                nxt[key] = nxt.get(key, 0) + q
        dist = nxt
    return dist


MAX_ENUMERATION = 8


def shape_probability(shape: BinaryTreeShape) -> float:
    """P(T_n = shape) under the random permutation model, n <= 8."""
    return float(shape_probability_exact(shape))


def shape_probability_exact(shape: BinaryTreeShape) -> Fraction:
    n = shape.n_internal
    if n > MAX_ENUMERATION:
        raise DomainError(f"enumeration limited to n <= {MAX_ENUMERATION}, got {n}")
    return _shape_distribution(n).get(shape.internal, Fraction(0))


def all_shapes(n: int) -> list[BinaryTreeShape]:
    if n > MAX_ENUMERATION:
        raise DomainError(f"enumeration limited to n <= {MAX_ENUMERATION}, got {n}")
    return sorted((BinaryTreeShape(k) for k in _shape_distribution(n)), key=repr)


# --------------------------------------------------------------------------
# binary replay format
#
# header: magic b"YULE", u16 version, u16 max_depth, u64 seed, u8 stop kind,
#         f64 stop value, u64 record count      (little endian)
# payload: per realized node, breadth-first label order:
#         u64 breadth-first index, f64 lifetime

_MAGIC = b"YULE"
_HEADER = struct.Struct("<4sHHQBdQ")
_RECORD = np.dtype([("index", "<u8"), ("lifetime", "<f8")])
_STOP_CODES = {"time": 0, "leaves": 1, "generation": 2}


def dump_path(path: YulePath, fh: io.BufferedIOBase):
    order = np.lexsort((path.bits, path.depth))
    d = path.depth[order].astype(np.uint64)
    idx = (np.uint64(1) << d) - np.uint64(1) + path.bits[order]
    rec = np.empty(idx.size, dtype=_RECORD)
    rec["index"] = idx
    rec["lifetime"] = (path.death - path.birth)[order]
    kind, value = path.stop
    fh.write(_HEADER.pack(_MAGIC, 1, path.max_depth, path.seed & ((1 << 64) - 1),
                          _STOP_CODES[kind], float(value), idx.size))
    fh.write(rec.tobytes())


def load_path(fh: io.BufferedIOBase) -> YulePath:
    """Read a path written by :func:`dump_path`; births are rebuilt from lifetimes."""
    magic, version, max_depth, seed, code, value, count = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != _MAGIC or version != 1:
        raise ValueError("not a yule path file")
    rec = np.frombuffer(fh.read(count * _RECORD.itemsize), dtype=_RECORD)
    kind = {v: k for k, v in _STOP_CODES.items()}[code]
    idx = rec["index"]
    depth = (np.floor(np.log2(idx.astype(np.float64) + 1))).astype(np.int64)
    # guard the float log2 at exact powers of two
    depth -= (idx + np.uint64(1)) < (np.uint64(1) << depth.astype(np.uint64))
    bits = idx - ((np.uint64(1) << depth.astype(np.uint64)) - np.uint64(1))
    life = rec["lifetime"].copy()
    birth = np.zeros(idx.size)
    where = {int(i): k for k, i in enumerate(idx)}
    for k in range(idx.size):
        if depth[k] > 0:
            parent = (int(idx[k]) - 1) // 2
            p = where[parent]
            birth[k] = birth[p] + life[p]
    death = birth + life
    if kind == "time":
        horizon = float(death[death > value].min())
    elif kind == "leaves":
        # the n - 1 internal nodes are exactly the n - 1 earliest deaths
        horizon = float(np.sort(death)[int(value) - 1])
    else:
        horizon = float(death[depth == int(value)].min())
    if isinstance(value, float) and kind != "time":
        value = int(value)
    return YulePath(int(seed), int(max_depth), (kind, value), depth.astype(np.uint8),
                    bits.astype(np.uint64), birth, death, horizon)
