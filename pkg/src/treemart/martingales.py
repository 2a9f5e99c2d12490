"""Additive, derivative and multiplicative martingales on trees, paths and split ratios.

Every additive martingale here is a weighted sum ``sum_i c_i * 2**l_i`` where
``l_i`` is a base-2 log weight and ``c_i`` a (possibly signed) multiplicity.
Sums are formed relative to the largest weight with :func:`math.fsum`, which
keeps the magnitude in log form when the value itself would overflow and
makes the z = 1/2 collapse exact: all weights are then integer powers of two.
"""
from __future__ import annotations

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, ExtrapolationError
from .trees import BinaryTreeShape, SplitRatios, YulePath, alive_depths, generation_times

LOG2E = 1.0 / math.log(2.0)
CRITICAL_TOL = 1e-9


class Region(enum.Enum):
    SUBCRITICAL = "subcritical"
    SUPERCRITICAL = "supercritical"
    CRITICAL_MINUS = "critical_minus"
    CRITICAL_PLUS = "critical_plus"

    @property
    def critical(self) -> bool:
        return self in (Region.CRITICAL_MINUS, Region.CRITICAL_PLUS)


class Kind(enum.Enum):
    BST = "BST"
    BIS = "BIS"
    GEN = "GEN"
    YULE = "YULE"
    DBST = "dBST"
    DBIS = "dBIS"
    DGEN = "dGEN"
    DYULE = "dYULE"
    MULT = "MULT"


# --------------------------------------------------------------------------
# the parameter z


def critical_equation(z: float) -> float:
    """2 z log z - 2 z + 1, whose two positive roots bound the convergence region."""
    return 2.0 * z * math.log(z) - 2.0 * z + 1.0


def _root(lo: float, hi: float, tolerance: float) -> float:
    flo = critical_equation(lo)
    # bisection to a safe bracket, then Newton (f' = 2 log z) to full precision
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        fm = critical_equation(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    z = 0.5 * (lo + hi)
    for _ in range(50):
        step = critical_equation(z) / (2.0 * math.log(z))
        z -= step
        if abs(step) <= tolerance * max(1.0, z):
            break
    return z


@lru_cache(maxsize=16)
def critical_points(tolerance: float = 1e-15) -> tuple[float, float]:
    """(z_c^-, z_c^+): the roots below and above 1/2."""
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    return _root(0.05, 0.5, tolerance), _root(0.5, 4.0, tolerance)


@dataclass(frozen=True)
class ParamZ:
    z: float
    region: Region
    alpha: float | None
    k0: float | None

    @property
    def theta(self) -> float:
        return 1.0 - 2.0 * self.z

    @property
    def alpha_defined(self) -> bool:
        return self.alpha is not None

    @property
    def critical(self) -> bool:
        return self.region.critical

    def __float__(self):
        return self.z


def classify(z: float) -> ParamZ:
    z = float(z)
    if not z > 0:
        raise DomainError(f"z must be positive, got {z}")
    lo, hi = critical_points()
    if abs(z - lo) <= CRITICAL_TOL:
        region = Region.CRITICAL_MINUS
    elif abs(z - hi) <= CRITICAL_TOL:
        region = Region.CRITICAL_PLUS
    elif lo < z < hi:
        region = Region.SUPERCRITICAL
    else:
        region = Region.SUBCRITICAL
    alpha = None if z == 0.5 else z ** (1.0 / (2.0 * z - 1.0))
    k0 = 2.0 / abs(2.0 * z - 1.0) if region.critical else None
    return ParamZ(z, region, alpha, k0)


def as_param(z: float | ParamZ) -> ParamZ:
    return z if isinstance(z, ParamZ) else classify(z)


# --------------------------------------------------------------------------
# values and weighted sums


@dataclass(frozen=True)
class MartingaleValue:
    kind: Kind
    index: float
    z: float
    log_abs: float
    sign: int
    value: float

    def __float__(self):
        return self.value


def _weighted_sum(log2w: np.ndarray, coef: np.ndarray | None = None) -> tuple[float, float, int]:
    """(value, log|value|, sign) of sum coef * 2**log2w."""
    log2w = np.asarray(log2w, dtype=float)
    if log2w.size == 0:
        return 0.0, -math.inf, 0
    top = float(log2w.max())
    scaled = np.exp2(log2w - top)
    s = math.fsum(scaled if coef is None else scaled * coef)
    if s == 0.0:
        return 0.0, -math.inf, 0
    whole = math.floor(top)
    log_abs = math.log(abs(s)) + top * math.log(2.0)
    try:
        value = math.ldexp(s * 2.0 ** (top - whole), whole)
    except OverflowError:
        value = math.copysign(math.inf, s)
    return value, log_abs, 1 if s > 0 else -1


def _make(kind: Kind, index, z: float, log2w, coef=None) -> MartingaleValue:
    value, log_abs, sign = _weighted_sum(log2w, coef)
    return MartingaleValue(kind, index, z, log_abs, sign, value)


def _log2(z: float) -> float:
    return math.log2(z)


# --------------------------------------------------------------------------
# normalizing constant of the BST martingale

_DIRECT_LIMIT = 64
_SUM_LIMIT = 10**7


def log_c_n(n: int, z: float) -> float:
    """log of prod_{k<n} (k + 2z)/(k + 1)."""
    if n < 0 or not z > 0:
        raise DomainError("need n >= 0 and z > 0")
    if n <= _SUM_LIMIT:
        k1 = np.arange(1, n + 1, dtype=float)
        return math.fsum(np.log1p((2.0 * z - 1.0) / k1))
    return math.lgamma(n + 2.0 * z) - math.lgamma(2.0 * z) - math.lgamma(n + 1.0)


def c_n(n: int, z: float) -> float:
    if n < 0 or not z > 0:
        raise DomainError("need n >= 0 and z > 0")
    if n <= _DIRECT_LIMIT:
        out = 1.0
        for k in range(n):
            out *= (k + 2.0 * z) / (k + 1.0)
        return out
    return math.exp(log_c_n(n, z))


def c_n_log_derivative(n: int, z: float) -> float:
    """C_n'(z) / C_n(z) = sum_{k<n} 2/(k + 2z)."""
    return math.fsum(2.0 / (np.arange(n, dtype=float) + 2.0 * z))


# --------------------------------------------------------------------------
# additive martingales


def _depth_counts(depths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(np.asarray(depths, dtype=np.int64))
    d = np.flatnonzero(counts)
    return d, counts[d].astype(float)


def level_polynomial(shape_or_depths, z: float) -> float:
    """W_n(z) = sum over leaves of z**depth."""
    depths = shape_or_depths.leaf_depths() if isinstance(shape_or_depths, BinaryTreeShape) else shape_or_depths
    d, c = _depth_counts(depths)
    return _weighted_sum(d * _log2(z), c)[0]


def _leaf_depths(shape) -> np.ndarray:
    return shape.leaf_depths() if isinstance(shape, BinaryTreeShape) else np.asarray(shape)


def m_bst(shape: BinaryTreeShape | np.ndarray, z: float | ParamZ) -> MartingaleValue:
    """Leaf profile at z divided by C_n(z); also accepts a leaf-depth array."""
    z = float(z)
    depths = _leaf_depths(shape)
    n = depths.size - 1
    d, c = _depth_counts(depths)
    log2w = d * _log2(z) - log_c_n(n, z) * LOG2E
    return _make(Kind.BST, n, z, log2w, c)


def m_yule(path: YulePath, t: float, z: float | ParamZ) -> MartingaleValue:
    z = float(z)
    d, c = _depth_counts(alive_depths(path, t))
    log2w = d * _log2(z) + t * (1.0 - 2.0 * z) * LOG2E
    return _make(Kind.YULE, t, z, log2w, c)


def m_gen(path: YulePath, g: int, z: float | ParamZ) -> MartingaleValue:
    z = float(z)
    s = generation_times(path, g)
    log2w = g * _log2(z) + (1.0 - 2.0 * z) * LOG2E * s
    return _make(Kind.GEN, g, z, log2w)


def m_bis(ratios: SplitRatios, g: int, z: float | ParamZ) -> MartingaleValue:
    z = float(z)
    logprod = ratios.log_branch_products(g)
    log2w = g * _log2(z) + (2.0 * z - 1.0) * LOG2E * logprod
    return _make(Kind.BIS, g, z, log2w)


# --------------------------------------------------------------------------
# derivative martingales


def derivative_martingale(kind: Kind | str, state, index, z: float | ParamZ) -> MartingaleValue:
    """z-derivative of the additive martingale ``kind`` evaluated on ``state``.

    ``state`` is a shape (or leaf-depth array) for BST, a path for GEN and YULE
    and split ratios for BIS; ``index`` is ignored for BST.
    """
    kind = Kind(kind) if isinstance(kind, str) else kind
    kind = {Kind.DBST: Kind.BST, Kind.DBIS: Kind.BIS, Kind.DGEN: Kind.GEN, Kind.DYULE: Kind.YULE}.get(kind, kind)
    z = float(z)
    lz = _log2(z)
    if kind is Kind.BST:
        depths = _leaf_depths(state)
        n = depths.size - 1
        d, c = _depth_counts(depths)
        log2w = d * lz - log_c_n(n, z) * LOG2E
        return _make(Kind.DBST, n, z, log2w, c * (d / z - c_n_log_derivative(n, z)))
    if kind is Kind.YULE:
        t = float(index)
        d, c = _depth_counts(alive_depths(state, t))
        log2w = d * lz + t * (1.0 - 2.0 * z) * LOG2E
        return _make(Kind.DYULE, t, z, log2w, c * (d / z - 2.0 * t))
    if kind is Kind.GEN:
        g = int(index)
        s = generation_times(state, g)
        log2w = g * lz + (1.0 - 2.0 * z) * LOG2E * s
        return _make(Kind.DGEN, g, z, log2w, g / z - 2.0 * s)
    if kind is Kind.BIS:
        g = int(index)
        logprod = state.log_branch_products(g)
        log2w = g * lz + (2.0 * z - 1.0) * LOG2E * logprod
        return _make(Kind.DBIS, g, z, log2w, g / z + 2.0 * logprod)
    raise DomainError(f"no derivative martingale for kind {kind}")


def additive_martingale(kind: Kind | str, state, index, z: float | ParamZ) -> MartingaleValue:
    kind = Kind(kind) if isinstance(kind, str) else kind
    if kind is Kind.BST:
        return m_bst(state, z)
    if kind is Kind.YULE:
        return m_yule(state, index, z)
    if kind is Kind.GEN:
        return m_gen(state, index, z)
    if kind is Kind.BIS:
        return m_bis(state, index, z)
    return derivative_martingale(kind, state, index, z)


# --------------------------------------------------------------------------
# multiplicative martingales


def multiplicative_martingale(
    path: YulePath,
    line: tuple[str, float],
    y: float,
    j: Callable[[np.ndarray], np.ndarray],
    z: float | ParamZ,
) -> MartingaleValue:
    """Product of j(y * weight) over a generation line ("generation", g) or an alive set ("time", t).

    ``j`` must raise :class:`ExtrapolationError` for arguments it cannot evaluate.
    """
    z = float(z)
    kind, idx = line
    if kind == "generation":
        s = generation_times(path, int(idx))
        args = y * np.exp(int(idx) * math.log(z) + (1.0 - 2.0 * z) * s)
    elif kind == "time":
        d = alive_depths(path, float(idx))
        args = y * np.exp(d * math.log(z) + (1.0 - 2.0 * z) * float(idx))
    else:
        raise ValueError(f"unknown line {kind!r}")
    vals = np.asarray(j(args), dtype=float)
    if np.any(vals <= 0) or np.any(vals > 1 + 1e-12):
        raise ExtrapolationError("Laplace transform values must lie in (0, 1]")
    log_abs = math.fsum(np.log(vals))
    return MartingaleValue(Kind.MULT, idx, z, log_abs, 1, math.exp(log_abs))
