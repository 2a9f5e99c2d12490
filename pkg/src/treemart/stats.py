"""Limit laws, goodness-of-fit tests and the pathwise verification suites.

Each suite is a pure function of its arguments and a master seed: path ``i``
of suite ``name`` uses ``rng.derive_seed(master, name, i)``.
"""
from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from . import martingales as mg
from . import rng, special, trees
from .errors import DomainError
from .fixedpoint import mellin_beta, mellin_gamma

# --------------------------------------------------------------------------
# samplers


def sample_gamma(gen: np.random.Generator, a: float, n: int) -> np.ndarray:
    """Gamma(a) variates: Marsaglia-Tsang squeeze for a >= 1, boosted for a < 1."""
    if a <= 0:
        raise DomainError("gamma shape must be positive")
    if a < 1.0:
        return sample_gamma(gen, a + 1.0, n) * gen.random(n) ** (1.0 / a)
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        x = gen.standard_normal(todo.size)
        v = (1.0 + c * x) ** 3
        u = gen.random(todo.size)
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            logv = np.where(ok, np.log(np.where(ok, v, 1.0)), 0.0)
            accept = ok & ((u < 1.0 - 0.0331 * x**4) | (np.log(u) < 0.5 * x * x + d * (1.0 - v + logv)))
        out[todo[accept]] = d * v[accept]
        todo = todo[~accept]
    return out


def sample_beta(gen: np.random.Generator, a: float, b: float, n: int) -> np.ndarray:
    x = sample_gamma(gen, a, n)
    y = sample_gamma(gen, b, n)
    return x / (x + y)


# --------------------------------------------------------------------------
# laws


@dataclass(frozen=True)
class Law:
    """A limit law with sampler, exact CDF and (where closed form) Mellin transform."""

    name: str
    params: tuple[float, ...] = ()

    @property
    def tag(self) -> str:
        return f"{self.name}({','.join(repr(p) for p in self.params)})" if self.params else self.name

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.name == "exp1":
            return -np.log(gen.random(n))
        if self.name == "gamma":
            return sample_gamma(gen, p[0], n)
        if self.name == "beta":
            return sample_beta(gen, p[0], p[1], n)
        if self.name == "yule_quarter":
            return 0.5 / sample_gamma(gen, 1.5, n)
        if self.name == "bst_quarter":
            b = sample_beta(gen, 0.75, 0.25, n)
            g = sample_gamma(gen, 1.25, n)
            return 0.25 * math.sqrt(math.pi) / np.sqrt(b * g)
        raise DomainError(f"unknown law {self.name}")

    def cdf(self, x: float) -> float:
        p = self.params
        if x <= 0:
            return 0.0
        if math.isinf(x):
            return 1.0
        if self.name == "exp1":
            return -math.expm1(-x)
        if self.name == "gamma":
            return special.gamma_p(p[0], x)
        if self.name == "beta":
            return special.beta_inc(p[0], p[1], x)
        if self.name == "yule_quarter":
            return special.gamma_q(1.5, 0.5 / x)
        if self.name == "bst_quarter":
            return _bst_quarter_cdf(x)
        raise DomainError(f"unknown law {self.name}")

    def cdf_array(self, x) -> np.ndarray:
        return np.array([self.cdf(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def mean(self) -> float:
        return {
            "exp1": lambda: 1.0,
            "gamma": lambda: self.params[0],
            "beta": lambda: self.params[0] / (self.params[0] + self.params[1]),
            "yule_quarter": lambda: 0.5 * mellin_gamma(1.5, -1.0),
            "bst_quarter": lambda: 0.25 * math.sqrt(math.pi) * mellin_beta(0.75, 0.25, -0.5)
            * mellin_gamma(1.25, -0.5),
        }[self.name]()


_BETA_NORM = math.exp(math.lgamma(0.75) + math.lgamma(0.25))


def _bst_quarter_cdf(m: float) -> float:
    # P(beta * gamma >= pi / (16 m^2)) integrated against the beta(3/4, 1/4) density
    c = math.pi / (16.0 * m * m)
    f = lambda b: special.gamma_q(1.25, c / b) if b > 0 else 0.0
    val = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(-0.25, -0.75), epsabs=1e-13, epsrel=1e-11)[0]
    return min(1.0, max(0.0, val / _BETA_NORM))


def yule_quarter_density(t: float) -> float:
    """(2 pi t^5)^(-1/2) exp(-1/(2t)), the density of the yule_quarter law."""
    return math.exp(-0.5 / t) / math.sqrt(2.0 * math.pi * t**5) if t > 0 else 0.0


def parse_law(text: str) -> Law:
    """"exp1", "gamma(1.5)", "beta(0.75,0.25)", "yule_quarter", "bst_quarter"."""
    text = text.strip()
    if "(" in text:
        name, rest = text.split("(", 1)
        params = tuple(float(v) for v in rest.rstrip(")").split(","))
    else:
        name, params = text, ()
    law = Law(name, params)
    arity = {"exp1": 0, "gamma": 1, "beta": 2, "yule_quarter": 0, "bst_quarter": 0}
    if arity.get(name) != len(params):
        raise DomainError(f"bad law {text!r}")
    if any(p <= 0 for p in params):
        raise DomainError("law parameters must be positive")
    return law


@dataclass(frozen=True)
class SampleSet:
    law: str
    values: np.ndarray
    seed: int

    @property
    def size(self) -> int:
        return int(self.values.size)


def sample_limit_law(law: Law | str, seed: int, n: int) -> SampleSet:
    law = parse_law(law) if isinstance(law, str) else law
    if n < 1:
        raise DomainError("n must be >= 1")
    gen = np.random.default_rng(rng.derive_seed(seed, "law", law.tag))
    values = law.sample(gen, n)
    values.flags.writeable = False
    return SampleSet(law.tag, values, seed)


def target_cdf(law: Law | str, x: float) -> float:
    law = parse_law(law) if isinstance(law, str) else law
    return law.cdf(x)


# --------------------------------------------------------------------------
# reports and tests


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


@dataclass
class TestReport:
    suite: str
    kind: str
    statistic: float
    p_value: float | None
    passed: bool | None
    sizes: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    seed: int | None = None
    note: str = ""

    __test__ = False  # not a pytest class

    @property
    def verdict(self) -> str:
        return {True: "pass", False: "fail", None: "exploratory"}[self.passed]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        return _clean(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    CSV_HEADER = "suite,kind,statistic,p_value,verdict,seed"

    def csv_row(self) -> str:
        p = "" if self.p_value is None else repr(float(self.p_value))
        return f"{self.suite},{self.kind},{float(self.statistic)!r},{p},{self.verdict},{self.seed}"


def ks_statistic(values: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_test(samples: SampleSet | np.ndarray, cdf: Callable | Law | str, alpha: float = 0.01,
            suite: str = "ks") -> TestReport:
    """Two-sided one-sample Kolmogorov-Smirnov test with asymptotic p-value."""
    values = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if values.size < 10:
        raise DomainError("the KS test needs at least 10 samples")
    if isinstance(cdf, str):
        cdf = parse_law(cdf)
    f = cdf.cdf_array if isinstance(cdf, Law) else cdf
    d = ks_statistic(values, f)
    p = special.ks_pvalue(d, values.size)
    return TestReport(suite, "KS", d, p, p > alpha, {"n": int(values.size)}, {"alpha": alpha},
                      seed=samples.seed if isinstance(samples, SampleSet) else None)


def ks_two_sample(a: np.ndarray, b: np.ndarray, alpha: float | None = 0.01, suite: str = "ks2") -> TestReport:
    a, b = np.sort(a), np.sort(b)
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    p = special.ks_pvalue(d, a.size * b.size / (a.size + b.size))
    passed = None if alpha is None else p > alpha
    return TestReport(suite, "KS", d, p, passed, {"n1": int(a.size), "n2": int(b.size)},
                      {"alpha": alpha})


def chi_squared_test(counts: np.ndarray, probs: np.ndarray, alpha: float = 0.01,
                     suite: str = "chi2") -> TestReport:
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    expected = counts.sum() * probs
    stat = math.fsum((counts - expected) ** 2 / expected)
    dof = counts.size - 1
    p = special.chi2_sf(stat, dof)
    return TestReport(suite, "chi-squared", stat, p, p > alpha, {"n": int(counts.sum()), "cells": int(counts.size)},
                      {"alpha": alpha}, details={"dof": dof})


def mean_test(values: np.ndarray, target: float, k: float = 4.0, suite: str = "mean") -> TestReport:
    """|sample mean - target| <= k standard errors."""
    v = np.asarray(values, dtype=float)
    m = math.fsum(v) / v.size
    se = float(np.std(v, ddof=1) / math.sqrt(v.size))
    z = (m - target) / se if se > 0 else (0.0 if m == target else math.inf)
    return TestReport(suite, "moment", z, None, abs(z) <= k, {"n": int(v.size)}, {"standard_errors": k},
                      details={"mean": m, "standard_error": se, "target": target})


# --------------------------------------------------------------------------
# exact identities


def moment_check_yor(s: float) -> TestReport:
    """s-th moments of (gamma_{3/2})^2 and 4 beta_{3/4,1/4} gamma_1 gamma_{5/4}."""
    if not s > -0.75:
        raise DomainError("need s > -3/4")
    left = mellin_gamma(1.5, 2.0 * s)
    right = 4.0**s * mellin_beta(0.75, 0.25, s) * mellin_gamma(1.0, s) * mellin_gamma(1.25, s)
    rel = abs(left - right) / abs(left)
    return TestReport("yor", "moment", rel, None, rel <= 1e-12, tolerances={"relative": 1e-12},
                      details={"s": s, "left": left, "right": right})


def one_step_residuals(z: float, shapes: int = 1000, seed: int = 0, max_size: int = 60) -> TestReport:
    """Exact one-step conservation of the BST, GEN and BIS martingales.

    BST: averaging W over the n + 1 possible insertions multiplies it by (n + 2z)/(n + 1).
    GEN: a parent's weight equals the expected weight of its two children one
    exponential edge later. BIS: the same with a uniform split.
    """
    gen = np.random.default_rng(rng.derive_seed(seed, "onestep", repr(z)))
    worst = {"BST": 0.0, "GEN": 0.0, "BIS": 0.0}
    # the two one-edge expectations by quadrature; u^(2z-1) singular at 0 for z < 1/2
    edge = 2.0 * z * integrate.quad(lambda t: math.exp(-2.0 * z * t), 0.0, math.inf, epsabs=1e-14, epsrel=1e-13)[0]
    split = z * 2.0 * integrate.quad(lambda u: 1.0, 0.0, 1.0, weight="alg", wvar=(2.0 * z - 1.0, 0.0),
                                     epsabs=1e-14, epsrel=1e-13)[0]
    for k in range(shapes):
        n = int(gen.integers(0, max_size))
        depths = trees.simulate_bst(int(gen.integers(2**62)), n + 1).leaf_depths(n) if n else np.zeros(1, dtype=np.int64)
        w = mg.level_polynomial(depths, z)
        after = []
        for i in range(depths.size):
            d = depths.copy()
            d[i] += 1
            after.append(mg.level_polynomial(np.append(d, d[i]), z))
        avg = math.fsum(after) / depths.size
        worst["BST"] = max(worst["BST"], abs(avg - w * (n + 2.0 * z) / (n + 1.0)) / w)
        g = int(gen.integers(0, 20))
        s = float(gen.gamma(g + 1.0))
        parent = z**g * math.exp((1.0 - 2.0 * z) * s)
        worst["GEN"] = max(worst["GEN"], abs(parent * edge - parent) / parent)
        logprod = float(np.log(gen.random(g)).sum()) if g else 0.0
        parent = z**g * math.exp((2.0 * z - 1.0) * logprod)
        worst["BIS"] = max(worst["BIS"], abs(parent * split - parent) / parent)
    stat = max(worst.values())
    return TestReport("onestep", "identity", stat, None, stat <= 1e-10, {"shapes": shapes},
                      {"relative": 1e-10}, details={"z": z, "max_residual": worst}, seed=seed)


def degenerate_half(paths: int = 100, seed: int = 0) -> TestReport:
    """Every additive martingale equals 1 exactly at z = 1/2."""
    values = []
    for i in range(paths):
        s = rng.derive_seed(seed, "half", i)
        path = trees.simulate_yule(s, time=6.0)
        for t in np.linspace(0.0, 6.0, 13):
            values.append(mg.m_yule(path, float(t), 0.5).value)
        for g in range(0, 13):
            values.append(mg.m_gen(path, g, 0.5).value)
        gmax = min(6, int(path.depth[path.alive_mask(6.0)].min()))
        if gmax >= 1:
            ratios = trees.split_ratios(path, gmax, 6.0)
            for g in range(1, gmax + 1):
                values.append(mg.m_bis(ratios, g, 0.5).value)
        bst = trees.simulate_bst(s, 64)
        for k in range(0, 65, 4):
            values.append(mg.m_bst(bst.leaf_depths(k), 0.5).value)
    values = np.array(values)
    worst = float(np.max(np.abs(values - 1.0)))
    return TestReport("half", "identity", worst, None, worst == 0.0, {"paths": paths, "values": int(values.size)},
                      {"absolute": 0.0}, seed=seed)


# --------------------------------------------------------------------------
# limit laws of the martingales themselves


def yule_limit(z: float = 1.0, time: float = 10.0, paths: int = 10_000, seed: int = 0,
               alpha: float = 0.01) -> TestReport:
    """M(t, 1) against the exponential(1) law. Only z = 1 has that limit."""
    if z != 1.0:
        raise DomainError("the exponential limit holds at z = 1 only")
    vals = np.array([mg.m_yule(trees.simulate_yule(rng.derive_seed(seed, "yule-limit", i), time=time), time, z).value
                     for i in range(paths)])
    r = ks_test(vals, "exp1", alpha, suite="yule-limit")
    r.details = {"z": z, "time": time, "sample_mean": float(vals.mean())}
    r.seed = seed
    return r


def quarter_laws(generation: int = 14, size: int = 10_000, paths: int = 1000, seed: int = 0,
                 alpha: float = 0.01) -> TestReport:
    """M^GEN_g(1/4) against yule_quarter and M^BST_n(1/4) against bst_quarter.

    Both halves must pass. The BST half converges slowly: its limit has a
    tail of order m^(-3/2) and the gap to the law at n = 10^4 is still about
    0.15 in sup norm, far above the KS resolution at 10^3 paths.
    """
    gen_vals = np.array([mg.m_gen(trees.simulate_yule(rng.derive_seed(seed, "gen-quarter", i),
                                                      generation=generation), generation, 0.25).value
                         for i in range(paths)])
    depths = trees.bst_leaf_depths_batch(rng.derive_seed(seed, "bst-quarter"), size, paths)
    bst_vals = np.array([mg.m_bst(d, 0.25).value for d in depths])
    rg = ks_test(gen_vals, "yule_quarter", alpha, suite="gen-quarter")
    rb = ks_test(bst_vals, "bst_quarter", alpha, suite="bst-quarter")
    return TestReport("quarter-laws", "KS", max(rg.statistic, rb.statistic), min(rg.p_value, rb.p_value),
                      rg.passed and rb.passed, {"paths": paths, "generation": generation, "bst_size": size},
                      {"alpha": alpha},
                      details={"GEN": {"statistic": rg.statistic, "p_value": rg.p_value, "passed": rg.passed},
                               "BST": {"statistic": rb.statistic, "p_value": rb.p_value, "passed": rb.passed}},
                      seed=seed)


# --------------------------------------------------------------------------
# pathwise theorem suites


def _stage_summary(diffs: np.ndarray) -> tuple[list[float], list[float]]:
    means = [math.fsum(col) / col.size for col in diffs.T]
    ratios = [means[k + 1] / means[k] for k in range(len(means) - 1)]
    return means, ratios


def gen_vs_yule(z: float, generations: Sequence[int] = (8, 12, 16), paths: int = 200, seed: int = 0,
                derivative: bool = False, final_tol: float | None = None, max_ratio: float | None = None) -> TestReport:
    """Per-path |M^GEN_g(z) - M(t_g, z)| with t_g = g log 2, or the derivative kinds.

    Passes when the stage means decrease, the final mean is below ``final_tol``
    and every stage-to-stage ratio is below ``max_ratio`` (each only if given).
    """
    suite = "derivative-gen-vs-yule" if derivative else "gen-vs-yule"
    times = [g * math.log(2.0) for g in generations]
    diffs = np.empty((paths, len(generations)))
    positive = np.zeros((2, len(generations)))
    for i in range(paths):
        s = rng.derive_seed(seed, suite, i)
        path = trees.simulate_yule(s, time=times[-1] * (1 + 1e-9))
        for k, (g, t) in enumerate(zip(generations, times)):
            if derivative:
                a = mg.derivative_martingale("GEN", path, g, z).value
                b = mg.derivative_martingale("YULE", path, t, z).value
                positive[:, k] += (a > 0, b > 0)
            else:
                a = mg.m_gen(path, g, z).value
                b = mg.m_yule(path, t, z).value
            diffs[i, k] = abs(a - b)
    means, ratios = _stage_summary(diffs)
    ok = all(r < 1.0 for r in ratios)
    if final_tol is not None:
        ok = ok and means[-1] < final_tol
    if max_ratio is not None:
        ok = ok and all(r < max_ratio for r in ratios)
    stages = [{"generation": g, "time": t, "mean_abs_diff": m} for g, t, m in zip(generations, times, means)]
    details = {"z": z, "contraction": ratios,
               "median_abs_diff": [float(np.median(col)) for col in diffs.T]}
    if derivative:
        details["fraction_positive"] = {"GEN": (positive[0] / paths).tolist(), "YULE": (positive[1] / paths).tolist()}
    return TestReport(suite, "pathwise-diff", means[-1], None, ok, {"paths": paths},
                      {"final_mean": final_tol, "max_contraction": max_ratio}, stages, details, seed,
                      note="tolerances are calibrations: no convergence rate is known for these limits")


def bis_vs_bst(z: float, generation: int = 3, time: float = 10.0, paths: int = 200, seed: int = 0,
               k: float = 3.0, min_fraction: float = 0.95) -> TestReport:
    """Per path, M^BIS_g with ratios read at ``time`` against M^BST of the tree at ``time``.

    Paths whose depth-g line is still incomplete at ``time`` are read at the
    first instant it is complete instead.

    Per-path tolerance: k * 2^g * max_u T_u * |2z - 1| * g * eps, where eps is
    the largest relative binomial standard error among the estimated ratios.
    That is the worst-case spread of the log-product error over the 2^g terms.
    The suite passes when at least ``min_fraction`` of paths fall inside.
    """
    diffs, tols, sizes, times = [], [], [], []
    for i in range(paths):
        s = rng.derive_seed(seed, "bis-vs-bst", i)
        # read the ratios once the whole depth-g line is born
        line_born = float(trees._generation_times(s, generation).max())
        t = max(time, math.nextafter(line_born, math.inf))
        path = trees.simulate_yule(s, time=t)
        ratios = trees.split_ratios(path, generation, t)
        bis = mg.m_bis(ratios, generation, z).value
        bst = mg.m_bst(trees.alive_depths(path, t), z).value
        eps = max(float(np.max(se / r)) for r, se in zip(ratios.ratios, ratios.standard_errors()))
        terms = z**generation * np.exp((2.0 * z - 1.0) * ratios.log_branch_products(generation))
        tols.append(k * 2**generation * float(terms.max()) * abs(2.0 * z - 1.0) * generation * eps)
        diffs.append(abs(bis - bst))
        sizes.append(ratios.sample_size)
        times.append(t)
    diffs, tols = np.array(diffs), np.array(tols)
    fraction = float(np.mean(diffs <= tols))
    return TestReport("bis-vs-bst", "pathwise-diff", math.fsum(diffs) / paths, None, fraction >= min_fraction,
                      {"paths": paths}, {"standard_errors": k, "min_fraction": min_fraction},
                      details={"z": z, "generation": generation, "time": time,
                               "fraction_within": fraction, "mean_tolerance": math.fsum(tols) / paths,
                               "max_abs_diff": float(diffs.max()),
                               "median_sample_size": float(np.median(sizes)),
                               "latest_read_time": float(max(times))},
                      seed=seed, note="tolerance covers the ratio estimator only")


def limit_connection(z: float, time: float = 9.0, paths: int = 50, seed: int = 0, tol: float | None = None) -> TestReport:
    """|M(t,z) - (e^-t N_t)^(2z-1) / Gamma(2z) * M^BST_{N_t - 1}(z)| on the same path."""
    diffs = []
    for i in range(paths):
        path = trees.simulate_yule(rng.derive_seed(seed, "limit-connection", i), time=time)
        depths = trees.alive_depths(path, time)
        n_t = depths.size
        yule = mg.m_yule(path, time, z).value
        bst = mg.m_bst(depths, z).value
        diffs.append(abs(yule - (math.exp(-time) * n_t) ** (2.0 * z - 1.0) / math.gamma(2.0 * z) * bst))
    worst = float(max(diffs))
    return TestReport("limit-connection", "pathwise-diff", worst, None, None if tol is None else worst <= tol,
                      {"paths": paths}, {"absolute": tol}, details={"z": z, "time": time,
                                                                     "mean_abs_diff": math.fsum(diffs) / paths},
                      seed=seed)


def embedding_law(n: int = 4, samples: int = 100_000, seed: int = 0, alpha: float = 0.01) -> TestReport:
    """Shape of the Yule tree at tau_n and the BST T_n, both against the exact shape law."""
    shapes = trees.all_shapes(n)
    index = {sh.internal: k for k, sh in enumerate(shapes)}
    probs = np.array([trees.shape_probability(sh) for sh in shapes])
    yule_counts = np.zeros(len(shapes))
    bst_counts = np.zeros(len(shapes))
    for i in range(samples):
        s = rng.derive_seed(seed, "embedding", i)
        path = trees.simulate_yule(s, leaves=n + 1)
        internal = path.death < path.valid_horizon
        key = frozenset(trees.NodeLabel(int(d), int(b)) for d, b in zip(path.depth[internal], path.bits[internal]))
        yule_counts[index[key]] += 1
        bst_counts[index[frozenset(trees.simulate_bst(s, n).insertions)]] += 1
    ry = chi_squared_test(yule_counts, probs, alpha, "embedding-yule")
    rb = chi_squared_test(bst_counts, probs, alpha, "embedding-bst")
    p = min(ry.p_value, rb.p_value)
    return TestReport("embedding", "chi-squared", max(ry.statistic, rb.statistic), p, ry.passed and rb.passed,
                      {"samples": samples, "shapes": len(shapes)}, {"alpha": alpha},
                      details={"yule": {"statistic": ry.statistic, "p_value": ry.p_value},
                               "bst": {"statistic": rb.statistic, "p_value": rb.p_value}},
                      seed=seed)


def derivative_zero_mean(z: float, generation: int = 10, paths: int = 10_000, seed: int = 0,
                         k: float = 4.0) -> TestReport:
    """Sample means of the four derivative martingales against 0.

    GEN and YULE use one path per sample (YULE at t = g log 2), BST a tree with
    2^g internal nodes and BIS exact uniform splits to depth g.
    """
    t = generation * math.log(2.0)
    n = 2**generation
    vals = {"GEN": [], "YULE": [], "BST": [], "BIS": []}
    bst_depths = trees.bst_leaf_depths_batch(rng.derive_seed(seed, "dBST"), n, paths)
    for i in range(paths):
        s = rng.derive_seed(seed, "dzero", i)
        path = trees.simulate_yule(s, time=t * (1 + 1e-9))
        vals["GEN"].append(mg.derivative_martingale("GEN", path, generation, z).value)
        vals["YULE"].append(mg.derivative_martingale("YULE", path, t, z).value)
        vals["BST"].append(mg.derivative_martingale("BST", bst_depths[i], None, z).value)
        vals["BIS"].append(mg.derivative_martingale("BIS", trees.bisection_ratios(s, generation), generation, z).value)
    parts = {kind: mean_test(np.array(v), 0.0, k, f"d{kind}") for kind, v in vals.items()}
    worst = max(abs(r.statistic) for r in parts.values())
    return TestReport("derivative-zero-mean", "moment", worst, None, all(r.passed for r in parts.values()),
                      {"paths": paths}, {"standard_errors": k},
                      details={"z": z, "generation": generation,
                               **{kind: r.details | {"z_score": r.statistic} for kind, r in parts.items()}},
                      seed=seed)


def derivative_laws(z: float, generation: int = 10, paths: int = 2000, seed: int = 0, alpha: float = 0.01,
                    pathwise_paths: int = 50) -> TestReport:
    """Two-sample KS between |dBST| at n = 2^g and |dBIS| at generation g.

    Only equality in law of the limits is claimed, so the verdict is the KS
    test alone. The details also carry an exploratory pathwise comparison on
    shared Yule trees (split ratios estimated at depth 3 by t = 10), which
    never affects the verdict.
    """
    n = 2**generation
    bst_depths = trees.bst_leaf_depths_batch(rng.derive_seed(seed, "derivative-law-bst"), n, paths)
    a = np.array([abs(mg.derivative_martingale("BST", d, None, z).value) for d in bst_depths])
    b = np.array([abs(mg.derivative_martingale("BIS", trees.bisection_ratios(rng.derive_seed(seed, "derivative-law", i), generation),
                                               generation, z).value) for i in range(paths)])
    r = ks_two_sample(a, b, alpha=alpha, suite="derivative-law")
    diffs = []
    for i in range(pathwise_paths):
        s = rng.derive_seed(seed, "derivative-law-pathwise", i)
        t = max(10.0, math.nextafter(float(trees._generation_times(s, 3).max()), math.inf))
        path = trees.simulate_yule(s, time=t)
        bis = mg.derivative_martingale("BIS", trees.split_ratios(path, 3, t), 3, z).value
        bst = mg.derivative_martingale("BST", trees.alive_depths(path, t), None, z).value
        diffs.append(abs(bis - bst))
    r.details = {"z": z, "generation": generation, "bst_size": n,
                 "median_abs": {"BST": float(np.median(a)), "BIS": float(np.median(b))},
                 "exploratory_pathwise": {"paths": pathwise_paths, "generation": 3, "time": 10.0,
                                          "mean_abs_diff": math.fsum(diffs) / max(pathwise_paths, 1)}}
    r.seed = seed
    r.note = "finite-stage proxies of both limits; the pathwise entry is exploratory only"
    return r


def verify_theorem(which: str, z: float | None = None, seed: int = 0, **kw) -> TestReport:
    """Dispatch by theorem name."""
    zc_minus, zc_plus = mg.critical_points()
    if which in ("T31_bis_eq_bst", "T33_gen_eq_yule", "lmc1_connection"):
        if z is None or mg.classify(z).region is not mg.Region.SUPERCRITICAL:
            raise DomainError(f"{which} needs a supercritical z")
    if which in ("T32_deriv_law", "T34_deriv_gen_eq_yule"):
        z = zc_plus if z is None else z
        if not mg.classify(z).critical:
            raise DomainError(f"{which} needs z = z_c^- or z_c^+")
    if which == "T31_bis_eq_bst":
        return bis_vs_bst(z, seed=seed, **kw)
    if which == "T32_deriv_law":
        return derivative_laws(z, seed=seed, **kw)
    if which == "T33_gen_eq_yule":
        return gen_vs_yule(z, seed=seed, **kw)
    if which == "T34_deriv_gen_eq_yule":
        return gen_vs_yule(z, seed=seed, derivative=True, **kw)
    if which == "lmc1_connection":
        return limit_connection(z, seed=seed, **kw)
    if which == "embedding_law":
        return embedding_law(seed=seed, **kw)
    raise DomainError(f"unknown theorem {which!r}")
