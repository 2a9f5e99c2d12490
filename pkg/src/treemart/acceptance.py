"""The numbered acceptance checks, shared by ``treemart verify`` and the test suite.

Each check returns a :class:`TestReport` whose ``details`` hold the
sub-results; ``passed`` is the conjunction of the sub-results.
"""
from __future__ import annotations

import math
import tempfile
import time
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fixedpoint as fp
from . import martingales as mg
from . import stats
from .stats import TestReport


def _combine(suite: str, parts: dict[str, TestReport], **extra) -> TestReport:
    passed = all(r.passed is not False for r in parts.values())
    worst = max((float(r.statistic) for r in parts.values()), default=0.0)
    return TestReport(suite, "composite", worst, None, passed,
                      details={name: r.to_dict() for name, r in parts.items()} | extra)


def _bound(suite: str, value: float, limit: float, **details) -> TestReport:
    return TestReport(suite, "bound", value, None, bool(value <= limit), tolerances={"limit": limit},
                      details=details)


def critical_points_check(seed: int = 0) -> TestReport:
    mg.critical_points.cache_clear()
    start = time.perf_counter()
    lo, hi = mg.critical_points()
    elapsed = time.perf_counter() - start
    residual = max(abs(mg.critical_equation(lo)), abs(mg.critical_equation(hi)))
    # three printed decimals, cut rather than rounded
    printed = (math.floor(lo * 1000) / 1000, math.floor(hi * 1000) / 1000)
    ok = printed == (0.186, 2.155) and residual <= 1e-12 and elapsed < 1e-3
    return TestReport("critical-points", "exact", residual, None, ok,
                      tolerances={"residual": 1e-12, "seconds": 1e-3},
                      details={"z_minus": lo, "z_plus": hi, "three_decimals": list(printed), "seconds": elapsed})


def one_step_check(seed: int = 0, zs=(0.25, 0.5, 1.0, 2.0), shapes: int = 1000, tol: float = 1e-10) -> TestReport:
    parts = {repr(z): stats.one_step_residuals(z, shapes=shapes, seed=seed) for z in zs}
    worst = max(float(r.statistic) for r in parts.values())
    return TestReport("one-step", "exact", worst, None, worst <= tol, {"shapes": shapes}, {"absolute": tol},
                      details={k: r.details for k, r in parts.items()})


def degenerate_half_check(seed: int = 0, paths: int = 100) -> TestReport:
    return stats.degenerate_half(paths=paths, seed=seed)


def yule_limit_check(seed: int = 0, paths: int = 10_000, alpha: float = 0.01) -> TestReport:
    return stats.yule_limit(1.0, 10.0, paths, seed, alpha)


def quarter_laws_check(seed: int = 0, paths: int = 1000, alpha: float = 0.01) -> TestReport:
    return stats.quarter_laws(14, 10_000, paths, seed, alpha)


def fixed_point_check(seed: int = 0) -> TestReport:
    one = fp.solve_smoothing_j(1.0)
    quarter = fp.solve_smoothing_j(0.25)
    zc = mg.critical_points()[1]
    crit = fp.solve_smoothing_j(zc)
    target = 2.0 / (2.0 * zc - 1.0)
    readout = fp.critical_slope_readout(crit)
    parts = {
        "z=1": _bound("z=1", float(np.max(np.abs(one.values - fp.j_closed_form(1.0)(one.grid)))), 1e-6),
        "z=1/4": _bound("z=1/4", float(np.max(np.abs(quarter.values - fp.j_closed_form(0.25)(quarter.grid)))),
                        1e-4),
        "critical-slope": _bound("critical-slope", abs(readout / target - 1.0), 0.05, readout=readout,
                                 target=target, x_min=float(crit.grid[0])),
    }
    return _combine("fixed-point", parts)


def pantograph_check(seed: int = 0) -> TestReport:
    x = np.linspace(0.0, 5.0, 501)
    series = fp.solve_phi_series(2.0)
    gap = float(np.max(np.abs(series(x) - np.exp(-x / 4.0))))
    # the closed form blows up at 0, so sample strictly positive points
    residual = fp.check_integral_equation(fp.phi_bar, 16.0, tag="phi", points=np.geomspace(1e-3, 1e2, 40))
    return _combine("pantograph", {"series-alpha-2": _bound("series-alpha-2", gap, 1e-8),
                                   "closed-form-alpha-16": _bound("closed-form-alpha-16", residual, 1e-6)})


def mellin_check(seed: int = 0, orders=(0.5, 1.0, 2.0)) -> TestReport:
    parts = {}
    for s in orders:
        parts[f"yor s={s}"] = stats.moment_check_yor(s)
        left, right = fp.quarter_moment_chain(s)
        parts[f"quarter s={s}"] = _bound("quarter", abs(left - right) / abs(left), 1e-12, left=left, right=right)
    yor = parts["yor s=1.0"].details
    at_one = max(abs(yor["left"] - 3.75), abs(yor["right"] - 3.75)) / 3.75
    parts["value at s=1"] = _bound("value at s=1", at_one, 1e-12)
    return _combine("mellin", parts)


def theorem_check(seed: int = 0, paths: int = 200, dzero_paths: int = 10_000) -> TestReport:
    lo, hi = mg.critical_points()
    parts = {
        "gen-vs-yule": stats.gen_vs_yule(1.0, (8, 12, 16), paths=paths, seed=seed, final_tol=0.05),
        "bis-vs-bst": stats.bis_vs_bst(0.8, paths=paths, seed=seed),
        "embedding": stats.embedding_law(4, 100_000, seed=seed),
        "derivative z_c^-": stats.derivative_zero_mean(lo, 10, dzero_paths, seed=seed),
        "derivative z_c^+": stats.derivative_zero_mean(hi, 10, dzero_paths, seed=seed),
    }
    return _combine("theorems", parts)


def determinism_check(seed: int = 0) -> TestReport:
    from .cli import run_config

    commands = [
        {"command": "simulate", "model": "yule", "stop": "time=3", "paths": 3, "z": [0.7, 1.0]},
        {"command": "simulate", "model": "bst", "stop": "size=50", "paths": 2, "z": [0.25]},
        {"command": "simulate", "model": "bisection", "stop": "generation=5", "paths": 2, "z": [1.5]},
        {"command": "solve", "equation": "smoothing", "z": [1.0], "x_max": 10.0},
        {"command": "verify", "suite": "onestep", "z": [0.7]},
    ]
    mismatched = []
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        for cfg in commands:
            outs = []
            for root in (a, b):
                status, out = run_config(cfg | {"seed": seed, "out": root}, quiet=True)
                outs.append(Path(out))
            for f in sorted(p.name for p in outs[0].iterdir()):
                if f == "timing.json":
                    continue
                if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes():
                    mismatched.append(f"{cfg['command']}:{f}")
    return TestReport("determinism", "exact", float(len(mismatched)), None, not mismatched,
                      details={"commands": len(commands), "mismatched": mismatched})


@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    check: Callable[..., TestReport]


CRITERIA = {c.number: c for c in (
    Criterion(1, "critical", critical_points_check),
    Criterion(2, "onestep", one_step_check),
    Criterion(3, "half", degenerate_half_check),
    Criterion(4, "yule-limit", yule_limit_check),
    Criterion(5, "quarter", quarter_laws_check),
    Criterion(6, "fixedpoint", fixed_point_check),
    Criterion(7, "pantograph", pantograph_check),
    Criterion(8, "mellin", mellin_check),
    Criterion(9, "theorems", theorem_check),
    Criterion(10, "determinism", determinism_check),
)}
BY_NAME = {c.name: c for c in CRITERIA.values()}


def run_criterion(which: int | str, seed: int = 0, **kw) -> TestReport:
    crit = CRITERIA[which] if isinstance(which, int) else BY_NAME[which]
    report = crit.check(seed=seed, **kw)
    report.seed = seed
    return report
