"""Command-line entry point: ``treemart simulate|solve|verify|report``.

A run is described by one JSON config; command-line flags override its keys.
Outputs land in ``<out>/<command>-<hash>`` where the hash covers every
setting that can change the output bytes.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import inspect
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import fixedpoint as fp
from . import martingales as mg
from . import rng, stats, trees
from .errors import ExtrapolationError, ResourceError, TreemartError

MODELS = {"yule": ("time", "leaves", "generation"), "bst": ("size",), "bisection": ("generation",)}
KINDS = {"yule": ("YULE", "GEN", "dYULE", "dGEN"), "bst": ("BST", "dBST"), "bisection": ("BIS", "dBIS")}
DEFAULT_KINDS = {"yule": ["YULE", "GEN"], "bst": ["BST"], "bisection": ["BIS"]}
THEOREMS = {"bis-vs-bst": "T31_bis_eq_bst", "derivative-law": "T32_deriv_law", "gen-vs-yule": "T33_gen_eq_yule",
            "derivative-gen-vs-yule": "T34_deriv_gen_eq_yule", "limit-connection": "lmc1_connection",
            "embedding": "embedding_law"}
# keys that only affect where and how fast a run happens, never its bytes
_UNHASHED = ("out", "threads", "config")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: int = 0
    out: str = "runs"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    # simulate
    model: str = "yule"
    stop: str = "time=10"
    paths: int = 1
    z: list | None = None
    kinds: list | None = None
    times: list | None = None
    generations: list | None = None
    sizes: list | None = None
    save_paths: bool = False
    # solve
    equation: str = "smoothing"
    alpha: float | None = None
    x_min: float | None = None
    x_max: float | None = None
    max_step: float = 0.01
    # verify
    suite: str = "all"
    tolerances: dict = field(default_factory=dict)
    # report
    inputs: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        if "command" not in raw:
            raise ConfigError("field 'command': missing")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def stop_rule(self) -> tuple[str, float]:
        try:
            key, value = self.stop.split("=", 1)
            return key.strip(), float(value)
        except ValueError:
            raise ConfigError(f"field 'stop': expected name=value, got {self.stop!r}") from None

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"field '{name}': {msg}")

        need(self.command in ("simulate", "solve", "verify", "report"), "command",
             "one of simulate, solve, verify, report")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "integer in [0, 2^64)")
        need(isinstance(self.threads, int) and self.threads >= 1, "threads", "positive integer")
        need(isinstance(self.paths, int) and self.paths >= 1, "paths", "positive integer")
        if self.z is not None:
            if not isinstance(self.z, list):
                self.z = [self.z]
            need(bool(self.z) and all(isinstance(v, (int, float)) and v > 0 for v in self.z), "z",
                 "non-empty list of positive numbers")
            self.z = [float(v) for v in self.z]
        if self.command == "simulate":
            need(self.model in MODELS, "model", f"one of {', '.join(MODELS)}")
            key, value = self.stop_rule()
            need(key in MODELS[self.model], "stop", f"{self.model} accepts {', '.join(MODELS[self.model])}")
            need(value >= 0 and (key == "time" or value == int(value)), "stop", "non-negative (integer unless time)")
            if self.kinds is not None:
                bad = [k for k in self.kinds if k not in KINDS[self.model]]
                need(not bad, "kinds", f"{self.model} supports {', '.join(KINDS[self.model])}")
            for name in ("generations", "sizes"):
                vals = getattr(self, name)
                need(vals is None or all(isinstance(v, int) and v >= 0 for v in vals), name,
                     "list of non-negative integers")
            need(self.times is None or all(isinstance(v, (int, float)) and v >= 0 for v in self.times), "times",
                 "list of non-negative numbers")
            if self.model == "bst" and self.sizes is not None:
                need(max(self.sizes, default=0) <= value, "sizes", "entries must not exceed the stop size")
            if self.model == "bisection" and self.generations is not None:
                need(max(self.generations, default=0) <= value, "generations",
                     "entries must not exceed the stop generation")
        if self.command == "solve":
            need(self.equation in ("smoothing", "pantograph"), "equation", "smoothing or pantograph")
            if self.equation == "smoothing":
                need(self.z is not None and len(self.z) == 1, "z", "solve takes exactly one value")
            if self.equation == "pantograph":
                need(self.alpha is not None and self.alpha > 1, "alpha", "number above 1")
            need(self.max_step > 0, "max_step", "positive")
        if self.command == "verify":
            from .acceptance import BY_NAME

            choices = ["all", *BY_NAME, *THEOREMS]
            need(self.suite in choices, "suite", f"one of {', '.join(choices)}")
            need(isinstance(self.tolerances, dict), "tolerances", "object")
            if self.suite not in THEOREMS:
                chosen = BY_NAME.values() if self.suite == "all" else [BY_NAME[self.suite]]
                allowed = set().union(*(inspect.signature(c.check).parameters for c in chosen)) - {"seed"}
                bad = sorted(set(self.tolerances) - allowed)
                need(not bad, "tolerances", f"unknown key(s) {', '.join(bad)}; allowed: {', '.join(sorted(allowed))}")
        if self.command == "report":
            need(bool(self.inputs), "inputs", "at least one run directory")

    def hashed(self) -> dict:
        d = dataclasses.asdict(self)
        for key in _UNHASHED:
            d.pop(key, None)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.hashed(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _fresh_dir(root: Path, name: str) -> Path:
    # never touch an earlier run: suffix a counter when the name is taken
    candidate, k = root / name, 1
    while candidate.exists():
        candidate, k = root / f"{name}.{k}", k + 1
    candidate.mkdir(parents=True)
    return candidate


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v))


# --------------------------------------------------------------------------
# simulate


def _path_rows(cfg_dict: dict, i: int) -> tuple[list[str], bytes | None]:
    cfg = ExperimentConfig(**cfg_dict)
    key, value = cfg.stop_rule()
    seed = rng.derive_seed(cfg.seed, "path", i)
    kinds = cfg.kinds or DEFAULT_KINDS[cfg.model]
    zs = cfg.z or [1.0]
    rows, blob = [], None

    def emit(kind, index, z, v):
        rows.append(f"{i},{_fmt(index)},{kind},{z!r},{float(v)!r}")

    if cfg.model == "yule":
        path = trees.simulate_yule(seed, **{key: value if key == "time" else int(value)})
        end = value if key == "time" else math.nextafter(path.valid_horizon, 0.0)
        times = cfg.times if cfg.times is not None else np.linspace(0.0, end, 11).tolist()
        gens = cfg.generations if cfg.generations is not None else list(range(int(value) + 1 if key == "generation"
                                                                              else 11))
        for z in zs:
            for kind in kinds:
                if kind in ("YULE", "dYULE"):
                    for t in times:
                        v = mg.m_yule(path, t, z) if kind == "YULE" else mg.derivative_martingale("YULE", path, t, z)
                        emit(kind, float(t), z, v.value)
                else:
                    for g in gens:
                        v = mg.m_gen(path, g, z) if kind == "GEN" else mg.derivative_martingale("GEN", path, g, z)
                        emit(kind, g, z, v.value)
        if cfg.save_paths:
            import io

            buf = io.BytesIO()
            trees.dump_path(path, buf)
            blob = buf.getvalue()
    elif cfg.model == "bst":
        n = int(value)
        process = trees.simulate_bst(seed, n) if n >= 1 else None
        sizes = cfg.sizes if cfg.sizes is not None else \
            sorted({int(round(v)) for v in np.geomspace(1, max(n, 1), 20)} | {n})
        for k in sizes:
            depths = process.leaf_depths(k) if process is not None else np.zeros(1, dtype=np.int64)
            for z in zs:
                for kind in kinds:
                    v = mg.m_bst(depths, z) if kind == "BST" else mg.derivative_martingale("BST", depths, None, z)
                    emit(kind, k, z, v.value)
    else:
        g_max = int(value)
        ratios = trees.bisection_ratios(seed, g_max)
        gens = cfg.generations if cfg.generations is not None else list(range(g_max + 1))
        for g in gens:
            for z in zs:
                for kind in kinds:
                    v = mg.m_bis(ratios, g, z) if kind == "BIS" else mg.derivative_martingale("BIS", ratios, g, z)
                    emit(kind, g, z, v.value)
    return rows, blob


def _simulate(cfg: ExperimentConfig, out: Path) -> int:
    d = dataclasses.asdict(cfg)
    ids = range(cfg.paths)
    if cfg.threads > 1 and cfg.paths > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            # map keeps submission order, so the file does not depend on scheduling
            results = list(pool.map(_path_rows, [d] * cfg.paths, ids, chunksize=max(1, cfg.paths // (4 * cfg.threads))))
    else:
        results = [_path_rows(d, i) for i in ids]
    with open(out / "trajectories.csv", "w", newline="\n") as fh:
        fh.write("path_id,index,kind,z,value\n")
        for rows, _ in results:
            fh.writelines(r + "\n" for r in rows)
    if cfg.save_paths and cfg.model == "yule":
        (out / "paths").mkdir()
        for i, (_, blob) in enumerate(results):
            (out / "paths" / f"path-{i:06d}.yule").write_bytes(blob)
    return 0


# --------------------------------------------------------------------------
# solve


def _solve(cfg: ExperimentConfig, out: Path) -> int:
    summary: dict = {"equation": cfg.equation}
    if cfg.equation == "smoothing":
        kw = {"max_step": cfg.max_step}
        if cfg.x_min is not None:
            kw["x_min"] = cfg.x_min
        if cfg.x_max is not None:
            kw["x_max"] = cfg.x_max
        sol = fp.solve_smoothing_j(cfg.z[0], **kw)
        residual = fp.check_integral_equation(sol, cfg.z[0], max_points=30)
        summary |= {"z": cfg.z[0], "info": sol.info, "residual": residual}
        if sol.info.get("k0") is not None:
            summary["critical_slope_readout"] = fp.critical_slope_readout(sol)
    else:
        pant = fp.PantographSolution(cfg.alpha, x_max=cfg.x_max or 1e6)
        x_min = cfg.x_min or 1e-6
        count = int(math.ceil(math.log(pant.x_max / x_min) / cfg.max_step)) + 1
        sol = pant.as_solution(np.geomspace(x_min, pant.x_max, min(count, 20_001)))
        pts = np.concatenate([[0.0], np.geomspace(1e-3, min(1e2, pant.x_max), 30)])
        try:
            residual = fp.check_integral_equation(sol, cfg.alpha, tag="Phi", points=pts)
        except ExtrapolationError as exc:
            residual, summary["residual_note"] = None, str(exc)
        summary |= {"alpha": cfg.alpha, "residual": residual}
        if 1.0 < cfg.alpha <= fp.alpha_critical() * (1 + 1e-12):
            summary["tail"] = fp.measure_tail_constant(pant)
    with open(out / "solution.csv", "w", newline="\n") as fh:
        sol.to_csv(fh, residual)
    (out / "solution.json").write_text(json.dumps(stats._clean(summary), indent=2, sort_keys=True) + "\n")
    return 0


# --------------------------------------------------------------------------
# verify and report


def _verify(cfg: ExperimentConfig, out: Path, quiet: bool) -> int:
    from . import acceptance

    if cfg.suite in THEOREMS:
        z = cfg.z[0] if cfg.z else None
        try:
            reports = {cfg.suite: stats.verify_theorem(THEOREMS[cfg.suite], z, seed=cfg.seed, **cfg.tolerances)}
        except TypeError as exc:
            raise ConfigError(f"field 'tolerances': {exc}") from None
        labels = {cfg.suite: cfg.suite}
    else:
        chosen = acceptance.CRITERIA.values() if cfg.suite == "all" else [acceptance.BY_NAME[cfg.suite]]
        reports, labels = {}, {}
        for crit in chosen:
            params = inspect.signature(crit.check).parameters
            kw = {k: v for k, v in cfg.tolerances.items() if k in params}
            if crit.name == "onestep" and cfg.z:
                kw.setdefault("zs", tuple(cfg.z))
            reports[crit.name] = acceptance.run_criterion(crit.number, seed=cfg.seed, **kw)
            labels[crit.name] = f"criterion {crit.number} ({crit.name})"
    failed = []
    with open(out / "summary.csv", "w", newline="\n") as fh:
        fh.write(stats.TestReport.CSV_HEADER + "\n")
        for name, rep in reports.items():
            (out / f"report-{name}.json").write_text(rep.to_json() + "\n")
            fh.write(rep.csv_row() + "\n")
            if rep.passed is False:
                failed.append(labels[name])
            if not quiet:
                print(f"{labels[name]}: {rep.verdict} (statistic {float(rep.statistic):.6g})")
    if failed:
        print("failed: " + "; ".join(failed), file=sys.stderr)
        return 1
    return 0


def _report(cfg: ExperimentConfig, out: Path, quiet: bool) -> int:
    rows = []
    for run in cfg.inputs:
        for f in sorted(Path(run).glob("report-*.json")):
            rep = json.loads(f.read_text())
            p = "" if rep["p_value"] is None else repr(float(rep["p_value"]))
            rows.append((Path(run).name, rep["suite"], rep["kind"], repr(float(rep["statistic"])), p,
                         rep["verdict"]))
    if not rows:
        raise ConfigError("field 'inputs': no report-*.json files found")
    with open(out / "summary.csv", "w", newline="\n") as fh:
        fh.write("run,suite,kind,statistic,p_value,verdict\n")
        fh.writelines(",".join(r) + "\n" for r in rows)
    if not quiet:
        width = max(len(r[1]) for r in rows)
        for r in rows:
            print(f"{r[0]}  {r[1]:<{width}}  {r[5]:<11}  {r[3]}")
    return 0


# --------------------------------------------------------------------------
# plumbing


def run_config(raw: dict, quiet: bool = False) -> tuple[int, Path]:
    """Validate ``raw``, run it and return (exit status, output directory)."""
    cfg = ExperimentConfig.from_dict(raw)
    out = _fresh_dir(Path(cfg.out), f"{cfg.command}-{cfg.digest()}")
    versions = {"treemart": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                "python": platform.python_version()}
    manifest = {"config": cfg.hashed(), "versions": versions}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    start = time.perf_counter()
    if cfg.command == "simulate":
        status = _simulate(cfg, out)
    elif cfg.command == "solve":
        status = _solve(cfg, out)
    elif cfg.command == "verify":
        status = _verify(cfg, out, quiet)
    else:
        status = _report(cfg, out, quiet)
    # wall time lives apart from the manifest so the rest stays byte-identical
    (out / "timing.json").write_text(json.dumps({"wall_seconds": time.perf_counter() - start}) + "\n")
    if not quiet:
        print(out)
    return status, out


def _parse_z(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON file with run settings; flags override it")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--out", help="root directory for run outputs (default: runs)")
    shared.add_argument("--threads", type=int, help="worker processes (default: available CPUs)")
    shared.add_argument("--z", type=_parse_z, help="comma-separated z values")

    parser = argparse.ArgumentParser(prog="treemart", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[shared], help="simulate trees and record martingale trajectories")
    sim.add_argument("--model", choices=list(MODELS))
    sim.add_argument("--stop", help="time=T, leaves=N or generation=G (yule); size=N (bst); generation=G (bisection)")
    sim.add_argument("--paths", type=int)
    sim.add_argument("--kinds", type=lambda s: s.split(","))
    sim.add_argument("--times", type=_parse_z)
    sim.add_argument("--generations", type=lambda s: [int(v) for v in s.split(",")])
    sim.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")])
    sim.add_argument("--save-paths", action="store_true", default=None)

    sol = sub.add_parser("solve", parents=[shared], help="solve the fixed-point or pantograph equation")
    sol.add_argument("--equation", choices=["smoothing", "pantograph"])
    sol.add_argument("--alpha", type=float)
    sol.add_argument("--xmin", dest="x_min", type=float)
    sol.add_argument("--xmax", dest="x_max", type=float)
    sol.add_argument("--step", dest="max_step", type=float)

    ver = sub.add_parser("verify", parents=[shared], help="run verification suites")
    ver.add_argument("--suite")
    ver.add_argument("--tolerances", type=json.loads, help="JSON object of suite keyword overrides")

    rep = sub.add_parser("report", parents=[shared], help="collect reports from earlier verify runs")
    rep.add_argument("inputs", nargs="+", metavar="RUN_DIR")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config: {exc}")
        if not isinstance(raw, dict):
            parser.error("config must be a JSON object")
        if raw.get("command", args.command) != args.command:
            parser.error(f"config is for {raw['command']!r}, not {args.command!r}")
    flags = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    raw |= flags
    try:
        status, _ = run_config(raw)
    except ConfigError as exc:
        parser.error(str(exc))
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3
    except TreemartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return status


if __name__ == "__main__":
    sys.exit(main())
