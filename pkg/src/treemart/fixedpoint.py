"""Laplace-transform fixed points, the pantograph equation and Mellin transforms.

The smoothing equation solved here is

    J(x) = int_0^1 J(z x u^(2z-1))^2 du,    J(0) = 1.

Writing u = exp(-w) with w ~ Exp(1), the argument is z x exp(-q) with
q = (2z-1) w exponentially distributed on a half-line. On a logarithmic grid
the right-hand side is therefore an exponential-kernel convolution of J^2,
shifted by log z, which a first-order linear recursion evaluates in O(N).
"""
from __future__ import annotations

import enum
import io
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq
from scipy.signal import lfilter

from .errors import ConvergenceError, DomainError, ExtrapolationError, TruncationError
from .martingales import ParamZ, Region, as_param, critical_points


class Normalization(enum.Enum):
    SLOPE_ONE = "slope_one"
    CRITICAL_K0 = "critical_K0"
    ENTIRE_SERIES = "entire_series"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class LaplaceSolution:
    """A decreasing function known on a grid, or in closed form.

    ``tag`` says which equation the function belongs to: ``"j"`` for the
    smoothing equation, ``"phi"`` for the integral form in the transformed
    variable, ``"Phi"`` for the pantograph solution and ``"psi"`` for the
    convolution equation. Grid-backed solutions interpolate ``log(-log J)``
    against ``log x`` with a shape-preserving cubic.
    """

    grid: np.ndarray
    values: np.ndarray
    parameter: float
    tag: str = "j"
    normalization: Normalization = Normalization.NONE
    neglog: np.ndarray | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict)
    low_model: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    _interp: object = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("grid", "values", "neglog"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=float)
                a.flags.writeable = False
                object.__setattr__(self, name, a)
        if self.func is None:
            h = self.neglog if self.neglog is not None else -np.log(self.values)
            object.__setattr__(self, "_interp", PchipInterpolator(np.log(self.grid), np.log(h), extrapolate=False))

    @classmethod
    def from_function(cls, func, parameter, tag="j", grid=None, normalization=Normalization.NONE, **info):
        grid = np.geomspace(1e-6, 1e3, 200) if grid is None else np.asarray(grid, dtype=float)
        return cls(grid, func(grid), parameter, tag, normalization, func=func, info=info)

    @property
    def x_min(self) -> float:
        return float(self.grid[0])

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    def __call__(self, x, extrapolate: bool = False):
        """Evaluate at ``x``; outside the grid raise unless ``extrapolate``.

        Extrapolation uses the small-argument model fitted by the solver below
        the grid and a log-log linear continuation of -log J above it.
        """
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return self.func(x)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.ones_like(x)
        pos = x > 0
        lo = pos & (x < self.x_min * (1 - 1e-12))
        hi = x > self.x_max * (1 + 1e-12)
        if (lo.any() or hi.any()) and not extrapolate:
            raise ExtrapolationError(
                f"argument outside [{self.x_min:.3g}, {self.x_max:.3g}] "
                f"(min {x[pos].min() if pos.any() else 0:.3g}, max {x.max():.3g})")
        mid = pos & ~lo & ~hi
        sx = np.log(np.clip(x[mid], self.x_min, self.x_max))
        out[mid] = np.exp(-np.exp(self._interp(sx)))
        if lo.any():
            if self.low_model is None:
                raise ExtrapolationError("no small-argument model available")
            out[lo] = np.exp(-self.low_model(x[lo]))
        if hi.any():
            s = np.log(self.grid[-2:])
            lh = self._interp(s)
            slope = (lh[1] - lh[0]) / (s[1] - s[0])
            out[hi] = np.exp(-np.exp(lh[1] + slope * (np.log(x[hi]) - s[1])))
        return out[0] if scalar else out

    def is_non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) <= 1e-15))

    def convexity_spot_check(self, rel_tol: float = 1e-8) -> bool:
        """Second divided differences in x are nonnegative (a consequence of complete monotonicity).

        Slopes are differenced on J where J is small and on 1 - J elsewhere, so
        neither end of the grid loses its digits to cancellation.
        """
        x, v = self.grid, self.values
        one_minus = -np.expm1(-self.neglog) if self.neglog is not None else 1.0 - v
        small = (v[:-1] < 0.5) & (v[1:] < 0.5)
        d1 = np.where(small, np.diff(v), -np.diff(one_minus)) / np.diff(x)
        return bool(np.all(np.diff(d1) >= -rel_tol * (np.abs(d1[:-1]) + np.abs(d1[1:]))))

    def to_csv(self, fh: io.TextIOBase, residual: float | None = None):
        """Two-column CSV with a one-line commented header."""
        res = None if residual is None else float(residual)
        fh.write(f"# tag={self.tag} parameter={float(self.parameter)!r} normalization={self.normalization.value}"
                 f" residual={res!r}\n")
        fh.write("x,value\n")
        for a, b in zip(self.grid, self.values):
            fh.write(f"{float(a)!r},{float(b)!r}\n")


def read_csv(fh: io.TextIOBase) -> tuple[dict, np.ndarray, np.ndarray]:
    header = fh.readline().lstrip("# ").split()
    meta = dict(item.split("=", 1) for item in header)
    fh.readline()
    data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, data[:, 0], data[:, 1]


# --------------------------------------------------------------------------
# closed forms


def j_closed_form(z: float) -> Callable[[np.ndarray], np.ndarray] | None:
    """Known solutions of the smoothing equation, normalized to slope one at 0."""
    if z == 1.0:
        return lambda x: 1.0 / (1.0 + np.asarray(x, dtype=float))
    if z == 0.5:
        return lambda x: np.exp(-np.asarray(x, dtype=float))
    if z == 0.25:
        def quarter(x):
            r = np.sqrt(2.0 * np.asarray(x, dtype=float))
            return (1.0 + r) * np.exp(-r)
        return quarter
    return None


def phi_bar(x):
    """(1 + x^(1/4)) exp(-x^(1/4)) / x, a solution of the integral form for alpha = 16."""
    x = np.asarray(x, dtype=float)
    r = x ** 0.25
    return (1.0 + r) * np.exp(-r) / x


# --------------------------------------------------------------------------
# smoothing equation solver


def _cell_weights(rate: float, h: float, nodes: int = 24) -> np.ndarray:
    """Weights W_k with int_0^h rate e^(-rate q) f(s - q) dq ~ sum_k W_k f(s - k h).

    f is replaced by its cubic interpolant through the four points s, s-h, s-2h, s-3h.
    """
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    q = 0.5 * h * (xg + 1.0)
    w = 0.5 * h * wg * rate * np.exp(-rate * q)
    pts = h * np.arange(4)
    weights = np.empty(4)
    for k in range(4):
        basis = np.ones_like(q)
        for m in range(4):
            if m != k:
                basis *= (q - pts[m]) / (pts[k] - pts[m])
        weights[k] = np.dot(w, basis)
    return weights


def _exp_convolve(vals: np.ndarray, weights: np.ndarray, decay: float, start: float) -> np.ndarray:
    """Running int_0^inf rate e^(-rate q) f(s_i - q) dq for i >= 3, given its value at s_2."""
    c = weights[0] * vals[3:] + weights[1] * vals[2:-1] + weights[2] * vals[1:-2] + weights[3] * vals[:-3]
    return lfilter([1.0], [1.0, -decay], c, zi=[decay * start])[0]


def correction_exponent(z: float) -> float:
    """Exponent d of the first correction H(x)/x = K + b x^d near zero (supercritical z).

    It comes from the second root p* in (1, 2) of 2 z^p / (1 + p(2z - 1)) = 1;
    when that root is at or beyond 2 the correction is of order x.
    """
    def moment(p):
        den = 1.0 + p * (2.0 * z - 1.0)
        return 2.0 * z**p / den - 1.0 if den > 0 else 1.0

    if z != 0.5 and moment(1.0 + 1e-9) < 0 < moment(2.0):
        return brentq(moment, 1.0 + 1e-9, 2.0, xtol=1e-14) - 1.0
    return 1.0


@dataclass
class _LowModel:
    critical: bool
    exponent: float
    coef: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.critical:
            return x * (self.coef[0] * np.abs(np.log(x)) + self.coef[1])
        return x * (self.coef[0] + self.coef[1] * x**self.exponent)

    @classmethod
    def fit(cls, x, h, critical, exponent):
        """Least squares for H/x over the lowest decade of the grid."""
        sel = x <= x[0] * 10.0
        xs, ys = x[sel], h[sel] / x[sel]
        second = np.abs(np.log(xs)) if critical else xs**exponent
        a = np.column_stack([second, np.ones_like(xs)] if critical else [np.ones_like(xs), second])
        return cls(critical, exponent, np.linalg.lstsq(a, ys, rcond=None)[0])


def log_grid(z: float, x_min: float, x_max: float, max_step: float) -> tuple[np.ndarray, int]:
    """Uniform grid in log x whose step divides |log z| exactly; returns (log x, cells per shift)."""
    shift = abs(math.log(z))
    if shift < 1e-12:
        cells, step = 0, max_step
    else:
        cells = math.ceil(shift / max_step)
        step = shift / cells
    s0, s1 = math.log(x_min), math.log(x_max)
    n = math.ceil((s1 - s0) / step) + 1
    return s0 + step * np.arange(n), cells


class _SmoothingMap:
    """One sweep of the smoothing iteration, acting on H = -log J on a fixed grid."""

    def __init__(self, z: float, s: np.ndarray, cells: int, critical: bool):
        self.z, self.s, self.critical = z, s, critical
        self.step = s[1] - s[0]
        self.x = np.exp(s)
        self.n = s.size
        self.pad = cells + 4
        self.se = s[0] + self.step * np.arange(-self.pad, self.n + self.pad)
        self.xe = np.exp(self.se)
        self.offset = int(round(math.log(z) / self.step))
        self.k0 = 2.0 / abs(2.0 * z - 1.0) if z != 0.5 else math.nan
        self.exponent = 1.0 if critical else correction_exponent(z)
        self.degenerate = z == 0.5
        if not self.degenerate:
            self.rate = 1.0 / abs(2.0 * z - 1.0)
            self.weights = _cell_weights(self.rate, self.step)
            self.decay = math.exp(-self.rate * self.step)
            self.lag_x, self.lag_w = np.polynomial.laguerre.laggauss(40)

    def fit(self, h: np.ndarray) -> _LowModel:
        return _LowModel.fit(self.x, h, self.critical, self.exponent)

    def extend(self, h: np.ndarray, model: _LowModel) -> np.ndarray:
        pad, n, step = self.pad, self.n, self.step
        he = np.empty(self.se.size)
        he[pad:pad + n] = h
        he[:pad] = model(self.xe[:pad])
        lh = np.log(h[-2:])
        he[pad + n:] = np.exp(lh[1] + (lh[1] - lh[0]) / step * (self.se[pad + n:] - self.s[-1]))
        return he

    def apply(self, h: np.ndarray) -> np.ndarray:
        """Right-hand side of the equation, then the rescale x -> x/kappa."""
        pad, n, off = self.pad, self.n, self.offset
        model = self.fit(h)
        he = self.extend(h, model)
        window = slice(pad + off, pad + off + n)
        if self.degenerate:
            new = 2.0 * he[window]
        elif self.z > 0.5:
            g = -np.expm1(-2.0 * he)  # 1 - J^2
            # arguments shrink: integrate from the left, seeded by the model at se[2]
            seed_args = np.exp(self.se[2] - self.lag_x / self.rate)
            start = np.dot(self.lag_w, -np.expm1(-2.0 * model(seed_args)))
            conv = np.concatenate([np.full(3, np.nan), _exp_convolve(g, self.weights, self.decay, start)])
            new = -np.log1p(-conv[window])
        else:
            g = -np.expm1(-2.0 * he)
            # arguments grow: integrate from the right, where J^2 = 0
            conv = _exp_convolve(g[::-1], self.weights, self.decay, 1.0)
            conv = np.concatenate([np.full(3, np.nan), conv])[::-1][window]
            sq = _exp_convolve(np.exp(-2.0 * he)[::-1], self.weights, self.decay, 0.0)
            sq = np.concatenate([np.full(3, np.nan), sq])[::-1][window]
            # far out J is tiny and 1 - (1 - J) loses it; use the J^2 recursion there
            far = conv > 0.5
            new = np.empty(n)
            new[far] = -np.log(np.maximum(sq[far], 1e-300))
            new[~far] = -np.log1p(-conv[~far])
        return self.rescale(new)

    def rescale(self, h: np.ndarray) -> np.ndarray:
        model = self.fit(h)
        if self.critical:
            kappa = float(np.clip(model.coef[0] / self.k0, 0.5, 2.0))
        else:
            kappa = float(model.coef[0])
        if kappa == 1.0:
            return h
        # x -> x / kappa, continued below the grid by the fitted model
        pad = self.pad
        ext = np.concatenate([np.log(model(self.xe[:pad])), np.log(h)])
        return np.exp(CubicSpline(self.se[:pad + self.n], ext)(self.s - math.log(kappa)))


def solve_smoothing_j(
    z: float | ParamZ,
    x_min: float | None = None,
    x_max: float = 1e3,
    max_step: float = 0.01,
    tol: float = 1e-10,
    max_sweeps: int = 500,
    mode: Normalization | None = None,
    initial: Callable[[np.ndarray], np.ndarray] | None = None,
    memory: int = 10,
) -> LaplaceSolution:
    """Fixed point of the smoothing equation on a logarithmic grid.

    After every sweep the free scale is pinned: H(x)/x -> 1 at zero
    (supercritical) or H(x)/(x|log x|) -> 2/|2z-1| (critical), where
    H = -log J. The small-argument behaviour is read from a two-term fit over
    the lowest decade of the grid. ``memory > 0`` switches on Anderson mixing
    of that many previous sweeps (applied to log H).
    """
    p = as_param(z)
    z = p.z
    if p.region is Region.SUBCRITICAL:
        raise DomainError(f"z={z} lies outside [z_c^-, z_c^+]: only the constant solution exists")
    critical = p.critical
    if mode is None:
        mode = Normalization.CRITICAL_K0 if critical else Normalization.SLOPE_ONE
    if (mode is Normalization.CRITICAL_K0) != critical:
        raise DomainError(f"normalization {mode.value} does not match region {p.region.value}")
    if x_min is None:
        x_min = 1e-24 if critical else 1e-6

    s, cells = log_grid(z, x_min, x_max, max_step)
    sweep_map = _SmoothingMap(z, s, cells, critical)
    x = sweep_map.x
    if initial is not None:
        h = np.asarray(initial(x), dtype=float)
    elif critical:
        h = sweep_map.k0 * x * np.log1p(1.0 / x) + x
    else:
        h = x.copy()

    hist_u: list[np.ndarray] = []
    hist_r: list[np.ndarray] = []
    delta = math.inf
    for sweep in range(1, max_sweeps + 1):
        new = sweep_map.apply(h)
        delta = float(np.max(np.abs(np.exp(-new) - np.exp(-h))))
        if delta < tol:
            h = new
            break
        if sweep <= 10:
            h = 0.5 * (h + new)
        elif memory:
            u, r = np.log(h), np.log(new) - np.log(h)
            hist_u.append(u)
            hist_r.append(r)
            if len(hist_u) > memory + 1:
                hist_u.pop(0)
                hist_r.pop(0)
            if len(hist_u) > 1:
                du = np.diff(np.array(hist_u), axis=0).T
                dr = np.diff(np.array(hist_r), axis=0).T
                gamma = np.linalg.lstsq(dr, r, rcond=None)[0]
                h = np.exp(u + r - (du + dr) @ gamma)
            else:
                h = new
        else:
            h = new
    else:
        raise ConvergenceError(f"no convergence after {max_sweeps} sweeps (last change {delta:.3g})")

    model = sweep_map.fit(h)
    info = {"sweeps": sweep, "last_change": delta, "low_coefficients": model.coef.tolist(),
            "correction_exponent": sweep_map.exponent}
    if critical:
        info["k0"] = sweep_map.k0
    return LaplaceSolution(x, np.exp(-h), z, "j", mode, neglog=h, info=info, low_model=model)


def critical_slope_readout(sol: LaplaceSolution) -> float:
    """(1 - J(x)) / (x |log x|) at the smallest abscissa."""
    x = sol.grid[0]
    return float(-np.expm1(-sol.neglog[0]) / (x * abs(math.log(x)))) if sol.neglog is not None \
        else float((1 - sol.values[0]) / (x * abs(math.log(x))))


# --------------------------------------------------------------------------
# residual checks


def _j_rhs(j, z: float, x: float) -> float:
    # int_0^1 J(z x u^(2z-1))^2 du with u = e^(-w); e^(-w) is negligible long before w = 700
    f = lambda w: float(j(z * x * math.exp(-(2.0 * z - 1.0) * w))) ** 2 * math.exp(-w)
    return integrate.quad(f, 0.0, 700.0, epsabs=1e-13, epsrel=1e-12, limit=400, points=[1.0, 5.0, 20.0])[0]


def _phi_rhs(phi, alpha: float, x: float) -> float:
    # alpha^-2 int_x^inf phi(y/alpha)^2 dy, the tail with y = x0 e^v
    sq = lambda y: float(phi(y / alpha)) ** 2
    x0 = x if x > 0 else 1.0
    head = integrate.quad(sq, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0] if x <= 0 else 0.0
    # integrands decay at least like e^(-v); stop before exp overflows
    tail = integrate.quad(lambda v: sq(x0 * math.exp(v)) * x0 * math.exp(v), 0.0, 690.0,
                          epsabs=1e-13, epsrel=1e-12, limit=400, points=[1.0, 5.0, 20.0])[0]
    return (head + tail) / alpha**2


def check_integral_equation(
    candidate: LaplaceSolution | Callable,
    parameter: float | ParamZ,
    tag: str | None = None,
    points: np.ndarray | None = None,
    max_points: int = 60,
) -> float:
    """sup |LHS - RHS| of the smoothing equation (tag "j", parameter z) or of its
    transformed integral form (tag "phi"/"Phi", parameter alpha) at sample points."""
    if tag is None:
        tag = candidate.tag if isinstance(candidate, LaplaceSolution) else "j"
    if points is None:
        grid = candidate.grid if isinstance(candidate, LaplaceSolution) else np.geomspace(1e-3, 1e2, max_points)
        points = grid[np.unique(np.linspace(0, grid.size - 1, min(max_points, grid.size)).astype(int))]
    par = float(parameter)
    lhs = np.asarray(candidate(np.asarray(points)), dtype=float)
    fn = candidate
    if isinstance(candidate, LaplaceSolution) and candidate.func is None:
        fn = lambda y: candidate(y, extrapolate=True)
    if tag not in ("j", "phi", "Phi"):
        raise ValueError(f"no integral equation for tag {tag!r}")
    side = _j_rhs if tag == "j" else _phi_rhs
    with warnings.catch_warnings():
        # quad flags roundoff once it reaches machine precision; the residual itself is the diagnostic
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        rhs = np.array([side(fn, par, float(v)) for v in points])
    return float(np.max(np.abs(lhs - rhs)))


# --------------------------------------------------------------------------
# pantograph equation  Phi'(x) = -Phi(x/alpha)^2 / alpha^2,  Phi(0) = 1


def alpha_critical() -> float:
    """e^(1/c) with c = 2 z_c^+, the largest alpha of the family."""
    return math.exp(1.0 / (2.0 * critical_points()[1]))


def pantograph_coefficients(alpha: float, order: int = 200) -> np.ndarray:
    """Taylor coefficients a_0..a_order of the entire solution with a_0 = 1."""
    if not alpha > 1.0:
        raise DomainError(f"alpha must exceed 1, got {alpha}")
    if order < 0 or order > 200:
        raise DomainError("order must lie in [0, 200]")
    a = np.zeros(order + 1)
    a[0] = 1.0
    for k in range(order):
        conv = math.fsum(a[: k + 1] * a[k::-1])
        a[k + 1] = -conv * alpha ** -(k + 2) / (k + 1)
    return a


@dataclass(frozen=True)
class PantographSeries:
    alpha: float
    coefficients: np.ndarray
    tol: float = 1e-14

    def reliable(self, x: float) -> bool:
        """Last retained term below tol and no catastrophic cancellation."""
        ax = abs(x)
        with np.errstate(over="ignore", invalid="ignore"):
            terms = np.abs(self.coefficients) * ax ** np.arange(self.coefficients.size)
        return bool(terms[-1] < self.tol and terms.sum() * 1e-16 < self.tol)

    def radius(self) -> float:
        lo, hi = 0.0, 1.0
        while self.reliable(hi) and hi < 1e6:
            lo, hi = hi, 2.0 * hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if self.reliable(mid) else (lo, mid)
        return lo

    def __call__(self, x, strict: bool = True):
        x = np.asarray(x, dtype=float)
        if strict and not all(self.reliable(v) for v in np.atleast_1d(x).ravel()):
            raise TruncationError(f"series evaluation beyond its reliable radius {self.radius():.4g}")
        out = np.zeros_like(x)
        for c in self.coefficients[::-1]:
            out = out * x + c
        return out


def solve_phi_series(alpha: float, order: int = 200) -> PantographSeries:
    return PantographSeries(alpha, pantograph_coefficients(alpha, order))


class PantographSolution:
    """Phi on [0, x_max] from the series near zero and exact stepping beyond.

    On [X, alpha X] the equation integrates to
    Phi(x) = Phi(X) - alpha^-2 int_X^x Phi(s/alpha)^2 ds, where s/alpha lies in
    the already known range; each piece is a Chebyshev interpolant.
    """

    def __init__(self, alpha: float, x_max: float = 1e6, degree: int = 40, order: int = 200):
        self.alpha = alpha
        self.series = solve_phi_series(alpha, order)
        self.start = min(self.series.radius(), 4.0)
        self.pieces: list[tuple[float, float, np.polynomial.Chebyshev]] = []
        cheb = np.polynomial.Chebyshev
        b = self.start
        self._add(0.0, b, cheb.interpolate(lambda t: self.series(t, strict=False), degree, domain=[0.0, b]))
        while b < x_max:
            a, b = b, min(b * alpha, x_max)
            left = float(self(a))
            integrand = cheb.interpolate(lambda t: self(t / alpha) ** 2, degree, domain=[a, b])
            self._add(a, b, left - integrand.integ(lbnd=a) / alpha**2)

    def _add(self, a, b, poly):
        self.pieces.append((a, b, poly))
        self.x_max = b
        self._edges = np.array([p[1] for p in self.pieces])

    def __call__(self, x, extrapolate: bool = False):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        if np.any(x < 0):
            raise DomainError("Phi is evaluated on x >= 0")
        out = np.empty_like(x)
        far = x > self.x_max
        if far.any():
            if not extrapolate:
                raise ExtrapolationError(f"argument beyond x_max={self.x_max}")
            out[far] = self._tail(x[far])
        idx = np.searchsorted(self._edges, x[~far], side="left")
        vals = np.empty(idx.size)
        xs = x[~far]
        for k in np.unique(idx):
            sel = idx == k
            vals[sel] = self.pieces[min(k, len(self.pieces) - 1)][2](xs[sel])
        out[~far] = vals
        return out[0] if scalar else out

    def _tail(self, x: np.ndarray) -> np.ndarray:
        if self.alpha <= alpha_critical() * (1 + 1e-12):
            return 1.0 / x  # x Phi(x) -> 1 inside the family
        # outside it no asymptote is known; only a negligible remainder may be dropped
        edge = abs(float(self.pieces[-1][2](self.x_max)))
        if edge > 1e-12:
            raise ExtrapolationError(f"no tail model for alpha={self.alpha} with Phi(x_max)={edge:.3g}; raise x_max")
        return np.zeros_like(x)

    def as_solution(self, grid: np.ndarray | None = None) -> LaplaceSolution:
        grid = np.geomspace(1e-6, self.x_max, 400) if grid is None else grid
        # beyond x_max: the asymptote x Phi(x) = 1 inside the family, zero when Phi has died out
        f = lambda x: self(x, extrapolate=True)
        return LaplaceSolution(grid, self(grid), self.alpha, "Phi", Normalization.ENTIRE_SERIES, func=f)


def z_from_alpha(alpha: float) -> float:
    """The z in (1, z_c^+] with z^(1/(2z-1)) = alpha, for 1 < alpha <= alpha_c."""
    ac = alpha_critical()
    zc = critical_points()[1]
    if not 1.0 < alpha <= ac * (1 + 1e-12):
        raise DomainError(f"alpha must lie in (1, {ac}]")
    if alpha >= ac:
        return zc
    return brentq(lambda z: math.log(z) / (2 * z - 1) - math.log(alpha), 1.0 + 1e-12, zc, xtol=1e-15)


def measure_tail_constant(sol: PantographSolution, window: tuple[float, float] = (1e-10, 1e-4)) -> dict:
    """Measure K in 1 - x Phi(x) ~ K x^(1-2z) (times log x at alpha_c) as x -> infinity.

    Uses the points where 1 - x Phi(x) lies inside ``window``: large enough to
    keep its digits, small enough to be asymptotic. At alpha_c the ratio
    approaches K like 1/log x, so K is the slope of a straight-line fit in log x.
    """
    z = z_from_alpha(sol.alpha)
    critical = abs(sol.alpha - alpha_critical()) < 1e-12
    x = np.geomspace(1.0, sol.x_max, 400)
    gap = 1.0 - x * sol(x)
    sel = (gap > window[0]) & (gap < window[1])
    x, gap = x[sel], gap[sel]
    ratio = gap / x ** (1.0 - 2.0 * z)
    if critical:
        slope, intercept = np.polyfit(np.log(x), ratio, 1)
        return {"z": z, "critical": True, "K": float(slope), "offset": float(intercept), "points": int(x.size)}
    return {"z": z, "critical": False, "K": float(ratio[-1]), "spread": float(np.ptp(ratio[-20:])),
            "points": int(x.size)}


def j_from_pantograph(sol: PantographSolution, tail_constant: float, critical: bool) -> Callable:
    """j(z, x) = y Phi(y) with y = kappa x^(1/(1-2z)), kappa pinned by the slope condition."""
    z = z_from_alpha(sol.alpha)
    kappa = (tail_constant / 2.0 if critical else tail_constant) ** (1.0 / (2.0 * z - 1.0))

    def j(x):
        x = np.asarray(x, dtype=float)
        y = kappa * x ** (1.0 / (1.0 - 2.0 * z))
        return y * sol(y, extrapolate=True)

    return j


# --------------------------------------------------------------------------
# Laplace connection and the convolution equation


def laplace_connection(j_bst: Callable, z: float | ParamZ, x, nodes: int = 64):
    """int_0^inf j_bst(x eta^(2z-1) / Gamma(2z)) e^(-eta) d eta by Gauss-Laguerre."""
    z = float(z)
    eta, w = np.polynomial.laguerre.laggauss(nodes)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    args = np.outer(x, eta ** (2.0 * z - 1.0) / math.gamma(2.0 * z))
    vals = np.asarray(j_bst(args.ravel()), dtype=float).reshape(args.shape)
    out = vals @ w
    return out[0] if scalar else out


def psi_from_j_bst(j_bst: Callable, z: float, kappa: float = 1.0) -> Callable:
    """psi(u) = j_bst(z, (kappa u)^(2z-1) / Gamma(2z))."""
    def psi(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = j_bst((kappa * u[pos]) ** (2.0 * z - 1.0) / math.gamma(2.0 * z))
        return out
    return psi


def check_psi_convolution(psi: Callable | LaplaceSolution, alpha: float, y_max: float = 2.0,
                          points: int = 2001) -> float:
    """sup |y psi(y/alpha) - int_0^y psi(w) psi(y-w) dw| on a uniform grid, trapezoidal rule."""
    y = np.linspace(0.0, y_max, points)
    v = np.asarray(psi(y), dtype=float)
    lhs = y * np.asarray(psi(y / alpha), dtype=float)
    step = y[1] - y[0]
    full = np.convolve(v, v)[: y.size] * step
    # trapezoid: drop half of each endpoint product
    rhs = full - 0.5 * step * (v[0] * v + v * v[0])
    rhs[0] = 0.0
    return float(np.max(np.abs(lhs - rhs)))


# --------------------------------------------------------------------------
# Mellin transforms


def mellin_gamma(a: float, s: float) -> float:
    """E gamma_a^s = Gamma(s + a) / Gamma(a)."""
    if not s > -a:
        raise DomainError(f"need s > -a (s={s}, a={a})")
    return math.exp(math.lgamma(s + a) - math.lgamma(a))


def mellin_beta(a: float, b: float, s: float) -> float:
    """E beta_{a,b}^s = Gamma(a + s) Gamma(a + b) / (Gamma(a) Gamma(a + b + s))."""
    if not s > -a:
        raise DomainError(f"need s > -a (s={s}, a={a})")
    return math.exp(math.lgamma(a + s) + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(a + b + s))


def mellin(dist: tuple, s: float) -> float:
    """``dist`` is ("gamma", a) or ("beta", a, b)."""
    kind, *params = dist
    if kind == "gamma":
        return mellin_gamma(*params, s)
    if kind == "beta":
        return mellin_beta(*params, s)
    raise ValueError(f"unknown distribution {kind!r}")


def duplication_gap(y: float) -> float:
    """Relative gap in Gamma(2y) = (2 pi)^(-1/2) 2^(2y - 1/2) Gamma(y) Gamma(y + 1/2)."""
    lhs = math.lgamma(2 * y)
    rhs = -0.5 * math.log(2 * math.pi) + (2 * y - 0.5) * math.log(2) + math.lgamma(y) + math.lgamma(y + 0.5)
    return abs(math.expm1(lhs - rhs))


def quarter_moment_chain(s: float) -> tuple[float, float]:
    """Both sides of the s-th moment identity for the z = 1/4 BST limit.

    Left: 2^(2s) Gamma(2s + 3/2) / (Gamma(3/2) pi^s Gamma(s + 1)).
    Right: (16/pi)^s E beta_{3/4,1/4}^s E gamma_{5/4}^s.
    """
    left = math.exp(2 * s * math.log(2) + math.lgamma(2 * s + 1.5) - math.lgamma(1.5)
                    - s * math.log(math.pi) - math.lgamma(s + 1))
    right = (16.0 / math.pi) ** s * mellin_beta(0.75, 0.25, s) * mellin_gamma(1.25, s)
    return left, right
