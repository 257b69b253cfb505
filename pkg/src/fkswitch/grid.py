"""Tensor grids (time x log-price x regime) and grid functions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, RegimeOutOfRange
from .model import RegimeOUModel

DEFAULT_NT = 41
DEFAULT_NX = 201
DEFAULT_WIDTH = 8.0


def _strictly_increasing(a: np.ndarray) -> bool:
    return a.ndim == 1 and bool(np.all(np.diff(a) > 0))


@dataclass(frozen=True)
class GridSpec:
    times: np.ndarray
    xs: np.ndarray
    regimes: int

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        xs = np.array(self.xs, dtype=float)
        if times.size < 2 or not _strictly_increasing(times) or times[0] != 0.0:
            raise ModelError("time nodes must be strictly increasing, start at 0, count >= 2")
        if xs.size < 3 or not _strictly_increasing(xs):
            raise ModelError("space nodes must be strictly increasing, count >= 3")
        if self.regimes < 1:
            raise ModelError("need at least one regime")
        times.setflags(write=False)
        xs.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "xs", xs)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.times.size, self.xs.size, self.regimes)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @classmethod
    def default(
        cls,
        model: RegimeOUModel,
        x0: float = 0.0,
        nt: int = DEFAULT_NT,
        nx: int = DEFAULT_NX,
        t_query: float | None = None,
        xmin: float | None = None,
        xmax: float | None = None,
        width: float = DEFAULT_WIDTH,
        focus: float | None = None,
        stretch: float | None = None,
    ) -> "GridSpec":
        """Grid centred on ``x0`` spanning ``width`` stationary deviations.

        Space nodes are uniform unless ``focus`` is given, in which case they
        follow ``focus + stretch * sinh(u)`` for uniform ``u`` (dense near
        ``focus``; ``stretch`` defaults to ``0.75`` stationary deviations).
        The node nearest ``x0`` is moved onto ``x0`` and ``t_query`` is
        inserted as a time node, so the query itself needs no interpolation.
        """
        T = model.horizon
        sd = model.stationary_sd()
        half = width * sd
        lo = x0 - half if xmin is None else xmin
        hi = x0 + half if xmax is None else xmax
        times = np.linspace(0.0, T, nt)
        if t_query is not None and 0.0 < t_query < T:
            k = int(np.argmin(np.abs(times - t_query)))
            if abs(times[k] - t_query) > 1e-12 * T:
                times = np.sort(np.append(times, t_query))
            elif 0 < k < nt - 1:
                times[k] = t_query
        if focus is None:
            xs = np.linspace(lo, hi, nx)
        else:
            a = 0.75 * sd if stretch is None else stretch
            u = np.linspace(np.arcsinh((lo - focus) / a), np.arcsinh((hi - focus) / a), nx)
            xs = focus + a * np.sinh(u)
            xs[0], xs[-1] = lo, hi
        if lo < x0 < hi:
            xs[np.argmin(np.abs(xs - x0))] = x0
        return cls(times, xs, model.n_regimes)


def interp_weights(nodes: np.ndarray, pts):
    """Left cell index and right-node weight for linear interpolation.

    Points beyond the ends are clamped: all weight goes to the edge node.
    """
    pts = np.asarray(pts, dtype=float)
    n = nodes.size
    idx = np.clip(np.searchsorted(nodes, pts, side="right") - 1, 0, n - 2)
    left = nodes[idx]
    lam = np.clip((pts - left) / (nodes[idx + 1] - left), 0.0, 1.0)
    return idx, lam


@dataclass(frozen=True)
class GridFunction:
    """Values of ``h(t, x, i)`` on a :class:`GridSpec`, bilinear in ``(t, x)``."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.spec.shape:
            raise ModelError(f"values shape {v.shape} does not match grid {self.spec.shape}")
        if not np.all(np.isfinite(v)):
            raise ModelError("grid function has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def evaluate(self, t: float, x, i: int):
        if not 0 <= i < self.spec.regimes:
            raise RegimeOutOfRange(f"regime {i} not in 0..{self.spec.regimes - 1}")
        times, xs = self.spec.times, self.spec.xs
        k, a = interp_weights(times, float(t))
        k, a = int(k), float(a)
        ix, lam = interp_weights(xs, x)
        vals = self.values[:, :, i]

        def at(row):
            return (1.0 - lam) * row[ix] + lam * row[ix + 1]

        out = at(vals[k]) if a == 0.0 else (1.0 - a) * at(vals[k]) + a * at(vals[k + 1])
        return out if np.ndim(out) else float(out)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.spec, self.values - other.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.spec, self.values + other.values)

    def scale(self, a: float) -> "GridFunction":
        return GridFunction(self.spec, a * self.values)

    @classmethod
    def constant(cls, spec: GridSpec, c: float) -> "GridFunction":
        return cls(spec, np.full(spec.shape, float(c)))


def sup_norm(h: GridFunction) -> float:
    """Max of ``|h|`` over all grid nodes."""
    return float(np.max(np.abs(h.values)))


def write_surface_csv(fh, h: GridFunction, dampening) -> None:
    """Solution surface rows ``t, x, regime, H, D, v`` (regime 1-based)."""
    spec = h.spec
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x", "regime", "H", "D", "v"])
    for k, t in enumerate(spec.times):
        d = dampening.evaluate(t, spec.xs)
        for a, x in enumerate(spec.xs):
            for i in range(spec.regimes):
                hv = h.values[k, a, i]
                w.writerow([repr(float(t)), repr(float(x)), i + 1, repr(float(hv)),
                            repr(float(d[a])), repr(float(hv * d[a]))])
