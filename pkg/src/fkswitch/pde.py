"""Finite-difference oracle for the coupled backward equation.

Each regime slice solves

    v_t + beta (theta_i - x) v_x + sigma_i^2/2 v_xx - (r_i + q_i) v + sum_{j != i} q_ij v_j = 0

backward from ``v(T) = phi``. Space is discretised with central differences,
time with Crank-Nicolson (two fully implicit start-up steps damp the payoff
kink). The regime coupling is taken explicitly from the known time level, so
each step is ``m`` independent tridiagonal solves. At the grid ends the
second derivative is dropped and the drift term is differenced one-sidedly
towards the interior.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridTooCoarse, OutOfRange, UnstableParameters
from .grid import interp_weights
from .model import PayoffSpec, PricingQuery, RegimeOUModel

BLOWUP = 1e12
MAX_COUPLING_STEP = 0.1
RANNACHER_STEPS = 2


@dataclass(frozen=True)
class PdeGrid:
    """Stored time levels (ascending) of ``v(t, x, i)`` on a uniform lattice."""

    times: np.ndarray
    xs: np.ndarray
    values: np.ndarray  # (n_times, n_x, m)
    dt: float
    dx: float


def _operator_bands(model: RegimeOUModel, xs: np.ndarray, dx: float, i: int) -> np.ndarray:
    """Bands ``(upper, diag, lower)`` of the spatial operator for regime ``i``."""
    n = xs.size
    b = model.beta * (model.theta[i] - xs)
    diff = 0.5 * model.sigma[i] ** 2 / dx**2
    kill = model.r[i] + model.holding_rates[i]
    upper = diff + b / (2.0 * dx)
    lower = diff - b / (2.0 * dx)
    diag = np.full(n, -2.0 * diff - kill)
    upper[0], diag[0] = b[0] / dx, -b[0] / dx - kill
    lower[-1], diag[-1] = -b[-1] / dx, b[-1] / dx - kill
    bands = np.zeros((3, n))
    bands[0, 1:] = upper[:-1]
    bands[1] = diag
    bands[2, :-1] = lower[1:]
    return bands


def _apply_bands(bands: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = bands[1] * v
    out[:-1] += bands[0, 1:] * v[1:]
    out[1:] += bands[2, :-1] * v[:-1]
    return out


def pde_solve(
    model: RegimeOUModel,
    payoff: PayoffSpec,
    xmin: float,
    xmax: float,
    dt: float = 1e-3,
    dx: float = 5e-3,
    t_start: float = 0.0,
    store_every: int = 1,
) -> PdeGrid:
    """March from ``T`` back to ``t_start``; ``dt`` and ``dx`` are rounded to fit the ranges."""
    T = model.horizon
    if not xmax > xmin:
        raise GridTooCoarse("GridTooCoarse: need xmax > xmin")
    nx = int(round((xmax - xmin) / dx)) + 1
    nsteps = max(1, int(math.ceil((T - t_start) / dt - 1e-9)))
    if nx < 5:
        raise GridTooCoarse(f"GridTooCoarse: only {nx} space nodes")
    xs = np.linspace(xmin, xmax, nx)
    dx = xs[1] - xs[0]
    dt = (T - t_start) / nsteps
    q = model.holding_rates
    if np.max(q) * dt > MAX_COUPLING_STEP:
        raise GridTooCoarse(f"GridTooCoarse: max q_i dt = {np.max(q) * dt:.3g} > {MAX_COUPLING_STEP}")

    m = model.n_regimes
    coupling = model.generator.off_diagonal()
    bands = [_operator_bands(model, xs, dx, i) for i in range(m)]
    eye = np.zeros((3, nx))
    eye[1] = 1.0

    v = np.stack([payoff.evaluate(xs, i) for i in range(m)], axis=1)
    stored_t, stored_v = [T], [v.copy()]
    for n in range(1, nsteps + 1):
        theta = 1.0 if n <= RANNACHER_STEPS else 0.5
        source = v @ coupling.T
        new = np.empty_like(v)
        for i in range(m):
            rhs = v[:, i] + (1.0 - theta) * dt * _apply_bands(bands[i], v[:, i]) + dt * source[:, i]
            new[:, i] = solve_banded((1, 1), eye - theta * dt * bands[i], rhs)
        v = new
        if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > BLOWUP:
            raise UnstableParameters(f"UnstableParameters: values exceeded {BLOWUP:g} at step {n}")
        if n % store_every == 0 or n == nsteps:
            stored_t.append(T - n * dt)
            stored_v.append(v.copy())
    stored_t[-1] = t_start
    times = np.array(stored_t[::-1])
    values = np.stack(stored_v[::-1])
    return PdeGrid(times, xs, values, dt, dx)


def pde_price(grid: PdeGrid, query: PricingQuery) -> float:
    """Bilinear interpolation of the stored surface."""
    t, x = query.t, query.x
    tol = 1e-12 * max(1.0, abs(grid.times[-1]))
    if not (grid.times[0] - tol <= t <= grid.times[-1] + tol) or not (grid.xs[0] <= x <= grid.xs[-1]):
        raise OutOfRange(f"OutOfRange: query ({t}, {x}) outside the PDE grid")
    if not 0 <= query.regime < grid.values.shape[2]:
        raise OutOfRange(f"OutOfRange: regime {query.regime}")
    k, a = interp_weights(grid.times, min(max(t, grid.times[0]), grid.times[-1]))
    ix, lam = interp_weights(grid.xs, x)
    k, a, ix, lam = int(k), float(a), int(ix), float(lam)
    sl = grid.values[:, :, query.regime]

    def at(row):
        return (1.0 - lam) * row[ix] + lam * row[ix + 1]

    return float(at(sl[k]) if a == 0.0 else (1.0 - a) * at(sl[k]) + a * at(sl[k + 1]))


def write_pde_csv(fh, grid: PdeGrid) -> None:
    """Surface rows ``t, x, regime, v`` (regime 1-based)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x", "regime", "v"])
    for k, t in enumerate(grid.times):
        for a, x in enumerate(grid.xs):
            for i in range(grid.values.shape[2]):
                w.writerow([repr(float(t)), repr(float(x)), i + 1, repr(float(grid.values[k, a, i]))])
