"""Picard iteration for the dampened regime-switching value ``H = v / D``.

``H`` is the unique bounded solution of ``H = H0 + T(H)`` where ``H0`` is the
no-switch value and

    T(h)(t, x, i) = D(t, x)^{-1} sum_{j != i} q_ij int_t^T e^{-(q_i + r_i)(u - t)}
                    E[D(u, X_u^{(i)}) h(u, X_u^{(i)}, j) | X_t = x] du.

``T`` has sup-norm Lipschitz constant at most ``rho = max_i (1 - e^{-q_i T})``,
so ``H_{n+1} = T(H_n) + H0`` converges geometrically from ``H0``.

On a grid, ``T`` is linear in the node values of ``h`` (bilinear interpolation),
so it is assembled once as dense blocks: one ``nx x (nt - k) nx`` matrix per
regime and output time index ``k``. Each Picard step is then a set of
matrix-vector products.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from ._parallel import ordered_map
from .analytics import SQRT2, _moments, h0_term
from .errors import GridClampWarning, MaxIterExceeded, QuadratureOverflow, RhoNotContractive
from .grid import GridFunction, GridSpec, interp_weights, sup_norm
from .model import DampeningSpec, GeneratorMatrix, PayoffSpec, PricingQuery, RegimeOUModel

logger = logging.getLogger(__name__)

GH_NODES = 64
GL_NODES = 8
OVERFLOW_LIMIT = 1e300
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200


def contraction_factor(generator: GeneratorMatrix, horizon: float) -> float:
    """``max_i (1 - e^{-q_i T})``, the worst case over start times."""
    q = generator.holding_rates
    return float(np.max(-np.expm1(-q * horizon))) if q.size else 0.0


def build_h0(model: RegimeOUModel, payoff: PayoffSpec, dampening: DampeningSpec, spec: GridSpec) -> GridFunction:
    values = np.empty(spec.shape)
    for k, t in enumerate(spec.times):
        for i in range(spec.regimes):
            values[k, :, i] = h0_term(model, payoff, dampening, float(t), spec.xs, i)
    return GridFunction(spec, values)


class TransitionOperator:
    """Quadrature discretisation of ``T`` on a fixed grid.

    Inner expectations use ``gh_nodes``-point Gauss-Hermite on the frozen-regime
    Gaussian transition; the time integral uses ``gl_nodes``-point
    Gauss-Legendre on each time-grid subinterval of ``[t, T]``.
    """

    def __init__(
        self,
        model: RegimeOUModel,
        dampening: DampeningSpec,
        spec: GridSpec,
        gh_nodes: int = GH_NODES,
        gl_nodes: int = GL_NODES,
        workers: int | None = None,
    ):
        if spec.regimes != model.n_regimes:
            raise ValueError("grid regimes do not match model")
        if abs(spec.horizon - model.horizon) > 1e-12 * model.horizon:
            raise ValueError("grid must end at the model horizon")
        self.model = model
        self.dampening = dampening
        self.spec = spec
        self.workers = workers
        self.coupling = model.generator.off_diagonal()
        z, wz = hermgauss(gh_nodes)
        self._gh = (z, wz / math.sqrt(math.pi))
        self._gl = leggauss(gl_nodes)
        nt = spec.times.size
        jobs = [(i, k) for i in range(spec.regimes) if self.coupling[i].any() for k in range(nt - 1)]
        built = ordered_map(lambda ik: self._block(*ik), jobs, workers)
        self.blocks = dict(zip(jobs, built))

    def _block(self, i: int, k: int) -> np.ndarray:
        model, damp, spec = self.model, self.dampening, self.spec
        times, xs = spec.times, spec.xs
        nt, nx = times.size, xs.size
        z, wz = self._gh
        xi, wxi = self._gl
        kill = model.holding_rates[i] + model.r[i]
        t = times[k]
        log_d_out = damp.log_value(t, xs)
        block = np.zeros((nx, (nt - k) * nx))
        rows = np.broadcast_to(np.arange(nx)[None, :, None], (xi.size, nx, z.size))
        for l in range(k, nt - 1):
            dt = times[l + 1] - times[l]
            u = times[l] + 0.5 * dt * (1.0 + xi)
            s = u - t
            alpha = (times[l + 1] - u) / dt
            decay, m, nu2 = _moments(model, s, i)
            mean = xs[None, :] * decay[:, None] + m[:, None]
            y = mean[:, :, None] + (SQRT2 * np.sqrt(nu2))[:, None, None] * z
            log_ratio = damp.log_value(u[:, None, None], y) - log_d_out[None, :, None]
            if np.max(log_ratio) > 690.0:
                raise QuadratureOverflow(
                    "QuadratureOverflow: D(u, y) h(u, y) leaves the floating range; "
                    "shrink the spatial grid"
                )
            f = (0.5 * dt * wxi * np.exp(-kill * s))[:, None, None] * wz * np.exp(log_ratio)
            ix, lam = interp_weights(xs, y)
            # columns relative to slice l; slice l+1 sits nx further along
            w_left, w_right = f * (1.0 - lam), f * lam
            a = alpha[:, None, None]
            flat_rows = rows.ravel() * (2 * nx)
            cols = ix.ravel()
            wl, wr, av = w_left.ravel(), w_right.ravel(), np.broadcast_to(a, f.shape).ravel()
            idx = np.concatenate([flat_rows + cols, flat_rows + cols + 1,
                                  flat_rows + cols + nx, flat_rows + cols + 1 + nx])
            wts = np.concatenate([wl * av, wr * av, wl * (1.0 - av), wr * (1.0 - av)])
            acc = np.bincount(idx, weights=wts, minlength=nx * 2 * nx).reshape(nx, 2 * nx)
            off = (l - k) * nx
            block[:, off:off + 2 * nx] += acc
        return block

    def apply(self, h: GridFunction) -> GridFunction:
        spec = self.spec
        if h.spec.shape != spec.shape:
            raise ValueError("grid function does not live on this operator's grid")
        nt, nx, m = spec.shape
        vals = h.values
        out = np.zeros(spec.shape)
        mixed = {i: np.einsum("tkj,j->tk", vals, self.coupling[i]) for i in range(m) if self.coupling[i].any()}

        def run(ik):
            i, k = ik
            return self.blocks[ik] @ mixed[i][k:].ravel()

        jobs = list(self.blocks)
        for (i, k), col in zip(jobs, ordered_map(run, jobs, self.workers)):
            out[k, :, i] = col
        return GridFunction(spec, out)

    def max_dampening(self) -> float:
        spec = self.spec
        tt, xx = np.meshgrid(spec.times, spec.xs, indexing="ij")
        return float(np.max(np.abs(self.dampening.evaluate(tt, xx))))


def apply_T(model: RegimeOUModel, dampening: DampeningSpec, h: GridFunction, **kw) -> GridFunction:
    """One application of ``T``; assembles the operator each call."""
    return TransitionOperator(model, dampening, h.spec, **kw).apply(h)


@dataclass
class PicardReport:
    rho: float
    deltas: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    converged: bool = False
    tol: float = DEFAULT_TOL
    iterates: list[GridFunction] | None = None

    @property
    def iterations(self) -> int:
        return len(self.deltas)

    @property
    def h1_minus_h0(self) -> float:
        return self.deltas[0] if self.deltas else 0.0

    @property
    def a_priori(self) -> float:
        return error_bounds(self, self.iterations)[0]

    @property
    def a_posteriori(self) -> float:
        return error_bounds(self, self.iterations)[1]

    def trace_rows(self):
        for n in range(1, self.iterations + 1):
            pri, post = error_bounds(self, n)
            yield n, self.deltas[n - 1], pri, post, self.seconds[n - 1]

    def write_csv(self, fh, timings: bool = True) -> None:
        """Trace rows; ``timings=False`` zeroes the wall-clock column for reproducible files."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "delta_sup_norm", "a_priori_bound", "a_posteriori_bound", "seconds"])
        for n, d, pri, post, sec in self.trace_rows():
            w.writerow([n, repr(d), repr(pri), repr(post), f"{sec if timings else 0.0:.6f}"])


def error_bounds(report: PicardReport, n: int) -> tuple[float, float]:
    """A-priori ``rho^n/(1-rho) ||H1 - H0||`` and a-posteriori ``rho/(1-rho) ||Hn - H(n-1)||``."""
    rho = report.rho
    if not 0.0 <= rho < 1.0:
        raise RhoNotContractive(f"RhoNotContractive: rho = {rho}")
    if n < 1 or n > report.iterations:
        raise ValueError(f"n must be in 1..{report.iterations}, got {n}")
    if rho == 0.0:
        return 0.0, 0.0
    c = 1.0 / (1.0 - rho)
    return rho**n * c * report.deltas[0], rho * c * report.deltas[n - 1]


def picard_solve(
    model: RegimeOUModel,
    payoff: PayoffSpec,
    dampening: DampeningSpec,
    spec: GridSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    operator: TransitionOperator | None = None,
    keep_iterates: bool = False,
    strict: bool = False,
    workers: int | None = None,
) -> tuple[GridFunction, PicardReport]:
    """Iterate ``H_{n+1} = T(H_n) + H0`` from ``H0``.

    Stops once the a-posteriori bound drops to ``tol`` or after ``max_iter``
    steps. A run that hits ``max_iter`` returns with ``converged=False``, or
    raises :class:`MaxIterExceeded` when ``strict`` is set.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    d_max = _dampening_scan(dampening, spec)
    if not d_max <= OVERFLOW_LIMIT:
        raise QuadratureOverflow(f"QuadratureOverflow: max |D| = {d_max:.3e} on the grid; reduce xmax")
    h0 = build_h0(model, payoff, dampening, spec)
    rho = contraction_factor(model.generator, model.horizon)
    report = PicardReport(rho=rho, tol=tol, iterates=[h0] if keep_iterates else None)

    if not model.generator.has_switching():
        report.deltas.append(0.0)
        report.seconds.append(0.0)
        report.converged = True
        if keep_iterates:
            report.iterates.append(h0)
        return h0, report

    if operator is None:
        guard = d_max * (1.0 + sup_norm(h0))
        if not guard <= OVERFLOW_LIMIT:
            raise QuadratureOverflow(
                f"QuadratureOverflow: max |D| (1 + ||H0||) = {guard:.3e} on the grid; "
                "reduce xmax"
            )
        t0 = time.perf_counter()
        operator = TransitionOperator(model, dampening, spec, workers=workers)
        logger.info("assembled transition operator in %.2fs", time.perf_counter() - t0)

    h = h0
    for n in range(1, max_iter + 1):
        t0 = time.perf_counter()
        nxt = GridFunction(spec, operator.apply(h).values + h0.values)
        delta = sup_norm(nxt - h)
        report.seconds.append(time.perf_counter() - t0)
        report.deltas.append(delta)
        if keep_iterates:
            report.iterates.append(nxt)
        h = nxt
        post = rho / (1.0 - rho) * delta
        logger.debug("picard n=%d delta=%.3e bound=%.3e", n, delta, post)
        if post <= tol:
            report.converged = True
            break
    if not report.converged:
        msg = f"MaxIterExceeded: a-posteriori bound {report.a_posteriori:.3e} > tol {tol:.1e} after {max_iter} iterations"
        if strict:
            raise MaxIterExceeded(msg, solution=h, report=report)
        logger.warning(msg)
    return h, report


def _dampening_scan(dampening: DampeningSpec, spec: GridSpec) -> float:
    tt, xx = np.meshgrid(spec.times, spec.xs, indexing="ij")
    with np.errstate(over="ignore"):
        return float(np.max(np.abs(dampening.evaluate(tt, xx))))


def price(solution: GridFunction, dampening: DampeningSpec, query: PricingQuery) -> float:
    """``v(t, x, i) = D(t, x) H(t, x, i)`` with ``H`` interpolated from the grid."""
    spec = solution.spec
    x = query.x
    if x < spec.xs[0] or x > spec.xs[-1]:
        warnings.warn(f"x = {x} outside grid [{spec.xs[0]}, {spec.xs[-1]}]; clamped", GridClampWarning, stacklevel=2)
    if query.t < 0.0 or query.t > spec.horizon:
        warnings.warn(f"t = {query.t} outside [0, {spec.horizon}]; clamped", GridClampWarning, stacklevel=2)
    h = solution.evaluate(query.t, x, query.regime)
    return float(dampening.evaluate(query.t, x) * h)
