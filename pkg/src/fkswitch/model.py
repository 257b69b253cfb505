"""Model inputs: regime generator, OU parameters, payoff, dampening, queries.

All types are frozen; numpy arrays they hold are marked read-only.
Regime indices are 0-based throughout the Python API.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BetaOutOfRange,
    ModelWarning,
    NegativeOffDiagonal,
    NegativeRate,
    NonPositiveSigma,
    NonSquare,
    RegimeOutOfRange,
    RelationViolated,
    RowSumNonZero,
    StrikeNonPositive,
    ModelError,
)

ROW_SUM_TOL = 1e-12
RELATION_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GeneratorMatrix:
    """Generator ``Q`` of a finite-state continuous-time Markov chain."""

    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(self.rates))

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    @property
    def holding_rates(self) -> np.ndarray:
        """Total exit rate ``q_i = -q_ii`` of each regime."""
        return -np.diag(self.rates)

    def off_diagonal(self) -> np.ndarray:
        out = np.array(self.rates)
        np.fill_diagonal(out, 0.0)
        return out

    def has_switching(self) -> bool:
        return bool(np.any(self.off_diagonal() > 0.0))


def validate_generator(rates, tol: float = ROW_SUM_TOL) -> GeneratorMatrix:
    q = np.asarray(rates, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
        raise NonSquare(f"generator must be a non-empty square matrix, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ModelError("generator contains non-finite entries")
    m = q.shape[0]
    off = ~np.eye(m, dtype=bool)
    if np.any(q[off] < 0.0):
        i, j = np.argwhere((q < 0.0) & off)[0]
        raise NegativeOffDiagonal(f"q[{i}][{j}] = {q[i, j]} < 0")
    sums = q.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums) > tol)
    if bad.size:
        i = bad[0]
        raise RowSumNonZero(f"row {i} sums to {sums[i]!r}, expected 0")
    return GeneratorMatrix(q)


@dataclass(frozen=True)
class RegimeOUModel:
    """Regime-switching OU log-price ``dX = beta (theta(a) - X) dt + sigma(a) dW``.

    Construct through :func:`build_model` to get validation; the raw
    constructor only normalises shapes (tests use it for degenerate cases).
    """

    beta: float
    theta: np.ndarray
    sigma: np.ndarray
    r: np.ndarray
    horizon: float
    generator: GeneratorMatrix

    def __post_init__(self):
        for name in ("theta", "sigma", "r"):
            object.__setattr__(self, name, _frozen(np.atleast_1d(getattr(self, name))))
        m = self.generator.size
        for name in ("theta", "sigma", "r"):
            if getattr(self, name).shape != (m,):
                raise ModelError(f"{name} must have one entry per regime ({m})")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_regimes(self) -> int:
        return self.generator.size

    @property
    def holding_rates(self) -> np.ndarray:
        return self.generator.holding_rates

    def stationary_sd(self) -> float:
        """Largest stationary standard deviation ``sigma/sqrt(2 beta)`` over regimes."""
        return float(np.max(self.sigma) / math.sqrt(2.0 * self.beta))

    def relation_residual(self) -> np.ndarray:
        return self.theta - (self.r - self.sigma**2 / (2.0 * self.beta))

    def check_regime(self, i: int) -> int:
        if not (0 <= int(i) < self.n_regimes) or int(i) != i:
            raise RegimeOutOfRange(f"regime {i} not in 0..{self.n_regimes - 1}")
        return int(i)


def build_model(
    beta: float,
    sigma: Sequence[float],
    r: Sequence[float],
    horizon: float,
    generator: GeneratorMatrix,
    theta: Sequence[float] | None = None,
    derive_theta: bool = True,
    verify: bool = True,
    tol: float = RELATION_TOL,
) -> RegimeOUModel:
    """Validate parameters and assemble a :class:`RegimeOUModel`.

    With ``derive_theta`` the long-run mean is set to ``r - sigma**2/(2 beta)``.
    Otherwise ``theta`` is required and, unless ``verify`` is False, checked
    against that relation.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if not (0.0 < beta <= 1.0):
        raise BetaOutOfRange(f"beta = {beta} not in (0, 1]")
    if np.any(~(sigma > 0.0)):
        raise NonPositiveSigma(f"sigma must be positive, got {sigma.tolist()}")
    if np.any(~(r >= 0.0)):
        raise NegativeRate(f"r must be nonnegative, got {r.tolist()}")
    if not horizon > 0.0:
        raise ModelError(f"horizon must be positive, got {horizon}")
    if np.any(r == 0.0):
        warnings.warn(
            "r(i) = 0 in some regime; the OU dampening argument assumes r(i) > 0",
            ModelWarning,
            stacklevel=2,
        )

    implied = r - sigma**2 / (2.0 * beta)
    if derive_theta:
        th = implied
    else:
        if theta is None:
            raise ModelError("theta is required when derive_theta is false")
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.shape != implied.shape:
            raise ModelError("theta must have one entry per regime")
        if verify:
            gap = np.abs(th - implied)
            if np.any(gap > tol):
                i = int(np.argmax(gap))
                raise RelationViolated(
                    f"theta[{i}] = {float(th[i])!r} but r - sigma^2/(2 beta) = {float(implied[i])!r}"
                )
    return RegimeOUModel(beta=beta, theta=th, sigma=sigma, r=r, horizon=horizon, generator=generator)


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal payoff ``phi(x, i)`` on the log-price.

    ``kind`` is one of ``"call"``, ``"constant"`` or ``"custom"``; use the
    classmethod constructors. Custom payoffs are tabulated on ``knots``
    (linear interpolation, flat beyond the ends) with one row of ``values``
    per regime or a single row shared by all regimes.
    """

    kind: str
    strike: float = 0.0
    level: float = 0.0
    knots: np.ndarray | None = None
    values: np.ndarray | None = None
    bound: float = math.inf

    @classmethod
    def call(cls, strike: float) -> "PayoffSpec":
        if not strike > 0.0:
            raise StrikeNonPositive(f"strike must be positive, got {strike}")
        return cls("call", strike=float(strike))

    @classmethod
    def constant(cls, level: float) -> "PayoffSpec":
        return cls("constant", level=float(level), bound=abs(float(level)))

    @classmethod
    def custom(cls, knots, values, bound: float) -> "PayoffSpec":
        k = _frozen(knots)
        v = _frozen(np.atleast_2d(values))
        if k.ndim != 1 or k.size < 2 or np.any(np.diff(k) <= 0):
            raise ModelError("custom payoff knots must be strictly increasing (>= 2 points)")
        if v.shape[1] != k.size:
            raise ModelError("custom payoff values must match knots")
        if not math.isfinite(bound) or np.max(np.abs(v)) > bound:
            raise ModelError(f"custom payoff exceeds its declared bound {bound}")
        return cls("custom", knots=k, values=v, bound=float(bound))

    @property
    def is_bounded(self) -> bool:
        return self.kind != "call"

    def evaluate(self, x, i: int = 0):
        x = np.asarray(x, dtype=float)
        if self.kind == "call":
            return np.maximum(np.exp(x) - self.strike, 0.0)
        if self.kind == "constant":
            return np.full_like(x, self.level)
        if self.values.shape[0] == 1:
            return np.interp(x, self.knots, self.values[0])
        i = np.broadcast_to(np.asarray(i), x.shape)
        out = np.empty(x.shape)
        for reg in np.unique(i):
            sel = i == reg
            out[sel] = np.interp(x[sel], self.knots, self.values[reg])
        return out if out.ndim else float(out)


def payoff_eval(spec: PayoffSpec, x, i: int = 0):
    return spec.evaluate(x, i)


@dataclass(frozen=True)
class DampeningSpec:
    """Nonvanishing factor ``D(t, x)`` with ``v / D`` bounded.

    ``unit`` is ``D = 1``; ``ou_call`` is ``D(t, x) = exp(x exp(-beta (T - t)))``.
    """

    kind: str
    beta: float = 0.0
    horizon: float = 0.0

    @classmethod
    def unit(cls) -> "DampeningSpec":
        return cls("unit")

    @classmethod
    def ou_call(cls, model: RegimeOUModel) -> "DampeningSpec":
        return cls("ou_call", beta=model.beta, horizon=model.horizon)

    def log_value(self, t, x):
        if self.kind == "unit":
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)
        t = np.asarray(t, dtype=float)
        return np.asarray(x, dtype=float) * np.exp(-self.beta * (self.horizon - t))

    def evaluate(self, t, x):
        return np.exp(self.log_value(t, x))


@dataclass(frozen=True)
class PricingQuery:
    """Evaluation point ``(t, x, regime)``; ``regime`` is 0-based."""

    t: float
    x: float
    regime: int = 0

    def check(self, model: RegimeOUModel) -> "PricingQuery":
        if not (0.0 <= self.t <= model.horizon):
            raise ModelError(f"query time {self.t} outside [0, {model.horizon}]")
        model.check_regime(self.regime)
        return self


def warn_if_uncertified(payoff: PayoffSpec, dampening: DampeningSpec) -> None:
    if dampening.kind == "unit" and not payoff.is_bounded:
        warnings.warn(
            "unit dampening with an unbounded payoff: v/D is not certifiably bounded",
            ModelWarning,
            stacklevel=2,
        )
