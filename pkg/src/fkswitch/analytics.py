"""Closed-form analytics for the OU process with the regime frozen.

With the regime held at ``i`` the log-price started from ``x`` at time ``t``
is Gaussian at ``u > t``:

    X_u ~ N(x e^{-beta s} + m(s, i), nu2(s, i)),   s = u - t,
    m(s, i)   = theta_i (1 - e^{-beta s}),
    nu2(s, i) = sigma_i^2 / (2 beta) (1 - e^{-2 beta s}).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import erfc

from .errors import (
    CertificateFailed,
    NegativeElapsed,
    NonPositiveElapsed,
    StrikeNonPositive,
    TimeOrderViolation,
)
from .model import DampeningSpec, PayoffSpec, RegimeOUModel

TERMINAL_EPS = 1e-12
GH_NODES = 64
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TransitionMoments:
    mean_shift: float
    variance: float
    decay: float


def _moments(model: RegimeOUModel, s, i: int):
    """Vectorised ``(decay, m, nu2)`` for elapsed times ``s``."""
    s = np.asarray(s, dtype=float)
    b = model.beta
    decay = np.exp(-b * s)
    m = model.theta[i] * -np.expm1(-b * s)
    nu2 = model.sigma[i] ** 2 / (2.0 * b) * -np.expm1(-2.0 * b * s)
    return decay, m, nu2


def ou_moments(model: RegimeOUModel, s: float, i: int) -> TransitionMoments:
    if s < 0:
        raise NegativeElapsed(f"elapsed time {s} < 0")
    i = model.check_regime(i)
    decay, m, nu2 = _moments(model, s, i)
    return TransitionMoments(float(m), float(nu2), float(decay))


def transition_density(model: RegimeOUModel, u: float, y, t: float, x: float, i: int):
    """Density of ``X_u^{(i)}`` at ``y`` given ``X_t = x``."""
    if not u > t:
        raise NonPositiveElapsed(f"need u > t, got u={u}, t={t}")
    decay, m, nu2 = _moments(model, u - t, i)
    mean = x * decay + m
    y = np.asarray(y, dtype=float)
    return np.exp(-((y - mean) ** 2) / (2.0 * nu2)) / np.sqrt(2.0 * math.pi * nu2)


def normal_cdf(z):
    """Standard normal CDF through the complementary error function."""
    z = np.asarray(z, dtype=float)
    out = 0.5 * erfc(-z / SQRT2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CallClosedFormTerms:
    d1: np.ndarray
    d2: np.ndarray
    forward_exponent: np.ndarray


def call_terms(model: RegimeOUModel, strike: float, t: float, x, i: int) -> CallClosedFormTerms:
    tau = model.horizon - t
    decay, m, nu2 = _moments(model, tau, i)
    nu = math.sqrt(float(nu2))
    mean = np.asarray(x, dtype=float) * decay + m
    d1 = (mean - math.log(strike) + nu2) / nu
    return CallClosedFormTerms(d1=d1, d2=d1 - nu, forward_exponent=mean + 0.5 * nu2)


def v0_call(model: RegimeOUModel, strike: float, t: float, x, i: int):
    """Discounted call price ``E[e^{-r_i (T-t)} (e^{X_T} - K)^+]`` with the regime frozen at ``i``."""
    if not strike > 0.0:
        raise StrikeNonPositive(f"strike must be positive, got {strike}")
    x = np.asarray(x, dtype=float)
    tau = model.horizon - t
    if tau < TERMINAL_EPS:
        out = np.maximum(np.exp(x) - strike, 0.0)
    else:
        terms = call_terms(model, strike, t, x, i)
        out = math.exp(-model.r[i] * tau) * (
            np.exp(terms.forward_exponent) * normal_cdf(terms.d1) - strike * normal_cdf(terms.d2)
        )
        out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def frozen_expectation(model: RegimeOUModel, fn, t: float, x, i: int, nodes: int = GH_NODES):
    """``E[fn(X_T^{(i)})]`` by Gauss-Hermite quadrature on the Gaussian transition."""
    z, w = hermgauss(nodes)
    w = w / math.sqrt(math.pi)
    decay, m, nu2 = _moments(model, model.horizon - t, i)
    mean = np.asarray(x, dtype=float)[..., None] * decay + m
    y = mean + SQRT2 * math.sqrt(float(nu2)) * z
    return fn(y) @ w


def h0_term(model: RegimeOUModel, payoff: PayoffSpec, dampening: DampeningSpec, t: float, x, i: int):
    """No-switch part of the dampened value.

    ``e^{-q_i (T-t)} E[e^{-r_i (T-t)} phi(X_T^{(i)}, i)] / D(t, x)``; at ``t = T``
    this is the dampened payoff.
    """
    x = np.asarray(x, dtype=float)
    tau = model.horizon - t
    if tau < TERMINAL_EPS:
        out = payoff.evaluate(x, i) / dampening.evaluate(model.horizon, x)
        return out if out.ndim else float(out)
    if payoff.kind == "call":
        inner = np.asarray(v0_call(model, payoff.strike, t, x, i))
    elif payoff.kind == "constant":
        inner = np.full_like(x, payoff.level * math.exp(-model.r[i] * tau))
    else:
        inner = math.exp(-model.r[i] * tau) * frozen_expectation(
            model, lambda y: payoff.evaluate(y, i), t, x, i
        )
    out = math.exp(-model.holding_rates[i] * tau) * inner / dampening.evaluate(t, x)
    return out if out.ndim else float(out)


def _log_dampening_expectation(model: RegimeOUModel, t, x, u, i: int):
    T, b = model.horizon, model.beta
    decay, m, nu2 = _moments(model, u - t, i)
    a = np.exp(-b * (T - u))
    return a * (x * decay + m) + 0.5 * a * a * nu2


def dampening_conditional_expectation(model: RegimeOUModel, t: float, x, u: float, i: int):
    """Exact ``E[D(u, X_u^{(i)}) | X_t = x]`` for the OU-call dampening."""
    if not (0.0 <= t <= u <= model.horizon):
        raise TimeOrderViolation(f"need 0 <= t <= u <= T, got t={t}, u={u}")
    if u == t:
        return DampeningSpec.ou_call(model).evaluate(t, x)
    return np.exp(_log_dampening_expectation(model, t, np.asarray(x, dtype=float), u, i))


@dataclass(frozen=True)
class CertificateReport:
    rows: np.ndarray  # columns t, u, x, lhs, rhs, margin
    max_violation: float
    worst: tuple[float, float, float]
    regime: int

    @property
    def passed(self) -> bool:
        return self.max_violation <= CERTIFICATE_TOL

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "u", "x", "lhs", "rhs", "margin"])
        for row in self.rows:
            writer.writerow([repr(float(v)) for v in row])


CERTIFICATE_TOL = 1e-12


def certificate_grid(model: RegimeOUModel, xs=None, nt: int = 21, ns: int = 21, nx: int = 41):
    """Default ``(t, u, x)`` triples: 21 times, 21 elapsed fractions of ``T - t``, 41 log-prices."""
    T = model.horizon
    if xs is None:
        half = 8.0 * model.stationary_sd()
        xs = np.linspace(-half, half, nx)
    xs = np.asarray(xs, dtype=float)
    ts = np.linspace(0.0, T, nt)
    frac = np.linspace(0.0, 1.0, ns)
    tt, ff, xx = np.meshgrid(ts, frac, xs, indexing="ij")
    uu = np.minimum(tt + ff * (T - tt), T)
    return np.stack([tt.ravel(), uu.ravel(), xx.ravel()], axis=1)


def supermartingale_certificate(model: RegimeOUModel, i: int, triples=None, raise_on_fail: bool = True):
    """Check ``E[D(u, X_u) | X_t = x] <= D(t, x) e^{r_i (u - t)}`` on a grid.

    The violation is measured relatively, ``lhs / rhs - 1``; it must not exceed
    ``1e-12`` anywhere. Raises :class:`CertificateFailed` (with the worst
    triple) unless ``raise_on_fail`` is False.
    """
    i = model.check_regime(i)
    g = certificate_grid(model) if triples is None else np.asarray(triples, dtype=float)
    t, u, x = g[:, 0], g[:, 1], g[:, 2]
    if np.any(u < t) or np.any(t < 0) or np.any(u > model.horizon):
        raise TimeOrderViolation("certificate triples need 0 <= t <= u <= T")
    damp = DampeningSpec.ou_call(model)
    log_rhs = damp.log_value(t, x) + model.r[i] * (u - t)
    log_lhs = np.where(u == t, damp.log_value(t, x), _log_dampening_expectation(model, t, x, u, i))
    rel = np.expm1(log_lhs - log_rhs)
    lhs, rhs = np.exp(log_lhs), np.exp(log_rhs)
    rows = np.column_stack([t, u, x, lhs, rhs, rhs - lhs])
    k = int(np.argmax(rel))
    report = CertificateReport(rows, float(rel[k]), (float(t[k]), float(u[k]), float(x[k])), i)
    if raise_on_fail and not report.passed:
        raise CertificateFailed(
            f"CertificateFailed: regime {i} relative violation {rel[k]:.3e} at "
            f"(t={t[k]:.6g}, u={u[k]:.6g}, x={x[k]:.6g})",
            worst=report.worst,
        )
    return report
