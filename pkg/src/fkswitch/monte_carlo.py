"""Monte Carlo estimator of the regime-switching Feynman-Kac expectation.

Paths are simulated exactly: exponential holding times for the regime chain
and the Gaussian OU transition across each constant-regime segment, so the
only error is statistical. Gaussian draws are paired antithetically; the two
members of a pair share one regime path.

Randomness is organised in fixed blocks of ``BLOCK_PAIRS`` antithetic pairs.
Each block owns a Philox stream keyed by ``(seed, block index)`` and each
simulation round draws full-width arrays, so the numbers used by a given pair
depend only on the seed and its index, never on how blocks are scheduled.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .analytics import _moments
from .errors import ModelError
from .model import GeneratorMatrix, PayoffSpec, PricingQuery, RegimeOUModel

BLOCK_PAIRS = 8192


@dataclass(frozen=True)
class RegimePath:
    """Piecewise-constant regime trajectory on ``[start, end]``."""

    start: float
    end: float
    jump_times: tuple[float, ...]
    regimes: tuple[int, ...]

    @property
    def segments(self) -> list[tuple[float, float, int]]:
        bounds = (self.start, *self.jump_times, self.end)
        return [(bounds[n], bounds[n + 1], reg) for n, reg in enumerate(self.regimes)]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


def _jump_probabilities(generator: GeneratorMatrix) -> np.ndarray:
    """Row-stochastic embedded jump chain (rows of absorbing states stay zero)."""
    off = generator.off_diagonal()
    q = generator.holding_rates
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(q[:, None] > 0, off / q[:, None], 0.0)
    return p


def _cumulative_jumps(generator: GeneratorMatrix) -> np.ndarray:
    # Saturate from each row's last reachable state on so rounding in the
    # cumulative sum can never select an unreachable regime.
    p = _jump_probabilities(generator)
    cum = np.cumsum(p, axis=1)
    for row in range(p.shape[0]):
        reach = np.flatnonzero(p[row] > 0)
        if reach.size:
            cum[row, reach[-1]:] = 2.0
    return cum


def simulate_regime_path(generator: GeneratorMatrix, t: float, horizon: float, i: int,
                         stream: np.random.Generator) -> RegimePath:
    q = generator.holding_rates
    probs = _jump_probabilities(generator)
    s, reg = t, int(i)
    jumps, regs = [], [reg]
    while True:
        hold = stream.exponential() / q[reg] if q[reg] > 0 else math.inf
        if s + hold >= horizon:
            break
        s += hold
        reg = int(stream.choice(probs.shape[0], p=probs[reg]))
        jumps.append(s)
        regs.append(reg)
    return RegimePath(t, horizon, tuple(jumps), tuple(regs))


def simulate_x_on_path(model: RegimeOUModel, path: RegimePath, x0: float,
                       stream: np.random.Generator) -> tuple[float, float]:
    """Exact OU draw of ``X`` at the path end and the pathwise discount factor."""
    x, log_disc = float(x0), 0.0
    for s0, s1, j in path.segments:
        dt = s1 - s0
        decay, m, nu2 = _moments(model, dt, j)
        x = x * decay + m + math.sqrt(nu2) * stream.standard_normal()
        log_disc -= model.r[j] * dt
    return x, math.exp(log_disc)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    paths: int
    seed: int
    seconds: float = field(default=0.0, compare=False)

    def write_csv(self, fh, timings: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mean", "stderr", "paths", "seed", "seconds"])
        sec = self.seconds if timings else 0.0
        w.writerow([repr(self.mean), repr(self.stderr), self.paths, self.seed, f"{sec:.6f}"])


def _block_stream(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _simulate_block(model: RegimeOUModel, payoff: PayoffSpec, query: PricingQuery,
                    seed: int, block: int, n_pairs: int, detail: bool = False):
    """Pair-averaged discounted payoffs for the first ``n_pairs`` pairs of a block."""
    rng = _block_stream(seed, block)
    T, beta = model.horizon, model.beta
    q = model.holding_rates
    cum = _cumulative_jumps(model.generator)
    n = BLOCK_PAIRS
    s = np.full(n, float(query.t))
    reg = np.full(n, query.regime, dtype=np.intp)
    xp = np.full(n, float(query.x))
    xm = xp.copy()
    log_disc = np.zeros(n)
    jumps = np.zeros(n, dtype=np.intp)
    active = np.ones(n, dtype=bool)
    while active.any():
        e = rng.standard_exponential(n)
        uni = rng.random(n)
        z = rng.standard_normal(n)
        qa = q[reg]
        with np.errstate(divide="ignore"):
            hold = np.where(qa > 0, e / np.where(qa > 0, qa, 1.0), np.inf)
        jumped = active & (s + hold < T)
        end = np.where(jumped, s + hold, T)
        dt = np.where(active, end - s, 0.0)
        decay = np.exp(-beta * dt)
        mean_shift = model.theta[reg] * -np.expm1(-beta * dt)
        sd = model.sigma[reg] * np.sqrt(-np.expm1(-2.0 * beta * dt) / (2.0 * beta))
        xp = np.where(active, xp * decay + mean_shift + sd * z, xp)
        xm = np.where(active, xm * decay + mean_shift - sd * z, xm)
        log_disc -= model.r[reg] * dt
        nxt = np.minimum((uni[:, None] >= cum[reg]).sum(axis=1), q.size - 1)
        reg = np.where(jumped, nxt, reg)
        jumps += jumped
        s = np.where(active, end, s)
        active = jumped
    disc = np.exp(log_disc)
    pay_p = payoff.evaluate(xp, reg)
    pay_m = payoff.evaluate(xm, reg)
    pair = 0.5 * disc * (pay_p + pay_m)
    if detail:
        return pair[:n_pairs], (jumps[:n_pairs], xp[:n_pairs], xm[:n_pairs], disc[:n_pairs],
                                pay_p[:n_pairs], pay_m[:n_pairs], s[:n_pairs])
    return pair[:n_pairs]


def mc_price(model: RegimeOUModel, payoff: PayoffSpec, query: PricingQuery, paths: int,
             seed: int, workers: int | None = None) -> McEstimate:
    """Antithetic estimate of ``E[exp(-int r) phi(X_T, a_T)]`` from ``query``.

    ``paths`` counts individual paths and must be even. The standard error is
    the sample deviation of pair averages over ``sqrt(paths / 2)``.
    """
    if paths < 100:
        raise ModelError("need at least 100 paths")
    if paths % 2:
        raise ModelError("paths must be even (antithetic pairs)")
    query.check(model)
    t0 = time.perf_counter()
    pairs = paths // 2
    blocks = [(b, min(BLOCK_PAIRS, pairs - b * BLOCK_PAIRS)) for b in range(-(-pairs // BLOCK_PAIRS))]
    parts = ordered_map(lambda bn: _simulate_block(model, payoff, query, seed, *bn), blocks, workers)
    vals = np.concatenate(parts)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(pairs))
    return McEstimate(mean, stderr, paths, seed, time.perf_counter() - t0)


def dump_paths(model: RegimeOUModel, payoff: PayoffSpec, query: PricingQuery, paths: int,
               seed: int, fh) -> None:
    """Per-path debug rows ``path_index, n_jumps, x_T, discount, payoff``."""
    pairs = paths // 2
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_index", "n_jumps", "x_T", "discount", "payoff"])
    for b in range(-(-pairs // BLOCK_PAIRS)):
        n = min(BLOCK_PAIRS, pairs - b * BLOCK_PAIRS)
        _, (jumps, xp, xm, disc, pp, pm, _) = _simulate_block(model, payoff, query, seed, b, n, detail=True)
        for k in range(n):
            base = 2 * (b * BLOCK_PAIRS + k)
            w.writerow([base, int(jumps[k]), repr(float(xp[k])), repr(float(disc[k])), repr(float(pp[k]))])
            w.writerow([base + 1, int(jumps[k]), repr(float(xm[k])), repr(float(disc[k])), repr(float(pm[k]))])
