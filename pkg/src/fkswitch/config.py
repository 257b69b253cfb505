"""INI configuration files.

Sections and keys::

    [model]       beta, sigma (list), r (list), T, theta (list, optional),
                  derive_theta = true|false
    [generator]   row_1, row_2, ... (comma-separated reals)
    [payoff]      kind = call|constant|custom; strike; level;
                  knots, values, bound (custom)
    [dampening]   kind = unit|ou_call
    [query]       t, x, regime (1-based)                       optional
    [solver]      tol, max_iter, nt, nx, xmin, xmax,
                  x_grid = uniform|clustered                   optional
    [monte_carlo] paths, seed                                  optional
    [pde]         dt, dx                                       optional

``#`` starts a comment, also after a value. Numbers are parsed with
``float()``, which never consults the locale.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, ModelError
from .model import (
    DampeningSpec,
    PayoffSpec,
    PricingQuery,
    RegimeOUModel,
    build_model,
    validate_generator,
)


@dataclass(frozen=True)
class Settings:
    tol: float = 1e-6
    max_iter: int = 200
    nt: int = 41
    nx: int = 201
    xmin: float | None = None
    xmax: float | None = None
    x_grid: str = "auto"
    paths: int = 1_000_000
    seed: int = 12345
    pde_dt: float = 1e-3
    pde_dx: float = 5e-3


@dataclass(frozen=True)
class RunConfig:
    model: RegimeOUModel
    payoff: PayoffSpec
    dampening: DampeningSpec
    query: PricingQuery | None = None
    settings: Settings = field(default_factory=Settings)


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list for {key!r}: {text!r}") from exc


def _float(sec, key: str, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r} in [{sec.name}]")
        return default
    try:
        return float(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad number for {key!r}: {sec[key]!r}") from exc


def _int(sec, key: str, default: int) -> int:
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad integer for {key!r}: {sec[key]!r}") from exc


def _bool(sec, key: str, default: bool) -> bool:
    if key not in sec:
        return default
    try:
        return sec.getboolean(key)
    except ValueError as exc:
        raise ConfigError(f"bad boolean for {key!r}: {sec[key]!r}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for name in ("model", "generator", "payoff"):
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")

    gen = cp["generator"]
    rows = []
    n = 1
    while f"row_{n}" in gen:
        rows.append(_floats(gen[f"row_{n}"], f"row_{n}"))
        n += 1
    if not rows:
        raise ConfigError("[generator] needs row_1, row_2, ...")
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("generator rows have different lengths")
    generator = validate_generator(rows)

    sec = cp["model"]
    derive = _bool(sec, "derive_theta", "theta" not in sec)
    theta = _floats(sec["theta"], "theta") if "theta" in sec else None
    if "sigma" not in sec or "r" not in sec:
        raise ConfigError("[model] needs sigma and r")
    model = build_model(
        beta=_float(sec, "beta"),
        sigma=_floats(sec["sigma"], "sigma"),
        r=_floats(sec["r"], "r"),
        horizon=_float(sec, "t"),
        generator=generator,
        theta=theta,
        derive_theta=derive,
    )

    pay = cp["payoff"]
    kind = pay.get("kind", "call").strip().lower()
    if kind == "call":
        payoff = PayoffSpec.call(_float(pay, "strike"))
    elif kind == "constant":
        payoff = PayoffSpec.constant(_float(pay, "level"))
    elif kind == "custom":
        if "knots" not in pay or "values" not in pay:
            raise ConfigError("custom payoff needs knots and values")
        payoff = PayoffSpec.custom(_floats(pay["knots"], "knots"), _floats(pay["values"], "values"),
                                   _float(pay, "bound"))
    else:
        raise ConfigError(f"unknown payoff kind {kind!r}")

    dkind = cp["dampening"].get("kind", "").strip().lower() if "dampening" in cp else ""
    if not dkind:
        dkind = "ou_call" if kind == "call" else "unit"
    if dkind == "unit":
        dampening = DampeningSpec.unit()
    elif dkind == "ou_call":
        dampening = DampeningSpec.ou_call(model)
    else:
        raise ConfigError(f"unknown dampening kind {dkind!r}")

    query = None
    if "query" in cp:
        qs = cp["query"]
        query = PricingQuery(_float(qs, "t", 0.0), _float(qs, "x", 0.0), _int(qs, "regime", 1) - 1)

    s = Settings()
    if "solver" in cp:
        sv = cp["solver"]
        s = replace(
            s,
            tol=_float(sv, "tol", s.tol),
            max_iter=_int(sv, "max_iter", s.max_iter),
            nt=_int(sv, "nt", s.nt),
            nx=_int(sv, "nx", s.nx),
            xmin=_float(sv, "xmin", 0.0) if "xmin" in sv else None,
            xmax=_float(sv, "xmax", 0.0) if "xmax" in sv else None,
            x_grid=sv.get("x_grid", s.x_grid).strip().lower(),
        )
    if "monte_carlo" in cp:
        mc = cp["monte_carlo"]
        s = replace(s, paths=_int(mc, "paths", s.paths), seed=_int(mc, "seed", s.seed))
    if "pde" in cp:
        pd = cp["pde"]
        s = replace(s, pde_dt=_float(pd, "dt", s.pde_dt), pde_dx=_float(pd, "dx", s.pde_dx))
    if s.x_grid not in ("auto", "uniform", "clustered"):
        raise ConfigError(f"x_grid must be uniform, clustered or auto, got {s.x_grid!r}")
    return RunConfig(model, payoff, dampening, query, s)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text)


__all__ = ["RunConfig", "Settings", "load_config", "parse_config", "ModelError"]
