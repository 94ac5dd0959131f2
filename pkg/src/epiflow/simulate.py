"""Data-generating processes for the Monte Carlo checks of the estimators.

Each replication draws from ``numpy.random.default_rng(seed)``; the seed
list is fixed by the caller, so results are reproducible and no seed is ever
chosen after looking at the outcome.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .econometrics import RegressionSpec, did_estimate, ols_fit, tsls_fit


@dataclass(frozen=True)
class DidDesign:
    beta: float = -5.0
    n_units: int = 50
    n_periods: int = 15  # Jan 1918 .. Mar 1919
    post_from: int = 7  # Aug 1918
    sigma: float = 10.0
    rho: float = 0.5  # within-unit AR(1) correlation of the errors


def did_panel(design: DidDesign, rng: np.random.Generator) -> pd.DataFrame:
    """Two-way FE panel with half the units treated from ``post_from`` on."""
    n, T = design.n_units, design.n_periods
    treated = np.zeros(n)
    treated[rng.permutation(n)[: n // 2]] = 1.0
    unit_fe = rng.normal(0, 10, n)
    time_fe = rng.normal(0, 5, T)
    eps = np.empty((n, T))
    eps[:, 0] = rng.normal(0, design.sigma, n)
    innov = design.sigma * np.sqrt(1 - design.rho**2)
    for t in range(1, T):
        eps[:, t] = design.rho * eps[:, t - 1] + rng.normal(0, innov, n)
    post = (np.arange(T) >= design.post_from).astype(float)
    y = unit_fe[:, None] + time_fe[None, :] + design.beta * treated[:, None] * post[None, :] + eps
    return pd.DataFrame({
        "city_id": np.repeat(np.arange(n), T),
        "month": np.tile(np.arange(T), n),
        "y": y.ravel(),
        "treated": np.repeat(treated, T),
    })


def did_replication(design: DidDesign, seed: int, level: float = 0.95) -> dict:
    df = did_panel(design, np.random.default_rng(seed))
    res = did_estimate(df, RegressionSpec("y", "treated", time="month", post_from=design.post_from))
    row = res.tidy(level).set_index("term").loc["treated_x_post"]
    return {"seed": seed, "estimate": row.estimate, "se": row.se, "p": row.p,
            "covered": bool(row.ci_lo <= design.beta <= row.ci_hi)}


def did_monte_carlo(design: DidDesign, seeds, level: float = 0.95) -> pd.DataFrame:
    return pd.DataFrame([did_replication(design, s, level) for s in seeds])


@dataclass(frozen=True)
class IvDesign:
    beta: float = 1.0
    n: int = 500
    pi: float = 0.8  # first-stage coefficient on the instrument


def iv_sample(design: IvDesign, rng: np.random.Generator):
    """``x = pi z + u + v``, ``y = 1 + beta x + u``: OLS is biased by 1 / (pi^2 + 2)."""
    z = rng.normal(size=design.n)
    u = rng.normal(size=design.n)
    x = design.pi * z + u + rng.normal(size=design.n)
    y = 1.0 + design.beta * x + u
    return y, x, z


def iv_replication(design: IvDesign, seed: int) -> dict:
    y, x, z = iv_sample(design, np.random.default_rng(seed))
    W = np.ones((design.n, 1))
    ols = ols_fit(y, np.column_stack([x, W]), ["x", "const"])
    iv = tsls_fit(y, x, z, W)
    return {"seed": seed, "ols": ols.params[0], "tsls": iv.params[0], "first_stage_F": iv.first_stage_F}


def iv_monte_carlo(design: IvDesign, seeds) -> pd.DataFrame:
    return pd.DataFrame([iv_replication(design, s) for s in seeds])
