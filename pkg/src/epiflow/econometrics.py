"""Least-squares estimation: OLS, sandwich covariances, fixed-effect absorption,
difference-in-differences, event studies, 2SLS and the Oster bound.

Everything is plain numpy/scipy on dense arrays; the data sets here have at
most a few thousand rows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
import pandas as pd
import scipy.linalg as sla
from scipy import stats

from .errors import EstimationError, ValidationError

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
COV_TYPES = ("classical", "hc0", "hc1", "hc2", "hc3", "cluster")


# ---------------------------------------------------------------------------
# Results


@dataclass
class RegressionResult:
    names: list[str]
    params: np.ndarray
    cov: np.ndarray
    cov_type: str
    nobs: int
    df_resid: int
    r2: float
    adj_r2: float
    resid: np.ndarray
    n_clusters: int | None = None
    df_absorbed: int = 0
    dropped: list[str] = field(default_factory=list)
    first_stage_F: float | None = None
    first_stage: dict | None = None
    oster: "OsterBound | None" = None
    meta: dict = field(default_factory=dict)
    # Design kept for re-computing covariances.
    _X: np.ndarray | None = field(default=None, repr=False)
    _bread: np.ndarray | None = field(default=None, repr=False)
    _clusters: np.ndarray | None = field(default=None, repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    @property
    def tvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.params / self.se

    @property
    def t_df(self) -> int:
        """Degrees of freedom of the reference t distribution."""
        if self.cov_type == "cluster" and self.n_clusters:
            return self.n_clusters - 1
        return max(self.df_resid, 1)

    @property
    def pvalues(self) -> np.ndarray:
        return 2 * stats.t.sf(np.abs(self.tvalues), self.t_df)

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        q = stats.t.ppf(0.5 + level / 2, self.t_df)
        return np.column_stack([self.params - q * self.se, self.params + q * self.se])

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def tidy(self, level: float = 0.95) -> pd.DataFrame:
        ci = self.conf_int(level)
        return pd.DataFrame(
            {
                "term": self.names,
                "estimate": self.params,
                "se": self.se,
                "t": self.tvalues,
                "p": self.pvalues,
                "ci_lo": ci[:, 0],
                "ci_hi": ci[:, 1],
            }
        )

    def with_covariance(self, cov_type: str, clusters=None) -> "RegressionResult":
        """Same fit, different covariance estimator."""
        if self._X is None:
            raise EstimationError("result does not carry its design matrix")
        clusters = self._clusters if clusters is None else clusters
        e = self.meta.get("resid_w", self.resid)
        cov, g = sandwich(self._X, e, self._bread, cov_type, clusters, self.meta.get("df_extra", 0))
        return replace(self, cov=cov, cov_type=cov_type, n_clusters=g,
                       _clusters=None if clusters is None else np.asarray(clusters))


# ---------------------------------------------------------------------------
# Core least squares


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def check_rank(X: np.ndarray, names: Sequence[str], tol: float = RANK_TOL) -> None:
    """Raise if ``X`` is rank deficient, naming the offending columns.

    Columns are scaled to unit norm before a pivoted QR so that wildly
    different magnitudes do not trigger spurious rank drops.
    """
    norms = np.linalg.norm(X, axis=0)
    zero = [names[j] for j in np.flatnonzero(norms == 0)]
    if zero:
        raise EstimationError(f"rank deficient design; all-zero column(s): {zero}")
    Xs = X / norms
    _, R, piv = sla.qr(Xs, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int((d > tol * d[0]).sum()) if d.size else 0
    if rank < X.shape[1]:
        bad = [names[j] for j in piv[rank:]]
        raise EstimationError(f"rank deficient design; collinear column(s): {bad}")


def sandwich(X, resid, bread, cov_type="hc1", clusters=None, df_extra=0):
    """Covariance of least-squares coefficients.

    ``df_extra`` counts absorbed parameters that enter the small-sample
    corrections alongside the ``k`` columns of ``X``. Returns the matrix and
    the number of clusters (None unless clustering).
    """
    cov_type = cov_type.lower()
    if cov_type not in COV_TYPES:
        raise ValidationError(f"unknown covariance {cov_type!r}; choose from {COV_TYPES}")
    n, k = X.shape
    dof = n - k - df_extra
    if dof <= 0:
        raise EstimationError(f"no residual degrees of freedom (n={n}, k={k + df_extra})")
    e = np.asarray(resid, dtype=float)
    if cov_type == "classical":
        return bread * (e @ e) / dof, None
    if cov_type == "cluster":
        if clusters is None:
            raise ValidationError("cluster covariance needs cluster labels")
        codes, uniq = pd.factorize(np.asarray(clusters), sort=True)
        g = len(uniq)
        if g < 2:
            raise EstimationError("cluster covariance needs at least 2 clusters")
        scores = np.zeros((g, k))
        np.add.at(scores, codes, X * e[:, None])
        meat = scores.T @ scores
        factor = g / (g - 1) * (n - 1) / dof
        cov = factor * bread @ meat @ bread
        return (cov + cov.T) / 2, g
    u2 = e**2
    if cov_type in ("hc2", "hc3"):
        h = np.einsum("ij,jk,ik->i", X, bread, X)
        u2 = u2 / (1 - h) if cov_type == "hc2" else u2 / (1 - h) ** 2
    meat = (X * u2[:, None]).T @ X
    cov = bread @ meat @ bread
    if cov_type == "hc1":
        cov = cov * n / dof
    return (cov + cov.T) / 2, None


def _has_constant(X: np.ndarray) -> bool:
    return bool(np.any(np.all(X == X[0], axis=0) & (X[0] != 0)))


def ols_fit(
    y,
    X,
    names: Sequence[str] | None = None,
    cov_type: str = "hc1",
    clusters=None,
    weights=None,
    df_absorbed: int = 0,
    df_extra: int | None = None,
    centered: bool | None = None,
) -> RegressionResult:
    """Least squares of ``y`` on the columns of ``X`` (no intercept added).

    ``df_absorbed`` is the number of fixed-effect parameters already swept out
    of ``y`` and ``X``; it reduces residual degrees of freedom. ``df_extra``
    (defaults to ``df_absorbed``) is what enters covariance corrections.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    X = _as_2d(X)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if y.size != n:
        raise ValidationError(f"y has {y.size} rows, X has {n}")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise ValidationError("non-finite values in regression data")
    check_rank(X, names)
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=float))
        Xw, yw = X * w[:, None], y * w
    else:
        Xw, yw = X, y
    Q, R = np.linalg.qr(Xw)
    beta = sla.solve_triangular(R, Q.T @ yw)
    Rinv = sla.solve_triangular(R, np.eye(k))
    bread = Rinv @ Rinv.T
    resid_w = yw - Xw @ beta
    df_extra = df_absorbed if df_extra is None else df_extra
    cov, g = sandwich(Xw, resid_w, bread, cov_type, clusters, df_extra)
    ssr = float(resid_w @ resid_w)
    if centered is None:
        centered = _has_constant(X) or df_absorbed > 0
    tss = float(((yw - yw.mean()) ** 2).sum()) if centered else float(yw @ yw)
    r2 = 1 - ssr / tss if tss > 0 else np.nan
    dof = n - k - df_absorbed
    adj = 1 - (1 - r2) * (n - 1) / dof if centered else 1 - (1 - r2) * n / dof
    return RegressionResult(
        names=names,
        params=beta,
        cov=cov,
        cov_type=cov_type.lower(),
        nobs=n,
        df_resid=dof,
        r2=r2,
        adj_r2=adj,
        resid=y - X @ beta,
        n_clusters=g,
        df_absorbed=df_absorbed,
        meta={"df_extra": df_extra, "resid_w": resid_w},
        _X=Xw,
        _bread=bread,
        _clusters=None if clusters is None else np.asarray(clusters),
    )


def robust_covariance(result: RegressionResult, flavor: str = "hc1", clusters=None) -> np.ndarray:
    """Re-estimate the covariance of a fitted model with another sandwich flavour."""
    return result.with_covariance(flavor, clusters).cov


# ---------------------------------------------------------------------------
# Fixed effects


@dataclass
class Absorbed:
    data: np.ndarray
    df: int
    iterations: int
    n_levels: list[int]


def _components(a: np.ndarray, b: np.ndarray) -> int:
    """Connected components of the bipartite graph linking levels of two factors."""
    na, nb = a.max() + 1, b.max() + 1
    parent = list(range(na + nb))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in set(zip(a.tolist(), (b + na).tolist())):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return len({find(x) for x in range(na + nb)})


def absorb_fixed_effects(
    data, groups: Sequence, tol: float = 1e-10, max_iter: int = 10_000
) -> Absorbed:
    """Sweep fixed effects out of every column of ``data``.

    ``groups`` holds one label array per fixed-effect dimension. Demeaning
    alternates over dimensions until no cell moves by more than ``tol``
    (relative to the column scale). Returns the demeaned matrix and the number
    of absorbed parameters.
    """
    M = _as_2d(data).copy()
    if not groups:
        return Absorbed(M, 0, 0, [])
    codes = [pd.factorize(np.asarray(g), sort=True)[0] for g in groups]
    counts = [np.bincount(c) for c in codes]
    scale = np.maximum(np.abs(M).max(axis=0), 1.0)
    it = 0
    for it in range(1, max_iter + 1):
        delta = 0.0
        for c, n in zip(codes, counts):
            means = np.zeros((n.size, M.shape[1]))
            np.add.at(means, c, M)
            means /= n[:, None]
            step = means[c]
            M -= step
            delta = max(delta, float((np.abs(step) / scale).max()))
        if len(codes) == 1 or delta < tol:
            break
    else:
        raise EstimationError(f"fixed-effect absorption did not converge in {max_iter} iterations")
    levels = [int(n.size) for n in counts]
    if len(codes) == 1:
        df = levels[0]
    elif len(codes) == 2:
        df = levels[0] + levels[1] - _components(codes[0], codes[1])
    else:
        df = sum(levels) - (len(levels) - 1)
    return Absorbed(M, df, it, levels)


def _nested_in(fe: np.ndarray, cluster: np.ndarray) -> bool:
    pairs = pd.DataFrame({"f": fe, "c": cluster}).drop_duplicates()
    return not pairs["f"].duplicated().any()


def fit_absorbed(
    y,
    X,
    names: Sequence[str],
    fe_groups: Sequence,
    cov_type: str = "cluster",
    clusters=None,
    protect: Sequence[str] = (),
    drop_tol: float = 1e-8,
) -> RegressionResult:
    """OLS after sweeping out fixed effects; regressors absorbed by them are dropped.

    Dropping a column named in ``protect`` is an error.
    """
    y = np.asarray(y, dtype=float)
    X = _as_2d(X)
    ab = absorb_fixed_effects(np.column_stack([y, X]), fe_groups)
    yd, Xd = ab.data[:, 0], ab.data[:, 1:]
    orig = np.linalg.norm(X, axis=0)
    left = np.linalg.norm(Xd, axis=0)
    keep = left > drop_tol * np.maximum(orig, 1e-300)
    dropped = [n for n, k in zip(names, keep) if not k]
    for n in dropped:
        if n in protect:
            raise EstimationError(f"{n} is collinear with the fixed effects (no variation left)")
    if dropped:
        log.info("dropped regressors absorbed by fixed effects: %s", dropped)
    names = [n for n, k in zip(names, keep) if k]
    df_extra = ab.df
    if cov_type == "cluster" and clusters is not None:
        cl = np.asarray(clusters)
        for g, n in zip(fe_groups, ab.n_levels):
            if _nested_in(np.asarray(g), cl):
                df_extra -= n
        df_extra = max(df_extra, 0)
    res = ols_fit(yd, Xd[:, keep], names, cov_type, clusters, df_absorbed=ab.df, df_extra=df_extra)
    res.dropped = dropped
    res.meta.update(fe_levels=ab.n_levels, fe_iterations=ab.iterations)
    return res


# ---------------------------------------------------------------------------
# Specifications


@dataclass(frozen=True)
class RegressionSpec:
    outcome: str
    treatment: str
    controls: tuple[str, ...] = ()
    unit: str = "city_id"
    time: str = "year"
    fe: tuple[str, ...] = ()
    cluster: str | None = None
    cov: str | None = None  # hc1 for cross-sections, cluster for panels
    post_from: Any = None
    base_period: Any = None
    instrument: str | None = None
    weights: str | None = None
    sample: str | None = None  # pandas query string

    def covariance(self) -> str:
        if self.cov:
            return self.cov.lower()
        return "hc1" if self.kind == "cross_section" else "cluster"

    @property
    def kind(self) -> str:
        if self.base_period is not None:
            return "event_study"
        if self.post_from is not None:
            return "did"
        return "cross_section"


def _prepare(panel: pd.DataFrame, spec: RegressionSpec, extra: Sequence[str] = ()) -> pd.DataFrame:
    df = panel.query(spec.sample) if spec.sample else panel
    cols = [spec.outcome, spec.treatment, *spec.controls, *extra, *spec.fe]
    for c in (spec.instrument, spec.weights, spec.cluster):
        if c:
            cols.append(c)
    missing = [c for c in dict.fromkeys(cols) if c not in df.columns]
    if missing:
        raise ValidationError(f"columns not in data: {missing}")
    df = df.dropna(subset=list(dict.fromkeys(cols)))
    if df.empty:
        raise EstimationError("no complete observations for this specification")
    return df.sort_values([c for c in (spec.unit, spec.time) if c in df.columns], kind="mergesort")


def _period_key(v):
    return str(v) if isinstance(v, str) else v


def cross_section(panel: pd.DataFrame, spec: RegressionSpec) -> RegressionResult:
    """``outcome ~ 1 + treatment + controls`` with robust (HC1) errors by default.

    With ``spec.fe`` set, those fixed effects are absorbed in place of the
    constant.
    """
    df = _prepare(panel, spec)
    names = ["const", spec.treatment, *spec.controls]
    X = np.column_stack([np.ones(len(df)), df[spec.treatment], *(df[c] for c in spec.controls)])
    y = df[spec.outcome].to_numpy(float)
    clusters = df[spec.cluster].to_numpy() if spec.cluster else None
    if spec.fe:
        if spec.weights:
            raise ValidationError("weights are not supported together with fixed effects")
        groups = [df[d].to_numpy() for d in spec.fe]
        if spec.instrument:
            Z = df[spec.instrument].to_numpy(float)[:, None]
            res = _absorbed_tsls(y, X[:, 1:2], Z, X[:, 2:], [spec.treatment], [spec.instrument],
                                 list(spec.controls), groups, spec.covariance(), clusters)
        else:
            res = fit_absorbed(y, X[:, 1:], names[1:], groups, spec.covariance(), clusters,
                               protect=[spec.treatment])
    elif spec.instrument:
        Z = np.column_stack([np.ones(len(df)), df[spec.instrument], *(df[c] for c in spec.controls)])
        res = tsls_fit(y, X[:, [1]], Z[:, [1]], np.delete(X, 1, axis=1), [spec.treatment],
                       [spec.instrument], ["const", *spec.controls], spec.covariance(), clusters)
    else:
        w = df[spec.weights].to_numpy(float) if spec.weights else None
        res = ols_fit(y, X, names, spec.covariance(), clusters, weights=w)
    res.meta.update(kind="cross_section", spec=spec)
    return res


def _post_indicator(times: pd.Series, post_from) -> np.ndarray:
    if pd.api.types.is_numeric_dtype(times):
        return (times.to_numpy(float) >= float(post_from)).astype(float)
    return (times.astype(str).to_numpy() >= str(post_from)).astype(float)


def _fe_groups(df: pd.DataFrame, spec: RegressionSpec) -> list[np.ndarray]:
    dims = spec.fe or (spec.unit, spec.time)
    return [df[d].to_numpy() for d in dims]


def did_estimate(panel: pd.DataFrame, spec: RegressionSpec) -> RegressionResult:
    """Two-way fixed-effects difference-in-differences.

    ``outcome ~ unit FE + time FE + treatment x Post + controls x Post`` with
    Post = 1 from ``spec.post_from`` onward, errors clustered by unit.
    """
    if spec.post_from is None:
        raise ValidationError("difference-in-differences needs post_from")
    df = _prepare(panel, spec, [spec.unit, spec.time])
    post = _post_indicator(df[spec.time], spec.post_from)
    if post.min() == post.max():
        raise EstimationError("Post indicator has no variation in the sample")
    tname = f"{spec.treatment}_x_post"
    names = [tname, *(f"{c}_x_post" for c in spec.controls)]
    X = np.column_stack([df[spec.treatment].to_numpy(float) * post, *(df[c].to_numpy(float) * post for c in spec.controls)])
    y = df[spec.outcome].to_numpy(float)
    cluster_col = spec.cluster or spec.unit
    clusters = df[cluster_col].to_numpy()
    cov = spec.covariance()
    groups = _fe_groups(df, spec)
    if spec.instrument:
        Z = df[spec.instrument].to_numpy(float) * post
        res = _absorbed_tsls(y, X[:, :1], Z[:, None], X[:, 1:], names[:1], [f"{spec.instrument}_x_post"],
                             names[1:], groups, cov, clusters)
    else:
        res = fit_absorbed(y, X, names, groups, cov, clusters, protect=[tname])
    res.meta.update(kind="did", spec=spec, treated_name=tname)
    return res


@dataclass
class EventStudyResult:
    result: RegressionResult
    base: Any
    periods: list

    def path(self, level: float = 0.95) -> pd.DataFrame:
        """Coefficient path with the base period included as an exact zero."""
        tidy = self.result.tidy(level).set_index("term")
        rows = []
        for p in self.periods:
            if p == self.base:
                rows.append((p, 0.0, 0.0, 0.0, 0.0))
                continue
            r = tidy.loc[self.result.meta["period_terms"][p]]
            rows.append((p, r.estimate, r.se, r.ci_lo, r.ci_hi))
        return pd.DataFrame(rows, columns=["period", "estimate", "se", "ci_lo", "ci_hi"])


def event_study(panel: pd.DataFrame, spec: RegressionSpec) -> EventStudyResult:
    """Event-study regression with one treatment coefficient per non-base period.

    Controls are interacted with every non-base period indicator. With
    ``spec.instrument`` the treatment-by-period terms are instrumented by the
    instrument-by-period terms.
    """
    if spec.base_period is None:
        raise ValidationError("event study needs base_period")
    df = _prepare(panel, spec, [spec.unit, spec.time])
    times = df[spec.time]
    periods = sorted(times.unique().tolist(), key=_period_key)
    base = spec.base_period
    if pd.api.types.is_numeric_dtype(times):
        base = type(periods[0])(base)
    else:
        base = str(base)
    if base not in periods:
        raise ValidationError(f"base period {spec.base_period} not present in data")
    others = [p for p in periods if p != base]
    t = times.to_numpy()
    treat = df[spec.treatment].to_numpy(float)
    cols, names, terms = [], [], {}
    for p in others:
        ind = (t == p).astype(float)
        name = f"{spec.treatment}_x_{p}"
        terms[p] = name
        cols.append(treat * ind)
        names.append(name)
    ctrl_cols, ctrl_names = [], []
    for c in spec.controls:
        v = df[c].to_numpy(float)
        for p in others:
            ctrl_cols.append(v * (t == p))
            ctrl_names.append(f"{c}_x_{p}")
    y = df[spec.outcome].to_numpy(float)
    cluster_col = spec.cluster or spec.unit
    clusters = df[cluster_col].to_numpy()
    cov = spec.covariance()
    groups = _fe_groups(df, spec)
    X = np.column_stack(cols)
    C = np.column_stack(ctrl_cols) if ctrl_cols else np.empty((len(df), 0))
    if spec.instrument:
        z = df[spec.instrument].to_numpy(float)
        Z = np.column_stack([z * (t == p) for p in others])
        res = _absorbed_tsls(y, X, Z, C, names, [f"{spec.instrument}_x_{p}" for p in others],
                             ctrl_names, groups, cov, clusters)
    else:
        try:
            res = fit_absorbed(y, np.column_stack([X, C]), names + ctrl_names, groups, cov, clusters,
                               protect=names)
        except EstimationError as exc:
            raise EstimationError(f"period with no treated variation: {exc}") from exc
    res.meta.update(kind="event_study", spec=spec, period_terms=terms, base=base)
    return EventStudyResult(res, base, periods)


# ---------------------------------------------------------------------------
# Two-stage least squares


def tsls_fit(
    y,
    endog,
    instruments,
    exog=None,
    endog_names: Sequence[str] | None = None,
    instrument_names: Sequence[str] | None = None,
    exog_names: Sequence[str] | None = None,
    cov_type: str = "hc1",
    clusters=None,
    df_absorbed: int = 0,
    df_extra: int | None = None,
) -> RegressionResult:
    """Exactly identified two-stage least squares.

    ``endog`` and ``instruments`` must have the same number of columns;
    ``exog`` are included exogenous regressors (pass the constant here).
    First-stage F statistics test the excluded instruments in each first
    stage with the same covariance flavour; ``first_stage_F`` holds the one
    for the first endogenous regressor.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    En = _as_2d(endog)
    Zx = _as_2d(instruments)
    n = y.size
    W = _as_2d(exog) if exog is not None and np.size(exog) else np.empty((n, 0))
    p = En.shape[1]
    if Zx.shape[1] != p:
        raise ValidationError(f"need as many instruments as endogenous regressors ({Zx.shape[1]} vs {p})")
    endog_names = list(endog_names or [f"endog{j}" for j in range(p)])
    instrument_names = list(instrument_names or [f"z{j}" for j in range(p)])
    exog_names = list(exog_names or [f"w{j}" for j in range(W.shape[1])])
    for j in range(p):
        z = Zx[:, j]
        if np.all(z == z[0]):
            raise EstimationError(f"instrument {instrument_names[j]} is constant")
    X = np.column_stack([En, W])
    Z = np.column_stack([Zx, W])
    names = endog_names + exog_names
    check_rank(Z, instrument_names + exog_names)
    df_extra = df_absorbed if df_extra is None else df_extra

    first: dict[str, dict] = {}
    fs_cols = []
    for j in range(p):
        fs = ols_fit(En[:, j], Z, instrument_names + exog_names, cov_type, clusters,
                     df_absorbed=df_absorbed, df_extra=df_extra)
        fs_cols.append(Z @ fs.params)
        b = fs.params[:p]
        V = fs.cov[:p, :p]
        try:
            F = float(b @ np.linalg.solve(V, b)) / p
        except np.linalg.LinAlgError:
            F = np.nan
        if not np.isfinite(F):
            raise EstimationError("first-stage F undefined (zero residual variance)")
        first[endog_names[j]] = {"F": F, "params": dict(zip(fs.names, fs.params)), "r2": fs.r2}
    Xhat = np.column_stack([*fs_cols, W])
    check_rank(Xhat, names)
    beta = np.linalg.solve(Xhat.T @ X, Xhat.T @ y)
    resid = y - X @ beta
    Q, R = np.linalg.qr(Xhat)
    Rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
    bread = Rinv @ Rinv.T
    cov, g = sandwich(Xhat, resid, bread, cov_type, clusters, df_extra)
    k = X.shape[1]
    dof = n - k - df_absorbed
    centered = _has_constant(W) if W.size else df_absorbed > 0
    centered = centered or df_absorbed > 0
    tss = float(((y - y.mean()) ** 2).sum()) if centered else float(y @ y)
    r2 = 1 - float(resid @ resid) / tss if tss > 0 else np.nan
    return RegressionResult(
        names=names,
        params=beta,
        cov=cov,
        cov_type=cov_type.lower(),
        nobs=n,
        df_resid=dof,
        r2=r2,
        adj_r2=1 - (1 - r2) * (n - 1) / dof,
        resid=resid,
        n_clusters=g,
        df_absorbed=df_absorbed,
        first_stage_F=first[endog_names[0]]["F"],
        first_stage=first,
        meta={"df_extra": df_extra, "estimator": "2sls"},
        _X=Xhat,
        _bread=bread,
        _clusters=None if clusters is None else np.asarray(clusters),
    )


def _absorbed_tsls(y, En, Zx, W, endog_names, instrument_names, exog_names, groups, cov, clusters):
    En, Zx = _as_2d(En), _as_2d(Zx)
    W = _as_2d(W) if np.size(W) else np.empty((len(y), 0))
    p, q = En.shape[1], W.shape[1]
    ab = absorb_fixed_effects(np.column_stack([y, En, Zx, W]), groups)
    d = ab.data
    df_extra = ab.df
    if cov == "cluster" and clusters is not None:
        for g, n in zip(groups, ab.n_levels):
            if _nested_in(np.asarray(g), np.asarray(clusters)):
                df_extra -= n
    res = tsls_fit(d[:, 0], d[:, 1 : 1 + p], d[:, 1 + p : 1 + 2 * p], d[:, 1 + 2 * p : 1 + 2 * p + q],
                   endog_names, instrument_names, exog_names, cov, clusters,
                   df_absorbed=ab.df, df_extra=max(df_extra, 0))
    res.meta.update(fe_levels=ab.n_levels)
    return res


# ---------------------------------------------------------------------------
# Oster bound


@dataclass(frozen=True)
class OsterBound:
    beta_star: float
    delta: float
    r_max: float
    beta_uncontrolled: float
    r2_uncontrolled: float
    beta_controlled: float
    r2_controlled: float


def _exact(x) -> Fraction:
    return Fraction(repr(float(x))) if not isinstance(x, Fraction) else x


def oster_bound(
    beta_uncontrolled: float,
    r2_uncontrolled: float,
    beta_controlled: float,
    r2_controlled: float,
    r_max: float | None = None,
    multiplier: float = 1.3,
) -> OsterBound:
    """Bias-adjusted coefficient under proportional selection (delta = 1).

    ``beta* = b_c - (b_u - b_c) * (R_max - R_c) / (R_c - R_u)`` with
    ``R_max = min(1, multiplier * R_c)`` unless given. Also returns the
    delta that would drive the adjusted coefficient to zero. Arithmetic is
    done in exact rationals on the decimal representations of the inputs.
    """
    bu, ru, bc, rc = map(_exact, (beta_uncontrolled, r2_uncontrolled, beta_controlled, r2_controlled))
    if rc <= ru:
        raise ValidationError("controlled R^2 must exceed uncontrolled R^2 for the bound")
    rm = min(Fraction(1), _exact(multiplier) * rc) if r_max is None else _exact(r_max)
    movement = bu - bc
    beta_star = bc - movement * (rm - rc) / (rc - ru)
    denom = movement * (rm - rc)
    delta = float(bc * (rc - ru) / denom) if denom != 0 else float("inf")
    return OsterBound(float(beta_star), delta, float(rm), float(bu), float(ru), float(bc), float(rc))


def oster_for(panel: pd.DataFrame, spec: RegressionSpec, **kw) -> OsterBound:
    """Fit the treatment-only and the controlled cross-section, then bound."""
    full = cross_section(panel, spec)
    sub = panel.loc[panel.index.isin(_prepare(panel, spec).index)]
    bare = cross_section(sub, replace(spec, controls=()))
    return oster_bound(bare.coef(spec.treatment), bare.r2, full.coef(spec.treatment), full.r2, **kw)


def estimate(panel: pd.DataFrame, spec: RegressionSpec):
    """Dispatch on the specification kind."""
    if spec.kind == "event_study":
        return event_study(panel, spec)
    if spec.kind == "did":
        return did_estimate(panel, spec)
    return cross_section(panel, spec)
