"""Asymmetry coefficient profiles, extremum location, and directional tests.

The coefficient at a conditioning point is the entropy gap
H(X|z) - H(Y|z).  Direction evidence comes from the extremum of the raw
profile: under contracting mechanisms the minimum must be significantly
positive, under expanding mechanisms the maximum significantly negative.
A weighted local quadratic fit centered at the extremum supplies the
smoothed value and its standard error; the weights combine tricube
distance weights with inverse pointwise variances.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .entropy import EntropyProfile, entropy_profile
from .errors import CondasymError, ConfigurationError, InferenceError
from .kcde import GRID_SIZE_DEFAULT
from .kernels import BandwidthPolicy, Bandwidths

log = logging.getLogger(__name__)

CONTRACTING = "contracting"
EXPANDING = "expanding"
DYNAMICS = (CONTRACTING, EXPANDING)

VAR_FLOOR_DEFAULT = 1e-10


@dataclass(frozen=True)
class CoefficientProfile:
    """Pointwise coefficient estimates and their variance approximations."""

    grid: np.ndarray  # (m, d)
    c: np.ndarray
    var_c: np.ndarray

    def __len__(self) -> int:
        return self.grid.shape[0]


@dataclass(frozen=True)
class AsymmetryResult:
    dynamics: str
    z0: np.ndarray
    c_hat: float
    se: float
    bound: float
    alpha: float
    reject_null: bool
    profile: CoefficientProfile | None = field(default=None, compare=False)
    entropy: EntropyProfile | None = field(default=None, compare=False)


def build_eval_grid(z, frac: float = 0.10, trim: float = 0.05) -> np.ndarray:
    """Quantile-based evaluation grid over the trimmed covariate support.

    One covariate: ceil(frac * n) equally spaced quantiles between trim
    and 1 - trim.  Two covariates: the Cartesian product of per-axis
    quantiles (ceil(sqrt(n_e)) each), thinned back to n_e points by
    removing the points closest to the quantile-space center, so the
    trimmed corners where profile extrema concentrate always survive.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, d = z.shape
    if not 0.0 < frac <= 1.0:
        raise ConfigurationError(f"grid fraction must lie in (0, 1], got {frac}")
    if not 0.0 < trim < 0.5:
        raise ConfigurationError(f"trim must lie in (0, 0.5), got {trim}")
    if frac * n < 5:
        raise ConfigurationError(
            f"grid fraction {frac} of n={n} yields fewer than 5 points"
        )
    n_e = math.ceil(frac * n)
    if d == 1:
        levels = np.linspace(trim, 1.0 - trim, n_e)
        return np.quantile(z[:, 0], levels)[:, None]

    k = math.ceil(math.sqrt(n_e))
    levels = np.linspace(trim, 1.0 - trim, k)
    qx = np.quantile(z[:, 0], levels)
    qy = np.quantile(z[:, 1], levels)
    pts = np.array([(qx[i], qy[j]) for i in range(k) for j in range(k)])
    if pts.shape[0] > n_e:
        lv = np.array([(levels[i], levels[j]) for i in range(k) for j in range(k)])
        dist = np.sum((lv - 0.5) ** 2, axis=1)
        order = np.lexsort((np.arange(pts.shape[0]), dist))  # nearest center first
        drop = set(order[: pts.shape[0] - n_e].tolist())
        keep = [i for i in range(pts.shape[0]) if i not in drop]
        pts = pts[keep]
    return pts


def coefficient_profile(ep: EntropyProfile) -> CoefficientProfile:
    """Pointwise entropy difference with summed variance approximations."""
    if len(ep) == 0:
        raise InferenceError("entropy profile is empty")
    return CoefficientProfile(
        grid=ep.grid, c=ep.h_x - ep.h_y, var_c=ep.var_x + ep.var_y
    )


def locate_extremum(cp: CoefficientProfile, dynamics: str) -> np.ndarray:
    """Grid point of the raw minimum (contracting) or maximum (expanding).

    Ties resolve to the smallest grid index.
    """
    _check_dynamics(dynamics)
    if len(cp) == 0:
        raise InferenceError("coefficient profile is empty")
    idx = int(np.argmin(cp.c)) if dynamics == CONTRACTING else int(np.argmax(cp.c))
    return cp.grid[idx]


def loess_fit_at(
    cp: CoefficientProfile,
    z0,
    span: float = 0.75,
    degree: int = 2,
    v_floor: float | None = VAR_FLOOR_DEFAULT,
):
    """Weighted local polynomial fit of the profile at z0.

    Weights are tricube in distance over the span-quantile radius times
    inverse pointwise variances (floored at ``v_floor`` unless that is
    None).  Returns the fitted value at z0 and the standard error
    propagated from the pointwise variances through the equivalent
    kernel row of the fit.
    """
    if not 0.0 < span <= 1.0:
        raise ConfigurationError(f"span must lie in (0, 1], got {span}")
    if degree < 0:
        raise ConfigurationError(f"degree must be nonnegative, got {degree}")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    m, d = cp.grid.shape
    if z0.shape != (d,):
        raise InferenceError(f"z0 has shape {z0.shape}, expected ({d},)")

    t = cp.grid - z0[None, :]
    phi = _poly_features(t, degree)
    p = phi.shape[1]
    if m < degree + 2:
        raise InferenceError(
            f"need at least degree+2={degree + 2} profile points, got {m}"
        )

    dist = np.sqrt(np.sum(t * t, axis=1))
    k = max(int(math.ceil(span * m)), min(m, p + 1))
    r = np.sort(dist)[k - 1]
    if r <= 0.0:
        r = max(dist.max(), 1.0)

    if v_floor is None:
        vw = cp.var_c.copy()
        if np.all(vw == 0.0):
            inv_var = np.ones(m)
        else:
            with np.errstate(divide="ignore"):
                inv_var = np.where(vw > 0.0, 1.0 / np.maximum(vw, 1e-300), np.inf)
    else:
        inv_var = 1.0 / np.maximum(cp.var_c, v_floor)

    for radius in (r, 1.5 * r):
        u = np.minimum(dist / radius, 1.0)
        tri = (1.0 - u**3) ** 3
        weights = tri * inv_var
        fit = _weighted_fit(phi, cp.c, weights)
        if fit is not None:
            c_hat, lrow = fit
            se = float(np.sqrt(np.sum(lrow * lrow * cp.var_c)))
            return float(c_hat), se
    raise InferenceError(
        f"local design is singular at z0={z0!r} even after widening the window"
    )


def _weighted_fit(phi: np.ndarray, y: np.ndarray, weights: np.ndarray):
    """WLS fit; returns (fit at center, equivalent-kernel row) or None if singular."""
    if np.count_nonzero(weights > 0.0) < phi.shape[1]:
        return None
    wphi = phi * weights[:, None]
    gram = phi.T @ wphi
    try:
        ginv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(ginv)):
        return None
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        return None
    lrow = ginv[0] @ wphi.T  # features are centered at z0, so row 0 evaluates there
    return float(lrow @ y), lrow


def _poly_features(t: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of total degree <= degree in the centered coordinates."""
    m, d = t.shape
    cols = [np.ones(m)]
    if degree >= 1:
        cols.extend(t[:, j] for j in range(d))
    if degree >= 2:
        for total in range(2, degree + 1):
            if d == 1:
                cols.append(t[:, 0] ** total)
            else:
                for a in range(total, -1, -1):
                    cols.append(t[:, 0] ** a * t[:, 1] ** (total - a))
    return np.column_stack(cols)


def directional_test(
    ds: Dataset,
    dynamics: str,
    alpha: float = 0.05,
    *,
    seed: int = 42,
    grid_frac: float = 0.10,
    trim: float = 0.05,
    span: float = 0.75,
    degree: int = 2,
    bw_policy: BandwidthPolicy | Bandwidths | None = None,
    grid_size: int = GRID_SIZE_DEFAULT,
    keep_profiles: bool = True,
) -> AsymmetryResult:
    """Full pipeline: grid, entropies, profile, extremum, local fit, verdict."""
    _check_dynamics(dynamics)
    if not 0.0 < alpha < 0.5:
        raise ConfigurationError(f"alpha must lie in (0, 0.5), got {alpha}")

    try:
        grid = build_eval_grid(ds.z, grid_frac, trim)
    except CondasymError as exc:
        raise _staged(exc, "grid construction")
    try:
        ep = entropy_profile(ds, grid, seed, bw_policy=bw_policy, grid_size=grid_size)
    except CondasymError as exc:
        raise _staged(exc, "entropy profiling")
    try:
        cp = coefficient_profile(ep)
        z0 = locate_extremum(cp, dynamics)
        c_hat, se = loess_fit_at(cp, z0, span=span, degree=degree)
    except CondasymError as exc:
        raise _staged(exc, "profile smoothing")

    zq = float(norm.ppf(1.0 - alpha))
    if dynamics == CONTRACTING:
        bound = c_hat - zq * se
        reject = bound > 0.0
    else:
        bound = c_hat + zq * se
        reject = bound < 0.0
    return AsymmetryResult(
        dynamics=dynamics,
        z0=z0,
        c_hat=c_hat,
        se=se,
        bound=bound,
        alpha=float(alpha),
        reject_null=bool(reject),
        profile=cp if keep_profiles else None,
        entropy=ep if keep_profiles else None,
    )


def _check_dynamics(dynamics: str) -> None:
    if dynamics not in DYNAMICS:
        raise ConfigurationError(
            f"dynamics must be one of {DYNAMICS}, got {dynamics!r}"
        )


def _staged(exc: CondasymError, stage: str) -> CondasymError:
    wrapped = type(exc)(f"[{stage}] {exc}")
    wrapped.__cause__ = exc
    return wrapped
