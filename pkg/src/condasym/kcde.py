"""Kernel conditional density estimation with an exponential link.

For a query (x, z) the estimate exp(theta0) comes from minimizing the
kernel-weighted squared loss

    sum_i ( K_b(X_i - x) - exp(theta0 + theta1' (Z_i - z)) )^2 * W_h(Z_i - z)

by Gauss-Newton, started at the degree-0 (Nadaraya-Watson) value.  The
exponential link keeps every estimate nonnegative.  Density curves are
rescaled on a fixed grid so they integrate to one, and floored at a tiny
positive clamp so logarithms stay finite.

Covariate columns are rescaled to unit standard deviation inside the
estimator, so a single ``h`` applies to either one or two covariates;
``Bandwidths.h`` is expressed on that rescaled scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateDensityError, ExtrapolationError
from .kernels import BandwidthPolicy, Bandwidths, _as_z_matrix, _SQRT_2PI

GRID_SIZE_DEFAULT = 512
CLAMP_FLOOR_DEFAULT = 1e-12

_GRAD_TOL = 1e-8
_MAX_ITER = 50
_MAX_HALVINGS = 10
_WEIGHT_FLOOR = 1e-300
_EXP_CLIP = 350.0


@dataclass
class CondDensityModel:
    """Fitted conditional density estimator (immutable after fit)."""

    train_x: np.ndarray
    train_z: np.ndarray  # rescaled to unit column sd
    z_scale: np.ndarray
    bw: Bandwidths
    clamp_floor: float
    x_grid: np.ndarray

    @property
    def n(self) -> int:
        return self.train_x.size

    @property
    def d(self) -> int:
        return self.train_z.shape[1]


def fit_kcde(
    x,
    z,
    bw: Bandwidths,
    *,
    grid_size: int = GRID_SIZE_DEFAULT,
    clamp_floor: float = CLAMP_FLOOR_DEFAULT,
) -> CondDensityModel:
    """Store training data and evaluation configuration.

    No numerical work happens here beyond laying out the normalization
    grid, which spans the response range widened by three bandwidths.
    """
    x = np.asarray(x, dtype=float)
    z = _as_z_matrix(z)
    if x.size == 0:
        raise DataError("cannot fit a conditional density on an empty sample")
    if x.size != z.shape[0]:
        raise DataError(f"x has {x.size} rows but z has {z.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise DataError("training data contain non-finite values")
    if not 0.0 < clamp_floor <= 1e-6:
        raise DataError(f"clamp_floor must lie in (0, 1e-6], got {clamp_floor!r}")
    if grid_size < 8:
        raise DataError(f"normalization grid needs at least 8 points, got {grid_size}")

    scale = np.std(z, axis=0, ddof=1) if z.shape[0] > 1 else np.ones(z.shape[1])
    scale = np.where(scale > 0.0, scale, 1.0)
    lo = float(np.min(x)) - 3.0 * bw.b
    hi = float(np.max(x)) + 3.0 * bw.b
    return CondDensityModel(
        train_x=x,
        train_z=z / scale[None, :],
        z_scale=np.asarray(scale, dtype=float),
        bw=bw,
        clamp_floor=clamp_floor,
        x_grid=np.linspace(lo, hi, grid_size),
    )


def fit_kcde_auto(
    x,
    z,
    seed: int = 0,
    *,
    policy: BandwidthPolicy | Bandwidths | None = None,
    grid_size: int = GRID_SIZE_DEFAULT,
    clamp_floor: float = CLAMP_FLOOR_DEFAULT,
) -> CondDensityModel:
    """Fit with bandwidths selected on the internally rescaled covariates."""
    z = _as_z_matrix(z)
    if isinstance(policy, Bandwidths):
        bw = policy
    else:
        if policy is None:
            policy = BandwidthPolicy()
        scale = np.std(z, axis=0, ddof=1)
        scale = np.where(scale > 0.0, scale, 1.0)
        bw = policy.select(x, z / scale[None, :], seed)
    return fit_kcde(x, z, bw, grid_size=grid_size, clamp_floor=clamp_floor)


def raw_density(model: CondDensityModel, x: float, z) -> float:
    """Unnormalized estimate exp(theta0_hat) at a single query point."""
    return float(_fit_curve(model, z, np.array([float(x)]))[0])


def normalized_density(model: CondDensityModel, z):
    """Density curve over the model grid, rescaled to integrate to one.

    Returns ``(x_grid, values)``.  Values are floored at the clamp and
    renormalized (at most two passes), so the trapezoid integral closes
    to one within 1e-6 and every value stays positive.
    """
    values = _fit_curve(model, z, model.x_grid)
    if np.all(values <= model.clamp_floor):
        raise DegenerateDensityError(
            f"density collapsed below {model.clamp_floor:g} everywhere at z={np.asarray(z)!r}"
        )
    total = np.trapezoid(values, model.x_grid)
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateDensityError(
            f"density normalization failed (integral {total!r}) at z={np.asarray(z)!r}"
        )
    values = values / total
    for _ in range(2):
        if values.min() >= model.clamp_floor:
            break
        values = np.maximum(values, model.clamp_floor)
        values = values / np.trapezoid(values, model.x_grid)
    values = np.maximum(values, model.clamp_floor)
    return model.x_grid, values


def log_density_at(model: CondDensityModel, x, z):
    """Log of the normalized density, linearly interpolated on the grid.

    Queries outside the grid (and any interpolated value below the
    clamp) return log(clamp_floor).  ``x`` may be a scalar or an array;
    the curve at ``z`` is computed once per call.
    """
    grid, values = normalized_density(model, z)
    floor = model.clamp_floor
    dens = np.interp(np.asarray(x, dtype=float), grid, values, left=floor, right=floor)
    out = np.log(np.maximum(dens, floor))
    return out if out.ndim else float(out)


def _fit_curve(model: CondDensityModel, z, xs: np.ndarray) -> np.ndarray:
    """Gauss-Newton estimates exp(theta0) at every x in ``xs`` for one z.

    All evaluation points share the covariate weights, so the solver
    runs batched: one parameter vector per x, vectorized normal
    equations, step halving on loss increases, and the Nadaraya-Watson
    value both as initializer and as fallback for any column that fails.

    The intercept is profiled out: for fixed slope theta1 the optimal
    scale s = exp(theta0) solves the loss in closed form (variable
    projection), so the iteration runs on theta1 alone, starting from
    theta1 = 0 where the profiled scale equals the Nadaraya-Watson
    value.  The stationary points are those of the joint problem, and
    dL/dtheta0 vanishes identically along the path, so the gradient
    test below covers the full parameter vector.
    """
    zq = np.atleast_1d(np.asarray(z, dtype=float))
    if zq.shape != (model.d,):
        raise DataError(f"query z has shape {zq.shape}, expected ({model.d},)")
    zq = zq / model.z_scale

    b, h = model.bw.b, model.bw.h
    dz = (model.train_z - zq[None, :]) / h
    logw = -0.5 * np.sum(dz * dz, axis=1) - model.d * np.log(h * _SQRT_2PI)
    w = np.exp(logw)
    if not np.any(w > _WEIGHT_FLOOR):
        raise ExtrapolationError(
            f"query z={np.asarray(z)!r} lies outside the covariate support "
            "(all kernel weights underflow)"
        )

    n, G = model.train_x.size, xs.size
    t = (model.train_x[:, None] - xs[None, :]) / b
    Y = np.exp(-0.5 * t * t) / (b * _SQRT_2PI)  # (n, G) kernel targets

    wcol = w[:, None]
    nw = (w @ Y) / w.sum()  # (G,) Nadaraya-Watson start / fallback
    floor = model.clamp_floor

    u = model.train_z - zq[None, :]  # (n, d) slope features
    d = u.shape[1]
    pair_idx = [(a, c) for a in range(d) for c in range(a, d)]
    V = np.stack([u[:, a] * u[:, c] for a, c in pair_idx], axis=1)  # (n, pairs)

    wcolY = wcol * Y
    wY2 = np.einsum("ig,ig->g", wcolY, Y)  # (G,) sum w Y^2, fixed

    out = np.full(G, np.nan)
    # Packed working set; columns retire into ``out`` as they converge.
    cols = np.arange(G)
    th = np.zeros((G, d))
    wcolYp = wcolY
    Yp = Y
    wY2p = wY2

    # At theta1 = 0 the local exponential is identically one, so the
    # profiled scale is the Nadaraya-Watson value and every reduction
    # has a closed form with no exponentials.
    B0 = w.sum()
    s = nw.copy()
    loss = np.maximum(wY2 - s * s * B0, 0.0)
    red = _StepReductions(
        B=np.full(G, B0),
        s=s,
        uT_wPY=u.T @ wcolY,
        uT_wPP=np.repeat((u.T @ w)[:, None], G, axis=1),
        VT_wPY=V.T @ wcolY,
        VT_wPP=np.repeat((V.T @ w)[:, None], G, axis=1),
    )

    delta, retire = _newton_delta(red, loss, d, pair_idx)
    if retire.any():
        out[cols[retire]] = red.s[retire]
        keep = ~retire
        cols, th, delta = cols[keep], th[keep], delta[keep]
        loss, scale = loss[keep], red.s[keep]
        Yp, wcolYp, wY2p = Yp[:, keep], wcolYp[:, keep], wY2p[keep]
    else:
        scale = red.s.copy()

    alpha = np.ones(cols.size)
    halvings = np.zeros(cols.size, dtype=np.int64)
    steps = np.zeros(cols.size, dtype=np.int64)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _iterate_curve(
            out, cols, th, delta, alpha, halvings, steps, loss, scale,
            u, V, wcol, Yp, wcolYp, wY2p, nw, floor, d, pair_idx,
        )
    bad = ~np.isfinite(out)
    if bad.any():
        out[bad] = np.maximum(nw[bad], floor)
    return np.maximum(out, 0.0)


def _iterate_curve(
    out, cols, th, delta, alpha, halvings, steps, loss, scale,
    u, V, wcol, Yp, wcolYp, wY2p, nw, floor, d, pair_idx,
):
    for _ in range(_MAX_ITER + _MAX_HALVINGS):
        if cols.size == 0:
            break
        trial = th + alpha[:, None] * delta
        # One fused pass: trial loss via sum-of-squares algebra plus the
        # gradient/Hessian reductions reused when the step is accepted.
        P1 = np.exp(np.minimum(u @ trial.T, _EXP_CLIP))  # (n, K)
        wPP = (wcol * P1) * P1
        wPY = wcolYp * P1
        B = np.einsum("ig->g", wPP)
        sY = np.einsum("ig->g", wPY)
        # Columns whose exponential underflowed everywhere carry no
        # density; give them a zero scale rather than a blown ratio.
        s_t = np.where(B > 1e-200, sY / np.maximum(B, _WEIGHT_FLOOR), 0.0)
        B = np.maximum(B, _WEIGHT_FLOOR)
        loss_t = wY2p - 2.0 * s_t * sY + s_t * s_t * B

        accept = loss_t < loss
        reject = ~accept
        th[accept] = trial[accept]
        loss[accept] = loss_t[accept]
        scale[accept] = s_t[accept]
        steps[accept] += 1
        alpha[accept] = 1.0
        alpha[reject] /= 2.0
        halvings[reject] += 1

        red = _StepReductions(
            B=B, s=s_t, uT_wPY=u.T @ wPY, uT_wPP=u.T @ wPP,
            VT_wPY=V.T @ wPY, VT_wPP=V.T @ wPP,
        )
        new_delta, flat = _newton_delta(red, loss_t, d, pair_idx)
        delta[accept] = new_delta[accept]

        # Retire columns: gradient below tolerance or numerically flat
        # (only meaningful at accepted iterates), halving budget spent,
        # or iteration cap reached.
        done = accept & flat
        done |= reject & (halvings >= _MAX_HALVINGS)
        done |= steps >= _MAX_ITER
        if done.any():
            out[cols[done]] = scale[done]
            keep = ~done
            cols, th, delta = cols[keep], th[keep], delta[keep]
            loss, scale = loss[keep], scale[keep]
            alpha, halvings, steps = alpha[keep], halvings[keep], steps[keep]
            Yp, wcolYp, wY2p = Yp[:, keep], wcolYp[:, keep], wY2p[keep]

    if cols.size:
        out[cols] = scale
    return out


class _StepReductions:
    """Per-column reductions shared by the gradient and both Hessians."""

    __slots__ = ("B", "s", "uT_wPY", "uT_wPP", "VT_wPY", "VT_wPP")

    def __init__(self, B, s, uT_wPY, uT_wPP, VT_wPY, VT_wPP):
        self.B = B
        self.s = s
        self.uT_wPY = uT_wPY
        self.uT_wPP = uT_wPP
        self.VT_wPY = VT_wPY
        self.VT_wPP = VT_wPP


def _newton_delta(red: _StepReductions, loss: np.ndarray, d: int, pair_idx):
    """Newton step on the profiled objective, with Gauss-Newton fallback.

    Returns the step and a mask of columns that are numerically
    stationary (gradient within tolerance, or predicted decrease below
    the float resolution of the loss).
    """
    s, B = red.s, red.B
    grad = -2.0 * s[None, :] * (red.uT_wPY - s[None, :] * red.uT_wPP)  # (d, K)
    grad_sq = np.sum(grad * grad, axis=0)
    cvec = red.uT_wPY - 2.0 * s[None, :] * red.uT_wPP
    K = s.size
    Hn = np.empty((K, d, d))
    Hg = np.empty((K, d, d))
    for k, (a, c) in enumerate(pair_idx):
        # Schur-complement Hessian of the profiled loss, and the plain
        # Gauss-Newton matrix as a descent-direction fallback.
        hn = 2.0 * s * (2.0 * s * red.VT_wPP[k] - red.VT_wPY[k]) - 2.0 * cvec[a] * cvec[c] / B
        hg = 2.0 * s * s * red.VT_wPP[k]
        Hn[:, a, c] = hn
        Hn[:, c, a] = hn
        Hg[:, a, c] = hg
        Hg[:, c, a] = hg
    for H in (Hn, Hg):
        tr = sum(H[:, a, a] for a in range(d))
        H[:, np.arange(d), np.arange(d)] += (1e-13 * (1.0 + tr / d))[:, None]
    delta = _solve_steps(Hn, grad)
    desc = np.einsum("kd,dk->k", delta, grad)
    bad = ~np.isfinite(desc) | (desc >= 0.0) | ~np.all(np.isfinite(delta), axis=1)
    if bad.any():
        delta[bad] = _solve_steps(Hg[bad], grad[:, bad])
        desc = np.einsum("kd,dk->k", delta, grad)
    stationary = grad_sq <= _GRAD_TOL * _GRAD_TOL
    stationary |= ~(desc < -1e-14 * (1.0 + np.abs(loss)))
    return delta, stationary


def _solve_steps(H: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Batched solve of H delta = -grad with a least-squares fallback."""
    try:
        return np.linalg.solve(H, -grad.T[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.stack(
            [np.linalg.lstsq(H[k], -grad[:, k], rcond=None)[0] for k in range(H.shape[0])]
        )
