"""Collider detection: paired directional tests with a Bonferroni split.

A collider X -> COL <- Y is confirmed when both pathway tests reject,
each run at half the overall level: X -> COL treating Y as the
covariate, and Y -> COL treating X as the covariate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asymmetry import AsymmetryResult, CoefficientProfile, directional_test
from .data import make_dataset
from .errors import CondasymError, ConfigurationError
from .kernels import BandwidthPolicy, Bandwidths

ROLE_X_TO_COL = 1
ROLE_Y_TO_COL = 2


@dataclass(frozen=True)
class ColliderVerdict:
    test_x: AsymmetryResult | None  # X -> COL | Y
    test_y: AsymmetryResult | None  # Y -> COL | X
    alpha_overall: float
    alpha_each: float
    confirmed: bool
    dynamics: str
    errors: tuple = ()


def collider_test(
    x,
    y,
    col,
    dynamics: str,
    alpha_overall: float = 0.05,
    seed: int = 42,
    *,
    seeds: tuple[int, int] | None = None,
    bw_policy: BandwidthPolicy | Bandwidths | None = None,
    grid_frac: float = 0.10,
    span: float = 0.75,
    keep_profiles: bool = True,
) -> ColliderVerdict:
    """Run both pathway tests and combine them at the Bonferroni level.

    Sub-test split seeds derive from (seed, role) so the two tests use
    independent partitions; pass ``seeds`` to fix them explicitly.  A
    sub-test failure is recorded and yields confirmed=False.
    """
    if not 0.0 < alpha_overall < 0.5:
        raise ConfigurationError(
            f"alpha_overall must lie in (0, 0.5), got {alpha_overall}"
        )
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    col = np.asarray(col, dtype=float)
    alpha_each = alpha_overall / 2.0
    if seeds is None:
        seeds = (_role_seed(seed, ROLE_X_TO_COL), _role_seed(seed, ROLE_Y_TO_COL))

    results = []
    errors = []
    for cause, covariate, sub_seed, label in (
        (x, y, seeds[0], "x->col|y"),
        (y, x, seeds[1], "y->col|x"),
    ):
        ds = make_dataset(cause, col, covariate[:, None], standardize=False)
        try:
            res = directional_test(
                ds,
                dynamics,
                alpha_each,
                seed=sub_seed,
                grid_frac=grid_frac,
                span=span,
                bw_policy=bw_policy,
                keep_profiles=keep_profiles,
            )
        except CondasymError as exc:
            errors.append(f"{label}: {exc}")
            res = None
        results.append(res)

    confirmed = all(r is not None and r.reject_null for r in results)
    return ColliderVerdict(
        test_x=results[0],
        test_y=results[1],
        alpha_overall=float(alpha_overall),
        alpha_each=alpha_each,
        confirmed=bool(confirmed),
        dynamics=dynamics,
        errors=tuple(errors),
    )


def collider_noise_bound(
    c_profile_x: CoefficientProfile,
    fisher_x,
    c_profile_y: CoefficientProfile,
    fisher_y,
) -> float:
    """Largest tolerable noise variance for the joint collider decision.

    Takes the minimum of (exp(2 c) - 1) / I over both pathway profiles,
    floored at zero.  Fisher information values are caller-supplied and
    must be positive, aligned with each profile's grid.
    """
    worst = np.inf
    for cp, fisher in ((c_profile_x, fisher_x), (c_profile_y, fisher_y)):
        fisher = np.asarray(fisher, dtype=float)
        if fisher.shape != (len(cp),):
            raise ConfigurationError(
                f"Fisher sequence has shape {fisher.shape}, expected ({len(cp)},)"
            )
        if np.any(fisher <= 0.0) or not np.all(np.isfinite(fisher)):
            raise ConfigurationError("Fisher information values must be positive and finite")
        worst = min(worst, float(np.min((np.exp(2.0 * cp.c) - 1.0) / fisher)))
    return max(0.0, worst)


def _role_seed(seed: int, role: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFF, 0xC01, role])
    return int(ss.generate_state(1)[0])
