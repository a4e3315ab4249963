import numpy as np
import pytest
from scipy.stats import norm

from condasym import kcde
from condasym.errors import DataError, ExtrapolationError
from condasym.kernels import Bandwidths, _SQRT_2PI


def uniform_sample(n, seed=777, d=1):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, n), rng.uniform(-1, 1, size=(n, d))


def test_fit_contract_grid_and_fields():
    x, z = uniform_sample(250)
    m = kcde.fit_kcde(x, z, Bandwidths(0.3, 0.3))
    assert m.x_grid.size == 512
    assert m.x_grid[0] == pytest.approx(x.min() - 0.9, rel=1e-12)
    assert m.x_grid[-1] == pytest.approx(x.max() + 0.9, rel=1e-12)
    assert np.all(np.diff(m.x_grid) > 0)
    assert 0.0 < m.clamp_floor <= 1e-6


def test_fit_rejects_empty_and_mismatched():
    with pytest.raises(DataError):
        kcde.fit_kcde(np.array([]), np.empty((0, 1)), Bandwidths(0.3, 0.3))
    with pytest.raises(DataError, match="rows"):
        kcde.fit_kcde(np.ones(10), np.ones((9, 1)), Bandwidths(0.3, 0.3))


def test_raw_density_uniform_matches_truth_and_nw_oracle():
    x, z = uniform_sample(4000)
    bw = Bandwidths(0.05, 0.5)
    m = kcde.fit_kcde(x, z, bw)
    zq = np.array([float(np.median(z))])
    val = kcde.raw_density(m, 0.5, zq)

    # independent degree-0 (Nadaraya-Watson) oracle on the same data
    zz = (z / m.z_scale)[:, 0]
    w = np.exp(-0.5 * ((zz - zq[0] / m.z_scale[0]) / bw.h) ** 2)
    nw = float(
        np.sum(w * np.exp(-0.5 * ((x - 0.5) / bw.b) ** 2) / (bw.b * _SQRT_2PI)) / np.sum(w)
    )
    assert val == pytest.approx(nw, abs=0.05)
    assert val == pytest.approx(1.0, abs=0.15)


def test_constant_covariate_reduces_to_marginal_kde():
    rng = np.random.default_rng(5)
    x = rng.normal(0, 1, 300)
    z = np.full((300, 1), 1.7)
    bw = Bandwidths(0.3, 0.5)
    m = kcde.fit_kcde(x, z, bw)
    grid, vals = kcde.normalized_density(m, np.array([1.7]))
    kde = np.mean(
        np.exp(-0.5 * ((x[:, None] - grid[None, :]) / bw.b) ** 2), axis=0
    ) / (bw.b * _SQRT_2PI)
    rescaled = vals * np.trapezoid(kde, grid)
    assert np.max(np.abs(rescaled - kde)) < 1e-6


def test_raw_density_always_nonnegative():
    x, z = uniform_sample(120, seed=3, d=2)
    m = kcde.fit_kcde(x, z, Bandwidths(0.08, 0.4))
    rng = np.random.default_rng(0)
    for _ in range(25):
        q = rng.uniform(-1, 1, size=2)
        xx = rng.uniform(-0.5, 1.5)
        assert kcde.raw_density(m, xx, q) >= 0.0


def test_normalized_density_integrates_to_one():
    x, z = uniform_sample(200, seed=9)
    m = kcde.fit_kcde(x, z, Bandwidths(0.1, 0.6))
    grid, vals = kcde.normalized_density(m, np.array([0.2]))
    assert np.trapezoid(vals, grid) == pytest.approx(1.0, abs=1e-6)
    assert np.all(vals >= m.clamp_floor)


def test_normalized_density_rescale_idempotent():
    x, z = uniform_sample(200, seed=9)
    m = kcde.fit_kcde(x, z, Bandwidths(0.1, 0.6))
    grid, vals = kcde.normalized_density(m, np.array([0.2]))
    renorm = vals / np.trapezoid(vals, grid)
    assert np.max(np.abs(renorm - vals)) < 1e-12


def test_normalized_density_gaussian_l1():
    rng = np.random.default_rng(777)
    z = rng.uniform(-1, 1, size=(4000, 1))
    x = rng.normal(0, 1, 4000)
    m = kcde.fit_kcde_auto(x, z, seed=5)
    grid, vals = kcde.normalized_density(m, np.array([0.0]))
    l1 = np.trapezoid(np.abs(vals - norm.pdf(grid)), grid)
    assert l1 < 0.1


def test_log_density_matches_curve_and_clamps():
    x, z = uniform_sample(300, seed=21)
    m = kcde.fit_kcde(x, z, Bandwidths(0.1, 0.5))
    zq = np.array([0.1])
    grid, vals = kcde.normalized_density(m, zq)
    interior = 0.47
    direct = np.interp(interior, grid, vals)
    assert kcde.log_density_at(m, interior, zq) == pytest.approx(np.log(direct), abs=1e-3)
    floor = np.log(m.clamp_floor)
    assert kcde.log_density_at(m, grid[0] - 1.0, zq) == floor
    assert kcde.log_density_at(m, grid[-1] + 1.0, zq) == floor
    assert np.max(kcde.log_density_at(m, grid, zq)) <= np.log(vals.max()) + 1e-12


def test_extrapolation_error_far_outside_support():
    x, z = uniform_sample(100, seed=2)
    m = kcde.fit_kcde(x, z, Bandwidths(0.1, 0.05))
    with pytest.raises(ExtrapolationError):
        kcde.raw_density(m, 0.5, np.array([2000.0]))


def test_consistency_trend_gaussian_family():
    # nested prefixes of one fixed draw; curve error at z=0 must not grow
    rng = np.random.default_rng(4)
    z = rng.uniform(-1, 1, size=(4000, 1))
    x = rng.normal(z[:, 0], 1.0)
    maes = []
    for n in (250, 1000, 4000):
        m = kcde.fit_kcde_auto(x[:n], z[:n], seed=4)
        grid, vals = kcde.normalized_density(m, np.array([0.0]))
        mask = np.abs(grid) <= 3.0
        maes.append(float(np.mean(np.abs(vals[mask] - norm.pdf(grid[mask])))))
    assert maes[1] <= maes[0] + 1e-12
    assert maes[2] <= maes[1] + 1e-12
