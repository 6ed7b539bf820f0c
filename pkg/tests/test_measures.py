"""Grids, densities, and quantile functions."""
import numpy as np
import pytest

from cnot import (
    DiscreteDensity,
    Grid,
    Interval,
    QuantileFn,
    density_from_values,
    density_to_quantile,
    gaussian_truncated_density,
    pushforward,
    quantile_to_density,
    two_bumps_density,
    uniform_density,
)


def test_interval_validation():
    """Intervals need finite endpoints with hi > lo."""
    with pytest.raises(ValueError):
        Interval(1.0, 1.0)
    with pytest.raises(ValueError):
        Interval(2.0, 1.0)
    with pytest.raises(ValueError):
        Interval(0.0, float("inf"))
    assert Interval(0.0, 2.0).length == 2.0


def test_grid_geometry():
    """Nodes are cell midpoints and edges partition the interval."""
    grid = Grid(Interval(1.0, 3.0), 4)
    assert grid.delta == 0.5
    assert np.allclose(grid.nodes, [1.25, 1.75, 2.25, 2.75])
    assert np.allclose(grid.edges, [1.0, 1.5, 2.0, 2.5, 3.0])
    assert list(grid.cell_index(np.array([1.0, 1.49, 2.5, 3.0]))) == [0, 0, 3, 3]
    with pytest.raises(ValueError):
        Grid(Interval(0.0, 1.0), 1)


def test_density_validation():
    """Densities must be finite, non-negative, and integrate to one."""
    grid = Grid(Interval(0.0, 1.0), 8)
    with pytest.raises(ValueError):
        DiscreteDensity(grid, np.full(8, 2.0))
    with pytest.raises(ValueError):
        DiscreteDensity(grid, -np.full(8, 1.0))
    with pytest.raises(ValueError):
        DiscreteDensity(grid, np.full(4, 1.0))
    d = DiscreteDensity(grid, np.full(8, 1.0))
    assert d.masses.sum() == pytest.approx(1.0, abs=1e-15)


def test_density_from_values_normalizes():
    """Raw values are rescaled to unit mass; zero mass is rejected."""
    grid = Grid(Interval(0.0, 2.0), 10)
    d = density_from_values(grid, np.full(10, 7.0))
    assert d.values.sum() * grid.delta == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        density_from_values(grid, np.zeros(10))
    with pytest.raises(ValueError):
        density_from_values(grid, np.full(10, -1.0))


def test_builtin_densities_unit_mass():
    """The shipped density constructors all integrate to one."""
    grid = Grid(Interval(3.0, 7.0), 33)
    for d in (
        uniform_density(grid),
        gaussian_truncated_density(grid, 5.0, 0.8),
        two_bumps_density(grid),
    ):
        assert d.masses.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(d.values >= 0.0)


def test_gaussian_truncated_rejects_bad_sigma():
    """Non-positive sigma is an error."""
    grid = Grid(Interval(0.0, 1.0), 8)
    with pytest.raises(ValueError):
        gaussian_truncated_density(grid, 0.5, 0.0)


def test_cdf_quantile_inverse():
    """CDF and quantile are inverse on a seeded random density."""
    rng = np.random.default_rng(0)
    grid = Grid(Interval(-1.0, 2.0), 64)
    d = density_from_values(grid, rng.uniform(0.5, 1.5, 64))
    p = np.linspace(0.01, 0.99, 41)
    x = d.quantile(p)
    assert np.max(np.abs(d.cdf(x) - p)) < 1e-12
    assert np.all(np.diff(x) > 0.0)


def test_quantile_endpoint_conventions():
    """The quantile hits the support edges at p = 0 and p = 1."""
    grid = Grid(Interval(0.0, 1.0), 8)
    values = np.array([0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 0.0, 0.0])
    d = density_from_values(grid, values)
    assert d.quantile(np.array([0.0]))[0] == pytest.approx(0.25, abs=1e-12)
    assert d.quantile(np.array([1.0]))[0] == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(ValueError):
        d.quantile(np.array([1.5]))


def test_uniform_quantile_is_identity():
    """Uniform density on [0,1] has quantile values j/(m-1) exactly."""
    grid = Grid(Interval(0.0, 1.0), 16)
    G = density_to_quantile(uniform_density(grid), 4)
    assert np.allclose(G.values, [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], atol=1e-15)
    G = density_to_quantile(uniform_density(grid), 257)
    assert np.max(np.abs(G.values - np.linspace(0.0, 1.0, 257))) < 1e-12


def test_quantilefn_validation():
    """Quantile values must be finite, sorted, and inside the interval rules."""
    iv = Interval(0.0, 1.0)
    with pytest.raises(ValueError):
        QuantileFn(np.array([0.5, 0.2]), iv)
    with pytest.raises(ValueError):
        QuantileFn(np.array([0.5]), iv)
    with pytest.raises(ValueError):
        QuantileFn(np.array([0.1, 0.9]), iv, support_mode="fixed_endpoints")
    with pytest.raises(ValueError):
        QuantileFn(np.array([0.1, 0.9]), iv, support_mode="pinned")
    G = QuantileFn(np.array([0.0, 0.4, 1.0]), iv, support_mode="fixed_endpoints")
    assert G.m == 3
    assert np.allclose(G.probabilities, [0.0, 0.5, 1.0])


def test_quantile_density_roundtrip():
    """density -> quantile -> density converges in sup norm as m grows."""
    rng = np.random.default_rng(3)
    grid = Grid(Interval(0.0, 2.0), 32)
    d = density_from_values(grid, rng.uniform(0.5, 1.5, 32))
    errs = []
    for m in (256, 1024, 4096):
        back = quantile_to_density(density_to_quantile(d, m), grid)
        errs.append(np.max(np.abs(back.values - d.values)))
    assert errs[0] < 0.05
    assert errs[-1] < errs[0]
    assert errs[-1] < 2e-3


def test_quantile_to_density_uniform_exact():
    """The identity quantile pushes the uniform law to the uniform density."""
    grid = Grid(Interval(0.0, 1.0), 16)
    G = QuantileFn(np.linspace(0.0, 1.0, 33), grid.interval)
    d = quantile_to_density(G, grid)
    assert np.max(np.abs(d.values - 1.0)) < 1e-12


def test_quantile_to_density_rejects_outside():
    """Quantile values outside the target interval are an error."""
    grid = Grid(Interval(0.0, 1.0), 8)
    with pytest.raises(ValueError):
        quantile_to_density(QuantileFn(np.array([0.0, 2.0]), Interval(0.0, 2.0)), grid)


def test_pushforward_identity_and_translation():
    """Identity keeps the density; a shift moves mass where expected."""
    grid = Grid(Interval(0.0, 1.0), 64)
    rng = np.random.default_rng(5)
    d = density_from_values(grid, rng.uniform(0.5, 1.5, 64))
    same = pushforward(grid.nodes, d)
    assert np.max(np.abs(same.values - d.values)) < 1e-10
    shifted = pushforward(np.clip(grid.nodes + 0.25, 0.0, 1.0), d)
    assert shifted.masses.sum() == pytest.approx(1.0, abs=1e-12)
    lhs = shifted.cdf(np.array([0.5 + 0.25]))[0]
    assert lhs == pytest.approx(d.cdf(np.array([0.5]))[0], abs=0.02)
    with pytest.raises(ValueError):
        pushforward(grid.nodes + 5.0, d)


def test_pushforward_conserves_mass_on_random_maps():
    """Seeded random monotone maps conserve mass exactly."""
    grid = Grid(Interval(0.0, 1.0), 32)
    d = uniform_density(grid)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        T = np.sort(rng.uniform(0.0, 1.0, 32))
        out = pushforward(T, d)
        assert out.masses.sum() == pytest.approx(1.0, abs=1e-12)
