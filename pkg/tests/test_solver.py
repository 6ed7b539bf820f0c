"""Tests for the quantile objective and the projected-Newton equilibrium solver."""

import numpy as np
import pytest

from cnot import (
    CongestionSpec,
    CostSpec,
    EnergyModel,
    Grid,
    InteractionKernel,
    Interval,
    PotentialSpec,
    Scenario,
    SolverParams,
    best_response_iterate,
    density_to_quantile,
    gaussian_truncated_density,
    minimize_quantile,
    objective_eval,
    objective_gradient,
    project_monotone,
    uniform_density,
)


def _uniform_scenario(n=64, m=129, convention="shifted", support_mode="free"):
    grid = Grid(Interval(0.0, 1.0), n)
    model = EnergyModel(grid=grid, congestion=CongestionSpec.entropy(convention))
    return Scenario(
        mu=uniform_density(grid),
        cost=CostSpec.quadratic(),
        model=model,
        m=m,
        support_mode=support_mode,
    )


def _congested_scenario(n=64, m=256):
    grid = Grid(Interval(0.0, 1.0), n)
    model = EnergyModel(
        grid=grid,
        congestion=CongestionSpec.entropy(),
        kernel=InteractionKernel.quadratic_distance(2.0),
    )
    return Scenario(
        mu=gaussian_truncated_density(grid, 0.5, 0.15),
        cost=CostSpec.quadratic(),
        model=model,
        m=m,
    )


def test_scenario_validation():
    """Mismatched grids, tiny m, flat source, and bad support modes are rejected."""
    grid = Grid(Interval(0.0, 1.0), 16)
    other = Grid(Interval(0.0, 1.0), 32)
    model = EnergyModel(grid=grid, congestion=CongestionSpec.entropy())
    mu = uniform_density(grid)
    with pytest.raises(ValueError, match="share a grid"):
        Scenario(mu=uniform_density(other), cost=CostSpec.quadratic(), model=model)
    with pytest.raises(ValueError, match="m must be"):
        Scenario(mu=mu, cost=CostSpec.quadratic(), model=model, m=1)
    with pytest.raises(ValueError, match="support_mode"):
        Scenario(mu=mu, cost=CostSpec.quadratic(), model=model, support_mode="clamped")
    thin = np.ones(16)
    thin[3] = 0.0
    from cnot import DiscreteDensity

    values = thin / (thin.sum() * grid.delta)
    with pytest.raises(ValueError, match="strictly positive"):
        Scenario(mu=DiscreteDensity(grid, values), cost=CostSpec.quadratic(), model=model)


def test_solver_params_validation():
    """Step, tolerance, and line-search constants must be positive / in (0, 1)."""
    with pytest.raises(ValueError):
        SolverParams(max_iters=0)
    with pytest.raises(ValueError):
        SolverParams(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolverParams(step0=-1.0)
    with pytest.raises(ValueError):
        SolverParams(beta=1.0)
    with pytest.raises(ValueError):
        SolverParams(sigma=0.0)


def test_objective_identity_quantile_exact():
    """At the source quantile the objective is exactly the congestion integral."""
    for convention, expected in (("shifted", -1.0), ("plain", 0.0)):
        scenario = _uniform_scenario(convention=convention)
        H = density_to_quantile(scenario.mu, scenario.m)
        assert objective_eval(scenario, H) == pytest.approx(expected, abs=1e-12)


def test_objective_contracted_quantile_closed_form():
    """J at G = p/2 matches the hand-derived transport + entropy value."""
    scenario = _uniform_scenario(m=257)
    m = scenario.m
    p = np.linspace(0.0, 1.0, m)
    # transport: (1/m) sum (p/2)^2 / 2 = (2m-1) / (48 (m-1));
    # congestion: density 2 on [0, 1/2], so F(2)/2 = log 2 - 1 for s log s - s
    expected = (2 * m - 1) / (48.0 * (m - 1)) + np.log(2.0) - 1.0
    assert objective_eval(scenario, p / 2.0) == pytest.approx(expected, rel=1e-12)


def test_objective_gradient_matches_finite_differences():
    """Analytic gradient agrees with central differences of the objective."""
    grid = Grid(Interval(0.0, 1.0), 32)
    model = EnergyModel(
        grid=grid,
        congestion=CongestionSpec.entropy(),
        kernel=InteractionKernel.quadratic_distance(1.5),
        potential=PotentialSpec.poly([0.0, 0.0, 1.0], declared_convex=True),
    )
    scenario = Scenario(
        mu=gaussian_truncated_density(grid, 0.4, 0.2),
        cost=CostSpec.quadratic(),
        model=model,
        m=33,
    )
    rng = np.random.default_rng(7)
    for _ in range(5):
        raw = np.sort(rng.uniform(0.05, 0.95, scenario.m))
        raw += np.linspace(0.0, 1e-3, scenario.m)  # keep gaps bounded away from 0
        grad = objective_gradient(scenario, raw)
        fd = np.zeros_like(grad)
        h = 1e-7
        for k in range(scenario.m):
            e = np.zeros(scenario.m)
            e[k] = h
            fd[k] = (objective_eval(scenario, raw + e) - objective_eval(scenario, raw - e)) / (
                2.0 * h
            )
        rel = np.max(np.abs(fd - grad)) / (1.0 + np.max(np.abs(grad)))
        assert rel < 1e-5


def test_objective_rejects_bad_quantiles():
    """Decreasing values raise; zero gaps give an infinite objective."""
    scenario = _uniform_scenario()
    m = scenario.m
    down = np.linspace(1.0, 0.0, m)
    with pytest.raises(ValueError, match="non-decreasing"):
        objective_eval(scenario, down)
    flat = np.full(m, 0.5)
    assert objective_eval(scenario, flat) == np.inf
    with pytest.raises(ValueError, match="strictly increasing"):
        objective_gradient(scenario, flat)
    with pytest.raises(ValueError, match="m >= 2"):
        objective_eval(scenario, [0.5])


def test_project_monotone_pairwise_average():
    """The isotonic projection pools a descending pair to its average."""
    iv = Interval(0.0, 1.0)
    out = project_monotone([1.0, 0.0], iv)
    assert np.allclose(out.values, [0.5, 0.5])
    out = project_monotone([-2.0, 0.3, 4.0], iv)
    assert np.allclose(out.values, [0.0, 0.3, 1.0])
    pinned = project_monotone([0.2, 0.5, 0.9], iv, support_mode="fixed_endpoints")
    assert pinned.values[0] == 0.0 and pinned.values[-1] == 1.0
    with pytest.raises(ValueError, match="finite"):
        project_monotone([0.0, np.nan], iv)
    with pytest.raises(ValueError, match="support_mode"):
        project_monotone([0.0, 1.0], iv, support_mode="weird")


def test_minimize_uniform_source_is_fixed_point():
    """With a uniform source and pure entropy the uniform density is optimal."""
    result = minimize_quantile(_uniform_scenario(n=128, m=513))
    assert result.converged
    assert result.residual_eq < 1e-8
    assert np.max(np.abs(result.nu.values - 1.0)) < 1e-6
    assert result.J_value == pytest.approx(-1.0, abs=1e-10)
    assert result.iterations <= 3


def test_minimize_two_starts_agree():
    """Different initial quantiles reach the same minimizer."""
    scenario = _congested_scenario()
    params = SolverParams(grad_tol=1e-10)
    a = minimize_quantile(scenario, params)
    G0 = density_to_quantile(uniform_density(scenario.grid), scenario.m)
    b = minimize_quantile(scenario, params, G0=G0)
    assert a.converged and b.converged
    assert a.J_value == pytest.approx(b.J_value, abs=1e-9)
    assert np.max(np.abs(a.nu.values - b.nu.values)) < 1e-4


def test_minimize_certificate_fields():
    """The result carries a coherent certificate: residuals, M, and metadata."""
    scenario = _congested_scenario(n=128, m=1024)
    result = minimize_quantile(scenario, SolverParams(grad_tol=1e-9))
    assert result.converged
    assert result.residual_eq < 1e-3
    assert result.residual_sup < 1e-3
    assert np.isfinite(result.M)
    assert result.metadata["projected_gradient"] <= 1e-9
    assert result.metadata["congestion_kind"] == "entropy"
    assert result.metadata["stalled"] is False
    # mass is conserved through the quantile -> density conversion
    assert result.nu.masses.sum() == pytest.approx(1.0, abs=1e-9)


def test_minimize_g0_validation():
    """An initial quantile of the wrong resolution is rejected."""
    scenario = _uniform_scenario(m=65)
    with pytest.raises(ValueError, match="resolution m"):
        minimize_quantile(scenario, G0=np.linspace(0.0, 1.0, 64))
    with pytest.raises(ValueError, match="non-positive gaps"):
        minimize_quantile(scenario, G0=np.full(65, 0.5))


def test_minimize_max_iters_reports_nonconvergence():
    """Hitting the iteration cap reports converged=False instead of raising."""
    scenario = _congested_scenario()
    result = minimize_quantile(scenario, SolverParams(max_iters=1, grad_tol=1e-14))
    assert not result.converged
    assert result.iterations == 1


def test_minimize_fixed_endpoints_pins_support():
    """fixed_endpoints keeps the quantile endpoints at the interval ends."""
    scenario = _uniform_scenario(n=64, m=129, support_mode="fixed_endpoints")
    result = minimize_quantile(scenario)
    assert result.converged
    assert result.G.values[0] == scenario.interval.lo
    assert result.G.values[-1] == scenario.interval.hi


def test_minimize_without_monotone_projection():
    """On an interior problem the solver also works without the isotonic step."""
    scenario = _uniform_scenario(n=64, m=129)
    result = minimize_quantile(scenario, SolverParams(monotone_projection=False))
    assert result.converged
    assert np.all(np.diff(result.G.values) > 0.0)
    assert np.max(np.abs(result.nu.values - 1.0)) < 1e-5


def test_minimize_power_congestion():
    """Power congestion (no entropy barrier) converges and certifies."""
    grid = Grid(Interval(0.0, 1.0), 64)
    model = EnergyModel(grid=grid, congestion=CongestionSpec.power(2.0, 1.0))
    scenario = Scenario(
        mu=gaussian_truncated_density(grid, 0.5, 0.2),
        cost=CostSpec.quadratic(),
        model=model,
        m=512,
    )
    result = minimize_quantile(scenario, SolverParams(grad_tol=1e-9))
    assert result.converged
    assert result.residual_eq < 1e-3
    assert np.all(result.nu.values >= 0.0)


def test_proximal_anchor_pins_solution():
    """A tiny proximal step keeps the minimizer near the anchor."""
    scenario = _uniform_scenario(m=129)
    anchor = np.linspace(0.1, 0.9, scenario.m)
    near = minimize_quantile(scenario, prox=(anchor, 1e-6))
    assert np.max(np.abs(near.G.values - anchor)) < 1e-3
    far = minimize_quantile(scenario, prox=(anchor, 1e6))
    assert np.max(np.abs(far.G.values - anchor)) > 1e-2
    with pytest.raises(ValueError, match="anchor"):
        minimize_quantile(scenario, prox=(anchor[:-1], 1.0))
    with pytest.raises(ValueError, match="anchor"):
        minimize_quantile(scenario, prox=(anchor, 0.0))


def test_best_response_validation():
    """Damping range, step count, and grid compatibility are enforced."""
    scenario = _uniform_scenario()
    nu0 = uniform_density(scenario.grid)
    with pytest.raises(ValueError, match="damping"):
        best_response_iterate(scenario, nu0, damping=0.0)
    with pytest.raises(ValueError, match="steps"):
        best_response_iterate(scenario, nu0, steps=0)
    other = uniform_density(Grid(Interval(0.0, 1.0), 48))
    with pytest.raises(ValueError, match="grid"):
        best_response_iterate(scenario, other)


def test_best_response_uniform_fixed_point():
    """The uniform density is a fixed point of the best-response map."""
    scenario = _uniform_scenario(n=64)
    nu0 = uniform_density(scenario.grid)
    nu = best_response_iterate(scenario, nu0, damping=1.0, steps=1)
    assert np.max(np.abs(nu.values - 1.0)) < 1e-8


def test_best_response_matches_variational_solution():
    """Best-response iteration and direct minimization find the same measure."""
    scenario = _congested_scenario(n=64, m=1024)
    direct = minimize_quantile(scenario, SolverParams(grad_tol=1e-10))
    iterated = best_response_iterate(
        scenario, uniform_density(scenario.grid), damping=0.5, steps=60
    )
    assert np.max(np.abs(iterated.values - direct.nu.values)) < 1e-3
