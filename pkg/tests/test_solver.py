import math
import warnings

import numpy as np
import pytest
from scipy.optimize import linprog

from handsoff.errors import InvalidInputError, UnboundedSearchError
from handsoff.model import PlantModel
from handsoff.solver import (
    AdmmSettings,
    ControlProblem,
    build_reachability,
    check_feasible,
    default_grid_size,
    l0_measure,
    l0_per_channel,
    minimum_time,
    solve_l1,
)


def highs_l1(program):
    """Reference optimum from the LP split u = p - q, p, q in [0, 1]."""
    G, c, w = program.G, program.c, program.w
    p = G.shape[1]
    res = linprog(np.concatenate([w, w]), A_eq=np.hstack([G, -G]), b_eq=c,
                  bounds=[(0, 1)] * (2 * p), method="highs")
    return res


def test_default_grid_size():
    assert default_grid_size(4.0, 2) == 400
    assert default_grid_size(0.01, 3) == 100
    assert default_grid_size(1e4, 2) == 5000


def test_problem_validation(double_integrator):
    with pytest.raises(InvalidInputError):
        ControlProblem(double_integrator, [1.0], 1.0)
    with pytest.raises(InvalidInputError):
        ControlProblem(double_integrator, [1.0, 0.0], -1.0)
    with pytest.raises(InvalidInputError):
        ControlProblem(double_integrator, [1.0, 0.0], 1.0, lam=[0.0])
    with pytest.raises(InvalidInputError):
        ControlProblem(double_integrator, [1.0, 0.0], 1.0, N=1)


def test_reachability_matches_simulation(oscillator, rng):
    prob = ControlProblem(oscillator, [0.4, -1.0], 3.0, N=60)
    prog = build_reachability(prob)
    u = rng.uniform(-1, 1, 60)
    from handsoff.model import discretize_zoh
    d = discretize_zoh(oscillator, prob.dt)
    x = prob.x0.copy()
    for uk in u:
        x = d.Ad @ x + d.Bd[:, 0] * uk
    # x(T) = Ad^N x0 + G u, so G u - c equals the terminal state
    assert np.allclose(prog.G @ u - prog.c, x, atol=1e-12)


def test_uncontrollable_plant_warns():
    plant = PlantModel(np.eye(2), [[1.0], [1.0]])
    with pytest.warns(RuntimeWarning, match="not controllable"):
        prog = build_reachability(ControlProblem(plant, [1.0, 1.0], 1.0, N=20))
    assert prog.warning


def test_double_integrator_optimum(double_integrator):
    prog = build_reachability(ControlProblem(double_integrator, [1.0, 0.0], 4.0, N=400))
    res = solve_l1(prog)
    ref = highs_l1(prog)
    assert res.status == "optimal"
    assert res.J1 == pytest.approx(ref.fun, rel=1e-6)
    assert res.J1 == pytest.approx(2 * (2 - math.sqrt(3)), rel=1e-3)
    assert res.terminal_residual < 1e-6
    assert np.all(np.abs(res.u) <= 1 + 1e-12)
    assert res.u.shape == (400, 1)


def test_infeasible_horizon(double_integrator):
    prog = build_reachability(ControlProblem(double_integrator, [1.0, 0.0], 1.0, N=100))
    assert solve_l1(prog).status == "infeasible"
    assert check_feasible(prog)[0] is False


def test_zero_initial_state(oscillator):
    res = solve_l1(build_reachability(ControlProblem(oscillator, [0.0, 0.0], 2.0)))
    assert res.status == "optimal" and res.J1 == 0 and not np.any(res.u)


@pytest.mark.parametrize("seed", range(6))
def test_random_plants_match_highs(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 4)), int(rng.integers(1, 3))
    plant = PlantModel(rng.uniform(-1, 1, (n, n)), rng.uniform(-1, 1, (n, m)))
    x0 = rng.uniform(-1, 1, n)
    lam = rng.uniform(0.5, 2.0, m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        prog = build_reachability(ControlProblem(plant, x0, 6.0, N=300, lam=lam))
    ref = highs_l1(prog)
    res = solve_l1(prog)
    if ref.status == 2:
        assert res.status == "infeasible"
    else:
        assert res.status == "optimal"
        assert res.J1 == pytest.approx(ref.fun, rel=1e-4, abs=1e-9)
        assert res.terminal_residual <= 1e-6


def test_settings_validation():
    with pytest.raises(InvalidInputError):
        AdmmSettings(alpha=2.5)
    with pytest.raises(InvalidInputError):
        AdmmSettings(max_iter=0)


def test_iteration_cap_reports_max_iters(oscillator):
    prog = build_reachability(ControlProblem(oscillator, [1.0, 0.5], 5.0, N=200))
    res = solve_l1(prog, AdmmSettings(max_iter=5, polish=False))
    assert res.status == "max_iters" and res.iterations == 5


def test_minimum_time_double_integrator(double_integrator):
    # bang-bang from rest at distance 1 takes exactly 2
    t = minimum_time(double_integrator, [1.0, 0.0], tol=1e-3)
    assert 2.0 - 1e-3 <= t <= 2.0 + 5e-3


def test_minimum_time_edges(double_integrator):
    assert minimum_time(double_integrator, [0.0, 0.0]) == 0.0
    unstable = PlantModel([[1.0]], [[1.0]])
    with pytest.raises(UnboundedSearchError):
        minimum_time(unstable, [2.0])


def test_l0_measures():
    u = np.array([[1.0, 0.0], [0.5, 1e-4], [0.0, -1.0]])
    assert l0_per_channel(u, 0.1).tolist() == pytest.approx([0.2, 0.1])
    assert l0_measure(u, 0.1, weights=[1.0, 2.0]) == pytest.approx(0.4)
