"""LP channel design: optimum matches the two-level family below eps_star."""

import math

import numpy as np
import pytest

from privopt.channels import eps_star_float, two_level_constants
from privopt.lp_oracle import (
    MAX_LP_DIM,
    DpLpInstance,
    DpLpSolution,
    eps_star,
    solve_dp_lp,
)


def test_instance_validation():
    with pytest.raises(ValueError):
        DpLpInstance(0, 0.5)
    with pytest.raises(ValueError):
        DpLpInstance(MAX_LP_DIM + 1, 0.5)
    with pytest.raises(ValueError):
        DpLpInstance(2, 0.0)
    with pytest.raises(ValueError):
        DpLpInstance(2, math.inf)


def test_d1_is_randomized_response():
    for eps in (0.2, 1.0, 3.0):
        sol = solve_dp_lp(DpLpInstance(1, eps))
        assert sol.t_star == pytest.approx(math.tanh(eps / 2.0), abs=1e-10)
        assert len(sol.levels) == 2
    assert math.isinf(eps_star(1))


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("eps", [0.25, 0.5, 1.0])
def test_lp_matches_two_level_family(d, eps):
    if eps >= eps_star(d):
        pytest.skip("two-level family only optimal below the transition")
    sol = solve_dp_lp(DpLpInstance(d, eps))
    c = two_level_constants(d, eps)
    assert sol.t_star == pytest.approx(c["t"], abs=1e-8)
    assert len(sol.levels) == 2
    assert sol.levels[0] == pytest.approx(c["q_plus"], abs=1e-8)
    assert sol.levels[1] == pytest.approx(c["q_minus"], abs=1e-8)
    top_mult = int((sol.q > sol.q.max() - 1e-10).sum())
    assert top_mult == c["C_d"]
    # the privacy constraint is active at the optimum
    assert sol.q.max() / sol.q.min() == pytest.approx(math.exp(eps), abs=1e-8)


def test_lp_at_d5_single_point():
    sol = solve_dp_lp(DpLpInstance(5, 0.4))
    c = two_level_constants(5, 0.4)
    assert sol.t_star == pytest.approx(c["t"], abs=1e-8)
    assert int((sol.q > sol.q.max() - 1e-10).sum()) == c["C_d"]


def test_corner_input_equivariance():
    base = solve_dp_lp(DpLpInstance(3, 0.7))
    flipped = solve_dp_lp(DpLpInstance(3, 0.7), x=(1.0, -1.0, 1.0))
    assert flipped.t_star == pytest.approx(base.t_star, abs=1e-10)
    assert np.allclose(sorted(flipped.q), sorted(base.q), atol=1e-10)
    with pytest.raises(ValueError):
        solve_dp_lp(DpLpInstance(3, 0.7), x=(0.5, 1.0, 1.0))
    with pytest.raises(ValueError):
        solve_dp_lp(DpLpInstance(3, 0.7), x=(1.0, 1.0))


def test_phase_transition_at_d3():
    below = solve_dp_lp(DpLpInstance(3, math.log(5.0) - 1e-4))
    above = solve_dp_lp(DpLpInstance(3, math.log(5.0) + 1e-4))
    mult_b = int((below.q > below.q.max() - 1e-10).sum())
    mult_a = int((above.q > above.q.max() - 1e-10).sum())
    assert mult_b == 4 and mult_a == 1
    # t* is continuous through the transition and t*(eps) keeps growing
    assert above.t_star > below.t_star
    assert abs(above.t_star - 1.0 / 3.0) < 1e-3
    # the two-level constructor refuses the regime where it stops being optimal
    with pytest.raises(ValueError):
        two_level_constants(3, math.log(5.0) + 1e-4)


def test_eps_star_agrees_with_closed_form():
    for d in range(2, MAX_LP_DIM + 1):
        assert eps_star(d) == pytest.approx(eps_star_float(d), abs=1e-12)
    assert eps_star(2) == pytest.approx(math.log(5.0), abs=1e-14)
    assert eps_star(4) == pytest.approx(math.log(23.0 / 7.0), abs=1e-14)
    assert eps_star(6) == pytest.approx(math.log(51.0 / 19.0), abs=1e-14)
    with pytest.raises(ValueError):
        eps_star(0)


def test_solution_invariants_enforced():
    sol = solve_dp_lp(DpLpInstance(2, 0.5))
    with pytest.raises(ValueError):
        DpLpSolution(sol.t_star, sol.q[:3], sol.levels, 2, 0.5, sol.x)
    bad = sol.q.copy()
    bad[0] += 0.1  # breaks both the sum and the mean constraint
    with pytest.raises(ValueError):
        DpLpSolution(sol.t_star, bad, sol.levels, 2, 0.5, sol.x)
    with pytest.raises(ValueError):
        # ratio cap violated for a tighter eps than the pmf was built for
        DpLpSolution(sol.t_star, sol.q, sol.levels, 2, 0.05, sol.x)
