import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapback.errors import BranchDomainError, ConvergenceError, PreconditionError, SingularMatrixError
from snapback.maps import make_builtin
from snapback.repellor import (ExtendedInterval, ball_samples, find_periodic, inverse_branch,
                               is_expanding, unstable_interval_1d)


def test_logistic_fixed_points():
    m = make_builtin("logistic", [1.0])
    origin = find_periodic(m, [0.05])
    assert origin.points[0, 0] == pytest.approx(0.0, abs=1e-14)
    assert origin.multipliers[0].real == pytest.approx(4.0)
    assert is_expanding(origin) == (True, pytest.approx(3.0))
    other = find_periodic(m, [0.7])
    assert other.points[0, 0] == pytest.approx(0.75, abs=1e-14)
    assert other.multipliers[0].real == pytest.approx(-2.0)


def test_doubling_period_two():
    m = make_builtin("doubling")
    orb = find_periodic(m, [2.0], k=2)
    pts = sorted(orb.points[:, 0])
    np.testing.assert_allclose(pts, [2 * math.pi / 3, 4 * math.pi / 3], atol=1e-12)
    assert orb.singular_values[0] == pytest.approx(4.0)


def test_lower_period_is_rejected():
    with pytest.raises(ConvergenceError):
        find_periodic(make_builtin("doubling"), [0.01], k=2)


def test_fold_normal_fixed_point_is_not_expanding():
    orb = find_periodic(make_builtin("fold_normal", [2]), [0.3, 0.0], compute_basin=False)
    ok, margin = is_expanding(orb)
    assert not ok and margin == pytest.approx(-1.0)


def test_singular_newton_matrix():
    with pytest.raises(SingularMatrixError):
        # every point (a, 0) is fixed, so Df - I has a zero row everywhere
        find_periodic(make_builtin("fold_normal", [2]), [0.3, 0.1])


def test_basin_ball_maps_into_itself():
    m = make_builtin("logistic", [1.0])
    orb = find_periodic(m, [0.0])
    r = orb.basin_radius
    assert 0 < r <= 1.0
    br = orb.branch(r)
    Y = ball_samples(m, orb.points[0], r, 200)
    Z = br.solve(Y)
    assert np.all(np.abs(Z[:, 0]) < r)
    assert np.max(np.abs(m.eval(Z) - Y)) < 1e-10


def test_doubling_branch_through_pi():
    m = make_builtin("doubling")
    br = inverse_branch(m, [0.0], [math.pi], 1.0)
    assert br.contraction == pytest.approx(0.5, abs=1e-9)
    y = np.array([[0.3], [-0.4]])
    np.testing.assert_allclose(br.solve(y)[:, 0], math.pi + y[:, 0] / 2, atol=1e-12)
    assert br.residual < 1e-10


def test_branch_cannot_cross_critical_value():
    m = make_builtin("logistic", [1.0])
    with pytest.raises(BranchDomainError):
        inverse_branch(m, [1.0 - 1e-3], [0.52], 0.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.2), st.floats(0.6, 0.95))
def test_branch_values_are_preimages(y0, mu):
    m = make_builtin("logistic", [mu])
    br = inverse_branch(m, [0.1], [0.5 - math.sqrt(0.25 - 0.1 / (4 * mu))], 0.05)
    z = br([y0 * 0.25 + 0.05])
    assert abs(m(z)[0] - (y0 * 0.25 + 0.05)) < 1e-10


@pytest.mark.parametrize("mu,upper", [(0.8, 0.8), (0.9, 0.9), (1.0, 1.0)])
def test_logistic_unstable_interval(mu, upper):
    W = unstable_interval_1d(make_builtin("logistic", [mu]), 0.0)
    assert W.lower == -math.inf
    assert W.upper == pytest.approx(upper, abs=1e-12)


def test_linear_unstable_interval_is_whole_line():
    W = unstable_interval_1d(make_builtin("linear", [2.0]), 0.0)
    assert (W.lower, W.upper) == (-math.inf, math.inf)


def test_unstable_interval_requires_real_line():
    with pytest.raises(PreconditionError):
        unstable_interval_1d(make_builtin("doubling"), 0.0)


def test_extended_interval_metric():
    a = ExtendedInterval(-math.inf, 0.9)
    b = ExtendedInterval(-math.inf, 1.0)
    assert a.distance(b) == pytest.approx(math.atan(1.0) - math.atan(0.9))
    assert a.distance(a) == 0
    assert a.boundary == [0.9]
    assert ExtendedInterval(-math.inf, math.inf).distance(ExtendedInterval(-math.inf, 1e300)) < 1e-12
