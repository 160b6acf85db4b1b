import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import qmc

from snapback.errors import PreconditionError, SnapbackError
from snapback.maps import (BumpDeformation, builtin_names, deform, finite_difference_jacobians,
                           iterate_with_jacobian, jacobian, make_builtin, make_family, plateau,
                           plateau_prime)

BUILTINS = [("logistic", (1.1,)), ("doubling", ()), ("fold_normal", (2,)), ("fold_normal", (3,)),
            ("linear", (2.5,)), ("example2d", (0.05,)), ("example2d", (-0.05,))]


def test_closed_form_values():
    assert make_builtin("logistic", [1.0])([0.5]) == pytest.approx([1.0], abs=0)
    assert make_builtin("doubling")([math.pi / 3])[0] == pytest.approx(2 * math.pi / 3, abs=1e-15)
    np.testing.assert_allclose(make_builtin("fold_normal", [2])([0.5, -0.3]), [0.5, 0.09], atol=1e-15)


def test_jacobian_closed_forms():
    assert jacobian(make_builtin("logistic", [1.0]), [0.0]).tolist() == [[4.0]]
    J = jacobian(make_builtin("fold_normal", [2]), [0.3, 0.0])
    assert np.linalg.det(J) == 0.0


def test_unknown_name_and_parameter_count():
    with pytest.raises(SnapbackError):
        make_builtin("nope")
    with pytest.raises(SnapbackError):
        make_builtin("logistic", [1.0, 2.0])
    assert "example2d" in builtin_names()


@pytest.mark.parametrize("name,params", BUILTINS)
def test_analytic_jacobian_matches_finite_differences(name, params):
    m = make_builtin(name, params)
    lo, hi = m.domain[:, 0], m.domain[:, 1]
    X = qmc.scale(qmc.Sobol(m.dimension, seed=3).random(1024), lo, hi)[:1000]
    X = X[m.in_domain(X)] if name == "example2d" else X
    gap = np.abs(m.jacobians(X) - finite_difference_jacobians(m, X)).max()
    assert gap < 1e-6


@given(st.floats(-20, 20))
def test_circle_map_is_periodic(theta):
    m = make_builtin("doubling")
    a, b = m([theta])[0], m([theta + 2 * math.pi])[0]
    assert min(abs(a - b), 2 * math.pi - abs(a - b)) < 1e-12


def test_iterate_with_jacobian_uses_chain_rule():
    m = make_builtin("logistic", [0.9])
    y, J = iterate_with_jacobian(m, [0.2], 3)
    x, prod = 0.2, 1.0
    for _ in range(3):
        prod *= 3.6 * (1 - 2 * x)
        x = 3.6 * x * (1 - x)
    assert y[0] == pytest.approx(x, abs=1e-15)
    assert J[0, 0] == pytest.approx(prod, rel=1e-13)


def test_plateau_profile():
    t = np.linspace(0, 3, 301)
    p = plateau(t, 1.0, 2.0)
    assert np.all(p[t <= 1] == 1) and np.all(p[t >= 2] == 0)
    assert np.all(np.diff(p) <= 0)
    h = 1e-6
    fd = (plateau(t + h, 1.0, 2.0) - plateau(t - h, 1.0, 2.0)) / (2 * h)
    assert np.abs(fd - plateau_prime(t, 1.0, 2.0)).max() < 1e-6


def test_zero_amplitude_deformation_is_identity():
    base = make_builtin("logistic", [1.0])
    m = deform(base, BumpDeformation([0.5], 0.1, 0.2, [1.0], 0.0))
    X = np.linspace(-0.2, 1.2, 100)[:, None]
    assert np.array_equal(m.eval(X), base.eval(X))


def test_deformation_shifts_on_plateau():
    m = deform(make_builtin("fold_normal", [2]), BumpDeformation([0, 0], 0.1, 0.3, [0, 1], 0.1))
    np.testing.assert_allclose(m([0.0, 0.0]), [0.0, 0.1], atol=1e-15)
    s = 0.03
    lg = deform(make_builtin("logistic", [1.0]), BumpDeformation([0.5], 0.05, 0.1, [1.0], s))
    assert lg([0.5])[0] == pytest.approx(1 + s, abs=1e-15)
    X = np.array([[0.1], [0.9]])
    np.testing.assert_array_equal(lg.eval(X), make_builtin("logistic", [1.0]).eval(X))


def test_deformed_jacobian_matches_finite_differences():
    m = deform(make_builtin("fold_normal", [2]), BumpDeformation([0.2, 0.1], 0.2, 0.5, [1, 1], 0.3))
    X = np.random.default_rng(0).uniform(-1, 1, (500, 2))
    assert np.abs(m.jacobians(X) - finite_difference_jacobians(m, X)).max() < 1e-6


def test_deformation_may_not_touch_protected_neighborhood():
    with pytest.raises(PreconditionError):
        deform(make_builtin("logistic", [1.0]), BumpDeformation([0.1], 0.05, 0.2, [1.0], 0.1),
               protected=[([0.0], 0.05)])


def test_families():
    fam = make_family("logistic")
    assert fam.at(0.9)([0.5])[0] == pytest.approx(0.9)
    with pytest.raises(SnapbackError):
        fam.at(5.0)
    frozen = make_family("frozen:logistic:1.2")
    assert frozen.at(0.1)([0.5])[0] == pytest.approx(1.2)
    assert make_family("linear").at(2.0)([1.0])[0] == pytest.approx(4.0)
