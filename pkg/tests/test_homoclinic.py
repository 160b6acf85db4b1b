import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapback.errors import NotFold, PreconditionError
from snapback.homoclinic import (boundary_preimage_check_1d, classify, dedupe, density_check,
                                 fold_test, homoclinic_class_approx, preimage_tree, preimages,
                                 regular_orbit_exists, search_homoclinic)
from snapback.maps import MapDefinition, make_builtin
from snapback.repellor import find_periodic

MIDDLE = [[0.2, 0.8]]


def _logistic(mu):
    m = make_builtin("logistic", [mu])
    return m, find_periodic(m, [0.0])


def test_doubling_orbit_through_pi():
    m = make_builtin("doubling")
    found = search_homoclinic(m, find_periodic(m, [0.0]), depth=1)
    assert len(found) == 1
    orb = found[0]
    assert orb.point[0] == pytest.approx(math.pi, abs=1e-12)
    assert orb.classification == "Regular"
    # backward tail runs pi/2, pi/4, ... into the basin of 0
    np.testing.assert_allclose(orb.tail[:, 0], math.pi / 2 ** np.arange(1, len(orb.tail) + 1),
                               atol=1e-12)


@pytest.mark.parametrize("mu", [1.05, 1.2, 1.4])
def test_logistic_orbits_match_quadratic_roots(mu):
    m, rep = _logistic(mu)
    found = search_homoclinic(m, rep, depth=2, region=MIDDLE)
    s = math.sqrt(1 - 1 / mu) / 2
    np.testing.assert_allclose(sorted(o.point[0] for o in found), [0.5 - s, 0.5 + s], atol=1e-12)
    assert all(o.classification == "Regular" for o in found)
    for o in found:
        np.testing.assert_allclose(m.iterate(o.point[None], 2), [[0.0]], atol=1e-12)


def test_tangency_gives_single_critical_orbit():
    m, rep = _logistic(1.0)
    found = search_homoclinic(m, rep, depth=2, region=MIDDLE)
    assert len(found) == 1
    assert found[0].point[0] == 0.5
    assert classify(found[0]) == "Critical"
    assert found[0].min_abs_det < 1e-12


def test_no_orbit_below_tangency():
    m, rep = _logistic(0.8)
    assert len(search_homoclinic(m, rep, depth=4)) == 0
    assert not regular_orbit_exists(m, rep, 8)


def test_regular_orbit_exists_agrees_with_search():
    for mu in (0.95, 1.0, 1.05):
        m, rep = _logistic(mu)
        full = search_homoclinic(m, rep, depth=4)
        assert regular_orbit_exists(m, rep, 4) == any(o.classification == "Regular" for o in full)


def test_search_needs_expanding_repellor():
    # multiplier 4 * 0.2 < 1: the origin attracts
    weak = find_periodic(make_builtin("logistic", [0.2]), [0.0], compute_basin=False)
    with pytest.raises(PreconditionError):
        search_homoclinic(weak.map, weak, 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6))
def test_doubling_preimage_levels_are_dyadic(depth):
    m = make_builtin("doubling")
    tree = preimage_tree(m, find_periodic(m, [0.0]), depth)
    for n in range(1, depth + 1):
        expected = (2 * np.arange(2 ** (n - 1)) + 1) * 2 * math.pi / 2**n
        np.testing.assert_allclose(np.sort(tree.levels[n][:, 0]), expected, atol=1e-12)


def test_preimages_of_logistic():
    m = make_builtin("logistic", [1.0])
    np.testing.assert_allclose(preimages(m, [0.75])[:, 0], [0.25, 0.75], atol=1e-13)
    assert preimages(m, [1.5]).shape == (0, 1)


def test_dedupe_merges_close_points_and_circle_wrap():
    m = make_builtin("doubling")
    X = np.array([[0.1], [0.1 + 1e-9], [2 * math.pi - 1e-9], [0.0], [3.0]])
    assert len(dedupe(m, X)) == 3


def test_class_approximation_is_all_dyadic_angles():
    m = make_builtin("doubling")
    cloud = homoclinic_class_approx(m, find_periodic(m, [0.0]), 12)
    assert len(cloud) == 4096
    np.testing.assert_allclose(np.sort(cloud[:, 0]), 2 * math.pi * np.arange(4096) / 4096, atol=1e-9)
    ref = np.linspace(0, 2 * math.pi, 20000, endpoint=False)[:, None]
    assert density_check(cloud, ref, 2 * math.pi / 2**11, m)
    assert not density_check(cloud[:2048], ref, 2 * math.pi / 2**11, m)


def test_fold_certificate_for_normal_form():
    cert = fold_test(make_builtin("fold_normal", [2]), [0.3, 1e-6])
    assert abs(cert.det_value) < 1e-8
    np.testing.assert_allclose(np.abs(cert.kernel_direction), [0, 1], atol=1e-9)
    assert cert.quadratic_coefficient == pytest.approx(2.0, rel=1e-4)


def test_fold_certificate_failures_are_named():
    with pytest.raises(NotFold) as exc:
        fold_test(make_builtin("linear", [2.0]), [0.1])
    assert "det_value" in exc.value.failed
    cube = MapDefinition("cube", 2, "plane",
                         func=lambda X: np.column_stack([X[:, 0], X[:, 1] ** 3]))
    with pytest.raises(NotFold) as exc:
        fold_test(cube, [0.0, 0.0])
    assert {"gradient_of_det", "quadratic_coefficient"} <= set(exc.value.failed)


@pytest.mark.parametrize("mu", [0.8, 0.9, 0.95])
def test_boundary_of_unstable_interval_misses_repellor(mu):
    rep = boundary_preimage_check_1d(make_builtin("logistic", [mu]), 0.0)
    assert rep.applicable and rep.passed
    (row,) = [r for r in rep.boundary if r["status"] != "infinite"]
    assert row["point"] == pytest.approx(mu, abs=1e-12)
    assert row["image"] == pytest.approx(4 * mu**2 * (1 - mu), abs=1e-12)
    assert row["status"] == "critical-value"


def test_boundary_check_not_applicable_with_homoclinic_orbits():
    rep = boundary_preimage_check_1d(make_builtin("logistic", [1.2]), 0.0)
    assert not rep.applicable
