import math

import numpy as np
import pytest

from snapback.bifurcation import (BOUNDARY, HAS_REGULAR, NO_LOCAL, crossing_functional,
                                  dichotomy_report, find_critical_periodic, has_regular_orbit,
                                  locate_mu0, side_classify, track_unstable_interval)
from snapback.errors import ConvergenceError, HypothesisError, PreconditionError
from snapback.homoclinic import fold_test
from snapback.maps import make_family


@pytest.fixture(scope="module")
def logistic():
    return make_family("logistic")


def test_crossing_functional_matches_closed_form(logistic):
    grid = np.linspace(0.9, 1.1, 41)
    vals = np.array([crossing_functional(logistic, mu, [0.5]) for mu in grid])
    np.testing.assert_allclose(vals, 4 * grid**2 * (1 - grid), atol=1e-12)
    assert np.count_nonzero(np.diff(np.sign(vals[vals != 0]))) == 1


@pytest.mark.parametrize("mu", np.linspace(0.92, 1.08, 20))
def test_side_agrees_with_quadratic_roots(logistic, mu):
    rep = side_classify(logistic, mu, [0.5])
    # f^2(x) = 0 off the origin means f(x) = 1, i.e. x(1 - x) = 1 / (4 mu)
    disc = 1 - 1 / mu
    expected = 2 if disc > 1e-12 else (1 if abs(disc) <= 1e-12 else 0)
    assert rep.local_orbit_count == expected
    assert rep.consistent
    assert rep.side == {2: HAS_REGULAR, 1: BOUNDARY, 0: NO_LOCAL}[expected]


def test_side_at_tangency(logistic):
    rep = side_classify(logistic, 1.0, [0.5])
    assert rep.side == BOUNDARY and rep.local_orbit_count == 1
    assert rep.classifications == ["Critical"]


def test_superstable_period_two(logistic):
    mu, n, point = find_critical_periodic(logistic, [0.7, 0.9], 4)
    assert n == 2
    assert mu == pytest.approx((1 + math.sqrt(5)) / 4, abs=1e-12)
    cert = fold_test(logistic.at(mu), point)
    assert abs(cert.det_value) < 1e-8


def test_critical_periodic_in_window(logistic):
    mu, n, point = find_critical_periodic(logistic, [0.95, 0.97], 6)
    m = logistic.at(mu)
    assert n == 3
    assert abs(m.iterate(point[None], n)[0, 0] - 0.5) < 1e-10
    assert abs(m.iterate(point[None], 1)[0, 0] - 0.5) > 1e-3


def test_critical_periodic_absent(logistic):
    with pytest.raises(ConvergenceError):
        find_critical_periodic(logistic, [0.3, 0.4], 1)


def test_unstable_interval_track(logistic):
    track, modulus = track_unstable_interval(logistic, [0.8, 0.9, 0.95], threads=1)
    np.testing.assert_allclose([w.upper for _, w in track], [0.8, 0.9, 0.95], atol=1e-12)
    assert modulus == pytest.approx(math.atan(0.9) - math.atan(0.8), abs=1e-12)
    same, _ = track_unstable_interval(logistic, [0.8, 0.9, 0.95], threads=3)
    assert [w.as_dict() for _, w in same] == [w.as_dict() for _, w in track]


def test_regular_orbit_existence_flips_at_one(logistic):
    assert not has_regular_orbit(logistic, 0.999)
    assert has_regular_orbit(logistic, 1.001)


def test_locate_mu0_is_stable_under_refinement(logistic):
    a = locate_mu0(logistic, [0.9, 1.1], tol=1e-6, depth=4)
    b = locate_mu0(logistic, [0.9, 1.1], tol=5e-7, depth=8)
    assert a.orientation == "homoclinic-above" and a.monotone
    assert abs(a.mu0 - 1) < 1e-6 and abs(b.mu0 - 1) < 5e-7
    assert abs(a.mu0 - b.mu0) < 1e-6


def test_locate_needs_straddling_bracket(logistic):
    with pytest.raises(HypothesisError):
        locate_mu0(logistic, [1.05, 1.1], depth=4)


def test_dichotomy_at_tangency(logistic):
    rep = dichotomy_report(logistic, 1.0 + 2e-10)
    assert rep.mu_star == 1.0
    assert rep.dichotomy == "CriticalHomoclinicOnly"
    assert not rep.violation and rep.continuous
    assert all(a > b for a, b in zip(rep.moduli, rep.moduli[1:]))


def test_frozen_family_has_no_transition():
    frozen = make_family("frozen:logistic:1.2")
    with pytest.raises(HypothesisError):
        locate_mu0(frozen, [0.9, 1.1], depth=4)
    with pytest.raises(PreconditionError):
        dichotomy_report(frozen, 1.0)


def test_planar_family_is_rejected():
    fam = make_family("example2d")
    with pytest.raises(PreconditionError):
        dichotomy_report(fam, 0.0)
    with pytest.raises(PreconditionError):
        track_unstable_interval(fam, [0.0, 0.01])
