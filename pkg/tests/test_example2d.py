import dataclasses
import math

import numpy as np
import pytest

from snapback.example2d import (FOLD_X, Example2DConfig, certify_membership_by_chain, disk_samples,
                                in_cap, unstable_membership, verify_family_bifurcation,
                                verify_wandering, wu_fingerprint)

CFG = Example2DConfig()
MUS = (-0.05, 0.0, 0.05)


def _cap_samples(n, seed):
    P = disk_samples(20 * n, seed)
    return P[in_cap(P)][:n]


def test_radial_factor():
    rho = np.linspace(0, 1, 101)
    fixed = rho[np.isclose(CFG.g(rho), rho, atol=1e-15)]
    assert fixed.tolist() == [0.0, 1.0]
    assert CFG.g_prime(0.0) == 2 and CFG.g_prime(1.0) == 0.5
    np.testing.assert_allclose(CFG.g_inv(CFG.g(rho)), rho, atol=1e-15)


def test_circle_map_fixed_angles():
    for t in (2 * math.pi / 3, -2 * math.pi / 3):
        assert abs(CFG.j(t) - t) < 1e-12
    assert CFG.j_prime(2 * math.pi / 3) > 1 > CFG.j_prime(-2 * math.pi / 3)
    th = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(CFG.j_inv(CFG.j(th)), th, atol=1e-12)


def test_arc_wanders_for_fifty_steps():
    rep = verify_wandering(CFG, 50)
    assert rep.passed and rep.first_overlap is None
    assert verify_wandering(CFG, 1).min_gap >= rep.min_gap > 0


def test_identity_circle_map_does_not_wander():
    rep = verify_wandering(dataclasses.replace(CFG, beta=0.0), 50)
    assert not rep.passed and rep.first_overlap == 1


def test_membership_examples():
    assert unstable_membership(CFG, 0.0, [0.0, 0.0], 10)
    assert unstable_membership(CFG, 0.0, [-0.3, 0.0], 10)
    a = _cap_samples(5, 1)
    for z in CFG.R(a):
        assert not unstable_membership(CFG, 0.05, z, 10)


def test_membership_agrees_with_backward_chains():
    fp = wu_fingerprint(CFG, 0.0)
    idx = np.random.default_rng(0).choice(len(fp.sample_points), 32, replace=False)
    for i in idx:
        assert certify_membership_by_chain(CFG, 0.05, fp.sample_points[i]) == fp.bits[i]


def test_fingerprint_is_parameter_free():
    prints = [wu_fingerprint(CFG, mu) for mu in MUS]
    assert len({fp.hex for fp in prints}) == 1
    assert 0 < prints[0].bits.sum() < len(prints[0].bits)


def test_fingerprint_trivial_cases():
    assert wu_fingerprint(CFG, 0.05, depth=0).bits.all()
    assert wu_fingerprint(CFG, -0.05, points=[[0.0, 0.0]]).bits.tolist() == [True]


@pytest.mark.parametrize("mu", MUS)
def test_disk_maps_into_itself(mu):
    rng = np.random.default_rng(11)
    r = 1 - 10 ** rng.uniform(-9, -1, 10_000)
    t = rng.uniform(-math.pi, math.pi, 10_000)
    Z = CFG.map(mu).eval(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    assert np.all(np.hypot(Z[:, 0], Z[:, 1]) < 1)


@pytest.mark.parametrize("mu", MUS)
def test_fold_determinant_changes_sign_only_at_critical_line(mu):
    rng = np.random.default_rng(2)
    x = rng.uniform(0.5, 0.99, 1000)
    y = rng.uniform(-0.1, 0.1, 1000)
    det = np.linalg.det(CFG.F_jacobian(np.column_stack([x, y]), mu))
    assert np.all((det > 0) == (x < FOLD_X))
    on_line = CFG.F_jacobian(np.column_stack([np.full(5, FOLD_X), np.linspace(-0.5, 0.5, 5)]), mu)
    assert np.all(np.linalg.det(on_line) == 0)


def test_fold_line_is_fixed_and_left_half_untouched():
    Y = np.linspace(-0.6, 0.6, 13)
    np.testing.assert_allclose(CFG.F(np.column_stack([np.full(13, FOLD_X), Y]), 0.05),
                               np.column_stack([np.full(13, FOLD_X), Y]), atol=1e-15)
    P = disk_samples(500, 4)
    P = P[P[:, 0] <= 0.5]
    assert np.array_equal(CFG.F(P, 0.05), P)


@pytest.mark.parametrize("mu", MUS)
def test_cap_folds_into_core_or_sector(mu):
    W = CFG.F(_cap_samples(5000, 9), mu)
    core = np.hypot(W[:, 0], W[:, 1]) < CFG.smoothing_radius
    sector = np.abs(np.arctan2(W[:, 1], W[:, 0])) < math.pi / 3
    assert np.all(core | sector)
    # the core is pushed out but stays left of the fold zone
    assert CFG.g(CFG.smoothing_radius) < 0.5


def test_family_bifurcation():
    cases = verify_family_bifurcation(CFG, MUS)
    assert [c.passed for c in cases] == [True, True, True]
    assert [c.orbit_count for c in cases] == [0, 0, 1]
    assert cases[1].pinned_exact
    last = cases[2]
    assert last.classifications == ["Regular"]
    assert FOLD_X < last.homoclinic_x < 1
    assert last.psi_residual < 1e-10 and last.landing_residual < 1e-10
