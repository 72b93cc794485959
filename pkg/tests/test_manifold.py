import math

import numpy as np
import pytest

from artifact.errors import CoverError, ParameterError
from artifact.manifold import (
    build_cover, circle, cover_checks, exp_chart, integrate_manifold, normalized_volume_constant,
    parse_manifold, partition_of_unity, sphere, torus, volume_constant,
)
from artifact.numerics import SampledField


def test_selectors():
    assert parse_manifold("circle:6.5") == circle(6.5)
    assert parse_manifold("torus:2:3") == torus(2, 3.0)
    assert parse_manifold("sphere").kind == "sphere"
    with pytest.raises(ParameterError):
        parse_manifold("hyperbolic")


def test_injectivity_radii():
    assert circle(2 * math.pi).r_inj == math.pi
    assert torus(2, 4.0).r_inj == 2.0
    assert sphere().r_inj == math.pi


def test_torus_chart_is_flat():
    T = torus(2, 2 * math.pi)
    ch = exp_chart(T, [1.0, 2.0], 1.0)
    u = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    assert np.all(ch.detg(u) == 1)
    assert np.allclose(ch.kappa(ch.kappa_inv(u)), u, atol=1e-14)


def test_sphere_chart_metric():
    ch = exp_chart(sphere(), [0.3, -0.2, 0.9], 2.0)
    assert abs(ch.detg(np.array([math.pi / 2, 0.0])) - 4 / math.pi ** 2) < 1e-15
    assert ch.detg(np.zeros(2)) == 1.0


@pytest.mark.parametrize("M", [circle(5.0), torus(2, 3.0), sphere()])
def test_chart_centering(M):
    rng = np.random.default_rng(1)
    for x in M.uniform_points(100, rng):
        ch = exp_chart(M, x, M.r_inj / 2)
        assert np.abs(ch.kappa(x)).max() < 1e-12
        assert M.distance(ch.kappa_inv(np.zeros(M.d)), x) < 1e-12


def test_chart_radius_precondition():
    with pytest.raises(ParameterError):
        exp_chart(sphere(), [0, 0, 1.0], math.pi)


def test_sphere_distance_two_ways():
    S = sphere()
    rng = np.random.default_rng(2)
    x = S.uniform_points(1, rng)[0]
    ch = exp_chart(S, x, 3.0)
    p = S.uniform_points(500, rng)
    via_chart = np.linalg.norm(ch.kappa(p), axis=-1)
    via_dot = np.arccos(np.clip(p @ x, -1, 1))
    # arccos is ill-conditioned near 0 and pi, so compare where it is well-posed
    ok = (via_dot > 0.05) & (via_dot < math.pi - 0.05)
    assert np.abs(via_chart[ok] - via_dot[ok]).max() < 1e-12


def test_circle_cover():
    C = circle(2 * math.pi)
    cov = build_cover(C, math.pi / 4)
    assert 8 <= len(cov.centers) <= 16
    chk = cover_checks(cov)
    assert chk["disjoint"] and chk["covered"]


def test_cover_precondition():
    with pytest.raises(CoverError):
        build_cover(sphere(), 2.0)


def test_sphere_cover_and_multiplicity():
    S = sphere()
    cov = build_cover(S, 0.3)
    chk = cover_checks(cov)
    assert chk["disjoint"] and chk["covered"]
    assert chk["multiplicity"] <= 5 ** 2 * volume_constant(S) ** 2


def test_volume_constant_closed_form():
    S = sphere()
    C = volume_constant(S)
    for s in np.linspace(1e-3, math.pi - 1e-9, 200):
        v = S.ball_volume(s)
        assert v / C <= s ** 2 * (1 + 1e-12) and s ** 2 <= C * v * (1 + 1e-12)


def test_volume_bound_normalised_with_two():
    # vol/(pi s^2) stays within [1/2, 2] at s in {r/4, r/2, r}, r = 0.3
    S = sphere()
    for s in (0.075, 0.15, 0.3):
        ratio = S.ball_volume(s) / (math.pi * s ** 2)
        assert 0.5 <= ratio <= 2
        assert 1 / normalized_volume_constant(S) <= ratio <= 1


@pytest.mark.xfail(strict=True, reason="cap area/s^2 tends to pi > 2 as s -> 0; see ledger")
def test_volume_bound_unnormalised_with_two():
    S = sphere()
    for s in (0.075, 0.15, 0.3):
        v = S.ball_volume(s)
        assert s ** 2 / 2 <= v <= 2 * s ** 2


@pytest.mark.parametrize("M,r", [(circle(2 * math.pi), 0.8), (torus(2, 2 * math.pi), 1.0), (sphere(), 0.4)])
def test_partition_of_unity(M, r):
    cov = build_cover(M, r)
    rng = np.random.default_rng(3)
    pts = M.uniform_points(10_000, rng)
    a = partition_of_unity(cov).alphas(pts)
    assert np.abs(a.sum(axis=-1) - 1).max() < 1e-10
    assert a.min() >= 0 and a.max() <= 1
    rho = M.distance(pts[:, None, :], cov.centers)
    assert np.all(a[rho >= r] == 0)
    pinned = partition_of_unity(cov, pinned=2).alphas(pts)
    assert np.abs(pinned.sum(axis=-1) - 1).max() < 1e-10
    near = rho[:, 2] <= r / 2
    assert near.any() and np.all(pinned[near, 2] == 1.0)


def test_partition_gradient_uniform():
    S = sphere()
    cov = build_cover(S, 0.4)
    pu = partition_of_unity(cov)
    rng = np.random.default_rng(4)
    grads = []
    for j in range(0, len(cov.centers), max(1, len(cov.centers) // 10)):
        ch = exp_chart(S, cov.centers[j], 1.0)
        u = rng.uniform(-0.4, 0.4, (400, 2))
        h = 1e-5
        g = 0
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            ap = pu.alphas(ch.kappa_inv(u + e))[:, j]
            am = pu.alphas(ch.kappa_inv(u - e))[:, j]
            g = np.maximum(g, np.abs(ap - am) / (2 * h))
        grads.append(g.max())
    grads = np.array(grads)
    assert grads.max() < 4 * np.median(grads) and grads.max() < 20 / 0.4


def test_manifold_integrals():
    S = sphere()
    g = S.global_grid(256)
    one = SampledField(g, np.ones(g.shape))
    assert abs(integrate_manifold(S, one) - 4 * math.pi) < 1e-10
    y10 = S.sample(lambda p: math.sqrt(3 / (4 * math.pi)) * p[..., 2], g)
    assert abs(integrate_manifold(S, y10)) < 1e-10
    T = torus(2, 2 * math.pi)
    gt = T.global_grid(16)
    assert abs(integrate_manifold(T, SampledField(gt, np.ones(gt.shape))) - 4 * math.pi ** 2) < 1e-10
