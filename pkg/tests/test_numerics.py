import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.errors import NumericInputError, ParameterError
from artifact.numerics import Grid, NormParams, SampledField, integrate, inner, lp_norm


def test_constant_integrates_to_one():
    g = Grid.from_ppu([(0, 1)], 100)
    assert integrate(SampledField(g, np.ones(g.shape))) == 1.0


def test_periodic_sine_vanishes():
    g = Grid.from_ppu([(0, 1)], 100, periodic=True)
    f = SampledField.from_function(g, lambda x: np.sin(2 * np.pi * x))
    assert abs(integrate(f)) < 1e-12


def test_gaussian_integral():
    g = Grid.from_ppu([(-8, 8)], 200)
    f = SampledField.from_function(g, lambda x: np.exp(-x ** 2))
    assert abs(integrate(f) - math.sqrt(math.pi)) < 1e-8


def test_grid_counts_and_spacing():
    g = Grid.from_ppu([(0, 2), (-1, 1)], 16, periodic=(True, False))
    assert g.shape == (32, 33)
    assert g.spacings == (1 / 16, 1 / 16)
    assert g.axis(1)[-1] == 1.0


def test_non_finite_rejected():
    g = Grid.from_ppu([(0, 1)], 8)
    v = np.zeros(g.shape)
    v[3] = np.nan
    with pytest.raises(NumericInputError):
        SampledField(g, v)


def test_lp_norm_zero_and_indicator():
    g = Grid.from_ppu([(0, 1)], 1000, periodic=True)
    assert lp_norm(SampledField.zeros(g), 1.7) == 0.0
    f = SampledField.from_function(g, lambda x: (x < 0.5).astype(float))
    assert abs(lp_norm(f, 2) - 1 / math.sqrt(2)) < 1e-12


def test_lp_norm_gaussian_ratio():
    g = Grid.from_ppu([(-8, 8)], 200)
    f = SampledField.from_function(g, lambda x: np.exp(-x ** 2))
    # ||f||_1 = sqrt(pi), ||f||_2 = (pi/2)^(1/4)
    expected = math.sqrt(math.pi) / (math.pi / 2) ** 0.25
    assert abs(lp_norm(f, 1) / lp_norm(f, 2) - expected) < 1e-6


def test_lp_norm_rejects_bad_p():
    g = Grid.from_ppu([(0, 1)], 8)
    with pytest.raises(ParameterError):
        lp_norm(SampledField.zeros(g), 0.0)


def test_refinement_rate_is_second_order():
    # exp(x) on [0,1] is not periodic, so the trapezoid error is O(h^2)
    errs = []
    hs = []
    for ppu in (8, 16, 32, 64):
        g = Grid.from_ppu([(0, 1)], ppu)
        errs.append(abs(integrate(SampledField.from_function(g, np.exp)) - (math.e - 1)))
        hs.append(1 / ppu)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_norm_params_sigmas():
    p = NormParams(s=0.0, p=0.5, q=0.25, d=2)
    assert p.sigma_pq == 2 * 3.0
    assert p.sigma_p == 2 * 1.0
    assert NormParams(1.0, 2.0, 2.0).sigma_pq == 0.0


_grid2 = Grid.from_ppu([(0, 1), (0, 2)], 12)


def _random_field(seed, scale):
    rng = np.random.default_rng(seed)
    return SampledField(_grid2, scale * rng.standard_normal(_grid2.shape))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 1e3), st.floats(-10, 10), st.floats(-10, 10))
def test_integrate_is_linear(seed, scale, a, b):
    f = _random_field(seed, scale)
    g = _random_field(seed + 1, scale)
    lhs = integrate(a * f + b * g) - a * integrate(f) - b * integrate(g)
    bound = (abs(a) * np.abs(f.values).max() + abs(b) * np.abs(g.values).max()) * _grid2.volume()
    assert abs(lhs) <= 1e-12 * bound + 1e-300


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-6),
       st.floats(0.3, 5))
def test_lp_norm_homogeneous(seed, c, p):
    f = _random_field(seed, 1.0)
    base = lp_norm(f, p)
    assert abs(lp_norm(c * f, p) - abs(c) * base) <= 1e-12 * abs(c) * base


def test_inner_matches_integrate():
    g = Grid.from_ppu([(0, 1)], 50)
    f = SampledField.from_function(g, np.sin)
    h = SampledField.from_function(g, np.cos)
    assert inner(f, h) == pytest.approx(integrate(f.with_values(f.values * h.values)), abs=1e-15)
