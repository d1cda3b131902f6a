import math

import numpy as np
import pytest

from hknoids.errors import DomainError
from hknoids.geometry import SpaceParams
from hknoids import surfaces as sf


P03 = SpaceParams(0.3)
PMIN = SpaceParams(0.0)  # kappa=-1, tau=0
PK1 = SpaceParams(0.0)


def _params_k1_tau_half():
    # kappa=-1 with tau=1/2 is not of the form (4H^2-1, H); the printed polar
    # formulas are still well defined, so pin them with a raw stand-in.
    class Raw:
        kappa = -1.0
        tau = 0.5

    return Raw()


def test_umbrella():
    assert sf.umbrella_height_origin(P03, (0.3, -0.2)) == 0.0
    assert sf.umbrella_offset_sign(P03, 1.0, (-0.1, 1.0)) > 0
    assert sf.umbrella_offset_sign(P03, 1.0, (0.1, 1.0)) < 0


def test_surface_i_height_printed_branches():
    pc = SpaceParams(0.5)  # kappa=0, tau=1/2
    assert sf.surface_i_height(pc, 1.0, math.pi / 4) == pytest.approx(0.25)
    assert sf.surface_i_height(pc, 2.3, 0.0) == 0.0
    raw = _params_k1_tau_half()
    v = sf.surface_i_height(raw, 1.0, math.pi / 4)
    assert v == pytest.approx(-math.atan(math.tanh(0.5) ** 2), abs=1e-12)
    assert v == pytest.approx(-0.2104, abs=5e-5)


def test_surface_i_oddness_both_branches():
    rng = np.random.default_rng(11)
    for params in (SpaceParams(0.5), _params_k1_tau_half(), P03):
        r = rng.uniform(0.1, 3.0, size=200)
        th = rng.uniform(-math.pi, math.pi, size=200)
        z1 = sf.surface_i_height(params, r, th)
        z2 = sf.surface_i_height(params, r, -th)
        np.testing.assert_allclose(z1, -z2, atol=1e-12)
        # z(r, theta) = -z(r, pi - theta)
        z3 = sf.surface_i_height(params, r, math.pi - th)
        np.testing.assert_allclose(z1, -z3, atol=1e-12)


def test_surface_i_limit():
    raw = _params_k1_tau_half()
    assert sf.surface_i_limit(raw, math.pi / 2) == 0.0
    assert sf.surface_i_limit(raw, math.pi / 4) == pytest.approx(-math.pi / 4)
    assert sf.surface_i_limit(SpaceParams(0.5), math.pi / 4) == math.inf
    with pytest.raises(DomainError):
        sf.surface_i_limit(P03, 0.0)


def test_surface_i_monotone_tail():
    raw = _params_k1_tau_half()
    theta = 0.6
    lim = sf.surface_i_limit(raw, theta)
    rs = np.linspace(2.0, 20.0, 40)
    gap = np.abs(sf.surface_i_height(raw, rs, theta) - lim)
    assert np.all(np.diff(gap) <= 1e-15)
    assert gap[-1] < 1e-8


def test_b_i_examples():
    raw = _params_k1_tau_half()
    assert sf.b_i(1.0, math.pi / 4, raw) == pytest.approx(-0.2104, abs=5e-5)
    assert sf.b_i(math.inf, math.pi / 2, raw) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        sf.b_i(math.inf, 0.3, SpaceParams(0.5))
    # high-precision branch near phi -> 0 stays finite and tiny
    v = sf.b_i(1.0, 1e-3, P03)
    assert abs(v) < 1e-2


def test_exact_branch_matches_chart_form():
    # the exact polar form equals the chart closed form at matched points
    from hknoids.geometry import BaseChart

    chart = BaseChart(P03)
    rng = np.random.default_rng(5)
    for _ in range(50):
        r, th = rng.uniform(0.05, 2.5), rng.uniform(-3, 3)
        p = chart.from_polar(r, th)
        z1 = sf.surface_i_height_polar_exact(P03, r, th)
        z2 = sf.surface_i_height_xy(P03, p.real, p.imag)
        assert z1 == pytest.approx(z2, abs=1e-12)


def test_exact_vs_printed_branch_disagreement_is_pinned():
    # the printed kappa<0 polar branch and the exact solution differ by sign
    # (and tanh argument); the pipeline bound must be the positive one
    assert sf.b_i(math.inf, 0.9, P03) < 0 < sf.b_i_pipeline(math.inf, 0.9, P03)
    assert sf.b_i_pipeline(math.inf, 0.9, P03) == pytest.approx(
        -(2 * 0.3 / P03.kappa) * (math.pi / 2 - 0.9)
    )


def test_surface_i_height_xy_kappa0():
    pc = SpaceParams(0.5)
    assert sf.surface_i_height_xy(pc, 1.2, 0.7) == pytest.approx(0.5 * 1.2 * 0.7)
