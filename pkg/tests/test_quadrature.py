"""Quadrature oracles: geometry of the slice measure, the pair integrand,
the independent F route, the principal-value closed forms, and the
scaling studies."""

import math

import numpy as np
import pytest

from hyfermi.cutoffs import CutoffConfig
from hyfermi.hyformula import F_closed, FermiParams
from hyfermi.quadrature import (
    F_quadrature,
    g_pointwise,
    gap_cutoff_study,
    inner_pair,
    lattice_sum_convergence,
    ode_check_f,
    p_integral_linear,
    p_integral_quadratic,
    pv_linear_epsilon,
    pv_quadratic_epsilon,
    singular_integral_bound,
    slice_measure,
)


def pv_extrapolated(oracle, a, b, e1=1e-4, e2=2e-4):
    # the smoothed integral is linear in eps near a simple zero of the
    # denominator, so two nodes eliminate the leading error
    v1, v2 = oracle(a, b, e1), oracle(a, b, e2)
    return (e2 * v1 - e1 * v2) / (e2 - e1)


def ball_volume(kf):
    return 4.0 * math.pi * kf ** 3 / 3.0


# ------------------------------------------------------------ slice measure


def test_slice_measure_vanishes_off_support():
    assert slice_measure(2.0, 1.0, 0.5) == 0.0
    assert slice_measure(-5.0, 1.0, 0.5) == 0.0


def test_slice_measure_integrates_to_lens_volume():
    """Integrating the slice area over s recovers the volume of the ball
    shifted against its complement constraint."""
    kf, p = 1.0, 0.35
    s = np.linspace(-kf, kf, 20001)
    vol = float(np.trapezoid(slice_measure(s, kf, p), s))
    # |k| <= kf and |k + p| > kf leaves the ball minus the overlap lens
    d = p / 2.0
    lens = 2.0 * math.pi * (kf - d) ** 2 * (kf + d / 2.0) * (2.0 / 3.0)
    assert vol == pytest.approx(ball_volume(kf) - lens, rel=1e-6)


def test_inner_pair_large_p_limit():
    # far separated shells: the denominator is 2p^2 on the whole domain
    p = 200.0
    v, _ = inner_pair(p, 1.0, 0.7, 0.0, 1, 24, 22)
    want = ball_volume(1.0) * ball_volume(0.7) / (2.0 * p * p)
    assert v == pytest.approx(want, rel=1e-3)


# ------------------------------------------------------------- g and F


def test_g_large_p_behaves_like_x_over_p_squared():
    x, p = 0.5, 50.0
    res = g_pointwise(x, p)
    assert res.value == pytest.approx(x / p ** 2, rel=0.05)
    assert not res.flagged


def test_g_domain_checks():
    with pytest.raises(ValueError):
        g_pointwise(1.5, 1.0)
    with pytest.raises(ValueError):
        g_pointwise(0.5, 0.0)


def test_f_quadrature_against_closed_form():
    for x in (0.5, 1.0):
        res = F_quadrature(x)
        assert not res.flagged
        assert abs(res.value - F_closed(x)) <= 5e-3 * F_closed(x)


def test_f_quadrature_monotone():
    vals = [F_quadrature(x).value for x in (0.25, 0.5, 1.0)]
    assert vals[0] < vals[1] < vals[2]


def test_f_quadrature_reflects_large_arguments():
    big = F_quadrature(2.0)
    small = F_quadrature(0.5)
    assert big.value == pytest.approx(2.0 ** (7.0 / 3.0) * small.value,
                                      rel=1e-12)


# ---------------------------------------------------- principal-value forms


@pytest.mark.parametrize("a,b", [(3.0, 1.0), (2.5, 0.5)])
def test_p_integral_quadratic_vs_epsilon_oracle(a, b):
    want = pv_extrapolated(pv_quadratic_epsilon, a, b)
    assert abs(p_integral_quadratic(a, b) - want) <= 1e-4


@pytest.mark.parametrize("a,b", [(1.5, 0.7), (2.0, -0.4)])
def test_p_integral_linear_vs_epsilon_oracle(a, b):
    want = pv_extrapolated(pv_linear_epsilon, a, b)
    assert abs(p_integral_linear(a, b) - want) <= 1e-4


def test_p_integral_quadratic_even_in_a():
    assert p_integral_quadratic(3.0, 1.0) == pytest.approx(
        p_integral_quadratic(-3.0, 1.0), rel=1e-14)


def test_p_integral_quadratic_decays_for_deep_b():
    vals = [abs(p_integral_quadratic(1.0, b)) for b in (-10.0, -100.0,
                                                        -1000.0)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 0.01


def test_p_integral_domain_errors():
    with pytest.raises(ValueError):
        p_integral_quadratic(1.0, 10.0)
    with pytest.raises(ValueError):
        p_integral_linear(0.0, 1.0)
    with pytest.raises(ValueError):
        p_integral_linear(2.0, 2.0)


def test_ode_residual_small():
    for x in (0.5, 2.0):
        assert ode_check_f(x, h=1e-4) <= 1e-4


def test_ode_residual_gauge_independent():
    r0 = ode_check_f(0.5, h=1e-4, A=0.0)
    r1 = ode_check_f(0.5, h=1e-4, A=25.0)
    assert abs(r0 - r1) <= 1e-3


# ------------------------------------------------------------------ studies


def test_gap_cutoff_study_converges_with_rho():
    params = FermiParams(rho_up=1e-3, rho_down=1e-3)
    cutoff = CutoffConfig(rho=1e-3)
    rows = gap_cutoff_study(params, cutoff, [1e-4, 1e-3, 1e-2])
    assert all(not r["flagged"] for r in rows)
    rel = [r["diff"] / abs(r["i_limit"]) for r in rows]
    assert rel[0] < rel[1] < rel[2]


def test_gap_cutoff_study_needs_positive_densities():
    cutoff = CutoffConfig(rho=1e-3)
    with pytest.raises(ValueError):
        gap_cutoff_study(FermiParams(rho_up=1e-3, rho_down=0.0), cutoff,
                         [1e-3])


def test_lattice_sum_approaches_integral():
    cutoff = CutoffConfig(rho=2e-3)
    rows = lattice_sum_convergence([16.0, 32.0, 64.0, 128.0], cutoff)
    diffs = [r["diff"] for r in rows]
    assert diffs == sorted(diffs, reverse=True)
    # Riemann error of a compact C^2 integrand: roughly one power of L
    assert diffs[-1] <= diffs[0] * (16.0 / 128.0) * 4.0


def test_lattice_sum_rejects_mismatched_density():
    cutoff = CutoffConfig(rho=3e-3)
    with pytest.raises(ValueError):
        lattice_sum_convergence([16.0], cutoff,
                                params=FermiParams(rho_up=1e-3,
                                                   rho_down=1e-3))


def test_singular_bound_finite_and_ordered():
    rows = singular_integral_bound([1e-3, 0.5, 1.0])
    for r in rows:
        assert math.isfinite(r["value"]) and not r["flagged"]
    assert rows[0]["value"] < rows[-1]["value"]


def test_singular_bound_domain():
    with pytest.raises(ValueError):
        singular_integral_bound([1.5])
