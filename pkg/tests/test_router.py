import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech_router.router import (
    PORTS,
    RouterParams,
    local_extrema,
    optimum_surface,
    port_amplitudes,
    port_numbers_closed_form,
    port_numbers_integrated,
    port_numbers_windowed,
    router_scan,
)

g_st = st.floats(0.0, 0.08)
gamma_st = st.floats(0.005, 0.05)
dp_st = st.floats(-0.1, 0.1)
eps_st = st.sampled_from([1e-4, 5e-4, 2e-3])


@given(st.floats(-1.0, 1.0), g_st, gamma_st)
def test_amplitude_flux_is_conserved(u, g, gamma):
    assert port_amplitudes(u, g, gamma).flux() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(g_st, gamma_st, dp_st, eps_st)
def test_integrated_ports_are_normalized_and_plus_symmetric(g, gamma, dp, eps):
    n = port_numbers_integrated(RouterParams(g=g, gamma=gamma, delta_prime=dp, epsilon=eps))
    assert abs(n.total - 1.0) < 1e-4
    assert n.n_r_plus == n.n_l_plus
    assert np.all(n.as_array() >= -1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 0.08), gamma_st, dp_st, eps_st)
def test_residue_closed_form_matches_integration(g, gamma, dp, eps):
    p = RouterParams(g=g, gamma=gamma, delta_prime=dp, epsilon=eps)
    a = port_numbers_integrated(p).as_array()
    b = port_numbers_closed_form(p)
    assert np.abs(a - b.as_array()).max() < 1e-8
    assert b.imag_residual < 1e-10


def test_legacy_closed_form_disagrees():
    p = RouterParams(g=0.04, gamma=0.01, delta_prime=0.01)
    legacy = port_numbers_closed_form(p, "legacy")
    assert np.allclose(legacy.as_array(),
                       [1.02403574294901, -1.028353372158184, 0.502158814604587, 0.502158814604587],
                       rtol=1e-9)
    assert legacy.imag_residual > 1.0
    with pytest.raises(ValueError):
        port_numbers_closed_form(RouterParams(g=0.0, gamma=0.01), "legacy")
    with pytest.raises(ValueError):
        port_numbers_closed_form(p, "other")


def test_frozen_port_numbers():
    n = port_numbers_integrated(RouterParams(g=0.04, gamma=0.01, delta_prime=0.01))
    assert np.allclose(n.as_array(),
                       [0.734180374102257, 0.030085208046996, 0.117867208925373, 0.117867208925373],
                       rtol=0, atol=1e-10)


def test_frozen_amplitudes():
    a = port_amplitudes(0.01, 0.04, 0.01)
    assert a.r_minus == pytest.approx(1.2062409796711695 + 0.12478354962115545j, abs=1e-14)
    assert a.l_minus == pytest.approx(-0.20797258270192576 + 0.12478354962115545j, abs=1e-14)
    assert a.r_plus == a.l_plus == pytest.approx(-2 / 17 + 8j / 17, abs=1e-14)


@given(gamma_st, dp_st, eps_st)
def test_two_port_limit(gamma, dp, eps):
    n = port_numbers_integrated(RouterParams(g=0.0, gamma=gamma, delta_prime=dp, epsilon=eps))
    assert n.n_r_plus == n.n_l_plus == 0.0
    lorentz = gamma * (gamma + eps) / (dp ** 2 + (gamma + eps) ** 2)
    assert n.n_l_minus == pytest.approx(lorentz, abs=1e-8)


def test_small_coupling_is_continuous():
    p = RouterParams(g=1e-7, gamma=0.01, delta_prime=0.003)
    n = port_numbers_integrated(p)
    assert n.n_r_plus < 1e-9
    ref = port_numbers_integrated(RouterParams(g=0.0, gamma=0.01, delta_prime=0.003))
    assert np.abs(n.as_array() - ref.as_array()).max() < 1e-8


@pytest.mark.parametrize("dp", [2.2250738585072014e-308, 1e-300, 1e-13])
def test_detuning_next_to_a_breakpoint(dp):
    # a near-coincident pair of quadrature breakpoints once broke QUADPACK
    p = RouterParams(g=0.03125, gamma=0.0234375, delta_prime=dp)
    a = port_numbers_integrated(p).as_array()
    assert np.abs(a - port_numbers_closed_form(p).as_array()).max() < 1e-8
    w = port_numbers_windowed(p, -0.1, 0.1).as_array()
    assert sum(w) == pytest.approx(1.0, abs=1e-9)


def test_no_waveguide_coupling_passes_straight_through():
    assert port_amplitudes(0.3, 0.04, 0.0).r_minus == math.sqrt(2)
    n = port_numbers_integrated(RouterParams(g=0.04, gamma=0.0))
    assert np.allclose(n.as_array(), [1.0, 0.0, 0.0, 0.0], rtol=0, atol=1e-15)


@pytest.mark.parametrize("gamma", [0.005, 0.01, 0.03])
def test_reflection_decreases_with_coupling(gamma):
    gs = np.linspace(0.0, gamma * math.sqrt(2), 41)
    n_l = [port_numbers_integrated(RouterParams(g=g, gamma=gamma, epsilon=1e-4)).n_l_minus
           for g in gs]
    assert np.max(np.diff(n_l)) <= 1e-6


def test_windowed_packet_tends_to_full_packet():
    p = RouterParams(g=0.03, gamma=0.02, delta_prime=0.01, epsilon=2e-3)
    full = port_numbers_integrated(p).as_array()
    wide = port_numbers_windowed(p, -10.0, 10.0).as_array()
    narrow = port_numbers_windowed(p, -0.1, 0.1).as_array()
    assert np.abs(wide - full).max() < 1e-4
    assert np.abs(narrow - full).max() > np.abs(wide - full).max()
    assert sum(narrow) == pytest.approx(1.0, abs=1e-9)


def test_scan_splits_reflection_peak():
    scan = router_scan(RouterParams(g=0.04, gamma=0.01), np.linspace(-0.1, 0.1, 201))
    assert np.abs(scan.totals - 1).max() < 1e-4
    assert np.array_equal(scan.column("n_r_plus"), scan.column("n_l_plus"))
    peaks = scan.extrema("n_l_minus")["maxima"]
    assert len(peaks) == 2 and peaks[0] == -peaks[1]
    assert all(s == "ok" for s in scan.status)


def test_scan_parallel_matches_serial():
    grid = np.linspace(-0.05, 0.05, 9)
    a = router_scan(RouterParams(g=0.02, gamma=0.01), grid)
    b = router_scan(RouterParams(g=0.02, gamma=0.01), grid, jobs=2)
    assert np.array_equal(a.numbers, b.numbers)


def test_optimum_surface_frozen_argmax():
    s = optimum_surface([0.0, 0.02, 0.04, 0.06], np.geomspace(0.005, 0.08, 40))
    assert math.isnan(s.argmax_gamma[0])
    assert np.allclose(s.argmax_gamma[1:], [0.014524228561143, 0.027540189023885,
                                            0.042190643059266], rtol=1e-9)


def test_local_extrema():
    y = np.array([0, 1, 0, 0, 2, 0, 1, 1, 0])
    mx, mn = local_extrema(y)
    assert mx.tolist() == [1, 4]
    assert mn.tolist() == [5]
    assert local_extrema([1, 2])[0].size == 0


def test_params_validation_and_helpers():
    with pytest.raises(ValueError):
        RouterParams(g=0.01, gamma=-1)
    with pytest.raises(ValueError):
        RouterParams(g=0.01, gamma=0.01, epsilon=0)
    with pytest.raises(ValueError):
        RouterParams(g=float("nan"), gamma=0.01)
    p = RouterParams(g=0.01, gamma=0.01, epsilon=1e-3)
    assert p.packet_norm == pytest.approx(1.0)
    assert RouterParams(g=0.01, gamma=0.01, G1=2.0).packet_norm == pytest.approx(4e4 * math.pi)
    n = port_numbers_integrated(p)
    assert list(n.as_dict()) == list(PORTS)
