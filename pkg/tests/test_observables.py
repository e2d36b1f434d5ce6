import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech_router.fock import ModeSpace, annihilation, basis_state
from optomech_router.lindblad import DensityMatrix
from optomech_router.model import blockade_params, blockade_params_wide_hopping, ladder
from optomech_router.observables import (
    Truncation,
    UndefinedCorrelationError,
    blockade_point,
    blockade_scan,
    blockade_system,
    default_grid,
    expectation,
    g2_equal_time,
    resolve_jobs,
)


def coherent_state(dim, alpha):
    n = np.arange(dim)
    amp = np.exp(-abs(alpha) ** 2 / 2) * alpha ** n / np.sqrt(np.array([math.factorial(int(k)) for k in n], dtype=float))
    return amp.astype(np.complex128)


def thermal_state(dim, nbar):
    p = (nbar / (1 + nbar)) ** np.arange(dim) / (1 + nbar)
    return np.diag(p / p.sum()).astype(np.complex128)


def test_coherent_g2_is_one():
    a = annihilation(40)
    rho = DensityMatrix.pure(a.space, coherent_state(40, 0.7 + 0.2j))
    assert g2_equal_time(rho, a) == pytest.approx(1.0, abs=1e-3)


def test_single_photon_g2_is_zero():
    a = annihilation(5)
    rho = DensityMatrix.pure(a.space, basis_state(a.space, (1,)))
    assert g2_equal_time(rho, a) == 0.0


def test_thermal_g2_is_two():
    a = annihilation(80)
    rho = DensityMatrix(a.space, thermal_state(80, 0.3))
    assert g2_equal_time(rho, a) == pytest.approx(2.0, abs=1e-3)


def test_vacuum_g2_is_undefined():
    a = annihilation(3)
    with pytest.raises(UndefinedCorrelationError):
        g2_equal_time(DensityMatrix.vacuum(a.space), a)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_g2_nonnegative_and_cross_symmetric(seed):
    space = ModeSpace((3, 3), ("x", "y"))
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    rho = DensityMatrix.normalized(space, m @ m.conj().T)
    x, y = ladder(space, "x"), ladder(space, "y")
    assert g2_equal_time(rho, x) >= 0
    assert abs(g2_equal_time(rho, x, y) - g2_equal_time(rho, y, x)) < 1e-10


def test_expectation_matches_dense_trace():
    a = annihilation(6)
    rho = DensityMatrix(a.space, thermal_state(6, 0.5))
    op = a + a.dag() @ a
    assert expectation(rho, op) == pytest.approx(np.trace(rho.matrix @ op.to_dense()))


def test_g2_invariant_under_drive_rescaling_without_coupling():
    trunc = Truncation(4, 3, 3)
    vals = []
    for scale in (1.0, 0.5):
        p = blockade_params(g=0.0, eps1=1.1e-4 * scale, eps2=-1.1e-4 * scale)
        vals.append(blockade_point(p, 0.01, trunc=trunc).g2_mm)
    assert abs(vals[0] - vals[1]) < 1e-3


def test_effective_point_frozen_values():
    pt = blockade_point(blockade_params(), 0.015)
    assert pt.ok
    assert pt.g2_mm == pytest.approx(0.004744003230220971, rel=1e-6)
    assert pt.g2_pp == pytest.approx(0.5197569578615481, rel=1e-6)
    assert pt.g2_mp == pytest.approx(0.2616027569193399, rel=1e-6)
    assert pt.n_minus == pytest.approx(0.00010139638929309711, rel=1e-6)
    assert pt.residual < 1e-9


def test_original_point_frozen_values():
    pt = blockade_point(blockade_params(), 0.021, "original", Truncation(3, 2, 3, 2))
    assert pt.g2_mm == pytest.approx(0.09686975077768245, rel=1e-6)
    assert pt.g2_pp == pytest.approx(0.13121970789075008, rel=1e-6)
    assert pt.g2_mp == pytest.approx(0.10315552344246473, rel=1e-6)


def test_quasi_and_physical_bases_agree():
    trunc = Truncation(3, 2, 3, 3, phonon_cap=2)
    a = blockade_point(blockade_params(), 0.02, "original", trunc, basis="quasi")
    b = blockade_point(blockade_params(), 0.02, "original", trunc, basis="physical")
    assert np.allclose(a.g2(), b.g2(), rtol=1e-8, atol=0)


def test_convergence_flag():
    pt = blockade_point(blockade_params(), 0.021, check_convergence=True)
    assert pt.converged == "true"
    assert pt.max_rel_change < 0.05


def test_undefined_correlators_are_reported_per_column():
    pt = blockade_point(blockade_params(g=0.0), 0.01, trunc=Truncation(4, 3, 3))
    assert pt.ok
    assert pt.status == "partial: undefined g2_pp g2_mp"
    assert math.isnan(pt.g2_pp) and pt.n_plus == pytest.approx(0.0, abs=1e-15)
    assert pt.g2_mm == pytest.approx(1.0, abs=1e-3)


def test_failures_are_reported_not_raised():
    # off the three-wave resonance the effective model cannot be built
    pt = blockade_point(blockade_params_wide_hopping(), 0.0, "effective")
    assert not pt.ok
    assert pt.status.startswith("failed: RWAConditionError")
    assert math.isnan(pt.g2_mm)


def test_truncation_defaults_and_raising():
    assert Truncation.default("effective").mech_dim == 5
    assert Truncation.default("original").mech_dim == 4
    names = [n for n, _ in Truncation().raised("original")]
    assert names == ["photons", "phonons", "phonons_plus"]
    photons = dict(Truncation().raised("effective"))["photons"]
    assert (photons.cavity_dim, photons.photon_cap) == (5, 4)


def test_blockade_system_parity_and_labels():
    H, ch, ops, parity = blockade_system(blockade_params(), "original", Truncation(3, 2, 2, 2))
    assert H.space.labels == ("a_minus", "a_plus", "b_minus", "b_plus")
    assert parity is not None and set(np.unique(parity)) == {-1, 1}
    _, _, _, parity = blockade_system(blockade_params(), "original", Truncation(3, 2, 2, 2),
                                      basis="physical")
    assert parity is None
    with pytest.raises(ValueError):
        blockade_system(blockade_params(), "other", Truncation())


def test_scan_argmins_and_parallel_determinism():
    grid = np.linspace(-0.03, 0.03, 13)
    s1 = blockade_scan(blockade_params(), grid, convergence="none")
    s2 = blockade_scan(blockade_params(), grid, convergence="none", jobs=2)
    assert np.array_equal(s1.column("g2_mm"), s2.column("g2_mm"))
    assert s1.argmin_by_sign("g2_mm") == pytest.approx((-0.015, 0.015), abs=1e-12)
    assert abs(s1.argmin("g2_pp")) == pytest.approx(0.02, abs=1e-12)
    assert s1.n_failed == 0
    assert len(s1.rows()) == 13


def test_scan_input_validation():
    with pytest.raises(ValueError):
        blockade_scan(blockade_params(), [], convergence="none")
    with pytest.raises(ValueError):
        blockade_scan(blockade_params(), [0.0], convergence="sometimes")


def test_default_grid_and_jobs(monkeypatch):
    g = default_grid()
    assert g.size == 201 and g[0] == -0.1 and g[-1] == 0.1
    assert g[1] - g[0] == pytest.approx(1e-3)
    monkeypatch.setenv("OPTOMECH_ROUTER_JOBS", "3")
    assert resolve_jobs(None) == 3
    with pytest.raises(ValueError):
        resolve_jobs(0)
