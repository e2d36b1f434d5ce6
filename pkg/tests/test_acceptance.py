"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Blockade scans and the oracle comparison take minutes and carry the
``slow`` marker; deselect them with ``-m "not slow"``.
"""
import math
import time

import numpy as np
import pytest

from optomech_router.fock import annihilation, commutator, creation, embed, ModeSpace
from optomech_router.lindblad import CollapseChannel, DensityMatrix, steady_state
from optomech_router.model import (
    blockade_params,
    build_effective_hamiltonian,
    build_original_hamiltonian,
    build_quasimode_hamiltonian,
    effective_space,
    physical_space,
    quasimode_space,
    quasimode_state_transform,
)
from optomech_router.observables import blockade_scan, default_grid, expectation, g2_equal_time
from optomech_router.router import RouterParams, optimum_surface, router_scan
from optomech_router.waveguide_oracle import compare_with_router, random_tuples

G = 0.03
TARGET = G / math.sqrt(2)
GRID = default_grid()
STEP = GRID[1] - GRID[0]
ROUTER_GRID = np.linspace(-0.1, 0.1, 801)
ROUTER_STEP = ROUTER_GRID[1] - ROUTER_GRID[0]
CORRELATORS = ("g2_mm", "g2_pp", "g2_mp")


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def effective_scan():
    return _timed(blockade_scan, blockade_params(), GRID, "effective")


@pytest.fixture(scope="module")
def original_scan():
    return _timed(blockade_scan, blockade_params(), GRID, "original")


@pytest.fixture(scope="module")
def default_router_scans():
    return {g: router_scan(RouterParams(g=g, gamma=0.01, epsilon=1e-4), ROUTER_GRID)
            for g in (0.0, 0.02, 0.04, 0.05)}


def _within_step(pair, target, step):
    # one grid step, with slack for round-off in the grid itself
    return all(abs(abs(x) - target) <= step * (1 + 1e-9) for x in pair)


@pytest.mark.slow
def test_criterion_01_blockade_minima(report, effective_scan, original_scan):
    (eff, t_eff), (orig, t_orig) = effective_scan, original_scan
    e, o = eff.argmin_by_sign("g2_mm"), orig.argmin_by_sign("g2_mm")
    ok = (_within_step(e, TARGET, STEP) and _within_step(o, TARGET, STEP)
          and t_eff <= 600 and t_orig <= 3600 and eff.n_failed == orig.n_failed == 0)
    detail = (f"argmin g2_mm effective {e[0]:+.3f}/{e[1]:+.3f} ({t_eff:.0f} s), "
              f"original {o[0]:+.3f}/{o[1]:+.3f} ({t_orig:.0f} s); "
              f"target +-{TARGET:.4f} within {STEP:.3f}")
    report(1, ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_02_effective_matches_original(report, effective_scan, original_scan):
    eff, orig = effective_scan[0], original_scan[0]
    parts, ok = [], True
    for name in CORRELATORS:
        e, o = eff.argmin_by_sign(name), orig.argmin_by_sign(name)
        same = all(abs(a - b) <= STEP * (1 + 1e-9) for a, b in zip(e, o))
        ok &= same
        parts.append(f"{name} {e[0]:+.3f}/{e[1]:+.3f} vs {o[0]:+.3f}/{o[1]:+.3f}")
    detail = "; ".join(parts)
    report(2, ok, detail)
    assert ok, detail


def test_criterion_03_router_normalization(report, default_router_scans):
    worst = max(float(np.abs(s.totals - 1).max()) for s in default_router_scans.values())
    ok = worst <= 1e-4
    detail = f"max |sum - 1| = {worst:.2e} over 4 x 801 points"
    report(3, ok, detail)
    assert ok, detail


def test_criterion_04_two_port_degeneration(report, default_router_scans):
    s = default_router_scans[0.0]
    plus_zero = not s.column("n_r_plus").any() and not s.column("n_l_plus").any()
    centre = s.column("n_l_minus")[400]
    ok = plus_zero and centre >= 0.99 and s.delta_prime[400] == 0.0
    detail = f"plus ports identically 0: {plus_zero}; n_l_minus(0) = {centre:.5f}"
    report(4, ok, detail)
    assert ok, detail


def test_criterion_05_peak_splitting(report, default_router_scans):
    s = default_router_scans[0.05]
    peaks = s.extrema("n_l_minus")["maxima"]
    target = 0.05 / math.sqrt(2)
    ok = len(peaks) == 2 and _within_step(peaks, target, ROUTER_STEP)
    detail = (f"{len(peaks)} maxima at {', '.join(f'{x:+.5f}' for x in peaks)}; "
              f"target +-{target:.5f} within {ROUTER_STEP:.5f}")
    report(5, ok, detail)
    assert ok, detail


def test_criterion_06_plus_port_symmetry(report, default_router_scans):
    ok = all(np.array_equal(s.column("n_r_plus"), s.column("n_l_plus"))
             for s in default_router_scans.values())
    surf = optimum_surface([0.02, 0.04], np.geomspace(0.005, 0.08, 8))
    ok &= bool(np.isfinite(surf.n_r_plus).all())
    detail = "n_r_plus == n_l_plus bitwise at every scanned point" if ok else "asymmetry found"
    report(6, ok, detail)
    assert ok, detail


def test_criterion_07_optimum_ridge(report):
    g_list = [0.02, 0.04, 0.06]
    surf, elapsed = _timed(optimum_surface, g_list, np.geomspace(0.005, 0.08, 40))
    rel = np.abs(surf.argmax_gamma / (np.array(g_list) / math.sqrt(2)) - 1)
    ok = bool(np.all(rel <= 0.15)) and elapsed <= 60
    detail = ", ".join(f"g={g}: gamma*={b:.4f} ({r:.1%})"
                       for g, b, r in zip(g_list, surf.argmax_gamma, rel))
    report(7, ok, f"{detail}; {elapsed:.1f} s")
    assert ok, detail


@pytest.mark.slow
def test_criterion_08_oracle_equivalence(report):
    cmp, elapsed = _timed(compare_with_router, random_tuples(20, seed=0), refine_every=4)
    refine = max(cmp.refinement_changes().values())
    ok = cmp.max_abs_diff_integrated <= 0.02 and refine < 0.005 and elapsed <= 600
    detail = (f"max |oracle - integrated| = {cmp.max_abs_diff_integrated:.4f} "
              f"(band-limited {cmp.max_abs_diff:.4f}); "
              f"refinement change {refine:.1e} on {len(cmp.refined)} tuples; {elapsed:.0f} s")
    report(8, ok, detail)
    assert ok, detail


def test_criterion_09_linear_cavity_oracles(report):
    delta, kappa, eps = 0.4, 0.3, 0.05
    a = annihilation(14)
    H = delta * (a.dag() @ a) + eps * (a + a.dag())
    amp = expectation(steady_state(H, [CollapseChannel(a, kappa)]), a)
    err_amp = abs(amp - (-1j * eps / (1j * delta + kappa)))

    dim = 60
    n = np.arange(dim)
    alpha = 0.8
    logfact = np.array([math.lgamma(k + 1) for k in n])
    coh = np.exp(-alpha ** 2 / 2 + n * math.log(alpha) - 0.5 * logfact)
    a = annihilation(dim)
    g2_coh = g2_equal_time(DensityMatrix.pure(a.space, coh), a)
    fock1 = np.zeros(dim)
    fock1[1] = 1
    g2_fock = g2_equal_time(DensityMatrix.pure(a.space, fock1), a)
    p = (0.5 / 1.5) ** n
    g2_th = g2_equal_time(DensityMatrix.normalized(a.space, np.diag(p)), a)

    ok = err_amp < 1e-6 and abs(g2_coh - 1) < 1e-3 and g2_fock == 0.0 and abs(g2_th - 2) < 1e-3
    detail = (f"|<a> error| {err_amp:.1e}; g2 coherent {g2_coh:.6f}, "
              f"Fock {g2_fock}, thermal {g2_th:.6f}")
    report(9, ok, detail)
    assert ok, detail


def test_criterion_10_operator_algebra(report):
    t0 = time.perf_counter()
    checks = {}
    checks["sqrt_n"] = all(
        np.allclose(annihilation(d).to_dense(), np.diag(np.sqrt(np.arange(1, d)), 1), rtol=0,
                    atol=0) for d in range(2, 12))
    c = commutator(annihilation(6), creation(6)).to_dense()
    checks["commutator"] = np.allclose(c[:5, :5], np.eye(5), rtol=0, atol=1e-14)
    space = ModeSpace((3, 4, 2))
    checks["embed_sparsity"] = embed(annihilation(4), 1, space).nnz == 3 * 3 * 2
    prm = blockade_params().with_delta_minus(0.02)
    phys, quasi = physical_space(4, 3, 3, 2), quasimode_space(4, 3, 3, 2, mech_plus_dim=3)
    Hs = (build_original_hamiltonian(prm, phys), build_quasimode_hamiltonian(prm, quasi),
          build_effective_hamiltonian(prm, effective_space(4, 5, 3)))
    checks["hermitian"] = all(H.hermiticity_residual() < 1e-12 for H in Hs)
    rng = np.random.default_rng(1)
    psi = rng.normal(size=phys.dim) + 1j * rng.normal(size=phys.dim)
    back = quasimode_state_transform(
        "quasi->physical", quasimode_state_transform("physical->quasi", psi, phys), quasi)
    checks["round_trip"] = float(np.abs(back - psi).max()) < 1e-12
    e1 = np.linalg.eigvalsh(Hs[0].to_dense())[:10]
    e2 = np.linalg.eigvalsh(Hs[1].to_dense())[:10]
    checks["spectra"] = float(np.abs(e1 - e2).max()) < 1e-8
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 30
    detail = ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    report(10, ok, f"{detail}; {elapsed:.1f} s")
    assert ok, detail
