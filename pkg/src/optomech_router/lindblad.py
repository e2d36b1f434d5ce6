"""Lindblad master equation: right-hand side, RK4 evolution and steady states.

Conventions
-----------
The dissipator of a channel ``c`` with rate ``r`` is

    r (2 c rho c^dag - c^dag c rho - rho c^dag c)

i.e. the rate multiplies the whole bracket, so ``<c^dag c>`` of a lone decay
channel relaxes at ``2 r``.  Density matrices are vectorized by stacking
columns (Fortran order), for which ``vec(A rho B) = (B^T kron A) vec(rho)``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import ModeSpace, QOperator, SpaceMismatchError

__all__ = [
    "DensityMatrix",
    "CollapseChannel",
    "IntegrationError",
    "DegenerateSteadyStateError",
    "SteadyStateConvergenceError",
    "SteadyStateInfo",
    "cavity_channels",
    "mechanical_channels",
    "vectorize",
    "unvectorize",
    "liouvillian",
    "liouvillian_rhs",
    "default_time_step",
    "evolve",
    "steady_state",
]

log = logging.getLogger(__name__)

TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-9
# dense LU is used up to this many real unknowns; sparse LU beyond
DENSE_LIMIT = 8192
# long-time fallback works on a dense Liouville-space propagator
EVOLVE_DENSE_LIMIT = 4096


class IntegrationError(RuntimeError):
    pass


class DegenerateSteadyStateError(RuntimeError):
    pass


class SteadyStateConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Trace-one Hermitian matrix on a :class:`ModeSpace`.

    Construction checks shape, Hermiticity and trace at ``1e-9``.  Use
    :meth:`normalized` for an unnormalized positive matrix.
    """

    space: ModeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        n = self.space.dim
        if m.shape != (n, n):
            raise SpaceMismatchError(f"density matrix shape {m.shape} does not match dimension {n}")
        herm = float(np.abs(m - m.conj().T).max()) if n else 0.0
        if herm > HERMITIAN_TOL:
            raise ValueError(f"density matrix is not Hermitian (residual {herm:.3g})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr.real:.12g}, expected 1")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def normalized(cls, space: ModeSpace, matrix) -> "DensityMatrix":
        m = np.asarray(matrix, dtype=np.complex128)
        m = 0.5 * (m + m.conj().T)
        return cls(space, m / np.trace(m).real)

    @classmethod
    def pure(cls, space: ModeSpace, vec) -> "DensityMatrix":
        v = np.asarray(vec, dtype=np.complex128)
        if v.shape != (space.dim,):
            raise SpaceMismatchError("state vector length does not match space dimension")
        v = v / np.linalg.norm(v)
        return cls(space, np.outer(v, v.conj()))

    @classmethod
    def vacuum(cls, space: ModeSpace) -> "DensityMatrix":
        v = np.zeros(space.dim, dtype=np.complex128)
        v[0] = 1.0
        return cls.pure(space, v)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def fidelity_with_pure(self, vec) -> float:
        v = np.asarray(vec, dtype=np.complex128)
        return float(np.real(v.conj() @ self.matrix @ v) / np.vdot(v, v).real)


@dataclass(frozen=True)
class CollapseChannel:
    """Jump operator ``op`` with rate ``rate`` (units of the mechanical frequency)."""

    op: QOperator
    rate: float
    label: str = ""

    def __post_init__(self):
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"channel rate must be finite and >= 0, got {self.rate}")
        object.__setattr__(self, "rate", float(self.rate))


def _ladder(space: ModeSpace, label: str) -> QOperator:
    # local import avoids a cycle; model imports nothing from here
    from .model import ladder

    return ladder(space, label)


def cavity_channels(space: ModeSpace, labels: Sequence[str], kappa: float) -> list[CollapseChannel]:
    """Photon loss ``kappa`` on each listed cavity mode."""
    return [CollapseChannel(_ladder(space, lab), kappa, f"{lab}:loss") for lab in labels]


def mechanical_channels(space: ModeSpace, labels: Sequence[str], gamma_m: float,
                        n_th: float = 0.0, literal_heating: bool = False) -> list[CollapseChannel]:
    """Thermal damping of the listed mechanical modes.

    The standard pair is ``gamma_m (n_th + 1)`` on ``b`` and ``gamma_m n_th``
    on ``b^dag``.  ``literal_heating=True`` instead puts the bare ``gamma_m`` on
    the heating channel (the heating term with its ``n_th`` factor left out).
    """
    if n_th < 0:
        raise ValueError("n_th must be >= 0")
    out = []
    for lab in labels:
        b = _ladder(space, lab)
        out.append(CollapseChannel(b, gamma_m * (n_th + 1.0), f"{lab}:down"))
        up = gamma_m if literal_heating else gamma_m * n_th
        if up > 0:
            out.append(CollapseChannel(b.dag(), up, f"{lab}:up"))
    return out


def _check_spaces(space: ModeSpace, H: QOperator, channels: Sequence[CollapseChannel]) -> None:
    if H.space != space:
        raise SpaceMismatchError("Hamiltonian and density matrix live on different spaces")
    for ch in channels:
        if ch.op.space != space:
            raise SpaceMismatchError(f"channel {ch.label or ch.op!r} lives on a different space")


def vectorize(matrix: np.ndarray) -> np.ndarray:
    """Column-stacked ``vec``; inverse of :func:`unvectorize`."""
    return np.asarray(matrix).reshape(-1, order="F")


def unvectorize(vec: np.ndarray, n: int | None = None) -> np.ndarray:
    vec = np.asarray(vec)
    if n is None:
        n = math.isqrt(vec.size)
    if n * n != vec.size:
        raise ValueError(f"vector of length {vec.size} is not a square matrix")
    return vec.reshape((n, n), order="F")


def liouvillian(H: QOperator, channels: Sequence[CollapseChannel]) -> sp.csr_matrix:
    """Sparse superoperator acting on column-stacked ``vec(rho)``."""
    _check_spaces(H.space, H, channels)
    n = H.space.dim
    eye = sp.identity(n, dtype=np.complex128, format="csr")
    h = H.matrix
    L = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for ch in channels:
        if ch.rate == 0:
            continue
        c = ch.op.matrix
        cdc = (c.conj().T @ c).tocsr()
        L = L + ch.rate * (2.0 * sp.kron(c.conj(), c) - sp.kron(eye, cdc) - sp.kron(cdc.T, eye))
    L = L.tocsr()
    L.sum_duplicates()
    L.eliminate_zeros()
    return L


def _rhs(h, jumps, rho):
    # rho is Hermitian at every RK4 stage, so rho A = (A rho)^dag for Hermitian
    # A and c rho c^dag = c (c rho)^dag; only sparse-left products are needed
    hr = h @ rho
    out = -1j * (hr - hr.conj().T)
    for r, c, cd, cdc in jumps:
        nr = cdc @ rho
        out += r * (2.0 * (c @ (c @ rho).conj().T) - nr - nr.conj().T)
    return out


def _jumps(channels):
    out = []
    for ch in channels:
        if ch.rate == 0:
            continue
        c = ch.op.matrix
        cd = c.conj().T.tocsr()
        out.append((ch.rate, c, cd, (cd @ c).tocsr()))
    return out


def liouvillian_rhs(H: QOperator, channels: Sequence[CollapseChannel],
                    rho: DensityMatrix) -> np.ndarray:
    """``d rho / dt`` as a dense matrix (Hermitian, traceless)."""
    _check_spaces(rho.space, H, channels)
    return _rhs(H.matrix, _jumps(channels), np.asarray(rho.matrix))


def _gershgorin(m: sp.spmatrix) -> float:
    if m.nnz == 0:
        return 0.0
    return float(np.abs(m).sum(axis=1).max())


def default_time_step(H: QOperator, channels: Sequence[CollapseChannel],
                      frequency_scale: float | None = None) -> float:
    """RK4 step ``0.02 / scale``.

    ``scale`` defaults to an upper bound on the generator's spectral radius:
    the Gershgorin bound of ``H`` plus ``2 rate ||c^dag c||`` per channel.  It
    is never smaller than the model's bare frequency scale, so the step also
    satisfies any bound expressed through ``|Delta| + 2J``, ``omega_m``,
    ``g`` or ``kappa`` for the truncations used here.
    """
    if frequency_scale is None:
        diag = H.matrix.diagonal()
        shift = float(np.mean(diag.real)) if diag.size else 0.0
        centred = H.matrix - shift * sp.identity(H.space.dim, format="csr")
        scale = _gershgorin(centred)
        for ch in channels:
            c = ch.op.matrix
            scale += 2.0 * ch.rate * _gershgorin(c.conj().T @ c)
    else:
        scale = float(frequency_scale)
    if not scale > 0:
        raise ValueError("cannot choose a time step for a vanishing generator")
    return 0.02 / scale


def evolve(H: QOperator, channels: Sequence[CollapseChannel], rho0: DensityMatrix,
           t_final: float, *, dt: float | None = None,
           frequency_scale: float | None = None) -> DensityMatrix:
    """Fixed-step RK4 integration of the master equation to ``t_final``.

    The last step is shortened to land on ``t_final`` exactly.  Trace drift
    above ``1e-9`` is renormalized and logged; drift above ``1e-6`` raises
    :class:`IntegrationError`.
    """
    if t_final < 0 or not np.isfinite(t_final):
        raise ValueError("t_final must be finite and >= 0")
    _check_spaces(rho0.space, H, channels)
    if t_final == 0:
        return rho0
    if dt is None:
        dt = default_time_step(H, channels, frequency_scale)
    if not dt > 0:
        raise ValueError("dt must be > 0")
    n_steps = max(1, math.ceil(t_final / dt - 1e-12))
    h = H.matrix
    jumps = _jumps(channels)
    rho = np.array(rho0.matrix)
    t = 0.0
    renorms = 0
    for k in range(n_steps):
        step = min(dt, t_final - t)
        k1 = _rhs(h, jumps, rho)
        k2 = _rhs(h, jumps, rho + 0.5 * step * k1)
        k3 = _rhs(h, jumps, rho + 0.5 * step * k2)
        k4 = _rhs(h, jumps, rho + step * k3)
        rho = rho + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += step
        drift = abs(np.trace(rho) - 1.0)
        if drift > 1e-6 or not np.isfinite(drift):
            raise IntegrationError(f"trace drift {drift:.3g} at t={t:.6g}; reduce the time step")
        if drift > TRACE_TOL:
            rho /= np.trace(rho)
            renorms += 1
    if renorms:
        log.info("evolve: trace renormalized %d times over %d steps", renorms, n_steps)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho0.space, rho / np.trace(rho).real)


# -- steady state -----------------------------------------------------------

@dataclass
class SteadyStateInfo:
    method: str
    residual: float
    unknowns: int
    rcond: float | None = None
    sector_checked: bool = False
    notes: list[str] = field(default_factory=list)


def _check_parity(parity: np.ndarray, H: QOperator, channels) -> None:
    """Verify ``P H P = H`` and ``P c P = +-c`` for ``P = diag(parity)``."""
    def signs(m):
        coo = m.tocoo()
        return parity[coo.row] * parity[coo.col]

    s = signs(H.matrix)
    if s.size and np.any(s != 1):
        raise ValueError("parity does not commute with the Hamiltonian")
    for ch in channels:
        s = signs(ch.op.matrix)
        if s.size and not (np.all(s == 1) or np.all(s == -1)):
            raise ValueError(f"channel {ch.label or ch.op!r} mixes parity sectors")


def _hermitian_basis(n: int, parity: np.ndarray | None):
    """Real parametrization of Hermitian matrices (optionally parity-blocked).

    Returns ``T`` (complex, ``n^2 x m``) with ``vec(rho) = T x``, plus the
    vec indices and part (0 real, 1 imaginary) that read ``x`` back.
    """
    iu, ju = np.triu_indices(n, 1)
    if parity is not None:
        keep = parity[iu] == parity[ju]
        iu, ju = iu[keep], ju[keep]
    d = np.arange(n)
    n_d, n_o = n, iu.size
    m = n_d + 2 * n_o
    cols_d = np.arange(n_d)
    cols_re = n_d + np.arange(n_o)
    cols_im = n_d + n_o + np.arange(n_o)
    vij = iu + ju * n
    vji = ju + iu * n
    rows = np.concatenate([d + d * n, vij, vji, vij, vji])
    cols = np.concatenate([cols_d, cols_re, cols_re, cols_im, cols_im])
    vals = np.concatenate([np.ones(n_d), np.ones(n_o), np.ones(n_o),
                           1j * np.ones(n_o), -1j * np.ones(n_o)])
    T = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, m), dtype=np.complex128)
    read_idx = np.concatenate([d + d * n, vij, vij])
    read_part = np.concatenate([np.zeros(n_d + n_o, dtype=int), np.ones(n_o, dtype=int)])
    return T, read_idx, read_part


def _real_system(L: sp.csr_matrix, T, read_idx, read_part) -> sp.csr_matrix:
    LT = (L @ T).tocsr()[read_idx]
    re = LT.real.tocsr()
    im = LT.imag.tocsr()
    sel_re = sp.diags((read_part == 0).astype(float))
    sel_im = sp.diags((read_part == 1).astype(float))
    M = (sel_re @ re + sel_im @ im).tocsr()
    M.eliminate_zeros()
    return M


def _solve_direct(L, n, parity, dense_limit):
    T, read_idx, read_part = _hermitian_basis(n, parity)
    M = _real_system(L, T, read_idx, read_part).tolil()
    m = M.shape[0]
    # d(rho_00)/dt is redundant given trace preservation; swap in tr(rho) = 1
    trace_row = np.zeros(m)
    trace_row[:n] = 1.0
    M[0, :] = trace_row
    rhs = np.zeros(m)
    rhs[0] = 1.0
    rcond = None
    if m <= dense_limit:
        A = M.toarray()
        anorm = np.abs(A).sum(axis=0).max()
        with warnings.catch_warnings():
            # singularity is judged from rcond below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        rcond = float(scipy.linalg.lapack.dgecon(lu, anorm, norm="1")[0])
        if rcond < 1e-14:
            raise DegenerateSteadyStateError(
                f"steady state is not unique (reciprocal condition {rcond:.2g})"
            )
        x = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    else:
        try:
            x = spla.splu(M.tocsc(), permc_spec="COLAMD").solve(rhs)
        except RuntimeError as exc:
            raise DegenerateSteadyStateError(f"steady-state system is singular: {exc}") from exc
    vec = T @ x
    return unvectorize(vec, n), m, rcond


def _solve_long_time(L, H, channels, n, rho0, tol, max_doublings, dt):
    """Fixed-step RK4 run to very long times via repeated squaring.

    The one-step RK4 map ``P = sum_k (dt L)^k / k!`` (k <= 4) is exactly what
    :func:`evolve` applies each step, so ``P^(2^j)`` is ``2^j`` RK4 steps.
    The stationary state is a fixed point of ``P`` since ``P v = v`` when
    ``L v = 0``.
    """
    if n * n > EVOLVE_DENSE_LIMIT:
        raise SteadyStateConvergenceError(
            f"long-time method limited to {EVOLVE_DENSE_LIMIT} Liouville dimensions, got {n * n}"
        )
    if dt is None:
        dt = default_time_step(H, channels)
    A = dt * L.toarray()
    P = np.eye(n * n, dtype=np.complex128)
    term = np.eye(n * n, dtype=np.complex128)
    for k in range(1, 5):
        term = term @ A / k
        P += term
    v = vectorize(rho0) if rho0 is not None else vectorize(np.eye(n) / n)
    res = np.inf
    for j in range(max_doublings):
        v = P @ v
        v = v / np.trace(unvectorize(v, n))
        res = float(np.abs(L @ v).max())
        if res < tol:
            return unvectorize(v, n), j + 1, res
        P = P @ P
    raise SteadyStateConvergenceError(
        f"long-time evolution did not converge (max |L rho| = {res:.3g} after "
        f"{dt * 2.0 ** max_doublings:.3g} time units)"
    )


def steady_state(H: QOperator, channels: Sequence[CollapseChannel], *,
                 method: str = "direct", parity=None, dense_limit: int = DENSE_LIMIT,
                 residual_tol: float = 1e-9, rho0: np.ndarray | None = None,
                 long_time_tol: float = 1e-10, max_doublings: int = 60,
                 dt: float | None = None, return_info: bool = False):
    """Stationary solution of the master equation.

    Parameters
    ----------
    method : {"direct", "evolve"}
        ``direct`` solves ``L rho = 0`` with ``tr rho = 1`` in a real
        parametrization of Hermitian matrices (dense LU, sparse LU above
        ``dense_limit`` unknowns).  ``evolve`` runs fixed-step RK4 to long
        times until ``max |L rho| < long_time_tol``.
    parity : array of +-1, optional
        Diagonal symmetry ``P`` with ``[H, P] = 0`` and every jump operator
        even or odd under ``P``.  The unique steady state is then block
        diagonal, so only same-parity coherences are solved for.  The
        symmetry is verified before use.
    return_info : bool
        Also return a :class:`SteadyStateInfo`.

    Raises
    ------
    DegenerateSteadyStateError
        The stationary state is not unique.
    SteadyStateConvergenceError
        The residual check or the long-time method failed.
    """
    space = H.space
    _check_spaces(space, H, channels)
    n = space.dim
    L = liouvillian(H, channels)
    par = None
    if parity is not None:
        par = np.asarray(parity)
        if par.shape != (n,) or not np.all(np.abs(par) == 1):
            raise ValueError("parity must be a vector of +-1 with one entry per basis state")
        _check_parity(par, H, channels)

    info = SteadyStateInfo(method=method, residual=np.nan, unknowns=n * n,
                           sector_checked=par is not None)
    if method == "direct":
        rho, info.unknowns, info.rcond = _solve_direct(L, n, par, dense_limit)
    elif method == "evolve":
        rho, doublings, _ = _solve_long_time(L, H, channels, n, rho0, long_time_tol,
                                             max_doublings, dt)
        info.notes.append(f"{doublings} propagator squarings")
    else:
        raise ValueError(f"unknown steady-state method {method!r}")

    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    info.residual = float(np.abs(L @ vectorize(rho)).max())
    if info.residual > residual_tol:
        raise SteadyStateConvergenceError(
            f"steady-state residual {info.residual:.3g} exceeds {residual_tol:.3g}"
        )
    out = DensityMatrix(space, rho)
    return (out, info) if return_info else out
