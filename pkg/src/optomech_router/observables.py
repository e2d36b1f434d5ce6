"""Expectation values, equal-time g2 and the blockade parameter scan."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .fock import ModeSpace, QOperator, SpaceMismatchError
from .lindblad import (
    CollapseChannel,
    DensityMatrix,
    cavity_channels,
    mechanical_channels,
    steady_state,
)
from .model import (
    SystemParams,
    build_effective_hamiltonian,
    build_original_hamiltonian,
    build_quasimode_hamiltonian,
    effective_space,
    ladder,
    physical_space,
    quasimode_space,
)

__all__ = [
    "UndefinedCorrelationError",
    "expectation",
    "g2_equal_time",
    "Truncation",
    "BlockadePoint",
    "BlockadeScan",
    "default_grid",
    "blockade_system",
    "blockade_point",
    "blockade_scan",
]

log = logging.getLogger(__name__)

OCCUPATION_FLOOR = 1e-14
CHOICES = ("effective", "original")


class UndefinedCorrelationError(ValueError):
    pass


def expectation(rho: DensityMatrix, op: QOperator) -> complex:
    """``tr(rho op)``."""
    if op.space != rho.space:
        raise SpaceMismatchError("operator and density matrix live on different spaces")
    # tr(rho A) = sum_ij rho_ji A_ij, touching only the nonzeros of A
    coo = op.matrix.tocoo()
    return complex(np.sum(np.asarray(rho.matrix)[coo.col, coo.row] * coo.data))


def g2_equal_time(rho: DensityMatrix, a_i: QOperator, a_j: QOperator | None = None) -> float:
    """``<a_i^dag a_j^dag a_j a_i> / (<n_i><n_j>)``; ``a_j`` defaults to ``a_i``.

    Raises
    ------
    UndefinedCorrelationError
        Either occupation is at or below ``1e-14``.
    """
    if a_j is None:
        a_j = a_i
    n_i = expectation(rho, a_i.dag() @ a_i).real
    n_j = expectation(rho, a_j.dag() @ a_j).real
    if n_i <= OCCUPATION_FLOOR or n_j <= OCCUPATION_FLOOR:
        raise UndefinedCorrelationError(
            f"g2 undefined for vanishing occupation (<n_i>={n_i:.3g}, <n_j>={n_j:.3g})"
        )
    num = expectation(rho, a_i.dag() @ a_j.dag() @ a_j @ a_i).real
    # tiny negative numerators are truncation round-off of a zero correlator
    return max(num, 0.0) / (n_i * n_j)


@dataclass(frozen=True)
class Truncation:
    """Fock truncation of a blockade model.

    ``photon_cap`` bounds the total photon number over both cavity modes;
    ``mech_plus_dim`` and ``phonon_cap`` (total over ``b_-, b_+``) apply to
    the original model only.  With a phonon cap and ``mech_plus_dim ==
    mech_dim`` the quasi-mode and physical bases span the same space.
    """

    cavity_dim: int = 4
    photon_cap: int | None = 3
    mech_dim: int = 4
    mech_plus_dim: int = 2
    phonon_cap: int | None = None

    @classmethod
    def default(cls, choice: str) -> "Truncation":
        """Defaults that pass the convergence check on the blockade grid.

        The slow mechanical damping lets phonons pile up, so the effective
        model keeps five ``b_-`` levels; the original model keeps four, which
        is converged at its minima and keeps each solve near five seconds.
        """
        if choice == "effective":
            return cls(mech_dim=5)
        return cls()

    def raised(self, choice: str) -> list[tuple[str, "Truncation"]]:
        """One-at-a-time enlargements used by the convergence check."""
        cap = None if self.photon_cap is None else self.photon_cap + 1
        out = [
            ("photons", replace(self, cavity_dim=self.cavity_dim + 1, photon_cap=cap)),
            ("phonons", replace(self, mech_dim=self.mech_dim + 1,
                                phonon_cap=None if self.phonon_cap is None else self.phonon_cap + 1)),
        ]
        if choice == "original":
            out.append(("phonons_plus", replace(self, mech_plus_dim=self.mech_plus_dim + 1)))
        return out


def default_grid(n: int = 201, span: float = 0.1) -> np.ndarray:
    return np.linspace(-span, span, n)


def blockade_system(p: SystemParams, choice: str, trunc: Truncation, *,
                    basis: str = "quasi", literal_heating: bool = False):
    """Hamiltonian, channels, mode operators and parity for one model.

    ``choice="original"`` is built on the quasi-mode basis by default: the
    rewrite is exact, loss channels of equal rate on a pair of modes are
    invariant under the mixing, and it exposes a parity that halves the
    solve.  ``basis="physical"`` builds it on ``(a1, a2, b1, b2)``.

    Returns ``(H, channels, ops, parity)`` where ``ops`` maps ``minus``,
    ``plus``, ``phonon`` to operators and ``parity`` may be ``None``.
    """
    if choice not in CHOICES:
        raise ValueError(f"hamiltonian choice must be one of {CHOICES}, got {choice!r}")
    kw = dict(n_th=p.n_th, literal_heating=literal_heating)
    if choice == "effective":
        space = effective_space(trunc.cavity_dim, trunc.mech_dim, trunc.photon_cap)
        H = build_effective_hamiltonian(p, space)
        channels = (cavity_channels(space, ("a_minus", "a_plus"), p.kappa)
                    + mechanical_channels(space, ("b_minus",), p.gamma_m, **kw))
        am, ap = ladder(space, "a_minus"), ladder(space, "a_plus")
        ops = {"minus": am, "plus": ap, "phonon": ladder(space, "b_minus")}
        occ = space.occupations
        parity = (-1) ** (occ[:, 1] + occ[:, 2])
    elif basis == "quasi":
        space = quasimode_space(trunc.cavity_dim, trunc.mech_dim, trunc.photon_cap,
                                trunc.phonon_cap, mech_plus_dim=trunc.mech_plus_dim)
        H = build_quasimode_hamiltonian(p, space)
        channels = (cavity_channels(space, ("a_minus", "a_plus"), p.kappa)
                    + mechanical_channels(space, ("b_minus", "b_plus"), p.gamma_m, **kw))
        am, ap = ladder(space, "a_minus"), ladder(space, "a_plus")
        ops = {"minus": am, "plus": ap, "phonon": ladder(space, "b_minus")}
        occ = space.occupations
        parity = (-1) ** (occ[:, 1] + occ[:, 2]) if p.derived.eps_plus == 0 else None
    elif basis == "physical":
        if trunc.mech_plus_dim != trunc.mech_dim:
            raise ValueError("physical basis needs mech_plus_dim == mech_dim")
        space = physical_space(trunc.cavity_dim, trunc.mech_dim, trunc.photon_cap,
                               trunc.phonon_cap)
        H = build_original_hamiltonian(p, space)
        channels = (cavity_channels(space, ("a1", "a2"), p.kappa)
                    + mechanical_channels(space, ("b1", "b2"), p.gamma_m, **kw))
        a1, a2 = ladder(space, "a1"), ladder(space, "a2")
        b1, b2 = ladder(space, "b1"), ladder(space, "b2")
        s = 1 / np.sqrt(2.0)
        ops = {"minus": s * (a1 - a2), "plus": s * (a1 + a2), "phonon": s * (b1 - b2)}
        parity = None
    else:
        raise ValueError(f"basis must be 'quasi' or 'physical', got {basis!r}")
    return H, channels, ops, parity


@dataclass
class BlockadePoint:
    delta_minus: float
    g2_mm: float = np.nan
    g2_pp: float = np.nan
    g2_mp: float = np.nan
    n_minus: float = np.nan
    n_plus: float = np.nan
    n_phonon: float = np.nan
    residual: float = np.nan
    status: str = "ok"
    converged: str = "unchecked"
    max_rel_change: float = np.nan

    @property
    def ok(self) -> bool:
        """The steady state was found; some correlators may still be undefined."""
        return not self.status.startswith("failed")

    def g2(self) -> np.ndarray:
        return np.array([self.g2_mm, self.g2_pp, self.g2_mp])


def _evaluate(p, choice, trunc, basis, literal_heating):
    H, channels, ops, parity = blockade_system(p, choice, trunc, basis=basis,
                                               literal_heating=literal_heating)
    rho, info = steady_state(H, channels, parity=parity, return_info=True)
    am, ap, bm = ops["minus"], ops["plus"], ops["phonon"]
    vals = dict(
        n_minus=expectation(rho, am.dag() @ am).real,
        n_plus=expectation(rho, ap.dag() @ ap).real,
        n_phonon=expectation(rho, bm.dag() @ bm).real,
        residual=info.residual,
    )
    undefined = []
    for name, pair in (("g2_mm", (am,)), ("g2_pp", (ap,)), ("g2_mp", (am, ap))):
        try:
            vals[name] = g2_equal_time(rho, *pair)
        except UndefinedCorrelationError:
            # e.g. an undriven mode; the other correlators stay meaningful
            vals[name] = np.nan
            undefined.append(name)
    return vals, undefined


def blockade_point(params: SystemParams, delta_minus: float, choice: str = "effective",
                   trunc: Truncation | None = None, *, basis: str = "quasi",
                   literal_heating: bool = False, check_convergence: bool = False,
                   rtol: float = 0.05) -> BlockadePoint:
    """Steady-state correlators at one ``Delta_-``; never raises on solver failure.

    A failed solve or undefined correlator is reported through ``status``.
    With ``check_convergence`` each truncation is raised by one level in turn
    and the point is flagged converged when every g2 moves by less than
    ``rtol`` (relative).
    """
    trunc = trunc or Truncation.default(choice)
    p = params.with_delta_minus(float(delta_minus))
    pt = BlockadePoint(float(delta_minus))
    try:
        vals, undefined = _evaluate(p, choice, trunc, basis, literal_heating)
    except Exception as exc:  # per-point failure is data, not a crash
        pt.status = f"failed: {type(exc).__name__}: {exc}"
        log.warning("Delta_-=%g: %s", delta_minus, pt.status)
        return pt
    for k, v in vals.items():
        setattr(pt, k, float(v))
    if undefined:
        pt.status = "partial: undefined " + " ".join(undefined)
    if check_convergence:
        _attach_convergence(pt, p, choice, trunc, basis, literal_heating, rtol)
    return pt


def _attach_convergence(pt, p, choice, trunc, basis, literal_heating, rtol):
    base = pt.g2()
    worst = 0.0
    try:
        for _, bigger in trunc.raised(choice):
            v, _ = _evaluate(p, choice, bigger, basis, literal_heating)
            new = np.array([v["g2_mm"], v["g2_pp"], v["g2_mp"]])
            both = np.isfinite(new) & np.isfinite(base)
            if both.any():
                rel = np.abs(new[both] - base[both]) / np.abs(new[both])
                worst = max(worst, float(rel.max()))
    except Exception as exc:
        pt.converged = "false"
        log.warning("convergence check failed at Delta_-=%g: %s", pt.delta_minus, exc)
        return
    pt.max_rel_change = worst
    pt.converged = "true" if worst < rtol else "false"


@dataclass
class BlockadeScan:
    choice: str
    truncation: Truncation
    points: list[BlockadePoint] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(pt, name) for pt in self.points], dtype=float)

    @property
    def grid(self) -> np.ndarray:
        return self.column("delta_minus")

    @property
    def n_failed(self) -> int:
        return sum(not pt.ok for pt in self.points)

    def argmin(self, name: str = "g2_mm") -> float:
        """``Delta_-`` of the smallest value among successful points."""
        vals = self._usable(name)
        if not np.isfinite(vals).any():
            raise ValueError(f"no point of the scan has a defined {name}")
        return float(self.grid[int(np.argmin(vals))])

    def _usable(self, name):
        vals = self.column(name)
        ok = np.array([pt.ok for pt in self.points]) & np.isfinite(vals)
        return np.where(ok, vals, np.inf)

    def argmin_by_sign(self, name: str = "g2_mm") -> tuple[float, float]:
        """Minima over the negative and positive halves of the grid."""
        vals = self._usable(name)
        grid = self.grid
        neg, pos = grid < 0, grid > 0
        return (float(grid[neg][np.argmin(vals[neg])]), float(grid[pos][np.argmin(vals[pos])]))

    def rows(self) -> list[dict]:
        return [asdict(pt) for pt in self.points]


def _point_task(args):
    return blockade_point(*args[:4], **args[4])


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("OPTOMECH_ROUTER_JOBS", "1"))
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    return jobs


def blockade_scan(params: SystemParams, delta_minus_grid=None, hamiltonian_choice: str = "effective",
                  *, trunc: Truncation | None = None, basis: str = "quasi",
                  literal_heating: bool = False, convergence: str | None = None,
                  rtol: float = 0.05, jobs: int | None = 1) -> BlockadeScan:
    """Steady-state ``g2_--``, ``g2_++``, ``g2_-+`` over a ``Delta_-`` grid.

    Parameters
    ----------
    convergence : {"all", "extrema", "none"}, optional
        Where to run the truncation check.  Defaults to ``all`` for the
        effective model and ``extrema`` (the three argmins) for the original.
    jobs : int, optional
        Worker processes; ``None`` reads ``OPTOMECH_ROUTER_JOBS``.  Results
        come back in grid order regardless.
    """
    if hamiltonian_choice not in CHOICES:
        raise ValueError(f"hamiltonian choice must be one of {CHOICES}, got {hamiltonian_choice!r}")
    grid = default_grid() if delta_minus_grid is None else np.asarray(delta_minus_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("delta_minus grid must be a nonempty 1-d sequence")
    trunc = trunc or Truncation.default(hamiltonian_choice)
    if convergence is None:
        convergence = "all" if hamiltonian_choice == "effective" else "extrema"
    if convergence not in ("all", "extrema", "none"):
        raise ValueError(f"unknown convergence mode {convergence!r}")
    kw = dict(basis=basis, literal_heating=literal_heating, check_convergence=convergence == "all",
              rtol=rtol)
    tasks = [(params, d, hamiltonian_choice, trunc, kw) for d in grid]
    jobs = resolve_jobs(jobs)
    if jobs == 1:
        points = [_point_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_point_task, tasks))
    scan = BlockadeScan(hamiltonian_choice, trunc, points)
    if convergence == "extrema" and scan.n_failed < len(points):
        targets = {scan.argmin(name) for name in ("g2_mm", "g2_pp", "g2_mp")
                   if np.isfinite(scan._usable(name)).any()}
        for pt in points:
            if pt.delta_minus in targets and pt.ok:
                p = params.with_delta_minus(pt.delta_minus)
                _attach_convergence(pt, p, hamiltonian_choice, trunc, basis, literal_heating, rtol)
    return scan
