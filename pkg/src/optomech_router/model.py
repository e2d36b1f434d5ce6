"""Hamiltonians of two tunnel-coupled optomechanical cavities.

Three pictures are built, all in units of the mechanical frequency
(``omega_m = 1``) and all in the frame rotating at the drive frequency:

* original: cavity modes ``a1, a2`` and mechanical modes ``b1, b2``;
* quasi-mode: the exact rewrite on ``a_-, a_+, b_-, b_+`` with
  ``a_pm = (a1 pm a2)/sqrt(2)`` (same for ``b``);
* effective: the three-wave Hamiltonian on ``a_-, a_+, b_-`` that survives
  the rotating-wave approximation when ``omega_m = 2J``.

The hopping term is ``-J (a1^dag a2 + a2^dag a1)`` so that
``Delta_pm = Delta -/+ J``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .fock import (
    ModeSpace,
    QOperator,
    SpaceMismatchError,
    annihilation,
    embed,
    identity,
)

__all__ = [
    "PHYSICAL_LABELS",
    "QUASI_LABELS",
    "EFFECTIVE_LABELS",
    "RWAConditionError",
    "SystemParams",
    "DerivedParams",
    "blockade_params",
    "blockade_params_wide_hopping",
    "physical_space",
    "quasimode_space",
    "effective_space",
    "ladder",
    "build_original_hamiltonian",
    "build_quasimode_hamiltonian",
    "build_effective_hamiltonian",
    "beam_splitter_unitary",
    "quasimode_state_transform",
]

SQRT2 = math.sqrt(2.0)

PHYSICAL_LABELS = ("a1", "a2", "b1", "b2")
QUASI_LABELS = ("a_minus", "a_plus", "b_minus", "b_plus")
EFFECTIVE_LABELS = ("a_minus", "a_plus", "b_minus")

# physical slot label -> quasi-mode label at the same slot; (first, second) of
# each pair maps to (minus, plus)
_TO_QUASI = {"a1": "a_minus", "a2": "a_plus", "b1": "b_minus", "b2": "b_plus"}
_TO_PHYSICAL = {v: k for k, v in _TO_QUASI.items()}


class RWAConditionError(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, all energies in units of ``omega_m``.

    ``g_2`` and ``omega_m_2`` describe the second cavity when it differs from
    the first; ``None`` means identical.  Only the original-picture builder
    accepts asymmetric values.
    """

    delta: float = 0.0
    J: float = 0.5
    g: float = 0.03
    omega_m: float = 1.0
    kappa: float = 1e-3
    gamma_m: float = 1e-3 / 200
    n_th: float = 0.0
    eps1: float = 1.1e-4
    eps2: float = -1.1e-4
    g_2: float | None = None
    omega_m_2: float | None = None

    def __post_init__(self):
        if not self.omega_m > 0:
            raise ValueError("omega_m must be > 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")
        if self.gamma_m < 0:
            raise ValueError("gamma_m must be >= 0")
        if self.n_th < 0:
            raise ValueError("n_th must be >= 0")
        if self.omega_m_2 is not None and not self.omega_m_2 > 0:
            raise ValueError("omega_m_2 must be > 0")

    @property
    def coupling_2(self) -> float:
        return self.g if self.g_2 is None else self.g_2

    @property
    def frequency_2(self) -> float:
        return self.omega_m if self.omega_m_2 is None else self.omega_m_2

    @property
    def symmetric(self) -> bool:
        return self.coupling_2 == self.g and self.frequency_2 == self.omega_m

    @property
    def rwa_resonant(self) -> bool:
        """True when the three-wave resonance ``omega_m = 2J`` holds."""
        return abs(self.omega_m - 2.0 * self.J) <= 1e-12 * max(1.0, abs(self.omega_m))

    @property
    def derived(self) -> "DerivedParams":
        return DerivedParams.from_params(self)

    def with_delta_minus(self, delta_minus: float) -> "SystemParams":
        """Copy whose bare detuning gives the requested ``Delta_-``."""
        return replace(self, delta=delta_minus - self.J)


@dataclass(frozen=True)
class DerivedParams:
    delta_plus: float
    delta_minus: float
    eps_plus: float
    eps_minus: float

    @classmethod
    def from_params(cls, p: SystemParams) -> "DerivedParams":
        return cls(
            delta_plus=p.delta - p.J,
            delta_minus=p.delta + p.J,
            eps_plus=(p.eps1 + p.eps2) / SQRT2,
            eps_minus=(p.eps1 - p.eps2) / SQRT2,
        )


def blockade_params(**overrides) -> SystemParams:
    """Blockade parameter set with the resonance ``omega_m = 2J`` (J = 0.5)."""
    return replace(SystemParams(), **overrides)


def blockade_params_wide_hopping(**overrides) -> SystemParams:
    """Same set but with ``J = 2 omega_m``.

    Only the original picture can be built with it; the three-wave
    resonance is absent.
    """
    return replace(SystemParams(J=2.0), **overrides)


def _caps(photon_cap, phonon_cap, photon_slots, phonon_slots):
    caps = []
    if photon_cap is not None:
        caps.append((photon_slots, photon_cap))
    if phonon_cap is not None and phonon_slots:
        caps.append((phonon_slots, phonon_cap))
    return tuple(caps)


def physical_space(cavity_dim=4, mech_dim=4, photon_cap=None, phonon_cap=None) -> ModeSpace:
    """Space on ``(a1, a2, b1, b2)``; caps bound the total photon/phonon number."""
    return ModeSpace(
        (cavity_dim, cavity_dim, mech_dim, mech_dim),
        PHYSICAL_LABELS,
        _caps(photon_cap, phonon_cap, (0, 1), (2, 3)),
    )


def quasimode_space(cavity_dim=4, mech_dim=4, photon_cap=None, phonon_cap=None,
                    mech_plus_dim=None) -> ModeSpace:
    """Space on ``(a_-, a_+, b_-, b_+)``.

    ``mech_plus_dim`` truncates ``b_+`` separately; it is only displaced by the
    static radiation-pressure term and needs far fewer levels than ``b_-``.
    """
    plus = mech_dim if mech_plus_dim is None else mech_plus_dim
    return ModeSpace(
        (cavity_dim, cavity_dim, mech_dim, plus),
        QUASI_LABELS,
        _caps(photon_cap, phonon_cap, (0, 1), (2, 3)),
    )


def effective_space(cavity_dim=4, mech_dim=4, photon_cap=None) -> ModeSpace:
    return ModeSpace(
        (cavity_dim, cavity_dim, mech_dim),
        EFFECTIVE_LABELS,
        _caps(photon_cap, None, (0, 1), ()),
    )


def ladder(space: ModeSpace, label: str) -> QOperator:
    """Annihilation operator of the labelled mode, embedded in ``space``."""
    k = space.slot(label)
    return embed(annihilation(space.dims[k]), k, space)


def _require_labels(space: ModeSpace, labels: tuple[str, ...], what: str) -> None:
    if space.n_modes != len(labels):
        raise SpaceMismatchError(
            f"{what} needs {len(labels)} modes {labels}, got {space.n_modes}"
        )
    if space.labels != labels:
        raise SpaceMismatchError(f"{what} expects mode order {labels}, got {space.labels}")


def build_original_hamiltonian(p: SystemParams, space: ModeSpace) -> QOperator:
    _require_labels(space, PHYSICAL_LABELS, "original Hamiltonian")
    a1, a2, b1, b2 = (ladder(space, lab) for lab in PHYSICAL_LABELS)
    n1 = a1.dag() @ a1
    n2 = a2.dag() @ a2
    H = p.delta * (n1 + n2)
    # normal-ordered products: identical operators, but truncation-safe at caps
    H = H - p.J * (a1.dag() @ a2 + a2.dag() @ a1)
    H = H + p.eps1 * (a1 + a1.dag()) + p.eps2 * (a2 + a2.dag())
    H = H + p.omega_m * (b1.dag() @ b1) + p.frequency_2 * (b2.dag() @ b2)
    H = H + p.g * (n1 @ (b1 + b1.dag())) + p.coupling_2 * (n2 @ (b2 + b2.dag()))
    return H


def _require_symmetric(p: SystemParams, what: str) -> None:
    if not p.symmetric:
        raise ValueError(
            f"{what} requires g_1 = g_2 and omega_m1 = omega_m2; the quasi-mode "
            "transform does not decouple asymmetric cavities"
        )


def build_quasimode_hamiltonian(p: SystemParams, space: ModeSpace) -> QOperator:
    _require_labels(space, QUASI_LABELS, "quasi-mode Hamiltonian")
    _require_symmetric(p, "quasi-mode Hamiltonian")
    d = p.derived
    am, ap, bm, bp = (ladder(space, lab) for lab in QUASI_LABELS)
    n_m = am.dag() @ am
    n_p = ap.dag() @ ap
    gq = p.g / SQRT2
    H = d.delta_plus * n_p + d.delta_minus * n_m
    H = H + d.eps_minus * (am.dag() + am)
    if d.eps_plus != 0.0:
        H = H + d.eps_plus * (ap.dag() + ap)
    H = H + p.omega_m * (bp.dag() @ bp) + p.omega_m * (bm.dag() @ bm)
    H = H + gq * ((bp + bp.dag()) @ (n_p + n_m))
    H = H + gq * ((bm + bm.dag()) @ (am.dag() @ ap + ap.dag() @ am))
    return H


def build_effective_hamiltonian(p: SystemParams, space: ModeSpace) -> QOperator:
    """Three-wave Hamiltonian valid on the resonance ``omega_m = 2J``.

    A ``+`` drive (``eps1 + eps2 != 0``) rotates at ``2J`` in this frame and is
    dropped together with the other fast terms.
    """
    _require_labels(space, EFFECTIVE_LABELS, "effective Hamiltonian")
    _require_symmetric(p, "effective Hamiltonian")
    if not p.rwa_resonant:
        raise RWAConditionError(
            f"effective Hamiltonian needs omega_m = 2J, got omega_m={p.omega_m}, "
            f"2J={2 * p.J}; use the original picture for off-resonant parameters"
        )
    d = p.derived
    am, ap, bm = (ladder(space, lab) for lab in EFFECTIVE_LABELS)
    H = d.delta_minus * (ap.dag() @ ap + am.dag() @ am)
    H = H + d.eps_minus * (am.dag() + am)
    H = H + (p.g / SQRT2) * (ap.dag() @ bm.dag() @ am + am.dag() @ ap @ bm)
    return H


def _pairs(space: ModeSpace, mapping: dict[str, str]):
    labels = space.labels
    for lab in labels:
        if lab not in mapping:
            raise SpaceMismatchError(f"mode {lab!r} has no quasi-mode counterpart")
    firsts = [lab for lab in labels if lab in ("a1", "b1", "a_minus", "b_minus")]
    pairs = []
    for first in firsts:
        second = {"a1": "a2", "b1": "b2", "a_minus": "a_plus", "b_minus": "b_plus"}[first]
        if second not in labels:
            raise SpaceMismatchError(f"mode {first!r} present without partner {second!r}")
        i, j = space.slot(first), space.slot(second)
        if space.dims[i] != space.dims[j]:
            raise SpaceMismatchError(
                f"modes {first!r} and {second!r} need matched truncations"
            )
        pairs.append((i, j))
    return pairs


def beam_splitter_unitary(space: ModeSpace) -> np.ndarray:
    """Dense unitary mapping physical-mode amplitudes to quasi-mode amplitudes.

    Acting on a state written in the Fock basis of ``(a1, a2, ...)`` it returns
    the same state in the Fock basis of ``(a_-, a_+, ...)`` (slot by slot), so
    that ``a1^dag -> (a_+^dag + a_-^dag)/sqrt(2)`` and
    ``a2^dag -> (a_+^dag - a_-^dag)/sqrt(2)``.  Exact whenever the pair
    truncation is a total-excitation cap; otherwise still unitary.
    """
    pairs = _pairs(space, _TO_QUASI)
    gen = QOperator(space, identity(space).matrix * 0)
    for i, j in pairs:
        ci = embed(annihilation(space.dims[i]), i, space)
        cj = embed(annihilation(space.dims[j]), j, space)
        gen = gen + (cj.dag() @ ci - ci.dag() @ cj)
    return scipy.linalg.expm((math.pi / 4) * gen.to_dense())


def quasimode_state_transform(direction: str, obj, space: ModeSpace):
    """Move a state, density matrix or operator between mode pictures.

    Parameters
    ----------
    direction : {"physical->quasi", "quasi->physical"}
    obj : ndarray (state vector or matrix), QOperator, or object with
        ``space``/``matrix`` attributes (e.g. a density matrix)
    space : ModeSpace
        Space ``obj`` currently lives in; its labels must match ``direction``.

    Returns the transformed object of the same kind; operators and density
    matrices come back tagged with the relabelled target space.
    """
    if direction in ("physical->quasi", "to_quasi"):
        mapping = _TO_QUASI
        forward = True
    elif direction in ("quasi->physical", "to_physical"):
        mapping = _TO_PHYSICAL
        forward = False
    else:
        raise ValueError(f"unknown direction {direction!r}")
    for lab in space.labels:
        if lab not in mapping:
            raise SpaceMismatchError(f"mode {lab!r} is not valid for direction {direction!r}")
    target = ModeSpace(space.dims, tuple(mapping[lab] for lab in space.labels), space.caps)
    phys_space = space if forward else target
    U = beam_splitter_unitary(phys_space)
    if not forward:
        U = U.conj().T

    if isinstance(obj, QOperator):
        if obj.space != space:
            raise SpaceMismatchError("operator does not live in the given space")
        return QOperator(target, U @ obj.to_dense() @ U.conj().T)
    if hasattr(obj, "space") and hasattr(obj, "matrix"):
        if obj.space != space:
            raise SpaceMismatchError("object does not live in the given space")
        return type(obj)(target, U @ np.asarray(obj.matrix) @ U.conj().T)
    arr = np.asarray(obj)
    if arr.shape[0] != space.dim:
        raise SpaceMismatchError(f"expected leading dimension {space.dim}, got {arr.shape}")
    if arr.ndim == 1:
        return U @ arr
    if arr.ndim == 2 and arr.shape == (space.dim, space.dim):
        return U @ arr @ U.conj().T
    raise ValueError("expected a state vector or a square matrix")
