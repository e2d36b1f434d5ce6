"""Truncated Fock-space operator algebra for composite bosonic systems.

Mode ordering
-------------
A :class:`ModeSpace` lists its modes left to right, and basis states are
enumerated in Kronecker (row-major) order: slot 0 is the most significant
digit of the basis index, exactly as in ``|n_0, n_1, ...>``.  Every builder in
this package addresses modes through this ordering (usually by label, see
:meth:`ModeSpace.slot`); nothing else re-derives it.

Excitation caps
---------------
Besides the per-mode truncation ``dims``, a space may carry caps of the form
``(slots, n_max)`` that keep only basis states whose total occupation over
``slots`` is at most ``n_max``.  A cap on a pair of modes is invariant under
any passive mode mixing of that pair, which makes the two-cavity
symmetric/antisymmetric transform exact inside the truncated space.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "InvalidDimensionError",
    "SpaceMismatchError",
    "ModeSpace",
    "QOperator",
    "annihilation",
    "creation",
    "number",
    "identity",
    "embed",
    "commutator",
    "basis_state",
]

# total dimensions above this are refused outright (index arithmetic is int64,
# but nothing in this package is meant to work at that scale)
MAX_TOTAL_DIM = 2**31 - 1


class InvalidDimensionError(ValueError):
    pass


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModeSpace:
    """Ordered list of bosonic modes with their truncation dimensions.

    Parameters
    ----------
    dims : sequence of int
        Truncation dimension of each mode (occupations ``0 .. dim-1``).
    labels : sequence of str, optional
        Mode names, one per slot.  Defaults to ``m0, m1, ...``.
    caps : sequence of (slots, n_max), optional
        Total-excitation caps over groups of slots.
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...] = ()
    caps: tuple[tuple[tuple[int, ...], int], ...] = ()
    _kept: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise InvalidDimensionError("a mode space needs at least one mode")
        for d in dims:
            if d < 2:
                raise InvalidDimensionError(f"mode dimension must be >= 2, got {d}")
        box = 1
        for d in dims:
            box *= d
        if box > MAX_TOTAL_DIM:
            raise InvalidDimensionError(f"total dimension {box} exceeds addressable range")
        labels = tuple(self.labels) if self.labels else tuple(f"m{i}" for i in range(len(dims)))
        if len(labels) != len(dims):
            raise ValueError("one label per mode is required")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels in {labels}")
        caps = []
        for slots, n_max in self.caps:
            slots = tuple(sorted(int(s) for s in slots))
            if not slots or slots[0] < 0 or slots[-1] >= len(dims):
                raise IndexError(f"cap slots {slots} out of range")
            if int(n_max) < 1:
                raise InvalidDimensionError("excitation caps must allow at least one quantum")
            caps.append((slots, int(n_max)))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "caps", tuple(caps))
        object.__setattr__(self, "_kept", self._enumerate_kept())

    def _enumerate_kept(self) -> np.ndarray:
        if not self.caps:
            return np.arange(self.box_dim, dtype=np.int64)
        occ = self._box_occupations()
        mask = np.ones(len(occ), dtype=bool)
        for slots, n_max in self.caps:
            mask &= occ[:, list(slots)].sum(axis=1) <= n_max
        return np.flatnonzero(mask).astype(np.int64)

    def _box_occupations(self) -> np.ndarray:
        return np.array(list(itertools.product(*(range(d) for d in self.dims))), dtype=np.int64)

    @property
    def box_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def dim(self) -> int:
        return int(self._kept.size)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def kept(self) -> np.ndarray:
        """Indices of the retained states within the full Kronecker box."""
        return self._kept

    @cached_property
    def occupations(self) -> np.ndarray:
        """``(dim, n_modes)`` array of occupation numbers of each basis state."""
        return self._box_occupations()[self._kept]

    def slot(self, mode: int | str) -> int:
        if isinstance(mode, str):
            try:
                return self.labels.index(mode)
            except ValueError:
                raise KeyError(f"no mode labelled {mode!r} in {self.labels}") from None
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"slot {mode} out of range for {self.n_modes} modes")
        return int(mode)

    def index(self, occupation: Sequence[int]) -> int:
        occ = tuple(int(n) for n in occupation)
        if len(occ) != self.n_modes:
            raise ValueError("occupation tuple has the wrong length")
        box = 0
        for n, d in zip(occ, self.dims):
            if not 0 <= n < d:
                raise IndexError(f"occupation {occ} outside truncation {self.dims}")
            box = box * d + n
        pos = np.searchsorted(self._kept, box)
        if pos >= self.dim or self._kept[pos] != box:
            raise IndexError(f"occupation {occ} excluded by excitation caps")
        return int(pos)

    def with_dims(self, **changes: int) -> "ModeSpace":
        """Copy with some mode dimensions replaced, addressed by label."""
        dims = list(self.dims)
        for label, d in changes.items():
            dims[self.slot(label)] = d
        return ModeSpace(tuple(dims), self.labels, self.caps)


def _canonical(mat) -> sp.csr_matrix:
    m = sp.csr_matrix(mat, dtype=np.complex128, copy=True)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    m.has_canonical_format = True
    return m


@dataclass(frozen=True, eq=False)
class QOperator:
    """Complex sparse operator tagged with the space it acts on.

    The CSR matrix is kept in canonical form (sorted indices, no explicit
    zeros) so iteration order, and therefore every derived result, is
    deterministic.  Instances are immutable; arithmetic returns new objects.
    """

    space: ModeSpace
    matrix: sp.csr_matrix

    def __post_init__(self):
        m = _canonical(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise SpaceMismatchError(
                f"matrix shape {m.shape} does not match space dimension {self.space.dim}"
            )
        m.data.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    # -- inspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def entries(self) -> dict[tuple[int, int], complex]:
        coo = self.matrix.tocoo()
        return {(int(r), int(c)): complex(v) for r, c, v in zip(coo.row, coo.col, coo.data)}

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def dag(self) -> "QOperator":
        return QOperator(self.space, self.matrix.conj().T)

    def hermiticity_residual(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return self.hermiticity_residual() <= atol

    # -- arithmetic -----------------------------------------------------
    def _check(self, other: "QOperator") -> None:
        if not isinstance(other, QOperator):
            raise TypeError(f"expected QOperator, got {type(other).__name__}")
        if other.space != self.space:
            raise SpaceMismatchError("operators act on different mode spaces")

    def __add__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.matrix - other.matrix)
        return NotImplemented

    def __neg__(self):
        return QOperator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, QOperator):
            raise TypeError("use @ for operator products")
        if not np.isscalar(scalar):
            return NotImplemented
        return QOperator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return QOperator(self.space, self.matrix / complex(scalar))

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.matrix @ other.matrix)
        if isinstance(other, np.ndarray):
            if other.shape[0] != self.space.dim:
                raise SpaceMismatchError("vector length does not match operator dimension")
            return self.matrix @ other
        return NotImplemented

    def __repr__(self) -> str:
        return f"QOperator(dims={self.space.dims}, caps={self.space.caps}, nnz={self.nnz})"


def _single_mode(dim: int) -> ModeSpace:
    return ModeSpace((dim,))


def annihilation(dim: int) -> QOperator:
    """Single-mode lowering operator with ``<n-1|a|n> = sqrt(n)``."""
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"mode dimension must be an integer >= 2, got {dim}")
    dim = int(dim)
    mat = sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), 1, shape=(dim, dim), format="csr")
    return QOperator(_single_mode(dim), mat)


def creation(dim: int) -> QOperator:
    return annihilation(dim).dag()


def number(dim: int) -> QOperator:
    a = annihilation(dim)
    return a.dag() @ a


def identity(space: ModeSpace) -> QOperator:
    return QOperator(space, sp.identity(space.dim, dtype=np.complex128, format="csr"))


def embed(op: QOperator, slot: int | str, space: ModeSpace) -> QOperator:
    """Lift a single-mode operator into ``space`` acting on ``slot``.

    The Kronecker product is formed over the full box and then restricted
    to the states kept by the space's excitation caps.
    """
    k = space.slot(slot)
    if op.space.n_modes != 1:
        raise SpaceMismatchError("embed expects a single-mode operator")
    if op.space.dims[0] != space.dims[k]:
        raise SpaceMismatchError(
            f"operator dimension {op.space.dims[0]} does not match mode {k} "
            f"dimension {space.dims[k]}"
        )
    left = int(np.prod(space.dims[:k])) if k else 1
    right = int(np.prod(space.dims[k + 1:])) if k + 1 < space.n_modes else 1
    mat = sp.kron(sp.identity(left, format="csr"), op.matrix, format="csr")
    mat = sp.kron(mat, sp.identity(right, format="csr"), format="csr")
    if space.caps:
        kept = space.kept
        mat = mat[kept][:, kept]
    return QOperator(space, mat)


def commutator(a: QOperator, b: QOperator) -> QOperator:
    return a @ b - b @ a


def basis_state(space: ModeSpace, occupation: Sequence[int]) -> np.ndarray:
    vec = np.zeros(space.dim, dtype=np.complex128)
    vec[space.index(occupation)] = 1.0
    return vec
