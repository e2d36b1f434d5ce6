import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech_router.fock import (
    InvalidDimensionError,
    ModeSpace,
    QOperator,
    SpaceMismatchError,
    annihilation,
    basis_state,
    commutator,
    creation,
    embed,
    identity,
    number,
)

dims_st = st.lists(st.integers(2, 5), min_size=1, max_size=4)


@given(st.integers(2, 16))
def test_ladder_matrix_elements(d):
    a = annihilation(d).to_dense()
    expected = np.zeros((d, d))
    for n in range(1, d):
        expected[n - 1, n] = np.sqrt(n)
    assert np.array_equal(a, expected)


@given(st.integers(3, 16))
def test_commutator_is_identity_below_the_top_level(d):
    c = commutator(annihilation(d), creation(d)).to_dense()
    for n in range(d - 1):
        psi = np.zeros(d)
        psi[n] = 1.0
        # sqrt(n) sqrt(n) may round one ulp away from n
        assert np.allclose(c @ psi, psi, rtol=0, atol=1e-14)
    # the top level is where truncation shows: [a, a^dag] |d-1> = (1 - d) |d-1>
    assert c[d - 1, d - 1] == pytest.approx(1 - d)


@settings(max_examples=40)
@given(dims_st, st.data())
def test_embed_preserves_sparsity(dims, data):
    space = ModeSpace(tuple(dims))
    k = data.draw(st.integers(0, len(dims) - 1))
    op = annihilation(dims[k])
    lifted = embed(op, k, space)
    assert lifted.nnz == op.nnz * int(np.prod(dims)) // dims[k]


def test_kronecker_order_slot_zero_is_most_significant():
    space = ModeSpace((2, 3))
    assert space.index((1, 0)) == 3
    assert space.index((0, 2)) == 2
    assert np.array_equal(space.occupations[5], [1, 2])


def test_embedded_ladder_lowers_only_its_mode():
    space = ModeSpace((3, 4), ("a", "b"))
    b = embed(annihilation(4), "b", space)
    out = b @ basis_state(space, (2, 3))
    assert np.allclose(out, np.sqrt(3) * basis_state(space, (2, 2)))


def test_caps_restrict_basis_and_operators():
    space = ModeSpace((4, 4, 3), caps=(((0, 1), 3),))
    # pairs (n0, n1) with n0 + n1 <= 3 times three levels of the last mode
    assert space.dim == 10 * 3
    assert space.box_dim == 48
    full = ModeSpace((4, 4, 3))
    a0 = embed(annihilation(4), 0, space).to_dense()
    a0_full = embed(annihilation(4), 0, full).to_dense()
    kept = space.kept
    assert np.array_equal(a0, a0_full[np.ix_(kept, kept)])


@given(dims_st, st.data())
def test_index_round_trip(dims, data):
    space = ModeSpace(tuple(dims))
    occ = [data.draw(st.integers(0, d - 1)) for d in dims]
    i = space.index(occ)
    assert list(space.occupations[i]) == occ


def test_hermitian_helpers():
    n = number(5)
    assert n.is_hermitian()
    assert not annihilation(5).is_hermitian()
    assert n.hermiticity_residual() == 0.0


def test_operator_arithmetic():
    a = annihilation(4)
    i = identity(a.space)
    x = (a + a.dag()) / np.sqrt(2)
    assert np.allclose(((2 * i) - i).to_dense(), np.eye(4))
    assert np.allclose((x @ x).to_dense(), (x.to_dense() @ x.to_dense()))
    assert np.allclose((-a).to_dense(), -a.to_dense())


def test_invalid_dimensions_raise():
    with pytest.raises(InvalidDimensionError):
        ModeSpace((1, 3))
    with pytest.raises(InvalidDimensionError):
        ModeSpace(())
    with pytest.raises(InvalidDimensionError):
        annihilation(1)
    with pytest.raises(InvalidDimensionError):
        ModeSpace((3, 3), caps=(((0, 1), 0),))


def test_bad_labels_and_caps_raise():
    with pytest.raises(ValueError):
        ModeSpace((2, 2), ("x", "x"))
    with pytest.raises(IndexError):
        ModeSpace((2, 2), caps=(((0, 5), 1),))
    with pytest.raises(KeyError):
        ModeSpace((2, 2)).slot("nope")


def test_space_mismatch_raises():
    a3, a4 = annihilation(3), annihilation(4)
    with pytest.raises(SpaceMismatchError):
        a3 + a4
    with pytest.raises(SpaceMismatchError):
        a3 @ a4
    with pytest.raises(SpaceMismatchError):
        embed(a3, 0, ModeSpace((4, 2)))


def test_qoperator_shape_check():
    with pytest.raises(SpaceMismatchError):
        QOperator(ModeSpace((3,)), np.eye(4))
