import json

import numpy as np
import pytest
from conftest import direct_eval, random_matrix
from hypothesis import given
from hypothesis import strategies as st

from pcsvd import (
    FrequencyGrid,
    GridSamples,
    ParseError,
    PuiseuxMatrix,
    ShapeError,
    TailNotDecayedError,
    coefficients_from_samples,
    eval_grid,
    frobenius_residual,
    multiply,
    para_hermitian,
)
from pcsvd.laurent import add, block_diagonal, hstack, shift

ONE_PLUS_Z = PuiseuxMatrix.scalar({0: 1, 1: 1})


def nums(A):
    return tuple(A.terms)


def scalar_terms(A):
    return {n: complex(c[0, 0]) for n, c in A.terms.items()}


# -- construction and canonical form ---------------------------------------


def test_zero_terms_are_dropped():
    A = PuiseuxMatrix(1, 2, 1, {0: np.zeros((1, 2)), 3: np.ones((1, 2))})
    assert nums(A) == (3,)


def test_terms_are_read_only():
    A = PuiseuxMatrix.identity(2)
    with pytest.raises(ValueError):
        A.terms[0][0, 0] = 5


def test_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        PuiseuxMatrix(2, 2, 1, {0: np.eye(3)})


def test_bad_index_rejected():
    with pytest.raises(ValueError):
        PuiseuxMatrix(1, 1, 0, {})


def test_bandwidth():
    A = PuiseuxMatrix.scalar({-3: 1, 1: 2}, 2)
    assert A.bandwidth == 1.5


# -- para_hermitian ------------------------------------------------------


def test_para_hermitian_one_plus_z():
    assert scalar_terms(para_hermitian(ONE_PLUS_Z)) == {0: 1, -1: 1}


def test_para_hermitian_constant_hermitian_fixed_point():
    H = np.array([[2, 1 - 1j], [1 + 1j, 3]])
    A = PuiseuxMatrix.constant(H)
    assert para_hermitian(A) == A


def test_para_hermitian_index_two():
    A = PuiseuxMatrix.scalar({1: 1j}, 2)
    B = para_hermitian(A)
    assert B.index_L == 2
    assert scalar_terms(B) == {-1: -1j}


def test_para_hermitian_shape():
    A = PuiseuxMatrix.zeros(2, 5)
    assert para_hermitian(A).shape == (5, 2)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
def test_para_hermitian_involution(seed, r, c, L):
    A = random_matrix(np.random.default_rng(seed), r, c, -4, 4, L)
    assert para_hermitian(para_hermitian(A)) == A


# -- multiply ----------------------------------------------------------------


def test_multiply_scalar_convolution():
    P = multiply(ONE_PLUS_Z, ONE_PLUS_Z.P)
    assert P == PuiseuxMatrix.scalar({-1: 1, 0: 2, 1: 1})


def test_multiply_identity():
    A = random_matrix(np.random.default_rng(1), 2, 3)
    assert frobenius_residual(*(eval_grid(X, FrequencyGrid(64)) for X in (A, A @ PuiseuxMatrix.identity(3)))) < 1e-15


def test_multiply_lifts_indices():
    A = PuiseuxMatrix.scalar({1: 1}, 2)
    B = PuiseuxMatrix.scalar({1: 1}, 3)
    P = A @ B
    assert P.index_L == 6
    assert nums(P) == (5,)


def test_multiply_shape_error():
    with pytest.raises(ShapeError):
        multiply(PuiseuxMatrix.zeros(2, 3), PuiseuxMatrix.zeros(2, 3))


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_multiply_matches_pointwise_product(seed, m, k, n):
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, m, k, -8, 8)
    B = random_matrix(rng, k, n, -8, 8)
    grid = FrequencyGrid(128)
    lhs = eval_grid(A @ B, grid)
    rhs = GridSamples(grid, eval_grid(A, grid).values @ eval_grid(B, grid).values)
    assert frobenius_residual(rhs, lhs) < 1e-10


# -- evaluation --------------------------------------------------------------


def test_eval_grid_one_plus_z():
    vals = eval_grid(ONE_PLUS_Z, FrequencyGrid(4)).values[:, 0, 0]
    np.testing.assert_allclose(vals, [2, 1 + 1j, 0, 1 - 1j], atol=1e-15)


def test_eval_grid_zero_matrix():
    assert not eval_grid(PuiseuxMatrix.zeros(2, 3), FrequencyGrid(8)).values.any()


def test_eval_grid_two_cos_half():
    s = PuiseuxMatrix.scalar({1: 1, -1: 1}, 2)
    vals = eval_grid(s, FrequencyGrid(4, 2)).values[:, 0, 0]
    # grid points 0, pi, 2pi, 3pi
    assert vals[0] == pytest.approx(2)
    assert vals[2] == pytest.approx(-2)


def test_eval_grid_matches_direct_evaluation():
    A = random_matrix(np.random.default_rng(5), 3, 2, -5, 5, 3)
    grid = FrequencyGrid(32, 4, 0.1)
    np.testing.assert_allclose(eval_grid(A, grid).values, direct_eval(A, grid.points), atol=1e-13)


def test_grid_requires_power_of_two():
    with pytest.raises(ValueError):
        FrequencyGrid(12)
    FrequencyGrid(12, 3)


def test_grid_points_equispaced():
    g = FrequencyGrid(16, 2)
    d = np.diff(g.points)
    assert np.all(d > 0)
    np.testing.assert_allclose(d, 4 * np.pi / 16)


def test_grid_default_size():
    A = PuiseuxMatrix.scalar({-100: 1, 0: 1})
    assert FrequencyGrid.for_matrix(A).per_period == 1024
    assert FrequencyGrid.for_matrix(ONE_PLUS_Z).per_period == 256


def test_grid_samples_reject_nan():
    with pytest.raises(ValueError):
        GridSamples(FrequencyGrid(2), np.array([1.0, np.nan]))


def test_grid_samples_length_checked():
    with pytest.raises(ShapeError):
        GridSamples(FrequencyGrid(4), np.ones(3))


# -- coefficient recovery ------------------------------------------------------


def test_coefficients_two_cos_half():
    g = FrequencyGrid(64, 2)
    om = g.points
    X = coefficients_from_samples(GridSamples(g, 2 * np.cos(om / 2)), 2)
    assert X.index_L == 2
    assert set(nums(X)) == {-1, 1}
    for n in (-1, 1):
        assert X.coefficient(n)[0, 0] == pytest.approx(1, abs=1e-14)


def test_coefficients_constant():
    c = np.array([[1 + 2j, 3]])
    g = FrequencyGrid(16)
    X = coefficients_from_samples(GridSamples(g, np.tile(c, (16, 1, 1))), 1)
    assert nums(X) == (0,)
    np.testing.assert_allclose(X.coefficient(0), c)


def test_coefficients_pure_tone():
    g = FrequencyGrid(32)
    X = coefficients_from_samples(GridSamples(g, np.exp(1j * g.points)), 1)
    assert nums(X) == (1,)
    assert X.coefficient(1)[0, 0] == pytest.approx(1)


def test_coefficients_undo_offset():
    A = random_matrix(np.random.default_rng(3), 2, 2, -4, 4, 2)
    g = FrequencyGrid(64, 2, offset=0.3)
    X = coefficients_from_samples(eval_grid(A, g), 2)
    for n in nums(A):
        np.testing.assert_allclose(X.coefficient(n), A.coefficient(n), atol=1e-13)


def test_coefficients_period_mismatch():
    g = FrequencyGrid(16)
    with pytest.raises(ShapeError):
        coefficients_from_samples(GridSamples(g, np.ones(16)), 2)


def test_coefficients_non_decayed_tail():
    g = FrequencyGrid(64)
    # a kink: |sin| is not analytic, its coefficients decay only like 1/n^2
    with pytest.raises(TailNotDecayedError) as err:
        coefficients_from_samples(GridSamples(g, np.abs(np.sin(g.points))), 1, trim_tol=1e-12)
    assert err.value.tail_mass > 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4))
def test_coefficient_round_trip(seed, r, c, L):
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, r, c, -6, 6, L)
    g = FrequencyGrid(8 * 16 * L, L)
    assert g.check_resolution(A.bandwidth)
    X = coefficients_from_samples(eval_grid(A, g), L)
    assert nums(X) == nums(A)
    for n in nums(A):
        np.testing.assert_allclose(X.coefficient(n), A.coefficient(n), atol=1e-12)
    assert frobenius_residual(eval_grid(A, g), eval_grid(X, g)) < 1e-11


# -- residuals -------------------------------------------------------------------


def test_frobenius_identical_is_zero():
    s = eval_grid(random_matrix(np.random.default_rng(0), 2, 2), FrequencyGrid(16))
    assert frobenius_residual(s, s) == 0.0


def test_frobenius_linearity():
    g = FrequencyGrid(8)
    base = np.tile(np.diag([3.0, 0.0]), (8, 1, 1))
    E = np.zeros((8, 2, 2))
    E[:, 0, 1] = 1.0
    eps = 1e-6
    r = frobenius_residual(GridSamples(g, base), GridSamples(g, base + eps * E))
    assert r == pytest.approx(eps / 3)


def test_frobenius_grid_mismatch():
    with pytest.raises(ShapeError):
        frobenius_residual(GridSamples(FrequencyGrid(4), np.ones(4)), GridSamples(FrequencyGrid(8), np.ones(8)))


def test_frobenius_pointwise_svd():
    A = random_matrix(np.random.default_rng(9), 3, 4)
    s = eval_grid(A, FrequencyGrid(32))
    U, sv, Vh = np.linalg.svd(s.values, full_matrices=False)
    back = GridSamples(s.grid, U @ (sv[:, :, None] * Vh))
    assert frobenius_residual(s, back) < 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_para_hermitian_iff_hermitian_samples(seed, n):
    rng = np.random.default_rng(seed)
    B = random_matrix(rng, n, n, -3, 3)
    g = FrequencyGrid(64)
    H = add(B, B.P)
    vals = eval_grid(H, g).values
    assert H == H.P
    assert np.abs(vals - np.conj(np.swapaxes(vals, 1, 2))).max() < 1e-12
    if not B == B.P:
        vb = eval_grid(B, g).values
        assert np.abs(vb - np.conj(np.swapaxes(vb, 1, 2))).max() > 1e-12


# -- index handling and assembly -------------------------------------------


def test_lift_and_reduce():
    A = PuiseuxMatrix.scalar({2: 1, -4: 3}, 4)
    B, dropped = A.reduce_index()
    assert B.index_L == 2 and dropped == 0.0
    assert B.lift(4) == A


def test_reduce_index_drops_small_off_lattice():
    A = PuiseuxMatrix.scalar({0: 1, 1: 1e-12}, 2)
    B, dropped = A.reduce_index(1, 1e-9)
    assert B == PuiseuxMatrix.scalar({0: 1})
    assert dropped == pytest.approx(1e-12)
    with pytest.raises(ValueError):
        PuiseuxMatrix.scalar({0: 1, 1: 0.1}, 2).reduce_index(1, 1e-9)


def test_block_builders():
    a = PuiseuxMatrix.scalar({1: 1})
    b = PuiseuxMatrix.scalar({1: 2}, 2)
    D = block_diagonal([a, b], (3, 2))
    assert D.index_L == 2 and D.shape == (3, 2)
    assert D.coefficient(2)[0, 0] == 1 and D.coefficient(1)[1, 1] == 2
    H = hstack([a, b])
    assert H.shape == (1, 2)
    assert nums(shift(a, 2)) == (3,)


# -- JSON format -------------------------------------------------------------


def test_json_round_trip_is_bit_exact():
    A = random_matrix(np.random.default_rng(11), 2, 3, -2, 2, 3)
    B = PuiseuxMatrix.loads(A.dumps())
    assert B == A
    assert B.dumps() == A.dumps()


def test_json_sorted_and_shaped():
    d = json.loads(ONE_PLUS_Z.dumps())
    assert d == {
        "cols": 1,
        "index_L": 1,
        "rows": 1,
        "terms": [{"matrix": [[[1.0, 0.0]]], "n": 0}, {"matrix": [[[1.0, 0.0]]], "n": 1}],
    }


@pytest.mark.parametrize(
    "doc, path",
    [
        ('{"rows": 1, "cols": 1, "index_L": 1, "terms": [{"n": 0, "matrix": [[[1, 0]]]}, {"n": 0, "matrix": [[[2, 0]]]}]}', "$.terms[1].n"),
        ('{"rows": 1, "cols": 1, "index_L": 0, "terms": []}', "$.index_L"),
        ('{"rows": 1, "cols": 2, "index_L": 1, "terms": [{"n": 0, "matrix": [[[1, 0]]]}]}', "$.terms[0].matrix[0]"),
        ('{"rows": 1, "cols": 1, "index_L": 1, "terms": [{"n": 0, "matrix": [[[1]]]}]}', "$.terms[0].matrix[0][0]"),
        ('{"rows": 1, "cols": 1, "index_L": 1}', "$"),
    ],
)
def test_json_errors_name_the_path(doc, path):
    with pytest.raises(ParseError) as err:
        PuiseuxMatrix.loads(doc)
    assert err.value.path == path


def test_json_invalid_text():
    with pytest.raises(ParseError):
        PuiseuxMatrix.loads("{not json")
