import itertools

import numpy as np
import pytest
from conftest import data_path, paired_sigmas, load
from hypothesis import given, settings
from hypothesis import strategies as st

from pcsvd import (
    CirculantBlock,
    Factorization,
    PuiseuxMatrix,
    analyze,
    build_pseudo_circulant,
    build_puiseux_svd,
    decompose,
    demultiplex_signs,
    eval_points,
    generate_fixture,
    lambdas_from_phi,
    load_matrix,
    multiply,
    verify_factorization,
)
from pcsvd.tracking import tracking_grid

OMEGA = np.linspace(0, 2 * np.pi, 97, endpoint=False) + 0.0137


def _evals(fact, omega):
    return (eval_points(X, omega) for X in (fact.left_U, fact.middle, fact.right_V))


def _herm(X):
    return np.conj(np.swapaxes(X, 1, 2))


@pytest.fixture(scope="module")
def paired_puiseux():
    return decompose(load("paired4x4.json"), "puiseux")


@pytest.fixture(scope="module")
def signed_all():
    A = load("signed2x3.json")
    return {m: decompose(A, m) for m in ("puiseux", "complex", "pseudocirculant")}


# -- puiseux SVD ---------------------------------------------------------------


def test_paired4x4_sigma_match_closed_forms(paired_puiseux):
    f = paired_puiseux
    om = np.linspace(0, 8 * np.pi, 400)
    diag = np.diagonal(eval_points(f.middle, om), axis1=1, axis2=2)
    ref = paired_sigmas(om)
    for i in range(4):
        d = diag[:, i]
        assert min(min(np.abs(d - r).max(), np.abs(d + r).max()) for r in ref) < 1e-8
    assert f.middle.index_L == 4


def test_paired4x4_vectors_multiplexed(paired_puiseux):
    f = paired_puiseux
    U, _, V = _evals(f, OMEGA)
    U2, _, V2 = _evals(f, OMEGA + 2 * np.pi)
    c0 = 0
    for o in f.orbit_structure.orbits:
        a, b = c0, c0 + 1
        assert np.abs(U2[:, :, a] - U[:, :, b]).max() < 1e-8
        assert np.abs(U2[:, :, b] - U[:, :, a]).max() < 1e-8
        sign = (-1) ** (o.sign_kappa - 1)
        assert np.abs(V2[:, :, a] - V[:, :, b]).max() < 1e-8
        assert np.abs(V2[:, :, b] - sign * V[:, :, a]).max() < 1e-8
        if o.sign_kappa == 2:
            _, _, V4 = _evals(f, OMEGA + 4 * np.pi)
            assert np.abs(V4[:, :, a] + V[:, :, a]).max() < 1e-8
        c0 += 2


def test_constant_diagonal_is_its_own_svd():
    f = decompose(PuiseuxMatrix.constant(np.diag([2.0, 1.0])), "puiseux")
    for X, ref in ((f.left_U, np.eye(2)), (f.right_V, np.eye(2)), (f.middle, np.diag([2.0, 1.0]))):
        assert sorted(X.terms) == [0]
        np.testing.assert_allclose(X.terms[0], ref, atol=1e-14)
    assert f.middle.index_L == 1


def test_one_plus_z_puiseux(one_plus_z):
    f = decompose(one_plus_z, "puiseux")
    assert f.middle.index_L == 2
    sig = eval_points(f.middle, OMEGA)[:, 0, 0]
    ref = 2 * np.cos(OMEGA / 2)
    assert min(np.abs(sig - ref).max(), np.abs(sig + ref).max()) < 1e-12
    uv = eval_points(multiply(f.left_U, f.right_V.P), OMEGA)[:, 0, 0]
    np.testing.assert_allclose(uv * sig, 1 + np.exp(1j * OMEGA), atol=1e-12)
    assert np.abs(np.abs(uv) - 1).max() < 1e-12
    # U V^P = +-exp(j W / 2)
    assert min(np.abs(uv - s * np.exp(0.5j * OMEGA)).max() for s in (1, -1)) < 1e-12


def test_puiseux_middle_real_diagonal_and_singular_values(paired_puiseux):
    A = load("paired4x4.json")
    _, m, _ = _evals(paired_puiseux, OMEGA)
    off = m - np.einsum("kii->ki", m)[:, :, None] * np.eye(4)
    assert np.abs(off).max() < 1e-10 and np.abs(m.imag).max() < 1e-10
    sv = np.linalg.svd(eval_points(A, OMEGA), compute_uv=False)
    d = np.sort(np.abs(np.einsum("kii->ki", m)), axis=1)
    assert np.abs(d - np.sort(sv, axis=1)).max() < 1e-9


def test_build_from_components_matches_driver(signed2x3):
    b, st_ = analyze(signed2x3)
    f = build_puiseux_svd(b, st_)
    assert isinstance(f, Factorization) and f.kind == "puiseux_svd"
    assert verify_factorization(signed2x3, f).passed


# -- complex diagonal ----------------------------------------------------------


def test_signed2x3_complex_diagonal(signed_all):
    f = signed_all["complex"]
    s = np.diagonal(eval_points(f.middle, OMEGA), axis1=1, axis2=2)
    s1 = 2 * np.cos(OMEGA / 4) * np.exp(1j * OMEGA / 4)
    s2 = -2j * np.sin(OMEGA / 4) * np.exp(1j * OMEGA / 4)
    np.testing.assert_allclose(s[:, 0], s1, atol=1e-10)
    np.testing.assert_allclose(s[:, 1], s2, atol=1e-10)
    later = np.diagonal(eval_points(f.middle, OMEGA + 2 * np.pi), axis1=1, axis2=2)
    np.testing.assert_allclose(later[:, 0], s2, atol=1e-10)
    np.testing.assert_allclose(later[:, 1], s1, atol=1e-10)
    assert f.middle.index_L == 2


def test_demultiplex_preserves_left_and_dyads(signed_all, signed2x3):
    f = signed_all["puiseux"]
    g = demultiplex_signs(f)
    om = np.linspace(0, 8 * np.pi, 301)
    assert np.abs(eval_points(g.left_U, om) - eval_points(f.left_U, om)).max() < 1e-14
    a = eval_points(signed2x3, OMEGA)
    for h in (f, g):
        U, m, V = _evals(h, OMEGA)
        assert np.linalg.norm(U @ m @ _herm(V) - a, axis=(1, 2)).max() / np.linalg.norm(a, axis=(1, 2)).max() < 1e-9
    _, m_f, _ = _evals(f, OMEGA)
    _, m_g, _ = _evals(g, OMEGA)
    np.testing.assert_allclose(np.abs(m_g), np.abs(m_f), atol=1e-12)


def test_trivial_orbit_phase():
    f = decompose(PuiseuxMatrix.constant(np.diag([2.0, 1.0])), "complex")
    s = np.einsum("kii->ki", eval_points(f.middle, OMEGA))
    np.testing.assert_allclose(s, np.array([2.0, 1.0]) * np.exp(1j * OMEGA)[:, None], atol=1e-12)


def test_one_plus_z_complex_is_holomorphic(one_plus_z):
    f = decompose(one_plus_z, "complex")
    assert f.middle.index_L == 1
    np.testing.assert_allclose(eval_points(f.middle, OMEGA)[:, 0, 0], 1 + np.exp(1j * OMEGA), atol=1e-12)
    np.testing.assert_allclose(eval_points(multiply(f.left_U, f.right_V.P), OMEGA)[:, 0, 0], 1, atol=1e-12)


# -- pseudo-circulant ----------------------------------------------------------


def test_signed2x3_pseudo_circulant_middle(signed_all):
    C = signed_all["pseudocirculant"].middle
    assert C.index_L == 1 and sorted(C.terms) == [0, 1]
    np.testing.assert_allclose(C.terms[0], [[1, 1, 0], [0, 1, 0]], atol=1e-10)
    np.testing.assert_allclose(C.terms[1], [[0, 0, 0], [1, 0, 0]], atol=1e-10)


def test_signed2x3_left_factor_matches_reference_up_to_gauge(signed_all):
    f = signed_all["pseudocirculant"]
    pub = load_matrix(data_path("signed2x3_factors") / "U.json")
    G = _herm(eval_points(pub, OMEGA)) @ eval_points(f.left_U, OMEGA)
    g = G[:, 0, 0]
    # the gauge is a unimodular scalar on the (single) orbit block
    assert np.abs(G - g[:, None, None] * np.eye(2)).max() < 1e-10
    assert np.abs(np.abs(g) - 1).max() < 1e-10
    pubV = load_matrix(data_path("signed2x3_factors") / "V.json")
    H = _herm(eval_points(pubV, OMEGA)) @ eval_points(f.right_V, OMEGA)
    assert np.abs(H[:, :2, :2] - g[:, None, None] * np.eye(2)).max() < 1e-10


def test_all_k1_orbits_keep_diagonal():
    A = PuiseuxMatrix.constant(np.diag([2.0, 1.0]))
    f = decompose(A, "pseudocirculant")
    c = decompose(A, "complex")
    assert f.middle.index_L == 1 and c.middle.index_L == 1
    np.testing.assert_allclose(eval_points(f.middle, OMEGA), eval_points(c.middle, OMEGA), atol=1e-12)
    assert all(b.size == 1 for b in f.blocks)


def test_pseudo_circulant_rejects_wrong_kind(signed_all):
    with pytest.raises(ValueError):
        build_pseudo_circulant(signed_all["puiseux"])


def test_blocks_follow_orbit_copies(paired_puiseux):
    f = build_pseudo_circulant(demultiplex_signs(paired_puiseux))
    st_ = f.orbit_structure
    assert [b.size for b in f.blocks] == [o.multiplex_k for o in st_.orbits for _ in range(o.multiplicity_q)]
    for X in (f.left_U, f.middle, f.right_V):
        assert X.index_L == 1


def _block_lambdas(C, st_):
    """Eigenvalue tracks of each pseudo-circulant block of ``C`` (read off its first column)."""
    grid = tracking_grid(256)
    out = []
    c0 = 0
    for o in st_.orbits:
        for _ in range(o.multiplicity_q):
            k = o.multiplex_k
            idx = list(range(c0, c0 + k))
            blk = CirculantBlock.from_matrix(C.block(idx, idx))
            out.append((k, lambdas_from_phi(blk, grid).values.reshape(grid.K, k)))
            c0 += k
    return out


def _same_multiset(a, b, tol):
    """Per-point multiset equality of two (K, k) tracks up to one unimodular constant per block.

    The factorization only fixes a block up to ``C -> C / c`` with ``U -> U c``;
    relabeling which orbit member comes first produces such a ``c`` (a root of unity).
    """
    for j in range(b.shape[1]):
        c = a[0, 0] / b[0, j]
        if abs(abs(c) - 1) > tol:
            continue
        ok = all(
            min(np.abs(a[m] - c * np.array(p)).max() for p in itertools.permutations(b[m])) <= tol
            for m in range(a.shape[0])
        )
        if ok:
            return True
    return False


@pytest.mark.parametrize("orbits,seed,shape", [("2,2,1;1,1,1", 3, (3, 3)), ("3,1,1", 5, (4, 3)), ("2,1,2", 8, (4, 4))])
def test_synthetic_blocks_keep_eigenvalue_tracks(orbits, seed, shape):
    fx = generate_fixture(orbits, seed, shape)
    assert not fx.degenerate
    f = decompose(fx.matrix, "pseudocirculant")
    ours = _block_lambdas(f.middle, f.orbit_structure)
    truth = _block_lambdas(fx.middle, fx.structure)
    assert sorted(k for k, _ in ours) == sorted(k for k, _ in truth)
    unmatched = list(truth)
    for k, lam in ours:
        hit = next(
            (i for i, (k0, lam0) in enumerate(unmatched) if k0 == k and _same_multiset(lam, lam0, 1e-8)), None
        )
        assert hit is not None
        unmatched.pop(hit)


# -- invariants over synthetic fixtures ---------------------------------------


@settings(max_examples=12)
@given(
    seed=st.integers(0, 10**6),
    k=st.integers(1, 3),
    kappa=st.integers(1, 2),
    mode=st.sampled_from(["puiseux", "complex", "pseudocirculant"]),
)
def test_factorization_invariants(seed, k, kappa, mode):
    fx = generate_fixture([(k, kappa, 1), (1, 1, 1)], seed, (k + 2, k + 1))
    if fx.degenerate:
        return
    A = fx.matrix
    f = decompose(A, mode)
    rep = verify_factorization(A, f)
    assert rep.reconstruction_residual <= 1e-8
    assert rep.left_paraunitarity <= 1e-9 and rep.right_paraunitarity <= 1e-9
    U, m, V = _evals(f, OMEGA)
    sv = np.linalg.svd(eval_points(A, OMEGA), compute_uv=False)
    if mode != "pseudocirculant":
        d = np.diagonal(m, axis1=1, axis2=2)
        assert np.abs(np.sort(np.abs(d), axis=1) - np.sort(sv, axis=1)).max() <= 1e-9
        if mode == "puiseux":
            assert np.abs(d.imag).max() < 1e-10
    else:
        for X in (f.left_U, f.middle, f.right_V):
            assert X.index_L == 1
        assert rep.middle_structure_residual <= 1e-9
    assert rep.multiplex_relation_residual <= 1e-8
