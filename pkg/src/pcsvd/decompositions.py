"""Puiseux SVD, complex diagonal and block pseudo-circulant factorizations.

All three share one column layout: for each orbit, for each of its ``q``
copies, the ``k`` members in cycle order; the residual null-space columns
come last.  ``A = U @ middle @ V.P`` in every case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .circulant import CirculantBlock, dft_frame_matrix
from .errors import MultiplexError, NonGenericStartError
from .laurent import (
    GridSamples,
    PuiseuxMatrix,
    block_diagonal,
    coefficients_from_samples,
    eval_grid,
    multiply,
)
from .multiplex import OrbitStructure, analyze_branches
from .tracking import BranchSet, align_vectors, refine, track_branches

FACTOR_TRIM = 1e-10
# frame products only reshuffle coefficients; trim just below round-off
PRODUCT_TRIM = 1e-15
KINDS = ("puiseux_svd", "complex_diagonal", "pseudo_circulant")
MODES = {"puiseux": "puiseux_svd", "complex": "complex_diagonal", "pseudocirculant": "pseudo_circulant"}
# off-lattice coefficient mass tolerated when lowering the index
LATTICE_TOL = 1e-8


@dataclass(frozen=True)
class Factorization:
    """``A = left_U @ middle @ right_V.P`` plus the orbit metadata it was built from."""

    kind: str
    left_U: PuiseuxMatrix
    middle: PuiseuxMatrix
    right_V: PuiseuxMatrix
    orbit_structure: OrbitStructure
    residuals: dict = field(default_factory=dict)
    blocks: tuple = ()
    grid_k: int = 0
    truncation: float = 0.0
    flags: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown factorization kind {self.kind!r}")
        M, N = self.middle.shape
        if self.left_U.shape != (M, M) or self.right_V.shape != (N, N):
            raise ValueError("factor shapes do not match the middle matrix")

    @property
    def shape(self):
        return self.middle.shape

    def metadata(self):
        st = self.orbit_structure.to_dict()
        return {
            "kind": self.kind,
            "orbits": st["orbits"],
            "L": st["L"],
            "tau": st["tau"],
            "shape": list(self.shape),
            "index_L": {
                "U": self.left_U.index_L,
                "middle": self.middle.index_L,
                "V": self.right_V.index_L,
            },
            "residuals": dict(self.residuals),
            "grid_k": self.grid_k,
            "truncation": self.truncation,
            "flags": list(self.flags),
        }


def _factor_residuals(U, middle, V, A_samples):
    """Reconstruction and paraunitarity on the construction grid (internal bookkeeping)."""
    L = math.lcm(U.index_L, middle.index_L, V.index_L)
    per = A_samples.grid.per_period
    grid = A_samples.grid.with_periods(L)
    u = eval_grid(U, grid).values
    m = eval_grid(middle, grid).values
    v = eval_grid(V, grid).values
    recon = u @ m @ np.conj(np.swapaxes(v, 1, 2))
    a = np.tile(A_samples.values[:per], (L, 1, 1))
    scale_ = max(np.linalg.norm(a, axis=(1, 2)).max(), np.finfo(float).tiny)
    eye = lambda n: np.eye(n)[None]  # noqa: E731
    return {
        "reconstruction": float(np.linalg.norm(recon - a, axis=(1, 2)).max() / scale_),
        "left_paraunitarity": float(
            np.linalg.norm(np.conj(np.swapaxes(u, 1, 2)) @ u - eye(u.shape[1]), axis=(1, 2)).max()
        ),
        "right_paraunitarity": float(
            np.linalg.norm(np.conj(np.swapaxes(v, 1, 2)) @ v - eye(v.shape[1]), axis=(1, 2)).max()
        ),
    }


def _recover(values, grid, L):
    """Coefficients from samples over ``L`` periods, plus their truncation error."""
    s = GridSamples(grid, values)
    X = coefficients_from_samples(s, L, trim_tol=1e-16, tail_tol=FACTOR_TRIM)
    X = _truncate(X, FACTOR_TRIM)
    back = eval_grid(X, grid).values
    scale_ = max(np.abs(s.values).max(), np.finfo(float).tiny)
    return X, float(np.abs(back - s.values).max() / scale_)


def _truncate(X, tol):
    """Drop the smallest terms while their summed norm stays within ``tol`` of the peak."""
    if not X.terms:
        return X
    ns = list(X.terms)
    norms = np.array([np.linalg.norm(X.terms[n]) for n in ns])
    order = np.argsort(norms, kind="stable")
    budget = np.cumsum(norms[order]) <= tol * norms.max()
    drop = {ns[i] for i in order[budget]}
    return PuiseuxMatrix(X.rows, X.cols, X.index_L, {n: c for n, c in X.terms.items() if n not in drop})


def _principal_root(H, omega, period):
    """``X(Omega) = exp(-Omega/(2*pi*period) * log H)`` for unitary ``H``; shape (K, q, q)."""
    T, Z = scipy.linalg.schur(H, output="complex")
    theta = np.angle(np.diag(T))
    phase = np.exp(-1j * np.outer(omega, theta) / (2 * np.pi * period))
    return np.einsum("ij,mj,kj->mik", Z, phase, Z.conj())


def _column_phases(X, cols, tol=1e-9):
    """Phase per column making its dominant coefficient entry real positive."""
    out = np.ones(len(cols), complex)
    if not X.terms:
        return out
    stack = np.stack(list(X.terms.values()))  # terms x rows x cols
    for i, c in enumerate(cols):
        col = stack[:, :, c]
        norms = np.linalg.norm(col, axis=1)
        if norms.max() == 0:
            continue
        t = int(np.flatnonzero(norms >= norms.max() * (1 - tol))[0])
        mags = np.abs(col[t])
        e = int(np.flatnonzero(mags >= mags.max() * (1 - tol))[0])
        out[i] = np.conj(col[t, e]) / mags[e]
    return out


def _scale_columns(X, d):
    return PuiseuxMatrix(X.rows, X.cols, X.index_L, {n: c * d[None, :] for n, c in X.terms.items()})


def build_puiseux_svd(branches: BranchSet, structure: OrbitStructure, A_samples=None) -> Factorization:
    """Puiseux SVD ``A = U Sigma V^P`` with multiplexed singular vectors.

    For each orbit the first member's branch is continued over ``k*kappa``
    periods and its gauge is closed so that the left vectors return after
    ``k`` periods; the other members are shifts of it by whole periods, which
    makes ``U_s(W + 2*pi) = U_{s+1}(W)`` hold exactly and the right vectors
    pick up ``(-1)**(kappa - 1)`` on wrapping around the orbit.
    """
    if not branches.aligned:
        branches = align_vectors(branches)
    per = branches.per_period
    L = structure.puiseux_L
    M, N = branches.shape
    grid = branches.grid.with_periods(L)
    K = grid.K
    r = structure.rank
    sig = np.zeros((K, r))
    U = np.zeros((K, M, M), complex)
    V = np.zeros((K, N, N), complex)
    c0 = 0
    for o in structure.orbits:
        k, q = o.multiplex_k, o.multiplicity_q
        span = o.period
        head = o.member_branches[0]
        s_m, U_m, V_m, G, e, c = branches.continuation(head, span)
        if c != head or e != 1:
            raise MultiplexError(f"orbit {o.member_branches} does not close after {span} periods")
        # gauge after k periods: U(W + 2*pi*k) = U(W) @ Gk
        Gk = branches.continuation(head, k)[3]
        X = _principal_root(Gk, branches.grid.with_periods(span).points, k)
        U_m = U_m @ X
        V_m = V_m @ X
        for t in range(q):
            for s in range(k):
                idx = (np.arange(K) + s * per) % (span * per)
                sig[:, c0] = s_m[idx]
                U[:, :, c0] = U_m[idx, :, t]
                V[:, :, c0] = V_m[idx, :, t]
                c0 += 1
    zl = np.tile(branches.zero_left[:per], (L, 1, 1))
    zr = np.tile(branches.zero_right[:per], (L, 1, 1))
    U[:, :, r:] = zl
    V[:, :, r:] = zr
    Sig = np.zeros((K, M, N), complex)
    Sig[:, np.arange(r), np.arange(r)] = sig

    Uc, tu = _recover(U, grid, L)
    Vc, tv = _recover(V, grid, L)
    Sc, ts = _recover(Sig, grid, L)
    # deterministic phase gauge; the same phase on U and V keeps each dyad
    # one phase per orbit copy (taken from its first member) keeps the shift relation
    du = np.ones(M, complex)
    c0 = 0
    for o in structure.orbits:
        for _ in range(o.multiplicity_q):
            du[c0 : c0 + o.multiplex_k] = _column_phases(Uc, [c0])[0]
            c0 += o.multiplex_k
    du[r:] = _column_phases(Uc, range(r, M))
    dv = np.ones(N, complex)
    dv[:r] = du[:r]
    dv[r:] = _column_phases(Vc, range(r, N))
    Uc = _scale_columns(Uc, du)
    Vc = _scale_columns(Vc, dv)
    if A_samples is None:
        A_samples = branches.samples
    res = _factor_residuals(Uc, Sc, Vc, A_samples)
    return Factorization(
        "puiseux_svd",
        Uc,
        Sc,
        Vc,
        structure,
        res,
        grid_k=per,
        truncation=max(tu, tv, ts),
        flags=tuple(branches.flags),
    )


def _orbit_columns(structure):
    """For each branch column: ``(k, kappa, member s)``."""
    out = []
    for v, t, s in structure.layout():
        o = structure.orbits[v]
        out.append((o.multiplex_k, o.sign_kappa, s))
    return out


def demultiplex_signs(fact: Factorization) -> Factorization:
    """Complex diagonal decomposition ``A = U S V^P`` from a Puiseux SVD.

    Member ``s`` (0-based) of an orbit gets the unimodular factor
    ``z**(1/(k*kappa)) * omega**s`` with ``omega = exp(2j*pi/(k*kappa))`` on
    its middle entry and right-vector column.  The result is ``k``-multiplexed
    without sign, so every factor lowers to index ``lcm(k)``.
    """
    if fact.kind != "puiseux_svd":
        raise ValueError("demultiplex_signs expects a puiseux_svd factorization")
    st = fact.orbit_structure
    L = fact.middle.index_L
    N = fact.right_V.rows
    shifts = np.zeros(N, int)
    phases = np.ones(N, complex)
    for c, (k, kappa, s) in enumerate(_orbit_columns(st)):
        p = k * kappa
        shifts[c] = L // p
        phases[c] = np.exp(2j * np.pi * s / p)

    def apply(X):
        terms = {}
        for n, coef in X.terms.items():
            for c in range(X.cols):
                col = coef[:, c] * phases[c]
                m = n + shifts[c]
                terms.setdefault(m, np.zeros((X.rows, X.cols), complex))[:, c] = col
        return PuiseuxMatrix(X.rows, X.cols, X.index_L, terms)

    target = st.complex_index
    S, d1 = apply(fact.middle).reduce_index(target, LATTICE_TOL)
    V, d2 = apply(fact.right_V).reduce_index(target, LATTICE_TOL)
    U, d3 = fact.left_U.reduce_index(target, LATTICE_TOL)
    res = dict(fact.residuals)
    res["lattice_dropped"] = max(d1, d2, d3)
    return Factorization(
        "complex_diagonal",
        U,
        S,
        V,
        st,
        res,
        grid_k=fact.grid_k,
        truncation=fact.truncation,
        flags=fact.flags,
    )


def _frame_transform(structure, size):
    """``blockdiag(W_k^P per orbit copy, I)`` of the given size."""
    blocks = []
    for o in structure.orbits:
        for _ in range(o.multiplicity_q):
            blocks.append(dft_frame_matrix(o.multiplex_k).P)
    rest = size - structure.rank
    if rest:
        blocks.append(PuiseuxMatrix.identity(rest))
    if not blocks:
        return PuiseuxMatrix.identity(size)
    return block_diagonal(blocks)


def build_pseudo_circulant(fact: Factorization, A_samples=None) -> Factorization:
    """Holomorphic ``A = U C V^P`` with ``C`` block diagonal of pseudo-circulant blocks.

    Each orbit copy of size ``k`` is rotated by the DFT frame ``W_k``; the
    resulting factors are 2*pi-periodic and are returned with index 1.
    """
    if fact.kind != "complex_diagonal":
        raise ValueError("build_pseudo_circulant expects a complex_diagonal factorization")
    st = fact.orbit_structure
    M, N = fact.shape
    TM = _frame_transform(st, M)
    TN = _frame_transform(st, N)
    dropped = 0.0
    parts = []
    for X in (
        multiply(fact.left_U, TM, PRODUCT_TRIM),
        multiply(multiply(TM.P, fact.middle, PRODUCT_TRIM), TN, PRODUCT_TRIM),
        multiply(fact.right_V, TN, PRODUCT_TRIM),
    ):
        try:
            Y, d = X.reduce_index(1, LATTICE_TOL)
        except ValueError as exc:
            raise MultiplexError(f"factor is not 2*pi-periodic: {exc}") from exc
        parts.append(Y)
        dropped = max(dropped, d)
    U, C, V = parts
    blocks = []
    c0 = 0
    for o in st.orbits:
        for _ in range(o.multiplicity_q):
            k = o.multiplex_k
            idx = list(range(c0, c0 + k))
            blocks.append(CirculantBlock.from_matrix(C.block(idx, idx)))
            c0 += k
    res = dict(fact.residuals)
    res["lattice_dropped"] = max(res.get("lattice_dropped", 0.0), dropped)
    if A_samples is not None:
        res.update(_factor_residuals(U, C, V, A_samples))
    return Factorization(
        "pseudo_circulant",
        U,
        C,
        V,
        st,
        res,
        blocks=tuple(blocks),
        grid_k=fact.grid_k,
        truncation=fact.truncation,
        flags=fact.flags,
    )


# -- drivers -------------------------------------------------------------------


def analyze(A: PuiseuxMatrix, grid_k=None):
    """Track and analyze ``A``; returns ``(branches, structure)``."""
    if A.index_L != 1:
        raise ValueError("input must be an ordinary Laurent-polynomial matrix (index_L = 1)")

    def build(samples):
        b = align_vectors(track_branches(samples))
        return b, analyze_branches(b)

    return refine(A, build, grid_k)


def decompose(A: PuiseuxMatrix, mode="puiseux", grid_k=None) -> Factorization:
    """Run the pipeline up to the factorization named by ``mode``."""
    kind = MODES.get(mode, mode)
    if kind not in KINDS:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}")
    if A.index_L != 1:
        raise ValueError("input must be an ordinary Laurent-polynomial matrix (index_L = 1)")

    def build(samples):
        b = align_vectors(track_branches(samples))
        if any("interpolated" in fl for fl in b.flags):
            # bridged vectors are only second-order accurate; re-sample off the zero
            raise NonGenericStartError("grid point on a branch zero", float(b.grid.points[0]))
        st = analyze_branches(b)
        f = build_puiseux_svd(b, st, samples)
        if kind == "puiseux_svd":
            return f
        f = demultiplex_signs(f)
        if kind == "complex_diagonal":
            return f
        return build_pseudo_circulant(f, samples)

    return refine(A, build, grid_k)


__all__ = [
    "Factorization",
    "analyze",
    "build_pseudo_circulant",
    "build_puiseux_svd",
    "decompose",
    "demultiplex_signs",
]
