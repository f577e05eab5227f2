"""Seeded test fixtures ``A = U C V^P`` with a prescribed orbit structure.

``U`` and ``V`` are random paraunitary matrices (a constant unitary times a
few degree-one reflectors ``I - (1 - z) v v^H``).  Each orbit contributes
``q`` copies of a pseudo-circulant block ``W_k diag(s_i) W_k^P`` whose
diagonal comes from one real "master" singular value
``sigma(W) = sum_n c_n exp(j n W / (k kappa))``.  Sign index 2 uses only odd
harmonics, so continuing ``sigma`` by ``k`` periods flips its sign; sign
index 1 adds a dominant constant so ``sigma`` stays positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circulant import dft_frame_matrix
from .errors import InfeasibleStructureError
from .laurent import PuiseuxMatrix, block_diagonal, multiply
from .multiplex import Orbit, OrbitStructure

# near-tangency thresholds, relative to the largest singular value
GAP_TOL = 2e-3
SLOPE_TOL = 5e-2
MAX_ATTEMPTS = 20


@dataclass(frozen=True)
class Fixture:
    matrix: PuiseuxMatrix
    structure: OrbitStructure
    seed: int
    degenerate: bool
    margin: float
    attempts: int
    # the construction itself: matrix = left @ middle @ right.P
    middle: PuiseuxMatrix | None = None
    left: PuiseuxMatrix | None = None
    right: PuiseuxMatrix | None = None

    def ground_truth(self):
        data = self.structure.to_dict()
        data.update(seed=self.seed, degenerate=self.degenerate, margin=self.margin)
        return data


def parse_structure(layout):
    """``[(k, kappa, q), ...]`` from an OrbitStructure, a list, or text ``"2,2,1;2,1,1"``."""
    if isinstance(layout, OrbitStructure):
        return [(o.multiplex_k, o.sign_kappa, o.multiplicity_q) for o in layout.orbits]
    if isinstance(layout, str):
        out = []
        for part in layout.replace(" ", "").split(";"):
            if not part:
                continue
            vals = part.strip("()").split(",")
            if len(vals) != 3:
                raise ValueError(f"orbit {part!r} must be k,kappa,q")
            out.append(tuple(int(v) for v in vals))
        layout = out
    out = []
    for item in layout:
        k, kappa, q = (int(v) for v in item)
        if k < 1 or q < 1 or kappa not in (1, 2):
            raise ValueError(f"invalid orbit (k={k}, kappa={kappa}, q={q})")
        out.append((k, kappa, q))
    return out


def _random_unitary(rng, n):
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_paraunitary(rng, n, degree=1) -> PuiseuxMatrix:
    """Constant unitary times ``degree`` reflectors ``I - (1 - z) v v^H``."""
    U = PuiseuxMatrix.constant(_random_unitary(rng, n))
    for _ in range(degree):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v /= np.linalg.norm(v)
        P = np.outer(v, v.conj())
        H = PuiseuxMatrix(n, n, 1, {0: np.eye(n) - P, 1: P})
        U = multiply(U, H)
    return U


def _master(rng, k, kappa):
    """Coefficients ``{n: c_n}`` (exponent ``n / (k kappa)``) of a real master value."""
    if kappa == 2:
        harmonics = [1] + ([3] if rng.random() < 0.5 else [])
    else:
        harmonics = [1] + ([2] if rng.random() < 0.5 else [])
    coef = {}
    total = 0.0
    for i, n in enumerate(harmonics):
        mag = rng.uniform(0.6, 1.2) if i == 0 else rng.uniform(0.1, 0.4)
        c = mag * np.exp(2j * np.pi * rng.random())
        coef[n] = c / 2
        coef[-n] = np.conj(c) / 2
        total += mag
    if kappa == 1:
        coef[0] = total + rng.uniform(0.3, 2.0)
    return coef


def _tracks(masters, structure, omega):
    """Real values of every distinct branch on ``omega`` plus their derivatives."""
    vals, ders = [], []
    for coef, (k, kappa, _) in zip(masters, structure):
        p = k * kappa
        for s in range(k):
            w = omega + 2 * np.pi * s
            v = sum(c * np.exp(1j * n * w / p) for n, c in coef.items())
            d = sum(c * (1j * n / p) * np.exp(1j * n * w / p) for n, c in coef.items())
            vals.append(v.real)
            ders.append(d.real)
    return np.array(vals), np.array(ders)


def collision_margin(masters, structure, extra_zero=False, points=4096):
    """Smallest near-tangency score among distinct branches (and their negatives).

    Two tracks come close without crossing cleanly exactly when both their
    gap and the gap of their slopes become small; the score is
    ``min over Omega of max(gap / GAP_TOL, slope gap / SLOPE_TOL)`` in units of
    the largest value, so a score below 1 marks a degenerate fixture.
    """
    L = 1
    for k, kappa, _ in structure:
        L = math.lcm(L, k * kappa)
    omega = 2 * np.pi * L * np.arange(points) / points
    vals, ders = _tracks(masters, structure, omega)
    scale = max(np.abs(vals).max(), 1e-300)
    best = np.inf
    n = len(vals)
    for i in range(n):
        for j in range(i, n):
            for sgn in (1, -1):
                if i == j and sgn == 1:
                    continue
                gap = np.abs(vals[i] - sgn * vals[j]) / scale
                slope = np.abs(ders[i] - sgn * ders[j]) / scale
                best = min(best, float(np.max([gap / GAP_TOL, slope / SLOPE_TOL], axis=0).min()))
        if extra_zero:
            gap = np.abs(vals[i]) / scale
            slope = np.abs(ders[i]) / scale
            best = min(best, float(np.max([gap / GAP_TOL, slope / SLOPE_TOL], axis=0).min()))
    return best


def _block(coef, k, kappa):
    """``W_k diag(s_0..s_{k-1}) W_k^P`` lowered to index 1."""
    p = k * kappa
    diag = []
    for s in range(k):
        # s_s(W) = sigma(W + 2 pi s) exp(j (W + 2 pi s) / p)
        terms = {
            n + 1: np.array([[c * np.exp(2j * np.pi * s * (n + 1) / p)]]) for n, c in coef.items()
        }
        diag.append(PuiseuxMatrix(1, 1, p, terms))
    D = block_diagonal(diag)
    W = dft_frame_matrix(k)
    C = multiply(multiply(W, D), W.P)
    C, _ = C.reduce_index(1, 1e-10)
    return C


def generate_fixture(structure, seed: int, shape) -> Fixture:
    """Deterministic fixture for ``structure`` (see :func:`parse_structure`) and ``shape``."""
    orbits = parse_structure(structure)
    M, N = (int(v) for v in shape)
    rank = sum(k * q for k, _, q in orbits)
    if M < 1 or N < 1:
        raise InfeasibleStructureError(f"invalid shape {M}x{N}")
    if rank > min(M, N):
        raise InfeasibleStructureError(
            f"orbits need rank {rank} but a {M}x{N} matrix has at most {min(M, N)}"
        )
    rng = np.random.default_rng(seed)
    extra_zero = rank < min(M, N) or M != N
    margin = 0.0
    for attempt in range(1, MAX_ATTEMPTS + 1):
        masters = [_master(rng, k, kappa) for k, kappa, _ in orbits]
        margin = collision_margin(masters, orbits, extra_zero) if orbits else np.inf
        if margin >= 1.0:
            break
    blocks = []
    for coef, (k, kappa, q) in zip(masters if orbits else [], orbits):
        blocks.extend([_block(coef, k, kappa)] * q)
    C = block_diagonal(blocks, (M, N)) if blocks else PuiseuxMatrix.zeros(M, N)
    U = random_paraunitary(rng, M, degree=1)
    V = random_paraunitary(rng, N, degree=1)
    A = multiply(multiply(U, C), V.P)
    st_orbits = []
    tau = {}
    b = 0
    L = 1
    for k, kappa, q in orbits:
        members = tuple(range(b, b + k))
        for s, m in enumerate(members):
            tau[m] = members[(s + 1) % k]
        st_orbits.append(Orbit(members, k, kappa, q))
        b += k
        L = math.lcm(L, k * kappa)
    st = OrbitStructure(tuple(st_orbits), tau, L, min(M, N) - rank, (M, N))
    return Fixture(A, st, seed, bool(margin < 1.0), float(min(margin, 1e300)), attempt, C, U, V)


def synthesize(structure, seed: int, shape) -> PuiseuxMatrix:
    """``A = U C V^P`` realizing ``structure`` with random paraunitary ``U``, ``V``."""
    return generate_fixture(structure, seed, shape).matrix
