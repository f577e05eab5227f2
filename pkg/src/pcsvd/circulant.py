"""Pseudo-circulant blocks and the frequency-dependent DFT frame W_N.

A pseudo-circulant block of size N built from 2*pi-periodic functions
``phi_0 .. phi_{N-1}`` has entry ``(r, c)`` equal to ``phi_{(r - c) mod N}``,
times ``exp(-j*Omega)`` on the strict upper triangle.  Every such block is
diagonalized by ``W_N(Omega) = diag(exp(j*Omega*k/N)) @ F_N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MultiplexError
from .laurent import (
    FrequencyGrid,
    GridSamples,
    PuiseuxMatrix,
    coefficients_from_samples,
    eval_grid,
    eval_points,
    shift,
)


def fourier_matrix(N):
    """Unitary DFT matrix, ``F[k, i] = omega_N**(k*i) / sqrt(N)`` with ``omega_N = exp(2j*pi/N)``."""
    k = np.arange(N)
    return np.exp(2j * np.pi * np.outer(k, k) / N) / np.sqrt(N)


def cyclic_permutation(N):
    """``P[i+1, i] = 1`` and ``P[0, N-1] = 1``, so ``(X @ P)[:, i] = X[:, i+1]`` cyclically."""
    return np.roll(np.eye(N), 1, axis=0)


def dft_frame_samples(N, omega):
    """``W_N`` evaluated at each angle in ``omega``; shape ``(len(omega), N, N)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    D = np.exp(1j * np.outer(omega, np.arange(N)) / N)
    return D[:, :, None] * fourier_matrix(N)[None]


def dft_frame_matrix(N) -> PuiseuxMatrix:
    """``W_N`` as an index-N Puiseux matrix (row ``k`` carries ``z**(k/N)``)."""
    F = fourier_matrix(N)
    terms = {}
    for k in range(N):
        c = np.zeros((N, N), complex)
        c[k] = F[k]
        terms[k] = c
    return PuiseuxMatrix(N, N, N, terms)


@dataclass(frozen=True)
class DftFrame:
    size: int
    grid: FrequencyGrid
    W_samples: np.ndarray
    P_N: np.ndarray


def build_dft_frame(N: int, grid: FrequencyGrid) -> DftFrame:
    if N < 1:
        raise ValueError("N must be >= 1")
    return DftFrame(N, grid, dft_frame_samples(N, grid.points), cyclic_permutation(N))


@dataclass(frozen=True)
class CirculantBlock:
    """Generators ``phi`` (index-1 scalar matrices) of an N x N pseudo-circulant block."""

    size: int
    phi: tuple

    def __post_init__(self):
        if len(self.phi) != self.size:
            raise ValueError("need one generator per block row")
        for p in self.phi:
            if p.shape != (1, 1) or p.index_L != 1:
                raise ValueError("generators must be 1x1 index-1 matrices")

    def to_matrix(self) -> PuiseuxMatrix:
        N = self.size
        terms = {}
        for r in range(N):
            for c in range(N):
                p = self.phi[(r - c) % N]
                if r < c:
                    p = shift(p, -1)
                for n, v in p.terms.items():
                    terms.setdefault(n, np.zeros((N, N), complex))[r, c] = v[0, 0]
        return PuiseuxMatrix(N, N, 1, terms)

    def samples(self, grid: FrequencyGrid) -> GridSamples:
        return eval_grid(self.to_matrix(), grid)

    @classmethod
    def from_matrix(cls, C: PuiseuxMatrix):
        """Generators read off the first column of an index-1 block."""
        if C.index_L != 1 or C.rows != C.cols:
            raise ValueError("expected a square index-1 block")
        return cls(C.rows, tuple(C.block([k], [0]) for k in range(C.rows)))


def phi_from_lambdas(lambdas: GridSamples, tol=1e-9) -> CirculantBlock:
    """Generators of the pseudo-circulant block with the given multiplexed eigenvalues.

    ``lambdas.values[:, i]`` holds track ``lambda_i``; the tracks must satisfy
    ``lambda_i(Omega + 2*pi) = lambda_{i+1}(Omega)`` cyclically.
    """
    grid = lambdas.grid
    vals = lambdas.values.reshape(grid.K, -1)
    N = vals.shape[1]
    omega = grid.points
    w = np.exp(2j * np.pi / N)
    k = np.arange(N)
    # phi_k(W) = exp(j W k / N) / N * sum_i lambda_i(W) w^(k i)
    mix = w ** np.outer(np.arange(N), k)  # [i, k]
    phis = (vals @ mix) / N * np.exp(1j * np.outer(omega, k) / N)
    per = grid.per_period
    scale = max(np.abs(vals).max(), np.finfo(float).tiny)
    if grid.P > 1:
        dev = np.abs(phis[per:] - phis[:-per]).max() / scale
        if dev > tol:
            raise MultiplexError(f"generators not 2*pi-periodic (deviation {dev:.2e})")
    one = grid.with_periods(1)
    phi = []
    for j in range(N):
        p = coefficients_from_samples(GridSamples(one, phis[:per, j]), 1, trim_tol=0.0, tail_tol=np.inf)
        # trim against the whole block so identically zero generators come out empty
        keep = {n: c for n, c in p.terms.items() if np.abs(c).max() > 1e-14 * scale}
        phi.append(PuiseuxMatrix(1, 1, 1, keep))
    phi = tuple(phi)
    return CirculantBlock(N, phi)


def lambdas_from_phi(block: CirculantBlock, grid: FrequencyGrid) -> GridSamples:
    """Eigenvalue tracks ``lambda_i = sum_k exp(-j W k / N) phi_k(W) w^(-k i)``."""
    N = block.size
    omega = grid.points
    phis = np.stack([eval_points(p, omega)[:, 0, 0] for p in block.phi], axis=1)
    k = np.arange(N)
    w = np.exp(2j * np.pi / N)
    lam = (phis * np.exp(-1j * np.outer(omega, k) / N)) @ (w ** (-np.outer(k, np.arange(N))))
    return GridSamples(grid, lam[:, :, None])
