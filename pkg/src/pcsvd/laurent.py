"""Matrices with finite Puiseux-series entries.

A :class:`PuiseuxMatrix` of index ``L`` stores coefficient matrices keyed by
an integer numerator ``n``; the term contributes ``A[n] * z**(n / L)``.  On
the unit circle ``z = exp(j*Omega)`` an index-``L`` matrix is a
``2*pi*L``-periodic function of ``Omega`` (with ``z**(1/L)`` read as
``exp(j*Omega/L)``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ParseError, ShapeError, TailNotDecayedError

TRIM_TOL = 1e-12


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _trim(terms, tol):
    """Drop terms whose norm is below ``tol`` times the largest term norm."""
    if not terms:
        return {}
    norms = {n: float(np.linalg.norm(c)) for n, c in terms.items()}
    peak = max(norms.values())
    if peak == 0.0:
        return {}
    return {n: c for n, c in terms.items() if norms[n] > tol * peak}


@dataclass(frozen=True)
class PuiseuxMatrix:
    """Rectangular matrix whose entries are finite Laurent series in z^(1/L).

    Instances are immutable.  Use :meth:`from_terms` to build a canonical
    (trimmed) instance from arbitrary coefficient data.
    """

    rows: int
    cols: int
    index_L: int
    terms: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.index_L < 1:
            raise ValueError("index_L must be a positive integer")
        clean = {}
        for n, c in self.terms.items():
            arr = np.array(c, dtype=complex)
            if arr.shape != (self.rows, self.cols):
                raise ShapeError(
                    f"term {n} has shape {arr.shape}, expected {(self.rows, self.cols)}"
                )
            if np.any(arr != 0):
                arr.setflags(write=False)
                clean[int(n)] = arr
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    # -- construction -------------------------------------------------------

    @classmethod
    def from_terms(cls, terms, index_L=1, shape=None, trim_tol=TRIM_TOL):
        """Canonical matrix from ``{n: coefficient}``, trimmed at ``trim_tol``."""
        terms = {int(n): np.atleast_2d(np.asarray(c, dtype=complex)) for n, c in terms.items()}
        if shape is None:
            if not terms:
                raise ShapeError("shape is required for an empty term map")
            shape = next(iter(terms.values())).shape
        return cls(shape[0], shape[1], index_L, _trim(terms, trim_tol))

    @classmethod
    def zeros(cls, rows, cols, index_L=1):
        return cls(rows, cols, index_L, {})

    @classmethod
    def identity(cls, size, index_L=1):
        return cls(size, size, index_L, {0: np.eye(size)})

    @classmethod
    def constant(cls, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(matrix.shape[0], matrix.shape[1], 1, {0: matrix})

    @classmethod
    def scalar(cls, coeffs, index_L=1):
        """1x1 matrix from ``{n: value}``."""
        return cls(1, 1, index_L, {n: [[v]] for n, v in coeffs.items()})

    @classmethod
    def monomial(cls, n, index_L=1, size=1, coeff=1.0):
        return cls(size, size, index_L, {n: coeff * np.eye(size)})

    @classmethod
    def diagonal(cls, entries, shape=None):
        """Diagonal matrix from a list of 1x1 :class:`PuiseuxMatrix` entries."""
        size = len(entries)
        rows, cols = shape if shape is not None else (size, size)
        L = 1
        for e in entries:
            L = _lcm(L, e.index_L)
        terms = {}
        for i, e in enumerate(entries):
            for n, c in e.lift(L).terms.items():
                terms.setdefault(n, np.zeros((rows, cols), complex))[i, i] += c[0, 0]
        return cls(rows, cols, L, terms)

    # -- basic properties ----------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def exponents(self):
        """Exponents as ``(numerator, L)`` pairs, in increasing order."""
        return [(n, self.index_L) for n in self.terms]

    @property
    def bandwidth(self) -> float:
        """Largest absolute exponent, in units of powers of ``z``."""
        if not self.terms:
            return 0.0
        return max(abs(n) for n in self.terms) / self.index_L

    def is_zero(self):
        return not self.terms

    def coefficient(self, n):
        c = self.terms.get(n)
        return np.zeros(self.shape, complex) if c is None else c

    def block(self, rows=None, cols=None):
        """Sub-matrix selecting index lists (or ``None`` for all) of rows and columns."""
        r = np.arange(self.rows) if rows is None else np.asarray(rows, dtype=int).ravel()
        c = np.arange(self.cols) if cols is None else np.asarray(cols, dtype=int).ravel()
        sel = np.ix_(r, c)
        return PuiseuxMatrix(r.size, c.size, self.index_L, {n: m[sel] for n, m in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, PuiseuxMatrix):
            return NotImplemented
        if self.shape != other.shape or self.index_L != other.index_L:
            return False
        if self.terms.keys() != other.terms.keys():
            return False
        return all(np.array_equal(self.terms[n], other.terms[n]) for n in self.terms)

    def __hash__(self):
        return hash((self.rows, self.cols, self.index_L, tuple(self.terms)))

    def __repr__(self):
        return (
            f"PuiseuxMatrix(shape={self.shape}, index_L={self.index_L}, "
            f"exponents={[f'{n}/{self.index_L}' for n in self.terms]})"
        )

    # -- index manipulation --------------------------------------------------

    def lift(self, L):
        """Same matrix written with index ``L`` (a multiple of ``index_L``)."""
        if L % self.index_L:
            raise ValueError(f"cannot lift index {self.index_L} to {L}")
        f = L // self.index_L
        return PuiseuxMatrix(self.rows, self.cols, L, {n * f: c for n, c in self.terms.items()})

    def reduce_index(self, target=None, tol=0.0):
        """Rewrite with the smallest index dividing ``index_L`` that fits the exponents.

        With ``target`` given, exponents off the ``1/target`` lattice whose norm
        is at most ``tol`` times the largest term norm are dropped.  Returns
        ``(matrix, dropped)`` where ``dropped`` is the largest relative norm of
        a discarded term.
        """
        L = self.index_L
        if not self.terms:
            return PuiseuxMatrix(self.rows, self.cols, target or 1, {}), 0.0
        peak = max(float(np.linalg.norm(c)) for c in self.terms.values())
        if target is None:
            g = L
            for n in self.terms:
                g = math.gcd(g, n)
            f = g
            keep = self.terms
            dropped = 0.0
        else:
            if L % target:
                lifted = self.lift(_lcm(L, target))
                return lifted.reduce_index(target, tol)
            f = L // target
            keep = {n: c for n, c in self.terms.items() if n % f == 0}
            off = [float(np.linalg.norm(c)) / peak for n, c in self.terms.items() if n % f]
            dropped = max(off, default=0.0)
            if dropped > tol:
                raise ValueError(
                    f"terms off the 1/{target} lattice with relative norm {dropped:.3e}"
                )
        out = PuiseuxMatrix(self.rows, self.cols, L // f, {n // f: c for n, c in keep.items()})
        return out, dropped

    def trim(self, tol=TRIM_TOL):
        return PuiseuxMatrix(self.rows, self.cols, self.index_L, _trim(dict(self.terms), tol))

    # -- dense representation ------------------------------------------------

    def dense(self):
        """Return ``(n_min, array)`` with ``array[i]`` the coefficient of n_min + i."""
        if not self.terms:
            return 0, np.zeros((0, self.rows, self.cols), complex)
        lo, hi = min(self.terms), max(self.terms)
        arr = np.zeros((hi - lo + 1, self.rows, self.cols), complex)
        for n, c in self.terms.items():
            arr[n - lo] = c
        return lo, arr

    @classmethod
    def from_dense(cls, n_min, array, index_L=1, trim_tol=TRIM_TOL):
        array = np.asarray(array, dtype=complex)
        _, rows, cols = array.shape
        terms = {n_min + i: array[i] for i in range(array.shape[0])}
        return cls(rows, cols, index_L, _trim(terms, trim_tol))

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return multiply(self, other)

    @property
    def P(self):
        return para_hermitian(self)

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        return {
            "rows": self.rows,
            "cols": self.cols,
            "index_L": self.index_L,
            "terms": [
                {
                    "n": n,
                    "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in c],
                }
                for n, c in self.terms.items()
            ],
        }

    @classmethod
    def from_dict(cls, data):
        return _parse_matrix(data)

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}") from exc
        return cls.from_dict(data)


def _parse_int(data, key, path, minimum):
    if key not in data:
        raise ParseError(f"missing field '{key}'", path)
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError("expected an integer", f"{path}.{key}")
    if v < minimum:
        raise ParseError(f"must be >= {minimum}", f"{path}.{key}")
    return v


def _parse_matrix(data, path="$"):
    if not isinstance(data, dict):
        raise ParseError("expected an object", path)
    rows = _parse_int(data, "rows", path, 1)
    cols = _parse_int(data, "cols", path, 1)
    L = _parse_int(data, "index_L", path, 1)
    if "terms" not in data:
        raise ParseError("missing field 'terms'", path)
    raw_terms = data["terms"]
    if not isinstance(raw_terms, list):
        raise ParseError("expected an array", f"{path}.terms")
    terms = {}
    for t, term in enumerate(raw_terms):
        tpath = f"{path}.terms[{t}]"
        if not isinstance(term, dict):
            raise ParseError("expected an object", tpath)
        if "n" not in term or isinstance(term["n"], bool) or not isinstance(term["n"], int):
            raise ParseError("expected an integer exponent numerator", f"{tpath}.n")
        n = term["n"]
        if n in terms:
            raise ParseError(f"duplicate exponent numerator n={n}", f"{tpath}.n")
        mat = term.get("matrix")
        mpath = f"{tpath}.matrix"
        if not isinstance(mat, list) or len(mat) != rows:
            raise ParseError(f"expected {rows} rows", mpath)
        coef = np.zeros((rows, cols), complex)
        for i, row in enumerate(mat):
            if not isinstance(row, list) or len(row) != cols:
                raise ParseError(f"expected {cols} entries", f"{mpath}[{i}]")
            for k, pair in enumerate(row):
                ppath = f"{mpath}[{i}][{k}]"
                if (
                    not isinstance(pair, list)
                    or len(pair) != 2
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in pair)
                ):
                    raise ParseError("expected a [re, im] pair of numbers", ppath)
                if not all(math.isfinite(x) for x in pair):
                    raise ParseError("non-finite value", ppath)
                coef[i, k] = complex(pair[0], pair[1])
        terms[n] = coef
    return PuiseuxMatrix(rows, cols, L, terms)


def para_hermitian(A: PuiseuxMatrix) -> PuiseuxMatrix:
    """Time reversal plus conjugate transpose: ``(A^P)[n] = A[-n]^H``."""
    return PuiseuxMatrix(
        A.cols, A.rows, A.index_L, {-n: c.conj().T for n, c in A.terms.items()}
    )


def _common(A, B):
    L = _lcm(A.index_L, B.index_L)
    return A.lift(L), B.lift(L), L


def add(A: PuiseuxMatrix, B: PuiseuxMatrix, trim_tol=TRIM_TOL) -> PuiseuxMatrix:
    if A.shape != B.shape:
        raise ShapeError(f"cannot add shapes {A.shape} and {B.shape}")
    A, B, L = _common(A, B)
    terms = {n: c.copy() for n, c in A.terms.items()}
    for n, c in B.terms.items():
        terms[n] = terms[n] + c if n in terms else c.copy()
    return PuiseuxMatrix(A.rows, A.cols, L, _trim(terms, trim_tol))


def scale(A: PuiseuxMatrix, factor) -> PuiseuxMatrix:
    return PuiseuxMatrix(A.rows, A.cols, A.index_L, {n: factor * c for n, c in A.terms.items()})


def shift(A: PuiseuxMatrix, n: int) -> PuiseuxMatrix:
    """Multiply by ``z**(n / index_L)``."""
    return PuiseuxMatrix(A.rows, A.cols, A.index_L, {m + n: c for m, c in A.terms.items()})


def multiply(A: PuiseuxMatrix, B: PuiseuxMatrix, trim_tol=TRIM_TOL) -> PuiseuxMatrix:
    """Matrix product as a coefficient convolution."""
    if A.cols != B.rows:
        raise ShapeError(f"cannot multiply shapes {A.shape} and {B.shape}")
    A, B, L = _common(A, B)
    if not A.terms or not B.terms:
        return PuiseuxMatrix.zeros(A.rows, B.cols, L)
    b_lo, b_arr = B.dense()
    a_lo = min(A.terms)
    a_hi = max(A.terms)
    out = np.zeros((a_hi - a_lo + b_arr.shape[0], A.rows, B.cols), complex)
    for n, c in A.terms.items():
        off = n - a_lo
        out[off : off + b_arr.shape[0]] += np.einsum("ij,tjk->tik", c, b_arr)
    return PuiseuxMatrix.from_dense(a_lo + b_lo, out, L, trim_tol)


def hstack(blocks) -> PuiseuxMatrix:
    L = 1
    for b in blocks:
        L = _lcm(L, b.index_L)
    rows = blocks[0].rows
    cols = sum(b.cols for b in blocks)
    terms = {}
    c0 = 0
    for b in blocks:
        if b.rows != rows:
            raise ShapeError("row mismatch in hstack")
        for n, c in b.lift(L).terms.items():
            terms.setdefault(n, np.zeros((rows, cols), complex))[:, c0 : c0 + b.cols] = c
        c0 += b.cols
    return PuiseuxMatrix(rows, cols, L, terms)


def block_diagonal(blocks, shape=None) -> PuiseuxMatrix:
    """Blocks placed along the diagonal, padded with zeros to ``shape``."""
    L = 1
    for b in blocks:
        L = _lcm(L, b.index_L)
    rows = sum(b.rows for b in blocks)
    cols = sum(b.cols for b in blocks)
    if shape is not None:
        if shape[0] < rows or shape[1] < cols:
            raise ShapeError("blocks do not fit the requested shape")
        rows, cols = shape
    terms = {}
    r0 = c0 = 0
    for b in blocks:
        for n, c in b.lift(L).terms.items():
            terms.setdefault(n, np.zeros((rows, cols), complex))[
                r0 : r0 + b.rows, c0 : c0 + b.cols
            ] = c
        r0 += b.rows
        c0 += b.cols
    return PuiseuxMatrix(rows, cols, L, terms)


# -- frequency grids ---------------------------------------------------------


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FrequencyGrid:
    """``K`` equispaced points ``offset + 2*pi*P*m/K`` covering ``P`` periods.

    ``K / P`` (points per 2*pi period) must be a power of two.
    """

    K: int
    P: int = 1
    offset: float = 0.0

    def __post_init__(self):
        if self.P < 1 or self.K < 1:
            raise ValueError("K and P must be positive")
        if self.K % self.P or not _is_pow2(self.K // self.P):
            raise ValueError(f"K/P must be a power of two (K={self.K}, P={self.P})")

    @classmethod
    def for_matrix(cls, A: PuiseuxMatrix, P=1, offset=0.0, minimum=256):
        """Default grid: ``max(minimum, next power of two >= 8*bandwidth)`` points per period."""
        per = max(minimum, 1 << max(0, math.ceil(math.log2(max(1.0, 8 * A.bandwidth)))))
        return cls(per * P, P, offset)

    @property
    def per_period(self):
        return self.K // self.P

    @property
    def step(self):
        return 2 * np.pi * self.P / self.K

    @property
    def points(self):
        return self.offset + self.step * np.arange(self.K)

    def check_resolution(self, bandwidth):
        return self.K >= 4 * bandwidth * self.P

    def with_periods(self, P):
        return FrequencyGrid(self.per_period * P, P, self.offset)


@dataclass(frozen=True)
class GridSamples:
    """Matrix values on every point of a :class:`FrequencyGrid`."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None, None]
        elif vals.ndim == 2:
            vals = vals[:, :, None]
        if vals.shape[0] != self.grid.K:
            raise ShapeError(f"{vals.shape[0]} samples for a grid of {self.grid.K} points")
        if not np.all(np.isfinite(vals)):
            raise ValueError("samples contain NaN or Inf")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return self.values.shape[1:]

    def periods(self, P):
        """Samples restricted to the first ``P`` periods, or tiled out to ``P``."""
        per = self.grid.per_period
        if P <= self.grid.P:
            return GridSamples(self.grid.with_periods(P), self.values[: per * P])
        if P % self.grid.P:
            raise ValueError("can only tile by whole multiples of the sampled span")
        return GridSamples(self.grid.with_periods(P), np.tile(self.values, (P // self.grid.P, 1, 1)))


def eval_grid(A: PuiseuxMatrix, grid: FrequencyGrid) -> GridSamples:
    """Evaluate ``sum_n A[n] exp(j*Omega*n/L)`` at every grid point."""
    omega = grid.points
    if not A.terms:
        return GridSamples(grid, np.zeros((grid.K, A.rows, A.cols), complex))
    ns = np.array(list(A.terms), dtype=float)
    coefs = np.stack(list(A.terms.values())).reshape(len(ns), -1)
    basis = np.exp(1j * np.outer(omega, ns / A.index_L))
    values = (basis @ coefs).reshape(grid.K, A.rows, A.cols)
    return GridSamples(grid, values)


def eval_points(A: PuiseuxMatrix, omega) -> np.ndarray:
    """Evaluate at arbitrary angles; returns an array of shape ``(len(omega), rows, cols)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not A.terms:
        return np.zeros((omega.size, A.rows, A.cols), complex)
    ns = np.array(list(A.terms), dtype=float)
    coefs = np.stack(list(A.terms.values())).reshape(len(ns), -1)
    return (np.exp(1j * np.outer(omega, ns / A.index_L)) @ coefs).reshape(omega.size, A.rows, A.cols)


def coefficients_from_samples(
    samples: GridSamples, index_L: int, trim_tol=TRIM_TOL, tail_tol=None
) -> PuiseuxMatrix:
    """Inverse of :func:`eval_grid` for samples covering ``index_L`` periods.

    Exponent numerators are taken in ``[-K/2, K/2)``.  Raises
    :class:`TailNotDecayedError` when the outer quarter of that band carries
    more than ``tail_tol`` (default ``trim_tol``) of the peak coefficient norm.
    """
    grid = samples.grid
    if grid.P != index_L:
        raise ShapeError(f"samples cover {grid.P} periods, index_L is {index_L}")
    K = grid.K
    spectrum = np.fft.fft(samples.values, axis=0) / K
    ns = np.fft.fftfreq(K, 1.0 / K).astype(int)
    if grid.offset:
        spectrum = spectrum * np.exp(-1j * grid.offset * ns / index_L)[:, None, None]
    norms = np.linalg.norm(spectrum.reshape(K, -1), axis=1)
    peak = norms.max()
    if peak == 0.0:
        return PuiseuxMatrix.zeros(*samples.shape, index_L)
    tail_tol = trim_tol if tail_tol is None else tail_tol
    edge = np.abs(ns) >= (3 * K) // 8
    tail = float(norms[edge].max() / peak) if K >= 8 else 0.0
    if tail > tail_tol:
        raise TailNotDecayedError(
            f"coefficient tail {tail:.3e} exceeds {tail_tol:.1e}; refine the grid", tail
        )
    keep = norms > trim_tol * peak
    terms = {int(n): spectrum[i] for i, n in enumerate(ns) if keep[i]}
    return PuiseuxMatrix(samples.shape[0], samples.shape[1], index_L, terms)


def frobenius_residual(S1: GridSamples, S2: GridSamples) -> float:
    """Max-over-grid Frobenius distance, relative to the max Frobenius norm of ``S1``."""
    if S1.grid != S2.grid:
        raise ShapeError("samples live on different grids")
    if S1.shape != S2.shape:
        raise ShapeError(f"shape mismatch {S1.shape} vs {S2.shape}")
    diff = np.linalg.norm(S1.values - S2.values, axis=(1, 2)).max()
    scale_ = np.linalg.norm(S1.values, axis=(1, 2)).max()
    if scale_ == 0.0:
        return float(diff)
    return float(diff / scale_)


def load_matrix(path) -> PuiseuxMatrix:
    with open(path, encoding="utf-8") as fh:
        return PuiseuxMatrix.loads(fh.read())


def save_matrix(A: PuiseuxMatrix, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(A.dumps())
        fh.write("\n")
