"""Residual and structure checks for factorizations, evaluated on a fresh grid.

Nothing here reuses the constructors' sampling code: factors and input are
evaluated term by term on a grid with three times the construction
resolution and no offset, so agreement certifies the coefficients rather
than the samples they were recovered from.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .laurent import GridSamples, PuiseuxMatrix
from .multiplex import OrbitStructure
from .tracking import BranchSet

PROFILES = {
    "default": {
        "reconstruction": 1e-8,
        "paraunitarity": 1e-9,
        "structure": 1e-9,
        "multiplex": 1e-8,
        "periodicity": 1e-9,
        "singular_values": 1e-9,
    },
}
PROFILES["strict"] = {key: 1e-14 for key in PROFILES["default"]}


def parse_profile(text=None):
    """Tolerance profile from ``"default"``, ``"strict"`` or ``"name,key=val,..."``.

    Bare ``key=val`` items override the default profile.
    """
    if text is None or isinstance(text, dict):
        base = dict(PROFILES["default"])
        base.update(text or {})
        return base
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    base = dict(PROFILES["default"])
    for item in items:
        if "=" in item:
            key, val = (s.strip() for s in item.split("=", 1))
            if key not in base:
                raise ValueError(f"unknown tolerance {key!r}; expected one of {sorted(base)}")
            base[key] = float(val)
        elif item in PROFILES:
            base = dict(PROFILES[item])
        else:
            raise ValueError(f"unknown profile {item!r}; expected one of {sorted(PROFILES)}")
    return base


def _evaluate(X: PuiseuxMatrix, omega):
    out = np.zeros((omega.size, X.rows, X.cols), complex)
    for n, c in X.terms.items():
        out += np.exp(1j * omega * (n / X.index_L))[:, None, None] * c[None]
    return out


def _herm(X):
    return np.conj(np.swapaxes(X, -1, -2))


def _roll(X, per):
    """Value at ``Omega + 2*pi`` on a periodic grid with ``per`` points per period."""
    return np.roll(X, -per, axis=0)


@dataclass(frozen=True)
class VerificationReport:
    reconstruction_residual: float
    left_paraunitarity: float
    right_paraunitarity: float
    middle_structure_residual: float
    multiplex_relation_residual: float
    periodicity_residual: float
    singular_value_residual: float = 0.0
    profile: dict = field(default_factory=lambda: dict(PROFILES["default"]))
    grid_points: int = 0

    def residuals(self):
        return {
            "reconstruction": self.reconstruction_residual,
            "left_paraunitarity": self.left_paraunitarity,
            "right_paraunitarity": self.right_paraunitarity,
            "structure": self.middle_structure_residual,
            "multiplex": self.multiplex_relation_residual,
            "periodicity": self.periodicity_residual,
            "singular_values": self.singular_value_residual,
        }

    def failures(self):
        tol = self.profile
        checks = {
            "reconstruction": (self.reconstruction_residual, tol["reconstruction"]),
            "left_paraunitarity": (self.left_paraunitarity, tol["paraunitarity"]),
            "right_paraunitarity": (self.right_paraunitarity, tol["paraunitarity"]),
            "structure": (self.middle_structure_residual, tol["structure"]),
            "multiplex": (self.multiplex_relation_residual, tol["multiplex"]),
            "periodicity": (self.periodicity_residual, tol["periodicity"]),
            "singular_values": (self.singular_value_residual, tol["singular_values"]),
        }
        return {k: v for k, v in checks.items() if not v[0] <= v[1]}

    @property
    def passed(self):
        return not self.failures()

    def to_dict(self):
        return {
            "residuals": self.residuals(),
            "profile": dict(self.profile),
            "pass": self.passed,
            "failures": sorted(self.failures()),
            "grid_points": self.grid_points,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self):
        fails = self.failures()
        lines = []
        tol_key = {"left_paraunitarity": "paraunitarity", "right_paraunitarity": "paraunitarity"}
        for key, val in self.residuals().items():
            tol = self.profile[tol_key.get(key, key)]
            mark = "FAIL" if key in fails else "ok"
            lines.append(f"{key:20s} {val:.3e}  (tol {tol:.1e})  {mark}")
        lines.append(f"pass = {str(self.passed).lower()}")
        return "\n".join(lines)


def verify_circulant_block(samples: GridSamples, N: int) -> float:
    """Largest entrywise deviation of N x N block samples from the pseudo-circulant template.

    Each generator ``phi_d`` is fitted in the least-squares sense from the
    ``N`` entries of its wrapped diagonal (upper-triangle entries have their
    ``exp(-j*Omega)`` factor removed first).
    """
    vals = samples.values
    if vals.shape[1:] != (N, N):
        raise ValueError(f"expected {N}x{N} samples, got {vals.shape[1:]}")
    return _circulant_deviation(vals, samples.grid.points)


def verify_orbit_relations(branches: BranchSet, structure: OrbitStructure) -> float:
    """Relative deviation from ``sigma_{s+1}(W) = +-sigma_s(W + 2*pi)`` and the terminal relation.

    The tracked branches carry independent sign conventions, so each
    member-to-member relation is accepted up to sign; the terminal relation
    ``sigma(W + 2*pi*k) = (-1)**(kappa-1) sigma(W)`` is checked exactly on
    the continued first member.
    """
    if not structure.orbits:
        return 0.0
    kmax = max(o.multiplex_k for o in structure.orbits)
    P = branches.grid.P
    if P < kmax + 1:
        raise ValueError(f"tracking covers {P} periods; need at least {kmax + 1}")
    per = branches.per_period
    scale = max(branches.scale, np.finfo(float).tiny)
    worst = 0.0
    tracks = branches.sigma_tracks
    span = (P - 1) * per
    for o in structure.orbits:
        m = o.member_branches
        k = len(m)
        for s in range(k):
            a = tracks[m[(s + 1) % k], :span]
            b = tracks[m[s], per : per + span]
            worst = max(worst, min(np.abs(a - b).max(), np.abs(a + b).max()) / scale)
        head = tracks[m[0]]
        lag = k * per
        sign = (-1) ** (o.sign_kappa - 1)
        worst = max(worst, np.abs(head[lag:] - sign * head[: head.size - lag]).max() / scale)
    return float(worst)


def _diag(X):
    n = min(X.shape[1:])
    return X[:, np.arange(n), np.arange(n)]


def _offdiag(X):
    n = min(X.shape[1:])
    Y = X.copy()
    Y[:, np.arange(n), np.arange(n)] = 0
    return Y


def _multiplex(X, structure, per, terminal_sign, side_rows=False):
    """Member-shift relation on the orbit columns (rows too when ``side_rows``)."""
    shifted = _roll(X, per)
    worst = 0.0
    c0 = 0
    for o in structure.orbits:
        k = o.multiplex_k
        for _ in range(o.multiplicity_q):
            for s in range(k):
                nxt = c0 + (s + 1) % k
                sign = terminal_sign(o) if s == k - 1 else 1
                if side_rows:
                    a = shifted[:, c0 + s, c0 + s]
                    b = X[:, nxt, nxt]
                else:
                    a = shifted[:, :, c0 + s]
                    b = X[:, :, nxt]
                worst = max(worst, float(np.abs(a - sign * b).max()))
            c0 += k
    return worst


def verify_factorization(A: PuiseuxMatrix, fact, profile=None, grid_k=None) -> VerificationReport:
    """Audit ``A = U middle V^P`` and the structure promised by ``fact.kind``."""
    tol = parse_profile(profile)
    U, Mid, V = fact.left_U, fact.middle, fact.right_V
    M, N = A.shape
    if Mid.shape != (M, N) or U.shape != (M, M) or V.shape != (N, N):
        raise ValueError(
            f"factor shapes U{U.shape} middle{Mid.shape} V{V.shape} do not fit A{A.shape}"
        )
    st = fact.orbit_structure
    base = grid_k or getattr(fact, "grid_k", 0) or 256
    per = 3 * base
    Lf = math.lcm(A.index_L, U.index_L, Mid.index_L, V.index_L)
    omega = 2 * np.pi * np.arange(per * Lf) / per
    a = _evaluate(A, omega)
    u = _evaluate(U, omega)
    m = _evaluate(Mid, omega)
    v = _evaluate(V, omega)
    norm_a = np.linalg.norm(a, axis=(1, 2)).max()
    scale = norm_a if norm_a > 0 else 1.0

    recon = np.linalg.norm(a - u @ m @ _herm(v), axis=(1, 2)).max() / scale
    left = np.linalg.norm(_herm(u) @ u - np.eye(M), axis=(1, 2)).max()
    right = np.linalg.norm(_herm(v) @ v - np.eye(N), axis=(1, 2)).max()

    sv_a = np.linalg.svd(a, compute_uv=False)
    sv_m = np.linalg.svd(m, compute_uv=False)
    sv = np.abs(sv_a - sv_m).max() / scale if sv_a.size else 0.0

    kind = fact.kind
    if kind == "puiseux_svd":
        structure = max(np.abs(_offdiag(m)).max(initial=0), np.abs(_diag(m).imag).max(initial=0))
        expected = st.puiseux_L
        vsign = lambda o: (-1) ** (o.sign_kappa - 1)  # noqa: E731
        mux = max(
            _multiplex(u, st, per, lambda o: 1),
            _multiplex(v, st, per, vsign),
            _multiplex(m, st, per, vsign, side_rows=True) / scale,
        )
    elif kind == "complex_diagonal":
        structure = np.abs(_offdiag(m)).max(initial=0)
        expected = st.complex_index
        one = lambda o: 1  # noqa: E731
        mux = max(
            _multiplex(u, st, per, one),
            _multiplex(v, st, per, one),
            _multiplex(m, st, per, one, side_rows=True) / scale,
        )
    else:
        expected = 1
        mux = 0.0
        mask = np.zeros((M, N), bool)
        structure = 0.0
        c0 = 0
        for o in st.orbits:
            for _ in range(o.multiplicity_q):
                k = o.multiplex_k
                blk = m[:, c0 : c0 + k, c0 : c0 + k]
                structure = max(structure, _circulant_deviation(blk, omega))
                mask[c0 : c0 + k, c0 : c0 + k] = True
                c0 += k
        structure = max(structure, np.abs(m[:, ~mask]).max(initial=0))
    structure /= scale

    lag = expected * per
    period = 0.0
    for X, s in ((u, 1.0), (m, scale), (v, 1.0)):
        if lag < X.shape[0]:
            period = max(period, np.abs(np.roll(X, -lag, axis=0) - X).max() / s)
    return VerificationReport(
        float(recon),
        float(left),
        float(right),
        float(structure),
        float(mux),
        float(period),
        float(sv),
        tol,
        omega.size,
    )


def _circulant_deviation(vals, omega):
    N = vals.shape[1]
    r, c = np.indices((N, N))
    d = (r - c) % N
    unwind = np.where((r < c)[None], np.exp(1j * omega)[:, None, None], 1.0)
    flat = vals * unwind
    phi = np.stack([flat[:, d == k].mean(axis=1) for k in range(N)], axis=1)
    return float(np.abs(vals - phi[:, d] / unwind).max(initial=0))
