"""Analytic singular-value branches from samples on the unit circle.

Tracking runs over one 2*pi period of a 2*pi-periodic input.  Each branch is
followed by singular-subspace overlap between neighbouring grid points, its
vectors are Procrustes-aligned, and its sign is flipped wherever the aligned
right vectors reverse (an odd-order zero of the singular value).  Arriving
back at the first grid point after one period, every branch lands on some
branch's starting data; the resulting end map (target branch, unitary gauge
``G`` and sign) gives the continuation over any number of periods without
re-tracking, because the alignment step is equivariant under constant
unitary changes of basis.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguousAssociationError, DegeneracyError, FactorizationError, ShapeError
from .errors import NonGenericStartError, TailNotDecayedError
from .laurent import FrequencyGrid, GridSamples, PuiseuxMatrix, eval_grid

ZERO_TOL = 1e-10
CLUSTER_TOL = 1e-8
MAX_POINTS = 2**16
# Grid offset as a fraction of the step; irrational so that symmetric
# zeros and crossings of the singular values do not land on grid points.
OFFSET_FRACTION = (3.0 - math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class PointwiseSVD:
    """Full SVD at every grid point: ``values[m] = U[m] @ diag(s[m]) @ V[m]^H``."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray


def pointwise_factor(samples: GridSamples) -> PointwiseSVD:
    """Classical SVD (descending singular values) at every grid point."""
    vals = samples.values
    try:
        U, s, Vh = np.linalg.svd(vals, full_matrices=True)
    except np.linalg.LinAlgError:
        for m, X in enumerate(vals):
            try:
                np.linalg.svd(X)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(f"SVD failed at grid point {m}", m) from exc
        raise
    V = np.conj(np.swapaxes(Vh, 1, 2))
    M, N = vals.shape[1:]
    k = min(M, N)
    recon = np.einsum("kij,kj,klj->kil", U[:, :, :k], s, V[:, :, :k].conj())
    scale = max(np.linalg.norm(vals, axis=(1, 2)).max(), np.finfo(float).tiny)
    err = np.linalg.norm(recon - vals, axis=(1, 2)) / scale
    bad = np.flatnonzero(err > 1e-12)
    if bad.size:
        raise FactorizationError(f"SVD residual {err[bad[0]]:.2e} at grid point {bad[0]}", int(bad[0]))
    return PointwiseSVD(U, s, V)


def _polar(X):
    W, _, Zh = np.linalg.svd(X, full_matrices=False)
    return W @ Zh


@dataclass(frozen=True)
class _Branch:
    sigma: np.ndarray  # (K1,) signed values over one period
    U: np.ndarray  # (K1, M, q)
    V: np.ndarray  # (K1, N, q)
    target: int  # branch reached after one period
    gauge: np.ndarray  # (q, q): U(Omega0 + 2pi) = U_target(Omega0) @ gauge
    sign: int  # sigma(Omega0 + 2pi) = sign * sigma_target(Omega0)

    @property
    def q(self):
        return self.U.shape[2]


@dataclass(frozen=True)
class BranchSet:
    """Tracked analytic singular-value branches over ``grid.P`` periods.

    ``sigma_tracks[i]`` is the signed value of distinct nonzero branch ``i``;
    its ``multiplicity[i]`` vector columns sit at ``columns[i]`` inside
    ``left_vectors`` and ``right_vectors``.  Branches are labelled by
    decreasing singular value at the first grid point.
    """

    grid: FrequencyGrid
    sigma_tracks: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    zero_left: np.ndarray
    zero_right: np.ndarray
    multiplicity: tuple
    columns: tuple
    samples: GridSamples  # one period of the input
    scale: float
    zero_tol: float
    aligned: bool = False
    flags: tuple = ()
    _branches: tuple = field(default=(), repr=False)

    @property
    def lambda_tracks(self):
        return self.sigma_tracks**2

    @property
    def num_branches(self):
        return len(self.multiplicity)

    @property
    def rank(self):
        return int(sum(self.multiplicity))

    @property
    def shape(self):
        return self.samples.shape

    @property
    def zero_branch_count(self):
        return min(self.shape) - self.rank

    @property
    def per_period(self):
        return self.grid.per_period

    @property
    def end_map(self):
        """``tau`` as tracked: branch ``i`` continued by 2*pi becomes ``target[i]``."""
        return tuple(b.target for b in self._branches)

    def sigma_matrix(self):
        """``(K, min(M, N))`` signed values with repeats for multiplicity and zeros."""
        cols = [np.repeat(s[None], q, axis=0) for s, q in zip(self.sigma_tracks, self.multiplicity)]
        out = np.zeros((min(self.shape), self.grid.K))
        if cols:
            stacked = np.concatenate(cols, axis=0)
            out[: stacked.shape[0]] = stacked
        return out.T

    def continuation(self, b, periods):
        """Signed values and aligned vectors of branch ``b`` over ``periods`` periods.

        Returns ``(sigma, U, V, gauge, sign)`` where ``gauge`` and ``sign`` relate
        the state after ``periods`` periods to the start of the branch then reached.
        """
        q = self.multiplicity[b]
        sig, Us, Vs = [], [], []
        G = np.eye(q, dtype=complex)
        e = 1
        c = b
        for _ in range(periods):
            br = self._branches[c]
            sig.append(e * br.sigma)
            Us.append(br.U @ G)
            Vs.append(e * (br.V @ G))
            G = br.gauge @ G
            e *= br.sign
            c = br.target
        return np.concatenate(sig), np.concatenate(Us), np.concatenate(Vs), G, e, c

    def over(self, periods):
        """Same branches materialized over ``periods`` periods."""
        if periods == self.grid.P:
            return self
        return _materialize(self._branches, self, periods)


def _materialize(branches, template, periods):
    per = template.samples.grid.per_period
    grid = template.samples.grid.with_periods(periods)
    M, N = template.samples.shape
    r = sum(b.q for b in branches)
    sig = np.zeros((len(branches), per * periods))
    left = np.zeros((per * periods, M, r), complex)
    right = np.zeros((per * periods, N, r), complex)
    proto = replace(template, grid=grid, _branches=branches)
    columns = []
    c0 = 0
    for i, b in enumerate(branches):
        s, U, V, *_ = proto.continuation(i, periods)
        sig[i] = s
        left[:, :, c0 : c0 + b.q] = U
        right[:, :, c0 : c0 + b.q] = V
        columns.append(tuple(range(c0, c0 + b.q)))
        c0 += b.q
    tile = lambda X: np.tile(X[:per], (periods, 1, 1))  # noqa: E731
    return replace(
        proto,
        sigma_tracks=sig,
        left_vectors=left,
        right_vectors=right,
        zero_left=tile(template.zero_left),
        zero_right=tile(template.zero_right),
        multiplicity=tuple(b.q for b in branches),
        columns=tuple(columns),
    )


def _clusters(values, tol):
    """Group a descending sequence into runs whose neighbours differ by <= tol."""
    groups = []
    for j, v in enumerate(values):
        if groups and values[groups[-1][-1]] - v <= tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    return groups


def track_branches(samples: GridSamples, zero_tol=ZERO_TOL) -> BranchSet:
    """Track analytic singular-value branches of a 2*pi-periodic sampled matrix.

    Only the first period of ``samples`` is tracked; later periods (if the
    grid covers more than one) must repeat it and are reproduced through
    the end map.  Raises :class:`AmbiguousAssociationError` when neighbouring
    points cannot be matched decisively; callers refine the grid and retry.
    """
    grid = samples.grid
    per = grid.per_period
    vals = samples.values
    if grid.P > 1:
        base = vals[:per]
        ref = max(np.abs(base).max(), np.finfo(float).tiny)
        if np.abs(vals - np.tile(base, (grid.P, 1, 1))).max() > 1e-12 * ref:
            raise ShapeError("samples are not 2*pi-periodic; track an index-1 matrix")
    one = GridSamples(grid.with_periods(1), vals[:per])
    svd = pointwise_factor(one)
    omega = one.grid.points
    M, N = one.shape
    scale = float(svd.s.max()) if svd.s.size else 0.0
    thr = zero_tol * scale
    ranks = (svd.s > thr).sum(axis=1) if scale > 0 else np.zeros(per, int)
    r = Counter(ranks.tolist()).most_common(1)[0][0] if scale > 0 else 0
    ctol = CLUSTER_TOL * scale
    patterns = Counter(
        tuple(len(g) for g in _clusters(svd.s[m, :r], ctol)) for m in range(per) if ranks[m] == r
    )
    generic = patterns.most_common(1)[0][0] if r else ()

    if r:
        start = _clusters(svd.s[0, :r], ctol)
        if ranks[0] != r or tuple(len(g) for g in start) != generic:
            raise NonGenericStartError("first grid point is not generic", omega[0])
    else:
        start = []

    nb = len(start)
    qs = [len(g) for g in start]
    sig = np.zeros((nb, per))
    Us = [np.zeros((per, M, q), complex) for q in qs]
    Vs = [np.zeros((per, N, q), complex) for q in qs]
    stateU, stateV = [], []
    for b, g in enumerate(start):
        stateU.append(svd.U[0][:, g])
        stateV.append(svd.V[0][:, g])
        sig[b, 0] = svd.s[0, g].mean()
        Us[b][0] = stateU[b]
        Vs[b][0] = stateV[b]
    slots = np.repeat(np.arange(nb), qs)
    end = [None] * nb

    flags = []
    pending = None  # (grid index, branches) awaiting interpolation
    for m in range(1, per + 1):
        i = m % per
        if not r:
            break
        rk = int(ranks[i])
        Uc, sc, Vc = svd.U[i][:, :rk], svd.s[i, :rk], svd.V[i][:, :rk]
        score = np.empty((nb, rk))
        for b in range(nb):
            score[b] = 0.5 * (
                np.linalg.norm(stateU[b].conj().T @ Uc, axis=0) ** 2
                + np.linalg.norm(stateV[b].conj().T @ Vc, axis=0) ** 2
            )
        rows, cols = linear_sum_assignment(-score[slots])
        assigned = [[] for _ in range(nb)]
        for s_, j in zip(rows, cols):
            assigned[slots[s_]].append(int(j))
        dropped = [b for b in range(nb) if len(assigned[b]) < qs[b]]
        if dropped:
            # a nonzero branch vanishes exactly at this grid point; only an
            # isolated simple zero can be bridged from its neighbours
            if pending is not None or m == per or any(assigned[b] or qs[b] != 1 for b in dropped):
                raise AmbiguousAssociationError("nonzero branch below zero tolerance", omega[i])
        newU, newV = {}, {}
        for b in range(nb):
            if b in dropped:
                continue
            J = sorted(assigned[b])
            inside = score[b, J].min()
            others = np.delete(score[b], J)
            outside = others.max() if others.size else 0.0
            if inside - outside < 0.5 or np.ptp(sc[J]) > ctol:
                raise AmbiguousAssociationError(
                    f"ambiguous association for branch {b}", omega[i]
                )
            Q = _polar(Uc[:, J].conj().T @ stateU[b])
            Unew = Uc[:, J] @ Q
            Vnew = Vc[:, J] @ Q
            t = np.trace(stateV[b].conj().T @ Vnew).real / len(J)
            if abs(t) < 0.5:
                raise AmbiguousAssociationError(f"sign undecidable for branch {b}", omega[i])
            e = 1 if t > 0 else -1
            Vnew = e * Vnew
            newU[b], newV[b] = Unew, Vnew
            if m == per:
                target = next((c for c, g in enumerate(start) if sorted(g) == J), None)
                if target is None:
                    raise AmbiguousAssociationError(
                        f"branch {b} does not close onto a starting branch", omega[0]
                    )
                gauge = svd.U[0][:, start[target]].conj().T @ Unew
                end[b] = (target, _polar(gauge), e)
            else:
                stateU[b], stateV[b] = Unew, Vnew
                sig[b, m] = e * sc[J].mean()
                Us[b][m] = Unew
                Vs[b][m] = Vnew
        if pending is not None:
            _bridge(pending, newU, newV, Us, Vs, sig, svd, one.values, r)
            mb, lost = pending
            flags.extend(
                f"branch {b} vanishes at grid point {mb}; vectors interpolated from neighbours"
                for b in lost
            )
            pending = None
        if dropped:
            pending = (m, dropped)

    if sorted(t for t, _, _ in end) != list(range(nb)):
        raise AmbiguousAssociationError("period end map is not a permutation", omega[0])

    branches = tuple(
        _Branch(sig[b], Us[b], Vs[b], end[b][0], end[b][1], end[b][2]) for b in range(nb)
    )
    template = BranchSet(
        grid=one.grid,
        sigma_tracks=sig,
        left_vectors=np.zeros((per, M, r), complex),
        right_vectors=np.zeros((per, N, r), complex),
        zero_left=svd.U[:, :, r:],
        zero_right=svd.V[:, :, r:],
        multiplicity=tuple(qs),
        columns=(),
        samples=one,
        scale=scale,
        zero_tol=zero_tol,
        flags=tuple(flags),
        _branches=branches,
    )
    out = _materialize(branches, template, 1)
    return out.over(grid.P) if grid.P > 1 else out


def _bridge(pending, newU, newV, Us, Vs, sig, svd, values, r):
    """Fill vectors of branches that vanish at an isolated grid point.

    Each lost branch gets the average of its neighbours' aligned vectors,
    orthogonalized against the other branches; its value is then read off
    as ``Re(u^H A v)``.  The null-space bases at that point are rebuilt as
    the complement of all branch vectors.
    """
    mb, lost = pending
    nb = len(Us)
    for X, new, Z in ((Us, newU, svd.U), (Vs, newV, svd.V)):
        kept = [X[b][mb] for b in range(nb) if b not in lost]
        K = np.concatenate(kept, axis=1) if kept else np.zeros((X[0].shape[1], 0))
        for b in lost:
            x = (X[b][mb - 1] + new[b]) / 2
            x = x - K @ (K.conj().T @ x)
            X[b][mb] = _polar(x)
            K = np.concatenate([K, X[b][mb]], axis=1)
        if Z.shape[2] > r:
            z0 = Z[mb - 1][:, r:]
            Z[mb][:, r:] = _polar(z0 - K @ (K.conj().T @ z0))
    for b in lost:
        u, v = Us[b][mb][:, 0], Vs[b][mb][:, 0]
        sig[b, mb] = (u.conj() @ values[mb] @ v).real


def _transport(frames, omega):
    """Procrustes transport of per-point orthonormal frames, closed into a periodic family."""
    per, n, d = frames.shape
    out = np.zeros_like(frames)
    if d == 0:
        return out
    out[0] = frames[0]
    for m in range(1, per):
        out[m] = frames[m] @ _polar(frames[m].conj().T @ out[m - 1])
    # one more step lands back on frames[0]; the aligning unitary is the holonomy
    H = _polar(frames[0].conj().T @ out[-1])
    T, Z = scipy.linalg.schur(H, output="complex")
    theta = np.angle(np.diag(T))
    phase = np.exp(-1j * np.outer(omega, theta) / (2 * np.pi))
    X = np.einsum("ij,mj,kj->mik", Z, phase, Z.conj())
    out = out @ X
    # deterministic gauge: align with the identity columns chosen by pivoted QR
    _, _, piv = scipy.linalg.qr(out[0].conj().T, pivoting=True)
    E = np.eye(n)[:, np.sort(piv[:d])]
    return out @ _polar(out[0].conj().T @ E)


def align_vectors(branches: BranchSet) -> BranchSet:
    """Smooth, 2*pi-periodic bases for the residual left/right null spaces.

    Branch vectors are already Procrustes-aligned during tracking; this step
    transports the null-space frames, closes them into periodic families and
    records flags for branches that are not nonnegative on the first 1% of
    the grid.
    """
    per = branches.per_period
    omega = branches.samples.grid.points
    zl = _transport(branches.zero_left[:per], omega)
    zr = _transport(branches.zero_right[:per], omega)
    flags = list(branches.flags)
    first = max(1, per // 100)
    for i, s in enumerate(branches.sigma_tracks):
        if s[:first].min() < -branches.zero_tol * branches.scale:
            flags.append(f"branch {i} negative on the initial subinterval")
    P = branches.grid.P
    return replace(
        branches,
        zero_left=np.tile(zl, (P, 1, 1)),
        zero_right=np.tile(zr, (P, 1, 1)),
        aligned=True,
        flags=tuple(flags),
    )


def tracking_grid(per_period, periods=1, shift=0):
    """Offset grid used for tracking (avoids landing on symmetric zeros).

    ``shift`` moves the start by a golden-ratio fraction of the period
    per unit, for retries when the default start is not generic.
    """
    step = 2 * np.pi / per_period
    offset = OFFSET_FRACTION * step + 2 * np.pi * ((shift * OFFSET_FRACTION) % 1.0)
    return FrequencyGrid(per_period * periods, periods, offset)


def refine(A: PuiseuxMatrix, build, grid_k=None, max_points=MAX_POINTS, start_shifts=8):
    """Run ``build(samples)`` on successively doubled tracking grids.

    ``build`` receives one period of samples of ``A``; ambiguity and
    coefficient-tail failures trigger a retry with twice the points, and a
    non-generic start point a retry from a shifted start.
    """
    per = grid_k or FrequencyGrid.for_matrix(A).per_period
    if per & (per - 1):
        raise ValueError("grid_k must be a power of two")
    last = None
    while per <= max_points:
        for shift in range(start_shifts + 1):
            samples = eval_grid(A, tracking_grid(per, 1, shift))
            try:
                return build(samples)
            except NonGenericStartError as exc:
                last = exc
            except (AmbiguousAssociationError, TailNotDecayedError) as exc:
                last = exc
                break
        per *= 2
    omega = getattr(last, "omega", None)
    raise DegeneracyError(f"unresolvable near-degeneracy after refinement: {last}", omega)


def track_matrix(A: PuiseuxMatrix, grid_k=None, zero_tol=ZERO_TOL) -> BranchSet:
    """Sample, track and align the branches of an index-1 matrix, refining as needed."""
    if A.index_L != 1:
        raise ValueError("input must be an ordinary Laurent-polynomial matrix (index_L = 1)")
    return refine(A, lambda s: align_vectors(track_branches(s, zero_tol)), grid_k)
