"""Orbits of singular-value branches under the shift Omega -> Omega + 2*pi."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, MultiplexError
from .tracking import BranchSet

MATCH_TOL = 1e-8
KAPPA_TOL = 1e-8


@dataclass(frozen=True)
class Orbit:
    """One cycle of the branch permutation.

    ``member_branches`` lists tracked branch indices in cycle order starting
    at the smallest index, so member ``s + 1`` continues member ``s`` by
    one period.
    """

    member_branches: tuple
    multiplex_k: int
    sign_kappa: int
    multiplicity_q: int

    @property
    def period(self):
        """Period of each member, in units of 2*pi."""
        return self.multiplex_k * self.sign_kappa


@dataclass(frozen=True)
class OrbitStructure:
    """The permutation ``tau`` with its orbits and the global Puiseux index."""

    orbits: tuple
    tau: dict
    puiseux_L: int
    zero_branch_count: int
    shape: tuple = (0, 0)

    @property
    def rank(self):
        return sum(o.multiplex_k * o.multiplicity_q for o in self.orbits)

    @property
    def null_left(self):
        return self.shape[0] - self.rank

    @property
    def null_right(self):
        return self.shape[1] - self.rank

    @property
    def complex_index(self):
        """Index of the complex diagonal decomposition: lcm of the orbit sizes."""
        L = 1
        for o in self.orbits:
            L = math.lcm(L, o.multiplex_k)
        return L

    def canonical_labels(self):
        """Tracked branch index -> 1-based label with orbits numbered consecutively."""
        labels = {}
        for o in self.orbits:
            for b in o.member_branches:
                labels[b] = len(labels) + 1
        return labels

    def tau_string(self):
        if not self.orbits:
            return "()"
        labels = self.canonical_labels()
        return "".join(
            "(" + " ".join(str(labels[b]) for b in o.member_branches) + ")" for o in self.orbits
        )

    def layout(self):
        """Column layout of the factorizations: ``(orbit, copy, member)`` per column."""
        cols = []
        for v, o in enumerate(self.orbits):
            for t in range(o.multiplicity_q):
                for s in range(o.multiplex_k):
                    cols.append((v, t, s))
        return cols

    def signature(self):
        """Sorted multiset of ``(k, kappa, q)``."""
        return sorted((o.multiplex_k, o.sign_kappa, o.multiplicity_q) for o in self.orbits)

    def to_dict(self):
        labels = self.canonical_labels()
        return {
            "orbits": [
                {
                    "members": [labels[b] for b in o.member_branches],
                    "branches": list(o.member_branches),
                    "k": o.multiplex_k,
                    "kappa": o.sign_kappa,
                    "q": o.multiplicity_q,
                    "period_over_2pi": o.period,
                }
                for o in self.orbits
            ],
            "L": self.puiseux_L,
            "tau": self.tau_string(),
            "zero_branch_count": self.zero_branch_count,
            "shape": list(self.shape),
            "null_left": self.null_left,
            "null_right": self.null_right,
        }

    @classmethod
    def from_dict(cls, data):
        orbits = []
        for o in data.get("orbits", []):
            members = tuple(int(b) for b in o.get("branches", [m - 1 for m in o["members"]]))
            if len(members) != int(o["k"]):
                raise ValueError(f"orbit lists {len(members)} members but k = {o['k']}")
            orbits.append(Orbit(members, int(o["k"]), int(o["kappa"]), int(o["q"])))
        tau = {}
        for o in orbits:
            m = o.member_branches
            for s, b in enumerate(m):
                tau[b] = m[(s + 1) % len(m)]
        L = 1
        for o in orbits:
            L = math.lcm(L, o.period)
        shape = tuple(int(v) for v in data.get("shape", (0, 0)))
        rank = sum(o.multiplex_k * o.multiplicity_q for o in orbits)
        zeros = data.get("zero_branch_count", max(0, min(shape) - rank) if shape else 0)
        return cls(tuple(orbits), tau, int(data.get("L", L)), int(zeros), shape)


def _generic_points(branches: BranchSet, count=64, seed=0):
    """Grid indices in the first period where distinct |sigma| are well separated."""
    per = branches.per_period
    absval = np.abs(branches.sigma_tracks[:, :per])
    sep_tol = 10 * MATCH_TOL * max(branches.scale, np.finfo(float).tiny)
    rng = np.random.default_rng(seed)
    candidates = rng.choice(per, size=min(count, per), replace=False)

    def ok(m):
        v = np.sort(absval[:, m])
        return v.size < 2 or np.diff(v).min() > sep_tol

    good = [int(m) for m in candidates if ok(m)]
    if len(good) < 16:
        good = [m for m in range(per) if ok(m)]
    return good


def detect_permutation(branches: BranchSet, checks=16) -> dict:
    """``tau[i] = j`` where ``|sigma_j(W0)| = |sigma_i(W0 + 2*pi)|`` at generic ``W0``."""
    nb = branches.num_branches
    if nb == 0:
        return {}
    if branches.grid.P < 2:
        branches = branches.over(2)
    per = branches.per_period
    good = _generic_points(branches)
    if len(good) < min(checks, per):
        raise DegeneracyError("unresolvable near-degeneracy: too few generic points")
    absval = np.abs(branches.sigma_tracks)
    tol = MATCH_TOL * branches.scale
    tau = None
    for m in good[:checks]:
        here = absval[:, m]
        later = absval[:, m + per]
        perm = {}
        for i in range(nb):
            d = np.abs(here - later[i])
            j = int(np.argmin(d))
            if d[j] > tol:
                raise DegeneracyError(
                    f"branch {i} has no match one period later", branches.grid.points[m]
                )
            perm[i] = j
        if sorted(perm.values()) != list(range(nb)):
            raise DegeneracyError("unresolvable near-degeneracy", branches.grid.points[m])
        if tau is None:
            tau = perm
        elif perm != tau:
            raise DegeneracyError("permutation differs between generic points")
    if tuple(tau[i] for i in range(nb)) != branches.end_map:
        raise DegeneracyError("value-based permutation disagrees with the tracked continuation")
    return tau


def _cycles(tau):
    seen = set()
    cycles = []
    for start in sorted(tau):
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        nxt = tau[start]
        while nxt != start:
            cyc.append(nxt)
            seen.add(nxt)
            nxt = tau[nxt]
        cycles.append(tuple(cyc))
    return cycles


def detect_orbits(branches: BranchSet, tau: dict) -> OrbitStructure:
    """Orbits of ``tau`` with their sign index from whole-track comparison."""
    cycles = _cycles(tau)
    kmax = max((len(c) for c in cycles), default=1)
    if branches.grid.P < 2 * kmax:
        branches = branches.over(2 * kmax)
    per = branches.per_period
    K = branches.grid.K
    scale = max(branches.scale, np.finfo(float).tiny)
    orbits = []
    L = 1
    for cyc in cycles:
        k = len(cyc)
        s = branches.sigma_tracks[cyc[0]]
        shift = k * per
        plus = np.abs(s[shift:] - s[: K - shift]).max() / scale
        minus = np.abs(s[shift:] + s[: K - shift]).max() / scale
        if plus < KAPPA_TOL:
            kappa = 1
        elif minus < KAPPA_TOL:
            kappa = 2
        else:
            raise MultiplexError(
                f"branch not multiplex-consistent: orbit {cyc} deviates by {min(plus, minus):.2e}"
            )
        qs = {branches.multiplicity[b] for b in cyc}
        if len(qs) != 1:
            raise MultiplexError(f"orbit {cyc} mixes multiplicities {sorted(qs)}")
        orbits.append(Orbit(cyc, k, kappa, qs.pop()))
        L = math.lcm(L, k * kappa)
    return OrbitStructure(tuple(orbits), dict(tau), L, branches.zero_branch_count, tuple(branches.shape))


def analyze_branches(branches: BranchSet) -> OrbitStructure:
    return detect_orbits(branches, detect_permutation(branches))


def _period_text(p):
    return "2pi" if p == 1 else f"{2 * p}pi"


def orbit_report(structure: OrbitStructure) -> str:
    """Deterministic plain-text summary of an orbit structure."""
    labels = structure.canonical_labels()
    lines = [f"tau = {structure.tau_string()}"]
    for v, o in enumerate(structure.orbits, 1):
        members = ",".join(str(labels[b]) for b in o.member_branches)
        lines.append(
            f"orbit {v}: members {{{members}}} k={o.multiplex_k} kappa={o.sign_kappa} "
            f"q={o.multiplicity_q} period={_period_text(o.period)}"
        )
    lines.append(f"zero singular values = {structure.zero_branch_count}")
    lines.append(
        f"null space dimensions: left {structure.null_left}, right {structure.null_right}"
    )
    lines.append(f"L = {structure.puiseux_L}")
    return "\n".join(lines)


def orbit_json(structure: OrbitStructure) -> str:
    return json.dumps(structure.to_dict(), sort_keys=True)
