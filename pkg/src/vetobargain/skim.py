"""Skimming equilibrium for a continuum of Vetoer types.

The state is the highest remaining type v. On a type grid we solve

    R(v) = max_{y < v} u(min(Pbar(y), 1)) [F(v) - F(y)] + delta R(y)
    u_V(P(v), v) = delta u_V(min(Pbar(t(v)), 1), v)

forward in v, where t(v) is the largest maximiser and Pbar the running
maximum of P. When the lowest type is positive the recursion is seeded by
the closed form in which every remaining type is offered twice the floor.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (TOL_PAYOFF, TOL_ROOT, EquilibriumOutcome, ProposerUtility,
                   largest_indifferent_action, uv_eval)
from .static_mech import interval_delegation_payoff, full_delegation_threshold

log = logging.getLogger(__name__)

TIE_TOL = 1e-14


class SkimHypothesisWarning(UserWarning):
    pass


@dataclass
class SkimSolution:
    v: np.ndarray          # state grid, v[0] is the floor
    R: np.ndarray
    P: np.ndarray
    P_bar: np.ndarray
    t: np.ndarray          # index of the next state
    delta: float
    u: ProposerUtility
    F: object = field(repr=False)
    seed_len: int = 0      # states 0..seed_len-1 use the closed form
    hypothesis_ok: bool = True
    ties: list = field(default_factory=list, repr=False)

    @property
    def floor(self) -> float:
        return float(self.v[0])

    @property
    def payoff(self) -> float:
        """Proposer's payoff at the top state, per unit of prior mass."""
        return float(self.R[-1])

    def offer(self, k: int) -> float:
        return float(min(self.P_bar[self.t[k]], 1.0))

    def diagnostics(self) -> dict:
        return {"bellman_residual": bellman_residual(self),
                "indifference_residual": indifference_residual(self),
                "envelope_gap_points": int(np.sum(self.P_bar - self.P > 1e-12)),
                "seed_len": self.seed_len, "hypothesis_ok": self.hypothesis_ok,
                "ties": len(self.ties)}

    def to_rows(self):
        return [(float(a), float(b), float(c), float(d), float(self.v[e]))
                for a, b, c, d, e in zip(self.v, self.R, self.P, self.P_bar, self.t)]


def auto_grid_size(delta: float, span: float = 1.0, k: float = 40.0,
                   n_min: int = 201, n_max: int = 6001) -> int:
    """Grid points so that the step shrinks like sqrt(1 - delta)."""
    n = int(math.ceil(k * span / math.sqrt(1.0 - delta))) + 1
    return int(min(max(n, n_min), n_max))


def _seed_ok(k, v, Fv, fv, P, u, delta, floor):
    """Derivative of the Bellman objective in y is negative on [floor, v_k]."""
    Pb = P[: k + 1]
    clipped = Pb > 1.0
    rad = np.sqrt(np.maximum(v[: k + 1] ** 2 - 4 * delta * floor * (v[: k + 1] - floor), 1e-300))
    dP = 1.0 + (v[: k + 1] - 2 * delta * floor) / rad
    du = np.where(clipped, 0.0, u.deriv(np.minimum(Pb, 1.0)))
    d = (du * dP * (Fv[k] - Fv[: k + 1]) - u(np.minimum(Pb, 1.0)) * fv[: k + 1]
         + delta * u(min(2 * floor, 1.0)) * fv[: k + 1])
    return bool(np.all(d < 0))


def solve(F, u: ProposerUtility, delta: float, grid=None, n: int = 2001,
          floor: float | None = None) -> SkimSolution:
    """Solve the (R, P) system on a grid of states from the floor up to F.hi.

    grid: optional array of type points (those below the floor are ignored).
    floor: lowest state; defaults to max(F.lo, 0).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    floor = max(F.lo, 0.0) if floor is None else float(floor)
    if grid is None:
        v = np.linspace(floor, F.hi, n)
    else:
        g = np.asarray(getattr(grid, "type_grid", grid), dtype=float)
        v = np.unique(np.concatenate([[floor, F.hi], g[(g > floor) & (g < F.hi)]]))
    if len(v) < 2:
        raise ValueError("degenerate grid")
    hyp = F.lo <= 0.0 or F.hi <= 0.5
    if not hyp:
        warnings.warn("support has positive lowest type and highest type above 1/2; "
                      "the (R, P) system is solved but equilibrium support is not guaranteed",
                      SkimHypothesisWarning, stacklevel=2)
    m = len(v)
    Fv = np.asarray(F.cdf(v), dtype=float)
    fv = np.asarray(F.pdf(v), dtype=float)
    R, P, Pb = np.zeros(m), np.zeros(m), np.zeros(m)
    t = np.zeros(m, dtype=int)
    P[0] = Pb[0] = largest_indifferent_action(floor, 0.0) if floor > 0 else 0.0
    k0 = 1
    if floor > 0:
        closed = v + np.sqrt(np.maximum(v * v - 4 * delta * floor * (v - floor), 0.0))
        while k0 < m and _seed_ok(k0, v, Fv, fv, closed, u, delta, floor):
            R[k0] = u(min(2 * floor, 1.0)) * (Fv[k0] - Fv[0])
            P[k0] = closed[k0]
            Pb[k0] = max(Pb[k0 - 1], P[k0])
            t[k0] = 0
            k0 += 1
    ties = []
    for k in range(k0, m):
        vals = u(np.minimum(Pb[:k], 1.0)) * (Fv[k] - Fv[:k]) + delta * R[:k]
        best = vals.max()
        near = np.flatnonzero(vals >= best - TIE_TOL * max(1.0, abs(best)))
        j = int(near[-1])
        if len(near) > 1 and best > 0:
            ties.append((k, tuple(int(x) for x in near)))
        R[k], t[k] = best, j
        w = delta * uv_eval(v[k], min(Pb[j], 1.0))
        P[k] = largest_indifferent_action(v[k], w)
        Pb[k] = max(Pb[k - 1], P[k])
        if R[k] < -TOL_PAYOFF:
            raise RuntimeError(f"negative value {R[k]} at state {v[k]}")
    log.debug("skim solve: %d states, seed %d, payoff %.6f", m, k0, R[-1])
    return SkimSolution(v, R, P, Pb, t, delta, u, F, k0, hyp, ties)


def bellman_residual(sol: SkimSolution) -> float:
    """Largest gap between R and a fresh grid maximisation, over all states."""
    v, Fv = sol.v, np.asarray(sol.F.cdf(sol.v))
    worst = 0.0
    for k in range(1, len(v)):
        vals = sol.u(np.minimum(sol.P_bar[:k], 1.0)) * (Fv[k] - Fv[:k]) + sol.delta * sol.R[:k]
        worst = max(worst, abs(vals.max() - sol.R[k]))
    return float(worst)


def indifference_residual(sol: SkimSolution) -> float:
    nxt = np.minimum(sol.P_bar[sol.t], 1.0)
    res = uv_eval(sol.v, sol.P) - sol.delta * uv_eval(sol.v, nxt)
    return float(np.max(np.abs(res[1:]))) if len(res) > 1 else 0.0


def tie_violations(sol: SkimSolution) -> list:
    """Ties among maximisers where the envelope fails to increase strictly."""
    bad = []
    for k, idx in sol.ties:
        pb = sol.P_bar[list(idx)]
        if np.any(np.diff(pb) <= 0):
            bad.append((k, idx))
    return bad


def path(sol: SkimSolution):
    """On-path sequence of (state, offer, (lowest acceptor, highest acceptor))."""
    out = []
    k = len(sol.v) - 1
    seen = 0
    while k > 0:
        j = int(sol.t[k])
        if j >= k:
            raise RuntimeError("path made no progress")
        out.append((float(sol.v[k]), sol.offer(k), (float(sol.v[j]), float(sol.v[k]))))
        k = j
        seen += 1
        if seen > len(sol.v):
            raise RuntimeError("path cycles")
    return out


def path_payoff(sol: SkimSolution) -> float:
    """Direct discounted sum over the path, independent of R."""
    F = sol.F
    tot = 0.0
    for per, (hi, a, (lo, _)) in enumerate(path(sol)):
        tot += sol.delta ** per * sol.u(a) * (F.cdf(hi) - F.cdf(lo))
    return float(tot)


def payoff_and_outcome(sol: SkimSolution) -> EquilibriumOutcome:
    """Per-type agreement read off the path.

    Type atoms sit at grid points; atom v_j carries the mass of [v_j, v_{j+1}).
    Types below the floor never agree.
    """
    v = sol.v
    Fv = np.asarray(sol.F.cdf(v))
    masses = np.append(np.diff(Fv), 0.0)
    agr = [()] * len(v)
    for per, (hi, a, (lo, _)) in enumerate(path(sol)):
        sel = np.flatnonzero((v >= lo - 1e-15) & (v < hi - 1e-15))
        for j in sel:
            agr[j] = ((a, per, 1.0),)
    agr[-1] = ((path(sol)[0][1], 0, 1.0),) if len(v) > 1 else ()
    types, ms = list(v), list(masses)
    below = float(sol.F.cdf(v[0]))
    if below > 0:
        types.insert(0, float(sol.F.lo))
        ms.insert(0, below)
        agr.insert(0, ())
    return EquilibriumOutcome(np.array(types), np.array(ms), tuple(agr), sol.payoff)


def limit_sweep(F, u: ProposerUtility, deltas, grid="auto", k: float = 40.0):
    """Rows (delta, payoff, |payoff - full delegation payoff|)."""
    target = interval_delegation_payoff(F, u, full_delegation_threshold(F))
    rows = []
    for d in deltas:
        n = auto_grid_size(d, k=k) if grid == "auto" else int(grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SkimHypothesisWarning)
            sol = solve(F, u, d, n=n)
        rows.append((float(d), sol.payoff, abs(sol.payoff - target)))
    return rows, target
