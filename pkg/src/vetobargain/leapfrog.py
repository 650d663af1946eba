"""Leapfrogging with a continuum of types: open with 0, then skim the
survivors down to the optimal delegation threshold.

Also the convergence sweep towards the commitment payoff, the margin by
which pure skimming falls short of it, and a guard against first-period
deviations.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import skim
from .core import (TOL_PAYOFF, TOL_STRUCT, EquilibriumOutcome, ProposerUtility,
                   exclude_open, truncate)
from .static_mech import DelegationReport, optimal_interval, full_delegation_threshold

GATE_TOL = 1e-6          # c_star must beat 2 v_lo^+ by more than this
FLATNESS_MIN = 1e-4      # interval payoff away from c_star must drop by this much
FLATNESS_RADIUS = 0.1    # ... outside this fraction of the feasible threshold range


class HypothesisError(ValueError):
    pass


@dataclass
class LeapfrogEquilibrium:
    c_star: float
    first_offer: float
    acceptance_set: tuple
    posterior: object = field(repr=False)
    cont: skim.SkimSolution = field(repr=False)
    payoff: float
    gap_to_U: float
    U: float
    U_full: float
    delta: float
    note: str = ""

    @property
    def degenerate(self) -> bool:
        """True when full delegation is optimal and this is the plain skim solution."""
        return bool(self.note)

    def offers(self):
        """On-path offer sequence (first offer included)."""
        seq = [] if self.degenerate else [self.first_offer]
        return seq + [a for _, a, _ in skim.path(self.cont)]

    def to_dict(self):
        return {"c_star": self.c_star, "first_offer": self.first_offer,
                "acceptance_set": list(self.acceptance_set), "payoff": self.payoff,
                "U": self.U, "U_full": self.U_full, "gap_to_U": self.gap_to_U,
                "delta": self.delta, "note": self.note, "offers": self.offers(),
                "posterior_mass": float(getattr(self.posterior, "mass", 1.0))}


def _check_support(F):
    if not (F.lo <= 0.0 or F.hi <= 0.5):
        raise HypothesisError("need the lowest type <= 0 or the highest type <= 1/2")


def construct(F, u: ProposerUtility, delta: float, grid=None,
              report: DelegationReport | None = None) -> LeapfrogEquilibrium:
    """Offer 0 first; after rejection skim the posterior down to c_star.

    grid: number of continuation states, or None for the delta-scaled default.
    """
    _check_support(F)
    rep = report or optimal_interval(F, u)
    c_lo = full_delegation_threshold(F)
    if rep.c_star <= c_lo + GATE_TOL:
        n = _grid_size(grid, delta, F.hi - max(F.lo, 0.0))
        sol = skim.solve(F, u, delta, n=n)
        return LeapfrogEquilibrium(rep.c_star, sol.offer(len(sol.v) - 1), (), F, sol,
                                   sol.payoff, rep.U - sol.payoff, rep.U, rep.U_full, delta,
                                   note="full delegation is optimal; returning the skim solution")
    half = rep.c_star / 2.0
    if F.lo < 0.0:
        G = exclude_open(F, 0.0, half)
    else:
        G = truncate(F, half, F.hi)
    n = _grid_size(grid, delta, F.hi - half)
    with warnings.catch_warnings():
        # the prior satisfies the support condition; the posterior need not
        warnings.simplefilter("ignore", skim.SkimHypothesisWarning)
        cont = skim.solve(G, u, delta, n=n, floor=half)
    payoff = delta * G.mass * cont.payoff
    return LeapfrogEquilibrium(rep.c_star, 0.0, (0.0, half), G, cont, float(payoff),
                               float(rep.U - payoff), rep.U, rep.U_full, delta)


def _grid_size(grid, delta, span):
    if grid is None or grid == "auto":
        return skim.auto_grid_size(delta, span=max(span, 0.0))
    return int(grid)


def terminal_offer(eq: LeapfrogEquilibrium) -> float:
    p = skim.path(eq.cont)
    return p[-1][1] if p else float("nan")


def accepts_first_offer(eq: LeapfrogEquilibrium, v) -> np.ndarray:
    """Types that take the opening offer: the open interval (0, c_star/2)."""
    v = np.asarray(v, dtype=float)
    lo, hi = eq.acceptance_set if eq.acceptance_set else (0.0, 0.0)
    return (v > lo) & (v < hi)


def window_steps(eq: LeapfrogEquilibrium):
    """Per path step: the belief window (lower, upper), whether
    lower <= c*/2 <= c* <= upper holds, and whether the step is the final
    offer of c_star (where every remaining type already lies below c_star)."""
    half, c = eq.c_star / 2.0, eq.c_star
    steps = skim.path(eq.cont)
    out = []
    for k, (hi, a, _) in enumerate(steps):
        lo = eq.cont.floor
        out.append({"lower": lo, "upper": hi, "offer": a,
                    "in_window": bool(lo <= half + TOL_STRUCT and c <= hi + TOL_STRUCT),
                    "terminal": k == len(steps) - 1})
    return out


def outcome(eq: LeapfrogEquilibrium, n_accept: int = 50) -> EquilibriumOutcome:
    """Per-type agreements of the leapfrog play, prior-weighted."""
    base = skim.payoff_and_outcome(eq.cont)
    if eq.degenerate:
        return base
    mass = float(eq.posterior.mass)
    types = list(base.types)
    ms = list(np.asarray(base.masses) * mass)
    agr = [tuple((a, t + 1, p) for a, t, p in g) for g in base.agreements]
    F = eq.posterior.base
    half = eq.c_star / 2.0
    lo = max(F.lo, 0.0)
    if half > lo:
        pts = np.linspace(lo, half, n_accept + 1)
        Fp = np.asarray(F.cdf(pts))
        for x, m in zip(pts[:-1], np.diff(Fp)):
            types.append(float(x))
            ms.append(float(m))
            agr.append(((0.0, 0, 1.0),))
    order = np.argsort(types, kind="stable")
    return EquilibriumOutcome(np.array(types)[order], np.array(ms)[order],
                              tuple(agr[i] for i in order), eq.payoff)


def commitment_gap_sweep(F, u: ProposerUtility, deltas, grid=None):
    """Rows (delta, leapfrog payoff, U(F), gap)."""
    rep = optimal_interval(F, u)
    rows = []
    for d in deltas:
        eq = construct(F, u, d, grid, report=rep)
        rows.append((float(d), eq.payoff, rep.U, eq.gap_to_U))
    return rows


def flatness_probe(rep: DelegationReport) -> float:
    """U minus the best interval payoff at thresholds well away from c_star."""
    cs, vals = rep.payoff_curve[:, 0], rep.payoff_curve[:, 1]
    radius = FLATNESS_RADIUS * max(cs[-1] - cs[0], TOL_STRUCT)
    far = np.abs(cs - rep.c_star) >= radius
    if not far.any():
        return 0.0
    return float(rep.U - vals[far].max())


def necessity_gap(F, u: ProposerUtility, deltas, grid=None):
    """Rows (delta, skim payoff, U(F), margin) plus the asserted floor.

    Raises HypothesisError unless the interval optimum is interior and
    isolated.
    """
    _check_support(F)
    rep = optimal_interval(F, u)
    probe = flatness_probe(rep)
    if rep.c_star <= full_delegation_threshold(F) + GATE_TOL or probe <= FLATNESS_MIN:
        raise HypothesisError("necessity hypotheses not met: full delegation optimal or "
                              f"interval optimum not isolated (probe {probe:.3g})")
    rows = []
    for d in deltas:
        n = _grid_size(grid, d, F.hi - max(F.lo, 0.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", skim.SkimHypothesisWarning)
            sol = skim.solve(F, u, d, n=n)
        rows.append((float(d), sol.payoff, rep.U, rep.U - sol.payoff))
    floor = 0.5 * (rep.U - rep.U_full)
    return {"rows": rows, "floor": floor, "U_full": rep.U_full,
            "holds": bool(min(r[3] for r in rows) >= floor)}


def deviation_payoff(fallback: skim.SkimSolution, a: float) -> float:
    """Payoff of opening with a when rejection triggers the fallback skim play."""
    sol = fallback
    Pb = np.minimum(sol.P_bar, 1.0)
    Fv = np.asarray(sol.F.cdf(sol.v))
    ok = np.flatnonzero(Pb >= a - TOL_STRUCT)
    d, u = sol.delta, sol.u
    if len(ok) == 0:
        return float(d * sol.R[-1])
    y = int(ok[0])
    return float(u(a) * (Fv[-1] - Fv[y]) + d * sol.R[y])


def deviation_guard(eq: LeapfrogEquilibrium, fallback: skim.SkimSolution, probes=None):
    """Best first-offer deviation against the fallback continuation."""
    probes = np.linspace(0.0, 1.0, 201) if probes is None else np.asarray(probes, dtype=float)
    vals = np.array([eq.payoff if a <= 0.0 else deviation_payoff(fallback, a) for a in probes])
    i = int(np.argmax(vals))
    rep = {"max_deviation": float(vals[i]), "argmax": float(probes[i]),
           "on_path": eq.payoff, "probes": probes.tolist(), "values": vals.tolist()}
    rep["holds"] = bool(eq.delta < 0.99 or vals[i] <= eq.payoff + 1e-3)
    return rep
