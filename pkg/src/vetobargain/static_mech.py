"""Static delegation benchmark, the dynamic-to-static payoff transform and
IC/IR checks for static mechanisms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import (TOL_PAYOFF, TOL_ROOT, TOL_STRUCT, EquilibriumOutcome, ProposerUtility,
                   truncate, uv_eval)

N_SCAN = 400
N_QUAD = 2001


def interval_delegation_payoff(F, u: ProposerUtility, c: float, n_quad: int = N_QUAD) -> float:
    """Proposer payoff when the Vetoer may pick any action in [c, 1] or veto."""
    if not 0.0 <= c <= 1.0 + TOL_STRUCT:
        raise ValueError("threshold must lie in [0, 1]")
    c = min(c, 1.0)
    lo, hi = F.lo, F.hi
    total = 0.0
    # pooled at c: types in [c/2, c]
    a, b = max(c / 2.0, lo), min(c, hi)
    if b > a:
        total += u(c) * (F.cdf(b) - F.cdf(a))
    # ideal points in [c, 1]
    a, b = max(c, lo), min(1.0, hi)
    if b > a:
        nodes = np.linspace(a, b, n_quad)
        Fv = F.cdf(nodes)
        g = u(nodes)
        total += float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(Fv)))
    # pooled at 1
    if hi > 1.0:
        total += u(1.0) * (1.0 - F.cdf(max(1.0, lo)))
    return float(total)


def menu_payoff(F, u: ProposerUtility, menu) -> float:
    """Exact payoff of a finite deterministic menu under quadratic Vetoer loss.

    Each type picks the menu action (or 0) nearest its ideal point, so the
    assignment is a step function with thresholds at midpoints.
    """
    acts = np.unique(np.concatenate([[0.0], np.asarray(menu, dtype=float)]))
    mids = np.concatenate([[-np.inf], 0.5 * (acts[1:] + acts[:-1]), [np.inf]])
    Fm = F.cdf(np.clip(mids, F.lo, F.hi))
    return float(np.sum(u(acts) * np.diff(Fm)))


def interval_assignment(v, c: float):
    v = np.asarray(v, dtype=float)
    return np.where(v < c / 2.0, 0.0, np.where(v <= c, c, np.minimum(v, 1.0)))


@dataclass
class DelegationReport:
    c_star: float
    U: float
    U_full: float
    payoff_curve: np.ndarray = field(repr=False)  # columns: c, payoff

    def to_dict(self):
        return {"c_star": self.c_star, "U": self.U, "U_full": self.U_full,
                "payoff_curve": self.payoff_curve.tolist()}


def full_delegation_threshold(F) -> float:
    return min(2.0 * max(F.lo, 0.0), 1.0)


def optimal_interval(F, u: ProposerUtility, n_scan: int = N_SCAN) -> DelegationReport:
    """Best interval delegation set [c, 1]: coarse scan, then local refinement."""
    c_lo = full_delegation_threshold(F)
    if F.hi <= 0:
        raise ValueError("no types with positive ideal points")
    cs = np.linspace(c_lo, 1.0, n_scan) if c_lo < 1.0 else np.array([1.0])
    vals = np.array([interval_delegation_payoff(F, u, c) for c in cs])
    best = vals.max()
    i = int(np.flatnonzero(vals >= best - TOL_STRUCT)[0])  # smallest near-maximiser
    c_star, U = float(cs[i]), float(vals[i])
    if len(cs) > 1:
        a, b = cs[max(i - 1, 0)], cs[min(i + 1, len(cs) - 1)]
        res = optimize.minimize_scalar(lambda c: -interval_delegation_payoff(F, u, c),
                                       bounds=(a, b), method="bounded",
                                       options={"xatol": TOL_ROOT})
        if -res.fun > U + TOL_STRUCT:
            c_star, U = float(res.x), float(-res.fun)
    U_full = float(vals[0]) if cs[0] == c_lo else interval_delegation_payoff(F, u, c_lo)
    curve = np.column_stack([cs, vals])
    return DelegationReport(c_star, max(U, U_full), U_full, curve)


def conditional_optimality_check(F, u: ProposerUtility, c_star: float, c: float, c_hi: float,
                                 n_grid: int = 200, n_menus: int = 500, seed: int = 0):
    """Probe whether [c_star, 1] stays optimal for F conditioned on [c, c_hi].

    Alternatives: intervals [c', 1] on a grid and random finite menus of up
    to five deterministic actions. Returns a dict with holds and worst_gap.
    """
    if not (c <= c_star / 2.0 + TOL_STRUCT and c_hi >= c_star - TOL_STRUCT):
        raise ValueError("window must satisfy c <= c_star/2 <= c_star <= c_hi")
    G = truncate(F, c, c_hi)
    base = interval_delegation_payoff(G, u, c_star)
    worst, witness = -np.inf, None
    for cp in np.linspace(0.0, 1.0, n_grid):
        gap = interval_delegation_payoff(G, u, cp) - base
        if gap > worst:
            worst, witness = gap, ("interval", float(cp))
    rng = np.random.default_rng(seed)
    for _ in range(n_menus):
        k = int(rng.integers(1, 6))
        menu = np.sort(rng.uniform(0.0, 1.0, k))
        gap = menu_payoff(G, u, menu) - base
        if gap > worst:
            worst, witness = gap, ("menu", menu.tolist())
    return {"holds": bool(worst <= TOL_PAYOFF), "worst_gap": float(worst),
            "witness": witness, "base": base}


# ------------------------------------------------------ static mechanisms

@dataclass
class StaticMechanism:
    """Lottery per type: lotteries[i] is a tuple of (action, weight) pairs
    whose weights sum to one (the status quo 0 absorbs the remainder)."""
    types: np.ndarray
    masses: np.ndarray
    lotteries: tuple
    vetoer_form: str = "quadratic"

    def proposer_payoff(self, u: ProposerUtility) -> float:
        return float(sum(m * sum(w * u(a) for a, w in lot)
                         for m, lot in zip(self.masses, self.lotteries)))

    def utility_matrix(self) -> np.ndarray:
        """U[i, j]: utility of type i from type j's lottery."""
        v = np.asarray(self.types, dtype=float)
        cols = []
        for lot in self.lotteries:
            col = np.zeros_like(v)
            for a, w in lot:
                col += w * uv_eval(v, a, self.vetoer_form)
            cols.append(col)
        return np.column_stack(cols)

    def vetoer_utilities(self) -> np.ndarray:
        return np.diag(self.utility_matrix()).copy()


def mechanism_from_outcome(outcome: EquilibriumOutcome, delta: float) -> StaticMechanism:
    """Agreement on a in period t becomes a with weight delta**t, else 0."""
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    lots = []
    for agr in outcome.agreements:
        lot = [(float(a), p * delta ** t) for a, t, p in agr if p > 0]
        rest = 1.0 - sum(w for _, w in lot)
        lot.append((0.0, max(rest, 0.0)))
        lots.append(tuple(lot))
    return StaticMechanism(np.asarray(outcome.types, dtype=float),
                           np.asarray(outcome.masses, dtype=float), tuple(lots),
                           outcome.vetoer_form)


def interval_mechanism(types, masses, c: float) -> StaticMechanism:
    acts = interval_assignment(types, c)
    return StaticMechanism(np.asarray(types, dtype=float), np.asarray(masses, dtype=float),
                           tuple(((float(a), 1.0),) for a in acts))


def ic_ir_check(m: StaticMechanism, slack: float = TOL_PAYOFF):
    """Pairwise IC and per-type IR on the mechanism's type points."""
    U = m.utility_matrix()
    own = np.diag(U)
    ir_gap = -own
    ic_gap = U.max(axis=1) - own
    i_ir = int(np.argmax(ir_gap))
    i_ic = int(np.argmax(ic_gap))
    j_ic = int(np.argmax(U[i_ic]))
    worst = float(max(ir_gap[i_ir], ic_gap[i_ic], 0.0))
    return {"ic_ok": bool(ic_gap[i_ic] <= slack), "ir_ok": bool(ir_gap[i_ir] <= slack),
            "worst_violation": worst,
            "worst_ic": (float(m.types[i_ic]), float(m.types[j_ic]), float(ic_gap[i_ic])),
            "worst_ir": (float(m.types[i_ir]), float(ir_gap[i_ir]))}
