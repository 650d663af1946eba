"""Equilibrium certification.

`eps_equilibrium` checks one-shot deviations of an encoded strategy profile
on the on-path states and one layer of single-deviation states.
`finite_horizon_oracle` solves a short two-type game by backward induction.

A profile is any object exposing
    types, form, u, delta
    initial_state()
    belief(state)       -> weights over types (the belief descriptor)
    plan(state)         -> tuple of (offer, probability)
    respond(state, a)   -> (accept probabilities per type, next state)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import skim as skim_mod
from .core import TOL_STRUCT, ProposerUtility, uv_eval

BAYES_TOL = 1e-6
MASS_TOL = 1e-14


@dataclass
class DeviationReport:
    max_proposer_gain: float
    max_vetoer_gain: float
    bayes_gap: float
    witnesses: list
    horizon: int
    tail_bound: float
    root_value: float
    eps: float
    n_states: int
    n_checked: int
    diagnostics: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.max_proposer_gain < self.eps and self.max_vetoer_gain < self.eps
                and self.bayes_gap <= BAYES_TOL and not self.diagnostics)

    def to_dict(self):
        return {"max_proposer_gain": self.max_proposer_gain,
                "max_vetoer_gain": self.max_vetoer_gain, "bayes_gap": self.bayes_gap,
                "witnesses": [[repr(s), float(a), float(g)] for s, a, g in self.witnesses],
                "horizon": self.horizon, "tail_bound": self.tail_bound,
                "root_value": self.root_value, "eps": self.eps, "passed": self.passed,
                "n_states": self.n_states, "n_checked": self.n_checked,
                "diagnostics": list(self.diagnostics)}


def horizon_for(delta: float, span: float, eps: float) -> int:
    if delta <= 0:
        return 1
    return max(1, int(math.ceil(math.log(eps / (10 * span)) / math.log(delta))))


def _bkey(b):
    return tuple(np.round(b, 12))


def eps_equilibrium(profile, offer_grid=None, H: int | None = None, eps: float = 1e-3,
                    max_states: int = 50000) -> DeviationReport:
    u, delta, types, form = profile.u, profile.delta, np.asarray(profile.types), profile.form
    grid = np.linspace(0.0, 1.0, 200) if offer_grid is None else np.asarray(offer_grid, float)
    span = float(max(np.ptp(u(grid)), np.ptp(uv_eval(types[:, None], grid[None, :], form)), 1.0))
    if H is None:
        H = horizon_for(delta, span, eps)
    tail = float(delta ** H * span)
    if tail >= eps / 10:
        raise ValueError(f"horizon {H} too short: tail bound {tail:.3g} >= eps/10")
    diags = []
    cache = {}

    def respond(s, a):
        key = (s, float(a))
        if key not in cache:
            acc, nxt = profile.respond(s, float(a))
            acc = np.asarray(acc, dtype=float)
            if acc.shape != types.shape or np.any(acc < -TOL_STRUCT) or np.any(acc > 1 + TOL_STRUCT):
                diags.append(f"bad acceptance vector at {s!r}, offer {a}")
            cache[key] = (acc, nxt)
        return cache[key]

    def plan(s):
        pl = profile.plan(s)
        tot = sum(p for _, p in pl)
        if abs(tot - 1.0) > 1e-9:
            diags.append(f"offer distribution at {s!r} sums to {tot}")
        return pl

    # on-path nodes (state, belief) under Bayes updating
    root = profile.initial_state()
    root_b = np.asarray(profile.belief(root), dtype=float)
    nodes = {(root, _bkey(root_b)): (root, root_b)}
    frontier = [(root, root_b)]
    bayes_gap = 0.0

    def posterior(s, b, a):
        nonlocal bayes_gap
        acc, nxt = respond(s, a)
        rej = b * (1.0 - acc)
        tot = rej.sum()
        desc = np.asarray(profile.belief(nxt), dtype=float)
        if tot <= MASS_TOL:
            return nxt, desc
        post = rej / tot
        bayes_gap = max(bayes_gap, float(np.max(np.abs(post - desc))))
        return nxt, post

    while frontier:
        s, b = frontier.pop()
        for a, p in plan(s):
            if p <= 0:
                continue
            acc, _ = respond(s, a)
            if (b * (1 - acc)).sum() <= MASS_TOL:
                continue
            nxt, post = posterior(s, b, a)
            k = (nxt, _bkey(post))
            if k not in nodes:
                nodes[k] = (nxt, post)
                frontier.append((nxt, post))
                if len(nodes) > max_states:
                    raise RuntimeError("on-path state space too large")
    on_path = list(nodes.values())
    checked = dict(nodes)
    for s, b in on_path:
        offers = np.unique(np.concatenate([grid, [a for a, _ in plan(s)]]))
        for a in offers:
            nxt, post = posterior(s, b, a)
            checked.setdefault((nxt, _bkey(post)), (nxt, post))
    checked = list(checked.values())

    # state closure for policy evaluation
    index = {}
    order = []

    def add(s):
        if s not in index:
            index[s] = len(order)
            order.append(s)
            return True
        return False

    stack = []
    for s, _ in checked:
        if add(s):
            stack.append(s)
    for s, _ in checked:
        offers = np.unique(np.concatenate([grid, [a for a, _ in plan(s)]]))
        for a in offers:
            nxt = respond(s, a)[1]
            if add(nxt):
                stack.append(nxt)
    while stack:
        s = stack.pop()
        for a, p in plan(s):
            nxt = respond(s, a)[1]
            if add(nxt):
                stack.append(nxt)
            if len(order) > max_states:
                raise RuntimeError("state closure too large")

    S, K = len(order), len(types)
    E = max(len(plan(s)) for s in order)
    Pr = np.zeros((S, E))
    Off = np.zeros((S, E))
    Acc = np.zeros((S, E, K))
    Nx = np.zeros((S, E), dtype=int)
    for i, s in enumerate(order):
        for e, (a, p) in enumerate(plan(s)):
            acc, nxt = respond(s, a)
            Pr[i, e], Off[i, e], Acc[i, e], Nx[i, e] = p, a, acc, index[nxt]
    uP = np.asarray(u(Off))[..., None]
    uV = uv_eval(types[None, None, :], Off[..., None], form)
    VP = np.zeros((S, K))
    VV = np.zeros((S, K))
    for _ in range(H):
        VP = np.sum(Pr[..., None] * (Acc * uP + (1 - Acc) * delta * VP[Nx]), axis=1)
        VV = np.sum(Pr[..., None] * (Acc * uV + (1 - Acc) * delta * VV[Nx]), axis=1)

    # one-shot deviation gains at checked nodes
    pg, vg, wit = 0.0, 0.0, []
    for s, b in checked:
        i = index[s]
        offers = np.unique(np.concatenate([grid, [a for a, _ in plan(s)]]))
        V = float(b @ VP[i])
        live = b > MASS_TOL
        for a in offers:
            acc, nxt = respond(s, a)
            j = index[nxt]
            Q = float(b @ (acc * u(a) + (1 - acc) * delta * VP[j]))
            gain = Q - V
            if gain > pg:
                pg = gain
            if gain > eps:
                wit.append((s, a, gain))
            A = uv_eval(types, a, form)
            Rj = delta * VV[j]
            g = np.max(np.where(live, np.maximum(A, Rj) - (acc * A + (1 - acc) * Rj), 0.0))
            if g > vg:
                vg = float(g)
            if g > eps:
                wit.append((s, a, float(g)))
    wit.sort(key=lambda w: -w[2])
    root_value = float(root_b @ VP[index[root]])
    return DeviationReport(float(pg), float(vg), float(bayes_gap), wit[:10], int(H), tail,
                           root_value, eps, S, len(checked), sorted(set(diags)))


# ------------------------------------------------------------- skim profile

class SkimProfile:
    """Decreasing-offer play on the atoms of a skim solution.

    State ("s", k) leaves atoms 0..k-1; atom j accepts a in [0, Pbar_j].
    An offer everyone accepts leads, if rejected, to ("d0",): belief on type
    0 and offer 0 forever. mutation "terminal_offer" replaces the final offer
    2 * floor by 2 * floor + 0.1; "flip_offpath" sends that branch to a
    belief on the top type instead, with offer 1 forever.
    """
    MUTATIONS = ("terminal_offer", "flip_offpath")

    def __init__(self, sol: skim_mod.SkimSolution, mutation: str | None = None):
        if mutation not in (None,) + self.MUTATIONS:
            raise ValueError(f"unknown skim mutation {mutation!r}")
        self.sol, self.mutation = sol, mutation
        self.u, self.delta, self.form = sol.u, sol.delta, "quadratic"
        self.atoms = np.asarray(sol.v, dtype=float)
        Fv = np.asarray(sol.F.cdf(self.atoms))
        self.masses = np.append(np.diff(Fv), 0.0)
        self.types = np.concatenate([[0.0], self.atoms])     # type 0 carries no mass
        self.Pb = np.concatenate([[0.0], np.minimum(sol.P_bar, 1.0)])
        self.m = len(self.atoms)

    def initial_state(self):
        return ("s", self.m - 1)

    def belief(self, state):
        w = np.zeros(len(self.types))
        if state[0] == "d0":
            w[0] = 1.0
        elif state[0] == "dv":
            w[-1] = 1.0
        else:
            k = state[1]
            w[1:k + 1] = self.masses[:k]
            tot = w.sum()
            if tot <= 0:
                w[1] = 1.0          # nothing left: point mass on the floor
            else:
                w /= tot
        return w

    def plan(self, state):
        if state[0] == "d0":
            return ((0.0, 1.0),)
        if state[0] == "dv":
            return ((1.0, 1.0),)
        k = state[1]
        if k == 0:
            a = float(self.Pb[1])
        else:
            j = int(self.sol.t[k])
            a = float(min(self.sol.P_bar[j], 1.0))
            if j == 0 and self.mutation == "terminal_offer":
                a = min(a + 0.1, 1.0)
        return ((a, 1.0),)

    def respond(self, state, a):
        v = self.types
        if state[0] in ("d0", "dv"):
            cont = 0.0 if state[0] == "d0" else 1.0
            acc = uv_eval(v, a, "quadratic") >= self.delta * uv_eval(v, cont, "quadratic") - 1e-12
            return acc.astype(float), state
        k = state[1]
        ok = np.flatnonzero(self.Pb[1:] >= a - 1e-12)
        acc = np.zeros(len(v))
        if a < 0 or len(ok) == 0:
            return acc, state
        y = int(ok[0])
        acc[1 + y:] = 1.0
        if y == 0:
            acc[0] = float(a <= 0.0)
            off = ("dv",) if self.mutation == "flip_offpath" else ("d0",)
            return acc, off
        return acc, ("s", min(y, k))


def skim_profile(F, u: ProposerUtility, delta: float, n: int = 401, mutation=None):
    return SkimProfile(skim_mod.solve(F, u, delta, n=n), mutation)


def two_type_profile(params, mutation=None):
    from . import two_type
    return two_type.TwoTypeProfile(two_type.solve(params), mutation)


MUTATIONS = ("terminal_offer", "skip_rung", "wrong_r", "wrong_lambda", "flip_offpath")


# ------------------------------------------------------ finite horizon oracle

@dataclass
class OracleResult:
    mu: np.ndarray
    V: np.ndarray          # (T+1, n) Proposer value, row T is zero
    VV: np.ndarray         # (T+1, n, 2) Vetoer values per type
    policy: np.ndarray     # (T, n) optimal offer
    infeasible: int        # (t, mu, offer) triples with no consistent response


def finite_horizon_oracle(types, offer_grid, delta: float, T: int,
                          u: ProposerUtility | None = None, form: str = "linear",
                          n_belief: int = 1000) -> OracleResult:
    """Backward induction for two types; mu is the weight on the higher type.

    For each offer the Vetoer response is picked among pure responses and
    one-type mixing (the mixer indifferent at its posterior), keeping the
    consistent response that is best for the Proposer.
    """
    types = np.asarray(types, dtype=float)
    if len(types) != 2:
        raise ValueError("the oracle handles exactly two types")
    if not 1 <= T <= 20:
        raise ValueError("T must lie in 1..20")
    u = u or ProposerUtility()
    lo_t, hi_t = types
    mu = np.linspace(0.0, 1.0, n_belief)
    grid = np.asarray(offer_grid, dtype=float)
    V = np.zeros((T + 1, n_belief))
    VV = np.zeros((T + 1, n_belief, 2))
    pol = np.zeros((T, n_belief))
    bad = 0
    tol = 1e-12
    for t in range(T - 1, -1, -1):
        Vn, Wl, Wh = V[t + 1], VV[t + 1, :, 0], VV[t + 1, :, 1]
        interp = lambda arr, x: np.interp(x, mu, arr)
        best = np.full(n_belief, -np.inf)
        bestVV = np.zeros((n_belief, 2))
        bestA = np.zeros(n_belief)
        for a in grid:
            ua = float(u(a))
            Al, Ah = float(uv_eval(lo_t, a, form)), float(uv_eval(hi_t, a, form))
            gl, gh = Al - delta * Wl, Ah - delta * Wh      # accept minus reject, per posterior
            cands = []
            # both accept (some off-path posterior sustains it)
            if np.any((gl >= -tol) & (gh >= -tol)):
                cands.append((np.full(n_belief, ua), np.full(n_belief, Al), np.full(n_belief, Ah),
                              np.ones(n_belief, bool)))
            # low accepts, high rejects -> posterior 1
            if gl[-1] >= -tol and gh[-1] <= tol:
                cands.append(((1 - mu) * ua + mu * delta * Vn[-1], np.full(n_belief, Al),
                              np.full(n_belief, delta * Wh[-1]), np.ones(n_belief, bool)))
            # high accepts, low rejects -> posterior 0
            if gh[0] >= -tol and gl[0] <= tol:
                cands.append((mu * ua + (1 - mu) * delta * Vn[0], np.full(n_belief, delta * Wl[0]),
                              np.full(n_belief, Ah), np.ones(n_belief, bool)))
            # both reject -> posterior unchanged
            cands.append((delta * Vn, delta * Wl, delta * Wh, (gl <= tol) & (gh <= tol)))
            # one type mixes; its posterior is a zero of its gain
            for g, other, mixer in ((gh, gl, 1), (gl, gh, 0)):
                for x in _crossings(mu, g):
                    if interp(other, x) > tol:
                        continue
                    vp, wl, wh = interp(Vn, x), interp(Wl, x), interp(Wh, x)
                    if mixer == 1:        # high mixes, posterior x <= mu
                        ok = mu > x
                        prej = np.where(ok, (1 - mu) / max(1 - x, tol), 1.0)
                    else:                 # low mixes, posterior x >= mu
                        ok = mu < x
                        prej = np.where(ok, mu / max(x, tol), 1.0)
                    val = (1 - prej) * ua + prej * delta * vp
                    cands.append((val, np.full(n_belief, delta * wl),
                                  np.full(n_belief, delta * wh), ok))
            val_best = np.full(n_belief, -np.inf)
            vv_best = np.zeros((n_belief, 2))
            for val, vl, vh, ok in cands:
                better = ok & (val > val_best + tol)
                val_best = np.where(better, val, val_best)
                vv_best[better, 0] = vl[better]
                vv_best[better, 1] = vh[better]
            miss = ~np.isfinite(val_best)
            bad += int(miss.sum())
            imp = val_best > best + tol
            best = np.where(imp, val_best, best)
            bestVV[imp] = vv_best[imp]
            bestA = np.where(imp, a, bestA)
        V[t], VV[t], pol[t] = best, bestVV, bestA
    return OracleResult(mu, V, VV, pol, bad)


def _crossings(x, g):
    """Interpolated zeros of g on the grid x."""
    s = np.sign(g)
    out = list(x[s == 0])
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    for i in idx:
        out.append(x[i] - g[i] * (x[i + 1] - x[i]) / (g[i + 1] - g[i]))
    return out


def static_one_offer(types, mu: float, offer_grid, u: ProposerUtility | None = None):
    """Best single take-it-or-leave-it offer against two types."""
    u = u or ProposerUtility()
    lo_t, hi_t = types
    best, arg = -np.inf, None
    for a in offer_grid:
        val = float(u(a)) * ((1 - mu) * (a <= 2 * lo_t + 1e-12) + mu * (a <= 2 * hi_t + 1e-12))
        if val > best + 1e-12:
            best, arg = val, float(a)
    return best, arg
