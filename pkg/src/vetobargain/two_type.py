"""Two Vetoer types l < 1/2 < h < 2l < 1 with linear-loss utilities.

Thresholds, the skimming ladder, the leapfrogging regions, payoffs, the
full strategy profile (on and off path) and seeded play traces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import optimize

from .core import TOL_ROOT, TOL_STRUCT, ProposerUtility, uv_eval

SKIMMING, LEAPFROGGING, DELAYED = "Skimming", "Leapfrogging", "DelayedLeapfrogging"
BISECT_XTOL = 1e-13
CUTOFF_GUARD = 1e-8   # cutoffs closer to 1 lose all precision; rungs beyond are dropped


class ParameterError(ValueError):
    pass


class MuDeltaUndefined(ValueError):
    pass


@dataclass(frozen=True)
class TwoTypeParams:
    l: float
    h: float
    delta: float
    mu0: float = 0.5
    u: ProposerUtility = field(default_factory=ProposerUtility)

    def __post_init__(self):
        if not (0 < self.l < 0.5 < self.h < 2 * self.l < 1):
            raise ParameterError("need 0 < l < 1/2 < h < 2l < 1")
        if not 0 <= self.delta < 1:
            raise ParameterError("delta must lie in [0, 1)")
        if not 0 <= self.mu0 <= 1:
            raise ParameterError("mu0 must lie in [0, 1]")


def uvl(a, v):
    return uv_eval(v, a, "linear")


@dataclass
class TwoTypeEquilibrium:
    a_star: float
    mu_star: float
    a_delta: float
    ladder: np.ndarray
    capped: bool                      # top rung set by the cap at 1
    cutoff_beliefs: np.ndarray        # mu^0 = 0 < mu^1 < ... (those below 1)
    alpha: np.ndarray                 # V_n(mu) = mu beta_n + (1 - mu) alpha_n
    beta: np.ndarray
    mu_delta: float = float("nan")
    u_h_star: float = float("nan")
    a_bar_delta: float = float("nan")
    mu_bar_delta: float = float("nan")
    region: str = ""
    boundary: bool = False
    proposer_payoff: float = float("nan")
    h_payoff: float = float("nan")
    l_payoff: float = float("nan")
    params: TwoTypeParams | None = None

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("params", "alpha", "beta")}
        for k in ("ladder", "cutoff_beliefs"):
            d[k] = [float(x) for x in d[k]]
        p = self.params
        d["params"] = {"l": p.l, "h": p.h, "delta": p.delta, "mu0": p.mu0, "utility": p.u.kind}
        return d


def thresholds(p: TwoTypeParams) -> TwoTypeEquilibrium:
    """Prior-free quantities: a*, mu*, a^delta, ladder and skimming cutoffs."""
    u, l, h, d = p.u, p.l, p.h, p.delta
    a_star = 2 * h - 1
    mu_star = (u(2 * l) - u(a_star)) / (u(1.0) - u(a_star))
    ladder = [2 * l]
    capped = False
    while ladder[-1] < 1.0:
        nxt = 2 * h - d * (2 * h - ladder[-1])
        if nxt > 1.0:
            nxt, capped = 1.0, True
        ladder.append(nxt)
    ladder = np.array(ladder)
    # skimming values V_n(mu) = mu u(a^n) + (1 - mu) k_n, and cutoffs mu^n
    alpha, beta, cuts = [u(2 * l)], [u(2 * l)], [0.0]
    ks = alpha
    for n in range(1, len(ladder)):
        prev_cut = cuts[n - 1]
        W = prev_cut * beta[n - 1] + (1 - prev_cut) * alpha[n - 1]
        un = u(ladder[n])
        k_n = (d * W - prev_cut * un) / (1 - prev_cut)
        alpha.append(k_n)
        beta.append(un)
        gain = un - u(ladder[n - 1])
        if gain <= 0:
            break
        x = (ks[n - 1] - k_n) / gain      # odds mu / (1 - mu) at the cutoff
        mu_n = x / (1 + x)
        if not (prev_cut < mu_n < 1.0 - CUTOFF_GUARD):
            break
        cuts.append(mu_n)
    return TwoTypeEquilibrium(a_star, mu_star, d * a_star, ladder, capped, np.array(cuts),
                              np.array(alpha), np.array(beta), params=p)


def start_index(eq: TwoTypeEquilibrium, mu: float) -> int:
    """Opening rung of the skimming ladder at belief mu; ties go to the lower rung."""
    cuts = eq.cutoff_beliefs
    return int(np.sum(cuts[1:] < mu))


def skim_value(p: TwoTypeParams, mu: float, eq: TwoTypeEquilibrium | None = None):
    """(payoff, start index) of the skimming equilibrium restricted to [2l, 1]."""
    eq = eq or thresholds(p)
    n = start_index(eq, mu)
    return _value(eq, n, mu), n


def _value(eq: TwoTypeEquilibrium, n: int, mu: float) -> float:
    return float(mu * eq.beta[n] + (1 - mu) * eq.alpha[n])


def skim_value_by_max(eq: TwoTypeEquilibrium, mu: float):
    """Max over feasible opening rungs (those whose posterior target is <= mu)."""
    cuts = eq.cutoff_beliefs
    best, arg = -np.inf, 0
    for n in range(len(cuts)):
        if n >= 1 and cuts[n - 1] > mu:
            break
        val = _value(eq, n, mu)
        if val > best + TOL_ROOT:
            best, arg = val, n
    return float(best), arg


def leapfrog_value(p: TwoTypeParams, mu: float) -> float:
    return float((1 - mu) * p.u(p.delta * (2 * p.h - 1)) + mu * p.delta * p.u(1.0))


def mu_delta(p: TwoTypeParams, eq: TwoTypeEquilibrium | None = None) -> float:
    """Smallest belief at which skimming and leapfrogging pay the same."""
    eq = eq or thresholds(p)
    cuts = list(eq.cutoff_beliefs) + [1.0]

    knots = np.array(cuts)
    vals = []
    for k in range(len(knots) - 1):
        lo, hi = knots[k], knots[k + 1]
        # value is linear on (lo, hi]; evaluate with the segment's own rung
        f_lo = _value(eq, k, lo) - leapfrog_value(p, lo)
        f_hi = _value(eq, k, hi) - leapfrog_value(p, hi)
        vals.append((lo, hi, f_lo, f_hi, k))
    for lo, hi, f_lo, f_hi, k in vals:
        if f_lo > 0 >= f_hi:
            seg = lambda mu, k=k: _value(eq, k, mu) - leapfrog_value(p, mu)
            return float(optimize.bisect(seg, lo, hi, xtol=BISECT_XTOL))
        if f_lo <= 0:
            return float(lo)
    raise MuDeltaUndefined(f"mu_delta undefined at this δ={p.delta}: skimming beats "
                           "leapfrogging at every belief")


def r_delta(mu_d: float, mu: float) -> float:
    """Type h's rejection probability that moves belief mu down to mu_d."""
    return mu_d * (1 - mu) / ((1 - mu_d) * mu)


def _barmu_gap(p: TwoTypeParams, mu_d: float, mu: float) -> float:
    u, d = p.u, p.delta
    ad = d * (2 * p.h - 1)
    r = r_delta(mu_d, mu)
    lhs = (1 - mu) * u(ad) + mu * d * u(1.0)
    rhs = (1 - mu) * d * u(ad) + mu * (1 - r + r * d * d) * u(1.0)
    return lhs - rhs


def mu_bar_delta(p: TwoTypeParams, mu_d: float | None = None) -> float:
    """Belief above which an opening offer of 1 beats leapfrogging."""
    mu_d = mu_delta(p) if mu_d is None else mu_d
    f = lambda mu: _barmu_gap(p, mu_d, mu)
    if not (f(mu_d) > 0 > f(1.0)):
        raise ValueError("no sign change for mu_bar_delta")
    return float(optimize.bisect(f, mu_d, 1.0, xtol=BISECT_XTOL))


def lam(eq: TwoTypeEquilibrium, a0: float) -> float:
    """Second-period weight on skimming after an opening offer a0 >= a_bar_delta is rejected."""
    p = eq.params
    d, h = p.delta, p.h
    top = uvl(a0, h) - d * d * uvl(1.0, h)
    bot = d * eq.u_h_star - d * d * uvl(1.0, h)
    return float(top / bot)


def solve(p: TwoTypeParams) -> TwoTypeEquilibrium:
    """Thresholds, region and payoffs at the prior p.mu0."""
    eq = thresholds(p)
    md = mu_delta(p, eq)
    eq.mu_delta = md
    n_star = start_index(eq, md)
    eq.u_h_star = float(uvl(eq.ladder[n_star], p.h))
    eq.a_bar_delta = 2 * p.h - p.delta * eq.u_h_star
    eq.mu_bar_delta = mu_bar_delta(p, md)
    classify(eq)
    return eq


def classify(eq: TwoTypeEquilibrium) -> TwoTypeEquilibrium:
    p = eq.params
    mu0, u, d, l, h = p.mu0, p.u, p.delta, p.l, p.h
    near = lambda x: abs(mu0 - x) <= TOL_STRUCT
    eq.boundary = near(eq.mu_delta) or near(eq.mu_bar_delta)
    if mu0 <= eq.mu_delta + TOL_STRUCT:
        eq.region = SKIMMING
        val, n = skim_value(p, mu0, eq)
        eq.proposer_payoff = val
        eq.h_payoff = float(uvl(eq.ladder[n], h))
        eq.l_payoff = 0.0  # l only ever receives 2l, worth zero to her
    elif mu0 <= eq.mu_bar_delta + TOL_STRUCT:
        eq.region = LEAPFROGGING
        eq.proposer_payoff = leapfrog_value(p, mu0)
        eq.h_payoff = float(d * uvl(1.0, h))
        eq.l_payoff = float(uvl(eq.a_delta, l))
    else:
        eq.region = DELAYED
        r = r_delta(eq.mu_delta, mu0)
        eq.proposer_payoff = float((1 - mu0) * d * u(eq.a_delta)
                                   + mu0 * (1 - r + r * d * d) * u(1.0))
        eq.h_payoff = float(uvl(1.0, h))
        eq.l_payoff = float((1 - lam(eq, 1.0)) * d * uvl(eq.a_delta, l))
    return eq


def delegation_payoff(p: TwoTypeParams) -> float:
    u = p.u
    return float(max(u(2 * p.l), (1 - p.mu0) * u(2 * p.h - 1) + p.mu0 * u(1.0)))


def dynamic_commitment_lower_bound(p: TwoTypeParams) -> float:
    """Offer 1 until period t-1 and 2l from period t on, t the first period at
    which h prefers 1 now to 2l at t."""
    u, d, l, h = p.u, p.delta, p.l, p.h
    if p.mu0 >= 1.0:
        return float(u(1.0))
    t, disc = 0, 1.0
    while uvl(1.0, h) < disc * uvl(2 * l, h):
        t += 1
        disc *= d
        if t > 10 ** 7:
            raise RuntimeError("no finite switching period")
    return float(p.mu0 * u(1.0) + (1 - p.mu0) * disc * u(2 * l))


# ------------------------------------------------------------ strategy profile

ONE, ZERO, ROOT, DELTA = "one", "zero", "root", "delta"


class TwoTypeProfile:
    """The equilibrium strategies and beliefs at every history summary.

    A state is (belief_key, plan). belief_key is "root" (prior), "delta"
    (the leapfrog-indifference belief), "one", "zero" or ("cut", n). plan is
    a tuple of (offer, probability) pairs. mutation injects one named fault:
    "skip_rung", "wrong_r", "wrong_lambda" or "flip_offpath".
    """
    MUTATIONS = ("skip_rung", "wrong_r", "wrong_lambda", "flip_offpath")

    def __init__(self, eq: TwoTypeEquilibrium, mutation: str | None = None):
        if mutation not in (None,) + self.MUTATIONS:
            raise ValueError(f"unknown two-type mutation {mutation!r}")
        self.eq, self.p = eq, eq.params
        self.mutation = mutation
        self.types = np.array([self.p.l, self.p.h])
        self.form = "linear"
        self.u, self.delta = self.p.u, self.p.delta

    # beliefs
    def mu(self, key) -> float:
        if key == ROOT:
            return self.p.mu0
        if key == DELTA:
            return self.eq.mu_delta
        if key == ONE:
            return 1.0
        if key == ZERO:
            return 0.0
        return float(self.eq.cutoff_beliefs[key[1]])

    def belief(self, state):
        m = self.mu(state[0])
        return np.array([1 - m, m])

    # plans
    def fresh_plan(self, mu: float):
        n = start_index(self.eq, mu)
        return ((float(self.eq.ladder[n]), 1.0),)

    def initial_state(self):
        eq = self.eq
        if eq.region == SKIMMING:
            plan = self.fresh_plan(self.p.mu0)
        elif eq.region == LEAPFROGGING:
            plan = ((eq.a_delta, 1.0),)
        else:
            plan = ((1.0, 1.0),)
        return (ROOT, plan)

    def plan(self, state):
        return state[1]

    def _lambda(self, a0):
        lm = lam(self.eq, a0)
        if self.mutation == "wrong_lambda":
            lm = lm + 0.3 if lm < 0.5 else lm - 0.3
        return min(max(lm, 0.0), 1.0)

    def _cut_plan(self, m: int, a: float):
        lad, d, h = self.eq.ladder, self.p.delta, self.p.h
        hi, lo = lad[m], lad[m - 1]
        rho = (d * uvl(lo, h) - uvl(a, h)) / (d * (uvl(lo, h) - uvl(hi, h)))
        rho = min(max(float(rho), 0.0), 1.0)
        if self.mutation == "skip_rung" and m >= 2:
            hi, lo = lad[m - 1], lad[m - 2]
        return ((float(hi), rho), (float(lo), 1.0 - rho)) if rho < 1.0 else ((float(hi), 1.0),)

    def respond(self, state, a: float):
        """(accept probabilities for (l, h), next state) after offer a."""
        key = state[0]
        eq, p = self.eq, self.p
        l, h, d = p.l, p.h, p.delta
        eps = 1e-12
        one_state = (ONE, ((1.0, 1.0),))
        zero_state = (ZERO, ((2 * l, 1.0),))
        if key == ONE:
            return np.array([float(a <= 2 * l + eps), float(a >= eq.a_delta - eps)]), one_state
        if key == ZERO:
            acc_h = float(uvl(a, h) >= d * uvl(2 * l, h) - eps)
            return np.array([float(a <= 2 * l + eps), acc_h]), zero_state
        mu = self.mu(key)
        after_low = zero_state if self.mutation == "flip_offpath" else one_state
        if a <= eq.a_delta + eps:
            return np.array([1.0, 0.0]), after_low
        if a <= 2 * l + eps:
            return np.array([1.0, 1.0]), after_low
        if key == ROOT and p.mu0 > eq.mu_delta + TOL_STRUCT and a > eq.a_bar_delta + eps:
            r = r_delta(eq.mu_delta, p.mu0)
            if self.mutation == "wrong_r":
                r *= 0.5
            lm = self._lambda(a)
            n_star = start_index(eq, eq.mu_delta)
            plan = ((float(eq.ladder[n_star]), lm), (eq.a_delta, 1.0 - lm))
            return np.array([0.0, 1.0 - r]), (DELTA, plan)
        lad = eq.ladder
        m = int(np.searchsorted(lad, a - eps, side="left")) - 1  # a in (lad[m], lad[m+1]]
        m = max(m, 0)
        if m == 0:
            return np.array([0.0, 1.0]), zero_state
        cuts = eq.cutoff_beliefs
        if m < len(cuts) and mu > cuts[m] + TOL_STRUCT:
            r = r_delta(cuts[m], mu)
            return np.array([0.0, 1.0 - r]), (("cut", m), self._cut_plan(m, a))
        return np.array([0.0, 0.0]), (key, self.fresh_plan(mu))


def simulate(p_or_eq, vtype: str, seed: int | np.random.Generator | None = None,
             max_periods: int = 100000):
    """Play one trace against a Vetoer of type 'l' or 'h'.

    Returns a list of (period, offer, accepted, posterior_after) and the
    Proposer's realised discounted payoff.
    """
    eq = p_or_eq if isinstance(p_or_eq, TwoTypeEquilibrium) else solve(p_or_eq)
    prof = TwoTypeProfile(eq)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = {"l": 0, "h": 1}[vtype]
    state = prof.initial_state()
    trace = []
    for t in range(max_periods):
        plan = prof.plan(state)
        probs = np.array([q for _, q in plan])
        k = 0 if len(plan) == 1 else int(rng.choice(len(plan), p=probs / probs.sum()))
        a = plan[k][0]
        acc, nxt = prof.respond(state, a)
        yes = bool(rng.random() < acc[idx])
        post = prof.mu(nxt[0])
        trace.append((t, float(a), yes, post))
        if yes:
            return trace, float(eq.params.delta ** t * eq.params.u(a))
        state = nxt
    return trace, 0.0


def monte_carlo(eq: TwoTypeEquilibrium, n: int, seed: int = 0):
    """Mean and standard error of the Proposer payoff over n seeded traces."""
    rng = np.random.default_rng(seed)
    types = rng.random(n) < eq.params.mu0
    pay = np.empty(n)
    for i in range(n):
        _, pay[i] = simulate(eq, "h" if types[i] else "l", rng)
    return float(pay.mean()), float(pay.std(ddof=1) / math.sqrt(n))


def outcome(eq: TwoTypeEquilibrium, max_periods: int = 10000):
    """Per-type time-stamped agreement lotteries of the equilibrium play."""
    from .core import EquilibriumOutcome
    prof = TwoTypeProfile(eq)
    agr = []
    for idx in (0, 1):
        lots = {}
        live = [(prof.initial_state(), 1.0)]
        for t in range(max_periods):
            nxt_live = {}
            for state, w in live:
                for a, q in prof.plan(state):
                    acc, nxt = prof.respond(state, a)
                    pa = w * q * acc[idx]
                    if pa > 0:
                        lots[(a, t)] = lots.get((a, t), 0.0) + pa
                    pr = w * q * (1 - acc[idx])
                    if pr > 0:
                        nxt_live[nxt] = nxt_live.get(nxt, 0.0) + pr
            live = list(nxt_live.items())
            if not live or sum(w for _, w in live) < 1e-15:
                break
        agr.append(tuple((a, t, p) for (a, t), p in sorted(lots.items(), key=lambda kv: kv[0][1])))
    p = eq.params
    return EquilibriumOutcome(np.array([p.l, p.h]), np.array([1 - p.mu0, p.mu0]), tuple(agr),
                              eq.proposer_payoff, vetoer_form="linear")
