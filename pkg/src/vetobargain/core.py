"""Payoff primitives, type distributions, beliefs and grids.

Everything here is a pure function of its inputs. Distributions and beliefs
are frozen dataclasses so they can be shared freely between solvers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

# tolerance hierarchy used across the package
TOL_STRUCT = 1e-12
TOL_ROOT = 1e-9
TOL_PAYOFF = 1e-6

ACTION_MIN_CLAMP = -1.0
ACTION_MAX = 2.0


class EmptyBeliefError(ValueError):
    pass


class InfeasibleContinuationError(ValueError):
    pass


# ---------------------------------------------------------------- utilities

@dataclass(frozen=True)
class ProposerUtility:
    """Concave utility with peak at 1 and u(0) = 0.

    kind is one of "linear_loss", "quadratic_loss" or "mixture". For a mixture,
    `weight` is the share of the linear-loss component.
    """
    kind: str = "linear_loss"
    weight: float = 0.5

    def __post_init__(self):
        if self.kind not in ("linear_loss", "quadratic_loss", "mixture"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("mixture weight must lie in [0, 1]")

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        lin = 1.0 - np.abs(1.0 - a)
        quad = 1.0 - (1.0 - a) ** 2
        if self.kind == "linear_loss":
            out = lin
        elif self.kind == "quadratic_loss":
            out = quad
        else:
            out = self.weight * lin + (1.0 - self.weight) * quad
        return out if out.ndim else float(out)

    def deriv(self, a):
        # left derivative at the kink a = 1
        a = np.asarray(a, dtype=float)
        lin = np.where(a <= 1.0, 1.0, -1.0)
        quad = 2.0 * (1.0 - a)
        if self.kind == "linear_loss":
            out = lin
        elif self.kind == "quadratic_loss":
            out = quad
        else:
            out = self.weight * lin + (1.0 - self.weight) * quad
        return out if out.ndim else float(out)


def uv_eval(v, a, form: str = "quadratic"):
    """Vetoer utility of action a for ideal point v (status quo normalised to 0)."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    if form == "quadratic":
        out = 2.0 * v * a - a * a
    elif form == "linear":
        out = v - np.abs(v - a)
    else:
        raise ValueError(f"unknown vetoer form {form!r}")
    return out if out.ndim else float(out)


def largest_indifferent_action(v: float, w: float) -> float:
    """Larger root a of 2va - a^2 = w, i.e. a = v + sqrt(v^2 - w)."""
    disc = v * v - w
    if disc < -TOL_STRUCT * max(1.0, abs(w)):
        raise InfeasibleContinuationError(
            f"infeasible continuation value: w={w} exceeds v^2={v * v}")
    return v + math.sqrt(max(disc, 0.0))


def vetoer_best_in_menu(v: float, menu: Sequence[float], u: ProposerUtility | None = None,
                        form: str = "quadratic") -> float:
    """Vetoer's choice from menu plus the veto option 0.

    Ties go to the action the Proposer likes more, then to the larger action.
    """
    u = u or ProposerUtility()
    options = sorted(set(float(x) for x in menu) | {0.0})
    vals = [uv_eval(v, a, form) for a in options]
    best = max(vals)
    cands = [a for a, val in zip(options, vals) if val >= best - TOL_STRUCT]
    return max(cands, key=lambda a: (u(a), a))


# ------------------------------------------------------------ distributions

def _norm_cdf(x):
    return 0.5 * (1.0 + special.erf(np.asarray(x, dtype=float) / math.sqrt(2.0)))


@dataclass(frozen=True)
class TypeDistribution:
    """Prior over the Vetoer's ideal point, supported on [lo, hi].

    family: "uniform", "triangular" (params: peak), "truncated_normal"
    (params: mean, sd) or "piecewise_linear" (params: knots, a tuple of
    (x, density) pairs spanning [lo, hi]; rescaled to integrate to one).
    """
    family: str
    lo: float
    hi: float
    params: tuple = ()

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("support must satisfy lo < hi")
        if self.family == "triangular":
            (peak,) = self.params
            if not self.lo <= peak <= self.hi:
                raise ValueError("triangular peak outside support")
        elif self.family == "truncated_normal":
            mean, sd = self.params
            if sd <= 0:
                raise ValueError("sd must be positive")
        elif self.family == "piecewise_linear":
            xs = [k[0] for k in self.params]
            if abs(xs[0] - self.lo) > TOL_STRUCT or abs(xs[-1] - self.hi) > TOL_STRUCT:
                raise ValueError("knots must span the support")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError("knots must be strictly increasing")
            if any(k[1] < 0 for k in self.params):
                raise ValueError("negative density at a knot")
        elif self.family != "uniform":
            raise ValueError(f"unknown family {self.family!r}")

    # convenient constructors
    @classmethod
    def uniform(cls, lo=0.0, hi=1.0):
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def triangular(cls, lo, hi, peak):
        return cls("triangular", float(lo), float(hi), (float(peak),))

    @classmethod
    def truncated_normal(cls, lo, hi, mean, sd):
        return cls("truncated_normal", float(lo), float(hi), (float(mean), float(sd)))

    @classmethod
    def piecewise_linear(cls, knots):
        knots = tuple((float(x), float(d)) for x, d in knots)
        return cls("piecewise_linear", knots[0][0], knots[-1][0], knots)

    @property
    def base(self):
        return self

    @property
    def mass(self):
        return 1.0

    def _pl_arrays(self):
        xs = np.array([k[0] for k in self.params])
        ds = np.array([k[1] for k in self.params])
        area = np.sum(0.5 * (ds[1:] + ds[:-1]) * np.diff(xs))
        return xs, ds / area

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        lo, hi = self.lo, self.hi
        if self.family == "uniform":
            out = np.full_like(x, 1.0 / (hi - lo))
        elif self.family == "triangular":
            c = self.params[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                left = 2 * (x - lo) / ((hi - lo) * (c - lo)) if c > lo else np.zeros_like(x)
                right = 2 * (hi - x) / ((hi - lo) * (hi - c)) if c < hi else np.zeros_like(x)
            out = np.where(x < c, left, np.where(x > c, right, 2.0 / (hi - lo)))
        elif self.family == "truncated_normal":
            m, s = self.params
            z = (_norm_cdf((hi - m) / s) - _norm_cdf((lo - m) / s))
            out = np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi) * z)
        else:
            xs, ds = self._pl_arrays()
            out = np.interp(x, xs, ds)
        out = np.where(inside, out, 0.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lo, self.hi)
        lo, hi = self.lo, self.hi
        if self.family == "uniform":
            out = (xc - lo) / (hi - lo)
        elif self.family == "triangular":
            c = self.params[0]
            left = (xc - lo) ** 2 / ((hi - lo) * (c - lo)) if c > lo else np.zeros_like(xc)
            right = 1.0 - (hi - xc) ** 2 / ((hi - lo) * (hi - c)) if c < hi else np.ones_like(xc)
            out = np.where(xc <= c, left, right)
        elif self.family == "truncated_normal":
            m, s = self.params
            a, b = _norm_cdf((lo - m) / s), _norm_cdf((hi - m) / s)
            out = (_norm_cdf((xc - m) / s) - a) / (b - a)
        else:
            xs, ds = self._pl_arrays()
            seg = np.concatenate([[0.0], np.cumsum(0.5 * (ds[1:] + ds[:-1]) * np.diff(xs))])
            i = np.clip(np.searchsorted(xs, xc, side="right") - 1, 0, len(xs) - 2)
            dx = xc - xs[i]
            slope = (ds[i + 1] - ds[i]) / (xs[i + 1] - xs[i])
            out = seg[i] + ds[i] * dx + 0.5 * slope * dx * dx
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def density_bounds(self, n: int = 2001):
        """(floor, ceiling) of the density sampled on a grid including knots."""
        xs = np.linspace(self.lo, self.hi, n)
        if self.family == "piecewise_linear":
            xs = np.union1d(xs, [k[0] for k in self.params])
        f = self.pdf(xs)
        return float(f.min()), float(f.max())


@dataclass(frozen=True)
class Belief:
    """Prior conditioned on a union of disjoint closed intervals.

    Quacks like a TypeDistribution (lo, hi, cdf, pdf) so solvers accept both.
    """
    base: TypeDistribution
    pieces: tuple  # ((lo, hi), ...), sorted and disjoint
    mass: float = field(default=0.0)

    @property
    def lo(self):
        return self.pieces[0][0]

    @property
    def hi(self):
        return self.pieces[-1][1]

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        tot = np.zeros_like(x)
        F = self.base.cdf
        for a, b in self.pieces:
            tot = tot + np.clip(F(np.clip(x, a, b)) - F(a), 0.0, None)
        out = np.clip(tot / self.mass, 0.0, 1.0)
        return out if out.ndim else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.pieces:
            inside |= (x >= a) & (x <= b)
        out = np.where(inside, self.base.pdf(x) / self.mass, 0.0)
        return out if out.ndim else float(out)


def _make_belief(base: TypeDistribution, pieces) -> Belief:
    pieces = tuple((float(a), float(b)) for a, b in pieces if b >= a)
    mass = sum(float(base.cdf(b) - base.cdf(a)) for a, b in pieces)
    if not pieces or mass <= TOL_STRUCT:
        raise EmptyBeliefError("empty belief")
    return Belief(base, pieces, mass)


def _as_pieces(F):
    if isinstance(F, Belief):
        return F.base, F.pieces
    return F, ((F.lo, F.hi),)


def truncate(F, lo: float, hi: float) -> Belief:
    """Condition F on [lo, hi]."""
    base, pieces = _as_pieces(F)
    if lo > hi or lo < F.lo - TOL_STRUCT or hi > F.hi + TOL_STRUCT:
        raise ValueError(f"window [{lo}, {hi}] not inside support [{F.lo}, {F.hi}]")
    cut = [(max(a, lo), min(b, hi)) for a, b in pieces if min(b, hi) >= max(a, lo)]
    if not cut:
        raise EmptyBeliefError("empty belief")
    return _make_belief(base, cut)


def exclude_open(F, lo: float, hi: float) -> Belief:
    """Condition F on the complement of the open interval (lo, hi)."""
    base, pieces = _as_pieces(F)
    out = []
    for a, b in pieces:
        if b <= lo or a >= hi:
            out.append((a, b))
            continue
        if a <= lo:
            out.append((a, lo))
        if b >= hi:
            out.append((hi, b))
    # drop zero-width pieces that carry no mass but keep the support endpoints sane
    out = [(a, b) for a, b in out if b > a] or out
    return _make_belief(base, out)


# ----------------------------------------------------------------- grids

@dataclass(frozen=True)
class Grid:
    type_grid: np.ndarray
    action_grid: np.ndarray

    @property
    def dv(self):
        return float(np.max(np.diff(self.type_grid)))

    @property
    def da(self):
        return float(np.max(np.diff(self.action_grid)))


def make_grid(lo: float, hi: float, n: int = 2001, n_actions: int = 401,
              extra: Sequence[float] = ()) -> Grid:
    """Uniform type grid on [lo, hi] plus landmark points (0, 2*lo+, 1, extra)."""
    if n < 2 or hi <= lo:
        raise ValueError("degenerate grid")
    lo_plus = max(lo, 0.0)
    marks = [0.0, min(2.0 * lo_plus, 1.0), 1.0, *extra]
    tg = np.linspace(lo, hi, n)
    keep = [m for m in marks if lo < m < hi]
    tg = _merge(tg, keep)
    a_lo, a_hi = min(0.0, lo), max(1.0, min(hi, ACTION_MAX))
    ag = _merge(np.linspace(a_lo, a_hi, n_actions), [m for m in marks if a_lo <= m <= a_hi])
    return Grid(tg, ag)


def _merge(base: np.ndarray, marks) -> np.ndarray:
    """Insert landmarks, dropping base nodes that would sit within 1e-9 of one."""
    if not len(marks):
        return base
    marks = np.asarray(sorted(marks), dtype=float)
    d = np.min(np.abs(base[:, None] - marks[None, :]), axis=1)
    ends = np.zeros(len(base), dtype=bool)
    ends[[0, -1]] = True
    kept = base[(d > 1e-9) | ends]
    return np.unique(np.concatenate([kept, marks]))


def trapezoid_expectation(g_values: np.ndarray, nodes: np.ndarray, F) -> float:
    """CDF-weighted trapezoid rule for E[g(v)] over the nodes' span."""
    Fv = np.asarray(F.cdf(nodes))
    g = np.asarray(g_values, dtype=float)
    return float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(Fv)))


# --------------------------------------------------------------- outcomes

@dataclass(frozen=True)
class EquilibriumOutcome:
    """Per-type agreement lotteries produced by an equilibrium.

    agreements[i] is a tuple of (action, period, probability) triples for
    type types[i]; leftover probability means no agreement (status quo).
    masses[i] is the prior weight of the type atom. proposer_payoff is the
    payoff as computed by the constructing solver.
    """
    types: np.ndarray
    masses: np.ndarray
    agreements: tuple
    proposer_payoff: float
    vetoer_form: str = "quadratic"

    def dynamic_proposer_payoff(self, u: ProposerUtility, delta: float) -> float:
        tot = 0.0
        for m, agr in zip(self.masses, self.agreements):
            tot += m * sum(p * delta ** t * u(a) for a, t, p in agr)
        return float(tot)

    def dynamic_vetoer_utilities(self, delta: float) -> np.ndarray:
        return np.array([sum(p * delta ** t * uv_eval(v, a, self.vetoer_form) for a, t, p in agr)
                         for v, agr in zip(self.types, self.agreements)])
