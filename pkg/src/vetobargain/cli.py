"""Command-line front end: `vetobargain <command> --config exp.yaml`.

Exit codes: 0 success, 1 usage or config error, 2 hypothesis gate,
3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__, leapfrog, skim, static_mech, two_type, verify
from .core import EmptyBeliefError, InfeasibleContinuationError, ProposerUtility, TypeDistribution

log = logging.getLogger("vetobargain")

EXIT_OK, EXIT_USAGE, EXIT_GATE, EXIT_VERIFY = 0, 1, 2, 3
FORMATS = ("json", "csv", "svg")

_num = {"type": "number"}
_delta = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "distribution": {
            "type": "object", "additionalProperties": False,
            "required": ["family", "support"],
            "properties": {
                "family": {"enum": ["uniform", "triangular", "truncated_normal", "piecewise_linear"]},
                "support": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "params": {"type": "object", "additionalProperties": False, "properties": {
                    "peak": _num, "mean": _num, "sd": {"type": "number", "exclusiveMinimum": 0},
                    "knots": {"type": "array", "items": {"type": "array", "items": _num,
                                                         "minItems": 2, "maxItems": 2}}}},
            },
        },
        "utility": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": ["linear_loss", "quadratic_loss", "mixture"]},
                           "weight": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "delta_list": {"type": "array", "items": _delta, "minItems": 1},
        "grid": {"oneOf": [
            {"const": "auto"},
            {"type": "object", "additionalProperties": False, "properties": {
                "type_points": {"type": "integer", "minimum": 3},
                "action_points": {"type": "integer", "minimum": 2}}},
        ]},
        "two_type": {
            "type": "object", "additionalProperties": False, "required": ["l", "h"],
            "properties": {"l": _num, "h": _num,
                           "mu0": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "verify": {
            "type": "object", "additionalProperties": False, "required": ["profile"],
            "properties": {
                "profile": {"enum": ["two_type", "skim"]},
                "mutation": {"enum": [None, *verify.MUTATIONS]},
                "horizon": {"type": "integer", "minimum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "offer_points": {"type": "integer", "minimum": 2},
            },
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {"target": {"enum": ["skim", "leapfrog", "necessity"]},
                           "workers": {"type": "integer", "minimum": 1}},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"directory": {"type": "string"},
                           "formats": {"type": "array", "items": {"enum": list(FORMATS)},
                                       "uniqueItems": True}},
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    },
}


class UsageError(Exception):
    pass


class GateError(Exception):
    pass


# ------------------------------------------------------------------ config

def _line_of(node, path):
    """Line (1-based) of the YAML node addressed by a jsonschema error path."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            hit = [v for k, v in node.value if k.value == key]
            if not hit:
                break
            node = hit[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def load_config(path: str | Path):
    """Parse and schema-check a YAML config; returns (config, sha256 of the bytes)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from e
    text = raw.decode("utf-8")
    try:
        cfg = yaml.safe_load(text) or {}
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        raise UsageError(f"{path}: YAML error: {e}") from e
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for err in errors:
            path_ = list(err.absolute_path)
            if err.validator == "additionalProperties" and isinstance(err.instance, dict):
                extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
                path_ += extra[:1]
            line = _line_of(root, path_) if root is not None else 1
            where = "/".join(map(str, err.absolute_path)) or "<root>"
            msgs.append(f"{path}:{line}: {where}: {err.message}")
        raise UsageError("config schema error\n" + "\n".join(msgs))
    return cfg, hashlib.sha256(raw).hexdigest()


def build_distribution(cfg):
    d = cfg.get("distribution")
    if d is None:
        raise UsageError("config needs a distribution section")
    lo, hi = d["support"]
    prm = d.get("params", {})
    try:
        if d["family"] == "uniform":
            return TypeDistribution.uniform(lo, hi)
        if d["family"] == "triangular":
            return TypeDistribution.triangular(lo, hi, prm.get("peak", 0.5 * (lo + hi)))
        if d["family"] == "truncated_normal":
            return TypeDistribution.truncated_normal(lo, hi, prm.get("mean", 0.5 * (lo + hi)),
                                                     prm.get("sd", 1.0))
        return TypeDistribution.piecewise_linear(prm["knots"])
    except (KeyError, ValueError) as e:
        raise UsageError(f"bad distribution: {e}") from e


def build_utility(cfg):
    u = cfg.get("utility", {"kind": "linear_loss"})
    return ProposerUtility(u["kind"], u.get("weight", 0.5))


def grid_points(cfg, delta, span=1.0):
    g = cfg.get("grid", "auto")
    if g == "auto" or "type_points" not in g:
        return skim.auto_grid_size(delta, span=span)
    return int(g["type_points"])


def deltas(cfg):
    if "delta_list" not in cfg:
        raise UsageError("config needs delta_list")
    return [float(d) for d in cfg["delta_list"]]


# ------------------------------------------------------------------ output

class Writer:
    def __init__(self, out: Path, formats, cfg_hash: str):
        self.out, self.formats, self.hash = out, set(formats), cfg_hash
        out.mkdir(parents=True, exist_ok=True)
        self.written = []

    def provenance(self):
        return f"config_sha256={self.hash} version={__version__}"

    def json(self, name, obj):
        if "json" not in self.formats:
            return
        doc = {"provenance": {"config_sha256": self.hash, "version": __version__}, "result": obj}
        self._put(name + ".json", json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")

    def csv(self, name, header, rows):
        if "csv" not in self.formats and "svg" not in self.formats:
            return
        buf = io.StringIO()
        buf.write("# " + self.provenance() + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        if "csv" in self.formats:
            self._put(name + ".csv", buf.getvalue())
        return buf.getvalue()

    def svg(self, name, csv_text, x, ys, title):
        if "svg" not in self.formats or csv_text is None:
            return
        self._put(name + ".svg", svg_from_csv(csv_text, x, ys, title))

    def _put(self, fname, text):
        p = self.out / fname
        p.write_text(text, encoding="utf-8")
        self.written.append(str(p))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def svg_from_csv(csv_text: str, x: str, ys, title: str, w: int = 640, h: int = 400) -> str:
    """Line chart of columns ys against x, read back from our own CSV text."""
    lines = [ln for ln in csv_text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    xs = np.array([float(r[x]) for r in rows])
    series = {c: np.array([float(r[c]) for r in rows]) for c in ys}
    allv = np.concatenate(list(series.values())) if series else np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(allv.min()), float(allv.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    ml, mr, mt, mb = 70, 20, 40, 50
    sx = lambda v: ml + (v - x0) / (x1 - x0) * (w - ml - mr)
    sy = lambda v: h - mb - (v - y0) / (y1 - y0) * (h - mt - mb)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}">',
           f'<rect width="{w}" height="{h}" fill="white"/>',
           f'<text x="{w / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{ml}" y1="{h - mb}" x2="{w - mr}" y2="{h - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{h - mb}" stroke="black"/>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{h - mb + 18}" text-anchor="middle" '
                   f'font-size="11">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{yv:.4g}</text>')
    out.append(f'<text x="{(ml + w - mr) / 2:.1f}" y="{h - 10}" text-anchor="middle" '
               f'font-size="12">{x}</text>')
    for i, (name, v) in enumerate(series.items()):
        col = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, v))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{w - mr - 5}" y="{mt + 14 * (i + 1)}" text-anchor="end" '
                   f'font-size="11" fill="{col}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- commands

def cmd_static(cfg, args, wr: Writer):
    F, u = build_distribution(cfg), build_utility(cfg)
    rep = static_mech.optimal_interval(F, u)
    wr.json("static", {"c_star": rep.c_star, "U": rep.U, "U_full": rep.U_full})
    text = wr.csv("static_curve", ["c", "payoff"], rep.payoff_curve.tolist())
    wr.svg("static_curve", text, "c", ["payoff"], "interval delegation payoff")
    print(f"c_star={rep.c_star:.9g} U={rep.U:.9g} U_full={rep.U_full:.9g}")
    return EXIT_OK


def _two_type_params(cfg, delta):
    t = cfg.get("two_type")
    if t is None:
        raise UsageError("config needs a two_type section")
    try:
        return two_type.TwoTypeParams(t["l"], t["h"], delta, t.get("mu0", 0.5), build_utility(cfg))
    except two_type.ParameterError as e:
        raise GateError(str(e)) from e


def cmd_two_type(cfg, args, wr: Writer):
    rows, docs = [], []
    n_sim = args.simulate or 0
    seed = _seed(cfg, args, required=n_sim > 0)
    traces = []
    for d in deltas(cfg):
        p = _two_type_params(cfg, d)
        try:
            eq = two_type.solve(p)
        except two_type.MuDeltaUndefined as e:
            raise GateError(str(e)) from e
        docs.append(eq.to_dict())
        rows.append((d, p.mu0, eq.mu_star, eq.mu_delta, eq.mu_bar_delta, eq.region,
                     eq.proposer_payoff, two_type.delegation_payoff(p)))
        print(f"delta={d:g} region={eq.region} payoff={eq.proposer_payoff:.9g} "
              f"mu_delta={eq.mu_delta:.9g} mu_bar_delta={eq.mu_bar_delta:.9g}")
        if n_sim:
            rng = np.random.default_rng(seed)
            for i in range(n_sim):
                vt = "h" if rng.random() < p.mu0 else "l"
                tr, pay = two_type.simulate(eq, vt, rng)
                for per, a, yes, post in tr:
                    traces.append((d, i, vt, per, a, yes, post, pay))
    wr.json("two_type", docs)
    wr.csv("two_type", ["delta", "mu0", "mu_star", "mu_delta", "mu_bar_delta", "region",
                        "payoff", "delegation_payoff"], rows)
    if n_sim:
        wr.csv("traces", ["delta", "trace", "type", "period", "offer", "accepted",
                          "posterior", "payoff"], traces)
    return EXIT_OK


def cmd_skim(cfg, args, wr: Writer):
    F, u = build_distribution(cfg), build_utility(cfg)
    rows, docs = [], []
    for d in deltas(cfg):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", skim.SkimHypothesisWarning)
            sol = skim.solve(F, u, d, n=grid_points(cfg, d, F.hi - max(F.lo, 0.0)))
        for c in caught:
            print(f"warning: {c.message}", file=sys.stderr)
        diag = sol.diagnostics()
        pth = skim.path(sol)
        docs.append({"delta": d, "payoff": sol.payoff, "diagnostics": diag,
                     "path": [{"state": s, "offer": a, "acceptors": list(acc)} for s, a, acc in pth]})
        rows.append((d, sol.payoff, diag["bellman_residual"], diag["indifference_residual"],
                     len(pth)))
        tag = f"skim_solution_d{d:g}"
        text = wr.csv(tag, ["v", "R", "P", "P_bar", "next_state"], sol.to_rows())
        wr.svg(tag, text, "v", ["P", "P_bar"], f"indifference offers, delta={d:g}")
        print(f"delta={d:g} payoff={sol.payoff:.9g} offers={len(pth)}")
    wr.json("skim", docs)
    wr.csv("skim", ["delta", "payoff", "bellman_residual", "indifference_residual",
                    "n_offers"], rows)
    return EXIT_OK


def cmd_leapfrog(cfg, args, wr: Writer):
    F, u = build_distribution(cfg), build_utility(cfg)
    rep = static_mech.optimal_interval(F, u)
    docs, rows = [], []
    for d in deltas(cfg):
        try:
            eq = leapfrog.construct(F, u, d, _grid_arg(cfg), report=rep)
        except leapfrog.HypothesisError as e:
            raise GateError(str(e)) from e
        docs.append(eq.to_dict())
        rows.append((d, eq.payoff, eq.U, eq.gap_to_U))
        print(f"delta={d:g} payoff={eq.payoff:.9g} U={eq.U:.9g} gap={eq.gap_to_U:.3g}"
              + (f" ({eq.note})" if eq.note else ""))
    wr.json("leapfrog", docs)
    text = wr.csv("leapfrog", ["delta", "payoff", "benchmark", "gap"], rows)
    wr.svg("leapfrog", text, "delta", ["payoff", "benchmark"], "leapfrog payoff against U(F)")
    return EXIT_OK


def _grid_arg(cfg):
    g = cfg.get("grid", "auto")
    return None if g == "auto" or "type_points" not in g else int(g["type_points"])


def cmd_verify(cfg, args, wr: Writer):
    v = cfg.get("verify")
    if v is None:
        raise UsageError("config needs a verify section")
    eps = v.get("eps", 1e-3)
    grid = np.linspace(0.0, 1.0, v.get("offer_points", 200))
    docs, failed = [], False
    for d in deltas(cfg):
        if v["profile"] == "two_type":
            p = _two_type_params(cfg, d)
            try:
                prof = verify.two_type_profile(p, v.get("mutation"))
            except two_type.MuDeltaUndefined as e:
                raise GateError(str(e)) from e
            except ValueError as e:
                raise UsageError(str(e)) from e
        else:
            F, u = build_distribution(cfg), build_utility(cfg)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", skim.SkimHypothesisWarning)
                try:
                    prof = verify.skim_profile(F, u, d, n=grid_points(cfg, d, F.hi - max(F.lo, 0.0)),
                                               mutation=v.get("mutation"))
                except ValueError as e:
                    raise UsageError(str(e)) from e
        try:
            rep = verify.eps_equilibrium(prof, grid, v.get("horizon"), eps)
        except ValueError as e:
            raise UsageError(str(e)) from e
        docs.append({"delta": d, **rep.to_dict()})
        failed |= not rep.passed
        print(f"delta={d:g} proposer_gain={rep.max_proposer_gain:.3g} "
              f"vetoer_gain={rep.max_vetoer_gain:.3g} bayes_gap={rep.bayes_gap:.3g} "
              f"{'PASS' if rep.passed else 'FAIL'}")
    wr.json("verify", docs)
    return EXIT_VERIFY if failed else EXIT_OK


def _sweep_point(job):
    target, cfg, d = job
    F, u = build_distribution(cfg), build_utility(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", skim.SkimHypothesisWarning)
        if target == "leapfrog":
            eq = leapfrog.construct(F, u, d, _grid_arg(cfg))
            return (d, eq.payoff, eq.U, eq.gap_to_U)
        sol = skim.solve(F, u, d, n=grid_points(cfg, d, F.hi - max(F.lo, 0.0)))
        rep = static_mech.optimal_interval(F, u)
        if target == "necessity":
            return (d, sol.payoff, rep.U, rep.U - sol.payoff)
        return (d, sol.payoff, rep.U_full, abs(sol.payoff - rep.U_full))


def cmd_sweep(cfg, args, wr: Writer):
    s = cfg.get("sweep", {})
    target, workers = s.get("target", "skim"), s.get("workers", 1)
    F = build_distribution(cfg)
    if target in ("leapfrog", "necessity") and not (F.lo <= 0 or F.hi <= 0.5):
        raise GateError("need the lowest type <= 0 or the highest type <= 1/2")
    jobs = [(target, cfg, d) for d in deltas(cfg)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    text = wr.csv("sweep", ["delta", "payoff", "benchmark", "gap"], rows)
    wr.svg("sweep", text, "delta", ["payoff", "benchmark"], f"{target} sweep")
    wr.json("sweep", {"target": target, "rows": rows})
    for r in rows:
        print(f"delta={r[0]:g} payoff={r[1]:.9g} benchmark={r[2]:.9g} gap={r[3]:.3g}")
    return EXIT_OK


COMMANDS = {"static": cmd_static, "two-type": cmd_two_type, "skim": cmd_skim,
            "leapfrog": cmd_leapfrog, "verify": cmd_verify, "sweep": cmd_sweep}


def _seed(cfg, args, required: bool):
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if required and seed is None:
        raise UsageError("a seed is required for stochastic commands (--seed or config seed)")
    return seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _formats(text):
    fs = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fs if f not in FORMATS]
    if bad or not fs:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {','.join(FORMATS)}")
    return fs


def make_parser():
    ap = _Parser(prog="vetobargain", description="Sequential veto bargaining solver.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--format", type=_formats, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "two-type":
            sp.add_argument("--simulate", type=int, default=None, metavar="N")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, digest = load_config(args.config)
        out_cfg = cfg.get("output", {})
        out = Path(args.out or out_cfg.get("directory", "out"))
        formats = args.format or out_cfg.get("formats", ["json", "csv"])
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        wr = Writer(out, formats, digest)
        return COMMANDS[args.command](cfg, args, wr)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (GateError, leapfrog.HypothesisError, two_type.MuDeltaUndefined,
            two_type.ParameterError, InfeasibleContinuationError, EmptyBeliefError) as e:
        print(f"hypothesis gate: {e}", file=sys.stderr)
        return EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
