"""Command line driver: ``cauchytime <subcommand> --config FILE``.

Exit codes: 0 all requested checks pass, 1 a check failed, 2 bad input
(configuration schema, surfaces, group preconditions), 3 synthesis failure.
Every run writes ``report.txt`` (stable key order) and ``summary.json``
into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import causal, fields, geroch, steep, symmetry
from .config import RunConfig, SchemaError, load_config
from .spacetime import (
    ConfigurationError,
    ConstructionError,
    SurfaceError,
    build_group,
    build_model,
)

log = logging.getLogger("cauchytime")

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SYNTH = 0, 1, 2, 3


class Report:
    """Ordered sections of key/value pairs, rendered deterministically."""

    def __init__(self, command):
        self.command = command
        self.sections = {}
        self.trace = []

    def add(self, section, key, value):
        self.sections.setdefault(section, {})[key] = _plain(value)

    def update(self, section, values):
        for k, v in values.items():
            self.add(section, k, v)

    @property
    def passed(self):
        return all(v for sec in self.sections.values() for k, v in sec.items()
                   if k.endswith("_ok") or k == "passed")

    def text(self):
        lines = [f"command: {self.command}", f"status: {'PASS' if self.passed else 'FAIL'}"]
        for sec, body in self.sections.items():
            lines.append(f"[{sec}]")
            lines += [f"  {k} = {_fmt(v)}" for k, v in body.items()]
        return "\n".join(lines) + "\n"

    def summary(self):
        return {"command": self.command, "passed": self.passed, "sections": self.sections}

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.text())
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=False) + "\n")
        if self.trace:
            (out / "trace.txt").write_text("\n".join(self.trace) + "\n")


def _plain(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def run_checks(checks: dict, threads: int):
    """Run independent zero-argument checks on a worker pool; results come
    back in the order of ``checks`` whatever the pool size."""
    names = list(checks)
    if threads <= 1:
        values = [checks[k]() for k in names]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(checks[k]) for k in names]
            values = [f.result() for f in futures]
    return dict(zip(names, values))


# ---------------------------------------------------------------- setup


def _setup(cfg: RunConfig):
    st = build_model(cfg.model)
    graph = causal.build_causal_graph(st, cfg.radius)
    return st, graph


def _params(cfg: RunConfig):
    return steep.SteepParams(**cfg.steep)


def _group(cfg: RunConfig, st):
    return build_group(st, cfg.rotation, cfg.reflection, cfg.time_reflection)


def _write_field(out: Path, name, st, values):
    out.mkdir(parents=True, exist_ok=True)
    fields.write_field_csv(st, values, out / f"{name}.csv")


def _surfaces(cfg: RunConfig, st):
    sm = cfg.surface(st, cfg.surface_minus) if cfg.surface_minus is not None else None
    sp = cfg.surface(st, cfg.surface_plus) if cfg.surface_plus is not None else None
    levels = [(cfg.surface(st, u), a) for u, a in cfg.levels]
    return sm, sp, levels


def _model_section(rep: Report, st, graph):
    rep.update("model", {
        "family": st.family, "shape": list(st.shape), "t_range": [st.t[0], st.t[-1]],
        "x_range": [st.x[0], st.x[-1]], "periodic": st.periodic,
        "nodes": graph.n, "edges": graph.n_edges, "radius": graph.radius,
    })


# ---------------------------------------------------------------- subcommands


def cmd_build(cfg, args, rep: Report):
    st, graph = _setup(cfg)
    _model_section(rep, st, graph)
    res = run_checks({
        "acyclic_ok": lambda: causal.check_causal(graph),
        "push_up_violations": lambda: len(causal.check_push_up(graph)),
        "antisymmetry_violations": lambda: len(causal.check_antisymmetry(graph)),
        "diamond_bound_violations": lambda: causal.check_diamond_bounds(graph),
    }, args.threads)
    res["push_up_ok"] = res["push_up_violations"] == 0
    res["antisymmetry_ok"] = res["antisymmetry_violations"] == 0
    res["diamond_bound_ok"] = res["diamond_bound_violations"] == 0
    rep.update("causality", res)
    if cfg.has_group:
        ga = _group(cfg, st)
        rep.update("group", {
            "order": ga.order, "isometric": ga.is_isometric,
            "orbit_violations": len(symmetry.check_orbit_acausal(graph, ga)),
        })
        rep.add("group", "orbit_acausal_ok", rep.sections["group"]["orbit_violations"] == 0)
    if cfg.edge_list:
        args.out.mkdir(parents=True, exist_ok=True)
        causal.write_edge_list(graph, args.out / "edges.txt")


def cmd_geroch(cfg, args, rep: Report):
    st, graph = _setup(cfg)
    _model_section(rep, st, graph)
    mu = geroch.volume_measure(graph, cfg.damping_scale)
    tm, tp = geroch.geroch_pm(graph, mu)
    _write_field(args.out, "t_minus", st, tm)
    _write_field(args.out, "t_plus", st, tp)
    if args.expect_noncauchy:
        # the volume functions alone are time functions but not Cauchy here
        if cfg.chains is None:
            raise SchemaError("geroch.chains", "required with --expect-noncauchy")
        rep.update("monotonicity", run_checks({
            "t_minus_violations": lambda: geroch.verify_time_function(tm, graph),
            "t_plus_violations": lambda: geroch.verify_time_function(tp, graph),
        }, args.threads))
        cmp_ = geroch.chain_limit_comparison(graph, mu, *cfg.chains)
        rep.update("counterexample", {
            "function": args.expect_noncauchy, "chains_x": list(cmp_.columns),
            "past_limits": list(cmp_.past_limits), "future_limits": list(cmp_.future_limits),
            "gap": cmp_.past_gap, "required_gap": cfg.noncauchy_gap,
            "noncauchy_ok": cmp_.past_gap > cfg.noncauchy_gap,
        })
        mono = rep.sections["monotonicity"]
        mono["monotone_ok"] = mono["t_minus_violations"] == 0 and mono["t_plus_violations"] == 0
        return
    t = geroch.geroch_cauchy(tm, tp)
    _write_field(args.out, "geroch", st, t)
    res = run_checks({
        "t_minus_violations": lambda: geroch.verify_time_function(tm, graph),
        "t_plus_violations": lambda: geroch.verify_time_function(tp, graph),
        "t_violations": lambda: geroch.verify_time_function(t, graph),
    }, args.threads)
    res["monotone_ok"] = sum(res.values()) == 0
    rep.update("monotonicity", res)
    if cfg.cauchy_threshold:
        cr = geroch.verify_cauchy(t, graph, cfg.cauchy_threshold)
        rep.update("cauchy", {"threshold": cfg.cauchy_threshold, "chains": cr.n_chains,
                              "failures": len(cr.failures), "cauchy_ok": cr.passed})
    if cfg.foliation_levels:
        fol = geroch.foliation_export(t, st, cfg.foliation_levels, graph)
        for c, s in zip(fol.levels, fol.surfaces):
            np.savetxt(args.out / f"level_{c:+.3f}.csv", np.column_stack([s.x, s.u]), delimiter=",",
                       header="x,t", comments="")
        rep.update("foliation", {"levels": fol.levels, "acausal_violations": len(fol.acausal_violations),
                                 "acausal_ok": not fol.acausal_violations})


def cmd_steep(cfg, args, rep: Report):
    st, graph = _setup(cfg)
    _model_section(rep, st, graph)
    t_ref = geroch.geroch_time(graph, geroch.volume_measure(graph, cfg.damping_scale))
    res = steep.steep_temporal(graph, t_ref, _params(cfg), args.tolerance_scale)
    rep.trace = res.trace
    rep.update("steep", {"bands_plus": len(res.bands_plus), "bands_minus": len(res.bands_minus)})
    rep.update("steep", res.checks)
    _write_field(args.out, "steep", st, res.field)


def cmd_adapt(cfg, args, rep: Report):
    st, graph = _setup(cfg)
    _model_section(rep, st, graph)
    sm, sp, levels = _surfaces(cfg, st)
    if sm is None or sp is None or not levels:
        raise SchemaError("surfaces", "adapt needs surfaces.minus, surfaces.plus and one entry in surfaces.levels")
    S, a = levels[0]
    res = steep.adapted_temporal(graph, S, sm, sp, cfg.f_minus - a, cfg.f_plus - a, params=_params(cfg),
                                 collar_rows=cfg.collar_rows, tolerance_scale=args.tolerance_scale)
    rep.trace = res.trace
    rep.update("adapted", res.checks)
    _write_field(args.out, "adapted", st, res.field + a)


def cmd_invariant(cfg, args, rep: Report):
    st, graph = _setup(cfg)
    _model_section(rep, st, graph)
    ga = _group(cfg, st)
    rep.update("group", {"order": ga.order, "names": ga.names, "isometric": ga.is_isometric})
    sm, sp, levels = _surfaces(cfg, st)
    steep_req = args.steep or cfg.invariant_steep
    pre = run_checks({
        "orbit_violations": lambda: len(symmetry.check_orbit_acausal(graph, ga)),
        "cone_equivariance_failures": lambda: len(symmetry.cone_equivariance(graph, ga)),
    }, args.threads)
    pre["orbit_acausal_ok"] = pre["orbit_violations"] == 0
    pre["cone_equivariance_ok"] = pre["cone_equivariance_failures"] == 0
    rep.update("group", pre)
    res = symmetry.invariant_temporal(graph, ga, levels, sm, sp, cfg.f_minus, cfg.f_plus, steep=steep_req,
                                      params=_params(cfg), tolerance_scale=args.tolerance_scale)
    rep.trace = res.trace
    rep.add("invariant", "steep_requested", steep_req)
    rep.update("invariant", res.checks)
    _write_field(args.out, "invariant", st, res.field)


def cmd_verify(cfg, args, rep: Report):
    st, graph = _setup(cfg)
    _model_section(rep, st, graph)
    if args.field is None:
        raise SchemaError("--field", "verify needs a stored field CSV")
    f = fields.read_field_csv(st, args.field)
    interior = fields.interior_mask(st)
    tol = steep.tol_h(st, args.tolerance_scale)
    rng = np.random.default_rng(args.seed)
    seeds = rng.choice(graph.n, size=min(64, graph.n), replace=False)
    checks = {
        "violations": lambda: geroch.verify_time_function(f, graph),
        "almost_temporal": lambda: bool(np.all(fields.almost_temporal(st, f)[interior])),
        "min_margin": lambda: float(np.nanmin(fields.steepness_margin(f, st)[interior])),
    }
    if cfg.cauchy_threshold:
        checks["cauchy_failures"] = lambda: len(geroch.verify_cauchy(f, graph, cfg.cauchy_threshold,
                                                                     seeds=seeds).failures)
    if cfg.has_group:
        ga = _group(cfg, st)
        checks["invariance_deviation"] = lambda: symmetry.invariance_deviation(f, ga, st.included)
    res = run_checks(checks, args.threads)
    res["monotone_ok"] = res["violations"] == 0
    res["almost_temporal_ok"] = res["almost_temporal"]
    if args.steep:
        res["steep_ok"] = res["min_margin"] >= 1 - tol
    if "cauchy_failures" in res:
        res["cauchy_ok"] = res["cauchy_failures"] == 0
    if "invariance_deviation" in res:
        res["invariance_ok"] = res["invariance_deviation"] <= symmetry.INVARIANCE_TOL
    rep.update("verify", res)


def cmd_export(cfg, args, rep: Report):
    st, graph = _setup(cfg)
    _model_section(rep, st, graph)
    written = []
    need_geroch = set(cfg.export_fields) & {"geroch", "t_minus", "t_plus", "steep"}
    if need_geroch:
        mu = geroch.volume_measure(graph, cfg.damping_scale)
        tm, tp = geroch.geroch_pm(graph, mu)
        t = geroch.geroch_cauchy(tm, tp)
        table = {"geroch": t, "t_minus": tm, "t_plus": tp}
        for name in ("geroch", "t_minus", "t_plus"):
            if name in cfg.export_fields:
                _write_field(args.out, name, st, table[name])
                written.append(f"{name}.csv")
        if "steep" in cfg.export_fields:
            res = steep.steep_temporal(graph, t, _params(cfg), args.tolerance_scale)
            _write_field(args.out, "steep", st, res.field)
            written.append("steep.csv")
    for name, cmd in (("adapted", "adapt"), ("invariant", "invariant")):
        if name in cfg.export_fields:
            raise SchemaError("export.fields", f"{name!r} is written by the {cmd!r} command")
    args.out.mkdir(parents=True, exist_ok=True)
    causal.write_edge_list(graph, args.out / "edges.txt")
    written.append("edges.txt")
    rep.add("export", "files", written)


COMMANDS = {
    "build": cmd_build,
    "geroch": cmd_geroch,
    "steep": cmd_steep,
    "adapt": cmd_adapt,
    "invariant": cmd_invariant,
    "verify": cmd_verify,
    "export": cmd_export,
}


def build_parser():
    p = argparse.ArgumentParser(prog="cauchytime", description="Discrete Cauchy time functions on sampled 1+1 spacetimes.")
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int, default=0, help="seed for randomized sampling in verify")
    p.add_argument("--tolerance-scale", type=float, default=1.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--steep", action="store_true", help="request (and check) steepness")
    p.add_argument("--expect-noncauchy", choices=["tplus", "tminus"], default=None)
    p.add_argument("--field", type=Path, default=None, help="stored field CSV for verify")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    rep = Report(args.command)
    try:
        cfg = load_config(args.config)
        COMMANDS[args.command](cfg, args, rep)
    except (SchemaError, ConfigurationError, ConstructionError, SurfaceError,
            symmetry.InvarianceError, steep.PreconditionError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except steep.SynthesisFailure as exc:
        rep.trace = list(exc.trace)
        rep.update("failure", {"message": str(exc), "property": exc.prop or "", "passed": False})
        rep.write(args.out)
        print(f"synthesis failure: {exc}", file=sys.stderr)
        print("\n".join(exc.trace[-20:]), file=sys.stderr)
        return EXIT_SYNTH
    rep.write(args.out)
    sys.stdout.write(rep.text())
    return EXIT_OK if rep.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
