"""Command-line interface.

Tabular results are CSV on stdout and, when an output location is known
(``--out`` or the ``RYDMIS_OUT`` environment variable), also files there next
to a ``manifest.json`` written before any result.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import ensemble_bounds_stats, exact_detuning_bounds, recommended_interval
from .dataset import DatasetSpec, build_dataset, load_graphs, save_dataset, save_graphs
from .errors import RydmisError
from .evolution import EvolutionConfig, run, sample_and_repair, simulation_context
from .graphs import (TOY_GRAPH_IDS, UnitDiskGraph, bits_str, greedy_repair, hardness_fraction,
                     independent_set_census, parse_toy_graph_id)
from .hamiltonian import DEFAULT_CONSTANTS, Subspace
from .optimizer import (OptimizationProblem, SimplexConfig, batch_optimize, fit_hp_model, read_results_csv,
                        optimize_schedule, write_results_csv)
from .schedules import (FitModel, build_schedule, discretize_for_hardware, hp_schedule_model, param_names,
                        params_from_vector, params_to_vector, save_hardware_program)

OUT_ENV = "RYDMIS_OUT"


class _Output:
    """Output location of one invocation; the manifest goes first."""

    def __init__(self, out: str | None, command: str, argv: list[str], config: dict, *, required: bool = False,
                 default_name: str = "rydmis-out"):
        root = out or os.environ.get(OUT_ENV)
        if root is None and required:
            root = default_name
        self.path = Path(root) if root else None
        self.is_file = bool(self.path is not None and self.path.suffix.lower() in (".json", ".csv"))
        self.command = command
        self.argv = argv
        self.config = config
        self.files: list[str] = []

    @property
    def directory(self) -> Path | None:
        if self.path is None:
            return None
        return self.path.parent if self.is_file else self.path

    def manifest(self, planned: list[str]):
        if self.path is None:
            return
        d = self.directory
        d.mkdir(parents=True, exist_ok=True)
        name = self.path.name + ".manifest.json" if self.is_file else "manifest.json"
        doc = {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "seed": self.config.get("seed"),
            "version": __version__,
            "started": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "outputs": [str(d / p) for p in planned],
        }
        _atomic_write(d / name, json.dumps(doc, indent=1, default=str) + "\n")

    def target(self, name: str) -> Path | None:
        if self.path is None:
            return None
        return self.path if self.is_file else self.path / name

    def write(self, name: str, text: str):
        p = self.target(name)
        if p is not None:
            _atomic_write(p, text)
            self.files.append(str(p))


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _load(paths, spacing) -> list[UnitDiskGraph]:
    graphs = []
    for p in paths:
        for g in load_graphs(p):
            if spacing is not None:
                g = UnitDiskGraph(g.sites, float(spacing), g.name)
            graphs.append(g)
    if not graphs:
        raise RydmisError("no graphs found in the input files")
    return graphs


def _spacing(args) -> float:
    return 5.0 if args.a is None else args.a


def _schedule_params(args, graph, hp):
    fam = args.protocol
    if getattr(args, "params", None):
        vals = dict(kv.split("=", 1) for kv in args.params.split(","))
        unknown = set(vals) - set(param_names(fam))
        if unknown:
            raise RydmisError(f"unknown {fam} parameters {sorted(unknown)}; expected {param_names(fam)}")
        base = asdict(hp_schedule_model(hp, fam, "limit", t_f=args.tf, spacing_um=graph.spacing_um))
        base.update({k: float(v) for k, v in vals.items()})
        return params_from_vector(fam, [base[n] for n in param_names(fam)])
    if args.model == "fitted":
        if not args.model_file:
            raise RydmisError("--model fitted needs --model-file (written by the fit command)")
        model = FitModel.from_dict(json.loads(Path(args.model_file).read_text()))
        return hp_schedule_model(hp, fam, model, t_f=args.tf, spacing_um=graph.spacing_um)
    return hp_schedule_model(hp, fam, "limit", t_f=args.tf, spacing_um=graph.spacing_um)


# -- subcommands ---------------------------------------------------------------

def cmd_hp(args, out: _Output):
    graphs = _load(args.graphs, args.a)
    rows = []
    for g in graphs:
        c = independent_set_census(g)
        hp = hardness_fraction(c)
        m = c.independence_number
        rows.append([g.name, g.order, m, c.degeneracy(m), c.degeneracy(m - 1), repr(float(hp)),
                     f"{hp.numerator}/{hp.denominator}"])
    text = _csv(["graph_id", "N", "mis_size", "D_mis", "D_mis_minus_1", "HP", "HP_exact"], rows)
    out.manifest(["hp.csv"])
    out.write("hp.csv", text)
    return text


def cmd_bounds(args, out: _Output):
    if args.recommended:
        lb, ub = recommended_interval(_spacing(args))
        text = _csv(["a_um", "delta_lb_mhz", "delta_ub_mhz"], [[_spacing(args), f"{lb:.3f}", f"{ub:.3f}"]])
        out.manifest(["recommended.csv"])
        out.write("recommended.csv", text)
        return text
    if not args.graphs:
        raise RydmisError("bounds needs graph files or --recommended")
    graphs = _load(args.graphs, args.a)
    hps = [float(hardness_fraction(independent_set_census(g))) for g in graphs]
    if args.stats:
        st = ensemble_bounds_stats(graphs, hps)
        rows = [[k if k is not None else "out", b.count, *map(_fmt, b.lower_quantiles), *map(_fmt, b.upper_quantiles)]
                for k, b in st.per_bin.items()]
        q = ["min", "q25", "median", "q75", "max"]
        text = _csv(["hp_bin", "count"] + [f"dlb_over_v0_{x}" for x in q] + [f"dub_over_v0_{x}" for x in q], rows)
        text += _csv(["n_graphs", "frac_lb_le_v0_12", "frac_ub_ge_v0_8", "frac_both", "n_infeasible"],
                     [[st.n_graphs, _fmt(st.fraction_lower_ok), _fmt(st.fraction_upper_ok),
                       _fmt(st.fraction_both_ok), st.n_infeasible]])
        out.manifest(["bounds_stats.csv"])
        out.write("bounds_stats.csv", text)
        return text
    rows = []
    for g, hp in zip(graphs, hps):
        b = exact_detuning_bounds(g)
        rows.append([g.name, g.order, _fmt(hp), _fmt(b.lower_over_v0),
                     "inf" if b.unbounded else _fmt(b.upper_over_v0), int(b.feasible)])
    text = _csv(["graph_id", "N", "HP", "dlb_over_v0", "dub_over_v0", "feasible"], rows)
    out.manifest(["bounds.csv"])
    out.write("bounds.csv", text)
    return text


def cmd_simulate(args, out: _Output):
    graphs = _load(args.graphs, args.a)
    cfg = EvolutionConfig(integrator=args.integrator, rel_tol=args.rtol, abs_tol=args.atol)
    names = param_names(args.protocol)
    rows, dens_rows, hist_rows, series = [], [], [], []
    planned = ["simulate.csv", "densities.csv"] + (["shots.csv"] if args.shots else []) + \
        (["schedule_series.csv"] if args.series else [])
    out.manifest(planned)
    for g in graphs:
        census = independent_set_census(g)
        hp = float(hardness_fraction(census))
        p = _schedule_params(args, g, hp)
        sched = build_schedule(args.protocol, p, g, args.tf)
        ctx = simulation_context(g, args.subspace, census=census)
        res = run(ctx, sched, cfg)
        rows.append([g.name, g.order, _fmt(hp), args.protocol, *map(_fmt, params_to_vector(p).tolist()),
                     _fmt(res.p_mis), _fmt(res.norm_drift), res.step_count])
        dens_rows += [[g.name, i, _fmt(float(d))] for i, d in enumerate(res.densities)]
        if args.shots:
            s = sample_and_repair(res.final_state, args.shots, args.seed, g, census)
            hist_rows += [[g.name, k, v, int(k == s.independence_number)] for k, v in s.size_histogram.items()]
        if args.series:
            smp = sched.sample(args.series)
            series += [[g.name, _fmt(float(t)), _fmt(float(o)), _fmt(float(d)), _fmt(float(f))]
                       for t, o, d, f in zip(smp["t_us"], smp["omega_mhz"], smp["delta_mhz"], smp["phi_rad"])]
    text = _csv(["graph_id", "N", "HP", "protocol", *names, "p_mis", "norm_drift", "step_count"], rows)
    out.write("simulate.csv", text)
    out.write("densities.csv", _csv(["graph_id", "atom", "density"], dens_rows))
    if args.shots:
        out.write("shots.csv", _csv(["graph_id", "set_size", "count", "is_mis"], hist_rows))
    if args.series:
        out.write("schedule_series.csv", _csv(["graph_id", "t_us", "omega_mhz", "delta_mhz", "phi_rad"], series))
    return text


def _simplex(args) -> SimplexConfig:
    return SimplexConfig(max_evals=args.max_evals, restarts=args.restarts)


def cmd_optimize(args, out: _Output):
    graphs = _load(args.graphs, args.a)
    names = param_names(args.protocol)
    out.manifest(["optimize.csv", "trace.csv"])
    rows, trace = [], []
    for g in graphs:
        census = independent_set_census(g)
        prob = OptimizationProblem(g, args.protocol, args.tf, args.subspace, census=census)
        res = optimize_schedule(prob, _simplex(args), args.seed)
        rows.append([g.name, g.order, _fmt(float(hardness_fraction(census))), args.protocol,
                     *map(_fmt, res.best_x.tolist()), _fmt(res.best_p_mis), _fmt(res.initial_p_mis),
                     res.n_evals, int(res.converged)])
        trace += [[g.name, k, *map(_fmt, r.x), _fmt(r.p_mis), int(r.ok)] for k, r in enumerate(res.trace)]
    text = _csv(["graph_id", "N", "HP", "protocol", *names, "p_mis", "p_mis_initial", "n_evals", "converged"], rows)
    out.write("optimize.csv", text)
    out.write("trace.csv", _csv(["graph_id", "eval", *names, "p_mis", "ok"], trace))
    return text


def cmd_batch_optimize(args, out: _Output):
    graphs = _load(args.graphs, args.a)
    out.manifest(["results.csv"])
    rows = batch_optimize([(g.name or f"g{k}", g) for k, g in enumerate(graphs)], args.protocol, _simplex(args),
                          seed=args.seed, jobs=args.jobs, t_f=args.tf, subspace=args.subspace,
                          checkpoint=out.target("results.csv"))
    write_results_csv(out.target("results.csv"), rows)
    return Path(out.target("results.csv")).read_text()


def cmd_fit(args, out: _Output):
    rows = read_results_csv(args.results)
    model = fit_hp_model(rows, args.protocol, t_f=args.tf, spacing_um=_spacing(args))
    names = param_names(args.protocol)
    hs = np.geomspace(0.375, 12.0, 64)
    series = [[_fmt(float(h)), *[_fmt(model.curves[n](h)) for n in names]] for h in hs]
    out.manifest(["fit.json", "fit_series.csv"])
    out.write("fit.json", json.dumps(model.to_dict(), indent=1) + "\n")
    out.write("fit_series.csv", _csv(["HP", *names], series))
    text = _csv(["parameter", "p0", "p_inf", "h_p", "r2", "residual_rms"],
                [[n, _fmt(c.p0), _fmt(c.p_inf), _fmt(c.h_p), _fmt(model.r2[n]), _fmt(model.residual_rms[n])]
                 for n, c in model.curves.items()])
    return text


def _parse_range(text: str) -> tuple[int, ...]:
    if "-" in text:
        a, b = text.split("-", 1)
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(x) for x in text.split(","))


def cmd_dataset_gen(args, out: _Output):
    orders = _parse_range(args.orders)
    spec = DatasetSpec(orders=orders, per_order=args.per_order, per_bin=args.per_order * len(orders) // 5)
    out.manifest(["graphs.json", "dataset_manifest.json"])
    ds = build_dataset(spec, args.seed, draws_per_order=args.draws)
    save_dataset(out.directory if not out.is_file else out.directory, ds)
    out.files += [str(out.directory / "graphs.json"), str(out.directory / "dataset_manifest.json")]
    return _csv(["graph_id", "N", "HP"], [[e.graph.name, e.order, _fmt(float(e.hp))] for e in ds.entries])


def cmd_toy(args, out: _Output):
    ids = list(TOY_GRAPH_IDS) if args.all or not args.id else [i.upper() for i in args.id]
    graphs = [parse_toy_graph_id(i, _spacing(args)) for i in ids]
    out.manifest(["toy_graphs.json"])
    p = out.target("toy_graphs.json")
    save_graphs(p, graphs)
    out.files.append(str(p))
    return _csv(["graph_id", "N"], [[g.name, g.order] for g in graphs])


def cmd_export_schedule(args, out: _Output):
    graphs = _load(args.graphs, args.a)
    names = [f"schedule_{g.name or k}.json" for k, g in enumerate(graphs)]
    out.manifest(names if not out.is_file else [out.path.name])
    rows = []
    for g, name in zip(graphs, names):
        hp = float(hardness_fraction(independent_set_census(g)))
        sched = build_schedule(args.protocol, _schedule_params(args, g, hp), g, args.tf)
        prog = discretize_for_hardware(sched, args.step, phase_sign=args.phase_sign)
        p = out.target(name)
        save_hardware_program(prog, p)
        out.files.append(str(p))
        rows.append([g.name, prog.n_intervals, _fmt(prog.max_clamp), str(p)])
    return _csv(["graph_id", "intervals", "max_clamp_mhz", "path"], rows)


def cmd_postprocess(args, out: _Output):
    graph = _load([args.graph], args.a)[0]
    census = independent_set_census(graph)
    shots = []
    for ln, line in enumerate(Path(args.shots).read_text().splitlines(), 1):
        s = line.strip().split(",")[0].strip()
        if not s or s.startswith("#") or s.lower() in ("bitstring", "shot"):
            continue
        if len(s) != graph.order or set(s) - {"0", "1"}:
            raise RydmisError(f"{args.shots}:{ln}: expected a {graph.order}-character 0/1 string, got {s!r}")
        shots.append(tuple(int(c) for c in s))
    rng = np.random.default_rng(args.seed)
    rows, sizes = [], {}
    for s in shots:
        r = greedy_repair(s, graph, rng)
        k = sum(r)
        sizes[k] = sizes.get(k, 0) + 1
        rows.append([bits_str(s), bits_str(r), k, int(k == census.independence_number)])
    out.manifest(["repaired.csv", "size_histogram.csv"])
    out.write("repaired.csv", _csv(["measured", "repaired", "size", "is_mis"], rows))
    text = _csv(["set_size", "count"], sorted(sizes.items()))
    out.write("size_histogram.csv", text)
    return text


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--a", type=float, default=None, help="lattice spacing in um (default: file value or 5)")
    common.add_argument("--tf", type=float, default=1.0, help="evolution time in us")
    common.add_argument("--subspace", choices=[s.value for s in Subspace], default="nn")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", default=None, help=f"output directory or file (default ${OUT_ENV})")

    p = argparse.ArgumentParser(prog="rydmis", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    def protocol_flags(sp, model=True):
        sp.add_argument("--protocol", choices=["lin4", "lin6", "cd"], default="lin4")
        if model:
            sp.add_argument("--model", choices=["limit", "fitted"], default="limit")
            sp.add_argument("--model-file", default=None)
            sp.add_argument("--params", default=None, help="explicit parameters, e.g. tau_i=0.3,delta_f=40")

    sp = add("hp", cmd_hp, "independent-set census and hardness parameter")
    sp.add_argument("graphs", nargs="+")

    sp = add("bounds", cmd_bounds, "exact detuning bounds or ensemble statistics")
    sp.add_argument("graphs", nargs="*")
    sp.add_argument("--recommended", action="store_true", help="print the recommended window (V0/12, V0/8)")
    sp.add_argument("--stats", action="store_true", help="per-HP-bin statistics instead of per-graph rows")

    sp = add("simulate", cmd_simulate, "evolve graphs under a protocol")
    sp.add_argument("graphs", nargs="+")
    protocol_flags(sp)
    sp.add_argument("--integrator", choices=["bs32", "rk2"], default="bs32")
    sp.add_argument("--rtol", type=float, default=1e-8)
    sp.add_argument("--atol", type=float, default=1e-8)
    sp.add_argument("--shots", type=int, default=0, help="sample and repair this many shots")
    sp.add_argument("--series", type=int, default=0, help="emit the schedule sampled at this many points")

    for name, fn, help_ in (("optimize", cmd_optimize, "optimise schedule parameters per graph"),
                            ("batch-optimize", cmd_batch_optimize, "checkpointed optimisation over a graph file")):
        sp = add(name, fn, help_)
        sp.add_argument("graphs", nargs="+")
        protocol_flags(sp, model=False)
        sp.add_argument("--max-evals", type=int, default=400)
        sp.add_argument("--restarts", type=int, default=2)

    sp = add("fit", cmd_fit, "fit the hardness model to batch results")
    sp.add_argument("results")
    protocol_flags(sp, model=False)

    sp = add("dataset-gen", cmd_dataset_gen, "generate a pool and select a representative dataset")
    sp.add_argument("--orders", default="8-17")
    sp.add_argument("--per-order", type=int, default=50)
    sp.add_argument("--draws", type=int, default=1000, help="uniform draws per order")

    sp = add("toy", cmd_toy, "write toy graphs from their identifiers")
    sp.add_argument("--id", action="append", help="three-hex-digit identifier, repeatable")
    sp.add_argument("--all", action="store_true")

    sp = add("export-schedule", cmd_export_schedule, "hardware JSON schedule per graph")
    sp.add_argument("graphs", nargs="+")
    protocol_flags(sp)
    sp.add_argument("--step", type=float, default=DEFAULT_CONSTANTS.hw_step_us)
    sp.add_argument("--phase-sign", type=int, choices=[1, -1], default=1)

    sp = add("postprocess", cmd_postprocess, "greedy repair of measured shots")
    sp.add_argument("shots", help="file with one 0/1 bitstring per line")
    sp.add_argument("graph")
    return p


_NEEDS_OUT = {"toy": "toy_graphs.json", "export-schedule": "rydmis-out", "batch-optimize": "rydmis-out",
              "fit": "rydmis-out", "dataset-gen": "rydmis-out"}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {k: v for k, v in vars(args).items() if k != "fn"}
    out = _Output(args.out, args.command, argv, config, required=args.command in _NEEDS_OUT,
                  default_name=_NEEDS_OUT.get(args.command, "rydmis-out"))
    try:
        text = args.fn(args, out)
    except (RydmisError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
