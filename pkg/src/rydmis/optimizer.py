"""Per-graph schedule optimisation, batch runs and hardness-model fitting."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize, minimize_scalar

from .errors import ModelError, RydmisError
from .evolution import EvolutionConfig, SimulationContext, run, simulation_context
from .graphs import IndependentSetCensus, UnitDiskGraph, hardness_parameter, independent_set_census
from .hamiltonian import DEFAULT_CONSTANTS, PhysicalConstants
from .schedules import (FitModel, GraphTraces, Lin4Params, SaturatingCurve, Schedule, build_schedule,
                        graph_traces, limit_params, param_names, params_from_vector, params_to_vector,
                        recommended_upper_detuning)


def default_boxes(family: str, t_f: float = 1.0, spacing_um: float = 5.0,
                  constants: PhysicalConstants = DEFAULT_CONSTANTS) -> dict[str, tuple[float, float]]:
    """Search boxes; every point inside yields a valid schedule of the family."""
    dub = recommended_upper_detuning(spacing_um, constants)
    delta_i = (-2.0 * dub, -constants.delta_noise)
    delta_f = (0.05 * dub, 2.0 * dub)
    family = family.lower()
    if family == "cd":
        return {"delta_i": delta_i, "delta_f": delta_f, "nu": (0.0, constants.v0(spacing_um))}
    boxes = {
        "tau_i": (0.01 * t_f, 0.7 * t_f),
        "tau_f": (0.01 * t_f, 0.3 * t_f),
        "delta_i": delta_i,
        "delta_f": delta_f,
    }
    if family == "lin6":
        boxes["tau_m"] = (0.05 * t_f, 0.95 * t_f)
        boxes["delta_m"] = (-2.0 * dub, 2.0 * dub)
    elif family != "lin4":
        raise RydmisError(f"unknown protocol family {family!r}")
    return boxes


def baseline_params(t_f: float = 1.0, spacing_um: float = 5.0,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> Lin4Params:
    """Fixed symmetric linear schedule: equal 10 % ramps, Delta from -Delta_UB to +Delta_UB."""
    dub = recommended_upper_detuning(spacing_um, constants)
    return Lin4Params(0.1 * t_f, 0.1 * t_f, -dub, dub)


@dataclass
class OptimizationProblem:
    graph: UnitDiskGraph
    family: str
    t_f: float = 1.0
    subspace: str = "nn"
    constants: PhysicalConstants = DEFAULT_CONSTANTS
    census: IndependentSetCensus | None = None
    boxes: dict | None = None
    x0: Sequence[float] | None = None
    evolution: EvolutionConfig | None = None

    def __post_init__(self):
        self.family = self.family.lower()
        self.names = param_names(self.family)
        if self.census is None:
            self.census = independent_set_census(self.graph)
        if self.boxes is None:
            self.boxes = default_boxes(self.family, self.t_f, self.graph.spacing_um, self.constants)
        self._check_boxes()
        self.lo = np.array([self.boxes[n][0] for n in self.names], dtype=float)
        self.hi = np.array([self.boxes[n][1] for n in self.names], dtype=float)
        if self.x0 is None:
            self.x0 = params_to_vector(limit_params(self.family, self.t_f, self.graph.spacing_um, self.constants))
        self.x0 = np.clip(np.asarray(self.x0, dtype=float), self.lo, self.hi)
        self._ctx: SimulationContext | None = None
        self._traces: GraphTraces | None = graph_traces(self.graph) if self.family == "cd" else None

    def _check_boxes(self):
        missing = [n for n in self.names if n not in self.boxes]
        if missing:
            raise RydmisError(f"missing search boxes for {missing}")
        problems = [n for n in self.names if not self.boxes[n][0] < self.boxes[n][1]]
        b = self.boxes
        if b["delta_i"][1] > -self.constants.delta_noise:
            problems.append("delta_i box reaches above -delta_noise")
        if b["delta_f"][0] <= 0:
            problems.append("delta_f box reaches non-positive values")
        if self.family != "cd":
            if b["tau_i"][0] <= 0 or b["tau_f"][0] <= 0:
                problems.append("ramp-time boxes must exclude zero")
            if b["tau_i"][1] + b["tau_f"][1] > self.t_f:
                problems.append("tau_i + tau_f can exceed t_f")
        if self.family == "lin6" and not 0 < b["tau_m"][0] <= b["tau_m"][1] < self.t_f:
            problems.append("tau_m box must lie inside (0, t_f)")
        if problems:
            raise RydmisError("invalid search boxes: " + "; ".join(problems))

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def context(self) -> SimulationContext:
        if self._ctx is None:
            self._ctx = simulation_context(self.graph, self.subspace, self.constants, self.census)
        return self._ctx

    # sigmoid reparametrisation of the box
    def to_x(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.lo + (self.hi - self.lo) * (0.5 * (1.0 + np.tanh(0.5 * z)))

    def to_z(self, x) -> np.ndarray:
        u = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        u = np.clip(u, 1e-9, 1.0 - 1e-9)
        return np.log(u / (1.0 - u))

    def schedule(self, x) -> Schedule:
        return build_schedule(self.family, params_from_vector(self.family, x), self.graph, self.t_f,
                              self.constants, self._traces)

    def evaluate(self, x) -> float:
        return run(self.context, self.schedule(x), self.evolution, self.constants).p_mis

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_ctx"] = None
        return state


@dataclass(frozen=True)
class SimplexConfig:
    max_evals: int = 400  # total budget across restarts
    x_tol: float = 1e-4  # in the reparametrised coordinates
    f_tol: float = 1e-5
    restarts: int = 2
    initial_scale: float = 0.1  # fraction of each box
    restart_jitter: float = 0.05  # fraction of each box

    def __post_init__(self):
        if self.max_evals < 1 or self.restarts < 0:
            raise RydmisError("max_evals must be >= 1 and restarts >= 0")
        for name in ("x_tol", "f_tol", "initial_scale"):
            if not getattr(self, name) > 0:
                raise RydmisError(f"{name} must be positive")


@dataclass(frozen=True)
class EvalRecord:
    x: tuple[float, ...]
    p_mis: float
    ok: bool


@dataclass
class OptimizationResult:
    family: str
    names: tuple[str, ...]
    best_x: np.ndarray
    best_p_mis: float
    initial_p_mis: float
    trace: list[EvalRecord]
    n_failed: int
    converged: bool

    @property
    def best_params(self):
        return params_from_vector(self.family, self.best_x)

    @property
    def n_evals(self) -> int:
        return len(self.trace)


class _BudgetExhausted(Exception):
    pass


def _initial_simplex(problem: OptimizationProblem, x_start: np.ndarray, scale: float) -> np.ndarray:
    u0 = np.clip((x_start - problem.lo) / (problem.hi - problem.lo), 1e-6, 1 - 1e-6)
    verts = [u0]
    for k in range(problem.dim):
        u = u0.copy()
        u[k] = u0[k] + scale if u0[k] + scale < 1 - 1e-6 else u0[k] - scale
        verts.append(u)
    return problem.to_z(problem.lo + np.array(verts) * (problem.hi - problem.lo))


def optimize_schedule(problem: OptimizationProblem, config: SimplexConfig | None = None,
                      seed: int = 0) -> OptimizationResult:
    """Maximise P_MIS over the box with Nelder-Mead; best point over all restarts."""
    config = SimplexConfig() if config is None else config
    rng = np.random.default_rng(seed)
    trace: list[EvalRecord] = []
    cache: dict[bytes, float] = {}
    best = {"x": problem.x0.copy(), "p": -1.0}
    failures: list[str] = []

    def objective(z):
        x = problem.to_x(z)
        key = x.tobytes()
        if key in cache:
            return -cache[key]
        if len(trace) >= config.max_evals:
            raise _BudgetExhausted
        try:
            p = problem.evaluate(x)
            ok = True
        except RydmisError as exc:
            failures.append(str(exc))
            p, ok = 0.0, False
        cache[key] = p
        trace.append(EvalRecord(tuple(float(v) for v in x), float(p), ok))
        if ok and p > best["p"]:
            best["x"], best["p"] = x.copy(), p
        return -p

    objective(problem.to_z(problem.x0))
    initial = trace[0].p_mis
    converged = False
    start = problem.x0.copy()
    for r in range(config.restarts + 1):
        if len(trace) + problem.dim + 1 > config.max_evals:
            break
        if r > 0:
            jitter = rng.normal(0.0, config.restart_jitter, problem.dim) * (problem.hi - problem.lo)
            start = np.clip(best["x"] + jitter, problem.lo, problem.hi)
        simplex = _initial_simplex(problem, start, config.initial_scale)
        try:
            res = minimize(objective, simplex[0], method="Nelder-Mead",
                           options={"initial_simplex": simplex, "xatol": config.x_tol,
                                    "fatol": config.f_tol, "maxfev": config.max_evals})
            converged = bool(res.success)
        except _BudgetExhausted:
            converged = False
            break
    if not any(rec.ok for rec in trace):
        raise RydmisError(f"all {len(trace)} evaluations failed; first error: {failures[0]}")
    return OptimizationResult(problem.family, problem.names, best["x"], float(best["p"]), initial,
                              trace, len(failures), converged)


# -- batch runs -------------------------------------------------------------

@dataclass
class BatchRow:
    graph_id: str
    order: int
    hp: float
    family: str
    params: dict[str, float]
    p_mis: float
    n_evals: int
    seed: int
    error: str = ""


def graph_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _optimize_one(args):
    gid, graph, family, t_f, subspace, config, seed, constants, evolution = args
    try:
        census = independent_set_census(graph)
        hp = hardness_parameter(census)
        problem = OptimizationProblem(graph, family, t_f, subspace, constants, census, evolution=evolution)
        res = optimize_schedule(problem, config, seed)
        return BatchRow(gid, graph.order, hp, family, dict(zip(res.names, res.best_x.tolist())),
                        res.best_p_mis, res.n_evals, seed)
    except RydmisError as exc:
        hp = float("nan")
        try:
            hp = hardness_parameter(independent_set_census(graph))
        except RydmisError:
            pass
        return BatchRow(gid, graph.order, hp, family, {}, float("nan"), 0, seed, str(exc))


def batch_optimize(graphs: Iterable, family: str, config: SimplexConfig | None = None, *, seed: int = 0,
                   jobs: int = 1, t_f: float = 1.0, subspace: str = "nn",
                   constants: PhysicalConstants = DEFAULT_CONSTANTS, checkpoint: str | Path | None = None,
                   evolution: EvolutionConfig | None = None) -> list[BatchRow]:
    """Optimise every graph; rows come back in input order.

    ``graphs`` holds ``(graph_id, graph)`` pairs or bare graphs.  With a
    ``checkpoint`` path the results CSV is rewritten after each finished
    graph and graphs already present there are skipped on the next call.
    """
    items = []
    for k, g in enumerate(graphs):
        gid, graph = g if isinstance(g, tuple) else (g.name or f"g{k}", g)
        items.append((str(gid), graph))
    if not items:
        raise RydmisError("batch optimisation needs at least one graph")
    config = SimplexConfig() if config is None else config
    done: dict[str, BatchRow] = {}
    if checkpoint is not None and Path(checkpoint).exists():
        done = {r.graph_id: r for r in read_results_csv(checkpoint) if r.family == family.lower()}
    todo = [(i, gid, g) for i, (gid, g) in enumerate(items) if gid not in done]
    tasks = [(gid, g, family.lower(), t_f, subspace, config, graph_seed(seed, i), constants, evolution)
             for i, gid, g in todo]

    def record(row):
        done[row.graph_id] = row
        if checkpoint is not None:
            write_results_csv(checkpoint, [done[gid] for gid, _ in items if gid in done])

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_optimize_one, tasks):
                record(row)
    else:
        for t in tasks:
            record(_optimize_one(t))
    return [done[gid] for gid, _ in items]


RESULT_FIELDS = ("graph_id", "N", "HP", "protocol", "params", "p_mis", "n_evals", "seed", "error")


def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def results_csv_text(rows: Sequence[BatchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        w.writerow([r.graph_id, r.order, repr(r.hp), r.family, json.dumps(r.params),
                    repr(r.p_mis), r.n_evals, r.seed, r.error])
    return buf.getvalue()


def write_results_csv(path, rows: Sequence[BatchRow]) -> None:
    _atomic_write(path, results_csv_text(rows))


def read_results_csv(path) -> list[BatchRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(BatchRow(rec["graph_id"], int(rec["N"]), float(rec["HP"]), rec["protocol"],
                                 json.loads(rec["params"]), float(rec["p_mis"]), int(rec["n_evals"]),
                                 int(rec["seed"]), rec.get("error", "")))
    return rows


# -- hardness model fit -------------------------------------------------------

MIN_FIT_ROWS = 20


def _fit_curve(h: np.ndarray, y: np.ndarray) -> tuple[SaturatingCurve, float, float, bool]:
    """Least-squares fit of y = p_inf + (p0 - p_inf) exp(-h / h_p)."""
    sst = float(np.sum((y - y.mean()) ** 2))
    scale_y = max(float(np.max(np.abs(y))), 1e-300)
    if sst <= (1e-12 * scale_y) ** 2 * y.size:
        c = float(y.mean())
        return SaturatingCurve(c, c, float(np.exp(np.mean(np.log(h))))), 1.0, 0.0, True

    def linear_part(log_hp):
        e = np.exp(-h / math.exp(log_hp))
        a = np.column_stack([np.ones_like(h), e])
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        r = a @ coef - y
        return coef, float(r @ r)

    grid = np.linspace(math.log(h.min() / 10), math.log(h.max() * 10), 241)
    ss = [linear_part(g)[1] for g in grid]
    k = int(np.argmin(ss))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    ref = minimize_scalar(lambda g: linear_part(g)[1], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    log_hp = float(ref.x) if ref.fun <= ss[k] else float(grid[k])
    (p_inf, amp), _ = linear_part(log_hp)

    def resid(theta):
        p0, pinf, lh = theta
        return pinf + (p0 - pinf) * np.exp(-h / math.exp(lh)) - y

    pol = least_squares(resid, [p_inf + amp, p_inf, log_hp], xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        x_scale=[scale_y, scale_y, 1.0])
    p0, pinf, lh = pol.x
    if np.sum(pol.fun ** 2) > np.sum(resid([p_inf + amp, p_inf, log_hp]) ** 2):
        p0, pinf, lh = p_inf + amp, p_inf, log_hp
    curve = SaturatingCurve(float(p0), float(pinf), float(math.exp(lh)))
    r = curve(h) - y
    ssr = float(r @ r)
    return curve, 1.0 - ssr / sst, math.sqrt(ssr / y.size), False


def fit_hp_model(rows: Sequence, family: str, *, t_f: float = 1.0, spacing_um: float = 5.0) -> FitModel:
    """Fit every schedule parameter against HP with the saturating form.

    ``rows`` are :class:`BatchRow` objects or ``(hp, params)`` pairs where
    ``params`` maps parameter names to values.
    """
    family = family.lower()
    names = param_names(family)
    pts = []
    for r in rows:
        hp, params = (r.hp, r.params) if isinstance(r, BatchRow) else r
        if isinstance(r, BatchRow) and (r.error or r.family != family):
            continue
        if not isinstance(params, dict):
            params = asdict(params)
        pts.append((float(hp), [float(params[n]) for n in names]))
    if len(pts) < MIN_FIT_ROWS:
        raise ModelError(f"fitting needs at least {MIN_FIT_ROWS} successful rows, got {len(pts)}")
    h = np.array([p[0] for p in pts])
    if not np.all(h > 0) or h.max() / h.min() < 10.0:
        raise ModelError(f"HP values span {h.min():.3g}..{h.max():.3g}; at least one decade is required")
    vals = np.array([p[1] for p in pts])
    curves, r2, rms, degenerate = {}, {}, {}, []
    for j, n in enumerate(names):
        c, rr, rm, deg = _fit_curve(h, vals[:, j])
        curves[n], r2[n], rms[n] = c, rr, rm
        if deg:
            degenerate.append(n)
    return FitModel(family, t_f, spacing_um, curves, r2, rms, tuple(degenerate))
