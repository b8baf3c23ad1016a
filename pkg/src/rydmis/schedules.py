"""Drive schedules (Omega(t), Delta(t), phi(t)) and their hardware form.

Families:

* ``lin4``: Omega ramps up over tau_i, holds Omega_max, ramps down over
  tau_f; Delta is a single linear ramp delta_i -> delta_f.
* ``lin6``: same Omega; Delta passes through an interior knot (tau_m, delta_m).
* ``cd``: smooth adiabatic base plus a graph-dependent counterdiabatic term
  carried by the drive phase, interpolated by nu between the
  interaction-free gauge (nu = 0) and the full variational one (nu = V0).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import FormatError, ModelError, ScheduleError
from .graphs import UnitDiskGraph
from .hamiltonian import DEFAULT_CONSTANTS, PhysicalConstants, unit_interactions

_TIME_EPS = 1e-12


class PiecewiseLinearCurve:
    """Linear interpolation through (times, values); times start at 0."""

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ScheduleError(f"times and values must be 1-D of equal length, got {t.shape} and {v.shape}")
        if t.size < 2:
            raise ScheduleError("a piecewise linear curve needs at least two breakpoints")
        if t[0] != 0.0:
            raise ScheduleError(f"first breakpoint must be t = 0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise ScheduleError("breakpoint times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ScheduleError("breakpoints must be finite")
        self.times = t
        self.values = v

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        ta = np.asarray(t, dtype=float)
        tol = _TIME_EPS * max(1.0, self.duration)
        if np.any(ta < -tol) or np.any(ta > self.duration + tol):
            raise ScheduleError(f"evaluation time outside [0, {self.duration}]")
        out = np.interp(ta, self.times, self.values)
        return float(out) if np.ndim(out) == 0 else out

    def __eq__(self, other):
        return (isinstance(other, PiecewiseLinearCurve)
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"PiecewiseLinearCurve(times={self.times.tolist()}, values={self.values.tolist()})"

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "values": self.values.tolist()}


# -- parameter sets -------------------------------------------------------

@dataclass(frozen=True)
class Lin4Params:
    tau_i: float
    tau_f: float
    delta_i: float
    delta_f: float


@dataclass(frozen=True)
class Lin6Params:
    tau_i: float
    tau_f: float
    delta_i: float
    delta_f: float
    tau_m: float
    delta_m: float


@dataclass(frozen=True)
class CDParams:
    delta_i: float
    delta_f: float
    nu: float


FAMILY_PARAMS = {
    "lin4": Lin4Params,
    "lin6": Lin6Params,
    "cd": CDParams,
}


def param_names(family: str) -> tuple[str, ...]:
    cls = _family_class(family)
    return tuple(cls.__dataclass_fields__)


def _family_class(family: str):
    try:
        return FAMILY_PARAMS[family.lower()]
    except (KeyError, AttributeError):
        raise ScheduleError(f"unknown protocol family {family!r}; choose lin4, lin6 or cd") from None


def params_from_vector(family: str, values: Sequence[float]):
    cls = _family_class(family)
    names = param_names(family)
    if len(values) != len(names):
        raise ScheduleError(f"{family} takes {len(names)} parameters, got {len(values)}")
    return cls(*(float(v) for v in values))


def params_to_vector(params) -> np.ndarray:
    return np.array(list(asdict(params).values()), dtype=float)


# -- schedule value object ------------------------------------------------

class PiecewiseConstant(NamedTuple):
    times: np.ndarray  # n + 1 interval boundaries
    values: np.ndarray  # n interval values


@dataclass(frozen=True)
class CDDrive:
    """Analytic counterdiabatic drive; ``t1_eff = nu T1^(0)``, ``t2_eff = nu^2 T2^(0)``."""

    delta_i: float
    delta_f: float
    t_f: float
    omega_max: float
    kappa: float
    t1_eff: float
    t2_eff: float

    def packed(self) -> np.ndarray:
        return np.array([self.delta_i, self.delta_f, self.t_f, self.omega_max,
                         self.kappa, self.t1_eff, self.t2_eff])

    def components(self, t):
        base = CDBase(self.delta_i, self.delta_f, self.t_f, self.omega_max)(t)
        om = self.kappa * base.omega
        dom = self.kappa * base.domega
        return om, dom, base.delta, base.ddelta, cd_amplitude(om, dom, base.delta, base.ddelta,
                                                              self.t1_eff, self.t2_eff)


@dataclass(frozen=True)
class Schedule:
    duration: float
    family: str
    params: object = None
    omega_curve: PiecewiseLinearCurve | None = None
    delta_curve: PiecewiseLinearCurve | None = None
    phi_steps: PiecewiseConstant | None = None
    cd: CDDrive | None = None
    extras: dict = field(default_factory=dict)

    def _check_time(self, t):
        ta = np.asarray(t, dtype=float)
        tol = _TIME_EPS * max(1.0, self.duration)
        if np.any(ta < -tol) or np.any(ta > self.duration + tol):
            raise ScheduleError(f"evaluation time outside [0, {self.duration}]")
        return ta

    def omega(self, t):
        if self.cd is not None:
            om, _, _, _, ocd = self.cd.components(self._check_time(t))
            return np.hypot(om, ocd)
        return self.omega_curve(t)

    def delta(self, t):
        if self.cd is not None:
            return CDBase(self.cd.delta_i, self.cd.delta_f, self.cd.t_f, self.cd.omega_max)(
                self._check_time(t)).delta
        return self.delta_curve(t)

    def phi(self, t):
        ta = self._check_time(t)
        if self.cd is not None:
            om, _, _, _, ocd = self.cd.components(ta)
            return np.arctan2(ocd, om)
        if self.phi_steps is None:
            return np.zeros_like(ta) if ta.ndim else 0.0
        edges = self.phi_steps.times
        idx = np.clip(np.searchsorted(edges, ta, side="right") - 1, 0, len(self.phi_steps.values) - 1)
        out = self.phi_steps.values[idx]
        return float(out) if np.ndim(out) == 0 else out

    @property
    def kappa(self) -> float:
        return self.cd.kappa if self.cd is not None else 1.0

    def breakpoints(self) -> np.ndarray:
        pts = [np.array([0.0, self.duration])]
        for c in (self.omega_curve, self.delta_curve):
            if c is not None:
                pts.append(c.times)
        if self.phi_steps is not None:
            pts.append(self.phi_steps.times)
        grid = np.unique(np.concatenate(pts))
        keep = np.concatenate([[True], np.diff(grid) > _TIME_EPS * max(1.0, self.duration)])
        grid = grid[keep]
        grid[-1] = self.duration
        return grid

    def kernel_drive(self):
        """Encoding consumed by the compiled integrator."""
        if self.cd is not None:
            grid = np.array([0.0, self.duration])
            z = np.zeros(2)
            return _kernels.DRIVE_CD, grid, z, z, np.zeros(1), self.cd.packed()
        grid = self.breakpoints()
        om = np.asarray(self.omega(grid), dtype=float)
        de = np.asarray(self.delta(grid), dtype=float)
        ph = np.asarray(self.phi(0.5 * (grid[1:] + grid[:-1])), dtype=float).reshape(-1)
        return _kernels.DRIVE_TABLE, grid, om, de, ph, np.zeros(7)

    def sample(self, n: int = 201) -> dict[str, np.ndarray]:
        t = np.linspace(0.0, self.duration, n)
        return {"t_us": t, "omega_mhz": np.asarray(self.omega(t)),
                "delta_mhz": np.asarray(self.delta(t)), "phi_rad": np.asarray(self.phi(t))}


def boundary_violations(s: Schedule, constants: PhysicalConstants = DEFAULT_CONSTANTS,
                        n_samples: int = 2001) -> list[str]:
    """List every violated boundary/amplitude condition of ``s``."""
    problems = []
    t_f = s.duration
    if not t_f > 0:
        return [f"duration must be positive, got {t_f}"]
    om0, omf = float(s.omega(0.0)), float(s.omega(t_f))
    if om0 != 0.0:
        problems.append(f"Omega(0) = {om0} != 0")
    if omf != 0.0:
        problems.append(f"Omega(t_f) = {omf} != 0")
    t = np.linspace(0.0, t_f, n_samples)
    if s.omega_curve is not None:
        t = np.union1d(t, s.omega_curve.times)
    om = np.asarray(s.omega(t))
    if om.min() < 0.0:
        problems.append(f"Omega negative (min {om.min():.6g})")
    if om.max() > constants.omega_max + 1e-9:
        problems.append(f"Omega exceeds Omega_max = {constants.omega_max} (max {om.max():.6g})")
    d0, df = float(s.delta(0.0)), float(s.delta(t_f))
    if d0 > -constants.delta_noise:
        problems.append(f"Delta(0) = {d0} > -delta_noise = {-constants.delta_noise}")
    if not df > 0:
        problems.append(f"Delta(t_f) = {df} is not positive")
    return problems


def _raise_if(problems: list[str], what: str):
    if problems:
        raise ScheduleError(f"invalid {what}: " + "; ".join(problems))


# -- piecewise linear families ------------------------------------------

def _lin_param_problems(p, t_f: float, constants: PhysicalConstants) -> list[str]:
    problems = []
    if not t_f > 0:
        problems.append(f"t_f = {t_f} must be positive")
    if not p.tau_i > 0:
        problems.append(f"tau_i = {p.tau_i} must be > 0 (zero-length Omega ramp)")
    if not p.tau_f > 0:
        problems.append(f"tau_f = {p.tau_f} must be > 0 (zero-length Omega ramp)")
    if p.tau_i + p.tau_f > t_f * (1 + 1e-12):
        problems.append(f"tau_i + tau_f = {p.tau_i + p.tau_f} exceeds t_f = {t_f}")
    if p.delta_i > -constants.delta_noise:
        problems.append(f"delta_i = {p.delta_i} must be <= -{constants.delta_noise}")
    if not p.delta_f > 0:
        problems.append(f"delta_f = {p.delta_f} must be > 0")
    return problems


def _omega_trapezoid(p, t_f: float, omega_max: float) -> PiecewiseLinearCurve:
    t_down = t_f - p.tau_f
    if t_down - p.tau_i <= _TIME_EPS * t_f:
        peak = min(p.tau_i, t_f - _TIME_EPS * t_f)
        return PiecewiseLinearCurve([0.0, peak, t_f], [0.0, omega_max, 0.0])
    return PiecewiseLinearCurve([0.0, p.tau_i, t_down, t_f], [0.0, omega_max, omega_max, 0.0])


def lin4_schedule(p: Lin4Params, t_f: float = 1.0, omega_max: float | None = None,
                  constants: PhysicalConstants = DEFAULT_CONSTANTS) -> Schedule:
    omega_max = constants.omega_max if omega_max is None else omega_max
    _raise_if(_lin_param_problems(p, t_f, constants), "Lin4 parameters")
    s = Schedule(
        duration=float(t_f), family="lin4", params=p,
        omega_curve=_omega_trapezoid(p, t_f, omega_max),
        delta_curve=PiecewiseLinearCurve([0.0, t_f], [p.delta_i, p.delta_f]),
    )
    _raise_if(boundary_violations(s, constants), "Lin4 schedule")
    return s


def lin6_schedule(p: Lin6Params, t_f: float = 1.0, omega_max: float | None = None,
                  constants: PhysicalConstants = DEFAULT_CONSTANTS) -> Schedule:
    omega_max = constants.omega_max if omega_max is None else omega_max
    problems = _lin_param_problems(p, t_f, constants)
    if not 0 < p.tau_m < t_f:
        problems.append(f"tau_m = {p.tau_m} must lie strictly inside (0, {t_f})")
    _raise_if(problems, "Lin6 parameters")
    s = Schedule(
        duration=float(t_f), family="lin6", params=p,
        omega_curve=_omega_trapezoid(p, t_f, omega_max),
        delta_curve=PiecewiseLinearCurve([0.0, p.tau_m, t_f], [p.delta_i, p.delta_m, p.delta_f]),
    )
    _raise_if(boundary_violations(s, constants), "Lin6 schedule")
    return s


# -- counterdiabatic family ---------------------------------------------

class BaseValues(NamedTuple):
    omega: np.ndarray
    domega: np.ndarray
    delta: np.ndarray
    ddelta: np.ndarray


@dataclass(frozen=True)
class CDBase:
    """Smooth adiabatic base functions with theta(t) = pi t / t_f."""

    delta_i: float
    delta_f: float
    t_f: float
    omega_max: float

    def __call__(self, t) -> BaseValues:
        t = np.asarray(t, dtype=float)
        w = math.pi / self.t_f
        # sin(theta) through the nearer endpoint so it vanishes exactly at t_f
        s = np.sin(w * np.minimum(t, self.t_f - t))
        c = np.cos(w * t)
        u = 0.5 * math.pi * s
        om = self.omega_max * np.sin(u) ** 2
        dom = self.omega_max * np.sin(2.0 * u) * 0.5 * math.pi * c * w
        de = 0.5 * (self.delta_i + self.delta_f) + 0.5 * (self.delta_i - self.delta_f) * c
        dde = -0.5 * (self.delta_i - self.delta_f) * s * w
        return BaseValues(om, dom, de, dde)


def cd_base(delta_i: float, delta_f: float, t_f: float, omega_max: float = DEFAULT_CONSTANTS.omega_max) -> CDBase:
    if not t_f > 0:
        raise ScheduleError(f"t_f = {t_f} must be positive")
    return CDBase(float(delta_i), float(delta_f), float(t_f), float(omega_max))


def cd_amplitude(omega, domega, delta, ddelta, t1, t2):
    """Counterdiabatic coefficient for already-scaled traces t1 = nu T1^(0), t2 = nu^2 T2^(0)."""
    num = omega * ddelta - domega * delta + domega * t1
    den = omega * omega + delta * delta - 2.0 * delta * t1 + t2
    return num / den


@dataclass(frozen=True)
class GraphTraces:
    t1_0: float
    t2_0: float


def graph_traces(graph: UnitDiskGraph, weights: str = "interaction") -> GraphTraces:
    """Normalised traces T1^(0), T2^(0) at unit nearest-neighbour strength.

    ``weights="adjacency"`` replaces (a/d)^6 by the 0/1 adjacency matrix.
    """
    if weights == "interaction":
        v = unit_interactions(graph)
    elif weights == "adjacency":
        v = np.zeros((graph.order, graph.order))
        for i, j in graph.edges:
            v[i, j] = v[j, i] = 1.0
    else:
        raise ScheduleError(f"unknown trace weights {weights!r}")
    n = graph.order
    t1 = np.triu(v, 1).sum() / n
    # sum_{k != i, j} v_ik v_kj is (v @ v)_ij because the diagonal of v is zero
    vv = v @ v
    t2 = 0.5 * np.triu(vv).sum() / n
    return GraphTraces(float(t1), float(t2))


_KAPPA_LO = 1e-3
_KAPPA_TOL = 1e-4  # MHz on max Omega


def _max_omega_tilde(base: CDBase, kappa: float, t1: float, t2: float, grid: np.ndarray) -> float:
    b = base(grid)
    om = kappa * b.omega
    ocd = cd_amplitude(om, kappa * b.domega, b.delta, b.ddelta, t1, t2)
    vals = np.hypot(om, ocd)
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi <= lo:
        return float(vals[k])

    def neg(t):
        b1 = base(t)
        o = kappa * b1.omega
        return -float(np.hypot(o, cd_amplitude(o, kappa * b1.domega, b1.delta, b1.ddelta, t1, t2)))

    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * base.t_f})
    return max(float(vals[k]), -float(res.fun))


def cd_drive(base: CDBase, traces: GraphTraces, nu: float, omega_max: float | None = None, *,
             nu_max: float | None = None, rescale: bool = True, n_grid: int = 4001,
             params: CDParams | None = None) -> Schedule:
    """Counterdiabatic schedule (Omega~, Delta_ad, phi~) on top of ``base``.

    If the combined amplitude exceeds ``omega_max`` the adiabatic amplitude
    is scaled by kappa < 1 (the CD term is recomputed for the scaled drive)
    so that the peak equals ``omega_max`` within 1e-4 MHz.
    """
    omega_max = base.omega_max if omega_max is None else omega_max
    if nu < 0 or (nu_max is not None and nu > nu_max):
        raise ScheduleError(f"nu = {nu} outside [0, {nu_max if nu_max is not None else 'inf'}]")
    t1 = nu * traces.t1_0
    t2 = nu * nu * traces.t2_0
    grid = np.linspace(0.0, base.t_f, n_grid)

    b = base(grid)
    den = b.omega ** 2 + b.delta ** 2 - 2.0 * b.delta * t1 + t2
    den_small = b.delta ** 2 - 2.0 * b.delta * t1 + t2  # kappa -> 0 limit
    bad = np.flatnonzero((den <= 0) | (den_small <= 0) & (b.omega == 0))
    if bad.size:
        raise ScheduleError(f"counterdiabatic denominator vanishes near t = {grid[bad[0]]:.6g} us")

    kappa = 1.0
    peak = _max_omega_tilde(base, 1.0, t1, t2, grid)
    if rescale and peak > omega_max:
        f = lambda k: _max_omega_tilde(base, k, t1, t2, grid)
        # the peak is not monotone in kappa (it blows up again as kappa -> 0);
        # bisect on the branch between its minimum and kappa = 1
        res = minimize_scalar(f, bounds=(_KAPPA_LO, 1.0), method="bounded", options={"xatol": 1e-6})
        k_lo = float(res.x)
        if f(k_lo) > omega_max:
            raise ScheduleError(
                f"no kappa in [{_KAPPA_LO}, 1] keeps the CD amplitude below Omega_max "
                f"(best peak {f(k_lo):.4g} MHz); increase t_f")
        k_hi = 1.0
        for _ in range(200):
            mid = 0.5 * (k_lo + k_hi)
            p = f(mid)
            if p > omega_max:
                k_hi = mid
            else:
                k_lo = mid
                if omega_max - p <= _KAPPA_TOL:
                    break
        kappa = k_lo
    drive = CDDrive(base.delta_i, base.delta_f, base.t_f, base.omega_max, kappa, t1, t2)
    return Schedule(duration=base.t_f, family="cd", params=params, cd=drive,
                    extras={"nu": nu, "t1_0": traces.t1_0, "t2_0": traces.t2_0})


def cd_schedule(p: CDParams, graph: UnitDiskGraph, t_f: float = 1.0,
                constants: PhysicalConstants = DEFAULT_CONSTANTS, traces: GraphTraces | None = None) -> Schedule:
    """Convenience builder: base functions, traces and CD drive for one graph."""
    problems = []
    if p.delta_i > -constants.delta_noise:
        problems.append(f"delta_i = {p.delta_i} must be <= -{constants.delta_noise}")
    if not p.delta_f > 0:
        problems.append(f"delta_f = {p.delta_f} must be > 0")
    v0 = constants.v0(graph.spacing_um)
    if not 0 <= p.nu <= v0:
        problems.append(f"nu = {p.nu} outside [0, V0 = {v0:.6g}]")
    _raise_if(problems, "CD parameters")
    traces = graph_traces(graph) if traces is None else traces
    s = cd_drive(cd_base(p.delta_i, p.delta_f, t_f, constants.omega_max), traces, p.nu,
                 constants.omega_max, nu_max=v0, params=p)
    _raise_if(boundary_violations(s, constants), "CD schedule")
    return s


def build_schedule(family: str, params, graph: UnitDiskGraph | None = None, t_f: float = 1.0,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS, traces: GraphTraces | None = None) -> Schedule:
    family = family.lower()
    if not isinstance(params, _family_class(family)):
        params = params_from_vector(family, params)
    if family == "lin4":
        return lin4_schedule(params, t_f, constants=constants)
    if family == "lin6":
        return lin6_schedule(params, t_f, constants=constants)
    if graph is None:
        raise ScheduleError("the CD family needs the graph to compute its traces")
    return cd_schedule(params, graph, t_f, constants, traces)


# -- hardness-parametrised models ---------------------------------------

@dataclass(frozen=True)
class SaturatingCurve:
    """p(h) = p_inf + (p_0 - p_inf) exp(-h / h_p)."""

    p0: float
    p_inf: float
    h_p: float

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        out = self.p_inf + (self.p0 - self.p_inf) * np.exp(-h / self.h_p)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FitModel:
    family: str
    t_f: float
    spacing_um: float
    curves: dict[str, SaturatingCurve]
    r2: dict[str, float] = field(default_factory=dict)
    residual_rms: dict[str, float] = field(default_factory=dict)
    degenerate: tuple[str, ...] = ()

    def evaluate(self, hp: float):
        names = param_names(self.family)
        return params_from_vector(self.family, [self.curves[n](hp) for n in names])

    def to_dict(self) -> dict:
        return {
            "family": self.family, "t_f": self.t_f, "spacing_um": self.spacing_um,
            "curves": {k: asdict(v) for k, v in self.curves.items()},
            "r2": self.r2, "residual_rms": self.residual_rms, "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitModel":
        return cls(d["family"], d["t_f"], d["spacing_um"],
                   {k: SaturatingCurve(**v) for k, v in d["curves"].items()},
                   d.get("r2", {}), d.get("residual_rms", {}), tuple(d.get("degenerate", ())))


def recommended_upper_detuning(spacing_um: float = 5.0, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    return constants.v0(spacing_um) / 8.0


def limit_params(family: str, t_f: float = 1.0, spacing_um: float = 5.0,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Published hardness -> infinity schedule parameters."""
    dub = recommended_upper_detuning(spacing_um, constants)
    family = family.lower()
    if family == "lin4":
        return Lin4Params(t_f / 2, t_f / 10, -dub / 2, dub)
    if family == "lin6":
        return Lin6Params(0.22 * t_f, 0.12 * t_f, -0.83 * dub, dub, 0.34 * t_f, 0.36 * dub)
    if family == "cd":
        return CDParams(-dub / 10, dub, 4.30)
    _family_class(family)


def hp_schedule_model(hp: float, family: str, model="limit", *, t_f: float = 1.0, spacing_um: float = 5.0,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Schedule parameters for a graph of hardness ``hp``.

    ``model`` is ``"limit"`` (published asymptotic constants) or a fitted
    :class:`FitModel`.
    """
    if not hp > 0:
        raise ModelError(f"hardness parameter must be positive, got {hp}")
    if isinstance(model, str):
        if model == "limit":
            return limit_params(family, t_f, spacing_um, constants)
        if model == "fitted":
            raise ModelError("no fitted model supplied; run the fit step first or pass a FitModel")
        raise ModelError(f"unknown model {model!r}")
    if not isinstance(model, FitModel):
        raise ModelError(f"expected 'limit' or a FitModel, got {type(model).__name__}")
    if model.family != family.lower():
        raise ModelError(f"model was fitted for {model.family}, requested {family}")
    return model.evaluate(hp)


# -- hardware discretisation --------------------------------------------

@dataclass(frozen=True)
class HardwareProgram:
    """Piecewise-linear Omega and Delta on ``times``; phi constant per interval."""

    times: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    phi: np.ndarray  # len(times) - 1 values
    phase_sign: int = 1
    max_clamp: float = 0.0

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    def to_schedule(self) -> Schedule:
        return Schedule(
            duration=self.duration, family="hardware",
            omega_curve=PiecewiseLinearCurve(self.times, self.omega),
            delta_curve=PiecewiseLinearCurve(self.times, self.delta),
            phi_steps=PiecewiseConstant(np.asarray(self.times), np.asarray(self.phi)),
        )

    def violations(self, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> list[str]:
        problems = boundary_violations(self.to_schedule(), constants)
        if self.duration > constants.t_max + 1e-12:
            problems.append(f"duration {self.duration} exceeds t_max = {constants.t_max}")
        steps = np.diff(self.times)
        if steps.min() < constants.hw_step_us - 1e-9:
            problems.append(f"interval {steps.min():.6g} us shorter than the hardware step {constants.hw_step_us}")
        return problems

    def to_json_dict(self) -> dict:
        t = [float(x) for x in self.times]
        return {
            "duration_us": self.duration,
            "omega_mhz": {"times": t, "values": [float(x) for x in self.omega]},
            "delta_mhz": {"times": t, "values": [float(x) for x in self.delta]},
            "phi_rad": {"times": t, "values": [float(self.phase_sign * x) for x in self.phi]},
            "phase_sign": self.phase_sign,
        }


def discretize_for_hardware(s: Schedule, step_us: float | None = None, *, phase_sign: int = 1,
                            constants: PhysicalConstants = DEFAULT_CONSTANTS) -> HardwareProgram:
    """Sample a schedule onto the hardware time grid.

    Omega and Delta are taken at the grid points, phi at interval midpoints.
    A remainder shorter than the hardware step is merged into the last
    interval.
    """
    step = constants.hw_step_us if step_us is None else float(step_us)
    if step < constants.hw_step_us - 1e-12:
        raise ScheduleError(f"step {step} us below the hardware minimum {constants.hw_step_us} us")
    if phase_sign not in (1, -1):
        raise ScheduleError("phase_sign must be +1 or -1")
    t_f = s.duration
    k = int(math.floor(t_f / step + 1e-9))
    grid = [min(i * step, t_f) for i in range(k + 1)]
    rem = t_f - grid[-1]
    if rem > 1e-9 * t_f:
        if rem >= constants.hw_step_us - 1e-12 or len(grid) == 1:
            grid.append(t_f)
        else:
            grid[-1] = t_f
    grid[-1] = t_f
    times = np.array(grid)
    om = np.asarray(s.omega(times), dtype=float).copy()
    de = np.asarray(s.delta(times), dtype=float).copy()
    mid = 0.5 * (times[1:] + times[:-1])
    ph = np.asarray(s.phi(mid), dtype=float).reshape(-1).copy()
    clipped = np.clip(om, 0.0, constants.omega_max)
    clamp = float(np.max(np.abs(clipped - om))) if om.size else 0.0
    om = clipped
    clamp = max(clamp, abs(om[0]), abs(om[-1]))
    om[0] = 0.0
    om[-1] = 0.0
    return HardwareProgram(times, om, de, ph, phase_sign, clamp)


def save_hardware_program(program: HardwareProgram, path, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> None:
    problems = program.violations(constants)
    if problems:
        raise ScheduleError("refusing to export a schedule that breaks hardware limits: " + "; ".join(problems))
    Path(path).write_text(json.dumps(program.to_json_dict(), indent=2) + "\n")


def load_hardware_program(path) -> HardwareProgram:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        sign = int(d.get("phase_sign", 1))
        t = np.array(d["omega_mhz"]["times"], dtype=float)
        om = np.array(d["omega_mhz"]["values"], dtype=float)
        de = np.array(d["delta_mhz"]["values"], dtype=float)
        ph = np.array(d["phi_rad"]["values"], dtype=float) * sign
        for key in ("delta_mhz", "phi_rad"):
            if not np.array_equal(np.array(d[key]["times"], dtype=float), t):
                raise FormatError(f"{path}: {key}.times differ from omega_mhz.times")
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed schedule JSON ({exc!r})") from None
    if om.shape != t.shape or de.shape != t.shape or ph.shape != (t.size - 1,):
        raise FormatError(f"{path}: inconsistent array lengths")
    return HardwareProgram(t, om, de, ph, sign, 0.0)
