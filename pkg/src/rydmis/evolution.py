"""Schrodinger evolution under a drive schedule, and what we read out of it."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import GraphError, IntegrationError, RydmisError
from .graphs import IndependentSetCensus, UnitDiskGraph, greedy_repair_mask, independent_set_census
from .hamiltonian import (DEFAULT_CONSTANTS, BasisSet, PhysicalConstants, PrecomputedOperators,
                          build_basis, precompute_operators)
from .schedules import Schedule

NORM_DRIFT_LIMIT = 1e-6
RK2_DEFAULT_STEP = 1e-5  # us

_METHODS = {"bs32": _kernels.METHOD_BS32, "rk2": _kernels.METHOD_RK2}


@dataclass(frozen=True)
class EvolutionConfig:
    """``integrator`` is ``"bs32"`` (adaptive 3(2) pair) or ``"rk2"`` (fixed-step midpoint).

    For ``rk2`` the step is ``max_step`` (default 1e-5 us, small enough to keep
    the norm drift of toy-sized problems below 1e-6).
    """

    integrator: str = "bs32"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-8
    max_step: float | None = None
    drift_limit: float = NORM_DRIFT_LIMIT

    def __post_init__(self):
        if self.integrator not in _METHODS:
            raise RydmisError(f"unknown integrator {self.integrator!r}; choose {sorted(_METHODS)}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise RydmisError("integration tolerances must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise RydmisError("max_step must be positive")


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray
    basis: BasisSet

    def __post_init__(self):
        if self.amplitudes.shape != (self.basis.size,):
            raise GraphError(f"amplitude vector {self.amplitudes.shape} does not match basis size {self.basis.size}")

    @classmethod
    def ground(cls, basis: BasisSet) -> "QuantumState":
        psi = np.zeros(basis.size, dtype=np.complex128)
        psi[0] = 1.0  # mask 0 sorts first in every basis
        return cls(psi, basis)

    @classmethod
    def from_bits(cls, bits, basis: BasisSet) -> "QuantumState":
        k = basis.index_of_bits(bits)
        if k < 0:
            raise GraphError(f"bitstring {tuple(bits)} is not in the {basis.subspace.value} basis")
        psi = np.zeros(basis.size, dtype=np.complex128)
        psi[k] = 1.0
        return cls(psi, basis)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class EvolutionResult:
    final_state: QuantumState
    p_mis: float
    densities: np.ndarray
    step_count: int
    rejected_steps: int
    norm_drift: float


@dataclass
class SimulationContext:
    """Graph-specific, schedule-independent data shared by many evolutions."""

    graph: UnitDiskGraph
    basis: BasisSet
    ops: PrecomputedOperators
    census: IndependentSetCensus
    mis_indices: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mis_indices = _mis_indices(self.basis, self.census)


def simulation_context(graph: UnitDiskGraph, subspace="nn", constants: PhysicalConstants = DEFAULT_CONSTANTS,
                       census: IndependentSetCensus | None = None) -> SimulationContext:
    basis = build_basis(graph, subspace)
    ops = precompute_operators(graph, constants, basis)
    census = independent_set_census(graph) if census is None else census
    return SimulationContext(graph, basis, ops, census)


def _mis_indices(basis: BasisSet, census: IndependentSetCensus) -> np.ndarray:
    if census.mis_solutions and len(census.mis_solutions[0]) != basis.order:
        raise GraphError("census and basis belong to graphs of different order")
    idx = basis.index_of(list(census.mis_masks))
    if np.any(idx < 0):
        raise RydmisError("internal inconsistency: an MIS bitstring is missing from the simulation basis")
    return idx


def evolve(graph: UnitDiskGraph, schedule: Schedule, basis: BasisSet | None = None,
           ops: PrecomputedOperators | None = None, config: EvolutionConfig | None = None, *,
           census: IndependentSetCensus | None = None,
           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> EvolutionResult:
    """Integrate i dpsi/dt = H(t) psi from |0...0> over the schedule.

    The final state is renormalised once if the norm drift stayed within
    ``config.drift_limit``; otherwise an :class:`IntegrationError` is raised.
    """
    config = EvolutionConfig() if config is None else config
    if basis is None:
        basis = ops.basis if ops is not None else build_basis(graph)
    if ops is None:
        ops = precompute_operators(graph, constants, basis)
    if ops.basis is not basis and not np.array_equal(ops.basis.states, basis.states):
        raise GraphError("operators were precomputed for a different basis")
    if basis.order != graph.order:
        raise GraphError(f"basis has {basis.order} atoms, graph has {graph.order}")
    census = independent_set_census(graph) if census is None else census
    mis_idx = _mis_indices(basis, census)

    psi0 = QuantumState.ground(basis).amplitudes
    if schedule.duration < 0:
        raise RydmisError(f"schedule duration {schedule.duration} is negative")
    if schedule.duration == 0:
        state = QuantumState(psi0, basis)
        return EvolutionResult(state, p_mis_indices(state, mis_idx), rydberg_density(state), 0, 0, 0.0)

    kind, grid, om_v, de_v, ph_v, cd = schedule.kernel_drive()
    method = _METHODS[config.integrator]
    if config.max_step is not None:
        max_step = config.max_step
    else:
        max_step = RK2_DEFAULT_STEP if method == _kernels.METHOD_RK2 else schedule.duration
    h_min = 1e-14 * schedule.duration
    y, steps, rejected, drift, status = _kernels.propagate(
        psi0, kind, grid, om_v, de_v, ph_v, cd, ops.diag_n_float, ops.diag_v,
        ops.flip_hi, ops.flip_lo, method, config.rel_tol, config.abs_tol, max_step, h_min)
    if status == _kernels.STATUS_UNDERFLOW:
        raise IntegrationError(
            f"step size fell below {h_min:.3g} us after {steps} steps; the problem looks stiff "
            "(check the schedule for extreme detunings)")
    if drift > config.drift_limit:
        raise IntegrationError(
            f"norm drift {drift:.3g} exceeds {config.drift_limit:.1g}; tighten rel_tol/abs_tol "
            f"(currently {config.rel_tol:g}/{config.abs_tol:g}) or reduce max_step")
    y /= np.linalg.norm(y)
    state = QuantumState(y, basis)
    return EvolutionResult(state, p_mis_indices(state, mis_idx), rydberg_density(state),
                           int(steps), int(rejected), float(drift))


def run(ctx: SimulationContext, schedule: Schedule, config: EvolutionConfig | None = None,
        constants: PhysicalConstants = DEFAULT_CONSTANTS) -> EvolutionResult:
    return evolve(ctx.graph, schedule, ctx.basis, ctx.ops, config, census=ctx.census, constants=constants)


def p_mis_indices(state: QuantumState, indices: np.ndarray) -> float:
    return float(min(1.0, np.sum(np.abs(state.amplitudes[indices]) ** 2)))


def p_mis(state: QuantumState, census: IndependentSetCensus) -> float:
    """Total probability on the maximum independent sets."""
    return p_mis_indices(state, _mis_indices(state.basis, census))


def rydberg_density(state: QuantumState) -> np.ndarray:
    """Per-atom excitation probability <n_i>."""
    probs = state.probabilities
    n = state.basis.order
    bits = (state.basis.states[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return np.clip(probs @ bits, 0.0, 1.0)


@dataclass(frozen=True)
class ShotSummary:
    n_shots: int
    size_histogram: dict[int, int]
    mis_hits: int
    independence_number: int

    @property
    def mis_fraction(self) -> float:
        return self.mis_hits / self.n_shots


def sample_bitmasks(state: QuantumState, n_shots: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """Exact categorical draws of basis masks with probabilities |psi_x|^2."""
    if n_shots < 1:
        raise RydmisError("n_shots must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = state.probabilities
    p = p / p.sum()
    return state.basis.states[rng.choice(p.size, size=n_shots, p=p)]


def sample_and_repair(state: QuantumState, n_shots: int, seed: int, graph: UnitDiskGraph,
                      census: IndependentSetCensus | None = None) -> ShotSummary:
    """Sample shots, repair each into a maximal independent set, histogram the sizes."""
    if graph.order != state.basis.order:
        raise GraphError(f"state has {state.basis.order} atoms, graph has {graph.order}")
    rng = np.random.default_rng(seed)
    masks = sample_bitmasks(state, n_shots, rng)
    alpha = (independent_set_census(graph) if census is None else census).independence_number
    sizes = Counter()
    for m in masks.tolist():
        sizes[bin(greedy_repair_mask(int(m), graph, rng)).count("1")] += 1
    return ShotSummary(n_shots, dict(sorted(sizes.items())), sizes.get(alpha, 0), alpha)
