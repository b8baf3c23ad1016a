"""Exact final-detuning window in which the cost Hamiltonian encodes an MIS.

At Omega = 0 the energy of a configuration x is -Delta |x| + V(x).  With m the
independence number and V* the smallest interaction energy among MIS
configurations, an MIS state is the strict ground state iff

    max_{|x|<m} (V* - V(x)) / (m - |x|)  <  Delta  <  min_{|x|>m} (V(x) - V*) / (|x| - m)

and no dependent configuration of size m has V(x) <= V*.  Both endpoints are
open.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EnumerationLimitError, RydmisError
from .graphs import UnitDiskGraph, hardness_parameter, independent_set_census
from .hamiltonian import DEFAULT_CONSTANTS, PhysicalConstants, unit_interactions

BOUNDS_ENUMERATION_LIMIT = 20
UNBOUNDED = math.inf

# HP bins [3 * 2^(i-4), 3 * 2^(i-3)) for i = 1..5
HP_BIN_EDGES = tuple(3.0 * 2.0 ** (i - 4) for i in range(1, 7))


def hp_bin(hp: float) -> int | None:
    """1-based HP bin index, or None outside [0.375, 12]; 12 itself falls in bin 5."""
    if hp == HP_BIN_EDGES[-1]:
        return len(HP_BIN_EDGES) - 1
    for i in range(len(HP_BIN_EDGES) - 1):
        if HP_BIN_EDGES[i] <= hp < HP_BIN_EDGES[i + 1]:
            return i + 1
    return None


@dataclass(frozen=True)
class BoundsInterval:
    lower: float  # MHz, >= 0
    upper: float  # MHz, math.inf when unbounded
    feasible: bool
    v0: float = 1.0

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.upper)

    @property
    def lower_over_v0(self) -> float:
        return self.lower / self.v0

    @property
    def upper_over_v0(self) -> float:
        return self.upper / self.v0

    def contains(self, delta: float) -> bool:
        return self.feasible and self.lower < delta < self.upper


def configuration_tables(graph: UnitDiskGraph, limit: int = BOUNDS_ENUMERATION_LIMIT):
    """(V(x) / V0, |x|, independent?) for all 2^N masks, bit i = atom i."""
    n = graph.order
    if n > limit:
        raise EnumerationLimitError("exact detuning bounds", n, limit)
    w = unit_interactions(graph)
    nbr = graph.neighbor_masks
    energy = np.zeros(1)
    size = np.zeros(1, dtype=np.int16)
    indep = np.ones(1, dtype=bool)
    masks = np.zeros(1, dtype=np.int64)
    for v in range(n):
        # interaction of atom v with each configuration of atoms 0..v-1
        with_v = np.zeros(1)
        for u in range(v):
            with_v = np.concatenate([with_v, with_v + w[u, v]])
        lower_nbrs = nbr[v] & ((1 << v) - 1)
        energy = np.concatenate([energy, energy + with_v])
        size = np.concatenate([size, size + 1])
        indep = np.concatenate([indep, indep & ((masks & lower_nbrs) == 0)])
        masks = np.concatenate([masks, masks | (1 << v)])
    return energy, size, indep


def exact_detuning_bounds(graph: UnitDiskGraph, constants: PhysicalConstants = DEFAULT_CONSTANTS,
                          limit: int = BOUNDS_ENUMERATION_LIMIT) -> BoundsInterval:
    v0 = constants.v0(graph.spacing_um)
    energy, size, indep = configuration_tables(graph, limit)
    m = int(size[indep].max())
    v_star = float(energy[indep & (size == m)].min())

    lower = 0.0
    upper = UNBOUNDED
    for k in range(graph.order + 1):
        sel = size == k
        if k == m or not sel.any():
            continue
        v_min = float(energy[sel].min())
        if k < m:
            lower = max(lower, (v_star - v_min) / (m - k))
        else:
            upper = min(upper, (v_min - v_star) / (k - m))
    dependent = (~indep) & (size == m)
    ok = not dependent.any() or float(energy[dependent].min()) > v_star
    feasible = bool(ok and lower < upper)
    return BoundsInterval(lower * v0, upper * v0 if not math.isinf(upper) else UNBOUNDED, feasible, v0)


# -- counterexample family -------------------------------------------------

@dataclass(frozen=True)
class TriangleChainSums:
    m: int
    sigma0: float
    sigma1: float
    energy0: Callable[[float, float], float]  # (delta_f, v0) -> E0
    energy1: Callable[[float, float], float]  # (delta_f, v0) -> E1

    @property
    def difference(self) -> float:
        return self.sigma0 - self.sigma1

    def lower_bound(self, v0: float) -> float:
        """Detuning above which the line MIS beats the tip configuration."""
        return v0 / 64.0 * self.difference


def triangle_chain_sigma(m: int) -> TriangleChainSums:
    """Closed-form interaction sums for the alternating triangle chain."""
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise RydmisError(f"triangle chain needs m >= 1, got {m!r}")
    m = int(m)
    s0 = math.fsum((m + 1 - i) / i**6 for i in range(1, m + 1))
    s1 = math.fsum((m + 1 - 2 * i) / (4 * i * i - 4 * i + 2) ** 3 + (m - 2 * i) / (2 * i) ** 6
                   for i in range(1, m // 2 + 1))

    def e0(delta_f, v0):
        return -(m + 1) * delta_f + v0 / 64.0 * s0

    def e1(delta_f, v0):
        return -m * delta_f + v0 / 64.0 * s1

    return TriangleChainSums(m, s0, s1, e0, e1)


# -- ensembles -------------------------------------------------------------

QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class BinSummary:
    count: int
    lower_quantiles: tuple[float, ...]  # of Delta_LB / V0
    upper_quantiles: tuple[float, ...]  # of Delta_UB / V0, inf when unbounded


@dataclass(frozen=True)
class EnsembleStats:
    n_graphs: int
    n_lower_ok: int  # Delta_LB <= V0/12
    n_upper_ok: int  # Delta_UB >= V0/8
    n_both_ok: int
    n_infeasible: int
    per_bin: dict = field(default_factory=dict)
    bounds: tuple[BoundsInterval, ...] = ()
    hps: tuple[float, ...] = ()

    @property
    def fraction_lower_ok(self) -> float:
        return self.n_lower_ok / self.n_graphs

    @property
    def fraction_upper_ok(self) -> float:
        return self.n_upper_ok / self.n_graphs

    @property
    def fraction_both_ok(self) -> float:
        return self.n_both_ok / self.n_graphs


def recommended_interval(spacing_um: float = 5.0, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> tuple[float, float]:
    """Detuning window (V0/12, V0/8) recommended for the final detuning."""
    v0 = constants.v0(spacing_um)
    return v0 / 12.0, v0 / 8.0


def ensemble_bounds_stats(graphs: Iterable[UnitDiskGraph], hps: Sequence[float] | None = None,
                          constants: PhysicalConstants = DEFAULT_CONSTANTS) -> EnsembleStats:
    graphs = list(graphs)
    if not graphs:
        raise RydmisError("ensemble statistics need at least one graph")
    if hps is None:
        hps = [hardness_parameter(independent_set_census(g)) for g in graphs]
    if len(hps) != len(graphs):
        raise RydmisError("one HP value per graph is required")
    results = [exact_detuning_bounds(g, constants) for g in graphs]
    lo_ok = [b.lower <= b.v0 / 12.0 for b in results]
    up_ok = [b.upper >= b.v0 / 8.0 for b in results]
    per_bin = {}
    for k in sorted({hp_bin(h) for h in hps}, key=lambda x: (x is None, x or 0)):
        idx = [i for i, h in enumerate(hps) if hp_bin(h) == k]
        lows = np.array([results[i].lower_over_v0 for i in idx])
        ups = np.array([results[i].upper_over_v0 for i in idx])
        # interpolating towards an unbounded endpoint would produce nan
        up_method = "nearest" if np.isinf(ups).any() else "linear"
        per_bin[k] = BinSummary(len(idx), tuple(np.quantile(lows, QUANTILES).tolist()),
                                tuple(np.quantile(ups, QUANTILES, method=up_method).tolist()))
    return EnsembleStats(
        n_graphs=len(graphs),
        n_lower_ok=sum(lo_ok),
        n_upper_ok=sum(up_ok),
        n_both_ok=sum(a and b for a, b in zip(lo_ok, up_ok)),
        n_infeasible=sum(not b.feasible for b in results),
        per_bin=per_bin,
        bounds=tuple(results),
        hps=tuple(float(h) for h in hps),
    )
