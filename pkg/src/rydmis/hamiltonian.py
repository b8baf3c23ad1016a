"""Rydberg Hamiltonian on a unit-disk graph.

Units: lengths in um, frequencies in MHz read as angular frequencies
(rad/us, hbar = 1), times in us.  The drive on atom i is
(Omega/2) (e^{i phi} |0><1| + h.c.), the cost part is
-Delta sum_i n_i + sum_{i<j} V_ij n_i n_j with V_ij = C6 / r_ij^6 summed over
every pair of atoms, not only graph edges.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import EnumerationLimitError, GraphError, RydmisError
from .graphs import UnitDiskGraph, bits_to_mask, mask_to_bits


@dataclass(frozen=True)
class PhysicalConstants:
    c6: float = 5_420_503.0  # MHz um^6
    omega_max: float = 15.8  # MHz
    t_max: float = 4.0  # us
    delta_noise: float = 1.0  # MHz
    hw_step_us: float = 0.05

    def __post_init__(self):
        for name in ("c6", "omega_max", "t_max", "delta_noise", "hw_step_us"):
            if not getattr(self, name) > 0:
                raise RydmisError(f"physical constant {name} must be strictly positive")

    def v0(self, spacing_um: float) -> float:
        """Nearest-neighbour interaction C6 / a^6."""
        return self.c6 / spacing_um**6

    @property
    def blockade_radius(self) -> float:
        return blockade_radius(self)


DEFAULT_CONSTANTS = PhysicalConstants()


def blockade_radius(constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    return (constants.c6 / constants.omega_max) ** (1.0 / 6.0)


@dataclass(frozen=True)
class InteractionTable:
    v: np.ndarray  # N x N, MHz, zero diagonal
    v0: float

    @property
    def order(self) -> int:
        return self.v.shape[0]


def interaction_table(graph: UnitDiskGraph, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> InteractionTable:
    v0 = constants.v0(graph.spacing_um)
    return InteractionTable(unit_interactions(graph) * v0, v0)


def unit_interactions(graph: UnitDiskGraph) -> np.ndarray:
    """(a / d_ij)^6 for every pair, i.e. the interaction matrix at V0 = 1."""
    d2 = graph.squared_distances.astype(float)
    out = np.zeros_like(d2)
    off = d2 > 0
    out[off] = 1.0 / d2[off] ** 3
    return out


def configuration_energy(bits: Sequence[int], delta: float, table: InteractionTable) -> float:
    """-Delta * sum x_i + sum_{i<j} V_ij x_i x_j."""
    x = np.asarray([int(b) for b in bits], dtype=float)
    if x.size != table.order:
        raise GraphError(f"bitstring length {x.size} does not match graph order {table.order}")
    return float(-delta * x.sum() + 0.5 * x @ table.v @ x)


# -- basis ----------------------------------------------------------------

class Subspace(str, Enum):
    FULL = "full"
    NEAREST_NEIGHBOR = "nn"  # no two excitations at distance <= a
    UNIT_DISK = "ud"  # no two excitations on a graph edge (R_s = R_b)

    @classmethod
    def parse(cls, value) -> "Subspace":
        if isinstance(value, cls):
            return value
        aliases = {"none": "full", "nearest-neighbor": "nn", "unit-disk": "ud"}
        try:
            return cls(aliases.get(str(value), str(value)))
        except ValueError:
            raise RydmisError(f"unknown subspace {value!r}; choose full, nn or ud") from None


FULL_SPACE_LIMIT = 20
RESTRICTED_LIMIT = 30


@dataclass(frozen=True)
class BasisSet:
    states: np.ndarray  # sorted int64 masks, bit i = atom i
    subspace: Subspace
    order: int

    @property
    def size(self) -> int:
        return int(self.states.size)

    def __len__(self) -> int:
        return self.size

    @property
    def bitstrings(self) -> list[tuple[int, ...]]:
        return [mask_to_bits(int(s), self.order) for s in self.states]

    def index_of(self, masks) -> np.ndarray:
        """Basis indices of the given masks, -1 where a mask is not in the basis."""
        masks = np.atleast_1d(np.asarray(masks, dtype=np.int64))
        if self.subspace is Subspace.FULL:
            return masks.copy()
        pos = np.searchsorted(self.states, masks)
        pos = np.minimum(pos, self.size - 1)
        return np.where(self.states[pos] == masks, pos, -1)

    def index_of_bits(self, bits: Sequence[int]) -> int:
        return int(self.index_of([bits_to_mask(bits)])[0])


def _blockade_masks(graph: UnitDiskGraph, subspace: Subspace) -> list[int]:
    if subspace is Subspace.UNIT_DISK:
        return list(graph.neighbor_masks)
    d2 = graph.squared_distances
    masks = [0] * graph.order
    for i in range(graph.order):
        for j in range(graph.order):
            if i != j and d2[i, j] <= 1:
                masks[i] |= 1 << j
    return masks


def build_basis(graph: UnitDiskGraph, subspace="nn", *, full_limit: int = FULL_SPACE_LIMIT,
                restricted_limit: int = RESTRICTED_LIMIT) -> BasisSet:
    """Enumerate the simulation basis in increasing mask order."""
    sub = Subspace.parse(subspace)
    n = graph.order
    if sub is Subspace.FULL:
        if n > full_limit:
            raise EnumerationLimitError("full Hilbert space", n, full_limit,
                                        "use subspace 'nn' (exact to 1e-2 in P_MIS) or 'ud'")
        return BasisSet(np.arange(1 << n, dtype=np.int64), sub, n)
    if n > restricted_limit:
        raise EnumerationLimitError(f"blockade subspace '{sub.value}'", n, restricted_limit)
    blocked = _blockade_masks(graph, sub)
    states = np.zeros(1, dtype=np.int64)
    for v in range(n):
        lower = blocked[v] & ((1 << v) - 1)
        ok = states[(states & lower) == 0]
        states = np.concatenate([states, ok | (1 << v)])
    states.sort()
    return BasisSet(states, sub, n)


# -- operators --------------------------------------------------------------

@dataclass(frozen=True)
class PrecomputedOperators:
    """Schedule-independent parts of H restricted to a basis.

    ``flip_hi[p]`` / ``flip_lo[p]`` index a pair of basis states that differ by
    exciting atom ``flip_atom[p]`` (hi has the atom in |1>).
    """

    basis: BasisSet
    diag_n: np.ndarray
    diag_v: np.ndarray
    flip_hi: np.ndarray
    flip_lo: np.ndarray
    flip_atom: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.size

    def couplings(self, k: int) -> list[tuple[int, int]]:
        """(partner index, flipped atom) pairs reachable from basis state k."""
        sel_hi = self.flip_hi == k
        sel_lo = self.flip_lo == k
        pairs = list(zip(self.flip_lo[sel_hi].tolist(), self.flip_atom[sel_hi].tolist()))
        pairs += list(zip(self.flip_hi[sel_lo].tolist(), self.flip_atom[sel_lo].tolist()))
        return sorted(pairs, key=lambda p: p[1])

    @cached_property
    def diag_n_float(self) -> np.ndarray:
        return self.diag_n.astype(np.float64)


def _bit_columns(states: np.ndarray, n: int) -> np.ndarray:
    return ((states[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.float64)


def precompute_operators(graph: UnitDiskGraph, constants: PhysicalConstants, basis: BasisSet) -> PrecomputedOperators:
    if basis.order != graph.order:
        raise GraphError(f"basis built for {basis.order} atoms, graph has {graph.order}")
    n = graph.order
    v = interaction_table(graph, constants).v
    states = basis.states
    diag_n = np.zeros(states.size, dtype=np.int64)
    diag_v = np.zeros(states.size)
    chunk = max(1, 1 << 16)
    for start in range(0, states.size, chunk):
        bits = _bit_columns(states[start:start + chunk], n)
        diag_n[start:start + chunk] = bits.sum(axis=1).astype(np.int64)
        diag_v[start:start + chunk] = 0.5 * np.einsum("ki,ki->k", bits @ v, bits)
    his, los, atoms = [], [], []
    for i in range(n):
        bit = np.int64(1 << i)
        hi = np.flatnonzero(states & bit)
        lo = basis.index_of(states[hi] ^ bit)
        keep = lo >= 0
        his.append(hi[keep])
        los.append(lo[keep])
        atoms.append(np.full(int(keep.sum()), i, dtype=np.int64))
    return PrecomputedOperators(
        basis=basis,
        diag_n=diag_n,
        diag_v=diag_v,
        flip_hi=np.concatenate(his).astype(np.int64),
        flip_lo=np.concatenate(los).astype(np.int64),
        flip_atom=np.concatenate(atoms),
    )


def apply_hamiltonian(state: np.ndarray, omega: float, delta: float, phi: float,
                      ops: PrecomputedOperators) -> np.ndarray:
    """Return H psi for the drive values (Omega, Delta, phi) without forming H."""
    psi = np.ascontiguousarray(state, dtype=np.complex128)
    if psi.shape != (ops.size,):
        raise GraphError(f"state has shape {psi.shape}, basis size is {ops.size}")
    out = np.empty_like(psi)
    amp = 0.5 * omega * np.exp(1j * phi)
    _kernels.apply_h(psi, complex(amp), float(delta), ops.diag_n_float, ops.diag_v,
                     ops.flip_hi, ops.flip_lo, out)
    return out
