"""Unit-disk graphs on the square lattice and their independent sets.

Vertices live on integer lattice points; two vertices are joined when their
lattice distance is at most sqrt(2), i.e. nearest and next-nearest
neighbours.  Bitstrings are tuples of 0/1 in vertex order; internally the
enumeration code works on integer masks with bit ``i`` standing for vertex
``i``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EnumerationLimitError, GraphError

DEFAULT_ENUMERATION_LIMIT = 25
_INT32 = (-(2**31), 2**31 - 1)

Bitstring = tuple  # tuple[int, ...] of 0/1, one entry per vertex


class Site(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class UnitDiskGraph:
    """Square-lattice unit-disk graph.

    ``sites`` are integer lattice coordinates, ``spacing_um`` the physical
    lattice constant a.  Edges are always derived from the sites.
    """

    sites: tuple[Site, ...]
    spacing_um: float = 5.0
    name: str = field(default="", compare=True)

    @property
    def order(self) -> int:
        return len(self.sites)

    @cached_property
    def edges(self) -> frozenset[tuple[int, int]]:
        out = set()
        for i, (xi, yi) in enumerate(self.sites):
            for j in range(i + 1, len(self.sites)):
                xj, yj = self.sites[j]
                if (xi - xj) ** 2 + (yi - yj) ** 2 <= 2:
                    out.add((i, j))
        return frozenset(out)

    @cached_property
    def sorted_edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self.edges))

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        masks = [0] * self.order
        for i, j in self.edges:
            masks[i] |= 1 << j
            masks[j] |= 1 << i
        return tuple(masks)

    @cached_property
    def squared_distances(self) -> np.ndarray:
        """Integer matrix of squared lattice distances (units of a^2)."""
        xy = np.array(self.sites, dtype=np.int64).reshape(-1, 2)
        diff = xy[:, None, :] - xy[None, :, :]
        return (diff**2).sum(axis=-1)

    def degrees(self) -> np.ndarray:
        return np.array([bin(m).count("1") for m in self.neighbor_masks])

    def is_connected(self) -> bool:
        if self.order == 0:
            return False
        seen, frontier = 1, 1
        while frontier:
            nxt = 0
            for i in _bits_of(frontier):
                nxt |= self.neighbor_masks[i]
            frontier = nxt & ~seen
            seen |= nxt
        return seen == (1 << self.order) - 1

    def is_independent(self, bits: Sequence[int]) -> bool:
        mask = bits_to_mask(bits)
        return all(not (mask >> i & 1 and self.neighbor_masks[i] & mask) for i in range(self.order))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "spacing_um": self.spacing_um,
            "sites": [[s.x, s.y] for s in self.sites],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UnitDiskGraph":
        return build_unit_disk_graph(
            [tuple(s) for s in data["sites"]], data.get("spacing_um", 5.0), name=data.get("name", "")
        )


def build_unit_disk_graph(sites: Iterable, spacing_um: float = 5.0, name: str = "") -> UnitDiskGraph:
    """Validate lattice sites and return the corresponding unit-disk graph.

    Vertex order follows the input order.
    """
    pts = []
    for k, s in enumerate(sites):
        try:
            x, y = s
        except (TypeError, ValueError):
            raise GraphError(f"site {k} is not an (x, y) pair: {s!r}") from None
        if isinstance(x, bool) or isinstance(y, bool) or int(x) != x or int(y) != y:
            raise GraphError(f"site {k} has non-integer coordinates {s!r}")
        x, y = int(x), int(y)
        if not (_INT32[0] <= x <= _INT32[1] and _INT32[0] <= y <= _INT32[1]):
            raise GraphError(f"site {k} coordinates {s!r} outside the signed 32-bit range")
        pts.append(Site(x, y))
    if not pts:
        raise GraphError("a graph needs at least one site")
    first_seen: dict[Site, int] = {}
    for k, p in enumerate(pts):
        if p in first_seen:
            raise GraphError(f"duplicate site {tuple(p)} at indices {first_seen[p]} and {k}")
        first_seen[p] = k
    if not spacing_um > 0:
        raise GraphError(f"lattice spacing must be positive, got {spacing_um}")
    return UnitDiskGraph(tuple(pts), float(spacing_um), name)


# -- bitstrings -------------------------------------------------------------

def bits_to_mask(bits: Sequence[int]) -> int:
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    mask = 0
    for i, b in enumerate(bits):
        if b not in (0, 1):
            raise GraphError(f"bit {i} is {b!r}, expected 0 or 1")
        if b:
            mask |= 1 << i
    return mask


def mask_to_bits(mask: int, n: int) -> Bitstring:
    return tuple((mask >> i) & 1 for i in range(n))


def bits_str(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def _bits_of(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


# -- independent sets -------------------------------------------------------

@dataclass(frozen=True)
class IndependentSetCensus:
    degeneracies: dict[int, int]
    independence_number: int
    mis_solutions: tuple[Bitstring, ...]

    @property
    def n_independent_sets(self) -> int:
        return sum(self.degeneracies.values())

    def degeneracy(self, k: int) -> int:
        return self.degeneracies.get(k, 0)

    @property
    def mis_masks(self) -> tuple[int, ...]:
        return tuple(bits_to_mask(b) for b in self.mis_solutions)


class _Enumerator:
    """Memoised inclusion/exclusion recursion over candidate-vertex masks."""

    def __init__(self, graph: UnitDiskGraph):
        self.nbr = graph.neighbor_masks
        self.closed = tuple(m | (1 << i) for i, m in enumerate(self.nbr))
        self.memo: dict[int, tuple[int, ...]] = {0: (1,)}

    def _pivot(self, cand: int) -> int:
        best, best_deg = -1, -1
        for v in _bits_of(cand):
            d = _popcount(self.nbr[v] & cand)
            if d > best_deg:
                best, best_deg = v, d
        return best

    def poly(self, cand: int) -> tuple[int, ...]:
        """Independence polynomial coefficients of the induced subgraph."""
        hit = self.memo.get(cand)
        if hit is not None:
            return hit
        v = self._pivot(cand)
        without = self.poly(cand & ~(1 << v))
        with_v = self.poly(cand & ~self.closed[v])
        n = max(len(without), len(with_v) + 1)
        out = [0] * n
        for k, c in enumerate(without):
            out[k] += c
        for k, c in enumerate(with_v):
            out[k + 1] += c
        res = tuple(out)
        self.memo[cand] = res
        return res

    def alpha(self, cand: int) -> int:
        return len(self.poly(cand)) - 1

    def maximum_sets(self, cand: int, need: int, chosen: int = 0):
        if need == 0:
            yield chosen
            return
        if cand == 0 or self.alpha(cand) < need:
            return
        v = self._pivot(cand)
        rest = cand & ~self.closed[v]
        if self.alpha(rest) >= need - 1:
            yield from self.maximum_sets(rest, need - 1, chosen | (1 << v))
        yield from self.maximum_sets(cand & ~(1 << v), need, chosen)


def independent_set_census(graph: UnitDiskGraph, limit: int = DEFAULT_ENUMERATION_LIMIT) -> IndependentSetCensus:
    """Count independent sets by size and list every maximum one."""
    if graph.order > limit:
        raise EnumerationLimitError("independent_set_census", graph.order, limit)
    en = _Enumerator(graph)
    full = (1 << graph.order) - 1
    poly = en.poly(full)
    alpha = len(poly) - 1
    masks = sorted(en.maximum_sets(full, alpha))
    return IndependentSetCensus(
        degeneracies={k: c for k, c in enumerate(poly)},
        independence_number=alpha,
        mis_solutions=tuple(mask_to_bits(m, graph.order) for m in masks),
    )


def hardness_fraction(census: IndependentSetCensus) -> Fraction:
    m = census.independence_number
    if m < 1:
        raise GraphError("hardness parameter undefined for an empty graph")
    return Fraction(census.degeneracy(m - 1), m * census.degeneracy(m))


def hardness_parameter(census: IndependentSetCensus) -> float:
    """D_{|MIS|-1} / (|MIS| * D_{|MIS|})."""
    return float(hardness_fraction(census))


# -- named constructions ----------------------------------------------------

TOY_WINDOW = (4, 3)  # columns, rows
# The eleven 9/10-vertex graphs on the 4x3 window with a unique MIS and
# hardness in [2, 3], one representative per lattice-symmetry class, sorted
# by order then hardness.
TOY_GRAPH_IDS = ("7EE", "7FA", "EEE", "9FE", "EFA", "7DE", "E7E", "EDE", "EBE", "7FE", "EFE")

_TOY_RE = re.compile(r"^[0-9A-F]{3}$")


def parse_toy_graph_id(ident: str, spacing_um: float = 5.0) -> UnitDiskGraph:
    """Decode a three-nibble toy-graph identifier.

    Nibble ``i`` (most significant first) describes row ``i`` of the 4x3
    window from the top; its most significant bit is the leftmost site.
    Vertices are numbered in reading order.
    """
    if not isinstance(ident, str) or not _TOY_RE.match(ident):
        raise GraphError(f"toy graph id must be three hex digits [0-9A-F], got {ident!r}")
    cols, _ = TOY_WINDOW
    sites = []
    for row, ch in enumerate(ident):
        nib = int(ch, 16)
        for col in range(cols):
            if nib >> (cols - 1 - col) & 1:
                sites.append((col, row))
    if not sites:
        raise GraphError(f"toy graph id {ident!r} describes an empty graph")
    return build_unit_disk_graph(sites, spacing_um, name=ident)


def toy_graph_id(graph: UnitDiskGraph) -> str:
    """Inverse of :func:`parse_toy_graph_id` for graphs inside the window."""
    cols, rows = TOY_WINDOW
    nibbles = [0] * rows
    for x, y in graph.sites:
        if not (0 <= x < cols and 0 <= y < rows):
            raise GraphError(f"site {(x, y)} lies outside the {cols}x{rows} toy window")
        nibbles[y] |= 1 << (cols - 1 - x)
    return "".join(f"{n:X}" for n in nibbles)


def toy_graphs(spacing_um: float = 5.0) -> list[UnitDiskGraph]:
    return [parse_toy_graph_id(i, spacing_um) for i in TOY_GRAPH_IDS]


def triangle_chain_graph(m: int, spacing_um: float = 5.0) -> UnitDiskGraph:
    """Chain of ``m`` alternating up/down triangles on a line.

    The line holds 2m+1 vertices at x = 0..2m; the even ones (x = 0, 2, ...)
    form the MIS.  Tip ``i`` sits above (even ``i``) or below (odd ``i``)
    the line at x = 2i+1.  Line vertices come first in the vertex order.
    """
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise GraphError(f"triangle chain needs m >= 1, got {m!r}")
    m = int(m)
    line = [(x, 0) for x in range(2 * m + 1)]
    tips = [(2 * i + 1, 1 if i % 2 == 0 else -1) for i in range(m)]
    return build_unit_disk_graph(line + tips, spacing_um, name=f"triangle-chain-{m}")


def triangle_chain_configurations(m: int) -> tuple[Bitstring, Bitstring]:
    """(S0, S1) bitstrings on :func:`triangle_chain_graph`: line MIS and tips."""
    n_line = 2 * m + 1
    s0 = tuple(1 if (i < n_line and i % 2 == 0) else 0 for i in range(3 * m + 1))
    s1 = tuple(0 if i < n_line else 1 for i in range(3 * m + 1))
    return s0, s1


# -- classical post-processing ---------------------------------------------

def greedy_repair_mask(mask: int, graph: UnitDiskGraph, rng: np.random.Generator) -> int:
    nbr = graph.neighbor_masks
    edges = graph.sorted_edges
    while True:
        bad = [(i, j) for i, j in edges if mask >> i & 1 and mask >> j & 1]
        if not bad:
            break
        i, j = bad[rng.integers(len(bad))]
        mask &= ~(1 << (i if rng.integers(2) == 0 else j))
    while True:
        free = [v for v in range(graph.order) if not (mask >> v & 1) and not (nbr[v] & mask)]
        if not free:
            break
        mask |= 1 << free[rng.integers(len(free))]
    return mask


def greedy_repair(measured: Sequence[int], graph: UnitDiskGraph, seed: int | np.random.Generator = 0) -> Bitstring:
    """Turn a measured bitstring into a maximal independent set.

    First drops a random endpoint of a random violated edge until the set is
    independent, then adds random free vertices until it is maximal.
    """
    if len(measured) != graph.order:
        raise GraphError(f"bitstring length {len(measured)} does not match graph order {graph.order}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return mask_to_bits(greedy_repair_mask(bits_to_mask(measured), graph, rng), graph.order)
