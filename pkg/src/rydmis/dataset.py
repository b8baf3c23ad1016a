"""Random lattice graphs, representative-dataset selection and graph files."""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import lil_matrix

from .errors import DatasetError, FormatError, GraphError
from .graphs import UnitDiskGraph, build_unit_disk_graph, hardness_fraction, independent_set_census

# the eight symmetries of the square lattice
_SYMMETRIES = (
    lambda x, y: (x, y), lambda x, y: (-x, y), lambda x, y: (x, -y), lambda x, y: (-x, -y),
    lambda x, y: (y, x), lambda x, y: (-y, x), lambda x, y: (y, -x), lambda x, y: (-y, -x),
)


def canonical_sites(sites: Iterable) -> tuple[tuple[int, int], ...]:
    """Lexicographically smallest sorted site tuple over symmetries and translations."""
    pts = [tuple(map(int, s)) for s in sites]
    best = None
    for f in _SYMMETRIES:
        img = [f(x, y) for x, y in pts]
        mx = min(p[0] for p in img)
        my = min(p[1] for p in img)
        cand = tuple(sorted((x - mx, y - my) for x, y in img))
        if best is None or cand < best:
            best = cand
    return best


def canonical_graph(graph: UnitDiskGraph) -> UnitDiskGraph:
    return build_unit_disk_graph(canonical_sites(graph.sites), graph.spacing_um, graph.name)


def default_window(order: int, density: float = 0.8) -> tuple[int, int]:
    """Smallest near-square window whose area holds ``order`` sites at the given filling."""
    area = math.ceil(order / density)
    w = math.ceil(math.sqrt(area))
    return w, math.ceil(area / w)


def generate_random_udg(order: int, window: tuple[int, int] | None = None,
                        seed: int | np.random.Generator = 0, *, require_connected: bool = False,
                        spacing_um: float = 5.0, max_tries: int = 10_000) -> UnitDiskGraph:
    """Uniformly sample ``order`` distinct sites of a w x h window; canonical site order."""
    if order < 1:
        raise DatasetError(f"graph order must be >= 1, got {order}")
    w, h = default_window(order) if window is None else window
    if w < 1 or h < 1 or w * h < order:
        raise DatasetError(f"a {w}x{h} window cannot hold {order} sites")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(max_tries):
        pick = rng.choice(w * h, size=order, replace=False)
        sites = [(int(k % w), int(k // w)) for k in pick]
        g = build_unit_disk_graph(canonical_sites(sites), spacing_um)
        if not require_connected or g.is_connected():
            return g
    raise DatasetError(f"no connected {order}-vertex graph found in a {w}x{h} window after {max_tries} draws")


@dataclass(frozen=True)
class PoolEntry:
    graph: UnitDiskGraph
    hp: Fraction

    @property
    def order(self) -> int:
        return self.graph.order

    @property
    def key(self):
        return canonical_sites(self.graph.sites)


def pool_entry(graph: UnitDiskGraph) -> PoolEntry:
    return PoolEntry(graph, hardness_fraction(independent_set_census(graph)))


def _hard_search(order: int, target: float, window: tuple[int, int], rng: np.random.Generator,
                 iters: int, visit) -> None:
    """Hill-climb single-site moves towards log HP = log target, reporting each visited graph."""
    w, h = window
    cells = [(x, y) for y in range(h) for x in range(w)]
    g = generate_random_udg(order, window, rng, require_connected=True)
    cur = list(g.sites)
    e = pool_entry(g)
    visit(e)
    dist = abs(math.log(float(e.hp)) - math.log(target))
    for _ in range(iters):
        occupied = set(cur)
        free = [c for c in cells if c not in occupied]
        k = int(rng.integers(order))
        new = list(cur)
        new[k] = free[int(rng.integers(len(free)))]
        cand = build_unit_disk_graph(canonical_sites(new))
        if not cand.is_connected():
            continue
        ce = pool_entry(cand)
        visit(ce)
        d = abs(math.log(float(ce.hp)) - math.log(target))
        if d <= dist:
            cur, dist = [tuple(s) for s in new], d


def generate_pool(orders: Sequence[int], draws_per_order: int, seed: int = 0, *,
                  hp_targets: Sequence[float] = (), search_iters: int = 300,
                  searches_per_target: int = 2, window_growth: int = 1) -> list[PoolEntry]:
    """Distinct connected random graphs, optionally enriched by HP-targeted searches.

    Uniform sampling rarely produces hardness above ~6 at these orders, so
    each ``hp_targets`` value triggers short hill-climbs per order.
    """
    rng = np.random.default_rng(seed)
    seen: dict = {}

    def visit(e: PoolEntry):
        seen.setdefault(e.key, e)

    for n in orders:
        win = default_window(n)
        for _ in range(draws_per_order):
            visit(pool_entry(generate_random_udg(n, win, rng, require_connected=True)))
        big = (win[0] + window_growth, win[1] + window_growth)
        for t in hp_targets:
            for _ in range(searches_per_target):
                _hard_search(n, t, big, rng, search_iters, visit)
    return sorted(seen.values(), key=lambda e: (e.order, e.hp, e.key))


# -- representative selection ------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    orders: tuple[int, ...] = tuple(range(8, 18))
    per_order: int = 50
    bin_edges: tuple[float, ...] = tuple(3.0 * 2.0 ** (i - 4) for i in range(1, 7))
    per_bin: int = 100
    min_per_cell: int = 0  # hard floor on graphs per (order, bin) cell

    def __post_init__(self):
        if len(self.bin_edges) < 2 or any(b >= c for b, c in zip(self.bin_edges, self.bin_edges[1:])):
            raise DatasetError("bin edges must be strictly increasing")
        if self.per_order * len(self.orders) != self.per_bin * self.n_bins:
            raise DatasetError(f"inconsistent totals: {len(self.orders)} orders x {self.per_order} "
                               f"!= {self.n_bins} bins x {self.per_bin}")

    @property
    def n_bins(self) -> int:
        return len(self.bin_edges) - 1

    @property
    def total(self) -> int:
        return self.per_order * len(self.orders)

    def bin_of(self, hp) -> int | None:
        """1-based bin; the last bin includes its upper edge."""
        x = float(hp)
        for i in range(self.n_bins):
            lo, hi = self.bin_edges[i], self.bin_edges[i + 1]
            if lo <= x < hi or (i == self.n_bins - 1 and x == hi):
                return i + 1
        return None

    def to_dict(self) -> dict:
        return {"orders": list(self.orders), "per_order": self.per_order, "bin_edges": list(self.bin_edges),
                "per_bin": self.per_bin, "min_per_cell": self.min_per_cell}


def _deficient_cells(avail: dict, spec: DatasetSpec) -> list[tuple[int, int, int, int]]:
    ideal = spec.per_bin / len(spec.orders)
    need = max(spec.min_per_cell, math.floor(ideal))
    out = []
    for o in spec.orders:
        for b in range(1, spec.n_bins + 1):
            have = avail.get((o, b), 0)
            if have < need:
                out.append((o, b, have, need))
    return out


def select_representative_dataset(pool: Sequence[PoolEntry], spec: DatasetSpec = DatasetSpec(),
                                  seed: int = 0, *, time_limit: float = 300.0) -> list[PoolEntry]:
    """Choose ``spec.total`` graphs meeting the order, bin and distinct-HP rules exactly.

    Solved as a mixed-integer program over (order, HP value) pairs: hard
    constraints for per-order and per-bin totals and one graph per HP value;
    soft penalties for unequal counts across the (order, bin) cells and for
    gaps in the log-HP spread within each bin, plus a small penalty on the
    covariance between order and log HP.  Ties break by a seeded random
    perturbation.
    """
    rng = np.random.default_rng(seed)
    by_pair: dict[tuple[int, Fraction], list[PoolEntry]] = defaultdict(list)
    for e in pool:
        if e.order in spec.orders and spec.bin_of(e.hp) is not None:
            by_pair[(e.order, e.hp)].append(e)
    pairs = sorted(by_pair)
    avail_cells = Counter((o, spec.bin_of(v)) for o, v in pairs)
    values = sorted({v for _, v in pairs})
    n_orders, n_bins = len(spec.orders), spec.n_bins

    # slots: per_bin equal log-width sub-intervals in each bin
    def slot_of(v):
        b = spec.bin_of(v)
        lo, hi = math.log(spec.bin_edges[b - 1]), math.log(spec.bin_edges[b])
        return b, min(int((math.log(float(v)) - lo) / (hi - lo) * spec.per_bin), spec.per_bin - 1)

    nx = len(pairs)
    cells = [(o, b) for o in spec.orders for b in range(1, n_bins + 1)]
    slots = [(b, s) for b in range(1, n_bins + 1) for s in range(spec.per_bin)]
    n_dev_c, n_dev_s = 2 * len(cells), 2 * len(slots)
    nvar = nx + n_dev_c + n_dev_s + 1  # last variable bounds |cov(order, log HP)|
    if nx < spec.total:
        raise DatasetError(f"pool offers only {nx} distinct (order, HP) candidates, {spec.total} needed; "
                           f"deficient (order, bin) cells: {_fmt_cells(_deficient_cells(avail_cells, spec))}")

    ideal = spec.per_bin / n_orders
    rows = []  # (coefficient dict, lo, hi)
    cell_idx = {c: i for i, c in enumerate(cells)}
    slot_idx = {s: i for i, s in enumerate(slots)}
    by_order = defaultdict(list)
    by_bin = defaultdict(list)
    by_value = defaultdict(list)
    by_cell = defaultdict(list)
    by_slot = defaultdict(list)
    for j, (o, v) in enumerate(pairs):
        b = spec.bin_of(v)
        by_order[o].append(j)
        by_bin[b].append(j)
        by_value[v].append(j)
        by_cell[(o, b)].append(j)
        by_slot[slot_of(v)].append(j)
    for o in spec.orders:
        rows.append(({j: 1.0 for j in by_order[o]}, spec.per_order, spec.per_order))
    for b in range(1, n_bins + 1):
        rows.append(({j: 1.0 for j in by_bin[b]}, spec.per_bin, spec.per_bin))
    for v in values:
        if len(by_value[v]) > 1:
            rows.append(({j: 1.0 for j in by_value[v]}, 0, 1))
    for c in cells:
        k = cell_idx[c]
        coef = {j: 1.0 for j in by_cell[c]}
        coef[nx + 2 * k] = -1.0
        coef[nx + 2 * k + 1] = 1.0
        rows.append((coef, ideal, ideal))
        if spec.min_per_cell:
            rows.append(({j: 1.0 for j in by_cell[c]}, spec.min_per_cell, np.inf))
    for s in slots:
        k = slot_idx[s]
        coef = {j: 1.0 for j in by_slot[s]}
        coef[nx + n_dev_c + 2 * k] = -1.0
        coef[nx + n_dev_c + 2 * k + 1] = 1.0
        rows.append((coef, 1.0, 1.0))
    # with the totals fixed, the order mean and (nearly) the log-HP mean are fixed too,
    # so the covariance between order and log HP is linear in the selection
    o_mean = float(np.mean(spec.orders))
    l_mean = float(np.mean([math.log(spec.bin_edges[b]) + (s + 0.5) / spec.per_bin
                            * (math.log(spec.bin_edges[b + 1]) - math.log(spec.bin_edges[b]))
                            for b in range(n_bins) for s in range(spec.per_bin)]))
    cov = {j: (o - o_mean) * (math.log(float(v)) - l_mean) for j, (o, v) in enumerate(pairs)}
    t_var = nvar - 1
    rows.append(({**{j: -c for j, c in cov.items()}, t_var: 1.0}, 0.0, np.inf))
    rows.append(({**cov, t_var: 1.0}, 0.0, np.inf))
    a = lil_matrix((len(rows), nvar))
    lo = np.empty(len(rows))
    hi = np.empty(len(rows))
    for r, (coef, l, u) in enumerate(rows):
        for j, val in coef.items():
            a[r, j] = val
        lo[r], hi[r] = l, u
    cost = np.concatenate([1e-3 * rng.random(nx), np.full(n_dev_c, 1.0), np.full(n_dev_s, 0.5), [0.05]])
    integrality = np.concatenate([np.ones(nx), np.zeros(n_dev_c + n_dev_s + 1)])
    ub = np.concatenate([np.ones(nx), np.full(n_dev_c + n_dev_s + 1, np.inf)])
    res = milp(cost, constraints=LinearConstraint(a.tocsr(), lo, hi), integrality=integrality,
               bounds=Bounds(np.zeros(nvar), ub), options={"time_limit": time_limit})
    if res.x is None:
        raise DatasetError("pool cannot satisfy the dataset rules; deficient (order, bin) cells: "
                           + _fmt_cells(_deficient_cells(avail_cells, spec)))
    chosen = [pairs[j] for j in range(nx) if res.x[j] > 0.5]
    out = []
    for key in chosen:
        cands = by_pair[key]
        out.append(cands[int(rng.integers(len(cands)))])
    out.sort(key=lambda e: (e.order, e.hp))
    _check_selection(out, spec)
    return out


def _fmt_cells(cells) -> str:
    if not cells:
        return "none below the per-cell ideal (the joint constraints conflict)"
    return ", ".join(f"(order {o}, bin {b}: {have}/{need})" for o, b, have, need in cells)


def _check_selection(sel: Sequence[PoolEntry], spec: DatasetSpec) -> None:
    orders = Counter(e.order for e in sel)
    bins = Counter(spec.bin_of(e.hp) for e in sel)
    hps = [e.hp for e in sel]
    problems = []
    if any(orders[o] != spec.per_order for o in spec.orders) or set(orders) - set(spec.orders):
        problems.append(f"order counts {dict(orders)}")
    if any(bins[b] != spec.per_bin for b in range(1, spec.n_bins + 1)) or None in bins:
        problems.append(f"bin counts {dict(bins)}")
    if len(set(hps)) != len(hps):
        problems.append("repeated hardness values")
    if problems:
        raise DatasetError("selection violates the dataset rules: " + "; ".join(problems))


def order_loghp_correlation(entries: Sequence[PoolEntry]) -> float:
    n = np.array([e.order for e in entries], dtype=float)
    h = np.log([float(e.hp) for e in entries])
    if n.std() == 0 or h.std() == 0:
        return 0.0
    return float(np.corrcoef(n, h)[0, 1])


# -- files -------------------------------------------------------------------

def graphs_to_json(graphs: Sequence[UnitDiskGraph], extra: Sequence[dict] | None = None) -> str:
    items = []
    for k, g in enumerate(graphs):
        d = {"id": g.name or f"g{k}", "spacing_um": g.spacing_um, "sites": [[s.x, s.y] for s in g.sites]}
        if extra is not None:
            d.update(extra[k])
        items.append(d)
    return json.dumps({"graphs": items}, indent=1) + "\n"


def save_graphs(path, graphs: Sequence[UnitDiskGraph], extra: Sequence[dict] | None = None) -> None:
    Path(path).write_text(graphs_to_json(graphs, extra))


def load_graphs(path) -> list[UnitDiskGraph]:
    """Load a graph list; accepts ``{"graphs": [...]}`` or a bare list."""
    text = Path(path).read_text()
    return parse_graphs(text, str(path))


def parse_graphs(text: str, source: str = "<string>") -> list[UnitDiskGraph]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    items = data.get("graphs") if isinstance(data, dict) else data
    if not isinstance(items, list):
        raise FormatError(f"{source}: expected a list of graphs or an object with a 'graphs' list")
    out = []
    for k, item in enumerate(items):
        where = f"{source}: graphs[{k}]"
        if not isinstance(item, dict):
            raise FormatError(f"{where}: expected an object, got {type(item).__name__}")
        sites = item.get("sites")
        if not isinstance(sites, list):
            raise FormatError(f"{where}.sites: missing or not a list")
        for i, s in enumerate(sites):
            if not (isinstance(s, list) and len(s) == 2 and all(isinstance(c, int) and not isinstance(c, bool)
                                                                   for c in s)):
                raise FormatError(f"{where}.sites[{i}]: expected [x, y] integers, got {s!r}")
        spacing = item.get("spacing_um", 5.0)
        if not isinstance(spacing, (int, float)) or isinstance(spacing, bool):
            raise FormatError(f"{where}.spacing_um: expected a number")
        name = item.get("id", item.get("name", f"g{k}"))
        try:
            out.append(build_unit_disk_graph([tuple(s) for s in sites], float(spacing), str(name)))
        except GraphError as exc:
            raise GraphError(f"{where}: {exc}") from None
    return out


@dataclass
class Dataset:
    spec: DatasetSpec
    seed: int
    entries: list[PoolEntry] = field(default_factory=list)
    pool_size: int = 0

    def graphs(self) -> list[UnitDiskGraph]:
        return [e.graph for e in self.entries]

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "pool_size": self.pool_size,
            "graphs": [{"id": e.graph.name, "order": e.order, "hp": float(e.hp),
                        "hp_exact": f"{e.hp.numerator}/{e.hp.denominator}"} for e in self.entries],
        }


def name_entries(entries: Sequence[PoolEntry]) -> list[PoolEntry]:
    out = []
    count = Counter()
    for e in entries:
        count[e.order] += 1
        g = e.graph
        name = f"N{e.order:02d}-{count[e.order]:03d}"
        out.append(PoolEntry(UnitDiskGraph(g.sites, g.spacing_um, name), e.hp))
    return out


def build_dataset(spec: DatasetSpec = DatasetSpec(), seed: int = 0, *, draws_per_order: int = 1000,
                  search_iters: int = 300, searches_per_target: int = 2) -> Dataset:
    """Generate a pool and select a representative dataset from it."""
    targets = [math.sqrt(spec.bin_edges[i] * spec.bin_edges[i + 1]) for i in range(spec.n_bins)]
    pool = generate_pool(spec.orders, draws_per_order, seed, hp_targets=targets,
                         search_iters=search_iters, searches_per_target=searches_per_target)
    sel = select_representative_dataset(pool, spec, seed)
    return Dataset(spec, seed, name_entries(sel), len(pool))


def save_dataset(directory, ds: Dataset) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_graphs(d / "graphs.json", ds.graphs(),
                [{"order": e.order, "hp": float(e.hp)} for e in ds.entries])
    (d / "dataset_manifest.json").write_text(json.dumps(ds.manifest(), indent=1) + "\n")
