import itertools

import numpy as np
import pytest

from rydmis.graphs import build_unit_disk_graph

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line pass/fail verdict for the acceptance summary."""

    def _report(label: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_force_independent_sets(graph):
    """All independent sets by checking every subset against every edge."""
    n = graph.order
    edges = list(graph.edges)
    out = []
    for bits in itertools.product((0, 1), repeat=n):
        if all(not (bits[i] and bits[j]) for i, j in edges):
            out.append(bits)
    return out


def random_graph(rng, n, width=None, height=None):
    width = width or int(np.ceil(np.sqrt(n / 0.7)))
    height = height or int(np.ceil(n / width)) + 1
    cells = [(x, y) for x in range(width) for y in range(height)]
    pick = rng.choice(len(cells), size=n, replace=False)
    return build_unit_disk_graph([cells[k] for k in pick])


ROW3 = [(0, 0), (1, 0), (2, 0)]


def configuration_energies(graph):
    """Interaction energy / V0 and size of all 2^N configurations, from coordinates."""
    n = graph.order
    pos = np.array([[s.x, s.y] for s in graph.sites], dtype=float)
    masks = np.arange(2**n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    energy = np.zeros(2**n)
    independent = np.ones(2**n, dtype=bool)
    for i, j in itertools.combinations(range(n), 2):
        d2 = float(np.sum((pos[i] - pos[j]) ** 2))
        both = (bits[:, i] & bits[:, j]).astype(bool)
        energy[both] += 1.0 / d2**3
        if d2 <= 2.0 + 1e-9:
            independent &= ~both
    return energy, bits.sum(axis=1), independent


def bounds_grid_oracle(graph, n_grid=20001, delta_max=None):
    """Scan Delta / V0 on a grid and report where an MIS configuration is the strict ground state.

    Returns (first ok grid value, last ok grid value, grid spacing, ok array, grid).
    """
    energy, size, indep = configuration_energies(graph)
    m = size[indep].max()
    is_mis = indep & (size == m)
    grid = np.linspace(0.0, 3.0 if delta_max is None else delta_max, n_grid)
    mis_min = np.full(grid.size, np.inf)
    other_min = np.full(grid.size, np.inf)
    for k in np.unique(size):
        for sel, target in ((is_mis & (size == k), mis_min), (~is_mis & (size == k), other_min)):
            if sel.any():
                np.minimum(target, energy[sel].min() - k * grid, out=target)
    ok = mis_min < other_min
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return None, None, grid[1] - grid[0], ok, grid
    return grid[idx[0]], grid[idx[-1]], grid[1] - grid[0], ok, grid
