import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ROW3, bounds_grid_oracle, random_graph
from rydmis.bounds import (HP_BIN_EDGES, ensemble_bounds_stats, exact_detuning_bounds, hp_bin,
                           recommended_interval, triangle_chain_sigma)
from rydmis.errors import EnumerationLimitError, RydmisError
from rydmis.graphs import (build_unit_disk_graph, parse_toy_graph_id, triangle_chain_configurations,
                           triangle_chain_graph)
from rydmis.hamiltonian import DEFAULT_CONSTANTS, PhysicalConstants, configuration_energy, interaction_table

V0 = DEFAULT_CONSTANTS.v0(5.0)


def test_three_atom_row_bounds():
    b = exact_detuning_bounds(build_unit_disk_graph(ROW3))
    assert b.feasible
    assert b.lower == pytest.approx(V0 / 64, rel=1e-12)
    assert b.upper == pytest.approx(2 * V0, rel=1e-12)
    assert b.contains(V0) and not b.contains(2 * V0) and not b.contains(V0 / 64)


def test_single_vertex_bounds():
    b = exact_detuning_bounds(build_unit_disk_graph([(0, 0)]))
    assert b.lower == 0.0 and b.unbounded and b.feasible


def test_bounds_refuse_above_limit():
    with pytest.raises(EnumerationLimitError):
        exact_detuning_bounds(triangle_chain_graph(7))


def check_against_oracle(g):
    b = exact_detuning_bounds(g)
    hi = b.upper_over_v0 if not b.unbounded else 3.0
    lo_o, hi_o, res, ok, grid = bounds_grid_oracle(g, 4001, delta_max=1.2345 * hi)
    if not b.feasible:
        assert not ok[grid > 0].any()
        return
    assert lo_o is not None
    assert abs(lo_o - b.lower_over_v0) <= res * (1 + 1e-9)
    if b.unbounded:
        assert ok[-1]
    else:
        assert abs(hi_o - b.upper_over_v0) <= res * (1 + 1e-9)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
def test_bounds_match_grid_oracle(n, seed):
    check_against_oracle(random_graph(np.random.default_rng(seed), n))


def test_bounds_on_toy_graphs_match_oracle():
    for ident in ("7DE", "EBE", "EFE"):
        check_against_oracle(parse_toy_graph_id(ident))


def test_bounds_scale_linearly_with_c6():
    g = parse_toy_graph_id("E7E")
    a = exact_detuning_bounds(g)
    b = exact_detuning_bounds(g, PhysicalConstants(c6=2 * DEFAULT_CONSTANTS.c6))
    assert b.lower == pytest.approx(2 * a.lower, rel=1e-14)
    assert b.upper == pytest.approx(2 * a.upper, rel=1e-14)


def test_triangle_chain_sums():
    s1 = triangle_chain_sigma(1)
    assert s1.sigma0 == 1.0 and s1.sigma1 == 0.0
    diffs = [triangle_chain_sigma(m).difference for m in range(1, 31)]
    assert all(d > 0 for d in diffs)
    assert all(b > a for a, b in zip(diffs, diffs[1:]))
    assert diffs[8] > 8 and diffs[7] < 8
    with pytest.raises(RydmisError):
        triangle_chain_sigma(0)


def test_triangle_chain_energies_match_configuration_energy():
    for m in range(1, 6):
        g = triangle_chain_graph(m)
        t = interaction_table(g)
        s0, s1 = triangle_chain_configurations(m)
        sums = triangle_chain_sigma(m)
        for delta in (0.0, 17.0, 40.0):
            assert abs(sums.energy0(delta, V0) - configuration_energy(s0, delta, t)) <= 1e-9 * V0
            assert abs(sums.energy1(delta, V0) - configuration_energy(s1, delta, t)) <= 1e-9 * V0


def test_triangle_chain_bounds_feasible_and_growing():
    lows = []
    for m in (1, 2, 3):
        b = exact_detuning_bounds(triangle_chain_graph(m))
        assert b.feasible
        assert b.lower >= triangle_chain_sigma(m).lower_bound(V0) * (1 - 1e-12)
        lows.append(b.lower)
    assert lows[0] < lows[1] < lows[2]


def test_recommended_interval():
    lo, hi = recommended_interval(5.0)
    assert lo == pytest.approx(28.909, abs=5e-4)
    assert hi == pytest.approx(43.364, abs=5e-4)


def test_hp_bins():
    assert HP_BIN_EDGES == (0.375, 0.75, 1.5, 3.0, 6.0, 12.0)
    assert hp_bin(0.375) == 1 and hp_bin(0.75) == 2 and hp_bin(2.5) == 3
    assert hp_bin(12.0) == 5 and hp_bin(12.1) is None and hp_bin(0.3) is None


def test_ensemble_stats():
    graphs = [triangle_chain_graph(m) for m in (1, 2, 3)] + [parse_toy_graph_id(i) for i in ("7DE", "EBE")]
    st_ = ensemble_bounds_stats(graphs)
    assert st_.n_graphs == 5 and st_.n_infeasible == 0
    assert 0 <= st_.fraction_both_ok <= 1
    assert sum(b.count for b in st_.per_bin.values()) == 5
    for b in st_.per_bin.values():
        assert list(b.lower_quantiles) == sorted(b.lower_quantiles)
        assert not any(math.isnan(x) for x in b.upper_quantiles)
    with pytest.raises(RydmisError):
        ensemble_bounds_stats([])
