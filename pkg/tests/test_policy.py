import numpy as np
import pytest

import viakit as vk

from conftest import random_table, toy_grid
from oracles import enumerate_critical, exhaustive_opt_cell


def _affine(hovership):
    return vk.AffinePolicy([[-0.3]], [0.7], hovership.action_box)


def _random_case(rng, max_states=15, max_actions=15, fail_prob=None):
    """Random viability result plus a random deterministic nominal policy."""
    n_s = int(rng.integers(3, max_states + 1))
    n_a = int(rng.integers(3, max_actions + 1))
    grid = toy_grid(n_s, n_a)
    if fail_prob is None:
        fail_prob = float(rng.uniform(0.05, 0.3))
    table = random_table(rng, n_s, n_a, fail_prob)
    res = vk.viability_from_table(grid, table)
    pi = vk.TablePolicy(grid, rng.uniform(0.0, 1.0, size=(n_s, 1)))
    return res, pi


# --- opt ---------------------------------------------------------------------

def test_opt_nominal_feasible_is_zero_cost():
    grid = toy_grid(3, 5)
    q = vk.QSet.full(grid)
    a_nom = grid.action_values()[2]
    assert vk.opt(q, 0, a_nom) == 2
    assert vk.squared_distance(grid.action_values()[[2]], a_nom)[0] == 0.0


def test_opt_empty_slice_infeasible():
    grid = toy_grid(3, 5)
    assert vk.opt(vk.QSet.empty(grid), 1, [0.3]) is None


def test_opt_two_action_slice():
    grid = vk.GridSpec.from_boxes([[0.0, 1.0]], [[0.0, 0.8]], 3, 5)  # actions 0,0.2,...,0.8
    q = vk.QSet.from_pairs(grid, [(1, 1), (1, 3)])  # slice {0.2, 0.6}
    j = vk.opt(q, 1, [0.35])
    assert grid.action_values()[j][0] == pytest.approx(0.2)


def test_opt_tie_breaks_to_smaller_action():
    grid = vk.GridSpec.from_boxes([[0.0, 1.0]], [[0.0, 1.0]], 3, 5)  # actions 0,0.25,...,1
    q = vk.QSet.from_pairs(grid, [(0, 1), (0, 3)])  # 0.25 and 0.75, both 0.25 away
    assert vk.opt(q, 0, [0.5]) == 1
    assert set(vk.opt_set(q, 0, [0.5])) == {1, 3}


def test_opt_scaled_cost_invariance():
    rng = np.random.default_rng(9)
    grid = toy_grid(6, 9)
    q = vk.QSet(grid, rng.random((6, 9)) < 0.5)
    scaled = lambda acts, nom: 3.7 * vk.squared_distance(acts, nom)
    for i in range(6):
        a_nom = rng.uniform(0, 1, size=1)
        assert vk.opt(q, i, a_nom) == vk.opt(q, i, a_nom, cost=scaled)


# --- optimal policy -----------------------------------------------------------

def test_optimal_policy_equals_nominal_when_viable(small_oracle, hovership):
    pi = _affine(hovership)
    table = vk.optimal_policy(small_oracle.viable, pi)
    grid = small_oracle.grid
    av = grid.action_values()
    sv = grid.state_values()
    for i, j in table.items():
        a_nom = pi.nominal_action(sv[i])
        jstar, best = exhaustive_opt_cell(small_oracle.viable.members[i], av, a_nom)
        assert vk.squared_distance(av[[j]], a_nom)[0] == best
        assert j == jstar


def test_optimal_policy_full_set_snaps_nominal_to_grid(small_grid, hovership):
    pi = _affine(hovership)
    table = vk.optimal_policy(vk.QSet.full(small_grid), pi)
    av = small_grid.action_values()[:, 0]
    sv = small_grid.state_values()
    for i, j in table.items():
        a_nom = pi.nominal_action(sv[i])[0]
        assert abs(av[j] - a_nom) <= np.min(np.abs(av - a_nom)) + 1e-15


def test_optimal_policy_rejects_stochastic_and_empty(small_oracle, hovership):
    with pytest.raises(ValueError):
        vk.optimal_policy(small_oracle.viable, vk.UniformRandomPolicy(hovership.action_box))
    with pytest.raises(ValueError):
        vk.optimal_policy(vk.QSet.empty(small_oracle.grid), _affine(hovership))


# --- critical set ---------------------------------------------------------------

def test_critical_set_empty_when_nominal_viable(small_oracle, hovership):
    # the affine nominal is viable at every kernel state on this benchmark
    crit = vk.critical_set(small_oracle, _affine(hovership))
    assert crit.count() == 0


def test_critical_set_empty_when_everything_viable(hovership, small_grid):
    model = vk.SystemModel(
        name="still", state_box=[[0.0, 2.0]], action_box=[[0.0, 0.8]],
        vector_field=lambda s, a: np.zeros_like(s), hold_duration=1.0, substep=0.5)
    res = vk.compute_viability(model, small_grid)
    assert res.viable == vk.QSet.full(small_grid)
    assert vk.critical_set(res, _affine(hovership)).count() == 0


def test_critical_set_matches_enumeration():
    rng = np.random.default_rng(31)
    nontrivial = 0
    for _ in range(40):
        res, pi = _random_case(rng)
        crit = vk.critical_set(res, pi)
        sv = res.grid.state_values()
        nominal = {i: pi.nominal_action(sv[i]) for i in range(res.grid.state_count)}
        want = enumerate_critical(res, nominal)
        assert {(int(i), int(j)) for i, j in np.argwhere(crit.members)} == want
        nontrivial += bool(want)
        # construction invariants
        assert crit.intersect(res.viable).count() == 0
        assert crit.project().difference(res.kernel).count() == 0
    assert nontrivial > 10


def test_stochastic_critical_set(bench_oracle):
    crit = vk.stochastic_critical_set(bench_oracle)
    want = bench_oracle.kernel.members[:, None] & ~bench_oracle.viable.members
    assert np.array_equal(crit.members, want)
    assert crit.count() == 165


def test_opt_cost_dominance(small_oracle, hovership):
    rng = np.random.default_rng(13)
    pi = _affine(hovership)
    grid = small_oracle.grid
    sv = grid.state_values()
    av = grid.action_values()
    for _ in range(20):
        sub = vk.QSet(grid, small_oracle.viable.members & (rng.random(small_oracle.viable.members.shape) < 0.6))
        for i in np.flatnonzero(small_oracle.kernel.members):
            a_nom = pi.nominal_action(sv[i])
            j_sub = vk.opt(sub, int(i), a_nom)
            if j_sub is None:
                continue
            j_full = vk.opt(small_oracle.viable, int(i), a_nom)
            assert vk.squared_distance(av[[j_sub]], a_nom)[0] >= \
                vk.squared_distance(av[[j_full]], a_nom)[0]


# --- admissibility ---------------------------------------------------------------

def test_viable_set_is_admissible(small_oracle, hovership):
    pi = _affine(hovership)
    verdict = vk.is_admissible(small_oracle.viable, small_oracle, pi)
    assert verdict.admissible
    ok, mismatches = vk.matches_optimal_policy(small_oracle.viable, small_oracle, pi)
    assert ok and not mismatches


def test_one_critical_cell_breaks_admissibility():
    rng = np.random.default_rng(55)
    while True:
        res, pi = _random_case(rng)
        crit = vk.critical_set(res, pi)
        if crit.count() > 0:
            break
    cell = tuple(map(int, np.argwhere(crit.members)[0]))
    k = res.viable.union(vk.QSet.from_pairs(res.grid, [cell]))
    verdict = vk.is_admissible(k, res, pi)
    assert not verdict.admissible
    assert cell in verdict.critical_overlap


def test_admissible_with_unviable_noncritical_cells():
    rng = np.random.default_rng(4)
    found = 0
    while found < 10:
        res, pi = _random_case(rng)
        if res.kernel.count() == 0:
            continue
        graph = vk.optimal_policy_graph(res.viable, pi)
        crit = vk.critical_set(res, pi)
        extra = ~res.viable.members & ~crit.members \
            & (rng.random(res.viable.members.shape) < 0.4)
        k = vk.QSet(res.grid, graph.members | extra)
        verdict = vk.is_admissible(k, res, pi)
        assert verdict.admissible
        ok, _ = vk.matches_optimal_policy(k, res, pi)
        assert ok
        found += 1


def test_theorem_equivalence_randomized():
    """Direct policy equality <=> empty critical overlap, both directions."""
    rng = np.random.default_rng(2718)
    agree = checked = with_overlap = 0
    while checked < 300:
        res, pi = _random_case(rng)
        if res.kernel.count() == 0:
            continue
        graph = vk.optimal_policy_graph(res.viable, pi)
        crit = vk.critical_set(res, pi)
        # random closed supersets of the optimal graph, half avoiding the
        # critical set, half free to intersect it
        avoid = rng.random() < 0.5
        noise = rng.random(graph.members.shape) < rng.uniform(0.05, 0.5)
        if avoid:
            noise &= ~crit.members
        k = vk.QSet(res.grid, graph.members | noise)
        direct, _ = vk.matches_optimal_policy(k, res, pi)
        criterion = k.intersect(crit).count() == 0
        agree += direct == criterion
        with_overlap += not criterion
        checked += 1
    assert agree == checked
    assert 0 < with_overlap < checked
