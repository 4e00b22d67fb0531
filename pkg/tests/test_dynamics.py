import numpy as np
import pytest

import viakit as vk
from viakit.dynamics import hovership_field, outside_box_predicate

from oracles import bisect_root, fine_flow, fine_step

# independently computed: fine-step RK4 (substep 1e-4) from s=1.0 under a=0.0
FLOW_1S_FROM_1_A0 = 0.43083733680456815


def test_hovership_model_boxes(hovership):
    assert np.array_equal(hovership.state_box, [[0.0, 2.0]])
    assert np.array_equal(hovership.action_box, [[0.0, 0.8]])
    assert hovership.hold_duration == 1.0
    assert hovership.substeps_per_hold == 100


def test_hovership_field_zero_at_origin_equilibrium():
    ds = hovership_field(np.array([0.0]), np.array([0.1]))
    assert ds[0] == 0.0


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9, 1.1])  # hover thrust stays in the box
def test_flow_equilibrium_is_fixed(hovership, s):
    a = 0.1 + np.tanh(0.75 * s)  # vector field vanishes identically here
    out = vk.flow(hovership, [s], [a], 1.0)
    assert abs(out[0] - s) < 1e-9


def test_flow_max_thrust_equilibrium(hovership):
    s_star = bisect_root(lambda s: np.tanh(0.75 * s) - 0.7, 0.0, 2.0)
    out = vk.flow(hovership, [s_star], [0.8], 1.0)
    assert abs(out[0] - s_star) < 1e-9


def test_flow_against_fine_reference(hovership):
    got = vk.flow(hovership, [1.0], [0.0], 1.0)
    assert abs(got[0] - FLOW_1S_FROM_1_A0) < 1e-6
    ref = fine_flow(hovership.vector_field, [1.0], [0.0], 1.0)
    assert abs(ref[0] - FLOW_1S_FROM_1_A0) < 1e-12


def test_flow_zero_duration_identity(hovership):
    s = np.array([1.234])
    assert vk.flow(hovership, s, [0.3], 0.0)[0] == s[0]


def test_flow_rejects_bad_inputs(hovership):
    with pytest.raises(ValueError):
        vk.flow(hovership, [1.0], [0.9], 1.0)  # action outside box
    with pytest.raises(ValueError):
        vk.flow(hovership, [1.0], [0.3], -1.0)
    with pytest.raises(ValueError):
        vk.flow(hovership, [1.0], [0.3], 0.015)  # not a substep multiple


def test_flow_semigroup(hovership):
    for t1, t2 in [(0.3, 0.7), (0.01, 0.99), (0.5, 0.5)]:
        whole = vk.flow(hovership, [1.5], [0.2], t1 + t2)
        split = vk.flow(hovership, vk.flow(hovership, [1.5], [0.2], t1), [0.2], t2)
        assert abs(whole[0] - split[0]) < 1e-9


def test_rk4_fourth_order_convergence(hovership):
    ref = fine_flow(hovership.vector_field, [1.0], [0.0], 1.0)
    err = {h: abs(vk.flow(hovership.with_substep(h), [1.0], [0.0], 1.0)[0] - ref[0])
           for h in (0.1, 0.05)}
    assert err[0.1] / err[0.05] >= 8.0


def test_step_examples(hovership):
    out = vk.step(hovership, [1.0], [0.8])
    assert not out.failed
    assert 0.0 <= out.state[0] <= 2.0

    out = vk.step(hovership, [0.05], [0.0])
    assert out.failed
    assert bool(hovership.failure_predicate(out.state))

    ref_failed, _ = fine_step(hovership, [0.05], [0.0])
    assert ref_failed
    ref_failed, ref_state = fine_step(hovership, [1.0], [0.8])
    assert not ref_failed
    assert abs(ref_state[0] - vk.step(hovership, [1.0], [0.8]).state[0]) < 1e-6


def test_step_equilibrium_stays_alive():
    model = vk.SystemModel(
        name="still", state_box=[[0.0, 1.0]], action_box=[[0.0, 1.0]],
        vector_field=lambda s, a: np.zeros_like(s),
        hold_duration=1.0, substep=0.1,
        failure_predicate=outside_box_predicate([[0.0, 1.0]]))
    out = vk.step(model, [0.5], [0.5])
    assert not out.failed and out.state[0] == 0.5


def test_step_rejects_failing_start(hovership):
    with pytest.raises(ValueError):
        vk.step(hovership, [2.5], [0.4])


def test_step_never_alive_in_failure_set(hovership):
    rng = np.random.default_rng(3)
    for _ in range(50):
        s = rng.uniform(0.0, 2.0, size=1)
        a = rng.uniform(0.0, 0.8, size=1)
        out = vk.step(hovership, s, a)
        if not out.failed:
            assert not bool(hovership.failure_predicate(out.state))


def test_step_matches_step_many_bitwise(hovership):
    rng = np.random.default_rng(11)
    states = rng.uniform(0.1, 1.9, size=(40, 1))
    actions = rng.uniform(0.0, 0.8, size=(40, 1))
    finals, failed = vk.step_many(hovership, states, actions)
    for k in range(40):
        out = vk.step(hovership, states[k], actions[k])
        assert out.failed == bool(failed[k])
        assert out.state[0] == finals[k, 0]


def test_determinism_bitwise(hovership):
    a = vk.flow(hovership, [1.37], [0.41], 1.0)
    b = vk.flow(hovership, [1.37], [0.41], 1.0)
    assert a[0] == b[0]
    o1 = vk.step(hovership, [0.9], [0.17])
    o2 = vk.step(hovership, [0.9], [0.17])
    assert o1 == o2


def test_integration_divergence_raises():
    model = vk.SystemModel(
        name="blowup", state_box=[[-1.0, 1.0]], action_box=[[0.0, 1.0]],
        vector_field=lambda s, a: s * s * 1e6 + 1.0,
        hold_duration=1.0, substep=0.5)
    with pytest.raises(vk.IntegrationError), np.errstate(over="ignore"):
        vk.flow(model, [1.0], [0.0], 1.0)


def test_model_validation():
    with pytest.raises(ValueError):
        vk.hovership_model(hold_duration=1.0, substep=0.3)  # does not divide
    with pytest.raises(ValueError):
        vk.SystemModel("bad", [[1.0, 0.0]], [[0.0, 1.0]],
                       lambda s, a: s, 1.0, 0.1)
    with pytest.raises(ValueError):
        vk.SystemModel("bad", [[0.0, np.inf]], [[0.0, 1.0]],
                       lambda s, a: s, 1.0, 0.1)


def test_step_outcome_invariants(hovership):
    alive = vk.StepOutcome.alive([1.0])
    failed = vk.StepOutcome.failed_at([-0.01])
    assert not alive.failed and failed.failed
    assert not bool(hovership.failure_predicate(alive.state))
    assert bool(hovership.failure_predicate(failed.state))
