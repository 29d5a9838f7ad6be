"""Cascade composition: stacking, weighting, transparency, checkpoints."""

import json

import numpy as np
import pytest

from canrl.cascade import (
    AttributeModule,
    BaseModule,
    CascadePolicy,
    attribute_module_from_dict,
    attribute_module_to_dict,
    base_act,
    base_module_from_dict,
    base_module_to_dict,
    cascade_act,
    combine,
    compensate,
    compensation_penalty,
    make_cascade,
    weight_schedule,
)
from canrl.attributes import reset
from canrl.dynamics import SimConfig
from canrl.errors import TaskConfigError
from canrl.nets import DenseNet, GaussianPolicy
from canrl.taskio import load_stock_task, point_sim_config

CFG = point_sim_config()


def fresh_base(seed=0, robot="point"):
    rng = np.random.default_rng(seed)
    state_dim = 6 if robot == "point" else 12
    adim = 2 if robot == "point" else 5
    return BaseModule(
        robot,
        GaussianPolicy.create(state_dim, adim, rng),
        DenseNet.create([state_dim, 64, 64, 1], rng),
    )


def fresh_module(seed=1, kind="obstacle", robot="point", entity_index=0, weight=0.1):
    rng = np.random.default_rng(seed)
    view = {"obstacle": 9, "door": 9, "speed": 5, "force": 6}[kind]
    adim = 2
    return AttributeModule(
        robot,
        kind,
        GaussianPolicy.create(view + adim, adim, rng),
        DenseNet.create([6 + view, 64, 64, 1], rng),
        weight=weight,
        entity_index=entity_index,
    )


def obstacle_world(level=0.3, seed=0):
    loaded = load_stock_task("point_obstacle")
    return loaded.task, reset(loaded.task, level, np.random.default_rng(seed))


class TestActs:
    def test_empty_cascade_equals_base(self):
        base = fresh_base()
        cascade = make_cascade(base, [], CFG)
        task, world = obstacle_world()
        a, rec = cascade_act(cascade, world, stochastic=False)
        view = cascade.base_spec.extract(world)
        a0, lp0 = base_act(base, view, stochastic=False)
        assert np.array_equal(a, a0)
        assert rec.base_log_prob == lp0
        assert rec.final_action is a or np.array_equal(rec.final_action, a)

    def test_zero_weight_module_is_transparent(self):
        base = fresh_base()
        module = fresh_module(weight=0.0)
        cascade = make_cascade(base, [module], CFG)
        _, world = obstacle_world()
        a, rec = cascade_act(cascade, world, stochastic=False)
        assert np.array_equal(a, rec.base_action)

    def test_module_shifts_action(self):
        base = fresh_base()
        module = fresh_module(weight=1.0)
        # pin the comp net's output to a constant
        module.comp_policy.mean_net.weights[-1][:] = 0.0
        module.comp_policy.mean_net.biases[-1][:] = 0.3
        cascade = make_cascade(base, [module], CFG)
        _, world = obstacle_world()
        a, rec = cascade_act(cascade, world, stochastic=False)
        assert not np.array_equal(a, rec.base_action)
        assert np.allclose(a, rec.base_action + 0.3, atol=1e-12)

    def test_comp_input_is_view_then_action(self):
        # linear comp net that copies the incoming action slots
        view_dim, adim = 9, 2
        w = np.zeros((view_dim + adim, adim))
        w[view_dim, 0] = 1.0
        w[view_dim + 1, 1] = 1.0
        comp = GaussianPolicy(
            DenseNet([view_dim + adim, adim], [w], [np.zeros(adim)]), np.zeros(adim)
        )
        module = AttributeModule(
            "point", "obstacle", comp,
            DenseNet.create([15, 8, 1], np.random.default_rng(0)), weight=0.5,
        )
        base = fresh_base()
        cascade = make_cascade(base, [module], CFG)
        _, world = obstacle_world()
        a, rec = cascade_act(cascade, world, stochastic=False)
        assert np.allclose(a, 1.5 * rec.base_action, atol=1e-12)

    def test_two_modules_stack_in_order(self):
        base = fresh_base()
        m1 = fresh_module(seed=1, weight=1.0)
        m2 = fresh_module(seed=2, weight=1.0, entity_index=1)
        m1.comp_policy.mean_net.biases[-1][:] = 0.2
        m2.comp_policy.mean_net.biases[-1][:] = -0.1
        cascade = make_cascade(base, [m1, m2], CFG)
        loaded = load_stock_task("point_two_obstacles")
        world = reset(loaded.task, 0.3, np.random.default_rng(3))
        a, rec = cascade_act(cascade, world, stochastic=False)
        assert len(rec.stack_actions) == 2
        assert np.array_equal(a, rec.stack_actions[-1])
        # second module saw the first module's output
        assert np.allclose(rec.comp_inputs[1][-2:], rec.stack_actions[0], atol=1e-15)

    def test_stochastic_needs_rng(self):
        base = fresh_base()
        with pytest.raises(ValueError):
            base_act(base, np.zeros(6), rng=None, stochastic=True)

    def test_stochastic_reproducible(self):
        base = fresh_base()
        cascade = make_cascade(base, [fresh_module()], CFG)
        _, world = obstacle_world()
        a1, _ = cascade_act(cascade, world, np.random.default_rng(5), stochastic=True)
        a2, _ = cascade_act(cascade, world, np.random.default_rng(5), stochastic=True)
        assert np.array_equal(a1, a2)


class TestCombine:
    def test_weighted_sum(self):
        out = combine(
            np.array([0.5, 0.0]), np.array([0.2, -0.4]), 0.5, np.ones(2)
        )
        assert np.allclose(out, [0.6, -0.2], atol=1e-15)

    def test_clamped_to_limits(self):
        out = combine(np.array([0.9, -0.9]), np.array([1.0, -1.0]), 1.0, np.ones(2))
        assert np.array_equal(out, [1.0, -1.0])


class TestWeightSchedule:
    def test_ramp_endpoints(self):
        assert weight_schedule(0, 100) == pytest.approx(0.1)
        assert weight_schedule(50, 100) == pytest.approx(0.55)
        assert weight_schedule(100, 100) == 1.0
        assert weight_schedule(500, 100) == 1.0

    def test_monotone(self):
        vals = [weight_schedule(i, 37) for i in range(120)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_zero_ramp_is_full_weight(self):
        assert weight_schedule(0, 0) == 1.0


class TestPenalty:
    def test_quadratic_in_compensation(self):
        assert compensation_penalty(np.array([0.3, 0.4]), 0.01) == pytest.approx(-0.0025)
        assert compensation_penalty(np.zeros(2), 0.01) == 0.0
        assert compensation_penalty(np.array([1.0, 0.0]), 0.02) == pytest.approx(-0.02)


class TestValidation:
    def test_robot_mismatch_rejected(self):
        base = fresh_base(robot="point")
        rng = np.random.default_rng(0)
        arm_module = AttributeModule(
            "arm", "obstacle",
            GaussianPolicy.create(20, 5, rng), DenseNet.create([27, 8, 1], rng),
        )
        with pytest.raises(TaskConfigError):
            make_cascade(base, [arm_module], CFG)

    def test_wrong_module_width_rejected(self):
        base = fresh_base()
        rng = np.random.default_rng(0)
        bad = AttributeModule(
            "point", "obstacle",
            GaussianPolicy.create(7, 2, rng), DenseNet.create([15, 8, 1], rng),
        )
        with pytest.raises(TaskConfigError):
            make_cascade(base, [bad], CFG)

    def test_wrong_base_width_rejected(self):
        rng = np.random.default_rng(0)
        bad = BaseModule(
            "point", GaussianPolicy.create(9, 2, rng), DenseNet.create([9, 8, 1], rng)
        )
        with pytest.raises(TaskConfigError):
            make_cascade(bad, [], CFG)


class TestCheckpoints:
    def test_base_round_trip(self):
        base = fresh_base()
        blob = json.dumps(base_module_to_dict(base))
        back = base_module_from_dict(json.loads(blob))
        assert back.robot == "point"
        assert back.frozen
        for a, b in zip(base.policy.parameters(), back.policy.parameters()):
            assert a.tobytes() == b.tobytes()

    def test_module_round_trip_rebinds_entity(self):
        module = fresh_module(weight=0.73)
        blob = json.dumps(attribute_module_to_dict(module))
        back = attribute_module_from_dict(json.loads(blob), entity_index=1)
        assert back.kind == "obstacle"
        assert back.weight == 0.73
        assert back.entity_index == 1
        for a, b in zip(module.comp_policy.parameters(), back.comp_policy.parameters()):
            assert a.tobytes() == b.tobytes()

    def test_kind_tag_enforced(self):
        base = fresh_base()
        with pytest.raises(TaskConfigError):
            attribute_module_from_dict(base_module_to_dict(base))
        module = fresh_module()
        with pytest.raises(TaskConfigError):
            base_module_from_dict(attribute_module_to_dict(module))
