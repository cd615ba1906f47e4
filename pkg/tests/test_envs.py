import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushcost.config import default_config
from pushcost.cost import FixedBounds, RunningBounds
from pushcost.envs import (
    BoundMode,
    Circle,
    ConfigError,
    CostSource,
    Environment,
    RewardConfig,
    TaskSpec,
    UsageError,
    configuration_bit,
    encode_observation,
    fixed_bounds,
    layout,
    reset,
    reward_variable_friction,
    reward_variable_mass,
    robot_step_energy,
    success_friction,
    success_mass,
)
from pushcost.sim import Action, BoxBody, Pose2D, Rect, SimConfig, StepOutcome, WorldState
from pushcost.cost import MotionDelta


def outcome(pushed=False, robot_hit=False, box_hit=False):
    d = MotionDelta(0.01, 0.0) if pushed else MotionDelta()
    return StepOutcome((d,), "box" if pushed else None, robot_hit, box_hit, 0.0,
                       ("box",) if pushed else ())


@pytest.fixture(scope="module")
def friction_spec():
    return default_config("friction").task


@pytest.fixture(scope="module")
def mass_spec():
    return default_config("mass").task


def still(spec, robot_pose=None):
    """Spec without spawn jitter, optionally with the robot moved."""
    sc = replace(spec.scene, spawn_jitter=(0.0, 0.0, 0.0))
    if robot_pose is not None:
        sc = replace(sc, robot=replace(sc.robot, pose=robot_pose))
    return replace(spec, scene=sc)


class TestRewardFriction:
    cfg = RewardConfig(success_R=10.0, collision_rn=-10.0, time_re=-1.0, push_coeff=-0.5)

    def test_cases(self):
        assert reward_variable_friction(outcome(), 0.0, self.cfg, success=True) == 10.0
        assert reward_variable_friction(outcome(robot_hit=True), 0.0, self.cfg) == -10.0
        assert reward_variable_friction(outcome(box_hit=True), 0.0, self.cfg) == -10.0
        assert reward_variable_friction(outcome(pushed=True), 0.4, self.cfg) == pytest.approx(-0.2, abs=1e-15)
        assert reward_variable_friction(outcome(pushed=True), 0.0, self.cfg) == 0.0
        assert reward_variable_friction(outcome(pushed=True), 1.0, self.cfg) == -0.5
        assert reward_variable_friction(outcome(), 0.7, self.cfg) == -1.0

    def test_precedence(self):
        both = outcome(pushed=True, robot_hit=True)
        assert reward_variable_friction(both, 0.5, self.cfg, success=True) == 10.0
        assert reward_variable_friction(both, 0.5, self.cfg) == -10.0

    def test_nocost_push_is_constant(self):
        cfg = replace(self.cfg, cost_source=CostSource.NONE)
        for c in (0.0, 0.3, 1.0):
            assert reward_variable_friction(outcome(pushed=True), c, cfg) == -0.5

    def test_squared_reading(self):
        cfg = replace(self.cfg, squared_push_cost=True)
        assert reward_variable_friction(outcome(pushed=True), 0.4, cfg) == pytest.approx(-0.08, abs=1e-15)

    def test_cost_out_of_range(self):
        with pytest.raises(ValueError):
            reward_variable_friction(outcome(pushed=True), 1.5, self.cfg)

    @given(st.floats(0.0, 1.0), st.booleans(), st.booleans(), st.booleans())
    def test_range(self, c, pushed, hit, success):
        r = reward_variable_friction(outcome(pushed=pushed, robot_hit=hit), c, self.cfg, success)
        assert -10.0 <= r <= 10.0
        if pushed and not hit and not success:
            assert -0.5 <= r <= 0.0


class TestRewardMass:
    cfg = RewardConfig(success_R=100.0, collision_rn=-10.0, time_re=0.0, push_coeff=0.0)

    def test_cases(self):
        assert reward_variable_mass(outcome(), 0.0, self.cfg, success=True) == 100.0
        assert reward_variable_mass(outcome(), 1.0, self.cfg, success=True) == 0.0
        assert reward_variable_mass(outcome(), 0.25, self.cfg, success=True) == 75.0
        assert reward_variable_mass(outcome(robot_hit=True), None, self.cfg) == -10.0
        assert reward_variable_mass(outcome(), None, self.cfg) == 0.0
        assert reward_variable_mass(outcome(pushed=True), None, self.cfg) == 0.0

    def test_nocost_pays_full(self):
        cfg = replace(self.cfg, cost_source=CostSource.NONE)
        assert reward_variable_mass(outcome(), 0.9, cfg, success=True) == 100.0

    def test_success_needs_cost(self):
        with pytest.raises(RuntimeError):
            reward_variable_mass(outcome(), None, self.cfg, success=True)


class TestPredicates:
    goal = Rect(1.0, -0.6, 1.8, -0.05)

    def world(self, *poses):
        spec = default_config("mass").task
        w, _ = layout(spec, 0)
        boxes = tuple(replace(b, pose=p) for b, p in zip(w.boxes, poses))
        return replace(w, boxes=boxes)

    def test_friction_goal(self):
        w = self.world(Pose2D(1.4, -0.3))
        assert success_friction(w, self.goal)
        assert success_friction(self.world(Pose2D(1.8, -0.3)), self.goal)
        assert not success_friction(self.world(Pose2D(1.801, -0.3)), self.goal)

    def test_mass_circle(self):
        c = Circle(0.0, 0.0, 1.3)
        assert success_mass(self.world(Pose2D(1.31, 0), Pose2D(0.5, 0)), c)
        assert not success_mass(self.world(Pose2D(0.7, 0), Pose2D(-0.7, 0)), c)
        assert success_mass(self.world(Pose2D(2, 0), Pose2D(-2, 0)), c)
        assert not success_mass(self.world(Pose2D(1.3, 0), Pose2D(0, 0)), c)


class TestRobotEnergy:
    def test_values(self):
        cfg = SimConfig()
        assert robot_step_energy(Action.STOP, cfg) == 0.0
        assert robot_step_energy(Action.FORWARD, cfg) == pytest.approx(1.2, abs=1e-15)
        assert robot_step_energy(Action.TURN_LEFT, cfg) == pytest.approx(0.6, abs=1e-15)
        assert robot_step_energy(Action.TURN_RIGHT, cfg, k_robot=2.0) == pytest.approx(1.2, abs=1e-15)


class TestFixedBounds:
    def test_translation_only(self, friction_spec):
        spec = replace(friction_spec, sim=replace(friction_spec.sim, k_rot=0.0))
        (lo, hi), (elo, ehi) = fixed_bounds(spec)
        assert lo == 0.0 and elo == 0.0
        assert hi == pytest.approx(0.8 * 10 * 9.81 * 0.036, rel=1e-12)
        assert hi == pytest.approx(2.825, abs=1e-3)
        assert ehi == pytest.approx(hi * spec.episode_horizon, rel=1e-12)

    def test_rotation_adds(self, friction_spec):
        assert fixed_bounds(friction_spec)[0][1] > 0.8 * 10 * 9.81 * 0.036

    @pytest.mark.parametrize("name", ["friction", "mass"])
    def test_bounds_cover_random_play(self, name):
        spec = default_config(name).task
        (_, hi), (_, ehi) = fixed_bounds(spec)
        env = Environment(spec)
        rng = np.random.default_rng(1)
        for ep in range(15):
            env.reset(ep)
            done = False
            while not done:
                tr = env.step(int(rng.choice([0, 0, 0, 0, 1, 2, 3])))
                done = tr.done
                assert 0.0 <= tr.info["push_work"] <= hi
            assert env.trace.episode_work <= ehi


class TestLayout:
    def test_deterministic(self, friction_spec):
        _, a = reset(friction_spec, 11)
        _, b = reset(friction_spec, 11)
        assert a.tobytes() == b.tobytes()

    def test_mass_pair_is_mirrored(self, mass_spec):
        for k in (0, 3, 8):
            w0, g0 = layout(mass_spec, 2 * k)
            w1, g1 = layout(mass_spec, 2 * k + 1)
            assert configuration_bit(2 * k) == 0 and configuration_bit(2 * k + 1) == 1
            r0, r1 = w0.robot.pose, w1.robot.pose
            assert (r1.x, r1.y) == pytest.approx((-r0.x, r0.y), abs=1e-15)
            assert math.cos(r1.yaw) == pytest.approx(-math.cos(r0.yaw), abs=1e-12)
            assert math.sin(r1.yaw) == pytest.approx(math.sin(r0.yaw), abs=1e-12)
            # light and heavy swap sides
            l0, h0 = w0.box("light").pose, w0.box("heavy").pose
            l1, h1 = w1.box("light").pose, w1.box("heavy").pose
            assert (l1.x, l1.y) == pytest.approx((h0.x, h0.y), abs=1e-12)
            assert (h1.x, h1.y) == pytest.approx((l0.x, l0.y), abs=1e-12)
            assert (g1.cx, g1.cy, g1.radius) == (g0.cx, g0.cy, g0.radius)

    def test_mass_boxes_equidistant(self, mass_spec):
        w, g = layout(mass_spec, 0)
        d = [math.hypot(b.pose.x - g.cx, b.pose.y - g.cy) for b in w.boxes]
        assert d[0] == pytest.approx(d[1], abs=1e-9) and max(d) < g.radius
        assert sorted(b.mass for b in w.boxes) == [10.0, 50.0]

    @pytest.mark.parametrize("seed", range(8))
    def test_friction_box_and_goal_on_different_bands(self, friction_spec, seed):
        w, goal = layout(friction_spec, seed)
        f = w.friction
        b = w.boxes[0].pose
        gx, gy = goal.center
        assert f.band_index(b.x, b.y) != f.band_index(gx, gy)
        assert {f.bands[f.band_index(b.x, b.y)][1], f.bands[f.band_index(gx, gy)][1]} == {0.2, 0.8}

    def test_explicit_configuration(self, mass_spec):
        a, _ = layout(mass_spec, 6, configuration=1)
        b, _ = layout(mass_spec, 7)
        assert a.pose_vector().tobytes() == b.pose_vector().tobytes()


class TestObservation:
    def test_center_pose(self, friction_spec):
        w, goal = layout(friction_spec, 0)
        w = replace(w, robot=replace(w.robot, pose=Pose2D(0.0, 0.0, 0.0)))
        obs = encode_observation(w, friction_spec, goal)
        assert len(obs) == friction_spec.obs_dim == 12
        assert list(obs[:4]) == [0.0, 0.0, 1.0, 0.0]

    def test_mirror_pair(self, mass_spec):
        a = encode_observation(*layout(mass_spec, 4)[:1], mass_spec, layout(mass_spec, 4)[1])
        b = encode_observation(*layout(mass_spec, 5)[:1], mass_spec, layout(mass_spec, 5)[1])
        assert len(a) == mass_spec.obs_dim == 15
        # x and cos(yaw) flip under x -> -x; y and sin(yaw) do not
        for k in range(3):
            s = 4 * k
            assert b[s] == pytest.approx(-a[s], abs=1e-12)
            assert b[s + 1] == pytest.approx(a[s + 1], abs=1e-12)
            assert b[s + 3] == pytest.approx(a[s + 3], abs=1e-12)
        assert list(b[12:]) == pytest.approx(list(a[12:]))

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000), st.sampled_from(["friction", "mass"]))
    def test_bounded_over_rollouts(self, seed, name):
        spec = default_config(name).task
        env = Environment(spec)
        obs = env.reset(seed)
        rng = np.random.default_rng(seed)
        for _ in range(200):
            assert np.all(np.isfinite(obs)) and np.all(np.abs(obs) <= 1.0)
            tr = env.step(int(rng.integers(4)))
            obs = tr.observation
            if tr.done:
                break


class TestEnvironmentStep:
    def test_idle_rewards(self, friction_spec, mass_spec):
        env, _ = reset(friction_spec, 0)
        tr = env.step(Action.STOP)
        assert tr.reward == -1.0 and not tr.done and not tr.info["pushed"]
        env, _ = reset(mass_spec, 0)
        tr = env.step(Action.STOP)
        assert tr.reward == 0.0 and tr.info["episode_cost"] is None

    def test_collision_terminates(self, friction_spec):
        spec = still(friction_spec, Pose2D(-2.0, 0.3, math.pi))
        env, _ = reset(spec, 0)
        for _ in range(30):
            tr = env.step(Action.FORWARD)
            if tr.done:
                break
        assert tr.done and tr.reward == -10.0 and tr.info["collided"] and not tr.info["success"]
        assert env.trace.collided
        with pytest.raises(UsageError):
            env.step(Action.STOP)

    def test_horizon(self, friction_spec):
        spec = replace(friction_spec, episode_horizon=3)
        env, _ = reset(spec, 0)
        rewards = [env.step(Action.STOP) for _ in range(3)]
        assert [t.done for t in rewards] == [False, False, True]
        assert rewards[-1].reward == -1.0 and not env.trace.success

    def test_push_prices_work(self, friction_spec):
        env, _ = reset(still(friction_spec), 0)
        works = []
        for _ in range(25):
            tr = env.step(Action.FORWARD)
            if tr.info["pushed"]:
                works.append(tr.info["raw_work"])
                assert tr.info["push_work"] == tr.info["raw_work"]
                assert -0.5 <= tr.reward <= 0.0
                assert 0.0 <= tr.info["step_cost"] <= 1.0
        assert works and all(w > 0 for w in works)
        # the box starts on the 0.8 band
        assert all(mu == 0.8 for mu, _ in env.trace.pushed_segments)
        assert env.step_bounds.count == 25

    def test_robot_energy_source(self, friction_spec):
        spec = friction_spec.with_reward(cost_source=CostSource.ROBOT_ENERGY)
        env, _ = reset(spec, 0)
        assert env.step(Action.FORWARD).info["raw_work"] == pytest.approx(1.2)
        assert env.step(Action.TURN_LEFT).info["raw_work"] == pytest.approx(0.6)

    def test_bounds_persist_across_episodes(self, friction_spec):
        sb = RunningBounds()
        env = Environment(friction_spec, sb)
        env.reset(0)
        for _ in range(5):
            env.step(Action.FORWARD)
        n = sb.count
        env.reset(1)
        assert sb.count == n and env.step_bounds is sb

    def test_evaluation_freezes_bounds(self, friction_spec):
        sb = RunningBounds(0.0, 1.0, 3)
        env = Environment(friction_spec, sb, training=False)
        env.reset(0)
        for _ in range(20):
            env.step(Action.FORWARD)
        assert (sb.min_seen, sb.max_seen, sb.count) == (0.0, 1.0, 3)

    def test_fixed_mode_uses_fixed_bounds(self, friction_spec):
        spec = friction_spec.with_reward(bound_mode=BoundMode.FIXED, fixed_bounds=((0.0, 3.0), (0.0, 300.0)))
        env = Environment(spec)
        assert isinstance(env.step_bounds, FixedBounds) and env.step_bounds.max_seen == 3.0

    def test_fixed_mode_requires_bounds(self):
        with pytest.raises(ConfigError):
            RewardConfig(10.0, bound_mode=BoundMode.FIXED)

    def test_state_round_trip(self, mass_spec):
        env, _ = reset(mass_spec, 5)
        rng = np.random.default_rng(2)
        for _ in range(30):
            env.step(int(rng.integers(4)))
        snap = env.state_dict()
        other = Environment(mass_spec)
        other.load_state_dict(snap)
        acts = rng.integers(0, 4, size=40)
        a = [env.step(int(x)) for x in acts if not env.done]
        b = [other.step(int(x)) for x in acts if not other.done]
        assert [t.observation.tobytes() for t in a] == [t.observation.tobytes() for t in b]
        assert [t.reward for t in a] == [t.reward for t in b]


class TestMassEpisodes:
    def push_out(self, spec, target="light", seed=0):
        from pushcost.harness import push_target_policy
        env = Environment(spec)
        obs = env.reset(seed)
        pol = push_target_policy(target)
        while True:
            tr = env.step(pol(obs, env))
            obs = tr.observation
            if tr.done:
                return env, tr

    def test_success_carries_episode_cost(self, mass_spec):
        env, tr = self.push_out(mass_spec)
        assert tr.info["success"] and tr.info["episode_cost"] == 0.0 and tr.reward == 100.0
        env2, tr2 = self.push_out(mass_spec, "heavy")
        # a fresh environment has fresh bounds: first success again costs 0
        assert tr2.reward == 100.0

    def test_heavier_success_pays_less(self, mass_spec):
        eb = RunningBounds()
        env = Environment(mass_spec, episode_bounds=eb)
        from pushcost.harness import push_target_policy
        rewards = {}
        for target in ("light", "heavy", "light"):
            obs = env.reset(0)
            pol = push_target_policy(target)
            while True:
                tr = env.step(pol(obs, env))
                obs = tr.observation
                if tr.done:
                    break
            rewards.setdefault(target, []).append(tr.reward)
        assert rewards["heavy"] == [0.0]
        assert rewards["light"][0] == 100.0 and rewards["light"][1] == pytest.approx(100.0)

    def test_nocost_success_is_100(self, mass_spec):
        spec = mass_spec.with_reward(cost_source=CostSource.NONE)
        for target in ("light", "heavy"):
            _, tr = self.push_out(spec, target)
            assert tr.reward == 100.0

    def test_collision_free_failure_returns_zero(self, mass_spec):
        spec = replace(mass_spec, episode_horizon=40)
        env, _ = reset(spec, 0)
        total = 0.0
        done = False
        while not done:
            tr = env.step(Action.TURN_LEFT)
            total += tr.reward
            done = tr.done
        assert total == 0.0 and not env.trace.success and not env.trace.collided

    def test_exit_bookkeeping(self, mass_spec):
        env, _ = self.push_out(mass_spec, "heavy")
        assert list(env.trace.exit_steps) == ["heavy"]
        assert env.trace.exit_steps["heavy"] == env.trace.length


def test_bound_mode_never_changes_reward_case(friction_spec):
    """Same actions, running vs fixed bounds: the same reward case fires every step."""
    fixed = friction_spec.with_reward(bound_mode=BoundMode.FIXED, fixed_bounds=fixed_bounds(friction_spec))
    rng = np.random.default_rng(4)
    acts = [0] * 30 + list(rng.choice([0, 0, 1, 2, 3], size=150))

    def cases(spec):
        env, _ = reset(spec, 2)
        out = []
        for a in acts:
            tr = env.step(int(a))
            i = tr.info
            out.append("success" if i["success"] else "collision" if i["collided"]
                       else "push" if i["pushed"] else "idle")
            if tr.done:
                break
        return out

    assert cases(friction_spec) == cases(fixed)


def test_invalid_specs(mass_spec, friction_spec):
    with pytest.raises(ConfigError, match="mirror"):
        replace(mass_spec, scene=replace(mass_spec.scene, mirror="rotate"))
    with pytest.raises(ConfigError, match="equidistant"):
        b = mass_spec.scene.boxes
        moved = (replace(b[0], pose=Pose2D(-0.2, 0.2, 0.0)), b[1])
        replace(mass_spec, scene=replace(mass_spec.scene, boxes=moved))
    with pytest.raises(ConfigError, match="rectangular"):
        replace(friction_spec, goal=Circle(0, 0, 1))
    with pytest.raises(ConfigError, match="horizon"):
        replace(friction_spec, episode_horizon=0)
