import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynaq_nav import world as W
from dynaq_nav.world import (AGENT_RADIUS, CYLINDER_RADIUS, Obstacle, Pose, apply_action, classify_contact,
                             classify_sweep, make_world, reset, step_dynamic_obstacles)

R = AGENT_RADIUS


def _empty(agent=Pose(0.0, 0.0, 0.0), wall=0, offset=0.0, obstacles=()):
    return make_world(wall, offset, agent, obstacles)


# --- brute-force oracle: dense samples along the sweep, dense samples of each solid ---

def _solid_samples(world):
    pts = []
    h = world.room.half_extent
    for ob in world.obstacles:
        cx, cy = ob.center
        if ob.kind == "cylinder":
            rr, aa = np.meshgrid(np.linspace(0, ob.radius, 40), np.linspace(-np.pi, np.pi, 400))
        else:
            rr, aa = np.meshgrid(np.linspace(ob.inner_radius, ob.radius, 20),
                                 ob.opening_heading + np.linspace(np.pi / 2, 3 * np.pi / 2, 600))
        pts.append(np.stack([cx + rr.ravel() * np.cos(aa.ravel()), cy + rr.ravel() * np.sin(aa.ravel())], 1))
    return np.concatenate(pts) if pts else np.zeros((0, 2))


def _oracle(a, b, world, n=400):
    t = np.linspace(0.0, 1.0, n)[:, None]
    P = np.asarray(a) + t * (np.asarray(b) - np.asarray(a))
    h = world.room.half_extent
    (e0x, e0y), (e1x, e1y) = world.exit.segment(world.room)
    s = np.linspace(0, 1, 2000)[:, None]
    exit_pts = np.array([e0x, e0y]) + s * np.array([e1x - e0x, e1y - e0y])
    d_exit = np.min(np.hypot(P[:, None, 0] - exit_pts[None, :, 0], P[:, None, 1] - exit_pts[None, :, 1]))
    if d_exit < R:
        return "exit", abs(d_exit - R)
    d_wall = h - np.max(np.abs(P))
    if d_wall < R:
        return "wall", abs(d_wall - R)
    S = _solid_samples(world)
    if len(S):
        d = np.min(np.hypot(P[:, None, 0] - S[None, :, 0], P[:, None, 1] - S[None, :, 1]))
        if d < R:
            return "obstacle", abs(d - R)
        return "none", min(abs(d - R), abs(d_wall - R), abs(d_exit - R))
    return "none", min(abs(d_wall - R), abs(d_exit - R))


def test_wrap_angle_range():
    for t in np.linspace(-20, 20, 1001):
        w = W.wrap_angle(t)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(t), abs_tol=1e-12)
    assert W.wrap_angle(-math.pi) == math.pi


def test_classify_examples():
    world = _empty()
    assert classify_contact(Pose(0, 0, 0), world) == "none"
    assert classify_contact(Pose(1.20, 0, 0), world) == "wall"  # 0.05 < 0.106 from the east wall
    cyl = _empty(obstacles=[Obstacle.cylinder(0.0, 0.0)])
    assert classify_contact(Pose(0.25, 0, 0), cyl) == "obstacle"  # 0.25 < 0.2584
    assert classify_contact(Pose(0.26, 0, 0), cyl) == "none"


def test_exit_priority_over_wall():
    world = _empty(wall=1, offset=0.0)
    assert classify_contact(Pose(1.20, 0.0, 0), world) == "exit"
    # disk overlaps the wall just past the exit edge and the exit itself
    assert classify_contact(Pose(1.20, 0.3, 0), world) == "exit"
    assert classify_contact(Pose(1.20, 0.4, 0), world) == "wall"


def test_apply_action_examples():
    out = apply_action(_empty(), 3)
    assert out.new_agent == Pose(0.1524, 0.0, 0.0)
    assert out.reward == -0.1 and not out.terminal and out.contact == "none"
    out = apply_action(_empty(), 5)
    assert out.new_agent.x == pytest.approx(0.0, abs=1e-15)
    assert out.new_agent.y == pytest.approx(0.1524)
    assert out.new_agent.theta == pytest.approx(math.pi / 2)


def test_apply_action_blocked_by_east_wall():
    start = Pose(1.18, 0.0, 0.0)
    world = _empty(agent=start, wall=0, offset=0.0)
    out = apply_action(world, 3)
    assert out.new_agent is start
    assert out.reward == -0.1 and out.terminal is False and out.contact == "wall"
    assert _oracle((1.18, 0.0), (1.18 + 0.1524, 0.0), world)[0] == "wall"


def test_apply_action_reaching_exit_is_terminal():
    world = _empty(agent=Pose(1.0, 0.0, 0.0), wall=1, offset=0.0)
    out = apply_action(world, 3)
    assert out.terminal and out.reward == 0.0 and out.contact == "exit"
    assert out.new_agent.x == pytest.approx(1.1524)


def test_action_angles_ascending():
    assert W.ACTION_ANGLES_DEG == (-135.0, -90.0, -45.0, 0.0, 45.0, 90.0, 135.0)


def test_sweep_prevents_tunnelling_through_arc():
    arc = Obstacle.concave_arc(0.0, 0.0, opening_heading=0.0)  # solid side faces -x
    world = _empty(obstacles=[arc])
    # both end points clear of the 0.1 m thick wall, path crosses it
    a, b = (-0.33, 0.0), (-0.78, 0.0)
    assert classify_contact(Pose(*a, 0), world) == "none"
    assert classify_contact(Pose(*b, 0), world) == "none"
    assert classify_sweep(a, b, world) == "obstacle"


def _random_world(rng):
    kind = rng.integers(3)
    obstacles = []
    if kind == 1:
        obstacles = [Obstacle.cylinder(*rng.uniform(-0.7, 0.7, 2))]
    elif kind == 2:
        obstacles = [Obstacle.concave_arc(*rng.uniform(-0.3, 0.3, 2), opening_heading=rng.uniform(-np.pi, np.pi))]
    return make_world(int(rng.integers(4)), float(rng.uniform(-1.0, 1.0)), Pose(0, 0, 0), obstacles)


def test_classify_sweep_matches_brute_force():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(400):
        world = _random_world(rng)
        a = rng.uniform(-1.2, 1.2, 2)
        ang = rng.uniform(-np.pi, np.pi)
        b = a + 0.1524 * np.array([np.cos(ang), np.sin(ang)])
        expected, margin = _oracle(a, b, world)
        if margin < 3e-3:  # sampling resolution of the oracle
            continue
        assert classify_sweep(tuple(a), tuple(b), world) == expected, (a, b, world)
        checked += 1
    assert checked > 300


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_classify_contact_mirror_equivariant(seed):
    rng = np.random.default_rng(seed)
    world = _random_world(rng)
    pose = Pose(*rng.uniform(-1.3, 1.3, 2), rng.uniform(-np.pi, np.pi))
    world = replace(world, agent=pose)
    m = world.mirrored_x()
    assert classify_contact(world.agent, world) == classify_contact(m.agent, m)


@pytest.mark.parametrize("name", sorted(W.SCENARIOS))
def test_reset_invariants_over_seeds(name):
    sc = W.get_scenario(name)
    lim = 1.25 - R
    for seed in range(1000):
        w = reset(sc, np.random.default_rng(seed))
        a = w.agent
        assert abs(a.x) <= lim and abs(a.y) <= lim and -math.pi < a.theta <= math.pi
        assert w.step_count == 0
        assert classify_contact(a, w) == "none"
        lo, hi = w.exit.segment(w.room)
        assert all(abs(c) <= 1.25 + 1e-12 for c in lo + hi)
        cyl = [o for o in w.obstacles if o.kind == "cylinder"]
        assert len(cyl) == sc.n_cylinders
        assert sum(o.kind == "concave_arc" for o in w.obstacles) == int(sc.has_concave)
        half = sc.dynamic_region_half if sc.cylinders_dynamic else sc.static_region_half
        sep = sc.dynamic_separation if sc.cylinders_dynamic else sc.static_separation
        for i, o in enumerate(cyl):
            assert o.radius == CYLINDER_RADIUS and o.height == 0.3 and o.dynamic == sc.cylinders_dynamic
            assert abs(o.center[0]) <= half and abs(o.center[1]) <= half
            assert math.hypot(o.center[0] - a.x, o.center[1] - a.y) >= 0.5
            for p in cyl[i + 1:]:
                assert math.hypot(o.center[0] - p.center[0], o.center[1] - p.center[1]) >= sep
        for o in w.obstacles:
            if o.kind == "concave_arc":
                assert o.center == (0.0, 0.0)
                assert (o.radius, o.thickness, o.height) == (0.6, 0.1, 0.25)


def test_reset_examples():
    w = reset(W.get_scenario("empty"), np.random.default_rng(0))
    assert w.obstacles == ()
    w = reset(W.get_scenario("cyl3"), np.random.default_rng(0))
    assert len(w.obstacles) == 3
    assert all(abs(c) <= 0.7 for o in w.obstacles for c in o.center)


def test_reset_exit_uniform_over_walls():
    rng = np.random.default_rng(5)
    walls = [reset(W.get_scenario("empty"), rng).exit.wall_index for _ in range(4000)]
    counts = np.bincount(walls, minlength=4)
    assert np.all(np.abs(counts - 1000) < 4 * math.sqrt(4000 * 0.25 * 0.75))


def test_reset_concavity_spawn():
    sc = W.get_scenario("concave")
    rng = np.random.default_rng(2)
    for _ in range(200):
        w = reset(sc, rng, agent_region="concavity")
        assert W.in_concavity(w.agent.x, w.agent.y, w.obstacles[0])
        assert classify_contact(w.agent, w) == "none"


def test_reset_impossible_constraints_raise():
    sc = replace(W.get_scenario("cyl3"), n_cylinders=12, static_separation=1.0, max_attempts=10_000)
    with pytest.raises(W.ConfigurationError):
        reset(sc, np.random.default_rng(0))


def test_collision_invalidation_bit_identical():
    rng = np.random.default_rng(3)
    sc = W.get_scenario("cyl3")
    blocked = 0
    for _ in range(300):
        w = reset(sc, rng)
        for _ in range(60):
            a = int(rng.integers(7))
            out = apply_action(w, a)
            if out.contact in ("wall", "obstacle"):
                blocked += 1
                assert out.new_agent == w.agent and out.new_agent is w.agent
                assert (out.new_agent.x, out.new_agent.y, out.new_agent.theta) == (w.agent.x, w.agent.y, w.agent.theta)
            if out.terminal:
                break
            w = W.advance(w, out)
    assert blocked > 100


@pytest.mark.parametrize("name", ["empty", "cyl3", "concave", "dyn3"])
def test_agent_never_overlaps(name):
    rng = np.random.default_rng(9)
    sc = W.get_scenario(name)
    for _ in range(100):
        w = reset(sc, rng)
        for _ in range(100):
            out = apply_action(w, int(rng.integers(7)))
            if out.terminal:  # exit wins even if the final disk also grazes a wall corner
                break
            w = W.advance(w, out)
            assert classify_contact(w.agent, w) == "none"
            w = step_dynamic_obstacles(w, rng)
            assert classify_contact(w.agent, w) == "none"


def test_dynamic_bound_respected_at_edge():
    sc = W.get_scenario("dyn1")
    ob = Obstacle.cylinder(0.74, 0.0, dynamic=True, heading=0.0)  # pointing out of the bound
    w = make_world(0, 0.0, Pose(-1.0, -1.0, 0.0), [ob], scenario=sc)
    rng = np.random.default_rng(0)
    for _ in range(200):
        w = step_dynamic_obstacles(w, rng)
        x, y = w.obstacles[0].center
        assert abs(x) <= 0.75 and abs(y) <= 0.75


def test_dynamic_pair_separation():
    sc = W.get_scenario("dyn3")
    obs = [Obstacle.cylinder(0.0, 0.0, True, 0.0), Obstacle.cylinder(0.51, 0.0, True, math.pi)]
    w = make_world(0, 0.0, Pose(-1.0, -1.0, 0.0), obs, scenario=sc)
    rng = np.random.default_rng(1)
    for _ in range(500):
        w = step_dynamic_obstacles(w, rng)
        (ax, ay), (bx, by) = (o.center for o in w.obstacles)
        assert math.hypot(ax - bx, ay - by) >= 0.5


def test_dynamic_unconstrained_step_length():
    sc = W.get_scenario("dyn1")
    w = make_world(0, 0.0, Pose(-1.0, -1.0, 0.0), [Obstacle.cylinder(0.0, 0.0, True, 0.3)], scenario=sc)
    w2 = step_dynamic_obstacles(w, np.random.default_rng(0))
    (x0, y0), (x1, y1) = w.obstacles[0].center, w2.obstacles[0].center
    assert math.hypot(x1 - x0, y1 - y0) == pytest.approx(0.025, abs=1e-15)


def test_dynamic_random_walk_invariants():
    sc = W.get_scenario("dyn3")
    rng = np.random.default_rng(4)
    w = reset(sc, rng)
    steps = 0
    while steps < 10_000:
        prev = [o.center for o in w.obstacles]
        w = step_dynamic_obstacles(w, rng)
        steps += 1
        cur = [o.center for o in w.obstacles]
        for (x0, y0), (x1, y1) in zip(prev, cur):
            d = math.hypot(x1 - x0, y1 - y0)
            assert d == 0.0 or abs(d - 0.025) < 1e-12
            assert abs(x1) <= 0.75 and abs(y1) <= 0.75
            assert math.hypot(x1 - w.agent.x, y1 - w.agent.y) >= R + CYLINDER_RADIUS
        for i in range(3):
            for j in range(i + 1, 3):
                assert math.hypot(cur[i][0] - cur[j][0], cur[i][1] - cur[j][1]) >= 0.5
        if steps % 500 == 0:  # relocate the agent so obstacles meet it in new places
            while True:
                a = Pose(*rng.uniform(-1.1, 1.1, 2), 0.0)
                if all(math.hypot(x - a.x, y - a.y) >= R + CYLINDER_RADIUS for x, y in cur):
                    break
            w = replace(w, agent=a)
