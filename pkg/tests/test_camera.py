import math

import numpy as np
import pytest

from dynaq_nav import camera as C
from dynaq_nav import world as W
from dynaq_nav.world import Obstacle, Pose, make_world, reset


# --- independent oracle: march each ray in small steps and test point membership ---

def _march_labels(world, rays=None, ds=5e-4, s_max=4.0):
    rays = C.camera_rays() if rays is None else rays
    p = world.agent
    c, s = math.cos(p.theta), math.sin(p.theta)
    f, r, u = rays[..., 0].ravel(), rays[..., 1].ravel(), rays[..., 2].ravel()
    d = np.stack([f * c + r * s, f * s - r * c, u], 1)
    t = np.arange(ds, s_max, ds)
    out = np.empty(len(d), dtype=int)
    h = world.room.half_extent
    ex = world.exit
    for k, dk in enumerate(d):
        x = p.x + t * dk[0]
        y = p.y + t * dk[1]
        z = C.CAMERA_HEIGHT + t * dk[2]
        hit = np.full(t.shape, -1)
        solid_wall = (np.abs(x) >= h) | (np.abs(y) >= h)
        for ob in world.obstacles:
            rho = np.hypot(x - ob.center[0], y - ob.center[1])
            if ob.kind == "cylinder":
                inside = rho <= ob.radius
            else:
                back = ((x - ob.center[0]) * math.cos(ob.opening_heading)
                        + (y - ob.center[1]) * math.sin(ob.opening_heading)) <= 0
                inside = (rho >= ob.inner_radius) & (rho <= ob.radius) & back
            hit = np.where((hit < 0) & inside & (z <= ob.height) & (z >= 0), C.OBSTACLE, hit)
        hit = np.where((hit < 0) & (z < 0), C.FLOOR, hit)
        hit = np.where((hit < 0) & solid_wall & (z <= world.room.wall_height), C.WALL, hit)
        hit = np.where((hit < 0) & solid_wall & (z > world.room.wall_height), C.SKY, hit)
        first = np.argmax(hit >= 0)
        lab = hit[first]
        if lab == C.WALL:
            xi, yi = x[first], y[first]
            along, idx = ((yi, 1 if xi > 0 else 3) if abs(xi) >= h and abs(yi) < h
                          else (xi, 2 if yi > 0 else 0))
            if idx == ex.wall_index and abs(along - ex.center_offset) <= world.room.exit_width / 2:
                lab = C.EXIT
        out[k] = lab
    return out.reshape(rays.shape[:2])


def test_pixel_to_ray_geometry():
    axis = C.plane_to_ray(0.0, 0.0)
    np.testing.assert_allclose(axis, [1.0, 0.0, 0.0])
    edge = C.plane_to_ray(1.0, 0.0)
    assert math.degrees(math.atan2(edge[1], edge[0])) == pytest.approx(90.0)
    for col in range(C.WIDTH):
        for row in range(C.HEIGHT):
            d = C.pixel_to_ray(col, row)
            assert np.linalg.norm(d) == pytest.approx(1.0)
            m = C.pixel_to_ray(C.WIDTH - 1 - col, row)
            assert (d[0], -d[1], d[2]) == (m[0], m[1], m[2])
    # row 0 looks up, row 6 down, middle row is level
    assert C.pixel_to_ray(10, 0)[2] > 0 > C.pixel_to_ray(10, 6)[2]
    assert C.pixel_to_ray(10, 3)[2] == 0.0
    with pytest.raises(IndexError):
        C.pixel_to_ray(20, 0)


def test_stereographic_radial_law():
    for rho in np.linspace(0.01, 1.2, 25):
        d = C.plane_to_ray(rho, 0.0)
        assert math.atan2(d[1], d[0]) == pytest.approx(2 * math.atan(rho))


def test_render_shape_palette_determinism():
    rng = np.random.default_rng(0)
    for name in W.SCENARIOS:
        w = reset(W.get_scenario(name), rng)
        img = C.render(w)
        assert img.shape == (7, 20, 3) and img.dtype == np.uint8
        flat = C.render_state(w)
        assert flat.shape == (420,)
        np.testing.assert_array_equal(flat[:3], img[0, 0])
        np.testing.assert_array_equal(flat[3:6], img[0, 1])
        np.testing.assert_array_equal(flat[60:63], img[1, 0])
        palette = {tuple(p) for p in C.PALETTE}
        assert all(tuple(px) in palette for px in img.reshape(-1, 3))
        assert np.array_equal(C.render_state(w), flat)


def test_facing_plain_wall_central_columns():
    w = make_world(0, 0.0, Pose(0.0, 0.0, 0.0))  # exit behind the agent, facing the east wall
    lab = C.render_labels(w)
    for col in (9, 10):
        for row in range(7):
            d = C.pixel_to_ray(col, row)
            horiz = math.hypot(d[0], d[1])
            s_wall = 1.25 / (d[0] / horiz)
            z = C.CAMERA_HEIGHT + s_wall * d[2] / horiz
            expected = C.FLOOR if z < 0 else (C.WALL if z <= 1.0 else C.SKY)
            assert lab[row, col] == expected
    assert set(lab[:4, 9:11].ravel()) == {C.WALL}
    assert set(lab[5:, 9:11].ravel()) == {C.FLOOR}


@pytest.mark.parametrize("seed", range(12))
def test_render_matches_ray_marching(seed):
    rng = np.random.default_rng(seed)
    name = sorted(W.SCENARIOS)[seed % len(W.SCENARIOS)]
    w = reset(W.get_scenario(name), rng)
    got = C.render_labels(w)
    want = _march_labels(w)
    assert np.mean(got != want) <= 2 / 140  # grazing rays may land either side of an edge


def test_mirror_equivariance_random_scenes():
    rng = np.random.default_rng(1)
    names = sorted(W.SCENARIOS)
    for k in range(1000):
        w = reset(W.get_scenario(names[k % len(names)]), rng)
        a = C.render(w)
        b = C.render(w.mirrored_x())
        np.testing.assert_array_equal(b, a[:, ::-1])


def test_exit_ahead_then_rotated():
    w = make_world(1, 0.0, Pose(0.25, 0.0, 0.0))
    lab = C.render_labels(w)
    assert (lab[:, 7:13] == C.EXIT).any()
    hi = C.render_labels(w, C.camera_rays(200, 70))
    assert (hi[:, 70:130] == C.EXIT).any()
    turned = make_world(1, 0.0, Pose(0.25, 0.0, math.pi / 2))
    assert not (C.render_labels(turned)[:, 7:13] == C.EXIT).any()
    assert not (C.render_labels(turned, C.camera_rays(200, 70))[:, 70:130] == C.EXIT).any()


def test_occlusion_by_cylinder():
    """A cylinder on the line of sight hides the exit in rows that pass below its top."""
    rng = np.random.default_rng(7)
    for _ in range(100):
        ex = W.ExitSpec(int(rng.integers(4)), float(rng.uniform(-0.9, 0.9)))
        room = W.RoomSpec()
        tx, ty = ex.center(room)
        # camera 1.2-2.0 m inward from the exit, looking at it
        n = {0: (0, 1), 1: (-1, 0), 2: (0, -1), 3: (1, 0)}[ex.wall_index]
        dist = rng.uniform(1.2, 2.0)
        px, py = tx + n[0] * dist, ty + n[1] * dist
        theta = math.atan2(ty - py, tx - px)
        frac = rng.uniform(0.3, 0.7)
        cx, cy = px + frac * (tx - px), py + frac * (ty - py)
        clear = make_world(ex.wall_index, ex.center_offset, Pose(px, py, theta))
        blocked = make_world(ex.wall_index, ex.center_offset, Pose(px, py, theta), [Obstacle.cylinder(cx, cy)])
        a, b = C.render_labels(clear), C.render_labels(blocked)
        d_obs = frac * dist - W.CYLINDER_RADIUS
        for col in (9, 10):
            assert a[3, col] == C.EXIT
            for row in range(7):
                d = C.pixel_to_ray(col, row)
                horiz = math.hypot(d[0], d[1])
                # the ray meets the cylinder's front face no nearer than d_obs; if it is still below
                # the top there (and above the floor), nothing behind it can show
                z_front = C.CAMERA_HEIGHT + d_obs * 1.05 * d[2] / horiz
                if 0 <= z_front <= 0.3 - 0.02 and a[row, col] == C.EXIT:
                    assert b[row, col] == C.OBSTACLE
        assert np.array_equal(b, _march_labels(blocked)) or np.mean(b != _march_labels(blocked)) <= 2 / 140


def _red_columns(d, factor=1):
    w = make_world(0, 0.0, Pose(-1.0, 0.0, 0.0), [Obstacle.cylinder(-1.0 + d, 0.0)])
    rays = C.camera_rays(C.WIDTH * factor, C.HEIGHT * factor)
    return int((C.render_labels(w, rays)[3 * factor + factor // 2] == C.OBSTACLE).sum())


def test_apparent_size_shrinks_with_distance():
    for d in (0.4, 0.5, 0.7, 1.0):
        assert _red_columns(d) >= _red_columns(2 * d)
        assert _red_columns(d, 10) > _red_columns(2 * d, 10)
        # analytic angular half-width of the cylinder vs stereographic column span
        half = math.asin(W.CYLINDER_RADIUS / d)
        u = math.tan(half / 2)
        expected = sum(abs((2 * c + 1 - 20) / 20) < u for c in range(20))
        assert _red_columns(d) == expected


def test_outside_room_rejected():
    with pytest.raises(ValueError):
        C.render(make_world(0, 0.0, Pose(1.5, 0.0, 0.0)))


def test_ppm_roundtrip(tmp_path):
    w = reset(W.get_scenario("cyl1"), np.random.default_rng(3))
    img = C.render(w)
    C.write_ppm(tmp_path / "a.ppm", img)
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n20 7\n255\n")
    np.testing.assert_array_equal(C.read_ppm(tmp_path / "a.ppm"), img)
    big = C.upscale(img)
    assert big.shape == (70, 200, 3)
    np.testing.assert_array_equal(big[::10, ::10], img)
