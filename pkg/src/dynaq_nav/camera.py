"""Per-pixel raycasting through a 180 degree stereographic lens.

Rays are cast from the camera point at height :data:`CAMERA_HEIGHT` against the
extruded scene: four walls, the exit opening (drawn in the wall plane), cylinder
sides, the sides and end caps of the concave arc, and the floor. Shading is flat;
each pixel takes the palette color of its nearest hit.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .world import Pose, WorldState

WIDTH = 20
HEIGHT = 7
CHANNELS = 3
STATE_SIZE = WIDTH * HEIGHT * CHANNELS
CAMERA_HEIGHT = 0.15
V_HALF_RANGE = 0.35  # square angular pixels: 7/20 of the horizontal half-range

WALL_RGB = (0, 0, 255)
EXIT_RGB = (0, 255, 0)
OBSTACLE_RGB = (255, 0, 0)
FLOOR_RGB = (128, 128, 128)
SKY_RGB = (255, 255, 255)
PALETTE = np.array([SKY_RGB, FLOOR_RGB, WALL_RGB, EXIT_RGB, OBSTACLE_RGB], dtype=np.uint8)
SKY, FLOOR, WALL, EXIT, OBSTACLE = range(5)

_POS_EPS = 1e-9


def image_plane_coords(col, row, width: int = WIDTH, height: int = HEIGHT, v_half: float = V_HALF_RANGE):
    """Image-plane (u, v_up) for a pixel center; u rightward, v_up upward."""
    # integer numerators keep mirrored columns exact negatives of each other
    u = (2.0 * np.asarray(col, dtype=float) + 1.0 - width) / width
    v_row = (2.0 * np.asarray(row, dtype=float) + 1.0 - height) / height * v_half
    return u, -v_row


def plane_to_ray(u, v_up):
    """Inverse stereographic map: camera-frame direction (forward, right, up).

    The off-axis angle is ``2 * atan(rho)`` so that ``rho = 1`` lands at 90
    degrees, giving a 180 degree horizontal field of view.
    """
    u = np.asarray(u, dtype=float)
    v_up = np.asarray(v_up, dtype=float)
    rho = np.hypot(u, v_up)
    off = 2.0 * np.arctan(rho)
    s = np.sin(off)
    with np.errstate(invalid="ignore", divide="ignore"):
        ru = np.where(rho > 0, u / np.where(rho > 0, rho, 1.0), 0.0)
        rv = np.where(rho > 0, v_up / np.where(rho > 0, rho, 1.0), 0.0)
    return np.stack([np.cos(off), s * ru, s * rv], axis=-1)


def pixel_to_ray(col: int, row: int) -> np.ndarray:
    if not (0 <= col < WIDTH and 0 <= row < HEIGHT):
        raise IndexError(f"pixel ({col}, {row}) out of range")
    return plane_to_ray(*image_plane_coords(col, row))


def camera_rays(width: int = WIDTH, height: int = HEIGHT) -> np.ndarray:
    """(height, width, 3) camera-frame unit rays, row 0 at the top."""
    rows, cols = np.mgrid[0:height, 0:width]
    return plane_to_ray(*image_plane_coords(cols, rows, width, height))


_RAYS = camera_rays()


def _world_rays(pose: Pose, rays: np.ndarray):
    """Horizontal unit directions (dx, dy) and vertical slope dz/ds for each ray."""
    f, r, up = rays[..., 0], rays[..., 1], rays[..., 2]
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    # right-hand vector of heading theta is (sin, -cos)
    wx = f * c + r * s
    wy = f * s - r * c
    horiz = np.hypot(wx, wy)
    with np.errstate(invalid="ignore", divide="ignore"):
        dx = wx / horiz
        dy = wy / horiz
        slope = up / horiz
    return dx, dy, slope


def _circle_hits(px, py, dx, dy, cx, cy, radius):
    """Both ray parameters (s_near, s_far) where the 2D ray meets a circle; NaN if missed."""
    ox, oy = px - cx, py - cy
    b = dx * ox + dy * oy
    q = ox * ox + oy * oy - radius * radius
    disc = b * b - q
    root = np.sqrt(np.where(disc >= 0, disc, np.nan))
    return -b - root, -b + root


def _segment_hit(px, py, dx, dy, a, b):
    """Ray parameter of a 2D ray hitting segment ab; NaN if missed."""
    ex, ey = b[0] - a[0], b[1] - a[1]
    denom = dx * ey - dy * ex
    wx, wy = a[0] - px, a[1] - py
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (wx * ey - wy * ex) / denom
        t = (wx * dy - wy * dx) / denom
    ok = (denom != 0) & (t >= 0) & (t <= 1) & (s > 0)
    return np.where(ok, s, np.nan)


def render_labels(world: WorldState, rays: np.ndarray = _RAYS) -> np.ndarray:
    """Palette index of the nearest surface for every ray."""
    pose = world.agent
    room = world.room
    h = room.half_extent
    if not (abs(pose.x) <= h + _POS_EPS and abs(pose.y) <= h + _POS_EPS):
        raise ValueError(f"camera pose {pose} is outside the room")
    px, py, pz = pose.x, pose.y, CAMERA_HEIGHT
    dx, dy, slope = _world_rays(pose, rays)

    best = np.full(dx.shape, np.inf)
    label = np.full(dx.shape, SKY, dtype=np.int8)

    def consider(s, lab, top):
        nonlocal best, label
        z = pz + slope * s
        ok = (s > 0) & (z >= 0.0) & (z <= top) & (s < best)
        best = np.where(ok, s, best)
        label = np.where(ok, lab, label)

    with np.errstate(invalid="ignore", divide="ignore"):
        # walls: the 2D ray leaves the square through exactly one side
        sx = np.where(dx > 0, (h - px) / dx, np.where(dx < 0, (-h - px) / dx, np.inf))
        sy = np.where(dy > 0, (h - py) / dy, np.where(dy < 0, (-h - py) / dy, np.inf))
        s_wall = np.minimum(sx, sy)
        hx = px + s_wall * dx
        hy = py + s_wall * dy
    via_x = sx <= sy
    wall_idx = np.where(via_x, np.where(dx > 0, 1, 3), np.where(dy > 0, 2, 0))
    along = np.where(via_x, hy, hx)
    half_w = room.exit_width / 2
    is_exit = (wall_idx == world.exit.wall_index) & (np.abs(along - world.exit.center_offset) <= half_w)
    top = np.where(is_exit, room.exit_height, room.wall_height)
    consider(s_wall, np.where(is_exit, EXIT, WALL), top)

    for ob in world.obstacles:
        cx, cy = ob.center
        if ob.kind == "cylinder":
            s_near, _ = _circle_hits(px, py, dx, dy, cx, cy, ob.radius)
            consider(s_near, OBSTACLE, ob.height)
            continue
        ux, uy = math.cos(ob.opening_heading), math.sin(ob.opening_heading)
        for radius in (ob.radius, ob.inner_radius):
            for s in _circle_hits(px, py, dx, dy, cx, cy, radius):
                solid = ((px + s * dx - cx) * ux + (py + s * dy - cy) * uy) <= 0
                consider(np.where(solid, s, np.nan), OBSTACLE, ob.height)
        nx, ny = -uy, ux
        r_in, r_out = ob.inner_radius, ob.radius
        for sign in (1.0, -1.0):
            a = (cx + sign * nx * r_in, cy + sign * ny * r_in)
            b = (cx + sign * nx * r_out, cy + sign * ny * r_out)
            consider(_segment_hit(px, py, dx, dy, a, b), OBSTACLE, ob.height)

    with np.errstate(invalid="ignore", divide="ignore"):
        s_floor = np.where(slope < 0, -pz / slope, np.nan)
    floor_ok = (s_floor > 0) & (s_floor < best)
    label = np.where(floor_ok, FLOOR, label)
    return label


def render(world: WorldState) -> np.ndarray:
    """Observation as a (7, 20, 3) uint8 image."""
    return PALETTE[render_labels(world)]


def flatten(image: np.ndarray) -> np.ndarray:
    """Row-major, channel-interleaved 420-vector."""
    return np.ascontiguousarray(image, dtype=np.uint8).reshape(-1)


def render_state(world: WorldState) -> np.ndarray:
    return flatten(render(world))


def render_hires(world: WorldState, factor: int = 10) -> np.ndarray:
    """Render at ``factor`` times the native resolution (for oracles and inspection)."""
    rays = camera_rays(WIDTH * factor, HEIGHT * factor)
    return PALETTE[render_labels(world, rays)]


def upscale(image: np.ndarray, factor: int = 10) -> np.ndarray:
    return np.repeat(np.repeat(image, factor, axis=0), factor, axis=1)


def write_ppm(path, image: np.ndarray) -> None:
    """Write a binary P6 portable pixmap."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = img.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ValueError("not a P6 pixmap")
    w, h = int(tokens[1]), int(tokens[2])
    body = data[pos + 1:pos + 1 + w * h * 3]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
