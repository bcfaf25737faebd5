"""Room geometry, episode randomization and collision-checked agent motion.

The room is centered at the origin with interior ``[-1.25, 1.25]^2``. Walls are
indexed south, east, north, west (0..3). The agent is modelled as a disk of
radius :data:`AGENT_RADIUS` and each action is swept as a capsule so thin
obstacles cannot be tunnelled through.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

HALF_EXTENT = 1.25
WALL_HEIGHT = 1.0
EXIT_WIDTH = 0.5
EXIT_HEIGHT = 1.0
EXIT_DEPTH = 0.2

AGENT_RADIUS = 0.106
STEP_LENGTH = 0.1524  # 0.5 ft

CYLINDER_RADIUS = 0.1524
CYLINDER_HEIGHT = 0.3
ARC_OUTER_RADIUS = 0.6
ARC_THICKNESS = 0.1
ARC_HEIGHT = 0.25

ACTION_ANGLES_DEG = (-135.0, -90.0, -45.0, 0.0, 45.0, 90.0, 135.0)
ACTION_ANGLES = tuple(math.radians(a) for a in ACTION_ANGLES_DEG)
N_ACTIONS = len(ACTION_ANGLES)

STEP_REWARD = -0.1
EXIT_REWARD = 0.0

CONTACT_NONE = "none"
CONTACT_WALL = "wall"
CONTACT_OBSTACLE = "obstacle"
CONTACT_EXIT = "exit"

WALL_NAMES = ("south", "east", "north", "west")


class ConfigurationError(RuntimeError):
    """Raised when rejection sampling cannot satisfy the placement constraints."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    t = math.remainder(theta, 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    return t


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class RoomSpec:
    half_extent: float = HALF_EXTENT
    wall_height: float = WALL_HEIGHT
    exit_width: float = EXIT_WIDTH
    exit_height: float = EXIT_HEIGHT
    exit_depth: float = EXIT_DEPTH

    def __post_init__(self):
        if not self.exit_width < 2 * self.half_extent:
            raise ValueError("exit wider than wall")


@dataclass(frozen=True)
class ExitSpec:
    wall_index: int
    center_offset: float

    def segment(self, room: RoomSpec) -> tuple[tuple[float, float], tuple[float, float]]:
        """End points of the exit opening, lying in the wall plane."""
        h = room.half_extent
        lo = self.center_offset - room.exit_width / 2
        hi = self.center_offset + room.exit_width / 2
        if self.wall_index == 0:
            return (lo, -h), (hi, -h)
        if self.wall_index == 1:
            return (h, lo), (h, hi)
        if self.wall_index == 2:
            return (lo, h), (hi, h)
        if self.wall_index == 3:
            return (-h, lo), (-h, hi)
        raise ValueError(f"bad wall index {self.wall_index}")

    def center(self, room: RoomSpec) -> tuple[float, float]:
        (ax, ay), (bx, by) = self.segment(room)
        return (ax + bx) / 2, (ay + by) / 2


@dataclass(frozen=True)
class Obstacle:
    kind: str  # "cylinder" | "concave_arc"
    center: tuple[float, float]
    radius: float = CYLINDER_RADIUS
    height: float = CYLINDER_HEIGHT
    thickness: float = 0.0
    opening_heading: float = 0.0
    dynamic: bool = False
    heading: float = 0.0  # current travel direction of a dynamic cylinder

    @classmethod
    def cylinder(cls, x: float, y: float, dynamic: bool = False, heading: float = 0.0) -> "Obstacle":
        return cls("cylinder", (x, y), dynamic=dynamic, heading=heading)

    @classmethod
    def concave_arc(cls, x: float = 0.0, y: float = 0.0, opening_heading: float = 0.0) -> "Obstacle":
        return cls("concave_arc", (x, y), radius=ARC_OUTER_RADIUS, height=ARC_HEIGHT,
                   thickness=ARC_THICKNESS, opening_heading=opening_heading)

    @property
    def inner_radius(self) -> float:
        return self.radius - self.thickness


@dataclass(frozen=True)
class Scenario:
    """Obstacle layout rules for one experiment.

    Every bound and separation here may be overridden from a config file.
    """
    name: str
    n_cylinders: int = 0
    cylinders_dynamic: bool = False
    has_concave: bool = False
    static_region_half: float = 0.7
    static_separation: float = 0.7
    agent_clearance: float = 0.5
    dynamic_region_half: float = 0.75
    dynamic_separation: float = 0.5
    dynamic_step: float = 0.025
    dynamic_heading_sigma_deg: float = 30.0
    dynamic_max_attempts: int = 50
    arc_opening_heading: float = 0.0
    max_attempts: int = 10_000


SCENARIOS = {
    "empty": Scenario("empty"),
    "cyl1": Scenario("cyl1", n_cylinders=1),
    "cyl3": Scenario("cyl3", n_cylinders=3),
    "concave": Scenario("concave", has_concave=True),
    "dyn1": Scenario("dyn1", n_cylinders=1, cylinders_dynamic=True),
    "dyn3": Scenario("dyn3", n_cylinders=3, cylinders_dynamic=True),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


@dataclass(frozen=True)
class WorldState:
    room: RoomSpec
    exit: ExitSpec
    obstacles: tuple[Obstacle, ...]
    agent: Pose
    step_count: int = 0
    scenario: Optional[Scenario] = field(default=None, compare=False)

    def mirrored_x(self) -> "WorldState":
        """Reflection across the plane x = 0."""
        wall = {1: 3, 3: 1}.get(self.exit.wall_index, self.exit.wall_index)
        offset = self.exit.center_offset
        if self.exit.wall_index in (0, 2):
            offset = -offset
        obstacles = tuple(
            replace(o, center=(-o.center[0], o.center[1]),
                    opening_heading=wrap_angle(math.pi - o.opening_heading),
                    heading=wrap_angle(math.pi - o.heading))
            for o in self.obstacles
        )
        agent = Pose(-self.agent.x, self.agent.y, wrap_angle(math.pi - self.agent.theta))
        return replace(self, exit=ExitSpec(wall, offset), obstacles=obstacles, agent=agent)


@dataclass(frozen=True)
class StepOutcome:
    new_agent: Pose
    reward: float
    terminal: bool
    contact: str


# --- 2D distance primitives -------------------------------------------------

def _point_segment_dist(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _cross(ax, ay, bx, by) -> float:
    return ax * by - ay * bx


def _segments_intersect(a, b, c, d) -> bool:
    d1 = _cross(b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1])
    d2 = _cross(b[0] - a[0], b[1] - a[1], d[0] - a[0], d[1] - a[1])
    d3 = _cross(d[0] - c[0], d[1] - c[1], a[0] - c[0], a[1] - c[1])
    d4 = _cross(d[0] - c[0], d[1] - c[1], b[0] - c[0], b[1] - c[1])
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def segment_segment_dist(a, b, c, d) -> float:
    if _segments_intersect(a, b, c, d):
        return 0.0
    return min(
        _point_segment_dist(a[0], a[1], c[0], c[1], d[0], d[1]),
        _point_segment_dist(b[0], b[1], c[0], c[1], d[0], d[1]),
        _point_segment_dist(c[0], c[1], a[0], a[1], b[0], b[1]),
        _point_segment_dist(d[0], d[1], a[0], a[1], b[0], b[1]),
    )


def arc_segment_dist(arc: Obstacle, a, b) -> float:
    """Exact distance from segment ab to the half-annulus of a concave arc.

    The solid part of the arc lies on the half-plane facing away from
    ``opening_heading``. Inside that half-plane the nearest solid point is the
    radial projection onto the annulus, so only the radial extent of the
    clipped segment matters; outside it, the nearest solid points are on the
    two flat end caps.
    """
    ox, oy = arc.center
    ux, uy = math.cos(arc.opening_heading), math.sin(arc.opening_heading)
    r_in, r_out = arc.inner_radius, arc.radius
    # end caps lie along the diameter perpendicular to the opening
    nx, ny = -uy, ux
    caps = (
        ((ox + nx * r_in, oy + ny * r_in), (ox + nx * r_out, oy + ny * r_out)),
        ((ox - nx * r_in, oy - ny * r_in), (ox - nx * r_out, oy - ny * r_out)),
    )
    best = min(segment_segment_dist(a, b, c0, c1) for c0, c1 in caps)

    # clip segment to the solid half-plane {p : (p - o) . u <= 0}
    sa = (a[0] - ox) * ux + (a[1] - oy) * uy
    sb = (b[0] - ox) * ux + (b[1] - oy) * uy
    if sa > 0 and sb > 0:
        return best
    t0, t1 = 0.0, 1.0
    if sa > 0:
        t0 = sa / (sa - sb)
    elif sb > 0:
        t1 = sa / (sa - sb)
    p = (a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1]))
    q = (a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1]))
    rho_min = _point_segment_dist(ox, oy, p[0], p[1], q[0], q[1])
    rho_max = max(math.hypot(p[0] - ox, p[1] - oy), math.hypot(q[0] - ox, q[1] - oy))
    if rho_min > r_out:
        d_in = rho_min - r_out
    elif rho_max < r_in:
        d_in = r_in - rho_max
    else:
        d_in = 0.0
    return min(best, d_in)


def _wall_segments(room: RoomSpec):
    h = room.half_extent
    return (
        ((-h, -h), (h, -h)),
        ((h, -h), (h, h)),
        ((-h, h), (h, h)),
        ((-h, -h), (-h, h)),
    )


def classify_sweep(a: tuple[float, float], b: tuple[float, float], world: WorldState,
                   radius: float = AGENT_RADIUS) -> str:
    """Classify the contact of a disk swept from ``a`` to ``b``.

    Overlap means distance strictly less than ``radius``; touching is allowed.
    Exit is checked first, then walls, then obstacles.
    """
    room = world.room
    e0, e1 = world.exit.segment(room)
    if segment_segment_dist(a, b, e0, e1) < radius:
        return CONTACT_EXIT
    h = room.half_extent - radius
    if max(abs(a[0]), abs(b[0]), abs(a[1]), abs(b[1])) > h:
        return CONTACT_WALL
    for ob in world.obstacles:
        if ob.kind == "cylinder":
            cx, cy = ob.center
            if _point_segment_dist(cx, cy, a[0], a[1], b[0], b[1]) < radius + ob.radius:
                return CONTACT_OBSTACLE
        elif arc_segment_dist(ob, a, b) < radius:
            return CONTACT_OBSTACLE
    return CONTACT_NONE


def classify_contact(pose: Pose, world: WorldState, radius: float = AGENT_RADIUS) -> str:
    p = (pose.x, pose.y)
    return classify_sweep(p, p, world, radius)


def candidate_pose(pose: Pose, action_index: int, step: float = STEP_LENGTH) -> Pose:
    theta = wrap_angle(pose.theta + ACTION_ANGLES[action_index])
    return Pose(pose.x + step * math.cos(theta), pose.y + step * math.sin(theta), theta)


def apply_action(world: WorldState, action_index: int) -> StepOutcome:
    """Rotate, then translate one step; colliding moves leave the pose untouched."""
    if not 0 <= action_index < N_ACTIONS:
        raise ValueError(f"action index {action_index} out of range")
    old = world.agent
    cand = candidate_pose(old, action_index)
    contact = classify_sweep((old.x, old.y), (cand.x, cand.y), world)
    if contact == CONTACT_EXIT:
        return StepOutcome(cand, EXIT_REWARD, True, contact)
    if contact == CONTACT_NONE:
        return StepOutcome(cand, STEP_REWARD, False, contact)
    return StepOutcome(old, STEP_REWARD, False, contact)


def advance(world: WorldState, outcome: StepOutcome) -> WorldState:
    return replace(world, agent=outcome.new_agent, step_count=world.step_count + 1)


# --- randomization ------------------------------------------------------------

def _sample_exit(room: RoomSpec, rng: np.random.Generator) -> ExitSpec:
    wall = int(rng.integers(4))
    lim = room.half_extent - room.exit_width / 2
    return ExitSpec(wall, float(rng.uniform(-lim, lim)))


def _place_cylinders(n: int, half: float, sep: float, rng, max_attempts: int) -> list[tuple[float, float]]:
    pts: list[tuple[float, float]] = []
    attempts = 0
    while len(pts) < n:
        attempts += 1
        if attempts > max_attempts:
            raise ConfigurationError(f"could not place {n} cylinders with separation {sep}")
        x, y = (float(v) for v in rng.uniform(-half, half, size=2))
        if all(math.hypot(x - px, y - py) >= sep for px, py in pts):
            pts.append((x, y))
    return pts


def in_concavity(x: float, y: float, arc: Obstacle, margin: float = AGENT_RADIUS) -> bool:
    """True when a disk at (x, y) sits fully inside the arc's hollow."""
    ox, oy = arc.center
    ux, uy = math.cos(arc.opening_heading), math.sin(arc.opening_heading)
    inside_r = math.hypot(x - ox, y - oy) <= arc.inner_radius - margin
    return inside_r and (x - ox) * ux + (y - oy) * uy <= 0.0


def reset(scenario: Scenario, rng: np.random.Generator, room: Optional[RoomSpec] = None,
          agent_region: str = "room") -> WorldState:
    """Randomize exit, obstacles and agent for a new episode.

    Draw order: exit wall, exit offset, cylinder centers (and headings for
    dynamic ones), then agent (x, y, theta) by rejection. ``agent_region`` may
    be ``"concavity"`` to spawn the agent inside the arc's hollow.
    """
    room = room or RoomSpec()
    ex = _sample_exit(room, rng)
    obstacles: list[Obstacle] = []
    if scenario.has_concave:
        obstacles.append(Obstacle.concave_arc(opening_heading=scenario.arc_opening_heading))
    if scenario.n_cylinders:
        if scenario.cylinders_dynamic:
            half, sep = scenario.dynamic_region_half, scenario.dynamic_separation
        else:
            half, sep = scenario.static_region_half, scenario.static_separation
        pts = _place_cylinders(scenario.n_cylinders, half, sep, rng, scenario.max_attempts)
        for x, y in pts:
            heading = float(rng.uniform(-math.pi, math.pi)) if scenario.cylinders_dynamic else 0.0
            obstacles.append(Obstacle.cylinder(x, y, dynamic=scenario.cylinders_dynamic, heading=heading))
    world = WorldState(room, ex, tuple(obstacles), Pose(0.0, 0.0, 0.0), 0, scenario)

    lim = room.half_extent - AGENT_RADIUS
    arc = next((o for o in obstacles if o.kind == "concave_arc"), None)
    if agent_region == "concavity" and arc is None:
        raise ValueError("concavity spawn requested without a concave obstacle")
    for _ in range(scenario.max_attempts):
        if agent_region == "concavity":
            rr = arc.inner_radius - AGENT_RADIUS
            x, y = (float(v) for v in rng.uniform(-rr, rr, size=2))
            x += arc.center[0]
            y += arc.center[1]
        else:
            x, y = (float(v) for v in rng.uniform(-lim, lim, size=2))
        theta = wrap_angle(float(rng.uniform(-math.pi, math.pi)))
        if agent_region == "concavity" and not in_concavity(x, y, arc):
            continue
        if any(math.hypot(x - o.center[0], y - o.center[1]) < scenario.agent_clearance
               for o in obstacles if o.kind == "cylinder"):
            continue
        pose = Pose(x, y, theta)
        if classify_contact(pose, world) != CONTACT_NONE:
            continue
        return replace(world, agent=pose)
    raise ConfigurationError("could not place agent")


def step_dynamic_obstacles(world: WorldState, rng: np.random.Generator) -> WorldState:
    """Move every dynamic cylinder one fixed-length step along a noisy heading.

    Obstacles move in index order. A move is rejected if it leaves the bounding
    square, comes within the pairwise separation of another cylinder, or
    overlaps the agent disk; after ``dynamic_max_attempts`` rejections the
    obstacle stays put.
    """
    sc = world.scenario or Scenario("custom")
    if not any(o.dynamic for o in world.obstacles):
        return world
    obs = list(world.obstacles)
    sigma = math.radians(sc.dynamic_heading_sigma_deg)
    half = sc.dynamic_region_half
    ax, ay = world.agent.x, world.agent.y
    for i, ob in enumerate(obs):
        if not ob.dynamic:
            continue
        for _ in range(sc.dynamic_max_attempts):
            h = ob.heading + sigma * float(rng.standard_normal())
            x = ob.center[0] + sc.dynamic_step * math.cos(h)
            y = ob.center[1] + sc.dynamic_step * math.sin(h)
            if abs(x) > half or abs(y) > half:
                continue
            if math.hypot(x - ax, y - ay) < AGENT_RADIUS + ob.radius:
                continue
            if any(math.hypot(x - o.center[0], y - o.center[1]) < sc.dynamic_separation
                   for j, o in enumerate(obs) if j != i and o.kind == "cylinder"):
                continue
            obs[i] = replace(ob, center=(x, y), heading=wrap_angle(h))
            break
    return replace(world, obstacles=tuple(obs))


def make_world(exit_wall: int, exit_offset: float, agent: Pose,
               obstacles: Sequence[Obstacle] = (), scenario: Optional[Scenario] = None,
               room: Optional[RoomSpec] = None) -> WorldState:
    """Build a hand-specified world (tests, inspection)."""
    return WorldState(room or RoomSpec(), ExitSpec(exit_wall, exit_offset), tuple(obstacles), agent, 0, scenario)
