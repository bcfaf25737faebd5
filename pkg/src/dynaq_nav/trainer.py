"""Deep Dyna-Q training loop, greedy evaluation and metrics I/O.

RNG discipline: a run owns one ``numpy.random.Generator``. Draws happen in this
order: network initialization, then per episode the reset draws (exit wall,
exit offset, cylinders, agent), then per step the exploration coin, the
exploratory action (only when exploring), dynamic-obstacle headings, and the
replay batch indices.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import camera, world as W
from .qnet import (AdamState, NetworkWeights, adam_step, forward, init_weights, preprocess,
                   save_checkpoint, soft_update, td_loss_and_grads)
from .replay import Experience, ReplayBuffer

log = logging.getLogger(__name__)

METRICS_HEADER = ("episode", "steps", "cumulative_reward", "epsilon", "evacuated", "wall_time_s")
TRAJECTORY_HEADER = ("step", "x", "y", "theta", "action", "reward")


@dataclass
class TrainConfig:
    episodes: int = 1000
    max_steps_per_episode: int = 10_000
    gamma: float = 0.999
    alpha: float = 1e-4
    tau: float = 0.1
    eps_min: float = 0.1
    eps_max: float = 1.0
    P: float = 0.5
    batch_size: int = 50
    buffer_capacity: int = 10_000
    seed: int = 0
    scenario: str = "empty"
    eval_max_steps: int = 500
    wall_clock: bool = True  # False writes wall_time_s = 0 for byte-reproducible metrics

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.eps_min <= self.eps_max <= 1.0:
            raise ValueError("need 0 <= eps_min <= eps_max <= 1")
        if not 0.0 < self.P <= 1.0:
            raise ValueError("P must lie in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.episodes < 1 or self.max_steps_per_episode < 1 or self.batch_size < 1:
            raise ValueError("episodes, max_steps_per_episode and batch_size must be positive")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer smaller than a batch")


@dataclass
class EpisodeStats:
    episode: int
    steps: int
    cumulative_reward: float
    epsilon: float
    evacuated: bool
    wall_time: float
    replay_updates: int = 0
    collisions: int = 0
    mean_loss: float = float("nan")

    def row(self) -> list[str]:
        return [str(self.episode), str(self.steps), f"{self.cumulative_reward:.6g}", f"{self.epsilon:.6g}",
                str(int(self.evacuated)), f"{self.wall_time:.6g}"]


@dataclass
class Learner:
    """Everything that evolves during training."""
    w_train: NetworkWeights
    w_target: NetworkWeights
    adam: AdamState
    buffer: ReplayBuffer

    @classmethod
    def fresh(cls, rng: np.random.Generator, capacity: int = 10_000) -> "Learner":
        w = init_weights(rng)
        return cls(w, w.copy(), AdamState.like(w), ReplayBuffer(capacity))


def epsilon(e: int, cfg: TrainConfig) -> float:
    return cfg.eps_min + (cfg.eps_max - cfg.eps_min) * math.exp(-(4.0 / cfg.P) * (e / cfg.episodes))


def select_action(q: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; ties go to the lowest index. Always consumes the coin draw."""
    if rng.random() < eps:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def action_preferences(q) -> np.ndarray:
    """Softmax of Q-values."""
    q = np.asarray(q, dtype=np.float64)
    z = np.exp(q - q.max())
    return z / z.sum()


def observe(world: W.WorldState) -> np.ndarray:
    return camera.render_state(world)


def q_values(w: NetworkWeights, state: np.ndarray) -> np.ndarray:
    return forward(w, preprocess(state))


def run_episode(reset_fn: Callable[[np.random.Generator], W.WorldState], learner: Learner, cfg: TrainConfig,
                e: int, rng: np.random.Generator, *, eps: Optional[float] = None, learn: bool = True,
                on_step: Optional[Callable] = None) -> EpisodeStats:
    """One Dyna-Q episode: act, store, replay-update every step; one soft target update at the end.

    ``eps`` overrides the schedule and ``learn=False`` freezes the training
    network (the target update still happens, toward unchanged weights).
    """
    t0 = time.perf_counter()
    eps = epsilon(e, cfg) if eps is None else eps
    world = reset_fn(rng)
    s = observe(world)
    total = 0.0
    steps = updates = collisions = 0
    loss_sum = 0.0
    evacuated = False
    while steps < cfg.max_steps_per_episode:
        a = select_action(q_values(learner.w_train, s), eps, rng)
        out = W.apply_action(world, a)
        world = W.advance(world, out)
        steps += 1
        total += out.reward
        if out.contact in (W.CONTACT_WALL, W.CONTACT_OBSTACLE):
            collisions += 1
        if out.terminal:
            # the target of a terminal transition ignores s'; the agent may stand in the doorway
            s2 = s
        else:
            world = W.step_dynamic_obstacles(world, rng)
            s2 = observe(world)
        learner.buffer.push(Experience(s, a, s2, out.reward, out.terminal))
        if learn and len(learner.buffer) >= cfg.batch_size:
            batch = learner.buffer.sample(cfg.batch_size, rng)
            loss, grads = td_loss_and_grads(learner.w_train, learner.w_target, batch, cfg.gamma)
            adam_step(learner.w_train, learner.adam, grads, cfg.alpha, inplace=True)
            updates += 1
            loss_sum += loss
        if on_step is not None:
            on_step(world, a, out)
        s = s2
        if out.terminal:
            evacuated = True
            break
    learner.w_target = soft_update(learner.w_target, learner.w_train, cfg.tau)
    return EpisodeStats(e, steps, total, eps, evacuated, time.perf_counter() - t0, updates, collisions,
                        loss_sum / updates if updates else float("nan"))


def scenario_reset(scenario: W.Scenario, agent_region: str = "room"):
    def reset_fn(rng):
        return W.reset(scenario, rng, agent_region=agent_region)
    return reset_fn


@dataclass
class TrainResult:
    learner: Learner
    metrics: list[EpisodeStats]
    checkpoint_path: Optional[Path] = None
    metrics_path: Optional[Path] = None

    @property
    def total_steps(self) -> int:
        return sum(m.steps for m in self.metrics)


def train(cfg: TrainConfig, out_dir=None, scenario: Optional[W.Scenario] = None,
          progress: Optional[Callable[[EpisodeStats], None]] = None) -> TrainResult:
    """Run ``cfg.episodes`` episodes; optionally stream metrics and write a final checkpoint to ``out_dir``."""
    scenario = scenario or W.get_scenario(cfg.scenario)
    rng = np.random.default_rng(cfg.seed)
    learner = Learner.fresh(rng, cfg.buffer_capacity)
    reset_fn = scenario_reset(scenario)
    metrics: list[EpisodeStats] = []
    metrics_path = ckpt_path = None
    fh = writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.csv"
        fh = open(metrics_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
    try:
        for e in range(cfg.episodes):
            st = run_episode(reset_fn, learner, cfg, e, rng)
            if not cfg.wall_clock:
                st.wall_time = 0.0
            metrics.append(st)
            if writer is not None:
                writer.writerow(st.row())
                fh.flush()
            if progress is not None:
                progress(st)
            log.debug("episode %d steps %d eps %.3f", e, st.steps, st.epsilon)
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        ckpt_path = out_dir / "checkpoint.bin"
        save_checkpoint(ckpt_path, learner.w_train, learner.adam, learner.w_target)
    return TrainResult(learner, metrics, ckpt_path, metrics_path)


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- evaluation -----------------------------------------------------------------

@dataclass
class Trajectory:
    world0: W.WorldState
    poses: list[W.Pose] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    contacts: list[str] = field(default_factory=list)
    obstacle_tracks: list[tuple] = field(default_factory=list)
    success: bool = False

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def collisions(self) -> int:
        return sum(c in (W.CONTACT_WALL, W.CONTACT_OBSTACLE) for c in self.contacts)

    def rows(self):
        """Step 0 is the spawn pose (action -1); step k is the pose after the k-th action."""
        p = self.poses[0]
        yield [0, f"{p.x:.6g}", f"{p.y:.6g}", f"{p.theta:.6g}", -1, "0"]
        for k, (p, a, r) in enumerate(zip(self.poses[1:], self.actions, self.rewards), start=1):
            yield [k, f"{p.x:.6g}", f"{p.y:.6g}", f"{p.theta:.6g}", a, f"{r:.6g}"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(TRAJECTORY_HEADER)
            wr.writerows(self.rows())


def greedy_episode(w: NetworkWeights, world: W.WorldState, rng: np.random.Generator,
                   max_steps: int = 500) -> Trajectory:
    traj = Trajectory(world, [world.agent])
    traj.obstacle_tracks.append(tuple(o.center for o in world.obstacles))
    s = observe(world)
    for _ in range(max_steps):
        a = int(np.argmax(q_values(w, s)))
        out = W.apply_action(world, a)
        world = W.advance(world, out)
        traj.poses.append(world.agent)
        traj.actions.append(a)
        traj.rewards.append(out.reward)
        traj.contacts.append(out.contact)
        if out.terminal:
            traj.success = True
            break
        world = W.step_dynamic_obstacles(world, rng)
        traj.obstacle_tracks.append(tuple(o.center for o in world.obstacles))
        s = observe(world)
    return traj


@dataclass
class EvalSummary:
    scenario: str
    episodes: int
    successes: int
    mean_steps: float
    median_steps: float
    mean_steps_success: float
    median_steps_success: float
    collision_steps_in_successes: int
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes

    def report(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("trajectories")
        d["success_rate"] = self.success_rate
        return d


def evaluate(w: NetworkWeights, scenario: W.Scenario, n_episodes: int, seed: int = 0,
             max_steps: int = 500, agent_regions: Optional[list[str]] = None) -> EvalSummary:
    """Greedy rollouts on independently seeded random configurations.

    Episode ``k`` uses its own generator spawned from ``seed``, so results do
    not depend on the order episodes are run in. ``agent_regions[k]`` may be
    ``"concavity"`` to force a spawn inside the arc.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be positive")
    seqs = np.random.SeedSequence(seed).spawn(n_episodes)
    trajs = []
    for k, ss in enumerate(seqs):
        rng = np.random.default_rng(ss)
        region = agent_regions[k] if agent_regions else "room"
        world = W.reset(scenario, rng, agent_region=region)
        trajs.append(greedy_episode(w, world, rng, max_steps))
    steps = np.array([t.steps for t in trajs], dtype=float)
    ok = np.array([t.success for t in trajs])
    ok_steps = steps[ok]
    return EvalSummary(
        scenario.name, n_episodes, int(ok.sum()),
        float(steps.mean()), float(np.median(steps)),
        float(ok_steps.mean()) if ok.any() else float("nan"),
        float(np.median(ok_steps)) if ok.any() else float("nan"),
        int(sum(t.collisions for t in trajs if t.success)),
        trajs,
    )


def preferences(w: NetworkWeights, world: W.WorldState) -> dict:
    """Q-values and softmax action preferences at the agent's current view."""
    s = observe(world)
    q = q_values(w, s)
    return {
        "angles_deg": list(W.ACTION_ANGLES_DEG),
        "q": q,
        "probs": action_preferences(q),
        "image": camera.render(world),
    }
