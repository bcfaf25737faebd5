"""Figures for training and evaluation output, rendered off-screen to files."""
from __future__ import annotations

import math
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Rectangle, Wedge  # noqa: E402

from . import world as W  # noqa: E402


def learning_curve(metrics: Sequence, path, title: str = "") -> None:
    """Steps and cumulative reward per episode, with the exploration rate on a twin axis."""
    ep = np.array([m.episode for m in metrics])
    steps = np.array([m.steps for m in metrics])
    reward = np.array([m.cumulative_reward for m in metrics])
    eps = np.array([m.epsilon for m in metrics])
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    a1.semilogy(ep, steps, lw=0.6, color="tab:blue", alpha=0.6)
    if len(steps) >= 20:
        k = min(100, len(steps) // 5)
        avg = np.convolve(steps, np.ones(k) / k, mode="valid")
        a1.semilogy(ep[k - 1:], avg, color="black", lw=1.2, label=f"{k}-episode mean")
        a1.legend(loc="upper right")
    a1.set_ylabel("steps")
    a1.set_title(title or f"{len(metrics)} episodes, {int(steps.sum())} steps")
    a2.plot(ep, reward, lw=0.6, color="tab:purple")
    a2.set_ylabel("cumulative reward")
    a2.set_xlabel("episode")
    tw = a2.twinx()
    tw.plot(ep, eps, color="tab:gray", ls="--", lw=1)
    tw.set_ylabel("epsilon")
    tw.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _draw_room(ax, world: W.WorldState) -> None:
    h = world.room.half_extent
    ax.add_patch(Rectangle((-h, -h), 2 * h, 2 * h, fill=False, ec="blue", lw=2))
    (x0, y0), (x1, y1) = world.exit.segment(world.room)
    ax.plot([x0, x1], [y0, y1], color="limegreen", lw=6, solid_capstyle="butt")
    for ob in world.obstacles:
        if ob.kind == "cylinder":
            ax.add_patch(Circle(ob.center, ob.radius, color="red", alpha=0.35 if ob.dynamic else 0.8))
        else:
            mid = math.degrees(ob.opening_heading) + 180.0
            ax.add_patch(Wedge(ob.center, ob.radius, mid - 90, mid + 90, width=ob.thickness, color="red"))
    ax.set_xlim(-h - 0.1, h + 0.1)
    ax.set_ylim(-h - 0.1, h + 0.1)
    ax.set_aspect("equal")


def trajectory_map(traj, path, title: str = "") -> None:
    """Top-down room plan with the agent's path, heading arrows and moving-obstacle tracks."""
    fig, ax = plt.subplots(figsize=(5, 5))
    _draw_room(ax, traj.world0)
    tracks = np.array(traj.obstacle_tracks, dtype=float)
    if tracks.ndim == 3 and tracks.shape[1] and any(o.dynamic for o in traj.world0.obstacles):
        for k in range(tracks.shape[1]):
            ax.plot(tracks[:, k, 0], tracks[:, k, 1], color="darkred", lw=0.8, ls=":")
    xs = np.array([p.x for p in traj.poses])
    ys = np.array([p.y for p in traj.poses])
    th = np.array([p.theta for p in traj.poses])
    ax.plot(xs, ys, color="black", lw=1)
    ax.quiver(xs, ys, np.cos(th), np.sin(th), angles="xy", scale_units="xy", scale=12, width=0.004,
              color="tab:orange")
    ax.add_patch(Circle((xs[0], ys[0]), W.AGENT_RADIUS, fill=False, ec="black", ls="--"))
    ax.set_title(title or f"{'escaped' if traj.success else 'failed'} in {traj.steps} steps")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def preference_plot(prefs: dict, path, title: str = "") -> None:
    """Camera view above a polar bar chart of the softmax preference per action angle.

    Zero degrees points up (straight ahead); positive angles turn left.
    """
    fig = plt.figure(figsize=(5, 7))
    fig.suptitle(title or "action preference (softmax of Q)", fontsize=10)
    ax_img = fig.add_axes([0.08, 0.70, 0.84, 0.22])
    ax_img.imshow(prefs["image"], interpolation="nearest")
    ax_img.set_xticks([])
    ax_img.set_yticks([])
    ax = fig.add_axes([0.12, 0.04, 0.76, 0.58], projection="polar")
    ax.set_theta_zero_location("N")
    angles = np.radians(prefs["angles_deg"])
    probs = np.asarray(prefs["probs"])
    q = np.asarray(prefs["q"])
    span = np.ptp(q) or 1.0
    colors = plt.cm.viridis((q - q.min()) / span)
    ax.bar(angles, probs, width=np.radians(40), color=colors, edgecolor="black")
    for a, p, qq in zip(angles, probs, q):
        ax.text(a, p + 0.02, f"{qq:.3g}", ha="center", fontsize=7)
    ax.set_thetamin(-180)
    ax.set_thetamax(180)
    fig.savefig(path, dpi=120)
    plt.close(fig)
