"""``dynaq`` command line: train, eval, inspect."""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import math
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, camera, world as W
from .config import build, load_config
from .qnet import CheckpointError, load_checkpoint
from .trainer import evaluate, preferences, train

RUNS_ENV = "DYNAQ_RUNS_DIR"


class CliError(Exception):
    """Failure to be reported on stderr with a nonzero exit status."""


def _runs_root() -> Path:
    return Path(os.environ.get(RUNS_ENV, "runs"))


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(x) -> str:
    if isinstance(x, bool) or isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _floats(n: int, what: str):
    def parse(text: str):
        try:
            vals = [float(t) for t in text.split(",")]
        except ValueError:
            vals = []
        if len(vals) != n or not all(math.isfinite(v) for v in vals):
            raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated numbers, got {text!r}")
        return vals
    return parse


# --- train ----------------------------------------------------------------------

def cmd_train(args) -> int:
    train_ov, scen_ov = load_config(args.config) if args.config else ({}, {})
    for key in ("scenario", "episodes", "seed"):
        val = getattr(args, key)
        if val is not None:
            train_ov[key] = val
    train_ov["wall_clock"] = args.wall_clock
    cfg, scenario = build(train_ov, scen_ov)

    out = Path(args.out) if args.out else _runs_root() / f"{cfg.scenario}-seed{cfg.seed}"
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise CliError(f"{out} already exists; pass --force to overwrite")
        shutil.rmtree(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc}") from exc

    started = _now()
    every = max(1, cfg.episodes // 20)

    def progress(st):
        if not args.quiet and (st.episode % every == 0 or st.episode == cfg.episodes - 1):
            print(f"episode {st.episode:5d}  steps {st.steps:6d}  eps {st.epsilon:.3f}", file=sys.stderr)

    result = train(cfg, out, scenario=scenario, progress=progress)
    from .plotting import learning_curve
    curve = out / "learning_curve.png"
    learning_curve(result.metrics, curve, title=f"{cfg.scenario}, seed {cfg.seed}: {result.total_steps} steps")

    manifest = {
        "tool": "dynaq_nav",
        "version": __version__,
        "seed": cfg.seed,
        "started": started,
        "finished": _now(),
        "config": dataclasses.asdict(cfg),
        "scenario": dataclasses.asdict(scenario),
        "total_steps": result.total_steps,
        "artifacts": {
            "checkpoint": result.checkpoint_path.name,
            "metrics": result.metrics_path.name,
            "learning_curve": curve.name,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"run_dir {out}")
    print(f"total_steps {result.total_steps}")
    last = result.metrics[-100:]
    print(f"mean_steps_last100 {_fmt(float(np.mean([m.steps for m in last])))}")
    return 0


# --- eval -----------------------------------------------------------------------

def _load_weights(path):
    try:
        return load_checkpoint(path).weights
    except FileNotFoundError as exc:
        raise CliError(f"checkpoint not found: {path}") from exc
    except CheckpointError as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}") from exc


def cmd_eval(args) -> int:
    w = _load_weights(args.checkpoint)
    scenario = W.get_scenario(args.scenario)
    if args.concavity_spawns and not scenario.has_concave:
        raise CliError("--concavity-spawns needs a scenario with the concave arc")
    n_in = min(args.concavity_spawns, args.episodes)
    regions = ["concavity"] * n_in + ["room"] * (args.episodes - n_in)
    summary = evaluate(w, scenario, args.episodes, seed=args.seed, max_steps=args.max_steps, agent_regions=regions)
    for key, val in summary.report().items():
        print(f"{key} {_fmt(val)}")
    if args.trajectories:
        tdir = Path(args.trajectories)
        tdir.mkdir(parents=True, exist_ok=True)
        from .plotting import trajectory_map
        for k, tr in enumerate(summary.trajectories):
            tr.write_csv(tdir / f"episode_{k:04d}.csv")
            if k < args.plots:
                trajectory_map(tr, tdir / f"episode_{k:04d}.png", title=f"episode {k}: "
                               f"{'escaped' if tr.success else 'failed'} in {tr.steps} steps")
    return 0


# --- inspect --------------------------------------------------------------------

def cmd_inspect(args) -> int:
    scenario = W.get_scenario(args.scenario)
    rng = np.random.default_rng(args.seed)
    world = W.reset(scenario, rng)
    if args.exit is not None:
        wall, offset = args.exit
        if wall not in (0, 1, 2, 3) or wall != int(wall):
            raise CliError("exit wall must be 0 (south), 1 (east), 2 (north) or 3 (west)")
        limit = world.room.half_extent - world.room.exit_width / 2
        if abs(offset) > limit:
            raise CliError(f"exit offset must lie within +-{limit:g}")
        world = dataclasses.replace(world, exit=W.ExitSpec(int(wall), offset))
    if args.pose is not None:
        x, y, theta_deg = args.pose
        world = dataclasses.replace(world, agent=W.Pose(x, y, W.wrap_angle(math.radians(theta_deg))))
    try:
        image = camera.render(world)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out = Path(args.out) if args.out else _runs_root() / "inspect"
    out.mkdir(parents=True, exist_ok=True)
    camera.write_ppm(out / "view.ppm", image)
    camera.write_ppm(out / "view_x10.ppm", camera.upscale(image))
    p = world.agent
    print(f"pose {_fmt(p.x)} {_fmt(p.y)} {_fmt(math.degrees(p.theta))}")
    print(f"exit wall {world.exit.wall_index} offset {_fmt(world.exit.center_offset)}")
    print(f"image {out / 'view.ppm'}")
    if args.checkpoint is None:
        print("no checkpoint given: skipping Q-values", file=sys.stderr)
        return 0
    prefs = preferences(_load_weights(args.checkpoint), world)
    print("angle_deg q softmax")
    for a, q, pr in zip(prefs["angles_deg"], prefs["q"], prefs["probs"]):
        print(f"{a:4g} {_fmt(float(q))} {_fmt(float(pr))}")
    print(f"softmax_sum {_fmt(float(prefs['probs'].sum()))}")
    from .plotting import preference_plot
    preference_plot(prefs, out / "preferences.png")
    return 0


# --- wiring ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynaq", description="Camera-driven deep Dyna-Q room evacuation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    scenarios = sorted(W.SCENARIOS)

    t = sub.add_parser("train", help="train a network and write a run directory")
    t.add_argument("--scenario", choices=scenarios)
    t.add_argument("--episodes", type=_positive_int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help=f"run directory (default: ${RUNS_ENV} or ./runs, then <scenario>-seed<seed>)")
    t.add_argument("--config", help="INI file with [train] and [scenario] sections; flags take precedence")
    t.add_argument("--force", action="store_true", help="replace an existing run directory")
    t.add_argument("--wall-clock", action="store_true",
                   help="record per-episode wall time in metrics.csv (otherwise 0, so reruns are byte-identical)")
    t.add_argument("-q", "--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario", choices=scenarios, default="empty")
    e.add_argument("--episodes", type=_positive_int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--max-steps", type=_positive_int, default=500)
    e.add_argument("--concavity-spawns", type=int, default=0,
                   help="start this many of the episodes inside the arc's hollow")
    e.add_argument("--trajectories", help="directory for per-episode CSV files and maps")
    e.add_argument("--plots", type=int, default=10, help="how many trajectory maps to draw")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="render the camera view at a pose and show action preferences")
    i.add_argument("--checkpoint")
    i.add_argument("--scenario", choices=scenarios, default="empty")
    i.add_argument("--pose", type=_floats(3, "--pose"), help="x,y,heading_degrees")
    i.add_argument("--exit", type=_floats(2, "--exit"), help="wall_index,offset (walls 0..3 = S, E, N, W)")
    i.add_argument("--seed", type=int, default=0, help="seed for anything not pinned by flags")
    i.add_argument("--out")
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"dynaq: error: {exc}", file=sys.stderr)
        return 1
