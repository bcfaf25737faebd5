"""Tabular Q-learning on a small deterministic gridworld.

Serves as an oracle for the update rule and reward scheme used by the deep
learner: -0.1 per step, 0 for the step that enters the goal, and moves into a
wall or blocked cell leave the agent where it is.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MOVES = ((0, 1), (1, 0), (0, -1), (-1, 0))  # N, E, S, W
STEP_REWARD = -0.1
GOAL_REWARD = 0.0


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridWorld:
    width: int
    height: int
    goal: tuple[int, int]
    blocked: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.width * self.height > 100:
            raise ValueError("oracle gridworlds are limited to 100 cells")
        if self.goal in self.blocked:
            raise ValueError("goal is blocked")

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in self.blocked]

    def step(self, cell, a: int):
        """(next_cell, reward, terminal)."""
        nx, ny = cell[0] + MOVES[a][0], cell[1] + MOVES[a][1]
        if not (0 <= nx < self.width and 0 <= ny < self.height) or (nx, ny) in self.blocked:
            nx, ny = cell
        if (nx, ny) == self.goal:
            return (nx, ny), GOAL_REWARD, True
        return (nx, ny), STEP_REWARD, False


def tabular_q_oracle(gw: GridWorld, gamma: float = 0.999, alpha: float = 0.5, tol: float = 1e-13,
                     max_sweeps: int = 200_000) -> dict:
    """Apply ``Q += alpha * (R + gamma * max Q(s') - Q)`` in sweeps over every state-action until still.

    Returns ``{cell: np.ndarray of 4 Q-values}``; the goal is terminal and omitted.
    """
    cells = [c for c in gw.cells if c != gw.goal]
    Q = {c: np.zeros(len(MOVES)) for c in cells}
    for _ in range(max_sweeps):
        change = 0.0
        for c in cells:
            for a in range(len(MOVES)):
                nxt, r, term = gw.step(c, a)
                target = r if term else r + gamma * Q[nxt].max()
                delta = alpha * (target - Q[c][a])
                Q[c][a] += delta
                change = max(change, abs(delta))
        if change < tol:
            return Q
    raise OracleError(f"Q-learning did not settle within {max_sweeps} sweeps")


def value_iteration(gw: GridWorld, gamma: float = 0.999, tol: float = 1e-14, max_sweeps: int = 100_000) -> dict:
    """Optimal Q via synchronous value iteration on state values."""
    cells = [c for c in gw.cells if c != gw.goal]
    V = {c: 0.0 for c in cells}
    V[gw.goal] = 0.0
    for _ in range(max_sweeps):
        newV = dict(V)
        for c in cells:
            best = -np.inf
            for a in range(len(MOVES)):
                nxt, r, term = gw.step(c, a)
                best = max(best, r if term else r + gamma * V[nxt])
            newV[c] = best
        diff = max(abs(newV[c] - V[c]) for c in cells) if cells else 0.0
        V = newV
        if diff < tol:
            break
    else:
        raise OracleError("value iteration did not converge")
    Q = {}
    for c in cells:
        q = np.empty(len(MOVES))
        for a in range(len(MOVES)):
            nxt, r, term = gw.step(c, a)
            q[a] = r if term else r + gamma * V[nxt]
        Q[c] = q
    return Q


def bellman_residual(gw: GridWorld, Q: dict, gamma: float = 0.999) -> float:
    worst = 0.0
    for c, q in Q.items():
        for a in range(len(MOVES)):
            nxt, r, term = gw.step(c, a)
            target = r if term else r + gamma * Q[nxt].max()
            worst = max(worst, abs(target - q[a]))
    return worst
