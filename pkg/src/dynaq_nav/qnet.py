"""Fully connected DQN in float64 numpy: forward, TD backprop, Adam, soft update.

All parameters of a network live in one contiguous vector; per-layer weight
matrices and bias vectors are views into it. That keeps the optimizer and the
target-network blend to a handful of vectorized operations.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

LAYER_SIZES = (420, 64, 128, 64, 7)
LAYER_SHAPES = tuple((o, i) for i, o in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]))

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _n_params(shapes) -> int:
    return sum(o * i + o for o, i in shapes)


class NetworkWeights:
    """Layer list ``[(W, b), ...]`` backed by a single flat float64 vector."""

    def __init__(self, flat: np.ndarray | None = None, shapes: Sequence[tuple[int, int]] = LAYER_SHAPES):
        self.shapes = tuple((int(o), int(i)) for o, i in shapes)
        n = _n_params(self.shapes)
        if flat is None:
            flat = np.zeros(n)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {flat.shape}")
        self.flat = flat
        self.layers = []
        pos = 0
        for o, i in self.shapes:
            W = flat[pos:pos + o * i].reshape(o, i)
            pos += o * i
            b = flat[pos:pos + o]
            pos += o
            self.layers.append((W, b))

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(self.flat.copy(), self.shapes)

    def zeros_like(self) -> "NetworkWeights":
        return NetworkWeights(np.zeros_like(self.flat), self.shapes)

    def __eq__(self, other) -> bool:
        return (isinstance(other, NetworkWeights) and self.shapes == other.shapes
                and np.array_equal(self.flat, other.flat))

    def __repr__(self) -> str:
        return f"NetworkWeights(shapes={self.shapes})"


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def like(cls, w: NetworkWeights, **kw) -> "AdamState":
        return cls(np.zeros_like(w.flat), np.zeros_like(w.flat), **kw)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


class Batch(NamedTuple):
    states: np.ndarray       # (n, 420) uint8
    actions: np.ndarray      # (n,) int
    next_states: np.ndarray  # (n, 420) uint8
    rewards: np.ndarray      # (n,) float
    terminals: np.ndarray    # (n,) bool


def init_weights(rng: np.random.Generator, shapes=LAYER_SHAPES) -> NetworkWeights:
    """He-normal weights (variance 2 / fan_in), zero biases."""
    w = NetworkWeights(shapes=shapes)
    for W, _ in w.layers:
        W[...] = rng.normal(0.0, np.sqrt(2.0 / W.shape[1]), size=W.shape)
    return w


def preprocess(states) -> np.ndarray:
    """Pixel bytes to [0, 1] floats."""
    return np.asarray(states, dtype=np.float64) / 255.0


def _forward_cache(w: NetworkWeights, x: np.ndarray):
    acts = [x]
    h = x
    last = len(w.layers) - 1
    for k, (W, b) in enumerate(w.layers):
        z = h @ W.T + b
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(w: NetworkWeights, state) -> np.ndarray:
    """Q-values for one normalized state (shape (420,)) or a batch (n, 420)."""
    x = np.asarray(state, dtype=np.float64)
    if x.shape[-1] != w.shapes[0][1]:
        raise ValueError(f"input width {x.shape[-1]} != {w.shapes[0][1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite network input")
    return _forward_cache(w, x)[-1]


def as_batch(batch) -> Batch:
    if isinstance(batch, Batch):
        return batch
    exps = list(batch)
    return Batch(
        np.stack([np.asarray(e.state).reshape(-1) for e in exps]),
        np.array([e.action for e in exps], dtype=np.int64),
        np.stack([np.asarray(e.next_state).reshape(-1) for e in exps]),
        np.array([e.reward for e in exps], dtype=np.float64),
        np.array([e.terminal for e in exps], dtype=bool),
    )


def td_targets(w_target: NetworkWeights, batch: Batch, gamma: float) -> np.ndarray:
    q_next = forward(w_target, preprocess(batch.next_states)).max(axis=1)
    return np.where(batch.terminals, batch.rewards, batch.rewards + gamma * q_next)


def td_loss_and_grads(w_train: NetworkWeights, w_target: NetworkWeights, batch, gamma: float):
    """Mean squared TD error and its gradient with respect to ``w_train`` only.

    Terminal transitions use the bare reward as the target.
    """
    batch = as_batch(batch)
    n = len(batch.actions)
    if n == 0:
        raise ValueError("empty batch")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    y = td_targets(w_target, batch, gamma)

    acts = _forward_cache(w_train, preprocess(batch.states))
    q = acts[-1]
    idx = np.arange(n)
    err = y - q[idx, batch.actions]
    loss = float(np.mean(err * err))

    grads = w_train.zeros_like()
    delta = np.zeros_like(q)
    delta[idx, batch.actions] = -2.0 * err / n
    for k in range(len(w_train.layers) - 1, -1, -1):
        W, _ = w_train.layers[k]
        gW, gb = grads.layers[k]
        h_in = acts[k]
        gW[...] = delta.T @ h_in
        gb[...] = delta.sum(axis=0)
        if k:
            delta = (delta @ W) * (h_in > 0)
    return loss, grads


def adam_step(w: NetworkWeights, opt: AdamState, grads: NetworkWeights, alpha: float = 1e-4,
              inplace: bool = False):
    """One bias-corrected Adam update; returns (weights, state)."""
    g = grads.flat
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient")
    if g.shape != w.flat.shape or opt.m.shape != w.flat.shape:
        raise ValueError("shape mismatch between weights, gradients and optimizer state")
    if not inplace:
        w, opt = w.copy(), opt.copy()
    opt.t += 1
    buf = np.empty_like(g)
    np.multiply(g, 1.0 - opt.beta1, out=buf)
    opt.m *= opt.beta1
    opt.m += buf
    np.multiply(g, g, out=buf)
    buf *= 1.0 - opt.beta2
    opt.v *= opt.beta2
    opt.v += buf
    # m_hat / (sqrt(v_hat) + eps) == (sqrt(c2) / c1) * m / (sqrt(v) + eps * sqrt(c2))
    c1 = 1.0 - opt.beta1 ** opt.t
    sc2 = np.sqrt(1.0 - opt.beta2 ** opt.t)
    np.sqrt(opt.v, out=buf)
    buf += opt.eps * sc2
    np.divide(opt.m, buf, out=buf)
    buf *= alpha * sc2 / c1
    w.flat -= buf
    if opt.t % 1000 == 0:
        # moments of parameters with long-dead gradients decay toward subnormals,
        # which are very slow to compute with; their contribution is nil
        opt.m[np.abs(opt.m) < 1e-150] = 0.0
        opt.v[opt.v < 1e-280] = 0.0
    return w, opt


def soft_update(w_target: NetworkWeights, w_train: NetworkWeights, tau: float) -> NetworkWeights:
    """Blend target toward train: ``target + tau * (train - target)``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if tau == 1.0:
        return w_train.copy()
    return NetworkWeights(w_target.flat + tau * (w_train.flat - w_target.flat), w_target.shapes)


# --- checkpoint format ----------------------------------------------------------
#
#   magic            8 bytes  b"DYNAQNET"
#   version          u8
#   flags            u8       bit0 target weights present, bit1 optimizer present
#   n_layers         u16
#   shape table      n_layers * (u32 out, u32 in)
#   [optimizer hdr]  u64 t, f64 beta1, f64 beta2, f64 eps
#   payload          f64 LE: train params, [target params], [adam m, adam v]
#   crc32            u32 over everything above

MAGIC = b"DYNAQNET"
FORMAT_VERSION = 1
_FLAG_TARGET = 1
_FLAG_ADAM = 2


class CheckpointError(ValueError):
    pass


class CorruptHeaderError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    weights: NetworkWeights
    target: NetworkWeights | None = None
    adam: AdamState | None = None


def serialize(w: NetworkWeights, opt: AdamState | None = None, target: NetworkWeights | None = None) -> bytes:
    flags = (_FLAG_TARGET if target is not None else 0) | (_FLAG_ADAM if opt is not None else 0)
    parts = [MAGIC, struct.pack("<BBH", FORMAT_VERSION, flags, len(w.shapes))]
    parts += [struct.pack("<II", o, i) for o, i in w.shapes]
    if opt is not None:
        parts.append(struct.pack("<Qddd", opt.t, opt.beta1, opt.beta2, opt.eps))
    arrays = [w.flat]
    if target is not None:
        if target.shapes != w.shapes:
            raise ValueError("target shapes differ from train shapes")
        arrays.append(target.flat)
    if opt is not None:
        arrays += [opt.m, opt.v]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize(data: bytes, expected_shapes: Sequence[tuple[int, int]] | None = LAYER_SHAPES) -> Checkpoint:
    """Parse a checkpoint; raises a specific :class:`CheckpointError` on any defect."""
    data = bytes(data)
    if len(data) < len(MAGIC) + 4:
        if data[:len(MAGIC)] == MAGIC[:len(data)]:
            raise TruncatedError("checkpoint shorter than its header")
        raise CorruptHeaderError("bad magic")
    if data[:len(MAGIC)] != MAGIC:
        raise CorruptHeaderError("bad magic")
    version, flags, n_layers = struct.unpack_from("<BBH", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {FORMAT_VERSION}")
    if flags & ~(_FLAG_TARGET | _FLAG_ADAM):
        raise CorruptHeaderError(f"unknown flags {flags:#x}")
    pos = len(MAGIC) + 4
    if len(data) < pos + 8 * n_layers:
        raise TruncatedError("truncated shape table")
    shapes = [struct.unpack_from("<II", data, pos + 8 * k) for k in range(n_layers)]
    pos += 8 * n_layers
    if expected_shapes is not None and tuple(shapes) != tuple(tuple(s) for s in expected_shapes):
        raise ShapeMismatchError(f"layer shapes {shapes} != {list(expected_shapes)}")
    for k in range(1, n_layers):
        if shapes[k][1] != shapes[k - 1][0]:
            raise CorruptHeaderError("inconsistent layer shapes")
    opt_hdr = None
    if flags & _FLAG_ADAM:
        if len(data) < pos + 32:
            raise TruncatedError("truncated optimizer header")
        opt_hdr = struct.unpack_from("<Qddd", data, pos)
        pos += 32
    n = _n_params(shapes)
    n_arrays = 1 + bool(flags & _FLAG_TARGET) + 2 * bool(flags & _FLAG_ADAM)
    end = pos + 8 * n * n_arrays
    if len(data) < end + 4:
        raise TruncatedError(f"payload has {len(data) - pos} bytes, need {end + 4 - pos}")
    if len(data) > end + 4:
        raise CorruptHeaderError("trailing bytes after checksum")
    (crc,) = struct.unpack_from("<I", data, end)
    if zlib.crc32(data[:end]) != crc:
        raise ChecksumError("checksum mismatch")
    arrays = [np.frombuffer(data, dtype="<f8", count=n, offset=pos + 8 * n * k).astype(np.float64)
              for k in range(n_arrays)]
    weights = NetworkWeights(arrays.pop(0), shapes)
    target = NetworkWeights(arrays.pop(0), shapes) if flags & _FLAG_TARGET else None
    adam = None
    if opt_hdr is not None:
        t, b1, b2, eps = opt_hdr
        adam = AdamState(arrays[0], arrays[1], int(t), b1, b2, eps)
    return Checkpoint(weights, target, adam)


def save_checkpoint(path, w: NetworkWeights, opt: AdamState | None = None,
                    target: NetworkWeights | None = None) -> None:
    Path(path).write_bytes(serialize(w, opt, target))


def load_checkpoint(path) -> Checkpoint:
    return deserialize(Path(path).read_bytes())
