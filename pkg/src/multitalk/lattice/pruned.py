"""Pruned transducer loss driven by a cheap additive joiner.

The additive ("trivial") joiner scores node ``(t, u)`` as
``log_softmax(enc[t] + pred[u])``. Its lattice occupancies select, for
every frame, a window of ``S`` consecutive label positions; the expensive
joiner is then evaluated only inside those windows.

Window selection is done per frame and then repaired so the windowed
region stays connected: ``lo[0] == 0``, ``lo[T-1] == U+1-S`` and
``0 <= lo[t+1] - lo[t] <= S-1``. The last condition is what lets a blank
arc reach the next frame's window. Windows for a larger ``S`` are grown
from the windows for ``S - 1`` one node per frame at a time, so they are
nested and the pruned loss cannot increase with ``S``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import log_softmax, logsumexp

from .transducer import (
    NEG_INF,
    arc_posteriors,
    check_labels,
    forward_backward,
    lattice_scores,
    occupancy,
)


def trivial_join(enc, pred) -> np.ndarray:
    """Additive joiner: ``z[t, u] = enc[t] + pred[u] - logsumexp_v(enc[t] + pred[u])``.

    Returns log probabilities of shape (T, U+1, V).
    """
    enc = np.asarray(enc, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if enc.ndim != 2 or pred.ndim != 2 or enc.shape[1] != pred.shape[1]:
        raise ValueError(f"expected enc (T, V) and pred (U+1, V), got {enc.shape} and {pred.shape}")
    if not (np.all(np.isfinite(enc)) and np.all(np.isfinite(pred))):
        raise ValueError("joiner inputs must be finite")
    joint = enc[:, None, :] + pred[None, :, :]
    norm = logsumexp(joint, axis=-1, keepdims=True)
    return joint - norm


@dataclass(frozen=True)
class PruneBounds:
    lo: np.ndarray  # (T,) first label position kept at each frame
    window: int
    num_labels: int  # U

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.window

    def validate(self) -> None:
        lo, S, U = self.lo, self.window, self.num_labels
        if S < 1 or S > U + 1:
            raise ValueError(f"window {S} outside [1, {U + 1}]")
        if lo.size == 0 or lo[0] != 0 or lo[-1] != U + 1 - S:
            raise ValueError("bounds must start at label 0 and end covering label U")
        if np.any(lo < 0) or np.any(lo + S > U + 1):
            raise ValueError("bounds fall outside the lattice")
        step = np.diff(lo)
        if np.any(step < 0) or np.any(step > S - 1):
            raise ValueError("bounds are disconnected: need 0 <= lo[t+1] - lo[t] <= S-1")

    def mask(self) -> np.ndarray:
        """Boolean (T, U+1) array of the nodes kept by the pruning."""
        u = np.arange(self.num_labels + 1)
        return (u[None, :] >= self.lo[:, None]) & (u[None, :] < self.hi[:, None])

    def node_index(self):
        """``(t, u)`` index arrays of shape (T, S) for the windowed nodes."""
        T = self.lo.size
        t = np.repeat(np.arange(T)[:, None], self.window, axis=1)
        u = self.lo[:, None] + np.arange(self.window)[None, :]
        return t, u


def min_window(T: int, U: int) -> int:
    """Smallest window for which a connected pruned lattice exists."""
    return 1 + math.ceil(U / T)


def _base_bounds(node: np.ndarray, S: int) -> np.ndarray:
    T, U1 = node.shape
    U = U1 - 1
    csum = np.concatenate([np.zeros((T, 1)), np.cumsum(node, axis=1)], axis=1)
    mass = csum[:, S:] - csum[:, : U1 - S + 1]  # mass of window starting at each lo
    raw = np.argmax(mass, axis=1)

    lo = np.zeros(T, dtype=np.int64)
    for t in range(1, T):
        lower = max(lo[t - 1], U + 1 - S - (T - 1 - t) * (S - 1), 0)
        upper = min(lo[t - 1] + S - 1, U + 1 - S)
        lo[t] = min(max(raw[t], lower), upper)
    return lo


def _grow(node: np.ndarray, lo: np.ndarray, S: int) -> np.ndarray:
    """Widen every window of size ``S`` by one node, keeping the region connected."""
    U = node.shape[1] - 1
    new = lo.copy()
    for t in range(lo.size):
        left_ok = lo[t] > 0
        right_ok = lo[t] + S <= U
        if left_ok and right_ok:
            take_left = node[t, lo[t] - 1] >= node[t, lo[t] + S]
        else:
            take_left = left_ok
        if take_left:
            new[t] -= 1
    # two neighbouring frames can cross when they grew in opposite directions
    return np.minimum.accumulate(new[::-1])[::-1]


def prune_bounds(enc, pred, labels, window: int, blank: int = 0) -> PruneBounds:
    """Choose per-frame label windows from trivial-joiner occupancies."""
    enc = np.asarray(enc, dtype=np.float64)
    T = enc.shape[0]
    U = np.asarray(labels).size
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window > U + 1:
        warnings.warn(f"window {window} exceeds U+1={U + 1}; clipping", stacklevel=2)
        window = U + 1
    smallest = min_window(T, U)
    if window < smallest:
        raise ValueError(
            f"window {window} cannot connect a lattice with T={T}, U={U}; need at least {smallest}"
        )
    node = occupancy(enc, labels, blank=blank, pred=pred).node
    lo = _base_bounds(node, smallest)
    for S in range(smallest, window):
        lo = _grow(node, lo, S)
    bounds = PruneBounds(lo=lo, window=window, num_labels=U)
    bounds.validate()
    return bounds


def gather_window(logits, bounds: PruneBounds) -> np.ndarray:
    """Pick the (T, S, V) windowed slice out of full (T, U+1, V) logits."""
    t, u = bounds.node_index()
    return np.asarray(logits)[t, u]


Joiner = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def pruned_rnnt_loss(joiner: Joiner, bounds: PruneBounds, labels, blank: int = 0):
    """Full-sum transducer loss restricted to the windowed nodes.

    ``joiner`` is either the (T, S, V) window logits or a callable that
    takes the ``(t, u)`` index arrays of shape (T, S) and returns them.
    Returns ``(loss, grad)`` where ``grad`` matches the window logits.
    """
    bounds.validate()
    t_idx, u_idx = bounds.node_index()
    win = joiner(t_idx, u_idx) if callable(joiner) else joiner
    win = np.asarray(win, dtype=np.float64)
    T, S = t_idx.shape
    if win.ndim != 3 or win.shape[:2] != (T, S):
        raise ValueError(f"window logits must have shape ({T}, {S}, V), got {win.shape}")
    if not np.all(np.isfinite(win)):
        raise ValueError("logits must be finite")
    U = bounds.num_labels
    labels = check_labels(labels, U, win.shape[2], blank)

    logprobs = log_softmax(win, axis=-1)
    keep = bounds.mask()
    full = np.zeros((T, U + 1, win.shape[2]))
    full[t_idx, u_idx] = logprobs
    blank_lp, emit_lp = lattice_scores(full, labels, blank)
    blank_lp = np.where(keep, blank_lp, NEG_INF)
    # a blank arc must land inside the next frame's window
    blank_lp[:-1] = np.where(keep[1:], blank_lp[:-1], NEG_INF)
    emit_lp = np.where(keep[:, :-1] & keep[:, 1:], emit_lp, NEG_INF)

    log_prob, alpha, beta = forward_backward(blank_lp, emit_lp)
    if not np.isfinite(log_prob):
        raise ValueError("pruned lattice has no complete path")
    blank_post, emit_post = arc_posteriors(blank_lp, emit_lp, log_prob, alpha, beta)

    emit_full = np.zeros((T, U + 1))
    emit_full[:, :U] = emit_post
    bp = blank_post[t_idx, u_idx]
    ep = emit_full[t_idx, u_idx]
    grad = np.exp(logprobs) * (bp + ep)[:, :, None]
    grad[:, :, blank] -= bp
    tt, ss = np.nonzero(u_idx < U)
    grad[tt, ss, labels[u_idx[tt, ss]]] -= ep[tt, ss]
    return float(-log_prob), grad
