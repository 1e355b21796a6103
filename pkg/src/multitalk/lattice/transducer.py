"""Full-sum transducer loss over the T x (U+1) alignment lattice.

Node ``(t, u)`` means ``t`` frames and ``u`` labels have been consumed up to
the current frame. Blank arcs go ``(t, u) -> (t+1, u)``, label arcs go
``(t, u) -> (t, u+1)``; the path ends with a blank out of ``(T-1, U)``.
Everything is computed in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

NEG_INF = -np.inf


def check_labels(labels, num_labels_max: int, vocab: int, blank: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size != num_labels_max:
        raise ValueError(f"expected {num_labels_max} labels, got {labels.size}")
    if labels.size and (labels.min() < 0 or labels.max() >= vocab):
        raise ValueError(f"label ids must lie in [0, {vocab})")
    if np.any(labels == blank):
        raise ValueError(f"labels must not contain the blank id {blank}")
    return labels


def _diagonals(T: int, U: int):
    for d in range(T + U):
        t = np.arange(max(0, d - U), min(T - 1, d) + 1)
        yield t, d - t


def forward_backward(blank_lp: np.ndarray, emit_lp: np.ndarray):
    """Run the lattice recursions.

    ``blank_lp`` has shape (T, U+1), ``emit_lp`` (T, U). Returns
    ``(log_prob, alpha, beta)`` where ``beta[t, u]`` is the log probability
    of finishing from node ``(t, u)``, final blank included.
    """
    T, U1 = blank_lp.shape
    U = U1 - 1
    alpha = np.full((T, U1), NEG_INF)
    alpha[0, 0] = 0.0
    for t, u in _diagonals(T, U):
        if t.size == 1 and t[0] == 0 and u[0] == 0:
            continue
        from_left = np.full(t.shape, NEG_INF)
        ok = t > 0
        from_left[ok] = alpha[t[ok] - 1, u[ok]] + blank_lp[t[ok] - 1, u[ok]]
        from_below = np.full(t.shape, NEG_INF)
        ok = u > 0
        from_below[ok] = alpha[t[ok], u[ok] - 1] + emit_lp[t[ok], u[ok] - 1]
        alpha[t, u] = np.logaddexp(from_left, from_below)

    beta = np.full((T, U1), NEG_INF)
    beta[T - 1, U] = blank_lp[T - 1, U]
    for t, u in reversed(list(_diagonals(T, U))):
        if t[0] == T - 1 and u[0] == U and t.size == 1:
            continue
        to_right = np.full(t.shape, NEG_INF)
        ok = t < T - 1
        to_right[ok] = beta[t[ok] + 1, u[ok]] + blank_lp[t[ok], u[ok]]
        to_up = np.full(t.shape, NEG_INF)
        ok = u < U
        to_up[ok] = beta[t[ok], u[ok] + 1] + emit_lp[t[ok], u[ok]]
        beta[t, u] = np.logaddexp(to_right, to_up)

    log_prob = alpha[T - 1, U] + blank_lp[T - 1, U]
    return log_prob, alpha, beta


def arc_posteriors(blank_lp, emit_lp, log_prob, alpha, beta):
    """Posterior probabilities of every blank arc (T, U+1) and label arc (T, U)."""
    T, U1 = blank_lp.shape
    beta_next = np.full((T, U1), NEG_INF)
    beta_next[:-1] = beta[1:]
    beta_next[T - 1, U1 - 1] = 0.0
    with np.errstate(invalid="ignore"):
        blank_post = np.exp(alpha + blank_lp + beta_next - log_prob)
        emit_post = np.exp(alpha[:, :-1] + emit_lp + beta[:, 1:] - log_prob)
    return np.nan_to_num(blank_post), np.nan_to_num(emit_post)


def lattice_scores(logprobs: np.ndarray, labels: np.ndarray, blank: int):
    """Split normalized (T, U+1, V) scores into blank and label arc weights."""
    T, U1, _ = logprobs.shape
    blank_lp = logprobs[:, :, blank]
    emit_lp = logprobs[:, np.arange(U1 - 1), labels] if U1 > 1 else np.zeros((T, 0))
    return blank_lp, emit_lp


def logits_gradient(logprobs, labels, blank, blank_post, emit_post):
    """Gradient of -log P w.r.t. pre-softmax logits given arc posteriors."""
    U = labels.size
    node_out = blank_post.copy()
    node_out[:, :U] += emit_post
    grad = np.exp(logprobs) * node_out[:, :, None]
    grad[:, :, blank] -= blank_post
    if U:
        grad[:, np.arange(U), labels] -= emit_post
    return grad


def rnnt_loss(logits, labels, blank: int = 0):
    """Negative log likelihood of ``labels`` under a transducer lattice.

    ``logits`` has shape (T, U+1, V) and is log-softmaxed internally, so
    already-normalized input is accepted unchanged. Returns
    ``(loss, grad)`` with ``grad`` taken w.r.t. the pre-softmax logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3:
        raise ValueError(f"logits must be (T, U+1, V), got shape {logits.shape}")
    T, U1, V = logits.shape
    if T < 1:
        raise ValueError("need at least one frame")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    labels = check_labels(labels, U1 - 1, V, blank)
    logprobs = log_softmax(logits, axis=-1)
    blank_lp, emit_lp = lattice_scores(logprobs, labels, blank)
    log_prob, alpha, beta = forward_backward(blank_lp, emit_lp)
    blank_post, emit_post = arc_posteriors(blank_lp, emit_lp, log_prob, alpha, beta)
    grad = logits_gradient(logprobs, labels, blank, blank_post, emit_post)
    return float(-log_prob), grad


@dataclass(frozen=True)
class OccupancyGrid:
    """Posterior visit probabilities of lattice nodes and arcs."""

    node: np.ndarray  # (T, U+1)
    blank: np.ndarray  # (T, U+1)
    emit: np.ndarray  # (T, U)

    def to_dict(self) -> dict:
        return {
            "T": int(self.node.shape[0]),
            "U": int(self.node.shape[1] - 1),
            "node": self.node.tolist(),
            "blank": self.blank.tolist(),
            "emit": self.emit.tolist(),
        }


def occupancy(logits, labels, blank: int = 0, pred=None) -> OccupancyGrid:
    """Occupation probabilities of the lattice.

    Pass full logits (T, U+1, V), or the trivial-joiner pair as
    ``occupancy(enc, labels, pred=pred)``.
    """
    if pred is not None:
        from .pruned import trivial_join

        logprobs = trivial_join(logits, pred)
    else:
        logprobs = log_softmax(np.asarray(logits, dtype=np.float64), axis=-1)
    T, U1, V = logprobs.shape
    labels = check_labels(labels, U1 - 1, V, blank)
    blank_lp, emit_lp = lattice_scores(logprobs, labels, blank)
    log_prob, alpha, beta = forward_backward(blank_lp, emit_lp)
    if not np.isfinite(log_prob):
        raise ValueError("lattice has no complete path")
    blank_post, emit_post = arc_posteriors(blank_lp, emit_lp, log_prob, alpha, beta)
    with np.errstate(invalid="ignore"):
        node = np.nan_to_num(np.exp(alpha + beta - log_prob))
    return OccupancyGrid(node=node, blank=blank_post, emit=emit_post)
