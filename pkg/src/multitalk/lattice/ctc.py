from __future__ import annotations

import warnings

import numpy as np
from scipy.special import log_softmax, logsumexp

from .transducer import NEG_INF


class CTCInfeasibleWarning(RuntimeWarning):
    """The label sequence needs more frames than the input provides."""


def min_frames(labels) -> int:
    labels = list(labels)
    repeats = sum(a == b for a, b in zip(labels, labels[1:]))
    return len(labels) + repeats


def ctc_loss(logits, labels, blank: int = 0):
    """CTC negative log likelihood and its gradient w.r.t. pre-softmax logits.

    ``logits`` has shape (T, V). When ``T`` is too short for ``labels`` the
    loss is ``inf``, the gradient is zero and a ``CTCInfeasibleWarning`` is
    emitted.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (T, V), got shape {logits.shape}")
    T, V = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= V or np.any(labels == blank)):
        raise ValueError(f"labels must be non-blank ids in [0, {V})")
    if T < min_frames(labels.tolist()):
        warnings.warn(
            f"{labels.size} labels cannot be aligned to {T} frames", CTCInfeasibleWarning, stacklevel=2
        )
        return float("inf"), np.zeros_like(logits)

    logprobs = log_softmax(logits, axis=-1)
    ext = np.full(2 * labels.size + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    S = ext.size
    # label states may skip the preceding blank unless the label repeats
    skip = np.zeros(S, dtype=bool)
    skip[3::2] = labels[1:] != labels[:-1]

    emit = logprobs[:, ext]  # (T, S)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]

    # beta[t, s]: log prob of frames t+1.. given state s at frame t
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc

    log_prob = logsumexp(alpha[T - 1, max(S - 2, 0):])
    post = np.exp(alpha + beta - log_prob)
    grad = np.exp(logprobs)
    for s in range(S):
        grad[:, ext[s]] -= post[:, s]
    return float(-log_prob), grad
