"""Masking loss and the combined training objective."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .transducer import rnnt_loss

LAMBDA_CTC = 0.2
LAMBDA_MASK = 0.2


def mask_loss(estimated: Sequence, targets: Sequence):
    """Sum over channels of the mean squared error between masked and clean features.

    Returns ``(loss, grads)`` with one gradient array per channel.
    """
    if len(estimated) != len(targets):
        raise ValueError(f"{len(estimated)} estimated channels vs {len(targets)} targets")
    loss = 0.0
    grads = []
    for c, (h, x) in enumerate(zip(estimated, targets)):
        h = np.asarray(h, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if h.shape != x.shape:
            raise ValueError(f"channel {c}: shape {h.shape} does not match target {x.shape}")
        diff = h - x
        loss += float(np.mean(diff**2))
        grads.append(2.0 * diff / diff.size)
    return loss, grads


def heat_loss(per_channel, blank: int = 0) -> float:
    """Sum of per-channel transducer losses; ``per_channel`` holds ``(logits, labels)`` pairs."""
    if len(per_channel) < 1:
        raise ValueError("need at least one channel")
    return float(sum(rnnt_loss(z, y, blank=blank)[0] for z, y in per_channel))


def total_loss(heat: float, ctc: float, mask: float, lambda_ctc: float = LAMBDA_CTC,
               lambda_mask: float = LAMBDA_MASK) -> float:
    if lambda_ctc < 0 or lambda_mask < 0:
        raise ValueError("loss weights must be non-negative")
    return heat + lambda_ctc * ctc + lambda_mask * mask


def reduce_losses(losses, reduction: str = "sum") -> float:
    """Batch reduction; plain sum unless ``reduction='mean'``."""
    losses = list(losses)
    if reduction == "sum":
        return float(sum(losses))
    if reduction == "mean":
        return float(sum(losses) / len(losses)) if losses else 0.0
    raise ValueError(f"unknown reduction {reduction!r}")
