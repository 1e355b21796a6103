"""Heuristic error assignment: route utterances to output channels.

Utterances are visited in start-time order and placed on the first
channel whose last utterance has already ended. An utterance starting
exactly when another ends does not overlap it.

Channels are numbered from 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import Segment, segment_sort_key, tokenize


@dataclass(frozen=True)
class ChannelAssignment:
    channel_of: tuple[int, ...]
    num_channels: int
    conflicts: tuple[int, ...] = ()

    def members(self, channel: int) -> list[int]:
        return [n for n, c in enumerate(self.channel_of) if c == channel]


@dataclass(frozen=True)
class ChannelReferences:
    per_channel: tuple[tuple[str, ...], ...]
    # for each channel, (utterance index, token offset) where each reference begins
    boundaries: tuple[tuple[tuple[int, int], ...], ...]


def assign(utterances: Sequence[Segment], num_channels: int = 2) -> ChannelAssignment:
    if num_channels < 2:
        raise ValueError(f"num_channels must be >= 2, got {num_channels}")
    keys = [segment_sort_key(u) for u in utterances]
    if any(a > b for a, b in zip(keys, keys[1:])):
        raise ValueError("utterances must be sorted by (start, end, id)")

    last_end = [float("-inf")] * num_channels
    channel_of = []
    conflicts = []
    for n, utt in enumerate(utterances):
        for c in range(num_channels):
            if utt.start >= last_end[c]:
                break
        else:
            # no free channel: fall back to the one that frees up first
            c = min(range(num_channels), key=lambda k: last_end[k])
            conflicts.append(n)
        channel_of.append(c)
        last_end[c] = max(last_end[c], utt.end)
    return ChannelAssignment(tuple(channel_of), num_channels, tuple(conflicts))


def build_references(utterances: Sequence[Segment], assignment: ChannelAssignment) -> ChannelReferences:
    if len(utterances) != len(assignment.channel_of):
        raise ValueError("assignment does not match the utterance list")
    tokens = [[] for _ in range(assignment.num_channels)]
    bounds = [[] for _ in range(assignment.num_channels)]
    for n, (utt, c) in enumerate(zip(utterances, assignment.channel_of)):
        bounds[c].append((n, len(tokens[c])))
        tokens[c].extend(tokenize(utt.text))
    return ChannelReferences(tuple(map(tuple, tokens)), tuple(map(tuple, bounds)))
