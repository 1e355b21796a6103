"""Word error rates for multi-channel, speaker-agnostic transcripts.

All metrics work on token sequences (see :func:`multitalk.corpus.tokenize`).
``orc_wer`` searches over every order-preserving assignment of reference
utterances to hypothesis channels with a dynamic program whose state is the
read position in every channel at once; ``orc_wer_bruteforce`` enumerates
the assignments and is kept as a cross-check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

MAX_ORC_STATES = 20_000_000
MAX_BRUTEFORCE_UTTERANCES = 8


@dataclass(frozen=True)
class EditStats:
    ins: int = 0
    dels: int = 0
    subs: int = 0
    ref_len: int = 0

    @property
    def errors(self) -> int:
        return self.ins + self.dels + self.subs

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.errors == 0 else math.inf
        return self.errors / self.ref_len

    @property
    def infinite(self) -> bool:
        return math.isinf(self.wer)

    def __add__(self, other: "EditStats") -> "EditStats":
        return EditStats(
            self.ins + other.ins,
            self.dels + other.dels,
            self.subs + other.subs,
            self.ref_len + other.ref_len,
        )

    def to_dict(self) -> dict:
        return {
            "wer": None if self.infinite else self.wer,
            "wer_infinite": self.infinite,
            "ins": self.ins,
            "del": self.dels,
            "sub": self.subs,
            "ref_len": self.ref_len,
        }


@dataclass(frozen=True)
class OrcResult:
    stats: EditStats
    # channel index for each reference utterance
    assignment: tuple[int, ...]

    @property
    def wer(self) -> float:
        return self.stats.wer


@dataclass(frozen=True)
class NGramDiagnostics:
    n: int
    leakage: float
    omission: float
    total_unique: int
    exactly_one: float = 0.0


def edit_stats(ref: Sequence[str], hyp: Sequence[str]) -> EditStats:
    """Unit-cost Levenshtein alignment with an error breakdown.

    Among optimal alignments the backtrace prefers substitutions (or
    matches), then deletions, then insertions.
    """
    ref, hyp = list(ref), list(hyp)
    n, m = len(ref), len(hyp)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        row, prev, r = D[i], D[i - 1], ref[i - 1]
        row[0] = i
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)

    ins = dels = subs = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i][j] == D[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and D[i][j] == D[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditStats(ins, dels, subs, n)


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j - 1] + (r != h), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def _stats_for_assignment(refs, hyps, assignment) -> EditStats:
    total = EditStats()
    for c, hyp in enumerate(hyps):
        ref = [tok for utt, a in zip(refs, assignment) if a == c for tok in utt]
        total = total + edit_stats(ref, hyp)
    return total


def _utterance_step(F: np.ndarray, utt: np.ndarray, hyp: np.ndarray, axis: int) -> np.ndarray:
    """Consume one reference utterance on channel ``axis``; returns the new cost tensor."""
    D = np.moveaxis(F, axis, -1)
    L = D.shape[-1] - 1
    pos = np.arange(L + 1)
    for tok in utt:
        sub = np.full(D.shape, np.inf)
        sub[..., 1:] = D[..., :-1] + (hyp != tok)
        E = np.minimum(sub, D + 1)
        # insertions along the channel: D[j] = min_k E[k] + (j - k)
        D = np.minimum.accumulate(E - pos, axis=-1) + pos
    return np.moveaxis(D, -1, axis)


def _encode(refs, hyps):
    vocab: dict[str, int] = {}
    enc = lambda seq: np.array([vocab.setdefault(t, len(vocab)) for t in seq], dtype=np.int64)
    return [enc(r) for r in refs], [enc(h) for h in hyps]


def orc_wer(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]],
            max_states: int = MAX_ORC_STATES) -> OrcResult:
    """Optimal reference combination WER.

    ``refs`` are reference utterances in start-time order, ``hyps`` the
    per-channel hypothesis token sequences. Each utterance is placed on one
    channel, keeping utterance order within a channel, so as to minimize the
    summed edit distance. Runs in O(N * L_ref * prod(L_c + 1) * C) time and
    keeps one cost tensor per utterance for the backtrace.
    """
    refs = [list(r) for r in refs]
    hyps = [list(h) for h in hyps]
    C = len(hyps)
    if C < 1:
        raise ValueError("need at least one hypothesis channel")
    shape = tuple(len(h) + 1 for h in hyps)
    size = math.prod(shape)
    if size * (len(refs) + 1) > max_states:
        raise ValueError(
            f"ORC search needs {size * (len(refs) + 1)} states, above the limit of {max_states}"
        )
    ref_ids, hyp_ids = _encode(refs, hyps)

    # cost of reaching each channel position before any reference word: all insertions
    F = sum(np.arange(s).reshape([-1 if k == c else 1 for k in range(C)]) for c, s in enumerate(shape))
    F = np.broadcast_to(np.asarray(F, dtype=np.float64), shape).copy()
    history = [F]
    for utt in ref_ids:
        F = np.min([_utterance_step(F, utt, hyp_ids[c], c) for c in range(C)], axis=0)
        history.append(F)

    # walk back one utterance at a time on 1-D slices of the cost tensors
    state = [s - 1 for s in shape]
    assignment = [0] * len(refs)
    for n in range(len(refs), 0, -1):
        utt = ref_ids[n - 1]
        target = history[n][tuple(state)]
        for c in range(C):
            idx = list(state)
            idx[c] = slice(None)
            row0 = history[n - 1][tuple(idx)]
            rows = _slice_rows(row0, utt, hyp_ids[c])
            if rows[-1][state[c]] == target:
                break
        else:  # pragma: no cover - the minimum is always attained by some channel
            raise AssertionError("ORC backtrace failed")
        assignment[n - 1] = c
        state[c] = _back_to_row0(rows, utt, hyp_ids[c], state[c])

    assignment = tuple(assignment)
    stats = _stats_for_assignment(refs, hyps, assignment)
    assert stats.errors == int(history[-1][tuple(s - 1 for s in shape)])
    return OrcResult(stats, assignment)


def _slice_rows(row0, utt, hyp):
    rows = [np.asarray(row0, dtype=np.float64)]
    pos = np.arange(hyp.size + 1)
    for tok in utt:
        D = rows[-1]
        sub = np.full(D.shape, np.inf)
        sub[1:] = D[:-1] + (hyp != tok)
        E = np.minimum(sub, D + 1)
        rows.append(np.minimum.accumulate(E - pos) + pos)
    return rows


def _back_to_row0(rows, utt, hyp, j):
    i = len(rows) - 1
    while i > 0:
        cur = rows[i][j]
        if j > 0 and rows[i - 1][j - 1] + (utt[i - 1] != hyp[j - 1]) == cur:
            i, j = i - 1, j - 1
        elif rows[i - 1][j] + 1 == cur:
            i -= 1
        else:
            j -= 1
    return j


def orc_wer_bruteforce(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]],
                       max_utterances: int = MAX_BRUTEFORCE_UTTERANCES) -> OrcResult:
    """ORC-WER by enumerating all C**N utterance-to-channel assignments."""
    refs = [list(r) for r in refs]
    hyps = [list(h) for h in hyps]
    N, C = len(refs), len(hyps)
    if N > max_utterances:
        raise ValueError(f"{N} utterances exceeds the brute-force limit of {max_utterances}")
    if C < 1:
        raise ValueError("need at least one hypothesis channel")

    # distance of every channel to every ordered subset of utterances, sharing DP prefixes
    dist = [dict() for _ in range(C)]
    for c, hyp in enumerate(hyps):
        stack = [((), list(range(len(hyp) + 1)), 0)]
        while stack:
            subset, row, start = stack.pop()
            dist[c][subset] = row[-1]
            for n in range(start, N):
                r = row
                for tok in refs[n]:
                    cur = [r[0] + 1]
                    for j, h in enumerate(hyp, 1):
                        cur.append(min(r[j - 1] + (tok != h), r[j] + 1, cur[j - 1] + 1))
                    r = cur
                stack.append((subset + (n,), r, n + 1))

    best, best_assign = None, None
    for assign in itertools.product(range(C), repeat=N):
        total = sum(dist[c][tuple(n for n in range(N) if assign[n] == c)] for c in range(C))
        if best is None or total < best:
            best, best_assign = total, assign
    stats = _stats_for_assignment(refs, hyps, best_assign)
    return OrcResult(stats, tuple(best_assign))


def cp_wer(ref_by_speaker: Mapping[str, Sequence[str]], hyps: Sequence[Sequence[str]]) -> EditStats:
    """Concatenated minimum-permutation WER.

    Speakers and channels are matched one-to-one; unmatched speakers are
    scored against an empty hypothesis and unmatched channels against an
    empty reference.
    """
    speakers = sorted(ref_by_speaker)
    refs = [list(ref_by_speaker[s]) for s in speakers]
    hyps = [list(h) for h in hyps]
    if not refs or not hyps:
        raise ValueError("need at least one speaker and one channel")
    n = max(len(refs), len(hyps))
    refs += [[] for _ in range(n - len(refs))]
    hyps += [[] for _ in range(n - len(hyps))]
    cost = np.array([[edit_distance(r, h) for h in hyps] for r in refs])
    rows, cols = linear_sum_assignment(cost)
    total = EditStats()
    for r, c in zip(rows, cols):
        total = total + edit_stats(refs[r], hyps[c])
    return total


def ngrams(tokens: Sequence[str], n: int) -> set[tuple[str, ...]]:
    return {tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)}


def ngram_diagnostics(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]], n: int = 4) -> NGramDiagnostics:
    """Leakage@n and omission@n over the unique n-grams of the reference utterances.

    N-grams never span two reference utterances. A reference n-gram counts
    as present in a channel if it occurs contiguously anywhere in it.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ref_grams = set()
    for utt in refs:
        ref_grams |= ngrams(list(utt), n)
    if not ref_grams:
        return NGramDiagnostics(n, 0.0, 0.0, 0, 0.0)
    hyp_grams = [ngrams(list(h), n) for h in hyps]
    counts = [sum(g in hg for hg in hyp_grams) for g in ref_grams]
    total = len(ref_grams)
    return NGramDiagnostics(
        n=n,
        leakage=sum(k >= 2 for k in counts) / total,
        omission=sum(k == 0 for k in counts) / total,
        total_unique=total,
        exactly_one=sum(k == 1 for k in counts) / total,
    )
