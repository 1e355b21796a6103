"""Conversation statistics and multi-talker mixture simulation.

Gaps between consecutive segments of real meetings are collected into three
histograms (same-speaker pause, different-speaker pause, different-speaker
overlap) plus the probability that a speaker change overlaps. New sessions
are then built by picking a few speakers, drawing segments for each up to a
duration budget, shuffling them, and laying them out with gaps sampled from
those histograms.

Each sampled gap is measured from the end of the previous utterance, the
same way gaps are measured when fitting, so re-fitting statistics on the
simulated sessions gives back the originals.
"""

from __future__ import annotations

import json
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Meeting, Segment

log = logging.getLogger(__name__)

DEFAULT_BIN_WIDTH = 0.1


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; use ``rng.spawn`` for independent streams."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Histogram:
    """Counts over bins ``[lo, lo + width)``; ``width == 0`` means point masses at ``lo``."""

    lo: np.ndarray
    counts: np.ndarray
    width: float

    @classmethod
    def fit(cls, values, width: float) -> "Histogram":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return cls(np.zeros(0), np.zeros(0, dtype=np.int64), width)
        idx = np.floor(values / width + 1e-9).astype(np.int64)
        bins, counts = np.unique(idx, return_counts=True)
        return cls(bins * width, counts.astype(np.int64), width)

    @classmethod
    def point(cls, value: float) -> "Histogram":
        return cls(np.array([float(value)]), np.array([1], dtype=np.int64), 0.0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def sample(self, rng: np.random.Generator) -> float:
        if self.total == 0:
            raise ValueError("cannot sample from an empty histogram")
        k = rng.choice(self.counts.size, p=self.counts / self.total)
        return float(self.lo[k] + rng.random() * self.width)

    def mean(self) -> float:
        return float(np.sum((self.lo + self.width / 2) * self.counts) / self.total)

    def to_list(self) -> list:
        return [[round(float(lo), 12), int(c)] for lo, c in zip(self.lo, self.counts)]

    @classmethod
    def from_list(cls, pairs, width: float) -> "Histogram":
        lo = np.array([float(p[0]) for p in pairs])
        counts = np.array([int(p[1]) for p in pairs], dtype=np.int64)
        if np.any(lo < 0) or np.any(counts < 0):
            raise ValueError("histogram bins and counts must be non-negative")
        return cls(lo, counts, width)


@dataclass(frozen=True)
class PauseStats:
    same_spk: Histogram
    diff_spk: Histogram
    overlap: Histogram
    p_ovl: float
    bin_width: float

    def __post_init__(self):
        if not 0.0 <= self.p_ovl <= 1.0:
            raise ValueError(f"p_ovl must be in [0, 1], got {self.p_ovl}")

    @classmethod
    def fixed(cls, same_spk: float, diff_spk: float, overlap: float, p_ovl: float) -> "PauseStats":
        """Degenerate statistics where every gap of a kind has one fixed value."""
        return cls(Histogram.point(same_spk), Histogram.point(diff_spk), Histogram.point(overlap), p_ovl, 0.0)

    def to_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "same_spk": self.same_spk.to_list(),
            "diff_spk": self.diff_spk.to_list(),
            "overlap": self.overlap.to_list(),
            "p_ovl": self.p_ovl,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PauseStats":
        w = float(d["bin_width"])
        return cls(
            Histogram.from_list(d["same_spk"], w),
            Histogram.from_list(d["diff_spk"], w),
            Histogram.from_list(d["overlap"], w),
            float(d["p_ovl"]),
            w,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PauseStats":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def collect_gaps(meetings: Sequence[Meeting]):
    """Raw (same-speaker, different-speaker, overlap) gap lists."""
    same, diff, ovl = [], [], []
    for meeting in meetings:
        segs = meeting.segments
        for prev, cur in zip(segs, segs[1:]):
            t = cur.start - prev.end
            if cur.speaker == prev.speaker:
                # a speaker overlapping themself is recorded as a zero pause
                same.append(max(t, 0.0))
            elif t > 0:
                diff.append(t)
            else:
                ovl.append(-t)
    return same, diff, ovl


def fit_stats(meetings: Sequence[Meeting], bin_width: float = DEFAULT_BIN_WIDTH) -> PauseStats:
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    same, diff, ovl = collect_gaps(meetings)
    if not (same or diff or ovl):
        raise ValueError("no consecutive segment pairs to fit statistics on")
    if diff or ovl:
        p_ovl = len(ovl) / (len(diff) + len(ovl))
    else:
        warnings.warn("no speaker changes in the data; p_ovl set to 0", stacklevel=2)
        p_ovl = 0.0
    return PauseStats(
        Histogram.fit(same, bin_width),
        Histogram.fit(diff, bin_width),
        Histogram.fit(ovl, bin_width),
        p_ovl,
        bin_width,
    )


def sample_gap(stats: PauseStats, prev_speaker: str, next_speaker: str, rng: np.random.Generator) -> float:
    """Signed gap between the end of one utterance and the start of the next.

    Negative values are overlaps.
    """
    if prev_speaker == next_speaker:
        hist, kind, sign = stats.same_spk, "same-speaker pause", 1.0
    elif rng.random() < stats.p_ovl:
        hist, kind, sign = stats.overlap, "overlap", -1.0
    else:
        hist, kind, sign = stats.diff_spk, "speaker-change pause", 1.0
    if hist.total == 0:
        raise ValueError(f"statistics have no {kind} observations to sample from")
    return sign * hist.sample(rng)


@dataclass(frozen=True)
class GenerationConfig:
    max_speakers: int = 3
    max_speaker_dur: float = 15.0
    num_channels: int = 2
    rir_dir: Optional[str] = None
    noise_dir: Optional[str] = None
    noise_snr_db: Optional[float] = None
    loudness_db: Optional[tuple[float, float]] = None
    seed: int = 0

    def __post_init__(self):
        if self.max_speakers < 1:
            raise ValueError("max_speakers must be >= 1")
        if not self.max_speaker_dur > 0:
            raise ValueError("max_speaker_dur must be positive")
        if self.num_channels < 2:
            raise ValueError("num_channels must be >= 2")
        if self.loudness_db is not None:
            lo, hi = self.loudness_db
            if not (lo <= hi < 0):
                raise ValueError(f"loudness range must satisfy min <= max < 0, got {self.loudness_db}")
        if self.noise_dir is not None and self.noise_snr_db is None:
            raise ValueError("noise_dir needs an explicit noise_snr_db")


@dataclass(frozen=True)
class MixtureSpec:
    id: str
    entries: tuple[tuple[Segment, float], ...]
    seed: int = 0

    def __post_init__(self):
        offsets = [o for _, o in self.entries]
        if any(o < 0 for o in offsets):
            raise ValueError(f"mixture {self.id!r}: negative offset")
        if offsets != sorted(offsets):
            raise ValueError(f"mixture {self.id!r}: entries must be ordered by offset")

    @property
    def speakers(self) -> set[str]:
        return {seg.speaker for seg, _ in self.entries}

    @property
    def duration(self) -> float:
        return max((o + seg.duration for seg, o in self.entries), default=0.0)

    def utterances(self) -> list[Segment]:
        """Entries re-timed onto the session clock, sorted by (start, end, id)."""
        segs = [
            Segment(seg.id, seg.speaker, o, o + seg.duration, seg.text, None, seg.source_audio)
            for seg, o in self.entries
        ]
        return sorted(segs, key=lambda s: (s.start, s.end, s.id))

    def as_meeting(self) -> Meeting:
        return Meeting(self.id, tuple(self.utterances()))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "entries": [{"offset": o, "segment": seg.to_dict()} for seg, o in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        entries = tuple((Segment.from_dict(e["segment"]), float(e["offset"])) for e in d["entries"])
        return cls(str(d["id"]), entries, int(d.get("seed", 0)))


def generate_mixtures(segments: Sequence[Segment], stats: PauseStats, config: GenerationConfig,
                      prefix: str = "mix") -> list[MixtureSpec]:
    """Build sessions until every speaker's segment pool is used up.

    Each segment is used at most once. Segments longer than
    ``config.max_speaker_dur`` can never fit a speaker budget and are skipped.
    """
    if not segments:
        raise ValueError("no source segments")
    rng = make_rng(config.seed)
    T = config.max_speaker_dur

    buckets: dict[str, list[Segment]] = defaultdict(list)
    skipped = 0
    for seg in segments:
        if seg.duration > T:
            skipped += 1
            continue
        buckets[seg.speaker].append(seg)
    if skipped:
        log.warning("skipped %d segments longer than the %.1fs speaker budget", skipped, T)
    for spk in buckets:
        pool = buckets[spk]
        order = rng.permutation(len(pool))
        buckets[spk] = [pool[i] for i in order]

    mixtures = []
    while True:
        live = sorted(s for s, pool in buckets.items() if pool)
        if not live:
            break
        k = int(rng.integers(1, config.max_speakers + 1))
        chosen = rng.choice(len(live), size=min(k, len(live)), replace=False)

        picked: list[Segment] = []
        for i in sorted(chosen):
            pool = buckets[live[i]]
            total = 0.0
            while pool and total + pool[-1].duration <= T:
                seg = pool.pop()
                total += seg.duration
                picked.append(seg)

        picked = [picked[i] for i in rng.permutation(len(picked))]
        entries = []
        end = 0.0
        for i, seg in enumerate(picked):
            if i == 0:
                start = 0.0
            else:
                gap = sample_gap(stats, picked[i - 1].speaker, seg.speaker, rng)
                start = max(end + gap, 0.0)
            entries.append((seg, start))
            end = start + seg.duration
        entries.sort(key=lambda e: e[1])
        mixtures.append(MixtureSpec(f"{prefix}-{len(mixtures):06d}", tuple(entries), config.seed))
    return mixtures


def save_mixtures(mixtures: Sequence[MixtureSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for m in mixtures:
            f.write(json.dumps(m.to_dict(), ensure_ascii=False) + "\n")


def load_mixtures(path) -> list[MixtureSpec]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_provenance" in obj:
                continue
            try:
                out.append(MixtureSpec.from_dict(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad mixture ({exc})") from exc
    return out


def histogram_emd(a: Histogram, b: Histogram) -> float:
    """Earth mover's distance between two histograms, using bin centres."""
    from scipy.stats import wasserstein_distance

    return float(wasserstein_distance(a.lo + a.width / 2, b.lo + b.width / 2, a.counts, b.counts))


def per_speaker_duration(spec: MixtureSpec) -> dict[str, float]:
    dur: dict[str, float] = defaultdict(float)
    for seg, _ in spec.entries:
        dur[seg.speaker] += seg.duration
    return dict(dur)


def check_budget(spec: MixtureSpec, config: GenerationConfig) -> bool:
    return len(spec.speakers) <= config.max_speakers and all(
        d <= config.max_speaker_dur + 1e-9 for d in per_speaker_duration(spec).values()
    )


__all__ = [
    "GenerationConfig",
    "Histogram",
    "MixtureSpec",
    "PauseStats",
    "check_budget",
    "collect_gaps",
    "fit_stats",
    "generate_mixtures",
    "histogram_emd",
    "load_mixtures",
    "make_rng",
    "sample_gap",
    "save_mixtures",
]

