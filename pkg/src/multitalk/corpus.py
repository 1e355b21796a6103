"""Meeting manifests, word-alignment sub-segmentation and tokenization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional


class ManifestError(ValueError):
    """Raised for malformed manifest lines or segments violating invariants."""


@dataclass(frozen=True)
class AudioSource:
    path: str
    channel: int = 0


@dataclass(frozen=True)
class Segment:
    """One supervised speech region.

    ``words`` holds ``(token, start, end)`` triples when a word alignment
    is available. Times are seconds in the source recording.
    """

    id: str
    speaker: str
    start: float
    end: float
    text: str
    words: Optional[tuple[tuple[str, float, float], ...]] = None
    source_audio: Optional[AudioSource] = None

    def __post_init__(self):
        if not self.start >= 0:
            raise ManifestError(f"segment {self.id!r}: start must be >= 0, got {self.start}")
        if not self.end > self.start:
            raise ManifestError(
                f"segment {self.id!r}: end ({self.end}) must be greater than start ({self.start})"
            )
        if self.words is not None:
            words = tuple((str(w), float(s), float(e)) for w, s, e in self.words)
            object.__setattr__(self, "words", words)
            prev_end = self.start
            for tok, s, e in words:
                if not (prev_end <= s <= e <= self.end):
                    raise ManifestError(
                        f"segment {self.id!r}: word {tok!r} [{s}, {e}] is out of order "
                        f"or outside [{self.start}, {self.end}]"
                    )
                prev_end = e
            if [w for w, _, _ in words] != tokenize(self.text):
                raise ManifestError(f"segment {self.id!r}: word tokens do not reproduce text")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "speaker": self.speaker,
            "start": self.start,
            "end": self.end,
            "text": self.text,
        }
        if self.words is not None:
            d["words"] = [[w, s, e] for w, s, e in self.words]
        if self.source_audio is not None:
            d["audio"] = {"path": self.source_audio.path, "channel": self.source_audio.channel}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        try:
            words = d.get("words")
            audio = d.get("audio")
            return cls(
                id=str(d["id"]),
                speaker=str(d["speaker"]),
                start=float(d["start"]),
                end=float(d["end"]),
                text=str(d["text"]),
                words=None if words is None else tuple((w[0], w[1], w[2]) for w in words),
                source_audio=None
                if audio is None
                else AudioSource(str(audio["path"]), int(audio.get("channel", 0))),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ManifestError(f"segment {d.get('id', '?')!r}: malformed field ({exc})") from exc


def segment_sort_key(seg: Segment):
    return (seg.start, seg.end, seg.id)


@dataclass(frozen=True)
class Meeting:
    id: str
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=segment_sort_key))
        object.__setattr__(self, "segments", segs)
        seen = set()
        for s in segs:
            if s.id in seen:
                raise ManifestError(f"meeting {self.id!r}: duplicate segment id {s.id!r}")
            seen.add(s.id)

    def to_dict(self) -> dict:
        return {"id": self.id, "segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "Meeting":
        if "id" not in d or "segments" not in d:
            raise ManifestError("meeting object needs 'id' and 'segments'")
        return cls(str(d["id"]), tuple(Segment.from_dict(s) for s in d["segments"]))


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace. Case and punctuation are kept as-is."""
    return text.split()


def load_manifest(path) -> list[Meeting]:
    """Read a JSON Lines meeting manifest.

    Blank lines and provenance header lines (objects carrying a
    ``_provenance`` key) are skipped. Meetings with a repeated id are
    dropped after the first occurrence.
    """
    meetings = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            if "_provenance" in obj:
                continue
            try:
                meeting = Meeting.from_dict(obj)
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if meeting.id in seen:
                continue
            seen.add(meeting.id)
            meetings.append(meeting)
    return meetings


def manifest_lines(meetings: Iterable[Meeting]) -> list[str]:
    return [json.dumps(m.to_dict(), ensure_ascii=False) for m in meetings]


def write_manifest(meetings: Iterable[Meeting], path) -> None:
    Path(path).write_text("".join(line + "\n" for line in manifest_lines(meetings)), encoding="utf-8")


def subsegment(segment: Segment, tau: float) -> list[Segment]:
    """Break ``segment`` at every inter-word pause strictly longer than ``tau``.

    Each piece spans its first word's start to its last word's end.
    """
    if segment.words is None:
        raise ValueError(f"segment {segment.id!r} has no word alignment")
    if not tau >= 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if not segment.words:
        return [segment]

    groups = [[segment.words[0]]]
    for word in segment.words[1:]:
        if word[1] - groups[-1][-1][2] > tau:
            groups.append([word])
        else:
            groups[-1].append(word)

    if len(groups) == 1 and math.isinf(tau):
        return [segment]

    pieces = []
    for k, words in enumerate(groups):
        pieces.append(
            Segment(
                id=f"{segment.id}-{k}" if len(groups) > 1 else segment.id,
                speaker=segment.speaker,
                start=words[0][1],
                end=words[-1][2],
                text=" ".join(w for w, _, _ in words),
                words=tuple(words),
                source_audio=segment.source_audio,
            )
        )
    return pieces


def subsegment_meeting(meeting: Meeting, tau: float) -> Meeting:
    segs = []
    for s in meeting.segments:
        segs.extend(subsegment(s, tau) if s.words else [s])
    return Meeting(meeting.id, tuple(segs))
