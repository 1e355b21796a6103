"""Fit pause statistics on a toy meeting, then simulate training sessions.

Run with ``python docs/examples/simulate_mixtures.py``.
"""

# %%
import numpy as np

from multitalk.corpus import Meeting, Segment
from multitalk.heat import assign, build_references
from multitalk.mixer import GenerationConfig, PauseStats, fit_stats, generate_mixtures, per_speaker_duration

rng = np.random.default_rng(0)

# %% A fake "real" meeting to fit pause/overlap histograms on
t, segs = 0.0, []
speakers = ["A", "B", "C"]
spk = "A"
for i in range(400):
    nxt = spk if rng.random() < 0.4 else str(rng.choice([s for s in speakers if s != spk]))
    gap = rng.uniform(0.0, 0.8) if nxt == spk else rng.normal(0.2, 0.5)
    start = max(t + gap, 0.0)
    end = start + rng.uniform(0.8, 4.0)
    segs.append(Segment(f"u{i:03d}", nxt, start, end, f"word{i}"))
    t, spk = end, nxt
meeting = Meeting("toy", tuple(segs))

stats = fit_stats([meeting], bin_width=0.1)
print(f"p_ovl={stats.p_ovl:.3f}  same={stats.same_spk.total} diff={stats.diff_spk.total} ovl={stats.overlap.total}")

# %% Single-speaker source segments (think sub-segmented read speech)
pool = [
    Segment(f"{s}-{k}", s, 0.0, float(rng.uniform(1.0, 5.0)), f"{s.lower()} utt {k}")
    for s in ["S1", "S2", "S3", "S4", "S5"]
    for k in range(20)
]
config = GenerationConfig(max_speakers=3, max_speaker_dur=15.0, seed=7)
mixtures = generate_mixtures(pool, stats, config)
print(f"{len(mixtures)} mixtures from {len(pool)} segments")

# %% Inspect the first session and its per-channel references
first = mixtures[0]
print(first.id, sorted(first.speakers), {k: round(v, 2) for k, v in per_speaker_duration(first).items()})
utts = first.utterances()
refs = build_references(utts, assign(utts, 2))
for c, channel in enumerate(refs.per_channel):
    print(f"channel {c}: {' '.join(channel)}")

# %% The fixed-value setup used for far-field meeting data
fixed = PauseStats.fixed(0.5, 0.5, 1.0, 0.8)
print(len(generate_mixtures(pool, fixed, config)), "mixtures with fixed pauses")
