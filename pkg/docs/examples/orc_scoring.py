"""Scoring a two-channel transcript three ways.

Run with ``python docs/examples/orc_scoring.py``.
"""

# %% A short meeting: three speakers, two output channels
from multitalk.metrics import cp_wer, edit_stats, ngram_diagnostics, orc_wer

refs = [
    ("alice", "so what do we do next".split()),
    ("bob", "i think we wait".split()),
    ("alice", "for how long".split()),
    ("carol", "a week at most".split()),
]
# The system put bob and carol on the same channel and dropped a word.
hyps = [
    "so what do we do next for how long".split(),
    "i think we wait a week most".split(),
]

# %% ORC-WER picks the best order-preserving channel for every utterance
orc = orc_wer([toks for _, toks in refs], hyps)
print(f"ORC-WER {orc.wer:.3f}  assignment {orc.assignment}  {orc.stats}")

# %% cpWER forces one channel per speaker, so it can only be worse
by_speaker = {}
for spk, toks in refs:
    by_speaker.setdefault(spk, []).extend(toks)
cp = cp_wer(by_speaker, hyps)
print(f"cpWER   {cp.wer:.3f}  {cp}")

# %% Plain WER after flattening everything, for comparison
flat = edit_stats([t for _, toks in refs for t in toks], [t for h in hyps for t in h])
print(f"WER     {flat.wer:.3f}  (channels concatenated)")

# %% Leakage and omission of 2-grams
diag = ngram_diagnostics([toks for _, toks in refs], hyps, n=2)
print(f"leakage@2 {diag.leakage:.3f}  omission@2 {diag.omission:.3f}  over {diag.total_unique} bigrams")
