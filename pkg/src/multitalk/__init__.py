"""Non-neural machinery for transducer-based multi-talker speech recognition.

Mixture simulation, channel reference assignment, transducer/CTC loss
lattices with exact gradients, and multi-channel WER scoring.
"""

__version__ = "0.1.0"

from .corpus import Meeting, Segment, load_manifest, subsegment, tokenize, write_manifest
from .heat import ChannelAssignment, ChannelReferences, assign, build_references
from .metrics import (
    EditStats,
    NGramDiagnostics,
    OrcResult,
    cp_wer,
    edit_stats,
    ngram_diagnostics,
    orc_wer,
    orc_wer_bruteforce,
)
from .mixer import GenerationConfig, MixtureSpec, PauseStats, fit_stats, generate_mixtures, sample_gap
