"""crossling: cross-lingual instruction data synthesis and evaluation.

The package covers the full loop: sample an English seed corpus, generate
reverse instructions with a teacher model, refine the pairs, translate the
responses sentence by sentence with QE-based selection, filter by passage
quality, export SFT-ready data, build cross-lingual and translated
benchmarks, and evaluate candidate models with pairwise win rates and
rubric scores.
"""

__version__ = "0.1.0"
