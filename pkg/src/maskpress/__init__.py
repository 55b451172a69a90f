"""maskpress: hierarchical prompt pruning with a learned retention-mask model.

The package covers the full desk-scale loop: synthetic corpora with known
redundant tokens, shot-level and threshold-accepting token-level pruning,
filtered full/pruned pair datasets, a miniature denoising mask predictor,
and grid search over its inference knobs.
"""

__version__ = "0.1.0"
