"""Balanced pseudo-label sampling from imbalanced text corpora under a labeling budget.

The pipeline: cluster the unlabeled pool once, pick clusters with decayed
Thompson sampling, label small batches through a pluggable labeler, and use
validation improvement of an incrementally refined classifier as the bandit
reward. The accumulated labels train a final lightweight target classifier.
"""

__version__ = "0.1.0"
