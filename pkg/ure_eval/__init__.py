"""Recall evaluation toolkit for debiasing recommendation.

Gold-standard Recall@K on fully-exposed data, traditional Recall@K̄ on
randomly-exposed data, and the unbiased recall estimator (URE), plus exact
oracles and the correlation experiments built on them.
"""

__version__ = "0.3.0"
