"""Concentration of evaluative authority in AI benchmark ecosystems.

Submodules: ``metrics`` (authority allocation and concentration indices),
``graph`` (benchmark/author/institution network), ``abm`` (attention
simulation), ``sweep`` (phase diagrams), ``analytics`` (indicators and PCA),
``ingest`` (snapshot loading) and ``cli``.
"""

__version__ = "0.1.0"
