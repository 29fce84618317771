"""Intrinsic image decomposition toolkit.

Decomposes photographs into reflectance and shading layers using a
per-pixel learned predictor plus edge-aware reflectance filtering, and
evaluates reflectance predictions against sparse pairwise human
judgments.
"""

__version__ = "0.1.0"
